use rand::Rng;

use super::{gelu, gelu_grad, join, Module, Param};

/// Channel-major feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor buffer size");
        Self { c, h, w, data }
    }

    fn padded(&self) -> Vec<f64> {
        let (hp, wp) = (self.h + 2, self.w + 2);
        let mut out = vec![0.0; self.c * hp * wp];
        for ch in 0..self.c {
            for y in 0..self.h {
                let src = (ch * self.h + y) * self.w;
                let dst = (ch * hp + y + 1) * wp + 1;
                out[dst..dst + self.w].copy_from_slice(&self.data[src..src + self.w]);
            }
        }
        out
    }
}

/// 3x3 convolution with zero padding 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::fan_in(&[out_ch, in_ch, 3, 3], in_ch * 9, std::f64::consts::SQRT_2, rng),
            bias: Param::zeros(&[out_ch]),
            in_ch,
            out_ch,
            stride,
        }
    }

    pub fn out_size(&self, n: usize) -> usize {
        (n - 1) / self.stride + 1
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        debug_assert_eq!(x.c, self.in_ch);
        let (oh, ow) = (self.out_size(x.h), self.out_size(x.w));
        let wp = x.w + 2;
        let plane_p = (x.h + 2) * wp;
        let xp = x.padded();
        let s = self.stride;
        let mut out = Tensor3::zeros(self.out_ch, oh, ow);
        for oc in 0..self.out_ch {
            let dst = &mut out.data[oc * oh * ow..(oc + 1) * oh * ow];
            dst.iter_mut().for_each(|v| *v = self.bias.value[oc]);
            for ic in 0..self.in_ch {
                let src = &xp[ic * plane_p..(ic + 1) * plane_p];
                let wbase = (oc * self.in_ch + ic) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wv = self.weight.value[wbase + ky * 3 + kx];
                        for oy in 0..oh {
                            let row = &src[(oy * s + ky) * wp + kx..];
                            let drow = &mut dst[oy * ow..(oy + 1) * ow];
                            for (ox, d) in drow.iter_mut().enumerate() {
                                *d += wv * row[ox * s];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients; returns the input gradient when
    /// `need_input_grad` is set.
    pub fn backward(&mut self, x: &Tensor3, grad_out: &Tensor3, need_input_grad: bool) -> Option<Tensor3> {
        let (oh, ow) = (grad_out.h, grad_out.w);
        let wp = x.w + 2;
        let plane_p = (x.h + 2) * wp;
        let xp = x.padded();
        let s = self.stride;
        let mut gxp = if need_input_grad {
            vec![0.0; self.in_ch * plane_p]
        } else {
            Vec::new()
        };
        for oc in 0..self.out_ch {
            let g = &grad_out.data[oc * oh * ow..(oc + 1) * oh * ow];
            self.bias.grad[oc] += g.iter().sum::<f64>();
            for ic in 0..self.in_ch {
                let src = &xp[ic * plane_p..(ic + 1) * plane_p];
                let wbase = (oc * self.in_ch + ic) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let row = &src[(oy * s + ky) * wp + kx..];
                            let grow = &g[oy * ow..(oy + 1) * ow];
                            for (ox, gv) in grow.iter().enumerate() {
                                acc += gv * row[ox * s];
                            }
                        }
                        self.weight.grad[wbase + ky * 3 + kx] += acc;
                        if need_input_grad {
                            let wv = self.weight.value[wbase + ky * 3 + kx];
                            let dst = &mut gxp[ic * plane_p..(ic + 1) * plane_p];
                            for oy in 0..oh {
                                let base = (oy * s + ky) * wp + kx;
                                let grow = &g[oy * ow..(oy + 1) * ow];
                                for (ox, gv) in grow.iter().enumerate() {
                                    dst[base + ox * s] += wv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
        if !need_input_grad {
            return None;
        }
        let mut gx = Tensor3::zeros(x.c, x.h, x.w);
        for ch in 0..x.c {
            for y in 0..x.h {
                let src = (ch * (x.h + 2) + y + 1) * wp + 1;
                let dst = (ch * x.h + y) * x.w;
                gx.data[dst..dst + x.w].copy_from_slice(&gxp[src..src + x.w]);
            }
        }
        Some(gx)
    }
}

impl Module for Conv2d {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Stack of stride-2 conv + GELU blocks followed by global average pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvEncoder {
    pub blocks: Vec<Conv2d>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    /// Input of every block (the image first).
    inputs: Vec<Tensor3>,
    /// Pre-activation output of every block.
    pre: Vec<Tensor3>,
}

impl ConvEncoder {
    pub fn new(in_ch: usize, widths: &[usize], rng: &mut impl Rng) -> Self {
        let mut blocks = Vec::with_capacity(widths.len());
        let mut c = in_ch;
        for &w in widths {
            blocks.push(Conv2d::new(c, w, 2, rng));
            c = w;
        }
        Self { blocks }
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.out_ch)
    }

    fn pool(t: &Tensor3) -> Vec<f64> {
        let plane = t.h * t.w;
        t.data
            .chunks_exact(plane)
            .map(|c| c.iter().sum::<f64>() / plane as f64)
            .collect()
    }

    pub fn forward(&self, x: &Tensor3) -> Vec<f64> {
        let mut cur = x.clone();
        for b in &self.blocks {
            let mut z = b.forward(&cur);
            z.data.iter_mut().for_each(|v| *v = gelu(*v));
            cur = z;
        }
        Self::pool(&cur)
    }

    pub fn forward_cached(&self, x: &Tensor3) -> (Vec<f64>, EncoderCache) {
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut pre = Vec::with_capacity(self.blocks.len());
        let mut cur = x.clone();
        for b in &self.blocks {
            let z = b.forward(&cur);
            let mut a = z.clone();
            a.data.iter_mut().for_each(|v| *v = gelu(*v));
            inputs.push(cur);
            pre.push(z);
            cur = a;
        }
        (Self::pool(&cur), EncoderCache { inputs, pre })
    }

    pub fn backward(&mut self, cache: &EncoderCache, grad_pooled: &[f64], need_input_grad: bool) -> Option<Tensor3> {
        let last = cache.pre.last().expect("encoder has blocks");
        let plane = last.h * last.w;
        let mut g = Tensor3::zeros(last.c, last.h, last.w);
        for (ch, gp) in grad_pooled.iter().enumerate() {
            let v = gp / plane as f64;
            g.data[ch * plane..(ch + 1) * plane].iter_mut().for_each(|d| *d = v);
        }
        let n = self.blocks.len();
        for i in (0..n).rev() {
            for (gv, z) in g.data.iter_mut().zip(&cache.pre[i].data) {
                *gv *= gelu_grad(*z);
            }
            let need = i > 0 || need_input_grad;
            match self.blocks[i].backward(&cache.inputs[i], &g, need) {
                Some(gx) => g = gx,
                None => return None,
            }
        }
        Some(g)
    }
}

impl Module for ConvEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("block{i}")), f);
        }
    }
}
