//! Training objectives with analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance smoothing inside the PLCC loss.
pub const PLCC_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct SupConInputs<'a> {
    /// One embedding per batch position. Similarities are cosine, so rows
    /// need not be exactly unit-norm (they are, coming from the encoder).
    pub embeddings: &'a [Vec<f64>],
    pub labels: &'a [u32],
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupConOutput {
    pub loss: f64,
    /// d loss / d embedding, one row per batch position.
    pub grad: Vec<Vec<f64>>,
    /// Anchors whose positive set was empty (they contribute zero).
    pub empty_anchors: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_supcon(inp: &SupConInputs) -> Result<()> {
    if !(inp.temperature > 0.0) {
        return Err(Error::invalid(format!("temperature {} must be positive", inp.temperature)));
    }
    let n = inp.embeddings.len();
    if n < 2 {
        return Err(Error::invalid("supervised contrastive loss needs a batch of at least 2"));
    }
    if inp.labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} embeddings", inp.labels.len())));
    }
    let d = inp.embeddings[0].len();
    if inp.embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::invalid("embeddings differ in dimension"));
    }
    Ok(())
}

fn unit_rows(embeddings: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut units = Vec::with_capacity(embeddings.len());
    let mut norms = Vec::with_capacity(embeddings.len());
    for e in embeddings {
        let n = dot(e, e).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("embedding with zero or non-finite norm"));
        }
        units.push(e.iter().map(|v| v / n).collect());
        norms.push(n);
    }
    Ok((units, norms))
}

/// Row-wise log-softmax over `k != i` of the scaled cosine similarities.
/// Entry `[i][i]` is `-inf`.
pub fn supcon_log_probs(inp: &SupConInputs) -> Result<Vec<Vec<f64>>> {
    check_supcon(inp)?;
    let (units, _) = unit_rows(inp.embeddings)?;
    Ok(log_probs(&units, inp.temperature))
}

fn log_probs(units: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    let n = units.len();
    (0..n)
        .map(|i| {
            let s: Vec<f64> = (0..n).map(|k| dot(&units[i], &units[k]) / tau).collect();
            let m = (0..n).filter(|&k| k != i).map(|k| s[k]).fold(f64::NEG_INFINITY, f64::max);
            let lse = m + (0..n).filter(|&k| k != i).map(|k| (s[k] - m).exp()).sum::<f64>().ln();
            (0..n)
                .map(|k| if k == i { f64::NEG_INFINITY } else { s[k] - lse })
                .collect()
        })
        .collect()
}

/// Supervised contrastive loss, summed over anchors:
///
/// `L = sum_i -1/|P(i)| sum_{j in P(i)} log softmax_{k != i}(sim(e_i, e_k) / tau)[j]`
///
/// with `P(i)` the other batch members sharing anchor `i`'s label. Anchors
/// with an empty `P(i)` contribute zero.
pub fn supcon_loss(inp: &SupConInputs) -> Result<SupConOutput> {
    check_supcon(inp)?;
    let n = inp.embeddings.len();
    let tau = inp.temperature;
    let (units, norms) = unit_rows(inp.embeddings)?;
    let lp = log_probs(&units, tau);

    // coefficient of each similarity s_ik in the loss
    let mut coef = vec![vec![0.0; n]; n];
    let mut loss = 0.0;
    let mut empty = 0;
    for i in 0..n {
        let pos: Vec<usize> = (0..n).filter(|&j| j != i && inp.labels[j] == inp.labels[i]).collect();
        if pos.is_empty() {
            empty += 1;
            continue;
        }
        let inv = 1.0 / pos.len() as f64;
        loss -= inv * pos.iter().map(|&j| lp[i][j]).sum::<f64>();
        for k in (0..n).filter(|&k| k != i) {
            coef[i][k] += lp[i][k].exp();
        }
        for &j in &pos {
            coef[i][j] -= inv;
        }
    }

    let d = units[0].len();
    let mut g_unit = vec![vec![0.0; d]; n];
    for i in 0..n {
        for k in 0..n {
            let c = coef[i][k] / tau;
            if c == 0.0 {
                continue;
            }
            for t in 0..d {
                g_unit[i][t] += c * units[k][t];
                g_unit[k][t] += c * units[i][t];
            }
        }
    }
    let grad = (0..n)
        .map(|i| {
            let proj = dot(&units[i], &g_unit[i]);
            (0..d)
                .map(|t| (g_unit[i][t] - units[i][t] * proj) / norms[i])
                .collect()
        })
        .collect();
    Ok(SupConOutput {
        loss,
        grad,
        empty_anchors: empty,
    })
}

/// Loss value with its gradient w.r.t. the predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionParams {
    pub huber_delta: f64,
    pub lambda_plcc: f64,
}

impl Default for RegressionParams {
    fn default() -> Self {
        Self {
            huber_delta: 1.0,
            lambda_plcc: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RegressionInputs<'a> {
    pub predictions: &'a [f64],
    /// Targets in normalised MOS space.
    pub targets: &'a [f64],
    pub huber_delta: f64,
    pub lambda_plcc: f64,
}

impl<'a> RegressionInputs<'a> {
    pub fn new(predictions: &'a [f64], targets: &'a [f64], params: RegressionParams) -> Self {
        Self {
            predictions,
            targets,
            huber_delta: params.huber_delta,
            lambda_plcc: params.lambda_plcc,
        }
    }

    fn check(&self) -> Result<()> {
        if self.predictions.len() != self.targets.len() {
            return Err(Error::invalid(format!(
                "{} predictions for {} targets",
                self.predictions.len(),
                self.targets.len()
            )));
        }
        if self.predictions.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        Ok(())
    }
}

pub fn huber(r: f64, delta: f64) -> f64 {
    if r.abs() <= delta {
        0.5 * r * r
    } else {
        delta * (r.abs() - 0.5 * delta)
    }
}

/// Mean Huber penalty of the residuals.
pub fn huber_loss(inp: &RegressionInputs) -> Result<LossGrad> {
    inp.check()?;
    let delta = inp.huber_delta;
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("huber delta {delta} must be positive")));
    }
    let n = inp.predictions.len() as f64;
    let mut value = 0.0;
    let grad = inp
        .predictions
        .iter()
        .zip(inp.targets)
        .map(|(p, t)| {
            let r = p - t;
            value += huber(r, delta);
            r.clamp(-delta, delta) / n
        })
        .collect();
    Ok(LossGrad {
        value: value / n,
        grad,
    })
}

/// `1 - PLCC` with both variances smoothed by [`PLCC_EPS`], so constant
/// batches give a finite loss near 1 instead of an error.
pub fn plcc_loss(predictions: &[f64], targets: &[f64]) -> Result<LossGrad> {
    if predictions.len() != targets.len() {
        return Err(Error::invalid("prediction and target lengths differ"));
    }
    if predictions.len() < 2 {
        return Err(Error::invalid("PLCC loss needs at least two samples"));
    }
    let n = predictions.len() as f64;
    let mp = predictions.iter().sum::<f64>() / n;
    let mt = targets.iter().sum::<f64>() / n;
    let pc: Vec<f64> = predictions.iter().map(|p| p - mp).collect();
    let tc: Vec<f64> = targets.iter().map(|t| t - mt).collect();
    let cov = dot(&pc, &tc) / n;
    let sp = dot(&pc, &pc) / n + PLCC_EPS;
    let st = dot(&tc, &tc) / n + PLCC_EPS;
    let denom = (sp * st).sqrt();
    let r = cov / denom;
    // d r / d p_k = (tc_k - cov * pc_k / sp) / (n * denom); centring terms
    // vanish because the centred vectors sum to zero
    let grad = pc
        .iter()
        .zip(&tc)
        .map(|(p, t)| -(t - cov * p / sp) / (n * denom))
        .collect();
    Ok(LossGrad {
        value: 1.0 - r,
        grad,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MosLoss {
    pub total: LossGrad,
    pub huber: f64,
    pub plcc: f64,
}

/// `huber + lambda_plcc * plcc_loss`.
pub fn mos_loss(inp: &RegressionInputs) -> Result<MosLoss> {
    if !(inp.lambda_plcc >= 0.0) {
        return Err(Error::invalid("lambda_plcc must be non-negative"));
    }
    let h = huber_loss(inp)?;
    let p = plcc_loss(inp.predictions, inp.targets)?;
    let lambda = inp.lambda_plcc;
    let grad = h
        .grad
        .iter()
        .zip(&p.grad)
        .map(|(a, b)| a + lambda * b)
        .collect();
    Ok(MosLoss {
        total: LossGrad {
            value: h.value + lambda * p.value,
            grad,
        },
        huber: h.value,
        plcc: p.value,
    })
}

/// Mean softmax cross-entropy over rows of logits; gradient w.r.t. logits.
pub fn cross_entropy(logits: &[Vec<f64>], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::invalid("cross entropy needs one label per non-empty logit row"));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &y) in logits.iter().zip(labels) {
        if y >= row.len() {
            return Err(Error::invalid(format!("label {y} outside {} classes", row.len())));
        }
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let lse = m + z.ln();
        loss += lse - row[y];
        let mut g: Vec<f64> = row.iter().map(|v| (v - lse).exp() / n).collect();
        g[y] -= 1.0 / n;
        grads.push(g);
    }
    Ok((loss / n, grads))
}
