//! Correlation metrics between predicted scores and MOS.
//!
//! Unlike the PLCC training loss these are strict: degenerate inputs are an
//! error, never a fabricated value.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ScorePair<'a> {
    pub predicted: &'a [f64],
    pub ground_truth: &'a [f64],
}

impl<'a> ScorePair<'a> {
    pub fn new(predicted: &'a [f64], ground_truth: &'a [f64]) -> Result<Self> {
        if predicted.len() != ground_truth.len() {
            return Err(Error::invalid(format!(
                "score vectors differ in length: {} vs {}",
                predicted.len(),
                ground_truth.len()
            )));
        }
        if predicted.len() < 2 {
            return Err(Error::invalid("correlation needs at least two samples"));
        }
        if predicted.iter().chain(ground_truth).any(|v| !v.is_finite()) {
            return Err(Error::invalid("scores must be finite"));
        }
        Ok(Self {
            predicted,
            ground_truth,
        })
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn plcc(p: ScorePair) -> Result<f64> {
    pearson(p.predicted, p.ground_truth)
}

/// 1-based ranks with ties assigned their average rank.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank ((i+1) + j) / 2
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

pub fn srcc(p: ScorePair) -> Result<f64> {
    pearson(&midranks(p.predicted), &midranks(p.ground_truth))
}

fn tie_pairs(sorted: impl Iterator<Item = f64>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<f64> = None;
    for v in sorted {
        if prev == Some(v) {
            run += 1;
        } else {
            total += run * (run + 1) / 2;
            run = 0;
        }
        prev = Some(v);
    }
    total + run * (run + 1) / 2
}

/// Merge sort that counts inversions (strictly decreasing pairs).
fn count_inversions(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid], &mut buf[..mid]);
    swaps += count_inversions(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall tau-b via Knight's O(n log n) algorithm.
pub fn krcc(p: ScorePair) -> Result<f64> {
    let n = p.len();
    let mut pairs: Vec<(f64, f64)> = p
        .predicted
        .iter()
        .copied()
        .zip(p.ground_truth.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let ties_x = tie_pairs(pairs.iter().map(|q| q.0));
    let mut joint = 0u64;
    let mut run = 0u64;
    for w in pairs.windows(2) {
        if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
            run += 1;
        } else {
            joint += run * (run + 1) / 2;
            run = 0;
        }
    }
    joint += run * (run + 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|q| q.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = count_inversions(&mut ys, &mut buf);
    let ties_y = tie_pairs(ys.iter().copied());

    let denom = ((n0 - ties_x) as f64) * ((n0 - ties_y) as f64);
    if denom == 0.0 {
        return Err(Error::Degenerate("all values tied".into()));
    }
    let numer = n0 as f64 - ties_x as f64 - ties_y as f64 + joint as f64 - 2.0 * swaps as f64;
    Ok((numer / denom.sqrt()).clamp(-1.0, 1.0))
}

/// Decrease from the standard protocol to the unseen-algorithm protocol.
pub fn drop(standard: f64, unseen: f64) -> f64 {
    standard - unseen
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlations {
    pub srcc: f64,
    pub plcc: f64,
    pub krcc: f64,
}

pub fn all(p: ScorePair) -> Result<Correlations> {
    Ok(Correlations {
        srcc: srcc(p)?,
        plcc: plcc(p)?,
        krcc: krcc(p)?,
    })
}
