//! Noise-contrastive loss over cosine similarities:
//!
//! `L = -sum_p log( e^{D(a,p)} / (e^{D(a,p)} + C sum_n e^{D(a,n)}) )`
//!
//! with `D` the temperature-scaled cosine. Each term is evaluated as
//! `softplus(ln C + logsumexp_n D(a,n) - D(a,p))`, natural log.

use super::similarity::{dot, l2_norm};
use crate::error::{Error, Result};

/// Loss value with gradients for the raw (unnormalised) input vectors.
#[derive(Debug, Clone)]
pub struct NceGrad {
    pub loss: f64,
    pub anchor: Vec<f64>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn nce_loss(
    anchor: &[f64],
    positives: &[&[f64]],
    negatives: &[&[f64]],
    c: f64,
    tau: f64,
) -> Result<f64> {
    Ok(evaluate(anchor, positives, negatives, c, tau, false)?.loss)
}

pub fn nce_loss_with_grad(
    anchor: &[f64],
    positives: &[&[f64]],
    negatives: &[&[f64]],
    c: f64,
    tau: f64,
) -> Result<NceGrad> {
    evaluate(anchor, positives, negatives, c, tau, true)
}

struct Unit {
    dir: Vec<f64>,
    norm: f64,
}

fn unit(v: &[f64], dim: usize) -> Result<Unit> {
    if v.len() != dim {
        return Err(Error::domain(format!("dimension mismatch {} vs {dim}", v.len())));
    }
    let norm = l2_norm(v);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::domain(format!("embedding with norm {norm}")));
    }
    Ok(Unit {
        dir: v.iter().map(|x| x / norm).collect(),
        norm,
    })
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn evaluate(
    anchor: &[f64],
    positives: &[&[f64]],
    negatives: &[&[f64]],
    c: f64,
    tau: f64,
    want_grad: bool,
) -> Result<NceGrad> {
    if positives.is_empty() {
        return Err(Error::domain("contrastive loss needs at least one positive"));
    }
    if !(tau > 0.0) || !(c > 0.0) {
        return Err(Error::domain("temperature and negative weight must be positive"));
    }
    let dim = anchor.len();
    let a = unit(anchor, dim)?;
    let pos: Vec<Unit> = positives.iter().map(|p| unit(p, dim)).collect::<Result<_>>()?;
    let neg: Vec<Unit> = negatives.iter().map(|n| unit(n, dim)).collect::<Result<_>>()?;

    let mut out = NceGrad {
        loss: 0.0,
        anchor: vec![0.0; dim],
        positives: vec![vec![0.0; dim]; if want_grad { pos.len() } else { 0 }],
        negatives: vec![vec![0.0; dim]; if want_grad { neg.len() } else { 0 }],
    };
    if neg.is_empty() {
        return Ok(out);
    }

    let cos_p: Vec<f64> = pos.iter().map(|p| dot(&a.dir, &p.dir)).collect();
    let cos_n: Vec<f64> = neg.iter().map(|n| dot(&a.dir, &n.dir)).collect();
    let d_n: Vec<f64> = cos_n.iter().map(|v| v / tau).collect();
    let m = d_n.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_shifted: f64 = d_n.iter().map(|d| (d - m).exp()).sum();
    let lse = m + sum_shifted.ln();

    // dL/dD for each candidate.
    let mut g_p = Vec::with_capacity(pos.len());
    let mut total_sigma = 0.0;
    for &cp in &cos_p {
        let z = c.ln() + lse - cp / tau;
        out.loss += softplus(z);
        let s = sigmoid(z);
        g_p.push(-s);
        total_sigma += s;
    }
    if !want_grad {
        return Ok(out);
    }
    let g_n: Vec<f64> = d_n
        .iter()
        .map(|d| total_sigma * (d - m).exp() / sum_shifted)
        .collect();

    // dD_j/da = (b_j - cos_j a) / (tau |a|);  dD_j/db_j = (a - cos_j b_j) / (tau |b_j|)
    let mut accumulate = |g: f64, cos: f64, b: &Unit, grad_b: &mut Vec<f64>| {
        let ka = g / (tau * a.norm);
        let kb = g / (tau * b.norm);
        for i in 0..dim {
            out.anchor[i] += ka * (b.dir[i] - cos * a.dir[i]);
            grad_b[i] = kb * (a.dir[i] - cos * b.dir[i]);
        }
    };
    for (j, p) in pos.iter().enumerate() {
        accumulate(g_p[j], cos_p[j], p, &mut out.positives[j]);
    }
    for (j, n) in neg.iter().enumerate() {
        accumulate(g_n[j], cos_n[j], n, &mut out.negatives[j]);
    }
    Ok(out)
}
