//! Hard example mining and class-frequency rebalancing.

use std::cmp::Ordering;

use super::similarity::{dot, l2_norm};
use crate::error::{Error, Result};

/// A candidate view identified by its object and view ids.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub values: &'a [f64],
    pub object_id: u32,
    pub view_id: u32,
}

/// Indices into the candidate lists chosen by [`mine_hard`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mined {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

fn cosine(a: &[f64], na: f64, b: &[f64]) -> f64 {
    let nb = l2_norm(b);
    if na > 0.0 && nb > 0.0 {
        dot(a, b) / (na * nb)
    } else {
        0.0
    }
}

fn ranked(anchor: &[f64], cands: &[Candidate<'_>], hardest_high: bool, keep: usize) -> Vec<usize> {
    let na = l2_norm(anchor);
    let sims: Vec<f64> = cands.iter().map(|c| cosine(anchor, na, c.values)).collect();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&i, &j| {
        let by_sim = if hardest_high {
            sims[j].partial_cmp(&sims[i])
        } else {
            sims[i].partial_cmp(&sims[j])
        }
        .unwrap_or(Ordering::Equal);
        by_sim.then_with(|| {
            (cands[i].object_id, cands[i].view_id).cmp(&(cands[j].object_id, cands[j].view_id))
        })
    });
    order.truncate(keep);
    order
}

/// Keeps the `p_h` least similar positives and the `n_h` most similar
/// negatives, by cosine similarity to the anchor.
pub fn mine_hard(
    anchor: &[f64],
    positives: &[Candidate<'_>],
    negatives: &[Candidate<'_>],
    p_h: usize,
    n_h: usize,
) -> Mined {
    Mined {
        positives: ranked(anchor, positives, false, p_h),
        negatives: ranked(anchor, negatives, true, n_h),
    }
}

/// Inverse-square-root repeat factor `max(1, sqrt(t / f))`.
pub fn repeat_factor(class_freq: f64, t: f64) -> Result<f64> {
    if !(class_freq > 0.0) || class_freq > 1.0 {
        return Err(Error::domain(format!("class frequency {class_freq} outside (0, 1]")));
    }
    Ok((t / class_freq).sqrt().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cand(values: &[f64], object_id: u32, view_id: u32) -> Candidate<'_> {
        Candidate { values, object_id, view_id }
    }

    #[test]
    fn negatives_by_descending_similarity() {
        // cos with anchor (1,0) equals the first coordinate after normalisation.
        let a = [1.0, 0.0];
        let v5 = [0.9, 0.1];
        let v1 = [0.1, 0.9];
        let v3 = [0.5, 0.5];
        let negs = [cand(&v5, 0, 0), cand(&v1, 1, 0), cand(&v3, 2, 0)];
        let m = mine_hard(&a, &[], &negs, 32, 2);
        assert_eq!(m.negatives, vec![0, 2]);
    }

    #[test]
    fn positives_by_ascending_similarity() {
        let a = [1.0, 0.0];
        let near = [1.0, 0.05];
        let far = [0.2, 1.0];
        let pos = [cand(&near, 0, 0), cand(&far, 0, 1)];
        let m = mine_hard(&a, &pos, &[], 1, 128);
        assert_eq!(m.positives, vec![1]);
        assert!(m.negatives.is_empty());
    }

    #[test]
    fn truncation_and_sole_positive() {
        let a = [1.0, 0.0];
        let p = [1.0, 0.0];
        let m = mine_hard(&a, &[cand(&p, 3, 0)], &[], 32, 128);
        assert_eq!(m.positives, vec![0]);
    }

    #[test]
    fn ties_break_by_ids() {
        let a = [1.0, 0.0];
        let v = [0.0, 1.0];
        let negs = [cand(&v, 5, 1), cand(&v, 2, 9), cand(&v, 5, 0)];
        let m = mine_hard(&a, &[], &negs, 0, 3);
        assert_eq!(m.negatives, vec![1, 2, 0]);
    }

    #[test]
    fn repeat_factor_cases() {
        assert_eq!(repeat_factor(0.1, 0.1).unwrap(), 1.0);
        assert!((repeat_factor(0.025, 0.1).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(repeat_factor(0.4, 0.1).unwrap(), 1.0);
        assert!(repeat_factor(0.0, 0.1).is_err());
        assert!(repeat_factor(-0.5, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn repeat_factor_non_increasing(f1 in 1e-4f64..1.0, f2 in 1e-4f64..1.0) {
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            prop_assert!(repeat_factor(lo, 0.1).unwrap() >= repeat_factor(hi, 0.1).unwrap());
            if lo >= 0.1 {
                prop_assert_eq!(repeat_factor(lo, 0.1).unwrap(), 1.0);
            }
        }
    }
}
