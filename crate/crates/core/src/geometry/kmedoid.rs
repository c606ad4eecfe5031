//! K-medoid clustering by PAM-style greedy swapping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Medoids {
    /// Item indices of the medoids, ascending.
    pub medoids: Vec<usize>,
    /// For every item, the position in `medoids` of its nearest medoid.
    pub assignment: Vec<usize>,
    /// Sum over items of the distance to the assigned medoid.
    pub cost: f64,
}

/// Clusters `items` around `k` medoids.
///
/// Starts from a seeded random choice of medoids, then repeatedly applies the
/// single medoid/non-medoid swap with the largest cost reduction until no
/// swap improves the total assigned distance.
pub fn kmedoid<T, F>(items: &[T], k: usize, dist: F, seed: u64) -> Result<Medoids>
where
    F: Fn(&T, &T) -> f64,
{
    let n = items.len();
    if k == 0 {
        return Err(Error::domain("k-medoid needs k >= 1"));
    }
    if k > n {
        return Err(Error::domain(format!("k-medoid with k = {k} > {n} items")));
    }
    let d = DistanceMatrix::new(items, &dist)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids = rand::seq::index::sample(&mut rng, n, k).into_vec();
    let mut is_medoid = vec![false; n];
    for &m in &medoids {
        is_medoid[m] = true;
    }

    loop {
        let near = nearest_two(&d, &medoids);
        let cost: f64 = near.iter().map(|r| r.d1).sum();
        let tol = 1e-12 * (1.0 + cost.abs());
        let mut best: Option<(f64, usize, usize)> = None;
        for (slot, _) in medoids.iter().enumerate() {
            for c in (0..n).filter(|&c| !is_medoid[c]) {
                let delta = swap_delta(&d, &near, slot, c);
                if delta < -tol && best.is_none_or(|(b, _, _)| delta < b) {
                    best = Some((delta, slot, c));
                }
            }
        }
        match best {
            Some((_, slot, c)) => {
                is_medoid[medoids[slot]] = false;
                is_medoid[c] = true;
                medoids[slot] = c;
            }
            None => break,
        }
    }

    medoids.sort_unstable();
    let near = nearest_two(&d, &medoids);
    Ok(Medoids {
        cost: near.iter().map(|r| r.d1).sum(),
        assignment: near.iter().map(|r| r.slot).collect(),
        medoids,
    })
}

/// Total distance from every item to its nearest medoid in `medoids`.
pub fn medoid_cost<T, F>(items: &[T], medoids: &[usize], dist: F) -> f64
where
    F: Fn(&T, &T) -> f64,
{
    items
        .iter()
        .map(|it| {
            medoids
                .iter()
                .map(|&m| dist(it, &items[m]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    fn new<T, F: Fn(&T, &T) -> f64>(items: &[T], dist: &F) -> Result<Self> {
        let n = items.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = dist(&items[i], &items[j]);
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::domain(format!(
                        "distance between items {i} and {j} is {v}"
                    )));
                }
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Ok(Self { n, data })
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

struct Nearest {
    slot: usize,
    d1: f64,
    d2: f64,
}

fn nearest_two(d: &DistanceMatrix, medoids: &[usize]) -> Vec<Nearest> {
    (0..d.n)
        .map(|j| {
            let mut r = Nearest {
                slot: 0,
                d1: f64::INFINITY,
                d2: f64::INFINITY,
            };
            for (slot, &m) in medoids.iter().enumerate() {
                let v = d.get(j, m);
                if v < r.d1 {
                    r.d2 = r.d1;
                    r.d1 = v;
                    r.slot = slot;
                } else if v < r.d2 {
                    r.d2 = v;
                }
            }
            r
        })
        .collect()
}

fn swap_delta(d: &DistanceMatrix, near: &[Nearest], slot: usize, candidate: usize) -> f64 {
    near.iter()
        .enumerate()
        .map(|(j, r)| {
            let dc = d.get(j, candidate);
            if r.slot == slot {
                dc.min(r.d2) - r.d1
            } else {
                dc.min(r.d1) - r.d1
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs(a: &f64, b: &f64) -> f64 {
        (a - b).abs()
    }

    #[test]
    fn rejects_bad_k() {
        assert!(kmedoid(&[1.0, 2.0], 3, abs, 0).is_err());
        assert!(kmedoid(&[1.0, 2.0], 0, abs, 0).is_err());
    }

    #[test]
    fn identical_items_cost_zero() {
        let r = kmedoid(&[4.0; 6], 1, abs, 3).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.medoids.len(), 1);
    }

    #[test]
    fn k_equals_n_each_item_is_a_medoid() {
        let items = [0.0, 3.0, 7.5, 10.0];
        let r = kmedoid(&items, 4, abs, 1).unwrap();
        assert_eq!(r.medoids, vec![0, 1, 2, 3]);
        assert_eq!(r.cost, 0.0);
    }

    /// Exhaustive medoid-pair enumeration on two separated groups.
    #[test]
    fn two_clusters_get_one_medoid_each() {
        let items = [0.0, 0.3, 0.5, 0.9, 1.1, 20.0, 20.2, 20.9, 21.4, 22.0];
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..items.len() {
            for b in a + 1..items.len() {
                let c = medoid_cost(&items, &[a, b], abs);
                if c < best.0 {
                    best = (c, a, b);
                }
            }
        }
        for seed in 0..10 {
            let r = kmedoid(&items, 2, abs, seed).unwrap();
            assert!(r.medoids[0] < 5 && r.medoids[1] >= 5);
            assert!((r.cost - best.0).abs() < 1e-12);
            assert_eq!(r.medoids, vec![best.1, best.2]);
        }
    }

    #[test]
    fn result_admits_no_improving_swap() {
        let items: Vec<[f64; 2]> = (0..12)
            .map(|i| {
                let t = i as f64 * 0.77;
                [t.sin() * (1.0 + i as f64 % 3.0), (2.0 * t).cos()]
            })
            .collect();
        let euclid = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        for seed in 0..5 {
            let r = kmedoid(&items, 3, euclid, seed).unwrap();
            assert!((medoid_cost(&items, &r.medoids, euclid) - r.cost).abs() < 1e-12);
            for slot in 0..3 {
                for c in (0..items.len()).filter(|c| !r.medoids.contains(c)) {
                    let mut m = r.medoids.clone();
                    m[slot] = c;
                    assert!(medoid_cost(&items, &m, euclid) >= r.cost - 1e-12);
                }
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let items: Vec<f64> = (0..40).map(|i| ((i * 37) % 17) as f64).collect();
        assert_eq!(
            kmedoid(&items, 4, abs, 11).unwrap(),
            kmedoid(&items, 4, abs, 11).unwrap()
        );
    }
}
