//! Greedy pairing of users by channel cosine similarity.

use alloc::vec;
use alloc::vec::Vec;

use crate::rates::{inner, norm_sqr, Clustering};
use crate::{CVector, Complex64, Error, Result};

/// `|h_a^H h_b| / (||h_a|| ||h_b||)`, in `[0, 1]`.
pub fn cosine_similarity(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "channel length",
            expected: a.len(),
            found: b.len(),
        });
    }
    let na = libm::sqrt(norm_sqr(a));
    let nb = libm::sqrt(norm_sqr(b));
    if !(na > 0.0) {
        return Err(Error::DegenerateChannel(0));
    }
    if !(nb > 0.0) {
        return Err(Error::DegenerateChannel(1));
    }
    Ok((inner(a, b).norm() / (na * nb)).min(1.0))
}

/// Symmetric pairwise similarities; the diagonal is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_channels(channels: &[CVector]) -> Result<Self> {
        let n = channels.len();
        if let Some(k) = channels.iter().position(|h| !(norm_sqr(h) > 0.0)) {
            return Err(Error::DegenerateChannel(k));
        }
        let mut values = vec![0.0; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let c = cosine_similarity(&channels[a], &channels[b])?;
                values[a * n + b] = c;
                values[b * n + a] = c;
            }
        }
        Ok(Self { n, values })
    }

    /// Builds from explicit values, symmetrizing from the upper triangle.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let c = f(a, b);
                values[a * n + b] = c;
                values[b * n + a] = c;
            }
        }
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }
}

/// Repeatedly moves the most similar unclustered pair into a new cluster.
/// With odd `K` the last user is a singleton. Ties go to the
/// lexicographically smallest `(a, b)`; clusters are indexed in extraction
/// order.
pub fn greedy_pair_clustering(similarity: &SimilarityMatrix) -> Clustering {
    let n = similarity.len();
    let mut unclustered = vec![true; n];
    let mut remaining = n;
    let mut clusters = Vec::with_capacity(n.div_ceil(2));
    while remaining >= 2 {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..n {
            if !unclustered[a] {
                continue;
            }
            for b in (a + 1)..n {
                if !unclustered[b] {
                    continue;
                }
                let c = similarity.get(a, b);
                if best.is_none_or(|(_, _, bc)| c > bc) {
                    best = Some((a, b, c));
                }
            }
        }
        let (a, b, _) = best.expect("at least two unclustered users");
        unclustered[a] = false;
        unclustered[b] = false;
        remaining -= 2;
        clusters.push(vec![a, b]);
    }
    if let Some(u) = unclustered.iter().position(|&x| x) {
        clusters.push(vec![u]);
    }
    Clustering::new(clusters, n).expect("greedy pairing yields a partition")
}

/// Similarity matrix followed by greedy pairing.
pub fn cluster_by_similarity(channels: &[CVector]) -> Result<Clustering> {
    Ok(greedy_pair_clustering(&SimilarityMatrix::from_channels(
        channels,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn similarity_examples() {
        let a = vec![c(1.0), c(0.0)];
        let b = vec![c(0.0), c(1.0)];
        let ab = vec![c(1.0), c(1.0)];
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&a, &b).unwrap(), 0.0);
        assert!(
            (cosine_similarity(&a, &ab).unwrap() - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15
        );
        assert!(matches!(
            cosine_similarity(&a, &[c(0.0), c(0.0)]),
            Err(Error::DegenerateChannel(_))
        ));
    }

    #[test]
    fn similarity_ignores_common_phase() {
        let a = vec![Complex64::new(0.3, -1.0), Complex64::new(2.0, 0.5)];
        let rot = Complex64::from_polar(1.0, 1.1);
        let b: Vec<Complex64> = a.iter().map(|x| x * rot * 3.0).collect();
        assert!((cosine_similarity(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_user_is_singleton() {
        let cl = greedy_pair_clustering(&SimilarityMatrix::from_fn(1, |_, _| 0.0));
        assert_eq!(cl.clusters(), &[vec![0]]);
    }

    #[test]
    fn four_users_two_strong_pairs() {
        // users 1..4 in the usual numbering are 0..3 here
        let s = SimilarityMatrix::from_fn(4, |a, b| match (a, b) {
            (0, 1) => 0.9,
            (2, 3) => 0.8,
            _ => 0.5,
        });
        let cl = greedy_pair_clustering(&s);
        assert_eq!(cl.clusters(), &[vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn odd_users_leave_singleton() {
        let s = SimilarityMatrix::from_fn(3, |a, b| if (a, b) == (0, 1) { 0.95 } else { 0.2 });
        let cl = greedy_pair_clustering(&s);
        assert_eq!(cl.clusters(), &[vec![0, 1], vec![2]]);
    }

    #[test]
    fn ties_take_smallest_pair() {
        let s = SimilarityMatrix::from_fn(4, |_, _| 0.7);
        let cl = greedy_pair_clustering(&s);
        assert_eq!(cl.clusters(), &[vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn zero_channel_rejected() {
        let h = vec![vec![c(1.0)], vec![c(0.0)]];
        assert!(matches!(
            SimilarityMatrix::from_channels(&h),
            Err(Error::DegenerateChannel(1))
        ));
    }
}
