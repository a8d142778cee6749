//! Split distributions: subdividing each bin `i` into `a_i = 1 + f_i`
//! sub-bins, where `f_i` is the multiplicity of `i` in a generating multiset.
//!
//! Splitting reduces the l2 norm of a distribution while preserving all l1
//! distances, which is what lets the independence-style testers bound the
//! number of sample collisions. The testers never materialize a split
//! distribution; they route each sample to a uniformly random sub-bin via
//! [`SplitMap::split_sample`]. The explicit [`split_distribution`] form
//! exists for the verification oracles.

use rand::Rng;

use crate::error::Error;
use crate::prob::Categorical;
use crate::rng::RngStream;
use crate::Result;

/// Per-bin subdivision counts over a base domain of size `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMap {
    subdivisions: Vec<u32>,
}

impl SplitMap {
    /// The trivial map: every bin keeps a single sub-bin.
    pub fn identity(n: usize) -> Self {
        SplitMap {
            subdivisions: vec![1; n],
        }
    }

    /// Builds the map from a generating multiset of base indices:
    /// `a_i = 1 + (multiplicity of i)`.
    pub fn from_multiset(multiset: &[usize], n: usize) -> Result<Self> {
        let mut subdivisions = vec![1u32; n];
        for &i in multiset {
            if i >= n {
                return Err(Error::invalid(format!(
                    "multiset element {i} outside domain of size {n}"
                )));
            }
            subdivisions[i] += 1;
        }
        Ok(SplitMap { subdivisions })
    }

    pub fn base_domain_size(&self) -> usize {
        self.subdivisions.len()
    }

    /// Total number of sub-bins, `n + |S|`.
    pub fn split_domain_size(&self) -> usize {
        self.subdivisions.iter().map(|&a| a as usize).sum()
    }

    pub fn subdivisions(&self) -> &[u32] {
        &self.subdivisions
    }

    /// Routes a base-domain sample to `(i, j)` with `j` uniform on
    /// `{1, ..., a_i}`.
    pub fn split_sample(&self, i: usize, rng: &mut RngStream) -> FlattenedElement {
        let a = self.subdivisions[i];
        let sub = if a == 1 { 1 } else { rng.random_range(1..=a) };
        FlattenedElement { base: i, sub }
    }
}

/// An element `(i, j)` of a split domain, with `1 <= j <= a_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlattenedElement {
    pub base: usize,
    pub sub: u32,
}

/// The explicit split of a distribution: mass `p_i / a_i` on each sub-bin of
/// bin `i`, enumerated in `(base, sub)` order.
pub fn split_distribution(p: &Categorical, map: &SplitMap) -> Result<Categorical> {
    if p.n() != map.base_domain_size() {
        return Err(Error::invalid(format!(
            "split_distribution: domain {} vs map over {}",
            p.n(),
            map.base_domain_size()
        )));
    }
    let mut probs = Vec::with_capacity(map.split_domain_size());
    for (&pi, &a) in p.probs().iter().zip(map.subdivisions()) {
        let share = pi / a as f64;
        probs.extend(std::iter::repeat(share).take(a as usize));
    }
    Categorical::new(probs)
}

/// The explicit row-split of a joint distribution: mass `p(i, j) / a_i` on
/// `((i, k), j)`, with split rows enumerated in `(base, sub)` order. Columns
/// are untouched. Used by oracles; the testers split samples, not
/// distributions.
pub fn row_split_distribution(
    p: &crate::prob::JointDistribution,
    map: &SplitMap,
) -> Result<crate::prob::JointDistribution> {
    if p.n() != map.base_domain_size() {
        return Err(Error::invalid(format!(
            "row_split_distribution: {} rows vs map over {}",
            p.n(),
            map.base_domain_size()
        )));
    }
    let m = p.m();
    let mut probs = Vec::with_capacity(map.split_domain_size() * m);
    for i in 0..p.n() {
        let a = map.subdivisions()[i];
        for _ in 0..a {
            for j in 0..m {
                probs.push(p.prob(i, j) / a as f64);
            }
        }
    }
    crate::prob::JointDistribution::new(map.split_domain_size(), m, probs)
}

/// Routes a two-dimensional sample to its row- and column-split images,
/// drawing the two sub-bin indices independently (row first).
pub fn row_col_split_sample(
    sample: (usize, usize),
    row_map: &SplitMap,
    col_map: &SplitMap,
    rng: &mut RngStream,
) -> (FlattenedElement, FlattenedElement) {
    let row = row_map.split_sample(sample.0, rng);
    let col = col_map.split_sample(sample.1, rng);
    (row, col)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(stream: u64) -> RngStream {
        RngStream::new(0xf1a7, stream)
    }

    #[test]
    fn empty_multiset_gives_identity() {
        let map = SplitMap::from_multiset(&[], 3).unwrap();
        assert_eq!(map.subdivisions(), &[1, 1, 1]);
        assert_eq!(map, SplitMap::identity(3));
    }

    #[test]
    fn multiplicities_add_one() {
        // {0, 0, 2} over a domain of 3: a = (3, 1, 2).
        let map = SplitMap::from_multiset(&[0, 0, 2], 3).unwrap();
        assert_eq!(map.subdivisions(), &[3, 1, 2]);
        assert_eq!(map.split_domain_size(), 3 + 3);
    }

    #[test]
    fn repeated_single_element() {
        let map = SplitMap::from_multiset(&[0; 7], 1).unwrap();
        assert_eq!(map.subdivisions(), &[8]);
    }

    #[test]
    fn out_of_range_index_rejected() {
        assert!(SplitMap::from_multiset(&[3], 3).is_err());
    }

    #[test]
    fn unsplit_bin_always_sub_one() {
        let map = SplitMap::identity(4);
        let mut r = rng(0);
        for i in 0..4 {
            let e = map.split_sample(i, &mut r);
            assert_eq!(e, FlattenedElement { base: i, sub: 1 });
        }
    }

    #[test]
    fn sub_bins_uniform_within_four_sigma() {
        let map = SplitMap::from_multiset(&[1, 1, 1], 2).unwrap(); // a_1 = 4
        let mut r = rng(1);
        let reps = 10_000;
        let mut counts = [0u32; 4];
        for _ in 0..reps {
            let e = map.split_sample(1, &mut r);
            assert_eq!(e.base, 1);
            counts[(e.sub - 1) as usize] += 1;
        }
        let expect = reps as f64 / 4.0;
        let sigma = (reps as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() <= 4.0 * sigma, "counts={counts:?}");
        }
    }

    #[test]
    fn split_preserves_base_index() {
        let map = SplitMap::from_multiset(&[0, 1, 2, 2], 3).unwrap();
        let mut r = rng(2);
        for i in 0..3 {
            for _ in 0..100 {
                assert_eq!(map.split_sample(i, &mut r).base, i);
            }
        }
    }

    #[test]
    fn split_distribution_identity_map_is_noop() {
        let p = Categorical::new(vec![0.25, 0.75]).unwrap();
        let s = split_distribution(&p, &SplitMap::identity(2)).unwrap();
        assert_eq!(s.probs(), p.probs());
    }

    #[test]
    fn split_distribution_halves_split_bin() {
        let p = Categorical::new(vec![0.5, 0.5]).unwrap();
        let map = SplitMap::from_multiset(&[0], 2).unwrap(); // a = (2, 1)
        let s = split_distribution(&p, &map).unwrap();
        assert_eq!(s.probs(), &[0.25, 0.25, 0.5]);
    }

    #[test]
    fn split_distribution_preserves_mass() {
        let p = Categorical::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let map = SplitMap::from_multiset(&[0, 1, 1, 3, 3, 3], 4).unwrap();
        let s = split_distribution(&p, &map).unwrap();
        let total: f64 = s.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn row_col_split_identity_maps() {
        let fx = SplitMap::identity(3);
        let fy = SplitMap::identity(2);
        let mut r = rng(3);
        let (row, col) = row_col_split_sample((2, 1), &fx, &fy, &mut r);
        assert_eq!(row, FlattenedElement { base: 2, sub: 1 });
        assert_eq!(col, FlattenedElement { base: 1, sub: 1 });
    }

    #[test]
    fn row_split_uniform_when_only_rows_split() {
        let fx = SplitMap::from_multiset(&[0], 2).unwrap(); // a_0 = 2
        let fy = SplitMap::identity(2);
        let mut r = rng(4);
        let reps = 10_000;
        let mut first = 0u32;
        for _ in 0..reps {
            let (row, col) = row_col_split_sample((0, 1), &fx, &fy, &mut r);
            assert_eq!(col.sub, 1);
            if row.sub == 1 {
                first += 1;
            }
        }
        let sigma = (reps as f64 * 0.25).sqrt();
        assert!((first as f64 - reps as f64 / 2.0).abs() <= 4.0 * sigma);
    }

    #[test]
    fn row_and_col_choices_uncorrelated() {
        let fx = SplitMap::from_multiset(&[0], 1).unwrap(); // a = 2
        let fy = SplitMap::from_multiset(&[0], 1).unwrap();
        let mut r = rng(5);
        let reps = 10_000usize;
        let mut xs = Vec::with_capacity(reps);
        let mut ys = Vec::with_capacity(reps);
        for _ in 0..reps {
            let (row, col) = row_col_split_sample((0, 0), &fx, &fy, &mut r);
            xs.push((row.sub - 1) as f64);
            ys.push((col.sub - 1) as f64);
        }
        let mx = xs.iter().sum::<f64>() / reps as f64;
        let my = ys.iter().sum::<f64>() / reps as f64;
        let cov = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / (reps - 1) as f64;
        // Two independent Bernoulli(1/2)s: sd of sample covariance ~ 0.25/sqrt(reps).
        assert!(cov.abs() <= 4.0 * 0.25 / (reps as f64).sqrt(), "cov={cov}");
    }
}
