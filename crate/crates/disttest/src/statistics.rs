//! The shared test statistic and collision counts.
//!
//! Every tester reduces its samples to four histograms over a common domain:
//! two halves from the tested distribution (`p0`, `p1`) and two halves from
//! the reference (`q0`, `q1`). The statistic per element is
//!
//! `|p0 - q0| + |p1 - q1| - |p0 - p1| - |q0 - q1|`
//!
//! summed over observed elements. Elements seen exactly once across all four
//! histograms contribute nothing, so the histogram is stored sparsely and
//! only collisions matter; [`collision_counts`] measures exactly how many
//! samples are involved in collisions, which the testers use to gate the
//! statistic's variance. Everything here is integer-exact.

use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;

use crate::rng::RngStream;

/// Which of the four sample sets a count belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Flagged samples from the tested distribution.
    P0,
    /// Unflagged samples from the tested distribution.
    P1,
    /// Flagged samples from the reference distribution.
    Q0,
    /// Unflagged samples from the reference distribution.
    Q1,
}

/// Sparse per-element counts for the four sample sets.
///
/// Elements with all four counts zero are never stored.
#[derive(Debug, Clone)]
pub struct FourWayHistogram<E> {
    counts: HashMap<E, [u64; 4]>,
}

impl<E: Eq + Hash> FourWayHistogram<E> {
    pub fn new() -> Self {
        FourWayHistogram {
            counts: HashMap::new(),
        }
    }

    pub fn add(&mut self, element: E, slot: Slot) {
        self.counts.entry(element).or_insert([0; 4])[slot as usize] += 1;
    }

    pub fn add_all(&mut self, elements: impl IntoIterator<Item = E>, slot: Slot) {
        for e in elements {
            self.add(e, slot);
        }
    }

    /// Number of distinct observed elements.
    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self, element: &E) -> [u64; 4] {
        self.counts.get(element).copied().unwrap_or([0; 4])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&E, &[u64; 4])> {
        self.counts.iter()
    }

    /// The test statistic summed over observed elements.
    ///
    /// Integer arithmetic throughout; the sum is order-independent, so the
    /// map's iteration order does not affect the result.
    pub fn z_statistic(&self) -> i64 {
        self.counts.values().map(|c| element_z(*c)).sum()
    }
}

impl<E: Eq + Hash> Default for FourWayHistogram<E> {
    fn default() -> Self {
        Self::new()
    }
}

fn element_z([p0, p1, q0, q1]: [u64; 4]) -> i64 {
    let cross = p0.abs_diff(q0) + p1.abs_diff(q1);
    let within = p0.abs_diff(p1) + q0.abs_diff(q1);
    cross as i64 - within as i64
}

/// Convenience free-function form of [`FourWayHistogram::z_statistic`].
pub fn z_statistic<E: Eq + Hash>(histogram: &FourWayHistogram<E>) -> i64 {
    histogram.z_statistic()
}

/// Splits samples into (flagged, unflagged) halves, each sample assigned
/// independently with probability 1/2. The union of the outputs is exactly
/// the input multiset.
pub fn flag_split<T>(samples: Vec<T>, rng: &mut RngStream) -> (Vec<T>, Vec<T>) {
    let mut flagged = Vec::with_capacity(samples.len() / 2 + 8);
    let mut unflagged = Vec::with_capacity(samples.len() / 2 + 8);
    for s in samples {
        if rng.random::<bool>() {
            flagged.push(s);
        } else {
            unflagged.push(s);
        }
    }
    (flagged, unflagged)
}

/// Collision tallies over a pair of sample multisets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollisionCounts {
    /// Samples (from either side) whose value occurs at least twice in the
    /// union. The paper's `N`.
    pub non_singletons: u64,
    /// p-side samples whose value occurs at least twice within the p-side
    /// alone. The paper's `N_p`.
    pub p_collisions: u64,
    /// q-side samples whose value occurs at least twice in the union. The
    /// paper's `N_q`.
    pub q_collisions: u64,
}

impl CollisionCounts {
    /// `N_p + N_q <= N <= N_p + 2 N_q` holds for every input.
    pub fn sandwich_holds(&self) -> bool {
        self.p_collisions + self.q_collisions <= self.non_singletons
            && self.non_singletons <= self.p_collisions + 2 * self.q_collisions
    }
}

/// Counts colliding samples. A sample collides when its value appears at
/// least twice in the relevant multiset (a sample does not collide with
/// itself, but two samples sharing a value collide with each other).
pub fn collision_counts<E: Eq + Hash>(p_side: &[E], q_side: &[E]) -> CollisionCounts {
    let mut p_mult: HashMap<&E, u64> = HashMap::with_capacity(p_side.len());
    for e in p_side {
        *p_mult.entry(e).or_insert(0) += 1;
    }
    let mut union_mult: HashMap<&E, u64> = HashMap::with_capacity(p_side.len() + q_side.len());
    for e in p_side.iter().chain(q_side) {
        *union_mult.entry(e).or_insert(0) += 1;
    }

    let p_collisions = p_side
        .iter()
        .filter(|e| p_mult[*e] >= 2)
        .count() as u64;
    let q_collisions = q_side
        .iter()
        .filter(|e| union_mult[*e] >= 2)
        .count() as u64;
    let non_singletons = p_side
        .iter()
        .chain(q_side)
        .filter(|e| union_mult[*e] >= 2)
        .count() as u64;

    CollisionCounts {
        non_singletons,
        p_collisions,
        q_collisions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(entries: &[(u32, [u64; 4])]) -> FourWayHistogram<u32> {
        let mut h = FourWayHistogram::new();
        for &(e, counts) in entries {
            for (slot, &c) in [Slot::P0, Slot::P1, Slot::Q0, Slot::Q1].iter().zip(&counts) {
                for _ in 0..c {
                    h.add(e, *slot);
                }
            }
        }
        h
    }

    #[test]
    fn identical_histograms_cancel() {
        let h = hist(&[(0, [3, 3, 3, 3]), (1, [5, 5, 5, 5])]);
        assert_eq!(h.z_statistic(), 0);
    }

    #[test]
    fn two_element_hand_example() {
        // Counts (p0, q0, p1, q1): element 0 -> (3,1,2,0), element 1 -> (0,2,1,3).
        // Each element contributes 2 + 2 - 1 - 1 = 2.
        let mut h = FourWayHistogram::new();
        for _ in 0..3 {
            h.add(0u32, Slot::P0);
        }
        h.add(0, Slot::Q0);
        for _ in 0..2 {
            h.add(0, Slot::P1);
        }
        for _ in 0..2 {
            h.add(1, Slot::Q0);
        }
        h.add(1, Slot::P1);
        for _ in 0..3 {
            h.add(1, Slot::Q1);
        }
        assert_eq!(h.z_statistic(), 4);
    }

    #[test]
    fn singleton_contributes_zero() {
        for slot in [Slot::P0, Slot::P1, Slot::Q0, Slot::Q1] {
            let mut h = FourWayHistogram::new();
            h.add(7u32, slot);
            assert_eq!(h.z_statistic(), 0);
        }
    }

    #[test]
    fn flag_split_empty() {
        let mut r = RngStream::from_seed(1);
        let (a, b) = flag_split(Vec::<u8>::new(), &mut r);
        assert!(a.is_empty() && b.is_empty());
    }

    #[test]
    fn flag_split_preserves_multiset() {
        let mut r = RngStream::from_seed(2);
        let input: Vec<u32> = (0..1000).map(|i| i % 37).collect();
        let (mut a, b) = flag_split(input.clone(), &mut r);
        a.extend(b);
        a.sort_unstable();
        let mut expect = input;
        expect.sort_unstable();
        assert_eq!(a, expect);
    }

    #[test]
    fn flag_split_half_within_four_sigma() {
        let mut r = RngStream::from_seed(3);
        let (flagged, _) = flag_split(vec![0u8; 10_000], &mut r);
        let dev = (flagged.len() as f64 - 5000.0).abs();
        assert!(dev <= 4.0 * 50.0, "flagged={}", flagged.len());
    }

    #[test]
    fn collisions_all_distinct() {
        let c = collision_counts(&[1u32, 2, 3], &[4, 5]);
        assert_eq!(
            c,
            CollisionCounts {
                non_singletons: 0,
                p_collisions: 0,
                q_collisions: 0
            }
        );
    }

    #[test]
    fn collisions_within_p_only() {
        let c = collision_counts(&[9u32, 9], &[]);
        assert_eq!(c.non_singletons, 2);
        assert_eq!(c.p_collisions, 2);
        assert_eq!(c.q_collisions, 0);
        assert!(c.sandwich_holds());
    }

    #[test]
    fn collision_across_sides() {
        let c = collision_counts(&[9u32], &[9]);
        assert_eq!(c.non_singletons, 2);
        assert_eq!(c.p_collisions, 0);
        assert_eq!(c.q_collisions, 1);
        assert!(c.sandwich_holds());
    }

    #[test]
    fn relabeling_leaves_statistics_unchanged() {
        let mut r = RngStream::from_seed(4);
        let p: Vec<u32> = (0..200).map(|_| r.random_range(0..20)).collect();
        let q: Vec<u32> = (0..200).map(|_| r.random_range(0..20)).collect();
        // Permute labels by multiplying into a coprime residue class.
        let relabel = |x: u32| (x * 7 + 3) % 20;
        let pr: Vec<u32> = p.iter().map(|&x| relabel(x)).collect();
        let qr: Vec<u32> = q.iter().map(|&x| relabel(x)).collect();
        assert_eq!(collision_counts(&p, &q), collision_counts(&pr, &qr));

        let mut h1 = FourWayHistogram::new();
        let mut h2 = FourWayHistogram::new();
        for (i, (&a, &b)) in p.iter().zip(&q).enumerate() {
            let slot_p = if i % 2 == 0 { Slot::P0 } else { Slot::P1 };
            let slot_q = if i % 3 == 0 { Slot::Q0 } else { Slot::Q1 };
            h1.add(a, slot_p);
            h1.add(b, slot_q);
            h2.add(relabel(a), slot_p);
            h2.add(relabel(b), slot_q);
        }
        assert_eq!(h1.z_statistic(), h2.z_statistic());
    }
}
