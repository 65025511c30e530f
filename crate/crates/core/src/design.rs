//! Complete randomization of clusters to adoption times.
//!
//! Assignments are uniform over all partitions of the clusters into arms of
//! the designed sizes. Sampling uses a Fisher–Yates shuffle cut into
//! consecutive blocks in adoption-time order; enumeration walks the
//! arrangements of the arm-label multiset in lexicographic order.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AdoptionTime, Dataset, Frame};
use crate::error::{Error, Result};
use crate::oracle::PotentialOutcomeTable;

/// Default upper bound on the number of enumerated assignments.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    periods: usize,
    /// `I(a)` in block order `1, …, J, ∞`.
    arm_sizes: Vec<usize>,
}

impl DesignSpec {
    pub fn new(periods: usize, arm_sizes: Vec<usize>) -> Result<Self> {
        if periods == 0 {
            return Err(Error::InvalidDesign(
                "at least one period is required".into(),
            ));
        }
        if arm_sizes.len() != periods + 1 {
            return Err(Error::InvalidDesign(format!(
                "{} arm sizes for {} adoption times",
                arm_sizes.len(),
                periods + 1
            )));
        }
        if let Some(a) = arm_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidDesign(format!(
                "arm {} has no clusters",
                AdoptionTime::from_arm(a, periods)
            )));
        }
        Ok(Self { periods, arm_sizes })
    }

    /// Integer arm sizes from fractions by the largest-remainder rule.
    /// Ties go to the earlier adoption time.
    pub fn from_fractions(n_clusters: usize, periods: usize, fractions: &[f64]) -> Result<Self> {
        if fractions.len() != periods + 1 || fractions.iter().any(|q| !(*q > 0.0)) {
            return Err(Error::InvalidDesign(
                "one positive fraction per adoption time is required".into(),
            ));
        }
        let total: f64 = fractions.iter().sum();
        let quotas: Vec<f64> = fractions
            .iter()
            .map(|q| q / total * n_clusters as f64)
            .collect();
        let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let missing = n_clusters - sizes.iter().sum::<usize>();
        for &a in order.iter().take(missing) {
            sizes[a] += 1;
        }
        Self::new(periods, sizes)
    }

    /// Arm sizes realized by an observed dataset.
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        Self::new(d.periods(), d.arm_counts())
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn n_clusters(&self) -> usize {
        self.arm_sizes.iter().sum()
    }

    pub fn arm_sizes(&self) -> &[usize] {
        &self.arm_sizes
    }

    pub fn arm_size(&self, a: AdoptionTime) -> usize {
        self.arm_sizes[a.arm(self.periods)]
    }

    /// Number of distinct assignments `I! / Π_a I(a)!`, saturating at `u128::MAX`.
    pub fn support_size(&self) -> u128 {
        // product of binomials C(remaining, I(a))
        let mut count: u128 = 1;
        let mut remaining = self.n_clusters() as u128;
        for &s in &self.arm_sizes {
            let mut binom: u128 = 1;
            for t in 0..s as u128 {
                binom = match binom.checked_mul(remaining - t) {
                    Some(v) => v / (t + 1),
                    None => return u128::MAX,
                };
            }
            count = match count.checked_mul(binom) {
                Some(v) => v,
                None => return u128::MAX,
            };
            remaining -= s as u128;
        }
        count
    }
}

/// Adoption time of every cluster.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    adoption: Vec<AdoptionTime>,
}

impl Assignment {
    pub fn new(adoption: Vec<AdoptionTime>) -> Self {
        Self { adoption }
    }

    pub fn adoption(&self) -> &[AdoptionTime] {
        &self.adoption
    }

    /// `G_i(a)` for every cluster.
    pub fn indicators(&self, a: AdoptionTime) -> Vec<bool> {
        self.adoption.iter().map(|&x| x == a).collect()
    }

    pub fn matches(&self, spec: &DesignSpec) -> bool {
        let mut counts = vec![0; spec.periods + 1];
        for a in &self.adoption {
            if !a.is_valid(spec.periods) {
                return false;
            }
            counts[a.arm(spec.periods)] += 1;
        }
        counts == spec.arm_sizes
    }

    /// Audit CSV with columns `cluster_id, adoption_time`.
    pub fn write_csv<W: Write>(&self, frame: &Frame, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cluster_id", "adoption_time"])?;
        for (cl, a) in frame.clusters.iter().zip(&self.adoption) {
            w.write_record([cl.id.as_str(), &a.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Generator for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sample_assignment(spec: &DesignSpec, seed: u64) -> Assignment {
    sample_assignment_with(spec, &mut stream_rng(seed, 0))
}

pub fn sample_assignment_with<R: rand::Rng + ?Sized>(spec: &DesignSpec, rng: &mut R) -> Assignment {
    let mut order: Vec<usize> = (0..spec.n_clusters()).collect();
    order.shuffle(rng);
    let mut adoption = vec![AdoptionTime::Never; order.len()];
    let mut pos = 0;
    for (arm, &size) in spec.arm_sizes.iter().enumerate() {
        for &i in &order[pos..pos + size] {
            adoption[i] = AdoptionTime::from_arm(arm, spec.periods);
        }
        pos += size;
    }
    Assignment { adoption }
}

/// Every distinct assignment exactly once, in lexicographic order of the
/// per-cluster arm labels.
pub fn enumerate_assignments(spec: &DesignSpec, cap: u64) -> Result<Enumeration> {
    let count = spec.support_size();
    if count > cap as u128 {
        return Err(Error::EnumerationTooLarge {
            count: if count == u128::MAX {
                "more than 2^128".into()
            } else {
                count.to_string()
            },
            cap,
        });
    }
    let labels = spec
        .arm_sizes
        .iter()
        .enumerate()
        .flat_map(|(arm, &s)| std::iter::repeat(arm).take(s))
        .collect();
    Ok(Enumeration {
        periods: spec.periods,
        next: Some(labels),
        remaining: count as usize,
    })
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    periods: usize,
    next: Option<Vec<usize>>,
    remaining: usize,
}

impl Iterator for Enumeration {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        if next_permutation(&mut succ) {
            self.next = Some(succ);
        }
        self.remaining = self.remaining.saturating_sub(1);
        Some(Assignment {
            adoption: cur
                .into_iter()
                .map(|a| AdoptionTime::from_arm(a, self.periods))
                .collect(),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for Enumeration {}

/// Next lexicographic arrangement of a multiset; false after the last one.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Observed data under an assignment: `Y_ijk = Σ_a G_i(a) Y_ijk(a)`.
pub fn reveal_outcomes(po: &PotentialOutcomeTable, asg: &Assignment) -> Result<Dataset> {
    if asg.adoption.len() != po.n_clusters() {
        return Err(Error::ShapeMismatch(format!(
            "assignment covers {} clusters, table has {}",
            asg.adoption.len(),
            po.n_clusters()
        )));
    }
    let periods = po.periods();
    let outcomes = asg
        .adoption
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if !a.is_valid(periods) {
                return Err(Error::ShapeMismatch(format!(
                    "adoption time {a} out of range"
                )));
            }
            Ok(po.arm_outcomes(i, *a).to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        std::sync::Arc::clone(po.frame_arc()),
        asg.adoption.clone(),
        outcomes,
    )
}

#[cfg(test)]
mod tests {
    use std::collections::{HashMap, HashSet};

    use super::*;

    fn spec(sizes: &[usize]) -> DesignSpec {
        DesignSpec::new(sizes.len() - 1, sizes.to_vec()).unwrap()
    }

    #[test]
    fn support_sizes() {
        assert_eq!(spec(&[1, 1]).support_size(), 2);
        assert_eq!(spec(&[2, 2, 2]).support_size(), 90);
        assert_eq!(spec(&[10, 10, 10]).support_size(), 5_550_996_791_340);
    }

    #[test]
    fn enumeration_yields_each_assignment_once() {
        let s = spec(&[2, 2, 2]);
        let all: Vec<Assignment> = enumerate_assignments(&s, DEFAULT_ENUMERATION_CAP)
            .unwrap()
            .collect();
        assert_eq!(all.len(), 90);
        assert!(all.iter().all(|a| a.matches(&s)));
        let distinct: HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), 90);
        assert_eq!(
            enumerate_assignments(&spec(&[1, 1]), 10).unwrap().count(),
            2
        );
    }

    #[test]
    fn enumeration_respects_cap() {
        assert!(matches!(
            enumerate_assignments(&spec(&[10, 10, 10]), DEFAULT_ENUMERATION_CAP),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        let s = spec(&[1, 1, 1]);
        let a = sample_assignment(&s, 7);
        assert!(a.matches(&s));
        assert!(sample_assignment(&s, 8).matches(&s));
        assert_eq!(a, sample_assignment(&s, 7));
    }

    #[test]
    fn adjacent_seeds_differ() {
        let s = spec(&[2, 2, 2]);
        let differ = (0..50)
            .filter(|&seed| sample_assignment(&s, seed) != sample_assignment(&s, seed + 1))
            .count();
        assert!(differ >= 45);
    }

    #[test]
    fn sampling_is_uniform_over_the_support() {
        let s = spec(&[2, 2, 2]);
        let mut rng = stream_rng(2024, 0);
        let draws = 90_000;
        let mut freq: HashMap<Assignment, usize> = HashMap::new();
        for _ in 0..draws {
            *freq
                .entry(sample_assignment_with(&s, &mut rng))
                .or_default() += 1;
        }
        assert_eq!(freq.len(), 90);
        let p = 1.0 / 90.0;
        let mc_se = (p * (1.0 - p) / draws as f64).sqrt();
        for (_, &c) in &freq {
            assert!((c as f64 / draws as f64 - p).abs() <= 3.0 * mc_se);
        }
    }

    #[test]
    fn largest_remainder_allocation() {
        let s = DesignSpec::from_fractions(260, 2, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.arm_sizes(), &[87, 87, 86]);
        let s = DesignSpec::from_fractions(10, 1, &[0.5, 0.5]).unwrap();
        assert_eq!(s.arm_sizes(), &[5, 5]);
    }

    #[test]
    fn rejects_empty_arm() {
        assert!(DesignSpec::new(2, vec![1, 0, 1]).is_err());
        assert!(DesignSpec::new(2, vec![1, 1]).is_err());
    }
}
