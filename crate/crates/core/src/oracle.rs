//! Exact finite-volume reference computations by explicit enumeration.
//!
//! A volume Lambda_n admits a finite set of configurations: every subcube
//! is either one block or split into its 2^d children, recursively, with
//! level-0 sites occupied or empty. The census walks that decision tree
//! once and tallies configurations by their block count vector; partition
//! sums, block probabilities and multicanonical counts then reduce to
//! exact rational arithmetic over the tally.

use std::collections::BTreeMap;

use num_bigint::BigUint;
pub use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::combin::{binomial, ln_biguint, ln_binomial};
use crate::error::{Error, Result};
use crate::model::Configuration;
use crate::numeric::KahanSum;

/// Hard cap on the number of admissible blocks of the enumerated volume.
pub const MAX_BLOCKS: u64 = 31;

/// Number of admissible blocks in Lambda_n: sum_{j<=n} m^(n-j).
fn admissible_blocks(d: u32, n: u32) -> u64 {
    let m = 1u128 << d;
    let mut total = 0u128;
    let mut layer = 1u128;
    for _ in 0..=n {
        total += layer;
        if total > MAX_BLOCKS as u128 {
            return u64::MAX;
        }
        layer *= m;
    }
    total as u64
}

/// Census of all configurations of Lambda_n, tallied by count vector.
#[derive(Clone, Debug)]
pub struct Census {
    pub d: u32,
    pub n: u32,
    /// (N_0, ..., N_n) -> number of configurations realizing it.
    pub tally: BTreeMap<Vec<u32>, u64>,
}

fn census_rec(
    m: u32,
    pending: &mut Vec<u32>,
    counts: &mut Vec<u32>,
    tally: &mut BTreeMap<Vec<u32>, u64>,
) {
    let Some(level) = pending.pop() else {
        *tally.entry(counts.clone()).or_insert(0) += 1;
        return;
    };
    // the subvolume is one block of its own level
    counts[level as usize] += 1;
    census_rec(m, pending, counts, tally);
    counts[level as usize] -= 1;
    if level == 0 {
        // or an empty site
        census_rec(m, pending, counts, tally);
    } else {
        // or it splits into m children
        for _ in 0..m {
            pending.push(level - 1);
        }
        census_rec(m, pending, counts, tally);
        for _ in 0..m {
            pending.pop();
        }
    }
    pending.push(level);
}

impl Census {
    pub fn build(d: u32, n: u32) -> Result<Self> {
        if d == 0 || d > 30 {
            return Err(Error::InvalidModel(format!("dimension d = {d}")));
        }
        if admissible_blocks(d, n) > MAX_BLOCKS {
            return Err(Error::TooLarge(format!(
                "census d={d} n={n} exceeds {MAX_BLOCKS} admissible blocks"
            )));
        }
        let mut tally = BTreeMap::new();
        let mut pending = vec![n];
        let mut counts = vec![0u32; n as usize + 1];
        census_rec(1 << d, &mut pending, &mut counts, &mut tally);
        Ok(Self { d, n, tally })
    }

    /// Total number of configurations, sum of the tally.
    pub fn total_configs(&self) -> u64 {
        self.tally.values().sum()
    }

    /// Exact partition sum Xi = sum over configurations of prod_j z_j^(N_j).
    ///
    /// Activities beyond the slice are zero.
    pub fn partition_sum(&self, z: &[BigRational]) -> BigRational {
        partition_of_tally(&self.tally, z)
    }

    /// ln Xi from the exact rational value.
    pub fn log_partition(&self, z: &[BigRational]) -> f64 {
        ln_rational(&self.partition_sum(z))
    }

    /// Exact probability that a fixed admissible j-block is present.
    ///
    /// All blocks of one level are exchangeable, so the corner block
    /// represents them; the numerator re-enumerates with the corner path
    /// forced to split down to level j and occupy there.
    pub fn block_probability(&self, j: u32, z: &[BigRational]) -> Result<BigRational> {
        if j > self.n {
            return Err(Error::InvalidModel(format!(
                "block level {j} exceeds volume level {}",
                self.n
            )));
        }
        let mut tally = BTreeMap::new();
        let mut pending = vec![(self.n, true)];
        let mut counts = vec![0u32; self.n as usize + 1];
        constrained_rec(1 << self.d, j, &mut pending, &mut counts, &mut tally);
        let num = partition_of_tally(&tally, z);
        let den = self.partition_sum(z);
        Ok(num / den)
    }
}

fn constrained_rec(
    m: u32,
    target: u32,
    pending: &mut Vec<(u32, bool)>,
    counts: &mut Vec<u32>,
    tally: &mut BTreeMap<Vec<u32>, u64>,
) {
    let Some((level, on_path)) = pending.pop() else {
        *tally.entry(counts.clone()).or_insert(0) += 1;
        return;
    };
    if on_path && level == target {
        // the tracked block itself: forced present
        counts[level as usize] += 1;
        constrained_rec(m, target, pending, counts, tally);
        counts[level as usize] -= 1;
    } else if on_path {
        // strict ancestor of the tracked block: forced to split
        pending.push((level - 1, true));
        for _ in 1..m {
            pending.push((level - 1, false));
        }
        constrained_rec(m, target, pending, counts, tally);
        for _ in 0..m {
            pending.pop();
        }
    } else {
        counts[level as usize] += 1;
        constrained_rec(m, target, pending, counts, tally);
        counts[level as usize] -= 1;
        if level == 0 {
            constrained_rec(m, target, pending, counts, tally);
        } else {
            for _ in 0..m {
                pending.push((level - 1, false));
            }
            constrained_rec(m, target, pending, counts, tally);
            for _ in 0..m {
                pending.pop();
            }
        }
    }
    pending.push((level, on_path));
}

fn partition_of_tally(tally: &BTreeMap<Vec<u32>, u64>, z: &[BigRational]) -> BigRational {
    let levels = tally.keys().next().map_or(0, |k| k.len());
    let max_count: Vec<u32> = (0..levels)
        .map(|j| tally.keys().map(|k| k[j]).max().unwrap_or(0))
        .collect();
    // pows[j][k] = z_j^k
    let pows: Vec<Vec<BigRational>> = (0..levels)
        .map(|j| {
            let zj = z.get(j).cloned().unwrap_or_else(BigRational::zero);
            let mut row = Vec::with_capacity(max_count[j] as usize + 1);
            row.push(BigRational::one());
            for k in 1..=max_count[j] as usize {
                let prev = row[k - 1].clone();
                row.push(prev * &zj);
            }
            row
        })
        .collect();
    let mut xi = BigRational::zero();
    for (counts, &mult) in tally {
        let mut term = BigRational::from_integer(mult.into());
        for (j, &nj) in counts.iter().enumerate() {
            if term.is_zero() {
                break;
            }
            term *= &pows[j][nj as usize];
        }
        xi += term;
    }
    xi
}

/// ln of a positive rational, exact big-integer mantissas on both sides.
pub fn ln_rational(x: &BigRational) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    debug_assert!(x.is_positive());
    ln_biguint(&x.numer().magnitude().clone()) - ln_biguint(&x.denom().magnitude().clone())
}

/// Exact dyadic rational carrying the same value as the f64.
pub fn rational_from_f64(x: f64) -> Result<BigRational> {
    BigRational::from_float(x)
        .ok_or_else(|| Error::InvalidModel(format!("activity {x} is not finite")))
}

/// Exact probability of each configuration of Lambda_n under activities z.
///
/// Configurations are emitted in a fixed deterministic order; probabilities
/// are exact rationals converted to f64 at the end.
pub fn enumerate_configurations(
    d: u32,
    n: u32,
    z: &[BigRational],
    cap: usize,
) -> Result<Vec<(Configuration, f64)>> {
    if admissible_blocks(d, n) > MAX_BLOCKS {
        return Err(Error::TooLarge(format!(
            "enumeration d={d} n={n} exceeds {MAX_BLOCKS} admissible blocks"
        )));
    }
    let m = 1usize << d;
    let zero = BigRational::zero();
    let zr = |j: u32| z.get(j as usize).unwrap_or(&zero).clone();
    // level by level: all configurations of a level-l subvolume with weights
    let mut layer: Vec<(Configuration, BigRational)> = vec![
        (Configuration::EmptySite, BigRational::one()),
        (Configuration::Occupied { level: 0 }, zr(0)),
    ];
    for level in 1..=n {
        let mut next = vec![(Configuration::Occupied { level }, zr(level))];
        // cartesian product of m children
        let mut partial: Vec<(Vec<Configuration>, BigRational)> =
            vec![(Vec::new(), BigRational::one())];
        for _ in 0..m {
            let mut grown = Vec::with_capacity(partial.len() * layer.len());
            for (kids, w) in &partial {
                for (c, cw) in &layer {
                    let mut kids = kids.clone();
                    kids.push(c.clone());
                    grown.push((kids, w * cw));
                }
            }
            if grown.len() > cap {
                return Err(Error::TooLarge(format!(
                    "enumeration exceeds cap of {cap} configurations"
                )));
            }
            partial = grown;
        }
        next.extend(partial.into_iter().map(|(kids, w)| {
            (
                Configuration::Split {
                    level,
                    children: kids,
                },
                w,
            )
        }));
        layer = next;
    }
    let xi: BigRational = layer.iter().map(|(_, w)| w).sum();
    if xi.is_zero() {
        return Err(Error::InvalidModel(
            "all configurations have weight zero".into(),
        ));
    }
    Ok(layer
        .into_iter()
        .map(|(c, w)| {
            let p = (w / &xi).to_f64().unwrap_or(0.0);
            (c, p)
        })
        .collect())
}

/// Free slots per level once all larger blocks are placed.
///
/// slots_j = (|Lambda_n| - sum_{k>j} |B_k| N_k) / |B_j|; the division is
/// always exact because every |B_k| with k >= j is a multiple of |B_j|.
/// None marks an infeasible count vector.
fn multicanonical_slots(d: u32, n: u32, counts: &[u64]) -> Result<Option<Vec<u64>>> {
    if counts.len() > n as usize + 1 && counts[n as usize + 1..].iter().any(|&c| c > 0) {
        return Ok(None);
    }
    let dn = d as u64 * n as u64;
    if dn >= 64 {
        return Err(Error::TooLarge(format!(
            "volume 2^{dn} exceeds u64 site count"
        )));
    }
    let volume = 1u64 << dn;
    let mut slots = vec![0u64; n as usize + 1];
    let mut used: u128 = 0;
    for j in (0..=n).rev() {
        let bj = 1u128 << (d as u64 * j as u64);
        let free = volume as u128 - used;
        let sj = free / bj;
        let nj = counts.get(j as usize).copied().unwrap_or(0) as u128;
        if nj > sj {
            return Ok(None);
        }
        slots[j as usize] = sj as u64;
        used += nj * bj;
        debug_assert!(used <= volume as u128);
    }
    Ok(Some(slots))
}

/// Exact number of configurations with the prescribed block counts.
pub fn multicanonical_count(d: u32, n: u32, counts: &[u64]) -> Result<BigUint> {
    match multicanonical_slots(d, n, counts)? {
        None => Ok(BigUint::zero()),
        Some(slots) => {
            let mut acc = BigUint::one();
            for j in 0..=n as usize {
                let nj = counts.get(j).copied().unwrap_or(0);
                acc *= binomial(slots[j], nj)?;
            }
            Ok(acc)
        }
    }
}

/// ln of the multicanonical count; NEG_INFINITY for infeasible counts.
///
/// Goes through per-level log-binomials, so it scales to volumes where the
/// full integer would be wasteful.
pub fn multicanonical_logcount(d: u32, n: u32, counts: &[u64]) -> Result<f64> {
    match multicanonical_slots(d, n, counts)? {
        None => Ok(f64::NEG_INFINITY),
        Some(slots) => {
            let mut s = KahanSum::new();
            for j in 0..=n as usize {
                let nj = counts.get(j).copied().unwrap_or(0);
                s.add(ln_binomial(slots[j], nj)?);
            }
            Ok(s.value())
        }
    }
}

/// Block counts approximating a density profile on Lambda_n.
///
/// N_j = round(rho_j |Lambda_n| / |B_j|); levels beyond n must carry no mass.
pub fn rounded_counts(d: u32, n: u32, rho: &[f64]) -> Result<Vec<u64>> {
    let dn = d as u64 * n as u64;
    if dn >= 64 {
        return Err(Error::TooLarge(format!(
            "volume 2^{dn} exceeds u64 site count"
        )));
    }
    if rho.len() > n as usize + 1 && rho[n as usize + 1..].iter().any(|&r| r > 0.0) {
        return Err(Error::InvalidProfile(format!(
            "profile has mass above level n = {n}"
        )));
    }
    let mut counts = vec![0u64; n as usize + 1];
    for (j, &r) in rho.iter().enumerate().take(n as usize + 1) {
        let scale = ((dn - d as u64 * j as u64) as f64).exp2();
        counts[j] = (r * scale).round() as u64;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::FromPrimitive;

    fn ones(n: usize) -> Vec<BigRational> {
        vec![BigRational::one(); n]
    }

    #[test]
    fn config_totals_match_recursion() {
        // A_0 = 2, A_n = 1 + A_{n-1}^m
        let expect_d1 = [2u64, 5, 26, 677, 458330];
        for (n, &want) in expect_d1.iter().enumerate() {
            let c = Census::build(1, n as u32).unwrap();
            assert_eq!(c.total_configs(), want, "d=1 n={n}");
        }
        assert_eq!(Census::build(2, 0).unwrap().total_configs(), 2);
        assert_eq!(Census::build(2, 1).unwrap().total_configs(), 17);
        assert_eq!(Census::build(2, 2).unwrap().total_configs(), 83522);
    }

    #[test]
    fn census_cap() {
        assert!(matches!(Census::build(1, 5), Err(Error::TooLarge(_))));
        assert!(matches!(Census::build(2, 3), Err(Error::TooLarge(_))));
        // d=1 n=4 has exactly 31 admissible blocks and is admitted
        assert_eq!(admissible_blocks(1, 4), 31);
        assert_eq!(admissible_blocks(2, 2), 21);
    }

    #[test]
    fn tally_spot_values_d1_n2() {
        let c = Census::build(1, 2).unwrap();
        // two monomers and one 2-block fill Lambda_2 in two ways
        assert_eq!(c.tally[&vec![2, 1, 0]], 2);
        // one monomer and one 2-block: 2 positions for each on opposite halves
        assert_eq!(c.tally[&vec![1, 1, 0]], 4);
        assert_eq!(c.tally[&vec![0, 0, 1]], 1);
        assert_eq!(c.tally[&vec![4, 0, 0]], 1);
    }

    #[test]
    fn partition_sum_unit_activities() {
        let c = Census::build(1, 2).unwrap();
        assert_eq!(
            c.partition_sum(&ones(3)),
            BigRational::from_integer(26.into())
        );
        let c2 = Census::build(2, 1).unwrap();
        assert_eq!(
            c2.partition_sum(&ones(2)),
            BigRational::from_integer(17.into())
        );
    }

    #[test]
    fn partition_sum_truncated_z_drops_levels() {
        let c = Census::build(1, 1).unwrap();
        // z_1 absent: Xi = (1 + z_0)^2 with z_0 = 3
        let z = vec![BigRational::from_integer(3.into())];
        assert_eq!(c.partition_sum(&z), BigRational::from_integer(16.into()));
    }

    #[test]
    fn block_probabilities_d1_n1_unit() {
        let c = Census::build(1, 1).unwrap();
        // Xi = 5; the 1-block appears in 1 configuration
        let p1 = c.block_probability(1, &ones(2)).unwrap();
        assert_eq!(p1, BigRational::new(1.into(), 5.into()));
        // a fixed monomer appears in 2 of 5
        let p0 = c.block_probability(0, &ones(2)).unwrap();
        assert_eq!(p0, BigRational::new(2.into(), 5.into()));
    }

    #[test]
    fn block_probability_sums_to_coverage() {
        // sum_j P(corner covered at level j) = P(corner covered) <= 1
        let c = Census::build(1, 2).unwrap();
        let z: Vec<BigRational> = [0.5, 1.25, 2.0]
            .iter()
            .map(|&x| BigRational::from_f64(x).unwrap())
            .collect();
        let total: BigRational = (0..=2).map(|j| c.block_probability(j, &z).unwrap()).sum();
        assert!(total < BigRational::one());
        assert!(total.to_f64().unwrap() > 0.5);
    }

    #[test]
    fn multicanonical_matches_census_everywhere() {
        for (d, n) in [(1u32, 2u32), (1, 3), (2, 1), (2, 2)] {
            let c = Census::build(d, n).unwrap();
            for (counts, &mult) in &c.tally {
                let counts64: Vec<u64> = counts.iter().map(|&x| x as u64).collect();
                let exact = multicanonical_count(d, n, &counts64).unwrap();
                assert_eq!(exact, BigUint::from(mult), "d={d} n={n} counts={counts:?}");
            }
        }
    }

    #[test]
    fn multicanonical_infeasible_is_zero() {
        // five monomers cannot fit in four sites
        assert!(multicanonical_count(1, 2, &[5, 0, 0]).unwrap().is_zero());
        assert_eq!(
            multicanonical_logcount(1, 2, &[5, 0, 0]).unwrap(),
            f64::NEG_INFINITY
        );
        // mass above the volume level
        assert!(multicanonical_count(1, 1, &[0, 0, 1]).unwrap().is_zero());
    }

    #[test]
    fn multicanonical_feasible_reference() {
        // (2,1,0) on d=1 n=2: the 2-block sits on either half, monomers fill
        let exact = multicanonical_count(1, 2, &[2, 1, 0]).unwrap();
        assert_eq!(exact, BigUint::from(2u32));
        let lc = multicanonical_logcount(1, 2, &[2, 1, 0]).unwrap();
        assert!((lc - 2.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn enumerate_matches_census_weights() {
        let z: Vec<BigRational> = [1.0, 0.5, 2.0]
            .iter()
            .map(|&x| BigRational::from_f64(x).unwrap())
            .collect();
        let configs = enumerate_configurations(1, 2, &z, 100_000).unwrap();
        assert_eq!(configs.len(), 26);
        let total: f64 = configs.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // corner-cover probabilities agree with block_probability
        let c = Census::build(1, 2).unwrap();
        for j in 0..=2u32 {
            let exact = c.block_probability(j, &z).unwrap().to_f64().unwrap();
            let summed: f64 = configs
                .iter()
                .filter(|(cfg, _)| cfg.corner_cover_level() == Some(j))
                .map(|(_, p)| p)
                .sum();
            assert!((summed - exact).abs() < 1e-12, "level {j}");
        }
    }

    #[test]
    fn rounded_counts_basic() {
        let counts = rounded_counts(1, 4, &[0.25, 0.125]).unwrap();
        // |Lambda_4| = 16: N_0 = 4, N_1 = 1
        assert_eq!(counts, vec![4, 1, 0, 0, 0]);
    }
}
