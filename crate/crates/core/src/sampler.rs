//! Exact recursive sampler for the finite-volume measure on Lambda_n.
//!
//! Conditional on not being swallowed by a larger block, a level-j block is
//! fully occupied with probability zhat_j / (1 + zhat_j); otherwise it splits
//! (or stays empty at level 0). Every coin is a pure function of a 64-bit
//! key, so replicas are reproducible and batches merge order-independently.

use serde::Serialize;

use crate::error::Result;
use crate::model::{Configuration, ModelConfig};
use crate::numeric::{logistic, splitmix64, unit_from_bits, GOLDEN};
use crate::pressure::effective_activities;

#[derive(Clone, Debug)]
pub struct Sampler {
    d: u32,
    n: u32,
    /// Occupation probability per level, logistic(log zhat_j).
    occ: Vec<f64>,
}

impl Sampler {
    pub fn new(model: &ModelConfig, n: u32) -> Result<Self> {
        model.validate()?;
        let eff = effective_activities(model, n)?;
        let mut lzh = eff.log_zhat;
        lzh.resize(n as usize + 1, f64::NEG_INFINITY);
        let occ = lzh.iter().map(|&l| logistic(l)).collect();
        Ok(Self { d: model.d, n, occ })
    }

    pub fn level(&self) -> u32 {
        self.n
    }

    pub fn occupation_probability(&self, j: u32) -> f64 {
        self.occ[j as usize]
    }

    /// Key for one replica.
    pub fn replica_key(seed: u64, replica: u64) -> u64 {
        splitmix64(seed ^ replica.wrapping_mul(GOLDEN))
    }

    /// Draws the configuration of the whole volume.
    pub fn sample(&self, key: u64) -> Configuration {
        self.sample_level(self.n, key)
    }

    fn sample_level(&self, level: u32, key: u64) -> Configuration {
        let coin = unit_from_bits(splitmix64(key));
        if coin < self.occ[level as usize] {
            return Configuration::Occupied { level };
        }
        if level == 0 {
            return Configuration::EmptySite;
        }
        let m = 1u64 << self.d;
        let children = (0..m)
            .map(|i| self.sample_level(level - 1, splitmix64(key ^ (i + 1).wrapping_mul(GOLDEN))))
            .collect();
        Configuration::Split { level, children }
    }
}

/// Integer tallies over a batch of replicas.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SampleStats {
    pub d: u32,
    pub n: u32,
    pub replicas: u64,
    /// Replicas whose corner site is covered by a level-j block.
    pub corner_hits: Vec<u64>,
    /// Sum over replicas of the level-j block count.
    pub block_sums: Vec<u64>,
    /// Sum of squared block counts, for the empirical variance.
    pub block_sq_sums: Vec<u128>,
    /// Sum over replicas of the covered volume (in sites).
    pub covered_sum: u128,
    /// Sum of squared covered volumes.
    pub covered_sq_sum: u128,
}

impl SampleStats {
    pub fn empty(d: u32, n: u32) -> Self {
        let len = n as usize + 1;
        Self {
            d,
            n,
            replicas: 0,
            corner_hits: vec![0; len],
            block_sums: vec![0; len],
            block_sq_sums: vec![0; len],
            covered_sum: 0,
            covered_sq_sum: 0,
        }
    }

    pub fn record(&mut self, config: &Configuration) {
        self.replicas += 1;
        if let Some(j) = config.corner_cover_level() {
            self.corner_hits[j as usize] += 1;
        }
        let mut counts = vec![0u64; self.n as usize + 1];
        config.tally_blocks(&mut counts);
        let mut covered = 0u128;
        for (j, &c) in counts.iter().enumerate() {
            self.block_sums[j] += c;
            self.block_sq_sums[j] += c as u128 * c as u128;
            covered += (c as u128) << (self.d as usize * j);
        }
        self.covered_sum += covered;
        self.covered_sq_sum += covered * covered;
    }

    pub fn merge(&mut self, other: &SampleStats) {
        assert_eq!((self.d, self.n), (other.d, other.n));
        self.replicas += other.replicas;
        for j in 0..self.corner_hits.len() {
            self.corner_hits[j] += other.corner_hits[j];
            self.block_sums[j] += other.block_sums[j];
            self.block_sq_sums[j] += other.block_sq_sums[j];
        }
        self.covered_sum += other.covered_sum;
        self.covered_sq_sum += other.covered_sq_sum;
    }

    /// rho_j estimate from the corner-cover indicator.
    pub fn corner_density(&self, j: u32) -> f64 {
        self.corner_hits[j as usize] as f64 / self.replicas as f64
    }

    pub fn corner_se(&self, j: u32) -> f64 {
        let p = self.corner_density(j);
        (p * (1.0 - p) / self.replicas as f64).sqrt()
    }

    /// rho_j estimate from the volume fraction N_j |B_j| / |Lambda_n|.
    pub fn volume_density(&self, j: u32) -> f64 {
        let scale = (self.d as f64 * (j as f64 - self.n as f64)).exp2();
        self.block_sums[j as usize] as f64 / self.replicas as f64 * scale
    }

    pub fn volume_se(&self, j: u32) -> f64 {
        let r = self.replicas as f64;
        let mean = self.block_sums[j as usize] as f64 / r;
        let msq = self.block_sq_sums[j as usize] as f64 / r;
        let var = (msq - mean * mean).max(0.0);
        let scale = (self.d as f64 * (j as f64 - self.n as f64)).exp2();
        scale * (var / r).sqrt()
    }

    /// Empirical covered fraction sigma_{Lambda_n}.
    pub fn sigma_mean(&self) -> f64 {
        let scale = (-((self.d * self.n) as f64)).exp2();
        self.covered_sum as f64 / self.replicas as f64 * scale
    }

    pub fn sigma_se(&self) -> f64 {
        let r = self.replicas as f64;
        let mean = self.covered_sum as f64 / r;
        let msq = self.covered_sq_sum as f64 / r;
        let var = (msq - mean * mean).max(0.0);
        let scale = (-((self.d * self.n) as f64)).exp2();
        scale * (var / r).sqrt()
    }
}

/// Samples `replicas` independent configurations and tallies them.
pub fn run_replicas(model: &ModelConfig, n: u32, replicas: u64, seed: u64) -> Result<SampleStats> {
    let sampler = Sampler::new(model, n)?;
    let mut stats = SampleStats::empty(model.d, n);
    for r in 0..replicas {
        let cfg = sampler.sample(Sampler::replica_key(seed, r));
        stats.record(&cfg);
    }
    Ok(stats)
}

/// An occupied cube rescaled to the unit box [0,1]^d.
#[derive(Clone, Debug, Serialize)]
pub struct FractalCube {
    pub level: u32,
    #[serde(with = "crate::model::f64_json::vec")]
    pub corner: Vec<f64>,
    #[serde(with = "crate::model::f64_json")]
    pub side: f64,
}

/// Occupied blocks of a configuration as unit-box cubes, in DFS order.
pub fn fractal_export(config: &Configuration, d: u32, n: u32) -> Vec<FractalCube> {
    let mut out = Vec::new();
    let mut corner = vec![0u64; d as usize];
    fractal_walk(config, d, n, &mut corner, &mut out);
    out
}

fn fractal_walk(
    cfg: &Configuration,
    d: u32,
    n: u32,
    corner: &mut [u64],
    out: &mut Vec<FractalCube>,
) {
    match cfg {
        Configuration::EmptySite => {}
        Configuration::Occupied { level } => {
            let scale = (-(n as f64)).exp2();
            out.push(FractalCube {
                level: *level,
                corner: corner.iter().map(|&c| c as f64 * scale).collect(),
                side: (*level as f64 - n as f64).exp2(),
            });
        }
        Configuration::Split { level, children } => {
            let half = 1u64 << (level - 1);
            for (i, ch) in children.iter().enumerate() {
                for (a, c) in corner.iter_mut().enumerate() {
                    if (i >> a) & 1 == 1 {
                        *c += half;
                    }
                }
                fractal_walk(ch, d, n, corner, out);
                for (a, c) in corner.iter_mut().enumerate() {
                    if (i >> a) & 1 == 1 {
                        *c -= half;
                    }
                }
            }
        }
    }
}
