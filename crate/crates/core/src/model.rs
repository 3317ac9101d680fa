//! Model and profile types shared across the computational modules.
//!
//! A level-j block is a dyadically aligned cube of side 2^j in Z^d, volume
//! |B_j| = 2^(d j); admissible blocks are nested or disjoint, and a block
//! splits into m = 2^d children one level down. Activities are either an
//! explicit table z_j or the parametric family z_j = exp(|B_j| mu - E_j).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{block_volume, KahanSum};

/// Serialize/deserialize f64 values whose JSON form may be the strings
/// "inf", "-inf", or "nan"; plain numbers otherwise.
pub mod f64_json {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NumOrStr {
        Num(f64),
        Str(String),
    }

    fn decode(v: NumOrStr) -> Result<f64, String> {
        match v {
            NumOrStr::Num(x) => Ok(x),
            NumOrStr::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(format!("expected a number or inf/-inf/nan, got {other:?}")),
            },
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            ser.serialize_f64(*x)
        } else if x.is_nan() {
            ser.serialize_str("nan")
        } else if *x > 0.0 {
            ser.serialize_str("inf")
        } else {
            ser.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        decode(NumOrStr::deserialize(de)?).map_err(D::Error::custom)
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(x: &Option<f64>, ser: S) -> Result<S::Ok, S::Error> {
            match x {
                Some(v) => super::serialize(v, ser),
                None => ser.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<f64>, D::Error> {
            Option::<NumOrStr>::deserialize(de)?
                .map(|v| decode(v).map_err(D::Error::custom))
                .transpose()
        }
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(xs: &[f64], ser: S) -> Result<S::Ok, S::Error> {
            struct Wrap(f64);
            impl serde::Serialize for Wrap {
                fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
                    super::serialize(&self.0, ser)
                }
            }
            let mut seq = ser.serialize_seq(Some(xs.len()))?;
            for &x in xs {
                seq.serialize_element(&Wrap(x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
            Vec::<NumOrStr>::deserialize(de)?
                .into_iter()
                .map(|v| decode(v).map_err(D::Error::custom))
                .collect()
        }
    }
}

/// Activity assignment, one weight per block level.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActivityModel {
    /// Explicit finite table; z_j = 0 beyond the listed prefix.
    Table { z: Vec<f64> },
    /// z_j = exp(|B_j| mu - E_j) with E_j from the prefix, then |B_j| e_inf.
    Energy {
        #[serde(rename = "E", with = "f64_json::vec")]
        e: Vec<f64>,
        e_inf: f64,
        mu: f64,
    },
    /// Constant energy per block: E_j = lambda for every level.
    #[serde(rename = "constant_energy")]
    ConstEnergy { lambda: f64, mu: f64 },
}

// Deserialized by hand through a flat wire struct: derive(deny_unknown_fields)
// cannot see inside an internally tagged enum, and a silently ignored field
// (say, "mu" on a table model) would corrupt results without any error.
impl<'de> Deserialize<'de> for ActivityModel {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;

        #[derive(Deserialize)]
        #[serde(rename_all = "snake_case")]
        enum Kind {
            Table,
            Energy,
            #[serde(rename = "constant_energy")]
            ConstEnergy,
        }

        fn opt_e<'de, D: serde::Deserializer<'de>>(
            de: D,
        ) -> std::result::Result<Option<Vec<f64>>, D::Error> {
            f64_json::vec::deserialize(de).map(Some)
        }

        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Wire {
            #[serde(rename = "type")]
            kind: Kind,
            z: Option<Vec<f64>>,
            #[serde(rename = "E", default, deserialize_with = "opt_e")]
            e: Option<Vec<f64>>,
            e_inf: Option<f64>,
            mu: Option<f64>,
            lambda: Option<f64>,
        }

        let w = Wire::deserialize(de)?;
        let check = |name: &str, strays: &[(&str, bool)]| -> std::result::Result<(), D::Error> {
            match strays.iter().find(|(_, present)| *present) {
                Some((field, _)) => Err(D::Error::custom(format!(
                    "unknown field `{field}` for model type `{name}`"
                ))),
                None => Ok(()),
            }
        };
        match w.kind {
            Kind::Table => check(
                "table",
                &[
                    ("E", w.e.is_some()),
                    ("e_inf", w.e_inf.is_some()),
                    ("mu", w.mu.is_some()),
                    ("lambda", w.lambda.is_some()),
                ],
            )?,
            Kind::Energy => check(
                "energy",
                &[("z", w.z.is_some()), ("lambda", w.lambda.is_some())],
            )?,
            Kind::ConstEnergy => check(
                "constant_energy",
                &[
                    ("z", w.z.is_some()),
                    ("E", w.e.is_some()),
                    ("e_inf", w.e_inf.is_some()),
                ],
            )?,
        }
        let miss = D::Error::missing_field;
        Ok(match w.kind {
            Kind::Table => ActivityModel::Table {
                z: w.z.ok_or_else(|| miss("z"))?,
            },
            Kind::Energy => ActivityModel::Energy {
                e: w.e.ok_or_else(|| miss("E"))?,
                e_inf: w.e_inf.ok_or_else(|| miss("e_inf"))?,
                mu: w.mu.ok_or_else(|| miss("mu"))?,
            },
            Kind::ConstEnergy => ActivityModel::ConstEnergy {
                lambda: w.lambda.ok_or_else(|| miss("lambda"))?,
                mu: w.mu.ok_or_else(|| miss("mu"))?,
            },
        })
    }
}

/// A dimension together with its activity model; the unit every engine consumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: u32,
    pub model: ActivityModel,
}

/// Stability summary: theta_star = limsup_j log(z_j)/|B_j|.
///
/// `window_max` is the maximum over the inspected window, `tail_limit` the
/// exact tail value when the model form pins it (parametric models only).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StabilityReport {
    #[serde(with = "f64_json")]
    pub theta_star: f64,
    #[serde(with = "f64_json")]
    pub window_max: f64,
    #[serde(with = "f64_json::opt")]
    pub tail_limit: Option<f64>,
}

impl ModelConfig {
    pub fn table(d: u32, z: Vec<f64>) -> Self {
        Self {
            d,
            model: ActivityModel::Table { z },
        }
    }

    pub fn energy(d: u32, e: Vec<f64>, e_inf: f64, mu: f64) -> Self {
        Self {
            d,
            model: ActivityModel::Energy { e, e_inf, mu },
        }
    }

    pub fn const_energy(d: u32, lambda: f64, mu: f64) -> Self {
        Self {
            d,
            model: ActivityModel::ConstEnergy { lambda, mu },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > 30 {
            return Err(Error::InvalidModel(format!(
                "dimension d = {} outside 1..=30",
                self.d
            )));
        }
        match &self.model {
            ActivityModel::Table { z } => {
                if z.is_empty() {
                    return Err(Error::InvalidModel("empty activity table".into()));
                }
                for (j, &zj) in z.iter().enumerate() {
                    if !(zj.is_finite() && zj >= 0.0) {
                        return Err(Error::InvalidModel(format!(
                            "z[{j}] = {zj} must be finite and nonnegative"
                        )));
                    }
                }
            }
            ActivityModel::Energy { e, e_inf, mu } => {
                if e.is_empty() {
                    return Err(Error::InvalidModel("empty energy prefix".into()));
                }
                for (j, &ej) in e.iter().enumerate() {
                    // +inf forbids the level entirely (z_j = 0) and is legal
                    if ej.is_nan() || ej == f64::NEG_INFINITY {
                        return Err(Error::InvalidModel(format!(
                            "E[{j}] = {ej} must be finite or +inf"
                        )));
                    }
                }
                if !e_inf.is_finite() {
                    return Err(Error::InvalidModel("e_inf must be finite".into()));
                }
                if !mu.is_finite() {
                    return Err(Error::InvalidModel("mu must be finite".into()));
                }
            }
            ActivityModel::ConstEnergy { lambda, mu } => {
                if !lambda.is_finite() {
                    return Err(Error::InvalidModel("lambda must be finite".into()));
                }
                if !mu.is_finite() {
                    return Err(Error::InvalidModel("mu must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Children per split, m = 2^d.
    pub fn m(&self) -> u64 {
        1u64 << self.d
    }

    /// |B_j| as exact f64.
    pub fn volume(&self, j: u32) -> Result<f64> {
        block_volume(self.d, j)
    }

    /// Block energy E_j, with the tail continued as |B_j| e_inf.
    pub fn energy_at(&self, j: u32) -> Result<f64> {
        match &self.model {
            ActivityModel::Table { .. } => Err(Error::EnergyModelRequired),
            ActivityModel::Energy { e, e_inf, .. } => match e.get(j as usize) {
                Some(&ej) => Ok(ej),
                None => Ok(self.volume(j)? * e_inf),
            },
            ActivityModel::ConstEnergy { lambda, .. } => Ok(*lambda),
        }
    }

    /// Energy density of the infinite-block tail, lim E_j / |B_j|.
    pub fn e_inf(&self) -> Result<f64> {
        match &self.model {
            ActivityModel::Table { .. } => Err(Error::EnergyModelRequired),
            ActivityModel::Energy { e_inf, .. } => Ok(*e_inf),
            ActivityModel::ConstEnergy { .. } => Ok(0.0),
        }
    }

    pub fn mu(&self) -> Result<f64> {
        match &self.model {
            ActivityModel::Table { .. } => Err(Error::EnergyModelRequired),
            ActivityModel::Energy { mu, .. } | ActivityModel::ConstEnergy { mu, .. } => Ok(*mu),
        }
    }

    /// Same energies at a different chemical potential.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out.model {
            ActivityModel::Table { .. } => return Err(Error::EnergyModelRequired),
            ActivityModel::Energy { mu: m, .. } | ActivityModel::ConstEnergy { mu: m, .. } => {
                *m = mu;
            }
        }
        Ok(out)
    }

    /// log z_j; NEG_INFINITY marks a forbidden level.
    pub fn log_activity(&self, j: u32) -> Result<f64> {
        match &self.model {
            ActivityModel::Table { z } => {
                Ok(z.get(j as usize).map_or(f64::NEG_INFINITY, |&zj| zj.ln()))
            }
            ActivityModel::Energy { .. } | ActivityModel::ConstEnergy { .. } => {
                let e = self.energy_at(j)?;
                if e == f64::INFINITY {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok(self.volume(j)? * self.mu()? - e)
            }
        }
    }

    /// Levels with explicit data: table length or energy prefix length.
    pub fn prefix_len(&self) -> usize {
        match &self.model {
            ActivityModel::Table { z } => z.len(),
            ActivityModel::Energy { e, .. } => e.len(),
            ActivityModel::ConstEnergy { .. } => 0,
        }
    }

    /// log eps_j for eps_j = z_{j-1}^m / z_j = exp(E_j - m E_{j-1}), j >= 1.
    ///
    /// Two consecutive forbidden levels give the +inf convention (block j
    /// unreachable relative to its children).
    pub fn log_eps_at(&self, j: u32) -> Result<f64> {
        debug_assert!(j >= 1);
        let ej = self.energy_at(j)?;
        let ep = self.energy_at(j - 1)?;
        if ej == f64::INFINITY && ep == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        Ok(ej - self.m() as f64 * ep)
    }

    /// Splitting ratio eps_j itself.
    pub fn eps_at(&self, j: u32) -> Result<f64> {
        Ok(self.log_eps_at(j)?.exp())
    }

    /// Excess Boltzmann weight u_j = exp(-(E_j - |B_j| e_inf)), mu-independent.
    pub fn u_at(&self, j: u32) -> Result<f64> {
        let e = self.energy_at(j)?;
        if e == f64::INFINITY {
            return Ok(0.0);
        }
        Ok((-(e - self.volume(j)? * self.e_inf()?)).exp())
    }

    /// Stability report over levels 0..=max_level.
    pub fn stability(&self, max_level: u32) -> Result<StabilityReport> {
        let mut window_max = f64::NEG_INFINITY;
        for j in 0..=max_level {
            let r = self.log_activity(j)? / self.volume(j)?;
            if r > window_max {
                window_max = r;
            }
        }
        let tail_limit = match &self.model {
            ActivityModel::Table { .. } => None,
            ActivityModel::Energy { e_inf, mu, .. } => Some(mu - e_inf),
            ActivityModel::ConstEnergy { mu, .. } => Some(*mu),
        };
        // parametric tails are eventually constant, so the limsup is exact;
        // a finite table has the window maximum as its only candidate
        let theta_star = tail_limit.unwrap_or(window_max);
        Ok(StabilityReport {
            theta_star,
            window_max,
            tail_limit,
        })
    }

    /// Diagnostic norm ||z||_theta = sum_j z_j exp(-theta |B_j|) over the window.
    pub fn znorm_at(&self, theta: f64, max_level: u32) -> Result<f64> {
        let mut s = KahanSum::new();
        for j in 0..=max_level {
            let lw = self.log_activity(j)? - theta * self.volume(j)?;
            s.add(lw.exp());
        }
        Ok(s.value())
    }
}

/// Block density profile: rho_j is the fraction of sites covered by
/// j-blocks, sigma_inf the fraction lost to infinite blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub d: u32,
    pub rho: Vec<f64>,
    #[serde(default)]
    pub sigma_inf: f64,
}

impl Profile {
    pub fn new(d: u32, rho: Vec<f64>, sigma_inf: f64) -> Self {
        Self { d, rho, sigma_inf }
    }

    /// Total mass sigma_0 = sum rho_j + sigma_inf.
    pub fn norm(&self) -> f64 {
        let mut s = KahanSum::new();
        for &r in &self.rho {
            s.add(r);
        }
        s.add(self.sigma_inf);
        s.value()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > 30 {
            return Err(Error::InvalidProfile(format!(
                "dimension d = {} outside 1..=30",
                self.d
            )));
        }
        for (j, &r) in self.rho.iter().enumerate() {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidProfile(format!(
                    "rho[{j}] = {r} must be finite and nonnegative"
                )));
            }
        }
        if !(self.sigma_inf.is_finite() && self.sigma_inf >= 0.0) {
            return Err(Error::InvalidProfile(format!(
                "sigma_inf = {} must be finite and nonnegative",
                self.sigma_inf
            )));
        }
        let norm = self.norm();
        if norm > 1.0 {
            return Err(Error::OutsideUnitBall { norm });
        }
        Ok(())
    }
}

/// One admissible configuration of a volume Lambda_n, as a nesting tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Configuration {
    /// Unoccupied single site (level 0 only).
    EmptySite,
    /// The whole subvolume is one block of this level.
    Occupied { level: u32 },
    /// The subvolume splits into its 2^d children.
    Split {
        level: u32,
        children: Vec<Configuration>,
    },
}

impl Configuration {
    /// Adds this tree's block counts into `counts[j]`.
    pub fn tally_blocks(&self, counts: &mut [u64]) {
        match self {
            Configuration::EmptySite => {}
            Configuration::Occupied { level } => counts[*level as usize] += 1,
            Configuration::Split { children, .. } => {
                for c in children {
                    c.tally_blocks(counts);
                }
            }
        }
    }

    /// Level of the block covering the corner site, if any.
    ///
    /// The corner site sits in child 0 at every split, so the indicator
    /// "the admissible j-block at the corner is present" is exactly
    /// `corner_cover_level() == Some(j)`.
    pub fn corner_cover_level(&self) -> Option<u32> {
        match self {
            Configuration::EmptySite => None,
            Configuration::Occupied { level } => Some(*level),
            Configuration::Split { children, .. } => children[0].corner_cover_level(),
        }
    }
}
