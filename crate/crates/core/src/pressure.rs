//! Infinite-volume pressure via the effective-activity recursion.
//!
//! The partition function of Lambda_n obeys Xi_n = z_n + Xi_{n-1}^m, which
//! rewrites as Xi_n = (1 + zhat_n) Xi_{n-1}^m with the effective activity
//! zhat_j = z_j exp(-|B_j| p_{j-1}) discounting the volume to smaller
//! blocks. The pressure is the absolutely convergent (or divergent, in the
//! condensed regime) series p = sum_j log(1 + zhat_j) / |B_j|.

use serde::Serialize;

use crate::error::Result;
use crate::model::{ActivityModel, ModelConfig};
use crate::numeric::{geometric_tail, log_add_exp, softplus, KahanSum};

/// Qualitative behavior of the effective-activity sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// sum_j zhat_j converges: gas phase, all densities positive.
    Summable,
    /// sum_j zhat_j diverges: condensed phase, p = theta_star exactly.
    Divergent,
    /// The window is too short to decide.
    Undetermined,
}

/// Effective activities and running partial pressures, one entry per level.
#[derive(Clone, Debug)]
pub struct EffectiveActivities {
    pub log_zhat: Vec<f64>,
    /// p_partial[j] = sum_{k<=j} log(1 + zhat_k) / |B_k|.
    pub p_partial: Vec<f64>,
}

impl EffectiveActivities {
    pub fn zhat(&self) -> Vec<f64> {
        self.log_zhat.iter().map(|&l| l.exp()).collect()
    }

    /// Pressure terms t_j = log(1 + zhat_j) / |B_j|.
    pub fn terms(&self, model: &ModelConfig) -> Result<Vec<f64>> {
        self.log_zhat
            .iter()
            .enumerate()
            .map(|(j, &l)| Ok(softplus(l) / model.volume(j as u32)?))
            .collect()
    }
}

/// Runs the recursion through `max_level`, stopping early only when the
/// series has terminated exactly (zero terms past the explicit prefix).
pub fn effective_activities(model: &ModelConfig, max_level: u32) -> Result<EffectiveActivities> {
    model.validate()?;
    let mut log_zhat = Vec::new();
    let mut p_partial = Vec::new();
    let mut p = KahanSum::new();
    for j in 0..=max_level {
        let vol = model.volume(j)?;
        let lz = model.log_activity(j)?;
        let lzh = if lz == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            lz - vol * p.value()
        };
        let term = softplus(lzh) / vol;
        log_zhat.push(lzh);
        p.add(term);
        p_partial.push(p.value());
        // past the explicit data the terms are monotone; a zero is final
        if term == 0.0 && j as usize >= model.prefix_len() {
            break;
        }
    }
    Ok(EffectiveActivities {
        log_zhat,
        p_partial,
    })
}

/// Full pressure solve.
#[derive(Clone, Debug, Serialize)]
pub struct PressureReport {
    #[serde(with = "crate::model::f64_json")]
    pub p: f64,
    #[serde(rename = "N_used")]
    pub n_used: u32,
    pub converged: bool,
    #[serde(rename = "regime_hint")]
    pub regime: Regime,
    #[serde(with = "crate::model::f64_json")]
    pub tail: f64,
    #[serde(with = "crate::model::f64_json")]
    pub theta_star: f64,
    #[serde(with = "crate::model::f64_json::vec")]
    pub zhat: Vec<f64>,
    #[serde(with = "crate::model::f64_json::vec")]
    pub p_partial: Vec<f64>,
}

/// Classifies the regime from the effective-activity window.
///
/// Divergence shows up as a slowly varying tail (ratios near 1) or as
/// outright mass blow-up; summability as a geometric tail with ratio
/// safely below 1/2 or exact termination.
fn classify(model: &ModelConfig, zhat: &[f64]) -> Regime {
    if matches!(model.model, ActivityModel::Table { .. }) {
        return Regime::Summable;
    }
    if zhat.last() == Some(&0.0) {
        return Regime::Summable;
    }
    let mass: f64 = zhat.iter().sum();
    if mass > 1e3 {
        return Regime::Divergent;
    }
    if zhat.len() >= 8 {
        let w = &zhat[zhat.len() - 8..];
        // condensed tails settle at 1/(x_minus - 1) >= m - 1 >= 1; late
        // rounding noise in |B_j| (mu - p) wobbles the ratios, so a floor
        // well under that limit is the sturdier test
        if w.iter().all(|&x| x >= 0.5) {
            return Regime::Divergent;
        }
        let all_live = w.iter().all(|&x| x >= 1e-6);
        let min_ratio = w
            .windows(2)
            .map(|p| p[1] / p[0])
            .fold(f64::INFINITY, f64::min);
        if all_live && min_ratio >= 0.98 {
            return Regime::Divergent;
        }
    }
    if geometric_tail(zhat, 0.5).is_some() {
        return Regime::Summable;
    }
    Regime::Undetermined
}

pub fn pressure(model: &ModelConfig, max_level: u32, tol: f64) -> Result<PressureReport> {
    let eff = effective_activities(model, max_level)?;
    let zhat = eff.zhat();
    let terms = eff.terms(model)?;
    let n_used = eff.log_zhat.len() as u32;
    let partial = *eff.p_partial.last().unwrap();
    let regime = classify(model, &zhat);
    let theta_star = model.stability(n_used.saturating_sub(1))?.theta_star;
    let (p, tail, converged) = match regime {
        Regime::Divergent => {
            // condensed phase: the series limit is theta_star exactly
            (theta_star, theta_star - partial, true)
        }
        Regime::Summable | Regime::Undetermined => {
            let tail = geometric_tail(&terms, 0.9).unwrap_or(0.0);
            let p = partial + tail;
            let last = *terms.last().unwrap();
            let ok = regime == Regime::Summable && last <= tol * p.abs().max(1.0);
            (p, tail, ok)
        }
    };
    Ok(PressureReport {
        p,
        n_used,
        converged,
        regime,
        tail,
        theta_star,
        zhat,
        p_partial: eff.p_partial,
    })
}

/// Exact finite-volume log partition function by the recursion
/// log Xi_n = logaddexp(log z_n, m log Xi_{n-1}).
pub fn finite_volume_log_partition(model: &ModelConfig, n: u32) -> Result<f64> {
    model.validate()?;
    let m = model.m() as f64;
    let mut log_xi = softplus(model.log_activity(0)?);
    for k in 1..=n {
        log_xi = log_add_exp(model.log_activity(k)?, m * log_xi);
    }
    Ok(log_xi)
}

/// Finite-volume pressure log(Xi_n) / |Lambda_n|.
pub fn finite_volume_pressure(model: &ModelConfig, n: u32) -> Result<f64> {
    Ok(finite_volume_log_partition(model, n)? / model.volume(n)?)
}

/// Finite-volume block densities rho_{j,n} = P(a fixed j-block is present),
/// computed from the same effective activities:
/// rho_{j,n} = zhat_j * prod_{k=j}^{n} (1 + zhat_k)^{-1}.
pub fn finite_volume_densities(model: &ModelConfig, n: u32) -> Result<Vec<f64>> {
    let eff = effective_activities(model, n)?;
    let levels = n as usize + 1;
    let mut lzh = eff.log_zhat.clone();
    lzh.resize(levels, f64::NEG_INFINITY);
    let mut rho = vec![0.0; levels];
    // suffix[j] = sum_{k=j}^{n} log(1 + zhat_k), accumulated backward
    let mut suffix = KahanSum::new();
    for j in (0..levels).rev() {
        suffix.add(softplus(lzh[j]));
        rho[j] = (lzh[j] - suffix.value()).exp();
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomer_pressure_is_log2() {
        let m = ModelConfig::table(1, vec![1.0]);
        let r = pressure(&m, 48, 1e-10).unwrap();
        assert!((r.p - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(r.converged);
        assert_eq!(r.regime, Regime::Summable);
    }

    #[test]
    fn finite_volume_matches_series_identity() {
        // log Xi_n = |Lambda_n| * p_n by construction; the two code paths
        // must agree to rounding
        let m = ModelConfig::table(1, vec![1.0, 1.0, 1.0, 1.0, 1.0]);
        for n in 0..=4u32 {
            let lx = finite_volume_log_partition(&m, n).unwrap();
            let eff = effective_activities(&m, n).unwrap();
            let pn = eff.p_partial[n as usize];
            let vol = m.volume(n).unwrap();
            assert!((lx - vol * pn).abs() < 1e-12 * lx.abs().max(1.0), "n={n}");
        }
    }

    #[test]
    fn unit_activities_d1_reference() {
        // Xi: 2, 5, 26, 677, 458330
        let m = ModelConfig::table(1, vec![1.0; 5]);
        let expect = [2.0f64, 5.0, 26.0, 677.0, 458330.0];
        for (n, &xi) in expect.iter().enumerate() {
            let lx = finite_volume_log_partition(&m, n as u32).unwrap();
            assert!((lx - xi.ln()).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn finite_densities_d1_n1_unit() {
        let m = ModelConfig::table(1, vec![1.0, 1.0]);
        let rho = finite_volume_densities(&m, 1).unwrap();
        assert!((rho[0] - 0.4).abs() < 1e-15);
        assert!((rho[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn divergent_const_energy_reports_theta_star() {
        // lambda = log(16/3), mu = 5 is deep in the condensed phase
        let m = ModelConfig::const_energy(1, (16.0f64 / 3.0).ln(), 5.0);
        let r = pressure(&m, 48, 1e-10).unwrap();
        assert_eq!(r.regime, Regime::Divergent);
        assert_eq!(r.p, 5.0);
        // the partial sums approach theta_star from below
        let last = *r.p_partial.last().unwrap();
        assert!(last < 5.0 && last > 5.0 - 1e-6);
    }

    #[test]
    fn gas_const_energy_is_summable() {
        let m = ModelConfig::const_energy(1, (16.0f64 / 3.0).ln(), 0.0);
        let r = pressure(&m, 48, 1e-10).unwrap();
        assert_eq!(r.regime, Regime::Summable);
        assert!(r.converged);
        assert!(r.p > 0.0 && r.p < 0.5);
        // gas side: pressure exceeds the condensed candidate theta_star = mu
        assert!(r.p > r.theta_star);
    }

    #[test]
    fn table_terminates_early() {
        let m = ModelConfig::table(1, vec![2.0]);
        let r = pressure(&m, 48, 1e-10).unwrap();
        assert!((r.p - 3.0f64.ln()).abs() < 1e-15);
        assert!(r.n_used <= 2);
    }

    #[test]
    fn forbidden_level_inside_energy_prefix_is_not_terminal() {
        // E_1 = +inf silences level 1 only; level 2 still contributes
        let m = ModelConfig::energy(1, vec![0.0, f64::INFINITY, 0.5], 1.0, 0.25);
        let eff = effective_activities(&m, 6).unwrap();
        assert_eq!(eff.log_zhat[1], f64::NEG_INFINITY);
        assert!(eff.log_zhat[2].is_finite());
    }
}
