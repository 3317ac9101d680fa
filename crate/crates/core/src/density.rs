//! Infinite-volume block densities and their inversion.
//!
//! In the gas regime the coverage fractions are
//! rho_j = zhat_j * prod_{k>=j} (1 + zhat_k)^{-1}, and the map z -> rho is
//! a bijection onto profiles with free volume: zhat_j = rho_j / (1 - T_j)
//! with T_j = sum_{k>=j} rho_k, then z_j = zhat_j exp(|B_j| p_{j-1}).
//! In the condensed regime every finite-block density vanishes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Profile};
use crate::numeric::{geometric_tail, KahanSum};
use crate::pressure::{pressure, Regime};

/// Free volume below which a profile counts as saturated.
pub const SATURATION_EPS: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct DensityReport {
    /// rho[j]: fraction of sites covered by j-blocks.
    #[serde(with = "crate::model::f64_json::vec")]
    pub rho: Vec<f64>,
    /// nu[j] = rho[j] / |B_j|: number of j-blocks per site.
    #[serde(with = "crate::model::f64_json::vec")]
    pub nu: Vec<f64>,
    /// Total covered fraction including the macroscopic part.
    #[serde(with = "crate::model::f64_json")]
    pub sigma: f64,
    /// Fraction lost to infinite blocks (1 in the condensed regime).
    #[serde(with = "crate::model::f64_json")]
    pub sigma_inf: f64,
    #[serde(rename = "regime_hint")]
    pub regime: Regime,
    #[serde(with = "crate::model::f64_json::vec")]
    pub zhat: Vec<f64>,
}

pub fn densities(model: &ModelConfig, max_level: u32, tol: f64) -> Result<DensityReport> {
    let pr = pressure(model, max_level, tol)?;
    let levels = pr.zhat.len();
    if pr.regime == Regime::Divergent {
        return Ok(DensityReport {
            rho: vec![0.0; levels],
            nu: vec![0.0; levels],
            sigma: 1.0,
            sigma_inf: 1.0,
            regime: pr.regime,
            zhat: pr.zhat,
        });
    }
    // w_j = log(1 + zhat_j); the suffix sums need the tail beyond the window
    let w: Vec<f64> = pr.zhat.iter().map(|&z| z.ln_1p()).collect();
    let w_tail = geometric_tail(&w, 0.9).unwrap_or(0.0);
    let mut suffix = KahanSum::new();
    suffix.add(w_tail);
    let mut rho = vec![0.0; levels];
    for j in (0..levels).rev() {
        suffix.add(w[j]);
        let lzh = if pr.zhat[j] == 0.0 {
            f64::NEG_INFINITY
        } else {
            pr.zhat[j].ln()
        };
        rho[j] = (lzh - suffix.value()).exp();
    }
    let sigma = -(-suffix.value()).exp_m1();
    let mut nu = Vec::with_capacity(levels);
    for (j, &r) in rho.iter().enumerate() {
        nu.push(r / model.volume(j as u32)?);
    }
    Ok(DensityReport {
        rho,
        nu,
        sigma,
        sigma_inf: 0.0,
        regime: pr.regime,
        zhat: pr.zhat,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InversionReport {
    #[serde(with = "crate::model::f64_json::vec")]
    pub zhat: Vec<f64>,
    #[serde(with = "crate::model::f64_json::vec")]
    pub z: Vec<f64>,
    /// Pressure of the recovered activity system (the equation of state).
    #[serde(with = "crate::model::f64_json")]
    pub p: f64,
}

/// Recovers the activity system whose gas densities match the profile.
///
/// The profile must carry no macroscopic mass and leave positive free
/// volume; at free volume below `SATURATION_EPS` the map degenerates.
pub fn invert(profile: &Profile) -> Result<InversionReport> {
    profile.validate()?;
    if profile.sigma_inf != 0.0 {
        return Err(Error::InvalidProfile(
            "inversion requires sigma_inf = 0".into(),
        ));
    }
    let n = profile.rho.len();
    // T_j = sum_{k>=j} rho_k by backward compensated accumulation
    let mut t = vec![0.0; n + 1];
    let mut acc = KahanSum::new();
    for j in (0..n).rev() {
        acc.add(profile.rho[j]);
        t[j] = acc.value();
    }
    let free = 1.0 - t.first().copied().unwrap_or(0.0);
    if free < SATURATION_EPS {
        return Err(Error::Saturated { free });
    }
    let mut zhat = Vec::with_capacity(n);
    for j in 0..n {
        let denom = 1.0 - t[j];
        zhat.push(profile.rho[j] / denom);
    }
    // z_j = zhat_j exp(|B_j| p_{j-1}); the series terminates with the profile
    let mut z = Vec::with_capacity(n);
    let mut p = KahanSum::new();
    for j in 0..n {
        let vol = crate::numeric::block_volume(profile.d, j as u32)?;
        // rho_j = 0 pins z_j = 0; the bare product would be 0 * inf once
        // |B_j| p overflows the exponential
        z.push(if zhat[j] == 0.0 {
            0.0
        } else {
            zhat[j] * (vol * p.value()).exp()
        });
        p.add(zhat[j].ln_1p() / vol);
    }
    Ok(InversionReport {
        zhat,
        z,
        p: p.value(),
    })
}

/// Pressure as a function of the density profile alone.
pub fn equation_of_state(profile: &Profile) -> Result<f64> {
    Ok(invert(profile)?.p)
}
