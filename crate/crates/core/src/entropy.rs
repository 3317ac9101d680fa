//! Entropy of a block density profile, chemical potentials, free energy,
//! and the variational (Legendre) objective.
//!
//! With sigma_j = sum_{k>=j} rho_k + sigma_inf and the complement ladder
//! c_j = 1 - sigma_j, the per-site entropy is
//!   s = sum_j [ -rho_j log rho_j + c_{j+1} log c_{j+1} - c_j log c_j ] / |B_j|,
//! equivalently a weighted sum of Bernoulli entropies of the conditional
//! occupation ratios rhohat_j = rho_j / c_{j+1}. Conventions 0 log 0 = 0
//! and 0 log(0/0) = 0 apply throughout.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ActivityModel, ModelConfig, Profile};
use crate::numeric::{block_volume, KahanSum};

fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Bernoulli entropy h(x) = -x ln x - (1-x) ln(1-x).
pub fn bernoulli_entropy(x: f64) -> f64 {
    -xlnx(x) - xlnx(1.0 - x)
}

/// Complement ladder c_j = 1 - sigma_j for j = 0..=n+1, clamped at zero.
///
/// Built backward from c_{n+1} = 1 - sigma_inf so each c_j sees the same
/// rounding as its suffix and the ratios c_j / c_{j+1} stay in [0, 1].
fn complement_ladder(profile: &Profile) -> Vec<f64> {
    let n = profile.rho.len();
    let mut c = vec![0.0; n + 1];
    let mut acc = KahanSum::new();
    acc.add(profile.sigma_inf);
    c[n] = (1.0 - acc.value()).max(0.0);
    for j in (0..n).rev() {
        acc.add(profile.rho[j]);
        c[j] = (1.0 - acc.value()).max(0.0);
    }
    c
}

/// Entropy in the sigma form.
pub fn entropy_sigma(profile: &Profile) -> Result<f64> {
    profile.validate()?;
    let c = complement_ladder(profile);
    let mut s = KahanSum::new();
    for (j, &r) in profile.rho.iter().enumerate() {
        let vol = block_volume(profile.d, j as u32)?;
        s.add((-xlnx(r) + xlnx(c[j + 1]) - xlnx(c[j])) / vol);
    }
    Ok(s.value())
}

/// Entropy in the hat form: s = sum_j c_{j+1} h(rhohat_j) / |B_j|.
pub fn entropy_hat(profile: &Profile) -> Result<f64> {
    profile.validate()?;
    let c = complement_ladder(profile);
    let mut s = KahanSum::new();
    for (j, &r) in profile.rho.iter().enumerate() {
        let vol = block_volume(profile.d, j as u32)?;
        if c[j + 1] == 0.0 {
            // all volume is packed above this level; nothing to choose
            continue;
        }
        let rhat = r / c[j + 1];
        let one_minus = c[j] / c[j + 1];
        s.add(c[j + 1] * (-xlnx(rhat) - xlnx(one_minus)) / vol);
    }
    Ok(s.value())
}

/// Upper bound sum_j c_{j+1} log 2 / |B_j| on the entropy.
pub fn entropy_upper_bound(profile: &Profile) -> Result<f64> {
    let c = complement_ladder(profile);
    let mut s = KahanSum::new();
    for j in 0..profile.rho.len() {
        let vol = block_volume(profile.d, j as u32)?;
        s.add(c[j + 1] * std::f64::consts::LN_2 / vol);
    }
    Ok(s.value())
}

/// Interaction series Phi truncated at power M, with its tail bound.
///
/// Phi_M = sum_{m=2}^{M} 1/(m(m-1)) sum_j (sigma_j^m - sigma_{j+1}^m)/|B_j|;
/// the remainder is below norm^{M+1} / (1 - norm) for norm = sigma_0 < 1.
pub fn phi_series(profile: &Profile, m_max: u32) -> Result<(f64, f64)> {
    profile.validate()?;
    let c = complement_ladder(profile);
    let sigma: Vec<f64> = c.iter().map(|&x| 1.0 - x).collect();
    let n = profile.rho.len();
    let vols: Vec<f64> = (0..n)
        .map(|j| block_volume(profile.d, j as u32))
        .collect::<Result<_>>()?;
    let mut phi = KahanSum::new();
    let mut pow: Vec<f64> = sigma.clone();
    for m in 2..=m_max {
        for p in pow.iter_mut().zip(&sigma) {
            *p.0 *= *p.1;
        }
        let coeff = 1.0 / (m as f64 * (m as f64 - 1.0));
        let mut inner = KahanSum::new();
        for j in 0..n {
            inner.add((pow[j] - pow[j + 1]) / vols[j]);
        }
        phi.add(coeff * inner.value());
    }
    let norm = sigma[0];
    let tail = if norm < 1.0 {
        norm.powi(m_max as i32 + 1) / (1.0 - norm)
    } else {
        f64::INFINITY
    };
    Ok((phi.value(), tail))
}

/// Chemical potentials dual to the profile.
///
/// mu_j = log(rhohat_j / (1 - rhohat_j)) - |B_j| sum_{k<j} log(1 - rhohat_k)/|B_k|,
/// and mu_inf = -sum_j log(1 - rhohat_j)/|B_j|. At an equilibrium profile
/// these equal log z_j and the pressure.
pub fn chemical_potentials(profile: &Profile) -> Result<(Vec<f64>, f64)> {
    profile.validate()?;
    let c = complement_ladder(profile);
    let n = profile.rho.len();
    let mut mu = Vec::with_capacity(n);
    let mut prefix = KahanSum::new();
    for j in 0..n {
        let vol = block_volume(profile.d, j as u32)?;
        let r = profile.rho[j];
        // absent species pin mu_j = -inf; a saturated ladder pins +inf
        let mu_j = if r == 0.0 {
            f64::NEG_INFINITY
        } else if c[j] == 0.0 {
            f64::INFINITY
        } else {
            r.ln() - c[j].ln() - vol * prefix.value()
        };
        mu.push(mu_j);
        // log(1 - rhohat_j) = log(c_j / c_{j+1})
        let log_1m = if c[j + 1] == 0.0 {
            0.0
        } else {
            (c[j] / c[j + 1]).ln()
        };
        prefix.add(log_1m / vol);
    }
    Ok((mu, -prefix.value()))
}

/// Energy per site of the profile under the model, sum_j nu_j E_j + sigma_inf e_inf.
fn energy_density(profile: &Profile, model: &ModelConfig) -> Result<f64> {
    if profile.d != model.d {
        return Err(Error::InvalidProfile(format!(
            "profile dimension {} does not match model dimension {}",
            profile.d, model.d
        )));
    }
    let mut en = KahanSum::new();
    match &model.model {
        ActivityModel::Table { z } => {
            if profile.sigma_inf > 0.0 {
                return Err(Error::EnergyModelRequired);
            }
            for (j, &r) in profile.rho.iter().enumerate() {
                if r == 0.0 {
                    continue;
                }
                let vol = block_volume(profile.d, j as u32)?;
                let zj = z.get(j).copied().unwrap_or(0.0);
                // gauge E_j = -log z_j; forbidden levels carry +inf energy
                en.add(r * -zj.ln() / vol);
            }
        }
        _ => {
            for (j, &r) in profile.rho.iter().enumerate() {
                if r == 0.0 {
                    continue;
                }
                let vol = block_volume(profile.d, j as u32)?;
                en.add(r * model.energy_at(j as u32)? / vol);
            }
            en.add(profile.sigma_inf * model.e_inf()?);
        }
    }
    Ok(en.value())
}

/// Helmholtz free energy per site f = energy - entropy.
pub fn free_energy(profile: &Profile, model: &ModelConfig) -> Result<f64> {
    Ok(energy_density(profile, model)? - entropy_sigma(profile)?)
}

/// Variational objective J = sum_j rho_j log z_j / |B_j| + sigma_inf theta_star + s.
///
/// The pressure is its supremum over valid profiles, attained at the
/// equilibrium densities. A finite table cannot weigh macroscopic mass.
pub fn legendre_objective(profile: &Profile, model: &ModelConfig) -> Result<f64> {
    profile.validate()?;
    if profile.d != model.d {
        return Err(Error::InvalidProfile(format!(
            "profile dimension {} does not match model dimension {}",
            profile.d, model.d
        )));
    }
    if profile.sigma_inf > 0.0 && matches!(model.model, ActivityModel::Table { .. }) {
        return Err(Error::EnergyModelRequired);
    }
    let mut j_obj = KahanSum::new();
    for (j, &r) in profile.rho.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        let vol = block_volume(profile.d, j as u32)?;
        let lz = model.log_activity(j as u32)?;
        if lz == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        j_obj.add(r * lz / vol);
    }
    if profile.sigma_inf > 0.0 {
        let levels = profile.rho.len().max(8) as u32;
        j_obj.add(profile.sigma_inf * model.stability(levels)?.theta_star);
    }
    j_obj.add(entropy_sigma(profile)?);
    Ok(j_obj.value())
}

/// Everything the entropy pipeline knows about a profile.
#[derive(Clone, Debug, Serialize)]
pub struct EntropyReport {
    /// Entropy, sigma form.
    #[serde(with = "crate::model::f64_json")]
    pub s: f64,
    /// Entropy, Bernoulli (hat) form; equals `s` up to rounding.
    #[serde(with = "crate::model::f64_json")]
    pub s_ber: f64,
    /// Interaction series Phi at the default truncation.
    #[serde(with = "crate::model::f64_json")]
    pub phi: f64,
    /// Geometric bound on the Phi truncation error.
    #[serde(with = "crate::model::f64_json")]
    pub tail_bound: f64,
    /// Level chemical potentials; saturated levels are infinite.
    #[serde(with = "crate::model::f64_json::vec")]
    pub mu: Vec<f64>,
    #[serde(with = "crate::model::f64_json")]
    pub mu_inf: f64,
    /// Free energy per site, when an energy model is supplied.
    #[serde(with = "crate::model::f64_json::opt")]
    pub f: Option<f64>,
}

pub const PHI_DEFAULT_ORDER: u32 = 60;

pub fn entropy_report(profile: &Profile, model: Option<&ModelConfig>) -> Result<EntropyReport> {
    let s = entropy_sigma(profile)?;
    let s_ber = entropy_hat(profile)?;
    let (phi, tail_bound) = phi_series(profile, PHI_DEFAULT_ORDER)?;
    let (mu, mu_inf) = chemical_potentials(profile)?;
    let f = match model {
        Some(m) => Some(free_energy(profile, m)?),
        None => None,
    };
    Ok(EntropyReport {
        s,
        s_ber,
        phi,
        tail_bound,
        mu,
        mu_inf,
        f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile_a() -> Profile {
        Profile::new(1, vec![0.3, 0.1, 0.05], 0.1)
    }

    #[test]
    fn forms_agree() {
        let p = profile_a();
        let a = entropy_sigma(&p).unwrap();
        let b = entropy_hat(&p).unwrap();
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        assert!(a > 0.0);
    }

    #[test]
    fn entropy_bounds() {
        let p = profile_a();
        let s = entropy_sigma(&p).unwrap();
        let ub = entropy_upper_bound(&p).unwrap();
        assert!(s >= 0.0 && s <= ub);
    }

    #[test]
    fn empty_and_full_have_zero_entropy() {
        let empty = Profile::new(1, vec![0.0, 0.0], 0.0);
        assert_eq!(entropy_sigma(&empty).unwrap(), 0.0);
        let full = Profile::new(1, vec![1.0], 0.0);
        assert_eq!(entropy_sigma(&full).unwrap(), 0.0);
        let frozen = Profile::new(1, vec![0.0], 1.0);
        assert_eq!(entropy_sigma(&frozen).unwrap(), 0.0);
    }

    #[test]
    fn monomer_entropy_is_bernoulli() {
        let p = Profile::new(1, vec![0.25], 0.0);
        let s = entropy_sigma(&p).unwrap();
        assert!((s - bernoulli_entropy(0.25)).abs() < 1e-15);
    }

    #[test]
    fn analyticity_identity_within_tail() {
        let p = profile_a();
        let s = entropy_sigma(&p).unwrap();
        let (phi, tail) = phi_series(&p, 60).unwrap();
        let mut lin = KahanSum::new();
        for (j, &r) in p.rho.iter().enumerate() {
            let vol = block_volume(1, j as u32).unwrap();
            if r > 0.0 {
                lin.add(-r * (r.ln() - 1.0) / vol);
            }
        }
        // macroscopic mass enters only through the sigma powers inside Phi
        let rhs = lin.value() - phi;
        assert!((s - rhs).abs() <= tail + 1e-13, "{s} vs {rhs}, tail {tail}");
    }

    #[test]
    fn scaling_identity() {
        let p = profile_a();
        let scale = 1.0 - p.sigma_inf;
        let scaled = Profile::new(1, p.rho.iter().map(|r| r / scale).collect(), 0.0);
        let s = entropy_sigma(&p).unwrap();
        let s_scaled = entropy_sigma(&scaled).unwrap();
        assert!((s - scale * s_scaled).abs() < 1e-14);
    }

    #[test]
    fn legendre_table_with_macroscopic_mass_rejected() {
        let m = ModelConfig::table(1, vec![1.0]);
        let p = Profile::new(1, vec![0.1], 0.3);
        assert!(matches!(
            legendre_objective(&p, &m),
            Err(Error::EnergyModelRequired)
        ));
    }

    #[test]
    fn duality_on_equilibrium_profile() {
        let m = ModelConfig::table(1, vec![0.8, 0.6]);
        let d = crate::density::densities(&m, 32, 1e-12).unwrap();
        let profile = Profile::new(1, d.rho, 0.0);
        let (mu, mu_inf) = chemical_potentials(&profile).unwrap();
        assert!((mu[0] - 0.8f64.ln()).abs() < 1e-12);
        assert!((mu[1] - 0.6f64.ln()).abs() < 1e-12);
        let p = crate::pressure::pressure(&m, 32, 1e-12).unwrap().p;
        assert!((mu_inf - p).abs() < 1e-12);
    }
}
