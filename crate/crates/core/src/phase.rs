//! Phase structure of parametric models: absence certificates, the
//! constant-energy bifurcation, the first-order fixed-point pipeline, and
//! a numeric scan for the critical chemical potential.
//!
//! The inverse single-block probability v_n = Xi_n / z_n obeys
//! v_n = 1 + eps_n v_{n-1}^m with eps_n = z_{n-1}^m / z_n. Bounded v means
//! a positive probability that the whole volume is one block (condensed);
//! divergent v means the gas wins. The scalar map x -> 1 + eps x^m has
//! fixed points iff eps <= c_d = (m-1)^(m-1)/m^m.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ActivityModel, ModelConfig};
use crate::numeric::{block_volume, geometric_tail, softplus, KahanSum};
use crate::pressure::effective_activities;

/// Tangency constant c_d = (m-1)^(m-1) / m^m, exact for d <= 3.
///
/// m^m is a power of two, so the division is exact scaling whenever the
/// numerator is exactly representable; beyond that the log form takes over.
pub fn tangency_constant(d: u32) -> f64 {
    let m = 1u64 << d;
    let numer_bits = (m - 1) as f64 * ((m - 1) as f64).log2();
    if numer_bits < 52.0 {
        let numer = ((m - 1) as f64).powi(m as i32 - 1);
        let dm = d as u64 * m;
        numer * (-(dm as f64)).exp2()
    } else {
        let mf = m as f64;
        ((mf - 1.0) * (mf - 1.0).ln() - mf * mf.ln()).exp()
    }
}

/// Maximum of (x-1)/x^m over x >= 1 located by ternary search; equals
/// `tangency_constant` up to rounding and exists as an independent check.
pub fn tangency_constant_numeric(d: u32) -> f64 {
    let m = (1u64 << d) as i32;
    let g = |x: f64| (x - 1.0) / x.powi(m);
    let (mut lo, mut hi) = (1.0f64, 4.0f64);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if g(a) < g(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    g(0.5 * (lo + hi))
}

/// Critical energy per block lambda_d = -log(c_d) / (m-1).
pub fn critical_lambda(d: u32) -> f64 {
    let m = (1u64 << d) as f64;
    -tangency_constant(d).ln() / (m - 1.0)
}

/// The two fixed points of x -> 1 + eps x^m on [1, inf).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FixedPoints {
    #[serde(with = "crate::model::f64_json")]
    pub x_minus: f64,
    #[serde(with = "crate::model::f64_json")]
    pub x_plus: f64,
}

/// Tolerance around c_d treated as the tangent (double-root) case.
pub const TANGENT_EPS: f64 = 1e-14;

/// Solves x = 1 + eps x^m exactly to the ulp.
///
/// Newton from both sides converges monotonically; a final one-ulp snap
/// minimizes |g| so that exactly representable roots are hit exactly.
pub fn fixed_points(d: u32, eps: f64) -> Result<FixedPoints> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidModel(format!("eps = {eps} must be positive")));
    }
    let c_d = tangency_constant(d);
    if (eps - c_d).abs() < TANGENT_EPS {
        return Err(Error::Tangent { eps, c_d });
    }
    if eps > c_d {
        return Err(Error::NoFixedPoints { eps, c_d });
    }
    let m = (1u64 << d) as i32;
    let g = |x: f64| 1.0 + eps * x.powi(m) - x;
    let dg = |x: f64| eps * m as f64 * x.powi(m - 1) - 1.0;
    let newton = |mut x: f64| {
        for _ in 0..200 {
            let gx = g(x);
            if gx == 0.0 {
                break;
            }
            let step = gx / dg(x);
            let next = x - step;
            if next == x {
                break;
            }
            x = next;
        }
        // snap to the neighbor with the smallest residual
        let candidates = [x.next_down(), x, x.next_up()];
        candidates
            .into_iter()
            .min_by(|a, b| g(*a).abs().partial_cmp(&g(*b).abs()).unwrap())
            .unwrap()
    };
    let x_minus = newton(1.0);
    // x_+ < (1/eps)^(1/(m-1)) since eps x^m = x - 1 < x there
    let x_ub = (1.0 / eps).powf(1.0 / (m as f64 - 1.0)) + 1.0;
    let x_plus = newton(x_ub);
    Ok(FixedPoints { x_minus, x_plus })
}

/// Trajectory of log v_n under log v_n = softplus(log eps_n + m log v_{n-1}).
#[derive(Clone, Debug)]
pub struct VIteration {
    pub log_v: Vec<f64>,
    /// First level at which log v passed the blow-up threshold.
    pub diverged_at: Option<u32>,
}

/// log v beyond which the trajectory counts as divergent.
const LOG_V_BLOWUP: f64 = 700.0;

pub fn v_iteration(model: &ModelConfig, n_max: u32) -> Result<VIteration> {
    model.validate()?;
    let m = model.m() as f64;
    let mut log_v = Vec::with_capacity(n_max as usize + 1);
    let mut lv = softplus(model.energy_at(0)? - model.mu()?);
    log_v.push(lv);
    let mut diverged_at = None;
    for n in 1..=n_max {
        if lv >= LOG_V_BLOWUP {
            diverged_at = Some(n - 1);
            break;
        }
        lv = softplus(model.log_eps_at(n)? + m * lv);
        log_v.push(lv);
    }
    if diverged_at.is_none() && lv >= LOG_V_BLOWUP {
        diverged_at = Some(log_v.len() as u32 - 1);
    }
    Ok(VIteration { log_v, diverged_at })
}

/// eps_j for j = 1..=n_max.
pub fn eps_sequence(model: &ModelConfig, n_max: u32) -> Result<Vec<f64>> {
    (1..=n_max).map(|j| model.eps_at(j)).collect()
}

/// Liminf certificate: eps_j > c_d uniformly excludes condensation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AbsenceCert {
    pub holds: bool,
    #[serde(with = "crate::model::f64_json")]
    pub min_eps: f64,
    #[serde(with = "crate::model::f64_json")]
    pub c_d: f64,
    #[serde(with = "crate::model::f64_json")]
    pub margin: f64,
}

/// Safety margin required of min eps_j over c_d.
pub const ABSENCE_MARGIN: f64 = 1e-9;

pub fn absence_certificate(model: &ModelConfig, levels: u32) -> Result<AbsenceCert> {
    let c_d = tangency_constant(model.d);
    let mut min_eps = f64::INFINITY;
    for j in 1..=levels.max(1) {
        let e = model.eps_at(j)?;
        if e < min_eps {
            min_eps = e;
        }
    }
    let margin = min_eps - c_d;
    Ok(AbsenceCert {
        holds: margin > ABSENCE_MARGIN,
        min_eps,
        c_d,
        margin,
    })
}

/// Existence certificate for the first-order fixed point: sum_j u_j <= 1/e.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SumUjCert {
    pub holds: bool,
    #[serde(with = "crate::model::f64_json")]
    pub sum: f64,
    /// Geometric tail added to the explicit prefix; infinite if no fit.
    #[serde(with = "crate::model::f64_json")]
    pub tail: f64,
    #[serde(with = "crate::model::f64_json")]
    pub bound: f64,
}

pub fn sum_uj_certificate(u: &[f64], tol: f64) -> Result<SumUjCert> {
    if u.is_empty() {
        return Err(Error::InvalidModel("empty u sequence".into()));
    }
    for (j, &x) in u.iter().enumerate() {
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "u[{j}] = {x} must be finite and nonnegative"
            )));
        }
    }
    let mut s = KahanSum::new();
    for &x in u {
        s.add(x);
    }
    let tail = geometric_tail(u, 0.9).unwrap_or(f64::INFINITY);
    let sum = s.value() + tail;
    let bound = (-1.0f64).exp();
    Ok(SumUjCert {
        holds: sum <= bound - tol,
        sum,
        tail,
        bound,
    })
}

/// Solution of zeta_j = u_j exp(|B_j| sum_{k>=j} log(1+zeta_k)/|B_k|).
#[derive(Clone, Debug, Serialize)]
pub struct ZetaSolution {
    #[serde(with = "crate::model::f64_json::vec")]
    pub zeta: Vec<f64>,
    /// Freshly evaluated max residual of the fixed-point equation.
    #[serde(with = "crate::model::f64_json")]
    pub residual: f64,
    pub sweeps: usize,
}

/// Total zeta mass beyond which the iteration is declared divergent; any
/// certified fixed point keeps sum zeta <= e * sum u <= 1.
const ZETA_MASS_CAP: f64 = 1e6;

pub fn zeta_solver(d: u32, u: &[f64], max_sweeps: usize) -> Result<ZetaSolution> {
    let n = u.len();
    if n == 0 {
        return Err(Error::InvalidModel("empty u sequence".into()));
    }
    let vols: Vec<f64> = (0..n)
        .map(|j| block_volume(d, j as u32))
        .collect::<Result<_>>()?;
    let suffix_sums = |zeta: &[f64]| -> Vec<f64> {
        let mut s = vec![0.0; n + 1];
        let mut acc = KahanSum::new();
        for j in (0..n).rev() {
            acc.add(zeta[j].ln_1p() / vols[j]);
            s[j] = acc.value();
        }
        s
    };
    let mut zeta = u.to_vec();
    let mut sweeps = 0;
    for sweep in 1..=max_sweeps {
        sweeps = sweep;
        let s = suffix_sums(&zeta);
        let mut next = Vec::with_capacity(n);
        let mut mass = 0.0;
        for j in 0..n {
            let v = u[j] * (vols[j] * s[j]).exp();
            if !v.is_finite() {
                return Err(Error::Diverging {
                    sweep,
                    mass: f64::INFINITY,
                });
            }
            mass += v;
            next.push(v);
        }
        if mass > ZETA_MASS_CAP {
            return Err(Error::Diverging { sweep, mass });
        }
        let settled = next == zeta;
        zeta = next;
        if settled {
            break;
        }
    }
    let s = suffix_sums(&zeta);
    let mut residual = 0.0f64;
    for j in 0..n {
        let r = (zeta[j] - u[j] * (vols[j] * s[j]).exp()).abs();
        residual = residual.max(r);
    }
    Ok(ZetaSolution {
        zeta,
        residual,
        sweeps,
    })
}

/// First-order transition data extracted from the zeta fixed point.
#[derive(Clone, Debug, Serialize)]
pub struct FirstOrderReport {
    #[serde(with = "crate::model::f64_json")]
    pub mu_c: f64,
    /// Estimated truncation uncertainty of mu_c from the series tail.
    #[serde(with = "crate::model::f64_json")]
    pub mu_c_uncertainty: f64,
    #[serde(with = "crate::model::f64_json")]
    pub sigma_c: f64,
    #[serde(with = "crate::model::f64_json::vec")]
    pub zeta: Vec<f64>,
    /// Gas-side densities at mu_c.
    #[serde(with = "crate::model::f64_json::vec")]
    pub rho_star: Vec<f64>,
    #[serde(with = "crate::model::f64_json")]
    pub residual: f64,
    pub sweeps: usize,
    pub sum_cert: SumUjCert,
    /// max_j |zeta_j - zhat_j(mu_c)| against the pressure recursion.
    #[serde(with = "crate::model::f64_json")]
    pub crosscheck_max_err: f64,
}

pub fn first_order_report(model: &ModelConfig, max_level: u32) -> Result<FirstOrderReport> {
    model.validate()?;
    if matches!(model.model, ActivityModel::ConstEnergy { .. }) {
        return Err(Error::InvalidModel(
            "constant-energy models condense continuously; no zeta fixed point".into(),
        ));
    }
    let prefix = model.prefix_len();
    if prefix == 0 {
        return Err(Error::InvalidModel("energy prefix is empty".into()));
    }
    // u_j beyond the prefix is identically 1 under the e_inf continuation,
    // so the solve is confined to the explicit data
    let top = (prefix - 1).min(max_level as usize);
    let u: Vec<f64> = (0..=top)
        .map(|j| model.u_at(j as u32))
        .collect::<Result<_>>()?;
    let sum_cert = sum_uj_certificate(&u, 0.0)?;
    let sol = zeta_solver(model.d, &u, 100_000)?;
    let n = sol.zeta.len();
    let vols: Vec<f64> = (0..n)
        .map(|j| block_volume(model.d, j as u32))
        .collect::<Result<_>>()?;
    let terms: Vec<f64> = (0..n).map(|j| sol.zeta[j].ln_1p() / vols[j]).collect();
    let mut mu_acc = KahanSum::new();
    for &t in &terms {
        mu_acc.add(t);
    }
    let e_inf = model.e_inf()?;
    let mu_c = e_inf + mu_acc.value();
    let mu_c_uncertainty = geometric_tail(&terms, 0.9).unwrap_or(*terms.last().unwrap());
    // coverage at mu_c approached from the gas side
    let mut cover = KahanSum::new();
    for &z in &sol.zeta {
        cover.add(z.ln_1p());
    }
    let sigma_c = -(-cover.value()).exp_m1();
    // rho*_j = zeta_j prod_{k>=j} (1+zeta_k)^{-1}
    let mut rho_star = vec![0.0; n];
    let mut suf = KahanSum::new();
    for j in (0..n).rev() {
        suf.add(sol.zeta[j].ln_1p());
        rho_star[j] = if sol.zeta[j] == 0.0 {
            0.0
        } else {
            (sol.zeta[j].ln() - suf.value()).exp()
        };
    }
    // independent consistency check through the pressure recursion
    let at_mu_c = model.with_mu(mu_c)?;
    let eff = effective_activities(&at_mu_c, top as u32)?;
    let zhat = eff.zhat();
    let mut crosscheck_max_err = 0.0f64;
    for j in 0..n.min(zhat.len()) {
        crosscheck_max_err = crosscheck_max_err.max((sol.zeta[j] - zhat[j]).abs());
    }
    Ok(FirstOrderReport {
        mu_c,
        mu_c_uncertainty,
        sigma_c,
        zeta: sol.zeta,
        rho_star,
        residual: sol.residual,
        sweeps: sol.sweeps,
        sum_cert,
        crosscheck_max_err,
    })
}

/// Kind of transition in mu.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    NoTransition,
    Continuous,
    FirstOrder,
    Undetermined,
}

/// Evidence backing a phase classification.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    AbsenceLiminf {
        #[serde(with = "crate::model::f64_json")]
        min_eps: f64,
        #[serde(with = "crate::model::f64_json")]
        c_d: f64,
        #[serde(with = "crate::model::f64_json")]
        margin: f64,
    },
    ConstantEnergyFixedPoint {
        #[serde(with = "crate::model::f64_json")]
        eps: f64,
        #[serde(with = "crate::model::f64_json")]
        c_d: f64,
        #[serde(with = "crate::model::f64_json::opt")]
        x_minus: Option<f64>,
        #[serde(with = "crate::model::f64_json::opt")]
        x_plus: Option<f64>,
    },
    ZetaSolver {
        #[serde(with = "crate::model::f64_json")]
        residual: f64,
        sweeps: usize,
        #[serde(with = "crate::model::f64_json")]
        sum_uj: f64,
    },
    SumUjBound {
        #[serde(with = "crate::model::f64_json")]
        sum: f64,
        #[serde(with = "crate::model::f64_json")]
        bound: f64,
    },
    NumericScan {
        #[serde(with = "crate::model::f64_json")]
        mu_lo: f64,
        #[serde(with = "crate::model::f64_json")]
        mu_hi: f64,
        found: bool,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseReport {
    pub kind: TransitionKind,
    #[serde(with = "crate::model::f64_json::opt")]
    pub mu_c: Option<f64>,
    #[serde(with = "crate::model::f64_json::opt")]
    pub sigma_c: Option<f64>,
    pub certificate: Certificate,
}

/// Width around lambda_d inside which the bifurcation is left undecided.
pub const LAMBDA_TOL: f64 = 1e-12;

/// Classification of the constant-energy model E_j = lambda.
///
/// eps = exp(-lambda (m-1)) compares against c_d: above it v always
/// diverges (no transition); below it the unstable fixed point x_+ sets
/// mu_c = lambda - log(x_+ - 1) and the transition is continuous
/// (sigma_c = 1: the gas densities vanish gradually as mu -> mu_c).
pub fn classify_constant_energy(d: u32, lambda: f64) -> Result<PhaseReport> {
    if d == 0 || d > 30 {
        return Err(Error::InvalidModel(format!("dimension d = {d}")));
    }
    let m = (1u64 << d) as f64;
    let c_d = tangency_constant(d);
    let lambda_d = critical_lambda(d);
    let eps = (-lambda * (m - 1.0)).exp();
    if (lambda - lambda_d).abs() < LAMBDA_TOL {
        return Ok(PhaseReport {
            kind: TransitionKind::Undetermined,
            mu_c: None,
            sigma_c: None,
            certificate: Certificate::ConstantEnergyFixedPoint {
                eps,
                c_d,
                x_minus: None,
                x_plus: None,
            },
        });
    }
    if lambda < lambda_d {
        // eps > c_d: no fixed points at any mu
        return Ok(PhaseReport {
            kind: TransitionKind::NoTransition,
            mu_c: None,
            sigma_c: None,
            certificate: Certificate::AbsenceLiminf {
                min_eps: eps,
                c_d,
                margin: eps - c_d,
            },
        });
    }
    let fp = fixed_points(d, eps)?;
    let mu_c = lambda - (fp.x_plus - 1.0).ln();
    Ok(PhaseReport {
        kind: TransitionKind::Continuous,
        mu_c: Some(mu_c),
        sigma_c: Some(1.0),
        certificate: Certificate::ConstantEnergyFixedPoint {
            eps,
            c_d,
            x_minus: Some(fp.x_minus),
            x_plus: Some(fp.x_plus),
        },
    })
}

/// Residual below which the zeta pipeline is quoted as the certificate.
const ZETA_RESIDUAL_GOOD: f64 = 1e-9;

/// Full classification pipeline for a parametric model.
pub fn phase_report(model: &ModelConfig, max_level: u32) -> Result<PhaseReport> {
    model.validate()?;
    match &model.model {
        ActivityModel::Table { .. } => Err(Error::EnergyModelRequired),
        ActivityModel::ConstEnergy { lambda, .. } => classify_constant_energy(model.d, *lambda),
        ActivityModel::Energy { .. } => {
            let levels = (model.prefix_len() as u32 + 2).max(8);
            let cert = absence_certificate(model, levels)?;
            if cert.holds {
                return Ok(PhaseReport {
                    kind: TransitionKind::NoTransition,
                    mu_c: None,
                    sigma_c: None,
                    certificate: Certificate::AbsenceLiminf {
                        min_eps: cert.min_eps,
                        c_d: cert.c_d,
                        margin: cert.margin,
                    },
                });
            }
            let top = (model.prefix_len() - 1).min(max_level as usize);
            let u: Vec<f64> = (0..=top)
                .map(|j| model.u_at(j as u32))
                .collect::<Result<_>>()?;
            let sum_cert = sum_uj_certificate(&u, 0.0)?;
            if sum_cert.holds {
                match first_order_report(model, max_level) {
                    Ok(rep) => {
                        let certificate = if rep.residual <= ZETA_RESIDUAL_GOOD {
                            Certificate::ZetaSolver {
                                residual: rep.residual,
                                sweeps: rep.sweeps,
                                sum_uj: sum_cert.sum,
                            }
                        } else {
                            Certificate::SumUjBound {
                                sum: sum_cert.sum,
                                bound: sum_cert.bound,
                            }
                        };
                        return Ok(PhaseReport {
                            kind: TransitionKind::FirstOrder,
                            mu_c: Some(rep.mu_c),
                            sigma_c: Some(rep.sigma_c),
                            certificate,
                        });
                    }
                    Err(Error::Diverging { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            // fall back to a bisection scan around the tail energy density
            let e_inf = model.e_inf()?;
            let (lo, hi) = (e_inf - 20.0, e_inf + 20.0);
            let mu_c = mu_c_scan(model, lo, hi, 400, 1e-7)?;
            let found = mu_c.is_finite();
            Ok(PhaseReport {
                kind: TransitionKind::Undetermined,
                mu_c: found.then_some(mu_c),
                sigma_c: None,
                certificate: Certificate::NumericScan {
                    mu_lo: lo,
                    mu_hi: hi,
                    found,
                },
            })
        }
    }
}

/// Locates mu_c by bisection on the v-iteration divergence indicator.
///
/// v diverges (gas) for mu < mu_c and stays bounded (condensed) for
/// mu > mu_c; x_- <= m/(m-1) caps every bounded trajectory, so hitting
/// log v >= 700 within n_scan levels identifies the gas side. Returns
/// +inf when the whole range is gas, and mu_lo when even mu_lo is
/// already condensed.
pub fn mu_c_scan(
    model: &ModelConfig,
    mu_lo: f64,
    mu_hi: f64,
    n_scan: u32,
    tol: f64,
) -> Result<f64> {
    if !(mu_lo < mu_hi) || !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidModel(format!(
            "bad scan range [{mu_lo}, {mu_hi}] or tol {tol}"
        )));
    }
    let condensed = |mu: f64| -> Result<bool> {
        let vit = v_iteration(&model.with_mu(mu)?, n_scan)?;
        Ok(vit.diverged_at.is_none())
    };
    if condensed(mu_lo)? {
        return Ok(mu_lo);
    }
    if !condensed(mu_hi)? {
        return Ok(f64::INFINITY);
    }
    let (mut lo, mut hi) = (mu_lo, mu_hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if condensed(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
