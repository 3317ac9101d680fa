//! Command-line front door: each subcommand reads a JSON config, runs one
//! library routine and writes JSON or CSV to stdout.
//!
//! Output is a pure function of (config, flags, seed). HIERCUBES_THREADS
//! caps the worker pool; parallel tallies are integer sums merged
//! order-independently, so the thread count never changes emitted bytes.
//!
//! Exit codes: 0 success, 2 invalid config or flags, 3 undetermined result
//! under --strict, 4 numeric failure (saturation, divergence, overflow).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hiercubes_core::{
    densities, entropy_report, fractal_export, invert, ln_rational, phase_report, pressure,
    rational_from_f64, ActivityModel, BigRational, Census, Error as CoreError, FractalCube,
    ModelConfig, Profile, Regime, SampleStats, Sampler, TransitionKind,
};

#[derive(Parser)]
#[command(
    name = "hiercubes",
    version,
    about = "Thermodynamics of the hierarchical mixture of cubes on Z^d"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Infinite-volume pressure of an activity model.
    Pressure(ModelArgs),
    /// Block densities and covered fraction of an activity model.
    Densities(ModelArgs),
    /// Activities recovering a given density profile.
    Invert(ProfileArgs),
    /// Entropy, chemical potentials and free energy of a profile.
    Entropy(ProfileArgs),
    /// Phase-transition classification with certificates.
    Phase(PhaseArgs),
    /// Pressure and covered fraction over a chemical-potential grid.
    PhaseScan(ScanArgs),
    /// Monte Carlo density estimates on Lambda_n.
    Sample(SampleArgs),
    /// Occupied cubes of one sampled configuration, rescaled to [0,1]^d.
    Fractal(FractalArgs),
    /// Exact enumeration census of a small volume.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct ModelArgs {
    /// Model config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Convergence tolerance for the tail estimate.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Deepest level evaluated.
    #[arg(long, default_value_t = 48)]
    max_level: u32,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    out: Format,
    /// Exit 3 instead of reporting an undetermined regime.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ProfileArgs {
    /// Profile config (JSON): {"d", "rho", "sigma_inf"?, "model"?}.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    out: Format,
}

#[derive(Args)]
struct PhaseArgs {
    /// Model config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Deepest level used by the certificates.
    #[arg(long, default_value_t = 48)]
    max_level: u32,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    out: Format,
    /// Exit 3 instead of reporting an undetermined classification.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ScanArgs {
    /// Model config (JSON); must carry a chemical potential.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    mu_min: f64,
    #[arg(long)]
    mu_max: f64,
    /// Number of grid points (rows), endpoints included.
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 48)]
    max_level: u32,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    out: Format,
    /// Exit 3 if any grid point has an undetermined regime.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SampleArgs {
    /// Model config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Volume level n; the sampled box has 2^(d n) sites.
    #[arg(long)]
    level: u32,
    #[arg(long)]
    replicas: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    out: Format,
}

#[derive(Args)]
struct FractalArgs {
    /// Model config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Volume level n.
    #[arg(long)]
    level: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replica index within the seed's stream.
    #[arg(long, default_value_t = 0)]
    replica: u64,
    /// Override the model's chemical potential.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    out: Format,
}

#[derive(Args)]
struct OracleArgs {
    /// Dimension.
    #[arg(long)]
    d: u32,
    /// Volume level.
    #[arg(long)]
    n: u32,
    /// JSON array of activities z_0..z_n; numbers or "p/q" strings.
    #[arg(long)]
    z: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    out: Format,
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Self {
        Failure {
            code: 2,
            msg: msg.into(),
        }
    }

    fn strict(msg: impl Into<String>) -> Self {
        Failure {
            code: 3,
            msg: msg.into(),
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::InvalidModel(_)
            | CoreError::InvalidProfile(_)
            | CoreError::EnergyModelRequired => 2,
            CoreError::LevelOverflow { .. }
            | CoreError::OutsideUnitBall { .. }
            | CoreError::Saturated { .. }
            | CoreError::NoFixedPoints { .. }
            | CoreError::Tangent { .. }
            | CoreError::Diverging { .. }
            | CoreError::TooLarge(_) => 4,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("HIERCUBES_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: HIERCUBES_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Pressure(a) => cmd_pressure(a),
        Cmd::Densities(a) => cmd_densities(a),
        Cmd::Invert(a) => cmd_invert(a),
        Cmd::Entropy(a) => cmd_entropy(a),
        Cmd::Phase(a) => cmd_phase(a),
        Cmd::PhaseScan(a) => cmd_phase_scan(a),
        Cmd::Sample(a) => cmd_sample(a),
        Cmd::Fractal(a) => cmd_fractal(a),
        Cmd::Oracle(a) => cmd_oracle(a),
    }
}

fn load_model(path: &Path) -> Result<ModelConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let model: ModelConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    model.validate()?;
    Ok(model)
}

/// Density profile file; an embedded activity model enables the free energy.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    d: u32,
    rho: Vec<f64>,
    #[serde(default)]
    sigma_inf: f64,
    model: Option<ActivityModel>,
}

fn load_profile(path: &Path) -> Result<(Profile, Option<ModelConfig>), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let file: ProfileFile = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let model = file.model.map(|model| ModelConfig { d: file.d, model });
    if let Some(m) = &model {
        m.validate()?;
    }
    Ok((Profile::new(file.d, file.rho, file.sigma_inf), model))
}

/// Flags echoed into every JSON result, so outputs are self-describing.
#[derive(Serialize, Default)]
struct Meta {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_level: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    replica: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
}

fn emit_json<T: Serialize>(meta: Meta, body: T) -> Result<(), Failure> {
    #[derive(Serialize)]
    struct Envelope<T: Serialize> {
        meta: Meta,
        #[serde(flatten)]
        body: T,
    }
    println!("{}", serde_json::to_string(&Envelope { meta, body })?);
    Ok(())
}

/// CSV cell; spells non-finite values the same way as the JSON encoding.
fn cell(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Summable => "summable",
        Regime::Divergent => "divergent",
        Regime::Undetermined => "undetermined",
    }
}

fn cmd_pressure(a: ModelArgs) -> Result<(), Failure> {
    let model = load_model(&a.config)?;
    let report = pressure(&model, a.max_level, a.tol)?;
    if a.strict && report.regime == Regime::Undetermined {
        return Err(Failure::strict(
            "regime undetermined within the evaluated window",
        ));
    }
    match a.out {
        Format::Json => emit_json(
            Meta {
                command: "pressure",
                tol: Some(a.tol),
                max_level: Some(a.max_level),
                ..Meta::default()
            },
            report,
        ),
        Format::Csv => {
            let mut s = String::from("j,zhat,p_partial\n");
            for (j, (&zh, &pp)) in report.zhat.iter().zip(&report.p_partial).enumerate() {
                writeln!(s, "{j},{},{}", cell(zh), cell(pp)).unwrap();
            }
            print!("{s}");
            Ok(())
        }
    }
}

fn cmd_densities(a: ModelArgs) -> Result<(), Failure> {
    let model = load_model(&a.config)?;
    let report = densities(&model, a.max_level, a.tol)?;
    if a.strict && report.regime == Regime::Undetermined {
        return Err(Failure::strict(
            "regime undetermined within the evaluated window",
        ));
    }
    match a.out {
        Format::Json => emit_json(
            Meta {
                command: "densities",
                tol: Some(a.tol),
                max_level: Some(a.max_level),
                ..Meta::default()
            },
            report,
        ),
        Format::Csv => {
            let mut s = String::from("j,rho,nu,zhat,z\n");
            for j in 0..report.rho.len() {
                let z = model.log_activity(j as u32)?.exp();
                writeln!(
                    s,
                    "{j},{},{},{},{}",
                    cell(report.rho[j]),
                    cell(report.nu[j]),
                    cell(report.zhat[j]),
                    cell(z)
                )
                .unwrap();
            }
            print!("{s}");
            Ok(())
        }
    }
}

fn cmd_invert(a: ProfileArgs) -> Result<(), Failure> {
    let (profile, _) = load_profile(&a.config)?;
    let report = invert(&profile)?;
    match a.out {
        Format::Json => emit_json(
            Meta {
                command: "invert",
                ..Meta::default()
            },
            report,
        ),
        Format::Csv => {
            let mut s = String::from("j,rho,zhat,z\n");
            for j in 0..report.z.len() {
                writeln!(
                    s,
                    "{j},{},{},{}",
                    cell(profile.rho[j]),
                    cell(report.zhat[j]),
                    cell(report.z[j])
                )
                .unwrap();
            }
            print!("{s}");
            Ok(())
        }
    }
}

fn cmd_entropy(a: ProfileArgs) -> Result<(), Failure> {
    if a.out == Format::Csv {
        return Err(Failure::config("entropy has no CSV form; use --out json"));
    }
    let (profile, model) = load_profile(&a.config)?;
    let report = entropy_report(&profile, model.as_ref())?;
    emit_json(
        Meta {
            command: "entropy",
            ..Meta::default()
        },
        report,
    )
}

fn cmd_phase(a: PhaseArgs) -> Result<(), Failure> {
    if a.out == Format::Csv {
        return Err(Failure::config("phase has no CSV form; use --out json"));
    }
    let model = load_model(&a.config)?;
    let report = phase_report(&model, a.max_level)?;
    if a.strict && report.kind == TransitionKind::Undetermined {
        return Err(Failure::strict(
            "classification undetermined within the evaluated window",
        ));
    }
    emit_json(
        Meta {
            command: "phase",
            max_level: Some(a.max_level),
            ..Meta::default()
        },
        report,
    )
}

#[derive(Serialize)]
struct ScanRow {
    mu: f64,
    p: f64,
    sigma: f64,
    regime: &'static str,
}

fn cmd_phase_scan(a: ScanArgs) -> Result<(), Failure> {
    if a.steps == 0 {
        return Err(Failure::config("steps must be positive"));
    }
    let model = load_model(&a.config)?;
    model.with_mu(a.mu_min)?; // fail fast on models without a potential
    let grid: Vec<f64> = (0..a.steps)
        .map(|i| {
            if a.steps == 1 {
                a.mu_min
            } else {
                a.mu_min + (a.mu_max - a.mu_min) * i as f64 / (a.steps - 1) as f64
            }
        })
        .collect();
    let rows = grid
        .par_iter()
        .map(|&mu| -> Result<(ScanRow, Regime), Failure> {
            let m = model.with_mu(mu)?;
            let pr = pressure(&m, a.max_level, a.tol)?;
            let dr = densities(&m, a.max_level, a.tol)?;
            Ok((
                ScanRow {
                    mu,
                    p: pr.p,
                    sigma: dr.sigma,
                    regime: regime_name(pr.regime),
                },
                pr.regime,
            ))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    if a.strict && rows.iter().any(|(_, r)| *r == Regime::Undetermined) {
        return Err(Failure::strict("undetermined regime on the grid"));
    }
    let rows: Vec<ScanRow> = rows.into_iter().map(|(row, _)| row).collect();
    match a.out {
        Format::Json => {
            #[derive(Serialize)]
            struct ScanOut {
                rows: Vec<ScanRow>,
            }
            emit_json(
                Meta {
                    command: "phase-scan",
                    tol: Some(a.tol),
                    max_level: Some(a.max_level),
                    mu_min: Some(a.mu_min),
                    mu_max: Some(a.mu_max),
                    steps: Some(a.steps),
                    ..Meta::default()
                },
                ScanOut { rows },
            )
        }
        Format::Csv => {
            let mut s = String::from("mu,p,sigma,regime\n");
            for row in &rows {
                writeln!(
                    s,
                    "{},{},{},{}",
                    cell(row.mu),
                    cell(row.p),
                    cell(row.sigma),
                    row.regime
                )
                .unwrap();
            }
            print!("{s}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct LevelEstimate {
    j: u32,
    corner_density: f64,
    corner_se: f64,
    volume_density: f64,
    volume_se: f64,
}

#[derive(Serialize)]
struct SigmaEstimate {
    mean: f64,
    se: f64,
}

fn estimates(stats: &SampleStats, n: u32) -> Vec<LevelEstimate> {
    (0..=n)
        .map(|j| LevelEstimate {
            j,
            corner_density: stats.corner_density(j),
            corner_se: stats.corner_se(j),
            volume_density: stats.volume_density(j),
            volume_se: stats.volume_se(j),
        })
        .collect()
}

fn cmd_sample(a: SampleArgs) -> Result<(), Failure> {
    if a.replicas == 0 {
        return Err(Failure::config("replicas must be positive"));
    }
    let model = load_model(&a.config)?;
    let sampler = Sampler::new(&model, a.level)?;
    // integer tallies: the chunked reduction is exact in any merge order
    const CHUNK: u64 = 65_536;
    let chunks = a.replicas.div_ceil(CHUNK);
    let stats = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = SampleStats::empty(model.d, a.level);
            for r in c * CHUNK..((c + 1) * CHUNK).min(a.replicas) {
                s.record(&sampler.sample(Sampler::replica_key(a.seed, r)));
            }
            s
        })
        .reduce(
            || SampleStats::empty(model.d, a.level),
            |mut acc, s| {
                acc.merge(&s);
                acc
            },
        );
    let rho = estimates(&stats, a.level);
    match a.out {
        Format::Json => {
            #[derive(Serialize)]
            struct SampleOut {
                replicas: u64,
                seed: u64,
                empirical_rho: Vec<LevelEstimate>,
                empirical_sigma: SigmaEstimate,
            }
            emit_json(
                Meta {
                    command: "sample",
                    level: Some(a.level),
                    ..Meta::default()
                },
                SampleOut {
                    replicas: a.replicas,
                    seed: a.seed,
                    empirical_rho: rho,
                    empirical_sigma: SigmaEstimate {
                        mean: stats.sigma_mean(),
                        se: stats.sigma_se(),
                    },
                },
            )
        }
        Format::Csv => {
            let mut s = String::from("j,corner_density,corner_se,volume_density,volume_se\n");
            for e in &rho {
                writeln!(
                    s,
                    "{},{},{},{},{}",
                    e.j,
                    cell(e.corner_density),
                    cell(e.corner_se),
                    cell(e.volume_density),
                    cell(e.volume_se)
                )
                .unwrap();
            }
            print!("{s}");
            Ok(())
        }
    }
}

fn cmd_fractal(a: FractalArgs) -> Result<(), Failure> {
    let mut model = load_model(&a.config)?;
    if let Some(mu) = a.mu {
        model = model.with_mu(mu)?;
    }
    let sampler = Sampler::new(&model, a.level)?;
    let config = sampler.sample(Sampler::replica_key(a.seed, a.replica));
    let cubes = fractal_export(&config, model.d, a.level);
    match a.out {
        Format::Json => {
            #[derive(Serialize)]
            struct FractalOut {
                cubes: Vec<FractalCube>,
            }
            emit_json(
                Meta {
                    command: "fractal",
                    level: Some(a.level),
                    seed: Some(a.seed),
                    replica: Some(a.replica),
                    mu: a.mu,
                    ..Meta::default()
                },
                FractalOut { cubes },
            )
        }
        Format::Csv => {
            let mut s = String::from("level,side");
            for axis in 0..model.d {
                write!(s, ",c{axis}").unwrap();
            }
            s.push('\n');
            for cube in &cubes {
                write!(s, "{},{}", cube.level, cell(cube.side)).unwrap();
                for &c in &cube.corner {
                    write!(s, ",{}", cell(c)).unwrap();
                }
                s.push('\n');
            }
            print!("{s}");
            Ok(())
        }
    }
}

fn parse_z_file(path: &Path, n: u32) -> Result<Vec<BigRational>, Failure> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum ZEntry {
        Num(f64),
        Text(String),
    }
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let entries: Vec<ZEntry> = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    if entries.len() != n as usize + 1 {
        return Err(Failure::config(format!(
            "z file must list {} activities for n = {n}",
            n + 1
        )));
    }
    let zero = rational_from_f64(0.0).unwrap();
    entries
        .iter()
        .map(|e| {
            let r = match e {
                ZEntry::Num(v) => rational_from_f64(*v).map_err(Failure::from)?,
                ZEntry::Text(s) => BigRational::from_str(s)
                    .map_err(|err| Failure::config(format!("bad rational {s:?}: {err}")))?,
            };
            if r < zero {
                return Err(Failure::config("activities must be nonnegative"));
            }
            Ok(r)
        })
        .collect()
}

fn cmd_oracle(a: OracleArgs) -> Result<(), Failure> {
    if a.out == Format::Csv {
        return Err(Failure::config("oracle has no CSV form; use --out json"));
    }
    let census = Census::build(a.d, a.n)?;
    let z = match &a.z {
        Some(path) => parse_z_file(path, a.n)?,
        None => vec![rational_from_f64(1.0).unwrap(); a.n as usize + 1],
    };
    let xi = census.partition_sum(&z);
    #[derive(Serialize)]
    struct ClassRow {
        counts: Vec<u32>,
        configs: u64,
    }
    #[derive(Serialize)]
    struct OracleOut {
        d: u32,
        n: u32,
        total_configs: u64,
        xi: String,
        log_xi: f64,
        classes: Vec<ClassRow>,
    }
    let classes = census
        .tally
        .iter()
        .map(|(counts, &configs)| ClassRow {
            counts: counts.clone(),
            configs,
        })
        .collect();
    emit_json(
        Meta {
            command: "oracle",
            ..Meta::default()
        },
        OracleOut {
            d: a.d,
            n: a.n,
            total_configs: census.total_configs(),
            xi: xi.to_string(),
            log_xi: ln_rational(&xi),
            classes,
        },
    )
}
