//! Command-line experiments with CSV/JSON artifacts and a replayable manifest.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::asymptotics::{
    verify_gaussian_hm, verify_gumbel, verify_ldp_p1, verify_ldp_pk, verify_speed_bound, Centering, ConvergenceReport,
    GaussianOptions, GumbelOptions, RatioWindow, ThetaSweep,
};
use crate::exact_laws::{homozygosity_moment, moment_pk, DensityGrid, MomentQuery, DEFAULT_RESOLUTION};
use crate::format::fmt_f64;
use crate::rates::{
    c0_function, rate_homozygosity, solve_c0, write_rate_table, GrowthClass, HSpec, PlusPhiBranch, SelectionRegime,
};
use crate::sampling::{sample_batch, SamplerConfig};
use crate::selection::{
    phase_classify, tilt_weights, tilted_expectation, verify_gillespie, GillespieConfig, PhaseLabel,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERDICT: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Subcommand)]
pub enum Command {
    /// Draw ranked PD(θ) samples
    Sample,
    /// Tabulate the density and tail of the largest frequency
    Density,
    /// Moments of the ranked frequencies and of the homozygosity
    Moments,
    /// Rate-function table
    Rate,
    /// Critical constant of the homozygote-advantage phase transition
    C0,
    /// LDP decay of P1 (k = 1) or P2/P3 (k = 2, 3) from exact tails
    VerifyLdp,
    /// Scaling limit of θP_k − β(θ)
    VerifyGumbel,
    /// Gaussian fluctuations of the homozygosity
    VerifyGaussian,
    /// Three-regime limit of the heterozygote-advantage density ratio
    VerifyGillespie,
    /// Upper-tail speed bound for the homozygosity
    VerifySpeed,
    /// Tilted ensemble by importance weighting
    Tilt,
    /// Phase of a selection regime
    Phase,
    /// Re-run the experiment recorded in a manifest
    Replay,
}

impl Command {
    pub const ALL: [Command; 13] = [
        Command::Sample,
        Command::Density,
        Command::Moments,
        Command::Rate,
        Command::C0,
        Command::VerifyLdp,
        Command::VerifyGumbel,
        Command::VerifyGaussian,
        Command::VerifyGillespie,
        Command::VerifySpeed,
        Command::Tilt,
        Command::Phase,
        Command::Replay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Density => "density",
            Command::Moments => "moments",
            Command::Rate => "rate",
            Command::C0 => "c0",
            Command::VerifyLdp => "verify-ldp",
            Command::VerifyGumbel => "verify-gumbel",
            Command::VerifyGaussian => "verify-gaussian",
            Command::VerifyGillespie => "verify-gillespie",
            Command::VerifySpeed => "verify-speed",
            Command::Tilt => "tilt",
            Command::Phase => "phase",
            Command::Replay => "replay",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Parameter keys accepted by the command.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Command::Sample => &["theta", "n-samples", "seed", "k"],
            Command::Density => &["theta", "resolution"],
            Command::Moments => &["theta", "k", "m"],
            Command::Rate => &["x", "m"],
            Command::C0 => &[],
            Command::VerifyLdp => &["x", "thetas", "k", "resolution", "seed", "p", "delta"],
            Command::VerifyGumbel => &["thetas", "k", "n-samples", "seed", "centering", "ks-threshold"],
            Command::VerifyGaussian => &["thetas", "m", "n-samples", "seed", "ks-threshold", "variance-tol"],
            Command::VerifyGillespie => &["c", "gamma", "thetas", "theta", "n-samples", "seed"],
            Command::VerifySpeed => &["theta", "m", "c", "n-samples", "seed"],
            Command::Tilt => &["theta", "h", "c", "gamma", "n-samples", "seed"],
            Command::Phase => &["c", "gamma", "h"],
            Command::Replay => &["manifest"],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Parser)]
#[command(name = "pd-lab", version, about = "Poisson-Dirichlet PD(theta) experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub theta: Option<String>,
    /// Comma-separated ascending list
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub thetas: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub k: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub m: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub c: Option<String>,
    /// A single value, or a comma-separated list for verify-gillespie
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    #[arg(long = "n-samples", global = true, allow_hyphen_values = true)]
    pub n_samples: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub seed: Option<String>,
    /// Output directory (default: pd-lab-out)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub resolution: Option<String>,
    /// Fitness functional: minus_phi_<m> or plus_phi_<m>
    #[arg(long, global = true)]
    pub h: Option<String>,
    /// Half-width of the P1 window in the rank-k ratio check
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub delta: Option<String>,
    /// Centre of the P1 window in the rank-k ratio check (default k·x)
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub p: Option<String>,
    /// minus-loglog or plus-loglog
    #[arg(long, global = true)]
    pub centering: Option<String>,
    /// KS distance allowed at the largest θ (default 0.05)
    #[arg(long = "ks-threshold", global = true, allow_hyphen_values = true)]
    pub ks_threshold: Option<String>,
    /// Relative variance tolerance (default 0.15 for m = 2, 0.20 above)
    #[arg(long = "variance-tol", global = true, allow_hyphen_values = true)]
    pub variance_tol: Option<String>,
    /// Manifest file to replay
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

/// A command with its raw parameters, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub command: Command,
    pub params: BTreeMap<String, String>,
    pub out: PathBuf,
}

impl ExperimentSpec {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> Self {
        Self {
            command,
            params: BTreeMap::new(),
            out: out.into(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn from_cli(cli: Cli) -> Self {
        let mut params = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                params.insert(k.to_string(), v);
            }
        };
        put("theta", cli.theta);
        put("thetas", cli.thetas);
        put("x", cli.x);
        put("k", cli.k);
        put("m", cli.m);
        put("c", cli.c);
        put("gamma", cli.gamma);
        put("n-samples", cli.n_samples);
        put("seed", cli.seed);
        put("resolution", cli.resolution);
        put("h", cli.h);
        put("delta", cli.delta);
        put("p", cli.p);
        put("centering", cli.centering);
        put("ks-threshold", cli.ks_threshold);
        put("variance-tol", cli.variance_tol);
        put("manifest", cli.manifest.map(|p| p.to_string_lossy().into_owned()));
        Self {
            command: cli.command,
            params,
            out: cli.out.unwrap_or_else(|| PathBuf::from("pd-lab-out")),
        }
    }
}

/// Validated, typed experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Sample {
        theta: f64,
        n: usize,
        seed: u64,
        k: usize,
    },
    Density {
        theta: f64,
        resolution: usize,
    },
    Moments {
        theta: f64,
        k: usize,
        m: u32,
    },
    Rate {
        xs: Vec<f64>,
        m: u32,
    },
    C0,
    VerifyLdp {
        x: f64,
        sweep: ThetaSweep,
        k: usize,
        resolution: usize,
        window: Option<RatioWindow>,
    },
    VerifyGumbel {
        sweep: ThetaSweep,
        k: usize,
        centering: Centering,
        ks_threshold: f64,
    },
    VerifyGaussian {
        sweep: ThetaSweep,
        m: u32,
        options: GaussianOptions,
    },
    VerifyGillespie(GillespieConfig),
    VerifySpeed {
        theta: f64,
        m: u32,
        c: f64,
        n: usize,
        seed: u64,
    },
    Tilt {
        theta: f64,
        h: String,
        c: f64,
        gamma: f64,
        n: usize,
        seed: u64,
    },
    Phase {
        c: f64,
        gamma: f64,
        h: String,
    },
    Replay {
        manifest: PathBuf,
    },
}

impl Plan {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Plan::Sample { seed, .. } | Plan::VerifySpeed { seed, .. } | Plan::Tilt { seed, .. } => Some(*seed),
            Plan::VerifyLdp { sweep, .. } | Plan::VerifyGumbel { sweep, .. } | Plan::VerifyGaussian { sweep, .. } => {
                Some(sweep.seed)
            }
            Plan::VerifyGillespie(g) => Some(g.seed),
            _ => None,
        }
    }
}

struct Reader<'a> {
    params: &'a BTreeMap<String, String>,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn raw(&self, key: &str) -> Option<&'a str> {
        self.params.get(key).map(|s| s.as_str())
    }

    fn fail(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn real(&mut self, key: &str, default: Option<f64>) -> Option<f64> {
        match self.raw(key) {
            None => {
                if default.is_none() {
                    self.fail(format!("missing required parameter --{key}"));
                }
                default
            }
            Some(s) => match s.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    self.fail(format!("--{key}: '{s}' is not a finite number"));
                    None
                }
            },
        }
    }

    fn positive(&mut self, key: &str, default: Option<f64>) -> Option<f64> {
        let v = self.real(key, default)?;
        if v > 0.0 {
            Some(v)
        } else {
            self.fail(format!("{key} must be positive, got {v}"));
            None
        }
    }

    fn in_range(&mut self, key: &str, default: Option<f64>, lo: f64, hi: f64, what: &str) -> Option<f64> {
        let v = self.real(key, default)?;
        if v >= lo && v < hi {
            Some(v)
        } else {
            self.fail(format!("{key} must lie in {what}, got {v}"));
            None
        }
    }

    fn integer(&mut self, key: &str, default: Option<u64>, min: u64) -> Option<u64> {
        let v = match self.raw(key) {
            None => {
                if default.is_none() {
                    self.fail(format!("missing required parameter --{key}"));
                }
                default?
            }
            Some(s) => match s.trim().parse::<u64>() {
                Ok(v) => v,
                Err(_) => {
                    self.fail(format!("--{key}: '{s}' is not a nonnegative integer"));
                    return None;
                }
            },
        };
        if v < min {
            self.fail(format!("{key} must be at least {min}, got {v}"));
            return None;
        }
        Some(v)
    }

    fn list(&mut self, key: &str, default: Option<&[f64]>) -> Option<Vec<f64>> {
        let s = match self.raw(key) {
            None => {
                if default.is_none() {
                    self.fail(format!("missing required parameter --{key}"));
                }
                return default.map(|d| d.to_vec());
            }
            Some(s) => s,
        };
        let parts: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
        if parts.is_empty() {
            self.fail(format!("--{key} must not be empty"));
            return None;
        }
        let mut out = Vec::with_capacity(parts.len());
        for p in parts {
            match p.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(v),
                _ => {
                    self.fail(format!("--{key}: '{p}' is not a finite number"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn thetas(&mut self, default: Option<&[f64]>) -> Option<Vec<f64>> {
        let v = self.list("thetas", default)?;
        if v.iter().any(|&t| t <= 0.0) {
            self.fail("theta must be positive in --thetas".into());
            return None;
        }
        if v.len() < 2 {
            self.fail("--thetas needs at least two values".into());
            return None;
        }
        if v.windows(2).any(|w| !(w[0] < w[1])) {
            self.fail("--thetas must be strictly ascending".into());
            return None;
        }
        Some(v)
    }

    fn h(&mut self) -> Option<String> {
        let s = self.raw("h").unwrap_or("minus_phi_2");
        match HSpec::parse(s) {
            Ok(_) => Some(s.to_string()),
            Err(e) => {
                self.fail(e.to_string());
                None
            }
        }
    }
}

/// Aggregated validation failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<String>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "error: {e}")?;
        }
        Ok(())
    }
}

/// Schema and range checks; reports every problem at once and never computes.
pub fn validate(spec: &ExperimentSpec) -> std::result::Result<Plan, ValidationErrors> {
    let mut r = Reader {
        params: &spec.params,
        errors: Vec::new(),
    };
    let allowed = spec.command.keys();
    for key in spec.params.keys() {
        if !allowed.contains(&key.as_str()) {
            r.fail(format!("unknown parameter --{key} for command '{}'", spec.command));
        }
    }
    let seed = r.integer("seed", Some(0), 0);
    let plan = match spec.command {
        Command::Sample => {
            let theta = r.positive("theta", None);
            let n = r.integer("n-samples", Some(1), 1);
            let k = r.integer("k", Some(10), 1);
            (|| {
                Some(Plan::Sample {
                    theta: theta?,
                    n: n? as usize,
                    seed: seed?,
                    k: k? as usize,
                })
            })()
        }
        Command::Density => {
            let theta = r.positive("theta", None);
            let res = r.integer("resolution", Some(DEFAULT_RESOLUTION as u64), 10);
            (|| {
                Some(Plan::Density {
                    theta: theta?,
                    resolution: res? as usize,
                })
            })()
        }
        Command::Moments => {
            let theta = r.positive("theta", None);
            let k = r.integer("k", Some(3), 1);
            let m = r.integer("m", Some(2), 2);
            (|| {
                Some(Plan::Moments {
                    theta: theta?,
                    k: k? as usize,
                    m: m? as u32,
                })
            })()
        }
        Command::Rate => {
            let xs = r.list("x", None);
            let m = r.integer("m", Some(2), 2);
            (|| Some(Plan::Rate { xs: xs?, m: m? as u32 }))()
        }
        Command::C0 => Some(Plan::C0),
        Command::VerifyLdp => {
            let x = r.in_range("x", None, 0.0, 1.0, "[0,1)");
            let thetas = r.thetas(None);
            let k = r.integer("k", Some(1), 1);
            if let Some(k) = k {
                if k > 3 {
                    r.fail(format!("k must be 1, 2 or 3, got {k}"));
                }
            }
            let res = r.integer("resolution", Some(DEFAULT_RESOLUTION as u64), 10);
            let p = if r.raw("p").is_some() {
                r.in_range("p", None, 0.0, 1.0, "(0,1)")
            } else {
                None
            };
            let delta = if r.raw("delta").is_some() {
                r.positive("delta", None)
            } else {
                None
            };
            let window = match (p, delta, x, k) {
                (None, None, _, _) => Some(None),
                (p, d, Some(x), Some(k)) => Some(Some(RatioWindow {
                    p: p.unwrap_or(k as f64 * x),
                    delta: d.unwrap_or(0.05),
                })),
                _ => None,
            };
            (|| {
                Some(Plan::VerifyLdp {
                    x: x?,
                    sweep: ThetaSweep {
                        thetas: thetas?,
                        samples_per_theta: 1,
                        seed: seed?,
                    },
                    k: k? as usize,
                    resolution: res? as usize,
                    window: window?,
                })
            })()
        }
        Command::VerifyGumbel => {
            let thetas = r.thetas(None);
            if let Some(t) = thetas.as_ref().and_then(|t| t.first()) {
                if *t < std::f64::consts::E {
                    r.fail(format!("thetas must be at least e for the scaling limit, got {t}"));
                }
            }
            let k = r.integer("k", Some(1), 1);
            let n = r.integer("n-samples", Some(10_000), 1);
            let centering = match r.raw("centering").unwrap_or("minus-loglog") {
                "minus-loglog" => Some(Centering::LogMinusLogLog),
                "plus-loglog" => Some(Centering::LogPlusLogLog),
                other => {
                    r.fail(format!("--centering: '{other}' is not minus-loglog or plus-loglog"));
                    None
                }
            };
            let ks = r.in_range(
                "ks-threshold",
                Some(0.05),
                f64::MIN_POSITIVE,
                1.0 + f64::EPSILON,
                "(0,1]",
            );
            (|| {
                Some(Plan::VerifyGumbel {
                    sweep: ThetaSweep {
                        thetas: thetas?,
                        samples_per_theta: n? as usize,
                        seed: seed?,
                    },
                    k: k? as usize,
                    centering: centering?,
                    ks_threshold: ks?,
                })
            })()
        }
        Command::VerifyGaussian => {
            let thetas = r.thetas(None);
            let m = r.integer("m", Some(2), 2);
            let n = r.integer("n-samples", Some(10_000), 2);
            let ks = r.in_range(
                "ks-threshold",
                Some(0.05),
                f64::MIN_POSITIVE,
                1.0 + f64::EPSILON,
                "(0,1]",
            );
            let tol = if r.raw("variance-tol").is_some() {
                r.positive("variance-tol", None).map(Some)
            } else {
                Some(None)
            };
            (|| {
                Some(Plan::VerifyGaussian {
                    sweep: ThetaSweep {
                        thetas: thetas?,
                        samples_per_theta: n? as usize,
                        seed: seed?,
                    },
                    m: m? as u32,
                    options: GaussianOptions {
                        variance_tol: tol?,
                        ks_threshold: ks?,
                    },
                })
            })()
        }
        Command::VerifyGillespie => {
            let c = r.positive("c", Some(0.5));
            let gammas = r.list("gamma", Some(&[-0.5, 0.0, 0.5]));
            let thetas = r.thetas(Some(&[50.0, 200.0, 800.0]));
            let check = if r.raw("theta").is_some() {
                r.positive("theta", None)
            } else {
                None
            };
            if let (Some(t), Some(ts)) = (check, thetas.as_ref()) {
                if !ts.contains(&t) {
                    r.fail(format!("--theta {t} must be one of --thetas"));
                }
            }
            let n = r.integer("n-samples", Some(10_000), 100);
            (|| {
                Some(Plan::VerifyGillespie(GillespieConfig {
                    c: c?,
                    gammas: gammas?,
                    thetas: thetas?,
                    n_samples: n? as usize,
                    seed: seed?,
                    check_theta: check,
                }))
            })()
        }
        Command::VerifySpeed => {
            let theta = r.positive("theta", None);
            let m = r.integer("m", Some(2), 2);
            let c = r.positive("c", Some(1.0));
            let n = r.integer("n-samples", Some(100_000), 1);
            if let (Some(t), Some(m), Some(c)) = (theta, m, c) {
                if let Err(e) = crate::asymptotics::speed_threshold(t, m as u32, c) {
                    r.fail(e.to_string());
                }
            }
            (|| {
                Some(Plan::VerifySpeed {
                    theta: theta?,
                    m: m? as u32,
                    c: c?,
                    n: n? as usize,
                    seed: seed?,
                })
            })()
        }
        Command::Tilt => {
            let theta = r.positive("theta", None);
            let h = r.h();
            let c = r.positive("c", Some(1.0));
            let gamma = r.real("gamma", Some(1.0));
            let n = r.integer("n-samples", Some(1000), 100);
            (|| {
                Some(Plan::Tilt {
                    theta: theta?,
                    h: h?,
                    c: c?,
                    gamma: gamma?,
                    n: n? as usize,
                    seed: seed?,
                })
            })()
        }
        Command::Phase => {
            let c = r.positive("c", None);
            let gamma = r.real("gamma", Some(1.0));
            let h = r.h();
            (|| {
                Some(Plan::Phase {
                    c: c?,
                    gamma: gamma?,
                    h: h?,
                })
            })()
        }
        Command::Replay => match r.raw("manifest") {
            Some(p) => Some(Plan::Replay {
                manifest: PathBuf::from(p),
            }),
            None => {
                r.fail("missing required parameter --manifest".into());
                None
            }
        },
    };
    match plan {
        Some(p) if r.errors.is_empty() => Ok(p),
        _ => {
            if r.errors.is_empty() {
                r.errors.push("invalid parameters".into());
            }
            Err(ValidationErrors(r.errors))
        }
    }
}

/// Why a run did not complete.
#[derive(Debug)]
pub enum RunError {
    Usage(ValidationErrors),
    Compute(crate::Error),
    Io(std::io::Error),
    Manifest(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Usage(e) => write!(f, "{e}"),
            RunError::Compute(e) => write!(f, "error: {e}"),
            RunError::Io(e) => write!(f, "error: i/o: {e}"),
            RunError::Manifest(e) => write!(f, "error: manifest: {e}"),
        }
    }
}

impl From<crate::Error> for RunError {
    fn from(e: crate::Error) -> Self {
        RunError::Compute(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Result of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    /// `Some(false)` when a verification ran but its verdict failed.
    pub verdict: Option<bool>,
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.verdict == Some(false) {
            EXIT_VERDICT
        } else {
            EXIT_OK
        }
    }
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write<F>(&mut self, name: &str, f: F) -> std::io::Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> std::io::Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }
}

/// Validates and runs `spec`, writing artifacts and a manifest under `spec.out`.
pub fn run(spec: &ExperimentSpec) -> std::result::Result<Outcome, RunError> {
    let plan = validate(spec).map_err(RunError::Usage)?;
    if let Plan::Replay { manifest } = &plan {
        let mut replayed = load_manifest(manifest)?;
        replayed.out = spec.out.clone();
        if replayed.command == Command::Replay {
            return Err(RunError::Manifest("a manifest cannot replay another replay".into()));
        }
        return run(&replayed);
    }
    let started = Instant::now();
    let mut art = Artifacts::create(&spec.out)?;
    let stem = spec.command.name();
    let mut summary = Vec::new();
    let mut verdict = None;
    let report_out =
        |art: &mut Artifacts, report: &ConvergenceReport, summary: &mut Vec<String>| -> std::io::Result<bool> {
            art.write(&format!("{stem}.csv"), |w| report.write_csv(w))?;
            art.json(&format!("{stem}.json"), &report.verdict_json())?;
            for c in &report.verdict.checks {
                summary.push(format!(
                    "[{}] {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                ));
            }
            summary.push(format!(
                "verdict: {} ({})",
                if report.verdict.passed { "PASS" } else { "FAIL" },
                report.verdict.label
            ));
            Ok(report.verdict.passed)
        };
    match plan {
        Plan::Sample { theta, n, seed, k } => {
            let batch = sample_batch(&SamplerConfig::new(theta, seed), n)?;
            art.write(&format!("{stem}.csv"), |w| {
                write!(w, "sample_id,residual")?;
                for j in 1..=k {
                    write!(w, ",p_{j}")?;
                }
                writeln!(w)?;
                for (i, s) in batch.iter().enumerate() {
                    write!(w, "{i},{}", fmt_f64(s.residual))?;
                    for j in 1..=k {
                        write!(w, ",{}", fmt_f64(s.rank(j)))?;
                    }
                    writeln!(w)?;
                }
                Ok(())
            })?;
            summary.push(format!("{n} samples at theta = {theta}"));
        }
        Plan::Density { theta, resolution } => {
            let g = DensityGrid::build(theta, resolution)?;
            art.write(&format!("{stem}.csv"), |w| g.write_csv(w))?;
            let info = json!({
                "theta": theta,
                "resolution": resolution,
                "depth": g.depth(),
                "cut": g.cut(),
                "below_mass": g.below_mass(),
                "normalization": g.normalization(),
                "nodes": g.node_count(),
                "mean": g.mean()?,
            });
            art.json(&format!("{stem}.json"), &info)?;
            summary.push(format!(
                "normalization {} over {} bands",
                fmt_f64(g.normalization()),
                g.depth()
            ));
        }
        Plan::Moments { theta, k, m } => {
            let mut rows = Vec::new();
            for rank in 1..=k {
                for n in 1..=2u32 {
                    rows.push((format!("P{rank}"), n, moment_pk(MomentQuery { k: rank, n, theta })?));
                }
            }
            for order in 2..=m {
                rows.push((format!("H{order}"), 1, homozygosity_moment(order, theta)));
            }
            art.write(&format!("{stem}.csv"), |w| {
                writeln!(w, "quantity,order,value")?;
                for (q, n, v) in &rows {
                    writeln!(w, "{q},{n},{}", fmt_f64(*v))?;
                }
                Ok(())
            })?;
            summary.push(format!("E[P1] = {}", fmt_f64(rows[0].2)));
        }
        Plan::Rate { xs, m } => {
            art.write(&format!("{stem}.csv"), |w| write_rate_table(&xs, w))?;
            for &x in &xs {
                summary.push(format!(
                    "x = {}: I = {}, I_hom(m={m}) = {}",
                    fmt_f64(x),
                    crate::rates::rate_i(x),
                    rate_homozygosity(m, x)
                ));
            }
        }
        Plan::C0 => {
            let sol = solve_c0()?;
            let info = json!({
                "c0": sol.root,
                "residual": sol.residual,
                "bracket": [sol.bracket.0, sol.bracket.1],
                "iterations": sol.iterations,
                "f_at_2_2": c0_function(2.2)?,
                "f_at_2_5": c0_function(2.5)?,
            });
            art.json(&format!("{stem}.json"), &info)?;
            summary.push(format!("c0 = {} (residual {:e})", fmt_f64(sol.root), sol.residual));
        }
        Plan::VerifyLdp {
            x,
            sweep,
            k,
            resolution,
            window,
        } => {
            let report = if k == 1 {
                verify_ldp_p1(&sweep, x, resolution)?
            } else {
                verify_ldp_pk(&sweep, k, x, window, resolution)?
            };
            verdict = Some(report_out(&mut art, &report, &mut summary)?);
        }
        Plan::VerifyGumbel {
            sweep,
            k,
            centering,
            ks_threshold,
        } => {
            let opts = GumbelOptions {
                ranks: (1..=k).collect(),
                centering,
                ks_threshold,
            };
            let report = verify_gumbel(&sweep, &opts)?;
            verdict = Some(report_out(&mut art, &report, &mut summary)?);
        }
        Plan::VerifyGaussian { sweep, m, options } => {
            let report = verify_gaussian_hm(&sweep, m, options)?;
            verdict = Some(report_out(&mut art, &report, &mut summary)?);
        }
        Plan::VerifyGillespie(cfg) => {
            let (report, _) = verify_gillespie(&cfg)?;
            verdict = Some(report_out(&mut art, &report, &mut summary)?);
        }
        Plan::VerifySpeed { theta, m, c, n, seed } => {
            let rep = verify_speed_bound(theta, m, c, n, seed)?;
            let value = serde_json::to_value(&rep).expect("serializable report");
            art.json(&format!("{stem}.json"), &value)?;
            summary.push(format!(
                "[{}] LHS {} vs RHS {} (SE {})",
                if rep.passed { "PASS" } else { "FAIL" },
                fmt_f64(rep.lhs),
                fmt_f64(rep.rhs),
                fmt_f64(rep.se)
            ));
            verdict = Some(rep.passed);
        }
        Plan::Tilt {
            theta,
            h,
            c,
            gamma,
            n,
            seed,
        } => {
            let hs = HSpec::parse(&h)?;
            let alpha = c * theta.powf(gamma);
            let batch = sample_batch(&SamplerConfig::new(theta, seed), n)?;
            let ens = tilt_weights(batch, &hs, alpha)?;
            let tilted = tilted_expectation(&ens, |s| crate::rates::phi(2, &s.p));
            let neutral_mean = crate::stats::mean(&ens.phi2);
            art.write(&format!("{stem}.csv"), |w| ens.write_csv(w))?;
            art.json(
                &format!("{stem}.json"),
                &json!({
                    "theta": theta, "h": h, "c": c, "gamma": gamma, "alpha": alpha,
                    "n_samples": n, "ess": ens.ess, "degenerate": ens.degenerate,
                    "tilted_phi2": tilted, "neutral_phi2": neutral_mean,
                }),
            )?;
            summary.push(format!(
                "tilted E[phi2] = {} +/- {} (ESS {:.1}{})",
                fmt_f64(tilted.estimate),
                fmt_f64(tilted.se),
                ens.ess,
                if tilted.unreliable { ", unreliable" } else { "" }
            ));
        }
        Plan::Phase { c, gamma, h } => {
            let hs = HSpec::parse(&h)?;
            let growth = GrowthClass::from_power(c, gamma);
            let pc = phase_classify(&SelectionRegime { growth, h: hs })?;
            let label = match pc.label {
                PhaseLabel::Neutral => "neutral",
                PhaseLabel::Tilted => "tilted",
                PhaseLabel::Degenerate => "degenerate",
            };
            let branch = pc.branch.map(|b| match b {
                PlusPhiBranch::AtOrBelowC0 { constant } => json!({"side": "at_or_below_c0", "constant": constant}),
                PlusPhiBranch::AboveC0 { constant } => json!({"side": "above_c0", "constant": constant}),
            });
            art.json(
                &format!("{stem}.json"),
                &json!({ "c": c, "gamma": gamma, "h": h, "label": label, "branch": branch }),
            )?;
            summary.push(format!("phase: {label}"));
        }
        Plan::Replay { .. } => unreachable!("handled above"),
    }
    let manifest = json!({
        "tool": "pd-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": spec.command.name(),
        "params": spec.params,
        "seed": validate(spec).ok().and_then(|p| p.seed()),
        "out": spec.out.to_string_lossy(),
        "artifacts": art.written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "verdict": verdict,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    art.json("manifest.json", &manifest)?;
    Ok(Outcome {
        artifacts: art.written,
        verdict,
        summary,
    })
}

/// Reads the spec recorded in a manifest written by [`run`].
pub fn load_manifest(path: &Path) -> std::result::Result<ExperimentSpec, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Manifest(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| RunError::Manifest(e.to_string()))?;
    let name = v["command"]
        .as_str()
        .ok_or_else(|| RunError::Manifest("missing command".into()))?;
    let command = Command::from_name(name).ok_or_else(|| RunError::Manifest(format!("unknown command '{name}'")))?;
    let mut params = BTreeMap::new();
    if let Some(obj) = v["params"].as_object() {
        for (k, val) in obj {
            let s = val
                .as_str()
                .ok_or_else(|| RunError::Manifest(format!("parameter {k} is not a string")))?;
            params.insert(k.clone(), s.to_string());
        }
    }
    let out = v["out"]
        .as_str()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("pd-lab-out"));
    Ok(ExperimentSpec { command, params, out })
}

fn configure_threads() -> std::result::Result<(), String> {
    if let Ok(v) = std::env::var("PD_LAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("PD_LAB_THREADS must be a positive integer, got '{v}'"))?;
        // A pool may already exist when embedded; results do not depend on its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let spec = ExperimentSpec::from_cli(cli);
    match run(&spec) {
        Ok(outcome) => {
            let mut out = std::io::stdout().lock();
            let _ = outcome
                .summary
                .iter()
                .try_for_each(|line| writeln!(out, "{line}"))
                .and_then(|_| {
                    outcome
                        .artifacts
                        .iter()
                        .try_for_each(|a| writeln!(out, "wrote {}", a.display()))
                });
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_USAGE
        }
    }
}
