//! Selection-tilted PD(θ) by self-normalized importance weighting, the
//! three-regime density-ratio limit for heterozygote advantage and the
//! phase classification of the tilted rate functions.

use std::io::Write;

use serde::Serialize;

use crate::asymptotics::{
    homozygosity_draws, monotone_approach, residual_cutoff, Check, ConvergenceReport, Method, ReportRow, Verdict,
};
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::rates::{
    phi, plus_phi2_branch, rate_selection, solve_c0, ExtReal, GrowthClass, HSpec, PlusPhiBranch, SelectionRegime,
};
use crate::sampling::{check_theta, sample_batch, RankedFrequencies, SamplerConfig};
use crate::special::normal_cdf;
use crate::stats;

/// Tilt `α(θ) = c θ^γ` applied to `n_samples` neutral draws.
#[derive(Debug, Clone)]
pub struct TiltConfig {
    pub theta: f64,
    pub h: HSpec,
    pub c: f64,
    pub gamma: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl TiltConfig {
    pub fn validate(&self) -> Result<()> {
        check_theta(self.theta)?;
        self.h.validate()?;
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::domain(format!("c must be positive, got {}", self.c)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::domain("gamma must be finite"));
        }
        if self.n_samples < 100 {
            return Err(Error::domain(format!(
                "n_samples must be at least 100, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.c * self.theta.powf(self.gamma)
    }
}

/// Normalized weights from log-weights via a max shift; returns `(u, Σu)`
/// with `u_i = exp(l_i − max l)`.
fn shifted(log_weights: &[f64]) -> (Vec<f64>, f64) {
    let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let u: Vec<f64> = log_weights.iter().map(|l| (l - m).exp()).collect();
    let total = stats::pairwise_sum(&u);
    (u, total)
}

#[derive(Debug, Clone)]
pub struct TiltedEnsemble {
    pub samples: Vec<RankedFrequencies>,
    pub phi2: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub normalized_weights: Vec<f64>,
    pub ess: f64,
    /// All weight sits on a single sample.
    pub degenerate: bool,
    unnormalized: Vec<f64>,
    total: f64,
}

/// Weights `∝ exp(α H(p_i))`, with `H` evaluated on the ranked prefix only.
pub fn tilt_weights(samples: Vec<RankedFrequencies>, h: &HSpec, alpha: f64) -> Result<TiltedEnsemble> {
    if samples.is_empty() {
        return Err(Error::domain("cannot tilt an empty sample set"));
    }
    if !alpha.is_finite() {
        return Err(Error::domain(format!("alpha must be finite, got {alpha}")));
    }
    h.validate()?;
    let log_weights: Vec<f64> = samples.iter().map(|s| alpha * h.eval(&s.p)).collect();
    if log_weights.iter().any(|l| !l.is_finite()) {
        return Err(Error::numeric("tilt weights", "non-finite log-weight"));
    }
    let (u, total) = shifted(&log_weights);
    let normalized_weights: Vec<f64> = u.iter().map(|x| x / total).collect();
    let sq: Vec<f64> = normalized_weights.iter().map(|w| w * w).collect();
    let ess = 1.0 / stats::pairwise_sum(&sq);
    let phi2 = samples.iter().map(|s| phi(2, &s.p)).collect();
    Ok(TiltedEnsemble {
        samples,
        phi2,
        log_weights,
        normalized_weights,
        ess,
        degenerate: ess - 1.0 < 1e-9,
        unnormalized: u,
        total,
    })
}

/// Draws `n_samples` neutral samples and tilts them per `config`.
pub fn tilted_ensemble(config: &TiltConfig) -> Result<TiltedEnsemble> {
    config.validate()?;
    let cfg = SamplerConfig::new(config.theta, config.seed);
    let samples = sample_batch(&cfg, config.n_samples)?;
    tilt_weights(samples, &config.h, config.alpha())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltedEstimate {
    pub estimate: f64,
    pub se: f64,
    pub ess: f64,
    /// ESS below one percent of the sample count.
    pub unreliable: bool,
}

/// Self-normalized estimate of `E[f]` under the tilted law with delta-method SE.
pub fn tilted_expectation<F: Fn(&RankedFrequencies) -> f64>(ens: &TiltedEnsemble, f: F) -> TiltedEstimate {
    let values: Vec<f64> = ens.samples.iter().map(f).collect();
    weighted_estimate(&ens.unnormalized, ens.total, &values, ens.ess)
}

fn weighted_estimate(u: &[f64], total: f64, values: &[f64], ess: f64) -> TiltedEstimate {
    let uf: Vec<f64> = u.iter().zip(values).map(|(w, f)| w * f).collect();
    let estimate = stats::pairwise_sum(&uf) / total;
    let dev: Vec<f64> = u
        .iter()
        .zip(values)
        .map(|(w, f)| {
            let wn = w / total;
            wn * wn * (f - estimate) * (f - estimate)
        })
        .collect();
    TiltedEstimate {
        estimate,
        se: stats::pairwise_sum(&dev).sqrt(),
        ess,
        unreliable: ess < 0.01 * u.len() as f64,
    }
}

impl TiltedEnsemble {
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// CSV with columns `sample_id,phi2,log_weight,weight`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "sample_id,phi2,log_weight,weight")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{}",
                i,
                fmt_f64(self.phi2[i]),
                fmt_f64(self.log_weights[i]),
                fmt_f64(self.normalized_weights[i])
            )?;
        }
        Ok(())
    }
}

/// Heterozygote-advantage sweep with `α(θ) = c θ^{3/2+γ}` and `H = −φ₂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GillespieConfig {
    pub c: f64,
    pub gammas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    /// The `γ = 0` moment checks are made at this θ (default: the sweep value nearest 200).
    pub check_theta: Option<f64>,
}

impl GillespieConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::domain(format!("c must be positive, got {}", self.c)));
        }
        if self.gammas.is_empty() {
            return Err(Error::domain("gammas must not be empty"));
        }
        if self.gammas.iter().any(|g| !g.is_finite()) {
            return Err(Error::domain("gammas must be finite"));
        }
        if self.thetas.is_empty() {
            return Err(Error::domain("thetas must not be empty"));
        }
        for &t in &self.thetas {
            check_theta(t)?;
        }
        if self.thetas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("thetas must be strictly ascending"));
        }
        if self.n_samples < 100 {
            return Err(Error::domain(format!(
                "n_samples must be at least 100, got {}",
                self.n_samples
            )));
        }
        if let Some(t) = self.check_theta {
            if !self.thetas.contains(&t) {
                return Err(Error::domain(format!("check theta {t} is not one of the sweep thetas")));
            }
        }
        Ok(())
    }

    fn check_at(&self) -> f64 {
        self.check_theta.unwrap_or_else(|| {
            *self
                .thetas
                .iter()
                .min_by(|a, b| (*a - 200.0).abs().total_cmp(&(*b - 200.0).abs()))
                .unwrap()
        })
    }
}

/// Per-(γ, θ) summary of `R = e^{αH}/Ê[e^{αH}]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioSummary {
    pub gamma: f64,
    pub theta: f64,
    pub alpha: f64,
    pub mean_log_r: f64,
    pub var_log_r: f64,
    pub var_r: f64,
    pub median_r: f64,
    pub ks_log_r: f64,
    pub denominator_rel_se: f64,
    pub unstable: bool,
}

/// `ln R_i` for numerator values `h_num` and an independent denominator batch `h_den`.
fn log_ratio(alpha: f64, h_num: &[f64], h_den: &[f64]) -> (Vec<f64>, f64) {
    let l_den: Vec<f64> = h_den.iter().map(|h| alpha * h).collect();
    let (u, total) = shifted(&l_den);
    let n = u.len() as f64;
    let m = l_den.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_den = m + (total / n).ln();
    let mean_u = total / n;
    let sd_u = stats::variance(&u).sqrt();
    let rel_se = sd_u / (n.sqrt() * mean_u);
    (h_num.iter().map(|h| alpha * h - ln_den).collect(), rel_se)
}

pub fn verify_gillespie(cfg: &GillespieConfig) -> Result<(ConvergenceReport, Vec<RatioSummary>)> {
    cfg.validate()?;
    let c = cfg.c;
    let mut summaries = Vec::new();
    for (i, &theta) in cfg.thetas.iter().enumerate() {
        let base = (i as u64) << 41;
        let n = cfg.n_samples;
        let num_cfg = SamplerConfig::new(theta, cfg.seed).with_stream(base);
        let den_cfg = SamplerConfig::new(theta, cfg.seed).with_stream(base + (1 << 40));
        let h_num: Vec<f64> = homozygosity_draws(&num_cfg, n, 2, residual_cutoff(&num_cfg))?
            .into_iter()
            .map(|p| -p)
            .collect();
        let h_den: Vec<f64> = homozygosity_draws(&den_cfg, n, 2, residual_cutoff(&den_cfg))?
            .into_iter()
            .map(|p| -p)
            .collect();
        for &gamma in &cfg.gammas {
            let alpha = c * theta.powf(1.5 + gamma);
            let (lr, rel_se) = log_ratio(alpha, &h_num, &h_den);
            let r: Vec<f64> = lr.iter().map(|l| l.exp()).collect();
            let sd = (2.0 * c * c).sqrt();
            summaries.push(RatioSummary {
                gamma,
                theta,
                alpha,
                mean_log_r: stats::mean(&lr),
                var_log_r: stats::variance(&lr),
                var_r: stats::variance(&r),
                median_r: stats::median(&r),
                ks_log_r: stats::ks_distance(&lr, |x| normal_cdf((x + c * c) / sd)),
                denominator_rel_se: rel_se,
                unstable: rel_se > 0.1,
            });
        }
    }
    let mut rows = Vec::new();
    let n = cfg.n_samples as f64;
    for s in &summaries {
        let tag = format!("gamma={}", fmt_f64(s.gamma));
        let row = |q: &str, stat: f64, target: f64, err: f64| ReportRow {
            quantity: format!("{tag}:{q}"),
            theta: s.theta,
            statistic: stat,
            target,
            gap: if target.is_finite() {
                (stat - target).abs()
            } else {
                f64::NAN
            },
            err,
            method: Method::MonteCarlo,
        };
        let g = s.gamma;
        let limit_mean = if g == 0.0 { -c * c } else { f64::NAN };
        let limit_var = if g == 0.0 { 2.0 * c * c } else { f64::NAN };
        rows.push(row("mean_log_r", s.mean_log_r, limit_mean, (s.var_log_r / n).sqrt()));
        rows.push(row(
            "var_log_r",
            s.var_log_r,
            limit_var,
            s.var_log_r * (2.0 / (n - 1.0)).sqrt(),
        ));
        rows.push(row("var_r", s.var_r, if g < 0.0 { 0.0 } else { f64::NAN }, f64::NAN));
        rows.push(row(
            "median_r",
            s.median_r,
            if g > 0.0 { 0.0 } else { f64::NAN },
            f64::NAN,
        ));
        rows.push(row("ks_log_r", s.ks_log_r, 0.0, 1.36 / n.sqrt()));
        rows.push(row("denominator_rel_se", s.denominator_rel_se, 0.0, f64::NAN));
    }
    let mut checks = Vec::new();
    let check_theta = cfg.check_at();
    let mut gammas = cfg.gammas.clone();
    gammas.sort_by(|a, b| a.total_cmp(b));
    gammas.dedup();
    for &g in &gammas {
        let of_g: Vec<&RatioSummary> = summaries.iter().filter(|s| s.gamma == g).collect();
        if g < 0.0 {
            let vars: Vec<f64> = of_g.iter().map(|s| s.var_r).collect();
            checks.push(Check {
                name: format!("gamma={g}: var_r_decreasing"),
                passed: vars.len() >= 2 && monotone_approach(&vars),
                detail: format!("Var(R) {vars:?}"),
            });
        } else if g == 0.0 {
            let s = of_g.iter().find(|s| s.theta == check_theta).unwrap();
            let target_var = 2.0 * c * c;
            checks.push(Check {
                name: "gamma=0: mean_log_r".into(),
                passed: (s.mean_log_r + c * c).abs() <= 0.1,
                detail: format!("mean {:.4} vs {} at theta = {}", s.mean_log_r, -c * c, s.theta),
            });
            checks.push(Check {
                name: "gamma=0: var_log_r".into(),
                passed: ((s.var_log_r - target_var) / target_var).abs() <= 0.25,
                detail: format!("variance {:.4} vs {target_var} at theta = {}", s.var_log_r, s.theta),
            });
        } else {
            let s = of_g.iter().find(|s| s.theta == check_theta).unwrap();
            checks.push(Check {
                name: format!("gamma={g}: median_r"),
                passed: s.median_r < 0.01,
                detail: format!("median {:e} at theta = {}", s.median_r, s.theta),
            });
        }
    }
    let unstable: Vec<String> = summaries
        .iter()
        .filter(|s| s.unstable)
        .map(|s| format!("gamma={} theta={}", s.gamma, s.theta))
        .collect();
    let label = if unstable.is_empty() {
        "three-regime density ratio".to_string()
    } else {
        format!(
            "three-regime density ratio; unstable denominator at {}",
            unstable.join(", ")
        )
    };
    let report = ConvergenceReport {
        experiment: format!("verify_gillespie c={}", fmt_f64(c)),
        rows,
        verdict: Verdict {
            passed: checks.iter().all(|c| c.passed),
            label,
            monotone: None,
            final_gap: f64::NAN,
            checks,
        },
    };
    Ok((report, summaries))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseLabel {
    Neutral,
    Tilted,
    Degenerate,
}

/// Phase of a selection regime with its rate function bound in.
#[derive(Debug, Clone)]
pub struct PhaseClass {
    pub label: PhaseLabel,
    pub regime: SelectionRegime,
    /// For `+φ₂` in the linear regime: which side of `c₀` the intensity lies on.
    pub branch: Option<PlusPhiBranch>,
}

impl PhaseClass {
    pub fn rate(&self, p: &[f64]) -> Result<ExtReal> {
        rate_selection(p, &self.regime)
    }
}

pub fn phase_classify(regime: &SelectionRegime) -> Result<PhaseClass> {
    regime.validate()?;
    let (label, branch) = match regime.growth {
        GrowthClass::Sublinear => (PhaseLabel::Neutral, None),
        GrowthClass::Superlinear => (PhaseLabel::Degenerate, None),
        GrowthClass::Linear(c) => {
            let branch = match regime.h {
                HSpec::PlusPhi(2) => Some(plus_phi2_branch(c, solve_c0()?.root)?),
                _ => None,
            };
            (PhaseLabel::Tilted, branch)
        }
    };
    Ok(PhaseClass {
        label,
        regime: regime.clone(),
        branch,
    })
}
