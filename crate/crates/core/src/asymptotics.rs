//! Numerical reproduction of the large-θ limit theorems: LDP decay rates of
//! the ranked frequencies, the Gumbel-type scaling limit, Gaussian
//! fluctuations of the homozygosity and the speed bound for its upper tail.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact_laws::{prob_pk_between, tail_pk, DensityGrid, DEFAULT_RESOLUTION};
use crate::format::fmt_f64;
use crate::quadrature::{GaussLegendre, Integrator};
use crate::rates::{rate_i, rate_ik, ExtReal};
use crate::sampling::{check_theta, map_streams, SamplerConfig, TopK, Truncation};
use crate::special::{ln_gamma, normal_cdf};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSweep {
    pub thetas: Vec<f64>,
    pub samples_per_theta: usize,
    pub seed: u64,
}

impl ThetaSweep {
    pub fn new(thetas: Vec<f64>, samples_per_theta: usize, seed: u64) -> Result<Self> {
        let s = Self {
            thetas,
            samples_per_theta,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.len() < 2 {
            return Err(Error::domain("a theta sweep needs at least two values"));
        }
        for &t in &self.thetas {
            check_theta(t)?;
        }
        if self.thetas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("thetas must be strictly ascending"));
        }
        if self.samples_per_theta == 0 {
            return Err(Error::domain("samples per theta must be positive"));
        }
        Ok(())
    }

    /// Stream offset for the `i`-th θ so that different θ never share streams.
    fn stream_base(&self, i: usize) -> u64 {
        (i as u64) << 40
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub quantity: String,
    pub theta: f64,
    pub statistic: f64,
    pub target: f64,
    pub gap: f64,
    pub err: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub passed: bool,
    pub label: String,
    pub monotone: Option<bool>,
    pub final_gap: f64,
    pub checks: Vec<Check>,
}

impl Verdict {
    fn from_checks(label: &str, monotone: Option<bool>, final_gap: f64, checks: Vec<Check>) -> Self {
        Self {
            passed: checks.iter().all(|c| c.passed),
            label: label.into(),
            monotone,
            final_gap,
            checks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub experiment: String,
    pub rows: Vec<ReportRow>,
    pub verdict: Verdict,
}

impl ConvergenceReport {
    /// CSV with columns `quantity,theta,statistic,target,gap,err,method`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "quantity,theta,statistic,target,gap,err,method")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.quantity,
                fmt_f64(r.theta),
                fmt_f64(r.statistic),
                fmt_f64(r.target),
                fmt_f64(r.gap),
                fmt_f64(r.err),
                r.method.as_str()
            )?;
        }
        Ok(())
    }

    pub fn verdict_json(&self) -> serde_json::Value {
        serde_json::json!({
            "experiment": self.experiment,
            "passed": self.verdict.passed,
            "label": self.verdict.label,
            "monotone": self.verdict.monotone,
            "final_gap": finite_or_null(self.verdict.final_gap),
            "checks": self.verdict.checks,
        })
    }

    pub fn rows_for<'a>(&'a self, quantity: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.quantity == quantity)
    }
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

/// Every gap is no larger than the one before and strictly smaller unless both are negligible.
pub fn monotone_approach(gaps: &[f64]) -> bool {
    gaps.windows(2).all(|w| w[1] < w[0] || (w[0] <= 1e-12 && w[1] <= 1e-12))
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

fn ext(v: ExtReal) -> f64 {
    v.to_f64()
}

/// `−(1/θ) ln P{P1 ≥ x}` from the exact law.
fn p1_decay(grid: &DensityGrid, x: f64) -> Result<f64> {
    Ok(-grid.ln_tail(x)? / grid.theta())
}

/// LDP decay of `P1(θ)` at `x`, using grids at `resolution` and `2·resolution`.
pub fn verify_ldp_p1(sweep: &ThetaSweep, x: f64, resolution: usize) -> Result<ConvergenceReport> {
    sweep.validate()?;
    if !(0.0..1.0).contains(&x) {
        return Err(Error::domain(format!("x must lie in [0,1), got {x}")));
    }
    let target = ext(rate_i(x));
    let rows = sweep
        .thetas
        .par_iter()
        .map(|&theta| -> Result<ReportRow> {
            let coarse = DensityGrid::build(theta, resolution)?;
            let fine = DensityGrid::build(theta, 2 * resolution)?;
            let a = p1_decay(&coarse, x)?;
            let b = p1_decay(&fine, x)?;
            Ok(ReportRow {
                quantity: "decay_p1".into(),
                theta,
                statistic: b,
                target,
                gap: (b - target).abs(),
                err: (a - b).abs(),
                method: Method::Exact,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let mono = monotone_approach(&gaps);
    let final_gap = *gaps.last().unwrap();
    let verdict = Verdict::from_checks(
        "gap to I(x) shrinks along the sweep",
        Some(mono),
        final_gap,
        vec![check("monotone_gap", mono, format!("gaps {gaps:?}"))],
    );
    Ok(ConvergenceReport {
        experiment: format!("verify_ldp_p1 x={}", fmt_f64(x)),
        rows,
        verdict,
    })
}

/// Windows compared in the rank-k ratio law: `|P1 − p| ≤ δ` against `|P_k − p/k| ≤ δ/k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioWindow {
    pub p: f64,
    pub delta: f64,
}

/// Decay of `P_k(θ)` above `x` and the matched-window log-ratio against `P1`.
pub fn verify_ldp_pk(
    sweep: &ThetaSweep,
    k: usize,
    x: f64,
    window: Option<RatioWindow>,
    resolution: usize,
) -> Result<ConvergenceReport> {
    sweep.validate()?;
    if !(k == 2 || k == 3) {
        return Err(Error::Unsupported(format!(
            "rank {k}; only ranks 2 and 3 are supported"
        )));
    }
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::domain(format!("x must lie in (0,1), got {x}")));
    }
    let kf = k as f64;
    let experiment = format!("verify_ldp_pk k={k} x={}", fmt_f64(x));
    if x >= 1.0 / kf {
        let rows = sweep
            .thetas
            .iter()
            .map(|&theta| ReportRow {
                quantity: format!("decay_p{k}"),
                theta,
                statistic: f64::INFINITY,
                target: f64::INFINITY,
                gap: 0.0,
                err: 0.0,
                method: Method::Exact,
            })
            .collect();
        return Ok(ConvergenceReport {
            experiment,
            rows,
            verdict: Verdict::from_checks(
                "out of support",
                None,
                0.0,
                vec![check(
                    "out_of_support",
                    true,
                    format!("P{{P_{k} >= {x}}} = 0 below the 1e-300 sentinel"),
                )],
            ),
        });
    }
    let window = window.unwrap_or(RatioWindow { p: kf * x, delta: 0.05 });
    if !(window.delta > 0.0 && window.p > 0.0 && window.p < 1.0) {
        return Err(Error::domain(format!(
            "ratio window needs p in (0,1) and delta > 0, got {window:?}"
        )));
    }
    let target = ext(rate_ik(k, x));
    let per_theta = sweep
        .thetas
        .par_iter()
        .map(|&theta| -> Result<(ReportRow, ReportRow)> {
            let mut decay = [0.0; 2];
            let mut ratio = [0.0; 2];
            for (slot, res) in [resolution, 2 * resolution].into_iter().enumerate() {
                let grid = DensityGrid::build(theta, res)?;
                let t = tail_pk(&grid, k, x)?;
                decay[slot] = log_over_theta(t, theta, "rank-k tail")?;
                let a = prob_pk_between(&grid, 1, window.p - window.delta, window.p + window.delta)?;
                let b = prob_pk_between(&grid, k, (window.p - window.delta) / kf, (window.p + window.delta) / kf)?;
                ratio[slot] = log_over_theta(b, theta, "rank-k window")? - log_over_theta(a, theta, "top window")?;
            }
            Ok((
                ReportRow {
                    quantity: format!("decay_p{k}"),
                    theta,
                    statistic: decay[1],
                    target,
                    gap: (decay[1] - target).abs(),
                    err: (decay[0] - decay[1]).abs(),
                    method: Method::Exact,
                },
                ReportRow {
                    quantity: "log_ratio".into(),
                    theta,
                    statistic: ratio[1],
                    target: 0.0,
                    gap: ratio[1].abs(),
                    err: (ratio[0] - ratio[1]).abs(),
                    method: Method::Exact,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (decay_rows, ratio_rows): (Vec<_>, Vec<_>) = per_theta.into_iter().unzip();
    let dg: Vec<f64> = decay_rows.iter().map(|r| r.gap).collect();
    let rg: Vec<f64> = ratio_rows.iter().map(|r| r.gap).collect();
    let checks = vec![
        check("monotone_decay_gap", monotone_approach(&dg), format!("gaps {dg:?}")),
        check("monotone_ratio_gap", monotone_approach(&rg), format!("gaps {rg:?}")),
    ];
    let mono = checks.iter().all(|c| c.passed);
    let final_gap = *dg.last().unwrap();
    let mut rows = decay_rows;
    rows.extend(ratio_rows);
    Ok(ConvergenceReport {
        experiment,
        rows,
        verdict: Verdict::from_checks("gaps shrink along the sweep", Some(mono), final_gap, checks),
    })
}

/// `−(1/θ) ln P`, the sign convention of a decay rate.
fn log_over_theta(prob: f64, theta: f64, what: &str) -> Result<f64> {
    if !(prob > 1e-300) {
        return Err(Error::numeric(
            what,
            format!("probability {prob:e} below the 1e-300 sentinel at theta = {theta}"),
        ));
    }
    Ok(-prob.ln() / theta)
}

/// Law of `Y_k` in the Gumbel-type scaling limit, with density
/// `exp(−(ky + e^{−y}))/(k−1)!`, tabulated by Gauss–Legendre panels.
#[derive(Debug, Clone)]
pub struct ScalingLaw {
    k: usize,
    rule: GaussLegendre,
    lo: f64,
    width: f64,
    cum: Vec<f64>,
}

const LAW_LO: f64 = -6.0;
const LAW_HI: f64 = 45.0;
const LAW_PANELS: usize = 1020;

impl ScalingLaw {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("rank must be at least 1"));
        }
        let rule = GaussLegendre::new(12);
        let width = (LAW_HI - LAW_LO) / LAW_PANELS as f64;
        let mut cum = Vec::with_capacity(LAW_PANELS + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for i in 0..LAW_PANELS {
            let a = LAW_LO + i as f64 * width;
            acc += rule.integrate(a, a + width, |y| scaling_density(k, y));
            cum.push(acc);
        }
        Ok(Self {
            k,
            rule,
            lo: LAW_LO,
            width,
            cum,
        })
    }

    pub fn density(&self, y: f64) -> f64 {
        scaling_density(self.k, y)
    }

    /// Mass captured by the table; equals one up to the tails beyond its range.
    pub fn total_mass(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y <= self.lo {
            return 0.0;
        }
        let i = ((y - self.lo) / self.width).floor() as usize;
        if i >= LAW_PANELS {
            return 1.0;
        }
        let a = self.lo + i as f64 * self.width;
        (self.cum[i] + self.rule.integrate(a, y, |t| scaling_density(self.k, t))).min(1.0)
    }

    pub fn mean(&self) -> Result<f64> {
        Integrator::with_tolerances(1e-14, 1e-12)
            .pieces(64)
            .integrate(|y| y * scaling_density(self.k, y), LAW_LO, LAW_HI)
            .map(|q| q.value)
    }
}

fn scaling_density(k: usize, y: f64) -> f64 {
    let kf = k as f64;
    (-(kf * y + (-y).exp()) - ln_gamma(kf)).exp()
}

/// Centering constant for `θ P_k(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// `ln θ − ln ln θ`, the location of the largest jump of the Poisson process
    /// with intensity `θ e^{−x}/x`.
    LogMinusLogLog,
    /// `ln θ + ln ln θ`.
    LogPlusLogLog,
}

impl Centering {
    pub fn beta(self, theta: f64) -> f64 {
        match self {
            Centering::LogMinusLogLog => theta.ln() - theta.ln().ln(),
            Centering::LogPlusLogLog => theta.ln() + theta.ln().ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GumbelOptions {
    pub ranks: Vec<usize>,
    pub ks_threshold: f64,
    pub centering: Centering,
}

impl Default for GumbelOptions {
    fn default() -> Self {
        Self {
            ranks: vec![1],
            ks_threshold: 0.05,
            centering: Centering::LogMinusLogLog,
        }
    }
}

/// Top `r` ranked frequencies of one PD(θ) draw.
///
/// Breaking stops once the residual is below the current `r`-th largest
/// value, after which no later stick can enter the top `r`.
pub fn top_ranks(config: &SamplerConfig, n: usize, r: usize) -> Result<Vec<Vec<f64>>> {
    let cap = config.stick_count()?;
    map_streams(config, n, |_, stream| {
        let mut top = TopK::new(r);
        for _ in 0..cap {
            let (_, x) = stream.next_stick();
            top.offer(x);
            let vals = top.values();
            if vals.len() == r && stream.residual() < vals[r - 1] {
                break;
            }
        }
        let mut v = top.values().to_vec();
        v.resize(r, 0.0);
        v
    })
}

/// Simulated `Y_k(θ) = θP_k(θ) − β(θ)` against the scaling limit.
pub fn verify_gumbel(sweep: &ThetaSweep, opts: &GumbelOptions) -> Result<ConvergenceReport> {
    sweep.validate()?;
    if let Some(&t) = sweep.thetas.iter().find(|&&t| t < std::f64::consts::E) {
        return Err(Error::domain(format!("scaling limit needs theta >= e, got {t}")));
    }
    if opts.ranks.is_empty() || opts.ranks.contains(&0) {
        return Err(Error::domain("ranks must be a nonempty list of positive integers"));
    }
    let r = *opts.ranks.iter().max().unwrap();
    let laws: Vec<(usize, ScalingLaw, f64)> = opts
        .ranks
        .iter()
        .map(|&k| {
            let law = ScalingLaw::new(k)?;
            let m = law.mean()?;
            Ok((k, law, m))
        })
        .collect::<Result<_>>()?;
    let n = sweep.samples_per_theta;
    let crit = 1.36 / (n as f64).sqrt();
    let mut rows = Vec::new();
    for (i, &theta) in sweep.thetas.iter().enumerate() {
        let cfg = SamplerConfig::new(theta, sweep.seed).with_stream(sweep.stream_base(i));
        let tops = top_ranks(&cfg, n, r)?;
        let beta = opts.centering.beta(theta);
        for (k, law, law_mean) in &laws {
            let ys: Vec<f64> = tops.iter().map(|t| theta * t[k - 1] - beta).collect();
            let ks = stats::ks_distance(&ys, |y| law.cdf(y));
            rows.push(ReportRow {
                quantity: format!("ks_y{k}"),
                theta,
                statistic: ks,
                target: 0.0,
                gap: ks,
                err: crit,
                method: Method::MonteCarlo,
            });
            let m = stats::mean(&ys);
            rows.push(ReportRow {
                quantity: format!("mean_y{k}"),
                theta,
                statistic: m,
                target: *law_mean,
                gap: (m - law_mean).abs(),
                err: stats::std_err(&ys),
                method: Method::MonteCarlo,
            });
        }
    }
    let last = *sweep.thetas.last().unwrap();
    let mut checks = Vec::new();
    let mut final_gap: f64 = 0.0;
    for &k in &opts.ranks {
        let q = format!("ks_y{k}");
        let ks = rows
            .iter()
            .find(|r| r.quantity == q && r.theta == last)
            .unwrap()
            .statistic;
        final_gap = final_gap.max(ks);
        checks.push(check(
            &format!("ks_rank_{k}"),
            ks <= opts.ks_threshold,
            format!("KS {ks:.4} at theta = {last} against threshold {}", opts.ks_threshold),
        ));
    }
    let mean_gaps: Vec<f64> = rows.iter().filter(|r| r.quantity == "mean_y1").map(|r| r.gap).collect();
    let mono = if mean_gaps.is_empty() {
        None
    } else {
        Some(monotone_approach(&mean_gaps))
    };
    Ok(ConvergenceReport {
        experiment: "verify_gumbel".into(),
        rows,
        verdict: Verdict::from_checks("KS distance at the largest theta", mono, final_gap, checks),
    })
}

/// Power sums `Σ_k X_k^m` over GEM draws, stopping once the residual is below `cutoff`.
pub fn homozygosity_draws(config: &SamplerConfig, n: usize, m: u32, cutoff: f64) -> Result<Vec<f64>> {
    let cap = config.stick_count()?;
    map_streams(config, n, |_, stream| {
        let mut h = 0.0;
        for _ in 0..cap {
            let (_, x) = stream.next_stick();
            h += x.powi(m as i32);
            if stream.residual() < cutoff {
                break;
            }
        }
        h
    })
}

/// Residual cutoff used when accumulating homozygosities.
pub fn residual_cutoff(config: &SamplerConfig) -> f64 {
    match config.truncation {
        Truncation::ResidualBound { delta, .. } => delta,
        _ => 0.0,
    }
}

/// `Γ(2m)/Γ(m)² − m²`.
pub fn gaussian_hm_variance(m: u32) -> f64 {
    let mf = m as f64;
    (ln_gamma(2.0 * mf) - 2.0 * ln_gamma(mf)).exp() - mf * mf
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOptions {
    /// Relative tolerance on the variance; `None` means 0.15 for `m = 2` and 0.20 above.
    pub variance_tol: Option<f64>,
    pub ks_threshold: f64,
}

impl Default for GaussianOptions {
    fn default() -> Self {
        Self {
            variance_tol: None,
            ks_threshold: 0.05,
        }
    }
}

/// Fluctuations `√θ(θ^{m−1}H_m/Γ(m) − 1)` against `N(0, Γ(2m)/Γ(m)² − m²)`.
pub fn verify_gaussian_hm(sweep: &ThetaSweep, m: u32, opts: GaussianOptions) -> Result<ConvergenceReport> {
    sweep.validate()?;
    if m < 2 {
        return Err(Error::domain(format!("homozygosity order must be at least 2, got {m}")));
    }
    let target = gaussian_hm_variance(m);
    let sd = target.sqrt();
    let tol = opts.variance_tol.unwrap_or(if m == 2 { 0.15 } else { 0.20 });
    let n = sweep.samples_per_theta;
    let mf = m as f64;
    let mut rows = Vec::new();
    for (i, &theta) in sweep.thetas.iter().enumerate() {
        let cfg = SamplerConfig::new(theta, sweep.seed).with_stream(sweep.stream_base(i));
        let hs = homozygosity_draws(&cfg, n, m, residual_cutoff(&cfg))?;
        let scale = ((mf - 1.0) * theta.ln() - ln_gamma(mf)).exp();
        let zs: Vec<f64> = hs.iter().map(|h| theta.sqrt() * (scale * h - 1.0)).collect();
        let var = stats::variance(&zs);
        let mean = stats::mean(&zs);
        let dev4: Vec<f64> = zs.iter().map(|z| (z - mean).powi(4)).collect();
        let mu4 = stats::mean(&dev4);
        let nf = n as f64;
        let var_se = ((mu4 - var * var * (nf - 3.0) / (nf - 1.0)).max(0.0) / nf).sqrt();
        rows.push(ReportRow {
            quantity: "variance".into(),
            theta,
            statistic: var,
            target,
            gap: (var - target).abs() / target,
            err: var_se,
            method: Method::MonteCarlo,
        });
        let ks = stats::ks_distance(&zs, |z| normal_cdf(z / sd));
        rows.push(ReportRow {
            quantity: "ks_normal".into(),
            theta,
            statistic: ks,
            target: 0.0,
            gap: ks,
            err: 1.36 / nf.sqrt(),
            method: Method::MonteCarlo,
        });
        rows.push(ReportRow {
            quantity: "mean".into(),
            theta,
            statistic: mean,
            target: 0.0,
            gap: mean.abs(),
            err: stats::std_err(&zs),
            method: Method::MonteCarlo,
        });
    }
    let last = *sweep.thetas.last().unwrap();
    let pick = |q: &str| {
        rows.iter()
            .find(|r| r.quantity == q && r.theta == last)
            .unwrap()
            .clone()
    };
    let v = pick("variance");
    let ks = pick("ks_normal");
    let mut checks = vec![check(
        "variance",
        v.gap <= tol,
        format!(
            "variance {:.4} vs {target} (relative gap {:.4}, tolerance {tol})",
            v.statistic, v.gap
        ),
    )];
    if m == 2 {
        checks.push(check(
            "ks_normal",
            ks.statistic <= opts.ks_threshold,
            format!("KS {:.4} against threshold {}", ks.statistic, opts.ks_threshold),
        ));
    }
    let var_gaps: Vec<f64> = rows
        .iter()
        .filter(|r| r.quantity == "variance")
        .map(|r| r.gap)
        .collect();
    Ok(ConvergenceReport {
        experiment: format!("verify_gaussian_hm m={m}"),
        rows,
        verdict: Verdict::from_checks(
            "variance and normality at the largest theta",
            Some(monotone_approach(&var_gaps)),
            v.gap,
            checks,
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedBoundReport {
    pub theta: f64,
    pub m: u32,
    pub c: f64,
    pub threshold: f64,
    pub rhs: f64,
    pub lhs: f64,
    pub se: f64,
    pub n_samples: usize,
    pub exponent: f64,
    pub passed: bool,
}

/// Threshold `q = (Γ(m)(1+c)/θ^{m−1})^{1/m}` on the first stick.
pub fn speed_threshold(theta: f64, m: u32, c: f64) -> Result<f64> {
    check_theta(theta)?;
    if m < 2 {
        return Err(Error::domain(format!("homozygosity order must be at least 2, got {m}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("c must be positive, got {c}")));
    }
    let mf = m as f64;
    let ln_q = (ln_gamma(mf) + c.ln_1p() - (mf - 1.0) * theta.ln()) / mf;
    if ln_q > 0.0 {
        return Err(Error::domain(format!(
            "theta^(m-1) must be at least Gamma(m)(1+c); threshold {} exceeds 1",
            ln_q.exp()
        )));
    }
    Ok(ln_q.exp())
}

/// `ln P{X_1 ≥ q}/θ^{1/m} = θ ln(1−q)/θ^{1/m}`.
pub fn speed_exponent(theta: f64, m: u32, c: f64) -> Result<f64> {
    let q = speed_threshold(theta, m, c)?;
    Ok(theta * (-q).ln_1p() / theta.powf(1.0 / m as f64))
}

/// `P{θ^{m−1}H_m/Γ(m) ≥ 1+c}` by Monte Carlo against the exact lower bound `(1−q)^θ`.
pub fn verify_speed_bound(theta: f64, m: u32, c: f64, n_samples: usize, seed: u64) -> Result<SpeedBoundReport> {
    let q = speed_threshold(theta, m, c)?;
    if n_samples == 0 {
        return Err(Error::domain("n_samples must be positive"));
    }
    let rhs = (theta * (-q).ln_1p()).exp();
    let cfg = SamplerConfig::new(theta, seed);
    let hs = homozygosity_draws(&cfg, n_samples, m, residual_cutoff(&cfg))?;
    let mf = m as f64;
    let scale = ((mf - 1.0) * theta.ln() - ln_gamma(mf)).exp();
    let hits: Vec<f64> = hs
        .iter()
        .map(|h| if scale * h >= 1.0 + c { 1.0 } else { 0.0 })
        .collect();
    let lhs = stats::mean(&hits);
    let nf = n_samples as f64;
    // A binomial SE floored at the bound keeps a zero-hit run from claiming zero uncertainty.
    let p_tilde = lhs.max(rhs);
    let se = (p_tilde * (1.0 - p_tilde) / nf).sqrt();
    Ok(SpeedBoundReport {
        theta,
        m,
        c,
        threshold: q,
        rhs,
        lhs,
        se,
        n_samples,
        exponent: speed_exponent(theta, m, c)?,
        passed: lhs >= rhs - 3.0 * se,
    })
}

/// Default resolution re-exported for callers building sweeps.
pub const RESOLUTION: usize = DEFAULT_RESOLUTION;
