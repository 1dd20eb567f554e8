//! Large-deviation rate functions for PD(θ) and its selection tilts.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::format::fmt_f64;

/// A value in `[−∞, +∞]` where only `+∞` is ever needed as a non-finite value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }

    /// Lossy conversion for export and plotting.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => f.write_str(&fmt_f64(*v)),
            ExtReal::Infinite => f.write_str("inf"),
        }
    }
}

/// `−ln(1 − s)` for a total mass `s`, infinite at and beyond 1.
fn neg_log_complement(s: f64) -> ExtReal {
    if (0.0..1.0).contains(&s) {
        ExtReal::Finite(-(-s).ln_1p())
    } else {
        ExtReal::Infinite
    }
}

/// `I(x) = ln 1/(1−x)` on `[0, 1)`, `+∞` elsewhere.
pub fn rate_i(x: f64) -> ExtReal {
    neg_log_complement(x)
}

/// `Λ(λ) = λ − 1 − ln λ` for `λ > 1`, zero otherwise.
pub fn cgf_lambda(lambda: f64) -> f64 {
    if lambda > 1.0 {
        lambda - 1.0 - lambda.ln()
    } else {
        0.0
    }
}

/// `sup_λ {λx − Λ(λ)}` by bisection on the derivative `x − (1 − 1/λ)`.
pub fn legendre_transform(x: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::domain(format!("legendre transform needs x in [0,1), got {x}")));
    }
    let objective = |l: f64| l * x - cgf_lambda(l);
    let slope = |l: f64| x - (1.0 - 1.0 / l);
    let mut lo = 1.0;
    let mut hi = 2.0 / (1.0 - x);
    if slope(lo) <= 0.0 {
        return Ok(objective(lo));
    }
    if slope(hi) >= 0.0 {
        return Err(Error::numeric(
            "legendre transform",
            format!("bracket failed at x = {x}"),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let value = objective(lo).max(objective(hi));
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numeric(
            "legendre transform",
            format!("non-finite value at x = {x}"),
        ))
    }
}

/// `I_k(x) = ln 1/(1 − kx)` on `[0, 1/k]`, `+∞` elsewhere.
pub fn rate_ik(k: usize, x: f64) -> ExtReal {
    if k == 0 || x < 0.0 || x > 1.0 / k as f64 {
        return ExtReal::Infinite;
    }
    neg_log_complement(k as f64 * x)
}

/// True when `p` is nonincreasing, nonnegative and sums to at most one.
pub fn in_closed_simplex(p: &[f64]) -> bool {
    p.iter().all(|&v| v >= 0.0 && v.is_finite()) && p.windows(2).all(|w| w[0] >= w[1]) && p.iter().sum::<f64>() <= 1.0
}

/// `S_n(p) = ln 1/(1 − Σp_k)`; `+∞` on the boundary `Σp_k = 1` and off the simplex.
pub fn rate_sn(p: &[f64]) -> ExtReal {
    if !in_closed_simplex(p) {
        return ExtReal::Infinite;
    }
    neg_log_complement(p.iter().sum())
}

/// What is known about `Σ_{k>n} p_k` beyond a stored prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailCertificate {
    Exact(f64),
    AtMost(f64),
}

/// Interval enclosure of `S(p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInterval {
    pub lo: ExtReal,
    pub hi: ExtReal,
    /// The certified tail leaves it open whether the total mass reaches one.
    pub ambiguous: bool,
}

impl RateInterval {
    /// The value when the enclosure is tighter than `1e−9`.
    pub fn point(&self) -> Option<ExtReal> {
        match (self.lo, self.hi) {
            (ExtReal::Infinite, ExtReal::Infinite) => Some(ExtReal::Infinite),
            (ExtReal::Finite(a), ExtReal::Finite(b)) if b - a < 1e-9 => Some(ExtReal::Finite(a)),
            _ => None,
        }
    }
}

/// `S(p) = ln 1/(1 − Σ_k p_k)` from a finite prefix and a tail certificate.
pub fn rate_s(prefix: &[f64], tail: TailCertificate) -> Result<RateInterval> {
    if !in_closed_simplex(prefix) {
        return Err(Error::domain(
            "prefix must be nonincreasing, nonnegative, with sum at most 1",
        ));
    }
    let (t_lo, t_hi) = match tail {
        TailCertificate::Exact(t) => (t, t),
        TailCertificate::AtMost(t) => (0.0, t),
    };
    if !(t_lo >= 0.0 && t_hi.is_finite()) {
        return Err(Error::domain(format!(
            "tail certificate must be finite and nonnegative, got {tail:?}"
        )));
    }
    let base: f64 = prefix.iter().sum();
    let lo = neg_log_complement(base + t_lo);
    let hi = neg_log_complement(base + t_hi);
    Ok(RateInterval {
        lo,
        hi,
        ambiguous: lo.is_finite() && !hi.is_finite(),
    })
}

/// Rate `I(y^{1/m})` of the homozygosity `H_m`.
pub fn rate_homozygosity(m: u32, y: f64) -> ExtReal {
    if m < 2 || !(0.0..=1.0).contains(&y) {
        return ExtReal::Infinite;
    }
    rate_i(y.powf(1.0 / m as f64))
}

/// Minimum of `S` over configurations with `Σp_k^m = y`, searched over
/// two-atom vectors `(a, b)` on a grid of `points` values of `b` and over
/// `j` equal atoms for `j ≤ 64`. Returns the minimum and its minimizer.
pub fn homozygosity_contraction(m: u32, y: f64, points: usize) -> Result<(ExtReal, Vec<f64>)> {
    if m < 2 {
        return Err(Error::domain(format!("homozygosity order must be at least 2, got {m}")));
    }
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::domain(format!("homozygosity value must lie in [0,1], got {y}")));
    }
    let mf = m as f64;
    let mut best = (ExtReal::Infinite, vec![]);
    let mut consider = |p: Vec<f64>| {
        let s = rate_sn(&p);
        if s < best.0 {
            best = (s, p);
        }
    };
    let b_max = (0.5 * y).powf(1.0 / mf);
    let n = points.max(2);
    for i in 0..n {
        let b = b_max * i as f64 / (n - 1) as f64;
        let a = (y - b.powf(mf)).max(0.0).powf(1.0 / mf);
        let p = if b > 0.0 { vec![a, b] } else { vec![a] };
        consider(p);
    }
    for j in 2..=64usize {
        let a = (y / j as f64).powf(1.0 / mf);
        consider(vec![a; j]);
    }
    Ok(best)
}

/// `φ_m(p) = Σ p_k^m`.
pub fn phi(m: u32, p: &[f64]) -> f64 {
    p.iter().map(|&x| x.powi(m as i32)).sum()
}

pub type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Fitness functional `H` of a selection model.
#[derive(Clone)]
pub enum HSpec {
    MinusPhi(u32),
    PlusPhi(u32),
    Custom {
        f: CustomFn,
        /// A user-asserted unique maximizer of `H` on the closed simplex.
        certified_maximizer: Option<Vec<f64>>,
    },
}

impl fmt::Debug for HSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HSpec::MinusPhi(m) => write!(f, "MinusPhi({m})"),
            HSpec::PlusPhi(m) => write!(f, "PlusPhi({m})"),
            HSpec::Custom {
                certified_maximizer, ..
            } => {
                write!(f, "Custom {{ certified_maximizer: {certified_maximizer:?} }}")
            }
        }
    }
}

impl HSpec {
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            HSpec::MinusPhi(m) => -phi(*m, p),
            HSpec::PlusPhi(m) => phi(*m, p),
            HSpec::Custom { f, .. } => f(p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HSpec::MinusPhi(m) | HSpec::PlusPhi(m) if *m < 2 => {
                Err(Error::domain(format!("phi order must be at least 2, got {m}")))
            }
            _ => Ok(()),
        }
    }

    /// The unique maximizer of `H` on the closed simplex, when known.
    pub fn maximizer(&self) -> Option<Vec<f64>> {
        match self {
            HSpec::MinusPhi(_) => Some(vec![]),
            HSpec::PlusPhi(_) => Some(vec![1.0]),
            HSpec::Custom {
                certified_maximizer, ..
            } => certified_maximizer.clone(),
        }
    }

    /// Parses `minus_phi_<m>` or `plus_phi_<m>`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || {
            Error::domain(format!(
                "unknown fitness functional '{s}'; use minus_phi_<m> or plus_phi_<m>"
            ))
        };
        let (sign, m) = if let Some(rest) = s.strip_prefix("minus_phi_") {
            (false, rest)
        } else if let Some(rest) = s.strip_prefix("plus_phi_") {
            (true, rest)
        } else {
            return Err(bad());
        };
        let m: u32 = m.parse().map_err(|_| bad())?;
        let h = if sign { HSpec::PlusPhi(m) } else { HSpec::MinusPhi(m) };
        h.validate()?;
        Ok(h)
    }

    pub fn label(&self) -> String {
        match self {
            HSpec::MinusPhi(m) => format!("minus_phi_{m}"),
            HSpec::PlusPhi(m) => format!("plus_phi_{m}"),
            HSpec::Custom { .. } => "custom".into(),
        }
    }
}

/// Growth of the selection intensity `α(θ)` relative to `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthClass {
    Sublinear,
    Linear(f64),
    Superlinear,
}

impl GrowthClass {
    /// Class of `α(θ) = c θ^γ`.
    pub fn from_power(c: f64, gamma: f64) -> Self {
        if gamma < 1.0 {
            GrowthClass::Sublinear
        } else if gamma == 1.0 {
            GrowthClass::Linear(c)
        } else {
            GrowthClass::Superlinear
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectionRegime {
    pub growth: GrowthClass,
    pub h: HSpec,
}

impl SelectionRegime {
    pub fn validate(&self) -> Result<()> {
        if let GrowthClass::Linear(c) = self.growth {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::domain(format!("c must be positive, got {c}")));
            }
        }
        self.h.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerShape {
    Empty,
    SingleAtom(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalSolution {
    pub s_star: f64,
    pub sup_value: f64,
    pub shape: OptimizerShape,
    /// Heuristic search without an optimality certificate.
    pub approximate: bool,
}

const SUP_GRID: usize = 10_000;

/// `sup_q {cH(q) − S(q)}` over the closed simplex.
pub fn selection_sup(c: f64, h: &HSpec) -> Result<VariationalSolution> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("c must be positive, got {c}")));
    }
    h.validate()?;
    match h {
        HSpec::MinusPhi(_) => Ok(VariationalSolution {
            s_star: 0.0,
            sup_value: 0.0,
            shape: OptimizerShape::Empty,
            approximate: false,
        }),
        HSpec::PlusPhi(m) => plus_phi_sup(c, *m),
        HSpec::Custom { f, .. } => Ok(custom_sup(c, f.as_ref())),
    }
}

/// Single-atom profile `c s^m + ln(1 − s)`.
fn atom_profile(c: f64, m: u32, s: f64) -> f64 {
    c * s.powi(m as i32) + (-s).ln_1p()
}

fn plus_phi_sup(c: f64, m: u32) -> Result<VariationalSolution> {
    let mf = m as f64;
    // Stationarity m c s^{m−1}(1 − s) = 1; the local maximum is the root above (m−1)/m.
    let station = |s: f64| mf * c * s.powi(m as i32 - 1) * (1.0 - s) - 1.0;
    let peak = (mf - 1.0) / mf;
    let mut best = (0.0, 0.0);
    if station(peak) >= 0.0 {
        let (mut lo, mut hi) = (peak, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if !(mid > lo && mid < hi) {
                break;
            }
            if station(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        let v = atom_profile(c, m, s);
        if v > 0.0 {
            best = (s, v);
        }
    }
    let grid_max = (0..SUP_GRID)
        .map(|i| atom_profile(c, m, i as f64 / SUP_GRID as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    if grid_max > best.1 + 1e-9 {
        return Err(Error::numeric(
            "selection sup",
            format!("grid value {grid_max} exceeds stationary value {} at c = {c}", best.1),
        ));
    }
    let (s_star, sup_value) = best;
    Ok(VariationalSolution {
        s_star,
        sup_value,
        shape: if s_star > 0.0 {
            OptimizerShape::SingleAtom(s_star)
        } else {
            OptimizerShape::Empty
        },
        approximate: false,
    })
}

const CUSTOM_DIM: usize = 16;

fn project(q: &mut [f64]) {
    for v in q.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    q.sort_by(|a, b| b.total_cmp(a));
    let s: f64 = q.iter().sum();
    let cap = 1.0 - 1e-12;
    if s > cap {
        for v in q.iter_mut() {
            *v *= cap / s;
        }
    }
}

fn custom_objective(c: f64, f: &dyn Fn(&[f64]) -> f64, q: &[f64]) -> f64 {
    match rate_sn(q) {
        ExtReal::Finite(s) => {
            let v = c * f(q) - s;
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        }
        ExtReal::Infinite => f64::NEG_INFINITY,
    }
}

fn custom_sup(c: f64, f: &dyn Fn(&[f64]) -> f64) -> VariationalSolution {
    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; CUSTOM_DIM]];
    for s in [0.3, 0.6, 0.9] {
        let mut one = vec![0.0; CUSTOM_DIM];
        one[0] = s;
        starts.push(one);
        starts.push(vec![s / CUSTOM_DIM as f64; CUSTOM_DIM]);
        let mut two = vec![0.0; CUSTOM_DIM];
        two[0] = 0.5 * s;
        two[1] = 0.5 * s;
        starts.push(two);
    }
    let mut best_q = vec![0.0; CUSTOM_DIM];
    let mut best_v = custom_objective(c, f, &best_q);
    for mut q in starts {
        project(&mut q);
        let mut v = custom_objective(c, f, &q);
        let mut step = 0.25;
        while step > 1e-10 {
            let mut improved = false;
            for i in 0..CUSTOM_DIM {
                for dir in [1.0, -1.0] {
                    let mut trial = q.clone();
                    trial[i] += dir * step;
                    project(&mut trial);
                    let tv = custom_objective(c, f, &trial);
                    if tv > v {
                        q = trial;
                        v = tv;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if v > best_v {
            best_v = v;
            best_q = q;
        }
    }
    while best_q.last() == Some(&0.0) {
        best_q.pop();
    }
    VariationalSolution {
        s_star: best_q.iter().sum(),
        sup_value: best_v,
        shape: if best_q.is_empty() {
            OptimizerShape::Empty
        } else {
            OptimizerShape::Vector(best_q)
        },
        approximate: true,
    }
}

fn same_point(p: &[f64], q: &[f64]) -> bool {
    let n = p.len().max(q.len());
    (0..n).all(|i| {
        let a = p.get(i).copied().unwrap_or(0.0);
        let b = q.get(i).copied().unwrap_or(0.0);
        (a - b).abs() <= 1e-12
    })
}

/// Rate function of the tilted family in the given growth regime.
pub fn rate_selection(p: &[f64], regime: &SelectionRegime) -> Result<ExtReal> {
    regime.validate()?;
    let s = rate_sn(p);
    match regime.growth {
        GrowthClass::Sublinear => Ok(s),
        GrowthClass::Linear(c) => {
            let sup = selection_sup(c, &regime.h)?.sup_value;
            Ok(match s {
                ExtReal::Infinite => ExtReal::Infinite,
                ExtReal::Finite(sv) => {
                    let v = sup - c * regime.h.eval(p) + sv;
                    ExtReal::Finite(if v < 0.0 && v > -1e-12 { 0.0 } else { v })
                }
            })
        }
        GrowthClass::Superlinear => {
            let p0 = regime.h.maximizer().ok_or_else(|| {
                Error::Unsupported("superlinear regime needs a certified unique maximizer for a custom fitness".into())
            })?;
            Ok(if same_point(p, &p0) {
                ExtReal::Finite(0.0)
            } else {
                ExtReal::Infinite
            })
        }
    }
}

/// `F(c) = ln((1 − √(1−2/c))/2) + c((1 + √(1−2/c))/2)²` for `c ≥ 2`.
pub fn c0_function(c: f64) -> Result<f64> {
    if !(c >= 2.0 && c.is_finite()) {
        return Err(Error::domain(format!("F(c) is defined for c >= 2, got {c}")));
    }
    let r = (1.0 - 2.0 / c).sqrt();
    Ok((0.5 * (1.0 - r)).ln() + c * (0.5 * (1.0 + r)).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C0Solution {
    pub root: f64,
    pub residual: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// Root of [`c0_function`] on `(2, 10]` by bisection.
pub fn solve_c0() -> Result<C0Solution> {
    let (mut lo, mut hi) = (2.0, 10.0);
    let (f_lo, f_hi) = (c0_function(lo)?, c0_function(hi)?);
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::numeric(
            "c0",
            format!("no sign change: F(2) = {f_lo}, F(10) = {f_hi}"),
        ));
    }
    let mut iterations = 0;
    while iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        iterations += 1;
        if c0_function(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (c0_function(lo)?, c0_function(hi)?);
    let (root, residual) = if flo.abs() <= fhi.abs() { (lo, flo) } else { (hi, fhi) };
    if residual.abs() > 1e-12 {
        return Err(Error::numeric("c0", format!("residual {residual:e} at {root}")));
    }
    Ok(C0Solution {
        root,
        residual: residual.abs(),
        bracket: (lo, hi),
        iterations,
    })
}

/// The constant of the linear-regime rate for `H = +φ₂`, by branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlusPhiBranch {
    AtOrBelowC0 { constant: f64 },
    AboveC0 { constant: f64 },
}

impl PlusPhiBranch {
    pub fn constant(self) -> f64 {
        match self {
            PlusPhiBranch::AtOrBelowC0 { constant } | PlusPhiBranch::AboveC0 { constant } => constant,
        }
    }
}

/// Closed-form constant of the `+φ₂` linear-regime rate at `c`.
pub fn plus_phi2_branch(c: f64, c0: f64) -> Result<PlusPhiBranch> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("c must be positive, got {c}")));
    }
    Ok(if c <= c0 {
        PlusPhiBranch::AtOrBelowC0 { constant: 0.0 }
    } else {
        PlusPhiBranch::AboveC0 {
            constant: c0_function(c)?,
        }
    })
}

/// CSV with columns `x,I,I2,I3,S2_diag`.
pub fn write_rate_table<W: Write>(xs: &[f64], mut out: W) -> std::io::Result<()> {
    writeln!(out, "x,I,I2,I3,S2_diag")?;
    for &x in xs {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(x),
            rate_i(x),
            rate_ik(2, x),
            rate_ik(3, x),
            rate_sn(&[x, x])
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fin(v: ExtReal) -> f64 {
        v.finite().expect("finite rate")
    }

    #[test]
    fn closed_forms() {
        assert_eq!(rate_i(0.0), ExtReal::Finite(0.0));
        assert!((fin(rate_i(0.5)) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(rate_i(1.0), ExtReal::Infinite);
        assert_eq!(rate_i(-0.1), ExtReal::Infinite);
        assert_eq!(cgf_lambda(1.0), 0.0);
        assert!((cgf_lambda(2.0) - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert_eq!(cgf_lambda(-5.0), 0.0);
        assert!((fin(rate_ik(2, 0.25)) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(rate_ik(2, 0.6), ExtReal::Infinite);
        assert_eq!(rate_sn(&[0.0, 0.0]), ExtReal::Finite(0.0));
        assert!((fin(rate_sn(&[0.3, 0.2])) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(rate_sn(&[0.5, 0.5]), ExtReal::Infinite);
        assert_eq!(rate_sn(&[0.2, 0.3]), ExtReal::Infinite);
    }

    #[test]
    fn rank_one_matches_i() {
        for i in 0..100 {
            let x = i as f64 / 100.0;
            assert_eq!(rate_ik(1, x), rate_i(x));
        }
    }

    #[test]
    fn legendre_duality() {
        assert_eq!(legendre_transform(0.0).unwrap(), 0.0);
        for i in 1..100 {
            let x = 0.99 * i as f64 / 100.0;
            let d = (legendre_transform(x).unwrap() - fin(rate_i(x))).abs();
            assert!(d <= 1e-9, "x={x}: {d}");
        }
        assert!((legendre_transform(0.9).unwrap() - 10f64.ln()).abs() < 1e-9);
        assert!(legendre_transform(1.0).is_err());
    }

    #[test]
    fn tail_certificates() {
        let mut geo: Vec<f64> = (1..=40).map(|k| 0.5f64.powi(k)).collect();
        let tail = 0.5f64.powi(40);
        let r = rate_s(&geo, TailCertificate::Exact(tail)).unwrap();
        assert_eq!(r.point(), Some(ExtReal::Infinite));
        let r = rate_s(&geo, TailCertificate::AtMost(tail)).unwrap();
        assert!(r.ambiguous && r.point().is_none());
        geo.clear();
        assert_eq!(
            rate_s(&geo, TailCertificate::Exact(0.0)).unwrap().point(),
            Some(ExtReal::Finite(0.0))
        );
        let r = rate_s(&[0.3, 0.2], TailCertificate::Exact(0.0)).unwrap();
        assert!((fin(r.point().unwrap()) - 2f64.ln()).abs() < 1e-15);
        let r = rate_s(&[0.3, 0.2], TailCertificate::AtMost(1e-12)).unwrap();
        assert!(!r.ambiguous && r.point().is_some());
        assert!(rate_s(&[0.2, 0.3], TailCertificate::Exact(0.0)).is_err());
    }

    #[test]
    fn homozygosity_rate_and_contraction() {
        assert_eq!(rate_homozygosity(2, 0.0), ExtReal::Finite(0.0));
        assert!((fin(rate_homozygosity(2, 0.25)) - 2f64.ln()).abs() < 1e-15);
        for m in [2, 3] {
            for y in [0.1, 0.25, 0.5] {
                let (v, arg) = homozygosity_contraction(m, y, 2001).unwrap();
                assert!((fin(v) - fin(rate_homozygosity(m, y))).abs() < 1e-4);
                assert_eq!(arg.len(), 1);
            }
        }
    }

    #[test]
    fn minus_phi_sup_is_zero() {
        for c in [0.1, 1.0, 10.0] {
            let s = selection_sup(c, &HSpec::MinusPhi(2)).unwrap();
            assert_eq!(s.sup_value, 0.0);
            assert_eq!(s.shape, OptimizerShape::Empty);
        }
    }

    #[test]
    fn plus_phi_sup_below_and_above_threshold() {
        let s = selection_sup(2.0, &HSpec::PlusPhi(2)).unwrap();
        assert_eq!(s.sup_value, 0.0);
        let s = selection_sup(2.5, &HSpec::PlusPhi(2)).unwrap();
        let want = 0.5 * (1.0 + (1.0 - 2.0 / 2.5f64).sqrt());
        assert!((s.s_star - want).abs() < 1e-12);
        assert!((s.s_star - 0.7236).abs() < 1e-4);
        assert!((s.sup_value - 0.0230).abs() < 1e-4);
        assert!(matches!(s.shape, OptimizerShape::SingleAtom(_)));
    }

    #[test]
    fn c0_root() {
        assert!(c0_function(2.2).unwrap() < 0.0);
        assert!(c0_function(2.5).unwrap() > 0.0);
        let sol = solve_c0().unwrap();
        assert!(sol.residual <= 1e-12);
        assert!(sol.root > 2.2 && sol.root < 2.5);
        // Both constant expressions coincide at the threshold.
        let below = selection_sup(sol.root, &HSpec::PlusPhi(2)).unwrap().sup_value;
        let above = c0_function(sol.root).unwrap();
        assert!((below - above).abs() < 1e-9);
    }

    #[test]
    fn eq46_constants_match_sup() {
        let c0 = solve_c0().unwrap().root;
        for c in [2.5, 3.0, 5.0] {
            let b = plus_phi2_branch(c, c0).unwrap();
            assert!(matches!(b, PlusPhiBranch::AboveC0 { .. }));
            let sup = selection_sup(c, &HSpec::PlusPhi(2)).unwrap().sup_value;
            assert!((b.constant() - sup).abs() < 1e-9);
        }
        assert_eq!(
            plus_phi2_branch(2.1, c0).unwrap(),
            PlusPhiBranch::AtOrBelowC0 { constant: 0.0 }
        );
    }

    #[test]
    fn selection_rates() {
        let neutral = SelectionRegime {
            growth: GrowthClass::Sublinear,
            h: HSpec::PlusPhi(2),
        };
        let p = [0.3, 0.2];
        assert_eq!(rate_selection(&p, &neutral).unwrap(), rate_sn(&p));
        let lin = SelectionRegime {
            growth: GrowthClass::Linear(1.5),
            h: HSpec::MinusPhi(2),
        };
        assert_eq!(rate_selection(&[], &lin).unwrap(), ExtReal::Finite(0.0));
        let v = fin(rate_selection(&p, &lin).unwrap());
        assert!((v - (1.5 * phi(2, &p) + 2f64.ln())).abs() < 1e-14);
        let sup = SelectionRegime {
            growth: GrowthClass::Superlinear,
            h: HSpec::MinusPhi(2),
        };
        assert_eq!(rate_selection(&p, &sup).unwrap(), ExtReal::Infinite);
        assert_eq!(rate_selection(&[0.0], &sup).unwrap(), ExtReal::Finite(0.0));
        let sup = SelectionRegime {
            growth: GrowthClass::Superlinear,
            h: HSpec::PlusPhi(2),
        };
        assert_eq!(rate_selection(&[1.0], &sup).unwrap(), ExtReal::Finite(0.0));
        let custom = SelectionRegime {
            growth: GrowthClass::Superlinear,
            h: HSpec::Custom {
                f: Arc::new(|q: &[f64]| q.iter().sum()),
                certified_maximizer: None,
            },
        };
        assert!(matches!(rate_selection(&p, &custom), Err(Error::Unsupported(_))));
    }

    #[test]
    fn linear_plus_phi_rate_vanishes_at_optimizer() {
        for c in [1.0, 3.0] {
            let reg = SelectionRegime {
                growth: GrowthClass::Linear(c),
                h: HSpec::PlusPhi(2),
            };
            let sol = selection_sup(c, &reg.h).unwrap();
            let at = if sol.s_star > 0.0 { vec![sol.s_star] } else { vec![] };
            assert!(fin(rate_selection(&at, &reg).unwrap()).abs() < 1e-12);
            for q in [[0.1, 0.05], [0.6, 0.1], [0.45, 0.45]] {
                assert!(fin(rate_selection(&q, &reg).unwrap()) >= 0.0);
            }
        }
    }

    #[test]
    fn custom_search_recovers_plus_phi() {
        let h = HSpec::Custom {
            f: Arc::new(|q: &[f64]| phi(2, q)),
            certified_maximizer: None,
        };
        let got = selection_sup(3.0, &h).unwrap();
        let want = selection_sup(3.0, &HSpec::PlusPhi(2)).unwrap();
        assert!(got.approximate);
        assert!((got.sup_value - want.sup_value).abs() < 1e-6, "{got:?}");
    }

    #[test]
    fn parse_h() {
        assert!(matches!(HSpec::parse("minus_phi_2").unwrap(), HSpec::MinusPhi(2)));
        assert!(matches!(HSpec::parse("plus_phi_3").unwrap(), HSpec::PlusPhi(3)));
        assert!(HSpec::parse("plus_phi_1").is_err());
        assert!(HSpec::parse("phi").is_err());
    }

    #[test]
    fn table_export() {
        let mut buf = Vec::new();
        write_rate_table(&[0.0, 0.25, 0.6], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "x,I,I2,I3,S2_diag");
        assert!(lines[3].ends_with(",inf,inf,inf"));
    }
}
