//! Exact laws of the ranked PD(θ) frequencies.
//!
//! The density `g1` of the largest frequency satisfies
//! `g1(p) p (1-p)^{1-θ} = θ F1((p/(1-p)) ∧ 1)` with `F1` its CDF. On the top band
//! `(1/2, 1)` the right side is `θ`, giving the closed form `θ(1-p)^{θ-1}/p`. On
//! a lower band `(1/(k+1), 1/k]` the argument `p/(1-p)` lands in band `k-1`, so the
//! grid is built band by band from the top down. Each band is split into
//! Gauss–Legendre panels (geometrically refined toward both band edges) and the
//! tail `T(x) = P{P1 ≥ x}` is accumulated from the right.

use std::io::Write;

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::quadrature::{barycentric_eval, barycentric_weights, GaussLegendre, Integrator};
use crate::sampling::check_theta;
use crate::special::{exp_integral_j, ln_gamma};

/// Gauss–Legendre order inside each panel.
pub const PANEL_ORDER: usize = 10;
/// Default minimum number of nodes per band.
pub const DEFAULT_RESOLUTION: usize = 160;
const GRADING_LEVELS: usize = 12;
const MAX_BANDS: usize = 200_000;
/// Flat-extrapolated mass below the deepest band must fall under this.
const BELOW_MASS_TARGET: f64 = 1e-12;
const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
struct Panel {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
    /// `T(b)`.
    tail_right: f64,
}

#[derive(Debug, Clone)]
struct Band {
    k: usize,
    lo: f64,
    hi: f64,
    panels: Vec<Panel>,
}

/// Band-resolved representation of the density of `P1(θ)` and its tail.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    theta: f64,
    resolution: usize,
    rule: GaussLegendre,
    bary: Vec<f64>,
    /// Band 1 (closed form); kept only for export.
    top: Band,
    /// Bands `k = 2..=K`.
    bands: Vec<Band>,
    cut: f64,
    below_mass: f64,
    normalization: f64,
}

/// Tail `T(x)` on the closed-form band `x ∈ [1/2, 1]`, in log form:
/// `T(x) = θ Σ_j (1-x)^{θ+j} / (θ+j)`.
pub fn ln_top_band_tail(theta: f64, x: f64) -> f64 {
    debug_assert!((0.5..=1.0).contains(&x));
    let r = 1.0 - x;
    if r <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    let mut pow = 1.0;
    for j in 0..2000 {
        let term = pow / (theta + j as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
        pow *= r;
    }
    theta * r.ln() + (theta * sum).ln()
}

fn ln_top_band_density(theta: f64, p: f64) -> f64 {
    theta.ln() + (theta - 1.0) * (-p).ln_1p() - p.ln()
}

impl DensityGrid {
    /// Builds the grid with at least `resolution` nodes per band.
    pub fn build(theta: f64, resolution: usize) -> Result<Self> {
        check_theta(theta)?;
        if resolution == 0 {
            return Err(Error::domain("resolution must be at least 1 node per band"));
        }
        let rule = GaussLegendre::new(PANEL_ORDER);
        let bary = barycentric_weights(&rule.nodes);
        let mut grid = DensityGrid {
            theta,
            resolution,
            rule,
            bary,
            top: Band {
                k: 1,
                lo: 0.5,
                hi: 1.0,
                panels: Vec::new(),
            },
            bands: Vec::new(),
            cut: 0.5,
            below_mass: 0.0,
            normalization: f64::NAN,
        };
        grid.top.panels = grid
            .panel_bounds(0.5, 1.0)
            .into_iter()
            .map(|(a, b)| {
                let nodes: Vec<f64> = grid.rule.mapped_nodes(a, b).collect();
                let values = nodes.iter().map(|&p| ln_top_band_density(theta, p).exp()).collect();
                Panel {
                    a,
                    b,
                    nodes,
                    values,
                    tail_right: ln_top_band_tail(theta, b).exp(),
                }
            })
            .collect();

        let mut tail_hi = ln_top_band_tail(theta, 0.5).exp();
        for k in 2..MAX_BANDS {
            let lo = 1.0 / (k as f64 + 1.0);
            let hi = 1.0 / k as f64;
            let mut panels = Vec::new();
            for (a, b) in grid.panel_bounds(lo, hi) {
                let nodes: Vec<f64> = grid.rule.mapped_nodes(a, b).collect();
                let values = nodes.iter().map(|&p| grid.density_formula(p)).collect();
                panels.push(Panel {
                    a,
                    b,
                    nodes,
                    values,
                    tail_right: 0.0,
                });
            }
            let half_widths: Vec<f64> = panels.iter().map(|p| 0.5 * (p.b - p.a)).collect();
            let mut acc = tail_hi;
            for (panel, half) in panels.iter_mut().zip(half_widths).rev() {
                panel.tail_right = acc;
                let mass: f64 = panel
                    .values
                    .iter()
                    .zip(&grid.rule.weights)
                    .map(|(v, w)| v * w)
                    .sum::<f64>()
                    * half;
                acc += mass;
            }
            grid.bands.push(Band { k, lo, hi, panels });
            grid.cut = lo;
            tail_hi = acc;

            let edge_density = grid.density_formula(lo);
            let below = edge_density * lo;
            if !acc.is_finite() || !below.is_finite() {
                return Err(Error::numeric(
                    "g1 band recursion",
                    format!("non-finite tail at band {k} for theta = {theta}"),
                ));
            }
            if acc > 0.5 && below < BELOW_MASS_TARGET {
                grid.below_mass = below;
                grid.normalization = acc + below;
                break;
            }
        }
        if grid.normalization.is_nan() {
            return Err(Error::numeric(
                "g1 band recursion",
                format!("mass below 1/(K+1) not negligible after {MAX_BANDS} bands"),
            ));
        }
        if (grid.normalization - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::numeric(
                "g1 band recursion",
                format!(
                    "total mass {} misses 1 by more than {NORMALIZATION_TOL:e}; resolution {resolution} too coarse",
                    grid.normalization
                ),
            ));
        }
        Ok(grid)
    }

    fn panel_bounds(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let width = hi - lo;
        let by_resolution = self.resolution.div_ceil(PANEL_ORDER);
        let by_theta = (2.0 * self.theta * width).ceil() as usize;
        let n = by_resolution.max(by_theta).max(2);
        let h = width / n as f64;
        let mut cuts = Vec::with_capacity(n + 2 * GRADING_LEVELS + 1);
        cuts.push(lo);
        for j in (1..=GRADING_LEVELS).rev() {
            cuts.push(lo + h * 0.5f64.powi(j as i32));
        }
        for i in 1..n {
            cuts.push(lo + h * i as f64);
        }
        for j in 1..=GRADING_LEVELS {
            cuts.push(hi - h * 0.5f64.powi(j as i32));
        }
        cuts.push(hi);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// `θ(1-p)^{θ-1}/p · F1((p/(1-p)) ∧ 1)` using the bands built so far.
    fn density_formula(&self, p: f64) -> f64 {
        if !(p > 0.0 && p < 1.0) {
            return 0.0;
        }
        let lead = ln_top_band_density(self.theta, p);
        if p > 0.5 {
            return lead.exp();
        }
        let cdf = self.cdf(p / (1.0 - p));
        if cdf <= 0.0 {
            return 0.0;
        }
        (lead + cdf.ln()).exp()
    }

    fn locate(&self, x: f64) -> Option<(&Band, &Panel)> {
        if x >= 0.5 || x < self.cut {
            return None;
        }
        let mut k = (1.0 / x).floor() as usize;
        k = k.max(2);
        while k > 2 && x > 1.0 / k as f64 {
            k -= 1;
        }
        while x <= 1.0 / (k as f64 + 1.0) {
            k += 1;
        }
        let band = self.bands.get(k - 2)?;
        let idx = band.panels.partition_point(|p| p.b < x);
        let panel = band.panels.get(idx.min(band.panels.len() - 1))?;
        Some((band, panel))
    }

    fn interpolate(&self, panel: &Panel, x: f64) -> f64 {
        barycentric_eval(&panel.nodes, &self.bary, &panel.values, x)
    }

    /// `P{P1(θ) ≥ x}`.
    pub fn tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x >= 1.0 {
            return 0.0;
        }
        if x >= 0.5 {
            return ln_top_band_tail(self.theta, x).exp();
        }
        if x < self.cut {
            return self.tail_at_cut() + self.below_mass * (self.cut - x) / self.cut;
        }
        match self.locate(x) {
            Some((_, panel)) => {
                let partial = self.rule.integrate(x, panel.b, |t| self.interpolate(panel, t));
                panel.tail_right + partial
            }
            None => self.tail_at_cut(),
        }
    }

    /// `ln P{P1(θ) ≥ x}`; exact in log form on the top band so it survives huge θ.
    pub fn ln_tail(&self, x: f64) -> Result<f64> {
        if (0.5..=1.0).contains(&x) {
            return Ok(ln_top_band_tail(self.theta, x));
        }
        let t = self.tail(x);
        if t < 1e-300 {
            return Err(Error::numeric(
                "g1 tail",
                format!("P{{P1 >= {x}}} underflows at theta = {}", self.theta),
            ));
        }
        Ok(t.ln())
    }

    fn tail_at_cut(&self) -> f64 {
        self.normalization - self.below_mass
    }

    /// CDF of `P1(θ)`, floored at zero.
    pub fn cdf(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return 1.0;
        }
        (1.0 - self.tail(x)).max(0.0)
    }

    /// Density `g1(p)`; zero outside `(0, 1)`. Band edges `1/k` take the value from
    /// the band on their left, `(1/(k+1), 1/k]`.
    pub fn density(&self, p: f64) -> f64 {
        self.density_formula(p)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Deepest band index `K`.
    pub fn depth(&self) -> usize {
        self.bands.last().map_or(1, |b| b.k)
    }

    /// Lower edge `1/(K+1)` of the deepest band.
    pub fn cut(&self) -> f64 {
        self.cut
    }

    /// Flat-extrapolated mass assigned to `(0, 1/(K+1)]`.
    pub fn below_mass(&self) -> f64 {
        self.below_mass
    }

    /// Total integral of the density, including the extrapolated piece.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn node_count(&self) -> usize {
        self.all_bands().map(|b| b.panels.len() * PANEL_ORDER).sum()
    }

    fn all_bands(&self) -> impl Iterator<Item = &Band> {
        std::iter::once(&self.top).chain(self.bands.iter())
    }

    /// `(band_k, p, g1, tail)` at every node, ordered by increasing `p`.
    pub fn nodes(&self) -> Vec<(usize, f64, f64, f64)> {
        let mut rows = Vec::with_capacity(self.node_count());
        for band in self.all_bands() {
            for panel in &band.panels {
                for (&p, &g) in panel.nodes.iter().zip(&panel.values) {
                    rows.push((band.k, p, g, self.tail(p)));
                }
            }
        }
        rows.sort_by(|a, b| a.1.total_cmp(&b.1));
        rows
    }

    /// Band edges `(k, lo, hi)` for `k = 1..=K`.
    pub fn bands(&self) -> Vec<(usize, f64, f64)> {
        self.all_bands().map(|b| (b.k, b.lo, b.hi)).collect()
    }

    /// `E[P1(θ)] = ∫_0^1 T(x) dx`.
    pub fn mean(&self) -> Result<f64> {
        let mut breaks: Vec<f64> = vec![0.0, self.cut];
        for b in self.bands.iter().rev() {
            breaks.push(b.hi);
        }
        breaks.push(1.0);
        breaks.dedup();
        Integrator::with_tolerances(1e-15, 1e-11)
            .pieces(2)
            .integrate_breaks(|x| self.tail(x), &breaks)
            .map(|q| q.value)
    }

    /// Writes the grid as CSV with columns `band_k,p,g1,tail`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "band_k,p,g1,tail")?;
        for (k, p, g, t) in self.nodes() {
            writeln!(out, "{k},{},{},{}", fmt_f64(p), fmt_f64(g), fmt_f64(t))?;
        }
        Ok(())
    }
}

/// Builds a [`DensityGrid`]; see [`DensityGrid::build`].
pub fn g1_density(theta: f64, resolution: usize) -> Result<DensityGrid> {
    DensityGrid::build(theta, resolution)
}

/// `P{P1(θ) ≥ x}` read off the grid.
pub fn tail_p1(grid: &DensityGrid, x: f64) -> f64 {
    grid.tail(x)
}

fn check_grid_theta(theta: f64, grid: &DensityGrid) -> Result<()> {
    if (theta - grid.theta).abs() > 1e-12 * theta.abs().max(1.0) {
        return Err(Error::domain(format!(
            "grid was built for theta = {}, not {theta}",
            grid.theta
        )));
    }
    Ok(())
}

/// Joint density of `(P1, …, Pn)` at `p`; zero outside the open ordered simplex.
pub fn gn_density(theta: f64, p: &[f64], grid: &DensityGrid) -> Result<f64> {
    check_grid_theta(theta, grid)?;
    if p.is_empty() {
        return Err(Error::domain("joint density needs at least one coordinate"));
    }
    Ok(joint_density(grid, p))
}

fn joint_density(grid: &DensityGrid, p: &[f64]) -> f64 {
    let n = p.len();
    let last = p[n - 1];
    if !(last > 0.0 && p[0] < 1.0) || p.windows(2).any(|w| !(w[0] > w[1])) {
        return 0.0;
    }
    let sum: f64 = p.iter().sum();
    if !(sum < 1.0) {
        return 0.0;
    }
    let rest = 1.0 - sum;
    let arg = (last / rest).min(1.0);
    let cdf = if arg >= 1.0 { 1.0 } else { grid.cdf(arg) };
    if cdf <= 0.0 {
        return 0.0;
    }
    let theta = grid.theta;
    let ln = n as f64 * theta.ln() + (theta - 1.0) * rest.ln() - p.iter().map(|x| x.ln()).sum::<f64>() + cdf.ln();
    ln.exp()
}

fn marginal_integrator() -> Integrator {
    Integrator {
        abs_tol: 0.0,
        rel_tol: 1e-9,
        max_intervals: 2000,
        initial_pieces: 1,
    }
}

/// Breakpoints where `x / (remaining)` crosses a band edge `1/j`, as `first` varies in `(lo, hi)`
/// with `remaining = base - first`.
fn band_crossings(lo: f64, hi: f64, base: f64, x: f64) -> Vec<f64> {
    let mut pts = vec![lo];
    let mut j = 1usize;
    loop {
        let c = base - j as f64 * x;
        if c <= lo {
            break;
        }
        if c < hi {
            pts.push(c);
        }
        j += 1;
        if j > 100_000 {
            break;
        }
    }
    pts.push(hi);
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    pts
}

fn marginal_density(grid: &DensityGrid, k: usize, x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0 / k as f64) {
        return Ok(0.0);
    }
    match k {
        2 => {
            // p1 ∈ (x, 1 - x); kinks where x/(1 - p1 - x) = 1/j.
            let breaks = band_crossings(x, 1.0 - x, 1.0 - x, x);
            marginal_integrator()
                .integrate_breaks(|p1| joint_density(grid, &[p1, x]), &breaks)
                .map(|q| q.value)
        }
        3 => {
            let outer = |p2: f64| -> f64 {
                let hi = 1.0 - x - p2;
                if hi <= p2 {
                    return 0.0;
                }
                let breaks = band_crossings(p2, hi, 1.0 - x - p2, x);
                marginal_integrator()
                    .integrate_breaks(|p1| joint_density(grid, &[p1, p2, x]), &breaks)
                    .map(|q| q.value)
                    .unwrap_or(f64::NAN)
            };
            let q = marginal_integrator().integrate(outer, x, 0.5 * (1.0 - x))?;
            Ok(q.value)
        }
        _ => Err(Error::Unsupported(format!(
            "marginal density of P_{k}; only ranks 2 and 3 are supported"
        ))),
    }
}

/// Density of `P_k(θ)` at `x` for `k ∈ {2, 3}` by quadrature of the joint density.
pub fn marginal_pk(theta: f64, k: usize, x: f64, grid: &DensityGrid) -> Result<f64> {
    check_grid_theta(theta, grid)?;
    if !(k == 2 || k == 3) {
        return Err(Error::Unsupported(format!(
            "marginal density of P_{k}; only ranks 2 and 3 are supported"
        )));
    }
    marginal_density(grid, k, x)
}

/// `P{lo ≤ P_k(θ) ≤ hi}` for `k ∈ {1, 2, 3}`.
pub fn prob_pk_between(grid: &DensityGrid, k: usize, lo: f64, hi: f64) -> Result<f64> {
    let top = 1.0 / k as f64;
    let lo = lo.max(0.0);
    let hi = hi.min(top);
    if !(hi > lo) {
        return Ok(0.0);
    }
    match k {
        1 => {
            let mut breaks = vec![lo];
            let mut j = 2usize;
            while 1.0 / (j as f64) > lo {
                let e = 1.0 / j as f64;
                if e < hi {
                    breaks.push(e);
                }
                j += 1;
            }
            breaks.push(hi);
            breaks.sort_by(|a, b| a.total_cmp(b));
            breaks.dedup();
            marginal_integrator()
                .integrate_breaks(|p| grid.density(p), &breaks)
                .map(|q| q.value)
        }
        2 | 3 => {
            let mut failure = None;
            let q = marginal_integrator().pieces(4).integrate(
                |t| match marginal_density(grid, k, t) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                },
                lo,
                hi,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            q.map(|q| q.value)
        }
        _ => Err(Error::Unsupported(format!(
            "probabilities for P_{k}; only ranks 1 to 3 are supported"
        ))),
    }
}

/// `P{P_k(θ) ≥ x}` for `k ∈ {1, 2, 3}`.
pub fn tail_pk(grid: &DensityGrid, k: usize, x: f64) -> Result<f64> {
    if k == 1 {
        return Ok(grid.tail(x));
    }
    prob_pk_between(grid, k, x, 1.0 / k as f64)
}

/// Rank and moment order for [`moment_pk`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentQuery {
    pub k: usize,
    pub n: u32,
    pub theta: f64,
}

/// `E[P_k(θ)^n]` by quadrature of the Griffiths integral
/// `θ^k Γ(θ)/Γ(θ+n) ∫_0^∞ u^{n-1} J(u)^{k-1}/(k-1)! e^{-u-θJ(u)} du`.
pub fn moment_pk(q: MomentQuery) -> Result<f64> {
    let MomentQuery { k, n, theta } = q;
    check_theta(theta)?;
    if k == 0 || n == 0 {
        return Err(Error::domain("rank k and moment order n must be at least 1"));
    }
    let kf = k as f64;
    let nf = n as f64;
    let ln_pref = kf * theta.ln() + ln_gamma(theta) - ln_gamma(theta + nf) - ln_gamma(kf);
    let integrand = |u: f64| -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let j = match exp_integral_j(u) {
            Ok(j) => j,
            Err(_) => return 0.0,
        };
        if j <= 0.0 {
            return 0.0;
        }
        let ln = ln_pref + (nf - 1.0) * u.ln() + (kf - 1.0) * j.ln() - u - theta * j;
        ln.exp()
    };
    // The mass sits where θ J(u) is O(k), i.e. around u ≈ ln θ.
    let center = theta.ln().max(1.0);
    let upper = (center + 80.0 + nf).max(100.0);
    let mut breaks = vec![0.0];
    let mut b = 1e-3;
    while b < upper {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(center);
    breaks.push(upper);
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    let integ = Integrator {
        abs_tol: 0.0,
        rel_tol: 1e-10,
        max_intervals: 4000,
        initial_pieces: 2,
    };
    integ
        .integrate_breaks(integrand, &breaks)
        .map(|r| r.value)
        .map_err(|e| match e {
            Error::Numeric { detail, .. } => Error::numeric(format!("moment E[P_{k}^{n}] at theta = {theta}"), detail),
            other => other,
        })
}

/// `E[H_m(θ)] = Γ(m) / ((θ+1)(θ+2)⋯(θ+m-1))` for `θ ≥ 0`.
pub fn homozygosity_moment(m: u32, theta: f64) -> f64 {
    assert!(m >= 2, "homozygosity order must be at least 2");
    let mut v = 1.0;
    for j in 1..m {
        v *= j as f64 / (theta + j as f64);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_band_is_closed_form() {
        let g = DensityGrid::build(1.0, DEFAULT_RESOLUTION).unwrap();
        for p in [0.51, 0.6, 0.75, 0.99] {
            assert!((g.density(p) - 1.0 / p).abs() < 1e-14);
        }
        let want = (1.0f64 / 0.6).ln();
        assert!((g.tail(0.6) - want).abs() < 1e-12);
        assert!((want - 0.5108).abs() < 1e-4);
    }

    #[test]
    fn tail_endpoints() {
        let g = DensityGrid::build(3.0, DEFAULT_RESOLUTION).unwrap();
        assert_eq!(g.tail(0.0), 1.0);
        assert_eq!(g.tail(1.0), 0.0);
        assert!(g.tail(-0.3) == 1.0 && g.tail(1.7) == 0.0);
    }

    #[test]
    fn normalization_across_theta() {
        for theta in [0.5, 1.0, 2.0, 5.0, 10.0, 50.0] {
            let g = DensityGrid::build(theta, DEFAULT_RESOLUTION).unwrap();
            assert!(
                (g.normalization() - 1.0).abs() < 1e-6,
                "theta {theta}: {}",
                g.normalization()
            );
            assert!(g.nodes().iter().all(|r| r.2 >= 0.0));
        }
    }

    #[test]
    fn tail_is_monotone() {
        let g = DensityGrid::build(7.0, DEFAULT_RESOLUTION).unwrap();
        let mut prev = 1.0 + 1e-12;
        for i in 0..=1000 {
            let t = g.tail(i as f64 / 1000.0);
            assert!(t <= prev + 1e-12);
            prev = t;
        }
    }

    #[test]
    fn grid_mean_matches_griffiths_moment() {
        for theta in [1.0, 5.0, 20.0] {
            let g = DensityGrid::build(theta, DEFAULT_RESOLUTION).unwrap();
            let a = g.mean().unwrap();
            let b = moment_pk(MomentQuery { k: 1, n: 1, theta }).unwrap();
            assert!((a - b).abs() < 1e-7, "theta {theta}: {a} vs {b}");
        }
    }

    #[test]
    fn ldp_tail_at_theta_100() {
        let g = DensityGrid::build(100.0, DEFAULT_RESOLUTION).unwrap();
        let stat = -g.ln_tail(0.6).unwrap() / 100.0;
        let target = (1.0f64 / 0.4).ln();
        assert!(((stat - target) / target).abs() < 0.01, "{stat}");
        // Sandwich (1-x)^θ ≤ T(x) ≤ (1-x)^θ / x on the top band.
        let t = g.tail(0.6);
        assert!(t >= 0.4f64.powi(100) && t <= 0.4f64.powi(100) / 0.6);
    }

    #[test]
    fn joint_density_reduces_to_g1() {
        let g = DensityGrid::build(2.5, DEFAULT_RESOLUTION).unwrap();
        for p in [0.12, 0.2, 0.33, 0.45, 0.7] {
            let a = gn_density(2.5, &[p], &g).unwrap();
            let b = g.density(p);
            assert!(((a - b) / b).abs() < 1e-8, "p {p}: {a} vs {b}");
        }
    }

    #[test]
    fn joint_density_zero_off_support() {
        let g = DensityGrid::build(2.0, DEFAULT_RESOLUTION).unwrap();
        assert_eq!(gn_density(2.0, &[0.2, 0.3], &g).unwrap(), 0.0);
        assert_eq!(gn_density(2.0, &[0.6, 0.5], &g).unwrap(), 0.0);
        assert_eq!(gn_density(2.0, &[0.3, 0.0], &g).unwrap(), 0.0);
        assert!(gn_density(2.0, &[0.3, 0.2], &g).unwrap() > 0.0);
        assert!(matches!(gn_density(2.0, &[], &g), Err(Error::Domain(_))));
        assert!(gn_density(3.0, &[0.3], &g).is_err());
    }

    #[test]
    fn marginal_support_and_errors() {
        let g = DensityGrid::build(2.0, DEFAULT_RESOLUTION).unwrap();
        assert_eq!(marginal_pk(2.0, 2, 0.6, &g).unwrap(), 0.0);
        assert_eq!(marginal_pk(2.0, 3, 0.34, &g).unwrap(), 0.0);
        assert!(matches!(marginal_pk(2.0, 4, 0.1, &g), Err(Error::Unsupported(_))));
        assert!(matches!(marginal_pk(2.0, 1, 0.1, &g), Err(Error::Unsupported(_))));
    }

    #[test]
    fn marginal_p2_normalizes() {
        let g = DensityGrid::build(2.0, DEFAULT_RESOLUTION).unwrap();
        let total = prob_pk_between(&g, 2, 0.0, 0.5).unwrap();
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn homozygosity_moments() {
        assert!((homozygosity_moment(2, 5.0) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(homozygosity_moment(2, 0.0), 1.0);
        assert_eq!(homozygosity_moment(4, 0.0), 1.0);
        let mut prev = 0.0;
        for theta in [10.0, 100.0, 1000.0] {
            let r = theta * theta * homozygosity_moment(3, theta) / 2.0;
            assert!(r > prev && r < 1.0);
            prev = r;
        }
    }

    #[test]
    fn moment_rejects_bad_query() {
        assert!(moment_pk(MomentQuery { k: 0, n: 1, theta: 1.0 }).is_err());
        assert!(moment_pk(MomentQuery {
            k: 1,
            n: 1,
            theta: -1.0
        })
        .is_err());
    }
}
