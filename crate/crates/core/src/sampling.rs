//! GEM stick-breaking for PD(θ): Beta(1, θ) sticks, size-biased frequencies,
//! ranking, and truncation control through the residual mass.
//!
//! Every sample is driven by its own ChaCha8 stream keyed by `(seed, stream_id)`,
//! so batches are reproducible no matter how many workers produce them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// How many sticks to break per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Exactly `n` sticks.
    Fixed(usize),
    /// Smallest `n` with `P{W_n ≥ delta} ≤ epsilon` according to [`residual_bound`].
    ResidualBound { epsilon: f64, delta: f64 },
    /// `n = ⌊θ²⌋`, the count used in the exponential-equivalence argument.
    ThetaSquared,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::ResidualBound {
            epsilon: 1e-12,
            delta: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub theta: f64,
    pub truncation: Truncation,
    pub seed: u64,
    pub stream_id: u64,
}

impl SamplerConfig {
    pub fn new(theta: f64, seed: u64) -> Self {
        Self {
            theta,
            truncation: Truncation::default(),
            seed,
            stream_id: 0,
        }
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn with_stream(mut self, stream_id: u64) -> Self {
        self.stream_id = stream_id;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_theta(self.theta)?;
        match self.truncation {
            Truncation::Fixed(0) => Err(Error::domain("fixed truncation needs n >= 1")),
            Truncation::ResidualBound { epsilon, delta } => {
                if !(epsilon > 0.0 && epsilon < 1.0) {
                    return Err(Error::domain(format!("epsilon must lie in (0,1), got {epsilon}")));
                }
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::domain(format!("delta must lie in (0,1), got {delta}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Number of sticks implied by the truncation policy.
    pub fn stick_count(&self) -> Result<usize> {
        self.validate()?;
        Ok(match self.truncation {
            Truncation::Fixed(n) => n,
            Truncation::ResidualBound { epsilon, delta } => choose_truncation(self.theta, epsilon, delta),
            Truncation::ThetaSquared => ((self.theta * self.theta).floor() as usize).max(1),
        })
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("theta must be positive, got {theta}")))
    }
}

/// Deterministic generator for one `(seed, stream_id)` pair.
pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Inverse-CDF Beta(1, θ) draw from a uniform `v ∈ [0, 1)`:
/// `u = 1 − (1 − v)^{1/θ}`, evaluated as `-expm1(log1p(-v)/θ)`.
#[inline]
pub fn beta_one_theta_from_uniform(v: f64, theta: f64) -> f64 {
    -((-v).ln_1p() / theta).exp_m1()
}

/// Lazily broken sticks; yields `(U_k, X_k)` and tracks the residual `W_k`.
#[derive(Debug, Clone)]
pub struct GemStream {
    theta: f64,
    rng: ChaCha8Rng,
    residual: f64,
}

impl GemStream {
    pub fn new(theta: f64, seed: u64, stream_id: u64) -> Self {
        Self {
            theta,
            rng: stream_rng(seed, stream_id),
            residual: 1.0,
        }
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Breaks the next stick, returning `(U_k, X_k)`.
    #[inline]
    pub fn next_stick(&mut self) -> (f64, f64) {
        let u = beta_one_theta_from_uniform(self.rng.gen(), self.theta);
        let x = self.residual * u;
        self.residual *= 1.0 - u;
        (u, x)
    }
}

/// Raw sticks `U_k` with the size-biased frequencies `X_k` and residual `W_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StickSequence {
    pub theta: f64,
    pub sticks: Vec<f64>,
    pub freqs: Vec<f64>,
    pub residual: f64,
}

impl StickSequence {
    pub fn empty(theta: f64) -> Self {
        Self {
            theta,
            sticks: Vec::new(),
            freqs: Vec::new(),
            residual: 1.0,
        }
    }

    /// Builds the sequence from given stick values, each in `[0, 1)`.
    pub fn from_sticks(theta: f64, sticks: &[f64]) -> Result<Self> {
        check_theta(theta)?;
        let mut seq = Self::empty(theta);
        for &u in sticks {
            if !(0.0..1.0).contains(&u) {
                return Err(Error::domain(format!("stick {u} outside [0,1)")));
            }
            seq.push(u);
        }
        Ok(seq)
    }

    pub fn push(&mut self, u: f64) {
        self.freqs.push(self.residual * u);
        self.sticks.push(u);
        self.residual *= 1.0 - u;
    }

    pub fn len(&self) -> usize {
        self.sticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sticks.is_empty()
    }
}

/// Descending truncated frequency vector with the unranked leftover mass kept explicit.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedFrequencies {
    pub theta: f64,
    pub p: Vec<f64>,
    pub residual: f64,
}

impl RankedFrequencies {
    /// `Σ p_k^m` over the ranked entries; the residual contributes nothing.
    pub fn power_sum(&self, m: u32) -> f64 {
        self.p.iter().map(|x| x.powi(m as i32)).sum()
    }

    pub fn mass(&self) -> f64 {
        self.p.iter().sum()
    }

    /// The `k`-th largest frequency (1-based); zero past the stored prefix.
    pub fn rank(&self, k: usize) -> f64 {
        assert!(k >= 1, "ranks are 1-based");
        self.p.get(k - 1).copied().unwrap_or(0.0)
    }
}

/// Draws `count` sticks for `config`'s stream.
pub fn draw_sticks(config: &SamplerConfig, count: usize) -> Result<StickSequence> {
    check_theta(config.theta)?;
    if count == 0 {
        return Err(Error::domain("stick count must be at least 1"));
    }
    let mut stream = GemStream::new(config.theta, config.seed, config.stream_id);
    let mut seq = StickSequence::empty(config.theta);
    seq.sticks.reserve(count);
    seq.freqs.reserve(count);
    for _ in 0..count {
        let (u, x) = stream.next_stick();
        seq.sticks.push(u);
        seq.freqs.push(x);
    }
    seq.residual = stream.residual();
    Ok(seq)
}

/// Stable descending sort of the frequencies; the residual is carried over untouched.
pub fn gem_to_ranked(sticks: &StickSequence) -> RankedFrequencies {
    let mut p = sticks.freqs.clone();
    p.sort_by(|a, b| b.total_cmp(a));
    RankedFrequencies {
        theta: sticks.theta,
        p,
        residual: sticks.residual,
    }
}

/// One ranked PD(θ) sample, truncated per `config.truncation`.
pub fn sample_ranked(config: &SamplerConfig) -> Result<RankedFrequencies> {
    let n = config.stick_count()?;
    draw_sticks(config, n).map(|s| gem_to_ranked(&s))
}

/// Markov bound `δ^{-θ} (1/2)^n` on `P{W_n ≥ δ}`, clamped to `[0, 1]`.
pub fn residual_bound(theta: f64, n: usize, delta: f64) -> f64 {
    let log_bound = theta * (1.0 / delta).ln() - n as f64 * std::f64::consts::LN_2;
    if log_bound >= 0.0 {
        return 1.0;
    }
    let lead = delta.powf(-theta);
    let tail = if n <= i32::MAX as usize {
        0.5f64.powi(n as i32)
    } else {
        0.0
    };
    let direct = lead * tail;
    if lead.is_finite() && tail > 0.0 && direct > 0.0 {
        direct.min(1.0)
    } else {
        log_bound.exp()
    }
}

/// Smallest `n ≥ 1` with `residual_bound(theta, n, delta) ≤ epsilon`.
pub fn choose_truncation(theta: f64, epsilon: f64, delta: f64) -> usize {
    if epsilon >= 1.0 {
        return 1;
    }
    let est = theta * (1.0 / delta).log2() + (1.0 / epsilon).log2();
    let mut n = (est - 1e-9).ceil().max(1.0) as usize;
    while residual_bound(theta, n, delta) > epsilon {
        n += 1;
    }
    while n > 1 && residual_bound(theta, n - 1, delta) <= epsilon {
        n -= 1;
    }
    n
}

/// Exact CDF `(1 − (1−x)^θ)^n` of the maximum of `n` Beta(1, θ) sticks.
pub fn cdf_max_stick(x: f64, n: usize, theta: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let single = -(theta * (-x).ln_1p()).exp_m1();
    single.powf(n as f64)
}

/// Runs `f` on `n` independent GEM streams `stream_id, stream_id + 1, …` in parallel.
///
/// Results come back in stream order, independent of the thread count.
pub fn map_streams<T, F>(config: &SamplerConfig, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut GemStream) -> T + Sync,
{
    config.validate()?;
    let (theta, seed, base) = (config.theta, config.seed, config.stream_id);
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut stream = GemStream::new(theta, seed, base.wrapping_add(i as u64));
            f(i, &mut stream)
        })
        .collect())
}

/// Draws `n` ranked samples on consecutive streams.
pub fn sample_batch(config: &SamplerConfig, n: usize) -> Result<Vec<RankedFrequencies>> {
    let count = config.stick_count()?;
    let theta = config.theta;
    map_streams(config, n, |_, stream| {
        let mut p = Vec::with_capacity(count);
        for _ in 0..count {
            p.push(stream.next_stick().1);
        }
        p.sort_by(|a, b| b.total_cmp(a));
        RankedFrequencies {
            theta,
            p,
            residual: stream.residual(),
        }
    })
}

/// Keeps the `r` largest values seen, in descending order.
#[derive(Debug, Clone)]
pub struct TopK {
    values: Vec<f64>,
    cap: usize,
}

impl TopK {
    pub fn new(cap: usize) -> Self {
        Self {
            values: Vec::with_capacity(cap + 1),
            cap,
        }
    }

    #[inline]
    pub fn offer(&mut self, x: f64) {
        if self.values.len() == self.cap {
            match self.values.last() {
                Some(&last) if x <= last => return,
                _ => {}
            }
        }
        let pos = self.values.partition_point(|&v| v >= x);
        self.values.insert(pos, x);
        self.values.truncate(self.cap);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
