//! Monte Carlo simulation of the extremal stopping rule
//! `tau = inf { t > 0 : max X >= b(X_t) }` for driftless unit-volatility
//! paths, and pathwise verification of the semi-static superhedge.
//!
//! Between new maxima the stopping condition is a downcrossing of the level
//! `q(M) = sup { x : b(x) <= M }`, so each Euler step applies two exact
//! Brownian-bridge corrections: the probability of crossing `q(M)` within
//! the step, and a sample of the within-step maximum (whose conditional laws
//! given the step endpoints are independent across steps). Paths stopped by
//! the bridge land exactly on the barrier level, which removes the dominant
//! discretization bias from the embedded law.
//!
//! Every path owns one counter-indexed RNG stream, so results are bit-exact
//! for a given seed regardless of the number of worker threads; reductions
//! run in path order with compensated summation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, OpenClosed01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lookback::{self, ConvexHedge};
use crate::marginals::Marginal;
use crate::num::{compensated_sum, fl, mean_and_se, Real};
use crate::payoff::Payoff;

/// Simulation parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimulationConfig<T> {
    pub paths: usize,
    pub dt: T,
    pub t_max: T,
    pub seed: u64,
    pub antithetic: bool,
    /// Brownian-bridge corrections (barrier crossing and within-step
    /// maximum). Plain Euler monitoring is kept for comparison runs.
    pub bridge: bool,
}

impl<T: Real> SimulationConfig<T> {
    pub fn new(paths: usize, dt: T, t_max: T, seed: u64) -> Result<Self> {
        let cfg = Self { paths, dt, t_max, seed, antithetic: false, bridge: true };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Horizon cap sized from the marginal's range so that unstopped paths
    /// are a vanishing fraction.
    pub fn for_marginal(mu: &Marginal<T>, paths: usize, dt: T, seed: u64) -> Result<Self> {
        let hi = mu.upper_endpoint().unwrap_or_else(|| mu.hl_quantile(fl(1e-10)));
        let range = (hi - mu.lower_endpoint()).max(T::one());
        let t_max = (fl::<T>(20.0) * range * range).max(fl::<T>(100.0) * dt);
        Self::new(paths, dt, t_max, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= T::zero() {
            return Err(Error::InvalidConfig {
                field: "dt".into(),
                reason: "must be finite and positive".into(),
            });
        }
        if self.t_max < fl::<T>(100.0) * self.dt {
            return Err(Error::InvalidConfig {
                field: "t_max".into(),
                reason: "horizon cap must be at least 100 time steps".into(),
            });
        }
        if self.paths == 0 {
            return Err(Error::InvalidConfig {
                field: "paths".into(),
                reason: "need at least one path".into(),
            });
        }
        Ok(())
    }
}

/// One stopped path.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmbeddingSample<T> {
    pub x_tau: T,
    pub m_tau: T,
    pub tau: T,
    pub capped: bool,
}

/// Fraction of force-stopped paths above which `simulate` fails.
pub const CAPPED_LIMIT: f64 = 0.01;

struct PathState<T> {
    mu: Marginal<T>,
    x0: T,
    top: Option<T>,
}

fn path_rng(seed: u64, path: usize, antithetic: bool) -> (ChaCha8Rng, bool) {
    let (stream, negate) = if antithetic {
        ((path / 2) as u64, path % 2 == 1)
    } else {
        (path as u64, false)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (rng, negate)
}

/// Runs one path, invoking `on_step(x_t, m_t, x_next)` for every executed
/// step with the pre-step state and the realized end-of-step value (the
/// barrier level itself when the bridge stops the path mid-step).
fn run_path<T, F>(
    st: &PathState<T>,
    cfg: &SimulationConfig<T>,
    path: usize,
    mut on_step: F,
) -> EmbeddingSample<T>
where
    T: Real,
    StandardNormal: Distribution<T>,
    OpenClosed01: Distribution<T>,
    F: FnMut(T, T, T),
{
    let (mut rng, negate) = path_rng(cfg.seed, path, cfg.antithetic);
    let sqrt_dt = cfg.dt.sqrt();
    let mut x = st.x0;
    let mut m = st.x0;
    let mut q = st.mu.beta_at(m);
    let mut t = T::zero();
    let steps = (cfg.t_max / cfg.dt).to_usize().unwrap_or(usize::MAX);
    for _ in 0..steps {
        let z: T = {
            let z: T = StandardNormal.sample(&mut rng);
            if negate {
                -z
            } else {
                z
            }
        };
        let x1 = x + sqrt_dt * z;
        t += cfg.dt;
        if cfg.bridge {
            // Downcrossing of the stopping level within the step.
            let crossed = if x1 <= q || x <= q {
                true
            } else {
                let p = (-fl::<T>(2.0) * (x - q) * (x1 - q) / cfg.dt).exp();
                let u: T = OpenClosed01.sample(&mut rng);
                u < p
            };
            if crossed {
                on_step(x, m, q);
                return EmbeddingSample { x_tau: q, m_tau: m, tau: t, capped: false };
            }
            // Exact within-step maximum given the endpoints.
            let u: T = OpenClosed01.sample(&mut rng);
            let d = x1 - x;
            let m_step =
                (x + x1 + (d * d - fl::<T>(2.0) * cfg.dt * u.ln()).sqrt()) / fl::<T>(2.0);
            if let Some(top) = st.top {
                if m_step >= top {
                    on_step(x, m, top);
                    return EmbeddingSample { x_tau: top, m_tau: top, tau: t, capped: false };
                }
            }
            on_step(x, m, x1);
            if m_step > m {
                m = m_step;
                q = st.mu.beta_at(m);
            }
            x = x1;
        } else {
            // Plain Euler monitoring: grid maxima only, stop on the grid.
            on_step(x, m, x1);
            if x1 > m {
                m = x1;
                q = st.mu.beta_at(m);
            }
            if x1 <= q {
                return EmbeddingSample { x_tau: x1, m_tau: m, tau: t, capped: false };
            }
            x = x1;
        }
    }
    EmbeddingSample { x_tau: x, m_tau: m, tau: t, capped: true }
}

/// Simulates all paths without the capped-fraction gate.
pub fn run_paths<T>(mu: &Marginal<T>, cfg: &SimulationConfig<T>) -> Result<Vec<EmbeddingSample<T>>>
where
    T: Real,
    StandardNormal: Distribution<T>,
    OpenClosed01: Distribution<T>,
{
    cfg.validate()?;
    let st = PathState { mu: mu.clone(), x0: mu.mean(), top: mu.upper_endpoint() };
    Ok((0..cfg.paths)
        .into_par_iter()
        .map(|i| run_path(&st, cfg, i, |_, _, _| ()))
        .collect())
}

/// Simulates the stopping rule; fails when more than 1% of paths hit the
/// horizon cap.
pub fn simulate<T>(mu: &Marginal<T>, cfg: &SimulationConfig<T>) -> Result<Vec<EmbeddingSample<T>>>
where
    T: Real,
    StandardNormal: Distribution<T>,
    OpenClosed01: Distribution<T>,
{
    let samples = run_paths(mu, cfg)?;
    let fraction = capped_fraction(&samples);
    if fraction > CAPPED_LIMIT {
        return Err(Error::ExcessiveCapped { fraction, limit: CAPPED_LIMIT });
    }
    Ok(samples)
}

pub fn capped_fraction<T: Real>(samples: &[EmbeddingSample<T>]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|s| s.capped).count() as f64 / samples.len() as f64
}

/// Sample mean and standard error of `g(M_tau)` over uncapped paths.
pub fn primal_estimate<T>(
    mu: &Marginal<T>,
    g: &Payoff<T>,
    cfg: &SimulationConfig<T>,
) -> Result<(T, T)>
where
    T: Real,
    StandardNormal: Distribution<T>,
    OpenClosed01: Distribution<T>,
{
    let samples = simulate(mu, cfg)?;
    Ok(primal_from_samples(&samples, g))
}

pub fn primal_from_samples<T: Real>(samples: &[EmbeddingSample<T>], g: &Payoff<T>) -> (T, T) {
    let vals: Vec<T> =
        samples.iter().filter(|s| !s.capped).map(|s| g.eval(s.m_tau)).collect();
    mean_and_se(&vals)
}

/// Sample mean and standard error of `X_tau` over all paths (optional
/// stopping holds for capped paths as well).
pub fn martingale_check<T: Real>(samples: &[EmbeddingSample<T>]) -> (T, T) {
    let vals: Vec<T> = samples.iter().map(|s| s.x_tau).collect();
    mean_and_se(&vals)
}

/// One-sample Kolmogorov-Smirnov statistic of `sorted` against a CDF given
/// with its left limits, probed at the sample points and at `extra` points.
pub fn ks_statistic<T: Real>(
    sorted: &[T],
    cdf: impl Fn(T) -> T,
    cdf_left: impl Fn(T) -> T,
    extra: &[T],
) -> T {
    let n = fl::<T>(sorted.len() as f64);
    let emp = |z: T| fl::<T>(sorted.partition_point(|&s| s <= z) as f64) / n;
    let emp_left = |z: T| fl::<T>(sorted.partition_point(|&s| s < z) as f64) / n;
    let mut d = T::zero();
    for &z in sorted.iter().chain(extra.iter()) {
        d = d.max((emp(z) - cdf(z)).abs());
        d = d.max((emp_left(z) - cdf_left(z)).abs());
    }
    d
}

/// KS distance of the stopped values against the target marginal.
pub fn ks_x_tau<T: Real>(samples: &[EmbeddingSample<T>], mu: &Marginal<T>) -> T {
    let mut xs: Vec<T> = samples.iter().filter(|s| !s.capped).map(|s| s.x_tau).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let extra: Vec<T> = mu.atoms().map(|(x, _)| x.to_vec()).unwrap_or_default();
    ks_statistic(
        &xs,
        |z| T::one() - mu.survival_open(z),
        |z| T::one() - mu.survival(z),
        &extra,
    )
}

/// KS distance of the stopped maxima against the Hardy-Littlewood transform.
pub fn ks_m_tau<T: Real>(samples: &[EmbeddingSample<T>], mu: &Marginal<T>) -> T {
    let mut ms: Vec<T> = samples.iter().filter(|s| !s.capped).map(|s| s.m_tau).collect();
    ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let top = mu.upper_endpoint();
    let cdf = |z: T| match top {
        Some(r) if z >= r => T::one(),
        _ => T::one() - mu.hl_survival(z),
    };
    let cdf_left = |z: T| T::one() - mu.hl_survival(z);
    let extra: Vec<T> = top.into_iter().collect();
    ks_statistic(&ms, cdf, cdf_left, &extra)
}

/// Pathwise superhedge slack distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HedgeSlackSummary<T> {
    pub paths: usize,
    pub uncapped: usize,
    pub capped_fraction: f64,
    pub min: T,
    pub p1: T,
    pub p5: T,
    pub p50: T,
    pub mean: T,
    pub se: T,
    /// `5 sqrt(dt) (1 + max |delta|)` over the visited range.
    pub tolerance: T,
    pub fraction_below_tolerance: f64,
    pub max_abs_delta: T,
    /// Initial dynamic capital v(X0, X0).
    pub initial_value: T,
}

/// Re-runs the seeded paths with the optimal semi-static hedge attached and
/// summarizes the pathwise slack
///
///   v(X0,X0) + sum_i delta(X_i, M_i) (X_{i+1} - X_i) + lambda*(X_tau) - g(M_tau),
///
/// which is nonnegative up to discretization error and mean-zero at the
/// optimum in the small-step limit.
pub fn hedge_verify<T>(
    mu: &Marginal<T>,
    g: &Payoff<T>,
    cfg: &SimulationConfig<T>,
) -> Result<HedgeSlackSummary<T>>
where
    T: Real,
    StandardNormal: Distribution<T>,
    OpenClosed01: Distribution<T>,
{
    cfg.validate()?;
    let hedge: ConvexHedge<T> = lookback::lambda_star(mu, g)?;
    let beta = mu.beta();
    let x0 = mu.mean();
    let v0 = lookback::v_psi(&hedge, &beta, g, x0, x0)?;
    let m_hi = mu.upper_endpoint().unwrap_or_else(|| mu.hl_quantile(fl(1e-10)));
    let slope = lookback::tangent_slope_curve(&hedge, &beta, g, m_hi, fl(1e-6))?;

    let st = PathState { mu: mu.clone(), x0, top: mu.upper_endpoint() };
    let results: Vec<(EmbeddingSample<T>, T, T)> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut pnl = T::zero();
            let mut max_delta = T::zero();
            let sample = run_path(&st, cfg, i, |x_t, m_t, x_next| {
                // In the continuation region the boundary-consistent slope
                // applies; strictly below the boundary (only reachable in
                // plain-Euler mode) the hedge holds -lambda'.
                let delta = if x_t < beta.eval(m_t) {
                    -hedge.deriv_plus(x_t)
                } else {
                    -slope.eval(m_t)
                };
                max_delta = max_delta.max(delta.abs());
                pnl += delta * (x_next - x_t);
            });
            let slack = v0 + pnl + hedge.eval(sample.x_tau) - g.eval(sample.m_tau);
            (sample, slack, max_delta)
        })
        .collect();

    let max_abs_delta =
        results.iter().map(|r| r.2).fold(T::zero(), |a, b| a.max(b));
    let tolerance = fl::<T>(5.0) * cfg.dt.sqrt() * (T::one() + max_abs_delta);
    let mut slacks: Vec<T> =
        results.iter().filter(|r| !r.0.capped).map(|r| r.1).collect();
    let uncapped = slacks.len();
    let (mean, se) = mean_and_se(&slacks);
    slacks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |q: f64| -> T {
        if slacks.is_empty() {
            return T::zero();
        }
        let idx = ((slacks.len() as f64 - 1.0) * q).round() as usize;
        slacks[idx]
    };
    let below = slacks.iter().filter(|&&s| s < -tolerance).count();
    Ok(HedgeSlackSummary {
        paths: cfg.paths,
        uncapped,
        capped_fraction: capped_fraction(&results.iter().map(|r| r.0).collect::<Vec<_>>()),
        min: slacks.first().copied().unwrap_or(T::zero()),
        p1: quantile(0.01),
        p5: quantile(0.05),
        p50: quantile(0.5),
        mean,
        se,
        tolerance,
        fraction_below_tolerance: if uncapped == 0 {
            0.0
        } else {
            below as f64 / uncapped as f64
        },
        max_abs_delta,
        initial_value: v0,
    })
}

/// Empirical survival-dominance check: the running maximum stochastically
/// dominates the stopped value. Returns the worst violation (nonnegative
/// means no violation).
pub fn dominance_violation<T: Real>(samples: &[EmbeddingSample<T>]) -> T {
    let mut xs: Vec<T> = samples.iter().map(|s| s.x_tau).collect();
    let mut ms: Vec<T> = samples.iter().map(|s| s.m_tau).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = fl::<T>(xs.len() as f64);
    let mut worst = T::zero();
    for &z in xs.iter() {
        let sx = T::one() - fl::<T>(xs.partition_point(|&v| v <= z) as f64) / n;
        let sm = T::one() - fl::<T>(ms.partition_point(|&v| v <= z) as f64) / n;
        worst = worst.min(sm - sx);
    }
    worst
}

/// Writes samples as CSV: `x_tau,m_tau,tau,capped`.
pub fn write_samples_csv<T: Real>(
    samples: &[EmbeddingSample<T>],
    out: &mut impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(out, "x_tau,m_tau,tau,capped")?;
    for s in samples {
        writeln!(out, "{},{},{},{}", s.x_tau, s.m_tau, s.tau, s.capped as u8)?;
    }
    Ok(())
}

/// Deterministic mean of `x_tau` in path order (diagnostic helper).
pub fn mean_x_tau<T: Real>(samples: &[EmbeddingSample<T>]) -> T {
    let vals: Vec<T> = samples.iter().map(|s| s.x_tau).collect();
    compensated_sum(&vals) / fl::<T>(samples.len().max(1) as f64)
}
