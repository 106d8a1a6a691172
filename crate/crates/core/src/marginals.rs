//! Marginal laws presented through call-price curves, and the transforms
//! built on them: the barycenter function `b`, its inverse `beta`, and the
//! Hardy-Littlewood transform of the law (the law of the running maximum of
//! the extremal embedding).
//!
//! A piecewise-linear call curve is exactly the call curve of an atomic
//! measure (atoms at the kinks, masses equal to the slope increments), so the
//! `call_curve` representation is converted to atoms at construction and all
//! downstream transforms are then closed-form per atom block:
//!
//!   S_i = mu([x_i, inf)),  c_i = c(x_i),  b_i = x_i + c_i / S_i,
//!
//! `b` is the step function taking value `b_i` on `(x_{i-1}, x_i]`, `beta` is
//! its right-continuous inverse (value `x_i` on `[b_i, b_{i+1})`), and the
//! Hardy-Littlewood survival at `y` is `c(beta(y)) / (y - beta(y))`.

use serde::{Deserialize, Serialize};

use crate::curve::{Continuity, Direction, Extrapolation, Interpolation, MonotoneCurve};
use crate::error::{Error, Result};
use crate::num::{compensated_sum, fl, normal_cdf, Real};
use crate::payoff::Payoff;
use crate::quad;

/// How the marginal was specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceKind {
    Atoms,
    CallCurve,
    Lognormal,
}

#[derive(Debug, Clone)]
struct AtomData<T> {
    /// Atom positions, strictly ascending.
    x: Vec<T>,
    /// Atom masses, strictly positive, summing to one.
    p: Vec<T>,
    /// survival[i] = mu([x_i, inf)).
    survival: Vec<T>,
    /// tail_px[i] = sum_{j >= i} p_j x_j.
    tail_px: Vec<T>,
    /// call[i] = c(x_i).
    call: Vec<T>,
    /// bary[i] = value of the barycenter function on (x_{i-1}, x_i].
    bary: Vec<T>,
    mean: T,
}

#[derive(Debug, Clone)]
struct LognormalData<T> {
    mean: T,
    vol: T,
    horizon: T,
    sig_sqrt_t: T,
}

#[derive(Debug, Clone)]
enum Repr<T> {
    Atoms(AtomData<T>),
    Lognormal(LognormalData<T>),
}

/// A probability law on the line with finite mean, presented through its
/// call-price curve.
#[derive(Debug, Clone)]
pub struct Marginal<T> {
    kind: SourceKind,
    repr: Repr<T>,
}

/// Outcome of a convex-order check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConvexOrder<T> {
    Ordered,
    /// Witness strike of the largest violation of `c1 <= c2`.
    Violated { at: T },
}

/// Expectation with quadrature diagnostics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Expectation<T> {
    pub value: T,
    pub quad_error: T,
    /// Present when an unbounded support was truncated.
    pub truncation: Option<TailInfo<T>>,
}

/// Tail diagnostics for truncated unbounded supports.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailInfo<T> {
    pub cutoff: T,
    pub hl_survival_at_cutoff: T,
    pub mu_survival_at_cutoff: T,
}

const MASS_TOL: f64 = 1e-12;
const MEAN_TOL: f64 = 1e-9;

impl<T: Real> Marginal<T> {
    /// Builds a marginal from `(position, mass)` atoms. Duplicate positions
    /// are merged; masses must be strictly positive and sum to one within
    /// 1e-12.
    pub fn from_atoms(atoms: Vec<(T, T)>) -> Result<Self> {
        Self::build_atoms(atoms, SourceKind::Atoms)
    }

    /// Point mass at `x`.
    pub fn dirac(x: T) -> Result<Self> {
        Self::from_atoms(vec![(x, T::one())])
    }

    /// Midpoint-cell atomization of the uniform law on `[lo, hi]`: `n` atoms
    /// at cell conditional means, so the call curve is exact at every cell
    /// boundary.
    pub fn uniform_atoms(lo: T, hi: T, n: usize) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi || n == 0 {
            return Err(Error::InvalidMarginal {
                field: "uniform".into(),
                reason: "need lo < hi and n >= 1".into(),
            });
        }
        let nf = fl::<T>(n as f64);
        let w = (hi - lo) / nf;
        let mass = T::one() / nf;
        let atoms = (0..n)
            .map(|i| (lo + w * (fl::<T>(i as f64) + fl::<T>(0.5)), mass))
            .collect();
        Self::from_atoms(atoms)
    }

    /// Builds a marginal from a sampled call-price curve. The curve is
    /// interpreted exactly: a piecewise-linear convex call curve is the call
    /// curve of an atomic measure with atoms at the kinks. Mass below the
    /// lowest strike is pinned to the lowest strike; a positive final price
    /// is carried by one synthetic atom where the last segment's tangent
    /// meets zero.
    pub fn from_call_curve(strikes: Vec<T>, prices: Vec<T>) -> Result<Self> {
        let atoms = atoms_from_call_curve(&strikes, &prices)?;
        let built = Self::build_atoms(atoms, SourceKind::CallCurve)?;
        // The curve pins the mean through its lowest point (all mass sits at
        // or above the lowest strike); recompute and cross-check.
        let implied = strikes[0] + prices[0];
        if (built.mean() - implied).abs() > fl::<T>(MEAN_TOL) * built.scale() {
            return Err(Error::InvalidMarginal {
                field: "prices".into(),
                reason: format!(
                    "implied mean {} disagrees with recomputed mean {}",
                    implied,
                    built.mean()
                ),
            });
        }
        Ok(built)
    }

    /// Lognormal law with the given mean (forward), volatility per square
    /// root of time, and horizon.
    pub fn lognormal(mean: T, vol: T, horizon: T) -> Result<Self> {
        for (name, v) in [("mean", mean), ("vol", vol), ("horizon", horizon)] {
            if !v.is_finite() || v <= T::zero() {
                return Err(Error::InvalidMarginal {
                    field: name.into(),
                    reason: "must be finite and positive".into(),
                });
            }
        }
        Ok(Self {
            kind: SourceKind::Lognormal,
            repr: Repr::Lognormal(LognormalData {
                mean,
                vol,
                horizon,
                sig_sqrt_t: vol * horizon.sqrt(),
            }),
        })
    }

    fn build_atoms(mut atoms: Vec<(T, T)>, kind: SourceKind) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMarginal {
                field: "atoms".into(),
                reason: "at least one atom required".into(),
            });
        }
        for (i, &(x, p)) in atoms.iter().enumerate() {
            if !x.is_finite() || !p.is_finite() {
                return Err(Error::InvalidMarginal {
                    field: format!("atoms[{i}]"),
                    reason: "non-finite entry".into(),
                });
            }
            if p <= T::zero() {
                return Err(Error::InvalidMarginal {
                    field: format!("atoms[{i}].mass"),
                    reason: "mass must be strictly positive".into(),
                });
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<(T, T)> = Vec::with_capacity(atoms.len());
        for (x, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += p,
                _ => merged.push((x, p)),
            }
        }
        let x: Vec<T> = merged.iter().map(|a| a.0).collect();
        let p: Vec<T> = merged.iter().map(|a| a.1).collect();
        let total = compensated_sum(&p);
        if (total - T::one()).abs() > fl::<T>(MASS_TOL) {
            return Err(Error::InvalidMarginal {
                field: "atoms".into(),
                reason: format!("masses sum to {total}, expected 1 within {MASS_TOL}"),
            });
        }
        let n = x.len();
        let mut survival = vec![T::zero(); n + 1];
        let mut tail_px = vec![T::zero(); n + 1];
        // Right-to-left compensated accumulation.
        let (mut s, mut sc) = (T::zero(), T::zero());
        let (mut m, mut mc) = (T::zero(), T::zero());
        for i in (0..n).rev() {
            let add = |sum: &mut T, comp: &mut T, v: T| {
                let t = *sum + v;
                if sum.abs() >= v.abs() {
                    *comp += (*sum - t) + v;
                } else {
                    *comp += (v - t) + *sum;
                }
                *sum = t;
            };
            add(&mut s, &mut sc, p[i]);
            add(&mut m, &mut mc, p[i] * x[i]);
            // masses are validated to sum to 1 within tolerance; keep the
            // survival inside [0, 1] against the last-bit overshoot
            survival[i] = (s + sc).min(T::one());
            tail_px[i] = m + mc;
        }
        let mean = tail_px[0];
        let call: Vec<T> = (0..n).map(|i| tail_px[i + 1] - x[i] * survival[i + 1]).collect();
        let bary: Vec<T> = (0..n).map(|i| x[i] + call[i] / survival[i]).collect();
        Ok(Self {
            kind,
            repr: Repr::Atoms(AtomData { x, p, survival, tail_px, call, bary, mean }),
        })
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    /// Mean of the law (initial value of the calibrated martingale).
    pub fn mean(&self) -> T {
        match &self.repr {
            Repr::Atoms(a) => a.mean,
            Repr::Lognormal(l) => l.mean,
        }
    }

    /// Lower endpoint of the support.
    pub fn lower_endpoint(&self) -> T {
        match &self.repr {
            Repr::Atoms(a) => a.x[0],
            Repr::Lognormal(_) => T::zero(),
        }
    }

    /// Upper endpoint of the support; `None` means unbounded.
    pub fn upper_endpoint(&self) -> Option<T> {
        match &self.repr {
            Repr::Atoms(a) => Some(*a.x.last().expect("nonempty")),
            Repr::Lognormal(_) => None,
        }
    }

    /// Characteristic scale used for relative tolerances.
    pub fn scale(&self) -> T {
        let hi = self.upper_endpoint().unwrap_or_else(|| self.hl_quantile(fl(1e-10)));
        T::one().max(self.lower_endpoint().abs()).max(hi.abs())
    }

    /// Atom view when the representation is atomic.
    pub fn atoms(&self) -> Option<(&[T], &[T])> {
        match &self.repr {
            Repr::Atoms(a) => Some((&a.x, &a.p)),
            Repr::Lognormal(_) => None,
        }
    }

    /// `(mean, vol, horizon)` when the representation is lognormal.
    pub fn lognormal_params(&self) -> Option<(T, T, T)> {
        match &self.repr {
            Repr::Atoms(_) => None,
            Repr::Lognormal(l) => Some((l.mean, l.vol, l.horizon)),
        }
    }

    /// c(k) = E[(X - k)^+].
    pub fn call_price(&self, k: T) -> Result<T> {
        if !k.is_finite() {
            return Err(Error::NonFinite(format!("strike {k}")));
        }
        Ok(match &self.repr {
            Repr::Atoms(a) => {
                if k < a.x[0] {
                    a.mean - k
                } else {
                    let i = a.x.partition_point(|&xi| xi <= k);
                    a.tail_px[i] - k * a.survival[i]
                }
            }
            Repr::Lognormal(l) => {
                if k <= T::zero() {
                    l.mean - k
                } else {
                    let (d1, d2) = l.ds(k);
                    l.mean * normal_cdf(d1) - k * normal_cdf(d2)
                }
            }
        })
    }

    /// Right derivative c'(k+) = -mu((k, inf)); valued in [-1, 0].
    pub fn call_slope(&self, k: T) -> Result<T> {
        if !k.is_finite() {
            return Err(Error::NonFinite(format!("strike {k}")));
        }
        Ok(-self.survival_open(k))
    }

    /// mu([x, inf)): the closed-interval survival (equals -c'(x-)).
    pub fn survival(&self, x: T) -> T {
        match &self.repr {
            Repr::Atoms(a) => {
                let i = a.x.partition_point(|&xi| xi < x);
                a.survival[i]
            }
            Repr::Lognormal(l) => l.survival(x),
        }
    }

    /// mu((k, inf)): the open-interval survival (equals -c'(k+)).
    pub fn survival_open(&self, k: T) -> T {
        match &self.repr {
            Repr::Atoms(a) => {
                let i = a.x.partition_point(|&xi| xi <= k);
                a.survival[i]
            }
            Repr::Lognormal(l) => l.survival(k),
        }
    }

    /// Barycenter function b(x) = E[X | X >= x] for x below the upper
    /// endpoint, b(x) = x beyond it.
    pub fn barycenter_at(&self, x: T) -> T {
        match &self.repr {
            Repr::Atoms(a) => {
                let n = a.x.len();
                if x > a.x[n - 1] {
                    return x;
                }
                let i = a.x.partition_point(|&xi| xi < x);
                a.bary[i]
            }
            Repr::Lognormal(l) => {
                if x <= T::zero() {
                    return l.mean;
                }
                let s = l.survival(x);
                if s < fl(1e-300) {
                    return x;
                }
                let (d1, _) = l.ds(x);
                l.mean * normal_cdf(d1) / s
            }
        }
    }

    /// beta(m): the largest minimizer of `xi -> c(xi) / (m - xi)` over
    /// `xi < m` for m in [X0, r), with the conventions beta = l below X0 and
    /// beta(m) = m beyond r. Right-continuous, nondecreasing.
    pub fn beta_at(&self, m: T) -> T {
        match &self.repr {
            Repr::Atoms(a) => {
                let n = a.x.len();
                if m < a.bary[0] {
                    return a.x[0];
                }
                if m >= a.x[n - 1] {
                    return m;
                }
                let i = a.bary.partition_point(|&bi| bi <= m);
                a.x[i - 1]
            }
            Repr::Lognormal(l) => {
                if m <= l.mean {
                    return T::zero();
                }
                // b is continuous and strictly increasing on (0, inf);
                // bisect b(xi) = m.
                let mut lo = T::zero();
                let mut hi = m;
                let tol = fl::<T>(1e-12) * (T::one() + m.abs());
                for _ in 0..200 {
                    if hi - lo <= tol {
                        break;
                    }
                    let mid = (lo + hi) / fl::<T>(2.0);
                    if self.barycenter_at(mid) <= m {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            }
        }
    }

    /// Hardy-Littlewood survival: `inf_{xi < y} c(xi)/(y - xi)`; equals 1 for
    /// y <= X0 and `c(beta(y))/(y - beta(y))` in between.
    pub fn hl_survival(&self, y: T) -> T {
        match &self.repr {
            Repr::Atoms(a) => {
                let n = a.x.len();
                if y <= a.mean {
                    return T::one();
                }
                if y > a.x[n - 1] || n == 1 {
                    return T::zero();
                }
                let i = a.bary.partition_point(|&bi| bi <= y);
                let i = i.saturating_sub(1).min(n - 2);
                a.call[i] / (y - a.x[i])
            }
            Repr::Lognormal(l) => {
                if y <= l.mean {
                    return T::one();
                }
                let b = self.beta_at(y);
                self.call_price(b).expect("finite") / (y - b)
            }
        }
    }

    /// Smallest point where the Hardy-Littlewood survival drops to `eps`;
    /// for bounded support this is the upper endpoint.
    pub fn hl_quantile(&self, eps: T) -> T {
        match &self.repr {
            Repr::Atoms(a) => *a.x.last().expect("nonempty"),
            Repr::Lognormal(l) => {
                let mut lo = l.mean;
                let mut hi = l.mean * fl::<T>(2.0);
                while self.hl_survival(hi) > eps {
                    lo = hi;
                    hi *= fl::<T>(2.0);
                }
                for _ in 0..200 {
                    if hi - lo <= fl::<T>(1e-9) * (T::one() + hi.abs()) {
                        break;
                    }
                    let mid = (lo + hi) / fl::<T>(2.0);
                    if self.hl_survival(mid) > eps {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }

    /// The barycenter function as an exportable curve. Atoms give the exact
    /// step curve; unbounded supports are sampled adaptively up to the
    /// truncation quantile.
    pub fn barycenter(&self) -> MonotoneCurve<T> {
        match &self.repr {
            Repr::Atoms(a) => {
                let knots = a.x.iter().copied().zip(a.bary.iter().copied()).collect();
                MonotoneCurve::new(
                    knots,
                    Direction::Nondecreasing,
                    Continuity::Left,
                    Interpolation::Step,
                    Extrapolation::Constant,
                    Extrapolation::Identity,
                )
                .expect("barycenter step data is monotone")
            }
            Repr::Lognormal(_) => {
                let hi = self.hl_quantile(fl(1e-10));
                let knots = crate::curve::sample_adaptive(
                    &|x| self.barycenter_at(x),
                    T::zero(),
                    hi,
                    fl::<T>(1e-9) * self.scale(),
                );
                MonotoneCurve::new(
                    knots,
                    Direction::Nondecreasing,
                    Continuity::Left,
                    Interpolation::Linear,
                    Extrapolation::Constant,
                    Extrapolation::Identity,
                )
                .expect("sampled barycenter is monotone")
            }
        }
    }

    /// The inverse barycenter as an exportable curve (right-continuous).
    pub fn beta(&self) -> MonotoneCurve<T> {
        match &self.repr {
            Repr::Atoms(a) => {
                let knots = a.bary.iter().copied().zip(a.x.iter().copied()).collect();
                MonotoneCurve::new(
                    knots,
                    Direction::Nondecreasing,
                    Continuity::Right,
                    Interpolation::Step,
                    Extrapolation::Constant,
                    Extrapolation::Identity,
                )
                .expect("beta step data is monotone")
            }
            Repr::Lognormal(_) => {
                let hi = self.hl_quantile(fl(1e-10));
                let knots = crate::curve::sample_adaptive(
                    &|m| self.beta_at(m),
                    self.mean(),
                    hi,
                    fl::<T>(1e-9) * self.scale(),
                );
                MonotoneCurve::new(
                    knots,
                    Direction::Nondecreasing,
                    Continuity::Right,
                    Interpolation::Linear,
                    Extrapolation::Constant,
                    Extrapolation::Identity,
                )
                .expect("sampled beta is monotone")
            }
        }
    }

    /// Abscissae where the Hardy-Littlewood survival switches analytic piece
    /// (quadrature breakpoints).
    pub fn hl_breakpoints(&self) -> Vec<T> {
        match &self.repr {
            Repr::Atoms(a) => a.bary.clone(),
            Repr::Lognormal(_) => Vec::new(),
        }
    }

    /// mu^HL(g) = g(X0) + int_{X0}^{inf} hl_survival(y) g'(y) dy.
    pub fn hl_expectation(&self, g: &Payoff<T>) -> Result<Expectation<T>> {
        let x0 = self.mean();
        let tol = fl::<T>(1e-9) * self.scale().max(T::one());
        match &self.repr {
            Repr::Atoms(a) => {
                let r = *a.x.last().expect("nonempty");
                let q = quad::integrate_with_breakpoints(
                    |y| self.hl_survival(y) * g.deriv(y),
                    x0,
                    r,
                    tol,
                    &a.bary,
                );
                Ok(Expectation {
                    value: g.eval(x0) + q.value,
                    quad_error: q.error_estimate,
                    truncation: None,
                })
            }
            Repr::Lognormal(_) => {
                let cutoff = self.hl_quantile(fl(1e-10));
                let body = quad::integrate(
                    |y| self.hl_survival(y) * g.deriv(y),
                    x0,
                    cutoff,
                    tol,
                );
                // Finiteness of mu^HL(g) is enforced numerically: the tail
                // beyond the cutoff must decay below tolerance.
                let tail = quad::integrate_to_infinity(
                    |y| self.hl_survival(y) * g.deriv(y),
                    cutoff,
                    tol,
                )?;
                Ok(Expectation {
                    value: g.eval(x0) + body.value + tail.value,
                    quad_error: body.error_estimate + tail.error_estimate,
                    truncation: Some(TailInfo {
                        cutoff,
                        hl_survival_at_cutoff: self.hl_survival(cutoff),
                        mu_survival_at_cutoff: self.survival(cutoff),
                    }),
                })
            }
        }
    }

    /// mu(g) = E[g(X)].
    pub fn expectation(&self, g: &Payoff<T>) -> Result<Expectation<T>> {
        match &self.repr {
            Repr::Atoms(a) => {
                let terms: Vec<T> =
                    a.x.iter().zip(&a.p).map(|(&x, &p)| p * g.eval(x)).collect();
                Ok(Expectation {
                    value: compensated_sum(&terms),
                    quad_error: T::zero(),
                    truncation: None,
                })
            }
            Repr::Lognormal(_) => {
                // E[g(X)] = g(l) + int_l^inf g'(x) mu((x, inf)) dx.
                let lo = T::zero();
                let tol = fl::<T>(1e-9) * self.scale().max(T::one());
                let cutoff = self.hl_quantile(fl(1e-12));
                let body = quad::integrate(
                    |x| g.deriv(x) * self.survival_open(x),
                    lo,
                    cutoff,
                    tol,
                );
                let tail = quad::integrate_to_infinity(
                    |x| g.deriv(x) * self.survival_open(x),
                    cutoff,
                    tol,
                )?;
                Ok(Expectation {
                    value: g.eval(lo) + body.value + tail.value,
                    quad_error: body.error_estimate + tail.error_estimate,
                    truncation: Some(TailInfo {
                        cutoff,
                        hl_survival_at_cutoff: self.hl_survival(cutoff),
                        mu_survival_at_cutoff: self.survival(cutoff),
                    }),
                })
            }
        }
    }

    /// A strike grid dense enough to expose violations of curve-level
    /// conditions: atom positions plus a uniform fill.
    pub fn strike_grid(&self, extra: usize) -> Vec<T> {
        let lo = self.lower_endpoint();
        let hi = self.upper_endpoint().unwrap_or_else(|| self.hl_quantile(fl(1e-10)));
        let pad = (hi - lo).max(T::one()) * fl::<T>(0.1);
        let mut grid: Vec<T> = Vec::new();
        if let Repr::Atoms(a) = &self.repr {
            grid.extend_from_slice(&a.x);
        }
        let n = extra.max(2);
        let (a, b) = (lo - pad, hi + pad);
        for i in 0..=n {
            grid.push(a + (b - a) * fl::<T>(i as f64) / fl::<T>(n as f64));
        }
        grid.sort_by(|u, v| u.partial_cmp(v).unwrap());
        grid.dedup();
        grid
    }
}

impl<T: Real> LognormalData<T> {
    fn ds(&self, k: T) -> (T, T) {
        let half = fl::<T>(0.5);
        let d2 = ((self.mean / k).ln() - half * self.sig_sqrt_t * self.sig_sqrt_t)
            / self.sig_sqrt_t;
        (d2 + self.sig_sqrt_t, d2)
    }

    fn survival(&self, x: T) -> T {
        if x <= T::zero() {
            T::one()
        } else {
            normal_cdf(self.ds(x).1)
        }
    }
}

/// Recovers the atoms of the measure implied by a piecewise-linear call
/// curve (slope increments at the kinks).
fn atoms_from_call_curve<T: Real>(strikes: &[T], prices: &[T]) -> Result<Vec<(T, T)>> {
    if strikes.len() != prices.len() {
        return Err(Error::InvalidMarginal {
            field: "prices".into(),
            reason: format!("{} prices for {} strikes", prices.len(), strikes.len()),
        });
    }
    if strikes.len() < 2 {
        return Err(Error::InvalidMarginal {
            field: "strikes".into(),
            reason: "need at least two strikes".into(),
        });
    }
    let m = strikes.len();
    let scale = T::one().max(strikes[m - 1].abs()).max(prices[0].abs());
    let tol = fl::<T>(1e-10) * scale;
    for (i, (&k, &c)) in strikes.iter().zip(prices).enumerate() {
        if !k.is_finite() || !c.is_finite() {
            return Err(Error::InvalidMarginal {
                field: format!("strikes[{i}]"),
                reason: "non-finite entry".into(),
            });
        }
        if c < -tol {
            return Err(Error::InvalidMarginal {
                field: format!("prices[{i}]"),
                reason: "call prices must be nonnegative".into(),
            });
        }
    }
    let mut slopes = Vec::with_capacity(m - 1);
    for i in 0..m - 1 {
        let dk = strikes[i + 1] - strikes[i];
        if dk <= T::zero() {
            return Err(Error::InvalidMarginal {
                field: format!("strikes[{}]", i + 1),
                reason: "strikes must be strictly ascending".into(),
            });
        }
        slopes.push((prices[i + 1] - prices[i]) / dk);
    }
    for (i, &s) in slopes.iter().enumerate() {
        if s < -T::one() - fl::<T>(1e-9) {
            return Err(Error::InvalidMarginal {
                field: format!("prices[{}]", i + 1),
                reason: "slope steeper than -1 (price above intrinsic decay)".into(),
            });
        }
        if s > tol {
            return Err(Error::InvalidMarginal {
                field: format!("prices[{}]", i + 1),
                reason: "call prices must be nonincreasing".into(),
            });
        }
    }
    for i in 1..slopes.len() {
        if slopes[i] < slopes[i - 1] - fl::<T>(1e-10) {
            return Err(Error::InvalidMarginal {
                field: format!("prices[{}]", i + 1),
                reason: "convexity violated (butterfly arbitrage)".into(),
            });
        }
    }
    let mut atoms: Vec<(T, T)> = Vec::with_capacity(m + 1);
    // Mass at or below the lowest strike sits at the lowest strike.
    let first = T::one() + slopes[0];
    if first > T::zero() {
        atoms.push((strikes[0], first));
    }
    for i in 1..m - 1 {
        let mass = slopes[i] - slopes[i - 1];
        if mass > T::zero() {
            atoms.push((strikes[i], mass));
        }
    }
    let c_last = prices[m - 1];
    let s_last = slopes[m - 2];
    if c_last <= tol {
        let mass = -s_last;
        if mass > T::zero() {
            atoms.push((strikes[m - 1], mass));
        }
    } else {
        if s_last >= -fl::<T>(1e-12) {
            return Err(Error::InvalidMarginal {
                field: format!("prices[{}]", m - 1),
                reason: "curve ends above zero with a flat slope; the implied upper tail is undetermined".into(),
            });
        }
        // Continue the last segment to its zero crossing and park the tail
        // mass there.
        let r = strikes[m - 1] + c_last / (-s_last);
        atoms.push((r, -s_last));
    }
    if atoms.is_empty() {
        return Err(Error::InvalidMarginal {
            field: "prices".into(),
            reason: "curve implies no mass".into(),
        });
    }
    Ok(atoms)
}

/// Checks whether `mu1 <= mu2` in convex order: equal means and `c1 <= c2`
/// on a dense strike grid. (For supports on the nonnegative half-line the
/// mean equality is exactly the usual zero-strike price equality; stated via
/// the means it stays correct for laws with negative support.) On violation
/// reports the strike of the largest violation, with strike zero standing in
/// for a mean mismatch.
pub fn check_convex_order<T: Real>(
    mu1: &Marginal<T>,
    mu2: &Marginal<T>,
    tol: T,
) -> Result<ConvexOrder<T>> {
    if (mu1.mean() - mu2.mean()).abs() > tol {
        return Ok(ConvexOrder::Violated { at: T::zero() });
    }
    let mut grid = mu1.strike_grid(512);
    grid.extend(mu2.strike_grid(512));
    grid.sort_by(|u, v| u.partial_cmp(v).unwrap());
    grid.dedup();
    let mut worst: Option<(T, T)> = None;
    for &k in &grid {
        let gap = mu1.call_price(k)? - mu2.call_price(k)?;
        if gap > tol {
            match worst {
                Some((_, w)) if w >= gap => {}
                _ => worst = Some((k, gap)),
            }
        }
    }
    Ok(match worst {
        Some((at, _)) => ConvexOrder::Violated { at },
        None => ConvexOrder::Ordered,
    })
}

/// Mean-tolerance used by representation-equivalence checks.
pub fn mean_tolerance<T: Real>() -> T {
    fl(MEAN_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> Marginal<f64> {
        Marginal::from_atoms(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap()
    }

    fn uniform() -> Marginal<f64> {
        Marginal::uniform_atoms(0.0, 1.0, 10_000).unwrap()
    }

    #[test]
    fn call_price_examples() {
        let dirac = Marginal::<f64>::dirac(0.7).unwrap();
        assert!((dirac.call_price(0.2).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(dirac.call_price(1.2).unwrap(), 0.0);

        let u = uniform();
        assert!((u.call_price(0.0).unwrap() - 0.5).abs() < 1e-12);

        let tp = two_point();
        assert!((tp.call_price(0.5).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn call_slope_examples() {
        let dirac = Marginal::dirac(0.7).unwrap();
        assert_eq!(dirac.call_slope(0.2).unwrap(), -1.0);

        let u = uniform();
        assert!((u.call_slope(0.25).unwrap() + 0.75).abs() < 1e-12);

        let tp = two_point();
        assert!((tp.call_slope(0.5).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn barycenter_examples() {
        let u = uniform();
        assert!((u.barycenter_at(0.5) - 0.75).abs() < 1e-10);

        let tp = two_point();
        assert_eq!(tp.barycenter_at(0.5), 1.0);

        let dirac = Marginal::dirac(0.7).unwrap();
        assert_eq!(dirac.barycenter_at(0.9), 0.9);
        assert_eq!(dirac.barycenter_at(0.7), 0.7);
        assert_eq!(dirac.barycenter_at(0.1), 0.7);
    }

    #[test]
    fn beta_examples() {
        let u = uniform();
        assert!((u.beta_at(0.75) - 0.5).abs() < 2e-4);
        // beta(X0) = lower endpoint
        assert_eq!(u.beta_at(u.mean()), u.lower_endpoint());

        let tp = two_point();
        assert_eq!(tp.beta_at(0.75), 0.0);
        assert_eq!(tp.beta_at(tp.mean()), 0.0);
    }

    #[test]
    fn hl_survival_examples() {
        let u = uniform();
        assert!((u.hl_survival(0.75) - 0.5).abs() < 1e-7);
        assert_eq!(u.hl_survival(0.3), 1.0);

        let dirac = Marginal::dirac(0.7).unwrap();
        assert_eq!(dirac.hl_survival(0.8), 0.0);
        assert_eq!(dirac.hl_survival(0.7), 1.0);

        let tp = two_point();
        // closed-form 1/(2y) on (1/2, 1), atom of mass 1/2 at 1
        assert!((tp.hl_survival(0.8) - 0.625).abs() < 1e-15);
        assert!((tp.hl_survival(1.0) - 0.5).abs() < 1e-15);
        assert_eq!(tp.hl_survival(1.0 + 1e-12), 0.0);
    }

    #[test]
    fn hl_expectation_examples() {
        let g = Payoff::identity();
        let dirac = Marginal::dirac(0.7).unwrap();
        assert_eq!(dirac.hl_expectation(&g).unwrap().value, 0.7);

        let u = uniform();
        assert!((u.hl_expectation(&g).unwrap().value - 0.75).abs() < 1e-7);

        let tp = two_point();
        let expect = 0.5 * (1.0 + std::f64::consts::LN_2);
        assert!((tp.hl_expectation(&g).unwrap().value - expect).abs() < 1e-9);
    }

    #[test]
    fn convex_order_examples() {
        let u = uniform();
        let d = Marginal::dirac(0.5).unwrap();
        assert_eq!(check_convex_order(&u, &u, 1e-9).unwrap(), ConvexOrder::Ordered);
        assert_eq!(check_convex_order(&d, &u, 1e-9).unwrap(), ConvexOrder::Ordered);
        match check_convex_order(&u, &d, 1e-9).unwrap() {
            ConvexOrder::Violated { at } => assert!((at - 0.5).abs() < 2e-3),
            ConvexOrder::Ordered => panic!("expected violation"),
        }
    }

    #[test]
    fn call_curve_round_trip_is_exact() {
        let tp = two_point();
        let strikes: Vec<f64> = vec![-0.5, 0.0, 0.25, 0.5, 1.0];
        let prices: Vec<f64> = strikes.iter().map(|&k| tp.call_price(k).unwrap()).collect();
        let from_curve = Marginal::from_call_curve(strikes, prices).unwrap();
        let (x, p) = from_curve.atoms().unwrap();
        assert_eq!(x, &[0.0, 1.0]);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        for k in [-1.0, 0.1, 0.5, 0.9, 2.0] {
            assert!(
                (from_curve.call_price(k).unwrap() - tp.call_price(k).unwrap()).abs() < 1e-12
            );
            assert!((from_curve.hl_survival(k) - tp.hl_survival(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn call_curve_with_positive_tail_gets_synthetic_atom() {
        // Dirac at 1 sampled only below: c(k) = 1 - k on [0, 0.5]
        let mu = Marginal::from_call_curve(vec![0.0, 0.5], vec![1.0, 0.5]).unwrap();
        let (x, p) = mu.atoms().unwrap();
        assert_eq!(x, &[1.0]);
        assert_eq!(p, &[1.0]);
    }

    #[test]
    fn call_curve_validation_pointers() {
        let err = Marginal::from_call_curve(vec![0.0_f64, 1.0], vec![0.5, 0.6]).unwrap_err();
        assert!(err.to_string().contains("prices[1]"));
        let err =
            Marginal::from_call_curve(vec![0.0_f64, 1.0, 0.5], vec![0.5, 0.3, 0.1]).unwrap_err();
        assert!(err.to_string().contains("strikes"));
    }

    #[test]
    fn atoms_validation() {
        assert!(Marginal::from_atoms(vec![(0.0_f64, 0.5), (1.0, 0.6)]).is_err());
        assert!(Marginal::from_atoms(vec![(0.0_f64, -0.5), (1.0, 1.5)]).is_err());
        assert!(Marginal::from_atoms(vec![(f64::NAN, 1.0)]).is_err());
        // duplicates merged
        let m = Marginal::from_atoms(vec![(1.0_f64, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(m.atoms().unwrap().0.len(), 1);
    }

    #[test]
    fn lognormal_basics() {
        let ln = Marginal::lognormal(1.0_f64, 0.3, 1.0).unwrap();
        assert!((ln.call_price(0.0).unwrap() - 1.0).abs() < 1e-12);
        // forward-at-the-money call, sigma*sqrt(T) = 0.3
        let expect = 2.0 * normal_cdf(0.15_f64) - 1.0;
        assert!((ln.call_price(1.0).unwrap() - expect).abs() < 1e-12);
        assert!(ln.barycenter_at(0.5) > 0.5);
        assert!(ln.hl_survival(1.5) > 0.0 && ln.hl_survival(1.5) < 1.0);
        let b = ln.beta_at(1.5);
        assert!((ln.barycenter_at(b) - 1.5).abs() < 1e-6);
    }

    #[test]
    fn hl_dominates_survival_and_is_monotone() {
        let tp = two_point();
        let mut prev = 1.0;
        let mut y = 0.45;
        while y < 1.1 {
            let hl = tp.hl_survival(y);
            assert!(hl <= prev + 1e-15);
            assert!(hl >= tp.survival(y) - 1e-15);
            prev = hl;
            y += 0.01;
        }
    }
}
