//! Optimal static hedge, closed-form lookback bound, and the candidate value
//! function of the associated optimal stopping problem.
//!
//! The hedge's curvature measure solves, in the weak sense,
//!
//!   lambda''(beta-image of B) = int_B g'(m) / (m - beta(m)) dm,
//!
//! so it is materialized by integrating in the `m` variable (where the
//! integrand is bounded) rather than in the state variable (where
//! `b(xi) - xi -> 0` near the upper endpoint makes the direct integrand blow
//! up). For an atomic marginal each flat of `beta` contributes one curvature
//! atom; for smooth marginals the curvature is carried by a sampled density.

use serde::{Deserialize, Serialize};

use crate::curve::MonotoneCurve;
use crate::error::{Error, Result};
use crate::marginals::{Expectation, Marginal, TailInfo};
use crate::num::{compensated_sum, fl, Real};
use crate::payoff::Payoff;
use crate::quad;

/// A convex, nonnegative static position in calls: value, one-sided slopes
/// and the second-derivative measure (atoms at knots plus piecewise-constant
/// densities between them). Anchored so that the value and the left slope
/// vanish at the first knot (the lower endpoint of the marginal's support).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexHedge<T> {
    knots: Vec<T>,
    values: Vec<T>,
    right_slopes: Vec<T>,
    atom_masses: Vec<T>,
    densities: Vec<T>,
}

impl<T: Real> ConvexHedge<T> {
    /// The zero hedge anchored at `anchor`.
    pub fn zero(anchor: T) -> Self {
        Self {
            knots: vec![anchor],
            values: vec![T::zero()],
            right_slopes: vec![T::zero()],
            atom_masses: vec![T::zero()],
            densities: vec![],
        }
    }

    /// Builds a hedge from its curvature: atoms sit at the knots, densities
    /// are constant between consecutive knots (`densities` may be empty for a
    /// purely atomic curvature). Value and left slope vanish at `knots[0]`.
    pub fn from_curvature(knots: Vec<T>, atom_masses: Vec<T>, densities: Vec<T>) -> Result<Self> {
        let n = knots.len();
        if n == 0 || atom_masses.len() != n {
            return Err(Error::InvalidHedge("knot/atom length mismatch".into()));
        }
        let densities = if densities.is_empty() && n > 0 {
            vec![T::zero(); n - 1]
        } else {
            densities
        };
        if densities.len() + 1 != n {
            return Err(Error::InvalidHedge("knot/density length mismatch".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidHedge("knots must be strictly ascending".into()));
        }
        if atom_masses.iter().chain(densities.iter()).any(|&v| v < T::zero() || !v.is_finite()) {
            return Err(Error::InvalidHedge("curvature must be nonnegative".into()));
        }
        let mut values = Vec::with_capacity(n);
        let mut right_slopes = Vec::with_capacity(n);
        let mut v = T::zero();
        let mut s = atom_masses[0];
        values.push(v);
        right_slopes.push(s);
        for i in 0..n - 1 {
            let h = knots[i + 1] - knots[i];
            v = v + s * h + densities[i] * h * h / fl::<T>(2.0);
            s = s + densities[i] * h + atom_masses[i + 1];
            values.push(v);
            right_slopes.push(s);
        }
        Ok(Self { knots, values, right_slopes, atom_masses, densities })
    }

    /// Piecewise-linear hedge `x -> sum_j incr_j (x - knots_j)^+`.
    pub fn from_slope_increments(knots: Vec<T>, increments: Vec<T>) -> Result<Self> {
        if knots.len() != increments.len() {
            return Err(Error::InvalidHedge("knot/increment length mismatch".into()));
        }
        let n = knots.len();
        Self::from_curvature(knots, increments, vec![T::zero(); n.saturating_sub(1)])
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn anchor(&self) -> T {
        self.knots[0]
    }

    /// Curvature atoms `(position, mass)` with zero masses skipped.
    pub fn curvature_atoms(&self) -> Vec<(T, T)> {
        self.knots
            .iter()
            .zip(&self.atom_masses)
            .filter(|(_, &m)| m > T::zero())
            .map(|(&k, &m)| (k, m))
            .collect()
    }

    /// Curvature density on `(knots[i], knots[i+1])`.
    pub fn curvature_densities(&self) -> &[T] {
        &self.densities
    }

    fn interval_of(&self, x: T) -> usize {
        debug_assert!(x >= self.knots[0]);
        self.knots.partition_point(|&k| k <= x) - 1
    }

    /// lambda(x).
    pub fn eval(&self, x: T) -> T {
        let n = self.knots.len();
        if x <= self.knots[0] {
            // left slope at the anchor is zero by construction
            return self.values[0];
        }
        if x >= self.knots[n - 1] {
            return self.values[n - 1] + self.right_slopes[n - 1] * (x - self.knots[n - 1]);
        }
        let i = self.interval_of(x);
        let d = x - self.knots[i];
        self.values[i] + self.right_slopes[i] * d + self.densities[i] * d * d / fl::<T>(2.0)
    }

    /// lambda'(x+).
    pub fn deriv_plus(&self, x: T) -> T {
        let n = self.knots.len();
        if x < self.knots[0] {
            return T::zero();
        }
        if x >= self.knots[n - 1] {
            return self.right_slopes[n - 1];
        }
        let i = self.interval_of(x);
        self.right_slopes[i] + self.densities[i] * (x - self.knots[i])
    }

    /// lambda'(x-).
    pub fn deriv_minus(&self, x: T) -> T {
        let n = self.knots.len();
        if x <= self.knots[0] {
            return T::zero();
        }
        if x > self.knots[n - 1] {
            return self.right_slopes[n - 1];
        }
        let i = self.knots.partition_point(|&k| k < x) - 1;
        let from_right = self.right_slopes[i] + self.deriv_gap(i, x);
        if x == self.knots[i] {
            self.right_slopes[i] - self.atom_masses[i]
        } else {
            from_right
        }
    }

    fn deriv_gap(&self, i: usize, x: T) -> T {
        if i < self.densities.len() {
            self.densities[i] * (x - self.knots[i])
        } else {
            T::zero()
        }
    }

    /// True when the hedge is identically zero.
    pub fn is_zero(&self) -> bool {
        self.atom_masses.iter().all(|&m| m == T::zero())
            && self.densities.iter().all(|&d| d == T::zero())
    }

    /// Sanity check: value increments equal integrated slopes on the knots.
    pub fn consistency_residual(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.knots.len() - 1 {
            let h = self.knots[i + 1] - self.knots[i];
            let integrated =
                self.right_slopes[i] * h + self.densities[i] * h * h / fl::<T>(2.0);
            let resid = (self.values[i + 1] - self.values[i] - integrated).abs();
            worst = worst.max(resid);
        }
        worst
    }

    /// Writes `(x, lambda(x))` samples as CSV (`x,value`), including knots.
    pub fn write_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "x,value")?;
        for &k in &self.knots {
            writeln!(out, "{},{}", k, self.eval(k))?;
        }
        Ok(())
    }
}

/// A priced bound with everything required to audit it.
#[derive(Debug, Clone)]
pub struct BoundReport<T> {
    /// The model-free upper bound (the Hardy-Littlewood expectation).
    pub bound: T,
    /// Optimal static hedge.
    pub hedge: ConvexHedge<T>,
    /// Barycenter (embedding barrier) curve.
    pub barycenter: MonotoneCurve<T>,
    /// Inverse barycenter (stopping boundary) curve.
    pub beta: MonotoneCurve<T>,
    /// Price of the static leg, mu(lambda*).
    pub static_leg: T,
    /// Dynamic value at the origin, v(X0, X0).
    pub dynamic_leg: T,
    /// |bound - static_leg - dynamic_leg|.
    pub decomposition_gap: T,
    /// Quadrature error estimate for the bound.
    pub quad_error: T,
    /// Tail truncation diagnostics for unbounded supports.
    pub truncation: Option<TailInfo<T>>,
}

fn quad_tol<T: Real>(mu: &Marginal<T>) -> T {
    fl::<T>(1e-10) * mu.scale().max(T::one())
}

/// The optimal static hedge. Nonnegative, convex, zero at the lower
/// endpoint; its curvature solves the weak free-boundary equation with the
/// inverse barycenter as boundary.
pub fn lambda_star<T: Real>(mu: &Marginal<T>, g: &Payoff<T>) -> Result<ConvexHedge<T>> {
    if let Some((x, _)) = mu.atoms() {
        let n = x.len();
        if n == 1 {
            return Ok(ConvexHedge::zero(x[0]));
        }
        let breaks = mu.hl_breakpoints();
        let tol = quad_tol(mu) / fl::<T>(n as f64);
        let mut atoms = vec![T::zero(); n];
        for i in 0..n - 1 {
            let xi = x[i];
            let q = quad::integrate(|m| g.deriv(m) / (m - xi), breaks[i], breaks[i + 1], tol);
            atoms[i] = q.value.max(T::zero());
        }
        ConvexHedge::from_curvature(x.to_vec(), atoms, vec![T::zero(); n - 1])
    } else {
        // Finiteness of the curvature integral is equivalent to finiteness of
        // the Hardy-Littlewood expectation; fail early if that diverges.
        mu.hl_expectation(g)?;
        let x0 = mu.mean();
        let cap = mu.hl_quantile(fl(1e-10));
        let y_cap = mu.beta_at(cap);
        let lo = mu.lower_endpoint();
        // Knots in the state variable, denser toward the cap where the slope
        // steepens.
        let mut ys: Vec<T> = Vec::new();
        let n_lin = 256usize;
        for i in 0..=n_lin {
            ys.push(lo + (y_cap - lo) * fl::<T>(i as f64) / fl::<T>(n_lin as f64));
        }
        let mut shrink = (y_cap - lo) / fl::<T>(n_lin as f64);
        for _ in 0..24 {
            shrink /= fl::<T>(2.0);
            ys.push(y_cap - shrink);
        }
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys.dedup();
        // Slopes at the knots via the boundary-variable integral, computed
        // incrementally along the image of b. The integrand carries ~1e-12
        // jitter from the inner bisection for beta, so the tolerance is
        // floored above that noise.
        let tol = (quad_tol(mu) / fl::<T>(ys.len() as f64)).max(fl::<T>(1e-11) * mu.scale());
        let mut slopes = vec![T::zero(); ys.len()];
        let mut acc = T::zero();
        let mut prev_m = x0;
        for (j, &y) in ys.iter().enumerate() {
            let m = mu.barycenter_at(y).max(prev_m);
            if m > prev_m {
                let q = quad::integrate(
                    |mm| {
                        let beta = mu.beta_at(mm);
                        g.deriv(mm) / (mm - beta)
                    },
                    prev_m,
                    m,
                    tol,
                );
                acc += q.value.max(T::zero());
                prev_m = m;
            }
            slopes[j] = acc;
        }
        let densities: Vec<T> = (0..ys.len() - 1)
            .map(|i| ((slopes[i + 1] - slopes[i]) / (ys[i + 1] - ys[i])).max(T::zero()))
            .collect();
        ConvexHedge::from_curvature(ys, vec![T::zero(); slopes.len()], densities)
    }
}

/// mu(lambda) by direct integration against the marginal.
pub fn static_price<T: Real>(mu: &Marginal<T>, lambda: &ConvexHedge<T>) -> Result<T> {
    if let Some((x, p)) = mu.atoms() {
        let terms: Vec<T> = x.iter().zip(p).map(|(&xi, &pi)| pi * lambda.eval(xi)).collect();
        Ok(compensated_sum(&terms))
    } else {
        // E[lambda(X)] = lambda(0) + int_0^inf lambda'(x) mu((x,inf)) dx
        let tol = quad_tol(mu);
        let cut = mu.hl_quantile(fl(1e-12));
        let body = quad::integrate_with_breakpoints(
            |x| lambda.deriv_plus(x) * mu.survival_open(x),
            T::zero(),
            cut,
            tol,
            lambda.knots(),
        );
        let tail = quad::integrate_to_infinity(
            |x| lambda.deriv_plus(x) * mu.survival_open(x),
            cut,
            tol,
        )?;
        Ok(lambda.eval(T::zero()) + body.value + tail.value)
    }
}

/// mu(lambda) through the call curve: lambda(X0) + int (c - c0) dlambda''.
/// Independent route used to cross-check `static_price`.
pub fn static_price_via_calls<T: Real>(mu: &Marginal<T>, lambda: &ConvexHedge<T>) -> Result<T> {
    let x0 = mu.mean();
    let c_net = |y: T| -> Result<T> {
        let c0 = (x0 - y).max(T::zero());
        Ok(mu.call_price(y)? - c0)
    };
    let mut total = lambda.eval(x0);
    let mut atom_terms = Vec::new();
    for (y, m) in lambda.curvature_atoms() {
        atom_terms.push(m * c_net(y)?);
    }
    total += compensated_sum(&atom_terms);
    let knots = lambda.knots();
    let tol = quad_tol(mu);
    let mut breaks = mu.strike_grid(0);
    breaks.push(x0);
    for (i, &d) in lambda.curvature_densities().iter().enumerate() {
        if d > T::zero() {
            let q = quad::integrate_with_breakpoints(
                |y| c_net(y).unwrap_or(T::zero()),
                knots[i],
                knots[i + 1],
                tol / fl::<T>(lambda.curvature_densities().len() as f64),
                &breaks,
            );
            total += d * q.value;
        }
    }
    Ok(total)
}

/// Full report for the lookback bound: price, hedge, curves, decomposition.
pub fn lookback_bound<T: Real>(mu: &Marginal<T>, g: &Payoff<T>) -> Result<BoundReport<T>> {
    let hl: Expectation<T> = mu.hl_expectation(g)?;
    let hedge = lambda_star(mu, g)?;
    let static_leg = static_price(mu, &hedge)?;
    let beta = mu.beta();
    let barycenter = mu.barycenter();
    let x0 = mu.mean();
    let dynamic_leg = v_psi(&hedge, &beta, g, x0, x0)?;
    let decomposition_gap = (hl.value - static_leg - dynamic_leg).abs();
    Ok(BoundReport {
        bound: hl.value,
        hedge,
        barycenter,
        beta,
        static_leg,
        dynamic_leg,
        decomposition_gap,
        quad_error: hl.quad_error,
        truncation: hl.truncation,
    })
}

/// The tangent slope used by the candidate value function at max-level `m`:
/// the boundary-consistent subgradient
///
///   s(m) = int_{X0}^{m} g'(xi) / (xi - psi(xi)) dxi,
///
/// clamped into the subdifferential of `lambda` at `psi(m)`. When `psi` is
/// continuous and strictly increasing this is exactly `lambda'(psi(m))`; at
/// flats of `psi` (atoms of the marginal) it rotates through the kink's
/// subdifferential, which is what makes the value function C¹ across the
/// diagonal.
pub fn tangent_slope<T: Real>(
    lambda: &ConvexHedge<T>,
    psi: &MonotoneCurve<T>,
    g: &Payoff<T>,
    m: T,
) -> Result<T> {
    let anchor = psi.first_knot().0;
    if m <= anchor {
        return Ok(lambda.deriv_minus(psi.eval(anchor)).max(T::zero()));
    }
    let breaks: Vec<T> = psi.knots().iter().map(|&(x, _)| x).collect();
    let tol = fl::<T>(1e-10) * (T::one() + m.abs());
    let q = quad::integrate_with_breakpoints(
        |xi| {
            let gap = xi - psi.eval(xi);
            if gap <= T::zero() {
                T::zero()
            } else {
                g.deriv(xi) / gap
            }
        },
        anchor,
        m,
        tol,
        &breaks,
    );
    let p = psi.eval(m);
    Ok(q.value.max(lambda.deriv_minus(p)).min(lambda.deriv_plus(p)))
}

/// Candidate value function: obstacle value below the boundary, tangent
/// extension above it. Errors when `(x, m)` leaves the domain `x <= m`.
pub fn v_psi<T: Real>(
    lambda: &ConvexHedge<T>,
    psi: &MonotoneCurve<T>,
    g: &Payoff<T>,
    x: T,
    m: T,
) -> Result<T> {
    if x > m + fl::<T>(1e-12) * (T::one() + m.abs()) {
        return Err(Error::DomainViolation(format!(
            "v_psi requires x <= m, got x = {x}, m = {m}"
        )));
    }
    v_psi_extended(lambda, psi, g, x, m)
}

/// `v_psi` without the domain guard; the tangent expression remains defined
/// slightly across the diagonal, which the diagonal-derivative diagnostics
/// and the reflecting scheme both rely on.
pub fn v_psi_extended<T: Real>(
    lambda: &ConvexHedge<T>,
    psi: &MonotoneCurve<T>,
    g: &Payoff<T>,
    x: T,
    m: T,
) -> Result<T> {
    let p = psi.eval(m);
    if x <= p {
        Ok(g.eval(m) - lambda.eval(x))
    } else {
        let s = tangent_slope(lambda, psi, g, m)?;
        Ok(g.eval(m) - lambda.eval(p) - s * (x - p))
    }
}

/// Dynamic hedge ratio: -lambda'(x) strictly below the boundary, frozen at
/// the tangent slope between the boundary and the diagonal.
pub fn semistatic_delta<T: Real>(
    lambda: &ConvexHedge<T>,
    psi: &MonotoneCurve<T>,
    g: &Payoff<T>,
    x: T,
    m: T,
) -> Result<T> {
    if x > m + fl::<T>(1e-12) * (T::one() + m.abs()) {
        return Err(Error::DomainViolation(format!(
            "semistatic_delta requires x <= m, got x = {x}, m = {m}"
        )));
    }
    let p = psi.eval(m);
    if x < p {
        Ok(-lambda.deriv_plus(x))
    } else {
        Ok(-tangent_slope(lambda, psi, g, m)?)
    }
}

/// Precomputed tangent-slope curve `m -> s(m)` for fast per-step hedging in
/// the Monte Carlo verifier. Knots at the boundary's own knots plus adaptive
/// refinement inside flats.
pub fn tangent_slope_curve<T: Real>(
    lambda: &ConvexHedge<T>,
    psi: &MonotoneCurve<T>,
    g: &Payoff<T>,
    m_hi: T,
    tol: T,
) -> Result<MonotoneCurve<T>> {
    let anchor = psi.first_knot().0;
    let mut ms: Vec<T> = psi
        .knots()
        .iter()
        .map(|&(x, _)| x)
        .filter(|&x| x > anchor && x < m_hi)
        .collect();
    ms.push(m_hi);
    ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ms.dedup();

    let integrand = |xi: T| {
        let gap = xi - psi.eval(xi);
        if gap <= T::zero() {
            T::zero()
        } else {
            g.deriv(xi) / gap
        }
    };
    let seg_tol = tol / fl::<T>(8.0) / fl::<T>(ms.len() as f64);

    let mut knots: Vec<(T, T)> = vec![(anchor, T::zero())];
    let mut acc = T::zero();
    let mut prev = anchor;
    for &m in &ms {
        // refine within the flat until linear interpolation of s is accurate
        let s_end = acc + quad::integrate(integrand, prev, m, seg_tol).value;
        let mut stack = vec![(prev, acc, m, s_end)];
        let mut local: Vec<(T, T)> = Vec::new();
        while let Some((a, sa, b, sb)) = stack.pop() {
            let mid = (a + b) / fl::<T>(2.0);
            let smid = sa + quad::integrate(integrand, a, mid, seg_tol).value;
            let lerp = (sa + sb) / fl::<T>(2.0);
            if (smid - lerp).abs() <= tol || b - a < fl::<T>(1e-9) * (T::one() + b.abs()) {
                local.push((mid, smid));
                local.push((b, sb));
            } else {
                stack.push((mid, smid, b, sb));
                stack.push((a, sa, mid, smid));
            }
        }
        local.sort_by(|u, v| u.0.partial_cmp(&v.0).unwrap());
        knots.extend(local);
        acc = s_end;
        prev = m;
    }
    knots.dedup_by(|a, b| a.0 == b.0);
    // keep the sampled slope inside the hedge's subdifferential at the
    // boundary, then enforce monotonicity against quadrature jitter
    let mut run = T::zero();
    for k in knots.iter_mut() {
        let p = psi.eval(k.0);
        k.1 = k.1.max(lambda.deriv_minus(p)).min(lambda.deriv_plus(p));
        run = run.max(k.1);
        k.1 = run;
    }
    MonotoneCurve::new(
        knots,
        crate::curve::Direction::Nondecreasing,
        crate::curve::Continuity::Right,
        crate::curve::Interpolation::Linear,
        crate::curve::Extrapolation::Constant,
        crate::curve::Extrapolation::Constant,
    )
}

/// Upper bound induced by an arbitrary boundary `psi` (must satisfy
/// `psi(m) < m`): `g(X0) + int phi(psi(m), m) g'(m) dm`. Minimal exactly at
/// `psi = beta`.
pub fn upper_bound_given_psi<T: Real>(
    mu: &Marginal<T>,
    g: &Payoff<T>,
    psi: &MonotoneCurve<T>,
) -> Result<T> {
    let x0 = mu.mean();
    let lo = mu.lower_endpoint();
    let hi = mu.upper_endpoint().unwrap_or_else(|| mu.hl_quantile(fl(1e-10)));
    let phi = |m: T| -> Result<T> {
        let p = psi.eval(m);
        if p >= m {
            return Err(Error::DomainViolation(format!(
                "upper_bound_given_psi requires psi(m) < m, got psi({m}) = {p}"
            )));
        }
        let c = mu.call_price(p)?;
        let c0 = if m < x0 { (x0 - p).max(T::zero()) } else { T::zero() };
        Ok((c - c0) / (m - p))
    };
    let mut breaks = mu.hl_breakpoints();
    breaks.extend(psi.knots().iter().map(|&(x, _)| x));
    breaks.push(x0);
    if let Some((x, _)) = mu.atoms() {
        breaks.extend_from_slice(x);
    }
    // At the support endpoints the boundary can meet the diagonal with the
    // ratio 0/0 (finite limit); keep the quadrature a hair inside.
    let pad = fl::<T>(1e-9) * (T::one() + hi.abs().max(lo.abs()));
    let (lo, hi) = (lo + pad, hi - pad);
    let mut err: Option<Error> = None;
    let q = quad::integrate_with_breakpoints(
        |m| match phi(m) {
            Ok(v) => v * g.deriv(m),
            Err(e) => {
                err = Some(e);
                T::zero()
            }
        },
        lo,
        hi,
        quad_tol(mu),
        &breaks,
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(g.eval(x0) + q.value)
}
