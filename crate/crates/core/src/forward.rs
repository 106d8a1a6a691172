//! Forward-start lookback bound from two marginals in convex order.
//!
//! The optimal obstacle at max-level `m` is the largest minimizer of
//! `xi -> (c2(xi) - c1(m)) / (m - xi)`, equivalently the largest root of
//! `c2(xi) + (m - xi) c2'(xi) = c1(m)` whose left side is nondecreasing in
//! `xi`. The bound is evaluated through the minimized ratio itself, which
//! stays well defined at kinks of a piecewise-linear `c2` where the slope is
//! multivalued.

use crate::curve::{Continuity, Direction, Extrapolation, Interpolation, MonotoneCurve};
use crate::error::{Error, Result};
use crate::marginals::{check_convex_order, ConvexOrder, Marginal};
use crate::num::{fl, Real};
use crate::payoff::Payoff;
use crate::quad;

/// Forward-start bound plus its certificates.
#[derive(Debug, Clone)]
pub struct ForwardBoundReport<T> {
    /// Primary form of the bound: `g(l1) + int h_min(m) g'(m) dm`.
    pub bound: T,
    /// Second displayed form: `mu1(g) + int (h_min - mu1-survival) g' dm`.
    pub bound_second_form: T,
    /// |bound - bound_second_form|.
    pub form_gap: T,
    /// Sampled optimal obstacle curve on `[l1, r2]`.
    pub psi2: MonotoneCurve<T>,
    /// Convex-order certificate (always `Ordered` in a returned report).
    pub convex_order: ConvexOrder<T>,
    /// Quadrature error estimate.
    pub quad_error: T,
}

fn order_tol<T: Real>(mu1: &Marginal<T>, mu2: &Marginal<T>) -> T {
    fl::<T>(1e-9) * mu1.scale().max(mu2.scale())
}

/// Minimized ratio and its largest minimizer at max-level `m`:
/// `(psi2*(m), min_xi (c2(xi) - c1(m)) / (m - xi))`.
///
/// When the marginals touch at `m` (`c2(m) = c1(m)`) the infimum is attained
/// in the limit `xi -> m` and equals the left slope `-c2'(m-)`; the obstacle
/// degenerates to `m` (no motion at that level).
fn obstacle_and_ratio<T: Real>(
    mu1: &Marginal<T>,
    mu2: &Marginal<T>,
    m: T,
    scan_hint: &mut usize,
) -> Result<(T, T)> {
    let c1m = mu1.call_price(m)?;
    let c2m = mu2.call_price(m)?;
    let tol = order_tol(mu1, mu2);
    if c2m - c1m <= tol {
        return Ok((m, mu2.survival(m)));
    }
    if let Some((x2, _)) = mu2.atoms() {
        // The ratio is unimodal in xi (its one-sided slope has the sign of a
        // nondecreasing function), so scan atoms forward from the hint,
        // taking ties forward to get the largest minimizer.
        let h = |xi: T| -> Result<T> { Ok((mu2.call_price(xi)? - c1m) / (m - xi)) };
        let mut j = (*scan_hint).min(x2.len() - 1);
        while j > 0 && x2[j] >= m {
            j -= 1;
        }
        if x2[j] >= m {
            // No atom strictly below m: minimizer approaches m.
            return Ok((m, mu2.survival(m)));
        }
        let mut best = j;
        let mut best_v = h(x2[j])?;
        let mut k = j + 1;
        while k < x2.len() && x2[k] < m {
            let v = h(x2[k])?;
            if v <= best_v {
                best = k;
                best_v = v;
                k += 1;
            } else {
                break;
            }
        }
        // The hint may sit past the minimizer for this (smaller) m; back up.
        while best > 0 {
            let v = h(x2[best - 1])?;
            if v < best_v {
                best -= 1;
                best_v = v;
            } else {
                break;
            }
        }
        *scan_hint = best;
        Ok((x2[best], best_v))
    } else {
        // Smooth c2: bisect the nondecreasing root function
        // F(xi) = c2(xi) + (m - xi) c2'(xi) - c1(m).
        let x0 = mu2.mean();
        let l2 = mu2.lower_endpoint();
        let mut lo = l2 - (x0 - l2) - T::one();
        let mut hi = m - fl::<T>(1e-12) * (T::one() + m.abs());
        let f = |xi: T| -> Result<T> {
            Ok(mu2.call_price(xi)? + (m - xi) * mu2.call_slope(xi)? - c1m)
        };
        // Under convex order the limit of F below the support is
        // X0 - m - c1(m) <= 0; a positive value there beyond cancellation
        // noise means genuinely inconsistent inputs.
        if f(lo)? > fl::<T>(1e-9) * mu1.scale().max(mu2.scale()) {
            return Err(Error::NoRoot(format!(
                "root function positive on the whole bracket at m = {m}"
            )));
        }
        let tol_x = fl::<T>(1e-12) * (T::one() + m.abs());
        for _ in 0..200 {
            if hi - lo <= tol_x {
                break;
            }
            let mid = (lo + hi) / fl::<T>(2.0);
            if f(mid)? <= T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ratio = (mu2.call_price(lo)? - c1m) / (m - lo);
        Ok((lo, ratio))
    }
}

/// The optimal obstacle at `x`: largest root of
/// `c2(psi) + (x - psi) c2'(psi) = c1(x)`, with the limit convention
/// `psi = x` when the marginals touch at `x`.
pub fn psi2_star<T: Real>(mu1: &Marginal<T>, mu2: &Marginal<T>, x: T) -> Result<T> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("level {x}")));
    }
    let mut hint = 0usize;
    Ok(obstacle_and_ratio(mu1, mu2, x, &mut hint)?.0)
}

fn sample_levels<T: Real>(mu1: &Marginal<T>, mu2: &Marginal<T>, lo: T, hi: T) -> Vec<T> {
    let mut ms: Vec<T> = Vec::new();
    ms.push(lo);
    ms.push(hi);
    ms.extend(mu2.hl_breakpoints());
    if let Some((x1, _)) = mu1.atoms() {
        ms.extend_from_slice(x1);
    }
    if let Some((x2, _)) = mu2.atoms() {
        ms.extend_from_slice(x2);
    }
    let fill = 1024usize;
    for i in 0..=fill {
        ms.push(lo + (hi - lo) * fl::<T>(i as f64) / fl::<T>(fill as f64));
    }
    ms.retain(|&m| m >= lo && m <= hi && m.is_finite());
    ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ms.dedup();
    ms
}

/// Forward-start lookback bound. Requires `mu1 <= mu2` in convex order.
pub fn forward_bound<T: Real>(
    mu1: &Marginal<T>,
    mu2: &Marginal<T>,
    g: &Payoff<T>,
) -> Result<ForwardBoundReport<T>> {
    let order = check_convex_order(mu1, mu2, order_tol(mu1, mu2))?;
    if let ConvexOrder::Violated { at } = order {
        return Err(Error::ConvexOrderViolated { witness: at.to_f64().unwrap_or(f64::NAN) });
    }
    let l1 = mu1.lower_endpoint();
    let r2 = mu2.upper_endpoint().unwrap_or_else(|| mu2.hl_quantile(fl(1e-10)));
    // The integrand h_min(m) g'(m) vanishes below l1 (where h_min = 1 and the
    // mu1 survival is 1 as well) and above r2; integrate over [l1, r2].
    let mut hint1 = 0usize;
    let mut hint2 = 0usize;
    let mut breaks = mu2.hl_breakpoints();
    if let Some((x1, _)) = mu1.atoms() {
        breaks.extend_from_slice(x1);
    }
    if let Some((x2, _)) = mu2.atoms() {
        breaks.extend_from_slice(x2);
    }
    let tol = fl::<T>(1e-10) * mu1.scale().max(mu2.scale());

    let mut fail: Option<Error> = None;
    let q_primary = quad::integrate_with_breakpoints(
        |m| match obstacle_and_ratio(mu1, mu2, m, &mut hint1) {
            Ok((_, ratio)) => ratio * g.deriv(m),
            Err(e) => {
                fail = Some(e);
                T::zero()
            }
        },
        l1,
        r2,
        tol,
        &breaks,
    );
    if let Some(e) = fail.take() {
        return Err(e);
    }
    let bound = g.eval(l1) + q_primary.value;

    let mu1_g = mu1.expectation(g)?;
    let q_second = quad::integrate_with_breakpoints(
        |m| match obstacle_and_ratio(mu1, mu2, m, &mut hint2) {
            Ok((_, ratio)) => (ratio - mu1.survival(m)) * g.deriv(m),
            Err(e) => {
                fail = Some(e);
                T::zero()
            }
        },
        l1,
        r2,
        tol,
        &breaks,
    );
    if let Some(e) = fail {
        return Err(e);
    }
    let second = mu1_g.value + q_second.value;

    // Materialize the obstacle curve on the sampling lattice.
    let mut hint = 0usize;
    let mut knots: Vec<(T, T)> = Vec::new();
    let mut run = T::neg_infinity();
    for m in sample_levels(mu1, mu2, l1, r2) {
        let (p, _) = obstacle_and_ratio(mu1, mu2, m, &mut hint)?;
        run = run.max(p);
        knots.push((m, run));
    }
    let psi2 = MonotoneCurve::new(
        knots,
        Direction::Nondecreasing,
        Continuity::Right,
        Interpolation::Step,
        Extrapolation::Constant,
        Extrapolation::Identity,
    )?;

    Ok(ForwardBoundReport {
        bound,
        bound_second_form: second,
        form_gap: (bound - second).abs(),
        psi2,
        convex_order: ConvexOrder::Ordered,
        quad_error: q_primary.error_estimate + q_second.error_estimate + mu1_g.quad_error,
    })
}

/// Value of the induced candidate function on the diagonal at the first
/// maturity: `v^{psi2*}(x, x)` under the hedge generated by the optimal
/// obstacle, anchored so that the slope vanishes at `l1`.
pub fn forward_intermediate_value<T: Real>(
    mu1: &Marginal<T>,
    mu2: &Marginal<T>,
    g: &Payoff<T>,
    x: T,
) -> Result<T> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("level {x}")));
    }
    let l1 = mu1.lower_endpoint();
    if x <= l1 {
        return Ok(g.eval(x));
    }
    let c1x = mu1.call_price(x)?;
    let c2x = mu2.call_price(x)?;
    if c2x - c1x <= order_tol(mu1, mu2) {
        // Touching marginals at x: immediate stopping, no hedge value.
        return Ok(g.eval(x));
    }
    // Sweep the obstacle from l1 to x, accumulating the tangent slope
    //   s(m) = int_{l1}^{m} g'(xi) / (xi - psi2(xi)) dxi
    // and the hedge value at the moving obstacle
    //   lambda2(psi2(m)) = int s(m) dpsi2(m)   (Stieltjes over obstacle jumps).
    let r2 = mu2.upper_endpoint().unwrap_or_else(|| mu2.hl_quantile(fl(1e-10)));
    let levels = sample_levels(mu1, mu2, l1, r2.min(x).max(l1));
    let mut hint = 0usize;
    let mut s = T::zero();
    let mut lam_at_psi = T::zero();
    let mut prev_m = l1;
    let (mut prev_psi, _) = obstacle_and_ratio(mu1, mu2, l1, &mut hint)?;
    let tol = fl::<T>(1e-10) * mu1.scale().max(mu2.scale());
    let n_levels = levels.len().max(1);
    for &m in levels.iter().skip(1) {
        let m = m.min(x);
        if m <= prev_m {
            continue;
        }
        let (psi, _) = obstacle_and_ratio(mu1, mu2, m, &mut hint)?;
        // treat the obstacle as constant on (prev_m, m]
        let gap_ok = prev_psi < prev_m;
        if gap_ok {
            let q = quad::integrate(
                |xi| {
                    let gap = xi - prev_psi;
                    if gap <= T::zero() {
                        T::zero()
                    } else {
                        g.deriv(xi) / gap
                    }
                },
                prev_m,
                m,
                tol / fl::<T>(n_levels as f64),
            );
            s += q.value.max(T::zero());
        }
        if psi > prev_psi {
            lam_at_psi += s * (psi - prev_psi);
        }
        prev_psi = psi.max(prev_psi);
        prev_m = m;
        if m >= x {
            break;
        }
    }
    Ok(g.eval(x) - lam_at_psi - s * (x - prev_psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lookback;

    fn uniform() -> Marginal<f64> {
        Marginal::uniform_atoms(0.0, 1.0, 2_000).unwrap()
    }

    fn two_point() -> Marginal<f64> {
        Marginal::from_atoms(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap()
    }

    #[test]
    fn psi2_examples() {
        let u = uniform();
        // identical marginals degenerate to the identity obstacle
        assert_eq!(psi2_star(&u, &u, 0.75).unwrap(), 0.75);

        // point-mass first marginal reduces to the inverse barycenter
        let d = Marginal::dirac(0.5).unwrap();
        let p = psi2_star(&d, &u, 0.75).unwrap();
        assert!((p - 0.5).abs() < 2e-3, "psi2 {p}");
        assert!((p - u.beta_at(0.75)).abs() < 1e-12);
    }

    #[test]
    fn forward_bound_identical_marginals_is_price() {
        let g = Payoff::identity();
        let tp = two_point();
        let r = forward_bound(&tp, &tp, &g).unwrap();
        assert!((r.bound - 0.5).abs() < 1e-9, "bound {}", r.bound);
        assert!(r.form_gap < 1e-8);

        let u = uniform();
        let r = forward_bound(&u, &u, &g).unwrap();
        assert!((r.bound - 0.5).abs() < 1e-8, "bound {}", r.bound);
    }

    #[test]
    fn forward_bound_from_dirac_matches_lookback() {
        let g = Payoff::identity();
        let u = uniform();
        let d = Marginal::dirac(0.5).unwrap();
        let fwd = forward_bound(&d, &u, &g).unwrap();
        let lb = lookback::lookback_bound(&u, &g).unwrap();
        assert!(
            (fwd.bound - lb.bound).abs() < 1e-6,
            "forward {} vs lookback {}",
            fwd.bound,
            lb.bound
        );
        assert!(fwd.form_gap < 1e-7);
    }

    #[test]
    fn forward_bound_constant_payoff() {
        let g = Payoff::tabulated(vec![(0.0, 3.0, 0.0), (2.0, 3.0, 0.0)]).unwrap();
        let d = Marginal::dirac(0.5).unwrap();
        let u = uniform();
        let r = forward_bound(&d, &u, &g).unwrap();
        assert!((r.bound - 3.0).abs() < 1e-12);
    }

    #[test]
    fn forward_bound_rejects_unordered_pair() {
        let g = Payoff::identity();
        let u = uniform();
        let d = Marginal::dirac(0.5).unwrap();
        let err = forward_bound(&u, &d, &g).unwrap_err();
        match err {
            Error::ConvexOrderViolated { witness } => {
                assert!((witness - 0.5).abs() < 2e-2, "witness {witness}")
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn sandwich_between_price_and_lookback() {
        let g = Payoff::identity();
        let tp = two_point();
        // mean-preserving spread of the two-point law
        let spread = Marginal::from_atoms(vec![
            (-0.25, 0.25),
            (0.25, 0.25),
            (0.75, 0.25),
            (1.25, 0.25),
        ])
        .unwrap();
        let r = forward_bound(&tp, &spread, &g).unwrap();
        let price = tp.expectation(&g).unwrap().value;
        let lb = lookback::lookback_bound(&spread, &g).unwrap().bound;
        assert!(r.bound >= price - 1e-10, "bound {} below price {}", r.bound, price);
        assert!(r.bound <= lb + 1e-10, "bound {} above lookback {}", r.bound, lb);
    }

    #[test]
    fn psi2_dominates_beta_and_is_monotone() {
        // a positive first-marginal call shifts the root function down, so
        // the obstacle sits at or above the single-marginal boundary, with
        // equality where c1 vanishes
        let g = Payoff::identity();
        let tp = two_point();
        let spread = Marginal::from_atoms(vec![
            (-0.25, 0.25),
            (0.25, 0.25),
            (0.75, 0.25),
            (1.25, 0.25),
        ])
        .unwrap();
        let r = forward_bound(&tp, &spread, &g).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for &(m, p) in r.psi2.knots() {
            assert!(p >= prev);
            prev = p;
            assert!(
                p >= spread.beta_at(m) - 1e-12,
                "psi2({m}) = {p} below beta {}",
                spread.beta_at(m)
            );
            if m > 1.0 + 1e-9 && m < 1.25 {
                // c1 = 0 there: obstacle coincides with the inverse barycenter
                assert!(
                    (p - spread.beta_at(m)).abs() <= 1e-12,
                    "psi2({m}) = {p} should match beta {}",
                    spread.beta_at(m)
                );
            }
        }
    }

    #[test]
    fn intermediate_value_examples() {
        let g = Payoff::identity();
        let u = uniform();
        // identical marginals: value collapses to the payoff
        assert_eq!(forward_intermediate_value(&u, &u, &g, 0.7).unwrap(), 0.7);

        // dirac first marginal: consistency with the lookback decomposition
        let d = Marginal::dirac(0.5).unwrap();
        let v = forward_intermediate_value(&d, &u, &g, 0.5).unwrap();
        let lb = lookback::lookback_bound(&u, &g).unwrap();
        assert!(
            (v - lb.dynamic_leg).abs() < 1e-3,
            "intermediate {v} vs dynamic {}",
            lb.dynamic_leg
        );

        // the diagonal derivative is -lambda2'(psi2(x)) <= 0 by the Neumann
        // property, so the slice value decays above the support's lower end;
        // use a pair whose call curves stay strictly apart between the
        // endpoints (split-atom spreads touch at cluster midpoints, where the
        // transport pinches and the slice value is not comparable)
        let inner = Marginal::from_atoms(vec![(0.25, 0.5), (0.75, 0.5)]).unwrap();
        let outer = Marginal::from_atoms(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let mut prev = f64::INFINITY;
        let mut x = inner.lower_endpoint();
        while x <= 0.95 {
            let v = forward_intermediate_value(&inner, &outer, &g, x).unwrap();
            assert!(v <= prev + 1e-9, "diagonal value rose at {x}: {v} > {prev}");
            prev = v;
            x += 0.05;
        }
    }
}
