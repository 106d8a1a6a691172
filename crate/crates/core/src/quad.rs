//! Adaptive Simpson quadrature with breakpoint-aware splitting.
//!
//! Integrands in this crate are smooth between knots of piecewise curves and
//! kinked at the knots themselves, so every caller passes the knot set as
//! explicit breakpoints and the adaptive rule only ever sees smooth pieces.

use crate::error::{Error, Result};
use crate::num::{fl, Real};

/// Value plus an a-posteriori error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<T> {
    pub value: T,
    pub error_estimate: T,
}

const MAX_DEPTH: u32 = 48;
/// Hard cap on integrand evaluations per `integrate` call; once exhausted
/// the current Richardson estimates are accepted (their error contributes to
/// the reported estimate). Guards against tolerance demands below the noise
/// floor of integrands built on iterative inner solves.
const MAX_NODES: u32 = 20_000;

fn simpson<T: Real>(f: &mut impl FnMut(T) -> T, a: T, fa: T, b: T, fb: T) -> (T, T, T) {
    let two = fl::<T>(2.0);
    let m = (a + b) / two;
    let fm = f(m);
    let s = (b - a) / fl::<T>(6.0) * (fa + fl::<T>(4.0) * fm + fb);
    (m, fm, s)
}

#[allow(clippy::too_many_arguments)]
fn adapt<T: Real>(
    f: &mut impl FnMut(T) -> T,
    a: T,
    fa: T,
    b: T,
    fb: T,
    whole: T,
    m: T,
    fm: T,
    tol: T,
    depth: u32,
    budget: &mut u32,
) -> (T, T) {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    *budget = budget.saturating_sub(1);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || *budget == 0 || delta.abs() <= fl::<T>(15.0) * tol {
        (left + right + delta / fl::<T>(15.0), delta.abs() / fl::<T>(15.0))
    } else {
        let half = tol / fl::<T>(2.0);
        let (lv, le) = adapt(f, a, fa, m, fm, left, lm, flm, half, depth + 1, budget);
        let (rv, re) = adapt(f, m, fm, b, fb, right, rm, frm, half, depth + 1, budget);
        (lv + rv, le + re)
    }
}

/// Integrates `f` over `[a, b]` with absolute tolerance `tol`.
pub fn integrate<T: Real>(mut f: impl FnMut(T) -> T, a: T, b: T, tol: T) -> Quadrature<T> {
    if a == b {
        return Quadrature { value: T::zero(), error_estimate: T::zero() };
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(&mut f, a, fa, b, fb);
    let mut budget = MAX_NODES;
    let (value, error_estimate) =
        adapt(&mut f, a, fa, b, fb, whole, m, fm, tol, 0, &mut budget);
    Quadrature { value, error_estimate }
}

/// Integrates `f` over `[a, b]` splitting at the given breakpoints (atoms,
/// curve knots) where the integrand may be kinked. The tolerance budget is
/// divided evenly across the smooth pieces.
pub fn integrate_with_breakpoints<T: Real>(
    mut f: impl FnMut(T) -> T,
    a: T,
    b: T,
    tol: T,
    breakpoints: &[T],
) -> Quadrature<T> {
    if a == b {
        return Quadrature { value: T::zero(), error_estimate: T::zero() };
    }
    debug_assert!(a < b);
    let mut cuts: Vec<T> = breakpoints.iter().copied().filter(|&p| p > a && p < b).collect();
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    cuts.dedup();
    let pieces = cuts.len() + 1;
    let tol_piece = tol / fl::<T>(pieces as f64);
    let mut lo = a;
    let mut value = T::zero();
    let mut error_estimate = T::zero();
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        let q = integrate(&mut f, lo, hi, tol_piece);
        value += q.value;
        error_estimate += q.error_estimate;
        lo = hi;
    }
    Quadrature { value, error_estimate }
}

/// Integrates `f` over `[a, inf)` by geometric windows, signalling divergence
/// when the tail refuses to decay below the tolerance.
pub fn integrate_to_infinity<T: Real>(
    mut f: impl FnMut(T) -> T,
    a: T,
    tol: T,
) -> Result<Quadrature<T>> {
    let mut lo = a;
    let mut width = fl::<T>(1.0) + a.abs();
    let mut value = T::zero();
    let mut error_estimate = T::zero();
    for _ in 0..64 {
        let hi = lo + width;
        let q = integrate(&mut f, lo, hi, tol / fl::<T>(8.0));
        value += q.value;
        error_estimate += q.error_estimate;
        if q.value.abs() < tol / fl::<T>(4.0) {
            return Ok(Quadrature { value, error_estimate });
        }
        lo = hi;
        width *= fl::<T>(2.0);
    }
    Err(Error::DivergentIntegral(format!(
        "tail contribution still above tolerance after window extension to {lo}"
    )))
}
