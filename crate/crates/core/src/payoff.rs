//! Nondecreasing C¹ payoff functions of the running maximum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{fl, Real};

/// Payoff kinds. A raw call `(x-K)^+` is not C¹, so calls are only exposed
/// through `SmoothedCall` with an explicit smoothing width.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Payoff<T> {
    /// g(x) = x.
    Identity,
    /// g(x) = (x ∨ 0)^p with exponent p ≥ 1.
    Power { exponent: T },
    /// Quadratic mollification of `(x-strike)^+` on `[strike-eps, strike+eps]`.
    SmoothedCall { strike: T, eps: T },
    /// Monotone C¹ interpolation of `(x, g, g')` knots.
    Tabulated { knots: Vec<(T, T, T)> },
}

impl<T: Real> Payoff<T> {
    pub fn identity() -> Self {
        Payoff::Identity
    }

    pub fn power(exponent: T) -> Result<Self> {
        if !exponent.is_finite() || exponent < T::one() {
            return Err(Error::InvalidPayoff {
                field: "exponent".into(),
                reason: "must be finite and >= 1".into(),
            });
        }
        Ok(Payoff::Power { exponent })
    }

    pub fn smoothed_call(strike: T, eps: T) -> Result<Self> {
        if !strike.is_finite() || !eps.is_finite() || eps <= T::zero() {
            return Err(Error::InvalidPayoff {
                field: "eps".into(),
                reason: "smoothing width must be finite and positive".into(),
            });
        }
        Ok(Payoff::SmoothedCall { strike, eps })
    }

    /// Validates knots at load: ascending abscissae, g ≥ 0 nondecreasing,
    /// g' ≥ 0, and secant slopes consistent with the stored derivatives
    /// (the C¹ requirement on the data).
    pub fn tabulated(knots: Vec<(T, T, T)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidPayoff {
                field: "knots".into(),
                reason: "need at least two knots".into(),
            });
        }
        for (i, &(x, g, dg)) in knots.iter().enumerate() {
            if !x.is_finite() || !g.is_finite() || !dg.is_finite() {
                return Err(Error::InvalidPayoff {
                    field: format!("knots[{i}]"),
                    reason: "non-finite entry".into(),
                });
            }
            if g < T::zero() || dg < T::zero() {
                return Err(Error::InvalidPayoff {
                    field: format!("knots[{i}]"),
                    reason: "value and derivative must be nonnegative".into(),
                });
            }
        }
        for (i, w) in knots.windows(2).enumerate() {
            let (x0, g0, d0) = w[0];
            let (x1, g1, d1) = w[1];
            if x1 <= x0 {
                return Err(Error::InvalidPayoff {
                    field: format!("knots[{}]", i + 1),
                    reason: "abscissae must be strictly increasing".into(),
                });
            }
            if g1 < g0 {
                return Err(Error::InvalidPayoff {
                    field: format!("knots[{}]", i + 1),
                    reason: "values must be nondecreasing".into(),
                });
            }
            // Fritsch-Carlson style bound keeping the Hermite piece monotone.
            let secant = (g1 - g0) / (x1 - x0);
            let three = fl::<T>(3.0);
            if secant > T::zero() && (d0 > three * secant || d1 > three * secant) {
                return Err(Error::InvalidPayoff {
                    field: format!("knots[{}]", i + 1),
                    reason: "derivatives too steep for monotone interpolation".into(),
                });
            }
            if secant == T::zero() && (d0 > T::zero() || d1 > T::zero()) {
                return Err(Error::InvalidPayoff {
                    field: format!("knots[{}]", i + 1),
                    reason: "flat segment with nonzero endpoint derivative".into(),
                });
            }
        }
        Ok(Payoff::Tabulated { knots })
    }

    /// g(x).
    pub fn eval(&self, x: T) -> T {
        match self {
            Payoff::Identity => x,
            Payoff::Power { exponent } => {
                if x <= T::zero() {
                    T::zero()
                } else {
                    x.powf(*exponent)
                }
            }
            Payoff::SmoothedCall { strike, eps } => {
                let lo = *strike - *eps;
                let hi = *strike + *eps;
                if x <= lo {
                    T::zero()
                } else if x >= hi {
                    x - *strike
                } else {
                    let d = x - lo;
                    d * d / (fl::<T>(4.0) * *eps)
                }
            }
            Payoff::Tabulated { knots } => tabulated_eval(knots, x).0,
        }
    }

    /// g'(x).
    pub fn deriv(&self, x: T) -> T {
        match self {
            Payoff::Identity => T::one(),
            Payoff::Power { exponent } => {
                if x <= T::zero() {
                    T::zero()
                } else {
                    *exponent * x.powf(*exponent - T::one())
                }
            }
            Payoff::SmoothedCall { strike, eps } => {
                let lo = *strike - *eps;
                let hi = *strike + *eps;
                if x <= lo {
                    T::zero()
                } else if x >= hi {
                    T::one()
                } else {
                    (x - lo) / (fl::<T>(2.0) * *eps)
                }
            }
            Payoff::Tabulated { knots } => tabulated_eval(knots, x).1,
        }
    }

    /// True when g' vanishes identically (constant payoff).
    pub fn is_constant(&self) -> bool {
        match self {
            Payoff::Tabulated { knots } => {
                knots.windows(2).all(|w| w[1].1 == w[0].1) && knots.iter().all(|k| k.2 == T::zero())
            }
            _ => false,
        }
    }
}

/// Cubic Hermite evaluation with linear extension outside the knot range.
fn tabulated_eval<T: Real>(knots: &[(T, T, T)], x: T) -> (T, T) {
    let n = knots.len();
    let (x0, g0, d0) = knots[0];
    if x <= x0 {
        return (g0 + d0 * (x - x0), d0);
    }
    let (xn, gn, dn) = knots[n - 1];
    if x >= xn {
        return (gn + dn * (x - xn), dn);
    }
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if knots[mid].0 <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (xa, ga, da) = knots[lo];
    let (xb, gb, db) = knots[hi];
    let h = xb - xa;
    let t = (x - xa) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let two = fl::<T>(2.0);
    let three = fl::<T>(3.0);
    let h00 = two * t3 - three * t2 + T::one();
    let h10 = t3 - two * t2 + t;
    let h01 = -two * t3 + three * t2;
    let h11 = t3 - t2;
    let g = h00 * ga + h10 * h * da + h01 * gb + h11 * h * db;
    let dh00 = (fl::<T>(6.0) * t2 - fl::<T>(6.0) * t) / h;
    let dh10 = (three * t2 - fl::<T>(4.0) * t + T::one()) / h;
    let dh01 = (fl::<T>(6.0) * t - fl::<T>(6.0) * t2) / h;
    let dh11 = (three * t2 - two * t) / h;
    let dg = dh00 * ga + dh10 * h * da + dh01 * gb + dh11 * h * db;
    (g, dg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_power() {
        let id = Payoff::<f64>::identity();
        assert_eq!(id.eval(0.75), 0.75);
        assert_eq!(id.deriv(123.0), 1.0);
        let sq = Payoff::power(2.0).unwrap();
        assert_eq!(sq.eval(0.5), 0.25);
        assert_eq!(sq.deriv(0.5), 1.0);
        assert_eq!(sq.eval(-1.0), 0.0);
    }

    #[test]
    fn smoothed_call_regions() {
        let g = Payoff::<f64>::smoothed_call(1.0, 0.1).unwrap();
        assert_eq!(g.eval(0.9), 0.0);
        assert_eq!(g.deriv(0.9), 0.0);
        assert_eq!(g.deriv(1.1), 1.0);
        assert!((g.eval(1.1) - 0.1).abs() < 1e-15);
        // C1 gluing at the mollification edges
        assert!((g.eval(1.1 - 1e-9) - g.eval(1.1)).abs() < 1e-8);
        assert!((g.deriv(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let payoffs = vec![
            Payoff::identity(),
            Payoff::power(2.5).unwrap(),
            Payoff::smoothed_call(0.8, 0.2).unwrap(),
            Payoff::tabulated(vec![(0.0, 0.0, 0.0), (1.0, 0.5, 1.0), (2.0, 2.0, 2.0)]).unwrap(),
        ];
        let h = 1e-6_f64;
        for g in &payoffs {
            for &x in &[0.11, 0.43, 0.77, 1.21, 1.69] {
                let fd = (g.eval(x + h) - g.eval(x - h)) / (2.0 * h);
                let d = g.deriv(x);
                assert!(
                    (fd - d).abs() <= 1e-6 * (1.0 + d.abs()),
                    "fd {fd} vs deriv {d} at {x}"
                );
            }
        }
    }

    #[test]
    fn eval_is_nondecreasing() {
        let payoffs = vec![
            Payoff::identity(),
            Payoff::power(3.0).unwrap(),
            Payoff::smoothed_call(0.5, 0.25).unwrap(),
            Payoff::tabulated(vec![(0.0, 0.0, 0.5), (1.0, 1.0, 2.0), (3.0, 6.0, 2.5)]).unwrap(),
        ];
        for g in &payoffs {
            let mut prev = g.eval(-1.0);
            let mut x = -1.0;
            while x < 4.0 {
                x += 0.01;
                let v = g.eval(x);
                assert!(v >= prev - 1e-12, "payoff decreased at {x}");
                prev = v;
            }
        }
    }

    #[test]
    fn tabulated_validation_rejects_bad_data() {
        assert!(Payoff::tabulated(vec![(0.0_f64, 1.0, 0.0), (1.0, 0.5, 0.0)]).is_err());
        assert!(Payoff::tabulated(vec![(0.0_f64, 0.0, -1.0), (1.0, 1.0, 0.0)]).is_err());
        assert!(Payoff::tabulated(vec![(0.0_f64, 0.0, 9.0), (1.0, 1.0, 0.0)]).is_err());
    }
}
