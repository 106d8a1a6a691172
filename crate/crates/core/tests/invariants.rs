//! Property tests for the curve and marginal layers.

use motb_core::curve::{Continuity, Direction, Extrapolation, Interpolation, MonotoneCurve};
use motb_core::marginals::Marginal;
use motb_core::payoff::Payoff;
use proptest::prelude::*;

fn knot_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    proptest::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..20).prop_map(|mut pts| {
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-9);
        // sort ordinates independently to make the curve nondecreasing
        let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.iter().zip(ys).map(|(&(x, _), y)| (x, y)).collect()
    })
}

fn atoms_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    proptest::collection::vec((-5.0..5.0f64, 0.05..1.0f64), 1..12).prop_map(|mut pts| {
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-6);
        let total: f64 = pts.iter().map(|p| p.1).sum();
        pts.into_iter().map(|(x, p)| (x, p / total)).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn curve_eval_never_overshoots_bracketing_ordinates(
        knots in knot_strategy(),
        interp_linear in any::<bool>(),
        t in 0.0..1.0f64,
    ) {
        let curve = MonotoneCurve::new(
            knots.clone(),
            Direction::Nondecreasing,
            Continuity::Right,
            if interp_linear { Interpolation::Linear } else { Interpolation::Step },
            Extrapolation::Constant,
            Extrapolation::Constant,
        ).unwrap();
        let (x0, _) = curve.first_knot();
        let (x1, _) = curve.last_knot();
        let x = x0 + (x1 - x0) * t;
        let v = curve.eval(x);
        let lo = knots.iter().filter(|k| k.0 <= x).map(|k| k.1).fold(f64::NEG_INFINITY, f64::max);
        let hi = knots.iter().filter(|k| k.0 >= x).map(|k| k.1).fold(f64::INFINITY, f64::min);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "eval {v} outside [{lo}, {hi}]");
    }

    #[test]
    fn curve_inverse_then_forward_is_idempotent_on_knots(knots in knot_strategy()) {
        let curve = MonotoneCurve::new(
            knots,
            Direction::Nondecreasing,
            Continuity::Right,
            Interpolation::Linear,
            Extrapolation::Constant,
            Extrapolation::Constant,
        ).unwrap();
        for &(_, y) in curve.knots() {
            let x_sup = curve.preimage_sup(y).unwrap();
            let x_inf = curve.preimage_inf(y).unwrap();
            prop_assert!(x_inf <= x_sup + 1e-12);
            // forward evaluation recovers the ordinate up to flat conventions
            prop_assert!((curve.eval(x_inf) - y).abs() < 1e-9 || curve.eval(x_inf) >= y);
            prop_assert!((curve.eval(x_sup) - y).abs() < 1e-9 || curve.eval(x_sup) <= y);
        }
    }

    #[test]
    fn marginal_call_curve_is_arbitrage_free(atoms in atoms_strategy(), k in -6.0..6.0f64) {
        let mu = Marginal::from_atoms(atoms).unwrap();
        let h = 1e-3;
        let (ca, cb, cc) = (
            mu.call_price(k - h).unwrap(),
            mu.call_price(k).unwrap(),
            mu.call_price(k + h).unwrap(),
        );
        prop_assert!(cb >= (mu.mean() - k).max(0.0) - 1e-12);
        prop_assert!(ca >= cb - h && cb >= cc - 1e-12);
        prop_assert!(ca - 2.0 * cb + cc >= -1e-10);
        let s = mu.call_slope(k).unwrap();
        prop_assert!((-1.0..=0.0).contains(&s));
    }

    #[test]
    fn hl_survival_dominates_and_integrates_above_mean(atoms in atoms_strategy()) {
        let mu = Marginal::from_atoms(atoms).unwrap();
        let lo = mu.lower_endpoint();
        let hi = mu.upper_endpoint().unwrap();
        let mut y = lo - 0.5;
        let mut prev = 1.0;
        while y <= hi + 0.5 {
            let hl = mu.hl_survival(y);
            prop_assert!((0.0..=1.0).contains(&hl));
            prop_assert!(hl <= prev + 1e-12);
            prop_assert!(hl >= mu.survival(y) - 1e-12);
            prev = hl;
            y += 0.05;
        }
        let em = mu.hl_expectation(&Payoff::identity()).unwrap().value;
        prop_assert!(em >= mu.mean() - 1e-10);
    }

    #[test]
    fn representation_round_trip_through_exact_call_curve(atoms in atoms_strategy()) {
        let mu = Marginal::from_atoms(atoms).unwrap();
        let (xs, _) = mu.atoms().unwrap();
        let mut strikes = vec![mu.lower_endpoint() - 1.0];
        strikes.extend_from_slice(xs);
        let prices: Vec<f64> = strikes.iter().map(|&k| mu.call_price(k).unwrap()).collect();
        let rebuilt = Marginal::from_call_curve(strikes, prices).unwrap();
        let mut k = mu.lower_endpoint() - 1.5;
        while k < mu.upper_endpoint().unwrap() + 1.0 {
            prop_assert!((mu.call_price(k).unwrap() - rebuilt.call_price(k).unwrap()).abs() < 1e-9);
            prop_assert!((mu.hl_survival(k) - rebuilt.hl_survival(k)).abs() < 1e-9);
            k += 0.21;
        }
    }
}
