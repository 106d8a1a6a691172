//! Smoke coverage for the unbounded-support representation: the lognormal
//! law goes through every stage (transforms, hedge, bound, dual, embedding)
//! at loose tolerances, and reports its truncation diagnostics.

use motb_core::dual::StoppingGrid;
use motb_core::embedding::{self, SimulationConfig};
use motb_core::lookback;
use motb_core::marginals::Marginal;
use motb_core::payoff::Payoff;
use motb_core::{dual, forward};

fn ln_marginal() -> Marginal<f64> {
    Marginal::lognormal(1.0, 0.25, 1.0).unwrap()
}

#[test]
fn lognormal_bound_and_decomposition() {
    let mu = ln_marginal();
    let g = Payoff::identity();
    let r = lookback::lookback_bound(&mu, &g).unwrap();
    assert!(r.bound > mu.mean(), "expected max above the mean");
    assert!(r.bound < 2.0, "bound implausibly large: {}", r.bound);
    assert!(
        r.decomposition_gap < 1e-4,
        "decomposition gap {}",
        r.decomposition_gap
    );
    let trunc = r.truncation.expect("unbounded support must report truncation");
    assert!(trunc.hl_survival_at_cutoff <= 1e-9);

    // two static-price routes agree
    let direct = lookback::static_price(&mu, &r.hedge).unwrap();
    let via_calls = lookback::static_price_via_calls(&mu, &r.hedge).unwrap();
    assert!(
        (direct - via_calls).abs() < 1e-5,
        "static routes differ: {direct} vs {via_calls}"
    );
}

#[test]
fn lognormal_embedding_and_dual() {
    let mu = ln_marginal();
    let g = Payoff::identity();
    let bound = mu.hl_expectation(&g).unwrap().value;

    let cfg = SimulationConfig::for_marginal(&mu, 4_000, 5e-4, 17).unwrap();
    let samples = embedding::simulate(&mu, &cfg).unwrap();
    let (mean, se) = embedding::martingale_check(&samples);
    assert!((mean - 1.0).abs() <= 4.0 * se + 5e-3, "martingale {mean} (se {se})");
    let (primal, pse) = embedding::primal_from_samples(&samples, &g);
    assert!(
        primal <= bound + 3.0 * pse + 0.02,
        "primal {primal} above bound {bound}"
    );

    let lam = lookback::lambda_star(&mu, &g).unwrap();
    let grid = StoppingGrid::for_marginal(&mu, 200).unwrap();
    let dv = dual::dual_value(&mu, &g, &lam, &grid).unwrap();
    assert!((dv - bound).abs() < 0.05, "dual {dv} vs bound {bound}");
}

#[test]
fn lognormal_forward_pair() {
    // same forward, lower vol at the earlier maturity: convex order holds
    let mu1 = Marginal::lognormal(1.0, 0.15, 1.0).unwrap();
    let mu2 = Marginal::lognormal(1.0, 0.25, 1.0).unwrap();
    let g = Payoff::identity();
    let r = forward::forward_bound(&mu1, &mu2, &g).unwrap();
    let price = mu1.expectation(&g).unwrap().value;
    let upper = lookback::lookback_bound(&mu2, &g).unwrap().bound;
    assert!(r.bound >= price - 1e-6, "bound {} below price {price}", r.bound);
    assert!(r.bound <= upper + 1e-6, "bound {} above lookback {upper}", r.bound);
    assert!(r.form_gap < 1e-5, "forms disagree by {}", r.form_gap);
}
