//! Dual cross-check: solve the infinite-horizon stopping problem
//!
//!   min { u - (g - lambda), -u_xx } = 0 on { x <= m },   u_m(m, m) = 0,
//!
//! discretized as a symmetric random walk (no time variable), and minimize
//! `mu(lambda) + u(X0, X0)` over convex piecewise-linear hedges.
//!
//! The diagonal Neumann condition is imposed by max-process mirroring:
//! the ghost node `(m + h, m)` carries the diagonal value `u(m+h, m+h)`, so
//! slices couple only downward in `m` and one top-down sweep solves the
//! whole triangle. Within a slice the projected fixed point
//! `u = max(obstacle, average of neighbours)` with pinned endpoints is
//! exactly the least concave majorant of the node values, which a monotone
//! stack computes in linear time; the sweep therefore returns the scheme's
//! exact fixed point (up to roundoff) instead of iterating relaxation
//! updates to a tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lookback::{self, ConvexHedge};
use crate::marginals::Marginal;
use crate::num::{fl, Real};
use crate::payoff::Payoff;

/// Uniform grid covering the triangle `{x <= m}` within `[x_lo, x_hi]^2`,
/// with the spot on a node and diagonal nodes present for every `m`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppingGrid<T> {
    nodes: Vec<T>,
    h: T,
    origin: usize,
}

impl<T: Real> StoppingGrid<T> {
    /// Builds a grid of about `n` nodes spanning `[x_lo, x_hi]`, shifted so
    /// that `x0` lies exactly on a node.
    pub fn new(x_lo: T, x_hi: T, n: usize, x0: T) -> Result<Self> {
        if n < 8 {
            return Err(Error::InvalidConfig {
                field: "grid".into(),
                reason: "need at least 8 nodes".into(),
            });
        }
        if !(x_lo < x0 && x0 < x_hi) {
            return Err(Error::InvalidConfig {
                field: "grid".into(),
                reason: format!("need x_lo < x0 < x_hi, got {x_lo}, {x0}, {x_hi}"),
            });
        }
        let h = (x_hi - x_lo) / fl::<T>((n - 1) as f64);
        let k = ((x0 - x_lo) / h).ceil();
        let start = x0 - k * h;
        let origin = k.to_usize().ok_or_else(|| Error::InvalidConfig {
            field: "grid".into(),
            reason: "origin index overflow".into(),
        })?;
        let mut nodes = Vec::with_capacity(n + 1);
        let mut count = n;
        while start + h * fl::<T>((count - 1) as f64) < x_hi {
            count += 1;
        }
        for i in 0..count {
            nodes.push(start + h * fl::<T>(i as f64));
        }
        Ok(Self { nodes, h, origin })
    }

    /// Grid sized for a marginal: the lower edge sits strictly below the
    /// support, the upper edge beyond the 1e-6 tail quantile of the law of
    /// the maximum.
    pub fn for_marginal(mu: &Marginal<T>, n: usize) -> Result<Self> {
        let lo = mu.lower_endpoint();
        let hi = mu.hl_quantile(fl(1e-6));
        let range = (hi - lo).max(T::one() / fl::<T>(10.0));
        Self::new(
            lo - fl::<T>(0.1) * range,
            hi + fl::<T>(0.1) * range,
            n,
            mu.mean(),
        )
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn spacing(&self) -> T {
        self.h
    }

    pub fn origin_index(&self) -> usize {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Solved value surface on the triangle.
#[derive(Debug, Clone)]
pub struct DualSolution<T> {
    pub grid: StoppingGrid<T>,
    /// rows[j] holds u(x_0..x_j, m_j).
    pub rows: Vec<Vec<T>>,
    /// u(X0, X0).
    pub value_at_origin: T,
    /// Extracted free boundary (m, psi_hat(m)).
    pub boundary: Vec<(T, T)>,
    /// Max residual of the discrete fixed-point equation over interior nodes.
    pub scheme_residual: T,
}

impl<T: Real> DualSolution<T> {
    /// Value surface as CSV rows `x,m,u`.
    pub fn write_surface_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "x,m,u")?;
        let nodes = self.grid.nodes();
        for (j, row) in self.rows.iter().enumerate() {
            for (i, u) in row.iter().enumerate() {
                writeln!(out, "{},{},{}", nodes[i], nodes[j], u)?;
            }
        }
        Ok(())
    }

    /// Boundary as CSV rows `x,value` (abscissa m, ordinate psi_hat).
    pub fn write_boundary_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "x,value")?;
        for &(m, p) in &self.boundary {
            writeln!(out, "{m},{p}")?;
        }
        Ok(())
    }
}

/// Least concave majorant of `(xs[i], vs[i])` for equally spaced abscissae,
/// written into `out`.
fn concave_majorant_uniform<T: Real>(vs: &[T], out: &mut Vec<T>) {
    let n = vs.len();
    out.clear();
    out.resize(n, T::zero());
    if n == 1 {
        out[0] = vs[0];
        return;
    }
    // Upper hull via a monotone stack; abscissae are the indices.
    let mut hull: Vec<usize> = Vec::with_capacity(16);
    for i in 0..n {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // keep b only if it lies strictly above chord a -> i
            let lhs = (vs[b] - vs[a]) * fl::<T>((i - a) as f64);
            let rhs = (vs[i] - vs[a]) * fl::<T>((b - a) as f64);
            if lhs <= rhs {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let va = vs[a];
        let vb = vs[b];
        let span = fl::<T>((b - a) as f64);
        for (k, o) in out[a..=b].iter_mut().enumerate() {
            let t = fl::<T>(k as f64) / span;
            *o = va + (vb - va) * t;
        }
    }
    // guard against roundoff dipping below the data
    for i in 0..n {
        if out[i] < vs[i] {
            out[i] = vs[i];
        }
    }
}

/// Solves the discrete obstacle problem for a given convex hedge.
pub fn solve_u<T: Real>(
    lambda: &ConvexHedge<T>,
    g: &Payoff<T>,
    grid: &StoppingGrid<T>,
) -> Result<DualSolution<T>> {
    let nodes = grid.nodes();
    let n = nodes.len();
    let lam: Vec<T> = nodes.iter().map(|&x| lambda.eval(x)).collect();
    let gv: Vec<T> = nodes.iter().map(|&m| g.eval(m)).collect();
    if lam.iter().chain(gv.iter()).any(|v| !v.is_finite()) {
        return Err(Error::DomainViolation(
            "obstacle is not finite on the grid".into(),
        ));
    }

    let mut rows: Vec<Vec<T>> = Vec::with_capacity(n);
    rows.resize_with(n, Vec::new);
    let mut scratch: Vec<T> = Vec::with_capacity(n + 1);
    let mut hull_out: Vec<T> = Vec::with_capacity(n + 1);

    // top slice: absorbing at both lateral edges
    scratch.clear();
    scratch.extend((0..n).map(|i| gv[n - 1] - lam[i]));
    concave_majorant_uniform(&scratch, &mut hull_out);
    let mut top_row = hull_out.clone();
    let top_obstacle = gv[n - 1] - lam[n - 1];
    top_row[n - 1] = top_obstacle;
    let mut diag_above = top_row[n - 1];
    rows[n - 1] = top_row;

    // sweep m downward; slice m_j sees the diagonal value of slice m_{j+1}
    // through the mirrored ghost node.
    for j in (0..n - 1).rev() {
        scratch.clear();
        scratch.extend((0..=j).map(|i| gv[j] - lam[i]));
        scratch.push(diag_above);
        concave_majorant_uniform(&scratch, &mut hull_out);
        let mut row = hull_out.clone();
        row.truncate(j + 1);
        diag_above = row[j];
        rows[j] = row;
    }

    // residual of u = max(obstacle, average of neighbours) on interior nodes
    let mut residual = T::zero();
    let half = fl::<T>(0.5);
    for j in 1..n {
        let row = &rows[j];
        for i in 1..j {
            let avg = half * (row[i - 1] + row[i + 1]);
            let target = (gv[j] - lam[i]).max(avg);
            residual = residual.max((row[i] - target).abs());
        }
        // diagonal node with mirrored neighbour
        if j + 1 < n {
            let ghost = rows[j + 1][j + 1];
            let avg = half * (row[j - 1] + ghost);
            let target = (gv[j] - lam[j]).max(avg);
            residual = residual.max((row[j] - target).abs());
        }
    }

    // free boundary: last contact node of the lower contact component
    let contact_tol = fl::<T>(1e-9)
        * (T::one() + gv[n - 1].abs() + lam[n - 1].abs());
    let mut boundary = Vec::with_capacity(n);
    for j in 0..n {
        let row = &rows[j];
        let mut psi = nodes[0];
        for i in 0..=j {
            if (row[i] - (gv[j] - lam[i])).abs() <= contact_tol {
                psi = nodes[i];
            } else {
                break;
            }
        }
        boundary.push((nodes[j], psi));
    }

    let value_at_origin = rows[grid.origin_index()][grid.origin_index()];
    Ok(DualSolution {
        grid: grid.clone(),
        rows,
        value_at_origin,
        boundary,
        scheme_residual: residual,
    })
}

/// mu(lambda) + u^lambda(X0, X0).
pub fn dual_value<T: Real>(
    mu: &Marginal<T>,
    g: &Payoff<T>,
    lambda: &ConvexHedge<T>,
    grid: &StoppingGrid<T>,
) -> Result<T> {
    let stat = lookback::static_price(mu, lambda)?;
    let sol = solve_u(lambda, g, grid)?;
    Ok(stat + sol.value_at_origin)
}

/// One accepted descent step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceStep<T> {
    pub iteration: usize,
    pub value: T,
    pub step: T,
}

/// Outcome of the dual minimization.
#[derive(Debug, Clone)]
pub struct MinimizeOutcome<T> {
    pub hedge: ConvexHedge<T>,
    pub value: T,
    /// value - closed-form bound.
    pub gap: T,
    pub trace: Vec<TraceStep<T>>,
    pub converged: bool,
}

/// Minimizes the dual value over convex piecewise-linear hedges with the
/// given knots, parameterized by nonnegative slope increments (convex by
/// construction). Derivative-free coordinate search with shrinking steps.
pub fn minimize_dual_from<T: Real>(
    mu: &Marginal<T>,
    g: &Payoff<T>,
    knots: &[T],
    grid: &StoppingGrid<T>,
    init: Vec<T>,
) -> Result<MinimizeOutcome<T>> {
    if knots.len() < 2 || knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig {
            field: "knots".into(),
            reason: "need at least two strictly ascending knots".into(),
        });
    }
    if init.len() != knots.len() {
        return Err(Error::InvalidConfig {
            field: "init".into(),
            reason: "initial increments must match the knots".into(),
        });
    }
    let bound = mu.hl_expectation(g)?.value;
    let eval = |deltas: &[T]| -> Result<T> {
        let hedge = ConvexHedge::from_slope_increments(knots.to_vec(), deltas.to_vec())?;
        dual_value(mu, g, &hedge, grid)
    };

    let mut deltas = init;
    let mut best = eval(&deltas)?;
    let scale = deltas
        .iter()
        .fold(T::zero(), |a, &b| a.max(b))
        .max(T::one());
    let step0 = scale / fl::<T>(4.0);
    let mut step = step0;
    let mut trace = vec![TraceStep { iteration: 0, value: best, step }];
    let mut iter = 0usize;
    let mut converged = false;
    let max_iters = 40_000usize;
    'outer: loop {
        let mut improved = false;
        for j in 0..deltas.len() {
            for dir in [T::one(), -T::one()] {
                iter += 1;
                if iter > max_iters {
                    break 'outer;
                }
                let old = deltas[j];
                let trial = (old + dir * step).max(T::zero());
                if trial == old {
                    continue;
                }
                deltas[j] = trial;
                let v = eval(&deltas)?;
                if v < best - fl::<T>(1e-13) {
                    best = v;
                    improved = true;
                    trace.push(TraceStep { iteration: iter, value: best, step });
                } else {
                    deltas[j] = old;
                }
            }
        }
        if !improved {
            step /= fl::<T>(2.0);
            if step < step0 * fl::<T>(1e-4) {
                converged = true;
                break;
            }
        }
    }
    let hedge = ConvexHedge::from_slope_increments(knots.to_vec(), deltas)?;
    Ok(MinimizeOutcome { hedge, value: best, gap: best - bound, trace, converged })
}

/// `minimize_dual_from` warm-started at the secant projection of the optimal
/// hedge onto the knot lattice.
pub fn minimize_dual<T: Real>(
    mu: &Marginal<T>,
    g: &Payoff<T>,
    knots: &[T],
    grid: &StoppingGrid<T>,
) -> Result<MinimizeOutcome<T>> {
    let star = lookback::lambda_star(mu, g)?;
    let init = project_secant_increments(&star, knots);
    minimize_dual_from(mu, g, knots, grid, init)
}

/// Secant slopes of a hedge on a knot lattice, returned as nonnegative
/// increments.
pub fn project_secant_increments<T: Real>(hedge: &ConvexHedge<T>, knots: &[T]) -> Vec<T> {
    let mut incr = vec![T::zero(); knots.len()];
    let mut prev_slope = T::zero();
    for j in 0..knots.len() {
        let slope = if j + 1 < knots.len() {
            (hedge.eval(knots[j + 1]) - hedge.eval(knots[j])) / (knots[j + 1] - knots[j])
        } else {
            hedge.deriv_plus(knots[j])
        };
        incr[j] = (slope - prev_slope).max(T::zero());
        prev_slope += incr[j];
    }
    incr
}
