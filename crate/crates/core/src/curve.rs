//! Monotone curves: barycenter functions, their inverses, stopping
//! boundaries and survival curves are all represented as knot sequences with
//! an explicit continuity convention, so that the atomic (step) and smooth
//! (interpolated) cases share one type.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{fl, Real};

/// Monotonicity direction declared at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Nondecreasing,
    Nonincreasing,
}

/// Which one-sided limit the curve takes at a knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Continuity {
    /// Value on `(x_{i-1}, x_i]` is the ordinate at `x_i`.
    Left,
    /// Value on `[x_i, x_{i+1})` is the ordinate at `x_i`.
    Right,
}

/// Evaluation rule between knots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    /// Piecewise constant according to the continuity convention.
    Step,
    /// Linear between knots (continuity convention only matters at jumps of
    /// the data, which linear interpolation does not produce).
    Linear,
}

/// Behaviour outside the knot range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Extrapolation {
    /// Hold the boundary ordinate.
    Constant,
    /// Continue with `f(x) = x` (used where a transform degenerates to the
    /// identity beyond the support).
    Identity,
}

/// A monotone function materialized on knots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotoneCurve<T> {
    knots: Vec<(T, T)>,
    direction: Direction,
    continuity: Continuity,
    interpolation: Interpolation,
    extrapolate_low: Extrapolation,
    extrapolate_high: Extrapolation,
}

impl<T: Real> MonotoneCurve<T> {
    pub fn new(
        mut knots: Vec<(T, T)>,
        direction: Direction,
        continuity: Continuity,
        interpolation: Interpolation,
        extrapolate_low: Extrapolation,
        extrapolate_high: Extrapolation,
    ) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidCurve("curve needs at least one knot".into()));
        }
        if knots.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidCurve("non-finite knot".into()));
        }
        knots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        knots.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        for w in knots.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidCurve(format!(
                    "duplicate abscissa {} with conflicting ordinates",
                    w[0].0
                )));
            }
            let ok = match direction {
                Direction::Nondecreasing => w[0].1 <= w[1].1,
                Direction::Nonincreasing => w[0].1 >= w[1].1,
            };
            if !ok {
                return Err(Error::InvalidCurve(format!(
                    "ordinates not monotone at abscissa {}",
                    w[1].0
                )));
            }
        }
        Ok(Self { knots, direction, continuity, interpolation, extrapolate_low, extrapolate_high })
    }

    pub fn knots(&self) -> &[(T, T)] {
        &self.knots
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn continuity(&self) -> Continuity {
        self.continuity
    }

    pub fn first_knot(&self) -> (T, T) {
        self.knots[0]
    }

    pub fn last_knot(&self) -> (T, T) {
        *self.knots.last().expect("nonempty")
    }

    fn extrapolate(&self, rule: Extrapolation, boundary: (T, T), x: T) -> T {
        match rule {
            Extrapolation::Constant => boundary.1,
            Extrapolation::Identity => x,
        }
    }

    /// Index of the last knot with abscissa `<= x`, if any.
    fn floor_index(&self, x: T) -> Option<usize> {
        if x < self.knots[0].0 {
            return None;
        }
        let mut lo = 0usize;
        let mut hi = self.knots.len() - 1;
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.knots[mid].0 <= x {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        Some(lo)
    }

    /// Evaluates the curve; between knots the value never leaves the interval
    /// spanned by the bracketing ordinates.
    pub fn eval(&self, x: T) -> T {
        let n = self.knots.len();
        if x < self.knots[0].0 {
            return self.extrapolate(self.extrapolate_low, self.knots[0], x);
        }
        if x > self.knots[n - 1].0 {
            return self.extrapolate(self.extrapolate_high, self.knots[n - 1], x);
        }
        let i = self.floor_index(x).expect("x within knot range");
        let (xi, yi) = self.knots[i];
        if x == xi || i + 1 == n {
            return yi;
        }
        let (xj, yj) = self.knots[i + 1];
        match self.interpolation {
            Interpolation::Step => match self.continuity {
                Continuity::Right => yi,
                Continuity::Left => yj,
            },
            Interpolation::Linear => yi + (yj - yi) * (x - xi) / (xj - xi),
        }
    }

    /// `sup { x : f(x) <= y }` for nondecreasing curves,
    /// `sup { x : f(x) >= y }` for nonincreasing ones.
    ///
    /// Returns `None` when the set is empty, and the identity-extension value
    /// when the set is unbounded into an identity tail.
    pub fn preimage_sup(&self, y: T) -> Option<T> {
        let below = |v: T| match self.direction {
            Direction::Nondecreasing => v <= y,
            Direction::Nonincreasing => v >= y,
        };
        let n = self.knots.len();
        let (x_last, y_last) = self.knots[n - 1];
        if below(y_last) {
            return Some(match self.extrapolate_high {
                // f == y_last forever: the preimage is unbounded; report the
                // last abscissa where the data pins the value.
                Extrapolation::Constant => x_last,
                Extrapolation::Identity => {
                    if y >= x_last {
                        y
                    } else {
                        x_last
                    }
                }
            });
        }
        // Largest knot index whose ordinate satisfies the predicate.
        let mut best: Option<usize> = None;
        let (mut lo, mut hi) = (0isize, n as isize - 1);
        while lo <= hi {
            let mid = ((lo + hi) / 2) as usize;
            if below(self.knots[mid].1) {
                best = Some(mid);
                lo = mid as isize + 1;
            } else {
                hi = mid as isize - 1;
            }
        }
        let i = best?;
        let (xi, yi) = self.knots[i];
        let (xj, yj) = self.knots[i + 1];
        match self.interpolation {
            Interpolation::Step => match self.continuity {
                // value y_i holds on [x_i, x_{i+1}), sup of the region is the
                // next abscissa (left limit); report the open-end abscissa.
                Continuity::Right => Some(xj),
                Continuity::Left => Some(xi),
            },
            Interpolation::Linear => {
                if yj == yi {
                    Some(xj)
                } else {
                    Some(xi + (xj - xi) * (y - yi) / (yj - yi))
                }
            }
        }
    }

    /// `inf { x : f(x) >= y }` for nondecreasing curves,
    /// `inf { x : f(x) <= y }` for nonincreasing ones.
    pub fn preimage_inf(&self, y: T) -> Option<T> {
        let above = |v: T| match self.direction {
            Direction::Nondecreasing => v >= y,
            Direction::Nonincreasing => v <= y,
        };
        let n = self.knots.len();
        if above(self.knots[0].1) {
            return Some(match self.extrapolate_low {
                Extrapolation::Constant => self.knots[0].0,
                Extrapolation::Identity => {
                    if y <= self.knots[0].0 {
                        y
                    } else {
                        self.knots[0].0
                    }
                }
            });
        }
        let mut best: Option<usize> = None;
        let (mut lo, mut hi) = (0isize, n as isize - 1);
        while lo <= hi {
            let mid = ((lo + hi) / 2) as usize;
            if above(self.knots[mid].1) {
                best = Some(mid);
                hi = mid as isize - 1;
            } else {
                lo = mid as isize + 1;
            }
        }
        let i = best?;
        if i == 0 {
            return Some(self.knots[0].0);
        }
        let (xi, yi) = self.knots[i - 1];
        let (xj, yj) = self.knots[i];
        match self.interpolation {
            Interpolation::Step => match self.continuity {
                Continuity::Right => Some(xj),
                Continuity::Left => Some(xi),
            },
            Interpolation::Linear => {
                if yj == yi {
                    Some(xi)
                } else {
                    Some(xi + (xj - xi) * (y - yi) / (yj - yi))
                }
            }
        }
    }

    /// Writes the knots as CSV with header `x,value`.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "x,value")?;
        for &(x, y) in &self.knots {
            writeln!(out, "{x},{y}")?;
        }
        Ok(())
    }
}

/// Samples a smooth monotone function adaptively until linear interpolation
/// between samples reproduces it within `tol` at probe midpoints.
pub fn sample_adaptive<T: Real>(
    f: &impl Fn(T) -> T,
    a: T,
    b: T,
    tol: T,
) -> Vec<(T, T)> {
    #[allow(clippy::too_many_arguments)]
    fn refine<T: Real>(
        f: &impl Fn(T) -> T,
        a: T,
        fa: T,
        b: T,
        fb: T,
        tol: T,
        depth: u32,
        out: &mut Vec<(T, T)>,
    ) {
        let m = (a + b) / fl::<T>(2.0);
        let fm = f(m);
        let lerp = (fa + fb) / fl::<T>(2.0);
        if depth >= 24 || (fm - lerp).abs() <= tol {
            out.push((m, fm));
            out.push((b, fb));
        } else {
            refine(f, a, fa, m, fm, tol, depth + 1, out);
            refine(f, m, fm, b, fb, tol, depth + 1, out);
        }
    }
    let fa = f(a);
    let fb = f(b);
    let mut out = vec![(a, fa)];
    if a < b {
        refine(f, a, fa, b, fb, tol, 0, &mut out);
    }
    out
}
