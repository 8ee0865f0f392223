//! Bracketed scalar root finding: bisection to shrink the bracket, then safeguarded secant.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Relative tolerance on the root, scaled by `max(1, |x|)`.
    pub rel_tol: f64,
    /// Bisection steps before switching to secant updates.
    pub bisection_steps: usize,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            rel_tol: 1e-10,
            bisection_steps: 20,
            max_iter: 200,
        }
    }
}

/// Finds a root of `f` in `[lo, hi]`, which must contain a sign change.
///
/// Every secant step is kept inside the current bracket; a step that would leave it,
/// or that fails to shrink the bracket fast enough, is replaced by bisection.
pub fn bisect_secant<F>(mut f: F, lo: f64, hi: f64, opts: RootOptions) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::BracketInvalid { lo, hi, f_lo: fa, f_hi: fb });
    }
    let tol = |x: f64| opts.rel_tol * x.abs().max(1.0);

    for iter in 0..opts.max_iter {
        let width = b - a;
        let candidate = if iter < opts.bisection_steps {
            None
        } else {
            let x = b - fb * (b - a) / (fb - fa);
            // Stay strictly inside and away from the ends.
            let margin = 1e-3 * width;
            (x > a + margin && x < b - margin).then_some(x)
        };
        let x = candidate.unwrap_or(0.5 * (a + b));
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        if b - a <= tol(0.5 * (a + b)) {
            // Interpolate within the final bracket.
            let x = b - fb * (b - a) / (fb - fa);
            return Ok(if x.is_finite() && x >= a && x <= b { x } else { 0.5 * (a + b) });
        }
        if candidate.is_some() && b - a > 0.5 * width {
            // Secant stagnating on one side: force a bisection next.
            let m = 0.5 * (a + b);
            let fm = f(m)?;
            if fm == 0.0 {
                return Ok(m);
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
        }
    }
    Err(Error::NoConvergence(opts.max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect_secant(|x| Ok(x * x - 2.0), 0.0, 2.0, RootOptions::default()).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn finds_root_of_pole_shaped_function() {
        // Shape of the lattice-sum equation: -1/(x - 1) + slope, root at x = 1 + 1/c.
        let c = 250.0;
        let r = bisect_secant(|x| Ok(-1.0 / (x - 1.0) + c), 1.0 + 1e-12, 2.0, RootOptions::default()).unwrap();
        assert!((r - (1.0 + 1.0 / c)).abs() < 1e-10 * r);
    }

    #[test]
    fn rejects_same_sign_bracket() {
        let err = bisect_secant(|x| Ok(x * x + 1.0), -1.0, 1.0, RootOptions::default()).unwrap_err();
        assert!(err.to_string().contains("bracket invalid"));
    }

    #[test]
    fn propagates_evaluation_errors() {
        let err = bisect_secant(|_| Err(Error::NoConvergence(0)), 0.0, 1.0, RootOptions::default());
        assert!(err.is_err());
    }
}
