//! Safeguarded Newton iteration for monotone scalar equations.

/// Widest search interval, in log space, for multipliers.
pub(crate) const LOG_SPAN: f64 = 690.0;

const MAX_ITER: usize = 200;
const X_TOL: f64 = 1e-14;

/// Finds a root of `f` inside `[lo, hi]`, where `f(lo)` and `f(hi)` have
/// opposite signs and `rising` tells whether `f` increases across it.
/// `f` returns the value and its derivative. Iteration starts at `start`
/// when it lies strictly inside the bracket. Newton steps that leave the
/// bracket fall back to bisection.
pub(crate) fn newton_bracketed(
    mut f: impl FnMut(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    rising: bool,
    start: f64,
) -> f64 {
    let mut x = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    for _ in 0..MAX_ITER {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == rising {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx.is_finite() && dfx != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= X_TOL * x.abs().max(1.0) || (hi - lo) <= X_TOL * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

/// Finds a sign change of a monotone `f`, expanding from `start` in
/// doubling steps in the downhill direction and staying inside
/// `[-LOG_SPAN, LOG_SPAN]`. `rising` says whether `f` increases.
/// Returns `None` when no sign change exists in the span.
pub(crate) fn bracket(f: &mut impl FnMut(f64) -> f64, start: f64, rising: bool) -> Option<(f64, f64)> {
    let start = start.clamp(-LOG_SPAN, LOG_SPAN);
    let f0 = f(start);
    if f0 == 0.0 {
        return Some((start, start));
    }
    // Move toward the root: down when the function is above zero and rising.
    let dir = if (f0 > 0.0) == rising { -1.0 } else { 1.0 };
    let mut step = 0.25;
    let mut prev = start;
    loop {
        let next = (prev + dir * step).clamp(-LOG_SPAN, LOG_SPAN);
        let fx = f(next);
        if fx == 0.0 || (fx < 0.0) != (f0 < 0.0) {
            return Some(if dir < 0.0 { (next, prev) } else { (prev, next) });
        }
        if next.abs() >= LOG_SPAN {
            return None;
        }
        prev = next;
        step *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cube_root() {
        let r = newton_bracketed(|x| (x * x * x - 2.0, 3.0 * x * x), 0.0, 2.0, true, 1.9);
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
    }

    #[test]
    fn falls_back_on_bad_derivative() {
        let r = newton_bracketed(|x| (x - 0.3, 0.0), 0.0, 1.0, true, 0.5);
        assert!((r - 0.3).abs() < 1e-12);
    }

    #[test]
    fn brackets_far_root() {
        let mut f = |s: f64| 40.0 - s;
        let (a, b) = bracket(&mut f, 0.0, false).unwrap();
        assert!(a <= 40.0 && 40.0 <= b);
        let (a, b) = bracket(&mut f, 100.0, false).unwrap();
        assert!(a <= 40.0 && 40.0 <= b);
        let mut g = |_s: f64| 1.0;
        assert!(bracket(&mut g, 0.0, true).is_none());
    }
}
