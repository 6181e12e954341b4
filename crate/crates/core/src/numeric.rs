//! Scalar root finding and line search used by the solvers.

/// Hard cap on halvings; 64-bit floats run out of room long before this.
pub(crate) const MAX_BISECTIONS: usize = 200;

/// Finds the sign change of a non-increasing `f` on `[lo, hi]`.
///
/// Assumes `f(lo) >= 0 >= f(hi)`; the bracket is halved until it can no
/// longer be split in floating point (or `f` hits zero exactly), so the
/// result is accurate to the last representable bit.
pub(crate) fn bisect_decreasing<F>(f: F, mut lo: f64, mut hi: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let value = f(mid);
        if value == 0.0 {
            return mid;
        }
        if value > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
///
/// Returns `(argmax, max)`. Endpoints are compared against the interior
/// estimate so monotone functions resolve to the right boundary.
pub(crate) fn golden_max<F>(f: F, a: f64, b: f64, iterations: usize) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    if b <= a {
        return (a, f(a));
    }
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iterations {
        if hi - lo <= f64::EPSILON * (lo.abs() + hi.abs()) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [a, b] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Scans `points + 1` evenly spaced values on `[a, b]` and polishes the best
/// one with golden-section search on its neighbouring cells.
pub(crate) fn scan_max<F>(f: F, a: f64, b: f64, points: usize) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    if b <= a {
        return (a, f(a));
    }
    let step = (b - a) / points as f64;
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..=points {
        let value = f(a + step * k as f64);
        if value > best {
            best = value;
            best_k = k;
        }
    }
    let lo = a + step * best_k.saturating_sub(1) as f64;
    let hi = (a + step * (best_k + 1) as f64).min(b);
    let polished = golden_max(&f, lo, hi, 200);
    if polished.1 >= best {
        polished
    } else {
        (a + step * best_k as f64, best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt_two() {
        let root = bisect_decreasing(|x| 2.0 - x * x, 0.0, 2.0);
        assert!((root - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn golden_finds_interior_max() {
        let (x, fx) = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 200);
        assert!((x - 0.3).abs() < 1e-7);
        assert!(fx.abs() < 1e-14);
    }

    #[test]
    fn golden_prefers_boundary_for_monotone() {
        let (x, _) = golden_max(|x| x, 0.0, 1.0, 200);
        assert_eq!(x, 1.0);
    }

    #[test]
    fn scan_handles_multimodal() {
        // two bumps, the right one higher
        let f =
            |x: f64| (-(x - 0.2).powi(2) / 0.001).exp() + 1.5 * (-(x - 0.8).powi(2) / 0.001).exp();
        let (x, _) = scan_max(f, 0.0, 1.0, 200);
        assert!((x - 0.8).abs() < 1e-6);
    }
}
