//! Bracketed scalar root finding.

/// Result of a bracketed root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOutcome {
    pub root: f64,
    /// `f(root)`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Plain bisection on `[lo, hi]` until the bracket is narrower than `x_tol`.
///
/// Returns `None` when `f(lo)` and `f(hi)` have the same strict sign.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, x_tol: f64, max_iter: usize) -> Option<RootOutcome>
where
    F: FnMut(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(RootOutcome { root: lo, residual: 0.0, iterations: 0, converged: true });
    }
    if f_hi == 0.0 {
        return Some(RootOutcome { root: hi, residual: 0.0, iterations: 0, converged: true });
    }
    if f_lo.signum() == f_hi.signum() {
        return None;
    }
    let mut mid = 0.5 * (lo + hi);
    let mut f_mid = f(mid);
    let mut iterations = 1;
    while iterations < max_iter && (hi - lo) > x_tol && f_mid != 0.0 {
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        f_mid = f(mid);
        iterations += 1;
    }
    Some(RootOutcome {
        root: mid,
        residual: f_mid,
        iterations,
        converged: (hi - lo) <= x_tol || f_mid == 0.0,
    })
}

/// Illinois-style false position with a bisection safeguard.
///
/// Stops when `|f(x)| < f_tol` or when the bracket can no longer be split in
/// floating point. Returns `None` if `[lo, hi]` does not bracket a sign change.
pub fn bracketed_root<F>(mut f: F, lo: f64, hi: f64, f_tol: f64, max_iter: usize) -> Option<RootOutcome>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.abs() < f_tol {
        return Some(RootOutcome { root: a, residual: fa, iterations: 0, converged: true });
    }
    if fb.abs() < f_tol {
        return Some(RootOutcome { root: b, residual: fb, iterations: 0, converged: true });
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    // side that was retained on the previous step: -1 for a, +1 for b
    let mut retained = 0i8;
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for iteration in 1..=max_iter {
        let width = b - a;
        let mut x = b - fb * width / (fb - fa);
        // false position stalls near flat ends; fall back to bisection
        if !(x > a && x < b) || iteration % 4 == 0 {
            x = 0.5 * (a + b);
        }
        if x <= a || x >= b {
            return Some(RootOutcome { root: best.0, residual: best.1, iterations: iteration, converged: best.1.abs() < f_tol });
        }
        let fx = f(x);
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx.abs() < f_tol {
            return Some(RootOutcome { root: x, residual: fx, iterations: iteration, converged: true });
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if retained == -1 {
                fa *= 0.5;
            }
            retained = -1;
        } else {
            a = x;
            fa = fx;
            if retained == 1 {
                fb *= 0.5;
            }
            retained = 1;
        }
    }
    Some(RootOutcome { root: best.0, residual: best.1, iterations: max_iter, converged: best.1.abs() < f_tol })
}
