//! Adaptive composite Simpson quadrature with mandatory panel boundaries.

/// Default absolute tolerance used by the analytic evaluators.
pub const DEFAULT_TOL: f64 = 1e-10;

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` (`a > b` flips the sign).
///
/// `breaks` lists points where `f` may be discontinuous or have a kink; the
/// ones falling inside `(a, b)` become panel boundaries so that every panel
/// sees a smooth integrand.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -integrate(f, b, a, breaks, tol);
    }
    let mut pts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    pts.push(a);
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup();
    let total = b - a;
    let mut sum = 0.0;
    let mut comp = 0.0;
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // a few initial subpanels keep narrow features from being skipped
        let pieces = 4;
        let step = (hi - lo) / pieces as f64;
        for k in 0..pieces {
            let x0 = lo + step * k as f64;
            let x1 = if k + 1 == pieces { hi } else { x0 + step };
            let panel_tol = tol * (x1 - x0) / total;
            let fa = f(x0);
            let fb = f(x1);
            let m = 0.5 * (x0 + x1);
            let fm = f(m);
            let whole = (x1 - x0) / 6.0 * (fa + 4.0 * fm + fb);
            let v = simpson(&f, x0, x1, fa, fm, fb, whole, panel_tol, MAX_DEPTH);
            // Kahan summation over panels
            let y = v - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
    }
    sum
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || (b - a) < 1e-14 * (1.0 + a.abs()) {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
