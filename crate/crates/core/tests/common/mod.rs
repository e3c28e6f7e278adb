//! Test-only numerical oracles, deliberately independent of the crate's own
//! quadrature and closed forms.
#![allow(dead_code)]

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Integral over `[a, b]` split at the given breakpoints (kinks, jumps).
pub fn piecewise<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|x| *x > a && *x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2).map(|w| simpson(f, w[0], w[1], tol / pts.len() as f64)).sum()
}

/// Integral over `[a, ∞)` on geometrically growing panels, stopped once a
/// panel contributes less than `tol`.
pub fn to_infinity<F: Fn(f64) -> f64>(f: &F, a: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut total = 0.0;
    let mut lo = a;
    let mut width = 1.0;
    for _ in 0..200 {
        let hi = lo + width;
        let piece = piecewise(f, lo, hi, breaks, tol * 1e-2);
        total += piece;
        if piece.abs() < tol * 1e-3 && hi > 50.0 {
            break;
        }
        lo = hi;
        width *= 1.5;
    }
    total
}

/// Sample mean and its standard error (plain summation, relative rounding
/// up to about `n * f64::EPSILON`).
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
