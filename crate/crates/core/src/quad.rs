//! Adaptive Simpson quadrature with forced breakpoints.
//!
//! Integrands in this crate are piecewise smooth with kinks at known
//! locations (offsets, Voronoi midpoints, segment boundaries). Callers list
//! the kinks; each smooth piece is integrated by recursive Simpson with
//! Richardson acceptance.

const MAX_DEPTH: u32 = 40;

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(f, a, fa, m, fm, flm);
    let right = simpson(f, m, fm, b, fb, frm);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, flm, left, 0.5 * tol, depth + 1)
        + adaptive(f, m, fm, b, fb, frm, right, 0.5 * tol, depth + 1)
}

/// Integrate `f` over the finite interval [a, b] to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let g: &dyn Fn(f64) -> f64 = &f;
    let fa = g(a);
    let fb = g(b);
    let fm = g(0.5 * (a + b));
    let whole = simpson(g, a, fa, b, fb, fm);
    adaptive(g, a, fa, b, fb, fm, whole, tol, 0)
}

/// Integrate over [a, b] splitting first at every interior breakpoint.
pub fn integrate_with_breaks(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> f64 {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    cuts.dedup();
    let mut total = 0.0;
    let mut lo = a;
    let n = cuts.len() + 1;
    let piece_tol = tol / n as f64;
    for &c in &cuts {
        total += integrate(&f, lo, c, piece_tol);
        lo = c;
    }
    total + integrate(&f, lo, b, piece_tol)
}

/// Integrate `f` over [a, +inf) assuming an exponentially decaying tail with
/// rate at least `decay_rate`. Chunks of width 4/decay_rate are added until a
/// chunk contributes less than `tol / 100`.
pub fn integrate_tail(f: impl Fn(f64) -> f64, a: f64, decay_rate: f64, tol: f64) -> f64 {
    assert!(decay_rate > 0.0, "tail integration needs a positive decay rate");
    let width = 4.0 / decay_rate;
    let mut total = 0.0;
    let mut lo = a;
    for _ in 0..64 {
        let piece = integrate(&f, lo, lo + width, tol / 10.0);
        total += piece;
        lo += width;
        if piece.abs() < tol / 100.0 {
            break;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn kinked_integrand_with_breakpoint() {
        // int_0^2 |x-1| dx = 1
        let v = integrate_with_breaks(|x| (x - 1.0f64).abs(), 0.0, 2.0, &[1.0], 1e-12);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_tail() {
        // int_0^inf x e^{-x} dx = 1
        let v = integrate_tail(|x| x * (-x).exp(), 0.0, 1.0, 1e-11);
        assert!((v - 1.0).abs() < 1e-9);
    }
}
