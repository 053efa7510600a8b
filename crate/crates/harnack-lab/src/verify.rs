//! Independent verification utilities: reference quadratures, finite-difference
//! differentiation stencils, and fitting helpers. These deliberately avoid the
//! cached quadrature path used by the constructions they check.

/// Recursive adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        if depth > 50 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth + 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth + 1)
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 0)
}

/// Trapezoid sums at n and 2n points combined by Richardson extrapolation.
pub fn trapezoid_richardson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let trap = |m: usize| {
        let h = (b - a) / m as f64;
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..m {
            s += f(a + i as f64 * h);
        }
        s * h
    };
    let t1 = trap(n);
    let t2 = trap(2 * n);
    (4.0 * t2 - t1) / 3.0
}

/// Fourth-order central first derivative (five-point stencil).
pub fn d1(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

/// Fourth-order central second derivative (Richardson of the 3-point stencil).
pub fn d2(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let fine = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    let coarse = (f(x + 2.0 * h) - 2.0 * f(x) + f(x - 2.0 * h)) / (4.0 * h * h);
    (4.0 * fine - coarse) / 3.0
}

/// Plain centered second difference.
pub fn d2_plain(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

/// Plain centered first difference.
pub fn d1_plain(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// In-place radix-2 complex FFT (decimation in time). `re`/`im` lengths must
/// be a power of two. `inverse` applies the conjugate transform without the
/// 1/N normalization.
fn fft(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    assert!(n.is_power_of_two() && im.len() == n);
    // bit reversal
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        for start in (0..n).step_by(len) {
            let (mut cr, mut ci) = (1.0f64, 0.0f64);
            for k in 0..len / 2 {
                let (ur, ui) = (re[start + k], im[start + k]);
                let (vr0, vi0) = (re[start + k + len / 2], im[start + k + len / 2]);
                let vr = vr0 * cr - vi0 * ci;
                let vi = vr0 * ci + vi0 * cr;
                re[start + k] = ur + vr;
                im[start + k] = ui + vi;
                re[start + k + len / 2] = ur - vr;
                im[start + k + len / 2] = ui - vi;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
        len <<= 1;
    }
}

/// Spectral derivative of order `order` of a smooth `period`-periodic function
/// from its values on a uniform grid (length a power of two). Exact for
/// trigonometric polynomials resolved by the grid.
pub fn fourier_derivative(values: &[f64], order: u32, period: f64) -> Vec<f64> {
    let n = values.len();
    let mut re: Vec<f64> = values.to_vec();
    let mut im = vec![0.0f64; n];
    fft(&mut re, &mut im, false);
    let base = 2.0 * std::f64::consts::PI / period;
    for k in 0..n {
        // signed frequency; the Nyquist mode is zeroed for odd orders
        let freq = if k <= n / 2 { k as isize } else { k as isize - n as isize };
        if order % 2 == 1 && k == n / 2 {
            re[k] = 0.0;
            im[k] = 0.0;
            continue;
        }
        let w = base * freq as f64;
        let (mut ar, mut ai) = (re[k], im[k]);
        for _ in 0..order {
            let (nr, ni) = (-w * ai, w * ar);
            ar = nr;
            ai = ni;
        }
        re[k] = ar;
        im[k] = ai;
    }
    fft(&mut re, &mut im, true);
    re.iter().map(|v| v / n as f64).collect()
}

/// Least-squares line fit returning (slope, intercept, r_squared).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    (slope, intercept, r2)
}

/// Observed convergence orders log2(e_k / e_{k+1}) for a halving sequence.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_enough() {
        let v = adaptive_simpson(&|x: f64| (x * x).exp(), 0.0, 1.0, 1e-12);
        assert!((v - 1.4626517459071816).abs() < 1e-11);
    }

    #[test]
    fn stencils_hit_known_derivatives() {
        let f = |x: f64| (2.0 * x).sin();
        assert!((d1(&f, 0.3, 1e-3) - 2.0 * (0.6f64).cos()).abs() < 1e-10);
        assert!((d2(&f, 0.3, 1e-3) + 4.0 * (0.6f64).sin()).abs() < 1e-8);
    }

    #[test]
    fn fourier_derivative_exact_on_resolved_modes() {
        let n = 256;
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 / n as f64;
                (2.0 * std::f64::consts::PI * 3.0 * x).sin()
            })
            .collect();
        let d2 = fourier_derivative(&vals, 2, 1.0);
        let w = 2.0 * std::f64::consts::PI * 3.0;
        for i in 0..n {
            let x = i as f64 / n as f64;
            assert!((d2[i] + w * w * (w / 3.0 * 3.0 * x).sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let (s, i, r2) = linear_fit(&xs, &ys);
        assert!((s - 2.0).abs() < 1e-12 && (i - 1.0).abs() < 1e-12 && r2 > 0.999999);
    }
}
