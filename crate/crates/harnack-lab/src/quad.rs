//! Quadrature primitives: Gauss-Legendre panels, cached cumulative integrals,
//! dense Hermite tables and overflow-safe exponential sums.

use std::sync::{Arc, OnceLock};

pub type Integrand = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const GL_ORDER: usize = 12;
const MAX_PANELS: usize = 1 << 20;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1],
/// computed once by Newton iteration on the Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n(x) and derivative by upward recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn gl12() -> &'static (Vec<f64>, Vec<f64>) {
    static TABLE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    TABLE.get_or_init(|| gauss_legendre(GL_ORDER))
}

/// 12-point Gauss-Legendre quadrature of `f` over [a, b].
pub fn gl_panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gl12();
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

fn composite(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let w = (hi - lo) / panels as f64;
    // Neumaier-compensated summation; panel counts can reach 10^6.
    let mut sum = 0.0;
    let mut comp = 0.0;
    for k in 0..panels {
        let v = gl_panel(f, lo + k as f64 * w, lo + (k + 1) as f64 * w);
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

/// Composite Gauss-Legendre quadrature with panel doubling until the total
/// stabilizes. `osc_scale` is the finest oscillation length of the integrand;
/// at least eight panels per oscillation are used from the start.
pub fn integrate_adaptive(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, osc_scale: f64) -> f64 {
    if hi == lo {
        return 0.0;
    }
    let span = hi - lo;
    let mut panels = ((span / osc_scale * 8.0).ceil() as usize).clamp(16, MAX_PANELS);
    let mut prev = composite(f, lo, hi, panels);
    loop {
        if panels >= MAX_PANELS {
            return prev;
        }
        panels = (panels * 2).min(MAX_PANELS);
        let cur = composite(f, lo, hi, panels);
        if (cur - prev).abs() <= 1e-15 * (1.0 + cur.abs()) {
            return cur;
        }
        prev = cur;
    }
}

/// Prefix-summed composite quadrature over a fixed interval. After
/// construction, any running integral from `lo` is an O(1) lookup plus one
/// partial Gauss-Legendre panel.
pub struct CumulativeIntegral {
    lo: f64,
    hi: f64,
    panel_width: f64,
    prefix: Vec<f64>,
    f: Integrand,
}

impl CumulativeIntegral {
    pub fn build(f: Integrand, lo: f64, hi: f64, osc_scale: f64) -> Self {
        assert!(hi > lo, "empty integration interval");
        let span = hi - lo;
        let mut panels = ((span / osc_scale * 8.0).ceil() as usize).clamp(16, MAX_PANELS);
        let mut prev = composite(&*f, lo, hi, panels);
        while panels < MAX_PANELS {
            let next = (panels * 2).min(MAX_PANELS);
            let cur = composite(&*f, lo, hi, next);
            let converged = (cur - prev).abs() <= 1e-15 * (1.0 + cur.abs());
            panels = next;
            prev = cur;
            if converged {
                break;
            }
        }
        let w = span / panels as f64;
        let mut prefix = Vec::with_capacity(panels + 1);
        prefix.push(0.0);
        let mut sum = 0.0;
        let mut comp = 0.0;
        for k in 0..panels {
            let v = gl_panel(&*f, lo + k as f64 * w, lo + (k + 1) as f64 * w);
            let t = sum + v;
            comp += if sum.abs() >= v.abs() {
                (sum - t) + v
            } else {
                (v - t) + sum
            };
            sum = t;
            prefix.push(sum + comp);
        }
        CumulativeIntegral {
            lo,
            hi,
            panel_width: w,
            prefix,
            f,
        }
    }

    pub fn total(&self) -> f64 {
        *self.prefix.last().unwrap()
    }

    /// Integral of `f` from `lo` to `x`, for `x` in [lo, hi] (clamped just
    /// outside by a panel width to absorb floating-point drift).
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return self.total();
        }
        let panels = self.prefix.len() - 1;
        let k = (((x - self.lo) / self.panel_width) as usize).min(panels - 1);
        let xk = self.lo + k as f64 * self.panel_width;
        self.prefix[k] + gl_panel(&*self.f, xk, x)
    }
}

/// Uniform cubic-Hermite table of a smooth function with known derivative.
/// Used to memoize chained integrals so that nested quadrature stays O(1)
/// per evaluation.
#[derive(Clone)]
pub struct DenseCurve {
    lo: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl DenseCurve {
    pub fn build(
        value: &dyn Fn(f64) -> f64,
        slope: &dyn Fn(f64) -> f64,
        lo: f64,
        hi: f64,
        n: usize,
    ) -> Self {
        let step = (hi - lo) / n as f64;
        let mut values = Vec::with_capacity(n + 1);
        let mut slopes = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let x = lo + i as f64 * step;
            values.push(value(x));
            slopes.push(slope(x));
        }
        DenseCurve {
            lo,
            step,
            values,
            slopes,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len() - 1;
        let s = (x - self.lo) / self.step;
        let k = (s.floor() as isize).clamp(0, n as isize - 1) as usize;
        let t = s - k as f64;
        let (v0, v1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.step, self.slopes[k + 1] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        v0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * (t3 - 2.0 * t2 + t)
            + v1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * (t3 - t2)
    }
}

/// log(exp(a) + exp(b)) without overflow.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// log(exp(a) - exp(b)) for a > b.
pub fn ln_sub_exp(a: f64, b: f64) -> f64 {
    debug_assert!(a >= b);
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// log of sum_{j=0}^{n-1} exp(j * t), evaluated stably for any sign of t.
pub fn ln_geom_sum(n: u64, t: f64) -> f64 {
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    if t.abs() < 1e-14 {
        return nf.ln() + 0.5 * (nf - 1.0) * t;
    }
    if t < 0.0 {
        // sum = (1 - e^{nt}) / (1 - e^{t})
        ((nf * t).exp_m1() / t.exp_m1()).ln()
    } else {
        // sum = e^{(n-1)t} (1 - e^{-nt}) / (1 - e^{-t})
        (nf - 1.0) * t + (((-nf * t).exp_m1()) / ((-t).exp_m1())).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gl_nodes_integrate_polynomials_exactly() {
        // 12-point rule is exact through degree 23.
        let f = |x: f64| x.powi(23) + 3.0 * x.powi(10) - x;
        let exact = 3.0 * 2.0 / 11.0; // odd terms vanish on [-1, 1]
        assert!((gl_panel(&f, -1.0, 1.0) - exact).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_oscillatory_integrand() {
        let f = |x: f64| (40.0 * PI * x).sin().powi(2);
        let v = integrate_adaptive(&f, 0.0, 1.0, 1.0 / 40.0);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cumulative_matches_closed_form() {
        let c = CumulativeIntegral::build(Arc::new(|x: f64| x.cos()), 0.0, 2.0, 1.0);
        for i in 0..100 {
            let x = 0.02 * i as f64;
            assert!((c.eval(x) - x.sin()).abs() < 1e-13);
        }
    }

    #[test]
    fn dense_curve_is_accurate_for_smooth_input() {
        let d = DenseCurve::build(&|x: f64| (3.0 * x).sin(), &|x: f64| 3.0 * (3.0 * x).cos(), 0.0, 1.0, 4096);
        for i in 0..1000 {
            let x = 0.001 * i as f64;
            assert!((d.eval(x) - (3.0 * x).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn geom_sum_matches_direct_summation() {
        for &t in &[-2.5, -0.3, -1e-16, 0.0, 1e-16, 0.4, 3.0] {
            let direct: f64 = (0..17).map(|j| (j as f64 * t).exp()).sum();
            assert!(
                (ln_geom_sum(17, t) - direct.ln()).abs() < 1e-12,
                "t = {t}"
            );
        }
        // Large-exponent regime must not overflow.
        let v = ln_geom_sum(10_000, 0.5);
        assert!((v - (9999.0 * 0.5 + (1f64 - (-5000.0f64).exp()).ln() - (1f64 - (-0.5f64).exp()).ln())).abs() < 1e-9);
    }

    #[test]
    fn ln_add_exp_extremes() {
        assert_eq!(ln_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        assert!((ln_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
