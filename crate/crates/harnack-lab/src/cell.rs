//! One-dimensional cell problems for the operator L u = a u'' + beta u':
//! closed-form fundamental solutions, invariant densities of the adjoint,
//! effective averages, and periodic correctors.

use crate::error::{Error, Result};
use crate::periodic::{wrap, PeriodicFn};
use crate::quad::{integrate_adaptive, ln_add_exp, ln_geom_sum, CumulativeIntegral, DenseCurve, Integrand};
use std::sync::{Arc, OnceLock};

const BOUND_SAMPLES: usize = 4096;
const MAX_CELL_EXPONENT: f64 = 600.0;

/// Coefficients of L u = a u'' + beta u'. For the transport usage the drift
/// splits as beta = a' - p and p is kept for effective averages.
#[derive(Clone)]
pub struct DriftCoeffs {
    a: PeriodicFn,
    beta: PeriodicFn,
    p: Option<PeriodicFn>,
    nu: f64,
}

fn check_bounds(f: &PeriodicFn, name: &'static str, nu: f64) -> Result<()> {
    let (lo, hi) = f.sampled_range(BOUND_SAMPLES);
    let tol = 1e-12 / nu;
    if lo < nu - tol || hi > 1.0 / nu + tol {
        return Err(Error::BoundViolation {
            name,
            lo,
            hi,
            nu,
            nu_inv: 1.0 / nu,
        });
    }
    Ok(())
}

impl DriftCoeffs {
    /// Nondivergence pair: L u = a u'' + b u'.
    pub fn elliptic(a: PeriodicFn, b: PeriodicFn, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::InvalidParameter(format!("nu = {nu} not in (0, 1]")));
        }
        check_bounds(&a, "a", nu)?;
        Ok(DriftCoeffs {
            a,
            beta: b,
            p: None,
            nu,
        })
    }

    /// Transport pair: L u = -p u' + (a u')' = a u'' + (a' - p) u' along the
    /// travelling variable.
    pub fn transport(a: PeriodicFn, p: PeriodicFn, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::InvalidParameter(format!("nu = {nu} not in (0, 1]")));
        }
        check_bounds(&a, "a", nu)?;
        check_bounds(&p, "p", nu)?;
        let beta = a.derivative().sub(&p);
        Ok(DriftCoeffs {
            a,
            beta,
            p: Some(p),
            nu,
        })
    }

    pub fn a(&self) -> &PeriodicFn {
        &self.a
    }

    pub fn beta(&self) -> &PeriodicFn {
        &self.beta
    }

    pub fn p(&self) -> Option<&PeriodicFn> {
        self.p.as_ref()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

/// Shared quadrature caches for one coefficient pair: the log-density G on one
/// period (dense Hermite table) and the cumulative of e^{-G}.
pub(crate) struct CellCore {
    pub g_curve: Arc<DenseCurve>,
    pub g1: f64,
    pub g_min: f64,
    /// cumulative over [0,1] of exp(-(G - g_min))
    pub q_neg: CumulativeIntegral,
    pub osc: f64,
}

impl CellCore {
    fn build(coeffs: &DriftCoeffs) -> Result<Self> {
        let a = coeffs.a.clone();
        let beta = coeffs.beta.clone();
        let osc = coeffs.a.osc_scale().min(coeffs.beta.osc_scale()).min(1.0);
        let ratio: Integrand = {
            let (a, b) = (a.clone(), beta.clone());
            Arc::new(move |x| b.value_at(x) / a.value_at(x))
        };
        let g_cum = CumulativeIntegral::build(ratio, 0.0, 1.0, osc);
        let g1 = g_cum.total();
        let n_curve = if osc < 0.01 { 65536 } else { 32768 };
        let g_curve = Arc::new(DenseCurve::build(
            &|x| g_cum.eval(x),
            &|x| beta.value_at(x) / a.value_at(x),
            0.0,
            1.0,
            n_curve,
        ));
        let mut g_min = f64::INFINITY;
        let mut g_max = f64::NEG_INFINITY;
        for i in 0..=BOUND_SAMPLES {
            let g = g_curve.eval(i as f64 / BOUND_SAMPLES as f64);
            g_min = g_min.min(g);
            g_max = g_max.max(g);
        }
        if g_max - g_min > MAX_CELL_EXPONENT {
            return Err(Error::Internal(format!(
                "log-density range {:.1} exceeds the safe exponent budget",
                g_max - g_min
            )));
        }
        let q_neg: Integrand = {
            let curve = Arc::clone(&g_curve);
            let m = g_min;
            Arc::new(move |x| (-(curve.eval(x) - m)).exp())
        };
        let q_neg = CumulativeIntegral::build(q_neg, 0.0, 1.0, osc);
        Ok(CellCore {
            g_curve,
            g1,
            g_min,
            q_neg,
            osc,
        })
    }

    /// G(x) for arbitrary x through G(x + 1) = G(x) + G(1).
    pub fn g_at(&self, x: f64) -> f64 {
        let n = x.floor();
        n * self.g1 + self.g_curve.eval(x - n)
    }

    /// ln of W(z) = int_0^z e^{-G}, for z >= 0.
    pub fn ln_w(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let n = z.floor();
        let s = z - n;
        let ln_cell_full = self.q_neg.total().ln() - self.g_min;
        let whole = if n >= 1.0 {
            ln_cell_full + ln_geom_sum(n as u64, -self.g1)
        } else {
            f64::NEG_INFINITY
        };
        let part = if s > 0.0 {
            -n * self.g1 + self.q_neg.eval(s).ln() - self.g_min
        } else {
            f64::NEG_INFINITY
        };
        ln_add_exp(whole, part)
    }

    /// W(z) = int_0^z e^{-G} for arbitrary z (may overflow for extreme G).
    pub fn w_at(&self, z: f64) -> f64 {
        if z >= 0.0 {
            self.ln_w(z).exp()
        } else {
            // int_0^z = -e^{k G1} (W(k) - W(z + k)) with k = ceil(-z).
            let k = (-z).ceil();
            let a = self.ln_w(k);
            let b = self.ln_w(z + k);
            -(k * self.g1 + a).exp() + (k * self.g1 + b).exp()
        }
    }
}

/// Invariant density of the adjoint equation (a v)'' - (beta v)' = 0 together
/// with the first-integral constant and effective averages.
#[derive(Clone)]
pub struct CellData {
    pub v: PeriodicFn,
    pub c_flux: f64,
    pub g1: f64,
    pub a0: f64,
    pub b0: f64,
    pub p0: Option<f64>,
    core: Arc<CellCore>,
}

impl CellData {
    /// G(x) = int_0^x beta/a, the log of the integrating factor.
    pub fn log_density(&self, x: f64) -> f64 {
        self.core.g_at(x)
    }

    /// v-weighted period average (f, v).
    pub fn weighted_average(&self, f: &PeriodicFn) -> f64 {
        let v = self.v.clone();
        let g = f.clone();
        let osc = f.osc_scale().min(self.core.osc);
        integrate_adaptive(&|x| g.value_at(x) * v.value_at(x), 0.0, 1.0, osc)
    }
}

/// A periodic solution of L u = f - f0 with u(0) = 0.
#[derive(Clone)]
pub struct Corrector {
    pub u: PeriodicFn,
    pub f0: f64,
    pub lambda: f64,
}

/// Cell problem for one coefficient pair. Construction builds the quadrature
/// caches; all evaluations afterwards are O(1) per point.
pub struct CellProblem {
    coeffs: DriftCoeffs,
    core: Arc<CellCore>,
    density: OnceLock<CellData>,
}

impl CellProblem {
    pub fn new(coeffs: DriftCoeffs) -> Result<Self> {
        let core = Arc::new(CellCore::build(&coeffs)?);
        Ok(CellProblem {
            coeffs,
            core,
            density: OnceLock::new(),
        })
    }

    pub fn coeffs(&self) -> &DriftCoeffs {
        &self.coeffs
    }

    pub(crate) fn core(&self) -> &Arc<CellCore> {
        &self.core
    }

    /// G(x) = int_0^x beta/a dy.
    pub fn log_density(&self, x: f64) -> f64 {
        self.core.g_at(x)
    }

    pub fn g1(&self) -> f64 {
        self.core.g1
    }

    /// u0(x) = int_0^x e^{-G}, the increasing solution of L u = 0 with
    /// u0(0) = 0, u0'(0) = 1.
    pub fn fundamental_solution(&self, x: f64) -> f64 {
        self.core.w_at(x)
    }

    /// ln u0(x) for x >= 0; the overflow-safe representation used whenever
    /// ratios of exponentially large integrals are formed.
    pub fn fundamental_solution_ln(&self, x: f64) -> f64 {
        self.core.ln_w(x)
    }

    /// Particular solution evaluator for L U = f with U(0) = U'(0) = 0,
    /// valid on [0, span].
    pub fn particular(&self, f: &PeriodicFn, span: f64) -> ParticularSolution {
        ParticularSolution::build(self, f, span)
    }

    /// Invariant density, flux constant and effective averages.
    pub fn invariant_density(&self) -> Result<CellData> {
        if let Some(d) = self.density.get() {
            return Ok(d.clone());
        }
        let d = self.compute_density()?;
        Ok(self.density.get_or_init(|| d).clone())
    }

    fn compute_density(&self) -> Result<CellData> {
        let core = Arc::clone(&self.core);
        let a = self.coeffs.a.clone();
        let beta = self.coeffs.beta.clone();
        let g1 = core.g1;
        // First integral (a v)' - beta v = c with w = a v:
        //   w(x) = e^{G} (w0 + c W(x)),  W(x) = int_0^x e^{-G}.
        // Periodicity w(1) = w(0) fixes c/w0; the degenerate branch G(1) = 0
        // admits c = 0 with free w0.
        let (w0, c_raw) = if g1.abs() <= 1e-12 {
            (1.0 / a.value_at(0.0), 0.0)
        } else {
            let w_full = (core.ln_w(1.0)).exp();
            (1.0, (-g1).exp_m1() / w_full)
        };
        let w_raw = {
            let core = Arc::clone(&core);
            move |x: f64| {
                let g = core.g_curve.eval(x);
                let w = (core.ln_w(x)).exp();
                g.exp() * (w0 + c_raw * w)
            }
        };
        let z = {
            let a = a.clone();
            let w_raw = w_raw.clone();
            integrate_adaptive(&|x| w_raw(x) / a.value_at(x), 0.0, 1.0, core.osc)
        };
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::Internal(format!("density normalizer {z}")));
        }
        let c_flux = c_raw / z;

        // v with two analytic derivatives, from w' = (beta/a) w + c.
        let mk = |k: usize| -> Box<dyn Fn(f64) -> f64 + Send + Sync> {
            let core = Arc::clone(&core);
            let a = a.clone();
            let beta = beta.clone();
            Box::new(move |x: f64| {
                let x = wrap(x, 1.0);
                let av = a.value_at(x);
                let g = core.g_curve.eval(x);
                let wv = g.exp() * (w0 + c_raw * (core.ln_w(x)).exp());
                match k {
                    0 => wv / (av * z),
                    1 => {
                        let wp = beta.value_at(x) / av * wv + c_raw;
                        (wp / av - wv * a.derivative_at(x) / (av * av)) / z
                    }
                    _ => {
                        let b = beta.value_at(x);
                        let bp = beta.derivative_at(x);
                        let ap = a.derivative_at(x);
                        let app = a.deriv_k(2, x);
                        let wp = b / av * wv + c_raw;
                        let ratio_p = (bp * av - b * ap) / (av * av);
                        let wpp = ratio_p * wv + b / av * wp;
                        (wpp / av - 2.0 * wp * ap / (av * av) - wv * app / (av * av)
                            + 2.0 * wv * ap * ap / (av * av * av))
                            / z
                    }
                }
            })
        };
        let v = PeriodicFn::from_parts(1.0, core.osc, vec![mk(0), mk(1), mk(2)]);

        // Positivity is structural (the bracket interpolates between 1 and
        // e^{-G1}); verify numerically anyway.
        let (min_v, _) = v.sampled_range(BOUND_SAMPLES);
        if !(min_v > 0.0) {
            return Err(Error::PositivityFailure { min_v });
        }
        let mass = integrate_adaptive(&|x| v.value_at(x), 0.0, 1.0, core.osc);
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::Internal(format!("density mass {mass}")));
        }

        let avg = |f: &PeriodicFn| -> f64 {
            let f = f.clone();
            let v = v.clone();
            integrate_adaptive(
                &|x| f.value_at(x) * v.value_at(x),
                0.0,
                1.0,
                core.osc.min(f.osc_scale()),
            )
        };
        let a0 = avg(&a);
        let (b0, p0) = match &self.coeffs.p {
            Some(p) => (avg(&a.derivative()), Some(avg(p))),
            None => (avg(&beta), None),
        };
        Ok(CellData {
            v,
            c_flux,
            g1,
            a0,
            b0,
            p0,
            core,
        })
    }

    /// Periodic corrector for L u = f - f0: u = U_{f - f0} + lambda u0 with
    /// u(0) = u(1) = 0.
    pub fn solve_cell(&self, f: &PeriodicFn) -> Result<Corrector> {
        let cell = self.invariant_density()?;
        let f0 = cell.weighted_average(f);
        let rhs = f.add_const(-f0);
        let core = Arc::clone(&self.core);
        let a = self.coeffs.a.clone();
        let beta = self.coeffs.beta.clone();
        let osc = core.osc.min(f.osc_scale());

        // H(y) = int_0^y e^{G} rhs / a, cached on the cell.
        let g_max_shift = {
            let mut m = f64::NEG_INFINITY;
            for i in 0..=BOUND_SAMPLES {
                m = m.max(core.g_curve.eval(i as f64 / BOUND_SAMPLES as f64));
            }
            m
        };
        let h_cum = {
            let core = Arc::clone(&core);
            let a = a.clone();
            let rhs = rhs.clone();
            let integrand: Integrand = Arc::new(move |y| {
                (core.g_curve.eval(y) - g_max_shift).exp() * rhs.value_at(y) / a.value_at(y)
            });
            Arc::new(CumulativeIntegral::build(integrand, 0.0, 1.0, osc))
        };
        // U(x) = int_0^x e^{-G(y)} H(y) dy with the shifts recombined.
        let u_cum = {
            let core = Arc::clone(&core);
            let h = Arc::clone(&h_cum);
            let integrand: Integrand = Arc::new(move |y| {
                (g_max_shift - core.g_curve.eval(y)).exp() * h.eval(y)
            });
            Arc::new(CumulativeIntegral::build(integrand, 0.0, 1.0, osc))
        };
        let w_full = (core.ln_w(1.0)).exp();
        if !(w_full.is_finite() && w_full > 0.0) {
            return Err(Error::Internal(
                "fundamental solution vanishes over one period".into(),
            ));
        }
        let lambda = -u_cum.total() / w_full;

        let mk = |k: usize| -> Box<dyn Fn(f64) -> f64 + Send + Sync> {
            let core = Arc::clone(&core);
            let h = Arc::clone(&h_cum);
            let u = Arc::clone(&u_cum);
            let a = a.clone();
            let beta = beta.clone();
            let rhs = rhs.clone();
            Box::new(move |x: f64| {
                let x = wrap(x, 1.0);
                match k {
                    0 => u.eval(x) + lambda * (core.ln_w(x)).exp(),
                    1 => {
                        let g = core.g_curve.eval(x);
                        (-g).exp() * (g_max_shift.exp() * h.eval(x) + lambda)
                    }
                    _ => {
                        let g = core.g_curve.eval(x);
                        let up = (-g).exp() * (g_max_shift.exp() * h.eval(x) + lambda);
                        (rhs.value_at(x) - beta.value_at(x) * up) / a.value_at(x)
                    }
                }
            })
        };
        let u = PeriodicFn::from_parts(1.0, osc, vec![mk(0), mk(1), mk(2)]);
        Ok(Corrector { u, f0, lambda })
    }
}

/// Evaluates the solution of L U = f with U(0) = U'(0) = 0 on [0, span].
pub struct ParticularSolution {
    u_cum: Arc<CumulativeIntegral>,
    h_cum: Arc<CumulativeIntegral>,
    core: Arc<CellCore>,
    shift: f64,
    span: f64,
}

impl ParticularSolution {
    fn build(problem: &CellProblem, f: &PeriodicFn, span: f64) -> ParticularSolution {
        let core = Arc::clone(&problem.core);
        let a = problem.coeffs.a.clone();
        let osc = core.osc.min(f.osc_scale());
        let mut shift = f64::NEG_INFINITY;
        let steps = (BOUND_SAMPLES as f64 * span.ceil()) as usize;
        for i in 0..=steps {
            shift = shift.max(core.g_at(span * i as f64 / steps as f64));
        }
        let h_cum = {
            let core = Arc::clone(&core);
            let f = f.clone();
            let a = a.clone();
            let integrand: Integrand = Arc::new(move |y| {
                (core.g_at(y) - shift).exp() * f.value_at(y) / a.value_at(y)
            });
            Arc::new(CumulativeIntegral::build(integrand, 0.0, span, osc))
        };
        let u_cum = {
            let core = Arc::clone(&core);
            let h = Arc::clone(&h_cum);
            let integrand: Integrand =
                Arc::new(move |y| (shift - core.g_at(y)).exp() * h.eval(y));
            Arc::new(CumulativeIntegral::build(integrand, 0.0, span, osc))
        };
        ParticularSolution {
            u_cum,
            h_cum,
            core,
            shift,
            span,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        assert!(
            (0.0..=self.span).contains(&x),
            "particular solution evaluated outside [0, {}]",
            self.span
        );
        self.u_cum.eval(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.shift - self.core.g_at(x)).exp() * self.h_cum.eval(x)
    }
}

/// b0 = (b, v) and G(1) for the nondivergence pair (a, b), plus whether the
/// two carry the same sign (zero at tolerance 1e-10 counts as its own sign).
pub fn sign_relation(a: &PeriodicFn, b: &PeriodicFn, nu: f64) -> Result<(f64, f64, bool)> {
    let problem = CellProblem::new(DriftCoeffs::elliptic(a.clone(), b.clone(), nu)?)?;
    let cell = problem.invariant_density()?;
    let b0 = cell.b0;
    let g1 = cell.g1;
    let sgn = |x: f64| {
        if x.abs() <= 1e-10 {
            0i8
        } else if x > 0.0 {
            1
        } else {
            -1
        }
    };
    Ok((b0, g1, sgn(b0) == sgn(g1)))
}

/// p = (1 - a v') / v for v = 1 + eta2; checks the coefficient bounds and the
/// adjoint identity (p v)' + (a v')' = 0.
pub fn p_from_density(a: &PeriodicFn, eta2: &PeriodicFn, nu: f64) -> Result<PeriodicFn> {
    let v = eta2.add_const(1.0);
    let one = PeriodicFn::constant(1.0);
    let p = one.sub(&a.mul(&v.derivative())).div(&v);
    let (lo, hi) = p.sampled_range(BOUND_SAMPLES);
    if lo < nu - 1e-12 || hi > 1.0 / nu + 1e-12 {
        return Err(Error::BoundViolation {
            name: "p",
            lo,
            hi,
            nu,
            nu_inv: 1.0 / nu,
        });
    }
    // (p v)' + (a v')' expanded through the derivative stacks.
    let mut worst = 0.0f64;
    for i in 0..=BOUND_SAMPLES {
        let x = i as f64 / BOUND_SAMPLES as f64;
        let r = p.derivative_at(x) * v.value_at(x)
            + p.value_at(x) * v.derivative_at(x)
            + a.derivative_at(x) * v.derivative_at(x)
            + a.value_at(x) * v.deriv_k(2, x);
        worst = worst.max(r.abs());
    }
    if worst > 1e-6 {
        return Err(Error::Internal(format!(
            "adjoint identity residual {worst} for constructed p"
        )));
    }
    Ok(p)
}

/// Effective transport data of the pair (a, p): p0 = (p, v), b0 = (a', v) and
/// the effective speed c = b0 / p0.
pub struct TransportData {
    pub p0: f64,
    pub b0: f64,
    pub c: f64,
    pub cell: CellData,
}

pub fn effective_transport(a: &PeriodicFn, p: &PeriodicFn, nu: f64) -> Result<TransportData> {
    let problem = CellProblem::new(DriftCoeffs::transport(a.clone(), p.clone(), nu)?)?;
    let cell = problem.invariant_density()?;
    let p0 = cell.p0.expect("transport cell carries p0");
    Ok(TransportData {
        p0,
        b0: cell.b0,
        c: cell.b0 / p0,
        cell,
    })
}
