//! Smooth periodic functions with explicit derivative stacks, the compactly
//! supported bump constructions, and the coefficient pairs (eta1, eta2) used
//! by the oscillating-coefficient families.

use crate::error::{Error, Result};
use crate::quad::{CumulativeIntegral, Integrand};
use std::sync::{Arc, OnceLock};

type DynFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

struct Inner {
    period: f64,
    osc_scale: f64,
    any_period: bool,
    derivs: Vec<DynFn>,
    cum: OnceLock<CumulativeIntegral>,
}

/// A smooth periodic function of one real variable, bundled with as many
/// derivatives as its construction supports (`smoothness_order`).
///
/// Values are immutable after construction; clones share the underlying
/// closures, so instances can be sent across threads freely.
#[derive(Clone)]
pub struct PeriodicFn(Arc<Inner>);

/// Reduce `x` to [0, period).
pub fn wrap(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r == period {
        0.0
    } else {
        r
    }
}

/// Reduce `x - c` to [-period/2, period/2).
fn wrap_centered(x: f64, c: f64, period: f64) -> f64 {
    let r = x - c;
    r - period * (r / period).round()
}

impl PeriodicFn {
    pub fn from_parts(period: f64, osc_scale: f64, derivs: Vec<DynFn>) -> Self {
        assert!(period > 0.0 && derivs.len() >= 2);
        PeriodicFn(Arc::new(Inner {
            period,
            osc_scale,
            any_period: false,
            derivs,
            cum: OnceLock::new(),
        }))
    }

    pub fn constant(c: f64) -> Self {
        let mut derivs: Vec<DynFn> = vec![Box::new(move |_| c)];
        for _ in 0..4 {
            derivs.push(Box::new(|_| 0.0));
        }
        PeriodicFn(Arc::new(Inner {
            period: 1.0,
            osc_scale: 1.0,
            any_period: true,
            derivs,
            cum: OnceLock::new(),
        }))
    }

    /// amplitude * sin(2 pi k x / period + phase)
    pub fn harmonic(amplitude: f64, k: u32, phase: f64, period: f64) -> Self {
        let omega = 2.0 * std::f64::consts::PI * k as f64 / period;
        let mut derivs: Vec<DynFn> = Vec::new();
        for n in 0..5usize {
            let shift = phase + n as f64 * std::f64::consts::FRAC_PI_2;
            let scale = amplitude * omega.powi(n as i32);
            derivs.push(Box::new(move |x: f64| scale * (omega * x + shift).sin()));
        }
        PeriodicFn::from_parts(period, period / (k.max(1) as f64), derivs)
    }

    pub fn period(&self) -> f64 {
        self.0.period
    }

    pub fn osc_scale(&self) -> f64 {
        self.0.osc_scale
    }

    /// Number of available derivatives.
    pub fn smoothness_order(&self) -> usize {
        self.0.derivs.len() - 1
    }

    #[inline]
    pub fn value_at(&self, x: f64) -> f64 {
        (self.0.derivs[0])(x)
    }

    #[inline]
    pub fn derivative_at(&self, x: f64) -> f64 {
        (self.0.derivs[1])(x)
    }

    #[inline]
    pub fn deriv_k(&self, k: usize, x: f64) -> f64 {
        (self.0.derivs[k])(x)
    }

    fn join_period(&self, other: &PeriodicFn) -> (f64, f64, bool) {
        if self.0.any_period && other.0.any_period {
            (1.0, 1.0, true)
        } else if self.0.any_period {
            (other.0.period, other.0.osc_scale, false)
        } else if other.0.any_period {
            (self.0.period, self.0.osc_scale, false)
        } else {
            assert!(
                (self.0.period - other.0.period).abs() <= 1e-12 * self.0.period,
                "periods differ: {} vs {}",
                self.0.period,
                other.0.period
            );
            (
                self.0.period,
                self.0.osc_scale.min(other.0.osc_scale),
                false,
            )
        }
    }

    fn binary(
        &self,
        other: &PeriodicFn,
        combine: impl Fn(&PeriodicFn, &PeriodicFn, usize, f64) -> f64 + Send + Sync + Clone + 'static,
    ) -> PeriodicFn {
        let (period, osc, any) = self.join_period(other);
        let order = self.smoothness_order().min(other.smoothness_order());
        let mut derivs: Vec<DynFn> = Vec::new();
        for k in 0..=order {
            let a = self.clone();
            let b = other.clone();
            let comb = combine.clone();
            derivs.push(Box::new(move |x| comb(&a, &b, k, x)));
        }
        PeriodicFn(Arc::new(Inner {
            period,
            osc_scale: osc,
            any_period: any,
            derivs,
            cum: OnceLock::new(),
        }))
    }

    pub fn add(&self, other: &PeriodicFn) -> PeriodicFn {
        self.binary(other, |a, b, k, x| a.deriv_k(k, x) + b.deriv_k(k, x))
    }

    pub fn sub(&self, other: &PeriodicFn) -> PeriodicFn {
        self.binary(other, |a, b, k, x| a.deriv_k(k, x) - b.deriv_k(k, x))
    }

    pub fn mul(&self, other: &PeriodicFn) -> PeriodicFn {
        self.binary(other, |a, b, k, x| {
            const C: [[f64; 4]; 4] = [
                [1.0, 0.0, 0.0, 0.0],
                [1.0, 1.0, 0.0, 0.0],
                [1.0, 2.0, 1.0, 0.0],
                [1.0, 3.0, 3.0, 1.0],
            ];
            (0..=k).map(|j| C[k][j] * a.deriv_k(j, x) * b.deriv_k(k - j, x)).sum()
        })
    }

    /// Pointwise quotient; the denominator must not vanish.
    pub fn div(&self, other: &PeriodicFn) -> PeriodicFn {
        self.binary(other, |a, b, k, x| {
            // From a = q b: q_k = (a_k - sum_{j<k} C(k,j) q_j b_{k-j}) / b_0.
            let b0 = b.deriv_k(0, x);
            let mut q = [0.0f64; 4];
            for m in 0..=k {
                let mut acc = a.deriv_k(m, x);
                const C: [[f64; 4]; 4] = [
                    [1.0, 0.0, 0.0, 0.0],
                    [1.0, 1.0, 0.0, 0.0],
                    [1.0, 2.0, 1.0, 0.0],
                    [1.0, 3.0, 3.0, 1.0],
                ];
                for j in 0..m {
                    acc -= C[m][j] * q[j] * b.deriv_k(m - j, x);
                }
                q[m] = acc / b0;
            }
            q[k]
        })
    }

    pub fn scale(&self, c: f64) -> PeriodicFn {
        let base = self.clone();
        let mut derivs: Vec<DynFn> = Vec::new();
        for k in 0..=self.smoothness_order() {
            let b = base.clone();
            derivs.push(Box::new(move |x| c * b.deriv_k(k, x)));
        }
        PeriodicFn(Arc::new(Inner {
            period: self.0.period,
            osc_scale: self.0.osc_scale,
            any_period: self.0.any_period,
            derivs,
            cum: OnceLock::new(),
        }))
    }

    pub fn add_const(&self, c: f64) -> PeriodicFn {
        let base = self.clone();
        let mut derivs: Vec<DynFn> = vec![Box::new(move |x| base.value_at(x) + c)];
        for k in 1..=self.smoothness_order() {
            let b = self.clone();
            derivs.push(Box::new(move |x| b.deriv_k(k, x)));
        }
        PeriodicFn(Arc::new(Inner {
            period: self.0.period,
            osc_scale: self.0.osc_scale,
            any_period: self.0.any_period,
            derivs,
            cum: OnceLock::new(),
        }))
    }

    /// The derivative as a function in its own right; drops one order.
    pub fn derivative(&self) -> PeriodicFn {
        assert!(self.smoothness_order() >= 2, "needs two spare derivatives");
        let mut derivs: Vec<DynFn> = Vec::new();
        for k in 1..=self.smoothness_order() {
            let b = self.clone();
            derivs.push(Box::new(move |x| b.deriv_k(k, x)));
        }
        PeriodicFn(Arc::new(Inner {
            period: self.0.period,
            osc_scale: self.0.osc_scale,
            any_period: self.0.any_period,
            derivs,
            cum: OnceLock::new(),
        }))
    }

    /// x -> f(x / eps), period eps * period(f). The companion space-time
    /// evaluator (t, x) -> f(t/eps^2 + x/eps) is exposed by
    /// [`PeriodicFn::space_time_scaled`].
    pub fn rescale_fast(&self, eps: f64) -> Result<PeriodicFn> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rescale_fast needs eps > 0, got {eps}"
            )));
        }
        let mut derivs: Vec<DynFn> = Vec::new();
        for k in 0..=self.smoothness_order() {
            let b = self.clone();
            let scale = eps.powi(-(k as i32));
            derivs.push(Box::new(move |x| scale * b.deriv_k(k, x / eps)));
        }
        Ok(PeriodicFn(Arc::new(Inner {
            period: self.0.period * eps,
            osc_scale: self.0.osc_scale * eps,
            any_period: self.0.any_period,
            derivs,
            cum: OnceLock::new(),
        })))
    }

    /// Two-argument evaluator (t, x) -> f(t/eps^2 + x/eps).
    pub fn space_time_scaled(&self, eps: f64) -> Result<SpaceTimeFn> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "space_time_scaled needs eps > 0, got {eps}"
            )));
        }
        Ok(SpaceTimeFn {
            base: self.clone(),
            eps,
        })
    }

    fn cum(&self) -> &CumulativeIntegral {
        self.0.cum.get_or_init(|| {
            let f = self.clone();
            let integrand: Integrand = Arc::new(move |x| f.value_at(x));
            CumulativeIntegral::build(integrand, 0.0, self.0.period, self.0.osc_scale)
        })
    }

    /// Integral over one period by composite Gauss quadrature with panel
    /// count adapted to the oscillation scale.
    pub fn period_integral(&self) -> f64 {
        self.cum().total()
    }

    /// Running integral from 0 to x; whole periods cost O(1) through the
    /// decomposition int_0^x = floor(x/T) * int_0^T + remainder.
    pub fn antiderivative(&self, x: f64) -> f64 {
        let period = self.0.period;
        let n = (x / period).floor();
        let frac = x - n * period;
        n * self.period_integral() + self.cum().eval(frac)
    }

    /// Max of |f(x + T) - f(x)| / (1 + |f(x)|) over `n` samples.
    pub fn periodicity_defect(&self, n: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..n {
            let x = -1.3 + 3.7 * (i as f64 / n as f64);
            let a = self.value_at(x);
            let b = self.value_at(x + self.0.period);
            worst = worst.max((b - a).abs() / (1.0 + a.abs()));
        }
        worst
    }

    /// Extremes of the value over `n` uniform samples on one period.
    pub fn sampled_range(&self, n: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=n {
            let v = self.value_at(self.0.period * i as f64 / n as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Coefficient of a two-scale problem: (t, x) -> f(t/eps^2 + x/eps).
#[derive(Clone)]
pub struct SpaceTimeFn {
    base: PeriodicFn,
    eps: f64,
}

impl SpaceTimeFn {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn base(&self) -> &PeriodicFn {
        &self.base
    }

    /// The fast phase t/eps^2 + x/eps.
    pub fn phase(&self, t: f64, x: f64) -> f64 {
        (t / self.eps + x) / self.eps
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.base.value_at(self.phase(t, x))
    }
}

// ---------------------------------------------------------------------------
// Bump profiles.
// ---------------------------------------------------------------------------

/// Normalized mollifier profile n(s) = exp(1 - 1/(1 - s^2)) on |s| < 1 and
/// its first three derivatives. Returns zeros outside the support.
fn mollifier(s: f64, k: usize) -> f64 {
    let u = 1.0 - s * s;
    if u <= 1e-6 {
        return 0.0;
    }
    let n = (1.0 - 1.0 / u).exp();
    match k {
        0 => n,
        1 => {
            let g = -2.0 * s / (u * u);
            n * g
        }
        2 => {
            let g = -2.0 * s / (u * u);
            let gp = -2.0 / (u * u) - 8.0 * s * s / (u * u * u);
            n * (gp + g * g)
        }
        3 => {
            let g = -2.0 * s / (u * u);
            let gp = -2.0 / (u * u) - 8.0 * s * s / (u * u * u);
            let gpp = -24.0 * s / (u * u * u) - 48.0 * s * s * s / (u * u * u * u);
            n * (gpp + 3.0 * g * gp + g * g * g)
        }
        _ => unreachable!(),
    }
}

/// C-infinity step T: [0,1] -> [0,1] built from exp(-1/tau), with
/// derivatives up to third order. T(0) = 0, T(1) = 1, flat at both ends.
fn smooth_step(tau: f64, k: usize) -> f64 {
    if tau <= 1e-6 {
        return 0.0;
    }
    if tau >= 1.0 - 1e-6 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    #[inline]
    fn a_derivs(t: f64) -> [f64; 4] {
        let a = (-1.0 / t).exp();
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t2 * t2;
        let t5 = t4 * t;
        let t6 = t3 * t3;
        [
            a,
            a / t2,
            a * (1.0 / t4 - 2.0 / t3),
            a * (1.0 / t6 - 6.0 / t5 + 6.0 / t4),
        ]
    }
    let a = a_derivs(tau);
    let br = a_derivs(1.0 - tau);
    // B(tau) = A(1 - tau)
    let b = [br[0], -br[1], br[2], -br[3]];
    let s = [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]];
    // From A = T S: successively solve for T^(k).
    let t0 = a[0] / s[0];
    if k == 0 {
        return t0;
    }
    let t1 = (a[1] - t0 * s[1]) / s[0];
    if k == 1 {
        return t1;
    }
    let t2 = (a[2] - 2.0 * t1 * s[1] - t0 * s[2]) / s[0];
    if k == 2 {
        return t2;
    }
    (a[3] - 3.0 * t2 * s[1] - 3.0 * t1 * s[2] - t0 * s[3]) / s[0]
}

/// Specification of a periodized mollifier bump.
#[derive(Clone, Copy, Debug)]
pub struct BumpSpec {
    pub center: f64,
    pub width: f64,
    pub height: f64,
    pub period: f64,
}

impl BumpSpec {
    pub fn new(center: f64, width: f64, height: f64) -> Self {
        BumpSpec {
            center,
            width,
            height,
            period: 1.0,
        }
    }
}

/// C-infinity bump with profile exp(-1/(1-s^2)), periodized. Value at the
/// center equals `height`; identically zero outside (center-width, center+width)
/// modulo the period.
pub fn make_bump(spec: BumpSpec) -> Result<PeriodicFn> {
    let BumpSpec {
        center,
        width,
        height,
        period,
    } = spec;
    if !(width > 0.0 && width < period / 2.0) {
        return Err(Error::BumpWidth { width, period });
    }
    let mut derivs: Vec<DynFn> = Vec::new();
    for k in 0..=3usize {
        let scale = height / width.powi(k as i32);
        derivs.push(Box::new(move |x| {
            let s = wrap_centered(x, center, period) / width;
            scale * mollifier(s, k)
        }));
    }
    Ok(PeriodicFn::from_parts(period, width, derivs))
}

/// C-infinity bump that is identically `height` on |x-center| <= inner and
/// vanishes for |x-center| >= outer, with smooth-step transitions.
pub fn make_flat_top(center: f64, inner: f64, outer: f64, height: f64) -> Result<PeriodicFn> {
    make_flat_top_periodized(center, inner, outer, height, 1.0)
}

fn flat_top_eval(d_signed: f64, inner: f64, outer: f64, height: f64, k: usize) -> f64 {
    let d = d_signed.abs();
    if d <= inner {
        return if k == 0 { height } else { 0.0 };
    }
    if d >= outer {
        return 0.0;
    }
    let delta = outer - inner;
    let tau = (outer - d) / delta;
    let chain = -d_signed.signum() / delta;
    height * smooth_step(tau, k) * chain.powi(k as i32)
}

fn make_flat_top_periodized(
    center: f64,
    inner: f64,
    outer: f64,
    height: f64,
    period: f64,
) -> Result<PeriodicFn> {
    if !(0.0 <= inner && inner < outer && outer < period / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "flat-top bump needs 0 <= inner < outer < period/2, got ({inner}, {outer})"
        )));
    }
    let mut derivs: Vec<DynFn> = Vec::new();
    for k in 0..=3usize {
        derivs.push(Box::new(move |x| {
            let d = wrap_centered(x, center, period);
            flat_top_eval(d, inner, outer, height, k)
        }));
    }
    Ok(PeriodicFn::from_parts(period, outer - inner, derivs))
}

/// Plateau profile with independent rising and falling flanks: zero before
/// `rise.0`, climbing to `height` across [rise.0, rise.1], flat until
/// `fall.0`, and back to zero across [fall.0, fall.1]. Long flanks keep the
/// Fourier tail small, which matters for spectral residual checks.
pub fn make_plateau(rise: (f64, f64), fall: (f64, f64), height: f64) -> Result<PeriodicFn> {
    let (r0, r1) = rise;
    let (f0, f1) = fall;
    if !(0.0 <= r0 && r0 < r1 && r1 <= f0 && f0 < f1 && f1 <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "plateau needs 0 <= {r0} < {r1} <= {f0} < {f1} <= 1"
        )));
    }
    let dr = r1 - r0;
    let df = f1 - f0;
    let mut derivs: Vec<DynFn> = Vec::new();
    for k in 0..=3usize {
        derivs.push(Box::new(move |x| {
            let x = wrap(x, 1.0);
            let up = smooth_step((x - r0) / dr, k) / dr.powi(k as i32);
            let down = smooth_step((x - f0) / df, k) / df.powi(k as i32);
            height * (up - down)
        }));
    }
    Ok(PeriodicFn::from_parts(1.0, dr.min(df), derivs))
}

/// Comb of identical mollifier teeth at x = m/m_total for m in [m_lo, m_hi],
/// evaluated in O(1) by locating the nearest tooth.
fn make_comb(
    m_total: u32,
    m_lo: u32,
    m_hi: u32,
    half_width: f64,
    height: f64,
) -> Result<PeriodicFn> {
    let mf = m_total as f64;
    if !(half_width > 0.0 && half_width < 0.5 / mf) {
        return Err(Error::InvalidParameter(format!(
            "comb tooth half-width {half_width} must lie in (0, 1/(2 * {m_total}))"
        )));
    }
    let mut derivs: Vec<DynFn> = Vec::new();
    for k in 0..=3usize {
        let scale = height / half_width.powi(k as i32);
        derivs.push(Box::new(move |x| {
            let u = wrap(x, 1.0) * mf;
            let m = u.round();
            let mi = if m as u32 == m_total { 0 } else { m as u32 };
            if mi < m_lo || mi > m_hi {
                return 0.0;
            }
            let s = (u - m) / (mf * half_width);
            scale * mollifier(s, k)
        }));
    }
    Ok(PeriodicFn::from_parts(1.0, half_width, derivs))
}

// ---------------------------------------------------------------------------
// Eta pairs.
// ---------------------------------------------------------------------------

/// Which construction family the pair feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EtaVariant {
    /// Mixed elliptic family a1 = 1 + eta1, a2 = 1 - eta1 + eta2.
    Elliptic,
    /// Transport family a = 1 + eta1, v = 1 + eta2 with mean-zero eta2.
    Parabolic,
}

/// A pair of smooth periodic perturbations with 0 <= eta1 <= delta0,
/// |eta2| <= delta0, and supp(eta1) contained in the set where eta2' > 0.
#[derive(Clone)]
pub struct EtaPair {
    pub eta1: PeriodicFn,
    pub eta2: PeriodicFn,
    pub delta0: f64,
    pub variant: EtaVariant,
}

const ETA_SAMPLES: usize = 10_000;

impl EtaPair {
    /// Default single-bump pair: eta2 one bump, eta1 a narrower bump centered
    /// where eta2' is largest. For the parabolic variant eta2 is a pair of
    /// opposite-sign bumps with exactly cancelling areas.
    pub fn new(delta0: f64, variant: EtaVariant) -> Result<Self> {
        if !(delta0 > 0.0 && delta0 <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "delta0 must lie in (0, 0.5], got {delta0}"
            )));
        }
        match variant {
            EtaVariant::Elliptic => {
                // Long rising flank so the rider bump can be wide; wide smooth
                // features keep the spectral residual oracle well below 1e-6.
                let eta2 = make_plateau((0.08, 0.50), (0.62, 0.92), delta0)?;
                let eta1 = rider_bump(&eta2, 0.10, 0.49, delta0)?;
                EtaPair {
                    eta1,
                    eta2,
                    delta0,
                    variant,
                }
                .validated()
            }
            EtaVariant::Parabolic => {
                // Mean-centred plateau; the amplitude is kept well below
                // delta0 so that p = (1 - a v')/v stays inside [1/2, 2].
                let amp = 0.28 * delta0;
                let base = make_plateau((0.10, 0.55), (0.65, 0.95), amp)?;
                let eta2 = base.add_const(-base.period_integral());
                let eta1 = rider_bump(&eta2, 0.12, 0.54, delta0)?;
                EtaPair {
                    eta1,
                    eta2,
                    delta0,
                    variant,
                }
                .validated()
            }
        }
    }

    /// Many-teeth elliptic pair with a large per-period drift integral
    /// int eta1 eta2' / (2 + eta2)^2. Used by the vanishing-period limit and
    /// Harnack-ratio experiments, which need the boundary layer to die within
    /// a tenth of the domain.
    pub fn elliptic_strong(delta0: f64, teeth: u32) -> Result<Self> {
        if !(delta0 > 0.0 && delta0 <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "delta0 must lie in (0, 0.5], got {delta0}"
            )));
        }
        if !(8..=128).contains(&teeth) {
            return Err(Error::InvalidParameter(format!(
                "teeth count {teeth} out of range [8, 128]"
            )));
        }
        let envelope = make_flat_top(0.5, 0.40, 0.47, 1.0)?;
        let carrier = PeriodicFn::harmonic(0.999 * delta0, teeth, 0.0, 1.0);
        let eta2 = envelope.mul(&carrier);
        // Teeth on the rising quarter-periods of the carrier, strictly inside
        // the flat part of the envelope.
        let m_lo = (0.10 * teeth as f64).ceil() as u32;
        let m_hi = (0.90 * teeth as f64).floor() as u32;
        let eta1 = make_comb(teeth, m_lo, m_hi, 0.22 / teeth as f64, 0.999 * delta0)?;
        EtaPair {
            eta1,
            eta2,
            delta0,
            variant: EtaVariant::Elliptic,
        }
        .validated()
    }

    /// Long-ramp parabolic pair maximizing the effective transport speed
    /// while keeping p = (1 - a v')/v within [nu, 1/nu].
    pub fn parabolic_strong(delta0: f64, slope: f64) -> Result<Self> {
        if !(delta0 > 0.0 && delta0 <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "delta0 must lie in (0, 0.5], got {delta0}"
            )));
        }
        let rise = make_flat_top(0.41, 0.29, 0.35, slope)?;
        let fall_area = 0.055 + 0.095;
        let rise_area = 0.29 + 0.35;
        let fall = make_flat_top(0.875, 0.055, 0.095, -slope * rise_area / fall_area)?;
        let eta2_slope = rise.add(&fall);
        // eta2 is the mean-centred antiderivative of the closed-form slope.
        let slope_fn = eta2_slope.clone();
        let cum = Arc::new(CumulativeIntegral::build(
            {
                let f = slope_fn.clone();
                Arc::new(move |x| f.value_at(x)) as Integrand
            },
            0.0,
            1.0,
            0.02,
        ));
        let mean = {
            let c = Arc::clone(&cum);
            let f: Integrand = Arc::new(move |x| c.eval(x));
            crate::quad::integrate_adaptive(&*f, 0.0, 1.0, 0.02)
        };
        let mut derivs: Vec<DynFn> = Vec::new();
        {
            let c = Arc::clone(&cum);
            derivs.push(Box::new(move |x| c.eval(wrap(x, 1.0)) - mean));
        }
        for k in 0..=2usize {
            let s = slope_fn.clone();
            derivs.push(Box::new(move |x| s.deriv_k(k, wrap(x, 1.0))));
        }
        let eta2 = PeriodicFn::from_parts(1.0, 0.02, derivs);
        let eta1 = make_flat_top(0.41, 0.26, 0.32, 0.999 * delta0)?;
        EtaPair {
            eta1,
            eta2,
            delta0,
            variant: EtaVariant::Parabolic,
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        let n = ETA_SAMPLES;
        let tol = 1e-12 * (1.0 + self.delta0);
        let mut min_slope = f64::INFINITY;
        let mut support_seen = false;
        for i in 0..=n {
            let x = i as f64 / n as f64;
            let e1 = self.eta1.value_at(x);
            let e2 = self.eta2.value_at(x);
            if e1 < -tol || e1 > self.delta0 + tol || e2.abs() > self.delta0 + tol {
                return Err(Error::BoundViolation {
                    name: "eta",
                    lo: e1.min(e2),
                    hi: e1.max(e2),
                    nu: 0.0,
                    nu_inv: self.delta0,
                });
            }
            if e1 > 1e-9 * self.delta0 {
                support_seen = true;
                min_slope = min_slope.min(self.eta2.derivative_at(x));
            }
        }
        if !support_seen {
            return Err(Error::Internal("eta1 is identically zero".into()));
        }
        if !(min_slope > 0.0) {
            return Err(Error::SupportCondition { min_slope });
        }
        match self.variant {
            EtaVariant::Parabolic => {
                let mass = self.eta2.period_integral();
                if mass.abs() > 1e-10 {
                    return Err(Error::Internal(format!(
                        "eta2 mean {mass} exceeds 1e-10 for the parabolic variant"
                    )));
                }
            }
            EtaVariant::Elliptic => {
                // Both functions vanish on a neighborhood of the integers so
                // that mirror-even sampling stays smooth across x = 0.
                for i in 0..=25 {
                    let d = 0.001 * i as f64;
                    for x in [d, 1.0 - d] {
                        if self.eta1.value_at(x).abs() > tol || self.eta2.value_at(x).abs() > tol
                        {
                            return Err(Error::MirrorCheck {
                                name: "eta",
                                slope: self.eta2.value_at(x).abs(),
                                margin: 0.025,
                            });
                        }
                    }
                }
            }
        }
        Ok(self)
    }

    /// Minimum of eta2' over the sampled support of eta1 (diagnostic).
    pub fn support_margin(&self) -> f64 {
        let mut min_slope = f64::INFINITY;
        for i in 0..=ETA_SAMPLES {
            let x = i as f64 / ETA_SAMPLES as f64;
            if self.eta1.value_at(x) > 1e-9 * self.delta0 {
                min_slope = min_slope.min(self.eta2.derivative_at(x));
            }
        }
        min_slope
    }

    /// Mixed-equation coefficients a1 = 1 + eta1, a2 = 1 - eta1 + eta2.
    pub fn mixed_coefficients(&self) -> (PeriodicFn, PeriodicFn) {
        let a1 = self.eta1.add_const(1.0);
        let a2 = PeriodicFn::constant(1.0)
            .sub(&self.eta1)
            .add(&self.eta2);
        (a1, a2)
    }

    /// Nondivergence pair (a, b) = (a1 + a2, a1') of the expanded mixed
    /// equation: a = 2 + eta2, b = eta1'.
    pub fn drift_coefficients(&self) -> (PeriodicFn, PeriodicFn) {
        (self.eta2.add_const(2.0), self.eta1.derivative())
    }

    /// Transport-family building blocks a = 1 + eta1 and v = 1 + eta2.
    pub fn transport_building_blocks(&self) -> (PeriodicFn, PeriodicFn) {
        (self.eta1.add_const(1.0), self.eta2.add_const(1.0))
    }
}

/// Bump of height `delta0` centered where eta2' is largest, with width sized
/// from the measured distance to the nearest sign change of eta2' so that the
/// support condition holds with margin.
fn rider_bump(eta2: &PeriodicFn, lo: f64, hi: f64, delta0: f64) -> Result<PeriodicFn> {
    let c1 = argmax(|x| eta2.derivative_at(x), lo, hi);
    let step = 5e-4;
    let mut left = c1;
    while left > c1 - 0.5 && eta2.derivative_at(left - step) > 0.0 {
        left -= step;
    }
    let mut right = c1;
    while right < c1 + 0.5 && eta2.derivative_at(right + step) > 0.0 {
        right += step;
    }
    let dist = (c1 - left).min(right - c1);
    let width = (0.85 * dist).min(0.20);
    make_bump(BumpSpec::new(c1, width, delta0))
}

fn argmax(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    // Golden-section search; the profiles used here are unimodal on the
    // bracketing interval.
    let phi = 0.5 * (3.0 - 5f64.sqrt());
    for _ in 0..120 {
        let a = lo + phi * (hi - lo);
        let b = hi - phi * (hi - lo);
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify;

    #[test]
    fn bump_profile_endpoints() {
        let b = make_bump(BumpSpec::new(0.5, 0.1, 2.0)).unwrap();
        assert_eq!(b.value_at(0.5), 2.0);
        assert_eq!(b.value_at(0.4), 0.0);
        assert_eq!(b.value_at(0.6), 0.0);
        assert_eq!(b.value_at(0.2), 0.0);
    }

    #[test]
    fn zero_height_bump_is_zero() {
        let b = make_bump(BumpSpec::new(0.3, 0.2, 0.0)).unwrap();
        for i in 0..100 {
            assert_eq!(b.value_at(i as f64 * 0.01), 0.0);
        }
    }

    #[test]
    fn overwide_bump_rejected() {
        assert!(make_bump(BumpSpec::new(0.3, 0.5, 1.0)).is_err());
        assert!(make_bump(BumpSpec::new(0.3, 0.7, 1.0)).is_err());
    }

    #[test]
    fn bump_integral_matches_adaptive_oracle() {
        let b = make_bump(BumpSpec::new(0.5, 0.1, 1.0)).unwrap();
        let got = b.period_integral();
        let oracle = verify::adaptive_simpson(&|x| b.value_at(x), 0.0, 1.0, 1e-13);
        assert!(
            (got - oracle).abs() < 1e-10,
            "quad {got} vs oracle {oracle}"
        );
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let pair = EtaPair::new(0.25, EtaVariant::Elliptic).unwrap();
        let flat = make_flat_top(0.5, 0.1, 0.2, 1.5).unwrap();
        for f in [&pair.eta1, &pair.eta2, &flat] {
            let mut worst = 0.0f64;
            for i in 0..1000 {
                let x = i as f64 / 1000.0;
                let h = 1e-6;
                let fd = (f.value_at(x + h) - f.value_at(x - h)) / (2.0 * h);
                worst = worst.max((fd - f.derivative_at(x)).abs());
            }
            assert!(worst < 1e-5, "derivative defect {worst}");
        }
    }

    #[test]
    fn higher_derivatives_are_consistent() {
        // Second and third derivative stacks against finite differences of
        // the level below, on both profile kinds.
        let b = make_bump(BumpSpec::new(0.45, 0.22, 0.8)).unwrap();
        let ft = make_flat_top(0.5, 0.12, 0.3, 0.7).unwrap();
        for f in [&b, &ft] {
            for k in 1..=3usize {
                let mut worst = 0.0f64;
                for i in 0..500 {
                    let x = 0.002 * i as f64;
                    let h = 1e-5;
                    let fd = (f.deriv_k(k - 1, x + h) - f.deriv_k(k - 1, x - h)) / (2.0 * h);
                    worst = worst.max((fd - f.deriv_k(k, x)).abs());
                }
                let scale = 10f64.powi(k as i32);
                assert!(worst < 1e-3 * scale, "order {k} defect {worst}");
            }
        }
    }

    #[test]
    fn periodicity_holds_for_constructed_functions() {
        let pair = EtaPair::new(0.25, EtaVariant::Parabolic).unwrap();
        let strong = EtaPair::elliptic_strong(0.25, 40).unwrap();
        for f in [&pair.eta1, &pair.eta2, &strong.eta1, &strong.eta2] {
            assert!(f.periodicity_defect(1000) <= 1e-12);
        }
    }

    #[test]
    fn eta_pair_bounds_and_support() {
        let pair = EtaPair::new(0.25, EtaVariant::Elliptic).unwrap();
        for i in 0..=10_000 {
            let x = i as f64 / 10_000.0;
            let e1 = pair.eta1.value_at(x);
            let e2 = pair.eta2.value_at(x);
            assert!((-1e-12..=0.25 + 1e-12).contains(&e1));
            assert!(e2.abs() <= 0.25 + 1e-12);
        }
        assert!(pair.support_margin() > 0.0);
    }

    #[test]
    fn elliptic_pair_drift_integral_positive() {
        let pair = EtaPair::new(0.25, EtaVariant::Elliptic).unwrap();
        let num = pair
            .eta1
            .mul(&pair.eta2.derivative())
            .div(&pair.eta2.add_const(2.0).mul(&pair.eta2.add_const(2.0)));
        assert!(num.period_integral() > 1e-4);
    }

    #[test]
    fn parabolic_pair_is_mean_free_with_negative_coupling() {
        let pair = EtaPair::new(0.25, EtaVariant::Parabolic).unwrap();
        assert!(pair.eta2.period_integral().abs() <= 1e-10);
        // int eta1' eta2 = -int eta1 eta2' < 0 because eta2' > 0 on supp eta1.
        let coupling = pair.eta1.derivative().mul(&pair.eta2).period_integral();
        assert!(coupling < -1e-4, "coupling {coupling}");
    }

    #[test]
    fn rescale_contracts_period_and_keeps_values() {
        let b = make_bump(BumpSpec::new(0.5, 0.1, 1.0)).unwrap();
        let identity = b.rescale_fast(1.0).unwrap();
        let eighth = b.rescale_fast(0.125).unwrap();
        for i in 0..100 {
            let x = i as f64 * 0.01;
            assert!((identity.value_at(x) - b.value_at(x)).abs() <= 1e-15);
            assert!((eighth.value_at(x) - eighth.value_at(x + 0.125)).abs() <= 1e-12);
            assert!((eighth.value_at(x) - b.value_at(x / 0.125)).abs() <= 1e-15);
        }
        let c = PeriodicFn::constant(1.0).rescale_fast(0.37).unwrap();
        for i in 0..10 {
            assert_eq!(c.value_at(i as f64 * 0.1), 1.0);
        }
    }

    #[test]
    fn space_time_evaluator_uses_parabolic_phase() {
        let b = make_bump(BumpSpec::new(0.5, 0.2, 1.0)).unwrap();
        let st = b.space_time_scaled(0.1).unwrap();
        assert!((st.value(0.01, 0.2) - b.value_at(0.01 / 0.01 + 0.2 / 0.1)).abs() < 1e-15);
    }

    #[test]
    fn quad_period_basics() {
        assert!((PeriodicFn::constant(1.0).period_integral() - 1.0).abs() < 1e-14);
        // sin^2(2 pi x) integrates to 1/2.
        let s = PeriodicFn::harmonic(1.0, 2, 0.0, 1.0);
        let s2 = s.mul(&s);
        assert!((s2.period_integral() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quad_period_matches_extrapolated_trapezoid_oracle() {
        let pair = EtaPair::new(0.25, EtaVariant::Elliptic).unwrap();
        let f = pair.eta1.mul(&pair.eta2.derivative());
        let got = f.period_integral();
        let oracle = verify::trapezoid_richardson(&|x| f.value_at(x), 0.0, 1.0, 1 << 14);
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    }

    #[test]
    fn antiderivative_long_range_decomposition() {
        let pair = EtaPair::new(0.25, EtaVariant::Elliptic).unwrap();
        let f = pair.eta1.add_const(0.3);
        let gamma = f.period_integral();
        let direct = f.antiderivative(10.5);
        assert!((direct - (10.0 * gamma + f.antiderivative(0.5))).abs() < 1e-10);
        assert_eq!(f.antiderivative(0.0), 0.0);
        let c = PeriodicFn::constant(1.0);
        for i in 0..20 {
            let x = -3.0 + i as f64 * 0.37;
            assert!((c.antiderivative(x) - x).abs() < 1e-12);
        }
        // One full period adds exactly the period integral.
        for i in 0..10 {
            let x = -1.0 + 0.61 * i as f64;
            let d = f.antiderivative(x + 1.0) - f.antiderivative(x) - gamma;
            assert!(d.abs() < 1e-10);
        }
    }

    #[test]
    fn strong_elliptic_pair_has_large_drift_integral() {
        let pair = EtaPair::elliptic_strong(0.25, 40).unwrap();
        assert!(pair.support_margin() > 0.5);
        let two_plus = pair.eta2.add_const(2.0);
        let num = pair
            .eta1
            .mul(&pair.eta2.derivative())
            .div(&two_plus.mul(&two_plus));
        let g1 = num.period_integral();
        assert!(g1 > 0.4, "drift integral {g1}");
    }

    #[test]
    fn strong_parabolic_pair_slope_and_mass() {
        let pair = EtaPair::parabolic_strong(0.5, 0.48).unwrap();
        assert!(pair.eta2.period_integral().abs() < 1e-10);
        let coupling = pair.eta1.derivative().mul(&pair.eta2).period_integral();
        assert!(coupling < -0.1, "coupling {coupling}");
        // Derivative consistency at a step matched to the finest scale.
        let mut worst = 0.0f64;
        for i in 0..2000 {
            let x = i as f64 / 2000.0;
            let h = 1e-7;
            let fd = (pair.eta2.value_at(x + h) - pair.eta2.value_at(x - h)) / (2.0 * h);
            worst = worst.max((fd - pair.eta2.derivative_at(x)).abs());
        }
        assert!(worst < 1e-5, "eta2 derivative defect {worst}");
    }
}
