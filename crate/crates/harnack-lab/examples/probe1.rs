use harnack_lab::periodic::*;
use harnack_lab::cell::*;
use harnack_lab::verify;

fn residual_sup(a: &PeriodicFn, beta: &PeriodicFn, v: &dyn Fn(f64) -> f64, n: usize) -> f64 {
    let av: Vec<f64> = (0..n).map(|i| { let x = i as f64 / n as f64; a.value_at(x) * v(x) }).collect();
    let bv: Vec<f64> = (0..n).map(|i| { let x = i as f64 / n as f64; beta.value_at(x) * v(x) }).collect();
    let d2 = verify::fourier_derivative(&av, 2, 1.0);
    let d1 = verify::fourier_derivative(&bv, 1, 1.0);
    (0..n).map(|i| (d2[i] - d1[i]).abs()).fold(0.0, f64::max)
}

fn main() {
    let n = 4096;
    // Instrument check 1: divergence form, v = 1 exactly: residual identically 0.
    let a1 = make_bump(BumpSpec::new(0.5, 0.3, 0.4)).unwrap().add_const(1.0);
    let b1 = a1.derivative();
    println!("instrument (v=1, closed forms): {:.3e}", residual_sup(&a1, &b1, &|_x| 1.0, n));

    // Instrument check 2: transport family with closed-form v = 1 + eta2.
    let pair = EtaPair::new(0.25, EtaVariant::Parabolic).unwrap();
    let (a, vb) = pair.transport_building_blocks();
    let p = p_from_density(&a, &pair.eta2, 0.5).unwrap();
    let beta = a.derivative().sub(&p);
    println!("instrument (closed-form v, transport): {:.3e}", residual_sup(&a, &beta, &|x| vb.value_at(x), n));

    // Quadrature-built v for the same problem: isolates v-value noise.
    let data = effective_transport(&a, &p, 0.5).unwrap();
    println!("quadrature v (transport): {:.3e}", residual_sup(&a, &beta, &|x| data.cell.v.value_at(x), n));

    // Elliptic default family, quadrature v.
    let pe = EtaPair::new(0.25, EtaVariant::Elliptic).unwrap();
    let (ae, be) = pe.drift_coefficients();
    let probe = CellProblem::new(DriftCoeffs::elliptic(ae.clone(), be.clone(), 0.4).unwrap()).unwrap();
    let cell = probe.invariant_density().unwrap();
    println!("quadrature v (elliptic): {:.3e}", residual_sup(&ae, &be, &|x| cell.v.value_at(x), n));
}
