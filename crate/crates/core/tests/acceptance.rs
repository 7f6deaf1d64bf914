//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured quantities once its assertions hold.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use num_complex::Complex64;
use ruelle_core::aniso_space::{
    check_sv_bound, h_matrix, nilpotent_norms, singular_values, split_cb, BlockScaling,
};
use ruelle_core::bounds::{class_envelope, BoundProfile, EnvelopeKind};
use ruelle_core::circle_map::{CircleMap, TrigPoly};
use ruelle_core::dc_class::{log_convex_majorant, log_grid, MSequence};
use ruelle_core::determinant::{
    det_from_truncation, det_series_from_traces, fredholm_det, npd_determinant, resonances,
    zeros_of_d,
};
use ruelle_core::transfer_op::{assemble_matrix, verify_entry_decay};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn doubling() -> CircleMap {
    CircleMap::linear(2).unwrap()
}

/// T(x) = 2x + eps sin(2 pi x).
fn perturbed_doubling(eps: f64) -> CircleMap {
    let p = TrigPoly::new(&[(1, Complex64::new(0.0, -eps / 2.0))]).unwrap();
    CircleMap::new(2, p).unwrap()
}

fn analytic_class() -> MSequence {
    MSequence::analytic(256).unwrap()
}

#[test]
fn criterion_1_doubling_closed_forms() {
    let start = Instant::now();
    let map = doubling();

    for n in 1..=12 {
        let t = map.flat_trace(None, n).unwrap();
        assert!(
            (t.re - 1.0).abs() <= 1e-14 && t.im.abs() <= 1e-14,
            "flat trace at n = {n}: {t}"
        );
    }

    let traces = map.flat_traces(None, 12).unwrap();
    let series = det_series_from_traces(&traces);
    assert!((series.coeffs[0] - c(1.0)).norm() <= 1e-13);
    assert!((series.coeffs[1] + c(1.0)).norm() <= 1e-13);
    for j in 2..=12 {
        assert!(series.coeffs[j].norm() <= 1e-13, "a_{j}");
    }

    let mx = assemble_matrix(&map, None, 16).unwrap();
    for k in -16i64..=16 {
        for l in -16i64..=16 {
            let expected = if l == 2 * k { 1.0 } else { 0.0 };
            let e = mx.entry(k, l);
            assert!(
                (e.re - expected).abs() <= 1e-13 && e.im.abs() <= 1e-13,
                "matrix entry ({k},{l})"
            );
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "runtime {elapsed:?} over 5 s");
    println!(
        "PASS criterion 1: doubling closed forms (traces exact to 1e-14, d = 1 - z to 1e-13, \
         shift matrix to 1e-13) in {elapsed:.2?}"
    );
}

#[test]
fn criterion_2_route_agreement() {
    let start = Instant::now();
    let map = perturbed_doubling(0.05);
    let m_seq = analytic_class();
    let theta = 1.5;

    let traces = map.flat_traces(None, 10).unwrap();
    let orbit = det_series_from_traces(&traces);

    // Eigen route: char-poly coefficients of the truncation, stabilized
    // across K = 96 vs 128.
    let mx_96 = assemble_matrix(&map, None, 96).unwrap();
    let mx_128 = assemble_matrix(&map, None, 128).unwrap();
    let eigen_96 = det_from_truncation(mx_96.matrix(), 10);
    let eigen_128 = det_from_truncation(mx_128.matrix(), 10);
    let mut cross = 0.0f64;
    let mut vs_orbit = 0.0f64;
    for j in 0..=10 {
        cross = cross.max((eigen_96.coeffs[j] - eigen_128.coeffs[j]).norm());
        vs_orbit = vs_orbit.max((orbit.coeffs[j] - eigen_128.coeffs[j]).norm());
    }
    assert!(cross < 1e-7, "stabilization gap {cross:.3e}");
    assert!(vs_orbit < 1e-7, "route disagreement {vs_orbit:.3e}");

    // Zero / resonance duality.
    let res_set = resonances(&map, None, &m_seq, theta, &[96, 128]).unwrap();
    let radius = 1.02 / res_set.values.last().unwrap().norm();
    let zeros = zeros_of_d(&orbit, radius).unwrap();
    assert!(!zeros.is_empty());
    let mut duality = 0.0f64;
    for z in &zeros {
        let inv = 1.0 / z.z;
        let gap = res_set
            .values
            .iter()
            .map(|&l| (inv - l).norm())
            .fold(f64::INFINITY, f64::min);
        duality = duality.max(gap);
    }
    // Completeness only inside the reliable disk, where the residual filter
    // can certify roots at all.
    let complete_to = radius.min(orbit.reliability_radius()) * 0.999;
    for &l in &res_set.values {
        if l.norm() > 1.0 / complete_to {
            let gap = zeros
                .iter()
                .map(|z| (1.0 / z.z - l).norm())
                .fold(f64::INFINITY, f64::min);
            duality = duality.max(gap);
        }
    }
    assert!(duality < 1e-6, "duality gap {duality:.3e}");

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "runtime {elapsed:?} over 60 s"
    );
    println!(
        "PASS criterion 2: route agreement (orbit vs eigen {vs_orbit:.2e}, cross-K {cross:.2e}, \
         zero/resonance duality {duality:.2e}) in {elapsed:.2?}"
    );
}

#[test]
fn criterion_3_leading_resonance_is_one() {
    let m_seq = analytic_class();
    let two_mode = {
        let p = TrigPoly::new(&[
            (1, Complex64::new(0.0, -0.02)),
            (2, Complex64::new(0.01, 0.0)),
        ])
        .unwrap();
        CircleMap::new(2, p).unwrap()
    };
    let degree3 = {
        let p = TrigPoly::new(&[(1, Complex64::new(0.0, -0.03))]).unwrap();
        CircleMap::new(3, p).unwrap()
    };
    let cases: Vec<(&str, CircleMap, Vec<usize>)> = vec![
        ("doubling", doubling(), vec![16, 32]),
        ("perturbed doubling", perturbed_doubling(0.05), vec![64, 96]),
        ("two-mode perturbation", two_mode, vec![48, 64]),
        ("degree 3", degree3, vec![32, 48]),
    ];
    let mut worst = 0.0f64;
    for (name, map, k_list) in &cases {
        let set = resonances(map, None, &m_seq, 1.4, k_list).unwrap();
        let gap = (set.values[0] - c(1.0)).norm();
        assert!(gap < 1e-10, "{name}: leading resonance off by {gap:.3e}");
        worst = worst.max(gap);
    }
    println!(
        "PASS criterion 3: leading resonance equals 1 within 1e-10 on {} maps (worst {worst:.2e})",
        cases.len()
    );
}

#[test]
fn criterion_4_npd_identity() {
    let map = perturbed_doubling(0.05);
    let m_seq = analytic_class();
    let mx = assemble_matrix(&map, None, 48).unwrap();
    let (scaling, _) = BlockScaling::calibrated(&mx, &m_seq, 1.5, map.lambda()).unwrap();
    let h = h_matrix(&mx, &scaling).unwrap();
    let n_blocks = scaling.n_blocks();
    let (a, b) = split_cb(&h, n_blocks - 1).unwrap();

    // Exact nilpotency of the strictly upper block part.
    let norms = nilpotent_norms(&b, n_blocks);
    assert_eq!(
        *norms.last().unwrap(),
        0.0,
        "B^{n_blocks} must vanish exactly"
    );

    let full = &a + &b;
    let mut state = 0x853c49e6748fea9bu64;
    let mut rand = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut worst = 0.0f64;
    let mut det_b_worst = 0.0f64;
    for _ in 0..20 {
        let z = Complex64::from_polar(rand().sqrt(), rand() * std::f64::consts::TAU);
        let lhs = npd_determinant(&a, &b, z);
        let rhs = fredholm_det(&full, z);
        worst = worst.max((lhs - rhs).norm());
        det_b_worst = det_b_worst.max((fredholm_det(&b, z) - c(1.0)).norm());
    }
    assert!(worst < 1e-10, "identity gap {worst:.3e}");
    assert!(det_b_worst < 1e-12, "det(I - zB) drifted from 1");
    println!(
        "PASS criterion 4: split-resolvent determinant identity at 20 points \
         (max gap {worst:.2e}, det(I - zB) = 1 to {det_b_worst:.2e}, B^{n_blocks} = 0)"
    );
}

#[test]
fn criterion_5_bound_suites() {
    let map = perturbed_doubling(0.05);
    let m_seq = analytic_class();
    let theta = 1.5;

    // (a) Entry-decay bound fit.
    let mx64 = assemble_matrix(&map, None, 64).unwrap();
    let decay = verify_entry_decay(&mx64, &m_seq, theta);
    assert!(!decay.empty);
    assert_eq!(decay.violations, 0, "entry-decay fit violated");
    assert!(decay.c.is_finite() && decay.r.is_finite());

    // (b) Block-norm bound fit behind the R calibration.
    let mx128 = assemble_matrix(&map, None, 128).unwrap();
    let (scaling, cal) = BlockScaling::calibrated(&mx128, &m_seq, theta, map.lambda()).unwrap();
    assert_eq!(cal.violations, 0, "block-norm fit violated");

    // (c) Singular-value bound at K = 128.
    let h = h_matrix(&mx128, &scaling).unwrap();
    let svals = singular_values(h.matrix());
    let svb = check_sv_bound(&svals, &m_seq, theta);
    assert_eq!(svb.violations, 0, "singular-value bound violated");

    // (d) ||B^n|| <= C^n prod g(k).
    let profile = BoundProfile::new(&m_seq, theta, map.lambda(), scaling.r_weight(), None).unwrap();
    let n_blocks = scaling.n_blocks();
    let (_, b) = split_cb(&h, n_blocks - 1).unwrap();
    let b_norms = nilpotent_norms(&b, n_blocks);
    let g: Vec<f64> = (0..n_blocks).map(|n| profile.g(n).unwrap()).collect();
    let mut c_fit = 0.0f64;
    for (idx, &bn) in b_norms.iter().enumerate() {
        if bn > 0.0 {
            let n = idx + 1;
            let log_prod: f64 = g[..n].iter().map(|x| x.ln()).sum();
            c_fit = c_fit.max(((bn.ln() - log_prod) / n as f64).exp());
        }
    }
    let mut d_viol = 0;
    for (idx, &bn) in b_norms.iter().enumerate() {
        let n = idx + 1;
        let log_prod: f64 = g[..n].iter().map(|x| x.ln()).sum();
        if bn > (n as f64 * c_fit.ln() + log_prod).exp() * (1.0 + 1e-9) {
            d_viol += 1;
        }
    }
    assert_eq!(d_viol, 0, "nilpotent-power bound violated");

    // (e) Growth bound dominates |d(z)| inside the reliability radius.
    let traces = map.flat_traces(None, 10).unwrap();
    let orbit = det_series_from_traces(&traces);
    let reliable = orbit.reliability_radius();
    let z_grid: Vec<f64> = [0.5, 1.0, 2.0, 3.0]
        .iter()
        .cloned()
        .filter(|z| *z < reliable)
        .collect();
    assert!(z_grid.len() >= 3, "reliability radius {reliable} too small");
    let mut c_growth = None;
    'fit: for cc in log_grid(1e-2, 1e2, 32) {
        for &z in &z_grid {
            let bound = profile.log_growth_bound(cc, z).unwrap();
            let measured = orbit
                .eval(c(z))
                .norm()
                .max(orbit.eval(c(-z)).norm())
                .max(orbit.eval(Complex64::new(0.0, z)).norm());
            if bound < measured.max(1e-300).ln() {
                continue 'fit;
            }
        }
        c_growth = Some(cc);
        break;
    }
    let c_growth = c_growth.expect("no admissible growth constant");
    println!(
        "PASS criterion 5: bound suites all zero violations \
         (entry C={:.3e} R={:.3e}; blocks C={:.3e} R={:.3e}; sv C={:.3e} A={:.3e}; \
         powers C={:.3e}; growth C={:.3e} on {} z-points)",
        decay.c,
        decay.r,
        cal.c,
        cal.r,
        svb.c,
        svb.a,
        c_fit,
        c_growth,
        z_grid.len()
    );
}

#[test]
fn criterion_6_dc_property_suite() {
    let start = Instant::now();
    let m = analytic_class();

    // Monotonicity of w and of the minimizer index on a grid.
    let grid = log_grid(1e-6, 10.0, 200);
    let mut prev_w = f64::NEG_INFINITY;
    let mut prev_k = usize::MAX;
    for &x in &grid {
        let e = m.weight_w(x);
        assert!(e.log_w >= prev_w - 1e-12, "w not monotone at {x}");
        assert!(e.k_of_x <= prev_k, "k(x) not monotone at {x}");
        prev_w = e.log_w;
        prev_k = e.k_of_x;
    }

    // Largest-minimizer tie at x = 0.1.
    let e = m.weight_w(0.1);
    assert!((e.w - 3.6288e-4).abs() < 1e-17);
    assert_eq!(e.k_of_x, 10);

    // decay_ratio <= mu^{k(x)}.
    for &x in &[0.05, 0.1, 0.3, 0.8] {
        for &mu in &[0.3, 0.5, 0.9] {
            let ratio = m.decay_ratio(mu, x).unwrap();
            let k = m.weight_w(x).k_of_x;
            assert!(ratio <= mu.powi(k as i32) + 1e-12);
        }
    }

    // Polynomial ratio bound with delta = -log mu / log gamma.
    let fit = m.poly_ratio_exponent(2.0, 0.5).unwrap();
    assert!((fit.delta - 1.0).abs() < 1e-14);
    assert!(fit.c_prime.is_finite());
    let mut viol = 0;
    for &x in &fit.grid {
        let ratio = (m.weight_w(0.5 * x).log_w - m.weight_w(x).log_w).exp();
        if ratio > fit.c_prime * x.powf(fit.delta) * (1.0 + 1e-9) {
            viol += 1;
        }
    }
    assert_eq!(viol, 0, "polynomial ratio bound violated");

    // Majorant invariants on 1000 random non-negative sequences.
    let mut state = 0x2545f4914f6cdd1du64;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for trial in 0..1000 {
        let len = 1 + (next() * 19.0) as usize;
        let a: Vec<f64> = (0..len)
            .map(|_| {
                if next() < 0.25 {
                    0.0
                } else {
                    (next() * 12.0 - 6.0).exp()
                }
            })
            .collect();
        let (cc, b) = log_convex_majorant(&a).unwrap();
        assert!((b.value(0) - 1.0).abs() < 1e-12, "trial {trial}: B_0");
        for k in 0..b.k_max() {
            assert!(
                b.log_value(k) <= b.log_value(k + 1) + 1e-12,
                "trial {trial}: monotone"
            );
        }
        for k in 1..b.k_max() {
            assert!(
                2.0 * b.log_value(k) <= b.log_value(k - 1) + b.log_value(k + 1) + 1e-9,
                "trial {trial}: log-convex"
            );
        }
        for (k, &v) in a.iter().enumerate() {
            assert!(
                v <= cc * b.value(k) * (1.0 + 1e-9),
                "trial {trial}: domination"
            );
        }
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "runtime {elapsed:?} over 10 s"
    );
    println!(
        "PASS criterion 6: class property suite (w monotone, tie at k=10, decay ratios, \
         delta = 1 polynomial bound, 1000 majorants) in {elapsed:.2?}"
    );
}

#[test]
fn criterion_7_weighted_operators() {
    let map = perturbed_doubling(0.05);
    let m_seq = analytic_class();
    // psi = 1 + 0.1 cos(2 pi x).
    let psi = TrigPoly::new(&[
        (0, Complex64::new(1.0, 0.0)),
        (1, Complex64::new(0.05, 0.0)),
    ])
    .unwrap();

    let traces = map.flat_traces(Some(&psi), 8).unwrap();
    let orbit = det_series_from_traces(&traces);
    let mx = assemble_matrix(&map, Some(&psi), 96).unwrap();
    let eigen = det_from_truncation(mx.matrix(), 8);
    let mut worst = 0.0f64;
    for j in 0..=8 {
        worst = worst.max((orbit.coeffs[j] - eigen.coeffs[j]).norm());
    }
    assert!(worst < 1e-6, "weighted route disagreement {worst:.3e}");

    // Constant weight scales every stabilized resonance by c.
    let cw = 0.6;
    let psi_const = TrigPoly::constant(cw);
    let mut scale_worst = 0.0f64;
    for (map, k_list) in [
        (doubling(), vec![16usize, 32]),
        (perturbed_doubling(0.05), vec![64, 96]),
    ] {
        let plain = resonances(&map, None, &m_seq, 1.5, &k_list).unwrap();
        let scaled = resonances(&map, Some(&psi_const), &m_seq, 1.5, &k_list).unwrap();
        let take = plain.values.len().min(scaled.values.len());
        assert!(take >= 1);
        for i in 0..take {
            let gap = (scaled.values[i] - plain.values[i] * cw).norm();
            assert!(gap < 1e-10, "resonance {i} scaling gap {gap:.3e}");
            scale_worst = scale_worst.max(gap);
        }
    }
    println!(
        "PASS criterion 7: weighted operators (route agreement {worst:.2e} through order 8, \
         constant-weight scaling to {scale_worst:.2e})"
    );
}

#[test]
fn criterion_8_class_envelopes() {
    // Analytic class: measured singular values at K = 128 decay at least
    // geometrically.
    let map = perturbed_doubling(0.05);
    let m_seq = analytic_class();
    let mx = assemble_matrix(&map, None, 128).unwrap();
    let (scaling, _) = BlockScaling::calibrated(&mx, &m_seq, 1.5, map.lambda()).unwrap();
    let h = h_matrix(&mx, &scaling).unwrap();
    let svals = singular_values(h.matrix());
    let pts: Vec<(f64, f64)> = svals
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s > 1e-290)
        .map(|(k, &s)| (k as f64, s.ln()))
        .collect();
    assert!(pts.len() > 30);
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    assert!(slope < -0.02, "sv decay slope {slope} lacks margin");

    // Gevrey sigma = 2: the sup-envelope machinery reproduces the
    // exp(-c^{-1} m^{1/2}) shape with a finite fitted constant.
    let gev = MSequence::gevrey(2.0, 256).unwrap();
    let ms: Vec<usize> = (1..=160).collect();
    let measured: Vec<f64> = ms
        .iter()
        .map(|&k| ruelle_core::aniso_space::sv_envelope(&gev, 1.5, 1.0, k))
        .collect();
    let mut fitted = None;
    'fit: for cc in log_grid(1e-1, 1e3, 64) {
        for (&k, &e) in ms.iter().zip(&measured) {
            let bound =
                class_envelope(EnvelopeKind::GevreySv { sigma: 2.0 }, cc, k as f64).unwrap();
            if e > bound * (1.0 + 1e-9) {
                continue 'fit;
            }
        }
        fitted = Some(cc);
        break;
    }
    let fitted = fitted.expect("no finite envelope constant");
    println!(
        "PASS criterion 8: envelopes (sv slope {slope:.3} < -0.02 at K = 128; \
         gevrey sup-envelope c = {fitted:.3e}, 0 violations)"
    );
}
