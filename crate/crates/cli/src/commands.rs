//! Subcommand implementations: each builds its artifacts under the output
//! directory and returns a process exit code.

use std::fs;
use std::path::Path;

use anyhow::Context;
use num_complex::Complex64;

use ruelle_core::aniso_space::{
    cauchy_check, check_sv_bound, nilpotent_norms, singular_values, split_cb,
};
use ruelle_core::bounds::{order_bound, BoundProfile, EnvelopeKind};
use ruelle_core::dc_class::log_grid;
use ruelle_core::determinant::{
    det_from_eigenvalues, det_from_truncation, det_series_from_traces, fredholm_det,
    npd_determinant, resonances, suggest_order_m, zeros_of_d, DeterminantSeries, ResonanceSet,
};
use ruelle_core::transfer_op::verify_entry_decay;
use ruelle_core::{fmt_e17, Error};

use crate::config::Resolved;
use crate::pipeline::{build_stage, unit_disk_points};
use crate::report::{complex_list, envelope, fnv1a_hex, int, num, num_list, to_string, Map, Value};

fn write_artifact(dir: &Path, name: &str, content: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------- class --

pub fn class(res: &Resolved) -> anyhow::Result<i32> {
    let out = &res.config.out_dir;
    let grid = log_grid(1e-6, 10.0, 240);
    write_artifact(out, "weight_table.csv", &res.m_seq.weight_table_csv(&grid))?;

    let mut body = Map::new();
    body.insert("k_max", int(res.m_seq.k_max()));

    let mut gentil = Vec::new();
    for gamma in [1.1, 1.5, 2.0, 4.0] {
        let g = res.m_seq.check_gentil(gamma)?;
        let mut m = Map::new();
        m.insert("gamma", num(gamma));
        m.insert("c", num(g.c));
        m.insert("argmax_k", int(g.argmax_k));
        m.insert("conclusive", Value::Bool(g.conclusive));
        gentil.push(Value::Object(m));
    }
    body.insert("gentil", Value::Array(gentil));

    if res.m_seq.check_gentil(2.0)?.conclusive {
        let fit = res.m_seq.poly_ratio_exponent(2.0, 0.5)?;
        let mut m = Map::new();
        m.insert("gamma", num(2.0));
        m.insert("mu", num(0.5));
        m.insert("delta", num(fit.delta));
        m.insert("c_prime", num(fit.c_prime));
        body.insert("poly_ratio", Value::Object(m));
    }

    // Membership-constant fit for T' (and psi when present) against the
    // configured class, from their Fourier data.
    let mut t_prime: Vec<(i64, Complex64)> =
        vec![(0, Complex64::new(res.map.degree() as f64, 0.0))];
    for &(n, c) in res.map.perturbation().coeffs() {
        if n != 0 {
            t_prime.push((n, c * Complex64::new(0.0, std::f64::consts::TAU * n as f64)));
        }
    }
    let fit = res.m_seq.estimate_class_constants(&t_prime, 16)?;
    let mut m = Map::new();
    m.insert("c", num(fit.c));
    m.insert("r", num(fit.r));
    m.insert(
        "min_slack",
        num(fit.slack.iter().cloned().fold(f64::INFINITY, f64::min)),
    );
    body.insert("t_prime_class_fit", Value::Object(m));
    if let Some(psi) = &res.psi {
        let fit = res.m_seq.estimate_class_constants(psi.coeffs(), 16)?;
        let mut m = Map::new();
        m.insert("c", num(fit.c));
        m.insert("r", num(fit.r));
        body.insert("psi_class_fit", Value::Object(m));
    }

    let samples: Vec<Value> = [0.01, 0.1, 1.0]
        .iter()
        .map(|&x| {
            let e = res.m_seq.weight_w(x);
            let mut m = Map::new();
            m.insert("x", num(x));
            m.insert("w", num(e.w));
            m.insert("k_of_x", int(e.k_of_x));
            m.insert("saturated", Value::Bool(e.saturated));
            Value::Object(m)
        })
        .collect();
    body.insert("weight_samples", Value::Array(samples));

    write_artifact(
        out,
        "class_report.json",
        &to_string(&envelope(&res.config_hash, body)),
    )?;
    Ok(0)
}

// ------------------------------------------------------------- spectrum --

pub fn spectrum(res: &Resolved) -> anyhow::Result<i32> {
    let out = &res.config.out_dir;
    let k_top = *res.config.k_list.last().unwrap();
    let stage = build_stage(res, k_top)?;

    let svals = singular_values(stage.h.matrix());
    let sv_report = check_sv_bound(&svals, &res.m_seq, res.config.theta);

    let mut csv = String::from("k,sigma_k,bound_k,slack\n");
    for &(k, s, b, slack) in &sv_report.rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            k,
            fmt_e17(s),
            fmt_e17(b),
            fmt_e17(slack)
        ));
    }
    write_artifact(out, "singular_values.csv", &csv)?;

    // Matrix export: raw bytes with a sidecar, CSV only at small K.
    fs::create_dir_all(out)?;
    fs::write(out.join("transfer_matrix.bin"), stage.mx.to_bytes())?;
    println!("wrote {}", out.join("transfer_matrix.bin").display());
    let mut sidecar = Map::new();
    sidecar.insert("k_cut", int(stage.mx.k_cut()));
    sidecar.insert("dim", int(stage.mx.dim()));
    sidecar.insert("quad_size", int(stage.mx.quad_size()));
    sidecar.insert(
        "layout",
        Value::String("row-major complex128 little-endian, index k + K".into()),
    );
    sidecar.insert(
        "map_hash",
        Value::String(fnv1a_hex(
            serde_json::to_string(&res.config.map).unwrap().as_bytes(),
        )),
    );
    write_artifact(
        out,
        "transfer_matrix.json",
        &to_string(&envelope(&res.config_hash, sidecar)),
    )?;
    if stage.mx.k_cut() <= 32 {
        write_artifact(out, "transfer_matrix.csv", &stage.mx.to_csv())?;
    }

    let decay = verify_entry_decay(&stage.mx, &res.m_seq, res.config.theta);
    let cauchy = cauchy_check(&stage.h, &res.m_seq)?;
    let res_set = resonances(
        &res.map,
        res.psi.as_ref(),
        &res.m_seq,
        res.config.theta,
        &res.config.k_list,
    )?;

    let mut body = Map::new();
    body.insert("k_cut", int(k_top));
    body.insert("quad_size", int(stage.mx.quad_size()));
    body.insert("lambda", num(res.map.lambda()));
    body.insert("theta", num(res.config.theta));

    let mut scaling = Map::new();
    scaling.insert("r_weight", num(stage.scaling.r_weight()));
    scaling.insert("n_blocks", int(stage.scaling.n_blocks()));
    let h_values: Vec<f64> = (0..stage.scaling.n_blocks())
        .map(|m| stage.scaling.log_h(m))
        .collect();
    scaling.insert("log_h", num_list(&h_values));
    scaling.insert(
        "h",
        num_list(&h_values.iter().map(|lh| lh.exp()).collect::<Vec<_>>()),
    );
    let (ratios, monotone) = stage.scaling.h_ratio_diagnostic();
    scaling.insert("h_ratio", num_list(&ratios));
    scaling.insert("h_ratio_monotone", Value::Bool(monotone));
    if let Some(cal) = &stage.calibration {
        scaling.insert("calibration_c", num(cal.c));
        scaling.insert("calibration_violations", int(cal.violations));
    }
    body.insert("scaling", Value::Object(scaling));

    let mut entry_fit = Map::new();
    entry_fit.insert("c", num(decay.c));
    entry_fit.insert("r", num(decay.r));
    entry_fit.insert("violations", int(decay.violations));
    entry_fit.insert("window_pairs", int(decay.window_pairs));
    body.insert("entry_decay", Value::Object(entry_fit));

    let mut svb = Map::new();
    svb.insert("c", num(sv_report.c));
    svb.insert("a", num(sv_report.a));
    svb.insert("violations", int(sv_report.violations));
    body.insert("sv_bound", Value::Object(svb));

    let mut cy = Map::new();
    cy.insert("c", num(cauchy.c));
    cy.insert("violations", int(cauchy.violations));
    body.insert("cauchy", Value::Object(cy));

    body.insert("resonances", complex_list(&res_set.values));
    body.insert("resonance_stability", num_list(&res_set.stability));
    body.insert("leading_sigma", num_list(&svals[..svals.len().min(16)]));

    write_artifact(
        out,
        "spectrum_report.json",
        &to_string(&envelope(&res.config_hash, body)),
    )?;

    let violations = decay.violations + sv_report.violations + cauchy.violations;
    Ok(if violations == 0 { 0 } else { 1 })
}

// ---------------------------------------------------------- determinant --

fn series_json(s: &DeterminantSeries) -> Value {
    let mut m = Map::new();
    m.insert("route", Value::String(s.route.as_str().into()));
    m.insert("n_traces", int(s.n_traces));
    m.insert("coeffs", complex_list(&s.coeffs));
    Value::Object(m)
}

fn max_coeff_diff(a: &DeterminantSeries, b: &DeterminantSeries, through: usize) -> f64 {
    (0..=through)
        .map(|j| {
            let x = a.coeffs.get(j).copied().unwrap_or_default();
            let y = b.coeffs.get(j).copied().unwrap_or_default();
            (x - y).norm()
        })
        .fold(0.0, f64::max)
}

/// Bidirectional match between determinant zeros and stabilized resonances.
///
/// Every accepted zero must sit at the reciprocal of some resonance; the
/// completeness direction (resonance -> zero) is only demanded inside the
/// series' reliable disk, where the residual filter can certify roots.
fn duality_gap(zeros: &[Complex64], res_set: &ResonanceSet, radius: f64, reliable: f64) -> f64 {
    let mut worst = 0.0f64;
    for &z in zeros {
        let inv = 1.0 / z;
        let d = res_set
            .values
            .iter()
            .map(|&l| (inv - l).norm())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    let complete_to = radius.min(reliable) * 0.999;
    for &l in &res_set.values {
        if l.norm() > 1.0 / complete_to {
            let d = zeros
                .iter()
                .map(|&z| (1.0 / z - l).norm())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
    }
    worst
}

pub fn determinant(res: &Resolved) -> anyhow::Result<i32> {
    let out = &res.config.out_dir;
    let n = res.config.n_traces;

    let traces = res.map.flat_traces(res.psi.as_ref(), n)?;
    let orbit = det_series_from_traces(&traces);
    write_artifact(
        out,
        "periodic_orbits.csv",
        &res.map.periodic_points(n)?.to_csv(),
    )?;

    let ks = &res.config.k_list;
    let k_lo = ks[ks.len() - 2];
    let k_hi = ks[ks.len() - 1];
    let stage_lo = build_stage(res, k_lo)?;
    let stage_hi = build_stage(res, k_hi)?;
    let eigen_lo = det_from_truncation(stage_lo.mx.matrix(), n);
    let eigen = det_from_truncation(stage_hi.mx.matrix(), n);

    let res_set = resonances(&res.map, res.psi.as_ref(), &res.m_seq, res.config.theta, ks)?;

    // Zeros inside a radius just past the deepest stabilized resonance.
    let radius = 1.02 / res_set.values.last().unwrap().norm();
    let zeros = zeros_of_d(&orbit, radius)?;
    let zero_points: Vec<Complex64> = zeros.iter().map(|z| z.z).collect();

    // Split-resolvent identity on the full block window.
    let (a, b) = split_cb(&stage_hi.h, stage_hi.scaling.n_blocks() - 1)?;
    let full = &a + &b;
    let mut npd_worst = 0.0f64;
    let z_points = unit_disk_points(20);
    for &z in &z_points {
        let lhs = npd_determinant(&a, &b, z);
        let rhs = fredholm_det(&full, z);
        npd_worst = npd_worst.max((lhs - rhs).norm());
    }

    // Regularized eigen-route from the stabilized resonances, for the report.
    let svals = singular_values(stage_hi.h.matrix());
    let order_m = res
        .config
        .order_m
        .unwrap_or_else(|| suggest_order_m(&svals));
    let regularized = if order_m > 1 {
        Some(det_from_eigenvalues(
            &res_set.values,
            order_m,
            n,
            Some(&traces),
        )?)
    } else {
        None
    };

    let mut body = Map::new();
    body.insert("orbit", series_json(&orbit));
    body.insert("eigen", series_json(&eigen));
    body.insert("flat_traces", complex_list(&traces));
    body.insert("resonances", complex_list(&res_set.values));
    body.insert("resonance_stability", num_list(&res_set.stability));
    body.insert("order_m", int(order_m));
    if let Some(reg) = &regularized {
        body.insert("regularized", series_json(reg));
    }
    body.insert("zeros", complex_list(&zero_points));
    body.insert(
        "zero_residuals",
        num_list(&zeros.iter().map(|z| z.residual).collect::<Vec<_>>()),
    );
    body.insert("zero_radius", num(radius));
    body.insert("reliability_radius", num(orbit.reliability_radius()));

    let mut agreements = Map::new();
    agreements.insert("orbit_vs_eigen", num(max_coeff_diff(&orbit, &eigen, n)));
    agreements.insert("eigen_cross_k", num(max_coeff_diff(&eigen_lo, &eigen, n)));
    agreements.insert("npd_vs_direct", num(npd_worst));
    agreements.insert(
        "zero_resonance_duality",
        num(duality_gap(
            &zero_points,
            &res_set,
            radius,
            orbit.reliability_radius(),
        )),
    );
    body.insert("agreements", Value::Object(agreements));

    write_artifact(
        out,
        "determinant_report.json",
        &to_string(&envelope(&res.config_hash, body)),
    )?;
    Ok(0)
}

// --------------------------------------------------------------- bounds --

fn gnuplot_pair(out: &Path, stem: &str, title: &str, cols: (&str, &str)) -> anyhow::Result<()> {
    let script = format!(
        "set logscale y\nset grid\nset title '{title}'\nset datafile separator ','\n\
         plot '{stem}.csv' using 1:2 with linespoints title '{}', \\\n     \
         '{stem}.csv' using 1:3 with lines title '{}'\n",
        cols.0, cols.1
    );
    write_artifact(out, &format!("{stem}.gp"), &script)
}

pub fn bounds(res: &Resolved) -> anyhow::Result<i32> {
    let out = &res.config.out_dir;
    let plots = out.join("plots");
    let k_top = *res.config.k_list.last().unwrap();
    let stage = build_stage(res, k_top)?;
    let profile = BoundProfile::new(
        &res.m_seq,
        res.config.theta,
        res.map.lambda(),
        stage.scaling.r_weight(),
        None,
    )?;

    let mut body = Map::new();
    body.insert("alpha_exp", num(profile.alpha_exp()));
    body.insert("r_weight", num(profile.r_weight()));
    body.insert("r_prime", num(profile.r_prime()));
    let mut violations_total = 0usize;

    // g decay table.
    let n_blocks = stage.scaling.n_blocks();
    let g_values: Vec<f64> = (0..n_blocks + 8)
        .map(|n| profile.g(n))
        .collect::<ruelle_core::Result<_>>()?;
    body.insert("g", num_list(&g_values));

    // ||B^n|| against C^n prod g(k): fit C, count violations.
    let (_, b_mat) = split_cb(&stage.h, n_blocks - 1)?;
    let b_norms = nilpotent_norms(&b_mat, n_blocks + 1);
    let mut c_nilp = 0.0f64;
    for (idx, &bn) in b_norms.iter().enumerate() {
        let n = idx + 1;
        if bn == 0.0 {
            continue;
        }
        let log_prod: f64 = g_values[..n].iter().map(|g| g.ln()).sum();
        c_nilp = c_nilp.max(((bn.ln() - log_prod) / n as f64).exp());
    }
    let mut nilp_viol = 0usize;
    for (idx, &bn) in b_norms.iter().enumerate() {
        let n = idx + 1;
        let log_prod: f64 = g_values[..n].iter().map(|g| g.ln()).sum();
        if bn > (n as f64 * c_nilp.ln() + log_prod).exp() * (1.0 + 1e-9) {
            nilp_viol += 1;
        }
    }
    violations_total += nilp_viol;
    let mut nilp = Map::new();
    nilp.insert("norms", num_list(&b_norms));
    nilp.insert("c", num(c_nilp));
    nilp.insert("violations", int(nilp_viol));
    body.insert("nilpotent_powers", Value::Object(nilp));

    // Growth bound: fit the smallest grid C dominating |d(z)| inside the
    // reliability radius.
    let traces = res.map.flat_traces(res.psi.as_ref(), res.config.n_traces)?;
    let orbit = det_series_from_traces(&traces);
    let reliable = orbit.reliability_radius();
    let z_abs: Vec<f64> = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0]
        .iter()
        .cloned()
        .filter(|z| *z <= reliable)
        .collect();
    let mut c_growth = f64::NAN;
    'outer: for c in log_grid(1e-2, 1e2, 32) {
        for &z in &z_abs {
            let bound = profile.log_growth_bound(c, z)?;
            let measured = orbit
                .eval(Complex64::new(-z, 0.0))
                .norm()
                .max(orbit.eval(Complex64::new(z, 0.0)).norm());
            if bound < measured.max(1e-300).ln() {
                continue 'outer;
            }
        }
        c_growth = c;
        break;
    }
    let mut growth = Map::new();
    growth.insert("c", num(c_growth));
    growth.insert("z_grid", num_list(&z_abs));
    if c_growth.is_finite() {
        let curve: Vec<f64> = z_abs
            .iter()
            .map(|&z| profile.log_growth_bound(c_growth, z))
            .collect::<ruelle_core::Result<_>>()?;
        growth.insert("log_bound", num_list(&curve));
        let measured: Vec<f64> = z_abs
            .iter()
            .map(|&z| orbit.eval(Complex64::new(z, 0.0)).norm().ln())
            .collect();
        growth.insert("log_measured", num_list(&measured));
        let mut csv = String::from("z,log_measured,log_bound\n");
        for ((&z, &m), &b) in z_abs.iter().zip(&measured).zip(&curve) {
            csv.push_str(&format!("{},{},{}\n", fmt_e17(z), fmt_e17(m), fmt_e17(b)));
        }
        write_artifact(&plots, "growth_bound.csv", &csv)?;
        gnuplot_pair(
            &plots,
            "growth_bound",
            "determinant growth",
            ("measured", "bound"),
        )?;
    } else {
        violations_total += 1;
    }
    body.insert("growth_bound", Value::Object(growth));

    // Counting integral vs log F.
    let mut counting = Vec::new();
    for &r in &[10.0, 100.0, 1000.0] {
        let cb = profile.counting_bound(r)?;
        let lf = profile.log_f_product(r)?;
        if cb.value < lf - 1e-9 {
            violations_total += 1;
        }
        let mut m = Map::new();
        m.insert("r", num(r));
        m.insert("value", num(cb.value));
        m.insert("quad_error", num(cb.quad_error));
        m.insert("log_f", num(lf));
        counting.push(Value::Object(m));
    }
    body.insert("counting_bound", Value::Array(counting));

    // Genus-zero comparison at large |z|.
    let mut genus = Vec::new();
    if c_growth.is_finite() {
        for &z in &[10.0, 100.0] {
            let gz = profile.log_genus_zero_bound(c_growth, 1.0, z)?;
            let gb = profile.log_growth_bound(c_growth, z)?;
            let mut m = Map::new();
            m.insert("z", num(z));
            m.insert("log_genus_zero", num(gz));
            m.insert("log_growth", num(gb));
            m.insert("tighter", Value::Bool(gz <= gb));
            genus.push(Value::Object(m));
        }
    }
    body.insert("genus_zero", Value::Array(genus));

    // Order bounds for the configured class and the beta sweep.
    let mut orders = Vec::new();
    for gamma in [1.1, 1.5, 2.0, 4.0] {
        let mut m = Map::new();
        m.insert("gamma", num(gamma));
        match order_bound(&res.m_seq, gamma, res.map.lambda()) {
            Ok(v) => {
                m.insert("order", num(v));
            }
            Err(_) => {
                m.insert("order", Value::String("inconclusive".into()));
            }
        }
        orders.push(Value::Object(m));
    }
    body.insert("order_bound", Value::Array(orders));

    let mut beta_sweep = Vec::new();
    for beta in [1.5, 2.0, 2.5] {
        let m_ab = ruelle_core::dc_class::MSequence::alpha_beta(
            std::f64::consts::LN_2,
            beta,
            res.m_seq.k_max(),
        )?;
        let mut m = Map::new();
        m.insert("beta", num(beta));
        // gamma slightly above e^alpha certifies at beta = 2; below never.
        let gamma = 2.1;
        match order_bound(&m_ab, gamma, res.map.lambda()) {
            Ok(v) => {
                m.insert("order", num(v));
            }
            Err(_) => {
                m.insert("order", Value::String("inconclusive".into()));
            }
        }
        beta_sweep.push(Value::Object(m));
    }
    body.insert("beta_threshold", Value::Array(beta_sweep));

    // Gevrey sigma = 2 envelope fit of the sv-bound machinery.
    let gev = ruelle_core::dc_class::MSequence::gevrey(2.0, res.m_seq.k_max())?;
    let ms: Vec<usize> = (1..=160).collect();
    let envp: Vec<f64> = ms
        .iter()
        .map(|&m| ruelle_core::aniso_space::sv_envelope(&gev, res.config.theta, 1.0, m))
        .collect();
    let mut c_fit = f64::NAN;
    'gev: for c in log_grid(1e-1, 1e3, 64) {
        for (&m, &e) in ms.iter().zip(&envp) {
            let bound = ruelle_core::bounds::class_envelope(
                EnvelopeKind::GevreySv { sigma: 2.0 },
                c,
                m as f64,
            )?;
            if e > bound * (1.0 + 1e-9) {
                continue 'gev;
            }
        }
        c_fit = c;
        break;
    }
    if !c_fit.is_finite() {
        violations_total += 1;
    }
    let mut gevrey = Map::new();
    gevrey.insert("sigma", num(2.0));
    gevrey.insert("c", num(c_fit));
    body.insert("gevrey_sv_envelope", Value::Object(gevrey));
    let mut csv = String::from("m,envelope,fitted\n");
    for (&m, &e) in ms.iter().zip(&envp) {
        let fitted = if c_fit.is_finite() {
            ruelle_core::bounds::class_envelope(
                EnvelopeKind::GevreySv { sigma: 2.0 },
                c_fit,
                m as f64,
            )?
        } else {
            f64::NAN
        };
        csv.push_str(&format!("{},{},{}\n", m, fmt_e17(e), fmt_e17(fitted)));
    }
    write_artifact(&plots, "gevrey_envelope.csv", &csv)?;
    gnuplot_pair(
        &plots,
        "gevrey_envelope",
        "gevrey sup-envelope",
        ("measured", "fit"),
    )?;

    // Singular values against their fitted envelope, as a plot pair.
    let svals = singular_values(stage.h.matrix());
    let svb = check_sv_bound(&svals, &res.m_seq, res.config.theta);
    violations_total += svb.violations;
    let mut csv = String::from("k,sigma,bound\n");
    for &(k, s, b, _) in &svb.rows {
        csv.push_str(&format!("{},{},{}\n", k, fmt_e17(s), fmt_e17(b)));
    }
    write_artifact(&plots, "singular_values.csv", &csv)?;
    gnuplot_pair(
        &plots,
        "singular_values",
        "singular values",
        ("measured", "bound"),
    )?;

    body.insert("violations_total", int(violations_total));
    write_artifact(
        out,
        "bounds_report.json",
        &to_string(&envelope(&res.config_hash, body)),
    )?;
    Ok(if violations_total == 0 { 0 } else { 1 })
}

// --------------------------------------------------------------- verify --

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

pub fn verify(res: &Resolved) -> anyhow::Result<i32> {
    let mut checks: Vec<Check> = Vec::new();
    let theta = res.config.theta;

    // Weight function invariants.
    {
        let grid = log_grid(1e-6, 5.0, 120);
        let mut monotone = true;
        let mut k_monotone = true;
        let mut prev_w = f64::NEG_INFINITY;
        let mut prev_k = usize::MAX;
        for &x in &grid {
            let e = res.m_seq.weight_w(x);
            monotone &= e.log_w >= prev_w - 1e-12;
            k_monotone &= e.k_of_x <= prev_k;
            prev_w = e.log_w;
            prev_k = e.k_of_x;
        }
        checks.push(check("weight_monotone", monotone, String::new()));
        checks.push(check(
            "weight_minimizer_monotone",
            k_monotone,
            String::new(),
        ));

        let mut vanishing = true;
        for &a in &[1.0, 2.0, 5.0] {
            let mut prev = f64::INFINITY;
            for j in 1..=6 {
                let x = 10f64.powi(-j);
                let v = -a * x.ln() + res.m_seq.weight_w(x).log_w;
                vanishing &= v <= prev + 1e-12;
                prev = v;
            }
        }
        checks.push(check(
            "weight_vanishes_all_orders",
            vanishing,
            String::new(),
        ));

        let mut ratio_ok = true;
        for &x in &[0.05, 0.1, 0.5] {
            if let Ok(r) = res.m_seq.decay_ratio(0.5, x) {
                let k = res.m_seq.weight_w(x).k_of_x;
                ratio_ok &= r <= 0.5f64.powi(k as i32) + 1e-12;
            }
        }
        checks.push(check("decay_ratio_bound", ratio_ok, String::new()));
    }

    // Majorant invariants on pseudo-random sequences.
    {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut ok = true;
        for _ in 0..200 {
            let len = 2 + (next() * 18.0) as usize;
            let a: Vec<f64> = (0..len)
                .map(|_| if next() < 0.2 { 0.0 } else { next() * 10.0 })
                .collect();
            match ruelle_core::dc_class::log_convex_majorant(&a) {
                Ok((c, b)) => {
                    for (k, &v) in a.iter().enumerate() {
                        ok &= v <= c * b.value(k) * (1.0 + 1e-9);
                    }
                    for k in 1..b.k_max() {
                        ok &=
                            2.0 * b.log_value(k) <= b.log_value(k - 1) + b.log_value(k + 1) + 1e-9;
                    }
                }
                Err(_) => ok = false,
            }
        }
        checks.push(check(
            "majorant_invariants",
            ok,
            "200 random sequences".into(),
        ));
    }

    // Map invariants.
    {
        let mut state = 0x6a09e667f3bcc909u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut ok = true;
        for _ in 0..100 {
            let y = next();
            for r in res.map.inverse_branches(y)? {
                let (ty, _) = res.map.evaluate(r);
                let d = (ty - y).rem_euclid(1.0);
                ok &= d.min(1.0 - d) < 1e-12;
            }
        }
        checks.push(check("branch_consistency", ok, "100 random targets".into()));

        let n = res.config.n_traces.min(6);
        let orbits = res.map.periodic_points(n)?;
        let lam = res.map.lambda();
        let mut ok = true;
        for p in &orbits.points {
            ok &= p.deriv.abs() >= lam.powi(n as i32) - 1e-9;
            let image = res.map.evaluate(p.x).0;
            ok &= orbits.points.iter().any(|q| {
                let d = (q.x - image).rem_euclid(1.0);
                d.min(1.0 - d) < 1e-10
            });
        }
        let doubled = res.map.periodic_points(2 * n)?;
        for p in &orbits.points {
            ok &= doubled.points.iter().any(|q| {
                let d = (q.x - p.x).rem_euclid(1.0);
                d.min(1.0 - d) < 1e-10
            });
        }
        checks.push(check(
            "orbit_invariants",
            ok,
            format!("period {n}: {} points", orbits.count()),
        ));
    }

    // Matrix invariants at the smaller working size.
    let k_small = res.config.k_list[0].min(32);
    {
        let mx = ruelle_core::transfer_op::assemble_matrix(&res.map, res.psi.as_ref(), k_small)?;
        let kk = k_small as i64;
        let mut row0 = true;
        for l in -kk..=kk {
            let expected = match &res.psi {
                None => {
                    if l == 0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }
                Some(psi) => psi
                    .coeffs()
                    .iter()
                    .find(|(n, _)| *n == -l)
                    .map(|&(_, c)| c.conj())
                    .unwrap_or_default(),
            };
            row0 &= (mx.entry(0, l) - expected).norm() < 1e-12;
        }
        checks.push(check("matrix_row_zero", row0, String::new()));

        let mut sym = true;
        for k in -kk..=kk {
            for l in -kk..=kk {
                sym &= (mx.entry(-k, -l) - mx.entry(k, l).conj()).norm() < 1e-12;
            }
        }
        checks.push(check("matrix_reality_symmetry", sym, String::new()));

        let q = mx.quad_size();
        let mx2 = ruelle_core::transfer_op::assemble_matrix_with_quad(
            &res.map,
            res.psi.as_ref(),
            k_small,
            2 * q,
        )?;
        let mut worst = 0.0f64;
        for k in -kk..=kk {
            for l in -kk..=kk {
                worst = worst.max((mx.entry(k, l) - mx2.entry(k, l)).norm());
            }
        }
        checks.push(check(
            "quadrature_stability",
            worst < 1e-12,
            format!("doubling Q moved entries by {worst:.2e}"),
        ));
    }

    // Bound fits with zero violations.
    let k_top = *res.config.k_list.last().unwrap();
    let stage = build_stage(res, k_top)?;
    {
        let decay = verify_entry_decay(&stage.mx, &res.m_seq, theta);
        checks.push(check(
            "entry_decay_fit",
            decay.violations == 0,
            format!("C = {:.3e}, R = {:.3e}", decay.c, decay.r),
        ));
        if let Some(cal) = &stage.calibration {
            checks.push(check(
                "block_norm_fit",
                cal.violations == 0,
                format!("R = {:.3e}, C = {:.3e}", cal.r, cal.c),
            ));
        }
        let cauchy = cauchy_check(&stage.h, &res.m_seq)?;
        checks.push(check(
            "cauchy_fit",
            cauchy.violations == 0,
            format!("C = {:.3e}", cauchy.c),
        ));
        let (_, monotone) = stage.scaling.h_ratio_diagnostic();
        checks.push(check("h_ratio_monotone", monotone, String::new()));

        let svals = singular_values(stage.h.matrix());
        let svb = check_sv_bound(&svals, &res.m_seq, theta);
        checks.push(check(
            "sv_bound_fit",
            svb.violations == 0,
            format!("C = {:.3e}, A = {:.3e}", svb.c, svb.a),
        ));

        let n_blocks = stage.scaling.n_blocks();
        let (a, b) = split_cb(&stage.h, n_blocks - 1)?;
        let norms = nilpotent_norms(&b, n_blocks);
        checks.push(check(
            "nilpotency",
            *norms.last().unwrap() == 0.0,
            format!("||B^{n_blocks}|| = {:.2e}", norms.last().unwrap()),
        ));

        let full = &a + &b;
        let mut worst = 0.0f64;
        for &z in &unit_disk_points(20) {
            let lhs = npd_determinant(&a, &b, z);
            let rhs = fredholm_det(&full, z);
            worst = worst.max((lhs - rhs).norm());
        }
        checks.push(check(
            "npd_identity",
            worst < 1e-10,
            format!("max |diff| = {worst:.2e}"),
        ));

        let diff = &full - stage.h.matrix();
        checks.push(check(
            "split_reconstruction",
            diff.iter().all(|z| z.norm() == 0.0),
            String::new(),
        ));
    }

    // Route agreements.
    {
        let n = res.config.n_traces;
        let traces = res.map.flat_traces(res.psi.as_ref(), n)?;
        let orbit = det_series_from_traces(&traces);
        let eigen = det_from_truncation(stage.mx.matrix(), n);
        let diff = max_coeff_diff(&orbit, &eigen, n);
        checks.push(check(
            "route_agreement",
            diff < 1e-7,
            format!("max coefficient diff = {diff:.2e}"),
        ));

        let res_set = resonances(
            &res.map,
            res.psi.as_ref(),
            &res.m_seq,
            theta,
            &res.config.k_list,
        )?;
        if res.psi.is_none() {
            let gap = (res_set.values[0] - Complex64::new(1.0, 0.0)).norm();
            checks.push(check(
                "leading_resonance_is_one",
                gap < 1e-10,
                format!("|lambda_1 - 1| = {gap:.2e}"),
            ));
        }

        let radius = 1.02 / res_set.values.last().unwrap().norm();
        let zeros = zeros_of_d(&orbit, radius)?;
        let pts: Vec<Complex64> = zeros.iter().map(|z| z.z).collect();
        let gap = duality_gap(&pts, &res_set, radius, orbit.reliability_radius());
        checks.push(check(
            "zero_resonance_duality",
            gap < 1e-6,
            format!("max gap = {gap:.2e}, {} zeros", pts.len()),
        ));
    }

    // Bound-profile invariants.
    {
        let profile = BoundProfile::new(
            &res.m_seq,
            theta,
            res.map.lambda(),
            stage.scaling.r_weight(),
            None,
        )?;
        let mut ok = true;
        let mut prev = f64::INFINITY;
        for n in 0..16 {
            let g = profile.g(n)?;
            ok &= g <= prev * (1.0 + 1e-12);
            prev = g;
        }
        checks.push(check("g_monotone", ok, String::new()));

        let mut dominated = true;
        for &r in &[10.0, 100.0] {
            let cb = profile.counting_bound(r)?;
            dominated &= cb.value >= profile.log_f_product(r)? - 1e-9;
        }
        checks.push(check("counting_dominates_log_f", dominated, String::new()));

        let mut growth_monotone = true;
        let mut prev = 0.0f64;
        for &z in &[0.5, 1.0, 2.0, 5.0] {
            let v = profile.log_growth_bound(1.0, z)?;
            growth_monotone &= v >= prev - 1e-12;
            prev = v;
        }
        checks.push(check(
            "growth_bound_monotone",
            growth_monotone,
            String::new(),
        ));
    }

    // Emit.
    let mut failures = 0usize;
    let mut rows = Vec::new();
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        if !c.passed {
            failures += 1;
        }
        if c.detail.is_empty() {
            println!("{status} {}", c.name);
        } else {
            println!("{status} {} - {}", c.name, c.detail);
        }
        let mut m = Map::new();
        m.insert("name", Value::String(c.name.into()));
        m.insert("passed", Value::Bool(c.passed));
        m.insert("detail", Value::String(c.detail.clone()));
        rows.push(Value::Object(m));
    }
    let mut body = Map::new();
    body.insert("checks", Value::Array(rows));
    body.insert("failures", int(failures));
    write_artifact(
        &res.config.out_dir,
        "verify_report.json",
        &to_string(&envelope(&res.config_hash, body)),
    )?;
    println!("{} checks, {} failures", checks.len(), failures);
    Ok(if failures == 0 { 0 } else { 1 })
}

/// Maps library errors to the documented exit codes.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    if let Some(core) = err.downcast_ref::<Error>() {
        match core {
            Error::InvalidInput(_) | Error::InvalidSequence { .. } => 2,
            _ => 3,
        }
    } else {
        2
    }
}
