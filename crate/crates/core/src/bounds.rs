//! Explicit bound functions attached to a map/class profile: the step-ratio
//! sup `g`, the nuclear-tail envelope `f`, the entire functions `F` and `G`,
//! the determinant growth bound `F(C|z| G(C|z|))`, its genus-zero variant,
//! the canonical-product counting integral, the determinant order bound and
//! the named class envelopes.

use crate::aniso_space::{sv_envelope, weight_ratio_sup};
use crate::dc_class::MSequence;
use crate::error::{Error, Result};

/// Term cap for the adaptive products and sums.
const TERM_CAP: usize = 100_000;
/// A log-increment below this ends the adaptive extension.
const LOG_INCREMENT_TOL: f64 = 1e-14;

/// Evaluation profile: class data plus the geometry constants.
#[derive(Debug, Clone)]
pub struct BoundProfile {
    m_seq: MSequence,
    theta: f64,
    lambda: f64,
    /// Weight calibration R of the block norm bound.
    r_weight: f64,
    /// R' of the nuclear-tail envelope; the split-resolvent route gives
    /// R' = R theta^{-2}.
    r_prime: f64,
}

impl BoundProfile {
    pub fn new(
        m_seq: &MSequence,
        theta: f64,
        lambda: f64,
        r_weight: f64,
        r_prime: Option<f64>,
    ) -> Result<Self> {
        if !(theta > 1.0 && theta < lambda) {
            return Err(Error::InvalidInput(format!(
                "theta must lie in (1, lambda) = (1, {lambda}), got {theta}"
            )));
        }
        if !(r_weight > 0.0) {
            return Err(Error::InvalidInput("R must be positive".into()));
        }
        let r_prime = r_prime.unwrap_or(r_weight / (theta * theta));
        if !(r_prime > 0.0) {
            return Err(Error::InvalidInput("R' must be positive".into()));
        }
        Ok(Self {
            m_seq: m_seq.clone(),
            theta,
            lambda,
            r_weight,
            r_prime,
        })
    }

    pub fn m_seq(&self) -> &MSequence {
        &self.m_seq
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn r_weight(&self) -> f64 {
        self.r_weight
    }

    pub fn r_prime(&self) -> f64 {
        self.r_prime
    }

    /// `alpha = log lambda / log theta`.
    pub fn alpha_exp(&self) -> f64 {
        self.lambda.ln() / self.theta.ln()
    }

    /// `g(n) = sup_{m > n} w(R/theta^m) / w(R/theta^{m-1})`.
    pub fn g(&self, n: usize) -> Result<f64> {
        weight_ratio_sup(&self.m_seq, self.r_weight, self.theta, n)
    }

    /// `f(x) = x^alpha w(R'/x)`; saturation of the weight is an error here.
    pub fn f(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::InvalidInput(format!("f needs x > 0, got {x}")));
        }
        let eval = self.m_seq.weight_w(self.r_prime / x);
        if eval.saturated {
            return Err(Error::Saturated {
                x: self.r_prime / x,
                k_max: self.m_seq.k_max(),
            });
        }
        Ok((self.alpha_exp() * x.ln() + eval.log_w).exp())
    }

    /// `f` tolerating saturation: the truncated weight only overestimates,
    /// which keeps every bound built on it conservative. `f_raw(0) = 0`.
    fn f_raw(&self, m: usize) -> f64 {
        if m == 0 {
            return 0.0;
        }
        let x = m as f64;
        (self.alpha_exp() * x.ln() + self.m_seq.weight_w(self.r_prime / x).log_w).exp()
    }

    /// `log F(r)` for `F(r) = prod_m (1 + f(m) r)`.
    pub fn log_f_product(&self, r: f64) -> Result<f64> {
        log_product_one_plus(|m| self.f_raw(m), r, "F")
    }

    /// `F(r)`, possibly overflowing to `inf` for extreme arguments.
    pub fn f_product(&self, r: f64) -> Result<f64> {
        Ok(self.log_f_product(r)?.exp())
    }

    /// `log G(r)` for `G(r) = sum_n (prod_{k<n} g(k)) r^n`; terms must turn
    /// decreasing before the cap.
    pub fn log_g_sum(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::InvalidInput(format!("G needs r >= 0, got {r}")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        let lr = r.ln();
        // Running log-term: ln(prod g(k) r^n); Kahan-free since few terms.
        let mut log_term = 0.0f64;
        let mut peak = 0.0f64;
        let mut tail: Vec<f64> = vec![0.0];
        let mut decreasing_seen = false;
        for n in 0..TERM_CAP {
            let g = self.g(n)?;
            let next = log_term + g.ln() + lr;
            if next < log_term {
                decreasing_seen = true;
            }
            if next < peak - 36.0 {
                // exp(-36) < 1e-15 of the peak term: converged.
                return Ok(log_sum(&tail));
            }
            log_term = next;
            peak = peak.max(log_term);
            tail.push(log_term);
            if !decreasing_seen && n + 1 == TERM_CAP {
                break;
            }
        }
        Err(Error::SeriesNonConvergence {
            name: "G".into(),
            cap: TERM_CAP,
            arg: r,
        })
    }

    pub fn g_sum(&self, r: f64) -> Result<f64> {
        Ok(self.log_g_sum(r)?.exp())
    }

    /// Growth bound `F(C |z| G(C |z|))` in log form.
    pub fn log_growth_bound(&self, c: f64, z_abs: f64) -> Result<f64> {
        if !(z_abs >= 0.0) || !(c > 0.0) {
            return Err(Error::InvalidInput(
                "growth bound needs c > 0 and |z| >= 0".into(),
            ));
        }
        if z_abs == 0.0 {
            return Ok(0.0);
        }
        let log_arg = (c * z_abs).ln() + self.log_g_sum(c * z_abs)?;
        if log_arg > 700.0 {
            return Err(Error::SeriesNonConvergence {
                name: "growth-bound argument".into(),
                cap: TERM_CAP,
                arg: z_abs,
            });
        }
        self.log_f_product(log_arg.exp())
    }

    pub fn growth_bound(&self, c: f64, z_abs: f64) -> Result<f64> {
        Ok(self.log_growth_bound(c, z_abs)?.exp())
    }

    /// Genus-zero product bound
    /// `(1 + C|z|) prod_{k>=1} (1 + C|z| sup_{x<=1/k} w(Ax)/w(theta Ax))`,
    /// in log form.
    pub fn log_genus_zero_bound(&self, c: f64, a: f64, z_abs: f64) -> Result<f64> {
        if z_abs == 0.0 {
            return Ok(0.0);
        }
        let cz = c * z_abs;
        log_product_one_plus(
            |k| {
                if k == 0 {
                    1.0
                } else {
                    sv_envelope(&self.m_seq, self.theta, a, k)
                }
            },
            cz,
            "genus-zero product",
        )
    }

    /// Counting-integral bound on `log F(r)`:
    /// `int_0^r n(s)/s ds + r int_r^inf n(s)/s^2 ds` with
    /// `n(s) = #{m : 1/f(m) <= s}`, by trapezoid rule on a log grid.
    pub fn counting_bound(&self, r: f64) -> Result<CountingBound> {
        if !(r > 0.0) {
            return Err(Error::InvalidInput(format!(
                "counting bound needs r > 0, got {r}"
            )));
        }
        // Collect jump points 1/f(m) up to the working ceiling; f is
        // eventually decreasing so three sub-threshold values in a row end
        // the scan.
        let mut ceiling = r * 1e6;
        let mut jumps: Vec<f64> = Vec::new();
        let mut below = 0usize;
        for m in 1..TERM_CAP {
            let fm = self.f_raw(m);
            if fm <= 0.0 || 1.0 / fm > ceiling {
                below += 1;
                if below >= 3 && m > 8 {
                    break;
                }
            } else {
                below = 0;
                jumps.push(1.0 / fm);
            }
            if m + 1 == TERM_CAP {
                return Err(Error::SeriesNonConvergence {
                    name: "counting jumps".into(),
                    cap: TERM_CAP,
                    arg: r,
                });
            }
        }
        jumps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let count_below = |s: f64| -> f64 { jumps.partition_point(|&j| j <= s) as f64 };

        if jumps.is_empty() {
            return Ok(CountingBound {
                value: 0.0,
                quad_error: 0.0,
                levels: 0,
            });
        }

        // First integral: from the first jump (n = 0 before it) to r.
        let s_lo = jumps[0];
        let inner = if s_lo < r {
            trapezoid_log(&count_below, s_lo, r)
        } else {
            (0.0, 0.0, 0)
        };

        // Tail integral r * int_r^S n(s)/s^2 ds, S doubled until the
        // increment falls below 1e-12 of the running value.
        let mut tail = 0.0f64;
        let mut tail_err = 0.0f64;
        let mut lo = r;
        let mut levels = inner.2;
        loop {
            let hi = lo * 4.0;
            let (seg, err, lv) = trapezoid_log(&|s: f64| count_below(s) / s, lo, hi);
            tail += r * seg;
            tail_err += r * err;
            levels = levels.max(lv);
            let total = inner.0 + tail;
            if r * seg < 1e-12 * total.max(1e-300) && hi > ceiling.min(*jumps.last().unwrap()) {
                break;
            }
            lo = hi;
            if hi > 1e280 {
                break;
            }
            if hi > ceiling * 1e3 {
                // All jumps long passed; the remaining integrand is
                // n_total/s^2 with exact tail n_total * r / hi.
                tail += r * jumps.len() as f64 / hi;
                break;
            }
            ceiling = ceiling.max(hi);
        }

        Ok(CountingBound {
            value: inner.0 + tail,
            quad_error: inner.1 + tail_err,
            levels,
        })
    }
}

/// Result of the counting-integral quadrature.
#[derive(Debug, Clone, Copy)]
pub struct CountingBound {
    pub value: f64,
    /// Difference between the two finest trapezoid levels.
    pub quad_error: f64,
    pub levels: usize,
}

/// `log prod_m (1 + t(m) r)` with adaptive cutoff.
fn log_product_one_plus(term: impl Fn(usize) -> f64, r: f64, name: &str) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidInput(format!("{name} needs r >= 0, got {r}")));
    }
    let mut acc = 0.0f64;
    for m in 0..TERM_CAP {
        let inc = (term(m) * r).ln_1p();
        acc += inc;
        if m > 0 && inc < LOG_INCREMENT_TOL {
            return Ok(acc);
        }
    }
    Err(Error::SeriesNonConvergence {
        name: name.into(),
        cap: TERM_CAP,
        arg: r,
    })
}

/// `ln sum exp(terms)`.
fn log_sum(log_terms: &[f64]) -> f64 {
    let peak = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak.is_infinite() {
        return peak;
    }
    let s: f64 = log_terms.iter().map(|t| (t - peak).exp()).sum();
    peak + s.ln()
}

/// Trapezoid rule for `int f(s)/s ds` on `[lo, hi]` via the log substitution,
/// refined until two successive levels agree to 1e-12 relative. Returns
/// `(value, level difference, levels used)`.
fn trapezoid_log(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64, usize) {
    assert!(lo > 0.0 && hi > lo);
    let (tlo, thi) = (lo.ln(), hi.ln());
    let mut prev = f64::NAN;
    let mut value = 0.0f64;
    let mut err = f64::INFINITY;
    let mut levels = 0usize;
    let mut n = 16usize;
    while n <= 1 << 16 {
        let h = (thi - tlo) / n as f64;
        let mut acc = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            acc += f((tlo + h * i as f64).exp());
        }
        value = acc * h;
        levels += 1;
        if !prev.is_nan() {
            err = (value - prev).abs();
            if err < 1e-12 * value.abs().max(1.0) {
                break;
            }
        }
        prev = value;
        n *= 2;
    }
    (value, err, levels)
}

/// Determinant order bound `log gamma / log lambda`, requiring a conclusive
/// derivative-growth check for gamma.
pub fn order_bound(m_seq: &MSequence, gamma: f64, lambda: f64) -> Result<f64> {
    let check = m_seq.check_gentil(gamma)?;
    if !check.conclusive {
        return Err(Error::InconclusiveGentil { gamma });
    }
    if !(lambda > 1.0) {
        return Err(Error::InvalidInput(format!(
            "order bound needs lambda > 1, got {lambda}"
        )));
    }
    Ok(gamma.ln() / lambda.ln())
}

/// Named asymptotic envelopes from the worked class families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeKind {
    /// Singular values of a Gevrey-sigma class: `c exp(-m^{1/sigma}/c)`.
    GevreySv { sigma: f64 },
    /// Lower bound on the minimizer index: `|ln x|^{1/(beta-1)}/c - c`.
    AbKLower { beta: f64 },
    /// Determinant growth: `c exp(c (log_+ z)^{beta-1})`.
    AbDetGrowth { beta: f64 },
}

pub fn class_envelope(kind: EnvelopeKind, c: f64, arg: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput("envelope constant must be > 0".into()));
    }
    match kind {
        EnvelopeKind::GevreySv { sigma } => {
            if !(sigma >= 1.0) {
                return Err(Error::InvalidInput("gevrey_sv needs sigma >= 1".into()));
            }
            Ok(c * (-arg.powf(1.0 / sigma) / c).exp())
        }
        EnvelopeKind::AbKLower { beta } => {
            if !(beta > 1.0) {
                return Err(Error::InvalidInput(
                    "ab_k_lower needs beta > 1 (beta = 1 is the analytic case)".into(),
                ));
            }
            if !(arg > 0.0 && arg < 1.0) {
                return Err(Error::InvalidInput("ab_k_lower needs 0 < x < 1".into()));
            }
            Ok(arg.ln().abs().powf(1.0 / (beta - 1.0)) / c - c)
        }
        EnvelopeKind::AbDetGrowth { beta } => {
            if !(beta > 1.0) {
                return Err(Error::InvalidInput(
                    "ab_det_growth needs beta > 1 (beta = 1 is the analytic case)".into(),
                ));
            }
            let logp = arg.max(1.0).ln();
            Ok(c * (c * logp.powf(beta - 1.0)).exp())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dc_class::log_grid;

    fn analytic_profile() -> BoundProfile {
        let m = MSequence::analytic(256).unwrap();
        BoundProfile::new(&m, 1.5, 2.0, 1.0, None).unwrap()
    }

    #[test]
    fn profile_constants() {
        let p = analytic_profile();
        assert!((p.alpha_exp() - 2.0f64.ln() / 1.5f64.ln()).abs() < 1e-15);
        assert!((p.alpha_exp() - 1.7095).abs() < 1e-4);
        assert!((p.r_prime() - 1.0 / 2.25).abs() < 1e-15);
    }

    #[test]
    fn g_is_monotone_and_decaying() {
        let p = analytic_profile();
        let mut prev = f64::INFINITY;
        for n in 0..24 {
            let g = p.g(n).unwrap();
            assert!(g <= prev * (1.0 + 1e-12), "g not monotone at {n}");
            assert!(g > 0.0);
            prev = g;
        }
        assert!(p.g(20).unwrap() < p.g(0).unwrap() * 1e-3);
        // Purity: repeated evaluation is identical.
        assert_eq!(p.g(7).unwrap(), p.g(7).unwrap());
    }

    #[test]
    fn gevrey_g_decays_linearly_in_log() {
        // log g(N) should fall roughly linearly for the Gevrey-2 class.
        let m = MSequence::gevrey(2.0, 400).unwrap();
        let p = BoundProfile::new(&m, 1.5, 2.0, 1.0, None).unwrap();
        let pts: Vec<(f64, f64)> = (5..60).map(|n| (n as f64, p.g(n).unwrap().ln())).collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|q| q.0).sum();
        let sy: f64 = pts.iter().map(|q| q.1).sum();
        let sxx: f64 = pts.iter().map(|q| q.0 * q.0).sum();
        let sxy: f64 = pts.iter().map(|q| q.0 * q.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(slope < -0.01, "expected negative decay slope, got {slope}");
    }

    #[test]
    fn f_values_and_crossover() {
        let p = analytic_profile();
        // f(R') = R'^alpha w(1) = R'^alpha for the analytic class.
        let rp = p.r_prime();
        let f = p.f(rp).unwrap();
        assert!((f - rp.powf(p.alpha_exp())).abs() < 1e-12);

        // Eventually decreasing: once k(R'/x) > alpha, f(2x) <= f(x).
        let alpha = p.alpha_exp();
        for &x in &[2.0f64, 4.0, 8.0, 16.0] {
            let k = p.m_seq().weight_w(p.r_prime() / x).k_of_x as f64;
            if k > alpha {
                assert!(
                    p.f(2.0 * x).unwrap() <= p.f(x).unwrap() * (1.0 + 1e-12),
                    "f not decreasing at x={x}"
                );
            }
        }

        // Saturation error.
        let small = MSequence::analytic(8).unwrap();
        let p_small = BoundProfile::new(&small, 1.5, 2.0, 1.0, None).unwrap();
        assert!(matches!(p_small.f(1e5), Err(Error::Saturated { .. })));
    }

    #[test]
    fn product_and_sum_trivial_values() {
        let p = analytic_profile();
        assert_eq!(p.log_f_product(0.0).unwrap(), 0.0);
        assert_eq!(p.log_g_sum(0.0).unwrap(), 0.0);
        assert!((p.f_product(0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((p.g_sum(0.0).unwrap() - 1.0).abs() < 1e-15);

        // Custom term function: f(0) = c, rest 0 gives F(r) = 1 + c r.
        let c = 0.7;
        let lf = log_product_one_plus(|m| if m == 0 { c } else { 0.0 }, 2.0, "test").unwrap();
        assert!((lf.exp() - (1.0 + c * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn log_f_grows_like_log_squared() {
        // Analytic profile: log F(r) ~ (log r)^2 up to constants; fit the
        // quadratic coefficient over decades and check it is stable.
        let p = analytic_profile();
        let mut ratios = Vec::new();
        for &r in &[1e1, 1e2, 1e3, 1e4, 1e5] {
            let lf = p.log_f_product(r).unwrap();
            ratios.push(lf / r.ln().powi(2));
        }
        for w in ratios.windows(2) {
            assert!(w[1] < w[0] * 2.5 && w[1] > w[0] * 0.2, "ratios {ratios:?}");
        }
    }

    #[test]
    fn growth_bound_monotone_and_positive() {
        let p = analytic_profile();
        assert_eq!(p.growth_bound(1.0, 0.0).unwrap(), 1.0);
        let mut prev = 0.0;
        for &z in &[0.5, 1.0, 2.0, 5.0, 10.0] {
            let b = p.growth_bound(1.0, z).unwrap();
            assert!(b >= prev, "growth bound must be non-decreasing");
            assert!(b >= 1.0);
            prev = b;
        }
    }

    #[test]
    fn counting_bound_dominates_log_f() {
        let p = analytic_profile();
        for &r in &[10.0, 100.0, 1000.0] {
            let cb = p.counting_bound(r).unwrap();
            let lf = p.log_f_product(r).unwrap();
            assert!(
                cb.value >= lf - 1e-9,
                "counting bound {} below log F {lf} at r={r}",
                cb.value
            );
        }
    }

    #[test]
    fn counting_bound_matches_exact_jump_formula() {
        // Oracle: for a step function n(s) the two integrals collapse to
        // sum_m [ln_+(r f(m)) + min(1, r f(m))].
        let p = analytic_profile();
        for &r in &[10.0, 100.0] {
            let mut exact = 0.0f64;
            for m in 1..4000usize {
                let fm = p.f_raw(m);
                if fm <= 0.0 {
                    continue;
                }
                let rf = r * fm;
                if rf > 1.0 {
                    exact += rf.ln();
                }
                exact += rf.min(1.0);
            }
            let cb = p.counting_bound(r).unwrap();
            assert!(
                (cb.value - exact).abs() < 1e-4 * exact.max(1.0),
                "r={r}: quadrature {} vs exact {exact}",
                cb.value
            );
        }
    }

    #[test]
    fn counting_bound_empty_range() {
        // Huge jumps: no m qualifies below r, tail negligible.
        let m = MSequence::analytic(64).unwrap();
        let p = BoundProfile::new(&m, 1.5, 2.0, 1e-6, None).unwrap();
        let cb = p.counting_bound(1e-9).unwrap();
        assert!(cb.value < 1e-6);
    }

    #[test]
    fn genus_zero_beats_growth_bound_at_large_z() {
        let p = analytic_profile();
        for &z in &[10.0, 100.0] {
            let gz = p.log_genus_zero_bound(1.0, 1.0, z).unwrap();
            let gb = p.log_growth_bound(1.0, z).unwrap();
            assert!(gz < gb, "genus-zero {gz} vs growth {gb} at z={z}");
        }
    }

    #[test]
    fn order_bound_values() {
        // alpha_beta(ln 2, 2) admits gamma slightly above e^alpha = 2;
        // at gamma = 2.05 and lambda = 2 the order bound sits near 1.
        let m = MSequence::alpha_beta(std::f64::consts::LN_2, 2.0, 256).unwrap();
        let b = order_bound(&m, 2.05, 2.0).unwrap();
        assert!((b - 2.05f64.ln() / 2.0f64.ln()).abs() < 1e-14);
        assert!((b - 1.0).abs() < 0.05);
        // Below e^alpha the check is inconclusive.
        assert!(matches!(
            order_bound(&m, 1.5, 2.0),
            Err(Error::InconclusiveGentil { .. })
        ));

        // Analytic class: gamma -> 1+ drives the bound toward 0 (order 0).
        // The peak of the gentil ratio sits near 1/ln(gamma), so certifying
        // small gamma needs k_max past it.
        let m = MSequence::analytic(2000).unwrap();
        let mut prev = f64::INFINITY;
        for gamma in [1.2, 1.05, 1.01] {
            let b = order_bound(&m, gamma, 2.0).unwrap();
            assert!(b < prev);
            prev = b;
        }
        assert!(prev < 0.02);

        // Gevrey sigma = 2 at gamma = 1.1, lambda = 2: 0.1375.
        let m = MSequence::gevrey(2.0, 256).unwrap();
        let b = order_bound(&m, 1.1, 2.0).unwrap();
        assert!((b - 0.1375).abs() < 1e-3);
    }

    #[test]
    fn envelope_values() {
        let v = class_envelope(EnvelopeKind::GevreySv { sigma: 1.0 }, 1.0, 4.0).unwrap();
        assert!((v - (-4.0f64).exp()).abs() < 1e-15);

        assert!(class_envelope(EnvelopeKind::AbKLower { beta: 1.0 }, 1.0, 0.5).is_err());
        assert!(class_envelope(EnvelopeKind::AbDetGrowth { beta: 1.0 }, 1.0, 2.0).is_err());

        // The k(x) lower envelope is dominated by the brute-forced k(x) for
        // the alpha_beta(1, 2) class once c is large enough.
        let m = MSequence::alpha_beta(1.0, 2.0, 512).unwrap();
        let c = 3.0;
        for x in log_grid(1e-6, 0.5, 24) {
            let k = m.weight_w(x).k_of_x as f64;
            let env = class_envelope(EnvelopeKind::AbKLower { beta: 2.0 }, c, x).unwrap();
            assert!(k >= env, "k(x) = {k} below envelope {env} at x = {x}");
        }
    }
}
