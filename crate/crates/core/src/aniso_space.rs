//! The anisotropic Hilbert space built over geometric frequency blocks:
//! block projectors, the weighted norm realized as a diagonal similarity of
//! the transfer matrix, the lower/upper block split, singular values and the
//! empirical block-norm, Cauchy and singular-value bound checks.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dc_class::{log_grid, MSequence};
use crate::error::{Error, Result};
use crate::par;
use crate::transfer_op::TransferMatrix;

/// Relative tolerance breaking flat stretches of a fitted-constant curve:
/// the smallest parameter within this factor of the minimum wins.
const FIT_TIE_REL: f64 = 1e-9;

/// Frequency block index: `n(0) = 0`, else `n(k) = floor(log|k| / log theta)`;
/// all of `1 <= |k| < theta` lands in block 0 next to the zero mode.
pub fn block_of(theta: f64, k: i64) -> usize {
    if k == 0 {
        return 0;
    }
    let a = k.abs() as f64;
    let mut n = (a.ln() / theta.ln()).floor().max(0.0) as i64;
    // Integer-safe correction of the float floor.
    while theta.powi((n + 1) as i32) <= a {
        n += 1;
    }
    while n > 0 && theta.powi(n as i32) > a {
        n -= 1;
    }
    n as usize
}

/// Block geometry and the H-norm weights `h_m = lambda^{-m} w(R/theta^{m-1})^{-1}`.
#[derive(Debug, Clone)]
pub struct BlockScaling {
    theta: f64,
    lambda: f64,
    r_weight: f64,
    k_cut: usize,
    /// `ln h_m` per block.
    log_h: Vec<f64>,
}

/// Outcome of the block-norm calibration of R.
#[derive(Debug, Clone)]
pub struct RCalibration {
    pub r: f64,
    pub c: f64,
    pub violations: usize,
    /// The grid C(R) curve, for reporting.
    pub curve: Vec<(f64, f64)>,
}

impl BlockScaling {
    /// Builds the scaling with an explicit weight calibration R.
    pub fn build(
        m_seq: &MSequence,
        theta: f64,
        lambda: f64,
        k_cut: usize,
        r_weight: f64,
    ) -> Result<Self> {
        if !(theta > 1.0 && theta < lambda) {
            return Err(Error::InvalidInput(format!(
                "theta must lie in (1, lambda) = (1, {lambda}), got {theta}"
            )));
        }
        if !(r_weight > 0.0) {
            return Err(Error::InvalidInput(format!(
                "weight calibration R must be positive, got {r_weight}"
            )));
        }
        let n_blocks = block_of(theta, k_cut as i64) + 1;
        let log_h: Vec<f64> = (0..n_blocks)
            .map(|m| {
                // m = 0 takes the theta^{-1} argument R*theta literally.
                let arg = r_weight / theta.powi(m as i32 - 1);
                -(m as f64) * lambda.ln() - m_seq.weight_w(arg).log_w
            })
            .collect();
        for &lh in &log_h {
            if lh.abs() > 700.0 {
                return Err(Error::WeightUnderflow { log_h: lh });
            }
        }
        Ok(Self {
            theta,
            lambda,
            r_weight,
            k_cut,
            log_h,
        })
    }

    /// Builds the scaling, calibrating R against the matrix block norms.
    pub fn calibrated(
        mx: &TransferMatrix,
        m_seq: &MSequence,
        theta: f64,
        lambda: f64,
    ) -> Result<(Self, RCalibration)> {
        if !(theta > 1.0 && theta < lambda) {
            return Err(Error::InvalidInput(format!(
                "theta must lie in (1, lambda) = (1, {lambda}), got {theta}"
            )));
        }
        let cal = calibrate_r(mx, m_seq, theta);
        let scaling = Self::build(m_seq, theta, lambda, mx.k_cut(), cal.r)?;
        Ok((scaling, cal))
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

    pub fn k_cut(&self) -> usize {
        self.k_cut
    }

    pub fn n_blocks(&self) -> usize {
        self.log_h.len()
    }

    pub fn block_of(&self, k: i64) -> usize {
        block_of(self.theta, k)
    }

    pub fn log_h(&self, m: usize) -> f64 {
        self.log_h[m]
    }

    pub fn h(&self, m: usize) -> f64 {
        self.log_h[m].exp()
    }

    /// `h_m / h_{m+1}` per block and whether the sequence certifies
    /// super-geometric decay (non-increasing ratios).
    pub fn h_ratio_diagnostic(&self) -> (Vec<f64>, bool) {
        let ratios: Vec<f64> = self.log_h.windows(2).map(|w| (w[0] - w[1]).exp()).collect();
        let monotone = ratios.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
        (ratios, monotone)
    }
}

/// The matrix of the operator in an orthonormal basis of H:
/// `entry_H(k, l) = h_{n(k)} entry(k, l) / h_{n(l)}`.
#[derive(Debug, Clone)]
pub struct HMatrix {
    entries: DMatrix<Complex64>,
    scaling: BlockScaling,
}

impl HMatrix {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn scaling(&self) -> &BlockScaling {
        &self.scaling
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entry(&self, k: i64, l: i64) -> Complex64 {
        let kk = self.scaling.k_cut() as i64;
        self.entries[((k + kk) as usize, (l + kk) as usize)]
    }
}

/// Applies the diagonal block similarity in log-magnitude-safe form.
pub fn h_matrix(mx: &TransferMatrix, scaling: &BlockScaling) -> Result<HMatrix> {
    assert_eq!(
        mx.k_cut(),
        scaling.k_cut(),
        "scaling was built over a different frequency window"
    );
    let dim = mx.dim();
    let kk = mx.k_cut() as i64;
    let mut entries = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..dim {
        let bk = scaling.block_of(i as i64 - kk);
        for j in 0..dim {
            let bl = scaling.block_of(j as i64 - kk);
            let raw = mx.matrix()[(i, j)];
            let mag = raw.norm();
            if mag == 0.0 {
                continue;
            }
            let log_scaled = mag.ln() + scaling.log_h(bk) - scaling.log_h(bl);
            if log_scaled > 700.0 {
                return Err(Error::WeightUnderflow {
                    log_h: scaling.log_h(bk) - scaling.log_h(bl),
                });
            }
            entries[(i, j)] = (raw / mag) * log_scaled.exp();
        }
    }
    Ok(HMatrix {
        entries,
        scaling: scaling.clone(),
    })
}

/// Spectral norm of the sub-block (rows in block m, cols in block n).
fn block_norm(mx: &DMatrix<Complex64>, theta: f64, k_cut: usize, m: usize, n: usize) -> f64 {
    let kk = k_cut as i64;
    let rows: Vec<usize> = (-kk..=kk)
        .filter(|&k| block_of(theta, k) == m)
        .map(|k| (k + kk) as usize)
        .collect();
    let cols: Vec<usize> = (-kk..=kk)
        .filter(|&k| block_of(theta, k) == n)
        .map(|k| (k + kk) as usize)
        .collect();
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let mut sub = DMatrix::<Complex64>::zeros(rows.len(), cols.len());
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            sub[(a, b)] = mx[(i, j)];
        }
    }
    spectral_norm(&sub)
}

/// Largest singular value; 0 for an all-zero matrix.
pub fn spectral_norm(mat: &DMatrix<Complex64>) -> f64 {
    if mat.iter().all(|z| z.norm() == 0.0) {
        return 0.0;
    }
    mat.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Grid-fits R in `||pi_m L pi_n|| <= C w(R/theta^m) theta^{(m+n)/2}` over
/// the lower-triangular block pairs. The fitted C is non-increasing in R, so
/// the reported R is the smallest grid point within relative 1e-9 of the
/// minimal C (the elbow of the curve).
pub fn calibrate_r(mx: &TransferMatrix, m_seq: &MSequence, theta: f64) -> RCalibration {
    let n_blocks = block_of(theta, mx.k_cut() as i64) + 1;
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for m in 0..n_blocks {
        for n in 0..=m {
            pairs.push((m, n, 0.0));
        }
    }
    let norms: Vec<f64> = par::map_slice(&pairs, |&(m, n, _)| {
        block_norm(mx.matrix(), theta, mx.k_cut(), m, n)
    });
    for (p, b) in pairs.iter_mut().zip(&norms) {
        p.2 = *b;
    }

    let r_grid = log_grid(5e-2, 5e1, 32);
    let curve: Vec<(f64, f64)> = par::map_slice(&r_grid, |&r| {
        let mut log_c = f64::NEG_INFINITY;
        for &(m, n, b) in &pairs {
            if b > 0.0 {
                let lw = m_seq.weight_w(r / theta.powi(m as i32)).log_w;
                log_c = log_c.max(b.ln() - lw - 0.5 * (m + n) as f64 * theta.ln());
            }
        }
        (r, log_c.exp())
    });
    let c_min = curve.iter().map(|&(_, c)| c).fold(f64::INFINITY, f64::min);
    let &(r, c) = curve
        .iter()
        .find(|&&(_, c)| c <= c_min * (1.0 + FIT_TIE_REL))
        .unwrap();

    let mut violations = 0usize;
    for &(m, n, b) in &pairs {
        if b > 0.0 {
            let bound = (c.ln() + m_seq.weight_w(r / theta.powi(m as i32)).log_w).exp()
                * theta.powf(0.5 * (m + n) as f64);
            if b > bound * (1.0 + 1e-9) {
                violations += 1;
            }
        }
    }
    RCalibration {
        r,
        c,
        violations,
        curve,
    }
}

/// Splits the block window `<= n_upper` of H into the block-lower-triangular
/// part `A` (row block >= col block) and the strictly block-upper part `B`.
pub fn split_cb(h: &HMatrix, n_upper: usize) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let n_blocks = h.scaling().n_blocks();
    if n_upper >= n_blocks {
        return Err(Error::InvalidInput(format!(
            "split level {n_upper} exceeds the {n_blocks} available blocks"
        )));
    }
    let dim = h.dim();
    let kk = h.scaling().k_cut() as i64;
    let mut a = DMatrix::<Complex64>::zeros(dim, dim);
    let mut b = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..dim {
        let bm = h.scaling().block_of(i as i64 - kk);
        if bm > n_upper {
            continue;
        }
        for j in 0..dim {
            let bn = h.scaling().block_of(j as i64 - kk);
            if bn > n_upper {
                continue;
            }
            if bm >= bn {
                a[(i, j)] = h.matrix()[(i, j)];
            } else {
                b[(i, j)] = h.matrix()[(i, j)];
            }
        }
    }
    Ok((a, b))
}

/// Full SVD spectrum, descending, with values below 1e-300 reported as 0.
pub fn singular_values(mat: &DMatrix<Complex64>) -> Vec<f64> {
    let sv = mat.clone().singular_values();
    let mut out: Vec<f64> = sv
        .iter()
        .map(|&s| if s < 1e-300 { 0.0 } else { s })
        .collect();
    out.sort_by(|x, y| y.partial_cmp(x).unwrap());
    out
}

/// Singular-value envelope `sup_{0 < x <= 1/k} w(a x) / w(theta a x)`,
/// brute-forced on a 64-point log grid.
pub fn sv_envelope(m_seq: &MSequence, theta: f64, a: f64, k: usize) -> f64 {
    assert!(k >= 1);
    let hi = 1.0 / k as f64;
    let lo = (hi * 1e-6).min(1e-8);
    let mut best = f64::NEG_INFINITY;
    for x in log_grid(lo, hi, 64) {
        let r = m_seq.weight_w(a * x).log_w - m_seq.weight_w(theta * a * x).log_w;
        best = best.max(r);
    }
    best.exp()
}

/// Report of the singular-value bound fit `sigma_k <= C * envelope_A(k)`.
#[derive(Debug, Clone)]
pub struct SvBoundReport {
    pub c: f64,
    pub a: f64,
    pub violations: usize,
    /// `(k, sigma_k, bound_k, log-slack)` rows for k >= 1.
    pub rows: Vec<(usize, f64, f64, f64)>,
}

/// Fits `(C, A)` by grid search so every `sigma_k` (k >= 1) sits below
/// `C sup_{x <= 1/k} w(Ax)/w(theta Ax)`; same elbow tie-breaking as
/// [`calibrate_r`].
pub fn check_sv_bound(svals: &[f64], m_seq: &MSequence, theta: f64) -> SvBoundReport {
    let constrained: Vec<(usize, f64)> = svals
        .iter()
        .cloned()
        .enumerate()
        .skip(1)
        .filter(|&(_, s)| s > 0.0)
        .collect();
    if constrained.is_empty() {
        return SvBoundReport {
            c: 0.0,
            a: 1.0,
            violations: 0,
            rows: Vec::new(),
        };
    }
    let a_grid = log_grid(1e-2, 1e2, 32);
    let fits: Vec<(f64, f64)> = par::map_slice(&a_grid, |&a| {
        let mut log_c = f64::NEG_INFINITY;
        for &(k, s) in &constrained {
            log_c = log_c.max(s.ln() - sv_envelope(m_seq, theta, a, k).ln());
        }
        (a, log_c)
    });
    let min_log_c = fits.iter().map(|&(_, c)| c).fold(f64::INFINITY, f64::min);
    let &(a, log_c) = fits
        .iter()
        .find(|&&(_, c)| c <= min_log_c + FIT_TIE_REL * min_log_c.abs().max(1.0))
        .unwrap();

    let mut violations = 0usize;
    let rows: Vec<(usize, f64, f64, f64)> = constrained
        .iter()
        .map(|&(k, s)| {
            let bound = (log_c + sv_envelope(m_seq, theta, a, k).ln()).exp();
            let slack = bound.ln() - s.ln();
            if slack < -1e-9 {
                violations += 1;
            }
            (k, s, bound, slack)
        })
        .collect();
    SvBoundReport {
        c: log_c.exp(),
        a,
        violations,
        rows,
    }
}

/// Spectral norms of `B^n` for n = 1..=n_max; exact zeros once n passes the
/// nilpotency degree of the truncation.
pub fn nilpotent_norms(b: &DMatrix<Complex64>, n_max: usize) -> Vec<f64> {
    let mut power = b.clone();
    let mut out = Vec::with_capacity(n_max);
    out.push(spectral_norm(&power));
    for _ in 1..n_max {
        power = &power * b;
        out.push(spectral_norm(&power));
    }
    out
}

/// Cauchy-difference report: `||A_M - A_N||_H` against the fitted multiple of
/// `sup_{m > N} w(R/theta^m) / w(R/theta^{m-1})`.
#[derive(Debug, Clone)]
pub struct CauchyReport {
    pub c: f64,
    pub violations: usize,
    /// `(N, M, norm, sup)` rows.
    pub rows: Vec<(usize, usize, f64, f64)>,
}

/// Sup of the single-step weight ratio over `m > n`, scanned until the decay
/// certifies (three successive non-increases) or both weights saturate.
pub(crate) fn weight_ratio_sup(m_seq: &MSequence, r: f64, theta: f64, n: usize) -> Result<f64> {
    let cap = 400usize;
    let mut sup = f64::NEG_INFINITY;
    let mut decreases = 0usize;
    let mut last = f64::INFINITY;
    for m in (n + 1)..=(n + cap) {
        let num = m_seq.weight_w(r / theta.powi(m as i32));
        let den = m_seq.weight_w(r / theta.powi(m as i32 - 1));
        let ratio = num.log_w - den.log_w;
        sup = sup.max(ratio);
        if num.saturated && den.saturated {
            // Constant from here on; the sup is final.
            return Ok(sup.exp());
        }
        if ratio <= last + 1e-12 {
            decreases += 1;
            if decreases >= 3 {
                return Ok(sup.exp());
            }
        } else {
            decreases = 0;
        }
        last = ratio;
    }
    Err(Error::SupremumCap {
        name: "weight step-ratio".into(),
        cap,
    })
}

/// Checks `||A_M - A_N||` against the weight-ratio sup for every pair
/// `N < M <= n_blocks - 1`, fitting the single constant C.
pub fn cauchy_check(h: &HMatrix, m_seq: &MSequence) -> Result<CauchyReport> {
    let n_blocks = h.scaling().n_blocks();
    let r = h.scaling().r_weight();
    let theta = h.scaling().theta();
    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
    let splits: Vec<DMatrix<Complex64>> = (0..n_blocks)
        .map(|n| split_cb(h, n).map(|(a, _)| a))
        .collect::<Result<_>>()?;
    for n in 0..n_blocks - 1 {
        let sup = weight_ratio_sup(m_seq, r, theta, n)?;
        for m in (n + 1)..n_blocks {
            let diff = &splits[m] - &splits[n];
            rows.push((n, m, spectral_norm(&diff), sup));
        }
    }
    let c = rows
        .iter()
        .filter(|&&(_, _, norm, sup)| sup > 0.0 && norm > 0.0)
        .map(|&(_, _, norm, sup)| norm / sup)
        .fold(0.0f64, f64::max);
    let violations = rows
        .iter()
        .filter(|&&(_, _, norm, sup)| norm > c * sup * (1.0 + 1e-9))
        .count();
    Ok(CauchyReport {
        c,
        violations,
        rows,
    })
}
