//! Dynamical determinants by three routes - periodic-orbit trace series,
//! eigenvalue products of stabilized truncations (regularized when needed),
//! and the split-resolvent formula `det(I - z (I - zB)^{-1} A)` - plus the
//! resonances they encode and the polynomial zero finder connecting them.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::aniso_space::{h_matrix, BlockScaling};
use crate::circle_map::{CircleMap, TrigPoly};
use crate::dc_class::MSequence;
use crate::error::{Error, Result};
use crate::par;
use crate::transfer_op::assemble_matrix;

/// Which pipeline produced a coefficient list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Orbit,
    Eigen,
    Npd,
}

impl Route {
    pub fn as_str(&self) -> &'static str {
        match self {
            Route::Orbit => "orbit",
            Route::Eigen => "eigen",
            Route::Npd => "npd",
        }
    }
}

/// Taylor coefficients `a_0..a_N` of `d(z)`, `a_0 = 1`.
#[derive(Debug, Clone)]
pub struct DeterminantSeries {
    pub coeffs: Vec<Complex64>,
    pub route: Route,
    pub n_traces: usize,
}

impl DeterminantSeries {
    pub fn order(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Evaluates the truncated polynomial at `z`.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    /// Largest radius where the final (first noisy) coefficient contributes
    /// less than 1e-10 of the leading terms, by log-grid scan. An exactly
    /// vanishing tail means the truncation is the whole function.
    pub fn reliability_radius(&self) -> f64 {
        let order = self.coeffs.len() - 1;
        let tail = self.coeffs[order].norm();
        if order == 0 || tail <= 1e-300 {
            return f64::INFINITY;
        }
        let mut best = 0.0f64;
        for r in crate::dc_class::log_grid(1e-3, 1e3, 400) {
            let peak = self
                .coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| c.norm() * r.powi(j as i32))
                .fold(0.0f64, f64::max);
            if tail * r.powi(order as i32) < 1e-10 * peak {
                best = best.max(r);
            }
        }
        best
    }
}

/// Truncated product of two power series.
fn series_mul(a: &[Complex64], b: &[Complex64], len: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (i, &ai) in a.iter().enumerate().take(len) {
        for (j, &bj) in b.iter().enumerate().take(len - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// `exp` of a power series with zero constant term, by the standard
/// recursion `m a_m = sum_{j=1..m} j u_j a_{m-j}`.
fn series_exp(u: &[Complex64]) -> Vec<Complex64> {
    let len = u.len();
    let mut a = vec![Complex64::new(0.0, 0.0); len];
    a[0] = Complex64::new(1.0, 0.0);
    for m in 1..len {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 1..=m {
            acc += Complex64::new(j as f64, 0.0) * u[j] * a[m - j];
        }
        a[m] = acc / m as f64;
    }
    a
}

/// `d(z) = exp(-sum_{n>=1} t_n z^n / n)` truncated at order `traces.len()`.
pub fn det_series_from_traces(traces: &[Complex64]) -> DeterminantSeries {
    let n = traces.len();
    let mut u = vec![Complex64::new(0.0, 0.0); n + 1];
    for (i, &t) in traces.iter().enumerate() {
        u[i + 1] = -t / (i + 1) as f64;
    }
    DeterminantSeries {
        coeffs: series_exp(&u),
        route: Route::Orbit,
        n_traces: n,
    }
}

/// Eigenvalue-product determinant: the order-m regularized product over the
/// supplied spectrum times the trace prefactor `exp(-sum_{n<m} t_n z^n / n)`.
/// Plain Fredholm product when `order_m == 1`.
pub fn det_from_eigenvalues(
    eigs: &[Complex64],
    order_m: usize,
    n_coeffs: usize,
    traces: Option<&[Complex64]>,
) -> Result<DeterminantSeries> {
    if order_m < 1 {
        return Err(Error::InvalidInput("order_m must be >= 1".into()));
    }
    let len = n_coeffs + 1;
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    acc[0] = Complex64::new(1.0, 0.0);
    for &lam in eigs {
        // (1 - lam z) * exp(sum_{r<m} (lam z)^r / r)
        let mut u = vec![Complex64::new(0.0, 0.0); len];
        for r in 1..order_m.min(len) {
            u[r] = lam.powu(r as u32) / r as f64;
        }
        let mut factor = series_exp(&u);
        // Multiply by (1 - lam z) in place.
        for j in (1..len).rev() {
            let shifted = factor[j - 1] * lam;
            factor[j] -= shifted;
        }
        acc = series_mul(&acc, &factor, len);
    }
    let n_traces = if order_m > 1 {
        let t = traces.ok_or(Error::MissingTraces {
            order: order_m,
            needed: order_m - 1,
        })?;
        if t.len() < order_m - 1 {
            return Err(Error::MissingTraces {
                order: order_m,
                needed: order_m - 1,
            });
        }
        let mut u = vec![Complex64::new(0.0, 0.0); len];
        for n in 1..order_m.min(len) {
            u[n] = -t[n - 1] / n as f64;
        }
        acc = series_mul(&acc, &series_exp(&u), len);
        order_m - 1
    } else {
        0
    };
    Ok(DeterminantSeries {
        coeffs: acc,
        route: Route::Eigen,
        n_traces,
    })
}

/// `det(I - z M)` by LU factorization.
pub fn fredholm_det(m: &DMatrix<Complex64>, z: Complex64) -> Complex64 {
    let dim = m.nrows();
    let shifted = DMatrix::<Complex64>::identity(dim, dim) - m * z;
    shifted.lu().determinant()
}

/// Taylor coefficients of `det(I - z M)` through order `n_coeffs`, by the
/// Newton identities on the matrix-power traces `tr(M^n)`.
///
/// This is the eigenvalue product `prod_i (1 - lambda_i z)` over the whole
/// truncation spectrum, but computed without extracting eigenvalues: traces
/// of powers are backward-stable, while the QR spectrum of these shift-like
/// truncations carries a pseudospectral noise ring that buries every
/// eigenvalue below roughly `eps^(1/chain length)`.
pub fn det_from_truncation(m: &DMatrix<Complex64>, n_coeffs: usize) -> DeterminantSeries {
    let mut traces = Vec::with_capacity(n_coeffs);
    let mut power = m.clone();
    for n in 0..n_coeffs {
        if n > 0 {
            power = &power * m;
        }
        traces.push(power.diagonal().sum());
    }
    let mut series = det_series_from_traces(&traces);
    series.route = Route::Eigen;
    series
}

/// Smallest n with `B^n == 0` exactly (structural nilpotency of the block
/// truncation), capped at the dimension.
pub fn nilpotency_degree(b: &DMatrix<Complex64>) -> usize {
    let dim = b.nrows();
    let mut power = b.clone();
    for n in 1..=dim {
        if power.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
            return n;
        }
        if n < dim {
            power = &power * b;
        }
    }
    dim + 1
}

/// `det(I - z (I - zB)^{-1} A)` with the resolvent expanded as the finite
/// Neumann sum over the nilpotent B.
pub fn npd_determinant(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, z: Complex64) -> Complex64 {
    let dim = a.nrows();
    assert_eq!(dim, b.nrows(), "split parts must share a dimension");
    let mut neumann = DMatrix::<Complex64>::identity(dim, dim);
    let mut power = DMatrix::<Complex64>::identity(dim, dim);
    loop {
        power = &power * b * z;
        if power.iter().all(|w| *w == Complex64::new(0.0, 0.0)) {
            break;
        }
        neumann += &power;
    }
    let m = &neumann * a;
    fredholm_det(&m, z)
}

/// Osborne balancing: diagonal powers-of-two similarity equalizing row and
/// column 1-norms. Eigenvalues are exactly preserved; the QR iteration
/// behind the Schur form needs this on matrices whose entries span many
/// orders of magnitude.
fn balance(mat: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = mat.nrows();
    let mut m = mat.clone();
    for _ in 0..16 {
        let mut moved = false;
        for i in 0..n {
            let mut col = 0.0f64;
            let mut row = 0.0f64;
            for j in 0..n {
                if j != i {
                    col += m[(j, i)].norm();
                    row += m[(i, j)].norm();
                }
            }
            if col == 0.0 || row == 0.0 {
                continue;
            }
            let f = ((row / col).sqrt().log2().round()).exp2();
            if f != 1.0 && f.is_finite() {
                moved = true;
                for j in 0..n {
                    m[(j, i)] *= f;
                    m[(i, j)] /= f;
                }
            }
        }
        if !moved {
            break;
        }
    }
    m
}

/// A deterministic pseudo-random unitary, for kicking structurally
/// degenerate matrices into generic position without moving the spectrum.
fn seeded_unitary(dim: usize, seed: u64) -> DMatrix<Complex64> {
    let mut state = seed | 1;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let g = DMatrix::<Complex64>::from_fn(dim, dim, |_, _| {
        // Box-Muller.
        let (u1, u2) = (next().max(1e-300), next());
        let r = (-2.0 * u1.ln()).sqrt();
        Complex64::new(
            r * (std::f64::consts::TAU * u2).cos(),
            r * (std::f64::consts::TAU * u2).sin(),
        )
    });
    g.qr().q()
}

/// Eigenvalues of a complex matrix via its Schur form.
///
/// The matrix is balanced first; if the QR iteration stalls (it has no
/// exceptional shifts and cycles on exactly shift-like structures), the
/// solve retries on a seeded unitary conjugation of the matrix, which
/// leaves the spectrum untouched.
pub fn eigenvalues(mat: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let dim = mat.nrows();
    let balanced = balance(mat);
    let budget = 8 * dim.max(32);
    let attempt = |m: DMatrix<Complex64>| -> Option<Vec<Complex64>> {
        nalgebra::linalg::Schur::try_new(m, f64::EPSILON, budget)
            .and_then(|s| s.eigenvalues())
            .map(|v| v.iter().cloned().collect())
    };
    if let Some(eigs) = attempt(balanced.clone()) {
        return Ok(eigs);
    }
    for seed in [
        0x9e3779b97f4a7c15u64,
        0xbf58476d1ce4e5b9,
        0x94d049bb133111eb,
    ] {
        let u = seeded_unitary(dim, seed);
        let conj = u.adjoint() * &balanced * &u;
        if let Some(eigs) = attempt(conj) {
            return Ok(eigs);
        }
    }
    Err(Error::EigenvalueFailure { dim })
}

/// Resonances stabilized across truncation sizes.
#[derive(Debug, Clone)]
pub struct ResonanceSet {
    /// Descending modulus.
    pub values: Vec<Complex64>,
    /// Relative drift between the two largest truncations, per value.
    pub stability: Vec<f64>,
    pub k_list: Vec<usize>,
}

/// Drift threshold for accepting an eigenvalue as converged.
pub const DRIFT_TOL: f64 = 1e-6;
/// Values smaller than this are truncation junk by fiat.
pub const DROP_TOL: f64 = 1e-10;

/// Greedy modulus-ordered matching between the eigenvalue sets of the two
/// largest truncations; keeps values whose relative drift stays below
/// `DRIFT_TOL` and whose modulus exceeds `DROP_TOL`.
pub fn stabilized_eigenvalues(sets: &[Vec<Complex64>], k_list: &[usize]) -> Result<ResonanceSet> {
    if sets.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two truncation sizes to stabilize".into(),
        ));
    }
    let mut current: Vec<Complex64> = sets[sets.len() - 1].clone();
    current.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
    let mut previous: Vec<Complex64> = sets[sets.len() - 2].clone();

    let mut values = Vec::new();
    let mut stability = Vec::new();
    for a in current {
        if a.norm() <= DROP_TOL {
            break;
        }
        // Nearest unused partner in the coarser truncation.
        let nearest = previous
            .iter()
            .enumerate()
            .min_by(|(_, x), (_, y)| (a - *x).norm().partial_cmp(&(a - *y).norm()).unwrap());
        if let Some((idx, &b)) = nearest {
            let drift = (a - b).norm() / a.norm();
            if drift < DRIFT_TOL {
                values.push(a);
                stability.push(drift);
                previous.swap_remove(idx);
            }
        }
    }
    if values.is_empty() {
        return Err(Error::NoConvergedResonances {
            k_list: k_list.to_vec(),
        });
    }
    Ok(ResonanceSet {
        values,
        stability,
        k_list: k_list.to_vec(),
    })
}

/// Full resonance pipeline: per-K matrix assembly, calibrated block scaling,
/// eigenvalues of the similarity-scaled truncation, cross-size stabilization.
pub fn resonances(
    map: &CircleMap,
    psi: Option<&TrigPoly>,
    m_seq: &MSequence,
    theta: f64,
    k_list: &[usize],
) -> Result<ResonanceSet> {
    if k_list.len() < 2 {
        return Err(Error::InvalidInput(
            "K list needs at least two ascending entries".into(),
        ));
    }
    if k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("K list must be ascending".into()));
    }
    let sets: Vec<Result<Vec<Complex64>>> = par::map_slice(k_list, |&k| {
        let mx = assemble_matrix(map, psi, k)?;
        let (scaling, _) = BlockScaling::calibrated(&mx, m_seq, theta, map.lambda())?;
        let h = h_matrix(&mx, &scaling)?;
        eigenvalues(h.matrix())
    });
    let sets: Vec<Vec<Complex64>> = sets.into_iter().collect::<Result<_>>()?;
    stabilized_eigenvalues(&sets, k_list)
}

/// One accepted root of the truncated determinant.
#[derive(Debug, Clone, Copy)]
pub struct DetZero {
    pub z: Complex64,
    /// `|d(z)|` evaluated with one extra coefficient beyond the companion.
    pub residual: f64,
    /// Set when the requested radius exceeds the series' reliability radius.
    pub beyond_reliable: bool,
}

/// Roots of the truncated series inside `|z| < radius` via companion-matrix
/// eigenvalues. The companion uses all but the last coefficient; the spare
/// one re-enters through the residual filter `|d(root)| < 1e-8`.
pub fn zeros_of_d(series: &DeterminantSeries, radius: f64) -> Result<Vec<DetZero>> {
    let reliable = series.reliability_radius();
    let beyond = radius > reliable;
    let companion_coeffs: &[Complex64] = if series.coeffs.len() >= 3 {
        &series.coeffs[..series.coeffs.len() - 1]
    } else {
        &series.coeffs
    };
    let deg = match companion_coeffs.iter().rposition(|c| c.norm() > 1e-300) {
        Some(0) | None => return Ok(Vec::new()),
        Some(n) => n,
    };
    let lead = companion_coeffs[deg];
    let mut comp = DMatrix::<Complex64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -companion_coeffs[i] / lead;
    }
    let roots = eigenvalues(&comp)?;
    let mut out: Vec<DetZero> = roots
        .into_iter()
        .filter(|z| z.norm() < radius)
        .map(|z| DetZero {
            z,
            residual: series.eval(z).norm(),
            beyond_reliable: beyond,
        })
        .filter(|r| {
            // Residual threshold scaled by the dominant term at the root:
            // far outside the unit disk the spare coefficient is float noise
            // amplified by |z|^N, which would otherwise reject honest roots.
            let scale = series
                .coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| c.norm() * r.z.norm().powi(j as i32))
                .fold(0.0f64, f64::max);
            r.residual < 1e-8 * scale.max(1.0)
        })
        .collect();
    out.sort_by(|a, b| a.z.norm().partial_cmp(&b.z.norm()).unwrap());
    Ok(out)
}

/// Order suggestion for the regularized determinant: one more than the
/// fitted power-law exponent of the singular values (their Schatten index).
pub fn suggest_order_m(svals: &[f64]) -> usize {
    let pts: Vec<(f64, f64)> = svals
        .iter()
        .enumerate()
        .skip(1)
        .filter(|&(_, &s)| s > 1e-250)
        .map(|(k, &s)| ((k as f64).ln(), s.ln()))
        .collect();
    if pts.len() < 3 {
        return 1;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-30 {
        return 1;
    }
    let slope = (n * sxy - sx * sy) / det;
    if slope >= -1e-9 {
        return 8;
    }
    let p_star = (-1.0 / slope).max(0.0);
    (p_star.floor() as usize + 1).clamp(1, 8)
}
