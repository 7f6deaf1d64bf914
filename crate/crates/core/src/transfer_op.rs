//! Transfer-operator matrix `entry(k, l) = <L_psi e_l, e_k>` in the Fourier
//! basis, assembled by exact-aliasing FFT quadrature, plus the empirical
//! check of the entry-decay bound `|entry| <= C w(R/|k|)` on the expanding
//! window.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::circle_map::{CircleMap, TrigPoly};
use crate::dc_class::{log_grid, MSequence};
use crate::error::{Error, Result};
use crate::par;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Default cap on the FFT length.
pub const DEFAULT_QUAD_CAP: usize = 1 << 20;

/// Dense matrix of `<L_psi e_l, e_k>` over the window |k|, |l| <= K.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    k_cut: usize,
    /// Row index `k + K`, column index `l + K`.
    entries: DMatrix<Complex64>,
    quad_size: usize,
}

impl TransferMatrix {
    /// Frequency cutoff K; the matrix has dimension 2K+1.
    pub fn k_cut(&self) -> usize {
        self.k_cut
    }

    pub fn dim(&self) -> usize {
        2 * self.k_cut + 1
    }

    pub fn quad_size(&self) -> usize {
        self.quad_size
    }

    /// `<L_psi e_l, e_k>` by signed frequencies.
    pub fn entry(&self, k: i64, l: i64) -> Complex64 {
        let kk = self.k_cut as i64;
        assert!(k.abs() <= kk && l.abs() <= kk, "frequency out of window");
        self.entries[((k + kk) as usize, (l + kk) as usize)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Signed frequency of a storage index.
    pub fn freq_of_index(&self, i: usize) -> i64 {
        i as i64 - self.k_cut as i64
    }

    /// Row-major complex128 little-endian bytes (re, im per entry), matching
    /// the JSON sidecar written next to it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.dim();
        let mut out = Vec::with_capacity(dim * dim * 16);
        for i in 0..dim {
            for j in 0..dim {
                let e = self.entries[(i, j)];
                out.extend_from_slice(&e.re.to_le_bytes());
                out.extend_from_slice(&e.im.to_le_bytes());
            }
        }
        out
    }

    /// CSV export `k,l,re,im`, a small-K debugging aid.
    pub fn to_csv(&self) -> String {
        let kk = self.k_cut as i64;
        let mut out = String::from("k,l,re,im\n");
        for k in -kk..=kk {
            for l in -kk..=kk {
                let e = self.entry(k, l);
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    k,
                    l,
                    crate::fmt_e17(e.re),
                    crate::fmt_e17(e.im)
                ));
            }
        }
        out
    }
}

/// Fit report for the entry-decay window `|k| > |l| / theta`.
#[derive(Debug, Clone)]
pub struct DecayFitReport {
    pub c: f64,
    pub r: f64,
    pub violations: usize,
    /// Smallest log-slack over the window (0 at the touching pair).
    pub min_slack: f64,
    pub window_pairs: usize,
    pub empty: bool,
}

/// FFT length needed for aliasing error below 1e-13.
///
/// The integrand of row k is `psi * exp(-2 pi i k p)`; the exponential's
/// effective bandwidth is `k * sum(2 pi |n| |p_n|) * e` (Bessel-decay safety
/// factor), on top of `n_psi` and the output index range `K |d|`.
pub fn quadrature_size(map: &CircleMap, psi: Option<&TrigPoly>, k_cut: usize) -> usize {
    let rate: f64 = map.perturbation().deriv_sup_bound(1); // sum 2 pi |n| |p_n|
    let n_psi = psi.map_or(0, |w| w.bandwidth());
    let need = 8.0
        * (k_cut as f64 * rate * std::f64::consts::E
            + n_psi as f64
            + (k_cut as i64 * map.degree().abs()) as f64);
    let mut q = 8usize;
    while (q as f64) < need {
        q *= 2;
    }
    q
}

/// Assembles the matrix with the automatic FFT length.
pub fn assemble_matrix(
    map: &CircleMap,
    psi: Option<&TrigPoly>,
    k_cut: usize,
) -> Result<TransferMatrix> {
    assemble_matrix_capped(map, psi, k_cut, DEFAULT_QUAD_CAP)
}

pub fn assemble_matrix_capped(
    map: &CircleMap,
    psi: Option<&TrigPoly>,
    k_cut: usize,
    cap: usize,
) -> Result<TransferMatrix> {
    let q = quadrature_size(map, psi, k_cut);
    if q > cap {
        return Err(Error::QuadratureCap { required: q, cap });
    }
    assemble_matrix_with_quad(map, psi, k_cut, q)
}

/// Assembles with an explicit FFT length (used by the quadrature-doubling
/// invariant test).
pub fn assemble_matrix_with_quad(
    map: &CircleMap,
    psi: Option<&TrigPoly>,
    k_cut: usize,
    q: usize,
) -> Result<TransferMatrix> {
    if k_cut < 1 {
        return Err(Error::InvalidInput("K must be >= 1".into()));
    }
    let dim = 2 * k_cut + 1;
    let degree = map.degree();
    // p and psi sampled once; every row reuses them.
    let p_samples: Vec<f64> = (0..q)
        .map(|j| map.perturbation().eval(j as f64 / q as f64))
        .collect();
    let psi_samples: Vec<Complex64> = match psi {
        None => vec![Complex64::new(1.0, 0.0); q],
        Some(w) => (0..q)
            .map(|j| Complex64::new(w.eval(j as f64 / q as f64), 0.0))
            .collect(),
    };
    let fft = FftPlanner::<f64>::new().plan_fft_forward(q);

    let rows: Vec<Vec<Complex64>> = par::map_indexed(dim, |i| {
        let k = i as i64 - k_cut as i64;
        let mut buf: Vec<Complex64> = (0..q)
            .map(|j| psi_samples[j] * Complex64::from_polar(1.0, -TWO_PI * k as f64 * p_samples[j]))
            .collect();
        fft.process(&mut buf);
        // entry(k, l) = c_hat_k(d k - l); the forward FFT gives
        // c_hat(m) = buf[m mod q] / q.
        (0..dim)
            .map(|jcol| {
                let l = jcol as i64 - k_cut as i64;
                let m = (degree * k - l).rem_euclid(q as i64) as usize;
                buf[m] / q as f64
            })
            .collect()
    });

    let mut entries = DMatrix::<Complex64>::zeros(dim, dim);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            entries[(i, j)] = v;
        }
    }
    Ok(TransferMatrix {
        k_cut,
        entries,
        quad_size: q,
    })
}

/// Fits `(C, R)` minimizing C subject to `|entry(k,l)| <= C w(R/|k|)` over all
/// pairs with `|k| > |l| / theta`, by a 32-point log grid on R.
pub fn verify_entry_decay(mx: &TransferMatrix, m_seq: &MSequence, theta: f64) -> DecayFitReport {
    let kk = mx.k_cut() as i64;
    let mut pairs: Vec<(i64, f64)> = Vec::new();
    for k in -kk..=kk {
        for l in -kk..=kk {
            if (k.abs() as f64) > (l.abs() as f64) / theta {
                let mag = mx.entry(k, l).norm();
                if mag > 0.0 {
                    pairs.push((k.abs(), mag.ln()));
                }
            }
        }
    }
    if pairs.is_empty() {
        return DecayFitReport {
            c: 0.0,
            r: 1.0,
            violations: 0,
            min_slack: f64::INFINITY,
            window_pairs: 0,
            empty: true,
        };
    }

    let r_candidates = log_grid(5e-2, 5e1, 32);
    let fits: Vec<(f64, f64)> = par::map_slice(&r_candidates, |&r| {
        let mut log_w_cache = std::collections::HashMap::new();
        let mut log_c = f64::NEG_INFINITY;
        for &(ka, log_mag) in &pairs {
            let lw = *log_w_cache
                .entry(ka)
                .or_insert_with(|| m_seq.weight_w(r / ka as f64).log_w);
            log_c = log_c.max(log_mag - lw);
        }
        (r, log_c)
    });
    let &(r, log_c) = fits
        .iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();

    let mut violations = 0usize;
    let mut min_slack = f64::INFINITY;
    for &(ka, log_mag) in &pairs {
        let slack = log_c + m_seq.weight_w(r / ka as f64).log_w - log_mag;
        if slack < -1e-9 {
            violations += 1;
        }
        min_slack = min_slack.min(slack);
    }
    DecayFitReport {
        c: log_c.exp(),
        r,
        violations,
        min_slack,
        window_pairs: pairs.len(),
        empty: false,
    }
}
