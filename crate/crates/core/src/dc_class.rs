//! Denjoy–Carleman class data: M-sequences, the weight function `w`, and the
//! fitted constants tied to them.
//!
//! An M-sequence is an increasing, logarithmically convex sequence
//! `(M_k)_{k=0..k_max}` with `M_0 = 1`. The associated weight
//! `w(x) = inf_k x^k k! M_k` drives every decay estimate in the crate, so all
//! arithmetic here stays in natural-log space: direct products of `x^k k! M_k`
//! overflow past k ≈ 170 while `k_max` up to 500 must remain usable.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Relative tolerance defining a tie between two weight terms.
const TIE_REL_TOL: f64 = 1e-12;

/// Named families of M-sequences plus free-form lists.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassKind {
    /// `M_k = 1`: the real-analytic class.
    Analytic,
    /// `M_k = (k!)^(sigma - 1)`, `sigma >= 1`.
    Gevrey { sigma: f64 },
    /// `M_k = exp(alpha k^beta / beta)`, `alpha > 0`, `beta >= 1`.
    AlphaBeta { alpha: f64, beta: f64 },
    /// Validated user-supplied values.
    Custom,
}

/// JSON-facing class specification, e.g. `{"kind":"gevrey","sigma":2.0,"k_max":256}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassSpec {
    Analytic {
        #[serde(default = "default_k_max")]
        k_max: usize,
    },
    Gevrey {
        sigma: f64,
        #[serde(default = "default_k_max")]
        k_max: usize,
    },
    AlphaBeta {
        alpha: f64,
        beta: f64,
        #[serde(default = "default_k_max")]
        k_max: usize,
    },
    Custom {
        values: Vec<f64>,
    },
}

pub const DEFAULT_K_MAX: usize = 256;

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

/// An increasing log-convex sequence `(M_k)` with `M_0 = 1`, stored in log-space.
#[derive(Debug, Clone)]
pub struct MSequence {
    kind: ClassKind,
    /// `log_m[k] = ln M_k`, k = 0..=k_max.
    log_m: Vec<f64>,
    /// `log_fact[k] = ln k!`, same indexing.
    log_fact: Vec<f64>,
}

/// One evaluation of the weight `w(x) = inf_k x^k k! M_k`.
#[derive(Debug, Clone, Copy)]
pub struct WeightEval {
    pub x: f64,
    /// `w(x)`, possibly underflowing to 0.0 in direct representation.
    pub w: f64,
    /// `ln w(x)`, always finite.
    pub log_w: f64,
    /// Largest index attaining the minimum (ties resolve upward).
    pub k_of_x: usize,
    /// True when the minimizer hit `k_max`, i.e. the truncated infimum may
    /// disagree with the true one.
    pub saturated: bool,
}

/// Result of the `(k+1) M_{k+1} <= C gamma^k M_k` scan.
#[derive(Debug, Clone, Copy)]
pub struct GentilCheck {
    /// Smallest admissible constant over the available indices.
    pub c: f64,
    /// Index where the ratio peaks.
    pub argmax_k: usize,
    /// False when the ratio is still climbing at `k_max`, in which case `c`
    /// says nothing about the full sequence.
    pub conclusive: bool,
}

/// Fitted polynomial decay `w(mu x)/w(x) <= c_prime * x^delta`.
#[derive(Debug, Clone)]
pub struct PolyRatioFit {
    pub delta: f64,
    pub c_prime: f64,
    /// Grid the constant was fitted on.
    pub grid: Vec<f64>,
}

/// Fit of the derivative-bound constants `|f^(k)| <= C R^k k! M_k`.
#[derive(Debug, Clone)]
pub struct ClassConstantsFit {
    pub c: f64,
    pub r: f64,
    /// Per-k log-slack of the fitted bound; `inf` where the derivative
    /// majorant vanishes and imposes no constraint.
    pub slack: Vec<f64>,
}

fn log_factorials(k_max: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(k_max + 1);
    let mut acc = 0.0f64;
    v.push(0.0);
    for k in 1..=k_max {
        acc += (k as f64).ln();
        v.push(acc);
    }
    v
}

impl MSequence {
    /// Builds the sequence described by `spec`.
    pub fn from_spec(spec: &ClassSpec) -> Result<Self> {
        match spec {
            ClassSpec::Analytic { k_max } => Self::analytic(*k_max),
            ClassSpec::Gevrey { sigma, k_max } => Self::gevrey(*sigma, *k_max),
            ClassSpec::AlphaBeta { alpha, beta, k_max } => Self::alpha_beta(*alpha, *beta, *k_max),
            ClassSpec::Custom { values } => Self::custom(values),
        }
    }

    pub fn analytic(k_max: usize) -> Result<Self> {
        check_k_max(k_max)?;
        Ok(Self {
            kind: ClassKind::Analytic,
            log_m: vec![0.0; k_max + 1],
            log_fact: log_factorials(k_max),
        })
    }

    pub fn gevrey(sigma: f64, k_max: usize) -> Result<Self> {
        check_k_max(k_max)?;
        if !(sigma >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "gevrey exponent must satisfy sigma >= 1, got {sigma}"
            )));
        }
        let log_fact = log_factorials(k_max);
        let log_m = log_fact.iter().map(|lf| (sigma - 1.0) * lf).collect();
        Ok(Self {
            kind: ClassKind::Gevrey { sigma },
            log_m,
            log_fact,
        })
    }

    pub fn alpha_beta(alpha: f64, beta: f64, k_max: usize) -> Result<Self> {
        check_k_max(k_max)?;
        if !(alpha > 0.0) || !(beta >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha_beta class needs alpha > 0 and beta >= 1, got alpha={alpha}, beta={beta}"
            )));
        }
        let log_m = (0..=k_max)
            .map(|k| alpha * (k as f64).powf(beta) / beta)
            .collect();
        Ok(Self {
            kind: ClassKind::AlphaBeta { alpha, beta },
            log_m,
            log_fact: log_factorials(k_max),
        })
    }

    /// Validates and adopts a positive list. Fails on the first index breaking
    /// `M_0 = 1`, monotonicity or log-convexity instead of repairing it.
    pub fn custom(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(
                "custom M-sequence needs at least two values".into(),
            ));
        }
        for (k, &v) in values.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidSequence {
                    index: k,
                    reason: format!("values must be positive and finite, got {v}"),
                });
            }
        }
        let log_m: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        Self::from_log_values(log_m, ClassKind::Custom)
    }

    /// Internal constructor from log-values; still runs the invariant scan.
    fn from_log_values(log_m: Vec<f64>, kind: ClassKind) -> Result<Self> {
        let tol = 1e-12;
        if log_m[0].abs() > tol {
            return Err(Error::InvalidSequence {
                index: 0,
                reason: format!("M_0 must equal 1, got exp({})", log_m[0]),
            });
        }
        for k in 0..log_m.len() - 1 {
            if log_m[k] > log_m[k + 1] + tol {
                return Err(Error::InvalidSequence {
                    index: k + 1,
                    reason: "sequence not non-decreasing".into(),
                });
            }
        }
        for k in 1..log_m.len() - 1 {
            if 2.0 * log_m[k] > log_m[k - 1] + log_m[k + 1] + tol {
                return Err(Error::InvalidSequence {
                    index: k,
                    reason: "sequence not log-convex".into(),
                });
            }
        }
        let k_max = log_m.len() - 1;
        Ok(Self {
            kind,
            log_m,
            log_fact: log_factorials(k_max),
        })
    }

    pub fn kind(&self) -> &ClassKind {
        &self.kind
    }

    pub fn k_max(&self) -> usize {
        self.log_m.len() - 1
    }

    /// `ln M_k`.
    pub fn log_value(&self, k: usize) -> f64 {
        self.log_m[k]
    }

    /// `M_k` in direct representation (may overflow to `inf` for large k).
    pub fn value(&self, k: usize) -> f64 {
        self.log_m[k].exp()
    }

    /// Evaluates `w(x) = inf_{k <= k_max} x^k k! M_k` exactly in log-space.
    ///
    /// Ties within relative 1e-12 resolve to the larger index, matching the
    /// largest-minimizer convention used by every estimate downstream.
    pub fn weight_w(&self, x: f64) -> WeightEval {
        assert!(x > 0.0 && x.is_finite(), "weight_w needs x > 0, got {x}");
        let lx = x.ln();
        let mut t_min = f64::INFINITY;
        for k in 0..=self.k_max() {
            let t = k as f64 * lx + self.log_fact[k] + self.log_m[k];
            if t < t_min {
                t_min = t;
            }
        }
        let tol = TIE_REL_TOL * t_min.abs().max(1.0);
        let mut k_of_x = 0usize;
        for k in 0..=self.k_max() {
            let t = k as f64 * lx + self.log_fact[k] + self.log_m[k];
            if t <= t_min + tol {
                k_of_x = k;
            }
        }
        WeightEval {
            x,
            w: t_min.exp(),
            log_w: t_min,
            k_of_x,
            saturated: k_of_x == self.k_max(),
        }
    }

    /// `w(mu x)/w(x)`; both evaluations must stay below saturation.
    pub fn decay_ratio(&self, mu: f64, x: f64) -> Result<f64> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::InvalidInput(format!(
                "decay_ratio needs 0 < mu < 1, got {mu}"
            )));
        }
        if !(x > 0.0) {
            return Err(Error::InvalidInput(format!(
                "decay_ratio needs x > 0, got {x}"
            )));
        }
        let num = self.weight_w(mu * x);
        let den = self.weight_w(x);
        for eval in [&num, &den] {
            if eval.saturated {
                return Err(Error::Saturated {
                    x: eval.x,
                    k_max: self.k_max(),
                });
            }
        }
        Ok((num.log_w - den.log_w).exp())
    }

    /// Scans `(k+1) M_{k+1} / (gamma^k M_k)` and reports the peak.
    pub fn check_gentil(&self, gamma: f64) -> Result<GentilCheck> {
        if !(gamma > 1.0) {
            return Err(Error::InvalidInput(format!(
                "gentil check needs gamma > 1, got {gamma}"
            )));
        }
        let lg = gamma.ln();
        let mut best = f64::NEG_INFINITY;
        let mut argmax_k = 0usize;
        let mut last = f64::NEG_INFINITY;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..self.k_max() {
            let r = ((k + 1) as f64).ln() + self.log_m[k + 1] - self.log_m[k] - k as f64 * lg;
            if r > best {
                best = r;
                argmax_k = k;
            }
            prev = last;
            last = r;
        }
        // Still climbing at the end of the available range: the sup over all
        // k is not witnessed and c cannot be trusted.
        let conclusive = !(last > prev) && argmax_k + 1 < self.k_max();
        Ok(GentilCheck {
            c: best.exp(),
            argmax_k,
            conclusive,
        })
    }

    /// `delta = -log mu / log gamma` plus the constant fitted on a sample grid.
    pub fn poly_ratio_exponent(&self, gamma: f64, mu: f64) -> Result<PolyRatioFit> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::InvalidInput(format!(
                "poly_ratio_exponent needs 0 < mu < 1, got {mu}"
            )));
        }
        let gentil = self.check_gentil(gamma)?;
        if !gentil.conclusive {
            return Err(Error::InconclusiveGentil { gamma });
        }
        let delta = -mu.ln() / gamma.ln();
        let grid = log_grid(1e-6, 1.0, 64);
        let mut log_c = f64::NEG_INFINITY;
        for &x in &grid {
            let log_ratio = self.weight_w(mu * x).log_w - self.weight_w(x).log_w;
            log_c = log_c.max(log_ratio - delta * x.ln());
        }
        Ok(PolyRatioFit {
            delta,
            c_prime: log_c.exp(),
            grid,
        })
    }

    /// Bounds `sup |f^(k)|` by the Fourier majorant `sum_n (2 pi |n|)^k |f_n|`
    /// for k = 0..=k_probe, then fits `(C, R)` so `majorant_k <= C R^k k! M_k`
    /// holds with equality at the tightest index.
    pub fn estimate_class_constants(
        &self,
        f_hat: &[(i64, Complex64)],
        k_probe: usize,
    ) -> Result<ClassConstantsFit> {
        let k_probe = k_probe.min(self.k_max());
        // log of sum_n (2 pi |n|)^k |f_n| via log-sum-exp; None = empty sum.
        let log_majorant: Vec<Option<f64>> = (0..=k_probe)
            .map(|k| {
                let mut terms: Vec<f64> = Vec::new();
                for &(n, c) in f_hat {
                    let m = c.norm();
                    if m == 0.0 || (k > 0 && n == 0) {
                        continue;
                    }
                    let base = if n == 0 {
                        0.0
                    } else {
                        (2.0 * std::f64::consts::PI * n.abs() as f64).ln()
                    };
                    terms.push(m.ln() + k as f64 * base);
                }
                if terms.is_empty() {
                    return Ok(None);
                }
                let peak = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = terms.iter().map(|t| (t - peak).exp()).sum();
                let v = peak + sum.ln();
                if !v.is_finite() {
                    return Err(Error::DivergentMajorant { k });
                }
                Ok(Some(v))
            })
            .collect::<Result<_>>()?;

        // Constraint points: ln C + k ln R >= y_k.
        let pts: Vec<(f64, f64)> = log_majorant
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|lv| (k as f64, lv - self.log_fact[k] - self.log_m[k])))
            .collect();
        if pts.is_empty() {
            // f == 0: any pair works.
            return Ok(ClassConstantsFit {
                c: 0.0,
                r: 1.0,
                slack: vec![f64::INFINITY; k_probe + 1],
            });
        }
        let (mut log_c, log_r) = least_squares_line(&pts);
        let shift = pts
            .iter()
            .map(|&(k, y)| y - (log_c + log_r * k))
            .fold(f64::NEG_INFINITY, f64::max);
        log_c += shift;
        let slack = (0..=k_probe)
            .map(|k| match log_majorant[k] {
                Some(lv) => log_c + log_r * k as f64 + self.log_fact[k] + self.log_m[k] - lv,
                None => f64::INFINITY,
            })
            .collect();
        Ok(ClassConstantsFit {
            c: log_c.exp(),
            r: log_r.exp(),
            slack,
        })
    }

    /// CSV weight table with columns `x,w,k_of_x,saturated`.
    pub fn weight_table_csv(&self, xs: &[f64]) -> String {
        let rows = par::map_slice(xs, |&x| {
            let e = self.weight_w(x);
            format!(
                "{},{},{},{}\n",
                crate::fmt_e17(x),
                crate::fmt_e17(e.w),
                e.k_of_x,
                e.saturated
            )
        });
        let mut out = String::from("x,w,k_of_x,saturated\n");
        for r in rows {
            out.push_str(&r);
        }
        out
    }
}

fn check_k_max(k_max: usize) -> Result<()> {
    if k_max < 2 {
        return Err(Error::InvalidInput(format!(
            "k_max must be at least 2, got {k_max}"
        )));
    }
    Ok(())
}

/// Least-squares line `y = a + b x` through the points; degenerate abscissae
/// (single point or constant x) get slope 0.
fn least_squares_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-30 {
        return (sy / n, 0.0);
    }
    let b = (n * sxy - sx * sy) / det;
    let a = (sy - b * sx) / n;
    (a, b)
}

/// `count` log-spaced points covering `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Builds an increasing log-convex majorant `B` (with `B_0 = 1`) of a
/// non-negative sequence, returning `(C, B)` with `A_k <= C B_k` pointwise.
///
/// Construction: Newton-polygon lower hull of `(k, ln A_k)` over the positive
/// entries, lifted until it touches the data from above, slopes clamped
/// non-negative, extended with its final slope past the last constraint, then
/// normalized to `B_0 = 1`. Zeros impose no constraint; all-zero input
/// returns the convention `(0, B == 1)`.
pub fn log_convex_majorant(a: &[f64]) -> Result<(f64, MSequence)> {
    if a.is_empty() {
        return Err(Error::InvalidInput(
            "majorant input must be nonempty".into(),
        ));
    }
    for (k, &v) in a.iter().enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidSequence {
                index: k,
                reason: format!("entries must be finite and non-negative, got {v}"),
            });
        }
    }
    let len = a.len().max(3);
    let pts: Vec<(f64, f64)> = a
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(k, &v)| (k as f64, v.ln()))
        .collect();
    if pts.is_empty() {
        let b = MSequence::from_log_values(vec![0.0; len], ClassKind::Custom)?;
        return Ok((0.0, b));
    }

    // Lower convex hull (monotone chain over already-sorted abscissae).
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while hull.len() >= 2 {
            let q = hull[hull.len() - 1];
            let r = hull[hull.len() - 2];
            // Pop q when r-q-p fails to turn left (q at or above the r-p chord).
            if (q.1 - r.1) * (p.0 - r.0) >= (p.1 - r.1) * (q.0 - r.0) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }

    // Piecewise-linear hull on every integer index, flat before the first
    // vertex, final slope after the last.
    let mut env = vec![0.0f64; len];
    let first = hull[0];
    let last = *hull.last().unwrap();
    let final_slope = if hull.len() >= 2 {
        let p = hull[hull.len() - 2];
        (last.1 - p.1) / (last.0 - p.0)
    } else {
        0.0
    };
    let mut seg = 0usize;
    for (k, e) in env.iter_mut().enumerate() {
        let kf = k as f64;
        *e = if kf <= first.0 {
            first.1
        } else if kf >= last.0 {
            last.1 + final_slope * (kf - last.0)
        } else {
            while hull[seg + 1].0 < kf {
                seg += 1;
            }
            let (p, q) = (hull[seg], hull[seg + 1]);
            p.1 + (q.1 - p.1) * (kf - p.0) / (q.0 - p.0)
        };
    }

    // Lift to dominate the data, then clamp slopes non-negative (keeps
    // convexity, gains monotonicity).
    let lift = pts
        .iter()
        .map(|&(k, y)| y - env[k as usize])
        .fold(f64::NEG_INFINITY, f64::max);
    let base = env[0] + lift;
    let mut log_b = vec![0.0f64; len];
    let mut acc = base;
    for k in 1..len {
        let slope = (env[k] - env[k - 1]).max(0.0);
        acc += slope;
        log_b[k] = acc - base;
    }

    let log_c = pts
        .iter()
        .map(|&(k, y)| y - log_b[k as usize])
        .fold(f64::NEG_INFINITY, f64::max);
    let b = MSequence::from_log_values(log_b, ClassKind::Custom)?;
    Ok((log_c.exp(), b))
}
