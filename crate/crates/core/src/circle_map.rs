//! Expanding circle maps `T(x) = d·x + p(x)` with trigonometric-polynomial
//! periodic part, their inverse branches, periodic orbits and flat traces.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Default grid size for certifying the expansion constant.
pub const LAMBDA_GRID: usize = 4096;

/// Default largest period enumerated by [`CircleMap::periodic_points`].
pub const DEFAULT_N_MAX: usize = 14;

/// A real-valued 1-periodic trigonometric polynomial given by its Fourier
/// coefficients, conjugate-symmetric within 1e-14.
#[derive(Debug, Clone)]
pub struct TrigPoly {
    /// Sorted by frequency; contains both signs of every mode.
    coeffs: Vec<(i64, Complex64)>,
}

impl TrigPoly {
    /// Accepts coefficients with either or both signs present. A missing
    /// partner is filled in by conjugation; a present one must match.
    pub fn new(coeffs: &[(i64, Complex64)]) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for &(n, c) in coeffs {
            if map.insert(n, c).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate Fourier coefficient for n = {n}"
                )));
            }
        }
        for (&n, &c) in map.clone().iter() {
            match map.get(&-n) {
                Some(&other) => {
                    if (other - c.conj()).norm() > 1e-14 * (1.0 + c.norm()) {
                        return Err(Error::InvalidInput(format!(
                            "coefficients at n = ±{} are not conjugate-symmetric",
                            n.abs()
                        )));
                    }
                }
                None => {
                    map.insert(-n, c.conj());
                }
            }
        }
        if let Some(&c0) = map.get(&0) {
            if c0.im.abs() > 1e-14 * (1.0 + c0.norm()) {
                return Err(Error::InvalidInput(
                    "zero-mode coefficient must be real".into(),
                ));
            }
        }
        Ok(Self {
            coeffs: map.into_iter().collect(),
        })
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            coeffs: vec![(0, Complex64::new(c, 0.0))],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|(_, c)| c.norm() == 0.0)
    }

    pub fn coeffs(&self) -> &[(i64, Complex64)] {
        &self.coeffs
    }

    /// Largest |n| carrying a nonzero coefficient.
    pub fn bandwidth(&self) -> usize {
        self.coeffs
            .iter()
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(n, _)| n.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Pointwise value; imaginary parts cancel by symmetry.
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(n, c) in &self.coeffs {
            acc += c * Complex64::from_polar(1.0, TWO_PI * n as f64 * x);
        }
        acc.re
    }

    /// Derivative value at `x`.
    pub fn eval_deriv(&self, x: f64) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(n, c) in &self.coeffs {
            acc += c
                * Complex64::new(0.0, TWO_PI * n as f64)
                * Complex64::from_polar(1.0, TWO_PI * n as f64 * x);
        }
        acc.re
    }

    /// `sum_n (2 pi |n|)^order |c_n|`, a sup-norm bound on the order-th derivative.
    pub fn deriv_sup_bound(&self, order: u32) -> f64 {
        self.coeffs
            .iter()
            .map(|&(n, c)| (TWO_PI * n.abs() as f64).powi(order as i32) * c.norm())
            .sum()
    }
}

/// JSON map specification:
/// `{"degree":2, "p_hat":[[n, re, im],…], "psi_hat":[[n, re, im],…]?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSpec {
    pub degree: i64,
    #[serde(default)]
    pub p_hat: Vec<(i64, f64, f64)>,
    #[serde(default)]
    pub psi_hat: Option<Vec<(i64, f64, f64)>>,
}

impl MapSpec {
    pub fn build(&self) -> Result<(CircleMap, Option<TrigPoly>)> {
        let to_coeffs = |raw: &[(i64, f64, f64)]| -> Vec<(i64, Complex64)> {
            raw.iter()
                .map(|&(n, re, im)| (n, Complex64::new(re, im)))
                .collect()
        };
        let p = TrigPoly::new(&to_coeffs(&self.p_hat))?;
        let map = CircleMap::new(self.degree, p)?;
        let psi = match &self.psi_hat {
            Some(raw) => Some(TrigPoly::new(&to_coeffs(raw))?),
            None => None,
        };
        Ok((map, psi))
    }
}

/// Degree-d expanding circle map with certified expansion constant.
#[derive(Debug, Clone)]
pub struct CircleMap {
    degree: i64,
    p: TrigPoly,
    lambda: f64,
}

/// One periodic point with its cycle derivative `(T^n)'(x)`.
#[derive(Debug, Clone, Copy)]
pub struct PeriodicPoint {
    pub x: f64,
    pub deriv: f64,
}

/// All fixed points of `T^n`.
#[derive(Debug, Clone)]
pub struct PeriodicOrbitSet {
    pub period: usize,
    pub points: Vec<PeriodicPoint>,
}

impl PeriodicOrbitSet {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    /// CSV dump with columns `period,x,deriv`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("period,x,deriv\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{}\n",
                self.period,
                crate::fmt_e17(p.x),
                crate::fmt_e17(p.deriv)
            ));
        }
        out
    }
}

fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

impl CircleMap {
    /// Builds the map and certifies expansion: the coarse bound
    /// `|degree| - sup|p'|` is refined on a dense grid minus a Lipschitz
    /// correction from `sup|p''|`. Fails unless the certified constant
    /// exceeds 1.
    pub fn new(degree: i64, p: TrigPoly) -> Result<Self> {
        if degree.abs() < 2 {
            return Err(Error::InvalidInput(format!(
                "expanding map needs |degree| >= 2, got {degree}"
            )));
        }
        let coarse = degree.abs() as f64 - p.deriv_sup_bound(1);
        let lip = p.deriv_sup_bound(2);
        let h = 1.0 / LAMBDA_GRID as f64;
        let grid_min = (0..LAMBDA_GRID)
            .map(|j| (degree as f64 + p.eval_deriv(j as f64 * h)).abs())
            .fold(f64::INFINITY, f64::min);
        let lambda = coarse.max(grid_min - lip * h / 2.0);
        if !(lambda > 1.0) {
            return Err(Error::InvalidInput(format!(
                "certified expansion constant {lambda:.6} is not > 1"
            )));
        }
        Ok(Self { degree, p, lambda })
    }

    /// The unperturbed degree-d map `x -> d x`.
    pub fn linear(degree: i64) -> Result<Self> {
        Self::new(degree, TrigPoly::zero())
    }

    pub fn degree(&self) -> i64 {
        self.degree
    }

    pub fn perturbation(&self) -> &TrigPoly {
        &self.p
    }

    /// Certified lower bound on `|T'|`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `(T(x) mod 1, lift)` with `lift = d x + p(x)`.
    pub fn evaluate(&self, x: f64) -> (f64, f64) {
        let lift = self.degree as f64 * x + self.p.eval(x);
        (lift.rem_euclid(1.0), lift)
    }

    /// `T'(x)`.
    pub fn deriv(&self, x: f64) -> f64 {
        self.degree as f64 + self.p.eval_deriv(x)
    }

    fn lift(&self, x: f64) -> f64 {
        self.degree as f64 * x + self.p.eval(x)
    }

    /// Solves `lift(x) = target` for `x` in `[0, 1]` by bracketed Newton.
    /// The lift is strictly monotone, so the bracket never fails.
    fn solve_lift(&self, target: f64) -> Result<f64> {
        let increasing = self.degree > 0;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut x = ((target - self.p.eval(0.5)) / self.degree as f64).clamp(0.0, 1.0);
        let mut residual = f64::INFINITY;
        for _ in 0..100 {
            let f = self.lift(x) - target;
            residual = f.abs();
            if residual < 1e-13 {
                return Ok(x);
            }
            if (f > 0.0) == increasing {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.deriv(x);
            let mut next = x - f / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            x = next;
        }
        Err(Error::NewtonDivergence {
            iters: 100,
            residual,
        })
    }

    /// The `|degree|` preimages of `y`, sorted ascending, each with
    /// `|T(x_j) - y| < 1e-13` on the circle.
    pub fn inverse_branches(&self, y: f64) -> Result<Vec<f64>> {
        let y0 = y.rem_euclid(1.0);
        let d = self.degree.abs() as usize;
        let lift0 = self.lift(0.0);
        let lift1 = self.lift(1.0);
        let lo = lift0.min(lift1);
        // Exactly |d| integers m satisfy lo <= y0 + m < lo + |d|.
        let m0 = (lo - y0).ceil() as i64;
        let mut roots = Vec::with_capacity(d);
        for j in 0..d {
            let target = y0 + (m0 + j as i64) as f64;
            roots.push(self.solve_lift(target)?);
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(roots)
    }

    /// Inverse branch with symbol `s`, 0-based, ordered by position in [0,1).
    fn branch(&self, s: usize, y: f64) -> Result<f64> {
        let y0 = y.rem_euclid(1.0);
        let lift0 = self.lift(0.0);
        let lift1 = self.lift(1.0);
        let lo = lift0.min(lift1);
        let m0 = (lo - y0).ceil() as i64;
        // Increasing lifts visit branches left to right; decreasing lifts
        // reverse the spatial order.
        let j = if self.degree > 0 {
            s as i64
        } else {
            self.degree.abs() - 1 - s as i64
        };
        self.solve_lift(y0 + (m0 + j) as f64)
    }

    /// All `|d|^n - 1` fixed points of `T^n` (degree >= 2), found by driving
    /// each symbolic inverse-branch composition to its unique fixed point and
    /// Newton-polishing on `T^n`. Parallel over symbol strings; the ordered
    /// merge keeps the result independent of thread count.
    pub fn periodic_points(&self, n: usize) -> Result<PeriodicOrbitSet> {
        if n == 0 {
            return Err(Error::InvalidInput("period must be >= 1".into()));
        }
        let d = self.degree.abs() as usize;
        let total = d.checked_pow(n as u32).ok_or_else(|| {
            Error::InvalidInput(format!("d^n overflow at degree {d}, period {n}"))
        })?;

        let candidates: Vec<Result<f64>> = par::map_indexed(total, |code| {
            // Decode the symbol string, most significant first.
            let mut symbols = vec![0usize; n];
            let mut c = code;
            for slot in symbols.iter_mut().rev() {
                *slot = c % d;
                c /= d;
            }
            // Iterate the contraction g_s to its fixed point.
            let mut x = 0.5f64;
            for _ in 0..200 {
                let mut next = x;
                for &s in symbols.iter().rev() {
                    next = self.branch(s, next)?;
                }
                if (next - x).abs() < 1e-15 {
                    x = next;
                    break;
                }
                x = next;
            }
            // Newton polish on F(x) = lift_n(x) - x - m.
            for _ in 0..4 {
                let (value, deriv) = self.iterate_lift(x, n);
                let excess = value - x;
                let f = excess - excess.round();
                let polished = x - f / (deriv - 1.0);
                if polished.is_finite() {
                    x = polished.rem_euclid(1.0);
                }
            }
            Ok(x)
        });

        let mut xs = Vec::with_capacity(total);
        for c in candidates {
            xs.push(c?);
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Deduplicate on the circle, wrap-around pair included.
        let mut unique: Vec<f64> = Vec::with_capacity(total);
        for &x in &xs {
            if unique
                .last()
                .map_or(true, |&last| circle_dist(last, x) > 1e-10)
            {
                unique.push(x);
            }
        }
        if unique.len() > 1 && circle_dist(unique[0], *unique.last().unwrap()) <= 1e-10 {
            unique.pop();
        }

        if self.degree >= 2 {
            let expected = total - 1;
            if unique.len() != expected {
                let mut near: Vec<String> = Vec::new();
                for w in unique.windows(2) {
                    if circle_dist(w[0], w[1]) < 1e-6 {
                        near.push(format!("({:.12}, {:.12})", w[0], w[1]));
                    }
                }
                return Err(Error::CountMismatch {
                    period: n,
                    expected,
                    found: unique.len(),
                    detail: if near.is_empty() {
                        String::new()
                    } else {
                        format!("; near-duplicates: {}", near.join(", "))
                    },
                });
            }
        }

        let points = unique
            .into_iter()
            .map(|x| {
                let (_, deriv) = self.iterate_lift(x, n);
                PeriodicPoint { x, deriv }
            })
            .collect();
        Ok(PeriodicOrbitSet { period: n, points })
    }

    /// `(lift of T^n at x, (T^n)'(x))` via the chain rule along the orbit.
    fn iterate_lift(&self, x: f64, n: usize) -> (f64, f64) {
        let mut value = x;
        let mut deriv = 1.0f64;
        let mut pos = x;
        let mut offset = 0.0f64;
        for _ in 0..n {
            deriv *= self.deriv(pos);
            let lift = self.lift(pos);
            value = lift + offset;
            // Future iterations act on the reduced point; carry the integer
            // part so `value` stays the true lift of the composition.
            let reduced = lift.rem_euclid(1.0);
            offset = value - reduced;
            pos = reduced;
        }
        (value, deriv)
    }

    /// Flat trace `sum_x prod_{k<n} psi(T^k x) / |1 - (T^n)'(x)|` over the
    /// fixed points of `T^n`; `psi = None` means the unweighted operator.
    pub fn flat_trace(&self, psi: Option<&TrigPoly>, n: usize) -> Result<Complex64> {
        let orbits = self.periodic_points(n)?;
        // Compensated summation: the sum can run over 2^14 terms and the
        // closed-form cases are asserted to 1e-14.
        let mut sum = Complex64::new(0.0, 0.0);
        let mut comp = Complex64::new(0.0, 0.0);
        for pt in &orbits.points {
            let margin = (1.0 - pt.deriv).abs();
            if margin < 1e-8 {
                return Err(Error::NearParabolic { x: pt.x, margin });
            }
            let weight = match psi {
                None => Complex64::new(1.0, 0.0),
                Some(w) => {
                    let mut acc = Complex64::new(1.0, 0.0);
                    let mut pos = pt.x;
                    for _ in 0..n {
                        acc *= Complex64::new(w.eval(pos), 0.0);
                        pos = self.evaluate(pos).0;
                    }
                    acc
                }
            };
            let term = weight / margin - comp;
            let next = sum + term;
            comp = (next - sum) - term;
            sum = next;
        }
        Ok(sum)
    }

    /// First `n_traces` flat traces, parallel over periods.
    pub fn flat_traces(&self, psi: Option<&TrigPoly>, n_traces: usize) -> Result<Vec<Complex64>> {
        let results = par::map_indexed(n_traces, |i| self.flat_trace(psi, i + 1));
        results.into_iter().collect()
    }
}
