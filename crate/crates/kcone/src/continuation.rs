//! Floating-point verification layer: cone points, the blown-up remainder
//! `H`, Newton continuation in `ε`, rate traces with slope fits and level
//! sets.
//!
//! Iterates are `f64`; every residual and Jacobian is evaluated exactly at
//! the (dyadic) rational value of the current iterate and rounded once.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{approximation_order, CurveSample};
use crate::error::KconeError;
use crate::linalg::{factorial, from_f64, to_f64, vec_add, vec_is_zero, vec_sub, QMatrix, Q};
use crate::multijet::{compose_curve, CurveJet, MapJet};
use crate::resolution::ResolutionResult;

/// Knobs of the numerical layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationOptions {
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Relative residual tolerance for Newton acceptance.
    pub tolerance: f64,
    /// Bound on `‖n^c‖_∞` defining the cone box.
    pub cone_box: f64,
    /// Bound on the RMS log-residual of a slope fit.
    pub fit_residual_bound: f64,
    /// Maximal distance of an accepted slope from its nearest integer.
    pub slope_tolerance: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            max_iterations: 50,
            max_halvings: 8,
            tolerance: 1e-12,
            cone_box: 1e12,
            fit_residual_bound: 0.1,
            slope_tolerance: 0.1,
        }
    }
}

/// Geometric grid of `points` values from `hi` down to `lo`, optionally mirrored to `ε < 0`.
pub fn geometric_grid(hi: f64, lo: f64, points: usize, both_signs: bool) -> Vec<f64> {
    let mut g: Vec<f64> = if points <= 1 {
        vec![hi]
    } else {
        let r = (lo / hi).powf(1.0 / (points - 1) as f64);
        (0..points).map(|i| hi * r.powi(i as i32)).collect()
    };
    if both_signs {
        let neg: Vec<f64> = g.iter().map(|e| -e).collect();
        g.extend(neg);
    }
    g
}

/// The default grid for order `k` as `hi:lo:points`.
pub fn default_grid_spec(k: usize) -> &'static str {
    if k >= 8 {
        "0.2:0.02:25"
    } else {
        "0.1:0.0001:25"
    }
}

/// Default grid: 25 points in `[1e-4, 1e-1]`, raised to `[2e-2, 2e-1]` for `k ≥ 8`.
pub fn default_grid(k: usize, both_signs: bool) -> Vec<f64> {
    if k >= 8 {
        geometric_grid(0.2, 0.02, 25, both_signs)
    } else {
        geometric_grid(0.1, 1e-4, 25, both_signs)
    }
}

fn q_vec(v: &[f64]) -> Vec<Q> {
    v.iter().map(|&x| from_f64(x)).collect()
}

fn f_vec(v: &[Q]) -> Vec<f64> {
    v.iter().map(to_f64).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn pow(eps: &Q, e: usize) -> Q {
    let mut out = Q::one();
    for _ in 0..e {
        out *= eps;
    }
    out
}

/// A transversal cone with its exact data and precomputed solve operators.
#[derive(Clone, Debug)]
pub struct Cone {
    g: MapJet,
    curve: CurveJet,
    res: ResolutionResult,
    nc_basis: QMatrix,
    l_hat_nc: QMatrix,
    l_hat_nc_inv: QMatrix,
    /// `T^{2k+1}/(2k+1)!` along the curve.
    top_term: Vec<Q>,
    approx_holds: bool,
}

/// A Newton-accepted point of the continuation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonPoint {
    pub eps: f64,
    /// Coordinates of the stack in the basis of `N_1^c × … × N_{k+1}^c`.
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub residual_h: f64,
    /// `‖G[z]‖_∞`.
    pub residual_g: f64,
    /// `max(1, ‖G′[z]‖·‖z‖)`, the scale of the acceptance test on `G`.
    pub residual_scale: f64,
    pub iterations: usize,
}

/// A grid point where Newton did not produce an accepted point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonFailure {
    pub eps: f64,
    pub reason: String,
}

/// Vanishing of the low-order coefficients of `z(ε,p) − z₀(ε)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityFit {
    pub through_order: usize,
    pub degree: usize,
    /// Largest `|c_j|·ε_max^j` for `j ≤ through_order`, with `ε_max` the largest `|ε|` fitted.
    pub max_low_coefficient: f64,
    pub holds: bool,
}

/// Output of [`Cone::newton_continue`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRun {
    pub base: Vec<f64>,
    pub points: Vec<NewtonPoint>,
    pub failures: Vec<NewtonFailure>,
    pub identity: Option<IdentityFit>,
}

impl ContinuationRun {
    pub fn samples(&self) -> Vec<CurveSample> {
        self.points.iter().map(|p| CurveSample { eps: p.eps, z: p.z.clone() }).collect()
    }

    pub fn max_residual_g(&self) -> f64 {
        self.points.iter().fold(0.0, |a, p| a.max(p.residual_g))
    }

    pub fn point(&self, eps: f64) -> Option<&NewtonPoint> {
        self.points.iter().find(|p| p.eps == eps)
    }
}

/// Least-squares slope of `log y` against `log |ε|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub name: String,
    pub slope: f64,
    pub fit_residual: f64,
    pub nearest: i64,
    pub expected: Option<i64>,
    pub points: usize,
    pub accept: bool,
}

/// Fit `log y = a + s·log|ε|` over the positive finite samples.
pub fn fit_slope(name: &str, eps: &[f64], values: &[f64], options: &ContinuationOptions) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(values)
        .filter(|(e, v)| **e != 0.0 && v.is_finite() && **v > 0.0)
        .map(|(e, v)| (e.abs().ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - icept - slope * p.0).powi(2)).sum();
    let fit_residual = (rss / n).sqrt();
    let nearest = slope.round() as i64;
    let accept = (slope - nearest as f64).abs() < options.slope_tolerance && fit_residual < options.fit_residual_bound;
    Some(SlopeFit { name: name.to_string(), slope, fit_residual, nearest, expected: None, points: pts.len(), accept })
}

/// One row of a rate trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub eps: f64,
    pub residual: f64,
    pub abs_det: f64,
    pub inv_norm: f64,
    pub dnorms: Vec<f64>,
    pub lin_residual: f64,
}

/// Sampled rate quantities over an `ε` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceTable {
    pub k: usize,
    pub rows: Vec<TraceRow>,
    /// Comment echoed as the first CSV line.
    pub note: Option<String>,
}

impl TraceTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["eps".to_string(), "residual".into(), "abs_det".into(), "inv_norm".into()];
        h.extend((1..=self.k + 1).map(|i| format!("dnorm_{i}")));
        h.push("lin_residual".into());
        h
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let pick: Box<dyn Fn(&TraceRow) -> f64> = match name {
            "eps" => Box::new(|r| r.eps),
            "residual" => Box::new(|r| r.residual),
            "abs_det" => Box::new(|r| r.abs_det),
            "inv_norm" => Box::new(|r| r.inv_norm),
            "lin_residual" => Box::new(|r| r.lin_residual),
            other => {
                let i: usize = other.strip_prefix("dnorm_")?.parse().ok()?;
                if i == 0 || i > self.k + 1 {
                    return None;
                }
                Box::new(move |r| r.dnorms[i - 1])
            }
        };
        Some(self.rows.iter().map(pick).collect())
    }

    /// CSV with a header row and 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), KconeError> {
        if let Some(note) = &self.note {
            writeln!(out, "# {note}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header()).map_err(|e| KconeError::Input(e.to_string()))?;
        for r in &self.rows {
            let mut rec = vec![r.eps, r.residual, r.abs_det, r.inv_norm];
            rec.extend(&r.dnorms);
            rec.push(r.lin_residual);
            w.write_record(rec.iter().map(|v| format!("{v:.16e}"))).map_err(|e| KconeError::Input(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trace plus its slope fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTrace {
    pub table: TraceTable,
    pub fits: Vec<SlopeFit>,
}

impl RateTrace {
    pub fn fit(&self, name: &str) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.name == name)
    }
}

/// A point on a level set through `z₀(ε)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetPoint {
    pub eps: f64,
    pub x: Vec<f64>,
    /// `ε → 0` limit of `x`.
    pub limit: Vec<f64>,
    pub z: Vec<f64>,
    /// `‖G[z] − G[z₀(ε)]‖_∞`.
    pub residual: f64,
}

impl Cone {
    pub fn new(g: &MapJet, curve: &CurveJet, res: &ResolutionResult) -> Result<Self, KconeError> {
        if !res.transversal {
            return Err(KconeError::NotTransversal);
        }
        let ops = res.cone_operators();
        let l_hat_nc_inv = ops
            .l_hat_nc
            .inverse()
            .ok_or_else(|| KconeError::Precondition("L̂ restricted to N^c is not invertible".into()))?;
        let order = 2 * res.k + 1;
        let t = compose_curve(g, curve, order)?;
        let f = factorial(order);
        let top_term = t[order - 1].iter().map(|x| x / &f).collect();
        let approx_holds = approximation_order(g, curve, 2 * res.k)?.holds;
        Ok(Cone {
            g: g.clone(),
            curve: curve.clone(),
            res: res.clone(),
            nc_basis: ops.nc_basis,
            l_hat_nc: ops.l_hat_nc,
            l_hat_nc_inv,
            top_term,
            approx_holds,
        })
    }

    pub fn resolution(&self) -> &ResolutionResult {
        &self.res
    }

    pub fn approximation_holds(&self) -> bool {
        self.approx_holds
    }

    /// `dim N^c`, the number of Newton unknowns.
    pub fn unknowns(&self) -> usize {
        self.nc_basis.cols()
    }

    fn p_stack(&self, p: &[Q]) -> Result<Vec<Q>, KconeError> {
        let n = self.res.n;
        let mut y = vec![Q::zero(); n * (self.res.k + 1)];
        if p.is_empty() {
            return Ok(y);
        }
        if p.len() != n {
            return Err(KconeError::Dimension { what: "p", expected: n, got: p.len() });
        }
        if !self.res.p_space.contains(p) {
            return Err(KconeError::Precondition("p is not in P_(k+1)".into()));
        }
        y[n * self.res.k..].clone_from_slice(p);
        Ok(y)
    }

    fn stack(&self, x: &[Q], p: &[Q]) -> Result<Vec<Q>, KconeError> {
        Ok(vec_add(&self.nc_basis.mul_vec(x), &self.p_stack(p)?))
    }

    /// `Z_k(ε, y) = z₀(ε) + A_ε·y`, exactly.
    pub fn cone_point_exact(&self, eps: &Q, stack: &[Q]) -> Vec<Q> {
        vec_add(&self.curve.point(eps), &self.res.a_eps(eps).mul_vec(stack))
    }

    /// `Z_k(ε, n_1^c, …, n_{k+1}^c, p)` with block membership checked to `1e-10`.
    pub fn cone_point(&self, eps: f64, blocks: &[Vec<f64>], p: &[f64]) -> Result<Vec<f64>, KconeError> {
        let (n, k) = (self.res.n, self.res.k);
        if blocks.len() != k + 1 {
            return Err(KconeError::Arity { expected: k + 1, got: blocks.len() });
        }
        let mut stack = Vec::with_capacity(n * (k + 1));
        for (i, b) in blocks.iter().enumerate() {
            if b.len() != n {
                return Err(KconeError::Dimension { what: "cone block", expected: n, got: b.len() });
            }
            let basis = self.res.levels[i].kernel_complement.basis().to_f64();
            if !float_member(&basis, b) {
                return Err(KconeError::Precondition(format!("block {} is not in N_{}^c", i + 1, i + 1)));
            }
            stack.extend(q_vec(b));
        }
        if !p.is_empty() {
            if !float_member(&self.res.p_space.basis().to_f64(), p) {
                return Err(KconeError::Precondition("p is not in P_(k+1)".into()));
            }
            let last = n * k;
            let pq = q_vec(p);
            for (s, v) in stack[last..].iter_mut().zip(&pq) {
                *s += v;
            }
        }
        Ok(f_vec(&self.cone_point_exact(&from_f64(eps), &stack)))
    }

    /// Exact blown-up remainder at stack coordinates `x`.
    pub fn remainder_h_exact(&self, eps: &Q, x: &[Q], p: &[Q]) -> Result<Vec<Q>, KconeError> {
        if !self.approx_holds {
            return Err(KconeError::Precondition(format!("approximation of order {} fails", 2 * self.res.k)));
        }
        self.raw_h(eps, x, p)
    }

    fn raw_h(&self, eps: &Q, x: &[Q], p: &[Q]) -> Result<Vec<Q>, KconeError> {
        let stack = self.stack(x, p)?;
        if eps.is_zero() {
            return Ok(vec_add(&self.top_term, &self.res.l_hat.mul_vec(&stack)));
        }
        let z = self.cone_point_exact(eps, &stack);
        let scale = Q::one() / pow(eps, 2 * self.res.k + 1);
        Ok(self.g.eval_exact(&z)?.iter().map(|v| v * &scale).collect())
    }

    /// `H(ε, n^c, p)` rounded to `f64`.
    pub fn remainder_h(&self, eps: f64, x: &[f64], p: &[f64]) -> Result<Vec<f64>, KconeError> {
        Ok(f_vec(&self.remainder_h_exact(&from_f64(eps), &q_vec(x), &q_vec(p))?))
    }

    fn h_jacobian(&self, eps: &Q, x: &[Q], p: &[Q]) -> Result<DMatrix<f64>, KconeError> {
        if eps.is_zero() {
            return Ok(self.l_hat_nc.to_f64());
        }
        let stack = self.stack(x, p)?;
        let z = self.cone_point_exact(eps, &stack);
        let scale = Q::one() / pow(eps, 2 * self.res.k + 1);
        let j = self.g.jacobian_exact(&z)?.mul(&self.res.a_eps(eps)).mul(&self.nc_basis).scale(&scale);
        Ok(j.to_f64())
    }

    /// Exact solution of `H(0, ·, p) = 0`.
    pub fn base_solution(&self, p: &[Q]) -> Result<Vec<Q>, KconeError> {
        let rhs = vec_add(&self.top_term, &self.res.l_hat.mul_vec(&self.p_stack(p)?));
        Ok(self.l_hat_nc_inv.mul_vec(&rhs).iter().map(|v| -v).collect())
    }

    fn accept_g(&self, z: &[Q]) -> Result<(f64, f64), KconeError> {
        let gz = f_vec(&self.g.eval_exact(z)?);
        let jac = self.g.jacobian_exact(z)?.to_f64();
        let zn = DVector::from_vec(f_vec(z)).norm();
        Ok((inf_norm(&gz), (spectral_norm(&jac) * zn).max(1.0)))
    }

    /// Damped Newton on `F(x) = 0` with exact residuals and Jacobians.
    fn newton<F, J>(&self, eps: f64, start: &[f64], options: &ContinuationOptions, f: F, jac: J) -> Result<(Vec<f64>, f64, usize), KconeError>
    where
        F: Fn(&[Q]) -> Result<Vec<Q>, KconeError>,
        J: Fn(&[Q]) -> Result<DMatrix<f64>, KconeError>,
    {
        let lnorm = spectral_norm(&self.l_hat_nc.to_f64());
        let mut x = start.to_vec();
        let mut r = f_vec(&f(&q_vec(&x))?);
        let tol = |x: &[f64]| options.tolerance * (lnorm * inf_norm(x)).max(1.0);
        for it in 0..=options.max_iterations {
            if inf_norm(&r) <= tol(&x) {
                return Ok((x, inf_norm(&r), it));
            }
            if it == options.max_iterations {
                break;
            }
            let jm = jac(&q_vec(&x))?;
            let step = jm
                .lu()
                .solve(&DVector::from_vec(r.clone()))
                .ok_or(KconeError::NewtonDivergence { eps, residual: inf_norm(&r) })?;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..=options.max_halvings {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
                let rt = f_vec(&f(&q_vec(&trial))?);
                if inf_norm(&rt) < inf_norm(&r) || inf_norm(&rt) <= tol(&trial) {
                    x = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            if inf_norm(&x) > options.cone_box {
                return Err(KconeError::ExitedCone { eps });
            }
        }
        Err(KconeError::NewtonDivergence { eps, residual: inf_norm(&r) })
    }

    /// Newton solve of `H(ε, ·, p) = 0` from `start`.
    pub fn newton_at(&self, eps: f64, start: &[f64], p: &[f64], options: &ContinuationOptions) -> Result<NewtonPoint, KconeError> {
        self.solve_point(eps, start, p, options, true)
    }

    fn solve_point(&self, eps: f64, start: &[f64], p: &[f64], options: &ContinuationOptions, checked: bool) -> Result<NewtonPoint, KconeError> {
        if checked && !self.approx_holds {
            return Err(KconeError::Precondition(format!("approximation of order {} fails", 2 * self.res.k)));
        }
        let eq = from_f64(eps);
        let pq = q_vec(p);
        let (x, residual_h, iterations) =
            self.newton(eps, start, options, |x| self.raw_h(&eq, x, &pq), |x| self.h_jacobian(&eq, x, &pq))?;
        let z = self.cone_point_exact(&eq, &self.stack(&q_vec(&x), &pq)?);
        let (residual_g, residual_scale) = self.accept_g(&z)?;
        if residual_g >= options.tolerance * residual_scale {
            return Err(KconeError::NewtonDivergence { eps, residual: residual_g });
        }
        Ok(NewtonPoint { eps, x, z: f_vec(&z), residual_h, residual_g, residual_scale, iterations })
    }

    /// `ε`-homotopy from the base solution at `ε = 0` through the grid, one half-cone at a time.
    pub fn newton_continue(&self, grid: &[f64], p: &[f64], options: &ContinuationOptions) -> Result<ContinuationRun, KconeError> {
        self.continue_inner(grid, p, options, true)
    }

    /// Same sweep without the approximation precondition; every point is expected to fail
    /// when the curve is not an approximation of order `2k`.
    pub fn probe_without_approximation(&self, grid: &[f64], options: &ContinuationOptions) -> Result<ContinuationRun, KconeError> {
        self.continue_inner(grid, &[], options, false)
    }

    fn continue_inner(&self, grid: &[f64], p: &[f64], options: &ContinuationOptions, checked: bool) -> Result<ContinuationRun, KconeError> {
        if checked && !self.approx_holds {
            return Err(KconeError::Precondition(format!("approximation of order {} fails", 2 * self.res.k)));
        }
        let base = if self.approx_holds { f_vec(&self.base_solution(&q_vec(p))?) } else { vec![0.0; self.unknowns()] };
        let mut points = Vec::new();
        let mut failures = Vec::new();
        for sign in [1.0f64, -1.0] {
            let mut half: Vec<f64> = grid.iter().copied().filter(|e| e * sign > 0.0).collect();
            half.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
            let mut start = base.clone();
            for eps in half {
                match self.solve_point(eps, &start, p, options, checked) {
                    Ok(pt) => {
                        start = pt.x.clone();
                        points.push(pt);
                    }
                    Err(e) => failures.push(NewtonFailure { eps, reason: e.to_string() }),
                }
            }
        }
        let order: Vec<f64> = grid.to_vec();
        points.sort_by_key(|p| order.iter().position(|e| *e == p.eps));
        let identity = self.identity_fit(&points);
        Ok(ContinuationRun { base, points, failures, identity })
    }

    /// Polynomial fit of `z(ε,p) − z₀(ε)` of degree `k+2` in `ε/ε_max`; low coefficients through `ε^k` must vanish.
    fn identity_fit(&self, points: &[NewtonPoint]) -> Option<IdentityFit> {
        let k = self.res.k;
        let degree = k + 2;
        if points.len() <= degree {
            return None;
        }
        let emax = points.iter().fold(0.0f64, |a, p| a.max(p.eps.abs()));
        let rows = points.len();
        let vander = DMatrix::from_fn(rows, degree + 1, |i, j| (points[i].eps / emax).powi(j as i32));
        let svd = vander.svd(true, true);
        let mut worst = 0.0f64;
        for c in 0..self.res.n {
            let d = DVector::from_fn(rows, |i, _| {
                let z0 = f_vec(&self.curve.point(&from_f64(points[i].eps)));
                points[i].z[c] - z0[c]
            });
            let b = svd.solve(&d, 1e-14).ok()?;
            for bj in b.iter().take(k + 1) {
                worst = worst.max(bj.abs());
            }
        }
        Some(IdentityFit { through_order: k, degree, max_low_coefficient: worst, holds: worst < 1e-8 })
    }

    /// Probe stack with block `i` the sum of the basis of `N_{i−1}` (`N_0 = B`).
    pub fn linearization_probe(&self) -> Vec<Q> {
        let n = self.res.n;
        let mut y = Vec::with_capacity(n * (self.res.k + 1));
        y.extend(vec![Q::one(); n]);
        for lv in &self.res.levels[..self.res.k] {
            let b = lv.kernel.basis();
            y.extend((0..n).map(|r| (0..b.cols()).fold(Q::zero(), |a, c| a + &b[(r, c)])));
        }
        y
    }

    fn trace_row(&self, eps: f64, run: Option<&ContinuationRun>, probe: &[Q]) -> Result<TraceRow, KconeError> {
        let (n, k) = (self.res.n, self.res.k);
        let eq = from_f64(eps);
        let z0 = self.curve.point(&eq);
        let jac = self.g.jacobian_exact(&z0)?;
        let gnc = jac.mul(&self.res.nc_basis()).to_f64();
        let abs_det = if gnc.is_square() { gnc.clone().lu().determinant().abs() } else { f64::NAN };
        let inv_norm = if gnc.is_square() && gnc.nrows() > 0 {
            let s = gnc.clone().svd(false, false).singular_values;
            1.0 / s.min()
        } else {
            f64::NAN
        };
        let a = self.res.a_eps(&eq);
        let dnorms = (0..=k)
            .map(|i| {
                let basis = self.res.levels[i].kernel_complement.basis();
                if basis.cols() == 0 {
                    return f64::NAN;
                }
                let dir = a.sub_matrix(0, i * n, n, n).mul(basis);
                spectral_norm(&jac.mul(&dir).to_f64()) / spectral_norm(&dir.to_f64())
            })
            .collect();
        let gz0 = self.g.eval_exact(&z0)?;
        let gz = self.g.eval_exact(&self.cone_point_exact(&eq, probe))?;
        let lin = self.res.l_hat.mul_vec(probe);
        let e = pow(&eq, 2 * k + 1);
        let lin_res = vec_sub(&vec_sub(&gz, &gz0), &lin.iter().map(|v| v * &e).collect::<Vec<_>>());
        let residual = match run.and_then(|r| r.point(eps)) {
            Some(p) => p.residual_g,
            None => f64::NAN,
        };
        Ok(TraceRow { eps, residual, abs_det, inv_norm, dnorms, lin_residual: inf_norm(&f_vec(&lin_res)) })
    }

    /// Rate quantities over the grid with slope fits against their exact exponents.
    ///
    /// The linearization residual is fitted on the lower logarithmic half of `|ε|`.
    pub fn rate_trace(&self, grid: &[f64], run: Option<&ContinuationRun>, options: &ContinuationOptions) -> Result<RateTrace, KconeError> {
        let probe = self.linearization_probe();
        let rows: Vec<TraceRow> =
            grid.par_iter().map(|&e| self.trace_row(e, run, &probe)).collect::<Result<_, _>>()?;
        let table = TraceTable { k: self.res.k, rows, note: None };
        let eps = table.column("eps").expect("eps column");
        let mut fits = Vec::new();
        let top = self
            .res
            .levels
            .iter()
            .rposition(|lv| lv.kernel_complement.dim() > 0)
            .map_or(0, |i| i as i64);
        let mags: Vec<f64> = eps.iter().map(|e| e.abs()).filter(|e| *e > 0.0).collect();
        let split = (mags.iter().fold(0.0f64, |a, e| a.max(*e)) * mags.iter().fold(f64::INFINITY, |a, e| a.min(*e))).sqrt();
        let mut push = |name: &str, expected: i64, at_least: bool| {
            let mut values = table.column(name).expect("known column");
            if at_least {
                for (v, e) in values.iter_mut().zip(&eps) {
                    if e.abs() > split {
                        *v = f64::NAN;
                    }
                }
            }
            if let Some(mut f) = fit_slope(name, &eps, &values, options) {
                f.expected = Some(expected);
                f.accept &= if at_least { f.nearest >= expected } else { f.nearest == expected };
                fits.push(f);
            }
        };
        push("abs_det", self.res.chi() as i64, false);
        push("inv_norm", -top, false);
        for (i, lv) in self.res.levels.iter().enumerate() {
            if lv.kernel_complement.dim() > 0 {
                push(&format!("dnorm_{}", i + 1), i as i64, false);
            }
        }
        push("lin_residual", 2 * self.res.k as i64 + 2, true);
        Ok(RateTrace { table, fits })
    }

    /// `ε → 0` limit of the level-set coordinates for `n_{k+1} ∈ N_{k+1}`.
    pub fn level_set_limit(&self, n_top: &[Q]) -> Vec<Q> {
        let (n, k) = (self.res.n, self.res.k);
        let mut y = vec![Q::zero(); n * (k + 1)];
        y[n * k..].clone_from_slice(n_top);
        self.l_hat_nc_inv.mul_vec(&self.res.l_hat.mul_vec(&y)).iter().map(|v| -v).collect()
    }

    /// Solve `G[Z_k(ε, n̄^c + n_{k+1})] = G[z₀(ε)]` for the `N^c` coordinates.
    pub fn level_set(&self, eps: f64, n_top: &[f64], options: &ContinuationOptions) -> Result<LevelSetPoint, KconeError> {
        let (n, k) = (self.res.n, self.res.k);
        if eps == 0.0 {
            return Err(KconeError::Precondition("level sets are solved for ε ≠ 0".into()));
        }
        if n_top.len() != n {
            return Err(KconeError::Dimension { what: "n_(k+1)", expected: n, got: n_top.len() });
        }
        if !float_member(&self.res.top_kernel().basis().to_f64(), n_top) {
            return Err(KconeError::Precondition("n_(k+1) is not in N_(k+1)".into()));
        }
        let nq = q_vec(n_top);
        let eq = from_f64(eps);
        let scale = Q::one() / pow(&eq, 2 * k + 1);
        let gz0 = self.g.eval_exact(&self.curve.point(&eq))?;
        let top_stack = {
            let mut y = vec![Q::zero(); n * (k + 1)];
            y[n * k..].clone_from_slice(&nq);
            y
        };
        let point = |x: &[Q]| self.cone_point_exact(&eq, &vec_add(&self.nc_basis.mul_vec(x), &top_stack));
        let f = |x: &[Q]| -> Result<Vec<Q>, KconeError> {
            let gz = self.g.eval_exact(&point(x))?;
            Ok(vec_sub(&gz, &gz0).iter().map(|v| v * &scale).collect())
        };
        let jac = |x: &[Q]| -> Result<DMatrix<f64>, KconeError> {
            Ok(self.g.jacobian_exact(&point(x))?.mul(&self.res.a_eps(&eq)).mul(&self.nc_basis).scale(&scale).to_f64())
        };
        let limit = f_vec(&self.level_set_limit(&nq));
        let (x, _, _) = if vec_is_zero(&nq) {
            (vec![0.0; self.unknowns()], 0.0, 0)
        } else {
            self.newton(eps, &limit, options, f, jac)?
        };
        let z = point(&q_vec(&x));
        let residual = inf_norm(&f_vec(&vec_sub(&self.g.eval_exact(&z)?, &gz0)));
        Ok(LevelSetPoint { eps, x, limit, z: f_vec(&z), residual })
    }
}

fn float_member(basis: &DMatrix<f64>, v: &[f64]) -> bool {
    let vn = inf_norm(v);
    if vn == 0.0 {
        return true;
    }
    if basis.ncols() == 0 {
        return false;
    }
    let target = DVector::from_column_slice(v);
    let Ok(c) = basis.clone().svd(true, true).solve(&target, 1e-14) else { return false };
    (basis * c - target).amax() <= 1e-10 * vn.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::qi;
    use crate::multijet::Monomial;
    use crate::resolution::build_resolution;

    fn mono(c: i64, e: &[u32]) -> Monomial {
        Monomial::new(qi(c), e.to_vec())
    }

    fn taylor(n: usize, cs: &[(usize, Vec<i64>)], len: usize) -> CurveJet {
        let mut t = vec![vec![Q::zero(); n]; len];
        for (i, v) in cs {
            t[*i - 1] = v.iter().map(|&x| qi(x)).collect();
        }
        CurveJet::from_taylor(n, t).unwrap()
    }

    fn pitchfork() -> Cone {
        let g = MapJet::from_polynomial(2, 1, vec![vec![mono(1, &[1, 1]), mono(-1, &[0, 3])]]).unwrap();
        let c = taylor(2, &[(1, vec![0, 1]), (2, vec![1, 0])], 2);
        let res = build_resolution(&g, &c, 1).unwrap();
        Cone::new(&g, &c, &res).unwrap()
    }

    fn sextic() -> MapJet {
        MapJet::from_polynomial(2, 1, vec![vec![mono(-1, &[1, 3]), mono(1, &[5, 0]), mono(1, &[0, 6])]]).unwrap()
    }

    fn secondary() -> Cone {
        let g = sextic();
        let c = taylor(2, &[(1, vec![0, 1]), (3, vec![1, 0])], 3);
        let res = build_resolution(&g, &c, 3).unwrap();
        Cone::new(&g, &c, &res).unwrap()
    }

    #[test]
    fn grids() {
        let g = geometric_grid(0.1, 1e-4, 25, true);
        assert_eq!(g.len(), 50);
        assert!((g[24] - 1e-4).abs() < 1e-16);
        assert!(g[..25].windows(2).all(|w| w[0] > w[1]));
        assert_eq!(default_grid(11, false)[0], 0.2);
    }

    #[test]
    fn cone_point_center_and_first_order_closed_form() {
        let cone = pitchfork();
        let zero = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let z = cone.cone_point(0.3, &zero, &[]).unwrap();
        assert!((z[0] - 0.09).abs() < 1e-16 && z[1] == 0.3);
        assert_eq!(cone.cone_point(0.0, &[vec![0.0, 0.0], vec![1.0, 0.0]], &[]).unwrap(), vec![0.0, 0.0]);
        let eps = 0.5;
        let z = cone.cone_point(eps, &[vec![0.0, 0.0], vec![2.0, 0.0]], &[]).unwrap();
        let expect = eps * eps + 0.5 * eps * eps * 2.0;
        assert!((z[0] - expect).abs() < 1e-15);
        assert!(cone.cone_point(eps, &[vec![0.0, 0.0], vec![0.0, 1.0]], &[]).is_err());
    }

    #[test]
    fn remainder_at_zero_is_affine() {
        let cone = pitchfork();
        assert_eq!(cone.remainder_h(0.0, &[0.0], &[]).unwrap(), vec![0.0]);
        let h0 = cone.remainder_h(0.0, &[1.0], &[]).unwrap();
        let h1 = cone.remainder_h(1e-6, &[1.0], &[]).unwrap();
        assert!((h0[0] - h1[0]).abs() < 1e-5);
    }

    #[test]
    fn pitchfork_continuation_is_exact() {
        let cone = pitchfork();
        let opts = ContinuationOptions::default();
        let run = cone.newton_continue(&default_grid(1, true), &[], &opts).unwrap();
        assert!(run.failures.is_empty());
        assert_eq!(run.points.len(), 50);
        assert!(run.max_residual_g() < 1e-12);
        assert!(run.points.iter().all(|p| p.x[0].abs() < 1e-14));
        assert!(run.identity.unwrap().holds);
    }

    #[test]
    fn secondary_branch_rates() {
        let cone = secondary();
        let opts = ContinuationOptions::default();
        let grid = default_grid(3, true);
        let run = cone.newton_continue(&grid, &[], &opts).unwrap();
        assert!(run.failures.is_empty(), "{:?}", run.failures);
        let tr = cone.rate_trace(&grid, Some(&run), &opts).unwrap();
        let det = tr.fit("abs_det").unwrap();
        assert!(det.accept && (det.slope - 3.0).abs() < 0.05, "{det:?}");
        let inv = tr.fit("inv_norm").unwrap();
        assert!(inv.accept && (inv.slope + 3.0).abs() < 0.05, "{inv:?}");
        let lin = tr.fit("lin_residual").unwrap();
        assert!(lin.accept, "{lin:?}");
        for f in &tr.fits {
            assert!(f.accept, "{f:?}");
        }
    }

    #[test]
    fn continuation_is_grid_independent() {
        let cone = secondary();
        let opts = ContinuationOptions::default();
        let direct = cone.newton_continue(&[0.05], &[], &opts).unwrap();
        let stepped = cone.newton_continue(&[0.01, 0.02, 0.03, 0.05], &[], &opts).unwrap();
        let a = &direct.point(0.05).unwrap().x;
        let b = &stepped.point(0.05).unwrap().x;
        assert!(a.iter().zip(b).all(|(u, v)| (u - v).abs() < 1e-10));
    }

    #[test]
    fn broken_approximation_has_no_solutions() {
        let g = sextic().with_monomial(0, mono(1, &[0, 6])).unwrap();
        let c = taylor(2, &[(1, vec![0, 1]), (3, vec![1, 0])], 3);
        let res = build_resolution(&g, &c, 3).unwrap();
        assert_eq!(res, secondary().resolution().clone());
        let cone = Cone::new(&g, &c, &res).unwrap();
        assert!(!cone.approximation_holds());
        let opts = ContinuationOptions { cone_box: 1e3, ..ContinuationOptions::default() };
        assert!(cone.newton_continue(&[1e-3], &[], &opts).is_err());
        let grid = geometric_grid(1e-3, 1e-4, 9, true);
        let probe = cone.probe_without_approximation(&grid, &opts).unwrap();
        assert!(probe.points.is_empty());
        assert_eq!(probe.failures.len(), 18);
    }

    #[test]
    fn pitchfork_level_set_is_solution_set() {
        let cone = pitchfork();
        let opts = ContinuationOptions::default();
        let lv = cone.level_set(0.1, &[0.0, 0.0], &opts).unwrap();
        assert!(lv.x.iter().all(|v| *v == 0.0));
        let lv = cone.level_set(0.1, &[0.0, 0.7], &opts).unwrap();
        assert!(lv.residual < 1e-12);
        let z = &lv.z;
        assert!((z[0] - z[1] * z[1]).abs() < 1e-12);
    }

    #[test]
    fn level_set_tends_to_its_limit() {
        let cone = secondary();
        let opts = ContinuationOptions::default();
        let n_top = vec![0.0, 0.5];
        let mut ratios = Vec::new();
        for eps in [1e-2, 1e-3, 1e-4] {
            let lv = cone.level_set(eps, &n_top, &opts).unwrap();
            let d = lv.x.iter().zip(&lv.limit).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
            ratios.push(d / eps);
        }
        assert!(ratios.iter().all(|r| *r < 1e3), "{ratios:?}");
        assert!(ratios[2] <= ratios[0] * 10.0);
    }

    #[test]
    fn base_solution_is_exact() {
        let cone = secondary();
        let x0 = cone.base_solution(&[]).unwrap();
        assert!(vec_is_zero(&cone.remainder_h_exact(&Q::zero(), &x0, &[]).unwrap()));
    }

    #[test]
    fn csv_has_header_and_seventeen_digits() {
        let cone = pitchfork();
        let tr = cone.rate_trace(&[0.1, 0.01], None, &ContinuationOptions::default()).unwrap();
        let mut buf = Vec::new();
        let mut t = tr.table.clone();
        t.note = Some("grid 0.1:0.01:2".into());
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# grid 0.1:0.01:2");
        assert_eq!(lines[1], "eps,residual,abs_det,inv_norm,dnorm_1,dnorm_2,lin_residual");
        assert!(lines[2].starts_with("1.0000000000000001e-1,"));
    }
}
