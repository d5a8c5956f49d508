//! Operators of the system of undetermined coefficients.
//!
//! Writing `ẑ_τ = z_τ/τ!`, every coefficient `T^N` of `G[Σ ε^τ ẑ_τ]` is
//! `N!·Σ_β Σ_{Σn=β, Στn_τ=N} (Πn_τ!)⁻¹ G₀^β[ẑ_1^{n_1}, ẑ_2^{n_2}, …]`.
//! The W-operators are the coefficients of the single highest `z_μ`, the
//! R-terms collect what is left once those are removed.

use num_traits::{One, Zero};

use crate::error::KconeError;
use crate::linalg::{factorial, qi, vec_add, vec_is_zero, vec_max_abs, vec_sub, QMatrix, Q};
use crate::multijet::{compose_curve, CurveJet, MapJet};
use crate::schemes::{block_expand, gamma_diag, hurwitz_gamma, SchemeTable};

/// Matrix over the base field; block layouts are documented per operation.
pub type LinearOp = QMatrix;

/// Outcome of an exact identity comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityCheck {
    pub holds: bool,
    pub max_deviation: Q,
    pub detail: String,
}

impl IdentityCheck {
    pub fn pass() -> Self {
        IdentityCheck { holds: true, max_deviation: Q::zero(), detail: String::new() }
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        IdentityCheck { holds: false, max_deviation: Q::zero(), detail: detail.into() }
    }

    pub fn vectors(label: &str, lhs: &[Q], rhs: &[Q]) -> Self {
        let dev = vec_max_abs(&vec_sub(lhs, rhs));
        let holds = dev.is_zero();
        let detail = if holds { String::new() } else { format!("{label}: deviation {dev}") };
        IdentityCheck { holds, max_deviation: dev, detail }
    }

    pub fn matrices(label: &str, lhs: &QMatrix, rhs: &QMatrix) -> Self {
        if lhs.rows() != rhs.rows() || lhs.cols() != rhs.cols() {
            return Self::fail(format!(
                "{label}: shape {}x{} vs {}x{}",
                lhs.rows(),
                lhs.cols(),
                rhs.rows(),
                rhs.cols()
            ));
        }
        let dev = lhs.sub(rhs).max_abs();
        let holds = dev.is_zero();
        let detail = if holds { String::new() } else { format!("{label}: deviation {dev}") };
        IdentityCheck { holds, max_deviation: dev, detail }
    }

    /// Conjunction, keeping the first failure's detail.
    pub fn and(mut self, other: IdentityCheck) -> Self {
        if self.max_deviation < other.max_deviation {
            self.max_deviation = other.max_deviation.clone();
        }
        if self.holds && !other.holds {
            self.detail = other.detail;
        }
        self.holds &= other.holds;
        self
    }
}

/// `z_τ` for 1-based `τ`, zero when absent.
fn coeff(zs: &[Vec<Q>], n: usize, tau: usize) -> Vec<Q> {
    zs.get(tau - 1).cloned().unwrap_or_else(|| vec![Q::zero(); n])
}

fn scaled(zs: &[Vec<Q>], n: usize, tau_max: usize) -> Vec<Vec<Q>> {
    (1..=tau_max)
        .map(|tau| {
            let f = factorial(tau);
            coeff(zs, n, tau).into_iter().map(|x| x / &f).collect()
        })
        .collect()
}

fn enumerate(
    t: usize,
    tau: usize,
    active: &[bool],
    parts_left: usize,
    mult: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if t == 0 {
        out.push(mult.clone());
        return;
    }
    if tau == 0 {
        return;
    }
    let max_n = if active[tau - 1] { (t / tau).min(parts_left) } else { 0 };
    for n in (0..=max_n).rev() {
        mult[tau - 1] = n;
        enumerate(t - n * tau, tau - 1, active, parts_left - n, mult, out);
    }
    mult[tau - 1] = 0;
}

/// Multiplicity vectors `(n_1 … n_{τmax})` with `Σ τ·n_τ = t`, `n_τ = 0`
/// whenever `z_τ = 0`, and at most `max_parts` entries in total.
pub fn weighted_compositions(t: usize, tau_max: usize, active: &[bool], max_parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut mult = vec![0; tau_max];
    enumerate(t, tau_max, active, max_parts, &mut mult, &mut out);
    out
}

struct Term<'a> {
    beta: usize,
    weight: Q,
    args: Vec<&'a [Q]>,
}

fn terms<'a>(g: &MapJet, zhat: &'a [Vec<Q>], t: usize, free: bool) -> Vec<Term<'a>> {
    let tau_max = zhat.len();
    let active: Vec<bool> = zhat.iter().map(|z| !vec_is_zero(z)).collect();
    let extra = usize::from(free);
    let max_parts = g.degree().saturating_sub(extra);
    weighted_compositions(t, tau_max, &active, max_parts)
        .into_iter()
        .filter_map(|mult| {
            let parts: usize = mult.iter().sum();
            let beta = parts + extra;
            if beta == 0 || g.form_is_zero(beta) {
                return None;
            }
            let mut weight = Q::one();
            let mut args: Vec<&[Q]> = Vec::with_capacity(parts);
            for (i, &ni) in mult.iter().enumerate() {
                weight /= factorial(ni);
                for _ in 0..ni {
                    args.push(&zhat[i]);
                }
            }
            Some(Term { beta, weight, args })
        })
        .collect()
}

/// `Σ_{Στn_τ=t, τ≤τmax} (Πn_τ!)⁻¹ G₀^{Σn+1}[ẑ…, ·]` as an m×n matrix.
fn q_free(g: &MapJet, zs: &[Vec<Q>], t: usize, tau_max: usize) -> Result<QMatrix, KconeError> {
    let zhat = scaled(zs, g.n(), tau_max);
    let mut out = QMatrix::zeros(g.m(), g.n());
    for term in terms(g, &zhat, t, true) {
        let part = g.apply_partial(term.beta, &term.args)?;
        out.add_assign(&part.scale(&term.weight));
    }
    Ok(out)
}

/// `Σ_{Στn_τ=t, τ≤τmax} (Πn_τ!)⁻¹ G₀^{Σn}[ẑ…]` as a vector.
fn q_closed(g: &MapJet, zs: &[Vec<Q>], t: usize, tau_max: usize) -> Result<Vec<Q>, KconeError> {
    let zhat = scaled(zs, g.n(), tau_max);
    let mut out = vec![Q::zero(); g.m()];
    for term in terms(g, &zhat, t, false) {
        let v = g.apply(term.beta, &term.args)?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += x * &term.weight;
        }
    }
    Ok(out)
}

/// Coefficient of `z_μ` in `T^total` restricted to fixed arguments `z_τ`, `τ ≤ τmax`.
pub fn w_general(g: &MapJet, zs: &[Vec<Q>], total: usize, mu: usize, tau_max: usize) -> Result<LinearOp, KconeError> {
    if mu == 0 || mu > total {
        return Err(KconeError::IndexBand { total, mu });
    }
    g.ensure_order(total - mu + 1)?;
    let scale = factorial(total) / factorial(mu);
    Ok(q_free(g, zs, total - mu, tau_max)?.scale(&scale))
}

/// `W_μ^{total}(z_1 … z_{⌊total/2⌋})`; valid for `⌈total/2⌉ ≤ μ ≤ total`.
pub fn w_operator(g: &MapJet, zs: &[Vec<Q>], total: usize, mu: usize) -> Result<LinearOp, KconeError> {
    if mu == 0 || mu > total || 2 * mu < total {
        return Err(KconeError::IndexBand { total, mu });
    }
    w_general(g, zs, total, mu, (total - mu).min(mu - 1))
}

/// The row block `[W_total^total … W_⌈total/2⌉^total]`.
pub fn w_row(g: &MapJet, zs: &[Vec<Q>], total: usize) -> Result<LinearOp, KconeError> {
    let blocks: Vec<QMatrix> =
        (total.div_ceil(2)..=total).rev().map(|mu| w_operator(g, zs, total, mu)).collect::<Result<_, _>>()?;
    Ok(QMatrix::hstack(&blocks.iter().collect::<Vec<_>>()))
}

/// All summands of `T^total` that involve only `z_τ` with `τ ≤ τmax`.
pub fn r_general(g: &MapJet, zs: &[Vec<Q>], total: usize, tau_max: usize) -> Result<Vec<Q>, KconeError> {
    g.ensure_order(total)?;
    let f = factorial(total);
    Ok(q_closed(g, zs, total, tau_max)?.into_iter().map(|x| x * &f).collect())
}

/// `R^{total}`: depends on `z_1 … z_{k−1}` for `total = 2k` and on `z_1 … z_k` for `total = 2k+1`.
pub fn r_inhomogeneity(g: &MapJet, zs: &[Vec<Q>], total: usize) -> Result<Vec<Q>, KconeError> {
    if total == 0 {
        return Err(KconeError::IndexBand { total, mu: 0 });
    }
    let tau_max = if total.is_multiple_of(2) { total / 2 - 1 } else { total / 2 };
    r_general(g, zs, total, tau_max)
}

/// `(2k)!/(2(k!)²)·G₀²[z_k, z_k]`, the quadratic term in the even component.
pub fn even_square_term(g: &MapJet, zk: &[Q], k: usize) -> Result<Vec<Q>, KconeError> {
    g.ensure_order(2)?;
    let c = factorial(2 * k) / (factorial(k) * factorial(k) * qi(2));
    Ok(g.apply(2, &[zk, zk])?.into_iter().map(|x| x * &c).collect())
}

/// `(2k)!/(k!)²·G₀²[z_k, ·]`.
pub fn even_square_partial(g: &MapJet, zk: &[Q], k: usize) -> Result<LinearOp, KconeError> {
    g.ensure_order(2)?;
    let c = factorial(2 * k) / (factorial(k) * factorial(k));
    Ok(g.apply_partial(2, &[zk])?.scale(&c))
}

/// The assembled even system and the odd component.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffSystem {
    pub k: usize,
    /// Block upper triangular, rows `T^{2k} … T^{k+1}`, columns `z_{2k} … z_{k+1}`.
    pub delta: LinearOp,
    /// `I^k`, stacked `m`-blocks for `T^{2k} … T^{k+1}`.
    pub inhom: Vec<Q>,
    /// `[W_{2k+1}^{2k+1} … W_{k+1}^{2k+1}]`, present when the jet order allows.
    pub w_odd: Option<LinearOp>,
    /// `R^{2k+1}`, present when the jet order allows.
    pub r_odd: Option<Vec<Q>>,
}

impl CoeffSystem {
    /// Block `(r, c)` of `Δ^k` (0-based, row `T^{2k−r}`, column `z_{2k−c}`).
    pub fn delta_block(&self, m: usize, n: usize, r: usize, c: usize) -> QMatrix {
        self.delta.sub_matrix(r * m, c * n, m, n)
    }

    /// `Δ^k·(z_{2k} … z_{k+1}) + I^k`.
    pub fn apply_even(&self, upper: &[Vec<Q>]) -> Vec<Q> {
        let stacked: Vec<Q> = upper.iter().flatten().cloned().collect();
        vec_add(&self.delta.mul_vec(&stacked), &self.inhom)
    }
}

/// `Δ^k(z_{k−1} … z_1)` on its own.
pub fn delta_matrix(g: &MapJet, zs: &[Vec<Q>], k: usize) -> Result<LinearOp, KconeError> {
    let (m, n) = (g.m(), g.n());
    let mut delta = QMatrix::zeros(m * k, n * k);
    for r in 0..k {
        for c in r..k {
            let block = w_general(g, zs, 2 * k - r, 2 * k - c, c - r)?;
            delta.set_sub_matrix(r * m, c * n, &block);
        }
    }
    Ok(delta)
}

/// Assemble `Δ^k`, `I^k` and, when the jet order permits, `W^{2k+1}`, `R^{2k+1}`.
pub fn delta_system(g: &MapJet, zs: &[Vec<Q>], k: usize) -> Result<CoeffSystem, KconeError> {
    if k == 0 {
        return Err(KconeError::Precondition("k must be at least 1".into()));
    }
    g.ensure_order(2 * k)?;
    let delta = delta_matrix(g, zs, k)?;
    let mut inhom = Vec::with_capacity(g.m() * k);
    for r in 0..k {
        inhom.extend(r_general(g, zs, 2 * k - r, k)?);
    }
    let odd_ok = g.ensure_order(2 * k + 1).is_ok();
    let (w_odd, r_odd) = if odd_ok {
        (Some(w_row(g, zs, 2 * k + 1)?), Some(r_inhomogeneity(g, zs, 2 * k + 1)?))
    } else {
        (None, None)
    };
    Ok(CoeffSystem { k, delta, inhom, w_odd, r_odd })
}

/// Exact check of `(T^k … T^1) = (Γ^k)⁻¹·Δ^k(z_{k−1} … z_1)·Γ^k·(z_k … z_1)`.
pub fn gamma_identity_check(g: &MapJet, zs: &[Vec<Q>], k: usize) -> Result<IdentityCheck, KconeError> {
    if k == 0 {
        return Err(KconeError::Precondition("k must be at least 1".into()));
    }
    let (m, n) = (g.m(), g.n());
    let prefix: Vec<Vec<Q>> = (1..=k).map(|t| coeff(zs, n, t)).collect();
    if prefix.iter().all(|z| vec_is_zero(z)) {
        return Ok(IdentityCheck::pass());
    }
    let curve = CurveJet::new(n, prefix.clone())?;
    let t = compose_curve(g, &curve, k)?;
    let lhs: Vec<Q> = t.iter().rev().flatten().cloned().collect();
    let delta = delta_matrix(g, zs, k)?;
    let gamma = gamma_diag(k)?;
    let gamma_inv: Vec<Q> = gamma.iter().map(|x| Q::one() / x).collect();
    let stacked: Vec<Q> = prefix.iter().rev().flatten().cloned().collect();
    let rhs = block_expand(&gamma_inv, m).mul_vec(&delta.mul_vec(&block_expand(&gamma, n).mul_vec(&stacked)));
    Ok(IdentityCheck::vectors("gamma identity", &lhs, &rhs))
}

/// `T^{2t}_{z_t}`: the partial derivative of `T^{2t}` in `z_t`; `G₀¹` for `t = 0`.
pub fn t_partial(g: &MapJet, zs: &[Vec<Q>], t: usize) -> Result<LinearOp, KconeError> {
    if t == 0 {
        g.ensure_order(1)?;
        return Ok(g.linear_part());
    }
    let w = w_general(g, zs, 2 * t, t, t - 1)?;
    Ok(w.add(&even_square_partial(g, &coeff(zs, g.n(), t), t)?))
}

/// `T^{2k+1+l}` assembled from `T^{2t}_{z_t}`, the coefficients γ and the remainder.
pub fn hurwitz_high_order(g: &MapJet, curve: &CurveJet, k: usize, l: usize) -> Result<Vec<Q>, KconeError> {
    let total = 2 * k + 1 + l;
    if curve.len() < total {
        return Err(KconeError::Precondition(format!(
            "curve has {} coefficients, {total} required",
            curve.len()
        )));
    }
    g.ensure_order(total)?;
    let zs = curve.prefix(total);
    let mut out = r_general(g, &zs, total, k + l)?;
    for t in 0..=k {
        let zt = coeff(&zs, g.n(), total - t);
        if vec_is_zero(&zt) {
            continue;
        }
        let gamma = hurwitz_gamma(t, k, l)?;
        let v = t_partial(g, &zs, t)?.mul_vec(&zt);
        for (o, x) in out.iter_mut().zip(v) {
            *o += x * &gamma;
        }
    }
    Ok(out)
}

/// The ladder identities linking the W-operators of orders `2m−1`, `2m`, `2m+1`.
pub fn ladder_check(g: &MapJet, zs: &[Vec<Q>], m: usize, table: &SchemeTable) -> Result<IdentityCheck, KconeError> {
    if m == 0 {
        return Err(KconeError::Precondition("m must be at least 1".into()));
    }
    let mut check = IdentityCheck::pass();
    let d_even = table.d_diag(2 * m)?;
    for (j, d) in d_even.iter().enumerate().take(m) {
        let lhs = w_operator(g, zs, 2 * m + 1, 2 * m + 1 - j)?;
        let rhs = w_operator(g, zs, 2 * m, 2 * m - j)?.scale(d);
        check = check.and(IdentityCheck::matrices(&format!("odd ladder m={m} j={j}"), &lhs, &rhs));
    }
    let lhs = w_operator(g, zs, 2 * m + 1, m + 1)?;
    let inner = w_operator(g, zs, 2 * m, m)?.add(&even_square_partial(g, &coeff(zs, g.n(), m), m)?);
    let rhs = inner.scale(&table.d_coeff(2 * m, m + 1)?);
    check = check.and(IdentityCheck::matrices(&format!("middle ladder m={m}"), &lhs, &rhs));
    let d_odd = table.d_diag(2 * m - 1)?;
    for (j, d) in d_odd.iter().enumerate() {
        let lhs = w_operator(g, zs, 2 * m, 2 * m - j)?;
        let rhs = w_operator(g, zs, 2 * m - 1, 2 * m - 1 - j)?.scale(d);
        check = check.and(IdentityCheck::matrices(&format!("even ladder m={m} j={j}"), &lhs, &rhs));
    }
    Ok(check)
}

/// Linear response of `T^total` to `z_μ`, read from the composition oracle by a
/// symmetric difference in each basis direction.
pub fn oracle_linear_response(g: &MapJet, zs: &[Vec<Q>], total: usize, mu: usize) -> Result<LinearOp, KconeError> {
    let n = g.n();
    let mut base: Vec<Vec<Q>> = (1..=total).map(|t| coeff(zs, n, t)).collect();
    let t_at = |coeffs: &[Vec<Q>]| -> Result<Vec<Q>, KconeError> {
        if coeffs.iter().all(|c| vec_is_zero(c)) {
            return Ok(vec![Q::zero(); g.m()]);
        }
        let curve = CurveJet::new(n, coeffs.to_vec())?;
        Ok(compose_curve(g, &curve, total)?.pop().expect("total ≥ 1"))
    };
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let orig = base[mu - 1][j].clone();
        base[mu - 1][j] = &orig + Q::one();
        let plus = t_at(&base)?;
        base[mu - 1][j] = &orig - Q::one();
        let minus = t_at(&base)?;
        base[mu - 1][j] = orig;
        cols.push(vec_sub(&plus, &minus).into_iter().map(|x| x / qi(2)).collect::<Vec<Q>>());
    }
    Ok(QMatrix::from_cols(g.m(), &cols))
}

/// `T^1 … T^total` from the oracle for the coefficient list `z_1 … z_total`.
pub fn oracle_t(g: &MapJet, zs: &[Vec<Q>], total: usize) -> Result<Vec<Vec<Q>>, KconeError> {
    let n = g.n();
    let coeffs: Vec<Vec<Q>> = (1..=total).map(|t| coeff(zs, n, t)).collect();
    if coeffs.iter().all(|c| vec_is_zero(c)) {
        return Ok(vec![vec![Q::zero(); g.m()]; total]);
    }
    compose_curve(g, &CurveJet::new(n, coeffs)?, total)
}

/// Exact oracle comparison of the W/R/Δ/I assemblies for one instance.
pub fn oracle_equivalence(g: &MapJet, zs: &[Vec<Q>], k: usize) -> Result<IdentityCheck, KconeError> {
    let n = g.n();
    let sys = delta_system(g, zs, k)?;
    let t = oracle_t(g, zs, 2 * k + 1)?;
    let upper: Vec<Vec<Q>> = (k + 1..=2 * k).rev().map(|i| coeff(zs, n, i)).collect();
    let lhs = sys.apply_even(&upper);
    let expected: Vec<Q> = (k + 1..=2 * k).rev().flat_map(|i| t[i - 1].clone()).collect();
    let mut check = IdentityCheck::vectors("even system", &lhs, &expected);
    if let (Some(w), Some(r)) = (&sys.w_odd, &sys.r_odd) {
        let stacked: Vec<Q> = (k + 1..=2 * k + 1).rev().flat_map(|i| coeff(zs, n, i)).collect();
        let odd = vec_add(&w.mul_vec(&stacked), r);
        check = check.and(IdentityCheck::vectors("odd system", &odd, &t[2 * k]));
    }
    for total in [2 * k, 2 * k + 1] {
        for mu in total.div_ceil(2)..=total {
            let mut probe = zs.to_vec();
            if 2 * mu == total && probe.len() >= mu {
                probe[mu - 1] = vec![Q::zero(); n];
            }
            let w = w_operator(g, &probe, total, mu)?;
            let oracle = oracle_linear_response(g, &probe, total, mu)?;
            check = check.and(IdentityCheck::matrices(&format!("W_{mu}^{total}"), &w, &oracle));
        }
        let tau_max = if total.is_multiple_of(2) { total / 2 - 1 } else { total / 2 };
        let tail: Vec<Vec<Q>> =
            (1..=total).map(|i| if i <= tau_max { coeff(zs, n, i) } else { vec![Q::zero(); n] }).collect();
        let r = r_inhomogeneity(g, zs, total)?;
        let t_trunc = oracle_t(g, &tail, total)?;
        check = check.and(IdentityCheck::vectors(&format!("R^{total}"), &r, &t_trunc[total - 1]));
    }
    Ok(check)
}
