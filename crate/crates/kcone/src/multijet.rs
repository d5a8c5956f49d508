//! The map `G` as exact homogeneous pieces, the curve jet, and the
//! power-series composition oracle.
//!
//! A homogeneous piece of degree β is stored as the polynomial `P_β`; the
//! symmetric β-linear derivative `G₀^β` is recovered from it by iterated
//! directional differentiation, so that `G₀^β[v,…,v] = β!·P_β(v)`.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::error::KconeError;
use crate::linalg::{factorial, to_f64, vec_is_zero, QMatrix, Q};

/// Sparse polynomial in `n` variables: exponent vector → coefficient.
pub type Poly = BTreeMap<Vec<u32>, Q>;

/// One monomial term `coef · x^exp`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Monomial {
    pub coef: Q,
    pub exp: Vec<u32>,
}

impl Monomial {
    pub fn new(coef: Q, exp: Vec<u32>) -> Self {
        Monomial { coef, exp }
    }

    pub fn degree(&self) -> usize {
        self.exp.iter().map(|&e| e as usize).sum()
    }
}

fn directional_derivative(p: &Poly, v: &[Q]) -> Poly {
    let mut out = Poly::new();
    for (exp, c) in p {
        for (j, vj) in v.iter().enumerate() {
            if exp[j] == 0 || vj.is_zero() {
                continue;
            }
            let mut e = exp.clone();
            e[j] -= 1;
            let term = c * vj * Q::from_integer(exp[j].into());
            let slot = out.entry(e).or_insert_with(Q::zero);
            *slot += term;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn poly_eval(p: &Poly, x: &[Q]) -> Q {
    let mut acc = Q::zero();
    for (exp, c) in p {
        let mut t = c.clone();
        for (j, &e) in exp.iter().enumerate() {
            for _ in 0..e {
                t *= &x[j];
            }
        }
        acc += t;
    }
    acc
}

fn poly_eval_f64(p: &Poly, x: &[f64]) -> f64 {
    p.iter()
        .map(|(exp, c)| {
            exp.iter()
                .enumerate()
                .fold(to_f64(c), |t, (j, &e)| t * x[j].powi(e as i32))
        })
        .sum()
}

/// Homogeneous degree-β piece of `G`, one polynomial per output component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymForm {
    order: usize,
    n: usize,
    comps: Vec<Poly>,
}

impl SymForm {
    pub fn zero(order: usize, n: usize, m: usize) -> Self {
        SymForm { order, n, comps: vec![Poly::new(); m] }
    }

    /// Build from the homogeneous polynomials `P_β`, one per output.
    pub fn from_polys(order: usize, n: usize, comps: Vec<Poly>) -> Result<Self, KconeError> {
        for p in &comps {
            for exp in p.keys() {
                if exp.len() != n {
                    return Err(KconeError::Dimension { what: "exponent vector", expected: n, got: exp.len() });
                }
                let deg: usize = exp.iter().map(|&e| e as usize).sum();
                if deg != order {
                    return Err(KconeError::Input(format!("term of degree {deg} in a form of order {order}")));
                }
            }
        }
        Ok(SymForm { order, n, comps })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.comps.len()
    }

    pub fn polys(&self) -> &[Poly] {
        &self.comps
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|p| p.is_empty())
    }

    /// The β-linear value `G₀^β[args]`.
    pub fn apply(&self, args: &[&[Q]]) -> Result<Vec<Q>, KconeError> {
        if args.len() != self.order {
            return Err(KconeError::Arity { expected: self.order, got: args.len() });
        }
        for a in args {
            if a.len() != self.n {
                return Err(KconeError::Dimension { what: "form argument", expected: self.n, got: a.len() });
            }
        }
        let zero_exp = vec![0u32; self.n];
        Ok(self
            .comps
            .iter()
            .map(|p| {
                let mut cur = p.clone();
                for a in args {
                    if cur.is_empty() {
                        break;
                    }
                    cur = directional_derivative(&cur, a);
                }
                cur.get(&zero_exp).cloned().unwrap_or_else(Q::zero)
            })
            .collect())
    }

    /// The linear map `v ↦ G₀^β[args…, v]` for β − 1 fixed arguments, as an m×n matrix.
    pub fn apply_partial(&self, args: &[&[Q]]) -> Result<QMatrix, KconeError> {
        if args.len() + 1 != self.order {
            return Err(KconeError::Arity { expected: self.order - 1, got: args.len() });
        }
        let mut out = QMatrix::zeros(self.m(), self.n);
        for (i, p) in self.comps.iter().enumerate() {
            let mut cur = p.clone();
            for a in args {
                if cur.is_empty() {
                    break;
                }
                cur = directional_derivative(&cur, a);
            }
            for (exp, c) in &cur {
                let j = exp.iter().position(|&e| e == 1).expect("linear remainder");
                out[(i, j)] = c.clone();
            }
        }
        Ok(out)
    }
}

/// Free function form of [`SymForm::apply`].
pub fn apply_form(f: &SymForm, args: &[&[Q]]) -> Result<Vec<Q>, KconeError> {
    f.apply(args)
}

/// Curve coefficients `z̄_1 … z̄_M` in the factorial convention
/// `z₀(ε) = Σ ε^i z̄_i / i!`, with leading index `l`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CurveJet {
    n: usize,
    coeffs: Vec<Vec<Q>>,
    l: usize,
}

impl CurveJet {
    /// From factorial-convention coefficients `z̄_1, z̄_2, …`.
    pub fn new(n: usize, coeffs: Vec<Vec<Q>>) -> Result<Self, KconeError> {
        for c in &coeffs {
            if c.len() != n {
                return Err(KconeError::Dimension { what: "curve coefficient", expected: n, got: c.len() });
            }
        }
        let l = coeffs
            .iter()
            .position(|c| !vec_is_zero(c))
            .map(|i| i + 1)
            .ok_or_else(|| KconeError::Input("curve has no nonzero coefficient".into()))?;
        Ok(CurveJet { n, coeffs, l })
    }

    /// From plain Taylor coefficients `c_i`, so that `z̄_i = i!·c_i`.
    pub fn from_taylor(n: usize, taylor: Vec<Vec<Q>>) -> Result<Self, KconeError> {
        let coeffs = taylor
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let f = factorial(i + 1);
                c.into_iter().map(|x| x * &f).collect()
            })
            .collect();
        Self::new(n, coeffs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored coefficients.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn leading_index(&self) -> usize {
        self.l
    }

    /// `z̄_i` (1-based); zero beyond the stored range.
    pub fn zbar(&self, i: usize) -> Vec<Q> {
        assert!(i >= 1, "curve coefficients are 1-based");
        self.coeffs.get(i - 1).cloned().unwrap_or_else(|| vec![Q::zero(); self.n])
    }

    /// `z̄_1 … z̄_j`, zero-padded.
    pub fn prefix(&self, j: usize) -> Vec<Vec<Q>> {
        (1..=j).map(|i| self.zbar(i)).collect()
    }

    /// Plain Taylor coefficient `c_i = z̄_i / i!`.
    pub fn taylor(&self, i: usize) -> Vec<Q> {
        let f = factorial(i);
        self.zbar(i).into_iter().map(|x| x / &f).collect()
    }

    pub fn coeffs(&self) -> &[Vec<Q>] {
        &self.coeffs
    }

    /// Index of the last nonzero coefficient.
    pub fn support_end(&self) -> usize {
        self.coeffs.iter().rposition(|c| !vec_is_zero(c)).map_or(0, |i| i + 1)
    }

    /// Evaluate `z₀(ε)` exactly.
    pub fn point(&self, eps: &Q) -> Vec<Q> {
        let mut out = vec![Q::zero(); self.n];
        let mut pow = Q::one();
        for (i, c) in self.coeffs.iter().enumerate() {
            pow = &pow * eps / Q::from_integer((i + 1).into());
            for (o, x) in out.iter_mut().zip(c) {
                if !x.is_zero() {
                    *o += x * &pow;
                }
            }
        }
        out
    }
}

/// Evaluation mode for [`MapJet::eval`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    Exact,
    Float,
}

/// Value returned by [`MapJet::eval`].
#[derive(Clone, Debug, PartialEq)]
pub enum EvalValue {
    Exact(Vec<Q>),
    Float(Vec<f64>),
}

/// The map `G: K^n → K^m` with `G[0] = 0`, held by its homogeneous pieces.
///
/// `order` is `None` for an exact polynomial (every higher form is zero) and
/// `Some(q)` for a jet truncated after degree `q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapJet {
    n: usize,
    m: usize,
    order: Option<usize>,
    forms: Vec<SymForm>,
    terms: Option<Vec<Vec<Monomial>>>,
}

impl MapJet {
    /// Exact polynomial map from monomial terms, one list per output component.
    pub fn from_polynomial(n: usize, m: usize, terms: Vec<Vec<Monomial>>) -> Result<Self, KconeError> {
        if terms.len() != m {
            return Err(KconeError::Dimension { what: "output components", expected: m, got: terms.len() });
        }
        let mut degree = 0;
        for comp in &terms {
            for t in comp {
                if t.exp.len() != n {
                    return Err(KconeError::Dimension { what: "exponent vector", expected: n, got: t.exp.len() });
                }
                if t.degree() == 0 && !t.coef.is_zero() {
                    return Err(KconeError::Input("G must vanish at 0 (constant term present)".into()));
                }
                degree = degree.max(t.degree());
            }
        }
        let mut forms: Vec<SymForm> = (1..=degree).map(|b| SymForm::zero(b, n, m)).collect();
        for (i, comp) in terms.iter().enumerate() {
            for t in comp {
                if t.coef.is_zero() || t.degree() == 0 {
                    continue;
                }
                let slot = forms[t.degree() - 1].comps[i].entry(t.exp.clone()).or_insert_with(Q::zero);
                *slot += &t.coef;
            }
        }
        for f in &mut forms {
            for p in &mut f.comps {
                p.retain(|_, c| !c.is_zero());
            }
        }
        while forms.last().is_some_and(|f| f.is_zero()) {
            forms.pop();
        }
        Ok(MapJet { n, m, order: None, forms, terms: Some(terms) })
    }

    /// Truncated jet from forms of orders `1…q` (missing orders are zero).
    pub fn from_forms(n: usize, m: usize, q: usize, forms: Vec<SymForm>) -> Result<Self, KconeError> {
        let mut all: Vec<SymForm> = (1..=q).map(|b| SymForm::zero(b, n, m)).collect();
        for f in forms {
            if f.n != n || f.m() != m {
                return Err(KconeError::Dimension { what: "form shape", expected: n, got: f.n });
            }
            if f.order == 0 || f.order > q {
                return Err(KconeError::JetOrder { needed: f.order, available: q });
            }
            let o = f.order;
            all[o - 1] = f;
        }
        Ok(MapJet { n, m, order: Some(q), forms: all, terms: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Jet order; `None` means exact polynomial.
    pub fn order(&self) -> Option<usize> {
        self.order
    }

    /// Highest degree carrying a nonzero form.
    pub fn degree(&self) -> usize {
        self.forms.iter().rposition(|f| !f.is_zero()).map_or(0, |i| i + 1)
    }

    /// Lowest degree carrying a nonzero form.
    pub fn lowest_degree(&self) -> Option<usize> {
        self.forms.iter().position(|f| !f.is_zero()).map(|i| i + 1)
    }

    pub fn terms(&self) -> Option<&[Vec<Monomial>]> {
        self.terms.as_deref()
    }

    pub fn ensure_order(&self, needed: usize) -> Result<(), KconeError> {
        match self.order {
            Some(q) if q < needed => Err(KconeError::JetOrder { needed, available: q }),
            _ => Ok(()),
        }
    }

    /// `true` when the form of order β is identically zero.
    pub fn form_is_zero(&self, beta: usize) -> bool {
        self.forms.get(beta.wrapping_sub(1)).is_none_or(|f| f.is_zero())
    }

    /// The form `G₀^β` (zero beyond the polynomial degree).
    pub fn form(&self, beta: usize) -> Result<SymForm, KconeError> {
        self.ensure_order(beta)?;
        if beta == 0 {
            return Err(KconeError::Arity { expected: 1, got: 0 });
        }
        Ok(self.forms.get(beta - 1).cloned().unwrap_or_else(|| SymForm::zero(beta, self.n, self.m)))
    }

    /// Borrow the form `G₀^β` when stored.
    pub fn form_ref(&self, beta: usize) -> Option<&SymForm> {
        self.forms.get(beta.checked_sub(1)?)
    }

    /// `G₀^β[args]`.
    pub fn apply(&self, beta: usize, args: &[&[Q]]) -> Result<Vec<Q>, KconeError> {
        self.ensure_order(beta)?;
        match self.form_ref(beta) {
            Some(f) => f.apply(args),
            None => {
                if args.len() != beta {
                    return Err(KconeError::Arity { expected: beta, got: args.len() });
                }
                Ok(vec![Q::zero(); self.m])
            }
        }
    }

    /// The m×n matrix `v ↦ G₀^β[args…, v]`.
    pub fn apply_partial(&self, beta: usize, args: &[&[Q]]) -> Result<QMatrix, KconeError> {
        self.ensure_order(beta)?;
        match self.form_ref(beta) {
            Some(f) => f.apply_partial(args),
            None => Ok(QMatrix::zeros(self.m, self.n)),
        }
    }

    /// `G₀¹` as an m×n matrix.
    pub fn linear_part(&self) -> QMatrix {
        self.apply_partial(1, &[]).expect("order ≥ 1")
    }

    /// Copy with one extra monomial added to output component `comp`.
    pub fn with_monomial(&self, comp: usize, mono: Monomial) -> Result<Self, KconeError> {
        match &self.terms {
            Some(t) => {
                let mut t = t.clone();
                t[comp].push(mono);
                MapJet::from_polynomial(self.n, self.m, t)
            }
            None => Err(KconeError::Precondition("monomial perturbation needs a polynomial map".into())),
        }
    }

    fn all_polys(&self) -> impl Iterator<Item = (usize, &Poly)> {
        self.forms.iter().flat_map(|f| f.comps.iter().enumerate())
    }

    /// Evaluate `G[z]` exactly (polynomial) or to jet order `q` (truncated jet).
    pub fn eval_exact(&self, z: &[Q]) -> Result<Vec<Q>, KconeError> {
        if z.len() != self.n {
            return Err(KconeError::Dimension { what: "point", expected: self.n, got: z.len() });
        }
        let mut out = vec![Q::zero(); self.m];
        for (i, p) in self.all_polys() {
            out[i] += poly_eval(p, z);
        }
        Ok(out)
    }

    pub fn eval_f64(&self, z: &[f64]) -> Result<Vec<f64>, KconeError> {
        if z.len() != self.n {
            return Err(KconeError::Dimension { what: "point", expected: self.n, got: z.len() });
        }
        let mut out = vec![0.0; self.m];
        for (i, p) in self.all_polys() {
            out[i] += poly_eval_f64(p, z);
        }
        Ok(out)
    }

    /// Evaluate in the requested mode.
    pub fn eval(&self, z: &[Q], mode: EvalMode) -> Result<EvalValue, KconeError> {
        match mode {
            EvalMode::Exact => Ok(EvalValue::Exact(self.eval_exact(z)?)),
            EvalMode::Float => {
                let zf: Vec<f64> = z.iter().map(to_f64).collect();
                Ok(EvalValue::Float(self.eval_f64(&zf)?))
            }
        }
    }

    /// Exact Jacobian `G'[z]` as an m×n matrix.
    pub fn jacobian_exact(&self, z: &[Q]) -> Result<QMatrix, KconeError> {
        if z.len() != self.n {
            return Err(KconeError::Dimension { what: "point", expected: self.n, got: z.len() });
        }
        let mut out = QMatrix::zeros(self.m, self.n);
        let mut e = vec![Q::zero(); self.n];
        for j in 0..self.n {
            e[j] = Q::one();
            for (i, p) in self.all_polys() {
                let d = directional_derivative(p, &e);
                if !d.is_empty() {
                    out[(i, j)] += poly_eval(&d, z);
                }
            }
            e[j] = Q::zero();
        }
        Ok(out)
    }

    /// Forms `G₀¹ … G₀^b` agree with those of `other`.
    pub fn same_low_forms(&self, other: &MapJet, b: usize) -> bool {
        (1..=b).all(|beta| self.form(beta).ok() == other.form(beta).ok())
    }
}

/// Free function form of [`MapJet::eval`].
pub fn eval_map(g: &MapJet, z: &[Q], mode: EvalMode) -> Result<EvalValue, KconeError> {
    g.eval(z, mode)
}

fn series_mul(a: &[Q], b: &[Q], len: usize) -> Vec<Q> {
    let mut out = vec![Q::zero(); len];
    for (i, x) in a.iter().enumerate().take(len) {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(len - i) {
            if !y.is_zero() {
                out[i + j] += x * y;
            }
        }
    }
    out
}

/// Ordinary ε-series coefficients `g_0 … g_M` of `G[z₀(ε)]`, truncated after `ε^M`.
pub fn compose_series(g: &MapJet, c: &CurveJet, big_m: usize) -> Result<Vec<Vec<Q>>, KconeError> {
    if c.n() != g.n() {
        return Err(KconeError::Dimension { what: "curve", expected: g.n(), got: c.n() });
    }
    let len = big_m + 1;
    // coordinate series z_j(ε) = Σ ε^i z̄_i[j]/i!
    let coord: Vec<Vec<Q>> = (0..g.n())
        .map(|j| {
            let mut s = vec![Q::zero(); len];
            for (i, slot) in s.iter_mut().enumerate().skip(1) {
                *slot = &c.zbar(i)[j] / factorial(i);
            }
            s
        })
        .collect();
    let mut powers: Vec<Vec<Vec<Q>>> = coord
        .iter()
        .map(|s| {
            let mut one = vec![Q::zero(); len];
            one[0] = Q::one();
            vec![one, s.clone()]
        })
        .collect();
    let mut out = vec![vec![Q::zero(); g.m()]; len];
    let top = match g.order() {
        Some(q) => q.min(big_m),
        None => g.degree().min(big_m),
    };
    for beta in 1..=top {
        let Some(f) = g.form_ref(beta) else { continue };
        for (i, p) in f.polys().iter().enumerate() {
            for (exp, coef) in p {
                let mut acc = vec![Q::zero(); len];
                acc[0] = coef.clone();
                for (j, &e) in exp.iter().enumerate() {
                    if e == 0 {
                        continue;
                    }
                    while powers[j].len() <= e as usize {
                        let next = series_mul(powers[j].last().unwrap(), &coord[j], len);
                        powers[j].push(next);
                    }
                    acc = series_mul(&acc, &powers[j][e as usize], len);
                }
                for (t, a) in acc.into_iter().enumerate() {
                    if !a.is_zero() {
                        out[t][i] += a;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `T^1 … T^M` with `T^i = d^i/dε^i G[z₀(ε)]` at `ε = 0`.
pub fn compose_curve(g: &MapJet, c: &CurveJet, big_m: usize) -> Result<Vec<Vec<Q>>, KconeError> {
    g.ensure_order(big_m)?;
    let s = compose_series(g, c, big_m)?;
    Ok((1..=big_m)
        .map(|i| {
            let f = factorial(i);
            s[i].iter().map(|x| x * &f).collect()
        })
        .collect())
}

/// Exact vanishing order of `G[z₀(ε)]` for a polynomial map and finitely
/// supported curve; `None` when the composition is identically zero.
pub fn vanishing_order(g: &MapJet, c: &CurveJet) -> Result<Option<usize>, KconeError> {
    if g.order().is_some() {
        return Err(KconeError::Precondition("vanishing order needs an exact polynomial map".into()));
    }
    let full = g.degree() * c.support_end().max(1);
    let s = compose_series(g, c, full)?;
    Ok(s.iter().position(|v| !vec_is_zero(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{qf, qi};
    use proptest::prelude::*;

    fn mono(c: i64, e: &[u32]) -> Monomial {
        Monomial::new(qi(c), e.to_vec())
    }

    pub(crate) fn sextic_map() -> MapJet {
        MapJet::from_polynomial(2, 1, vec![vec![mono(-1, &[1, 3]), mono(1, &[5, 0]), mono(1, &[0, 6])]]).unwrap()
    }

    #[test]
    fn identity_form_applies_to_argument() {
        let g = MapJet::from_polynomial(2, 2, vec![vec![mono(1, &[1, 0])], vec![mono(1, &[0, 1])]]).unwrap();
        assert_eq!(g.apply(1, &[&[qi(3), qi(4)]]).unwrap(), vec![qi(3), qi(4)]);
    }

    #[test]
    fn quartic_form_by_directional_derivatives() {
        // by hand: D⁴(x y³)[a,b,c,d] = 6 Σ_i slot_i.x · Π_{j≠i} slot_j.y
        let g = sextic_map();
        let e1 = [qi(1), qi(0)];
        let e2 = [qi(0), qi(1)];
        assert_eq!(g.apply(4, &[&e1, &e2, &e2, &e2]).unwrap(), vec![qi(-6)]);
        assert_eq!(g.apply(4, &[&e2, &e2, &e2, &e2]).unwrap(), vec![qi(0)]);
        assert_eq!(g.apply(4, &[&e1, &e1, &e2, &e2]).unwrap(), vec![qi(0)]);
        assert_eq!(g.apply(6, &[&e2[..]; 6]).unwrap(), vec![qi(720)]);
        assert_eq!(g.apply(5, &[&e1[..]; 5]).unwrap(), vec![qi(120)]);
    }

    #[test]
    fn zero_form_gives_zero() {
        let f = SymForm::zero(3, 2, 2);
        let v = [qi(5), qi(-7)];
        assert_eq!(f.apply(&[&v, &v, &v]).unwrap(), vec![qi(0), qi(0)]);
    }

    #[test]
    fn arity_is_checked() {
        let g = sextic_map();
        assert!(g.apply(4, &[&[qi(1), qi(0)]]).is_err());
        assert!(g.apply(1, &[&[qi(1)]]).is_err());
    }

    #[test]
    fn evaluation_examples() {
        let g = sextic_map();
        assert_eq!(g.eval_exact(&[qi(1), qi(1)]).unwrap(), vec![qi(1)]);
        assert_eq!(g.eval_exact(&[qi(0), qi(0)]).unwrap(), vec![qi(0)]);
        let val = g.eval_exact(&[qf(1, 8), qf(1, 16)]).unwrap();
        assert_eq!(val, vec![qf(1, 1 << 24)]);
    }

    #[test]
    fn sextic_composition() {
        let g = sextic_map();
        let c = CurveJet::from_taylor(2, vec![
            vec![qi(0), qi(0)],
            vec![qi(0), qi(0)],
            vec![qi(1), qi(0)],
            vec![qi(0), qi(1)],
        ])
        .unwrap();
        assert_eq!(c.leading_index(), 3);
        assert_eq!(c.zbar(3), vec![qi(6), qi(0)]);
        assert_eq!(c.zbar(4), vec![qi(0), qi(24)]);
        let t = compose_curve(&g, &c, 24).unwrap();
        for (i, ti) in t.iter().enumerate().take(23) {
            assert_eq!(ti, &vec![qi(0)], "T^{}", i + 1);
        }
        assert_eq!(t[23], vec![factorial(24)]);
        assert_eq!(vanishing_order(&g, &c).unwrap(), Some(24));
    }

    #[test]
    fn constant_term_is_rejected() {
        assert!(MapJet::from_polynomial(1, 1, vec![vec![mono(1, &[0])]]).is_err());
    }

    #[test]
    fn truncated_jet_reports_order() {
        let f1 = SymForm::from_polys(1, 1, vec![[(vec![1u32], qi(1))].into_iter().collect()]).unwrap();
        let g = MapJet::from_forms(1, 1, 2, vec![f1]).unwrap();
        let c = CurveJet::new(1, vec![vec![qi(1)]]).unwrap();
        assert!(compose_curve(&g, &c, 3).is_err());
        assert_eq!(compose_curve(&g, &c, 2).unwrap(), vec![vec![qi(1)], vec![qi(0)]]);
    }

    #[test]
    fn jacobian_along_sextic_curve() {
        let g = sextic_map();
        let eps = qf(1, 2);
        let z = vec![&eps * &eps * &eps, &eps * &eps * &eps * &eps];
        let j = g.jacobian_exact(&z).unwrap();
        let e = |p: i32| (0..p).fold(qi(1), |a, _| a * &eps);
        assert_eq!(j[(0, 1)], qi(-3) * e(11) + qi(6) * e(20));
    }

    fn small_q() -> impl Strategy<Value = Q> {
        (-4i64..=4, 1i64..=3).prop_map(|(a, b)| qf(a, b))
    }

    fn random_map(n: usize, m: usize, maxdeg: u32) -> impl Strategy<Value = MapJet> {
        let term = (small_q(), proptest::collection::vec(0u32..=maxdeg, n), 0..m);
        proptest::collection::vec(term, 1..8).prop_map(move |ts| {
            let mut terms = vec![Vec::new(); m];
            for (c, e, i) in ts {
                let deg: u32 = e.iter().sum();
                if deg == 0 || deg > maxdeg {
                    continue;
                }
                terms[i].push(Monomial::new(c, e));
            }
            MapJet::from_polynomial(n, m, terms).unwrap()
        })
    }

    /// Independent oracle: multivariate Taylor expansion of G(Σ ε^i z̄_i/i!)
    /// by repeated substitution into a dense ε-polynomial for each term.
    fn brute_force_series(g: &MapJet, c: &CurveJet, big_m: usize) -> Vec<Vec<Q>> {
        let mut out = vec![vec![Q::zero(); g.m()]; big_m + 1];
        for (i, comp) in g.terms().unwrap().iter().enumerate() {
            for t in comp {
                // expand the product factor by factor
                let mut poly: BTreeMap<usize, Q> = [(0usize, t.coef.clone())].into_iter().collect();
                for (j, &e) in t.exp.iter().enumerate() {
                    for _ in 0..e {
                        let mut next = BTreeMap::new();
                        for (&p, a) in &poly {
                            for s in 1..=big_m {
                                if p + s > big_m {
                                    break;
                                }
                                let b = &c.zbar(s)[j] / factorial(s);
                                if b.is_zero() {
                                    continue;
                                }
                                *next.entry(p + s).or_insert_with(Q::zero) += a * &b;
                            }
                        }
                        poly = next;
                    }
                }
                for (p, a) in poly {
                    out[p][i] += a;
                }
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn composition_matches_brute_force(
            g in random_map(2, 2, 4),
            zs in proptest::collection::vec(proptest::collection::vec(small_q(), 2), 1..5),
            big_m in 1usize..8,
        ) {
            prop_assume!(zs.iter().any(|z| !vec_is_zero(z)));
            let c = CurveJet::new(2, zs).unwrap();
            let s = compose_series(&g, &c, big_m).unwrap();
            prop_assert_eq!(s, brute_force_series(&g, &c, big_m));
        }

        #[test]
        fn forms_are_symmetric(g in random_map(3, 2, 3), a in proptest::collection::vec(small_q(), 3),
                               b in proptest::collection::vec(small_q(), 3), c in proptest::collection::vec(small_q(), 3)) {
            let x = g.apply(3, &[&a, &b, &c]).unwrap();
            prop_assert_eq!(&x, &g.apply(3, &[&b, &c, &a]).unwrap());
            prop_assert_eq!(&x, &g.apply(3, &[&c, &a, &b]).unwrap());
            prop_assert_eq!(&x, &g.apply(3, &[&a, &c, &b]).unwrap());
        }

        #[test]
        fn diagonal_of_form_is_factorial_times_piece(g in random_map(2, 2, 4), v in proptest::collection::vec(small_q(), 2)) {
            for beta in 1..=4usize {
                let args: Vec<&[Q]> = vec![&v[..]; beta];
                let lhs = g.apply(beta, &args).unwrap();
                let f = g.form(beta).unwrap();
                let rhs: Vec<Q> = f.polys().iter().map(|p| poly_eval(p, &v) * factorial(beta)).collect();
                prop_assert_eq!(lhs, rhs);
            }
        }

        #[test]
        fn float_eval_agrees_with_exact(g in random_map(2, 2, 4), v in proptest::collection::vec(small_q(), 2)) {
            let v: Vec<Q> = v.into_iter().map(|x| x / qi(4)).collect();
            let exact = g.eval_exact(&v).unwrap();
            let vf: Vec<f64> = v.iter().map(to_f64).collect();
            let float = g.eval_f64(&vf).unwrap();
            for (e, f) in exact.iter().zip(float) {
                let e = to_f64(e);
                prop_assert!((e - f).abs() <= 1e-12 * e.abs().max(1.0));
            }
        }
    }
}
