//! Decisions on top of the resolution: the minimal transversality order,
//! the characteristic number, approximation order, the bifurcation verdict,
//! degree signs, the Milnor formula and formal arc prefixes.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::KconeError;
use crate::linalg::{factorial, from_f64, vec_add, vec_is_zero, vec_scale, Q};
use crate::multijet::{compose_curve, compose_series, vanishing_order, CurveJet, MapJet};
use crate::resolution::{ResolutionBuilder, ResolutionOptions, ResolutionResult};

/// Ground field of the problem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    #[default]
    Real,
    Complex,
}

/// Outcome of the search for the smallest transversal order.
#[derive(Clone, Debug, PartialEq)]
pub enum Transversality {
    Transversal { k: usize, resolution: Box<ResolutionResult> },
    /// Budget exhausted; `range_sums[j]` is `dim(R_1 ⊕ … ⊕ R_{j+1})`.
    NotTransversal { k_max: usize, range_sums: Vec<usize> },
}

impl Transversality {
    pub fn resolution(&self) -> Option<&ResolutionResult> {
        match self {
            Transversality::Transversal { resolution, .. } => Some(resolution),
            Transversality::NotTransversal { .. } => None,
        }
    }
}

/// Smallest `k` in `max(1, l) ..= k_max` with `R_1 ⊕ … ⊕ R_{k+1} = B̄`.
pub fn find_minimal_k(g: &MapJet, curve: &CurveJet, k_max: usize) -> Result<Transversality, KconeError> {
    find_minimal_k_with(g, curve, k_max, ResolutionOptions::default())
}

pub fn find_minimal_k_with(
    g: &MapJet,
    curve: &CurveJet,
    k_max: usize,
    options: ResolutionOptions,
) -> Result<Transversality, KconeError> {
    let k_min = curve.leading_index().max(1);
    if k_max < k_min {
        return Err(KconeError::Precondition(format!("k_max={k_max} is below the leading index {k_min}")));
    }
    let mut builder = ResolutionBuilder::new(g, curve, options)?;
    for k in k_min..=k_max {
        let res = builder.finish(k)?;
        if res.transversal {
            return Ok(Transversality::Transversal { k, resolution: Box::new(res) });
        }
    }
    let mut sums = Vec::new();
    let mut acc = 0;
    for lv in builder.levels() {
        acc += lv.range.dim();
        sums.push(acc);
    }
    Ok(Transversality::NotTransversal { k_max, range_sums: sums })
}

/// `χ = 1·dim N_2^c + … + k·dim N_{k+1}^c`.
pub fn chi(res: &ResolutionResult) -> usize {
    res.chi()
}

/// How far `G[z₀(ε)]` vanishes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum ApproxOrder {
    /// `G[z₀(ε)] ≡ 0`.
    ExactZero,
    /// `T^1 = … = T^order = 0` and `T^{order+1} ≠ 0`.
    Order(usize),
    /// `T^1 = … = T^order = 0`; nothing is known beyond.
    AtLeast(usize),
}

/// Result of the exact approximation check against a target order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub target: usize,
    pub holds: bool,
    pub order: ApproxOrder,
    /// First index `i ≤ target` with `T^i ≠ 0`.
    pub first_nonzero: Option<usize>,
    /// The curve stores fewer than `target` coefficients; the rest were taken as zero.
    pub tail_assumed_zero: bool,
}

/// Exact check of `T^1 = … = T^target = 0` along the curve.
pub fn approximation_order(g: &MapJet, curve: &CurveJet, target: usize) -> Result<ApproxReport, KconeError> {
    let t = compose_curve(g, curve, target)?;
    let first_nonzero = t.iter().position(|v| !vec_is_zero(v)).map(|i| i + 1);
    let order = if g.order().is_none() {
        match vanishing_order(g, curve)? {
            None => ApproxOrder::ExactZero,
            Some(i) => ApproxOrder::Order(i - 1),
        }
    } else {
        ApproxOrder::AtLeast(first_nonzero.map_or(target, |i| i - 1))
    };
    Ok(ApproxReport {
        target,
        holds: first_nonzero.is_none(),
        order,
        first_nonzero,
        tail_assumed_zero: curve.len() < target,
    })
}

/// Bifurcation criterion outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Bifurcation,
    Inconclusive,
    NotApplicable,
}

/// Parity rule: a continuum of solutions emanates when `l` and `χ` are both odd.
pub fn bifurcation_verdict(l: usize, chi: usize, field: Field) -> Verdict {
    if field != Field::Real {
        Verdict::NotApplicable
    } else if l % 2 == 1 && chi % 2 == 1 {
        Verdict::Bifurcation
    } else {
        Verdict::Inconclusive
    }
}

/// Structural preconditions of the parity rule.
pub fn verdict_preconditions(res: &ResolutionResult, approx_holds: bool) -> Vec<String> {
    let mut failed = Vec::new();
    if !res.transversal {
        failed.push("resolution is not transversal".to_string());
    }
    if !approx_holds {
        failed.push(format!("approximation of order {} fails", 2 * res.k));
    }
    if !res.p_space.is_zero() {
        failed.push(format!("P_(k+1) has dimension {}", res.p_space.dim()));
    }
    if res.top_kernel().dim() != 1 {
        failed.push(format!("N_(k+1) has dimension {}", res.top_kernel().dim()));
    }
    failed
}

/// The parity rule applied after its preconditions have been checked.
pub fn cone_verdict(res: &ResolutionResult, field: Field, approx_holds: bool) -> Verdict {
    if verdict_preconditions(res, approx_holds).is_empty() {
        bifurcation_verdict(res.l, res.chi(), field)
    } else {
        Verdict::NotApplicable
    }
}

/// A point on a computed solution curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub eps: f64,
    pub z: Vec<f64>,
}

/// Determinant signs of `G′[z]` restricted to `N^c` on the two half-cones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeSigns {
    pub positive: Option<i8>,
    pub negative: Option<i8>,
    /// Every usable sample in a half-cone has the same sign.
    pub constant_within_halves: bool,
    pub samples_used: usize,
}

impl DegreeSigns {
    pub fn opposite(&self) -> bool {
        matches!((self.positive, self.negative), (Some(a), Some(b)) if a == -b)
    }
}

/// Relative size below which a determinant is treated as numerically zero.
const DET_TOL: f64 = 1e-13;

/// `sign det G′[z]|_{N^c}` on each half-cone, from solution samples.
pub fn degree_signs(g: &MapJet, res: &ResolutionResult, samples: &[CurveSample]) -> Result<DegreeSigns, KconeError> {
    let nc = res.nc_basis();
    if nc.cols() != res.m {
        return Err(KconeError::Precondition(format!("dim N^c = {} differs from m = {}", nc.cols(), res.m)));
    }
    let mut pos: Vec<i8> = Vec::new();
    let mut neg: Vec<i8> = Vec::new();
    for s in samples {
        let z: Vec<Q> = s.z.iter().map(|&x| from_f64(x)).collect();
        let j = g.jacobian_exact(&z)?.mul(&nc).to_f64();
        let det = j.clone().lu().determinant();
        let scale = j.iter().fold(0.0f64, |a, x| a.max(x.abs())).powi(res.m as i32);
        if !det.is_finite() || det == 0.0 || det.abs() <= DET_TOL * scale {
            continue;
        }
        let sign = if det > 0.0 { 1 } else { -1 };
        if s.eps > 0.0 {
            pos.push(sign);
        } else if s.eps < 0.0 {
            neg.push(sign);
        }
    }
    if pos.is_empty() && neg.is_empty() {
        return Err(KconeError::Precondition("determinant vanishes to float tolerance at every sample".into()));
    }
    let constant = pos.windows(2).all(|w| w[0] == w[1]) && neg.windows(2).all(|w| w[0] == w[1]);
    Ok(DegreeSigns {
        positive: pos.first().copied(),
        negative: neg.first().copied(),
        constant_within_halves: constant,
        samples_used: pos.len() + neg.len(),
    })
}

/// `μ = χ_1 + … + χ_τ − ord(G) + 1`.
pub fn milnor_from_branches(chis: &[usize], ord: usize) -> i64 {
    chis.iter().map(|&c| c as i64).sum::<i64>() - ord as i64 + 1
}

/// Initial segment of a formal solution inside the cone.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcPrefix {
    pub k: usize,
    /// Taylor coefficients of `z_{k+1} … z_{k+L}` of the solution.
    pub coeffs: Vec<Vec<Q>>,
    /// Same orders, minus the Taylor coefficients of the base curve.
    pub corrections: Vec<Vec<Q>>,
    /// Cone stacks `y_0 … y_{L−1}` with `Z = z₀(ε) + A_ε·Σ y_j ε^j`.
    pub stacks: Vec<Vec<Q>>,
    /// `z₀(ε) + A_ε·Σ y_j ε^j` expanded completely, in the factorial convention.
    pub cone_curve: CurveJet,
}

impl ArcPrefix {
    /// Base curve through order `k` followed by the prefix, as a curve jet.
    pub fn prefix_curve(&self, base: &CurveJet) -> Result<CurveJet, KconeError> {
        let mut taylor: Vec<Vec<Q>> = (1..=self.k).map(|i| base.taylor(i)).collect();
        taylor.extend(self.coeffs.iter().cloned());
        CurveJet::from_taylor(base.n(), taylor)
    }
}

/// Taylor coefficients of `z₀(ε) + A_ε·Σ_j y_j ε^j` through order `top`.
fn cone_taylor(res: &ResolutionResult, base: &CurveJet, stacks: &[Vec<Q>], top: usize) -> Vec<Vec<Q>> {
    let (n, k) = (res.n, res.k);
    let mut taylor: Vec<Vec<Q>> = (1..=top).map(|i| base.taylor(i)).collect();
    for (j, y) in stacks.iter().enumerate() {
        let my = res.m_hat.mul_vec(y);
        for i in 0..=k {
            let p = 2 * k + 1 - i;
            let order = p + j;
            if order > top {
                continue;
            }
            let part = vec_scale(&my[i * n..(i + 1) * n], &(Q::from_integer(1.into()) / factorial(p)));
            taylor[order - 1] = vec_add(&taylor[order - 1], &part);
        }
    }
    taylor
}

/// Solve `T^{2k+1+j} = 0` order by order for `j = 0 … L−1`.
///
/// `q[j]` is the free `N_{k+1}`-parameter added to the Taylor coefficient of
/// order `k+1+j`; missing entries are zero.
pub fn arc_prefix(
    g: &MapJet,
    curve: &CurveJet,
    res: &ResolutionResult,
    big_l: usize,
    q: &[Vec<Q>],
) -> Result<ArcPrefix, KconeError> {
    if !res.transversal {
        return Err(KconeError::NotTransversal);
    }
    let (n, k) = (res.n, res.k);
    let ops = res.cone_operators();
    if !ops.bijective {
        return Err(KconeError::Precondition("L̂ is not bijective on N^c".into()));
    }
    let kf = factorial(k + 1);
    let mut stacks: Vec<Vec<Q>> = Vec::with_capacity(big_l);
    for j in 0..big_l {
        let mut y = vec![Q::zero(); n * (k + 1)];
        if let Some(qj) = q.get(j) {
            if !res.top_kernel().contains(qj) {
                return Err(KconeError::Precondition(format!("parameter q_{} is not in N_(k+1)", j + 1)));
            }
            y[n * k..].clone_from_slice(&vec_scale(qj, &kf));
        }
        let order = 2 * k + 1 + j;
        stacks.push(y);
        let series = |st: &[Vec<Q>]| -> Result<Vec<Vec<Q>>, KconeError> {
            let z = CurveJet::from_taylor(n, cone_taylor(res, curve, st, order))?;
            compose_series(g, &z, order)
        };
        let s = series(&stacks)?;
        if let Some(bad) = s[..order].iter().position(|v| !vec_is_zero(v)) {
            return Err(KconeError::Precondition(format!(
                "cone image does not vanish at order {bad}; the curve is not an approximation of order {}",
                2 * k
            )));
        }
        let rhs: Vec<Q> = s[order].iter().map(|x| -x).collect();
        let x = ops.l_hat_nc.solve(&rhs).ok_or(KconeError::NotTransversal)?;
        let last = stacks.last_mut().expect("pushed above");
        *last = vec_add(last, &ops.nc_basis.mul_vec(&x));
        let check = series(&stacks)?;
        if !vec_is_zero(&check[order]) {
            return Err(KconeError::Precondition(format!("order {order} left a residual after the linear solve")));
        }
    }
    let top = 2 * k + big_l;
    let taylor = cone_taylor(res, curve, &stacks, top);
    let coeffs: Vec<Vec<Q>> = taylor[k..k + big_l].to_vec();
    let corrections = coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| crate::linalg::vec_sub(c, &curve.taylor(k + 1 + j)))
        .collect();
    Ok(ArcPrefix { k, coeffs, corrections, stacks, cone_curve: CurveJet::from_taylor(n, taylor)? })
}

/// Summary of a cone analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub k: Option<usize>,
    pub transversal: bool,
    pub chi: Option<usize>,
    pub l: usize,
    /// `dim N_1^c … dim N_{k+1}^c`.
    pub nc_dims: Vec<usize>,
    pub top_kernel_dim: Option<usize>,
    pub p_dim: Option<usize>,
    pub range_sums: Vec<usize>,
    pub approximation: Option<ApproxReport>,
    pub verdict: Verdict,
    pub diagnostics: Vec<String>,
}

/// Minimal order search, approximation check and verdict in one pass.
pub fn analyze_cone(g: &MapJet, curve: &CurveJet, k_max: usize, field: Field) -> Result<(ConeReport, Option<ResolutionResult>), KconeError> {
    let l = curve.leading_index();
    match find_minimal_k(g, curve, k_max)? {
        Transversality::NotTransversal { k_max, range_sums } => Ok((
            ConeReport {
                k: None,
                transversal: false,
                chi: None,
                l,
                nc_dims: Vec::new(),
                top_kernel_dim: None,
                p_dim: None,
                range_sums: range_sums.clone(),
                approximation: None,
                verdict: Verdict::NotApplicable,
                diagnostics: vec![format!(
                    "no transversal order up to k_max={k_max}; dim(R_1+...+R_j) = {range_sums:?}"
                )],
            },
            None,
        )),
        Transversality::Transversal { k, resolution } => {
            let approx = approximation_order(g, curve, 2 * k)?;
            let mut diagnostics = verdict_preconditions(&resolution, approx.holds);
            if field != Field::Real {
                diagnostics.push("degree argument needs the real field".into());
            }
            if let Some(level) = resolution.absorbed_level {
                diagnostics.push(format!("curve direction absorbed into N_{level}^c"));
            }
            let verdict = cone_verdict(&resolution, field, approx.holds);
            let mut acc = 0;
            let range_sums = resolution
                .range_dims
                .iter()
                .map(|d| {
                    acc += d;
                    acc
                })
                .collect();
            let report = ConeReport {
                k: Some(k),
                transversal: true,
                chi: Some(resolution.chi()),
                l,
                nc_dims: resolution.levels.iter().map(|lv| lv.kernel_complement.dim()).collect(),
                top_kernel_dim: Some(resolution.top_kernel().dim()),
                p_dim: Some(resolution.p_space.dim()),
                range_sums,
                approximation: Some(approx),
                verdict,
                diagnostics,
            };
            Ok((report, Some(*resolution)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{random_map, rng, MapShape};
    use crate::linalg::{qf, qi};
    use crate::multijet::Monomial;

    fn mono(c: i64, e: &[u32]) -> Monomial {
        Monomial::new(qi(c), e.to_vec())
    }

    fn sextic() -> MapJet {
        MapJet::from_polynomial(2, 1, vec![vec![mono(-1, &[1, 3]), mono(1, &[5, 0]), mono(1, &[0, 6])]]).unwrap()
    }

    fn taylor(n: usize, cs: &[(usize, Vec<i64>)], len: usize) -> CurveJet {
        let mut t = vec![vec![Q::zero(); n]; len];
        for (i, v) in cs {
            t[*i - 1] = v.iter().map(|&x| qi(x)).collect();
        }
        CurveJet::from_taylor(n, t).unwrap()
    }

    fn primary() -> CurveJet {
        taylor(2, &[(3, vec![1, 0]), (4, vec![0, 1])], 4)
    }

    fn secondary() -> CurveJet {
        taylor(2, &[(1, vec![0, 1]), (3, vec![1, 0])], 3)
    }

    fn pitchfork() -> (MapJet, CurveJet) {
        let g = MapJet::from_polynomial(2, 1, vec![vec![mono(1, &[1, 1]), mono(-1, &[0, 3])]]).unwrap();
        (g, taylor(2, &[(1, vec![0, 1]), (2, vec![1, 0])], 2))
    }

    #[test]
    fn sextic_primary_report() {
        let (rep, res) = analyze_cone(&sextic(), &primary(), 14, Field::Real).unwrap();
        assert_eq!(rep.k, Some(11));
        assert_eq!(rep.chi, Some(11));
        assert_eq!(rep.l, 3);
        assert_eq!(rep.verdict, Verdict::Bifurcation);
        let approx = rep.approximation.unwrap();
        assert!(approx.holds);
        assert_eq!(approx.order, ApproxOrder::Order(23));
        assert!(res.unwrap().transversal);
    }

    #[test]
    fn sextic_secondary_report() {
        let (rep, _) = analyze_cone(&sextic(), &secondary(), 6, Field::Real).unwrap();
        assert_eq!((rep.k, rep.chi, rep.l), (Some(3), Some(3), 1));
        assert_eq!(rep.verdict, Verdict::Bifurcation);
        assert_eq!(rep.approximation.unwrap().order, ApproxOrder::Order(14));
    }

    #[test]
    fn regular_map_is_degenerate() {
        let g = MapJet::from_polynomial(1, 1, vec![vec![mono(1, &[1])]]).unwrap();
        let c = taylor(1, &[(1, vec![1])], 1);
        let (rep, _) = analyze_cone(&g, &c, 3, Field::Real).unwrap();
        assert_eq!((rep.k, rep.chi), (Some(1), Some(0)));
        assert_eq!(rep.verdict, Verdict::NotApplicable);
    }

    #[test]
    fn pitchfork_report() {
        let (g, c) = pitchfork();
        let (rep, _) = analyze_cone(&g, &c, 3, Field::Real).unwrap();
        assert_eq!((rep.k, rep.chi, rep.l), (Some(1), Some(1), 1));
        assert_eq!(rep.approximation.unwrap().order, ApproxOrder::ExactZero);
        assert_eq!(rep.verdict, Verdict::Bifurcation);
    }

    #[test]
    fn not_transversal_is_a_value() {
        let g = MapJet::from_polynomial(2, 2, vec![vec![mono(1, &[1, 0])], vec![mono(1, &[2, 0])]]).unwrap();
        let c = taylor(2, &[(1, vec![0, 1])], 3);
        match find_minimal_k(&g, &c, 3).unwrap() {
            Transversality::NotTransversal { k_max, range_sums } => {
                assert_eq!(k_max, 3);
                assert_eq!(range_sums, vec![1, 1, 1, 1]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn verdict_parity_table() {
        assert_eq!(bifurcation_verdict(3, 11, Field::Real), Verdict::Bifurcation);
        assert_eq!(bifurcation_verdict(1, 3, Field::Real), Verdict::Bifurcation);
        for chi in 0..6 {
            assert_eq!(bifurcation_verdict(2, chi, Field::Real), Verdict::Inconclusive);
        }
        assert_eq!(bifurcation_verdict(1, 2, Field::Real), Verdict::Inconclusive);
        assert_eq!(bifurcation_verdict(1, 1, Field::Complex), Verdict::NotApplicable);
    }

    #[test]
    fn milnor_examples() {
        assert_eq!(milnor_from_branches(&[11, 3], 4), 11);
        assert_eq!(milnor_from_branches(&[0], 1), 0);
        assert_eq!(milnor_from_branches(&[1, 1], 2), 1);
    }

    #[test]
    fn node_branches_have_unit_chi() {
        let g = MapJet::from_polynomial(2, 1, vec![vec![mono(1, &[2, 0]), mono(-1, &[0, 2])]]).unwrap();
        for s in [1, -1] {
            let c = taylor(2, &[(1, vec![1, s])], 2);
            let (rep, _) = analyze_cone(&g, &c, 3, Field::Real).unwrap();
            assert_eq!((rep.k, rep.chi), (Some(1), Some(1)));
        }
    }

    #[test]
    fn degree_signs_follow_chi_parity() {
        let (g, c) = pitchfork();
        let (_, res) = analyze_cone(&g, &c, 3, Field::Real).unwrap();
        let res = res.unwrap();
        let samples: Vec<CurveSample> = [0.1, 0.05, -0.1, -0.05]
            .iter()
            .map(|&e: &f64| CurveSample { eps: e, z: vec![e * e, e] })
            .collect();
        let signs = degree_signs(&g, &res, &samples).unwrap();
        assert!(signs.constant_within_halves);
        assert!(signs.opposite());
    }

    #[test]
    fn approximation_failure_names_first_index() {
        let g = sextic();
        let r = approximation_order(&g, &taylor(2, &[(1, vec![0, 1])], 1), 8).unwrap();
        assert!(!r.holds);
        assert_eq!(r.first_nonzero, Some(6));
        assert!(r.tail_assumed_zero);
    }

    #[test]
    fn primary_arc_prefix_matches_series_inversion() {
        let g = sextic();
        let c = primary();
        let res = crate::resolution::build_resolution(&g, &c, 11).unwrap();
        let arc = arc_prefix(&g, &c, &res, 2, &[]).unwrap();
        assert!(vec_is_zero(&arc.coeffs[0]));
        assert_eq!(arc.coeffs[1], vec![qi(0), qf(1, 3)]);
    }

    #[test]
    fn pitchfork_prefix_has_no_corrections() {
        let (g, c) = pitchfork();
        let res = crate::resolution::build_resolution(&g, &c, 1).unwrap();
        let arc = arc_prefix(&g, &c, &res, 4, &[]).unwrap();
        assert!(arc.corrections.iter().all(|v| vec_is_zero(v)));
    }

    #[test]
    fn prefix_resubstitution_on_random_instances() {
        let mut r = rng(5);
        for _ in 0..10 {
            let mut terms = vec![mono(1, &[1, 1])];
            let higher = random_map(&mut r, MapShape { n: 2, m: 1, degree: 4, linear_rank: 0, terms_per_degree: 3 });
            terms.extend(higher.terms().unwrap()[0].iter().filter(|t| t.degree() >= 3 || t.exp[0] > 0).cloned());
            let g = MapJet::from_polynomial(2, 1, vec![terms]).unwrap();
            let c = CurveJet::new(2, vec![vec![qi(0), small_rational_nonzero(&mut r)]]).unwrap();
            let res = crate::resolution::build_resolution(&g, &c, 1).unwrap();
            assert!(res.transversal);
            assert!(approximation_order(&g, &c, 2).unwrap().holds);
            let arc = arc_prefix(&g, &c, &res, 2, &[]).unwrap();
            let t = compose_curve(&g, &arc.prefix_curve(&c).unwrap(), 3).unwrap();
            assert!(t.iter().all(|v| vec_is_zero(v)));
            let t = compose_curve(&g, &arc.cone_curve, 4).unwrap();
            assert!(t.iter().all(|v| vec_is_zero(v)));
        }
    }

    fn small_rational_nonzero(r: &mut crate::instances::InstanceRng) -> Q {
        loop {
            let q = crate::instances::small_rational(r);
            if !q.is_zero() {
                return q;
            }
        }
    }
}
