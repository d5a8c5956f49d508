//! Seeded identity suites over random instances, run in parallel.

use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::Field;
use crate::coeffsys::{gamma_identity_check, hurwitz_high_order, ladder_check, oracle_equivalence, IdentityCheck};
use crate::error::KconeError;
use crate::instances::{exponents_of_degree, random_coeffs, random_map, rng, small_rational, MapShape};
use crate::linalg::{qi, Q};
use crate::multijet::{compose_curve, CurveJet, MapJet, Monomial};
use crate::problem::{bundled, ProblemFile, ProblemOptions};
use crate::resolution::{build_resolution_with, ResolutionOptions, ResolutionResult};
use crate::schemes::{scheme_identity_check, SchemeTable};

/// Suite names in report order.
pub const SUITE_NAMES: [&str; 15] = [
    "delta-kernel",
    "w-factorization",
    "s-kernel",
    "d-intertwining",
    "curve-in-kernel",
    "m-structure",
    "bijectivity",
    "direct-sums",
    "explicit-e",
    "gamma-identity",
    "hurwitz",
    "ladders",
    "scheme-ratios",
    "oracle-equivalence",
    "dependence",
];

/// Largest `l` in `T^{2k+1+l}` compared against the composition oracle.
pub const HURWITZ_MAX_L: usize = 3;

/// A deliberate change to one d-scheme entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub m: usize,
    pub l: usize,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub k_values: Vec<usize>,
    pub count: usize,
    pub seed: u64,
    /// Also run the bundled problems, where the curve-in-kernel check is not vacuous.
    pub include_bundled: bool,
    pub corruption: Option<Corruption>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { k_values: vec![1, 2, 3], count: 100, seed: 1, include_bundled: true, corruption: None }
    }
}

/// A failing instance, serialized as a problem file for reproduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub instance: String,
    pub k: usize,
    pub detail: String,
    pub problem: ProblemFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub checked: usize,
    /// Instances where the identity's hypothesis does not apply.
    pub vacuous: usize,
    pub failed: usize,
    pub first_failure: Option<Counterexample>,
}

impl SuiteOutcome {
    pub fn holds(&self) -> bool {
        self.failed == 0 && self.checked > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: VerifyConfig,
    pub instances: usize,
    pub suites: Vec<SuiteOutcome>,
    pub all_hold: bool,
}

impl SuiteReport {
    pub fn suite(&self, name: &str) -> Option<&SuiteOutcome> {
        self.suites.iter().find(|s| s.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Outcome {
    Pass,
    Vacuous,
    Fail(String),
}

impl From<IdentityCheck> for Outcome {
    fn from(c: IdentityCheck) -> Self {
        if c.holds {
            Outcome::Pass
        } else {
            Outcome::Fail(c.detail)
        }
    }
}

fn outcome(r: Result<IdentityCheck, KconeError>) -> Outcome {
    match r {
        Ok(c) => c.into(),
        Err(e) => Outcome::Fail(format!("error: {e}")),
    }
}

/// One instance of the suites.
#[derive(Clone, Debug)]
pub struct SuiteInstance {
    pub label: String,
    pub g: MapJet,
    pub curve: CurveJet,
    pub k: usize,
}

impl SuiteInstance {
    fn problem(&self) -> ProblemFile {
        ProblemFile::from_parts(Some(self.label.clone()), Field::Real, &self.g, &self.curve, self.k, ProblemOptions::default())
            .expect("suite instances are polynomial")
    }
}

fn instance_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Random instance `index`: `n, m ∈ {2, 3, 4}`, `k` cycling through `k_values`.
pub fn random_instance(seed: u64, index: usize, k_values: &[usize]) -> SuiteInstance {
    let mut r = rng(instance_seed(seed, index));
    let n = r.gen_range(2..=4);
    let m = r.gen_range(2..=4);
    let k = k_values[index % k_values.len()];
    let linear_rank = r.gen_range(0..n.min(m));
    let total = 2 * k + 1 + HURWITZ_MAX_L;
    let g = random_map(&mut r, MapShape { n, m, degree: total as u32, linear_rank, terms_per_degree: 3 });
    let mut coeffs = random_coeffs(&mut r, n, total);
    if coeffs.iter().flatten().all(Zero::is_zero) {
        coeffs[0][0] = qi(1);
    }
    let curve = CurveJet::new(n, coeffs).expect("well-formed curve");
    SuiteInstance { label: format!("random #{index} (seed {seed})"), g, curve, k }
}

/// Bundled problems whose curves approximate solutions.
pub fn bundled_instances() -> Vec<SuiteInstance> {
    [("sextic-secondary", 3), ("pitchfork", 1)]
        .into_iter()
        .map(|(name, k)| {
            let p = bundled(name).expect("bundled problem");
            let curve = p.to_curve().expect("bundled curve");
            let mut taylor: Vec<Vec<Q>> = (1..=curve.len()).map(|i| curve.taylor(i)).collect();
            taylor.resize(2 * k + 1 + HURWITZ_MAX_L, vec![qi(0); p.n]);
            SuiteInstance {
                label: format!("bundled {name}"),
                g: p.to_map().expect("bundled map"),
                curve: CurveJet::from_taylor(p.n, taylor).expect("padded curve"),
                k,
            }
        })
        .collect()
}

fn same_resolution(a: &ResolutionResult, b: &ResolutionResult) -> Outcome {
    if a == b {
        Outcome::Pass
    } else {
        let first = a.levels.iter().zip(&b.levels).position(|(x, y)| x != y);
        Outcome::Fail(match first {
            Some(i) => format!("level {i} changed"),
            None => "operators changed".into(),
        })
    }
}

/// Perturb `G` by a monomial of degree `≥ k+2` and the curve beyond `z̄_k`.
fn dependence_outcome(inst: &SuiteInstance, res: &ResolutionResult, options: &ResolutionOptions, salt: u64) -> Outcome {
    let (n, k) = (inst.g.n(), inst.k);
    let mut r = rng(salt);
    let degree = r.gen_range(k + 2..=2 * k + 3) as u32;
    let exps = exponents_of_degree(n, degree);
    let exp = exps[r.gen_range(0..exps.len())].clone();
    let comp = r.gen_range(0..inst.g.m());
    let coef = loop {
        let c = small_rational(&mut r);
        if !c.is_zero() {
            break c;
        }
    };
    let g2 = match inst.g.with_monomial(comp, Monomial::new(coef, exp)) {
        Ok(g) => g,
        Err(e) => return Outcome::Fail(format!("error: {e}")),
    };
    let mut coeffs = inst.curve.coeffs().to_vec();
    for c in coeffs.iter_mut().skip(k) {
        for x in c.iter_mut() {
            *x += small_rational(&mut r);
        }
    }
    let Ok(c2) = CurveJet::new(n, coeffs) else {
        return Outcome::Fail("perturbed curve rejected".into());
    };
    match build_resolution_with(&g2, &c2, k, options.clone()) {
        Ok(res2) => same_resolution(res, &res2),
        Err(e) => Outcome::Fail(format!("error: {e}")),
    }
}

fn hurwitz_outcome(inst: &SuiteInstance) -> Outcome {
    for l in 0..=HURWITZ_MAX_L {
        let total = 2 * inst.k + 1 + l;
        let lhs = match hurwitz_high_order(&inst.g, &inst.curve, inst.k, l) {
            Ok(v) => v,
            Err(e) => return Outcome::Fail(format!("error: {e}")),
        };
        let rhs = match compose_curve(&inst.g, &inst.curve, total) {
            Ok(mut t) => t.pop().expect("total ≥ 1"),
            Err(e) => return Outcome::Fail(format!("error: {e}")),
        };
        let c = IdentityCheck::vectors(&format!("T^{total} (l={l})"), &lhs, &rhs);
        if !c.holds {
            return Outcome::Fail(c.detail);
        }
    }
    Outcome::Pass
}

fn curve_in_kernel_outcome(inst: &SuiteInstance, res: &ResolutionResult) -> Outcome {
    match compose_curve(&inst.g, &inst.curve, 2 * inst.k) {
        Ok(t) if t.iter().flatten().any(|x| !x.is_zero()) => Outcome::Vacuous,
        Ok(_) => outcome(res.check_curve_in_kernel(&inst.g, &inst.curve)),
        Err(e) => Outcome::Fail(format!("error: {e}")),
    }
}

/// Every per-instance outcome, in the order of `SUITE_NAMES` minus `scheme-ratios`.
fn check_instance(inst: &SuiteInstance, table: &SchemeTable, options: &ResolutionOptions, salt: u64) -> Vec<(&'static str, Outcome)> {
    let zs = inst.curve.prefix(inst.k);
    let mut out: Vec<(&'static str, Outcome)> = Vec::with_capacity(SUITE_NAMES.len());
    match build_resolution_with(&inst.g, &inst.curve, inst.k, options.clone()) {
        Ok(res) => {
            out.push(("delta-kernel", outcome(res.check_delta_kernel(&inst.g))));
            out.push(("w-factorization", outcome(res.check_w_factorization(&inst.g))));
            out.push(("s-kernel", res.check_s_kernel().into()));
            out.push(("d-intertwining", outcome(res.check_d_intertwining(table))));
            out.push(("curve-in-kernel", curve_in_kernel_outcome(inst, &res)));
            out.push(("m-structure", res.check_m_structure().into()));
            out.push(("bijectivity", res.check_bijectivity().into()));
            out.push(("direct-sums", res.check_direct_sums().into()));
            out.push(("explicit-e", res.check_explicit_e().into()));
            out.push(("dependence", dependence_outcome(inst, &res, options, salt)));
        }
        Err(e) => {
            let msg = format!("resolution failed: {e}");
            for name in [
                "delta-kernel",
                "w-factorization",
                "s-kernel",
                "d-intertwining",
                "curve-in-kernel",
                "m-structure",
                "bijectivity",
                "direct-sums",
                "explicit-e",
                "dependence",
            ] {
                out.push((name, Outcome::Fail(msg.clone())));
            }
        }
    }
    let prefix = inst.curve.prefix(2 * inst.k + 1);
    let gamma = (1..=inst.k).try_fold(IdentityCheck::pass(), |acc, j| Ok(acc.and(gamma_identity_check(&inst.g, &prefix, j)?)));
    out.push(("gamma-identity", outcome(gamma)));
    out.push(("hurwitz", hurwitz_outcome(inst)));
    let ladders = (1..=inst.k).try_fold(IdentityCheck::pass(), |acc, m| Ok(acc.and(ladder_check(&inst.g, &zs, m, table)?)));
    out.push(("ladders", outcome(ladders)));
    out.push(("oracle-equivalence", outcome(oracle_equivalence(&inst.g, &prefix, inst.k))));
    out
}

fn corrupted_table(c: &Option<Corruption>) -> Result<SchemeTable, KconeError> {
    let standard = SchemeTable::standard();
    match c {
        None => Ok(standard.clone()),
        Some(c) => standard.with_d_override(c.m, c.l, crate::problem::parse_rational(&c.value)?),
    }
}

/// Run every suite and collect pass counts with the first counterexample per suite.
pub fn run_suites(config: &VerifyConfig) -> Result<SuiteReport, KconeError> {
    if config.k_values.is_empty() || config.k_values.contains(&0) {
        return Err(KconeError::Input("k values must be positive".into()));
    }
    let table = corrupted_table(&config.corruption)?;
    let options = ResolutionOptions { enforce_avoid: false, table: config.corruption.as_ref().map(|_| table.clone()) };
    let mut instances: Vec<SuiteInstance> =
        (0..config.count).map(|i| random_instance(config.seed, i, &config.k_values)).collect();
    if config.include_bundled {
        instances.extend(bundled_instances());
    }
    let results: Vec<Vec<(&'static str, Outcome)>> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| check_instance(inst, &table, &options, instance_seed(config.seed, i).rotate_left(17)))
        .collect();

    let mut suites: Vec<SuiteOutcome> = SUITE_NAMES
        .iter()
        .map(|name| SuiteOutcome { name: name.to_string(), checked: 0, vacuous: 0, failed: 0, first_failure: None })
        .collect();
    for (inst, res) in instances.iter().zip(&results) {
        for (name, o) in res {
            let s = suites.iter_mut().find(|s| s.name == *name).expect("known suite");
            match o {
                Outcome::Pass => s.checked += 1,
                Outcome::Vacuous => s.vacuous += 1,
                Outcome::Fail(detail) => {
                    s.checked += 1;
                    s.failed += 1;
                    if s.first_failure.is_none() {
                        s.first_failure = Some(Counterexample {
                            instance: inst.label.clone(),
                            k: inst.k,
                            detail: detail.clone(),
                            problem: inst.problem(),
                        });
                    }
                }
            }
        }
    }
    let max_half = config.k_values.iter().max().copied().unwrap_or(1) + HURWITZ_MAX_L;
    let s = suites.iter_mut().find(|s| s.name == "scheme-ratios").expect("known suite");
    s.checked = 1;
    match scheme_identity_check(&table, max_half) {
        Ok(c) if c.holds => {}
        other => {
            s.failed = 1;
            let detail = match other {
                Ok(c) => c.detail,
                Err(e) => format!("error: {e}"),
            };
            let inst = &instances[0];
            s.first_failure =
                Some(Counterexample { instance: "scheme table".into(), k: max_half, detail, problem: inst.problem() });
        }
    }
    let all_hold = suites.iter().all(SuiteOutcome::holds);
    Ok(SuiteReport { config: config.clone(), instances: instances.len(), suites, all_hold })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible() {
        let a = random_instance(5, 3, &[1, 2]);
        let b = random_instance(5, 3, &[1, 2]);
        assert_eq!(a.g, b.g);
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.k, 2);
        assert!((2..=4).contains(&a.g.n()) && (2..=4).contains(&a.g.m()));
    }

    #[test]
    fn small_run_holds() {
        let report = run_suites(&VerifyConfig { count: 12, ..VerifyConfig::default() }).unwrap();
        for s in &report.suites {
            assert!(s.holds(), "{}: {:?}", s.name, s.first_failure);
        }
        assert!(report.suite("curve-in-kernel").unwrap().checked >= 2);
        assert!(report.all_hold);
    }

    #[test]
    fn corruption_is_pinpointed() {
        let config = VerifyConfig {
            count: 6,
            k_values: vec![2],
            include_bundled: false,
            corruption: Some(Corruption { m: 5, l: 2, value: "2".into() }),
            ..VerifyConfig::default()
        };
        let report = run_suites(&config).unwrap();
        assert!(!report.all_hold);
        let d = report.suite("d-intertwining").unwrap();
        assert!(d.failed > 0);
        assert!(d.first_failure.as_ref().unwrap().detail.contains("block"));
        let schemes = report.suite("scheme-ratios").unwrap();
        assert!(schemes.first_failure.as_ref().unwrap().detail.starts_with("d(5,3)"));
        assert!(report.suite("oracle-equivalence").unwrap().holds());
    }

    #[test]
    fn counterexamples_reparse() {
        let inst = random_instance(9, 0, &[1]);
        let text = inst.problem().to_json();
        let p = ProblemFile::parse(&text).unwrap();
        assert_eq!(p.to_map().unwrap(), inst.g);
        assert_eq!(p.to_curve().unwrap(), inst.curve);
    }
}
