//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run with `cargo test -p kcone --test acceptance`.

use std::time::Instant;

use kcone::analysis::{analyze_cone, arc_prefix, milnor_from_branches, ApproxOrder, Field, Verdict};
use kcone::cli::{analyze_problem, ReportFile, Status};
use kcone::continuation::{Cone, ContinuationOptions};
use kcone::linalg::qi;
use kcone::multijet::{compose_curve, Monomial};
use kcone::problem::{bundled, ProblemFile};
use kcone::resolution::build_resolution;
use kcone::suites::{run_suites, VerifyConfig};
use num_traits::Zero;

const SLOPE_BAND: f64 = 0.05;

struct Criterion {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(name: &str) -> ReportFile {
    analyze_problem(&bundled(name).expect("bundled problem"), String::new()).expect("analysis runs")
}

fn slope(r: &ReportFile, fit: &str) -> f64 {
    r.fit(fit).map_or(f64::NAN, |f| f.slope)
}

fn golden_primary() -> (bool, String) {
    let start = Instant::now();
    let r = report("sextic");
    let secs = start.elapsed().as_secs_f64();
    let c = &r.cone;
    let approx = c.approximation.as_ref();
    let order_ok = matches!(approx.map(|a| &a.order), Some(ApproxOrder::Order(n)) if *n >= 23)
        || matches!(approx.map(|a| &a.order), Some(ApproxOrder::ExactZero));
    let pass = c.transversal
        && c.k == Some(11)
        && c.chi == Some(11)
        && c.l == 3
        && order_ok
        && c.verdict == Verdict::Bifurcation
        && r.status == Status::Ok
        && secs < 5.0;
    (
        pass,
        format!(
            "k={:?} chi={:?} l={} approximation={:?} verdict={:?} runtime {secs:.2}s",
            c.k,
            c.chi,
            c.l,
            approx.map(|a| &a.order),
            c.verdict
        ),
    )
}

fn secondary_and_milnor() -> (bool, String) {
    let r = report("sextic-secondary");
    let c = &r.cone;
    let mu = milnor_from_branches(&[11, 3], 4);
    let pass = c.k == Some(3) && c.chi == Some(3) && c.l == 1 && c.verdict == Verdict::Bifurcation && mu == 11;
    (pass, format!("k={:?} chi={:?} l={} verdict={:?} milnor={mu}", c.k, c.chi, c.l, c.verdict))
}

fn rate_slopes() -> (bool, String) {
    let p = report("sextic");
    let s = report("sextic-secondary");
    let vals = [
        (slope(&p, "abs_det"), 11.0),
        (slope(&p, "inv_norm"), -11.0),
        (slope(&s, "abs_det"), 3.0),
        (slope(&s, "inv_norm"), -3.0),
    ];
    let pass = vals.iter().all(|(v, e)| (v - e).abs() <= SLOPE_BAND);
    (
        pass,
        format!(
            "primary det {:.4} inv {:.4}; secondary det {:.4} inv {:.4} (band {SLOPE_BAND})",
            vals[0].0, vals[1].0, vals[2].0, vals[3].0
        ),
    )
}

fn identity_suites(config: &VerifyConfig) -> (bool, String, bool, String) {
    let r = run_suites(config).expect("suites run");
    let required = [
        "delta-kernel",
        "w-factorization",
        "s-kernel",
        "d-intertwining",
        "gamma-identity",
        "hurwitz",
        "scheme-ratios",
        "m-structure",
        "bijectivity",
        "explicit-e",
        "ladders",
    ];
    let failing: Vec<&str> = r.suites.iter().filter(|s| !s.holds()).map(|s| s.name.as_str()).collect();
    let pass = required.iter().all(|n| r.suite(n).is_some_and(|s| s.holds())) && failing.is_empty() && config.count >= 100;
    let detail = format!("{} instances, {} suites, failing {:?}", r.instances, r.suites.len(), failing);
    let oracle = r.suite("oracle-equivalence").expect("oracle suite");
    let opass = oracle.holds() && oracle.checked == r.instances;
    let odetail = format!("{}/{} instances exact, first failure {:?}", oracle.checked - oracle.failed, r.instances, oracle.first_failure.as_ref().map(|c| &c.detail));
    (pass, detail, opass, odetail)
}

fn pitchfork_end_to_end() -> (bool, String) {
    let r = report("pitchfork");
    let c = &r.cone;
    let newton = &r.newton[0];
    let grid_points = 50;
    let identity = newton.identity.as_ref();
    let signs = r.degree_signs.as_ref();
    let pass = c.k == Some(1)
        && c.chi == Some(1)
        && c.l == 1
        && matches!(c.approximation.as_ref().map(|a| &a.order), Some(ApproxOrder::ExactZero))
        && newton.converged == grid_points
        && newton.failed == 0
        && newton.max_residual_g < 1e-12
        && identity.is_some_and(|f| f.through_order == 1 && f.max_low_coefficient < 1e-8)
        && signs.is_some_and(|s| s.opposite());
    (
        pass,
        format!(
            "k={:?} chi={:?} residual {:.1e} over {}/{grid_points} points, identity {:.1e}, signs {:?}/{:?}",
            c.k,
            c.chi,
            newton.max_residual_g,
            newton.converged,
            identity.map_or(f64::NAN, |f| f.max_low_coefficient),
            signs.and_then(|s| s.positive),
            signs.and_then(|s| s.negative)
        ),
    )
}

fn perturbation_contract() -> (bool, String) {
    let p = bundled("sextic").unwrap();
    let g = p.to_map().unwrap();
    let curve = p.to_curve().unwrap();
    let base = build_resolution(&g, &curve, 11).unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for exp in [[24u32, 0], [12, 12], [0, 24]] {
        let g24 = g.with_monomial(0, Monomial::new(qi(3), exp.to_vec())).unwrap();
        let res = build_resolution(&g24, &curve, 11).unwrap();
        let same = res == base;
        let cone = Cone::new(&g24, &curve, &res).unwrap();
        let (grid, _) = p.grid(11).unwrap();
        let run = cone.newton_continue(&grid, &[0.0, 0.0], &ContinuationOptions::default()).unwrap();
        let converged = run.failures.is_empty() && run.points.len() == grid.len();
        pass &= same && converged;
        notes.push(format!("deg24 {exp:?}: identical={same} newton={}/{}", run.points.len(), grid.len()));
    }
    for exp in [[13u32, 0], [6, 7], [0, 13]] {
        let g13 = g.with_monomial(0, Monomial::new(qi(-2), exp.to_vec())).unwrap();
        let (rep, _) = analyze_cone(&g13, &curve, 12, Field::Real).unwrap();
        let same = rep.k == Some(11) && rep.chi == Some(11);
        pass &= same;
        notes.push(format!("deg13 {exp:?}: (k, chi)=({:?}, {:?})", rep.k, rep.chi));
    }
    (pass, notes.join("; "))
}

fn linearization_slopes() -> (bool, String) {
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, k) in [("pitchfork", 1i64), ("sextic-secondary", 3)] {
        let r = report(name);
        let fit = r.fit("lin_residual");
        let ok = fit.is_some_and(|f| f.accept && f.nearest >= 2 * k + 2);
        pass &= ok;
        notes.push(format!("{name}: slope {:.3} (>= {})", fit.map_or(f64::NAN, |f| f.slope), 2 * k + 2));
    }
    (pass, notes.join("; "))
}

fn arc_prefix_resubstitution() -> (bool, String) {
    let p: ProblemFile = bundled("sextic-secondary").unwrap();
    let g = p.to_map().unwrap();
    let curve = p.to_curve().unwrap();
    let res = build_resolution(&g, &curve, 3).unwrap();
    let big_l = 4;
    let arc = arc_prefix(&g, &curve, &res, big_l, &[]).unwrap();
    let full = arc.prefix_curve(&curve).unwrap();
    let through = res.k + big_l;
    let t = compose_curve(&g, &full, through).unwrap();
    let first_nonzero = t.iter().position(|v| v.iter().any(|x| !x.is_zero()));
    (first_nonzero.is_none(), format!("T^1..T^{through} zero: {}, first nonzero {:?}", first_nonzero.is_none(), first_nonzero.map(|i| i + 1)))
}

fn main() {
    let mut results: Vec<Criterion> = Vec::new();
    let mut push = |id, name, (pass, detail): (bool, String)| results.push(Criterion { id, name, pass, detail });

    push(1, "golden report, primary branch", golden_primary());
    push(2, "secondary branch and Milnor number", secondary_and_milnor());
    push(3, "determinant and inverse-norm slopes", rate_slopes());
    let config = VerifyConfig { seed: 0, count: 100, ..VerifyConfig::default() };
    let (spass, sdetail, opass, odetail) = identity_suites(&config);
    push(4, "exact identity suites", (spass, sdetail));
    push(5, "oracle equivalence", (opass, odetail));
    push(6, "pitchfork end to end", pitchfork_end_to_end());
    push(7, "perturbation contract", perturbation_contract());
    push(8, "linearization residual slope", linearization_slopes());
    push(9, "arc-prefix re-substitution", arc_prefix_resubstitution());

    let mut failed = 0;
    for c in &results {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{}] {}: {}", c.id, c.name, c.detail);
        failed += usize::from(!c.pass);
    }
    println!("acceptance: {}/{} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
