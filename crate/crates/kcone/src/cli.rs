//! Command implementations behind the `kcone` binary: problem files in,
//! JSON reports and CSV traces out.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{analyze_cone, degree_signs, ApproxOrder, ConeReport, CurveSample, DegreeSigns, Field, Verdict};
use crate::coeffsys::IdentityCheck;
use crate::continuation::{Cone, ContinuationOptions, ContinuationRun, IdentityFit, NewtonFailure, SlopeFit, TraceTable};
use crate::error::KconeError;
use crate::linalg::{from_f64, to_f64, Q};
use crate::problem::{bundled, format_rational, ProblemFile};
use crate::resolution::ResolutionResult;
use crate::schemes::SchemeTable;
use crate::suites::{run_suites, SuiteReport, VerifyConfig};

pub const REPORT_SCHEMA: &str = "kcone-report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Relative threshold below which a sampled determinant is treated as zero.
pub const DETERMINANT_TOLERANCE: f64 = 1e-13;

/// Outcome class of a command, mapped to the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NotTransversal,
    InputError,
    NumericFailure,
    CurveExhausted,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::NotTransversal => 1,
            Status::InputError => 2,
            Status::NumericFailure => 3,
            Status::CurveExhausted => 4,
        }
    }

    /// Status for an error raised while running a command.
    pub fn of_error(e: &KconeError) -> Status {
        match e {
            KconeError::Input(_) | KconeError::Io(_) | KconeError::Dimension { .. } => Status::InputError,
            KconeError::NotTransversal => Status::NotTransversal,
            KconeError::CurveDirectionExhausted { .. } => Status::CurveExhausted,
            _ => Status::NumericFailure,
        }
    }
}

/// Tolerances that qualify the numbers in a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Resolution, approximation order and property checks use exact rationals.
    pub exact: String,
    pub newton_relative_residual: f64,
    pub slope_tolerance: f64,
    pub fit_residual_bound: f64,
    pub determinant_relative: f64,
    pub cone_box: f64,
}

impl Tolerances {
    fn from_options(o: &ContinuationOptions) -> Self {
        Tolerances {
            exact: "zero tolerance over exact rationals".into(),
            newton_relative_residual: o.tolerance,
            slope_tolerance: o.slope_tolerance,
            fit_residual_bound: o.fit_residual_bound,
            determinant_relative: DETERMINANT_TOLERANCE,
            cone_box: o.cone_box,
        }
    }
}

/// Summary of one continuation sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonSummary {
    pub p: Vec<String>,
    pub converged: usize,
    pub failed: usize,
    pub max_residual_g: f64,
    pub max_residual_h: f64,
    pub max_iterations: usize,
    pub identity: Option<IdentityFit>,
    pub first_failure: Option<NewtonFailure>,
}

impl NewtonSummary {
    fn of(p: &[Q], run: &ContinuationRun) -> Self {
        NewtonSummary {
            p: p.iter().map(format_rational).collect(),
            converged: run.points.len(),
            failed: run.failures.len(),
            max_residual_g: run.max_residual_g(),
            max_residual_h: run.points.iter().fold(0.0, |a, p| a.max(p.residual_h)),
            max_iterations: run.points.iter().map(|p| p.iterations).max().unwrap_or(0),
            identity: run.identity.clone(),
            first_failure: run.failures.first().cloned(),
        }
    }
}

/// One exact property of the computed resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

impl PropertyOutcome {
    fn of(name: &str, r: Result<IdentityCheck, KconeError>) -> Self {
        match r {
            Ok(c) => PropertyOutcome { name: name.into(), holds: c.holds, detail: c.detail },
            Err(e) => PropertyOutcome { name: name.into(), holds: false, detail: format!("error: {e}") },
        }
    }
}

/// Full analysis report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema: String,
    pub schema_version: u32,
    pub tool_version: String,
    /// `sha256:` digest of the problem file bytes.
    pub input_digest: String,
    pub problem: Option<String>,
    pub field: Field,
    pub status: Status,
    #[serde(flatten)]
    pub cone: ConeReport,
    pub grid: Option<String>,
    pub newton: Vec<NewtonSummary>,
    pub slope_fits: Vec<SlopeFit>,
    pub degree_signs: Option<DegreeSigns>,
    pub properties: Vec<PropertyOutcome>,
    pub tolerances: Tolerances,
}

impl ReportFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn fit(&self, name: &str) -> Option<&SlopeFit> {
        self.slope_fits.iter().find(|f| f.name == name)
    }
}

pub fn digest(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

fn exact_properties(g: &crate::multijet::MapJet, curve: &crate::multijet::CurveJet, res: &ResolutionResult) -> Vec<PropertyOutcome> {
    vec![
        PropertyOutcome::of("m-structure", Ok(res.check_m_structure())),
        PropertyOutcome::of("bijectivity", Ok(res.check_bijectivity())),
        PropertyOutcome::of("direct-sums", Ok(res.check_direct_sums())),
        PropertyOutcome::of("explicit-e", Ok(res.check_explicit_e())),
        PropertyOutcome::of("s-kernel", Ok(res.check_s_kernel())),
        PropertyOutcome::of("w-factorization", res.check_w_factorization(g)),
        PropertyOutcome::of("d-intertwining", res.check_d_intertwining(SchemeTable::standard())),
        PropertyOutcome::of("curve-in-kernel", res.check_curve_in_kernel(g, curve)),
    ]
}

fn exhausted_report(problem: &ProblemFile, level: usize) -> ConeReport {
    ConeReport {
        k: None,
        transversal: false,
        chi: None,
        l: problem.to_curve().map(|c| c.leading_index()).unwrap_or(0),
        nc_dims: Vec::new(),
        top_kernel_dim: None,
        p_dim: None,
        range_sums: Vec::new(),
        approximation: None,
        verdict: Verdict::NotApplicable,
        diagnostics: vec![format!("curve direction exhausted at level {level}")],
    }
}

/// Analyze a parsed problem: minimal order, approximation, verdict, continuation and rate fits.
pub fn analyze_problem(problem: &ProblemFile, input_digest: String) -> Result<ReportFile, KconeError> {
    let g = problem.to_map()?;
    let curve = problem.to_curve()?;
    if !problem.has_curve() {
        return Err(KconeError::Input("curve has no nonzero coefficient".into()));
    }
    let p_samples = problem.p_samples()?;
    let options = problem.continuation_options();
    let mut report = ReportFile {
        schema: REPORT_SCHEMA.into(),
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        input_digest,
        problem: problem.name.clone(),
        field: problem.field,
        status: Status::Ok,
        cone: exhausted_report(problem, 0),
        grid: None,
        newton: Vec::new(),
        slope_fits: Vec::new(),
        degree_signs: None,
        properties: Vec::new(),
        tolerances: Tolerances::from_options(&options),
    };
    let (cone_report, res) = match analyze_cone(&g, &curve, problem.k_max, problem.field) {
        Ok(out) => out,
        Err(KconeError::CurveDirectionExhausted { level }) => {
            report.cone = exhausted_report(problem, level);
            report.status = Status::CurveExhausted;
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    report.cone = cone_report;
    let Some(res) = res else {
        report.status = Status::NotTransversal;
        return Ok(report);
    };
    report.properties = exact_properties(&g, &curve, &res);

    let (grid, grid_note) = problem.grid(res.k)?;
    report.grid = Some(grid_note);
    let cone = Cone::new(&g, &curve, &res)?;
    let mut first_run = None;
    if cone.approximation_holds() {
        let mut ps = vec![vec![Q::from_integer(0.into()); res.n]];
        ps.extend(p_samples);
        for p in &ps {
            let pf: Vec<f64> = p.iter().map(to_f64).collect();
            let run = cone.newton_continue(&grid, &pf, &options)?;
            if !run.failures.is_empty() {
                report.status = Status::NumericFailure;
            }
            report.newton.push(NewtonSummary::of(p, &run));
            if first_run.is_none() {
                first_run = Some(run);
            }
        }
    }
    let trace = cone.rate_trace(&grid, first_run.as_ref(), &options)?;
    report.slope_fits = trace.fits;
    if problem.field == Field::Real {
        let samples: Vec<CurveSample> = match &first_run {
            Some(run) => run.samples(),
            None => grid.iter().map(|&e| CurveSample { eps: e, z: curve.point(&from_f64(e)).iter().map(to_f64).collect() }).collect(),
        };
        report.degree_signs = Some(degree_signs(&g, &res, &samples)?);
    }
    Ok(report)
}

/// `analyze <in> [-o out]`.
pub fn cmd_analyze(input: &Path, output: Option<&Path>) -> Result<ReportFile, KconeError> {
    let bytes = std::fs::read(input)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| KconeError::Input(format!("problem file is not UTF-8: {e}")))?;
    let problem = ProblemFile::parse(&text)?;
    let report = analyze_problem(&problem, digest(&bytes))?;
    write_output(output, &report.to_json())?;
    Ok(report)
}

/// `example <name>`: analyze a bundled problem.
pub fn cmd_example(name: &str, output: Option<&Path>) -> Result<ReportFile, KconeError> {
    let problem = bundled(name)?;
    let text = problem.to_json();
    let report = analyze_problem(&problem, digest(text.as_bytes()))?;
    write_output(output, &report.to_json())?;
    Ok(report)
}

/// `verify [--k N --count N --seed N]`.
pub fn cmd_verify(config: &VerifyConfig, output: Option<&Path>) -> Result<SuiteReport, KconeError> {
    let report = run_suites(config)?;
    write_output(output, &serde_json::to_string_pretty(&report).expect("suite reports serialize"))?;
    Ok(report)
}

/// The trace table for a problem; an empty or absent grid spec selects the default grid.
pub fn trace_problem(problem: &ProblemFile, grid_spec: Option<&str>) -> Result<TraceTable, KconeError> {
    let g = problem.to_map()?;
    let curve = problem.to_curve()?;
    let (_, res) = analyze_cone(&g, &curve, problem.k_max, problem.field)?;
    let res = res.ok_or(KconeError::NotTransversal)?;
    let mut p = problem.clone();
    if let Some(spec) = grid_spec {
        p.options.grid = Some(spec.to_string());
    }
    let (grid, note) = p.grid(res.k)?;
    let options = problem.continuation_options();
    let cone = Cone::new(&g, &curve, &res)?;
    let run = if cone.approximation_holds() { Some(cone.newton_continue(&grid, &vec![0.0; res.n], &options)?) } else { None };
    let mut table = cone.rate_trace(&grid, run.as_ref(), &options)?.table;
    table.note = Some(format!("kcone trace k={} chi={} {note}", res.k, res.chi()));
    Ok(table)
}

/// `trace <in> --grid a:b:points -o csv`.
pub fn cmd_trace(input: &Path, grid_spec: Option<&str>, output: Option<&Path>) -> Result<TraceTable, KconeError> {
    let problem = ProblemFile::load(input)?;
    let table = trace_problem(&problem, grid_spec)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    write_output(output, &String::from_utf8(buf).expect("csv is UTF-8"))?;
    Ok(table)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), KconeError> {
    match path {
        Some(p) => std::fs::write(p, format!("{}\n", text.trim_end_matches('\n')))?,
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", text.trim_end_matches('\n'))?;
        }
    }
    Ok(())
}

/// Whether a report's approximation check found every tested coefficient zero.
pub fn approximation_exact(report: &ReportFile) -> bool {
    matches!(report.cone.approximation.as_ref().map(|a| &a.order), Some(ApproxOrder::ExactZero))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let all = [Status::Ok, Status::NotTransversal, Status::InputError, Status::NumericFailure, Status::CurveExhausted];
        let codes: Vec<i32> = all.iter().map(|s| s.exit_code()).collect();
        assert_eq!(codes, vec![0, 1, 2, 3, 4]);
        assert_eq!(Status::of_error(&KconeError::Input("x".into())), Status::InputError);
        assert_eq!(Status::of_error(&KconeError::CurveDirectionExhausted { level: 2 }), Status::CurveExhausted);
    }

    #[test]
    fn digest_format() {
        let d = digest(b"abc");
        assert_eq!(d, "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn regular_problem_is_not_applicable() {
        let p = bundled("regular").unwrap();
        let r = analyze_problem(&p, String::new()).unwrap();
        assert!(r.cone.transversal);
        assert_eq!(r.cone.chi, Some(0));
        assert_eq!(r.cone.verdict, Verdict::NotApplicable);
        assert_eq!(r.status, Status::Ok);
        assert!(r.newton.is_empty());
    }

    #[test]
    fn pitchfork_report() {
        let p = bundled("pitchfork").unwrap();
        let r = analyze_problem(&p, String::new()).unwrap();
        assert_eq!((r.cone.k, r.cone.chi, r.cone.l), (Some(1), Some(1), 1));
        assert!(approximation_exact(&r));
        assert_eq!(r.status, Status::Ok);
        assert!(r.newton[0].max_residual_g < 1e-12);
        assert!(r.degree_signs.as_ref().unwrap().opposite());
        assert!(r.properties.iter().all(|p| p.holds), "{:?}", r.properties);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["verdict"], "bifurcation");
    }

    #[test]
    fn not_transversal_status() {
        let text = r#"{"n":2,"m":1,"map":[[{"coef":"1","exp":[0,2]}]],"curve":[["1","0"]],"k_max":3}"#;
        let r = analyze_problem(&ProblemFile::parse(text).unwrap(), String::new()).unwrap();
        assert_eq!(r.status, Status::NotTransversal);
        assert!(!r.cone.transversal);
    }

    #[test]
    fn exhausted_status() {
        let text = r#"{"n":2,"m":3,"map":[[{"coef":"1","exp":[1,0]}],[{"coef":"1","exp":[0,2]}],[]],"curve":[["0","1"]],"k_max":3}"#;
        let r = analyze_problem(&ProblemFile::parse(text).unwrap(), String::new()).unwrap();
        assert_eq!(r.status, Status::CurveExhausted);
    }

    #[test]
    fn trace_echoes_default_grid() {
        let p = bundled("pitchfork").unwrap();
        let t = trace_problem(&p, Some("")).unwrap();
        assert!(t.note.as_ref().unwrap().contains("0.1:0.0001:25 (default)"));
        assert!(t.column("residual").unwrap().iter().all(|r| *r < 1e-14));
        let t = trace_problem(&p, Some("0.05:0.01:5")).unwrap();
        assert_eq!(t.rows.len(), 10);
    }
}
