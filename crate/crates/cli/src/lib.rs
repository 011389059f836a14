//! Command implementations behind the `mshem` binary.
//!
//! Every command takes a [`RunManifest`], writes its artifacts into the
//! manifest's output directory and returns what it wrote. Failures carry an
//! exit code: 1 for bad input, 2 for numerical failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use mshem_core::case_io::parse_case;
use mshem_core::cpf::{trace_cpf, CpfConfig};
use mshem_core::hem::solve_hem;
use mshem_core::pf::{LoadingDirection, Network, PowerFlowSolution};
use mshem_core::report::{
    compare_curves, curve_csv, mismatch_csv, mismatch_rows, sample_lambdas, CompareReport,
    MethodSummary, RunSummary, CURVE_HEADER,
};
use mshem_core::tracer::{
    emit_points, trace_pv, trace_single_hem, CurvePoint, PVCurve, TraceMethod, TracerConfig,
};
use serde::{Deserialize, Serialize};

pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Bus singled out in the curve products when present (a load-centre bus of
/// the 39-bus system).
pub const FOCUS_BUS: usize = 8;

/// Samples of the single-series curve.
const SINGLE_SAMPLES: usize = 101;
/// Shared loadings used by `compare`.
const COMPARE_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mshem,
    Cpf,
    Both,
    HemSingle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Newton,
    Hem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionSpec {
    Proportional,
    File(PathBuf),
}

impl FromStr for DirectionSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err("direction must be 'proportional' or a file path".into());
        }
        Ok(if s == "proportional" {
            DirectionSpec::Proportional
        } else {
            DirectionSpec::File(PathBuf::from(s))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub case_path: PathBuf,
    pub method: Method,
    pub direction: DirectionSpec,
    pub tracer: TracerConfig,
    pub cpf: CpfConfig,
    pub out_dir: PathBuf,
    /// Points emitted per MSHEM stage (endpoints included).
    pub samples_per_stage: usize,
    pub seed: u64,
}

impl RunManifest {
    pub fn new(case_path: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            case_path: case_path.into(),
            method: Method::Mshem,
            direction: DirectionSpec::Proportional,
            tracer: TracerConfig::default(),
            cpf: CpfConfig::default(),
            out_dir: out_dir.into(),
            samples_per_stage: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliError {
    pub exit_code: i32,
    pub error: String,
    pub message: String,
}

impl CliError {
    pub fn input(error: &str, message: impl Into<String>) -> Self {
        Self {
            exit_code: EXIT_INPUT,
            error: error.into(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error is serializable")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.error, self.message)
    }
}

impl std::error::Error for CliError {}

fn kind(e: &mshem_core::Error) -> &'static str {
    use mshem_core::Error as E;
    match e {
        E::Syntax { .. } => "Syntax",
        E::Semantic(_) => "Semantic",
        E::InvalidDirection(_) => "InvalidDirection",
        E::InvalidConfig(_) => "InvalidConfig",
        E::SingularJacobian => "SingularJacobian",
        E::NonConvergence { .. } => "NonConvergence",
        E::ZeroLeadingCoefficient => "ZeroLeadingCoefficient",
        E::DegeneratePade => "DegeneratePade",
        E::PoleAtEvaluationPoint => "PoleAtEvaluationPoint",
        E::GermNotFound(_) => "GermNotFound",
        E::SingularEmbeddingMatrix => "SingularEmbeddingMatrix",
        E::CorrectionDiverged { .. } => "CorrectionDiverged",
        E::ZeroStep => "ZeroStep",
        E::BaseCaseUnsolvable(_) => "BaseCaseUnsolvable",
        E::StageFailure { .. } => "StageFailure",
        E::StallBeforeNose { .. } => "StallBeforeNose",
        E::OutOfRange { .. } => "OutOfRange",
    }
}

impl From<mshem_core::Error> for CliError {
    fn from(e: mshem_core::Error) -> Self {
        Self {
            exit_code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT },
            error: kind(&e).into(),
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read(path: &Path, what: &str) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::input("Io", format!("cannot read {what} {}: {e}", path.display())))
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> CliResult<()> {
    fs::write(&path, text)
        .map_err(|e| CliError::input("Io", format!("cannot write {}: {e}", path.display())))?;
    written.push(path);
    Ok(())
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::input("Io", format!("cannot create {}: {e}", dir.display())))
}

/// Parse the case and resolve the loading direction.
pub fn load(m: &RunManifest) -> CliResult<(Network, LoadingDirection)> {
    let case = parse_case(&read(&m.case_path, "case")?)?;
    let net = Network::new(case)?;
    let dir = match &m.direction {
        DirectionSpec::Proportional => LoadingDirection::proportional(net.case()),
        DirectionSpec::File(p) => LoadingDirection::from_json(net.case(), &read(p, "direction file")?)?,
    };
    dir.check(net.case())?;
    Ok((net, dir))
}

fn case_name(m: &RunManifest) -> String {
    m.case_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusResult {
    pub bus_id: usize,
    pub v_mag_pu: f64,
    pub v_ang_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub case: String,
    pub solver: Solver,
    pub lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch_pu: f64,
    pub max_mismatch_mva: f64,
    pub buses: Vec<BusResult>,
}

/// Single power flow at `lambda`, written to `solution.json`. A result that
/// misses the tolerance is still written, then reported as a numerical
/// failure.
pub fn cmd_solve(m: &RunManifest, solver: Solver, lambda: f64) -> CliResult<SolveReport> {
    let (net, dir) = load(m)?;
    if !(lambda >= 0.0) {
        return Err(CliError::input("InvalidConfig", format!("lambda must be >= 0, got {lambda}")));
    }
    let tol = m.tracer.tol_correct;
    let sol: PowerFlowSolution = match solver {
        Solver::Newton => net.solve_newton(&net.flat_start(), &dir, lambda, tol, 30)?,
        Solver::Hem => solve_hem(&net, &dir, lambda, m.tracer.series_order, tol)?,
    };
    let report = SolveReport {
        case: case_name(m),
        solver,
        lambda,
        converged: sol.converged,
        iterations: sol.iterations,
        max_mismatch_pu: sol.max_mismatch,
        max_mismatch_mva: net.mismatch(&sol.state, &dir, lambda).max_abs_mva(net.base_mva()),
        buses: net
            .case()
            .buses
            .iter()
            .zip(&sol.state.v)
            .map(|(b, v)| BusResult {
                bus_id: b.id,
                v_mag_pu: v.norm(),
                v_ang_rad: v.arg(),
            })
            .collect(),
    };
    prepare_out(&m.out_dir)?;
    let json = serde_json::to_string_pretty(&report).expect("report is serializable");
    write(m.out_dir.join("solution.json"), &json, &mut Vec::new())?;
    if !report.converged {
        return Err(CliError {
            exit_code: EXIT_NUMERICAL,
            error: "NonConvergence".into(),
            message: format!(
                "solution mismatch {:.3e} pu exceeds tolerance {tol:.1e}",
                report.max_mismatch_pu
            ),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TraceOutput {
    pub summary: RunSummary,
    pub curves: Vec<PVCurve>,
    /// Emitted points per curve, parallel to `curves`.
    pub emitted: Vec<Vec<CurvePoint>>,
    pub files: Vec<PathBuf>,
}

fn curve_file(out: &Path, method: TraceMethod, ext: &str) -> PathBuf {
    out.join(format!("curve_{}.{ext}", method.label()))
}

/// Trace the requested method(s) and write curve, mismatch and summary files.
pub fn cmd_trace(m: &RunManifest) -> CliResult<TraceOutput> {
    let (net, dir) = load(m)?;
    m.tracer.validate()?;
    m.cpf.validate()?;
    prepare_out(&m.out_dir)?;

    let mut curves = Vec::new();
    let mut emitted = Vec::new();
    let wants_mshem = matches!(m.method, Method::Mshem | Method::Both | Method::HemSingle);
    let mshem = if wants_mshem { Some(trace_pv(&net, &dir, &m.tracer)?) } else { None };
    match m.method {
        Method::Mshem | Method::Both => {
            let curve = mshem.clone().expect("traced above");
            emitted.push(emit_points(&net, &curve, &dir, m.samples_per_stage, &m.tracer)?);
            curves.push(curve);
        }
        Method::HemSingle => {
            // sampled up to the multi-stage nose so both cover the same range
            let nose = mshem.as_ref().expect("traced above").nose_lambda;
            let curve = trace_single_hem(&net, &dir, m.tracer.series_order, nose, SINGLE_SAMPLES)?;
            emitted.push(curve.points.clone());
            curves.push(curve);
        }
        Method::Cpf => {}
    }
    if matches!(m.method, Method::Cpf | Method::Both) {
        let curve = trace_cpf(&net, &dir, &m.cpf)?;
        emitted.push(curve.points.clone());
        curves.push(curve);
    }

    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (curve, points) in curves.iter().zip(&emitted) {
        let csv = curve_csv(&net, points, curve.mw_per_lambda);
        write(curve_file(&m.out_dir, curve.method, "csv"), &csv, &mut files)?;
        if net.case().buses.iter().any(|b| b.id == FOCUS_BUS) {
            let focus = format!(",{FOCUS_BUS},");
            let mut text = String::from(CURVE_HEADER);
            text.push('\n');
            for line in csv.lines().skip(1).filter(|l| l.contains(&focus)) {
                text.push_str(line);
                text.push('\n');
            }
            let name = format!("curve_{}_bus{FOCUS_BUS}.csv", curve.method.label());
            write(m.out_dir.join(name), &text, &mut files)?;
        }
        let json = serde_json::to_string(curve).expect("curve is serializable");
        write(curve_file(&m.out_dir, curve.method, "json"), &json, &mut files)?;
        let method_rows = mismatch_rows(&net, &dir, curve.method, points, curve.mw_per_lambda);
        summaries.push(MethodSummary::new(curve, &method_rows, net.base_mva()));
        rows.extend(method_rows);
    }
    write(m.out_dir.join("mismatch.csv"), &mismatch_csv(&rows), &mut files)?;
    let summary = RunSummary::new(&case_name(m), net.base_mva(), dir.mw_per_lambda(net.case()), summaries);
    let json = serde_json::to_string_pretty(&summary).expect("summary is serializable");
    write(m.out_dir.join("summary.json"), &json, &mut files)?;
    let json = serde_json::to_string_pretty(m).expect("manifest is serializable");
    write(m.out_dir.join("manifest.json"), &json, &mut files)?;
    Ok(TraceOutput {
        summary,
        curves,
        emitted,
        files,
    })
}

fn load_curve(out: &Path, method: TraceMethod) -> CliResult<Option<PVCurve>> {
    let path = curve_file(out, method, "json");
    if !path.exists() {
        return Ok(None);
    }
    let mut curve: PVCurve = serde_json::from_str(&read(&path, "curve")?)
        .map_err(|e| CliError::input("MissingArtifact", format!("{} is not a curve: {e}", path.display())))?;
    curve.refresh();
    Ok(Some(curve))
}

/// Compare the multi-stage curve in the output directory against every other
/// traced curve there. Writes `compare_<method>.csv` and `compare.json`.
pub fn cmd_compare(m: &RunManifest) -> CliResult<Vec<CompareReport>> {
    let (net, dir) = load(m)?;
    let missing = |what: &str| {
        CliError::input(
            "MissingArtifact",
            format!("{what} not found in {}; run `trace` first", m.out_dir.display()),
        )
    };
    let reference = load_curve(&m.out_dir, TraceMethod::Mshem)?.ok_or_else(|| missing("curve_mshem.json"))?;
    let mut others = Vec::new();
    for method in [TraceMethod::Cpf, TraceMethod::HemSingle] {
        if let Some(c) = load_curve(&m.out_dir, method)? {
            others.push(c);
        }
    }
    if others.is_empty() {
        return Err(missing("a second curve (cpf or hem-single)"));
    }
    let mut reports = Vec::new();
    let mut files = Vec::new();
    for other in &others {
        let top = reference.nose_lambda.min(other.nose_lambda);
        let lambdas: Vec<f64> = sample_lambdas(other, COMPARE_SAMPLES)
            .into_iter()
            .filter(|&l| l <= top)
            .collect();
        let report = compare_curves(&net, &dir, &reference, other, &lambdas, m.tracer.tol_correct)?;
        let name = format!("compare_{}.csv", other.method.label());
        write(m.out_dir.join(name), &report.to_csv(), &mut files)?;
        reports.push(report);
    }
    let json = serde_json::to_string_pretty(&reports).expect("report is serializable");
    write(m.out_dir.join("compare.json"), &json, &mut files)?;
    Ok(reports)
}
