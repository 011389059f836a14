//! Plot-ready data products: curve and mismatch CSV, run summary and the
//! cross-method comparison. Loading is reported in MW added over the base
//! case; mismatches in MVA.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pf::{LoadingDirection, Network};
use crate::tracer::{curve_query, CurvePoint, PVCurve, TraceCounters, TraceMethod};

pub const CURVE_HEADER: &str = "lambda_mw,bus_id,v_mag_pu,v_ang_rad";
pub const MISMATCH_HEADER: &str = "lambda_mw,method,max_mismatch_mva";

/// One row per bus per point.
pub fn curve_csv(net: &Network, points: &[CurvePoint], mw_per_lambda: f64) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for p in points {
        for (bus, v) in net.case().buses.iter().zip(&p.state.v) {
            let _ = writeln!(out, "{},{},{},{}", p.lambda * mw_per_lambda, bus.id, v.norm(), v.arg());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchRow {
    pub lambda_mw: f64,
    pub method: TraceMethod,
    pub max_mismatch_mva: f64,
}

pub fn mismatch_rows(
    net: &Network,
    dir: &LoadingDirection,
    method: TraceMethod,
    points: &[CurvePoint],
    mw_per_lambda: f64,
) -> Vec<MismatchRow> {
    points
        .iter()
        .map(|p| MismatchRow {
            lambda_mw: p.lambda * mw_per_lambda,
            method,
            max_mismatch_mva: net.mismatch(&p.state, dir, p.lambda).max_abs_mva(net.base_mva()),
        })
        .collect()
}

pub fn mismatch_csv(rows: &[MismatchRow]) -> String {
    let mut out = String::from(MISMATCH_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.lambda_mw, r.method.label(), r.max_mismatch_mva);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: TraceMethod,
    pub converged: bool,
    pub nose_lambda: f64,
    pub nose_mw: f64,
    pub points: usize,
    /// Largest mismatch over the emitted points, in per-unit and MVA.
    pub max_mismatch_pu: f64,
    pub max_mismatch_mva: f64,
    pub counters: TraceCounters,
}

impl MethodSummary {
    pub fn new(curve: &PVCurve, emitted: &[MismatchRow], base_mva: f64) -> Self {
        let mva = emitted.iter().map(|r| r.max_mismatch_mva).fold(0.0, f64::max);
        Self {
            method: curve.method,
            converged: curve.converged,
            nose_lambda: curve.nose_lambda,
            nose_mw: curve.lambda_to_mw(curve.nose_lambda),
            points: emitted.len(),
            max_mismatch_pu: mva / base_mva,
            max_mismatch_mva: mva,
            counters: curve.counters.clone(),
        }
    }
}

/// Summary written next to the curve files. Headline counters are lifted to
/// the top level for quick inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub case: String,
    pub base_mva: f64,
    pub mw_per_lambda: f64,
    pub mshem_stages: Option<usize>,
    pub cpf_steps: Option<usize>,
    pub corrector_iterations: Option<usize>,
    pub hee_corrections: Option<usize>,
    pub methods: Vec<MethodSummary>,
}

impl RunSummary {
    pub fn new(case: &str, base_mva: f64, mw_per_lambda: f64, methods: Vec<MethodSummary>) -> Self {
        let find = |m: TraceMethod| methods.iter().find(|s| s.method == m);
        Self {
            case: case.to_string(),
            base_mva,
            mw_per_lambda,
            mshem_stages: find(TraceMethod::Mshem).map(|s| s.counters.stages),
            hee_corrections: find(TraceMethod::Mshem).map(|s| s.counters.hee_corrections),
            cpf_steps: find(TraceMethod::Cpf).map(|s| s.counters.cpf_steps),
            corrector_iterations: find(TraceMethod::Cpf).map(|s| s.counters.corrector_iterations),
            methods,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub lambda_mw: f64,
    /// Largest |V| difference over all buses (per-unit).
    pub max_dv_pu: f64,
    pub mismatch_a_mva: f64,
    pub mismatch_b_mva: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub method_a: TraceMethod,
    pub method_b: TraceMethod,
    pub tol_mva: f64,
    pub rows: Vec<CompareRow>,
    pub max_dv_pu: f64,
    /// Loadings (MW) where either curve exceeds the tolerance, with the
    /// offending method.
    pub flagged: Vec<(f64, TraceMethod)>,
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "lambda_mw,max_dv_pu,{}_mismatch_mva,{}_mismatch_mva\n",
            self.method_a.label(),
            self.method_b.label()
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.lambda_mw, r.max_dv_pu, r.mismatch_a_mva, r.mismatch_b_mva
            );
        }
        out
    }
}

/// Compare two curves at the given loadings (in units of lambda). Each curve
/// is evaluated with [`curve_query`], so loadings must lie on both.
pub fn compare_curves(
    net: &Network,
    dir: &LoadingDirection,
    a: &PVCurve,
    b: &PVCurve,
    lambdas: &[f64],
    tol_pu: f64,
) -> Result<CompareReport> {
    let base = net.base_mva();
    let mut rows = Vec::with_capacity(lambdas.len());
    let mut flagged = Vec::new();
    for &lambda in lambdas {
        let xa = curve_query(a, lambda)?;
        let xb = curve_query(b, lambda)?;
        let dv = xa
            .v
            .iter()
            .zip(&xb.v)
            .map(|(p, q)| (p.norm() - q.norm()).abs())
            .fold(0.0, f64::max);
        let ma = net.mismatch(&xa, dir, lambda).max_abs_mva(base);
        let mb = net.mismatch(&xb, dir, lambda).max_abs_mva(base);
        let lambda_mw = lambda * a.mw_per_lambda;
        if ma > tol_pu * base {
            flagged.push((lambda_mw, a.method));
        }
        if mb > tol_pu * base {
            flagged.push((lambda_mw, b.method));
        }
        rows.push(CompareRow {
            lambda_mw,
            max_dv_pu: dv,
            mismatch_a_mva: ma,
            mismatch_b_mva: mb,
        });
    }
    Ok(CompareReport {
        method_a: a.method,
        method_b: b.method,
        tol_mva: tol_pu * base,
        max_dv_pu: rows.iter().map(|r| r.max_dv_pu).fold(0.0, f64::max),
        rows,
        flagged,
    })
}

/// `count` loadings spread evenly over the points of `curve` (by index), so
/// the samples are actual points of a point-only curve.
pub fn sample_lambdas(curve: &PVCurve, count: usize) -> Vec<f64> {
    let n = curve.points.len();
    if n == 0 || count == 0 {
        return Vec::new();
    }
    let count = count.min(n);
    let mut out: Vec<f64> = (0..count)
        .map(|j| {
            let idx = if count == 1 { 0 } else { j * (n - 1) / (count - 1) };
            curve.points[idx].lambda
        })
        .collect();
    out.dedup();
    out
}
