//! Multi-stage holomorphic embedding tracer.
//!
//! Each stage expands the voltages around an anchor as a power series in `s`,
//! walks along that series as far as the power-flow mismatch stays within
//! `tol_predict`, corrects the endpoint with the error embedding and restarts
//! there. The first stage uses M3 from the zero-injection germ when the
//! loading direction is proportional; every later stage uses M4 anchored at
//! the previous corrected endpoint.
//!
//! Inside a stage the curve is the series plus a linear blend of the start
//! and end offsets (the gap between series value and corrected state). The
//! blend makes consecutive stages meet exactly at their shared boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hee::{hee_correct, DEFAULT_HEE_ORDER};
use crate::hem::{
    build_series, physical_germ, EmbeddingVariant, EvalMethod, GermSolution, HemSeries,
    LambdaMap, LoadingSpan, DEFAULT_ORDER, MAX_ORDER, MIN_ORDER,
};
use crate::pf::{LoadingDirection, Network, PowerFlowSolution, StateVector};

/// Resolution of the final (nose) step as a fraction of `min_step_mw`.
const NOSE_RESOLUTION: f64 = 1e-3;
/// Interior points checked, besides the endpoint, before a step is accepted.
const INTERIOR_CHECKS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracerConfig {
    /// Largest mismatch (per-unit) a predicted point may have.
    pub tol_predict: f64,
    /// Mismatch (per-unit) every corrected endpoint must meet.
    pub tol_correct: f64,
    /// Endpoints whose predicted mismatch exceeds this are corrected. Kept
    /// below `tol_correct` so the next anchor starts with headroom.
    pub correct_above: f64,
    pub min_step_mw: f64,
    pub series_order: usize,
    pub hee_order: usize,
    pub max_stages: usize,
    /// Largest probe offset in `s` for one stage.
    pub s_max_hint: f64,
    /// First probe offset in `s`.
    pub first_probe: f64,
    /// Scale applied to the M4 span.
    pub k_scale: f64,
    /// Step halvings allowed after a failed correction.
    pub max_halvings: usize,
    pub eval: EvalMethod,
}

impl Default for TracerConfig {
    fn default() -> Self {
        Self {
            tol_predict: 1e-8,
            tol_correct: 1e-8,
            correct_above: 1e-10,
            min_step_mw: 1.0,
            series_order: DEFAULT_ORDER,
            hee_order: DEFAULT_HEE_ORDER,
            max_stages: 50,
            s_max_hint: 16.0,
            first_probe: 1.0 / 16.0,
            k_scale: 1.0,
            max_halvings: 2,
            eval: EvalMethod::Pade,
        }
    }
}

impl TracerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.tol_correct > 0.0) || !(self.tol_predict > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.tol_correct > self.tol_predict {
            return bad("tol_correct must not exceed tol_predict");
        }
        if !(self.correct_above >= 0.0) || self.correct_above > self.tol_correct {
            return bad("correct_above must lie in [0, tol_correct]");
        }
        if !(self.min_step_mw > 0.0) || !self.min_step_mw.is_finite() {
            return bad("min_step_mw must be positive");
        }
        if !(MIN_ORDER..=MAX_ORDER).contains(&self.series_order) {
            return bad("series order out of range");
        }
        if self.hee_order == 0 || self.max_stages == 0 {
            return bad("hee_order and max_stages must be positive");
        }
        if !(self.first_probe > 0.0) || !(self.s_max_hint >= self.first_probe) {
            return bad("probe offsets must satisfy 0 < first_probe <= s_max_hint");
        }
        if !(self.k_scale > 0.0) || !self.k_scale.is_finite() {
            return bad("k_scale must be positive");
        }
        Ok(())
    }
}

/// Work counters shared by both tracing methods.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceCounters {
    pub stages: usize,
    pub series_builds: usize,
    pub step_probes: usize,
    pub hee_corrections: usize,
    pub factorizations: usize,
    pub back_substitutions: usize,
    pub step_halvings: usize,
    pub cpf_steps: usize,
    pub rejected_steps: usize,
    pub corrector_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceMethod {
    Mshem,
    Cpf,
    HemSingle,
}

impl TraceMethod {
    pub fn label(&self) -> &'static str {
        match self {
            TraceMethod::Mshem => "mshem",
            TraceMethod::Cpf => "cpf",
            TraceMethod::HemSingle => "hem-single",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub state: StateVector,
    pub max_mismatch: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage {
    pub index: usize,
    pub anchor: PowerFlowSolution,
    pub series: HemSeries,
    pub map: LambdaMap,
    pub s_start: f64,
    pub s_end: f64,
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub predicted_mismatch: f64,
    pub corrected: bool,
    pub corrected_end: PowerFlowSolution,
    /// Corrected start minus series value at `s_start`.
    pub start_offset: StateVector,
    /// Corrected end minus series value at `s_end`.
    pub end_offset: StateVector,
    /// The end offset enters with weight `t^p`, `t` the position within the
    /// stage. `p` follows the growth of the predictor error over the stage,
    /// so the offset is applied where the error actually is.
    pub end_weight_power: f64,
}

impl Stage {
    pub fn state_at_s(&self, s: f64, eval: EvalMethod) -> Result<StateVector> {
        let raw = self.series.evaluate_real(s, eval)?;
        let t = ((s - self.s_start) / (self.s_end - self.s_start)).clamp(0.0, 1.0);
        Ok(blend(&raw, &self.start_offset, 1.0 - t, &self.end_offset, t.powf(self.end_weight_power)))
    }

    pub fn state_at(&self, lambda: f64, eval: EvalMethod) -> Result<StateVector> {
        if lambda == self.lambda_start {
            return Ok(self.anchor_state());
        }
        if lambda == self.lambda_end {
            return Ok(self.corrected_end.state.clone());
        }
        self.state_at_s(self.map.s(lambda), eval)
    }

    fn anchor_state(&self) -> StateVector {
        self.anchor.state.clone()
    }

    pub fn covers(&self, lambda: f64) -> bool {
        lambda >= self.lambda_start && lambda <= self.lambda_end
    }
}

fn diff(a: &StateVector, b: &StateVector) -> StateVector {
    StateVector {
        v: a.v.iter().zip(&b.v).map(|(x, y)| x - y).collect(),
        q_gen: a.q_gen.iter().zip(&b.q_gen).map(|(x, y)| x - y).collect(),
    }
}

fn blend(raw: &StateVector, a: &StateVector, wa: f64, b: &StateVector, wb: f64) -> StateVector {
    StateVector {
        v: raw
            .v
            .iter()
            .zip(a.v.iter().zip(&b.v))
            .map(|(r, (x, y))| r + x * wa + y * wb)
            .collect(),
        q_gen: raw
            .q_gen
            .iter()
            .zip(a.q_gen.iter().zip(&b.q_gen))
            .map(|(r, (x, y))| r + x * wa + y * wb)
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PVCurve {
    pub method: TraceMethod,
    pub stages: Vec<Stage>,
    /// Base case followed by every stage endpoint (MSHEM) or every accepted
    /// continuation point (CPF), in increasing loading.
    pub points: Vec<CurvePoint>,
    pub nose: PowerFlowSolution,
    pub nose_lambda: f64,
    pub converged: bool,
    pub counters: TraceCounters,
    /// Megawatts added per unit of loading parameter.
    pub mw_per_lambda: f64,
    pub eval: EvalMethod,
}

impl PVCurve {
    pub fn lambda_to_mw(&self, lambda: f64) -> f64 {
        lambda * self.mw_per_lambda
    }

    /// Rebuild cached approximants. Call after deserializing a curve.
    pub fn refresh(&mut self) {
        for stage in &mut self.stages {
            stage.series.refresh();
        }
    }
}

/// Outcome of the step search within one stage.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub s_end: f64,
    pub state: StateVector,
    pub mismatch: f64,
    /// True when the accepted step maps to less than `min_step_mw`.
    pub below_min: bool,
    pub probes: usize,
}

/// Mismatch of the raw series at `s` against the loading its map assigns.
fn probe(
    net: &Network,
    series: &HemSeries,
    map: &LambdaMap,
    s: f64,
    eval: EvalMethod,
) -> (f64, Option<StateVector>) {
    match series.evaluate_real(s, eval) {
        Ok(x) => {
            let m = net.max_mismatch(&x, &series.direction, map.lambda(s));
            (if m.is_nan() { f64::INFINITY } else { m }, Some(x))
        }
        Err(_) => (f64::INFINITY, None),
    }
}

/// Largest offset from `s_start` whose predicted mismatch stays within
/// `tol_predict`: exponential probing from `first_probe` up to `s_max_hint`,
/// then bisection until the bracket is narrower than `min_step_mw / 4`.
pub fn step_length(
    net: &Network,
    series: &HemSeries,
    map: &LambdaMap,
    s_start: f64,
    cfg: &TracerConfig,
) -> Result<StepResult> {
    step_search(net, series, map, s_start, cfg, cfg.min_step_mw / 4.0)
}

fn step_search(
    net: &Network,
    series: &HemSeries,
    map: &LambdaMap,
    s_start: f64,
    cfg: &TracerConfig,
    resolution: f64,
) -> Result<StepResult> {
    let mw_per_s = map.per_s.abs() * series.direction.mw_per_lambda(net.case());
    let mut probes = 0;
    // a step is admissible only if the whole predicted segment is
    let mut check = |off: f64| {
        probes += 1;
        let (m, x) = probe(net, series, map, s_start + off, cfg.eval);
        if m > cfg.tol_predict {
            return (m, x);
        }
        for j in 1..=INTERIOR_CHECKS {
            let frac = j as f64 / (INTERIOR_CHECKS + 1) as f64;
            let (mi, _) = probe(net, series, map, s_start + off * frac, cfg.eval);
            if mi > cfg.tol_predict {
                return (mi, None);
            }
        }
        (m, x)
    };

    let good: Option<(f64, StateVector, f64)>;
    let mut bad: Option<f64> = None;
    let (m, x) = check(cfg.first_probe);
    if m <= cfg.tol_predict {
        let mut best = (cfg.first_probe, x.expect("finite mismatch implies a state"), m);
        let mut off = cfg.first_probe;
        while off < cfg.s_max_hint {
            let next = (off * 2.0).min(cfg.s_max_hint);
            let (m, x) = check(next);
            if m <= cfg.tol_predict {
                best = (next, x.expect("finite mismatch implies a state"), m);
                off = next;
            } else {
                bad = Some(next);
                break;
            }
        }
        good = Some(best);
    } else {
        let mut off = cfg.first_probe;
        bad = Some(off);
        good = loop {
            off *= 0.5;
            if off * mw_per_s < resolution {
                return Err(Error::ZeroStep);
            }
            let (m, x) = check(off);
            if m <= cfg.tol_predict {
                break Some((off, x.expect("finite mismatch implies a state"), m));
            }
            bad = Some(off);
        };
    }

    let (mut lo, mut lo_x, mut lo_m) = good.expect("search ends with an accepted offset");
    if let Some(mut hi) = bad {
        while (hi - lo) * mw_per_s >= resolution {
            let mid = 0.5 * (lo + hi);
            let (m, x) = check(mid);
            if m <= cfg.tol_predict {
                lo = mid;
                lo_x = x.expect("finite mismatch implies a state");
                lo_m = m;
            } else {
                hi = mid;
            }
        }
    }
    Ok(StepResult {
        s_end: s_start + lo,
        state: lo_x,
        mismatch: lo_m,
        below_min: lo * mw_per_s < cfg.min_step_mw,
        probes,
    })
}

struct Tracer<'a> {
    net: &'a Network,
    dir: &'a LoadingDirection,
    cfg: &'a TracerConfig,
    counters: TraceCounters,
}

impl<'a> Tracer<'a> {
    fn build(&mut self, variant: EmbeddingVariant, anchor: &GermSolution, span: LoadingSpan) -> Result<HemSeries> {
        let series = build_series(self.net, variant, anchor, self.dir, span, self.cfg.series_order)?;
        self.counters.series_builds += 1;
        self.counters.factorizations += 1;
        self.counters.back_substitutions += self.cfg.series_order;
        Ok(series)
    }

    /// Correct `x` at `lambda` to `tol_correct`.
    fn correct(&mut self, x: &StateVector, lambda: f64) -> Result<PowerFlowSolution> {
        let c = hee_correct(self.net, x, self.dir, lambda, self.cfg.hee_order, self.cfg.tol_correct)?;
        self.counters.hee_corrections += 1;
        self.counters.factorizations += c.factorizations;
        self.counters.back_substitutions += c.back_substitutions;
        if !c.solution.converged {
            return Err(Error::CorrectionDiverged {
                before: c.initial_mismatch,
                after: c.solution.max_mismatch,
            });
        }
        Ok(c.solution)
    }

    fn solution(&self, x: StateVector, lambda: f64) -> PowerFlowSolution {
        self.net.solution(x, self.dir, lambda, self.cfg.tol_correct, 0)
    }

    /// Accept a predicted endpoint, correcting it when needed. On a failed
    /// correction the step is halved (toward `s_start`) at most
    /// `max_halvings` times.
    fn finish_step(
        &mut self,
        series: &HemSeries,
        map: &LambdaMap,
        s_start: f64,
        step: StepResult,
        stage: usize,
    ) -> Result<(f64, StateVector, f64, bool, PowerFlowSolution)> {
        let mut s_end = step.s_end;
        let mut x = step.state;
        let mut m = step.mismatch;
        let mut halvings = 0;
        loop {
            let lambda = map.lambda(s_end);
            if m <= self.cfg.correct_above {
                return Ok((s_end, x.clone(), m, false, self.solution(x, lambda)));
            }
            match self.correct(&x, lambda) {
                Ok(sol) => return Ok((s_end, x, m, true, sol)),
                Err(e) => {
                    if halvings == self.cfg.max_halvings {
                        return Err(Error::StageFailure {
                            stage,
                            reason: e.to_string(),
                        });
                    }
                    halvings += 1;
                    self.counters.step_halvings += 1;
                    s_end = s_start + 0.5 * (s_end - s_start);
                    let (pm, px) = probe(self.net, series, map, s_end, self.cfg.eval);
                    m = pm;
                    x = px.ok_or(Error::StageFailure {
                        stage,
                        reason: "series evaluation failed after halving".into(),
                    })?;
                }
            }
        }
    }

    /// Stage with the given series; returns `None` when no step is possible.
    fn stage(
        &mut self,
        index: usize,
        anchor: PowerFlowSolution,
        series: HemSeries,
        map: LambdaMap,
        s_start: f64,
    ) -> Result<Option<(Stage, bool)>> {
        let mut step = match step_length(self.net, &series, &map, s_start, self.cfg) {
            Ok(s) => s,
            Err(Error::ZeroStep) => return Ok(None),
            Err(e) => return Err(e),
        };
        self.counters.step_probes += step.probes;
        if step.below_min {
            // nose refinement: resolve the final step far below min_step_mw
            let fine = self.cfg.min_step_mw * NOSE_RESOLUTION;
            if let Ok(refined) = step_search(self.net, &series, &map, s_start, self.cfg, fine) {
                self.counters.step_probes += refined.probes;
                if refined.s_end > step.s_end {
                    step = StepResult {
                        below_min: true,
                        ..refined
                    };
                }
            }
        }
        let below_min = step.below_min;
        let (s_end, predicted, m, corrected, end) = self.finish_step(&series, &map, s_start, step, index)?;
        let start_raw = series.evaluate_real(s_start, self.cfg.eval)?;
        let (m_half, _) = probe(self.net, &series, &map, 0.5 * (s_start + s_end), self.cfg.eval);
        let max_power = 4.0 * self.cfg.series_order as f64;
        let end_weight_power = if m_half > 0.0 && m > 0.0 {
            (m / m_half).log2().clamp(1.0, max_power)
        } else {
            1.0
        };
        let stage = Stage {
            end_weight_power,
            index,
            start_offset: diff(&anchor.state, &start_raw),
            end_offset: diff(&end.state, &predicted),
            lambda_start: anchor.lambda,
            lambda_end: map.lambda(s_end),
            anchor,
            series,
            map,
            s_start,
            s_end,
            predicted_mismatch: m,
            corrected,
            corrected_end: end,
        };
        Ok(Some((stage, below_min)))
    }

    fn base_case(&mut self) -> Result<(PowerFlowSolution, Option<(HemSeries, LambdaMap)>)> {
        let germ = physical_germ(self.net).map_err(|e| Error::BaseCaseUnsolvable(e.to_string()))?;
        let span = LoadingSpan {
            anchor_lambda: 0.0,
            target_lambda: 0.0,
        };
        let series = self.build(EmbeddingVariant::M3, &germ, span);
        let from_series = series.as_ref().ok().and_then(|s| {
            let x = s.evaluate_real(1.0, self.cfg.eval).ok()?;
            let m = self.net.max_mismatch(&x, self.dir, 0.0);
            if m <= self.cfg.correct_above {
                Some(self.solution(x, 0.0))
            } else {
                self.correct(&x, 0.0).ok()
            }
        });
        let base = match from_series {
            Some(b) => b,
            None => {
                let sol = self
                    .net
                    .solve_newton(&self.net.flat_start(), self.dir, 0.0, self.cfg.correct_above.max(1e-12), 30)
                    .map_err(|e| Error::BaseCaseUnsolvable(e.to_string()))?;
                self.counters.factorizations += sol.iterations;
                sol
            }
        };
        let stage_one = series.ok().and_then(|s| s.lambda_map.map(|m| (s, m)));
        Ok((base, stage_one))
    }

    fn run(mut self) -> Result<PVCurve> {
        let (base, stage_one) = self.base_case()?;
        let mut points = vec![CurvePoint {
            lambda: 0.0,
            max_mismatch: base.max_mismatch,
            state: base.state.clone(),
        }];
        let mut stages: Vec<Stage> = Vec::new();
        let mut anchor = base;
        let mut horizon = 1.0;
        let mut converged = false;
        let mut pending = stage_one.map(|(series, map)| (series, map, map.s(0.0)));

        while stages.len() < self.cfg.max_stages {
            let (series, map, s_start) = match pending.take() {
                Some(p) => p,
                None => {
                    let germ = GermSolution {
                        state: anchor.state.clone(),
                        physical: true,
                    };
                    let span = LoadingSpan {
                        anchor_lambda: anchor.lambda,
                        target_lambda: anchor.lambda + horizon,
                    };
                    let variant = EmbeddingVariant::M4 {
                        k_scale: self.cfg.k_scale,
                    };
                    let series = match self.build(variant, &germ, span) {
                        Ok(s) => s,
                        // the anchor sits on the nose itself
                        Err(Error::SingularEmbeddingMatrix) => {
                            converged = true;
                            break;
                        }
                        Err(e) => return Err(e),
                    };
                    let map = series.lambda_map.expect("M4 always has a loading map");
                    (series, map, 0.0)
                }
            };
            let Some((stage, below_min)) = self.stage(stages.len(), anchor.clone(), series, map, s_start)? else {
                converged = true;
                break;
            };
            horizon = stage.lambda_end - stage.lambda_start;
            anchor = stage.corrected_end.clone();
            points.push(CurvePoint {
                lambda: anchor.lambda,
                max_mismatch: anchor.max_mismatch,
                state: anchor.state.clone(),
            });
            stages.push(stage);
            if below_min {
                converged = true;
                break;
            }
        }
        self.counters.stages = stages.len();
        Ok(PVCurve {
            method: TraceMethod::Mshem,
            nose_lambda: anchor.lambda,
            nose: anchor,
            stages,
            points,
            converged,
            counters: self.counters,
            mw_per_lambda: self.dir.mw_per_lambda(self.net.case()),
            eval: self.cfg.eval,
        })
    }
}

/// Trace the upper branch of the P-V curve from the base case to the nose.
pub fn trace_pv(net: &Network, dir: &LoadingDirection, cfg: &TracerConfig) -> Result<PVCurve> {
    cfg.validate()?;
    dir.check(net.case())?;
    Tracer {
        net,
        dir,
        cfg,
        counters: TraceCounters::default(),
    }
    .run()
}

/// State on a traced curve at `lambda`.
///
/// Staged curves evaluate the covering stage; point-only curves (continuation
/// power flow) interpolate linearly between the bracketing points.
pub fn curve_query(curve: &PVCurve, lambda: f64) -> Result<StateVector> {
    let max = curve.nose_lambda;
    if !(lambda >= 0.0 && lambda <= max) {
        return Err(Error::OutOfRange { lambda, max });
    }
    if lambda == 0.0 || curve.stages.is_empty() {
        return interpolate(&curve.points, lambda).ok_or(Error::OutOfRange { lambda, max });
    }
    let stage = curve
        .stages
        .iter()
        .find(|s| s.covers(lambda))
        .ok_or(Error::OutOfRange { lambda, max })?;
    stage.state_at(lambda, curve.eval)
}

fn interpolate(points: &[CurvePoint], lambda: f64) -> Option<StateVector> {
    let hi = points.iter().position(|p| p.lambda >= lambda)?;
    if points[hi].lambda == lambda || hi == 0 {
        return Some(points[hi].state.clone());
    }
    let (a, b) = (&points[hi - 1], &points[hi]);
    let t = (lambda - a.lambda) / (b.lambda - a.lambda);
    let zero = diff(&a.state, &a.state);
    Some(blend(&a.state, &diff(&b.state, &a.state), t, &zero, 0.0))
}

/// Points to emit for a staged curve: each stage sampled at
/// `per_stage` equally spaced loadings (endpoints included, shared
/// boundaries emitted once). Any sample whose mismatch exceeds
/// `tol_correct` is corrected with the error embedding.
pub fn emit_points(
    net: &Network,
    curve: &PVCurve,
    dir: &LoadingDirection,
    per_stage: usize,
    cfg: &TracerConfig,
) -> Result<Vec<CurvePoint>> {
    if curve.stages.is_empty() {
        return Ok(curve.points.clone());
    }
    let per_stage = per_stage.max(2);
    let mut out = vec![curve.points[0].clone()];
    for stage in &curve.stages {
        for j in 1..per_stage {
            let lambda = if j + 1 == per_stage {
                stage.lambda_end
            } else {
                stage.lambda_start + (stage.lambda_end - stage.lambda_start) * j as f64 / (per_stage - 1) as f64
            };
            let mut state = stage.state_at(lambda, curve.eval)?;
            let mut m = net.max_mismatch(&state, dir, lambda);
            if m > cfg.tol_correct {
                let c = hee_correct(net, &state, dir, lambda, cfg.hee_order, cfg.tol_correct)?;
                state = c.solution.state;
                m = c.solution.max_mismatch;
            }
            out.push(CurvePoint {
                lambda,
                state,
                max_mismatch: m,
            });
        }
    }
    Ok(out)
}

/// Curve from one M3 series built at the zero-injection germ, sampled at
/// `samples` equally spaced loadings in `[0, lambda_max]` without any
/// restart or correction. Shows where a single expansion loses accuracy.
pub fn trace_single_hem(
    net: &Network,
    dir: &LoadingDirection,
    order: usize,
    lambda_max: f64,
    samples: usize,
) -> Result<PVCurve> {
    dir.check(net.case())?;
    if net.proportional_factor(dir).is_none() {
        return Err(Error::InvalidDirection(
            "a single M3 series needs a proportional loading direction".into(),
        ));
    }
    if !(lambda_max > 0.0) || samples < 2 {
        return Err(Error::InvalidConfig("need lambda_max > 0 and at least two samples".into()));
    }
    let germ = physical_germ(net)?;
    let span = LoadingSpan {
        anchor_lambda: 0.0,
        target_lambda: 0.0,
    };
    let series = build_series(net, EmbeddingVariant::M3, &germ, dir, span, order)?;
    let map = series.lambda_map.expect("proportional M3 series has a loading map");
    let mut points = Vec::with_capacity(samples);
    for j in 0..samples {
        let lambda = lambda_max * j as f64 / (samples - 1) as f64;
        let (max_mismatch, state) = probe(net, &series, &map, map.s(lambda), EvalMethod::Pade);
        let Some(state) = state else { break };
        points.push(CurvePoint {
            lambda,
            state,
            max_mismatch,
        });
    }
    let last = points.last().ok_or(Error::PoleAtEvaluationPoint)?;
    let nose = PowerFlowSolution {
        state: last.state.clone(),
        lambda: last.lambda,
        max_mismatch: last.max_mismatch,
        converged: false,
        iterations: 0,
    };
    Ok(PVCurve {
        method: TraceMethod::HemSingle,
        stages: Vec::new(),
        nose_lambda: nose.lambda,
        nose,
        points,
        converged: false,
        counters: TraceCounters {
            series_builds: 1,
            factorizations: 1,
            back_substitutions: order,
            ..Default::default()
        },
        mw_per_lambda: dir.mw_per_lambda(net.case()),
        eval: EvalMethod::Pade,
    })
}
