//! Power-flow equations in rectangular coordinates.
//!
//! Unknowns are the real and imaginary voltage parts of every non-slack bus
//! plus the reactive output of each PV-bus generator. Residual rows are the
//! active and reactive power balance of every non-slack bus followed by one
//! squared-magnitude constraint `|V|^2 - v_set^2` per PV bus, so the whole
//! residual is a quadratic polynomial in the unknowns. That shape is what the
//! series recursions in [`crate::hem`] and [`crate::hee`] rely on.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::case_io::{build_admittance, AdmittanceMatrix, BusKind, NetworkCase};
use crate::error::{Error, Result};
use crate::linalg::{inf_norm, Factorized};

/// Complex bus voltages plus reactive output of the PV-bus generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub v: Vec<Complex64>,
    /// Indexed like [`Network::pv_buses`].
    pub q_gen: Vec<f64>,
}

impl StateVector {
    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        let dv = self
            .v
            .iter()
            .zip(&other.v)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let dq = self
            .q_gen
            .iter()
            .zip(&other.q_gen)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        dv.max(dq)
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.v.iter().map(|v| v.norm()).collect()
    }
}

/// Per-unit increments per unit of the loading parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingDirection {
    /// Per bus, indexed like `case.buses`.
    pub d_pload: Vec<f64>,
    pub d_qload: Vec<f64>,
    /// Per generator, indexed like `case.generators`.
    pub d_pgen: Vec<f64>,
}

/// Direction file row, in MW / MVAr per unit lambda.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionEntry {
    pub bus: usize,
    #[serde(default)]
    pub dp_mw: f64,
    #[serde(default)]
    pub dq_mvar: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DirectionFile {
    #[serde(default)]
    pub loads: Vec<DirectionEntry>,
    #[serde(default)]
    pub generators: Vec<DirectionEntry>,
}

impl LoadingDirection {
    /// Every load and every generator's active output scaled together.
    pub fn proportional(case: &NetworkCase) -> Self {
        Self {
            d_pload: case.buses.iter().map(|b| b.p_load).collect(),
            d_qload: case.buses.iter().map(|b| b.q_load).collect(),
            d_pgen: case.generators.iter().map(|g| g.p_gen).collect(),
        }
    }

    pub fn zero(case: &NetworkCase) -> Self {
        Self {
            d_pload: vec![0.0; case.bus_count()],
            d_qload: vec![0.0; case.bus_count()],
            d_pgen: vec![0.0; case.generators.len()],
        }
    }

    /// Build from a JSON direction file (`{"loads": [...], "generators": [...]}`).
    pub fn from_json(case: &NetworkCase, text: &str) -> Result<Self> {
        let file: DirectionFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidDirection(format!("line {}: {e}", e.line())))?;
        let pos = case.bus_positions();
        let mut dir = Self::zero(case);
        for entry in &file.loads {
            let &i = pos.get(&entry.bus).ok_or_else(|| {
                Error::InvalidDirection(format!("unknown load bus {}", entry.bus))
            })?;
            dir.d_pload[i] += entry.dp_mw / case.base_mva;
            dir.d_qload[i] += entry.dq_mvar / case.base_mva;
        }
        for entry in &file.generators {
            let g = case
                .generators
                .iter()
                .position(|g| g.bus == entry.bus)
                .ok_or_else(|| {
                    Error::InvalidDirection(format!("no generator at bus {}", entry.bus))
                })?;
            dir.d_pgen[g] += entry.dp_mw / case.base_mva;
        }
        Ok(dir)
    }

    pub fn check(&self, case: &NetworkCase) -> Result<()> {
        if self.d_pload.len() != case.bus_count()
            || self.d_qload.len() != case.bus_count()
            || self.d_pgen.len() != case.generators.len()
        {
            return Err(Error::InvalidDirection("dimension mismatch".into()));
        }
        let all = self.d_pload.iter().chain(&self.d_qload).chain(&self.d_pgen);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDirection("non-finite entry".into()));
        }
        if all.clone().all(|&v| v == 0.0) {
            return Err(Error::InvalidDirection("direction is the zero vector".into()));
        }
        Ok(())
    }

    /// MW of load change per unit lambda, used to express loading in MW.
    /// Falls back to generation change, then to the system base.
    pub fn mw_per_lambda(&self, case: &NetworkCase) -> f64 {
        let load: f64 = self.d_pload.iter().map(|v| v.abs()).sum();
        let gen: f64 = self.d_pgen.iter().map(|v| v.abs()).sum();
        let pu = if load > 0.0 {
            load
        } else if gen > 0.0 {
            gen
        } else {
            1.0
        };
        pu * case.base_mva
    }
}

/// Per-bus power residual plus voltage-setpoint residuals, all per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchVector {
    /// `S_injected - S_specified` per bus; the slack entry is zero because
    /// its injection is free.
    pub power: Vec<Complex64>,
    /// `|v_i| - v_set` at slack and PV buses, zero at PQ buses.
    pub magnitude: Vec<f64>,
    pub slack_angle: f64,
}

impl MismatchVector {
    pub fn max_abs(&self) -> f64 {
        let p = self
            .power
            .iter()
            .map(|s| s.re.abs().max(s.im.abs()))
            .fold(0.0, f64::max);
        let m = inf_norm(&self.magnitude);
        p.max(m).max(self.slack_angle.abs())
    }

    pub fn max_abs_mva(&self, base_mva: f64) -> f64 {
        self.max_abs() * base_mva
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub state: StateVector,
    pub lambda: f64,
    pub max_mismatch: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// A validated case together with its admittance matrix and the index maps
/// used to flatten states into real vectors.
#[derive(Debug, Clone)]
pub struct Network {
    case: NetworkCase,
    y: AdmittanceMatrix,
    slack: usize,
    pv: Vec<usize>,
    pv_slot: Vec<Option<usize>>,
    var_slot: Vec<Option<usize>>,
    gen_pos: Vec<usize>,
    v_set: Vec<f64>,
}

impl Network {
    pub fn new(case: NetworkCase) -> Result<Self> {
        case.validate()?;
        let y = build_admittance(&case);
        Ok(Self::with_admittance(case, y))
    }

    pub fn with_admittance(case: NetworkCase, y: AdmittanceMatrix) -> Self {
        let slack = case.slack_position();
        let pos = case.bus_positions();
        let mut pv = Vec::new();
        let mut pv_slot = vec![None; case.bus_count()];
        let mut var_slot = vec![None; case.bus_count()];
        let mut next = 0;
        for (i, bus) in case.buses.iter().enumerate() {
            if bus.kind != BusKind::Slack {
                var_slot[i] = Some(next);
                next += 2;
            }
            if bus.kind == BusKind::PV {
                pv_slot[i] = Some(pv.len());
                pv.push(i);
            }
        }
        let gen_pos = case.generators.iter().map(|g| pos[&g.bus]).collect();
        let v_set = case.buses.iter().map(|b| b.v_set.unwrap_or(1.0)).collect();
        Self {
            case,
            y,
            slack,
            pv,
            pv_slot,
            var_slot,
            gen_pos,
            v_set,
        }
    }

    pub fn case(&self) -> &NetworkCase {
        &self.case
    }

    pub fn admittance(&self) -> &AdmittanceMatrix {
        &self.y
    }

    pub fn bus_count(&self) -> usize {
        self.case.bus_count()
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn pv_buses(&self) -> &[usize] {
        &self.pv
    }

    pub fn base_mva(&self) -> f64 {
        self.case.base_mva
    }

    /// Number of real unknowns (and residual rows).
    pub fn dim(&self) -> usize {
        2 * (self.bus_count() - 1) + self.pv.len()
    }

    pub(crate) fn var_slot(&self, bus: usize) -> Option<usize> {
        self.var_slot[bus]
    }

    pub(crate) fn pv_slot(&self, bus: usize) -> Option<usize> {
        self.pv_slot[bus]
    }

    pub(crate) fn q_row(&self, pv_index: usize) -> usize {
        2 * (self.bus_count() - 1) + pv_index
    }

    pub fn v_setpoint(&self, bus: usize) -> f64 {
        self.v_set[bus]
    }

    pub fn slack_voltage(&self) -> Complex64 {
        let b = &self.case.buses[self.slack];
        Complex64::from_polar(self.v_set[self.slack], b.angle_set)
    }

    /// Flat start: slack at its reference, regulated buses at setpoint.
    pub fn flat_start(&self) -> StateVector {
        let angle = self.case.buses[self.slack].angle_set;
        let v = (0..self.bus_count())
            .map(|i| Complex64::from_polar(self.v_set[i], angle))
            .collect();
        StateVector {
            v,
            q_gen: vec![0.0; self.pv.len()],
        }
    }

    /// Specified complex injection per bus at loading `lambda`.
    pub fn specified_injections(&self, dir: &LoadingDirection, lambda: f64) -> Vec<Complex64> {
        let mut s: Vec<Complex64> = self
            .case
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| {
                -Complex64::new(
                    b.p_load + lambda * dir.d_pload[i],
                    b.q_load + lambda * dir.d_qload[i],
                )
            })
            .collect();
        for (g, gen) in self.case.generators.iter().enumerate() {
            s[self.gen_pos[g]].re += gen.p_gen + lambda * dir.d_pgen[g];
        }
        s
    }

    /// Injection change per unit lambda.
    pub fn injection_increment(&self, dir: &LoadingDirection) -> Vec<Complex64> {
        let mut s: Vec<Complex64> = (0..self.bus_count())
            .map(|i| -Complex64::new(dir.d_pload[i], dir.d_qload[i]))
            .collect();
        for (g, &d) in dir.d_pgen.iter().enumerate() {
            s[self.gen_pos[g]].re += d;
        }
        s
    }

    /// If `dir` scales every non-slack injection by a common factor, return
    /// that factor `c` so that `S(lambda) = (1 + c lambda) S(0)`.
    pub fn proportional_factor(&self, dir: &LoadingDirection) -> Option<f64> {
        let s0 = self.specified_injections(dir, 0.0);
        let ds = self.injection_increment(dir);
        let mut factor: Option<f64> = None;
        for i in (0..self.bus_count()).filter(|&i| i != self.slack) {
            for (a, d) in [(s0[i].re, ds[i].re), (s0[i].im, ds[i].im)] {
                if a == 0.0 {
                    if d != 0.0 {
                        return None;
                    }
                    continue;
                }
                let c = d / a;
                match factor {
                    None => factor = Some(c),
                    Some(f) if (f - c).abs() <= 1e-12 * f.abs().max(1.0) => {}
                    Some(_) => return None,
                }
            }
        }
        factor.filter(|&c| c > 0.0)
    }

    pub fn state_to_real(&self, x: &StateVector) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (i, v) in x.v.iter().enumerate() {
            if let Some(k) = self.var_slot[i] {
                out[k] = v.re;
                out[k + 1] = v.im;
            }
        }
        for (j, q) in x.q_gen.iter().enumerate() {
            out[self.q_row(j)] = *q;
        }
        out
    }

    /// Inverse of [`Self::state_to_real`]; the slack voltage comes from `template`.
    pub fn real_to_state(&self, real: &[f64], slack_v: Complex64) -> StateVector {
        let v = (0..self.bus_count())
            .map(|i| match self.var_slot[i] {
                Some(k) => Complex64::new(real[k], real[k + 1]),
                None => slack_v,
            })
            .collect();
        let q_gen = (0..self.pv.len()).map(|j| real[self.q_row(j)]).collect();
        StateVector { v, q_gen }
    }

    /// Residual vector f(x) at loading `lambda`, in solver row order.
    pub fn residual(&self, x: &StateVector, dir: &LoadingDirection, lambda: f64) -> Vec<f64> {
        let spec = self.specified_injections(dir, lambda);
        self.residual_against(&self.y, x, &spec)
    }

    pub(crate) fn residual_against(
        &self,
        y: &AdmittanceMatrix,
        x: &StateVector,
        spec: &[Complex64],
    ) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for i in 0..self.bus_count() {
            let Some(k) = self.var_slot[i] else { continue };
            let mut s = x.v[i] * y.row_dot(i, &x.v).conj() - spec[i];
            if let Some(j) = self.pv_slot[i] {
                s.im -= x.q_gen[j];
                out[self.q_row(j)] = x.v[i].norm_sqr() - self.v_set[i] * self.v_set[i];
            }
            out[k] = s.re;
            out[k + 1] = s.im;
        }
        out
    }

    pub fn mismatch(&self, x: &StateVector, dir: &LoadingDirection, lambda: f64) -> MismatchVector {
        let spec = self.specified_injections(dir, lambda);
        let n = self.bus_count();
        let mut power = vec![Complex64::default(); n];
        let mut magnitude = vec![0.0; n];
        for i in 0..n {
            if i == self.slack {
                magnitude[i] = x.v[i].norm() - self.v_set[i];
                continue;
            }
            let mut s = x.v[i] * self.y.row_dot(i, &x.v).conj() - spec[i];
            if let Some(j) = self.pv_slot[i] {
                s.im -= x.q_gen[j];
                magnitude[i] = x.v[i].norm() - self.v_set[i];
            }
            power[i] = s;
        }
        let slack_angle = x.v[self.slack].arg() - self.case.buses[self.slack].angle_set;
        MismatchVector {
            power,
            magnitude,
            slack_angle,
        }
    }

    /// Infinity norm of the mismatch, per-unit.
    pub fn max_mismatch(&self, x: &StateVector, dir: &LoadingDirection, lambda: f64) -> f64 {
        self.mismatch(x, dir, lambda).max_abs()
    }

    /// Analytic Jacobian of [`Self::residual`], row-major `dim x dim`.
    pub fn jacobian(&self, x: &StateVector) -> Vec<f64> {
        self.jacobian_with(&self.y, x)
    }

    pub(crate) fn jacobian_with(&self, y: &AdmittanceMatrix, x: &StateVector) -> Vec<f64> {
        let dim = self.dim();
        let mut jac = vec![0.0; dim * dim];
        let j = Complex64::new(0.0, 1.0);
        for i in 0..self.bus_count() {
            let Some(r) = self.var_slot[i] else { continue };
            let current = y.row_dot(i, &x.v).conj();
            for &(m, ymk) in y.row(i) {
                let Some(c) = self.var_slot[m] else { continue };
                let mut d_e = x.v[i] * ymk.conj();
                let mut d_f = -j * x.v[i] * ymk.conj();
                if m == i {
                    d_e += current;
                    d_f += j * current;
                }
                jac[r * dim + c] += d_e.re;
                jac[(r + 1) * dim + c] += d_e.im;
                jac[r * dim + c + 1] += d_f.re;
                jac[(r + 1) * dim + c + 1] += d_f.im;
            }
            if let Some(p) = self.pv_slot[i] {
                let qr = self.q_row(p);
                jac[(r + 1) * dim + qr] = -1.0;
                jac[qr * dim + r] = 2.0 * x.v[i].re;
                jac[qr * dim + r + 1] = 2.0 * x.v[i].im;
            }
        }
        jac
    }

    pub fn solution(
        &self,
        state: StateVector,
        dir: &LoadingDirection,
        lambda: f64,
        tol: f64,
        iterations: usize,
    ) -> PowerFlowSolution {
        let max_mismatch = self.max_mismatch(&state, dir, lambda);
        PowerFlowSolution {
            state,
            lambda,
            max_mismatch,
            converged: max_mismatch <= tol,
            iterations,
        }
    }

    /// Full Newton-Raphson from `x0`. One factorization per iteration.
    pub fn solve_newton(
        &self,
        x0: &StateVector,
        dir: &LoadingDirection,
        lambda: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<PowerFlowSolution> {
        if !(tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
        }
        let spec = self.specified_injections(dir, lambda);
        let (x, iterations) = self.newton_with(&self.y, x0, &spec, tol, max_iter)?;
        Ok(self.solution(x, dir, lambda, tol, iterations))
    }

    /// Newton on `f(x) = S(V) - spec` against an arbitrary admittance matrix.
    /// Convergence is judged on the residual infinity norm.
    pub(crate) fn newton_with(
        &self,
        y: &AdmittanceMatrix,
        x0: &StateVector,
        spec: &[Complex64],
        tol: f64,
        max_iter: usize,
    ) -> Result<(StateVector, usize)> {
        let slack_v = x0.v[self.slack];
        let mut x = x0.clone();
        let mut real = self.state_to_real(&x);
        let dim = self.dim();
        let mut last = f64::INFINITY;
        for iter in 0..=max_iter {
            let f = self.residual_against(y, &x, spec);
            last = inf_norm(&f);
            if !last.is_finite() {
                break;
            }
            if last <= tol {
                return Ok((x, iter));
            }
            if iter == max_iter {
                break;
            }
            let lu = Factorized::new(dim, &self.jacobian_with(y, &x))?;
            let dx = lu.solve(&f);
            for (r, d) in real.iter_mut().zip(&dx) {
                *r -= d;
            }
            x = self.real_to_state(&real, slack_v);
        }
        Err(Error::NonConvergence {
            iterations: max_iter,
            max_mismatch: last,
        })
    }
}
