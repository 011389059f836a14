//! Continuation power flow: tangent predictor and Newton corrector on the
//! system augmented with the loading parameter.
//!
//! The unknown is `y = (x, lambda)` with `x` the real state vector. Each step
//! predicts `y + sigma t` along the unit tangent and corrects with Newton on
//! `F(y) = 0` plus one parameterizing equation. Steps that fail to converge
//! or that land past the nose (loading decreases) are retried with half the
//! step. The trace stops once the step has been cut below `min_step`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, Factorized};
use crate::pf::{LoadingDirection, Network, PowerFlowSolution};
use crate::tracer::{CurvePoint, PVCurve, TraceCounters, TraceMethod};
use crate::hem::EvalMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parameterization {
    /// Pseudo arc length: `(y - y_prev) . t = sigma`.
    ArcLength,
    /// Fix the component with the largest tangent entry at its predicted
    /// value. Near the nose this is a voltage component rather than the
    /// loading.
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpfConfig {
    /// Initial step along the unit tangent.
    pub step_size: f64,
    /// Floor for the halved step; reaching it ends the trace.
    pub min_step: f64,
    pub tol: f64,
    pub parameterization: Parameterization,
    pub max_steps: usize,
    pub max_corrector_iterations: usize,
}

impl Default for CpfConfig {
    fn default() -> Self {
        Self {
            step_size: 0.015,
            min_step: 1e-4,
            tol: 1e-8,
            parameterization: Parameterization::Local,
            max_steps: 5000,
            max_corrector_iterations: 12,
        }
    }
}

impl CpfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("CPF tolerance must be positive".into()));
        }
        if !(self.min_step > 0.0) || !(self.min_step < self.step_size) {
            return Err(Error::InvalidConfig(
                "CPF steps must satisfy 0 < min_step < step_size".into(),
            ));
        }
        if self.max_steps == 0 || self.max_corrector_iterations == 0 {
            return Err(Error::InvalidConfig("CPF iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// Tangent components below this (in absolute value, unit tangent) count as
/// a turning point when the step floor is hit.
const NOSE_TANGENT: f64 = 0.1;

struct Augmented<'a> {
    net: &'a Network,
    dir: &'a LoadingDirection,
    /// dF/dlambda, constant because the residual is affine in the loading.
    f_lambda: Vec<f64>,
}

impl<'a> Augmented<'a> {
    fn new(net: &'a Network, dir: &'a LoadingDirection) -> Self {
        let x = net.flat_start();
        let r1 = net.residual(&x, dir, 1.0);
        let r0 = net.residual(&x, dir, 0.0);
        Self {
            net,
            dir,
            f_lambda: r1.iter().zip(&r0).map(|(a, b)| a - b).collect(),
        }
    }

    fn dim(&self) -> usize {
        self.net.dim() + 1
    }

    /// Components that measure distance along the curve: voltages and the
    /// loading. Reactive outputs of PV buses move with the curve but are
    /// left out so they do not dominate the step.
    fn measured(&self, i: usize) -> bool {
        i < 2 * (self.net.bus_count() - 1) || i == self.net.dim()
    }

    fn norm(&self, v: &[f64]) -> f64 {
        v.iter()
            .enumerate()
            .filter(|(i, _)| self.measured(*i))
            .map(|(_, x)| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn state(&self, y: &[f64]) -> crate::pf::StateVector {
        self.net.real_to_state(&y[..self.net.dim()], self.net.slack_voltage())
    }

    fn residual(&self, y: &[f64]) -> Vec<f64> {
        let d = self.net.dim();
        self.net.residual(&self.state(y), self.dir, y[d])
    }

    fn mismatch(&self, y: &[f64]) -> f64 {
        let d = self.net.dim();
        let m = self.net.max_mismatch(&self.state(y), self.dir, y[d]);
        if m.is_nan() {
            f64::INFINITY
        } else {
            m
        }
    }

    /// Augmented matrix with last row `row`.
    fn matrix(&self, y: &[f64], row: &[f64]) -> Vec<f64> {
        let d = self.net.dim();
        let n = d + 1;
        let jac = self.net.jacobian(&self.state(y));
        let mut a = vec![0.0; n * n];
        for r in 0..d {
            a[r * n..r * n + d].copy_from_slice(&jac[r * d..(r + 1) * d]);
            a[r * n + d] = self.f_lambda[r];
        }
        a[d * n..].copy_from_slice(row);
        a
    }

    /// Unit tangent oriented to agree with `prev` (or toward increasing
    /// loading when there is none).
    fn tangent(&self, y: &[f64], prev: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut row = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        match prev {
            Some(p) => {
                row.copy_from_slice(p);
                rhs[n - 1] = 1.0;
            }
            None => {
                row[n - 1] = 1.0;
                rhs[n - 1] = 1.0;
            }
        }
        let lu = Factorized::new(n, &self.matrix(y, &row))?;
        let mut t = lu.solve(&rhs);
        let norm = self.norm(&t);
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::SingularJacobian);
        }
        for v in &mut t {
            *v /= norm;
        }
        Ok(t)
    }
}

/// Index of the largest-magnitude measured tangent component.
fn pivot_component(aug: &Augmented, t: &[f64]) -> usize {
    let mut best = t.len() - 1;
    for (i, v) in t.iter().enumerate() {
        if aug.measured(i) && v.abs() > t[best].abs() {
            best = i;
        }
    }
    best
}

/// Trace the upper branch with the continuation power flow.
pub fn trace_cpf(net: &Network, dir: &LoadingDirection, cfg: &CpfConfig) -> Result<PVCurve> {
    cfg.validate()?;
    dir.check(net.case())?;
    let base = net
        .solve_newton(&net.flat_start(), dir, 0.0, cfg.tol, 30)
        .map_err(|e| Error::BaseCaseUnsolvable(e.to_string()))?;
    let mut counters = TraceCounters {
        factorizations: base.iterations,
        corrector_iterations: base.iterations,
        ..Default::default()
    };
    let aug = Augmented::new(net, dir);
    let n = aug.dim();
    let d = n - 1;

    let mut y = net.state_to_real(&base.state);
    y.push(0.0);
    let mut points = vec![CurvePoint {
        lambda: 0.0,
        max_mismatch: base.max_mismatch,
        state: base.state.clone(),
    }];
    let mut sigma = cfg.step_size;
    let mut tangent: Option<Vec<f64>> = None;
    let mut converged = false;

    while counters.cpf_steps < cfg.max_steps {
        let t = aug.tangent(&y, tangent.as_deref())?;
        counters.factorizations += 1;

        let attempt = correct(&aug, &y, &t, sigma, cfg, &mut counters);
        let lambda_now = y[d];
        match attempt {
            Some(next) if next[d] >= lambda_now => {
                y = next;
                counters.cpf_steps += 1;
                let state = aug.state(&y);
                points.push(CurvePoint {
                    lambda: y[d],
                    max_mismatch: net.max_mismatch(&state, dir, y[d]),
                    state,
                });
                tangent = Some(t);
            }
            _ => {
                counters.rejected_steps += 1;
                sigma *= 0.5;
                if sigma < cfg.min_step {
                    if t[d].abs() < NOSE_TANGENT {
                        converged = true;
                        break;
                    }
                    return Err(Error::StallBeforeNose { lambda: lambda_now });
                }
            }
        }
    }

    let last = points.last().expect("base point is always present");
    let nose = PowerFlowSolution {
        state: last.state.clone(),
        lambda: last.lambda,
        max_mismatch: last.max_mismatch,
        converged: last.max_mismatch <= cfg.tol,
        iterations: 0,
    };
    Ok(PVCurve {
        method: TraceMethod::Cpf,
        stages: Vec::new(),
        nose_lambda: nose.lambda,
        nose,
        points,
        converged,
        counters,
        mw_per_lambda: dir.mw_per_lambda(net.case()),
        eval: EvalMethod::Direct,
    })
}

/// Predict along `t` by `sigma` and run the Newton corrector. Returns the
/// corrected point or `None` if the corrector fails.
fn correct(
    aug: &Augmented,
    y: &[f64],
    t: &[f64],
    sigma: f64,
    cfg: &CpfConfig,
    counters: &mut TraceCounters,
) -> Option<Vec<f64>> {
    let n = aug.dim();
    let mut z: Vec<f64> = y.iter().zip(t).map(|(a, b)| a + sigma * b).collect();
    let (row, target) = match cfg.parameterization {
        Parameterization::Local => {
            let k = pivot_component(aug, t);
            let mut row = vec![0.0; n];
            row[k] = 1.0;
            (row, z[k])
        }
        Parameterization::ArcLength => {
            let row: Vec<f64> = t
                .iter()
                .enumerate()
                .map(|(i, v)| if aug.measured(i) { *v } else { 0.0 })
                .collect();
            let target = sigma + y.iter().zip(&row).map(|(a, b)| a * b).sum::<f64>();
            (row, target)
        }
    };
    for _ in 0..cfg.max_corrector_iterations {
        if aug.mismatch(&z) <= cfg.tol {
            return Some(z);
        }
        let mut f = aug.residual(&z);
        f.push(row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() - target);
        if !inf_norm(&f).is_finite() {
            return None;
        }
        let lu = Factorized::new(n, &aug.matrix(&z, &row)).ok()?;
        counters.factorizations += 1;
        counters.corrector_iterations += 1;
        let dz = lu.solve(&f);
        for (a, b) in z.iter_mut().zip(&dz) {
            *a -= b;
        }
    }
    (aug.mismatch(&z) <= cfg.tol).then_some(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{net2, net39};

    #[test]
    fn two_bus_nose_within_min_step() {
        let net = net2();
        let dir = LoadingDirection::proportional(net.case());
        let cfg = CpfConfig::default();
        let c = trace_cpf(&net, &dir, &cfg).unwrap();
        assert!(c.converged);
        assert!((c.nose_lambda - 4.0).abs() <= cfg.min_step, "{}", c.nose_lambda);
        for p in &c.points {
            let v = p.state.v[1].norm();
            let pl = 1.0 + p.lambda;
            assert!((v.powi(4) - v * v + 0.01 * pl * pl).abs() <= 1e-7);
        }
    }

    #[test]
    fn thirty_nine_bus_step_count_and_accuracy() {
        let net = net39();
        let dir = LoadingDirection::proportional(net.case());
        let cfg = CpfConfig::default();
        let c = trace_cpf(&net, &dir, &cfg).unwrap();
        assert!(c.converged);
        assert!((150..=350).contains(&c.counters.cpf_steps), "{}", c.counters.cpf_steps);
        assert_eq!(c.points.len(), c.counters.cpf_steps + 1);
        assert!(c.counters.corrector_iterations >= c.counters.cpf_steps);
        for w in c.points.windows(2) {
            assert!(w[1].lambda >= w[0].lambda);
        }
        for p in &c.points {
            assert!(net.max_mismatch(&p.state, &dir, p.lambda) <= cfg.tol);
        }
    }

    #[test]
    fn arc_length_reaches_the_same_nose() {
        let net = net2();
        let dir = LoadingDirection::proportional(net.case());
        let cfg = CpfConfig {
            parameterization: Parameterization::ArcLength,
            ..Default::default()
        };
        let c = trace_cpf(&net, &dir, &cfg).unwrap();
        assert!(c.converged);
        assert!((c.nose_lambda - 4.0).abs() <= 1e-3, "{}", c.nose_lambda);
    }

    #[test]
    fn zero_direction_is_rejected() {
        let net = net2();
        let dir = LoadingDirection::zero(net.case());
        assert!(matches!(
            trace_cpf(&net, &dir, &CpfConfig::default()),
            Err(Error::InvalidDirection(_))
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let net = net2();
        let dir = LoadingDirection::proportional(net.case());
        let cfg = CpfConfig { min_step: 0.1, step_size: 0.01, ..Default::default() };
        assert!(matches!(trace_cpf(&net, &dir, &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn starved_corrector_stalls_before_the_nose() {
        let net = net39();
        let dir = LoadingDirection::proportional(net.case());
        let cfg = CpfConfig { max_corrector_iterations: 1, step_size: 0.05, min_step: 0.02, ..Default::default() };
        match trace_cpf(&net, &dir, &cfg) {
            Err(Error::StallBeforeNose { lambda }) => assert!(lambda < 1.0),
            other => panic!("{other:?}"),
        }
    }
}
