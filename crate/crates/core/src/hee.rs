//! Holomorphic error embedding: a non-iterative corrector.
//!
//! Given an inexact state `x_l` with residual `eps = f(x_l)`, the embedding
//!
//! ```text
//! g(s) = f(x(s)) - (1 - s) eps,    x(s) = x_l + sum_{k>=1} x_k s^k
//! ```
//!
//! vanishes identically at `s = 0` and reduces to `f(x(1)) = 0` at `s = 1`.
//! Because `f` is quadratic, each coefficient `x_k` solves a linear system
//! with the Jacobian at `x_l`. The order-1 system is `J x_1 = -eps`, i.e.
//! the first coefficient is exactly the Newton step. The Jacobian is factored
//! once; every further order costs one back substitution.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::pf::{LoadingDirection, Network, PowerFlowSolution, StateVector};
use crate::recursion::QuadraticRecursion;
use crate::series::{ComplexSeries, PadeApproximant};

pub const DEFAULT_HEE_ORDER: usize = 20;
/// Orders at or above this evaluate `x(1)` through Padé approximants.
pub const PADE_FROM_ORDER: usize = 8;
/// A correction must shrink the mismatch at least this much (unless the
/// result already meets the tolerance).
pub const REQUIRED_REDUCTION: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeeProblem {
    pub x_l: StateVector,
    pub epsilon: Vec<f64>,
    pub lambda: f64,
    pub direction: LoadingDirection,
}

impl HeeProblem {
    /// `epsilon` is always recomputed from `x_l`.
    pub fn new(net: &Network, x_l: StateVector, dir: &LoadingDirection, lambda: f64) -> Self {
        let epsilon = net.residual(&x_l, dir, lambda);
        Self {
            x_l,
            epsilon,
            lambda,
            direction: dir.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeeSeries {
    pub problem: HeeProblem,
    pub voltages: Vec<ComplexSeries>,
    pub q_gen: Vec<ComplexSeries>,
    pub order: usize,
    /// Relative residual of each per-order linear solve.
    pub linear_residuals: Vec<f64>,
}

impl HeeSeries {
    /// Coefficient vectors `x_k` as states (slack entry holds its coefficient).
    pub fn coefficient(&self, k: usize) -> StateVector {
        StateVector {
            v: self.voltages.iter().map(|s| s.coeff(k)).collect(),
            q_gen: self.q_gen.iter().map(|s| s.coeff(k).re).collect(),
        }
    }

    fn evaluate(&self, s: f64, pade: bool) -> Result<StateVector> {
        let at = Complex64::new(s, 0.0);
        let eval = |ser: &ComplexSeries| -> Result<Complex64> {
            if pade {
                // an (almost) polynomial series has no usable denominator
                PadeApproximant::robust(ser)
                    .and_then(|p| p.eval(at))
                    .or_else(|_| Ok(ser.eval(at)))
            } else {
                Ok(ser.eval(at))
            }
        };
        Ok(StateVector {
            v: self.voltages.iter().map(eval).collect::<Result<_>>()?,
            q_gen: self
                .q_gen
                .iter()
                .map(|q| eval(q).map(|z| z.re))
                .collect::<Result<_>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeeCorrection {
    pub solution: PowerFlowSolution,
    pub series: HeeSeries,
    pub initial_mismatch: f64,
    pub factorizations: usize,
    pub back_substitutions: usize,
}

/// Coefficients of `x(s)` through `order`, plus the number of back
/// substitutions spent.
pub fn build_hee_series(
    net: &Network,
    x_l: &StateVector,
    dir: &LoadingDirection,
    lambda: f64,
    order: usize,
) -> Result<(HeeSeries, usize)> {
    let problem = HeeProblem::new(net, x_l.clone(), dir, lambda);
    let mut rec = QuadraticRecursion::new(net, net.admittance(), None, x_l)?;
    let slack_step = net.slack_voltage() - x_l.v[net.slack()];
    let forcing1: Vec<f64> = problem.epsilon.iter().map(|e| -e).collect();
    let zero = vec![0.0; net.dim()];
    for k in 1..=order {
        let (forcing, slack) = if k == 1 {
            (&forcing1, slack_step)
        } else {
            (&zero, Complex64::default())
        };
        rec.advance(forcing, slack);
    }
    let solves = rec.solves();
    let n = net.bus_count();
    let series = HeeSeries {
        voltages: (0..n)
            .map(|i| ComplexSeries::new(rec.v.iter().map(|v| v[i]).collect()))
            .collect(),
        q_gen: (0..net.pv_buses().len())
            .map(|p| ComplexSeries::from_real(&rec.q.iter().map(|q| q[p]).collect::<Vec<_>>()))
            .collect(),
        order,
        linear_residuals: rec.linear_residuals,
        problem,
    };
    Ok((series, solves))
}

/// Correct `x_l` toward the exact solution at `lambda` with an order-`order`
/// error embedding evaluated at `s = 1`.
pub fn hee_correct(
    net: &Network,
    x_l: &StateVector,
    dir: &LoadingDirection,
    lambda: f64,
    order: usize,
    tol: f64,
) -> Result<HeeCorrection> {
    if order == 0 {
        return Err(Error::InvalidConfig("HEE order must be at least 1".into()));
    }
    let initial_mismatch = net.max_mismatch(x_l, dir, lambda);
    let (series, back_substitutions) = build_hee_series(net, x_l, dir, lambda, order)?;

    let state = series.evaluate(1.0, order >= PADE_FROM_ORDER)?;
    let after = net.max_mismatch(&state, dir, lambda);
    let after = if after.is_nan() { f64::INFINITY } else { after };
    if after > tol && after * REQUIRED_REDUCTION > initial_mismatch {
        return Err(Error::CorrectionDiverged {
            before: initial_mismatch,
            after,
        });
    }
    Ok(HeeCorrection {
        solution: PowerFlowSolution {
            state,
            lambda,
            max_mismatch: after,
            converged: after <= tol,
            iterations: 0,
        },
        series,
        initial_mismatch,
        factorizations: 1,
        back_substitutions,
    })
}

/// Infinity norm of the order-`k` coefficient of `g(s)`, recomputed from the
/// stored coefficients by direct convolution.
pub fn hee_residual_check(net: &Network, series: &HeeSeries, k: usize) -> f64 {
    let p = &series.problem;
    if k == 0 {
        let f = net.residual(&p.x_l, &p.direction, p.lambda);
        return inf_norm(&f.iter().zip(&p.epsilon).map(|(a, b)| a - b).collect::<Vec<_>>());
    }
    let y = net.admittance();
    let coeff: Vec<StateVector> = (0..=k).map(|j| series.coefficient(j)).collect();
    let currents: Vec<Vec<Complex64>> = coeff.iter().map(|c| y.mul_vec(&c.v)).collect();
    let mut g = vec![0.0; net.dim()];
    for i in 0..net.bus_count() {
        let Some(r) = net.var_slot(i) else { continue };
        let mut s: Complex64 = (0..=k)
            .map(|j| coeff[j].v[i] * currents[k - j][i].conj())
            .sum();
        if let Some(pv) = net.pv_slot(i) {
            s.im -= coeff[k].q_gen[pv];
            let mag: f64 = (0..=k).map(|j| (coeff[j].v[i] * coeff[k - j].v[i].conj()).re).sum();
            g[net.q_row(pv)] = mag;
        }
        g[r] = s.re;
        g[r + 1] = s.im;
    }
    if k == 1 {
        for (gi, e) in g.iter_mut().zip(&p.epsilon) {
            *gi += e;
        }
    }
    inf_norm(&g)
}
