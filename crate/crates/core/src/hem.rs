//! Holomorphic embedding of the power-flow equations.
//!
//! Three embeddings are provided, differing in how the specified injections
//! enter at the embedding parameter `s`:
//!
//! | variant | PV buses | germ | injection at `s` |
//! |---------|----------|------|------------------|
//! | M1 | no  | non-physical (shunts scaled by `s`) | `s * S(target)` |
//! | M3 | yes | physical, zero-injection operating point | `s * S(target)` |
//! | M4 | yes | physical, any solved operating point | `S(anchor + k s (target - anchor))` |
//!
//! For a proportional loading direction the M4 injection equals
//! `(1 + k' s) * S(anchor)`, the usual way that embedding is written.
//!
//! Each embedding is solved as a quadratic residual in rectangular form (see
//! [`crate::pf`]), which is algebraically the same as the current-balance form
//! `sum_k Y_ik V_k = conj(S_i) / conj(V_i)` whenever `V_i != 0`, so both produce
//! the same voltage series.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::case_io::{build_admittance_parts, AdmittanceMatrix};
use crate::error::{Error, Result};
use crate::pf::{LoadingDirection, Network, StateVector};
use crate::recursion::QuadraticRecursion;
use crate::series::{ComplexSeries, PadeApproximant};

pub const DEFAULT_ORDER: usize = 30;
pub const MIN_ORDER: usize = 5;
pub const MAX_ORDER: usize = 100;

const GERM_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EmbeddingVariant {
    M1,
    M3,
    M4 { k_scale: f64 },
}

impl EmbeddingVariant {
    pub fn m4() -> Self {
        EmbeddingVariant::M4 { k_scale: 1.0 }
    }

    pub fn uses_physical_germ(&self) -> bool {
        !matches!(self, EmbeddingVariant::M1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMethod {
    Direct,
    Pade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GermSolution {
    pub state: StateVector,
    pub physical: bool,
}

/// Affine loading map `lambda(s) = at_zero + per_s * s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaMap {
    pub at_zero: f64,
    pub per_s: f64,
}

impl LambdaMap {
    pub fn lambda(&self, s: f64) -> f64 {
        self.at_zero + self.per_s * s
    }

    pub fn s(&self, lambda: f64) -> f64 {
        (lambda - self.at_zero) / self.per_s
    }
}

/// Where the series starts and which loading `s = 1` reaches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingSpan {
    /// Loading of the anchor (used by M4 only).
    pub anchor_lambda: f64,
    /// Loading reached at `s = 1`.
    pub target_lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HemSeries {
    pub variant: EmbeddingVariant,
    pub germ: GermSolution,
    pub voltages: Vec<ComplexSeries>,
    pub q_gen: Vec<ComplexSeries>,
    pub order: usize,
    pub span: LoadingSpan,
    pub direction: LoadingDirection,
    /// Present when every real `s` maps to a point of the traced P-V curve.
    pub lambda_map: Option<LambdaMap>,
    /// Injection at `s` is `base + s * increment` (per bus).
    pub injection_base: Vec<Complex64>,
    pub injection_increment: Vec<Complex64>,
    pub linear_residuals: Vec<f64>,
    #[serde(skip)]
    pade: Vec<Option<PadeApproximant>>,
}

/// Zero-injection operating point with slack and PV magnitudes at setpoint.
pub fn physical_germ(net: &Network) -> Result<GermSolution> {
    let zeros = vec![Complex64::default(); net.bus_count()];
    let (state, _) = net
        .newton_with(net.admittance(), &net.flat_start(), &zeros, GERM_TOL, 30)
        .map_err(|e| Error::GermNotFound(e.to_string()))?;
    Ok(GermSolution {
        state,
        physical: true,
    })
}

/// Germ of the M1 embedding: zero injection on the network stripped of every
/// shunt element. The equations are linear in that case.
pub fn non_physical_germ(net: &Network, series_part: &AdmittanceMatrix) -> Result<GermSolution> {
    let zeros = vec![Complex64::default(); net.bus_count()];
    let (state, _) = net
        .newton_with(series_part, &net.flat_start(), &zeros, GERM_TOL, 30)
        .map_err(|e| Error::GermNotFound(e.to_string()))?;
    Ok(GermSolution {
        state,
        physical: false,
    })
}

/// Build the embedding series through `order`.
///
/// For M1 and M3 the anchor is the germ and `span.anchor_lambda` is ignored;
/// for M4 the anchor must be a solved operating point at `span.anchor_lambda`.
pub fn build_series(
    net: &Network,
    variant: EmbeddingVariant,
    anchor: &GermSolution,
    dir: &LoadingDirection,
    span: LoadingSpan,
    order: usize,
) -> Result<HemSeries> {
    dir.check(net.case())?;
    if !(MIN_ORDER..=MAX_ORDER).contains(&order) && order != 0 {
        return Err(Error::InvalidConfig(format!(
            "series order {order} outside {MIN_ORDER}..={MAX_ORDER}"
        )));
    }
    let parts;
    let (y, y_scaled) = match variant {
        EmbeddingVariant::M1 => {
            if !net.pv_buses().is_empty() {
                return Err(Error::InvalidConfig(
                    "M1 embedding requires a network without PV buses".into(),
                ));
            }
            parts = build_admittance_parts(net.case());
            (&parts.0, Some(&parts.1))
        }
        _ => (net.admittance(), None),
    };

    let (base, increment, lambda_map) = match variant {
        EmbeddingVariant::M1 | EmbeddingVariant::M3 => {
            let target = net.specified_injections(dir, span.target_lambda);
            let map = net.proportional_factor(dir).map(|c| LambdaMap {
                at_zero: -1.0 / c,
                per_s: (1.0 + c * span.target_lambda) / c,
            });
            let map = if variant == EmbeddingVariant::M1 { None } else { map };
            (vec![Complex64::default(); net.bus_count()], target, map)
        }
        EmbeddingVariant::M4 { k_scale } => {
            let per_s = k_scale * (span.target_lambda - span.anchor_lambda);
            if per_s == 0.0 || !per_s.is_finite() {
                return Err(Error::InvalidConfig("M4 span must be non-empty".into()));
            }
            let inc = net
                .injection_increment(dir)
                .into_iter()
                .map(|d| d * per_s)
                .collect();
            (
                net.specified_injections(dir, span.anchor_lambda),
                inc,
                Some(LambdaMap {
                    at_zero: span.anchor_lambda,
                    per_s,
                }),
            )
        }
    };

    let mut rec = QuadraticRecursion::new(net, y, y_scaled, &anchor.state).map_err(|e| match e {
        Error::SingularJacobian => Error::SingularEmbeddingMatrix,
        e => e,
    })?;
    let mut forcing1 = vec![0.0; net.dim()];
    for i in 0..net.bus_count() {
        if let Some(r) = net.var_slot(i) {
            forcing1[r] = increment[i].re;
            forcing1[r + 1] = increment[i].im;
        }
    }
    let zero = vec![0.0; net.dim()];
    for k in 1..=order {
        rec.advance(if k == 1 { &forcing1 } else { &zero }, Complex64::default());
    }

    let n = net.bus_count();
    let voltages: Vec<ComplexSeries> = (0..n)
        .map(|i| ComplexSeries::new(rec.v.iter().map(|vk| vk[i]).collect()))
        .collect();
    let q_gen: Vec<ComplexSeries> = (0..net.pv_buses().len())
        .map(|p| ComplexSeries::from_real(&rec.q.iter().map(|qk| qk[p]).collect::<Vec<_>>()))
        .collect();
    let mut series = HemSeries {
        variant,
        germ: anchor.clone(),
        voltages,
        q_gen,
        order,
        span,
        direction: dir.clone(),
        lambda_map,
        injection_base: base,
        injection_increment: increment,
        linear_residuals: rec.linear_residuals,
        pade: Vec::new(),
    };
    series.build_pade();
    Ok(series)
}

impl HemSeries {
    fn build_pade(&mut self) {
        self.pade = self
            .voltages
            .iter()
            .chain(&self.q_gen)
            .map(|s| PadeApproximant::robust(s).ok())
            .collect();
    }

    fn pade_for(&mut self) {
        if self.pade.len() != self.voltages.len() + self.q_gen.len() {
            self.build_pade();
        }
    }

    /// Recompute cached approximants (needed after deserialization).
    pub fn refresh(&mut self) {
        self.pade_for();
    }

    /// Evaluate every unknown at `s`.
    pub fn evaluate(&self, s: Complex64, method: EvalMethod) -> Result<StateVector> {
        let n = self.voltages.len();
        let eval = |idx: usize, series: &ComplexSeries| -> Result<Complex64> {
            match method {
                EvalMethod::Direct => Ok(series.eval(s)),
                EvalMethod::Pade => {
                    if self.order < 2 {
                        return Err(Error::InvalidConfig(
                            "Pade evaluation needs order >= 2".into(),
                        ));
                    }
                    match self.pade.get(idx).and_then(Option::as_ref) {
                        Some(p) => p.eval(s),
                        None => Ok(series.eval(s)),
                    }
                }
            }
        };
        let v = self
            .voltages
            .iter()
            .enumerate()
            .map(|(i, ser)| eval(i, ser))
            .collect::<Result<Vec<_>>>()?;
        let q_gen = self
            .q_gen
            .iter()
            .enumerate()
            .map(|(p, ser)| eval(n + p, ser).map(|z| z.re))
            .collect::<Result<Vec<_>>>()?;
        Ok(StateVector { v, q_gen })
    }

    pub fn evaluate_real(&self, s: f64, method: EvalMethod) -> Result<StateVector> {
        self.evaluate(Complex64::new(s, 0.0), method)
    }

    /// Injections the embedded equations specify at real `s`.
    pub fn injections_at(&self, s: f64) -> Vec<Complex64> {
        self.injection_base
            .iter()
            .zip(&self.injection_increment)
            .map(|(b, d)| b + d * s)
            .collect()
    }

    /// Max power-flow mismatch (per-unit) of `state` against the physical
    /// network carrying the injections specified at `s`.
    pub fn mismatch_at(&self, net: &Network, state: &StateVector, s: f64) -> f64 {
        let spec = self.injections_at(s);
        let mut worst = 0.0f64;
        for i in 0..net.bus_count() {
            if i == net.slack() {
                worst = worst.max((state.v[i].norm() - net.v_setpoint(i)).abs());
                continue;
            }
            let mut p = state.v[i] * net.admittance().row_dot(i, &state.v).conj() - spec[i];
            if let Some(j) = net.pv_slot(i) {
                p.im -= state.q_gen[j];
                worst = worst.max((state.v[i].norm() - net.v_setpoint(i)).abs());
            }
            worst = worst.max(p.re.abs()).max(p.im.abs());
        }
        if worst.is_nan() {
            f64::INFINITY
        } else {
            worst
        }
    }

    /// Anchor state (the order-0 coefficients).
    pub fn anchor(&self) -> &StateVector {
        &self.germ.state
    }
}

/// Single-stage HEM power flow: M3 series whose `s = 1` value is the
/// operating point at `lambda`, evaluated with Padé approximants.
pub fn solve_hem(
    net: &Network,
    dir: &LoadingDirection,
    lambda: f64,
    order: usize,
    tol: f64,
) -> Result<crate::pf::PowerFlowSolution> {
    let germ = physical_germ(net)?;
    let span = LoadingSpan {
        anchor_lambda: 0.0,
        target_lambda: lambda,
    };
    let series = build_series(net, EmbeddingVariant::M3, &germ, dir, span, order)?;
    let state = series.evaluate_real(1.0, EvalMethod::Pade)?;
    Ok(net.solution(state, dir, lambda, tol, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{net2, net39};

    fn m3(net: &Network, target: f64, order: usize) -> HemSeries {
        let dir = LoadingDirection::proportional(net.case());
        let germ = physical_germ(net).unwrap();
        build_series(
            net,
            EmbeddingVariant::M3,
            &germ,
            &dir,
            LoadingSpan {
                anchor_lambda: 0.0,
                target_lambda: target,
            },
            order,
        )
        .unwrap()
    }

    /// Upper root of V^4 - V^2 + X^2 P^2 = 0.
    fn two_bus_v(p: f64) -> f64 {
        let x = 0.1;
        ((1.0 + (1.0 - 4.0 * x * x * p * p).sqrt()) / 2.0).sqrt()
    }

    #[test]
    fn germ_of_unloaded_two_bus_is_flat() {
        let net = net2();
        let germ = physical_germ(&net).unwrap();
        assert!(germ.physical);
        for v in &germ.state.v {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn germ_39_satisfies_zero_injection_equations() {
        let net = net39();
        let germ = physical_germ(&net).unwrap();
        let zeros = vec![Complex64::default(); net.bus_count()];
        let r = net.residual_against(net.admittance(), &germ.state, &zeros);
        assert!(crate::linalg::inf_norm(&r) <= 1e-12);
    }

    #[test]
    fn order_zero_reproduces_anchor() {
        let net = net39();
        let series = m3(&net, 0.0, 10);
        let at0 = series.evaluate_real(0.0, EvalMethod::Direct).unwrap();
        assert_eq!(at0, series.germ.state);
        let pade0 = series.evaluate_real(0.0, EvalMethod::Pade).unwrap();
        assert_eq!(pade0.v, series.germ.state.v);
    }

    #[test]
    fn m3_two_bus_matches_closed_form() {
        let net = net2();
        // s = 1 reaches lambda = 1, i.e. P = 2 pu; P = 1 pu is at s = 0.5
        let series = m3(&net, 1.0, 30);
        for (s, p) in [(0.5, 1.0), (1.0, 2.0), (2.0, 4.0)] {
            let x = series.evaluate_real(s, EvalMethod::Pade).unwrap();
            let v = x.v[1].norm();
            assert!((v - two_bus_v(p)).abs() < 1e-8, "s={s}: {v} vs {}", two_bus_v(p));
        }
    }

    #[test]
    fn m3_matches_newton_on_39() {
        let net = net39();
        let dir = LoadingDirection::proportional(net.case());
        let series = m3(&net, 0.0, 30);
        let newton = net.solve_newton(&net.flat_start(), &dir, 0.0, 1e-12, 20).unwrap();
        let x = series.evaluate_real(1.0, EvalMethod::Pade).unwrap();
        assert!(x.max_abs_diff(&newton.state) < 1e-8);
        assert!(series.linear_residuals.iter().all(|&r| r <= 1e-12), "{:?}", series.linear_residuals);
    }

    #[test]
    fn m3_points_lie_on_curve() {
        let net = net39();
        let series = m3(&net, 0.0, 30);
        for k in 0..=10 {
            let s = 0.1 * k as f64;
            let x = series.evaluate_real(s, EvalMethod::Pade).unwrap();
            let m = series.mismatch_at(&net, &x, s);
            assert!(m < 1e-9, "s={s}: {m}");
        }
    }

    #[test]
    fn m1_matches_m3_at_one_on_two_bus() {
        let net = net2();
        let dir = LoadingDirection::proportional(net.case());
        let span = LoadingSpan {
            anchor_lambda: 0.0,
            target_lambda: 1.0,
        };
        let parts = build_admittance_parts(net.case());
        let germ = non_physical_germ(&net, &parts.0).unwrap();
        assert!(!germ.physical);
        let m1 = build_series(&net, EmbeddingVariant::M1, &germ, &dir, span, 30).unwrap();
        assert!(m1.lambda_map.is_none());
        let x = m1.evaluate_real(1.0, EvalMethod::Pade).unwrap();
        assert!((x.v[1].norm() - two_bus_v(2.0)).abs() < 1e-8);
    }

    #[test]
    fn m1_rejects_pv_networks() {
        let net = net39();
        let germ = physical_germ(&net).unwrap();
        let dir = LoadingDirection::proportional(net.case());
        let span = LoadingSpan {
            anchor_lambda: 0.0,
            target_lambda: 0.0,
        };
        assert!(matches!(
            build_series(&net, EmbeddingVariant::M1, &germ, &dir, span, 10),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn m4_reproduces_m3_segment() {
        let net = net39();
        let dir = LoadingDirection::proportional(net.case());
        let m3s = m3(&net, 0.0, 30);
        let map = m3s.lambda_map.unwrap();
        // anchor at lambda = 0.2 taken from M3, polished by Newton
        let s_anchor = map.s(0.2);
        let x0 = m3s.evaluate_real(s_anchor, EvalMethod::Pade).unwrap();
        let x0 = net.solve_newton(&x0, &dir, 0.2, 1e-13, 5).unwrap().state;
        let anchor = GermSolution {
            state: x0,
            physical: true,
        };
        let span = LoadingSpan {
            anchor_lambda: 0.2,
            target_lambda: 0.4,
        };
        let m4 = build_series(&net, EmbeddingVariant::m4(), &anchor, &dir, span, 30).unwrap();
        let a = m4.evaluate_real(0.5, EvalMethod::Pade).unwrap();
        let b = m3s.evaluate_real(map.s(0.3), EvalMethod::Pade).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-8, "{}", a.max_abs_diff(&b));
    }

    #[test]
    fn convergence_in_order() {
        let net = net39();
        let mut last = f64::INFINITY;
        for order in [10, 20, 30] {
            let series = m3(&net, 0.0, order);
            let x = series.evaluate_real(1.0, EvalMethod::Direct).unwrap();
            let m = series.mismatch_at(&net, &x, 1.0);
            assert!(m <= 10.0 * last.max(1e-13), "order {order}: {m} after {last}");
            last = m;
        }
    }

    #[test]
    fn solve_hem_matches_newton_below_the_nose() {
        let net = net39();
        let dir = LoadingDirection::proportional(net.case());
        // traced nose of this case is at lambda = 1.1357
        for k in 0..10 {
            let lam = 0.07 * 1.1357 * k as f64;
            let h = solve_hem(&net, &dir, lam, 30, 1e-8).unwrap();
            let n = net.solve_newton(&net.flat_start(), &dir, lam, 1e-13, 30).unwrap();
            assert!(h.state.max_abs_diff(&n.state) <= 1e-8, "lambda {lam}");
            assert!(h.converged);
        }
        // close to the nose one order-30 expansion is no longer enough
        let lam = 0.9 * 1.1357;
        let h = solve_hem(&net, &dir, lam, 30, 1e-8).unwrap();
        assert!(!h.converged, "{}", h.max_mismatch);
    }

    #[test]
    fn solve_hem_two_bus_closed_form() {
        let net = net2();
        let dir = LoadingDirection::proportional(net.case());
        for lam in [0.0, 1.0, 2.0, 3.0] {
            let h = solve_hem(&net, &dir, lam, 30, 1e-8).unwrap();
            let p: f64 = 1.0 + lam;
            let v = ((1.0 + (1.0 - 0.04 * p * p).sqrt()) / 2.0).sqrt();
            assert!((h.state.v[1].norm() - v).abs() <= 1e-8);
        }
    }
}
