//! Property checks shared by the core `properties` test target and the
//! workspace acceptance run. Every check uses a fixed-seed runner so
//! failures reproduce.

// each test target uses a different subset
#![allow(dead_code)]

use std::sync::OnceLock;

use mshem_core::case_io::parse_case;
use mshem_core::hee::hee_correct;
use mshem_core::hem::{build_series, physical_germ, EmbeddingVariant, EvalMethod, LoadingSpan};
use mshem_core::pf::{LoadingDirection, Network, StateVector};
use mshem_core::series::{ComplexSeries, PadeApproximant};
use mshem_core::tracer::{curve_query, trace_pv, PVCurve, TracerConfig};
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub fn case_text(name: &str) -> String {
    let path = format!("{}/../../cases/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn network(name: &str) -> (Network, LoadingDirection) {
    let net = Network::new(parse_case(&case_text(name)).unwrap()).unwrap();
    let dir = LoadingDirection::proportional(net.case());
    (net, dir)
}

/// The 39-bus trace with default settings, computed once per process.
pub fn traced39() -> &'static (Network, LoadingDirection, PVCurve) {
    static CURVE: OnceLock<(Network, LoadingDirection, PVCurve)> = OnceLock::new();
    CURVE.get_or_init(|| {
        let (net, dir) = network("case39.m");
        let curve = trace_pv(&net, &dir, &TracerConfig::default()).unwrap();
        (net, dir, curve)
    })
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

pub fn series_reciprocal_identity() {
    let strategy = (complex(), prop::collection::vec(complex(), 1..12));
    runner(200)
        .run(&strategy, |(lead, tail)| {
            prop_assume!(lead.norm() > 0.2);
            let mut coeffs = vec![lead];
            coeffs.extend(tail);
            let a = ComplexSeries::new(coeffs);
            let n = a.len() - 1;
            let prod = a.convolve(&a.reciprocal(n).unwrap(), n);
            // growth of 1/a is bounded by (|tail| / |lead|)^k
            let bound = 1e-12 * (1.0 + 10.0 / lead.norm()).powi(n as i32 + 1);
            for k in 0..=n {
                let expect = if k == 0 { 1.0 } else { 0.0 };
                prop_assert!((prod.coeff(k) - expect).norm() <= bound, "order {}: {}", k, prod.coeff(k));
            }
            Ok(())
        })
        .unwrap();
}

pub fn convolution_commutes() {
    let strategy = (prop::collection::vec(complex(), 1..10), prop::collection::vec(complex(), 1..10));
    runner(200)
        .run(&strategy, |(a, b)| {
            let (a, b) = (ComplexSeries::new(a), ComplexSeries::new(b));
            let n = a.len().max(b.len());
            let ab = a.convolve(&b, n);
            let ba = b.convolve(&a, n);
            for k in 0..=n {
                prop_assert!((ab.coeff(k) - ba.coeff(k)).norm() <= 1e-12);
            }
            Ok(())
        })
        .unwrap();
}

pub fn pade_reproduces_rational_functions() {
    // f(s) = (1 + p s) / (1 - q s) has Taylor coefficients 1, p+q, (p+q) q, ...
    let strategy = (-1.0..1.0f64, 0.1..0.9f64, 0.0..0.95f64);
    runner(200)
        .run(&strategy, |(p, q, frac)| {
            prop_assume!((p + q).abs() > 1e-3);
            let mut coeffs = vec![Complex64::new(1.0, 0.0)];
            for k in 1..=10 {
                coeffs.push(Complex64::new((p + q) * q.powi(k - 1), 0.0));
            }
            let a = ComplexSeries::new(coeffs);
            let s = frac / q; // inside the radius of convergence
            let exact = (1.0 + p * s) / (1.0 - q * s);
            // [5/5] of a degree-1 rational is degenerate; the robust builder lowers the degrees
            let pade = PadeApproximant::robust(&a).unwrap();
            let approx = pade.eval(Complex64::new(s, 0.0)).unwrap();
            prop_assert!((approx.re - exact).abs() <= 1e-9 * exact.abs().max(1.0), "{} vs {}", approx, exact);
            prop_assert!(approx.im.abs() <= 1e-12);
            Ok(())
        })
        .unwrap();
}

fn perturbed(net: &Network, base: &StateVector, noise: &[f64]) -> StateVector {
    let real: Vec<f64> = net.state_to_real(base).iter().zip(noise.iter().cycle()).map(|(x, d)| x + d).collect();
    net.real_to_state(&real, base.v[net.slack()])
}

pub fn jacobian_matches_finite_differences() {
    let (net, _) = network("case39.m");
    let dim = net.dim();
    let flat = net.flat_start();
    let strategy = (prop::collection::vec(-0.1..0.1f64, 7..23), 0..dim);
    runner(24)
        .run(&strategy, |(noise, col)| {
            let x = perturbed(&net, &flat, &noise);
            let jac = net.jacobian(&x);
            let zero = LoadingDirection::zero(net.case());
            let real = net.state_to_real(&x);
            let h = 1e-6;
            let shift = |d: f64| {
                let mut r = real.clone();
                r[col] += d;
                net.residual(&net.real_to_state(&r, x.v[net.slack()]), &zero, 0.0)
            };
            let (fp, fm) = (shift(h), shift(-h));
            for r in 0..dim {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                let an = jac[r * dim + col];
                prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "J[{},{}] {} vs {}", r, col, an, fd);
            }
            Ok(())
        })
        .unwrap();
}

pub fn state_round_trip() {
    let (net, _) = network("case39.m");
    let flat = net.flat_start();
    runner(50)
        .run(&prop::collection::vec(-1.0..1.0f64, 1..40), |noise| {
            let x = perturbed(&net, &flat, &noise);
            let back = net.real_to_state(&net.state_to_real(&x), x.v[net.slack()]);
            prop_assert_eq!(back, x);
            Ok(())
        })
        .unwrap();
}

/// The physical germ carries zero injection, and the M3 series it anchors
/// satisfies the embedded equations at every small real `s`.
pub fn germ_and_series_satisfy_the_embedding() {
    let (net, dir) = network("case39.m");
    let germ = physical_germ(&net).unwrap();
    let span = LoadingSpan {
        anchor_lambda: 0.0,
        target_lambda: 0.0,
    };
    let series = build_series(&net, EmbeddingVariant::M3, &germ, &dir, span, 30).unwrap();
    assert!(series.injections_at(0.0).iter().all(|s| s.norm() == 0.0));
    let at_germ = series.mismatch_at(&net, &germ.state, 0.0);
    assert!(at_germ <= 1e-12, "germ mismatch {at_germ}");
    runner(40)
        .run(&(0.0..0.3f64), |s| {
            let x = series.evaluate_real(s, EvalMethod::Direct).unwrap();
            let m = series.mismatch_at(&net, &x, s);
            prop_assert!(m <= 1e-10, "s = {}: {}", s, m);
            Ok(())
        })
        .unwrap();
}

/// Noise of up to 1e-3 on a solved point is removed by one order-20
/// error embedding at any loading up to 80% of the nose.
pub fn hee_restores_noisy_points() {
    let (net, dir, curve) = traced39();
    let strategy = (0.0..0.8f64, prop::collection::vec(-1e-3..1e-3f64, 5..31));
    runner(16)
        .run(&strategy, |(frac, noise)| {
            let lambda = frac * curve.nose_lambda;
            let exact = net.solve_newton(&net.flat_start(), dir, lambda, 1e-12, 30).unwrap().state;
            let mut noisy = perturbed(net, &exact, &noise);
            noisy.v[net.slack()] = exact.v[net.slack()];
            let c = hee_correct(net, &noisy, dir, lambda, 20, 1e-10).unwrap();
            prop_assert!(c.solution.max_mismatch <= 1e-10, "lambda {}: {}", lambda, c.solution.max_mismatch);
            prop_assert_eq!(c.factorizations, 1);
            Ok(())
        })
        .unwrap();
}

/// Every loading on the traced curve evaluates to a point within the
/// predictor tolerance.
pub fn curve_queries_stay_accurate() {
    let (net, dir, curve) = traced39();
    runner(100)
        .run(&(0.0..=1.0f64), |frac| {
            let lambda = frac * curve.nose_lambda;
            let x = curve_query(curve, lambda).unwrap();
            let m = net.max_mismatch(&x, dir, lambda);
            prop_assert!(m <= 1e-8, "lambda {}: {}", lambda, m);
            Ok(())
        })
        .unwrap();
}

/// The curve is continuous across stage boundaries: both neighbouring stages
/// agree at the boundary, and the gap across it closes in proportion to the
/// distance from it.
pub fn curve_is_continuous_at_stage_boundaries() {
    let (_, _, curve) = traced39();
    for pair in curve.stages.windows(2) {
        let b = pair[0].lambda_end;
        let left = pair[0].state_at(b, curve.eval).unwrap();
        let right = pair[1].state_at(b, curve.eval).unwrap();
        assert!(left.max_abs_diff(&right) <= 1e-12, "jump at {b}");
        let gap = |eps: f64| {
            let below = pair[0].state_at(b - eps, curve.eval).unwrap();
            let above = pair[1].state_at(b + eps, curve.eval).unwrap();
            below.max_abs_diff(&above)
        };
        let (wide, narrow) = (gap(1e-7 * b), gap(1e-8 * b));
        assert!(narrow <= 0.2 * wide, "gap near {b} does not close: {wide} then {narrow}");
    }
}

/// Traces of the two-bus system satisfy the closed form
/// `V^4 - V^2 + (X P)^2 = 0` with `X = 0.1` at every loading.
pub fn two_bus_curve_matches_closed_form() {
    let (net, dir) = network("case2.m");
    let curve = trace_pv(&net, &dir, &TracerConfig::default()).unwrap();
    runner(100)
        .run(&(0.0..=1.0f64), |frac| {
            let lambda = frac * curve.nose_lambda;
            let x = curve_query(&curve, lambda).unwrap();
            let v = x.v[1].norm();
            let p = 1.0 + lambda;
            prop_assert!((v.powi(4) - v * v + 0.01 * p * p).abs() <= 1e-8);
            Ok(())
        })
        .unwrap();
}

pub fn trace_is_deterministic() {
    let (net, dir, curve) = traced39();
    let again = trace_pv(net, dir, &TracerConfig::default()).unwrap();
    assert_eq!(serde_json::to_string(curve).unwrap(), serde_json::to_string(&again).unwrap());
}

pub type Check = (&'static str, fn());

pub const ALL: &[Check] = &[
    ("series_reciprocal_identity", series_reciprocal_identity),
    ("convolution_commutes", convolution_commutes),
    ("pade_reproduces_rational_functions", pade_reproduces_rational_functions),
    ("jacobian_matches_finite_differences", jacobian_matches_finite_differences),
    ("state_round_trip", state_round_trip),
    ("germ_and_series_satisfy_the_embedding", germ_and_series_satisfy_the_embedding),
    ("hee_restores_noisy_points", hee_restores_noisy_points),
    ("curve_queries_stay_accurate", curve_queries_stay_accurate),
    ("curve_is_continuous_at_stage_boundaries", curve_is_continuous_at_stage_boundaries),
    ("two_bus_curve_matches_closed_form", two_bus_curve_matches_closed_form),
    ("trace_is_deterministic", trace_is_deterministic),
];
