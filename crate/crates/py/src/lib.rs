//! Python bindings.
//!
//! ```python
//! import mshem
//! net = mshem.Network.from_file("cases/case39.m")
//! curve = net.trace()
//! print(curve.nose_mw, curve.stages)
//! ```
//!
//! Input problems raise `mshem.InputError`; numerical failures raise
//! `mshem.NumericalError`. Voltages cross the boundary as lists of complex
//! numbers in bus order.

use mshem_core::case_io::parse_case;
use mshem_core::cpf::{trace_cpf, CpfConfig};
use mshem_core::hee::hee_correct;
use mshem_core::hem::solve_hem;
use mshem_core::pf::{LoadingDirection, Network, PowerFlowSolution, StateVector};
use mshem_core::report::{compare_curves, sample_lambdas};
use mshem_core::tracer::{curve_query, trace_pv, trace_single_hem, PVCurve, TracerConfig};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(mshem, InputError, PyException);
create_exception!(mshem, NumericalError, PyException);

fn py_err(e: mshem_core::Error) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else {
        InputError::new_err(e.to_string())
    }
}

/// A parsed case with its loading direction.
#[pyclass(name = "Network", module = "mshem", frozen)]
pub struct PyNetwork {
    net: Network,
    dir: LoadingDirection,
}

/// Power-flow operating point.
#[pyclass(name = "Solution", module = "mshem", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PySolution {
    pub lambda_: f64,
    pub v: Vec<Complex64>,
    pub q_gen: Vec<f64>,
    pub converged: bool,
    pub max_mismatch: f64,
    pub iterations: usize,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn v_mag(&self) -> Vec<f64> {
        self.v.iter().map(|v| v.norm()).collect()
    }

    #[getter]
    fn v_ang(&self) -> Vec<f64> {
        self.v.iter().map(|v| v.arg()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(lambda={}, converged={}, max_mismatch={:e})",
            self.lambda_, self.converged, self.max_mismatch
        )
    }
}

impl From<PowerFlowSolution> for PySolution {
    fn from(s: PowerFlowSolution) -> Self {
        Self {
            lambda_: s.lambda,
            v: s.state.v,
            q_gen: s.state.q_gen,
            converged: s.converged,
            max_mismatch: s.max_mismatch,
            iterations: s.iterations,
        }
    }
}

/// A traced P-V curve.
#[pyclass(name = "Curve", module = "mshem", frozen)]
pub struct PyCurve {
    curve: PVCurve,
}

#[pymethods]
impl PyCurve {
    #[getter]
    fn method(&self) -> &'static str {
        self.curve.method.label()
    }

    #[getter]
    fn nose_lambda(&self) -> f64 {
        self.curve.nose_lambda
    }

    #[getter]
    fn nose_mw(&self) -> f64 {
        self.curve.lambda_to_mw(self.curve.nose_lambda)
    }

    #[getter]
    fn nose(&self) -> PySolution {
        self.curve.nose.clone().into()
    }

    #[getter]
    fn stages(&self) -> usize {
        self.curve.stages.len()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.curve.converged
    }

    #[getter]
    fn counters<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = &self.curve.counters;
        let d = PyDict::new(py);
        for (k, v) in [
            ("stages", c.stages),
            ("series_builds", c.series_builds),
            ("step_probes", c.step_probes),
            ("hee_corrections", c.hee_corrections),
            ("factorizations", c.factorizations),
            ("back_substitutions", c.back_substitutions),
            ("step_halvings", c.step_halvings),
            ("cpf_steps", c.cpf_steps),
            ("rejected_steps", c.rejected_steps),
            ("corrector_iterations", c.corrector_iterations),
        ] {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    /// Loadings of the stored points (units of the loading parameter).
    fn lambdas(&self) -> Vec<f64> {
        self.curve.points.iter().map(|p| p.lambda).collect()
    }

    /// `(lambda, |V| per bus)` for every stored point.
    fn points(&self) -> Vec<(f64, Vec<f64>)> {
        self.curve
            .points
            .iter()
            .map(|p| (p.lambda, p.state.magnitudes()))
            .collect()
    }

    /// Bus voltages on the curve at `lambda_`.
    fn query(&self, lambda_: f64) -> PyResult<Vec<Complex64>> {
        curve_query(&self.curve, lambda_).map(|x| x.v).map_err(py_err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.curve).expect("curve is serializable")
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let mut curve: PVCurve =
            serde_json::from_str(text).map_err(|e| InputError::new_err(e.to_string()))?;
        curve.refresh();
        Ok(Self { curve })
    }

    fn __repr__(&self) -> String {
        format!(
            "Curve(method={}, nose_mw={:.3}, stages={}, points={})",
            self.method(),
            self.nose_mw(),
            self.stages(),
            self.curve.points.len()
        )
    }
}

impl PyNetwork {
    fn state(&self, v: Vec<Complex64>, q_gen: Vec<f64>) -> PyResult<StateVector> {
        if v.len() != self.net.bus_count() || q_gen.len() != self.net.pv_buses().len() {
            return Err(InputError::new_err(format!(
                "expected {} voltages and {} generator reactive outputs",
                self.net.bus_count(),
                self.net.pv_buses().len()
            )));
        }
        Ok(StateVector { v, q_gen })
    }
}

#[pymethods]
impl PyNetwork {
    /// Parse a MATPOWER-style or JSON case. `direction` is the JSON text of a
    /// direction file; omit it for proportional loading.
    #[staticmethod]
    #[pyo3(signature = (text, direction=None))]
    fn from_text(text: &str, direction: Option<&str>) -> PyResult<Self> {
        let net = Network::new(parse_case(text).map_err(py_err)?).map_err(py_err)?;
        let dir = match direction {
            Some(d) => LoadingDirection::from_json(net.case(), d).map_err(py_err)?,
            None => LoadingDirection::proportional(net.case()),
        };
        dir.check(net.case()).map_err(py_err)?;
        Ok(Self { net, dir })
    }

    #[staticmethod]
    #[pyo3(signature = (path, direction=None))]
    fn from_file(path: &str, direction: Option<&str>) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| InputError::new_err(format!("{path}: {e}")))?;
        Self::from_text(&text, direction)
    }

    #[getter]
    fn bus_ids(&self) -> Vec<usize> {
        self.net.case().buses.iter().map(|b| b.id).collect()
    }

    #[getter]
    fn bus_count(&self) -> usize {
        self.net.bus_count()
    }

    /// Position of the slack bus in bus order.
    #[getter]
    fn slack(&self) -> usize {
        self.net.slack()
    }

    #[getter]
    fn base_mva(&self) -> f64 {
        self.net.base_mva()
    }

    #[getter]
    fn mw_per_lambda(&self) -> f64 {
        self.dir.mw_per_lambda(self.net.case())
    }

    /// Power flow at `lambda_` with Newton-Raphson (`"newton"`) or a
    /// single-stage holomorphic embedding (`"hem"`).
    #[pyo3(signature = (lambda_=0.0, solver="newton", order=30, tol=1e-8))]
    fn solve(&self, lambda_: f64, solver: &str, order: usize, tol: f64) -> PyResult<PySolution> {
        let sol = match solver {
            "newton" => self.net.solve_newton(&self.net.flat_start(), &self.dir, lambda_, tol, 30),
            "hem" => solve_hem(&self.net, &self.dir, lambda_, order, tol),
            other => return Err(InputError::new_err(format!("unknown solver {other:?}"))),
        };
        sol.map(Into::into).map_err(py_err)
    }

    /// Largest per-unit mismatch of a state at `lambda_`.
    fn max_mismatch(&self, v: Vec<Complex64>, q_gen: Vec<f64>, lambda_: f64) -> PyResult<f64> {
        Ok(self.net.max_mismatch(&self.state(v, q_gen)?, &self.dir, lambda_))
    }

    /// Correct an approximate state with one error-embedding series.
    #[pyo3(signature = (v, q_gen, lambda_, order=20, tol=1e-10))]
    fn hee_correct(&self, v: Vec<Complex64>, q_gen: Vec<f64>, lambda_: f64, order: usize, tol: f64) -> PyResult<PySolution> {
        let x = self.state(v, q_gen)?;
        hee_correct(&self.net, &x, &self.dir, lambda_, order, tol)
            .map(|c| c.solution.into())
            .map_err(py_err)
    }

    /// Trace the P-V curve. `method` is `"mshem"`, `"cpf"` or `"hem-single"`.
    #[pyo3(signature = (method="mshem", tol_correct=1e-8, tol_predict=1e-8, min_step_mw=1.0, order=30))]
    fn trace(&self, method: &str, tol_correct: f64, tol_predict: f64, min_step_mw: f64, order: usize) -> PyResult<PyCurve> {
        let cfg = TracerConfig {
            tol_correct,
            tol_predict,
            correct_above: TracerConfig::default().correct_above.min(tol_correct),
            min_step_mw,
            series_order: order,
            ..TracerConfig::default()
        };
        let curve = match method {
            "mshem" => trace_pv(&self.net, &self.dir, &cfg),
            "cpf" => trace_cpf(
                &self.net,
                &self.dir,
                &CpfConfig {
                    tol: tol_correct,
                    ..CpfConfig::default()
                },
            ),
            "hem-single" => trace_pv(&self.net, &self.dir, &cfg)
                .and_then(|c| trace_single_hem(&self.net, &self.dir, order, c.nose_lambda, 101)),
            other => return Err(InputError::new_err(format!("unknown method {other:?}"))),
        };
        curve.map(|curve| PyCurve { curve }).map_err(py_err)
    }

    /// Largest |V| difference between two curves over `samples` loadings
    /// taken from the points of `b`.
    #[pyo3(signature = (a, b, samples=20))]
    fn compare(&self, a: &PyCurve, b: &PyCurve, samples: usize) -> PyResult<f64> {
        let top = a.curve.nose_lambda.min(b.curve.nose_lambda);
        let lambdas: Vec<f64> = sample_lambdas(&b.curve, samples)
            .into_iter()
            .filter(|l| *l <= top)
            .collect();
        compare_curves(&self.net, &self.dir, &a.curve, &b.curve, &lambdas, 1e-8)
            .map(|r| r.max_dv_pu)
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Network(buses={}, base_mva={})", self.net.bus_count(), self.net.base_mva())
    }
}

#[pymodule]
pub fn mshem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyCurve>()?;
    m.add("InputError", m.py().get_type::<InputError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    Ok(())
}
