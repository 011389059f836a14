use std::sync::Once;

use mshem::mshem;
use pyo3::prelude::*;
use pyo3::types::PyDict;

static REGISTER: Once = Once::new();

fn cases() -> String {
    format!("{}/../../cases", env!("CARGO_MANIFEST_DIR"))
}

fn run(code: &str) -> PyResult<()> {
    // the module has to be registered before the interpreter starts
    REGISTER.call_once(|| pyo3::append_to_inittab!(mshem));
    Python::attach(|py| {
        let m = py.import("mshem")?;
        let globals = PyDict::new(py);
        globals.set_item("mshem", m)?;
        globals.set_item("CASES", cases())?;
        let code = std::ffi::CString::new(code).unwrap();
        py.run(&code, Some(&globals), None)
    })
}

#[test]
fn two_bus_trace_through_python() {
    run(r#"
net = mshem.Network.from_file(CASES + "/case2.m")
assert net.bus_count == 2
curve = net.trace()
assert abs(curve.nose_lambda - 4.0) < 0.01, curve
v = abs(curve.query(2.0)[1])
assert abs(v**4 - v**2 + 0.01 * 9.0) < 1e-8
back = mshem.Curve.from_json(curve.to_json())
assert back.stages == curve.stages
"#)
    .unwrap();
}

#[test]
fn errors_map_to_exception_types() {
    run(r#"
try:
    mshem.Network.from_text("not a case")
    raise AssertionError("parsed garbage")
except mshem.InputError:
    pass
net = mshem.Network.from_file(CASES + "/case2.m")
try:
    net.solve(lambda_=10.0)
    raise AssertionError("solved beyond the nose")
except mshem.NumericalError:
    pass
"#)
    .unwrap();
}
