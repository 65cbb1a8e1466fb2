use pyo3::ffi::c_str;
use crossdiff::crossdiff;
use pyo3::prelude::*;

fn with_module(code: &std::ffi::CStr) {
    pyo3::append_to_inittab!(crossdiff);
    Python::initialize();
    Python::attach(|py| {
        let m = py.import("crossdiff").unwrap();
        let globals = pyo3::types::PyDict::new(py);
        globals.set_item("cd", m).unwrap();
        py.run(code, Some(&globals), None).unwrap();
    });
}

#[test]
fn module_functions_round_trip() {
    with_module(c_str!(
        r#"
import math, tempfile
m = cd.Model({"diffusion": "skt", "d": "1, 1", "alpha": "0.5, 0.1, 0.1, 0.5"})
assert m.m == 2 and m.family == "skt"
a = m.diffusion_tensor([1.0, 2.0], 1)
assert len(a) == 4 and abs(a[0] - 2.2) < 1e-12 and abs(a[3] - 3.1) < 1e-12, a
try:
    m.reaction([1.0])
    raise AssertionError("accepted a short state")
except ValueError:
    pass

u, du, ut = cd.js_state([0.1, 0.0, 0.0], 0.5, 1.0)
assert abs(u[0] - 0.1 / math.sqrt(0.5 + 0.01)) < 1e-12

assert cd.blowup_horizon(1.0, 2.0, 2.0) > 0.0
k = cd.kappa_diagonal([3.0, 3.0], count=2000, seed=1)
assert 0.0 < k < 1.0, k

lam, phi = cd.principal_eigenvalue([1.0], [200], [1.0] * 200)
assert abs(lam - math.pi ** 2) / math.pi ** 2 < 1e-4
assert min(phi) > 0.0

with tempfile.TemporaryDirectory() as d:
    r = cd.run_scenario("""
[scenario]
name = tiny
[grid]
extent = 1
cells = 16
bc = dirichlet
[model]
diffusion = identity
[initial]
kind = trig
modes = 1
amplitudes = 1
basis = sin
[run]
t_end = 0.01
""", d)
    assert r.exit_code == 0, r.summary
    assert "termination" in r.summary
    assert r.artifacts
"#
    ));
}
