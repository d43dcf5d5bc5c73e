//! Python bindings. Protocols and reports cross the boundary as JSON text.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use locclab::linalg::{Tolerance, C64};
use locclab::protocol::LoccProtocol;
use locclab::states::{ControlledUnitary, PureState};

fn err(e: locclab::Error) -> PyErr {
    match e {
        locclab::Error::NotVerified(_) | locclab::Error::Reduction { .. } | locclab::Error::InvariantViolation(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn tolerance(eps: Option<f64>) -> PyResult<Tolerance> {
    match eps {
        Some(e) => Tolerance::new(e, e).map_err(err),
        None => Ok(Tolerance::default()),
    }
}

/// Reference three-turn protocol for U_theta, as protocol JSON.
#[pyfunction]
fn eisert(theta: f64) -> PyResult<String> {
    build(theta).to_json().map_err(err)
}

fn build(theta: f64) -> LoccProtocol {
    locclab::reference::build_eisert(&ControlledUnitary::canonical(theta))
}

/// Verification report (JSON) of a protocol against U_theta.
#[pyfunction]
#[pyo3(signature = (protocol_json, theta, eps=None))]
fn verify(protocol_json: &str, theta: f64, eps: Option<f64>) -> PyResult<String> {
    let p = LoccProtocol::from_json(protocol_json).map_err(err)?;
    let r = locclab::verifier::verify(&p, &ControlledUnitary::canonical(theta), tolerance(eps)?).map_err(err)?;
    json(&r)
}

/// Three-turn protocol JSON and the step trace JSON.
#[pyfunction]
#[pyo3(signature = (protocol_json, theta, eps=None))]
fn reduce(protocol_json: &str, theta: f64, eps: Option<f64>) -> PyResult<(String, String)> {
    let p = LoccProtocol::from_json(protocol_json).map_err(err)?;
    let r = locclab::reducer::reduce_to_three_turns(&p, &ControlledUnitary::canonical(theta), tolerance(eps)?)
        .map_err(err)?;
    Ok((r.protocol.to_json().map_err(err)?, json(&r.steps)?))
}

/// Entangling power of U_theta in ebits.
#[pyfunction]
#[pyo3(signature = (theta, budget=20_000))]
fn entangling_power(theta: f64, budget: usize) -> f64 {
    locclab::reference::entangling_power(&ControlledUnitary::canonical(theta), budget).ebits
}

/// Entanglement entropy (ebits) of a pure state given as (re, im) pairs.
#[pyfunction]
fn entropy(amplitudes: Vec<(f64, f64)>, dims: (usize, usize)) -> PyResult<f64> {
    let psi = PureState::new(amplitudes.into_iter().map(|(re, im)| C64::new(re, im)).collect(), dims).map_err(err)?;
    locclab::states::entanglement_entropy(&psi).map_err(err)
}

/// Search result JSON.
#[pyfunction]
#[pyo3(signature = (theta, rank=2, restarts=8, budget=20_000, seed=0))]
fn optimize(theta: f64, rank: usize, restarts: usize, budget: usize, seed: u64) -> PyResult<String> {
    json(&locclab::search::optimize(theta, rank, restarts, budget, seed).map_err(err)?)
}

#[pymodule]
fn locclab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(eisert, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(reduce, m)?)?;
    m.add_function(wrap_pyfunction!(entangling_power, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    Ok(())
}
