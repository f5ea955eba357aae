//! Python bindings for the regime detection and allocation library.

use pyo3::prelude::*;

#[pymodule]
fn regimelab_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
