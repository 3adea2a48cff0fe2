//! Python bindings for the gnnx benchmark engine.

use pyo3::prelude::*;

#[pymodule]
fn gnnx_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
