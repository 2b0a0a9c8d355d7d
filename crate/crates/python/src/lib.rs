use pyo3::prelude::*;

#[pymodule]
fn ssep_lab(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
