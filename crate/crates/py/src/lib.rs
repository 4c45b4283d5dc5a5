//! Python bindings. Results cross the boundary as JSON strings or plain
//! lists so the module stays independent of the core's type layout.

use citycraft::layout::{average_class_error, decode_png, ClassRatios, LandClass, NUM_CLASSES};
use citycraft::pipeline::{derive_seed as stage_seed, Pipeline, PipelineConfig};
use citycraft::retrieval::{synthetic_catalog, SynthSpec};
use citycraft::scene::read_manifest;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ratios(v: Vec<f64>) -> PyResult<ClassRatios> {
    let arr: [f64; NUM_CLASSES] = v
        .try_into()
        .map_err(|v: Vec<f64>| value_err(format!("expected {NUM_CLASSES} ratios, got {}", v.len())))?;
    ClassRatios::new(arr).map_err(value_err)
}

/// Seed for a named stage of a run.
#[pyfunction]
fn derive_seed(seed: u64, stage: &str) -> u64 {
    stage_seed(seed, stage)
}

/// Class names in palette order.
#[pyfunction]
fn class_names() -> Vec<&'static str> {
    LandClass::ALL.iter().map(|c| c.name()).collect()
}

/// Class ratios of a layout PNG.
#[pyfunction]
#[pyo3(signature = (path, meters_per_pixel = 0.5))]
fn layout_ratios(path: &str, meters_per_pixel: f64) -> PyResult<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    let layout = decode_png(&bytes, meters_per_pixel).map_err(value_err)?;
    Ok(layout.ratios().as_array().to_vec())
}

/// Per-class average class error in percent over paired target/achieved ratios.
#[pyfunction]
fn ace(targets: Vec<Vec<f64>>, achieved: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let t = targets.into_iter().map(ratios).collect::<PyResult<Vec<_>>>()?;
    let a = achieved.into_iter().map(ratios).collect::<PyResult<Vec<_>>>()?;
    Ok(average_class_error(&t, &a).map_err(value_err)?.to_vec())
}

/// Run every stage for a TOML config; returns the run report as JSON.
#[pyfunction]
fn run_all(config_toml: &str) -> PyResult<String> {
    let config = PipelineConfig::from_toml(config_toml).map_err(value_err)?;
    let report = Pipeline::new(config)
        .and_then(|p| p.run_all())
        .map_err(|e| PyErr::new::<PyValueError, _>(format!("[{}] {e}", e.family())))?;
    serde_json::to_string(&report).map_err(value_err)
}

/// Validate a manifest file and return it re-serialized as JSON.
#[pyfunction]
fn load_manifest(path: &str) -> PyResult<String> {
    let bytes = std::fs::read(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    let m = read_manifest(&bytes).map_err(value_err)?;
    serde_json::to_string(&m).map_err(value_err)
}

/// Write a seeded synthetic catalog into `dir`; returns the catalog.json path.
#[pyfunction]
#[pyo3(signature = (dir, assets = 200, seed = 0))]
fn synth_catalog(dir: &str, assets: usize, seed: u64) -> PyResult<String> {
    let c = synthetic_catalog(&SynthSpec::new(assets, seed));
    let path = c.save(std::path::Path::new(dir)).map_err(value_err)?;
    Ok(path.display().to_string())
}

#[pymodule]
fn citycraft_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(class_names, m)?)?;
    m.add_function(wrap_pyfunction!(layout_ratios, m)?)?;
    m.add_function(wrap_pyfunction!(ace, m)?)?;
    m.add_function(wrap_pyfunction!(run_all, m)?)?;
    m.add_function(wrap_pyfunction!(load_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(synth_catalog, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_length_is_checked() {
        assert!(ratios(vec![1.0]).is_err());
        let r = ratios(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.as_array()[0], 1.0);
    }

    #[test]
    fn class_names_follow_palette_order() {
        assert_eq!(class_names().len(), NUM_CLASSES);
        assert_eq!(class_names()[0], LandClass::ALL[0].name());
    }
}
