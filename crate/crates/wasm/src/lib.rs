//! JSON-string adapters over the drivers for the browser demo page.
//!
//! Every function here is plain Rust, testable on any host; the
//! `wasm-bindgen` exports at the bottom are a thin layer compiled only for
//! `wasm32`. Inputs are the same configuration shape the CLI accepts (as
//! JSON instead of TOML); outputs are column-oriented so the page can hand
//! them straight to a plot.

use std::collections::BTreeMap;

use bundlemech::driver::{
    compare_detail, integrate_reduced, run_check, trajectory_columns, PartialConfig, SimConfig,
    Trajectory,
};
use bundlemech::models::{builtin_catalog, instantiate, ModelParams};
use bundlemech::CoreError;

fn parse_config(config: &str) -> Result<SimConfig, CoreError> {
    let partial: PartialConfig =
        serde_json::from_str(config).map_err(|e| CoreError::Config(format!("config json: {e}")))?;
    let mut cfg = partial.resolve()?;
    cfg.output = None; // no filesystem in the browser
    Ok(cfg)
}

fn err_str(e: CoreError) -> String {
    e.to_string()
}

/// Column view of a trajectory: `{"t": [...], "x1": [...], ..., "E": [...]}`.
fn columns_value(traj: &Trajectory) -> serde_json::Value {
    let names = trajectory_columns(traj.dims);
    let mut map = serde_json::Map::new();
    for (j, name) in names.iter().enumerate() {
        let series: Vec<f64> = (0..traj.times.len()).map(|k| traj.row(k)[j]).collect();
        map.insert(name.clone(), serde_json::json!(series));
    }
    serde_json::Value::Object(map)
}

/// The built-in models with their parameters, dimensions, and default
/// initial data, for building the demo form.
pub fn catalog_json() -> String {
    let mut entries = Vec::new();
    for (name, params) in builtin_catalog() {
        let model = instantiate(name, &ModelParams::empty()).expect("built-in instantiates");
        use bundlemech::model::Model;
        let d = model.dims();
        let (x, f, xdot, fdot, p) = model.default_initial();
        let param_entries: Vec<serde_json::Value> = params
            .iter()
            .map(|p| {
                serde_json::json!({
                    "name": p.name,
                    "default": p.default,
                    "min_exclusive": p.min_exclusive,
                    "doc": p.doc,
                })
            })
            .collect();
        entries.push(serde_json::json!({
            "name": name,
            "dims": { "n_x": d.n_x, "n_v": d.n_v, "n_g": d.n_g, "n_p": d.n_p },
            "params": param_entries,
            "initial": { "x": x, "f": f, "xdot": xdot, "fdot": fdot, "p": p },
            "columns": trajectory_columns(d),
        }));
    }
    serde_json::Value::Array(entries).to_string()
}

/// Integrates the reduced equations; returns `{model, columns, truncated}`.
pub fn simulate_json(config: &str) -> Result<String, String> {
    let cfg = parse_config(config).map_err(err_str)?;
    let model = instantiate(&cfg.model, &cfg.params).map_err(err_str)?;
    let initial = cfg.initial_state(&model).map_err(err_str)?;
    let traj = integrate_reduced(&model, &initial, &cfg).map_err(err_str)?;
    Ok(serde_json::json!({
        "model": traj.model,
        "columns": columns_value(&traj),
        "truncated": traj.truncated,
    })
    .to_string())
}

/// Reduced-versus-full cross-validation; returns the report plus both
/// series for overlay plotting.
pub fn compare_json(config: &str) -> Result<String, String> {
    let cfg = parse_config(config).map_err(err_str)?;
    let (report, reduced, projected) = compare_detail(&cfg).map_err(err_str)?;
    Ok(serde_json::json!({
        "report": report,
        "reduced": columns_value(&reduced),
        "projected": columns_value(&projected),
    })
    .to_string())
}

/// Verification sweep; returns the check report as JSON.
pub fn check_json(config: &str) -> Result<String, String> {
    let cfg = parse_config(config).map_err(err_str)?;
    let report = run_check(&cfg).map_err(err_str)?;
    Ok(report.to_json())
}

// A keyed convenience for the page: run all three verdict lines at once on
// a small sample so the landing view has something to show.
pub fn quick_verdicts(model: &str) -> Result<String, String> {
    let cfg = parse_config(&format!(
        r#"{{"model": "{model}", "samples": 5, "t_final": 0.5, "dt": 0.005}}"#
    ))
    .map_err(err_str)?;
    let check = run_check(&cfg).map_err(err_str)?;
    let (comparison, _, _) = compare_detail(&cfg).map_err(err_str)?;
    let mut out = BTreeMap::new();
    out.insert("check_pass", serde_json::json!(check.pass));
    out.insert("compare_pass", serde_json::json!(comparison.pass));
    out.insert("compare_max_dx", serde_json::json!(comparison.max_dx));
    Ok(serde_json::json!(out).to_string())
}

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    #[wasm_bindgen]
    pub fn catalog() -> String {
        crate::catalog_json()
    }

    #[wasm_bindgen]
    pub fn simulate(config: &str) -> Result<String, JsValue> {
        crate::simulate_json(config).map_err(|e| JsValue::from_str(&e))
    }

    #[wasm_bindgen]
    pub fn compare(config: &str) -> Result<String, JsValue> {
        crate::compare_json(config).map_err(|e| JsValue::from_str(&e))
    }

    #[wasm_bindgen]
    pub fn check(config: &str) -> Result<String, JsValue> {
        crate::check_json(config).map_err(|e| JsValue::from_str(&e))
    }

    #[wasm_bindgen]
    pub fn quick_verdicts(model: &str) -> Result<String, JsValue> {
        crate::quick_verdicts(model).map_err(|e| JsValue::from_str(&e))
    }
}
