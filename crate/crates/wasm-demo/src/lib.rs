//! Browser bindings: each export takes plain numbers and a weight string and
//! returns a JSON document for the page to draw.
//!
//! Weights are either a preset (`mb`, `be`, `fd`, `pc:s`, `mh:s`) or a comma
//! separated list of rationals such as `1,1,1/2,1/6`.

use std::str::FromStr;

use occupancy::kernel::{convolution_power, format_rational, parse_rational, to_f64, Preset};
use occupancy::maxent::check_scale_consistency;
use occupancy::models::realize;
use occupancy::structure::deconvolve;
use occupancy::transforms::merge;
use occupancy::{MaSpec, OccupancyModel, WeightFunction};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

pub fn parse_weights(text: &str, x_max: usize) -> Result<WeightFunction, String> {
    let text = text.trim();
    if let Ok(preset) = Preset::from_str(text) {
        return Ok(preset.weights(x_max.max(1)));
    }
    let values = text
        .split(',')
        .map(|v| parse_rational(v.trim()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    WeightFunction::new(values).map_err(|e| e.to_string())
}

fn bars(model: &OccupancyModel) -> Value {
    Value::Array(
        model
            .iter()
            .map(|(x, p)| {
                json!({
                    "label": x.to_string(),
                    "exact": format_rational(p),
                    "value": to_f64(p),
                })
            })
            .collect(),
    )
}

/// Fine model on `n*s` cells, its merge onto `n` cells, and the merged weights.
pub fn merge_explorer_json(weights: &str, n: usize, s: usize, r: usize) -> Result<String, String> {
    if n == 0 || s == 0 {
        return Err("n and s must be positive".into());
    }
    let a = parse_weights(weights, r)?;
    let spec = MaSpec::new(a, n * s, r).map_err(|e| e.to_string())?;
    let fine = realize(&spec).map_err(|e| e.to_string())?;
    let coarse = merge(&fine, s).map_err(|e| e.to_string())?;
    let a_prime = convolution_power(spec.a(), s, r.max(1)).map_err(|e| e.to_string())?;
    Ok(json!({
        "fine_support": fine.support_len(),
        "merged": bars(&coarse),
        "merged_weights": a_prime.values().iter().map(format_rational).collect::<Vec<_>>(),
    })
    .to_string())
}

/// Attempts an `s`-th convolution root of the weights on `0..=x_max`.
pub fn deconvolve_json(weights: &str, x_max: usize, s: usize) -> Result<String, String> {
    let a = parse_weights(weights, x_max)?;
    let result = deconvolve(&a, s).map_err(|e| e.to_string())?;
    let factor = result.factor.as_ref().map(|f| {
        f.values()
            .iter()
            .map(|v| json!({ "exact": format_rational(v), "value": to_f64(v) }))
            .collect::<Vec<_>>()
    });
    Ok(json!({
        "status": result.status.as_str(),
        "input": a.values().iter().map(|v| json!({ "exact": format_rational(v), "value": to_f64(v) })).collect::<Vec<_>>(),
        "factor": factor,
        "certificate": result.certificate.map(|c| json!({ "x": c.x, "value": format_rational(&c.value) })),
    })
    .to_string())
}

/// MaxEnt at `n1` cells pushed forward to `n2`, against the coarse solution.
pub fn scale_consistency_json(weights: &str, n1: usize, n2: usize, r: usize, ladder: bool) -> Result<String, String> {
    let a = parse_weights(weights, r)?;
    let report = if ladder {
        check_scale_consistency(&|s| convolution_power(&a, s, r.max(1)), n1, n2, r, None)
    } else {
        check_scale_consistency(&|_| Ok(a.clone()), n1, n2, r, None)
    }
    .map_err(|e| e.to_string())?;
    let coarse = report.coarse.pmf_map();
    let rows: Vec<Value> = report
        .pushforward
        .iter()
        .map(|(x, p)| {
            json!({
                "label": x.to_string(),
                "pushforward": p,
                "coarse": coarse.get(x).copied().unwrap_or(0.0),
            })
        })
        .collect();
    Ok(json!({
        "consistent": report.consistent,
        "gap": report.gap,
        "rows": rows,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn merge_explorer(weights: &str, n: usize, s: usize, r: usize) -> Result<String, JsValue> {
    merge_explorer_json(weights, n, s, r).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn deconvolve_weights(weights: &str, x_max: usize, s: usize) -> Result<String, JsValue> {
    deconvolve_json(weights, x_max, s).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn scale_consistency(weights: &str, n1: usize, n2: usize, r: usize, ladder: bool) -> Result<String, JsValue> {
    scale_consistency_json(weights, n1, n2, r, ladder).map_err(|e| JsValue::from_str(&e))
}
