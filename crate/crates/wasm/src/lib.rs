//! wasm-bindgen entry points for the static demo page. Each returns a JSON
//! string; the plain `*_json` functions are the same calls for native use.

use gaplm_core::screening::pearson;
use gaplm_core::sim::{self, replication_rng, Example, SimConfig};
use gaplm_core::{dcorr_sq, SplineBasis};
use serde_json::json;
use wasm_bindgen::prelude::*;

pub const MAX_DEMO_N: usize = 2000;

/// Full clamped B-spline basis on [0, 1] with equidistant interior knots,
/// sampled at `points` grid values.
pub fn basis_curves_json(degree: usize, n_interior: usize, points: usize) -> Result<String, String> {
    if !(2..=5000).contains(&points) {
        return Err("points must lie in 2..=5000".into());
    }
    if n_interior > 50 {
        return Err("at most 50 interior knots".into());
    }
    let knots: Vec<f64> = (1..=n_interior).map(|i| i as f64 / (n_interior + 1) as f64).collect();
    let basis = SplineBasis::new(degree, knots.clone(), (0.0, 1.0)).map_err(|e| e.to_string())?;
    let xs: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| basis.eval_full(x)).collect();
    let curves: Vec<Vec<f64>> = (0..basis.full_dim()).map(|k| rows.iter().map(|r| r[k]).collect()).collect();
    let max_dev = rows.iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    Ok(json!({ "x": xs, "curves": curves, "interior_knots": knots, "partition_of_unity_error": max_dev }).to_string())
}

/// One simulated replication of the logistic five-covariate example with
/// AIC, BIC, SAIC, SBIC, CV-5 and CV-10.
pub fn example1_replication_json(n: usize, rho: f64, seed: u64, rep: usize) -> Result<String, String> {
    if n > 400 {
        return Err("n is capped at 400 in the browser".into());
    }
    let mut cfg = SimConfig::standard(Example::Ex1, n, rho, 1, seed);
    cfg.methods = sim::standard_methods(&[5, 10]);
    cfg.validate().map_err(|e| e.to_string())?;
    let r = sim::run_replication(&cfg, rep).map_err(|e| e.to_string())?;
    let methods: Vec<_> = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let mut top: Vec<(usize, f64)> =
                r.weights[k].iter().copied().enumerate().filter(|(_, w)| *w > 1e-6).collect();
            top.sort_by(|a, b| b.1.total_cmp(&a.1));
            top.truncate(5);
            json!({
                "method": m.to_string(),
                "loss": r.losses[k],
                "w_cor": r.w_cor[k],
                "importance": r.vima[k],
                "top_weights": top.iter().map(|(i, w)| json!({ "candidate": i, "weight": w })).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(json!({ "n": n, "rho": rho, "seed": seed, "rep": rep, "knots": cfg.knot_rule.knots(n), "methods": methods })
        .to_string())
}

/// Y = 1 + 3X₁² + X₂ + ε: Pearson and squared distance correlation of
/// (X₁, Y), with the sample for plotting.
pub fn dc_demo_json(n: usize, seed: u64) -> Result<String, String> {
    if !(10..=MAX_DEMO_N).contains(&n) {
        return Err(format!("n must lie in 10..={MAX_DEMO_N}"));
    }
    let g = sim::gen_dc_demo(n, &mut replication_rng(seed, 0)).map_err(|e| e.to_string())?;
    let x1 = g.data.column(0);
    let r = pearson(x1, &g.data.y).map_err(|e| e.to_string())?;
    let d = dcorr_sq(x1, &g.data.y).map_err(|e| e.to_string())?;
    Ok(json!({ "n": n, "pearson": r, "dcorr2": d, "x": x1, "y": g.data.y }).to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn basis_curves(degree: usize, n_interior: usize, points: usize) -> Result<String, JsError> {
    js(basis_curves_json(degree, n_interior, points))
}

#[wasm_bindgen]
pub fn example1_replication(n: usize, rho: f64, seed: u64, rep: usize) -> Result<String, JsError> {
    js(example1_replication_json(n, rho, seed, rep))
}

#[wasm_bindgen]
pub fn dc_demo(n: usize, seed: u64) -> Result<String, JsError> {
    js(dc_demo_json(n, seed))
}
