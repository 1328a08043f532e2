//! Browser bindings for a few interactive views over `autoais-audit`.
//!
//! Every export takes plain numbers/strings and returns a JSON string. Failures come back as
//! `{"error": "..."}` so the page never has to catch exceptions.

use std::num::NonZeroUsize;

use autoais_audit::chunking::{chunk_document, r2_diff};
use autoais_audit::overlap::rouge2_precision;
use autoais_audit::quantify::adjusted_count;
use autoais_audit::rank::{two_prop_ztest_with, Variance};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct ChunkRow {
    index: usize,
    words: usize,
    oversized: bool,
    precision: f64,
    text: String,
}

#[derive(Serialize)]
struct ChunkView {
    full_precision: f64,
    best_chunk: f64,
    r2_diff: f64,
    degenerate_claim: bool,
    chunks: Vec<ChunkRow>,
}

fn to_json<T: Serialize>(value: &Result<T, String>) -> String {
    match value {
        Ok(v) => serde_json::to_string(v).expect("plain data serializes"),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

pub fn chunk_view(claim: &str, document: &str, limit: u32) -> Result<impl Serialize, String> {
    let limit = NonZeroUsize::new(limit as usize).ok_or("chunk limit must be at least 1")?;
    let plan = chunk_document(document, limit);
    let diff = r2_diff(claim, document, &plan);
    let chunks = plan
        .chunks
        .iter()
        .enumerate()
        .map(|(index, c)| ChunkRow {
            index,
            words: c.words,
            oversized: c.oversized,
            precision: rouge2_precision(claim, &c.text).precision,
            text: c.text.clone(),
        })
        .collect();
    Ok(ChunkView {
        full_precision: diff.full,
        best_chunk: diff.best_chunk,
        r2_diff: diff.diff,
        degenerate_claim: rouge2_precision(claim, document).degenerate,
        chunks,
    })
}

/// Chunks `document` and scores `claim` against each chunk and the whole document.
#[wasm_bindgen(js_name = chunkView)]
pub fn chunk_view_json(claim: &str, document: &str, limit: u32) -> String {
    to_json(&chunk_view(claim, document, limit))
}

pub fn adjusted_count_view(p0: f64, recall0: f64, fallout0: f64) -> Result<impl Serialize, String> {
    for (name, v) in [("observed rate", p0), ("recall", recall0), ("fallout", fallout0)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("{name} must lie in [0, 1], got {v}"));
        }
    }
    let adjust = |p| adjusted_count(p, recall0, fallout0).map_err(|e| e.to_string());
    let curve = (0..=20)
        .map(|i| {
            let p = i as f64 / 20.0;
            adjust(p).map(|a| [p, a])
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(json!({
        "observed": p0,
        "adjusted": adjust(p0)?,
        "curve": curve,
    }))
}

/// Corrects an observed unattributable rate for the evaluator's recall and fallout.
#[wasm_bindgen(js_name = adjustedCount)]
pub fn adjusted_count_json(p0: f64, recall0: f64, fallout0: f64) -> String {
    to_json(&adjusted_count_view(p0, recall0, fallout0))
}

pub fn ztest_view(k1: u32, n1: u32, k2: u32, n2: u32, alpha: f64, pooled: bool) -> Result<impl Serialize, String> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let variance = if pooled { Variance::Pooled } else { Variance::Unpooled };
    let t = two_prop_ztest_with(k1.into(), n1.into(), k2.into(), n2.into(), variance).map_err(|e| e.to_string())?;
    let verdict = if t.p_value >= alpha {
        "tie"
    } else if t.z < 0.0 {
        "first has fewer errors"
    } else {
        "second has fewer errors"
    };
    Ok(json!({
        "rate1": k1 as f64 / n1 as f64,
        "rate2": k2 as f64 / n2 as f64,
        "z": t.z,
        "p_value": t.p_value,
        "significant": t.p_value < alpha,
        "verdict": verdict,
    }))
}

/// Two-proportion z-test between two systems' error counts.
#[wasm_bindgen(js_name = zTest)]
pub fn ztest_json(k1: u32, n1: u32, k2: u32, n2: u32, alpha: f64, pooled: bool) -> String {
    to_json(&ztest_view(k1, n1, k2, n2, alpha, pooled))
}
