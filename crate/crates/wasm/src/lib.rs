//! Browser bindings. Every exported function wraps a plain Rust function
//! of the same name in [`demo`], which the native tests exercise.

use wasm_bindgen::prelude::*;

pub mod demo;

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// Row-major normalized signed distance in `[-1, 1]` for a JSON box list.
#[wasm_bindgen]
pub fn distance_map(boxes_json: &str, height: usize, width: usize) -> Result<Vec<f32>, JsError> {
    demo::distance_map(boxes_json, height, width).map_err(js)
}

/// Row-major class map (0 outside every box).
#[wasm_bindgen]
pub fn class_map(boxes_json: &str, height: usize, width: usize) -> Result<Vec<u8>, JsError> {
    demo::class_map(boxes_json, height, width).map_err(js)
}

/// Cumulative noise level `abar_t` for `t = 1..=num_steps`.
#[wasm_bindgen]
pub fn alpha_bar_curve(num_steps: usize, beta_start: f64, beta_end: f64) -> Result<Vec<f64>, JsError> {
    demo::alpha_bar_curve(num_steps, beta_start, beta_end).map_err(js)
}

/// Procedural toy sample as RGBA pixels followed by its class mask.
#[wasm_bindgen]
pub fn toy_sample(seed: u64, height: usize, width: usize) -> Result<ToySample, JsError> {
    demo::toy(seed, height, width).map_err(js)
}

/// Closed-form `x_t` of an RGBA image, returned as RGBA.
#[wasm_bindgen]
pub fn forward_noise(rgba: &[u8], t: usize, num_steps: usize, beta_start: f64, beta_end: f64, seed: u64) -> Result<Vec<u8>, JsError> {
    demo::forward_noise(rgba, t, num_steps, beta_start, beta_end, seed).map_err(js)
}

/// SAE/EBR report (JSON) of a class mask against a JSON box list.
#[wasm_bindgen]
pub fn alignment(mask: &[u8], height: usize, width: usize, boxes_json: &str, num_classes: usize) -> Result<String, JsError> {
    demo::alignment(mask, height, width, boxes_json, num_classes).map_err(js)
}

#[wasm_bindgen]
pub struct ToySample {
    rgba: Vec<u8>,
    mask: Vec<u8>,
    boxes: String,
}

#[wasm_bindgen]
impl ToySample {
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mask(&self) -> Vec<u8> {
        self.mask.clone()
    }

    /// The generating boxes as JSON.
    #[wasm_bindgen(getter)]
    pub fn boxes(&self) -> String {
        self.boxes.clone()
    }
}

impl ToySample {
    pub(crate) fn new(rgba: Vec<u8>, mask: Vec<u8>, boxes: String) -> Self {
        Self { rgba, mask, boxes }
    }
}
