//! WebAssembly bindings for the browser demo. The logic lives in [`demo`]
//! as plain Rust so it can be tested natively; the exported wrappers only
//! convert errors.

use wasm_bindgen::prelude::*;

use rectiscope::WeightedCloud;

pub mod demo;

/// A generated planar cloud kept on the Wasm side between calls.
#[wasm_bindgen]
pub struct Session {
    cloud: WeightedCloud,
}

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new(kind: &str, count: usize, param: f64, seed: u64) -> Result<Session, JsError> {
        let cloud = demo::generate_cloud(kind, count, param, seed).map_err(|e| JsError::new(&e))?;
        Ok(Session { cloud })
    }

    /// Interleaved `x, y` coordinates.
    pub fn coords(&self) -> Vec<f64> {
        self.cloud.coords().to_vec()
    }

    #[wasm_bindgen(js_name = pointCount)]
    pub fn point_count(&self) -> usize {
        self.cloud.len()
    }

    #[wasm_bindgen(js_name = resolutionFloor)]
    pub fn resolution_floor(&self) -> f64 {
        self.cloud.resolution_floor()
    }

    pub fn nearest(&self, x: f64, y: f64) -> usize {
        demo::nearest_index(&self.cloud, [x, y])
    }

    /// JSON form of [`demo::ProfileView`].
    pub fn profile(
        &self,
        index: usize,
        r0: f64,
        rho: f64,
        scales: usize,
        alpha: f64,
        lambda: f64,
    ) -> Result<String, JsError> {
        let view = demo::profile_view(&self.cloud, index, &demo::ProfileRequest { r0, rho, scales, alpha, lambda })
            .map_err(|e| JsError::new(&e))?;
        serde_json::to_string(&view).map_err(|e| JsError::new(&e.to_string()))
    }
}

/// Row-major membership raster of a region through the origin, top row
/// first: 1 inside, 0 outside.
#[wasm_bindgen(js_name = regionMask)]
pub fn region_mask(kind: &str, angle: f64, lambda: f64, alpha: f64, slope: f64, size: usize, extent: f64) -> Result<Vec<u8>, JsError> {
    let shape = demo::RegionShape { angle, lambda, alpha, slope };
    demo::region_mask(kind, &shape, size, extent).map_err(|e| JsError::new(&e))
}
