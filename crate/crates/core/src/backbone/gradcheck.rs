//! Central finite-difference checks of the hand-written backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::layers::Tensor3;
use super::network::{BackboneConfig, BackboneParams, LabelMap};
use crate::error::Result;

/// Gradients smaller than this are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub step: f64,
    pub loss: f64,
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
}

impl GradcheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// The two-stage 8×8 network used by the default check.
pub fn small_config(seed: u64) -> BackboneConfig {
    BackboneConfig {
        input_size: (8, 8),
        in_channels: 1,
        num_classes: 3,
        stage_channels: vec![4, 6],
        kernel_size: 3,
        seed,
    }
}

/// Compare every parameter gradient of the weighted cross-entropy against
/// central differences in `f64`, on a random input and random labels.
pub fn gradcheck_network(config: &BackboneConfig, step: f64) -> Result<GradcheckReport> {
    let params = BackboneParams::<f64>::init(config)?;
    let mut params = params;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    // non-zero biases keep ReLUs away from exact ties
    for t in params.tensors.iter_mut().filter(|t| t.name.ends_with(".bias")) {
        t.data.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
    }
    let (h, w) = config.input_size;
    let input = Tensor3::from_vec(
        config.in_channels,
        h,
        w,
        (0..config.in_channels * h * w).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let target = LabelMap {
        width: w,
        height: h,
        labels: (0..h * w).map(|_| rng.random_range(0..config.num_classes) as u8).collect(),
    };
    let weights: Vec<f64> = (0..config.num_classes).map(|c| 0.5 + c as f64 * 0.75).collect();
    let (loss, grads) = params.loss_and_gradients(&input, &target, &weights)?;

    let mut tensors = Vec::new();
    let mut worst = 0f64;
    for ti in 0..params.tensors.len() {
        let mut max_err = 0f64;
        for j in 0..params.tensors[ti].data.len() {
            let orig = params.tensors[ti].data[j];
            params.tensors[ti].data[j] = orig + step;
            let plus = params.loss_and_gradients(&input, &target, &weights)?.0;
            params.tensors[ti].data[j] = orig - step;
            let minus = params.loss_and_gradients(&input, &target, &weights)?.0;
            params.tensors[ti].data[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            max_err = max_err.max(relative_error(grads.tensors[ti].data[j], numeric));
        }
        worst = worst.max(max_err);
        tensors.push(TensorCheck {
            name: params.tensors[ti].name.clone(),
            checked: params.tensors[ti].data.len(),
            max_rel_error: max_err,
        });
    }
    Ok(GradcheckReport {
        step,
        loss,
        tensors,
        max_rel_error: worst,
    })
}
