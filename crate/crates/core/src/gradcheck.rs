//! Finite-difference verification of `MlpParams::backward_batch`.
//!
//! A probe is a fresh Glorot network with small random biases, a batch of
//! random inputs and a random weighting `C` of the outputs. The analytic
//! gradient of `L = sum_ij C_ij Q_ij` is compared coordinate by coordinate
//! with a central difference of step `h`. Inputs are redrawn until every
//! ReLU pre-activation is at least `RELU_MARGIN` away from the kink, so the
//! difference never straddles it.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::experiment::Architecture;
use crate::envs::EnvId;
use crate::nn::{Activation, LayerSpec, MlpParams};
use crate::rng::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-5;
pub const RELU_MARGIN: f64 = 1e-3;
pub const PROBES: usize = 10;
/// Below this magnitude relative error is measured against the floor
/// instead, since the difference quotient carries ~1e-10 rounding noise.
pub const GRADIENT_FLOOR: f64 = 1e-4;
const BATCH: usize = 8;
const WEIGHTS_PER_LAYER: usize = 48;
const BIASES_PER_LAYER: usize = 16;
const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub label: String,
    pub probes: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self) -> bool {
        self.max_rel_error < REL_TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR)
}

fn objective(params: &MlpParams, x: &Array2<f64>, c: &Array2<f64>) -> Result<f64> {
    Ok((params.predict_batch(x.view())? * c).sum())
}

fn relu_margin_ok(params: &MlpParams, x: &Array2<f64>) -> Result<bool> {
    let (_, cache) = params.forward_batch(x.view())?;
    Ok(params
        .layers
        .iter()
        .zip(cache.pre_activations())
        .filter(|(l, _)| l.activation == Activation::Relu)
        .all(|(_, z)| z.iter().all(|v| v.abs() >= RELU_MARGIN)))
}

/// Flat indices (in `MlpParams::iter` order) of the coordinates to check:
/// every weight and bias of small layers, a random sample of large ones.
fn pick_coordinates(params: &MlpParams, rng: &mut Rng) -> Vec<usize> {
    let mut picks = Vec::new();
    let mut offset = 0;
    let mut sample = |start: usize, len: usize, k: usize, rng: &mut Rng| {
        if len <= k {
            picks.extend(start..start + len);
        } else {
            picks.extend((0..k).map(|_| start + rng.below(len)));
        }
    };
    for layer in &params.layers {
        let (nw, nb) = (layer.weight.len(), layer.bias.len());
        sample(offset, nw, WEIGHTS_PER_LAYER, rng);
        sample(offset + nw, nb, BIASES_PER_LAYER, rng);
        offset += nw + nb;
    }
    picks
}

fn probe(specs: &[LayerSpec], rng: &mut Rng) -> Result<(usize, f64)> {
    let mut params = MlpParams::glorot(specs, rng)?;
    for layer in &mut params.layers {
        layer.bias.mapv_inplace(|_| rng.uniform_range(-0.1, 0.1));
    }
    let in_dim = params.input_dim();
    let mut x = Array2::zeros((BATCH, in_dim));
    for mut row in x.rows_mut() {
        let mut redraws = 0;
        loop {
            row.mapv_inplace(|_| rng.uniform_range(-1.0, 1.0));
            if relu_margin_ok(&params, &row.to_owned().insert_axis(Axis(0)))? {
                break;
            }
            redraws += 1;
            if redraws == MAX_REDRAWS {
                return Err(Error::Training("could not draw inputs clear of ReLU kinks".into()));
            }
        }
    }
    let c = Array2::from_shape_fn((BATCH, params.output_dim()), |_| rng.uniform_range(-1.0, 1.0));

    let (_, cache) = params.forward_batch(x.view())?;
    let analytic: Vec<f64> = params.backward_batch(&cache, c.view())?.iter().copied().collect();

    let coords = pick_coordinates(&params, rng);
    let mut worst = 0.0f64;
    for &k in &coords {
        let original = *params.iter().nth(k).expect("coordinate in range");
        let set = |p: &mut MlpParams, v: f64| *p.iter_mut().nth(k).expect("coordinate in range") = v;
        set(&mut params, original + FD_STEP);
        let up = objective(&params, &x, &c)?;
        set(&mut params, original - FD_STEP);
        let down = objective(&params, &x, &c)?;
        set(&mut params, original);
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[k], numeric));
    }
    Ok((coords.len(), worst))
}

/// Runs `probes` independent probes on networks of shape `specs`.
pub fn check_specs(label: &str, specs: &[LayerSpec], probes: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let mut coordinates = 0;
    let mut max_rel_error = 0.0f64;
    for _ in 0..probes {
        let (n, worst) = probe(specs, &mut rng)?;
        coordinates += n;
        max_rel_error = max_rel_error.max(worst);
    }
    Ok(GradCheckReport {
        label: label.to_string(),
        probes,
        coordinates,
        max_rel_error,
    })
}

/// The four ablation architectures at the given environment's dimensions.
pub fn check_architectures(env: EnvId, probes: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    Architecture::ALL
        .iter()
        .enumerate()
        .map(|(i, arch)| {
            let label = format!("{}/{}", env.name(), arch.name());
            check_specs(&label, &arch.layers(env), probes, crate::rng::mix_seed(seed, i as u64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::q_network_spec;

    #[test]
    fn all_architectures_pass() {
        for env in EnvId::ALL {
            for r in check_architectures(env, PROBES, 42).unwrap() {
                assert!(r.passes(), "{r:?}");
                assert_eq!(r.probes, PROBES);
                assert!(r.coordinates >= PROBES * 9);
            }
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // Corrupting one analytic coordinate by 1e-3 must show up.
        let specs = q_network_spec(2, 3, 1, 16, Activation::Tanh);
        let mut rng = Rng::new(1);
        let params = MlpParams::glorot(&specs, &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 2), |_| rng.uniform_range(-1.0, 1.0));
        let c = Array2::from_shape_fn((4, 3), |_| rng.uniform_range(-1.0, 1.0));
        let (_, cache) = params.forward_batch(x.view()).unwrap();
        let mut grad = params.backward_batch(&cache, c.view()).unwrap();
        grad.layers[0].weight[[3, 1]] += 1e-3;
        let analytic = grad.layers[0].weight[[3, 1]];
        let mut p = params.clone();
        p.layers[0].weight[[3, 1]] += FD_STEP;
        let up = objective(&p, &x, &c).unwrap();
        p.layers[0].weight[[3, 1]] -= 2.0 * FD_STEP;
        let down = objective(&p, &x, &c).unwrap();
        let numeric = (up - down) / (2.0 * FD_STEP);
        assert!(relative_error(analytic, numeric) > REL_TOLERANCE);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert!((relative_error(1e-9, 0.0) - 1e-5).abs() < 1e-18);
    }
}
