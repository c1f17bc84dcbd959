//! Finite-difference verification of [`fuse_backward`] on random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gradcheck::{grad_check, GradCheck};
use crate::tensor::FeatureMap;

use super::fuse::{fuse, fuse_backward, Arrangement};
use super::params::CmaffParams;

/// Tolerance a passing gradient check must meet.
pub const FUSE_GRAD_TOLERANCE: f64 = 1e-5;

/// Random-instance gradient check of the fusion block.
///
/// The loss is `Σ u ⊙ fuse(fr, ft)` for a random upstream `u`; every input
/// element and every parameter (with randomised biases) is perturbed.
#[derive(Debug, Clone)]
pub struct FuseGradCheck {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub r_dem: usize,
    pub step: f64,
    /// Negative control: perturbs the analytic gradient before comparison.
    pub corrupt_adjoint: bool,
}

impl Default for FuseGradCheck {
    fn default() -> Self {
        Self {
            channels: 8,
            height: 5,
            width: 5,
            r_dem: super::params::DEFAULT_DEM_RATIO,
            step: 1e-5,
            corrupt_adjoint: false,
        }
    }
}

impl FuseGradCheck {
    pub fn run(&self, arrangement: Arrangement, seed: u64) -> Result<GradCheck> {
        let (c, h, w) = (self.channels, self.height, self.width);
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config(
                "gradient check sizes must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = CmaffParams::<f64>::init(c, self.r_dem, rng.gen(), true)?;
        for layer in params.layers_mut() {
            for b in layer.bias_mut() {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        let random_map =
            |rng: &mut ChaCha8Rng| FeatureMap::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0));
        let fr = random_map(&mut rng)?;
        let ft = random_map(&mut rng)?;
        let upstream = random_map(&mut rng)?;

        let n_map = c * h * w;
        let mut x0 = Vec::with_capacity(2 * n_map + params.num_parameters());
        x0.extend_from_slice(fr.data());
        x0.extend_from_slice(ft.data());
        x0.extend(params.flatten());

        let grads = fuse_backward(&fr, &ft, &params, arrangement, &upstream)?;
        let mut analytic = Vec::with_capacity(x0.len());
        analytic.extend_from_slice(grads.fr.data());
        analytic.extend_from_slice(grads.ft.data());
        analytic.extend(grads.params.flatten());
        if self.corrupt_adjoint {
            for g in &mut analytic[2 * n_map..] {
                *g = 1.1 * *g + 1e-3;
            }
        }

        let template = params.clone();
        let loss = |x: &[f64]| -> f64 {
            let fr = FeatureMap::new(c, h, w, x[..n_map].to_vec());
            let ft = FeatureMap::new(c, h, w, x[n_map..2 * n_map].to_vec());
            let mut p = template.clone();
            let (Ok(fr), Ok(ft), Ok(())) = (fr, ft, p.assign_flat(&x[2 * n_map..])) else {
                return f64::NAN;
            };
            match fuse(&fr, &ft, &p, arrangement) {
                Ok(out) => out
                    .data()
                    .iter()
                    .zip(upstream.data())
                    .map(|(a, b)| a * b)
                    .sum(),
                Err(_) => f64::NAN,
            }
        };
        grad_check(loss, &analytic, &x0, self.step)
    }
}
