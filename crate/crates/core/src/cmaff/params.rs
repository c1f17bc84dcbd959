use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{AffineLayer, Real};

/// Default reduction ratio of the differential-branch bottleneck.
pub const DEFAULT_DEM_RATIO: usize = 16;

/// The common-branch shared layer reduces to 1/32 of the channel count.
pub const CSM_RATIO: usize = 32;

/// `max(1, ⌈channels / ratio⌉)`.
pub fn bottleneck_width(channels: usize, ratio: usize) -> usize {
    channels.div_ceil(ratio.max(1)).max(1)
}

/// Shared bottleneck `expand ∘ relu ∘ reduce` applied to both pooled
/// descriptors of the differential feature.
#[derive(Debug, Clone, PartialEq)]
pub struct DemParams<T: Real = f32> {
    pub reduce: AffineLayer<T>,
    pub expand: AffineLayer<T>,
    pub ratio: usize,
}

/// Two two-layer networks sharing their first layer; the second layers
/// produce the RGB and thermal selection logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CsmParams<T: Real = f32> {
    pub shared: AffineLayer<T>,
    pub branch_rgb: AffineLayer<T>,
    pub branch_ir: AffineLayer<T>,
}

/// Per-pixel `2C → C` projection used by [`super::Arrangement::ParallelConcat`].
/// Input channel order is `[DEM sum ; CSM sum]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatReduceParams<T: Real = f32> {
    pub project: AffineLayer<T>,
}

/// All learnable weights of one fusion block.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaffParams<T: Real = f32> {
    pub channels: usize,
    pub dem: DemParams<T>,
    pub csm: CsmParams<T>,
    pub concat_reduce: Option<ConcatReduceParams<T>>,
    /// Seed used by [`init_params`]; `None` for parameters loaded from disk.
    pub seed: Option<u64>,
}

/// Closed-form number of scalar parameters (weights and biases) in one block.
pub fn param_count(channels: usize, r_dem: usize, use_concat: bool) -> usize {
    let c = channels;
    let d = bottleneck_width(c, r_dem);
    let k = bottleneck_width(c, CSM_RATIO);
    let dem = (c * d + d) + (d * c + c);
    let csm = (c * k + k) + 2 * (k * c + c);
    let concat = if use_concat { 2 * c * c + c } else { 0 };
    dem + csm + concat
}

fn glorot_layer<T: Real>(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> AffineLayer<T> {
    let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
    let mut layer = AffineLayer::zeros(in_dim, out_dim);
    for w in layer.weights_mut() {
        *w = T::from_f64(rng.gen_range(-bound..bound));
    }
    layer
}

/// Seeded initialisation: weights uniform in `±sqrt(6 / (in + out))`, biases zero.
pub fn init_params(channels: usize, r_dem: usize, seed: u64) -> Result<CmaffParams<f32>> {
    CmaffParams::init(channels, r_dem, seed, false)
}

impl<T: Real> CmaffParams<T> {
    pub fn init(channels: usize, r_dem: usize, seed: u64, use_concat: bool) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("channel count must be at least 1".into()));
        }
        if r_dem == 0 {
            return Err(Error::Config(
                "DEM reduction ratio must be at least 1".into(),
            ));
        }
        let c = channels;
        let d = bottleneck_width(c, r_dem);
        let k = bottleneck_width(c, CSM_RATIO);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dem = DemParams {
            reduce: glorot_layer(&mut rng, c, d),
            expand: glorot_layer(&mut rng, d, c),
            ratio: r_dem,
        };
        let csm = CsmParams {
            shared: glorot_layer(&mut rng, c, k),
            branch_rgb: glorot_layer(&mut rng, k, c),
            branch_ir: glorot_layer(&mut rng, k, c),
        };
        let concat_reduce = use_concat.then(|| ConcatReduceParams {
            project: glorot_layer(&mut rng, 2 * c, c),
        });
        Ok(Self {
            channels,
            dem,
            csm,
            concat_reduce,
            seed: Some(seed),
        })
    }

    /// All-zero parameters with the same layout as `init`.
    pub fn zeros(channels: usize, r_dem: usize, use_concat: bool) -> Result<Self> {
        let mut p = Self::init(channels, r_dem, 0, use_concat)?;
        p.fill(T::zero());
        p.seed = None;
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        let mut p = self.clone();
        p.fill(T::zero());
        p
    }

    fn fill(&mut self, v: T) {
        for layer in self.layers_mut() {
            layer.weights_mut().iter_mut().for_each(|w| *w = v);
            layer.bias_mut().iter_mut().for_each(|b| *b = v);
        }
    }

    /// Layers in serialization order, with their manifest name prefixes.
    pub fn named_layers(&self) -> Vec<(&'static str, &AffineLayer<T>)> {
        let mut out = vec![
            ("dem.reduce", &self.dem.reduce),
            ("dem.expand", &self.dem.expand),
            ("csm.shared", &self.csm.shared),
            ("csm.rgb", &self.csm.branch_rgb),
            ("csm.ir", &self.csm.branch_ir),
        ];
        if let Some(cr) = &self.concat_reduce {
            out.push(("concat", &cr.project));
        }
        out
    }

    pub fn layers_mut(&mut self) -> Vec<&mut AffineLayer<T>> {
        let mut out = vec![
            &mut self.dem.reduce,
            &mut self.dem.expand,
            &mut self.csm.shared,
            &mut self.csm.branch_rgb,
            &mut self.csm.branch_ir,
        ];
        if let Some(cr) = &mut self.concat_reduce {
            out.push(&mut cr.project);
        }
        out
    }

    /// Counts parameters by walking every constructed buffer.
    pub fn num_parameters(&self) -> usize {
        self.named_layers()
            .iter()
            .map(|(_, l)| l.weights().len() + l.bias().len())
            .sum()
    }

    /// Every scalar in serialization order (weights then bias, per layer).
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for (_, l) in self.named_layers() {
            out.extend_from_slice(l.weights());
            out.extend_from_slice(l.bias());
        }
        out
    }

    /// Inverse of [`CmaffParams::flatten`].
    pub fn assign_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_parameters()
            )));
        }
        let mut rest = values;
        for layer in self.layers_mut() {
            let (w, tail) = rest.split_at(layer.weights().len());
            layer.weights_mut().copy_from_slice(w);
            let (b, tail) = tail.split_at(layer.bias().len());
            layer.bias_mut().copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> CmaffParams<U> {
        CmaffParams {
            channels: self.channels,
            dem: DemParams {
                reduce: self.dem.reduce.cast(),
                expand: self.dem.expand.cast(),
                ratio: self.dem.ratio,
            },
            csm: CsmParams {
                shared: self.csm.shared.cast(),
                branch_rgb: self.csm.branch_rgb.cast(),
                branch_ir: self.csm.branch_ir.cast(),
            },
            concat_reduce: self.concat_reduce.as_ref().map(|cr| ConcatReduceParams {
                project: cr.project.cast(),
            }),
            seed: self.seed,
        }
    }

    /// Checks every sub-layer against the block's channel count.
    pub fn validate(&self) -> Result<()> {
        let c = self.channels;
        self.dem.validate(c)?;
        self.csm.validate(c)?;
        if let Some(cr) = &self.concat_reduce {
            cr.validate(c)?;
        }
        Ok(())
    }
}

impl<T: Real> DemParams<T> {
    pub fn validate(&self, channels: usize) -> Result<()> {
        let hidden = self.reduce.out_dim();
        if self.reduce.in_dim() != channels
            || self.expand.out_dim() != channels
            || self.expand.in_dim() != hidden
        {
            return Err(Error::Shape(format!(
                "DEM layers {}->{} / {}->{} do not fit {channels} channels",
                self.reduce.in_dim(),
                self.reduce.out_dim(),
                self.expand.in_dim(),
                self.expand.out_dim()
            )));
        }
        Ok(())
    }
}

impl<T: Real> CsmParams<T> {
    pub fn validate(&self, channels: usize) -> Result<()> {
        let hidden = self.shared.out_dim();
        let branch_ok = |l: &AffineLayer<T>| l.in_dim() == hidden && l.out_dim() == channels;
        if self.shared.in_dim() != channels
            || !branch_ok(&self.branch_rgb)
            || !branch_ok(&self.branch_ir)
        {
            return Err(Error::Shape(format!(
                "CSM layers do not fit {channels} channels (shared {}->{}, rgb {}->{}, ir {}->{})",
                self.shared.in_dim(),
                hidden,
                self.branch_rgb.in_dim(),
                self.branch_rgb.out_dim(),
                self.branch_ir.in_dim(),
                self.branch_ir.out_dim()
            )));
        }
        Ok(())
    }
}

impl<T: Real> ConcatReduceParams<T> {
    pub fn validate(&self, channels: usize) -> Result<()> {
        if self.project.in_dim() != 2 * channels || self.project.out_dim() != channels {
            return Err(Error::Shape(format!(
                "concat projection {}->{} does not fit {channels} channels",
                self.project.in_dim(),
                self.project.out_dim()
            )));
        }
        Ok(())
    }
}
