use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{ChannelVector, FeatureMap, Real};

use super::csm::{csm_backward, csm_trace, CsmTrace};
use super::dem::{apply_gain, dem_backward, dem_trace, DemTrace};
use super::params::{CmaffParams, ConcatReduceParams};

/// How the differential and common modules are wired together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arrangement {
    /// Both modules see the raw inputs; their four streams are summed.
    Parallel,
    /// Both modules see the raw inputs; the two module sums are concatenated
    /// along channels and projected back to `C` per pixel.
    ParallelConcat,
    /// Common selection first, its two outputs feed the differential module.
    CommonFirst,
    /// Differential enhancement first, its two outputs feed the common module.
    DifferentialFirst,
}

impl Arrangement {
    pub const ALL: [Arrangement; 4] = [
        Arrangement::Parallel,
        Arrangement::ParallelConcat,
        Arrangement::CommonFirst,
        Arrangement::DifferentialFirst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arrangement::Parallel => "parallel",
            Arrangement::ParallelConcat => "parallel-concat",
            Arrangement::CommonFirst => "csm-dem",
            Arrangement::DifferentialFirst => "dem-csm",
        }
    }

    pub fn needs_concat(self) -> bool {
        self == Arrangement::ParallelConcat
    }
}

impl fmt::Display for Arrangement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arrangement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arrangement::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown arrangement '{s}' (expected parallel, parallel-concat, csm-dem or dem-csm)"
                ))
            })
    }
}

/// Fused map plus the attention vectors that produced it.
#[derive(Debug, Clone)]
pub struct FuseOutput<T: Real = f32> {
    pub fused: FeatureMap<T>,
    pub dem_mask: ChannelVector<T>,
    pub csm_rgb: ChannelVector<T>,
    pub csm_ir: ChannelVector<T>,
}

/// Gradients of a scalar loss with respect to every input of [`fuse`].
#[derive(Debug, Clone)]
pub struct FuseGradients<T: Real = f32> {
    pub fr: FeatureMap<T>,
    pub ft: FeatureMap<T>,
    pub params: CmaffParams<T>,
}

enum Trace<T: Real> {
    Parallel {
        dem: DemTrace<T>,
        csm: CsmTrace<T>,
    },
    ParallelConcat {
        dem: DemTrace<T>,
        csm: CsmTrace<T>,
        concat: FeatureMap<T>,
    },
    CommonFirst {
        csm: CsmTrace<T>,
        sr: FeatureMap<T>,
        st: FeatureMap<T>,
        dem: DemTrace<T>,
    },
    DifferentialFirst {
        dem: DemTrace<T>,
        er: FeatureMap<T>,
        et: FeatureMap<T>,
        csm: CsmTrace<T>,
    },
}

fn select<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    trace: &CsmTrace<T>,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    Ok((
        fr.scale_channels(&trace.mask_rgb)?,
        ft.scale_channels(&trace.mask_ir)?,
    ))
}

fn pair_sum<T: Real>(a: &FeatureMap<T>, b: &FeatureMap<T>) -> FeatureMap<T> {
    a.zip_unchecked(b, |x, y| x + y)
}

/// Stacks `[first ; second]` along channels.
fn concat_channels<T: Real>(first: &FeatureMap<T>, second: &FeatureMap<T>) -> FeatureMap<T> {
    let (c, h, w) = first.shape();
    let mut data = Vec::with_capacity(2 * first.data().len());
    data.extend_from_slice(first.data());
    data.extend_from_slice(second.data());
    FeatureMap::from_raw(2 * c, h, w, data)
}

/// Applies the `2C → C` projection independently at every pixel.
fn project_pixels<T: Real>(cr: &ConcatReduceParams<T>, x: &FeatureMap<T>) -> FeatureMap<T> {
    let (cin, h, w) = x.shape();
    let cout = cr.project.out_dim();
    let n = h * w;
    let mut out = vec![T::zero(); cout * n];
    let mut column = vec![T::zero(); cin];
    for p in 0..n {
        for (ch, v) in column.iter_mut().enumerate() {
            *v = x.data()[ch * n + p];
        }
        for (o, y) in cr.project.apply_slice(&column).into_iter().enumerate() {
            out[o * n + p] = y;
        }
    }
    FeatureMap::from_raw(cout, h, w, out)
}

fn project_pixels_backward<T: Real>(
    cr: &ConcatReduceParams<T>,
    x: &FeatureMap<T>,
    upstream: &FeatureMap<T>,
    grad: &mut ConcatReduceParams<T>,
) -> FeatureMap<T> {
    let (cin, h, w) = x.shape();
    let cout = cr.project.out_dim();
    let n = h * w;
    let mut g_x = vec![T::zero(); cin * n];
    let mut column = vec![T::zero(); cin];
    let mut g_col = vec![T::zero(); cout];
    for p in 0..n {
        for (ch, v) in column.iter_mut().enumerate() {
            *v = x.data()[ch * n + p];
        }
        for (o, g) in g_col.iter_mut().enumerate() {
            *g = upstream.data()[o * n + p];
        }
        let g_in = cr
            .project
            .backward_slice(&column, &g_col, &mut grad.project);
        for (ch, g) in g_in.into_iter().enumerate() {
            g_x[ch * n + p] = g;
        }
    }
    FeatureMap::from_raw(cin, h, w, g_x)
}

fn split_channels<T: Real>(m: &FeatureMap<T>) -> (FeatureMap<T>, FeatureMap<T>) {
    let (c2, h, w) = m.shape();
    let c = c2 / 2;
    let (a, b) = m.data().split_at(c * h * w);
    (
        FeatureMap::from_raw(c, h, w, a.to_vec()),
        FeatureMap::from_raw(c, h, w, b.to_vec()),
    )
}

fn check_inputs<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &CmaffParams<T>,
    a: Arrangement,
) -> Result<()> {
    fr.ensure_same_shape(ft, "fusion inputs")?;
    if fr.channels() != p.channels {
        return Err(Error::Shape(format!(
            "inputs have {} channels, parameters expect {}",
            fr.channels(),
            p.channels
        )));
    }
    p.validate()?;
    if a.needs_concat() && p.concat_reduce.is_none() {
        return Err(Error::Config(
            "parallel-concat arrangement requires concat projection parameters".into(),
        ));
    }
    Ok(())
}

fn forward_traced<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &CmaffParams<T>,
    a: Arrangement,
) -> Result<(FuseOutput<T>, Trace<T>)> {
    check_inputs(fr, ft, p, a)?;
    match a {
        Arrangement::Parallel => {
            let dem = dem_trace(fr, ft, &p.dem)?;
            let csm = csm_trace(fr, ft, &p.csm)?;
            let (er, et) = apply_gain(fr, ft, &dem.mask)?;
            let (sr, st) = select(fr, ft, &csm)?;
            let fused = pair_sum(&pair_sum(&er, &et), &pair_sum(&sr, &st));
            let out = FuseOutput {
                fused,
                dem_mask: dem.mask.clone(),
                csm_rgb: csm.mask_rgb.clone(),
                csm_ir: csm.mask_ir.clone(),
            };
            Ok((out, Trace::Parallel { dem, csm }))
        }
        Arrangement::ParallelConcat => {
            let cr = p.concat_reduce.as_ref().expect("checked above");
            let dem = dem_trace(fr, ft, &p.dem)?;
            let csm = csm_trace(fr, ft, &p.csm)?;
            let (er, et) = apply_gain(fr, ft, &dem.mask)?;
            let (sr, st) = select(fr, ft, &csm)?;
            let concat = concat_channels(&pair_sum(&er, &et), &pair_sum(&sr, &st));
            let fused = project_pixels(cr, &concat);
            let out = FuseOutput {
                fused,
                dem_mask: dem.mask.clone(),
                csm_rgb: csm.mask_rgb.clone(),
                csm_ir: csm.mask_ir.clone(),
            };
            Ok((out, Trace::ParallelConcat { dem, csm, concat }))
        }
        Arrangement::CommonFirst => {
            let csm = csm_trace(fr, ft, &p.csm)?;
            let (sr, st) = select(fr, ft, &csm)?;
            let dem = dem_trace(&sr, &st, &p.dem)?;
            let (er, et) = apply_gain(&sr, &st, &dem.mask)?;
            let out = FuseOutput {
                fused: pair_sum(&er, &et),
                dem_mask: dem.mask.clone(),
                csm_rgb: csm.mask_rgb.clone(),
                csm_ir: csm.mask_ir.clone(),
            };
            Ok((out, Trace::CommonFirst { csm, sr, st, dem }))
        }
        Arrangement::DifferentialFirst => {
            let dem = dem_trace(fr, ft, &p.dem)?;
            let (er, et) = apply_gain(fr, ft, &dem.mask)?;
            let csm = csm_trace(&er, &et, &p.csm)?;
            let (sr, st) = select(&er, &et, &csm)?;
            let out = FuseOutput {
                fused: pair_sum(&sr, &st),
                dem_mask: dem.mask.clone(),
                csm_rgb: csm.mask_rgb.clone(),
                csm_ir: csm.mask_ir.clone(),
            };
            Ok((out, Trace::DifferentialFirst { dem, er, et, csm }))
        }
    }
}

/// Fuses an aligned RGB/thermal feature pair.
pub fn fuse<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &CmaffParams<T>,
    a: Arrangement,
) -> Result<FeatureMap<T>> {
    Ok(forward_traced(fr, ft, p, a)?.0.fused)
}

/// Like [`fuse`], also returning the attention vectors applied on the way.
pub fn fuse_with_attention<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &CmaffParams<T>,
    a: Arrangement,
) -> Result<FuseOutput<T>> {
    Ok(forward_traced(fr, ft, p, a)?.0)
}

/// Reverse-mode adjoint of [`fuse`] for the upstream gradient `upstream`
/// (same shape as the fused map).
pub fn fuse_backward<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &CmaffParams<T>,
    a: Arrangement,
    upstream: &FeatureMap<T>,
) -> Result<FuseGradients<T>> {
    let (out, trace) = forward_traced(fr, ft, p, a)?;
    out.fused.ensure_same_shape(upstream, "upstream gradient")?;
    let mut grad = p.zeros_like();
    grad.seed = None;

    let (g_fr, g_ft) = match &trace {
        Trace::Parallel { dem, csm } => {
            let (a_r, a_t) = dem_backward(fr, ft, &p.dem, dem, upstream, upstream, &mut grad.dem)?;
            let (b_r, b_t) = csm_backward(fr, ft, &p.csm, csm, upstream, upstream, &mut grad.csm)?;
            (pair_sum(&a_r, &b_r), pair_sum(&a_t, &b_t))
        }
        Trace::ParallelConcat { dem, csm, concat } => {
            let cr = p.concat_reduce.as_ref().expect("checked in forward");
            let g_cr = grad
                .concat_reduce
                .as_mut()
                .expect("shape copied from params");
            let g_concat = project_pixels_backward(cr, concat, upstream, g_cr);
            let (g_dem, g_csm) = split_channels(&g_concat);
            let (a_r, a_t) = dem_backward(fr, ft, &p.dem, dem, &g_dem, &g_dem, &mut grad.dem)?;
            let (b_r, b_t) = csm_backward(fr, ft, &p.csm, csm, &g_csm, &g_csm, &mut grad.csm)?;
            (pair_sum(&a_r, &b_r), pair_sum(&a_t, &b_t))
        }
        Trace::CommonFirst { csm, sr, st, dem } => {
            let (g_sr, g_st) =
                dem_backward(sr, st, &p.dem, dem, upstream, upstream, &mut grad.dem)?;
            csm_backward(fr, ft, &p.csm, csm, &g_sr, &g_st, &mut grad.csm)?
        }
        Trace::DifferentialFirst { dem, er, et, csm } => {
            let (g_er, g_et) =
                csm_backward(er, et, &p.csm, csm, upstream, upstream, &mut grad.csm)?;
            dem_backward(fr, ft, &p.dem, dem, &g_er, &g_et, &mut grad.dem)?
        }
    };
    Ok(FuseGradients {
        fr: g_fr,
        ft: g_ft,
        params: grad,
    })
}
