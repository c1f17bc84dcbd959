//! Differential enhancive module.
//!
//! `M = σ(F(gap(Fr − Ft)) + F(gmp(Fr − Ft)))` with `F = expand ∘ relu ∘ reduce`,
//! then each stream is scaled by `1 + M`.

use crate::error::Result;
use crate::tensor::{
    gap, gap_backward, gmp_argmax, gmp_backward, relu, relu_backward, sigmoid, sigmoid_backward,
    ChannelVector, FeatureMap, Real,
};

use super::params::DemParams;

/// Intermediate values of one bottleneck pass, kept for the adjoint.
#[derive(Debug, Clone)]
struct BottleneckTrace<T: Real> {
    input: ChannelVector<T>,
    reduced: ChannelVector<T>,
    hidden: ChannelVector<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct DemTrace<T: Real> {
    avg_path: BottleneckTrace<T>,
    max_path: BottleneckTrace<T>,
    argmax: Vec<usize>,
    pub mask: ChannelVector<T>,
}

fn bottleneck<T: Real>(
    p: &DemParams<T>,
    input: ChannelVector<T>,
) -> Result<(ChannelVector<T>, BottleneckTrace<T>)> {
    let reduced = p.reduce.apply(&input)?;
    let hidden = relu(&reduced);
    let out = p.expand.apply(&hidden)?;
    Ok((
        out,
        BottleneckTrace {
            input,
            reduced,
            hidden,
        },
    ))
}

fn bottleneck_backward<T: Real>(
    p: &DemParams<T>,
    trace: &BottleneckTrace<T>,
    grad_out: &ChannelVector<T>,
    grad: &mut DemParams<T>,
) -> Result<ChannelVector<T>> {
    let g_hidden = p
        .expand
        .backward(&trace.hidden, grad_out, &mut grad.expand)?;
    let g_reduced = relu_backward(&trace.reduced, &g_hidden)?;
    p.reduce
        .backward(&trace.input, &g_reduced, &mut grad.reduce)
}

pub(crate) fn dem_trace<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &DemParams<T>,
) -> Result<DemTrace<T>> {
    fr.ensure_same_shape(ft, "DEM inputs")?;
    p.validate(fr.channels())?;
    let fd = fr.zip_unchecked(ft, |a, b| a - b);
    let argmax = gmp_argmax(&fd);
    let s_avg = gap(&fd);
    let s_max = ChannelVector::from_raw(fd.planes().zip(&argmax).map(|(pl, &i)| pl[i]).collect());
    let (z_avg, avg_path) = bottleneck(p, s_avg)?;
    let (z_max, max_path) = bottleneck(p, s_max)?;
    let mask = sigmoid(&z_avg.zip_with(&z_max, |a, b| a + b)?);
    Ok(DemTrace {
        avg_path,
        max_path,
        argmax,
        mask,
    })
}

/// The channel attention `M` computed from the differential feature `fr − ft`.
pub fn dem_attention<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &DemParams<T>,
) -> Result<ChannelVector<T>> {
    Ok(dem_trace(fr, ft, p)?.mask)
}

pub(crate) fn apply_gain<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    mask: &ChannelVector<T>,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    let gain = mask.map(|m| T::one() + m);
    Ok((fr.scale_channels(&gain)?, ft.scale_channels(&gain)?))
}

/// Both enhanced streams `(fr·(1+M), ft·(1+M))`, left unsummed.
pub fn dem_forward<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &DemParams<T>,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    let mask = dem_attention(fr, ft, p)?;
    apply_gain(fr, ft, &mask)
}

/// Adjoint of [`dem_forward`]. Accumulates parameter gradients into `grad`
/// and returns the gradients on `(fr, ft)`.
pub(crate) fn dem_backward<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &DemParams<T>,
    trace: &DemTrace<T>,
    grad_er: &FeatureMap<T>,
    grad_et: &FeatureMap<T>,
    grad: &mut DemParams<T>,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    let (c, h, w) = fr.shape();
    let mask = trace.mask.data();

    // d/dM[c] = Σ (g_er·fr + g_et·ft) over the channel's plane.
    let mut g_mask = Vec::with_capacity(c);
    for ch in 0..c {
        let acc = fr
            .plane(ch)
            .iter()
            .zip(grad_er.plane(ch))
            .zip(ft.plane(ch).iter().zip(grad_et.plane(ch)))
            .fold(T::zero(), |acc, ((&x, &g), (&y, &k))| acc + g * x + k * y);
        g_mask.push(acc);
    }
    let g_logit = sigmoid_backward(&trace.mask, &ChannelVector::from_raw(g_mask))?;

    let g_avg = bottleneck_backward(p, &trace.avg_path, &g_logit, grad)?;
    let g_max = bottleneck_backward(p, &trace.max_path, &g_logit, grad)?;
    let g_fd_avg = gap_backward(&g_avg, h, w);
    let g_fd_max = gmp_backward(&trace.argmax, &g_max, h, w);
    let g_fd = g_fd_avg.zip_unchecked(&g_fd_max, |a, b| a + b);

    let n = h * w;
    let mut g_fr = Vec::with_capacity(c * n);
    let mut g_ft = Vec::with_capacity(c * n);
    for ch in 0..c {
        let gain = T::one() + mask[ch];
        for i in 0..n {
            let d = g_fd.plane(ch)[i];
            g_fr.push(grad_er.plane(ch)[i] * gain + d);
            g_ft.push(grad_et.plane(ch)[i] * gain - d);
        }
    }
    Ok((
        FeatureMap::from_raw(c, h, w, g_fr),
        FeatureMap::from_raw(c, h, w, g_ft),
    ))
}
