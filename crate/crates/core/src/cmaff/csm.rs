//! Common selective module.
//!
//! `s = gap(Fr + Ft)`, `h = relu(shared·s)`, per-channel two-way softmax over
//! `(rgb·h, ir·h)`; each stream is scaled by its selection weight.

use crate::error::Result;
use crate::tensor::{
    gap, gap_backward, relu, relu_backward, softmax_pair, softmax_pair_backward, ChannelVector,
    FeatureMap, Real,
};

use super::params::CsmParams;

#[derive(Debug, Clone)]
pub(crate) struct CsmTrace<T: Real> {
    pooled: ChannelVector<T>,
    reduced: ChannelVector<T>,
    hidden: ChannelVector<T>,
    pub mask_rgb: ChannelVector<T>,
    pub mask_ir: ChannelVector<T>,
}

pub(crate) fn csm_trace<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &CsmParams<T>,
) -> Result<CsmTrace<T>> {
    fr.ensure_same_shape(ft, "CSM inputs")?;
    p.validate(fr.channels())?;
    let fc = fr.zip_unchecked(ft, |a, b| a + b);
    let pooled = gap(&fc);
    let reduced = p.shared.apply(&pooled)?;
    let hidden = relu(&reduced);
    let z_rgb = p.branch_rgb.apply(&hidden)?;
    let z_ir = p.branch_ir.apply(&hidden)?;
    let (mask_rgb, mask_ir) = softmax_pair(&z_rgb, &z_ir)?;
    Ok(CsmTrace {
        pooled,
        reduced,
        hidden,
        mask_rgb,
        mask_ir,
    })
}

/// Selection weights `(m_rgb, m_ir)`; they sum to one per channel.
pub fn csm_attention<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &CsmParams<T>,
) -> Result<(ChannelVector<T>, ChannelVector<T>)> {
    let t = csm_trace(fr, ft, p)?;
    Ok((t.mask_rgb, t.mask_ir))
}

/// Both selected streams `(fr·m_rgb, ft·m_ir)`, left unsummed.
pub fn csm_forward<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &CsmParams<T>,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    let (mr, mt) = csm_attention(fr, ft, p)?;
    Ok((fr.scale_channels(&mr)?, ft.scale_channels(&mt)?))
}

pub(crate) fn csm_backward<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
    p: &CsmParams<T>,
    trace: &CsmTrace<T>,
    grad_sr: &FeatureMap<T>,
    grad_st: &FeatureMap<T>,
    grad: &mut CsmParams<T>,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    let (c, h, w) = fr.shape();
    let plane_dot = |a: &FeatureMap<T>, b: &FeatureMap<T>, ch: usize| {
        a.plane(ch)
            .iter()
            .zip(b.plane(ch))
            .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
    };
    let g_mr = ChannelVector::from_raw((0..c).map(|ch| plane_dot(grad_sr, fr, ch)).collect());
    let g_mt = ChannelVector::from_raw((0..c).map(|ch| plane_dot(grad_st, ft, ch)).collect());
    let (g_zr, g_zt) = softmax_pair_backward(&trace.mask_rgb, &trace.mask_ir, &g_mr, &g_mt)?;

    let g_h_rgb = p
        .branch_rgb
        .backward(&trace.hidden, &g_zr, &mut grad.branch_rgb)?;
    let g_h_ir = p
        .branch_ir
        .backward(&trace.hidden, &g_zt, &mut grad.branch_ir)?;
    let g_hidden = g_h_rgb.zip_with(&g_h_ir, |a, b| a + b)?;
    let g_reduced = relu_backward(&trace.reduced, &g_hidden)?;
    let g_pooled = p
        .shared
        .backward(&trace.pooled, &g_reduced, &mut grad.shared)?;
    let g_fc = gap_backward(&g_pooled, h, w);

    let n = h * w;
    let mut g_fr = Vec::with_capacity(c * n);
    let mut g_ft = Vec::with_capacity(c * n);
    for ch in 0..c {
        let (mr, mt) = (trace.mask_rgb.data()[ch], trace.mask_ir.data()[ch]);
        for i in 0..n {
            let common = g_fc.plane(ch)[i];
            g_fr.push(grad_sr.plane(ch)[i] * mr + common);
            g_ft.push(grad_st.plane(ch)[i] * mt + common);
        }
    }
    Ok((
        FeatureMap::from_raw(c, h, w, g_fr),
        FeatureMap::from_raw(c, h, w, g_ft),
    ))
}
