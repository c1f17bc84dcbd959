//! The cross-modality attentive fusion block.
//!
//! Given aligned RGB and thermal maps `Fr`, `Ft` of shape `C×H×W`:
//!
//! * the differential module derives a channel attention `M` from `Fr − Ft`
//!   and enhances both streams by `1 + M`;
//! * the common module derives per-channel softmax weights `(m_r, m_t)` from
//!   `Fr + Ft` and reweights the streams;
//! * [`fuse`] wires the two modules in one of four [`Arrangement`]s. In the
//!   parallel arrangement the result is `Fr·(1 + M + m_r) + Ft·(1 + M + m_t)`.
//!
//! Every forward operation has a hand-written adjoint ([`fuse_backward`]).

mod bundle;
mod check;
mod csm;
mod dem;
mod fuse;
mod params;

pub use bundle::{load_bundle, save_bundle, MANIFEST_NAME};
pub use check::{FuseGradCheck, FUSE_GRAD_TOLERANCE};
pub use csm::{csm_attention, csm_forward};
pub use dem::{dem_attention, dem_forward};
pub use fuse::{fuse, fuse_backward, fuse_with_attention, Arrangement, FuseGradients, FuseOutput};
pub use params::{
    bottleneck_width, init_params, param_count, CmaffParams, ConcatReduceParams, CsmParams,
    DemParams, CSM_RATIO, DEFAULT_DEM_RATIO,
};

use crate::error::Result;
use crate::tensor::{FeatureMap, Real};

/// Splits a modality pair into its common (`fr + ft`) and differential
/// (`fr − ft`) components.
pub fn decompose<T: Real>(
    fr: &FeatureMap<T>,
    ft: &FeatureMap<T>,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    Ok((fr.add(ft)?, fr.sub(ft)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decompose_small_cases() {
        let fr = FeatureMap::new(1, 1, 1, vec![2.0f32]).unwrap();
        let ft = FeatureMap::new(1, 1, 1, vec![0.0f32]).unwrap();
        let (fc, fd) = decompose(&fr, &ft).unwrap();
        assert_eq!((fc.data(), fd.data()), (&[2.0f32][..], &[2.0f32][..]));

        let (_, fd) = decompose(&fr, &fr).unwrap();
        assert!(fd.data().iter().all(|&v| v == 0.0));

        let other = FeatureMap::<f32>::zeros(1, 1, 2);
        assert!(decompose(&fr, &other).is_err());
    }
}
