//! Cross-modality attentive feature fusion (CMAFF) for aligned RGB and thermal
//! feature maps.
//!
//! The crate is organised around the fusion block itself ([`cmaff`]) and the
//! small dense-tensor substrate it runs on ([`tensor`]), plus the tooling a
//! multispectral detection pipeline needs around it: detection evaluation
//! ([`metrics`]), rotated-box annotation conversion ([`annotations`]) and
//! aligned-pair mosaic augmentation ([`augment`]).

pub mod annotations;
pub mod augment;
pub mod cmaff;
pub mod error;
pub mod ften;
pub mod gradcheck;
pub mod metrics;
pub mod pnm;
pub mod tensor;

pub use error::{Error, Result};
