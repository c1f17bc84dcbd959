pub mod bench;
pub mod convert;
pub mod eval;
pub mod fuse;
pub mod gradcheck;
pub mod mosaic;
pub mod stats;
