//! Residual generator, conditional sub-patch discriminator and a fixed
//! convolutional feature extractor, all described declaratively and run by
//! one interpreter.

mod model;
mod spec;

pub use model::{condition_concat, discriminate, Bound, Network, FEATURE_SEED, RESIDUAL_INIT_GAIN};
pub use spec::{
    build_discriminator, build_feature_extractor, build_generator, build_generator_with_blocks, Activation,
    LayerDesc, NetworkKind, NetworkSpec, SubPatchGrid, BASE_FILTERS, DEFAULT_RESIDUAL_BLOCKS, DISCRIMINATOR_FILTERS,
    FEATURE_CHANNELS, LEAKY_SLOPE, SUBPATCH,
};

use crate::error::Result;
use crate::tensor::Element;

/// The frozen feature extractor with its published seed.
pub fn default_feature_extractor<T: Element>(channels: usize) -> Result<Network<T>> {
    Ok(Network::init(build_feature_extractor(channels)?, FEATURE_SEED))
}
