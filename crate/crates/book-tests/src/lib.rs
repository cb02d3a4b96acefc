//! Each chapter of the guide under `book/src` is included as the docs of a
//! module, so `cargo test --doc` runs every listing against the current
//! library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/distribution.md")]
pub mod distribution {}
#[doc = include_str!("../../../book/src/sampling.md")]
pub mod sampling {}
#[doc = include_str!("../../../book/src/distribution-function.md")]
pub mod distribution_function {}
#[doc = include_str!("../../../book/src/smoothing.md")]
pub mod smoothing {}
#[doc = include_str!("../../../book/src/bandwidths.md")]
pub mod bandwidths {}
#[doc = include_str!("../../../book/src/gaussian-approximation.md")]
pub mod gaussian_approximation {}
#[doc = include_str!("../../../book/src/simulation-study.md")]
pub mod simulation_study {}
#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}
