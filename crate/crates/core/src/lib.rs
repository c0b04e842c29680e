//! Wavelet-domain inpainting of images with lost or noisy coefficients.

pub mod coeff;
pub mod dwt;
pub mod error;
pub mod image;
pub mod nltv;
pub mod prox;
pub mod solvers;
pub mod tv;

pub use coeff::{CoeffMask, F0Policy, ObservedData};
pub use dwt::{adjoint_dwt, forward_dwt, inverse_dwt, Layout, Orientation, Subband, WaveletPyramid};
pub use error::{Result, WimError};
pub use image::{load_image, psnr, save_image, Image};
pub use nltv::{build_weights, NlWeightGraph, NlWeightParams, NltvProx};
pub use prox::{ProxConfig, Regularizer};
pub use tv::TvProx;
pub use solvers::{
    nltv_guide, solve_algorithm1, solve_bos, GuideSource, RegularizerKind, SolverConfig, SolverTrace,
};
