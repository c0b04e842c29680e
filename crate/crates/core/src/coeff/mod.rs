//! Coefficient-domain data: loss masks, received coefficients and the
//! known component, and their file form.

pub mod format;
pub mod mask;
pub mod observed;

pub use format::{beta_path, decode_mask, encode_mask, read_observed, write_observed};
pub use mask::{
    make_random_loss_mask, make_subband_loss_mask, project_known, project_missing, CoeffMask,
};
pub use observed::{degrade, interpolate_ll, F0Policy, ObservedData};
