use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::mask::{project_known, CoeffMask};
use crate::dwt::{forward_dwt, inverse_dwt, Orientation, Subband, WaveletPyramid};
use crate::error::{Result, WimError};
use crate::image::Image;

/// How the known component `f0` is formed from the received coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum F0Policy {
    /// Nearest-neighbour fill of the LL band whenever part of it is lost,
    /// plain inverse transform otherwise.
    #[default]
    Auto,
    /// Always the inverse transform of the received coefficients.
    Received,
}

/// Received data: the known coefficients `beta` (zero off `I`), the mask
/// and the known component `f0`.
#[derive(Clone, Debug)]
pub struct ObservedData {
    beta: WaveletPyramid,
    mask: CoeffMask,
    f0: Image,
    received: Image,
    noise_sigma: f64,
}

impl ObservedData {
    pub fn new(
        beta: WaveletPyramid,
        mask: CoeffMask,
        noise_sigma: f64,
        policy: F0Policy,
    ) -> Result<Self> {
        if beta.layout() != mask.layout() {
            return Err(WimError::LayoutMismatch);
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(WimError::InvalidParameter(format!(
                "noise sigma {noise_sigma}"
            )));
        }
        // enforce beta = 0 on the complement exactly
        let beta = project_known(&beta, &mask)?;
        let received = inverse_dwt(&beta)?;
        let f0 = match policy {
            F0Policy::Auto if mask.lowpass_incomplete() => fill_lowpass(&beta, &mask)?,
            _ => received.clone(),
        };
        Ok(Self {
            beta,
            mask,
            f0,
            received,
            noise_sigma,
        })
    }

    pub fn beta(&self) -> &WaveletPyramid {
        &self.beta
    }

    pub fn mask(&self) -> &CoeffMask {
        &self.mask
    }

    pub fn f0(&self) -> &Image {
        &self.f0
    }

    /// Inverse transform of `beta`, regardless of the `f0` policy.
    pub fn received(&self) -> &Image {
        &self.received
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn levels(&self) -> usize {
        self.beta.levels()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.f0.dims()
    }
}

/// Simulates lossy reception: `beta = P_I(W original + noise)` with i.i.d.
/// Gaussian noise of standard deviation `noise_sigma` on known coefficients.
pub fn degrade(
    original: &Image,
    mask: &CoeffMask,
    noise_sigma: f64,
    seed: u64,
    policy: F0Policy,
) -> Result<ObservedData> {
    let layout = mask.layout();
    if original.dims() != (layout.width(), layout.height()) {
        return Err(WimError::DimensionMismatch {
            expected: (layout.width(), layout.height()),
            actual: original.dims(),
        });
    }
    let mut alpha = forward_dwt(original, layout.levels())?;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma)
            .map_err(|e| WimError::InvalidParameter(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (v, &k) in alpha.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            if k {
                *v += normal.sample(&mut rng);
            }
        }
    }
    let beta = project_known(&alpha, mask)?;
    ObservedData::new(beta, mask.clone(), noise_sigma, policy)
}

/// Substitute `f0` for data whose LL band is partly lost: each unknown LL
/// coefficient takes the value of the nearest known LL coefficient, then
/// the completed coefficients are inverted.
pub fn interpolate_ll(observed: &ObservedData) -> Result<Image> {
    fill_lowpass(&observed.beta, &observed.mask)
}

fn fill_lowpass(beta: &WaveletPyramid, mask: &CoeffMask) -> Result<Image> {
    let layout = beta.layout();
    let rect = layout.rect(Subband::new(layout.levels(), Orientation::LL))?;
    let (w, h) = (rect.width, rect.height);
    let known: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.is_known(x, y))
        .collect();
    if known.is_empty() {
        return Err(WimError::NoKnownLowpass);
    }
    let mut filled = beta.clone();
    for y in 0..h {
        for x in 0..w {
            if mask.is_known(x, y) {
                continue;
            }
            let (sx, sy) = nearest(&known, x, y);
            filled.set(x, y, beta.get(sx, sy));
        }
    }
    inverse_dwt(&filled)
}

/// Closest point by squared Euclidean distance; the first in row-major
/// order wins ties.
fn nearest(points: &[(usize, usize)], x: usize, y: usize) -> (usize, usize) {
    let mut best = points[0];
    let mut best_d = usize::MAX;
    for &(px, py) in points {
        let d = px.abs_diff(x).pow(2) + py.abs_diff(y).pow(2);
        if d < best_d {
            best_d = d;
            best = (px, py);
        }
    }
    best
}
