use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dwt::{Layout, Orientation, Subband, WaveletPyramid};
use crate::error::{Result, WimError};

/// Known-coefficient index set `I`, stored in the pyramid's Mallat
/// arrangement (`true` means known).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoeffMask {
    layout: Layout,
    known: Vec<bool>,
}

impl CoeffMask {
    pub fn from_vec(layout: Layout, known: Vec<bool>) -> Result<Self> {
        if known.len() != layout.len() {
            return Err(WimError::LayoutMismatch);
        }
        if !known.iter().any(|&k| k) {
            return Err(WimError::InvalidParameter(
                "mask must keep at least one coefficient".into(),
            ));
        }
        Ok(Self { layout, known })
    }

    pub fn all_known(layout: Layout) -> Self {
        Self {
            layout,
            known: vec![true; layout.len()],
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.known
    }

    pub fn is_known(&self, x: usize, y: usize) -> bool {
        self.known[y * self.layout.width() + x]
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    pub fn unknown_count(&self) -> usize {
        self.known.len() - self.known_count()
    }

    /// Mask entries of one subband, row-major.
    pub fn subband(&self, sb: Subband) -> Result<Vec<bool>> {
        let rect = self.layout.rect(sb)?;
        Ok(rect.indices(self.layout.width()).map(|i| self.known[i]).collect())
    }

    /// True when some coefficient of the coarsest LL band is unknown.
    pub fn lowpass_incomplete(&self) -> bool {
        let ll = Subband::new(self.layout.levels(), Orientation::LL);
        self.subband(ll)
            .expect("LL band exists")
            .iter()
            .any(|&k| !k)
    }

    fn check(&self, pyr: &WaveletPyramid) -> Result<()> {
        if pyr.layout() != self.layout {
            return Err(WimError::LayoutMismatch);
        }
        Ok(())
    }

    fn select(&self, pyr: &WaveletPyramid, keep_known: bool) -> Result<WaveletPyramid> {
        self.check(pyr)?;
        let mut out = pyr.clone();
        for (v, &k) in out.as_mut_slice().iter_mut().zip(&self.known) {
            if k != keep_known {
                *v = 0.0;
            }
        }
        Ok(out)
    }
}

/// `P_I`: keeps known coefficients, zeros the rest.
pub fn project_known(pyr: &WaveletPyramid, mask: &CoeffMask) -> Result<WaveletPyramid> {
    mask.select(pyr, true)
}

/// `P_C`: zeros known coefficients, keeps the rest. The result vanishes on
/// `I`.
pub fn project_missing(pyr: &WaveletPyramid, mask: &CoeffMask) -> Result<WaveletPyramid> {
    mask.select(pyr, false)
}

/// Mask with one whole detail subband lost.
pub fn make_subband_loss_mask(layout: Layout, target: Subband) -> Result<CoeffMask> {
    if target.orientation == Orientation::LL {
        return Err(WimError::NoSuchSubband(format!(
            "{target}: only detail subbands can be dropped"
        )));
    }
    let rect = layout.rect(target)?;
    let mut known = vec![true; layout.len()];
    for i in rect.indices(layout.width()) {
        known[i] = false;
    }
    CoeffMask::from_vec(layout, known)
}

/// Random loss keeping exactly `round(keep_fraction * n)` coefficients,
/// sampled without replacement. With `keep_ll` the whole LL band is kept
/// and the fraction applies to detail coefficients only.
pub fn make_random_loss_mask(
    layout: Layout,
    keep_fraction: f64,
    keep_ll: bool,
    seed: u64,
) -> Result<CoeffMask> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(WimError::InvalidParameter(format!(
            "keep fraction {keep_fraction} outside (0, 1]"
        )));
    }
    let mut known = vec![false; layout.len()];
    let scan = layout.scan_order();
    let (ll_w, ll_h) = layout.band_dims(layout.levels());
    let ll_len = ll_w * ll_h;
    let candidates: &[usize] = if keep_ll {
        for &i in &scan[..ll_len] {
            known[i] = true;
        }
        &scan[ll_len..]
    } else {
        &scan
    };
    let count = (keep_fraction * candidates.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, candidates.len(), count).into_vec();
    picked.sort_unstable();
    for p in picked {
        known[candidates[p]] = true;
    }
    CoeffMask::from_vec(layout, known)
}
