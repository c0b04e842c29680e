//! On-disk form of received data.
//!
//! The mask file is text:
//!
//! ```text
//! WIM1 <width> <height> <levels> <sigma>
//! LL <level> <runs>
//! LH <level> <runs>
//! ...
//! ```
//!
//! with one line per subband in scan order (coarsest LL, then LH/HL/HH per
//! level from coarse to fine). `<runs>` lists the band's row-major mask as
//! comma-separated lowercase hex run lengths, alternating known and unknown
//! and starting with a (possibly empty) run of known coefficients.
//!
//! The received coefficients live next to it (same stem, `.beta`
//! extension) as raw little-endian `f64` values in the same scan order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::mask::CoeffMask;
use super::observed::{F0Policy, ObservedData};
use crate::dwt::{Layout, Orientation, Subband, WaveletPyramid};
use crate::error::{Result, WimError};

const MAGIC: &str = "WIM1";

/// Path of the coefficient file paired with a mask file.
pub fn beta_path(mask_path: &Path) -> PathBuf {
    mask_path.with_extension("beta")
}

pub fn encode_mask(mask: &CoeffMask, sigma: f64) -> String {
    let layout = mask.layout();
    let mut out = format!(
        "{MAGIC} {} {} {} {sigma:?}\n",
        layout.width(),
        layout.height(),
        layout.levels()
    );
    for sb in layout.subbands() {
        let bits = mask.subband(sb).expect("subband from own layout");
        let _ = writeln!(out, "{} {} {}", sb.orientation, sb.level, encode_runs(&bits));
    }
    out
}

fn encode_runs(bits: &[bool]) -> String {
    let mut runs = Vec::new();
    let mut current = true;
    let mut len = 0usize;
    for &b in bits {
        if b == current {
            len += 1;
        } else {
            runs.push(len);
            current = b;
            len = 1;
        }
    }
    runs.push(len);
    runs.iter()
        .map(|r| format!("{r:x}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn decode_runs(text: &str, expected: usize) -> Result<Vec<bool>> {
    let mut bits = Vec::with_capacity(expected);
    let mut current = true;
    for field in text.split(',') {
        let run = usize::from_str_radix(field, 16)
            .map_err(|_| WimError::MaskFormat(format!("bad run length {field:?}")))?;
        if bits.len() + run > expected {
            return Err(WimError::MaskFormat("runs overflow the subband".into()));
        }
        bits.extend(std::iter::repeat_n(current, run));
        current = !current;
    }
    if bits.len() != expected {
        return Err(WimError::MaskFormat(format!(
            "runs cover {} of {expected} coefficients",
            bits.len()
        )));
    }
    Ok(bits)
}

/// Parses a mask file, returning the mask and the recorded noise level.
pub fn decode_mask(text: &str) -> Result<(CoeffMask, f64)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| WimError::MaskFormat("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != MAGIC {
        return Err(WimError::MaskFormat(format!("bad header {header:?}")));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| WimError::MaskFormat(format!("bad header field {s:?}")))
    };
    let layout = Layout::new(num(fields[1])?, num(fields[2])?, num(fields[3])?)?;
    let sigma: f64 = fields[4]
        .parse()
        .map_err(|_| WimError::MaskFormat(format!("bad sigma {:?}", fields[4])))?;

    let mut known = vec![true; layout.len()];
    let expected = layout.subbands();
    let mut seen = 0;
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(WimError::MaskFormat(format!("bad subband line {line:?}")));
        }
        let orientation = Orientation::parse(parts[0])
            .ok_or_else(|| WimError::MaskFormat(format!("bad orientation {:?}", parts[0])))?;
        let sb = Subband::new(num(parts[1])?, orientation);
        if expected.get(seen) != Some(&sb) {
            return Err(WimError::MaskFormat(format!("unexpected subband line {sb}")));
        }
        let rect = layout.rect(sb)?;
        let bits = decode_runs(parts[2], rect.len())?;
        for (i, b) in rect.indices(layout.width()).zip(bits) {
            known[i] = b;
        }
        seen += 1;
    }
    if seen != expected.len() {
        return Err(WimError::MaskFormat(format!(
            "{seen} of {} subband lines present",
            expected.len()
        )));
    }
    Ok((CoeffMask::from_vec(layout, known)?, sigma))
}

pub fn encode_beta(beta: &WaveletPyramid) -> Vec<u8> {
    beta.to_scan_order()
        .into_iter()
        .flat_map(f64::to_le_bytes)
        .collect()
}

pub fn decode_beta(layout: Layout, bytes: &[u8]) -> Result<WaveletPyramid> {
    if bytes.len() != layout.len() * 8 {
        return Err(WimError::MaskFormat(format!(
            "coefficient file holds {} bytes, expected {}",
            bytes.len(),
            layout.len() * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    WaveletPyramid::from_scan_order(layout, &values)
}

/// Writes the mask file at `mask_path` and the coefficients next to it.
pub fn write_observed(mask_path: &Path, observed: &ObservedData) -> Result<()> {
    fs::write(mask_path, encode_mask(observed.mask(), observed.noise_sigma()))
        .map_err(|e| WimError::io(mask_path, e))?;
    let bpath = beta_path(mask_path);
    fs::write(&bpath, encode_beta(observed.beta())).map_err(|e| WimError::io(&bpath, e))
}

pub fn read_observed(mask_path: &Path, policy: F0Policy) -> Result<ObservedData> {
    let text = fs::read_to_string(mask_path).map_err(|e| WimError::io(mask_path, e))?;
    let (mask, sigma) = decode_mask(&text)?;
    let bpath = beta_path(mask_path);
    let bytes = fs::read(&bpath).map_err(|e| WimError::io(&bpath, e))?;
    let beta = decode_beta(mask.layout(), &bytes)?;
    ObservedData::new(beta, mask, sigma, policy)
}
