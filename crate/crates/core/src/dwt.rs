//! Separable CDF 9/7 ("Daubechies 7-9") wavelet transform by lifting.
//!
//! Coefficients are kept in the usual Mallat arrangement: after `levels`
//! decompositions the coarsest LL band sits in the top-left corner and
//! each level `j` (1 = finest) contributes three detail bands of size
//! `width/2^j x height/2^j`. Boundaries use whole-sample symmetric
//! extension, as in JPEG2000.
//!
//! The lifting output is scaled by `sqrt(2)/K` (lowpass) and `K/sqrt(2)`
//! (highpass), which makes both analysis lowpass and synthesis lowpass
//! have DC gain `sqrt(2)`. The transform is then close to orthonormal and
//! is treated as such by the solvers.

use std::fmt;

use crate::error::{Result, WimError};
use crate::image::{check_dims_for_levels, Image};

const ALPHA: f64 = -1.586_134_342_059_924;
const BETA: f64 = -0.052_980_118_572_961;
const GAMMA: f64 = 0.882_911_075_530_934;
const DELTA: f64 = 0.443_506_852_043_971;
const K: f64 = 1.230_174_104_914_001;

fn low_scale() -> f64 {
    std::f64::consts::SQRT_2 / K
}

fn high_scale() -> f64 {
    K / std::f64::consts::SQRT_2
}

/// Subband orientation. The first letter is the horizontal filter, the
/// second the vertical one: `HL` is highpass along rows and lowpass along
/// columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    LL,
    LH,
    HL,
    HH,
}

impl Orientation {
    pub const DETAILS: [Orientation; 3] = [Orientation::LH, Orientation::HL, Orientation::HH];

    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::LL => "LL",
            Orientation::LH => "LH",
            Orientation::HL => "HL",
            Orientation::HH => "HH",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LL" => Some(Orientation::LL),
            "LH" => Some(Orientation::LH),
            "HL" => Some(Orientation::HL),
            "HH" => Some(Orientation::HH),
            _ => None,
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Subband {
    pub level: usize,
    pub orientation: Orientation,
}

impl Subband {
    pub fn new(level: usize, orientation: Orientation) -> Self {
        Self { level, orientation }
    }
}

impl fmt::Display for Subband {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.orientation, self.level)
    }
}

/// Position of a subband inside the Mallat arrangement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubbandRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl SubbandRect {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat indices into a `stride`-wide buffer, row-major within the band.
    pub fn indices(&self, stride: usize) -> impl Iterator<Item = usize> + '_ {
        (self.y0..self.y0 + self.height)
            .flat_map(move |y| (self.x0..self.x0 + self.width).map(move |x| y * stride + x))
    }
}

/// Grid structure shared by pyramids and masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    width: usize,
    height: usize,
    levels: usize,
}

impl Layout {
    pub fn new(width: usize, height: usize, levels: usize) -> Result<Self> {
        check_dims_for_levels(width, height, levels)?;
        Ok(Self {
            width,
            height,
            levels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Band dimensions at `level` (1 = finest).
    pub fn band_dims(&self, level: usize) -> (usize, usize) {
        (self.width >> level, self.height >> level)
    }

    /// Level whose detail bands are `size` pixels wide, if any.
    pub fn level_for_width(&self, size: usize) -> Option<usize> {
        (1..=self.levels).find(|&j| self.width >> j == size)
    }

    /// All subbands in scan order: coarsest LL, then per level from coarse
    /// to fine the LH, HL, HH bands.
    pub fn subbands(&self) -> Vec<Subband> {
        let mut out = vec![Subband::new(self.levels, Orientation::LL)];
        for level in (1..=self.levels).rev() {
            out.extend(Orientation::DETAILS.iter().map(|&o| Subband::new(level, o)));
        }
        out
    }

    pub fn contains(&self, sb: Subband) -> bool {
        match sb.orientation {
            Orientation::LL => sb.level == self.levels,
            _ => sb.level >= 1 && sb.level <= self.levels,
        }
    }

    pub fn rect(&self, sb: Subband) -> Result<SubbandRect> {
        if !self.contains(sb) {
            return Err(WimError::NoSuchSubband(sb.to_string()));
        }
        let (w, h) = self.band_dims(sb.level);
        let (x0, y0) = match sb.orientation {
            Orientation::LL => (0, 0),
            Orientation::HL => (w, 0),
            Orientation::LH => (0, h),
            Orientation::HH => (w, h),
        };
        Ok(SubbandRect {
            x0,
            y0,
            width: w,
            height: h,
        })
    }

    /// Flat indices of every coefficient in scan order.
    pub fn scan_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for sb in self.subbands() {
            let rect = self.rect(sb).expect("subband from own layout");
            out.extend(rect.indices(self.width));
        }
        out
    }
}

/// Multi-level wavelet coefficients of an image.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletPyramid {
    layout: Layout,
    coeffs: Vec<f64>,
}

impl WaveletPyramid {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            coeffs: vec![0.0; layout.len()],
        }
    }

    /// Wraps coefficients given in Mallat arrangement.
    pub fn from_vec(layout: Layout, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != layout.len() {
            return Err(WimError::MalformedPyramid(format!(
                "{} coefficients for a {}x{} layout",
                coeffs.len(),
                layout.width,
                layout.height
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(WimError::MalformedPyramid("non-finite coefficient".into()));
        }
        Ok(Self { layout, coeffs })
    }

    /// Builds a pyramid from coefficients listed in scan order.
    pub fn from_scan_order(layout: Layout, values: &[f64]) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(WimError::MalformedPyramid(format!(
                "{} coefficients for a {}-coefficient layout",
                values.len(),
                layout.len()
            )));
        }
        let mut coeffs = vec![0.0; layout.len()];
        for (idx, &v) in layout.scan_order().into_iter().zip(values) {
            coeffs[idx] = v;
        }
        Self::from_vec(layout, coeffs)
    }

    pub fn to_scan_order(&self) -> Vec<f64> {
        self.layout
            .scan_order()
            .into_iter()
            .map(|i| self.coeffs[i])
            .collect()
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn levels(&self) -> usize {
        self.layout.levels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.coeffs[y * self.layout.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.coeffs[y * self.layout.width + x] = v;
    }

    /// Copy of one subband, row-major.
    pub fn subband(&self, sb: Subband) -> Result<Vec<f64>> {
        let rect = self.layout.rect(sb)?;
        Ok(rect.indices(self.layout.width).map(|i| self.coeffs[i]).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, other: &WaveletPyramid) -> WaveletPyramid {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &WaveletPyramid) -> WaveletPyramid {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> WaveletPyramid {
        WaveletPyramid {
            layout: self.layout,
            coeffs: self.coeffs.iter().map(|v| v * s).collect(),
        }
    }

    pub fn zip_map(&self, other: &WaveletPyramid, f: impl Fn(f64, f64) -> f64) -> WaveletPyramid {
        assert_eq!(self.layout, other.layout, "pyramid layout mismatch");
        WaveletPyramid {
            layout: self.layout,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn norm_l2(&self) -> f64 {
        self.coeffs.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &WaveletPyramid) -> f64 {
        assert_eq!(self.layout, other.layout, "pyramid layout mismatch");
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

// --- 1D lifting kernels -------------------------------------------------
//
// `s` holds the even samples and `d` the odd ones; both have length n.
// Whole-sample symmetric extension gives s[n] = s[n-1] and d[-1] = d[0].

fn predict(d: &mut [f64], s: &[f64], c: f64) {
    let n = s.len();
    for i in 0..n {
        let right = if i + 1 < n { s[i + 1] } else { s[n - 1] };
        d[i] += c * (s[i] + right);
    }
}

fn update(s: &mut [f64], d: &[f64], c: f64) {
    for i in 0..s.len() {
        let left = if i > 0 { d[i - 1] } else { d[0] };
        s[i] += c * (left + d[i]);
    }
}

// transposes of the two step types above
fn predict_t(s: &mut [f64], d: &[f64], c: f64) {
    let n = s.len();
    for j in 0..n {
        let mut acc = d[j];
        if j > 0 {
            acc += d[j - 1];
        }
        if j == n - 1 {
            acc += d[n - 1];
        }
        s[j] += c * acc;
    }
}

fn update_t(d: &mut [f64], s: &[f64], c: f64) {
    let n = d.len();
    for j in 0..n {
        let mut acc = s[j];
        if j + 1 < n {
            acc += s[j + 1];
        }
        if j == 0 {
            acc += s[0];
        }
        d[j] += c * acc;
    }
}

/// In place: interleaved samples in, `[low | high]` out.
fn analyze_line(line: &mut [f64], scratch: &mut Vec<f64>) {
    let n = line.len() / 2;
    scratch.clear();
    scratch.extend(line.iter().step_by(2));
    scratch.extend(line.iter().skip(1).step_by(2));
    let (s, d) = scratch.split_at_mut(n);
    predict(d, s, ALPHA);
    update(s, d, BETA);
    predict(d, s, GAMMA);
    update(s, d, DELTA);
    let (ls, hs) = (low_scale(), high_scale());
    for (o, v) in line[..n].iter_mut().zip(s.iter()) {
        *o = v * ls;
    }
    for (o, v) in line[n..].iter_mut().zip(d.iter()) {
        *o = v * hs;
    }
}

/// In place: `[low | high]` in, interleaved samples out.
fn synthesize_line(line: &mut [f64], scratch: &mut Vec<f64>) {
    let n = line.len() / 2;
    let (ls, hs) = (low_scale(), high_scale());
    scratch.clear();
    scratch.extend(line[..n].iter().map(|v| v / ls));
    scratch.extend(line[n..].iter().map(|v| v / hs));
    let (s, d) = scratch.split_at_mut(n);
    update(s, d, -DELTA);
    predict(d, s, -GAMMA);
    update(s, d, -BETA);
    predict(d, s, -ALPHA);
    for i in 0..n {
        line[2 * i] = s[i];
        line[2 * i + 1] = d[i];
    }
}

/// In place: transpose of [`analyze_line`].
fn analyze_line_t(line: &mut [f64], scratch: &mut Vec<f64>) {
    let n = line.len() / 2;
    let (ls, hs) = (low_scale(), high_scale());
    scratch.clear();
    scratch.extend(line[..n].iter().map(|v| v * ls));
    scratch.extend(line[n..].iter().map(|v| v * hs));
    let (s, d) = scratch.split_at_mut(n);
    update_t(d, s, DELTA);
    predict_t(s, d, GAMMA);
    update_t(d, s, BETA);
    predict_t(s, d, ALPHA);
    for i in 0..n {
        line[2 * i] = s[i];
        line[2 * i + 1] = d[i];
    }
}

type LineOp = fn(&mut [f64], &mut Vec<f64>);

/// Applies `op` to every row of the top-left `w x h` block of a
/// `stride`-wide buffer.
fn rows(buf: &mut [f64], stride: usize, w: usize, h: usize, op: LineOp) {
    let mut scratch = Vec::with_capacity(w);
    for y in 0..h {
        op(&mut buf[y * stride..y * stride + w], &mut scratch);
    }
}

fn columns(buf: &mut [f64], stride: usize, w: usize, h: usize, op: LineOp) {
    let mut scratch = Vec::with_capacity(h);
    let mut col = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * stride + x];
        }
        op(&mut col, &mut scratch);
        for y in 0..h {
            buf[y * stride + x] = col[y];
        }
    }
}

/// Forward transform, `levels` decompositions of the LL band.
pub fn forward_dwt(img: &Image, levels: usize) -> Result<WaveletPyramid> {
    let layout = Layout::new(img.width(), img.height(), levels)?;
    let mut coeffs = img.as_slice().to_vec();
    let stride = layout.width;
    for j in 0..levels {
        let (w, h) = (layout.width >> j, layout.height >> j);
        rows(&mut coeffs, stride, w, h, analyze_line);
        columns(&mut coeffs, stride, w, h, analyze_line);
    }
    Ok(WaveletPyramid { layout, coeffs })
}

/// Inverse transform; exact inverse of [`forward_dwt`].
pub fn inverse_dwt(pyr: &WaveletPyramid) -> Result<Image> {
    let layout = pyr.layout;
    if pyr.coeffs.len() != layout.len() {
        return Err(WimError::MalformedPyramid("coefficient count".into()));
    }
    let mut data = pyr.coeffs.clone();
    let stride = layout.width;
    for j in (0..layout.levels).rev() {
        let (w, h) = (layout.width >> j, layout.height >> j);
        columns(&mut data, stride, w, h, synthesize_line);
        rows(&mut data, stride, w, h, synthesize_line);
    }
    Image::new(layout.width, layout.height, data)
}

/// Transpose of the analysis operator, `W^T`. Differs from
/// [`inverse_dwt`] because CDF 9/7 is biorthogonal rather than orthogonal.
pub fn adjoint_dwt(pyr: &WaveletPyramid) -> Result<Image> {
    let layout = pyr.layout;
    let mut data = pyr.coeffs.clone();
    let stride = layout.width;
    for j in (0..layout.levels).rev() {
        let (w, h) = (layout.width >> j, layout.height >> j);
        columns(&mut data, stride, w, h, analyze_line_t);
        rows(&mut data, stride, w, h, analyze_line_t);
    }
    Image::new(layout.width, layout.height, data)
}
