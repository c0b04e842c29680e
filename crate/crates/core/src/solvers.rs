//! Reconstruction algorithms: the split-Bregman decomposition solver
//! ([`solve_algorithm1`]) and the Bregmanized operator splitting baseline
//! ([`solve_bos`]), with per-iteration traces.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::coeff::{project_known, project_missing, ObservedData};
use crate::dwt::{adjoint_dwt, forward_dwt, inverse_dwt, WaveletPyramid};
use crate::error::{Result, WimError};
use crate::image::{psnr, Image};
use crate::nltv::{NlWeightGraph, NltvProx};
use crate::prox::{ProxConfig, Regularizer};
use crate::tv::TvProx;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegularizerKind {
    Tv,
    Nltv,
}

impl RegularizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegularizerKind::Tv => "tv",
            RegularizerKind::Nltv => "nltv",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputRule {
    /// `f0 + W~ alpha_m` (the decomposition output; BOS returns its iterate).
    #[default]
    Composed,
    Iterate,
}

/// Starting image `f^0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Init {
    #[default]
    KnownComponent,
    Zero,
}

/// How BOS applies the transpose of `A = P_I W`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AdjointMode {
    /// `W~ P_I`, i.e. treating the transform as orthogonal.
    #[default]
    InverseTransform,
    /// Exact transpose of the analysis operator.
    ExactTranspose,
}

/// Stopping thresholds in the presence of noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseThreshold {
    /// `sigma * sqrt(#known)` for the data residual and
    /// `sigma * sqrt(#pixels)` for the constraint residual.
    #[default]
    Scaled,
    /// `sigma` for both.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub regularizer: RegularizerKind,
    /// Penalty of the decomposition solver; its prox weight is `1 / lambda`.
    pub lambda: f64,
    /// Regularization weight of BOS.
    pub mu: f64,
    /// Forward-backward step of BOS.
    pub delta: f64,
    pub max_outer: usize,
    pub inner_pfbs: usize,
    pub prox: ProxConfig,
    pub stop_tol: f64,
    pub noise_sigma: f64,
    pub output_rule: OutputRule,
    pub init: Init,
    pub adjoint: AdjointMode,
    pub noise_threshold: NoiseThreshold,
}

impl SolverConfig {
    pub fn tv() -> Self {
        Self {
            regularizer: RegularizerKind::Tv,
            lambda: 10.0,
            mu: 0.05,
            delta: 1.0,
            max_outer: 25,
            inner_pfbs: 10,
            prox: ProxConfig::default(),
            stop_tol: 1e-5,
            noise_sigma: 0.0,
            output_rule: OutputRule::Composed,
            init: Init::KnownComponent,
            adjoint: AdjointMode::InverseTransform,
            noise_threshold: NoiseThreshold::Scaled,
        }
    }

    pub fn nltv() -> Self {
        Self {
            regularizer: RegularizerKind::Nltv,
            lambda: 40.0,
            mu: 0.01,
            prox: ProxConfig::new(1e-4, 10),
            ..Self::tv()
        }
    }

    pub fn for_regularizer(kind: RegularizerKind) -> Self {
        match kind {
            RegularizerKind::Tv => Self::tv(),
            RegularizerKind::Nltv => Self::nltv(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("delta", self.delta),
            ("stop_tol", self.stop_tol),
            ("prox tolerance", self.prox.tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(WimError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_outer == 0 || self.inner_pfbs == 0 || self.prox.max_iters == 0 {
            return Err(WimError::InvalidParameter("iteration counts must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(WimError::InvalidParameter(format!("noise sigma {}", self.noise_sigma)));
        }
        Ok(())
    }

    /// Output rule actually applied: noisy data always returns the iterate.
    pub fn effective_output_rule(&self) -> OutputRule {
        if self.noise_sigma > 0.0 {
            OutputRule::Iterate
        } else {
            self.output_rule
        }
    }

    fn thresholds(&self, known: usize, pixels: usize) -> (f64, f64) {
        if self.noise_sigma == 0.0 {
            return (self.stop_tol, self.stop_tol);
        }
        let s = self.noise_sigma;
        match self.noise_threshold {
            NoiseThreshold::Scaled => (s * (known as f64).sqrt(), s * (pixels as f64).sqrt()),
            NoiseThreshold::Literal => (s, s),
        }
    }
}

/// Image the NL-TV weight graph is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuideSource {
    /// The known component `f0` as received (or LL-interpolated).
    KnownComponent,
    /// Output of a short TV decomposition solve on the same data.
    TvPrepass { iterations: usize },
}

pub const DEFAULT_PREPASS_ITERS: usize = 15;

impl Default for GuideSource {
    fn default() -> Self {
        GuideSource::TvPrepass {
            iterations: DEFAULT_PREPASS_ITERS,
        }
    }
}

/// Builds the guide image for the weight graph. The TV pre-pass uses the
/// default TV settings with the given noise level.
pub fn nltv_guide(observed: &ObservedData, source: GuideSource, noise_sigma: f64) -> Result<Image> {
    match source {
        GuideSource::KnownComponent => Ok(observed.f0().clone()),
        GuideSource::TvPrepass { iterations } => {
            let cfg = SolverConfig {
                max_outer: iterations,
                noise_sigma,
                ..SolverConfig::tv()
            };
            Ok(solve_algorithm1(observed, &cfg, None, None)?.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// PSNR of the image the solver would return at this iteration.
    pub psnr_db: Option<f64>,
    pub constraint_res: f64,
    pub data_res: f64,
    /// Terminal fixed-point residual of the inner prox solver (largest over
    /// the inner steps of the iteration).
    pub prox_res: f64,
    pub fwd_transforms: usize,
    pub inv_transforms: usize,
    pub elapsed_s: f64,
}

impl TraceRecord {
    fn same_values(&self, other: &TraceRecord) -> bool {
        let bits = |v: f64| v.to_bits();
        self.iter == other.iter
            && self.psnr_db.map(bits) == other.psnr_db.map(bits)
            && bits(self.constraint_res) == bits(other.constraint_res)
            && bits(self.data_res) == bits(other.data_res)
            && bits(self.prox_res) == bits(other.prox_res)
            && self.fwd_transforms == other.fwd_transforms
            && self.inv_transforms == other.inv_transforms
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    /// Transforms spent before the first iteration.
    pub setup_fwd: usize,
    pub setup_inv: usize,
    pub converged: bool,
}

pub const TRACE_HEADER: &str =
    "iter,psnr_db,constraint_res,data_res,prox_res,fwd_transforms,inv_transforms,elapsed_s";

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn elapsed_s(&self) -> f64 {
        self.last().map_or(0.0, |r| r.elapsed_s)
    }

    /// Bit-exact comparison of every column except the wall time.
    pub fn same_values(&self, other: &SolverTrace) -> bool {
        self.converged == other.converged
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.same_values(b))
    }

    /// CSV rows without the header, each starting with `prefix` when given.
    pub fn csv_rows(&self, prefix: Option<&str>) -> String {
        let mut out = String::new();
        for r in &self.records {
            if let Some(p) = prefix {
                out.push_str(p);
                out.push(',');
            }
            let psnr = r.psnr_db.map_or(String::new(), |p| format!("{p:?}"));
            let _ = writeln!(
                out,
                "{},{},{:?},{:?},{:?},{},{},{:?}",
                r.iter,
                psnr,
                r.constraint_res,
                r.data_res,
                r.prox_res,
                r.fwd_transforms,
                r.inv_transforms,
                r.elapsed_s
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{TRACE_HEADER}\n{}", self.csv_rows(None))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| WimError::io(path, e))
    }
}

/// Wavelet transforms with usage counters.
struct Transforms {
    levels: usize,
    fwd: usize,
    inv: usize,
}

impl Transforms {
    fn new(levels: usize) -> Self {
        Self { levels, fwd: 0, inv: 0 }
    }

    fn forward(&mut self, img: &Image) -> Result<WaveletPyramid> {
        self.fwd += 1;
        forward_dwt(img, self.levels)
    }

    fn inverse(&mut self, pyr: &WaveletPyramid) -> Result<Image> {
        self.inv += 1;
        inverse_dwt(pyr)
    }

    fn adjoint(&mut self, pyr: &WaveletPyramid, mode: AdjointMode) -> Result<Image> {
        match mode {
            AdjointMode::InverseTransform => self.inverse(pyr),
            AdjointMode::ExactTranspose => {
                self.inv += 1;
                adjoint_dwt(pyr)
            }
        }
    }
}

/// `(||f - f0 - W~ alpha_m||, ||P_I W f - beta||)`.
pub fn residuals(f: &Image, alpha_m: &WaveletPyramid, observed: &ObservedData) -> Result<(f64, f64)> {
    f.ensure_same_dims(observed.f0())?;
    if alpha_m.layout() != observed.mask().layout() {
        return Err(WimError::LayoutMismatch);
    }
    let composed = observed.f0().add(&inverse_dwt(alpha_m)?);
    let constraint = f.sub(&composed).norm_l2();
    let wf = forward_dwt(f, observed.levels())?;
    Ok((constraint, data_residual(&wf, observed)?))
}

fn data_residual(wf: &WaveletPyramid, observed: &ObservedData) -> Result<f64> {
    Ok(project_known(wf, observed.mask())?.sub(observed.beta()).norm_l2())
}

fn check_inputs(
    observed: &ObservedData,
    cfg: &SolverConfig,
    gph: Option<&NlWeightGraph>,
    reference: Option<&Image>,
) -> Result<()> {
    cfg.validate()?;
    if let Some(r) = reference {
        r.ensure_same_dims(observed.f0())?;
    }
    if cfg.regularizer == RegularizerKind::Nltv {
        let g = gph.ok_or(WimError::MissingGraph)?;
        if g.dims() != observed.dims() {
            return Err(WimError::GraphMismatch(format!(
                "graph is {:?}, data is {:?}",
                g.dims(),
                observed.dims()
            )));
        }
    }
    Ok(())
}

fn make_regularizer<'g>(
    cfg: &SolverConfig,
    gph: Option<&'g NlWeightGraph>,
) -> Result<Box<dyn Regularizer + 'g>> {
    Ok(match cfg.regularizer {
        RegularizerKind::Tv => Box::new(TvProx::new()),
        RegularizerKind::Nltv => Box::new(NltvProx::new(gph.ok_or(WimError::MissingGraph)?)),
    })
}

fn finite_image(img: &Image, iteration: usize, stage: &'static str) -> Result<()> {
    if img.is_finite() {
        Ok(())
    } else {
        Err(WimError::NonFinite { iteration, stage })
    }
}

fn finite_pyramid(p: &WaveletPyramid, iteration: usize, stage: &'static str) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(WimError::NonFinite { iteration, stage })
    }
}

fn initial(cfg: &SolverConfig, observed: &ObservedData) -> Image {
    match cfg.init {
        Init::KnownComponent => observed.f0().clone(),
        Init::Zero => {
            let (w, h) = observed.dims();
            Image::zeros(w, h)
        }
    }
}

/// Split-Bregman solver of the decomposition model
/// `min J(f)  s.t.  f = f0 + W~ alpha_m,  alpha_m in C`.
///
/// Each iteration applies one inverse transform (`W~ alpha_m`) and one
/// forward transform (`W f`); `W b` and `W f0` are carried in the
/// coefficient domain.
pub fn solve_algorithm1(
    observed: &ObservedData,
    cfg: &SolverConfig,
    gph: Option<&NlWeightGraph>,
    reference: Option<&Image>,
) -> Result<(Image, SolverTrace)> {
    check_inputs(observed, cfg, gph, reference)?;
    let start = Instant::now();
    let mask = observed.mask();
    let f0 = observed.f0();
    let (w, h) = observed.dims();
    let (data_tol, constraint_tol) = cfg.thresholds(mask.known_count(), w * h);
    let rule = cfg.effective_output_rule();
    let mut reg = make_regularizer(cfg, gph)?;
    let mut tf = Transforms::new(observed.levels());

    let wf0 = tf.forward(f0)?;
    // f^0 enters only through W f^0
    let mut wf = match cfg.init {
        Init::KnownComponent => wf0.clone(),
        Init::Zero => WaveletPyramid::zeros(mask.layout()),
    };
    let mut b = Image::zeros(w, h);
    let mut wb = WaveletPyramid::zeros(mask.layout());
    let mut output = f0.clone();
    let mut trace = SolverTrace {
        setup_fwd: tf.fwd,
        setup_inv: tf.inv,
        ..Default::default()
    };

    for k in 1..=cfg.max_outer {
        // alpha = P_C W(f - f0 - b)
        let alpha = project_missing(&wf.sub(&wf0).sub(&wb), mask)?;
        let composed = f0.add(&tf.inverse(&alpha)?);
        let g = b.add(&composed);
        finite_image(&g, k, "prox input")?;
        let out = reg.prox(&g, 1.0 / cfg.lambda, &cfg.prox.at_outer(k))?;
        let f = out.image;
        finite_image(&f, k, "prox output")?;
        b = g.sub(&f);
        wf = tf.forward(&f)?;
        finite_pyramid(&wf, k, "forward transform")?;
        // W b_new = W b + W f0 + alpha - W f
        wb = wb.add(&wf0).add(&alpha).sub(&wf);

        let constraint = f.sub(&composed).norm_l2();
        let data = data_residual(&wf, observed)?;
        output = match rule {
            OutputRule::Composed => composed,
            OutputRule::Iterate => f.clone(),
        };
        trace.records.push(TraceRecord {
            iter: k,
            psnr_db: reference.map(|r| psnr(r, &output)).transpose()?,
            constraint_res: constraint,
            data_res: data,
            prox_res: out.residual,
            fwd_transforms: tf.fwd,
            inv_transforms: tf.inv,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
        if data < data_tol && constraint < constraint_tol {
            trace.converged = true;
            break;
        }
    }
    Ok((output, trace))
}

/// Bregmanized operator splitting: outer Bregman updates of the data,
/// `inner_pfbs` forward-backward steps per outer iteration.
///
/// BOS carries no missing-coefficient component, so the constraint
/// residual column is NaN and stopping uses the data residual alone.
pub fn solve_bos(
    observed: &ObservedData,
    cfg: &SolverConfig,
    gph: Option<&NlWeightGraph>,
    reference: Option<&Image>,
) -> Result<(Image, SolverTrace)> {
    check_inputs(observed, cfg, gph, reference)?;
    let start = Instant::now();
    let mask = observed.mask();
    let beta = observed.beta();
    let (w, h) = observed.dims();
    let (data_tol, _) = cfg.thresholds(mask.known_count(), w * h);
    let mut reg = make_regularizer(cfg, gph)?;
    let mut tf = Transforms::new(observed.levels());
    let weight = cfg.delta * cfg.mu;

    let mut f = initial(cfg, observed);
    let mut wf = tf.forward(&f)?;
    let mut beta_k = beta.clone();
    let mut trace = SolverTrace {
        setup_fwd: tf.fwd,
        setup_inv: tf.inv,
        ..Default::default()
    };

    for k in 1..=cfg.max_outer {
        let prox_cfg = cfg.prox.at_outer(k);
        let mut prox_res = 0.0f64;
        for _ in 0..cfg.inner_pfbs {
            let r = project_known(&wf, mask)?.sub(&beta_k);
            let step = tf.adjoint(&r, cfg.adjoint)?;
            let g = f.sub(&step.scale(cfg.delta));
            finite_image(&g, k, "gradient step")?;
            let out = reg.prox(&g, weight, &prox_cfg)?;
            prox_res = prox_res.max(out.residual);
            f = out.image;
            finite_image(&f, k, "prox output")?;
            wf = tf.forward(&f)?;
        }
        let known = project_known(&wf, mask)?;
        let data = known.sub(beta).norm_l2();
        // beta_k += beta - A f
        beta_k = beta_k.add(beta).sub(&known);
        finite_pyramid(&beta_k, k, "Bregman update")?;

        trace.records.push(TraceRecord {
            iter: k,
            psnr_db: reference.map(|r| psnr(r, &f)).transpose()?,
            constraint_res: f64::NAN,
            data_res: data,
            prox_res,
            fwd_transforms: tf.fwd,
            inv_transforms: tf.inv,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
        if data < data_tol {
            trace.converged = true;
            break;
        }
    }
    Ok((f, trace))
}
