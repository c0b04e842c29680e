//! Benchmark scenarios with their published reference values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use wim_core::coeff::{make_random_loss_mask, make_subband_loss_mask, CoeffMask};
use wim_core::dwt::{Layout, Orientation, Subband};
use wim_core::prox::ProxConfig;
use wim_core::solvers::{GuideSource, RegularizerKind, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Reg {
    Tv,
    Nltv,
}

impl Reg {
    pub fn kind(self) -> RegularizerKind {
        match self {
            Reg::Tv => RegularizerKind::Tv,
            Reg::Nltv => RegularizerKind::Nltv,
        }
    }

    pub fn display(self) -> &'static str {
        match self {
            Reg::Tv => "TV",
            Reg::Nltv => "NLTV",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Alg1,
    Bos,
}

impl Solver {
    pub fn display(self) -> &'static str {
        match self {
            Solver::Alg1 => "Algorithm 1",
            Solver::Bos => "BOS",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DetailBand {
    #[value(name = "LH")]
    #[serde(rename = "LH")]
    Lh,
    #[value(name = "HL")]
    #[serde(rename = "HL")]
    Hl,
    #[value(name = "HH")]
    #[serde(rename = "HH")]
    Hh,
}

impl DetailBand {
    pub fn orientation(self) -> Orientation {
        match self {
            DetailBand::Lh => Orientation::LH,
            DetailBand::Hl => Orientation::HL,
            DetailBand::Hh => Orientation::HH,
        }
    }
}

/// Which coefficients are lost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Loss {
    /// A whole detail subband, chosen by its side length.
    Subband { band: DetailBand, level_size: usize },
    /// Each coefficient kept with probability `keep` (exact count); with
    /// `keep_ll` the coarsest LL band is always kept.
    Random { keep: f64, keep_ll: bool },
}

impl Loss {
    pub fn mask(&self, layout: Layout, seed: u64) -> anyhow::Result<CoeffMask> {
        Ok(match *self {
            Loss::Subband { band, level_size } => {
                let level = layout.level_for_width(level_size).with_context(|| {
                    format!(
                        "no detail subband of width {level_size} in a {}x{} image with {} levels",
                        layout.width(),
                        layout.height(),
                        layout.levels()
                    )
                })?;
                make_subband_loss_mask(layout, Subband::new(level, band.orientation()))?
            }
            Loss::Random { keep, keep_ll } => make_random_loss_mask(layout, keep, keep_ll, seed)?,
        })
    }

    pub fn describe(&self) -> String {
        match self {
            Loss::Subband { band, level_size } => {
                let name = format!("{band:?}").to_uppercase();
                format!("whole {name} subband ({level_size}x{level_size}) lost")
            }
            Loss::Random { keep, keep_ll } => format!(
                "{:.0}% of coefficients kept at random{}",
                keep * 100.0,
                if *keep_ll { ", LL band kept" } else { "" }
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub loss: Loss,
    #[serde(default)]
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GuideChoice {
    #[default]
    TvPrepass,
    F0,
}

impl GuideChoice {
    pub fn source(self) -> GuideSource {
        match self {
            GuideChoice::TvPrepass => GuideSource::default(),
            GuideChoice::F0 => GuideSource::KnownComponent,
        }
    }
}

/// One solver run of a preset. Unset fields take the regularizer's
/// defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub reg: Reg,
    pub solver: Solver,
    pub max_outer: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prox_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prox_tol: Option<f64>,
}

impl MethodSpec {
    pub fn new(reg: Reg, solver: Solver, max_outer: usize) -> Self {
        Self {
            reg,
            solver,
            max_outer,
            lambda: None,
            mu: None,
            delta: None,
            inner: None,
            stop_tol: None,
            prox_iters: None,
            prox_tol: None,
        }
    }

    fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn label(&self) -> String {
        format!("{}-{}", serde_plain(&self.reg), serde_plain(&self.solver))
    }

    pub fn title(&self) -> String {
        format!("{}-{}", self.reg.display(), self.solver.display())
    }

    pub fn config(&self, sigma: f64) -> SolverConfig {
        let base = SolverConfig::for_regularizer(self.reg.kind());
        SolverConfig {
            lambda: self.lambda.unwrap_or(base.lambda),
            mu: self.mu.unwrap_or(base.mu),
            delta: self.delta.unwrap_or(base.delta),
            inner_pfbs: self.inner.unwrap_or(base.inner_pfbs),
            max_outer: self.max_outer,
            stop_tol: self.stop_tol.unwrap_or(base.stop_tol),
            prox: ProxConfig {
                tol: self.prox_tol.unwrap_or(base.prox.tol),
                max_iters: self.prox_iters.unwrap_or(base.prox.max_iters),
                ..base.prox
            },
            noise_sigma: sigma,
            ..base
        }
    }
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// A published PSNR for one output of a preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    /// A method label (`tv-alg1`, ...), `received` or `interpolated`.
    pub target: String,
    pub psnr_db: f64,
    pub tolerance_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPreset {
    pub name: String,
    /// Name of the classical test image the preset was published with.
    pub image: String,
    /// Bundled stand-in used when the classical image is not available.
    pub substitute: String,
    #[serde(default = "default_levels")]
    pub levels: usize,
    pub scenario: Scenario,
    #[serde(default)]
    pub guide: GuideChoice,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub reference: Vec<ReferenceValue>,
}

fn default_levels() -> usize {
    4
}

/// Tolerance on published PSNR values for the classical images.
pub const REFERENCE_TOLERANCE_DB: f64 = 0.7;

fn refs(pairs: &[(&str, f64)]) -> Vec<ReferenceValue> {
    pairs
        .iter()
        .map(|&(t, p)| ReferenceValue {
            target: t.to_string(),
            psnr_db: p,
            tolerance_db: REFERENCE_TOLERANCE_DB,
        })
        .collect()
}

fn four_methods(tv_alg1: usize, tv_bos: usize, nl_alg1: usize, nl_bos: usize, nl_lambda: f64) -> Vec<MethodSpec> {
    vec![
        MethodSpec::new(Reg::Tv, Solver::Bos, tv_bos),
        MethodSpec::new(Reg::Tv, Solver::Alg1, tv_alg1),
        MethodSpec::new(Reg::Nltv, Solver::Bos, nl_bos),
        MethodSpec::new(Reg::Nltv, Solver::Alg1, nl_alg1).with_lambda(nl_lambda),
    ]
}

fn tv_methods(iters: usize) -> Vec<MethodSpec> {
    vec![
        MethodSpec::new(Reg::Tv, Solver::Bos, iters),
        MethodSpec::new(Reg::Tv, Solver::Alg1, iters),
    ]
}

fn subband(band: DetailBand) -> Scenario {
    Scenario {
        loss: Loss::Subband { band, level_size: 32 },
        sigma: 0.0,
        seed: 1,
    }
}

fn random(keep: f64, keep_ll: bool, sigma: f64) -> Scenario {
    Scenario {
        loss: Loss::Random { keep, keep_ll },
        sigma,
        seed: 1,
    }
}

fn preset(
    name: &str,
    image: &str,
    substitute: &str,
    scenario: Scenario,
    methods: Vec<MethodSpec>,
    reference: &[(&str, f64)],
) -> BenchmarkPreset {
    BenchmarkPreset {
        name: name.to_string(),
        image: image.to_string(),
        substitute: substitute.to_string(),
        levels: 4,
        scenario,
        guide: GuideChoice::default(),
        methods,
        reference: refs(reference),
    }
}

/// Every built-in preset.
pub fn builtin_presets() -> Vec<BenchmarkPreset> {
    use DetailBand::{Hl, Lh};
    let mut out = vec![
        preset(
            "barbara-hl",
            "barbara",
            "brick.pgm",
            subband(Hl),
            four_methods(15, 15, 25, 15, 30.0),
            &[
                ("received", 29.13),
                ("tv-bos", 31.92),
                ("tv-alg1", 32.03),
                ("nltv-bos", 34.31),
                ("nltv-alg1", 34.41),
            ],
        ),
        preset(
            "barbara-random60",
            "barbara",
            "brick.pgm",
            random(0.6, false, 0.0),
            four_methods(15, 15, 25, 25, 30.0),
            &[
                ("interpolated", 19.65),
                ("tv-bos", 22.09),
                ("tv-alg1", 22.15),
                ("nltv-bos", 24.84),
                ("nltv-alg1", 24.85),
            ],
        ),
        preset(
            "lena-lh",
            "lena",
            "astronaut.pgm",
            subband(Lh),
            four_methods(20, 15, 25, 15, 50.0),
            &[
                ("received", 24.88),
                ("tv-bos", 31.34),
                ("tv-alg1", 31.32),
                ("nltv-bos", 33.36),
                ("nltv-alg1", 33.39),
            ],
        ),
        preset(
            "lena-random50h",
            "lena",
            "astronaut.pgm",
            random(0.5, true, 0.0),
            four_methods(15, 15, 25, 15, 50.0),
            &[
                ("received", 22.65),
                ("tv-bos", 26.10),
                ("tv-alg1", 26.08),
                ("nltv-bos", 26.83),
                ("nltv-alg1", 26.82),
            ],
        ),
    ];
    let table = [
        ("cameraman", "camera.pgm", [(35.57, 35.54), (35.98, 36.19), (24.88, 24.84), (27.76, 27.55)]),
        ("goldhill", "rocket.pgm", [(32.13, 32.44), (31.87, 32.22), (24.95, 24.98), (26.25, 26.33)]),
    ];
    for (image, file, rows) in table {
        let scenarios = [
            ("hl", subband(Hl), 15),
            ("lh", subband(Lh), 15),
            ("random50h", random(0.5, true, 0.0), 15),
            ("random30", random(0.7, false, 0.0), 25),
        ];
        for ((suffix, scenario, iters), (bos, alg1)) in scenarios.into_iter().zip(rows) {
            out.push(preset(
                &format!("{image}-{suffix}"),
                image,
                file,
                scenario,
                tv_methods(iters),
                &[("tv-bos", bos), ("tv-alg1", alg1)],
            ));
        }
    }
    out.push(preset(
        "barbara128-noise",
        "barbara128",
        "brick128.pgm",
        random(0.6, false, 0.02),
        four_methods(15, 15, 15, 15, 40.0),
        &[
            ("interpolated", 23.49),
            ("tv-bos", 23.99),
            ("tv-alg1", 24.14),
            ("nltv-bos", 27.94),
            ("nltv-alg1", 28.35),
        ],
    ));
    out.push(preset(
        "cameraman-noise",
        "cameraman",
        "camera.pgm",
        random(0.7, false, 0.02),
        tv_methods(15),
        &[("interpolated", 20.49), ("tv-bos", 25.89), ("tv-alg1", 25.89)],
    ));
    out
}

pub fn find_preset(name: &str) -> anyhow::Result<BenchmarkPreset> {
    match builtin_presets().into_iter().find(|p| p.name == name) {
        Some(p) => Ok(p),
        None => {
            let names: Vec<String> = builtin_presets().into_iter().map(|p| p.name).collect();
            bail!("unknown preset {name:?}; available: {}", names.join(", "))
        }
    }
}

pub fn load_preset_file(path: &Path) -> anyhow::Result<BenchmarkPreset> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing preset {}", path.display()))
}

pub fn preset_to_json(p: &BenchmarkPreset) -> String {
    serde_json::to_string_pretty(p).expect("presets serialize")
}

/// Where a preset's image comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedImage {
    pub path: PathBuf,
    /// True when the classical image itself was found.
    pub canonical: bool,
}

pub const CANONICAL_DIR_ENV: &str = "WIM_CANONICAL_DIR";

/// Looks for `<image>.pgm` / `<image>.png` in `canonical_dir`, falling
/// back to the bundled substitute in `data_dir`.
pub fn resolve_image(
    preset: &BenchmarkPreset,
    data_dir: &Path,
    canonical_dir: Option<&Path>,
) -> anyhow::Result<ResolvedImage> {
    if let Some(dir) = canonical_dir {
        for ext in ["pgm", "png"] {
            let p = dir.join(format!("{}.{ext}", preset.image));
            if p.is_file() {
                return Ok(ResolvedImage {
                    path: p,
                    canonical: true,
                });
            }
        }
    }
    let p = data_dir.join(&preset.substitute);
    if !p.is_file() {
        bail!("image {} not found for preset {}", p.display(), preset.name);
    }
    Ok(ResolvedImage {
        path: p,
        canonical: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_round_trip() {
        let all = builtin_presets();
        let mut names: Vec<&str> = all.iter().map(|p| p.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), all.len());
        for p in &all {
            let back: BenchmarkPreset = serde_json::from_str(&preset_to_json(p)).unwrap();
            assert_eq!(&back, p);
        }
        assert!(find_preset("cameraman-hl").is_ok());
        assert!(find_preset("goldhill-random30").is_ok());
        assert!(find_preset("nope").is_err());
    }

    #[test]
    fn method_config_uses_overrides_and_defaults() {
        let m = MethodSpec::new(Reg::Nltv, Solver::Alg1, 25).with_lambda(30.0);
        assert_eq!(m.label(), "nltv-alg1");
        let cfg = m.config(0.0);
        assert_eq!(cfg.lambda, 30.0);
        assert_eq!(cfg.mu, 0.01);
        assert_eq!(cfg.max_outer, 25);
        let tv = MethodSpec::new(Reg::Tv, Solver::Bos, 15).config(0.02);
        assert_eq!((tv.mu, tv.delta, tv.inner_pfbs, tv.noise_sigma), (0.05, 1.0, 10, 0.02));
    }

    #[test]
    fn random30_keeps_seventy_percent() {
        let p = find_preset("goldhill-random30").unwrap();
        let layout = Layout::new(256, 256, 4).unwrap();
        let mask = p.scenario.loss.mask(layout, p.scenario.seed).unwrap();
        assert_eq!(mask.known_count(), (0.7f64 * 65536.0).round() as usize);
    }
}
