//! Runs a preset: degrade, solve with every listed method, write images,
//! traces, a combined CSV and a summary table.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use wim_core::coeff::{degrade, F0Policy, ObservedData};
use wim_core::dwt::Layout;
use wim_core::image::{load_image, psnr, save_image, Image};
use wim_core::nltv::{build_weights, NlWeightGraph, NlWeightParams};
use wim_core::solvers::{nltv_guide, solve_algorithm1, solve_bos, SolverTrace, TRACE_HEADER};

use crate::plot::{render_svg, Series};
use crate::presets::{resolve_image, BenchmarkPreset, MethodSpec, Reg, Solver};

#[derive(Clone, Debug)]
pub struct MethodResult {
    pub spec: MethodSpec,
    /// PSNR of the written restored image.
    pub psnr_db: f64,
    pub iterations: usize,
    /// Solver time plus, for NL-TV, the guide and graph construction.
    pub time_s: f64,
    pub trace: SolverTrace,
    pub image_path: PathBuf,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub preset: BenchmarkPreset,
    pub image_path: PathBuf,
    pub canonical: bool,
    /// PSNR of the written received image (`inverse_dwt(beta)`).
    pub received_psnr: f64,
    /// PSNR of the written LL-interpolated image, when LL was lost.
    pub interpolated_psnr: Option<f64>,
    /// Time to build the NL-TV guide and weight graph.
    pub graph_setup_s: f64,
    pub methods: Vec<MethodResult>,
}

impl BenchReport {
    pub fn method(&self, label: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.spec.label() == label)
    }

    /// PSNR of a reference target (`received`, `interpolated` or a method
    /// label).
    pub fn measured(&self, target: &str) -> Option<f64> {
        match target {
            "received" => Some(self.received_psnr),
            "interpolated" => self.interpolated_psnr,
            other => self.method(other).map(|m| m.psnr_db),
        }
    }

    pub fn combined_csv(&self) -> String {
        let mut out = format!("method,{TRACE_HEADER}\n");
        for m in &self.methods {
            out.push_str(&m.trace.csv_rows(Some(&m.spec.label())));
        }
        out
    }

    pub fn summary(&self) -> String {
        let p = &self.preset;
        let mut s = String::new();
        let _ = writeln!(s, "preset: {}", p.name);
        let _ = writeln!(
            s,
            "image: {} ({})",
            self.image_path.display(),
            if self.canonical {
                format!("{}", p.image)
            } else {
                format!("stand-in for {}", p.image)
            }
        );
        let _ = writeln!(
            s,
            "scenario: {}, sigma {}, seed {}",
            p.scenario.loss.describe(),
            p.scenario.sigma,
            p.scenario.seed
        );
        let _ = writeln!(s, "received PSNR: {:.2} dB", self.received_psnr);
        if let Some(v) = self.interpolated_psnr {
            let _ = writeln!(s, "interpolated PSNR: {v:.2} dB");
        }
        if self.graph_setup_s > 0.0 {
            let _ = writeln!(s, "NL-TV guide + weights: {:.2} s", self.graph_setup_s);
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<18} {:>10} {:>6} {:>10} {:>10}",
            "method", "PSNR (dB)", "iter", "time (s)", "reference"
        );
        for m in &self.methods {
            let label = m.spec.label();
            let reference = p
                .reference
                .iter()
                .find(|r| r.target == label)
                .map(|r| format!("{:.2}", r.psnr_db))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:<18} {:>10.2} {:>6} {:>10.2} {:>10}",
                m.spec.title(),
                m.psnr_db,
                m.iterations,
                m.time_s,
                reference
            );
        }
        s
    }

    pub fn plot_series(&self) -> Vec<Series> {
        self.methods
            .iter()
            .map(|m| {
                let offset = if m.spec.reg == Reg::Nltv { self.graph_setup_s } else { 0.0 };
                Series {
                    label: m.spec.title(),
                    points: m
                        .trace
                        .records
                        .iter()
                        .filter_map(|r| r.psnr_db.map(|p| (r.elapsed_s + offset, p)))
                        .collect(),
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct BenchOptions {
    pub data_dir: PathBuf,
    pub canonical_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub plot: Option<PathBuf>,
}

fn write_and_measure(img: &Image, path: &Path, reference: &Image) -> anyhow::Result<f64> {
    save_image(img, path)?;
    let back = load_image(path)?;
    Ok(psnr(reference, &back)?)
}

pub fn observe(preset: &BenchmarkPreset, original: &Image) -> anyhow::Result<ObservedData> {
    let (w, h) = original.dims();
    let layout = Layout::new(w, h, preset.levels)?;
    let mask = preset.scenario.loss.mask(layout, preset.scenario.seed)?;
    Ok(degrade(
        original,
        &mask,
        preset.scenario.sigma,
        preset.scenario.seed,
        F0Policy::Auto,
    )?)
}

pub fn run_preset(preset: &BenchmarkPreset, opts: &BenchOptions) -> anyhow::Result<BenchReport> {
    let resolved = resolve_image(preset, &opts.data_dir, opts.canonical_dir.as_deref())?;
    let original = load_image(&resolved.path)?;
    let observed = observe(preset, &original)?;
    fs::create_dir_all(&opts.out_dir)
        .with_context(|| format!("creating {}", opts.out_dir.display()))?;

    let received_psnr = write_and_measure(
        observed.received(),
        &opts.out_dir.join("received.pgm"),
        &original,
    )?;
    let interpolated_psnr = if observed.mask().lowpass_incomplete() {
        Some(write_and_measure(
            observed.f0(),
            &opts.out_dir.join("interpolated.pgm"),
            &original,
        )?)
    } else {
        None
    };

    let sigma = preset.scenario.sigma;
    let mut graph_setup_s = 0.0;
    let graph: Option<NlWeightGraph> = if preset.methods.iter().any(|m| m.reg == Reg::Nltv) {
        let t = Instant::now();
        let guide = nltv_guide(&observed, preset.guide.source(), sigma)?;
        let g = build_weights(&guide, &NlWeightParams::default())?;
        graph_setup_s = t.elapsed().as_secs_f64();
        Some(g)
    } else {
        None
    };

    let methods = preset
        .methods
        .par_iter()
        .map(|spec| -> anyhow::Result<MethodResult> {
            let cfg = spec.config(sigma);
            let gph = match spec.reg {
                Reg::Tv => None,
                Reg::Nltv => graph.as_ref(),
            };
            let (img, trace) = match spec.solver {
                Solver::Alg1 => solve_algorithm1(&observed, &cfg, gph, Some(&original)),
                Solver::Bos => solve_bos(&observed, &cfg, gph, Some(&original)),
            }
            .with_context(|| format!("{} on preset {}", spec.label(), preset.name))?;
            let label = spec.label();
            let image_path = opts.out_dir.join(format!("{label}.pgm"));
            let psnr_db = write_and_measure(&img, &image_path, &original)?;
            trace.write_csv(&opts.out_dir.join(format!("{label}.csv")))?;
            let setup = if spec.reg == Reg::Nltv { graph_setup_s } else { 0.0 };
            Ok(MethodResult {
                spec: spec.clone(),
                psnr_db,
                iterations: trace.iterations(),
                time_s: trace.elapsed_s() + setup,
                trace,
                image_path,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let report = BenchReport {
        preset: preset.clone(),
        image_path: resolved.path,
        canonical: resolved.canonical,
        received_psnr,
        interpolated_psnr,
        graph_setup_s,
        methods,
    };
    let csv_path = opts.out_dir.join("bench.csv");
    fs::write(&csv_path, report.combined_csv())
        .with_context(|| format!("writing {}", csv_path.display()))?;
    let summary_path = opts.out_dir.join("summary.txt");
    fs::write(&summary_path, report.summary())
        .with_context(|| format!("writing {}", summary_path.display()))?;
    if let Some(plot) = &opts.plot {
        let svg = render_svg(&format!("{}: PSNR vs CPU time", preset.name), &report.plot_series());
        fs::write(plot, svg).with_context(|| format!("writing {}", plot.display()))?;
    }
    Ok(report)
}
