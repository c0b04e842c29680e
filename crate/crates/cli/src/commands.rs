use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use wim_core::coeff::{beta_path, degrade, read_observed, write_observed, F0Policy, ObservedData};
use wim_core::dwt::Layout;
use wim_core::image::{load_image, psnr, save_image, Image};
use wim_core::nltv::{build_weights, NlWeightParams};
use wim_core::solvers::{
    nltv_guide, solve_algorithm1, solve_bos, AdjointMode, Init, NoiseThreshold, OutputRule,
    SolverConfig, SolverTrace,
};

use crate::bench::{run_preset, BenchOptions, BenchReport};
use crate::plot::{render_svg, Series};
use crate::presets::{
    builtin_presets, find_preset, load_preset_file, preset_to_json, DetailBand, GuideChoice, Loss,
    MethodSpec, Reg, Solver, CANONICAL_DIR_ENV,
};

#[derive(Parser, Debug)]
#[command(name = "wim", version, about = "Wavelet-domain image inpainting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate coefficient loss (and noise) on an image.
    Degrade(DegradeArgs),
    /// Restore an image from a mask and its received coefficients.
    Inpaint(InpaintArgs),
    /// Run a benchmark preset.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    /// Input image (PGM or grayscale PNG).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output mask file; coefficients go next to it with a `.beta` extension.
    #[arg(long)]
    pub mask: PathBuf,
    /// Lose a whole detail subband.
    #[arg(long, value_enum, conflicts_with = "random_keep")]
    pub subband: Option<DetailBand>,
    /// Side length of the lost subband.
    #[arg(long, default_value_t = 32)]
    pub level_size: usize,
    /// Keep this fraction of coefficients, chosen at random.
    #[arg(long)]
    pub random_keep: Option<f64>,
    /// With --random-keep, keep the whole LL band.
    #[arg(long, requires = "random_keep")]
    pub keep_ll: bool,
    /// Standard deviation of Gaussian noise on the received coefficients.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Reference image for the printed PSNR (defaults to --in).
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InpaintArgs {
    /// Mask file written by `degrade`.
    #[arg(long)]
    pub mask: PathBuf,
    /// Restored image.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tv")]
    pub reg: Reg,
    #[arg(long, value_enum, default_value = "alg1")]
    pub solver: Solver,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Inner forward-backward steps per BOS iteration.
    #[arg(long)]
    pub inner: Option<usize>,
    #[arg(long, default_value_t = 25)]
    pub max_outer: usize,
    #[arg(long)]
    pub stop_tol: Option<f64>,
    #[arg(long)]
    pub prox_iters: Option<usize>,
    #[arg(long)]
    pub prox_tol: Option<f64>,
    /// Trace CSV output.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// SVG plot of PSNR against time (needs --ref).
    #[arg(long, requires = "reference")]
    pub plot: Option<PathBuf>,
    /// Starting iterate of the decomposition solver.
    #[arg(long, value_enum, default_value = "f0")]
    pub init: InitArg,
    /// Override the returned image (default: composed when noise-free,
    /// iterate when noisy).
    #[arg(long, value_enum)]
    pub output: Option<OutputArg>,
    /// Use the noise level itself as the stopping threshold.
    #[arg(long)]
    pub literal_noise_threshold: bool,
    /// Use the exact transpose of the analysis transform in BOS.
    #[arg(long)]
    pub exact_adjoint: bool,
    /// Image the NL-TV weights are computed from.
    #[arg(long, value_enum, default_value = "tv-prepass")]
    pub guide: GuideChoice,
    /// Write the NL-TV weight graph as `x y w` lines.
    #[arg(long)]
    pub graph_dump: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum InitArg {
    F0,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputArg {
    Composed,
    Iterate,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Built-in preset name.
    #[arg(long, required_unless_present_any = ["preset_file", "list"])]
    pub preset: Option<String>,
    /// Preset as JSON.
    #[arg(long, conflicts_with = "preset")]
    pub preset_file: Option<PathBuf>,
    /// List built-in presets and exit.
    #[arg(long)]
    pub list: bool,
    /// Print the preset as JSON and exit.
    #[arg(long)]
    pub dump: bool,
    /// Directory holding the bundled images.
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    /// Directory of classical test images, `<name>.pgm` or `<name>.png`.
    #[arg(long, env = CANONICAL_DIR_ENV)]
    pub canonical_dir: Option<PathBuf>,
    #[arg(long, default_value = "bench-out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Degrade(a) => cmd_degrade(&a),
        Command::Inpaint(a) => cmd_inpaint(&a).map(|_| ()),
        Command::Bench(a) => cmd_bench(&a).map(|_| ()),
    }
}

/// Path of an image written next to the mask file: `<stem>.<tag>.pgm`.
pub fn sibling(mask: &Path, tag: &str) -> PathBuf {
    let stem = mask.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    mask.with_file_name(format!("{stem}.{tag}.pgm"))
}

pub fn cmd_degrade(a: &DegradeArgs) -> anyhow::Result<()> {
    let original = load_image(&a.input)?;
    let (w, h) = original.dims();
    let layout = Layout::new(w, h, a.levels)?;
    let loss = match (a.subband, a.random_keep) {
        (Some(band), None) => Loss::Subband {
            band,
            level_size: a.level_size,
        },
        (None, Some(keep)) => Loss::Random {
            keep,
            keep_ll: a.keep_ll,
        },
        _ => bail!("give exactly one of --subband or --random-keep"),
    };
    let mask = loss.mask(layout, a.seed)?;
    let observed = degrade(&original, &mask, a.sigma, a.seed, F0Policy::Auto)?;
    if let Some(dir) = a.mask.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_observed(&a.mask, &observed)?;
    let received_path = sibling(&a.mask, "received");
    save_image(observed.received(), &received_path)?;
    let interp_path = if observed.mask().lowpass_incomplete() {
        let p = sibling(&a.mask, "interpolated");
        save_image(observed.f0(), &p)?;
        Some(p)
    } else {
        None
    };

    println!(
        "{}: {} of {} coefficients lost",
        loss.describe(),
        mask.unknown_count(),
        layout.len()
    );
    println!("mask: {}", a.mask.display());
    println!("coefficients: {}", beta_path(&a.mask).display());
    println!("received image: {}", received_path.display());
    let reference = match &a.reference {
        Some(p) => load_image(p)?,
        None => original,
    };
    println!(
        "received PSNR={:.2}dB",
        psnr(&reference, &load_image(&received_path)?)?
    );
    if let Some(p) = interp_path {
        println!("interpolated image: {}", p.display());
        println!("interpolated PSNR={:.2}dB", psnr(&reference, &load_image(&p)?)?);
    }
    Ok(())
}

fn inpaint_config(a: &InpaintArgs, observed: &ObservedData) -> SolverConfig {
    let mut spec = MethodSpec::new(a.reg, a.solver, a.max_outer);
    spec.lambda = a.lambda;
    spec.mu = a.mu;
    spec.delta = a.delta;
    spec.inner = a.inner;
    spec.stop_tol = a.stop_tol;
    spec.prox_iters = a.prox_iters;
    spec.prox_tol = a.prox_tol;
    let mut cfg = spec.config(observed.noise_sigma());
    cfg.init = match a.init {
        InitArg::F0 => Init::KnownComponent,
        InitArg::Zero => Init::Zero,
    };
    if let Some(o) = a.output {
        cfg.output_rule = match o {
            OutputArg::Composed => OutputRule::Composed,
            OutputArg::Iterate => OutputRule::Iterate,
        };
    }
    if a.literal_noise_threshold {
        cfg.noise_threshold = NoiseThreshold::Literal;
    }
    if a.exact_adjoint {
        cfg.adjoint = AdjointMode::ExactTranspose;
    }
    cfg
}

pub struct InpaintOutcome {
    pub image: Image,
    pub trace: SolverTrace,
    pub psnr_db: Option<f64>,
}

pub fn cmd_inpaint(a: &InpaintArgs) -> anyhow::Result<InpaintOutcome> {
    let observed = read_observed(&a.mask, F0Policy::Auto)?;
    let reference = a.reference.as_ref().map(load_image).transpose()?;
    let cfg = inpaint_config(a, &observed);
    cfg.validate()?;

    let start = Instant::now();
    let graph = if a.reg == Reg::Nltv {
        let guide = nltv_guide(&observed, a.guide.source(), observed.noise_sigma())?;
        let g = build_weights(&guide, &NlWeightParams::default())?;
        if let Some(p) = &a.graph_dump {
            let file = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            g.write_dump(BufWriter::new(file))
                .with_context(|| format!("writing {}", p.display()))?;
        }
        Some(g)
    } else {
        None
    };
    let setup_s = start.elapsed().as_secs_f64();

    let (image, trace) = match a.solver {
        Solver::Alg1 => solve_algorithm1(&observed, &cfg, graph.as_ref(), reference.as_ref()),
        Solver::Bos => solve_bos(&observed, &cfg, graph.as_ref(), reference.as_ref()),
    }?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    save_image(&image, &a.out)?;
    if let Some(p) = &a.trace {
        trace.write_csv(p)?;
    }
    let psnr_db = match &reference {
        Some(r) => Some(psnr(r, &load_image(&a.out)?)?),
        None => None,
    };
    let title = format!("{}-{}", a.reg.display(), a.solver.display());
    let cpu = setup_s + trace.elapsed_s();
    match psnr_db {
        Some(p) => println!(
            "{title}, PSNR={p:.2}dB, iter={}, CPU time={cpu:.2}s",
            trace.iterations()
        ),
        None => println!("{title}, iter={}, CPU time={cpu:.2}s", trace.iterations()),
    }
    if let Some(p) = &a.plot {
        let series = Series {
            label: title.clone(),
            points: trace
                .records
                .iter()
                .filter_map(|r| r.psnr_db.map(|v| (r.elapsed_s + setup_s, v)))
                .collect(),
        };
        fs::write(p, render_svg(&title, &[series]))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(InpaintOutcome {
        image,
        trace,
        psnr_db,
    })
}

pub fn cmd_bench(a: &BenchArgs) -> anyhow::Result<Option<BenchReport>> {
    if a.list {
        for p in builtin_presets() {
            println!("{:<20} {:<11} {}", p.name, p.image, p.scenario.loss.describe());
        }
        return Ok(None);
    }
    let preset = match (&a.preset, &a.preset_file) {
        (Some(name), _) => find_preset(name)?,
        (None, Some(path)) => load_preset_file(path)?,
        (None, None) => bail!("give --preset or --preset-file"),
    };
    if a.dump {
        println!("{}", preset_to_json(&preset));
        return Ok(None);
    }
    let opts = BenchOptions {
        data_dir: a.data_dir.clone(),
        canonical_dir: a.canonical_dir.clone(),
        out_dir: a.out_dir.clone(),
        plot: a.plot.clone(),
    };
    let report = run_preset(&preset, &opts)?;
    print!("{}", report.summary());
    Ok(Some(report))
}
