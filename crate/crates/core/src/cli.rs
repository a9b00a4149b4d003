//! Command-line front end.
//!
//! Subcommands: `phantom`, `simulate`, `denoise`, `benchmark` and
//! `sweep-k`. Exit codes are 0 on success, 1 for usage errors, 2 for I/O
//! and format errors and 3 for numeric failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::datafit::DataFit;
use crate::harness::{self, ExperimentSpec, Manifest, NamedImage, TauSelection};
use crate::image::{shepp_logan_variant, PhantomVariant};
use crate::io;
use crate::optim::{denoise, SolverConfig};
use crate::reparam::ReparamFamily;
use crate::{rmse_relative, scale_to, Error, Image, IntensityRange, NoiseModel, ScaleMode, Seed};

#[derive(Debug, Parser)]
#[command(
    name = "reparam-denoise",
    version,
    about = "Reparameterized TV denoising for Bernoulli, Poisson and speckle noise"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a Shepp-Logan phantom as 8-bit PGM.
    Phantom(PhantomArgs),
    /// Draw one noisy observation of a (rescaled) truth image.
    Simulate(SimulateArgs),
    /// Denoise an observation.
    Denoise(DenoiseArgs),
    /// Compare one k against the baseline on the phantom or an image bank.
    Benchmark(SweepArgs),
    /// Sweep the k grid over an image bank and write the risk table.
    SweepK(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Bernoulli,
    Poisson,
    Speckle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Modified,
    Original,
}

impl From<VariantArg> for PhantomVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Modified => PhantomVariant::Modified,
            VariantArg::Original => PhantomVariant::Original,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelOpts {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Number of looks for speckle.
    #[arg(long, default_value_t = 3)]
    pub looks: u32,
}

impl ModelOpts {
    fn model(&self) -> crate::Result<NoiseModel> {
        match self.model {
            ModelArg::Bernoulli => Ok(NoiseModel::Bernoulli),
            ModelArg::Poisson => Ok(NoiseModel::Poisson),
            ModelArg::Speckle => NoiseModel::speckle(self.looks),
        }
    }
}

#[derive(Debug, Args)]
pub struct ScaleOpts {
    /// Rescale truth images to this mean.
    #[arg(long, conflicts_with = "scale_range")]
    pub scale_mean: Option<f64>,
    /// Rescale truth images affinely onto `lo,hi`.
    #[arg(long, value_parser = parse_range)]
    pub scale_range: Option<IntensityRange>,
}

impl ScaleOpts {
    fn mode(&self) -> Option<ScaleMode> {
        match (self.scale_mean, self.scale_range) {
            (Some(m), _) => Some(ScaleMode::Mean(m)),
            (None, Some(r)) => Some(ScaleMode::Range(r)),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolverOpts {
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative-change stopping tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// FGP iterations per proximal step.
    #[arg(long)]
    pub inner_iters: Option<usize>,
}

impl SolverOpts {
    fn config(&self) -> SolverConfig {
        let mut c = SolverConfig::default();
        if let Some(v) = self.max_iters {
            c.max_outer_iters = v;
        }
        if let Some(v) = self.tol {
            c.rel_tol = v;
        }
        if let Some(v) = self.inner_iters {
            c.inner_iters = v;
        }
        c
    }
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Side length in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, value_enum, default_value_t = VariantArg::Modified)]
    pub variant: VariantArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelOpts,
    /// Truth image (PGM, PNG or RF32).
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub scale: ScaleOpts,
    #[arg(long, default_value_t = Seed::DEFAULT.0)]
    pub seed: u64,
    /// Observation file: PGM for Bernoulli and Poisson, RF32 for speckle.
    #[arg(long)]
    pub out: PathBuf,
    /// Also store the rescaled truth as RF32.
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[command(flatten)]
    pub model: ModelOpts,
    /// Observation file.
    #[arg(long)]
    pub input: PathBuf,
    /// Reparameterization parameter; a rule of thumb is used when omitted.
    #[arg(long, conflicts_with = "baseline")]
    pub k: Option<f64>,
    /// Solve the plain likelihood in the intensities instead.
    #[arg(long)]
    pub baseline: bool,
    /// Regularization weight. Without it, `--truth` is required and τ is
    /// chosen over `--tau-grid` to minimize the RMSE.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_parser = parse_tau_grid)]
    pub tau_grid: Option<Grid>,
    /// Ground truth for reporting RMSE.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Rescaling applied to `--truth` before comparison.
    #[command(flatten)]
    pub scale: ScaleOpts,
    #[command(flatten)]
    pub solver: SolverOpts,
    /// Estimate: RF32 if the name ends in `.rf32`, 8-bit PGM otherwise.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    PerImage,
    PerRealization,
    Pilot,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelOpts,
    /// Truth images; the phantom is used when none are given.
    #[arg(long, num_args = 1..)]
    pub images: Vec<PathBuf>,
    /// Phantom side length when no images are given.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[command(flatten)]
    pub scale: ScaleOpts,
    /// Single k (benchmark); defaults to the rule of thumb.
    #[arg(long)]
    pub k: Option<f64>,
    /// k values as `a,b,c` or `start:step:end`.
    #[arg(long, value_parser = parse_k_grid)]
    pub k_grid: Option<Grid>,
    /// τ values as `a,b,c` or `lo:hi:count` (log spaced).
    #[arg(long, value_parser = parse_tau_grid)]
    pub tau_grid: Option<Grid>,
    #[arg(long, default_value_t = 5)]
    pub realizations: usize,
    #[arg(long, default_value_t = Seed::DEFAULT.0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SelectionArg::PerImage)]
    pub tau_selection: SelectionArg,
    /// Realizations used to pick τ under `--tau-selection pilot`.
    #[arg(long, default_value_t = 1)]
    pub pilot: usize,
    /// Weight of the inverse Lipschitz term in the tradeoff score.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[command(flatten)]
    pub solver: SolverOpts,
    /// Risk table.
    #[arg(long)]
    pub csv: PathBuf,
    /// JSON manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Risk-versus-k curve.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

/// A list of grid values given as one argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn parse_range(s: &str) -> Result<IntensityRange, String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    IntensityRange::new(lo, hi).map_err(|e| e.to_string())
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect()
}

fn parse_triple(s: &str) -> Result<(f64, f64, f64), String> {
    let parts = parse_list(&s.replace(':', ","))?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err("expected three values".into()),
    }
}

fn parse_k_grid(s: &str) -> Result<Grid, String> {
    if !s.contains(':') {
        return parse_list(s).map(Grid);
    }
    let (start, step, end) = parse_triple(s)?;
    if !(step > 0.0 && end >= start) {
        return Err("need step > 0 and end ≥ start".into());
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok(Grid(
        (0..=n)
            .map(|i| ((start + step * i as f64) * 1e9).round() / 1e9)
            .collect(),
    ))
}

fn parse_tau_grid(s: &str) -> Result<Grid, String> {
    if !s.contains(':') {
        return parse_list(s).map(Grid);
    }
    let (lo, hi, count) = parse_triple(s)?;
    if !(lo > 0.0 && hi >= lo && count >= 1.0 && count.fract() == 0.0) {
        return Err("need 0 < lo ≤ hi and an integer count ≥ 1".into());
    }
    Ok(Grid(harness::log_grid(lo, hi, count as usize)))
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. }
        | Error::UnsupportedFormat(_)
        | Error::Malformed(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        Error::Numeric(_) | Error::Domain(_) => 3,
        Error::DimensionMismatch { .. } | Error::InvalidImage(_) | Error::InvalidArgument(_) => 1,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Progress goes to stdout, errors to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> crate::Result<()> {
    match command {
        Command::Phantom(a) => phantom(a),
        Command::Simulate(a) => simulate(a),
        Command::Denoise(a) => run_denoise(a),
        Command::Benchmark(a) => run_sweep(a, true),
        Command::SweepK(a) => run_sweep(a, false),
    }
}

fn phantom(a: PhantomArgs) -> crate::Result<()> {
    let image = shepp_logan_variant(a.size, a.size, a.variant.into())?;
    io::write_image(&image, &a.out, IntensityRange::new(0.0, 1.0)?)?;
    println!("wrote {}x{} phantom to {}", a.size, a.size, a.out.display());
    Ok(())
}

fn load_truth(path: &Path, scale: &ScaleOpts) -> crate::Result<Image> {
    let image = io::read_image(path)?;
    match scale.mode() {
        Some(mode) => scale_to(&image, mode),
        None => Ok(image),
    }
}

fn simulate(a: SimulateArgs) -> crate::Result<()> {
    let model = a.model.model()?;
    let truth = load_truth(&a.input, &a.scale)?;
    let y = crate::noise::sample(model, &truth, Seed(a.seed))?;
    io::write_observation(model, &y, &a.out)?;
    if let Some(path) = &a.truth_out {
        io::write_rf32(&truth, path)?;
    }
    println!(
        "wrote {} observation (mean {:.4}) to {}",
        model.name(),
        y.mean(),
        a.out.display()
    );
    Ok(())
}

fn run_denoise(a: DenoiseArgs) -> crate::Result<()> {
    let model = a.model.model()?;
    let y = io::read_image(&a.input)?;
    let family = if a.baseline {
        ReparamFamily::Identity
    } else {
        harness::family_for(
            model,
            a.k.unwrap_or_else(|| harness::heuristic_k(model, &y)),
        )?
    };
    let truth = a
        .truth
        .as_deref()
        .map(|p| load_truth(p, &a.scale))
        .transpose()?;
    if let Some(t) = &truth {
        t.same_dims(&y)?;
    }
    let fit = DataFit::for_model(model, family, y.clone())?;
    let mut config = a.solver.config();

    let taus = match (a.tau, &truth) {
        (Some(tau), _) => vec![tau],
        (None, Some(_)) => a
            .tau_grid
            .clone()
            .map_or_else(harness::default_tau_grid, |g| g.0),
        (None, None) => {
            return Err(Error::InvalidArgument(
                "give --tau, or --truth to pick τ by RMSE".into(),
            ))
        }
    };
    let mut best: Option<(f64, f64, crate::SolveResult)> = None;
    for &tau in &taus {
        config.tau = tau;
        let result = denoise(&fit, &config, None)?;
        let score = match &truth {
            Some(t) => rmse_relative(&result.x_hat, t)?,
            None => 0.0,
        };
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, tau, result));
        }
    }
    let (score, tau, result) = best.expect("at least one τ");

    if a.out
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("rf32"))
    {
        io::write_rf32(&result.x_hat, &a.out)?;
    } else {
        let range = io::display_range(truth.as_ref().unwrap_or(&result.x_hat))?;
        io::write_image(&result.x_hat, &a.out, range)?;
    }
    println!("family {family}");
    println!("tau {tau}");
    println!(
        "iterations {} ({:?})",
        result.iterations, result.termination
    );
    if let Some(t) = &truth {
        println!("rmse {score:.6}");
        println!("rmse_observed {:.6}", rmse_relative(&y, t)?);
    }
    Ok(())
}

fn image_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn run_sweep(a: SweepArgs, single: bool) -> crate::Result<()> {
    let model = a.model.model()?;
    let images = if a.images.is_empty() {
        vec![NamedImage::new(
            "phantom",
            shepp_logan_variant(a.size, a.size, PhantomVariant::Modified)?,
        )]
    } else {
        a.images
            .iter()
            .map(|p| Ok(NamedImage::new(image_name(p), io::read_image(p)?)))
            .collect::<crate::Result<_>>()?
    };
    let mut spec = ExperimentSpec::new(images, model);
    if let Some(mode) = a.scale.mode() {
        spec.scaling = Some(mode);
        spec.family_grid = harness::default_family_grid(model, mode);
    }
    let scaling = spec.scaling.expect("default scaling");
    if single {
        let k = match a.k {
            Some(k) => k,
            None => {
                let truth = scale_to(&spec.images[0].image, scaling)?;
                harness::heuristic_k(model, &truth)
            }
        };
        spec.family_grid = vec![harness::family_for(model, k)?];
    } else if let Some(ks) = &a.k_grid {
        spec.family_grid =
            ks.0.iter()
                .map(|&k| harness::family_for(model, k))
                .collect::<crate::Result<_>>()?;
    }
    if let Some(taus) = a.tau_grid {
        spec.tau_grid = taus.0;
    }
    spec.realizations = a.realizations;
    spec.seed = Seed(a.seed);
    spec.lambda = a.lambda;
    spec.solver = a.solver.config();
    spec.tau_selection = match a.tau_selection {
        SelectionArg::PerImage => TauSelection::PerImage,
        SelectionArg::PerRealization => TauSelection::PerRealization,
        SelectionArg::Pilot => TauSelection::Pilot {
            realizations: a.pilot,
        },
    };

    let start = Instant::now();
    let report = harness::sweep(&spec)?;
    let elapsed = start.elapsed().as_secs_f64();

    report.table().write_csv(&a.csv)?;
    if let Some(path) = &a.out {
        let json = Manifest::new(&spec, &report, elapsed).to_json()?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
    }
    if let Some(path) = &a.curve {
        std::fs::write(path, report.curve_csv()?).map_err(|e| Error::io(path, e))?;
    }

    if let Some(b) = report.baseline_risk {
        println!("baseline {b:.6}");
    }
    for (family, risk) in report.families.iter().zip(&report.per_family_risk) {
        println!("{} {risk:.6}", harness::column_label(*family));
    }
    if !report.failures.is_empty() {
        eprintln!("warning: {} solves failed", report.failures.len());
    }
    println!("wrote {} in {elapsed:.1}s", a.csv.display());
    Ok(())
}
