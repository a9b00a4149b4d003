//! Experiment orchestration: noisy realizations, clairvoyant τ selection,
//! sweeps over reparameterization families, empirical risk and the tables,
//! curves and manifests that summarize a run.
//!
//! The empirical risk of a family `f` over `n` images and `m` realizations is
//!
//! ```text
//! R̂(f) = 1/n Σᵢ min_τ 1/m Σⱼ ‖x̂ᵢⱼ(τ) − x*ᵢ‖ / ‖x*ᵢ‖
//! ```
//!
//! with the τ minimum taken per image. [`TauSelection::PerRealization`]
//! moves the minimum inside the realization average instead.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datafit::DataFit;
use crate::image::{rmse_relative, scale_to, Image, IntensityRange, ScaleMode};
use crate::io::Table;
use crate::noise::{self, NoiseModel, Seed};
use crate::optim::{denoise, SolveResult, SolverConfig};
use crate::reparam::ReparamFamily;
use crate::{Error, Result};

/// A ground-truth image with the label used in tables.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedImage {
    pub name: String,
    pub image: Image,
}

impl NamedImage {
    pub fn new(name: impl Into<String>, image: Image) -> Self {
        Self {
            name: name.into(),
            image,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSelection {
    /// One τ per image, minimizing the realization-averaged RMSE.
    #[default]
    PerImage,
    /// One τ per realization, minimizing that realization's RMSE.
    PerRealization,
    /// One τ per image chosen on the first `realizations` draws; every
    /// draw is then scored at that τ only.
    Pilot { realizations: usize },
}

/// Where the observations come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observations {
    /// Drawn from the noise model.
    #[default]
    Simulated,
    /// `y = x*`, for checking the pipeline on perfect data.
    Exact,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub images: Vec<NamedImage>,
    pub model: NoiseModel,
    pub realizations: usize,
    pub family_grid: Vec<ReparamFamily>,
    /// Strictly increasing, nonnegative.
    pub tau_grid: Vec<f64>,
    /// Applied to every truth image before sampling; `None` keeps them as given.
    pub scaling: Option<ScaleMode>,
    pub seed: Seed,
    pub solver: SolverConfig,
    pub tau_selection: TauSelection,
    pub include_baseline: bool,
    /// Solve the τ grid from largest to smallest, starting each solve at
    /// the previous estimate.
    pub warm_start: bool,
    /// Extra τ values tried on each side while the selected τ sits on the
    /// edge of the grid.
    pub max_widen: usize,
    /// Weight of the inverse Lipschitz term in the tradeoff score.
    pub lambda: f64,
    pub observations: Observations,
}

impl ExperimentSpec {
    /// Defaults for `model`: the model's scaling, k grid and τ grid, 20
    /// realizations, a baseline column and per-image τ selection.
    pub fn new(images: Vec<NamedImage>, model: NoiseModel) -> Self {
        let scaling = default_scaling(model);
        Self {
            images,
            model,
            realizations: 20,
            family_grid: default_family_grid(model, scaling),
            tau_grid: default_tau_grid(),
            scaling: Some(scaling),
            seed: Seed::DEFAULT,
            solver: SolverConfig::default(),
            tau_selection: TauSelection::PerImage,
            include_baseline: true,
            warm_start: false,
            max_widen: 6,
            lambda: 0.0,
            observations: Observations::Simulated,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("experiment: {msg}")));
        if self.images.is_empty() {
            return bad("no images".into());
        }
        if self.realizations == 0 {
            return bad("need at least one realization".into());
        }
        if self.tau_selection == (TauSelection::Pilot { realizations: 0 }) {
            return bad("pilot needs at least one realization".into());
        }
        if self.family_grid.is_empty() && !self.include_baseline {
            return bad("family grid is empty".into());
        }
        if self.tau_grid.is_empty() {
            return bad("tau grid is empty".into());
        }
        if self.tau_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad("tau values must be finite and nonnegative".into());
        }
        if self.tau_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("tau grid must be strictly increasing".into());
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        self.solver.validate()?;
        let probe = Image::filled(1, 1, 0.5)?;
        for family in &self.family_grid {
            family.validate()?;
            DataFit::for_model(self.model, *family, probe.clone())?;
        }
        Ok(())
    }

    fn truths(&self) -> Result<Vec<Image>> {
        self.images
            .iter()
            .map(|named| match self.scaling {
                Some(mode) => scale_to(&named.image, mode),
                None => Ok(named.image.clone()),
            })
            .collect()
    }

    fn observe(&self, truth: &Image, image: usize, realization: usize) -> Result<Image> {
        match self.observations {
            Observations::Exact => Ok(truth.clone()),
            Observations::Simulated => noise::sample(
                self.model,
                truth,
                self.seed.derive(image as u64, realization as u64),
            ),
        }
    }
}

pub fn default_scaling(model: NoiseModel) -> ScaleMode {
    match model {
        NoiseModel::Bernoulli => {
            ScaleMode::Range(IntensityRange::new(0.0, 1.0).expect("unit range"))
        }
        NoiseModel::Poisson => ScaleMode::Mean(10.0),
        NoiseModel::Speckle { .. } => ScaleMode::Mean(3.0),
    }
}

/// The k grids of the result tables: Bernoulli 0.05..0.50 in steps of
/// 0.05, Poisson ten evenly spaced k up to the target mean (0.5..5 at
/// mean 5, 1..10 at mean 10), speckle 0.25..2.0 in steps of 0.25.
pub fn default_family_grid(model: NoiseModel, scaling: ScaleMode) -> Vec<ReparamFamily> {
    match model {
        NoiseModel::Bernoulli => (1..=10)
            .map(|i| ReparamFamily::BernoulliK(round_k(0.05 * f64::from(i))))
            .collect(),
        NoiseModel::Poisson => {
            let level = match scaling {
                ScaleMode::Mean(m) => m,
                ScaleMode::Range(r) => 0.5 * (r.lo() + r.hi()),
            };
            (1..=10)
                .map(|i| ReparamFamily::PoissonLogExpK(round_k(level * f64::from(i) / 10.0)))
                .collect()
        }
        NoiseModel::Speckle { .. } => (1..=8)
            .map(|i| ReparamFamily::SpeckleK(round_k(0.25 * f64::from(i))))
            .collect(),
    }
}

/// Strips float noise such as `0.15000000000000002` from grid values.
fn round_k(k: f64) -> f64 {
    (k * 1e9).round() / 1e9
}

/// 25 logarithmically spaced values on `[1e-2, 10]`.
pub fn default_tau_grid() -> Vec<f64> {
    log_grid(1e-2, 10.0, 25)
}

/// `count` logarithmically spaced values on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Rule-of-thumb k: `0.4·mean(y)` for Poisson, 0.3 for Bernoulli, 2 for
/// speckle.
pub fn heuristic_k(model: NoiseModel, y: &Image) -> f64 {
    match model {
        NoiseModel::Poisson => 0.4 * y.mean(),
        NoiseModel::Bernoulli => 0.3,
        NoiseModel::Speckle { .. } => 2.0,
    }
}

/// The family a model uses when only `k` is given.
pub fn family_for(model: NoiseModel, k: f64) -> Result<ReparamFamily> {
    let family = match model {
        NoiseModel::Bernoulli => ReparamFamily::BernoulliK(k),
        NoiseModel::Poisson => ReparamFamily::PoissonLogExpK(k),
        NoiseModel::Speckle { .. } => ReparamFamily::SpeckleK(k),
    };
    family.validate()?;
    Ok(family)
}

/// Result of one (image, family) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Best-τ relative RMSE averaged over realizations; NaN if every solve failed.
    pub rmse: f64,
    /// Mean outer iterations at the selected τ.
    pub iterations: f64,
    /// Selected τ for each realization (all equal under per-image selection).
    pub tau: Vec<f64>,
    /// Evaluated τ values with the realization-averaged RMSE at each.
    pub tau_curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub image: String,
    pub family: String,
    pub realization: usize,
    pub tau: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub model: NoiseModel,
    pub images: Vec<String>,
    pub families: Vec<ReparamFamily>,
    /// `[image][family]`.
    pub per_cell: Vec<Vec<Cell>>,
    /// Baseline cell per image.
    pub baseline: Option<Vec<Cell>>,
    /// Mean of `per_cell` over images, per family.
    pub per_family_risk: Vec<f64>,
    pub baseline_risk: Option<f64>,
    /// Gradient-Lipschitz bound per family on the representative observation.
    pub lipschitz: Vec<f64>,
    pub lambda: f64,
    /// `R̂ + λ/L` per family.
    pub tradeoff_scores: Vec<f64>,
    pub failures: Vec<CellFailure>,
}

impl RiskReport {
    /// Mean outer iterations, `[image][family]`.
    pub fn iteration_counts(&self) -> Vec<Vec<f64>> {
        self.per_cell
            .iter()
            .map(|row| row.iter().map(|c| c.iterations).collect())
            .collect()
    }

    /// Family with the lowest empirical risk.
    pub fn best_family(&self) -> Option<(ReparamFamily, f64)> {
        self.families
            .iter()
            .zip(&self.per_family_risk)
            .filter(|(_, r)| r.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(f, r)| (*f, *r))
    }

    /// Table layout `image, baseline, k=…` with an `Average` row.
    pub fn table(&self) -> Table {
        let mut columns = vec!["baseline".to_string()];
        columns.extend(self.families.iter().map(|f| column_label(*f)));
        let rows = self
            .images
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let mut values = vec![self.baseline.as_ref().map(|b| b[i].rmse)];
                values.extend(self.per_cell[i].iter().map(|c| Some(c.rmse)));
                (name.clone(), values)
            })
            .collect();
        Table::with_average(columns, rows)
    }

    /// Risk-versus-family curve as CSV text:
    /// `family,k,risk,lipschitz,mean_iterations,tradeoff`.
    pub fn curve_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "family",
            "k",
            "risk",
            "lipschitz",
            "mean_iterations",
            "tradeoff",
        ])?;
        let iters = self.iteration_counts();
        for (f, family) in self.families.iter().enumerate() {
            let mean_iters = mean(iters.iter().map(|row| row[f]));
            w.write_record([
                family.to_string(),
                family.k().map(|k| k.to_string()).unwrap_or_default(),
                self.per_family_risk[f].to_string(),
                self.lipschitz[f].to_string(),
                mean_iters.to_string(),
                self.tradeoff_scores[f].to_string(),
            ])?;
        }
        if let (Some(cells), Some(risk)) = (&self.baseline, self.baseline_risk) {
            let mean_iters = mean(cells.iter().map(|c| c.iterations));
            w.write_record([
                "baseline".to_string(),
                String::new(),
                risk.to_string(),
                f64::INFINITY.to_string(),
                mean_iters.to_string(),
                risk.to_string(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// Column header for a family: `k=<v>` when it has a k, its name otherwise.
pub fn column_label(family: ReparamFamily) -> String {
    match family.k() {
        Some(k) => format!("k={k}"),
        None => family.to_string(),
    }
}

/// `R̂(f) + λ/L(f)` per family; an unbounded `L` contributes nothing.
pub fn tradeoff_score(report: &RiskReport, lambda: f64) -> Vec<(ReparamFamily, f64)> {
    report
        .families
        .iter()
        .zip(&report.per_family_risk)
        .zip(&report.lipschitz)
        .map(|((f, r), l)| (*f, r + lambda / l))
        .collect()
}

/// Per-run record written next to the tables.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub crate_version: &'static str,
    pub model: NoiseModel,
    pub images: Vec<ImageInfo>,
    pub realizations: usize,
    pub family_grid: &'a [ReparamFamily],
    pub tau_grid: &'a [f64],
    pub scaling: Option<ScaleMode>,
    pub seed: Seed,
    pub solver: SolverConfig,
    pub tau_selection: TauSelection,
    pub warm_start: bool,
    pub max_widen: usize,
    pub elapsed_seconds: f64,
    pub report: &'a RiskReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl<'a> Manifest<'a> {
    pub fn new(spec: &'a ExperimentSpec, report: &'a RiskReport, elapsed_seconds: f64) -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION"),
            model: spec.model,
            images: spec
                .images
                .iter()
                .map(|n| ImageInfo {
                    name: n.name.clone(),
                    rows: n.image.rows(),
                    cols: n.image.cols(),
                })
                .collect(),
            realizations: spec.realizations,
            family_grid: &spec.family_grid,
            tau_grid: &spec.tau_grid,
            scaling: spec.scaling,
            seed: spec.seed,
            solver: spec.solver,
            tau_selection: spec.tau_selection,
            warm_start: spec.warm_start,
            max_widen: spec.max_widen,
            elapsed_seconds,
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Empirical risk of one family (`Identity` gives the baseline).
pub fn empirical_risk(spec: &ExperimentSpec, family: ReparamFamily) -> Result<f64> {
    spec.validate()?;
    family.validate()?;
    let truths = spec.truths()?;
    let (cells, failures) = evaluate(spec, &truths, &[family])?;
    let risk = mean(cells[0].iter().map(|c| c.rmse));
    if risk.is_finite() {
        Ok(risk)
    } else {
        Err(Error::Numeric(format!(
            "every solve failed for {family}: {}",
            failures
                .first()
                .map(|f| f.message.as_str())
                .unwrap_or("no estimate")
        )))
    }
}

/// Evaluates every family in the grid, plus the baseline when requested.
pub fn sweep(spec: &ExperimentSpec) -> Result<RiskReport> {
    spec.validate()?;
    let truths = spec.truths()?;
    let families: Vec<ReparamFamily> = spec
        .family_grid
        .iter()
        .copied()
        .filter(|f| *f != ReparamFamily::Identity)
        .collect();
    let with_baseline =
        spec.include_baseline || spec.family_grid.contains(&ReparamFamily::Identity);
    let mut methods = families.clone();
    if with_baseline {
        methods.push(ReparamFamily::Identity);
    }
    let (mut cells, failures) = evaluate(spec, &truths, &methods)?;
    let baseline = with_baseline.then(|| cells.pop().expect("baseline column"));

    let n = spec.images.len();
    let per_cell: Vec<Vec<Cell>> = (0..n)
        .map(|i| cells.iter().map(|col| col[i].clone()).collect())
        .collect();
    let per_family_risk: Vec<f64> = cells
        .iter()
        .map(|col| mean(col.iter().map(|c| c.rmse)))
        .collect();
    let baseline_risk = baseline
        .as_ref()
        .map(|col| mean(col.iter().map(|c| c.rmse)));

    let representative = spec.observe(&truths[0], 0, 0)?;
    let lipschitz = families
        .iter()
        .map(|f| Ok(DataFit::for_model(spec.model, *f, representative.clone())?.lipschitz_bound()))
        .collect::<Result<Vec<f64>>>()?;

    let mut report = RiskReport {
        model: spec.model,
        images: spec.images.iter().map(|n| n.name.clone()).collect(),
        families,
        per_cell,
        baseline,
        per_family_risk,
        baseline_risk,
        lipschitz,
        lambda: spec.lambda,
        tradeoff_scores: Vec::new(),
        failures,
    };
    report.tradeoff_scores = tradeoff_score(&report, spec.lambda)
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    Ok(report)
}

/// Mean of the finite values; NaN when there are none.
fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// RMSE and iteration count of one solve, or the failure message.
type Outcome = std::result::Result<(f64, usize), String>;

/// τ values and outcomes `[realization][τ]` for one (image, method) pair.
struct Group {
    image: usize,
    method: ReparamFamily,
    taus: Vec<f64>,
    /// Rows evaluated on the whole τ grid.
    outcomes: Vec<Vec<Outcome>>,
    /// Rows after the pilot, evaluated at the pilot's τ only.
    scored: Vec<Outcome>,
    widened_low: usize,
    widened_high: usize,
}

struct Job {
    group: usize,
    realization: usize,
    taus: Vec<f64>,
}

/// Solves `taus` (ascending) on one realization, largest τ first when
/// warm-starting, and returns outcomes in the order given.
fn run_job(
    spec: &ExperimentSpec,
    truth: &Image,
    y: &Image,
    method: ReparamFamily,
    taus: &[f64],
) -> Vec<Outcome> {
    let fit = match DataFit::for_model(spec.model, method, y.clone()) {
        Ok(fit) => fit,
        Err(e) => return vec![Err(e.to_string()); taus.len()],
    };
    let mut out = vec![Err(String::new()); taus.len()];
    let mut start: Option<Image> = None;
    for idx in (0..taus.len()).rev() {
        let config = SolverConfig {
            tau: taus[idx],
            ..spec.solver
        };
        let solved = denoise(&fit, &config, start.as_ref()).and_then(|res: SolveResult| {
            let rmse = rmse_relative(&res.x_hat, truth)?;
            Ok((rmse, res.iterations, res))
        });
        out[idx] = match solved {
            Ok((rmse, iters, res)) => {
                if spec.warm_start {
                    start = Some(if fit.is_baseline() {
                        res.x_hat
                    } else {
                        res.theta_hat
                    });
                }
                Ok((rmse, iters))
            }
            Err(e) => {
                start = None;
                Err(e.to_string())
            }
        };
    }
    out
}

fn run_jobs(
    spec: &ExperimentSpec,
    truths: &[Image],
    groups: &[Group],
    jobs: &[Job],
) -> Result<Vec<Vec<Outcome>>> {
    jobs.par_iter()
        .map(|job| {
            let group = &groups[job.group];
            let truth = &truths[group.image];
            let y = spec.observe(truth, group.image, job.realization)?;
            Ok(run_job(spec, truth, &y, group.method, &job.taus))
        })
        .collect()
}

/// Index of the smallest finite value.
fn argmin(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
}

fn rmse_of(o: &Outcome) -> f64 {
    o.as_ref().map(|(r, _)| *r).unwrap_or(f64::NAN)
}

impl Group {
    fn curve(&self) -> Vec<f64> {
        (0..self.taus.len())
            .map(|t| mean(self.outcomes.iter().map(|row| rmse_of(&row[t]))))
            .collect()
    }

    /// Selected τ index per realization.
    fn selection(&self, mode: TauSelection) -> Vec<Option<usize>> {
        match mode {
            TauSelection::PerImage | TauSelection::Pilot { .. } => {
                vec![argmin(&self.curve()); self.outcomes.len()]
            }
            TauSelection::PerRealization => self
                .outcomes
                .iter()
                .map(|row| argmin(&row.iter().map(rmse_of).collect::<Vec<_>>()))
                .collect(),
        }
    }

    /// New τ values to try, if a selection sits on an open edge of the grid.
    fn widening(&mut self, mode: TauSelection, budget: usize) -> Vec<f64> {
        let last = self.taus.len() - 1;
        let picks = self.selection(mode);
        let mut extra = Vec::new();
        let low_edge = picks.contains(&Some(0)) && self.taus[0] > 0.0;
        if low_edge && self.widened_low < budget {
            let ratio = if last > 0 && self.taus[0] > 0.0 {
                self.taus[1] / self.taus[0]
            } else {
                2.0
            };
            extra.push(self.taus[0] / ratio);
            self.widened_low += 1;
        }
        if picks.contains(&Some(last)) && self.widened_high < budget {
            let ratio = if last > 0 && self.taus[last - 1] > 0.0 {
                self.taus[last] / self.taus[last - 1]
            } else {
                2.0
            };
            let top = if self.taus[last] > 0.0 {
                self.taus[last] * ratio
            } else {
                1e-2
            };
            extra.push(top);
            self.widened_high += 1;
        }
        extra
    }

    fn merge(&mut self, taus: &[f64], results: Vec<Vec<Outcome>>) {
        for (&tau, col) in taus.iter().zip(transpose(results)) {
            let at = self.taus.partition_point(|&t| t < tau);
            self.taus.insert(at, tau);
            for (row, outcome) in self.outcomes.iter_mut().zip(col) {
                row.insert(at, outcome);
            }
        }
    }

    fn cell(&self, mode: TauSelection) -> Cell {
        let picks = self.selection(mode);
        let mut rmse = Vec::new();
        let mut iters = Vec::new();
        let mut tau = Vec::new();
        for (row, pick) in self.outcomes.iter().zip(&picks) {
            if let Some(t) = pick {
                if let Ok((r, it)) = &row[*t] {
                    rmse.push(*r);
                    iters.push(*it as f64);
                }
                tau.push(self.taus[*t]);
            } else {
                tau.push(f64::NAN);
            }
        }
        let pilot_tau = picks
            .first()
            .copied()
            .flatten()
            .map_or(f64::NAN, |t| self.taus[t]);
        for outcome in &self.scored {
            if let Ok((r, it)) = outcome {
                rmse.push(*r);
                iters.push(*it as f64);
            }
            tau.push(pilot_tau);
        }
        Cell {
            rmse: mean(rmse.into_iter()),
            iterations: mean(iters.into_iter()),
            tau,
            tau_curve: self.taus.iter().copied().zip(self.curve()).collect(),
        }
    }
}

/// `results[realization][k]` into `[k][realization]`.
fn transpose(results: Vec<Vec<Outcome>>) -> Vec<Vec<Outcome>> {
    let width = results.first().map_or(0, Vec::len);
    let mut cols: Vec<Vec<Outcome>> = (0..width)
        .map(|_| Vec::with_capacity(results.len()))
        .collect();
    for row in results {
        for (col, o) in cols.iter_mut().zip(row) {
            col.push(o);
        }
    }
    cols
}

/// Cells `[method][image]` and the failed solves.
fn evaluate(
    spec: &ExperimentSpec,
    truths: &[Image],
    methods: &[ReparamFamily],
) -> Result<(Vec<Vec<Cell>>, Vec<CellFailure>)> {
    let m = spec.realizations;
    let grid_rows = match spec.tau_selection {
        TauSelection::Pilot { realizations } => realizations.clamp(1, m),
        _ => m,
    };
    let mut groups: Vec<Group> = methods
        .iter()
        .flat_map(|&method| {
            (0..truths.len()).map(move |image| Group {
                image,
                method,
                taus: Vec::new(),
                outcomes: vec![Vec::new(); grid_rows],
                scored: Vec::new(),
                widened_low: 0,
                widened_high: 0,
            })
        })
        .collect();

    let mut pending: Vec<Vec<f64>> = vec![spec.tau_grid.clone(); groups.len()];
    loop {
        let jobs: Vec<Job> = pending
            .iter()
            .enumerate()
            .filter(|(_, taus)| !taus.is_empty())
            .flat_map(|(g, taus)| {
                let mut taus = taus.clone();
                taus.sort_by(f64::total_cmp);
                (0..grid_rows).map(move |realization| Job {
                    group: g,
                    realization,
                    taus: taus.clone(),
                })
            })
            .collect();
        if jobs.is_empty() {
            break;
        }
        let results = run_jobs(spec, truths, &groups, &jobs)?;
        let mut by_group: Vec<Vec<Vec<Outcome>>> = (0..groups.len()).map(|_| Vec::new()).collect();
        let mut taus_of: Vec<Vec<f64>> = vec![Vec::new(); groups.len()];
        for (job, res) in jobs.iter().zip(results) {
            by_group[job.group].push(res);
            taus_of[job.group] = job.taus.clone();
        }
        for (g, res) in by_group.into_iter().enumerate() {
            if !res.is_empty() {
                groups[g].merge(&taus_of[g], res);
            }
        }
        pending = groups
            .iter_mut()
            .map(|g| g.widening(spec.tau_selection, spec.max_widen))
            .collect();
    }

    if grid_rows < m {
        let picks: Vec<Option<f64>> = groups
            .iter()
            .map(|g| argmin(&g.curve()).map(|t| g.taus[t]))
            .collect();
        let jobs: Vec<Job> = picks
            .iter()
            .enumerate()
            .filter_map(|(g, pick)| pick.map(|tau| (g, tau)))
            .flat_map(|(g, tau)| {
                (grid_rows..m).map(move |realization| Job {
                    group: g,
                    realization,
                    taus: vec![tau],
                })
            })
            .collect();
        let results = run_jobs(spec, truths, &groups, &jobs)?;
        for (job, mut res) in jobs.iter().zip(results) {
            groups[job.group].scored.push(res.remove(0));
        }
        for (g, pick) in groups.iter_mut().zip(&picks) {
            if pick.is_none() {
                g.scored = vec![Err("no τ survived the pilot".into()); m - grid_rows];
            }
        }
    }

    let mut failures = Vec::new();
    for g in &groups {
        let pilot_tau = argmin(&g.curve()).map_or(f64::NAN, |t| g.taus[t]);
        let rows = g
            .outcomes
            .iter()
            .enumerate()
            .flat_map(|(j, row)| row.iter().enumerate().map(move |(t, o)| (j, g.taus[t], o)));
        let scored = g
            .scored
            .iter()
            .enumerate()
            .map(|(i, o)| (grid_rows + i, pilot_tau, o));
        for (realization, tau, o) in rows.chain(scored) {
            if let Err(message) = o {
                failures.push(CellFailure {
                    image: spec.images[g.image].name.clone(),
                    family: g.method.to_string(),
                    realization,
                    tau,
                    message: message.clone(),
                });
            }
        }
    }

    let n = truths.len();
    let cells = groups
        .chunks(n)
        .map(|chunk| chunk.iter().map(|g| g.cell(spec.tau_selection)).collect())
        .collect();
    Ok((cells, failures))
}
