//! Subcommand implementations. Each takes the parsed configuration and the
//! global options and writes its artifacts under `opts.out`.

use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use ndarray::{s, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stf_core::forecast::{atom_removal_scan, forecast, nse, AtomScan, PipelineConfig};
use stf_core::solvers::bcd::ssnmf_bcd;
use stf_core::solvers::hard::ssnmf_hard;
use stf_core::spectral::inverse_usage_ratio;
use stf_core::synthetic::gen_example1;
use stf_core::tensor::{fold, matricize, stack_auxiliary};
use stf_core::{rng, DataMatrix, FactorModel, SolveReport, SpatioTemporalTensor};

use crate::config::{AtomScanConfig, ModelConfig, RunConfig, SolverConfig};
use crate::error::{CliError, CliResult};
use crate::format::{read_matrix, read_tensor, write_atomic, write_matrix, write_tensor};

/// Options shared by all subcommands.
#[derive(Debug, Clone)]
pub struct GlobalOptions {
    pub out: PathBuf,
    /// Worker threads for grid sweeps.
    pub jobs: usize,
    /// Emit tensors in the binary layout.
    pub binary: bool,
    /// Replaces the configuration's seed.
    pub seed: Option<u64>,
}

impl GlobalOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into(), jobs: 1, binary: false, seed: None }
    }

    fn seed(&self, cfg: &RunConfig) -> u64 {
        self.seed.unwrap_or(cfg.seed)
    }
}

pub const MODEL_FORMAT: &str = "stf-model-v1";
pub const INDEX_FORMAT: &str = "stf-index-v1";
pub const METRICS_FORMAT: &str = "stf-metrics-v1";
pub const EVAL_FORMAT: &str = "stf-eval-v1";
pub const SCAN_FORMAT: &str = "stf-scan-v1";
pub const PROVENANCE_FORMAT: &str = "stf-provenance-v1";
pub const REPORT_FORMAT: &str = "stf-report-v1";

/// `model.json` next to the factor CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub model: ModelConfig,
    /// Spatial grid `[A, B]` of the data tensor.
    pub grid: (usize, usize),
    pub t_train: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
struct ReportFile<'a> {
    format: &'static str,
    #[serde(flatten)]
    report: &'a SolveReport,
}

/// Outcome of one factorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub id: usize,
    pub dir: String,
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `index.json` of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridIndex {
    pub format: String,
    pub points: Vec<PointSummary>,
    /// Median final objective over the points that finished.
    pub median_objective: Option<f64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn dense(t: &SpatioTemporalTensor, path: &Path) -> CliResult<DataMatrix> {
    if t.time_mask().is_some() {
        return Err(CliError::input(format!(
            "{}: auxiliary and prediction tensors must not contain gap time steps",
            path.display()
        )));
    }
    Ok(matricize(t).matrix)
}

fn load_auxiliary(paths: &[PathBuf]) -> CliResult<DataMatrix> {
    if paths.is_empty() {
        return Err(CliError::input("at least one auxiliary tensor is required"));
    }
    let mats = paths
        .iter()
        .map(|p| dense(&read_tensor(p)?, p))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(stack_auxiliary(&mats)?)
}

/// Seed of a sweep point: the base seed mixed with a hash of the point's
/// hyperparameters, so adding points leaves the others untouched.
pub fn point_seed(seed: u64, m: &ModelConfig) -> u64 {
    let label = format!(
        "grid/rank={}/xi={:?}/lambda={:?}/R={:?}",
        m.rank, m.xi, m.penalty.lambda, m.penalty.r
    );
    seed ^ rng::stream_id(&label)
}

fn fit(
    x: &DataMatrix,
    y: &DataMatrix,
    model: &ModelConfig,
    solver: &SolverConfig,
    seed: u64,
) -> CliResult<(FactorModel, SolveReport)> {
    let hyper = model.to_hyper(x.ncols())?;
    let opts = solver.bcd_options(seed);
    match solver.hard_variant(&hyper.penalty) {
        Some(variant) => {
            if !solver.project_nonneg {
                return Err(CliError::input("hard constraints always project onto H >= 0"));
            }
            Ok(ssnmf_hard(x, y, &hyper, variant, &opts)?)
        }
        None => Ok(ssnmf_bcd(x, y, &hyper, &opts)?),
    }
}

fn write_model(dir: &Path, file: &ModelFile, model: &FactorModel, report: &SolveReport) -> CliResult<()> {
    write_matrix(&dir.join("W.csv"), &model.w)?;
    write_matrix(&dir.join("Wp.csv"), &model.wp)?;
    write_matrix(&dir.join("H.csv"), &model.h)?;
    write_json(&dir.join("report.json"), &ReportFile { format: REPORT_FORMAT, report })?;
    write_json(&dir.join("model.json"), file)
}

/// Reads a model directory written by [`cmd_factorize`].
pub fn load_model(dir: &Path) -> CliResult<(FactorModel, ModelFile)> {
    let file: ModelFile = read_json(&dir.join("model.json"))?;
    if file.format != MODEL_FORMAT {
        return Err(CliError::input(format!(
            "{}: unsupported model format `{}`",
            dir.display(),
            file.format
        )));
    }
    let hyper = file.model.to_hyper(file.t_train)?;
    let w = read_matrix(&dir.join("W.csv"))?;
    let wp = read_matrix(&dir.join("Wp.csv"))?;
    let h = read_matrix(&dir.join("H.csv"))?;
    let r = hyper.rank;
    if w.ncols() != r || wp.ncols() != r || h.nrows() != r || h.ncols() != file.t_train {
        return Err(CliError::input(format!(
            "{}: factor shapes W {:?}, W' {:?}, H {:?} disagree with rank {r} and T = {}",
            dir.display(),
            w.dim(),
            wp.dim(),
            h.dim(),
            file.t_train
        )));
    }
    if w.nrows() != file.grid.0 * file.grid.1 {
        return Err(CliError::input(format!("{}: W rows do not match the grid", dir.display())));
    }
    Ok((FactorModel { w, wp, h, hyper }, file))
}

/// Fits one model, or one per grid point, and writes factors and reports.
pub fn cmd_factorize(cfg: &RunConfig, opts: &GlobalOptions) -> CliResult<Vec<PointSummary>> {
    let f = cfg
        .factorize
        .as_ref()
        .ok_or_else(|| CliError::input("configuration has no `factorize` section"))?;
    f.solver.validate()?;
    let seed = opts.seed(cfg);
    let xt = read_tensor(&f.x)?;
    let (a, b, _) = xt.dims();
    let xm = matricize(&xt);
    let y_all = load_auxiliary(&f.y)?;
    let t_cal = xt.dims().2;
    if y_all.ncols() < t_cal {
        return Err(CliError::input(format!(
            "auxiliary data spans {} time steps, fewer than the {t_cal} of X",
            y_all.ncols()
        )));
    }
    // gap months of X are dropped from the auxiliary training block too
    let y = y_all.select(Axis(1), &xm.columns);
    let x = xm.matrix;
    info!("factorize: X {}x{}, Y {}x{}", x.nrows(), x.ncols(), y.nrows(), y.ncols());

    let Some(grid) = &f.grid else {
        let (model, report) = fit(&x, &y, &f.model, &f.solver, seed)?;
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            model: f.model.clone(),
            grid: (a, b),
            t_train: x.ncols(),
            seed,
        };
        write_model(&opts.out, &file, &model, &report)?;
        info!("factorize: {} iterations, {:?}", report.wall_iters, report.terminated);
        return Ok(vec![PointSummary {
            id: 0,
            dir: ".".into(),
            seed,
            model: f.model.clone(),
            final_objective: report.objective_trace.last().copied(),
            error: None,
        }]);
    };

    let points = grid.points(&f.model)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CliError::input(format!("worker pool: {e}")))?;
    let results: Vec<(PointSummary, Option<CliError>)> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(id, m)| {
                let dir = format!("point-{id:03}");
                let pseed = point_seed(seed, m);
                debug!("grid point {id}: {m:?} seed {pseed}");
                let run = fit(&x, &y, m, &f.solver, pseed).and_then(|(model, report)| {
                    let file = ModelFile {
                        format: MODEL_FORMAT.into(),
                        model: m.clone(),
                        grid: (a, b),
                        t_train: x.ncols(),
                        seed: pseed,
                    };
                    write_model(&opts.out.join(&dir), &file, &model, &report)?;
                    Ok(report.objective_trace.last().copied())
                });
                let mut summary = PointSummary {
                    id,
                    dir,
                    seed: pseed,
                    model: m.clone(),
                    final_objective: None,
                    error: None,
                };
                match run {
                    Ok(v) => {
                        summary.final_objective = v;
                        (summary, None)
                    }
                    Err(e) => {
                        warn!("grid point {id} failed: {e}");
                        summary.error = Some(e.to_string());
                        (summary, Some(e))
                    }
                }
            })
            .collect()
    });
    let mut objectives: Vec<f64> = results.iter().filter_map(|(p, _)| p.final_objective).collect();
    objectives.sort_by(f64::total_cmp);
    let median_objective = match objectives.len() {
        0 => None,
        n if n % 2 == 1 => Some(objectives[n / 2]),
        n => Some(0.5 * (objectives[n / 2 - 1] + objectives[n / 2])),
    };
    let index = GridIndex {
        format: INDEX_FORMAT.into(),
        points: results.iter().map(|(p, _)| p.clone()).collect(),
        median_objective,
    };
    write_json(&opts.out.join("index.json"), &index)?;
    if let Some(e) = results.into_iter().find_map(|(_, e)| e) {
        return Err(e);
    }
    Ok(index.points)
}

/// `metrics.json` of a forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMetrics {
    pub format: String,
    pub t_train: usize,
    pub horizon: usize,
    /// NSE against `x_test`; absent without held-out data.
    pub nse: Option<f64>,
    /// `μ(H'_new)` over the full record; `null` marks an unused coefficient.
    pub mu_h_new: Vec<Vec<Option<f64>>>,
    /// Median of `mu_h_new`, with unused coefficients counted as `+∞`.
    pub mu_median: Option<f64>,
}

/// `μ` row by row; an all-zero row maps to `null` everywhere.
fn usage_table(h: &DataMatrix) -> (Vec<Vec<Option<f64>>>, Option<f64>) {
    let mut table = Vec::with_capacity(h.nrows());
    let mut all = Vec::new();
    for s in 0..h.nrows() {
        let row = h.slice(s![s..s + 1, ..]).to_owned();
        let mu: Vec<f64> = match inverse_usage_ratio(&row) {
            Ok(m) => m.iter().copied().collect(),
            Err(_) => vec![f64::INFINITY; h.ncols()],
        };
        all.extend(mu.iter().copied());
        table.push(mu.into_iter().map(|v| v.is_finite().then_some(v)).collect());
    }
    all.sort_by(f64::total_cmp);
    let median = all.get(all.len() / 2).copied().filter(|v| v.is_finite());
    (table, median)
}

/// Encodes the full auxiliary record and writes the prediction slices.
pub fn cmd_forecast(cfg: &RunConfig, opts: &GlobalOptions) -> CliResult<ForecastMetrics> {
    let f = cfg
        .forecast
        .as_ref()
        .ok_or_else(|| CliError::input("configuration has no `forecast` section"))?;
    let (model, file) = load_model(&f.model)?;
    let y_full = load_auxiliary(&f.y_full)?;
    let pipeline = PipelineConfig {
        t_train: file.t_train,
        grid: file.grid,
        encode: f.encode.to_encode(y_full.ncols())?,
    };
    let x_test = match &f.x_test {
        Some(p) => {
            let t = read_tensor(p)?;
            let m = dense(&t, p)?;
            let horizon = y_full.ncols().saturating_sub(file.t_train);
            if m.ncols() != horizon || m.nrows() != model.w.nrows() {
                return Err(CliError::input(format!(
                    "{}: held-out data is {:?}; the forecast covers {} cells x {horizon} steps",
                    p.display(),
                    m.dim(),
                    model.w.nrows()
                )));
            }
            Some(m)
        }
        None => None,
    };
    let result = forecast(&model, &y_full, &pipeline, x_test.as_ref())?;
    let (a, b, horizon) = result.x_pred.dims();
    let slices = opts.out.join("x_pred");
    for k in 0..horizon {
        let slice = DataMatrix::from_shape_fn((a, b), |(i, j)| result.x_pred.get(i, j, k));
        write_matrix(&slices.join(format!("slice-{k:03}.csv")), &slice)?;
    }
    if opts.binary {
        write_tensor(&opts.out, "x_pred", &result.x_pred, true)?;
    }
    write_matrix(&opts.out.join("H_new.csv"), &result.h_new_full)?;
    let (mu_h_new, mu_median) = usage_table(&result.h_new_full);
    let metrics = ForecastMetrics {
        format: METRICS_FORMAT.into(),
        t_train: file.t_train,
        horizon,
        nse: result.nse,
        mu_h_new,
        mu_median,
    };
    write_json(&opts.out.join("metrics.json"), &metrics)?;
    info!("forecast: {horizon} steps, NSE {:?}", metrics.nse);
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub format: String,
    pub nse: f64,
}

/// NSE of one tensor against another of the same shape.
pub fn cmd_evaluate(cfg: &RunConfig, opts: &GlobalOptions) -> CliResult<EvalMetrics> {
    let e = cfg
        .evaluate
        .as_ref()
        .ok_or_else(|| CliError::input("configuration has no `evaluate` section"))?;
    let truth = read_tensor(&e.truth)?;
    let pred = read_tensor(&e.prediction)?;
    if truth.dims() != pred.dims() {
        return Err(CliError::input(format!(
            "truth is {:?} but prediction is {:?}",
            truth.dims(),
            pred.dims()
        )));
    }
    let metrics = EvalMetrics {
        format: EVAL_FORMAT.into(),
        nse: nse(&dense(&truth, &e.truth)?, &dense(&pred, &e.prediction)?)?,
    };
    write_json(&opts.out.join("evaluate.json"), &metrics)?;
    Ok(metrics)
}

pub fn scan_to_csv(scan: &AtomScan) -> String {
    let mut s = format!("{SCAN_FORMAT}\natom,nse_after,delta\nbaseline,{},0\n", scan.baseline);
    for r in &scan.ranked {
        s.push_str(&format!("{},{},{}\n", r.atom, r.nse_after, r.delta));
    }
    s
}

/// Removes each atom in turn and ranks the forecasts by NSE.
pub fn cmd_atom_scan(cfg: &RunConfig, opts: &GlobalOptions) -> CliResult<AtomScan> {
    let AtomScanConfig { model: dir, x_full, y_full, encode } = cfg
        .atom_scan
        .as_ref()
        .ok_or_else(|| CliError::input("configuration has no `atom_scan` section"))?;
    let (model, file) = load_model(dir)?;
    if model.hyper.rank < 2 {
        return Err(CliError::input(format!(
            "{}: the model has a single atom; removing it leaves nothing to forecast with",
            dir.display()
        )));
    }
    let x = dense(&read_tensor(x_full)?, x_full)?;
    let y = load_auxiliary(y_full)?;
    let pipeline = PipelineConfig {
        t_train: file.t_train,
        grid: file.grid,
        encode: encode.to_encode(y.ncols())?,
    };
    let scan = atom_removal_scan(&model, &x, &y, &pipeline)?;
    write_atomic(&opts.out.join("atom_scan.csv"), scan_to_csv(&scan).as_bytes())?;
    Ok(scan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub format: String,
    pub seed: u64,
    pub spec: stf_core::synthetic::SyntheticSpec,
    pub grid: (usize, usize),
    pub files: Vec<String>,
}

/// Writes the two-tone synthetic tensors `X`, `Y0`, `Y1`, ...
pub fn cmd_synth(cfg: &RunConfig, opts: &GlobalOptions) -> CliResult<Provenance> {
    let sc = cfg.synth.clone().unwrap_or_default();
    let mut spec = sc.spec;
    spec.seed = opts.seed(cfg);
    spec.validate()?;
    let (a, b) = sc.grid;
    if a * b != spec.d {
        return Err(CliError::input(format!("grid {a}x{b} does not hold d = {}", spec.d)));
    }
    let ex = gen_example1(&spec)?;
    let mut files = Vec::new();
    let name = |p: PathBuf| p.file_name().expect("file").to_string_lossy().into_owned();
    files.push(name(write_tensor(&opts.out, "X", &fold(&ex.x, a, b)?, opts.binary)?));
    for (p, y) in ex.aux.iter().enumerate() {
        files.push(name(write_tensor(&opts.out, &format!("Y{p}"), &fold(y, a, b)?, opts.binary)?));
    }
    let prov = Provenance { format: PROVENANCE_FORMAT.into(), seed: spec.seed, spec, grid: (a, b), files };
    write_json(&opts.out.join("provenance.json"), &prov)?;
    Ok(prov)
}
