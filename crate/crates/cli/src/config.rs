//! JSON run configuration.
//!
//! One document holds a section per subcommand; each command reads only
//! its own section. Relative paths resolve against the directory of the
//! configuration file. `schema/config.schema.json` documents every field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stf_core::forecast::EncodeConfig;
use stf_core::solvers::bcd::BcdOptions;
use stf_core::solvers::hard::HardVariant;
use stf_core::solvers::heuristic::ProjectionOrder;
use stf_core::solvers::pgd::PgdConfig;
use stf_core::synthetic::SyntheticSpec;
use stf_core::{FrequencyMask, Hyper, MaskSource, Penalty, StepSchedule};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factorize: Option<FactorizeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<ForecastConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<EvaluateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom_scan: Option<AtomScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::input(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads a config file and makes its relative paths absolute.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(f) = &mut self.factorize {
            fix(&mut f.x);
            f.y.iter_mut().for_each(fix);
        }
        if let Some(f) = &mut self.forecast {
            fix(&mut f.model);
            f.y_full.iter_mut().for_each(fix);
            if let Some(x) = &mut f.x_test {
                fix(x);
            }
        }
        if let Some(e) = &mut self.evaluate {
            fix(&mut e.truth);
            fix(&mut e.prediction);
        }
        if let Some(a) = &mut self.atom_scan {
            fix(&mut a.model);
            fix(&mut a.x_full);
            a.y_full.iter_mut().for_each(fix);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    None,
    Ridge,
    Lasso,
    SoftFreq,
    HardFreq,
}

/// Penalty as written in the config: `{kind, lambda, R?, mask?}`.
///
/// A hard constraint takes either `R` (top-`R` frequencies per row, solved
/// by alternating projections) or `mask` (retained nonnegative indices per
/// row, mirrored to a conjugate-closed set and solved by splitting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<Vec<usize>>>,
}

impl PenaltySpec {
    pub fn none() -> Self {
        Self { kind: PenaltyKind::None, lambda: None, r: None, mask: None }
    }

    /// The library penalty for codes of length `t`.
    pub fn to_penalty(&self, t: usize) -> CliResult<Penalty> {
        let lambda = || -> CliResult<f64> {
            let l = self
                .lambda
                .ok_or_else(|| CliError::input(format!("penalty {:?} needs `lambda`", self.kind)))?;
            check_nonneg("lambda", l)?;
            Ok(l)
        };
        let no_hard_fields = || -> CliResult<()> {
            if self.r.is_some() || self.mask.is_some() {
                return Err(CliError::input("`R` and `mask` apply to hard_freq only"));
            }
            Ok(())
        };
        match self.kind {
            PenaltyKind::None => {
                no_hard_fields()?;
                if self.lambda.is_some_and(|l| l != 0.0) {
                    return Err(CliError::input("penalty `none` takes no lambda"));
                }
                Ok(Penalty::none())
            }
            PenaltyKind::Ridge => no_hard_fields().and(Ok(Penalty::Ridge { lambda: lambda()? })),
            PenaltyKind::Lasso => no_hard_fields().and(Ok(Penalty::Lasso { lambda: lambda()? })),
            PenaltyKind::SoftFreq => no_hard_fields().and(Ok(Penalty::SoftFreq { lambda: lambda()? })),
            PenaltyKind::HardFreq => {
                if self.lambda.is_some() {
                    return Err(CliError::input("hard_freq is a constraint and takes no lambda"));
                }
                match (self.r, &self.mask) {
                    (Some(r), None) => {
                        if r == 0 || r > t / 2 + 1 {
                            return Err(CliError::input(format!(
                                "R = {r} outside 1..={} for T = {t}",
                                t / 2 + 1
                            )));
                        }
                        Ok(Penalty::HardFreq { mask: MaskSource::TopR(r) })
                    }
                    (None, Some(kept)) => Ok(Penalty::HardFreq {
                        mask: MaskSource::Fixed(FrequencyMask::symmetric(t, kept.clone())?),
                    }),
                    _ => Err(CliError::input("hard_freq needs exactly one of `R` and `mask`")),
                }
            }
        }
    }
}

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Rank `r`, at least 1.
    pub rank: usize,
    /// Supervision weight `ξ ≥ 0`.
    pub xi: f64,
    #[serde(default)]
    pub lambda_w: f64,
    #[serde(default)]
    pub lambda_wp: f64,
    pub penalty: PenaltySpec,
}

impl ModelConfig {
    pub fn to_hyper(&self, t: usize) -> CliResult<Hyper> {
        if self.rank == 0 {
            return Err(CliError::input("rank must be at least 1"));
        }
        check_nonneg("xi", self.xi)?;
        check_nonneg("lambda_w", self.lambda_w)?;
        check_nonneg("lambda_wp", self.lambda_wp)?;
        Ok(Hyper {
            rank: self.rank,
            xi: self.xi,
            lambda_w: self.lambda_w,
            lambda_wp: self.lambda_wp,
            penalty: self.penalty.to_penalty(t)?,
        })
    }
}

/// Solver settings; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Outer iterations `N`.
    #[serde(default = "default_outer")]
    pub outer_iters: usize,
    /// Sub-iterations `L` of each `H` step.
    #[serde(default = "default_inner")]
    pub inner_iters: usize,
    /// Relative objective tolerance; `null` runs all `N` iterations.
    #[serde(default = "default_tol")]
    pub tol: Option<f64>,
    #[serde(default)]
    pub schedule: StepSchedule,
    /// Disable to drop the `H ≥ 0` projection (soft and time-domain penalties).
    #[serde(default = "yes")]
    pub project_nonneg: bool,
    /// Initial step of the splitting solver (fixed hard masks).
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    /// Projection order of the alternating solver (hard `R`).
    #[serde(default)]
    pub order: ProjectionOrder,
}

fn default_outer() -> usize {
    100
}
fn default_inner() -> usize {
    50
}
fn default_tol() -> Option<f64> {
    Some(1e-8)
}
fn yes() -> bool {
    true
}
fn default_gamma0() -> f64 {
    1.0
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            outer_iters: default_outer(),
            inner_iters: default_inner(),
            tol: default_tol(),
            schedule: StepSchedule::default(),
            project_nonneg: true,
            gamma0: default_gamma0(),
            order: ProjectionOrder::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(CliError::input("outer_iters and inner_iters must be positive"));
        }
        if let Some(t) = self.tol {
            check_nonneg("tol", t)?;
        }
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return Err(CliError::input(format!("gamma0 must be positive, got {}", self.gamma0)));
        }
        self.schedule.validate()?;
        Ok(())
    }

    pub fn bcd_options(&self, seed: u64) -> BcdOptions {
        BcdOptions {
            outer_iters: self.outer_iters,
            inner: PgdConfig {
                schedule: self.schedule,
                iters: self.inner_iters,
                project_nonneg: self.project_nonneg,
            },
            tol: self.tol,
            seed,
        }
    }

    /// Hard-constraint solver matching the way the mask is given.
    pub fn hard_variant(&self, penalty: &Penalty) -> Option<HardVariant> {
        match penalty {
            Penalty::HardFreq { mask: MaskSource::Fixed(_) } => Some(HardVariant::Tos { gamma0: self.gamma0 }),
            Penalty::HardFreq { mask: MaskSource::TopR(_) } => Some(HardVariant::Heuristic { order: self.order }),
            _ => None,
        }
    }
}

/// Cartesian sweep; absent axes keep the base model's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<usize>>,
}

impl GridConfig {
    /// Expands the sweep around `base`, rank-major then `ξ`, `λ`, `R`.
    pub fn points(&self, base: &ModelConfig) -> CliResult<Vec<ModelConfig>> {
        fn axis<T: Clone>(name: &str, v: &Option<Vec<T>>, base: T) -> CliResult<Vec<T>> {
            match v {
                Some(v) if v.is_empty() => Err(CliError::input(format!("grid axis `{name}` is empty"))),
                Some(v) => Ok(v.clone()),
                None => Ok(vec![base]),
            }
        }
        if self.rank.is_none() && self.xi.is_none() && self.lambda.is_none() && self.r.is_none() {
            return Err(CliError::input("grid lists no axis"));
        }
        let hard = base.penalty.kind == PenaltyKind::HardFreq;
        if hard && self.lambda.is_some() {
            return Err(CliError::input("grid axis `lambda` does not apply to hard_freq"));
        }
        if self.r.is_some() && !(hard && base.penalty.r.is_some()) {
            return Err(CliError::input("grid axis `R` needs a hard_freq penalty given by R"));
        }
        let ranks = axis("rank", &self.rank, base.rank)?;
        let xis = axis("xi", &self.xi, base.xi)?;
        let lambdas = axis("lambda", &self.lambda.as_ref().map(|v| v.iter().map(|&l| Some(l)).collect()), base.penalty.lambda)?;
        let rs = axis("R", &self.r.as_ref().map(|v| v.iter().map(|&r| Some(r)).collect()), base.penalty.r)?;
        let mut out = Vec::new();
        for &rank in &ranks {
            for &xi in &xis {
                for &lambda in &lambdas {
                    for &r in &rs {
                        let mut m = base.clone();
                        m.rank = rank;
                        m.xi = xi;
                        m.penalty.lambda = lambda;
                        m.penalty.r = r;
                        out.push(m);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorizeConfig {
    /// Data tensor `A × B × T`.
    pub x: PathBuf,
    /// Auxiliary tensors `A × B × T_tot` (`T_tot ≥ T`).
    pub y: Vec<PathBuf>,
    pub model: ModelConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
}

/// Encoding settings for forecast and atom scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodeSettings {
    #[serde(default = "default_encode_iters")]
    pub iters: usize,
    /// Defaults to a constant `1/L` step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<StepSchedule>,
    /// Retained indices per row over the full record, for models trained
    /// with a fixed hard mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<Vec<usize>>>,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    #[serde(default)]
    pub order: ProjectionOrder,
}

fn default_encode_iters() -> usize {
    500
}

impl Default for EncodeSettings {
    fn default() -> Self {
        Self {
            iters: default_encode_iters(),
            schedule: None,
            mask: None,
            gamma0: default_gamma0(),
            order: ProjectionOrder::default(),
        }
    }
}

impl EncodeSettings {
    pub fn to_encode(&self, t_total: usize) -> CliResult<EncodeConfig> {
        let mask = match &self.mask {
            Some(kept) => Some(FrequencyMask::symmetric(t_total, kept.clone())?),
            None => None,
        };
        Ok(EncodeConfig {
            iters: self.iters,
            schedule: self.schedule,
            mask,
            gamma0: self.gamma0,
            order: self.order,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    /// Directory written by `factorize`.
    pub model: PathBuf,
    /// Full-period auxiliary tensors.
    pub y_full: Vec<PathBuf>,
    /// Held-out data over the forecast period, for scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_test: Option<PathBuf>,
    #[serde(default)]
    pub encode: EncodeSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub truth: PathBuf,
    pub prediction: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomScanConfig {
    pub model: PathBuf,
    /// Data over the full record; columns after the training length are scored.
    pub x_full: PathBuf,
    pub y_full: Vec<PathBuf>,
    #[serde(default)]
    pub encode: EncodeSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Generator settings; its seed is replaced by the run seed.
    #[serde(default)]
    pub spec: SyntheticSpec,
    /// Spatial grid `[A, B]` with `A·B = d`.
    #[serde(default = "default_synth_grid")]
    pub grid: (usize, usize),
}

fn default_synth_grid() -> (usize, usize) {
    (8, 8)
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { spec: SyntheticSpec::default(), grid: default_synth_grid() }
    }
}

fn check_nonneg(name: &str, v: f64) -> CliResult<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::input(format!("{name} must be finite and nonnegative, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_model() -> ModelConfig {
        ModelConfig {
            rank: 2,
            xi: 1.0,
            lambda_w: 0.0,
            lambda_wp: 0.0,
            penalty: PenaltySpec { kind: PenaltyKind::SoftFreq, lambda: Some(10.0), r: None, mask: None },
        }
    }

    fn full_config() -> RunConfig {
        RunConfig {
            seed: 42,
            factorize: Some(FactorizeConfig {
                x: "x.csv".into(),
                y: vec!["y0.csv".into(), "y1.bin".into()],
                model: base_model(),
                solver: SolverConfig { tol: None, ..SolverConfig::default() },
                grid: Some(GridConfig { rank: Some(vec![2, 3]), lambda: Some(vec![0.1, 1e4]), ..GridConfig::default() }),
            }),
            forecast: Some(ForecastConfig {
                model: "m".into(),
                y_full: vec!["yf.csv".into()],
                x_test: Some("xt.csv".into()),
                encode: EncodeSettings { mask: Some(vec![vec![0, 1]]), ..EncodeSettings::default() },
            }),
            evaluate: Some(EvaluateConfig { truth: "a.csv".into(), prediction: "b.csv".into() }),
            atom_scan: None,
            synth: Some(SynthConfig::default()),
        }
    }

    #[test]
    fn config_round_trips() {
        let c = full_config();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        let d = RunConfig::default();
        assert_eq!(RunConfig::from_json(&d.to_json()).unwrap(), d);
    }

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(
            r#"{"factorize": {"x": "x.csv", "y": ["y.csv"],
                "model": {"rank": 2, "xi": 1, "penalty": {"kind": "hard_freq", "R": 5}}}}"#,
        )
        .unwrap();
        let f = c.factorize.unwrap();
        assert_eq!(f.solver, SolverConfig::default());
        assert_eq!(c.seed, 0);
        assert_eq!(f.model.to_hyper(20).unwrap().penalty, Penalty::HardFreq { mask: MaskSource::TopR(5) });
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_json(r#"{"sed": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"synth": {"grid": [8, 8], "extra": 1}}"#).is_err());
    }

    #[test]
    fn penalty_specs() {
        let p = |kind, lambda, r, mask| PenaltySpec { kind, lambda, r, mask };
        assert_eq!(p(PenaltyKind::None, None, None, None).to_penalty(8).unwrap(), Penalty::none());
        assert_eq!(p(PenaltyKind::Lasso, Some(2.0), None, None).to_penalty(8).unwrap(), Penalty::Lasso { lambda: 2.0 });
        assert!(p(PenaltyKind::Ridge, None, None, None).to_penalty(8).is_err());
        assert!(p(PenaltyKind::Ridge, Some(-1.0), None, None).to_penalty(8).is_err());
        assert!(p(PenaltyKind::Lasso, Some(1.0), Some(2), None).to_penalty(8).is_err());
        assert!(p(PenaltyKind::HardFreq, None, None, None).to_penalty(8).is_err());
        assert!(p(PenaltyKind::HardFreq, None, Some(6), None).to_penalty(8).is_err());
        assert!(p(PenaltyKind::HardFreq, None, Some(2), Some(vec![vec![0]])).to_penalty(8).is_err());
        match p(PenaltyKind::HardFreq, None, None, Some(vec![vec![0, 2]])).to_penalty(8).unwrap() {
            Penalty::HardFreq { mask: MaskSource::Fixed(m) } => assert_eq!(m.row(0), &[0, 2, 6]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_expansion_counts_and_order() {
        let g = GridConfig { rank: Some(vec![2, 3]), xi: Some(vec![1.0, 10.0, 100.0]), ..GridConfig::default() };
        let pts = g.points(&base_model()).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!((pts[0].rank, pts[0].xi), (2, 1.0));
        assert_eq!((pts[5].rank, pts[5].xi), (3, 100.0));
        assert!(pts.iter().all(|m| m.penalty.lambda == Some(10.0)));
        assert!(GridConfig { xi: Some(vec![]), ..GridConfig::default() }.points(&base_model()).is_err());
        assert!(GridConfig::default().points(&base_model()).is_err());
        assert!(GridConfig { r: Some(vec![5]), ..GridConfig::default() }.points(&base_model()).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let mut c = full_config();
        c.resolve_paths(Path::new("/data/run"));
        let f = c.factorize.unwrap();
        assert_eq!(f.x, PathBuf::from("/data/run/x.csv"));
        assert_eq!(c.forecast.unwrap().x_test.unwrap(), PathBuf::from("/data/run/xt.csv"));
    }
}
