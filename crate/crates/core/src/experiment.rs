//! Config-driven experiment runner. Each stage reads its inputs from the
//! output directory and writes its own artifacts there, so the stages can
//! run one at a time or chained by [`run_experiment`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{
    gen_gaussian_id, gen_wild_scenario, load_labeled_csv, load_points_csv, load_truth_csv,
    mix_huber, save_labeled_csv, save_points_csv, save_truth_csv, LabeledSet, Scenario,
};
use crate::erm::{train_id_classifier, ErmHyper};
use crate::eval::{evaluate_classifier, parse_key_values, posthoc_eval};
use crate::filter::{
    load_scorer, run_filter, save_scorer, write_score_dump, FilterConfig, ScoreKind,
};
use crate::model::{load_params, save_params, ParamsFile};
use crate::numerics::{DenseVector, SeededRng};
use crate::oodtrain::{train_ood_classifier, OodHyper};
use crate::theory::{grad_discrepancy, theorem1_diagnostics, zeta_sweep, TheoryConstants};
use crate::{Result, SalError};

/// Artifact file names inside the output directory.
pub mod artifacts {
    pub const ID_TRAIN: &str = "id_train.csv";
    pub const ID_TEST: &str = "id_test.csv";
    pub const WILD: &str = "wild.csv";
    pub const WILD_TRUTH: &str = "wild_truth.csv";
    pub const OOD_TEST: &str = "ood_test.csv";
    pub const INLIER_POOL: &str = "inlier_pool.csv";
    pub const OUTLIER_POOL: &str = "outlier_pool.csv";
    pub const ID_MODEL: &str = "id_model.txt";
    pub const ID_SUMMARY: &str = "id_summary.txt";
    pub const SCORES: &str = "scores.csv";
    pub const FILTER_STATE: &str = "filter_state.txt";
    pub const CANDIDATES: &str = "candidates.csv";
    pub const FILTER_SUMMARY: &str = "filter_summary.txt";
    pub const GRADNORM_SUMMARY: &str = "filter_gradnorm_summary.txt";
    pub const OOD_MODEL: &str = "ood_model.txt";
    pub const OOD_SUMMARY: &str = "ood_summary.txt";
    pub const METRICS: &str = "metrics.txt";
    pub const METRICS_POSTHOC: &str = "metrics_posthoc.txt";
    pub const DISCREPANCY: &str = "discrepancy.csv";
    pub const THEOREM1: &str = "theorem1.txt";
    pub const MANIFEST: &str = "manifest.txt";

    /// Every file a run may produce, in stage order.
    pub const ALL: &[&str] = &[
        ID_TRAIN,
        ID_TEST,
        WILD,
        WILD_TRUTH,
        OOD_TEST,
        INLIER_POOL,
        OUTLIER_POOL,
        ID_MODEL,
        ID_SUMMARY,
        SCORES,
        FILTER_STATE,
        CANDIDATES,
        FILTER_SUMMARY,
        GRADNORM_SUMMARY,
        OOD_MODEL,
        OOD_SUMMARY,
        METRICS,
        METRICS_POSTHOC,
        DISCREPANCY,
        THEOREM1,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    One,
    Two,
    /// Datasets read from the paths in `[data]`.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub id_train: Option<PathBuf>,
    pub id_test: Option<PathBuf>,
    pub wild: Option<PathBuf>,
    pub wild_truth: Option<PathBuf>,
    pub ood_test: Option<PathBuf>,
    pub inlier_pool: Option<PathBuf>,
    pub outlier_pool: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            per_class_train: 1000,
            per_class_test: 1000,
            id_train: None,
            id_test: None,
            wild: None,
            wild_truth: None,
            ood_test: None,
            inlier_pool: None,
            outlier_pool: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Also evaluate the filtering score directly as a detector.
    pub posthoc: bool,
    /// Also filter with GradNorm and report its filtering errors.
    pub gradnorm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryOptions {
    /// Mixing ratios for the discrepancy sweep; empty skips the stage.
    pub pis: Vec<f64>,
    /// Mixture size per ratio.
    pub m: usize,
    pub beta1: Option<f64>,
    pub eta: Option<f64>,
    /// Defaults to the final ERM risk.
    pub r_in_star: Option<f64>,
    /// Defaults to the largest observed wild score.
    pub m_prime: Option<f64>,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        TheoryOptions {
            pis: vec![0.05, 0.1, 0.2, 0.5, 0.7, 0.9, 1.0],
            m: 1000,
            beta1: None,
            eta: None,
            r_in_star: None,
            m_prime: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenario: DataSource,
    pub pi: f64,
    pub m: usize,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub erm: ErmHyper,
    pub filter: FilterConfig,
    pub ood: OodHyper,
    pub eval: EvalOptions,
    pub theory: TheoryOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            scenario: DataSource::One,
            pi: 0.1,
            m: 10_000,
            out_dir: PathBuf::from("sal_out"),
            data: DataConfig::default(),
            erm: ErmHyper::default(),
            filter: FilterConfig::default(),
            ood: OodHyper::default(),
            eval: EvalOptions::default(),
            theory: TheoryOptions::default(),
        }
    }
}

// Pool sizes produced by the toy generator.
const TOY_INLIER_POOL: usize = 9000;
const TOY_OUTLIER_POOL: usize = 1000;

fn field_err(field: &str, msg: impl Into<String>) -> SalError {
    SalError::Config {
        field: field.to_string(),
        msg: msg.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| field_err("config", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(SalError::MissingArtifact(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| SalError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            SalError::Config { msg, .. } => field_err(&path.display().to_string(), msg),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// SHA-256 of the canonical TOML form of every field.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let prefixed = |section: &str, r: std::result::Result<(), (&'static str, String)>| {
            r.map_err(|(f, msg)| field_err(&format!("{section}.{f}"), msg))
        };
        if self.seed > i64::MAX as u64 {
            return Err(field_err("seed", format!("must not exceed {}", i64::MAX)));
        }
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(field_err("pi", format!("must lie in [0, 1], got {}", self.pi)));
        }
        if self.m == 0 {
            return Err(field_err("m", "must be at least 1"));
        }
        prefixed("erm", self.erm.validate())?;
        prefixed("filter", self.filter.validate())?;
        prefixed("ood", self.ood.validate())?;

        let t = &self.theory;
        if let Some(pi) = t.pis.iter().find(|&&pi| !(pi > 0.0 && pi <= 1.0)) {
            return Err(field_err("theory.pis", format!("every ratio must lie in (0, 1], got {pi}")));
        }
        if !t.pis.is_empty() && t.m == 0 {
            return Err(field_err("theory.m", "must be at least 1"));
        }
        if let Some(eta) = t.eta {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(field_err("theory.eta", format!("must lie in (0, 1), got {eta}")));
            }
        }

        match self.scenario {
            DataSource::One | DataSource::Two => {
                let n_out = (self.pi * self.m as f64).round() as usize;
                if n_out > TOY_OUTLIER_POOL {
                    return Err(field_err(
                        "m",
                        format!("pi * m = {n_out} exceeds the {TOY_OUTLIER_POOL} toy outliers"),
                    ));
                }
                if self.m - n_out > TOY_INLIER_POOL {
                    return Err(field_err(
                        "m",
                        format!(
                            "{} wild inliers requested, toy pool holds {TOY_INLIER_POOL}",
                            self.m - n_out
                        ),
                    ));
                }
                for &pi in &t.pis {
                    let n = (pi * t.m as f64).round() as usize;
                    if n > TOY_OUTLIER_POOL || t.m - n > TOY_INLIER_POOL {
                        return Err(field_err(
                            "theory.m",
                            format!("mixture of {} at pi = {pi} exceeds the toy pools", t.m),
                        ));
                    }
                }
                let n_train = 3 * self.data.per_class_train;
                if self.erm.batch_size > n_train {
                    return Err(field_err(
                        "erm.batch_size",
                        format!("exceeds the {n_train} ID training points"),
                    ));
                }
                if self.data.per_class_test == 0 {
                    return Err(field_err("data.per_class_test", "must be at least 1"));
                }
            }
            DataSource::Csv => {
                let d = &self.data;
                for (name, path) in [
                    ("data.id_train", &d.id_train),
                    ("data.id_test", &d.id_test),
                    ("data.wild", &d.wild),
                    ("data.ood_test", &d.ood_test),
                ] {
                    match path {
                        None => return Err(field_err(name, "required when scenario = \"csv\"")),
                        Some(p) if !p.exists() => {
                            return Err(field_err(name, format!("{} does not exist", p.display())))
                        }
                        _ => {}
                    }
                }
                for (name, path) in [
                    ("data.wild_truth", &d.wild_truth),
                    ("data.inlier_pool", &d.inlier_pool),
                    ("data.outlier_pool", &d.outlier_pool),
                ] {
                    if let Some(p) = path {
                        if !p.exists() {
                            return Err(field_err(name, format!("{} does not exist", p.display())));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GenData,
    TrainId,
    Filter,
    TrainOod,
    Eval,
    TheoryCheck,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::GenData,
        Stage::TrainId,
        Stage::Filter,
        Stage::TrainOod,
        Stage::Eval,
        Stage::TheoryCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::TrainId => "train-id",
            Stage::Filter => "filter",
            Stage::TrainOod => "train-ood",
            Stage::Eval => "eval",
            Stage::TheoryCheck => "theory-check",
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| SalError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(SalError::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| SalError::io(path, e))
}

fn lookup(path: &Path, kv: &[(String, f64)], key: &str) -> Result<f64> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| SalError::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("missing `{key}`"),
        })
}

fn read_summary(path: &Path) -> Result<Vec<(String, f64)>> {
    parse_key_values(path, &read_text(path)?)
}

fn load_wild_points(cfg: &ExperimentConfig) -> Result<Vec<DenseVector>> {
    Ok(load_points_csv(&cfg.path(artifacts::WILD))?.1)
}

fn load_model(path: &Path) -> Result<ParamsFile> {
    if !path.exists() {
        return Err(SalError::MissingArtifact(path.to_path_buf()));
    }
    load_params(path)
}

fn toy_scenario(src: DataSource) -> Option<Scenario> {
    match src {
        DataSource::One => Some(Scenario::One),
        DataSource::Two => Some(Scenario::Two),
        DataSource::Csv => None,
    }
}

/// Writes the ID train/test sets, the wild mixture and its hidden truth,
/// held-out OOD points and, when available, the pools the mixture came from.
pub fn stage_gen_data(cfg: &ExperimentConfig) -> Result<()> {
    use artifacts::*;
    if let Some(sc) = toy_scenario(cfg.scenario) {
        let d = &cfg.data;
        let id_train = gen_gaussian_id(d.per_class_train, &mut SeededRng::for_stage(cfg.seed, "data.id_train"));
        let id_test = gen_gaussian_id(d.per_class_test, &mut SeededRng::for_stage(cfg.seed, "data.id_test"));
        let pools = gen_wild_scenario(sc, &mut SeededRng::for_stage(cfg.seed, "data.pools"));
        let wild = mix_huber(
            pools.inliers.points(),
            &pools.outliers,
            cfg.pi,
            cfg.m,
            &mut SeededRng::for_stage(cfg.seed, "data.mix"),
        )?;
        let ood_test = gen_wild_scenario(sc, &mut SeededRng::for_stage(cfg.seed, "data.ood_test")).outliers;

        save_labeled_csv(&cfg.path(ID_TRAIN), &id_train)?;
        save_labeled_csv(&cfg.path(ID_TEST), &id_test)?;
        save_points_csv(&cfg.path(WILD), 2, wild.points())?;
        save_truth_csv(&cfg.path(WILD_TRUTH), wild.truth())?;
        save_points_csv(&cfg.path(OOD_TEST), 2, &ood_test)?;
        save_labeled_csv(&cfg.path(INLIER_POOL), &pools.inliers)?;
        save_points_csv(&cfg.path(OUTLIER_POOL), 2, &pools.outliers)?;
        return Ok(());
    }

    let d = &cfg.data;
    let need = |p: &Option<PathBuf>, field: &str| {
        p.clone()
            .ok_or_else(|| field_err(field, "required when scenario = \"csv\""))
    };
    let id_train = load_labeled_csv(&need(&d.id_train, "data.id_train")?)?;
    let id_test = load_labeled_csv(&need(&d.id_test, "data.id_test")?)?;
    let (dim, wild) = load_points_csv(&need(&d.wild, "data.wild")?)?;
    let (ood_dim, ood_test) = load_points_csv(&need(&d.ood_test, "data.ood_test")?)?;
    for (what, got) in [("wild", dim), ("ood_test", ood_dim), ("id_test", id_test.dim())] {
        if got != id_train.dim() {
            return Err(field_err(
                &format!("data.{what}"),
                format!("dimension {got} differs from id_train's {}", id_train.dim()),
            ));
        }
    }
    save_labeled_csv(&cfg.path(ID_TRAIN), &id_train)?;
    save_labeled_csv(&cfg.path(ID_TEST), &id_test)?;
    save_points_csv(&cfg.path(WILD), dim, &wild)?;
    save_points_csv(&cfg.path(OOD_TEST), dim, &ood_test)?;
    if let Some(p) = &d.wild_truth {
        let truth = load_truth_csv(p)?;
        if truth.len() != wild.len() {
            return Err(field_err(
                "data.wild_truth",
                format!("{} rows for {} wild points", truth.len(), wild.len()),
            ));
        }
        save_truth_csv(&cfg.path(WILD_TRUTH), &truth)?;
    }
    if let Some(p) = &d.inlier_pool {
        save_labeled_csv(&cfg.path(INLIER_POOL), &load_labeled_csv(p)?)?;
    }
    if let Some(p) = &d.outlier_pool {
        let (dim, pts) = load_points_csv(p)?;
        save_points_csv(&cfg.path(OUTLIER_POOL), dim, &pts)?;
    }
    Ok(())
}

pub fn stage_train_id(cfg: &ExperimentConfig) -> Result<()> {
    let s_in = load_labeled_csv(&cfg.path(artifacts::ID_TRAIN))?;
    let out = train_id_classifier(&s_in, &cfg.erm, cfg.seed)?;
    save_params(
        &cfg.path(artifacts::ID_MODEL),
        &ParamsFile {
            mlp: out.params,
            head: None,
        },
    )?;
    write_text(
        &cfg.path(artifacts::ID_SUMMARY),
        &format!("initial_risk: {}\nfinal_risk: {}\n", out.initial_risk, out.final_risk),
    )
}

fn filter_summary_text(out: &crate::filter::FilterOutcome) -> String {
    let mut s = String::new();
    writeln!(s, "threshold: {}", out.threshold).unwrap();
    writeln!(s, "num_candidates: {}", out.candidates.len()).unwrap();
    writeln!(s, "num_wild: {}", out.scores.len()).unwrap();
    let max = out.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    writeln!(s, "max_score: {max}").unwrap();
    writeln!(s, "svd_converged: {}", u8::from(out.svd_converged)).unwrap();
    if let Some(e) = out.errors {
        writeln!(s, "err_in: {}", e.err_in).unwrap();
        writeln!(s, "err_out: {}", e.err_out).unwrap();
        writeln!(s, "contamination: {}", e.contamination).unwrap();
    }
    s
}

pub fn stage_filter(cfg: &ExperimentConfig) -> Result<()> {
    use artifacts::*;
    let model = load_model(&cfg.path(ID_MODEL))?;
    let s_in = load_labeled_csv(&cfg.path(ID_TRAIN))?;
    let wild = load_wild_points(cfg)?;
    let truth_path = cfg.path(WILD_TRUTH);
    // truth is read only to grade the filter after it has run
    let truth = if truth_path.exists() {
        Some(load_truth_csv(&truth_path)?)
    } else {
        None
    };

    let mut rng = SeededRng::for_stage(cfg.seed, "filter.svd");
    let mut out = run_filter(&model.mlp, &s_in, &wild, &cfg.filter, &mut rng)?;
    if let Some(t) = &truth {
        out.attach_truth(t)?;
    }
    write_score_dump(&cfg.path(SCORES), &out.scores, truth.as_deref())?;
    save_scorer(&cfg.path(FILTER_STATE), &out.scorer)?;
    let mut cands = String::from("index\n");
    for i in &out.candidates {
        writeln!(cands, "{i}").unwrap();
    }
    write_text(&cfg.path(CANDIDATES), &cands)?;
    write_text(&cfg.path(FILTER_SUMMARY), &filter_summary_text(&out))?;

    if cfg.eval.gradnorm && cfg.filter.score_kind != ScoreKind::GradNorm {
        let gcfg = FilterConfig {
            score_kind: ScoreKind::GradNorm,
            ..cfg.filter
        };
        let mut rng = SeededRng::for_stage(cfg.seed, "filter.gradnorm");
        let mut g = run_filter(&model.mlp, &s_in, &wild, &gcfg, &mut rng)?;
        if let Some(t) = &truth {
            g.attach_truth(t)?;
        }
        write_text(&cfg.path(GRADNORM_SUMMARY), &filter_summary_text(&g))?;
    }
    Ok(())
}

fn load_candidates(path: &Path, n_wild: usize) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| SalError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let idx: usize = line.trim().parse().map_err(|_| err(format!("bad index `{line}`")))?;
        if idx >= n_wild {
            return Err(err(format!("index {idx} out of range for {n_wild} wild points")));
        }
        out.push(idx);
    }
    Ok(out)
}

pub fn stage_train_ood(cfg: &ExperimentConfig) -> Result<()> {
    use artifacts::*;
    let model = load_model(&cfg.path(ID_MODEL))?;
    let s_in = load_labeled_csv(&cfg.path(ID_TRAIN))?;
    let wild = load_wild_points(cfg)?;
    let cands = load_candidates(&cfg.path(CANDIDATES), wild.len())?;
    let s_t: Vec<DenseVector> = cands.iter().map(|&i| wild[i].clone()).collect();
    let out = train_ood_classifier(&s_in, &s_t, &model.mlp, &cfg.ood, cfg.seed)?;
    save_params(
        &cfg.path(OOD_MODEL),
        &ParamsFile {
            mlp: out.params,
            head: Some(out.head),
        },
    )?;
    write_text(
        &cfg.path(OOD_SUMMARY),
        &format!(
            "initial_objective: {}\nfinal_objective: {}\n",
            out.initial_objective, out.final_objective
        ),
    )
}

fn filter_errors_from_summary(path: &Path) -> Result<Option<crate::filter::FilterErrors>> {
    if !path.exists() {
        return Ok(None);
    }
    let kv = read_summary(path)?;
    if !kv.iter().any(|(k, _)| k == "contamination") {
        return Ok(None);
    }
    Ok(Some(crate::filter::FilterErrors {
        err_in: lookup(path, &kv, "err_in")?,
        err_out: lookup(path, &kv, "err_out")?,
        contamination: lookup(path, &kv, "contamination")?,
    }))
}

/// Trained-classifier metrics when an OOD model exists, and post-hoc score
/// metrics when enabled. Fails only if neither can run.
pub fn stage_eval(cfg: &ExperimentConfig) -> Result<()> {
    use artifacts::*;
    let id_test = load_labeled_csv(&cfg.path(ID_TEST))?;
    let (_, ood_test) = load_points_csv(&cfg.path(OOD_TEST))?;
    let errors = filter_errors_from_summary(&cfg.path(FILTER_SUMMARY))?;

    let ood_path = cfg.path(OOD_MODEL);
    if ood_path.exists() || !cfg.eval.posthoc {
        let model = load_model(&ood_path)?;
        let head = model.head.ok_or_else(|| SalError::Parse {
            path: ood_path.clone(),
            line: 0,
            msg: "no binary head in OOD model".into(),
        })?;
        let report = evaluate_classifier(&model.mlp, &head, &id_test, &ood_test)?.with_filter_errors(errors);
        report.save(&cfg.path(METRICS))?;
    }
    if cfg.eval.posthoc {
        let model = load_model(&cfg.path(ID_MODEL))?;
        let state = cfg.path(FILTER_STATE);
        if !state.exists() {
            return Err(SalError::MissingArtifact(state));
        }
        let scorer = load_scorer(&state)?;
        let report = posthoc_eval(&model.mlp, &scorer, &id_test, &ood_test)?.with_filter_errors(errors);
        report.save(&cfg.path(METRICS_POSTHOC))?;
    }
    Ok(())
}

fn load_inlier_pool(path: &Path) -> Result<Vec<DenseVector>> {
    if !path.exists() {
        return Err(SalError::MissingArtifact(path.to_path_buf()));
    }
    load_labeled_csv(path).map(|s: LabeledSet| s.points().to_vec())
}

/// Discrepancy sweep over the configured ratios, plus the main-error
/// diagnostics when `beta1` and `eta` are supplied.
pub fn stage_theory_check(cfg: &ExperimentConfig) -> Result<()> {
    use artifacts::*;
    let model = load_model(&cfg.path(ID_MODEL))?;
    let s_in = load_labeled_csv(&cfg.path(ID_TRAIN))?;
    let inliers = load_inlier_pool(&cfg.path(INLIER_POOL))?;
    let outlier_path = cfg.path(OUTLIER_POOL);
    if !outlier_path.exists() {
        return Err(SalError::MissingArtifact(outlier_path));
    }
    let (_, outliers) = load_points_csv(&outlier_path)?;
    let t = &cfg.theory;
    let mut report = zeta_sweep(&model.mlp, s_in.points(), &inliers, &outliers, &t.pis, t.m, cfg.seed)?;

    if let (Some(beta1), Some(eta)) = (t.beta1, t.eta) {
        let r_in_star = match t.r_in_star {
            Some(r) => r,
            None => {
                let p = cfg.path(ID_SUMMARY);
                lookup(&p, &read_summary(&p)?, "final_risk")?
            }
        };
        let fs_path = cfg.path(FILTER_SUMMARY);
        let summary = read_summary(&fs_path)?;
        let threshold = lookup(&fs_path, &summary, "threshold")?;
        let m_prime = match t.m_prime {
            Some(v) => v,
            None => lookup(&fs_path, &summary, "max_score")?,
        };
        let wild = load_wild_points(cfg)?;
        let zeta = grad_discrepancy(&model.mlp, s_in.points(), &wild)?;
        let diag = theorem1_diagnostics(zeta, cfg.pi, eta, beta1, r_in_star, threshold, m_prime)?;
        report.theorem1 = Some((TheoryConstants { beta1, eta, r_in_star }, diag));
    }

    report.save_csv(&cfg.path(DISCREPANCY))?;
    if let Some(text) = report.theorem1_text() {
        write_text(&cfg.path(THEOREM1), &text)?;
    }
    Ok(())
}

pub fn run_stage(cfg: &ExperimentConfig, stage: Stage) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| SalError::io(&cfg.out_dir, e))?;
    match stage {
        Stage::GenData => stage_gen_data(cfg),
        Stage::TrainId => stage_train_id(cfg),
        Stage::Filter => stage_filter(cfg),
        Stage::TrainOod => stage_train_ood(cfg),
        Stage::Eval => stage_eval(cfg),
        Stage::TheoryCheck => stage_theory_check(cfg),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub failed: Option<(Stage, String)>,
    /// Artifact name and SHA-256 of its contents.
    pub artifacts: Vec<(String, String)>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "config_hash: {}", self.config_hash).unwrap();
        writeln!(s, "seed: {}", self.seed).unwrap();
        match &self.failed {
            None => writeln!(s, "status: ok").unwrap(),
            Some((stage, msg)) => {
                writeln!(s, "status: failed").unwrap();
                writeln!(s, "failed_stage: {}", stage.name()).unwrap();
                writeln!(s, "error: {}", msg.replace('\n', " ")).unwrap();
            }
        }
        for (name, digest) in &self.artifacts {
            writeln!(s, "artifact: {name} sha256={digest}").unwrap();
        }
        s
    }
}

fn collect_artifacts(dir: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for name in artifacts::ALL {
        let p = dir.join(name);
        if p.exists() {
            let bytes = fs::read(&p).map_err(|e| SalError::io(&p, e))?;
            out.push((name.to_string(), hex::encode(Sha256::digest(&bytes))));
        }
    }
    Ok(out)
}

/// Validates, then runs every stage in order and writes the manifest. On a
/// stage error the artifacts written so far are kept and the manifest
/// names the failing stage.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| SalError::io(&cfg.out_dir, e))?;
    // stale files from an earlier run would otherwise enter the manifest
    for name in artifacts::ALL.iter().chain([&artifacts::MANIFEST]) {
        let p = cfg.path(name);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| SalError::io(&p, e))?;
        }
    }

    let mut failed = None;
    let mut error = None;
    for stage in Stage::ALL {
        if stage == Stage::TheoryCheck
            && (cfg.theory.pis.is_empty() || !cfg.path(artifacts::OUTLIER_POOL).exists())
        {
            continue;
        }
        if let Err(e) = run_stage(cfg, stage) {
            failed = Some((stage, e.to_string()));
            error = Some(e);
            break;
        }
    }
    let manifest = Manifest {
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        failed,
        artifacts: collect_artifacts(&cfg.out_dir)?,
    };
    write_text(&cfg.path(artifacts::MANIFEST), &manifest.to_text())?;
    match error {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}
