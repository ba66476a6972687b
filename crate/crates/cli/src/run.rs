//! Subcommand pipelines.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use gaplm_core::sim::{self, mean_se, replication_rng, Example, SimConfig};
use gaplm_core::weights::{cv_predictions_with, CvOptions};
use gaplm_core::*;
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::data::{load_csv, Standardization, Table};
use crate::output::{fmt_f64, to_json_string, write_table, Emitter};
use crate::{CliError, Result};

/// Covariate names in design order (splines first) and the spline indices.
pub fn covariates(cfg: &RunConfig, table: &Table) -> Result<(Vec<String>, Vec<usize>)> {
    let names: Vec<String> = if cfg.nonparam.is_empty() && cfg.param.is_empty() {
        table.names.iter().filter(|c| **c != cfg.response).cloned().collect()
    } else {
        cfg.nonparam.iter().chain(&cfg.param).cloned().collect()
    };
    if names.is_empty() {
        return Err(CliError::Config("no covariates".into()));
    }
    table.index_of(&cfg.response)?;
    Ok((names, (0..cfg.nonparam.len()).collect()))
}

/// Every nonempty covariate subset, roles fixed by `nonparam`.
pub fn all_subsets(
    p: usize,
    nonparam: &[usize],
    knots: usize,
    degree: usize,
    placement: KnotPlacement,
) -> Result<Vec<ModelSpec>> {
    if p > 20 {
        return Err(CliError::Config(format!("{p} covariates are too many for exhaustive subsets")));
    }
    (1u32..(1 << p))
        .map(|mask| {
            let vars: Vec<usize> = (0..p).filter(|b| mask & (1 << b) != 0).collect();
            let (np, lin): (Vec<usize>, Vec<usize>) = vars.into_iter().partition(|j| nonparam.contains(j));
            Ok(ModelSpec::uniform(np, lin, knots, degree, placement)?)
        })
        .collect()
}

pub struct Ensemble {
    pub specs: Vec<ModelSpec>,
    pub designs: Vec<DesignMatrix>,
    pub fits: Vec<FittedCandidate>,
    pub screening: Option<ScreeningRanking>,
    pub knots: usize,
    pub dropped: Vec<String>,
}

pub fn fit_ensemble(data: &Dataset, nonparam: &[usize], cfg: &RunConfig) -> Result<Ensemble> {
    let knots = cfg.knot_rule.knots(data.n());
    let (specs, screening) = if data.p() > cfg.screen_above {
        let ranking = dcms_rank(data)?;
        (dcms_candidates(&ranking, nonparam, knots, cfg.degree, cfg.placement)?, Some(ranking))
    } else {
        (all_subsets(data.p(), nonparam, knots, cfg.degree, cfg.placement)?, None)
    };
    let outcomes: Vec<_> = specs
        .par_iter()
        .map(|s| -> gaplm_core::Result<(DesignMatrix, FittedCandidate)> {
            let d = build_design(data, s)?;
            let f = fit_mle(&d, &data.y, &cfg.family)?;
            Ok((d, f))
        })
        .collect();
    let mut ens = Ensemble { specs: vec![], designs: vec![], fits: vec![], screening, knots, dropped: vec![] };
    for (spec, out) in specs.into_iter().zip(outcomes) {
        match out {
            Ok((d, f)) => {
                ens.specs.push(spec);
                ens.designs.push(d);
                ens.fits.push(f);
            }
            // a response outside the family support fails every candidate
            Err(e @ gaplm_core::Error::Domain(_)) => return Err(e.into()),
            Err(e) => ens.dropped.push(format!("candidate {:?}/{:?} dropped: {e}", spec.nonparam, spec.param)),
        }
    }
    if ens.specs.is_empty() {
        return Err(CliError::Numerical("every candidate fit failed".into()));
    }
    Ok(ens)
}

impl Ensemble {
    /// Weights and, for CV methods, the attained criterion.
    pub fn weigh(&self, method: WeightMethod, data: &Dataset, fam: &FamilySpec) -> Result<(WeightVector, Option<f64>)> {
        match method {
            WeightMethod::Cv(m) => {
                let folds = make_folds(data.n(), m)?;
                let opts = CvOptions { fit: FitOptions::default(), warm_start: Some(&self.fits) };
                let cvp = cv_predictions_with(data, &self.specs, fam, &folds, &opts)?;
                let fit = optimize_weights(&cvp, fam)?;
                Ok((fit.weights, Some(fit.criterion)))
            }
            _ => Ok((sim::method_weights(method, data, &self.specs, &self.fits, fam)?, None)),
        }
    }

    /// Averaged predictor on new rows, using the training bases.
    pub fn predict_eta(&self, w: &WeightVector, data: &Dataset) -> Result<Vec<f64>> {
        let mut eta = vec![0.0; data.n()];
        for ((spec, design), (fit, &wk)) in self.specs.iter().zip(&self.designs).zip(self.fits.iter().zip(&w.w)) {
            if wk == 0.0 {
                continue;
            }
            let z = build_design_with_bases(data, spec, &design.bases)?;
            let e = &z.z * DVector::from_column_slice(&fit.beta);
            for (a, b) in eta.iter_mut().zip(e.iter()) {
                *a += wk * b;
            }
        }
        Ok(eta)
    }
}

fn names_of(idx: &[usize], names: &[String]) -> Vec<String> {
    idx.iter().map(|&j| names[j].clone()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedCandidate {
    pub spec: ModelSpec,
    pub bases: Vec<SplineBasis>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub format: String,
    pub family: FamilySpec,
    pub response: String,
    pub covariates: Vec<String>,
    pub standardization: Option<Standardization>,
    pub method: WeightMethod,
    pub weights: Vec<f64>,
    pub candidates: Vec<SavedCandidate>,
}

pub const MODEL_FORMAT: &str = "gaplm-model/1";

fn open_output(path: &Option<PathBuf>) -> Result<Emitter> {
    Ok(match path {
        Some(p) => Emitter::new(Box::new(std::io::BufWriter::new(std::fs::File::create(p)?))),
        None => Emitter::stdout(),
    })
}

fn csv_path(cfg: &RunConfig, file: &str) -> Result<Option<PathBuf>> {
    match &cfg.csv_dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            Ok(Some(d.join(file)))
        }
        None => Ok(None),
    }
}

struct Prepared {
    data: Dataset,
    names: Vec<String>,
    nonparam: Vec<usize>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let table = load_csv(&cfg.input)?;
    let (names, nonparam) = covariates(cfg, &table)?;
    let data = table.dataset(Some(&cfg.response), &names)?;
    Ok(Prepared { data, names, nonparam })
}

fn run_record(
    cmd: &str,
    cfg: &RunConfig,
    data: &Dataset,
    knots: usize,
    screened: bool,
    n_candidates: Option<usize>,
) -> serde_json::Value {
    json!({
        "record": "run",
        "command": cmd,
        "n": data.n(),
        "p": data.p(),
        "family": cfg.family.kind.name(),
        "phi": cfg.family.dispersion,
        "methods": cfg.methods.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        "fold_size": cfg.fold_size,
        "knots": knots,
        "degree": cfg.degree,
        "placement": format!("{:?}", cfg.placement).to_ascii_lowercase(),
        "standardized": cfg.standardize,
        "screened": screened,
        "n_candidates": n_candidates,
        "seed": cfg.seed,
    })
}

fn standardize(cfg: &RunConfig, train: &Dataset) -> Result<Option<Standardization>> {
    if cfg.standardize {
        Ok(Some(Standardization::fit(train)?))
    } else {
        Ok(None)
    }
}

fn apply(s: &Option<Standardization>, d: Dataset) -> Result<Dataset> {
    match s {
        Some(s) => s.apply(&d),
        None => Ok(d),
    }
}

/// Full-data fit: weights, importance, optional CSV tables and model file.
pub fn run_average(cfg: &RunConfig, importance_only: bool) -> Result<()> {
    let prep = prepare(cfg)?;
    if cfg.train_fraction.is_some() && !importance_only {
        return run_holdout(cfg, prep);
    }
    let mut em = open_output(&cfg.output)?;
    let stdz = standardize(cfg, &prep.data)?;
    let data = apply(&stdz, prep.data)?;
    let ens = fit_ensemble(&data, &prep.nonparam, cfg)?;
    let cmd = if importance_only { "importance" } else { "average" };
    em.emit(&run_record(cmd, cfg, &data, ens.knots, ens.screening.is_some(), Some(ens.specs.len())))?;
    for msg in &ens.dropped {
        em.emit(&json!({ "record": "warning", "message": msg }))?;
    }
    let mut cand_rows = Vec::new();
    for (k, (spec, fit)) in ens.specs.iter().zip(&ens.fits).enumerate() {
        if !importance_only {
            em.emit(&json!({
                "record": "candidate",
                "index": k,
                "nonparam": names_of(&spec.nonparam, &prep.names),
                "param": names_of(&spec.param, &prep.names),
                "dim": fit.dim,
                "loglik": fit.loglik,
                "converged": fit.converged,
            }))?;
        }
        cand_rows.push(vec![
            k.to_string(),
            names_of(&spec.nonparam, &prep.names).join(";"),
            names_of(&spec.param, &prep.names).join(";"),
            fit.dim.to_string(),
            fmt_f64(fit.loglik),
        ]);
    }
    let mut weight_rows = Vec::new();
    let mut imp_rows = Vec::new();
    let mut first = None;
    for &method in &cfg.methods {
        let (w, crit) = ens.weigh(method, &data, &cfg.family)?;
        if !importance_only {
            em.emit(&json!({ "record": "weights", "method": method.to_string(), "weights": w.w, "criterion": crit }))?;
        }
        let imp = vima(&w, &ens.specs, data.p())?;
        for (rank, &j) in imp.ranking().iter().enumerate() {
            em.emit(&json!({
                "record": "importance",
                "method": method.to_string(),
                "variable": prep.names[j],
                "rank": rank + 1,
                "v": imp.v[j],
            }))?;
            imp_rows.push(vec![method.to_string(), prep.names[j].clone(), (rank + 1).to_string(), fmt_f64(imp.v[j])]);
        }
        for (k, wk) in w.w.iter().enumerate() {
            weight_rows.push(vec![method.to_string(), k.to_string(), fmt_f64(*wk)]);
        }
        first.get_or_insert(w);
    }
    if let Some(p) = csv_path(cfg, "candidates.csv")? {
        write_table(&p, &["index", "nonparam", "param", "dim", "loglik"], &cand_rows)?;
    }
    if let Some(p) = csv_path(cfg, "weights.csv")? {
        write_table(&p, &["method", "candidate", "weight"], &weight_rows)?;
    }
    if let Some(p) = csv_path(cfg, "importance.csv")? {
        write_table(&p, &["method", "variable", "rank", "v"], &imp_rows)?;
    }
    if let (Some(path), Some(w)) = (&cfg.save_model, first) {
        let model = SavedModel {
            format: MODEL_FORMAT.into(),
            family: cfg.family,
            response: cfg.response.clone(),
            covariates: prep.names.clone(),
            standardization: stdz,
            method: w.method,
            weights: w.w,
            candidates: ens
                .specs
                .iter()
                .zip(&ens.designs)
                .zip(&ens.fits)
                .map(|((s, d), f)| SavedCandidate { spec: s.clone(), bases: d.bases.clone(), beta: f.beta.clone() })
                .collect(),
        };
        std::fs::write(path, to_json_string(&model)? + "\n")?;
    }
    em.flush()
}

struct SplitResult {
    n_train: usize,
    n_test: usize,
    losses: Vec<(f64, bool)>,
    warnings: Vec<String>,
}

fn one_split(cfg: &RunConfig, prep: &Prepared, r: usize) -> Result<SplitResult> {
    let n = prep.data.n();
    let n_train = (cfg.train_fraction.unwrap() * n as f64).round() as usize;
    if n_train < 2 || n_train >= n {
        return Err(CliError::Config(format!("train fraction leaves {n_train} of {n} rows for training")));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut replication_rng(cfg.seed, r));
    let (tr, te) = rows.split_at(n_train);
    let (mut tr, mut te) = (tr.to_vec(), te.to_vec());
    tr.sort_unstable();
    te.sort_unstable();
    let train = prep.data.subset(&tr);
    let stdz = standardize(cfg, &train)?;
    let train = apply(&stdz, train)?;
    let test = apply(&stdz, prep.data.subset(&te))?;
    let ens = fit_ensemble(&train, &prep.nonparam, cfg)?;
    let mut losses = Vec::new();
    for &method in &cfg.methods {
        let (w, _) = ens.weigh(method, &train, &cfg.family)?;
        let eta = ens.predict_eta(&w, &test)?;
        losses.push(kl_real(&test.y, &eta, &cfg.family)?);
    }
    Ok(SplitResult { n_train, n_test: te.len(), losses, warnings: ens.dropped })
}

fn run_holdout(cfg: &RunConfig, prep: Prepared) -> Result<()> {
    let mut em = open_output(&cfg.output)?;
    let knots = cfg.knot_rule.knots((cfg.train_fraction.unwrap() * prep.data.n() as f64).round() as usize);
    em.emit(&run_record("average", cfg, &prep.data, knots, prep.data.p() > cfg.screen_above, None))?;
    let results: Vec<Result<SplitResult>> =
        (0..cfg.resplits).into_par_iter().map(|r| one_split(cfg, &prep, r)).collect();
    let mut per_method = vec![Vec::new(); cfg.methods.len()];
    let mut rows = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        let res = res?;
        for msg in &res.warnings {
            em.emit(&json!({ "record": "warning", "message": format!("split {r}: {msg}") }))?;
        }
        for (k, &(loss, clipped)) in res.losses.iter().enumerate() {
            let method = cfg.methods[k].to_string();
            em.emit(&json!({
                "record": "holdout",
                "split": r,
                "method": method,
                "n_train": res.n_train,
                "n_test": res.n_test,
                "kl_real": loss,
                "clipped": clipped,
            }))?;
            rows.push(vec![r.to_string(), method, fmt_f64(loss), clipped.to_string()]);
            per_method[k].push(loss);
        }
    }
    for (k, losses) in per_method.iter().enumerate() {
        let (mean, se) = mean_se(losses);
        em.emit(&json!({
            "record": "holdout_summary",
            "method": cfg.methods[k].to_string(),
            "splits": losses.len(),
            "mean": mean,
            "se": se,
        }))?;
    }
    if let Some(p) = csv_path(cfg, "holdout.csv")? {
        write_table(&p, &["split", "method", "kl_real", "clipped"], &rows)?;
    }
    em.flush()
}

pub fn run_screen(cfg: &RunConfig) -> Result<()> {
    let prep = prepare(cfg)?;
    let mut em = open_output(&cfg.output)?;
    let ranking = dcms_rank(&prep.data)?;
    em.emit(&run_record("screen", cfg, &prep.data, cfg.knot_rule.knots(prep.data.n()), true, None))?;
    let mut rows = Vec::new();
    for (rank, &j) in ranking.order.iter().enumerate() {
        em.emit(
            &json!({ "record": "screen", "rank": rank + 1, "variable": prep.names[j], "dcorr2": ranking.rho_hat[j] }),
        )?;
        rows.push(vec![(rank + 1).to_string(), prep.names[j].clone(), fmt_f64(ranking.rho_hat[j])]);
    }
    if let Some(p) = csv_path(cfg, "screen.csv")? {
        write_table(&p, &["rank", "variable", "dcorr2"], &rows)?;
    }
    em.flush()
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read model {}: {e}", path.display())))?;
    let model: SavedModel =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid model file: {e}")))?;
    if model.format != MODEL_FORMAT {
        return Err(CliError::Config(format!("unsupported model format '{}'", model.format)));
    }
    if model.weights.len() != model.candidates.len() {
        return Err(CliError::Config("model weights and candidates differ in length".into()));
    }
    Ok(model)
}

/// Averaged η̂ and μ̂ for each row of `table`.
pub fn predict(model: &SavedModel, table: &Table) -> Result<(Vec<f64>, Vec<f64>)> {
    let data = apply(&model.standardization, table.dataset(None, &model.covariates)?)?;
    let mut eta = vec![0.0; data.n()];
    for (c, &wk) in model.candidates.iter().zip(&model.weights) {
        let z = build_design_with_bases(&data, &c.spec, &c.bases)?;
        if z.dim() != c.beta.len() {
            return Err(CliError::Config("model coefficients do not match the candidate design".into()));
        }
        let e = &z.z * DVector::from_column_slice(&c.beta);
        for (a, b) in eta.iter_mut().zip(e.iter()) {
            *a += wk * b;
        }
    }
    let mu = eta.iter().map(|&e| model.family.mean(e)).collect();
    Ok((eta, mu))
}

pub fn run_predict(model: &Path, input: &Path, output: Option<&Path>) -> Result<()> {
    let model = load_model(model)?;
    let table = load_csv(input)?;
    let (eta, mu) = predict(&model, &table)?;
    let rows: Vec<Vec<String>> = eta
        .iter()
        .zip(&mu)
        .enumerate()
        .map(|(i, (e, m))| vec![(i + 1).to_string(), fmt_f64(*e), fmt_f64(*m)])
        .collect();
    let header = ["row", "eta", "mu"];
    match output {
        Some(p) => write_table(p, &header, &rows),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            let err = |e: csv::Error| CliError::Data(format!("csv: {e}"));
            w.write_record(header).map_err(err)?;
            for r in &rows {
                w.write_record(r).map_err(err)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimFormat {
    Table,
    Csv,
    Jsonl,
}

#[derive(Args, Debug, Clone)]
pub struct SimArgs {
    /// ex1, ex2, ex3, dc-demo or gaussian-inclusion.
    #[arg(long, default_value = "ex1")]
    pub example: String,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, env = "GAPLM_SEED", default_value_t = crate::config::DEFAULT_SEED)]
    pub seed: u64,
    /// CV fold sizes run next to AIC, BIC, SAIC and SBIC.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub fold_sizes: Vec<usize>,
    /// Replaces the method list, e.g. `cv-5,sbic`.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub knot_rule: Option<String>,
    #[arg(long, value_enum, default_value_t = SimFormat::Table)]
    pub format: SimFormat,
    /// CSV of per-replication losses.
    #[arg(long)]
    pub dump_losses: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn sim_config(args: &SimArgs) -> Result<SimConfig> {
    let example: Example = args.example.parse().map_err(|e: gaplm_core::Error| CliError::Config(e.to_string()))?;
    let mut cfg = SimConfig::standard(example, args.n, args.rho, args.reps, args.seed);
    cfg.methods = match &args.methods {
        Some(list) => list
            .iter()
            .map(|m| m.parse::<WeightMethod>().map_err(|e| CliError::Config(e.to_string())))
            .collect::<Result<_>>()?,
        None => sim::standard_methods(&args.fold_sizes),
    };
    if let Some(rule) = &args.knot_rule {
        cfg.knot_rule = rule.parse().map_err(|e: gaplm_core::Error| CliError::Config(e.to_string()))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run_simulate(args: &SimArgs) -> Result<()> {
    let cfg = sim_config(args)?;
    let summary = sim::run_replications(&cfg)?;
    let mut out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    let failed = summary.failed.len();
    match args.format {
        SimFormat::Table => {
            writeln!(
                out,
                "{:?} n={} rho={} reps={} failed={}",
                cfg.example,
                cfg.n,
                cfg.rho,
                summary.reps.len(),
                failed
            )?;
            writeln!(out, "{:<8} {:>12} {:>12} {:>10}", "method", "mean", "se", "w_cor")?;
            for m in &summary.methods {
                writeln!(out, "{:<8} {:>12.6} {:>12.6} {:>10.4}", m.method.to_string(), m.mean, m.se, m.mean_w_cor)?;
            }
        }
        SimFormat::Csv => {
            writeln!(out, "method,mean,se,mean_w_cor")?;
            for m in &summary.methods {
                writeln!(out, "{},{},{},{}", m.method, fmt_f64(m.mean), fmt_f64(m.se), fmt_f64(m.mean_w_cor))?;
            }
        }
        SimFormat::Jsonl => {
            for m in &summary.methods {
                let rec = json!({
                    "record": "simulation",
                    "example": format!("{:?}", cfg.example),
                    "n": cfg.n,
                    "rho": cfg.rho,
                    "reps": summary.reps.len(),
                    "failed": failed,
                    "method": m.method.to_string(),
                    "mean": m.mean,
                    "se": m.se,
                    "mean_w_cor": m.mean_w_cor,
                });
                writeln!(out, "{}", to_json_string(&rec)?)?;
            }
        }
    }
    out.flush()?;
    if let Some(p) = &args.dump_losses {
        let mut rows = Vec::new();
        for m in &summary.methods {
            for (rep, loss) in summary.reps.iter().zip(&m.losses) {
                rows.push(vec![rep.to_string(), m.method.to_string(), fmt_f64(*loss)]);
            }
        }
        write_table(p, &["rep", "method", "loss"], &rows)?;
    }
    Ok(())
}
