//! Flags, the flat `key=value` config file, and their resolution into a
//! [`RunConfig`]. Flags override the file; the seed falls back to `GAPLM_SEED`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use gaplm_core::{FamilyKind, FamilySpec, KnotPlacement, KnotRule, WeightMethod};

use crate::{CliError, Result};

pub const DEFAULT_SEED: u64 = 1;

/// Options shared by `average`, `screen` and `importance`.
#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// Flat key=value file; keys are the long flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV file with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Response column name.
    #[arg(long)]
    pub response: Option<String>,
    /// Columns entering through splines (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub nonparam: Option<Vec<String>>,
    /// Columns entering linearly (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub param: Option<Vec<String>>,
    /// bernoulli, gaussian or poisson.
    #[arg(long)]
    pub family: Option<String>,
    /// Dispersion for the gaussian family.
    #[arg(long)]
    pub phi: Option<f64>,
    /// CV fold size m.
    #[arg(long)]
    pub fold_size: Option<usize>,
    /// Comma list of cv, cv-<m>, aic, bic, saic, sbic, or all.
    #[arg(long)]
    pub method: Option<String>,
    /// ceil_n_fifth, ceil_n_fifth_total, ceil_2n_fifth_minus1, ceil_2n_fifth_minus1_total,
    /// or an explicit interior knot count.
    #[arg(long)]
    pub knot_rule: Option<String>,
    /// quantile or equidistant.
    #[arg(long)]
    pub placement: Option<String>,
    #[arg(long)]
    pub degree: Option<usize>,
    /// Standardize covariates to mean 0, variance 1.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Fraction of rows used for training in holdout evaluation.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Number of random train/test splits.
    #[arg(long)]
    pub resplits: Option<usize>,
    /// Screen with distance correlation when the covariate count exceeds this.
    #[arg(long)]
    pub screen_above: Option<usize>,
    /// JSON-lines report path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Directory for CSV tables.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
    /// Write the fitted ensemble for `predict`.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub response: String,
    /// Empty together with `param` means every other column, linearly.
    pub nonparam: Vec<String>,
    pub param: Vec<String>,
    pub family: FamilySpec,
    pub fold_size: usize,
    pub methods: Vec<WeightMethod>,
    pub knot_rule: KnotRule,
    pub placement: KnotPlacement,
    pub degree: usize,
    pub standardize: bool,
    pub seed: u64,
    pub threads: Option<usize>,
    pub train_fraction: Option<f64>,
    pub resplits: usize,
    pub screen_above: usize,
    pub output: Option<PathBuf>,
    pub csv_dir: Option<PathBuf>,
    pub save_model: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "input",
    "response",
    "nonparam",
    "param",
    "family",
    "phi",
    "fold-size",
    "method",
    "knot-rule",
    "placement",
    "degree",
    "standardize",
    "seed",
    "threads",
    "train-fraction",
    "resplits",
    "screen-above",
    "output",
    "csv-dir",
    "save-model",
];

/// Parses `key=value` lines; `#` starts a comment, underscores in keys read as dashes.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("config line {}: unknown key '{}'", i + 1, k.trim())));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_file(&text)
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| CliError::Config(format!("invalid value '{v}' for {key}: {e}")))
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

struct Layer<'a> {
    file: &'a BTreeMap<String, String>,
}

impl Layer<'_> {
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.file.get(key).map(|v| parse::<T>(key, v)).transpose(),
        }
    }

    fn list(&self, flag: Option<Vec<String>>, key: &str) -> Vec<String> {
        flag.unwrap_or_else(|| self.file.get(key).map(|v| list(v)).unwrap_or_default())
    }
}

/// `cv` takes the configured fold size; `all` is AIC, BIC, SAIC, SBIC and CV-m.
pub fn parse_methods(text: &str, fold_size: usize) -> Result<Vec<WeightMethod>> {
    let mut out = Vec::new();
    for item in list(text) {
        match item.to_ascii_lowercase().as_str() {
            "cv" => out.push(WeightMethod::Cv(fold_size)),
            "all" => out.extend([
                WeightMethod::Aic,
                WeightMethod::Bic,
                WeightMethod::Saic,
                WeightMethod::Sbic,
                WeightMethod::Cv(fold_size),
            ]),
            _ => out.push(parse::<WeightMethod>("method", &item)?),
        }
    }
    let mut seen = Vec::new();
    out.retain(|m| {
        let fresh = !seen.contains(m);
        seen.push(*m);
        fresh
    });
    if out.is_empty() {
        return Err(CliError::Config("no weighting method given".into()));
    }
    Ok(out)
}

pub fn resolve(args: RunArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    let l = Layer { file: &file };
    let input: PathBuf = l.get(args.input, "input")?.ok_or_else(|| CliError::Config("missing --input".into()))?;
    let response: String =
        l.get(args.response, "response")?.ok_or_else(|| CliError::Config("missing --response".into()))?;
    let nonparam = l.list(args.nonparam, "nonparam");
    let param = l.list(args.param, "param");

    let kind: FamilyKind = l
        .get(args.family, "family")?
        .map(|s: String| parse("family", &s))
        .transpose()?
        .unwrap_or(FamilyKind::BernoulliLogit);
    let phi: f64 = l.get(args.phi, "phi")?.unwrap_or(1.0);
    if kind != FamilyKind::GaussianIdentity && phi != 1.0 {
        return Err(CliError::Config(format!("phi is fixed at 1 for the {} family", kind.name())));
    }
    let family = FamilySpec::new(kind, phi)?;

    let fold_size: usize = l.get(args.fold_size, "fold-size")?.unwrap_or(5);
    if fold_size == 0 {
        return Err(CliError::Config("fold size must be at least 1".into()));
    }
    let methods = parse_methods(&l.get(args.method, "method")?.unwrap_or_else(|| "cv".to_string()), fold_size)?;
    let knot_rule: KnotRule = l
        .get(args.knot_rule.map(|s| parse("knot-rule", &s)).transpose()?, "knot-rule")?
        .unwrap_or(KnotRule::Ceil2NFifthMinus1Total);
    let placement: KnotPlacement = l
        .get(args.placement.map(|s| parse("placement", &s)).transpose()?, "placement")?
        .unwrap_or(KnotPlacement::Equidistant);
    let degree: usize = l.get(args.degree, "degree")?.unwrap_or(3);
    let standardize: bool = l.get(args.standardize, "standardize")?.unwrap_or(false);
    let seed: u64 = match l.get(args.seed, "seed")? {
        Some(s) => s,
        None => match std::env::var("GAPLM_SEED") {
            Ok(v) => parse("GAPLM_SEED", &v)?,
            Err(_) => DEFAULT_SEED,
        },
    };
    let threads: Option<usize> = l.get(args.threads, "threads")?;
    let train_fraction: Option<f64> = l.get(args.train_fraction, "train-fraction")?;
    let resplits: Option<usize> = l.get(args.resplits, "resplits")?;
    let screen_above: usize = l.get(args.screen_above, "screen-above")?.unwrap_or(8);

    let cfg = RunConfig {
        input,
        response,
        nonparam,
        param,
        family,
        fold_size,
        methods,
        knot_rule,
        placement,
        degree,
        standardize,
        seed,
        threads,
        train_fraction,
        resplits: resplits.unwrap_or(1),
        screen_above,
        output: l.get(args.output, "output")?,
        csv_dir: l.get(args.csv_dir, "csv-dir")?,
        save_model: l.get(args.save_model, "save-model")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.nonparam.iter().find(|c| self.param.contains(c)) {
            return Err(CliError::Config(format!("column '{c}' is both nonparametric and linear")));
        }
        if let Some(c) = self.nonparam.iter().chain(&self.param).find(|c| **c == self.response) {
            return Err(CliError::Config(format!("response '{c}' listed as a covariate")));
        }
        for set in [&self.nonparam, &self.param] {
            let mut s = set.clone();
            s.sort();
            s.dedup();
            if s.len() != set.len() {
                return Err(CliError::Config("duplicate covariate name".into()));
            }
        }
        if self.degree == 0 {
            return Err(CliError::Config("spline degree must be at least 1".into()));
        }
        if let Some(f) = self.train_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(CliError::Config(format!("train fraction must lie in (0, 1), got {f}")));
            }
        }
        if self.resplits == 0 {
            return Err(CliError::Config("resplits must be at least 1".into()));
        }
        if self.resplits > 1 && self.train_fraction.is_none() {
            return Err(CliError::Config("resplits need a train fraction".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}
