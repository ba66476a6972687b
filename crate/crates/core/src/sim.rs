//! Simulation designs and the seeded replication runner.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::{build_designs, Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::evaluate::kl_type_loss;
use crate::family::FamilySpec;
use crate::fit::{fit_mle, FitOptions, FittedCandidate};
use crate::importance::{correct_weight_mass, vima};
use crate::par;
use crate::screening::{dcms_candidates, dcms_rank};
use crate::splines::{ceil_fifth_root, KnotPlacement, KnotRule};
use crate::weights::{
    average_eta, cv_predictions_with, ic_score, ic_weights, make_folds, optimize_weights, select_ic, CvOptions, IcKind,
    WeightMethod, WeightVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    Ex1,
    Ex2,
    Ex3,
    DcDemo,
    GaussianInclusion,
}

impl std::str::FromStr for Example {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ex1" | "example1" => Ok(Example::Ex1),
            "ex2" | "example2" => Ok(Example::Ex2),
            "ex3" | "example3" => Ok(Example::Ex3),
            "dc_demo" | "dc" => Ok(Example::DcDemo),
            "gaussian_inclusion" | "gaussian" => Ok(Example::GaussianInclusion),
            other => Err(Error::InvalidArgument(format!("unknown example '{other}'"))),
        }
    }
}

impl Example {
    pub fn family(self) -> FamilySpec {
        match self {
            Example::Ex1 | Example::Ex2 | Example::Ex3 => FamilySpec::bernoulli(),
            Example::DcDemo | Example::GaussianInclusion => FamilySpec::gaussian(1.0).expect("unit dispersion"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub example: Example,
    pub n: usize,
    pub rho: f64,
    pub n_reps: usize,
    pub seed: u64,
    /// CV fold sizes are carried by the `Cv(m)` entries.
    pub methods: Vec<WeightMethod>,
    /// Interior knots per spline component; ignored by `Ex2`, which varies them.
    #[serde(default = "default_knot_rule")]
    pub knot_rule: KnotRule,
}

fn default_knot_rule() -> KnotRule {
    SIM_KNOT_RULE
}

/// Knot rule of the simulated examples: `⌈n^{1/5}⌉` knots per component,
/// boundary knots included.
pub const SIM_KNOT_RULE: KnotRule = KnotRule::CeilNFifthTotal;

impl SimConfig {
    /// AIC, BIC, SAIC, SBIC, CV-1, CV-5, CV-10.
    pub fn standard(example: Example, n: usize, rho: f64, n_reps: usize, seed: u64) -> Self {
        SimConfig { example, n, rho, n_reps, seed, methods: standard_methods(&[1, 5, 10]), knot_rule: SIM_KNOT_RULE }
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        self.methods
            .iter()
            .filter_map(|m| match m {
                WeightMethod::Cv(k) => Some(*k),
                _ => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::InvalidArgument("n_reps must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.n < 10 {
            return Err(Error::InvalidArgument("n must be at least 10".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods".into()));
        }
        for m in &self.methods {
            match m {
                WeightMethod::Cv(k) if *k == 0 || *k > self.n / 2 => {
                    return Err(Error::InvalidArgument(format!("fold size {k} invalid for n = {}", self.n)));
                }
                WeightMethod::Manual => return Err(Error::InvalidArgument("manual weights are not a method".into())),
                _ => {}
            }
        }
        Ok(())
    }
}

pub fn standard_methods(fold_sizes: &[usize]) -> Vec<WeightMethod> {
    let mut v = vec![WeightMethod::Aic, WeightMethod::Bic, WeightMethod::Saic, WeightMethod::Sbic];
    v.extend(fold_sizes.iter().map(|&m| WeightMethod::Cv(m)));
    v
}

/// Per-replication substream of the master seed.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub data: Dataset,
    pub true_eta: Vec<f64>,
    pub truth: ModelSpec,
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Lower Cholesky factor of the AR(1) correlation matrix ρ^{|i−j|}.
fn ar1_cholesky(dim: usize, rho: f64) -> DMatrix<f64> {
    let sigma = DMatrix::from_fn(dim, dim, |i, j| rho.powi((i as i32 - j as i32).abs()));
    sigma.cholesky().expect("AR(1) correlation with |rho| < 1 is positive definite").l()
}

fn logistic_draw(rng: &mut ChaCha8Rng, eta: f64) -> f64 {
    let p = FamilySpec::bernoulli().mean(eta);
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

pub fn h1(x: f64) -> f64 {
    (2.0 * std::f64::consts::PI * x).sin()
}

pub fn h2(x: f64) -> f64 {
    5.0 * x.powi(4) + 3.0 * x * x - 2.0
}

/// Linear coefficients on x₃..x₉ of the logistic designs.
pub const EX3_BETA: [f64; 7] = [2.0, 1.5, -0.9, 0.0, 0.05, 0.08, 0.0];

fn gen_logistic(n: usize, rho: f64, beta: &[f64], rng: &mut ChaCha8Rng) -> Result<Generated> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {rho}")));
    }
    let q = beta.len();
    let l = ar1_cholesky(q, rho);
    let mut x = DMatrix::zeros(n, 2 + q);
    let mut y = Vec::with_capacity(n);
    let mut true_eta = Vec::with_capacity(n);
    let mut z = vec![0.0; q];
    for i in 0..n {
        x[(i, 0)] = rng.random::<f64>();
        x[(i, 1)] = rng.random::<f64>();
        for v in z.iter_mut() {
            *v = std_normal(rng);
        }
        for r in 0..q {
            x[(i, 2 + r)] = (0..=r).map(|c| l[(r, c)] * z[c]).sum();
        }
        let mut eta = h1(x[(i, 0)]) + h2(x[(i, 1)]);
        for (r, b) in beta.iter().enumerate() {
            eta += b * x[(i, 2 + r)];
        }
        true_eta.push(eta);
        y.push(logistic_draw(rng, eta));
    }
    let param: Vec<usize> = (0..q).filter(|&r| beta[r] != 0.0).map(|r| r + 2).collect();
    let n_knots = SIM_KNOT_RULE.knots(n);
    let truth = ModelSpec::uniform(vec![0, 1], param, n_knots, 3, KnotPlacement::Quantile)?;
    Ok(Generated { data: Dataset::new(y, x)?, true_eta, truth })
}

/// logit P(y=1) = sin(2πx₁) + 5x₂⁴ + 3x₂² − 2 + 2x₃ + 1.5x₄ − 0.9x₅.
pub fn gen_example1(n: usize, rho: f64, rng: &mut ChaCha8Rng) -> Result<Generated> {
    gen_logistic(n, rho, &EX3_BETA[..3], rng)
}

/// Example 1 plus x₆..x₉ with coefficients (0, 0.05, 0.08, 0).
pub fn gen_example3(n: usize, rho: f64, rng: &mut ChaCha8Rng) -> Result<Generated> {
    gen_logistic(n, rho, &EX3_BETA, rng)
}

/// Coefficients (β₀, β₁, β₂) of the distance-correlation demo.
pub const DC_DEMO_BETA: [f64; 3] = [1.0, 3.0, 1.0];

/// Y = β₀ + β₁X₁² + β₂X₂ + ε with X₁, X₂, ε iid N(0,1).
pub fn gen_dc_demo(n: usize, rng: &mut ChaCha8Rng) -> Result<Generated> {
    let [b0, b1, b2] = DC_DEMO_BETA;
    let mut x = DMatrix::zeros(n, 2);
    let mut y = Vec::with_capacity(n);
    let mut true_eta = Vec::with_capacity(n);
    for i in 0..n {
        x[(i, 0)] = std_normal(rng);
        x[(i, 1)] = std_normal(rng);
        let eta = b0 + b1 * x[(i, 0)] * x[(i, 0)] + b2 * x[(i, 1)];
        true_eta.push(eta);
        y.push(eta + std_normal(rng));
    }
    let truth = ModelSpec::uniform(vec![0], vec![1], SIM_KNOT_RULE.knots(n), 3, KnotPlacement::Quantile)?;
    Ok(Generated { data: Dataset::new(y, x)?, true_eta, truth })
}

/// Linear coefficients on x₂, x₃ of the gaussian inclusion design; x₄ is null.
pub const INCLUSION_BETA: [f64; 2] = [1.0, 0.5];

/// y = sin(2πx₁) + β₂x₂ + β₃x₃ + ε, x₁ ~ U[0,1], x₂..x₄, ε iid N(0,1).
pub fn gen_gaussian_inclusion(n: usize, rng: &mut ChaCha8Rng) -> Result<Generated> {
    let mut x = DMatrix::zeros(n, 4);
    let mut y = Vec::with_capacity(n);
    let mut true_eta = Vec::with_capacity(n);
    for i in 0..n {
        x[(i, 0)] = rng.random::<f64>();
        for c in 1..4 {
            x[(i, c)] = std_normal(rng);
        }
        let eta = h1(x[(i, 0)]) + INCLUSION_BETA[0] * x[(i, 1)] + INCLUSION_BETA[1] * x[(i, 2)];
        true_eta.push(eta);
        y.push(eta + std_normal(rng));
    }
    let truth = ModelSpec::uniform(vec![0], vec![1, 2], SIM_KNOT_RULE.knots(n), 3, KnotPlacement::Quantile)?;
    Ok(Generated { data: Dataset::new(y, x)?, true_eta, truth })
}

pub fn generate(example: Example, n: usize, rho: f64, rng: &mut ChaCha8Rng) -> Result<Generated> {
    match example {
        Example::Ex1 | Example::Ex2 => gen_example1(n, rho, rng),
        Example::Ex3 => gen_example3(n, rho, rng),
        Example::DcDemo => gen_dc_demo(n, rng),
        Example::GaussianInclusion => gen_gaussian_inclusion(n, rng),
    }
}

/// All 31 nonempty subsets of x₁..x₅; x₁, x₂ as splines, x₃..x₅ linear,
/// with knots per [`SIM_KNOT_RULE`].
pub fn candidate_set_example1(n: usize) -> Result<Vec<ModelSpec>> {
    candidate_set_example1_with(SIM_KNOT_RULE.knots(n))
}

pub fn candidate_set_example1_with(j: usize) -> Result<Vec<ModelSpec>> {
    (1u32..32)
        .map(|mask| {
            let vars: Vec<usize> = (0..5).filter(|b| mask & (1 << b) != 0).collect();
            let (nonparam, param): (Vec<usize>, Vec<usize>) = vars.into_iter().partition(|&v| v < 2);
            ModelSpec::uniform(nonparam, param, j, 3, KnotPlacement::Quantile)
        })
        .collect()
}

/// Full covariate set with k interior knots for k = 1..⌈(2n)^{1/5}⌉+2.
pub fn candidate_set_example2(n: usize) -> Result<Vec<ModelSpec>> {
    let m = ceil_fifth_root(2 * n) + 2;
    (1..=m).map(|k| ModelSpec::uniform(vec![0, 1], vec![2, 3, 4], k, 3, KnotPlacement::Quantile)).collect()
}

/// The 15 inclusion candidates: the 7 nonempty subsets of {x₁,x₂,x₃}, the 7
/// sets S ∪ {x₄} with S a proper subset, and {x₁,x₂,x₃} with x₁ linear.
/// Only {x₁ spline, x₂, x₃} is quasi-correct.
pub fn candidate_set_gaussian_inclusion(n: usize) -> Result<Vec<ModelSpec>> {
    candidate_set_gaussian_inclusion_with(SIM_KNOT_RULE.knots(n))
}

pub fn candidate_set_gaussian_inclusion_with(j: usize) -> Result<Vec<ModelSpec>> {
    let spec = |vars: Vec<usize>| {
        let (nonparam, param): (Vec<usize>, Vec<usize>) = vars.into_iter().partition(|&v| v == 0);
        ModelSpec::uniform(nonparam, param, j, 3, KnotPlacement::Quantile)
    };
    let mut out = Vec::with_capacity(15);
    for mask in 1u32..8 {
        out.push(spec((0..3).filter(|b| mask & (1 << b) != 0).collect())?);
    }
    for mask in 0u32..7 {
        let mut vars: Vec<usize> = (0..3).filter(|b| mask & (1 << b) != 0).collect();
        vars.push(3);
        out.push(spec(vars)?);
    }
    out.push(ModelSpec::uniform(vec![], vec![0, 1, 2], j, 3, KnotPlacement::Quantile)?);
    Ok(out)
}

/// Candidate set used for one replication of `example` on `data`.
pub fn candidates_for(example: Example, data: &Dataset, rule: KnotRule) -> Result<Vec<ModelSpec>> {
    let n = data.n();
    let j = rule.knots(n);
    match example {
        Example::Ex1 => candidate_set_example1_with(j),
        Example::Ex2 => candidate_set_example2(n),
        Example::Ex3 => dcms_candidates(&dcms_rank(data)?, &[0, 1], j, 3, KnotPlacement::Quantile),
        Example::DcDemo => dcms_candidates(&dcms_rank(data)?, &[0], j, 3, KnotPlacement::Quantile),
        Example::GaussianInclusion => candidate_set_gaussian_inclusion_with(j),
    }
}

/// Weights for every method on one dataset, given full-data fits.
pub fn method_weights(
    method: WeightMethod,
    data: &Dataset,
    specs: &[ModelSpec],
    fits: &[FittedCandidate],
    fam: &FamilySpec,
) -> Result<WeightVector> {
    let n = data.n();
    let scores = |kind| fits.iter().map(|f| ic_score(f, kind, n)).collect::<Vec<_>>();
    match method {
        WeightMethod::Aic => Ok(WeightVector::vertex(specs.len(), select_ic(&scores(IcKind::Aic))?, method)),
        WeightMethod::Bic => Ok(WeightVector::vertex(specs.len(), select_ic(&scores(IcKind::Bic))?, method)),
        WeightMethod::Saic => ic_weights(&scores(IcKind::Aic), method),
        WeightMethod::Sbic => ic_weights(&scores(IcKind::Bic), method),
        WeightMethod::Cv(m) => {
            let folds = make_folds(n, m)?;
            let opts = CvOptions { fit: FitOptions::default(), warm_start: Some(fits) };
            let cvp = cv_predictions_with(data, specs, fam, &folds, &opts)?;
            Ok(optimize_weights(&cvp, fam)?.weights)
        }
        WeightMethod::Manual => Err(Error::InvalidArgument("manual weights are not a method".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub rep: usize,
    /// Indexed like `SimConfig::methods`.
    pub losses: Vec<f64>,
    pub w_cor: Vec<f64>,
    pub vima: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
}

/// One replication: generate, build candidates, fit, weight, and score.
pub fn run_replication(cfg: &SimConfig, rep: usize) -> Result<ReplicationResult> {
    let mut rng = replication_rng(cfg.seed, rep);
    let g = generate(cfg.example, cfg.n, cfg.rho, &mut rng)?;
    let fam = cfg.example.family();
    let all_specs = candidates_for(cfg.example, &g.data, cfg.knot_rule)?;
    let designs = build_designs(&g.data, &all_specs)?;
    let mut specs = Vec::with_capacity(all_specs.len());
    let mut fits = Vec::with_capacity(all_specs.len());
    let mut etas = Vec::with_capacity(all_specs.len());
    for (spec, design) in all_specs.iter().zip(&designs) {
        if let Ok(fit) = fit_mle(design, &g.data.y, &fam) {
            let eta = &design.z * nalgebra::DVector::from_column_slice(&fit.beta);
            if eta.iter().all(|v| v.is_finite()) {
                specs.push(spec.clone());
                etas.push(eta);
                fits.push(fit);
            }
        }
    }
    if specs.is_empty() {
        return Err(Error::SingularFit(format!("replication {rep}: every candidate fit failed")));
    }
    let eta_mat = DMatrix::from_columns(&etas);
    let p = g.data.p();
    let mut out = ReplicationResult { rep, losses: vec![], w_cor: vec![], vima: vec![], weights: vec![] };
    for &method in &cfg.methods {
        let w = method_weights(method, &g.data, &specs, &fits, &fam)?;
        let eta_hat = average_eta(&w, &eta_mat)?;
        out.losses.push(kl_type_loss(&g.true_eta, &eta_hat, &fam)?);
        out.w_cor.push(correct_weight_mass(&w, &specs, &g.truth)?);
        out.vima.push(vima(&w, &specs, p)?.v);
        out.weights.push(w.w);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: WeightMethod,
    pub mean: f64,
    /// Sample sd of the per-rep losses over √reps.
    pub se: f64,
    pub losses: Vec<f64>,
    pub mean_w_cor: f64,
    pub mean_vima: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub config: SimConfig,
    pub methods: Vec<MethodSummary>,
    /// Replications that produced results, in order.
    pub reps: Vec<usize>,
    pub failed: Vec<(usize, String)>,
}

impl ReplicationSummary {
    pub fn method(&self, m: WeightMethod) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

pub fn summarize(cfg: &SimConfig, results: Vec<Result<ReplicationResult>>) -> ReplicationSummary {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => failed.push((rep, e.to_string())),
        }
    }
    let p = ok.first().map_or(0, |r| r.vima.first().map_or(0, Vec::len));
    let methods = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let losses: Vec<f64> = ok.iter().map(|r| r.losses[k]).collect();
            let (mean, se) = mean_se(&losses);
            let reps = ok.len().max(1) as f64;
            let mean_w_cor = ok.iter().map(|r| r.w_cor[k]).sum::<f64>() / reps;
            let mean_vima = (0..p).map(|j| ok.iter().map(|r| r.vima[k][j]).sum::<f64>() / reps).collect();
            MethodSummary { method, mean, se, losses, mean_w_cor, mean_vima }
        })
        .collect();
    ReplicationSummary { config: cfg.clone(), methods, reps: ok.iter().map(|r| r.rep).collect(), failed }
}

/// Runs all replications (in parallel when enabled) and aggregates by method.
pub fn run_replications(cfg: &SimConfig) -> Result<ReplicationSummary> {
    cfg.validate()?;
    let results = par::map_indexed(cfg.n_reps, |rep| run_replication(cfg, rep));
    let summary = summarize(cfg, results);
    if summary.reps.is_empty() {
        return Err(Error::SingularFit("every replication failed".into()));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::screening::pearson;

    #[test]
    fn example1_plug_in() {
        assert!((h1(0.25) + h2(0.0) - -1.0).abs() < 1e-15);
        let mut rng = replication_rng(1, 0);
        let g = gen_example1(50, 0.5, &mut rng).unwrap();
        assert_eq!(g.data.p(), 5);
        for i in 0..50 {
            let x = |c| g.data.x[(i, c)];
            let eta = h1(x(0)) + h2(x(1)) + 2.0 * x(2) + 1.5 * x(3) - 0.9 * x(4);
            assert!((eta - g.true_eta[i]).abs() < 1e-12);
            assert!(g.data.y[i] == 0.0 || g.data.y[i] == 1.0);
            assert!((0.0..1.0).contains(&x(0)) && (0.0..1.0).contains(&x(1)));
        }
        assert_eq!(g.truth.nonparam, vec![0, 1]);
        assert_eq!(g.truth.param, vec![2, 3, 4]);
    }

    #[test]
    fn covariance_factorization() {
        let mut rng = replication_rng(2, 0);
        let g = gen_example1(10000, 0.0, &mut rng).unwrap();
        assert!(pearson(g.data.column(2), g.data.column(4)).unwrap().abs() < 0.1);
        let mut rng = replication_rng(2, 1);
        let g = gen_example3(10000, 0.5, &mut rng).unwrap();
        let r1 = pearson(g.data.column(2), g.data.column(3)).unwrap();
        let r2 = pearson(g.data.column(2), g.data.column(4)).unwrap();
        assert!((r1 - 0.5).abs() < 0.05 && (r2 - 0.25).abs() < 0.05);
    }

    #[test]
    fn seeded_determinism() {
        let a = gen_example3(40, 0.75, &mut replication_rng(7, 3)).unwrap();
        let b = gen_example3(40, 0.75, &mut replication_rng(7, 3)).unwrap();
        assert_eq!(a, b);
        let c = gen_example3(40, 0.75, &mut replication_rng(7, 4)).unwrap();
        assert_ne!(a.data.y, c.data.y);
    }

    #[test]
    fn example3_structure() {
        let g = gen_example3(30, 0.0, &mut replication_rng(3, 0)).unwrap();
        assert_eq!(g.data.p(), 9);
        assert_eq!(g.truth.param, vec![2, 3, 4, 6, 7]);
        let mut swapped = g.data.x.clone();
        swapped.swap_columns(5, 8);
        for i in 0..30 {
            let row = swapped.row(i);
            let mut eta = h1(row[0]) + h2(row[1]);
            for (r, b) in EX3_BETA.iter().enumerate() {
                eta += b * row[2 + r];
            }
            assert!((eta - g.true_eta[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn candidate_sets() {
        let c1 = candidate_set_example1(100).unwrap();
        assert_eq!(c1.len(), 31);
        assert_eq!(ceil_fifth_root(100), 3);
        assert!(c1.iter().all(|s| s.knots.iter().all(|&j| j == 1) && s.degree == 3));
        assert!(c1.iter().all(|s| s.nonparam.iter().all(|&j| j < 2) && s.param.iter().all(|&j| j >= 2)));
        let full = c1.iter().find(|s| s.variables().len() == 5).unwrap();
        assert_eq!(full.dim(), 12);
        assert_eq!(candidate_set_example1(200).unwrap()[0].knots, vec![1]);
        assert_eq!(
            candidate_set_example1_with(3).unwrap().iter().find(|s| s.variables().len() == 5).unwrap().dim(),
            16
        );

        let c2 = candidate_set_example2(100).unwrap();
        assert_eq!(c2.len(), 5);
        assert!(c2.iter().all(|s| s.nonparam == c2[0].nonparam && s.param == c2[0].param));
        for (k, s) in c2.iter().enumerate() {
            assert_eq!(s.dim(), 1 + 2 * (3 + k + 1) + 3);
        }

        let cg = candidate_set_gaussian_inclusion(100).unwrap();
        assert_eq!(cg.len(), 15);
        let truth = ModelSpec::uniform(vec![0], vec![1, 2], 3, 3, KnotPlacement::Quantile).unwrap();
        let correct: Vec<_> = cg.iter().filter(|s| crate::importance::is_quasi_correct(s, &truth)).collect();
        assert_eq!(correct.len(), 1);
        assert_eq!(crate::importance::correct_model_variables(&cg, &truth), vec![0, 1, 2]);
        let mut uniq = cg.clone();
        uniq.sort_by_key(|s| (s.nonparam.clone(), s.param.clone()));
        uniq.dedup();
        assert_eq!(uniq.len(), 15);
    }

    #[test]
    fn single_replication_is_deterministic() {
        let cfg = SimConfig {
            example: Example::Ex1,
            n: 60,
            rho: 0.0,
            n_reps: 1,
            seed: 11,
            methods: standard_methods(&[10]),
            knot_rule: KnotRule::CeilNFifth,
        };
        let a = run_replications(&cfg).unwrap();
        let b = run_replications(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.methods.len(), 5);
        for m in &a.methods {
            assert_eq!(m.losses.len(), 1);
            assert!(m.mean.is_finite() && m.mean >= 0.0);
            assert_eq!(m.se, 0.0);
        }
    }

    #[test]
    fn standard_error_matches_losses() {
        let cfg = SimConfig {
            example: Example::GaussianInclusion,
            n: 60,
            rho: 0.0,
            n_reps: 4,
            seed: 5,
            methods: vec![WeightMethod::Saic, WeightMethod::Cv(5)],
            knot_rule: KnotRule::CeilNFifth,
        };
        let s = run_replications(&cfg).unwrap();
        for m in &s.methods {
            let r = m.losses.len() as f64;
            let mean = m.losses.iter().sum::<f64>() / r;
            let sd = (m.losses.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
            assert!((m.mean - mean).abs() < 1e-12);
            assert!((m.se - sd / r.sqrt()).abs() < 1e-12);
            assert!(m.se >= 0.0);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::standard(Example::Ex1, 100, 0.0, 1, 0);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.fold_sizes(), vec![1, 5, 10]);
        cfg.rho = 1.0;
        assert!(cfg.validate().is_err());
        cfg.rho = 0.0;
        cfg.n_reps = 0;
        assert!(cfg.validate().is_err());
        assert_eq!("dc-demo".parse::<Example>().unwrap(), Example::DcDemo);
    }
}
