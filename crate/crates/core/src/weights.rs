//! Fold partitions, held-out predictions, the K-fold CV weight criterion and
//! its maximization over the probability simplex, plus information-criterion
//! baselines.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{build_design_with_bases, build_designs, Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::family::FamilySpec;
use crate::fit::{fit_mle_with, predict_eta, FitOptions, FittedCandidate};
use crate::par;

/// How a weight vector was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "fold_size")]
pub enum WeightMethod {
    Cv(usize),
    Saic,
    Sbic,
    Aic,
    Bic,
    Manual,
}

impl fmt::Display for WeightMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightMethod::Cv(m) => write!(f, "CV-{m}"),
            WeightMethod::Saic => f.write_str("SAIC"),
            WeightMethod::Sbic => f.write_str("SBIC"),
            WeightMethod::Aic => f.write_str("AIC"),
            WeightMethod::Bic => f.write_str("BIC"),
            WeightMethod::Manual => f.write_str("manual"),
        }
    }
}

impl std::str::FromStr for WeightMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "saic" => Ok(WeightMethod::Saic),
            "sbic" => Ok(WeightMethod::Sbic),
            "aic" => Ok(WeightMethod::Aic),
            "bic" => Ok(WeightMethod::Bic),
            _ => {
                let m = lower
                    .strip_prefix("cv-")
                    .or_else(|| lower.strip_prefix("cv"))
                    .and_then(|rest| rest.parse::<usize>().ok())
                    .filter(|m| *m >= 1);
                m.map(WeightMethod::Cv).ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
            }
        }
    }
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub method: WeightMethod,
}

const CLIP: f64 = 1e-12;

impl WeightVector {
    /// Validates simplex membership, zeroing entries in `(−1e-12, 0)` and
    /// renormalizing.
    pub fn new(mut w: Vec<f64>, method: WeightMethod) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        for v in w.iter_mut() {
            if !v.is_finite() || *v < -CLIP {
                return Err(Error::InvalidArgument(format!("weight {v} outside [0, 1]")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}, not 1")));
        }
        for v in w.iter_mut() {
            *v /= sum;
        }
        Ok(WeightVector { w, method })
    }

    pub fn vertex(m: usize, k: usize, method: WeightMethod) -> Self {
        let mut w = vec![0.0; m];
        w[k] = 1.0;
        WeightVector { w, method }
    }

    pub fn uniform(m: usize, method: WeightMethod) -> Self {
        WeightVector { w: vec![1.0 / m as f64; m], method }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Equal-size folds over a fixed observation order.
///
/// Fold `i` holds `order[i·m .. (i+1)·m]`; the trailing `n − K·m`
/// observations never form a held-out fold but stay in every training set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPartition {
    pub fold_size: usize,
    pub n_folds: usize,
    order: Vec<usize>,
}

/// Sequential blocks `{1..m}, {m+1..2m}, …`.
pub fn make_folds(n: usize, m: usize) -> Result<FoldPartition> {
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("fold size {m} must be in 1..={n}")));
    }
    Ok(FoldPartition { fold_size: m, n_folds: n / m, order: (0..n).collect() })
}

/// Same as [`make_folds`] after a seeded shuffle of the rows.
pub fn make_folds_shuffled(n: usize, m: usize, seed: u64) -> Result<FoldPartition> {
    let mut folds = make_folds(n, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    folds.order.shuffle(&mut rng);
    Ok(folds)
}

impl FoldPartition {
    pub fn n(&self) -> usize {
        self.order.len()
    }

    pub fn n_used(&self) -> usize {
        self.n_folds * self.fold_size
    }

    pub fn fold(&self, i: usize) -> &[usize] {
        &self.order[i * self.fold_size..(i + 1) * self.fold_size]
    }

    /// Every observation not in fold `i`, ascending.
    pub fn complement(&self, i: usize) -> Vec<usize> {
        let mut held = vec![false; self.n()];
        for &j in self.fold(i) {
            held[j] = true;
        }
        (0..self.n()).filter(|&j| !held[j]).collect()
    }

    /// Observations entering the criterion, in fold order.
    pub fn used(&self) -> &[usize] {
        &self.order[..self.n_used()]
    }
}

/// Held-out linear predictors: entry `(r, k)` is candidate `k`'s prediction
/// for observation `rows[r]` from a fit that excluded that observation's fold.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPredictionMatrix {
    pub eta_tilde: DMatrix<f64>,
    pub y_used: Vec<f64>,
    pub rows: Vec<usize>,
    pub fold_size: usize,
}

impl CvPredictionMatrix {
    pub fn new(eta_tilde: DMatrix<f64>, y_used: Vec<f64>, fold_size: usize) -> Result<Self> {
        if eta_tilde.nrows() != y_used.len() {
            return Err(Error::DimensionMismatch { expected: y_used.len(), got: eta_tilde.nrows() });
        }
        if eta_tilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite held-out prediction".into()));
        }
        let rows = (0..y_used.len()).collect();
        Ok(CvPredictionMatrix { eta_tilde, y_used, rows, fold_size })
    }

    pub fn n_models(&self) -> usize {
        self.eta_tilde.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.eta_tilde.nrows()
    }
}

#[derive(Debug, Clone, Default)]
pub struct CvOptions<'a> {
    pub fit: FitOptions,
    /// Per-candidate starting coefficients for the fold fits (typically the
    /// full-data fits).
    pub warm_start: Option<&'a [FittedCandidate]>,
}

pub fn cv_predictions(
    data: &Dataset,
    specs: &[ModelSpec],
    fam: &FamilySpec,
    folds: &FoldPartition,
) -> Result<CvPredictionMatrix> {
    cv_predictions_with(data, specs, fam, folds, &CvOptions::default())
}

/// Fits every candidate on each fold complement (bases rebuilt from the
/// complement) and predicts the held-out fold.
pub fn cv_predictions_with(
    data: &Dataset,
    specs: &[ModelSpec],
    fam: &FamilySpec,
    folds: &FoldPartition,
    opts: &CvOptions<'_>,
) -> Result<CvPredictionMatrix> {
    if folds.n() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), got: folds.n() });
    }
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no candidate models".into()));
    }
    if let Some(w) = opts.warm_start {
        if w.len() != specs.len() {
            return Err(Error::DimensionMismatch { expected: specs.len(), got: w.len() });
        }
    }
    let m = folds.fold_size;
    let n_models = specs.len();
    let blocks = par::map_indexed(folds.n_folds, |i| -> Result<Vec<Vec<f64>>> {
        let train = data.subset(&folds.complement(i));
        let test = data.subset(folds.fold(i));
        let designs = build_designs(&train, specs)?;
        designs
            .iter()
            .enumerate()
            .map(|(k, design)| {
                let mut fit_opts = opts.fit.clone();
                if let Some(warm) = opts.warm_start {
                    if warm[k].beta.len() == design.dim() {
                        fit_opts.init = Some(warm[k].beta.clone());
                    }
                }
                let fit = fit_mle_with(design, &train.y, fam, &fit_opts)?;
                let held = build_design_with_bases(&test, &design.spec, &design.bases)?;
                predict_eta(&fit, &held)
            })
            .collect()
    });
    let mut eta_tilde = DMatrix::zeros(folds.n_used(), n_models);
    for (i, block) in blocks.into_iter().enumerate() {
        for (k, col) in block?.into_iter().enumerate() {
            for (r, v) in col.into_iter().enumerate() {
                eta_tilde[(i * m + r, k)] = v;
            }
        }
    }
    let rows = folds.used().to_vec();
    let y_used = rows.iter().map(|&j| data.y[j]).collect();
    let mut cvp = CvPredictionMatrix::new(eta_tilde, y_used, m)?;
    cvp.rows = rows;
    Ok(cvp)
}

fn check_len(w: &WeightVector, m: usize) -> Result<()> {
    if w.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: w.len() });
    }
    Ok(())
}

fn combine(w: &[f64], etas: &DMatrix<f64>) -> Vec<f64> {
    let mut out = vec![0.0; etas.nrows()];
    for (k, &wk) in w.iter().enumerate() {
        if wk == 0.0 {
            continue;
        }
        for (o, e) in out.iter_mut().zip(etas.column(k).iter()) {
            *o += wk * e;
        }
    }
    out
}

fn criterion_raw(w: &[f64], cvp: &CvPredictionMatrix, fam: &FamilySpec) -> f64 {
    fam.loglik(&cvp.y_used, &combine(w, &cvp.eta_tilde))
}

/// CV(w): held-out log-likelihood of the weighted linear predictor.
pub fn cv_criterion(w: &WeightVector, cvp: &CvPredictionMatrix, fam: &FamilySpec) -> Result<f64> {
    check_len(w, cvp.n_models())?;
    Ok(criterion_raw(&w.w, cvp, fam))
}

fn gradient(w: &[f64], cvp: &CvPredictionMatrix, fam: &FamilySpec) -> Vec<f64> {
    let eta = combine(w, &cvp.eta_tilde);
    let resid: Vec<f64> = cvp.y_used.iter().zip(&eta).map(|(y, e)| (y - fam.mean(*e)) / fam.dispersion).collect();
    (0..cvp.n_models()).map(|k| cvp.eta_tilde.column(k).iter().zip(&resid).map(|(a, b)| a * b).sum()).collect()
}

/// Euclidean projection onto `{w ≥ 0, Σw = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone)]
pub struct OptimizerOptions {
    pub max_iter: usize,
    /// Bound on the projected-gradient step `‖P(w + ∇CV) − w‖∞` at termination.
    pub tol: f64,
    pub warm_start: Option<Vec<f64>>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions { max_iter: 500, tol: 1e-8, warm_start: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightFit {
    pub weights: WeightVector,
    pub criterion: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn optimize_weights(cvp: &CvPredictionMatrix, fam: &FamilySpec) -> Result<WeightFit> {
    optimize_weights_with(cvp, fam, &OptimizerOptions::default())
}

/// −∇²CV(w) = Σᵢ b″(η̃ᵢ(w))/φ · ẽᵢẽᵢᵀ.
fn neg_hessian(w: &[f64], cvp: &CvPredictionMatrix, fam: &FamilySpec) -> DMatrix<f64> {
    let eta = combine(w, &cvp.eta_tilde);
    let sw: Vec<f64> = eta.iter().map(|e| (fam.variance(*e) / fam.dispersion).sqrt()).collect();
    let mut a = cvp.eta_tilde.clone();
    for mut col in a.column_iter_mut() {
        for (v, s) in col.iter_mut().zip(&sw) {
            *v *= s;
        }
    }
    a.tr_mul(&a)
}

/// Minimizes `½vᵀQv − cᵀv` over the simplex by a primal active-set method
/// started at the feasible point `v`. `Q` must be positive definite.
fn simplex_qp(q: &DMatrix<f64>, c: &[f64], mut v: Vec<f64>) -> Vec<f64> {
    let m = v.len();
    let mut fixed: Vec<bool> = v.iter().map(|&x| x <= 0.0).collect();
    for x in v.iter_mut() {
        *x = x.max(0.0);
    }
    for _ in 0..(10 * m + 50) {
        let free: Vec<usize> = (0..m).filter(|&i| !fixed[i]).collect();
        let f = free.len();
        // KKT system [Q_FF 1; 1ᵀ 0][v_F; ν] = [c_F; 1]
        let mut k = DMatrix::<f64>::zeros(f + 1, f + 1);
        let mut rhs = DVector::<f64>::zeros(f + 1);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                k[(a, b)] = q[(i, j)];
            }
            k[(a, f)] = 1.0;
            k[(f, a)] = 1.0;
            rhs[a] = c[i];
        }
        rhs[f] = 1.0;
        let Some(sol) = k.lu().solve(&rhs) else { return v };
        let nu = sol[f];
        let target: Vec<f64> = (0..m).map(|i| free.iter().position(|&j| j == i).map_or(0.0, |a| sol[a])).collect();
        let p: Vec<f64> = target.iter().zip(&v).map(|(t, x)| t - x).collect();
        if p.iter().all(|d| d.abs() <= 1e-13) {
            // multipliers of the active bounds: μᵢ = (Qv − c)ᵢ + ν
            let mut worst = None;
            let mut worst_mu = -1e-14;
            for i in (0..m).filter(|&i| fixed[i]) {
                let grad: f64 = (0..m).map(|j| q[(i, j)] * v[j]).sum::<f64>() - c[i];
                let mu = grad + nu;
                if mu < worst_mu {
                    worst_mu = mu;
                    worst = Some(i);
                }
            }
            match worst {
                Some(i) => fixed[i] = false,
                None => return v,
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            if p[i] < 0.0 {
                let a = -v[i] / p[i];
                if a < alpha {
                    alpha = a;
                    blocking = Some(i);
                }
            }
        }
        for i in 0..m {
            v[i] += alpha * p[i];
        }
        if let Some(i) = blocking {
            v[i] = 0.0;
            fixed[i] = true;
        }
    }
    v
}

fn projected_gap(w: &[f64], g: &[f64]) -> f64 {
    let unit: Vec<f64> = w.iter().zip(g).map(|(a, b)| a + b).collect();
    project_simplex(&unit).iter().zip(w).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()))
}

/// Maximizes the concave CV(w) over the simplex. Each iteration maximizes the
/// local quadratic model exactly on the simplex and backtracks along the
/// resulting feasible direction.
pub fn optimize_weights_with(cvp: &CvPredictionMatrix, fam: &FamilySpec, opts: &OptimizerOptions) -> Result<WeightFit> {
    let m = cvp.n_models();
    if m == 0 {
        return Err(Error::InvalidArgument("no candidate models".into()));
    }
    if cvp.eta_tilde.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite held-out prediction".into()));
    }
    let method = WeightMethod::Cv(cvp.fold_size);
    if m == 1 {
        let w = vec![1.0];
        let criterion = criterion_raw(&w, cvp, fam);
        return Ok(WeightFit { weights: WeightVector { w, method }, criterion, iterations: 0, converged: true });
    }

    // start from the best of the vertices, the barycentre and any warm start
    let mut starts: Vec<Vec<f64>> = (0..m).map(|k| WeightVector::vertex(m, k, method).w).collect();
    starts.push(vec![1.0 / m as f64; m]);
    if let Some(ws) = &opts.warm_start {
        if ws.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: ws.len() });
        }
        starts.push(project_simplex(ws));
    }
    let (mut w, mut f) = starts
        .into_iter()
        .map(|s| {
            let f = criterion_raw(&s, cvp, fam);
            (s, f)
        })
        .fold((Vec::new(), f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });

    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let g = gradient(&w, cvp, fam);
        if projected_gap(&w, &g) <= opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut q = neg_hessian(&w, cvp, fam);
        let ridge = 1e-10 * (q.trace() / m as f64).max(1e-300);
        for k in 0..m {
            q[(k, k)] += ridge;
        }
        let qw = &q * DVector::from_column_slice(&w);
        let c: Vec<f64> = (0..m).map(|k| qw[k] + g[k]).collect();
        let target = simplex_qp(&q, &c, w.clone());
        let d: Vec<f64> = target.iter().zip(&w).map(|(t, a)| t - a).collect();
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope.is_nan() || slope <= 1e-15 * (1.0 + f.abs()) {
            // no ascent direction left at working precision
            converged = projected_gap(&w, &g) <= opts.tol.sqrt();
            break;
        }
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let cand: Vec<f64> = w.iter().zip(&d).map(|(a, b)| (a + t * b).max(0.0)).collect();
            let fc = criterion_raw(&cand, cvp, fam);
            if fc.is_finite() && fc >= f + 1e-4 * t * slope {
                next = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((w_new, f_new)) = next else { break };
        w = w_new;
        f = f_new;
    }
    let weights = WeightVector::new(project_simplex(&w), method)?;
    let criterion = criterion_raw(&weights.w, cvp, fam);
    Ok(WeightFit { weights, criterion, iterations, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IcKind {
    Aic,
    Bic,
}

/// AIC = −2ℓ + 2D, BIC = −2ℓ + log(n)·D.
pub fn ic_score(fit: &FittedCandidate, kind: IcKind, n: usize) -> f64 {
    let penalty = match kind {
        IcKind::Aic => 2.0,
        IcKind::Bic => (n as f64).ln(),
    };
    -2.0 * fit.loglik + penalty * fit.dim as f64
}

/// Smoothed information-criterion weights `∝ exp(−s/2)`.
pub fn ic_weights(scores: &[f64], method: WeightMethod) -> Result<WeightVector> {
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite and nonempty".into()));
    }
    let shift = scores.iter().map(|s| -s / 2.0).fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = scores.iter().map(|s| (-s / 2.0 - shift).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(WeightVector { w: raw.into_iter().map(|v| v / total).collect(), method })
}

/// Index of the smallest score, first on ties.
pub fn select_ic(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no scores".into()));
    }
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = k;
        }
    }
    Ok(best)
}

/// η̂(w) = Σ_k w_k η̂_k for an `n × M` matrix of candidate predictors.
pub fn average_eta(w: &WeightVector, etas: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_len(w, etas.ncols())?;
    Ok(combine(&w.w, etas))
}

/// μ̂(w) = b′(η̂(w)).
pub fn average_mu(w: &WeightVector, etas: &DMatrix<f64>, fam: &FamilySpec) -> Result<Vec<f64>> {
    Ok(average_eta(w, etas)?.into_iter().map(|e| fam.mean(e)).collect())
}
