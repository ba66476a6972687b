//! Maximum-likelihood fitting of a candidate by Newton/IRLS.
//!
//! With a canonical link the Newton step solves the weighted least-squares
//! problem `min ‖W^{1/2}(r − Zδ)‖²` with `W = diag b″(η)` and working residual
//! `r = (y − μ)/b″(η)`; the dispersion cancels. Each step is solved through a
//! Householder QR of the weighted design.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::family::FamilySpec;

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Score tolerance relative to `1 + ‖Zᵀy‖∞`.
    pub tol: f64,
    pub max_halvings: usize,
    /// Starting coefficients; zero when absent.
    pub init: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iter: 100, tol: 1e-8, max_halvings: 20, init: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedCandidate {
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub dim: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Whether the damped (ridge) Newton system was needed.
    pub ridge: bool,
    /// Log-likelihood after each accepted step, starting from the initial point.
    #[serde(skip)]
    pub loglik_trace: Vec<f64>,
}

const COND_LIMIT: f64 = 1e12;
const MIN_SQRT_WEIGHT: f64 = 1e-150;

struct NewtonStep {
    delta: DVector<f64>,
    ill_conditioned: bool,
}

/// Solves the (optionally damped) weighted least-squares Newton system for
/// raw residuals `resid = y − μ`.
fn newton_step(z: &DMatrix<f64>, var: &[f64], resid: &[f64], ridge: bool) -> Option<NewtonStep> {
    let (n, d) = z.shape();
    let sw: Vec<f64> = var.iter().map(|v| v.max(0.0).sqrt()).collect();
    let extra = if ridge { d } else { 0 };
    let mut a = DMatrix::<f64>::zeros(n + extra, d);
    let mut rhs = DVector::<f64>::zeros(n + extra);
    for c in 0..d {
        let src = z.column(c);
        let mut dst = a.column_mut(c);
        for i in 0..n {
            dst[i] = sw[i] * src[i];
        }
    }
    for i in 0..n {
        rhs[i] = if sw[i] > MIN_SQRT_WEIGHT { resid[i] / sw[i] } else { 0.0 };
    }
    if ridge {
        // λ = 1e-8 · trace(ZᵀWZ) / D
        let trace: f64 = a.rows(0, n).iter().map(|v| v * v).sum();
        let lambda = (1e-8 * trace / d as f64).max(f64::MIN_POSITIVE);
        let s = lambda.sqrt();
        for k in 0..d {
            a[(n + k, k)] = s;
        }
    }
    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..d).map(|k| r[(k, k)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let ill_conditioned =
        min.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || (max / min).powi(2) > COND_LIMIT;
    if ill_conditioned && !ridge {
        return Some(NewtonStep { delta: DVector::zeros(d), ill_conditioned });
    }
    qr.q_tr_mul(&mut rhs);
    let delta = r.solve_upper_triangular(&rhs.rows(0, d).into_owned())?;
    if delta.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(NewtonStep { delta, ill_conditioned })
}

fn linear_predictor(z: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (z * beta).as_slice().to_vec()
}

/// MLE of the candidate coefficients with default options.
pub fn fit_mle(design: &DesignMatrix, y: &[f64], fam: &FamilySpec) -> Result<FittedCandidate> {
    fit_mle_with(design, y, fam, &FitOptions::default())
}

pub fn fit_mle_with(design: &DesignMatrix, y: &[f64], fam: &FamilySpec, opts: &FitOptions) -> Result<FittedCandidate> {
    fit_matrix(&design.z, y, fam, opts)
}

/// IRLS on a raw design matrix.
pub fn fit_matrix(z: &DMatrix<f64>, y: &[f64], fam: &FamilySpec, opts: &FitOptions) -> Result<FittedCandidate> {
    let (n, d) = z.shape();
    if n != y.len() {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n < d {
        return Err(Error::SingularFit(format!("{n} observations for {d} coefficients")));
    }
    for &yi in y {
        fam.check_support(yi)?;
    }
    let mut beta = match &opts.init {
        Some(b) if b.len() == d => DVector::from_column_slice(b),
        Some(b) => return Err(Error::DimensionMismatch { expected: d, got: b.len() }),
        None => DVector::zeros(d),
    };
    let yv = DVector::from_column_slice(y);
    let zty_norm = z.tr_mul(&yv).amax();
    let score_tol = opts.tol * (1.0 + zty_norm);

    let mut eta = linear_predictor(z, &beta);
    let mut ll = fam.loglik(y, &eta);
    if !ll.is_finite() {
        // a wild warm start; fall back to zero
        beta.fill(0.0);
        eta = linear_predictor(z, &beta);
        ll = fam.loglik(y, &eta);
    }
    let mut trace = vec![ll];
    let mut ridge = false;
    let mut converged = false;
    let mut iterations = 0;
    let mut polished = false;
    let mut mu = vec![0.0; n];
    let mut var = vec![0.0; n];
    let mut resid = vec![0.0; n];

    while iterations < opts.max_iter + polished as usize {
        for i in 0..n {
            mu[i] = fam.mean(eta[i]);
            var[i] = fam.variance(eta[i]);
            resid[i] = y[i] - mu[i];
        }
        let score = z.tr_mul(&DVector::from_column_slice(&resid));
        if score.amax() <= score_tol {
            if polished || ridge {
                converged = true;
                break;
            }
            // one extra full step so warm and cold starts land on the same point
            polished = true;
        }
        iterations += 1;
        let step = match newton_step(z, &var, &resid, ridge) {
            Some(s) if s.ill_conditioned && !ridge => {
                ridge = true;
                match newton_step(z, &var, &resid, true) {
                    Some(s) => s,
                    None => break,
                }
            }
            Some(s) => s,
            None if !ridge => {
                ridge = true;
                match newton_step(z, &var, &resid, true) {
                    Some(s) => s,
                    None => break,
                }
            }
            None => break,
        };

        let slack = 1e-12 * (1.0 + ll.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand = &beta + &step.delta * t;
            let eta_c = linear_predictor(z, &cand);
            let ll_c = fam.loglik(y, &eta_c);
            if ll_c.is_finite() && ll_c >= ll - slack {
                accepted = Some((cand, eta_c, ll_c));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((b, e, l)) => {
                beta = b;
                eta = e;
                ll = l.max(ll);
                trace.push(l);
            }
            None if !ridge => ridge = true,
            None => break,
        }
    }

    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularFit("non-finite coefficients".into()));
    }
    let loglik = fam.loglik(y, &eta);
    Ok(FittedCandidate {
        beta: beta.as_slice().to_vec(),
        loglik,
        dim: d,
        converged,
        iterations,
        ridge,
        loglik_trace: trace,
    })
}

/// η̂ = Zβ̂.
pub fn predict_eta(fit: &FittedCandidate, design: &DesignMatrix) -> Result<Vec<f64>> {
    if design.dim() != fit.dim || fit.beta.len() != fit.dim {
        return Err(Error::DimensionMismatch { expected: fit.dim, got: design.dim() });
    }
    Ok(linear_predictor(&design.z, &DVector::from_column_slice(&fit.beta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_design, Dataset, ModelSpec};
    use crate::splines::KnotPlacement;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opts() -> FitOptions {
        FitOptions::default()
    }

    fn intercept_only(n: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, 1, 1.0)
    }

    #[test]
    fn gaussian_intercept_is_mean() {
        let fam = FamilySpec::gaussian(1.0).unwrap();
        let f = fit_matrix(&intercept_only(3), &[1.0, 2.0, 3.0], &fam, &opts()).unwrap();
        assert!((f.beta[0] - 2.0).abs() < 1e-12);
        assert!(f.converged);
    }

    #[test]
    fn bernoulli_intercept_is_logit_of_proportion() {
        let y: Vec<f64> = (0..100).map(|i| if i < 30 { 1.0 } else { 0.0 }).collect();
        let f = fit_matrix(&intercept_only(100), &y, &FamilySpec::bernoulli(), &opts()).unwrap();
        assert!((f.beta[0] - (0.3f64 / 0.7).ln()).abs() < 1e-8);
        assert!((f.beta[0] + 0.8473).abs() < 1e-4);
    }

    #[test]
    fn gaussian_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for phi in [1.0, 3.0] {
            let fam = FamilySpec::gaussian(phi).unwrap();
            for _ in 0..50 {
                let n = rng.random_range(8..40);
                let d = rng.random_range(1..6);
                let z = DMatrix::from_fn(n, d, |_, c| if c == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
                let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let f = fit_matrix(&z, &y, &fam, &opts()).unwrap();
                let ztz = z.tr_mul(&z);
                let zty = z.tr_mul(&DVector::from_column_slice(&y));
                let want = ztz.cholesky().unwrap().solve(&zty);
                for (a, b) in f.beta.iter().zip(want.iter()) {
                    assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
                }
            }
        }
    }

    fn logistic_problem(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, d, |_, c| if c == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
        let truth: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = (0..n)
            .map(|i| {
                let eta: f64 = (0..d).map(|c| z[(i, c)] * truth[c]).sum();
                let p = 1.0 / (1.0 + (-eta).exp());
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        (z, y)
    }

    #[test]
    fn score_vanishes_and_trace_is_monotone() {
        for seed in 0..20 {
            let (z, y) = logistic_problem(seed, 120, 4);
            let fam = FamilySpec::bernoulli();
            let f = fit_matrix(&z, &y, &fam, &opts()).unwrap();
            assert!(f.converged);
            let eta = linear_predictor(&z, &DVector::from_column_slice(&f.beta));
            let resid: Vec<f64> = y.iter().zip(&eta).map(|(y, e)| y - fam.mean(*e)).collect();
            let score = z.tr_mul(&DVector::from_column_slice(&resid)).amax();
            let zty = z.tr_mul(&DVector::from_column_slice(&y)).amax();
            assert!(score <= 1e-8 * (1.0 + zty));
            for w in f.loglik_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-12 * (1.0 + w[0].abs()));
            }
            assert!((f.loglik - fam.loglik(&y, &eta)).abs() < 1e-8);
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let fam = FamilySpec::bernoulli();
        for seed in 0..10 {
            let (z, y) = logistic_problem(100 + seed, 30, 3);
            let beta = DVector::from_vec(vec![0.3, -0.2, 0.5]);
            let eta = linear_predictor(&z, &beta);
            let resid: Vec<f64> = y.iter().zip(&eta).map(|(y, e)| y - fam.mean(*e)).collect();
            let grad = z.tr_mul(&DVector::from_column_slice(&resid));
            let h = 1e-6;
            for k in 0..3 {
                let mut up = beta.clone();
                up[k] += h;
                let mut dn = beta.clone();
                dn[k] -= h;
                let fd = (fam.loglik(&y, &linear_predictor(&z, &up)) - fam.loglik(&y, &linear_predictor(&z, &dn)))
                    / (2.0 * h);
                assert!((fd - grad[k]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn poisson_fit_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200;
        let z: DMatrix<f64> = DMatrix::from_fn(n, 2, |_, c| if c == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let lam = (0.5 + 0.8 * z[(i, 1)]).exp();
                // inversion sampling
                let u: f64 = rng.random();
                let (mut k, mut p) = (0u32, (-lam).exp());
                let mut cdf = p;
                while u > cdf {
                    k += 1;
                    p *= lam / k as f64;
                    cdf += p;
                }
                k as f64
            })
            .collect();
        let f = fit_matrix(&z, &y, &FamilySpec::poisson(), &opts()).unwrap();
        assert!(f.converged);
        assert!((f.beta[1] - 0.8).abs() < 0.3);
    }

    #[test]
    fn collinear_design_uses_ridge_and_keeps_predictions() {
        let (z, y) = logistic_problem(7, 80, 3);
        let mut dup = DMatrix::zeros(80, 4);
        dup.columns_mut(0, 3).copy_from(&z);
        dup.column_mut(3).copy_from(&z.column(2));
        let fam = FamilySpec::bernoulli();
        let a = fit_matrix(&z, &y, &fam, &opts()).unwrap();
        let b = fit_matrix(&dup, &y, &fam, &opts()).unwrap();
        assert!(b.ridge);
        let ea = linear_predictor(&z, &DVector::from_column_slice(&a.beta));
        let eb = linear_predictor(&dup, &DVector::from_column_slice(&b.beta));
        for (p, q) in ea.iter().zip(&eb) {
            assert!((p - q).abs() < 1e-5);
        }
    }

    #[test]
    fn separated_data_stays_finite() {
        let n = 20;
        let z = DMatrix::from_fn(n, 2, |i, c| if c == 0 { 1.0 } else { i as f64 - 9.5 });
        let y: Vec<f64> = (0..n).map(|i| if i >= 10 { 1.0 } else { 0.0 }).collect();
        let f = fit_matrix(&z, &y, &FamilySpec::bernoulli(), &opts()).unwrap();
        assert!(f.beta.iter().all(|b| b.is_finite()));
        assert!(f.loglik <= 0.0 && f.loglik > -1e-3);
    }

    #[test]
    fn errors_and_prediction() {
        let fam = FamilySpec::bernoulli();
        assert!(matches!(fit_matrix(&intercept_only(2), &[0.0, 2.0], &fam, &opts()), Err(Error::Domain(_))));
        assert!(matches!(
            fit_matrix(&DMatrix::from_element(2, 3, 1.0), &[0.0, 1.0], &fam, &opts()),
            Err(Error::SingularFit(_))
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..30).map(|i| (i % 2) as f64).collect();
        let data = Dataset::new(y.clone(), x).unwrap();
        let spec = ModelSpec::uniform(vec![0], vec![1], 2, 3, KnotPlacement::Quantile).unwrap();
        let design = build_design(&data, &spec).unwrap();
        let zero = FittedCandidate {
            beta: vec![0.0; design.dim()],
            loglik: 0.0,
            dim: design.dim(),
            converged: true,
            iterations: 0,
            ridge: false,
            loglik_trace: vec![],
        };
        assert!(predict_eta(&zero, &design).unwrap().iter().all(|v| *v == 0.0));
        let fit = fit_mle(&design, &y, &fam).unwrap();
        let eta = predict_eta(&fit, &design).unwrap();
        assert!((fam.loglik(&y, &eta) - fit.loglik).abs() < 1e-8);

        let icpt = ModelSpec::uniform(vec![], vec![], 0, 3, KnotPlacement::Quantile).unwrap();
        let d0 = build_design(&data, &icpt).unwrap();
        let f0 = fit_mle(&d0, &y, &fam).unwrap();
        let e0 = predict_eta(&f0, &d0).unwrap();
        assert!(e0.iter().all(|v| *v == f0.beta[0]));
        assert!(matches!(predict_eta(&f0, &design), Err(Error::DimensionMismatch { .. })));
    }
}
