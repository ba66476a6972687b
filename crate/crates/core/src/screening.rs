//! Distance-correlation screening: rank covariates by the squared sample
//! distance correlation with the response, then build nested candidates.

use serde::Serialize;

use crate::design::{Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::par;
use crate::splines::KnotPlacement;

/// Squared sample distance correlation (V-statistic, double-centred
/// distance matrices). Returns 0 when either sample has no spread.
pub fn dcorr_sq(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument("distance correlation needs n >= 2".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite input to distance correlation".into()));
    }
    let nf = n as f64;
    let row_means =
        |v: &[f64]| -> Vec<f64> { v.iter().map(|a| v.iter().map(|b| (a - b).abs()).sum::<f64>() / nf).collect() };
    let ax = row_means(x);
    let by = row_means(y);
    let gx = ax.iter().sum::<f64>() / nf;
    let gy = by.iter().sum::<f64>() / nf;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let a = (x[i] - x[j]).abs() - ax[i] - ax[j] + gx;
            let b = (y[i] - y[j]).abs() - by[i] - by[j] + gy;
            xy += a * b;
            xx += a * a;
            yy += b * b;
        }
    }
    let denom = (xx * yy).sqrt();
    if denom <= 0.0 || xx <= 1e-300 || yy <= 1e-300 {
        return Ok(0.0);
    }
    Ok((xy / denom).clamp(0.0, 1.0))
}

/// Pearson correlation; 0 for a constant input.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningRanking {
    pub rho_hat: Vec<f64>,
    /// Covariate indices by descending `rho_hat`, ties by ascending index.
    pub order: Vec<usize>,
}

impl ScreeningRanking {
    pub fn from_scores(rho_hat: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..rho_hat.len()).collect();
        order.sort_by(|&a, &b| rho_hat[b].total_cmp(&rho_hat[a]).then(a.cmp(&b)));
        ScreeningRanking { rho_hat, order }
    }

    /// Rank position (0 = first) of each covariate.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.order.len()];
        for (pos, &j) in self.order.iter().enumerate() {
            r[j] = pos;
        }
        r
    }
}

/// Ranks the raw covariates by their squared distance correlation with y.
pub fn dcms_rank(data: &Dataset) -> Result<ScreeningRanking> {
    let rho = par::map_indexed(data.p(), |j| dcorr_sq(data.column(j), &data.y));
    Ok(ScreeningRanking::from_scores(rho.into_iter().collect::<Result<Vec<_>>>()?))
}

/// The `p` nested candidates: candidate k holds the first k ranked covariates,
/// as splines if listed in `nonparam_set` and linearly otherwise.
pub fn dcms_candidates(
    ranking: &ScreeningRanking,
    nonparam_set: &[usize],
    n_knots: usize,
    degree: usize,
    placement: KnotPlacement,
) -> Result<Vec<ModelSpec>> {
    let p = ranking.order.len();
    if let Some(&j) = nonparam_set.iter().find(|&&j| j >= p) {
        return Err(Error::Spec(format!("nonparametric covariate {j} out of range for p = {p}")));
    }
    (1..=p)
        .map(|k| {
            let (nonparam, param): (Vec<usize>, Vec<usize>) =
                ranking.order[..k].iter().partition(|j| nonparam_set.contains(j));
            ModelSpec::uniform(nonparam, param, n_knots, degree, placement)
        })
        .collect()
}
