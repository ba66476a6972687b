//! Variable importance from averaging weights, and the weight mass on
//! quasi-correct candidates.

use serde::Serialize;

use crate::design::ModelSpec;
use crate::error::{Error, Result};
use crate::weights::WeightVector;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceReport {
    /// V_j: total weight of the candidates containing covariate j.
    pub v: Vec<f64>,
    pub candidate_count_per_variable: Vec<usize>,
}

impl ImportanceReport {
    /// Covariate indices sorted by descending importance, ties by index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.v.len()).collect();
        idx.sort_by(|&a, &b| self.v[b].total_cmp(&self.v[a]).then(a.cmp(&b)));
        idx
    }
}

fn check(w: &WeightVector, specs: &[ModelSpec]) -> Result<()> {
    if w.len() != specs.len() {
        return Err(Error::DimensionMismatch { expected: specs.len(), got: w.len() });
    }
    Ok(())
}

pub fn vima(w: &WeightVector, specs: &[ModelSpec], p: usize) -> Result<ImportanceReport> {
    check(w, specs)?;
    let mut v = vec![0.0; p];
    let mut count = vec![0; p];
    for (spec, &wk) in specs.iter().zip(&w.w) {
        for j in spec.variables() {
            if j >= p {
                return Err(Error::Spec(format!("covariate {j} out of range for p = {p}")));
            }
            v[j] += wk;
            count[j] += 1;
        }
    }
    for x in v.iter_mut() {
        *x = x.clamp(0.0, 1.0);
    }
    Ok(ImportanceReport { v, candidate_count_per_variable: count })
}

fn subset(small: &[usize], big: &[usize]) -> bool {
    small.iter().all(|j| big.binary_search(j).is_ok())
}

/// True spline effects sit in spline blocks and true linear effects in the
/// linear part. A linear truth inside a spline block does not count.
pub fn is_quasi_correct(spec: &ModelSpec, truth: &ModelSpec) -> bool {
    subset(&truth.nonparam, &spec.nonparam) && subset(&truth.param, &spec.param)
}

/// ŵ_cor: the weight on quasi-correct candidates.
pub fn correct_weight_mass(w: &WeightVector, specs: &[ModelSpec], truth: &ModelSpec) -> Result<f64> {
    check(w, specs)?;
    Ok(specs.iter().zip(&w.w).filter(|(s, _)| is_quasi_correct(s, truth)).map(|(_, wk)| wk).sum())
}

/// Covariates appearing in at least one quasi-correct candidate.
pub fn correct_model_variables(specs: &[ModelSpec], truth: &ModelSpec) -> Vec<usize> {
    let mut vars: Vec<usize> =
        specs.iter().filter(|s| is_quasi_correct(s, truth)).flat_map(|s| s.variables()).collect();
    vars.sort_unstable();
    vars.dedup();
    vars
}
