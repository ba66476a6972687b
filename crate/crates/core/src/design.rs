//! Candidate models and their design matrices.
//!
//! A design row is `(1, Φ_{j₁}(x_{j₁}), …, x_{k₁}, …)`: the intercept, then one
//! reduced spline block per nonparametric covariate in ascending index
//! order, then the linear covariates in ascending index order.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splines::{make_knots, KnotPlacement, SplineBasis};

/// Response vector plus an `n × p` covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y.is_empty() || x.ncols() == 0 {
            return Err(Error::InvalidArgument("dataset needs n >= 1 and p >= 1".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), got: x.nrows() });
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains non-finite entries".into()));
        }
        Ok(Dataset { y, x, column_names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::DimensionMismatch { expected: self.p(), got: names.len() });
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    pub fn column_name(&self, j: usize) -> String {
        match &self.column_names {
            Some(names) => names[j].clone(),
            None => format!("x{}", j + 1),
        }
    }

    /// Rows `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let x = DMatrix::from_fn(rows.len(), self.p(), |r, c| self.x[(rows[r], c)]);
        Dataset { y, x, column_names: self.column_names.clone() }
    }
}

/// One candidate: which covariates enter through splines, which linearly.
///
/// Indices are zero-based column indices. The intercept is always present.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub nonparam: Vec<usize>,
    pub param: Vec<usize>,
    /// Interior knot count for each entry of `nonparam`.
    pub knots: Vec<usize>,
    pub degree: usize,
    pub placement: KnotPlacement,
}

fn strictly_sorted(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl ModelSpec {
    pub fn new(
        nonparam: Vec<usize>,
        param: Vec<usize>,
        knots: Vec<usize>,
        degree: usize,
        placement: KnotPlacement,
    ) -> Result<Self> {
        let spec = ModelSpec { nonparam, param, knots, degree, placement };
        spec.check_shape()?;
        Ok(spec)
    }

    /// Every spline component uses the same knot count.
    pub fn uniform(
        mut nonparam: Vec<usize>,
        mut param: Vec<usize>,
        n_knots: usize,
        degree: usize,
        placement: KnotPlacement,
    ) -> Result<Self> {
        nonparam.sort_unstable();
        param.sort_unstable();
        let knots = vec![n_knots; nonparam.len()];
        Self::new(nonparam, param, knots, degree, placement)
    }

    fn check_shape(&self) -> Result<()> {
        if !strictly_sorted(&self.nonparam) || !strictly_sorted(&self.param) {
            return Err(Error::Spec("index sets must be sorted without duplicates".into()));
        }
        if self.nonparam.iter().any(|j| self.param.binary_search(j).is_ok()) {
            return Err(Error::Spec("nonparametric and linear index sets overlap".into()));
        }
        if self.knots.len() != self.nonparam.len() {
            return Err(Error::Spec(format!(
                "{} knot counts for {} spline components",
                self.knots.len(),
                self.nonparam.len()
            )));
        }
        if !self.nonparam.is_empty() && self.degree == 0 {
            return Err(Error::Spec("spline degree must be at least 1".into()));
        }
        Ok(())
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        self.check_shape()?;
        if let Some(&j) = self.nonparam.iter().chain(&self.param).find(|&&j| j >= p) {
            return Err(Error::Spec(format!("covariate index {j} out of range for p = {p}")));
        }
        Ok(())
    }

    /// Sorted union of both index sets.
    pub fn variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.nonparam.iter().chain(&self.param).copied().collect();
        v.sort_unstable();
        v
    }

    pub fn contains(&self, j: usize) -> bool {
        self.nonparam.binary_search(&j).is_ok() || self.param.binary_search(&j).is_ok()
    }

    /// D_k = 1 + Σ (degree + J_j) + |linear set|.
    pub fn dim(&self) -> usize {
        1 + self.knots.iter().map(|j| self.degree + j).sum::<usize>() + self.param.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub z: DMatrix<f64>,
    pub bases: Vec<SplineBasis>,
    pub spec: ModelSpec,
}

impl DesignMatrix {
    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.z.nrows()
    }
}

fn distinct_count(values: &[f64]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v.len()
}

/// Fits the basis for spline component `pos` of `spec` on `data`.
fn fit_basis(data: &Dataset, spec: &ModelSpec, pos: usize) -> Result<SplineBasis> {
    let j = spec.nonparam[pos];
    let n_knots = spec.knots[pos];
    let col = data.column(j);
    let distinct = distinct_count(col);
    if distinct < n_knots + 2 {
        return Err(Error::DegenerateColumn {
            column: j,
            reason: format!("{distinct} distinct values, need at least {}", n_knots + 2),
        });
    }
    make_knots(col, n_knots, spec.placement, spec.degree)
        .map_err(|e| Error::DegenerateColumn { column: j, reason: e.to_string() })
}

/// Design for `spec` with spline bases fitted on `data` itself.
pub fn build_design(data: &Dataset, spec: &ModelSpec) -> Result<DesignMatrix> {
    spec.validate(data.p())?;
    let bases = (0..spec.nonparam.len()).map(|pos| fit_basis(data, spec, pos)).collect::<Result<Vec<_>>>()?;
    build_design_with_bases(data, spec, &bases)
}

/// Design for `spec` reusing previously fitted bases (e.g. from a training
/// fold). Covariates outside a basis' boundary are clamped to it.
pub fn build_design_with_bases(data: &Dataset, spec: &ModelSpec, bases: &[SplineBasis]) -> Result<DesignMatrix> {
    spec.validate(data.p())?;
    if bases.len() != spec.nonparam.len() {
        return Err(Error::Spec(format!(
            "{} bases supplied for {} spline components",
            bases.len(),
            spec.nonparam.len()
        )));
    }
    for (pos, basis) in bases.iter().enumerate() {
        if basis.degree() != spec.degree || basis.interior_knots().len() != spec.knots[pos] {
            return Err(Error::Spec(format!(
                "basis {pos} (degree {}, {} knots) does not match the spec",
                basis.degree(),
                basis.interior_knots().len()
            )));
        }
    }
    let n = data.n();
    let dim = spec.dim();
    let mut z = DMatrix::<f64>::zeros(n, dim);
    z.column_mut(0).fill(1.0);
    let mut offset = 1;
    let mut buf = Vec::new();
    for (basis, &j) in bases.iter().zip(&spec.nonparam) {
        let v = basis.dim();
        buf.resize(v, 0.0);
        for (i, &x) in data.column(j).iter().enumerate() {
            basis.eval_into(x, &mut buf);
            for (c, &b) in buf.iter().enumerate() {
                z[(i, offset + c)] = b;
            }
        }
        offset += v;
    }
    for &j in &spec.param {
        z.column_mut(offset).copy_from_slice(data.column(j));
        offset += 1;
    }
    debug_assert_eq!(offset, dim);
    Ok(DesignMatrix { z, bases: bases.to_vec(), spec: spec.clone() })
}

/// Builds designs for many candidates on one dataset, fitting each distinct
/// (column, knots, degree, placement) basis once.
pub fn build_designs(data: &Dataset, specs: &[ModelSpec]) -> Result<Vec<DesignMatrix>> {
    let mut cache: HashMap<(usize, usize, usize, KnotPlacement), SplineBasis> = HashMap::new();
    specs
        .iter()
        .map(|spec| {
            spec.validate(data.p())?;
            let mut bases = Vec::with_capacity(spec.nonparam.len());
            for pos in 0..spec.nonparam.len() {
                let key = (spec.nonparam[pos], spec.knots[pos], spec.degree, spec.placement);
                let basis = match cache.get(&key) {
                    Some(b) => b.clone(),
                    None => {
                        let b = fit_basis(data, spec, pos)?;
                        cache.insert(key, b.clone());
                        b
                    }
                };
                bases.push(basis);
            }
            build_design_with_bases(data, spec, &bases)
        })
        .collect()
}
