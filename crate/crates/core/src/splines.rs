//! Normalized B-spline bases on clamped knot vectors.
//!
//! The full basis of degree `l` with `J` interior knots has `J + l + 1`
//! functions and sums to one on `[a, b]`. Candidate designs already carry an
//! intercept, so [`SplineBasis::eval`] returns the reduced basis with the first
//! function dropped, leaving `l + J` columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KnotPlacement {
    #[default]
    Quantile,
    Equidistant,
}

impl std::str::FromStr for KnotPlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(KnotPlacement::Quantile),
            "equidistant" | "uniform" => Ok(KnotPlacement::Equidistant),
            other => Err(Error::InvalidArgument(format!("unknown knot placement '{other}'"))),
        }
    }
}

/// Interior knot count as a function of the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotRule {
    /// `⌈n^{1/5}⌉`
    CeilNFifth,
    /// `⌈n^{1/5}⌉` knots in total, the two boundary knots included.
    CeilNFifthTotal,
    /// `⌈(2n)^{1/5}⌉ − 1`
    Ceil2NFifthMinus1,
    /// `⌈(2n)^{1/5}⌉ − 1` knots in total, the two boundary knots included.
    Ceil2NFifthMinus1Total,
    Explicit(usize),
}

/// Smallest integer `k` with `k^5 ≥ n`, computed exactly.
pub fn ceil_fifth_root(n: usize) -> usize {
    let mut k = (n as f64).powf(0.2).floor() as usize;
    while k > 0 && (k as u128).pow(5) >= n as u128 {
        k -= 1;
    }
    while ((k as u128).pow(5)) < n as u128 {
        k += 1;
    }
    k
}

impl KnotRule {
    pub fn knots(&self, n: usize) -> usize {
        match *self {
            KnotRule::CeilNFifth => ceil_fifth_root(n),
            KnotRule::CeilNFifthTotal => ceil_fifth_root(n).saturating_sub(2),
            KnotRule::Ceil2NFifthMinus1 => ceil_fifth_root(2 * n).saturating_sub(1),
            KnotRule::Ceil2NFifthMinus1Total => ceil_fifth_root(2 * n).saturating_sub(3),
            KnotRule::Explicit(j) => j,
        }
    }
}

impl std::str::FromStr for KnotRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ceil_n_fifth" => Ok(KnotRule::CeilNFifth),
            "ceil_n_fifth_total" => Ok(KnotRule::CeilNFifthTotal),
            "ceil_2n_fifth_minus1" => Ok(KnotRule::Ceil2NFifthMinus1),
            "ceil_2n_fifth_minus1_total" => Ok(KnotRule::Ceil2NFifthMinus1Total),
            other => other
                .parse::<usize>()
                .map(KnotRule::Explicit)
                .map_err(|_| Error::InvalidArgument(format!("unknown knot rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasis")]
pub struct SplineBasis {
    degree: usize,
    interior_knots: Vec<f64>,
    boundary: (f64, f64),
    #[serde(skip_serializing)]
    knots: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBasis {
    degree: usize,
    interior_knots: Vec<f64>,
    boundary: (f64, f64),
}

impl TryFrom<RawBasis> for SplineBasis {
    type Error = Error;

    fn try_from(raw: RawBasis) -> Result<Self> {
        SplineBasis::new(raw.degree, raw.interior_knots, raw.boundary)
    }
}

const MAX_DEGREE: usize = 15;

/// Type-7 (linear interpolation) empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Builds a basis whose boundary is the range of `values` and whose interior
/// knots follow `placement`.
pub fn make_knots(values: &[f64], n_interior: usize, placement: KnotPlacement, degree: usize) -> Result<SplineBasis> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite covariate value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let (a, b) = match (sorted.first(), sorted.last()) {
        (Some(&a), Some(&b)) if a < b => (a, b),
        _ => return Err(Error::DegenerateRange("covariate has fewer than two distinct values".into())),
    };
    let step = 1.0 / (n_interior + 1) as f64;
    let interior: Vec<f64> = (1..=n_interior)
        .map(|i| match placement {
            KnotPlacement::Quantile => quantile_sorted(&sorted, i as f64 * step),
            KnotPlacement::Equidistant => a + (b - a) * i as f64 * step,
        })
        .collect();
    SplineBasis::new(degree, interior, (a, b))
}

impl SplineBasis {
    pub fn new(degree: usize, interior_knots: Vec<f64>, boundary: (f64, f64)) -> Result<Self> {
        let (a, b) = boundary;
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!("spline degree must be in 1..={MAX_DEGREE}, got {degree}")));
        }
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::DegenerateRange(format!("invalid boundary ({a}, {b})")));
        }
        if interior_knots.iter().any(|&k| !(k > a && k < b)) {
            return Err(Error::DegenerateRange(format!("interior knots must lie strictly inside ({a}, {b})")));
        }
        if interior_knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("interior knots must be nondecreasing".into()));
        }
        let mut basis = SplineBasis { degree, interior_knots, boundary, knots: Vec::new() };
        basis.rebuild_knots();
        Ok(basis)
    }

    fn rebuild_knots(&mut self) {
        let (a, b) = self.boundary;
        let l = self.degree;
        let mut knots = Vec::with_capacity(self.interior_knots.len() + 2 * (l + 1));
        knots.extend(std::iter::repeat_n(a, l + 1));
        knots.extend_from_slice(&self.interior_knots);
        knots.extend(std::iter::repeat_n(b, l + 1));
        self.knots = knots;
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    pub fn boundary(&self) -> (f64, f64) {
        self.boundary
    }

    /// Clamped knot vector with boundary knots repeated `degree + 1` times.
    pub fn knot_vector(&self) -> &[f64] {
        &self.knots
    }

    /// Dimension of the reduced basis, `degree + J`.
    pub fn dim(&self) -> usize {
        self.degree + self.interior_knots.len()
    }

    pub fn full_dim(&self) -> usize {
        self.dim() + 1
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.boundary.0, self.boundary.1)
    }

    /// Evaluates the `degree + 1` possibly-nonzero full-basis functions at
    /// clamped `x`, returning the index of the first of them.
    fn nonzero(&self, x: f64, out: &mut [f64]) -> usize {
        let l = self.degree;
        let t = &self.knots;
        let nb = self.full_dim();
        let x = self.clamp(x);
        // last s in [l, nb-1] with t[s] <= x
        let span = match t[l..nb].partition_point(|&k| k <= x) {
            0 => l,
            p => l + p - 1,
        };
        let mut left = [0.0f64; 16];
        let mut right = [0.0f64; 16];
        out[0] = 1.0;
        for j in 1..=l {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        span - l
    }

    /// Full (unreduced) basis, length `degree + J + 1`.
    pub fn eval_full(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.full_dim()];
        let mut local = vec![0.0; self.degree + 1];
        let first = self.nonzero(x, &mut local);
        out[first..first + self.degree + 1].copy_from_slice(&local);
        out
    }

    /// Reduced basis written into `out` (length `dim()`).
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        out.fill(0.0);
        let mut local = [0.0f64; 16];
        let first = self.nonzero(x, &mut local[..=self.degree]);
        for (r, &v) in local[..=self.degree].iter().enumerate() {
            let k = first + r;
            if k > 0 {
                out[k - 1] = v;
            }
        }
    }

    /// Reduced basis at `x`, length `degree + J`. Values are clamped to the boundary.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }
}
