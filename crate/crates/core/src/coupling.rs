//! Monotone coupling matrices `D = (d_ij)`: structure checks, the positive left
//! null vector, constant solutions of `D u = b - a·1`, the explicit ergodic
//! constant for common-minimum eikonal systems and the component-gap decay rate.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Point};

/// Row-sum tolerance for exact matrices and for field samples.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Residual bound asserted after linear solves.
pub const SOLVE_TOL: f64 = 1e-10;

/// Largest `m` accepted by [`delta_rate`] (it enumerates `2^m` subsets).
pub const DELTA_MAX_M: usize = 12;

pub type MatrixField = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub enum CouplingMatrix {
    Constant(DMatrix<f64>),
    /// `x ↦ D(x)`, sampled where needed.
    Field { m: usize, sampler: MatrixField },
}

impl fmt::Debug for CouplingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(d) => f.debug_tuple("Constant").field(&rows_of(d)).finish(),
            Self::Field { m, .. } => f.debug_struct("Field").field("m", m).finish(),
        }
    }
}

impl CouplingMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::Constant(matrix_from_rows(rows)?))
    }

    pub fn field<F>(m: usize, sampler: F) -> Self
    where
        F: Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::Field {
            m,
            sampler: Arc::new(sampler),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Self::Constant(d) => d.nrows(),
            Self::Field { m, .. } => *m,
        }
    }

    pub fn at(&self, x: &Point) -> DMatrix<f64> {
        match self {
            Self::Constant(d) => d.clone(),
            Self::Field { sampler, .. } => sampler(x),
        }
    }

    pub fn as_constant(&self) -> Option<&DMatrix<f64>> {
        match self {
            Self::Constant(d) => Some(d),
            Self::Field { .. } => None,
        }
    }

    /// The constant matrix, or an error for field couplings.
    pub fn require_constant(&self) -> Result<&DMatrix<f64>> {
        self.as_constant().ok_or_else(|| {
            Error::Coupling("x-dependent coupling is only supported by the ergodic solver".into())
        })
    }

    /// `D` sampled at every node of `grid` (one copy for constant couplings).
    pub fn samples(&self, grid: &Grid) -> Vec<DMatrix<f64>> {
        match self {
            Self::Constant(d) => vec![d.clone()],
            Self::Field { sampler, .. } => (0..grid.len()).map(|i| sampler(&grid.coords(i))).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match self {
            Self::Constant(d) => Self::Constant(d * s),
            Self::Field { m, sampler } => {
                let inner = sampler.clone();
                Self::Field {
                    m: *m,
                    sampler: Arc::new(move |x| inner(x) * s),
                }
            }
        }
    }
}

impl Serialize for CouplingMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Constant(d) => rows_of(d).serialize(s),
            Self::Field { .. } => Err(serde::ser::Error::custom(
                "field couplings have no JSON form",
            )),
        }
    }
}

impl<'de> Deserialize<'de> for CouplingMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Self::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = rows.len();
    if m == 0 {
        return Err(Error::Structure("empty coupling matrix".into()));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(Error::Structure(format!(
            "coupling matrix is not square: row {i} has {} entries, expected {m}",
            r.len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Structure("coupling matrix has non-finite entries".into()));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

pub fn rows_of(d: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..d.nrows())
        .map(|i| (0..d.ncols()).map(|j| d[(i, j)]).collect())
        .collect()
}

fn check_square(d: &DMatrix<f64>) -> Result<usize> {
    if d.nrows() != d.ncols() || d.nrows() == 0 {
        return Err(Error::Structure(format!(
            "coupling matrix must be square and nonempty, got {}x{}",
            d.nrows(),
            d.ncols()
        )));
    }
    Ok(d.nrows())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneViolation {
    pub i: usize,
    pub j: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCheck {
    pub valid: bool,
    pub violations: Vec<MonotoneViolation>,
}

/// Sign pattern `d_ii >= 0`, `d_ij <= 0` and zero row sums.
pub fn validate_monotone(d: &DMatrix<f64>) -> Result<MonotoneCheck> {
    let m = check_square(d)?;
    let mut violations = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let v = d[(i, j)];
            if i == j && v < 0.0 {
                violations.push(MonotoneViolation {
                    i,
                    j,
                    reason: format!("negative diagonal entry {v}"),
                });
            } else if i != j && v > 0.0 {
                violations.push(MonotoneViolation {
                    i,
                    j,
                    reason: format!("positive off-diagonal entry {v}"),
                });
            }
        }
        let sum: f64 = d.row(i).iter().sum();
        if sum.abs() > ROW_SUM_TOL {
            violations.push(MonotoneViolation {
                i,
                j: i,
                reason: format!("row sum {sum} is not zero"),
            });
        }
    }
    Ok(MonotoneCheck {
        valid: violations.is_empty(),
        violations,
    })
}

/// [`validate_monotone`] at every grid node for field couplings.
pub fn validate_coupling(c: &CouplingMatrix, grid: &Grid) -> Result<MonotoneCheck> {
    let mut all = Vec::new();
    for d in c.samples(grid) {
        all.extend(validate_monotone(&d)?.violations);
    }
    Ok(MonotoneCheck {
        valid: all.is_empty(),
        violations: all,
    })
}

/// Strong connectivity of the graph with an edge `i → j` whenever `i ≠ j` and `d_ij ≠ 0`.
pub fn is_irreducible(d: &DMatrix<f64>) -> Result<bool> {
    let m = check_square(d)?;
    let reach = |forward: bool| {
        let mut seen = vec![false; m];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..m {
                let w = if forward { d[(i, j)] } else { d[(j, i)] };
                if i != j && w != 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    Ok(reach(true) && reach(false))
}

/// Numerical rank with the relative singular-value threshold [`RANK_TOL`].
pub fn rank(d: &DMatrix<f64>) -> usize {
    let sv = d.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Positive left null vector `Λ` of `D`, normalised to `Σ Λ_i = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerronVector {
    pub lambda: Vec<f64>,
}

impl PerronVector {
    pub fn weighted_mean(&self, b: &[f64]) -> f64 {
        let s: f64 = self.lambda.iter().sum();
        self.lambda.iter().zip(b).map(|(l, v)| l * v).sum::<f64>() / s
    }
}

/// Null vector of `Dᵀ` from its smallest singular vector, sign-fixed and normalised.
pub fn perron_vector(d: &DMatrix<f64>) -> Result<PerronVector> {
    let m = check_square(d)?;
    let mono = validate_monotone(d)?;
    if !mono.valid {
        return Err(Error::Coupling(format!(
            "coupling is not monotone: {}",
            mono.violations[0].reason
        )));
    }
    if !is_irreducible(d)? {
        return Err(Error::Coupling(
            "coupling is reducible; a positive left null vector is not guaranteed".into(),
        ));
    }
    if m == 1 {
        return Ok(PerronVector { lambda: vec![1.0] });
    }
    let r = rank(d);
    if r != m - 1 {
        return Err(Error::Coupling(format!("expected rank {} but found {r}", m - 1)));
    }
    let svd = d.transpose().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
    let mut lambda: Vec<f64> = v_t.row(k).iter().copied().collect();
    let total: f64 = lambda.iter().sum();
    for l in lambda.iter_mut() {
        *l /= total;
    }
    if let Some(bad) = lambda.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::Coupling(format!("null vector has a non-positive entry {bad}")));
    }
    let res = (d.transpose() * DVector::from_vec(lambda.clone())).amax();
    if res > SOLVE_TOL {
        return Err(Error::Coupling(format!("left null residual {res:e} exceeds {SOLVE_TOL:e}")));
    }
    Ok(PerronVector { lambda })
}

/// Constant solution of `Σ_j d_ij u_j = b_i - a`, with `a` the `Λ`-weighted mean of `b` and `u_m = 0`.
pub fn constant_solution(d: &DMatrix<f64>, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = check_square(d)?;
    if b.len() != m {
        return Err(Error::Structure(format!("right-hand side has {} entries, expected {m}", b.len())));
    }
    let lambda = perron_vector(d)?;
    let a = lambda.weighted_mean(b);
    if m == 1 {
        return Ok((vec![0.0], a));
    }
    let minor = d.view((0, 0), (m - 1, m - 1)).into_owned();
    let rhs = DVector::from_fn(m - 1, |i, _| b[i] - a);
    let sol = minor
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Coupling("leading (m-1)x(m-1) minor is singular".into()))?;
    let mut u: Vec<f64> = sol.iter().copied().collect();
    u.push(0.0);
    let du = d * DVector::from_vec(u.clone());
    let res = (0..m).map(|i| (du[i] - (b[i] - a)).abs()).fold(0.0, f64::max);
    if res > SOLVE_TOL {
        return Err(Error::Coupling(format!("constant solution residual {res:e}")));
    }
    Ok((u, a))
}

/// Minus the grid minimum of the `Λ`-weighted average of the `f_i`.
pub fn ergodic_constant_formula(d: &DMatrix<f64>, f: &[GridFunction]) -> Result<f64> {
    let m = check_square(d)?;
    if f.len() != m {
        return Err(Error::Structure(format!("{} potentials for {m} components", f.len())));
    }
    for fi in &f[1..] {
        f[0].grid().check_same(fi.grid())?;
    }
    let lambda = perron_vector(d)?;
    let total: f64 = lambda.lambda.iter().sum();
    let min = (0..f[0].grid().len())
        .map(|node| {
            lambda
                .lambda
                .iter()
                .zip(f)
                .map(|(l, fi)| l * fi.values()[node])
                .sum::<f64>()
                / total
        })
        .fold(f64::INFINITY, f64::min);
    Ok(-min)
}

/// Every pair of rows shares a column where both entries are nonzero.
pub fn pairwise_nonzero(d: &DMatrix<f64>) -> bool {
    let m = d.nrows();
    (0..m).all(|i| (0..m).all(|j| (0..m).any(|k| d[(i, k)] * d[(j, k)] != 0.0)))
}

/// `min -[Σ_{k∈I} d_ik + Σ_{k∉I} d_jk]` over ordered pairs `i ≠ j` and subsets `I ∋ j`, `I ∌ i`.
pub fn delta_rate(d: &DMatrix<f64>) -> Result<f64> {
    let m = check_square(d)?;
    if m > DELTA_MAX_M {
        return Err(Error::Coupling(format!(
            "delta_rate enumerates subsets and is limited to m <= {DELTA_MAX_M}, got {m}"
        )));
    }
    if !pairwise_nonzero(d) {
        return Err(Error::Coupling("some pair of rows has no common nonzero column".into()));
    }
    let mut best = f64::INFINITY;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            for mask in 0u32..(1 << m) {
                if mask & (1 << j) == 0 || mask & (1 << i) != 0 {
                    continue;
                }
                let mut s = 0.0;
                for k in 0..m {
                    s += if mask & (1 << k) != 0 { d[(i, k)] } else { d[(j, k)] };
                }
                best = best.min(-s);
            }
        }
    }
    if !(best > 0.0) {
        return Err(Error::Coupling(format!("gap decay rate is not positive ({best})")));
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub monotone: bool,
    pub irreducible: bool,
    pub nonzero_row_index: Option<usize>,
    pub pairwise_nonzero: bool,
    pub rank: usize,
    pub delta_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perron: Option<Vec<f64>>,
}

pub fn analyze(d: &DMatrix<f64>) -> Result<CouplingReport> {
    let m = check_square(d)?;
    let monotone = validate_monotone(d)?.valid;
    let irreducible = is_irreducible(d)?;
    let nonzero_row_index = (0..m).find(|&i| (0..m).all(|j| d[(i, j)] != 0.0));
    let pw = pairwise_nonzero(d);
    let delta = if pw && m <= DELTA_MAX_M { delta_rate(d).ok() } else { None };
    let perron = if monotone && irreducible {
        perron_vector(d).ok().map(|p| p.lambda)
    } else {
        None
    };
    Ok(CouplingReport {
        monotone,
        irreducible,
        nonzero_row_index,
        pairwise_nonzero: pw,
        rank: rank(d),
        delta_rate: delta,
        perron,
    })
}
