//! Hamiltonians `H(x, p)` on the torus, the built-in catalog, the Lax–Friedrichs
//! numerical flux and sampled checks of the structural assumptions used by the
//! large-time theory.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{DirectionalWeight, FourierSeries};
use crate::grid::{torus_distance, Grid, Point};

pub type PointFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
pub type PhaseFn = Arc<dyn Fn(&Point, &Point) -> f64 + Send + Sync>;
pub type SetFn = Arc<dyn Fn(&Point) -> bool + Send + Sync>;

/// Default half-width of the gradient box used to size `lf_alpha`.
pub const DEFAULT_P_RADIUS: f64 = 3.0;

/// Default central-difference step for `H_p`.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Default exclusion radius around gradient kinks.
pub const DEFAULT_KINK_RADIUS: f64 = 1e-3;

/// Values below this are treated as zero when locating the set `K`.
const ZERO_SET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    Convex,
    StrictlyConvex,
    Coercive,
    EikonalSplit,
    NonconvexExample,
    IdenticalFamily,
    /// Sampling found no point of the set `K`.
    EmptyCompactSet,
}

/// The split `H = F - f` with `F(x, 0) = 0`, `F >= 0`.
#[derive(Clone)]
pub struct EikonalParts {
    pub kinetic: PhaseFn,
    pub potential: PointFn,
}

#[derive(Clone)]
pub struct Hamiltonian {
    name: String,
    dim: usize,
    eval: PhaseFn,
    speed: Option<PhaseFn>,
    tags: BTreeSet<ClassTag>,
    eikonal: Option<EikonalParts>,
    compact_set: Option<SetFn>,
    lf_alpha: f64,
}

impl fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hamiltonian")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("tags", &self.tags)
            .field("lf_alpha", &self.lf_alpha)
            .finish()
    }
}

impl Hamiltonian {
    /// A Hamiltonian from a bare evaluator. `lf_alpha` is sized on the default gradient box.
    pub fn new<F>(name: impl Into<String>, dim: usize, eval: F) -> Self
    where
        F: Fn(&Point, &Point) -> f64 + Send + Sync + 'static,
    {
        let mut h = Self {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            speed: None,
            tags: BTreeSet::new(),
            eikonal: None,
            compact_set: None,
            lf_alpha: 1.0,
        };
        h.lf_alpha = h.sampled_alpha(DEFAULT_P_RADIUS);
        h
    }

    /// Analytic bound for `|H_p(x, p)|`; otherwise central differences are used.
    pub fn with_speed<F>(mut self, speed: F) -> Self
    where
        F: Fn(&Point, &Point) -> f64 + Send + Sync + 'static,
    {
        self.speed = Some(Arc::new(speed));
        self.lf_alpha = self.sampled_alpha(DEFAULT_P_RADIUS);
        self
    }

    pub fn with_tags(mut self, tags: &[ClassTag]) -> Self {
        self.tags.extend(tags.iter().copied());
        self
    }

    pub fn with_compact_set<F>(mut self, k: F) -> Self
    where
        F: Fn(&Point) -> bool + Send + Sync + 'static,
    {
        self.compact_set = Some(Arc::new(k));
        self
    }

    pub fn with_lf_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Config(format!("lf_alpha must be positive, got {alpha}")));
        }
        self.lf_alpha = alpha;
        Ok(self)
    }

    /// Re-size `lf_alpha` as 1.1 × the sampled sup of `|H_p|` over `[-radius, radius]^N`.
    pub fn with_p_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config(format!("p-box radius must be positive, got {radius}")));
        }
        self.lf_alpha = self.sampled_alpha(radius);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tags(&self) -> &BTreeSet<ClassTag> {
        &self.tags
    }

    pub fn has_tag(&self, tag: ClassTag) -> bool {
        self.tags.contains(&tag)
    }

    pub fn eikonal_parts(&self) -> Option<&EikonalParts> {
        self.eikonal.as_ref()
    }

    pub fn compact_set(&self) -> Option<&SetFn> {
        self.compact_set.as_ref()
    }

    pub fn lf_alpha(&self) -> f64 {
        self.lf_alpha
    }

    /// Whether two handles share one evaluator.
    pub fn same_evaluator(&self, other: &Hamiltonian) -> bool {
        Arc::ptr_eq(&self.eval, &other.eval)
    }

    #[inline]
    pub fn eval(&self, x: &Point, p: &Point) -> f64 {
        (self.eval)(x, p)
    }

    /// Central-difference gradient in `p`.
    pub fn grad_p(&self, x: &Point, p: &Point, step: f64) -> Point {
        let mut g = [0.0; 2];
        for k in 0..self.dim {
            let mut hi = *p;
            let mut lo = *p;
            hi[k] += step;
            lo[k] -= step;
            g[k] = (self.eval(x, &hi) - self.eval(x, &lo)) / (2.0 * step);
        }
        g
    }

    /// `|H_p(x, p)|`, analytic when available.
    #[inline]
    pub fn speed(&self, x: &Point, p: &Point) -> f64 {
        match &self.speed {
            Some(s) => s(x, p),
            None => norm(&self.grad_p(x, p, DEFAULT_FD_STEP), self.dim),
        }
    }

    /// `H + kappa`. Tags and `lf_alpha` are unchanged.
    pub fn shifted(&self, kappa: f64) -> Self {
        let inner = self.eval.clone();
        let mut h = self.clone();
        h.name = format!("{}{:+}", self.name, kappa);
        h.eval = Arc::new(move |x, p| inner(x, p) + kappa);
        if let Some(parts) = &self.eikonal {
            let f = parts.potential.clone();
            h.eikonal = Some(EikonalParts {
                kinetic: parts.kinetic.clone(),
                potential: Arc::new(move |x| f(x) - kappa),
            });
        }
        h
    }

    fn sampled_alpha(&self, radius: f64) -> f64 {
        let xs = sample_nodes(self.dim, 16);
        let m = 41;
        let mut sup: f64 = 0.0;
        for x in &xs {
            for i in 0..m {
                for j in 0..if self.dim == 2 { m } else { 1 } {
                    let p = [
                        -radius + 2.0 * radius * i as f64 / (m - 1) as f64,
                        if self.dim == 2 {
                            -radius + 2.0 * radius * j as f64 / (m - 1) as f64
                        } else {
                            0.0
                        },
                    ];
                    sup = sup.max(self.speed(x, &p));
                }
            }
        }
        (1.1 * sup).max(1e-12)
    }
}

pub(crate) fn norm(p: &Point, dim: usize) -> f64 {
    p[..dim].iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn sample_nodes(dim: usize, n: usize) -> Vec<Point> {
    let grid = Grid::new(dim, n).expect("sampling grid");
    (0..grid.len()).map(|i| grid.coords(i)).collect()
}

/// `H(x, p) = |p|² - f(x)`.
pub fn make_quadratic_eikonal(dim: usize, f: PointFn) -> Hamiltonian {
    let fe = f.clone();
    Hamiltonian::new("quadratic_eikonal", dim, move |x, p| norm2(p) - fe(x))
        .with_speed(move |_, p| 2.0 * norm(p, dim))
        .with_tags(&[
            ClassTag::Convex,
            ClassTag::StrictlyConvex,
            ClassTag::Coercive,
            ClassTag::EikonalSplit,
        ])
        .with_eikonal(Arc::new(|_, p| norm2(p)), f)
}

/// `H(x, p) = |p| - f(x)`: the control Hamiltonian for unit-ball velocities.
pub fn make_linear_eikonal(dim: usize, f: PointFn) -> Hamiltonian {
    let fe = f.clone();
    Hamiltonian::new("linear_eikonal", dim, move |x, p| norm(p, dim) - fe(x))
        .with_speed(|_, _| 1.0)
        .with_tags(&[ClassTag::Convex, ClassTag::Coercive, ClassTag::EikonalSplit])
        .with_eikonal(Arc::new(move |_, p| norm(p, dim)), f)
}

/// `H(x, p) = (|p + q(x)|² - |q(x)|²)·F(p/|p|) - f(x)`, with `H(x, 0) = -f(x)`.
///
/// `K` is the common zero set of `f` and `|q|`; it is located on a 256-node
/// (1D) or 64×64 (2D) sample, and an empty sample adds
/// [`ClassTag::EmptyCompactSet`].
pub fn make_nonconvex_example(
    dim: usize,
    weight: DirectionalWeight,
    f: PointFn,
    q: VectorFn,
) -> Result<Hamiltonian> {
    let wmin = weight.sampled_min();
    if !(wmin > 0.0) {
        return Err(Error::Config(format!(
            "directional weight must be strictly positive, sampled min {wmin}"
        )));
    }
    let weight = Arc::new(weight);
    let (fe, qe, we) = (f.clone(), q.clone(), weight.clone());
    let eval = move |x: &Point, p: &Point| {
        let r2 = norm2(p);
        if r2 == 0.0 {
            return -fe(x);
        }
        let qx = qe(x);
        let psi = r2 + 2.0 * (p[0] * qx[0] + p[1] * qx[1]);
        psi * we.at_angle(p[1].atan2(p[0])) - fe(x)
    };
    let (qs, ws) = (q.clone(), weight.clone());
    let speed = move |x: &Point, p: &Point| {
        let qx = qs(x);
        let r2 = norm2(p);
        if r2 == 0.0 {
            // one-sided limits at the kink
            return 2.0 * norm(&qx, dim) * ws.sampled_max_abs();
        }
        let theta = p[1].atan2(p[0]);
        let w = ws.at_angle(theta);
        let dw = ws.angle_derivative(theta);
        let psi = r2 + 2.0 * (p[0] * qx[0] + p[1] * qx[1]);
        // ∇θ = (-p_y, p_x)/|p|²
        let gx = 2.0 * (p[0] + qx[0]) * w - psi * dw * p[1] / r2;
        let gy = 2.0 * (p[1] + qx[1]) * w + psi * dw * p[0] / r2;
        (gx * gx + gy * gy).sqrt()
    };
    let (fk, qk) = (f.clone(), q.clone());
    let in_k = move |x: &Point| fk(x).abs() <= ZERO_SET_TOL && norm(&qk(x), dim) <= ZERO_SET_TOL;
    let probe = sample_nodes(dim, if dim == 1 { 256 } else { 64 });
    let k_empty = !probe.iter().any(&in_k);
    let mut h = Hamiltonian::new("nonconvex_bs00", dim, eval)
        .with_speed(speed)
        .with_tags(&[ClassTag::NonconvexExample, ClassTag::Coercive])
        .with_compact_set(in_k);
    if k_empty {
        h = h.with_tags(&[ClassTag::EmptyCompactSet]);
    }
    Ok(h)
}

impl DirectionalWeight {
    fn sampled_max_abs(&self) -> f64 {
        (0..720)
            .map(|i| self.at_angle(i as f64 * std::f64::consts::PI / 360.0).abs())
            .fold(0.0, f64::max)
    }
}

impl Hamiltonian {
    fn with_eikonal(mut self, kinetic: PhaseFn, potential: PointFn) -> Self {
        self.eikonal = Some(EikonalParts { kinetic, potential });
        self
    }
}

fn norm2(p: &Point) -> f64 {
    p[0] * p[0] + p[1] * p[1]
}

/// Lax–Friedrichs numerical Hamiltonian
/// `H(x, (p⁻+p⁺)/2) - (α/2) Σ_k (p⁺_k - p⁻_k)`.
#[inline]
pub fn lax_friedrichs_flux(
    h: &Hamiltonian,
    x: &Point,
    p_minus: &Point,
    p_plus: &Point,
    alpha: f64,
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("lf_alpha must be positive, got {alpha}")));
    }
    Ok(lf_flux_unchecked(h, x, p_minus, p_plus, alpha))
}

#[inline]
pub(crate) fn lf_flux_unchecked(
    h: &Hamiltonian,
    x: &Point,
    p_minus: &Point,
    p_plus: &Point,
    alpha: f64,
) -> f64 {
    let mid = [
        0.5 * (p_minus[0] + p_plus[0]),
        0.5 * (p_minus[1] + p_plus[1]),
    ];
    let mut jump = 0.0;
    for k in 0..h.dim {
        jump += p_plus[k] - p_minus[k];
    }
    h.eval(x, &mid) - 0.5 * alpha * jump
}

// ---------------------------------------------------------------------------
// Built-in catalog

/// JSON parameter block for the built-in Hamiltonians.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianParams {
    #[serde(default)]
    pub f: FourierSeries,
    /// One series per axis; missing axes are zero.
    #[serde(default)]
    pub q: Vec<FourierSeries>,
    #[serde(default, rename = "F")]
    pub weight: Option<DirectionalWeight>,
    /// Additive constant applied after construction.
    #[serde(default)]
    pub shift: f64,
    /// Gradient box half-width used to size `lf_alpha`.
    #[serde(default)]
    pub p_radius: Option<f64>,
    #[serde(default)]
    pub lf_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub id: String,
    #[serde(default)]
    pub params: HamiltonianParams,
}

pub const BUILTIN_HAMILTONIANS: [&str; 3] = ["quadratic_eikonal", "linear_eikonal", "nonconvex_bs00"];

/// Build a catalog Hamiltonian from its string id and parameter block.
pub fn builtin(id: &str, dim: usize, params: &HamiltonianParams) -> Result<Hamiltonian> {
    let f = {
        let s = params.f.clone();
        Arc::new(move |x: &Point| s.eval(x)) as PointFn
    };
    let mut h = match id {
        "quadratic_eikonal" => make_quadratic_eikonal(dim, f),
        "linear_eikonal" => make_linear_eikonal(dim, f),
        "nonconvex_bs00" => {
            let q = params.q.clone();
            if q.len() > dim {
                return Err(Error::Config(format!(
                    "q has {} components for a {dim}D Hamiltonian",
                    q.len()
                )));
            }
            let qf = Arc::new(move |x: &Point| {
                let mut out = [0.0; 2];
                for (k, s) in q.iter().enumerate() {
                    out[k] = s.eval(x);
                }
                out
            }) as VectorFn;
            let w = params
                .weight
                .clone()
                .unwrap_or_else(|| DirectionalWeight::constant(1.0));
            make_nonconvex_example(dim, w, f, qf)?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown Hamiltonian id '{other}' (known: {})",
                BUILTIN_HAMILTONIANS.join(", ")
            )))
        }
    };
    if let Some(r) = params.p_radius {
        h = h.with_p_radius(r)?;
    }
    if params.shift != 0.0 {
        h = h.shifted(params.shift);
    }
    if let Some(a) = params.lf_alpha {
        h = h.with_lf_alpha(a)?;
    }
    Ok(h)
}

// ---------------------------------------------------------------------------
// Assumption sampling

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionId {
    H5,
    H7,
    H10,
    #[serde(rename = "strictconvex")]
    StrictConvex,
    #[serde(rename = "coercive")]
    Coercive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Nodes per axis of the `x` sample grid.
    pub x_nodes: usize,
    /// Half-width of the box `p` (and `q`) are drawn from.
    pub p_radius: f64,
    /// Random gradients per `x` node.
    pub p_samples: usize,
    pub seed: u64,
    pub fd_step: f64,
    /// Gradients closer than this to `p = 0` are skipped.
    pub kink_radius: f64,
    /// Levels at which the empirical `η ↦ ψ(η)` profile is reported.
    pub etas: Vec<f64>,
    /// The checks apply to `H - shift` (use an ergodic constant estimate).
    pub shift: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            x_nodes: 32,
            p_radius: DEFAULT_P_RADIUS,
            p_samples: 32,
            seed: 7,
            fd_step: DEFAULT_FD_STEP,
            kink_radius: DEFAULT_KINK_RADIUS,
            etas: vec![0.05, 0.1, 0.2, 0.4],
            shift: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub x: Point,
    pub p: Point,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub assumption_id: AssumptionId,
    pub sample_count: usize,
    pub violations: Vec<Violation>,
    pub passed: bool,
    /// `(η, min H_p·p - H over qualifying samples)`; `None` when no sample qualifies.
    pub eta_psi_profile: Option<Vec<(f64, Option<f64>)>>,
    pub notes: Vec<String>,
}

/// Evaluate one structural assumption on sampled `(x, p)` (and `q`, `λ`) points.
pub fn check_assumption(
    h: &Hamiltonian,
    id: AssumptionId,
    cfg: &SamplerConfig,
) -> Result<AssumptionReport> {
    if cfg.x_nodes < crate::grid::MIN_N || cfg.p_samples == 0 || !(cfg.p_radius > 0.0) {
        return Err(Error::Config("sampler needs x_nodes >= 8, p_samples > 0, p_radius > 0".into()));
    }
    let dim = h.dim;
    let xs = sample_nodes(dim, cfg.x_nodes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shift = cfg.shift;
    let hv = |x: &Point, p: &Point| h.eval(x, p) - shift;
    let draw = |rng: &mut ChaCha8Rng| -> Point {
        let mut p = [0.0; 2];
        for v in p.iter_mut().take(dim) {
            *v = rng.gen_range(-cfg.p_radius..=cfg.p_radius);
        }
        p
    };
    let euler_gap = |x: &Point, p: &Point| {
        let g = h.grad_p(x, p, cfg.fd_step);
        g[0] * p[0] + g[1] * p[1] - hv(x, p)
    };

    let mut notes = Vec::new();
    if shift != 0.0 {
        notes.push(format!("checked for H - {shift}"));
    }
    // K on the sample grid; absent predicate means K = ∅.
    let k_points: Vec<Point> = match &h.compact_set {
        Some(k) => xs.iter().copied().filter(|x| k(x)).collect(),
        None => {
            if matches!(id, AssumptionId::H5 | AssumptionId::H7 | AssumptionId::H10) {
                notes.push("no compact set K attached; treated as K = ∅".into());
            }
            Vec::new()
        }
    };
    let dist_k = |x: &Point| {
        k_points
            .iter()
            .map(|k| torus_distance(dim, x, k))
            .fold(f64::INFINITY, f64::min)
    };
    let tol = |scale: f64| 1e-7 * (1.0 + scale.abs());

    let mut violations = Vec::new();
    let mut count = 0usize;
    let mut profile: Vec<(f64, Option<f64>)> = cfg.etas.iter().map(|&e| (e, None)).collect();
    let record_profile = |x: &Point, hval: f64, gap: f64, profile: &mut Vec<(f64, Option<f64>)>| {
        let d = dist_k(x);
        for (eta, best) in profile.iter_mut() {
            if hval >= *eta && d >= *eta {
                *best = Some(best.map_or(gap, |b: f64| b.min(gap)));
            }
        }
    };

    match id {
        AssumptionId::H10 | AssumptionId::H7 => {
            for x in &xs {
                for _ in 0..cfg.p_samples {
                    let p = draw(&mut rng);
                    if norm(&p, dim) < cfg.kink_radius {
                        continue;
                    }
                    count += 1;
                    let hval = hv(x, &p);
                    let gap = euler_gap(x, &p);
                    if id == AssumptionId::H10 && gap < -tol(hval) {
                        violations.push(Violation {
                            x: *x,
                            p,
                            q: None,
                            lambda: None,
                            residual: gap,
                        });
                    }
                    record_profile(x, hval, gap, &mut profile);
                }
            }
            check_on_k(&k_points, &mut rng, &draw, &hv, &mut violations, &mut count, cfg);
            check_profile(&profile, &mut violations);
        }
        AssumptionId::H5 => {
            for x in &xs {
                for _ in 0..cfg.p_samples {
                    let q = draw(&mut rng);
                    if hv(x, &q) > 0.0 {
                        continue;
                    }
                    let p = draw(&mut rng);
                    let pq = [p[0] + q[0], p[1] + q[1]];
                    if norm(&pq, dim) < cfg.kink_radius {
                        continue;
                    }
                    count += 1;
                    let hval = hv(x, &pq);
                    let g = h.grad_p(x, &pq, cfg.fd_step);
                    let gap = g[0] * p[0] + g[1] * p[1] - hval;
                    let d = dist_k(x);
                    for (eta, best) in profile.iter_mut() {
                        if hval >= *eta && d >= *eta {
                            *best = Some(best.map_or(gap, |b: f64| b.min(gap)));
                        }
                    }
                }
            }
            check_on_k(&k_points, &mut rng, &draw, &hv, &mut violations, &mut count, cfg);
            check_profile(&profile, &mut violations);
        }
        AssumptionId::StrictConvex => {
            for x in &xs {
                for s in 0..cfg.p_samples {
                    let p = draw(&mut rng);
                    // every fourth pair is collinear, which exposes positive homogeneity
                    let q = if s % 4 == 0 {
                        [2.0 * p[0], 2.0 * p[1]]
                    } else {
                        draw(&mut rng)
                    };
                    if norm(&[p[0] - q[0], p[1] - q[1]], dim) < cfg.kink_radius {
                        continue;
                    }
                    for lambda in [0.25, 0.5, 0.75] {
                        count += 1;
                        let mix = [
                            lambda * p[0] + (1.0 - lambda) * q[0],
                            lambda * p[1] + (1.0 - lambda) * q[1],
                        ];
                        let gap = lambda * hv(x, &p) + (1.0 - lambda) * hv(x, &q) - hv(x, &mix);
                        if gap <= 1e-9 {
                            violations.push(Violation {
                                x: *x,
                                p,
                                q: Some(q),
                                lambda: Some(lambda),
                                residual: gap,
                            });
                        }
                    }
                }
            }
        }
        AssumptionId::Coercive => {
            // min over x and directions of H on spheres |p| = r must grow with r
            let radii: Vec<f64> = (1..=4).map(|k| cfg.p_radius * k as f64 / 4.0).collect();
            let dirs = 64usize;
            let mut mins = Vec::new();
            for &r in &radii {
                let mut m = f64::INFINITY;
                for x in &xs {
                    for d in 0..if dim == 1 { 2 } else { dirs } {
                        let p = if dim == 1 {
                            [if d == 0 { r } else { -r }, 0.0]
                        } else {
                            let th = 2.0 * std::f64::consts::PI * d as f64 / dirs as f64;
                            [r * th.cos(), r * th.sin()]
                        };
                        count += 1;
                        m = m.min(hv(x, &p));
                    }
                }
                mins.push(m);
            }
            let at_zero = xs.iter().map(|x| hv(x, &[0.0, 0.0])).fold(f64::NEG_INFINITY, f64::max);
            for w in 1..mins.len() {
                if mins[w] <= mins[w - 1] {
                    violations.push(Violation {
                        x: [0.0, 0.0],
                        p: [radii[w], 0.0],
                        q: None,
                        lambda: None,
                        residual: mins[w] - mins[w - 1],
                    });
                }
            }
            if mins[mins.len() - 1] <= at_zero {
                violations.push(Violation {
                    x: [0.0, 0.0],
                    p: [cfg.p_radius, 0.0],
                    q: None,
                    lambda: None,
                    residual: mins[mins.len() - 1] - at_zero,
                });
            }
        }
    }

    let with_profile = matches!(id, AssumptionId::H5 | AssumptionId::H7 | AssumptionId::H10);
    Ok(AssumptionReport {
        assumption_id: id,
        sample_count: count,
        passed: violations.is_empty(),
        violations,
        eta_psi_profile: with_profile.then_some(profile),
        notes,
    })
}

fn check_on_k<D, V>(
    k_points: &[Point],
    rng: &mut ChaCha8Rng,
    draw: &D,
    hv: &V,
    violations: &mut Vec<Violation>,
    count: &mut usize,
    cfg: &SamplerConfig,
) where
    D: Fn(&mut ChaCha8Rng) -> Point,
    V: Fn(&Point, &Point) -> f64,
{
    for x in k_points {
        for _ in 0..cfg.p_samples {
            let p = draw(rng);
            *count += 1;
            let v = hv(x, &p);
            if v < -1e-7 {
                violations.push(Violation {
                    x: *x,
                    p,
                    q: None,
                    lambda: None,
                    residual: v,
                });
            }
        }
    }
}

fn check_profile(profile: &[(f64, Option<f64>)], violations: &mut Vec<Violation>) {
    for (eta, best) in profile {
        if let Some(b) = best {
            if *b <= 0.0 {
                violations.push(Violation {
                    x: [f64::NAN, f64::NAN],
                    p: [f64::NAN, f64::NAN],
                    q: None,
                    lambda: Some(*eta),
                    residual: *b,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bump() -> PointFn {
        Arc::new(|x: &Point| 1.0 - (2.0 * PI * x[0]).cos())
    }

    fn nonconvex_1d() -> Hamiltonian {
        let w = DirectionalWeight {
            constant: 1.0,
            cos: vec![0.5],
            sin: vec![],
        };
        let q: VectorFn = Arc::new(|x: &Point| [0.5 * (2.0 * PI * x[0]).sin(), 0.0]);
        make_nonconvex_example(1, w, bump(), q).unwrap()
    }

    #[test]
    fn quadratic_values() {
        let h = make_quadratic_eikonal(2, Arc::new(|_| 0.0));
        assert_eq!(h.eval(&[0.3, 0.1], &[1.0, 0.0]), 1.0);
        let h = make_quadratic_eikonal(1, bump());
        assert_eq!(h.eval(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!(h.has_tag(ClassTag::StrictlyConvex));
        assert!((h.lf_alpha() - 6.6).abs() < 1e-12);
    }

    #[test]
    fn quadratic_euler_identity() {
        // H_p·p - H = |p|² + f, checked with finite differences
        let f = bump();
        let h = make_quadratic_eikonal(2, f.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let g = h.grad_p(&x, &p, 1e-5);
            let lhs = g[0] * p[0] + g[1] * p[1] - h.eval(&x, &p);
            let rhs = norm2(&p) + f(&x);
            assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
            assert!(lhs >= 0.0);
        }
    }

    #[test]
    fn linear_values_and_direction_oracle() {
        let h = make_linear_eikonal(2, Arc::new(|_| 0.0));
        assert_eq!(h.eval(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
        let g = make_linear_eikonal(1, bump());
        assert!((g.eval(&[0.5, 0.0], &[0.0, 0.0]) + 2.0).abs() < 1e-15);

        // sup over 64 unit directions of -<a,p> - f
        let dirs: Vec<Point> = (0..64)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 64.0;
                [t.cos(), t.sin()]
            })
            .collect();
        let f = bump();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let sup = dirs
                .iter()
                .map(|a| -(a[0] * p[0] + a[1] * p[1]) - f(&x))
                .fold(f64::NEG_INFINITY, f64::max);
            let exact = h.eval(&x, &p) - f(&x);
            let bound = 2.0 * (1.0 - (PI / 64.0).cos()) * norm(&p, 2);
            assert!(exact - sup >= -1e-12 && exact - sup <= bound + 1e-12);
        }
    }

    #[test]
    fn nonconvex_values() {
        let h = nonconvex_1d();
        // x = 0 lies in K
        assert_eq!(h.eval(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!(h.compact_set().unwrap()(&[0.0, 0.0]));
        assert!(!h.has_tag(ClassTag::EmptyCompactSet));
        // q ≡ 0 reduces to |p|²F(p/|p|) - f
        let w = DirectionalWeight::constant(2.0);
        let g = make_nonconvex_example(1, w, bump(), Arc::new(|_| [0.0, 0.0])).unwrap();
        let x = [0.3, 0.0];
        assert!((g.eval(&x, &[1.5, 0.0]) - (2.0 * 2.25 - bump()(&x))).abs() < 1e-14);
    }

    #[test]
    fn nonconvex_euler_identity() {
        let h = nonconvex_1d();
        let w = DirectionalWeight {
            constant: 1.0,
            cos: vec![0.5],
            sin: vec![],
        };
        let f = bump();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = [rng.gen::<f64>(), 0.0];
            let mut p: Point = [rng.gen_range(-3.0..3.0), 0.0];
            if p[0].abs() < 1e-3 {
                p[0] = 0.5;
            }
            let g = h.grad_p(&x, &p, 1e-5);
            let lhs = g[0] * p[0] - h.eval(&x, &p);
            let wv = w.at_angle(if p[0] > 0.0 { 0.0 } else { PI });
            let rhs = p[0] * p[0] * wv + f(&x);
            assert!((lhs - rhs).abs() < 1e-7);
            assert!(lhs >= 0.0);
        }
    }

    #[test]
    fn nonconvex_2d_speed_matches_fd() {
        let w = DirectionalWeight {
            constant: 1.0,
            cos: vec![0.2],
            sin: vec![0.1],
        };
        let q: VectorFn = Arc::new(|x: &Point| [(2.0 * PI * x[0]).sin(), 0.3 * (2.0 * PI * x[1]).sin()]);
        let h = make_nonconvex_example(2, w, bump(), q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let fd = norm(&h.grad_p(&x, &p, 1e-6), 2);
            assert!((fd - h.speed(&x, &p)).abs() < 1e-5 * (1.0 + fd));
        }
    }

    #[test]
    fn empty_k_is_tagged() {
        let f: PointFn = Arc::new(|x: &Point| 1.5 - (2.0 * PI * x[0]).cos());
        let h = make_nonconvex_example(1, DirectionalWeight::constant(1.0), f, Arc::new(|_| [0.0, 0.0]))
            .unwrap();
        assert!(h.has_tag(ClassTag::EmptyCompactSet));
        assert!(make_nonconvex_example(
            1,
            DirectionalWeight::constant(-1.0),
            bump(),
            Arc::new(|_| [0.0, 0.0])
        )
        .is_err());
    }

    #[test]
    fn flux_examples() {
        let h = make_quadratic_eikonal(1, Arc::new(|_| 0.0));
        let x = [0.37, 0.0];
        let v = lax_friedrichs_flux(&h, &x, &[0.0, 0.0], &[2.0, 0.0], 2.0).unwrap();
        assert_eq!(v, -1.0);
        let p = [0.7, 0.0];
        assert_eq!(lax_friedrichs_flux(&h, &x, &p, &p, 2.0).unwrap(), h.eval(&x, &p));
        assert!(lax_friedrichs_flux(&h, &x, &p, &p, 0.0).is_err());
    }

    #[test]
    fn flux_monotone_on_samples() {
        let hams = [
            make_quadratic_eikonal(1, bump()),
            make_linear_eikonal(1, bump()),
            nonconvex_1d(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for h in &hams {
            let a = h.lf_alpha();
            for _ in 0..10_000 {
                let x = [rng.gen::<f64>(), 0.0];
                let pm = [rng.gen_range(-3.0..3.0), 0.0];
                let pp = [rng.gen_range(-3.0..3.0), 0.0];
                let dh = rng.gen_range(1e-4..0.5);
                let base = lf_flux_unchecked(h, &x, &pm, &pp, a);
                let up = lf_flux_unchecked(h, &x, &[pm[0] + dh, 0.0], &pp, a);
                let down = lf_flux_unchecked(h, &x, &pm, &[pp[0] + dh, 0.0], a);
                let eps = 1e-12 * (1.0 + base.abs());
                assert!(up >= base - eps, "{}: not nondecreasing in p-", h.name());
                assert!(down <= base + eps, "{}: not nonincreasing in p+", h.name());
                assert_eq!(lf_flux_unchecked(h, &x, &pm, &pm, a), h.eval(&x, &pm));
            }
        }
    }

    #[test]
    fn eikonal_split_consistent() {
        for h in [make_quadratic_eikonal(2, bump()), make_linear_eikonal(2, bump())] {
            let parts = h.eikonal_parts().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            for _ in 0..1000 {
                let x = [rng.gen::<f64>(), rng.gen::<f64>()];
                let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
                let split = (parts.kinetic)(&x, &p) - (parts.potential)(&x);
                assert!((h.eval(&x, &p) - split).abs() <= 1e-14);
                assert!((parts.kinetic)(&x, &p) >= 0.0);
                assert_eq!((parts.kinetic)(&x, &[0.0, 0.0]), 0.0);
            }
        }
    }

    #[test]
    fn periodic_in_x() {
        let hams = [make_quadratic_eikonal(1, bump()), nonconvex_1d()];
        for h in &hams {
            for k in 0..50 {
                let x = k as f64 / 50.0;
                let p = [0.3 * k as f64 - 7.0, 0.0];
                assert!((h.eval(&[x, 0.0], &p) - h.eval(&[x + 1.0, 0.0], &p)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn fd_richardson_ratio() {
        let h = make_linear_eikonal(2, bump());
        let x = [0.2, 0.4];
        let p = [0.8, -0.6];
        let exact = [0.8, -0.6];
        let e = |s: f64| {
            let g = h.grad_p(&x, &p, s);
            ((g[0] - exact[0]).powi(2) + (g[1] - exact[1]).powi(2)).sqrt()
        };
        let (e1, e2, e3) = (e(0.04), e(0.02), e(0.01));
        // observed order log2(e(h)/e(h/2)) of the central difference
        for r in [e1 / e2, e2 / e3] {
            let order = r.log2();
            assert!((1.8..=2.2).contains(&order), "order {order}");
        }
    }

    #[test]
    fn assumption_h10_quadratic() {
        let h = make_quadratic_eikonal(1, bump());
        for samples in [4usize, 32] {
            let cfg = SamplerConfig {
                p_samples: samples,
                ..Default::default()
            };
            let r = check_assumption(&h, AssumptionId::H10, &cfg).unwrap();
            assert!(r.passed, "{:?}", r.violations.first());
            assert!(r.notes.iter().any(|n| n.contains("K = ∅")));
        }
    }

    #[test]
    fn assumption_strictconvex() {
        let abs = make_linear_eikonal(1, Arc::new(|_| 0.0));
        let r = check_assumption(&abs, AssumptionId::StrictConvex, &SamplerConfig::default()).unwrap();
        assert!(!r.passed);
        let quad = make_quadratic_eikonal(2, bump());
        let r = check_assumption(&quad, AssumptionId::StrictConvex, &SamplerConfig::default()).unwrap();
        assert!(r.passed);
    }

    #[test]
    fn assumption_h10_nonconvex_profile() {
        let h = nonconvex_1d();
        let cfg = SamplerConfig {
            x_nodes: 64,
            ..Default::default()
        };
        let r = check_assumption(&h, AssumptionId::H10, &cfg).unwrap();
        assert!(r.passed, "{:?}", r.violations.first());
        let prof = r.eta_psi_profile.unwrap();
        assert!(prof.iter().all(|(_, v)| v.map_or(true, |v| v > 0.0)));
        assert!(prof.iter().any(|(_, v)| v.is_some()));
        // nonconvex: the strict convexity check must fail
        let sc = check_assumption(&h, AssumptionId::StrictConvex, &cfg).unwrap();
        assert!(!sc.passed);
    }

    #[test]
    fn assumption_coercive_and_h5() {
        let h = make_quadratic_eikonal(1, bump());
        assert!(check_assumption(&h, AssumptionId::Coercive, &SamplerConfig::default())
            .unwrap()
            .passed);
        let flat = Hamiltonian::new("flat", 1, |_, _| 0.0);
        assert!(!check_assumption(&flat, AssumptionId::Coercive, &SamplerConfig::default())
            .unwrap()
            .passed);
        let r = check_assumption(&h, AssumptionId::H5, &SamplerConfig::default()).unwrap();
        assert!(r.passed);
    }

    #[test]
    fn builtin_catalog() {
        let params: HamiltonianParams = serde_json::from_str(
            r#"{"f": {"constant": 1.0, "terms": [{"k": [1], "cos": -1.0}]},
                "q": [{"terms": [{"k": [1], "sin": 0.5}]}],
                "F": {"constant": 1.0, "cos": [0.5]}}"#,
        )
        .unwrap();
        for id in BUILTIN_HAMILTONIANS {
            let h = builtin(id, 1, &params).unwrap();
            assert_eq!(h.name(), id);
        }
        assert!(builtin("nope", 1, &params).is_err());
        let shifted = builtin(
            "quadratic_eikonal",
            1,
            &HamiltonianParams {
                shift: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(shifted.eval(&[0.1, 0.0], &[1.0, 0.0]), 1.5);
    }
}
