//! Test problems with exact solutions, error norms and convergence sweeps.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DVector, Matrix2};
use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{
    assemble_global, condition_number, divergence_defect, solve_direct, GlobalSystem, Solution, SolveError,
    DIVERGENCE_TOLERANCE,
};
use crate::mesh::{
    build_agglomerated_concave, build_cartesian, build_sine_distorted, BoundaryLabel, PolygonalMesh, Rect,
};
use crate::quadrature::polygon_quadrature;
use crate::vem::{DofVariant, Stabilization, TensorField, VectorField};
use crate::{Point, Result};

pub type ScalarField = dyn Fn(Point) -> f64 + Send + Sync;
pub type BoundaryPredicate = dyn Fn(Point) -> BoundaryLabel + Send + Sync;

/// Sine-distortion amplitude used when none is configured.
pub const DEFAULT_DISTORTION: f64 = 0.3;

/// Denominators below this switch the relative errors to absolute ones.
pub const ERROR_DENOMINATOR_FLOOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid problem parameter: {0}")]
    InvalidParameter(String),
    #[error("magnetic field vanishes at ({}, {}): direction undefined", .point.x, .point.y)]
    SingularField { point: Point },
    #[error("problem has no exact solution")]
    MissingExactSolution,
}

/// Problem data for `div u = f`, `u = -D ∇p`, `p = g_D` on `Γ_D`, `u·n = g_N`
/// on `Γ_N`. The Neumann datum is given through a lifting field whose normal
/// component on `Γ_N` is `g_N`.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Rect,
    pub diffusion: Arc<TensorField>,
    pub diffusion_inv: Arc<TensorField>,
    pub forcing: Arc<ScalarField>,
    pub dirichlet: Arc<ScalarField>,
    pub neumann_flux: Arc<VectorField>,
    pub boundary: Arc<BoundaryPredicate>,
    pub exact_pressure: Option<Arc<ScalarField>>,
    pub exact_velocity: Option<Arc<VectorField>>,
    /// Raises element quadrature for non-constant coefficients.
    pub variable_coefficients: bool,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec").field("name", &self.name).field("domain", &self.domain).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcMode {
    Dirichlet,
    Mixed,
    /// Dirichlet only on the boundary edges touching the corner `(1, 1)`.
    NearlyNeumann,
}

impl BcMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BcMode::Dirichlet => "dirichlet",
            BcMode::Mixed => "mixed",
            BcMode::NearlyNeumann => "nearly-neumann",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "dirichlet" => Some(BcMode::Dirichlet),
            "mixed" => Some(BcMode::Mixed),
            "nearly-neumann" | "neumann" => Some(BcMode::NearlyNeumann),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemId {
    /// `p = sin πx sin πy` on `(0, 2)²`, `D = I`, homogeneous Dirichlet.
    Test1,
    /// `p = exp(-2π√ε x) sin 2πy` on `(0, 1)²`, `D = diag(1, ε)`.
    Test2 { epsilon: f64, bc: BcMode },
    /// Field-aligned anisotropy along two magnetic islands on `(-1, 1) × (-1/2, 1/2)`.
    Test3 { d_par: f64, bc: BcMode },
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemId::Test1 => write!(f, "test1"),
            ProblemId::Test2 { epsilon, bc } => write!(f, "test2(eps={epsilon:e};bc={})", bc.as_str()),
            ProblemId::Test3 { d_par, bc } => write!(f, "test3(dpar={d_par:e};bc={})", bc.as_str()),
        }
    }
}

impl ProblemId {
    pub fn domain(&self) -> Rect {
        match self {
            ProblemId::Test1 => Rect::new(0.0, 2.0, 0.0, 2.0),
            ProblemId::Test2 { .. } => Rect::unit_square(),
            ProblemId::Test3 { .. } => Rect::new(-1.0, 1.0, -0.5, 0.5),
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        match *self {
            ProblemId::Test1 => Ok(()),
            ProblemId::Test2 { epsilon, .. } => {
                if (1e-6..=1.0).contains(&epsilon) {
                    Ok(())
                } else {
                    Err(ProblemError::InvalidParameter(format!("epsilon = {epsilon} outside [1e-6, 1]")))
                }
            }
            ProblemId::Test3 { d_par, bc } => {
                if !(d_par.is_finite() && d_par > 0.0) {
                    return Err(ProblemError::InvalidParameter(format!("D_par = {d_par} must be positive")));
                }
                if bc == BcMode::NearlyNeumann {
                    return Err(ProblemError::InvalidParameter("test3 supports dirichlet or mixed BCs".into()));
                }
                Ok(())
            }
        }
    }
}

fn on(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + b.abs())
}

fn constant_tensor(m: Matrix2<f64>) -> Arc<TensorField> {
    Arc::new(move |_| m)
}

/// Unit direction `B / |B|` of the magnetic-island field.
pub fn magnetic_direction(p: Point) -> Result<Point, ProblemError> {
    let b = Point::new(-PI * (PI * p.y).sin(), 0.2 * PI * (2.0 * PI * (p.x - 1.5)).sin());
    let n = b.norm();
    if !(n >= 1e-12) {
        return Err(ProblemError::SingularField { point: p });
    }
    Ok(b / n)
}

/// `R diag(a, c) Rᵀ` with `R = [[b1, -b2], [b2, b1]]`, or NaN where the field
/// direction is undefined (rejected downstream as a non-SPD tensor).
fn aligned_tensor(p: Point, a: f64, c: f64) -> Matrix2<f64> {
    match magnetic_direction(p) {
        Ok(b) => {
            let r = Matrix2::new(b.x, -b.y, b.y, b.x);
            r * Matrix2::new(a, 0.0, 0.0, c) * r.transpose()
        }
        Err(_) => Matrix2::from_element(f64::NAN),
    }
}

/// Builds a test problem. `refinement` (1-based) only matters for the
/// nearly-Neumann boundary of Test 2, whose Dirichlet part shrinks with the
/// mesh as `δ = 1 / (5 · 2^(i-1))`.
pub fn builtin_problem(id: ProblemId, refinement: usize) -> Result<ProblemSpec, ProblemError> {
    id.validate()?;
    let domain = id.domain();
    let name = id.to_string();
    match id {
        ProblemId::Test1 => {
            let p = |q: Point| (PI * q.x).sin() * (PI * q.y).sin();
            let u = |q: Point| {
                -PI * Point::new((PI * q.x).cos() * (PI * q.y).sin(), (PI * q.x).sin() * (PI * q.y).cos())
            };
            Ok(ProblemSpec {
                name,
                domain,
                diffusion: constant_tensor(Matrix2::identity()),
                diffusion_inv: constant_tensor(Matrix2::identity()),
                forcing: Arc::new(move |q| 2.0 * PI * PI * p(q)),
                dirichlet: Arc::new(p),
                neumann_flux: Arc::new(u),
                boundary: Arc::new(|_| BoundaryLabel::Dirichlet),
                exact_pressure: Some(Arc::new(p)),
                exact_velocity: Some(Arc::new(u)),
                variable_coefficients: false,
            })
        }
        ProblemId::Test2 { epsilon, bc } => {
            let s = epsilon.sqrt();
            let p = move |q: Point| (-2.0 * PI * s * q.x).exp() * (2.0 * PI * q.y).sin();
            let u = move |q: Point| {
                let e = (-2.0 * PI * s * q.x).exp();
                Point::new(2.0 * PI * s * e * (2.0 * PI * q.y).sin(), -2.0 * PI * epsilon * e * (2.0 * PI * q.y).cos())
            };
            if bc == BcMode::NearlyNeumann && refinement == 0 {
                return Err(ProblemError::InvalidParameter("refinement index starts at 1".into()));
            }
            let delta = 1.0 / (5.0 * (1u64 << refinement.saturating_sub(1)) as f64);
            let boundary: Arc<BoundaryPredicate> = match bc {
                BcMode::Dirichlet => Arc::new(|_| BoundaryLabel::Dirichlet),
                BcMode::Mixed => Arc::new(|q: Point| {
                    if on(q.x, 0.0) || on(q.y, 0.0) {
                        BoundaryLabel::Dirichlet
                    } else {
                        BoundaryLabel::Neumann
                    }
                }),
                BcMode::NearlyNeumann => Arc::new(move |q: Point| {
                    let corner = (on(q.x, 1.0) && q.y >= 1.0 - delta) || (on(q.y, 1.0) && q.x >= 1.0 - delta);
                    if corner {
                        BoundaryLabel::Dirichlet
                    } else {
                        BoundaryLabel::Neumann
                    }
                }),
            };
            let d = Matrix2::new(1.0, 0.0, 0.0, epsilon);
            Ok(ProblemSpec {
                name,
                domain,
                diffusion: constant_tensor(d),
                diffusion_inv: constant_tensor(Matrix2::new(1.0, 0.0, 0.0, 1.0 / epsilon)),
                forcing: Arc::new(|_| 0.0),
                dirichlet: Arc::new(p),
                neumann_flux: Arc::new(u),
                boundary,
                exact_pressure: Some(Arc::new(p)),
                exact_velocity: Some(Arc::new(u)),
                variable_coefficients: false,
            })
        }
        ProblemId::Test3 { d_par, bc } => {
            // ψ is constant along field lines, so ∇p ⟂ b and u = -∇p for every D_par
            let psi = |q: Point| 0.1 * (2.0 * PI * (q.x - 1.5)).cos() + (PI * q.y).cos();
            let grad_psi = |q: Point| Point::new(-0.2 * PI * (2.0 * PI * (q.x - 1.5)).sin(), -PI * (PI * q.y).sin());
            let p = move |q: Point| psi(q).cos();
            let u = move |q: Point| psi(q).sin() * grad_psi(q);
            let f = move |q: Point| {
                let lap_psi = -0.4 * PI * PI * (2.0 * PI * (q.x - 1.5)).cos() - PI * PI * (PI * q.y).cos();
                psi(q).cos() * grad_psi(q).norm_squared() + psi(q).sin() * lap_psi
            };
            let boundary: Arc<BoundaryPredicate> = match bc {
                BcMode::Mixed => Arc::new(|q: Point| {
                    if on(q.x, -1.0) || on(q.x, 1.0) {
                        BoundaryLabel::Neumann
                    } else {
                        BoundaryLabel::Dirichlet
                    }
                }),
                _ => Arc::new(|_| BoundaryLabel::Dirichlet),
            };
            Ok(ProblemSpec {
                name,
                domain,
                diffusion: Arc::new(move |q| aligned_tensor(q, d_par, 1.0)),
                diffusion_inv: Arc::new(move |q| aligned_tensor(q, 1.0 / d_par, 1.0)),
                forcing: Arc::new(f),
                dirichlet: Arc::new(p),
                neumann_flux: Arc::new(u),
                boundary,
                exact_pressure: Some(Arc::new(p)),
                exact_velocity: Some(Arc::new(u)),
                variable_coefficients: true,
            })
        }
    }
}

/// Manufactured problem with a polynomial pressure of total degree `degree`
/// (every coefficient nonzero), constant tensor `d` and Dirichlet data on the
/// whole boundary. The discrete solution is exact for `k >= degree`.
pub fn polynomial_problem(degree: usize, d: Matrix2<f64>, domain: Rect) -> Result<ProblemSpec, ProblemError> {
    let sym = (d[(0, 1)] - d[(1, 0)]).abs() <= 1e-14 * d.norm();
    if !(sym && d[(0, 0)] > 0.0 && d.determinant() > 0.0) {
        return Err(ProblemError::InvalidParameter(format!("tensor {d:?} is not SPD")));
    }
    let terms: Vec<(i32, i32, f64)> = crate::basis::monomial_exponents(degree)
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| (a as i32, b as i32, 0.5 + 0.3 * (1.7 * i as f64 + 0.4).sin()))
        .collect();
    let terms = Arc::new(terms);
    // ∂^(dx, dy) of x^a y^b
    fn deriv(a: i32, b: i32, dx: i32, dy: i32, q: Point) -> f64 {
        let fall = |n: i32, m: i32| (0..m).map(|j| (n - j) as f64).product::<f64>();
        if a < dx || b < dy {
            return 0.0;
        }
        fall(a, dx) * fall(b, dy) * q.x.powi(a - dx) * q.y.powi(b - dy)
    }
    let eval = {
        let t = terms.clone();
        move |q: Point, dx: i32, dy: i32| t.iter().map(|&(a, b, c)| c * deriv(a, b, dx, dy, q)).sum::<f64>()
    };
    let (e1, e2, e3) = (eval.clone(), eval.clone(), eval.clone());
    let p: Arc<ScalarField> = Arc::new(move |q: Point| e1(q, 0, 0));
    let u: Arc<VectorField> = Arc::new(move |q: Point| -(d * Point::new(e2(q, 1, 0), e2(q, 0, 1))));
    let f = move |q: Point| {
        -(d[(0, 0)] * e3(q, 2, 0) + (d[(0, 1)] + d[(1, 0)]) * e3(q, 1, 1) + d[(1, 1)] * e3(q, 0, 2))
    };
    let dinv = d.try_inverse().ok_or_else(|| ProblemError::InvalidParameter("singular tensor".into()))?;
    Ok(ProblemSpec {
        name: format!("poly{degree}"),
        domain,
        diffusion: constant_tensor(d),
        diffusion_inv: constant_tensor(dinv),
        forcing: Arc::new(f),
        dirichlet: p.clone(),
        neumann_flux: u.clone(),
        boundary: Arc::new(|_| BoundaryLabel::Dirichlet),
        exact_pressure: Some(p),
        exact_velocity: Some(u),
        variable_coefficients: false,
    })
}

/// Stabilizations studied for each test problem.
pub fn stabilization_catalog(id: ProblemId) -> Vec<Stabilization> {
    match id {
        ProblemId::Test1 => vec![Stabilization::DofiDofi { c: 1.0 }],
        ProblemId::Test2 { epsilon, .. } => vec![
            Stabilization::DofiDofi { c: 1.0 / epsilon },
            Stabilization::DofiDofi { c: 1.0 },
            Stabilization::DRecipe { c: 1.0 },
        ],
        ProblemId::Test3 { d_par, .. } => vec![
            Stabilization::DofiDofi { c: 1.0 / d_par },
            Stabilization::DRecipe { c: 1.0 },
            Stabilization::EdgeNormalDRecipe,
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub err_p: f64,
    pub err_u: f64,
    /// The pressure error is absolute because `‖p‖` vanished.
    pub p_absolute: bool,
    pub u_absolute: bool,
}

/// Relative `L²` errors of the pressure and of the projected velocity, with
/// element rules of order `2k + 4`.
pub fn compute_errors(system: &GlobalSystem, solution: &Solution, problem: &ProblemSpec) -> Result<ErrorNorms> {
    let (Some(p), Some(u)) = (&problem.exact_pressure, &problem.exact_velocity) else {
        return Err(ProblemError::MissingExactSolution.into());
    };
    let k = system.dof_map.k;
    let parts: Vec<[f64; 4]> = system
        .elements
        .par_iter()
        .enumerate()
        .map(|(c, el)| -> Result<[f64; 4]> {
            let g = &el.space.geom;
            let rule = polygon_quadrature(&g.vertices, g.star_center, 2 * k + 4)?;
            let ph = el.space.pressure.eval(&rule.points) * &solution.pressure[c];
            let (vx, vy) = el.space.vector.eval(&rule.points);
            let coeffs = &solution.projected_velocity[c];
            let (ux, uy) = (vx * coeffs, vy * coeffs);
            let mut acc = [0.0; 4];
            for (q, (&x, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let (pe, ue) = (p(x), u(x));
                acc[0] += w * (pe - ph[q]).powi(2);
                acc[1] += w * pe * pe;
                acc[2] += w * ((ue.x - ux[q]).powi(2) + (ue.y - uy[q]).powi(2));
                acc[3] += w * ue.norm_squared();
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut sum = [0.0; 4];
    for a in parts {
        for i in 0..4 {
            sum[i] += a[i];
        }
    }
    let rel = |num: f64, den: f64| {
        let den = den.sqrt();
        if den < ERROR_DENOMINATOR_FLOOR {
            (num.sqrt(), true)
        } else {
            (num.sqrt() / den, false)
        }
    };
    let (err_p, p_absolute) = rel(sum[0], sum[1]);
    let (err_u, u_absolute) = rel(sum[2], sum[3]);
    Ok(ErrorNorms { err_p, err_u, p_absolute, u_absolute })
}

/// Mesh families indexed by a refinement level `i ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshFamily {
    /// `nx · 2^(i-1) × ny · 2^(i-1)` rectangles.
    Cartesian { nx: usize, ny: usize },
    /// Cartesian grid with interior vertices moved by a sine perturbation.
    Distorted { nx: usize, ny: usize, amplitude: f64 },
    /// L-shaped octagons and squares from 2×2 agglomeration of
    /// `2^(i+2)` sub-squares per side.
    Concave,
}

impl MeshFamily {
    /// The family used for each test problem when none is configured.
    pub fn default_for(id: ProblemId) -> Self {
        match id {
            ProblemId::Test1 => MeshFamily::Concave,
            ProblemId::Test2 { .. } => MeshFamily::Cartesian { nx: 5, ny: 5 },
            ProblemId::Test3 { .. } => MeshFamily::Cartesian { nx: 8, ny: 4 },
        }
    }

    pub fn label(&self, level: usize) -> String {
        let scale = 1usize << level.saturating_sub(1);
        match *self {
            MeshFamily::Cartesian { nx, ny } => format!("cartesian-{}x{}", nx * scale, ny * scale),
            MeshFamily::Distorted { nx, ny, amplitude } => {
                format!("distorted{amplitude}-{}x{}", nx * scale, ny * scale)
            }
            MeshFamily::Concave => format!("concave-L{level}"),
        }
    }

    /// Mesh of refinement `level` on `domain`, boundary not yet labeled.
    pub fn build(&self, domain: Rect, level: usize) -> Result<PolygonalMesh> {
        if level == 0 {
            return Err(ProblemError::InvalidParameter("refinement levels start at 1".into()).into());
        }
        let scale = 1usize << (level - 1);
        let mesh = match *self {
            MeshFamily::Cartesian { nx, ny } => build_cartesian(nx * scale, ny * scale, domain)?,
            MeshFamily::Distorted { nx, ny, amplitude } => build_sine_distorted(nx * scale, ny * scale, domain, amplitude)?,
            MeshFamily::Concave => {
                let mut m = build_agglomerated_concave(level)?;
                m.map_rect(Rect::new(0.0, 2.0, 0.0, 2.0), domain);
                m
            }
        };
        Ok(mesh)
    }
}

/// Mesh of a family at `level` with the problem's boundary labels applied.
pub fn labeled_mesh(family: MeshFamily, problem: &ProblemSpec, level: usize) -> Result<PolygonalMesh> {
    let mut mesh = family.build(problem.domain, level)?;
    mesh.label_boundary(|p| (problem.boundary)(p))?;
    Ok(mesh)
}

/// Outcome of one solve.
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub h: f64,
    pub errors: ErrorNorms,
    pub cond: Option<f64>,
    pub residual: f64,
    pub divergence_defect: f64,
    pub warning: Option<String>,
}

/// Assembles, solves, checks the divergence identity and measures errors.
pub fn run_single(
    problem: &ProblemSpec,
    mesh: &PolygonalMesh,
    k: usize,
    variant: DofVariant,
    stab: Stabilization,
    with_condition: bool,
) -> Result<SingleRun> {
    let system = assemble_global(mesh, problem, k, variant, stab)?;
    let solution = solve_direct(&system)?;
    let (element, defect) = divergence_defect(&system, &solution);
    if defect > DIVERGENCE_TOLERANCE {
        return Err(SolveError::DivergenceIdentity { element, defect }.into());
    }
    let errors = compute_errors(&system, &solution, problem)?;
    let cond = if with_condition { Some(condition_number(&system)?) } else { None };
    Ok(SingleRun {
        h: mesh.mesh_size(),
        errors,
        cond,
        residual: solution.residual,
        divergence_defect: defect,
        warning: solution.warning,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum StabilizationChoice {
    Catalog,
    Explicit(Vec<Stabilization>),
}

/// A full sweep over refinements × degrees × variants × stabilizations.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub problem: ProblemId,
    pub family: MeshFamily,
    pub refinements: Vec<usize>,
    pub degrees: Vec<usize>,
    pub variants: Vec<DofVariant>,
    pub stabilizations: StabilizationChoice,
    pub condition_number: bool,
    pub wall_time: bool,
}

impl StudyConfig {
    pub fn stabilization_list(&self) -> Vec<Stabilization> {
        match &self.stabilizations {
            StabilizationChoice::Catalog => stabilization_catalog(self.problem),
            StabilizationChoice::Explicit(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub problem: String,
    pub mesh: String,
    pub level: usize,
    pub h: Option<f64>,
    pub k: usize,
    pub variant: DofVariant,
    pub stabilization: Stabilization,
    pub err_p: Option<f64>,
    pub err_u: Option<f64>,
    pub absolute_errors: bool,
    pub cond_k: Option<f64>,
    pub rate_p: Option<f64>,
    pub rate_u: Option<f64>,
    pub wall_ms: Option<f64>,
    pub divergence_defect: Option<f64>,
    pub warning: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub records: Vec<RunRecord>,
}

impl RunReport {
    pub fn all_succeeded(&self) -> bool {
        self.records.iter().all(|r| r.error.is_none())
    }
}

/// Least-squares slope of `log e` against `log h`; `None` for fewer than two points.
pub fn convergence_rate(h: &[f64], err: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(err)
        .filter(|(h, e)| **h > 0.0 && **e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs every combination of the study. Entries are computed in parallel;
/// records are ordered by degree, variant, stabilization and refinement.
/// Failures are recorded per entry and do not stop the sweep.
pub fn run_convergence_study(config: &StudyConfig) -> Result<RunReport> {
    config.problem.validate()?;
    if config.refinements.is_empty() || config.degrees.is_empty() || config.variants.is_empty() {
        return Err(ProblemError::InvalidParameter("empty refinement, degree or variant list".into()).into());
    }
    let stabs = config.stabilization_list();
    let problem_name = config.problem.to_string();

    // meshes and problems per refinement level
    let levels: Vec<(usize, std::result::Result<(ProblemSpec, PolygonalMesh), String>)> = config
        .refinements
        .iter()
        .map(|&level| {
            let built = builtin_problem(config.problem, level)
                .map_err(crate::Error::from)
                .and_then(|p| labeled_mesh(config.family, &p, level).map(|m| (p, m)))
                .map_err(|e| e.to_string());
            (level, built)
        })
        .collect();

    let mut jobs = Vec::new();
    for &k in &config.degrees {
        for &variant in &config.variants {
            for &stab in &stabs {
                for li in 0..levels.len() {
                    jobs.push((k, variant, stab, li));
                }
            }
        }
    }
    let mut records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(k, variant, stab, li)| {
            let (level, built) = &levels[li];
            let mut rec = RunRecord {
                problem: problem_name.clone(),
                mesh: config.family.label(*level),
                level: *level,
                h: None,
                k,
                variant,
                stabilization: stab,
                err_p: None,
                err_u: None,
                absolute_errors: false,
                cond_k: None,
                rate_p: None,
                rate_u: None,
                wall_ms: None,
                divergence_defect: None,
                warning: None,
                error: None,
            };
            let (problem, mesh) = match built {
                Ok(pm) => pm,
                Err(e) => {
                    rec.error = Some(e.clone());
                    return rec;
                }
            };
            rec.h = Some(mesh.mesh_size());
            let start = Instant::now();
            match run_single(problem, mesh, k, variant, stab, config.condition_number) {
                Ok(run) => {
                    rec.err_p = Some(run.errors.err_p);
                    rec.err_u = Some(run.errors.err_u);
                    rec.absolute_errors = run.errors.p_absolute || run.errors.u_absolute;
                    rec.cond_k = run.cond;
                    rec.divergence_defect = Some(run.divergence_defect);
                    rec.warning = run.warning;
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            if config.wall_time {
                rec.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            rec
        })
        .collect();

    // rates per (k, variant, stabilization) series
    let per_series = levels.len();
    for series in records.chunks_mut(per_series) {
        let ok: Vec<&RunRecord> = series.iter().filter(|r| r.error.is_none()).collect();
        let h: Vec<f64> = ok.iter().filter_map(|r| r.h).collect();
        let ep: Vec<f64> = ok.iter().filter_map(|r| r.err_p).collect();
        let eu: Vec<f64> = ok.iter().filter_map(|r| r.err_u).collect();
        let (rp, ru) = (convergence_rate(&h, &ep), convergence_rate(&h, &eu));
        for r in series.iter_mut() {
            r.rate_p = rp;
            r.rate_u = ru;
        }
    }
    Ok(RunReport { records })
}

/// Pressure of the discrete solution at `p` in element `element`.
pub fn discrete_pressure(system: &GlobalSystem, solution: &Solution, element: usize, p: Point) -> f64 {
    let coeffs: &DVector<f64> = &solution.pressure[element];
    system.elements[element].space.pressure.eval_combination(coeffs, p)
}
