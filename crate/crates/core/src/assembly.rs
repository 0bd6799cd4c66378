//! Global numbering, boundary conditions, assembly of the saddle-point system,
//! the sparse direct solve and condition numbers.
//!
//! Velocity DOFs are numbered edge by edge (`e (k+1) + j`) followed by the
//! internal DOFs of each element. DOFs on Neumann edges are prescribed and
//! eliminated; the reduced system orders the free velocity DOFs first and the
//! pressure coefficients (`n_k` per element) after them.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::benchmarks::ProblemSpec;
use crate::mesh::{compute_geometry, BoundaryLabel, PolygonalMesh};
use crate::vem::{edge_interpolate, DofVariant, EdgeReference, ElementSpace, LocalOperators, Stabilization};
use crate::{perp_dim, poly_dim, Error, Result};

/// Largest system densified for a condition number.
pub const MAX_DENSE_SIZE: usize = 20_000;
/// Relative residual accepted without a warning.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Relative tolerance of the elementwise divergence identity.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("singular system: {0}")]
    Singular(String),
    #[error("system of size {size} exceeds the dense limit {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("singular value decomposition failed: {0}")]
    Svd(String),
    #[error("divergence identity violated on element {element}: relative defect {defect:e}")]
    DivergenceIdentity { element: usize, defect: f64 },
    #[error("inconsistent boundary labels: {0}")]
    BoundaryLabels(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDofMap {
    pub k: usize,
    pub variant: DofVariant,
    /// Per element and local DOF: global velocity index and sign.
    pub element_dofs: Vec<Vec<(usize, f64)>>,
    pub n_velocity: usize,
    /// Per velocity DOF: position among the free unknowns, `None` if prescribed.
    pub free_index: Vec<Option<usize>>,
    pub n_free: usize,
    pub n_pressure: usize,
}

impl GlobalDofMap {
    pub fn n_constrained(&self) -> usize {
        self.n_velocity - self.n_free
    }

    /// Size of the reduced system.
    pub fn system_size(&self) -> usize {
        self.n_free + self.n_pressure
    }

    /// Row of pressure coefficient `alpha` of `element` in the reduced system.
    pub fn pressure_row(&self, element: usize, alpha: usize) -> usize {
        self.n_free + element * poly_dim(self.k) + alpha
    }
}

pub fn build_global_dof_map(mesh: &PolygonalMesh, k: usize, variant: DofVariant) -> GlobalDofMap {
    let per_edge = k + 1;
    let n_internal = poly_dim(k) - 1 + perp_dim(k);
    let n_edge_dofs = mesh.num_edges() * per_edge;
    let mut element_dofs = Vec::with_capacity(mesh.num_cells());
    for c in 0..mesh.num_cells() {
        let mut dofs = Vec::new();
        for side in mesh.cell_sides(c) {
            dofs.extend((0..per_edge).map(|j| (side.edge * per_edge + j, side.sign)));
        }
        let off = n_edge_dofs + c * n_internal;
        dofs.extend((0..n_internal).map(|i| (off + i, 1.0)));
        element_dofs.push(dofs);
    }
    let n_velocity = n_edge_dofs + mesh.num_cells() * n_internal;
    let mut free_index = vec![None; n_velocity];
    let mut n_free = 0;
    for (d, slot) in free_index.iter_mut().enumerate() {
        let neumann = d < n_edge_dofs && mesh.edges()[d / per_edge].label == BoundaryLabel::Neumann;
        if !neumann {
            *slot = Some(n_free);
            n_free += 1;
        }
    }
    GlobalDofMap {
        k,
        variant,
        element_dofs,
        n_velocity,
        free_index,
        n_free,
        n_pressure: mesh.num_cells() * poly_dim(k),
    }
}

/// Element data kept after assembly.
#[derive(Debug, Clone)]
pub struct ElementData {
    pub space: ElementSpace,
    pub ops: LocalOperators,
    /// `∫_E f p_α`.
    pub load: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub dof_map: GlobalDofMap,
    pub edge_ref: EdgeReference,
    pub elements: Vec<ElementData>,
    /// Entries of the reduced matrix, sorted by (column, row), duplicates summed.
    pub entries: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    /// Values of all velocity DOFs that are prescribed (zero elsewhere).
    pub constrained_values: Vec<f64>,
}

impl GlobalSystem {
    pub fn size(&self) -> usize {
        self.dof_map.system_size()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.size()];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// Local velocity DOFs of `element` (element-outward orientation) from a
    /// full global velocity vector.
    pub fn local_velocity(&self, element: usize, velocity: &[f64]) -> DVector<f64> {
        let dofs = &self.dof_map.element_dofs[element];
        DVector::from_iterator(dofs.len(), dofs.iter().map(|&(g, s)| s * velocity[g]))
    }
}

/// Assembles the reduced saddle-point system. Element matrices are computed
/// in parallel; the scatter is sequential and deterministic.
pub fn assemble_global(
    mesh: &PolygonalMesh,
    problem: &ProblemSpec,
    k: usize,
    variant: DofVariant,
    stab: Stabilization,
) -> Result<GlobalSystem> {
    let counts = mesh.edge_cell_counts();
    for (e, edge) in mesh.edges().iter().enumerate() {
        let boundary = counts[e] == 1;
        if boundary == (edge.label == BoundaryLabel::Interior) {
            return Err(SolveError::BoundaryLabels(format!(
                "edge {e} borders {} cell(s) but is labeled {}",
                counts[e],
                edge.label.as_str()
            ))
            .into());
        }
    }
    let dof_map = build_global_dof_map(mesh, k, variant);
    let edge_ref = EdgeReference::new(k).map_err(Error::from)?;
    let extra = if problem.variable_coefficients { 2 } else { 0 };

    let elements: Vec<ElementData> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| -> Result<ElementData> {
            let geom = compute_geometry(mesh, c)?;
            let space = ElementSpace::new(geom, k, variant, &edge_ref, extra)?;
            let ops = LocalOperators::compute(&space, &edge_ref, &*problem.diffusion_inv, stab)?;
            let pv = space.pressure.eval(&space.rule.points);
            let mut load = DVector::zeros(pv.ncols());
            for (q, (&p, &w)) in space.rule.points.iter().zip(&space.rule.weights).enumerate() {
                let f = (problem.forcing)(p);
                for a in 0..pv.ncols() {
                    load[a] += w * f * pv[(q, a)];
                }
            }
            Ok(ElementData { space, ops, load })
        })
        .collect::<Result<_>>()?;

    // prescribed normal components on Neumann edges, w.r.t. the global normal
    let per_edge = k + 1;
    let mut constrained_values = vec![0.0; dof_map.n_velocity];
    for c in 0..mesh.num_cells() {
        let geom = &elements[c].space.geom;
        for e in &geom.edges {
            if e.label == BoundaryLabel::Neumann {
                let normal = mesh.edge_normal(e.global);
                let vals = edge_interpolate(&*problem.neumann_flux, e, normal, variant, &edge_ref);
                for j in 0..per_edge {
                    constrained_values[e.global * per_edge + j] = vals[j];
                }
            }
        }
    }

    let n_free = dof_map.n_free;
    let mut rhs = vec![0.0; dof_map.system_size()];
    let mut triplets = Vec::new();
    for (c, el) in elements.iter().enumerate() {
        let dofs = &dof_map.element_dofs[c];
        let nv = dofs.len();
        let np = el.load.len();
        let p_row = |a: usize| n_free + c * np + a;
        // local row index -> (reduced index or None, global velocity index, sign)
        let rows: Vec<(Option<usize>, usize, f64)> =
            dofs.iter().map(|&(g, s)| (dof_map.free_index[g], g, s)).collect();

        // Dirichlet loads −∫_e g_D φ_i·n
        for (ie, e) in el.space.geom.edges.iter().enumerate() {
            if e.label != BoundaryLabel::Dirichlet {
                continue;
            }
            let load = edge_ref.edge_load(variant, e.length, |s| (problem.dirichlet)(e.point_at(s)));
            for (j, i) in el.space.layout.edge_range(ie).enumerate() {
                if let (Some(r), _, s) = rows[i] {
                    rhs[r] -= s * load[j];
                }
            }
        }
        for a in 0..np {
            rhs[p_row(a)] += el.load[a];
        }

        let ke = &el.ops.k_e;
        for i in 0..nv + np {
            let (ri, si) = if i < nv { (rows[i].0, rows[i].2) } else { (Some(p_row(i - nv)), 1.0) };
            let Some(ri) = ri else { continue };
            for j in 0..nv + np {
                let v = ke[(i, j)];
                if v == 0.0 {
                    continue;
                }
                if j < nv {
                    let (rj, gj, sj) = rows[j];
                    match rj {
                        Some(rj) => triplets.push((ri, rj, si * sj * v)),
                        None => rhs[ri] -= si * sj * v * constrained_values[gj],
                    }
                } else {
                    triplets.push((ri, p_row(j - nv), si * v));
                }
            }
        }
    }
    triplets.sort_unstable_by_key(|&(r, c, _)| (c, r));
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
    for (r, c, v) in triplets {
        match entries.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += v,
            _ => entries.push((r, c, v)),
        }
    }
    Ok(GlobalSystem { dof_map, edge_ref, elements, entries, rhs, constrained_values })
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// All velocity DOFs (global normal orientation), prescribed ones included.
    pub velocity: Vec<f64>,
    /// Pressure coefficients per element in the element's pressure basis.
    pub pressure: Vec<DVector<f64>>,
    /// Vector-basis coefficients of `Π⁰_k u_h` per element.
    pub projected_velocity: Vec<DVector<f64>>,
    /// `‖Kx − b‖ / ‖b‖` (absolute when `b = 0`).
    pub residual: f64,
    pub warning: Option<String>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual_vector(system: &GlobalSystem, x: &[f64]) -> Vec<f64> {
    system.rhs.iter().zip(system.apply(x)).map(|(b, kx)| b - kx).collect()
}

/// Sparse LU solve of the reduced system followed by a few steps of
/// iterative refinement.
pub fn solve_direct(system: &GlobalSystem) -> Result<Solution, SolveError> {
    let n = system.size();
    let map = &system.dof_map;
    let x: Vec<f64> = if system.rhs.iter().all(|&b| b == 0.0) {
        vec![0.0; n]
    } else {
        let trip: Vec<Triplet<usize, usize, f64>> =
            system.entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| SolveError::Singular(format!("{e:?}")))?;
        let lu = a.sp_lu().map_err(|e| SolveError::Singular(format!("{e:?}")))?;
        let b = Col::<f64>::from_fn(n, |i| system.rhs[i]);
        let sol = lu.solve(&b);
        let mut x: Vec<f64> = (0..n).map(|i| sol[i]).collect();
        // iterative refinement with the same factors
        let mut res = residual_vector(system, &x);
        for _ in 0..REFINEMENT_STEPS {
            let r = Col::<f64>::from_fn(n, |i| res[i]);
            let dx = lu.solve(&r);
            let cand: Vec<f64> = (0..n).map(|i| x[i] + dx[i]).collect();
            let cand_res = residual_vector(system, &cand);
            if !(norm(&cand_res) < norm(&res)) {
                break;
            }
            x = cand;
            res = cand_res;
        }
        x
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::Singular("non-finite solution".into()));
    }
    let res = residual_vector(system, &x);
    let bnorm = norm(&system.rhs);
    let residual = if bnorm > 0.0 { norm(&res) / bnorm } else { norm(&res) };
    if residual > 1e-6 {
        return Err(SolveError::Singular(format!("relative residual {residual:e} after factorization")));
    }
    let warning = (residual > RESIDUAL_TOLERANCE).then(|| format!("relative residual {residual:e} exceeds {RESIDUAL_TOLERANCE:e}"));

    let mut velocity = system.constrained_values.clone();
    for (g, slot) in map.free_index.iter().enumerate() {
        if let Some(r) = slot {
            velocity[g] = x[*r];
        }
    }
    let np = poly_dim(map.k);
    let pressure = (0..system.elements.len())
        .map(|c| DVector::from_iterator(np, (0..np).map(|a| x[map.pressure_row(c, a)])))
        .collect();
    let projected_velocity = project_solution(system, &velocity);
    Ok(Solution { velocity, pressure, projected_velocity, residual, warning })
}

/// `Π⁰_k u_h` on every element as vector-basis coefficients.
pub fn project_solution(system: &GlobalSystem, velocity: &[f64]) -> Vec<DVector<f64>> {
    (0..system.elements.len())
        .map(|c| &system.elements[c].ops.projector * system.local_velocity(c, velocity))
        .collect()
}

/// Largest relative defect of `W_E u_E = ∫_E f p_α` over the elements, with
/// the defect measured against `|W_E| |u_E| + |F_E|`.
pub fn divergence_defect(system: &GlobalSystem, solution: &Solution) -> (usize, f64) {
    let mut worst = (0, 0.0);
    for (c, el) in system.elements.iter().enumerate() {
        let u = system.local_velocity(c, &solution.velocity);
        let wu = &el.ops.w * &u;
        let scale = el.ops.w.abs() * u.abs();
        let denom = scale.norm() + el.load.norm();
        let defect = (wu - &el.load).norm();
        let rel = if denom > 0.0 { defect / denom } else { defect };
        if rel > worst.1 {
            worst = (c, rel);
        }
    }
    worst
}

pub fn check_divergence_identity(system: &GlobalSystem, solution: &Solution) -> Result<(), SolveError> {
    let (element, defect) = divergence_defect(system, solution);
    if defect > DIVERGENCE_TOLERANCE {
        return Err(SolveError::DivergenceIdentity { element, defect });
    }
    Ok(())
}

/// 2-norm condition number `σ_max / σ_min` of a dense matrix.
pub fn dense_condition_number(a: &DMatrix<f64>) -> Result<f64, SolveError> {
    let (n, m) = a.shape();
    if n.max(m) > MAX_DENSE_SIZE {
        return Err(SolveError::TooLarge { size: n.max(m), limit: MAX_DENSE_SIZE });
    }
    let mat = Mat::<f64>::from_fn(n, m, |i, j| a[(i, j)]);
    let s = mat.singular_values().map_err(|e| SolveError::Svd(format!("{e:?}")))?;
    let (max, min) = (s[0], s[s.len() - 1]);
    if !(min > 0.0) {
        return Err(SolveError::Singular("zero singular value".into()));
    }
    Ok(max / min)
}

/// Condition number of the reduced (solved) matrix.
pub fn condition_number(system: &GlobalSystem) -> Result<f64, SolveError> {
    let n = system.size();
    if n > MAX_DENSE_SIZE {
        return Err(SolveError::TooLarge { size: n, limit: MAX_DENSE_SIZE });
    }
    dense_condition_number(&system.to_dense())
}
