//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs sequentially so the runtime bounds are meaningful.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Matrix2};

use mvem::assembly::{assemble_global, solve_direct, DIVERGENCE_TOLERANCE};
use mvem::basis::{build_vector_basis, orthonormalize_element_basis, orthonormalize_unit_interval_basis, BasisKind};
use mvem::benchmarks::{
    builtin_problem, discrete_pressure, labeled_mesh, polynomial_problem, run_convergence_study, run_single,
    BcMode, MeshFamily, ProblemId, RunReport, StabilizationChoice, StudyConfig, DEFAULT_DISTORTION,
};
use mvem::mesh::{ElementGeometry, Rect};
use mvem::quadrature::polygon_quadrature;
use mvem::vem::{divergence_matrix, l2_projector, DofVariant, EdgeReference, ElementSpace, Stabilization};
use mvem::Point;

const ORTHONORMALITY_TOL: f64 = 1e-12;
const REPRODUCTION_TOL: f64 = 1e-12;
const PATCH_TOL: f64 = 1e-9;
const EQUIVALENCE_TOL: f64 = 1e-8;
const TEST1_RATE_MARGIN: f64 = 0.8;
const TEST3_RATE_MARGIN: f64 = 0.7;
const COND_RATIO_MIN: f64 = 1e2;
const ORTHO_LOG_SLOPE_MAX: f64 = 1.5;
const MON_LOG_SLOPE_MIN: f64 = 2.0;
const TEST2_RATE_MIN: f64 = 1.7;
const LOCKING_FACTOR_MIN: f64 = 5.0;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Divergence-identity defects of every solve in the suite.
#[derive(Default)]
struct DefectLog {
    worst: f64,
    solves: usize,
    violations: Vec<String>,
}

impl DefectLog {
    fn record(&mut self, defect: f64, what: &str) {
        self.solves += 1;
        self.worst = self.worst.max(defect);
        if defect > DIVERGENCE_TOLERANCE {
            self.violations.push(format!("{what}: {defect:e}"));
        }
    }

    fn record_report(&mut self, report: &RunReport) {
        for r in &report.records {
            let what = format!("{} {} k={} {} {}", r.problem, r.mesh, r.k, r.variant, r.stabilization);
            match (&r.error, r.divergence_defect) {
                (None, Some(d)) => self.record(d, &what),
                (Some(e), _) => {
                    self.solves += 1;
                    self.violations.push(format!("{what}: {e}"));
                }
                (None, None) => {}
            }
        }
    }
}

fn poly(v: &[(f64, f64)]) -> ElementGeometry {
    let pts: Vec<Point> = v.iter().map(|&(x, y)| Point::new(x, y)).collect();
    ElementGeometry::from_polygon(&pts).unwrap()
}

fn reference_elements() -> Vec<(&'static str, ElementGeometry)> {
    vec![
        ("square", poly(&[(0., 0.), (1., 0.), (1., 1.), (0., 1.)])),
        ("pentagon", poly(&[(0., 0.), (1.2, 0.1), (1.5, 0.9), (0.7, 1.4), (-0.2, 0.8)])),
        ("L", poly(&[(0., 0.), (2., 0.), (2., 1.), (1., 1.), (1., 2.), (0., 2.)])),
    ]
}

/// `max |Vᵀ W V − I|` with the Gram matrix summed by hand.
fn gram_identity_error(columns: &[DMatrix<f64>], weights: &[f64]) -> f64 {
    let n = columns[0].ncols();
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let mut s = 0.0;
            for comp in columns {
                for (q, w) in weights.iter().enumerate() {
                    s += w * comp[(q, a)] * comp[(q, b)];
                }
            }
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((s - target).abs());
        }
    }
    worst
}

fn criterion_orthonormality() -> Outcome {
    // Gram matrices under the rules the bases were built with; finer
    // independent rules are reported for information only
    let mut plane = (0.0f64, String::new());
    let mut edge = (0.0f64, String::new());
    let mut finer = 0.0f64;
    for (name, g) in reference_elements() {
        for k in 0..=8 {
            let rule = polygon_quadrature(&g.vertices, g.star_center, 2 * k + 2).unwrap();
            let q = orthonormalize_element_basis(&g, &rule, k + 1).unwrap();
            let vb = build_vector_basis(&g, &rule, k, BasisKind::Orthonormal, Some(&q)).unwrap();
            let check = polygon_quadrature(&g.vertices, g.centroid, 2 * k + 5).unwrap();
            for (r, measured) in [(&rule, true), (&check, false)] {
                let scalar = gram_identity_error(&[q.truncate(k).eval(&r.points)], &r.weights);
                let (vx, vy) = vb.eval(&r.points);
                let vector = gram_identity_error(&[vx, vy], &r.weights);
                if !measured {
                    finer = finer.max(scalar).max(vector);
                    continue;
                }
                for (e, what) in [(scalar, format!("Q_{k} on {name}")), (vector, format!("vector k={k} on {name}"))] {
                    if e > plane.0 {
                        plane = (e, what);
                    }
                }
            }
        }
    }
    let mut edge_by_k = Vec::new();
    for k in 0..=8 {
        let b = orthonormalize_unit_interval_basis(k).unwrap();
        let vals = DMatrix::from_fn(b.rule.nodes.len(), b.dim(), |q, j| b.eval(b.rule.nodes[q])[j]);
        let e = gram_identity_error(&[vals], &b.rule.weights);
        edge_by_k.push(format!("{e:.0e}"));
        if e > edge.0 {
            edge = (e, format!("k={k}"));
        }
    }
    Outcome {
        pass: plane.0 <= ORTHONORMALITY_TOL && edge.0 <= ORTHONORMALITY_TOL,
        detail: format!(
            "tol {ORTHONORMALITY_TOL:e}; 2D max |G - I| {:.2e} ({}), {finer:.2e} under finer rules; \
             edge basis max {:.2e} ({}), by k [{}]",
            plane.0,
            plane.1,
            edge.0,
            edge.1,
            edge_by_k.join(", ")
        ),
    }
}

/// Largest relative `L²(E)` error of interpolate-then-project over all of
/// `[P_k]²`: the operator norm of `Lᵀ (ΠI - Id) L⁻ᵀ` with `G = L Lᵀ`.
fn reproduction_error(space: &ElementSpace, edge_ref: &EdgeReference) -> f64 {
    let w = divergence_matrix(space, edge_ref);
    let pi = l2_projector(space, &w, edge_ref).unwrap();
    let n = space.vector.dim();
    let mut interp = DMatrix::zeros(space.layout.num_dofs(), n);
    for a in 0..n {
        let basis_fn = |p: Point| {
            let (vx, vy) = space.vector.eval(&[p]);
            Point::new(vx[(0, a)], vy[(0, a)])
        };
        interp.set_column(a, &space.interpolate(&basis_fn, edge_ref));
    }
    let defect = pi * interp - DMatrix::identity(n, n);
    let l = space.vector.gram(&space.rule).cholesky().unwrap().l();
    let l_inv_t = l.clone().try_inverse().unwrap().transpose();
    (l.transpose() * defect * l_inv_t).singular_values().max()
}

fn criterion_reproduction() -> Outcome {
    let mut worst = (0.0f64, String::new());
    for variant in DofVariant::ALL {
        for k in 0..=5 {
            let edge_ref = EdgeReference::new(k).unwrap();
            for (name, g) in reference_elements() {
                let space = ElementSpace::new(g, k, variant, &edge_ref, 0).unwrap();
                let e = reproduction_error(&space, &edge_ref);
                if e > worst.0 {
                    worst = (e, format!("{variant} k={k} {name}"));
                }
            }
        }
    }
    Outcome {
        pass: worst.0 <= REPRODUCTION_TOL,
        detail: format!("max relative L2 error {:.2e} ({}) tol {REPRODUCTION_TOL:e}", worst.0, worst.1),
    }
}

fn criterion_patch(log: &mut DefectLog) -> Outcome {
    let d = Matrix2::new(2.0, 0.3, 0.3, 0.5);
    let stabs = [Stabilization::DofiDofi { c: 1.0 }, Stabilization::DRecipe { c: 1.0 }, Stabilization::EdgeNormalDRecipe];
    let families = [MeshFamily::Cartesian { nx: 4, ny: 4 }, MeshFamily::Distorted { nx: 4, ny: 4, amplitude: DEFAULT_DISTORTION }];
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    for k in 0..=3 {
        let problem = polynomial_problem(k, d, Rect::unit_square()).unwrap();
        for family in families {
            let mesh = labeled_mesh(family, &problem, 1).unwrap();
            for variant in DofVariant::ALL {
                for stab in stabs {
                    let what = format!("{} k={k} {variant} {stab}", family.label(1));
                    match run_single(&problem, &mesh, k, variant, stab, false) {
                        Ok(run) => {
                            log.record(run.divergence_defect, &what);
                            let e = run.errors.err_p.max(run.errors.err_u);
                            if e > worst.0 {
                                worst = (e, what);
                            }
                        }
                        Err(e) => failures.push(format!("{what}: {e}")),
                    }
                }
            }
        }
    }
    Outcome {
        pass: failures.is_empty() && worst.0 <= PATCH_TOL,
        detail: if failures.is_empty() {
            format!("max(err_p, err_u) {:.2e} ({}) tol {PATCH_TOL:e}", worst.0, worst.1)
        } else {
            format!("solver failures: {}", failures.join("; "))
        },
    }
}

/// Pressures and projected velocities at the quadrature nodes of every element.
fn nodal_values(
    problem: &mvem::benchmarks::ProblemSpec,
    mesh: &mvem::mesh::PolygonalMesh,
    k: usize,
    variant: DofVariant,
    log: &mut DefectLog,
) -> (Vec<f64>, Vec<f64>) {
    let system = assemble_global(mesh, problem, k, variant, Stabilization::DofiDofi { c: 1.0 }).unwrap();
    let sol = solve_direct(&system).unwrap();
    log.record(mvem::assembly::divergence_defect(&system, &sol).1, &format!("equivalence k={k} {variant}"));
    let (mut p, mut u) = (Vec::new(), Vec::new());
    for (c, el) in system.elements.iter().enumerate() {
        let pts = &el.space.rule.points;
        let (vx, vy) = el.space.vector.eval(pts);
        let ux = &vx * &sol.projected_velocity[c];
        let uy = &vy * &sol.projected_velocity[c];
        for (q, &x) in pts.iter().enumerate() {
            p.push(discrete_pressure(&system, &sol, c, x));
            u.push(ux[q]);
            u.push(uy[q]);
        }
    }
    (p, u)
}

fn relative_max_difference(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    diff / scale
}

fn criterion_equivalence(log: &mut DefectLog) -> Outcome {
    let problem = builtin_problem(ProblemId::Test1, 1).unwrap();
    let mesh = labeled_mesh(MeshFamily::Cartesian { nx: 5, ny: 5 }, &problem, 1).unwrap();
    let mut worst = (0.0f64, String::new());
    for k in 0..=3 {
        for (mon, ortho) in [(DofVariant::MON_A, DofVariant::ORTHO_A), (DofVariant::MON_B, DofVariant::ORTHO_B)] {
            let (p_mon, u_mon) = nodal_values(&problem, &mesh, k, mon, log);
            let (p_ortho, u_ortho) = nodal_values(&problem, &mesh, k, ortho, log);
            let e = relative_max_difference(&p_mon, &p_ortho).max(relative_max_difference(&u_mon, &u_ortho));
            if e > worst.0 {
                worst = (e, format!("{mon}/{ortho} k={k}"));
            }
        }
    }
    Outcome {
        pass: worst.0 <= EQUIVALENCE_TOL,
        detail: format!("max relative difference {:.2e} ({}) tol {EQUIVALENCE_TOL:e}", worst.0, worst.1),
    }
}

fn study(problem: ProblemId, family: MeshFamily, refinements: Vec<usize>, degrees: Vec<usize>, stab: Stabilization) -> RunReport {
    run_convergence_study(&StudyConfig {
        problem,
        family,
        refinements,
        degrees,
        variants: vec![DofVariant::ORTHO_B],
        stabilizations: StabilizationChoice::Explicit(vec![stab]),
        condition_number: false,
        wall_time: false,
    })
    .unwrap()
}

/// Checks `rate ≥ k + margin` for both errors of every series; returns the
/// per-series summary and the failures.
fn check_rates(report: &RunReport, margin: f64, label: &str, summary: &mut Vec<String>, failures: &mut Vec<String>) {
    let mut ks: Vec<usize> = report.records.iter().map(|r| r.k).collect();
    ks.dedup();
    for k in ks {
        let r = report.records.iter().find(|r| r.k == k).unwrap();
        let need = k as f64 + margin;
        let (rp, ru) = (r.rate_p.unwrap_or(f64::NAN), r.rate_u.unwrap_or(f64::NAN));
        summary.push(format!("{label} k={k} {rp:.2}/{ru:.2}"));
        for (name, rate) in [("rate_p", rp), ("rate_u", ru)] {
            if !(rate >= need) {
                failures.push(format!("{label} k={k} {name} {rate:.2} < {need:.2}"));
            }
        }
    }
}

fn criterion_rates(log: &mut DefectLog) -> Outcome {
    let dofi = Stabilization::DofiDofi { c: 1.0 };
    let t1 = study(ProblemId::Test1, MeshFamily::Concave, vec![1, 2, 3], vec![0, 1, 2, 3], dofi);
    let t3_id = ProblemId::Test3 { d_par: 1.0, bc: BcMode::Dirichlet };
    let t3 = study(t3_id, MeshFamily::default_for(t3_id), vec![1, 2, 3], vec![0, 2], dofi);
    log.record_report(&t1);
    log.record_report(&t3);
    let (mut summary, mut failures) = (Vec::new(), Vec::new());
    check_rates(&t1, TEST1_RATE_MARGIN, "test1", &mut summary, &mut failures);
    check_rates(&t3, TEST3_RATE_MARGIN, "test3", &mut summary, &mut failures);
    let solver_ok = t1.all_succeeded() && t3.all_succeeded();
    Outcome {
        pass: solver_ok && failures.is_empty(),
        detail: format!(
            "rates p/u: {}{}",
            summary.join(", "),
            if failures.is_empty() { String::new() } else { format!("; below bound: {}", failures.join(", ")) }
        ),
    }
}

fn criterion_conditioning(log: &mut DefectLog) -> Outcome {
    let problem = builtin_problem(ProblemId::Test1, 1).unwrap();
    let mesh = labeled_mesh(MeshFamily::Concave, &problem, 1).unwrap();
    let log_cond = |variant: DofVariant, log: &mut DefectLog| -> Vec<f64> {
        (2..=5)
            .map(|k| {
                let run = run_single(&problem, &mesh, k, variant, Stabilization::DofiDofi { c: 1.0 }, true).unwrap();
                log.record(run.divergence_defect, &format!("conditioning k={k} {variant}"));
                run.cond.unwrap().log10()
            })
            .collect()
    };
    let mon = log_cond(DofVariant::MON_A, log);
    let ortho = log_cond(DofVariant::ORTHO_B, log);
    let ratio = 10f64.powf(mon[3] - ortho[3]);
    let ortho_steps: Vec<f64> = ortho.windows(2).map(|w| w[1] - w[0]).collect();
    let ortho_max_step = ortho_steps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mon_mean_step = (mon[3] - mon[0]) / 3.0;
    Outcome {
        pass: ratio >= COND_RATIO_MIN && ortho_max_step <= ORTHO_LOG_SLOPE_MAX && mon_mean_step >= MON_LOG_SLOPE_MIN,
        detail: format!(
            "k=5 cond ratio {ratio:.2e} (min {COND_RATIO_MIN:e}); Ortho(b) max log10 step {ortho_max_step:.2} (max {ORTHO_LOG_SLOPE_MAX}); \
             Mon(a) mean log10 step {mon_mean_step:.2} (min {MON_LOG_SLOPE_MIN}); log10 cond Mon(a) {} Ortho(b) {}",
            fmt_list(&mon),
            fmt_list(&ortho)
        ),
    }
}

fn fmt_list(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", "))
}

fn criterion_anisotropy(log: &mut DefectLog) -> Outcome {
    let dirichlet = ProblemId::Test2 { epsilon: 1e-6, bc: BcMode::Dirichlet };
    let rate_run = study(dirichlet, MeshFamily::default_for(dirichlet), vec![1, 2, 3], vec![1], Stabilization::DofiDofi { c: 1.0 });
    log.record_report(&rate_run);
    let rate = rate_run.records[0].rate_p.unwrap_or(f64::NAN);

    // locking signature with the default C = ‖D⁻¹‖ dofi-dofi constant
    let distorted = MeshFamily::Distorted { nx: 5, ny: 5, amplitude: DEFAULT_DISTORTION };
    let locking = |epsilon: f64, log: &mut DefectLog| -> RunReport {
        let id = ProblemId::Test2 { epsilon, bc: BcMode::NearlyNeumann };
        let r = study(id, distorted, vec![1, 2], vec![0], Stabilization::DofiDofi { c: 1.0 / epsilon });
        log.record_report(&r);
        r
    };
    let strong = locking(1e-6, log);
    let mild = locking(1.0, log);
    let factors: Vec<f64> = strong
        .records
        .iter()
        .zip(&mild.records)
        .map(|(s, m)| s.err_p.unwrap_or(f64::NAN) / m.err_p.unwrap_or(f64::NAN))
        .collect();
    let locked = factors.iter().all(|&f| f >= LOCKING_FACTOR_MIN);
    let ok = rate_run.all_succeeded() && strong.all_succeeded() && mild.all_succeeded();
    Outcome {
        pass: ok && rate >= TEST2_RATE_MIN && locked,
        detail: format!(
            "eps=1e-6 k=1 rate_p {rate:.2} (min {TEST2_RATE_MIN}); k=0 distorted nearly-neumann err_p(1e-6)/err_p(1) {} (min {LOCKING_FACTOR_MIN})",
            fmt_list(&factors)
        ),
    }
}

fn criterion_stabilization_scale(log: &mut DefectLog) -> Outcome {
    let d_par = 1e8;
    let id = ProblemId::Test3 { d_par, bc: BcMode::Mixed };
    let problem = builtin_problem(id, 4).unwrap();
    let family = MeshFamily::default_for(id);
    let mesh = labeled_mesh(family, &problem, 4).unwrap();
    let err_u = |stab: Stabilization, log: &mut DefectLog| -> f64 {
        let run = run_single(&problem, &mesh, 0, DofVariant::ORTHO_B, stab, false).unwrap();
        log.record(run.divergence_defect, &format!("test3 mixed {stab}"));
        run.errors.err_u
    };
    let recipe = err_u(Stabilization::DRecipe { c: 1.0 }, log);
    let scaled = err_u(Stabilization::DofiDofi { c: 1.0 / d_par }, log);
    Outcome {
        pass: recipe <= scaled,
        detail: format!("{} k=0: err_u DRecipe(1) {recipe:.3e} vs DofiDofi(1e-8) {scaled:.3e}", family.label(4)),
    }
}

fn main() -> ExitCode {
    let mut log = DefectLog::default();
    let mut results: Vec<(usize, &str, Option<Duration>, Outcome, Duration)> = Vec::new();
    let mut run = |n: usize, name: &'static str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        results.push((n, name, limit, outcome, start.elapsed()));
        let (n, name, limit, o, t) = results.last().unwrap();
        print_line(*n, name, *limit, o, *t);
    };
    run(1, "orthonormal bases", Some(Duration::from_secs(1)), &mut criterion_orthonormality);
    run(2, "polynomial reproduction", Some(Duration::from_secs(5)), &mut criterion_reproduction);
    run(3, "patch test", Some(Duration::from_secs(10)), &mut || criterion_patch(&mut log));
    run(5, "variant equivalence", Some(Duration::from_secs(30)), &mut || criterion_equivalence(&mut log));
    run(6, "convergence rates", None, &mut || criterion_rates(&mut log));
    run(7, "conditioning growth", Some(Duration::from_secs(120)), &mut || criterion_conditioning(&mut log));
    run(8, "anisotropy robustness", None, &mut || criterion_anisotropy(&mut log));
    run(9, "stabilization scale", None, &mut || criterion_stabilization_scale(&mut log));

    let divergence = Outcome {
        pass: log.violations.is_empty() && log.solves > 0,
        detail: format!(
            "{} solves, worst defect {:.2e} tol {DIVERGENCE_TOLERANCE:e}{}",
            log.solves,
            log.worst,
            if log.violations.is_empty() { String::new() } else { format!("; violations: {}", log.violations.join("; ")) }
        ),
    };
    print_line(4, "divergence identity", None, &divergence, Duration::ZERO);
    results.push((4, "divergence identity", None, divergence, Duration::ZERO));

    results.sort_by_key(|r| r.0);
    let failed: Vec<usize> =
        results.iter().filter(|(_, _, limit, o, t)| !passed(o, *limit, *t)).map(|r| r.0).collect();
    println!();
    println!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}

fn passed(o: &Outcome, limit: Option<Duration>, elapsed: Duration) -> bool {
    o.pass && limit.is_none_or(|l| elapsed <= l)
}

fn print_line(n: usize, name: &str, limit: Option<Duration>, o: &Outcome, elapsed: Duration) {
    let verdict = if passed(o, limit, elapsed) { "PASS" } else { "FAIL" };
    let time = match limit {
        Some(l) => format!(" [{:.2}s, limit {}s]", elapsed.as_secs_f64(), l.as_secs()),
        None if elapsed > Duration::ZERO => format!(" [{:.2}s]", elapsed.as_secs_f64()),
        None => String::new(),
    };
    println!("criterion {n} {verdict} {name}{time}: {}", o.detail);
}
