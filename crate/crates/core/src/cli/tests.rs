use super::*;
use crate::benchmarks::RunRecord;

const MINIMAL: &str = "[problem]\nname = test1\n[mesh]\nrefinements = 1\n[discretization]\ndegrees = 1\nvariants = Ortho(b)\n";

fn errors_of(text: &str) -> Vec<ConfigError> {
    parse_config(text).unwrap_err().0
}

fn has_error(errors: &[ConfigError], line: Option<usize>, needle: &str) -> bool {
    errors.iter().any(|e| e.line == line && e.message.contains(needle))
}

#[test]
fn minimal_config_parses_with_defaults() {
    let c = parse_config(MINIMAL).unwrap();
    assert_eq!(c.study.problem, ProblemId::Test1);
    assert_eq!(c.study.family, MeshFamily::Concave);
    assert_eq!(c.study.refinements, vec![1]);
    assert_eq!(c.study.degrees, vec![1]);
    assert_eq!(c.study.variants, vec![DofVariant::ORTHO_B]);
    assert_eq!(c.study.stabilizations, StabilizationChoice::Catalog);
    assert!(!c.study.condition_number && !c.study.wall_time);
    assert_eq!(c.format, ReportFormat::Csv);
    assert_eq!(c.report_path(), PathBuf::from("./report.csv"));
    assert_eq!(c.seed, 0);
}

#[test]
fn full_config_parses() {
    let text = "\
# sweep
[problem]
name = Test2
epsilon = 1e-6   # strong anisotropy
bc = nearly_neumann

[mesh]
family = distorted
nx = 4
amplitude = 0.2
refinements = 1, 2, 3

[discretization]
degrees = 0,1
variants = mon_a, Ortho(b)
stabilization = dofi-dofi(1e6), DRecipe(1), edge-normal

[output]
dir = out/x
format = JSON
condition_number = true
wall_time = no
seed = 42
";
    let c = parse_config(text).unwrap();
    assert_eq!(c.study.problem, ProblemId::Test2 { epsilon: 1e-6, bc: BcMode::NearlyNeumann });
    assert_eq!(c.study.family, MeshFamily::Distorted { nx: 4, ny: 5, amplitude: 0.2 });
    assert_eq!(c.study.refinements, vec![1, 2, 3]);
    assert_eq!(c.study.variants, vec![DofVariant::MON_A, DofVariant::ORTHO_B]);
    assert_eq!(
        c.study.stabilizations,
        StabilizationChoice::Explicit(vec![
            Stabilization::DofiDofi { c: 1e6 },
            Stabilization::DRecipe { c: 1.0 },
            Stabilization::EdgeNormalDRecipe
        ])
    );
    assert!(c.study.condition_number && !c.study.wall_time);
    assert_eq!(c.format, ReportFormat::Json);
    assert_eq!(c.report_path(), PathBuf::from("out/x/report.json"));
    assert_eq!(c.seed, 42);
}

#[test]
fn epsilon_under_test1_is_rejected_with_line() {
    let text = MINIMAL.replace("name = test1\n", "name = test1\nepsilon = 1e-6\n");
    let errors = errors_of(&text);
    assert!(has_error(&errors, Some(3), "epsilon"), "{errors:?}");
}

#[test]
fn duplicate_key_and_section_are_rejected() {
    let errors = errors_of(&MINIMAL.replace("degrees = 1\n", "degrees = 1\ndegrees = 2\n"));
    assert!(has_error(&errors, Some(7), "duplicate key `degrees` (first set on line 6)"), "{errors:?}");
    let errors = errors_of(&format!("{MINIMAL}[mesh]\n"));
    assert!(has_error(&errors, Some(8), "duplicate section [mesh]"), "{errors:?}");
}

#[test]
fn unknown_and_malformed_entries_are_rejected() {
    let errors = errors_of(&format!("{MINIMAL}[output]\ncolour = blue\nformat = xml\njust words\n[plots]\n"));
    assert!(has_error(&errors, Some(9), "unknown key `colour`"));
    assert!(has_error(&errors, Some(10), "unknown format `xml`"));
    assert!(has_error(&errors, Some(11), "expected `key = value`"));
    assert!(has_error(&errors, Some(12), "unknown section [plots]"));
    let errors = errors_of(&format!("seed = 1\n{MINIMAL}"));
    assert!(has_error(&errors, Some(1), "outside a known section"));
    let errors = errors_of(&MINIMAL.replace("degrees = 1", "degrees = 1, two"));
    assert!(has_error(&errors, Some(6), "`two`"));
    let errors = errors_of(&MINIMAL.replace("Ortho(b)", "Ortho(c)"));
    assert!(has_error(&errors, Some(7), "Ortho(c)"));
}

#[test]
fn empty_and_invalid_refinements_are_rejected() {
    let errors = errors_of(&MINIMAL.replace("refinements = 1", "refinements ="));
    assert!(has_error(&errors, Some(4), "`refinements` is empty"), "{errors:?}");
    let errors = errors_of(&MINIMAL.replace("refinements = 1", "refinements = 0, 1"));
    assert!(has_error(&errors, Some(4), "start at 1"));
    let errors = errors_of(&MINIMAL.replace("refinements = 1", "refinements = 1, 2, 1"));
    assert!(has_error(&errors, Some(4), "repeated"));
    let errors = errors_of(&MINIMAL.replace("refinements = 1\n", ""));
    assert!(has_error(&errors, None, "missing `refinements`"));
}

#[test]
fn inconsistent_combinations_are_rejected() {
    let errors = errors_of("[problem]\nname = test2\n[mesh]\nrefinements = 1\n[discretization]\ndegrees = 0\nvariants = Mon(a)\n");
    assert!(has_error(&errors, None, "requires `epsilon`"));
    let errors = errors_of(&MINIMAL.replace("name = test1", "name = test3\nd_par = 1\nbc = nearly-neumann"));
    assert!(has_error(&errors, Some(2), "dirichlet or mixed"), "{errors:?}");
    let errors = errors_of(&MINIMAL.replace("name = test1", "name = test2\nepsilon = 1e-9"));
    assert!(has_error(&errors, Some(2), "epsilon"), "{errors:?}");
    let errors = errors_of(&MINIMAL.replace("[mesh]\n", "[mesh]\nnx = 3\n"));
    assert!(has_error(&errors, Some(4), "concave"));
    let errors = errors_of(&MINIMAL.replace("[mesh]\n", "[mesh]\nfamily = cartesian\namplitude = 0.1\n"));
    assert!(has_error(&errors, Some(5), "amplitude"));
    let errors = errors_of(&MINIMAL.replace("name = test1", "name = test1\nbc = mixed"));
    assert!(has_error(&errors, Some(3), "dirichlet"));
    let errors = errors_of(&MINIMAL.replace("[mesh]\n", "[mesh]\nfamily = hexagonal\n"));
    assert!(has_error(&errors, Some(4), "hexagonal"));
}

#[test]
fn errors_are_collected_and_sorted_by_line() {
    let errors = errors_of("[problem]\nname = test4\n[mesh]\nrefinements = x\n[discretization]\ndegrees = 1\nvariants = Mon(a)\nstabilization = dofi-dofi\n");
    let lines: Vec<Option<usize>> = errors.iter().map(|e| e.line).collect();
    assert_eq!(lines, vec![Some(2), Some(4), Some(8)], "{errors:?}");
}

#[test]
fn stabilization_names() {
    assert_eq!(parse_stabilization("DofiDofi(1e6)").unwrap(), Stabilization::DofiDofi { c: 1e6 });
    assert_eq!(parse_stabilization("d_recipe( 2 )").unwrap(), Stabilization::DRecipe { c: 2.0 });
    assert_eq!(parse_stabilization("EdgeNormalDRecipe").unwrap(), Stabilization::EdgeNormalDRecipe);
    for bad in ["dofi-dofi", "dofi-dofi(-1)", "dofi-dofi(1", "edge-normal(1)", "jacobi(1)"] {
        assert!(parse_stabilization(bad).is_err(), "{bad}");
    }
    // display output parses back
    for s in [Stabilization::DofiDofi { c: 1e-8 }, Stabilization::DRecipe { c: 1.0 }, Stabilization::EdgeNormalDRecipe] {
        assert_eq!(parse_stabilization(&s.to_string()).unwrap(), s);
    }
}

fn record(error: Option<&str>) -> RunRecord {
    RunRecord {
        problem: "test2(eps=1e-6;bc=mixed)".into(),
        mesh: "cartesian-5x5".into(),
        level: 1,
        h: Some(0.25),
        k: 1,
        variant: DofVariant::MON_B,
        stabilization: Stabilization::DofiDofi { c: 1.0 },
        err_p: Some(1.5e-3),
        err_u: error.is_none().then_some(2e-2),
        absolute_errors: false,
        cond_k: None,
        rate_p: Some(2.01234),
        rate_u: None,
        wall_ms: None,
        divergence_defect: None,
        warning: None,
        error: error.map(str::to_string),
    }
}

#[test]
fn csv_has_exact_header_and_quoting() {
    let report = RunReport { records: vec![record(None), record(Some("x"))] };
    let mut csv = report_csv(&report);
    assert!(csv.starts_with("problem,mesh,h,k,variant,stabilization,err_p,err_u,cond_K,rate_p,rate_u,wall_ms\n"));
    assert!(csv.contains("\ntest2(eps=1e-6;bc=mixed),cartesian-5x5,2.5e-1,1,Mon(b),DofiDofi(1e0),1.5e-3,2e-2,,2.0123,,\n"));
    assert_eq!(csv.lines().count(), 3);

    let mut quoted = record(None);
    quoted.mesh = "a,\"b\"".into();
    csv = report_csv(&RunReport { records: vec![quoted] });
    assert!(csv.contains(",\"a,\"\"b\"\"\","), "{csv}");
}

#[test]
fn json_mirrors_csv_fields_plus_error() {
    let report = RunReport { records: vec![record(Some("solver failed"))] };
    let v: serde_json::Value = serde_json::from_str(&report_json(&report)).unwrap();
    let row = v.as_array().unwrap()[0].as_object().unwrap();
    let mut keys: Vec<&str> = row.keys().map(String::as_str).collect();
    keys.sort_unstable();
    let mut expected: Vec<&str> = CSV_HEADER.iter().copied().chain(["error"]).collect();
    expected.sort_unstable();
    assert_eq!(keys, expected);
    assert_eq!(row["error"], "solver failed");
    assert_eq!(row["variant"], "Mon(b)");
    assert!(row["cond_K"].is_null() && row["err_u"].is_null());
    assert_eq!(row["err_p"], 1.5e-3);
}
