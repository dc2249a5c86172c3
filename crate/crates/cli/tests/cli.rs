use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use wentzell_core::hybrid::{build_mesh, EdgeLabel, MeshSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wentzell"))
}

fn mesh_spec(h: f64) -> Value {
    json!({"generate": {
        "domain": {"rectangle": {"origin": [0, 0], "width": 1, "height": 1}},
        "h": h,
        "side_labels": ["dirichlet", "neumann", "dynamic", "neumann"]
    }})
}

fn matrix(rows: [[(f64, f64); 2]; 2]) -> Value {
    json!(rows.map(|r| r.map(|(re, im)| [re, im])))
}

fn identity() -> Value {
    matrix([[(1.0, 0.0), (0.0, 0.0)], [(0.0, 0.0), (1.0, 0.0)]])
}

fn config(a: Value, p: &[f64]) -> Value {
    json!({
        "seed": 3,
        "coefficients": {"a": {"constant": a}},
        "mesh": mesh_spec(0.125),
        "p": p,
    })
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(cmd: &str, cfg: &Path, out: &Path) -> Output {
    bin().args([cmd, "--config"]).arg(cfg).arg("--out").arg(out).output().unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn constants_for_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(identity(), &[2.0, 4.0]));
    let out = dir.path().join("out");
    let o = run("constants", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("constants.json")).unwrap()).unwrap();
    assert_eq!(report["lambda"].as_f64(), Some(1.0));
    assert_eq!(report["big_lambda"].as_f64(), Some(1.0));
    assert!(report["omega"].as_f64().unwrap().abs() < 1e-12);
    let rows = csv_rows(&out.join("constants.csv"));
    let theta = |k: usize| rows[k][3].parse::<f64>().unwrap();
    assert!((theta(0) - std::f64::consts::FRAC_PI_2).abs() < 1e-5);
    // arccos |1 - 2/4|
    assert!((theta(1) - 0.5f64.acos()).abs() < 1e-5);
}

#[test]
fn non_elliptic_field_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let a = matrix([[(-1.0, 0.0), (0.0, 0.0)], [(0.0, 0.0), (1.0, 0.0)]]);
    let cfg = write_config(dir.path(), &config(a, &[2.0]));
    let o = run("constants", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_files_exit_one_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = run("constants", &missing, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains(&*missing.to_string_lossy()));

    let mut cfg = config(identity(), &[2.0]);
    cfg["mesh"] = json!({"file": "meshes/absent.json"});
    let path = write_config(dir.path(), &cfg);
    let o = run("verify", &path, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(err.contains("mesh.file") && err.contains("absent.json"), "{err}");
}

#[test]
fn invalid_values_exit_one_with_the_config_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(identity(), &[2.0]);
    cfg["mesh"]["generate"]["h"] = json!("fine");
    let o = run("constants", &write_config(dir.path(), &cfg), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mesh.generate.h"));

    let cfg = config(identity(), &[2.0, 0.5]);
    let o = run("constants", &write_config(dir.path(), &cfg), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("p[1]"));
}

#[test]
fn demo_config_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.json");
    let out = dir.path().join("out");
    let o = run("verify", &demo, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("verify.csv"));
    assert!(rows.iter().all(|r| &r[3] == "true"));
    for suite in ["basics", "convexity", "contractivity", "nittka", "transference", "flows", "holder", "projection"] {
        assert!(rows.iter().any(|r| &r[0] == suite && &r[4] == "asserted"), "{suite}");
    }
}

#[test]
fn non_acute_mesh_downgrades_contractivity() {
    let dir = tempfile::tempdir().unwrap();
    use EdgeLabel::*;
    let mesh = build_mesh(&MeshSpec::unit_square(0.25, [Dirichlet, Neumann, Dynamic, Neumann])).unwrap();
    let mut file = mesh.to_file().clone();
    // pull an interior vertex towards a corner to create obtuse angles
    let v = file.vertices.iter().position(|x| (x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12).unwrap();
    file.vertices[v] = [0.3, 0.62];
    std::fs::write(dir.path().join("mesh.json"), serde_json::to_string(&file).unwrap()).unwrap();
    let mut cfg = config(identity(), &[2.0, 4.0]);
    cfg["mesh"] = json!({"file": "mesh.json"});
    cfg["suites"] = json!({"convexity": false, "flows": false});
    let out = dir.path().join("out");
    let o = run("verify", &write_config(dir.path(), &cfg), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let rows = csv_rows(&out.join("verify.csv"));
    let contractivity: Vec<_> = rows.iter().filter(|r| &r[0] == "contractivity").collect();
    assert!(!contractivity.is_empty() && contractivity.iter().all(|r| &r[4] == "report"));
}

#[test]
fn p_dependent_suites_skip_when_not_p_elliptic() {
    let dir = tempfile::tempdir().unwrap();
    // elliptic (lambda = 1) but with a large symmetric imaginary part
    let a = matrix([[(1.0, 0.0), (0.0, 2.0)], [(0.0, 2.0), (1.0, 0.0)]]);
    let field = wentzell_core::CoefficientField::constant(
        serde_json::from_value(a.clone()).unwrap(),
    );
    assert!(wentzell_core::ellipticity::delta_p(&field, 10.0).unwrap() <= 0.0);
    let mut cfg = config(a, &[2.0, 10.0]);
    cfg["suites"] = json!({"basics": false, "contractivity_infinity": false});
    let out = dir.path().join("out");
    let o = run("verify", &write_config(dir.path(), &cfg), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("verify.csv"));
    for suite in ["convexity", "nittka", "flows"] {
        assert!(
            rows.iter().any(|r| &r[0] == suite && r[1].contains("10") && &r[4] == "skipped: not p-elliptic"),
            "{suite}"
        );
    }
}

#[test]
fn simulate_is_deterministic_and_zero_steps_give_initial_norms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(identity(), &[2.0, 4.0]));
    let (o1, o2) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("simulate", &cfg, &o1).status.code(), Some(0));
    assert_eq!(run("simulate", &cfg, &o2).status.code(), Some(0));
    let read = |d: &Path| std::fs::read(d.join("simulate_norms.csv")).unwrap();
    assert_eq!(read(&o1), read(&o2));

    let mut zero = config(identity(), &[2.0]);
    zero["time"] = json!({"n_steps": 0});
    let cfg = write_config(dir.path(), &zero);
    let out = dir.path().join("zero");
    assert_eq!(run("simulate", &cfg, &out).status.code(), Some(0));
    let rows = csv_rows(&out.join("simulate_norms.csv"));
    assert!(!rows.is_empty() && rows.iter().all(|r| &r[3] == "0"));
}

#[test]
fn seed_flag_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(identity(), &[2.0]));
    let (o1, o2) = (dir.path().join("a"), dir.path().join("b"));
    run("simulate", &cfg, &o1);
    bin().args(["simulate", "--seed", "99", "--jobs", "1", "--config"]).arg(&cfg).arg("--out").arg(&o2).output().unwrap();
    let read = |d: &Path| std::fs::read(d.join("simulate_norms.csv")).unwrap();
    assert_ne!(read(&o1), read(&o2));
}

#[test]
fn geometry_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(identity(), &[2.0]);
    cfg["mesh"]["generate"]["side_labels"] = json!(["dynamic", "dynamic", "dynamic", "dynamic"]);
    cfg["geometry"] = json!({"koch_levels": [3], "koch_base_length": 2.0, "density_samples": 0});
    let out = dir.path().join("out");
    let o = run("geometry", &write_config(dir.path(), &cfg), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let koch = csv_rows(&out.join("koch.csv"));
    assert_eq!(&koch[0][1], "64");
    let mass: f64 = koch[0][2].parse().unwrap();
    assert!((mass - 2f64.powf(4f64.ln() / 3f64.ln())).abs() < 1e-12);
    // corners of the square give the quarter disc
    let density = csv_rows(&out.join("density.csv"));
    let (ratio, se) = density
        .iter()
        .map(|r| (r[3].parse::<f64>().unwrap(), r[4].parse::<f64>().unwrap()))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    assert!(ratio >= std::f64::consts::FRAC_PI_4 - 3.0 * se, "{ratio} {se}");
}
