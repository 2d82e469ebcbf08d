use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use twoscale::geometry::read_mesh;
use twoscale_cli::artifacts::Manifest;

const SMALL: &str = "[mesh]\ncell_q = [12, 24]\nmacro_n = [16, 32]\n";

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn twoscale(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoscale"))
        .current_dir(dir)
        .env_remove("TWOSCALE_OUT")
        .args(args)
        .output()
        .unwrap()
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn non_reciprocal_epsilon_is_a_usage_error() {
    let dir = scratch("eps");
    let o = twoscale(&dir, &["predict", "--eps", "0.3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon must be 1/m"), "{}", stderr(&o));
    let o = twoscale(&dir, &["mesh", "--kind", "domain", "--eps", "0.3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = scratch("config");
    for (text, needle) in [
        ("[nope]\n", "unknown field"),
        ("[mesh]\ncell_q = [16, 20]\n", "mesh.cell_q"),
        ("[fine]\neps = [\"1/2\", \"0.3\"]\n", "epsilon must be 1/m"),
    ] {
        std::fs::write(dir.join("bad.toml"), text).unwrap();
        let o = twoscale(&dir, &["--config", "bad.toml", "micro"]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(stderr(&o).contains(needle), "{text}: {}", stderr(&o));
    }
    let o = twoscale(&dir, &["--config", "missing.toml", "micro"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(twoscale(&dir, &["beta", "--grid", "5:1:3"]).status.code(), Some(2));
    assert_eq!(twoscale(&dir, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(twoscale(&dir, &["--help"]).status.code(), Some(0));
}

#[test]
fn beta_grid_rows_and_header() {
    let dir = scratch("beta");
    let cfg = small_config(&dir, "");
    let o = twoscale(&dir, &["--config", cfg.to_str().unwrap(), "--out", "out", "beta", "--grid", "0:400:40"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.join("out/beta.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lambda,beta,B,backend,bracket_id");
    assert_eq!(lines.len(), 41);
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0], "0.0000000000000000e0");
    assert_eq!(first[3], "direct");
    // brackets never decrease along the grid
    let ids: Vec<usize> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(ids.windows(2).all(|w| w[0] <= w[1]));
    assert!(*ids.last().unwrap() >= 1);
}

#[test]
fn mesh_file_round_trips_and_matrices_dump() {
    let dir = scratch("mesh");
    let o = twoscale(
        &dir,
        &["--out", "out", "mesh", "--kind", "cell", "--q", "4", "--mesh-out", "cell.txt", "--dump-matrices"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.join("cell.txt")).unwrap();
    let header: Vec<usize> = text.lines().next().unwrap().split_whitespace().map(|t| t.parse().unwrap()).collect();
    let mesh = read_mesh(text.as_bytes()).unwrap();
    assert_eq!(header, [mesh.vertices.len(), mesh.triangles.len()]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out/mesh_report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["n_vertices"], mesh.vertices.len());
    for name in ["q0_dirichlet_stiffness", "q0_dirichlet_mass", "q1_periodic_stiffness", "q1_periodic_mass"] {
        let dump = std::fs::read_to_string(dir.join(format!("out/{name}.txt"))).unwrap();
        let mut n = 0;
        for line in dump.lines() {
            let t: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(t.len(), 3, "{name}: {line}");
            let i: usize = t[0].parse().unwrap();
            let j: usize = t[1].parse().unwrap();
            let _: f64 = t[2].parse().unwrap();
            assert!(i < mesh.vertices.len() && j < mesh.vertices.len());
            n += 1;
        }
        assert!(n > mesh.vertices.len() / 4, "{name}");
    }
}

#[test]
fn manifest_lists_every_artifact_with_its_hash() {
    let dir = scratch("manifest");
    let out = dir.join("out");
    assert!(twoscale(&dir, &["--out", "out", "mesh", "--kind", "square", "--n", "4"]).status.success());
    assert!(twoscale(&dir, &["--out", "out", "beta", "--grid", "1:50:5"]).status.success());
    let m = Manifest::read(&out).unwrap().unwrap();
    assert_eq!(m.runs.keys().collect::<Vec<_>>(), ["beta", "mesh"]);
    assert_eq!(m.runs["beta"].config_hash, m.runs["mesh"].config_hash);
    assert!(m.runs["mesh"].artifacts.iter().any(|a| a.path == "mesh.txt"));
    assert!(m.verify(&out).is_empty());
    assert!(out.join(&m.timings).exists());
    std::fs::write(out.join("beta.csv"), "tampered").unwrap();
    assert_eq!(m.verify(&out), ["beta.csv: hash mismatch"]);
}

#[test]
fn output_directory_precedence() {
    let dir = scratch("outdir");
    let run = |args: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_twoscale"));
        c.current_dir(&dir).env_remove("TWOSCALE_OUT").args(args);
        if let Some(e) = env {
            c.env("TWOSCALE_OUT", e);
        }
        assert!(c.output().unwrap().status.success());
    };
    let mesh = ["mesh", "--kind", "square", "--n", "2"];
    run(&mesh, Some("from_env"));
    assert!(dir.join("from_env/mesh.txt").exists());
    run(&[&["--out", "from_flag"], &mesh[..]].concat(), Some("from_env2"));
    assert!(dir.join("from_flag/mesh.txt").exists() && !dir.join("from_env2").exists());
}

#[test]
fn predictions_and_report() {
    let dir = scratch("predict");
    let cfg = small_config(&dir, "");
    let cfg = cfg.to_str().unwrap();
    let o = twoscale(&dir, &["--config", cfg, "--out", "out", "predict", "--eps", "1/2,0.25"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.join("out/predictions.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda0,case,nu_index,nu,lambda1,eps,Lambda"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert!(!rows.is_empty());
    for r in &rows {
        let (l0, l1, e, big): (f64, f64, f64, f64) =
            (r[0].parse().unwrap(), r[4].parse().unwrap(), r[5].parse().unwrap(), r[6].parse().unwrap());
        assert!(e == 0.5 || e == 0.25);
        assert!((big - (l0 + e * l1)).abs() <= 1e-12 * big.abs().max(1.0));
    }
    // the λ₀ = 0 branch pairs with every homogenized level
    assert!(rows.iter().filter(|r| r[0] == "0.0000000000000000e0" && r[1] == "a").count() >= 2);

    let o = twoscale(&dir, &["--config", cfg, "--out", "out", "cell", "--lambda0", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cell: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out/cell.json")).unwrap()).unwrap();
    for key in ["a_hom", "c", "p_int", "k", "nu_coefficients", "residuals"] {
        assert!(!cell[key].is_null(), "{key}");
    }

    let o = twoscale(&dir, &["--config", cfg, "--out", "out", "report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.join("out/report.md")).unwrap();
    assert!(report.contains("| cell tensors | cell.json |"));
    assert!(report.contains("predictions"));
    assert!(Manifest::read(&dir.join("out")).unwrap().unwrap().verify(&dir.join("out")).is_empty());
}

#[test]
fn case_b_without_a_determined_shift_is_a_numerical_failure() {
    // the first zero-mean mode of the disk has ⟨η⟩ = b₀ = 0, which leaves Ã undetermined
    let dir = scratch("caseb");
    let cfg = small_config(&dir, "[geometry]\ninclusion = \"disk\"\nradius = 0.25\n");
    let o = twoscale(&dir, &["--config", cfg.to_str().unwrap(), "--out", "out", "caseb", "--mode-index", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out/caseb.json")).unwrap()).unwrap();
    assert!(v["a_tilde"].is_null() && v["error"].is_string());
    assert!(v["lambda1"].as_f64().unwrap() < 0.0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    // same command line in two working directories; the manifest records the arguments
    let dirs = [scratch("repeat_a"), scratch("repeat_b")];
    for dir in &dirs {
        small_config(dir, "");
        let o = twoscale(dir, &["--config", "run.toml", "--out", "out", "micro"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["micro.json", "manifest.json"] {
        let [a, b] = dirs.each_ref().map(|d| std::fs::read(d.join("out").join(f)).unwrap());
        assert_eq!(a, b, "{f}");
    }
}
