use std::path::Path;
use std::process::Command;

fn psinc(args: &[&str], config: &Path, out: &Path) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_psinc"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    status.status.code().unwrap_or(-1)
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const MATRIX: &str = r#"
spec = { n = 1, mu = 1, T = 2 }
a = [[1.0, 0.5], [-0.4, 0.8]]
a_im = [[0.0, 0.1], [0.0, 0.0]]
seed = 11
f = { kind = "increment_compensated", n = 1, mu = 1, base = { kind = "moving_average", coeffs = [
    { re = [[1.0, 0.0], [0.3, 0.9]] },
    { re = [[0.4, 0.1], [-0.2, 0.3]] } ] } }
g = { kind = "constant", matrix = { re = [[0.04, 0.01], [0.01, 0.03]] } }

[simulate]
trials = 200
window = 16
grid = 2048
"#;

const MINIMAX: &str = r#"
spec = { n = 1, mu = 1, T = 1 }
a = [[1.0]]
seed = 5

[minimax]
f_class = { kind = "f2", p = 1.0 }
g_class = { kind = "g1", delta = 0.1 }
g_reference = { kind = "constant", matrix = { re = [[0.3]] } }
saddle_samples = 20
"#;

#[test]
fn estimate_writes_solution_and_filter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", MATRIX);
    let out = dir.path().join("o");
    assert_eq!(psinc(&["estimate"], &cfg, &out), 0);
    let sol: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("solution.json")).unwrap()).unwrap();
    assert!(sol["solution"]["mse"].as_f64().unwrap() > 0.0);
    assert_eq!(sol["solution"]["spec"]["horizon"], 1);
    let filter = std::fs::read_to_string(out.join("filter.csv")).unwrap();
    assert!(filter.starts_with("kind,k,coordinate,re,im"));
}

#[test]
fn mse_forms_agree_and_verify_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", MATRIX);
    let out = dir.path().join("o");
    assert_eq!(psinc(&["mse"], &cfg, &out), 0);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("mse.json")).unwrap()).unwrap();
    assert!(m["relative_difference"].as_f64().unwrap() < 1e-6);
    assert_eq!(psinc(&["verify", "--window", "16"], &cfg, &out), 0);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("verify.json")).unwrap()).unwrap();
    assert!(v["membership"].as_f64().unwrap() < 1e-6);
    assert!(v["oracle_mse"].as_f64().unwrap() >= v["mse"].as_f64().unwrap() * (1.0 - 1e-6));
}

#[test]
fn every_command_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", MATRIX);
    let mm = write(dir.path(), "m.toml", MINIMAX);
    let runs = [
        ("estimate", &cfg, vec!["solution.json", "filter.csv"]),
        ("mse", &cfg, vec!["mse.json"]),
        ("simulate", &cfg, vec!["montecarlo.json", "path.csv"]),
        ("verify", &cfg, vec!["verify.json"]),
        ("minimax", &mm, vec!["minimax.json", "q0.csv", "g0.csv"]),
    ];
    for (cmd, config, files) in runs {
        let a = dir.path().join(format!("{cmd}-a"));
        let b = dir.path().join(format!("{cmd}-b"));
        assert_eq!(psinc(&[cmd], config, &a), 0, "{cmd}");
        assert_eq!(psinc(&[cmd], config, &b), 0, "{cmd}");
        for f in files {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{cmd}/{f}");
        }
    }
}

#[test]
fn seed_changes_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", MATRIX);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(psinc(&["simulate"], &cfg, &a), 0);
    assert_eq!(psinc(&["simulate", "--seed", "12"], &cfg, &b), 0);
    assert_ne!(std::fs::read(a.join("path.csv")).unwrap(), std::fs::read(b.join("path.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    // unreadable config
    assert_eq!(psinc(&["estimate"], &dir.path().join("missing.toml"), &out), 1);
    // validation: unknown key, bad order, mismatched weights
    let bad = write(dir.path(), "bad.toml", "spec = { n = 1, mu = 1, T = 1 }\na = [[1.0]]\nbogus = 1\n");
    assert_eq!(psinc(&["estimate"], &bad, &out), 2);
    let order = write(
        dir.path(),
        "order.toml",
        "spec = { n = 0, mu = 1, T = 1 }\na = [[1.0]]\nf = { kind = \"constant\", matrix = { re = [[1.0]] } }\ng = { kind = \"constant\", matrix = { re = [[1.0]] } }\n",
    );
    assert_eq!(psinc(&["estimate"], &order, &out), 2);
    let horizon = write(dir.path(), "h.toml", "spec = { n = 1, mu = 1, T = 1, N = 3 }\na = [[1.0]]\n");
    assert_eq!(psinc(&["mse"], &horizon, &out), 2);
    // numerical: bounded f with μ = 2 makes the minimality integral diverge at ±π
    let div = write(
        dir.path(),
        "div.toml",
        "spec = { n = 1, mu = 2, T = 1 }\na = [[1.0]]\nf = { kind = \"constant\", matrix = { re = [[1.0]] } }\ng = { kind = \"constant\", matrix = { re = [[1.0]] } }\n",
    );
    assert_eq!(psinc(&["estimate"], &div, &out), 3);
}

#[test]
fn scalar_weights_and_grid_csv_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let grid = "lambda,re_0_0,im_0_0\n-2.356194490192345,0.3,0\n-0.7853981633974483,0.2,0\n0.7853981633974483,0.2,0\n2.356194490192345,0.3,0\n";
    write(dir.path(), "g.csv", grid);
    let cfg = write(
        dir.path(),
        "s.toml",
        "spec = { n = 1, mu = 1, T = 2 }\na_theta = [1.0, 0.5, -0.25]\n\
         f = { kind = \"increment_compensated\", n = 1, mu = 1, base = { kind = \"constant\", matrix = { re = [[1.0, 0.2], [0.2, 1.0]] } } }\n\
         g = { kind = \"constant\", matrix = { re = [[0.1, 0.0], [0.0, 0.1]] } }\n",
    );
    let out = dir.path().join("o");
    assert_eq!(psinc(&["estimate"], &cfg, &out), 0);
    let sol: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("solution.json")).unwrap()).unwrap();
    // three scalar weights with T = 2 → N = 1
    assert_eq!(sol["solution"]["spec"]["horizon"], 1);
    let mm = write(
        dir.path(),
        "m.toml",
        "spec = { n = 1, mu = 1, T = 1 }\na = [[1.0]]\n[minimax]\nf_class = { kind = \"f2\", p = 1.0 }\n\
         g_class = { kind = \"g1\", delta = 0.0 }\ng_reference = { csv = \"g.csv\" }\nf_cells = 1\ng_cells = 4\n",
    );
    assert_eq!(psinc(&["minimax"], &mm, &out), 0);
    assert_eq!(std::fs::read_to_string(out.join("g0.csv")).unwrap(), grid);
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("minimax.json")).unwrap()).unwrap();
    assert_eq!(r["iterations"], 1);
}
