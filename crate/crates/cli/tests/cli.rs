use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lossycomp"))
        .args(args)
        .env_remove("LOSSYCOMP_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json_out(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_code(out: &Output) -> String {
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    err["error"].as_str().unwrap().to_string()
}

fn h2(p: f64) -> f64 {
    [p, 1.0 - p].iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum()
}

fn card_closed_form(d: f64) -> f64 {
    2.0 / 3.0 * (h2((1.0 + 6.0 * d) / 4.0) - h2(3.0 * d))
}

fn write_spec(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// Rows of a CSV document as string fields, header excluded.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn solve_at_a_distortion_level() {
    let doc = json_out(&run(&["solve", "--builtin", "card-game", "--distortion", "0.083333"]));
    let rate = doc["point"]["rate"].as_f64().unwrap();
    assert!((rate - card_closed_form(0.083333)).abs() < 1e-3);
    assert!((rate - 0.0954).abs() < 1e-4);
    assert_eq!(doc["summary"]["rate_bits"].as_str().unwrap().len(), "0.0954".len() + 6);
    assert!(doc["manifest"]["rng_seeds"].is_array());

    let doc = json_out(&run(&["solve", "--builtin", "card-game", "--distortion", "0.2"]));
    assert_eq!(doc["point"]["rate"].as_f64().unwrap(), 0.0);
}

#[test]
fn malformed_spec_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "bad.json",
        r#"{"x_alphabet":["a","b"],"y_alphabet":["-"],"z_alphabet":["0","1"],"zhat_alphabet":["0","1"],
            "p_xy":[[0.5],[0.6]],"f":[[0],[1]],"d":[[0,1],[1,0]]}"#,
    );
    let out = run(&["solve", "--spec", &spec, "--distortion", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "PMFNotNormalized");

    let out = run(&["validate", "--spec", &write_spec(dir.path(), "junk.json", "{")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "ParseError");

    let out = run(&["validate", "--builtin", "card-game"]);
    assert!(out.status.success());
}

#[test]
fn numerical_failure_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // No reconstruction is ever exact, so zero distortion is unreachable.
    let spec = write_spec(
        dir.path(),
        "lossy.json",
        r#"{"x_alphabet":["a","b"],"y_alphabet":["-"],"z_alphabet":["0","1"],"zhat_alphabet":["0","1"],
            "p_xy":[[0.5],[0.5]],"f":[[0],[1]],"d":[[0.5,1],[1,0.5]]}"#,
    );
    let out = run(&["solve", "--spec", &spec, "--alphabet", "gamma-d"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_code(&out), "Infeasible");
}

#[test]
fn curve_tracks_the_card_game_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let out = run(&[
        "curve",
        "--builtin",
        "card-game",
        "--points",
        "20",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("lambda,distortion,rate_bits,support_size,converged\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 20);
    let mut previous = (f64::NEG_INFINITY, f64::INFINITY);
    for row in &rows {
        let d: f64 = row[1].parse().unwrap();
        let r: f64 = row[2].parse().unwrap();
        assert!((r - card_closed_form(d.min(1.0 / 6.0))).abs() <= 1e-3, "D={d} R={r}");
        assert!(d >= previous.0 && r <= previous.1 + 1e-9);
        previous = (d, r);
    }
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("curve.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["source"]["builtin"], "card-game");
}

#[test]
fn single_zero_multiplier() {
    let out = run(&["curve", "--builtin", "wyner-ziv-identity", "--lambda-grid", "0:0:1"]);
    assert!(out.status.success());
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][2], "0");
}

#[test]
fn zero_distortion_family_listing() {
    let out = run(&["gamma", "--builtin", "card-game"]);
    assert_eq!(stdout(&out), "{1}\n{2}\n{3}\n{1, 2}\n{2, 3}\n");

    let out = run(&["gamma", "--builtin", "card-game", "--maximal"]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with('#') && lines[0].contains("heuristic"));
    assert_eq!(&lines[1..], ["{1, 2}", "{2, 3}"]);

    let out = run(&["gamma", "--builtin", "card-game", "--epsilon", "5"]);
    assert_eq!(stdout(&out).lines().count(), 7);
}

#[test]
fn oracle_check_passes() {
    let doc = json_out(&run(&[
        "oracle",
        "--builtin",
        "card-game",
        "--distortion",
        "0.041666666666666664",
    ]));
    assert_eq!(doc["verification"]["passed"], true);
}

#[test]
fn simulation_matches_target() {
    let doc = json_out(&run(&[
        "simulate",
        "--builtin",
        "card-game",
        "--distortion",
        "0.08333333333333333",
    ]));
    let sim = &doc["simulation"];
    let z = (sim["empirical_distortion"].as_f64().unwrap() - 1.0 / 12.0) / sim["std_error"].as_f64().unwrap();
    assert!(z.abs() <= 3.0, "z = {z}");
    assert_eq!(sim["n"], 1_000_000);
}

#[test]
fn simulating_a_recovery_channel_needs_lifting() {
    let dir = tempfile::tempdir().unwrap();
    let point = dir.path().join("point.json");
    let point = point.to_str().unwrap();
    assert!(run(&[
        "solve",
        "--builtin",
        "card-game",
        "--distortion",
        "0.05",
        "--output",
        point
    ])
    .status
    .success());
    let out = run(&[
        "simulate",
        "--builtin",
        "card-game",
        "--point",
        point,
        "--samples",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "UnannotatedChannel");
    let out = run(&[
        "simulate",
        "--builtin",
        "card-game",
        "--point",
        point,
        "--lift",
        "--samples",
        "10",
    ]);
    assert!(out.status.success());
}

#[test]
fn written_points_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    let out = run(&[
        "solve",
        "--builtin",
        "shannon-binary",
        "--distortion",
        "0.1",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let rate = doc["point"]["rate"].as_f64().unwrap();
    assert!((rate - (1.0 - h2(0.1))).abs() < 5e-4);
    let check = json_out(&run(&[
        "oracle",
        "--builtin",
        "shannon-binary",
        "--point",
        path.to_str().unwrap(),
    ]));
    assert_eq!(check["verification"]["solver_rate"].as_f64().unwrap(), rate);
    assert_eq!(
        check["verification"]["reported_distortion"].as_f64().unwrap(),
        doc["point"]["distortion"].as_f64().unwrap()
    );
}

#[test]
fn deterministic_given_seed() {
    let args = [
        "solve",
        "--builtin",
        "wyner-ziv-identity",
        "--lambda",
        "3",
        "--seed",
        "9",
        "--threads",
        "2",
    ];
    let a = json_out(&run(&args));
    let b = json_out(&run(&args));
    assert_eq!(a["point"], b["point"]);
}

#[test]
fn card_game_example_check() {
    let out = run(&["example", "card-game", "--check"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.lines().nth(1).unwrap().contains("0.540852083"));
    assert!(text.contains("0.0954372"));
    assert!(text.lines().last().unwrap().starts_with("max gap"));
}
