use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn stylemap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stylemap"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = stylemap(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn argument_errors_exit_with_two() {
    assert_eq!(stylemap(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(stylemap(&["stylize", "--alpha", "0.5"]).status.code(), Some(2));
    assert_eq!(stylemap(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    let out = stylemap(&["bank", "build", "--corpus", p(&missing), "--engine", p(&missing), "--out", p(&tmp.path().join("b"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn prepared() -> Workspace {
    let tmp = tempfile::tempdir().unwrap();
    let ws = Workspace { root: tmp.path().to_path_buf(), _tmp: tmp };
    let (data, styles, engine, bank) = (ws.path("data"), ws.path("styles"), ws.path("engine"), ws.path("bank"));
    ok(&["synth", "dataset", "--out", p(&data), "--train", "20", "--test", "20"]);
    ok(&["synth", "styles", "--out", p(&styles), "--count", "4"]);
    ok(&["engine", "train", "--dataset", p(&data), "--corpus", p(&styles), "--out", p(&engine), "--n", "8", "--epochs", "1"]);
    ok(&["bank", "build", "--corpus", p(&styles), "--engine", p(&engine), "--out", p(&bank), "--seed", "3"]);
    ws
}

#[test]
fn full_command_chain() {
    let ws = prepared();
    let (data, engine, bank, run) = (ws.path("data"), ws.path("engine"), ws.path("bank"), ws.path("run"));
    let image = data.join("test/circle/00000.png");

    ok(&["stylize", "--engine", p(&engine), "--bank", p(&bank), "--image", p(&image), "--style", "style_0001", "--alpha", "0.3",
        "--noise", "--out", p(&ws.path("styled.png")), "--strip", p(&ws.path("strip.png"))]);
    assert!(ws.path("styled.png").is_file() && ws.path("strip.png").is_file());
    let bad_style = stylemap(&["stylize", "--engine", p(&engine), "--bank", p(&bank), "--image", p(&image), "--style", "nope",
        "--out", p(&ws.path("x.png"))]);
    assert_eq!(bad_style.status.code(), Some(2));

    let config = serde_json::json!({
        "dataset": {"root": data, "resolution": 32, "classes": 10, "train_size": 20, "test_size": 20},
        "model": {"widths": [4, 8], "pools": 1},
        "strategy": {"strategy": "TRAD_SA", "trad_ops": [{"op": "hflip", "p": 0.5}],
                     "sa_policy": {"alpha": {"mode": "uniform", "lo": 0.0, "hi": 1.0}, "style_prob": 0.5, "noise": {"mode": "off"}}},
        "optimizer": {"lr": 0.001, "epochs": 1, "batch_size": 8},
        "seeds": [0, 1],
        "engine": engine,
        "bank": bank,
        "eval": {"sweep_alpha": 0.5, "subset": "balanced:10", "alpha_styles": 2, "alphas": [0.0, 1.0]}
    });
    let cfg_path = ws.path("cfg.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    ok(&["--sequential", "train", "--config", p(&cfg_path), "--out", p(&run)]);
    assert_eq!(stylemap(&["train", "--config", p(&cfg_path), "--out", p(&run)]).status.code(), Some(2));

    let sweep = run.join("sweep.json");
    ok(&["sweep", "--model", p(&run), "--seed", "1", "--bank", p(&bank), "--subset", "balanced:10", "--out", p(&sweep)]);
    let scores: serde_json::Value = serde_json::from_slice(&fs::read(&sweep).unwrap()).unwrap();
    assert_eq!(scores.as_array().unwrap().len(), 4);

    ok(&["explain", "sam", "--model", p(&run), "--image", p(&image), "--class", "circle", "--out", p(&ws.path("sam.json")),
        "--overlay", p(&ws.path("sam.png"))]);
    ok(&["explain", "sam", "--model", p(&run), "--image", p(&image), "--class", "1", "--alpha", "0.5", "--style", "style_0000",
        "--bank", p(&bank), "--logit", "--out", p(&ws.path("sam2.json"))]);
    let no_style = stylemap(&["explain", "sam", "--model", p(&run), "--image", p(&image), "--class", "1", "--alpha", "0.5",
        "--out", p(&ws.path("sam3.json"))]);
    assert_eq!(no_style.status.code(), Some(2));
    ok(&["explain", "wsam", "--model", p(&run), "--image", p(&image), "--class", "circle", "--bank", p(&bank), "--alphas", "0,1",
        "--styles", "2", "--out", p(&ws.path("wsam.json")), "--map", p(&ws.path("wsam_map.json"))]);
    let variance = ok(&["explain", "wsam-variance", "--model", p(&run), "--dataset", p(&data), "--bank", p(&bank), "--alphas",
        "0,1", "--styles", "2", "--samples-per-class", "1", "--out", p(&run.join("variance.json"))]);
    assert_eq!(String::from_utf8_lossy(&variance.stdout).lines().count(), 10);

    ok(&["figures", "--run", p(&run), "--bank", p(&bank), "--overlay-samples", "2", "--tsne-samples", "10"]);
    let report = ws.path("report.html");
    ok(&["report", p(&run), "--out", p(&report)]);
    let html = fs::read_to_string(&report).unwrap();
    for section in ["Strategy comparison", "Sweep curves", "WSAM variance", "Activation maps", "t-SNE view"] {
        assert!(html.contains(section), "report lacks {section}");
    }
    let manifest = fs::read_to_string(run.join("manifest.json")).unwrap();
    assert!(manifest.contains("variance.json") && manifest.contains("sweep.json"));
}
