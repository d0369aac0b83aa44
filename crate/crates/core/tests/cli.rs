use std::path::Path;
use std::process::{Command, Output};

use vlac::data::RgbImage;

fn vlac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlac"))
        .args(args)
        .env_remove("VLAC_PRECISION")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 10] = [
    "--set", "n=64", "--set", "hidden=8", "--set", "d_z=2", "--set", "batch_size=16", "--set", "k=1,3,2,1",
];

fn trained(dir: &Path, steps: &str) -> std::path::PathBuf {
    let run = dir.join("run");
    let mut args = vec!["train", "--out", s(&run), "--steps", steps];
    args.extend(SMALL);
    let out = vlac(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    run.join("checkpoints").join("final.ckpt")
}

#[test]
fn help_exits_zero_and_unknown_flag_exits_one() {
    assert_eq!(vlac(&["--help"]).status.code(), Some(0));
    assert_eq!(vlac(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(vlac(&["train", "--set", "nonsense=3"]).status.code(), Some(1));
}

#[test]
fn synth_writes_dataset_preview_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = vlac(&["synth", "--out", s(dir.path()), "--set", "n=10", "--seed", "5"]);
    assert!(out.status.success());
    for f in ["dataset.bin", "channels.txt", "preview.ppm", "config.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let preview = RgbImage::from_ppm(&std::fs::read(dir.path().join("preview.ppm")).unwrap()).unwrap();
    assert_eq!((preview.width, preview.height), (128, 128));
    let echo = std::fs::read_to_string(dir.path().join("config.txt")).unwrap();
    assert!(echo.contains("seed = 5"), "{echo}");
}

#[test]
fn zero_step_training_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path(), "0");
    assert!(ckpt.exists());
    let metrics = std::fs::read_to_string(dir.path().join("run/metrics.tsv")).unwrap();
    assert_eq!(metrics.lines().count(), 1);
}

#[test]
fn eval_reports_both_modes_and_rejects_single_component_layers() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path(), "3");
    let mut args = vec!["eval", "--checkpoint", s(&ckpt), "--layer", "2", "--out", s(dir.path())];
    args.extend(SMALL);
    let out = vlac(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("eval-layer2.tsv")).unwrap();
    assert!(report.contains("injective") && report.contains("many-to-one"));

    args[4] = "1";
    let out = vlac(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("K = 1"));
}

#[test]
fn generate_is_seed_deterministic_with_k_columns() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path(), "2");
    let grid = |name: &str, mode: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = vlac(&[
            "generate", "--checkpoint", s(&ckpt), "--layer", "2", "--mode", mode, "--seed", seed, "--out", s(&out_dir),
            "--set", "rows=3",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(out_dir.join(format!("{mode}-layer2.ppm"))).unwrap()
    };
    let a = RgbImage::from_ppm(&grid("a", "conditional", "1")).unwrap();
    assert_eq!((a.width, a.height), (3 * 16, 3 * 16));
    assert_eq!(grid("b", "conditional", "1"), grid("c", "conditional", "1"));
    assert_ne!(grid("d", "conditional", "1"), grid("e", "conditional", "2"));
    let m = RgbImage::from_ppm(&grid("f", "marginal", "1")).unwrap();
    assert_eq!((m.width, m.height), (8 * 16, 3 * 16));
}

#[test]
fn runtime_failures_exit_two() {
    let out = vlac(&["eval", "--checkpoint", "/definitely/missing.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selfcheck_names_an_injected_broken_op() {
    let out = vlac(&["selfcheck", "--inject-fault", "softplus"]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("FAIL\tgradient"));
    assert!(text.contains("softplus"));
}
