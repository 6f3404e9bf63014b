//! Command-line contract tests: exit codes, SUMMARY lines, the config-hash
//! gate, and the output-root override. Heavier end-to-end behaviour lives in
//! the acceptance suite.

use std::path::Path;
use std::process::Output;

fn relict(root: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_relict"));
    cmd.current_dir(root).args(["--config", "relict.toml"]).args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn relict")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// One SUMMARY line per successful command, carrying valid JSON.
fn summary(out: &Output) -> serde_json::Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with("SUMMARY ")).collect();
    assert_eq!(lines.len(), 1, "want exactly one SUMMARY line, got: {stdout}");
    serde_json::from_str(&lines[0]["SUMMARY ".len()..]).expect("SUMMARY payload is not JSON")
}

const CONFIG: &str = r#"
output_root = "out"

[[scenes]]
name = "alpha"
raster = "data/alpha.rgrid"
mask = "data/alpha_mask.rgrid"

[dataset]
tile_size = 32
pad_mode = "zero_pad"
split_ratio = 0.7
k = [4]
ld30_factor = 2
ld50_factor = 3
kmeans_seed = 11
balance_seed = 12
augment_seed = 13

[model]
preset = "tiny"

[pretrain]
loss = "categorical-ce"
epochs = 1
batch_size = 8

[finetune]
loss = "pixel-bce"
epochs = 1
batch_size = 8

[evaluation]
threshold = 0.5

[grid]
frameworks = ["standard", "proposed"]
architectures = ["unet"]
variants = ["LD30"]
workers = 1

[synthetic]
width = 128
height = 128
scar_count = 3
confounder_count = 2
seed = 5
"#;

fn setup(dir: &tempfile::TempDir) -> &Path {
    std::fs::write(dir.path().join("relict.toml"), CONFIG).unwrap();
    dir.path()
}

#[test]
fn synth_and_prepare_emit_summaries_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let root = setup(&dir);

    let out = relict(root, &["synth"], &[]);
    assert_eq!(code(&out), 0, "synth failed: {}", stderr(&out));
    let s = summary(&out);
    assert_eq!(s["command"], "synth");
    assert!(root.join("data/alpha.rgrid").is_file());
    assert!(root.join("data/alpha_mask.rgrid").is_file());

    let out = relict(root, &["prepare-labeled"], &[]);
    assert_eq!(code(&out), 0, "prepare-labeled failed: {}", stderr(&out));
    let s = summary(&out);
    assert_eq!(s["command"], "prepare-labeled");
    assert!(s["tiles"].as_u64().unwrap() > 0);
    assert!(root.join("out/datasets/labeled/manifest.json").is_file());
    assert!(root.join("out/splits").is_dir());

    // Re-running with an unchanged config is allowed and refreshes outputs.
    let out = relict(root, &["prepare-labeled"], &[]);
    assert_eq!(code(&out), 0, "idempotent rerun failed: {}", stderr(&out));
}

#[test]
fn config_hash_gate_blocks_until_forced() {
    let dir = tempfile::tempdir().unwrap();
    let root = setup(&dir);
    let combo = ["--framework", "standard", "--arch", "unet", "--variant", "LD30"];
    for args in [
        vec!["synth"],
        vec!["prepare-labeled"],
        vec!["augment"],
        [&["train"], &combo[..]].concat(),
    ] {
        let out = relict(root, &args, &[]);
        assert_eq!(code(&out), 0, "{args:?} failed: {}", stderr(&out));
    }

    // Evaluating under a drifted config must fail on the checkpoint's
    // stamped hash unless forced.
    let drifted = CONFIG.replace("threshold = 0.5", "threshold = 0.4");
    std::fs::write(root.join("relict.toml"), drifted).unwrap();
    let eval = [&["evaluate"], &combo[..], &["--scene", "alpha"]].concat();
    let out = relict(root, &eval, &[]);
    assert_eq!(code(&out), 2, "hash drift must be a config error");
    let msg = stderr(&out);
    assert!(msg.contains("--force"), "no --force hint in: {msg}");
    assert!(msg.contains("hash"), "no hash mention in: {msg}");

    let forced = [&eval[..], &["--force"]].concat();
    let out = relict(root, &forced, &[]);
    assert_eq!(code(&out), 0, "--force rejected: {}", stderr(&out));
    assert_eq!(summary(&out)["command"], "evaluate");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // No config file at all.
    let out = relict(root, &["synth"], &[]);
    assert_eq!(code(&out), 2, "missing config: {}", stderr(&out));

    // Unparseable TOML.
    std::fs::write(root.join("relict.toml"), "output_root = [").unwrap();
    assert_eq!(code(&relict(root, &["synth"], &[])), 2);

    // Parseable but invalid values.
    std::fs::write(
        root.join("relict.toml"),
        CONFIG.replace("threshold = 0.5", "threshold = 1.5"),
    )
    .unwrap();
    let out = relict(root, &["synth"], &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("threshold"), "no threshold hint: {}", stderr(&out));

    // Scene name that the config does not declare.
    std::fs::write(root.join("relict.toml"), CONFIG).unwrap();
    let out = relict(root, &["synth", "--scene", "nonesuch"], &[]);
    assert_eq!(code(&out), 2, "unknown scene: {}", stderr(&out));
}

#[test]
fn missing_upstream_artifacts_exit_3_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let root = setup(&dir);
    assert_eq!(code(&relict(root, &["synth"], &[])), 0);

    // Training needs datasets that were never prepared.
    let out = relict(
        root,
        &["train", "--framework", "standard", "--arch", "unet", "--variant", "LD30"],
        &[],
    );
    assert_eq!(code(&out), 3, "train without datasets: {}", stderr(&out));
    assert!(stderr(&out).contains("relict "), "no recovery hint: {}", stderr(&out));

    // Evaluation needs a prediction raster that was never produced.
    assert_eq!(code(&relict(root, &["prepare-labeled"], &[])), 0);
    let out = relict(
        root,
        &["evaluate", "--framework", "standard", "--arch", "unet", "--variant", "LD30", "--scene", "alpha"],
        &[],
    );
    assert_eq!(code(&out), 3, "evaluate without prediction: {}", stderr(&out));
    assert!(stderr(&out).contains("relict "), "no recovery hint: {}", stderr(&out));
}

#[test]
fn output_root_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let root = setup(&dir);
    assert_eq!(code(&relict(root, &["synth"], &[])), 0);

    let out = relict(root, &["prepare-labeled"], &[("RELICT_OUTPUT_ROOT", "alt")]);
    assert_eq!(code(&out), 0, "override run failed: {}", stderr(&out));
    assert!(root.join("alt/datasets/labeled/manifest.json").is_file());
    assert!(!root.join("out").exists(), "config output_root was still used");
}
