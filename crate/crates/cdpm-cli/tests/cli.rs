//! End-to-end checks of the `cdpm` binary: every subcommand, the resolved
//! config echo, determinism across reruns, and the exit-code contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cdpm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cdpm"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn cdpm");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

/// Sorted file names in a directory.
fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn assert_dirs_byte_identical(a: &Path, b: &Path) {
    assert_eq!(listing(a), listing(b));
    for name in listing(a) {
        let left = fs::read(a.join(&name)).unwrap();
        let right = fs::read(b.join(&name)).unwrap();
        assert_eq!(left, right, "{name} differs between {} and {}", a.display(), b.display());
    }
}

/// Small end-to-end training config: 8^3 volumes, shallow network.
fn tiny_train_json(data: &Path, iterations: usize) -> serde_json::Value {
    serde_json::json!({
        "data": data,
        "train": {
            "iterations": iterations,
            "batch_size": 1,
            "learning_rate": 1e-3,
            "seed": 3,
            "schedule": {"t_steps": 8},
            "policy": {"tau_max": 4},
            "denoiser": {
                "base_channels": 4,
                "channel_mults": [1],
                "attn_levels": [0],
                "num_heads": 2,
                "time_embed_dim": 8,
                "slice_embed_dim": 8,
                "max_depth": 8,
                "max_bundle": 4
            }
        }
    })
}

fn write_json(path: &Path, value: &serde_json::Value) {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn make_phantoms(out: &Path, count: usize, dims: usize, seed: u64) {
    run_ok(cdpm()
        .args(["phantom", "--count", &count.to_string(), "--seed", &seed.to_string()])
        .arg("--out")
        .arg(out)
        .arg("--spec")
        .arg(write_spec(out.parent().unwrap(), dims)));
}

fn write_spec(dir: &Path, dims: usize) -> std::path::PathBuf {
    let path = dir.join(format!("spec_{dims}.json"));
    write_json(&path, &serde_json::json!({"spec": {"dims": [dims, dims, dims]}}));
    path
}

#[test]
fn phantom_rerun_and_echo_rerun_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    make_phantoms(&a, 3, 8, 7);
    make_phantoms(&b, 3, 8, 7);
    assert_dirs_byte_identical(&a, &b);

    // The echo is itself a valid spec: re-running from it reproduces the run
    // without repeating any flags.
    run_ok(cdpm().arg("phantom").arg("--spec").arg(a.join("config.json")).arg("--out").arg(&c));
    assert_dirs_byte_identical(&a, &c);
}

#[test]
fn train_with_zero_iterations_writes_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    make_phantoms(&data, 2, 8, 1);
    let cfg_path = dir.path().join("train.json");
    let cfg = tiny_train_json(&data, 0);
    write_json(&cfg_path, &cfg);
    let out = dir.path().join("run");
    run_ok(cdpm().arg("train").arg("--config").arg(&cfg_path).arg("--out").arg(&out));

    let model = cdpm::checkpoint::load_model(&out.join("model.cdpm")).unwrap();
    assert_eq!(model.trained_steps, 0);
    let train_cfg: cdpm::training::TrainConfig = serde_json::from_value(cfg["train"].clone()).unwrap();
    let init = cdpm::training::init_train_state(&train_cfg).unwrap();
    assert_eq!(model.params, init.params, "untrained checkpoint must equal the seeded init");
    // The loss log is just its header.
    assert_eq!(fs::read_to_string(out.join("loss.csv")).unwrap(), "step,loss,len_c,len_p,t\n");
}

#[test]
fn resumed_training_matches_the_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    make_phantoms(&data, 2, 8, 2);
    let cfg_path = dir.path().join("train.json");
    write_json(&cfg_path, &tiny_train_json(&data, 8));

    let (direct, half, resumed) =
        (dir.path().join("direct"), dir.path().join("half"), dir.path().join("resumed"));
    run_ok(cdpm().arg("train").arg("--config").arg(&cfg_path).arg("--out").arg(&direct));
    run_ok(cdpm()
        .arg("train")
        .arg("--config")
        .arg(&cfg_path)
        .args(["--iterations", "4"])
        .arg("--out")
        .arg(&half));
    run_ok(cdpm()
        .arg("train")
        .arg("--config")
        .arg(&cfg_path)
        .arg("--resume")
        .arg(half.join("train_state.cdpm"))
        .arg("--out")
        .arg(&resumed));

    assert_eq!(
        fs::read(direct.join("model.cdpm")).unwrap(),
        fs::read(resumed.join("model.cdpm")).unwrap(),
        "resume must land on the uninterrupted run's parameters"
    );
    assert_eq!(
        fs::read(direct.join("train_state.cdpm")).unwrap(),
        fs::read(resumed.join("train_state.cdpm")).unwrap()
    );
}

#[test]
fn resume_rejects_a_mismatched_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    make_phantoms(&data, 2, 8, 4);
    let cfg_path = dir.path().join("train.json");
    write_json(&cfg_path, &tiny_train_json(&data, 2));
    let out = dir.path().join("run");
    run_ok(cdpm().arg("train").arg("--config").arg(&cfg_path).arg("--out").arg(&out));

    // Same checkpoint, different learning rate: not the same run.
    let mut other = tiny_train_json(&data, 4);
    other["train"]["learning_rate"] = serde_json::json!(5e-4);
    let other_path = dir.path().join("other.json");
    write_json(&other_path, &other);
    let res = cdpm()
        .arg("train")
        .arg("--config")
        .arg(&other_path)
        .arg("--resume")
        .arg(out.join("train_state.cdpm"))
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&res), 1);
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("different config"), "unhelpful message: {err}");
}

#[test]
fn smoke_pipeline_trains_samples_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("phantoms");
    make_phantoms(&data, 8, 16, 7);

    // Train a small-but-real model for a couple of minutes of CPU at most.
    let cfg_path = dir.path().join("train.json");
    write_json(
        &cfg_path,
        &serde_json::json!({
            "data": data,
            "train": {
                "iterations": 120,
                "batch_size": 2,
                "learning_rate": 1e-3,
                "seed": 9,
                "schedule": {"t_steps": 25},
                "policy": {"tau_max": 8},
                "denoiser": {
                    "base_channels": 8,
                    "channel_mults": [1, 2],
                    "attn_levels": [1],
                    "num_heads": 4,
                    "time_embed_dim": 32,
                    "slice_embed_dim": 16,
                    "max_depth": 16,
                    "max_bundle": 8
                }
            }
        }),
    );
    let run = dir.path().join("run");
    run_ok(cdpm().arg("train").arg("--config").arg(&cfg_path).arg("--out").arg(&run));
    let csv = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 120 * 2, "header plus one row per draw");

    // Sample two volumes with montages; rerunning from the echo must
    // reproduce them byte for byte.
    let (synth, synth2) = (dir.path().join("synth"), dir.path().join("synth2"));
    run_ok(cdpm()
        .arg("sample")
        .arg("--checkpoint")
        .arg(run.join("model.cdpm"))
        .args(["--count", "2", "--seed", "11", "--montage"])
        .arg("--out")
        .arg(&synth));
    for name in ["vol_000.vol", "vol_001.vol", "vol_000.png", "vol_001.png", "config.json"] {
        assert!(synth.join(name).is_file(), "missing {name}");
    }
    run_ok(cdpm()
        .arg("sample")
        .arg("--config")
        .arg(synth.join("config.json"))
        .arg("--out")
        .arg(&synth2));
    assert_eq!(
        fs::read(synth.join("vol_000.vol")).unwrap(),
        fs::read(synth2.join("vol_000.vol")).unwrap(),
        "sampling is not deterministic from its echo"
    );

    // Sampled volumes are finite and in [0,1] (final clamp).
    let v = cdpm::data::load_volume(&synth.join("vol_001.vol")).unwrap();
    assert!(v.voxels().iter().all(|x| (0.0..=1.0).contains(x)));

    // Score synth against the corpus; the report echo reruns bit-exactly.
    let report_path = dir.path().join("report.json");
    let stdout = run_ok(cdpm()
        .arg("eval")
        .arg("--synth")
        .arg(&synth)
        .arg("--real")
        .arg(&data)
        .arg("--out")
        .arg(&report_path));
    assert!(stdout.contains("ms-ssim"), "headline line missing: {stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    for key in ["ms_ssim_pairwise", "mmd", "frechet", "n_synth", "n_real", "config_digest"] {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    let finite = [
        report["ms_ssim_pairwise"]["mean"].as_f64().unwrap(),
        report["mmd"]["value"].as_f64().unwrap(),
        report["frechet"]["axial"].as_f64().unwrap(),
        report["frechet"]["coronal"].as_f64().unwrap(),
        report["frechet"]["sagittal"].as_f64().unwrap(),
    ];
    assert!(finite.iter().all(|x| x.is_finite()), "{finite:?}");

    let report2 = dir.path().join("report2.json");
    run_ok(cdpm()
        .arg("eval")
        .arg("--config")
        .arg(dir.path().join("report.config.json"))
        .arg("--out")
        .arg(&report2));
    assert_eq!(fs::read(&report_path).unwrap(), fs::read(&report2).unwrap());

    // Inspect both checkpoint kinds.
    let model_info = run_ok(cdpm().arg("inspect").arg(run.join("model.cdpm")));
    assert!(model_info.contains("kind: model"));
    assert!(model_info.contains("format version: 1"));
    let state_info = run_ok(cdpm().arg("inspect").arg(run.join("train_state.cdpm")));
    assert!(state_info.contains("kind: train_state"));
}

#[test]
fn usage_and_runtime_failures_use_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // Unknown subcommand and missing required flag: usage, exit 1.
    assert_eq!(exit_code(&cdpm().arg("frobnicate").output().unwrap()), 1);
    assert_eq!(exit_code(&cdpm().arg("train").arg("--out").arg(dir.path()).output().unwrap()), 1);

    // Help and version: exit 0.
    assert_eq!(exit_code(&cdpm().arg("--help").output().unwrap()), 0);
    assert_eq!(exit_code(&cdpm().arg("--version").output().unwrap()), 0);

    // Malformed config file: usage, exit 1, message names the file.
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"count\": ").unwrap();
    let out = cdpm()
        .arg("phantom")
        .arg("--spec")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("p"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));

    // Missing input file: runtime, exit 2.
    let out = cdpm()
        .arg("inspect")
        .arg(dir.path().join("no_such.cdpm"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such.cdpm"));

    // Wrong file format: runtime, exit 2.
    let not_ckpt = dir.path().join("not_a_checkpoint.cdpm");
    fs::write(&not_ckpt, b"VOL1xxxxxxxx").unwrap();
    let out = cdpm().arg("inspect").arg(&not_ckpt).output().unwrap();
    assert_eq!(exit_code(&out), 2);

    // Config echo always lands before heavy work fails late; a valid run
    // into a read-only location is an I/O failure, not a crash.
    let out = cdpm()
        .arg("phantom")
        .args(["--count", "1"])
        .arg("--out")
        .arg("/proc/version/cannot_create")
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
}
