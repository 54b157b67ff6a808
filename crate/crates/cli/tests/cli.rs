use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ouve_core::audio::read_wav;
use ouve_core::rng::from_seed;
use ouve_core::score::{save_weights, Activation, TinyScoreNet};
use ouve_core::sde::SdeParams;

fn ouve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ouve"))
        .args(args)
        .env_remove("OUVE_SEED")
        .output()
        .expect("binary runs")
}

fn ouve_env(args: &[&str], seed: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ouve"))
        .args(args)
        .env("OUVE_SEED", seed)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Mixes a small dataset of `n` half-second items into `dir/data`.
fn dataset(dir: &Path, n: usize) -> PathBuf {
    let manifest = dir.join("manifest.csv");
    let lines: String = (0..n)
        .map(|i| format!("{},harmonic/{},5,0.5,0\n", 40 + i, if i % 2 == 0 { "white" } else { "pink" }))
        .collect();
    std::fs::write(&manifest, format!("# seed,kind,snr,duration,t60\n{lines}")).unwrap();
    let data = dir.join("data");
    let out = ouve(&["mix", s(&manifest), s(&data)]);
    assert!(out.status.success(), "{}", stderr(&out));
    data
}

#[test]
fn version_reports_weights_format_and_defaults() {
    let out = ouve(&["--version"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("weights format version 1"), "{text}");
    for line in ["gamma = 1.5", "sigma_min = 0.05", "sigma_max = 0.5", "t_eps = 0.03", "n_steps = 30", "snr_r = 0.5"] {
        assert!(text.contains(line), "missing '{line}' in\n{text}");
    }
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(ouve(&["--bogus"]).status.code(), Some(2));
    assert_eq!(ouve(&["simulate"]).status.code(), Some(2));
    assert_eq!(ouve(&["--N", "0", "simulate", "/tmp/never"]).status.code(), Some(2));
    assert_eq!(ouve(&["--sampler", "heun", "simulate", "/tmp/never"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "colour = red\n").unwrap();
    let out = ouve(&["--config", s(&cfg), "simulate", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("colour"), "{}", stderr(&out));
}

#[test]
fn data_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.csv");
    std::fs::write(&manifest, "1,harmonic/white,5,0.5,0\n2,harmonic/purple,5,0.5,0\n").unwrap();
    let out = ouve(&["mix", s(&manifest), s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    let out = ouve(&["enhance", "/nonexistent.wav", s(&dir.path().join("o.wav")), "--oracle-x0", "/nonexistent.wav"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn weights_version_mismatch_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 1);
    let weights = dir.path().join("w.bin");
    let net = TinyScoreNet::new(&[4], Activation::Silu, SdeParams::default(), &mut from_seed(1));
    save_weights(&net, &weights).unwrap();
    let mut bytes = std::fs::read(&weights).unwrap();
    bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
    std::fs::write(&weights, bytes).unwrap();
    let noisy = data.join("noisy/item_0000.wav");
    let out = ouve(&["enhance", s(&noisy), s(&dir.path().join("o.wav")), "--weights", s(&weights)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("version 7"), "{}", stderr(&out));
}

#[test]
fn diverging_solve_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 1);
    let weights = dir.path().join("w.bin");
    let base = TinyScoreNet::new(&[4], Activation::Silu, SdeParams::default(), &mut from_seed(1));
    let huge = vec![1e300; base.param_count()];
    let net = TinyScoreNet::from_parts(base.sizes().to_vec(), huge, Activation::Silu, SdeParams::default()).unwrap();
    save_weights(&net, &weights).unwrap();
    let noisy = data.join("noisy/item_0000.wav");
    let out = ouve(&["--N", "3", "enhance", s(&noisy), s(&dir.path().join("o.wav")), "--weights", s(&weights)]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn mix_enhance_eval_pipeline_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 2);
    for sub in ["clean", "noisy", "noise"] {
        assert_eq!(std::fs::read_dir(data.join(sub)).unwrap().count(), 2);
    }
    let est = dir.path().join("est");
    for name in ["item_0000.wav", "item_0001.wav"] {
        let out = ouve(&[
            "enhance",
            s(&data.join("noisy").join(name)),
            s(&est.join(name)),
            "--oracle-x0",
            s(&data.join("clean").join(name)),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("model=oracle"), "{}", stdout(&out));
        assert!(stdout(&out).contains("nfe=60"), "{}", stdout(&out));
        let input = read_wav(&data.join("noisy").join(name)).unwrap();
        let output = read_wav(&est.join(name)).unwrap();
        assert_eq!(input.len(), output.len());
    }
    let csv_path = dir.path().join("eval.csv");
    let out = ouve(&[
        "eval",
        s(&est),
        s(&data.join("clean")),
        s(&csv_path),
        "--noise-dir",
        s(&data.join("noise")),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["file", "si_sdr", "si_sir", "si_sar", "snr_in", "snr_gain"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let snr_in: f64 = r[4].parse().unwrap();
        let gain: f64 = r[5].parse().unwrap();
        assert!((snr_in - 5.0).abs() < 1e-3, "{snr_in}");
        assert!(gain > 5.0, "oracle enhancement should clearly help, gain {gain}");
    }
}

#[test]
fn bench_covers_grid_times_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 2);
    let csv_path = dir.path().join("bench.csv");
    let out = ouve(&["bench", s(&data), s(&csv_path), "--oracle"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["sampler", "settings", "nfe", "rtf", "si_sdr", "si_sir", "si_sar", "file", "model"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5 * 2);
    let pc_nfe: Vec<&str> = rows.iter().filter(|r| &r[0] == "pc").map(|r| &r[2]).collect();
    assert_eq!(pc_nfe, ["30", "30", "60", "60", "90", "90"]);
    assert!(rows.iter().all(|r| &r[8] == "oracle"));

    let grid = dir.path().join("grid.txt");
    std::fs::write(&grid, "# two rows\nsampler=pc corrector_steps=0 n_steps=5\nsampler=ode atol=1e-2 rtol=1e-2\n").unwrap();
    let out = ouve(&["bench", s(&data), s(&csv_path), "--oracle", "--grid", s(&grid)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv::Reader::from_path(&csv_path).unwrap().records().count();
    assert_eq!(rows, 2 * 2);
}

#[test]
fn train_writes_loadable_weights() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 2);
    let weights = dir.path().join("net.bin");
    let losses = dir.path().join("loss.csv");
    let out = ouve(&[
        "--set",
        "positions_per_item=16",
        "train",
        s(&data),
        s(&weights),
        "--epochs",
        "2",
        "--lr",
        "1e-3",
        "--loss-csv",
        s(&losses),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    // two items in one batch of eight: one step per epoch
    assert_eq!(csv::Reader::from_path(&losses).unwrap().records().count(), 2);
    let enhanced = dir.path().join("e.wav");
    let noisy = data.join("noisy/item_0000.wav");
    let out = ouve(&["--N", "2", "--corrector-steps", "0", "enhance", s(&noisy), s(&enhanced), "--weights", s(&weights)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("model=net"));
    assert!(stdout(&out).contains("nfe=2"));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, args: &[&str], env: Option<&str>| {
        let out_dir = dir.path().join(name);
        let mut all = args.to_vec();
        all.extend(["simulate", s(&out_dir)]);
        let out = match env {
            Some(seed) => ouve_env(&all, seed),
            None => ouve(&all),
        };
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read_to_string(out_dir.join("forward_gamma_1.5.csv")).unwrap()
    };
    let a = run("a", &["--seed", "5"], None);
    let b = run("b", &["--seed", "5"], None);
    let c = run("c", &["--seed", "6"], None);
    let d = run("d", &[], Some("5"));
    let e = run("e", &["--seed", "6"], Some("5"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a, d, "OUVE_SEED is the fallback seed");
    assert_eq!(c, e, "--seed wins over OUVE_SEED");

    let envelope = std::fs::read_to_string(dir.path().join("a/envelope_gamma_0.5.csv")).unwrap();
    assert!(envelope.starts_with("t,mean_real,mean_imag,std,snr_db,gamma\n"));
    assert_eq!(envelope.lines().count(), 102);
}

#[test]
fn config_file_layers_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# capsule\nn_steps = 4\ncorrector_steps = 2\n").unwrap();
    let data = dataset(dir.path(), 1);
    let noisy = data.join("noisy/item_0000.wav");
    let clean = data.join("clean/item_0000.wav");
    let o = dir.path().join("o.wav");
    let out = ouve(&["--config", s(&cfg), "enhance", s(&noisy), s(&o), "--oracle-x0", s(&clean)]);
    assert!(stdout(&out).contains("nfe=12"), "{}", stdout(&out));
    let out = ouve(&["--config", s(&cfg), "--corrector-steps", "0", "enhance", s(&noisy), s(&o), "--oracle-x0", s(&clean)]);
    assert!(stdout(&out).contains("nfe=4"), "{}", stdout(&out));
    let out = ouve(&["--config", s(&cfg), "--sampler", "ode", "--atol", "1e-1", "--rtol", "1e-1", "enhance", s(&noisy), s(&o), "--oracle-x0", s(&clean)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("sampler=ode"), "{}", stdout(&out));
}
