mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use editqa::manifest::{read_mos, write_predictions, Predictions};
use editqa::seed;
use rand_distr::{Distribution, Normal};
use tempfile::TempDir;

fn editqa(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_editqa"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn editqa")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

struct Fixture {
    dir: TempDir,
    manifest: PathBuf,
    ratings: PathBuf,
}

fn fixture(n_items: usize, subjects: usize) -> Fixture {
    let dir = TempDir::new().unwrap();
    let (m, manifest) = common::write_manifest(dir.path(), n_items);
    let records = common::full_ratings(&m, subjects, 6.0, 11);
    let ratings = common::write_ratings_file(dir.path(), &records);
    Fixture { dir, manifest, ratings }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn mos_writes_outputs_and_is_idempotent() {
    let f = fixture(36, 5);
    let run = |out: &str| {
        let o = editqa(
            &[
                "mos",
                "--ratings",
                p(&f.ratings),
                "--manifest",
                p(&f.manifest),
                "--aggregate",
                "model",
                "--aggregate",
                "category",
                "--out",
                out,
            ],
            f.dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        read_dir_bytes(&f.dir.path().join(out))
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "aggregate_category.csv",
            "aggregate_model.csv",
            "mos.csv",
            "mos_screening.json"
        ]
    );
    let mos = read_mos(fs::File::open(f.dir.path().join("a/mos.csv")).unwrap()).unwrap();
    assert_eq!(mos.len(), 36 * 3);
    assert!(mos.iter().all(|e| e.rater_count == 5));
}

#[test]
fn mos_names_degenerate_subject_and_still_succeeds() {
    let dir = TempDir::new().unwrap();
    let (m, manifest) = common::write_manifest(dir.path(), 12);
    let mut records = common::full_ratings(&m, 4, 6.0, 3);
    for r in records.iter_mut().filter(|r| r.subject_id == "s02") {
        r.value = 50.0;
    }
    let ratings = common::write_ratings_file(dir.path(), &records);
    let o = editqa(
        &[
            "mos",
            "--ratings",
            p(&ratings),
            "--manifest",
            p(&manifest),
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let screening: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/mos_screening.json")).unwrap()).unwrap();
    assert_eq!(
        screening["video_quality"]["excluded_subjects"],
        serde_json::json!(["s02"])
    );
    let mos = read_mos(fs::File::open(dir.path().join("o/mos.csv")).unwrap()).unwrap();
    assert!(mos.iter().all(|e| e.rater_count == 3));
}

#[test]
fn missing_ratings_file_is_io_error() {
    let f = fixture(12, 3);
    let o = editqa(
        &["mos", "--ratings", "nope.csv", "--manifest", p(&f.manifest)],
        f.dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unknown_item_in_ratings_is_validation_error() {
    let f = fixture(12, 3);
    let mut text = fs::read_to_string(&f.ratings).unwrap();
    text.push_str("s00,ghost,video_quality,50,t,99,0\n");
    fs::write(&f.ratings, text).unwrap();
    let o = editqa(
        &["mos", "--ratings", p(&f.ratings), "--manifest", p(&f.manifest)],
        f.dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ghost"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(editqa(&["mos", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(editqa(&["frobnicate"], dir.path()).status.code(), Some(2));
    // required input missing from flags and config
    assert_eq!(editqa(&["mos"], dir.path()).status.code(), Some(2));
}

#[test]
fn icc_prints_reliability_table() {
    let f = fixture(25, 6);
    let o = editqa(
        &[
            "icc",
            "--ratings",
            p(&f.ratings),
            "--manifest",
            p(&f.manifest),
            "--out",
            "o",
        ],
        f.dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    for col in [
        "ICC2",
        "95% CI (ICC2)",
        "ICC2k",
        "95% CI (ICC2k)",
        "ICC2 Level*",
        "MOS Reliability (ICC2k)",
    ] {
        assert!(table.contains(col), "missing column {col}:\n{table}");
    }
    assert_eq!(fs::read_to_string(f.dir.path().join("o/icc.txt")).unwrap(), table);
    let csv = fs::read_to_string(f.dir.path().join("o/icc.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn icc_incomplete_grid_lists_missing_cells() {
    let dir = TempDir::new().unwrap();
    let (m, manifest) = common::write_manifest(dir.path(), 12);
    let mut records = common::full_ratings(&m, 4, 6.0, 5);
    records.retain(|r| !(r.subject_id == "s01" && r.item_id == "item00003"));
    let ratings = common::write_ratings_file(dir.path(), &records);
    let o = editqa(
        &[
            "icc",
            "--ratings",
            p(&ratings),
            "--manifest",
            p(&manifest),
            "--dimension",
            "video_quality",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("item00003") && err.contains("s01"), "{err}");
    assert!(!dir.path().join("out").exists());
}

fn write_preds(dir: &Path, name: &str, mos: &[editqa::stats::MosEntry], sigma: f64, master: u64, skip: usize) {
    let mut rng = seed::rng(seed::derive_keyed(master, name, 0));
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut preds = Predictions::new();
    for e in mos.iter().skip(skip) {
        preds.insert(e.item_id.clone(), e.dimension, e.mos + noise.sample(&mut rng));
    }
    write_predictions(fs::File::create(dir.join(format!("{name}.csv"))).unwrap(), &preds).unwrap();
}

#[test]
fn bench_ranks_cleaner_predictor_first_and_reruns_identically() {
    let f = fixture(60, 5);
    let o = editqa(
        &[
            "mos",
            "--ratings",
            p(&f.ratings),
            "--manifest",
            p(&f.manifest),
            "--out",
            "m",
        ],
        f.dir.path(),
    );
    assert!(o.status.success());
    let mos_path = f.dir.path().join("m/mos.csv");
    let mos = read_mos(fs::File::open(&mos_path).unwrap()).unwrap();
    let preds = f.dir.path().join("preds");
    fs::create_dir(&preds).unwrap();
    write_preds(&preds, "clean", &mos, 0.0, 1, 0);
    write_preds(&preds, "noisy", &mos, 25.0, 1, 0);

    let run = |out: &str| {
        let o = editqa(
            &[
                "bench",
                "--predictions",
                p(&preds),
                "--mos",
                p(&mos_path),
                "--manifest",
                p(&f.manifest),
                "--seed",
                "42",
                "--out",
                out,
            ],
            f.dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        (
            String::from_utf8(o.stdout).unwrap(),
            read_dir_bytes(&f.dir.path().join(out)),
        )
    };
    let (table, a) = run("a");
    let (_, b) = run("b");
    assert_eq!(a, b);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["breakdown_category.csv", "leaderboard.csv", "leaderboard.txt"]);
    let rows = editqa::harness::parse_report_csv(std::str::from_utf8(&a[1].1).unwrap()).unwrap();
    assert_eq!(rows[0].method, "clean");
    assert!(table.contains("clean") && table.contains("noisy"));
}

#[test]
fn bench_lists_methods_with_missing_predictions() {
    let f = fixture(30, 4);
    editqa(
        &[
            "mos",
            "--ratings",
            p(&f.ratings),
            "--manifest",
            p(&f.manifest),
            "--out",
            "m",
        ],
        f.dir.path(),
    );
    let mos_path = f.dir.path().join("m/mos.csv");
    let mos = read_mos(fs::File::open(&mos_path).unwrap()).unwrap();
    let preds = f.dir.path().join("preds");
    fs::create_dir(&preds).unwrap();
    write_preds(&preds, "full", &mos, 1.0, 2, 0);
    write_preds(&preds, "gappy", &mos, 1.0, 2, 3);
    write_preds(&preds, "sparse", &mos, 1.0, 2, 10);
    let o = editqa(
        &["bench", "--predictions", p(&preds), "--mos", p(&mos_path), "--out", "b"],
        f.dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("gappy (3 missing)") && err.contains("sparse (10 missing)") && !err.contains("full"),
        "{err}"
    );
}

#[test]
fn headtrain_meets_target_and_is_seed_stable() {
    let dir = TempDir::new().unwrap();
    let spec = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/headtrain.toml");
    let run = |out: &str| {
        let o = editqa(&["headtrain", "--spec", p(&spec), "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        read_dir_bytes(&dir.path().join(out))
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    let summary: serde_json::Value = serde_json::from_slice(&a[2].1).unwrap();
    assert_eq!(a[2].0, "summary.json");
    assert_eq!(summary["steps"], 200);
    assert!(summary["loss_ratio"].as_f64().unwrap() <= 0.5, "{summary}");
    let trace = String::from_utf8(a[1].1.clone()).unwrap();
    assert_eq!(trace.lines().count(), 201);

    let o = editqa(
        &["headtrain", "--spec", p(&spec), "--seed", "8", "--out", "c"],
        dir.path(),
    );
    assert!(o.status.success());
    assert_ne!(read_dir_bytes(&dir.path().join("c")), a);
}

#[test]
fn headtrain_divergence_exits_5() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        "seed = 1\nhidden_dim = 4\nsamples = 16\nmode = \"teacher\"\n\n[train]\nlearning_rate = 1e300\nwarmup_ratio = 0.0\nmax_steps = 20\n",
    )
    .unwrap();
    let o = editqa(&["headtrain", "--spec", p(&spec)], dir.path());
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn validate_reports_problems() {
    let f = fixture(12, 3);
    let o = editqa(
        &["validate", "--manifest", p(&f.manifest), "--ratings", p(&f.ratings)],
        f.dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "ok\n");

    let mut m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&f.manifest).unwrap()).unwrap();
    m["items"][0]["model"] = "ghost".into();
    let bad = f.dir.path().join("bad.json");
    fs::write(&bad, m.to_string()).unwrap();
    let o = editqa(&["validate", "--manifest", p(&bad)], f.dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ghost"));

    let preds = f.dir.path().join("p.csv");
    fs::write(
        &preds,
        "item_id,dimension,predicted_score\nitem00000,video_quality,1\nzzz,video_quality,2\n",
    )
    .unwrap();
    let o = editqa(
        &["validate", "--manifest", p(&f.manifest), "--predictions", p(&preds)],
        f.dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("zzz"));
    assert!(!f.dir.path().join("out").exists());
}

#[test]
fn config_file_supplies_inputs_and_flags_override() {
    let f = fixture(12, 3);
    let cfg = f.dir.path().join("editqa.toml");
    fs::write(
        &cfg,
        format!(
            "out = \"from_config\"\n\n[mos]\nratings = \"{}\"\nmanifest = \"{}\"\n",
            p(&f.ratings),
            p(&f.manifest)
        ),
    )
    .unwrap();
    let o = editqa(&["--config", p(&cfg), "mos"], f.dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(f.dir.path().join("from_config/mos.csv").exists());
    let o = editqa(&["--config", p(&cfg), "mos", "--out", "from_flag"], f.dir.path());
    assert!(o.status.success());
    assert!(f.dir.path().join("from_flag/mos.csv").exists());

    fs::write(&cfg, "[mos]\nratingz = \"x\"\n").unwrap();
    assert_eq!(
        editqa(&["--config", p(&cfg), "mos"], f.dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn serve_bind_failure_exits_4() {
    let dir = TempDir::new().unwrap();
    let (m, manifest) = common::write_manifest(dir.path(), 600);
    let calibration = common::write_calibration(dir.path(), &common::calibration_reference(&m, 35));
    let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = holder.local_addr().unwrap().to_string();
    let o = Command::new(env!("CARGO_BIN_EXE_editqa"))
        .args([
            "serve",
            "--manifest",
            p(&manifest),
            "--calibration",
            p(&calibration),
            "--log",
            "s.log",
        ])
        .env(editqa::session::server::LISTEN_ENV, &addr)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
