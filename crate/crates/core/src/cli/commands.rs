use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::config::{BenchRun, HeadtrainRun, IccRun, MosRun, SessionRun, ValidateRun};
use super::CliError;
use crate::harness::{emit_report, group_breakdown, run_benchmark, BenchConfig, HarnessError, ReportFormat};
use crate::head::{self, HeadError, SyntheticSpec};
use crate::manifest::{
    ingest_ratings, load_manifest, read_mos, read_predictions, write_mos, DatasetManifest, ManifestError, Predictions,
    RatingsError, TableError,
};
use crate::session::{server, CalibrationReference, SessionError, SessionStore};
use crate::stats::{aggregate_scores, compute_mos_screened, icc_csv, icc_table, icc_two_way, GroupBy, StatsError};
use crate::Dimension;

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<RatingsError> for CliError {
    fn from(e: RatingsError) -> Self {
        match e {
            RatingsError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        match e {
            TableError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<HeadError> for CliError {
    fn from(e: HeadError) -> Self {
        match e {
            HeadError::NonFiniteLoss { step } => CliError::NonFiniteLoss(step),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn group_name(by: GroupBy) -> &'static str {
    match by {
        GroupBy::Model => "model",
        GroupBy::Category => "category",
        GroupBy::ModelCategory => "model_category",
    }
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

pub(crate) fn mos(run: MosRun) -> Result<(), CliError> {
    let manifest = load_manifest(&run.manifest)?;
    let ingested = ingest_ratings(&run.ratings, &manifest)?;
    let mut entries = Vec::new();
    let mut screening = serde_json::Map::new();
    for d in Dimension::ALL {
        let matrix = ingested.matrix(d);
        if matrix.n_items() == 0 {
            log::warn!("no {d} ratings");
            continue;
        }
        let report = compute_mos_screened(matrix)?;
        log::info!(
            "{d}: {} items, {} subjects, excluded {:?}, {} MOS outside [0, 100]",
            report.entries.len(),
            matrix.n_subjects(),
            report.excluded_subjects,
            report.out_of_range
        );
        screening.insert(
            d.as_str().into(),
            serde_json::json!({
                "items": report.entries.len(),
                "subjects": matrix.n_subjects(),
                "excluded_subjects": report.excluded_subjects,
                "out_of_range": report.out_of_range,
            }),
        );
        entries.extend(report.entries);
    }
    out_dir(&run.out)?;
    let mos_path = run.out.join("mos.csv");
    write_mos(create(&mos_path)?, &entries)?;
    log::info!("wrote {}", mos_path.display());
    let screening = serde_json::to_string_pretty(&screening).expect("json values") + "\n";
    write_file(&run.out.join("mos_screening.json"), &screening)?;
    for by in run.aggregate {
        let stats = aggregate_scores(&entries, &manifest, by)?;
        let rows = stats.iter().map(|s| {
            vec![
                s.model.clone().unwrap_or_default(),
                s.category.map(|c| c.as_str().to_string()).unwrap_or_default(),
                s.dimension.as_str().to_string(),
                s.count.to_string(),
                s.mean.to_string(),
                s.stddev.to_string(),
            ]
        });
        let text = csv_text(&["model", "category", "dimension", "count", "mean", "stddev"], rows);
        write_file(&run.out.join(format!("aggregate_{}.csv", group_name(by))), &text)?;
    }
    Ok(())
}

pub(crate) fn icc(run: IccRun) -> Result<(), CliError> {
    let manifest = load_manifest(&run.manifest)?;
    let ingested = ingest_ratings(&run.ratings, &manifest)?;

    // subjects with unreliable hidden repeats on any dimension
    let mut flagged: Vec<String> = Vec::new();
    for m in ingested.matrices() {
        for (s, dev) in m.repeat_deviation().into_iter().enumerate() {
            let id = &m.subject_ids()[s];
            if dev.is_some_and(|v| v > run.repeat_flag_threshold) && !flagged.contains(id) {
                log::warn!(
                    "excluding subject `{id}`: mean repeat deviation {:.2} on {}",
                    dev.unwrap_or(0.0),
                    m.dimension()
                );
                flagged.push(id.clone());
            }
        }
    }

    let mut rows = Vec::new();
    for &d in &run.dimensions {
        let matrix = ingested.matrix(d);
        let mut excluded = flagged.clone();
        for s in 0..matrix.n_subjects() {
            let values: Vec<f64> = matrix.subject_values(s).collect();
            let degenerate = values.len() < 2 || values.iter().all(|&v| v == values[0]);
            if degenerate && !excluded.contains(&matrix.subject_ids()[s]) {
                log::warn!("excluding degenerate subject `{}` from {d}", matrix.subject_ids()[s]);
                excluded.push(matrix.subject_ids()[s].clone());
            }
        }
        let kept = matrix.without_subjects(&excluded);
        let grid = match kept.complete_rows() {
            Ok(g) => g,
            Err(StatsError::IncompleteGrid(missing)) => {
                let list: Vec<String> = missing.iter().map(|(i, s)| format!("({i}, {s})")).collect();
                return Err(CliError::Validation(format!(
                    "{d}: incomplete grid, {} missing cells: {}",
                    missing.len(),
                    list.join(" ")
                )));
            }
            Err(e) => return Err(e.into()),
        };
        let result = icc_two_way(&grid, run.confidence).map_err(|e| CliError::Validation(format!("{d}: {e}")))?;
        rows.push((d, result));
    }
    out_dir(&run.out)?;
    let table = icc_table(&rows);
    print!("{table}");
    write_file(&run.out.join("icc.txt"), &table)?;
    write_file(&run.out.join("icc.csv"), &icc_csv(&rows))?;
    Ok(())
}

fn load_prediction_dir(dir: &Path) -> Result<BTreeMap<String, Predictions>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths {
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let preds = read_predictions(open(&p)?).map_err(|e| match e {
            TableError::Io(_) => io_err(&p, e),
            _ => CliError::Validation(format!("{}: {e}", p.display())),
        })?;
        out.insert(name, preds);
    }
    if out.is_empty() {
        return Err(CliError::Validation(format!(
            "no prediction files (*.csv) in {}",
            dir.display()
        )));
    }
    Ok(out)
}

pub(crate) fn bench(run: BenchRun) -> Result<(), CliError> {
    let mos = read_mos(open(&run.mos)?)?;
    let sets = load_prediction_dir(&run.predictions)?;

    let incomplete: Vec<String> = sets
        .iter()
        .filter(|(_, p)| mos.iter().any(|e| p.get(&e.item_id, e.dimension).is_none()))
        .map(|(name, p)| {
            let n = mos.iter().filter(|e| p.get(&e.item_id, e.dimension).is_none()).count();
            format!("{name} ({n} missing)")
        })
        .collect();
    if !incomplete.is_empty() {
        return Err(CliError::Validation(format!(
            "methods with missing predictions: {}",
            incomplete.join(", ")
        )));
    }

    let config = BenchConfig {
        ratio: run.ratio,
        n_trials: run.trials,
        master_seed: run.seed,
        plcc_mapping: run.plcc_mapping,
    };
    let reports = run_benchmark(&sets, &mos, &config)?;
    out_dir(&run.out)?;
    let table = emit_report(&reports, ReportFormat::Table);
    print!("{table}");
    write_file(
        &run.out.join("leaderboard.csv"),
        &emit_report(&reports, ReportFormat::Delimited),
    )?;
    write_file(&run.out.join("leaderboard.txt"), &table)?;

    if let (Some(by), Some(path)) = (run.breakdown, &run.manifest) {
        let manifest = load_manifest(path)?;
        let groups = group_breakdown(&sets, &mos, &manifest, by, &config)?;
        let rows = groups.iter().map(|g| {
            vec![
                g.method_name.clone(),
                g.group.clone(),
                g.dimension.as_str().to_string(),
                format!("{:.4}", g.metrics.srcc),
                format!("{:.4}", g.metrics.plcc),
                format!("{:.4}", g.metrics.krcc),
                g.trials_used.to_string(),
            ]
        });
        let text = csv_text(
            &["method", "group", "dimension", "srcc", "plcc", "krcc", "trials_used"],
            rows,
        );
        write_file(&run.out.join(format!("breakdown_{}.csv", group_name(by))), &text)?;
    }
    Ok(())
}

fn open_store_inputs(run: &SessionRun) -> Result<(Arc<DatasetManifest>, CalibrationReference), CliError> {
    let manifest = Arc::new(load_manifest(&run.manifest)?);
    let reference = CalibrationReference::load(&run.calibration)?;
    Ok((manifest, reference))
}

pub(crate) fn serve(run: SessionRun) -> Result<(), CliError> {
    let (manifest, reference) = open_store_inputs(&run)?;
    let store = SessionStore::open(run.session.clone(), manifest, reference, Some(&run.log))?;
    let addr = std::env::var(server::LISTEN_ENV).unwrap_or_else(|_| server::DEFAULT_LISTEN.to_string());
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| CliError::Bind {
            addr: addr.clone(),
            message: e.to_string(),
        })?;
        let local = listener.local_addr().map_err(|e| CliError::Bind {
            addr: addr.clone(),
            message: e.to_string(),
        })?;
        log::info!("listening on {local}");
        // scripts wait for this line to learn the bound port
        println!("listening on {local}");
        let _ = std::io::stdout().flush();
        server::serve(listener, Arc::new(Mutex::new(store)), server::shutdown_signal())
            .await
            .map_err(|e| CliError::Io(format!("server: {e}")))
    })
}

pub(crate) fn export(run: SessionRun) -> Result<(), CliError> {
    let (manifest, reference) = open_store_inputs(&run)?;
    let store = SessionStore::open_read_only(run.session.clone(), manifest, reference, &run.log)?;
    out_dir(&run.out)?;
    let path = run.out.join("ratings.csv");
    store.export(create(&path)?)?;
    log::info!("wrote {} ({} ratings)", path.display(), store.export_records().len());
    Ok(())
}

pub(crate) fn headtrain(run: HeadtrainRun) -> Result<(), CliError> {
    let text = fs::read_to_string(&run.spec_path).map_err(|e| io_err(&run.spec_path, e))?;
    let mut spec = SyntheticSpec::from_toml(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", run.spec_path.display())))?;
    if let Some(seed) = run.seed_override {
        spec.seed = seed;
        spec.train.seed = seed;
    }
    match serde_json::to_string(&spec) {
        Ok(json) => log::info!("headtrain config: {json}"),
        Err(e) => log::warn!("cannot serialize headtrain config: {e}"),
    }
    let data = head::generate_synthetic(&spec)?;
    let outcome = head::train(&spec.train, &data.samples, data.student)?;
    out_dir(&run.out)?;
    let trace_path = run.out.join("loss_trace.csv");
    head::write_loss_trace(&trace_path, &outcome.trace).map_err(|e| io_err(&trace_path, e))?;
    let params_path = run.out.join("head_params.bin");
    head::write_params(&params_path, &outcome.model).map_err(|e| io_err(&params_path, e))?;
    let summary = serde_json::json!({
        "steps": outcome.trace.len(),
        "initial_loss": outcome.initial_loss,
        "final_loss": outcome.final_loss,
        "loss_ratio": outcome.final_loss / outcome.initial_loss,
    });
    write_file(
        &run.out.join("summary.json"),
        &(serde_json::to_string_pretty(&summary).expect("json") + "\n"),
    )?;
    log::info!(
        "{} steps, mean L1 {:.6} -> {:.6}",
        outcome.trace.len(),
        outcome.initial_loss,
        outcome.final_loss
    );
    Ok(())
}

pub(crate) fn validate(run: ValidateRun) -> Result<(), CliError> {
    let manifest = load_manifest(&run.manifest)?;
    log::info!(
        "manifest ok: {} items, {} prompts, {} models",
        manifest.items.len(),
        manifest.prompts.len(),
        manifest.models.len()
    );
    if let Some(path) = &run.ratings {
        let ingested = ingest_ratings(path, &manifest)?;
        log::info!("ratings ok: {} records", ingested.records.len());
    }
    let index = manifest.index();
    for path in &run.predictions {
        let preds = read_predictions(open(path)?).map_err(|e| match e {
            TableError::Io(_) => io_err(path, e),
            _ => CliError::Validation(format!("{}: {e}", path.display())),
        })?;
        let unknown: Vec<&str> = preds
            .sorted()
            .into_iter()
            .map(|(_, id, _)| id)
            .filter(|id| index.item(id).is_none())
            .collect();
        if let Some(first) = unknown.first() {
            return Err(CliError::Validation(format!(
                "{}: {} predictions for unknown items (first: {first})",
                path.display(),
                unknown.len()
            )));
        }
        log::info!("predictions ok: {} ({} scores)", path.display(), preds.len());
    }
    println!("ok");
    Ok(())
}
