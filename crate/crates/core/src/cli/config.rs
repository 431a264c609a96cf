use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BenchArgs, Cli, CliError, ExportArgs, HeadtrainArgs, IccArgs, MosArgs, ServeArgs, ValidateArgs};
use crate::correlation::PlccMapping;
use crate::session::SessionConfig;
use crate::stats::GroupBy;
use crate::Dimension;

const DEFAULT_OUT: &str = "out";

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mos: MosSection,
    pub icc: IccSection,
    pub bench: BenchSection,
    pub serve: ServeSection,
    pub session: Option<SessionConfig>,
    pub headtrain: HeadtrainSection,
    pub validate: ValidateSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MosSection {
    pub ratings: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub aggregate: Vec<GroupBy>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IccSection {
    pub ratings: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub dimension: Option<Dimension>,
    pub confidence: Option<f64>,
    pub repeat_flag_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub predictions: Option<PathBuf>,
    pub mos: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub trials: Option<usize>,
    pub ratio: Option<(u32, u32)>,
    pub plcc_mapping: Option<PlccMapping>,
    pub breakdown: Option<GroupBy>,
}

/// Shared by `serve` and `export`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub manifest: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadtrainSection {
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub manifest: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub predictions: Vec<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Globals {
    pub seed: Option<u64>,
    pub out: PathBuf,
}

impl Globals {
    pub(crate) fn resolve(cli: &Cli, file: &FileConfig) -> Self {
        Self {
            seed: cli.seed.or(file.seed),
            out: cli
                .out
                .clone()
                .or_else(|| file.out.clone())
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        }
    }
}

fn required(value: Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    value.ok_or_else(|| CliError::Validation(format!("missing --{what} (flag or config entry)")))
}

fn log_resolved<T: Serialize>(command: &str, resolved: &T) {
    match serde_json::to_string(resolved) {
        Ok(json) => log::info!("{command} config: {json}"),
        Err(e) => log::warn!("cannot serialize {command} config: {e}"),
    }
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct MosRun {
    pub ratings: PathBuf,
    pub manifest: PathBuf,
    pub aggregate: Vec<GroupBy>,
    pub out: PathBuf,
}

pub(crate) fn resolve_mos(a: MosArgs, file: &FileConfig, g: &Globals) -> Result<MosRun, CliError> {
    let f = &file.mos;
    let run = MosRun {
        ratings: required(a.ratings.or_else(|| f.ratings.clone()), "ratings")?,
        manifest: required(a.manifest.or_else(|| f.manifest.clone()), "manifest")?,
        aggregate: if a.aggregate.is_empty() {
            f.aggregate.clone()
        } else {
            a.aggregate
        },
        out: g.out.clone(),
    };
    log_resolved("mos", &run);
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct IccRun {
    pub ratings: PathBuf,
    pub manifest: PathBuf,
    pub dimensions: Vec<Dimension>,
    pub confidence: f64,
    pub repeat_flag_threshold: f64,
    pub out: PathBuf,
}

pub(crate) fn resolve_icc(a: IccArgs, file: &FileConfig, g: &Globals) -> Result<IccRun, CliError> {
    let f = &file.icc;
    let dimension = a.dimension.or(f.dimension);
    let run = IccRun {
        ratings: required(a.ratings.or_else(|| f.ratings.clone()), "ratings")?,
        manifest: required(a.manifest.or_else(|| f.manifest.clone()), "manifest")?,
        dimensions: dimension.map_or(Dimension::ALL.to_vec(), |d| vec![d]),
        confidence: a.confidence.or(f.confidence).unwrap_or(0.95),
        repeat_flag_threshold: a
            .repeat_flag_threshold
            .or(f.repeat_flag_threshold)
            .unwrap_or(SessionConfig::default().repeat_flag_threshold),
        out: g.out.clone(),
    };
    if !(run.confidence > 0.0 && run.confidence < 1.0) {
        return Err(CliError::Validation(format!(
            "confidence {} outside (0, 1)",
            run.confidence
        )));
    }
    log_resolved("icc", &run);
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct BenchRun {
    pub predictions: PathBuf,
    pub mos: PathBuf,
    pub manifest: Option<PathBuf>,
    pub trials: usize,
    pub ratio: (u32, u32),
    pub plcc_mapping: PlccMapping,
    pub breakdown: Option<GroupBy>,
    pub seed: u64,
    pub out: PathBuf,
}

pub(crate) fn resolve_bench(a: BenchArgs, file: &FileConfig, g: &Globals) -> Result<BenchRun, CliError> {
    let f = &file.bench;
    let defaults = crate::harness::BenchConfig::default();
    let manifest = a.manifest.or_else(|| f.manifest.clone());
    let breakdown = a
        .breakdown
        .or(f.breakdown)
        .or(manifest.as_ref().map(|_| GroupBy::Category));
    if breakdown.is_some() && manifest.is_none() {
        return Err(CliError::Validation("--breakdown needs --manifest".into()));
    }
    let run = BenchRun {
        predictions: required(a.predictions.or_else(|| f.predictions.clone()), "predictions")?,
        mos: required(a.mos.or_else(|| f.mos.clone()), "mos")?,
        manifest,
        trials: a.trials.or(f.trials).unwrap_or(defaults.n_trials),
        ratio: a.ratio.or(f.ratio).unwrap_or(defaults.ratio),
        plcc_mapping: a.plcc_mapping.or(f.plcc_mapping).unwrap_or(defaults.plcc_mapping),
        breakdown,
        seed: g.seed.unwrap_or(defaults.master_seed),
        out: g.out.clone(),
    };
    log_resolved("bench", &run);
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct SessionRun {
    pub manifest: PathBuf,
    pub calibration: PathBuf,
    pub log: PathBuf,
    pub session: SessionConfig,
    pub out: PathBuf,
}

fn resolve_session_run(
    manifest: Option<PathBuf>,
    calibration: Option<PathBuf>,
    log: Option<PathBuf>,
    file: &FileConfig,
    g: &Globals,
) -> Result<SessionRun, CliError> {
    let f = &file.serve;
    let mut session = file.session.clone().unwrap_or_default();
    if let Some(seed) = g.seed {
        session.rng_seed = seed;
    }
    session.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(SessionRun {
        manifest: required(manifest.or_else(|| f.manifest.clone()), "manifest")?,
        calibration: required(calibration.or_else(|| f.calibration.clone()), "calibration")?,
        log: required(log.or_else(|| f.log.clone()), "log")?,
        session,
        out: g.out.clone(),
    })
}

pub(crate) fn resolve_serve(a: ServeArgs, file: &FileConfig, g: &Globals) -> Result<SessionRun, CliError> {
    let run = resolve_session_run(a.manifest, a.calibration, a.log, file, g)?;
    log_resolved("serve", &run);
    Ok(run)
}

pub(crate) fn resolve_export(a: ExportArgs, file: &FileConfig, g: &Globals) -> Result<SessionRun, CliError> {
    let run = resolve_session_run(a.manifest, a.calibration, a.log, file, g)?;
    log_resolved("export", &run);
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct HeadtrainRun {
    pub spec_path: PathBuf,
    pub seed_override: Option<u64>,
    pub out: PathBuf,
}

pub(crate) fn resolve_headtrain(a: HeadtrainArgs, file: &FileConfig, g: &Globals) -> Result<HeadtrainRun, CliError> {
    let run = HeadtrainRun {
        spec_path: required(a.spec.or_else(|| file.headtrain.spec.clone()), "spec")?,
        seed_override: g.seed,
        out: g.out.clone(),
    };
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct ValidateRun {
    pub manifest: PathBuf,
    pub ratings: Option<PathBuf>,
    pub predictions: Vec<PathBuf>,
}

pub(crate) fn resolve_validate(a: ValidateArgs, file: &FileConfig) -> Result<ValidateRun, CliError> {
    let f = &file.validate;
    let run = ValidateRun {
        manifest: required(a.manifest.or_else(|| f.manifest.clone()), "manifest")?,
        ratings: a.ratings.or_else(|| f.ratings.clone()),
        predictions: if a.predictions.is_empty() {
            f.predictions.clone()
        } else {
            a.predictions
        },
    };
    log_resolved("validate", &run);
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("editqa").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let file: FileConfig = toml::from_str(
            "seed = 5\nout = \"from_file\"\n[bench]\npredictions = \"p\"\nmos = \"m.csv\"\ntrials = 3\n",
        )
        .unwrap();
        let cli = parse(&["--seed", "9", "bench", "--trials", "7"]);
        let g = Globals::resolve(&cli, &file);
        let super::super::Command::Bench(a) = cli.command else {
            panic!()
        };
        let run = resolve_bench(a, &file, &g).unwrap();
        assert_eq!((run.seed, run.trials, run.ratio), (9, 7, (4, 1)));
        assert_eq!(run.out, PathBuf::from("from_file"));
        assert_eq!(run.predictions, PathBuf::from("p"));
        assert_eq!(run.plcc_mapping, PlccMapping::Linear);
        assert!(run.breakdown.is_none());
    }

    #[test]
    fn missing_inputs_are_validation_errors() {
        let cli = parse(&["mos"]);
        let file = FileConfig::default();
        let g = Globals::resolve(&cli, &file);
        let super::super::Command::Mos(a) = cli.command else {
            panic!()
        };
        assert!(matches!(resolve_mos(a, &file, &g), Err(CliError::Validation(_))));
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
    }

    #[test]
    fn session_section_and_seed() {
        let file: FileConfig = toml::from_str(
            "[serve]\nmanifest = \"m.json\"\ncalibration = \"c.json\"\nlog = \"s.jsonl\"\n[session]\nhidden_repeats = 10\n",
        )
        .unwrap();
        let cli = parse(&["--seed", "3", "serve"]);
        let g = Globals::resolve(&cli, &file);
        let super::super::Command::Serve(a) = cli.command else {
            panic!()
        };
        let run = resolve_serve(a, &file, &g).unwrap();
        assert_eq!(run.session.hidden_repeats, 10);
        assert_eq!(run.session.presentations_per_session, 480);
        assert_eq!(run.session.rng_seed, 3);
    }
}
