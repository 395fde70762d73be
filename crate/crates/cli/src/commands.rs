use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use uavflow::loadgen::{replay_trace, LoadgenError, Pacing, ReplayConfig, Sink};
use uavflow::model::ModelError;
use uavflow::scenario::{emit_scenario, parse_scenario, ScenarioError};
use uavflow::sim::trace::{TraceError, TraceReader, TraceWriter};
use uavflow::sim::{
    assign_uavs, compare_forecast, expected_segment_counts, generate_events, SimError,
    TraceAccumulator,
};
use uavflow::{preset, ScenarioConfig, SolvedModel};

use crate::output::{self, ComparisonDocument, ForecastDocument, RunManifest, SummaryDocument};
use crate::{Cli, CliError, Command};

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParams(v) => Self::Invalid(v),
            e => Self::invalid(e),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Validation(v) => Self::Invalid(v),
            e @ ScenarioError::Parse { .. } => Self::invalid(e),
            e => Self::runtime(e),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Model(e) => e.into(),
            e @ (SimError::Capacity { .. } | SimError::Inconsistent(_)) => Self::invalid(e),
            e => Self::runtime(e),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            e @ TraceError::Format { .. } => Self::invalid(e),
            e => Self::runtime(e),
        }
    }
}

impl From<LoadgenError> for CliError {
    fn from(e: LoadgenError) -> Self {
        match e {
            LoadgenError::Trace(e) => e.into(),
            e @ (LoadgenError::BadSpeedup(_) | LoadgenError::NotSorted { .. }) => Self::invalid(e),
            e => Self::runtime(e),
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Loaded {
    config: ScenarioConfig,
    digest: String,
}

fn load(cli: &Cli, path: &Path) -> Result<Loaded, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::invalid(format!("{}: not UTF-8", path.display())))?;
    let mut config = parse_scenario(text)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(Loaded {
        config,
        digest: sha256_hex(&bytes),
    })
}

fn out_dir(dir: &Path) -> Result<&Path, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

struct Run {
    started: Instant,
}

impl Run {
    fn manifest(&self, digest: Option<String>, seed: Option<u64>, outputs: Vec<PathBuf>) -> RunManifest {
        RunManifest {
            scenario_digest: digest,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: std::env::args().collect::<Vec<_>>().join(" "),
            outputs,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let run = Run {
        started: Instant::now(),
    };
    match &cli.command {
        Command::Forecast { scenario } => forecast(cli, &run, scenario),
        Command::Simulate { scenario, trace } => simulate(cli, &run, scenario, trace),
        Command::Compare { scenario, summary } => compare(cli, &run, scenario, summary),
        Command::Replay {
            trace,
            target,
            speedup,
            as_fast_as_possible: _,
            max_lateness_ms,
            shard,
        } => {
            let mut cfg = ReplayConfig::new(
                *target,
                speedup.map_or(Pacing::AsFastAsPossible, Pacing::Speedup),
            );
            cfg.max_lateness = Duration::from_millis(*max_lateness_ms);
            cfg.shard_by_subgroup = *shard;
            replay(cli, &run, trace, &cfg)
        }
        Command::Sink { bind, duration } => sink(cli, &run, *bind, *duration),
        Command::Preset { which } => {
            let mut config = preset(*which);
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            let text = emit_scenario(&config);
            match &cli.out {
                None => print!("{text}"),
                Some(dir) => {
                    let dir = out_dir(dir)?;
                    let path = dir.join(format!("preset-{which}.json"));
                    output::write_text(&path, &text)?;
                    run.manifest(Some(sha256_hex(text.as_bytes())), Some(config.seed), vec![path])
                        .write(dir)?;
                }
            }
            Ok(())
        }
    }
}

fn forecast(cli: &Cli, run: &Run, path: &Path) -> Result<(), CliError> {
    let Loaded { config, digest } = load(cli, path)?;
    let model = SolvedModel::solve(&config.model)?;
    let f = model.forecast(&config.model, config.n_uavs, config.duration_s)?;
    let doc = ForecastDocument::new(&digest, &config.name, &model, &f);
    let csv = output::forecast_csv(&model, &f);

    if cli.json {
        print!("{}", output::to_json(&doc));
    } else if cli.csv {
        print!("{csv}");
    } else {
        print!("{}", output::forecast_table(&config.name, &model, &f));
    }
    if let Some(dir) = &cli.out {
        let dir = out_dir(dir)?;
        let json_path = dir.join("forecast.json");
        let csv_path = dir.join("forecast.csv");
        output::write_json(&json_path, &doc)?;
        output::write_text(&csv_path, &csv)?;
        run.manifest(Some(digest), Some(config.seed), vec![json_path, csv_path])
            .write(dir)?;
    }
    Ok(())
}

fn simulate(cli: &Cli, run: &Run, scenario: &Path, trace: &Path) -> Result<(), CliError> {
    let Loaded { config, digest } = load(cli, scenario)?;
    let model = SolvedModel::solve(&config.model)?;
    let assignment = assign_uavs(config.n_uavs, &model.partition);
    let events = generate_events(&config, &model.partition, &model.rates, &assignment)?;

    let dir = match &cli.out {
        Some(d) => d.clone(),
        None => match trace.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        },
    };
    let dir = out_dir(&dir)?;

    let mut writer = TraceWriter::create(trace)?;
    let mut acc = TraceAccumulator::new();
    for e in events {
        acc.push(&e)?;
        writer.write(&e)?;
    }
    writer.finish()?;
    let summary = acc.finish()?;

    let doc = SummaryDocument {
        scenario_digest: digest.clone(),
        scenario_name: config.name.clone(),
        seed: config.seed,
        n_uavs: config.n_uavs,
        duration_s: config.duration_s,
        trace: trace.to_path_buf(),
        summary,
    };
    let summary_path = dir.join("summary.json");
    output::write_json(&summary_path, &doc)?;
    run.manifest(Some(digest), Some(config.seed), vec![trace.to_path_buf(), summary_path])
        .write(dir)?;

    if cli.json {
        print!("{}", output::to_json(&doc));
    } else if cli.csv {
        print!("{}", output::summary_csv(&doc.summary));
    } else {
        println!("wrote {} events to {}", doc.summary.total_count, trace.display());
        print!("{}", output::summary_table(&doc.summary));
    }
    Ok(())
}

fn compare(cli: &Cli, run: &Run, scenario: &Path, summary: &Path) -> Result<(), CliError> {
    let Loaded { config, digest } = load(cli, scenario)?;
    let text = fs::read_to_string(summary)
        .map_err(|e| CliError::runtime(format!("{}: {e}", summary.display())))?;
    let doc: SummaryDocument = serde_json::from_str(&text)
        .map_err(|e| CliError::invalid(format!("{}: {e}", summary.display())))?;
    if doc.scenario_digest != digest {
        return Err(CliError::invalid(format!(
            "digest mismatch: {} was produced from a scenario with sha256 {}, but {} has sha256 {}",
            summary.display(),
            doc.scenario_digest,
            scenario.display(),
            digest
        )));
    }
    if !doc.summary.is_consistent() {
        return Err(CliError::invalid(format!(
            "{}: totals do not match the per-segment counts",
            summary.display()
        )));
    }

    let model = SolvedModel::solve(&config.model)?;
    let f = model.forecast(&config.model, config.n_uavs, config.duration_s)?;
    let assignment = assign_uavs(config.n_uavs, &model.partition);
    let expected = expected_segment_counts(&assignment, &model.rates, config.duration_s);
    let report = compare_forecast(&f, &expected, &doc.summary);
    let out = ComparisonDocument::new(&digest, doc.seed, &report);
    let csv = output::comparison_csv(&report);

    if cli.json {
        print!("{}", output::to_json(&out));
    } else if cli.csv {
        print!("{csv}");
    } else {
        print!("{}", output::comparison_table(&report));
    }
    if let Some(dir) = &cli.out {
        let dir = out_dir(dir)?;
        let json_path = dir.join("comparison.json");
        let csv_path = dir.join("comparison.csv");
        output::write_json(&json_path, &out)?;
        output::write_text(&csv_path, &csv)?;
        run.manifest(Some(digest.clone()), Some(doc.seed), vec![json_path, csv_path])
            .write(dir)?;
    }
    Ok(())
}

fn replay(cli: &Cli, run: &Run, trace: &Path, cfg: &ReplayConfig) -> Result<(), CliError> {
    let reader = TraceReader::open(trace)?;
    let stats = replay_trace(reader, cfg)?;
    print!("{}", output::to_json(&stats));
    if let Some(dir) = &cli.out {
        let dir = out_dir(dir)?;
        let path = dir.join("replay.json");
        output::write_json(&path, &stats)?;
        run.manifest(None, None, vec![path]).write(dir)?;
    }
    Ok(())
}

fn sink(cli: &Cli, run: &Run, bind: std::net::SocketAddr, duration_s: f64) -> Result<(), CliError> {
    if !(duration_s.is_finite() && duration_s >= 0.0) {
        return Err(CliError::invalid(format!(
            "--duration must be a non-negative number of seconds, got {duration_s}"
        )));
    }
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    // Ctrl-C ends the listening window early; the report is still printed.
    let _ = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed));

    let sink = Sink::bind(bind)?;
    eprintln!("listening on {}", sink.local_addr().map_err(CliError::runtime)?);
    let report = sink.run(Duration::from_secs_f64(duration_s), Some(&stop))?;
    print!("{}", output::to_json(&report));
    if let Some(dir) = &cli.out {
        let dir = out_dir(dir)?;
        let path = dir.join("sink.json");
        output::write_json(&path, &report)?;
        run.manifest(None, None, vec![path]).write(dir)?;
    }
    Ok(())
}
