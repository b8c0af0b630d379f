//! `failsynth` command-line driver.
//!
//! Exit codes: 0 success, 1 I/O, 2 usage, 3 schema (config, records, labels),
//! 4 transport (judge unreachable, including verify runs with quarantined
//! candidates), 5 validation.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use failsynth::eval::render_table;
use failsynth::model::{FailureType, Outcome};
use failsynth::pipeline::{
    endpoint_transport, load_calibrations, load_labeled, load_predictions, load_rollouts, manifest_path, read_json,
    write_json, write_stage, ErrorKind, EvalReportFile, Pipeline, PipelineConfig, PipelineError, RecoveryReportFile,
    StageManifest,
};
use failsynth::transport::serve_lines;
use failsynth::verify::semantic::{MockSemantic, SemanticRequest, SemanticResponse};

#[derive(Parser)]
#[command(name = "failsynth", version, about = "Synthesize, verify, label and replay manipulation failures")]
struct Cli {
    /// TOML pipeline configuration; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// HTTP endpoint for the judge used by the subcommand (semantic for verify,
    /// fuzzy-match for evaluate).
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scripted success demos with observations.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// One candidate failure per demo and failure type.
    Perturb {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of failure types.
        #[arg(long, value_delimiter = ',')]
        types: Option<Vec<String>>,
    },
    /// Verifier thresholds from success demos.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the verifiers and keeps candidates that pass all of them.
    Verify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-candidate verifier reports.
        #[arg(long)]
        reports: Option<PathBuf>,
    },
    /// Attaches a serialized fix label to every retained rollout.
    Label {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replays corrections from predictions, or from the stored labels.
    Recover {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Reverse every correction (sanity baseline).
        #[arg(long)]
        flip: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints recovery rates from a `recover` output.
    RecoveryReport {
        #[arg(long)]
        input: PathBuf,
    },
    /// Scores predictions against the labeled dataset.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aligned metric table from one or more `evaluate` outputs.
    Report {
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        /// Text table destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Structured copy of the rows.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// generate, perturb, calibrate, verify, label and recover into one directory.
    Run {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Prints the effective configuration as TOML.
    Config,
    /// Answers semantic requests on stdin/stdout from candidate ground truth.
    ServeSemantic {
        #[arg(long)]
        candidates: PathBuf,
    },
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Io => 1,
        ErrorKind::Schema => 3,
        ErrorKind::Transport => 4,
        ErrorKind::Validation => 5,
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(e) = &cli.endpoint {
        match cli.command {
            Command::Evaluate { .. } => cfg.eval.judge = endpoint_transport(e),
            _ => cfg.semantic.transport = endpoint_transport(e),
        }
    }
    Ok(cfg)
}

fn warn_on_foreign_input(input: &Path, hash: &str) {
    if let Ok(m) = read_json::<StageManifest>(&manifest_path(input)) {
        if m.config_hash != hash {
            log::warn!("{} was produced under config {}, running with {hash}", input.display(), m.config_hash);
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializes")
}

/// Stdout writes that tolerate a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json<T: serde::Serialize>(v: &T) {
    emit(&format!("{}\n", serde_json::to_string_pretty(v).expect("serializes")));
}

fn run(cli: &Cli) -> Result<ExitCode, PipelineError> {
    let cfg = load_config(cli)?;
    if let Command::Config = cli.command {
        cfg.validate()?;
        emit(&cfg.to_toml());
        return Ok(ExitCode::SUCCESS);
    }
    let p = Pipeline::new(cfg)?;
    let h = p.config_hash().to_string();
    match &cli.command {
        Command::Generate { n, out } => {
            let demos = p.generate(*n)?;
            let m = write_stage(out, "generate", &h, &demos, serde_json::json!({ "n": n }))?;
            print_json(&m);
        }
        Command::Perturb { input, out, types } => {
            warn_on_foreign_input(input, &h);
            let types = match types {
                None => p.config().failure_types.clone(),
                Some(names) => names
                    .iter()
                    .map(|n| {
                        FailureType::parse(n.trim())
                            .ok_or_else(|| PipelineError::Config(format!("unknown failure type `{n}`")))
                    })
                    .collect::<Result<_, _>>()?,
            };
            let demos = load_rollouts(input)?;
            let (cands, summary) = p.perturb(&demos, &types)?;
            let m = write_stage(out, "perturb", &h, &cands, json(&summary))?;
            print_json(&m);
        }
        Command::Calibrate { input, out } => {
            warn_on_foreign_input(input, &h);
            let calib = p.calibrate(&load_rollouts(input)?)?;
            write_json(out, &calib)?;
            print_json(&calib);
        }
        Command::Verify {
            input,
            references,
            calibration,
            out,
            reports,
        } => {
            warn_on_foreign_input(input, &h);
            let cands = load_rollouts(input)?;
            let refs = load_rollouts(references)?;
            let calib = load_calibrations(calibration)?;
            let v = p.verify(&cands, &refs, &calib)?;
            let m = write_stage(out, "verify", &h, &v.retained, json(&v.manifest))?;
            if let Some(r) = reports {
                write_stage(r, "verify-reports", &h, &v.reports, serde_json::Value::Null)?;
            }
            print_json(&m);
            if !v.quarantined.is_empty() {
                log::error!("{} candidate(s) quarantined: judge unreachable", v.quarantined.len());
                return Ok(ExitCode::from(exit_code(ErrorKind::Transport)));
            }
        }
        Command::Label { input, out } => {
            warn_on_foreign_input(input, &h);
            let labeled = p.label(&load_rollouts(input)?)?;
            let m = write_stage(out, "label", &h, &labeled, serde_json::Value::Null)?;
            print_json(&m);
        }
        Command::Recover {
            input,
            predictions,
            flip,
            out,
        } => {
            let labeled = load_labeled(input)?;
            let preds = predictions.as_deref().map(load_predictions).transpose()?;
            let (results, rep) = p.recover(&labeled, preds.as_deref(), *flip)?;
            write_stage(out, "recover", &h, &results, json(&rep))?;
            print_json(&rep);
        }
        Command::RecoveryReport { input } => {
            let m: StageManifest = read_json(&manifest_path(input))?;
            let rep: RecoveryReportFile =
                serde_json::from_value(m.details).map_err(|e| PipelineError::Record(e.to_string()))?;
            let rate = |r: &failsynth::recovery::RecoveryReport| r.rate.map_or("n/a".into(), |x| format!("{:.3}", x));
            let mut text = format!("{:<12} | {:>5} | {:>9} | {:>5}\n{}\n", "type", "cases", "recovered", "rate", "-".repeat(41));
            for (ty, r) in rep.per_type.iter().chain([(&"all".to_string(), &rep.report)]) {
                text += &format!("{:<12} | {:>5} | {:>9} | {:>5}\n", ty, r.cases, r.recovered, rate(r));
            }
            emit(&text);
        }
        Command::Evaluate {
            input,
            predictions,
            out,
        } => {
            let labeled = load_labeled(input)?;
            let preds = load_predictions(predictions)?;
            let report = p.evaluate(&labeled, &preds)?;
            write_json(out, &report)?;
            emit(&render_table(&[(name_of(out), report.summary)]));
        }
        Command::Report { input, out, json: json_out } => {
            let rows = input
                .iter()
                .map(|path| Ok((name_of(path), read_json::<EvalReportFile>(path)?.summary)))
                .collect::<Result<Vec<_>, PipelineError>>()?;
            let table = render_table(&rows);
            match out {
                Some(o) => std::fs::write(o, &table).map_err(|source| PipelineError::Io {
                    path: o.display().to_string(),
                    source,
                })?,
                None => emit(&table),
            }
            if let Some(j) = json_out {
                let map: serde_json::Map<String, serde_json::Value> = rows.iter().map(|(n, s)| (n.clone(), json(s))).collect();
                write_json(j, &map)?;
            }
        }
        Command::Run { n, dir } => {
            let s = p.run_all(*n, dir)?;
            print_json(&s);
        }
        Command::ServeSemantic { candidates } => {
            let mock = MockSemantic::new(p.config().semantic.floors.clone());
            for c in load_rollouts(candidates)? {
                let art = p.artifacts_for(&c.id);
                mock.register(c.id, c.outcome.unwrap_or(Outcome::Fail), art);
            }
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            serve_lines(stdin, stdout, |req: SemanticRequest| {
                mock.answer(&req).unwrap_or_else(|e| SemanticResponse {
                    valid_failure: false,
                    visual_ok: false,
                    rationale: e.to_string(),
                })
            })
            .map_err(|source| PipelineError::Io {
                path: "<stdio>".into(),
                source,
            })?;
        }
        Command::Config => unreachable!("handled above"),
    }
    Ok(ExitCode::SUCCESS)
}

fn name_of(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
