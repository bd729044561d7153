use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};
use sinc_eegnet::checkpoint::{self, CheckpointError};
use sinc_eegnet::config::RunConfig;
use sinc_eegnet::data::container::{decode, write_container, ContainerError};
use sinc_eegnet::data::preprocess::{preprocess, ZScoreMode};
use sinc_eegnet::data::synthetic::{generate_synthetic, parse_bands, SyntheticSpec};
use sinc_eegnet::data::TrialSet;
use sinc_eegnet::network::count_parameters;
use sinc_eegnet::sinc::frequency_response;
use sinc_eegnet::training::eval::RunMetadata;
use sinc_eegnet::training::train::format_loss_curve;
use sinc_eegnet::training::{evaluate, split_dataset, train, Paradigm, SplitError, TrainError, DEFAULT_SEED};
use sinc_eegnet::Model;

mod manifest;

use manifest::Manifest;

const CHECKPOINT_FILE: &str = "checkpoint.seeg";
const LOSS_FILE: &str = "loss.txt";
const MANIFEST_FILE: &str = "manifest.txt";
const REPORT_FILE: &str = "report.txt";

#[derive(Parser)]
#[command(name = "sinc-eegnet", version, about = "Train and inspect Sinc-EEGNet motor-imagery classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a container and write checkpoint, loss curve, manifest and test report.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// competition, within_subject or cross_subject; overrides the config file.
        #[arg(long)]
        paradigm: Option<String>,
        #[arg(long)]
        subject: Option<u8>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config file's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint on a container.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Only score this subject's trials.
        #[arg(long)]
        subject: Option<u8>,
        /// Report file; defaults to the checkpoint path with `.eval.txt` appended.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "per_channel", value_parser = ["per_channel", "whole_trial"])]
        zscore: String,
    },
    /// Export the learned sinc bands, optionally with frequency responses.
    Filters {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        response_points: Option<usize>,
    },
    /// Print the per-layer parameter table of a config.
    Inspect {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic band-power container.
    Synth {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        /// Comma separated `lo-hi` bands in Hz, one per class.
        #[arg(long)]
        bands: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        channels: usize,
        #[arg(long, default_value_t = 512)]
        samples: usize,
        #[arg(long, default_value_t = 128.0)]
        fs: f64,
        /// Power ratio of the band component to the noise; `inf` for noiseless.
        #[arg(long, default_value_t = 1.0)]
        snr: f64,
        #[arg(long, default_value_t = 1)]
        sessions: u8,
        #[arg(long, default_value_t = 1)]
        subject: u8,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    /// Bad flags or config: exit 2.
    Usage(String),
    /// Data unavailable or incompatible: exit 3.
    Data(String),
    /// Unreadable artifact: exit 4.
    Corrupt(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Corrupt(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Corrupt(m) => m,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            data,
            config,
            paradigm,
            subject,
            out,
            seed,
        } => cmd_train(&data, &config, paradigm.as_deref(), subject, &out, seed),
        Command::Eval {
            data,
            checkpoint,
            subject,
            report,
            zscore,
        } => cmd_eval(&data, &checkpoint, subject, report, &zscore),
        Command::Filters {
            checkpoint,
            out,
            response_points,
        } => cmd_filters(&checkpoint, &out, response_points),
        Command::Inspect { config } => cmd_inspect(&config),
        Command::Synth {
            classes,
            per_class,
            bands,
            out,
            seed,
            channels,
            samples,
            fs,
            snr,
            sessions,
            subject,
        } => cmd_synth(
            classes,
            &bands,
            &out,
            SyntheticSpec {
                n_per_class: per_class,
                channels,
                samples,
                fs,
                bands: Vec::new(),
                snr,
                sessions,
                subject,
                seed,
            },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_container(path: &Path) -> Result<(TrialSet, Vec<u8>), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    let set = decode(&bytes).map_err(|e| match e {
        ContainerError::Io(e) => Failure::Data(e.to_string()),
        e => Failure::Corrupt(format!("{}: {e}", path.display())),
    })?;
    Ok((set, bytes))
}

fn load_checkpoint(path: &Path) -> Result<(Model, Vec<u8>), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    let model = checkpoint::decode(&bytes).map_err(|e| match e {
        CheckpointError::Io(e) => Failure::Data(e.to_string()),
        e => Failure::Corrupt(format!("{}: {e}", path.display())),
    })?;
    Ok((model, bytes))
}

fn prepare(set: &TrialSet, zscore: ZScoreMode) -> Result<TrialSet, Failure> {
    let (set, warnings) = preprocess(set, zscore).map_err(|e| Failure::Data(format!("preprocessing: {e}")))?;
    for w in warnings {
        eprintln!("{w}");
    }
    Ok(set)
}

fn check_geometry(set: &TrialSet, model: &sinc_eegnet::ModelConfig, what: &str) -> CmdResult {
    if set.channels != model.channels || set.samples != model.samples || set.classes > model.classes {
        return Err(Failure::Data(format!(
            "shape mismatch: data has C = {}, T = {}, {} classes (after preprocessing); \
             {what} expects C = {}, T = {}, {} classes",
            set.channels, set.samples, set.classes, model.channels, model.samples, model.classes
        )));
    }
    Ok(())
}

fn split_failure(e: SplitError) -> Failure {
    match e {
        SplitError::UnknownParadigm(_) | SplitError::MissingSubject(_) | SplitError::UnknownSubject { .. } => {
            Failure::Usage(e.to_string())
        }
        SplitError::SessionTag { .. } | SplitError::Empty { .. } => Failure::Data(e.to_string()),
    }
}

fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::Config(_) => Failure::Usage(e.to_string()),
        e => Failure::Data(e.to_string()),
    }
}

fn cmd_train(
    data: &Path,
    config_path: &Path,
    paradigm: Option<&str>,
    subject: Option<u8>,
    out: &Path,
    seed: Option<u64>,
) -> CmdResult {
    let mut cfg = load_config(config_path)?;
    if let Some(p) = paradigm {
        let p: Paradigm = p.parse().map_err(|e: SplitError| Failure::Usage(e.to_string()))?;
        cfg.set_paradigm(p);
    }
    if subject.is_some() {
        cfg.subject = subject;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if cfg.paradigm.needs_subject() && cfg.subject.is_none() {
        return Err(Failure::Usage(format!("paradigm {} requires --subject", cfg.paradigm)));
    }
    let (raw, bytes) = load_container(data)?;
    let set = prepare(&raw, cfg.zscore)?;
    check_geometry(&set, &cfg.model, "config")?;
    let (train_set, test_set) = split_dataset(&set, cfg.paradigm, cfg.subject).map_err(split_failure)?;

    fs::create_dir_all(out).map_err(|e| Failure::Data(format!("cannot create {}: {e}", out.display())))?;
    let mut manifest = Manifest::start(config_path, &cfg, data, &sha256_hex(&bytes), out);
    let id = manifest.id();
    println!("manifest {id}");
    println!(
        "training on {} trials, testing on {} ({}, seed {})",
        train_set.len(),
        test_set.len(),
        cfg.paradigm,
        cfg.train.seed
    );

    let mut model = Model::build(cfg.model.clone(), cfg.train.seed).map_err(|e| Failure::Usage(e.to_string()))?;
    let outcome = train(&mut model, &train_set, &cfg.train, |epoch, loss| {
        println!("epoch {epoch} loss {loss:.6}");
    })
    .map_err(train_failure)?;

    let ckpt = checkpoint::encode(&model);
    write_file(&out.join(CHECKPOINT_FILE), &ckpt)?;
    write_file(
        &out.join(LOSS_FILE),
        format!("# manifest {id}\n{}", format_loss_curve(&outcome.loss_curve)),
    )?;
    let report = evaluate(
        &model,
        &test_set,
        RunMetadata {
            config_hash: cfg.hash(),
            seed: cfg.train.seed,
            paradigm: cfg.paradigm.to_string(),
        },
    )
    .map_err(train_failure)?;
    write_file(&out.join(REPORT_FILE), format!("# manifest {id}\n{}", report.to_text()))?;
    manifest.finish(&sha256_hex(&ckpt));
    write_file(&out.join(MANIFEST_FILE), manifest.to_text())?;
    println!("test accuracy {:.4}", report.accuracy());
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_eval(data: &Path, ckpt_path: &Path, subject: Option<u8>, report: Option<PathBuf>, zscore: &str) -> CmdResult {
    let (model, ckpt) = load_checkpoint(ckpt_path)?;
    let (raw, _) = load_container(data)?;
    let mode = if zscore == "whole_trial" {
        ZScoreMode::WholeTrial
    } else {
        ZScoreMode::PerChannel
    };
    let mut set = prepare(&raw, mode)?;
    check_geometry(&set, model.config(), "checkpoint")?;
    if let Some(s) = subject {
        let available = set.subjects();
        if !available.contains(&s) {
            return Err(Failure::Usage(format!("subject {s} not present (available: {available:?})")));
        }
        set = set.filter(|t| t.subject == s);
    }
    let metadata = RunMetadata {
        config_hash: sha256_hex(&ckpt),
        seed: 0,
        paradigm: "none".into(),
    };
    let result = evaluate(&model, &set, metadata).map_err(train_failure)?;
    let text = result.to_text();
    print!("{text}");
    let path = report.unwrap_or_else(|| {
        let mut p = ckpt_path.as_os_str().to_owned();
        p.push(".eval.txt");
        PathBuf::from(p)
    });
    let header = match manifest::id_for_checkpoint(ckpt_path, &sha256_hex(&ckpt)) {
        Some(id) => format!("# manifest {id}\n"),
        None => String::new(),
    };
    write_file(&path, format!("{header}{text}"))
}

fn cmd_filters(ckpt_path: &Path, out: &Path, response_points: Option<usize>) -> CmdResult {
    let (model, ckpt) = load_checkpoint(ckpt_path)?;
    let bank = model.filter_bank();
    let mut text = String::new();
    if let Some(id) = manifest::id_for_checkpoint(ckpt_path, &sha256_hex(&ckpt)) {
        text.push_str(&format!("# manifest {id}\n"));
    }
    text.push_str(&format!(
        "# {} filters, kernel length {}, sampling rate {} Hz\n# index f1_hz f2_hz\n",
        bank.len(),
        bank.kernel_len,
        bank.sampling_rate
    ));
    for (i, (lo, hi)) in bank.cutoffs_hz().iter().enumerate() {
        text.push_str(&format!("{i} {lo:.6} {hi:.6}\n"));
    }
    if let Some(n) = response_points {
        for (i, kernel) in bank.kernels().iter().enumerate() {
            let r = frequency_response(kernel, n).map_err(|e| Failure::Usage(format!("--response-points: {e}")))?;
            text.push_str(&format!("\nresponse {i}\n# normalized_frequency magnitude\n"));
            for (f, m) in r.frequencies.iter().zip(&r.magnitude) {
                text.push_str(&format!("{f:.6} {m:.6e}\n"));
            }
        }
    }
    write_file(out, &text)?;
    print!(
        "{}",
        text.lines()
            .take_while(|l| !l.starts_with("response"))
            .filter(|l| !l.is_empty())
            .map(|l| format!("{l}\n"))
            .collect::<String>()
    );
    Ok(())
}

fn cmd_inspect(config_path: &Path) -> CmdResult {
    let cfg = load_config(config_path)?;
    let table = count_parameters(&cfg.model);
    let width = table.rows.iter().map(|r| r.layer.len()).max().unwrap_or(0);
    println!("{:width$}  {:>12}  {:>8}", "layer", "formula", "params");
    for r in &table.rows {
        println!("{:width$}  {:>12}  {:>8}", r.layer, r.formula, r.count);
    }
    println!("{:width$}  {:>12}  {:>8}", "total", "", table.total);
    Ok(())
}

fn cmd_synth(classes: usize, bands: &str, out: &Path, mut spec: SyntheticSpec) -> CmdResult {
    spec.bands = parse_bands(bands).map_err(|e| Failure::Usage(format!("--bands: {e}")))?;
    if spec.bands.len() != classes {
        return Err(Failure::Usage(format!(
            "--classes is {classes} but --bands lists {} bands",
            spec.bands.len()
        )));
    }
    let set = generate_synthetic(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    write_container(&set, out).map_err(|e| match e {
        ContainerError::Io(e) => Failure::Data(format!("cannot write {}: {e}", out.display())),
        e => Failure::Usage(e.to_string()),
    })?;
    println!(
        "wrote {} trials ({} classes x {} x {} sessions), C = {}, T = {}, fs = {} Hz to {}",
        set.len(),
        classes,
        spec.n_per_class,
        spec.sessions,
        spec.channels,
        spec.samples,
        spec.fs,
        out.display()
    );
    Ok(())
}
