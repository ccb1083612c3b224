//! Command front end: `stats`, `convert`, `train`, `evaluate`, `sweep` and
//! `synth`. Every command takes the shared experiment flags, which override
//! an optional `--config` manifest.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::config::{load_dataset, DatasetFormat, ExperimentConfig};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, evaluate_averaged, evaluate_balanced, generate_planted, EvaluationReport,
    PlantedParams, Regime,
};
use crate::graph::{split_edges, write_edge_list, GraphStats, NodeId, SignedGraph};
use crate::opinion::{read_predictors, write_predictors, NodePredictor, PeerPolicy, PredictorHeader};
use crate::trainer::{train_all_filtered, with_workers, NodeLog, NormRule, PredictorSet, TrainConfig};

pub const PREDICTORS_FILE: &str = "predictors.txt";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";

/// Gate used by the balanced-dataset regime unless `--p`/`--q` are given.
pub const BALANCED_PQ: usize = 5;

#[derive(Debug, Parser)]
#[command(name = "peersign", version, about = "Edge sign prediction with learned trusted peers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print node/edge counts and the sign mix of a dataset.
    Stats(CommonArgs),
    /// Convert a ratings file into a signed edge list.
    Convert(CommonArgs),
    /// Train per-node predictors on the training split.
    Train(CommonArgs),
    /// Evaluate trained predictors on the held-out split.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Predictor file (default: <out>/predictors.txt).
        #[arg(long)]
        predictors: Option<PathBuf>,
    },
    /// Accuracy grid over (p, q); rows sharing p share one training run.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        p_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        q_list: Vec<usize>,
    },
    /// Generate a planted-model graph with known hidden predictors.
    Synth(SynthArgs),
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// Flat key=value experiment manifest; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    /// edges | ratings | wiki-elections
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub rating_threshold: Option<String>,
    /// simple-adjacent | standard-adjacent | standard-pq
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long = "p")]
    pub p: Option<String>,
    #[arg(long = "q")]
    pub q: Option<String>,
    #[arg(long = "d")]
    pub d: Option<String>,
    #[arg(long)]
    pub lambda_min: Option<String>,
    #[arg(long)]
    pub lambda_max: Option<String>,
    #[arg(long)]
    pub lambda_step: Option<String>,
    /// `subset` or a fixed positive number
    #[arg(long)]
    pub norm: Option<String>,
    /// exact | tabu
    #[arg(long)]
    pub solver: Option<String>,
    #[arg(long)]
    pub tabu_iters: Option<String>,
    #[arg(long)]
    pub tabu_time_ms: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub test_fraction: Option<String>,
    /// raw | averaged | balanced
    #[arg(long)]
    pub regime: Option<String>,
    #[arg(long)]
    pub workers: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
}

impl CommonArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let fields: [(&'static str, &Option<String>); 19] = [
            ("dataset", &self.dataset),
            ("format", &self.format),
            ("rating-threshold", &self.rating_threshold),
            ("variant", &self.variant),
            ("p", &self.p),
            ("q", &self.q),
            ("d", &self.d),
            ("lambda-min", &self.lambda_min),
            ("lambda-max", &self.lambda_max),
            ("lambda-step", &self.lambda_step),
            ("norm", &self.norm),
            ("solver", &self.solver),
            ("tabu-iters", &self.tabu_iters),
            ("tabu-time-ms", &self.tabu_time_ms),
            ("seed", &self.seed),
            ("test-fraction", &self.test_fraction),
            ("regime", &self.regime),
            ("workers", &self.workers),
            ("out", &self.out),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }

    /// Manifest plus overrides, and the set of keys that were given
    /// explicitly in either place.
    pub fn resolve(&self) -> Result<(ExperimentConfig, HashSet<String>)> {
        let mut explicit = HashSet::new();
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                for line in text.lines() {
                    if let Some((k, _)) = line.trim().split_once('=') {
                        explicit.insert(k.trim().to_owned());
                    }
                }
                ExperimentConfig::parse(&text)?
            }
            None => ExperimentConfig::default(),
        };
        for (k, v) in self.overrides() {
            cfg.apply(k, v)?;
            explicit.insert(k.to_owned());
        }
        Ok((cfg, explicit))
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output edge list; the hidden model is written next to it as `<out>.model`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub nodes: usize,
    #[arg(long, default_value_t = 5)]
    pub base_nodes: usize,
    #[arg(long, default_value_t = 5)]
    pub peers_per_node: usize,
    #[arg(long, default_value_t = 199)]
    pub base_out_degree: usize,
    #[arg(long, default_value_t = 150)]
    pub targets_per_node: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Stats(args) => {
            let (cfg, _) = args.resolve()?;
            cmd_stats(&cfg, out).map(|_| ())
        }
        Command::Convert(args) => {
            let (mut cfg, explicit) = args.resolve()?;
            if !explicit.contains("format") {
                cfg.format = DatasetFormat::Ratings;
            }
            cmd_convert(&cfg, out).map(|_| ())
        }
        Command::Train(args) => {
            let (cfg, _) = args.resolve()?;
            cmd_train(&cfg, out).map(|_| ())
        }
        Command::Evaluate { common, predictors } => {
            let (mut cfg, explicit) = common.resolve()?;
            if cfg.regime == Regime::BalancedDataset {
                apply_balanced_gate(&mut cfg, &explicit);
            }
            let report = cmd_evaluate(&cfg, predictors.as_deref())?;
            writeln!(out, "{}", EvaluationReport::TSV_HEADER)?;
            writeln!(out, "{}", report.to_tsv_row())?;
            writeln!(out)?;
            write!(out, "{}", report.summary())?;
            Ok(())
        }
        Command::Sweep { common, p_list, q_list } => {
            let (cfg, _) = common.resolve()?;
            cmd_sweep(&cfg, &p_list, &q_list, out).map(|_| ())
        }
        Command::Synth(args) => cmd_synth(&args, out),
    }
}

fn apply_balanced_gate(cfg: &mut ExperimentConfig, explicit: &HashSet<String>) {
    if !explicit.contains("p") {
        cfg.train.policy.p = BALANCED_PQ;
    }
    if !explicit.contains("q") {
        cfg.train.policy.q = BALANCED_PQ;
    }
}

fn require_dataset(cfg: &ExperimentConfig) -> Result<SignedGraph> {
    match &cfg.dataset {
        None => Err(Error::Config("--dataset is required".into())),
        Some(p) => load_dataset(p, cfg.format, cfg.rating_threshold),
    }
}

pub fn cmd_stats(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<GraphStats> {
    let g = require_dataset(cfg)?;
    let stats = g.stats();
    writeln!(out, "{}", GraphStats::TSV_HEADER)?;
    writeln!(out, "{}", stats.to_tsv_row())?;
    Ok(stats)
}

pub fn cmd_convert(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<GraphStats> {
    let g = require_dataset(cfg)?;
    let path = cfg
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("--out is required for convert".into()))?;
    let file = File::create(path)?;
    write_edge_list(&g, BufWriter::new(file))?;
    let stats = g.stats();
    writeln!(out, "{}", GraphStats::TSV_HEADER)?;
    writeln!(out, "{}", stats.to_tsv_row())?;
    Ok(stats)
}

/// Header fields that must agree before a predictor file can be resumed.
const TRAINING_KEYS: &[&str] = &[
    "graph",
    "variant",
    "p",
    "d",
    "lambda-min",
    "lambda-max",
    "lambda-step",
    "norm",
    "solver",
    "seed",
    "test-fraction",
];

fn training_header(g: &SignedGraph, cfg: &ExperimentConfig, train: &TrainConfig) -> PredictorHeader {
    let mut h = PredictorHeader::default();
    h.set("graph", g.fingerprint());
    h.set("variant", train.policy.variant);
    h.set("p", train.policy.p);
    h.set("q", train.policy.q);
    h.set("d", train.d);
    h.set("lambda-min", train.lambda_min);
    h.set("lambda-max", train.lambda_max);
    h.set("lambda-step", train.lambda_step);
    h.set(
        "norm",
        match train.norm {
            NormRule::SubsetSize => "subset".to_owned(),
            NormRule::Fixed(v) => v.to_string(),
        },
    );
    h.set("solver", &train.solver);
    h.set("seed", train.seed);
    h.set("test-fraction", cfg.test_fraction);
    h
}

pub struct TrainSummary {
    pub trained: usize,
    pub skipped: usize,
    pub predictors_path: PathBuf,
}

/// Trains every training-split source, resuming from an existing predictor
/// file in the output directory when its settings match.
pub fn cmd_train(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<TrainSummary> {
    cfg.validate()?;
    let dir = cfg
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("--out is required for train".into()))?;
    let train = cfg.train_config();
    let g = cfg.load_graph()?;
    let split = split_edges(g.edges(), cfg.test_fraction, train.seed)?;
    fs::create_dir_all(dir)?;
    let pred_path = dir.join(PREDICTORS_FILE);
    let log_path = dir.join(TRAIN_LOG_FILE);
    let header = training_header(&g, cfg, &train);

    let mut existing = PredictorSet::default();
    if pred_path.exists() {
        let (old_header, old) = read_predictors(BufReader::new(File::open(&pred_path)?))?;
        for key in TRAINING_KEYS {
            if old_header.get(key) != header.get(key) {
                return Err(Error::Config(format!(
                    "{} was produced with different settings ({key}: {:?} vs {:?})",
                    pred_path.display(),
                    old_header.get(key),
                    header.get(key)
                )));
            }
        }
        existing = old.into_iter().collect();
    }
    let skipped = existing.len();
    let result = with_workers(cfg.workers, || {
        train_all_filtered(&g, &split, &train, |x| existing.contains(x))
    })??;
    let trained = result.predictors.len();
    info!("trained {trained} node(s), {skipped} already present");

    let mut all = existing;
    for p in result.predictors.iter() {
        all.insert(p.clone());
    }
    write_atomically(&pred_path, |w| write_predictors(w, &header, &all.to_vec()))?;

    let fresh_log = !log_path.exists();
    let mut log = BufWriter::new(OpenOptions::new().create(true).append(true).open(&log_path)?);
    if fresh_log {
        writeln!(log, "{}", NodeLog::TSV_HEADER)?;
    }
    for row in &result.logs {
        writeln!(log, "{}", row.to_tsv_row())?;
    }
    log.flush()?;

    writeln!(
        out,
        "trained\t{trained}\nskipped\t{skipped}\npredictors\t{}",
        pred_path.display()
    )?;
    Ok(TrainSummary { trained, skipped, predictors_path: pred_path })
}

fn write_atomically(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn header_value<T: std::str::FromStr>(h: &PredictorHeader, key: &str) -> Result<T> {
    h.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Data(format!("predictor file header lacks a valid `{key}`")))
}

/// Evaluates a predictor file on the test split it was trained against.
/// The balanced regime retrains on the balanced dataset instead.
pub fn cmd_evaluate(cfg: &ExperimentConfig, predictors: Option<&Path>) -> Result<EvaluationReport> {
    let g = require_dataset(cfg)?;
    if cfg.regime == Regime::BalancedDataset {
        cfg.validate()?;
        let train = cfg.train_config();
        return with_workers(cfg.workers, || {
            evaluate_balanced(&g, &train, cfg.test_fraction, train.seed)
        })?;
    }
    let path = match predictors {
        Some(p) => p.to_path_buf(),
        None => cfg
            .out
            .as_deref()
            .map(|d| d.join(PREDICTORS_FILE))
            .ok_or_else(|| Error::Config("--predictors or --out is required".into()))?,
    };
    let file = File::open(&path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let (header, preds) = read_predictors(BufReader::new(file))?;
    let fingerprint = g.fingerprint();
    if header.get("graph") != Some(fingerprint.as_str()) {
        return Err(Error::Data(format!(
            "predictor file was trained on graph {:?}, dataset is {fingerprint}",
            header.get("graph")
        )));
    }
    if preds.iter().any(|p| p.source().index() >= g.node_count()) {
        return Err(Error::Data("predictor file references unknown nodes".into()));
    }
    let seed: u64 = header_value(&header, "seed")?;
    let test_fraction: f64 = header_value(&header, "test-fraction")?;
    let policy = PeerPolicy {
        variant: header_value(&header, "variant")?,
        p: header_value(&header, "p")?,
        q: cfg.train.policy.q,
    };
    let split = split_edges(g.edges(), test_fraction, seed)?;
    let set: PredictorSet = preds.into_iter().collect();
    with_workers(cfg.workers, || match cfg.regime {
        Regime::AveragedResults => evaluate_averaged(&g, &set, &split.test, &policy, seed),
        _ => Ok(evaluate(&g, &set, &split.test, &policy)),
    })?
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub p: usize,
    pub q: usize,
    pub report: EvaluationReport,
}

/// Trains once per distinct `p` (once overall for adjacency variants) and
/// evaluates every `q` against it.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    p_list: &[usize],
    q_list: &[usize],
    out: &mut dyn Write,
) -> Result<Vec<SweepRow>> {
    if p_list.is_empty() || q_list.is_empty() {
        return Err(Error::Config("p and q lists must be non-empty".into()));
    }
    cfg.validate()?;
    let g = cfg.load_graph()?;
    let base = cfg.train_config();
    let split = split_edges(g.edges(), cfg.test_fraction, base.seed)?;
    writeln!(out, "p\tq\ttested\tcorrect\taccuracy\tabstained")?;
    let mut rows = Vec::new();
    let mut cached: Option<(usize, PredictorSet)> = None;
    for &p in p_list {
        let mut train = base.clone();
        train.policy.p = p;
        let reuse = match &cached {
            Some((cp, _)) => *cp == p || train.policy.variant.uses_adjacent_peers(),
            None => false,
        };
        if !reuse {
            let trained = with_workers(cfg.workers, || train_all_filtered(&g, &split, &train, |_| false))??;
            cached = Some((p, trained.predictors));
        }
        let predictors = &cached.as_ref().expect("trained above").1;
        for &q in q_list {
            let policy = PeerPolicy { q, ..train.policy };
            let report = with_workers(cfg.workers, || evaluate(&g, predictors, &split.test, &policy))?;
            writeln!(
                out,
                "{p}\t{q}\t{}\t{}\t{:.6}\t{}",
                report.tested, report.correct, report.accuracy, report.abstained
            )?;
            rows.push(SweepRow { p, q, report });
        }
    }
    Ok(rows)
}

/// Writes a planted graph as an edge list and its hidden predictors, remapped
/// to the ids the edge list loads back with, as `<out>.model`.
pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let params = PlantedParams {
        nodes: args.nodes,
        base_nodes: args.base_nodes,
        peers_per_node: args.peers_per_node,
        base_out_degree: args.base_out_degree,
        targets_per_node: args.targets_per_node,
        noise: args.noise,
        ..PlantedParams::default()
    };
    let (g, model) = generate_planted(&params, args.seed)?;
    write_atomically(&args.out, |w| write_edge_list(&g, w))?;

    let reloaded = load_dataset(&args.out, DatasetFormat::Edges, 0)?;
    let new_id: std::collections::HashMap<&str, NodeId> = reloaded
        .raw_ids()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.as_str(), NodeId(i as u32)))
        .collect();
    let remapped: Vec<NodePredictor> = model
        .predictors()
        .iter()
        .filter_map(|p| {
            let src = *new_id.get(g.raw_id(p.source()))?;
            let entries = p
                .trusted()
                .iter()
                .filter_map(|&(z, r)| new_id.get(g.raw_id(z)).map(|&z| (z, r)));
            Some(NodePredictor::new(src, entries))
        })
        .collect();
    let mut header = PredictorHeader::default();
    header.set("graph", reloaded.fingerprint());
    header.set("variant", crate::opinion::OpinionVariant::StandardPq);
    header.set("p", 0);
    header.set("planted-seed", args.seed);
    header.set("noise", args.noise);
    let mut model_path = args.out.clone().into_os_string();
    model_path.push(".model");
    let model_path = PathBuf::from(model_path);
    write_atomically(&model_path, |w| write_predictors(w, &header, &remapped))?;

    writeln!(out, "{}", GraphStats::TSV_HEADER)?;
    writeln!(out, "{}", reloaded.stats().to_tsv_row())?;
    writeln!(out, "model\t{}", model_path.display())?;
    Ok(())
}
