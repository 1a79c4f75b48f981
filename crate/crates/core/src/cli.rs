//! Command-line front end: train, bench, verify, export-embeddings.
//! All machine-readable output goes to stdout as JSON; diagnostics go to
//! stderr. Exit codes: 0 success, 1 usage, 2 numeric, 3 verification.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{self, Graph as DataGraph};
use crate::geometry::Curvature;
use crate::hypnorm::{NormConfig, Placement};
use crate::layers::{ModelKind, ModelSpec};
use crate::multirel::{Distance, KGConfig, NMuRMode, ScorerKind};
use crate::train::{self, OptimizerChoice, TrainConfig};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Parser)]
#[command(
    name = "hypnorm",
    version,
    about = "Hyperbolic-normalization graph networks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and emit per-epoch JSON records.
    Train(RunArgs),
    /// Measure mean epoch time per model after warmup.
    Bench(BenchArgs),
    /// Run the identity verification suite.
    Verify(VerifyArgs),
    /// Dump checkpoint embeddings to TSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// key=value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// dataset directory or tree:<branching>,<depth>,<feature_dim>
    #[arg(long)]
    dataset: Option<String>,
    /// node_class | link_pred | kg
    #[arg(long)]
    task: Option<String>,
    /// gcn | gat | hgcn | ngcn | ngat | mure | murp | nmur
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    curvature: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    /// per_layer | final | middle
    #[arg(long)]
    placement: Option<String>,
    /// adam | radam | sgd
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    dropout_keep: Option<f64>,
    /// KG embedding width
    #[arg(long)]
    dim: Option<usize>,
    /// negative samples per positive (kg task)
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// l1 | l2 (kg task)
    #[arg(long)]
    distance: Option<String>,
    /// score_norm | embed_norm (nmur model)
    #[arg(long)]
    nmur_mode: Option<String>,
    /// checkpoint output path
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// comma-separated model list benchmarked on the same dataset
    #[arg(long)]
    models: String,
    /// timed epochs after the 3 warmup epochs
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    /// additionally print pairwise mean-time ratios
    #[arg(long, default_value_t = false)]
    ratio: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    NodeClass,
    LinkPred,
    Kg,
}

/// Fully resolved run configuration, precedence flags > file > defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: Task,
    pub model: String,
    pub curvature: f64,
    pub scale: f64,
    pub placement: Placement,
    pub optimizer: OptimizerChoice,
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden_dim: usize,
    pub heads: usize,
    pub dropout_keep: f64,
    pub dim: usize,
    pub negatives: usize,
    pub batch_size: usize,
    pub distance: Distance,
    pub nmur_mode: NMuRMode,
    pub dataset: String,
    pub output: PathBuf,
}

fn usage(msg: String) -> CliError {
    CliError {
        code: EXIT_USAGE,
        msg,
    }
}

fn numeric(msg: String) -> CliError {
    CliError {
        code: EXIT_NUMERIC,
        msg,
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

fn parse_kv_file(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn file_get<T: std::str::FromStr>(
    file: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>, CliError> {
    match file.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| usage(format!("config key {key}: cannot parse {raw:?}"))),
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

impl RunConfig {
    fn resolve(a: &RunArgs) -> Result<RunConfig, CliError> {
        let file = match &a.config {
            Some(p) => parse_kv_file(p)?,
            None => HashMap::new(),
        };
        let task_s: String = pick(
            a.task.clone(),
            file.get("task").cloned(),
            "node_class".into(),
        );
        let task = match task_s.as_str() {
            "node_class" => Task::NodeClass,
            "link_pred" => Task::LinkPred,
            "kg" => Task::Kg,
            other => return Err(usage(format!("unknown task {other:?}"))),
        };
        let model: String = pick(a.model.clone(), file.get("model").cloned(), "ngcn".into());
        let kg_model = matches!(model.as_str(), "mure" | "murp" | "nmur");
        match (task, kg_model) {
            (Task::Kg, false) => return Err(usage(format!("model {model:?} is not a kg model"))),
            (Task::NodeClass | Task::LinkPred, true) => {
                return Err(usage(format!("kg model {model:?} needs --task kg")))
            }
            _ => {}
        }
        let curvature = pick(a.curvature, file_get(&file, "curvature")?, 1.0);
        if !(curvature > 0.0 && curvature.is_finite()) {
            return Err(usage(format!(
                "curvature must be positive, got {curvature}"
            )));
        }
        let scale = pick(
            a.scale,
            file_get(&file, "scale")?,
            NormConfig::default_scale_for(curvature),
        );
        let placement_s: String = pick(
            a.placement.clone(),
            file.get("placement").cloned(),
            "per_layer".into(),
        );
        let placement = match placement_s.as_str() {
            "per_layer" => Placement::PerLayer,
            "final" => Placement::Final,
            "middle" => Placement::Middle,
            other => return Err(usage(format!("unknown placement {other:?}"))),
        };
        let optimizer_s: String = pick(
            a.optimizer.clone(),
            file.get("optimizer").cloned(),
            "adam".into(),
        );
        let optimizer = match optimizer_s.as_str() {
            "adam" => OptimizerChoice::Adam,
            "radam" => OptimizerChoice::RAdam,
            "sgd" => OptimizerChoice::Sgd,
            other => return Err(usage(format!("unknown optimizer {other:?}"))),
        };
        let mut seed = pick(a.seed, file_get(&file, "seed")?, 42);
        if let Ok(env_seed) = std::env::var("HYPNORM_SEED") {
            seed = env_seed
                .parse()
                .map_err(|_| usage(format!("HYPNORM_SEED: cannot parse {env_seed:?}")))?;
        }
        let distance_s: String = pick(
            a.distance.clone(),
            file.get("distance").cloned(),
            "l1".into(),
        );
        let distance = match distance_s.as_str() {
            "l1" => Distance::L1,
            "l2" => Distance::L2,
            other => return Err(usage(format!("unknown distance {other:?}"))),
        };
        let nmur_s: String = pick(
            a.nmur_mode.clone(),
            file.get("nmur-mode").cloned(),
            "embed_norm".into(),
        );
        let nmur_mode = match nmur_s.as_str() {
            "score_norm" => NMuRMode::ScoreNorm,
            "embed_norm" => NMuRMode::EmbedNorm,
            other => return Err(usage(format!("unknown nmur-mode {other:?}"))),
        };
        let dataset = pick(
            a.dataset.clone(),
            file.get("dataset").cloned(),
            String::new(),
        );
        if dataset.is_empty() {
            return Err(usage("--dataset is required".into()));
        }
        Ok(RunConfig {
            task,
            model,
            curvature,
            scale,
            placement,
            optimizer,
            epochs: pick(a.epochs, file_get(&file, "epochs")?, 200),
            seed,
            lr: pick(a.lr, file_get(&file, "lr")?, 0.01),
            weight_decay: pick(a.weight_decay, file_get(&file, "weight-decay")?, 0.0005),
            hidden_dim: pick(a.hidden_dim, file_get(&file, "hidden-dim")?, 16),
            heads: pick(a.heads, file_get(&file, "heads")?, 4),
            dropout_keep: pick(a.dropout_keep, file_get(&file, "dropout-keep")?, 0.9),
            dim: pick(a.dim, file_get(&file, "dim")?, 40),
            negatives: pick(a.negatives, file_get(&file, "negatives")?, 50),
            batch_size: pick(a.batch_size, file_get(&file, "batch-size")?, 128),
            distance,
            nmur_mode,
            dataset,
            output: pick(
                a.output.clone(),
                file.get("output").cloned().map(PathBuf::from),
                PathBuf::from("checkpoint.json"),
            ),
        })
    }

    fn model_kind(&self) -> Result<ModelKind, CliError> {
        match self.model.as_str() {
            "gcn" => Ok(ModelKind::Gcn),
            "ngcn" => Ok(ModelKind::Ngcn),
            "gat" => Ok(ModelKind::Gat),
            "ngat" => Ok(ModelKind::Ngat),
            "hgcn" => Ok(ModelKind::Hgcn),
            other => Err(usage(format!("unknown model {other:?}"))),
        }
    }

    fn scorer_kind(&self) -> Result<ScorerKind, CliError> {
        match self.model.as_str() {
            "mure" => Ok(ScorerKind::MuRE),
            "murp" => Ok(ScorerKind::MuRP),
            "nmur" => Ok(ScorerKind::NMuR(self.nmur_mode)),
            other => Err(usage(format!("unknown kg model {other:?}"))),
        }
    }

    fn norm_config(&self) -> Result<NormConfig, CliError> {
        NormConfig::new(self.curvature, self.scale, self.placement)
            .map_err(|e| usage(format!("bad norm config: {e}")))
    }

    fn model_spec(&self, in_dim: usize, out_dim: usize) -> Result<ModelSpec, CliError> {
        Ok(ModelSpec {
            kind: self.model_kind()?,
            dims: vec![in_dim, self.hidden_dim, out_dim],
            heads: self.heads,
            dropout_keep: self.dropout_keep,
            slope: 0.2,
            bias: true,
            norm: self.norm_config()?,
            seed: self.seed,
        })
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer,
            lr: self.lr,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            seed: self.seed,
        }
    }
}

/// Loads a node dataset: either a directory in the TSV layout or a
/// synthetic tree spec tree:<branching>,<depth>,<feature_dim>. Trees get
/// their singleton depth-0 root folded into class 1 so stratified splits
/// stay feasible, then a 60/20/20 split.
pub fn load_node_dataset(spec: &str, seed: u64) -> Result<DataGraph, CliError> {
    if let Some(rest) = spec.strip_prefix("tree:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(usage(format!(
                "tree spec {spec:?}: expected tree:<branching>,<depth>,<feature_dim>"
            )));
        }
        let b: u64 = parts[0]
            .parse()
            .map_err(|_| usage(format!("bad branching {:?}", parts[0])))?;
        let d: u32 = parts[1]
            .parse()
            .map_err(|_| usage(format!("bad depth {:?}", parts[1])))?;
        let f: usize = parts[2]
            .parse()
            .map_err(|_| usage(format!("bad feature dim {:?}", parts[2])))?;
        let mut g = data::gen_balanced_tree(b, d, f, seed)
            .map_err(|e| usage(format!("tree generation: {e}")))?;
        g.labels[0] = 1;
        data::make_splits(&g, (0.6, 0.2, 0.2), seed).map_err(|e| usage(format!("splits: {e}")))
    } else {
        let g = data::load_node_graph(Path::new(spec))
            .map_err(|e| usage(format!("dataset {spec}: {e}")))?;
        if g.train_mask.iter().any(|&m| m) {
            Ok(g)
        } else {
            data::make_splits(&g, (0.6, 0.2, 0.2), seed).map_err(|e| usage(format!("splits: {e}")))
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: String,
    pub task: String,
    pub curvature: f64,
    pub scale: f64,
    pub best_val: f64,
    pub test_metric: f64,
    pub labels: Vec<i64>,
    pub embeddings: Vec<Vec<f64>>,
}

fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CliError> {
    let json = serde_json::to_string(ckpt).map_err(|e| numeric(format!("serialize: {e}")))?;
    fs::write(path, json).map_err(|e| usage(format!("write {}: {e}", path.display())))
}

fn train_error_code(e: &train::TrainError) -> i32 {
    match e {
        train::TrainError::NonFiniteLoss(_) => EXIT_NUMERIC,
        train::TrainError::Build(_) | train::TrainError::Optim(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn cmd_train(args: &RunArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args)?;
    match cfg.task {
        Task::NodeClass | Task::LinkPred => {
            let g = load_node_dataset(&cfg.dataset, cfg.seed)?;
            let in_dim = g.feature_dim();
            let result = if cfg.task == Task::NodeClass {
                let spec = cfg.model_spec(in_dim, g.num_classes())?;
                train::train_node_classifier(&g, &spec, &cfg.train_config())
            } else {
                let split = data::split_edges(&g, (0.85, 0.05, 0.10), cfg.seed)
                    .map_err(|e| usage(format!("edge split: {e}")))?;
                let spec = cfg.model_spec(in_dim, cfg.hidden_dim)?;
                train::train_link_predictor(&g, &split, &spec, &cfg.train_config())
            };
            let result = result.map_err(|e| CliError {
                code: train_error_code(&e),
                msg: format!("training failed: {e}"),
            })?;
            for r in &result.records {
                writeln!(out, "{}", serde_json::to_string(r).unwrap())
                    .map_err(|e| usage(format!("stdout: {e}")))?;
            }
            let ckpt = Checkpoint {
                model: cfg.model.clone(),
                task: if cfg.task == Task::NodeClass {
                    "node_class".into()
                } else {
                    "link_pred".into()
                },
                curvature: cfg.curvature,
                scale: cfg.scale,
                best_val: result.best_val,
                test_metric: result.test_metric,
                labels: g.labels.clone(),
                embeddings: (0..result.embeddings.rows())
                    .map(|i| result.embeddings.row(i).to_vec())
                    .collect(),
            };
            write_checkpoint(&cfg.output, &ckpt)?;
            let summary = serde_json::json!({
                "best_val": result.best_val,
                "test_metric": result.test_metric,
                "checkpoint": cfg.output.display().to_string(),
            });
            writeln!(out, "{summary}").map_err(|e| usage(format!("stdout: {e}")))?;
            Ok(())
        }
        Task::Kg => {
            let kg = data::load_kg(Path::new(&cfg.dataset))
                .map_err(|e| usage(format!("dataset {}: {e}", cfg.dataset)))?;
            let kcfg = KGConfig {
                kind: cfg.scorer_kind()?,
                distance: cfg.distance,
                biases: true,
                curvature: Curvature::new(cfg.curvature)
                    .map_err(|e| usage(format!("curvature: {e}")))?,
                scale: cfg.scale,
            };
            let out_kg = train::train_kg(
                &kg,
                &kcfg,
                cfg.dim,
                cfg.negatives,
                cfg.batch_size,
                &cfg.train_config(),
            )
            .map_err(|e| CliError {
                code: train_error_code(&e),
                msg: format!("kg training failed: {e}"),
            })?;
            for r in &out_kg.records {
                writeln!(out, "{}", serde_json::to_string(r).unwrap())
                    .map_err(|e| usage(format!("stdout: {e}")))?;
            }
            let summary = serde_json::json!({
                "valid": out_kg.valid_report,
                "test": out_kg.test_report,
                "ball_projections": out_kg.projections,
            });
            writeln!(out, "{summary}").map_err(|e| usage(format!("stdout: {e}")))?;
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct BenchEntry {
    model: String,
    dataset: String,
    mean: f64,
    stddev: f64,
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    if args.repeats < 5 {
        return Err(usage(format!(
            "--repeats must be >= 5, got {}",
            args.repeats
        )));
    }
    const WARMUP: usize = 3;
    let models: Vec<String> = args
        .models
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if models.is_empty() {
        return Err(usage("--models must list at least one model".into()));
    }
    let mut entries = Vec::new();
    for model in &models {
        let mut run = args.run.clone();
        run.model = Some(model.clone());
        run.epochs = Some(WARMUP + args.repeats);
        let cfg = RunConfig::resolve(&run)?;
        if cfg.task == Task::Kg {
            return Err(usage("bench supports node tasks only".into()));
        }
        let g = load_node_dataset(&cfg.dataset, cfg.seed)?;
        let spec = cfg.model_spec(g.feature_dim(), g.num_classes())?;
        let result =
            train::train_node_classifier(&g, &spec, &cfg.train_config()).map_err(|e| CliError {
                code: train_error_code(&e),
                msg: format!("bench of {model} failed: {e}"),
            })?;
        let timed: Vec<f64> = result.records[WARMUP..]
            .iter()
            .map(|r| r.epoch_seconds)
            .collect();
        let mean = timed.iter().sum::<f64>() / timed.len() as f64;
        let var = timed.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / timed.len() as f64;
        entries.push(BenchEntry {
            model: model.clone(),
            dataset: cfg.dataset.clone(),
            mean,
            stddev: var.sqrt(),
        });
    }
    let mut report = serde_json::json!({ "entries": entries });
    if args.ratio {
        let mut ratios = serde_json::Map::new();
        for a in &entries {
            for b in &entries {
                if a.model != b.model {
                    ratios.insert(
                        format!("{}/{}", a.model, b.model),
                        serde_json::json!(a.mean / b.mean),
                    );
                }
            }
        }
        report["ratios"] = serde_json::Value::Object(ratios);
    }
    writeln!(out, "{report}").map_err(|e| usage(format!("stdout: {e}")))
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let seed = args.seed.unwrap_or(0);
    let report = verify::run_all(seed).map_err(|e| numeric(format!("verify: {e}")))?;
    writeln!(out, "{}", serde_json::to_string(&report).unwrap())
        .map_err(|e| usage(format!("stdout: {e}")))?;
    if report.passed {
        Ok(())
    } else {
        let failing = report
            .first_failure()
            .map(|c| c.name.clone())
            .unwrap_or_default();
        Err(CliError {
            code: EXIT_VERIFY,
            msg: format!("verification failed: {failing}"),
        })
    }
}

fn cmd_export(args: &ExportArgs, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.checkpoint)
        .map_err(|e| usage(format!("checkpoint {}: {e}", args.checkpoint.display())))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| usage(format!("checkpoint {}: {e}", args.checkpoint.display())))?;
    // normalized models bound every output row inside s/√c
    if matches!(ckpt.model.as_str(), "ngcn" | "ngat" | "nmur") {
        let bound = ckpt.scale / ckpt.curvature.sqrt();
        for (i, row) in ckpt.embeddings.iter().enumerate() {
            let n = crate::geometry::norm(row);
            if n >= bound * (1.0 + 1e-12) {
                return Err(numeric(format!(
                    "row {i} norm {n} breaks the bound {bound} for model {}",
                    ckpt.model
                )));
            }
        }
    }
    let mut tsv = String::new();
    for (i, row) in ckpt.embeddings.iter().enumerate() {
        tsv.push_str(&i.to_string());
        for v in row {
            tsv.push('\t');
            tsv.push_str(&format!("{v:?}"));
        }
        tsv.push('\n');
    }
    fs::write(&args.output, tsv)
        .map_err(|e| usage(format!("write {}: {e}", args.output.display())))?;
    let labels_path = args.output.with_extension("labels.tsv");
    let mut ltsv = String::new();
    for (i, l) in ckpt.labels.iter().enumerate() {
        ltsv.push_str(&format!("{i}\t{l}\n"));
    }
    fs::write(&labels_path, ltsv)
        .map_err(|e| usage(format!("write {}: {e}", labels_path.display())))?;
    let summary = serde_json::json!({
        "rows": ckpt.embeddings.len(),
        "embeddings": args.output.display().to_string(),
        "labels": labels_path.display().to_string(),
    });
    writeln!(out, "{summary}").map_err(|e| usage(format!("stdout: {e}")))
}

/// Parses argv and runs the selected command, returning the process exit
/// code. Output is written to `out` so tests can capture the stream.
pub fn run<I, S>(argv: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                EXIT_OK
            } else {
                EXIT_USAGE
            };
            eprint!("{e}");
            return code;
        }
    };
    let result = match &cli.cmd {
        Cmd::Train(a) => cmd_train(a, out),
        Cmd::Bench(a) => cmd_bench(a, out),
        Cmd::Verify(a) => cmd_verify(a, out),
        Cmd::ExportEmbeddings(a) => cmd_export(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_vec(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run(args.iter().copied(), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    fn fixture() -> String {
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("fixtures/karate")
            .display()
            .to_string()
    }

    #[test]
    fn usage_errors_exit_1() {
        let (code, _) = run_vec(&["hypnorm", "train"]);
        assert_eq!(code, EXIT_USAGE);
        let (code, _) = run_vec(&[
            "hypnorm",
            "train",
            "--dataset",
            "tree:3,4,8",
            "--task",
            "nope",
        ]);
        assert_eq!(code, EXIT_USAGE);
        let (code, _) = run_vec(&["hypnorm", "nonsense"]);
        assert_eq!(code, EXIT_USAGE);
        let (code, _) = run_vec(&[
            "hypnorm",
            "train",
            "--dataset",
            "x",
            "--task",
            "kg",
            "--model",
            "gcn",
        ]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn help_exits_0() {
        let (code, _) = run_vec(&["hypnorm", "--help"]);
        assert_eq!(code, EXIT_OK);
    }

    #[test]
    fn train_emits_records_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("ck.json");
        let (code, out) = run_vec(&[
            "hypnorm",
            "train",
            "--dataset",
            &fixture(),
            "--model",
            "ngcn",
            "--epochs",
            "5",
            "--seed",
            "1",
            "--output",
            ckpt.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK, "output: {out}");
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 6);
        for line in &lines[..5] {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.get("epoch").is_some() && v.get("loss").is_some());
            assert!(v.get("val_metric").is_some() && v.get("epoch_seconds").is_some());
        }
        let summary: serde_json::Value = serde_json::from_str(lines[5]).unwrap();
        assert!(summary.get("test_metric").is_some());
        assert!(ckpt.exists());
    }

    #[test]
    fn train_streams_deterministic_modulo_timing() {
        let dir = tempfile::tempdir().unwrap();
        let strip = |out: String| -> String {
            out.lines()
                .map(|l| {
                    let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                    if let Some(o) = v.as_object_mut() {
                        o.remove("epoch_seconds");
                        o.remove("checkpoint");
                    }
                    v.to_string()
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        let mut streams = Vec::new();
        for run_i in 0..2 {
            let ckpt = dir.path().join(format!("ck{run_i}.json"));
            let (code, out) = run_vec(&[
                "hypnorm",
                "train",
                "--dataset",
                "tree:3,4,8",
                "--model",
                "ngcn",
                "--epochs",
                "6",
                "--seed",
                "9",
                "--output",
                ckpt.to_str().unwrap(),
            ]);
            assert_eq!(code, EXIT_OK);
            streams.push(strip(out));
        }
        assert_eq!(streams[0], streams[1]);
    }

    #[test]
    fn config_file_and_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "dataset = tree:3,3,8\nepochs = 3\nseed = 5\n").unwrap();
        let ckpt = dir.path().join("ck.json");
        // the flag overrides the file's epoch count
        let (code, out) = run_vec(&[
            "hypnorm",
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--epochs",
            "2",
            "--output",
            ckpt.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(out.lines().count(), 3);
    }

    #[test]
    fn seed_env_override() {
        // resolves from the env var even when the flag differs
        std::env::set_var("HYPNORM_SEED", "123");
        let args = RunArgs {
            dataset: Some("tree:3,3,8".into()),
            seed: Some(7),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&args).unwrap();
        std::env::remove_var("HYPNORM_SEED");
        assert_eq!(cfg.seed, 123);
    }

    #[test]
    fn verify_exits_0_and_prints_json() {
        let (code, out) = run_vec(&["hypnorm", "verify"]);
        assert_eq!(code, EXIT_OK);
        let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(v["passed"], serde_json::Value::Bool(true));
    }

    #[test]
    fn bench_reports_ratios() {
        let (code, out) = run_vec(&[
            "hypnorm",
            "bench",
            "--dataset",
            "tree:3,4,8",
            "--models",
            "gcn,ngcn",
            "--repeats",
            "5",
            "--ratio",
            "--seed",
            "2",
        ]);
        assert_eq!(code, EXIT_OK, "output: {out}");
        let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(v["entries"].as_array().unwrap().len(), 2);
        assert!(v["ratios"].get("ngcn/gcn").is_some());
        let (code, _) = run_vec(&[
            "hypnorm",
            "bench",
            "--dataset",
            "tree:3,3,8",
            "--models",
            "gcn",
            "--repeats",
            "2",
        ]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn export_roundtrip_and_bound() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("ck.json");
        let (code, _) = run_vec(&[
            "hypnorm",
            "train",
            "--dataset",
            "tree:3,3,8",
            "--model",
            "ngcn",
            "--epochs",
            "3",
            "--seed",
            "4",
            "--output",
            ckpt.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
        let tsv = dir.path().join("emb.tsv");
        let (code, out) = run_vec(&[
            "hypnorm",
            "export-embeddings",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--output",
            tsv.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK, "output: {out}");
        let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(&ckpt).unwrap()).unwrap();
        let text = fs::read_to_string(&tsv).unwrap();
        assert_eq!(text.lines().count(), ck.embeddings.len());
        // reload and compare exactly; {:?} float formatting roundtrips
        for (line, row) in text.lines().zip(&ck.embeddings) {
            let mut parts = line.split('\t');
            parts.next();
            let parsed: Vec<f64> = parts.map(|p| p.parse().unwrap()).collect();
            assert_eq!(&parsed, row);
        }
        assert!(dir.path().join("emb.labels.tsv").exists());

        // a corrupted checkpoint breaking the norm bound exits 2
        let mut bad = ck;
        bad.embeddings[0] = vec![1e6; bad.embeddings[0].len()];
        let bad_path = dir.path().join("bad.json");
        fs::write(&bad_path, serde_json::to_string(&bad).unwrap()).unwrap();
        let (code, _) = run_vec(&[
            "hypnorm",
            "export-embeddings",
            "--checkpoint",
            bad_path.to_str().unwrap(),
            "--output",
            tsv.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_NUMERIC);
    }
}
