//! Subcommand implementations.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use sam_core::dataset::{generate_synthetic, load_dataset, save_dataset, Dataset, Split, SyntheticConfig};
use sam_core::eval::evaluate_at_k;
use sam_core::projection::{load_checkpoint, save_checkpoint, CheckpointMeta};
use sam_core::trainer::{
    train_with_observer, AblationMode, EpochStats, SelectionMetric, TrainConfig, TrainObserver,
    TrainOutput,
};
use sam_core::Error;

use crate::{
    AblationArg, CliError, EvalArgs, MarginsArgs, SelectionArg, SplitArg, SweepArgs, SynthArgs,
    TrainArgs, TrainOpts,
};

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

impl SplitArg {
    fn to_split(self) -> Split {
        match self {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let cfg = SyntheticConfig {
        n_categories: args.categories,
        per_category: args.per_category,
        d_v: args.dv,
        d_t: args.dt,
        intra_spread: args.intra_spread,
        inter_sep: args.inter_sep,
        seed: args.seed,
    };
    let ds = generate_synthetic(&cfg)?;
    save_dataset(&ds, &args.out)?;
    println!(
        "wrote {} instances ({} categories, d_v={}, d_t={}) to {}",
        ds.instances.len(),
        ds.n_categories(),
        ds.d_v,
        ds.d_t,
        args.out.display()
    );
    Ok(())
}

/// Defaults, overlaid by a `--config` file, overlaid by explicit flags.
fn resolve_config(opts: &TrainOpts, seed: Option<u64>) -> Result<TrainConfig, CliError> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let raw = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&raw)
                .map_err(|e| CliError::Data(format!("bad config {}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = opts.epochs {
        cfg.margin.total_epochs = v;
    }
    if let Some(v) = opts.lambda {
        cfg.margin.semantic_weight = v;
    }
    if let Some(v) = opts.fa {
        cfg.margin.activation_fraction = v;
    }
    if let Some(v) = opts.k {
        cfg.margin.steepness = v;
    }
    if let Some(v) = opts.margin {
        cfg.margin.static_margin = v;
    }
    if let Some(v) = opts.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = opts.lr_decay {
        cfg.lr_decay = v;
    }
    if let Some(v) = opts.momentum {
        cfg.momentum = v;
    }
    if let Some(v) = opts.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = opts.n_neg {
        cfg.n_neg = v;
    }
    if let Some(v) = opts.hidden_dim {
        cfg.hidden_dim = v;
    }
    if let Some(v) = opts.dim {
        cfg.out_dim = v;
    }
    if let Some(v) = opts.dropout {
        cfg.dropout_p = v;
    }
    if let Some(v) = opts.max_pairs {
        cfg.max_stat_pairs = v;
    }
    if let Some(v) = opts.selection {
        cfg.selection = match v {
            SelectionArg::Map => SelectionMetric::ValidationMap,
            SelectionArg::StaticLoss => SelectionMetric::StaticMarginLoss,
        };
    }
    if let Some(v) = opts.ablation {
        cfg.ablation = match v {
            AblationArg::None => AblationMode::None,
            AblationArg::Static => AblationMode::Static,
            AblationArg::Alpha1Lambda1 => AblationMode::Alpha1Lambda1,
        };
    }
    if opts.timing {
        cfg.record_timing = true;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Everything needed to reproduce a run, written before training begins.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: Vec<String>,
    dataset: String,
    output: String,
    timestamp_unix: u64,
    version: &'a str,
    config: &'a TrainConfig,
}

struct Progress {
    total: usize,
}

impl TrainObserver for Progress {
    fn on_epoch(&mut self, s: &EpochStats) {
        eprintln!(
            "epoch {:>4}/{} loss {:.6} val {:.4} alpha {:.4} mean_margin {:.4} ({:.1}s)",
            s.epoch, self.total, s.train_loss, s.val_metric, s.alpha, s.mean_margin, s.seconds
        );
    }
}

/// Runs training and writes the run directory; returns the trained output so
/// `sweep` can evaluate without reloading.
pub fn train(args: TrainArgs) -> Result<TrainOutput, CliError> {
    let cfg = resolve_config(&args.opts, args.seed)?;
    let ds = load_dataset(&args.data)?;
    run_training(&ds, &cfg, &args.data, &args.out, true)
}

fn run_training(
    ds: &Dataset,
    cfg: &TrainConfig,
    data_dir: &Path,
    out_dir: &Path,
    verbose: bool,
) -> Result<TrainOutput, CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;

    let manifest = RunManifest {
        command: std::env::args().collect(),
        dataset: data_dir.display().to_string(),
        output: out_dir.display().to_string(),
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
    };
    write_file(
        &out_dir.join("run.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    write_file(
        &out_dir.join("config.json"),
        serde_json::to_string_pretty(cfg).expect("config serializes") + "\n",
    )?;

    let output = if verbose {
        let mut progress = Progress {
            total: cfg.margin.total_epochs,
        };
        train_with_observer(ds, cfg, &mut progress)?
    } else {
        sam_core::trainer::train(ds, cfg)?
    };

    let meta = CheckpointMeta {
        d_v: ds.d_v,
        d_t: ds.d_t,
        hidden_dim: cfg.hidden_dim,
        out_dim: cfg.out_dim,
        dropout_p: cfg.dropout_p,
        seed: cfg.seed,
        epoch: output.history.best_epoch.unwrap_or(0),
        categories: ds.categories.clone(),
    };
    save_checkpoint(&out_dir.join("checkpoint-best"), &output.net_v, &output.net_t, &meta)?;
    write_file(&out_dir.join("history.csv"), output.history.to_csv_string())?;
    write_file(&out_dir.join("margins.csv"), output.trace.to_csv_string())?;

    if verbose {
        if let Some(best) = output.history.best_epoch {
            let stats = &output.history.epochs[best - 1];
            println!(
                "best epoch {best}: val_metric {:.4}; artifacts in {}",
                stats.val_metric,
                out_dir.display()
            );
        }
    }
    Ok(output)
}

fn check_compat(meta: &CheckpointMeta, ds: &Dataset) -> Result<(), CliError> {
    if meta.d_v != ds.d_v || meta.d_t != ds.d_t {
        return Err(Error::IncompatibleCheckpoint(format!(
            "checkpoint dims d_v={}, d_t={} but dataset has d_v={}, d_t={}",
            meta.d_v, meta.d_t, ds.d_v, ds.d_t
        ))
        .into());
    }
    if meta.categories != ds.categories {
        return Err(Error::IncompatibleCheckpoint(
            "checkpoint and dataset category lists differ".into(),
        )
        .into());
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let checkpoint_dir = match (&args.checkpoint, &args.run) {
        (Some(c), _) => c.clone(),
        (None, Some(r)) => r.join("checkpoint-best"),
        (None, None) => unreachable!("clap enforces the source group"),
    };
    let ds = load_dataset(&args.data)?;
    let (net_v, net_t, meta) = load_checkpoint(&checkpoint_dir)?;
    check_compat(&meta, &ds)?;

    let report = evaluate_at_k(&net_v, &net_t, &ds, args.split.to_split(), args.at_k)?;
    println!("{}", report.table_string());

    let out_path = args
        .out
        .clone()
        .or_else(|| args.run.as_ref().map(|r| r.join("eval.csv")));
    if let Some(path) = out_path {
        write_file(&path, report.to_csv_string())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Clone)]
struct SweepCell {
    lambda: f64,
    fa: f64,
    map_i2t: f64,
    map_t2i: f64,
    map_avg: f64,
    std: f64,
}

impl SweepCell {
    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.lambda, self.fa, self.map_i2t, self.map_t2i, self.map_avg, self.std
        )
    }
}

const SWEEP_HEADER: &str = "lambda,fa,map_i2t,map_t2i,map_avg,std";

/// Default sweep grids: every (λ, f_a) combination of the parameter analysis.
pub const DEFAULT_LAMBDAS: [f64; 5] = [0.0, 0.1, 0.25, 0.75, 1.0];
pub const DEFAULT_FAS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

fn grid(lambdas: &[f64], fas: &[f64]) -> Vec<(f64, f64)> {
    lambdas
        .iter()
        .flat_map(|&l| fas.iter().map(move |&f| (l, f)))
        .collect()
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    if args.lambdas.is_empty() || args.fas.is_empty() {
        return Err(CliError::Data("sweep grids must be non-empty".into()));
    }
    if args.repeats == 0 {
        return Err(CliError::Data("repeats must be positive".into()));
    }
    if args.threads == 0 {
        return Err(CliError::Data("threads must be positive".into()));
    }
    let base_cfg = resolve_config(&args.opts, args.seed)?;
    let ds = load_dataset(&args.data)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", args.out.display())))?;

    let cells = grid(&args.lambdas, &args.fas);
    let csv_path = args.out.join("sweep.csv");
    write_file(&csv_path, format!("{SWEEP_HEADER}\n"))?;

    let run_cell = |&(lambda, fa): &(f64, f64)| -> Result<SweepCell, CliError> {
        let mut maps_i2t = Vec::with_capacity(args.repeats);
        let mut maps_t2i = Vec::with_capacity(args.repeats);
        let mut maps_avg = Vec::with_capacity(args.repeats);
        for rep in 0..args.repeats {
            let mut cfg = base_cfg.clone();
            cfg.margin.semantic_weight = lambda;
            cfg.margin.activation_fraction = fa;
            // same seed set in every cell, so cells differ only by the grid point
            cfg.seed = base_cfg.seed.wrapping_add(rep as u64);
            cfg.validate()?;
            let output = sam_core::trainer::train(&ds, &cfg)?;
            let report = evaluate_at_k(&output.net_v, &output.net_t, &ds, Split::Test, None)?;
            maps_i2t.push(report.map_i2t);
            maps_t2i.push(report.map_t2i);
            maps_avg.push(report.map_avg);
        }
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let avg = mean(&maps_avg);
        let std = if maps_avg.len() > 1 {
            let var = maps_avg.iter().map(|x| (x - avg) * (x - avg)).sum::<f64>()
                / (maps_avg.len() - 1) as f64;
            var.sqrt()
        } else {
            0.0
        };
        Ok(SweepCell {
            lambda,
            fa,
            map_i2t: mean(&maps_i2t),
            map_t2i: mean(&maps_t2i),
            map_avg: avg,
            std,
        })
    };

    let results: Mutex<Vec<Option<SweepCell>>> = Mutex::new(vec![None; cells.len()]);
    let csv = Mutex::new(
        fs::OpenOptions::new()
            .append(true)
            .open(&csv_path)
            .map_err(|e| CliError::Data(format!("cannot open {}: {e}", csv_path.display())))?,
    );
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<CliError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..args.threads.min(cells.len()) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= cells.len() || failure.lock().unwrap().is_some() {
                    return;
                }
                match run_cell(&cells[index]) {
                    Ok(cell) => {
                        eprintln!(
                            "cell {}/{}: lambda={} fa={} map_avg={:.4} (std {:.4})",
                            index + 1,
                            cells.len(),
                            cell.lambda,
                            cell.fa,
                            cell.map_avg,
                            cell.std
                        );
                        // flush the row immediately so partial sweeps survive
                        let _ = writeln!(csv.lock().unwrap(), "{}", cell.csv_row());
                        results.lock().unwrap()[index] = Some(cell);
                    }
                    Err(e) => {
                        let mut slot = failure.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(e);
                        }
                        return;
                    }
                }
            });
        }
    });

    if let Some(err) = failure.into_inner().unwrap() {
        return Err(err);
    }

    // rewrite in grid order: with --threads > 1 the append order is a race
    let rows = results.into_inner().unwrap();
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for cell in rows.into_iter().flatten() {
        out.push_str(&cell.csv_row());
        out.push('\n');
    }
    write_file(&csv_path, out)?;
    println!("wrote {}", csv_path.display());
    Ok(())
}

pub fn margins(args: MarginsArgs) -> Result<(), CliError> {
    let path = args.run.join("margins.csv");
    let contents = fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    match contents.lines().next() {
        Some("epoch,alpha,cat_a,cat_b,mean_margin,count") => {}
        _ => {
            return Err(CliError::Data(format!(
                "{} does not look like a margin trace",
                path.display()
            )))
        }
    }
    match args.out {
        Some(out) => {
            write_file(&out, contents)?;
            println!("wrote {}", out.display());
        }
        None => print!("{contents}"),
    }
    Ok(())
}
