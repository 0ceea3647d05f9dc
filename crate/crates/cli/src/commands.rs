use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use cat_core::attention::Variant;
use cat_core::kg::{evaluate, load_triples, KgModel, Metrics, Split, TripleStore};
use cat_core::trainer::{export_routing, train_with, RoutingSummary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{build_id, sha256_file, DatasetEntry, RunManifest, Timings};
use crate::{BenchArgs, CommonArgs, EvalArgs, RouteExportArgs, TrainArgs};

/// Config file (if any) with `--seed`, `--variant` and `--set` applied.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(v) = common.variant {
        cfg.train.variant = v.into();
    }
    let cwd = std::env::current_dir().map_err(|e| CliError::io(".", e))?;
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{o}'")))?;
        cfg.set(k.trim(), v.trim(), &cwd)?;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn require_config(common: &CommonArgs, cmd: &str) -> Result<RunConfig> {
    if common.config.is_none() {
        return Err(CliError::Usage(format!("{cmd} requires --config")));
    }
    resolve_config(common)
}

fn out_dir(common: &CommonArgs, cmd: &str) -> Result<PathBuf> {
    let dir = common
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Usage(format!("{cmd} requires --out-dir")))?;
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn load_store(cfg: &RunConfig) -> Result<TripleStore> {
    let (train, valid, test) = cfg.data_paths()?;
    Ok(load_triples(train, valid, test)?)
}

/// `metric=<name> value=<v> split=<split> seed=<seed>` lines.
pub fn metric_lines(m: &Metrics, split: Split, seed: u64) -> String {
    format!(
        "metric=mrr value={} split={split} seed={seed}\nmetric=hits_at_10 value={} split={split} seed={seed}\nmetric=n_evaluated value={} split={split} seed={seed}\n",
        m.mrr, m.hits_at_10, m.n_evaluated
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Trains, then writes `config.toml`, `epochs.jsonl`, `best.catw`,
/// `metrics.txt` and `manifest.json` into the output directory.
pub fn train(args: &TrainArgs) -> Result<RunManifest> {
    let t0 = Instant::now();
    let cfg = require_config(&args.common, "train")?;
    let dir = out_dir(&args.common, "train")?;
    let store = load_store(&cfg)?;
    let load_s = t0.elapsed().as_secs_f64();

    let log_path = dir.join("epochs.jsonl");
    let file = File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let t1 = Instant::now();
    let outcome = train_with::<f64>(&store, &cfg.train, |rec| {
        let line = serde_json::to_string(rec).expect("epoch record serializes");
        writeln!(log, "{line}")
            .and_then(|_| log.flush())
            .map_err(|e| cat_core::Error::Io {
                path: log_path.clone(),
                source: e,
            })
    })?;
    let train_s = t1.elapsed().as_secs_f64();
    drop(log);

    let ckpt = dir.join("best.catw");
    outcome.model.save(&ckpt)?;

    let t2 = Instant::now();
    let mut metrics = std::collections::BTreeMap::new();
    let mut lines = String::new();
    for split in [Split::Valid, Split::Test] {
        if store.split(split).is_empty() {
            continue;
        }
        let m = evaluate(&store, &outcome.model, split)?;
        lines.push_str(&metric_lines(&m, split, cfg.train.seed));
        metrics.insert(split.name().to_string(), m);
    }
    let eval_s = t2.elapsed().as_secs_f64();
    write_text(&dir.join("metrics.txt"), &lines)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;

    let (tr, va, te) = cfg.data_paths()?;
    let datasets = [(Split::Train, tr), (Split::Valid, va), (Split::Test, te)]
        .into_iter()
        .map(|(split, path)| {
            Ok(DatasetEntry {
                split: split.name().into(),
                path: path.display().to_string(),
                sha256: sha256_file(path)?,
                triples: store.split(split).len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        command: "train".into(),
        build: build_id(),
        seed: cfg.train.seed,
        variant: cfg.train.variant.name().into(),
        config: cfg.to_map(),
        datasets,
        num_entities: store.num_entities(),
        num_relations: store.num_relations(),
        num_params: outcome.model.num_params(),
        best_epoch: outcome.best_epoch,
        checkpoint: ckpt.display().to_string(),
        metrics,
        timings: Timings {
            load_s,
            train_s,
            eval_s,
            total_s: t0.elapsed().as_secs_f64(),
        },
    };
    manifest.write(&dir.join("manifest.json"))?;
    print!("{lines}");
    Ok(manifest)
}

fn load_model(cfg: &RunConfig, store: &TripleStore, checkpoint: &Path) -> Result<KgModel<f64>> {
    let mc = cfg.train.model_config(store.num_entities(), store.num_relations());
    Ok(KgModel::load(checkpoint, mc)?)
}

fn checkpoint_path(explicit: &Option<PathBuf>, common: &CommonArgs) -> Result<PathBuf> {
    match (explicit, &common.out_dir) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(d)) => Ok(d.join("best.catw")),
        (None, None) => Err(CliError::Usage("pass --checkpoint or --out-dir".into())),
    }
}

/// Prints filtered metrics and, with `--out-dir`, writes `metrics_<split>.txt`.
pub fn eval(args: &EvalArgs) -> Result<Metrics> {
    let cfg = require_config(&args.common, "eval")?;
    let store = load_store(&cfg)?;
    let model = load_model(&cfg, &store, &checkpoint_path(&args.checkpoint, &args.common)?)?;
    let split: Split = args.split.into();
    let m = evaluate(&store, &model, split)?;
    let lines = metric_lines(&m, split, cfg.train.seed);
    if let Some(dir) = &args.common.out_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_text(&dir.join(format!("metrics_{split}.txt")), &lines)?;
    }
    print!("{lines}");
    Ok(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub variant: Variant,
    pub params: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// Times eval-mode forward passes of randomly initialized models.
pub fn bench(args: &BenchArgs) -> Result<Vec<BenchRow>> {
    let cfg = resolve_config(&args.common)?;
    if args.batch_size == 0 || args.iters == 0 {
        return Err(CliError::Usage("--batch-size and --iters must be positive".into()));
    }
    let (entities, relations) = match cfg.data_paths() {
        Ok(_) => {
            let s = load_store(&cfg)?;
            (s.num_entities(), s.num_relations())
        }
        Err(_) => (args.entities, args.relations),
    };
    let variants: Vec<Variant> = match args.common.variant {
        Some(v) => vec![v.into()],
        None => Variant::ALL.to_vec(),
    };
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    for variant in variants {
        let mut tc = cfg.train.clone();
        tc.variant = variant;
        let model = KgModel::<f64>::init(tc.model_config(entities, relations), &mut rng)?;
        let pairs: Vec<(usize, usize)> = (0..args.batch_size)
            .map(|_| (rng.gen_range(0..entities), rng.gen_range(0..relations)))
            .collect();
        for _ in 0..args.warmup {
            std::hint::black_box(model.score_batch(&pairs)?);
        }
        let mut times = Vec::with_capacity(args.iters);
        for _ in 0..args.iters {
            let t = Instant::now();
            std::hint::black_box(model.score_batch(&pairs)?);
            times.push(t.elapsed().as_secs_f64() * 1e3);
        }
        let (mean_ms, std_ms) = mean_std(&times);
        rows.push(BenchRow {
            variant,
            params: model.num_params(),
            mean_ms,
            std_ms,
        });
    }

    let mut report = String::new();
    for r in &rows {
        report.push_str(&format!(
            "variant={} params={} mean_ms={:.4} std_ms={:.4} batch_size={} warmup={} iters={} entities={entities} relations={relations}\n",
            r.variant, r.params, r.mean_ms, r.std_ms, args.batch_size, args.warmup, args.iters
        ));
    }
    let find = |v: Variant| rows.iter().find(|r| r.variant == v);
    if let (Some(cat), Some(e), Some(h), Some(s)) = (
        find(Variant::Cat),
        find(Variant::Euclidean),
        find(Variant::Hyperbolic),
        find(Variant::Spherical),
    ) {
        report.push_str(&format!(
            "cat_over_euclidean_params={:.4} cat_over_sum_fixed_latency={:.4}\n",
            cat.params as f64 / e.params as f64,
            cat.mean_ms / (e.mean_ms + h.mean_ms + s.mean_ms)
        ));
    }
    if let Some(dir) = &args.common.out_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_text(&dir.join("bench.txt"), &report)?;
    }
    print!("{report}");
    Ok(rows)
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Writes the routing export and prints the per-geometry means.
pub fn route_export(args: &RouteExportArgs) -> Result<RoutingSummary> {
    let cfg = require_config(&args.common, "route-export")?;
    if !cfg.train.variant.is_routed() {
        return Err(cat_core::Error::UnsupportedVariant(format!(
            "routing export needs the cat variant, config has '{}'",
            cfg.train.variant
        ))
        .into());
    }
    let split: Split = args.split.into();
    let out = match (&args.out, &args.common.out_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => {
            fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
            d.join(format!("routing_{split}.tsv"))
        }
        (None, None) => return Err(CliError::Usage("pass --out or --out-dir".into())),
    };
    let store = load_store(&cfg)?;
    let model = load_model(&cfg, &store, &checkpoint_path(&args.checkpoint, &args.common)?)?;
    let summary = export_routing(&model, &store, split, &out)?;
    println!(
        "rows={} alpha_e_mean={} alpha_h_mean={} alpha_s_mean={} split={split} path={}",
        summary.rows,
        summary.mean[0],
        summary.mean[1],
        summary.mean[2],
        out.display()
    );
    Ok(summary)
}
