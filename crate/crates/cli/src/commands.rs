use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use tempograph_core::checkpoint::{read_kv_file, write_kv_file};
use tempograph_core::graph::{load_edge_list_with_labels, save_label_map};
use tempograph_core::metrics::{error_report, NodeIdentity};
use tempograph_core::pipeline::{self, Mode, RunConfig, Trained};
use tempograph_core::{
    load_edge_list, save_edge_list, Checkpoint, EdgeListImport, Error, Result, SnapshotMode,
    StartSampling, Walker,
};

use crate::{ConfigArgs, EvaluateArgs, GenerateArgs, TrainArgs, WalksArgs};

/// Checkpoint metadata keys holding the training config carry this prefix.
const CONFIG_PREFIX: &str = "config.";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

/// `<path><suffix>`, e.g. `gen.csv` + `.provenance`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_source(path: &Path) -> Result<EdgeListImport> {
    let import = load_edge_list(path, true)?;
    if import.duplicates_removed > 0 {
        log::warn!("{}: dropped {} duplicate records", path.display(), import.duplicates_removed);
    }
    Ok(import)
}

impl ConfigArgs {
    /// Layers the config file and then the flags over `cfg`.
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(path) = &self.config {
            cfg.apply_kv(&read_kv_file(path)?)?;
        }
        let mut flags: Vec<(&str, String)> = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                flags.push((k, v));
            }
        };
        put("mode", self.mode.clone());
        put("seed", self.seed.map(|v| v.to_string()));
        put("walk_len", self.walk_len.map(|v| v.to_string()));
        put("gen_len", self.gen_len.map(|v| v.to_string()));
        put("window", self.window.clone());
        put("components", self.components.map(|v| v.to_string()));
        put("clusters", self.clusters.map(|v| v.to_string()));
        put("beta", self.beta.map(|v| v.to_string()));
        put("target_edges", self.target_edges.map(|v| v.to_string()));
        put("target_nodes", self.target_nodes.map(|v| v.to_string()));
        put("snapshot_mode", self.snapshot_mode.clone());
        put("epochs", self.epochs.map(|v| v.to_string()));
        for (k, v) in flags {
            cfg.set(k, &v)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        self.apply(&mut cfg)?;
        Ok(cfg)
    }
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let import = load_source(&args.input)?;
    let g = &import.graph;
    log::info!(
        "training {} model on {} nodes, {} edges",
        cfg.mode,
        g.num_nodes(),
        g.num_edges()
    );
    create_dir(&args.output)?;
    write_kv_file(&cfg.to_kv(), args.output.join("config.txt"))?;
    save_label_map(&import.labels, args.output.join("labels.csv"))?;

    let (trained, curve) = pipeline::train(g, &cfg)?;
    write_text(&args.output.join("loss.csv"), &curve.to_csv())?;
    if let Trained::Inductive(b) = &trained {
        let mut s = String::from("node,cluster\n");
        for (label, k) in import.labels.iter().zip(&b.clusters) {
            s.push_str(&format!("{label},{k}\n"));
        }
        write_text(&args.output.join("clusters.csv"), &s)?;
        b.source_embeddings.save(args.output.join("embeddings.txt"))?;
        log::info!("false positives per boosting round: {:?}", b.false_positive_history);
    }

    let meta: BTreeMap<String, String> = cfg
        .to_kv()
        .into_iter()
        .map(|(k, v)| (format!("{CONFIG_PREFIX}{k}"), v))
        .collect();
    let ck = trained.to_checkpoint(&meta);
    let path = args.output.join("model.ckpt");
    ck.save(&path)?;
    log::info!(
        "final loss {:.5}; checkpoint {} ({})",
        curve.last().unwrap_or(f64::NAN),
        path.display(),
        ck.digest()
    );
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let trained = Trained::from_checkpoint(&ck)?;

    // Training settings come first so that only deliberate overrides differ.
    let mut cfg = RunConfig::default();
    let stored: BTreeMap<String, String> = ck
        .meta
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(CONFIG_PREFIX).map(|k| (k.to_string(), v.clone())))
        .collect();
    cfg.apply_kv(&stored)?;
    args.cfg.apply(&mut cfg)?;
    if cfg.mode != trained.mode() {
        return Err(Error::Config(format!(
            "checkpoint mode is {}, requested {}",
            trained.mode(),
            cfg.mode
        )));
    }

    let import = load_source(&args.input)?;
    let (out, seconds) = pipeline::generate(&trained, &import.graph, &cfg)?;
    let labels = match trained.mode() {
        Mode::Transductive => Some(import.labels.as_slice()),
        Mode::Inductive => None,
    };
    if let Some(dir) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_edge_list(&out.graph, labels, &args.output)?;

    let mut prov = out.provenance.clone();
    prov.insert("model_digest".into(), ck.digest());
    write_kv_file(&prov, sidecar(&args.output, ".provenance"))?;
    write_kv_file(&cfg.to_kv(), sidecar(&args.output, ".config"))?;
    write_text(
        &sidecar(&args.output, ".timing"),
        &format!("generation_seconds={seconds:.6}\n"),
    )?;
    log::info!(
        "wrote {} edges to {} in {seconds:.3}s",
        prov["emitted_edges"],
        args.output.display()
    );
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mode: SnapshotMode = args.snapshot_mode.parse()?;
    let prov_path = sidecar(&args.generated, ".provenance");
    let provenance = if prov_path.exists() {
        Some(read_kv_file(&prov_path)?)
    } else {
        None
    };
    let identity = match args.node_identity.as_deref() {
        Some("shared") => NodeIdentity::Shared,
        Some("disjoint") => NodeIdentity::Disjoint,
        Some(other) => return Err(Error::Config(format!("unknown node identity `{other}`"))),
        None => match provenance.as_ref().and_then(|p| p.get("mode")).map(String::as_str) {
            Some("inductive") => NodeIdentity::Disjoint,
            _ => NodeIdentity::Shared,
        },
    };

    let src = load_source(&args.input)?;
    let gen = match identity {
        NodeIdentity::Shared => load_edge_list_with_labels(&args.generated, &src.labels)?,
        NodeIdentity::Disjoint => load_edge_list(&args.generated, false)?.graph,
    };
    let report = error_report(&src.graph, &gen, mode, identity)?;

    create_dir(&args.output)?;
    write_text(&args.output.join("report.csv"), &report.to_csv())?;
    write_text(&args.output.join("report.json"), &report.to_json())?;
    write_text(&args.output.join("snapshots.csv"), &report.snapshots_csv())?;
    let timing_path = sidecar(&args.generated, ".timing");
    if timing_path.exists() {
        let timing = read_kv_file(&timing_path)?;
        if let Some(s) = timing.get("generation_seconds") {
            log::info!("generation took {s}s");
        }
        write_kv_file(&timing, args.output.join("timing.txt"))?;
    }
    log::info!(
        "{} snapshots; mean degree median error {:.4}; edge overlap {:.2}%",
        report.snapshots,
        report.median("mean_degree").unwrap_or(f64::NAN),
        report.overlap_percent
    );
    Ok(())
}

pub fn walks(args: &WalksArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let import = load_source(&args.input)?;
    let walker = Walker::new(&import.graph, cfg.walk_len, cfg.window)?;
    let sampling = match args.count {
        0 => StartSampling::Epoch,
        n => StartSampling::Uniform(n),
    };
    let set = walker.sample_walk_set(sampling, cfg.seed)?;
    let mut text = String::new();
    for w in &set.walks {
        text.push_str(&w.to_dump_line());
        text.push('\n');
    }
    if let Some(dir) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_text(&args.output, &text)?;
    log::info!("wrote {} walks to {}", set.walks.len(), args.output.display());
    Ok(())
}
