//! Command-line front end: one subcommand per pipeline stage.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use legalgraph::augment::AugMethod;
use legalgraph::eval::{Qrels, Report, RunRanking};
use legalgraph::features::{
    export_requests, load_embeddings, read_prompt_export, write_embeddings, write_prompt_export, EmbeddingMap,
    EmbeddingProvider, PromptTemplateSet, StubEncoder, TemplateId,
};
use legalgraph::model::{Checkpoint, GnnKind, ReadoutKind};
use legalgraph::objective::AugMode;
use legalgraph::pipeline::{
    evaluate_run, featurize_corpus, synth_generate, with_workers, Dataset, PoolCache, Prepared, RunConfig,
};
use legalgraph::tacg::build_case_pair;
use legalgraph::{Error, Result};

#[derive(Parser)]
#[command(name = "legalgraph", version, about = "Legal case retrieval over case graphs")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output and input directory, overriding `paths.dir`.
    #[arg(long, global = true)]
    dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    two_stage: bool,
    #[arg(long, global = true)]
    stage1_k: Option<usize>,
    #[arg(long, global = true, value_parser = ["eugat", "edgegat", "gat", "gcn"])]
    gnn: Option<String>,
    #[arg(long, global = true, value_parser = ["global", "avg"])]
    readout: Option<String>,
    /// Build graphs without the global node.
    #[arg(long, global = true)]
    no_global: bool,
    #[arg(long, global = true, value_parser = ["none", "edge-drop", "mask-node", "mask-edge"])]
    aug: Option<String>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    p_node: Option<f64>,
    #[arg(long, global = true)]
    p_edge: Option<f64>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    n_easy: Option<usize>,
    #[arg(long, global = true)]
    n_hard: Option<usize>,
    #[arg(long, global = true, value_parser = ["none", "p0", "p1", "p2", "p3"])]
    template: Option<String>,
    #[arg(long, global = true)]
    edge_keep: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with train and test judgments.
    Synth,
    /// Build fact and issue graphs for every case.
    BuildGraphs,
    /// Write the encoding prompts needed by the corpus.
    ExportPrompts {
        /// Also export one whole-case prompt per document.
        #[arg(long)]
        whole_case: bool,
    },
    /// Check an embedding file against the corpus and install it.
    ImportEmbeddings {
        /// Embedding file to import; with `--stub` the exported prompts are
        /// encoded by the hashing encoder instead.
        #[arg(long, required_unless_present = "stub")]
        input: Option<PathBuf>,
        #[arg(long)]
        stub: bool,
    },
    /// Train and write the checkpoint and loss trace.
    Train {
        /// Also write one checkpoint per epoch.
        #[arg(long)]
        keep_epochs: bool,
    },
    /// Encode the candidate pool and cache it next to the checkpoint.
    Index,
    /// Rank candidates for the test queries.
    Retrieve {
        /// Rank with BM25 instead of the checkpoint.
        #[arg(long)]
        bm25: bool,
        /// Rank the training queries instead.
        #[arg(long)]
        train_queries: bool,
    },
    /// Score the run against the test judgments.
    Evaluate,
}

fn apply(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &o.dir {
        cfg.paths.dir = d.clone();
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
        cfg.synth.seed = s;
    }
    if let Some(e) = o.epochs {
        cfg.epochs = e;
    }
    if let Some(k) = o.k {
        cfg.retrieval.k = k;
    }
    if o.two_stage {
        cfg.retrieval.two_stage = true;
    }
    if let Some(k) = o.stage1_k {
        cfg.retrieval.stage1_k = k;
    }
    if let Some(g) = &o.gnn {
        cfg.model.gnn_kind = g.parse::<GnnKind>()?;
    }
    if let Some(r) = &o.readout {
        cfg.model.readout_kind = r.parse::<ReadoutKind>()?;
    }
    if o.no_global {
        cfg.features.include_global = false;
    }
    if let Some(a) = &o.aug {
        cfg.augment.method = a.parse::<AugMethod>()?;
        if cfg.augment.method == AugMethod::None {
            cfg.loss.aug_mode = AugMode::None;
        }
    }
    if let Some(x) = o.epsilon {
        cfg.augment.epsilon = x;
    }
    if let Some(x) = o.p_node {
        cfg.augment.p_node = x;
    }
    if let Some(x) = o.p_edge {
        cfg.augment.p_edge = x;
    }
    if let Some(x) = o.tau {
        cfg.loss.tau = x;
    }
    if let Some(x) = o.n_easy {
        cfg.loss.n_easy = x;
    }
    if let Some(x) = o.n_hard {
        cfg.loss.n_hard = x;
    }
    if let Some(t) = &o.template {
        cfg.features.template = t.parse::<TemplateId>()?;
    }
    if let Some(x) = o.edge_keep {
        cfg.features.edge_keep = x;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn path(cfg: &RunConfig, p: &Path) -> PathBuf {
    cfg.paths.resolve(p)
}

fn require(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "missing input")))
    }
}

fn write(p: &Path, text: &str) -> Result<()> {
    std::fs::write(p, text).map_err(|e| Error::io(p, e))
}

fn load_prepared(cfg: &RunConfig) -> Result<Prepared> {
    let corpus = path(cfg, &cfg.paths.corpus);
    let train_q = path(cfg, &cfg.paths.train_qrels);
    let test_q = path(cfg, &cfg.paths.test_qrels);
    for p in [&corpus, &train_q, &test_q] {
        require(p)?;
    }
    Prepared::new(cfg, Dataset::load(&corpus)?, Qrels::load(&train_q)?, Qrels::load(&test_q)?)
}

fn load_checkpoint(cfg: &RunConfig) -> Result<(Checkpoint, String)> {
    let p = path(cfg, &cfg.paths.checkpoint);
    require(&p)?;
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let ckpt = Checkpoint::from_json(&text)?;
    if ckpt.config.in_dim != cfg.model.in_dim {
        return Err(Error::DimMismatch {
            expected: ckpt.config.in_dim,
            found: cfg.model.in_dim,
        });
    }
    Ok((ckpt, text))
}

/// Cache key over everything the pool encoding depends on.
fn pool_key(cfg: &RunConfig, checkpoint_text: &str) -> Result<String> {
    let corpus = path(cfg, &cfg.paths.corpus);
    let corpus_bytes = std::fs::read(&corpus).map_err(|e| Error::io(&corpus, e))?;
    let features = serde_json::to_string(&cfg.features).map_err(|e| Error::Config(e.to_string()))?;
    let mut h = Sha256::new();
    for part in [checkpoint_text.as_bytes(), &corpus_bytes, features.as_bytes(), &cfg.seed.to_le_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    if let Some(e) = &cfg.paths.embeddings {
        let p = path(cfg, e);
        h.update(std::fs::read(&p).map_err(|err| Error::io(&p, err))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = apply(&cli.overrides)?;
    let dir = &cfg.paths.dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match cli.command {
        Command::Synth => {
            let s = synth_generate(&cfg.synth)?;
            let ds = Dataset::new(s.docs)?;
            ds.save(&path(&cfg, &cfg.paths.corpus))?;
            s.train_qrels.save(&path(&cfg, &cfg.paths.train_qrels))?;
            s.test_qrels.save(&path(&cfg, &cfg.paths.test_qrels))?;
            println!(
                "wrote {} cases, {} train and {} test queries to {}",
                ds.len(),
                s.train_qrels.len(),
                s.test_qrels.len(),
                dir.display()
            );
        }
        Command::BuildGraphs => {
            let corpus = path(&cfg, &cfg.paths.corpus);
            require(&corpus)?;
            let ds = Dataset::load(&corpus)?;
            let mut out = String::new();
            for d in &ds.docs {
                let (fact, issue) = build_case_pair(d, cfg.features.include_global)?;
                let line = serde_json::json!({"case_id": d.case_id, "fact": fact, "issue": issue});
                out.push_str(&line.to_string());
                out.push('\n');
            }
            let p = path(&cfg, &cfg.paths.graphs);
            write(&p, &out)?;
            println!("wrote graphs for {} cases to {}", ds.len(), p.display());
        }
        Command::ExportPrompts { whole_case } => {
            let corpus = path(&cfg, &cfg.paths.corpus);
            require(&corpus)?;
            let ds = Dataset::load(&corpus)?;
            let set = PromptTemplateSet::get(cfg.features.template);
            let reqs = export_requests(&ds.docs, &set, cfg.features.include_global, whole_case)?;
            let p = path(&cfg, &cfg.paths.prompts);
            write_prompt_export(&p, &reqs)?;
            println!("wrote {} prompts to {}", reqs.len(), p.display());
        }
        Command::ImportEmbeddings { input, stub } => {
            let corpus = path(&cfg, &cfg.paths.corpus);
            require(&corpus)?;
            let ds = Dataset::load(&corpus)?;
            let map = if stub {
                let prompts = path(&cfg, &cfg.paths.prompts);
                require(&prompts)?;
                let enc = StubEncoder::new(cfg.model.in_dim, cfg.features.encoder_seed)?;
                let mut map = EmbeddingMap::new(cfg.model.in_dim);
                for (i, r) in read_prompt_export(&prompts)?.into_iter().enumerate() {
                    map.insert(r.key, enc.encode(&r.prompt), i + 1)?;
                }
                map
            } else {
                let input = input.expect("clap requires --input without --stub");
                require(&input)?;
                load_embeddings(&input)?
            };
            if map.dim() != cfg.model.in_dim {
                return Err(Error::DimMismatch {
                    expected: cfg.model.in_dim,
                    found: map.dim(),
                });
            }
            // Every graph of the corpus must be featurisable from the file.
            featurize_corpus(&ds.docs, &cfg, &map)?;
            let target = cfg.paths.embeddings.clone().unwrap_or_else(|| "embeddings.jsonl".into());
            let p = path(&cfg, &target);
            write_embeddings(&p, map.iter())?;
            println!("installed {} embeddings at {}", map.len(), p.display());
        }
        Command::Train { keep_epochs } => {
            let prep = load_prepared(&cfg)?;
            let run_echo = serde_json::to_value(&cfg).map_err(|e| Error::Config(e.to_string()))?;
            let ckpt_path = path(&cfg, &cfg.paths.checkpoint);
            let mut hook = |epoch: usize, params: &legalgraph::model::EugatParams, loss: f64| -> Result<()> {
                if keep_epochs {
                    let stem = ckpt_path.file_stem().unwrap_or_default().to_string_lossy();
                    let p = ckpt_path.with_file_name(format!("{stem}.epoch-{:03}.json", epoch + 1));
                    Checkpoint::new(params, &cfg.model, cfg.seed, run_echo.clone()).save(&p)?;
                }
                eprintln!("epoch {} loss {loss:.6}", epoch + 1);
                Ok(())
            };
            let out = with_workers(|| prep.train(&cfg, &mut hook))??;
            Checkpoint::new(&out.params, &cfg.model, cfg.seed, run_echo).save(&ckpt_path)?;
            let stats = serde_json::to_string_pretty(&out.stats).map_err(|e| Error::Config(e.to_string()))?;
            let trace = ckpt_path.with_file_name("train_stats.json");
            write(&trace, &stats)?;
            println!("wrote {} and {}", ckpt_path.display(), trace.display());
        }
        Command::Index => {
            let prep = load_prepared(&cfg)?;
            let (ckpt, text) = load_checkpoint(&cfg)?;
            let key = pool_key(&cfg, &text)?;
            let pool = with_workers(|| prep.encode_pool(&cfg_with(&cfg, &ckpt), &ckpt.params()?))??;
            let side = PoolCache::sidecar_path(&path(&cfg, &cfg.paths.checkpoint));
            PoolCache { key, pool }.save(&side)?;
            println!("indexed {} candidates into {}", prep.pool.len(), side.display());
        }
        Command::Retrieve { bm25, train_queries } => {
            let prep = load_prepared(&cfg)?;
            let queries = if train_queries { &prep.train_qrels } else { &prep.test_qrels };
            let (run, short) = if bm25 {
                (prep.bm25_run(&cfg, queries)?, Vec::new())
            } else {
                let (ckpt, text) = load_checkpoint(&cfg)?;
                let model_cfg = cfg_with(&cfg, &ckpt);
                let params = ckpt.params()?;
                let key = pool_key(&cfg, &text)?;
                let side = PoolCache::sidecar_path(&path(&cfg, &cfg.paths.checkpoint));
                let pool = match PoolCache::load_matching(&side, &key) {
                    Some(p) if p.ids == prep.pool => p,
                    _ => {
                        let p = with_workers(|| prep.encode_pool(&model_cfg, &params))??;
                        PoolCache { key, pool: p.clone() }.save(&side)?;
                        p
                    }
                };
                with_workers(|| prep.retrieve(&model_cfg, &params, &pool, queries))??
            };
            for q in &short {
                eprintln!("warning: query {q} has fewer than {} first-stage candidates", cfg.retrieval.k);
            }
            let p = path(&cfg, &cfg.paths.run);
            run.save(&p)?;
            println!("wrote rankings for {} queries to {}", run.map.len(), p.display());
        }
        Command::Evaluate => {
            let run_p = path(&cfg, &cfg.paths.run);
            let qrels_p = path(&cfg, &cfg.paths.test_qrels);
            require(&run_p)?;
            require(&qrels_p)?;
            let run = RunRanking::load(&run_p)?;
            let qrels = Qrels::load(&qrels_p)?;
            let eval = evaluate_run(&cfg, &run, &qrels)?;
            let flagged: Vec<String> = run
                .map
                .iter()
                .filter(|(_, l)| l.len() < eval.k)
                .map(|(q, _)| q.clone())
                .collect();
            let report = Report::new(&eval, &run, flagged);
            let p = path(&cfg, &cfg.paths.report);
            write(&p, &report.to_json()?)?;
            println!("{}", report.summary_line());
        }
    }
    Ok(())
}

/// The run configuration with the checkpoint's model settings.
fn cfg_with(cfg: &RunConfig, ckpt: &Checkpoint) -> RunConfig {
    let mut c = cfg.clone();
    c.model = ckpt.config.clone();
    c
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
