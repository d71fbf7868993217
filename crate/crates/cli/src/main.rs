use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use coldstart_core::config::EngineConfig;
use coldstart_core::embed::HashingEmbedder;
use coldstart_core::enrichment::Enricher;
use coldstart_core::eval::synth::{synthetic_movielens, SynthConfig};
use coldstart_core::eval::{
    emit_report, load_movielens, parse_models, render_table, write_movielens, Catalog, Harness,
};
use coldstart_core::provider::{GenerationProvider, RemoteChatProvider, RemoteConfig, RemoteCrossEncoder};
use coldstart_service::AppState;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "engine", version, about = "Cold-start recommendation engine")]
struct Cli {
    /// TOML configuration file; any omitted setting keeps its default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Offline cold-start evaluation on MovieLens-format data.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated: random, popularity, embedding_cosine, candidates_only, full_ce.
        #[arg(long, default_value = "random,popularity,embedding_cosine,candidates_only,full_ce")]
        models: String,
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Cross-encoder endpoint used by full_ce.
        #[arg(long)]
        provider: Option<String>,
        #[arg(long)]
        cold_ratio: Option<f64>,
        #[arg(long)]
        relevance_threshold: Option<u8>,
    },
    /// Runs the HTTP JSON API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// JSON-lines item file or MovieLens directory.
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Writes a seeded synthetic dataset in the MovieLens layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 600)]
        users: usize,
        #[arg(long, default_value_t = 400)]
        movies: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Prints the effective configuration as TOML.
    Config,
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    match path {
        Some(p) => EngineConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(EngineConfig::default()),
    }
}

fn scorer_config(cfg: &EngineConfig, url: &str) -> RemoteConfig {
    match &cfg.providers.scorer {
        Some(c) => RemoteConfig {
            endpoint: url.to_string(),
            ..c.clone()
        },
        None => RemoteConfig {
            endpoint: url.to_string(),
            model: "cross-encoder".into(),
            token_env: "COLDSTART_API_TOKEN".into(),
            timeout_secs: 30,
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn eval(
    mut cfg: EngineConfig,
    data: &Path,
    models: &str,
    seeds: Option<u32>,
    k: Option<usize>,
    out: &Path,
    provider: Option<String>,
    cold_ratio: Option<f64>,
    relevance_threshold: Option<u8>,
) -> Result<()> {
    let models = parse_models(models)?;
    if models.is_empty() {
        bail!("no models selected");
    }
    let ev = &mut cfg.eval;
    if let Some(s) = seeds {
        ev.seeds = s;
    }
    if let Some(k) = k {
        ev.k = k;
    }
    if let Some(r) = cold_ratio {
        ev.cold_ratio = r;
    }
    if let Some(t) = relevance_threshold {
        ev.relevance_threshold = t;
    }
    ev.validate()?;

    let started = Instant::now();
    let ds = load_movielens(data)?;
    let dim = cfg.eval.embedding_dim;
    let enricher = Enricher::new(cfg.enrichment.clone()).with_embedder(Arc::new(HashingEmbedder::new(dim)));
    let generation: Option<RemoteChatProvider> = cfg.providers.generation.clone().map(RemoteChatProvider::new);
    let cache = out.join("enrichment_cache.jsonl");
    if generation.is_some() && cache.exists() {
        let n = enricher.load_cache(&cache)?;
        tracing::info!(profiles = n, "loaded enrichment cache");
    }
    let catalog = Catalog::build(&ds, dim, |raw| {
        enricher.enrich_item(raw, generation.as_ref().map(|g| g as &dyn GenerationProvider))
    })?;
    if generation.is_some() {
        std::fs::create_dir_all(out)?;
        enricher.save_cache(&cache)?;
    }
    tracing::info!(
        items = catalog.len(),
        secs = started.elapsed().as_secs_f64(),
        "catalogue built"
    );

    let scorer = provider.map(|url| RemoteCrossEncoder::new(scorer_config(&cfg, &url)));
    let mut harness = Harness::new(&ds, &catalog, &cfg.eval);
    if let Some(s) = &scorer {
        harness = harness.with_scorer(s);
    }
    let results = harness.run(&models)?;
    let (table, csv) = emit_report(&results, out)?;
    print!("{}", render_table(&results));
    println!();
    println!(
        "wrote {} and {} in {:.1}s",
        table.display(),
        csv.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Eval {
            data,
            models,
            seeds,
            k,
            out,
            provider,
            cold_ratio,
            relevance_threshold,
        } => eval(
            cfg,
            &data,
            &models,
            seeds,
            k,
            &out,
            provider,
            cold_ratio,
            relevance_threshold,
        ),
        Command::Serve {
            bind,
            data_dir,
            catalog,
        } => {
            let mut cfg = cfg;
            if let Some(b) = bind {
                cfg.service.bind = b;
            }
            if let Some(d) = data_dir {
                cfg.paths.data_dir = d;
            }
            if catalog.is_some() {
                cfg.paths.catalog = catalog;
            }
            cfg.validate()?;
            let state = AppState::open(cfg)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(coldstart_service::serve(state))?;
            Ok(())
        }
        Command::Synth {
            out,
            users,
            movies,
            seed,
        } => {
            let ds = synthetic_movielens(&SynthConfig {
                users,
                movies,
                seed,
                ..SynthConfig::default()
            });
            write_movielens(&ds, &out)?;
            println!(
                "wrote {} users, {} movies, {} ratings to {}",
                ds.users.len(),
                ds.movies.len(),
                ds.ratings.len(),
                out.display()
            );
            Ok(())
        }
        Command::Config => {
            print!("{}", cfg.to_toml_string()?);
            Ok(())
        }
    }
}
