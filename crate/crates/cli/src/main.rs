use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use nftscope_core::fixtures::{generate, Scenario, DEFAULT_SEED};
use nftscope_core::indicators::{date_day, day_end, default_window, market_series, traders_csv, IndicatorError, WhalePolicy};
use nftscope_core::ingestion::{load_snapshot_report, DirImageSource, IngestError};
use nftscope_core::network::build_transaction_network;
use nftscope_core::rarity::{
    compute_collection_rarity, scores_from_pairs, ExtractionStats, RarityConfig, RarityError, RarityRun,
    RarityWeights,
};
use nftscope_core::storage::{ranking, validate_collection_id, write_atomic, StorageError, Store, RARITY_CSV};
use nftscope_service::{ConfigError, ServeError, ServiceConfig};
use serde::Serialize;
use serde_json::{json, Value};

const DEFAULT_DATA_DIR: &str = "data";

#[derive(Debug, Parser)]
#[command(name = "nftscope", version, about = "Rarity, market indicators and transaction networks for NFT collections")]
struct Cli {
    /// Data directory (contains `collections/`). Defaults to `./data`.
    #[arg(long, global = true, env = "NFTSCOPE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a snapshot directory and add it to the data directory.
    Ingest {
        path: PathBuf,
        /// Store under this id instead of the manifest's.
        #[arg(long)]
        collection_id: Option<String>,
    },
    /// Compute trait and image rarity, write rarity.csv and print the ranking.
    Rarity {
        #[arg(long)]
        collection_id: String,
        /// Trait weight in [0, 1]; the image weight is 1 - w.
        #[arg(long, default_value_t = 0.5, value_parser = parse_weight)]
        w_trait: f64,
        /// Worker threads for pairwise matching; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Print the daily market series as JSON.
    Indicators {
        #[arg(long)]
        collection_id: String,
        /// First day (YYYY-MM-DD); defaults to the first activity.
        #[arg(long)]
        from: Option<NaiveDate>,
        /// Last day (YYYY-MM-DD); defaults to the snapshot day.
        #[arg(long)]
        to: Option<NaiveDate>,
        /// Holdings at which a seller counts as a whale.
        #[arg(long, default_value_t = WhalePolicy::default().min_holdings, value_parser = parse_positive)]
        whale_min: usize,
        /// Also write per-trader indicators at the end of the window.
        #[arg(long)]
        traders_csv: Option<PathBuf>,
    },
    /// Print one NFT's transaction network as JSON.
    Network {
        #[arg(long)]
        collection_id: String,
        #[arg(long)]
        token: String,
        /// UTC seconds; defaults to the snapshot time.
        #[arg(long)]
        as_of: Option<i64>,
        #[arg(long, default_value_t = WhalePolicy::default().min_holdings, value_parser = parse_positive)]
        whale_min: usize,
    },
    /// Serve the HTTP API until interrupted.
    Serve {
        /// Listen port; overrides the config file and NFTSCOPE_PORT.
        #[arg(long)]
        port: Option<u16>,
        /// TOML service config; NFTSCOPE_* variables and flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a synthetic snapshot directory.
    GenFixture {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_weight(s: &str) -> Result<f64, String> {
    let w: f64 = s.parse().map_err(|e| format!("{e}"))?;
    RarityWeights::new(w).map(|_| w).map_err(|e| e.to_string())
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

/// Exit 1 for failed validation or processing, 2 for bad invocations.
#[derive(Debug)]
struct Failure {
    exit: u8,
    message: String,
    details: Option<Value>,
}

impl Failure {
    fn failed(message: impl Into<String>) -> Self {
        Failure {
            exit: 1,
            message: message.into(),
            details: None,
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Failure {
            exit: 2,
            message: message.into(),
            details: None,
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        let details = match &e {
            IngestError::ActivityOrderViolation(v) | IngestError::InvalidSnapshot(v) => Some(json!({ "violations": v })),
            IngestError::BrokenImageRef { tokens } => Some(json!({ "tokens": tokens })),
            _ => None,
        };
        Failure {
            details,
            ..Failure::failed(e.to_string())
        }
    }
}

impl From<StorageError> for Failure {
    fn from(e: StorageError) -> Self {
        match e {
            StorageError::Ingest(e) => e.into(),
            StorageError::InvalidId(_) | StorageError::InvalidQuery(_) => Failure::usage(e.to_string()),
            e => Failure::failed(e.to_string()),
        }
    }
}

impl From<IndicatorError> for Failure {
    fn from(e: IndicatorError) -> Self {
        match e {
            IndicatorError::EmptyRange { .. } => Failure::usage(e.to_string()),
            e => Failure::failed(e.to_string()),
        }
    }
}

impl From<RarityError> for Failure {
    fn from(e: RarityError) -> Self {
        Failure::failed(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<ServeError> for Failure {
    fn from(e: ServeError) -> Self {
        Failure::failed(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::failed(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

struct Ctx {
    data_dir: Option<PathBuf>,
    json: bool,
}

impl Ctx {
    fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| DEFAULT_DATA_DIR.into())
    }

    /// An existing data directory; commands other than `ingest` never create one.
    fn store(&self) -> Result<Store, Failure> {
        let dir = self.data_dir();
        Store::open_existing(&dir).map_err(|e| Failure::failed(format!("data directory {}: {e}", dir.display())))
    }

    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) {
        if self.json {
            let mut line = serde_json::to_string(value).expect("output serializes");
            line.push('\n');
            stdout(&line);
        } else {
            stdout(&text());
        }
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn stdout(s: &str) {
    let _ = std::io::stdout().lock().write_all(s.as_bytes());
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

fn ingest(ctx: &Ctx, path: &Path, collection_id: Option<String>) -> CmdResult {
    let mut report = load_snapshot_report(path)?;
    if let Some(id) = collection_id {
        validate_collection_id(&id)?;
        report.snapshot.info.id = id;
    }
    let store = Store::open(ctx.data_dir())?;
    let s = &report.snapshot;
    let id = store.put_snapshot(s, &DirImageSource::new(path))?;
    let activities: usize = s.nfts.iter().map(|n| n.activities.len()).sum();
    let out = json!({
        "collection_id": id,
        "nfts": s.len(),
        "activities": activities,
        "warnings": report.warnings,
    });
    ctx.emit(&out, || {
        let mut t = String::new();
        for w in &report.warnings {
            let _ = writeln!(t, "{w}");
        }
        let _ = writeln!(t, "ingested {id}: {} NFTs, {activities} activities", s.len());
        t
    });
    Ok(())
}

#[derive(Debug, Serialize)]
struct RankedRow {
    rank: usize,
    token_id: String,
    weighted_rarity: f64,
    trait_rarity: f64,
    image_rarity: f64,
}

fn rarity(ctx: &Ctx, id: &str, w_trait: f64, jobs: usize) -> CmdResult {
    let store = ctx.store()?;
    let snapshot = store.get_snapshot(id)?;
    let cfg = RarityConfig {
        jobs,
        ..RarityConfig::default()
    };
    let (run, reused) = match store.get_pair_diffs(id, &cfg.params_hash())? {
        Some(pairs) => {
            let run = RarityRun {
                scores: scores_from_pairs(&snapshot, &pairs),
                pairs,
                stats: ExtractionStats::default(),
            };
            (run, true)
        }
        None => {
            let cache = store.feature_cache(id)?;
            let run = compute_collection_rarity(&snapshot, &store.images(id)?, &cfg, Some(&cache))?;
            (run, false)
        }
    };
    store.put_rarity(id, &cfg, &run)?;
    let weights = RarityWeights::new(w_trait).map_err(|e| Failure::usage(e.to_string()))?;
    let rows: Vec<RankedRow> = ranking(&store.view(id)?, weights)?
        .into_iter()
        .enumerate()
        .map(|(k, r)| RankedRow {
            rank: k + 1,
            token_id: r.token_id,
            weighted_rarity: r.weighted_rarity,
            trait_rarity: r.trait_rarity,
            image_rarity: r.image_rarity,
        })
        .collect();
    let csv = store.collection_dir(id).join(RARITY_CSV);
    let out = json!({
        "collection_id": id,
        "w_trait": w_trait,
        "csv": csv,
        "reused_pairs": reused,
        "extracted": run.stats.extracted,
        "cache_hits": run.stats.cache_hits,
        "ranking": rows,
    });
    ctx.emit(&out, || {
        let width = rows.iter().map(|r| r.token_id.len()).max().unwrap_or(0).max(8);
        let mut t = format!("{:>4}  {:<width$}  {:>8}  {:>8}  {:>8}\n", "rank", "token_id", "weighted", "trait", "image");
        for r in &rows {
            let _ = writeln!(
                t,
                "{:>4}  {:<width$}  {:.6}  {:.6}  {:.6}",
                r.rank, r.token_id, r.weighted_rarity, r.trait_rarity, r.image_rarity
            );
        }
        t
    });
    if !ctx.json {
        let how = if reused {
            "reused cached pair differences".to_string()
        } else {
            format!("{} extracted, {} from cache", run.stats.extracted, run.stats.cache_hits)
        };
        eprintln!("wrote {} ({how})", csv.display());
    }
    Ok(())
}

fn indicators(
    ctx: &Ctx,
    id: &str,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
    whale_min: usize,
    csv_out: Option<&Path>,
) -> CmdResult {
    let store = ctx.store()?;
    let s = store.get_snapshot(id)?;
    let wp = WhalePolicy::new(whale_min)?;
    let (d_from, d_to) = default_window(&s);
    let (from, to) = (from.unwrap_or(d_from), to.unwrap_or(d_to));
    let series = market_series(&s, from, to, wp)?;
    if let Some(path) = csv_out {
        let as_of = day_end(date_day(to)).min(s.info.snapshot_at);
        write_atomic(path, traders_csv(&s, as_of, wp).as_bytes())?;
    }
    ctx.emit(&series, || pretty(&series));
    Ok(())
}

fn network(ctx: &Ctx, id: &str, token: &str, as_of: Option<i64>, whale_min: usize) -> CmdResult {
    let store = ctx.store()?;
    let s = store.get_snapshot(id)?;
    let net = build_transaction_network(token, &s, as_of.unwrap_or(s.info.snapshot_at), WhalePolicy::new(whale_min)?)?;
    ctx.emit(&net, || pretty(&net));
    Ok(())
}

fn serve(ctx: &Ctx, port: Option<u16>, config: Option<&Path>) -> CmdResult {
    let mut cfg = ServiceConfig::load(config)?;
    if let Some(d) = &ctx.data_dir {
        cfg.data_dir = d.clone();
    }
    if let Some(p) = port {
        cfg.port = p;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(nftscope_service::serve(&cfg))?;
    Ok(())
}

fn gen_fixture(ctx: &Ctx, scenario: Scenario, seed: u64, out: &Path) -> CmdResult {
    let f = generate(scenario, seed);
    f.write(out)?;
    let info = json!({
        "scenario": scenario.name(),
        "seed": seed,
        "out": out,
        "collection_id": f.snapshot.id(),
        "nfts": f.snapshot.len(),
    });
    ctx.emit(&info, || {
        format!(
            "wrote {} ({} NFTs, seed {seed}) to {}\n",
            scenario.name(),
            f.snapshot.len(),
            out.display()
        )
    });
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        data_dir: cli.data_dir,
        json: cli.json,
    };
    let result = match cli.command {
        Command::Ingest { path, collection_id } => ingest(&ctx, &path, collection_id),
        Command::Rarity {
            collection_id,
            w_trait,
            jobs,
        } => rarity(&ctx, &collection_id, w_trait, jobs),
        Command::Indicators {
            collection_id,
            from,
            to,
            whale_min,
            traders_csv,
        } => indicators(&ctx, &collection_id, from, to, whale_min, traders_csv.as_deref()),
        Command::Network {
            collection_id,
            token,
            as_of,
            whale_min,
        } => network(&ctx, &collection_id, &token, as_of, whale_min),
        Command::Serve { port, config } => serve(&ctx, port, config.as_deref()),
        Command::GenFixture { scenario, seed, out } => gen_fixture(&ctx, scenario, seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if ctx.json {
                let mut err = json!({ "error": f.message, "exit_code": f.exit });
                if let Some(d) = f.details {
                    err["details"] = d;
                }
                stdout(&format!("{err}\n"));
            }
            eprintln!("nftscope: {}", f.message);
            ExitCode::from(f.exit)
        }
    }
}
