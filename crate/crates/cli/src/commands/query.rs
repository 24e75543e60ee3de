use std::path::PathBuf;

use clap::Args;
use fedmon_core::store::{QueryFilter, Store};

use super::write_output;

#[derive(Args)]
pub struct QueryArgs {
    /// JSON-lines store snapshot to query (from `emulate --store-file`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub site: Option<String>,
    #[arg(long)]
    pub resource: Option<String>,
    #[arg(long)]
    pub service: Option<String>,
    #[arg(long)]
    pub kind: Option<String>,
    /// Event-time lower bound, epoch microseconds.
    #[arg(long)]
    pub since_micros: Option<u64>,
    /// Event-time upper bound, epoch microseconds.
    #[arg(long)]
    pub until_micros: Option<u64>,
    /// JSON-path predicate, e.g. '$.host.@name=n1' or '$.queue.jobs' (exists).
    #[arg(long)]
    pub json_path: Vec<String>,
    /// Keep only the newest record per entity.
    #[arg(long)]
    pub latest: bool,
    #[arg(long)]
    pub limit: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn run(args: QueryArgs) -> anyhow::Result<()> {
    let store = Store::load(&args.data)
        .map_err(|e| anyhow::anyhow!("cannot load {}: {e}", args.data.display()))?;

    let mut filter = QueryFilter::new();
    filter.source = args.source;
    filter.site = args.site;
    filter.resource = args.resource;
    filter.service = args.service;
    filter.kind = args.kind;
    filter.since_micros = args.since_micros;
    filter.until_micros = args.until_micros;
    filter.latest_only = args.latest;
    filter.limit = args.limit;
    for expr in &args.json_path {
        filter = filter.json_path(expr)?;
    }

    let records = store.query(&filter)?;
    let mut out = String::new();
    for record in &records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    eprintln!("{} records", records.len());
    write_output(args.report.as_deref(), &out)
}
