use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use fedmon_core::workload::{
    resolve_profile, run_emulation, BackendKind, EmulationOptions,
};

use super::write_output;

#[derive(Args)]
pub struct EmulateArgs {
    /// Bundled profile name (futuregrid, futuregridx2, xsede, xsedex2, osg,
    /// osgx2) or a path to a profile JSON file.
    #[arg(long)]
    pub profile: String,
    /// Run duration in seconds.
    #[arg(long)]
    pub duration: f64,
    /// RNG seed; the same seed reproduces the generated message sequence.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where the traffic goes.
    #[arg(long, default_value = "broker", value_parser = parse_backend)]
    pub backend: BackendKind,
    /// Remote broker address; defaults to an embedded broker.
    #[arg(long)]
    pub connect: Option<String>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Report format.
    #[arg(long, default_value = "json", value_parser = ["json", "csv"])]
    pub format: String,
    /// Persist the store contents (store/both backends) as JSON lines.
    #[arg(long)]
    pub store_file: Option<PathBuf>,
}

fn parse_backend(text: &str) -> Result<BackendKind, String> {
    BackendKind::parse(text).ok_or_else(|| format!("unknown backend {text:?} (broker|store|both)"))
}

pub fn run(args: EmulateArgs) -> anyhow::Result<()> {
    if args.duration < 0.0 || !args.duration.is_finite() {
        anyhow::bail!("duration must be a non-negative number of seconds");
    }
    let profile = resolve_profile(&args.profile)?;
    let options = EmulationOptions {
        duration: Duration::from_secs_f64(args.duration),
        seed: args.seed,
        backend: args.backend,
        connect: args.connect.clone(),
        ..EmulationOptions::default()
    };
    let outcome = run_emulation(&profile, &options)?;

    if let Some(path) = &args.store_file {
        match &outcome.store {
            Some(store) => {
                let records = store.save(path)?;
                eprintln!("store snapshot: {records} records -> {}", path.display());
            }
            None => anyhow::bail!("--store-file needs --backend store or both"),
        }
    }

    eprint!("{}", outcome.report.summary());
    let content = match args.format.as_str() {
        "csv" => {
            let mut buf = Vec::new();
            outcome.report.write_csv(&mut buf)?;
            String::from_utf8(buf)?
        }
        _ => outcome.report.to_json_string(),
    };
    write_output(args.report.as_deref(), &content)
}
