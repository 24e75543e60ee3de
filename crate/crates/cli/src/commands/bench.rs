use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use fedmon_core::workload::{
    run_broker_throughput, run_loopback_throughput, run_store_throughput, write_throughput_csv,
    ThroughputOptions, ThroughputReport,
};

use super::{parse_usize_list, write_output};

#[derive(Args)]
pub struct BenchArgs {
    /// Producer/consumer pair counts, comma separated.
    #[arg(long, default_value = "1,4,16")]
    pub pairs: String,
    /// Message payload sizes in bytes, comma separated.
    #[arg(long, default_value = "256,2048,16384")]
    pub size: String,
    /// Seconds per grid cell.
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    /// Backend under test.
    #[arg(long, default_value = "broker", value_parser = ["broker", "store"])]
    pub backend: String,
    /// Remote broker address; defaults to a private loopback broker.
    #[arg(long)]
    pub connect: Option<String>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Report format.
    #[arg(long, default_value = "csv", value_parser = ["json", "csv"])]
    pub format: String,
}

pub fn run(args: BenchArgs) -> anyhow::Result<()> {
    if args.duration <= 0.0 || !args.duration.is_finite() {
        anyhow::bail!("duration must be positive seconds");
    }
    let pairs_list = parse_usize_list(&args.pairs)?;
    let size_list = parse_usize_list(&args.size)?;
    let duration = Duration::from_secs_f64(args.duration);

    let mut rows: Vec<ThroughputReport> = Vec::new();
    for &message_bytes in &size_list {
        for &pairs in &pairs_list {
            let options = ThroughputOptions {
                pairs,
                message_bytes,
                duration,
            };
            let report = match (args.backend.as_str(), &args.connect) {
                ("store", _) => run_store_throughput(&options)?,
                ("broker", Some(addr)) => run_broker_throughput(addr, &options)?,
                ("broker", None) => run_loopback_throughput(&options)?,
                _ => unreachable!("clap restricts the backend values"),
            };
            eprintln!(
                "pairs {:>3} x {:>6} B [{}]: {:>10.1} msg/s, {:>8.3} MB/s, p50 {:.2} ms{}",
                report.pairs,
                report.message_bytes,
                report.backend,
                report.msg_per_sec,
                report.mb_per_sec,
                report.latency_ms_p50,
                if report.conservation_ok { "" } else { "  [CONSERVATION VIOLATED]" },
            );
            if !report.conservation_ok {
                anyhow::bail!(
                    "conservation violated at pairs={} size={}: {:?}",
                    report.pairs,
                    report.message_bytes,
                    report.per_pair
                );
            }
            rows.push(report);
        }
    }

    let content = match args.format.as_str() {
        "json" => serde_json::to_string_pretty(&rows)?,
        _ => {
            let mut buf = Vec::new();
            write_throughput_csv(&rows, &mut buf)?;
            String::from_utf8(buf)?
        }
    };
    write_output(args.report.as_deref(), &content)
}
