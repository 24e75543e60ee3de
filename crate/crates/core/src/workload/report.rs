//! Emulation and throughput reports, emitted as JSON or CSV with column
//! names matching the experiment tables (one row per source plus totals).

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SourceReportRow {
    pub source: String,
    pub published_count: u64,
    pub mean_publish_ms: f64,
    pub mean_message_bytes: f64,
    pub publish_rate_per_sec: f64,
    pub publish_mb_per_sec: f64,
}

impl SourceReportRow {
    pub fn from_counters(source: &str, count: u64, bytes: u64, micros_total: u64, duration_secs: f64) -> Self {
        let n = count as f64;
        SourceReportRow {
            source: source.to_string(),
            published_count: count,
            mean_publish_ms: if count > 0 { micros_total as f64 / n / 1_000.0 } else { 0.0 },
            mean_message_bytes: if count > 0 { bytes as f64 / n } else { 0.0 },
            publish_rate_per_sec: if duration_secs > 0.0 { n / duration_secs } else { 0.0 },
            publish_mb_per_sec: if duration_secs > 0.0 {
                bytes as f64 / duration_secs / 1_048_576.0
            } else {
                0.0
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StoreModeReport {
    pub updates: u64,
    pub update_rate_per_sec: f64,
    pub mean_update_ms: f64,
    pub mean_update_bytes: f64,
    pub update_mb_per_sec: f64,
    pub selects: u64,
    pub select_rate_per_sec: f64,
    pub records_final: u64,
}

/// Full outcome of one emulation run. Carries both the measured fan-out
/// ratio and the subscription-matrix oracle; the two are expected to agree
/// when nothing drops, and both are always printed.
#[derive(Debug, Clone, Serialize)]
pub struct EmulationReport {
    pub profile: String,
    pub backend: String,
    pub duration_secs: f64,
    pub seed: u64,
    pub sources: Vec<SourceReportRow>,
    pub total: SourceReportRow,
    pub consumed_count: u64,
    pub consumed_bytes: u64,
    pub consumed_rate_per_sec: f64,
    pub consumed_mb_per_sec: f64,
    pub published_count: u64,
    pub delivered_count: u64,
    pub dropped_count: u64,
    pub fan_out_measured: f64,
    pub fan_out_oracle: f64,
    pub expected_rate_per_sec: f64,
    pub expected_per_source: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub store: Option<StoreModeReport>,
}

impl EmulationReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per source plus a totals row; messaging columns follow the
    /// messaging-experiment table, database columns the database table.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        if let Some(store) = &self.store {
            writeln!(
                out,
                "Source,Average Update Time (msec),Average Update Size (bytes),Throughput (updates/sec),Bandwidth (MB/sec),Consumed Throughput (selects/sec)"
            )?;
            for row in &self.sources {
                writeln!(
                    out,
                    "{},{:.2},{:.0},{:.2},{:.2},",
                    row.source,
                    row.mean_publish_ms,
                    row.mean_message_bytes,
                    row.publish_rate_per_sec,
                    row.publish_mb_per_sec
                )?;
            }
            writeln!(
                out,
                "total,{:.2},{:.0},{:.2},{:.2},{:.2}",
                store.mean_update_ms,
                store.mean_update_bytes,
                store.update_rate_per_sec,
                store.update_mb_per_sec,
                store.select_rate_per_sec
            )?;
            return Ok(());
        }
        writeln!(
            out,
            "Source,Average Publish Time (msec),Average Message Size (bytes),Throughput (msg/sec),Bandwidth (MB/sec),Consumed Throughput (msg/sec),Consumed Bandwidth (MB/sec)"
        )?;
        for row in &self.sources {
            writeln!(
                out,
                "{},{:.2},{:.0},{:.2},{:.2},,",
                row.source,
                row.mean_publish_ms,
                row.mean_message_bytes,
                row.publish_rate_per_sec,
                row.publish_mb_per_sec
            )?;
        }
        writeln!(
            out,
            "total,{:.2},{:.0},{:.2},{:.2},{:.2},{:.2}",
            self.total.mean_publish_ms,
            self.total.mean_message_bytes,
            self.total.publish_rate_per_sec,
            self.total.publish_mb_per_sec,
            self.consumed_rate_per_sec,
            self.consumed_mb_per_sec
        )?;
        Ok(())
    }

    /// Human-readable one-screen summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "profile {} backend {} duration {:.0}s seed {}\n",
            self.profile, self.backend, self.duration_secs, self.seed
        ));
        s.push_str(&format!(
            "published {:.2} msg/s (expected {:.2}), mean size {:.0} B, {:.3} MB/s\n",
            self.total.publish_rate_per_sec,
            self.expected_rate_per_sec,
            self.total.mean_message_bytes,
            self.total.publish_mb_per_sec
        ));
        s.push_str(&format!(
            "consumed {:.2} msg/s, {:.3} MB/s\n",
            self.consumed_rate_per_sec, self.consumed_mb_per_sec
        ));
        s.push_str(&format!(
            "fan-out measured {:.4}, oracle {:.4}; delivered {}, published {}, dropped {}\n",
            self.fan_out_measured,
            self.fan_out_oracle,
            self.delivered_count,
            self.published_count,
            self.dropped_count
        ));
        if let Some(store) = &self.store {
            s.push_str(&format!(
                "store: {:.2} updates/s (mean {:.2} ms), {:.2} selects/s, {} records\n",
                store.update_rate_per_sec, store.mean_update_ms, store.select_rate_per_sec, store.records_final
            ));
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairStats {
    pub pair: usize,
    pub sent: u64,
    pub received: u64,
}

/// One throughput measurement: N producers to N consumers at one size.
#[derive(Debug, Clone, Serialize)]
pub struct ThroughputReport {
    pub backend: String,
    pub pairs: usize,
    pub message_bytes: usize,
    pub duration_secs: f64,
    pub sent: u64,
    pub received: u64,
    pub msg_per_sec: f64,
    pub mb_per_sec: f64,
    pub latency_ms_p50: f64,
    pub latency_ms_p95: f64,
    pub latency_ms_p99: f64,
    pub per_pair: Vec<PairStats>,
    pub conservation_ok: bool,
}

pub fn throughput_csv_header() -> &'static str {
    "Pairs,Message Size (bytes),Backend,Throughput (msg/sec),Bandwidth (MB/sec),Latency p50 (msec),Latency p95 (msec),Latency p99 (msec)"
}

pub fn write_throughput_csv<W: Write>(rows: &[ThroughputReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", throughput_csv_header())?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.1},{:.3},{:.3},{:.3},{:.3}",
            r.pairs,
            r.message_bytes,
            r.backend,
            r.msg_per_sec,
            r.mb_per_sec,
            r.latency_ms_p50,
            r.latency_ms_p95,
            r.latency_ms_p99
        )?;
    }
    Ok(())
}

/// Percentile over raw latency samples in microseconds, reported in ms.
pub fn percentile_ms(samples: &mut [u64], fraction: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.sort_unstable();
    // nearest-rank: the smallest sample with at least `fraction` below it
    let rank = (fraction * samples.len() as f64).ceil() as usize;
    samples[rank.clamp(1, samples.len()) - 1] as f64 / 1_000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_pick_expected_ranks() {
        let mut samples: Vec<u64> = (1..=100).map(|i| i * 1_000).collect();
        assert_eq!(percentile_ms(&mut samples, 0.50), 50.0);
        assert_eq!(percentile_ms(&mut samples, 0.95), 95.0);
        assert_eq!(percentile_ms(&mut samples, 0.99), 99.0);
        let mut empty: Vec<u64> = Vec::new();
        assert_eq!(percentile_ms(&mut empty, 0.5), 0.0);
    }

    #[test]
    fn csv_has_table_headers_and_total_row() {
        let row = SourceReportRow::from_counters("ganglia", 100, 217_500, 9_000, 10.0);
        let total = SourceReportRow::from_counters("total", 100, 217_500, 9_000, 10.0);
        let report = EmulationReport {
            profile: "futuregrid".into(),
            backend: "broker".into(),
            duration_secs: 10.0,
            seed: 7,
            sources: vec![row],
            total,
            consumed_count: 400,
            consumed_bytes: 870_000,
            consumed_rate_per_sec: 40.0,
            consumed_mb_per_sec: 0.083,
            published_count: 100,
            delivered_count: 400,
            dropped_count: 0,
            fan_out_measured: 4.0,
            fan_out_oracle: 4.0,
            expected_rate_per_sec: 10.0,
            expected_per_source: BTreeMap::new(),
            store: None,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("Source,Average Publish Time (msec),Average Message Size (bytes),Throughput (msg/sec),Bandwidth (MB/sec)"));
        assert!(text.contains("\nganglia,"));
        assert!(text.contains("\ntotal,"));
        let json = report.to_json_string();
        assert!(json.contains("fan_out_oracle"));
        assert!(json.contains("fan_out_measured"));
    }

    #[test]
    fn from_counters_computes_means_and_rates() {
        let row = SourceReportRow::from_counters("x", 50, 100_000, 25_000, 5.0);
        assert_eq!(row.published_count, 50);
        assert!((row.mean_publish_ms - 0.5).abs() < 1e-9);
        assert!((row.mean_message_bytes - 2_000.0).abs() < 1e-9);
        assert!((row.publish_rate_per_sec - 10.0).abs() < 1e-9);
        let zero = SourceReportRow::from_counters("x", 0, 0, 0, 0.0);
        assert_eq!(zero.publish_rate_per_sec, 0.0);
        assert_eq!(zero.mean_publish_ms, 0.0);
    }
}
