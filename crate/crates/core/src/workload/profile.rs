//! Infrastructure profiles: the parameter vectors that drive the emulator,
//! and the closed-form publish-rate oracle derived from the per-source data
//! periods (Ganglia node bundles every 15 s, SNAPP links every 10 s,
//! perfSONAR tests every 2 h, partition and queue snapshots every 2 min,
//! three job updates per job, Inca tests at their mean period).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GANGLIA_PERIOD_SECS: f64 = 15.0;
pub const SNAPP_PERIOD_SECS: f64 = 10.0;
pub const PERFSONAR_PERIOD_SECS: f64 = 7_200.0;
pub const GLUE2_SNAPSHOT_PERIOD_SECS: f64 = 120.0;
pub const JOB_MESSAGES_PER_JOB: f64 = 3.0;

/// GLUE2 queue documents grow with the jobs they list: base plus a
/// per-job increment.
pub const QUEUE_DOC_BASE_BYTES: f64 = 1024.0;
pub const QUEUE_DOC_BYTES_PER_JOB: f64 = 120.0;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("i/o error reading profile: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid profile: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid profile: {0}")]
    Invalid(String),
    #[error("unknown bundled profile {0:?}")]
    UnknownBundled(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriberCounts {
    pub info_databases: u32,
    pub web_portals: u32,
    pub accounting_systems: u32,
    pub metaschedulers: u32,
    pub monitoring_systems: u32,
    pub science_gateways: u32,
}

impl SubscriberCounts {
    pub fn total(&self) -> u32 {
        self.info_databases
            + self.web_portals
            + self.accounting_systems
            + self.metaschedulers
            + self.monitoring_systems
            + self.science_gateways
    }
}

/// Mean payload size per source, bytes. Sources absent from the profile
/// (no nodes, no links) need no entry. The GLUE2 queue document size is not
/// listed here; it is derived from the job population.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadBytes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ganglia: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapp: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perfsonar: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inca: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glue2_partition: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glue2_job: Option<u64>,
}

fn default_sites() -> u32 {
    1
}

/// One Extract-Transform-Publish adapter declaration inside a profile:
/// which source to poll, where it lives, how many entities stand behind
/// it, and how often to poll.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub source: String,
    pub site: String,
    pub entities: u32,
    pub poll_period_secs: f64,
}

/// The emulation parameter vector for one infrastructure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfrastructureProfile {
    pub name: String,
    pub partitions: u32,
    pub simultaneous_jobs: u32,
    pub jobs_per_hour: f64,
    pub services: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_links: Option<u32>,
    /// Mean Inca tests per service.
    pub tests_per_service: f64,
    /// The range the per-test periods span; the emulator runs each test at
    /// the mean of this range.
    pub inca_period_range_secs: (f64, f64),
    #[serde(default = "default_sites")]
    pub sites: u32,
    pub subscribers: SubscriberCounts,
    #[serde(default)]
    pub payload_bytes: PayloadBytes,
    /// Optional ETP adapter declarations for driving real extract cycles
    /// against the synthetic sources.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adapters: Vec<AdapterConfig>,
}

impl InfrastructureProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        let bad = |msg: String| Err(ProfileError::Invalid(msg));
        if self.name.is_empty() {
            return bad("name must not be empty".into());
        }
        if !self.jobs_per_hour.is_finite() || self.jobs_per_hour < 0.0 {
            return bad(format!("jobs_per_hour {} must be >= 0", self.jobs_per_hour));
        }
        if !self.tests_per_service.is_finite() || self.tests_per_service < 0.0 {
            return bad(format!(
                "tests_per_service {} must be >= 0",
                self.tests_per_service
            ));
        }
        let (lo, hi) = self.inca_period_range_secs;
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi < lo {
            return bad(format!(
                "inca_period_range_secs [{lo}, {hi}] must be positive and ordered"
            ));
        }
        if self.sites == 0 {
            return bad("sites must be at least 1".into());
        }
        for adapter in &self.adapters {
            if crate::xform::SourceKind::parse(&adapter.source).is_none() {
                return bad(format!("unknown adapter source {:?}", adapter.source));
            }
            if !adapter.poll_period_secs.is_finite() || adapter.poll_period_secs <= 0.0 {
                return bad(format!(
                    "adapter {:?} poll period must be positive",
                    adapter.source
                ));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> u32 {
        self.nodes.unwrap_or(0)
    }

    pub fn link_count(&self) -> u32 {
        self.network_links.unwrap_or(0)
    }

    /// Total Inca test instances, rounded from services × tests/service.
    pub fn inca_test_count(&self) -> u32 {
        (self.services as f64 * self.tests_per_service).round() as u32
    }

    pub fn inca_mean_period_secs(&self) -> f64 {
        let (lo, hi) = self.inca_period_range_secs;
        (lo + hi) / 2.0
    }

    /// Mean jobs listed per partition.
    pub fn jobs_per_partition(&self) -> f64 {
        if self.partitions == 0 {
            0.0
        } else {
            self.simultaneous_jobs as f64 / self.partitions as f64
        }
    }

    /// Target GLUE2 queue document size for this profile.
    pub fn queue_doc_bytes(&self) -> u64 {
        (QUEUE_DOC_BASE_BYTES + QUEUE_DOC_BYTES_PER_JOB * self.jobs_per_partition()).round() as u64
    }

    pub fn site_name(&self, index: u32) -> String {
        format!("site{:02}", index % self.sites.max(1))
    }
}

/// Per-source expected publish rates in messages per second.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateOracle {
    pub per_source: BTreeMap<String, f64>,
    pub total: f64,
}

impl RateOracle {
    pub fn rate(&self, source: &str) -> f64 {
        self.per_source.get(source).copied().unwrap_or(0.0)
    }
}

/// Closed-form expected publish rate:
/// nodes/15 + links/10 + links/7200 + 2·partitions/120 + 3·jobs_per_hour/3600
/// + services·tests_per_service/mean(inca period range).
pub fn expected_publish_rate(profile: &InfrastructureProfile) -> RateOracle {
    let mut per_source = BTreeMap::new();
    let mut add = |label: &str, rate: f64| {
        if rate > 0.0 {
            per_source.insert(label.to_string(), rate);
        }
    };
    add("ganglia", profile.node_count() as f64 / GANGLIA_PERIOD_SECS);
    add("snapp", profile.link_count() as f64 / SNAPP_PERIOD_SECS);
    add(
        "perfsonar",
        profile.link_count() as f64 / PERFSONAR_PERIOD_SECS,
    );
    add(
        "glue2.partition",
        profile.partitions as f64 / GLUE2_SNAPSHOT_PERIOD_SECS,
    );
    add(
        "glue2.queue",
        profile.partitions as f64 / GLUE2_SNAPSHOT_PERIOD_SECS,
    );
    add(
        "glue2.job",
        JOB_MESSAGES_PER_JOB * profile.jobs_per_hour / 3_600.0,
    );
    add(
        "inca",
        profile.inca_test_count() as f64 / profile.inca_mean_period_secs(),
    );
    let total = per_source.values().sum();
    RateOracle { per_source, total }
}

/// Expected mean message size implied by the closed-form rates and the
/// per-source payload targets.
pub fn expected_mean_message_bytes(profile: &InfrastructureProfile) -> f64 {
    let oracle = expected_publish_rate(profile);
    if oracle.total == 0.0 {
        return 0.0;
    }
    let p = &profile.payload_bytes;
    let size = |label: &str| -> f64 {
        match label {
            "ganglia" => p.ganglia.unwrap_or(0) as f64,
            "snapp" => p.snapp.unwrap_or(0) as f64,
            "perfsonar" => p.perfsonar.unwrap_or(0) as f64,
            "inca" => p.inca.unwrap_or(0) as f64,
            "glue2.partition" => p.glue2_partition.unwrap_or(0) as f64,
            "glue2.queue" => profile.queue_doc_bytes() as f64,
            "glue2.job" => p.glue2_job.unwrap_or(0) as f64,
            _ => 0.0,
        }
    };
    let bytes_per_sec: f64 = oracle
        .per_source
        .iter()
        .map(|(label, rate)| rate * size(label))
        .sum();
    bytes_per_sec / oracle.total
}

const BUNDLED: [(&str, &str); 6] = [
    ("futuregrid", include_str!("../../profiles/futuregrid.json")),
    ("futuregridx2", include_str!("../../profiles/futuregridx2.json")),
    ("xsede", include_str!("../../profiles/xsede.json")),
    ("xsedex2", include_str!("../../profiles/xsedex2.json")),
    ("osg", include_str!("../../profiles/osg.json")),
    ("osgx2", include_str!("../../profiles/osgx2.json")),
];

pub fn bundled_profile_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(name, _)| *name).collect()
}

/// Loads a bundled profile by name.
pub fn bundled_profile(name: &str) -> Result<InfrastructureProfile, ProfileError> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ProfileError::UnknownBundled(name.to_string()))?;
    parse_profile(text)
}

pub fn parse_profile(text: &str) -> Result<InfrastructureProfile, ProfileError> {
    let profile: InfrastructureProfile = serde_json::from_str(text)?;
    profile.validate()?;
    Ok(profile)
}

/// Loads a profile from a file, validating every field.
pub fn load_profile<P: AsRef<Path>>(path: P) -> Result<InfrastructureProfile, ProfileError> {
    parse_profile(&std::fs::read_to_string(path)?)
}

/// Resolves a bundled name first, then a filesystem path.
pub fn resolve_profile(name_or_path: &str) -> Result<InfrastructureProfile, ProfileError> {
    match bundled_profile(name_or_path) {
        Ok(profile) => Ok(profile),
        Err(ProfileError::UnknownBundled(_)) if Path::new(name_or_path).exists() => {
            load_profile(name_or_path)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_futuregrid_matches_configuration_table() {
        let p = bundled_profile("futuregrid").unwrap();
        assert_eq!(p.partitions, 14);
        assert_eq!(p.simultaneous_jobs, 477);
        assert_eq!(p.jobs_per_hour, 78.0);
        assert_eq!(p.services, 77);
        assert_eq!(p.nodes, Some(608));
        assert_eq!(p.network_links, Some(6));
        assert_eq!(p.subscribers.total(), 6);
        assert_eq!(p.subscribers.monitoring_systems, 2);
        assert_eq!(p.subscribers.science_gateways, 0);
        // 77 services x ~3.43 tests = the 264 deployed tests
        assert_eq!(p.inca_test_count(), 264);
    }

    #[test]
    fn bundled_osgx2_matches_configuration_table() {
        let p = bundled_profile("osgx2").unwrap();
        assert_eq!(p.partitions, 400);
        assert_eq!(p.simultaneous_jobs, 84_600);
        assert_eq!(p.jobs_per_hour, 42_455.0);
        assert_eq!(p.services, 8_000);
        assert_eq!(p.nodes, None);
        assert_eq!(p.subscribers.science_gateways, 40);
    }

    #[test]
    fn all_bundled_profiles_validate() {
        for name in bundled_profile_names() {
            let p = bundled_profile(name).unwrap();
            assert_eq!(p.name, name);
            p.validate().unwrap();
        }
    }

    #[test]
    fn negative_fields_fail_validation() {
        let text = include_str!("../../profiles/futuregrid.json").replace("\"nodes\": 608", "\"nodes\": -5");
        assert!(parse_profile(&text).is_err());
        let text = include_str!("../../profiles/futuregrid.json")
            .replace("\"jobs_per_hour\": 78", "\"jobs_per_hour\": -1");
        assert!(parse_profile(&text).is_err());
    }

    #[test]
    fn missing_fields_fail() {
        assert!(parse_profile("{\"name\": \"x\"}").is_err());
    }

    #[test]
    fn unknown_bundled_name_fails() {
        assert!(matches!(
            bundled_profile("nope"),
            Err(ProfileError::UnknownBundled(_))
        ));
    }

    #[test]
    fn futuregrid_oracle_matches_published_rate() {
        // 608/15 + 6/10 + 6/7200 + 2*14/120 + 3*78/3600 + 264/4050
        let p = bundled_profile("futuregrid").unwrap();
        let oracle = expected_publish_rate(&p);
        assert!((oracle.total - 41.4977).abs() < 0.01, "{}", oracle.total);
        // within 1% of the measured production value 41.46
        assert!((oracle.total - 41.46).abs() / 41.46 < 0.01);
        assert!((oracle.rate("ganglia") - 40.5333).abs() < 0.001);
        assert!((oracle.rate("snapp") - 0.6).abs() < 1e-9);
        assert!((oracle.rate("glue2.job") - 0.065).abs() < 1e-9);
    }

    #[test]
    fn zero_profile_yields_zero_rate() {
        let p = InfrastructureProfile {
            name: "zero".into(),
            partitions: 0,
            simultaneous_jobs: 0,
            jobs_per_hour: 0.0,
            services: 0,
            nodes: None,
            network_links: None,
            tests_per_service: 0.0,
            inca_period_range_secs: (900.0, 7200.0),
            sites: 1,
            subscribers: SubscriberCounts {
                info_databases: 0,
                web_portals: 0,
                accounting_systems: 0,
                metaschedulers: 0,
                monitoring_systems: 0,
                science_gateways: 0,
            },
            payload_bytes: PayloadBytes::default(),
            adapters: Vec::new(),
        };
        assert_eq!(expected_publish_rate(&p).total, 0.0);
    }

    #[test]
    fn adapter_blocks_parse_and_validate() {
        let text = r#"{
            "name": "etp-demo",
            "partitions": 0, "simultaneous_jobs": 0, "jobs_per_hour": 0,
            "services": 0, "tests_per_service": 0,
            "inca_period_range_secs": [900, 7200],
            "subscribers": {"info_databases": 1, "web_portals": 0, "accounting_systems": 0,
                            "metaschedulers": 0, "monitoring_systems": 0, "science_gateways": 0},
            "adapters": [
                {"source": "ganglia", "site": "site01", "entities": 10, "poll_period_secs": 15},
                {"source": "snapp", "site": "site01", "entities": 6, "poll_period_secs": 10}
            ]
        }"#;
        let profile = parse_profile(text).unwrap();
        assert_eq!(profile.adapters.len(), 2);
        assert_eq!(profile.adapters[0].source, "ganglia");

        let bad = text.replace("\"ganglia\"", "\"nagios\"");
        assert!(parse_profile(&bad).is_err());
        let bad = text.replace("\"poll_period_secs\": 15", "\"poll_period_secs\": 0");
        assert!(parse_profile(&bad).is_err());
    }

    #[test]
    fn rate_is_linear_in_count_fields() {
        let p = bundled_profile("futuregrid").unwrap();
        let mut doubled = p.clone();
        doubled.partitions *= 2;
        doubled.simultaneous_jobs *= 2;
        doubled.jobs_per_hour *= 2.0;
        doubled.services *= 2;
        doubled.nodes = doubled.nodes.map(|n| n * 2);
        doubled.network_links = doubled.network_links.map(|n| n * 2);
        let base = expected_publish_rate(&p).total;
        let twice = expected_publish_rate(&doubled).total;
        assert!((twice - 2.0 * base).abs() < 1e-9, "{twice} vs {base}");
    }

    #[test]
    fn mean_message_size_tracks_the_measured_experiments() {
        // (profile, published mean bytes observed in production)
        for (name, expected) in [("futuregrid", 2_175.0), ("xsede", 10_517.0), ("osg", 4_367.0)] {
            let p = bundled_profile(name).unwrap();
            let mean = expected_mean_message_bytes(&p);
            let err = (mean - expected).abs() / expected;
            assert!(err < 0.01, "{name}: implied {mean:.0} vs {expected}");
        }
        // doubling the infrastructure keeps the mix, and so the mean
        let p2 = bundled_profile("futuregridx2").unwrap();
        assert!((expected_mean_message_bytes(&p2) - 2_175.0).abs() / 2_175.0 < 0.01);
    }

    #[test]
    fn queue_doc_bytes_grow_with_job_population() {
        let fg = bundled_profile("futuregrid").unwrap();
        assert_eq!(fg.queue_doc_bytes(), 5_113);
        let xsede = bundled_profile("xsede").unwrap();
        assert_eq!(xsede.queue_doc_bytes(), 61_947);
    }

    #[test]
    fn futuregridx2_oracle_is_close_to_double() {
        let base = expected_publish_rate(&bundled_profile("futuregrid").unwrap()).total;
        let twice = expected_publish_rate(&bundled_profile("futuregridx2").unwrap()).total;
        let ratio = twice / base;
        assert!((ratio - 2.0).abs() < 0.03 * 2.0, "ratio {ratio}");
    }
}
