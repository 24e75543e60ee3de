//! Emulation and benchmarking engine: infrastructure profiles, traffic
//! generators, the subscriber matrix, the closed-form rate oracle,
//! throughput experiments, and capacity-headroom analysis.

pub mod emulation;
pub mod generate;
pub mod matrix;
pub mod profile;
pub mod report;
pub mod throughput;

pub use emulation::{
    run_emulation, BackendKind, EmulationError, EmulationOptions, EmulationOutcome,
    EMULATION_EXCHANGE, STORE_INGEST_QUEUE,
};
pub use generate::{EventPayload, GeneratorSet, ScheduledEvent, SOURCE_LABELS};
pub use matrix::{
    build_subscription_matrix, expected_fan_out_ratio, fan_out_for_key, representative_key,
    SubscriberInstance, SubscriberRole,
};
pub use report::{
    percentile_ms, write_throughput_csv, EmulationReport, PairStats, SourceReportRow,
    StoreModeReport, ThroughputReport,
};
pub use throughput::{
    run_broker_throughput, run_loopback_throughput, run_store_throughput, ThroughputError,
    ThroughputOptions,
};
pub use profile::{
    bundled_profile, bundled_profile_names, expected_mean_message_bytes, expected_publish_rate,
    load_profile, resolve_profile, InfrastructureProfile, PayloadBytes, ProfileError, RateOracle,
    SubscriberCounts,
};

/// Fraction of messaging capacity left free: `1 - delivered/capacity`,
/// clamped to [0, 1]. `capacity` must be positive.
pub fn capacity_headroom(delivered_per_sec: f64, capacity_per_sec: f64) -> f64 {
    assert!(
        capacity_per_sec > 0.0,
        "capacity must be positive, got {capacity_per_sec}"
    );
    (1.0 - delivered_per_sec / capacity_per_sec).clamp(0.0, 1.0)
}
