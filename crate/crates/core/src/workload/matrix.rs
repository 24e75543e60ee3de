//! The subscriber matrix: consumer roles, their topic patterns, and the
//! fan-out oracle.
//!
//! Roles and interests: information databases and the user portal take
//! everything; accounting takes GLUE2 job updates; metaschedulers take GLUE2
//! snapshots and job updates; monitoring systems take all Inca, perfSONAR,
//! SNAPP, and Ganglia information; science gateways take GLUE2 snapshots,
//! GLUE2 job updates, and Inca test results.

use crate::routing::{RoutingKey, RoutingPattern};
use crate::workload::profile::{expected_publish_rate, InfrastructureProfile};

#[derive(Debug, Clone)]
pub struct SubscriberRole {
    pub name: &'static str,
    pub patterns: Vec<RoutingPattern>,
}

/// One concrete subscriber: a queue with the role's patterns bound.
#[derive(Debug, Clone)]
pub struct SubscriberInstance {
    pub role: &'static str,
    pub queue: String,
    pub patterns: Vec<RoutingPattern>,
}

fn patterns(texts: &[&str]) -> Vec<RoutingPattern> {
    texts
        .iter()
        .map(|t| RoutingPattern::parse(t).expect("role pattern"))
        .collect()
}

/// How many instances of a role a profile deploys.
pub type RoleCount = fn(&InfrastructureProfile) -> u32;

pub fn subscriber_roles() -> Vec<(SubscriberRole, RoleCount)> {
    vec![
        (
            SubscriberRole {
                name: "info_database",
                patterns: patterns(&["#"]),
            },
            |p| p.subscribers.info_databases,
        ),
        (
            SubscriberRole {
                name: "web_portal",
                patterns: patterns(&["#"]),
            },
            |p| p.subscribers.web_portals,
        ),
        (
            SubscriberRole {
                name: "accounting",
                patterns: patterns(&["glue2.*.*.job.*"]),
            },
            |p| p.subscribers.accounting_systems,
        ),
        (
            SubscriberRole {
                name: "metascheduler",
                patterns: patterns(&[
                    "glue2.*.*.partition",
                    "glue2.*.*.queue",
                    "glue2.*.*.job.*",
                ]),
            },
            |p| p.subscribers.metaschedulers,
        ),
        (
            SubscriberRole {
                name: "monitoring",
                patterns: patterns(&["inca.#", "perfsonar.#", "snapp.#", "ganglia.#"]),
            },
            |p| p.subscribers.monitoring_systems,
        ),
        (
            SubscriberRole {
                name: "science_gateway",
                patterns: patterns(&[
                    "glue2.*.*.partition",
                    "glue2.*.*.queue",
                    "glue2.*.*.job.*",
                    "inca.#",
                ]),
            },
            |p| p.subscribers.science_gateways,
        ),
    ]
}

/// One queue per subscriber instance, with the role's patterns to bind.
pub fn build_subscription_matrix(profile: &InfrastructureProfile) -> Vec<SubscriberInstance> {
    let mut instances = Vec::new();
    for (role, count_of) in subscriber_roles() {
        for index in 0..count_of(profile) {
            instances.push(SubscriberInstance {
                role: role.name,
                queue: format!("sub.{}.{index:02}", role.name),
                patterns: role.patterns.clone(),
            });
        }
    }
    instances
}

/// Number of subscriber queues a message with this key reaches: instances
/// with at least one matching pattern (bindings to one queue dedupe).
pub fn fan_out_for_key(matrix: &[SubscriberInstance], key: &RoutingKey) -> usize {
    matrix
        .iter()
        .filter(|instance| instance.patterns.iter().any(|p| p.matches(key)))
        .count()
}

/// A representative routing key per rate-oracle source label.
pub fn representative_key(source_label: &str) -> RoutingKey {
    let text = match source_label {
        "ganglia" => "ganglia.site00.node0000.metrics",
        "snapp" => "snapp.link00.traffic",
        "perfsonar" => "perfsonar.site00.site01.bandwidth",
        "inca" => "inca.site00.svc000.test000",
        "glue2.partition" => "glue2.site00.part00.partition",
        "glue2.queue" => "glue2.site00.part00.queue",
        "glue2.job" => "glue2.site00.part00.job.start",
        other => panic!("no representative key for source {other:?}"),
    };
    RoutingKey::parse(text).expect("representative key")
}

/// Rate-weighted mean fan-out: the delivered/published ratio the matrix
/// implies when every queue keeps up and nothing drops.
pub fn expected_fan_out_ratio(profile: &InfrastructureProfile) -> f64 {
    let oracle = expected_publish_rate(profile);
    if oracle.total == 0.0 {
        return 0.0;
    }
    let matrix = build_subscription_matrix(profile);
    let delivered: f64 = oracle
        .per_source
        .iter()
        .map(|(label, rate)| rate * fan_out_for_key(&matrix, &representative_key(label)) as f64)
        .sum();
    delivered / oracle.total
}
