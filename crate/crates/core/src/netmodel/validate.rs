use std::collections::HashMap;
use std::fmt;

use super::{BusKind, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    /// Reported but does not make the network unusable (e.g. islanding).
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub severity: Severity,
    /// Offending entity, e.g. `"bus 4"` or `"generator 2"`.
    pub entity: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.entity, self.rule)
    }
}

/// Checks every structural invariant of the model. Never fails; an empty
/// result means the network is well formed.
pub fn validate(network: &Network) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |severity, entity: String, rule: String| {
        out.push(Violation {
            severity,
            entity,
            rule,
        })
    };

    if !(network.base_mva > 0.0) {
        push(Severity::Error, "network".into(), "base_mva must be positive".into());
    }

    let mut seen: HashMap<usize, usize> = HashMap::new();
    for (k, bus) in network.buses.iter().enumerate() {
        let name = format!("bus {}", bus.id);
        if let Some(prev) = seen.insert(bus.id, k) {
            push(Severity::Error, name.clone(), format!("duplicate id (rows {prev} and {k})"));
        }
        if !(bus.v_min > 0.0) {
            push(Severity::Error, name.clone(), "v_min must be positive".into());
        }
        if !(bus.v_min <= bus.v_max) {
            push(
                Severity::Error,
                name.clone(),
                format!("v_min {} exceeds v_max {}", bus.v_min, bus.v_max),
            );
        }
        let values = [bus.p_demand, bus.q_demand, bus.gs, bus.bs, bus.base_kv];
        if values.iter().any(|v| !v.is_finite()) {
            push(Severity::Error, name, "non-finite value".into());
        }
    }

    let slack_count = network.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
    if slack_count != 1 {
        push(
            Severity::Error,
            "network".into(),
            format!("expected exactly one slack bus, found {slack_count}"),
        );
    }

    for (k, br) in network.branches.iter().enumerate() {
        let name = format!("branch {k}");
        for end in [br.from_bus, br.to_bus] {
            if !seen.contains_key(&end) {
                push(Severity::Error, name.clone(), format!("references missing bus {end}"));
            }
        }
        if br.from_bus == br.to_bus {
            push(Severity::Error, name.clone(), "self loop".into());
        }
        if br.x == 0.0 || !br.x.is_finite() {
            push(Severity::Error, name.clone(), "reactance must be nonzero".into());
        }
        if !(br.rate >= 0.0) {
            push(Severity::Error, name.clone(), "rate must be non-negative".into());
        }
        if !(br.tap > 0.0) {
            push(Severity::Error, name.clone(), "tap ratio must be positive".into());
        }
        if !(br.angle_min <= 0.0 && 0.0 <= br.angle_max) {
            push(
                Severity::Error,
                name.clone(),
                format!(
                    "angle bounds [{}, {}] must bracket zero",
                    br.angle_min, br.angle_max
                ),
            );
        }
        if br.switchable && br.is_transformer() {
            push(Severity::Warning, name, "transformer flagged switchable".into());
        }
    }

    for (k, g) in network.generators.iter().enumerate() {
        let name = format!("generator {k}");
        if !seen.contains_key(&g.bus) {
            push(Severity::Error, name.clone(), format!("references missing bus {}", g.bus));
        }
        if !(g.p_min <= g.p_max) {
            push(Severity::Error, name.clone(), "p_min exceeds p_max".into());
        }
        if !(g.q_min <= g.q_max) {
            push(Severity::Error, name.clone(), "q_min exceeds q_max".into());
        }
        if !(g.c2 >= 0.0) {
            push(Severity::Error, name.clone(), "quadratic cost must be convex".into());
        }
        if [g.c1, g.c0].iter().any(|v| !v.is_finite()) {
            push(Severity::Error, name, "non-finite cost".into());
        }
    }

    let all_refs_ok = network
        .branches
        .iter()
        .all(|br| seen.contains_key(&br.from_bus) && seen.contains_key(&br.to_bus));
    if all_refs_ok && !network.buses.is_empty() {
        let comps = super::connected_components(network, &[]);
        if comps.len() > 1 {
            push(
                Severity::Warning,
                "network".into(),
                format!("in-service graph has {} connected components", comps.len()),
            );
        }
    }
    out
}
