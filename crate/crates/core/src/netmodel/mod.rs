//! Per-unit network data model.
//!
//! Buses carry their external (case file) id; branches and generators refer to
//! buses by that id. Builders work on 0-based contiguous indices obtained from
//! [`Network::bus_index`].

mod admittance;
mod validate;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use admittance::{build_admittance, AdmittanceMatrix, BranchAdmittance};
pub use validate::{validate, Severity, Violation};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Pq,
    Pv,
    Slack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub p_demand: f64,
    pub q_demand: f64,
    pub gs: f64,
    pub bs: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b_sh: f64,
    pub tap: f64,
    /// Phase shift in radians.
    pub shift: f64,
    /// Apparent power limit; `0.0` means unlimited.
    pub rate: f64,
    pub status: bool,
    pub switchable: bool,
    pub angle_min: f64,
    pub angle_max: f64,
}

impl Branch {
    pub fn is_transformer(&self) -> bool {
        self.tap != 1.0 || self.shift != 0.0
    }

    pub fn has_rate(&self) -> bool {
        self.rate > 0.0
    }
}

/// Costs are applied to MW, not per-unit: `c2 * P^2 + c1 * P + c0` in $/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl Generator {
    /// Cost in $/h of a dispatch given in per-unit.
    pub fn cost(&self, p_pu: f64, base_mva: f64) -> f64 {
        let mw = p_pu * base_mva;
        self.c2 * mw * mw + self.c1 * mw + self.c0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl Network {
    /// Map from external bus id to internal 0-based index.
    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(k, bus)| (bus.id, k))
            .collect()
    }

    /// Resolves every reference to internal indices, rejecting dangling ones.
    pub fn indexed(&self) -> Result<IndexedNetwork, Error> {
        let lookup = self.bus_index();
        let find = |id: usize, what: String| {
            lookup
                .get(&id)
                .copied()
                .ok_or_else(|| Error::InvalidNetwork(format!("{what} references missing bus {id}")))
        };
        let mut branch_ends = Vec::with_capacity(self.branches.len());
        for (k, br) in self.branches.iter().enumerate() {
            let f = find(br.from_bus, format!("branch {k}"))?;
            let t = find(br.to_bus, format!("branch {k}"))?;
            branch_ends.push((f, t));
        }
        let mut gen_bus = Vec::with_capacity(self.generators.len());
        for (k, g) in self.generators.iter().enumerate() {
            gen_bus.push(find(g.bus, format!("generator {k}"))?);
        }
        let mut gens_at = vec![Vec::new(); self.buses.len()];
        for (k, &b) in gen_bus.iter().enumerate() {
            gens_at[b].push(k);
        }
        let slack: Vec<usize> = self
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(k, _)| k)
            .collect();
        Ok(IndexedNetwork {
            branch_ends,
            gen_bus,
            gens_at,
            slack,
        })
    }

    pub fn slack_index(&self) -> Result<usize, Error> {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .ok_or(Error::NoSlack)
    }

    /// Copy of the network with the given branches taken out of service.
    pub fn with_open_branches(&self, open: &[usize]) -> Network {
        let mut net = self.clone();
        for &k in open {
            if let Some(br) = net.branches.get_mut(k) {
                br.status = false;
            }
        }
        net
    }

    pub fn total_demand(&self) -> f64 {
        self.buses.iter().map(|b| b.p_demand).sum()
    }
}

/// Index tables derived from a [`Network`].
#[derive(Debug, Clone)]
pub struct IndexedNetwork {
    /// Internal (from, to) bus indices per branch.
    pub branch_ends: Vec<(usize, usize)>,
    pub gen_bus: Vec<usize>,
    /// Generators attached to each bus.
    pub gens_at: Vec<Vec<usize>>,
    pub slack: Vec<usize>,
}

/// Indices of in-service branches flagged switchable, ascending.
pub fn switchable_set(network: &Network) -> Vec<usize> {
    network
        .branches
        .iter()
        .enumerate()
        .filter(|(_, br)| br.status && br.switchable)
        .map(|(k, _)| k)
        .collect()
}

/// Connected components (as sorted internal bus indices) of the graph formed
/// by in-service branches not listed in `open`. Components are ordered by
/// their smallest bus index. Dangling branch references are ignored.
pub fn connected_components(network: &Network, open: &[usize]) -> Vec<Vec<usize>> {
    let n = network.buses.len();
    let lookup = network.bus_index();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut k: usize) -> usize {
        while parent[k] != k {
            parent[k] = parent[parent[k]];
            k = parent[k];
        }
        k
    }
    for (k, br) in network.branches.iter().enumerate() {
        if !br.status || open.contains(&k) {
            continue;
        }
        let (Some(&f), Some(&t)) = (lookup.get(&br.from_bus), lookup.get(&br.to_bus)) else {
            continue;
        };
        let (rf, rt) = (root(&mut parent, f), root(&mut parent, t));
        if rf != rt {
            parent[rf.max(rt)] = rf.min(rt);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for k in 0..n {
        let r = root(&mut parent, k);
        groups.entry(r).or_default().push(k);
    }
    let mut comps: Vec<Vec<usize>> = groups.into_values().collect();
    comps.sort_by_key(|c| c[0]);
    comps
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn bus(id: usize, kind: BusKind, p_demand: f64) -> Bus {
        Bus {
            id,
            kind,
            p_demand,
            q_demand: 0.0,
            gs: 0.0,
            bs: 0.0,
            v_min: 0.9,
            v_max: 1.1,
            base_kv: 230.0,
        }
    }

    pub fn line(from_bus: usize, to_bus: usize, r: f64, x: f64, b_sh: f64) -> Branch {
        Branch {
            from_bus,
            to_bus,
            r,
            x,
            b_sh,
            tap: 1.0,
            shift: 0.0,
            rate: 0.0,
            status: true,
            switchable: true,
            angle_min: -std::f64::consts::FRAC_PI_3,
            angle_max: std::f64::consts::FRAC_PI_3,
        }
    }

    pub fn gen(bus: usize, p_max: f64, c1: f64) -> Generator {
        Generator {
            bus,
            p_min: 0.0,
            p_max,
            q_min: -1.0,
            q_max: 1.0,
            c2: 0.0,
            c1,
            c0: 0.0,
        }
    }
}
