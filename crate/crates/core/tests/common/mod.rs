use otsopf::netmodel::{Branch, Bus, BusKind, Generator, Network};
use proptest::prelude::*;

/// Random connected lossless networks: a spanning tree plus a few chords,
/// generators with distinct prices, ratings either generous or tight.
pub fn random_dc_network() -> impl Strategy<Value = Network> {
    (3usize..7)
        .prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(0usize..1000, n - 1),
                proptest::collection::vec((0usize..n, 0usize..n, 0.05f64..0.5), 0..3),
                proptest::collection::vec(0.0f64..1.0, n),
                proptest::collection::vec(5.0f64..50.0, 2),
                proptest::bool::ANY,
            )
        })
        .prop_map(|(n, parents, chords, loads, prices, tight)| {
            let bus = |id: usize, kind| Bus {
                id,
                kind,
                p_demand: 0.0,
                q_demand: 0.0,
                gs: 0.0,
                bs: 0.0,
                v_min: 0.9,
                v_max: 1.1,
                base_kv: 230.0,
            };
            let line = |f: usize, t: usize, x: f64, rate: f64| Branch {
                from_bus: f,
                to_bus: t,
                r: 0.0,
                x,
                b_sh: 0.0,
                tap: 1.0,
                shift: 0.0,
                rate,
                status: true,
                switchable: true,
                angle_min: -1.047,
                angle_max: 1.047,
            };
            let mut buses: Vec<Bus> = (1..=n).map(|id| bus(id, if id == 1 { BusKind::Slack } else { BusKind::Pq })).collect();
            for (b, l) in buses.iter_mut().zip(loads).skip(1) {
                b.p_demand = l;
            }
            let rate = if tight { 0.3 } else { 0.0 };
            let mut branches: Vec<Branch> = parents
                .iter()
                .enumerate()
                .map(|(k, &p)| line(p % (k + 1) + 1, k + 2, 0.1 + 0.01 * k as f64, rate))
                .collect();
            for (f, t, x) in chords {
                if f != t {
                    branches.push(line(f + 1, t + 1, x, rate));
                }
            }
            let far = n;
            buses[far - 1].kind = BusKind::Pv;
            let gen = |bus: usize, c1: f64| Generator {
                bus,
                p_min: 0.0,
                p_max: 10.0,
                q_min: -10.0,
                q_max: 10.0,
                c2: 0.0,
                c1,
                c0: 0.0,
            };
            Network {
                base_mva: 100.0,
                buses,
                branches,
                generators: vec![gen(1, prices[0]), gen(far, prices[1])],
            }
        })
}
