use otsopf::caseio::{parse_json, parse_matpower, serialize_json, to_network};
use otsopf::formulations::{build, solve_model, FormulationKind, SolveConfig, DEFAULT_BIG_M};
use otsopf::metrics::{study_report, DEFAULT_FMP_TOL};
use proptest::prelude::*;

mod common;
use common::random_dc_network;

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn matpower_parser_is_total(text in "\\PC{0,400}") {
        if let Ok(raw) = parse_matpower(&text) {
            let _ = to_network(&raw);
        }
    }

    #[test]
    fn matpower_like_noise_is_total(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 0..15), 0..6)) {
        let body: String = rows
            .iter()
            .map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\t") + ";\n")
            .collect();
        let text = format!(
            "function mpc = t\nmpc.baseMVA = 100;\nmpc.bus = [\n{body}];\nmpc.gen = [\n{body}];\nmpc.branch = [\n{body}];\nmpc.gencost = [\n{body}];\n"
        );
        if let Ok(raw) = parse_matpower(&text) {
            let _ = to_network(&raw);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn json_round_trip_is_identity(net in random_dc_network()) {
        let back = parse_json(&serialize_json(&net)).unwrap();
        prop_assert_eq!(back, net);
    }

    /// A line carries a flow price only while it sits at its rating.
    #[test]
    fn flow_prices_are_complementary(net in random_dc_network()) {
        let handle = build(&net, FormulationKind::DcOpf, None, DEFAULT_BIG_M).unwrap();
        let solved = solve_model(&handle, &SolveConfig::default()).unwrap();
        prop_assume!(solved.status.has_solution());
        let rep = study_report(&net, &handle, &solved, DEFAULT_FMP_TOL).unwrap();
        let d = solved.dispatch(&handle).unwrap();
        for (k, br) in net.branches.iter().enumerate() {
            let rate = br.rate;
            if rate > 0.0 {
                let f = d.flows[k].p_from.abs();
                prop_assert!(f <= rate + 1e-6, "line {} flow {} over rating {}", k, f, rate);
                if rep.fmp[k].abs() > 1e-4 {
                    prop_assert!((f - rate).abs() <= 1e-5, "priced line {} below its rating: {} < {}", k, f, rate);
                }
            } else {
                prop_assert_eq!(rep.fmp[k], 0.0);
            }
        }
    }

    /// Uncongested lossless dispatch prices every bus alike.
    #[test]
    fn uncongested_dc_prices_are_uniform(net in random_dc_network()) {
        let handle = build(&net, FormulationKind::DcOpf, None, DEFAULT_BIG_M).unwrap();
        let solved = solve_model(&handle, &SolveConfig::default()).unwrap();
        prop_assume!(solved.status.has_solution());
        let rep = study_report(&net, &handle, &solved, DEFAULT_FMP_TOL).unwrap();
        prop_assume!(rep.fmp.iter().all(|f| f.abs() <= 1e-6));
        let lo = rep.lmp.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rep.lmp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(hi - lo <= 1e-5 * hi.abs().max(1.0), "LMPs span {}..{}", lo, hi);
        prop_assert!(rep.congestion_rent.abs() <= 1e-6 * rep.total_cost.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    /// More switching freedom never costs more, and never beats the
    /// continuous relaxation's bound.
    #[test]
    fn dc_switching_budget_is_monotone(net in random_dc_network()) {
        let nominal = {
            let h = build(&net, FormulationKind::DcOpf, None, DEFAULT_BIG_M).unwrap();
            solve_model(&h, &SolveConfig::default()).unwrap()
        };
        prop_assume!(nominal.status.has_solution());
        let mut last = nominal.objective();
        for budget in [Some(0), Some(1), Some(2), None] {
            let h = build(&net, FormulationKind::DcOts, budget, DEFAULT_BIG_M).unwrap();
            let s = solve_model(&h, &SolveConfig::default()).unwrap();
            prop_assert!(s.status.has_solution());
            let obj = s.objective();
            prop_assert!(obj <= last + 1e-6 * last.abs().max(1.0), "budget {:?}: {} after {}", budget, obj, last);
            prop_assert!(s.best_bound <= obj + 1e-6 * obj.abs().max(1.0));
            last = obj;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    /// Branch and bound agrees with trying every topology.
    #[test]
    fn dc_switching_matches_enumeration(net in random_dc_network()) {
        let h = build(&net, FormulationKind::DcOts, None, DEFAULT_BIG_M).unwrap();
        let s = solve_model(&h, &SolveConfig::default()).unwrap();
        let m = net.branches.len();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << m) {
            let open: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
            let fixed = build(&net.with_open_branches(&open), FormulationKind::DcOpf, None, DEFAULT_BIG_M).unwrap();
            let r = solve_model(&fixed, &SolveConfig::default()).unwrap();
            if r.status.has_solution() {
                best = best.min(r.objective());
            }
        }
        prop_assume!(best.is_finite());
        prop_assert!(s.status.has_solution());
        let obj = s.objective();
        prop_assert!((obj - best).abs() <= 1e-6 * best.abs().max(1.0), "branch and bound {} vs enumeration {}", obj, best);
    }
}
