mod common;

use std::time::Duration;

use common::{arb_expr, default_rules};
use mba_core::egraph::EGraph;
use mba_core::expand::{expand, extract_max, extract_min, ExpansionConfig, StopReason};
use mba_core::expr::{parse, BitWidth, Expr};
use mba_core::rewrite::{apply_match, parse_rules, search};
use mba_core::verify::check_equivalence;
use proptest::prelude::*;

const VARS: &[&str] = &["x", "y", "z"];

/// Small deterministic configuration: no wall clock.
fn small(node_limit: usize, iter_limit: usize, rounds: usize) -> ExpansionConfig {
    ExpansionConfig {
        node_limit: Some(node_limit),
        iter_limit: Some(iter_limit),
        time_limit: None,
        extraction_rounds: rounds,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn expansion_preserves_semantics(e in arb_expr(VARS, 4)) {
        let rules = default_rules();
        let report = expand(&e, &rules, &small(400, 4, 12)).unwrap();
        // at most 3 variables: 4096 environments at 4 bits
        let narrow = check_equivalence(&e, &report.output, BitWidth::W4, 1, 0);
        prop_assert!(narrow.passed, "4-bit: {}", narrow.counterexample.unwrap());
        prop_assert!(narrow.cases_checked >= 1);
        let wide = check_equivalence(&e, &report.output, BitWidth::W64, 1000, 7);
        prop_assert!(wide.passed, "64-bit: {}", wide.counterexample.unwrap());
    }

    #[test]
    fn growth_is_monotone(e in arb_expr(VARS, 3)) {
        let rules = default_rules();
        // shallower rounds cannot reach the input term itself
        let start = e.depth().max(1);
        let by_rounds: Vec<usize> = (start..start + 10)
            .map(|r| expand(&e, &rules, &small(300, 3, r)).unwrap().output.size())
            .collect();
        prop_assert!(by_rounds.windows(2).all(|w| w[0] <= w[1]), "rounds: {:?}", by_rounds);
        let by_iters: Vec<usize> = (1..=5)
            .map(|i| expand(&e, &rules, &small(300, i, start + 6)).unwrap().output.size())
            .collect();
        prop_assert!(by_iters.windows(2).all(|w| w[0] <= w[1]), "iterations: {:?}", by_iters);
    }

    #[test]
    fn output_dominates_input(e in arb_expr(VARS, 4)) {
        let rules = default_rules();
        let report = expand(&e, &rules, &small(400, 3, 16)).unwrap();
        if report.stop != StopReason::Saturated || report.iterations > 1 {
            prop_assert!(report.metrics_out.ast_size >= report.metrics_in.ast_size);
        }
    }

    #[test]
    fn expansion_is_deterministic(e in arb_expr(VARS, 4)) {
        let rules = default_rules();
        let cfg = small(500, 5, 20);
        let a = expand(&e, &rules, &cfg).unwrap();
        let b = expand(&e, &rules, &cfg).unwrap();
        prop_assert_eq!(a.output.to_string(), b.output.to_string());
        prop_assert_eq!(a.final_node_count, b.final_node_count);
    }

    #[test]
    fn min_never_exceeds_max(e in arb_expr(VARS, 3)) {
        let rules = default_rules();
        let mut g = EGraph::new(BitWidth::W64);
        g.add_expr(&e).unwrap();
        for rule in &rules {
            for m in search(&g, rule) {
                apply_match(&mut g, rule, &m).unwrap();
            }
        }
        g.rebuild();
        let ids: Vec<_> = g.classes().map(|c| c.id).collect();
        for id in ids {
            let min = extract_min(&g, id).unwrap().size();
            if let Ok(max) = extract_max(&g, id, 8, u64::MAX) {
                prop_assert!(min <= max.size());
            }
        }
    }
}

#[test]
fn default_run_on_two_variable_sum_grows_a_hundredfold() {
    let input = parse("x + y", BitWidth::W64).unwrap();
    let report = expand(&input, &default_rules(), &ExpansionConfig::default()).unwrap();
    assert!(report.output.size() >= 100 * input.size());
    assert!(report.elapsed < Duration::from_secs(2) + Duration::from_millis(500));
}

#[test]
fn minimizing_undoes_single_rule_expansion() {
    let rules = parse_rules("addor : ?a + ?b => (?a | ?b) + (?a & ?b)").unwrap();
    let input = parse("x + y", BitWidth::W64).unwrap();
    let mut g = EGraph::new(BitWidth::W64);
    let root = g.add_expr(&input).unwrap();
    for m in search(&g, &rules[0]) {
        apply_match(&mut g, &rules[0], &m).unwrap();
    }
    g.rebuild();
    assert_eq!(extract_max(&g, root, 2, u64::MAX).unwrap().size(), 7);
    assert_eq!(extract_min(&g, root).unwrap(), input);
}

#[test]
fn constant_input_is_left_alone() {
    let input: Expr = parse("5", BitWidth::W64).unwrap();
    let report = expand(&input, &default_rules(), &ExpansionConfig::default()).unwrap();
    assert_eq!(report.output, input);
    assert_eq!(report.stop, StopReason::Saturated);
}
