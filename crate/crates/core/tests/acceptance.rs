//! Acceptance suite: one test per headline criterion, each printing a
//! PASS/FAIL line (run with `cargo test --test acceptance -- --nocapture`).

mod common;

use common::{fbs_vertex_enumeration, report};
use num_traits::One;
use qclab::boosters::amplify;
use qclab::bootstrap::{derive_safe_constant, helper_inequality_check};
use qclab::compose::composition_gap_report;
use qclab::domain::{Alphabet, Dist, DistPair, PartialFunction};
use qclab::dtree::{DecisionTree, LeafLabel, Node, TruncationParams};
use qclab::exact::{bs, corr_eps, dt_eps, fbs, shaltiel_intro, shaltiel_intro_pair, Caps, CorrCost};
use qclab::instances::{soundness_suite, submartingale_suite};
use qclab::pipeline::{run_pipeline, PipelineParams};
use qclab::ratio::{rat, rat_int, Rat};
use qclab::reductions::{bicorr_to_corr, statistical_distance, BicorrInstance};

/// Criterion 1: on the hard-bulk xor distribution, the single-sample cost at
/// error 1/3 is at least 3 at n=5, while the correlated cost is a constant:
/// identical at n=5 and n=7 and strictly below the single-sample cost at the
/// same error, plus an n-independent amplified two-query upper bound.
#[test]
fn criterion_1_hard_bulk_separation() {
    let caps = Caps::default();
    let start = std::time::Instant::now();

    let (f5, d5) = shaltiel_intro(5).unwrap();
    let dt5_third = dt_eps(&f5, &d5, &rat(1, 3), &caps).unwrap();
    assert!(dt5_third >= 3, "dt at n=5 is {dt5_third}");
    assert_eq!(dt5_third, 4);

    // correlated cost at a fixed error level, exact product DP
    let eps = rat(197, 400);
    let mut corr_costs = Vec::new();
    let mut dt_costs = Vec::new();
    for n in [5usize, 7] {
        let (f, d) = shaltiel_intro(n).unwrap();
        dt_costs.push(dt_eps(&f, &d, &eps, &caps).unwrap());
        let pair = shaltiel_intro_pair(n).unwrap();
        corr_costs.push(corr_eps(&pair, &eps, 3, 4, &caps).unwrap());
    }
    assert_eq!(corr_costs[0], CorrCost { cost: 2, k: 2 });
    assert_eq!(corr_costs[0], corr_costs[1], "correlated cost must not depend on n");
    assert!(corr_costs[0].cost < dt_costs[0], "strict separation at n=5");
    assert!(corr_costs[1].cost < dt_costs[1], "strict separation at n=7");
    assert_eq!(dt_costs, vec![4, 6]);

    // n-independent upper bound at error 1/3: the two-query easy-branch
    // hunter amplified by fresh samples
    let mut amplified_costs = Vec::new();
    for n in [5usize, 7] {
        let pair = shaltiel_intro_pair(n).unwrap();
        let guesser = DecisionTree::new(
            1,
            n,
            Alphabet::binary(),
            Node::Query {
                sample: 0,
                pos: 0,
                children: vec![
                    Node::leaf(Some(LeafLabel::Accept)),
                    Node::Query {
                        sample: 0,
                        pos: 1,
                        children: vec![
                            Node::leaf(Some(LeafLabel::Accept)), // easy branch, parity 1
                            Node::leaf(Some(LeafLabel::Reject)),
                        ],
                    },
                ],
            },
        )
        .unwrap();
        let stats = qclab::boosters::tester_stats(&guesser, &pair, 1);
        assert_eq!(stats.accept_on_d1, rat_int(1));
        assert_eq!(stats.accept_on_d0, rat(99, 100));
        let amp = amplify(&stats.accept_on_d0, &stats.accept_on_d1, 2, &rat(1, 200), &rat(1, 3)).unwrap();
        amplified_costs.push(amp.query_cost);
    }
    assert_eq!(amplified_costs[0], amplified_costs[1]);

    assert!(start.elapsed().as_secs() < 60, "runtime budget");
    report("criterion 1: hard-bulk separation (dt >= 3, corr cost constant in n)", true);
}

/// Criterion 2: the scalar helper inequality holds on a dense grid for every
/// listed threshold, with no violation beyond 1e-12.
#[test]
fn criterion_2_helper_inequality() {
    let r = helper_inequality_check(&[0.0, 0.5, 1.0, 2.0, 5.0], 10_000);
    assert!(r.evaluated >= 10_000);
    assert_eq!(r.violations, 0, "worst violation {}", r.worst);
    report("criterion 2: helper inequality grid (zero violations beyond 1e-12)", true);
}

/// Criterion 3: ten thousand random one-step instances satisfy the
/// sub-martingale inequality with the derived constant 1/12 at toy
/// truncation parameters; the headline-parameter constant is at least 1/1000.
#[test]
fn criterion_3_submartingale() {
    let toy = TruncationParams::toy();
    assert_eq!(derive_safe_constant(&toy).unwrap(), rat(1, 12));
    let paper = TruncationParams::paper();
    assert!(derive_safe_constant(&paper).unwrap() >= rat(1, 1000));
    let r = submartingale_suite(10_000, 7, &toy).unwrap();
    assert_eq!(r.instances, 10_000);
    assert_eq!(r.violations, 0, "worst margin {}", r.worst_margin);
    report("criterion 3: sub-martingale one-step suite (10^4 instances, zero violations)", true);
}

/// Criterion 4: the high-ratio soundness bound holds exactly on a thousand
/// random (tree, pair, threshold) instances.
#[test]
fn criterion_4_soundness() {
    let r = soundness_suite(1_000, 11);
    assert_eq!(r.instances, 1_000);
    assert_eq!(r.violations, 0);
    report("criterion 4: high-ratio mass bound (10^3 instances, zero violations)", true);
}

/// Criterion 5: the hybrid argument emits correlated testers with exact error
/// within 1/4 + eps/2 <= 5/12 on every toy paired tester with verified
/// error <= 1/3, and the triangle identity holds exactly.
#[test]
fn criterion_5_hybrid() {
    let five_twelfths = rat(5, 12);
    let third = rat(1, 3);

    // perfect paired tester on the dictator pair
    let pair = common::dictator_pair();
    let perfect = DecisionTree::new(
        2,
        2,
        Alphabet::binary(),
        Node::Query {
            sample: 0,
            pos: 0,
            children: vec![Node::leaf(Some(LeafLabel::Reject)), Node::leaf(Some(LeafLabel::Accept))],
        },
    )
    .unwrap();
    let r = bicorr_to_corr(&perfect, &pair, 1, &third, &third).unwrap();
    assert!(r.corr_error <= five_twelfths);
    assert_eq!(r.corr_error, rat_int(0));

    // imperfect paired tester with error exactly 1/4
    let noisy = DecisionTree::new(
        2,
        2,
        Alphabet::binary(),
        Node::Query {
            sample: 0,
            pos: 0,
            children: vec![
                Node::Query {
                    sample: 0,
                    pos: 1,
                    children: vec![
                        Node::leaf(Some(LeafLabel::Reject)),
                        Node::leaf(Some(LeafLabel::Accept)), // wrong half of the d0 side
                    ],
                },
                Node::leaf(Some(LeafLabel::Accept)),
            ],
        },
    )
    .unwrap();
    let inst = BicorrInstance { pair: pair.clone(), k: 1 };
    assert_eq!(inst.tester_error(&noisy), rat(1, 4));
    let r = bicorr_to_corr(&noisy, &pair, 1, &third, &third).unwrap();
    assert!(r.corr_error <= five_twelfths, "error {}", qclab::ratio::fmt_rat(&r.corr_error));
    assert!(r.derandomized.1 <= r.corr_error);

    // parity pair, exact full-slot tester, k = 1
    let parity = common::parity_pair();
    let slot0_full = DecisionTree::new(
        2,
        2,
        Alphabet::binary(),
        Node::Query {
            sample: 0,
            pos: 0,
            children: vec![
                Node::Query {
                    sample: 0,
                    pos: 1,
                    children: vec![Node::leaf(Some(LeafLabel::Reject)), Node::leaf(Some(LeafLabel::Accept))],
                },
                Node::Query {
                    sample: 0,
                    pos: 1,
                    children: vec![Node::leaf(Some(LeafLabel::Accept)), Node::leaf(Some(LeafLabel::Reject))],
                },
            ],
        },
    )
    .unwrap();
    let r = bicorr_to_corr(&slot0_full, &parity, 1, &third, &third).unwrap();
    assert!(r.corr_error <= five_twelfths);

    // explicit triangle identity on the leaf distributions of the noisy tester
    let p01 = noisy.leaf_reach_dist(&inst.dists01());
    let p00 = noisy.leaf_reach_dist(&inst.dists00());
    let p10 = noisy.leaf_reach_dist(&inst.dists10());
    let lhs = statistical_distance(&p01, &p10);
    let rhs = statistical_distance(&p01, &p00) + statistical_distance(&p00, &p10);
    assert!(lhs <= rhs);
    report("criterion 5: hybrid argument (emitted error <= 5/12, exact triangle)", true);
}

/// Criterion 6: at n=5, every cell fixing at most 2 positions keeps the
/// conditional parity bias within 1/2 +- 1/100, exactly.
#[test]
fn criterion_6_selection_bias() {
    let r = qclab::reductions::selection_bias_certificate(5, 2, &rat(1, 100)).unwrap();
    assert!(r.all_in_band, "max deviation {}", qclab::ratio::fmt_rat(&r.max_deviation));
    // 51 cells fix at most 2 of 5 positions; the 2 fixing the first two bits
    // to unequal values carry no mass
    assert_eq!(r.cells_checked, 49);
    report("criterion 6: selection lower-bound certificate at n=5", true);
}

/// Criterion 7: the composition chain holds exactly on AND_2 over xor_2 with
/// the stated parameter shape.
#[test]
fn criterion_7_composition() {
    let pair = common::parity_pair();
    let outer = PartialFunction::and(2);
    let inner = PartialFunction::xor(2);
    let r = composition_gap_report(&outer, &inner, &pair, &Caps::default()).unwrap();
    assert_eq!(r.fbs_value, rat_int(2));
    assert!(r.block.weighted_sum <= rat_int(r.block.budget as i64));
    assert!(r.block.expected_queries[r.block.selected] <= r.block.threshold);
    assert!(r.truncation.holds);
    assert!(r.truncation.flip_correct_trunc >= rat(4, 5));
    assert!(r.truncation.base_correct_trunc >= rat(3, 5));
    assert!(r.truncation.overrun <= rat(1, 5));
    assert!(r.bicorr_error <= rat(2, 5));
    // amplification lands below 1/3 on both sides by construction of amplify
    assert!(r.bicorr_amplified_cost >= r.bicorr_base_cost.min(1));
    report("criterion 7: composition chain on AND_2 over xor_2", true);
}

/// Criterion 8: over all 256 total functions at n=3, the LP value matches
/// exhaustive vertex enumeration and bs <= fbs; the parity family has
/// fbs = n for n <= 4.
#[test]
fn criterion_8_fbs_oracle_equivalence() {
    let caps = Caps::default();
    let codes: Vec<u64> = (0..256).collect();
    let failures: Vec<u64> = qclab::par::par_map(&codes, |&code| {
        let f = PartialFunction::from_code(3, code);
        let cert = fbs(&f, &caps).unwrap();
        let (bs_val, _) = bs(&f, &caps).unwrap();
        // independent oracle: best vertex over every input
        let mut oracle_best = Rat::from_integer(0.into());
        for x in f.defined_inputs() {
            let v = fbs_vertex_enumeration(&f, &x);
            if v > oracle_best {
                oracle_best = v;
            }
        }
        let ok = cert.value == oracle_best && Rat::from_integer((bs_val as i64).into()) <= cert.value;
        if ok {
            None
        } else {
            Some(code)
        }
    })
    .into_iter()
    .flatten()
    .collect();
    assert!(failures.is_empty(), "mismatching truth tables: {failures:?}");

    for n in 1..=4usize {
        let cert = fbs(&PartialFunction::xor(n), &caps).unwrap();
        assert_eq!(cert.value, Rat::from_integer((n as i64).into()), "xor_{n}");
    }
    report("criterion 8: fbs oracle equivalence over 256 functions, fbs(xor_n) = n", true);
}

/// Criterion 9: the end-to-end chain completes on two toy pairs with every
/// stage's guarantee asserted exactly; the final cost lands within a small
/// factor of the single-sample reference (reported, not asserted).
#[test]
fn criterion_9_pipeline() {
    let caps = Caps::default();

    let dict = common::dictator_pair();
    let params_a = toy_pipeline_params(1, 1);
    let a = run_pipeline(&dict, &params_a, &caps).unwrap();
    assert!(a.final_error <= rat(1, 3));
    assert!(a.single_certified);
    println!(
        "pipeline dictator: final depth {} vs reference {} (ratio {:.3})",
        a.final_stats.depth, a.reference_cost, a.cost_ratio
    );

    let f = PartialFunction::xor(2);
    let d0 = Dist::uniform_on(2, Alphabet::binary(), &[vec![0, 0], vec![1, 1]]).unwrap();
    let d1 = Dist::new(2, Alphabet::binary(), [(vec![0, 1], rat(2, 3)), (vec![1, 0], rat(1, 3))]).unwrap();
    let skewed = DistPair::new(f, d0, d1).unwrap();
    let params_b = toy_pipeline_params(2, 2);
    let b = run_pipeline(&skewed, &params_b, &caps).unwrap();
    assert!(b.final_error <= rat(1, 3));
    assert!(b.single_certified);
    assert_eq!(b.uniform_good_mass, Rat::one());
    println!(
        "pipeline skewed-xor: final depth {} vs reference {} (ratio {:.3})",
        b.final_stats.depth, b.reference_cost, b.cost_ratio
    );
    report("criterion 9: end-to-end pipeline on two toy pairs", true);
}

fn toy_pipeline_params(corr_depth: usize, phase_depth: usize) -> PipelineParams {
    PipelineParams {
        corr_samples: 1,
        corr_depth,
        corr_error_target: rat_int(0),
        booster_m: rat_int(2),
        bootstrap: qclab::bootstrap::BootstrapConfig {
            total_samples: 4,
            phase_samples: 1,
            phase_depth,
            phase_multiplier: 2,
            trunc: TruncationParams::toy(),
            unsettled_floor: 1,
            booster_delta: rat(1, 10),
            booster_m: rat_int(2),
            progress_target: 0.001,
        },
        uniform_delta: rat_int(0),
        uniform_eps: rat_int(0),
        uniform_m: rat_int(2),
        collapse_c: rat_int(2),
        enum_budget: 10_000,
        sample_count: 200,
        seed: 7,
    }
}
