//! Property suites for the structural invariants: partition masses,
//! conditioning composition, ratio multiplicativity, leaf-mass conservation,
//! serialization round trips, and the exhaustive n=3 measure relations.

mod common;

use proptest::prelude::*;
use qclab::domain::{Alphabet, Cell, Dist, DistPair, LikelihoodRatio, PartialFunction, Word};
use qclab::dtree::{
    is_settled, truncated_log_ratio, DecisionTree, LeafLabel, Node, ProductCell, TruncationParams,
};
use qclab::exact::{bs, dt_eps, fbs, min_error, rdt_tiny, Caps};
use qclab::instances::{random_pair, random_tree};
use qclab::ratio::{rat, rat_int, rat_sum, Rat};
use qclab::rng::Rng;
use num_traits::{One, Zero};

fn arb_dist(n: usize) -> impl Strategy<Value = Dist> {
    let points = 1usize << n;
    proptest::collection::vec(0u64..6, points).prop_filter_map("needs some mass", move |weights| {
        let total: u64 = weights.iter().sum();
        if total == 0 {
            return None;
        }
        let entries = weights.iter().enumerate().filter(|(_, w)| **w > 0).map(|(i, w)| {
            let word = qclab::domain::index_word(i, n, Alphabet::binary());
            (word, Rat::new((*w as i64).into(), (total as i64).into()))
        });
        Dist::new(n, Alphabet::binary(), entries).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    /// Cells fixing the same coordinate partition the mass.
    #[test]
    fn partition_masses_sum_to_one(d in arb_dist(3), pos in 0usize..3) {
        let full = Cell::full(3);
        let total: Rat = rat_sum(
            (0..2u8).map(|s| d.cell_mass(&full.fix(pos, s))).collect::<Vec<_>>().iter(),
        );
        prop_assert_eq!(total, rat_int(1));
    }

    /// Conditioning composes: (d | c1) | c2 = d | (c1 and c2).
    #[test]
    fn conditioning_composes(d in arb_dist(3), p1 in 0usize..3, s1 in 0u8..2, p2 in 0usize..3, s2 in 0u8..2) {
        prop_assume!(p1 != p2);
        let c1 = Cell::full(3).fix(p1, s1);
        let c2 = Cell::full(3).fix(p2, s2);
        let both = c1.intersect(&c2).unwrap();
        if d.cell_mass(&both).is_zero() {
            return Ok(());
        }
        let stepwise = d.conditional(&c1).unwrap().conditional(&c2).unwrap();
        let direct = d.conditional(&both).unwrap();
        prop_assert_eq!(stepwise, direct);
    }

    /// The ratio is multiplicative under one-symbol extensions:
    /// lr(child) = lr(parent) * (p1(sym)/p0(sym)).
    #[test]
    fn ratio_multiplicative(seed in 0u64..500) {
        let mut rng = Rng::new(seed);
        let pair = random_pair(&mut rng);
        let n = pair.n();
        let full = Cell::full(n);
        let parent = pair.likelihood_ratio(&full).unwrap();
        for pos in 0..n {
            for s in pair.alphabet().symbols() {
                let child_cell = full.fix(pos, s);
                let m0 = pair.d0.cell_mass(&child_cell);
                let m1 = pair.d1.cell_mass(&child_cell);
                if m0.is_zero() && m1.is_zero() {
                    continue;
                }
                let child = pair.likelihood_ratio(&child_cell).unwrap();
                // d-masses factor through conditional symbol probabilities
                let p0 = pair.d0.symbol_prob(&full, pos, s).unwrap();
                let p1 = pair.d1.symbol_prob(&full, pos, s).unwrap();
                let lhs = child.d1_mass() * parent.d0_mass() * &p0;
                let rhs = child.d0_mass() * parent.d1_mass() * &p1;
                prop_assert_eq!(lhs, rhs);
            }
        }
    }

    /// Leaf reach probabilities sum to exactly one.
    #[test]
    fn leaf_reach_sums_to_one(seed in 0u64..500) {
        let mut rng = Rng::new(seed);
        let pair = random_pair(&mut rng);
        let t = random_tree(&mut rng, &pair);
        for d in [&pair.d0, &pair.d1] {
            let reach = t.leaf_reach_dist(&[d]);
            prop_assert_eq!(rat_sum(reach.iter()), rat_int(1));
        }
    }

    /// Tree serialization round-trips bit-exactly.
    #[test]
    fn tree_text_round_trip(seed in 0u64..500) {
        let mut rng = Rng::new(seed);
        let pair = random_pair(&mut rng);
        let t = random_tree(&mut rng, &pair);
        let text = t.to_text();
        let back = DecisionTree::parse(&text, "mem").unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_text(), text);
    }

    /// Settled if and only if the truncated log ratio sits at the sentinel.
    #[test]
    fn settled_iff_sentinel(seed in 0u64..500) {
        let mut rng = Rng::new(seed);
        let pair = random_pair(&mut rng);
        let trunc = TruncationParams::toy();
        let n = pair.n();
        let full = Cell::full(n);
        let mut cells = vec![full.clone()];
        for pos in 0..n {
            for s in pair.alphabet().symbols() {
                cells.push(full.fix(pos, s));
            }
        }
        for cell in cells {
            let m0 = pair.d0.cell_mass(&cell);
            let m1 = pair.d1.cell_mass(&cell);
            if m0.is_zero() && m1.is_zero() {
                continue;
            }
            let lr = pair.likelihood_ratio(&cell).unwrap();
            let tllr = truncated_log_ratio(&pair, &cell, &trunc).unwrap();
            prop_assert_eq!(is_settled(&lr, &trunc), tllr == trunc.settled_value_f64());
        }
    }

    /// min_error is nonincreasing in the budget and reaches zero by arity.
    #[test]
    fn min_error_monotone(code in 0u64..256) {
        let caps = Caps::default();
        let f = PartialFunction::from_code(3, code);
        let words: Vec<Word> = f.defined_inputs();
        let d = Dist::uniform_on(3, Alphabet::binary(), &words).unwrap();
        let mut prev = rat_int(1);
        for q in 0..=3 {
            let e = min_error(&f, &d, q, &caps).unwrap();
            prop_assert!(e <= prev);
            prev = e;
        }
        prop_assert_eq!(prev, rat_int(0));
    }
}

/// The overall ratio over a product cell equals the single-sample ratio of
/// the concatenated sample.
#[test]
fn overall_ratio_matches_concatenation() {
    let mut rng = Rng::new(42);
    for _ in 0..50 {
        let pair = random_pair(&mut rng);
        let n = pair.n();
        let k = 2usize;
        // concatenated pair: product function domain with product dists
        let d0_prod = Dist::product(&vec![&pair.d0; k]);
        let d1_prod = Dist::product(&vec![&pair.d1; k]);
        // a random product cell from per-sample one-fix cells
        let full = Cell::full(n);
        let pos = (rng.below(n as u64)) as usize;
        let sym = rng.below(pair.alphabet().size() as u64) as u8;
        let c1 = full.fix(pos, sym);
        if pair.d0.cell_mass(&c1).is_zero() && pair.d1.cell_mass(&c1).is_zero() {
            continue;
        }
        let pc = ProductCell { cells: vec![c1.clone(), full.clone()] };
        let olr = pc.overall_ratio(&pair).unwrap();
        // concatenated cell
        let mut joined = Vec::new();
        for c in &pc.cells {
            for p in 0..n {
                joined.push(c.get(p));
            }
        }
        let mut concat = Cell::full(2 * n);
        for (i, v) in joined.into_iter().enumerate() {
            if let Some(s) = v {
                concat = concat.fix(i, s);
            }
        }
        let m0 = d0_prod.cell_mass(&concat);
        let m1 = d1_prod.cell_mass(&concat);
        let single = LikelihoodRatio::new(m1, m0).unwrap();
        assert_eq!(olr.is_infinite(), single.is_infinite());
        assert_eq!(olr.is_zero(), single.is_zero());
        if !olr.is_infinite() {
            assert_eq!(olr.as_rat(), single.as_rat());
        }
    }
}

/// Exhaustive n=3 relations: bs <= fbs always; fbs stays within a small
/// constant of the tiny-randomized depth (the suite *disproves* the
/// constant-1 guess and pins the measured constant at 2, with the
/// counterexamples surfaced); and the distributional cost never exceeds the
/// randomized depth (the checkable minimax direction).
#[test]
fn exhaustive_n3_measure_relations() {
    let caps = Caps::default();
    let codes: Vec<u64> = (0..256).collect();
    let rows: Vec<(u64, Rat, usize, usize, bool)> = qclab::par::par_map(&codes, |&code| {
        let f = PartialFunction::from_code(3, code);
        let cert = fbs(&f, &caps).unwrap();
        let (bs_val, _) = bs(&f, &caps).unwrap();
        let rdt = rdt_tiny(&f, &rat(1, 3), &caps).unwrap();
        let bs_ok = Rat::from_integer((bs_val as i64).into()) <= cert.value;
        // Yao direction: distributional cost under the uniform distribution
        // is at most the randomized depth
        let words: Vec<Word> = f.defined_inputs();
        let d = Dist::uniform_on(3, Alphabet::binary(), &words).unwrap();
        let dt = dt_eps(&f, &d, &rat(1, 3), &caps).unwrap();
        (code, cert.value, rdt.depth, dt, bs_ok)
    });
    let mut over_depth: Vec<u64> = Vec::new();
    for (code, fbs_val, depth, dt, bs_ok) in &rows {
        assert!(bs_ok, "code {code}: bs above fbs");
        assert!(*dt <= *depth, "code {code}: dt_eps {dt} above randomized depth {depth}");
        if *fbs_val > Rat::from_integer((*depth as i64).into()) {
            over_depth.push(*code);
        }
        // the measured constant over the whole suite
        assert!(
            *fbs_val <= rat_int(2) * Rat::from_integer((*depth as i64).into()),
            "code {code}: fbs {} above twice the randomized depth {depth}",
            qclab::ratio::fmt_rat(fbs_val)
        );
    }
    // the constant-1 guess fails for a large family; keep the evidence visible
    println!(
        "fbs exceeds the randomized depth on {} of 256 functions (first few: {:?})",
        over_depth.len(),
        &over_depth[..over_depth.len().min(8)]
    );
    assert!(!over_depth.is_empty(), "expected known counterexamples to the constant-1 guess");
}

/// A balanced-pair tester built from any split distribution has error at
/// most 1/2 when it guesses the majority side.
#[test]
fn split_balanced_mixture_round_trip() {
    let pair = common::parity_pair();
    let mixture = pair.balanced_mixture();
    let again = DistPair::split(pair.f.clone(), &mixture).unwrap();
    assert_eq!(again.d0, pair.d0);
    assert_eq!(again.d1, pair.d1);
}

/// Dummy nodes keep cells and masses unchanged along the path.
#[test]
fn dummy_nodes_are_transparent() {
    let pair = common::dictator_pair();
    let inner = Node::Query {
        sample: 0,
        pos: 0,
        children: vec![Node::leaf(Some(LeafLabel::Reject)), Node::leaf(Some(LeafLabel::Accept))],
    };
    let t_plain = DecisionTree::new(1, 2, Alphabet::binary(), inner.clone()).unwrap();
    let t_dummy =
        DecisionTree::new(1, 2, Alphabet::binary(), Node::Dummy { child: Box::new(inner) }).unwrap();
    assert_eq!(
        t_plain.leaf_reach_dist(&[&pair.d1]),
        t_dummy.leaf_reach_dist(&[&pair.d1])
    );
    let (_, label_a, path_a, _) = t_plain.run(&[vec![1, 0]]).unwrap();
    let (_, label_b, path_b, _) = t_dummy.run(&[vec![1, 0]]).unwrap();
    assert_eq!(label_a, label_b);
    assert_eq!(path_a.len() + 1, path_b.len());
}

/// The correlated cost never beats the single-sample cost at k = 1 and only
/// improves with more samples, checked on the hard-bulk instance.
#[test]
fn corr_at_k1_matches_dt() {
    let caps = Caps::default();
    let pair = qclab::exact::shaltiel_intro_pair(3).unwrap();
    let eps = rat(197, 400);
    for q in 0..=3 {
        let e1 = qclab::exact::corr_min_error(&pair, 1, q, &caps).unwrap();
        let e2 = qclab::exact::corr_min_error(&pair, 2, q, &caps).unwrap();
        assert!(e2 <= e1, "more samples cannot hurt");
        // k = 1 correlated error equals the distributional error of the
        // balanced mixture
        let d = pair.balanced_mixture();
        let dt_err = min_error(&pair.f, &d, q, &caps).unwrap();
        assert_eq!(e1, dt_err);
    }
    let _ = eps;
}
