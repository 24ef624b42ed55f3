//! Seeded random instances for the verification suites: distribution pairs,
//! single-sample trees, and one-step sub-martingale cases. Everything is
//! driven by the splittable generator so suites reproduce across runs and
//! parallel schedules.

use crate::bootstrap::{derive_safe_constant, verify_one_step};
use crate::boosters::soundness_mass;
use crate::domain::{Alphabet, Cell, Dist, DistPair, FValue, PartialFunction, Word};
use crate::dtree::{is_settled, DecisionTree, Node, TruncationParams};
use crate::error::Result;
use crate::ratio::{Rat, rat_sum};
use crate::rng::Rng;
use num_traits::Zero;

/// Random partial function with nonempty 0- and 1-preimages.
pub fn random_partial_function(rng: &mut Rng, n: usize, alphabet: Alphabet) -> PartialFunction {
    loop {
        let f = PartialFunction::from_fn(n, alphabet, |_| match rng.below(5) {
            0 | 1 => FValue::Zero,
            2 | 3 => FValue::One,
            _ => FValue::Undefined,
        });
        if !f.preimage(false).is_empty() && !f.preimage(true).is_empty() {
            return f;
        }
    }
}

/// Random distribution on a nonempty subset of `support` with small integer
/// weights, normalized exactly.
pub fn random_dist_on(rng: &mut Rng, n: usize, alphabet: Alphabet, support: &[Word]) -> Dist {
    loop {
        let weighted: Vec<(Word, u64)> = support
            .iter()
            .filter_map(|w| {
                if rng.below(2) == 0 {
                    Some((w.clone(), rng.below(8) + 1))
                } else {
                    None
                }
            })
            .collect();
        if weighted.is_empty() {
            continue;
        }
        let total: u64 = weighted.iter().map(|(_, w)| w).sum();
        let entries = weighted.into_iter().map(|(w, m)| {
            (w, Rat::new((m as i64).into(), (total as i64).into()))
        });
        return Dist::new(n, alphabet, entries).expect("weights normalize to 1");
    }
}

/// Random pair over a small random arity and alphabet.
pub fn random_pair(rng: &mut Rng) -> DistPair {
    let n = 1 + rng.below(3) as usize;
    let alphabet = Alphabet::new(2 + rng.below(2) as u8).unwrap();
    let f = random_partial_function(rng, n, alphabet);
    let d0 = random_dist_on(rng, n, alphabet, &f.preimage(false));
    let d1 = random_dist_on(rng, n, alphabet, &f.preimage(true));
    DistPair::new(f, d0, d1).expect("supports match preimages")
}

/// Random single-sample tree over the pair's input space, trimmed so no
/// query node sits on a cell with zero mass under both sides.
pub fn random_tree(rng: &mut Rng, pair: &DistPair) -> DecisionTree {
    fn grow(rng: &mut Rng, pair: &DistPair, cell: &Cell, depth_left: usize) -> Node {
        let free: Vec<usize> = cell.free_positions().collect();
        if free.is_empty() || depth_left == 0 || rng.below(3) == 0 {
            return Node::leaf(None);
        }
        let pos = *rng.choose(&free);
        let children = pair
            .alphabet()
            .symbols()
            .map(|s| {
                let child = cell.fix(pos, s);
                if pair.d0.cell_mass(&child).is_zero() && pair.d1.cell_mass(&child).is_zero() {
                    Node::leaf(None)
                } else {
                    grow(rng, pair, &child, depth_left - 1)
                }
            })
            .collect();
        Node::Query { sample: 0, pos, children }
    }
    let n = pair.n();
    let root = grow(rng, pair, &Cell::full(n), n);
    DecisionTree::new(1, n, pair.alphabet(), root).expect("generated tree is valid")
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub instances: usize,
    pub violations: usize,
    /// Worst margin seen (inequality slack; negative would be a violation).
    pub worst_margin: f64,
}

/// Randomized one-step sub-martingale suite: `count` random (pair, cell,
/// position) cases checked against `c = derive_safe_constant(trunc)`.
pub fn submartingale_suite(count: usize, seed: u64, trunc: &TruncationParams) -> Result<SuiteReport> {
    let c = derive_safe_constant(trunc)?;
    let base = Rng::new(seed);
    let results = crate::par::par_map_idx(count, |i| {
        let mut rng = base.child(i as u64);
        // draw pairs until one offers an unsettled cell with a free position
        loop {
            let pair = random_pair(&mut rng);
            let candidates = unsettled_cells(&pair, trunc);
            if candidates.is_empty() {
                continue;
            }
            let (cell, free) = rng.choose(&candidates).clone();
            let pos = *rng.choose(&free);
            let check = verify_one_step(&pair, &cell, pos, trunc, &c).expect("unsettled cell");
            return (check.holds, check.lhs - check.rhs);
        }
    });
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for (holds, margin) in results {
        if !holds {
            violations += 1;
        }
        worst = worst.min(margin);
    }
    Ok(SuiteReport { instances: count, violations, worst_margin: worst })
}

/// Cells with positive mass on both sides, unsettled, and with a free
/// position; paired with their free positions.
fn unsettled_cells(pair: &DistPair, trunc: &TruncationParams) -> Vec<(Cell, Vec<usize>)> {
    let n = pair.n();
    let alphabet = pair.alphabet();
    let mut out = Vec::new();
    let mut stack = vec![Cell::full(n)];
    let mut seen = std::collections::BTreeSet::new();
    while let Some(cell) = stack.pop() {
        if !seen.insert(cell.key().to_vec()) {
            continue;
        }
        let m0 = pair.d0.cell_mass(&cell);
        let m1 = pair.d1.cell_mass(&cell);
        if m0.is_zero() || m1.is_zero() {
            continue;
        }
        let lr = pair.likelihood_ratio(&cell).expect("positive masses");
        let free: Vec<usize> = cell.free_positions().collect();
        if !is_settled(&lr, trunc) && !free.is_empty() {
            out.push((cell.clone(), free.clone()));
        }
        for &pos in &free {
            for s in alphabet.symbols() {
                stack.push(cell.fix(pos, s));
            }
        }
    }
    out
}

/// Randomized tester-soundness suite: for random (tree, pair, M), the exact
/// d0-mass of high-ratio leaves never exceeds `1/M`.
pub fn soundness_suite(count: usize, seed: u64) -> SuiteReport {
    let base = Rng::new(seed);
    let results = crate::par::par_map_idx(count, |i| {
        let mut rng = base.child(i as u64);
        let pair = random_pair(&mut rng);
        let t = random_tree(&mut rng, &pair);
        let m = Rat::new((1 + rng.below(64) as i64).into(), (1 + rng.below(8) as i64).into());
        let (mass, holds) = soundness_mass(&t, &pair, 1, &m).expect("single-sample tree");
        let slack = crate::ratio::rat_to_f64(&(m.recip() - mass));
        (holds, slack)
    });
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for (holds, slack) in results {
        if !holds {
            violations += 1;
        }
        worst = worst.min(slack);
    }
    SuiteReport { instances: count, violations, worst_margin: worst }
}

/// Exhaustive leaf-mass conservation check over random trees: reach
/// probabilities sum to exactly 1.
pub fn leaf_mass_suite(count: usize, seed: u64) -> SuiteReport {
    let base = Rng::new(seed);
    let results = crate::par::par_map_idx(count, |i| {
        let mut rng = base.child(i as u64);
        let pair = random_pair(&mut rng);
        let t = random_tree(&mut rng, &pair);
        let reach = t.leaf_reach_dist(&[&pair.d1]);
        rat_sum(reach.iter()) == Rat::from_integer(1.into())
    });
    let violations = results.iter().filter(|ok| !**ok).count();
    SuiteReport {
        instances: count,
        violations,
        worst_margin: if violations == 0 { 0.0 } else { -1.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::rat_int;

    #[test]
    fn random_pair_respects_preimages() {
        let mut rng = Rng::new(7);
        for _ in 0..20 {
            let pair = random_pair(&mut rng);
            for (w, _) in pair.d0.support() {
                assert_eq!(pair.f.value(w), FValue::Zero);
            }
            for (w, _) in pair.d1.support() {
                assert_eq!(pair.f.value(w), FValue::One);
            }
        }
    }

    #[test]
    fn random_trees_conserve_mass() {
        let report = leaf_mass_suite(50, 3);
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn small_submartingale_suite_passes() {
        let report = submartingale_suite(200, 11, &TruncationParams::toy()).unwrap();
        assert_eq!(report.violations, 0, "worst margin {}", report.worst_margin);
    }

    #[test]
    fn small_soundness_suite_passes() {
        let report = soundness_suite(200, 13);
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn suites_are_seed_deterministic() {
        let a = soundness_suite(50, 5);
        let b = soundness_suite(50, 5);
        assert_eq!(a.worst_margin, b.worst_margin);
        let c = submartingale_suite(50, 5, &TruncationParams::toy()).unwrap();
        let d = submartingale_suite(50, 5, &TruncationParams::toy()).unwrap();
        assert_eq!(c.worst_margin, d.worst_margin);
        let _ = rat_int(1);
    }
}
