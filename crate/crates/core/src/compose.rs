//! Composition pipeline: composed functions over inner blocks, product
//! distributions indexed by outer strings, the rarely-queried block, tree
//! truncation, and the induced paired-samples tester, with every inequality
//! in the chain verified exactly at toy scale.

use crate::boosters::{amplify, Amplified};
use crate::domain::{Dist, DistPair, FValue, PartialFunction, Word};
use crate::dtree::{DecisionTree, LeafLabel, Node};
use crate::error::{Error, Result};
use crate::exact::{dt_eps, fbs, min_error_tree, Caps, FbsCertificate};
use crate::ratio::{fmt_rat, rat, rat_int, rat_to_f64, Rat};
use crate::reductions::MixtureTester;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeSet;

/// Outer function applied to inner-function values on disjoint blocks of
/// `m` symbols each; undefined whenever any inner value or the outer value is.
#[derive(Clone, Debug)]
pub struct ComposedFunction {
    pub outer: PartialFunction,
    pub inner: PartialFunction,
    /// Dense truth table over `Sigma^{m n}`.
    pub table: PartialFunction,
}

pub fn compose(outer: &PartialFunction, inner: &PartialFunction) -> Result<ComposedFunction> {
    if outer.alphabet().size() != 2 {
        return Err(Error::Invalid("outer function must be binary".into()));
    }
    let n = outer.arity();
    let m = inner.arity();
    let table = PartialFunction::from_fn(n * m, inner.alphabet(), |w| {
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            match inner.value(&w[i * m..(i + 1) * m]) {
                FValue::Undefined => return FValue::Undefined,
                FValue::Zero => values.push(0u8),
                FValue::One => values.push(1u8),
            }
        }
        outer.value(&values)
    });
    Ok(ComposedFunction { outer: outer.clone(), inner: inner.clone(), table })
}

/// Product distribution over composed inputs where block `i` draws from the
/// side selected by `z_i`. Every support point has inner values exactly `z`.
pub fn product_dist_for_z(pair: &DistPair, z: &Word) -> Result<Dist> {
    let parts: Vec<&Dist> = z
        .iter()
        .map(|&b| match b {
            0 => Ok(&pair.d0),
            1 => Ok(&pair.d1),
            _ => Err(Error::Invalid("outer string must be binary".into())),
        })
        .collect::<Result<_>>()?;
    let d = Dist::product(&parts);
    // support check: inner values equal z on every support point
    let m = pair.n();
    for (w, _) in d.support() {
        for (i, &zi) in z.iter().enumerate() {
            let v = pair.f.value(&w[i * m..(i + 1) * m]);
            if v != FValue::bit(zi == 1) {
                return Err(Error::Invalid(format!(
                    "support point has inner value {v:?} at block {i}, expected {zi}"
                )));
            }
        }
    }
    Ok(d)
}

/// Positions of the composed input covered by an outer block.
fn block_positions(block: &[usize], m: usize) -> BTreeSet<usize> {
    block.iter().flat_map(|&i| i * m..(i + 1) * m).collect()
}

/// Exact expected number of queries `t` makes inside each block on `x ~ d`.
pub fn expected_block_queries(
    t: &DecisionTree,
    d: &Dist,
    blocks: &[Vec<usize>],
    m: usize,
) -> Vec<Rat> {
    let sets: Vec<BTreeSet<usize>> = blocks.iter().map(|b| block_positions(b, m)).collect();
    let mut totals = vec![Rat::zero(); blocks.len()];
    fn go(
        node: &Node,
        d_support: &[(Word, Rat)],
        sets: &[BTreeSet<usize>],
        counts: &mut Vec<usize>,
        totals: &mut Vec<Rat>,
    ) {
        match node {
            Node::Leaf { .. } => {
                let mass = crate::ratio::rat_sum(d_support.iter().map(|(_, p)| p));
                for (j, c) in counts.iter().enumerate() {
                    if *c > 0 {
                        totals[j] += &mass * Rat::from_integer((*c as i64).into());
                    }
                }
            }
            Node::Dummy { child } => go(child, d_support, sets, counts, totals),
            Node::Query { pos, children, .. } => {
                for (sym, child) in children.iter().enumerate() {
                    let filtered: Vec<(Word, Rat)> = d_support
                        .iter()
                        .filter(|(w, _)| w[*pos] == sym as u8)
                        .cloned()
                        .collect();
                    if filtered.is_empty() {
                        continue;
                    }
                    for (j, set) in sets.iter().enumerate() {
                        if set.contains(pos) {
                            counts[j] += 1;
                        }
                    }
                    go(child, &filtered, sets, counts, totals);
                    for (j, set) in sets.iter().enumerate() {
                        if set.contains(pos) {
                            counts[j] -= 1;
                        }
                    }
                }
            }
        }
    }
    let support: Vec<(Word, Rat)> = d.support().map(|(w, p)| (w.clone(), p.clone())).collect();
    let mut counts = vec![0usize; blocks.len()];
    go(t.root(), &support, &sets, &mut counts, &mut totals);
    totals
}

#[derive(Clone, Debug)]
pub struct BlockReport {
    pub witness: Word,
    pub blocks: Vec<Vec<usize>>,
    pub weights: Vec<Rat>,
    pub expected_queries: Vec<Rat>,
    pub weighted_sum: Rat,
    /// Query budget `q` (the tree depth).
    pub budget: usize,
    pub selected: usize,
    /// `q / fbs`: the threshold the selected block meets.
    pub threshold: Rat,
}

/// Verify the weighted-query inequality and select the least-index block with
/// expected queries at most `q / fbs`.
pub fn find_rare_block(t: &DecisionTree, cert: &FbsCertificate, pair: &DistPair) -> Result<BlockReport> {
    if cert.value.is_zero() {
        return Err(Error::Invalid("certificate value is zero (constant outer function)".into()));
    }
    let m = pair.n();
    let d_y = product_dist_for_z(pair, &cert.witness)?;
    let expected = expected_block_queries(t, &d_y, &cert.blocks, m);
    let weighted: Vec<Rat> = cert.weights.iter().zip(&expected).map(|(w, q)| w * q).collect();
    let weighted_sum: Rat = crate::ratio::rat_sum(weighted.iter());
    let budget = t.depth();
    if weighted_sum > Rat::from_integer((budget as i64).into()) {
        return Err(Error::GuaranteeViolated(format!(
            "weighted query sum {} exceeds budget {budget}",
            fmt_rat(&weighted_sum)
        )));
    }
    let threshold = Rat::from_integer((budget as i64).into()) / &cert.value;
    let selected = expected
        .iter()
        .position(|q| q <= &threshold)
        .ok_or_else(|| Error::GuaranteeViolated("no block within the expected-query threshold".into()))?;
    Ok(BlockReport {
        witness: cert.witness.clone(),
        blocks: cert.blocks.clone(),
        weights: cert.weights.clone(),
        expected_queries: expected,
        weighted_sum,
        budget,
        selected,
        threshold,
    })
}

/// Truncate: identical behavior until the `(limit+1)`-th query into the
/// block's positions, where an `overrun_label` leaf replaces the subtree.
pub fn truncate_tree(
    t: &DecisionTree,
    block: &[usize],
    m: usize,
    limit: usize,
    overrun_label: LeafLabel,
) -> DecisionTree {
    let set = block_positions(block, m);
    fn go(node: &Node, set: &BTreeSet<usize>, used: usize, limit: usize, label: &LeafLabel) -> Node {
        match node {
            Node::Leaf { label: l } => Node::Leaf { label: l.clone() },
            Node::Dummy { child } => Node::Dummy { child: Box::new(go(child, set, used, limit, label)) },
            Node::Query { sample, pos, children } => {
                let in_block = set.contains(pos);
                if in_block && used == limit {
                    return Node::Leaf { label: Some(label.clone()) };
                }
                let used = used + usize::from(in_block);
                Node::Query {
                    sample: *sample,
                    pos: *pos,
                    children: children.iter().map(|c| go(c, set, used, limit, label)).collect(),
                }
            }
        }
    }
    let root = go(t.root(), &set, 0, limit, &overrun_label);
    DecisionTree::new(t.k(), t.n(), t.alphabet(), root).expect("truncation preserves validity")
}

/// Probability that `t` outputs the bit `target` on `x ~ d`.
fn output_prob(t: &DecisionTree, d: &Dist, target: bool) -> Rat {
    let want = if target { LeafLabel::Accept } else { LeafLabel::Reject };
    let mut acc = Rat::zero();
    t.walk_leaves(&[vec![d]], &mut |ctx| {
        if ctx.label.as_ref() == Some(&want) {
            acc += ctx.mass(0);
        }
    });
    acc
}

/// Probability that `t` makes more than `limit` queries into the block on
/// `x ~ d`.
fn overrun_prob(t: &DecisionTree, d: &Dist, block: &[usize], m: usize, limit: usize) -> Rat {
    let set = block_positions(block, m);
    let mut acc = Rat::zero();
    fn go(
        node: &Node,
        support: &[(Word, Rat)],
        set: &BTreeSet<usize>,
        used: usize,
        limit: usize,
        acc: &mut Rat,
    ) {
        match node {
            Node::Leaf { .. } => {}
            Node::Dummy { child } => go(child, support, set, used, limit, acc),
            Node::Query { pos, children, .. } => {
                let in_block = set.contains(pos);
                let used2 = used + usize::from(in_block);
                if in_block && used2 > limit {
                    *acc += crate::ratio::rat_sum(support.iter().map(|(_, p)| p));
                    return;
                }
                for (sym, child) in children.iter().enumerate() {
                    let filtered: Vec<(Word, Rat)> =
                        support.iter().filter(|(w, _)| w[*pos] == sym as u8).cloned().collect();
                    if filtered.is_empty() {
                        continue;
                    }
                    go(child, &filtered, set, used2, limit, acc);
                }
            }
        }
    }
    let support: Vec<(Word, Rat)> = d.support().map(|(w, p)| (w.clone(), p.clone())).collect();
    go(t.root(), &support, &set, 0, limit, &mut acc);
    acc
}

#[derive(Clone, Debug)]
pub struct TruncationBounds {
    /// `Pr[T^tr = f(y^B)]` on the flipped side, and the original tree's.
    pub flip_correct_trunc: Rat,
    pub flip_correct_orig: Rat,
    /// `Pr[T^tr = f(y)]` on the base side, and the original tree's.
    pub base_correct_trunc: Rat,
    pub base_correct_orig: Rat,
    /// Exact `Pr[> limit block queries]` under the base side.
    pub overrun: Rat,
    pub limit: usize,
    pub holds: bool,
}

/// Check the two-sided truncation guarantee with the stated constants:
/// flipped-side correctness `>= 4/5`, base-side correctness
/// `>= 4/5 - 1/5 = 3/5`, and the Markov step `overrun <= 1/5`, all exact.
/// Trees must be oriented so that Accept means the base side's value.
pub fn verify_truncation_bounds(
    t: &DecisionTree,
    t_tr: &DecisionTree,
    pair: &DistPair,
    witness: &Word,
    block: &[usize],
    limit: usize,
) -> Result<TruncationBounds> {
    let m = pair.n();
    let mut flipped = witness.clone();
    for &i in block {
        flipped[i] ^= 1;
    }
    let d_y = product_dist_for_z(pair, witness)?;
    let d_flip = product_dist_for_z(pair, &flipped)?;
    let flip_correct_orig = output_prob(t, &d_flip, false);
    let flip_correct_trunc = output_prob(t_tr, &d_flip, false);
    let base_correct_orig = output_prob(t, &d_y, true);
    let base_correct_trunc = output_prob(t_tr, &d_y, true);
    let overrun = overrun_prob(t, &d_y, block, m, limit);

    let holds = flip_correct_trunc >= flip_correct_orig
        && flip_correct_trunc >= rat(4, 5)
        && overrun <= rat(1, 5)
        && base_correct_trunc >= &base_correct_orig - &overrun
        && base_correct_trunc >= rat(3, 5);
    Ok(TruncationBounds {
        flip_correct_trunc,
        flip_correct_orig,
        base_correct_trunc,
        base_correct_orig,
        overrun,
        limit,
        holds,
    })
}

#[derive(Clone, Debug)]
pub struct ComposedBicorr {
    pub tester: MixtureTester,
    /// Exact error on the paired-samples instance for the inner pair.
    pub error: Rat,
    pub amplified: Amplified,
    /// Every component path stays within the truncation limit.
    pub cost_bound: usize,
}

/// Turn the truncated composed tree into a paired-samples tester for the
/// inner pair: block coordinates read the paired input, the rest is
/// self-generated from the base side's distributions, made explicit as a
/// mixture over frozen tuples. The input tree must be oriented so Accept
/// means the base side's composed value.
pub fn composed_to_bicorr(
    t_tr: &DecisionTree,
    pair: &DistPair,
    witness: &Word,
    block: &[usize],
    limit: usize,
    eps_target: &Rat,
) -> Result<ComposedBicorr> {
    let m = pair.n();
    let n = witness.len();
    let block_set: BTreeSet<usize> = block.iter().copied().collect();
    let free_outer: Vec<usize> = (0..n).filter(|i| !block_set.contains(i)).collect();

    // frozen tuples over the non-block coordinates, weighted by their product
    // mass under the base side
    let mut tuples: Vec<(Vec<(usize, Word)>, Rat)> = vec![(Vec::new(), Rat::one())];
    for &i in &free_outer {
        let d = if witness[i] == 0 { &pair.d0 } else { &pair.d1 };
        let mut next = Vec::new();
        for (tuple, weight) in &tuples {
            for (w, p) in d.support() {
                let mut t2 = tuple.clone();
                t2.push((i, w.clone()));
                next.push((t2, weight * p));
            }
        }
        tuples = next;
    }

    fn embed(
        node: &Node,
        m: usize,
        witness: &Word,
        block_set: &BTreeSet<usize>,
        frozen: &std::collections::BTreeMap<usize, Word>,
    ) -> Node {
        match node {
            Node::Leaf { label } => {
                // accepting the paired tester claims the flipped hypothesis,
                // i.e. the composed tree NOT seeing the base value
                let claims_flip = matches!(label, Some(LeafLabel::Reject));
                Node::Leaf {
                    label: Some(if claims_flip { LeafLabel::Accept } else { LeafLabel::Reject }),
                }
            }
            Node::Dummy { child } => {
                Node::Dummy { child: Box::new(embed(child, m, witness, block_set, frozen)) }
            }
            Node::Query { pos, children, .. } => {
                let outer = pos / m;
                let inner = pos % m;
                if block_set.contains(&outer) {
                    Node::Query {
                        sample: 2 * outer + witness[outer] as usize,
                        pos: inner,
                        children: children
                            .iter()
                            .map(|c| embed(c, m, witness, block_set, frozen))
                            .collect(),
                    }
                } else {
                    let sym = frozen[&outer][inner] as usize;
                    embed(&children[sym], m, witness, block_set, frozen)
                }
            }
        }
    }

    let mut components = Vec::new();
    for (tuple, weight) in tuples {
        let frozen: std::collections::BTreeMap<usize, Word> = tuple.into_iter().collect();
        let root = embed(t_tr.root(), m, witness, &block_set, &frozen);
        let tree = DecisionTree::new(2 * n, m, pair.alphabet(), root)?;
        if tree.depth() > limit {
            return Err(Error::GuaranteeViolated("component exceeds the truncation limit".into()));
        }
        components.push((weight, tree));
    }
    let tester = MixtureTester { components, k: 2 * n };

    let dists01: Vec<&Dist> =
        (0..2 * n).map(|s| if s % 2 == 0 { &pair.d0 } else { &pair.d1 }).collect();
    let dists10: Vec<&Dist> =
        (0..2 * n).map(|s| if s % 2 == 0 { &pair.d1 } else { &pair.d0 }).collect();
    let error = tester.exact_error(&dists01, &dists10);
    if error > rat(2, 5) {
        return Err(Error::GuaranteeViolated(format!(
            "paired tester error {} exceeds 2/5",
            fmt_rat(&error)
        )));
    }
    let p0 = tester.accept_prob(&dists01);
    let p1 = tester.accept_prob(&dists10);
    let gap = (&p1 - &p0).abs();
    let amplified = amplify(&p0, &p1, limit.max(1), &(gap / rat_int(2)), eps_target)?;
    Ok(ComposedBicorr { tester, error, amplified, cost_bound: limit })
}

#[derive(Clone, Debug)]
pub struct GapReport {
    pub fbs_value: Rat,
    /// Depth of the verified low-error composed tree.
    pub composed_cost: usize,
    pub block: BlockReport,
    pub truncation: TruncationBounds,
    pub bicorr_error: Rat,
    pub bicorr_base_cost: usize,
    pub bicorr_amplified_cost: usize,
    /// `bicorr_base_cost * fbs / composed_cost`.
    pub ratio: f64,
    pub vacuous: bool,
}

/// End-to-end composition chain on a toy instance: build a low-error tree for
/// the composed function, locate the rarely queried block, truncate, verify
/// the bounds, emit the paired tester and amplify it.
pub fn composition_gap_report(
    outer: &PartialFunction,
    inner: &PartialFunction,
    pair: &DistPair,
    caps: &Caps,
) -> Result<GapReport> {
    let composed = compose(outer, inner)?;
    let cert = fbs(outer, caps)?;
    if cert.value.is_zero() {
        return Ok(GapReport {
            fbs_value: Rat::zero(),
            composed_cost: 0,
            block: BlockReport {
                witness: cert.witness,
                blocks: vec![],
                weights: vec![],
                expected_queries: vec![],
                weighted_sum: Rat::zero(),
                budget: 0,
                selected: 0,
                threshold: Rat::zero(),
            },
            truncation: TruncationBounds {
                flip_correct_trunc: Rat::zero(),
                flip_correct_orig: Rat::zero(),
                base_correct_trunc: Rat::zero(),
                base_correct_orig: Rat::zero(),
                overrun: Rat::zero(),
                limit: 0,
                holds: true,
            },
            bicorr_error: Rat::zero(),
            bicorr_base_cost: 0,
            bicorr_amplified_cost: 0,
            ratio: 0.0,
            vacuous: true,
        });
    }
    let y = &cert.witness;
    let base_is_one = outer.value(y) == FValue::One;

    // the outer tester: error <= 1/(10 (N+1)) against the uniform mixture of
    // the base and flipped product distributions gives error <= 1/10 on each
    let mut mixture_parts: Vec<Dist> = vec![product_dist_for_z(pair, y)?];
    for b in &cert.blocks {
        let mut flipped = y.clone();
        for &i in b {
            flipped[i] ^= 1;
        }
        mixture_parts.push(product_dist_for_z(pair, &flipped)?);
    }
    let weight = Rat::new(1.into(), (mixture_parts.len() as i64).into());
    let mixture =
        Dist::mixture(&mixture_parts.iter().map(|d| (weight.clone(), d)).collect::<Vec<_>>())?;
    let eps_mix = Rat::new(1.into(), (10 * mixture_parts.len() as i64).into());
    let q = dt_eps(&composed.table, &mixture, &eps_mix, caps)?;
    let (_, t) = min_error_tree(&composed.table, &mixture, q, caps)?;
    // orient so Accept = f(y): swap labels when the witness is a 1-input
    let t = if base_is_one {
        t
    } else {
        t.map_labels(&|_, l| match l {
            Some(LeafLabel::Accept) => Some(LeafLabel::Reject),
            Some(LeafLabel::Reject) => Some(LeafLabel::Accept),
            other => other.clone(),
        })
    };
    // exact per-side error check: at most 1/10 on the base and flipped sides
    let tenth = rat(1, 10);
    for (idx, d) in mixture_parts.iter().enumerate() {
        let correct = output_prob(&t, d, idx == 0);
        if Rat::one() - &correct > tenth {
            return Err(Error::GuaranteeViolated(format!(
                "outer tree error {} on side {idx} exceeds 1/10",
                fmt_rat(&(Rat::one() - &correct))
            )));
        }
    }

    let block_report = find_rare_block(&t, &cert, pair)?;
    let block = &cert.blocks[block_report.selected];
    let q_sel = &block_report.expected_queries[block_report.selected];
    // truncation limit floor(5 q_sel); the Markov step is checked against the
    // exact rational expectation inside verify_truncation_bounds
    let limit = (rat_int(5) * q_sel)
        .floor()
        .to_integer()
        .to_usize()
        .ok_or_else(|| Error::Invalid("limit overflow".into()))?;
    // on overrun the tree outputs the flipped side's value; with the
    // Accept-means-base orientation that label is Reject
    let t_tr = truncate_tree(&t, block, pair.n(), limit, LeafLabel::Reject);
    let truncation = verify_truncation_bounds(&t, &t_tr, pair, y, block, limit)?;
    if !truncation.holds {
        return Err(Error::GuaranteeViolated("truncation bounds fail".into()));
    }
    let bicorr = composed_to_bicorr(&t_tr, pair, y, block, limit, &rat(1, 3))?;
    let ratio = rat_to_f64(
        &(&Rat::from_integer((bicorr.cost_bound.max(1) as i64).into()) * &cert.value),
    ) / q.max(1) as f64;
    Ok(GapReport {
        fbs_value: cert.value.clone(),
        composed_cost: q,
        block: block_report,
        truncation,
        bicorr_error: bicorr.error,
        bicorr_base_cost: bicorr.cost_bound,
        bicorr_amplified_cost: bicorr.amplified.query_cost,
        ratio,
        vacuous: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Alphabet;

    fn parity_pair() -> DistPair {
        let f = PartialFunction::xor(2);
        let d0 = Dist::uniform_on(2, Alphabet::binary(), &[vec![0, 0], vec![1, 1]]).unwrap();
        let d1 = Dist::uniform_on(2, Alphabet::binary(), &[vec![0, 1], vec![1, 0]]).unwrap();
        DistPair::new(f, d0, d1).unwrap()
    }

    fn dictator_pair_m1() -> DistPair {
        let f = PartialFunction::dictator(1, 0);
        let d0 = Dist::point(vec![0], Alphabet::binary());
        let d1 = Dist::point(vec![1], Alphabet::binary());
        DistPair::new(f, d0, d1).unwrap()
    }

    #[test]
    fn compose_truth_table() {
        let c = compose(&PartialFunction::and(2), &PartialFunction::xor(2)).unwrap();
        assert_eq!(c.table.arity(), 4);
        assert_eq!(c.table.value(&[0, 1, 1, 0]), FValue::One);
        assert_eq!(c.table.value(&[0, 1, 1, 1]), FValue::Zero);
        assert_eq!(c.table.value(&[0, 0, 1, 0]), FValue::Zero);
    }

    #[test]
    fn composed_undefined_propagates() {
        let g = PartialFunction::from_fn(1, Alphabet::binary(), |w| {
            if w[0] == 0 {
                FValue::Zero
            } else {
                FValue::Undefined
            }
        });
        let c = compose(&PartialFunction::and(2), &g).unwrap();
        assert_eq!(c.table.value(&[0, 0]), FValue::Zero);
        assert_eq!(c.table.value(&[0, 1]), FValue::Undefined);
    }

    #[test]
    fn product_dist_examples() {
        let pair = parity_pair();
        // n=1, z=0 is d0 itself
        let d = product_dist_for_z(&pair, &vec![0]).unwrap();
        assert_eq!(d, pair.d0);
        // n=2, z=01: product masses multiply
        let d = product_dist_for_z(&pair, &vec![0, 1]).unwrap();
        assert_eq!(d.mass(&[0, 0, 0, 1]), rat(1, 4));
        assert_eq!(d.mass(&[0, 0, 0, 0]), rat_int(0));
    }

    #[test]
    fn expected_block_queries_examples() {
        let pair = dictator_pair_m1();
        let d = product_dist_for_z(&pair, &vec![1, 1]).unwrap();
        // depth-1 tree querying inside block {0}: expectation exactly 1
        let t = DecisionTree::new(
            1,
            2,
            Alphabet::binary(),
            Node::Query {
                sample: 0,
                pos: 0,
                children: vec![Node::leaf(Some(LeafLabel::Reject)), Node::leaf(Some(LeafLabel::Accept))],
            },
        )
        .unwrap();
        let q = expected_block_queries(&t, &d, &[vec![0], vec![1]], 1);
        assert_eq!(q, vec![rat_int(1), rat_int(0)]);
    }

    #[test]
    fn truncate_examples() {
        let t = DecisionTree::new(
            1,
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
                            Node::leaf(Some(LeafLabel::Accept)),
                        ],
                    },
                    Node::leaf(Some(LeafLabel::Accept)),
                ],
            },
        )
        .unwrap();
        // limit >= depth: unchanged
        let same = truncate_tree(&t, &[0, 1], 1, 2, LeafLabel::Accept);
        assert_eq!(same, t);
        // limit 0: the first block query becomes the overrun leaf
        let cut = truncate_tree(&t, &[0], 1, 0, LeafLabel::Accept);
        assert_eq!(cut.depth(), 0);
        // block {1}: only the inner query is cut
        let cut = truncate_tree(&t, &[1], 1, 0, LeafLabel::Accept);
        assert_eq!(cut.depth(), 1);
    }

    #[test]
    fn truncation_only_helps_the_flip_side() {
        let pair = dictator_pair_m1();
        let outer = PartialFunction::and(2);
        let report =
            composition_gap_report(&outer, &PartialFunction::dictator(1, 0), &pair, &Caps::default())
                .unwrap();
        assert!(!report.vacuous);
        assert!(report.truncation.holds);
        assert!(report.truncation.flip_correct_trunc >= report.truncation.flip_correct_orig);
    }

    #[test]
    fn constant_outer_is_vacuous() {
        let pair = dictator_pair_m1();
        let outer = PartialFunction::constant(2, Alphabet::binary(), false);
        let report =
            composition_gap_report(&outer, &PartialFunction::dictator(1, 0), &pair, &Caps::default())
                .unwrap();
        assert!(report.vacuous);
        assert_eq!(report.fbs_value, rat_int(0));
    }

    #[test]
    fn and2_xor2_full_chain() {
        let pair = parity_pair();
        let outer = PartialFunction::and(2);
        let inner = PartialFunction::xor(2);
        let report = composition_gap_report(&outer, &inner, &pair, &Caps::default()).unwrap();
        assert_eq!(report.fbs_value, rat_int(2));
        assert!(report.truncation.holds);
        // chain inequalities, exactly
        assert!(report.block.weighted_sum <= rat_int(report.block.budget as i64));
        assert!(report.block.expected_queries[report.block.selected] <= report.block.threshold);
        assert!(report.truncation.flip_correct_trunc >= rat(4, 5));
        assert!(report.truncation.base_correct_trunc >= rat(3, 5));
        assert!(report.bicorr_error <= rat(2, 5));
    }

    #[test]
    fn dictator_outer_keeps_inner_complexity() {
        let pair = parity_pair();
        let outer = PartialFunction::dictator(2, 0);
        let inner = PartialFunction::xor(2);
        let report = composition_gap_report(&outer, &inner, &pair, &Caps::default()).unwrap();
        assert_eq!(report.fbs_value, rat_int(1));
        assert!(report.truncation.holds);
        assert!(report.bicorr_error <= rat(2, 5));
    }
}
