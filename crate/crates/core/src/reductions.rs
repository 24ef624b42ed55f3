//! Reductions between multi-sample problems: paired-samples testers, the
//! hybrid argument collapsing them to correlated samples, the selection
//! problem, and the hard-bulk separation instance with its bias certificate.

use crate::boosters::{amplify, Amplified};
use crate::domain::{Alphabet, Cell, Dist, DistPair, FValue, PartialFunction, Word};
use crate::dtree::{DecisionTree, LeafLabel, Node};
use crate::error::{Error, Result};
use crate::ratio::{fmt_rat, rat, rat_int, Rat};
use num_traits::{One, Signed, Zero};

/// Half the L1 distance between two leaf distributions on a common index set.
pub fn statistical_distance(p: &[Rat], q: &[Rat]) -> Rat {
    assert_eq!(p.len(), q.len());
    let mut acc = Rat::zero();
    for (a, b) in p.iter().zip(q) {
        acc += (a - b).abs();
    }
    acc / rat_int(2)
}

/// A randomized tester made explicit: a weighted set of deterministic trees
/// over `k` samples with accept/reject leaves. Weights sum to 1.
#[derive(Clone, Debug)]
pub struct MixtureTester {
    pub components: Vec<(Rat, DecisionTree)>,
    pub k: usize,
}

impl MixtureTester {
    pub fn accept_prob(&self, dists: &[&Dist]) -> Rat {
        let mut acc = Rat::zero();
        for (w, t) in &self.components {
            let mut p = Rat::zero();
            t.walk_leaves(&[dists.to_vec()], &mut |ctx| {
                if matches!(ctx.label, Some(LeafLabel::Accept)) {
                    p += ctx.mass(0);
                }
            });
            acc += w * p;
        }
        acc
    }

    /// Error on the balanced mixture of two hypotheses, where accepting
    /// claims the second.
    pub fn exact_error(&self, null: &[&Dist], alt: &[&Dist]) -> Rat {
        let half = rat(1, 2);
        &half * self.accept_prob(null) + &half * (Rat::one() - self.accept_prob(alt))
    }

    /// Component with the smallest exact error; ties keep the earliest.
    pub fn best_component(&self, null: &[&Dist], alt: &[&Dist]) -> (usize, Rat) {
        let half = rat(1, 2);
        let mut best: Option<(usize, Rat)> = None;
        for (idx, (_, t)) in self.components.iter().enumerate() {
            let single = MixtureTester { components: vec![(Rat::one(), t.clone())], k: self.k };
            let err = &half * single.accept_prob(null) + &half * (Rat::one() - single.accept_prob(alt));
            best = match best {
                None => Some((idx, err)),
                Some((_, be)) if err < be => Some((idx, err)),
                Some(b) => Some(b),
            };
        }
        best.expect("nonempty mixture")
    }

    pub fn max_depth(&self) -> usize {
        self.components.iter().map(|(_, t)| t.depth()).max().unwrap_or(0)
    }
}

/// Paired-samples instance: distinguish `(d0 x d1)^k` from `(d1 x d0)^k`.
/// Pair `i` occupies flat sample slots `2i` (first element) and `2i + 1`.
#[derive(Clone, Debug)]
pub struct BicorrInstance {
    pub pair: DistPair,
    pub k: usize,
}

impl BicorrInstance {
    /// Per-slot distributions under the `(01)` hypothesis.
    pub fn dists01(&self) -> Vec<&Dist> {
        (0..2 * self.k).map(|s| if s % 2 == 0 { &self.pair.d0 } else { &self.pair.d1 }).collect()
    }

    /// Per-slot distributions under the `(10)` hypothesis.
    pub fn dists10(&self) -> Vec<&Dist> {
        (0..2 * self.k).map(|s| if s % 2 == 0 { &self.pair.d1 } else { &self.pair.d0 }).collect()
    }

    /// All pairs drawn `(d0 x d0)`: the hybrid midpoint.
    pub fn dists00(&self) -> Vec<&Dist> {
        (0..2 * self.k).map(|_| &self.pair.d0).collect()
    }

    /// Error of a tester tree where accepting claims the `(10)` hypothesis.
    pub fn tester_error(&self, t: &DecisionTree) -> Rat {
        let single = MixtureTester { components: vec![(Rat::one(), t.clone())], k: 2 * self.k };
        single.exact_error(&self.dists01(), &self.dists10())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HybridBranch {
    /// `d(T(01), T(00))` at least half the total: the emitted tester reads
    /// the correlated input at odd slots and self-generates even slots.
    SecondSlots,
    /// `d(T(00), T(10))` at least half: correlated input at even slots.
    FirstSlots,
}

#[derive(Clone, Debug)]
pub struct HybridResult {
    pub branch: HybridBranch,
    pub dist_01_00: Rat,
    pub dist_00_10: Rat,
    /// The emitted correlated-samples tester (mixture over frozen
    /// self-generated samples).
    pub corr_tester: MixtureTester,
    /// Its exact error on `1/2 d0^k + 1/2 d1^k`.
    pub corr_error: Rat,
    /// Best single frozen component and its exact error.
    pub derandomized: (DecisionTree, Rat),
    pub amplified: Amplified,
}

/// Leaf reach distributions of `t` under a list of per-slot distributions.
fn leaf_dist(t: &DecisionTree, dists: &[&Dist]) -> Vec<Rat> {
    t.leaf_reach_dist(dists)
}

/// Embed a 2k-sample tree as a k-sample tree: queries to `active` slots map
/// to the pair index; queries to other slots are answered from `frozen`
/// (indexed by pair). Leaves are relabelled accept iff their leaf id is in
/// `accept_set`.
fn embed_with_frozen(
    t: &DecisionTree,
    k: usize,
    active_parity: usize,
    frozen: &[Word],
    accept_set: &[bool],
) -> DecisionTree {
    fn go(node: &Node, active_parity: usize, frozen: &[Word], accept: &[bool], leaf_id: &mut usize) -> Node {
        match node {
            Node::Leaf { .. } => {
                let id = *leaf_id;
                *leaf_id += 1;
                Node::Leaf {
                    label: Some(if accept[id] { LeafLabel::Accept } else { LeafLabel::Reject }),
                }
            }
            Node::Dummy { child } => {
                Node::Dummy { child: Box::new(go(child, active_parity, frozen, accept, leaf_id)) }
            }
            Node::Query { sample, pos, children } => {
                let pair_idx = sample / 2;
                if sample % 2 == active_parity {
                    Node::Query {
                        sample: pair_idx,
                        pos: *pos,
                        children: children
                            .iter()
                            .map(|c| go(c, active_parity, frozen, accept, leaf_id))
                            .collect(),
                    }
                } else {
                    // answered from the frozen word; skipped children still
                    // consume their leaf-id ranges
                    let sym = frozen[pair_idx][*pos] as usize;
                    for (s, c) in children.iter().enumerate() {
                        if s < sym {
                            *leaf_id += c.leaf_count();
                        }
                    }
                    let picked = go(&children[sym], active_parity, frozen, accept, leaf_id);
                    for c in children.iter().skip(sym + 1) {
                        *leaf_id += c.leaf_count();
                    }
                    picked
                }
            }
        }
    }
    let mut leaf_id = 0;
    let root = go(t.root(), active_parity, frozen, accept_set, &mut leaf_id);
    DecisionTree::new(k, t.n(), t.alphabet(), root).expect("embedding preserves validity")
}

/// All tuples of `count` support words in lexicographic support order, with
/// their product weights.
fn support_tuples(d: &Dist, count: usize) -> Vec<(Vec<Word>, Rat)> {
    let support: Vec<(Word, Rat)> = d.support().map(|(w, p)| (w.clone(), p.clone())).collect();
    let mut acc: Vec<(Vec<Word>, Rat)> = vec![(Vec::new(), Rat::one())];
    for _ in 0..count {
        let mut next = Vec::with_capacity(acc.len() * support.len());
        for (tuple, weight) in &acc {
            for (w, p) in &support {
                let mut t2 = tuple.clone();
                t2.push(w.clone());
                next.push((t2, weight * p));
            }
        }
        acc = next;
    }
    acc
}

/// The hybrid argument: a paired-samples tester with exactly verified error
/// `<= eps_bound` yields a correlated-samples tester with exact error at most
/// `1/4 + eps/2`, by self-generating the slots on the less informative side.
pub fn bicorr_to_corr(
    t: &DecisionTree,
    pair: &DistPair,
    k: usize,
    eps_bound: &Rat,
    eps_target: &Rat,
) -> Result<HybridResult> {
    let inst = BicorrInstance { pair: pair.clone(), k };
    if t.k() != 2 * k {
        return Err(Error::Invalid("tester must read 2k samples".into()));
    }
    let eps = inst.tester_error(t);
    if &eps > eps_bound {
        return Err(Error::GuaranteeViolated(format!(
            "paired tester error {} exceeds bound {}",
            fmt_rat(&eps),
            fmt_rat(eps_bound)
        )));
    }
    let p01 = leaf_dist(t, &inst.dists01());
    let p00 = leaf_dist(t, &inst.dists00());
    let p10 = leaf_dist(t, &inst.dists10());
    let d1 = statistical_distance(&p01, &p00);
    let d2 = statistical_distance(&p00, &p10);
    let d_total = statistical_distance(&p01, &p10);
    // triangle identity and the testing-distance relation, both exact
    if d_total > &d1 + &d2 {
        return Err(Error::GuaranteeViolated("triangle inequality fails".into()));
    }
    if d_total < Rat::one() - rat_int(2) * &eps {
        return Err(Error::GuaranteeViolated("distance below 1 - 2 eps".into()));
    }

    let branch = if d1 >= d2 { HybridBranch::SecondSlots } else { HybridBranch::FirstSlots };
    // accept region: leaves where the alternative hypothesis outweighs the
    // null; under either branch the null is T(00)
    let (p_alt, active_parity) = match branch {
        HybridBranch::SecondSlots => (&p01, 1),
        HybridBranch::FirstSlots => (&p10, 0),
    };
    let accept_set: Vec<bool> = p_alt.iter().zip(&p00).map(|(a, n)| a > n).collect();

    let components: Vec<(Rat, DecisionTree)> = support_tuples(&pair.d0, k)
        .into_iter()
        .map(|(frozen, w)| (w, embed_with_frozen(t, k, active_parity, &frozen, &accept_set)))
        .collect();
    let corr_tester = MixtureTester { components, k };

    let null: Vec<&Dist> = vec![&pair.d0; k];
    let alt: Vec<&Dist> = vec![&pair.d1; k];
    let corr_error = corr_tester.exact_error(&null, &alt);
    let bound = rat(1, 4) + eps / rat_int(2);
    if corr_error > bound {
        return Err(Error::GuaranteeViolated(format!(
            "emitted tester error {} exceeds {}",
            fmt_rat(&corr_error),
            fmt_rat(&bound)
        )));
    }
    let (best_idx, best_err) = corr_tester.best_component(&null, &alt);
    let derandomized = (corr_tester.components[best_idx].1.clone(), best_err);

    let p0 = corr_tester.accept_prob(&null);
    let p1 = corr_tester.accept_prob(&alt);
    let gap = (&p1 - &p0).abs();
    let amplified = amplify(&p0, &p1, corr_tester.max_depth(), &(gap / rat_int(2)), eps_target)?;

    Ok(HybridResult { branch, dist_01_00: d1, dist_00_10: d2, corr_tester, corr_error, derandomized, amplified })
}

/// Selection instance: `k` independent samples from the balanced mixture,
/// output any index with the correct function value.
#[derive(Clone, Debug)]
pub struct SelectionInstance {
    pub pair: DistPair,
    pub k: usize,
}

impl SelectionInstance {
    pub fn mixture(&self) -> Dist {
        self.pair.balanced_mixture()
    }

    /// Exact probability that the selector's claimed `(index, bit)` is wrong
    /// on `mixture^k`. Every leaf must carry a selection label.
    pub fn selection_error(&self, t: &DecisionTree) -> Result<Rat> {
        if t.k() != self.k {
            return Err(Error::Invalid("selector sample count mismatch".into()));
        }
        let d = self.mixture();
        let dists: Vec<&Dist> = vec![&d; self.k];
        let mut wrong = Rat::zero();
        let mut bad_label = false;
        t.walk_leaves(&[dists], &mut |ctx| {
            let mass = ctx.mass(0);
            if mass.is_zero() {
                return;
            }
            let Some(LeafLabel::Select { sample, bit }) = ctx.label else {
                bad_label = true;
                return;
            };
            // mass of the claimed sample's cell on which f disagrees
            let cell = &ctx.cells[*sample];
            let mut cell_total = Rat::zero();
            let mut cell_wrong = Rat::zero();
            for (w, p) in d.support() {
                if cell.matches(w) {
                    cell_total += p;
                    if self.pair.f.value(w) != FValue::bit(*bit) {
                        cell_wrong += p;
                    }
                }
            }
            wrong += mass * cell_wrong / cell_total;
        });
        if bad_label {
            return Err(Error::Invalid("selector leaves must carry selection labels".into()));
        }
        Ok(wrong)
    }
}

#[derive(Clone, Debug)]
pub struct SelToBicorr {
    /// Mixture over the `2^k` side strings; components read the paired input.
    pub tester: MixtureTester,
    /// Exact errors per side string; all equal the selection error.
    pub per_side_errors: Vec<Rat>,
    pub selection_error: Rat,
    /// Lexicographically first side string among the best.
    pub derandomized: (DecisionTree, Rat),
}

/// Turn a selector into a paired-samples tester: pick a side per pair, run
/// the selector on the visible samples, and decode its claim into a
/// hypothesis guess. The error parameter is unaffected, exactly.
pub fn sel_to_bicorr(t_sel: &DecisionTree, pair: &DistPair, k: usize) -> Result<SelToBicorr> {
    let inst = SelectionInstance { pair: pair.clone(), k };
    let sel_err = inst.selection_error(t_sel)?;
    let inst2 = BicorrInstance { pair: pair.clone(), k };

    // side string z in {0,1}^k: pair i shows slot 2i + z_i to the selector
    let mut components = Vec::new();
    let mut per_side_errors = Vec::new();
    let weight = Rat::new(1.into(), num_bigint::BigInt::from(1u64 << k));
    for z_code in 0..(1u64 << k) {
        let z: Vec<usize> = (0..k).map(|i| (z_code >> i & 1) as usize).collect();
        let tree = selector_component(t_sel, k, &z)?;
        let single = MixtureTester { components: vec![(Rat::one(), tree.clone())], k: 2 * k };
        let err = single.exact_error(&inst2.dists01(), &inst2.dists10());
        per_side_errors.push(err);
        components.push((weight.clone(), tree));
    }
    let tester = MixtureTester { components, k: 2 * k };
    let mix_err = tester.exact_error(&inst2.dists01(), &inst2.dists10());
    if mix_err != sel_err {
        return Err(Error::GuaranteeViolated(format!(
            "paired error {} differs from selection error {}",
            fmt_rat(&mix_err),
            fmt_rat(&sel_err)
        )));
    }
    let best = per_side_errors
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cmp(b.1))
        .map(|(i, e)| (tester.components[i].1.clone(), e.clone()))
        .expect("nonempty");
    Ok(SelToBicorr { tester, per_side_errors, selection_error: sel_err, derandomized: best })
}

/// Remap the selector to paired slots per `z` and decode its leaf claims:
/// claiming `f(visible sample of pair i) = b` means hypothesis `(01)` iff
/// `b = z_i` (the visible slot is the `z_i`-th element of the pair).
fn selector_component(t_sel: &DecisionTree, k: usize, z: &[usize]) -> Result<DecisionTree> {
    fn go(node: &Node, z: &[usize]) -> Node {
        match node {
            Node::Leaf { label } => {
                let label = match label {
                    Some(LeafLabel::Select { sample, bit }) => {
                        // accept claims the (10) hypothesis
                        let claims01 = (*bit as usize) == z[*sample];
                        Some(if claims01 { LeafLabel::Reject } else { LeafLabel::Accept })
                    }
                    other => other.clone(),
                };
                Node::Leaf { label }
            }
            Node::Dummy { child } => Node::Dummy { child: Box::new(go(child, z)) },
            Node::Query { sample, pos, children } => Node::Query {
                sample: 2 * sample + z[*sample],
                pos: *pos,
                children: children.iter().map(|c| go(c, z)).collect(),
            },
        }
    }
    DecisionTree::new(2 * k, t_sel.n(), t_sel.alphabet(), go(t_sel.root(), z))
}

/// The selection-hardness distribution: the first two bits agree, carry an
/// `eps_weight` correlation with the parity, and the tail is uniform.
pub fn selection_hard_dist(n: usize, eps_weight: &Rat) -> Result<(PartialFunction, Dist)> {
    if n < 3 {
        return Err(Error::Invalid("needs n >= 3".into()));
    }
    if !eps_weight.is_positive() || eps_weight >= &Rat::one() {
        return Err(Error::Invalid("eps weight must lie in (0, 1)".into()));
    }
    let f = PartialFunction::xor(n);
    let alphabet = Alphabet::binary();
    let tail_mass = Rat::new(1.into(), num_bigint::BigInt::from(1u64 << (n - 2)));
    let half = rat(1, 2);
    let mut entries: Vec<(Word, Rat)> = Vec::new();
    for tail in crate::domain::enumerate_words(n - 2, alphabet) {
        let parity = tail.iter().fold(0u8, |a, b| a ^ b);
        for c in 0..2u8 {
            let mut w = vec![c, c];
            w.extend(tail.iter().copied());
            // matched-first-bits branch with probability eps when c equals
            // the tail parity, plus the uniform-coin branch
            let mut mass = (Rat::one() - eps_weight) * &half * &tail_mass;
            if c == parity {
                mass += eps_weight * &tail_mass;
            }
            entries.push((w, mass));
        }
    }
    let d = Dist::new(n, alphabet, entries)?;
    Ok((f, d))
}

#[derive(Clone, Debug)]
pub struct BiasReport {
    pub cells_checked: usize,
    pub all_in_band: bool,
    /// Largest deviation `|bias - 1/2|` over the checked cells.
    pub max_deviation: Rat,
    pub eps_weight: Rat,
    pub q_max: usize,
    /// Per-leaf selection error is at least `1/2 - eps` when the bias bound
    /// holds, ruling out shallow selectors.
    pub leaf_error_floor: Rat,
}

/// Certificate that every cell fixing at most `q_max` positions keeps the
/// conditional parity bias within `1/2 +- eps_weight`, exactly.
pub fn selection_bias_certificate(n: usize, q_max: usize, eps_weight: &Rat) -> Result<BiasReport> {
    let (f, d) = selection_hard_dist(n, eps_weight)?;
    let alphabet = d.alphabet();
    let half = rat(1, 2);

    // enumerate cells with <= q_max fixed positions
    let mut cells: Vec<Cell> = Vec::new();
    let positions: Vec<usize> = (0..n).collect();
    fn subsets(positions: &[usize], size: usize) -> Vec<Vec<usize>> {
        if size == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for (i, &p) in positions.iter().enumerate() {
            for mut rest in subsets(&positions[i + 1..], size - 1) {
                rest.insert(0, p);
                out.push(rest);
            }
        }
        out
    }
    for size in 0..=q_max {
        for subset in subsets(&positions, size) {
            let count = 1usize << subset.len();
            for code in 0..count {
                let mut cell = Cell::full(n);
                for (bit_idx, &p) in subset.iter().enumerate() {
                    cell = cell.fix(p, (code >> bit_idx & 1) as u8);
                }
                cells.push(cell);
            }
        }
    }

    let checks = crate::par::par_map(&cells, |cell| {
        let total = d.cell_mass(cell);
        if total.is_zero() {
            return None;
        }
        let mut one_mass = Rat::zero();
        for (w, p) in d.support() {
            if cell.matches(w) && f.value(w) == FValue::One {
                one_mass += p;
            }
        }
        Some((one_mass / total - &half).abs())
    });
    let mut max_dev = Rat::zero();
    let mut checked = 0;
    for dev in checks.into_iter().flatten() {
        checked += 1;
        if dev > max_dev {
            max_dev = dev;
        }
    }
    let all_in_band = max_dev <= *eps_weight;
    let _ = alphabet;
    Ok(BiasReport {
        cells_checked: checked,
        all_in_band,
        max_deviation: max_dev,
        eps_weight: eps_weight.clone(),
        q_max,
        leaf_error_floor: half - eps_weight,
    })
}

#[derive(Clone, Debug)]
pub struct CorrEasyReport {
    /// Exact error of the one-query first-bit guesser.
    pub base_error: Rat,
    pub amplified: Amplified,
    /// Total cost after amplification (one query per run).
    pub cost: usize,
}

/// The one-query algorithm that guesses the parity from the first bit of the
/// first sample, amplified to the target error by majority vote over fresh
/// samples; the cost has no dependence on `n`.
pub fn corr_easy_on_selection_dist(n: usize, eps_weight: &Rat, eps_target: &Rat) -> Result<CorrEasyReport> {
    let (f, d) = selection_hard_dist(n, eps_weight)?;
    let pair = DistPair::split(f, &d)?;
    let t = DecisionTree::new(
        1,
        n,
        pair.alphabet(),
        Node::Query {
            sample: 0,
            pos: 0,
            children: vec![
                Node::leaf(Some(LeafLabel::Reject)),
                Node::leaf(Some(LeafLabel::Accept)),
            ],
        },
    )?;
    let stats = crate::boosters::tester_stats(&t, &pair, 1);
    let base_error = crate::boosters::tester_error(&stats);
    let expected = rat(1, 2) - eps_weight / rat_int(2);
    if base_error != expected {
        return Err(Error::GuaranteeViolated(format!(
            "one-query error is {}, expected {}",
            fmt_rat(&base_error),
            fmt_rat(&expected)
        )));
    }
    let gap = (&stats.accept_on_d1 - &stats.accept_on_d0).abs();
    let amplified = amplify(&stats.accept_on_d0, &stats.accept_on_d1, 1, &(gap / rat_int(2)), eps_target)?;
    let cost = amplified.query_cost;
    Ok(CorrEasyReport { base_error, amplified, cost })
}
