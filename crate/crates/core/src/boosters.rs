//! The three booster notions, their exact verification by leaf enumeration,
//! and the transformations between boosters and testers, plus majority-vote
//! amplification with exact binomial tails.

use crate::domain::{Dist, DistPair, LikelihoodRatio, Word};
use crate::dtree::{DecisionTree, LeafLabel, Node};
use crate::error::{Error, Result};
use crate::ratio::{fmt_rat, rat_to_f64, Rat};
use crate::rng::Rng;
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Clone, Debug)]
pub struct BoosterParams {
    pub delta: Rat,
    /// Per-sample failure fraction; only the uniform notion uses it.
    pub eps: Rat,
    pub m: Rat,
}

impl BoosterParams {
    pub fn new(delta: Rat, eps: Rat, m: Rat) -> Result<BoosterParams> {
        if !m.is_positive() {
            return Err(Error::Invalid("booster threshold M must be positive".into()));
        }
        Ok(BoosterParams { delta, eps, m })
    }
}

#[derive(Clone, Debug)]
pub struct TesterParams {
    /// Bound on the accept probability for d0-side inputs.
    pub delta0: Rat,
    /// Bound on one minus the accept probability for d1-side inputs.
    pub delta1: Rat,
}

/// Outcome of an exact booster check: the verdict and the exact mass of
/// d1-inputs reaching a good leaf.
#[derive(Clone, Debug)]
pub struct BoosterCheck {
    pub holds: bool,
    pub good_mass: Rat,
}

fn product_tracking(pair: &DistPair, k: usize) -> [Vec<&Dist>; 2] {
    [vec![&pair.d0; k], vec![&pair.d1; k]]
}

/// Does a d1-sample reach a leaf with likelihood ratio `>= m` with
/// probability at least `1 - delta`? Exact.
pub fn check_likelihood_booster(t: &DecisionTree, pair: &DistPair, delta: &Rat, m: &Rat) -> Result<BoosterCheck> {
    if t.k() != 1 {
        return Err(Error::Invalid("likelihood booster check needs a single-sample tree".into()));
    }
    check_overall_booster(t, pair, 1, delta, m)
}

/// Multi-sample variant using the overall (product) likelihood ratio.
pub fn check_overall_booster(
    t: &DecisionTree,
    pair: &DistPair,
    k: usize,
    delta: &Rat,
    m: &Rat,
) -> Result<BoosterCheck> {
    if t.k() != k {
        return Err(Error::Invalid("tree sample count mismatch".into()));
    }
    let [d0s, d1s] = product_tracking(pair, k);
    let mut good = Rat::zero();
    t.walk_leaves(&[d0s, d1s], &mut |ctx| {
        let mass1 = ctx.mass(1);
        if mass1.is_zero() {
            return;
        }
        let parts: Vec<LikelihoodRatio> = (0..k)
            .map(|j| ctx.component_ratio(0, 1, j).expect("d1-positive leaf component"))
            .collect();
        let olr = LikelihoodRatio::product(&parts).expect("d1-positive leaf");
        if olr.ge_rat(m) {
            good += mass1;
        }
    });
    let holds = good >= Rat::one() - delta;
    Ok(BoosterCheck { holds, good_mass: good })
}

/// Uniform variant: at least `(1 - eps) k` sample components must have
/// component ratio `>= m` at the reached leaf.
pub fn check_uniform_booster(
    t: &DecisionTree,
    pair: &DistPair,
    k: usize,
    delta: &Rat,
    eps: &Rat,
    m: &Rat,
) -> Result<BoosterCheck> {
    if t.k() != k {
        return Err(Error::Invalid("tree sample count mismatch".into()));
    }
    let [d0s, d1s] = product_tracking(pair, k);
    let needed = (Rat::one() - eps) * Rat::from_integer((k as i64).into());
    let mut good = Rat::zero();
    t.walk_leaves(&[d0s, d1s], &mut |ctx| {
        let mass1 = ctx.mass(1);
        if mass1.is_zero() {
            return;
        }
        let mut hits = 0i64;
        for j in 0..k {
            let r = ctx.component_ratio(0, 1, j).expect("d1-positive leaf component");
            if r.ge_rat(m) {
                hits += 1;
            }
        }
        if Rat::from_integer(hits.into()) >= needed {
            good += mass1;
        }
    });
    let holds = good >= Rat::one() - delta;
    Ok(BoosterCheck { holds, good_mass: good })
}

/// Exact accept probabilities of a labelled tester tree.
#[derive(Clone, Debug)]
pub struct TesterStats {
    pub accept_on_d0: Rat,
    pub accept_on_d1: Rat,
    pub depth: usize,
}

pub fn tester_stats(t: &DecisionTree, pair: &DistPair, k: usize) -> TesterStats {
    let [d0s, d1s] = product_tracking(pair, k);
    let mut a0 = Rat::zero();
    let mut a1 = Rat::zero();
    t.walk_leaves(&[d0s, d1s], &mut |ctx| {
        if matches!(ctx.label, Some(LeafLabel::Accept)) {
            a0 += ctx.mass(0);
            a1 += ctx.mass(1);
        }
    });
    TesterStats { accept_on_d0: a0, accept_on_d1: a1, depth: t.depth() }
}

/// The tester's error on the balanced mixture of the two hypotheses.
pub fn tester_error(stats: &TesterStats) -> Rat {
    let half = crate::ratio::rat(1, 2);
    &half * &stats.accept_on_d0 + &half * (Rat::one() - &stats.accept_on_d1)
}

/// Relabel a verified `(delta, M)`-booster to accept exactly at leaves with
/// ratio `>= M`; the result accepts d1-inputs w.p. `>= 1 - delta` and
/// d0-inputs w.p. `<= 1/M`, both recomputed exactly.
pub fn booster_to_tester(
    t: &DecisionTree,
    pair: &DistPair,
    delta: &Rat,
    m: &Rat,
) -> Result<(DecisionTree, TesterStats)> {
    let check = check_likelihood_booster(t, pair, delta, m)?;
    if !check.holds {
        return Err(Error::NotABooster(format!(
            "good-leaf mass {} below 1 - {}",
            fmt_rat(&check.good_mass),
            fmt_rat(delta)
        )));
    }
    let mut verdicts = vec![false; t.leaf_count()];
    let [d0s, d1s] = product_tracking(pair, 1);
    t.walk_leaves(&[d0s, d1s], &mut |ctx| {
        let m1 = &ctx.sample_masses[1][0];
        let m0 = &ctx.sample_masses[0][0];
        if m0.is_zero() && m1.is_zero() {
            return;
        }
        let lr = LikelihoodRatio::new(m1.clone(), m0.clone()).expect("visited leaf is trimmed");
        verdicts[ctx.leaf_id] = lr.ge_rat(m);
    });
    let relabeled = t.map_labels(&|id, _| {
        Some(if verdicts[id] { LeafLabel::Accept } else { LeafLabel::Reject })
    });
    let stats = tester_stats(&relabeled, pair, 1);
    if stats.accept_on_d1 < Rat::one() - delta {
        return Err(Error::GuaranteeViolated("tester completeness below 1 - delta".into()));
    }
    if &stats.accept_on_d0 * m > Rat::one() {
        return Err(Error::GuaranteeViolated("tester soundness above 1/M".into()));
    }
    Ok((relabeled, stats))
}

/// Exact soundness direction for any tree: the d0-mass of leaves with
/// overall ratio `>= M` is at most `1/M`.
pub fn soundness_mass(t: &DecisionTree, pair: &DistPair, k: usize, m: &Rat) -> Result<(Rat, bool)> {
    let [d0s, d1s] = product_tracking(pair, k);
    let mut mass = Rat::zero();
    t.walk_leaves(&[d0s, d1s], &mut |ctx| {
        let m0 = ctx.mass(0);
        if m0.is_zero() {
            return;
        }
        if ctx.mass(1).is_zero() {
            return; // overall ratio 0 < M
        }
        let parts: Vec<LikelihoodRatio> = (0..k)
            .map(|j| ctx.component_ratio(0, 1, j).expect("component"))
            .collect();
        let olr = LikelihoodRatio::product(&parts).expect("leaf");
        if olr.ge_rat(m) {
            mass += m0;
        }
    });
    let holds = &mass * m <= Rat::one();
    Ok((mass, holds))
}

/// Every tester with verified guarantees is a booster: exact accept
/// probabilities are checked against `tp`, then the derived parameter
/// `delta = M delta0 + delta1` is certified by direct enumeration.
pub fn tester_to_booster_params(
    t: &DecisionTree,
    pair: &DistPair,
    tp: &TesterParams,
    m: &Rat,
) -> Result<BoosterParams> {
    booster_params_from_tester(t, pair, 1, tp, m)
}

/// The k-sample analogue for correlated-samples testers.
pub fn corr_to_overall(
    t: &DecisionTree,
    pair: &DistPair,
    k: usize,
    tp: &TesterParams,
    m: &Rat,
) -> Result<BoosterParams> {
    booster_params_from_tester(t, pair, k, tp, m)
}

fn booster_params_from_tester(
    t: &DecisionTree,
    pair: &DistPair,
    k: usize,
    tp: &TesterParams,
    m: &Rat,
) -> Result<BoosterParams> {
    let stats = tester_stats(t, pair, k);
    if stats.accept_on_d0 > tp.delta0 {
        return Err(Error::GuaranteeViolated(format!(
            "accept probability on d0 side is {}, claimed at most {}",
            fmt_rat(&stats.accept_on_d0),
            fmt_rat(&tp.delta0)
        )));
    }
    if Rat::one() - &stats.accept_on_d1 > tp.delta1 {
        return Err(Error::GuaranteeViolated(format!(
            "reject probability on d1 side is {}, claimed at most {}",
            fmt_rat(&(Rat::one() - &stats.accept_on_d1)),
            fmt_rat(&tp.delta1)
        )));
    }
    let delta = m * &tp.delta0 + &tp.delta1;
    let check = check_overall_booster(t, pair, k, &delta, m)?;
    if !check.holds {
        return Err(Error::GuaranteeViolated(
            "derived booster parameters fail direct verification".into(),
        ));
    }
    BoosterParams::new(delta, Rat::zero(), m.clone())
}

/// Result of collapsing a uniform multi-sample booster to a single-sample one
/// by freezing an index and the other samples.
#[derive(Clone, Debug)]
pub struct SingleBoosterResult {
    pub tree: DecisionTree,
    /// Exact probability that a d1-input reaches a good leaf of `tree`.
    pub value: Rat,
    /// False when the freeze search was sampled rather than exhaustive.
    pub certified: bool,
    pub frozen_index: usize,
    pub frozen_samples: Vec<Word>,
    /// Exact average early-halt mass over a uniform index and d1 inputs.
    pub early_halt_avg: Rat,
    pub depth_bound: usize,
}

/// Shrink `t` by freezing all samples except `j` to `frozen` and truncating
/// after `budget` queries to sample `j`; the result is a single-sample tree.
fn shrink_tree(t: &DecisionTree, j: usize, frozen: &[Word], budget: usize) -> DecisionTree {
    fn go(node: &Node, j: usize, frozen: &[Word], used: usize, budget: usize) -> Node {
        match node {
            Node::Leaf { label } => Node::Leaf { label: label.clone() },
            Node::Dummy { child } => go(child, j, frozen, used, budget),
            Node::Query { sample, pos, children } => {
                if *sample == j {
                    if used == budget {
                        return Node::Leaf { label: None }; // early halt
                    }
                    Node::Query {
                        sample: 0,
                        pos: *pos,
                        children: children.iter().map(|c| go(c, j, frozen, used + 1, budget)).collect(),
                    }
                } else {
                    let idx = if *sample < j { *sample } else { *sample - 1 };
                    let sym = frozen[idx][*pos] as usize;
                    go(&children[sym], j, frozen, used, budget)
                }
            }
        }
    }
    let root = go(t.root(), j, frozen, 0, budget);
    DecisionTree::new(1, t.n(), t.alphabet(), root).expect("shrink preserves validity")
}

fn good_leaf_mass(t: &DecisionTree, pair: &DistPair, m: &Rat) -> Rat {
    check_likelihood_booster(t, pair, &Rat::one(), m)
        .expect("single-sample check")
        .good_mass
}

/// Words of `support^count` in lexicographic order of support indices.
fn freeze_candidates(support: &[Word], count: usize) -> impl Iterator<Item = Vec<Word>> + '_ {
    let total = (support.len() as u64).checked_pow(count as u32).expect("guarded by budget");
    (0..total).map(move |mut idx| {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(support[(idx % support.len() as u64) as usize].clone());
            idx /= support.len() as u64;
        }
        out
    })
}

/// Derandomized collapse of a `(delta, eps, M)`-uniform booster on `k`
/// samples into a `(delta + eps + 1/C, M)`-likelihood booster of depth at
/// most `C * depth(t) / k`.
///
/// The frozen index and samples are chosen by exhaustive argmax when the
/// candidate count fits `enum_budget`, otherwise by a sampled search of
/// `sample_count` draws (flagged non-certified). Ties break on the first
/// candidate in lexicographic order.
pub fn uniform_to_single(
    t: &DecisionTree,
    pair: &DistPair,
    k: usize,
    params: &BoosterParams,
    c: &Rat,
    enum_budget: u64,
    sample_count: u64,
    rng: &mut Rng,
) -> Result<SingleBoosterResult> {
    if t.k() != k {
        return Err(Error::Invalid("tree sample count mismatch".into()));
    }
    if !c.is_positive() {
        return Err(Error::Invalid("C must be positive".into()));
    }
    let check = check_uniform_booster(t, pair, k, &params.delta, &params.eps, &params.m)?;
    if !check.holds {
        return Err(Error::NotABooster(format!(
            "uniform booster premise fails: good mass {}",
            fmt_rat(&check.good_mass)
        )));
    }
    let depth = t.depth();
    let q_budget = (c * Rat::from_integer((depth as i64).into()) / Rat::from_integer((k as i64).into()))
        .floor()
        .to_integer()
        .to_usize()
        .ok_or_else(|| Error::Invalid("query budget overflow".into()))?;

    // Markov step, exact: averaged over a uniform slot choice with all k
    // samples d1-distributed, the early-halt mass is at most 1/C.
    let d1s: Vec<&Dist> = vec![&pair.d1; k];
    let mut halt_sum = Rat::zero();
    t.walk_leaves(&[d1s], &mut |ctx| {
        let mass = ctx.mass(0);
        if mass.is_zero() {
            return;
        }
        let over = ctx.query_counts.iter().filter(|&&q| q > q_budget).count();
        halt_sum += mass * Rat::from_integer((over as i64).into());
    });
    let early_halt_avg = halt_sum / Rat::from_integer((k as i64).into());
    if &early_halt_avg * c > Rat::one() {
        return Err(Error::GuaranteeViolated("early-halt mass exceeds 1/C".into()));
    }

    let support: Vec<Word> = pair.d1.support().map(|(w, _)| w.clone()).collect();
    let per_index = (support.len() as u64).checked_pow((k - 1) as u32);
    let needed = per_index.map(|p| p.saturating_mul(k as u64));
    let exhaustive = matches!(needed, Some(n) if n <= enum_budget);

    let mut best: Option<(Rat, usize, Vec<Word>, DecisionTree)> = None;
    let consider = |j: usize, frozen: Vec<Word>, best: &mut Option<(Rat, usize, Vec<Word>, DecisionTree)>| {
        let shrunk = shrink_tree(t, j, &frozen, q_budget);
        let value = good_leaf_mass(&shrunk, pair, &params.m);
        match best {
            None => *best = Some((value, j, frozen, shrunk)),
            Some((bv, _, _, _)) if value > *bv => *best = Some((value, j, frozen, shrunk)),
            _ => {}
        }
    };
    if exhaustive {
        for j in 0..k {
            for frozen in freeze_candidates(&support, k - 1) {
                consider(j, frozen, &mut best);
            }
        }
    } else {
        for _ in 0..sample_count {
            let j = rng.below(k as u64) as usize;
            let frozen: Vec<Word> = (0..k - 1).map(|_| rng.choose(&support).clone()).collect();
            consider(j, frozen, &mut best);
        }
    }
    let (value, frozen_index, frozen_samples, tree) = best.ok_or(Error::EnumerationCapExceeded {
        needed: needed.unwrap_or(u64::MAX),
        budget: enum_budget,
    })?;

    if tree.depth() > q_budget {
        return Err(Error::GuaranteeViolated("shrunk tree exceeds its depth bound".into()));
    }
    let target = Rat::one() - (&params.delta + &params.eps + c.recip());
    if exhaustive && value < target {
        return Err(Error::NotABooster(format!(
            "best frozen value {} below target {}",
            fmt_rat(&value),
            fmt_rat(&target)
        )));
    }
    Ok(SingleBoosterResult {
        tree,
        value,
        certified: exhaustive,
        frozen_index,
        frozen_samples,
        early_halt_avg,
        depth_bound: q_budget,
    })
}

// ---------------------------------------------------------------------------
// Majority-vote amplification with exact binomial tails.
// ---------------------------------------------------------------------------

/// Majority-vote amplification of a base tester with exact accept
/// probabilities `p0` and `p1` on the two input sides.
#[derive(Clone, Debug)]
pub struct Amplified {
    pub runs: usize,
    /// Vote threshold: accept when the accept-count exceeds it (falls below
    /// it when `p0 > p1`).
    pub threshold: Rat,
    pub err0: Rat,
    pub err1: Rat,
    pub query_cost: usize,
}

/// `Pr[Bin(m, p) <= bound]`, exact.
pub fn binomial_tail_le(m: usize, bound: &Rat, p: &Rat) -> Rat {
    let cutoff = bound.floor().to_integer();
    if cutoff.is_negative() {
        return Rat::zero();
    }
    let cutoff = cutoff.to_usize().unwrap_or(m).min(m);
    let a = p.numer().to_biguint().expect("p in [0,1]");
    let b = p.denom().to_biguint().expect("positive denominator");
    if a.is_zero() {
        return Rat::one();
    }
    if a == b {
        return if cutoff >= m { Rat::one() } else { Rat::zero() };
    }
    let ba = &b - &a;
    // term_i = C(m, i) a^i (b-a)^{m-i}, accumulated over i <= cutoff
    let mut term = num_traits::pow::pow(ba.clone(), m);
    let mut acc = term.clone();
    for i in 0..cutoff {
        term = term * (&a * BigUint::from(m - i));
        term = term / (&ba * BigUint::from(i + 1));
        acc += &term;
    }
    Rat::new(BigInt::from(acc), BigInt::from(num_traits::pow::pow(b, m)))
}

fn binomial_tail_le_f64(m: usize, bound: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return if (m as f64) <= bound { 1.0 } else { 0.0 };
    }
    let cutoff = bound.floor() as i64;
    if cutoff < 0 {
        return 0.0;
    }
    let cutoff = (cutoff as usize).min(m);
    let mut log_term = (m as f64) * (1.0 - p).ln();
    let mut acc = log_term.exp();
    for i in 0..cutoff {
        log_term += ((m - i) as f64).ln() - ((i + 1) as f64).ln() + p.ln() - (1.0 - p).ln();
        acc += log_term.exp();
    }
    acc.min(1.0)
}

/// Minimal number of fresh-group runs so that majority voting at the
/// midpoint threshold pushes both exact error sides to `<= eps_target`.
/// Candidates are screened in floating point with a guard band; the returned
/// `m` (and any ambiguous smaller one) is confirmed with exact tails.
pub fn amplify(
    p0: &Rat,
    p1: &Rat,
    base_cost: usize,
    delta_gap: &Rat,
    eps_target: &Rat,
) -> Result<Amplified> {
    let gap = (p1 - p0).abs();
    if gap < delta_gap * crate::ratio::rat_int(2) || gap.is_zero() {
        return Err(Error::NoGap);
    }
    let (lo, hi) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
    let swapped = p0 > p1;
    let lo_f = rat_to_f64(lo);
    let hi_f = rat_to_f64(hi);
    let eps_f = rat_to_f64(eps_target);
    const GUARD: f64 = 1e-9;
    const M_LIMIT: usize = 1_000_000;
    for m in 1..=M_LIMIT {
        let theta_f = m as f64 * (lo_f + hi_f) / 2.0;
        // error on the hi side: votes <= theta; on the lo side: votes > theta
        let e_hi = binomial_tail_le_f64(m, theta_f, hi_f);
        let e_lo = 1.0 - binomial_tail_le_f64(m, theta_f, lo_f);
        if e_hi > eps_f + GUARD || e_lo > eps_f + GUARD {
            continue;
        }
        let theta = Rat::from_integer((m as i64).into()) * (lo + hi) / crate::ratio::rat_int(2);
        let err_hi = binomial_tail_le(m, &theta, hi);
        let err_lo = Rat::one() - binomial_tail_le(m, &theta, lo);
        if &err_hi <= eps_target && &err_lo <= eps_target {
            let (err0, err1) = if swapped { (err_hi, err_lo) } else { (err_lo, err_hi) };
            return Ok(Amplified { runs: m, threshold: theta, err0, err1, query_cost: m * base_cost });
        }
    }
    Err(Error::EnumerationCapExceeded { needed: M_LIMIT as u64 + 1, budget: M_LIMIT as u64 })
}
