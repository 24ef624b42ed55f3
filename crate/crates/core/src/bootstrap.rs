//! The phase-based bootstrapping algorithm that turns per-cell overall
//! boosters into a uniform booster over many samples, plus exact and
//! statistical verification of its analysis: the sub-martingale property of
//! the truncated log-ratio progress measure, per-phase expected progress, the
//! scalar helper inequality, and the wrong-settlement bound.

use crate::boosters::{check_overall_booster, check_uniform_booster, BoosterCheck, BoosterParams};
use crate::domain::{Cell, Dist, DistPair, LikelihoodRatio, Word};
use crate::dtree::{
    is_settled, is_settled_low, overall_truncated_log_ratio, settled_count, truncated_log_ratio,
    DecisionTree, Node, ProductCell, TruncationParams,
};
use crate::error::{Error, Result};
use crate::ratio::{cmp_rat_exp, fmt_rat, rat_int, rat_to_f64, Rat};
use num_traits::{One, Zero};
use std::cmp::Ordering;
use std::collections::HashMap;

/// Parameters of one bootstrapping run.
#[derive(Clone, Debug)]
pub struct BootstrapConfig {
    /// Total number of samples (K).
    pub total_samples: usize,
    /// Samples handed to the phase booster (k).
    pub phase_samples: usize,
    /// Exact padded length of each phase (L).
    pub phase_depth: usize,
    /// Phase budget multiplier: at most `phase_multiplier * total_samples` phases.
    pub phase_multiplier: usize,
    pub trunc: TruncationParams,
    /// Halt when fewer unsettled samples remain. The pigeonhole guarantee
    /// needs `phase_samples * (|Sigma|+1)^n`; desk-scale runs use less and
    /// are flagged.
    pub unsettled_floor: usize,
    /// Certificate target for every phase booster.
    pub booster_delta: Rat,
    pub booster_m: Rat,
    /// Per-phase expected progress the verifier demands.
    pub progress_target: f64,
}

impl BootstrapConfig {
    pub fn max_phases(&self) -> usize {
        self.phase_multiplier * self.total_samples
    }

    /// The floor value the pigeonhole argument needs.
    pub fn pigeonhole_floor(&self, n: usize, alphabet_size: u8) -> usize {
        let cells = (alphabet_size as usize + 1).pow(n as u32);
        self.phase_samples * cells
    }

    /// Whether the run matches the headline hypothesis
    /// `K >= 1000 k (|Sigma|+1)^n`.
    pub fn hypothesis_satisfied(&self, n: usize, alphabet_size: u8) -> bool {
        self.total_samples >= 1000 * self.pigeonhole_floor(n, alphabet_size)
    }
}

/// Supplier of depth-bounded overall boosters for conditioned pairs.
pub trait BoosterSource {
    /// A depth-`<= depth` tree over `k` samples intended as an overall
    /// booster for `pair` (already conditioned on `base`). Queries must
    /// target positions free in `base`.
    fn booster_for(&mut self, pair: &DistPair, base: &Cell, k: usize, depth: usize) -> Result<DecisionTree>;
}

/// Default oracle: exact DP for the depth-bounded tree maximizing the mass of
/// d1-inputs reaching a leaf with overall ratio `>= m`.
pub struct DpBoosterSource {
    m: Rat,
    cache: HashMap<(Vec<u8>, usize, usize), DecisionTree>,
}

impl DpBoosterSource {
    pub fn new(m: Rat) -> DpBoosterSource {
        DpBoosterSource { m, cache: HashMap::new() }
    }
}

impl BoosterSource for DpBoosterSource {
    fn booster_for(&mut self, pair: &DistPair, base: &Cell, k: usize, depth: usize) -> Result<DecisionTree> {
        let key = (base.key().to_vec(), k, depth);
        if let Some(t) = self.cache.get(&key) {
            return Ok(t.clone());
        }
        let (_, tree) = best_overall_booster(pair, base, k, depth, &self.m)?;
        self.cache.insert(key, tree.clone());
        Ok(tree)
    }
}

fn state_key(cells: &[Cell]) -> Vec<u8> {
    let mut keys: Vec<&[u8]> = cells.iter().map(|c| c.key()).collect();
    keys.sort();
    keys.concat()
}

/// Depth-bounded tree over `k` samples maximizing the exact d1-mass of leaves
/// with overall likelihood ratio `>= m`, for a pair conditioned on `base`.
/// Ties prefer stopping, then the lowest slot, then the lowest position.
pub fn best_overall_booster(
    pair: &DistPair,
    base: &Cell,
    k: usize,
    depth: usize,
    m: &Rat,
) -> Result<(Rat, DecisionTree)> {
    struct Dp<'a> {
        pair: &'a DistPair,
        m: &'a Rat,
        memo: HashMap<(Vec<u8>, usize), Rat>,
        masses: HashMap<Vec<u8>, (Rat, Rat)>,
    }
    impl Dp<'_> {
        fn mass(&mut self, c: &Cell) -> (Rat, Rat) {
            if let Some(v) = self.masses.get(c.key()) {
                return v.clone();
            }
            let v = (self.pair.d0.cell_mass(c), self.pair.d1.cell_mass(c));
            self.masses.insert(c.key().to_vec(), v.clone());
            v
        }

        fn leaf_value(&mut self, cells: &[Cell]) -> Rat {
            let mut g1 = Rat::one();
            let mut g0 = Rat::one();
            for c in cells {
                let (m0, m1) = self.mass(c);
                g1 *= m1;
                g0 *= m0;
            }
            if g1.is_zero() {
                return Rat::zero();
            }
            let olr = LikelihoodRatio::new(g1.clone(), g0).expect("positive d1 mass");
            if olr.ge_rat(self.m) {
                g1
            } else {
                Rat::zero()
            }
        }

        fn value(&mut self, cells: &[Cell], depth: usize) -> Rat {
            let key = (state_key(cells), depth);
            if let Some(v) = self.memo.get(&key) {
                return v.clone();
            }
            let mut best = self.leaf_value(cells);
            if depth > 0 {
                let mut seen = std::collections::BTreeSet::new();
                for (j, cell) in cells.iter().enumerate() {
                    if !seen.insert(cell.key().to_vec()) {
                        continue;
                    }
                    for i in cell.free_positions() {
                        let mut total = Rat::zero();
                        for s in self.pair.alphabet().symbols() {
                            let child = cell.fix(i, s);
                            let (m0, m1) = self.mass(&child);
                            if m0.is_zero() && m1.is_zero() {
                                continue;
                            }
                            let mut next = cells.to_vec();
                            next[j] = child;
                            total += self.value(&next, depth - 1);
                        }
                        if total > best {
                            best = total;
                        }
                    }
                }
            }
            self.memo.insert(key, best.clone());
            best
        }

        fn build(&mut self, cells: &[Cell], depth: usize) -> Node {
            let target = self.value(cells, depth);
            if self.leaf_value(cells) == target {
                return Node::leaf(None);
            }
            let mut seen = std::collections::BTreeSet::new();
            for (j, cell) in cells.iter().enumerate() {
                if !seen.insert(cell.key().to_vec()) {
                    continue;
                }
                for i in cell.free_positions() {
                    let mut total = Rat::zero();
                    for s in self.pair.alphabet().symbols() {
                        let child = cell.fix(i, s);
                        let (m0, m1) = self.mass(&child);
                        if m0.is_zero() && m1.is_zero() {
                            continue;
                        }
                        let mut next = cells.to_vec();
                        next[j] = child;
                        total += self.value(&next, depth - 1);
                    }
                    if total == target {
                        let children = self
                            .pair
                            .alphabet()
                            .symbols()
                            .map(|s| {
                                let child = cell.fix(i, s);
                                let (m0, m1) = self.mass(&child);
                                if m0.is_zero() && m1.is_zero() {
                                    Node::leaf(None)
                                } else {
                                    let mut next = cells.to_vec();
                                    next[j] = child;
                                    self.build(&next, depth - 1)
                                }
                            })
                            .collect();
                        return Node::Query { sample: j, pos: i, children };
                    }
                }
            }
            unreachable!("some choice achieves the memoized optimum")
        }
    }

    let mut dp = Dp { pair, m, memo: HashMap::new(), masses: HashMap::new() };
    let start = vec![base.clone(); k];
    let value = dp.value(&start, depth);
    let root = dp.build(&start, depth);
    let tree = DecisionTree::new(k, pair.n(), pair.alphabet(), root)?;
    Ok((value, tree))
}

/// The full bootstrapped decision tree with its oracle certificates.
#[derive(Clone, Debug)]
pub struct BootstrapTree {
    pub tree: DecisionTree,
    /// Distinct bucket cells encountered, with the exact good-leaf mass of
    /// the certified phase booster used there.
    pub oracle_certs: Vec<(Cell, Rat)>,
    pub hypothesis_ok: bool,
    /// True when some phase start found enough unsettled samples but no cell
    /// pattern shared by `phase_samples` of them (possible only below the
    /// pigeonhole floor).
    pub bucket_starved: bool,
}

#[derive(Clone)]
struct SampleState {
    cells: Vec<Cell>,
    settled: Vec<bool>,
}

struct Builder<'a> {
    cfg: &'a BootstrapConfig,
    pair: &'a DistPair,
    source: &'a mut dyn BoosterSource,
    certs: Vec<(Cell, Rat)>,
    starved: bool,
}

/// Deterministic bucket choice: lexicographically least cell pattern among
/// those shared by at least `phase_samples` unsettled samples, then the
/// lowest sample indices.
fn pick_bucket(cfg: &BootstrapConfig, st: &SampleState) -> Option<(Cell, Vec<usize>)> {
    let mut buckets: std::collections::BTreeMap<Vec<u8>, Vec<usize>> = Default::default();
    for (j, cell) in st.cells.iter().enumerate() {
        if !st.settled[j] {
            buckets.entry(cell.key().to_vec()).or_default().push(j);
        }
    }
    for (_, members) in buckets {
        if members.len() >= cfg.phase_samples {
            let cell = st.cells[members[0]].clone();
            return Some((cell, members[..cfg.phase_samples].to_vec()));
        }
    }
    None
}

fn fetch_booster(
    cfg: &BootstrapConfig,
    pair: &DistPair,
    source: &mut dyn BoosterSource,
    cell: &Cell,
    certs: &mut Vec<(Cell, Rat)>,
) -> Result<DecisionTree> {
    let conditioned = pair.conditioned(cell)?;
    let t = source.booster_for(&conditioned, cell, cfg.phase_samples, cfg.phase_depth)?;
    if t.depth() > cfg.phase_depth {
        return Err(Error::OracleDepthExceeded { depth: t.depth(), limit: cfg.phase_depth });
    }
    let check =
        check_overall_booster(&t, &conditioned, cfg.phase_samples, &cfg.booster_delta, &cfg.booster_m)?;
    if !check.holds {
        return Err(Error::OracleNotBooster(format!(
            "cell {}: good mass {} below 1 - {}",
            cell,
            fmt_rat(&check.good_mass),
            fmt_rat(&cfg.booster_delta)
        )));
    }
    if !certs.iter().any(|(c, _)| c == cell) {
        certs.push((cell.clone(), check.good_mass));
    }
    Ok(t)
}

impl Builder<'_> {
    fn phase_start(&mut self, st: &SampleState, phase: usize) -> Result<Node> {
        if phase >= self.cfg.max_phases() {
            return Ok(Node::leaf(None));
        }
        let unsettled = st.settled.iter().filter(|s| !**s).count();
        if unsettled < self.cfg.unsettled_floor {
            return Ok(Node::leaf(None));
        }
        let Some((cell, slots)) = pick_bucket(self.cfg, st) else {
            self.starved = true;
            return Ok(Node::leaf(None));
        };
        let booster = fetch_booster(self.cfg, self.pair, self.source, &cell, &mut self.certs)?;
        self.walk_booster(st, booster.root(), &slots, phase, 0)
    }

    fn pad_then(&mut self, st: &SampleState, phase: usize, steps_done: usize) -> Result<Node> {
        let mut node = self.phase_start(st, phase + 1)?;
        for _ in steps_done..self.cfg.phase_depth {
            node = Node::Dummy { child: Box::new(node) };
        }
        Ok(node)
    }

    fn walk_booster(
        &mut self,
        st: &SampleState,
        onode: &Node,
        slots: &[usize],
        phase: usize,
        steps: usize,
    ) -> Result<Node> {
        if steps == self.cfg.phase_depth {
            return self.phase_start(st, phase + 1);
        }
        match onode {
            Node::Leaf { .. } => self.pad_then(st, phase, steps),
            Node::Dummy { child } => {
                let inner = self.walk_booster(st, child, slots, phase, steps + 1)?;
                Ok(Node::Dummy { child: Box::new(inner) })
            }
            Node::Query { sample, pos, children } => {
                let j = slots[*sample];
                if st.settled[j] {
                    return Err(Error::QueriesSettledSample { sample: j });
                }
                let cell = &st.cells[j];
                if !cell.is_free(*pos) {
                    return Err(Error::Invalid(format!("phase booster re-queries position {pos}")));
                }
                let mut built = Vec::with_capacity(children.len());
                for (sym, ochild) in children.iter().enumerate() {
                    let child_cell = cell.fix(*pos, sym as u8);
                    let m0 = self.pair.d0.cell_mass(&child_cell);
                    let m1 = self.pair.d1.cell_mass(&child_cell);
                    if m0.is_zero() && m1.is_zero() {
                        built.push(Node::leaf(None));
                        continue;
                    }
                    let lr = LikelihoodRatio::new(m1, m0).expect("checked nonzero");
                    let mut next = st.clone();
                    next.cells[j] = child_cell;
                    if is_settled(&lr, &self.cfg.trunc) {
                        next.settled[j] = true;
                        built.push(self.pad_then(&next, phase, steps + 1)?);
                    } else {
                        built.push(self.walk_booster(&next, ochild, slots, phase, steps + 1)?);
                    }
                }
                Ok(Node::Query { sample: j, pos: *pos, children: built })
            }
        }
    }
}

/// Construct the full bootstrapped tree over `total_samples` samples,
/// certifying every phase booster on the way.
pub fn build_bootstrap_tree(
    cfg: &BootstrapConfig,
    pair: &DistPair,
    source: &mut dyn BoosterSource,
) -> Result<BootstrapTree> {
    let n = pair.n();
    let st = SampleState {
        cells: vec![Cell::full(n); cfg.total_samples],
        settled: vec![false; cfg.total_samples],
    };
    let mut b = Builder { cfg, pair, source, certs: Vec::new(), starved: false };
    let root = b.phase_start(&st, 0)?;
    let certs = std::mem::take(&mut b.certs);
    let starved = b.starved;
    let tree = DecisionTree::new(cfg.total_samples, n, pair.alphabet(), root)?;
    Ok(BootstrapTree {
        tree,
        oracle_certs: certs,
        hypothesis_ok: cfg.hypothesis_satisfied(n, pair.alphabet().size()),
        bucket_starved: starved,
    })
}

/// One row of a progress trace; `progress = settled + otllr` recomputed from
/// scratch at the vertex after the step.
#[derive(Clone, Debug)]
pub struct TraceRow {
    pub step: usize,
    pub phase: usize,
    pub settled: usize,
    pub otllr: f64,
    pub progress: f64,
    pub dummy: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HaltReason {
    FloorReached,
    PhaseBudget,
    BucketStarved,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub rows: Vec<TraceRow>,
    pub final_cells: ProductCell,
    pub phases: usize,
    pub reason: HaltReason,
    pub hypothesis_ok: bool,
}

impl RunResult {
    /// Line-oriented export: `step phase settled otllr progress dummy?`.
    pub fn render_trace(&self) -> String {
        let mut out = String::from("step phase settled otllr progress dummy?\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{} {} {} {:.9} {:.9} {}\n",
                r.step, r.phase, r.settled, r.otllr, r.progress, u8::from(r.dummy)
            ));
        }
        out
    }
}

/// Execute the bootstrapping algorithm on one concrete input, recording the
/// per-step progress trace.
pub fn run_bootstrap(
    cfg: &BootstrapConfig,
    pair: &DistPair,
    input: &[Word],
    source: &mut dyn BoosterSource,
) -> Result<RunResult> {
    if input.len() != cfg.total_samples {
        return Err(Error::Invalid("input sample count mismatch".into()));
    }
    let n = pair.n();
    let mut st = SampleState {
        cells: vec![Cell::full(n); cfg.total_samples],
        settled: vec![false; cfg.total_samples],
    };
    let mut rows: Vec<TraceRow> = Vec::new();
    let mut step = 0usize;
    let mut phase = 0usize;
    let mut certs = Vec::new();
    let reason;
    let record = |st: &SampleState, step: usize, phase: usize, dummy: bool| -> Result<TraceRow> {
        let pc = ProductCell { cells: st.cells.clone() };
        let settled = settled_count(pair, &pc, &cfg.trunc)?;
        let otllr = overall_truncated_log_ratio(pair, &pc, &cfg.trunc)?;
        Ok(TraceRow { step, phase, settled, otllr, progress: settled as f64 + otllr, dummy })
    };
    loop {
        if phase >= cfg.max_phases() {
            reason = HaltReason::PhaseBudget;
            break;
        }
        let unsettled = st.settled.iter().filter(|s| !**s).count();
        if unsettled < cfg.unsettled_floor {
            reason = HaltReason::FloorReached;
            break;
        }
        let Some((cell, slots)) = pick_bucket(cfg, &st) else {
            reason = HaltReason::BucketStarved;
            break;
        };
        let booster = fetch_booster(cfg, pair, source, &cell, &mut certs)?;
        // run the booster on the bucket samples, halting early on settlement
        let mut onode = booster.root();
        let mut steps_in_phase = 0usize;
        while steps_in_phase < cfg.phase_depth {
            match onode {
                Node::Leaf { .. } => break,
                Node::Dummy { child } => {
                    step += 1;
                    steps_in_phase += 1;
                    rows.push(record(&st, step, phase + 1, true)?);
                    onode = child;
                }
                Node::Query { sample, pos, children } => {
                    let j = slots[*sample];
                    if st.settled[j] {
                        return Err(Error::QueriesSettledSample { sample: j });
                    }
                    let sym = input[j][*pos];
                    st.cells[j] = st.cells[j].fix(*pos, sym);
                    let lr = pair.likelihood_ratio(&st.cells[j])?;
                    let now_settled = is_settled(&lr, &cfg.trunc);
                    st.settled[j] = now_settled;
                    step += 1;
                    steps_in_phase += 1;
                    rows.push(record(&st, step, phase + 1, false)?);
                    if now_settled {
                        break;
                    }
                    onode = &children[sym as usize];
                }
            }
        }
        for _ in steps_in_phase..cfg.phase_depth {
            step += 1;
            rows.push(record(&st, step, phase + 1, true)?);
        }
        phase += 1;
    }
    Ok(RunResult {
        rows,
        final_cells: ProductCell { cells: st.cells },
        phases: phase,
        reason,
        hypothesis_ok: cfg.hypothesis_satisfied(n, pair.alphabet().size()),
    })
}

// ---------------------------------------------------------------------------
// Analysis constants and verification suites.
// ---------------------------------------------------------------------------

/// The sub-martingale constant induced by the truncation parameters:
/// `min((s - tau - 1)/(s + tau)^2, 1/(4 tau))`. Requires `tau >= 1` and
/// `s > tau + 1`.
pub fn derive_safe_constant(trunc: &TruncationParams) -> Result<Rat> {
    let tau = trunc.tau();
    let s = trunc.settled_value();
    if tau < &Rat::one() {
        return Err(Error::DegenerateParams("tau must be at least 1".into()));
    }
    if *s <= tau + Rat::one() {
        return Err(Error::DegenerateParams("settled value must exceed tau + 1".into()));
    }
    let settle_side = (s - tau - Rat::one()) / ((s + tau) * (s + tau));
    let band_side = (rat_int(4) * tau).recip();
    Ok(settle_side.min(band_side))
}

/// One-step conditional increment check at a cell/position: with exact
/// symbol probabilities under `d1 | cell`, tests
/// `E[W] >= c * E[W^2] - tol` for `W = tllr(child) - tllr(cell)`.
#[derive(Clone, Debug)]
pub struct OneStepCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn verify_one_step(
    pair: &DistPair,
    cell: &Cell,
    pos: usize,
    trunc: &TruncationParams,
    c: &Rat,
) -> Result<OneStepCheck> {
    let lr = pair.likelihood_ratio(cell)?;
    if is_settled(&lr, trunc) {
        return Err(Error::QueriesSettledSample { sample: 0 });
    }
    let d1_total = pair.d1.cell_mass(cell);
    if d1_total.is_zero() {
        return Err(Error::ZeroMass { cell: cell.to_string() });
    }
    let base = truncated_log_ratio(pair, cell, trunc)?;
    let mut lhs = 0.0;
    let mut sq = 0.0;
    for s in pair.alphabet().symbols() {
        let child = cell.fix(pos, s);
        let m1 = pair.d1.cell_mass(&child);
        if m1.is_zero() {
            continue;
        }
        let p1 = rat_to_f64(&(&m1 / &d1_total));
        let w = truncated_log_ratio(pair, &child, trunc)? - base;
        lhs += p1 * w;
        sq += p1 * w * w;
    }
    let rhs = rat_to_f64(c) * sq;
    let tol = 1e-9 * (1.0 + lhs.abs() + rhs.abs());
    Ok(OneStepCheck { lhs, rhs, holds: lhs >= rhs - tol })
}

#[derive(Clone, Debug, Default)]
pub struct SubmartingaleReport {
    pub vertices_checked: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

/// Walk every d1-reachable non-leaf vertex of `t` and check the one-step
/// sub-martingale inequality with `c = derive_safe_constant(trunc)`.
/// Errors if the tree ever queries a settled sample.
pub fn verify_submartingale(
    t: &DecisionTree,
    pair: &DistPair,
    trunc: &TruncationParams,
) -> Result<SubmartingaleReport> {
    let c = derive_safe_constant(trunc)?;
    let c_f = rat_to_f64(&c);
    let mut report = SubmartingaleReport { worst_margin: f64::INFINITY, ..Default::default() };

    fn visit(
        node: &Node,
        pair: &DistPair,
        trunc: &TruncationParams,
        c_f: f64,
        cells: &mut Vec<Cell>,
        report: &mut SubmartingaleReport,
    ) -> Result<()> {
        match node {
            Node::Leaf { .. } => Ok(()),
            Node::Dummy { child } => {
                // increment is identically zero at dummy vertices
                report.vertices_checked += 1;
                report.worst_margin = report.worst_margin.min(0.0);
                visit(child, pair, trunc, c_f, cells, report)
            }
            Node::Query { sample, pos, children } => {
                let j = *sample;
                let lr = pair.likelihood_ratio(&cells[j])?;
                if is_settled(&lr, trunc) {
                    return Err(Error::QueriesSettledSample { sample: j });
                }
                let d1_total = pair.d1.cell_mass(&cells[j]);
                let base = truncated_log_ratio(pair, &cells[j], trunc)?;
                let mut lhs = 0.0;
                let mut sq = 0.0;
                for sym in 0..children.len() {
                    let child_cell = cells[j].fix(*pos, sym as u8);
                    let m1 = pair.d1.cell_mass(&child_cell);
                    if m1.is_zero() {
                        continue;
                    }
                    let p1 = rat_to_f64(&(&m1 / &d1_total));
                    let w = truncated_log_ratio(pair, &child_cell, trunc)? - base;
                    lhs += p1 * w;
                    sq += p1 * w * w;
                }
                let rhs = c_f * sq;
                let margin = lhs - rhs;
                let tol = 1e-9 * (1.0 + lhs.abs() + rhs.abs());
                report.vertices_checked += 1;
                report.worst_margin = report.worst_margin.min(margin);
                if margin < -tol {
                    report.violations += 1;
                }
                for (sym, child) in children.iter().enumerate() {
                    let child_cell = cells[j].fix(*pos, sym as u8);
                    if pair.d1.cell_mass(&child_cell).is_zero() {
                        continue; // not d1-reachable
                    }
                    let saved = cells[j].clone();
                    cells[j] = child_cell;
                    visit(child, pair, trunc, c_f, cells, report)?;
                    cells[j] = saved;
                }
                Ok(())
            }
        }
    }

    let mut cells = vec![Cell::full(t.n()); t.k()];
    visit(t.root(), pair, trunc, c_f, &mut cells, &mut report)?;
    if report.vertices_checked == 0 {
        report.worst_margin = 0.0;
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct PhaseProgressReport {
    pub phase_starts_checked: usize,
    pub violations: usize,
    pub min_expected_increment: f64,
    pub target: f64,
}

/// For every d1-reachable phase-start vertex, compute the exact conditional
/// expected progress increment over the next `phase_depth` steps and compare
/// it against the configured target.
pub fn verify_phase_progress(
    bt: &BootstrapTree,
    cfg: &BootstrapConfig,
    pair: &DistPair,
) -> Result<PhaseProgressReport> {
    let mut report = PhaseProgressReport {
        phase_starts_checked: 0,
        violations: 0,
        min_expected_increment: f64::INFINITY,
        target: cfg.progress_target,
    };

    // conditional end-of-phase (mass, progress) pairs, exactly `levels` steps down
    fn gather(
        node: &Node,
        pair: &DistPair,
        trunc: &TruncationParams,
        cells: &mut Vec<Cell>,
        mass: Rat,
        levels: usize,
        out: &mut Vec<(Rat, f64)>,
    ) -> Result<()> {
        if levels == 0 {
            let pc = ProductCell { cells: cells.clone() };
            let settled = settled_count(pair, &pc, trunc)? as f64;
            let otllr = overall_truncated_log_ratio(pair, &pc, trunc)?;
            out.push((mass, settled + otllr));
            return Ok(());
        }
        match node {
            Node::Leaf { .. } => Err(Error::Invalid("leaf inside a phase body".into())),
            Node::Dummy { child } => gather(child, pair, trunc, cells, mass, levels - 1, out),
            Node::Query { sample, pos, children } => {
                let j = *sample;
                let d1_total = pair.d1.cell_mass(&cells[j]);
                for (sym, child) in children.iter().enumerate() {
                    let child_cell = cells[j].fix(*pos, sym as u8);
                    let m1 = pair.d1.cell_mass(&child_cell);
                    if m1.is_zero() {
                        continue;
                    }
                    let child_mass = &mass * &m1 / &d1_total;
                    let saved = cells[j].clone();
                    cells[j] = child_cell;
                    gather(child, pair, trunc, cells, child_mass, levels - 1, out)?;
                    cells[j] = saved;
                }
                Ok(())
            }
        }
    }

    fn walk(
        node: &Node,
        pair: &DistPair,
        cfg: &BootstrapConfig,
        cells: &mut Vec<Cell>,
        depth: usize,
        report: &mut PhaseProgressReport,
    ) -> Result<()> {
        if depth % cfg.phase_depth == 0 && !matches!(node, Node::Leaf { .. }) {
            let pc = ProductCell { cells: cells.clone() };
            let settled = settled_count(pair, &pc, &cfg.trunc)? as f64;
            let otllr = overall_truncated_log_ratio(pair, &pc, &cfg.trunc)?;
            let start_progress = settled + otllr;
            let mut ends: Vec<(Rat, f64)> = Vec::new();
            gather(node, pair, &cfg.trunc, cells, Rat::one(), cfg.phase_depth, &mut ends)?;
            let total: Rat = crate::ratio::rat_sum(ends.iter().map(|(m, _)| m));
            if !total.is_one() {
                return Err(Error::Invalid("phase body masses do not sum to 1".into()));
            }
            let mut expect = 0.0;
            for (m, p) in &ends {
                expect += rat_to_f64(m) * (p - start_progress);
            }
            report.phase_starts_checked += 1;
            report.min_expected_increment = report.min_expected_increment.min(expect);
            if expect < cfg.progress_target - 1e-9 * (1.0 + expect.abs()) {
                report.violations += 1;
            }
        }
        match node {
            Node::Leaf { .. } => Ok(()),
            Node::Dummy { child } => walk(child, pair, cfg, cells, depth + 1, report),
            Node::Query { sample, pos, children } => {
                for (sym, child) in children.iter().enumerate() {
                    let child_cell = cells[*sample].fix(*pos, sym as u8);
                    if pair.d1.cell_mass(&child_cell).is_zero() {
                        continue;
                    }
                    let saved = cells[*sample].clone();
                    cells[*sample] = child_cell;
                    walk(child, pair, cfg, cells, depth + 1, report)?;
                    cells[*sample] = saved;
                }
                Ok(())
            }
        }
    }

    let t = &bt.tree;
    let mut cells = vec![Cell::full(t.n()); t.k()];
    walk(t.root(), pair, cfg, &mut cells, 0, &mut report)?;
    if report.phase_starts_checked == 0 {
        report.min_expected_increment = 0.0;
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct HelperReport {
    pub evaluated: usize,
    pub violations: usize,
    /// Most negative value of `t ln t - (t-1) - t ln^2 t / (M+2)` seen.
    pub worst: f64,
}

/// Grid check of the scalar inequality
/// `t ln t - (t - 1) >= t ln^2 t / (M + 2)` for `t in (0, e^M]`.
pub fn helper_inequality_check(m_values: &[f64], points_per_m: usize) -> HelperReport {
    let evals = crate::par::par_map(m_values, |&m| {
        let cap = m.exp();
        let mut worst = f64::INFINITY;
        let mut violations = 0usize;
        for i in 1..=points_per_m {
            let t = cap * (i as f64) / (points_per_m as f64);
            let lt = t.ln();
            let h = t * lt - (t - 1.0) - t * lt * lt / (m + 2.0);
            worst = worst.min(h);
            if h < -1e-12 {
                violations += 1;
            }
        }
        (worst, violations)
    });
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for (w, v) in evals {
        worst = worst.min(w);
        violations += v;
    }
    HelperReport { evaluated: m_values.len() * points_per_m, violations, worst }
}

#[derive(Clone, Debug)]
pub struct WrongSettlementReport {
    /// Exact probability, per sample index, that a d1-input reaches a leaf
    /// with that component settled on the low side.
    pub per_sample_mass: Vec<Rat>,
    /// Each per-sample mass is at most `e^{-tau}` (exact comparison).
    pub bound_holds: bool,
    /// Sum of the per-sample masses divided by K: the expected wrongly
    /// settled fraction.
    pub expected_fraction: Rat,
}

/// The wrong-settlement bound: under d1-distributed samples, each component
/// ends below the band with probability at most `e^{-tau}`.
pub fn wrong_settlement_bound(
    t: &DecisionTree,
    pair: &DistPair,
    trunc: &TruncationParams,
) -> Result<WrongSettlementReport> {
    let k = t.k();
    let d1s: Vec<&Dist> = vec![&pair.d1; k];
    let d0s: Vec<&Dist> = vec![&pair.d0; k];
    let mut per_sample = vec![Rat::zero(); k];
    t.walk_leaves(&[d0s, d1s], &mut |ctx| {
        let mass1 = ctx.mass(1);
        if mass1.is_zero() {
            return;
        }
        for (j, acc) in per_sample.iter_mut().enumerate() {
            let lr = ctx.component_ratio(0, 1, j).expect("d1-positive component");
            if is_settled_low(&lr, trunc) {
                *acc += &mass1;
            }
        }
    });
    let minus_tau = -trunc.tau().clone();
    let bound_holds = per_sample.iter().all(|m| cmp_rat_exp(m, &minus_tau) == Ordering::Less);
    let expected_fraction =
        crate::ratio::rat_sum(per_sample.iter()) / Rat::from_integer((k as i64).into());
    Ok(WrongSettlementReport { per_sample_mass: per_sample, bound_holds, expected_fraction })
}

#[derive(Clone, Debug)]
pub struct UniformCert {
    pub check: BoosterCheck,
    pub hypothesis_ok: bool,
    pub bucket_starved: bool,
    /// Progress cap `(s+1) K` of the extended-run argument, recomputed from
    /// the configured parameters.
    pub progress_cap: Rat,
    /// Markov bound `(s+1)/(target * C)` on the probability of finishing
    /// below the cap.
    pub markov_bound: f64,
}

/// Build the bootstrapped tree and certify it as a uniform booster at the
/// target parameters.
pub fn certify_uniform(
    cfg: &BootstrapConfig,
    pair: &DistPair,
    source: &mut dyn BoosterSource,
    target: &BoosterParams,
) -> Result<UniformCert> {
    let bt = build_bootstrap_tree(cfg, pair, source)?;
    let check = check_uniform_booster(
        &bt.tree,
        pair,
        cfg.total_samples,
        &target.delta,
        &target.eps,
        &target.m,
    )?;
    let progress_cap = (cfg.trunc.settled_value() + Rat::one())
        * Rat::from_integer((cfg.total_samples as i64).into());
    let markov_bound = rat_to_f64(&(cfg.trunc.settled_value() + Rat::one()))
        / (cfg.progress_target * cfg.phase_multiplier as f64);
    Ok(UniformCert {
        check,
        hypothesis_ok: bt.hypothesis_ok,
        bucket_starved: bt.bucket_starved,
        progress_cap,
        markov_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Alphabet, PartialFunction};
    use crate::ratio::rat;

    fn dictator_pair() -> DistPair {
        let f = PartialFunction::dictator(2, 0);
        let d0 = Dist::uniform_on(2, Alphabet::binary(), &[vec![0, 0], vec![0, 1]]).unwrap();
        let d1 = Dist::uniform_on(2, Alphabet::binary(), &[vec![1, 0], vec![1, 1]]).unwrap();
        DistPair::new(f, d0, d1).unwrap()
    }

    /// xor_2 pair with skewed d1: settles only after both queries.
    fn skewed_xor_pair() -> DistPair {
        let f = PartialFunction::xor(2);
        let d0 = Dist::uniform_on(2, Alphabet::binary(), &[vec![0, 0], vec![1, 1]]).unwrap();
        let d1 = Dist::new(
            2,
            Alphabet::binary(),
            [(vec![0, 1], rat(2, 3)), (vec![1, 0], rat(1, 3))],
        )
        .unwrap();
        DistPair::new(f, d0, d1).unwrap()
    }

    fn toy_cfg(total: usize, depth: usize) -> BootstrapConfig {
        BootstrapConfig {
            total_samples: total,
            phase_samples: 1,
            phase_depth: depth,
            phase_multiplier: 2,
            trunc: TruncationParams::toy(),
            unsettled_floor: 1,
            booster_delta: rat(1, 10),
            booster_m: rat_int(2),
            progress_target: 0.001,
        }
    }

    #[test]
    fn derive_safe_constant_values() {
        // headline parameters: min(399/360000, 1/400) = 399/360000 >= 1/1000
        let c = derive_safe_constant(&TruncationParams::paper()).unwrap();
        assert_eq!(c, rat(399, 360000));
        assert!(c >= rat(1, 1000));
        // toy parameters: min(3/36, 1/4) = 1/12
        let c = derive_safe_constant(&TruncationParams::toy()).unwrap();
        assert_eq!(c, rat(1, 12));
        // degenerate: s <= tau + 1
        let bad = TruncationParams::new(rat_int(3), rat_int(4)).unwrap();
        assert!(matches!(derive_safe_constant(&bad), Err(Error::DegenerateParams(_))));
    }

    #[test]
    fn best_booster_settles_dictator_in_one_query() {
        let pair = dictator_pair();
        let (good, tree) = best_overall_booster(&pair, &Cell::full(2), 1, 1, &rat_int(2)).unwrap();
        assert_eq!(good, rat_int(1));
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn bootstrap_settles_everything_on_dictator() {
        let pair = dictator_pair();
        let cfg = toy_cfg(4, 1);
        let mut source = DpBoosterSource::new(cfg.booster_m.clone());
        let bt = build_bootstrap_tree(&cfg, &pair, &mut source).unwrap();
        assert!(!bt.hypothesis_ok); // desk scale is far below the hypothesis
        assert!(bt.tree.depth() <= cfg.max_phases() * cfg.phase_depth);
        let cert = certify_uniform(
            &cfg,
            &pair,
            &mut source,
            &BoosterParams::new(rat_int(0), rat_int(0), rat_int(2)).unwrap(),
        )
        .unwrap();
        assert!(cert.check.holds);
        assert_eq!(cert.check.good_mass, rat_int(1));
    }

    #[test]
    fn bootstrap_trace_on_skewed_xor() {
        let pair = skewed_xor_pair();
        let cfg = toy_cfg(3, 2);
        let mut source = DpBoosterSource::new(cfg.booster_m.clone());
        let run = run_bootstrap(&cfg, &pair, &[vec![0, 1], vec![1, 0], vec![0, 1]], &mut source).unwrap();
        assert_eq!(run.reason, HaltReason::FloorReached);
        assert_eq!(run.phases, 3);
        // each phase contributes exactly L trace steps
        assert_eq!(run.rows.len(), run.phases * cfg.phase_depth);
        let last = run.rows.last().unwrap();
        assert_eq!(last.settled, 3);
        assert!((last.progress - (3.0 + last.otllr)).abs() < 1e-12);
        for w in run.rows.windows(2) {
            assert!(w[1].settled >= w[0].settled);
        }
        let text = run.render_trace();
        assert!(text.starts_with("step phase settled otllr progress dummy?"));
    }

    #[test]
    fn trivial_halt_when_floor_not_met() {
        let pair = dictator_pair();
        let mut cfg = toy_cfg(2, 1);
        cfg.unsettled_floor = 5; // more than K
        let mut source = DpBoosterSource::new(cfg.booster_m.clone());
        let bt = build_bootstrap_tree(&cfg, &pair, &mut source).unwrap();
        assert_eq!(bt.tree.depth(), 0);
        let run = run_bootstrap(&cfg, &pair, &[vec![1, 0], vec![1, 1]], &mut source).unwrap();
        assert_eq!(run.reason, HaltReason::FloorReached);
        assert!(run.rows.is_empty());
    }

    #[test]
    fn submartingale_holds_on_bootstrap_trees() {
        for pair in [dictator_pair(), skewed_xor_pair()] {
            let cfg = toy_cfg(3, 2);
            let mut source = DpBoosterSource::new(cfg.booster_m.clone());
            let bt = build_bootstrap_tree(&cfg, &pair, &mut source).unwrap();
            let report = verify_submartingale(&bt.tree, &pair, &cfg.trunc).unwrap();
            assert_eq!(report.violations, 0, "worst margin {}", report.worst_margin);
            assert!(report.vertices_checked > 0);
        }
    }

    #[test]
    fn submartingale_rejects_settled_queries() {
        let pair = dictator_pair();
        // first query settles the sample; the second hits a settled sample
        let t = DecisionTree::new(
            1,
            2,
            Alphabet::binary(),
            Node::Query {
                sample: 0,
                pos: 0,
                children: vec![
                    Node::leaf(None),
                    Node::Query { sample: 0, pos: 1, children: vec![Node::leaf(None), Node::leaf(None)] },
                ],
            },
        )
        .unwrap();
        let err = verify_submartingale(&t, &pair, &TruncationParams::toy()).unwrap_err();
        assert!(matches!(err, Error::QueriesSettledSample { .. }));
    }

    #[test]
    fn phase_progress_on_toys() {
        for (pair, depth) in [(dictator_pair(), 1), (skewed_xor_pair(), 2)] {
            let cfg = toy_cfg(3, depth);
            let mut source = DpBoosterSource::new(cfg.booster_m.clone());
            let bt = build_bootstrap_tree(&cfg, &pair, &mut source).unwrap();
            let report = verify_phase_progress(&bt, &cfg, &pair).unwrap();
            assert_eq!(report.violations, 0, "min increment {}", report.min_expected_increment);
            assert!(report.phase_starts_checked > 0);
        }
    }

    #[test]
    fn helper_inequality_grid() {
        let report = helper_inequality_check(&[0.0, 0.5, 1.0, 2.0, 5.0], 2000);
        assert_eq!(report.violations, 0, "worst {}", report.worst);
        assert_eq!(report.evaluated, 10000);
    }

    #[test]
    fn wrong_settlement_examples() {
        // dictator: settling is always in the right direction under d1
        let pair = dictator_pair();
        let cfg = toy_cfg(2, 1);
        let mut source = DpBoosterSource::new(cfg.booster_m.clone());
        let bt = build_bootstrap_tree(&cfg, &pair, &mut source).unwrap();
        let report = wrong_settlement_bound(&bt.tree, &pair, &cfg.trunc).unwrap();
        assert!(report.bound_holds);
        assert!(report.per_sample_mass.iter().all(|m| m.is_zero()));
    }

    #[test]
    fn wrong_settlement_positive_mass_case() {
        // xor_3 pair where a two-fixed cell settles low with d1 mass 1/20
        let f = PartialFunction::xor(3);
        let d0 = Dist::uniform_on(
            3,
            Alphabet::binary(),
            &[vec![0, 0, 0], vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]],
        )
        .unwrap();
        let d1 = Dist::new(
            3,
            Alphabet::binary(),
            [
                (vec![0, 0, 1], rat(1, 20)),
                (vec![0, 1, 0], rat(3, 20)),
                (vec![1, 0, 0], rat(6, 20)),
                (vec![1, 1, 1], rat(10, 20)),
            ],
        )
        .unwrap();
        let pair = DistPair::new(f, d0, d1).unwrap();
        let c = Cell::parse("00*", pair.alphabet()).unwrap();
        let lr = pair.likelihood_ratio(&c).unwrap();
        assert!(is_settled_low(&lr, &TruncationParams::toy()));

        let cfg = BootstrapConfig { phase_depth: 3, ..toy_cfg(2, 3) };
        let mut source = DpBoosterSource::new(cfg.booster_m.clone());
        let bt = build_bootstrap_tree(&cfg, &pair, &mut source).unwrap();
        let report = wrong_settlement_bound(&bt.tree, &pair, &cfg.trunc).unwrap();
        assert!(report.bound_holds);
        let _ = verify_submartingale(&bt.tree, &pair, &cfg.trunc).unwrap();
    }

    #[test]
    fn certify_uniform_flags_hypothesis_violation() {
        let pair = dictator_pair();
        let mut cfg = toy_cfg(2, 1);
        cfg.unsettled_floor = 10;
        let mut source = DpBoosterSource::new(cfg.booster_m.clone());
        let cert = certify_uniform(
            &cfg,
            &pair,
            &mut source,
            &BoosterParams::new(rat(1, 10), rat(1, 10), rat_int(2)).unwrap(),
        )
        .unwrap();
        assert!(!cert.hypothesis_ok);
        assert!(!cert.check.holds); // vacuous tree settles nothing
    }
}
