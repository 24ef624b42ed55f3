//! Exact complexity measures at desk scale: deterministic and distributional
//! query complexity, the correlated-samples variant, block sensitivity and
//! its LP relaxation, and a minimax solver for tiny randomized complexity.

pub mod game;
pub mod lp;
pub mod sensitivity;

pub use game::rdt_tiny;
pub use lp::{lp_solve, LpSolution};
pub use sensitivity::{bs, fbs, fbs_at, sensitive_blocks, FbsCertificate};

use crate::domain::{Alphabet, Cell, Dist, DistPair, FValue, PartialFunction, Word, FREE};
use crate::dtree::{DecisionTree, LeafLabel, Node};
use crate::error::{Error, Result};
use crate::ratio::{rat, Rat};
use num_traits::Zero;
use std::collections::HashMap;

/// Size caps for the exponential enumerations; `QCLAB_CAP` overrides the
/// default through the CLI.
#[derive(Clone, Copy, Debug)]
pub struct Caps {
    pub state_budget: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { state_budget: 4_000_000 }
    }
}

impl Caps {
    /// Guard `(|Sigma|+1)^n` table sizes.
    pub fn check_cells(&self, n: usize, alphabet: Alphabet) -> Result<u64> {
        let base = alphabet.size() as u64 + 1;
        let mut size = 1u64;
        for _ in 0..n {
            size = size.saturating_mul(base);
            if size > self.state_budget {
                return Err(Error::CapExceeded { size, cap: self.state_budget });
            }
        }
        Ok(size)
    }
}

fn cell_index(cell: &Cell, alphabet: Alphabet) -> usize {
    let base = alphabet.size() as usize + 1;
    let mut idx = 0usize;
    for pos in 0..cell.n() {
        let digit = match cell.get(pos) {
            Some(s) => s as usize,
            None => base - 1,
        };
        idx = idx * base + digit;
    }
    idx
}

/// Mass of defined inputs inside `cell` whose value is `bit`.
fn value_mass(f: &PartialFunction, d: &Dist, cell: &Cell, bit: bool) -> Rat {
    let mut acc = Rat::zero();
    for (w, p) in d.support() {
        if cell.matches(w) && f.value(w) == FValue::bit(bit) {
            acc += p;
        }
    }
    acc
}

/// Minimal depth of a deterministic tree computing `f` exactly on its domain.
pub fn dt_exact(f: &PartialFunction, caps: &Caps) -> Result<usize> {
    caps.check_cells(f.arity(), f.alphabet())?;
    let mut memo: HashMap<usize, usize> = HashMap::new();
    fn go(f: &PartialFunction, cell: &Cell, memo: &mut HashMap<usize, usize>) -> usize {
        let idx = cell_index(cell, f.alphabet());
        if let Some(&v) = memo.get(&idx) {
            return v;
        }
        let mut seen: Option<FValue> = None;
        let mut constant = true;
        for w in crate::domain::enumerate_words(f.arity(), f.alphabet()) {
            if !cell.matches(&w) {
                continue;
            }
            let v = f.value(&w);
            if v == FValue::Undefined {
                continue;
            }
            match seen {
                None => seen = Some(v),
                Some(s) if s != v => {
                    constant = false;
                    break;
                }
                _ => {}
            }
        }
        let out = if constant {
            0
        } else {
            let mut best = usize::MAX;
            for i in cell.free_positions() {
                let worst = f
                    .alphabet()
                    .symbols()
                    .map(|s| go(f, &cell.fix(i, s), memo))
                    .max()
                    .unwrap();
                best = best.min(1 + worst);
            }
            best
        };
        memo.insert(idx, out);
        out
    }
    Ok(go(f, &Cell::full(f.arity()), &mut memo))
}

/// Minimal error mass of a depth-`<= q` deterministic tree predicting `f` on
/// `x ~ d`. Undefined inputs never contribute error.
pub fn min_error(f: &PartialFunction, d: &Dist, q: usize, caps: &Caps) -> Result<Rat> {
    caps.check_cells(f.arity(), f.alphabet())?;
    let mut memo = HashMap::new();
    Ok(min_error_rec(f, d, &Cell::full(f.arity()), q, &mut memo))
}

fn min_error_rec(
    f: &PartialFunction,
    d: &Dist,
    cell: &Cell,
    q: usize,
    memo: &mut HashMap<(usize, usize), Rat>,
) -> Rat {
    let key = (cell_index(cell, f.alphabet()), q);
    if let Some(v) = memo.get(&key) {
        return v.clone();
    }
    // stopping: guess the value with less wrong mass, ties to 0
    let wrong_if_guess0 = value_mass(f, d, cell, true);
    let wrong_if_guess1 = value_mass(f, d, cell, false);
    let mut best = wrong_if_guess0.min(wrong_if_guess1);
    if q > 0 {
        for i in cell.free_positions() {
            let mut total = Rat::zero();
            for s in f.alphabet().symbols() {
                let child = cell.fix(i, s);
                if d.cell_mass(&child).is_zero() {
                    continue;
                }
                total += min_error_rec(f, d, &child, q - 1, memo);
            }
            if total < best {
                best = total;
            }
        }
    }
    memo.insert(key, best.clone());
    best
}

/// Witness tree achieving `min_error(f, d, q)`; leaves labelled with the
/// guessed bit (Accept = 1). Ties break toward stopping, then the lowest
/// position index, then the lowest guess.
pub fn min_error_tree(f: &PartialFunction, d: &Dist, q: usize, caps: &Caps) -> Result<(Rat, DecisionTree)> {
    caps.check_cells(f.arity(), f.alphabet())?;
    let mut memo = HashMap::new();
    let err = min_error_rec(f, d, &Cell::full(f.arity()), q, &mut memo);
    fn build(
        f: &PartialFunction,
        d: &Dist,
        cell: &Cell,
        q: usize,
        memo: &mut HashMap<(usize, usize), Rat>,
    ) -> Node {
        let target = min_error_rec(f, d, cell, q, memo);
        let wrong_if_guess0 = value_mass(f, d, cell, true);
        let wrong_if_guess1 = value_mass(f, d, cell, false);
        if wrong_if_guess0 <= wrong_if_guess1 && wrong_if_guess0 == target {
            return Node::leaf(Some(LeafLabel::Reject));
        }
        if wrong_if_guess1 == target {
            return Node::leaf(Some(LeafLabel::Accept));
        }
        for i in cell.free_positions() {
            let mut total = Rat::zero();
            for s in f.alphabet().symbols() {
                let child = cell.fix(i, s);
                if d.cell_mass(&child).is_zero() {
                    continue;
                }
                total += min_error_rec(f, d, &child, q - 1, memo);
            }
            if total == target {
                let children = f
                    .alphabet()
                    .symbols()
                    .map(|s| {
                        let child = cell.fix(i, s);
                        if d.cell_mass(&child).is_zero() {
                            // unreachable under d; keep a stub leaf
                            Node::leaf(Some(LeafLabel::Reject))
                        } else {
                            build(f, d, &child, q - 1, memo)
                        }
                    })
                    .collect();
                return Node::Query { sample: 0, pos: i, children };
            }
        }
        unreachable!("some choice achieves the memoized optimum")
    }
    let root = build(f, d, &Cell::full(f.arity()), q, &mut memo);
    let tree = DecisionTree::new(1, f.arity(), f.alphabet(), root)?;
    Ok((err, tree))
}

/// Least `q` with `min_error(f, d, q) <= eps`.
pub fn dt_eps(f: &PartialFunction, d: &Dist, eps: &Rat, caps: &Caps) -> Result<usize> {
    for q in 0..=f.arity() {
        if min_error(f, d, q, caps)? <= *eps {
            return Ok(q);
        }
    }
    Err(Error::Invalid("distribution puts mass on undefined inputs".into()))
}

// ---------------------------------------------------------------------------
// Correlated-samples distributional complexity via the product-cell DP.
// ---------------------------------------------------------------------------

/// Canonical key of a multiset of cells.
fn state_key(cells: &[Cell]) -> Vec<u8> {
    let mut keys: Vec<&[u8]> = cells.iter().map(|c| c.key()).collect();
    keys.sort();
    let mut out = Vec::with_capacity(cells.len() * (cells[0].n() + 1));
    for k in keys {
        out.extend_from_slice(k);
        out.push(FREE); // separator
    }
    out
}

struct CorrDp<'a> {
    pair: &'a DistPair,
    memo: HashMap<(Vec<u8>, usize), Rat>,
    cell_masses: HashMap<Vec<u8>, (Rat, Rat)>,
    states: u64,
    budget: u64,
}

impl<'a> CorrDp<'a> {
    fn new(pair: &'a DistPair, budget: u64) -> Self {
        CorrDp { pair, memo: HashMap::new(), cell_masses: HashMap::new(), states: 0, budget }
    }

    fn masses(&mut self, cell: &Cell) -> (Rat, Rat) {
        if let Some(m) = self.cell_masses.get(cell.key()) {
            return m.clone();
        }
        let m = (self.pair.d0.cell_mass(cell), self.pair.d1.cell_mass(cell));
        self.cell_masses.insert(cell.key().to_vec(), m.clone());
        m
    }

    /// Minimal error mass for deciding `d0^k` vs `d1^k` (each weighted 1/2)
    /// within `q` further queries from the given product state.
    fn err(&mut self, cells: &[Cell], q: usize) -> Result<Rat> {
        let key = (state_key(cells), q);
        if let Some(v) = self.memo.get(&key) {
            return Ok(v.clone());
        }
        self.states += 1;
        if self.states > self.budget {
            return Err(Error::CapExceeded { size: self.states, cap: self.budget });
        }
        let half = rat(1, 2);
        let mut w0 = half.clone();
        let mut w1 = half;
        for c in cells {
            let (m0, m1) = self.masses(c);
            w0 *= m0;
            w1 *= m1;
        }
        let mut best = w0.min(w1);
        if q > 0 && !best.is_zero() {
            let mut seen = std::collections::BTreeSet::new();
            for (j, cell) in cells.iter().enumerate() {
                if !seen.insert(cell.key().to_vec()) {
                    continue; // identical cells are exchangeable
                }
                for i in cell.free_positions() {
                    let mut total = Rat::zero();
                    for s in self.pair.alphabet().symbols() {
                        let child = cell.fix(i, s);
                        let (m0, m1) = self.masses(&child);
                        if m0.is_zero() && m1.is_zero() {
                            continue;
                        }
                        let mut next: Vec<Cell> = cells.to_vec();
                        next[j] = child;
                        total += self.err(&next, q - 1)?;
                        if total >= best {
                            break; // cannot improve
                        }
                    }
                    if total < best {
                        best = total;
                    }
                }
            }
        }
        self.memo.insert(key, best.clone());
        Ok(best)
    }
}

/// Minimal error of a depth-`<= q` tree for the correlated `k`-samples
/// problem on `1/2 d0^k + 1/2 d1^k`.
pub fn corr_min_error(pair: &DistPair, k: usize, q: usize, caps: &Caps) -> Result<Rat> {
    let mut dp = CorrDp::new(pair, caps.state_budget);
    let cells = vec![Cell::full(pair.n()); k];
    dp.err(&cells, q)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorrCost {
    pub cost: usize,
    pub k: usize,
}

/// `corr_eps`: least query budget over `k <= k_max` samples achieving error
/// `<= eps`; returns the budget and the least sufficient `k`.
pub fn corr_eps(pair: &DistPair, eps: &Rat, k_max: usize, q_cap: usize, caps: &Caps) -> Result<CorrCost> {
    for q in 0..=q_cap {
        // q queries touch at most q samples, so larger k cannot help
        for k in 1..=k_max.min(q.max(1)) {
            if corr_min_error(pair, k, q, caps)? <= *eps {
                return Ok(CorrCost { cost: q, k });
            }
        }
    }
    Err(Error::CapExceeded { size: q_cap as u64 + 1, cap: q_cap as u64 })
}

/// Witness tester for the correlated `k`-samples problem at depth `<= q`:
/// leaves accept (claim the `d1` side) wherever the posterior favours it.
pub fn corr_min_error_tree(pair: &DistPair, k: usize, q: usize, caps: &Caps) -> Result<(Rat, DecisionTree)> {
    let mut dp = CorrDp::new(pair, caps.state_budget);
    let start = vec![Cell::full(pair.n()); k];
    let err = dp.err(&start, q)?;

    fn build(dp: &mut CorrDp, cells: &[Cell], q: usize) -> Result<Node> {
        let target = dp.err(cells, q)?;
        let half = rat(1, 2);
        let mut w0 = half.clone();
        let mut w1 = half;
        for c in cells {
            let (m0, m1) = dp.masses(c);
            w0 *= m0;
            w1 *= m1;
        }
        let stop_err = w0.clone().min(w1.clone());
        if stop_err == target {
            // accepting (claiming the d1 side) errs on the leaf's d0 mass and
            // vice versa; ties guess the 0 side
            let label = if w1 <= w0 { LeafLabel::Reject } else { LeafLabel::Accept };
            return Ok(Node::leaf(Some(label)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (j, cell) in cells.iter().enumerate() {
            if !seen.insert(cell.key().to_vec()) {
                continue;
            }
            for i in cell.free_positions() {
                let mut total = Rat::zero();
                for s in dp.pair.alphabet().symbols() {
                    let child = cell.fix(i, s);
                    let (m0, m1) = dp.masses(&child);
                    if m0.is_zero() && m1.is_zero() {
                        continue;
                    }
                    let mut next: Vec<Cell> = cells.to_vec();
                    next[j] = child;
                    total += dp.err(&next, q - 1)?;
                }
                if total == target {
                    let mut children = Vec::new();
                    for s in dp.pair.alphabet().symbols() {
                        let child = cell.fix(i, s);
                        let (m0, m1) = dp.masses(&child);
                        if m0.is_zero() && m1.is_zero() {
                            children.push(Node::leaf(Some(LeafLabel::Reject)));
                        } else {
                            let mut next: Vec<Cell> = cells.to_vec();
                            next[j] = child;
                            children.push(build(dp, &next, q - 1)?);
                        }
                    }
                    return Ok(Node::Query { sample: j, pos: i, children });
                }
            }
        }
        unreachable!("some choice achieves the memoized optimum")
    }

    let root = build(&mut dp, &start, q)?;
    let tree = DecisionTree::new(k, pair.n(), pair.alphabet(), root)?;
    Ok((err, tree))
}

// ---------------------------------------------------------------------------
// The hard-bulk / easy-rare mixture distribution for xor_n.
// ---------------------------------------------------------------------------

/// The xor_n input distribution mixing a hard bulk (`0 U^{n-1}`, 99%) with a
/// rare easy part (`1 U 0^{n-2}`, 1%).
pub fn shaltiel_intro(n: usize) -> Result<(PartialFunction, Dist)> {
    if n < 3 {
        return Err(Error::Invalid("needs n >= 3".into()));
    }
    let f = PartialFunction::xor(n);
    let alphabet = Alphabet::binary();
    let mut entries: Vec<(Word, Rat)> = Vec::new();
    let bulk = rat(99, 100) * Rat::new(1.into(), num_bigint::BigInt::from(1u64 << (n - 1)));
    for tail in crate::domain::enumerate_words(n - 1, alphabet) {
        let mut w = vec![0u8];
        w.extend(tail);
        entries.push((w, bulk.clone()));
    }
    let easy = rat(1, 100) * rat(1, 2);
    for b in 0..2u8 {
        let mut w = vec![1u8, b];
        w.extend(vec![0u8; n - 2]);
        entries.push((w, easy.clone()));
    }
    let d = Dist::new(n, alphabet, entries)?;
    Ok((f, d))
}

/// The intro distribution split into its balanced conditional pair.
pub fn shaltiel_intro_pair(n: usize) -> Result<DistPair> {
    let (f, d) = shaltiel_intro(n)?;
    DistPair::split(f, &d)
}
