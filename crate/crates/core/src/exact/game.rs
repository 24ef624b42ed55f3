//! Tiny-instance randomized query complexity via the zero-sum game between
//! depth-bounded deterministic trees and worst-case inputs, solved with the
//! exact LP.

use super::lp::lp_solve;
use super::Caps;
use crate::domain::{FValue, PartialFunction};
use crate::error::{Error, Result};
use crate::ratio::{Rat, rat_int};
use num_traits::One;
use std::collections::{BTreeSet, HashMap};

/// Output maps (bitmask over the 2^n inputs) realizable by deterministic
/// trees of depth `<= q` querying positions from `avail`.
fn strategy_maps(n: usize, avail: u32, q: usize, memo: &mut HashMap<(u32, usize), BTreeSet<u64>>) -> BTreeSet<u64> {
    if let Some(s) = memo.get(&(avail, q)) {
        return s.clone();
    }
    let all_inputs: u64 = if n == 6 { u64::MAX } else { (1u64 << (1 << n)) - 1 };
    let mut out = BTreeSet::new();
    out.insert(0u64);
    out.insert(all_inputs);
    if q > 0 {
        for i in 0..n {
            if avail >> i & 1 == 0 {
                continue;
            }
            // mask of inputs whose bit i is 1 (input index is the radix
            // encoding with position 0 most significant)
            let shift = n - 1 - i;
            let mut hi_mask = 0u64;
            for x in 0..(1usize << n) {
                if x >> shift & 1 == 1 {
                    hi_mask |= 1 << x;
                }
            }
            let sub = strategy_maps(n, avail & !(1 << i), q - 1, memo);
            for &m0 in &sub {
                for &m1 in &sub {
                    out.insert((m0 & !hi_mask) | (m1 & hi_mask));
                }
            }
        }
    }
    memo.insert((avail, q), out.clone());
    out
}

#[derive(Clone, Debug)]
pub struct RdtReport {
    /// Least depth whose game value reaches `1 - eps`.
    pub depth: usize,
    /// Exact game value at that depth.
    pub value: Rat,
    /// Game values at every smaller depth, for reporting.
    pub values_by_depth: Vec<Rat>,
}

/// Exact value of the correctness game: tree chooser mixes over the strategy
/// maps, input chooser picks a defined input.
fn game_value(f: &PartialFunction, maps: &BTreeSet<u64>) -> Result<Rat> {
    let inputs: Vec<usize> = f
        .defined_inputs()
        .iter()
        .map(|w| crate::domain::word_index(w, f.alphabet()))
        .collect();
    if inputs.is_empty() {
        return Ok(Rat::one());
    }
    let values: Vec<bool> = f
        .defined_inputs()
        .iter()
        .map(|w| f.value(w) == FValue::One)
        .collect();
    // Shifted payoff in {1, 2} keeps the game value positive, which the
    // standard LP reduction requires; subtract the shift at the end.
    // Column player (input chooser) program: max 1.y s.t. A y <= 1.
    let constraints: Vec<(Vec<Rat>, Rat)> = maps
        .iter()
        .map(|&m| {
            let row = inputs
                .iter()
                .zip(&values)
                .map(|(&x, &v)| {
                    let predicts_one = m >> x & 1 == 1;
                    if predicts_one == v {
                        rat_int(2)
                    } else {
                        rat_int(1)
                    }
                })
                .collect();
            (row, Rat::one())
        })
        .collect();
    let objective = vec![Rat::one(); inputs.len()];
    let sol = lp_solve(&objective, &constraints)?;
    Ok(sol.value.recip() - Rat::one())
}

/// Randomized eps-error query complexity of `f` for `n <= 3`, as the least
/// depth whose minimax correctness reaches `1 - eps`.
pub fn rdt_tiny(f: &PartialFunction, eps: &Rat, _caps: &Caps) -> Result<RdtReport> {
    let n = f.arity();
    if n > 3 || f.alphabet().size() != 2 {
        return Err(Error::CapExceeded { size: n as u64, cap: 3 });
    }
    let target = Rat::one() - eps;
    let mut memo = HashMap::new();
    let avail = (1u32 << n) - 1;
    let mut values = Vec::new();
    for q in 0..=n {
        let v = if q == n {
            // the exact full tree is among the depth-n strategies
            Rat::one()
        } else {
            let maps = strategy_maps(n, avail, q, &mut memo);
            game_value(f, &maps)?
        };
        values.push(v.clone());
        if v >= target {
            return Ok(RdtReport { depth: q, value: v, values_by_depth: values });
        }
    }
    Err(Error::Invalid("full-depth game value below target".into()))
}
