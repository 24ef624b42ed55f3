//! Block sensitivity and its fractional (LP-relaxed) variant, with explicit
//! certificates.

use super::lp::lp_solve;
use super::Caps;
use crate::domain::{FValue, PartialFunction, Word};
use crate::error::{Error, Result};
use crate::ratio::{fmt_rat, Rat};
use num_traits::{One, Zero};

/// Witness for a fractional-block-sensitivity value: a base input, its
/// sensitive blocks, and feasible LP weights summing to the optimum.
#[derive(Clone, Debug)]
pub struct FbsCertificate {
    pub witness: Word,
    pub blocks: Vec<Vec<usize>>,
    pub weights: Vec<Rat>,
    pub value: Rat,
}

impl FbsCertificate {
    /// Re-check feasibility and the claimed value from scratch.
    pub fn verify(&self, f: &PartialFunction) -> Result<()> {
        let n = f.arity();
        if self.blocks.len() != self.weights.len() {
            return Err(Error::Invalid("certificate length mismatch".into()));
        }
        for (b, w) in self.blocks.iter().zip(&self.weights) {
            if w < &Rat::zero() || w > &Rat::one() {
                return Err(Error::Invalid(format!("weight {} outside [0,1]", fmt_rat(w))));
            }
            let flipped = flip(&self.witness, b);
            let (v0, v1) = (f.value(&self.witness), f.value(&flipped));
            if v0 == FValue::Undefined || v1 == FValue::Undefined || v0 == v1 {
                return Err(Error::Invalid(format!("block {b:?} is not sensitive")));
            }
        }
        for i in 0..n {
            let mut load = Rat::zero();
            for (b, w) in self.blocks.iter().zip(&self.weights) {
                if b.contains(&i) {
                    load += w;
                }
            }
            if load > Rat::one() {
                return Err(Error::Invalid(format!("position {i} overloaded: {}", fmt_rat(&load))));
            }
        }
        let total: Rat = crate::ratio::rat_sum(self.weights.iter());
        if total != self.value {
            return Err(Error::Invalid("weights do not sum to the claimed value".into()));
        }
        Ok(())
    }
}

fn flip(x: &Word, block: &[usize]) -> Word {
    let mut y = x.clone();
    for &i in block {
        y[i] ^= 1;
    }
    y
}

/// All nonempty blocks sensitive at `x`: both endpoints defined with
/// different values. Binary alphabet only.
pub fn sensitive_blocks(f: &PartialFunction, x: &Word) -> Result<Vec<Vec<usize>>> {
    if f.alphabet().size() != 2 {
        return Err(Error::Invalid("block sensitivity needs a binary alphabet".into()));
    }
    let fx = f.value(x);
    if fx == FValue::Undefined {
        return Ok(Vec::new());
    }
    let n = f.arity();
    let mut blocks = Vec::new();
    for mask in 1u32..(1 << n) {
        let block: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let fy = f.value(&flip(x, &block));
        if fy != FValue::Undefined && fy != fx {
            blocks.push(block);
        }
    }
    Ok(blocks)
}

fn max_disjoint_packing(blocks: &[u32]) -> usize {
    fn go(blocks: &[u32], idx: usize, used: u32, count: usize, best: &mut usize) {
        *best = (*best).max(count);
        if idx == blocks.len() || count + (blocks.len() - idx) <= *best {
            return;
        }
        if blocks[idx] & used == 0 {
            go(blocks, idx + 1, used | blocks[idx], count + 1, best);
        }
        go(blocks, idx + 1, used, count, best);
    }
    let mut best = 0;
    go(blocks, 0, 0, 0, &mut best);
    best
}

/// Block sensitivity: the maximum number of pairwise-disjoint sensitive
/// blocks over all defined inputs, with a witness input.
pub fn bs(f: &PartialFunction, caps: &Caps) -> Result<(usize, Word)> {
    caps.check_cells(f.arity(), f.alphabet())?;
    let mut best = 0usize;
    let mut witness = vec![0u8; f.arity()];
    for x in f.defined_inputs() {
        let masks: Vec<u32> = sensitive_blocks(f, &x)?
            .iter()
            .map(|b| b.iter().fold(0u32, |m, &i| m | 1 << i))
            .collect();
        let v = max_disjoint_packing(&masks);
        if v > best {
            best = v;
            witness = x;
        }
    }
    Ok((best, witness))
}

/// Fractional block sensitivity at one input, by the exact packing LP.
pub fn fbs_at(f: &PartialFunction, x: &Word) -> Result<FbsCertificate> {
    let blocks = sensitive_blocks(f, x)?;
    if blocks.is_empty() {
        return Ok(FbsCertificate { witness: x.clone(), blocks, weights: Vec::new(), value: Rat::zero() });
    }
    let objective = vec![Rat::one(); blocks.len()];
    let constraints: Vec<(Vec<Rat>, Rat)> = (0..f.arity())
        .map(|i| {
            let row = blocks
                .iter()
                .map(|b| if b.contains(&i) { Rat::one() } else { Rat::zero() })
                .collect();
            (row, Rat::one())
        })
        .collect();
    let sol = lp_solve(&objective, &constraints)?;
    let cert = FbsCertificate { witness: x.clone(), blocks, weights: sol.primal, value: sol.value };
    cert.verify(f)?;
    Ok(cert)
}

/// Fractional block sensitivity: the LP optimum maximized over all defined
/// inputs (first maximizer in enumeration order wins ties).
pub fn fbs(f: &PartialFunction, caps: &Caps) -> Result<FbsCertificate> {
    caps.check_cells(f.arity(), f.alphabet())?;
    let mut best: Option<FbsCertificate> = None;
    for x in f.defined_inputs() {
        let cert = fbs_at(f, &x)?;
        best = match best {
            None => Some(cert),
            Some(b) if cert.value > b.value => Some(cert),
            Some(b) => Some(b),
        };
    }
    best.ok_or_else(|| Error::Invalid("function has no defined inputs".into()))
}
