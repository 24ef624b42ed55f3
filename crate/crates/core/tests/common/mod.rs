//! Shared fixtures and independent brute-force oracles for the integration
//! suites. Oracles here recompute values by enumeration, never through the
//! code paths they check.

use qclab::domain::{Alphabet, Dist, DistPair, FValue, PartialFunction, Word};
use qclab::ratio::{rat_sum, Rat};
use num_traits::{One, Zero};

pub fn parity_pair() -> DistPair {
    let f = PartialFunction::xor(2);
    let d0 = Dist::uniform_on(2, Alphabet::binary(), &[vec![0, 0], vec![1, 1]]).unwrap();
    let d1 = Dist::uniform_on(2, Alphabet::binary(), &[vec![0, 1], vec![1, 0]]).unwrap();
    DistPair::new(f, d0, d1).unwrap()
}

pub fn dictator_pair() -> DistPair {
    let f = PartialFunction::dictator(2, 0);
    let d0 = Dist::uniform_on(2, Alphabet::binary(), &[vec![0, 0], vec![0, 1]]).unwrap();
    let d1 = Dist::uniform_on(2, Alphabet::binary(), &[vec![1, 0], vec![1, 1]]).unwrap();
    DistPair::new(f, d0, d1).unwrap()
}

/// Fractional block sensitivity at `x` by exhaustive vertex enumeration of
/// the packing polytope: every subset of tight constraints is solved by
/// Gaussian elimination over exact rationals and feasible vertices are
/// scanned for the best objective. Independent of the simplex path.
pub fn fbs_vertex_enumeration(f: &PartialFunction, x: &Word) -> Rat {
    let n = f.arity();
    let fx = f.value(x);
    if fx == FValue::Undefined {
        return Rat::zero();
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for mask in 1u32..(1 << n) {
        let block: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let mut y = x.clone();
        for &i in &block {
            y[i] ^= 1;
        }
        let fy = f.value(&y);
        if fy != FValue::Undefined && fy != fx {
            blocks.push(block);
        }
    }
    let nv = blocks.len();
    if nv == 0 {
        return Rat::zero();
    }
    // constraint rows: n position constraints (sum_{B ni i} w_B <= 1) and nv
    // nonnegativity constraints (-w_j <= 0)
    let mut rows: Vec<(Vec<Rat>, Rat)> = Vec::new();
    for i in 0..n {
        let row: Vec<Rat> = blocks
            .iter()
            .map(|b| if b.contains(&i) { Rat::one() } else { Rat::zero() })
            .collect();
        rows.push((row, Rat::one()));
    }
    for j in 0..nv {
        let mut row = vec![Rat::zero(); nv];
        row[j] = -Rat::one();
        rows.push((row, Rat::zero()));
    }

    let mut best = Rat::zero();
    // choose nv constraints to be tight and solve the square system
    let idx: Vec<usize> = (0..rows.len()).collect();
    for combo in combinations(&idx, nv) {
        let mut a: Vec<Vec<Rat>> = combo.iter().map(|&i| rows[i].0.clone()).collect();
        let mut b: Vec<Rat> = combo.iter().map(|&i| rows[i].1.clone()).collect();
        if let Some(w) = solve_square(&mut a, &mut b) {
            // feasibility against all constraints
            let feasible = rows.iter().all(|(row, rhs)| {
                let lhs: Rat = rat_sum(
                    row.iter().zip(&w).map(|(r, wi)| r * wi).collect::<Vec<_>>().iter(),
                );
                lhs <= *rhs
            });
            if feasible {
                let value: Rat = rat_sum(w.iter());
                if value > best {
                    best = value;
                }
            }
        }
    }
    best
}

fn combinations(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![Vec::new()];
    }
    if items.len() < size {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], size - 1) {
            rest.insert(0, x);
            out.push(rest);
        }
    }
    out
}

/// Gaussian elimination over exact rationals; None when singular.
fn solve_square(a: &mut [Vec<Rat>], b: &mut [Rat]) -> Option<Vec<Rat>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = a[col][col].clone();
        for v in a[col].iter_mut() {
            *v = &*v / &inv;
        }
        b[col] = &b[col] / &inv;
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone();
            for c2 in 0..n {
                let delta = &a[col][c2] * &factor;
                a[r][c2] -= delta;
            }
            let delta = &b[col] * &factor;
            b[r] -= delta;
        }
    }
    Some(b.to_vec())
}

/// Report one acceptance line.
pub fn report(criterion: &str, pass: bool) {
    println!("[{}] {}", if pass { "PASS" } else { "FAIL" }, criterion);
    assert!(pass, "{criterion}");
}
