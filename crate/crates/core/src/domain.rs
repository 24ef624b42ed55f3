//! Domain types: alphabets, partial functions, exact distributions,
//! restriction cells, and likelihood ratios.

use crate::error::{Error, Result};
use crate::ratio::{cmp_rat_exp, fmt_rat, parse_rat, Rat};
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

/// Finite input alphabet; symbols are `0..size`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alphabet {
    size: u8,
}

impl Alphabet {
    pub fn new(size: u8) -> Result<Alphabet> {
        if !(2..=10).contains(&size) {
            return Err(Error::Invalid(format!("alphabet size {size} not in 2..=10")));
        }
        Ok(Alphabet { size })
    }

    pub fn binary() -> Alphabet {
        Alphabet { size: 2 }
    }

    pub fn size(&self) -> u8 {
        self.size
    }

    pub fn symbols(&self) -> impl Iterator<Item = u8> {
        0..self.size
    }
}

/// An input string over the alphabet.
pub type Word = Vec<u8>;

pub fn word_to_string(w: &[u8]) -> String {
    w.iter().map(|s| char::from(b'0' + s)).collect()
}

pub fn word_from_str(s: &str, alphabet: Alphabet) -> Result<Word> {
    s.chars()
        .map(|c| match c.to_digit(10) {
            Some(d) if (d as u8) < alphabet.size() => Ok(d as u8),
            _ => Err(Error::Invalid(format!("bad symbol {c:?} for alphabet of size {}", alphabet.size()))),
        })
        .collect()
}

/// Radix encoding of a word, position 0 most significant.
pub fn word_index(w: &[u8], alphabet: Alphabet) -> usize {
    w.iter().fold(0usize, |acc, &s| acc * alphabet.size() as usize + s as usize)
}

pub fn index_word(mut idx: usize, n: usize, alphabet: Alphabet) -> Word {
    let mut w = vec![0u8; n];
    for i in (0..n).rev() {
        w[i] = (idx % alphabet.size() as usize) as u8;
        idx /= alphabet.size() as usize;
    }
    w
}

pub fn enumerate_words(n: usize, alphabet: Alphabet) -> impl Iterator<Item = Word> {
    let count = (alphabet.size() as usize).checked_pow(n as u32).expect("desk scale");
    (0..count).map(move |i| index_word(i, n, alphabet))
}

/// Function value at one input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FValue {
    Zero,
    One,
    Undefined,
}

impl FValue {
    pub fn bit(b: bool) -> FValue {
        if b {
            FValue::One
        } else {
            FValue::Zero
        }
    }

    pub fn as_bit(&self) -> Option<bool> {
        match self {
            FValue::Zero => Some(false),
            FValue::One => Some(true),
            FValue::Undefined => None,
        }
    }
}

/// Partial function given by a dense truth table over `Sigma^n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialFunction {
    n: usize,
    alphabet: Alphabet,
    table: Vec<FValue>,
}

impl PartialFunction {
    pub fn new(n: usize, alphabet: Alphabet, table: Vec<FValue>) -> Result<PartialFunction> {
        let expected = (alphabet.size() as usize).checked_pow(n as u32);
        if expected != Some(table.len()) {
            return Err(Error::Invalid(format!(
                "truth table has {} entries, expected |Sigma|^n = {:?}",
                table.len(),
                expected
            )));
        }
        Ok(PartialFunction { n, alphabet, table })
    }

    pub fn from_fn(n: usize, alphabet: Alphabet, mut f: impl FnMut(&[u8]) -> FValue) -> PartialFunction {
        let table = enumerate_words(n, alphabet).map(|w| f(&w)).collect();
        PartialFunction { n, alphabet, table }
    }

    pub fn arity(&self) -> usize {
        self.n
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn value(&self, w: &[u8]) -> FValue {
        self.table[word_index(w, self.alphabet)]
    }

    pub fn is_total(&self) -> bool {
        self.table.iter().all(|v| *v != FValue::Undefined)
    }

    pub fn defined_inputs(&self) -> Vec<Word> {
        enumerate_words(self.n, self.alphabet)
            .filter(|w| self.value(w) != FValue::Undefined)
            .collect()
    }

    pub fn preimage(&self, bit: bool) -> Vec<Word> {
        let target = FValue::bit(bit);
        enumerate_words(self.n, self.alphabet).filter(|w| self.value(w) == target).collect()
    }

    pub fn xor(n: usize) -> PartialFunction {
        PartialFunction::from_fn(n, Alphabet::binary(), |w| {
            FValue::bit(w.iter().fold(0u8, |a, b| a ^ b) == 1)
        })
    }

    pub fn and(n: usize) -> PartialFunction {
        PartialFunction::from_fn(n, Alphabet::binary(), |w| FValue::bit(w.iter().all(|&b| b == 1)))
    }

    pub fn or(n: usize) -> PartialFunction {
        PartialFunction::from_fn(n, Alphabet::binary(), |w| FValue::bit(w.iter().any(|&b| b == 1)))
    }

    pub fn dictator(n: usize, pos: usize) -> PartialFunction {
        PartialFunction::from_fn(n, Alphabet::binary(), move |w| FValue::bit(w[pos] == 1))
    }

    pub fn constant(n: usize, alphabet: Alphabet, bit: bool) -> PartialFunction {
        PartialFunction::from_fn(n, alphabet, move |_| FValue::bit(bit))
    }

    /// Total binary function from the truth-table integer `code` (bit `i` of
    /// `code` is the value on the word with radix index `i`).
    pub fn from_code(n: usize, code: u64) -> PartialFunction {
        let alphabet = Alphabet::binary();
        let table = (0..(1usize << n)).map(|i| FValue::bit(code >> i & 1 == 1)).collect();
        PartialFunction { n, alphabet, table }
    }

    /// Parse the truth-table text format: one `<string> <0|1|*>` line per input.
    pub fn parse(text: &str, file: &str) -> Result<PartialFunction> {
        let mut entries: BTreeMap<Word, FValue> = BTreeMap::new();
        let mut n: Option<usize> = None;
        let mut max_sym = 1u8;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (word_s, val_s) = match (parts.next(), parts.next(), parts.next()) {
                (Some(w), Some(v), None) => (w, v),
                _ => return Err(Error::parse(file, lineno + 1, "expected `<string> <0|1|*>`")),
            };
            let word: Word = word_s
                .chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as u8)
                        .ok_or_else(|| Error::parse(file, lineno + 1, format!("bad symbol {c:?}")))
                })
                .collect::<Result<_>>()?;
            if let Some(&m) = word.iter().max() {
                max_sym = max_sym.max(m);
            }
            match n {
                None => n = Some(word.len()),
                Some(len) if len != word.len() => {
                    return Err(Error::parse(file, lineno + 1, "inconsistent input length"))
                }
                _ => {}
            }
            let val = match val_s {
                "0" => FValue::Zero,
                "1" => FValue::One,
                "*" => FValue::Undefined,
                other => return Err(Error::parse(file, lineno + 1, format!("bad value {other:?}"))),
            };
            if entries.insert(word, val).is_some() {
                return Err(Error::parse(file, lineno + 1, format!("duplicate key {word_s}")));
            }
        }
        let n = n.ok_or_else(|| Error::parse(file, 0, "empty truth table"))?;
        let alphabet = Alphabet::new(max_sym + 1).map_err(|e| Error::parse(file, 0, e.to_string()))?;
        let expected = (alphabet.size() as usize).pow(n as u32);
        if entries.len() != expected {
            return Err(Error::parse(
                file,
                0,
                format!("table has {} entries, expected {expected}", entries.len()),
            ));
        }
        let mut table = vec![FValue::Undefined; expected];
        for (w, v) in entries {
            table[word_index(&w, alphabet)] = v;
        }
        PartialFunction::new(n, alphabet, table)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for w in enumerate_words(self.n, self.alphabet) {
            let v = match self.value(&w) {
                FValue::Zero => "0",
                FValue::One => "1",
                FValue::Undefined => "*",
            };
            out.push_str(&format!("{} {}\n", word_to_string(&w), v));
        }
        out
    }
}

pub const FREE: u8 = u8::MAX;

/// Restriction string in `(Sigma ∪ {*})^n`: queried positions fixed, others free.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    syms: Vec<u8>,
}

impl Cell {
    pub fn full(n: usize) -> Cell {
        Cell { syms: vec![FREE; n] }
    }

    pub fn from_syms(syms: Vec<u8>) -> Cell {
        Cell { syms }
    }

    pub fn n(&self) -> usize {
        self.syms.len()
    }

    pub fn get(&self, pos: usize) -> Option<u8> {
        match self.syms[pos] {
            FREE => None,
            s => Some(s),
        }
    }

    pub fn is_free(&self, pos: usize) -> bool {
        self.syms[pos] == FREE
    }

    pub fn fix(&self, pos: usize, sym: u8) -> Cell {
        debug_assert!(self.is_free(pos), "position {pos} already fixed");
        let mut syms = self.syms.clone();
        syms[pos] = sym;
        Cell { syms }
    }

    pub fn fixed_count(&self) -> usize {
        self.syms.iter().filter(|&&s| s != FREE).count()
    }

    pub fn free_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.syms.iter().enumerate().filter(|(_, &s)| s == FREE).map(|(i, _)| i)
    }

    pub fn matches(&self, w: &[u8]) -> bool {
        self.syms.iter().zip(w).all(|(&c, &x)| c == FREE || c == x)
    }

    pub fn intersect(&self, other: &Cell) -> Option<Cell> {
        let mut syms = Vec::with_capacity(self.syms.len());
        for (&a, &b) in self.syms.iter().zip(&other.syms) {
            match (a, b) {
                (FREE, x) | (x, FREE) => syms.push(x),
                (x, y) if x == y => syms.push(x),
                _ => return None,
            }
        }
        Some(Cell { syms })
    }

    /// Key for deterministic ordering and memo tables.
    pub fn key(&self) -> &[u8] {
        &self.syms
    }

    pub fn parse(s: &str, alphabet: Alphabet) -> Result<Cell> {
        let syms = s
            .chars()
            .map(|c| {
                if c == '*' {
                    Ok(FREE)
                } else {
                    match c.to_digit(10) {
                        Some(d) if (d as u8) < alphabet.size() => Ok(d as u8),
                        _ => Err(Error::Invalid(format!("bad cell symbol {c:?}"))),
                    }
                }
            })
            .collect::<Result<_>>()?;
        Ok(Cell { syms })
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.syms {
            if s == FREE {
                write!(f, "*")?;
            } else {
                write!(f, "{}", s)?;
            }
        }
        Ok(())
    }
}

/// Exact probability distribution over `Sigma^n`, sparse, zero entries omitted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dist {
    n: usize,
    alphabet: Alphabet,
    mass: BTreeMap<Word, Rat>,
}

impl Dist {
    pub fn new(n: usize, alphabet: Alphabet, entries: impl IntoIterator<Item = (Word, Rat)>) -> Result<Dist> {
        let mut mass = BTreeMap::new();
        let mut total = Rat::zero();
        for (w, p) in entries {
            if w.len() != n {
                return Err(Error::Invalid(format!("support word {} has wrong length", word_to_string(&w))));
            }
            if w.iter().any(|&s| s >= alphabet.size()) {
                return Err(Error::Invalid(format!("support word {} outside alphabet", word_to_string(&w))));
            }
            if p.is_negative() {
                return Err(Error::Invalid(format!("negative mass on {}", word_to_string(&w))));
            }
            if p.is_zero() {
                continue;
            }
            total += &p;
            if mass.insert(w.clone(), p).is_some() {
                return Err(Error::Invalid(format!("duplicate support word {}", word_to_string(&w))));
            }
        }
        if !total.is_one() {
            return Err(Error::Invalid(format!("masses sum to {}, expected 1", fmt_rat(&total))));
        }
        if mass.is_empty() {
            return Err(Error::Invalid("empty support".into()));
        }
        Ok(Dist { n, alphabet, mass })
    }

    pub fn uniform_on(n: usize, alphabet: Alphabet, words: &[Word]) -> Result<Dist> {
        let p = Rat::new(1.into(), (words.len() as i64).into());
        Dist::new(n, alphabet, words.iter().map(|w| (w.clone(), p.clone())))
    }

    pub fn point(w: Word, alphabet: Alphabet) -> Dist {
        let n = w.len();
        Dist { n, alphabet, mass: BTreeMap::from([(w, Rat::one())]) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn mass(&self, w: &[u8]) -> Rat {
        self.mass.get(w).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn support(&self) -> impl Iterator<Item = (&Word, &Rat)> {
        self.mass.iter()
    }

    pub fn support_len(&self) -> usize {
        self.mass.len()
    }

    /// Total mass inside a cell.
    pub fn cell_mass(&self, cell: &Cell) -> Rat {
        let mut acc = Rat::zero();
        for (w, p) in &self.mass {
            if cell.matches(w) {
                acc += p;
            }
        }
        acc
    }

    /// Conditional distribution on a cell of positive mass.
    pub fn conditional(&self, cell: &Cell) -> Result<Dist> {
        let total = self.cell_mass(cell);
        if total.is_zero() {
            return Err(Error::ZeroMass { cell: cell.to_string() });
        }
        let mass = self
            .mass
            .iter()
            .filter(|(w, _)| cell.matches(w))
            .map(|(w, p)| (w.clone(), p / &total))
            .collect();
        Ok(Dist { n: self.n, alphabet: self.alphabet, mass })
    }

    /// Conditional probability of symbol `sym` at `pos` within `cell`.
    pub fn symbol_prob(&self, cell: &Cell, pos: usize, sym: u8) -> Result<Rat> {
        let total = self.cell_mass(cell);
        if total.is_zero() {
            return Err(Error::ZeroMass { cell: cell.to_string() });
        }
        Ok(self.cell_mass(&cell.fix(pos, sym)) / total)
    }

    /// Product distribution over the concatenation of the parts.
    pub fn product(parts: &[&Dist]) -> Dist {
        assert!(!parts.is_empty());
        let alphabet = parts[0].alphabet;
        let mut acc: Vec<(Word, Rat)> = vec![(Vec::new(), Rat::one())];
        for d in parts {
            let mut next = Vec::with_capacity(acc.len() * d.mass.len());
            for (w, p) in &acc {
                for (sw, sp) in &d.mass {
                    let mut joined = w.clone();
                    joined.extend_from_slice(sw);
                    next.push((joined, p * sp));
                }
            }
            acc = next;
        }
        let n = parts.iter().map(|d| d.n).sum();
        Dist { n, alphabet, mass: acc.into_iter().collect() }
    }

    /// Mixture `sum_i w_i * d_i`; weights must sum to 1.
    pub fn mixture(parts: &[(Rat, &Dist)]) -> Result<Dist> {
        let n = parts[0].1.n;
        let alphabet = parts[0].1.alphabet;
        let mut mass: BTreeMap<Word, Rat> = BTreeMap::new();
        for (w, d) in parts {
            for (word, p) in &d.mass {
                *mass.entry(word.clone()).or_insert_with(Rat::zero) += w * p;
            }
        }
        Dist::new(n, alphabet, mass)
    }

    /// Parse the distribution text format: one `<string> <p>/<q>` line per
    /// support point; masses must sum to exactly 1.
    pub fn parse(text: &str, file: &str) -> Result<Dist> {
        let mut entries: Vec<(Word, Rat)> = Vec::new();
        let mut seen: BTreeMap<Word, usize> = BTreeMap::new();
        let mut n: Option<usize> = None;
        let mut max_sym = 1u8;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (word_s, mass_s) = match (parts.next(), parts.next(), parts.next()) {
                (Some(w), Some(m), None) => (w, m),
                _ => return Err(Error::parse(file, lineno + 1, "expected `<string> <p>/<q>`")),
            };
            let word: Word = word_s
                .chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as u8)
                        .ok_or_else(|| Error::parse(file, lineno + 1, format!("bad symbol {c:?}")))
                })
                .collect::<Result<_>>()?;
            if let Some(&m) = word.iter().max() {
                max_sym = max_sym.max(m);
            }
            match n {
                None => n = Some(word.len()),
                Some(len) if len != word.len() => {
                    return Err(Error::parse(file, lineno + 1, "inconsistent input length"))
                }
                _ => {}
            }
            let mass = parse_rat(mass_s)
                .ok_or_else(|| Error::parse(file, lineno + 1, format!("bad mass {mass_s:?}")))?;
            if mass.is_negative() {
                return Err(Error::parse(file, lineno + 1, "negative mass"));
            }
            if seen.insert(word.clone(), lineno + 1).is_some() {
                return Err(Error::parse(file, lineno + 1, format!("duplicate key {word_s}")));
            }
            entries.push((word, mass));
        }
        let n = n.ok_or_else(|| Error::parse(file, 0, "empty distribution"))?;
        let alphabet = Alphabet::new(max_sym + 1).map_err(|e| Error::parse(file, 0, e.to_string()))?;
        Dist::new(n, alphabet, entries).map_err(|e| match e {
            Error::Invalid(msg) => Error::parse(file, 0, msg),
            other => other,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (w, p) in &self.mass {
            out.push_str(&format!("{} {}\n", word_to_string(w), fmt_rat(p)));
        }
        out
    }
}

/// A pair of distributions supported on `f^{-1}(0)` and `f^{-1}(1)`.
#[derive(Clone, Debug)]
pub struct DistPair {
    pub f: PartialFunction,
    pub d0: Dist,
    pub d1: Dist,
}

impl DistPair {
    pub fn new(f: PartialFunction, d0: Dist, d1: Dist) -> Result<DistPair> {
        for (w, _) in d0.support() {
            if f.value(w) != FValue::Zero {
                return Err(Error::Invalid(format!(
                    "support word {} of d0 is not a 0-input",
                    word_to_string(w)
                )));
            }
        }
        for (w, _) in d1.support() {
            if f.value(w) != FValue::One {
                return Err(Error::Invalid(format!(
                    "support word {} of d1 is not a 1-input",
                    word_to_string(w)
                )));
            }
        }
        Ok(DistPair { f, d0, d1 })
    }

    pub fn n(&self) -> usize {
        self.d0.n()
    }

    pub fn alphabet(&self) -> Alphabet {
        self.d0.alphabet()
    }

    /// Split a balanced input distribution into its conditionals on
    /// `f^{-1}(0)` and `f^{-1}(1)`.
    pub fn split(f: PartialFunction, d: &Dist) -> Result<DistPair> {
        let zero_words: Vec<(Word, Rat)> =
            d.support().filter(|(w, _)| f.value(w) == FValue::Zero).map(|(w, p)| (w.clone(), p.clone())).collect();
        let one_words: Vec<(Word, Rat)> =
            d.support().filter(|(w, _)| f.value(w) == FValue::One).map(|(w, p)| (w.clone(), p.clone())).collect();
        let m0: Rat = crate::ratio::rat_sum(zero_words.iter().map(|(_, p)| p));
        let m1: Rat = crate::ratio::rat_sum(one_words.iter().map(|(_, p)| p));
        if m0.is_zero() || m1.is_zero() {
            return Err(Error::Invalid("distribution must put mass on both function values".into()));
        }
        let d0 = Dist::new(d.n(), d.alphabet(), zero_words.into_iter().map(|(w, p)| (w, p / &m0)))?;
        let d1 = Dist::new(d.n(), d.alphabet(), one_words.into_iter().map(|(w, p)| (w, p / &m1)))?;
        DistPair::new(f, d0, d1)
    }

    pub fn likelihood_ratio(&self, cell: &Cell) -> Result<LikelihoodRatio> {
        LikelihoodRatio::new(self.d1.cell_mass(cell), self.d0.cell_mass(cell))
            .map_err(|_| Error::Untrimmed { cell: cell.to_string() })
    }

    /// Condition both sides on a cell (requires positive mass on both).
    pub fn conditioned(&self, cell: &Cell) -> Result<DistPair> {
        Ok(DistPair { f: self.f.clone(), d0: self.d0.conditional(cell)?, d1: self.d1.conditional(cell)? })
    }

    /// The balanced mixture `1/2 d0 + 1/2 d1`.
    pub fn balanced_mixture(&self) -> Dist {
        let half = Rat::new(1.into(), 2.into());
        Dist::mixture(&[(half.clone(), &self.d0), (half, &self.d1)]).expect("halves sum to 1")
    }
}

/// Exact likelihood ratio `d1(S)/d0(S)`, possibly zero or infinite.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LikelihoodRatio {
    d1: Rat,
    d0: Rat,
}

impl LikelihoodRatio {
    pub fn new(d1: Rat, d0: Rat) -> Result<LikelihoodRatio> {
        if d1.is_negative() || d0.is_negative() {
            return Err(Error::Invalid("negative mass in likelihood ratio".into()));
        }
        if d1.is_zero() && d0.is_zero() {
            return Err(Error::Untrimmed { cell: "<unknown>".into() });
        }
        Ok(LikelihoodRatio { d1, d0 })
    }

    pub fn one() -> LikelihoodRatio {
        LikelihoodRatio { d1: Rat::one(), d0: Rat::one() }
    }

    pub fn d1_mass(&self) -> &Rat {
        &self.d1
    }

    pub fn d0_mass(&self) -> &Rat {
        &self.d0
    }

    pub fn is_infinite(&self) -> bool {
        self.d0.is_zero()
    }

    pub fn is_zero(&self) -> bool {
        self.d1.is_zero()
    }

    pub fn as_rat(&self) -> Option<Rat> {
        if self.is_infinite() {
            None
        } else {
            Some(&self.d1 / &self.d0)
        }
    }

    /// Compare the ratio against a nonnegative rational; infinite > everything.
    pub fn cmp_rat(&self, m: &Rat) -> Ordering {
        if self.is_infinite() {
            return Ordering::Greater;
        }
        (&self.d1 / &self.d0).cmp(m)
    }

    pub fn ge_rat(&self, m: &Rat) -> bool {
        self.cmp_rat(m) != Ordering::Less
    }

    /// Compare the ratio against `e^x`, exactly. Infinite > all, zero < all.
    pub fn cmp_exp(&self, x: &Rat) -> Ordering {
        if self.is_infinite() {
            return Ordering::Greater;
        }
        if self.is_zero() {
            return Ordering::Less;
        }
        cmp_rat_exp(&(&self.d1 / &self.d0), x)
    }

    /// Natural log as f64; None for zero/infinite ratios.
    pub fn ln(&self) -> Option<f64> {
        if self.is_zero() || self.is_infinite() {
            None
        } else {
            Some(crate::ratio::ln_rat(&(&self.d1 / &self.d0)))
        }
    }

    /// Componentwise product used for multi-sample overall ratios.
    pub fn product(parts: &[LikelihoodRatio]) -> Result<LikelihoodRatio> {
        let mut d1 = Rat::one();
        let mut d0 = Rat::one();
        for p in parts {
            d1 *= &p.d1;
            d0 *= &p.d0;
        }
        LikelihoodRatio::new(d1, d0)
    }
}
