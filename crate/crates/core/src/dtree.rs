//! Multi-sample decision trees: execution, exact leaf-reach enumeration, and
//! the likelihood-ratio functionals on vertices (overall ratio, truncated log
//! ratio, settledness).

use crate::domain::{Alphabet, Cell, Dist, DistPair, LikelihoodRatio, Word};
use crate::error::{Error, Result};
use crate::ratio::{rat_to_f64, Rat};
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::BTreeSet;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LeafLabel {
    Accept,
    Reject,
    /// Selection output: claims `f(sample) = bit`.
    Select { sample: usize, bit: bool },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Query { sample: usize, pos: usize, children: Vec<Node> },
    Dummy { child: Box<Node> },
    Leaf { label: Option<LeafLabel> },
}

impl Node {
    pub fn leaf(label: Option<LeafLabel>) -> Node {
        Node::Leaf { label }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Dummy { child } => child.leaf_count(),
            Node::Query { children, .. } => children.iter().map(Node::leaf_count).sum(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Dummy { child } => 1 + child.depth(),
            Node::Query { children, .. } => 1 + children.iter().map(Node::depth).max().unwrap_or(0),
        }
    }

    /// Depth counting only query vertices (dummies are free).
    pub fn query_depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Dummy { child } => child.query_depth(),
            Node::Query { children, .. } => 1 + children.iter().map(Node::query_depth).max().unwrap_or(0),
        }
    }
}

/// A deterministic decision tree over `k` samples of length `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionTree {
    k: usize,
    n: usize,
    alphabet: Alphabet,
    root: Node,
}

/// The product restriction recording queries to each of the `k` samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductCell {
    pub cells: Vec<Cell>,
}

impl ProductCell {
    pub fn full(k: usize, n: usize) -> ProductCell {
        ProductCell { cells: vec![Cell::full(n); k] }
    }

    pub fn k(&self) -> usize {
        self.cells.len()
    }

    /// Overall likelihood ratio: the product of the component ratios.
    pub fn overall_ratio(&self, pair: &DistPair) -> Result<LikelihoodRatio> {
        let parts: Vec<LikelihoodRatio> =
            self.cells.iter().map(|c| pair.likelihood_ratio(c)).collect::<Result<_>>()?;
        LikelihoodRatio::product(&parts).map_err(|_| Error::Untrimmed { cell: self.to_string() })
    }
}

impl std::fmt::Display for ProductCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.cells.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Truncation thresholds for the settled predicate and the truncated log
/// likelihood ratio. `tau` is the log-band half-width; `settled_value` the
/// sentinel reported once a sample leaves the band.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncationParams {
    tau: Rat,
    settled_value: Rat,
}

impl TruncationParams {
    pub fn new(tau: Rat, settled_value: Rat) -> Result<TruncationParams> {
        if !tau.is_positive() {
            return Err(Error::DegenerateParams("tau must be positive".into()));
        }
        if settled_value <= tau {
            return Err(Error::DegenerateParams("settled value must exceed tau".into()));
        }
        Ok(TruncationParams { tau, settled_value })
    }

    /// The headline constants: band `e^{+-100}`, sentinel 500.
    pub fn paper() -> TruncationParams {
        TruncationParams { tau: crate::ratio::rat_int(100), settled_value: crate::ratio::rat_int(500) }
    }

    /// Desk-scale constants: band `e^{+-1}`, sentinel 5.
    pub fn toy() -> TruncationParams {
        TruncationParams { tau: crate::ratio::rat_int(1), settled_value: crate::ratio::rat_int(5) }
    }

    pub fn tau(&self) -> &Rat {
        &self.tau
    }

    pub fn settled_value(&self) -> &Rat {
        &self.settled_value
    }

    pub fn tau_f64(&self) -> f64 {
        rat_to_f64(&self.tau)
    }

    pub fn settled_value_f64(&self) -> f64 {
        rat_to_f64(&self.settled_value)
    }
}

/// Exact settled predicate: the ratio left the band `[e^{-tau}, e^{tau}]`.
pub fn is_settled(lr: &LikelihoodRatio, p: &TruncationParams) -> bool {
    if lr.is_infinite() || lr.is_zero() {
        return true;
    }
    let tau = p.tau();
    lr.cmp_exp(tau) == Ordering::Greater || lr.cmp_exp(&-tau.clone()) == Ordering::Less
}

/// Settled on the high side: `lr > e^{tau}`.
pub fn is_settled_high(lr: &LikelihoodRatio, p: &TruncationParams) -> bool {
    lr.is_infinite() || lr.cmp_exp(p.tau()) == Ordering::Greater
}

/// Settled on the low side: `lr < e^{-tau}`.
pub fn is_settled_low(lr: &LikelihoodRatio, p: &TruncationParams) -> bool {
    lr.is_zero() || (!lr.is_infinite() && lr.cmp_exp(&-p.tau().clone()) == Ordering::Less)
}

/// Truncated log likelihood ratio: `ln(lr)` inside the band, the sentinel
/// outside it (on either side). The band membership test is exact; only the
/// returned log value is floating point.
pub fn truncated_log_ratio(pair: &DistPair, cell: &Cell, p: &TruncationParams) -> Result<f64> {
    let lr = pair.likelihood_ratio(cell)?;
    if is_settled(&lr, p) {
        Ok(p.settled_value_f64())
    } else {
        Ok(lr.ln().expect("unsettled ratio is finite and positive"))
    }
}

/// Sum of the truncated log ratios across the samples of a product cell.
pub fn overall_truncated_log_ratio(pair: &DistPair, pc: &ProductCell, p: &TruncationParams) -> Result<f64> {
    let mut acc = 0.0;
    for c in &pc.cells {
        acc += truncated_log_ratio(pair, c, p)?;
    }
    Ok(acc)
}

/// Number of settled samples in a product cell.
pub fn settled_count(pair: &DistPair, pc: &ProductCell, p: &TruncationParams) -> Result<usize> {
    let mut count = 0;
    for c in &pc.cells {
        if is_settled(&pair.likelihood_ratio(c)?, p) {
            count += 1;
        }
    }
    Ok(count)
}

/// One step of an executed path.
#[derive(Clone, Debug)]
pub struct PathStep {
    pub sample: usize,
    pub pos: usize,
    pub symbol: u8,
    pub dummy: bool,
}

/// Context handed to leaf visitors during exact enumeration.
pub struct LeafCtx<'a> {
    pub leaf_id: usize,
    pub label: &'a Option<LeafLabel>,
    pub cells: &'a [Cell],
    /// `sample_masses[t][j]`: mass of sample `j`'s cell under tracked
    /// distribution list `t`. The leaf's reach probability under tracking `t`
    /// is the product over `j`.
    pub sample_masses: &'a [Vec<Rat>],
    pub query_counts: &'a [usize],
    pub depth: usize,
}

impl LeafCtx<'_> {
    pub fn mass(&self, tracking: usize) -> Rat {
        let mut acc = Rat::one();
        for m in &self.sample_masses[tracking] {
            acc *= m;
        }
        acc
    }

    pub fn component_ratio(&self, d0_tracking: usize, d1_tracking: usize, j: usize) -> Result<LikelihoodRatio> {
        LikelihoodRatio::new(
            self.sample_masses[d1_tracking][j].clone(),
            self.sample_masses[d0_tracking][j].clone(),
        )
    }
}

impl DecisionTree {
    pub fn new(k: usize, n: usize, alphabet: Alphabet, root: Node) -> Result<DecisionTree> {
        if k == 0 || n == 0 {
            return Err(Error::Invalid("tree needs k >= 1 samples of arity n >= 1".into()));
        }
        validate(&root, k, n, alphabet, &mut BTreeSet::new())?;
        Ok(DecisionTree { k, n, alphabet, root })
    }

    pub fn leaf_only(k: usize, n: usize, alphabet: Alphabet, label: Option<LeafLabel>) -> DecisionTree {
        DecisionTree { k, n, alphabet, root: Node::Leaf { label } }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn query_depth(&self) -> usize {
        self.root.query_depth()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    /// Relabel every leaf through `f` (used to turn boosters into testers).
    pub fn map_labels(&self, f: &impl Fn(usize, &Option<LeafLabel>) -> Option<LeafLabel>) -> DecisionTree {
        fn go(node: &Node, next_id: &mut usize, f: &impl Fn(usize, &Option<LeafLabel>) -> Option<LeafLabel>) -> Node {
            match node {
                Node::Leaf { label } => {
                    let id = *next_id;
                    *next_id += 1;
                    Node::Leaf { label: f(id, label) }
                }
                Node::Dummy { child } => Node::Dummy { child: Box::new(go(child, next_id, f)) },
                Node::Query { sample, pos, children } => Node::Query {
                    sample: *sample,
                    pos: *pos,
                    children: children.iter().map(|c| go(c, next_id, f)).collect(),
                },
            }
        }
        let mut next = 0;
        DecisionTree { k: self.k, n: self.n, alphabet: self.alphabet, root: go(&self.root, &mut next, f) }
    }

    /// Run the tree on a concrete input; returns the reached leaf id, its
    /// label, the executed path, and the final product cell.
    pub fn run(&self, xs: &[Word]) -> Result<(usize, Option<LeafLabel>, Vec<PathStep>, ProductCell)> {
        if xs.len() != self.k || xs.iter().any(|x| x.len() != self.n) {
            return Err(Error::Invalid("input dimensions do not match the tree".into()));
        }
        let mut cells = ProductCell::full(self.k, self.n);
        let mut path = Vec::new();
        let mut node = &self.root;
        let mut leaf_id = 0usize;
        loop {
            match node {
                Node::Leaf { label } => return Ok((leaf_id, label.clone(), path, cells)),
                Node::Dummy { child } => {
                    path.push(PathStep { sample: 0, pos: 0, symbol: 0, dummy: true });
                    node = child;
                }
                Node::Query { sample, pos, children } => {
                    let sym = xs[*sample][*pos];
                    cells.cells[*sample] = cells.cells[*sample].fix(*pos, sym);
                    path.push(PathStep { sample: *sample, pos: *pos, symbol: sym, dummy: false });
                    for (s, child) in children.iter().enumerate() {
                        if s < sym as usize {
                            leaf_id += child.leaf_count();
                        }
                    }
                    node = &children[sym as usize];
                }
            }
        }
    }

    /// Exact enumeration of reachable leaves under one or more product
    /// distributions. `tracked[t]` lists one distribution per sample; a
    /// subtree is skipped when its reach probability is zero under every
    /// tracking (leaf ids still advance).
    pub fn walk_leaves(&self, tracked: &[Vec<&Dist>], visit: &mut dyn FnMut(&LeafCtx)) {
        assert!(tracked.iter().all(|d| d.len() == self.k));
        // supports[t][j]: remaining (word, mass) pairs of sample j under tracking t
        let supports: Vec<Vec<Vec<(Word, Rat)>>> = tracked
            .iter()
            .map(|dists| {
                dists
                    .iter()
                    .map(|d| d.support().map(|(w, p)| (w.clone(), p.clone())).collect())
                    .collect()
            })
            .collect();
        let mut cells = vec![Cell::full(self.n); self.k];
        let mut counts = vec![0usize; self.k];
        let mut leaf_id = 0usize;
        walk(
            &self.root,
            &supports,
            &mut cells,
            &mut counts,
            0,
            &mut leaf_id,
            visit,
        );

        fn walk(
            node: &Node,
            supports: &[Vec<Vec<(Word, Rat)>>],
            cells: &mut Vec<Cell>,
            counts: &mut Vec<usize>,
            depth: usize,
            leaf_id: &mut usize,
            visit: &mut dyn FnMut(&LeafCtx),
        ) {
            match node {
                Node::Leaf { label } => {
                    let sample_masses: Vec<Vec<Rat>> = supports
                        .iter()
                        .map(|per_sample| {
                            per_sample.iter().map(|sup| crate::ratio::rat_sum(sup.iter().map(|(_, p)| p))).collect()
                        })
                        .collect();
                    let ctx = LeafCtx {
                        leaf_id: *leaf_id,
                        label,
                        cells,
                        sample_masses: &sample_masses,
                        query_counts: counts,
                        depth,
                    };
                    visit(&ctx);
                    *leaf_id += 1;
                }
                Node::Dummy { child } => walk(child, supports, cells, counts, depth + 1, leaf_id, visit),
                Node::Query { sample, pos, children } => {
                    for (sym, child) in children.iter().enumerate() {
                        let sym = sym as u8;
                        let filtered: Vec<Vec<(Word, Rat)>> = supports
                            .iter()
                            .map(|per_sample| {
                                per_sample[*sample]
                                    .iter()
                                    .filter(|(w, _)| w[*pos] == sym)
                                    .cloned()
                                    .collect()
                            })
                            .collect();
                        if filtered.iter().all(|sup| sup.is_empty()) {
                            *leaf_id += child.leaf_count();
                            continue;
                        }
                        let mut next_supports = supports.to_vec();
                        for (t, sup) in filtered.into_iter().enumerate() {
                            next_supports[t][*sample] = sup;
                        }
                        let saved_cell = cells[*sample].clone();
                        cells[*sample] = saved_cell.fix(*pos, sym);
                        counts[*sample] += 1;
                        walk(child, &next_supports, cells, counts, depth + 1, leaf_id, visit);
                        counts[*sample] -= 1;
                        cells[*sample] = saved_cell;
                    }
                }
            }
        }
    }

    /// Probability of reaching each leaf under a product input distribution,
    /// indexed by leaf id; entries sum to exactly 1.
    pub fn leaf_reach_dist(&self, dists: &[&Dist]) -> Vec<Rat> {
        let mut out = vec![Rat::zero(); self.leaf_count()];
        self.walk_leaves(&[dists.to_vec()], &mut |ctx| {
            out[ctx.leaf_id] = ctx.mass(0);
        });
        out
    }

    /// Serialize to the nested text format.
    pub fn to_text(&self) -> String {
        fn label_text(l: &Option<LeafLabel>) -> String {
            match l {
                None => "-".into(),
                Some(LeafLabel::Accept) => "accept".into(),
                Some(LeafLabel::Reject) => "reject".into(),
                Some(LeafLabel::Select { sample, bit }) => format!("{}:{}", sample, u8::from(*bit)),
            }
        }
        fn go(node: &Node, out: &mut String) {
            match node {
                Node::Leaf { label } => out.push_str(&format!("L {}", label_text(label))),
                Node::Dummy { child } => {
                    out.push_str("D ( ");
                    go(child, out);
                    out.push_str(" )");
                }
                Node::Query { sample, pos, children } => {
                    out.push_str(&format!("Q {} {} (", sample, pos));
                    for c in children {
                        out.push(' ');
                        go(c, out);
                    }
                    out.push_str(" )");
                }
            }
        }
        let mut out = format!("T {} {} {}\n", self.k, self.n, self.alphabet.size());
        go(&self.root, &mut out);
        out.push('\n');
        out
    }

    /// Parse the nested text format produced by [`DecisionTree::to_text`].
    pub fn parse(text: &str, file: &str) -> Result<DecisionTree> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse(file, 0, "empty tree file"))?;
        let mut hp = header.split_whitespace();
        if hp.next() != Some("T") {
            return Err(Error::parse(file, 1, "expected header `T k n |Sigma|`"));
        }
        let parse_usize = |s: Option<&str>| -> Result<usize> {
            s.and_then(|x| x.parse().ok()).ok_or_else(|| Error::parse(file, 1, "bad header number"))
        };
        let k = parse_usize(hp.next())?;
        let n = parse_usize(hp.next())?;
        let size = parse_usize(hp.next())? as u8;
        let alphabet = Alphabet::new(size).map_err(|e| Error::parse(file, 1, e.to_string()))?;
        let body: String = lines.collect::<Vec<_>>().join(" ");
        let spaced = body.replace('(', " ( ").replace(')', " ) ");
        let tokens: Vec<&str> = spaced.split_whitespace().collect();
        let mut pos = 0usize;
        let root = parse_node(&tokens, &mut pos, alphabet, file)?;
        if pos != tokens.len() {
            return Err(Error::parse(file, 2, "trailing tokens after tree"));
        }
        DecisionTree::new(k, n, alphabet, root)
    }
}

fn parse_node(tokens: &[&str], pos: &mut usize, alphabet: Alphabet, file: &str) -> Result<Node> {
    let bad = |msg: &str| Error::parse(file, 2, msg.to_string());
    let tok = *tokens.get(*pos).ok_or_else(|| bad("unexpected end of tree"))?;
    *pos += 1;
    match tok {
        "L" => {
            let label_tok = *tokens.get(*pos).ok_or_else(|| bad("missing leaf label"))?;
            *pos += 1;
            let label = match label_tok {
                "-" => None,
                "accept" => Some(LeafLabel::Accept),
                "reject" => Some(LeafLabel::Reject),
                other => {
                    let (i, b) = other
                        .split_once(':')
                        .ok_or_else(|| bad(&format!("bad label {other:?}")))?;
                    let sample = i.parse().map_err(|_| bad("bad selection index"))?;
                    let bit = match b {
                        "0" => false,
                        "1" => true,
                        _ => return Err(bad("bad selection bit")),
                    };
                    Some(LeafLabel::Select { sample, bit })
                }
            };
            Ok(Node::Leaf { label })
        }
        "D" => {
            expect(tokens, pos, "(", file)?;
            let child = parse_node(tokens, pos, alphabet, file)?;
            expect(tokens, pos, ")", file)?;
            Ok(Node::Dummy { child: Box::new(child) })
        }
        "Q" => {
            let sample = tokens
                .get(*pos)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad sample index"))?;
            *pos += 1;
            let qpos = tokens
                .get(*pos)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad position index"))?;
            *pos += 1;
            expect(tokens, pos, "(", file)?;
            let mut children = Vec::new();
            for _ in 0..alphabet.size() {
                children.push(parse_node(tokens, pos, alphabet, file)?);
            }
            expect(tokens, pos, ")", file)?;
            Ok(Node::Query { sample, pos: qpos, children })
        }
        other => Err(bad(&format!("unexpected token {other:?}"))),
    }
}

fn expect(tokens: &[&str], pos: &mut usize, want: &str, file: &str) -> Result<()> {
    if tokens.get(*pos) == Some(&want) {
        *pos += 1;
        Ok(())
    } else {
        Err(Error::parse(file, 2, format!("expected {want:?}")))
    }
}

fn validate(
    node: &Node,
    k: usize,
    n: usize,
    alphabet: Alphabet,
    seen: &mut BTreeSet<(usize, usize)>,
) -> Result<()> {
    match node {
        Node::Leaf { label } => {
            if let Some(LeafLabel::Select { sample, .. }) = label {
                if *sample >= k {
                    return Err(Error::Invalid(format!("selection label names sample {sample} >= k={k}")));
                }
            }
            Ok(())
        }
        Node::Dummy { child } => validate(child, k, n, alphabet, seen),
        Node::Query { sample, pos, children } => {
            if *sample >= k || *pos >= n {
                return Err(Error::Invalid(format!("query ({sample},{pos}) out of range")));
            }
            if !seen.insert((*sample, *pos)) {
                return Err(Error::Invalid(format!("path queries ({sample},{pos}) twice")));
            }
            if children.len() != alphabet.size() as usize {
                return Err(Error::Invalid(format!(
                    "query node has {} children, expected {}",
                    children.len(),
                    alphabet.size()
                )));
            }
            for c in children {
                validate(c, k, n, alphabet, seen)?;
            }
            seen.remove(&(*sample, *pos));
            Ok(())
        }
    }
}
