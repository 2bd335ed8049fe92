//! The decoder-state Markov chain under max-posterior queries, with message 1
//! taken as the true message.
//!
//! States reachable from `(0,0,0)` form a main state, six basic states at
//! depth 1 and nine tentacles reaching outward. Transitions are derived from
//! the strategy and the channel law; probabilities are kept symbolic as
//! `a*p + b*q` with `a, b` in `{0, 1, 1/2, 1/3}`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_integer::binomial;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::belief::{apply_outcome, MessageId, MetricState};
use crate::bounds;
use crate::channel::{ArithmeticMode, ChannelParams};
use crate::dp::conditional_error;
use crate::error::{Error, Result};
use crate::exact::{self, Rational};
use crate::report::Number;
use crate::semiring::{LogProb, Semiring};
use crate::strategy::{select_query, transmit, QueryDist, StrategyRule, Weight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateKind {
    Main,
    Basic,
    Tentacle,
}

pub fn classify(s: &MetricState) -> StateKind {
    match s.depth() {
        0 => StateKind::Main,
        1 => StateKind::Basic,
        _ => StateKind::Tentacle,
    }
}

/// Parses `"011"` or, for entries of 10 and above, `"0,10,11"`.
pub fn parse_label(label: &str) -> Result<MetricState> {
    let label = label.trim().trim_start_matches('S');
    let parts: Option<Vec<u32>> = if label.contains(',') {
        label.split(',').map(|x| x.trim().parse().ok()).collect()
    } else {
        label.chars().map(|c| c.to_digit(10)).collect()
    };
    let arr: [u32; 3] = parts
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| Error::InvalidArgument(format!("bad state label {label:?}")))?;
    MetricState::new(arr)
}

/// A transition probability `p_coeff * p + q_coeff * q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub to: MetricState,
    pub p_coeff: Weight,
    pub q_coeff: Weight,
}

fn term_label(c: Weight, letter: char) -> Option<String> {
    if c.is_zero() {
        return None;
    }
    let (n, d) = (*c.numer(), *c.denom());
    let head = if n == 1 { letter.to_string() } else { format!("{n}{letter}") };
    Some(if d == 1 { head } else { format!("{head}/{d}") })
}

fn parse_term(t: &str) -> Result<(char, Weight)> {
    let bad = || Error::InvalidArgument(format!("bad probability term {t:?}"));
    let (head, den) = match t.split_once('/') {
        Some((h, d)) => (h, d.parse::<u64>().map_err(|_| bad())?),
        None => (t, 1),
    };
    let letter = head.chars().last().ok_or_else(bad)?;
    if letter != 'p' && letter != 'q' {
        return Err(bad());
    }
    let num_part = &head[..head.len() - 1];
    let num = if num_part.is_empty() { 1 } else { num_part.parse::<u64>().map_err(|_| bad())? };
    if den == 0 {
        return Err(bad());
    }
    Ok((letter, Weight::new(num, den)))
}

/// Parses `"q/3"`, `"p"`, `"p/2+q/2"` into `(p_coeff, q_coeff)`.
pub fn parse_prob(s: &str) -> Result<(Weight, Weight)> {
    let mut pc = Weight::zero();
    let mut qc = Weight::zero();
    for t in s.split('+') {
        let (letter, w) = parse_term(t.trim())?;
        if letter == 'p' {
            pc += w;
        } else {
            qc += w;
        }
    }
    Ok((pc, qc))
}

impl Edge {
    pub fn label(&self) -> String {
        [term_label(self.p_coeff, 'p'), term_label(self.q_coeff, 'q')].into_iter().flatten().collect::<Vec<_>>().join("+")
    }

    pub fn value<W: Semiring>(&self, p: &W, q: &W) -> W {
        let part = |c: Weight, x: &W| {
            if c.is_zero() {
                W::zero()
            } else if c.is_one() {
                x.clone()
            } else {
                x.mul(&W::from_rational(&QueryDist::weight_rational(c)))
            }
        };
        part(self.p_coeff, p).add(&part(self.q_coeff, q))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainNode {
    pub state: MetricState,
    pub kind: StateKind,
    /// Some successors lie beyond the depth bound and were dropped.
    pub boundary: bool,
    pub edges: Vec<Edge>,
}

/// Transitions among the states reachable from `(0,0,0)` with depth `max(s) <= depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    pub depth: u32,
    pub channel: ChannelParams,
    pub nodes: BTreeMap<MetricState, ChainNode>,
}

/// All successors of `s` with symbolic probabilities, in query order.
fn successors(s: &MetricState) -> Vec<Edge> {
    let theta = MessageId::ALL[0];
    let dist = select_query(&StrategyRule::max_posterior(), s, 0).expect("max-posterior never fails");
    let mut edges: Vec<Edge> = Vec::new();
    for (query, w) in dist.support() {
        let x = transmit(query, theta);
        for y in 0..2u8 {
            let to = apply_outcome(s, query, y);
            let (pc, qc) = if y == x { (Weight::zero(), w) } else { (w, Weight::zero()) };
            match edges.iter_mut().find(|e| e.to == to) {
                Some(e) => {
                    e.p_coeff += pc;
                    e.q_coeff += qc;
                }
                None => edges.push(Edge { to, p_coeff: pc, q_coeff: qc }),
            }
        }
    }
    edges
}

pub fn derive_transitions(ch: &ChannelParams, depth: u32) -> Result<TransitionTable> {
    if depth < 1 {
        return Err(Error::InvalidArgument("tentacle depth must be at least 1".into()));
    }
    let mut nodes = BTreeMap::new();
    let mut queue = VecDeque::from([MetricState::ORIGIN]);
    let mut seen = BTreeSet::from([MetricState::ORIGIN]);
    while let Some(s) = queue.pop_front() {
        let all = successors(&s);
        let boundary = all.iter().any(|e| e.to.depth() > depth);
        let edges: Vec<Edge> = all.into_iter().filter(|e| e.to.depth() <= depth).collect();
        for e in &edges {
            if seen.insert(e.to) {
                queue.push_back(e.to);
            }
        }
        nodes.insert(s, ChainNode { state: s, kind: classify(&s), boundary, edges });
    }
    Ok(TransitionTable { depth, channel: ch.clone(), nodes })
}

impl TransitionTable {
    pub fn node(&self, s: &MetricState) -> Option<&ChainNode> {
        self.nodes.get(s)
    }

    /// Exact transition probability `from -> to`.
    pub fn prob(&self, from: &MetricState, to: &MetricState) -> Result<Option<Rational>> {
        let (p, q) = (self.channel.p_exact()?, self.channel.q_exact()?);
        Ok(self.nodes.get(from).and_then(|n| n.edges.iter().find(|e| e.to == *to)).map(|e| e.value(&p, &q)))
    }

    /// States whose exact out-probabilities do not sum to 1, ignoring boundary states.
    pub fn stochasticity_defects(&self) -> Result<Vec<MetricState>> {
        let (p, q) = (self.channel.p_exact()?, self.channel.q_exact()?);
        Ok(self
            .nodes
            .values()
            .filter(|n| !n.boundary)
            .filter(|n| n.edges.iter().fold(exact::zero(), |a, e| a + e.value(&p, &q)) != exact::one())
            .map(|n| n.state)
            .collect())
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.values().map(|n| n.edges.len()).sum()
    }
}

/// Decoding error at a chain state (message 1 true).
pub fn state_decode_error(s: &MetricState) -> Rational {
    conditional_error(s, MessageId::ALL[0])
}

// ---------------------------------------------------------------------------
// Reference transition groups

/// Hand-derived transition groups out of the main and basic states. Test
/// vectors only; the table itself is always derived from the strategy.
pub const REFERENCE_GROUPS: [(&str, &[(&str, &str)]); 7] = [
    ("000", &[("011", "q/3"), ("100", "p/3"), ("101", "p/3"), ("010", "q/3"), ("110", "p/3"), ("001", "q/3")]),
    ("011", &[("000", "p"), ("022", "q")]),
    ("101", &[("000", "q"), ("202", "p")]),
    ("110", &[("000", "q"), ("220", "p")]),
    ("100", &[("101", "q/2"), ("210", "p/2"), ("110", "q/2"), ("201", "p/2")]),
    ("010", &[("021", "q/2"), ("110", "p/2"), ("120", "p/2"), ("011", "q/2")]),
    ("001", &[("012", "q/2"), ("101", "p/2"), ("102", "p/2"), ("011", "q/2")]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Match,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupVerdict {
    pub source: String,
    pub expected: Vec<(String, String)>,
    pub derived: Vec<(String, String)>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionVerification {
    pub p: String,
    pub groups: Vec<GroupVerdict>,
    pub all_match: bool,
}

pub fn verify_paper_transitions(ch: &ChannelParams) -> Result<TransitionVerification> {
    let table = derive_transitions(ch, 2)?;
    let exact_values = ch.p_exact().ok().zip(ch.q_exact().ok());
    let mut groups = Vec::new();
    for (src, listed) in REFERENCE_GROUPS {
        let s = parse_label(src)?;
        let derived_edges = table.node(&s).map(|n| n.edges.clone()).unwrap_or_default();
        let mut expected = BTreeMap::new();
        for (dst, prob) in listed {
            expected.insert(parse_label(dst)?, parse_prob(prob)?);
        }
        let derived: BTreeMap<MetricState, (Weight, Weight)> =
            derived_edges.iter().map(|e| (e.to, (e.p_coeff, e.q_coeff))).collect();
        let same_targets = expected.keys().eq(derived.keys());
        let ok = same_targets
            && expected.iter().all(|(to, &(pc, qc))| {
                let d = derived[to];
                match &exact_values {
                    Some((p, q)) => {
                        let e = Edge { to: *to, p_coeff: pc, q_coeff: qc };
                        let g = Edge { to: *to, p_coeff: d.0, q_coeff: d.1 };
                        e.value(p, q) == g.value(p, q)
                    }
                    None => (pc, qc) == d,
                }
            });
        groups.push(GroupVerdict {
            source: src.to_string(),
            expected: listed.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            derived: derived_edges.iter().map(|e| (e.to.label(), e.label())).collect(),
            verdict: if ok { Verdict::Match } else { Verdict::Mismatch },
        });
    }
    let all_match = groups.iter().all(|g| g.verdict == Verdict::Match);
    Ok(TransitionVerification { p: ch.label(), groups, all_match })
}

// ---------------------------------------------------------------------------
// Return probabilities

fn min_depth(n: usize) -> usize {
    n.div_ceil(2)
}

fn propagate<W: Semiring>(table: &TransitionTable, n: usize) -> Result<Vec<W>> {
    let (p, q) = W::channel(&table.channel)?;
    let index: BTreeMap<MetricState, usize> = table.nodes.keys().enumerate().map(|(i, s)| (*s, i)).collect();
    let edges: Vec<Vec<(usize, W)>> = table
        .nodes
        .values()
        .map(|node| node.edges.iter().map(|e| (index[&e.to], e.value(&p, &q))).collect())
        .collect();
    let origin = index[&MetricState::ORIGIN];
    let mut mass = vec![W::zero(); index.len()];
    mass[origin] = W::one();
    let mut out = vec![mass[origin].clone()];
    for _ in 0..n {
        let mut next = vec![W::zero(); mass.len()];
        for (i, m) in mass.iter().enumerate() {
            if m.is_null() {
                continue;
            }
            for (j, w) in &edges[i] {
                next[*j] = next[*j].add(&m.mul(w));
            }
        }
        mass = next;
        out.push(mass[origin].clone());
    }
    Ok(out)
}

/// `P_0(k)` for every `k <= n`: probability of being at `(0,0,0)` at time `k`.
pub fn reach_prob_series(n: usize, ch: &ChannelParams, mode: ArithmeticMode, depth: Option<u32>) -> Result<Vec<Number>> {
    let depth = depth.unwrap_or(n.max(1) as u32);
    if (depth as usize) < min_depth(n) {
        return Err(Error::DepthTooShallow { depth: depth as usize, n, need: min_depth(n) });
    }
    let table = derive_transitions(ch, depth.max(1))?;
    Ok(match mode {
        ArithmeticMode::Rational => propagate::<Rational>(&table, n)?.iter().map(Semiring::to_number).collect(),
        ArithmeticMode::LogFloat => propagate::<LogProb>(&table, n)?.iter().map(Semiring::to_number).collect(),
    })
}

/// Log of `P_0(n)` in the log domain, for horizons where the value underflows.
pub fn reach_ln_prob(n: usize, ch: &ChannelParams) -> Result<f64> {
    let table = derive_transitions(ch, min_depth(n).max(1) as u32)?;
    Ok(propagate::<LogProb>(&table, n)?.last().unwrap().0)
}

pub fn reach_prob(n: usize, ch: &ChannelParams, mode: ArithmeticMode, depth: Option<u32>) -> Result<Number> {
    Ok(reach_prob_series(n, ch, mode, depth)?.pop().unwrap())
}

/// Closed paths of length 2 at `s`, as `(intermediate state, probability)`.
pub fn enumerate_two_loops(s: &MetricState, table: &TransitionTable) -> Result<Vec<(MetricState, Rational)>> {
    let node = table.node(s).ok_or_else(|| Error::InvalidArgument(format!("state {s} is not in the table")))?;
    let (p, q) = (table.channel.p_exact()?, table.channel.q_exact()?);
    let mut out = Vec::new();
    for e in &node.edges {
        if let Some(back) = table.node(&e.to).and_then(|m| m.edges.iter().find(|b| b.to == *s)) {
            out.push((e.to, e.value(&p, &q) * back.value(&p, &q)));
        }
    }
    Ok(out)
}

/// Total probability of 2-loops at `s` that pass through a deeper state.
pub fn outward_loop_mass(s: &MetricState, table: &TransitionTable) -> Result<Rational> {
    Ok(enumerate_two_loops(s, table)?
        .into_iter()
        .filter(|(mid, _)| mid.depth() > s.depth())
        .fold(exact::zero(), |a, (_, w)| a + w))
}

// ---------------------------------------------------------------------------
// Path series

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathComposition {
    /// 2-paths through a basic state.
    pub n2: usize,
    /// 3-paths through two basic states.
    pub n3: usize,
    /// Outward 2-loops.
    pub k2: usize,
    /// Number of segments, `n2 + n3 + k2`.
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesVariant {
    /// Only integer-feasible compositions; a rigorous lower bound on `P_0(n)`.
    Restricted,
    /// The smooth closed-form expression.
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesTerm {
    pub composition: PathComposition,
    /// Number of distinct paths with this composition, as a decimal string.
    pub multiplicity: String,
    pub value: Number,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesResult {
    pub n: usize,
    pub variant: SeriesVariant,
    pub value: Number,
    pub ln_value: f64,
    pub terms: Vec<SeriesTerm>,
    /// Closed form only: whether the value exceeds the exact return probability.
    pub exceeds_reach: Option<bool>,
}

fn series_sum<W: Semiring>(
    ch: &ChannelParams,
    terms: &[(PathComposition, BigInt, usize, usize)],
) -> Result<(W, Vec<SeriesTerm>)> {
    let (p, q) = W::channel(ch)?;
    let pq = p.mul(&q);
    let pq2 = pq.mul(&q);
    let pow = |w: &W, e: usize| (0..e).fold(W::one(), |acc, _| acc.mul(w));
    let mut total = W::zero();
    let mut out = Vec::new();
    for (comp, count, twos, threes) in terms {
        let c = W::from_rational(&Rational::from_integer(count.clone()));
        let v = c.mul(&pow(&pq, *twos)).mul(&pow(&pq2, *threes));
        total = total.add(&v);
        out.push(SeriesTerm { composition: *comp, multiplicity: count.to_string(), value: v.to_number() });
    }
    Ok((total, out))
}

fn feasible(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=n / 2).filter(move |k| (n - 2 * k).is_multiple_of(3)).map(move |k| (k, (n - 2 * k) / 3))
}

/// Binary-forest count: ways to hang `k` nested loops on `r` slots.
fn loop_forests(r: usize, k: usize) -> BigInt {
    if k == 0 {
        return BigInt::one();
    }
    binomial(BigInt::from(2 * k + r), BigInt::from(k)) * BigInt::from(r) / BigInt::from(2 * k + r)
}

fn restricted(
    n: usize,
    ch: &ChannelParams,
    mode: ArithmeticMode,
    variant: SeriesVariant,
    terms: Vec<(PathComposition, BigInt, usize, usize)>,
) -> Result<SeriesResult> {
    let (value, terms, ln_value) = match mode {
        ArithmeticMode::Rational => {
            let (v, t) = series_sum::<Rational>(ch, &terms)?;
            let ln = v.ln();
            (v.to_number(), t, ln)
        }
        ArithmeticMode::LogFloat => {
            let (v, t) = series_sum::<LogProb>(ch, &terms)?;
            (v.to_number(), t, v.0)
        }
    };
    Ok(SeriesResult { n, variant, value, ln_value, terms, exceeds_reach: None })
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("path series needs n >= 2, got {n}")));
    }
    Ok(())
}

/// Paths confined to the main and basic states.
pub fn series_basic(n: usize, ch: &ChannelParams, variant: SeriesVariant, mode: ArithmeticMode) -> Result<SeriesResult> {
    check_n(n)?;
    let comps: Vec<_> = feasible(n)
        .map(|(n2, n3)| {
            let comp = PathComposition { n2, n3, k2: 0, m: n2 + n3 };
            (comp, binomial(BigInt::from(n2 + n3), BigInt::from(n2)), n2, n3)
        })
        .collect();
    match variant {
        SeriesVariant::Restricted => restricted(n, ch, mode, variant, comps),
        SeriesVariant::ClosedForm => {
            // (1/n) (pq^2)^{n/3} (1 + z^{1/3})^{n(1 + a0)/3}
            let a0 = bounds::a0_for_channel(ch)?.closed_form;
            let ln = closed_form_ln(ch, n as f64 / 3.0, n as f64 * (1.0 + a0) / 3.0) - (n as f64).ln();
            closed(n, ch, variant, ln, comps, false)
        }
    }
}

/// Paths built from 3-paths with outward 2-loops nested anywhere along them.
pub fn series_with_loops(n: usize, ch: &ChannelParams, variant: SeriesVariant, mode: ArithmeticMode) -> Result<SeriesResult> {
    check_n(n)?;
    let comps: Vec<_> = feasible(n)
        .map(|(k2, n3)| {
            let comp = PathComposition { n2: 0, n3, k2, m: n3 + k2 };
            (comp, loop_forests(3 * n3 + 1, k2), k2, n3)
        })
        .collect();
    match variant {
        SeriesVariant::Restricted => restricted(n, ch, mode, variant, comps),
        SeriesVariant::ClosedForm => {
            // (1/2) (pq^2)^{n/3} (1 + z^{1/3})^n
            let ln = closed_form_ln(ch, n as f64 / 3.0, n as f64) - std::f64::consts::LN_2;
            closed(n, ch, variant, ln, comps, true)
        }
    }
}

/// `ln[(pq^2)^a (1 + z^{1/3})^b]`.
fn closed_form_ln(ch: &ChannelParams, a: f64, b: f64) -> f64 {
    let (p, q) = (ch.p(), ch.q());
    let ln_pq2 = p.ln() + 2.0 * q.ln();
    let z3 = (p / q).cbrt();
    a * ln_pq2 + b * z3.ln_1p()
}

fn closed(
    n: usize,
    ch: &ChannelParams,
    variant: SeriesVariant,
    ln: f64,
    comps: Vec<(PathComposition, BigInt, usize, usize)>,
    compare: bool,
) -> Result<SeriesResult> {
    let exceeds_reach = if compare { Some(ln > reach_ln_prob(n, ch)?) } else { None };
    let (_, terms) = series_sum::<LogProb>(ch, &comps)?;
    Ok(SeriesResult { n, variant, value: Number::Float(ln.exp()), ln_value: ln, terms, exceeds_reach })
}

// ---------------------------------------------------------------------------
// Export

fn node_style(node: &ChainNode) -> &'static str {
    match (node.kind, node.boundary) {
        (StateKind::Main, _) => "shape=doublecircle, style=filled, fillcolor=gold",
        (StateKind::Basic, _) => "shape=circle, style=filled, fillcolor=lightblue",
        (StateKind::Tentacle, false) => "shape=circle",
        (StateKind::Tentacle, true) => "shape=circle, style=dashed",
    }
}

/// DOT text of the table; nodes ordered by depth, then label.
pub fn export_dot(table: &TransitionTable) -> String {
    let mut nodes: Vec<&ChainNode> = table.nodes.values().collect();
    nodes.sort_by_key(|n| (n.state.depth(), n.state));
    let mut out = String::new();
    let _ = writeln!(out, "digraph octopus {{");
    let _ = writeln!(out, "  // p = {}, depth = {}", table.channel.label(), table.depth);
    let _ = writeln!(out, "  rankdir=LR;");
    for n in &nodes {
        let _ = writeln!(out, "  \"{}\" [label=\"{}\", {}];", n.state.label(), n.state.label(), node_style(n));
    }
    for n in &nodes {
        for e in &n.edges {
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{}\"];", n.state.label(), e.to.label(), e.label());
        }
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableNodeJson {
    pub state: String,
    pub kind: StateKind,
    pub boundary: bool,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableJson {
    pub p: String,
    pub depth: u32,
    pub states: Vec<TableNodeJson>,
}

pub fn table_to_json(table: &TransitionTable) -> TableJson {
    TableJson {
        p: table.channel.label(),
        depth: table.depth,
        states: table
            .nodes
            .values()
            .map(|n| TableNodeJson {
                state: n.state.label(),
                kind: n.kind,
                boundary: n.boundary,
                edges: n.edges.iter().map(|e| (e.to.label(), e.label())).collect(),
            })
            .collect(),
    }
}

pub fn table_from_json(doc: &TableJson, ch: &ChannelParams) -> Result<TransitionTable> {
    let mut nodes = BTreeMap::new();
    for n in &doc.states {
        let state = parse_label(&n.state)?;
        let mut edges = Vec::with_capacity(n.edges.len());
        for (to, prob) in &n.edges {
            let (p_coeff, q_coeff) = parse_prob(prob)?;
            edges.push(Edge { to: parse_label(to)?, p_coeff, q_coeff });
        }
        nodes.insert(state, ChainNode { state, kind: n.kind, boundary: n.boundary, edges });
    }
    Ok(TransitionTable { depth: doc.depth, channel: ch.clone(), nodes })
}
