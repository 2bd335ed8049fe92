//! Exact and log-domain dynamic programs over the metric lattice.
//!
//! The forward program propagates the state distribution of a fixed strategy
//! and reads off its decoding error. The backward program computes the optimal
//! error over all metric-state strategies.
//!
//! Backward induction works with the rescaled value
//! `W_t(m) = Z(m) * P(error | m, t steps left) / q^t`, where `Z(m) = sum_i z^{m_i}`.
//! It satisfies
//!
//! ```text
//! W_0(m) = Z(m) - 1
//! W_t(m) = min_j sum_y z^{min raw_y} W_{t-1}(raw_y - min raw_y)
//! ```
//!
//! where `raw_y` is the vote triple after answer `y` to query `{j}`. The
//! optimal error at horizon `n` is `q^n W_n(0,0,0) / 3`. In rational mode, with
//! `z = a/b` in lowest terms, every value of layer `t` is an integer over
//! `b^{N+t}`, so comparisons need no common denominators. One table of horizon
//! `N` answers every horizon `n <= N`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use serde::Serialize;

use crate::belief::{apply_outcome, raw_outcome, MessageId, MetricState, ProbabilityMode, QuerySet};
use crate::channel::{ArithmeticMode, ChannelParams};
use crate::error::{Error, Result};
use crate::exact::{self, Rational};
use crate::report::{csv_document, float_field, Number};
use crate::semiring::{log_add, LogProb, Semiring};
use crate::strategy::{select_query, transmit, QueryDist, StrategyRule};

/// Conditional decoding error in state `s` when `true_msg` was sent:
/// one minus the true message's share of the leader set.
pub fn conditional_error(s: &MetricState, true_msg: MessageId) -> Rational {
    let leaders = s.leaders();
    if leaders.contains(&true_msg) {
        exact::rat(leaders.len() as i64 - 1, leaders.len() as i64)
    } else {
        exact::one()
    }
}

/// Distribution of the metric state at time `time` given the true message.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution<W> {
    pub true_msg: MessageId,
    pub time: usize,
    pub probs: BTreeMap<MetricState, W>,
}

impl<W: Semiring> StateDistribution<W> {
    pub fn initial(true_msg: MessageId) -> Self {
        StateDistribution { true_msg, time: 0, probs: BTreeMap::from([(MetricState::ORIGIN, W::one())]) }
    }

    pub fn total(&self) -> W {
        self.probs.values().fold(W::zero(), |acc, w| acc.add(w))
    }

    pub fn get(&self, s: &MetricState) -> W {
        self.probs.get(s).cloned().unwrap_or_else(W::zero)
    }

    pub fn error(&self) -> W {
        self.probs.iter().fold(W::zero(), |acc, (s, w)| {
            let e = conditional_error(s, self.true_msg);
            if Zero::is_zero(&e) {
                acc
            } else {
                acc.add(&w.mul(&W::from_rational(&e)))
            }
        })
    }
}

/// Forward propagation of a fixed strategy.
///
/// Permutation-symmetric rules are tracked for true message 1 only; other
/// rules average over all three true messages.
#[derive(Debug, Clone)]
pub struct ForwardDp<W> {
    rule: StrategyRule,
    p: W,
    q: W,
    half: W,
    third: W,
    dists: Vec<StateDistribution<W>>,
}

impl<W: Semiring> ForwardDp<W> {
    pub fn new(ch: &ChannelParams, rule: &StrategyRule) -> Result<Self> {
        let (p, q) = W::channel(ch)?;
        let thetas: Vec<MessageId> =
            if rule.is_permutation_symmetric() { vec![MessageId::ALL[0]] } else { MessageId::ALL.to_vec() };
        Ok(ForwardDp {
            rule: rule.clone(),
            p,
            q,
            half: W::from_rational(&exact::rat(1, 2)),
            third: W::from_rational(&exact::rat(1, 3)),
            dists: thetas.into_iter().map(StateDistribution::initial).collect(),
        })
    }

    pub fn time(&self) -> usize {
        self.dists[0].time
    }

    pub fn distributions(&self) -> &[StateDistribution<W>] {
        &self.dists
    }

    fn share(&self, w: crate::strategy::Weight) -> Option<W> {
        let (n, d) = (*w.numer(), *w.denom());
        match (n, d) {
            (1, 1) => None,
            (1, 2) => Some(self.half.clone()),
            (1, 3) => Some(self.third.clone()),
            _ => Some(W::from_rational(&QueryDist::weight_rational(w))),
        }
    }

    pub fn advance(&mut self) -> Result<()> {
        let mut out = Vec::with_capacity(self.dists.len());
        for dist in &self.dists {
            let mut next: BTreeMap<MetricState, W> = BTreeMap::new();
            for (s, w) in &dist.probs {
                if w.is_null() {
                    continue;
                }
                let qd = select_query(&self.rule, s, dist.time)?;
                for (query, weight) in qd.support() {
                    let base = match self.share(weight) {
                        None => w.clone(),
                        Some(f) => w.mul(&f),
                    };
                    let x = transmit(query, dist.true_msg);
                    for y in 0..2u8 {
                        let law = if y == x { &self.q } else { &self.p };
                        if law.is_null() {
                            continue;
                        }
                        let mass = base.mul(law);
                        let to = apply_outcome(s, query, y);
                        match next.get_mut(&to) {
                            Some(acc) => *acc = acc.add(&mass),
                            None => {
                                next.insert(to, mass);
                            }
                        }
                    }
                }
            }
            out.push(StateDistribution { true_msg: dist.true_msg, time: dist.time + 1, probs: next });
        }
        self.dists = out;
        Ok(())
    }

    fn average(&self, f: impl Fn(&StateDistribution<W>) -> W) -> W {
        let total = self.dists.iter().fold(W::zero(), |acc, d| acc.add(&f(d)));
        if self.dists.len() == 1 {
            total
        } else {
            total.mul(&W::from_rational(&exact::rat(1, self.dists.len() as i64)))
        }
    }

    /// Decoding error probability at the current time.
    pub fn error(&self) -> W {
        self.average(|d| d.error())
    }

    /// The part of the error contributed by the final state `(0,0,0)`.
    pub fn origin_term(&self) -> W {
        let two_thirds = W::from_rational(&exact::rat(2, 3));
        self.average(|d| d.get(&MetricState::ORIGIN).mul(&two_thirds))
    }

    pub fn state_count(&self) -> usize {
        self.dists.iter().map(|d| d.probs.len()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardResult {
    pub n: usize,
    pub pe: Number,
    pub ln_pe: f64,
    pub origin_term: Number,
    /// `-ln(P_e)/n`, absent for `n = 0`.
    pub exponent: Option<f64>,
}

fn forward_result<W: Semiring>(dp: &ForwardDp<W>) -> ForwardResult {
    let err = dp.error();
    let n = dp.time();
    let ln_pe = err.ln();
    ForwardResult {
        n,
        pe: err.to_number(),
        ln_pe,
        origin_term: dp.origin_term().to_number(),
        exponent: (n > 0).then(|| -ln_pe / n as f64),
    }
}

fn forward_run<W: Semiring>(n: usize, ch: &ChannelParams, rule: &StrategyRule) -> Result<Vec<ForwardResult>> {
    let mut dp = ForwardDp::<W>::new(ch, rule)?;
    let mut rows = vec![forward_result(&dp)];
    for _ in 0..n {
        dp.advance()?;
        rows.push(forward_result(&dp));
    }
    Ok(rows)
}

/// Results for every horizon `0..=n` of one forward pass.
pub fn forward_error_series(
    n: usize,
    ch: &ChannelParams,
    rule: &StrategyRule,
    mode: ArithmeticMode,
) -> Result<Vec<ForwardResult>> {
    match mode {
        ArithmeticMode::Rational => forward_run::<Rational>(n, ch, rule),
        ArithmeticMode::LogFloat => forward_run::<LogProb>(n, ch, rule),
    }
}

/// Error probability of `rule` at horizon `n`.
pub fn forward_error_prob(
    n: usize,
    ch: &ChannelParams,
    rule: &StrategyRule,
    mode: ArithmeticMode,
) -> Result<ForwardResult> {
    Ok(forward_error_series(n, ch, rule, mode)?.pop().expect("series has n + 1 rows"))
}

// ---------------------------------------------------------------------------
// Backward induction

pub const DEFAULT_STATE_CAP: usize = 20_000_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct BellmanOptions {
    /// Upper limit on the total number of (time, state) cells.
    pub state_cap: usize,
    /// Argmax tolerance on the value scale, float mode only.
    pub tolerance: f64,
}

impl Default for BellmanOptions {
    fn default() -> Self {
        BellmanOptions { state_cap: DEFAULT_STATE_CAP, tolerance: DEFAULT_TOLERANCE }
    }
}

/// Number of cells in the domain of a horizon-`n` table.
pub fn table_cells(n: usize) -> usize {
    (0..=n).map(|t| layer_size(n - t)).sum()
}

fn layer_size(max: usize) -> usize {
    (max + 1).pow(3) - max.pow(3)
}

/// States with minimum 0 and maximum at most `max`, in lexicographic order.
fn layer_states(max: u32) -> Vec<MetricState> {
    let mut v = Vec::with_capacity(layer_size(max as usize));
    for a in 0..=max {
        for b in 0..=max {
            for c in 0..=max {
                if a == 0 || b == 0 || c == 0 {
                    v.push(MetricState::normalized([a, b, c]));
                }
            }
        }
    }
    v
}

trait BellmanArith {
    type V: Clone;
    fn w0(&self, s: &MetricState) -> Self::V;
    /// `z^{shift} v` carried from layer `t-1` to layer `t`.
    fn lift(&self, shifted: bool, v: &Self::V) -> Self::V;
    fn add(&self, a: &Self::V, b: &Self::V) -> Self::V;
    fn cmp(&self, a: &Self::V, b: &Self::V) -> Ordering;
    /// Whether `other` is within tolerance of the best value `best` on the value scale.
    fn tied(&self, t: usize, s: &MetricState, best: &Self::V, other: &Self::V) -> bool;
    /// `q^t W / Z(s)`, the conditional error.
    fn error_of(&self, t: usize, s: &MetricState, w: &Self::V) -> Number;
    /// `q^t (other - best) / Z(s)`.
    fn gap(&self, t: usize, s: &MetricState, best: &Self::V, other: &Self::V) -> Number;
    fn ln_error_of(&self, t: usize, s: &MetricState, w: &Self::V) -> f64;
}

struct ExactArith {
    horizon: usize,
    a: BigUint,
    b: BigUint,
    /// Denominator of p.
    den: BigUint,
    a_pows: Vec<BigUint>,
    b_pows: Vec<BigUint>,
}

impl ExactArith {
    fn new(ch: &ChannelParams, horizon: usize) -> Result<Self> {
        let z = ch.z_exact()?;
        let p = ch.p_exact()?;
        let a = z.numer().to_biguint().expect("z > 0");
        let b = z.denom().to_biguint().expect("z > 0");
        let den = p.denom().to_biguint().expect("p > 0");
        let mut a_pows = vec![BigUint::one()];
        let mut b_pows = vec![BigUint::one()];
        for _ in 0..=horizon {
            a_pows.push(a_pows.last().unwrap() * &a);
            b_pows.push(b_pows.last().unwrap() * &b);
        }
        Ok(ExactArith { horizon, a, b, den, a_pows, b_pows })
    }

    /// `Z(s)` as a rational.
    fn partition(&self, s: &MetricState) -> Rational {
        s.get().iter().fold(exact::zero(), |acc, &m| {
            acc + Rational::new(
                BigInt::from(self.a_pows[m as usize].clone()),
                BigInt::from(self.b_pows[m as usize].clone()),
            )
        })
    }

    /// `q^t / (b^{N+t} Z(s))`: the factor turning a scaled numerator into an error.
    fn scale(&self, t: usize, s: &MetricState) -> Rational {
        let denom = num_traits::pow(self.den.clone(), t) * self.b_pows[self.horizon].clone();
        Rational::new(BigInt::one(), BigInt::from(denom)) / self.partition(s)
    }
}

impl BellmanArith for ExactArith {
    type V = BigUint;

    fn w0(&self, s: &MetricState) -> BigUint {
        let m = s.get();
        let skip = m.iter().position(|&x| x == 0).expect("normalized");
        let n = self.horizon;
        m.iter()
            .enumerate()
            .filter(|&(i, _)| i != skip)
            .map(|(_, &mi)| &self.a_pows[mi as usize] * &self.b_pows[n - mi as usize])
            .sum()
    }

    fn lift(&self, shifted: bool, v: &BigUint) -> BigUint {
        if shifted {
            v * &self.a
        } else {
            v * &self.b
        }
    }

    fn add(&self, a: &BigUint, b: &BigUint) -> BigUint {
        a + b
    }

    fn cmp(&self, a: &BigUint, b: &BigUint) -> Ordering {
        a.cmp(b)
    }

    fn tied(&self, _t: usize, _s: &MetricState, best: &BigUint, other: &BigUint) -> bool {
        best == other
    }

    fn error_of(&self, t: usize, s: &MetricState, w: &BigUint) -> Number {
        Number::Exact(Rational::from(BigInt::from(w.clone())) * self.scale(t, s))
    }

    fn gap(&self, t: usize, s: &MetricState, best: &BigUint, other: &BigUint) -> Number {
        let diff = BigInt::from(other.clone()) - BigInt::from(best.clone());
        Number::Exact(Rational::from(diff) * self.scale(t, s))
    }

    fn ln_error_of(&self, t: usize, s: &MetricState, w: &BigUint) -> f64 {
        exact::ln_biguint(w) + exact::ln_rational(&self.scale(t, s))
    }
}

struct LogArith {
    ln_z: f64,
    ln_q: f64,
    tolerance: f64,
}

impl LogArith {
    fn ln_partition(&self, s: &MetricState) -> f64 {
        s.get().iter().fold(f64::NEG_INFINITY, |acc, &m| log_add(acc, m as f64 * self.ln_z))
    }
}

impl BellmanArith for LogArith {
    type V = f64;

    fn w0(&self, s: &MetricState) -> f64 {
        let m = s.get();
        let skip = m.iter().position(|&x| x == 0).expect("normalized");
        m.iter()
            .enumerate()
            .filter(|&(i, _)| i != skip)
            .fold(f64::NEG_INFINITY, |acc, (_, &mi)| log_add(acc, mi as f64 * self.ln_z))
    }

    fn lift(&self, shifted: bool, v: &f64) -> f64 {
        if shifted {
            v + self.ln_z
        } else {
            *v
        }
    }

    fn add(&self, a: &f64, b: &f64) -> f64 {
        log_add(*a, *b)
    }

    fn cmp(&self, a: &f64, b: &f64) -> Ordering {
        a.total_cmp(b)
    }

    fn tied(&self, t: usize, s: &MetricState, best: &f64, other: &f64) -> bool {
        self.gap_f64(t, s, *best, *other) <= self.tolerance
    }

    fn error_of(&self, t: usize, s: &MetricState, w: &f64) -> Number {
        Number::Float(self.ln_error_of(t, s, w).exp())
    }

    fn gap(&self, t: usize, s: &MetricState, best: &f64, other: &f64) -> Number {
        Number::Float(self.gap_f64(t, s, *best, *other))
    }

    fn ln_error_of(&self, t: usize, s: &MetricState, w: &f64) -> f64 {
        t as f64 * self.ln_q + w - self.ln_partition(s)
    }
}

impl LogArith {
    fn gap_f64(&self, t: usize, s: &MetricState, best: f64, other: f64) -> f64 {
        if other == best {
            return 0.0;
        }
        (self.ln_error_of(t, s, &best)).exp() * (other - best).exp_m1()
    }
}

struct Layer<V> {
    states: Vec<MetricState>,
    values: Vec<V>,
    /// Bit `j` set when query `{j+1}` attains the optimum.
    argmax: Vec<u8>,
}

impl<V> Layer<V> {
    fn index(&self, s: &MetricState) -> Option<usize> {
        self.states.binary_search(s).ok()
    }
}

struct Table<A: BellmanArith> {
    arith: A,
    horizon: usize,
    layers: Vec<Layer<A::V>>,
}

impl<A: BellmanArith> Table<A> {
    fn build(arith: A, horizon: usize) -> Self {
        let mut layers: Vec<Layer<A::V>> = Vec::with_capacity(horizon + 1);
        let states = layer_states(horizon as u32);
        let values = states.iter().map(|s| arith.w0(s)).collect();
        let argmax = vec![0b111; states.len()];
        layers.push(Layer { states, values, argmax });
        for t in 1..=horizon {
            let states = layer_states((horizon - t) as u32);
            let mut values = Vec::with_capacity(states.len());
            let mut argmax = Vec::with_capacity(states.len());
            let prev = &layers[t - 1];
            for s in &states {
                let cands = candidates(&arith, prev, s);
                let best = (0..3).min_by(|&i, &j| arith.cmp(&cands[i], &cands[j])).unwrap();
                let mut mask = 0u8;
                for (j, c) in cands.iter().enumerate() {
                    if arith.tied(t, s, &cands[best], c) {
                        mask |= 1 << j;
                    }
                }
                values.push(cands[best].clone());
                argmax.push(mask);
            }
            layers.push(Layer { states, values, argmax });
        }
        Table { arith, horizon, layers }
    }

    fn candidates(&self, t: usize, s: &MetricState) -> Option<[A::V; 3]> {
        if t == 0 || t > self.horizon {
            return None;
        }
        self.layers[t].index(s)?;
        Some(candidates(&self.arith, &self.layers[t - 1], s))
    }

    fn value(&self, t: usize, s: &MetricState) -> Option<&A::V> {
        let layer = self.layers.get(t)?;
        layer.index(s).map(|i| &layer.values[i])
    }

    fn mask(&self, t: usize, s: &MetricState) -> Option<u8> {
        let layer = self.layers.get(t)?;
        layer.index(s).map(|i| layer.argmax[i])
    }
}

fn candidates<A: BellmanArith>(arith: &A, prev: &Layer<A::V>, s: &MetricState) -> [A::V; 3] {
    MessageId::ALL.map(|j| {
        let q = QuerySet::single(j);
        let mut acc: Option<A::V> = None;
        for y in 0..2u8 {
            let raw = raw_outcome(s, q, y);
            let shifted = raw.iter().all(|&v| v > 0);
            let next = MetricState::normalized(raw);
            let i = prev.index(&next).expect("successor lies in the previous layer");
            let term = arith.lift(shifted, &prev.values[i]);
            acc = Some(match acc {
                None => term,
                Some(a) => arith.add(&a, &term),
            });
        }
        acc.unwrap()
    })
}

enum Inner {
    Exact(Table<ExactArith>),
    Log(Table<LogArith>),
}

macro_rules! with_table {
    ($self:expr, $t:ident => $body:expr) => {
        match &$self.inner {
            Inner::Exact($t) => $body,
            Inner::Log($t) => $body,
        }
    };
}

/// Optimal values for every remaining time `t <= horizon` and every state in
/// the domain `{min = 0, max <= horizon - t}`. Immutable once built.
pub struct ValueTable {
    inner: Inner,
    mode: ArithmeticMode,
    tolerance: Option<f64>,
}

fn mask_members(mask: u8) -> Vec<MessageId> {
    MessageId::ALL.into_iter().filter(|m| mask & (1 << m.index()) != 0).collect()
}

impl ValueTable {
    pub fn horizon(&self) -> usize {
        with_table!(self, t => t.horizon)
    }

    pub fn mode(&self) -> ArithmeticMode {
        self.mode
    }

    /// Argmax tolerance; `None` means exact comparison.
    pub fn tolerance(&self) -> Option<f64> {
        self.tolerance
    }

    pub fn cells(&self) -> usize {
        with_table!(self, t => t.layers.iter().map(|l| l.states.len()).sum())
    }

    /// Optimal error probability at horizon `n <= horizon()`.
    pub fn optimal_error(&self, n: usize) -> Option<Number> {
        self.error(n, &MetricState::ORIGIN)
    }

    pub fn optimal_ln_error(&self, n: usize) -> Option<f64> {
        with_table!(self, t => t.value(n, &MetricState::ORIGIN).map(|w| t.arith.ln_error_of(n, &MetricState::ORIGIN, w)))
    }

    /// Optimal conditional error `1 - V_t(s)`.
    pub fn error(&self, t: usize, s: &MetricState) -> Option<Number> {
        with_table!(self, tab => tab.value(t, s).map(|w| tab.arith.error_of(t, s, w)))
    }

    /// Expected terminal max-posterior under optimal play, `V_t(s)`.
    pub fn value(&self, t: usize, s: &MetricState) -> Option<Number> {
        self.error(t, s).map(complement)
    }

    /// Values `V` of each singleton query followed by optimal play.
    pub fn query_values(&self, t: usize, s: &MetricState) -> Option<[Number; 3]> {
        with_table!(self, tab => tab.candidates(t, s).map(|c| c.map(|w| complement(tab.arith.error_of(t, s, &w)))))
    }

    /// Queries attaining the optimum at `(t, s)`; all three at `t = 0`.
    pub fn argmax(&self, t: usize, s: &MetricState) -> Option<Vec<MessageId>> {
        with_table!(self, tab => tab.mask(t, s)).map(mask_members)
    }

    /// Value lost by playing `{j}` instead of an optimal query at `(t, s)`.
    pub fn deficit(&self, t: usize, s: &MetricState, j: MessageId) -> Option<Number> {
        with_table!(self, tab => {
            let c = tab.candidates(t, s)?;
            let best = c.iter().min_by(|x, y| tab.arith.cmp(x, y)).unwrap();
            Some(tab.arith.gap(t, s, best, &c[j.index()]))
        })
    }

    pub fn summary(&self) -> ValueTableSummary {
        let h = self.horizon();
        ValueTableSummary {
            horizon: h,
            mode: self.mode,
            tolerance: self.tolerance,
            cells: self.cells(),
            optimal_error: (0..=h).map(|n| self.optimal_error(n).unwrap()).collect(),
            origin_argmax: (0..=h).map(|t| self.argmax(t, &MetricState::ORIGIN).unwrap()).collect(),
            tied_cells: with_table!(self, tab => tab.layers.iter().skip(1).map(|l| l.argmax.iter().filter(|m| m.count_ones() > 1).count()).sum()),
        }
    }
}

fn complement(n: Number) -> Number {
    match n {
        Number::Exact(r) => Number::Exact(exact::one() - r),
        Number::Float(v) => Number::Float(1.0 - v),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueTableSummary {
    pub horizon: usize,
    pub mode: ArithmeticMode,
    pub tolerance: Option<f64>,
    pub cells: usize,
    /// Optimal error for every horizon `0..=horizon`.
    pub optimal_error: Vec<Number>,
    /// Optimal queries at `(0,0,0)` with `t` steps left, indexed by `t`.
    pub origin_argmax: Vec<Vec<MessageId>>,
    /// Cells (with `t >= 1`) whose optimal query is not unique.
    pub tied_cells: usize,
}

pub fn bellman_table(n: usize, ch: &ChannelParams, mode: ArithmeticMode, opts: BellmanOptions) -> Result<ValueTable> {
    let cells = table_cells(n);
    if cells > opts.state_cap {
        return Err(Error::ResourceCap { what: "value table cells", needed: cells, cap: opts.state_cap });
    }
    Ok(match mode {
        ArithmeticMode::Rational => ValueTable {
            inner: Inner::Exact(Table::build(ExactArith::new(ch, n)?, n)),
            mode,
            tolerance: None,
        },
        ArithmeticMode::LogFloat => {
            let arith = LogArith {
                ln_z: ch.p().ln() - (-ch.p()).ln_1p(),
                ln_q: (-ch.p()).ln_1p(),
                tolerance: opts.tolerance,
            };
            ValueTable { inner: Inner::Log(Table::build(arith, n)), mode, tolerance: Some(opts.tolerance) }
        }
    })
}

/// Optimal error probability over all metric-state strategies, with the table.
pub fn bellman_optimum(
    n: usize,
    ch: &ChannelParams,
    mode: ArithmeticMode,
    law: ProbabilityMode,
) -> Result<(Number, ValueTable)> {
    if law != ProbabilityMode::Bayes {
        return Err(Error::InvalidArgument(
            "backward induction needs a coherent transition law; use the bayes probability mode".into(),
        ));
    }
    let table = bellman_table(n, ch, mode, BellmanOptions::default())?;
    let pe = table.optimal_error(n).expect("origin is in every layer");
    Ok((pe, table))
}

// ---------------------------------------------------------------------------
// Max-posterior versus the optimum

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Membership {
    Member,
    NotMember,
}

#[derive(Debug, Clone, Serialize)]
pub struct StateVerdict {
    /// Steps already taken.
    pub time: usize,
    /// Steps remaining.
    pub remaining: usize,
    pub state: MetricState,
    pub leaders: Vec<MessageId>,
    pub argmax: Vec<MessageId>,
    /// Smallest value loss over the leader queries.
    pub deficit: Number,
    pub verdict: Membership,
    /// The optimal query is unique and is a leader.
    pub strict: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem2Report {
    pub n: usize,
    pub p: String,
    pub mode: ArithmeticMode,
    pub tolerance: Option<f64>,
    pub states: Vec<StateVerdict>,
    pub max_deficit: Number,
    pub violations: usize,
    pub strict_states: usize,
    pub summary: Membership,
}

/// States reachable at each time `0..=n` from the origin under any queries.
pub fn reachable_states(n: usize) -> Vec<BTreeSet<MetricState>> {
    let mut layers = vec![BTreeSet::from([MetricState::ORIGIN])];
    for _ in 0..n {
        let mut next = BTreeSet::new();
        for s in layers.last().unwrap() {
            for j in MessageId::ALL {
                for y in 0..2 {
                    next.insert(apply_outcome(s, QuerySet::single(j), y));
                }
            }
        }
        layers.push(next);
    }
    layers
}

/// Checks, for every reachable `(t, s)` with `t >= 1` steps left, whether a
/// max-posterior query is optimal, and by how much it falls short otherwise.
pub fn verify_theorem2_with(table: &ValueTable, n: usize, ch: &ChannelParams) -> Result<Theorem2Report> {
    if n > table.horizon() {
        return Err(Error::InvalidArgument(format!("horizon {n} exceeds table horizon {}", table.horizon())));
    }
    let mut states = Vec::new();
    let mut max_deficit: Option<Number> = None;
    for (time, layer) in reachable_states(n).into_iter().enumerate().take(n) {
        let remaining = n - time;
        for s in layer {
            let leaders = s.leaders();
            let argmax = table.argmax(remaining, &s).expect("reachable state is in the table");
            let deficits: Vec<Number> = leaders.iter().map(|&l| table.deficit(remaining, &s, l).unwrap()).collect();
            let deficit = min_number(deficits);
            let verdict =
                if leaders.iter().any(|l| argmax.contains(l)) { Membership::Member } else { Membership::NotMember };
            let strict = argmax.len() == 1 && leaders.contains(&argmax[0]);
            max_deficit = Some(match max_deficit {
                None => deficit.clone(),
                Some(m) => max_number(m, deficit.clone()),
            });
            states.push(StateVerdict { time, remaining, state: s, leaders, argmax, deficit, verdict, strict });
        }
    }
    let violations = states.iter().filter(|v| v.verdict == Membership::NotMember).count();
    let zero = match table.mode() {
        ArithmeticMode::Rational => Number::Exact(exact::zero()),
        ArithmeticMode::LogFloat => Number::Float(0.0),
    };
    Ok(Theorem2Report {
        n,
        p: ch.label(),
        mode: table.mode(),
        tolerance: table.tolerance(),
        strict_states: states.iter().filter(|v| v.strict).count(),
        states,
        max_deficit: max_deficit.unwrap_or(zero),
        violations,
        summary: if violations == 0 { Membership::Member } else { Membership::NotMember },
    })
}

pub fn verify_theorem2(n: usize, ch: &ChannelParams, mode: ArithmeticMode) -> Result<Theorem2Report> {
    let table = bellman_table(n, ch, mode, BellmanOptions::default())?;
    verify_theorem2_with(&table, n, ch)
}

fn cmp_number(a: &Number, b: &Number) -> Ordering {
    match (a, b) {
        (Number::Exact(x), Number::Exact(y)) => x.cmp(y),
        _ => a.to_f64().total_cmp(&b.to_f64()),
    }
}

fn min_number(v: Vec<Number>) -> Number {
    v.into_iter().min_by(cmp_number).expect("at least one leader")
}

fn max_number(a: Number, b: Number) -> Number {
    if cmp_number(&a, &b) == Ordering::Less {
        b
    } else {
        a
    }
}

// ---------------------------------------------------------------------------
// Error curves

#[derive(Debug, Clone, PartialEq)]
pub enum CurveTarget {
    Rule(StrategyRule),
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub n: usize,
    pub pe: Number,
    pub ln_pe: f64,
    pub exponent: f64,
}

pub const CURVE_CSV_HEADER: &str = "n,p,pe,exponent";

/// `(n, P_e, -ln(P_e)/n)` for `n = 1..=n_max`, from a single pass.
pub fn error_curve(ch: &ChannelParams, target: &CurveTarget, n_max: usize, mode: ArithmeticMode) -> Result<Vec<CurveRow>> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("error curve needs n_max >= 1".into()));
    }
    let rows = match target {
        CurveTarget::Rule(rule) => forward_error_series(n_max, ch, rule, mode)?
            .into_iter()
            .skip(1)
            .map(|r| CurveRow { n: r.n, exponent: -r.ln_pe / r.n as f64, pe: r.pe, ln_pe: r.ln_pe })
            .collect(),
        CurveTarget::Optimal => {
            let table = bellman_table(n_max, ch, mode, BellmanOptions::default())?;
            (1..=n_max)
                .map(|n| {
                    let ln_pe = table.optimal_ln_error(n).unwrap();
                    CurveRow { n, pe: table.optimal_error(n).unwrap(), ln_pe, exponent: -ln_pe / n as f64 }
                })
                .collect()
        }
    };
    Ok(rows)
}

pub fn curve_csv(ch: &ChannelParams, rows: &[CurveRow]) -> String {
    let p = ch.label();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.n.to_string(), p.clone(), float_field(r.pe.to_f64()), float_field(r.exponent)])
        .collect();
    csv_document(CURVE_CSV_HEADER, &body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelMode;
    use crate::exact::rat;

    fn exact_ch(p: &str) -> ChannelParams {
        ChannelParams::new(p, ChannelMode::Rational).unwrap()
    }

    #[test]
    fn forward_small_horizons() {
        let ch = exact_ch("1/10");
        let rule = StrategyRule::max_posterior();
        let r0 = forward_error_prob(0, &ch, &rule, ArithmeticMode::Rational).unwrap();
        assert_eq!(r0.pe, Number::Exact(rat(2, 3)));
        let r1 = forward_error_prob(1, &ch, &rule, ArithmeticMode::Rational).unwrap();
        assert_eq!(r1.pe, Number::Exact(rat(2, 5)));
        let r3 = forward_error_prob(3, &ch, &rule, ArithmeticMode::Rational).unwrap();
        assert_eq!(r3.origin_term, Number::Exact(rat(27, 500)));
    }

    #[test]
    fn distributions_sum_to_one() {
        let ch = exact_ch("1/5");
        for rule in [StrategyRule::max_posterior(), StrategyRule::round_robin()] {
            let mut dp = ForwardDp::<Rational>::new(&ch, &rule).unwrap();
            for k in 0..8 {
                for d in dp.distributions() {
                    assert_eq!(d.total(), exact::one());
                    assert!(d.probs.keys().all(|s| s.depth() as usize <= k));
                }
                dp.advance().unwrap();
            }
        }
    }

    #[test]
    fn symmetric_shortcut_matches_full_average() {
        let ch = exact_ch("1/10");
        let sym = StrategyRule::max_posterior();
        let full = StrategyRule::max_posterior();
        let mut a = ForwardDp::<Rational>::new(&ch, &sym).unwrap();
        let mut b = ForwardDp::<Rational>::new(&ch, &full).unwrap();
        b.dists = MessageId::ALL.into_iter().map(StateDistribution::initial).collect();
        for _ in 0..7 {
            a.advance().unwrap();
            b.advance().unwrap();
            assert_eq!(a.error(), b.error());
        }
    }

    #[test]
    fn log_mode_tracks_rational() {
        let ch = exact_ch("1/10");
        let rule = StrategyRule::max_posterior();
        let ex = forward_error_series(25, &ch, &rule, ArithmeticMode::Rational).unwrap();
        let lg = forward_error_series(25, &ch, &rule, ArithmeticMode::LogFloat).unwrap();
        for (e, l) in ex.iter().zip(&lg) {
            assert!((e.ln_pe - l.ln_pe).abs() < 1e-12, "n={}", e.n);
        }
    }

    #[test]
    fn bellman_horizon_one() {
        let ch = exact_ch("1/10");
        let (pe, table) = bellman_optimum(1, &ch, ArithmeticMode::Rational, ProbabilityMode::Bayes).unwrap();
        assert_eq!(pe, Number::Exact(rat(2, 5)));
        assert_eq!(table.argmax(1, &MetricState::ORIGIN).unwrap().len(), 3);
        assert_eq!(table.optimal_error(0).unwrap(), Number::Exact(rat(2, 3)));
    }

    #[test]
    fn bellman_rejects_paper_law() {
        let ch = exact_ch("1/10");
        assert!(bellman_optimum(2, &ch, ArithmeticMode::Rational, ProbabilityMode::Paper).is_err());
    }

    #[test]
    fn degenerate_channel_is_flat() {
        let ch = exact_ch("1/2");
        let table = bellman_table(6, &ch, ArithmeticMode::Rational, BellmanOptions::default()).unwrap();
        for n in 0..=6 {
            assert_eq!(table.optimal_error(n).unwrap(), Number::Exact(rat(2, 3)));
        }
        let rep = verify_theorem2_with(&table, 6, &ch).unwrap();
        assert!(rep.states.iter().all(|v| v.deficit == Number::Exact(exact::zero())));
        assert!(rep.states.iter().all(|v| v.argmax.len() == 3));
    }

    #[test]
    fn values_are_monotone_and_bounded() {
        let ch = exact_ch("1/5");
        let table = bellman_table(6, &ch, ArithmeticMode::Rational, BellmanOptions::default()).unwrap();
        let third = rat(1, 3);
        for t in 0..6 {
            for s in layer_states((6 - t - 1) as u32) {
                let a = table.value(t, &s).unwrap();
                let b = table.value(t + 1, &s).unwrap();
                let (a, b) = (a.as_exact().unwrap().clone(), b.as_exact().unwrap().clone());
                assert!(a <= b);
                assert!(a >= third && b <= exact::one());
            }
        }
    }

    #[test]
    fn exact_and_log_tables_agree() {
        let ch = exact_ch("3/10");
        let ex = bellman_table(15, &ch, ArithmeticMode::Rational, BellmanOptions::default()).unwrap();
        let lg = bellman_table(15, &ch, ArithmeticMode::LogFloat, BellmanOptions::default()).unwrap();
        for n in 0..=15 {
            let a = ex.optimal_ln_error(n).unwrap();
            let b = lg.optimal_ln_error(n).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn resource_cap_is_enforced() {
        let ch = exact_ch("1/10");
        let opts = BellmanOptions { state_cap: 100, ..BellmanOptions::default() };
        assert!(matches!(bellman_table(20, &ch, ArithmeticMode::Rational, opts), Err(Error::ResourceCap { .. })));
        assert_eq!(table_cells(0), 1);
        assert_eq!(table_cells(1), 1 + 7);
    }

    #[test]
    fn last_step_leader_has_no_deficit() {
        let ch = exact_ch("1/10");
        let table = bellman_table(5, &ch, ArithmeticMode::Rational, BellmanOptions::default()).unwrap();
        for s in layer_states(4) {
            for l in s.leaders() {
                assert_eq!(table.deficit(1, &s, l).unwrap(), Number::Exact(exact::zero()));
            }
        }
    }

    #[test]
    fn curve_first_row() {
        let ch = exact_ch("1/10");
        let rows = error_curve(&ch, &CurveTarget::Rule(StrategyRule::max_posterior()), 3, ArithmeticMode::Rational).unwrap();
        assert_eq!(rows[0].n, 1);
        assert!((rows[0].exponent - 2.5f64.ln()).abs() < 1e-12);
        let csv = curve_csv(&ch, &rows);
        assert!(csv.starts_with("n,p,pe,exponent\r\n1,1/10,0.4,"));
        let opt = error_curve(&ch, &CurveTarget::Optimal, 3, ArithmeticMode::Rational).unwrap();
        assert_eq!(opt[0].pe, Number::Exact(rat(2, 5)));
        assert!(error_curve(&ch, &CurveTarget::Optimal, 0, ArithmeticMode::Rational).is_err());
    }

    #[test]
    fn conditional_error_values() {
        let s = MetricState::new([0, 0, 1]).unwrap();
        assert_eq!(conditional_error(&s, MessageId::ALL[0]), rat(1, 2));
        assert_eq!(conditional_error(&s, MessageId::ALL[2]), exact::one());
        assert_eq!(conditional_error(&MetricState::ORIGIN, MessageId::ALL[1]), rat(2, 3));
    }
}
