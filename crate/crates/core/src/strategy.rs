//! Query strategies: functions from the metric state to a distribution over
//! the three canonical singleton queries.

use std::collections::BTreeMap;
use std::path::Path;

use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::belief::{apply_outcome, MessageId, MetricState, QuerySet};
use crate::channel::{draw_u64, index_below, unit_interval, ChannelParams, Purpose, Seed};
use crate::error::{Error, Result};
use crate::exact::{self, Rational};

pub type Weight = Ratio<u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    #[default]
    UniformRandom,
    LowestIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleKind {
    MaxPosterior,
    Fixed(MessageId),
    /// Queries message `(k mod 3) + 1` at time `k`.
    RoundRobin,
    Table(BTreeMap<MetricState, QueryDist>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRule {
    pub kind: RuleKind,
    pub tie: TiePolicy,
}

/// Distribution over the singleton queries `{1}, {2}, {3}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryDist(pub [Weight; 3]);

impl QueryDist {
    pub fn point(m: MessageId) -> Self {
        let mut w = [Weight::zero(); 3];
        w[m.index()] = Weight::one();
        QueryDist(w)
    }

    pub fn uniform_over(ms: &[MessageId]) -> Self {
        let share = Weight::new(1, ms.len() as u64);
        let mut w = [Weight::zero(); 3];
        for m in ms {
            w[m.index()] = share;
        }
        QueryDist(w)
    }

    pub fn weight(&self, m: MessageId) -> Weight {
        self.0[m.index()]
    }

    /// Nonzero entries as `(query, weight)`.
    pub fn support(&self) -> impl Iterator<Item = (QuerySet, Weight)> + '_ {
        MessageId::ALL
            .into_iter()
            .filter(|m| !self.0[m.index()].is_zero())
            .map(|m| (QuerySet::single(m), self.0[m.index()]))
    }

    pub fn weight_rational(w: Weight) -> Rational {
        exact::rat(*w.numer() as i64, *w.denom() as i64)
    }

    /// Picks a query from one 64-bit random word.
    pub fn sample(&self, word: u64) -> QuerySet {
        let support: Vec<(QuerySet, Weight)> = self.support().collect();
        if support.len() == 1 {
            return support[0].0;
        }
        if support.iter().all(|(_, w)| *w == support[0].1) {
            return support[index_below(word, support.len())].0;
        }
        let u = unit_interval(word);
        let mut acc = 0.0;
        for (q, w) in &support {
            acc += w.to_f64().unwrap();
            if u < acc {
                return *q;
            }
        }
        support.last().unwrap().0
    }

    fn validate(&self) -> Result<()> {
        let total = self.0.iter().fold(Weight::zero(), |a, b| a + b);
        if total != Weight::one() {
            return Err(Error::BadTable(format!("query weights sum to {total}, not 1")));
        }
        Ok(())
    }
}

impl StrategyRule {
    pub fn max_posterior() -> Self {
        StrategyRule { kind: RuleKind::MaxPosterior, tie: TiePolicy::UniformRandom }
    }

    pub fn fixed(m: MessageId) -> Self {
        StrategyRule { kind: RuleKind::Fixed(m), tie: TiePolicy::UniformRandom }
    }

    pub fn round_robin() -> Self {
        StrategyRule { kind: RuleKind::RoundRobin, tie: TiePolicy::UniformRandom }
    }

    pub fn with_tie(mut self, tie: TiePolicy) -> Self {
        self.tie = tie;
        self
    }

    /// True when relabelling the messages commutes with the rule, so error
    /// probabilities may be computed conditioned on a single true message.
    pub fn is_permutation_symmetric(&self) -> bool {
        matches!(self.kind, RuleKind::MaxPosterior) && self.tie == TiePolicy::UniformRandom
    }

    pub fn name(&self) -> String {
        let base = match &self.kind {
            RuleKind::MaxPosterior => "max-posterior".to_string(),
            RuleKind::Fixed(m) => format!("fixed:{m}"),
            RuleKind::RoundRobin => "round-robin".to_string(),
            RuleKind::Table(t) => format!("table[{}]", t.len()),
        };
        match self.tie {
            TiePolicy::UniformRandom => base,
            TiePolicy::LowestIndex => format!("{base}/lowest-index"),
        }
    }

    /// Parses `max-posterior`, `fixed:J`, `round-robin` or `table:PATH`.
    pub fn parse(spec: &str, tie: TiePolicy) -> Result<Self> {
        let kind = match spec {
            "max-posterior" => RuleKind::MaxPosterior,
            "round-robin" => RuleKind::RoundRobin,
            s if s.starts_with("fixed:") => {
                let id: u8 = s[6..]
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad fixed query in {s:?}")))?;
                RuleKind::Fixed(MessageId::new(id)?)
            }
            s if s.starts_with("table:") => return load_table(Path::new(&s[6..]), tie),
            other => return Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        };
        Ok(StrategyRule { kind, tie })
    }
}

/// The distribution over queries the rule emits in state `s` at time `time`.
pub fn select_query(rule: &StrategyRule, s: &MetricState, time: usize) -> Result<QueryDist> {
    Ok(match &rule.kind {
        RuleKind::MaxPosterior => {
            let leaders = s.leaders();
            match rule.tie {
                TiePolicy::UniformRandom => QueryDist::uniform_over(&leaders),
                TiePolicy::LowestIndex => QueryDist::point(leaders[0]),
            }
        }
        RuleKind::Fixed(m) => QueryDist::point(*m),
        RuleKind::RoundRobin => QueryDist::point(MessageId::from_index(time % 3)),
        RuleKind::Table(t) => *t.get(s).ok_or_else(|| Error::MissingTableEntry(s.to_string()))?,
    })
}

/// One realized channel use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub query: QuerySet,
    pub y: u8,
    pub next: MetricState,
}

/// Samples the query, the channel output for the given true message, and the next state.
/// Draw `t` of the query and noise sub-streams of `seed` is used.
pub fn step(
    rule: &StrategyRule,
    s: &MetricState,
    ch: &ChannelParams,
    true_msg: MessageId,
    seed: Seed,
    t: u64,
) -> Result<StepRecord> {
    if ch.is_exact() {
        return Err(Error::SamplingExactChannel);
    }
    let dist = select_query(rule, s, t as usize)?;
    let query = dist.sample(draw_u64(seed, Purpose::Query, t));
    let flip = unit_interval(draw_u64(seed, Purpose::Noise, t)) < ch.p();
    let y = transmit(query, true_msg) ^ u8::from(flip);
    Ok(StepRecord { query, y, next: apply_outcome(s, query, y) })
}

/// Advances with a prescribed query and output (no sampling).
pub fn step_forced(s: &MetricState, query: QuerySet, y: u8) -> StepRecord {
    StepRecord { query, y, next: apply_outcome(s, query, y) }
}

/// Bit sent by the transmitter: 0 iff the true message is among the queried ones.
pub fn transmit(query: QuerySet, true_msg: MessageId) -> u8 {
    let hit = query.members().contains(&true_msg);
    u8::from(!hit)
}

#[derive(Debug, Deserialize)]
struct TableEntry {
    state: [u32; 3],
    query: Value,
}

fn weight_from_json(v: &Value) -> Result<Weight> {
    let text = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err(Error::BadTable(format!("weight must be a number or string, got {v}"))),
    };
    let r = if text.contains('/') { exact::parse_fraction(&text) } else { exact::parse_decimal(&text) }
        .ok_or_else(|| Error::BadTable(format!("unparseable weight {text:?}")))?;
    let num = r.numer().to_u64();
    let den = r.denom().to_u64();
    match (num, den) {
        (Some(n), Some(d)) => Ok(Weight::new(n, d)),
        _ => Err(Error::BadTable(format!("weight {text} out of range"))),
    }
}

fn dist_from_json(v: &Value) -> Result<QueryDist> {
    let dist = match v {
        Value::Number(n) => {
            let id = n.as_u64().ok_or_else(|| Error::BadTable(format!("bad query {n}")))?;
            QueryDist::point(MessageId::new(id as u8)?)
        }
        Value::Array(ws) if ws.len() == 3 => {
            let mut w = [Weight::zero(); 3];
            for (slot, x) in w.iter_mut().zip(ws) {
                *slot = weight_from_json(x)?;
            }
            QueryDist(w)
        }
        Value::Object(map) => {
            let mut w = [Weight::zero(); 3];
            for (k, x) in map {
                let id: u8 = k.parse().map_err(|_| Error::BadTable(format!("bad query key {k:?}")))?;
                w[MessageId::new(id)?.index()] = weight_from_json(x)?;
            }
            QueryDist(w)
        }
        other => return Err(Error::BadTable(format!("unsupported query spec {other}"))),
    };
    dist.validate()?;
    Ok(dist)
}

/// Reads a table rule: a JSON list of `{"state": [i,j,l], "query": k}` where
/// `query` is a message id, a 3-element weight list, or an object `{"1": w, ...}`.
pub fn parse_table(json: &str, tie: TiePolicy) -> Result<StrategyRule> {
    let entries: Vec<TableEntry> = serde_json::from_str(json)?;
    let mut table = BTreeMap::new();
    for e in entries {
        let s = MetricState::new(e.state)?;
        if table.insert(s, dist_from_json(&e.query)?).is_some() {
            return Err(Error::BadTable(format!("duplicate entry for {s}")));
        }
    }
    Ok(StrategyRule { kind: RuleKind::Table(table), tie })
}

pub fn load_table(path: &Path, tie: TiePolicy) -> Result<StrategyRule> {
    parse_table(&std::fs::read_to_string(path)?, tie)
}

/// Serializes a table rule in the format accepted by [`parse_table`].
pub fn table_to_json(rule: &StrategyRule) -> Option<String> {
    let RuleKind::Table(t) = &rule.kind else { return None };
    let entries: Vec<Value> = t
        .iter()
        .map(|(s, d)| {
            let ws: Vec<Value> = d.0.iter().map(|w| Value::String(w.to_string())).collect();
            serde_json::json!({ "state": s.get(), "query": ws })
        })
        .collect();
    serde_json::to_string(&entries).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{make_channel, ChannelMode};

    fn st(m: [u32; 3]) -> MetricState {
        MetricState::new(m).unwrap()
    }

    fn id(i: u8) -> MessageId {
        MessageId::new(i).unwrap()
    }

    #[test]
    fn max_posterior_examples() {
        let r = StrategyRule::max_posterior();
        let third = Weight::new(1, 3);
        assert_eq!(select_query(&r, &st([0, 0, 0]), 0).unwrap().0, [third; 3]);
        let half = Weight::new(1, 2);
        assert_eq!(select_query(&r, &st([1, 0, 0]), 0).unwrap().0, [Weight::zero(), half, half]);
        assert_eq!(select_query(&r, &st([0, 1, 2]), 0).unwrap(), QueryDist::point(id(1)));
        let low = StrategyRule::max_posterior().with_tie(TiePolicy::LowestIndex);
        assert_eq!(select_query(&low, &st([1, 0, 0]), 0).unwrap(), QueryDist::point(id(2)));
    }

    #[test]
    fn round_robin_and_fixed() {
        let rr = StrategyRule::round_robin();
        for t in 0..6 {
            assert_eq!(select_query(&rr, &st([0, 3, 1]), t).unwrap(), QueryDist::point(MessageId::from_index(t % 3)));
        }
        assert_eq!(select_query(&StrategyRule::fixed(id(3)), &st([0, 0, 0]), 9).unwrap(), QueryDist::point(id(3)));
    }

    #[test]
    fn table_rules_parse_and_report_missing_states() {
        let json = r#"[{"state":[0,0,0],"query":2},
                       {"state":[0,1,1],"query":{"1":"1/2","3":0.5}},
                       {"state":[1,0,0],"query":["1/3","1/3","1/3"]}]"#;
        let rule = parse_table(json, TiePolicy::UniformRandom).unwrap();
        assert_eq!(select_query(&rule, &st([0, 0, 0]), 0).unwrap(), QueryDist::point(id(2)));
        let d = select_query(&rule, &st([0, 1, 1]), 0).unwrap();
        assert_eq!(d.0, [Weight::new(1, 2), Weight::zero(), Weight::new(1, 2)]);
        let e = select_query(&rule, &st([0, 2, 2]), 0).unwrap_err();
        assert!(e.to_string().contains("(0,2,2)"), "{e}");
        let round = parse_table(&table_to_json(&rule).unwrap(), TiePolicy::UniformRandom).unwrap();
        assert_eq!(round, rule);
        assert!(parse_table(r#"[{"state":[0,0,0],"query":{"1":"1/2"}}]"#, TiePolicy::UniformRandom).is_err());
        assert!(parse_table(r#"[{"state":[1,1,0],"query":4}]"#, TiePolicy::UniformRandom).is_err());
    }

    #[test]
    fn forced_step_example() {
        let r = step_forced(&st([0, 0, 0]), QuerySet::single(id(1)), 0);
        assert_eq!(r.next, st([0, 1, 1]));
    }

    #[test]
    fn transmitter_convention() {
        assert_eq!(transmit(QuerySet::single(id(1)), id(1)), 0);
        assert_eq!(transmit(QuerySet::single(id(1)), id(2)), 1);
    }

    #[test]
    fn step_replays_and_refuses_exact_channels() {
        let ch = make_channel("0.1", ChannelMode::Float).unwrap();
        let r = StrategyRule::max_posterior();
        let seed = Seed::new(99, 4);
        let a = step(&r, &st([0, 0, 0]), &ch, id(2), seed, 7).unwrap();
        let b = step(&r, &st([0, 0, 0]), &ch, id(2), seed, 7).unwrap();
        assert_eq!(a, b);
        let exact = make_channel("1/10", ChannelMode::Rational).unwrap();
        assert!(step(&r, &st([0, 0, 0]), &exact, id(1), seed, 0).is_err());
    }

    #[test]
    fn degenerate_channel_outputs_are_uniform() {
        let ch = make_channel("1/2", ChannelMode::Float).unwrap();
        let r = StrategyRule::max_posterior();
        let n = 100_000u64;
        let mut s = MetricState::ORIGIN;
        let mut ones = 0u64;
        for t in 0..n {
            let rec = step(&r, &s, &ch, id(1), Seed::new(31337, 0), t).unwrap();
            ones += u64::from(rec.y);
            s = rec.next;
        }
        let sigma = (0.25 / n as f64).sqrt();
        assert!((ones as f64 / n as f64 - 0.5).abs() <= 4.0 * sigma);
    }

    #[test]
    fn max_posterior_ignores_magnitudes() {
        // same leader sets, different gaps
        let r = StrategyRule::max_posterior();
        for (a, b) in [([0, 1, 1], [0, 7, 3]), ([0, 0, 2], [0, 0, 9]), ([4, 0, 1], [1, 0, 8])] {
            assert_eq!(select_query(&r, &st(a), 0).unwrap(), select_query(&r, &st(b), 0).unwrap());
        }
    }

    #[test]
    fn sampling_respects_the_distribution_support() {
        let d = QueryDist::uniform_over(&[id(2), id(3)]);
        for w in [0u64, 1 << 40, u64::MAX / 2, u64::MAX] {
            assert_ne!(d.sample(w).target, id(1));
        }
        let skew = QueryDist([Weight::new(1, 4), Weight::new(3, 4), Weight::zero()]);
        assert_eq!(skew.sample(0).target, id(1));
        assert_eq!(skew.sample(u64::MAX).target, id(2));
    }
}
