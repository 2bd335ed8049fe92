//! Vote-count metric states, posteriors, query outcomes and the one-step
//! expected-posterior comparison between the three possible queries.

use std::fmt;

use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::exact::{self, Rational};

/// Scalar type usable for posteriors and outcome probabilities: exact rationals or `f64`.
pub trait Scalar: Num + Clone + PartialOrd + fmt::Debug {
    fn channel_values(ch: &ChannelParams) -> Result<ChannelValues<Self>>;
    fn to_f64(&self) -> f64;
    fn from_ratio(num: i64, den: i64) -> Self;
}

impl Scalar for Rational {
    fn channel_values(ch: &ChannelParams) -> Result<ChannelValues<Self>> {
        Ok(ChannelValues { p: ch.p_exact()?, q: ch.q_exact()?, z: ch.z_exact()? })
    }

    fn to_f64(&self) -> f64 {
        exact::to_f64(self)
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        exact::rat(num, den)
    }
}

impl Scalar for f64 {
    fn channel_values(ch: &ChannelParams) -> Result<ChannelValues<Self>> {
        Ok(ChannelValues { p: ch.p(), q: ch.q(), z: ch.z() })
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
}

/// `p`, `q` and `z = p/q` in a chosen scalar type.
#[derive(Debug, Clone)]
pub struct ChannelValues<F> {
    pub p: F,
    pub q: F,
    pub z: F,
}

impl<F: Scalar> ChannelValues<F> {
    pub fn of(ch: &ChannelParams) -> Result<Self> {
        F::channel_values(ch)
    }

    pub fn z_pow(&self, k: u32) -> F {
        num_traits::pow(self.z.clone(), k as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct MessageId(u8);

impl MessageId {
    pub const ALL: [MessageId; 3] = [MessageId(1), MessageId(2), MessageId(3)];

    pub fn new(id: u8) -> Result<Self> {
        if (1..=3).contains(&id) {
            Ok(MessageId(id))
        } else {
            Err(Error::InvalidArgument(format!("message id must be 1, 2 or 3, got {id}")))
        }
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < 3);
        MessageId(i as u8 + 1)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }
}

impl TryFrom<u8> for MessageId {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        MessageId::new(v)
    }
}

impl From<MessageId> for u8 {
    fn from(m: MessageId) -> u8 {
        m.0
    }
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A yes/no query in canonical form: a single message, plus whether the
/// caller's original set was the two-element complement (answers inverted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuerySet {
    pub target: MessageId,
    pub inverted: bool,
}

impl QuerySet {
    pub fn single(target: MessageId) -> Self {
        QuerySet { target, inverted: false }
    }

    /// Canonicalizes a nonempty proper subset of `{1,2,3}`.
    pub fn from_members(members: &[MessageId]) -> Result<Self> {
        let mut mask = [false; 3];
        for m in members {
            mask[m.index()] = true;
        }
        let count = mask.iter().filter(|&&b| b).count();
        match count {
            1 => Ok(QuerySet::single(MessageId::from_index(mask.iter().position(|&b| b).unwrap()))),
            2 => Ok(QuerySet {
                target: MessageId::from_index(mask.iter().position(|&b| !b).unwrap()),
                inverted: true,
            }),
            _ => Err(Error::InvalidArgument(
                "a query must be a nonempty proper subset of {1,2,3}".into(),
            )),
        }
    }

    /// Messages the original (non-canonical) query asked about.
    pub fn members(&self) -> Vec<MessageId> {
        if self.inverted {
            MessageId::ALL.into_iter().filter(|m| *m != self.target).collect()
        } else {
            vec![self.target]
        }
    }

    /// The answer bit as seen by the canonical singleton query.
    pub fn canonical_answer(&self, y: u8) -> u8 {
        if self.inverted {
            1 - y
        } else {
            y
        }
    }
}

impl fmt::Display for QuerySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.members().iter().map(|m| m.to_string()).collect();
        write!(f, "{{{}}}", ids.join(","))
    }
}

/// Vote counts above the current minimum; `min = 0` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u32; 3]", into = "[u32; 3]")]
pub struct MetricState([u32; 3]);

impl MetricState {
    pub const ORIGIN: MetricState = MetricState([0, 0, 0]);

    /// Normalizes any vote triple by subtracting its minimum.
    pub fn normalized(votes: [u32; 3]) -> Self {
        let min = *votes.iter().min().unwrap();
        MetricState([votes[0] - min, votes[1] - min, votes[2] - min])
    }

    /// Accepts only already-normalized triples.
    pub fn new(m: [u32; 3]) -> Result<Self> {
        if m.iter().min() == Some(&0) {
            Ok(MetricState(m))
        } else {
            Err(Error::InvalidArgument(format!("metric state {m:?} has nonzero minimum")))
        }
    }

    pub fn get(&self) -> [u32; 3] {
        self.0
    }

    /// Largest metric entry, the distance of the state from the origin.
    pub fn depth(&self) -> u32 {
        *self.0.iter().max().unwrap()
    }

    /// Messages with the largest posterior (smallest metric), in id order.
    pub fn leaders(&self) -> Vec<MessageId> {
        (0..3).filter(|&i| self.0[i] == 0).map(MessageId::from_index).collect()
    }

    pub fn unique_leader(&self) -> Option<MessageId> {
        match self.leaders().as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    }

    /// Sorted metric values `s1 <= s2 <= s3`.
    pub fn sorted(&self) -> [u32; 3] {
        let mut s = self.0;
        s.sort_unstable();
        s
    }

    /// Compact label used by the octopus diagram, e.g. `"011"`; entries above 9 are comma-separated.
    pub fn label(&self) -> String {
        if self.0.iter().all(|&v| v < 10) {
            self.0.iter().map(|v| v.to_string()).collect()
        } else {
            self.0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        }
    }

    /// Permutes coordinates so that `true_msg` occupies coordinate 1.
    pub fn relative_to(&self, true_msg: MessageId) -> MetricState {
        let t = true_msg.index();
        let others: Vec<usize> = (0..3).filter(|&i| i != t).collect();
        MetricState([self.0[t], self.0[others[0]], self.0[others[1]]])
    }
}

impl TryFrom<[u32; 3]> for MetricState {
    type Error = Error;
    fn try_from(m: [u32; 3]) -> Result<Self> {
        MetricState::new(m)
    }
}

impl From<MetricState> for [u32; 3] {
    fn from(s: MetricState) -> [u32; 3] {
        s.0
    }
}

impl fmt::Display for MetricState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorVec<F>(pub [F; 3]);

impl<F: Scalar> PosteriorVec<F> {
    pub fn get(&self, m: MessageId) -> &F {
        &self.0[m.index()]
    }

    pub fn max(&self) -> F {
        let mut best = self.0[0].clone();
        for v in &self.0[1..] {
            if *v > best {
                best = v.clone();
            }
        }
        best
    }

    pub fn sum(&self) -> F {
        self.0[0].clone() + self.0[1].clone() + self.0[2].clone()
    }
}

/// Posterior probabilities `pi_i = z^{m_i} / sum_j z^{m_j}`.
pub fn posteriors<F: Scalar>(s: &MetricState, cv: &ChannelValues<F>) -> PosteriorVec<F> {
    let w = s.0.map(|m| cv.z_pow(m));
    let total = w[0].clone() + w[1].clone() + w[2].clone();
    PosteriorVec(w.map(|x| x / total.clone()))
}

/// Posteriors from an arbitrary (unnormalized) vote triple.
pub fn posteriors_of_votes<F: Scalar>(votes: [u32; 3], cv: &ChannelValues<F>) -> PosteriorVec<F> {
    let min = *votes.iter().min().unwrap();
    let w = votes.map(|m| cv.z_pow(m - min));
    let total = w[0].clone() + w[1].clone() + w[2].clone();
    PosteriorVec(w.map(|x| x / total.clone()))
}

/// Error of max-posterior decoding with uniform tie-breaking: `1 - max_i pi_i`.
pub fn decode_error<F: Scalar>(s: &MetricState, cv: &ChannelValues<F>) -> F {
    F::one() - posteriors(s, cv).max()
}

/// Adds one vote to each queried message when `y = 1`, to each other message
/// when `y = 0`, and renormalizes.
pub fn apply_outcome(s: &MetricState, q: QuerySet, y: u8) -> MetricState {
    MetricState::normalized(raw_outcome(s, q, y))
}

/// The vote triple after the update, before renormalization.
pub fn raw_outcome(s: &MetricState, q: QuerySet, y: u8) -> [u32; 3] {
    let y = q.canonical_answer(y);
    let t = q.target.index();
    let mut v = s.0;
    for (i, vi) in v.iter_mut().enumerate() {
        if (i == t) == (y == 1) {
            *vi += 1;
        }
    }
    v
}

/// Which law governs the answer bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbabilityMode {
    /// Bayes mixing over the queried message's posterior.
    Bayes,
    /// Leader-centred one-step law: the leader's posterior sets the answer
    /// probabilities for every query.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeLaw {
    Bayes,
    Conditional(MessageId),
    Paper,
}

impl From<ProbabilityMode> for OutcomeLaw {
    fn from(m: ProbabilityMode) -> Self {
        match m {
            ProbabilityMode::Bayes => OutcomeLaw::Bayes,
            ProbabilityMode::Paper => OutcomeLaw::Paper,
        }
    }
}

/// `[P(y=0), P(y=1)]` for a query in state `s`.
pub fn outcome_distribution<F: Scalar>(
    s: &MetricState,
    q: QuerySet,
    cv: &ChannelValues<F>,
    law: OutcomeLaw,
) -> Result<[F; 2]> {
    // probability that the canonical singleton query is answered 0
    let p0 = match law {
        OutcomeLaw::Bayes => {
            let pi = posteriors(s, cv).0[q.target.index()].clone();
            pi.clone() * cv.q.clone() + (F::one() - pi) * cv.p.clone()
        }
        OutcomeLaw::Conditional(t) => {
            if t == q.target {
                cv.q.clone()
            } else {
                cv.p.clone()
            }
        }
        OutcomeLaw::Paper => {
            let leader = s.unique_leader().ok_or_else(|| Error::TiedLeader(s.to_string()))?;
            let pi = posteriors(s, cv).0[leader.index()].clone();
            // p + (q - p) pi_L is the law of the leader's gap growing
            let grow = cv.p.clone() + (cv.q.clone() - cv.p.clone()) * pi;
            if q.target == leader {
                grow
            } else {
                F::one() - grow
            }
        }
    };
    let p1 = F::one() - p0.clone();
    Ok(if q.inverted { [p1, p0] } else { [p0, p1] })
}

/// One branch of a query: answer, its probability and its effect.
#[derive(Debug, Clone)]
pub struct Branch<F> {
    pub y: u8,
    pub prob: F,
    /// Change of each message's vote gap to the current leader.
    pub delta: [i8; 3],
    pub next: MetricState,
    /// `sum_{j != leader} a_j z^{delta_j}` after the step.
    pub b_after: F,
    pub leader_posterior_after: F,
}

/// Everything the one-step comparison needs for one query from one state.
#[derive(Debug, Clone)]
pub struct QueryOutcome<F> {
    pub leader: MessageId,
    pub query: QuerySet,
    /// `a_j = z^{m_j - m_leader}`.
    pub a: [F; 3],
    pub b_before: F,
    pub branches: [Branch<F>; 2],
    /// Expected next-step posterior of the current leader.
    pub expected_leader_posterior: F,
}

pub fn query_outcome<F: Scalar>(
    s: &MetricState,
    q: QuerySet,
    cv: &ChannelValues<F>,
    law: OutcomeLaw,
) -> Result<QueryOutcome<F>> {
    let leader = s.unique_leader().ok_or_else(|| Error::TiedLeader(s.to_string()))?;
    let l = leader.index();
    let a = s.0.map(|m| cv.z_pow(m));
    let b_before = (0..3).filter(|&j| j != l).fold(F::zero(), |acc, j| acc + a[j].clone());
    let probs = outcome_distribution(s, q, cv, law)?;
    let mut expected = F::zero();
    let branches = [0u8, 1].map(|y| {
        let raw = raw_outcome(s, q, y);
        let mut delta = [0i8; 3];
        let mut b_after = F::zero();
        for j in 0..3 {
            let before = s.0[j] as i64 - s.0[l] as i64;
            let after = raw[j] as i64 - raw[l] as i64;
            delta[j] = (after - before) as i8;
            if j != l {
                let w = match delta[j] {
                    1 => a[j].clone() * cv.z.clone(),
                    -1 => a[j].clone() / cv.z.clone(),
                    _ => a[j].clone(),
                };
                b_after = b_after + w;
            }
        }
        let leader_post = F::one() / (F::one() + b_after.clone());
        let prob = probs[usize::from(y)].clone();
        expected = expected.clone() + prob.clone() * leader_post.clone();
        Branch {
            y,
            prob,
            delta,
            next: MetricState::normalized(raw),
            b_after,
            leader_posterior_after: leader_post,
        }
    });
    Ok(QueryOutcome { leader, query: q, a, b_before, branches, expected_leader_posterior: expected })
}

/// Expected next-step posterior of the current leader for each of the three
/// singleton queries, indexed by the queried message.
#[derive(Debug, Clone)]
pub struct PartitionValues<F> {
    pub leader: MessageId,
    pub values: [F; 3],
}

impl<F: Scalar> PartitionValues<F> {
    pub fn of(&self, queried: MessageId) -> &F {
        &self.values[queried.index()]
    }
}

pub fn partition_values<F: Scalar>(
    s: &MetricState,
    cv: &ChannelValues<F>,
    mode: ProbabilityMode,
) -> Result<PartitionValues<F>> {
    let leader = s.unique_leader().ok_or_else(|| Error::TiedLeader(s.to_string()))?;
    let mut values = [F::zero(), F::zero(), F::zero()];
    for m in MessageId::ALL {
        let out = query_outcome(s, QuerySet::single(m), cv, mode.into())?;
        values[m.index()] = out.expected_leader_posterior;
    }
    Ok(PartitionValues { leader, values })
}

/// Closed form of `E_leader - E_j` (under `ProbabilityMode::Paper`) for a
/// non-leading message `j`; `k` denotes the remaining message:
///
/// `q a_k (1-z) [ (z+(1-z)pi)/((1+(a_j+a_k)z)(1+a_j z+a_k)) - (1-(1-z)pi)/((z+a_j+a_k)(1+a_j/z+a_k)) ]`
pub fn leader_gap_closed_form<F: Scalar>(
    s: &MetricState,
    cv: &ChannelValues<F>,
    j: MessageId,
) -> Result<F> {
    let leader = s.unique_leader().ok_or_else(|| Error::TiedLeader(s.to_string()))?;
    if j == leader {
        return Err(Error::InvalidArgument(format!("message {j} is the leader of {s}")));
    }
    let k = MessageId::ALL.into_iter().find(|m| *m != leader && *m != j).unwrap();
    let mv = s.0;
    let ml = mv[leader.index()];
    let aj = cv.z_pow(mv[j.index()] - ml);
    let ak = cv.z_pow(mv[k.index()] - ml);
    let z = cv.z.clone();
    let one = F::one();
    let pi = one.clone() / (one.clone() + aj.clone() + ak.clone());
    let first_num = z.clone() + (one.clone() - z.clone()) * pi.clone();
    let first_den = (one.clone() + (aj.clone() + ak.clone()) * z.clone())
        * (one.clone() + aj.clone() * z.clone() + ak.clone());
    let second_num = one.clone() - (one.clone() - z.clone()) * pi;
    let second_den = (z.clone() + aj.clone() + ak.clone())
        * (one.clone() + aj / z.clone() + ak.clone());
    Ok(cv.q.clone() * ak * (one - z) * (first_num / first_den - second_num / second_den))
}

/// `E_1 - E_2` in the leader-relative labelling: the two returned values are
/// the gaps to the non-leading messages in increasing id order.
pub fn e1_minus_e2_closed_form<F: Scalar>(
    s: &MetricState,
    cv: &ChannelValues<F>,
) -> Result<[(MessageId, F); 2]> {
    let leader = s.unique_leader().ok_or_else(|| Error::TiedLeader(s.to_string()))?;
    let others: Vec<MessageId> = MessageId::ALL.into_iter().filter(|m| *m != leader).collect();
    Ok([
        (others[0], leader_gap_closed_form(s, cv, others[0])?),
        (others[1], leader_gap_closed_form(s, cv, others[1])?),
    ])
}

/// Bayes-mode martingale defect `sum_y P(y) pi_i(next) - pi_i` for message `i`.
pub fn martingale_defect<F: Scalar>(
    s: &MetricState,
    q: QuerySet,
    cv: &ChannelValues<F>,
    i: MessageId,
) -> F {
    let probs = outcome_distribution(s, q, cv, OutcomeLaw::Bayes).expect("bayes law never fails");
    let mut acc = F::zero();
    for y in 0..2u8 {
        let next = apply_outcome(s, q, y);
        acc = acc + probs[usize::from(y)].clone() * posteriors(&next, cv).0[i.index()].clone();
    }
    acc - posteriors(s, cv).0[i.index()].clone()
}
