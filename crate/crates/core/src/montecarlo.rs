//! Seeded simulation of whole transmissions.
//!
//! Trial `i` under seed `s` reads its true message, queries, channel noise and
//! decoder tie-breaks from four separate ChaCha streams keyed by `(s, i)`, so
//! results do not depend on how trials are split across threads.

use std::time::Instant;

use serde::Serialize;

use crate::belief::{apply_outcome, MessageId, MetricState, QuerySet};
use crate::channel::{index_below, ChannelParams, NoiseStream, Purpose, Seed};
use crate::error::{Error, Result};
use crate::strategy::{select_query, transmit, RuleKind, StepRecord, StrategyRule};

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.5758293035489004;
pub const CI_METHOD: &str = "wilson-score-99";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrajectoryRecord {
    pub true_msg: MessageId,
    pub steps: Vec<StepRecord>,
    /// Votes against each message after the last step.
    pub votes: [u32; 3],
    /// Number of zero outputs.
    pub zeros: u32,
    /// Votes against the true message, equal to the number of channel flips.
    pub errors: u32,
    pub decoded: MessageId,
    pub erred: bool,
}

impl TrajectoryRecord {
    pub fn n(&self) -> usize {
        self.steps.len()
    }

    /// `3 d_{1,3}(n)`, three times the mean vote count.
    pub fn total_votes(&self) -> u32 {
        self.votes.iter().sum()
    }
}

/// Adds the votes of answer `y` to query `q` to an absolute vote vector.
pub fn add_votes(votes: &mut [u32; 3], q: QuerySet, y: u8) {
    let y = q.canonical_answer(y);
    for (i, v) in votes.iter_mut().enumerate() {
        if (i == q.target.index()) == (y == 1) {
            *v += 1;
        }
    }
}

/// Max-posterior decision on absolute votes; ties broken by one uniform draw.
fn decide(votes: &[u32; 3], tie_word: u64) -> MessageId {
    let min = *votes.iter().min().unwrap();
    let leaders: Vec<MessageId> = MessageId::ALL.into_iter().filter(|m| votes[m.index()] == min).collect();
    leaders[index_below(tie_word, leaders.len())]
}

/// One full transmission of `n` channel uses.
pub fn simulate_trajectory(n: usize, ch: &ChannelParams, rule: &StrategyRule, seed: Seed) -> Result<TrajectoryRecord> {
    if ch.is_exact() {
        return Err(Error::SamplingExactChannel);
    }
    let true_msg = MessageId::from_index(NoiseStream::new(seed, Purpose::TrueMessage).next_index(3));
    let mut queries = NoiseStream::new(seed, Purpose::Query);
    let mut noise = NoiseStream::new(seed, Purpose::Noise);
    let p = ch.p();
    let mut s = MetricState::ORIGIN;
    let mut votes = [0u32; 3];
    let mut zeros = 0;
    let mut steps = Vec::with_capacity(n);
    for t in 0..n {
        let dist = select_query(rule, &s, t)?;
        // one word per step from each stream keeps draw t at position t
        let query = dist.sample(queries.next_u64());
        let flip = noise.next_uniform() < p;
        let y = transmit(query, true_msg) ^ u8::from(flip);
        add_votes(&mut votes, query, y);
        zeros += u32::from(y == 0);
        s = apply_outcome(&s, query, y);
        steps.push(StepRecord { query, y, next: s });
    }
    let decoded = decide(&votes, NoiseStream::new(seed, Purpose::Decode).next_u64());
    Ok(TrajectoryRecord {
        true_msg,
        steps,
        votes,
        zeros,
        errors: votes[true_msg.index()],
        decoded,
        erred: decoded != true_msg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvariantKind {
    /// Largest vote count exceeds the middle one by more than 1.
    SortedChain,
    /// Middle vote count below the mean minus 1/3.
    MiddleBelowMean,
    /// Total votes differ from `n + m`.
    VoteTotal,
    /// An erroneous trial with fewer than `d_{1,3} - 1/3` votes against the truth.
    ErrorVotes,
    /// Realized path probability above the bound `(q/p)^{1/3} p^{d13} q^{n-d13}`.
    PathProbability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Step after which the check failed; `n` for end-of-trial checks.
    pub step: usize,
    pub kind: InvariantKind,
    pub votes: [u32; 3],
}

/// Checks the vote-count invariants of a max-posterior trajectory. All
/// fractional inequalities are compared after multiplying by 3.
pub fn check_trajectory_invariants(rec: &TrajectoryRecord, ch: &ChannelParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut votes = [0u32; 3];
    for (k, st) in rec.steps.iter().enumerate() {
        add_votes(&mut votes, st.query, st.y);
        let mut v = votes;
        v.sort_unstable();
        if v[2] > v[1] + 1 {
            out.push(Violation { step: k + 1, kind: InvariantKind::SortedChain, votes });
        }
        let total: u32 = votes.iter().sum();
        if 3 * v[1] + 1 < total {
            out.push(Violation { step: k + 1, kind: InvariantKind::MiddleBelowMean, votes });
        }
    }
    let n = rec.n() as u32;
    let end = rec.n();
    if rec.total_votes() != n + rec.zeros || votes != rec.votes {
        out.push(Violation { step: end, kind: InvariantKind::VoteTotal, votes: rec.votes });
    }
    if rec.erred {
        if 3 * rec.errors + 1 < n + rec.zeros {
            out.push(Violation { step: end, kind: InvariantKind::ErrorVotes, votes: rec.votes });
        }
        // p^e q^{n-e} <= (q/p)^{1/3} p^{d} q^{n-d} with d = (n+m)/3, in logs
        let (lp, lq) = (ch.p().ln(), ch.q().ln());
        let e = rec.errors as f64;
        let d = rec.total_votes() as f64 / 3.0;
        let lhs = e * lp + (n as f64 - e) * lq;
        let rhs = (lq - lp) / 3.0 + d * lp + (n as f64 - d) * lq;
        if lhs > rhs + 1e-9 * rhs.abs().max(1.0) {
            out.push(Violation { step: end, kind: InvariantKind::PathProbability, votes: rec.votes });
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationStats {
    pub n: usize,
    pub p: String,
    pub strategy: String,
    pub trials: u64,
    pub errors: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_method: &'static str,
    pub seed: u64,
    /// Trajectory invariant violations; counted under max-posterior only.
    pub invariant_violations: Option<u64>,
    pub wall_clock_secs: f64,
}

/// Equality ignores wall-clock time.
impl PartialEq for SimulationStats {
    fn eq(&self, o: &Self) -> bool {
        (self.n, &self.p, &self.strategy, self.trials, self.errors, self.seed, self.invariant_violations)
            == (o.n, &o.p, &o.strategy, o.trials, o.errors, o.seed, o.invariant_violations)
            && self.estimate.to_bits() == o.estimate.to_bits()
            && self.ci_low.to_bits() == o.ci_low.to_bits()
            && self.ci_high.to_bits() == o.ci_high.to_bits()
    }
}

/// Wilson score interval for `errors` successes out of `trials`.
pub fn wilson_interval(errors: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let nt = trials as f64;
    let ph = errors as f64 / nt;
    let z2 = z * z;
    let denom = 1.0 + z2 / nt;
    let center = (ph + z2 / (2.0 * nt)) / denom;
    let half = z / denom * (ph * (1.0 - ph) / nt + z2 / (4.0 * nt * nt)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

impl SimulationStats {
    fn from_counts(
        n: usize,
        ch: &ChannelParams,
        rule: &StrategyRule,
        seed: u64,
        trials: u64,
        errors: u64,
        violations: Option<u64>,
    ) -> Self {
        let (ci_low, ci_high) = wilson_interval(errors, trials, Z_99);
        SimulationStats {
            n,
            p: ch.label(),
            strategy: rule.name(),
            trials,
            errors,
            estimate: if trials == 0 { 0.0 } else { errors as f64 / trials as f64 },
            ci_low,
            ci_high,
            ci_method: CI_METHOD,
            seed,
            invariant_violations: violations,
            wall_clock_secs: 0.0,
        }
    }

    /// Combines two shards of the same experiment. Counts add exactly.
    pub fn merge(&self, other: &SimulationStats) -> Result<SimulationStats> {
        if (self.n, &self.p, &self.strategy, self.seed) != (other.n, &other.p, &other.strategy, other.seed) {
            return Err(Error::InvalidArgument("cannot merge statistics of different experiments".into()));
        }
        let trials = self.trials + other.trials;
        let errors = self.errors + other.errors;
        let (ci_low, ci_high) = wilson_interval(errors, trials, Z_99);
        Ok(SimulationStats {
            trials,
            errors,
            estimate: if trials == 0 { 0.0 } else { errors as f64 / trials as f64 },
            ci_low,
            ci_high,
            invariant_violations: match (self.invariant_violations, other.invariant_violations) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            },
            wall_clock_secs: self.wall_clock_secs.max(other.wall_clock_secs),
            ..self.clone()
        })
    }
}

fn run_range(
    n: usize,
    ch: &ChannelParams,
    rule: &StrategyRule,
    seed: u64,
    range: std::ops::Range<u64>,
) -> Result<SimulationStats> {
    let check = matches!(rule.kind, RuleKind::MaxPosterior);
    let mut errors = 0;
    let mut violations = 0;
    let trials = range.end - range.start;
    for i in range {
        let rec = simulate_trajectory(n, ch, rule, Seed::new(seed, i))?;
        errors += u64::from(rec.erred);
        if check {
            violations += check_trajectory_invariants(&rec, ch).len() as u64;
        }
    }
    Ok(SimulationStats::from_counts(n, ch, rule, seed, trials, errors, check.then_some(violations)))
}

/// Runs `trials` independent transmissions split over `workers` threads.
pub fn run_trials(
    n: usize,
    ch: &ChannelParams,
    rule: &StrategyRule,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<SimulationStats> {
    if ch.is_exact() {
        return Err(Error::SamplingExactChannel);
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let start = Instant::now();
    let workers = workers.clamp(1, trials as usize) as u64;
    let chunk = trials.div_ceil(workers);
    let ranges: Vec<_> = (0..workers).map(|w| (w * chunk).min(trials)..((w + 1) * chunk).min(trials)).collect();
    let shards: Vec<Result<SimulationStats>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            ranges.into_iter().map(|r| scope.spawn(move || run_range(n, ch, rule, seed, r))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation worker panicked")).collect()
    });
    let mut total: Option<SimulationStats> = None;
    for shard in shards {
        let shard = shard?;
        total = Some(match total {
            None => shard,
            Some(t) => t.merge(&shard)?,
        });
    }
    let mut total = total.expect("at least one shard");
    total.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(total)
}

/// The first `count` trajectories of an experiment, one JSON document per line.
pub fn trajectory_dump(n: usize, ch: &ChannelParams, rule: &StrategyRule, seed: u64, count: u64) -> Result<String> {
    let mut out = String::new();
    for i in 0..count {
        let rec = simulate_trajectory(n, ch, rule, Seed::new(seed, i))?;
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exponent fit

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentSample {
    pub n: usize,
    pub estimate: f64,
    /// Number of trials behind the estimate; sets the regression weight.
    pub trials: f64,
}

impl From<&SimulationStats> for ExponentSample {
    fn from(s: &SimulationStats) -> Self {
        ExponentSample { n: s.n, estimate: s.estimate, trials: s.trials as f64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub points: usize,
}

/// Weighted least squares of `-ln P` against `n`, weights from the binomial
/// variance of `ln P`, about `(1 - P) / (trials P)`.
pub fn estimate_exponent(samples: &[ExponentSample]) -> Result<ExponentFit> {
    if samples.len() < 3 {
        return Err(Error::InvalidArgument(format!("an exponent fit needs at least 3 grid points, got {}", samples.len())));
    }
    if samples.iter().any(|s| s.estimate <= 0.0) {
        return Err(Error::InvalidArgument(
            "a grid point has no observed errors; increase the trial count or use the exact dynamic program".into(),
        ));
    }
    let pts: Vec<(f64, f64, f64)> = samples
        .iter()
        .map(|s| {
            let var = ((1.0 - s.estimate) / (s.trials * s.estimate)).max(f64::MIN_POSITIVE);
            (s.n as f64, -s.estimate.ln(), 1.0 / var)
        })
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("grid points must have distinct n".into()));
    }
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    Ok(ExponentFit { slope, intercept: ym - slope * xm, slope_std_error: (1.0 / sxx).sqrt(), points: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_u64, ChannelMode};
    use crate::strategy::step;

    fn fch(p: &str) -> ChannelParams {
        ChannelParams::new(p, ChannelMode::Float).unwrap()
    }

    #[test]
    fn sequential_streams_match_indexed_draws() {
        let ch = fch("0.1");
        let rule = StrategyRule::max_posterior();
        let seed = Seed::new(77, 5);
        let rec = simulate_trajectory(12, &ch, &rule, seed).unwrap();
        let mut s = MetricState::ORIGIN;
        for (t, st) in rec.steps.iter().enumerate() {
            let again = step(&rule, &s, &ch, rec.true_msg, seed, t as u64).unwrap();
            assert_eq!(&again, st);
            s = again.next;
        }
        let w = draw_u64(seed, Purpose::TrueMessage, 0);
        assert_eq!(MessageId::from_index(index_below(w, 3)), rec.true_msg);
    }

    #[test]
    fn hand_stepped_trajectory() {
        let q1 = QuerySet::single(MessageId::ALL[0]);
        let steps = (0..3)
            .scan(MetricState::ORIGIN, |s, _| {
                let next = apply_outcome(s, q1, 0);
                *s = next;
                Some(StepRecord { query: q1, y: 0, next })
            })
            .collect();
        let rec = TrajectoryRecord {
            true_msg: MessageId::ALL[0],
            steps,
            votes: [0, 3, 3],
            zeros: 3,
            errors: 0,
            decoded: MessageId::ALL[0],
            erred: false,
        };
        assert_eq!(rec.total_votes(), 6);
        assert!(check_trajectory_invariants(&rec, &fch("0.1")).is_empty());
    }

    #[test]
    fn invariants_catch_bad_records() {
        let q1 = QuerySet::single(MessageId::ALL[0]);
        let steps = vec![StepRecord { query: q1, y: 1, next: apply_outcome(&MetricState::ORIGIN, q1, 1) }];
        let rec = TrajectoryRecord {
            true_msg: MessageId::ALL[1],
            steps,
            votes: [1, 0, 0],
            zeros: 1,
            errors: 0,
            decoded: MessageId::ALL[2],
            erred: true,
        };
        let v = check_trajectory_invariants(&rec, &fch("0.1"));
        assert!(v.iter().any(|x| x.kind == InvariantKind::VoteTotal));
    }

    #[test]
    fn random_trajectories_satisfy_invariants() {
        let ch = fch("0.1");
        let rule = StrategyRule::max_posterior();
        for i in 0..2000 {
            let rec = simulate_trajectory(50, &ch, &rule, Seed::new(3, i)).unwrap();
            assert!(check_trajectory_invariants(&rec, &ch).is_empty(), "trial {i}");
            assert_eq!(rec.errors, rec.votes[rec.true_msg.index()]);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let ch = fch("0.2");
        let rule = StrategyRule::max_posterior();
        let a = run_trials(8, &ch, &rule, 3001, 11, 1).unwrap();
        let b = run_trials(8, &ch, &rule, 3001, 11, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials, 3001);
    }

    #[test]
    fn merge_is_order_independent() {
        let ch = fch("0.2");
        let rule = StrategyRule::max_posterior();
        let parts: Vec<_> = [0..100u64, 100..250, 250..400].into_iter().map(|r| run_range(6, &ch, &rule, 9, r).unwrap()).collect();
        let ab_c = parts[0].merge(&parts[1]).unwrap().merge(&parts[2]).unwrap();
        let c_ba = parts[2].merge(&parts[1].merge(&parts[0]).unwrap()).unwrap();
        assert_eq!(ab_c, c_ba);
        assert_eq!(ab_c, run_range(6, &ch, &rule, 9, 0..400).unwrap());
    }

    #[test]
    fn rational_channel_is_rejected() {
        let ch = ChannelParams::new("1/10", ChannelMode::Rational).unwrap();
        let r = run_trials(3, &ch, &StrategyRule::max_posterior(), 10, 1, 1);
        assert!(matches!(r, Err(Error::SamplingExactChannel)));
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(5, 1000, Z_99);
        assert!(lo < 0.005 && 0.005 < hi);
        let (lo0, hi0) = wilson_interval(0, 1000, Z_99);
        assert_eq!(lo0, 0.0);
        assert!(hi0 > 0.0 && hi0 < 0.01);
    }

    #[test]
    fn exponent_fit_recovers_exact_slope() {
        let c = 0.37;
        let samples: Vec<_> =
            [5, 10, 15, 20].iter().map(|&n| ExponentSample { n, estimate: (-c * n as f64).exp(), trials: 1e6 }).collect();
        let fit = estimate_exponent(&samples).unwrap();
        assert!((fit.slope - c).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-10);
        assert!(estimate_exponent(&samples[..1]).is_err());
        let mut zero = samples.clone();
        zero[2].estimate = 0.0;
        assert!(estimate_exponent(&zero).is_err());
    }
}
