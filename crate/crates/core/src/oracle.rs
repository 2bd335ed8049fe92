//! Slow reference computations used by the test suites. Each one is written
//! from first principles so that it shares as little code as possible with
//! the production paths it checks.

use std::collections::HashMap;

use num_traits::{One, Zero};

use crate::belief::{apply_outcome, MessageId, MetricState, QuerySet};
use crate::error::{Error, Result};
use crate::exact::Rational;
use crate::strategy::{select_query, QueryDist, StrategyRule};

/// Largest horizon accepted by [`feedback_optimum`].
pub const TREE_HORIZON_CAP: usize = 5;

fn pq(p: &Rational) -> (Rational, Rational) {
    (p.clone(), Rational::one() - p)
}

/// Optimal error over every feedback strategy, with every subset of messages
/// allowed as a query, by exhaustive recursion over likelihood vectors.
pub fn feedback_optimum(n: usize, p: &Rational) -> Result<Rational> {
    if n > TREE_HORIZON_CAP {
        return Err(Error::ResourceCap { what: "decision-tree horizon", needed: n, cap: TREE_HORIZON_CAP });
    }
    let (p, q) = pq(p);
    fn best(t: usize, lik: [Rational; 3], p: &Rational, q: &Rational) -> Rational {
        if t == 0 {
            return lik.into_iter().max().unwrap();
        }
        (0u8..8)
            .map(|subset| {
                (0u8..2)
                    .map(|y| {
                        let next = std::array::from_fn(|i| {
                            let x = u8::from(subset & (1 << i) == 0);
                            &lik[i] * if x == y { q } else { p }
                        });
                        best(t - 1, next, p, q)
                    })
                    .fold(Rational::zero(), |a, b| a + b)
            })
            .max()
            .unwrap()
    }
    let third = Rational::new(1.into(), 3.into());
    let correct = best(n, [third.clone(), third.clone(), third], &p, &q);
    Ok(Rational::one() - correct)
}

fn posterior(s: &MetricState, z: &Rational) -> [Rational; 3] {
    let w: [Rational; 3] = s.get().map(|m| (0..m).fold(Rational::one(), |a, _| a * z));
    let total = w.iter().fold(Rational::zero(), |a, b| a + b);
    w.map(|x| x / &total)
}

/// Optimal error over metric-state strategies from the textbook recursion
/// on expected terminal max-posterior, `V_t(s) = max_j E[V_{t-1}(s') | s, j]`.
pub fn naive_optimum(n: usize, p: &Rational) -> Rational {
    let (p, q) = pq(p);
    let z = &p / &q;
    let mut memo: HashMap<(usize, MetricState), Rational> = HashMap::new();
    fn v(
        t: usize,
        s: MetricState,
        p: &Rational,
        q: &Rational,
        z: &Rational,
        memo: &mut HashMap<(usize, MetricState), Rational>,
    ) -> Rational {
        if let Some(x) = memo.get(&(t, s)) {
            return x.clone();
        }
        let pi = posterior(&s, z);
        let out = if t == 0 {
            pi.iter().max().unwrap().clone()
        } else {
            MessageId::ALL
                .into_iter()
                .map(|j| {
                    let pj = &pi[j.index()];
                    let p0 = pj * q + (Rational::one() - pj) * p;
                    let p1 = Rational::one() - &p0;
                    let qs = QuerySet::single(j);
                    p0 * v(t - 1, apply_outcome(&s, qs, 0), p, q, z, memo)
                        + p1 * v(t - 1, apply_outcome(&s, qs, 1), p, q, z, memo)
                })
                .max()
                .unwrap()
        };
        memo.insert((t, s), out.clone());
        out
    }
    Rational::one() - v(n, MetricState::ORIGIN, &p, &q, &z, &mut memo)
}

fn weight(dist: &QueryDist, j: MessageId) -> Rational {
    QueryDist::weight_rational(dist.weight(j))
}

/// Error probability of `rule` by walking every query and noise sequence.
pub fn rule_error_by_paths(n: usize, p: &Rational, rule: &StrategyRule) -> Result<Rational> {
    let (p, q) = pq(p);
    fn walk(
        t: usize,
        n: usize,
        s: MetricState,
        truth: MessageId,
        mass: Rational,
        ctx: (&Rational, &Rational, &StrategyRule),
    ) -> Result<Rational> {
        if t == n {
            let leaders = s.leaders();
            let hit = usize::from(leaders.contains(&truth));
            return Ok(mass * Rational::new(((leaders.len() - hit) as i64).into(), (leaders.len() as i64).into()));
        }
        let (p, q, rule) = ctx;
        let dist = select_query(rule, &s, t)?;
        let mut acc = Rational::zero();
        for j in MessageId::ALL {
            let w = weight(&dist, j);
            if w.is_zero() {
                continue;
            }
            let x = u8::from(j != truth);
            for y in 0..2u8 {
                let step = if x == y { q } else { p };
                let next = apply_outcome(&s, QuerySet::single(j), y);
                acc += walk(t + 1, n, next, truth, &mass * &w * step, ctx)?;
            }
        }
        Ok(acc)
    }
    let third = Rational::new(1.into(), 3.into());
    let mut total = Rational::zero();
    for truth in MessageId::ALL {
        total += walk(0, n, MetricState::ORIGIN, truth, third.clone(), (&p, &q, rule))?;
    }
    Ok(total)
}

/// Probability of standing at `(0,0,0)` after `n` max-posterior steps with
/// message 1 true, summed over explicit paths whose depth never exceeds
/// `max_depth`.
pub fn return_prob_by_paths(n: usize, p: &Rational, max_depth: u32) -> Rational {
    let (p, q) = pq(p);
    let rule = StrategyRule::max_posterior();
    let truth = MessageId::ALL[0];
    let mut layer: HashMap<MetricState, Rational> = HashMap::from([(MetricState::ORIGIN, Rational::one())]);
    // Merging equal states keeps the walk polynomial; the path sum is unchanged.
    for t in 0..n {
        let mut next: HashMap<MetricState, Rational> = HashMap::new();
        for (s, mass) in layer {
            let dist = select_query(&rule, &s, t).expect("max-posterior is total");
            for j in MessageId::ALL {
                let w = weight(&dist, j);
                if w.is_zero() {
                    continue;
                }
                let x = u8::from(j != truth);
                for y in 0..2u8 {
                    let to = apply_outcome(&s, QuerySet::single(j), y);
                    if to.depth() > max_depth {
                        continue;
                    }
                    let step = if x == y { &q } else { &p };
                    *next.entry(to).or_insert_with(Rational::zero) += &mass * &w * step;
                }
            }
        }
        layer = next;
    }
    layer.remove(&MetricState::ORIGIN).unwrap_or_else(Rational::zero)
}
