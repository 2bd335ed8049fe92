//! Closed-form exponents and bounds.
//!
//! With `c = p^{1/3}` and `d = q^{1/3}`, the feedback exponent is
//! `F_fb = -ln(cd(c + d))`, the upper bound on the max-posterior error is
//! `(d/c) (cd(c+d))^n` and the lower bound on the optimal error is
//! `(cd(c+d))^n / 2`. Comparisons of exact probabilities against these
//! irrational bounds use certified cube-root brackets.

use astro_float::BigFloat;
use serde::Serialize;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::exact::{self, cbrt_bracket, certify_cmp, Certified, Rational};
use crate::hp::Hp;
use crate::report::{csv_document, float_field, Number};
use crate::semiring::{LogProb, Semiring};

/// A positive quantity with its natural logarithm, so that tiny values survive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundValue {
    pub value: f64,
    pub ln: f64,
}

impl BoundValue {
    fn from_ln(ln: f64) -> Self {
        BoundValue { value: ln.exp(), ln }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponents {
    pub f_fb: f64,
    pub e2: f64,
    pub e3: f64,
}

fn p_hp(hp: &mut Hp, ch: &ChannelParams) -> BigFloat {
    match ch.p_exact() {
        Ok(p) => hp.rational(&p),
        Err(_) => hp.float(ch.p()),
    }
}

/// `(c, d) = (p^{1/3}, q^{1/3})` at high precision.
fn thirds(hp: &mut Hp, ch: &ChannelParams) -> (BigFloat, BigFloat, BigFloat, BigFloat) {
    let p = p_hp(hp, ch);
    let q = hp.sub(&hp.int(1), &p);
    let c = hp.cbrt(&p);
    let d = hp.cbrt(&q);
    (p, q, c, d)
}

/// `ln(cd(c+d))`, which is `-F_fb`.
fn ln_base(hp: &mut Hp, c: &BigFloat, d: &BigFloat) -> BigFloat {
    let s = hp.add(c, d);
    let prod = hp.mul(&hp.mul(c, d), &s);
    hp.ln(&prod)
}

pub fn feedback_exponent(ch: &ChannelParams) -> f64 {
    let mut hp = Hp::new();
    let (_, _, c, d) = thirds(&mut hp, ch);
    let l = ln_base(&mut hp, &c, &d);
    -hp.to_f64(&l)
}

/// `(F_fb, E_2, E_3)`. For `p < 1/2` the ordering `E_2 > F_fb > E_3` is checked.
pub fn error_exponents(ch: &ChannelParams) -> Result<Exponents> {
    let mut hp = Hp::new();
    let (p, q, c, d) = thirds(&mut hp, ch);
    let l = ln_base(&mut hp, &c, &d);
    let f_fb = -hp.to_f64(&l);
    let four_pq = hp.mul(&hp.int(4), &hp.mul(&p, &q));
    let ln4pq = hp.ln(&four_pq);
    let ln_inv = -hp.to_f64(&ln4pq);
    let out = Exponents { f_fb, e2: ln_inv / 2.0, e3: ln_inv / 3.0 };
    if ch.is_degenerate() {
        return Ok(Exponents { f_fb: 0.0, e2: 0.0, e3: 0.0 });
    }
    if !(out.e2 > out.f_fb && out.f_fb > out.e3 && out.e3 > 0.0) {
        return Err(Error::CheckFailed(format!("exponent ordering violated at p = {}: {out:?}", ch.label())));
    }
    Ok(out)
}

/// `(q/p)^{1/3} e^{-n F_fb}`.
pub fn berlekamp_upper(n: usize, ch: &ChannelParams) -> BoundValue {
    let mut hp = Hp::new();
    let (_, _, c, d) = thirds(&mut hp, ch);
    let base = ln_base(&mut hp, &c, &d);
    let lead = hp.ln(&hp.div(&d, &c));
    let total = hp.add(&lead, &hp.mul(&hp.int(n as i64), &base));
    BoundValue::from_ln(hp.to_f64(&total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBounds {
    /// `e^{-n F_fb} / 2`.
    pub theorem1: BoundValue,
    /// `(pq^2)^{n/3} (1 + z^{1/3})^n / 3`, the bound through the return probability.
    pub via_return: BoundValue,
}

pub fn theorem1_lower(n: usize, ch: &ChannelParams) -> LowerBounds {
    let mut hp = Hp::new();
    let (p, q, c, d) = thirds(&mut hp, ch);
    let base = ln_base(&mut hp, &c, &d);
    let nb = hp.mul(&hp.int(n as i64), &base);
    let half = hp.rational(&exact::rat(1, 2));
    let half = hp.ln(&half);
    let t1 = hp.add(&half, &nb);
    // (pq^2)^{n/3} (1 + (p/q)^{1/3})^n, evaluated from its own factors
    let pq2 = hp.mul(&p, &hp.mul(&q, &q));
    let cube = hp.cbrt(&pq2);
    let z3 = hp.div(&c, &d);
    let factor = hp.mul(&cube, &hp.add(&hp.int(1), &z3));
    let lf = hp.ln(&factor);
    let third = hp.rational(&exact::rat(1, 3));
    let third = hp.ln(&third);
    let p0 = hp.add(&third, &hp.mul(&hp.int(n as i64), &lf));
    LowerBounds { theorem1: BoundValue::from_ln(hp.to_f64(&t1)), via_return: BoundValue::from_ln(hp.to_f64(&p0)) }
}

fn rat_pow(r: &Rational, e: usize) -> Rational {
    exact::pow(r, e)
}

/// Certified enclosure of `c^i d^j (c + d)^k` for the channel's cube roots.
fn monomial_bracket(p: &Rational, q: &Rational, bits: u64, ci: i64, dj: usize, sk: usize) -> (Rational, Rational) {
    let (cl, ch) = cbrt_bracket(p, bits);
    let (dl, dh) = cbrt_bracket(q, bits);
    let eval = |c: &Rational, c_other: &Rational, d: &Rational| {
        // c_other is the end of the c-bracket used when c appears in a denominator
        let cpart = if ci >= 0 { rat_pow(c, ci as usize) } else { rat_pow(c_other, (-ci) as usize).recip() };
        cpart * rat_pow(d, dj) * rat_pow(&(c + d), sk)
    };
    (eval(&cl, &ch, &dl), eval(&ch, &cl, &dh))
}

fn exact_channel(ch: &ChannelParams) -> Result<(Rational, Rational)> {
    Ok((ch.p_exact()?, ch.q_exact()?))
}

/// Compares an exact probability with `(d/c)(cd(c+d))^n`.
pub fn compare_with_upper(value: &Rational, n: usize, ch: &ChannelParams) -> Result<Certified> {
    let (p, q) = exact_channel(ch)?;
    // (d/c) c^n d^n (c+d)^n = c^{n-1} d^{n+1} (c+d)^n
    Ok(certify_cmp(value, |bits| monomial_bracket(&p, &q, bits, n as i64 - 1, n + 1, n)))
}

/// Compares an exact probability with `(cd(c+d))^n / 2`.
pub fn compare_with_lower(value: &Rational, n: usize, ch: &ChannelParams) -> Result<Certified> {
    let (p, q) = exact_channel(ch)?;
    let half = exact::rat(1, 2);
    Ok(certify_cmp(value, |bits| {
        let (lo, hi) = monomial_bracket(&p, &q, bits, n as i64, n, n);
        (&lo * &half, &hi * &half)
    }))
}

// ---------------------------------------------------------------------------
// The optimal loop fraction

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct A0Root {
    /// The Cardano closed form with real cube roots.
    pub closed_form: f64,
    pub bisection: f64,
    /// `(27 - 31p) a^3 + 3pa - p` at the closed-form root.
    pub residual: f64,
}

/// Unique root in `(0, 1/2)` of `(27 - 31p) a^3 + 3pa - p = 0`.
pub fn a0_root(p: f64) -> Result<A0Root> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::InvalidArgument(format!("a0 needs 0 < p < 1/2, got {p}")));
    }
    let mut hp = Hp::new();
    let p = hp.float(p);
    a0_root_hp(&mut hp, &p)
}

fn a0_root_hp(hp: &mut Hp, p: &BigFloat) -> Result<A0Root> {
    let lead = hp.sub(&hp.int(27), &hp.mul(&hp.int(31), p));
    let cubic = |hp: &mut Hp, a: &BigFloat| {
        let a3 = hp.powi(a, 3);
        let t = hp.add(&hp.mul(&lead, &a3), &hp.mul(&hp.mul(&hp.int(3), p), a));
        hp.sub(&t, p)
    };
    let q = hp.sub(&hp.int(1), p);
    let ratio = hp.div(&hp.mul(&hp.int(27), &q), &lead);
    let root = hp.sqrt(&ratio);
    let one = hp.int(1);
    let scale = hp.cbrt(&hp.div(p, &hp.mul(&hp.int(2), &lead)));
    let branch = hp.add(&hp.cbrt(&hp.add(&one, &root)), &hp.cbrt(&hp.sub(&one, &root)));
    let closed = hp.mul(&scale, &branch);

    let mut lo = hp.int(0);
    let mut hi = hp.div(&one, &hp.int(2));
    for _ in 0..200 {
        let mid = hp.div(&hp.add(&lo, &hi), &hp.int(2));
        if cubic(hp, &mid).is_negative() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bis = hp.div(&hp.add(&lo, &hi), &hp.int(2));
    let residual = cubic(hp, &closed);
    let out = A0Root { closed_form: hp.to_f64(&closed), bisection: hp.to_f64(&bis), residual: hp.to_f64(&residual) };
    let gap = hp.to_f64(&hp.sub(&closed, &bis)).abs();
    if gap.is_nan() || gap > 1e-10 {
        return Err(Error::CheckFailed(format!(
            "closed-form root {} and bisection root {} differ by {gap:e}",
            out.closed_form, out.bisection
        )));
    }
    Ok(out)
}

pub fn a0_for_channel(ch: &ChannelParams) -> Result<A0Root> {
    if ch.is_degenerate() {
        return Err(Error::InvalidArgument("a0 needs p < 1/2".into()));
    }
    let mut hp = Hp::new();
    let p = p_hp(&mut hp, ch);
    a0_root_hp(&mut hp, &p)
}

/// Binary entropy in nats.
pub fn binary_entropy(u: f64) -> f64 {
    let xlnx = |x: f64| if x == 0.0 { 0.0 } else { x * x.ln() };
    -xlnx(u) - xlnx(1.0 - u)
}

/// `f_1(p, a) = (1+a) h(3a/(1+a)) - a ln(q/p)` and its derivative in `a`.
pub fn f1_eval(p: f64, a: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && a < 0.5) {
        return Err(Error::InvalidArgument(format!("f1 needs 0 < a < 1/2, got {a}")));
    }
    let q = 1.0 - p;
    let lr = (q / p).ln();
    let value = (1.0 + a) * (1.0 + a).ln() - 3.0 * a * (3.0 * a).ln() - (1.0 - 2.0 * a) * (1.0 - 2.0 * a).ln() - a * lr;
    let deriv = (p * (1.0 + a) * (1.0 - 2.0 * a).powi(2) / (27.0 * q * a.powi(3))).ln();
    Ok((value, deriv))
}

// ---------------------------------------------------------------------------
// Simplex code

/// The three weight-`n/3` codewords with disjoint supports.
pub fn simplex_codewords(n: usize) -> Result<[Vec<u8>; 3]> {
    if !n.is_multiple_of(3) {
        return Err(Error::NotDivisibleBy3(n));
    }
    let k = n / 3;
    Ok([0, 1, 2].map(|b| (0..n).map(|i| u8::from(i / k == b)).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimplexMethod {
    BlockSum,
    Enumeration,
}

pub const ENUMERATION_LIMIT: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexTerm {
    /// Ones in each block.
    pub t: usize,
    /// Ones fraction per block, `t / (n/3)`.
    pub u: f64,
    pub ln_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexEventReport {
    pub n: usize,
    pub method: SimplexMethod,
    pub prob: Number,
    pub ln_prob: f64,
    pub exponent: f64,
    pub terms: Vec<SimplexTerm>,
    pub u0: f64,
    pub g_u0: f64,
}

fn block_sum<W: Semiring>(n: usize, p: &W, q: &W, binom: impl Fn(usize, usize) -> W) -> (W, Vec<SimplexTerm>) {
    let k = n / 3;
    let powers = |w: &W| {
        let mut v = vec![W::one()];
        for _ in 0..2 * k {
            v.push(v.last().unwrap().mul(w));
        }
        v
    };
    let (pp, qp) = (powers(p), powers(q));
    let mut total = W::zero();
    let mut terms = Vec::with_capacity(k + 1);
    for t in 0..=k {
        let c = binom(k, t);
        let term = c.mul(&c).mul(&c).mul(&pp[k + t]).mul(&qp[2 * k - t]);
        terms.push(SimplexTerm { t, u: if k == 0 { 0.0 } else { t as f64 / k as f64 }, ln_term: term.ln() });
        total = total.add(&term);
    }
    (total, terms)
}

fn binom_rational(n: usize, k: usize) -> Rational {
    Rational::from_integer(num_integer::binomial(num_bigint::BigInt::from(n), num_bigint::BigInt::from(k)))
}

fn ln_binom(n: usize, k: usize) -> f64 {
    // exact for the sizes used here; the log of a big integer keeps full precision
    exact::ln_rational(&binom_rational(n, k))
}

/// Probability, given the first codeword was sent, that the received word is
/// equidistant from all three codewords.
pub fn simplex_event_prob(n: usize, ch: &ChannelParams, method: SimplexMethod, exact_mode: bool) -> Result<SimplexEventReport> {
    let words = simplex_codewords(n)?;
    let (prob, terms): (Number, Vec<SimplexTerm>) = match method {
        SimplexMethod::BlockSum => {
            if exact_mode {
                let (p, q) = exact_channel(ch)?;
                let (v, t) = block_sum::<Rational>(n, &p, &q, binom_rational);
                (Number::Exact(v), t)
            } else {
                let (p, q) = LogProb::channel(ch)?;
                let (v, t) = block_sum::<LogProb>(n, &p, &q, |a, b| LogProb(ln_binom(a, b)));
                (Number::Float(v.value()), t)
            }
        }
        SimplexMethod::Enumeration => {
            if n > ENUMERATION_LIMIT {
                return Err(Error::InvalidArgument(format!(
                    "enumeration covers n <= {ENUMERATION_LIMIT}, got {n}"
                )));
            }
            let mut by_distance = vec![0u64; n + 1];
            for y in 0u32..(1 << n) {
                let dist = |w: &Vec<u8>| (0..n).filter(|&i| ((y >> i) & 1) as u8 != w[i]).count();
                let d = [dist(&words[0]), dist(&words[1]), dist(&words[2])];
                if d[0] == d[1] && d[1] == d[2] {
                    by_distance[d[0]] += 1;
                }
            }
            let v = if exact_mode {
                let (p, q) = exact_channel(ch)?;
                let v = by_distance.iter().enumerate().fold(exact::zero(), |acc, (d, &c)| {
                    acc + Rational::from_integer(c.into()) * exact::pow(&p, d) * exact::pow(&q, n - d)
                });
                Number::Exact(v)
            } else {
                let (p, q) = (ch.p(), ch.q());
                let v: f64 = by_distance.iter().enumerate().map(|(d, &c)| c as f64 * p.powi(d as i32) * q.powi((n - d) as i32)).sum();
                Number::Float(v)
            };
            (v, Vec::new())
        }
    };
    let ln_prob = match &prob {
        Number::Float(_) if !terms.is_empty() => terms.iter().fold(f64::NEG_INFINITY, |a, t| crate::semiring::log_add(a, t.ln_term)),
        other => other.ln(),
    };
    let asym = simplex_asymptote(ch)?;
    Ok(SimplexEventReport {
        n,
        method,
        prob,
        ln_prob,
        exponent: if n == 0 { 0.0 } else { -ln_prob / n as f64 },
        terms,
        u0: asym.u0,
        g_u0: asym.g_u0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimplexAsymptote {
    /// `1 / (1 + z^{-1/3})`.
    pub u0: f64,
    /// `p^{1/3} / (p^{1/3} + q^{1/3})`.
    pub u0_alt: f64,
    pub g_u0: f64,
    /// `ln q + g(u0)`.
    pub lhs: f64,
    /// `ln(p^{1/3} q^{2/3} + p^{2/3} q^{1/3})`.
    pub rhs: f64,
    pub g_prime_u0: f64,
    pub holds: bool,
}

pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// The maximizing ones fraction and the identity `ln q + g(u0) = -F_fb`.
pub fn simplex_asymptote(ch: &ChannelParams) -> Result<SimplexAsymptote> {
    let mut hp = Hp::new();
    let (p, q, c, d) = thirds(&mut hp, ch);
    let one = hp.int(1);
    let z3 = hp.cbrt(&hp.div(&p, &q));
    let u0 = hp.div(&one, &hp.add(&one, &hp.div(&one, &z3)));
    let u0_alt = hp.div(&c, &hp.add(&c, &d));
    let ln_z3 = hp.ln(&z3);
    let one_minus = hp.sub(&one, &u0);
    let h = {
        let a = hp.xlnx(&u0);
        let b = hp.xlnx(&one_minus);
        hp.sub(&hp.int(0), &hp.add(&a, &b))
    };
    let g = hp.add(&h, &hp.mul(&hp.add(&one, &u0), &ln_z3));
    let ln_q = hp.ln(&q);
    let lhs = hp.add(&ln_q, &g);
    let rhs = ln_base(&mut hp, &c, &d);
    let odds = hp.div(&one_minus, &u0);
    let ln_odds = hp.ln(&odds);
    let g_prime = hp.add(&ln_odds, &ln_z3);
    let gap = hp.to_f64(&hp.sub(&lhs, &rhs)).abs();
    let u_gap = hp.to_f64(&hp.sub(&u0, &u0_alt)).abs();
    let out = SimplexAsymptote {
        u0: hp.to_f64(&u0),
        u0_alt: hp.to_f64(&u0_alt),
        g_u0: hp.to_f64(&g),
        lhs: hp.to_f64(&lhs),
        rhs: hp.to_f64(&rhs),
        g_prime_u0: hp.to_f64(&g_prime),
        holds: gap <= IDENTITY_TOLERANCE && u_gap <= IDENTITY_TOLERANCE,
    };
    if !out.holds {
        return Err(Error::CheckFailed(format!("simplex identity off by {gap:e} (u0 forms differ by {u_gap:e})")));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub p: String,
    pub n: Option<usize>,
    pub f_fb: f64,
    pub e2: f64,
    pub e3: f64,
    pub upper: Option<BoundValue>,
    pub lower: Option<LowerBounds>,
    pub a0: Option<A0Root>,
    pub f1_at_a0: Option<f64>,
}

pub fn bound_report(ch: &ChannelParams, n: Option<usize>) -> Result<BoundReport> {
    let ex = error_exponents(ch)?;
    let a0 = if ch.is_degenerate() { None } else { Some(a0_for_channel(ch)?) };
    let f1_at_a0 = match a0 {
        Some(r) => Some(f1_eval(ch.p(), r.closed_form)?.0),
        None => None,
    };
    Ok(BoundReport {
        p: ch.label(),
        n,
        f_fb: ex.f_fb,
        e2: ex.e2,
        e3: ex.e3,
        upper: n.map(|n| berlekamp_upper(n, ch)),
        lower: n.map(|n| theorem1_lower(n, ch)),
        a0,
        f1_at_a0,
    })
}

pub const SWEEP_CSV_HEADER: &str = "p,n,f_fb,e2,e3,upper,lower";

pub fn bounds_sweep_csv(channels: &[ChannelParams], ns: &[usize]) -> Result<String> {
    let mut rows = Vec::new();
    for ch in channels {
        let ex = error_exponents(ch)?;
        for &n in ns {
            rows.push(vec![
                ch.label(),
                n.to_string(),
                float_field(ex.f_fb),
                float_field(ex.e2),
                float_field(ex.e3),
                float_field(berlekamp_upper(n, ch).value),
                float_field(theorem1_lower(n, ch).theorem1.value),
            ]);
        }
    }
    Ok(csv_document(SWEEP_CSV_HEADER, &rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelMode;
    use crate::exact::rat;

    fn ch(p: &str) -> ChannelParams {
        ChannelParams::new(p, ChannelMode::Rational).unwrap()
    }

    /// Plain double-precision evaluation, independent of the high-precision path.
    fn f_fb_f64(p: f64) -> f64 {
        let q = 1.0 - p;
        -(p.cbrt() * q.cbrt().powi(2) + p.cbrt().powi(2) * q.cbrt()).ln()
    }

    #[test]
    fn exponent_values() {
        let ex = error_exponents(&ch("1/10")).unwrap();
        assert!((ex.f_fb - f_fb_f64(0.1)).abs() < 1e-14);
        assert!((ex.e2 - 0.5 * (1.0f64 / 0.36).ln()).abs() < 1e-14);
        assert!((ex.e3 - (1.0f64 / 0.36).ln() / 3.0).abs() < 1e-14);
        let d = error_exponents(&ch("1/2")).unwrap();
        assert_eq!((d.f_fb, d.e2, d.e3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn exponents_decrease_in_p() {
        let mut prev: Option<Exponents> = None;
        for k in 1..50 {
            let e = error_exponents(&ch(&format!("{k}/100"))).unwrap();
            if let Some(pr) = prev {
                assert!(e.f_fb < pr.f_fb && e.e2 < pr.e2 && e.e3 < pr.e3);
            }
            prev = Some(e);
        }
    }

    #[test]
    fn upper_bound_values() {
        let c = ch("1/10");
        assert!((berlekamp_upper(0, &c).value - 9f64.cbrt()).abs() < 1e-14);
        let u20 = berlekamp_upper(20, &c).value;
        assert!((u20 - 9f64.cbrt() * (-20.0 * f_fb_f64(0.1)).exp()).abs() < 1e-15);
        assert!((berlekamp_upper(7, &ch("1/2")).value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lower_bound_values() {
        let c = ch("1/10");
        assert!((theorem1_lower(0, &c).theorem1.value - 0.5).abs() < 1e-15);
        let l1 = theorem1_lower(1, &c);
        assert!((l1.theorem1.value - 0.5 * (-f_fb_f64(0.1)).exp()).abs() < 1e-15);
        // the return-probability form equals 2/3 of the other one
        assert!((l1.via_return.value / l1.theorem1.value - 2.0 / 3.0).abs() < 1e-14);
        assert!((theorem1_lower(4, &ch("1/2")).theorem1.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn certified_comparisons() {
        let c = ch("1/10");
        // n = 0: bound is 9^{1/3} ~ 2.0801
        assert_eq!(compare_with_upper(&rat(2, 1), 0, &c).unwrap(), Certified::Less);
        assert_eq!(compare_with_upper(&rat(21, 10), 0, &c).unwrap(), Certified::Greater);
        assert_eq!(compare_with_lower(&rat(1, 2), 0, &c).unwrap(), Certified::Equal);
        assert_eq!(compare_with_lower(&rat(2, 5), 1, &c).unwrap(), Certified::Greater);
        // p = 1/8: c = 1/2 exactly, q = 7/8 irrational cube root
        let c8 = ch("1/8");
        let lo = theorem1_lower(3, &c8).theorem1.value;
        let below = Rational::from_float(lo * 0.999).unwrap();
        assert_eq!(compare_with_lower(&below, 3, &c8).unwrap(), Certified::Less);
    }

    #[test]
    fn a0_matches_bisection() {
        for p in [1e-6, 1e-3, 0.1, 0.3, 0.49] {
            let r = a0_root(p).unwrap();
            assert!((r.closed_form - r.bisection).abs() < 1e-10);
            assert!(r.residual.abs() < 1e-10);
            assert!(r.closed_form > 0.0 && r.closed_form < 0.5);
        }
        let r = a0_root(0.1).unwrap();
        assert!((r.closed_form - 0.1354).abs() < 1e-3);
        let small = a0_root(1e-6).unwrap();
        assert!((3.0 * small.closed_form / 1e-2 - 1.0).abs() <= 0.1);
        assert!(a0_root(0.5).is_err());
    }

    #[test]
    fn f1_is_concave_with_stationary_point_at_a0() {
        for p in [0.01, 0.1, 0.3] {
            let a0 = a0_root(p).unwrap().closed_form;
            assert!(f1_eval(p, a0).unwrap().1.abs() < 1e-8);
            assert!(f1_eval(p, a0 * 0.9).unwrap().1 > 0.0);
            assert!(f1_eval(p, a0 * 1.1).unwrap().1 < 0.0);
            let grid: Vec<f64> = (1..100).map(|i| i as f64 * 0.005).collect();
            let v: Vec<f64> = grid.iter().map(|&a| f1_eval(p, a).unwrap().0).collect();
            for w in v.windows(3) {
                assert!(w[0] - 2.0 * w[1] + w[2] < 0.0);
            }
        }
        let a = 0.2;
        let (v, _) = f1_eval(0.5, a).unwrap();
        assert!((v - (1.0 + a) * binary_entropy(3.0 * a / (1.0 + a))).abs() < 1e-14);
        assert!(f1_eval(0.1, 0.5).is_err());
        assert!(f1_eval(0.1, 0.0).is_err());
    }

    #[test]
    fn codewords() {
        let w = simplex_codewords(3).unwrap();
        assert_eq!(w, [vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let w6 = simplex_codewords(6).unwrap();
        assert_eq!(w6[1], vec![0, 0, 1, 1, 0, 0]);
        for i in 0..3 {
            for j in i + 1..3 {
                assert_eq!(w6[i].iter().zip(&w6[j]).filter(|(a, b)| a != b).count(), 4);
            }
        }
        assert!(matches!(simplex_codewords(4), Err(Error::NotDivisibleBy3(4))));
    }

    #[test]
    fn simplex_small_cases() {
        let c = ch("1/10");
        for m in [SimplexMethod::BlockSum, SimplexMethod::Enumeration] {
            let r = simplex_event_prob(3, &c, m, true).unwrap();
            assert_eq!(r.prob, Number::Exact(rat(9, 100)));
        }
        let half = simplex_event_prob(3, &ch("1/2"), SimplexMethod::BlockSum, true).unwrap();
        assert_eq!(half.prob, Number::Exact(rat(1, 4)));
        let a = simplex_event_prob(6, &c, SimplexMethod::BlockSum, true).unwrap();
        let b = simplex_event_prob(6, &c, SimplexMethod::Enumeration, true).unwrap();
        assert_eq!(a.prob, b.prob);
        let lg = simplex_event_prob(6, &c, SimplexMethod::BlockSum, false).unwrap();
        assert!((lg.ln_prob - a.ln_prob).abs() < 1e-13);
        assert!(simplex_event_prob(18, &c, SimplexMethod::Enumeration, true).is_err());
    }

    #[test]
    fn asymptote_identity() {
        let a = simplex_asymptote(&ch("1/10")).unwrap();
        assert!((a.u0 - 0.3246665).abs() < 1e-6);
        assert!((a.lhs + f_fb_f64(0.1)).abs() < 1e-12);
        assert!(a.g_prime_u0.abs() < 1e-8);
        let d = simplex_asymptote(&ch("1/2")).unwrap();
        assert!((d.u0 - 0.5).abs() < 1e-15 && d.lhs.abs() < 1e-15);
    }

    #[test]
    fn sweep_header() {
        let csv = bounds_sweep_csv(&[ch("1/10")], &[1, 2]).unwrap();
        assert!(csv.starts_with("p,n,f_fb,e2,e3,upper,lower\r\n1/10,1,"));
        assert_eq!(csv.lines().count(), 3);
    }
}
