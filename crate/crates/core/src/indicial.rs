//! Critical weights of radial indicial operators, the additive monoid they
//! generate, and its exponent ladder.
//!
//! Weights are exact numbers `q₀ + Σ q_r √r` with rational `q` and distinct
//! squarefree radicands `r > 1`. Square roots of distinct squarefree integers
//! are linearly independent over `Q`, so this representation is canonical and
//! structural equality is numeric equality.

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;
use thiserror::Error;

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndicialError {
    #[error("complex indicial roots: H^2/4 + lambda = {0} < 0")]
    ComplexRoots(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("generator set is empty")]
    EmptyGenerators,
    #[error("generator {0} is not positive")]
    NonPositiveGenerator(String),
    #[error("{0} is not an element of the monoid")]
    NotInMonoid(String),
    #[error("cannot parse '{input}': {reason}")]
    Parse { input: String, reason: String },
    #[error("product of distinct radicals: {0}")]
    RadicalProduct(String),
    #[error("arithmetic overflow in exact weight")]
    Overflow,
}

/// Exact element of `Q + Σ Q√r`.
#[derive(Clone)]
pub struct ExactWeight {
    rational: Rational,
    radicals: BTreeMap<u64, Rational>,
    value: f64,
}

fn ratio_f64(q: &Rational) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

impl ExactWeight {
    fn build(rational: Rational, radicals: BTreeMap<u64, Rational>) -> Self {
        let radicals: BTreeMap<u64, Rational> = radicals.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        let value = radicals.iter().fold(ratio_f64(&rational), |acc, (r, c)| {
            acc + ratio_f64(c) * (*r as f64).sqrt()
        });
        Self {
            rational,
            radicals,
            value,
        }
    }

    pub fn rational(q: Rational) -> Self {
        Self::build(q, BTreeMap::new())
    }

    pub fn integer(k: i64) -> Self {
        Self::rational(Rational::from_integer(k))
    }

    pub fn zero() -> Self {
        Self::integer(0)
    }

    /// `√q` in canonical form.
    pub fn sqrt_of(q: Rational) -> Result<Self, IndicialError> {
        if q.is_negative() {
            return Err(IndicialError::ComplexRoots(q.to_string()));
        }
        if q.is_zero() {
            return Ok(Self::zero());
        }
        // √(p/d) = √(p·d)/d
        let (p, d) = (*q.numer() as u128, *q.denom() as u128);
        let prod = u64::try_from(p * d).map_err(|_| IndicialError::Overflow)?;
        let (outside, r) = split_square(prod);
        let coeff = Rational::new(i64::try_from(outside).map_err(|_| IndicialError::Overflow)?, d as i64);
        if r == 1 {
            return Ok(Self::rational(coeff));
        }
        let mut map = BTreeMap::new();
        map.insert(r, coeff);
        Ok(Self::build(Rational::zero(), map))
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn rational_part(&self) -> Rational {
        self.rational
    }

    pub fn radical_terms(&self) -> &BTreeMap<u64, Rational> {
        &self.radicals
    }

    pub fn is_rational(&self) -> bool {
        self.radicals.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.rational.is_zero() && self.radicals.is_empty()
    }

    pub fn scale(&self, k: Rational) -> Self {
        Self::build(
            self.rational * k,
            self.radicals.iter().map(|(r, c)| (*r, *c * k)).collect(),
        )
    }

    /// Sign decided exactly when at most one radical is present.
    pub fn signum(&self) -> Ordering {
        match self.radicals.len() {
            0 => self.rational.cmp(&Rational::zero()),
            1 => {
                let (r, c) = self.radicals.iter().next().map(|(r, c)| (*r, *c)).unwrap();
                let a = self.rational;
                let sa = a.cmp(&Rational::zero());
                let sb = c.cmp(&Rational::zero());
                if sa == sb || sa == Ordering::Equal {
                    return sb;
                }
                // opposite signs: compare a² with c²·r
                let lhs = a * a;
                let rhs = c * c * Rational::from_integer(r as i64);
                match lhs.cmp(&rhs) {
                    Ordering::Greater => sa,
                    Ordering::Less => sb,
                    Ordering::Equal => Ordering::Equal,
                }
            }
            _ => self.value.partial_cmp(&0.0).unwrap_or(Ordering::Equal),
        }
    }

    /// Product, defined when the operands together involve at most one radicand.
    pub fn checked_mul(&self, other: &Self) -> Result<Self, IndicialError> {
        let radicands: HashSet<u64> = self.radicals.keys().chain(other.radicals.keys()).copied().collect();
        if radicands.len() > 1 {
            return Err(IndicialError::RadicalProduct(format!("({self}) * ({other})")));
        }
        let Some(&r) = radicands.iter().next() else {
            return Ok(Self::rational(self.rational * other.rational));
        };
        let b1 = self.radicals.get(&r).copied().unwrap_or_else(Rational::zero);
        let b2 = other.radicals.get(&r).copied().unwrap_or_else(Rational::zero);
        let (a1, a2) = (self.rational, other.rational);
        let mut map = BTreeMap::new();
        map.insert(r, a1 * b2 + a2 * b1);
        Ok(Self::build(a1 * a2 + b1 * b2 * Rational::from_integer(r as i64), map))
    }

    /// Expression string of the form `1 + 1/2*sqrt(13)`.
    pub fn expr(&self) -> String {
        let mut out = String::new();
        if !self.rational.is_zero() || self.radicals.is_empty() {
            out.push_str(&self.rational.to_string());
        }
        for (r, c) in &self.radicals {
            let neg = c.is_negative();
            let mag = c.abs();
            if out.is_empty() {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            if !mag.is_one() {
                out.push_str(&format!("{mag}*"));
            }
            out.push_str(&format!("sqrt({r})"));
        }
        out
    }
}

/// `n = k²·r` with `r` squarefree; returns `(k, r)`.
fn split_square(mut n: u64) -> (u64, u64) {
    let mut k = 1u64;
    let mut r = 1u64;
    let mut p = 2u64;
    while p.saturating_mul(p) <= n {
        let mut e = 0;
        while n.is_multiple_of(p) {
            n /= p;
            e += 1;
        }
        k *= p.pow(e / 2);
        if e % 2 == 1 {
            r *= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    (k, r * n)
}

impl fmt::Display for ExactWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.expr())
    }
}

impl fmt::Debug for ExactWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (~{})", self.expr(), self.value)
    }
}

impl PartialEq for ExactWeight {
    fn eq(&self, other: &Self) -> bool {
        self.rational == other.rational && self.radicals == other.radicals
    }
}

impl Eq for ExactWeight {}

impl Hash for ExactWeight {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rational.hash(state);
        self.radicals.hash(state);
    }
}

impl Ord for ExactWeight {
    fn cmp(&self, other: &Self) -> Ordering {
        if self == other {
            return Ordering::Equal;
        }
        match (self - other).signum() {
            Ordering::Equal => {
                // several radicals with a numerically vanishing difference
                (&self.rational, &self.radicals).cmp(&(&other.rational, &other.radicals))
            }
            o => o,
        }
    }
}

impl PartialOrd for ExactWeight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for &ExactWeight {
    type Output = ExactWeight;
    fn add(self, rhs: &ExactWeight) -> ExactWeight {
        let mut map = self.radicals.clone();
        for (r, c) in &rhs.radicals {
            *map.entry(*r).or_insert_with(Rational::zero) += *c;
        }
        ExactWeight::build(self.rational + rhs.rational, map)
    }
}

impl Add for ExactWeight {
    type Output = ExactWeight;
    fn add(self, rhs: ExactWeight) -> ExactWeight {
        &self + &rhs
    }
}

impl Neg for &ExactWeight {
    type Output = ExactWeight;
    fn neg(self) -> ExactWeight {
        self.scale(-Rational::one())
    }
}

impl Neg for ExactWeight {
    type Output = ExactWeight;
    fn neg(self) -> ExactWeight {
        -&self
    }
}

impl Sub for &ExactWeight {
    type Output = ExactWeight;
    fn sub(self, rhs: &ExactWeight) -> ExactWeight {
        self + &(-rhs)
    }
}

impl Sub for ExactWeight {
    type Output = ExactWeight;
    fn sub(self, rhs: ExactWeight) -> ExactWeight {
        &self - &rhs
    }
}

impl Mul<Rational> for &ExactWeight {
    type Output = ExactWeight;
    fn mul(self, k: Rational) -> ExactWeight {
        self.scale(k)
    }
}

impl From<Rational> for ExactWeight {
    fn from(q: Rational) -> Self {
        Self::rational(q)
    }
}

impl From<i64> for ExactWeight {
    fn from(k: i64) -> Self {
        Self::integer(k)
    }
}

/// Parse an integer, a fraction `p/q` or a finite decimal exactly.
pub fn parse_rational(input: &str) -> Result<Rational, IndicialError> {
    let s = input.trim();
    let err = |reason: &str| IndicialError::Parse {
        input: input.to_string(),
        reason: reason.to_string(),
    };
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p.trim().parse().map_err(|_| err("bad numerator"))?;
        let q: i64 = q.trim().parse().map_err(|_| err("bad denominator"))?;
        if q == 0 {
            return Err(err("zero denominator"));
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) || frac.len() > 15 {
            return Err(err("bad decimal"));
        }
        let neg = int.starts_with('-');
        let int_abs = int.trim_start_matches(['-', '+']);
        let ip: i64 = if int_abs.is_empty() {
            0
        } else {
            int_abs.parse().map_err(|_| err("bad integer part"))?
        };
        let den = 10i64.pow(frac.len() as u32);
        let fp: i64 = frac.parse().map_err(|_| err("bad fraction"))?;
        let num = ip
            .checked_mul(den)
            .and_then(|v| v.checked_add(fp))
            .ok_or_else(|| err("overflow"))?;
        return Ok(Rational::new(if neg { -num } else { num }, den));
    }
    s.parse::<i64>()
        .map(Rational::from_integer)
        .map_err(|_| err("not a rational number"))
}

impl FromStr for ExactWeight {
    type Err = IndicialError;

    /// Accepts sums of rationals and terms `c*sqrt(q)` or `sqrt(q)`, as produced
    /// by [`ExactWeight::expr`].
    fn from_str(input: &str) -> Result<Self, Self::Err> {
        let s: String = input.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(IndicialError::Parse {
                input: input.into(),
                reason: "empty".into(),
            });
        }
        let mut terms = Vec::new();
        let mut depth = 0;
        let mut start = 0;
        for (i, ch) in s.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => depth -= 1,
                '+' | '-' if depth == 0 && i > 0 => {
                    terms.push(&s[start..i]);
                    start = i;
                }
                _ => {}
            }
        }
        terms.push(&s[start..]);
        let mut acc = ExactWeight::zero();
        for t in terms {
            let (sign, body) = match t.strip_prefix('-') {
                Some(b) => (-Rational::one(), b),
                None => (Rational::one(), t.strip_prefix('+').unwrap_or(t)),
            };
            let term = if let Some(pos) = body.find("sqrt(") {
                let inner = body[pos + 5..].strip_suffix(')').ok_or_else(|| IndicialError::Parse {
                    input: input.into(),
                    reason: "unbalanced sqrt(".into(),
                })?;
                let coeff = match body[..pos].strip_suffix('*') {
                    Some(c) => parse_rational(c)?,
                    None if pos == 0 => Rational::one(),
                    None => {
                        return Err(IndicialError::Parse {
                            input: input.into(),
                            reason: "expected c*sqrt(q)".into(),
                        })
                    }
                };
                ExactWeight::sqrt_of(parse_rational(inner)?)?.scale(coeff)
            } else {
                ExactWeight::rational(parse_rational(body)?)
            };
            acc = &acc + &term.scale(sign);
        }
        Ok(acc)
    }
}

// ---------------------------------------------------------------------------
// critical weights

/// `(μ₋, μ₊) = 𝓗/2 ∓ √(𝓗²/4 + λ)`, the roots of `μ² − 𝓗μ − λ`.
pub fn critical_pair(lambda: Rational, hcal: Rational) -> Result<(ExactWeight, ExactWeight), IndicialError> {
    let half = hcal / Rational::from_integer(2);
    let disc = half * half + lambda;
    if disc.is_negative() {
        return Err(IndicialError::ComplexRoots(disc.to_string()));
    }
    let r = ExactWeight::sqrt_of(disc)?;
    let h = ExactWeight::rational(half);
    Ok((&h - &r, &h + &r))
}

/// `−μ² + 𝓗μ + λ`, the symbol of `−∂² − 𝓗∂ + λ` on `e^{−μs}`.
pub fn indicial_symbol(lambda: Rational, hcal: Rational, mu: &ExactWeight) -> Result<ExactWeight, IndicialError> {
    let sq = mu.checked_mul(mu)?;
    Ok(&(&mu.scale(hcal) - &sq) + &ExactWeight::rational(lambda))
}

/// Open interval `]μ₋, μ₊[` for `λ ≥ 0`.
pub fn dirichlet_interval(lambda: Rational, hcal: Rational) -> Result<(ExactWeight, ExactWeight), IndicialError> {
    if lambda.is_negative() {
        return Err(IndicialError::Unsupported(format!("lambda = {lambda} < 0")));
    }
    critical_pair(lambda, hcal)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub lambda: Rational,
    pub multiplicity: u32,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpectrum {
    pub hcal: Rational,
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalWeightSet {
    /// `(μ₋, μ₊)` per mode, in input order.
    pub pairs: Vec<(ExactWeight, ExactWeight)>,
    /// `min μ₊^{(i)}`.
    pub mu_plus: ExactWeight,
    /// `max μ₋^{(i)}`.
    pub mu_minus: ExactWeight,
    pub mu_plus_max: ExactWeight,
    pub mu_minus_min: ExactWeight,
}

impl ModeSpectrum {
    pub fn critical_weights(&self) -> Result<CriticalWeightSet, IndicialError> {
        if !self.hcal.is_positive() {
            return Err(IndicialError::Unsupported(format!(
                "H = {} must be positive",
                self.hcal
            )));
        }
        if self.modes.is_empty() {
            return Err(IndicialError::Unsupported("empty spectrum".into()));
        }
        let pairs = self
            .modes
            .iter()
            .map(|m| critical_pair(m.lambda, self.hcal))
            .collect::<Result<Vec<_>, _>>()?;
        let plus: Vec<&ExactWeight> = pairs.iter().map(|p| &p.1).collect();
        let minus: Vec<&ExactWeight> = pairs.iter().map(|p| &p.0).collect();
        Ok(CriticalWeightSet {
            mu_plus: (*plus.iter().min().unwrap()).clone(),
            mu_plus_max: (*plus.iter().max().unwrap()).clone(),
            mu_minus: (*minus.iter().max().unwrap()).clone(),
            mu_minus_min: (*minus.iter().min().unwrap()).clone(),
            pairs,
        })
    }
}

/// Upper critical weights of the complex Einstein operator,
/// `m, ½(m+√(m²+8)), ½(m+√(m²+2m+5)), m+1`, sorted.
pub fn einstein_complex_weights(m: u32) -> Result<Vec<ExactWeight>, IndicialError> {
    let spec = einstein_complex_spectrum(m)?;
    let mut w: Vec<ExactWeight> = spec.critical_weights()?.pairs.into_iter().map(|p| p.1).collect();
    w.sort();
    Ok(w)
}

/// Mode eigenvalues `λ = μ(μ − m)` matching [`einstein_complex_weights`].
pub fn einstein_complex_spectrum(m: u32) -> Result<ModeSpectrum, IndicialError> {
    if m < 2 {
        return Err(IndicialError::Unsupported(format!("m = {m} < 2")));
    }
    let mi = m as i64;
    let mode = |lambda: Rational, label: &str| Mode {
        lambda,
        multiplicity: 1,
        label: label.to_string(),
    };
    Ok(ModeSpectrum {
        hcal: Rational::from_integer(mi),
        modes: vec![
            mode(Rational::zero(), "m"),
            mode(Rational::from_integer(2), "(m+sqrt(m^2+8))/2"),
            mode(Rational::new(2 * mi + 5, 4), "(m+sqrt(m^2+2m+5))/2"),
            mode(Rational::from_integer(mi + 1), "m+1"),
        ],
    })
}

/// Tolerance on the enumeration bound.
pub const BOUND_SLACK: f64 = 1e-12;

/// Elements of the additive monoid generated by `generators` (the empty sum
/// included) with value `≤ bound`, ascending, duplicates merged.
pub fn monoid_enumerate(generators: &[ExactWeight], bound: f64) -> Result<Vec<ExactWeight>, IndicialError> {
    if generators.is_empty() {
        return Err(IndicialError::EmptyGenerators);
    }
    for g in generators {
        if g.signum() != Ordering::Greater {
            return Err(IndicialError::NonPositiveGenerator(g.expr()));
        }
    }
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let zero = ExactWeight::zero();
    seen.insert(zero.clone());
    heap.push(Reverse(zero));
    while let Some(Reverse(x)) = heap.pop() {
        if x.value() > bound + BOUND_SLACK {
            break;
        }
        for g in generators {
            let y = &x + g;
            if y.value() <= bound + BOUND_SLACK && seen.insert(y.clone()) {
                heap.push(Reverse(y));
            }
        }
        out.push(x);
    }
    Ok(out)
}

/// Ladder `a₀ = 0 < a₁ < .. < a_K` with `μ₊ + a_{k+1}` the successor of `μ₊ + a_k` in the monoid.
pub fn ladder(mu_plus: &ExactWeight, generators: &[ExactWeight], k: usize) -> Result<Vec<ExactWeight>, IndicialError> {
    let g_min = generators.iter().min().ok_or(IndicialError::EmptyGenerators)?;
    // μ₊ + j·g_min lies in the monoid, so K successors fit below this bound
    let bound = mu_plus.value() + k as f64 * g_min.value() + 1e-9;
    let elems = monoid_enumerate(generators, bound)?;
    let start = elems
        .iter()
        .position(|e| e == mu_plus)
        .ok_or_else(|| IndicialError::NotInMonoid(mu_plus.expr()))?;
    if elems.len() < start + k + 1 {
        return Err(IndicialError::Unsupported(format!("ladder exhausted below {bound}")));
    }
    Ok(elems[start..=start + k].iter().map(|e| e - mu_plus).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> ExactWeight {
        s.parse().unwrap()
    }

    fn q(p: i64, d: i64) -> Rational {
        Rational::new(p, d)
    }

    #[test]
    fn canonical_radicals() {
        assert_eq!(ExactWeight::sqrt_of(q(12, 1)).unwrap(), w("2*sqrt(3)"));
        assert_eq!(ExactWeight::sqrt_of(q(20, 4)).unwrap(), w("sqrt(5)"));
        assert_eq!(ExactWeight::sqrt_of(q(1, 2)).unwrap(), w("1/2*sqrt(2)"));
        assert_eq!(ExactWeight::sqrt_of(q(9, 4)).unwrap(), w("3/2"));
        assert_eq!(w("1 + 1/2*sqrt(13)").expr(), "1 + 1/2*sqrt(13)");
        assert_eq!(w("-sqrt(3) + 1/2").expr(), "1/2 - sqrt(3)");
    }

    #[test]
    fn exact_sign_and_order() {
        assert_eq!(w("sqrt(3) - 1").signum(), Ordering::Greater);
        assert_eq!(w("7/4 - sqrt(3)").signum(), Ordering::Greater);
        assert_eq!(w("1732/1000 - sqrt(3)").signum(), Ordering::Less);
        assert!(w("1 + sqrt(3)") < w("1 + 1/2*sqrt(13)"));
    }

    #[test]
    fn critical_pair_examples() {
        let (a, b) = critical_pair(q(0, 1), q(3, 1)).unwrap();
        assert_eq!((a, b), (w("0"), w("3")));
        let (a, b) = critical_pair(q(2, 1), q(2, 1)).unwrap();
        assert_eq!((a.clone(), b.clone()), (w("1 - sqrt(3)"), w("1 + sqrt(3)")));
        assert!(indicial_symbol(q(2, 1), q(2, 1), &b).unwrap().is_zero());
        assert!(indicial_symbol(q(2, 1), q(2, 1), &a).unwrap().is_zero());
        assert!(matches!(
            critical_pair(q(-3, 1), q(2, 1)),
            Err(IndicialError::ComplexRoots(_))
        ));
    }

    #[test]
    fn einstein_weights() {
        let v = einstein_complex_weights(2).unwrap();
        assert_eq!(v, vec![w("2"), w("1 + sqrt(3)"), w("1 + 1/2*sqrt(13)"), w("3")]);
        let v = einstein_complex_weights(3).unwrap();
        assert_eq!(v, vec![w("3"), w("3/2 + 1/2*sqrt(17)"), w("3/2 + sqrt(5)"), w("4")]);
    }

    #[test]
    fn monoid_examples() {
        let g = [w("1"), w("3")];
        let got: Vec<String> = monoid_enumerate(&g, 5.0).unwrap().iter().map(|e| e.expr()).collect();
        assert_eq!(got, ["0", "1", "2", "3", "4", "5"]);
        let mut g = vec![w("1/2")];
        g.extend(einstein_complex_weights(2).unwrap());
        let got = monoid_enumerate(&g, 3.1).unwrap();
        let want: Vec<ExactWeight> = [
            "0",
            "1/2",
            "1",
            "3/2",
            "2",
            "5/2",
            "1 + sqrt(3)",
            "1 + 1/2*sqrt(13)",
            "3",
        ]
        .iter()
        .map(|s| w(s))
        .collect();
        assert_eq!(got, want);
        assert!(matches!(
            monoid_enumerate(&[], 1.0),
            Err(IndicialError::EmptyGenerators)
        ));
        assert!(monoid_enumerate(&[w("1 - sqrt(2)")], 1.0).is_err());
    }

    #[test]
    fn ladders() {
        let mut g = vec![w("1/2")];
        g.extend(einstein_complex_weights(2).unwrap());
        let a = ladder(&w("2"), &g, 4).unwrap();
        assert_eq!(
            a,
            vec![w("0"), w("1/2"), w("sqrt(3) - 1"), w("1/2*sqrt(13) - 1"), w("1")]
        );
        let a = ladder(&w("3"), &[w("1"), w("3")], 4).unwrap();
        assert_eq!(a, (0..5).map(ExactWeight::integer).collect::<Vec<_>>());
        assert!(matches!(
            ladder(&w("sqrt(2)"), &[w("1")], 2),
            Err(IndicialError::NotInMonoid(_))
        ));
    }

    #[test]
    fn parse_rationals() {
        assert_eq!(parse_rational("1.25").unwrap(), q(5, 4));
        assert_eq!(parse_rational("-0.5").unwrap(), q(-1, 2));
        assert_eq!(parse_rational(" 7/3 ").unwrap(), q(7, 3));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }
}
