//! Exact rational combinatorics over the support sets `A(n, r)`.
//!
//! Weight functions are finite tables `a(0..=x_max)` of nonnegative rationals,
//! read as zero beyond `x_max`. Every normalizing constant in the crate is a
//! value of the `n`-fold convolution of such a table, computed here by dynamic
//! programming. Support enumeration exists for oracles, explicit pmfs and
//! MaxEnt, and is guarded by a process-wide resource cap.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use num_bigint::{BigInt, BigUint};
use num_integer::binomial;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = num_rational::BigRational;

/// Default upper bound on the number of items any enumeration may produce.
pub const DEFAULT_ENUM_CAP: usize = 10_000_000;

static ENUM_CAP: AtomicUsize = AtomicUsize::new(DEFAULT_ENUM_CAP);

pub fn enum_cap() -> usize {
    ENUM_CAP.load(Ordering::Relaxed)
}

pub fn set_enum_cap(cap: usize) {
    ENUM_CAP.store(cap, Ordering::Relaxed);
}

pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn integer(value: u64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// Parses `"p/q"` or an integer string.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let trimmed = text.trim();
    let (numer, denom) = match trimmed.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (trimmed, "1"),
    };
    let numer = BigInt::from_str(numer)
        .map_err(|_| Error::Parse(format!("bad rational numerator in {text:?}")))?;
    let denom = BigInt::from_str(denom)
        .map_err(|_| Error::Parse(format!("bad rational denominator in {text:?}")))?;
    if denom.is_zero() {
        return Err(Error::Parse(format!("zero denominator in {text:?}")));
    }
    Ok(Rational::new(numer, denom))
}

/// Canonical text form: `"p/q"` in lowest terms, or `"p"` for integers.
pub fn format_rational(value: &Rational) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

fn pow(base: &Rational, exp: usize) -> Rational {
    num_traits::pow(base.clone(), exp)
}

/// A point of `A(n, r)`: the occupancy numbers of `n` cells.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Composition(Vec<usize>);

impl Composition {
    pub fn new(entries: Vec<usize>) -> Self {
        Composition(entries)
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn into_entries(self) -> Vec<usize> {
        self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Sorted copy of the entries; constant on permutation orbits.
    pub fn sorted_key(&self) -> Vec<usize> {
        let mut key = self.0.clone();
        key.sort_unstable();
        key
    }
}

impl Deref for Composition {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Composition {
    fn from(entries: Vec<usize>) -> Self {
        Composition(entries)
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// `|A(n, r)| = binom(n + r - 1, n - 1)`.
pub fn support_size(n: usize, r: usize) -> BigUint {
    if n == 0 {
        return if r == 0 { BigUint::one() } else { BigUint::zero() };
    }
    binomial(BigUint::from(n + r - 1), BigUint::from(n - 1))
}

fn check_cap(count: &BigUint) -> Result<()> {
    let cap = enum_cap();
    if *count > BigUint::from(cap) {
        return Err(Error::ResourceCap {
            count: count.to_string(),
            cap,
        });
    }
    Ok(())
}

/// Every element of `A(n, r)` exactly once, in ascending lexicographic order.
pub fn enumerate_support(n: usize, r: usize) -> Result<Vec<Composition>> {
    if n == 0 {
        return Err(Error::Domain("a support needs at least one cell".into()));
    }
    check_cap(&support_size(n, r))?;
    Ok(compositions(n, r))
}

fn compositions(n: usize, r: usize) -> Vec<Composition> {
    fn fill(prefix: &mut Vec<usize>, cells_left: usize, remaining: usize, out: &mut Vec<Composition>) {
        if cells_left == 1 {
            prefix.push(remaining);
            out.push(Composition(prefix.clone()));
            prefix.pop();
            return;
        }
        for x in 0..=remaining {
            prefix.push(x);
            fill(prefix, cells_left - 1, remaining - x, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    fill(&mut Vec::with_capacity(n), n, r, &mut out);
    out
}

/// The set `H(s)` of length-`n*s` compositions whose `j`-th block of `s`
/// consecutive entries sums to `x[j]`, in ascending lexicographic order.
pub fn enumerate_block_refinements(x: &Composition, s: usize) -> Result<Vec<Composition>> {
    if s == 0 {
        return Err(Error::Domain("block size must be positive".into()));
    }
    let count = x
        .iter()
        .fold(BigUint::one(), |acc, &xj| acc * support_size(s, xj));
    check_cap(&count)?;

    let blocks: Vec<Vec<Composition>> = x.iter().map(|&xj| compositions(s, xj)).collect();
    let mut out = vec![Vec::with_capacity(x.len() * s)];
    for block in &blocks {
        let mut next = Vec::with_capacity(out.len() * block.len());
        for prefix in &out {
            for part in block {
                let mut z = prefix.clone();
                z.extend_from_slice(part);
                next.push(z);
            }
        }
        out = next;
    }
    Ok(out.into_iter().map(Composition).collect())
}

/// The weight function `a`, truncated at `x_max` and zero beyond.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WeightFunction {
    values: Vec<Rational>,
}

impl WeightFunction {
    /// Validates a user-supplied table: `x_max >= 1`, all entries nonnegative,
    /// `a(0) > 0`, and some positive entry at an index `>= 1`.
    pub fn new(values: Vec<Rational>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidWeights("x_max must be at least 1".into()));
        }
        if let Some(x) = values.iter().position(|v| v.is_negative()) {
            return Err(Error::InvalidWeights(format!("a({x}) is negative")));
        }
        if !values[0].is_positive() {
            return Err(Error::InvalidWeights("a(0) must be positive".into()));
        }
        if !values[1..].iter().any(|v| v.is_positive()) {
            return Err(Error::InvalidWeights(
                "a must be positive somewhere beyond 0".into(),
            ));
        }
        Ok(WeightFunction { values })
    }

    /// Derived tables (convolution powers, deconvolution factors) only keep
    /// `a(0) > 0` and nonnegativity; `x_max` may be zero.
    pub(crate) fn from_table(values: Vec<Rational>) -> Self {
        debug_assert!(!values.is_empty() && values[0].is_positive());
        debug_assert!(values.iter().all(|v| !v.is_negative()));
        WeightFunction { values }
    }

    pub fn from_integers(values: &[u64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| integer(v)).collect())
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn x_max(&self) -> usize {
        self.values.len() - 1
    }

    /// `a(x)`, zero beyond the truncation bound.
    pub fn weight(&self, x: usize) -> Rational {
        self.values.get(x).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn is_positive_at(&self, x: usize) -> bool {
        self.values.get(x).is_some_and(|v| v.is_positive())
    }

    /// Same function on a different window: zero-padded or truncated.
    pub fn with_x_max(&self, x_max: usize) -> Self {
        let mut values = self.values.clone();
        values.resize(x_max + 1, Rational::zero());
        WeightFunction { values }
    }

    /// `x -> kappa * c^x * a(x)`; leaves every induced occupancy model unchanged.
    pub fn gauge_transform(&self, kappa: &Rational, c: &Rational) -> Result<Self> {
        if !kappa.is_positive() || !c.is_positive() {
            return Err(Error::Domain("gauge parameters must be positive".into()));
        }
        let mut tilt = kappa.clone();
        let values = self
            .values
            .iter()
            .map(|v| {
                let out = v * &tilt;
                tilt *= c;
                out
            })
            .collect();
        Ok(WeightFunction { values })
    }

    /// Maxwell-Boltzmann weights `1/x!`.
    pub fn mb(x_max: usize) -> Self {
        let mut values = Vec::with_capacity(x_max + 1);
        let mut factorial = Rational::one();
        for x in 0..=x_max {
            if x > 0 {
                factorial *= integer(x as u64);
            }
            values.push(factorial.recip());
        }
        WeightFunction { values }
    }

    /// Bose-Einstein weights, identically one.
    pub fn be(x_max: usize) -> Self {
        WeightFunction {
            values: vec![Rational::one(); x_max + 1],
        }
    }

    /// Fermi-Dirac weights: one at 0 and 1, zero elsewhere.
    pub fn fd(x_max: usize) -> Self {
        let values = (0..=x_max)
            .map(|x| if x <= 1 { Rational::one() } else { Rational::zero() })
            .collect();
        WeightFunction { values }
    }

    /// `binom(s + x - 1, x)`: the `s`-fold merge of Bose-Einstein weights.
    pub fn pseudo_contagious(s: usize, x_max: usize) -> Self {
        let values = (0..=x_max)
            .map(|x| {
                Rational::from_integer(BigInt::from(binomial(
                    BigUint::from((s + x).saturating_sub(1)),
                    BigUint::from(x),
                )))
            })
            .collect();
        WeightFunction { values }
    }

    /// `binom(s, x)`: the `s`-fold merge of Fermi-Dirac weights.
    pub fn multi_hypergeometric(s: usize, x_max: usize) -> Self {
        let values = (0..=x_max)
            .map(|x| {
                if x > s {
                    Rational::zero()
                } else {
                    Rational::from_integer(BigInt::from(binomial(
                        BigUint::from(s),
                        BigUint::from(x),
                    )))
                }
            })
            .collect();
        WeightFunction { values }
    }

    /// Logarithmic-series weights `1/(x + 1)`.
    pub fn log_series(x_max: usize) -> Self {
        let values = (0..=x_max).map(|x| ratio(1, x as i64 + 1)).collect();
        WeightFunction { values }
    }

    pub fn to_file(&self) -> WeightFile {
        WeightFile {
            x_max: self.x_max(),
            values: self.values.iter().map(format_rational).collect(),
        }
    }

    pub fn from_file(file: &WeightFile) -> Result<Self> {
        if file.values.len() != file.x_max + 1 {
            return Err(Error::Parse(format!(
                "x_max = {} but {} values given",
                file.x_max,
                file.values.len()
            )));
        }
        let values = file
            .values
            .iter()
            .map(|v| parse_rational(v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("weight file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file(&file)
    }
}

/// On-disk weight table: `{"x_max": 3, "values": ["1", "1/2", ...]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightFile {
    pub x_max: usize,
    pub values: Vec<String>,
}

/// Named weight families: `mb`, `be`, `fd`, `pc:s`, `mh:s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    MaxwellBoltzmann,
    BoseEinstein,
    FermiDirac,
    PseudoContagious(usize),
    MultiHypergeometric(usize),
}

impl Preset {
    pub fn weights(self, x_max: usize) -> WeightFunction {
        match self {
            Preset::MaxwellBoltzmann => WeightFunction::mb(x_max),
            Preset::BoseEinstein => WeightFunction::be(x_max),
            Preset::FermiDirac => WeightFunction::fd(x_max),
            Preset::PseudoContagious(s) => WeightFunction::pseudo_contagious(s, x_max),
            Preset::MultiHypergeometric(s) => WeightFunction::multi_hypergeometric(s, x_max),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let parse_s = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(Error::Parse(format!("bad preset parameter in {text:?}"))),
            }
        };
        match text.split_once(':') {
            None => match text {
                "mb" => Ok(Preset::MaxwellBoltzmann),
                "be" => Ok(Preset::BoseEinstein),
                "fd" => Ok(Preset::FermiDirac),
                _ => Err(Error::Parse(format!("unknown weight preset {text:?}"))),
            },
            Some(("pc", s)) => Ok(Preset::PseudoContagious(parse_s(s)?)),
            Some(("mh", s)) => Ok(Preset::MultiHypergeometric(parse_s(s)?)),
            Some(_) => Err(Error::Parse(format!("unknown weight preset {text:?}"))),
        }
    }
}

fn convolve_truncated(lhs: &[Rational], rhs: &[Rational], upto: usize) -> Vec<Rational> {
    let mut out = vec![Rational::zero(); upto + 1];
    for (i, l) in lhs.iter().enumerate().take(upto + 1) {
        if l.is_zero() {
            continue;
        }
        for (j, r) in rhs.iter().enumerate().take(upto + 1 - i) {
            if !r.is_zero() {
                out[i + j] += l * r;
            }
        }
    }
    out
}

/// `C(n, 0..=upto)` by the recursion `C(n, y) = sum_x a(x) C(n - 1, y - x)`.
pub fn convolution_table(a: &WeightFunction, n: usize, upto: usize) -> Vec<Rational> {
    let mut table = vec![Rational::zero(); upto + 1];
    table[0] = Rational::one();
    for _ in 0..n {
        table = convolve_truncated(a.values(), &table, upto);
    }
    table
}

/// Normalizing constant `C(n, r) = sum over A(n, r) of prod_j a(x_j)`.
///
/// May be zero (for example Fermi-Dirac weights with `r > n`); callers that
/// need a positive constant report that as [`Error::ZeroNormalizer`].
pub fn norm_const(a: &WeightFunction, n: usize, r: usize) -> Rational {
    convolution_table(a, n, r).swap_remove(r)
}

/// `x -> C(s, x)` for `x` in `0..=out_max`: the `s`-fold convolution of `a`.
pub fn convolution_power(a: &WeightFunction, s: usize, out_max: usize) -> Result<WeightFunction> {
    if s == 0 {
        return Err(Error::Domain("convolution power needs s >= 1".into()));
    }
    Ok(WeightFunction::from_table(convolution_table(a, s, out_max)))
}

/// Representative with `a(0) = 1` and, when `a(1) > 0`, `a(1) = 1`.
pub fn gauge_canonicalize(a: &WeightFunction) -> WeightFunction {
    let a0 = &a.values()[0];
    let kappa = a0.recip();
    let c = if a.is_positive_at(1) {
        a0 / &a.values()[1]
    } else {
        Rational::one()
    };
    a.gauge_transform(&kappa, &c)
        .expect("a(0) > 0 makes both gauge parameters positive")
}

/// Whether `b = kappa * c^x * a` on the common window for some `kappa, c > 0`.
pub fn gauge_equivalent(a: &WeightFunction, b: &WeightFunction) -> bool {
    let window = a.x_max().min(b.x_max());
    let mut ratios: Vec<(usize, Rational)> = Vec::new();
    for x in 0..=window {
        match (a.is_positive_at(x), b.is_positive_at(x)) {
            (true, true) => ratios.push((x, b.weight(x) / a.weight(x))),
            (false, false) => {}
            _ => return false,
        }
    }
    let Some((0, base)) = ratios.first().cloned() else {
        return false;
    };
    // c^x = q(x) / q(0) must come from a single c: (c^x)^y == (c^y)^x.
    let tilts: Vec<(usize, Rational)> = ratios[1..]
        .iter()
        .map(|(x, q)| (*x, q / &base))
        .collect();
    tilts.windows(2).all(|pair| {
        let (x, ref cx) = pair[0];
        let (y, ref cy) = pair[1];
        pow(cx, y) == pow(cy, x)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(values: &[u64]) -> Vec<Rational> {
        values.iter().map(|&v| integer(v)).collect()
    }

    fn brute_norm(a: &WeightFunction, n: usize, r: usize) -> Rational {
        enumerate_support(n, r)
            .unwrap()
            .iter()
            .map(|x| x.iter().map(|&xj| a.weight(xj)).product::<Rational>())
            .sum()
    }

    #[test]
    fn support_examples() {
        assert_eq!(enumerate_support(3, 2).unwrap().len(), 6);
        assert_eq!(
            enumerate_support(1, 5).unwrap(),
            vec![Composition::new(vec![5])]
        );
        assert_eq!(
            enumerate_support(4, 0).unwrap(),
            vec![Composition::new(vec![0, 0, 0, 0])]
        );
    }

    #[test]
    fn support_is_lexicographic_and_complete() {
        for n in 1..=5 {
            for r in 0..=6 {
                let support = enumerate_support(n, r).unwrap();
                assert_eq!(BigUint::from(support.len()), support_size(n, r));
                assert!(support.windows(2).all(|w| w[0] < w[1]));
                assert!(support.iter().all(|x| x.len() == n && x.total() == r));
            }
        }
    }

    #[test]
    fn support_cap_is_enforced() {
        // 20 cells and 20 particles: binom(39, 19) ~ 6.9e10 compositions.
        let err = enumerate_support(20, 20).unwrap_err();
        assert_eq!(err.kind(), "resource_cap");
        assert!(enumerate_support(0, 1).is_err());
    }

    #[test]
    fn block_refinement_examples() {
        let got = enumerate_block_refinements(&Composition::new(vec![2, 0]), 2).unwrap();
        let want: Vec<Composition> = vec![vec![0, 2, 0, 0], vec![1, 1, 0, 0], vec![2, 0, 0, 0]]
            .into_iter()
            .map(Composition::new)
            .collect();
        assert_eq!(got, want);

        let single = enumerate_block_refinements(&Composition::new(vec![4]), 1).unwrap();
        assert_eq!(single, vec![Composition::new(vec![4])]);

        assert_eq!(
            enumerate_block_refinements(&Composition::new(vec![1, 1]), 2)
                .unwrap()
                .len(),
            4
        );
    }

    #[test]
    fn norm_const_examples() {
        assert_eq!(norm_const(&WeightFunction::be(2), 3, 2), integer(6));
        assert_eq!(norm_const(&WeightFunction::fd(2), 4, 2), integer(6));
        assert_eq!(norm_const(&WeightFunction::mb(3), 2, 3), ratio(4, 3));
        let a = WeightFunction::new(vec![ratio(3, 2), ratio(1, 5)]).unwrap();
        assert_eq!(norm_const(&a, 5, 0), num_traits::pow(ratio(3, 2), 5));
        assert!(norm_const(&WeightFunction::fd(3), 2, 3).is_zero());
    }

    #[test]
    fn norm_const_matches_enumeration() {
        let tables = [
            WeightFunction::mb(6),
            WeightFunction::fd(6),
            WeightFunction::new(vec![ratio(2, 3), ratio(1, 7), integer(5), ratio(9, 4)]).unwrap(),
        ];
        for a in &tables {
            for n in 2..=5 {
                for r in 0..=6 {
                    assert_eq!(norm_const(a, n, r), brute_norm(a, n, r), "n={n} r={r}");
                }
            }
        }
    }

    #[test]
    fn convolution_power_examples() {
        let be = convolution_power(&WeightFunction::be(3), 2, 3).unwrap();
        assert_eq!(be.values(), ints(&[1, 2, 3, 4]).as_slice());

        let a = WeightFunction::mb(4);
        assert_eq!(convolution_power(&a, 1, 4).unwrap(), a);

        let fd = convolution_power(&WeightFunction::fd(3), 3, 3).unwrap();
        assert_eq!(fd.values(), ints(&[1, 3, 3, 1]).as_slice());
    }

    #[test]
    fn gauge_examples() {
        let be = WeightFunction::be(4);
        let scaled = be.gauge_transform(&integer(7), &Rational::one()).unwrap();
        assert_eq!(gauge_canonicalize(&scaled), be);

        let geometric = WeightFunction::new(ints(&[1, 2, 4, 8])).unwrap();
        assert_eq!(gauge_canonicalize(&geometric), WeightFunction::be(3));

        let fd = WeightFunction::fd(3);
        let fd7 = fd.gauge_transform(&integer(7), &Rational::one()).unwrap();
        assert_eq!(gauge_canonicalize(&fd7), fd);
    }

    #[test]
    fn gauge_equivalence_detects_tilts_and_rejects_others() {
        let a = WeightFunction::new(vec![integer(1), integer(0), ratio(1, 3), integer(2)]).unwrap();
        let b = a.gauge_transform(&ratio(5, 2), &ratio(3, 7)).unwrap();
        assert!(gauge_equivalent(&a, &b));
        let c = WeightFunction::new(vec![integer(1), integer(0), ratio(1, 3), integer(3)]).unwrap();
        assert!(!gauge_equivalent(&a, &c));
        assert!(!gauge_equivalent(&WeightFunction::be(3), &WeightFunction::fd(3)));
    }

    #[test]
    fn weight_validation() {
        assert!(WeightFunction::new(ints(&[1])).is_err());
        assert!(WeightFunction::new(ints(&[0, 1])).is_err());
        assert!(WeightFunction::new(ints(&[1, 0, 0])).is_err());
        assert!(WeightFunction::new(vec![integer(1), ratio(-1, 2)]).is_err());
        assert!(WeightFunction::new(ints(&[1, 0, 3])).is_ok());
    }

    #[test]
    fn weight_file_format() {
        let a = WeightFunction::mb(3);
        let text = a.to_json();
        assert_eq!(text, r#"{"x_max":3,"values":["1","1","1/2","1/6"]}"#);
        assert_eq!(WeightFunction::from_json(&text).unwrap(), a);
        assert!(WeightFunction::from_json(r#"{"x_max":2,"values":["1","1"]}"#).is_err());
        assert!(WeightFunction::from_json(r#"{"x_max":1,"values":["1","1/0"]}"#).is_err());
    }

    #[test]
    fn presets_parse() {
        assert_eq!("mb".parse::<Preset>().unwrap(), Preset::MaxwellBoltzmann);
        assert_eq!("pc:3".parse::<Preset>().unwrap(), Preset::PseudoContagious(3));
        assert_eq!("mh:2".parse::<Preset>().unwrap(), Preset::MultiHypergeometric(2));
        assert!("pc:0".parse::<Preset>().is_err());
        assert!("xx".parse::<Preset>().is_err());
        assert_eq!(
            Preset::MultiHypergeometric(2).weights(3).values(),
            ints(&[1, 2, 1, 0]).as_slice()
        );
        assert_eq!(
            Preset::PseudoContagious(2).weights(3).values(),
            ints(&[1, 2, 3, 4]).as_slice()
        );
    }
}
