//! Germs versus merged models: is a weight table an `s`-fold convolution power?
//!
//! Decisions are taken modulo the gauge `a(x) -> kappa c^x a(x)` and only on
//! the window `0..=x_max` of the table.

use num_traits::{Signed, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::kernel::{format_rational, gauge_canonicalize, integer, Rational, WeightFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeconvolutionStatus {
    Decomposable,
    Indecomposable,
    InconclusiveTruncation,
}

impl DeconvolutionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DeconvolutionStatus::Decomposable => "decomposable",
            DeconvolutionStatus::Indecomposable => "indecomposable",
            DeconvolutionStatus::InconclusiveTruncation => "inconclusive-truncation",
        }
    }
}

/// The root value forced negative at index `x`, which proves no nonnegative
/// `s`-th convolution root exists on the window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub x: usize,
    pub value: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeconvolutionResult {
    pub status: DeconvolutionStatus,
    pub s: usize,
    /// Root in canonical gauge, present when decomposable.
    pub factor: Option<WeightFunction>,
    pub certificate: Option<Certificate>,
    /// The verdict holds on `0..=window` only.
    pub window: usize,
}

impl DeconvolutionResult {
    pub fn to_json(&self) -> Value {
        json!({
            "status": self.status.as_str(),
            "s": self.s,
            "factor": self.factor.as_ref().map(|f| serde_json::to_value(f.to_file()).expect("weight file serializes")),
            "certificate": self.certificate.as_ref().map(|c| json!({
                "x": c.x,
                "value": format_rational(&c.value),
            })),
            "window": self.window,
        })
    }
}

/// The unique `b` with `b(0) = 1` and `b^{*s} = a` on `0..=x_max`, signs unchecked.
///
/// `a` must already be in canonical gauge (`a(0) = 1`). Each `b(x)` is forced by
/// `a(x) = s b(x) + (terms of the s-fold convolution using only b(0..x))`.
fn convolution_root(a: &WeightFunction, s: usize) -> Vec<Rational> {
    let x_max = a.x_max();
    let mut root = vec![Rational::zero(); x_max + 1];
    root[0] = a.values()[0].clone();
    let s_rat = integer(s as u64);
    for x in 1..=x_max {
        // s-fold convolution of the known prefix (with b(x) still zero), at x.
        let mut power = vec![Rational::zero(); x + 1];
        power[0] = Rational::from_integer(1.into());
        for _ in 0..s {
            let mut next = vec![Rational::zero(); x + 1];
            for (i, p) in power.iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                for (j, b) in root.iter().enumerate().take(x + 1 - i) {
                    if !b.is_zero() {
                        next[i + j] += p * b;
                    }
                }
            }
            power = next;
        }
        root[x] = (a.weight(x) - &power[x]) / &s_rat;
    }
    root
}

/// Attempts `a = b^{*s}` with `b >= 0` on the window of `a`, up to gauge.
pub fn deconvolve(a: &WeightFunction, s: usize) -> Result<DeconvolutionResult> {
    if s < 2 {
        return Err(Error::Domain("deconvolution needs s >= 2".into()));
    }
    if !a.values()[0].is_positive() {
        return Err(Error::Domain("a(0) must be positive".into()));
    }
    let canonical = gauge_canonicalize(a);
    let root = convolution_root(&canonical, s);
    let window = a.x_max();
    if let Some(x) = root.iter().position(|b| b.is_negative()) {
        return Ok(DeconvolutionResult {
            status: DeconvolutionStatus::Indecomposable,
            s,
            factor: None,
            certificate: Some(Certificate {
                x,
                value: root[x].clone(),
            }),
            window,
        });
    }
    Ok(DeconvolutionResult {
        status: DeconvolutionStatus::Decomposable,
        s,
        factor: Some(gauge_canonicalize(&WeightFunction::from_table(root))),
        certificate: None,
        window,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GermClass {
    Germ,
    Merged { s: usize, factor: WeightFunction },
}

/// Smallest `s` in `2..=max_s` with a nonnegative `s`-th convolution root, else germ.
pub fn classify_germ(a: &WeightFunction, max_s: usize) -> Result<GermClass> {
    if max_s < 2 {
        return Err(Error::Domain("max_s must be at least 2".into()));
    }
    for s in 2..=max_s {
        let result = deconvolve(a, s)?;
        if let Some(factor) = result.factor {
            return Ok(GermClass::Merged { s, factor });
        }
    }
    Ok(GermClass::Germ)
}
