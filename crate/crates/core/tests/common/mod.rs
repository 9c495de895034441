//! Brute-force oracles written independently of the library code paths.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use occupancy::{OccupancyModel, Rational, WeightFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Pmf = BTreeMap<Vec<usize>, Rational>;

pub fn q(p: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(d))
}

pub fn binom(n: u64, k: u64) -> Rational {
    if k > n {
        return Rational::zero();
    }
    let mut acc = Rational::one();
    for i in 0..k {
        acc *= q((n - i) as i64, (i + 1) as i64);
    }
    acc
}

pub fn factorial(k: usize) -> Rational {
    (1..=k).fold(Rational::one(), |acc, i| acc * q(i as i64, 1))
}

/// Weak compositions of `r` into `n` parts by recursion on the first part.
pub fn compositions(n: usize, r: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![r]];
    }
    let mut out = Vec::new();
    for first in 0..=r {
        for mut rest in compositions(n - 1, r - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn at(a: &[Rational], x: usize) -> Rational {
    a.get(x).cloned().unwrap_or_else(Rational::zero)
}

/// Sum of products over the support.
pub fn brute_norm(a: &[Rational], n: usize, r: usize) -> Rational {
    compositions(n, r)
        .iter()
        .map(|x| x.iter().map(|&v| at(a, v)).product::<Rational>())
        .sum()
}

/// Normalized product weights, zero-mass points dropped; `None` if nothing has mass.
pub fn brute_model(a: &[Rational], n: usize, r: usize) -> Option<Pmf> {
    let c = brute_norm(a, n, r);
    if c.is_zero() {
        return None;
    }
    Some(
        compositions(n, r)
            .into_iter()
            .filter_map(|x| {
                let w: Rational = x.iter().map(|&v| at(a, v)).product();
                (!w.is_zero()).then(|| (x, w / &c))
            })
            .collect(),
    )
}

pub fn brute_merge(pmf: &Pmf, s: usize) -> Pmf {
    let mut out = Pmf::new();
    for (z, p) in pmf {
        let x: Vec<usize> = z.chunks(s).map(|b| b.iter().sum()).collect();
        *out.entry(x).or_insert_with(Rational::zero) += p;
    }
    out.retain(|_, p| !p.is_zero());
    out
}

/// `s`-fold self-convolution by repeated naive products, on `0..=m`.
pub fn brute_conv_power(a: &[Rational], s: usize, m: usize) -> Vec<Rational> {
    let mut acc: Vec<Rational> = (0..=m).map(|x| if x == 0 { Rational::one() } else { Rational::zero() }).collect();
    for _ in 0..s {
        acc = (0..=m)
            .map(|x| (0..=x).map(|i| &acc[i] * at(a, x - i)).sum())
            .collect();
    }
    acc
}

pub fn as_pmf(m: &OccupancyModel) -> Pmf {
    m.iter()
        .filter(|(_, p)| !p.is_zero())
        .map(|(x, p)| (x.entries().to_vec(), p.clone()))
        .collect()
}

/// `b = kappa c^x a` for some kappa, c > 0 on the common window.
pub fn proportional_up_to_gauge(a: &[Rational], b: &[Rational]) -> bool {
    let m = a.len().min(b.len());
    if a[0].is_zero() || b[0].is_zero() {
        return false;
    }
    let kappa = &b[0] / &a[0];
    let first = (1..m).find(|&x| !a[x].is_zero());
    let Some(x0) = first else {
        return (1..m).all(|x| b[x].is_zero());
    };
    // c^x0 = b(x0) / (kappa a(x0)); check b(x)^x0 / (kappa a(x))^x0 = (c^x0)^x
    let cx0 = &b[x0] / (&kappa * &a[x0]);
    (0..m).all(|x| {
        if a[x].is_zero() {
            return b[x].is_zero();
        }
        if b[x].is_zero() {
            return false;
        }
        let ratio = &b[x] / (&kappa * &a[x]);
        num_traits::pow(ratio, x0) == num_traits::pow(cx0.clone(), x)
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Positive rational table with numerators and denominators in `1..=9`.
pub fn random_positive_table(rng: &mut ChaCha8Rng, x_max: usize) -> Vec<Rational> {
    (0..=x_max)
        .map(|_| q(rng.gen_range(1..=9), rng.gen_range(1..=9)))
        .collect()
}

pub fn weights(values: &[Rational]) -> WeightFunction {
    WeightFunction::new(values.to_vec()).expect("valid weight table")
}
