//! Merging, particle dropping and prefix conditioning of occupancy models.
//!
//! Each transformation exists on explicit pmfs (exact pushforwards) and, for
//! merging, on [`MaSpec`]s via convolution powers. The `verify_*` functions
//! compare the two routes, or two orders of composition, with exact equality.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::kernel::{convolution_power, enumerate_support, integer, norm_const, Composition, Rational, WeightFunction};
use crate::models::{realize, MaSpec, OccupancyModel};
use crate::verdict::{compare, Verdict};

fn check_divides(n: usize, s: usize) -> Result<usize> {
    if s == 0 || !n.is_multiple_of(s) {
        return Err(Error::Domain(format!("block size {s} does not divide {n} cells")));
    }
    Ok(n / s)
}

/// Pushforward under summing consecutive blocks of `s` cells.
pub fn merge(m: &OccupancyModel, s: usize) -> Result<OccupancyModel> {
    let n = check_divides(m.n(), s)?;
    let mut out: BTreeMap<Composition, Rational> = BTreeMap::new();
    for (z, p) in m.iter() {
        let x: Vec<usize> = z.chunks(s).map(|block| block.iter().sum()).collect();
        *out.entry(Composition::new(x)).or_insert_with(Rational::zero) += p;
    }
    Ok(OccupancyModel::from_masses(n, m.r(), out))
}

/// `M^(a)(n*s, r)` merged by `s` is `M^(a')(n, r)` with `a'(x) = C(s, x)`.
pub fn merge_spec(spec: &MaSpec, s: usize) -> Result<MaSpec> {
    let n = check_divides(spec.n(), s)?;
    if s == 1 {
        return Ok(spec.clone());
    }
    let merged = convolution_power(spec.a(), s, spec.r().max(1))?;
    MaSpec::new(merged, n, spec.r())
}

/// Pushforward under an arbitrary partition of the cells into equal-size groups.
pub fn merge_grouping(m: &OccupancyModel, groups: &[Vec<usize>]) -> Result<OccupancyModel> {
    let size = groups.first().map_or(0, Vec::len);
    if size == 0 || groups.iter().any(|g| g.len() != size) {
        return Err(Error::Domain("groups must be nonempty and of equal size".into()));
    }
    let mut seen = vec![false; m.n()];
    for &cell in groups.iter().flatten() {
        if cell >= m.n() || std::mem::replace(&mut seen[cell], true) {
            return Err(Error::Domain(format!(
                "groups are not a partition of the {} cells",
                m.n()
            )));
        }
    }
    if seen.iter().any(|&covered| !covered) {
        return Err(Error::Domain(format!(
            "groups are not a partition of the {} cells",
            m.n()
        )));
    }
    let mut out: BTreeMap<Composition, Rational> = BTreeMap::new();
    for (z, p) in m.iter() {
        let x: Vec<usize> = groups.iter().map(|g| g.iter().map(|&c| z[c]).sum()).collect();
        *out.entry(Composition::new(x)).or_insert_with(Rational::zero) += p;
    }
    Ok(OccupancyModel::from_masses(groups.len(), m.r(), out))
}

/// Removes one particle chosen uniformly at random:
/// `p'(x') = sum_j p(x' + e_j) (x'_j + 1) / r`.
pub fn drop_particle(m: &OccupancyModel) -> Result<OccupancyModel> {
    let r = m.r();
    if r == 0 {
        return Err(Error::Domain("cannot drop a particle from an empty model".into()));
    }
    let r_inv = integer(r as u64).recip();
    let mut out: BTreeMap<Composition, Rational> = BTreeMap::new();
    for (x, p) in m.iter() {
        for j in 0..x.len() {
            if x[j] == 0 {
                continue;
            }
            let mut down = x.entries().to_vec();
            down[j] -= 1;
            let mass = p * integer(x[j] as u64) * &r_inv;
            *out.entry(Composition::new(down)).or_insert_with(Rational::zero) += mass;
        }
    }
    Ok(OccupancyModel::from_masses(m.n(), r - 1, out))
}

/// First point of `A(n, r - 1)` where the dropping condition fails, with the
/// value the left-hand side takes there.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarWitness {
    pub x: Composition,
    pub value: Rational,
}

/// Evaluates
/// `C(n, r-1) / C(n, r) * sum_h (x'_h + 1)/r * a(x'_h + 1)/a(x'_h)`
/// on every `x'` in `A(n, r - 1)` and returns the first point where it is not 1.
///
/// Points with `prod_h a(x'_h) = 0` carry no mass under `M^(a)(n, r - 1)` and
/// are skipped; on all other points every ratio is well defined.
pub fn star_condition_witness(a: &WeightFunction, n: usize, r: usize) -> Result<Option<StarWitness>> {
    if r == 0 {
        return Err(Error::Domain("the dropping condition needs r >= 1".into()));
    }
    let c_r = norm_const(a, n, r);
    if c_r.is_zero() {
        return Err(Error::ZeroNormalizer { n, r });
    }
    let c_down = norm_const(a, n, r - 1);
    if c_down.is_zero() {
        return Err(Error::ZeroNormalizer { n, r: r - 1 });
    }
    let scale = c_down / c_r / integer(r as u64);
    for x in enumerate_support(n, r - 1)? {
        if x.iter().any(|&xh| !a.is_positive_at(xh)) {
            continue;
        }
        let sum: Rational = x
            .iter()
            .map(|&xh| integer(xh as u64 + 1) * a.weight(xh + 1) / a.weight(xh))
            .sum();
        let value = sum * &scale;
        if !value.is_one() {
            return Ok(Some(StarWitness { x, value }));
        }
    }
    Ok(None)
}

pub fn star_condition(a: &WeightFunction, n: usize, r: usize) -> Result<bool> {
    Ok(star_condition_witness(a, n, r)?.is_none())
}

/// Law of the first `n` cells given that they hold exactly `r` particles.
pub fn condition_on_prefix(m: &OccupancyModel, n: usize, r: usize) -> Result<OccupancyModel> {
    if n == 0 || n > m.n() || r > m.r() {
        return Err(Error::Domain(format!(
            "cannot condition A({}, {}) on a prefix of {n} cells holding {r}",
            m.n(),
            m.r()
        )));
    }
    let mut out: BTreeMap<Composition, Rational> = BTreeMap::new();
    for (z, p) in m.iter() {
        let prefix = &z[..n];
        if prefix.iter().sum::<usize>() == r {
            *out
                .entry(Composition::new(prefix.to_vec()))
                .or_insert_with(Rational::zero) += p;
        }
    }
    OccupancyModel::normalized(n, r, out, &format!("P{{S_{n} = {r}}} = 0"))
}

/// `merge(merge(m, s2), s1) == merge(m, s1 * s2)`.
pub fn verify_merge_composition(m: &OccupancyModel, s1: usize, s2: usize) -> Result<Verdict> {
    check_divides(m.n(), s1 * s2)?;
    let sequential = merge(&merge(m, s2)?, s1)?;
    let direct = merge(m, s1 * s2)?;
    compare(&sequential, &direct)
}

/// `merge(realize(spec), s) == realize(merge_spec(spec, s))`.
pub fn verify_merge_closure(spec: &MaSpec, s: usize) -> Result<(Verdict, OccupancyModel)> {
    let explicit = merge(&realize(spec)?, s)?;
    let closed_form = realize(&merge_spec(spec, s)?)?;
    Ok((compare(&explicit, &closed_form)?, explicit))
}

/// Dropping commutes with merging, and both orders give `M^(a')(n, r - 1)`.
///
/// Fails with [`Error::Precondition`] unless the dropping condition holds for
/// `a` on `A(n*s, r)` and for the merged weights on `A(n, r)`.
pub fn verify_drop_merge_commute(spec: &MaSpec, s: usize) -> Result<Verdict> {
    let merged = merge_spec(spec, s)?;
    if let Some(w) = star_condition_witness(spec.a(), spec.n(), spec.r())? {
        return Err(Error::Precondition(format!(
            "weights fail the dropping condition on A({}, {}) at {}",
            spec.n(),
            spec.r() - 1,
            w.x
        )));
    }
    if let Some(w) = star_condition_witness(merged.a(), merged.n(), merged.r())? {
        return Err(Error::Precondition(format!(
            "merged weights fail the dropping condition on A({}, {}) at {}",
            merged.n(),
            merged.r() - 1,
            w.x
        )));
    }
    let m = realize(spec)?;
    let drop_then_merge = merge(&drop_particle(&m)?, s)?;
    let merge_then_drop = drop_particle(&merge(&m, s)?)?;
    let target = realize(&MaSpec::new(merged.a().clone(), merged.n(), merged.r() - 1)?)?;
    Ok(compare(&merge_then_drop, &drop_then_merge)?.and(compare(&merge_then_drop, &target)?))
}

/// Conditioning the merged model on its first `n` macrocells equals merging
/// the fine model conditioned on its first `n*s` cells; both equal `M^(a')(n, r)`.
pub fn verify_condition_merge_commute(spec: &MaSpec, n: usize, r: usize, s: usize) -> Result<Verdict> {
    let m = realize(spec)?;
    let merge_then_condition = condition_on_prefix(&merge(&m, s)?, n, r)?;
    let condition_then_merge = merge(&condition_on_prefix(&m, n * s, r)?, s)?;
    let merged = convolution_power(spec.a(), s, r.max(1))?;
    let target = realize(&MaSpec::new(merged, n, r)?)?;
    Ok(compare(&merge_then_condition, &condition_then_merge)?
        .and(compare(&merge_then_condition, &target)?))
}

/// Exact unit mass; used by tests and reports.
pub fn has_unit_mass(m: &OccupancyModel) -> bool {
    m.total_mass() == Rational::one()
}
