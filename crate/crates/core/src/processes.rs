//! Counting processes with multiple jumps, represented by exact joint laws of
//! the jump sizes `(J_0, .., J_t)` over the truncated range `0..=x_max`.
//!
//! `N_t = J_0 + .. + J_t`. An a-mixed geometric process has
//! `p_t(j) = R_t(sum_h j_h) prod_h a(j_h)`; the M^(a)-UOSP asks that the law of the
//! jumps given `N_t = k` be the `M^(a)(t + 1, k)` model.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::kernel::{enum_cap, format_rational, Composition, Rational, WeightFunction};
use crate::models::{realize, tilted_normalizer, MaSpec, OccupancyModel, ThetaMixture};
use crate::verdict::{compare, Verdict};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedGeometricSpec {
    a: WeightFunction,
    mix: ThetaMixture,
    horizon: usize,
}

impl MixedGeometricSpec {
    pub fn new(a: WeightFunction, mix: ThetaMixture, horizon: usize) -> Result<Self> {
        if !a.values()[0].is_one() {
            return Err(Error::Domain(format!(
                "a(0) must be 1, got {}",
                format_rational(&a.values()[0])
            )));
        }
        if horizon == 0 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        Ok(MixedGeometricSpec { a, mix, horizon })
    }

    pub fn a(&self) -> &WeightFunction {
        &self.a
    }

    pub fn mix(&self) -> &ThetaMixture {
        &self.mix
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointJumpLaw {
    pub t: usize,
    /// Mass of each jump vector `(j_0, .., j_t)`; zero-mass vectors are omitted.
    pub pmf: BTreeMap<Composition, Rational>,
    /// `R_t(m)` for every reachable total `m`.
    pub r_t: BTreeMap<usize, Rational>,
}

/// All vectors in `{0..=x_max}^len`, lexicographically.
fn jump_grid(len: usize, x_max: usize) -> Result<Vec<Composition>> {
    let size = BigUint::from(x_max + 1).pow(len as u32);
    if size > BigUint::from(enum_cap()) {
        return Err(Error::ResourceCap {
            count: size.to_string(),
            cap: enum_cap(),
        });
    }
    let mut out = Vec::new();
    let mut current = vec![0; len];
    loop {
        out.push(Composition::new(current.clone()));
        let Some(pos) = current.iter().rposition(|&v| v < x_max) else {
            return Ok(out);
        };
        current[pos] += 1;
        for v in &mut current[pos + 1..] {
            *v = 0;
        }
    }
}

fn weight_product(a: &WeightFunction, j: &Composition) -> Rational {
    j.iter().map(|&v| a.weight(v)).product()
}

/// Reads `R(m) = p(j) / prod_h a(j_h)` off a joint law, or `None` when no such
/// factorization exists: two vectors with the same total disagree, or mass sits
/// where the weight product vanishes.
pub fn extract_product_form(a: &WeightFunction, law: &BTreeMap<Composition, Rational>) -> Option<BTreeMap<usize, Rational>> {
    let mut factors: BTreeMap<usize, Rational> = BTreeMap::new();
    for (j, p) in law {
        let w = weight_product(a, j);
        if w.is_zero() {
            if p.is_zero() {
                continue;
            }
            return None;
        }
        let value = p / w;
        match factors.get(&j.total()) {
            Some(existing) if *existing != value => return None,
            Some(_) => {}
            None => {
                factors.insert(j.total(), value);
            }
        }
    }
    // Vectors absent from the law carry zero mass; their totals need R = 0.
    for j in jump_grid(law.keys().next()?.len(), a.x_max()).ok()? {
        if !law.contains_key(&j) && !weight_product(a, &j).is_zero() {
            if let Some(existing) = factors.get(&j.total()) {
                if !existing.is_zero() {
                    return None;
                }
            }
        }
    }
    Some(factors)
}

/// Exact law of `(J_0, .., J_t)`: given the tilt, jumps are iid with
/// `f(j | t) = a(j) t^j / Z(t)` on `0..=x_max`, and the tilt is drawn from the mixture.
pub fn joint_jump_law(spec: &MixedGeometricSpec, t: usize) -> Result<JointJumpLaw> {
    if t > spec.horizon {
        return Err(Error::Domain(format!("t = {t} exceeds the horizon {}", spec.horizon)));
    }
    let a = &spec.a;
    let x_max = a.x_max();
    let len = t + 1;

    // R_t(m) = sum_i w_i t_i^m / Z(t_i)^(t+1)
    let components: Vec<(Rational, Rational, Rational)> = spec
        .mix
        .components()
        .iter()
        .map(|(tilt, weight)| {
            let z = tilted_normalizer(a, tilt, x_max);
            (tilt.clone(), weight.clone(), num_traits::pow(z, len))
        })
        .collect();
    let r_of = |m: usize| -> Rational {
        components
            .iter()
            .map(|(tilt, weight, z)| weight * num_traits::pow(tilt.clone(), m) / z)
            .sum()
    };

    let mut pmf = BTreeMap::new();
    let mut r_t = BTreeMap::new();
    for j in jump_grid(len, x_max)? {
        let r = r_t.entry(j.total()).or_insert_with(|| r_of(j.total())).clone();
        let p = weight_product(a, &j) * r;
        if !p.is_zero() {
            pmf.insert(j, p);
        }
    }
    r_t.retain(|m, _| pmf.keys().any(|j| j.total() == *m));

    let extracted = extract_product_form(a, &pmf).ok_or_else(|| Error::Precondition("joint jump law lost its product form".into()))?;
    if extracted != r_t {
        return Err(Error::Precondition("extracted R_t disagrees with the mixture".into()));
    }
    Ok(JointJumpLaw { t, pmf, r_t })
}

/// Law of the jumps given `N_t = k`.
pub fn conditional_on_count(law: &JointJumpLaw, k: usize) -> Result<OccupancyModel> {
    let masses: BTreeMap<Composition, Rational> = law
        .pmf
        .iter()
        .filter(|(j, _)| j.total() == k)
        .map(|(j, p)| (j.clone(), p.clone()))
        .collect();
    if masses.values().all(Zero::is_zero) {
        return Err(Error::Domain(format!("P{{N_{} = {k}}} = 0", law.t)));
    }
    OccupancyModel::normalized(law.t + 1, k, masses, "zero-probability conditioning")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UospCheck {
    pub t: usize,
    pub k: usize,
    pub verdict: Verdict,
    /// Largest pointwise gap between the conditional law and the model.
    pub max_deviation: Rational,
}

impl UospCheck {
    pub fn to_json(&self) -> Value {
        json!({
            "t": self.t,
            "k": self.k,
            "pass": self.verdict.passed(),
            "max_deviation": format_rational(&self.max_deviation),
            "witness": self.verdict.witness.as_ref().map(|w| w.to_json()),
        })
    }
}

/// Compares the conditional jump law given `N_t = k` with `M^(a)(t + 1, k)`.
pub fn verify_uosp_law(a: &WeightFunction, law: &JointJumpLaw, k: usize) -> Result<UospCheck> {
    let conditional = conditional_on_count(law, k)?;
    let target = realize(&MaSpec::new(a.clone(), law.t + 1, k)?)?;
    let max_deviation = conditional
        .iter()
        .map(|(x, _)| x)
        .chain(target.iter().map(|(x, _)| x))
        .map(|x| (conditional.prob(x) - target.prob(x)).abs())
        .max()
        .unwrap_or_else(Rational::zero);
    Ok(UospCheck {
        t: law.t,
        k,
        verdict: compare(&conditional, &target)?,
        max_deviation,
    })
}

pub fn verify_uosp(spec: &MixedGeometricSpec, t: usize, k: usize) -> Result<UospCheck> {
    verify_uosp_law(&spec.a, &joint_jump_law(spec, t)?, k)
}

/// Every `(t, k)` with `t <= max_t`, `k <= max_k` and `P{N_t = k} > 0`.
pub fn verify_uosp_grid(spec: &MixedGeometricSpec, max_t: usize, max_k: usize) -> Result<Vec<UospCheck>> {
    let mut checks = Vec::new();
    for t in 0..=max_t.min(spec.horizon) {
        let law = joint_jump_law(spec, t)?;
        for k in 0..=max_k {
            if law.pmf.keys().any(|j| j.total() == k) {
                checks.push(verify_uosp_law(&spec.a, &law, k)?);
            }
        }
    }
    Ok(checks)
}

pub fn grid_report(checks: &[UospCheck]) -> Value {
    json!({
        "pass": checks.iter().all(|c| c.verdict.passed()),
        "checks": checks.iter().map(UospCheck::to_json).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{integer, ratio};

    fn single(a: WeightFunction, tilt: Rational, horizon: usize) -> MixedGeometricSpec {
        MixedGeometricSpec::new(a, ThetaMixture::single(tilt).unwrap(), horizon).unwrap()
    }

    fn two_point() -> ThetaMixture {
        ThetaMixture::new(vec![(ratio(1, 3), ratio(1, 4)), (ratio(3, 4), ratio(3, 4))]).unwrap()
    }

    #[test]
    fn bose_einstein_gives_product_of_geometrics() {
        let law = joint_jump_law(&single(WeightFunction::be(4), ratio(1, 2), 2), 1).unwrap();
        let base = law.pmf[&Composition::new(vec![0, 0])].clone();
        for (j, p) in &law.pmf {
            let expected = &base * num_traits::pow(ratio(1, 2), j.total());
            assert_eq!(*p, expected);
        }
        assert_eq!(law.pmf.len(), 25);
        assert_eq!(law.pmf.values().sum::<Rational>(), Rational::one());
    }

    #[test]
    fn horizon_zero_is_the_marginal() {
        let a = WeightFunction::mb(3);
        let tilt = ratio(1, 2);
        let law = joint_jump_law(&single(a.clone(), tilt.clone(), 1), 0).unwrap();
        let z = tilted_normalizer(&a, &tilt, 3);
        for j in 0..=3 {
            let expected = a.weight(j) * num_traits::pow(tilt.clone(), j) / &z;
            assert_eq!(law.pmf[&Composition::new(vec![j])], expected);
        }
    }

    #[test]
    fn two_component_mixture_has_two_term_factor() {
        let a = WeightFunction::mb(3);
        let spec = MixedGeometricSpec::new(a.clone(), two_point(), 2).unwrap();
        let law = joint_jump_law(&spec, 1).unwrap();
        let z1 = tilted_normalizer(&a, &ratio(1, 3), 3);
        let z2 = tilted_normalizer(&a, &ratio(3, 4), 3);
        for (m, r) in &law.r_t {
            let expected = ratio(1, 4) * num_traits::pow(ratio(1, 3), *m) / (&z1 * &z1)
                + ratio(3, 4) * num_traits::pow(ratio(3, 4), *m) / (&z2 * &z2);
            assert_eq!(*r, expected);
        }
    }

    #[test]
    fn uosp_examples() {
        let fd = single(WeightFunction::fd(3), ratio(1, 2), 3);
        let check = verify_uosp(&fd, 2, 2).unwrap();
        assert!(check.verdict.passed());
        let conditional = conditional_on_count(&joint_jump_law(&fd, 2).unwrap(), 2).unwrap();
        assert_eq!(conditional.support_len(), 3);
        assert!(conditional.iter().all(|(_, p)| *p == ratio(1, 3)));

        let zero = conditional_on_count(&joint_jump_law(&fd, 2).unwrap(), 0).unwrap();
        assert_eq!(zero.prob(&[0, 0, 0]), Rational::one());

        let be = MixedGeometricSpec::new(WeightFunction::be(3), two_point(), 3).unwrap();
        assert!(verify_uosp(&be, 2, 3).unwrap().verdict.passed());
    }

    #[test]
    fn grid_passes_for_presets() {
        for a in [WeightFunction::fd(2), WeightFunction::mb(3), WeightFunction::be(3)] {
            let spec = MixedGeometricSpec::new(a, two_point(), 3).unwrap();
            let checks = verify_uosp_grid(&spec, 3, 5).unwrap();
            assert!(!checks.is_empty());
            assert!(checks.iter().all(|c| c.verdict.passed()));
        }
    }

    #[test]
    fn corrupted_law_fails() {
        let spec = single(WeightFunction::mb(2), ratio(1, 2), 2);
        let mut law = joint_jump_law(&spec, 1).unwrap();
        let delta = ratio(1, 100);
        *law.pmf.get_mut(&Composition::new(vec![1, 0])).unwrap() += &delta;
        *law.pmf.get_mut(&Composition::new(vec![0, 1])).unwrap() -= &delta;
        assert!(extract_product_form(spec.a(), &law.pmf).is_none());
        let check = verify_uosp_law(spec.a(), &law, 1).unwrap();
        assert!(!check.verdict.passed());
        // delta / P{N_1 = 1} with P{N_1 = 1} = 64/169
        assert_eq!(check.to_json()["max_deviation"], "169/6400");
    }

    #[test]
    fn rejects_bad_input() {
        let a = WeightFunction::new(vec![integer(2), integer(1)]).unwrap();
        assert!(MixedGeometricSpec::new(a, ThetaMixture::single(ratio(1, 2)).unwrap(), 1).is_err());
        let spec = single(WeightFunction::fd(1), ratio(1, 2), 1);
        assert!(joint_jump_law(&spec, 2).is_err());
        assert!(matches!(verify_uosp(&spec, 1, 3), Err(Error::Domain(_))));
    }
}
