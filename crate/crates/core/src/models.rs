//! Explicit exact occupancy models and the M^(a) constructions.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    enumerate_support, format_rational, norm_const, parse_rational, Composition, Rational,
    WeightFunction,
};

/// The parametric triple `(a, n, r)` of an `M^(a)(n, r)` model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaSpec {
    a: WeightFunction,
    n: usize,
    r: usize,
}

impl MaSpec {
    pub fn new(a: WeightFunction, n: usize, r: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("an M^(a) model needs at least one cell".into()));
        }
        if norm_const(&a, n, r).is_zero() {
            return Err(Error::ZeroNormalizer { n, r });
        }
        Ok(MaSpec { a, n, r })
    }

    pub fn a(&self) -> &WeightFunction {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn norm_const(&self) -> Rational {
        norm_const(&self.a, self.n, self.r)
    }
}

/// An exact pmf on `A(n, r)`, stored sparsely: zero-probability points are absent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccupancyModel {
    n: usize,
    r: usize,
    pmf: BTreeMap<Composition, Rational>,
}

impl OccupancyModel {
    /// Validates support, nonnegativity and exact unit mass.
    pub fn new(
        n: usize,
        r: usize,
        entries: impl IntoIterator<Item = (Composition, Rational)>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("zero cells".into()));
        }
        let mut pmf = BTreeMap::new();
        for (x, p) in entries {
            if x.len() != n || x.total() != r {
                return Err(Error::InvalidModel(format!("{x} is not in A({n}, {r})")));
            }
            if p.is_negative() {
                return Err(Error::InvalidModel(format!("negative mass at {x}")));
            }
            if pmf.contains_key(&x) {
                return Err(Error::InvalidModel(format!("{x} listed twice")));
            }
            if !p.is_zero() {
                pmf.insert(x, p);
            }
        }
        let total: Rational = pmf.values().sum();
        if !total.is_one() {
            return Err(Error::InvalidModel(format!(
                "masses sum to {}",
                format_rational(&total)
            )));
        }
        Ok(OccupancyModel { n, r, pmf })
    }

    /// Trusted constructor for pushforwards of valid models.
    pub(crate) fn from_masses(n: usize, r: usize, mut pmf: BTreeMap<Composition, Rational>) -> Self {
        pmf.retain(|_, p| !p.is_zero());
        debug_assert!(pmf.values().sum::<Rational>().is_one());
        OccupancyModel { n, r, pmf }
    }

    /// Divides nonnegative masses by their total.
    pub(crate) fn normalized(
        n: usize,
        r: usize,
        mut masses: BTreeMap<Composition, Rational>,
        what: &str,
    ) -> Result<Self> {
        masses.retain(|_, p| !p.is_zero());
        let total: Rational = masses.values().sum();
        if total.is_zero() {
            return Err(Error::ZeroProbability(what.to_string()));
        }
        for p in masses.values_mut() {
            *p /= &total;
        }
        Ok(OccupancyModel { n, r, pmf: masses })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn prob(&self, x: &[usize]) -> Rational {
        self.pmf
            .get(&Composition::new(x.to_vec()))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    /// Positive-mass points in ascending lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&Composition, &Rational)> {
        self.pmf.iter()
    }

    pub fn support_len(&self) -> usize {
        self.pmf.len()
    }

    pub fn total_mass(&self) -> Rational {
        self.pmf.values().sum()
    }

    pub fn to_dump(&self) -> ModelDump {
        ModelDump {
            n: self.n,
            r: self.r,
            pmf: self
                .pmf
                .iter()
                .map(|(x, p)| PmfEntry {
                    x: x.entries().to_vec(),
                    p: format_rational(p),
                })
                .collect(),
        }
    }

    /// Model dump with sorted keys; byte-identical across runs.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self.to_dump()).expect("model dump serializes");
        serde_json::to_string(&value).expect("json value serializes")
    }

    pub fn from_dump(dump: &ModelDump) -> Result<Self> {
        let entries = dump
            .pmf
            .iter()
            .map(|e| Ok((Composition::new(e.x.clone()), parse_rational(&e.p)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dump.n, dump.r, entries)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: ModelDump = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_dump(&dump)
    }
}

/// `{"n": .., "r": .., "pmf": [{"x": [..], "p": "p/q"}, ..]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDump {
    pub n: usize,
    pub r: usize,
    pub pmf: Vec<PmfEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmfEntry {
    pub x: Vec<usize>,
    pub p: String,
}

/// A finite mixing measure over the tilt `t = exp(-theta)` in `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThetaMixture {
    components: Vec<(Rational, Rational)>,
}

impl ThetaMixture {
    /// `components` are `(tilt, weight)` pairs; weights must be positive and sum to one.
    pub fn new(components: Vec<(Rational, Rational)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("empty mixture".into()));
        }
        for (tilt, weight) in &components {
            if !tilt.is_positive() || *tilt >= Rational::one() {
                return Err(Error::Domain(format!(
                    "tilt {} is outside (0, 1)",
                    format_rational(tilt)
                )));
            }
            if !weight.is_positive() {
                return Err(Error::Domain("mixture weights must be positive".into()));
            }
        }
        let total: Rational = components.iter().map(|(_, w)| w).sum();
        if !total.is_one() {
            return Err(Error::Domain(format!(
                "mixture weights sum to {}",
                format_rational(&total)
            )));
        }
        Ok(ThetaMixture { components })
    }

    pub fn single(tilt: Rational) -> Result<Self> {
        Self::new(vec![(tilt, Rational::one())])
    }

    pub fn components(&self) -> &[(Rational, Rational)] {
        &self.components
    }
}

/// `sum_{v <= upto} a(v) t^v`, the reciprocal of `b(theta)` on the truncated support.
pub fn tilted_normalizer(a: &WeightFunction, tilt: &Rational, upto: usize) -> Rational {
    let mut power = Rational::one();
    let mut total = Rational::zero();
    for v in 0..=upto {
        total += a.weight(v) * &power;
        power *= tilt;
    }
    total
}

/// `prod_j a(x_j) / C(n, r)` on every point of `A(n, r)`.
pub fn realize(spec: &MaSpec) -> Result<OccupancyModel> {
    let c = spec.norm_const();
    let mut pmf = BTreeMap::new();
    for x in enumerate_support(spec.n, spec.r)? {
        let weight: Rational = x.iter().map(|&xj| spec.a.weight(xj)).product();
        if !weight.is_zero() {
            pmf.insert(x, weight / &c);
        }
    }
    Ok(OccupancyModel::from_masses(spec.n, spec.r, pmf))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classical {
    MaxwellBoltzmann,
    BoseEinstein,
    FermiDirac,
}

/// Classical weight table with `x_max = r` (at least 1).
pub fn classical(kind: Classical, n: usize, r: usize) -> Result<MaSpec> {
    let x_max = r.max(1);
    let a = match kind {
        Classical::MaxwellBoltzmann => WeightFunction::mb(x_max),
        Classical::BoseEinstein => WeightFunction::be(x_max),
        Classical::FermiDirac => {
            if r > n {
                return Err(Error::Domain(format!(
                    "Fermi-Dirac needs r <= n, got r = {r} > n = {n}"
                )));
            }
            WeightFunction::fd(x_max)
        }
    };
    MaSpec::new(a, n, r)
}

/// Weights `binom(s + x - 1, x)`: Bose-Einstein merged over blocks of `s` cells.
pub fn pseudo_contagious(n: usize, r: usize, s: usize) -> Result<MaSpec> {
    if s == 0 {
        return Err(Error::Domain("s must be positive".into()));
    }
    MaSpec::new(WeightFunction::pseudo_contagious(s, r.max(1)), n, r)
}

/// Weights `binom(s, x)`: Fermi-Dirac merged over blocks of `s` cells.
pub fn multi_hypergeometric(n: usize, r: usize, s: usize) -> Result<MaSpec> {
    if s == 0 {
        return Err(Error::Domain("s must be positive".into()));
    }
    if r > n * s {
        return Err(Error::Domain(format!(
            "multi-hypergeometric needs r <= n*s, got {r} > {}",
            n * s
        )));
    }
    MaSpec::new(WeightFunction::multi_hypergeometric(s, r.max(1)), n, r)
}

/// Law of `(V_1..V_n)` given `V_1 + .. + V_n = r`, where the `V_j` are
/// conditionally iid with `f(v | t) = a(v) t^v / Z(t)` and `t` is drawn from
/// `mix`. Each `V_j` is truncated at `r`, which cannot change the conditional law.
pub fn exponential_family_conditional(
    a: &WeightFunction,
    mix: &ThetaMixture,
    n: usize,
    r: usize,
) -> Result<OccupancyModel> {
    let marginals: Vec<(Vec<Rational>, &Rational)> = mix
        .components()
        .iter()
        .map(|(tilt, weight)| {
            let z = tilted_normalizer(a, tilt, r);
            let mut power = Rational::one();
            let f = (0..=r)
                .map(|v| {
                    let p = a.weight(v) * &power / &z;
                    power *= tilt;
                    p
                })
                .collect();
            (f, weight)
        })
        .collect();

    let mut joint = BTreeMap::new();
    for x in enumerate_support(n, r)? {
        let mass: Rational = marginals
            .iter()
            .map(|(f, w)| x.iter().map(|&xj| f[xj].clone()).product::<Rational>() * *w)
            .sum();
        joint.insert(x, mass);
    }
    OccupancyModel::normalized(n, r, joint, "P{S_n = r} = 0 under the mixture")
}

fn factorial(k: usize) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// Number of distinct rearrangements of a multiset given as a sorted key.
fn orbit_size(sorted: &[usize]) -> BigUint {
    let mut denom = BigUint::one();
    let mut run = 1;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            denom *= factorial(run);
            run = 1;
        }
    }
    denom *= factorial(run);
    factorial(sorted.len()) / denom
}

/// Invariance of the pmf under every permutation of cells, checked orbit by orbit.
pub fn is_exchangeable(m: &OccupancyModel) -> bool {
    let mut orbits: BTreeMap<Vec<usize>, (usize, &Rational)> = BTreeMap::new();
    for (x, p) in m.iter() {
        let entry = orbits.entry(x.sorted_key()).or_insert((0, p));
        if entry.1 != p {
            return false;
        }
        entry.0 += 1;
    }
    orbits
        .iter()
        .all(|(key, (count, _))| BigUint::from(*count) == orbit_size(key))
}

/// `C(n, r) t^r / Z(t)^n == P{S_n = r}` for iid `f(v | t) = a(v) t^v / Z(t)`,
/// with `Z` taken over the table's own window `0..=x_max`.
pub fn kappa_identity_check(a: &WeightFunction, n: usize, r: usize, tilt: &Rational) -> Result<bool> {
    if !tilt.is_positive() || *tilt >= Rational::one() {
        return Err(Error::Domain("tilt must lie in (0, 1)".into()));
    }
    let z = tilted_normalizer(a, tilt, a.x_max());
    let lhs = norm_const(a, n, r) * num_traits::pow(tilt.clone(), r) / num_traits::pow(z.clone(), n);

    let f = |v: usize| a.weight(v) * num_traits::pow(tilt.clone(), v) / &z;
    let rhs: Rational = enumerate_support(n, r)?
        .iter()
        .map(|x| x.iter().map(|&xj| f(xj)).product::<Rational>())
        .sum();
    Ok(lhs == rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{integer, ratio};

    fn comp(x: &[usize]) -> Composition {
        Composition::new(x.to_vec())
    }

    #[test]
    fn realize_classical_examples() {
        let mb = realize(&classical(Classical::MaxwellBoltzmann, 2, 2).unwrap()).unwrap();
        assert_eq!(mb.prob(&[1, 1]), ratio(1, 2));
        assert_eq!(mb.prob(&[2, 0]), ratio(1, 4));
        assert_eq!(mb.prob(&[0, 2]), ratio(1, 4));

        let be = realize(&classical(Classical::BoseEinstein, 3, 2).unwrap()).unwrap();
        assert_eq!(be.support_len(), 6);
        assert!(be.iter().all(|(_, p)| *p == ratio(1, 6)));

        let fd = realize(&classical(Classical::FermiDirac, 4, 2).unwrap()).unwrap();
        assert_eq!(fd.support_len(), 6);
        assert!(fd.iter().all(|(x, p)| *p == ratio(1, 6) && x.iter().all(|&v| v <= 1)));
    }

    #[test]
    fn classical_tables() {
        let mb = classical(Classical::MaxwellBoltzmann, 2, 3).unwrap();
        assert_eq!(
            mb.a().values(),
            &[integer(1), integer(1), ratio(1, 2), ratio(1, 6)]
        );
        let be = classical(Classical::BoseEinstein, 5, 2).unwrap();
        assert_eq!(be.a().values(), &[integer(1), integer(1), integer(1)]);

        let fd = realize(&classical(Classical::FermiDirac, 3, 3).unwrap()).unwrap();
        assert_eq!(fd.support_len(), 1);
        assert_eq!(fd.prob(&[1, 1, 1]), integer(1));

        assert!(matches!(
            classical(Classical::FermiDirac, 2, 3),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            MaSpec::new(WeightFunction::fd(4), 2, 3),
            Err(Error::ZeroNormalizer { n: 2, r: 3 })
        ));
    }

    #[test]
    fn table_closed_forms() {
        // Uniform over A(n, r) for BE, over zero-one vectors for FD, multinomial / n^r for MB.
        for n in 1..=4 {
            for r in 0..=5 {
                let be = realize(&classical(Classical::BoseEinstein, n, r).unwrap()).unwrap();
                let size = be.support_len() as i64;
                assert!(be.iter().all(|(_, p)| *p == ratio(1, size)));

                let mb = realize(&classical(Classical::MaxwellBoltzmann, n, r).unwrap()).unwrap();
                for (x, p) in mb.iter() {
                    let fact = |k: usize| (1..=k as u64).product::<u64>().max(1);
                    let multinomial = fact(r) / x.iter().map(|&v| fact(v)).product::<u64>();
                    let want = integer(multinomial) / integer((n as u64).pow(r as u32));
                    assert_eq!(*p, want);
                }

                if r <= n {
                    let fd = realize(&classical(Classical::FermiDirac, n, r).unwrap()).unwrap();
                    let size = fd.support_len() as i64;
                    assert_eq!(BigUint::from(size as u64), num_integer::binomial(BigUint::from(n), BigUint::from(r)));
                    assert!(fd.iter().all(|(_, p)| *p == ratio(1, size)));
                }
            }
        }
    }

    #[test]
    fn merged_classical_examples() {
        let pc = realize(&pseudo_contagious(2, 2, 2).unwrap()).unwrap();
        assert_eq!(pc.prob(&[2, 0]), ratio(3, 10));
        let mh = realize(&multi_hypergeometric(2, 2, 2).unwrap()).unwrap();
        assert_eq!(mh.prob(&[1, 1]), ratio(2, 3));
        for n in 1..=3 {
            for r in 0..=4 {
                assert_eq!(
                    realize(&pseudo_contagious(n, r, 1).unwrap()).unwrap(),
                    realize(&classical(Classical::BoseEinstein, n, r).unwrap()).unwrap()
                );
            }
        }
        assert!(multi_hypergeometric(2, 5, 2).is_err());
    }

    #[test]
    fn exponential_family_examples() {
        let be = WeightFunction::be(2);
        let m = exponential_family_conditional(&be, &ThetaMixture::single(ratio(1, 2)).unwrap(), 2, 2)
            .unwrap();
        assert_eq!(m.support_len(), 3);
        assert!(m.iter().all(|(_, p)| *p == ratio(1, 3)));

        let mb = WeightFunction::mb(1);
        let m = exponential_family_conditional(&mb, &ThetaMixture::single(ratio(1, 3)).unwrap(), 2, 1)
            .unwrap();
        assert_eq!(m.prob(&[1, 0]), ratio(1, 2));

        let a = WeightFunction::new(vec![integer(2), ratio(1, 3), integer(4), ratio(5, 7)]).unwrap();
        let one = ThetaMixture::single(ratio(1, 5)).unwrap();
        let two = ThetaMixture::new(vec![(ratio(1, 2), ratio(1, 4)), (ratio(9, 10), ratio(3, 4))]).unwrap();
        let lhs = exponential_family_conditional(&a, &one, 3, 3).unwrap();
        let rhs = exponential_family_conditional(&a, &two, 3, 3).unwrap();
        assert_eq!(lhs, rhs);
        assert_eq!(lhs, realize(&MaSpec::new(a, 3, 3).unwrap()).unwrap());
    }

    #[test]
    fn mixture_validation() {
        assert!(ThetaMixture::single(integer(1)).is_err());
        assert!(ThetaMixture::single(integer(0)).is_err());
        assert!(ThetaMixture::new(vec![(ratio(1, 2), ratio(1, 2))]).is_err());
        assert!(ThetaMixture::new(vec![]).is_err());
    }

    #[test]
    fn exchangeability_examples() {
        assert!(is_exchangeable(&realize(&pseudo_contagious(3, 2, 2).unwrap()).unwrap()));
        let skewed = OccupancyModel::new(
            2,
            2,
            vec![
                (comp(&[2, 0]), ratio(1, 2)),
                (comp(&[1, 1]), ratio(1, 3)),
                (comp(&[0, 2]), ratio(1, 6)),
            ],
        )
        .unwrap();
        assert!(!is_exchangeable(&skewed));
        // Orbit partially missing: (0, 2) has zero mass while (2, 0) does not.
        let partial = OccupancyModel::new(
            2,
            2,
            vec![(comp(&[2, 0]), ratio(1, 2)), (comp(&[1, 1]), ratio(1, 2))],
        )
        .unwrap();
        assert!(!is_exchangeable(&partial));
    }

    #[test]
    fn kappa_identity_examples() {
        assert!(kappa_identity_check(&WeightFunction::be(2), 2, 2, &ratio(1, 2)).unwrap());
        assert!(kappa_identity_check(&WeightFunction::mb(4), 3, 4, &ratio(1, 4)).unwrap());
        assert!(kappa_identity_check(&WeightFunction::fd(3), 4, 0, &ratio(2, 3)).unwrap());
        assert!(kappa_identity_check(&WeightFunction::be(2), 2, 2, &integer(1)).is_err());
    }

    #[test]
    fn model_validation_and_dump() {
        assert!(OccupancyModel::new(2, 2, vec![(comp(&[2, 0]), ratio(1, 2))]).is_err());
        assert!(OccupancyModel::new(2, 2, vec![(comp(&[2, 1]), integer(1))]).is_err());
        assert!(OccupancyModel::new(2, 1, vec![(comp(&[1, 0]), integer(2)), (comp(&[0, 1]), ratio(-1, 1))]).is_err());

        let m = realize(&classical(Classical::MaxwellBoltzmann, 2, 2).unwrap()).unwrap();
        let text = m.to_json();
        assert_eq!(
            text,
            r#"{"n":2,"pmf":[{"p":"1/4","x":[0,2]},{"p":"1/2","x":[1,1]},{"p":"1/4","x":[2,0]}],"r":2}"#
        );
        assert_eq!(OccupancyModel::from_json(&text).unwrap(), m);
    }
}
