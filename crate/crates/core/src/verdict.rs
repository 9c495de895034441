//! Pass/fail outcomes of exact identity checks, with minimal witnesses.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::kernel::{format_rational, Composition, Rational};
use crate::models::OccupancyModel;

/// A composition where two exact pmfs disagree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub x: Composition,
    pub left: Rational,
    pub right: Rational,
}

impl Witness {
    pub fn to_json(&self) -> Value {
        json!({
            "x": self.x.entries(),
            "left": format_rational(&self.left),
            "right": format_rational(&self.right),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub witness: Option<Witness>,
}

impl Verdict {
    pub fn pass() -> Self {
        Verdict { witness: None }
    }

    pub fn passed(&self) -> bool {
        self.witness.is_none()
    }

    /// Keeps the first failure.
    pub fn and(self, other: Verdict) -> Verdict {
        if self.passed() {
            other
        } else {
            self
        }
    }
}

/// Lexicographically smallest composition where the models differ.
pub fn first_difference(left: &OccupancyModel, right: &OccupancyModel) -> Result<Option<Witness>> {
    if left.n() != right.n() || left.r() != right.r() {
        return Err(Error::Domain(format!(
            "cannot compare models on A({}, {}) and A({}, {})",
            left.n(),
            left.r(),
            right.n(),
            right.r()
        )));
    }
    let mut points: Vec<&Composition> = left.iter().map(|(x, _)| x).collect();
    points.extend(right.iter().map(|(x, _)| x));
    points.sort();
    points.dedup();
    Ok(points.into_iter().find_map(|x| {
        let (l, r) = (left.prob(x), right.prob(x));
        (l != r).then(|| Witness {
            x: x.clone(),
            left: l,
            right: r,
        })
    }))
}

pub fn compare(left: &OccupancyModel, right: &OccupancyModel) -> Result<Verdict> {
    Ok(Verdict {
        witness: first_difference(left, right)?,
    })
}
