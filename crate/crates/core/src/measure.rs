//! Finite nonnegative atomic measures on a [`FiniteMetricSpace`] and the
//! measure-level primitives the distances need: Lebesgue decomposition,
//! pushforward, scaling. Measures are immutable values and freely
//! shareable across threads.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::FiniteMetricSpace;
use crate::VERTEX_EPS;

/// A finite nonnegative atomic measure: a list of `(point index, mass)`
/// atoms with strictly positive masses and distinct indices, kept sorted by
/// index. The empty list is the null measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    space_id: u64,
    atoms: Vec<(usize, f64)>,
}

/// On-disk JSON schema for measures: `{"space": "...", "atoms": [[i, m], ...]}`.
#[derive(Debug, Serialize, Deserialize)]
struct MeasureFile {
    space: String,
    atoms: Vec<(usize, f64)>,
}

impl DiscreteMeasure {
    /// Builds a measure from raw atoms. Masses of duplicate indices are
    /// summed; atoms with mass below `1e-15` are dropped; negative masses
    /// are rejected.
    pub fn new(space: &FiniteMetricSpace, atoms: &[(usize, f64)]) -> Result<Self> {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for &(i, m) in atoms {
            if i >= space.len() {
                return Err(Error::PointOutOfRange {
                    index: i,
                    len: space.len(),
                });
            }
            if m < 0.0 || !m.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "atom at {i} has invalid mass {m}"
                )));
            }
            *merged.entry(i).or_insert(0.0) += m;
        }
        let atoms = merged
            .into_iter()
            .filter(|&(_, m)| m >= VERTEX_EPS)
            .collect();
        Ok(DiscreteMeasure {
            space_id: space.id(),
            atoms,
        })
    }

    /// The null measure.
    pub fn null(space: &FiniteMetricSpace) -> Self {
        DiscreteMeasure {
            space_id: space.id(),
            atoms: Vec::new(),
        }
    }

    /// A single weighted Dirac `mass * delta_x`.
    pub fn dirac(space: &FiniteMetricSpace, x: usize, mass: f64) -> Result<Self> {
        Self::new(space, &[(x, mass)])
    }

    pub fn atoms(&self) -> &[(usize, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|&(_, m)| m).sum()
    }

    pub fn is_null(&self) -> bool {
        self.atoms.is_empty()
    }

    /// The mass at a point (zero off the support).
    pub fn mass_at(&self, i: usize) -> f64 {
        match self.atoms.binary_search_by_key(&i, |&(j, _)| j) {
            Ok(k) => self.atoms[k].1,
            Err(_) => 0.0,
        }
    }

    /// Support as sorted point indices.
    pub fn support(&self) -> Vec<usize> {
        self.atoms.iter().map(|&(i, _)| i).collect()
    }

    pub fn same_space(&self, other: &DiscreteMeasure) -> bool {
        self.space_id == other.space_id
    }

    pub(crate) fn check_space(&self, space: &FiniteMetricSpace) -> Result<()> {
        if self.space_id != space.id() {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    /// Parses a measure from its JSON schema, binding it to `space`.
    /// Returns the measure together with the file's space label.
    pub fn from_json(space: &FiniteMetricSpace, text: &str) -> Result<(Self, String)> {
        let file: MeasureFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok((Self::new(space, &file.atoms)?, file.space))
    }

    /// Serializes to the JSON schema under the given space label.
    pub fn to_json(&self, space_label: &str) -> String {
        let file = MeasureFile {
            space: space_label.to_string(),
            atoms: self.atoms.clone(),
        };
        serde_json::to_string_pretty(&file).expect("measure serialization cannot fail")
    }

    /// Sum of two measures on the same space.
    pub fn add(&self, other: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        let mut merged: BTreeMap<usize, f64> = self.atoms.iter().copied().collect();
        for &(i, m) in &other.atoms {
            *merged.entry(i).or_insert(0.0) += m;
        }
        Ok(DiscreteMeasure {
            space_id: self.space_id,
            atoms: merged.into_iter().filter(|&(_, m)| m >= VERTEX_EPS).collect(),
        })
    }
}

/// Lebesgue decomposition of `nu` with respect to `mu`:
/// `nu = density * mu + singular`, where `density` is defined on the
/// support of `mu` and `singular` carries exactly the atoms of `nu`
/// outside it.
pub fn lebesgue_decompose(
    nu: &DiscreteMeasure,
    mu: &DiscreteMeasure,
) -> Result<(BTreeMap<usize, f64>, DiscreteMeasure)> {
    if !nu.same_space(mu) {
        return Err(Error::SpaceMismatch);
    }
    let mut density = BTreeMap::new();
    for &(i, m_mu) in mu.atoms() {
        density.insert(i, nu.mass_at(i) / m_mu);
    }
    let singular_atoms: Vec<(usize, f64)> = nu
        .atoms()
        .iter()
        .copied()
        .filter(|&(i, _)| mu.mass_at(i) == 0.0)
        .collect();
    let singular = DiscreteMeasure {
        space_id: nu.space_id,
        atoms: singular_atoms,
    };
    Ok((density, singular))
}

/// Pushforward of `mu` under the point map `f` into `target`. Masses of
/// colliding images are summed; the total mass is preserved exactly.
pub fn pushforward(
    mu: &DiscreteMeasure,
    target: &FiniteMetricSpace,
    f: impl Fn(usize) -> Option<usize>,
) -> Result<DiscreteMeasure> {
    let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
    for &(i, m) in mu.atoms() {
        let j = f(i).ok_or(Error::UnmappedAtom(i))?;
        if j >= target.len() {
            return Err(Error::PointOutOfRange {
                index: j,
                len: target.len(),
            });
        }
        *merged.entry(j).or_insert(0.0) += m;
    }
    Ok(DiscreteMeasure {
        space_id: target.id(),
        atoms: merged.into_iter().collect(),
    })
}

/// Multiplies every mass by `lambda >= 0`; `lambda = 0` yields the null
/// measure.
pub fn scale(mu: &DiscreteMeasure, lambda: f64) -> Result<DiscreteMeasure> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale factor {lambda} must be nonnegative"
        )));
    }
    let atoms = mu
        .atoms()
        .iter()
        .map(|&(i, m)| (i, m * lambda))
        .filter(|&(_, m)| m >= VERTEX_EPS)
        .collect();
    Ok(DiscreteMeasure {
        space_id: mu.space_id,
        atoms,
    })
}
