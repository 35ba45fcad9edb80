//! Locality × variability matrix.
//!
//! Rows are locality levels (within a node, across nodes), columns are the
//! distinct PM-Scores of one class. Each entry is the combined slowdown
//! `locality_factor × score`; PAL walks the entries in ascending order.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{cmp_scalar, Real, Scalar};
use crate::variability::PMBinning;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Locality {
    Within,
    Across,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraversalStep<T> {
    pub locality: Locality,
    pub bin: usize,
    pub factor: T,
    pub score: T,
    pub product: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassLvMatrix<T> {
    pub l_across: T,
    /// Strictly ascending PM-Score columns.
    pub bin_scores: Vec<T>,
    /// `entries[0]` is the within-node row, `entries[1]` the across-node row.
    pub entries: [Vec<T>; 2],
    pub traversal: Vec<TraversalStep<T>>,
}

impl<T: Scalar> ClassLvMatrix<T> {
    pub fn new(bin_scores: Vec<T>, l_across: T) -> Result<Self> {
        if bin_scores.is_empty() {
            return Err(Error::invalid("L×V matrix needs at least one score column"));
        }
        if bin_scores.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("L×V score columns must be strictly ascending"));
        }
        if !(l_across >= T::one()) {
            return Err(Error::invalid(format!("l_across = {l_across:?} must be >= 1")));
        }
        let within: Vec<T> = bin_scores.iter().map(|&v| T::one() * v).collect();
        let across: Vec<T> = bin_scores.iter().map(|&v| l_across * v).collect();

        let mut traversal: Vec<TraversalStep<T>> = Vec::with_capacity(2 * bin_scores.len());
        for (locality, factor, row) in [
            (Locality::Within, T::one(), &within),
            (Locality::Across, l_across, &across),
        ] {
            for (bin, (&score, &product)) in bin_scores.iter().zip(row).enumerate() {
                traversal.push(TraversalStep {
                    locality,
                    bin,
                    factor,
                    score,
                    product,
                });
            }
        }
        // Stable: equal products keep within-before-across, then bin order.
        traversal.sort_by(|a, b| cmp_scalar(&a.product, &b.product));

        Ok(ClassLvMatrix {
            l_across,
            bin_scores,
            entries: [within, across],
            traversal,
        })
    }

    pub fn entry(&self, locality: Locality, bin: usize) -> T {
        self.entries[locality as usize][bin]
    }

    pub fn factor(&self, locality: Locality) -> T {
        match locality {
            Locality::Within => T::one(),
            Locality::Across => self.l_across,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LvMatrix<T> {
    pub classes: Vec<ClassLvMatrix<T>>,
}

impl<T: Scalar> LvMatrix<T> {
    /// One matrix per class from explicit score columns and per-class
    /// locality penalties.
    pub fn from_levels(levels: Vec<Vec<T>>, l_across: &[T]) -> Result<Self> {
        if levels.len() != l_across.len() {
            return Err(Error::invalid(format!(
                "{} score classes but {} locality penalties",
                levels.len(),
                l_across.len()
            )));
        }
        let classes = levels
            .into_iter()
            .zip(l_across)
            .map(|(v, &l)| ClassLvMatrix::new(v, l))
            .collect::<Result<_>>()?;
        Ok(LvMatrix { classes })
    }

    pub fn class(&self, class: usize) -> &ClassLvMatrix<T> {
        &self.classes[class]
    }
}

impl<T: Real> LvMatrix<T> {
    /// Columns are every distinct PM-Score of the class, outliers included.
    pub fn from_binning(binning: &PMBinning<T>, l_across: &[T]) -> Result<Self> {
        let levels = binning.classes.iter().map(|c| c.score_levels()).collect();
        Self::from_levels(levels, l_across)
    }
}
