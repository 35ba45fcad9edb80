//! Application classes from (DRAM utilization, peak functional-unit
//! utilization) features.
//!
//! Class 0 ("A") is the most compute-intensive and therefore the most
//! sensitive to performance variability; higher indices are progressively
//! more memory-bound.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{kmeans, nearest_centroid};
use crate::scalar::{cmp_scalar, Real};

/// Upper bound of the profiler's utilization scale.
pub const UTIL_SCALE: f64 = 10.0;

pub const DEFAULT_CLASS_COUNT: usize = 3;

/// GPU compute units whose utilization is tracked per kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalUnit {
    SinglePrecision,
    DoublePrecision,
    Texture,
    Special,
    Tensor,
}

impl FunctionalUnit {
    pub const ALL: [FunctionalUnit; 5] = [
        FunctionalUnit::SinglePrecision,
        FunctionalUnit::DoublePrecision,
        FunctionalUnit::Texture,
        FunctionalUnit::Special,
        FunctionalUnit::Tensor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionalUnit::SinglePrecision => "single_precision",
            FunctionalUnit::DoublePrecision => "double_precision",
            FunctionalUnit::Texture => "texture",
            FunctionalUnit::Special => "special",
            FunctionalUnit::Tensor => "tensor",
        }
    }
}

impl FromStr for FunctionalUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single_precision" | "sp" | "fp32" => Ok(FunctionalUnit::SinglePrecision),
            "double_precision" | "dp" | "fp64" => Ok(FunctionalUnit::DoublePrecision),
            "texture" | "tex" => Ok(FunctionalUnit::Texture),
            "special" | "sfu" => Ok(FunctionalUnit::Special),
            "tensor" => Ok(FunctionalUnit::Tensor),
            other => Err(Error::invalid(format!("unknown functional unit '{other}'"))),
        }
    }
}

impl fmt::Display for FunctionalUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppFeatures<T> {
    pub app_name: String,
    pub dram_util: T,
    pub peak_fu_util: T,
}

impl<T: Real> AppFeatures<T> {
    pub fn new(app_name: impl Into<String>, dram_util: T, peak_fu_util: T) -> Result<Self> {
        let f = AppFeatures {
            app_name: app_name.into(),
            dram_util,
            peak_fu_util,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("dram_util", self.dram_util), ("peak_fu_util", self.peak_fu_util)] {
            if !in_util_range(v) {
                return Err(Error::invalid(format!(
                    "{}: {name} = {v:?} outside [0, 10]",
                    self.app_name
                )));
            }
        }
        Ok(())
    }

    pub fn point(&self) -> [T; 2] {
        [self.dram_util, self.peak_fu_util]
    }
}

fn in_util_range<T: Real>(v: T) -> bool {
    v >= T::zero() && v <= T::from_f64(UTIL_SCALE).unwrap()
}

/// One profiled kernel type with its runtime and per-unit utilization.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRecord<T> {
    pub kernel_type: String,
    pub runtime: T,
    pub util_per_fu: BTreeMap<FunctionalUnit, T>,
}

impl<T: Real> KernelRecord<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.runtime > T::zero()) || !self.runtime.is_finite() {
            return Err(Error::invalid(format!(
                "kernel {}: runtime must be positive",
                self.kernel_type
            )));
        }
        for (unit, &u) in &self.util_per_fu {
            if !in_util_range(u) {
                return Err(Error::invalid(format!(
                    "kernel {}: {unit} utilization {u:?} outside [0, 10]",
                    self.kernel_type
                )));
            }
        }
        Ok(())
    }
}

/// Runtime-weighted mean utilization of one functional unit. Kernels that do
/// not report the unit count as 0.
pub fn fu_util<T: Real>(kernels: &[KernelRecord<T>], unit: FunctionalUnit) -> Result<T> {
    if kernels.is_empty() {
        return Err(Error::invalid("fu_util: empty kernel list"));
    }
    let mut weighted = T::zero();
    let mut total = T::zero();
    for k in kernels {
        k.validate()?;
        let u = k.util_per_fu.get(&unit).copied().unwrap_or_else(T::zero);
        weighted = weighted + k.runtime * u;
        total = total + k.runtime;
    }
    Ok(weighted / total)
}

pub fn peak_fu_util<T: Real>(kernels: &[KernelRecord<T>]) -> Result<T> {
    let mut peak = T::zero();
    for unit in FunctionalUnit::ALL {
        peak = peak.max(fu_util(kernels, unit)?);
    }
    Ok(peak)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel<T> {
    /// `(dram_util, peak_fu_util)` per class, ordered by descending peak FU
    /// utilization.
    pub centroids: Vec<[T; 2]>,
    pub labels: Vec<String>,
}

impl<T: Real> ClassModel<T> {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn label(&self, class: usize) -> &str {
        &self.labels[class]
    }
}

/// Label for a class index: A, B, ..., Z, then C26, C27, ...
pub fn class_label(index: usize) -> String {
    if index < 26 {
        char::from(b'A' + index as u8).to_string()
    } else {
        format!("C{index}")
    }
}

/// Inverse of [`class_label`]; also accepts plain integer indices.
pub fn parse_class(s: &str) -> Option<usize> {
    let s = s.trim();
    if let Ok(i) = s.parse::<usize>() {
        return Some(i);
    }
    let b = s.as_bytes();
    if b.len() == 1 && b[0].is_ascii_alphabetic() {
        return Some((b[0].to_ascii_uppercase() - b'A') as usize);
    }
    s.strip_prefix('C').and_then(|r| r.parse().ok()).filter(|&i: &usize| i >= 26)
}

/// Clusters applications into `k` classes, most compute-intensive first.
pub fn build_class_model<T: Real>(apps: &[AppFeatures<T>], k: usize, seed: u64) -> Result<ClassModel<T>> {
    for a in apps {
        a.validate()?;
    }
    let points: Vec<[T; 2]> = apps.iter().map(AppFeatures::point).collect();
    let result = kmeans(&points, k, seed)?;
    let mut centroids = result.centroids;
    // Stable: equal peak utilization keeps the k-means (ascending DRAM) order.
    centroids.sort_by(|a, b| cmp_scalar(&b[1], &a[1]));
    Ok(ClassModel {
        labels: (0..centroids.len()).map(class_label).collect(),
        centroids,
    })
}

/// Nearest class centroid; ties go to the lower class index.
pub fn classify_app<T: Real>(model: &ClassModel<T>, features: &AppFeatures<T>) -> usize {
    nearest_centroid(&features.point(), &model.centroids)
}
