//! Readers and writers for profile and application-feature files.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::Deserialize;

use crate::classifier::{class_label, parse_class, AppFeatures, FunctionalUnit, KernelRecord};
use crate::error::{Error, Result};
use crate::variability::{normalize_profile, VariabilityProfile};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn headers(path: &Path, r: &mut csv::Reader<File>) -> Result<Vec<String>> {
    Ok(r.headers()
        .map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect())
}

fn require(path: &Path, headers: &[String], cols: &[&str]) -> Result<()> {
    for col in cols {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Load {
                path: path.into(),
                row: 1,
                message: format!("missing column '{col}'"),
            });
        }
    }
    Ok(())
}

fn load_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Load {
        path: path.into(),
        row,
        message: message.into(),
    }
}

fn write_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.into(),
        message: e.to_string(),
    }
}

#[derive(Debug, Deserialize)]
struct ProfileRow {
    gpu_id: usize,
    #[allow(dead_code)]
    node_id: usize,
    class: String,
    #[serde(default)]
    normalized_time: Option<f64>,
    #[serde(default)]
    raw_time_ms: Option<f64>,
}

/// Reads a variability profile with one row per (GPU, class).
///
/// Files with a `normalized_time` column are taken as-is. Files with only
/// `raw_time_ms` require `normalize`, which divides each class by its median.
/// GPU ids must be `0..M` and every GPU needs a value for every class.
pub fn load_profile(path: &Path, normalize: bool) -> Result<VariabilityProfile<f64>> {
    let mut r = reader(path)?;
    let hdr = headers(path, &mut r)?;
    require(path, &hdr, &["gpu_id", "node_id", "class"])?;
    let raw = if hdr.iter().any(|h| h == "normalized_time") {
        false
    } else if hdr.iter().any(|h| h == "raw_time_ms") {
        if !normalize {
            return Err(load_err(
                path,
                1,
                "raw_time_ms values need normalizing; pass the normalize option",
            ));
        }
        true
    } else {
        return Err(load_err(path, 1, "missing column 'normalized_time' or 'raw_time_ms'"));
    };

    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, rec) in r.deserialize::<ProfileRow>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| load_err(path, row, e.to_string()))?;
        let class = parse_class(&rec.class).ok_or_else(|| load_err(path, row, format!("unknown class '{}'", rec.class)))?;
        let value = if raw { rec.raw_time_ms } else { rec.normalized_time }
            .ok_or_else(|| load_err(path, row, "missing value"))?;
        if !(value > 0.0) || !value.is_finite() {
            return Err(load_err(path, row, format!("value must be positive, got {value}")));
        }
        if cells.insert((class, rec.gpu_id), value).is_some() {
            return Err(load_err(
                path,
                row,
                format!("duplicate entry for gpu {} class {}", rec.gpu_id, rec.class),
            ));
        }
    }
    let num_classes = cells.keys().map(|&(c, _)| c + 1).max().unwrap_or(0);
    let num_gpus = cells.keys().map(|&(_, g)| g + 1).max().unwrap_or(0);
    if num_classes == 0 {
        return Err(Error::Parse {
            path: path.into(),
            message: "profile has no rows".into(),
        });
    }
    let mut values = vec![Vec::with_capacity(num_gpus); num_classes];
    for (c, v) in values.iter_mut().enumerate() {
        for g in 0..num_gpus {
            let x = cells.get(&(c, g)).ok_or_else(|| Error::Parse {
                path: path.into(),
                message: format!("no value for gpu {g} class {}", class_label(c)),
            })?;
            v.push(*x);
        }
    }
    let wrap = |e: Error| Error::Parse {
        path: path.into(),
        message: e.to_string(),
    };
    if normalize {
        normalize_profile(&values).map_err(wrap)
    } else {
        VariabilityProfile::new(values).map_err(wrap)
    }
}

/// Writes `gpu_id,node_id,class,normalized_time`, GPU-major.
pub fn write_profile(path: &Path, profile: &VariabilityProfile<f64>, gpus_per_node: usize) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let gpn = gpus_per_node.max(1);
    w.write_record(["gpu_id", "node_id", "class", "normalized_time"])
        .map_err(|e| write_err(path, e))?;
    for g in 0..profile.num_gpus() {
        for c in 0..profile.num_classes() {
            w.write_record([
                g.to_string(),
                (g / gpn).to_string(),
                class_label(c),
                profile.value(g, c).to_string(),
            ])
            .map_err(|e| write_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize)]
struct FeatureRow {
    app_name: String,
    dram_util: f64,
    peak_fu_util: f64,
}

/// Reads `app_name,dram_util,peak_fu_util`, values on the [0, 10] scale.
pub fn load_features(path: &Path) -> Result<Vec<AppFeatures<f64>>> {
    let mut r = reader(path)?;
    let hdr = headers(path, &mut r)?;
    require(path, &hdr, &["app_name", "dram_util", "peak_fu_util"])?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<FeatureRow>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| load_err(path, row, e.to_string()))?;
        let f = AppFeatures::new(rec.app_name, rec.dram_util, rec.peak_fu_util)
            .map_err(|e| load_err(path, row, e.to_string()))?;
        out.push(f);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct KernelRow {
    app_name: String,
    kernel_type: String,
    runtime_s: f64,
    unit: String,
    util: f64,
}

/// Pseudo-unit name in kernel files carrying DRAM utilization.
pub const DRAM_UNIT: &str = "dram";

/// Reads `app_name,kernel_type,runtime_s,unit,util` (one row per kernel and
/// unit) and reduces each application to its features. DRAM utilization is
/// the runtime-weighted mean of the `dram` rows; peak FU utilization is the
/// largest runtime-weighted functional-unit mean. Applications come back in
/// name order.
pub fn load_kernel_features(path: &Path) -> Result<Vec<AppFeatures<f64>>> {
    let mut r = reader(path)?;
    let hdr = headers(path, &mut r)?;
    require(path, &hdr, &["app_name", "kernel_type", "runtime_s", "unit", "util"])?;

    // app -> kernel -> (runtime, fu utils, dram util)
    type Kernel = (f64, BTreeMap<FunctionalUnit, f64>, Option<f64>);
    let mut apps: BTreeMap<String, BTreeMap<String, Kernel>> = BTreeMap::new();
    for (i, rec) in r.deserialize::<KernelRow>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| load_err(path, row, e.to_string()))?;
        let kernel = apps
            .entry(rec.app_name)
            .or_default()
            .entry(rec.kernel_type.clone())
            .or_insert((rec.runtime_s, BTreeMap::new(), None));
        if kernel.0 != rec.runtime_s {
            return Err(load_err(
                path,
                row,
                format!("kernel {}: runtime differs between rows", rec.kernel_type),
            ));
        }
        if !(0.0..=crate::classifier::UTIL_SCALE).contains(&rec.util) {
            return Err(load_err(path, row, format!("util {} outside [0, 10]", rec.util)));
        }
        if rec.unit.trim().eq_ignore_ascii_case(DRAM_UNIT) {
            kernel.2 = Some(rec.util);
        } else {
            let unit: FunctionalUnit = rec.unit.parse().map_err(|e: Error| load_err(path, row, e.to_string()))?;
            kernel.1.insert(unit, rec.util);
        }
    }

    let mut out = Vec::with_capacity(apps.len());
    for (app, kernels) in apps {
        let records: Vec<KernelRecord<f64>> = kernels
            .iter()
            .map(|(name, (runtime, units, _))| KernelRecord {
                kernel_type: name.clone(),
                runtime: *runtime,
                util_per_fu: units.clone(),
            })
            .collect();
        let wrap = |e: Error| Error::Parse {
            path: path.into(),
            message: format!("{app}: {e}"),
        };
        let peak = crate::classifier::peak_fu_util(&records).map_err(wrap)?;
        let total: f64 = kernels.values().map(|k| k.0).sum();
        let dram = kernels.values().map(|k| k.0 * k.2.unwrap_or(0.0)).sum::<f64>() / total;
        out.push(AppFeatures::new(app.clone(), dram, peak).map_err(wrap)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write;

    fn tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn profile_normalized_and_raw() {
        let f = tmp("gpu_id,node_id,class,normalized_time\n0,0,A,0.9\n1,0,A,1.1\n0,0,B,1.0\n1,0,B,1.0\n");
        let p = load_profile(f.path(), false).unwrap();
        assert_eq!((p.num_classes(), p.num_gpus()), (2, 2));
        assert_eq!(p.value(1, 0), 1.1);

        let f = tmp("gpu_id,node_id,class,raw_time_ms\n0,0,A,2\n1,0,A,4\n2,0,A,6\n");
        assert!(load_profile(f.path(), false).is_err());
        let p = load_profile(f.path(), true).unwrap();
        assert_eq!(p.class(0), &[0.5, 1.0, 1.5]);
    }

    #[test]
    fn profile_errors() {
        let f = tmp("gpu_id,node_id,class,normalized_time\n0,0,A,1\n2,0,A,1\n");
        assert!(load_profile(f.path(), false).unwrap_err().to_string().contains("gpu 1"));
        let f = tmp("gpu_id,node_id,class,normalized_time\n0,0,A,1\n0,0,A,1\n");
        assert!(load_profile(f.path(), false).unwrap_err().to_string().contains("row 3"));
        let f = tmp("gpu_id,node_id,class,normalized_time\n0,0,A,-1\n");
        assert!(load_profile(f.path(), false).is_err());
        let f = tmp("gpu_id,node_id,class\n0,0,A\n");
        assert!(load_profile(f.path(), false).is_err());
        let err = load_profile(Path::new("/nonexistent/profile.csv"), false).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/profile.csv"));
    }

    #[test]
    fn profile_round_trip() {
        let p = VariabilityProfile::new(vec![vec![0.9, 1.0, 1.25], vec![1.0, 1.5, 0.75]]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_profile(f.path(), &p, 2).unwrap();
        assert_eq!(load_profile(f.path(), false).unwrap(), p);
    }

    #[test]
    fn features_file() {
        let f = tmp("app_name,dram_util,peak_fu_util\nresnet,2.5,8\nbert,5,5.5\n");
        let v = load_features(f.path()).unwrap();
        assert_eq!(v[1].point(), [5.0, 5.5]);
        let f = tmp("app_name,dram_util,peak_fu_util\nx,11,1\n");
        assert!(load_features(f.path()).unwrap_err().to_string().contains("row 2"));
    }

    #[test]
    fn kernel_file_reduces_to_features() {
        let f = tmp(
            "app_name,kernel_type,runtime_s,unit,util\n\
             app,gemm,3,tensor,8\napp,gemm,3,dram,2\n\
             app,copy,1,sp,1\napp,copy,1,dram,6\n",
        );
        let v = load_kernel_features(f.path()).unwrap();
        assert_eq!(v.len(), 1);
        // tensor: (3*8)/4 = 6; dram: (3*2 + 1*6)/4 = 3
        assert_relative_eq!(v[0].peak_fu_util, 6.0);
        assert_relative_eq!(v[0].dram_util, 3.0);

        let f = tmp("app_name,kernel_type,runtime_s,unit,util\napp,k,1,tensor,1\napp,k,2,sp,1\n");
        assert!(load_kernel_features(f.path()).is_err());
        let f = tmp("app_name,kernel_type,runtime_s,unit,util\napp,k,1,warp,1\n");
        assert!(load_kernel_features(f.path()).is_err());
    }
}
