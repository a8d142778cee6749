//! JSON distribution files.
//!
//! A categorical distribution is `{"n": int, "probs": [reals]}`; a joint
//! distribution is `{"n": int, "m": int, "probs": [[reals]]}` with one inner
//! array per row. Parsing rejects negative entries and total mass outside
//! `1 +/- 1e-6`; accepted vectors are renormalized exactly so that decimal
//! round-trips through text never accumulate drift.

use serde::{Deserialize, Serialize};

use super::{Categorical, JointDistribution};
use crate::error::Error;
use crate::Result;

/// Accepted deviation of a file's total mass from one.
pub const MASS_FILE_TOLERANCE: f64 = 1e-6;

#[derive(Serialize, Deserialize)]
struct CategoricalFile {
    n: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JointFile {
    n: usize,
    m: usize,
    probs: Vec<Vec<f64>>,
}

pub fn categorical_from_json(text: &str) -> Result<Categorical> {
    let file: CategoricalFile = serde_json::from_str(text)
        .map_err(|e| Error::invalid(format!("distribution file: {e}")))?;
    if file.probs.len() != file.n {
        return Err(Error::invalid(format!(
            "distribution file: n={} but {} probabilities",
            file.n,
            file.probs.len()
        )));
    }
    check_file_masses(&file.probs)?;
    Categorical::normalized(file.probs)
}

pub fn categorical_to_json(dist: &Categorical) -> String {
    serde_json::to_string(&CategoricalFile {
        n: dist.n(),
        probs: dist.probs().to_vec(),
    })
    .expect("serializing plain vectors cannot fail")
}

pub fn joint_from_json(text: &str) -> Result<JointDistribution> {
    let file: JointFile = serde_json::from_str(text)
        .map_err(|e| Error::invalid(format!("distribution file: {e}")))?;
    if file.probs.len() != file.n {
        return Err(Error::invalid(format!(
            "distribution file: n={} but {} rows",
            file.n,
            file.probs.len()
        )));
    }
    let mut flat = Vec::with_capacity(file.n * file.m);
    for (i, row) in file.probs.iter().enumerate() {
        if row.len() != file.m {
            return Err(Error::invalid(format!(
                "distribution file: row {i} has {} entries, expected m={}",
                row.len(),
                file.m
            )));
        }
        flat.extend_from_slice(row);
    }
    check_file_masses(&flat)?;
    JointDistribution::normalized(file.n, file.m, flat)
}

pub fn joint_to_json(dist: &JointDistribution) -> String {
    let probs = (0..dist.n())
        .map(|i| dist.probs()[i * dist.m()..(i + 1) * dist.m()].to_vec())
        .collect();
    serde_json::to_string(&JointFile {
        n: dist.n(),
        m: dist.m(),
        probs,
    })
    .expect("serializing plain vectors cannot fail")
}

fn check_file_masses(probs: &[f64]) -> Result<()> {
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::invalid(format!(
                "distribution file: entry {i} is negative or not finite ({p})"
            )));
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > MASS_FILE_TOLERANCE {
        return Err(Error::invalid(format!(
            "distribution file: total mass {total} outside 1 +/- {MASS_FILE_TOLERANCE:e}"
        )));
    }
    Ok(())
}
