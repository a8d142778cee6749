//! Plain-text sample files: one sample per line, 1-indexed.
//!
//! Single-domain samples are bare integers; pair samples are `x,y`. Parse
//! errors name the offending line.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

pub fn read_scalar_samples(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read sample file {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: usize = line.parse().map_err(|_| {
            anyhow!(
                "{}:{}: expected an integer sample, got '{line}'",
                path.display(),
                idx + 1
            )
        })?;
        if value == 0 || value > n {
            bail!(
                "{}:{}: sample {value} outside 1..={n}",
                path.display(),
                idx + 1
            );
        }
        out.push(value - 1);
    }
    Ok(out)
}

pub fn read_pair_samples(path: &Path, n: usize, m: usize) -> Result<Vec<(usize, usize)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read sample file {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (xs, ys) = line.split_once(',').ok_or_else(|| {
            anyhow!(
                "{}:{}: expected 'x,y', got '{line}'",
                path.display(),
                idx + 1
            )
        })?;
        let x: usize = xs.trim().parse().map_err(|_| {
            anyhow!("{}:{}: bad x coordinate '{xs}'", path.display(), idx + 1)
        })?;
        let y: usize = ys.trim().parse().map_err(|_| {
            anyhow!("{}:{}: bad y coordinate '{ys}'", path.display(), idx + 1)
        })?;
        if x == 0 || x > n || y == 0 || y > m {
            bail!(
                "{}:{}: sample ({x}, {y}) outside [1..={n}] x [1..={m}]",
                path.display(),
                idx + 1
            );
        }
        out.push((x - 1, y - 1));
    }
    Ok(out)
}

pub fn write_scalar_samples(samples: &[usize]) -> String {
    let mut out = String::with_capacity(samples.len() * 4);
    for &s in samples {
        writeln!(out, "{}", s + 1).unwrap();
    }
    out
}

pub fn write_pair_samples(samples: &[(usize, usize)]) -> String {
    let mut out = String::with_capacity(samples.len() * 8);
    for &(x, y) in samples {
        writeln!(out, "{},{}", x + 1, y + 1).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn scalar_round_trip() {
        let f = temp_file("1\n3\n2\n");
        let samples = read_scalar_samples(f.path(), 3).unwrap();
        assert_eq!(samples, vec![0, 2, 1]);
        assert_eq!(write_scalar_samples(&samples), "1\n3\n2\n");
    }

    #[test]
    fn pair_round_trip() {
        let f = temp_file("1,2\n3,1\n");
        let samples = read_pair_samples(f.path(), 3, 2).unwrap();
        assert_eq!(samples, vec![(0, 1), (2, 0)]);
        assert_eq!(write_pair_samples(&samples), "1,2\n3,1\n");
    }

    #[test]
    fn errors_name_the_line() {
        let f = temp_file("1\nfoo\n");
        let err = read_scalar_samples(f.path(), 3).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");

        let f = temp_file("1,1\n9,1\n");
        let err = read_pair_samples(f.path(), 3, 2).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn out_of_range_rejected() {
        let f = temp_file("0\n");
        assert!(read_scalar_samples(f.path(), 3).is_err());
        let f = temp_file("4\n");
        assert!(read_scalar_samples(f.path(), 3).is_err());
    }
}
