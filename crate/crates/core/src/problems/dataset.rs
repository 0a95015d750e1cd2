//! Sparse classification data in LIBSVM text format.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::SparseVec;

/// Where a dataset came from and what was done to it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: Option<String>,
    pub sha256: Option<String>,
    /// Per-feature max-abs scale factors, when scaling was applied.
    pub scaling: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<SparseVec>,
    /// `±1` after normalisation.
    pub labels: Vec<f64>,
    pub p: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Divides each feature by its largest magnitude; all-zero features are
    /// left alone.
    pub fn max_abs_scale(&mut self) {
        let mut scale = vec![0.0f64; self.p];
        for row in &self.features {
            for (&j, &v) in row.indices.iter().zip(&row.values) {
                scale[j] = scale[j].max(v.abs());
            }
        }
        for s in scale.iter_mut() {
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        for row in self.features.iter_mut() {
            for (&j, v) in row.indices.iter().zip(row.values.iter_mut()) {
                *v /= scale[j];
            }
        }
        self.provenance.scaling = Some(scale);
    }
}

#[derive(Debug, Clone, Default)]
pub struct LibsvmOptions {
    /// Feature dimension; defaults to the largest index seen.
    pub dim: Option<usize>,
    pub max_abs_scale: bool,
    pub expected_sha256: Option<String>,
}

/// Parses `label idx:val idx:val …` lines with 1-based indices. Blank lines
/// and `#` comments are skipped.
pub fn parse_libsvm(text: &str, dim: Option<usize>) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| perr(format!("bad label `{label_tok}`")))?;
        if !label.is_finite() {
            return Err(perr(format!("bad label `{label_tok}`")));
        }
        let mut pairs: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| perr(format!("expected idx:val, found `{tok}`")))?;
            let idx: usize = i
                .parse()
                .map_err(|_| perr(format!("bad feature index `{i}`")))?;
            if idx == 0 {
                return Err(perr("feature indices are 1-based".into()));
            }
            let val: f64 = v
                .parse()
                .map_err(|_| perr(format!("bad feature value `{v}`")))?;
            if !val.is_finite() {
                return Err(perr(format!("non-finite feature value `{v}`")));
            }
            pairs.push((idx - 1, val));
        }
        pairs.sort_by_key(|(i, _)| *i);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(perr("duplicate feature index".into()));
        }
        if let Some((last, _)) = pairs.last() {
            max_index = max_index.max(last + 1);
        }
        if let Some(d) = dim {
            if max_index > d {
                return Err(perr(format!(
                    "feature index {max_index} exceeds dimension {d}"
                )));
            }
        }
        let (indices, values) = pairs.into_iter().unzip();
        features.push(SparseVec::new(indices, values));
        raw_labels.push((line_no, label));
    }
    if features.is_empty() {
        return Err(Error::Data("dataset is empty".into()));
    }
    let labels = normalize_labels(&raw_labels)?;
    Ok(Dataset {
        features,
        labels,
        p: dim.unwrap_or(max_index),
        provenance: Provenance::default(),
    })
}

/// Maps `{−1, +1}`, `{0, 1}` and `{1, 2}` label schemes to `±1`.
fn normalize_labels(raw: &[(usize, f64)]) -> Result<Vec<f64>> {
    let all_in = |set: &[f64]| raw.iter().all(|(_, l)| set.contains(l));
    let map: fn(f64) -> f64 = if all_in(&[-1.0, 1.0]) {
        |l| l
    } else if all_in(&[0.0, 1.0]) {
        |l| if l == 0.0 { -1.0 } else { 1.0 }
    } else if all_in(&[1.0, 2.0]) {
        |l| if l == 1.0 { -1.0 } else { 1.0 }
    } else {
        let (line, l) = raw
            .iter()
            .find(|(_, l)| ![-1.0, 0.0, 1.0, 2.0].contains(l))
            .copied()
            .unwrap_or(raw[0]);
        return Err(Error::Parse {
            line,
            message: format!("label {l} is not a binary class label"),
        });
    };
    Ok(raw.iter().map(|(_, l)| map(*l)).collect())
}

pub fn load_libsvm(path: &Path, opts: &LibsvmOptions) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let sha = hex::encode(Sha256::digest(&bytes));
    if let Some(expected) = &opts.expected_sha256 {
        if !expected.eq_ignore_ascii_case(&sha) {
            return Err(Error::Data(format!(
                "checksum mismatch for {}: expected {expected}, got {sha}",
                path.display()
            )));
        }
    }
    let text =
        String::from_utf8(bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut ds = parse_libsvm(&text, opts.dim)?;
    ds.provenance.path = Some(path.display().to_string());
    ds.provenance.sha256 = Some(sha);
    if opts.max_abs_scale {
        ds.max_abs_scale();
    }
    Ok(ds)
}

pub fn format_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for (row, label) in ds.features.iter().zip(&ds.labels) {
        let _ = write!(out, "{}", if *label > 0.0 { "+1" } else { "-1" });
        for (i, v) in row.indices.iter().zip(&row.values) {
            let _ = write!(out, " {}:{v:?}", i + 1);
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(path: &Path, ds: &Dataset) -> Result<()> {
    std::fs::write(path, format_libsvm(ds))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line() {
        let ds = parse_libsvm("1 3:0.5\n", None).unwrap();
        assert_eq!(ds.labels, vec![1.0]);
        assert_eq!(ds.features[0].indices, vec![2]);
        assert_eq!(ds.features[0].values, vec![0.5]);
        assert_eq!(ds.p, 3);
    }

    #[test]
    fn two_lines() {
        let ds = parse_libsvm("+1 1:1 2:2\n-1 1:3\n", None).unwrap();
        assert_eq!((ds.n(), ds.p), (2, 2));
        assert_eq!(ds.labels, vec![1.0, -1.0]);
    }

    #[test]
    fn label_schemes() {
        assert_eq!(
            parse_libsvm("0 1:1\n1 1:1\n", None).unwrap().labels,
            vec![-1.0, 1.0]
        );
        assert_eq!(
            parse_libsvm("2 1:1\n1 1:1\n", None).unwrap().labels,
            vec![1.0, -1.0]
        );
        assert!(parse_libsvm("3 1:1\n1 1:1\n", None).is_err());
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_libsvm("1 1:1\n1 2:x\n", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_libsvm("1 1:1\n-1 0:2\n", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_libsvm("", None), Err(Error::Data(_))));
        assert!(matches!(
            parse_libsvm("1 5:1\n", Some(3)),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn scaling_is_recorded() {
        let mut ds = parse_libsvm("1 1:2 2:-4\n-1 1:1\n", None).unwrap();
        ds.max_abs_scale();
        assert_eq!(ds.features[0].values, vec![1.0, -1.0]);
        assert_eq!(ds.features[1].values, vec![0.5]);
        assert_eq!(ds.provenance.scaling, Some(vec![2.0, 4.0]));
    }
}
