//! Sparse binary vectors and labeled datasets, with the plain-text sparse
//! dataset format.
//!
//! Dataset files are UTF-8 text. The first line is `dim <n>`; every other
//! line is one sample: `<label> [fam:<name>] <idx>:1 <idx>:1 ...` with the
//! label written as `+1` (malware) or `-1` (clean) and strictly increasing
//! indices. The reader additionally tolerates and skips `qid:<...>` fields.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Binary vector of length `dim`, stored as the sorted list of indices that
/// are set to one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseVector {
    indices: Vec<usize>,
    dim: usize,
}

impl SparseVector {
    /// Builds a vector from strictly increasing indices, all `< dim`.
    pub fn new(indices: Vec<usize>, dim: usize) -> Result<Self> {
        for (pos, &i) in indices.iter().enumerate() {
            if i >= dim {
                return Err(Error::InvalidInput(format!(
                    "index {i} out of range for dim {dim}"
                )));
            }
            if pos > 0 && indices[pos - 1] >= i {
                return Err(Error::InvalidInput(format!(
                    "indices not strictly increasing at position {pos}"
                )));
            }
        }
        Ok(SparseVector { indices, dim })
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector {
            indices: Vec::new(),
            dim,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of active (one-valued) entries.
    pub fn active_count(&self) -> usize {
        self.indices.len()
    }

    pub fn is_active(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

/// Sample label: malware maps to +1, clean to -1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Malware,
    Clean,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Malware => 1.0,
            Label::Clean => -1.0,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "+1" | "1" => Some(Label::Malware),
            "-1" => Some(Label::Clean),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Malware => "+1",
            Label::Clean => "-1",
        })
    }
}

/// A set of encoded samples sharing one dimension, with labels and optional
/// per-sample malware-family names.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    vectors: Vec<SparseVector>,
    labels: Vec<Label>,
    families: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(
        dim: usize,
        vectors: Vec<SparseVector>,
        labels: Vec<Label>,
        families: Option<Vec<String>>,
    ) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} vectors but {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        if let Some(f) = &families {
            if f.len() != vectors.len() {
                return Err(Error::InvalidInput(format!(
                    "{} vectors but {} family names",
                    vectors.len(),
                    f.len()
                )));
            }
        }
        for v in &vectors {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
        }
        // An empty dataset carries no family information.
        let families = families.filter(|_| !vectors.is_empty());
        Ok(LabeledDataset {
            dim,
            vectors,
            labels,
            families,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[SparseVector] {
        &self.vectors
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn families(&self) -> Option<&[String]> {
        self.families.as_deref()
    }

    /// (malware, clean) counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let malware = self.labels.iter().filter(|l| **l == Label::Malware).count();
        (malware, self.labels.len() - malware)
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            dim: self.dim,
            vectors: rows.iter().map(|&i| self.vectors[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            families: self
                .families
                .as_ref()
                .map(|f| rows.iter().map(|&i| f[i].clone()).collect()),
        }
    }

    /// Same samples, labels replaced by "belongs to `family`".
    pub fn relabel_one_vs_rest(&self, family: &str) -> Result<LabeledDataset> {
        let families = self
            .families
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("dataset has no family names".into()))?;
        let labels = families
            .iter()
            .map(|f| {
                if f == family {
                    Label::Malware
                } else {
                    Label::Clean
                }
            })
            .collect();
        Ok(LabeledDataset {
            dim: self.dim,
            vectors: self.vectors.clone(),
            labels,
            families: self.families.clone(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(families) = &self.families {
            for name in families {
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(Error::InvalidInput(format!(
                        "family name {name:?} cannot be written"
                    )));
                }
            }
        }
        let mut out = BufWriter::new(File::create(path).map_err(Error::io(path))?);
        (|| -> std::io::Result<()> {
            writeln!(out, "dim {}", self.dim)?;
            for (row, vector) in self.vectors.iter().enumerate() {
                write!(out, "{}", self.labels[row])?;
                if let Some(families) = &self.families {
                    write!(out, " fam:{}", families[row])?;
                }
                for &i in vector.indices() {
                    write!(out, " {i}:1")?;
                }
                writeln!(out)?;
            }
            out.flush()
        })()
        .map_err(Error::io(path))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<LabeledDataset> {
        let path = path.as_ref();
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.display().to_string(),
            line,
            msg,
        };

        let reader = BufReader::new(File::open(path).map_err(Error::io(path))?);
        let mut lines = reader.lines().enumerate();

        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing `dim <n>` header".into()))?;
        let header = header.map_err(Error::io(path))?;
        let dim: usize = header
            .strip_prefix("dim ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| parse_err(1, format!("expected `dim <n>` header, got {header:?}")))?;

        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        let mut families: Option<Vec<String>> = None;
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.map_err(Error::io(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let label_field = fields.next().unwrap();
            let label = Label::parse(label_field)
                .ok_or_else(|| parse_err(lineno, format!("bad label {label_field:?}")))?;

            let mut family = None;
            let mut indices = Vec::new();
            for field in fields {
                if let Some(name) = field.strip_prefix("fam:") {
                    if family.is_some() {
                        return Err(parse_err(lineno, "duplicate fam: field".into()));
                    }
                    family = Some(name.to_string());
                    continue;
                }
                if field.starts_with("qid:") {
                    continue;
                }
                let (i, v) = field
                    .split_once(':')
                    .ok_or_else(|| parse_err(lineno, format!("bad field {field:?}")))?;
                if v != "1" {
                    return Err(parse_err(lineno, format!("non-binary value in {field:?}")));
                }
                let i: usize = i
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("bad index in {field:?}")))?;
                if i >= dim {
                    return Err(parse_err(lineno, format!("index {i} >= dim {dim}")));
                }
                if let Some(&last) = indices.last() {
                    if last >= i {
                        return Err(parse_err(lineno, "indices not strictly increasing".into()));
                    }
                }
                indices.push(i);
            }

            let consistent = match (&mut families, family) {
                (None, Some(name)) if vectors.is_empty() => {
                    families = Some(vec![name]);
                    true
                }
                (Some(f), Some(name)) => {
                    f.push(name);
                    true
                }
                (None, None) => true,
                _ => false,
            };
            if !consistent {
                return Err(parse_err(
                    lineno,
                    "fam: must be present on all lines or none".into(),
                ));
            }
            vectors.push(SparseVector { indices, dim });
            labels.push(label);
        }

        LabeledDataset::new(dim, vectors, labels, families)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn sv(indices: &[usize], dim: usize) -> SparseVector {
        SparseVector::new(indices.to_vec(), dim).unwrap()
    }

    #[test]
    fn sparse_vector_rejects_bad_indices() {
        assert!(SparseVector::new(vec![0, 2, 2], 5).is_err());
        assert!(SparseVector::new(vec![2, 1], 5).is_err());
        assert!(SparseVector::new(vec![5], 5).is_err());
        assert!(SparseVector::new(vec![0, 4], 5).is_ok());
    }

    #[test]
    fn single_sample_round_trip_matches_format() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.ds");
        let ds = LabeledDataset::new(
            5,
            vec![sv(&[0, 2], 5)],
            vec![Label::Malware],
            Some(vec!["Airpush".into()]),
        )
        .unwrap();
        ds.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "dim 5\n+1 fam:Airpush 0:1 2:1\n");
        assert_eq!(LabeledDataset::read(&path).unwrap(), ds);
    }

    #[test]
    fn reader_tolerates_qid_fields() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("qid.ds");
        std::fs::write(&path, "dim 5\n+1 qid:none fam:Airpush 0:1 2:1\n").unwrap();
        let ds = LabeledDataset::read(&path).unwrap();
        assert_eq!(ds.vectors()[0], sv(&[0, 2], 5));
        assert_eq!(ds.families().unwrap()[0], "Airpush");
    }

    #[test]
    fn empty_dataset_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.ds");
        let ds = LabeledDataset::new(7, vec![], vec![], None).unwrap();
        ds.write(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "dim 7\n");
        let back = LabeledDataset::read(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim(), 7);
    }

    #[test]
    fn out_of_range_index_names_the_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ds");
        std::fs::write(&path, "dim 5\n-1 1:1\n+1 7:1\n").unwrap();
        let err = LabeledDataset::read(&path).unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("7"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_label_names_the_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ds");
        std::fs::write(&path, "dim 5\n+2 1:1\n").unwrap();
        match LabeledDataset::read(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mixed_family_presence_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mixed.ds");
        std::fs::write(&path, "dim 5\n+1 fam:a 0:1\n-1 1:1\n").unwrap();
        assert!(LabeledDataset::read(&path).is_err());
    }

    prop_compose! {
        fn arb_sample(dim: usize)(mask in prop::collection::vec(any::<bool>(), dim)) -> Vec<usize> {
            mask.iter().enumerate().filter(|(_, on)| **on).map(|(i, _)| i).collect()
        }
    }

    proptest! {
        #[test]
        fn write_read_is_identity(
            rows in prop::collection::vec((arb_sample(12), any::<bool>()), 0..20),
            with_family in any::<bool>(),
        ) {
            let dir = tempdir().unwrap();
            let path = dir.path().join("prop.ds");
            let vectors: Vec<SparseVector> =
                rows.iter().map(|(idx, _)| sv(idx, 12)).collect();
            let labels: Vec<Label> = rows
                .iter()
                .map(|(_, m)| if *m { Label::Malware } else { Label::Clean })
                .collect();
            let families = with_family.then(|| {
                (0..rows.len()).map(|i| format!("fam{}", i % 3)).collect::<Vec<_>>()
            });
            let ds = LabeledDataset::new(12, vectors, labels, families).unwrap();
            ds.write(&path).unwrap();
            prop_assert_eq!(LabeledDataset::read(&path).unwrap(), ds);
        }

        #[test]
        fn sparse_vector_indices_strictly_increase(idx in arb_sample(40)) {
            let v = sv(&idx, 40);
            prop_assert!(v.indices().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(v.indices().iter().all(|&i| i < v.dim()));
        }
    }
}
