//! Labeled embedding collections and their on-disk text format:
//! a UTF-8 table with header `label,f0,f1,...,f{p-1}`, one record per line.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub label: String,
    pub vector: Vec<f64>,
}

/// Labeled collection of fixed-dimension real vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    dim: usize,
    records: Vec<Record>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, records: Vec<Record>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InsufficientSamples { need: 1, got: 0 });
        }
        for r in &records {
            if r.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.vector.len(),
                });
            }
            if r.label.is_empty() {
                return Err(Error::Format("empty label".into()));
            }
        }
        Ok(Self { dim, records })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.records.iter().map(|r| r.vector.as_slice())
    }

    /// Indices of records per label, in first-appearance order of labels.
    pub fn group_by_label(&self) -> Vec<(String, Vec<usize>)> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: std::collections::HashMap<&str, Vec<usize>> =
            std::collections::HashMap::new();
        for (i, r) in self.records.iter().enumerate() {
            let entry = groups.entry(&r.label);
            if let std::collections::hash_map::Entry::Vacant(_) = entry {
                order.push(r.label.clone());
            }
            groups.entry(&r.label).or_default().push(i);
        }
        order
            .into_iter()
            .map(|label| {
                let idx = groups[label.as_str()].clone();
                (label, idx)
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "label")?;
        for j in 0..self.dim {
            write!(w, ",f{j}")?;
        }
        writeln!(w)?;
        for r in &self.records {
            write!(w, "{}", r.label)?;
            for v in &r.vector {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty embedding file".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"label") {
            return Err(Error::Format(format!(
                "expected header starting with 'label', got '{header}'"
            )));
        }
        let dim = cols.len() - 1;
        if dim == 0 {
            return Err(Error::Format("header declares zero feature columns".into()));
        }
        for (j, c) in cols.iter().skip(1).enumerate() {
            if *c != format!("f{j}") {
                return Err(Error::Format(format!(
                    "unexpected header column '{c}' at feature position {j}"
                )));
            }
        }
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let label = parts
                .next()
                .ok_or_else(|| Error::Format(format!("line {}: missing label", lineno + 2)))?
                .to_string();
            if label.is_empty() {
                return Err(Error::Format(format!("line {}: empty label", lineno + 2)));
            }
            let vector: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>()
                        .map_err(|_| Error::Format(format!("line {}: bad float '{p}'", lineno + 2)))
                })
                .collect::<Result<_>>()?;
            if vector.len() != dim {
                return Err(Error::Format(format!(
                    "line {}: expected {dim} features, got {}",
                    lineno + 2,
                    vector.len()
                )));
            }
            records.push(Record { label, vector });
        }
        Self::new(dim, records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(f)
    }
}
