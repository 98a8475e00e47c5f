//! File formats: graph and partition JSON, numeric vectors, and helpers for
//! reading and writing them with path-carrying errors.
//!
//! Floats go through serde_json's shortest round-trip formatting, so every
//! file written here reads back bit-exactly.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{VertexPartition, WeightedGraph};

/// `{"n": 3, "edges": [[0, 1, 1.0], [1, 2, 0.5]]}` with `i < j`, `w > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl From<&WeightedGraph> for GraphFile {
    fn from(g: &WeightedGraph) -> Self {
        Self {
            n: g.n(),
            edges: g.edges().iter().map(|e| (e.i, e.j, e.w)).collect(),
        }
    }
}

impl GraphFile {
    pub fn to_graph(&self) -> Result<WeightedGraph> {
        if let Some(&(i, j, _)) = self.edges.iter().find(|(i, j, _)| i >= j) {
            return Err(Error::InvalidGraph(format!("edge ({i}, {j}) must satisfy i < j")));
        }
        WeightedGraph::new(self.n, self.edges.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub assignment: Vec<usize>,
}

impl From<&VertexPartition> for PartitionFile {
    fn from(p: &VertexPartition) -> Self {
        Self {
            assignment: p.assignment().to_vec(),
        }
    }
}

impl PartitionFile {
    pub fn to_partition(&self) -> Result<VertexPartition> {
        VertexPartition::new(self.assignment.clone())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(io_err(path))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub fn read_graph(path: &Path) -> Result<WeightedGraph> {
    read_json::<GraphFile>(path)?.to_graph()
}

pub fn write_graph(path: &Path, g: &WeightedGraph) -> Result<()> {
    write_json(path, &GraphFile::from(g))
}

pub fn read_partition(path: &Path) -> Result<VertexPartition> {
    read_json::<PartitionFile>(path)?.to_partition()
}

pub fn write_partition(path: &Path, p: &VertexPartition) -> Result<()> {
    write_json(path, &PartitionFile::from(p))
}

/// A vector given as a JSON file, an inline JSON array, or comma-separated
/// numbers.
pub fn parse_vector(arg: &str) -> Result<Vec<f64>> {
    let path = Path::new(arg);
    if path.is_file() {
        return read_json(path);
    }
    let trimmed = arg.trim();
    if trimmed.starts_with('[') {
        return Ok(serde_json::from_str(trimmed)?);
    }
    trimmed
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("`{arg}` is neither a file nor a list of numbers")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_round_trip_is_exact() {
        let g = WeightedGraph::new(4, [(0, 1, 0.1 + 0.2), (1, 3, 1.0 / 3.0), (2, 3, 7.0)]).unwrap();
        let text = serde_json::to_string(&GraphFile::from(&g)).unwrap();
        let back: GraphFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_graph().unwrap(), g);
    }

    #[test]
    fn rejects_reversed_edges() {
        let f = GraphFile {
            n: 2,
            edges: vec![(1, 0, 1.0)],
        };
        assert!(f.to_graph().is_err());
    }

    #[test]
    fn vector_forms() {
        assert_eq!(parse_vector("1, 2.5,-3").unwrap(), vec![1.0, 2.5, -3.0]);
        assert_eq!(parse_vector("[0.5, 1]").unwrap(), vec![0.5, 1.0]);
        assert!(parse_vector("abc").is_err());
    }
}
