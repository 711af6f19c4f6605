//! Bootstrap over stored overlap matrices.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_params, Annealed, Lattice, MeasureRealization, OverlapSampler};
use crate::observables::{read_overlap_lines, OverlapMatrix};
use crate::rng::SimRng;
use crate::{Error, Result};

/// Value set of the stored overlaps, as written in parameters:
/// `"exact"`, `"continuous"` or `{"grid": step}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LatticeSpec {
    #[default]
    Exact,
    Continuous,
    Grid(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesParams {
    pub path: PathBuf,
    #[serde(default)]
    pub lattice: LatticeSpec,
}

/// Each sample is a uniformly chosen stored matrix, restricted to its first
/// `s` replicas.
#[derive(Debug, Clone)]
pub struct SamplesFileSampler {
    label: String,
    matrices: Arc<Vec<OverlapMatrix>>,
    lattice: Lattice,
}

impl SamplesFileSampler {
    pub fn from_matrices(label: &str, matrices: Vec<OverlapMatrix>, lattice: LatticeSpec) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::invalid("no overlap matrices to resample"));
        }
        let lattice = match lattice {
            LatticeSpec::Exact => Lattice::Exact,
            LatticeSpec::Continuous => Lattice::Continuous,
            LatticeSpec::Grid(step) if step > 0.0 => Lattice::Grid { step },
            LatticeSpec::Grid(step) => return Err(Error::invalid(format!("grid step {step} must be positive"))),
        };
        Ok(Self {
            label: label.to_owned(),
            matrices: Arc::new(matrices),
            lattice,
        })
    }

    pub fn open(params: SamplesParams) -> Result<Self> {
        let matrices = read_overlap_lines(BufReader::new(File::open(&params.path)?))?;
        Self::from_matrices(&format!("samples({})", params.path.display()), matrices, params.lattice)
    }
}

impl OverlapSampler for SamplesFileSampler {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn lattice(&self) -> Lattice {
        self.lattice
    }

    fn max_replicas(&self) -> Option<usize> {
        self.matrices.iter().map(OverlapMatrix::s).min()
    }

    fn realize(&self, _rng: &mut SimRng) -> Result<Box<dyn MeasureRealization>> {
        let matrices = Arc::clone(&self.matrices);
        Ok(Box::new(Annealed(move |s, rng: &mut SimRng| {
            matrices[rng.random_range(0..matrices.len())].leading(s)
        })))
    }
}

pub(super) fn build(params: &Value) -> Result<Box<dyn OverlapSampler>> {
    Ok(Box::new(SamplesFileSampler::open(parse_params("samples", params)?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::write_overlap_lines;
    use crate::rng::stream;
    use serde_json::json;

    #[test]
    fn resamples_from_file() {
        let dir = std::env::temp_dir().join(format!("spinglass-samples-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("q.jsonl");
        let q = OverlapMatrix::new(vec![vec![1.0, 0.5, 0.0], vec![0.5, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        write_overlap_lines(File::create(&path).unwrap(), std::slice::from_ref(&q)).unwrap();
        let s = build(&json!({"path": path, "lattice": {"grid": 0.5}})).unwrap();
        assert_eq!(s.lattice(), Lattice::Grid { step: 0.5 });
        assert_eq!(s.max_replicas(), Some(3));
        let mut rng = stream(0, 0, 0);
        let m = s.realize(&mut rng).unwrap();
        assert_eq!(m.sample(2, &mut rng).unwrap(), q.leading(2).unwrap());
        assert!(m.sample(4, &mut rng).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
