//! Uniform measure on the unit sphere, the continuous baseline.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_params, Annealed, Lattice, MeasureRealization, OverlapSampler};
use crate::observables::OverlapMatrix;
use crate::rng::SimRng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereParams {
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_dim() -> usize {
    50
}

#[derive(Debug, Clone)]
pub struct SphereSampler {
    dim: usize,
}

impl SphereSampler {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("sphere dimension must be at least 2"));
        }
        Ok(Self { dim })
    }
}

fn unit_vector(dim: usize, rng: &mut SimRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

impl OverlapSampler for SphereSampler {
    fn label(&self) -> String {
        format!("sphere(d={})", self.dim)
    }

    fn lattice(&self) -> Lattice {
        Lattice::Continuous
    }

    fn realize(&self, _rng: &mut SimRng) -> Result<Box<dyn MeasureRealization>> {
        let dim = self.dim;
        Ok(Box::new(Annealed(move |s, rng: &mut SimRng| {
            let vs: Vec<Vec<f64>> = (0..s).map(|_| unit_vector(dim, rng)).collect();
            Ok(OverlapMatrix::from_fn(s, |i, j| {
                vs[i].iter().zip(&vs[j]).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0)
            }))
        })))
    }
}

pub(super) fn build(params: &Value) -> Result<Box<dyn OverlapSampler>> {
    let p: SphereParams = parse_params("sphere", params)?;
    Ok(Box::new(SphereSampler::new(p.dim)?))
}
