//! RPC overlaps from the time-changed coalescent.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_params, Annealed, Lattice, MeasureRealization, OverlapSampler};
use crate::rng::SimRng;
use crate::rpc::{rpc_overlaps, ParameterFunction};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeChangeParams {
    pub x: ParameterFunction,
}

/// The coalescent yields replica sets from the annealed law directly, so a
/// realization carries no state and every sample runs a fresh coalescent.
/// Expectations of the form `E̅ μ^{⊗s}(·)` are unaffected.
#[derive(Debug, Clone)]
pub struct TimeChangeSampler {
    x: ParameterFunction,
}

impl TimeChangeSampler {
    pub fn new(params: TimeChangeParams) -> Result<Self> {
        Ok(Self { x: params.x })
    }

    pub fn parameter(&self) -> &ParameterFunction {
        &self.x
    }
}

impl OverlapSampler for TimeChangeSampler {
    fn label(&self) -> String {
        format!("rpc-coalescent(q={:?}, m={:?})", self.x.breakpoints(), self.x.values())
    }

    fn lattice(&self) -> Lattice {
        Lattice::Exact
    }

    fn realize(&self, _rng: &mut SimRng) -> Result<Box<dyn MeasureRealization>> {
        let x = self.x.clone();
        Ok(Box::new(Annealed(move |s, rng: &mut SimRng| rpc_overlaps(&x, s, rng))))
    }
}

pub(super) fn build(params: &Value) -> Result<Box<dyn OverlapSampler>> {
    Ok(Box::new(TimeChangeSampler::new(parse_params("rpc-coalescent", params)?)?))
}
