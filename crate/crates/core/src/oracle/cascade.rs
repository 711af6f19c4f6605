//! RPC overlaps from an explicit Poisson–Dirichlet cascade, optionally
//! reweighted by `Φ_λ`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_params, Lattice, MeasureRealization, OverlapSampler};
use crate::model::CovarianceFunction;
use crate::observables::OverlapMatrix;
use crate::rng::SimRng;
use crate::rpc::{pd_cascade, phi_lambda, sample_from_directing, DiscreteDirectingMeasure, ParameterFunction, DEFAULT_TRUNCATION, MIN_TRUNCATION};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeParams {
    pub x: ParameterFunction,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "CovarianceFunction::sk")]
    pub cov: CovarianceFunction,
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}

impl CascadeParams {
    pub fn new(x: ParameterFunction) -> Self {
        Self {
            x,
            truncation: DEFAULT_TRUNCATION,
            lambda: 0.0,
            cov: CovarianceFunction::sk(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CascadeSampler {
    params: CascadeParams,
}

impl CascadeSampler {
    pub fn new(params: CascadeParams) -> Result<Self> {
        let r = params.x.levels();
        if r == 0 || params.x.values()[..r].iter().any(|&m| !(m > 0.0 && m < 1.0)) {
            return Err(Error::domain("cascade parameters must lie in (0, 1)"));
        }
        if params.truncation < MIN_TRUNCATION {
            return Err(Error::invalid(format!("truncation must be at least {MIN_TRUNCATION}")));
        }
        if !(params.lambda >= 0.0) || !params.lambda.is_finite() {
            return Err(Error::domain(format!("lambda {} must be ≥ 0", params.lambda)));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &CascadeParams {
        &self.params
    }

    /// The directing measure of one realization.
    pub fn measure(&self, rng: &mut SimRng) -> Result<DiscreteDirectingMeasure> {
        let p = &self.params;
        let mu = pd_cascade(&p.x, p.truncation, rng)?;
        if p.lambda > 0.0 {
            phi_lambda(&mu, p.lambda, &p.cov, rng)
        } else {
            Ok(mu)
        }
    }
}

struct CascadeRealization(DiscreteDirectingMeasure);

impl MeasureRealization for CascadeRealization {
    fn sample(&self, s: usize, rng: &mut SimRng) -> Result<OverlapMatrix> {
        sample_from_directing(&self.0, s, rng)
    }
}

impl OverlapSampler for CascadeSampler {
    fn label(&self) -> String {
        let p = &self.params;
        let mut label = format!("rpc-cascade(q={:?}, m={:?}, M={}", p.x.breakpoints(), p.x.values(), p.truncation);
        if p.lambda > 0.0 {
            label += &format!(", lambda={}", p.lambda);
        }
        label + ")"
    }

    fn lattice(&self) -> Lattice {
        Lattice::Exact
    }

    fn realize(&self, rng: &mut SimRng) -> Result<Box<dyn MeasureRealization>> {
        Ok(Box::new(CascadeRealization(self.measure(rng)?)))
    }
}

pub(super) fn build(params: &Value) -> Result<Box<dyn OverlapSampler>> {
    Ok(Box::new(CascadeSampler::new(parse_params("rpc-cascade", params)?)?))
}
