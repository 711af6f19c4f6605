//! Sources of random overlap matrices.
//!
//! Every estimator in the crate talks to an [`OverlapSampler`]: a random
//! probability measure (one draw of which is a [`MeasureRealization`]) from
//! which replicas are sampled iid. Concrete samplers are registered by name
//! in a [`SamplerRegistry`] and built at runtime from JSON parameters:
//!
//! | name             | measure                                                  |
//! |------------------|----------------------------------------------------------|
//! | `sk`             | exact finite-N Gibbs measure (optionally perturbed)      |
//! | `sk-sorted`      | as `sk`, replicas emitted in increasing-energy order     |
//! | `rpc-coalescent` | RPC via the time-changed Bolthausen–Sznitman coalescent  |
//! | `rpc-cascade`    | RPC via the Poisson–Dirichlet cascade (optionally Φ_λ)   |
//! | `sphere`         | uniform measure on the unit sphere of `R^d`             |
//! | `samples`        | bootstrap over overlap matrices read from JSON lines     |

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::observables::OverlapMatrix;
use crate::rng::SimRng;
use crate::{Error, Result};

mod cascade;
mod samples;
mod sk;
mod sphere;
mod time_change;

pub use cascade::{CascadeParams, CascadeSampler};
pub use samples::{SamplesFileSampler, SamplesParams};
pub use sk::{BetaSpec, SkParams, SkSampler};
pub use sphere::{SphereParams, SphereSampler};
pub use time_change::{TimeChangeParams, TimeChangeSampler};

/// Value set the overlaps of a sampler live on; used to decide exact
/// coincidence of two overlaps without floating-point false negatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lattice {
    /// Integer multiples of `step` (hypercube oracles: `2/N`).
    Grid { step: f64 },
    /// Values are copied from a finite set (RPC breakpoints); bitwise
    /// equality is exact.
    Exact,
    /// Continuous law; coincidences have probability zero.
    Continuous,
}

impl Lattice {
    /// Canonical key such that two overlaps coincide iff their keys match.
    pub fn key(&self, q: f64) -> i64 {
        match self {
            Lattice::Grid { step } => (q / step).round() as i64,
            Lattice::Exact | Lattice::Continuous => (q + 0.0).to_bits() as i64,
        }
    }

    pub fn coincide(&self, a: f64, b: f64) -> bool {
        self.key(a) == self.key(b)
    }
}

/// One realization of the random measure. Replica sets drawn from it are iid
/// given the realization.
pub trait MeasureRealization: Send + Sync {
    /// Overlap matrix of `s` fresh replicas.
    fn sample(&self, s: usize, rng: &mut SimRng) -> Result<OverlapMatrix>;
}

/// A random probability measure on the unit ball, observed through the
/// overlaps of sampled replicas.
pub trait OverlapSampler: Send + Sync {
    /// Short human-readable description used in reports.
    fn label(&self) -> String;

    fn lattice(&self) -> Lattice;

    /// Draw fresh randomness of the measure (disorder, cascade, ...).
    fn realize(&self, rng: &mut SimRng) -> Result<Box<dyn MeasureRealization>>;

    /// Largest replica count a realization can serve, if bounded.
    fn max_replicas(&self) -> Option<usize> {
        None
    }
}

impl<T: OverlapSampler + ?Sized> OverlapSampler for Arc<T> {
    fn label(&self) -> String {
        (**self).label()
    }
    fn lattice(&self) -> Lattice {
        (**self).lattice()
    }
    fn realize(&self, rng: &mut SimRng) -> Result<Box<dyn MeasureRealization>> {
        (**self).realize(rng)
    }
    fn max_replicas(&self) -> Option<usize> {
        (**self).max_replicas()
    }
}

/// Builds a sampler from its JSON parameter object.
pub type SamplerFactory = fn(&Value) -> Result<Box<dyn OverlapSampler>>;

/// Name → factory table.
#[derive(Clone, Default)]
pub struct SamplerRegistry {
    factories: BTreeMap<String, SamplerFactory>,
}

impl fmt::Debug for SamplerRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl SamplerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with every sampler shipped by the crate.
    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        r.register("sk", sk::build_sk);
        r.register("sk-sorted", sk::build_sorted);
        r.register("rpc-coalescent", time_change::build);
        r.register("rpc-cascade", cascade::build);
        r.register("sphere", sphere::build);
        r.register("samples", samples::build);
        r
    }

    /// Adds or replaces the factory under `name`.
    pub fn register(&mut self, name: &str, factory: SamplerFactory) {
        self.factories.insert(name.to_owned(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, params: &Value) -> Result<Box<dyn OverlapSampler>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::invalid(format!(
                "unknown sampler {name:?}; known: {}",
                self.factories.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(params)
    }

    /// Build from an object carrying its sampler name under `"kind"` next to
    /// the sampler's own parameters.
    pub fn build_tagged(&self, spec: &Value) -> Result<Box<dyn OverlapSampler>> {
        let mut params = spec
            .as_object()
            .cloned()
            .ok_or_else(|| Error::invalid("sampler spec must be an object"))?;
        let kind = params
            .remove("kind")
            .and_then(|k| k.as_str().map(str::to_owned))
            .ok_or_else(|| Error::invalid("sampler spec needs a string \"kind\""))?;
        self.build(&kind, &Value::Object(params))
    }
}

/// Deserialize typed parameters, rejecting unknown keys.
pub(crate) fn parse_params<T: DeserializeOwned>(kind: &str, params: &Value) -> Result<T> {
    let params = if params.is_null() {
        Value::Object(Default::default())
    } else {
        params.clone()
    };
    serde_json::from_value(params).map_err(|e| Error::invalid(format!("{kind} parameters: {e}")))
}

/// A realization with no randomness of its own: every replica set is drawn
/// directly from the annealed law by `draw`.
pub(crate) struct Annealed<F>(pub F);

impl<F> MeasureRealization for Annealed<F>
where
    F: Fn(usize, &mut SimRng) -> Result<OverlapMatrix> + Send + Sync,
{
    fn sample(&self, s: usize, rng: &mut SimRng) -> Result<OverlapMatrix> {
        (self.0)(s, rng)
    }
}
