//! Exact finite-N Gibbs measures as overlap samplers.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_params, Lattice, MeasureRealization, OverlapSampler};
use crate::gibbs::{build_gibbs_capped, build_perturbed_gibbs, code_overlap, GibbsTable, DEFAULT_MAX_N};
use crate::model::{CovarianceFunction, DisorderRealization};
use crate::observables::OverlapMatrix;
use crate::rng::SimRng;
use crate::{Error, Result};

/// Inverse temperature: a single value, or a window of values of which each
/// realization picks one uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Single(f64),
    Window(Vec<f64>),
}

impl BetaSpec {
    /// `points` equally spaced values on `[center - half_width, center + half_width]`.
    pub fn window(center: f64, half_width: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::invalid("a beta window needs at least two points"));
        }
        let lo = center - half_width;
        let step = 2.0 * half_width / (points - 1) as f64;
        Ok(BetaSpec::Window((0..points).map(|i| lo + step * i as f64).collect()))
    }

    pub fn values(&self) -> &[f64] {
        match self {
            BetaSpec::Single(b) => std::slice::from_ref(b),
            BetaSpec::Window(v) => v,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.values();
        if v.is_empty() || v.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(Error::domain(format!("inverse temperatures {v:?} must be finite and ≥ 0")));
        }
        Ok(())
    }

    fn pick(&self, rng: &mut SimRng) -> f64 {
        match self {
            BetaSpec::Single(b) => *b,
            BetaSpec::Window(v) => v[rng.random_range(0..v.len())],
        }
    }
}

impl Default for BetaSpec {
    fn default() -> Self {
        BetaSpec::Single(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkParams {
    pub n: usize,
    pub beta: BetaSpec,
    pub xi: CovarianceFunction,
    /// Strength of the independent perturbation `λK`.
    pub lambda: f64,
    pub max_n: usize,
}

impl Default for SkParams {
    fn default() -> Self {
        Self {
            n: 12,
            beta: BetaSpec::default(),
            xi: CovarianceFunction::sk(),
            lambda: 0.0,
            max_n: DEFAULT_MAX_N,
        }
    }
}

/// Each realization draws fresh disorder (and perturbation disorder when
/// `λ > 0`) and enumerates the Gibbs measure. With `sorted`, the replicas of
/// every sample are emitted in order of decreasing Gibbs weight, which
/// breaks exchangeability on purpose.
#[derive(Debug, Clone)]
pub struct SkSampler {
    params: SkParams,
    sorted: bool,
}

impl SkSampler {
    pub fn new(params: SkParams) -> Result<Self> {
        params.beta.validate()?;
        if params.n == 0 {
            return Err(Error::invalid("system size must be positive"));
        }
        if params.n > params.max_n {
            return Err(Error::Capacity {
                what: "system size for enumeration",
                requested: params.n,
                limit: params.max_n,
            });
        }
        if !(params.lambda >= 0.0) || !params.lambda.is_finite() {
            return Err(Error::domain(format!("lambda {} must be ≥ 0", params.lambda)));
        }
        Ok(Self { params, sorted: false })
    }

    pub fn sorted(params: SkParams) -> Result<Self> {
        Ok(Self {
            sorted: true,
            ..Self::new(params)?
        })
    }

    pub fn params(&self) -> &SkParams {
        &self.params
    }

    /// The Gibbs table of one realization.
    pub fn table(&self, rng: &mut SimRng) -> Result<GibbsTable> {
        let p = &self.params;
        let beta = p.beta.pick(rng);
        let d = DisorderRealization::generate(rng.random(), p.n, &p.xi)?;
        if p.lambda > 0.0 {
            let k = DisorderRealization::generate(rng.random(), p.n, &p.xi)?;
            build_perturbed_gibbs(&d, &k, beta, p.lambda)
        } else {
            build_gibbs_capped(&d, beta, p.max_n)
        }
    }
}

struct SkRealization {
    table: GibbsTable,
    sorted: bool,
}

impl MeasureRealization for SkRealization {
    fn sample(&self, s: usize, rng: &mut SimRng) -> Result<OverlapMatrix> {
        let mut codes: Vec<u64> = (0..s).map(|_| self.table.sample_code(rng)).collect();
        if self.sorted {
            let lw = self.table.log_weights();
            codes.sort_by(|&a, &b| lw[b as usize].total_cmp(&lw[a as usize]).then(a.cmp(&b)));
        }
        Ok(OverlapMatrix::from_fn(s, |i, j| code_overlap(&self.table, codes[i], codes[j])))
    }
}

impl OverlapSampler for SkSampler {
    fn label(&self) -> String {
        let betas = self.params.beta.values();
        let beta = if betas.len() == 1 {
            format!("{}", betas[0])
        } else {
            format!("{}..{}", betas[0], betas[betas.len() - 1])
        };
        format!(
            "{}(n={}, beta={beta}{})",
            if self.sorted { "sk-sorted" } else { "sk" },
            self.params.n,
            if self.params.lambda > 0.0 { format!(", lambda={}", self.params.lambda) } else { String::new() }
        )
    }

    fn lattice(&self) -> Lattice {
        Lattice::Grid {
            step: 2.0 / self.params.n as f64,
        }
    }

    fn realize(&self, rng: &mut SimRng) -> Result<Box<dyn MeasureRealization>> {
        Ok(Box::new(SkRealization {
            table: self.table(rng)?,
            sorted: self.sorted,
        }))
    }
}

pub(super) fn build_sk(params: &Value) -> Result<Box<dyn OverlapSampler>> {
    Ok(Box::new(SkSampler::new(parse_params("sk", params)?)?))
}

pub(super) fn build_sorted(params: &Value) -> Result<Box<dyn OverlapSampler>> {
    Ok(Box::new(SkSampler::sorted(parse_params("sk-sorted", params)?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use serde_json::json;

    #[test]
    fn params_from_json() {
        let p: SkParams = parse_params("sk", &json!({"n": 8, "beta": [0.9, 1.0, 1.1]})).unwrap();
        assert_eq!(p.beta.values(), &[0.9, 1.0, 1.1]);
        assert_eq!(p.xi, CovarianceFunction::sk());
        let p: SkParams = parse_params("sk", &json!({"beta": 0.5, "xi": {"3": 1.0}})).unwrap();
        assert_eq!(p.beta, BetaSpec::Single(0.5));
        assert!(parse_params::<SkParams>("sk", &json!({"N": 8})).is_err());
        assert!(build_sk(&json!({"n": 30})).is_err());
        assert!(build_sk(&json!({"beta": -1.0})).is_err());
    }

    #[test]
    fn window() {
        let w = BetaSpec::window(1.5, 0.05, 5).unwrap();
        let v = w.values();
        assert_eq!(v.len(), 5);
        assert!((v[0] - 1.45).abs() < 1e-12 && (v[4] - 1.55).abs() < 1e-12);
        assert!((v[2] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn samples_are_valid_and_sorted_variant_orders_by_weight() {
        let params = SkParams { n: 8, ..SkParams::default() };
        let plain = SkSampler::new(params.clone()).unwrap();
        let sorted = SkSampler::sorted(params).unwrap();
        let mut a = stream(1, 0, 0);
        let mut b = a.clone();
        let ra = plain.realize(&mut a).unwrap();
        let rb = sorted.realize(&mut b).unwrap();
        for _ in 0..50 {
            let qa = ra.sample(4, &mut a).unwrap();
            let qb = rb.sample(4, &mut b).unwrap();
            assert!(qa.min_eigenvalue() > -1e-10);
            let mut x: Vec<f64> = qa.rows().concat();
            let mut y: Vec<f64> = qb.rows().concat();
            x.sort_by(f64::total_cmp);
            y.sort_by(f64::total_cmp);
            assert_eq!(x, y);
        }
        assert_eq!(plain.lattice(), Lattice::Grid { step: 0.25 });
        assert!(sorted.label().starts_with("sk-sorted"));
    }
}
