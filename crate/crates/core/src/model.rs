//! Spin configurations, covariance functions and Gaussian disorder.
//!
//! A mixed p-spin Hamiltonian with covariance function `ξ(q) = Σ_p c_p q^p`
//! is realised as
//!
//! ```text
//! H(σ) = Σ_p √c_p · N^{-(p-1)/2} · Σ_{i₁..i_p} J^{(p)}_{i₁..i_p} σ_{i₁}···σ_{i_p}
//! ```
//!
//! with the inner sum over *all* ordered p-tuples (repeats included) and iid
//! standard Gaussian couplings. Then `E[H(σ)H(σ')] = N ξ(q_{σσ'})` holds
//! exactly at every `N`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;
use crate::{Error, Result};

/// Largest system size for which disorder tensors are materialised.
pub const MAX_DISORDER_N: usize = 24;
/// Largest interaction degree supported.
pub const MAX_DEGREE: u32 = 3;

/// A point of the hypercube `{-1, +1}^N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    spins: Vec<i8>,
}

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::invalid("a configuration needs at least one spin"));
        }
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::invalid(format!("spin value {bad} is not ±1")));
        }
        Ok(Self { spins })
    }

    /// Decode a bit-code: bit `i` set means spin `i` is `+1`.
    pub fn from_code(code: u64, n: usize) -> Self {
        assert!((1..=64).contains(&n), "bit-codes cover 1..=64 spins");
        let spins = (0..n)
            .map(|i| if (code >> i) & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { spins }
    }

    /// Inverse of [`from_code`](Self::from_code).
    pub fn code(&self) -> u64 {
        assert!(self.spins.len() <= 64, "bit-codes cover at most 64 spins");
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .fold(0u64, |acc, (i, _)| acc | (1 << i))
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Every spin reversed.
    pub fn flipped(&self) -> Self {
        Self {
            spins: self.spins.iter().map(|s| -s).collect(),
        }
    }

    pub(crate) fn as_f64(&self) -> Vec<f64> {
        self.spins.iter().map(|&s| f64::from(s)).collect()
    }
}

fn check_same_len(a: &SpinConfiguration, b: &SpinConfiguration) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Normalised inner product `(1/N) Σ σ_i σ'_i`.
pub fn overlap(a: &SpinConfiguration, b: &SpinConfiguration) -> Result<f64> {
    check_same_len(a, b)?;
    let dot: i64 = a
        .spins
        .iter()
        .zip(&b.spins)
        .map(|(&x, &y)| i64::from(x * y))
        .sum();
    Ok(dot as f64 / a.len() as f64)
}

/// Number of coordinates where the configurations differ; equals
/// `(N/2)(1 - q)`.
pub fn hamming_distance(a: &SpinConfiguration, b: &SpinConfiguration) -> Result<usize> {
    check_same_len(a, b)?;
    Ok(a.spins.iter().zip(&b.spins).filter(|(x, y)| x != y).count())
}

/// Overlap of two bit-coded configurations of `n` spins.
#[inline]
pub(crate) fn overlap_of_codes(a: u64, b: u64, n: usize) -> f64 {
    let differ = (a ^ b).count_ones() as i64;
    (n as i64 - 2 * differ) as f64 / n as f64
}

/// `ξ(q) = Σ_p c_p q^p` with nonnegative coefficients.
///
/// Serialised as a JSON/TOML map from degree (as a string) to coefficient,
/// e.g. `{"2": 1.0}` for the SK model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct CovarianceFunction {
    coefficients: BTreeMap<u32, f64>,
}

impl CovarianceFunction {
    pub fn new(coefficients: BTreeMap<u32, f64>) -> Result<Self> {
        let mut kept = BTreeMap::new();
        for (&p, &c) in &coefficients {
            if p == 0 {
                return Err(Error::invalid("covariance degrees start at 1"));
            }
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::invalid(format!(
                    "coefficient c_{p} = {c} must be finite and nonnegative"
                )));
            }
            if c > 0.0 {
                kept.insert(p, c);
            }
        }
        if kept.is_empty() {
            return Err(Error::invalid("at least one coefficient must be positive"));
        }
        Ok(Self { coefficients: kept })
    }

    /// Sherrington–Kirkpatrick: `ξ(q) = q²`.
    pub fn sk() -> Self {
        Self {
            coefficients: BTreeMap::from([(2, 1.0)]),
        }
    }

    /// Pure p-spin: `ξ(q) = q^p`.
    pub fn pure(p: u32) -> Result<Self> {
        Self::new(BTreeMap::from([(p, 1.0)]))
    }

    pub fn eval(&self, q: f64) -> f64 {
        self.coefficients
            .iter()
            .map(|(&p, &c)| c * q.powi(p as i32))
            .sum()
    }

    pub fn max_degree(&self) -> u32 {
        *self.coefficients.keys().next_back().expect("nonempty")
    }

    /// `(p, c_p)` for the active degrees, ascending.
    pub fn terms(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.coefficients.iter().map(|(&p, &c)| (p, c))
    }

    /// True when every active degree is even, so `H(σ) = H(-σ)`.
    pub fn is_even(&self) -> bool {
        self.coefficients.keys().all(|p| p % 2 == 0)
    }
}

impl TryFrom<BTreeMap<String, f64>> for CovarianceFunction {
    type Error = Error;

    fn try_from(map: BTreeMap<String, f64>) -> Result<Self> {
        let mut coefficients = BTreeMap::new();
        for (k, v) in map {
            let p: u32 = k
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("covariance degree {k:?} is not an integer")))?;
            coefficients.insert(p, v);
        }
        Self::new(coefficients)
    }
}

impl From<CovarianceFunction> for BTreeMap<String, f64> {
    fn from(xi: CovarianceFunction) -> Self {
        xi.coefficients
            .into_iter()
            .map(|(p, c)| (p.to_string(), c))
            .collect()
    }
}

/// Couplings of one interaction degree, stored densely in row-major tuple
/// order `(i₁, …, i_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTensor {
    pub degree: u32,
    /// `√c_p · N^{-(p-1)/2}`.
    pub scale: f64,
    pub values: Vec<f64>,
}

/// The Gaussian couplings of one Hamiltonian.
///
/// Fully determined by `(seed, n, ξ)`: the tensor of degree `p` is filled in
/// tuple order from `ChaCha8Rng::seed_from_u64(seed)` switched to stream `p`,
/// drawing `StandardNormal` (ziggurat) variates.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderRealization {
    seed: u64,
    n: usize,
    xi: CovarianceFunction,
    tensors: Vec<CouplingTensor>,
}

impl DisorderRealization {
    pub fn generate(seed: u64, n: usize, xi: &CovarianceFunction) -> Result<Self> {
        Self::check_shape(n, xi)?;
        let tensors = xi
            .terms()
            .map(|(p, c)| {
                let mut rng = SimRng::seed_from_u64(seed);
                rng.set_stream(u64::from(p));
                let len = n.pow(p);
                let values = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
                CouplingTensor {
                    degree: p,
                    scale: coupling_scale(c, p, n),
                    values,
                }
            })
            .collect();
        Ok(Self {
            seed,
            n,
            xi: xi.clone(),
            tensors,
        })
    }

    /// Build from explicit coupling values, one vector per active degree of
    /// `xi` in ascending degree order.
    pub fn from_couplings(
        seed: u64,
        n: usize,
        xi: &CovarianceFunction,
        couplings: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::check_shape(n, xi)?;
        let terms: Vec<_> = xi.terms().collect();
        if terms.len() != couplings.len() {
            return Err(Error::Dimension {
                expected: terms.len(),
                found: couplings.len(),
            });
        }
        let tensors = terms
            .into_iter()
            .zip(couplings)
            .map(|((p, c), values)| {
                if values.len() != n.pow(p) {
                    return Err(Error::Dimension {
                        expected: n.pow(p),
                        found: values.len(),
                    });
                }
                Ok(CouplingTensor {
                    degree: p,
                    scale: coupling_scale(c, p, n),
                    values,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            seed,
            n,
            xi: xi.clone(),
            tensors,
        })
    }

    fn check_shape(n: usize, xi: &CovarianceFunction) -> Result<()> {
        if n == 0 {
            return Err(Error::invalid("system size must be positive"));
        }
        if n > MAX_DISORDER_N {
            return Err(Error::Capacity {
                what: "system size",
                requested: n,
                limit: MAX_DISORDER_N,
            });
        }
        if xi.max_degree() > MAX_DEGREE {
            return Err(Error::Capacity {
                what: "interaction degree",
                requested: xi.max_degree() as usize,
                limit: MAX_DEGREE as usize,
            });
        }
        Ok(())
    }

    /// Couplings of `self` and `other` added entrywise. The Hamiltonian is
    /// linear in the couplings, so `H_{a+b} = H_a + H_b`.
    pub fn combined_with(&self, other: &DisorderRealization) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Dimension {
                expected: self.n,
                found: other.n,
            });
        }
        if self.xi != other.xi {
            return Err(Error::invalid("cannot combine disorder with different ξ"));
        }
        let tensors = self
            .tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| CouplingTensor {
                degree: a.degree,
                scale: a.scale,
                values: a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect(),
            })
            .collect();
        Ok(Self {
            seed: self.seed,
            n: self.n,
            xi: self.xi.clone(),
            tensors,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xi(&self) -> &CovarianceFunction {
        &self.xi
    }

    pub fn tensors(&self) -> &[CouplingTensor] {
        &self.tensors
    }
}

fn coupling_scale(c: f64, p: u32, n: usize) -> f64 {
    c.sqrt() * (n as f64).powf(-(f64::from(p) - 1.0) / 2.0)
}

/// Contract a dense `n^p` tensor against `spins` in every slot.
fn contract(values: &[f64], p: u32, spins: &[f64]) -> f64 {
    let n = spins.len();
    let mut current = values.to_vec();
    for _ in 0..p {
        current = current
            .chunks_exact(n)
            .map(|row| row.iter().zip(spins).map(|(j, s)| j * s).sum())
            .collect();
    }
    current[0]
}

/// Direct evaluation of `H(σ)` from the coupling tensors.
pub fn hamiltonian(d: &DisorderRealization, sigma: &SpinConfiguration) -> Result<f64> {
    if sigma.len() != d.n {
        return Err(Error::Dimension {
            expected: d.n,
            found: sigma.len(),
        });
    }
    let spins = sigma.as_f64();
    Ok(d
        .tensors
        .iter()
        .map(|t| t.scale * contract(&t.values, t.degree, &spins))
        .sum())
}

/// The perturbation field `K(σ) = H_{d'}(σ) / √N`, with covariance
/// `E[K(σ)K(σ')] = ξ(q_{σσ'})`.
pub fn perturbation_field(d: &DisorderRealization, sigma: &SpinConfiguration) -> Result<f64> {
    Ok(hamiltonian(d, sigma)? / (d.n as f64).sqrt())
}

/// The JSON record that stands in for a disorder realization in manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRecord {
    pub seed: u64,
    pub n: usize,
    pub xi: CovarianceFunction,
}

impl From<&DisorderRealization> for DisorderRecord {
    fn from(d: &DisorderRealization) -> Self {
        Self {
            seed: d.seed,
            n: d.n,
            xi: d.xi.clone(),
        }
    }
}

impl DisorderRecord {
    pub fn regenerate(&self) -> Result<DisorderRealization> {
        DisorderRealization::generate(self.seed, self.n, &self.xi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_and_std_error;
    use proptest::prelude::*;
    use rand::Rng;

    fn config(spins: &[i8]) -> SpinConfiguration {
        SpinConfiguration::new(spins.to_vec()).unwrap()
    }

    #[test]
    fn overlap_edge_cases() {
        let a = config(&[1, -1, 1, 1]);
        assert_eq!(overlap(&a, &a).unwrap(), 1.0);
        assert_eq!(overlap(&a, &a.flipped()).unwrap(), -1.0);
        let b = config(&[1, -1, 1, -1]);
        let q = overlap(&a, &b).unwrap();
        assert_eq!(q, 0.5);
        assert_eq!(hamming_distance(&a, &b).unwrap(), 1);
        assert_eq!(4.0 / 2.0 * (1.0 - q), 1.0);
    }

    #[test]
    fn overlap_rejects_size_mismatch() {
        let a = config(&[1, 1]);
        let b = config(&[1, 1, 1]);
        assert!(matches!(overlap(&a, &b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn configuration_validation() {
        assert!(SpinConfiguration::new(vec![]).is_err());
        assert!(SpinConfiguration::new(vec![1, 0]).is_err());
        let s = SpinConfiguration::from_code(0b101, 3);
        assert_eq!(s.spins(), &[1, -1, 1]);
        assert_eq!(s.code(), 0b101);
    }

    #[test]
    fn covariance_serde_and_validation() {
        let xi: CovarianceFunction = serde_json::from_str(r#"{"2": 1.0, "3": 0.5}"#).unwrap();
        assert_eq!(xi.eval(1.0), 1.5);
        assert_eq!(xi.max_degree(), 3);
        assert_eq!(serde_json::to_string(&CovarianceFunction::sk()).unwrap(), r#"{"2":1.0}"#);
        assert!(serde_json::from_str::<CovarianceFunction>(r#"{"2": 0.0}"#).is_err());
        assert!(serde_json::from_str::<CovarianceFunction>(r#"{"0": 1.0}"#).is_err());
        assert!(serde_json::from_str::<CovarianceFunction>(r#"{"x": 1.0}"#).is_err());
        assert!(serde_json::from_str::<CovarianceFunction>(r#"{"2": -1.0}"#).is_err());
    }

    #[test]
    fn capacity_is_enforced() {
        let sk = CovarianceFunction::sk();
        assert!(matches!(
            DisorderRealization::generate(1, 25, &sk),
            Err(Error::Capacity { .. })
        ));
        let p4 = CovarianceFunction::pure(4).unwrap();
        assert!(matches!(
            DisorderRealization::generate(1, 4, &p4),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn single_spin_sk_is_constant() {
        let d = DisorderRealization::generate(9, 1, &CovarianceFunction::sk()).unwrap();
        let up = hamiltonian(&d, &config(&[1])).unwrap();
        let down = hamiltonian(&d, &config(&[-1])).unwrap();
        assert_eq!(up, down);
        assert_eq!(up, d.tensors()[0].values[0]);
    }

    #[test]
    fn p1_covariance_by_expansion() {
        // H(σ) = Σ J_i σ_i, so E[H H'] = Σ σ_i σ'_i: check the coefficient of
        // every J_i J_j product directly.
        let n = 5;
        let xi = CovarianceFunction::pure(1).unwrap();
        let a = config(&[1, -1, 1, 1, -1]);
        let b = config(&[1, 1, -1, 1, -1]);
        let basis = |i: usize| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            DisorderRealization::from_couplings(0, n, &xi, vec![v]).unwrap()
        };
        let cov: f64 = (0..n)
            .map(|i| {
                let d = basis(i);
                hamiltonian(&d, &a).unwrap() * hamiltonian(&d, &b).unwrap()
            })
            .sum();
        assert_eq!(cov, n as f64 * overlap(&a, &b).unwrap());
    }

    #[test]
    fn generation_is_reproducible() {
        let xi = CovarianceFunction::new(BTreeMap::from([(2, 1.0), (3, 0.5)])).unwrap();
        let a = DisorderRealization::generate(11, 6, &xi).unwrap();
        let b = DisorderRealization::generate(11, 6, &xi).unwrap();
        assert_eq!(a, b);
        let c = DisorderRealization::generate(12, 6, &xi).unwrap();
        assert_ne!(a, c);
        // Adding a degree does not perturb the others.
        let sk = DisorderRealization::generate(11, 6, &CovarianceFunction::sk()).unwrap();
        assert_eq!(sk.tensors()[0].values, a.tensors()[0].values);
    }

    #[test]
    fn record_round_trip() {
        let d = DisorderRealization::generate(5, 4, &CovarianceFunction::sk()).unwrap();
        let rec = DisorderRecord::from(&d);
        let json = serde_json::to_string(&rec).unwrap();
        assert_eq!(json, r#"{"seed":5,"n":4,"xi":{"2":1.0}}"#);
        let back: DisorderRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.regenerate().unwrap(), d);
    }

    /// Monte Carlo covariance oracle: sample covariance over many disorder
    /// draws against `scale · ξ(q)`.
    fn covariance_z(
        n: usize,
        xi: &CovarianceFunction,
        a: &SpinConfiguration,
        b: &SpinConfiguration,
        draws: u64,
        field: fn(&DisorderRealization, &SpinConfiguration) -> Result<f64>,
        target: f64,
    ) -> f64 {
        let prods: Vec<f64> = (0..draws)
            .map(|k| {
                let d = DisorderRealization::generate(1000 + k, n, xi).unwrap();
                field(&d, a).unwrap() * field(&d, b).unwrap()
            })
            .collect();
        let (m, se) = mean_and_std_error(&prods);
        (m - target) / se
    }

    #[test]
    fn sk_hamiltonian_covariance() {
        let n = 8;
        let xi = CovarianceFunction::sk();
        let mut rng = crate::rng::stream(1, 0, 0);
        let a = SpinConfiguration::from_code(rng.random::<u64>() & 0xFF, n);
        let b = SpinConfiguration::from_code(rng.random::<u64>() & 0xFF, n);
        let q = overlap(&a, &b).unwrap();
        let z = covariance_z(n, &xi, &a, &b, 20_000, hamiltonian, n as f64 * q * q);
        assert!(z.abs() < 4.0, "z = {z}");
    }

    #[test]
    fn perturbation_field_variance_and_orthogonal_pair() {
        let n = 4;
        let xi = CovarianceFunction::sk();
        let a = config(&[1, 1, 1, 1]);
        let b = config(&[1, 1, -1, -1]);
        assert_eq!(overlap(&a, &b).unwrap(), 0.0);
        let z = covariance_z(n, &xi, &a, &b, 20_000, perturbation_field, 0.0);
        assert!(z.abs() < 4.0, "z = {z}");
        let z = covariance_z(n, &xi, &a, &a, 20_000, perturbation_field, xi.eval(1.0));
        assert!(z.abs() < 4.0, "z = {z}");
    }

    #[test]
    fn perturbation_is_scaled_hamiltonian() {
        let d = DisorderRealization::generate(3, 9, &CovarianceFunction::sk()).unwrap();
        let s = SpinConfiguration::from_code(0b1_0110_1001, 9);
        let h = hamiltonian(&d, &s).unwrap();
        let k = perturbation_field(&d, &s).unwrap();
        assert!((3.0 * k - h).abs() < 1e-12 * h.abs().max(1.0));
    }

    proptest! {
        #[test]
        fn overlap_is_symmetric_and_on_lattice(n in 1usize..20, a in any::<u64>(), b in any::<u64>()) {
            let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
            let x = SpinConfiguration::from_code(a & mask, n);
            let y = SpinConfiguration::from_code(b & mask, n);
            let q = overlap(&x, &y).unwrap();
            prop_assert_eq!(q, overlap(&y, &x).unwrap());
            prop_assert_eq!(overlap(&x, &x).unwrap(), 1.0);
            prop_assert_eq!(q, overlap_of_codes(a & mask, b & mask, n));
            let k = (q + 1.0) * n as f64 / 2.0;
            prop_assert!((k - k.round()).abs() < 1e-9);
            prop_assert!((hamming_distance(&x, &y).unwrap() as f64 - n as f64 / 2.0 * (1.0 - q)).abs() < 1e-9);
        }

        #[test]
        fn hamiltonian_is_linear_in_couplings(sa in any::<u64>(), sb in any::<u64>(), code in 0u64..64) {
            let xi = CovarianceFunction::new(BTreeMap::from([(1, 0.3), (2, 1.0), (3, 0.7)])).unwrap();
            let a = DisorderRealization::generate(sa, 6, &xi).unwrap();
            let b = DisorderRealization::generate(sb, 6, &xi).unwrap();
            let s = SpinConfiguration::from_code(code, 6);
            let sum = hamiltonian(&a.combined_with(&b).unwrap(), &s).unwrap();
            let parts = hamiltonian(&a, &s).unwrap() + hamiltonian(&b, &s).unwrap();
            prop_assert!((sum - parts).abs() < 1e-10 * (1.0 + parts.abs()));
        }
    }
}
