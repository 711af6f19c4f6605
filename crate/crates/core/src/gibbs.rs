//! Exact finite-N Gibbs measures by full enumeration of the hypercube.
//!
//! Configurations are indexed by bit-code (bit `i` set ⇔ spin `i` is `+1`).
//! Energies are visited in Gray-code order so each step flips one spin and
//! costs one local-field evaluation; the energy is re-anchored by direct
//! evaluation every [`REANCHOR_PERIOD`] steps to bound round-off drift.

use std::io::{Read, Write};

use rand::Rng;

use crate::model::{overlap_of_codes, DisorderRealization, SpinConfiguration};
use crate::rng::SimRng;
use crate::stats::neumaier_sum;
use crate::{Error, Result};

/// Default cap on the system size for enumeration.
pub const DEFAULT_MAX_N: usize = 24;
const REANCHOR_PERIOD: u64 = 1 << 12;
const DUMP_MAGIC: &[u8; 4] = b"GIBB";
const DUMP_VERSION: u32 = 1;

/// The Hamiltonian rewritten as a multilinear polynomial in the spins
/// (using `σ_i² = 1`), which is what incremental updates need.
///
/// `E(σ) = c + Σ_i h_i σ_i + ½ Σ_{i≠j} P_ij σ_i σ_j + ⅙ Σ_{distinct} T_ijk σ_i σ_j σ_k`
#[derive(Debug, Clone)]
pub(crate) struct EnergyForm {
    n: usize,
    constant: f64,
    linear: Vec<f64>,
    pair: Vec<f64>,
    triple: Option<Vec<f64>>,
}

impl EnergyForm {
    fn zero(n: usize) -> Self {
        Self {
            n,
            constant: 0.0,
            linear: vec![0.0; n],
            pair: vec![0.0; n * n],
            triple: None,
        }
    }

    /// Reduce the ordered coupling tensors of `d`, each multiplied by `factor`.
    fn accumulate(&mut self, d: &DisorderRealization, factor: f64) {
        let n = self.n;
        for t in d.tensors() {
            let s = t.scale * factor;
            match t.degree {
                1 => {
                    for (h, j) in self.linear.iter_mut().zip(&t.values) {
                        *h += s * j;
                    }
                }
                2 => {
                    for i in 0..n {
                        for j in 0..n {
                            let v = s * t.values[i * n + j];
                            if i == j {
                                self.constant += v;
                            } else {
                                self.pair[i * n + j] += v;
                                self.pair[j * n + i] += v;
                            }
                        }
                    }
                }
                3 => {
                    let triple = self.triple.get_or_insert_with(|| vec![0.0; n * n * n]);
                    for i in 0..n {
                        for j in 0..n {
                            for k in 0..n {
                                let v = s * t.values[(i * n + j) * n + k];
                                if i != j && j != k && i != k {
                                    for (a, b, c) in
                                        [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)]
                                    {
                                        triple[(a * n + b) * n + c] += v;
                                    }
                                } else if i == j && j == k {
                                    self.linear[i] += v;
                                } else if i == j {
                                    self.linear[k] += v;
                                } else if i == k {
                                    self.linear[j] += v;
                                } else {
                                    self.linear[i] += v;
                                }
                            }
                        }
                    }
                }
                p => unreachable!("degree {p} rejected at generation"),
            }
        }
    }

    pub(crate) fn from_disorder(d: &DisorderRealization) -> Self {
        let mut form = Self::zero(d.n());
        form.accumulate(d, 1.0);
        form
    }

    /// `H_d + λ K_{d'}` with `K = H_{d'} / √N`.
    pub(crate) fn perturbed(
        d: &DisorderRealization,
        d_perturb: &DisorderRealization,
        lambda: f64,
    ) -> Result<Self> {
        if d.n() != d_perturb.n() {
            return Err(Error::Dimension {
                expected: d.n(),
                found: d_perturb.n(),
            });
        }
        let mut form = Self::from_disorder(d);
        if lambda != 0.0 {
            form.accumulate(d_perturb, lambda / (d.n() as f64).sqrt());
        }
        Ok(form)
    }

    /// No odd-degree monomials: the energy is invariant under a global flip.
    fn is_even(&self) -> bool {
        self.triple.is_none() && self.linear.iter().all(|&h| h == 0.0)
    }

    /// Coefficient of `σ_k` once every other spin is fixed.
    fn local_field(&self, spins: &[f64], k: usize) -> f64 {
        let n = self.n;
        let row = &self.pair[k * n..(k + 1) * n];
        let mut f = self.linear[k] + row.iter().zip(spins).map(|(p, s)| p * s).sum::<f64>();
        if let Some(t) = &self.triple {
            let block = &t[k * n * n..(k + 1) * n * n];
            let mut acc = 0.0;
            for a in 0..n {
                let r = &block[a * n..(a + 1) * n];
                acc += spins[a] * r.iter().zip(spins).map(|(x, s)| x * s).sum::<f64>();
            }
            f += 0.5 * acc;
        }
        f
    }

    fn energy(&self, spins: &[f64]) -> f64 {
        let n = self.n;
        let mut e = self.constant;
        e += self.linear.iter().zip(spins).map(|(h, s)| h * s).sum::<f64>();
        let mut pair = 0.0;
        for i in 0..n {
            let row = &self.pair[i * n..(i + 1) * n];
            pair += spins[i] * row.iter().zip(spins).map(|(p, s)| p * s).sum::<f64>();
        }
        e += 0.5 * pair;
        if let Some(t) = &self.triple {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let r = &t[(i * n + j) * n..(i * n + j + 1) * n];
                    acc += spins[i] * spins[j] * r.iter().zip(spins).map(|(x, s)| x * s).sum::<f64>();
                }
            }
            e += acc / 6.0;
        }
        e
    }

    /// Energies of all `2^n` configurations indexed by bit-code.
    fn enumerate(&self) -> Vec<f64> {
        let n = self.n;
        let even = self.is_even();
        // With a global-flip symmetry, walk the half with the top spin down
        // and mirror, so E(σ) and E(-σ) are bit-identical.
        let free = if even { n - 1 } else { n };
        let mut energies = vec![0.0; 1usize << n];
        let mut spins = vec![-1.0; n];
        let mut code: u64 = 0;
        let mut e = self.energy(&spins);
        energies[0] = e;
        for t in 1..(1u64 << free) {
            let k = t.trailing_zeros() as usize;
            e -= 2.0 * spins[k] * self.local_field(&spins, k);
            spins[k] = -spins[k];
            code ^= 1 << k;
            if t % REANCHOR_PERIOD == 0 {
                e = self.energy(&spins);
            }
            energies[code as usize] = e;
        }
        if even {
            let all = (1u64 << n) - 1;
            for c in 0..(1u64 << free) {
                energies[(c ^ all) as usize] = energies[c as usize];
            }
        }
        energies
    }
}

/// Normalised Gibbs weights `e^{-βH(σ)} / Z` for every configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsTable {
    beta: f64,
    n: usize,
    seed: u64,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    log_partition: f64,
}

fn check_cap(n: usize, max_n: usize) -> Result<()> {
    if n > max_n {
        return Err(Error::Capacity {
            what: "system size for enumeration",
            requested: n,
            limit: max_n,
        });
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::domain(format!("inverse temperature {beta} must be finite and ≥ 0")));
    }
    Ok(())
}

impl GibbsTable {
    /// Normalise unnormalised log-weights (`-βH`) by log-sum-exp.
    pub fn from_log_weights(n: usize, beta: f64, seed: u64, mut log_weights: Vec<f64>) -> Result<Self> {
        if n == 0 || n > 63 {
            return Err(Error::invalid(format!("table size n = {n} out of range")));
        }
        if log_weights.len() != 1usize << n {
            return Err(Error::Dimension {
                expected: 1 << n,
                found: log_weights.len(),
            });
        }
        if let Some(bad) = log_weights.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite log-weight {bad}")));
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_partition = max + neumaier_sum(log_weights.iter().map(|&l| (l - max).exp())).ln();
        for l in &mut log_weights {
            *l -= log_partition;
        }
        let weights: Vec<f64> = log_weights.iter().map(|l| l.exp()).collect();
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        Ok(Self {
            beta,
            n,
            seed,
            log_weights,
            weights,
            cumulative,
            log_partition,
        })
    }

    fn from_energies(n: usize, beta: f64, seed: u64, energies: Vec<f64>) -> Result<Self> {
        if let Some(bad) = energies.iter().find(|e| !e.is_finite()) {
            return Err(Error::numeric(format!("non-finite energy {bad}")));
        }
        let log_weights = energies.into_iter().map(|e| -beta * e).collect();
        Self::from_log_weights(n, beta, seed, log_weights)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Seed of the disorder the table was built from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Inverse-CDF draw of one bit-code.
    pub fn sample_code(&self, rng: &mut SimRng) -> u64 {
        let total = *self.cumulative.last().expect("nonempty table");
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.cumulative.len() - 1) as u64
    }

    /// Write the binary dump: `"GIBB"`, version, `n`, `β`, seed, then the
    /// `2^n` normalised log-weights, all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&self.beta.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for l in &self.log_weights {
            w.write_all(&l.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::invalid("not a Gibbs table dump (bad magic)"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != DUMP_VERSION {
            return Err(Error::invalid(format!("unsupported dump version {version}")));
        }
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        if n == 0 || n > DEFAULT_MAX_N {
            return Err(Error::invalid(format!("dump declares n = {n}")));
        }
        r.read_exact(&mut b8)?;
        let beta = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let mut log_weights = Vec::with_capacity(1 << n);
        for _ in 0..(1usize << n) {
            r.read_exact(&mut b8)?;
            log_weights.push(f64::from_le_bytes(b8));
        }
        Self::from_log_weights(n, beta, seed, log_weights)
    }
}

/// `μ_{β,N}(σ) ∝ e^{-βH(σ)}` by exhaustive enumeration.
pub fn build_gibbs(d: &DisorderRealization, beta: f64) -> Result<GibbsTable> {
    build_gibbs_capped(d, beta, DEFAULT_MAX_N)
}

pub fn build_gibbs_capped(d: &DisorderRealization, beta: f64, max_n: usize) -> Result<GibbsTable> {
    check_cap(d.n(), max_n)?;
    check_beta(beta)?;
    let energies = EnergyForm::from_disorder(d).enumerate();
    GibbsTable::from_energies(d.n(), beta, d.seed(), energies)
}

/// The measure with Hamiltonian `H(σ) + λ K(σ)`, `K` built from the
/// independent disorder `d_perturb`.
pub fn build_perturbed_gibbs(
    d: &DisorderRealization,
    d_perturb: &DisorderRealization,
    beta: f64,
    lambda: f64,
) -> Result<GibbsTable> {
    check_cap(d.n(), DEFAULT_MAX_N)?;
    check_beta(beta)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!("perturbation strength {lambda} must be ≥ 0")));
    }
    if d.xi() != d_perturb.xi() {
        return Err(Error::invalid("perturbation disorder must share ξ with the main disorder"));
    }
    let energies = EnergyForm::perturbed(d, d_perturb, lambda)?.enumerate();
    GibbsTable::from_energies(d.n(), beta, d.seed(), energies)
}

/// `s` iid replicas from the table.
pub fn sample_replicas(g: &GibbsTable, s: usize, rng: &mut SimRng) -> Result<Vec<SpinConfiguration>> {
    if s == 0 {
        return Err(Error::invalid("at least one replica is required"));
    }
    Ok((0..s)
        .map(|_| SpinConfiguration::from_code(g.sample_code(rng), g.n))
        .collect())
}

/// Overlap of two table indices.
pub(crate) fn code_overlap(g: &GibbsTable, a: u64, b: u64) -> f64 {
    overlap_of_codes(a, b, g.n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{hamiltonian, overlap, perturbation_field, CovarianceFunction};
    use crate::rng::stream;
    use crate::stats::mean_and_std_error;
    use std::collections::BTreeMap;

    fn sk(seed: u64, n: usize) -> DisorderRealization {
        DisorderRealization::generate(seed, n, &CovarianceFunction::sk()).unwrap()
    }

    #[test]
    fn infinite_temperature_is_uniform() {
        let g = build_gibbs(&sk(1, 6), 0.0).unwrap();
        for &w in g.weights() {
            assert!((w - 1.0 / 64.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_spin_sk_is_fair_coin() {
        for beta in [0.0, 0.7, 4.0] {
            let g = build_gibbs(&sk(2, 1), beta).unwrap();
            assert!(g.weights().iter().all(|w| (w - 0.5).abs() < 1e-15));
        }
    }

    #[test]
    fn incremental_energies_match_direct_evaluation() {
        let mixed = CovarianceFunction::new(BTreeMap::from([(1, 0.2), (2, 1.0), (3, 0.5)])).unwrap();
        for (xi, n, beta) in [
            (CovarianceFunction::sk(), 14, 1.3),
            (mixed, 10, 0.8),
            (CovarianceFunction::pure(3).unwrap(), 9, 2.0),
        ] {
            let d = DisorderRealization::generate(77, n, &xi).unwrap();
            let g = build_gibbs(&d, beta).unwrap();
            let mut rng = stream(5, 0, 0);
            for _ in 0..100 {
                let code = rng.random::<u64>() & ((1 << n) - 1);
                let sigma = SpinConfiguration::from_code(code, n);
                let direct = (-beta * hamiltonian(&d, &sigma).unwrap() - g.log_partition()).exp();
                let w = g.weights()[code as usize];
                assert!((direct - w).abs() <= 1e-10 * w, "{direct} vs {w}");
            }
        }
    }

    #[test]
    fn weights_normalised_and_positive() {
        for (n, beta) in [(12, 0.5), (16, 5.0)] {
            let g = build_gibbs(&sk(3, n), beta).unwrap();
            let total = neumaier_sum(g.weights().iter().copied());
            assert!((total - 1.0).abs() < 1e-12);
            assert!(g.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn sk_gauge_symmetry_is_exact() {
        let g = build_gibbs(&sk(4, 11), 1.7).unwrap();
        let all = (1usize << 11) - 1;
        for c in 0..=all {
            assert_eq!(g.weights()[c], g.weights()[c ^ all]);
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_gibbs(&sk(9, 13), 1.1).unwrap();
        let b = build_gibbs(&sk(9, 13), 1.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn capacity_and_domain_errors() {
        let d = sk(1, 10);
        assert!(matches!(build_gibbs_capped(&d, 1.0, 8), Err(Error::Capacity { .. })));
        assert!(matches!(build_gibbs(&d, -1.0), Err(Error::Domain(_))));
        assert!(matches!(build_gibbs(&d, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn non_finite_energy_is_numeric_error() {
        let xi = CovarianceFunction::sk();
        let d = DisorderRealization::from_couplings(0, 2, &xi, vec![vec![f64::INFINITY, 0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(build_gibbs(&d, 1.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn perturbation_edge_cases() {
        let d = sk(10, 9);
        let dp = sk(11, 9);
        assert_eq!(build_perturbed_gibbs(&d, &dp, 1.2, 0.0).unwrap(), build_gibbs(&d, 1.2).unwrap());
        let g = build_perturbed_gibbs(&d, &dp, 0.0, 0.8).unwrap();
        assert!(g.weights().iter().all(|&w| (w - 1.0 / 512.0).abs() < 1e-15));
    }

    #[test]
    fn perturbed_weights_match_direct_fields() {
        let n = 8;
        let (beta, lambda) = (0.9, 0.6);
        let d = sk(20, n);
        let dp = sk(21, n);
        let g = build_perturbed_gibbs(&d, &dp, beta, lambda).unwrap();
        for code in [0u64, 5, 77, 200, 255] {
            let s = SpinConfiguration::from_code(code, n);
            let e = hamiltonian(&d, &s).unwrap() + lambda * perturbation_field(&dp, &s).unwrap();
            let direct = (-beta * e - g.log_partition()).exp();
            assert!((direct - g.weights()[code as usize]).abs() < 1e-10 * direct);
        }
    }

    #[test]
    fn uniform_sampling_statistics() {
        let n = 10;
        let g = build_gibbs(&sk(1, n), 0.0).unwrap();
        let mut rng = stream(8, 0, 0);
        let draws = 100_000;
        let m: Vec<f64> = (0..draws)
            .map(|_| f64::from(sample_replicas(&g, 1, &mut rng).unwrap()[0].spins()[0]))
            .collect();
        let (mean, se) = mean_and_std_error(&m);
        assert!(mean.abs() < 4.0 * se);

        let q2: Vec<f64> = (0..draws)
            .map(|_| {
                let r = sample_replicas(&g, 2, &mut rng).unwrap();
                overlap(&r[0], &r[1]).unwrap().powi(2)
            })
            .collect();
        let (mean, se) = mean_and_std_error(&q2);
        assert!((mean - 1.0 / n as f64).abs() < 4.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn delta_table_always_returns_its_atom() {
        let n = 5;
        let star = 0b10110u64;
        let logw: Vec<f64> = (0..32u64).map(|c| if c == star { 0.0 } else { -800.0 }).collect();
        let g = GibbsTable::from_log_weights(n, 1.0, 0, logw).unwrap();
        let mut rng = stream(1, 2, 3);
        for r in sample_replicas(&g, 50, &mut rng).unwrap() {
            assert_eq!(r.code(), star);
        }
        assert!(sample_replicas(&g, 0, &mut rng).is_err());
    }

    #[test]
    fn binary_dump_round_trip() {
        let g = build_gibbs(&sk(31, 7), 1.4).unwrap();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 8 + 8 + 8 * 128);
        assert_eq!(&buf[..4], b"GIBB");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 7);
        assert_eq!(u64::from_le_bytes(buf[20..28].try_into().unwrap()), 31);
        let back = GibbsTable::read_binary(buf.as_slice()).unwrap();
        for (a, b) in back.log_weights().iter().zip(g.log_weights()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(back.beta(), 1.4);
        buf[0] = b'X';
        assert!(GibbsTable::read_binary(buf.as_slice()).is_err());
    }
}
