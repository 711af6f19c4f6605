//! Overlap matrices, monomial observables and their disorder-averaged
//! estimates.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::model::{overlap, SpinConfiguration};
use crate::oracle::OverlapSampler;
use crate::parallel::map_units;
use crate::rng::{stream, tasks};
use crate::stats::{mean_and_std_error, z_score};
use crate::{Error, Result};

/// Tolerance on the smallest eigenvalue for positive semi-definiteness.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// Largest exponent accepted in a monomial.
pub const MAX_EXPONENT: u32 = 32;

/// Symmetric `s × s` matrix with unit diagonal and entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OverlapMatrixRecord", into = "OverlapMatrixRecord")]
pub struct OverlapMatrix {
    s: usize,
    q: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverlapMatrixRecord {
    s: usize,
    q: Vec<Vec<f64>>,
}

impl TryFrom<OverlapMatrixRecord> for OverlapMatrix {
    type Error = Error;

    fn try_from(r: OverlapMatrixRecord) -> Result<Self> {
        if r.q.len() != r.s {
            return Err(Error::Dimension {
                expected: r.s,
                found: r.q.len(),
            });
        }
        OverlapMatrix::new(r.q)
    }
}

impl From<OverlapMatrix> for OverlapMatrixRecord {
    fn from(m: OverlapMatrix) -> Self {
        Self {
            s: m.s,
            q: m.rows(),
        }
    }
}

impl OverlapMatrix {
    /// Validates shape, symmetry, unit diagonal and range. Positive
    /// semi-definiteness is checked separately by [`check_psd`](Self::check_psd).
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let s = rows.len();
        if s == 0 {
            return Err(Error::invalid("overlap matrix needs at least one replica"));
        }
        let mut q = Vec::with_capacity(s * s);
        for row in &rows {
            if row.len() != s {
                return Err(Error::Dimension {
                    expected: s,
                    found: row.len(),
                });
            }
            q.extend_from_slice(row);
        }
        for i in 0..s {
            if q[i * s + i] != 1.0 {
                return Err(Error::invalid(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..s {
                let v = q[i * s + j];
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!("entry ({i},{j}) = {v} outside [-1, 1]")));
                }
                if v != q[j * s + i] {
                    return Err(Error::invalid(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        Ok(Self { s, q })
    }

    /// Builds the matrix from the strict upper triangle `f(i, j)`, `i < j`.
    pub(crate) fn from_fn(s: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut q = vec![1.0; s * s];
        for i in 0..s {
            for j in (i + 1)..s {
                let v = f(i, j);
                debug_assert!((-1.0..=1.0).contains(&v), "overlap {v} out of range");
                q[i * s + j] = v;
                q[j * s + i] = v;
            }
        }
        Self { s, q }
    }

    pub fn from_replicas(replicas: &[SpinConfiguration]) -> Result<Self> {
        if replicas.is_empty() {
            return Err(Error::invalid("overlap matrix needs at least one replica"));
        }
        let n = replicas[0].len();
        if let Some(bad) = replicas.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                found: bad.len(),
            });
        }
        Ok(Self::from_fn(replicas.len(), |i, j| {
            overlap(&replicas[i], &replicas[j]).expect("sizes checked")
        }))
    }

    /// The all-ones matrix (every replica on the same unit vector).
    pub fn ones(s: usize) -> Self {
        Self::from_fn(s, |_, _| 1.0)
    }

    pub fn identity(s: usize) -> Self {
        Self::from_fn(s, |_, _| 0.0)
    }

    pub fn s(&self) -> usize {
        self.s
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.s + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.q.chunks(self.s).map(<[f64]>::to_vec).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = DMatrix::from_row_slice(self.s, self.s, &self.q);
        SymmetricEigen::new(m).eigenvalues.min()
    }

    pub fn check_psd(&self) -> Result<()> {
        let min = self.min_eigenvalue();
        if min < -PSD_TOLERANCE {
            return Err(Error::numeric(format!("minimum eigenvalue {min} below -{PSD_TOLERANCE}")));
        }
        Ok(())
    }

    /// `(τ Q τ⁻¹)_{ij} = Q_{π(i) π(j)}`.
    pub fn permuted(&self, perm: &Permutation) -> Result<Self> {
        if perm.len() != self.s {
            return Err(Error::Dimension {
                expected: self.s,
                found: perm.len(),
            });
        }
        let p = perm.as_slice();
        Ok(Self::from_fn(self.s, |i, j| self.get(p[i], p[j])))
    }

    /// Upper-left `k × k` block: the overlaps of the first `k` replicas.
    pub fn leading(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.s {
            return Err(Error::Dimension {
                expected: self.s,
                found: k,
            });
        }
        Ok(Self::from_fn(k, |i, j| self.get(i, j)))
    }

    /// Every ultrametric triple condition `q_ij ≥ min(q_ik, q_jk)` that fails.
    pub fn ultrametric_violations(&self) -> usize {
        let s = self.s;
        let mut count = 0;
        for i in 0..s {
            for j in (i + 1)..s {
                for k in 0..s {
                    if k != i && k != j && self.get(i, j) < self.get(i, k).min(self.get(j, k)) {
                        count += 1;
                    }
                }
            }
        }
        count
    }
}

/// Write matrices in the JSON-lines exchange format `{"s": .., "q": [[..]]}`.
pub fn write_overlap_lines<W: Write>(mut w: W, matrices: &[OverlapMatrix]) -> Result<()> {
    for m in matrices {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_overlap_lines<R: BufRead>(r: R) -> Result<Vec<OverlapMatrix>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// A bijection of `{0, …, s-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; images.len()];
        for &i in &images {
            if i >= images.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("{images:?} is not a permutation")));
            }
        }
        Ok(Self(images))
    }

    pub fn identity(s: usize) -> Self {
        Self((0..s).collect())
    }

    /// `i ↦ i + 1 mod s`.
    pub fn cycle(s: usize) -> Self {
        Self((0..s).map(|i| (i + 1) % s).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// `Π_{i<j} q_ij^{k_ij}` over the first `s` replicas. Pairs are zero-based.
/// Serialised in its textual form, e.g. `"q12^2*q13"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MonomialObservable {
    s: usize,
    exponents: BTreeMap<(usize, usize), u32>,
}

impl MonomialObservable {
    pub fn new(s: usize, exponents: BTreeMap<(usize, usize), u32>) -> Result<Self> {
        let mut kept = BTreeMap::new();
        for (&(i, j), &k) in &exponents {
            if i >= j || j >= s {
                return Err(Error::invalid(format!(
                    "pair ({i},{j}) must satisfy i < j < s = {s}"
                )));
            }
            if k > MAX_EXPONENT {
                return Err(Error::invalid(format!("exponent {k} exceeds {MAX_EXPONENT}")));
            }
            if k > 0 {
                kept.insert((i, j), k);
            }
        }
        Ok(Self { s, exponents: kept })
    }

    pub fn constant() -> Self {
        Self {
            s: 1,
            exponents: BTreeMap::new(),
        }
    }

    /// `q_ij^k` (zero-based replicas).
    pub fn pair(i: usize, j: usize, k: u32) -> Result<Self> {
        let (a, b) = (i.min(j), i.max(j));
        Self::new(b + 1, BTreeMap::from([((a, b), k)]))
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn exponents(&self) -> &BTreeMap<(usize, usize), u32> {
        &self.exponents
    }

    pub fn is_constant(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn evaluate(&self, q: &OverlapMatrix) -> Result<f64> {
        if q.s() < self.s {
            return Err(Error::Dimension {
                expected: self.s,
                found: q.s(),
            });
        }
        Ok(self
            .exponents
            .iter()
            .map(|(&(i, j), &k)| q.get(i, j).powi(k as i32))
            .product())
    }
}

/// Free function form of [`MonomialObservable::evaluate`].
pub fn evaluate_monomial(m: &MonomialObservable, q: &OverlapMatrix) -> Result<f64> {
    m.evaluate(q)
}

/// Textual form with one-based replica labels: `q12^2*q13`, `q(1,12)^2`, or
/// `1` for the constant.
impl fmt::Display for MonomialObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponents.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .exponents
            .iter()
            .map(|(&(i, j), &k)| {
                let pair = if i < 9 && j < 9 {
                    format!("q{}{}", i + 1, j + 1)
                } else {
                    format!("q({},{})", i + 1, j + 1)
                };
                if k == 1 {
                    pair
                } else {
                    format!("{pair}^{k}")
                }
            })
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

impl FromStr for MonomialObservable {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "1" {
            return Ok(Self::constant());
        }
        let bad = || Error::invalid(format!("cannot parse monomial {text:?}"));
        let mut exponents: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for factor in text.split('*') {
            let factor = factor.trim();
            let (base, k) = match factor.split_once('^') {
                Some((b, k)) => (b.trim(), k.trim().parse::<u32>().map_err(|_| bad())?),
                None => (factor, 1),
            };
            let rest = base.strip_prefix('q').ok_or_else(bad)?;
            let (a, b) = if let Some(inner) = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
                let (a, b) = inner.split_once(',').ok_or_else(bad)?;
                (a.trim().parse::<usize>().map_err(|_| bad())?, b.trim().parse::<usize>().map_err(|_| bad())?)
            } else {
                let digits: Vec<u32> = rest.chars().map(|c| c.to_digit(10)).collect::<Option<_>>().ok_or_else(bad)?;
                if digits.len() != 2 {
                    return Err(bad());
                }
                (digits[0] as usize, digits[1] as usize)
            };
            if a == 0 || b == 0 || a == b {
                return Err(bad());
            }
            let key = (a.min(b) - 1, a.max(b) - 1);
            *exponents.entry(key).or_default() += k;
        }
        let s = exponents.keys().map(|&(_, j)| j + 1).max().unwrap_or(1);
        Self::new(s, exponents)
    }
}

impl TryFrom<String> for MonomialObservable {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MonomialObservable> for String {
    fn from(m: MonomialObservable) -> Self {
        m.to_string()
    }
}

/// Disorder-averaged estimate with outer-level error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    /// Independent realizations of the random measure.
    pub n_outer: usize,
    /// Replica sets per realization.
    pub n_inner: usize,
}

impl Estimate {
    /// From per-realization means.
    pub fn from_outer_means(values: &[f64], n_inner: usize) -> Self {
        let (mean, std_error) = mean_and_std_error(values);
        Self {
            mean,
            std_error,
            n_outer: values.len(),
            n_inner,
        }
    }

    /// `(self - target) / std_error`.
    pub fn z_against(&self, target: f64) -> f64 {
        z_score(self.mean - target, self.std_error)
    }
}

fn check_budgets(n_outer: usize, n_inner: usize) -> Result<()> {
    if n_outer < 2 {
        return Err(Error::invalid("at least two outer draws are needed for an error bar"));
    }
    if n_inner == 0 {
        return Err(Error::invalid("inner budget must be positive"));
    }
    Ok(())
}

/// `E̅ μ^(s)(m)`: for each of `n_outer` realizations, the average of `m` over
/// `n_inner` replica sets; mean and standard error over realizations.
///
/// Outer draw `k` uses the stream `(seed, ESTIMATE, k)`, so results do not
/// depend on the number of workers.
pub fn estimate_observable(
    sampler: &dyn OverlapSampler,
    m: &MonomialObservable,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<Estimate> {
    Ok(estimate_observables(sampler, std::slice::from_ref(m), n_outer, n_inner, seed)?.remove(0))
}

/// Several monomials on shared replica sets.
pub fn estimate_observables(
    sampler: &dyn OverlapSampler,
    monomials: &[MonomialObservable],
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    check_budgets(n_outer, n_inner)?;
    let s = monomials.iter().map(MonomialObservable::s).max().unwrap_or(1);
    let per_outer = map_units(n_outer, |k| {
        let mut rng = stream(seed, tasks::ESTIMATE, k as u64);
        let measure = sampler.realize(&mut rng)?;
        let mut sums = vec![0.0; monomials.len()];
        for _ in 0..n_inner {
            let q = measure.sample(s, &mut rng)?;
            for (acc, m) in sums.iter_mut().zip(monomials) {
                *acc += m.evaluate(&q)?;
            }
        }
        Ok(sums.into_iter().map(|v| v / n_inner as f64).collect::<Vec<f64>>())
    })?;
    Ok((0..monomials.len())
        .map(|i| {
            let col: Vec<f64> = per_outer.iter().map(|row| row[i]).collect();
            Estimate::from_outer_means(&col, n_inner)
        })
        .collect())
}

/// One row of an exchangeability report.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeabilityEntry {
    pub monomial: MonomialObservable,
    pub raw_mean: f64,
    pub permuted_mean: f64,
    /// Paired z-score of `raw - permuted` over samples.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeabilityReport {
    pub entries: Vec<ExchangeabilityEntry>,
    pub threshold: f64,
    pub passed: bool,
}

impl ExchangeabilityReport {
    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max)
    }
}

/// Minimum sample count for [`exchangeability_test`].
pub const MIN_EXCHANGEABILITY_SAMPLES: usize = 100;

/// Compares each monomial on the raw samples against the same monomial on
/// the index-permuted samples with a paired z-test. Samples are assumed
/// independent.
pub fn exchangeability_test(
    samples: &[OverlapMatrix],
    perm: &Permutation,
    monomials: &[MonomialObservable],
    threshold: f64,
) -> Result<ExchangeabilityReport> {
    if samples.len() < MIN_EXCHANGEABILITY_SAMPLES {
        return Err(Error::invalid(format!(
            "exchangeability test needs at least {MIN_EXCHANGEABILITY_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let permuted: Vec<OverlapMatrix> = samples
        .iter()
        .map(|q| q.permuted(perm))
        .collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(monomials.len());
    for m in monomials {
        let raw: Vec<f64> = samples.iter().map(|q| m.evaluate(q)).collect::<Result<_>>()?;
        let per: Vec<f64> = permuted.iter().map(|q| m.evaluate(q)).collect::<Result<_>>()?;
        let diffs: Vec<f64> = raw.iter().zip(&per).map(|(a, b)| a - b).collect();
        let (d, se) = mean_and_std_error(&diffs);
        entries.push(ExchangeabilityEntry {
            monomial: m.clone(),
            raw_mean: raw.iter().sum::<f64>() / raw.len() as f64,
            permuted_mean: per.iter().sum::<f64>() / per.len() as f64,
            z: z_score(d, se),
        });
    }
    let passed = entries.iter().all(|e| e.z.abs() < threshold);
    Ok(ExchangeabilityReport {
        entries,
        threshold,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{build_gibbs, sample_replicas};
    use crate::model::{CovarianceFunction, DisorderRealization};
    use crate::oracle::{SkParams, SkSampler, TimeChangeParams, TimeChangeSampler};
    use crate::rpc::ParameterFunction;
    use proptest::prelude::*;

    fn replicas(codes: &[u64], n: usize) -> Vec<SpinConfiguration> {
        codes.iter().map(|&c| SpinConfiguration::from_code(c, n)).collect()
    }

    #[test]
    fn overlap_matrix_examples() {
        let same = replicas(&[5, 5, 5], 4);
        assert_eq!(OverlapMatrix::from_replicas(&same).unwrap(), OverlapMatrix::ones(3));
        let anti = replicas(&[0b0110, 0b1001], 4);
        assert_eq!(
            OverlapMatrix::from_replicas(&anti).unwrap().rows(),
            vec![vec![1.0, -1.0], vec![-1.0, 1.0]]
        );
        let mixed = [replicas(&[1], 3), replicas(&[1], 4)].concat();
        assert!(matches!(OverlapMatrix::from_replicas(&mixed), Err(Error::Dimension { .. })));
    }

    #[test]
    fn overlap_matrix_validation() {
        assert!(OverlapMatrix::new(vec![vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(OverlapMatrix::new(vec![vec![0.9, 0.5], vec![0.5, 1.0]]).is_err());
        assert!(OverlapMatrix::new(vec![vec![1.0, 1.5], vec![1.5, 1.0]]).is_err());
        assert!(OverlapMatrix::new(vec![vec![1.0], vec![1.0]]).is_err());
        let bad = OverlapMatrix::new(vec![
            vec![1.0, 0.9, -0.9],
            vec![0.9, 1.0, 0.9],
            vec![-0.9, 0.9, 1.0],
        ])
        .unwrap();
        assert!(bad.check_psd().is_err());
    }

    #[test]
    fn json_line_round_trip() {
        let q = OverlapMatrix::new(vec![vec![1.0, 0.25], vec![0.25, 1.0]]).unwrap();
        let line = serde_json::to_string(&q).unwrap();
        assert_eq!(line, r#"{"s":2,"q":[[1.0,0.25],[0.25,1.0]]}"#);
        let mut buf = Vec::new();
        write_overlap_lines(&mut buf, &[q.clone(), OverlapMatrix::ones(3)]).unwrap();
        let back = read_overlap_lines(buf.as_slice()).unwrap();
        assert_eq!(back, vec![q, OverlapMatrix::ones(3)]);
        assert!(serde_json::from_str::<OverlapMatrix>(r#"{"s":3,"q":[[1.0]]}"#).is_err());
    }

    #[test]
    fn monomial_examples() {
        let q = OverlapMatrix::new(vec![vec![1.0, 0.3], vec![0.3, 1.0]]).unwrap();
        assert_eq!(MonomialObservable::constant().evaluate(&q).unwrap(), 1.0);
        let m: MonomialObservable = "q12^2".parse().unwrap();
        assert!((m.evaluate(&q).unwrap() - 0.09).abs() < 1e-15);
        let m: MonomialObservable = "q12*q13^2*q(2,3)".parse().unwrap();
        assert_eq!(m.evaluate(&OverlapMatrix::identity(3)).unwrap(), 0.0);
        assert!(matches!(m.evaluate(&q), Err(Error::Dimension { .. })));
        assert_eq!(m.to_string(), "q12*q13^2*q23");
        assert!("q11".parse::<MonomialObservable>().is_err());
        assert!("q12^33".parse::<MonomialObservable>().is_err());
        assert!("x12".parse::<MonomialObservable>().is_err());
        let far: MonomialObservable = "q(1,12)^2".parse().unwrap();
        assert_eq!(far.s(), 12);
        assert_eq!(far.to_string(), "q(1,12)^2");
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
        let p = Permutation::cycle(3);
        let q = OverlapMatrix::new(vec![
            vec![1.0, 0.1, 0.2],
            vec![0.1, 1.0, 0.3],
            vec![0.2, 0.3, 1.0],
        ])
        .unwrap();
        let r = q.permuted(&p).unwrap();
        assert_eq!(r.get(0, 1), 0.3);
        assert_eq!(r.get(0, 2), 0.1);
    }

    fn sk_sampler(n: usize, beta: f64) -> SkSampler {
        SkSampler::new(SkParams {
            n,
            beta: crate::oracle::BetaSpec::Single(beta),
            ..SkParams::default()
        })
        .unwrap()
    }

    #[test]
    fn constant_monomial_is_exact() {
        let e = estimate_observable(&sk_sampler(6, 1.0), &MonomialObservable::constant(), 10, 5, 1).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!((e.n_outer, e.n_inner), (10, 5));
    }

    #[test]
    fn infinite_temperature_q2_is_one_over_n() {
        let n = 10;
        let m: MonomialObservable = "q12^2".parse().unwrap();
        let e = estimate_observable(&sk_sampler(n, 0.0), &m, 200, 200, 2).unwrap();
        assert!(e.z_against(1.0 / n as f64).abs() < 4.0, "{e:?}");
    }

    #[test]
    fn one_step_rpc_mean_overlap() {
        let x = ParameterFunction::one_step(0.5, 0.5).unwrap();
        let sampler = TimeChangeSampler::new(TimeChangeParams { x }).unwrap();
        let m: MonomialObservable = "q12".parse().unwrap();
        let e = estimate_observable(&sampler, &m, 20_000, 1, 3).unwrap();
        assert!(e.z_against(0.25).abs() < 4.0, "{e:?}");
    }

    #[test]
    fn estimates_are_reproducible() {
        let m: MonomialObservable = "q12^2".parse().unwrap();
        let a = estimate_observable(&sk_sampler(8, 0.7), &m, 20, 10, 9).unwrap();
        let b = estimate_observable(&sk_sampler(8, 0.7), &m, 20, 10, 9).unwrap();
        assert_eq!(a, b);
        assert!(estimate_observable(&sk_sampler(8, 0.7), &m, 1, 10, 9).is_err());
    }

    #[test]
    fn exchangeability_identity_and_iid() {
        let d = DisorderRealization::generate(4, 10, &CovarianceFunction::sk()).unwrap();
        let g = build_gibbs(&d, 1.0).unwrap();
        let mut rng = stream(1, 0, 0);
        let samples: Vec<_> = (0..2000)
            .map(|_| OverlapMatrix::from_replicas(&sample_replicas(&g, 3, &mut rng).unwrap()).unwrap())
            .collect();
        let monomials: Vec<MonomialObservable> = ["q12^2", "q13^2*q23^2", "q12*q13*q23", "q23^4"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let id = exchangeability_test(&samples, &Permutation::identity(3), &monomials, 4.0).unwrap();
        assert!(id.entries.iter().all(|e| e.z == 0.0));
        let cyc = exchangeability_test(&samples, &Permutation::cycle(3), &monomials, 4.0).unwrap();
        assert!(cyc.passed, "{cyc:?}");
        assert!(exchangeability_test(&samples[..50], &Permutation::cycle(3), &monomials, 4.0).is_err());
    }

    proptest! {
        #[test]
        fn replica_gram_matrices_are_valid(n in 1usize..16, codes in proptest::collection::vec(any::<u64>(), 1..8)) {
            let mask = (1u64 << n) - 1;
            let reps = replicas(&codes.iter().map(|c| c & mask).collect::<Vec<_>>(), n);
            let q = OverlapMatrix::from_replicas(&reps).unwrap();
            prop_assert!(q.min_eigenvalue() >= -PSD_TOLERANCE);
            for i in 0..q.s() {
                prop_assert_eq!(q.get(i, i), 1.0);
                for j in 0..q.s() {
                    let k = (q.get(i, j) + 1.0) * n as f64 / 2.0;
                    prop_assert!((k - k.round()).abs() < 1e-9);
                }
            }
            let back: OverlapMatrix = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
            prop_assert_eq!(back, q);
        }
    }
}
