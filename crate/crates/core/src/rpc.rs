//! Ruelle probability cascades.
//!
//! Two constructions of the same random overlap structure from a step
//! parameter function `x`:
//!
//! * [`rpc_overlaps`]: time-change the Bolthausen–Sznitman coalescent,
//!   `q_ij = x⁻¹(e^{-τ_ij})`;
//! * [`pd_cascade`]: an explicit tree of Poisson–Dirichlet weights whose
//!   leaves form a [`DiscreteDirectingMeasure`].
//!
//! [`phi_lambda`] reweights a discrete directing measure by a Gaussian field
//! indexed by its atoms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coalescent::{simulate_bs_coalescent, CoalescentRun};
use crate::model::CovarianceFunction;
use crate::observables::{OverlapMatrix, PSD_TOLERANCE};
use crate::rng::SimRng;
use crate::stats::log_sum_exp;
use crate::{Error, Result};

/// Smallest per-node truncation accepted by [`pd_cascade`].
pub const MIN_TRUNCATION: usize = 100;
pub const DEFAULT_TRUNCATION: usize = 10_000;
/// Largest number of cascade leaves held in memory.
pub const MAX_CASCADE_LEAVES: usize = 10_000_000;
/// Largest dense Gram matrix.
pub const MAX_DENSE_ATOMS: usize = 20_000;
/// Largest measure written by [`DiscreteDirectingMeasure::to_json`].
pub const MAX_EXPORT_ATOMS: usize = 1_000;

/// Non-decreasing right-continuous step function on `[0, 1]` ending at 1:
/// value `m_0` on `[0, q_1)`, `m_l` on `[q_l, q_{l+1})` and `m_r = 1` on
/// `[q_r, 1]`.
///
/// The representation is normalised on construction: a breakpoint at 0 and
/// breakpoints after the value has already reached 1 are dropped, so
/// `values[..r]` are all below 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParameterRecord", into = "ParameterRecord")]
pub struct ParameterFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParameterRecord {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<ParameterRecord> for ParameterFunction {
    type Error = Error;
    fn try_from(r: ParameterRecord) -> Result<Self> {
        ParameterFunction::new(r.breakpoints, r.values)
    }
}

impl From<ParameterFunction> for ParameterRecord {
    fn from(x: ParameterFunction) -> Self {
        Self {
            breakpoints: x.breakpoints,
            values: x.values,
        }
    }
}

/// How [`ParameterFunction::overlap_at_time`] resolves the two degenerate
/// families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    /// `x ≡ 1`: every overlap is 1.
    AllOnes,
    /// `x = 0` on `[0, 1)`: every off-diagonal overlap is 0.
    Identity,
}

impl ParameterFunction {
    pub fn new(mut breakpoints: Vec<f64>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::invalid(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            )));
        }
        if breakpoints.iter().any(|q| !(0.0..=1.0).contains(q)) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("breakpoints must be strictly increasing in [0, 1]"));
        }
        if values.iter().any(|m| !(0.0..=1.0).contains(m)) || values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("values must be non-decreasing in [0, 1]"));
        }
        if *values.last().expect("nonempty") != 1.0 {
            return Err(Error::invalid("the last value must be 1"));
        }
        if breakpoints.first() == Some(&0.0) {
            breakpoints.remove(0);
            values.remove(0);
        }
        let first_one = values.iter().position(|&m| m == 1.0).expect("last value is 1");
        breakpoints.truncate(first_one);
        values.truncate(first_one + 1);
        Ok(Self { breakpoints, values })
    }

    /// Value `m` on `[0, q*)`, 1 on `[q*, 1]`.
    pub fn one_step(m: f64, q_star: f64) -> Result<Self> {
        Self::new(vec![q_star], vec![m, 1.0])
    }

    /// `x ≡ 1`.
    pub fn constant_one() -> Self {
        Self {
            breakpoints: vec![],
            values: vec![1.0],
        }
    }

    /// `x = 0` on `[0, 1)`, `x(1) = 1`.
    pub fn zero_until_one() -> Self {
        Self {
            breakpoints: vec![1.0],
            values: vec![0.0, 1.0],
        }
    }

    /// Step approximation of a CDF `f` on `r` equal pieces, taking the value
    /// at each left endpoint. Its L¹ distance to a non-decreasing `f` is at
    /// most `(f(1) - f(0)) / r`.
    pub fn discretize(f: impl Fn(f64) -> f64, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::invalid("need at least one piece"));
        }
        let breakpoints: Vec<f64> = (1..r).map(|l| l as f64 / r as f64).chain([1.0]).collect();
        let mut values: Vec<f64> = (0..r).map(|l| f(l as f64 / r as f64).clamp(0.0, 1.0)).collect();
        for l in 1..values.len() {
            values[l] = values[l].max(values[l - 1]);
        }
        values.push(1.0);
        Self::new(breakpoints, values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of breakpoints `r`.
    pub fn levels(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn eval(&self, q: f64) -> f64 {
        self.values[self.breakpoints.partition_point(|&b| b <= q)]
    }

    /// `x⁻¹(u) = inf{q ≥ 0 : x(q) > u}` for `u ∈ [0, 1)`.
    pub fn right_cont_inverse(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::domain(format!("inverse needs u in [0, 1), got {u}")));
        }
        let l = self.values.iter().position(|&m| m > u).expect("last value is 1");
        Ok(if l == 0 { 0.0 } else { self.breakpoints[l - 1] })
    }

    pub fn degeneracy(&self) -> Option<Degeneracy> {
        if self.breakpoints.is_empty() {
            Some(Degeneracy::AllOnes)
        } else if self.breakpoints.last() == Some(&1.0) && self.values[..self.levels()].iter().all(|&m| m == 0.0) {
            Some(Degeneracy::Identity)
        } else {
            None
        }
    }

    /// Overlap of two replicas that coalesce at time `t > 0`:
    /// `x⁻¹(e^{-t})`, except on the degenerate families, where the literal
    /// inverse is replaced by the outcome of [`Degeneracy`].
    pub fn overlap_at_time(&self, t: f64) -> f64 {
        match self.degeneracy() {
            Some(Degeneracy::AllOnes) => 1.0,
            Some(Degeneracy::Identity) => 0.0,
            None => self.right_cont_inverse((-t).exp()).expect("t > 0"),
        }
    }

    /// `∫₀¹ x(q) dq`.
    pub fn integral(&self) -> f64 {
        let mut edges = vec![0.0];
        edges.extend_from_slice(&self.breakpoints);
        edges.push(1.0);
        edges.windows(2).zip(&self.values).map(|(w, m)| (w[1] - w[0]) * m).sum()
    }

    /// `E[q_12]` of the time-changed construction: `1 - ∫x` off the
    /// degenerate families.
    pub fn mean_overlap(&self) -> f64 {
        match self.degeneracy() {
            Some(Degeneracy::AllOnes) => 1.0,
            Some(Degeneracy::Identity) => 0.0,
            None => 1.0 - self.integral(),
        }
    }
}

/// `∫₀¹ |x - y|`, exact over the merged breakpoints.
pub fn l1_distance(x: &ParameterFunction, y: &ParameterFunction) -> f64 {
    let mut edges: Vec<f64> = [0.0, 1.0]
        .into_iter()
        .chain(x.breakpoints.iter().copied())
        .chain(y.breakpoints.iter().copied())
        .collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    edges.windows(2).map(|w| (w[1] - w[0]) * (x.eval(w[0]) - y.eval(w[0])).abs()).sum()
}

/// Applies the time change to a completed coalescent run.
pub fn time_change(run: &CoalescentRun, x: &ParameterFunction) -> OverlapMatrix {
    let tau = run.coalescence_times();
    OverlapMatrix::from_fn(run.n(), |i, j| x.overlap_at_time(tau[i][j]))
}

/// Overlaps of `n` replicas from the RPC with parameter `x`.
pub fn rpc_overlaps(x: &ParameterFunction, n: usize, rng: &mut SimRng) -> Result<OverlapMatrix> {
    let run = simulate_bs_coalescent(n, rng)?;
    Ok(time_change(&run, x))
}

/// Gram matrix of the support of a discrete measure.
#[derive(Debug, Clone, PartialEq)]
pub enum Gram {
    /// Leaves of a complete tree with `branching` children per node and
    /// `levels.len() - 1` levels. Leaf `a` has path given by the base-
    /// `branching` digits of `a`; two leaves whose paths agree on the first
    /// `d` levels have inner product `levels[d]` (`levels[0] = 0`).
    Tree { branching: usize, levels: Vec<f64> },
    /// Row-major symmetric matrix.
    Dense { size: usize, entries: Vec<f64> },
}

impl Gram {
    /// Common-ancestor depth of two tree leaves.
    fn common_depth(branching: usize, depth: usize, a: usize, b: usize) -> usize {
        let mut div = branching.pow(depth as u32);
        let mut d = 0;
        while d < depth {
            div /= branching;
            if a / div != b / div {
                break;
            }
            d += 1;
        }
        d
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        match self {
            Gram::Tree { branching, levels } => levels[Self::common_depth(*branching, levels.len() - 1, a, b)],
            Gram::Dense { size, entries } => entries[a * size + b],
        }
    }
}

/// Finitely many weighted atoms in the unit ball, known through their Gram
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDirectingMeasure {
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    gram: Gram,
    truncated_mass: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureRecord {
    weights: Vec<f64>,
    gram: Vec<Vec<f64>>,
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

impl DiscreteDirectingMeasure {
    /// Validates weights (positive, summing to 1 within 1e-12) and the Gram
    /// matrix (symmetric, PSD, diagonal at most 1).
    pub fn from_dense(weights: Vec<f64>, gram: Vec<Vec<f64>>) -> Result<Self> {
        let size = weights.len();
        if size == 0 {
            return Err(Error::invalid("a directing measure needs an atom"));
        }
        if size > MAX_DENSE_ATOMS {
            return Err(Error::Capacity {
                what: "dense gram atoms",
                requested: size,
                limit: MAX_DENSE_ATOMS,
            });
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        if gram.len() != size {
            return Err(Error::Dimension {
                expected: size,
                found: gram.len(),
            });
        }
        let mut entries = Vec::with_capacity(size * size);
        for row in &gram {
            if row.len() != size {
                return Err(Error::Dimension {
                    expected: size,
                    found: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        for a in 0..size {
            if entries[a * size + a] > 1.0 {
                return Err(Error::invalid(format!("atom {a} lies outside the unit ball")));
            }
            for b in 0..a {
                if entries[a * size + b] != entries[b * size + a] {
                    return Err(Error::invalid("gram matrix is not symmetric"));
                }
            }
        }
        let min = SymmetricEigen::new(DMatrix::from_row_slice(size, size, &entries)).eigenvalues.min();
        if min < -PSD_TOLERANCE {
            return Err(Error::numeric(format!("gram matrix has eigenvalue {min}")));
        }
        Ok(Self {
            cumulative: cumulative(&weights),
            weights,
            gram: Gram::Dense { size, entries },
            truncated_mass: 0.0,
        })
    }

    /// `δ` at the zero vector.
    pub fn delta_zero() -> Self {
        Self::from_dense(vec![1.0], vec![vec![0.0]]).expect("valid")
    }

    /// `δ` at a unit vector.
    pub fn single_unit_atom() -> Self {
        Self::from_dense(vec![1.0], vec![vec![1.0]]).expect("valid")
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn gram_entry(&self, a: usize, b: usize) -> f64 {
        self.gram.get(a, b)
    }

    pub fn norm_sq(&self, a: usize) -> f64 {
        self.gram.get(a, a)
    }

    /// Upper estimate of the relative weight discarded by truncating each
    /// cascade node to its largest atoms (0 for measures given explicitly).
    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    /// `Σ w_a²`, the probability that two sampled atoms coincide.
    pub fn sum_sq_weights(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    pub fn sample_atom(&self, rng: &mut SimRng) -> usize {
        let total = *self.cumulative.last().expect("nonempty");
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.len() - 1)
    }

    /// Dense export `{"weights": [...], "gram": [[...]]}`.
    pub fn to_json(&self) -> Result<String> {
        let size = self.len();
        if size > MAX_EXPORT_ATOMS {
            return Err(Error::Capacity {
                what: "exported atoms",
                requested: size,
                limit: MAX_EXPORT_ATOMS,
            });
        }
        let gram = (0..size).map(|a| (0..size).map(|b| self.gram.get(a, b)).collect()).collect();
        Ok(serde_json::to_string(&MeasureRecord {
            weights: self.weights.clone(),
            gram,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: MeasureRecord = serde_json::from_str(text)?;
        Self::from_dense(r.weights, r.gram)
    }

    fn with_weights(&self, weights: Vec<f64>) -> Self {
        Self {
            cumulative: cumulative(&weights),
            weights,
            gram: self.gram.clone(),
            truncated_mass: self.truncated_mass,
        }
    }
}

/// Gram matrix of `s` iid atoms with unit diagonal.
pub fn sample_from_directing(mu: &DiscreteDirectingMeasure, s: usize, rng: &mut SimRng) -> Result<OverlapMatrix> {
    if s == 0 {
        return Err(Error::invalid("need at least one replica"));
    }
    let atoms: Vec<usize> = (0..s).map(|_| mu.sample_atom(rng)).collect();
    Ok(OverlapMatrix::from_fn(s, |i, j| mu.gram_entry(atoms[i], atoms[j])))
}

/// Log-positions `ln s_k = -ln Γ_k / α` of the `m` largest points of a
/// Poisson process with intensity `α s^{-α-1} ds`, and the estimated mass of
/// the discarded points relative to the kept ones.
fn pd_node(alpha: f64, m: usize, rng: &mut SimRng) -> (Vec<f64>, f64) {
    let mut gamma = 0.0;
    let mut log_s = Vec::with_capacity(m);
    for _ in 0..m {
        let e: f64 = rng.sample(Exp1);
        gamma += e;
        log_s.push(-gamma.ln() / alpha);
    }
    // Σ_{k>M} k^{-1/α} ≈ M^{1-1/α} α/(1-α).
    let tail = ((1.0 - 1.0 / alpha) * (m as f64).ln() - log_sum_exp(&log_s)).exp() * alpha / (1.0 - alpha);
    (log_s, tail)
}

/// Ruelle probability cascade for `x`: level `l = 1..=r` attaches to every
/// node the `truncation` largest points of a Poisson process with parameter
/// `m_{l-1}`; a leaf's weight is the product of the points along its path,
/// normalised over all leaves. Leaves sharing `d` levels of ancestry have
/// inner product `q_d`.
pub fn pd_cascade(x: &ParameterFunction, truncation: usize, rng: &mut SimRng) -> Result<DiscreteDirectingMeasure> {
    let r = x.levels();
    if let Some(&m) = x.values()[..r].iter().find(|&&m| !(m > 0.0 && m < 1.0)) {
        return Err(Error::domain(format!(
            "cascade parameters must lie in (0, 1), got {m}; use the time-changed construction"
        )));
    }
    if r == 0 {
        return Err(Error::domain("x ≡ 1 has no cascade; use the time-changed construction"));
    }
    if truncation < MIN_TRUNCATION {
        return Err(Error::invalid(format!("truncation {truncation} below {MIN_TRUNCATION}")));
    }
    let leaves = (truncation as u128).pow(r as u32);
    if leaves > MAX_CASCADE_LEAVES as u128 {
        return Err(Error::Capacity {
            what: "cascade leaves",
            requested: usize::try_from(leaves).unwrap_or(usize::MAX),
            limit: MAX_CASCADE_LEAVES,
        });
    }
    let mut log_w = vec![0.0];
    let mut tail: f64 = 0.0;
    for &alpha in &x.values()[..r] {
        let mut next = Vec::with_capacity(log_w.len() * truncation);
        for &parent in &log_w {
            let (child, t) = pd_node(alpha, truncation, rng);
            tail = tail.max(t);
            next.extend(child.into_iter().map(|c| parent + c));
        }
        log_w = next;
    }
    let lse = log_sum_exp(&log_w);
    let weights: Vec<f64> = log_w.into_iter().map(|l| (l - lse).exp()).collect();
    let mut levels = vec![0.0];
    levels.extend_from_slice(x.breakpoints());
    Ok(DiscreteDirectingMeasure {
        cumulative: cumulative(&weights),
        weights,
        gram: Gram::Tree {
            branching: truncation,
            levels,
        },
        truncated_mass: tail,
    })
}

/// Result of [`phi_lambda_detailed`].
#[derive(Debug, Clone)]
pub struct Reweighted {
    pub measure: DiscreteDirectingMeasure,
    /// `Σ_a w_a e^{λ κ(v_a)}` before normalisation.
    pub mass: f64,
}

/// Draws the centred Gaussian field `κ` over the atoms with covariance
/// `cov(G_ab)`.
fn gaussian_field(mu: &DiscreteDirectingMeasure, cov: &CovarianceFunction, rng: &mut SimRng) -> Result<Vec<f64>> {
    match &mu.gram {
        Gram::Tree { branching, levels } => {
            let c: Vec<f64> = levels.iter().map(|&q| cov.eval(q)).collect();
            if c.windows(2).any(|w| w[1] < w[0]) || c[0] < 0.0 {
                return Err(Error::numeric("covariance is not increasing along the cascade"));
            }
            let root: f64 = rng.sample::<f64, _>(StandardNormal) * c[0].sqrt();
            let mut field = vec![root];
            for l in 1..levels.len() {
                let sd = (c[l] - c[l - 1]).sqrt();
                let mut next = Vec::with_capacity(field.len() * branching);
                for &parent in &field {
                    for _ in 0..*branching {
                        next.push(parent + sd * rng.sample::<f64, _>(StandardNormal));
                    }
                }
                field = next;
            }
            debug_assert_eq!(field.len(), mu.len());
            Ok(field)
        }
        Gram::Dense { size, entries } => {
            let c = DMatrix::from_fn(*size, *size, |a, b| cov.eval(entries[a * size + b]));
            let eig = SymmetricEigen::new(c);
            let min = eig.eigenvalues.min();
            if min < -PSD_TOLERANCE {
                return Err(Error::numeric(format!("covariance has eigenvalue {min}")));
            }
            let z = DVector::from_fn(*size, |_, _| rng.sample::<f64, _>(StandardNormal));
            let scaled = DVector::from_fn(*size, |i, _| eig.eigenvalues[i].max(0.0).sqrt() * z[i]);
            Ok((&eig.eigenvectors * scaled).iter().copied().collect())
        }
    }
}

/// `Φ_λ μ`: weights `w_a e^{λκ(v_a)} / Σ_b w_b e^{λκ(v_b)}`, Gram unchanged.
pub fn phi_lambda(
    mu: &DiscreteDirectingMeasure,
    lambda: f64,
    cov: &CovarianceFunction,
    rng: &mut SimRng,
) -> Result<DiscreteDirectingMeasure> {
    Ok(phi_lambda_detailed(mu, lambda, cov, rng)?.measure)
}

/// [`phi_lambda`] together with the un-normalised mass. The field is drawn
/// even when `λ = 0`, so streams stay aligned across `λ`.
pub fn phi_lambda_detailed(
    mu: &DiscreteDirectingMeasure,
    lambda: f64,
    cov: &CovarianceFunction,
    rng: &mut SimRng,
) -> Result<Reweighted> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let kappa = gaussian_field(mu, cov, rng)?;
    if lambda == 0.0 {
        return Ok(Reweighted {
            measure: mu.clone(),
            mass: mu.weights.iter().sum(),
        });
    }
    let log_w: Vec<f64> = mu.weights.iter().zip(&kappa).map(|(w, k)| w.ln() + lambda * k).collect();
    let lse = log_sum_exp(&log_w);
    if !lse.is_finite() {
        return Err(Error::numeric("reweighted mass is not finite"));
    }
    let weights = log_w.iter().map(|l| (l - lse).exp()).collect();
    Ok(Reweighted {
        measure: mu.with_weights(weights),
        mass: lse.exp(),
    })
}

/// `E Σ_a w_a e^{λκ(v_a)} = Σ_a w_a e^{λ² cov(G_aa)/2}`.
pub fn expected_mass(mu: &DiscreteDirectingMeasure, lambda: f64, cov: &CovarianceFunction) -> f64 {
    match &mu.gram {
        Gram::Tree { levels, .. } => {
            let c = cov.eval(*levels.last().expect("nonempty"));
            (lambda * lambda * c / 2.0).exp() * mu.weights.iter().sum::<f64>()
        }
        Gram::Dense { .. } => (0..mu.len())
            .map(|a| mu.weights[a] * (lambda * lambda * cov.eval(mu.norm_sq(a)) / 2.0).exp())
            .sum(),
    }
}
