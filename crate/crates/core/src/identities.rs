//! Ghirlanda–Guerra identities and the coincidence (singularity) diagnostic.
//!
//! For `s` replicas and a test function `F` of `q_{1,s+1}` and the overlaps
//! among the first `s` replicas, the identities read
//!
//! ```text
//! E̅⟨F(q_{1,s+1}; Q_s)⟩ = (1/s) E̅⟨F(q'_{12}; Q_s)⟩ + (1/s) Σ_{j=2}^{s} E̅⟨F(q_{1j}; Q_s)⟩
//! ```
//!
//! where `q'_{12}` is drawn from an independent realization of the measure.

use serde::{Deserialize, Serialize};

use crate::observables::{Estimate, MonomialObservable, OverlapMatrix};
use crate::oracle::{Lattice, OverlapSampler};
use crate::parallel::map_units;
use crate::rng::{stream, tasks};
use crate::stats::{mean_and_std_error, z_score};
use crate::{Error, Result};

/// `F(q_new; Q_s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    /// `q_new^k · rest(Q_s)`.
    Monomial {
        k: u32,
        #[serde(default = "MonomialObservable::constant")]
        rest: MonomialObservable,
    },
    /// [`f_delta`] of `q_new` against `q_12, …, q_1s`.
    FDelta { delta: f64 },
}

impl TestFunction {
    /// `F` evaluated with `q_new` in the slot of `q_{1,s+1}`; `q` holds at
    /// least the first `s` replicas.
    pub fn eval(&self, q_new: f64, q: &OverlapMatrix, s: usize) -> Result<f64> {
        match self {
            TestFunction::Monomial { k, rest } => Ok(q_new.powi(*k as i32) * rest.evaluate(q)?),
            TestFunction::FDelta { delta } => {
                let prev: Vec<f64> = (1..s).map(|i| q.get(0, i)).collect();
                f_delta(q_new, &prev, *delta)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GGTestSpec {
    pub s: usize,
    pub function: TestFunction,
    pub n_outer: usize,
    pub n_inner: usize,
}

impl GGTestSpec {
    pub fn validate(&self) -> Result<()> {
        if self.s < 2 {
            return Err(Error::invalid(format!("GG test needs s ≥ 2, got {}", self.s)));
        }
        if self.n_outer < 2 || self.n_inner == 0 {
            return Err(Error::invalid("GG test needs n_outer ≥ 2 and n_inner ≥ 1"));
        }
        match &self.function {
            TestFunction::Monomial { k, rest } => {
                if *k == 0 {
                    return Err(Error::invalid("the exponent on the new overlap must be ≥ 1"));
                }
                if rest.s() > self.s {
                    return Err(Error::invalid(format!(
                        "{rest} involves replicas beyond the first s = {}",
                        self.s
                    )));
                }
            }
            TestFunction::FDelta { delta } => {
                if !(*delta > 0.0) {
                    return Err(Error::domain(format!("delta must be positive, got {delta}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GGReport {
    pub lhs: Estimate,
    pub rhs_independent_term: Estimate,
    /// `E̅⟨F(q_{1j}; Q_s)⟩` for `j = 2..=s`.
    pub rhs_sum_terms: Vec<Estimate>,
    /// `(independent + Σ sum terms) / s`.
    pub rhs: Estimate,
    /// Paired `lhs - rhs` over outer draws.
    pub discrepancy: Estimate,
    pub z_score: f64,
}

/// Outer draw `k` realizes the main measure on stream `(seed, GG_MAIN, k)`
/// and the independent copy on `(seed, GG_INDEPENDENT, k)`.
pub fn gg_check(sampler: &dyn OverlapSampler, spec: &GGTestSpec, seed: u64) -> Result<GGReport> {
    spec.validate()?;
    let s = spec.s;
    if let Some(max) = sampler.max_replicas() {
        if max < s + 1 {
            return Err(Error::Dimension {
                expected: s + 1,
                found: max,
            });
        }
    }
    // Per outer draw: [lhs, independent, sum terms j = 1..s-1, discrepancy].
    let width = s + 2;
    let rows = map_units(spec.n_outer, |k| {
        let mut main = stream(seed, tasks::GG_MAIN, k as u64);
        let mut indep = stream(seed, tasks::GG_INDEPENDENT, k as u64);
        let r = sampler.realize(&mut main)?;
        let r_indep = sampler.realize(&mut indep)?;
        let mut acc = vec![0.0; width];
        for _ in 0..spec.n_inner {
            let q = r.sample(s + 1, &mut main)?;
            let q_indep = r_indep.sample(2, &mut indep)?;
            let f = &spec.function;
            let lhs = f.eval(q.get(0, s), &q, s)?;
            let ind = f.eval(q_indep.get(0, 1), &q, s)?;
            let mut rhs = ind;
            acc[0] += lhs;
            acc[1] += ind;
            for j in 1..s {
                let t = f.eval(q.get(0, j), &q, s)?;
                acc[1 + j] += t;
                rhs += t;
            }
            acc[width - 1] += lhs - rhs / s as f64;
        }
        Ok(acc.into_iter().map(|v| v / spec.n_inner as f64).collect::<Vec<f64>>())
    })?;
    let column = |c: usize| Estimate::from_outer_means(&rows.iter().map(|r| r[c]).collect::<Vec<_>>(), spec.n_inner);
    let rhs_values: Vec<f64> = rows.iter().map(|r| r[1..=s].iter().sum::<f64>() / s as f64).collect();
    let discrepancy = column(width - 1);
    Ok(GGReport {
        lhs: column(0),
        rhs_independent_term: column(1),
        rhs_sum_terms: (2..=s).map(column).collect(),
        rhs: Estimate::from_outer_means(&rhs_values, spec.n_inner),
        z_score: z_score(discrepancy.mean, discrepancy.std_error),
        discrepancy,
    })
}

/// `1 - min{1, |q_new - q_i| / δ : q_i ∈ q_prev}`; 0 when `q_prev` is empty.
pub fn f_delta(q_new: f64, q_prev: &[f64], delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("delta must be positive, got {delta}")));
    }
    Ok(1.0 - separation(q_new, q_prev.iter().copied(), delta))
}

/// `min{1, |q_new - q_i| / δ}` over the previous overlaps.
fn separation(q_new: f64, q_prev: impl Iterator<Item = f64>, delta: f64) -> f64 {
    q_prev.map(|p| ((q_new - p).abs() / delta).min(1.0)).fold(1.0, f64::min)
}

/// How the event `A_s` (the `s`-th replica's overlap with the first differs
/// from all earlier ones) is scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoincidenceMode {
    /// Indicator of `A_s`, comparing overlaps on the sampler's lattice.
    Exact,
    /// `1 - F_δ`.
    Smoothed { delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularitySpec {
    pub s_max: usize,
    pub mode: CoincidenceMode,
    pub n_outer: usize,
    pub n_inner: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularityPoint {
    pub s: usize,
    pub estimate: Estimate,
}

/// `P(min of a uniform (s-2)-subset of K sorted values is the t-th smallest)`
/// as `weights[s - 3][t]`.
fn subset_min_weights(s_max: usize) -> Vec<Vec<f64>> {
    let k = s_max - 2;
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=k).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    let ln_binom = |n: usize, r: usize| ln_fact[n] - ln_fact[r] - ln_fact[n - r];
    (3..=s_max)
        .map(|s| {
            let size = s - 2;
            (0..k)
                .map(|t| {
                    // C(K - 1 - t, size - 1) / C(K, size), t zero-based.
                    if k - 1 - t < size - 1 {
                        0.0
                    } else {
                        (ln_binom(k - 1 - t, size - 1) - ln_binom(k, size)).exp()
                    }
                })
                .collect()
        })
        .collect()
}

/// Estimates `E̅ μ^{⊗s}(A_s)` for `s = 3..=s_max`.
///
/// Each inner draw samples a pool of `s_max` replicas. Replica 1 is the
/// reference; every other replica `j` in turn plays the `s`-th, and the
/// `s - 2` earlier ones are averaged over all subsets of the remaining
/// `s_max - 2`. By exchangeability this has the same mean as a single
/// `s`-replica draw, and the resulting curve is non-increasing in `s` for
/// every pool.
pub fn singularity_curve(sampler: &dyn OverlapSampler, spec: &SingularitySpec, seed: u64) -> Result<Vec<SingularityPoint>> {
    let s_max = spec.s_max;
    if s_max < 3 {
        return Err(Error::invalid(format!("s_max must be at least 3, got {s_max}")));
    }
    if spec.n_outer < 2 || spec.n_inner == 0 {
        return Err(Error::invalid("singularity curve needs n_outer ≥ 2 and n_inner ≥ 1"));
    }
    if let CoincidenceMode::Smoothed { delta } = spec.mode {
        if !(delta > 0.0) {
            return Err(Error::domain(format!("delta must be positive, got {delta}")));
        }
    }
    if let Some(max) = sampler.max_replicas() {
        if max < s_max {
            return Err(Error::Dimension {
                expected: s_max,
                found: max,
            });
        }
    }
    let weights = subset_min_weights(s_max);
    let lattice = sampler.lattice();
    let rows = map_units(spec.n_outer, |k| {
        let mut rng = stream(seed, tasks::SINGULARITY, k as u64);
        let r = sampler.realize(&mut rng)?;
        let mut acc = vec![0.0; s_max - 2];
        let mut scores = Vec::with_capacity(s_max - 2);
        for _ in 0..spec.n_inner {
            let q = r.sample(s_max, &mut rng)?;
            for j in 1..s_max {
                let q_new = q.get(0, j);
                scores.clear();
                scores.extend((1..s_max).filter(|&t| t != j).map(|t| {
                    let q_prev = q.get(0, t);
                    match spec.mode {
                        CoincidenceMode::Exact => !coincide(lattice, q_new, q_prev) as u8 as f64,
                        CoincidenceMode::Smoothed { delta } => separation(q_new, std::iter::once(q_prev), delta),
                    }
                }));
                scores.sort_by(f64::total_cmp);
                for (a, w) in acc.iter_mut().zip(&weights) {
                    *a += w.iter().zip(&scores).map(|(w, d)| w * d).sum::<f64>();
                }
            }
        }
        let norm = (spec.n_inner * (s_max - 1)) as f64;
        Ok(acc.into_iter().map(|v| v / norm).collect::<Vec<f64>>())
    })?;
    Ok((3..=s_max)
        .map(|s| {
            let col: Vec<f64> = rows.iter().map(|r| r[s - 3]).collect();
            SingularityPoint {
                s,
                estimate: Estimate::from_outer_means(&col, spec.n_inner),
            }
        })
        .collect())
}

fn coincide(lattice: Lattice, a: f64, b: f64) -> bool {
    match lattice {
        Lattice::Continuous => a == b,
        _ => lattice.coincide(a, b),
    }
}

/// Direct estimate of `E̅ μ^{⊗s}(A_s)` for one `s` from independent
/// `s`-replica draws, without pooling.
pub fn coincidence_probability_direct(
    sampler: &dyn OverlapSampler,
    s: usize,
    mode: CoincidenceMode,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<Estimate> {
    if s < 3 || n_outer < 2 || n_inner == 0 {
        return Err(Error::invalid("need s ≥ 3, n_outer ≥ 2, n_inner ≥ 1"));
    }
    let lattice = sampler.lattice();
    let means = map_units(n_outer, |k| {
        let mut rng = stream(seed, tasks::SINGULARITY, k as u64);
        let r = sampler.realize(&mut rng)?;
        let mut total = 0.0;
        for _ in 0..n_inner {
            let q = r.sample(s, &mut rng)?;
            let q_new = q.get(0, s - 1);
            let prev = (1..s - 1).map(|i| q.get(0, i));
            total += match mode {
                CoincidenceMode::Exact => prev.into_iter().all(|p| !coincide(lattice, q_new, p)) as u8 as f64,
                CoincidenceMode::Smoothed { delta } => separation(q_new, prev, delta),
            };
        }
        Ok(total / n_inner as f64)
    })?;
    let (mean, std_error) = mean_and_std_error(&means);
    Ok(Estimate {
        mean,
        std_error,
        n_outer,
        n_inner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{SkParams, SkSampler, SphereSampler, TimeChangeParams, TimeChangeSampler};
    use crate::rpc::ParameterFunction;
    use proptest::prelude::*;

    fn one_step() -> TimeChangeSampler {
        TimeChangeSampler::new(TimeChangeParams {
            x: ParameterFunction::one_step(0.5, 0.5).unwrap(),
        })
        .unwrap()
    }

    #[test]
    fn f_delta_examples() {
        assert_eq!(f_delta(0.3, &[0.1, 0.3], 0.1).unwrap(), 1.0);
        assert_eq!(f_delta(0.5, &[0.1, 0.3], 0.1).unwrap(), 0.0);
        assert!((f_delta(0.35, &[0.3, 0.9], 0.1).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(f_delta(0.35, &[], 0.1).unwrap(), 0.0);
        assert!(f_delta(0.35, &[0.3], 0.0).is_err());
    }

    #[test]
    fn subset_weights_are_distributions() {
        let w = subset_min_weights(12);
        for (i, row) in w.iter().enumerate() {
            let total: f64 = row.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "s = {}", i + 3);
        }
        // s = 3: a single uniformly chosen element.
        assert!(w[0].iter().all(|&p| (p - 0.1).abs() < 1e-12));
        // s = s_max: the whole set, so its minimum.
        assert!((w[9][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pooled_weights_match_brute_force_subsets() {
        // Enumerate all subsets of 6 values for each size.
        let vals = [0.7, 0.1, 0.4, 0.9, 0.3, 0.6];
        let mut sorted = vals;
        sorted.sort_by(f64::total_cmp);
        let w = subset_min_weights(8);
        for size in 1..=6usize {
            let (mut sum, mut count) = (0.0, 0);
            for mask in 0u32..64 {
                if mask.count_ones() as usize == size {
                    sum += (0..6).filter(|i| mask >> i & 1 == 1).map(|i| vals[i]).fold(1.0, f64::min);
                    count += 1;
                }
            }
            let pooled: f64 = w[size - 1].iter().zip(&sorted).map(|(w, v)| w * v).sum();
            assert!((pooled - sum / count as f64).abs() < 1e-12, "size {size}");
        }
    }

    #[test]
    fn spec_validation() {
        let spec = |s, function| GGTestSpec { s, function, n_outer: 10, n_inner: 1 };
        let f = TestFunction::Monomial { k: 1, rest: MonomialObservable::constant() };
        assert!(spec(1, f.clone()).validate().is_err());
        assert!(spec(2, TestFunction::Monomial { k: 0, rest: MonomialObservable::constant() }).validate().is_err());
        assert!(spec(2, TestFunction::Monomial { k: 1, rest: "q13".parse().unwrap() }).validate().is_err());
        assert!(spec(2, TestFunction::FDelta { delta: -1.0 }).validate().is_err());
        assert!(spec(2, f).validate().is_ok());
        let parsed: TestFunction = serde_json::from_str(r#"{"kind":"monomial","k":1,"rest":"q12"}"#).unwrap();
        assert_eq!(parsed, TestFunction::Monomial { k: 1, rest: "q12".parse().unwrap() });
        let parsed: TestFunction = serde_json::from_str(r#"{"kind":"f_delta","delta":0.1}"#).unwrap();
        assert_eq!(parsed, TestFunction::FDelta { delta: 0.1 });
    }

    #[test]
    fn new_overlap_only_passes_on_any_oracle() {
        let spec = GGTestSpec {
            s: 2,
            function: TestFunction::Monomial { k: 1, rest: MonomialObservable::constant() },
            n_outer: 400,
            n_inner: 20,
        };
        let sk = SkSampler::new(SkParams { n: 8, ..SkParams::default() }).unwrap();
        let samplers: [&dyn OverlapSampler; 3] = [&one_step(), &sk, &SphereSampler::new(3).unwrap()];
        for sampler in samplers {
            let report = gg_check(sampler, &spec, 17).unwrap();
            assert!(report.z_score.abs() < 4.0, "{}: {report:?}", sampler.label());
            assert_eq!(report.rhs_sum_terms.len(), 1);
        }
    }

    #[test]
    fn gg_report_is_reproducible() {
        let spec = GGTestSpec {
            s: 3,
            function: TestFunction::FDelta { delta: 0.1 },
            n_outer: 20,
            n_inner: 5,
        };
        let a = gg_check(&one_step(), &spec, 4).unwrap();
        let b = gg_check(&one_step(), &spec, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rhs_sum_terms.len(), 2);
    }

    #[test]
    fn pooled_curve_matches_direct_draws() {
        let sampler = one_step();
        let spec = SingularitySpec { s_max: 8, mode: CoincidenceMode::Exact, n_outer: 4000, n_inner: 1 };
        let curve = singularity_curve(&sampler, &spec, 5).unwrap();
        assert_eq!(curve.len(), 6);
        for w in curve.windows(2) {
            assert!(w[1].estimate.mean <= w[0].estimate.mean + 1e-12);
        }
        for point in [&curve[0], &curve[5]] {
            let direct = coincidence_probability_direct(&sampler, point.s, CoincidenceMode::Exact, 20_000, 1, 6).unwrap();
            let diff = point.estimate.mean - direct.mean;
            let se = (point.estimate.std_error.powi(2) + direct.std_error.powi(2)).sqrt();
            assert!((diff / se).abs() < 4.0, "s = {}: {point:?} vs {direct:?}", point.s);
        }
    }

    #[test]
    fn smoothed_mode_converges_to_exact() {
        let sampler = one_step();
        let exact = singularity_curve(
            &sampler,
            &SingularitySpec { s_max: 6, mode: CoincidenceMode::Exact, n_outer: 200, n_inner: 5 },
            8,
        )
        .unwrap();
        let smooth = singularity_curve(
            &sampler,
            &SingularitySpec { s_max: 6, mode: CoincidenceMode::Smoothed { delta: 1e-6 }, n_outer: 200, n_inner: 5 },
            8,
        )
        .unwrap();
        assert_eq!(exact, smooth);
    }

    #[test]
    fn sphere_never_coincides() {
        let spec = SingularitySpec { s_max: 10, mode: CoincidenceMode::Exact, n_outer: 5, n_inner: 5 };
        let curve = singularity_curve(&SphereSampler::new(50).unwrap(), &spec, 1).unwrap();
        assert!(curve.iter().all(|p| (p.estimate.mean - 1.0).abs() < 1e-12));
        assert!(singularity_curve(&one_step(), &SingularitySpec { s_max: 2, ..spec }, 1).is_err());
    }

    proptest! {
        #[test]
        fn f_delta_properties(q in -1.0f64..1.0, eps in -0.1f64..0.1, prev in proptest::collection::vec(-1.0f64..1.0, 1..6), delta in 0.01f64..1.0) {
            let f = f_delta(q, &prev, delta).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
            let g = f_delta(q + eps, &prev, delta).unwrap();
            prop_assert!((f - g).abs() <= eps.abs() / delta + 1e-12);
            let mut rev = prev.clone();
            rev.reverse();
            prop_assert_eq!(f, f_delta(q, &rev, delta).unwrap());
        }
    }
}
