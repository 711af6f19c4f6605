use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;

use serde::{Deserialize, Serialize};

use spinglass::model::CovarianceFunction;
use spinglass::observables::{write_overlap_lines, OverlapMatrix};
use spinglass::parallel::map_units;
use spinglass::rng::{stream, tasks};
use spinglass::rpc::{
    expected_mass, pd_cascade, phi_lambda_detailed, rpc_overlaps, sample_from_directing, ParameterFunction,
    DEFAULT_TRUNCATION,
};
use spinglass::stats::{mean_and_std_error, z_score, Histogram};

use super::seeds;
use crate::config::Context;
use crate::output::num;
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Construction {
    TimeChange,
    Cascade,
}

fn default_replicas() -> usize {
    2
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleConfig {
    master_seed: u64,
    x: ParameterFunction,
    samples: usize,
    #[serde(default = "default_replicas")]
    replicas: usize,
    #[serde(default = "default_construction")]
    construction: Construction,
    #[serde(default = "default_truncation")]
    truncation: usize,
    /// Also write every overlap matrix as JSON lines.
    #[serde(default)]
    write_samples: bool,
}

fn default_construction() -> Construction {
    Construction::TimeChange
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareConfig {
    master_seed: u64,
    x: ParameterFunction,
    samples: usize,
    #[serde(default = "default_replicas")]
    replicas: usize,
    #[serde(default = "default_truncation")]
    truncation: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StabilityConfig {
    master_seed: u64,
    x: ParameterFunction,
    lambda: f64,
    #[serde(default = "CovarianceFunction::sk")]
    xi: CovarianceFunction,
    cascades: usize,
    samples_per_cascade: usize,
    #[serde(default = "default_stability_replicas")]
    replicas: usize,
    #[serde(default = "default_truncation")]
    truncation: usize,
}

fn default_stability_replicas() -> usize {
    3
}

/// Largest overlap value the parameter function puts mass on.
fn q_star(x: &ParameterFunction) -> f64 {
    x.breakpoints().last().copied().unwrap_or(1.0)
}

struct Drawn {
    matrices: Vec<OverlapMatrix>,
    tails: Vec<f64>,
}

fn draw(x: &ParameterFunction, construction: Construction, samples: usize, replicas: usize, truncation: usize, seed: u64) -> Result<Drawn, Failure> {
    let rows = map_units(samples, |k| match construction {
        Construction::TimeChange => {
            Ok((rpc_overlaps(x, replicas, &mut stream(seed, tasks::RPC_TIME_CHANGE, k as u64))?, 0.0))
        }
        Construction::Cascade => {
            let mut rng = stream(seed, tasks::RPC_CASCADE, k as u64);
            let mu = pd_cascade(x, truncation, &mut rng)?;
            Ok((sample_from_directing(&mu, replicas, &mut rng)?, mu.truncated_mass()))
        }
    })?;
    let (matrices, tails) = rows.into_iter().unzip();
    Ok(Drawn { matrices, tails })
}

fn check_sizes(samples: usize, replicas: usize) -> Result<(), Failure> {
    if samples < 2 || replicas < 2 {
        return Err(Failure::config("need samples ≥ 2 and replicas ≥ 2"));
    }
    Ok(())
}

fn q12_histogram(ms: &[OverlapMatrix]) -> Histogram {
    let mut h = Histogram::new();
    ms.iter().for_each(|q| h.add(q.get(0, 1)));
    h
}

/// `(P(q12 = q*), standard error)`.
fn top_mass(ms: &[OverlapMatrix], q: f64) -> (f64, f64) {
    let hits: Vec<f64> = ms.iter().map(|m| (m.get(0, 1) == q) as u8 as f64).collect();
    mean_and_std_error(&hits)
}

fn violations(ms: &[OverlapMatrix]) -> usize {
    ms.iter().map(OverlapMatrix::ultrametric_violations).sum()
}

pub fn run_sample(ctx: Context) -> Result<(), Failure> {
    let (cfg, mut out): (SampleConfig, _) = ctx.parse("rpc-sample")?;
    check_sizes(cfg.samples, cfg.replicas)?;
    let drawn = draw(&cfg.x, cfg.construction, cfg.samples, cfg.replicas, cfg.truncation, cfg.master_seed)?;
    let hist = q12_histogram(&drawn.matrices);
    let mut table = out.table("histogram.csv", &["q", "count", "frequency"])?;
    for (q, c) in hist.iter() {
        table.row([num(q), c.to_string(), num(c as f64 / hist.total() as f64)])?;
    }
    table.finish()?;
    let qs = q_star(&cfg.x);
    let (p, p_se) = top_mass(&drawn.matrices, qs);
    let (mean, mean_se) = mean_and_std_error(&drawn.matrices.iter().map(|m| m.get(0, 1)).collect::<Vec<_>>());
    let mut summary = out.table(
        "summary.csv",
        &[
            "construction",
            "samples",
            "replicas",
            "ultrametric_violations",
            "mean_q12",
            "mean_q12_std_error",
            "q_star",
            "p_q_star",
            "p_q_star_std_error",
            "max_truncated_mass",
        ],
    )?;
    summary.row([
        match cfg.construction {
            Construction::TimeChange => "time_change",
            Construction::Cascade => "cascade",
        }
        .to_owned(),
        cfg.samples.to_string(),
        cfg.replicas.to_string(),
        violations(&drawn.matrices).to_string(),
        num(mean),
        num(mean_se),
        num(qs),
        num(p),
        num(p_se),
        num(drawn.tails.iter().copied().fold(0.0, f64::max)),
    ])?;
    summary.finish()?;
    if cfg.write_samples {
        let path = out.file("overlaps.jsonl");
        let f = File::create(&path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        write_overlap_lines(BufWriter::new(f), &drawn.matrices)?;
    }
    let task = match cfg.construction {
        Construction::TimeChange => ("rpc_time_change", tasks::RPC_TIME_CHANGE),
        Construction::Cascade => ("rpc_cascade", tasks::RPC_CASCADE),
    };
    out.finish(seeds(cfg.master_seed, &[task]))
}

pub fn run_compare(ctx: Context) -> Result<(), Failure> {
    let (cfg, mut out): (CompareConfig, _) = ctx.parse("rpc-compare")?;
    check_sizes(cfg.samples, cfg.replicas)?;
    let tc = draw(&cfg.x, Construction::TimeChange, cfg.samples, cfg.replicas, cfg.truncation, cfg.master_seed)?;
    let cas = draw(&cfg.x, Construction::Cascade, cfg.samples, cfg.replicas, cfg.truncation, cfg.master_seed)?;
    let (h_tc, h_cas) = (q12_histogram(&tc.matrices), q12_histogram(&cas.matrices));
    let mut keys: Vec<f64> = h_tc.iter().chain(h_cas.iter()).map(|(q, _)| q).collect();
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    let mut table = out.table("comparison.csv", &["q", "time_change", "cascade"])?;
    for q in keys {
        table.row([num(q), num(h_tc.frequency(q)), num(h_cas.frequency(q))])?;
    }
    table.finish()?;
    let qs = q_star(&cfg.x);
    let (p_tc, se_tc) = top_mass(&tc.matrices, qs);
    let (p_cas, se_cas) = top_mass(&cas.matrices, qs);
    let mut summary = out.table(
        "summary.csv",
        &[
            "samples",
            "truncation",
            "total_variation",
            "q_star",
            "p_q_star_time_change",
            "p_q_star_time_change_std_error",
            "p_q_star_cascade",
            "p_q_star_cascade_std_error",
            "ultrametric_violations",
            "max_truncated_mass",
        ],
    )?;
    summary.row([
        cfg.samples.to_string(),
        cfg.truncation.to_string(),
        num(h_tc.total_variation(&h_cas)),
        num(qs),
        num(p_tc),
        num(se_tc),
        num(p_cas),
        num(se_cas),
        (violations(&tc.matrices) + violations(&cas.matrices)).to_string(),
        num(cas.tails.iter().copied().fold(0.0, f64::max)),
    ])?;
    summary.finish()?;
    out.finish(seeds(
        cfg.master_seed,
        &[("rpc_time_change", tasks::RPC_TIME_CHANGE), ("rpc_cascade", tasks::RPC_CASCADE)],
    ))
}

/// Upper-triangle overlaps as a string key.
fn pattern(q: &OverlapMatrix) -> String {
    let s = q.s();
    let mut parts = Vec::with_capacity(s * (s - 1) / 2);
    for i in 0..s {
        for j in i + 1..s {
            parts.push(num(q.get(i, j) + 0.0));
        }
    }
    parts.join("|")
}

pub fn run_stability(ctx: Context) -> Result<(), Failure> {
    let (cfg, mut out): (StabilityConfig, _) = ctx.parse("stability")?;
    if cfg.cascades < 2 || cfg.samples_per_cascade == 0 || cfg.replicas < 2 {
        return Err(Failure::config("need cascades ≥ 2, samples_per_cascade ≥ 1, replicas ≥ 2"));
    }
    let seed = cfg.master_seed;
    // Each cascade uses one stream: cascade, field, then replica draws that
    // are replayed identically before and after the map.
    let rows = map_units(cfg.cascades, |k| {
        let mut rng = stream(seed, tasks::STABILITY, k as u64);
        let mu = pd_cascade(&cfg.x, cfg.truncation, &mut rng)?;
        let expected = expected_mass(&mu, cfg.lambda, &cfg.xi);
        let image = phi_lambda_detailed(&mu, cfg.lambda, &cfg.xi, &mut rng)?;
        let mut after_rng = rng.clone();
        let mut pairs = Vec::with_capacity(cfg.samples_per_cascade);
        for _ in 0..cfg.samples_per_cascade {
            pairs.push((
                pattern(&sample_from_directing(&mu, cfg.replicas, &mut rng)?),
                pattern(&sample_from_directing(&image.measure, cfg.replicas, &mut after_rng)?),
            ));
        }
        Ok((pairs, image.mass, expected, mu.truncated_mass()))
    })?;
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for (pairs, ..) in &rows {
        for (a, b) in pairs {
            counts.entry(a.clone()).or_default().0 += 1;
            counts.entry(b.clone()).or_default().1 += 1;
        }
    }
    let total = (cfg.cascades * cfg.samples_per_cascade) as f64;
    let tv = 0.5 * counts.values().map(|&(a, b)| (a as f64 - b as f64).abs()).sum::<f64>() / total;
    let mut table = out.table("patterns.csv", &["pattern", "before", "after"])?;
    for (key, (a, b)) in &counts {
        table.row([key.clone(), num(*a as f64 / total), num(*b as f64 / total)])?;
    }
    table.finish()?;
    let masses: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let expected: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let diffs: Vec<f64> = rows.iter().map(|r| r.1 - r.2).collect();
    let (mass, mass_se) = mean_and_std_error(&masses);
    let (exp_mean, _) = mean_and_std_error(&expected);
    let (diff, diff_se) = mean_and_std_error(&diffs);
    let mut summary = out.table(
        "summary.csv",
        &[
            "lambda",
            "samples",
            "total_variation",
            "mass_mean",
            "mass_std_error",
            "expected_mass",
            "mass_z",
            "max_truncated_mass",
        ],
    )?;
    summary.row([
        num(cfg.lambda),
        (cfg.cascades * cfg.samples_per_cascade).to_string(),
        num(tv),
        num(mass),
        num(mass_se),
        num(exp_mean),
        num(z_score(diff, diff_se)),
        num(rows.iter().map(|r| r.3).fold(0.0, f64::max)),
    ])?;
    summary.finish()?;
    out.finish(seeds(seed, &[("stability", tasks::STABILITY)]))
}
