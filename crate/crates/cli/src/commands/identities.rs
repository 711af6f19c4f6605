use serde::{Deserialize, Serialize};
use serde_json::Value;

use spinglass::identities::{gg_check, singularity_curve, CoincidenceMode, GGTestSpec, SingularitySpec, TestFunction};
use spinglass::oracle::{OverlapSampler, SamplerRegistry};
use spinglass::rng::tasks;

use super::seeds;
use crate::config::Context;
use crate::output::num;
use crate::Failure;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GgConfig {
    master_seed: u64,
    /// Sampler spec: `kind` plus that sampler's parameters.
    sampler: Value,
    s: usize,
    function: TestFunction,
    n_outer: usize,
    n_inner: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SingularityConfig {
    master_seed: u64,
    sampler: Value,
    s_max: usize,
    mode: CoincidenceMode,
    n_outer: usize,
    n_inner: usize,
}

fn build(spec: &Value) -> Result<Box<dyn OverlapSampler>, Failure> {
    Ok(SamplerRegistry::with_builtins().build_tagged(spec)?)
}

pub fn run_gg(ctx: Context) -> Result<(), Failure> {
    let (cfg, mut out): (GgConfig, _) = ctx.parse("gg-check")?;
    let sampler = build(&cfg.sampler)?;
    let spec = GGTestSpec {
        s: cfg.s,
        function: cfg.function,
        n_outer: cfg.n_outer,
        n_inner: cfg.n_inner,
    };
    let report = gg_check(sampler.as_ref(), &spec, cfg.master_seed)?;
    let mut table = out.table(
        "gg.csv",
        &["sampler", "s", "term", "mean", "std_error", "n_outer", "n_inner", "seed", "z_score"],
    )?;
    let mut terms = vec![
        ("lhs".to_owned(), report.lhs),
        ("rhs_independent".to_owned(), report.rhs_independent_term),
    ];
    for (j, e) in report.rhs_sum_terms.iter().enumerate() {
        terms.push((format!("rhs_q1{}", j + 2), *e));
    }
    terms.push(("rhs".to_owned(), report.rhs));
    terms.push(("discrepancy".to_owned(), report.discrepancy));
    for (name, e) in terms {
        table.row([
            sampler.label(),
            cfg.s.to_string(),
            name,
            num(e.mean),
            num(e.std_error),
            e.n_outer.to_string(),
            e.n_inner.to_string(),
            cfg.master_seed.to_string(),
            num(report.z_score),
        ])?;
    }
    table.finish()?;
    out.finish(seeds(
        cfg.master_seed,
        &[("gg_main", tasks::GG_MAIN), ("gg_independent", tasks::GG_INDEPENDENT)],
    ))
}

pub fn run_singularity(ctx: Context) -> Result<(), Failure> {
    let (cfg, mut out): (SingularityConfig, _) = ctx.parse("singularity")?;
    let sampler = build(&cfg.sampler)?;
    let spec = SingularitySpec {
        s_max: cfg.s_max,
        mode: cfg.mode,
        n_outer: cfg.n_outer,
        n_inner: cfg.n_inner,
    };
    let curve = singularity_curve(sampler.as_ref(), &spec, cfg.master_seed)?;
    let mut table = out.table("singularity.csv", &["s", "estimate", "std_error"])?;
    for p in curve {
        table.row([p.s.to_string(), num(p.estimate.mean), num(p.estimate.std_error)])?;
    }
    table.finish()?;
    out.finish(seeds(cfg.master_seed, &[("singularity", tasks::SINGULARITY)]))
}
