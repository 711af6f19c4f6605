use serde::{Deserialize, Serialize};
use serde_json::json;

use spinglass::gibbs::DEFAULT_MAX_N;
use spinglass::model::{CovarianceFunction, DisorderRecord};
use spinglass::observables::{estimate_observables, MonomialObservable};
use spinglass::oracle::{BetaSpec, SkParams, SkSampler};
use spinglass::rng::{derive_seed, tasks};

use super::seeds;
use crate::config::Context;
use crate::output::num;
use crate::Failure;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    master_seed: u64,
    n: Vec<usize>,
    beta: Vec<f64>,
    #[serde(default = "CovarianceFunction::sk")]
    xi: CovarianceFunction,
    #[serde(default)]
    lambda: f64,
    #[serde(default = "default_observables")]
    observables: Vec<MonomialObservable>,
    n_outer: usize,
    n_inner: usize,
    #[serde(default = "default_max_n")]
    max_n: usize,
}

fn default_observables() -> Vec<MonomialObservable> {
    vec![MonomialObservable::pair(0, 1, 2).expect("valid")]
}

fn default_max_n() -> usize {
    DEFAULT_MAX_N
}

pub fn run(ctx: Context) -> Result<(), Failure> {
    let (cfg, mut out): (Config, _) = ctx.parse("sk-observables")?;
    if cfg.n.is_empty() || cfg.beta.is_empty() || cfg.observables.is_empty() {
        return Err(Failure::config("n, beta and observables must be nonempty"));
    }
    let mut table = out.table(
        "estimates.csv",
        &["n", "beta", "observable", "mean", "std_error", "n_outer", "n_inner", "seed"],
    )?;
    let mut rows = Vec::new();
    let mut index = 0u64;
    for &n in &cfg.n {
        for &beta in &cfg.beta {
            let seed = derive_seed(cfg.master_seed, tasks::ROW, index);
            index += 1;
            let sampler = SkSampler::new(SkParams {
                n,
                beta: BetaSpec::Single(beta),
                xi: cfg.xi.clone(),
                lambda: cfg.lambda,
                max_n: cfg.max_n,
            })?;
            let estimates = estimate_observables(&sampler, &cfg.observables, cfg.n_outer, cfg.n_inner, seed)?;
            for (m, e) in cfg.observables.iter().zip(&estimates) {
                table.row([
                    n.to_string(),
                    num(beta),
                    m.to_string(),
                    num(e.mean),
                    num(e.std_error),
                    e.n_outer.to_string(),
                    e.n_inner.to_string(),
                    seed.to_string(),
                ])?;
            }
            rows.push(json!({
                "n": n,
                "beta": beta,
                "seed": seed,
                "disorder_family": DisorderRecord { seed, n, xi: cfg.xi.clone() },
            }));
        }
    }
    table.finish()?;
    let mut extra = seeds(cfg.master_seed, &[("row", tasks::ROW), ("estimate", tasks::ESTIMATE)]);
    extra.insert("rows".into(), rows.into());
    extra.insert(
        "disorder_derivation".into(),
        "outer draw k of a row uses stream(row seed, estimate, k); the disorder seed is the first u64 drawn from it"
            .into(),
    );
    out.finish(extra)
}
