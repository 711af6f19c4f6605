use serde::{Deserialize, Serialize};

use spinglass::coalescent::{collect_statistics, merger_size_probability, MAX_LABELS};
use spinglass::rng::tasks;
use spinglass::stats::z_score;

use super::seeds;
use crate::config::Context;
use crate::output::num;
use crate::Failure;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    master_seed: u64,
    n: usize,
    runs: usize,
}

pub fn run(ctx: Context) -> Result<(), Failure> {
    let (cfg, mut out): (Config, _) = ctx.parse("coalescent-stats")?;
    if cfg.n < 2 || cfg.runs == 0 {
        return Err(Failure::config("need n ≥ 2 and runs ≥ 1"));
    }
    if cfg.n > MAX_LABELS {
        return Err(spinglass::Error::Capacity {
            what: "coalescent labels",
            requested: cfg.n,
            limit: MAX_LABELS,
        }
        .into());
    }
    let stats = collect_statistics(cfg.n, cfg.runs, cfg.master_seed)?;
    let mut waits = out.table(
        "waiting_times.csv",
        &["blocks", "visits", "mean_wait", "std_error", "expected", "z"],
    )?;
    let mut sizes = out.table("merger_sizes.csv", &["blocks", "size", "count", "expected_count"])?;
    for st in &stats {
        let b = st.blocks;
        let expected = 1.0 / (b - 1) as f64;
        let (mean, se) = st.mean_wait();
        let z = if st.visits >= 2 { z_score(mean - expected, se) } else { f64::NAN };
        waits.row([
            b.to_string(),
            st.visits.to_string(),
            num(mean),
            num(se),
            num(expected),
            num(z),
        ])?;
        for k in 2..=b {
            sizes.row([
                b.to_string(),
                k.to_string(),
                st.merger_counts[k].to_string(),
                num(st.visits as f64 * merger_size_probability(b, k)),
            ])?;
        }
    }
    waits.finish()?;
    sizes.finish()?;
    out.finish(seeds(cfg.master_seed, &[("coalescent", tasks::COALESCENT)]))
}
