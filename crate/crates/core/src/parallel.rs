//! Order-deterministic parallel map over independent work units.
//!
//! Units run on the current rayon pool; results come back in index order so
//! every downstream reduction is sequential and independent of the worker
//! count.

use rayon::prelude::*;

use crate::Result;

pub fn map_units<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn results_do_not_depend_on_pool_size() {
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                map_units(64, |k| Ok(stream(3, 0, k as u64).random::<f64>())).unwrap()
            })
        };
        assert_eq!(run(1), run(4));
    }
}
