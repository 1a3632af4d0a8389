//! Deterministic replicate-parallel map/reduce.
//!
//! Replicates are cut into fixed-size chunks independent of the worker
//! count. Each chunk is reduced into its own accumulator, and accumulators
//! are merged sequentially in chunk order, so floating-point sums come out
//! bit-identical for any number of workers.

use rayon::prelude::*;

/// Replicates per chunk.
pub const CHUNK: u64 = 1024;

/// Runs `body(acc, replicate)` for every replicate in `0..reps` and returns
/// the merged accumulator.
pub fn run_replicates<A, I, F, M>(reps: u64, workers: usize, init: I, body: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, u64) + Sync,
    M: Fn(&mut A, A),
{
    let n_chunks = reps.div_ceil(CHUNK);
    let do_chunk = |c: u64| {
        let mut acc = init();
        for r in c * CHUNK..((c + 1) * CHUNK).min(reps) {
            body(&mut acc, r);
        }
        acc
    };
    let parts: Vec<A> = if workers <= 1 || n_chunks <= 1 {
        (0..n_chunks).map(do_chunk).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(|| (0..n_chunks).into_par_iter().map(do_chunk).collect())
    };
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn result_independent_of_workers() {
        let f = |w| {
            run_replicates(
                10_000,
                w,
                || 0.0f64,
                |a, r| *a += 1.0 / (1.0 + r as f64),
                |a, b| *a += b,
            )
        };
        let one = f(1);
        assert_eq!(one.to_bits(), f(3).to_bits());
        assert_eq!(one.to_bits(), f(8).to_bits());
    }
}
