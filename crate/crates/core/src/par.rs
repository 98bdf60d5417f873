use std::ops::Range;

use rayon::prelude::*;

/// Paths handled by one task. Fixing it makes every reduction independent
/// of the number of worker threads.
pub const CHUNK: usize = 4096;

/// Applies `f` to consecutive ranges covering `0..n` in parallel and returns
/// the results in range order.
pub(crate) fn map_chunks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect()
}

/// Particle-state variant: `data` holds consecutive states of length `dim`
/// and `f(first_path, states)` sees `CHUNK` particles at a time.
pub(crate) fn map_particle_chunks<R, F>(data: &mut [f64], dim: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, &mut [f64]) -> R + Sync + Send,
{
    data.par_chunks_mut(CHUNK * dim)
        .enumerate()
        .map(|(c, chunk)| f(c * CHUNK, chunk))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_in_order() {
        let r = map_chunks(3 * CHUNK + 5, |r| r);
        assert_eq!(r.len(), 4);
        assert_eq!(r[0], 0..CHUNK);
        assert_eq!(r[3], 3 * CHUNK..3 * CHUNK + 5);
        assert!(map_chunks(0, |r| r).is_empty());
    }

    #[test]
    fn worker_count_does_not_change_sums() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    map_chunks(100_000, |r| r.map(|i| (i as f64).sqrt().sin()).sum::<f64>())
                        .into_iter()
                        .sum::<f64>()
                })
        };
        assert_eq!(run(1).to_bits(), run(8).to_bits());
    }
}
