//! Explicit thread-count plumbing over rayon.

use rayon::prelude::*;

/// Maps `f` over `items` on `threads` workers (1 runs inline; 0 uses the
/// global pool). Output order matches input order.
pub fn par_map<T, U, F>(items: &[T], threads: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match threads {
        1 => items.iter().map(f).collect(),
        0 => items.par_iter().map(f).collect(),
        t => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => items.iter().map(f).collect(),
        },
    }
}
