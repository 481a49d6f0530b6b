//! Data-parallel helpers. With the `parallel` feature (default) work is spread
//! over a rayon pool; without it, or with [`Parallelism::Sequential`], every
//! helper runs on the calling thread. Results are always returned in input order.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// A dedicated pool of this many threads; 0 uses the global rayon pool.
    Threads(usize),
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Threads(0)
        } else {
            Parallelism::Sequential
        }
    }
}

impl Parallelism {
    pub fn with_threads(n: usize) -> Self {
        if n <= 1 {
            Parallelism::Sequential
        } else {
            Parallelism::Threads(n)
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self != Parallelism::Sequential
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            match self {
                Parallelism::Sequential => items.iter().map(f).collect(),
                Parallelism::Threads(0) => items.par_iter().map(f).collect(),
                Parallelism::Threads(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    Ok(pool) => pool.install(|| items.par_iter().map(f).collect()),
                    Err(e) => {
                        log::warn!("cannot build a {n}-thread pool ({e}); running sequentially");
                        items.iter().map(f).collect()
                    }
                },
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            items.iter().map(f).collect()
        }
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        let idx: Vec<usize> = (0..n).collect();
        self.map(&idx, |&i| f(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_in_every_mode() {
        let items: Vec<u64> = (0..1000).collect();
        let expect: Vec<u64> = items.iter().map(|x| x * x).collect();
        for mode in [Parallelism::Sequential, Parallelism::Threads(0), Parallelism::Threads(4)] {
            assert_eq!(mode.map(&items, |x| x * x), expect);
        }
        assert_eq!(Parallelism::with_threads(1), Parallelism::Sequential);
    }
}
