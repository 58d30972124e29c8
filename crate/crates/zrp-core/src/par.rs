//! Execution policy for the data-parallel kernels.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool;
//! without it, or with [`Exec::Sequential`], the same closures run in order.
//! Results are identical either way because every reduction is done in
//! index order after the map.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True if this policy will actually use worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Evaluate `f` on `0..n`, collecting results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fill `out[i] = f(i)` in place.
    pub fn fill<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
            return;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = f(i);
        }
    }
}

/// Configure the global worker count. A value of 0 keeps the rayon default.
pub fn set_workers(k: usize) {
    #[cfg(feature = "parallel")]
    if k > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = k;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_policies_agree() {
        let a = Exec::Sequential.map(100, |i| (i * i) as f64);
        let b = Exec::Parallel.map(100, |i| (i * i) as f64);
        assert_eq!(a, b);
        let mut c = vec![0.0; 100];
        Exec::Parallel.fill(&mut c, |i| (i * i) as f64);
        assert_eq!(a, c);
    }
}
