//! Independent replicas run in parallel, one stream per replica.
//!
//! Replica `k` always receives `RngStream::new(seed, k)` and results are
//! returned in replica order, so output does not depend on thread count.

use rayon::prelude::*;

use crate::error::Result;
use crate::kernels::RngStream;

pub fn replicas<T, F>(seed: u64, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, RngStream) -> Result<T> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|k| f(k, RngStream::new(seed, k as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_and_streams_are_fixed() {
        let a = replicas(11, 16, |_, mut rng| Ok(rng.uniform())).unwrap();
        let b: Vec<f64> = (0..16).map(|k| RngStream::new(11, k).uniform()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn first_error_is_returned() {
        let r: Result<Vec<usize>> =
            replicas(1, 8, |k, _| if k == 3 { Err(crate::Error::param("boom")) } else { Ok(k) });
        assert!(r.is_err());
    }
}
