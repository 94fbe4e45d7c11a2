//! Per-sample fold/reduce used by batch evaluation and calibration.
//!
//! With the `parallel` feature the samples are spread over the rayon pool;
//! otherwise (or when [`Execution::Sequential`] is requested) they run in a
//! plain loop. Callers only pass associative, order-insensitive merges
//! (integer counts, element-wise min/max), so both routes give identical
//! results.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Sizes the global worker pool. `0` means one worker per core. Has no
/// effect without the `parallel` feature, or once the pool is running.
pub fn configure_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

/// Folds `fold` over `0..n`, each worker owning a scratch context from `make_ctx`.
#[cfg_attr(not(feature = "parallel"), allow(unused_variables))]
pub fn fold_samples<C, A, MC, I, F, M>(
    exec: Execution,
    n: usize,
    make_ctx: MC,
    identity: I,
    fold: F,
    merge: M,
) -> Result<A>
where
    C: Send,
    A: Send,
    MC: Fn() -> C + Sync + Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut C, &mut A, usize) -> Result<()> + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n)
                .into_par_iter()
                .try_fold(
                    || (make_ctx(), identity()),
                    |(mut ctx, mut acc), i| {
                        fold(&mut ctx, &mut acc, i)?;
                        Ok((ctx, acc))
                    },
                )
                .map(|r: Result<(C, A)>| r.map(|(_, a)| a))
                .try_reduce(&identity, |a, b| Ok(merge(a, b)))
        }
        _ => {
            let mut ctx = make_ctx();
            let mut acc = identity();
            for i in 0..n {
                fold(&mut ctx, &mut acc, i)?;
            }
            Ok(acc)
        }
    }
}
