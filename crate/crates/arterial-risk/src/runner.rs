//! Chain execution that spreads chains across OS threads.
//!
//! Chains are independent functions of `(target, config, chain index)`, so
//! running them concurrently and reassembling in index order produces the
//! exact sequential result — `--threads` changes wall-clock time, never
//! output bytes.

use arterial_core::mcmc::{run_chain, ChainDraws, ChainRunner, SamplerConfig, SamplerError, Target};

/// Runs at most `threads` chains at a time.
#[derive(Debug, Clone, Copy)]
pub struct ThreadedRunner {
    threads: usize,
}

impl ThreadedRunner {
    /// A runner keeping at most `threads` chains in flight (minimum 1).
    pub fn new(threads: usize) -> ThreadedRunner {
        ThreadedRunner { threads: threads.max(1) }
    }
}

impl ChainRunner for ThreadedRunner {
    fn run<T: Target + Sync>(
        &self,
        target: &T,
        config: &SamplerConfig,
    ) -> Result<Vec<ChainDraws>, SamplerError> {
        let ids: Vec<usize> = (0..config.n_chains).collect();
        let mut chains = Vec::with_capacity(config.n_chains);
        for batch in ids.chunks(self.threads) {
            let results: Vec<Result<ChainDraws, SamplerError>> = std::thread::scope(|s| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|&c| s.spawn(move || run_chain(target, config, c)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("chain worker panicked")).collect()
            });
            for r in results {
                chains.push(r?);
            }
        }
        Ok(chains)
    }
}
