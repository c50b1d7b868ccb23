use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::feynman_kac::MCEstimate;
use crate::rng;

/// Samples per RNG block. Fixed so results do not depend on the pool size.
pub(crate) const BLOCK: usize = 2048;

/// Monte Carlo over `n` i.i.d. draws. Draws are grouped in fixed blocks, each
/// with its own stream addressed by `seed ++ [block]`; block estimates are
/// merged sequentially in block order.
pub(crate) fn mc_blocks<F>(n: usize, seed: &[u64], draw: F) -> MCEstimate
where
    F: Fn(&mut ChaCha8Rng) -> Complex64 + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<MCEstimate> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut words = seed.to_vec();
            words.push(b as u64);
            let mut g = rng::stream(&words);
            let len = BLOCK.min(n - b * BLOCK);
            MCEstimate::from_samples((0..len).map(|_| draw(&mut g)))
        })
        .collect();
    parts.iter().fold(MCEstimate::new(), |acc, p| acc.merge(p))
}

/// Like `mc_blocks` but returns every draw, in order.
pub(crate) fn draw_blocks<T, F>(n: usize, seed: &[u64], draw: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<Vec<T>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut words = seed.to_vec();
            words.push(b as u64);
            let mut g = rng::stream(&words);
            let len = BLOCK.min(n - b * BLOCK);
            (0..len).map(|_| draw(&mut g)).collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}
