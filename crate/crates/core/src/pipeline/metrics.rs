//! Batch metrics: average class error over generator runs.

use crate::generate::{generate, largest_remainder, GenError, GeneratorBackend};
use crate::layout::{average_class_error, ClassRatios, GenerationCondition, NUM_CLASSES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random ratio targets that a `width`×`height` canvas can hit exactly:
/// every ratio is a pixel count over the pixel total.
pub fn pixel_exact_targets(n: usize, width: usize, height: usize, seed: u64) -> Vec<ClassRatios> {
    let total = width * height;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut w = [0.0; NUM_CLASSES];
            w.iter_mut().for_each(|x| *x = rng.random::<f64>());
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            let counts = largest_remainder(&w, total);
            ClassRatios::new(counts.map(|c| c as f64 / total as f64)).expect("counts sum to the total")
        })
        .collect()
}

/// Generate one layout per target and return per-class ACE in percent, along
/// with the achieved ratios. Run `i` uses seed `seed + i`.
pub fn ace_over_runs(
    backend: &dyn GeneratorBackend,
    targets: &[ClassRatios],
    width: usize,
    height: usize,
    seed: u64,
    text: Option<&str>,
) -> Result<([f64; NUM_CLASSES], Vec<ClassRatios>), GenError> {
    let mut achieved = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        let mut c = GenerationCondition::unconditional(seed.wrapping_add(i as u64)).with_ratios(*t);
        if let Some(text) = text {
            c = c.with_text(text);
        }
        achieved.push(generate(backend, &c, width, height)?.ratios());
    }
    let ace = average_class_error(targets, &achieved).map_err(|e| GenError::BackendFailure(e.to_string()))?;
    Ok((ace, achieved))
}
