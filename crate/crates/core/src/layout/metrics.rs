use super::{ClassRatios, LayoutError, NUM_CLASSES};

/// Average class error: per-class mean absolute difference between target and
/// achieved ratios, in percent.
pub fn average_class_error(
    targets: &[ClassRatios],
    generated: &[ClassRatios],
) -> Result<[f64; NUM_CLASSES], LayoutError> {
    if targets.is_empty() || targets.len() != generated.len() {
        return Err(LayoutError::LengthMismatch {
            targets: targets.len(),
            generated: generated.len(),
        });
    }
    let mut sums = [0.0f64; NUM_CLASSES];
    for (t, g) in targets.iter().zip(generated) {
        for (i, sum) in sums.iter_mut().enumerate() {
            *sum += (g.as_array()[i] - t.as_array()[i]).abs();
        }
    }
    let n = targets.len() as f64;
    Ok(sums.map(|s| 100.0 * s / n))
}
