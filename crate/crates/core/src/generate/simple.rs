//! Trivial backends used as test vehicles and metric baselines.

use super::{Capabilities, GenError, GeneratorBackend, KnownRegion};
use crate::layout::{GenerationCondition, LandClass, SemanticLayout, NUM_CLASSES};

/// Always returns a layout of one class.
#[derive(Debug, Clone)]
pub struct ConstantBackend {
    class: LandClass,
    meters_per_pixel: f64,
    id: String,
}

impl ConstantBackend {
    pub fn new(class: LandClass, meters_per_pixel: f64) -> Self {
        Self {
            class,
            meters_per_pixel,
            id: format!("constant-{class}"),
        }
    }
}

impl GeneratorBackend for ConstantBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_ratios: false,
            supports_text: false,
            supports_partial: true,
        }
    }

    fn generate_tile(
        &self,
        _condition: &GenerationCondition,
        width: usize,
        height: usize,
        _known: Option<&KnownRegion>,
    ) -> Result<SemanticLayout, GenError> {
        SemanticLayout::filled(width, height, self.class, self.meters_per_pixel)
            .map_err(|e| GenError::BackendFailure(e.to_string()))
    }
}

/// Paints the requested class quotas in row-major bands.
///
/// Pixel counts use largest-remainder rounding, so the measured ratios equal
/// the request whenever every requested ratio is a multiple of 1/(w·h).
#[derive(Debug, Clone)]
pub struct EchoBackend {
    meters_per_pixel: f64,
}

impl EchoBackend {
    pub fn new(meters_per_pixel: f64) -> Self {
        Self { meters_per_pixel }
    }
}

pub fn largest_remainder(ratios: &[f64; NUM_CLASSES], total: usize) -> [usize; NUM_CLASSES] {
    let exact = ratios.map(|r| r * total as f64);
    let mut counts = exact.map(|e| e.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

impl GeneratorBackend for EchoBackend {
    fn id(&self) -> &str {
        "echo"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_ratios: true,
            supports_text: false,
            supports_partial: false,
        }
    }

    fn generate_tile(
        &self,
        condition: &GenerationCondition,
        width: usize,
        height: usize,
        _known: Option<&KnownRegion>,
    ) -> Result<SemanticLayout, GenError> {
        let Some(ratios) = condition.ratios else {
            return SemanticLayout::filled(width, height, LandClass::Ground, self.meters_per_pixel)
                .map_err(|e| GenError::BackendFailure(e.to_string()));
        };
        let counts = largest_remainder(ratios.as_array(), width * height);
        let mut labels = Vec::with_capacity(width * height);
        for (id, &n) in counts.iter().enumerate() {
            labels.extend(std::iter::repeat_n(id as u8, n));
        }
        SemanticLayout::new(width, height, labels, self.meters_per_pixel)
            .map_err(|e| GenError::BackendFailure(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{compute_ratios, ClassRatios};

    #[test]
    fn echo_reproduces_representable_ratios() {
        let r = ClassRatios::new([0.25, 0.125, 0.375, 0.0, 0.125, 0.0625, 0.0625]).unwrap();
        let cond = GenerationCondition::unconditional(3).with_ratios(r);
        let out = EchoBackend::new(0.5).generate_tile(&cond, 16, 16, None).unwrap();
        assert_eq!(compute_ratios(&out), r);
    }

    #[test]
    fn largest_remainder_sums_to_total() {
        let c = largest_remainder(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 0.0, 0.0], 10);
        assert_eq!(c.iter().sum::<usize>(), 10);
        assert_eq!(&c[..3], &[4, 3, 3]);
    }
}
