//! Monotone sharpening rules and the volume-preserving threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleKind {
    /// Keep the top cells by value so the result has volume `alpha`.
    VolumeThreshold { alpha: f64 },
    /// `1{f ≥ threshold}`.
    FixedThreshold { threshold: f64 },
    /// `clamp(slope * f + intercept, 0, 1)`.
    ClippedLinear { slope: f64, intercept: f64 },
}

/// A nondecreasing map from convolution output to activity, with output forced
/// to zero outside `B(0, support_radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpeningRule {
    pub kind: RuleKind,
    pub support_radius: f64,
}

impl SharpeningRule {
    pub fn new(kind: RuleKind, support_radius: f64) -> Result<Self> {
        let rule = SharpeningRule {
            kind,
            support_radius,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.support_radius > 0.0) {
            return Err(Error::config("rule.support_radius", "must be positive"));
        }
        match self.kind {
            RuleKind::VolumeThreshold { alpha } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(Error::config("rule.alpha", format!("{alpha} must be positive")));
                }
            }
            RuleKind::FixedThreshold { threshold } => {
                if !(threshold.is_finite() && threshold > 0.0) {
                    return Err(Error::config(
                        "rule.threshold",
                        format!("{threshold} must be positive"),
                    ));
                }
            }
            RuleKind::ClippedLinear { slope, intercept } => {
                if !(slope.is_finite() && slope >= 0.0) {
                    return Err(Error::config(
                        "rule.slope",
                        format!("{slope} must be nonnegative for a monotone rule"),
                    ));
                }
                if !intercept.is_finite() {
                    return Err(Error::config("rule.intercept", "must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Pointwise rule for the fixed kinds. Volume thresholds depend on the
    /// whole field and have no pointwise form.
    pub fn pointwise(&self, f: f64) -> Option<f64> {
        match self.kind {
            RuleKind::VolumeThreshold { .. } => None,
            RuleKind::FixedThreshold { threshold } => Some(if f >= threshold { 1.0 } else { 0.0 }),
            RuleKind::ClippedLinear { slope, intercept } => {
                Some((slope * f + intercept).clamp(0.0, 1.0))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// Smallest cell value whose closed superlevel set reaches the target.
    pub threshold: f64,
    /// Volume of cells strictly above the threshold.
    pub strict_volume: f64,
    /// Volume of cells exactly at the threshold.
    pub tie_mass: f64,
    /// Value assigned to tie cells, in `[0, 1]`.
    pub fill: f64,
    pub achieved_volume: f64,
    /// Every candidate cell tied at the threshold.
    pub degenerate: bool,
}

/// Volume threshold over every cell of `f`.
pub fn volume_threshold(f: &ScalarField, alpha: f64) -> Result<ThresholdResult> {
    let spec = f.spec();
    if alpha >= spec.domain_volume() {
        return Err(Error::TargetExceedsDomain {
            alpha,
            domain: spec.domain_volume(),
        });
    }
    threshold_values(f.values().to_vec(), spec.cell_volume(), alpha)
}

/// Threshold over an arbitrary multiset of cell values of equal volume.
///
/// Returns the smallest value `C` with `|{v > C}| < alpha ≤ |{v ≥ C}|`, and
/// the fractional fill of tie cells that makes the filled volume equal
/// `alpha`.
pub fn threshold_values(mut values: Vec<f64>, cell_volume: f64, alpha: f64) -> Result<ThresholdResult> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::config("alpha", format!("{alpha} must be positive")));
    }
    let reachable = values.len() as f64 * cell_volume;
    if alpha > reachable {
        return Err(Error::UnreachableVolume { alpha, reachable });
    }
    values.sort_unstable_by(|a, b| b.total_cmp(a));

    let mut strict = 0usize;
    let mut i = 0;
    while i < values.len() {
        let c = values[i];
        let mut j = i + 1;
        while j < values.len() && values[j] == c {
            j += 1;
        }
        let ties = j - i;
        if (strict + ties) as f64 * cell_volume >= alpha {
            if !(c > 0.0) {
                return Err(Error::UnreachableVolume {
                    alpha,
                    reachable: strict as f64 * cell_volume,
                });
            }
            return Ok(finish(c, strict, ties, cell_volume, alpha, ties == values.len()));
        }
        strict += ties;
        i = j;
    }
    unreachable!("alpha ≤ total volume guarantees the loop returns")
}

pub(crate) fn finish(
    threshold: f64,
    strict: usize,
    ties: usize,
    cell_volume: f64,
    alpha: f64,
    degenerate: bool,
) -> ThresholdResult {
    let strict_volume = strict as f64 * cell_volume;
    let tie_mass = ties as f64 * cell_volume;
    let fill = ((alpha - strict_volume) / tie_mass).clamp(0.0, 1.0);
    ThresholdResult {
        threshold,
        strict_volume,
        tie_mass,
        fill,
        achieved_volume: strict_volume + fill * tie_mass,
        degenerate,
    }
}

#[derive(Debug, Clone)]
pub struct Sharpened {
    pub field: ScalarField,
    pub threshold: Option<ThresholdResult>,
}

/// Applies the rule pointwise, zeroes everything outside the support ball,
/// and clamps to `[0, 1]`.
pub fn apply_sharpening(f: &ScalarField, rule: &SharpeningRule) -> Result<Sharpened> {
    rule.validate()?;
    let spec = *f.spec();
    let inside: Vec<bool> = spec
        .centers()
        .map(|p| norm(&p) <= rule.support_radius)
        .collect();

    let (values, threshold) = match rule.kind {
        RuleKind::VolumeThreshold { alpha } => {
            if alpha >= spec.domain_volume() {
                return Err(Error::TargetExceedsDomain {
                    alpha,
                    domain: spec.domain_volume(),
                });
            }
            let candidates: Vec<f64> = f
                .values()
                .iter()
                .zip(&inside)
                .filter(|(_, ok)| **ok)
                .map(|(v, _)| *v)
                .collect();
            let result = threshold_values(candidates, spec.cell_volume(), alpha)?;
            let c = result.threshold;
            let values = f
                .values()
                .iter()
                .zip(&inside)
                .map(|(&v, &ok)| match (ok, v.partial_cmp(&c)) {
                    (false, _) => 0.0,
                    (true, Some(std::cmp::Ordering::Greater)) => 1.0,
                    (true, Some(std::cmp::Ordering::Equal)) => result.fill,
                    _ => 0.0,
                })
                .collect();
            (values, Some(result))
        }
        _ => {
            let values = f
                .values()
                .iter()
                .zip(&inside)
                .map(|(&v, &ok)| if ok { rule.pointwise(v).expect("pointwise kind") } else { 0.0 })
                .collect();
            (values, None)
        }
    };
    Ok(Sharpened {
        field: ScalarField::from_values(spec, values, f.time())?.clamped(),
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use proptest::prelude::*;

    /// Checks every distinct value as a candidate threshold by direct counting.
    pub(crate) fn oracle(values: &[f64], cell_volume: f64, alpha: f64) -> Option<(f64, f64, f64)> {
        let mut distinct: Vec<f64> = values.to_vec();
        distinct.sort_by(|a, b| a.total_cmp(b));
        distinct.dedup();
        for &c in &distinct {
            let strict = values.iter().filter(|v| **v > c).count();
            let closed = values.iter().filter(|v| **v >= c).count();
            if (strict as f64 * cell_volume) < alpha && closed as f64 * cell_volume >= alpha {
                let ties = closed - strict;
                let tie_mass = ties as f64 * cell_volume;
                let fill = ((alpha - strict as f64 * cell_volume) / tie_mass).clamp(0.0, 1.0);
                return Some((c, tie_mass, fill));
            }
        }
        None
    }

    #[test]
    fn four_cell_example() {
        let r = threshold_values(vec![4.0, 3.0, 2.0, 1.0], 1.0, 2.0).unwrap();
        assert_eq!(r.threshold, 3.0);
        assert_eq!(r.achieved_volume, 2.0);
        assert_eq!(r.tie_mass, 1.0);
        assert_eq!(r.fill, 1.0);
        assert_eq!(oracle(&[4.0, 3.0, 2.0, 1.0], 1.0, 2.0), Some((3.0, 1.0, 1.0)));
    }

    #[test]
    fn full_domain_alpha_is_rejected() {
        // Domain volume 10.
        let spec = GridSpec::new(1, 16, 5.0).unwrap();
        let f = ScalarField::from_values(spec, vec![5.0; 16], 0).unwrap();
        assert!(matches!(
            volume_threshold(&f, 10.0),
            Err(Error::TargetExceedsDomain { .. })
        ));
    }

    #[test]
    fn constant_field_is_degenerate_but_exact() {
        let spec = GridSpec::new(1, 16, 5.0).unwrap();
        let f = ScalarField::from_values(spec, vec![5.0; 16], 0).unwrap();
        let r = volume_threshold(&f, 3.3).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.tie_mass, 10.0);
        assert!((r.achieved_volume - 3.3).abs() <= 1e-12 * 3.3);
    }

    #[test]
    fn unreachable_at_positive_threshold() {
        let r = threshold_values(vec![1.0, 0.0, 0.0, 0.0], 1.0, 2.0);
        assert!(matches!(r, Err(Error::UnreachableVolume { .. })));
    }

    #[test]
    fn fixed_threshold_is_a_step() {
        let spec = GridSpec::new(1, 8, 1.0).unwrap();
        let values = vec![0.2, 0.7, 0.2, 0.7, 0.2, 0.7, 0.2, 0.7];
        let f = ScalarField::from_values(spec, values, 0).unwrap();
        let rule = SharpeningRule::new(RuleKind::FixedThreshold { threshold: 0.5 }, 10.0).unwrap();
        let out = apply_sharpening(&f, &rule).unwrap().field;
        assert_eq!(out.values(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn clipped_identity_inside_support() {
        let spec = GridSpec::new(2, 8, 1.0).unwrap();
        let f = ScalarField::from_fn(spec, |p| 0.5 + 0.4 * p[0] * p[1]);
        let rule = SharpeningRule::new(
            RuleKind::ClippedLinear {
                slope: 1.0,
                intercept: 0.0,
            },
            10.0,
        )
        .unwrap();
        assert_eq!(apply_sharpening(&f, &rule).unwrap().field, f);
    }

    #[test]
    fn support_cutoff_zeroes_the_outside() {
        let spec = GridSpec::new(2, 16, 2.0).unwrap();
        let f = ScalarField::from_fn(spec, |_| 1.0);
        let rule = SharpeningRule::new(RuleKind::FixedThreshold { threshold: 0.5 }, 1.0).unwrap();
        let out = apply_sharpening(&f, &rule).unwrap().field;
        for (i, v) in out.values().iter().enumerate() {
            let inside = norm(&spec.center(i)) <= 1.0;
            assert_eq!(*v, if inside { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn volume_threshold_on_four_cells() {
        // Four equal-volume cells inside the support; the rest far away.
        let spec = GridSpec::new(1, 8, 4.0).unwrap();
        let values = vec![0.0, 0.0, 4.0, 3.0, 2.0, 1.0, 0.0, 0.0];
        let f = ScalarField::from_values(spec, values, 0).unwrap();
        let rule = SharpeningRule::new(RuleKind::VolumeThreshold { alpha: 2.0 }, 2.0).unwrap();
        let out = apply_sharpening(&f, &rule).unwrap();
        assert_eq!(out.field.values(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(out.threshold.unwrap().threshold, 3.0);
    }

    #[test]
    fn invalid_rules_name_their_key() {
        let err = SharpeningRule::new(
            RuleKind::ClippedLinear {
                slope: -1.0,
                intercept: 0.0,
            },
            1.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("rule.slope"));
        let err = SharpeningRule::new(RuleKind::VolumeThreshold { alpha: 0.0 }, 1.0).unwrap_err();
        assert!(err.to_string().contains("rule.alpha"));
    }

    proptest! {
        #[test]
        fn threshold_sandwich_and_exact_volume(
            values in prop::collection::vec(0u8..6, 1..64),
            frac in 0.01f64..0.99,
        ) {
            let values: Vec<f64> = values.into_iter().map(|v| v as f64 + 1.0).collect();
            let cell_volume = 0.25;
            let alpha = frac * values.len() as f64 * cell_volume;
            let r = threshold_values(values.clone(), cell_volume, alpha).unwrap();
            let strict = values.iter().filter(|v| **v > r.threshold).count() as f64 * cell_volume;
            let closed = values.iter().filter(|v| **v >= r.threshold).count() as f64 * cell_volume;
            prop_assert!(strict < alpha && alpha <= closed);
            prop_assert!((r.achieved_volume - alpha).abs() <= 1e-12 * alpha);
            prop_assert_eq!(oracle(&values, cell_volume, alpha), Some((r.threshold, r.tie_mass, r.fill)));
        }

        #[test]
        fn superlevel_volume_is_nonincreasing(values in prop::collection::vec(-10i32..10, 1..80)) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let mut levels = values.clone();
            levels.sort_by(|a, b| a.total_cmp(b));
            levels.dedup();
            let volumes: Vec<usize> = levels
                .iter()
                .map(|c| values.iter().filter(|v| *v >= c).count())
                .collect();
            prop_assert!(volumes.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
