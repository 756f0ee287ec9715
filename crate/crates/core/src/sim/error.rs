//! Speedup-estimate error injection.

use super::spec::TaskTypeProfile;
use super::SimError;
use crate::runtime::Variants;

/// Smallest estimate error injection can produce.
pub const SPEEDUP_FLOOR: f64 = 0.01;

/// Perturb speedup estimates by `e` percent.
///
/// Profiles are split at the median estimate of those runnable on both
/// devices: estimates below it are raised by `e`%, estimates above it are
/// lowered by `e`% and clamped to [`SPEEDUP_FLOOR`]. Estimates equal to the
/// median and device-restricted profiles are left alone. Actual GPU
/// speedups never change.
pub fn inject_error(profiles: &[TaskTypeProfile], e: f64) -> Result<Vec<TaskTypeProfile>, SimError> {
    if !(0.0..=100.0).contains(&e) {
        return Err(SimError::Config(format!("error percentage {e} outside [0, 100]")));
    }
    let mut out = profiles.to_vec();
    if e == 0.0 {
        return Ok(out);
    }
    let mut estimates: Vec<f64> = profiles
        .iter()
        .filter(|p| p.variants == Variants::Both)
        .map(TaskTypeProfile::estimate)
        .collect();
    if estimates.is_empty() {
        return Ok(out);
    }
    estimates.sort_by(f64::total_cmp);
    let n = estimates.len();
    let median = if n % 2 == 1 {
        estimates[n / 2]
    } else {
        (estimates[n / 2 - 1] + estimates[n / 2]) / 2.0
    };
    let f = e / 100.0;
    for p in out.iter_mut().filter(|p| p.variants == Variants::Both) {
        let s = p.estimate();
        if s < median {
            p.speedup_estimate = Some(s * (1.0 + f));
        } else if s > median {
            p.speedup_estimate = Some((s * (1.0 - f)).max(SPEEDUP_FLOOR));
        }
    }
    Ok(out)
}
