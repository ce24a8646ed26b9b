//! Sample statistics over Monte Carlo runs and the report they roll up
//! into.
//!
//! All central moments use the `N - 1` divisor about the sample mean. The
//! higher moments are reported on the scale of a standard deviation: the
//! signed cube root of the third central moment and the fourth root of the
//! fourth, so all three spread measures share units with the state.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ReferenceError;

/// Per-axis statistics of a set of equally weighted vector samples.
#[derive(Debug, Clone)]
pub struct SampleStats {
    pub mean: DVector<f64>,
    pub sigma: DVector<f64>,
    pub sigma_skew: DVector<f64>,
    pub sigma_kurt: DVector<f64>,
}

pub fn sample_stats(samples: &[DVector<f64>]) -> Result<SampleStats, ReferenceError> {
    let n = samples.len();
    if n < 2 {
        return Err(ReferenceError::TooFewRuns { runs: n });
    }
    let dim = samples[0].len();
    for s in samples {
        if s.len() != dim {
            return Err(ReferenceError::DimensionMismatch { expected: dim, got: s.len() });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(ReferenceError::NonFinite);
        }
    }
    let mut mean = DVector::zeros(dim);
    for s in samples {
        mean += s;
    }
    mean /= n as f64;
    let mut m2 = DVector::zeros(dim);
    let mut m3 = DVector::zeros(dim);
    let mut m4 = DVector::zeros(dim);
    for s in samples {
        for i in 0..dim {
            let d = s[i] - mean[i];
            let d2 = d * d;
            m2[i] += d2;
            m3[i] += d2 * d;
            m4[i] += d2 * d2;
        }
    }
    let denom = (n - 1) as f64;
    let sigma = m2.map(|v: f64| (v / denom).sqrt());
    let sigma_skew = m3.map(|v: f64| (v / denom).cbrt());
    let sigma_kurt = m4.map(|v: f64| (v / denom).powf(0.25));
    Ok(SampleStats { mean, sigma, sigma_skew, sigma_kurt })
}

/// Aggregated Monte Carlo results: one entry per epoch for each per-axis
/// statistic, plus position/velocity roll-ups (the first and second halves
/// of the state) and the run bookkeeping.
///
/// `sigma_eff` is the sample spread of the estimation errors; `sigma_pred`
/// is the run-averaged square root of the filter's own covariance diagonal,
/// so comparing the two measures filter consistency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub times: Vec<f64>,
    pub mean_error: Vec<Vec<f64>>,
    pub sigma_eff: Vec<Vec<f64>>,
    pub sigma_pred: Vec<Vec<f64>>,
    pub sigma_skew: Vec<Vec<f64>>,
    pub sigma_kurt: Vec<Vec<f64>>,
    pub sigma_pos_pred: Vec<f64>,
    pub sigma_vel_pred: Vec<f64>,
    pub sigma_pos_eff: Vec<f64>,
    pub sigma_vel_eff: Vec<f64>,
    /// Successful runs; the statistics are over these only.
    pub runs: usize,
    /// `(run index, error message)` for each failed run.
    pub failures: Vec<(usize, String)>,
}

impl MCReport {
    pub fn dim(&self) -> usize {
        self.mean_error.first().map_or(0, Vec::len)
    }

    /// One row per epoch per statistic: `t,stat,x1,...,xd`.
    pub fn to_csv(&self) -> String {
        let dim = self.dim();
        let mut out = String::from("t,stat");
        for i in 1..=dim {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        let blocks: [(&str, &Vec<Vec<f64>>); 5] = [
            ("mean_error", &self.mean_error),
            ("sigma_eff", &self.sigma_eff),
            ("sigma_pred", &self.sigma_pred),
            ("sigma_skew", &self.sigma_skew),
            ("sigma_kurt", &self.sigma_kurt),
        ];
        for (k, &t) in self.times.iter().enumerate() {
            for (name, rows) in &blocks {
                out.push_str(&format!("{t},{name}"));
                for v in &rows[k] {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn a_three_sample_set_matches_hand_computation() {
        let samples = [
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 2.0),
            DVector::from_element(1, 4.0),
        ];
        let stats = sample_stats(&samples).unwrap();
        assert!((stats.mean[0] - 7.0 / 3.0).abs() < 1e-14);
        assert!((stats.sigma[0] - (7.0_f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((stats.sigma_skew[0] - (10.0_f64 / 9.0).cbrt()).abs() < 1e-14);
        assert!((stats.sigma_kurt[0] - (49.0_f64 / 9.0).powf(0.25)).abs() < 1e-14);
    }

    #[test]
    fn skew_keeps_the_sign_of_the_asymmetry() {
        let samples = [
            DVector::from_element(1, -1.0),
            DVector::from_element(1, -2.0),
            DVector::from_element(1, -4.0),
        ];
        let stats = sample_stats(&samples).unwrap();
        assert!((stats.sigma_skew[0] + (10.0_f64 / 9.0).cbrt()).abs() < 1e-14);
    }

    #[test]
    fn gaussian_draws_show_no_skew_and_normal_kurtosis() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let samples: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_element(1, rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let stats = sample_stats(&samples).unwrap();
        assert!(stats.sigma_skew[0].abs() < 0.35, "skew {}", stats.sigma_skew[0]);
        assert!(
            (stats.sigma_kurt[0] - 3.0_f64.powf(0.25)).abs() < 0.01,
            "kurtosis scale {}",
            stats.sigma_kurt[0]
        );
        assert!((stats.sigma[0] - 1.0).abs() < 0.02);
    }

    #[test]
    fn single_sample_sets_are_rejected() {
        let err = sample_stats(&[DVector::from_element(1, 1.0)]).unwrap_err();
        assert!(matches!(err, ReferenceError::TooFewRuns { runs: 1 }));
    }

    #[test]
    fn csv_layout_is_one_row_per_epoch_per_statistic() {
        let report = MCReport {
            times: vec![0.0, 0.5],
            mean_error: vec![vec![0.1, 0.2], vec![0.3, 0.4]],
            sigma_eff: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            sigma_pred: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            sigma_skew: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            sigma_kurt: vec![vec![1.3, 1.3], vec![1.3, 1.3]],
            sigma_pos_pred: vec![1.0, 1.0],
            sigma_vel_pred: vec![1.0, 1.0],
            sigma_pos_eff: vec![1.0, 1.0],
            sigma_vel_eff: vec![1.0, 1.0],
            runs: 4,
            failures: vec![],
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,stat,x1,x2");
        assert_eq!(lines.len(), 1 + 2 * 5);
        assert_eq!(lines[1], "0,mean_error,0.1,0.2");
        assert_eq!(lines[6], "0.5,mean_error,0.3,0.4");
    }
}
