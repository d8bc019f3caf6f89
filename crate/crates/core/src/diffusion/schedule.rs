use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Linear β schedule with cumulative products and posterior standard
/// deviations. Index `t` runs over `1..=N`; index 0 holds `ᾱ₀ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma_tilde: Vec<f64>,
}

pub fn make_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::Config(format!(
            "beta range must satisfy 0 < min ≤ max < 1, got [{beta_min}, {beta_max}]"
        )));
    }
    let mut beta = vec![0.0; steps + 1];
    let mut alpha_bar = vec![1.0; steps + 1];
    let mut sigma_tilde = vec![0.0; steps + 1];
    for t in 1..=steps {
        beta[t] = if steps == 1 {
            beta_min
        } else {
            beta_min + (beta_max - beta_min) * (t - 1) as f64 / (steps - 1) as f64
        };
        alpha_bar[t] = alpha_bar[t - 1] * (1.0 - beta[t]);
        sigma_tilde[t] = ((1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]) * beta[t]).sqrt();
    }
    Ok(NoiseSchedule {
        beta,
        alpha_bar,
        sigma_tilde,
    })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn sigma_tilde(&self, t: usize) -> f64 {
        self.sigma_tilde[t]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,beta,alpha_bar,sigma_tilde\n");
        for t in 1..=self.steps() {
            let _ = writeln!(s, "{t},{:e},{:e},{:e}", self.beta[t], self.alpha_bar[t], self.sigma_tilde[t]);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_cumulative_product_is_one_factor() {
        let s = make_schedule(1000, 1e-4, 0.02).unwrap();
        assert_eq!(s.alpha_bar(1), 1.0 - s.beta(1));
        assert_eq!(s.sigma_tilde(1), 0.0);
    }

    #[test]
    fn cumulative_product_matches_direct_evaluation() {
        let s = make_schedule(1000, 1e-4, 0.02).unwrap();
        let direct: f64 = (0..1000)
            .map(|i| 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0))
            .map(f64::ln)
            .sum::<f64>()
            .exp();
        assert!((s.alpha_bar(1000) - direct).abs() < 1e-12);
        assert!((s.alpha_bar(1000) - 4.0e-5).abs() < 0.1e-5);
    }

    #[test]
    fn schedule_invariants_hold() {
        let s = make_schedule(200, 1e-4, 0.02).unwrap();
        for t in 1..=200 {
            assert!(s.beta(t) > 0.0 && s.beta(t) < 1.0);
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1) && s.alpha_bar(t) > 0.0);
            assert!(s.sigma_tilde(t) <= s.beta(t).sqrt());
            if t > 1 {
                assert!(s.beta(t) > s.beta(t - 1));
            }
        }
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        assert!(make_schedule(0, 1e-4, 0.02).is_err());
        assert!(make_schedule(10, 0.0, 0.02).is_err());
        assert!(make_schedule(10, 0.03, 0.02).is_err());
        assert!(make_schedule(10, 1e-4, 1.0).is_err());
    }
}
