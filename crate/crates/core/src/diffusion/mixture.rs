use super::{NoiseSchedule, ScoreModel, StateShape};
use crate::error::{Error, Result};

/// Isotropic Gaussian mixture prior with a closed-form noise predictor.
///
/// Pushed through the forward kernel, component `k` becomes
/// `N(√ᾱ_t μ_k, (ᾱ_t σ₀² + 1 − ᾱ_t) I)`.
#[derive(Clone, Debug)]
pub struct GaussianMixtureScore {
    means: Vec<Vec<f64>>,
    weights: Vec<f64>,
    sigma0: f64,
    schedule: NoiseSchedule,
}

struct Posterior {
    /// Responsibilities.
    resp: Vec<f64>,
    /// `x − √ᾱ μ_k` per component.
    diffs: Vec<Vec<f64>>,
    var: f64,
    noise_sd: f64,
}

impl GaussianMixtureScore {
    pub fn new(means: Vec<Vec<f64>>, weights: Vec<f64>, sigma0: f64, schedule: NoiseSchedule) -> Result<Self> {
        if means.is_empty() || means.len() != weights.len() {
            return Err(Error::Config("mixture needs one weight per mean".into()));
        }
        let dim = means[0].len();
        if means.iter().any(|m| m.len() != dim) {
            return Err(Error::Config("mixture means differ in length".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("mixture weights must be positive and sum to 1".into()));
        }
        if !(sigma0 > 0.0) {
            return Err(Error::Config("mixture standard deviation must be positive".into()));
        }
        Ok(Self {
            means,
            weights,
            sigma0,
            schedule,
        })
    }

    pub fn single(mean: Vec<f64>, sigma0: f64, schedule: NoiseSchedule) -> Result<Self> {
        Self::new(vec![mean], vec![1.0], sigma0, schedule)
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    fn posterior(&self, x: &[f64], t: usize) -> Result<Posterior> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "state of length {} for mixture of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if t > self.schedule.steps() {
            return Err(Error::Config(format!("step {t} beyond schedule")));
        }
        let ab = self.schedule.alpha_bar(t);
        let var = ab * self.sigma0 * self.sigma0 + (1.0 - ab);
        let diffs: Vec<Vec<f64>> = self
            .means
            .iter()
            .map(|m| x.iter().zip(m).map(|(xv, mv)| xv - ab.sqrt() * mv).collect())
            .collect();
        let logs: Vec<f64> = diffs
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| w.ln() - d.iter().map(|v| v * v).sum::<f64>() / (2.0 * var))
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut resp: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = resp.iter().sum();
        resp.iter_mut().for_each(|r| *r /= z);
        Ok(Posterior {
            resp,
            diffs,
            var,
            noise_sd: (1.0 - ab).sqrt(),
        })
    }

    /// `log p_t(x)` of the diffused mixture.
    pub fn log_density(&self, x: &[f64], t: usize) -> Result<f64> {
        let post = self.posterior(x, t)?;
        let d = x.len() as f64;
        let terms: Vec<f64> = post
            .diffs
            .iter()
            .zip(&self.weights)
            .map(|(diff, w)| w.ln() - diff.iter().map(|v| v * v).sum::<f64>() / (2.0 * post.var))
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + terms.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
        Ok(lse - 0.5 * d * (2.0 * std::f64::consts::PI * post.var).ln())
    }

    /// `ε = −√(1−ᾱ_t)·∇log p_t(x)`.
    pub fn eps(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let post = self.posterior(x, t)?;
        Ok(Self::eps_from(&post))
    }

    fn eps_from(post: &Posterior) -> Vec<f64> {
        let mut out = vec![0.0; post.diffs[0].len()];
        for (d, r) in post.diffs.iter().zip(&post.resp) {
            for (o, v) in out.iter_mut().zip(d) {
                *o += r * v;
            }
        }
        let s = post.noise_sd / post.var;
        out.iter_mut().for_each(|o| *o *= s);
        out
    }

    /// `(∂ε/∂x)ᵀ v`; the Jacobian is symmetric.
    fn jacobian_apply(post: &Posterior, v: &[f64]) -> Vec<f64> {
        let dim = v.len();
        let mut mean = vec![0.0; dim];
        let mut out = v.to_vec();
        for (d, r) in post.diffs.iter().zip(&post.resp) {
            let dv: f64 = d.iter().zip(v).map(|(a, b)| a * b).sum();
            for i in 0..dim {
                out[i] -= r * d[i] * dv / post.var;
                mean[i] += r * d[i];
            }
        }
        let mv: f64 = mean.iter().zip(v).map(|(a, b)| a * b).sum();
        for i in 0..dim {
            out[i] += mean[i] * mv / post.var;
        }
        let s = post.noise_sd / post.var;
        out.iter_mut().for_each(|o| *o *= s);
        out
    }
}

impl ScoreModel for GaussianMixtureScore {
    fn predict_eps(&self, x: &[f64], _shape: StateShape, t: usize) -> Result<Vec<f64>> {
        self.eps(x, t)
    }

    fn predict_eps_vjp(
        &self,
        x: &[f64],
        _shape: StateShape,
        t: usize,
        v: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let post = self.posterior(x, t)?;
        let eps = Self::eps_from(&post);
        let seed = v(&eps)?;
        let g = Self::jacobian_apply(&post, &seed);
        Ok((eps, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::make_schedule;

    #[test]
    fn eps_vanishes_at_the_mode() {
        let s = make_schedule(100, 1e-4, 0.02).unwrap();
        let mu = vec![0.4, -0.3, 0.8];
        let gm = GaussianMixtureScore::single(mu.clone(), 0.5, s.clone()).unwrap();
        let x: Vec<f64> = mu.iter().map(|m| s.alpha_bar(40).sqrt() * m).collect();
        assert!(gm.eps(&x, 40).unwrap().iter().all(|e| e.abs() < 1e-15));
    }

    #[test]
    fn symmetric_pair_cancels_at_midpoint() {
        let s = make_schedule(100, 1e-4, 0.02).unwrap();
        let gm = GaussianMixtureScore::new(vec![vec![1.0, -0.5], vec![-1.0, 0.5]], vec![0.5, 0.5], 0.3, s).unwrap();
        assert!(gm.eps(&[0.0, 0.0], 30).unwrap().iter().all(|e| e.abs() < 1e-15));
    }

    #[test]
    fn eps_matches_finite_difference_of_log_density() {
        let s = make_schedule(100, 1e-4, 0.02).unwrap();
        let gm = GaussianMixtureScore::new(
            vec![vec![0.5, -0.2, 0.1], vec![-0.4, 0.3, 0.7]],
            vec![0.3, 0.7],
            0.4,
            s.clone(),
        )
        .unwrap();
        let x = vec![0.1, 0.05, 0.4];
        let t = 25;
        let eps = gm.eps(&x, t).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[i] += h;
            dn[i] -= h;
            let grad = (gm.log_density(&up, t).unwrap() - gm.log_density(&dn, t).unwrap()) / (2.0 * h);
            let want = -(1.0 - s.alpha_bar(t)).sqrt() * grad;
            assert!((eps[i] - want).abs() < 1e-6 * want.abs().max(1.0), "{i}: {} vs {want}", eps[i]);
        }
    }

    #[test]
    fn jacobian_product_matches_finite_differences() {
        let s = make_schedule(100, 1e-4, 0.02).unwrap();
        let gm = GaussianMixtureScore::new(vec![vec![0.5, -0.2], vec![-0.4, 0.3]], vec![0.4, 0.6], 0.3, s).unwrap();
        let x = vec![0.05, 0.02];
        let v = [0.7, -1.3];
        let (_, jv) = gm
            .predict_eps_vjp(&x, StateShape::flat(2), 60, &mut |_| Ok(v.to_vec()))
            .unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[i] += h;
            dn[i] -= h;
            let eu = gm.eps(&up, 60).unwrap();
            let ed = gm.eps(&dn, 60).unwrap();
            let col: f64 = (0..2).map(|k| (eu[k] - ed[k]) / (2.0 * h) * v[k]).sum();
            assert!((jv[i] - col).abs() < 1e-7);
        }
    }
}
