use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Ornstein-Uhlenbeck process with unit time step, mean zero:
/// `x ← x − θx + σ·N(0, 1)` per component.
#[derive(Clone, Debug)]
pub struct OrnsteinUhlenbeck<const N: usize> {
    theta: f64,
    sigma: f64,
    state: [f64; N],
}

impl<const N: usize> OrnsteinUhlenbeck<N> {
    pub fn new(theta: f64, sigma: f64) -> Self {
        Self {
            theta,
            sigma,
            state: [0.0; N],
        }
    }

    pub fn reset(&mut self) {
        self.state = [0.0; N];
    }

    pub fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> [f64; N] {
        for x in &mut self.state {
            let z: f64 = StandardNormal.sample(rng);
            *x += -self.theta * *x + self.sigma * z;
        }
        self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn stationary_variance() {
        // Var = σ² / (1 − (1 − θ)²) for the discrete AR(1) recursion.
        let (theta, sigma) = (0.15, 0.2);
        let mut ou = OrnsteinUhlenbeck::<1>::new(theta, sigma);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            ou.sample(&mut rng);
        }
        let n = 200_000;
        let var = (0..n).map(|_| ou.sample(&mut rng)[0].powi(2)).sum::<f64>() / n as f64;
        let want = sigma * sigma / (1.0 - (1.0 - theta) * (1.0f64 - theta));
        assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
    }

    #[test]
    fn zero_sigma_decays_to_rest() {
        let mut ou = OrnsteinUhlenbeck::<2>::new(0.15, 0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert_eq!(ou.sample(&mut rng), [0.0, 0.0]);
    }
}
