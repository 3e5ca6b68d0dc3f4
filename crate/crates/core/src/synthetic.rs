//! Draws from a known ICM prior, for generative checks and simulation.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::{icm_covariance, SpatialHyperparams, TaskCovariance};
use crate::mtgp::{Dataset, Observation};

#[derive(Debug, Clone)]
pub struct IcmPrior {
    pub spatial: SpatialHyperparams,
    pub tasks: TaskCovariance,
}

impl IcmPrior {
    pub fn new(spatial: SpatialHyperparams, tasks: TaskCovariance) -> Self {
        Self { spatial, tasks }
    }

    pub fn covariance(&self, queries: &[(usize, Vec<f64>)]) -> Result<DMatrix<f64>> {
        let q = queries.len();
        let mut k = DMatrix::zeros(q, q);
        for i in 0..q {
            for j in 0..=i {
                let v = icm_covariance(
                    queries[i].0,
                    &queries[i].1,
                    queries[j].0,
                    &queries[j].1,
                    &self.tasks,
                    &self.spatial,
                )?;
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// One joint draw of the latent functions at `queries`.
    pub fn sample<R: Rng + ?Sized>(&self, queries: &[(usize, Vec<f64>)], rng: &mut R) -> Result<Vec<f64>> {
        let k = self.covariance(queries)?;
        let l = psd_factor(k)?;
        let z = DVector::from_fn(queries.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok((l * z).iter().copied().collect())
    }

    /// A dataset of noisy draws at `queries` plus the noiseless latent values.
    pub fn sample_dataset<R: Rng + ?Sized>(
        &self,
        queries: &[(usize, Vec<f64>)],
        noise_variance: f64,
        rng: &mut R,
    ) -> Result<(Dataset, Vec<f64>)> {
        let f = self.sample(queries, rng)?;
        let sd = noise_variance.sqrt();
        let observations = queries
            .iter()
            .zip(&f)
            .map(|((t, x), fv)| {
                let eps: f64 = rng.sample(StandardNormal);
                Observation::new(x.clone(), *t, fv + sd * eps, noise_variance)
            })
            .collect();
        let ds = Dataset::from_observations("synthetic", self.spatial.dim(), observations)?;
        Ok((ds, f))
    }
}

/// Lower factor of a PSD matrix, adding escalating diagonal jitter as needed.
pub fn psd_factor(k: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    let scale = (k.trace() / n.max(1) as f64).max(f64::MIN_POSITIVE);
    let mut jitter = 1e-10;
    loop {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter * scale;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok(c.unpack());
        }
        if jitter > 1e-4 {
            return Err(Error::NotPositiveDefinite { jitter });
        }
        jitter *= 10.0;
    }
}

/// `n` independent uniform points in `[0,1]^dim`, each tagged with `task`.
pub fn uniform_queries<R: Rng + ?Sized>(n: usize, dim: usize, task: usize, rng: &mut R) -> Vec<(usize, Vec<f64>)> {
    (0..n)
        .map(|_| (task, (0..dim).map(|_| rng.random::<f64>()).collect()))
        .collect()
}
