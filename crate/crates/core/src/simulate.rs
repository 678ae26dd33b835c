//! Synthetic data: LPPLS trends with AR(1) errors, and seeded substreams.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::lppls::{lppls_value, LpplsError, LpplsParams, Sample};

/// Independent generator for replicate `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Feeds innovations through `ε_i = φ ε_{i-1} + η_i`, starting from the
/// stationary distribution.
pub fn ar1_from_innovations(innovations: &[f64], phi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(innovations.len());
    let mut prev = 0.0;
    for (i, &eta) in innovations.iter().enumerate() {
        let e = if i == 0 { eta / (1.0 - phi * phi).sqrt() } else { phi * prev + eta };
        out.push(e);
        prev = e;
    }
    out
}

/// Stationary AR(1) path with Gaussian innovations of standard deviation `sigma`.
pub fn ar1_path<R: Rng + ?Sized>(n: usize, phi: f64, sigma: f64, rng: &mut R) -> Vec<f64> {
    let eta: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect();
    ar1_from_innovations(&eta, phi)
}

/// `n` equidistant times on `[t1, t2]`.
pub fn equidistant(n: usize, t1: f64, t2: f64) -> Vec<f64> {
    (0..n).map(|i| t1 + (t2 - t1) * i as f64 / (n - 1) as f64).collect()
}

/// Trend from `params` at `times` plus AR(1) noise using `params.phi`.
pub fn lppls_sample<R: Rng + ?Sized>(
    params: &LpplsParams,
    times: &[f64],
    sigma: f64,
    rng: &mut R,
) -> Result<Sample, LpplsError> {
    let noise = ar1_path(times.len(), params.phi, sigma, rng);
    let y = times
        .iter()
        .zip(&noise)
        .map(|(&t, e)| lppls_value(params, t).map(|v| v + e))
        .collect::<Result<Vec<_>, _>>()?;
    Sample::new(times.to_vec(), y)
}
