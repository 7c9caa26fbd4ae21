use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic stream of i.i.d. `N(0, 1)` draws.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        GaussianStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = self.next_normal());
    }

    /// Fair ±1 draw from the same stream.
    #[inline]
    pub fn next_sign(&mut self) -> i8 {
        if self.rng.random::<bool>() {
            1
        } else {
            -1
        }
    }
}

impl Iterator for GaussianStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_normal())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and a path of indices.
pub fn mix_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Uniform direction on the unit sphere (normalized Gaussian draw).
pub fn random_unit_vector(d: usize, seed: u64) -> Vec<f64> {
    let mut stream = GaussianStream::new(seed);
    loop {
        let mut v = vec![0.0; d];
        stream.fill(&mut v);
        let len = super::norm(&v);
        if len > 1e-300 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}
