//! Synthetic multilabel data with correlated labels, plus noisy simulated
//! base models.
//!
//! Ground truth is a prototype mixture: a handful of latent label sets are
//! drawn, every instance picks one uniformly and then each entry is flipped
//! independently (`flip_in` for 1 -> 0, `flip_out` for 0 -> 1). Base model `k`
//! flips every truth entry with probability `model_noise[k]`.
//!
//! Randomness comes from ChaCha8 seeded with `seed`: stream 0 drives the
//! ground truth, stream `k` (1-based) drives model `k`. Models are therefore
//! independent of each other and of how many models are requested.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlcmError, Result};
use crate::types::{LabelMatrix, PredictionSet};

/// Give up on a row (or prototype) after this many rejected redraws.
const MAX_REDRAWS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n: usize,
    pub l: usize,
    pub prototypes: usize,
    /// Probability that a label belongs to a prototype.
    pub prototype_density: f64,
    pub flip_in: f64,
    pub flip_out: f64,
    /// One flip rate per base model; its length is the model count.
    pub model_noise: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 500,
            l: 20,
            prototypes: 5,
            prototype_density: 0.15,
            flip_in: 0.05,
            flip_out: 0.02,
            model_noise: vec![0.25; 10],
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn models(&self) -> usize {
        self.model_noise.len()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(MlcmError::InfeasibleSpec(format!("{name} = {v} is not in [0, 1]")))
            }
        };
        if self.n == 0 {
            return Err(MlcmError::InfeasibleSpec("n must be at least 1".into()));
        }
        if self.l < 2 {
            return Err(MlcmError::InfeasibleSpec(format!(
                "need at least 2 labels to have relevant and irrelevant ones, got {}",
                self.l
            )));
        }
        if self.prototypes == 0 {
            return Err(MlcmError::InfeasibleSpec("prototypes must be at least 1".into()));
        }
        if self.model_noise.is_empty() {
            return Err(MlcmError::InfeasibleSpec("need at least one model".into()));
        }
        rate("prototype_density", self.prototype_density)?;
        rate("flip_in", self.flip_in)?;
        rate("flip_out", self.flip_out)?;
        for (k, &r) in self.model_noise.iter().enumerate() {
            rate(&format!("model_noise[{}]", k + 1), r)?;
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn non_degenerate(row: &[bool]) -> bool {
    row.iter().any(|&b| b) && row.iter().any(|&b| !b)
}

/// Draws a ground-truth label matrix in which every row has at least one
/// relevant and one irrelevant label.
pub fn generate_truth(spec: &SynthSpec) -> Result<LabelMatrix> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, 0);
    let l = spec.l;

    let mut prototypes = Vec::with_capacity(spec.prototypes);
    for _ in 0..spec.prototypes {
        let proto = (0..MAX_REDRAWS)
            .map(|_| (0..l).map(|_| rng.gen_bool(spec.prototype_density)).collect::<Vec<_>>())
            .find(|p| non_degenerate(p))
            .ok_or_else(|| {
                MlcmError::InfeasibleSpec(format!(
                    "prototype_density {} never yields a mixed prototype",
                    spec.prototype_density
                ))
            })?;
        prototypes.push(proto);
    }

    let mut values = Vec::with_capacity(spec.n * l);
    for _ in 0..spec.n {
        let proto = &prototypes[rng.gen_range(0..prototypes.len())];
        let row = (0..MAX_REDRAWS)
            .map(|_| {
                proto
                    .iter()
                    .map(|&on| {
                        if on {
                            !rng.gen_bool(spec.flip_in)
                        } else {
                            rng.gen_bool(spec.flip_out)
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .find(|r| non_degenerate(r))
            .ok_or_else(|| {
                MlcmError::InfeasibleSpec("flip rates never yield a mixed label row".into())
            })?;
        values.extend(row.into_iter().map(u8::from));
    }
    LabelMatrix::from_row_slice(spec.n, l, &values)
}

/// Flips every entry of `truth` with rate `noise`, using stream `model`.
pub fn simulate_model(truth: &LabelMatrix, noise: f64, seed: u64, model: usize) -> Result<LabelMatrix> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(MlcmError::InfeasibleSpec(format!("noise {noise} is not in [0, 1]")));
    }
    let mut rng = stream_rng(seed, model as u64);
    let (n, l) = truth.shape();
    // row-major draw order
    let mut flips = vec![false; n * l];
    for f in flips.iter_mut() {
        *f = rng.gen_bool(noise);
    }
    LabelMatrix::from_fn(n, l, |i, j| truth.get(i, j) ^ flips[i * l + j])
}

/// `m` noisy copies of `truth`; model `k` uses `spec.model_noise[k]`.
pub fn simulate_base_models(truth: &LabelMatrix, m: usize, spec: &SynthSpec) -> Result<PredictionSet> {
    if m != spec.model_noise.len() {
        return Err(MlcmError::InfeasibleSpec(format!(
            "asked for {m} models but model_noise has {} rates",
            spec.model_noise.len()
        )));
    }
    let models = spec
        .model_noise
        .iter()
        .enumerate()
        .map(|(k, &noise)| simulate_model(truth, noise, spec.seed, k + 1))
        .collect::<Result<Vec<_>>>()?;
    PredictionSet::new(models)
}

/// Truth plus the spec's base models.
pub fn generate(spec: &SynthSpec) -> Result<(LabelMatrix, PredictionSet)> {
    let truth = generate_truth(spec)?;
    let set = simulate_base_models(&truth, spec.models(), spec)?;
    Ok((truth, set))
}

/// Label co-occurrence frequencies `C[a][b] = #{i : z_ia = z_ib = 1} / n`.
pub fn cooccurrence(truth: &LabelMatrix) -> Vec<Vec<f64>> {
    let (n, l) = truth.shape();
    let mut c = vec![vec![0.0; l]; l];
    for i in 0..n {
        for a in 0..l {
            if !truth.get(i, a) {
                continue;
            }
            for b in 0..l {
                if truth.get(i, b) {
                    c[a][b] += 1.0;
                }
            }
        }
    }
    for row in c.iter_mut() {
        for v in row.iter_mut() {
            *v /= n as f64;
        }
    }
    c
}
