use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{NeuralError, PairClassifier, PairExample};

/// Denominator floor of the relative error, so coordinates whose true
/// gradient is zero compare on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose ±ε step crossed a ReLU or max-pool switch; the
    /// loss is not differentiable across such a step, so they are left out
    /// of `max_rel_error`.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub max_abs_gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self, threshold: f64) -> bool {
        self.max_rel_error < threshold
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn kinks(&self) -> usize {
        self.tensors.iter().map(|t| t.kinks).sum()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares analytic gradients of the mean batch loss with central
/// differences `(L(θ+ε) − L(θ−ε)) / 2ε`.
///
/// A coordinate is only compared when both perturbed forward passes take
/// the same ReLU and max-pool branches as the unperturbed one; otherwise it
/// is counted in `kinks`.
///
/// Per tensor, up to `per_tensor` coordinates are checked: half of them the
/// largest analytic gradients, the rest drawn at random under `seed`.
pub fn gradient_check(
    model: &PairClassifier,
    batch: &[PairExample],
    eps: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport, NeuralError> {
    let (_, grads) = model.loss_and_gradient(batch)?;
    let base = model.branch_signatures(batch)?;
    let names = model.tensor_names();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut tensors = Vec::new();
    for (k, g) in grads.tensors().iter().enumerate() {
        let g = g.data();
        let coords = pick_coordinates(g, per_tensor, &mut rng);
        let mut worst: f64 = 0.0;
        let mut kinks = 0;
        for &i in &coords {
            let orig = probe.tensors()[k].data()[i];
            probe.tensors_mut()[k].data_mut()[i] = orig + eps;
            let up = probe.loss(batch)?;
            let smooth_up = probe.branch_signatures(batch)? == base;
            probe.tensors_mut()[k].data_mut()[i] = orig - eps;
            let down = probe.loss(batch)?;
            let smooth_down = probe.branch_signatures(batch)? == base;
            probe.tensors_mut()[k].data_mut()[i] = orig;
            if !(smooth_up && smooth_down) {
                kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(g[i], numeric));
        }
        tensors.push(TensorCheck {
            name: names[k].clone(),
            checked: coords.len() - kinks,
            kinks,
            max_rel_error: worst,
            max_abs_gradient: g.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
        });
    }
    let max_rel_error = tensors.iter().fold(0.0, |m: f64, t| m.max(t.max_rel_error));
    Ok(GradCheckReport {
        tensors,
        max_rel_error,
    })
}

fn pick_coordinates(g: &[f64], per_tensor: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if g.len() <= per_tensor {
        return (0..g.len()).collect();
    }
    let mut by_size: Vec<usize> = (0..g.len()).collect();
    by_size.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
    let mut picked: Vec<usize> = by_size[..per_tensor / 2].to_vec();
    for i in sample(rng, g.len(), per_tensor) {
        if picked.len() == per_tensor {
            break;
        }
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    picked
}
