//! Negated finite-sample energy score loss and its gradient with
//! respect to the ensemble samples (α = 1, Euclidean norm).

use crate::error::{Error, Result};
use crate::mathx;

/// One training item: the observed target and the network's ensemble
/// of predictions for its input.
#[derive(Debug, Clone)]
pub struct EnsemblePrediction {
    pub target: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

/// Switch-over point to the sorted evaluation of the pairwise term for
/// scalar outputs.
const SORTED_PAIRWISE_MIN: usize = 256;

fn check_dims(y: &[f64], samples: &[&[f64]]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Usage("ensemble must contain at least one sample".into()));
    }
    if samples.iter().any(|s| s.len() != y.len()) {
        return Err(Error::ShapeMismatch(format!(
            "target has dimension {}, but a sample differs",
            y.len()
        )));
    }
    Ok(())
}

#[inline]
fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s.sqrt()
}

/// Sum over all ordered pairs (i ≠ j) of |s_i - s_j| for scalars,
/// computed in O(n log n) from the sorted order.
fn pairwise_abs_sum_sorted(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = sorted.len() as f64;
    let mut s = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        s += v * (2.0 * k as f64 - n + 1.0);
    }
    2.0 * s
}

fn pairwise_dist_sum(samples: &[&[f64]]) -> f64 {
    let nb = samples.len();
    if samples[0].len() == 1 && nb > SORTED_PAIRWISE_MIN {
        let scalars: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        return pairwise_abs_sum_sorted(&scalars);
    }
    let mut total = 0.0;
    for i in 0..nb {
        for j in (i + 1)..nb {
            total += dist(samples[i], samples[j]);
        }
    }
    2.0 * total
}

/// L(y, {ŷ}) = (1/Nb) Σ_i ‖y − ŷ_i‖ − (1/(2 Nb²)) Σ_i Σ_{j≠i} ‖ŷ_i − ŷ_j‖.
///
/// The first term pulls samples toward the target; the second pushes
/// them apart so the cloud spreads to the conditional distribution.
pub fn energy_loss(y: &[f64], samples: &[&[f64]]) -> Result<f64> {
    check_dims(y, samples)?;
    let nb = samples.len() as f64;
    let attract: f64 = samples.iter().map(|s| dist(y, s)).sum::<f64>() / nb;
    let repulse = pairwise_dist_sum(samples) / (2.0 * nb * nb);
    Ok(attract - repulse)
}

/// Convenience wrapper over owned sample vectors.
pub fn energy_loss_owned(y: &[f64], samples: &[Vec<f64>]) -> Result<f64> {
    let refs: Vec<&[f64]> = samples.iter().map(|s| s.as_slice()).collect();
    energy_loss(y, &refs)
}

/// ∂L/∂ŷ_i = (1/Nb)·u(ŷ_i − y) − (1/Nb²)·Σ_{j≠i} u(ŷ_i − ŷ_j) with
/// u(v) = v/‖v‖ and u(0) = 0.
pub fn energy_loss_grad(y: &[f64], samples: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    let dim = y.len();
    let mut flat = vec![0.0; samples.len() * dim];
    energy_loss_grad_into(y, samples, 1.0, &mut flat)?;
    Ok(flat.chunks_exact(dim).map(|r| r.to_vec()).collect())
}

/// Writes `scale · ∂L/∂ŷ_i` into `out`, a flat (Nb × dim) row-major
/// buffer.
pub(crate) fn energy_loss_grad_into(
    y: &[f64],
    samples: &[&[f64]],
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    check_dims(y, samples)?;
    let nb = samples.len();
    let dim = y.len();
    if out.len() != nb * dim {
        return Err(Error::ShapeMismatch(format!(
            "gradient buffer holds {} values, need {}",
            out.len(),
            nb * dim
        )));
    }
    let inv_nb = 1.0 / nb as f64;
    let inv_nb2 = inv_nb * inv_nb;
    // unit direction accumulator per sample
    let mut acc = vec![0.0; nb * dim];
    for i in 0..nb {
        for j in (i + 1)..nb {
            let d = dist(samples[i], samples[j]);
            if d > 0.0 {
                for k in 0..dim {
                    let u = (samples[i][k] - samples[j][k]) / d;
                    acc[i * dim + k] += u;
                    acc[j * dim + k] -= u;
                }
            }
        }
    }
    for i in 0..nb {
        let dy = dist(samples[i], y);
        for k in 0..dim {
            let attract = if dy > 0.0 {
                (samples[i][k] - y[k]) / dy
            } else {
                0.0
            };
            out[i * dim + k] = scale * (inv_nb * attract - inv_nb2 * acc[i * dim + k]);
        }
    }
    Ok(())
}

/// Mean of [`energy_loss`] over a batch.
pub fn minibatch_loss(batch: &[EnsemblePrediction]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Usage("minibatch must be non-empty".into()));
    }
    let losses: Vec<f64> = batch
        .iter()
        .map(|item| {
            let refs: Vec<&[f64]> = item.samples.iter().map(|s| s.as_slice()).collect();
            energy_loss(&item.target, &refs)
        })
        .collect::<Result<_>>()?;
    Ok(mathx::pairwise_sum(&losses) / losses.len() as f64)
}
