//! Ensemble forecasting, summary statistics and posterior function
//! sampling from trained parameters.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compute::DenseMatrix;
use crate::error::{Error, Result};
use crate::mathx;
use crate::model::ModelParams;

/// M predicted target samples for one input, with the noise draws that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleForecast {
    pub x: Vec<f64>,
    /// (M × output_dim), row i = network output under noise row i.
    pub samples: DenseMatrix,
    pub noise: DenseMatrix,
}

impl EnsembleForecast {
    pub fn m(&self) -> usize {
        self.samples.rows()
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        (0..self.m()).map(|i| self.samples.get(i, d)).collect()
    }
}

/// One posterior function draw: a fixed noise vector swept over an
/// x-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSample {
    pub noise: Vec<f64>,
    pub x_grid: Vec<Vec<f64>>,
    pub curve: Vec<Vec<f64>>,
}

/// M forward passes at `x` under i.i.d. noise from U[0,1]^{d_a};
/// deterministic given `seed`.
pub fn predict_ensemble(
    params: &ModelParams,
    x: &[f64],
    m: usize,
    seed: u64,
) -> Result<EnsembleForecast> {
    if m == 0 {
        return Err(Error::Usage("ensemble size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_a = params.config.noise_dim;
    let mut noise = DenseMatrix::zeros(m, d_a);
    for v in noise.data_mut() {
        *v = rng.gen::<f64>();
    }
    let mut xs = DenseMatrix::zeros(m, x.len());
    for i in 0..m {
        xs.row_mut(i).copy_from_slice(x);
    }
    let samples = params.forward_batch(&xs, &noise)?;
    Ok(EnsembleForecast {
        x: x.to_vec(),
        samples,
        noise,
    })
}

/// Ensemble mean per output dimension.
pub fn point_forecast(params: &ModelParams, x: &[f64], m: usize, seed: u64) -> Result<Vec<f64>> {
    let forecast = predict_ensemble(params, x, m, seed)?;
    Ok(ensemble_mean(&forecast))
}

fn ensemble_mean(f: &EnsembleForecast) -> Vec<f64> {
    (0..f.dim()).map(|d| mathx::mean(&f.column(d))).collect()
}

/// Per-dimension mean, standard deviation and quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// quantiles[level][dim]
    pub quantiles: Vec<Vec<f64>>,
}

/// Quantile by linear interpolation of the order statistics.
pub fn quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = level * (n - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Summary statistics of a forecast at the requested quantile levels.
pub fn ensemble_stats(forecast: &EnsembleForecast, levels: &[f64]) -> Result<EnsembleStats> {
    for &q in levels {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Usage(format!("quantile level {q} outside [0, 1]")));
        }
    }
    let mut mean = Vec::with_capacity(forecast.dim());
    let mut std = Vec::with_capacity(forecast.dim());
    let mut cols_sorted = Vec::with_capacity(forecast.dim());
    for d in 0..forecast.dim() {
        let mut col = forecast.column(d);
        mean.push(mathx::mean(&col));
        std.push(mathx::sample_std(&col));
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
        cols_sorted.push(col);
    }
    let quantiles = levels
        .iter()
        .map(|&q| cols_sorted.iter().map(|col| quantile(col, q)).collect())
        .collect();
    Ok(EnsembleStats {
        mean,
        std,
        quantiles,
    })
}

/// Distance of a quantile level from the distribution center:
/// 0.5 - |q - 0.5|.
pub fn quantile_depth(q: f64) -> f64 {
    0.5 - (q - 0.5).abs()
}

/// Sweeps a fixed noise vector over an x-grid; two calls with equal
/// noise produce identical curves.
pub fn sample_function(
    params: &ModelParams,
    a: &[f64],
    x_grid: &[Vec<f64>],
) -> Result<FunctionSample> {
    if x_grid.is_empty() {
        return Err(Error::Usage("x_grid must be non-empty".into()));
    }
    let xs = DenseMatrix::from_rows(x_grid)?;
    let mut noise = DenseMatrix::zeros(x_grid.len(), a.len());
    for i in 0..x_grid.len() {
        noise.row_mut(i).copy_from_slice(a);
    }
    let out = params.forward_batch(&xs, &noise)?;
    Ok(FunctionSample {
        noise: a.to_vec(),
        x_grid: x_grid.to_vec(),
        curve: (0..out.rows()).map(|i| out.row(i).to_vec()).collect(),
    })
}

/// CSV export: one row per ensemble member with its input id.
pub fn forecasts_to_csv(forecasts: &[EnsembleForecast], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = forecasts.first().map(|f| f.dim()).unwrap_or(1);
    let mut header = vec!["input_id".to_string(), "member".to_string()];
    for d in 0..dim {
        header.push(format!("y{d}"));
    }
    w.write_record(&header)?;
    for (id, f) in forecasts.iter().enumerate() {
        for i in 0..f.m() {
            let mut rec = vec![id.to_string(), i.to_string()];
            for v in f.samples.row(i) {
                rec.push(format!("{v}"));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_unimodal;
    use crate::model::{init_params, ModelConfig};
    use crate::trainer::{train, TrainConfig};
    use approx::assert_relative_eq;

    fn zero_model() -> ModelParams {
        let mut cfg = ModelConfig::new(1, 1, 1);
        cfg.init_std = 0.0;
        init_params(&cfg).unwrap()
    }

    fn small_trained_model() -> ModelParams {
        let data = gen_unimodal(60, 17).unwrap();
        let mcfg = ModelConfig::new(1, 1, 1).with_seed(3);
        let tcfg = TrainConfig::new(40, 20, 10).with_seed(4);
        train(&data, &mcfg, &tcfg).unwrap().0
    }

    #[test]
    fn zero_network_gives_constant_ensemble() {
        let params = zero_model();
        let f = predict_ensemble(&params, &[0.7], 32, 1).unwrap();
        assert!(f.samples.data().iter().all(|&v| v == 0.0));
        let stats = ensemble_stats(&f, &[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(stats.std, vec![0.0]);
        assert!(stats.quantiles.iter().all(|q| q[0] == 0.0));
    }

    #[test]
    fn singleton_ensemble_is_the_point_forecast() {
        let params = small_trained_model();
        let f = predict_ensemble(&params, &[0.2], 1, 9).unwrap();
        assert_eq!(f.m(), 1);
        let pf = point_forecast(&params, &[0.2], 1, 9).unwrap();
        assert_eq!(pf[0], f.samples.get(0, 0));
    }

    #[test]
    fn ensemble_replays_the_deterministic_network() {
        let params = small_trained_model();
        let f = predict_ensemble(&params, &[0.3], 64, 5).unwrap();
        for i in 0..f.m() {
            let direct = params.forward(&[0.3], f.noise.row(i)).unwrap();
            assert_eq!(direct.as_slice(), f.samples.row(i));
        }
    }

    #[test]
    fn seeded_ensembles_are_reproducible_and_params_untouched() {
        let params = small_trained_model();
        let mut before = Vec::new();
        params.write_to(&mut before).unwrap();
        let f1 = predict_ensemble(&params, &[0.0], 512, 7).unwrap();
        let f2 = predict_ensemble(&params, &[0.0], 512, 7).unwrap();
        assert_eq!(f1, f2);
        let mut after = Vec::new();
        params.write_to(&mut after).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn distinct_seeds_agree_in_distribution() {
        // Kolmogorov-Smirnov distance between two large ensembles at
        // the same input stays small
        let params = small_trained_model();
        let mut a = predict_ensemble(&params, &[0.1], 10_000, 1).unwrap().column(0);
        let mut b = predict_ensemble(&params, &[0.1], 10_000, 2).unwrap().column(0);
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut i = 0;
        let mut j = 0;
        let mut ks = 0.0f64;
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            ks = ks.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        assert!(ks < 0.05, "KS = {ks}");
    }

    #[test]
    fn quantile_interpolation() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.0), 1.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 1.0), 3.0);
        assert_relative_eq!(quantile(&[1.0, 2.0, 3.0], 0.25), 1.5);
        let f = EnsembleForecast {
            x: vec![0.0],
            samples: DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap(),
            noise: DenseMatrix::zeros(3, 1),
        };
        let stats = ensemble_stats(&f, &[0.5]).unwrap();
        assert_eq!(stats.quantiles[0][0], 2.0);
        assert!(ensemble_stats(&f, &[1.5]).is_err());
    }

    #[test]
    fn quantile_depth_examples() {
        assert_eq!(quantile_depth(0.5), 0.5);
        assert_eq!(quantile_depth(0.0), 0.0);
        assert_eq!(quantile_depth(1.0), 0.0);
        assert_relative_eq!(quantile_depth(0.25), 0.25);
    }

    #[test]
    fn function_samples_are_deterministic() {
        let params = small_trained_model();
        let grid: Vec<Vec<f64>> = (0..21).map(|i| vec![-1.0 + 0.1 * i as f64]).collect();
        let c1 = sample_function(&params, &[0.37], &grid).unwrap();
        let c2 = sample_function(&params, &[0.37], &grid).unwrap();
        assert_eq!(c1, c2);
        let zero = zero_model();
        let flat = sample_function(&zero, &[0.5], &grid).unwrap();
        assert!(flat.curve.iter().all(|y| y[0] == 0.0));
    }

    #[test]
    fn point_forecast_converges_in_m() {
        let params = small_trained_model();
        // |mean_M - mean_4M| should shrink as M grows
        let m1 = point_forecast(&params, &[0.0], 100, 3).unwrap()[0];
        let m2 = point_forecast(&params, &[0.0], 400, 3).unwrap()[0];
        let m3 = point_forecast(&params, &[0.0], 6400, 3).unwrap()[0];
        let m4 = point_forecast(&params, &[0.0], 25600, 3).unwrap()[0];
        let d_small = (m1 - m2).abs();
        let d_large = (m3 - m4).abs();
        assert!(
            d_large < d_small,
            "coarse delta {d_small}, fine delta {d_large}"
        );
    }

    #[test]
    fn trained_ensemble_has_spread() {
        // after training on noisy data, distinct noise values give a
        // nondegenerate spread of outputs
        let params = small_trained_model();
        let f = predict_ensemble(&params, &[0.0], 1000, 11).unwrap();
        let stats = ensemble_stats(&f, &[]).unwrap();
        assert!(stats.std[0] > 0.0);
    }

    #[test]
    fn forecast_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let params = zero_model();
        let f1 = predict_ensemble(&params, &[0.0], 3, 1).unwrap();
        let f2 = predict_ensemble(&params, &[1.0], 2, 2).unwrap();
        let path = dir.path().join("forecasts.csv");
        forecasts_to_csv(&[f1, f2], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "input_id,member,y0");
        assert_eq!(lines.len(), 6);
        assert!(lines[4].starts_with("1,0,"));
    }
}
