//! Synthetic dataset generators, their analytic conditional densities,
//! CSV ingestion and the quantile-normal preprocessor.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::compute::DenseMatrix;
use crate::error::{Error, Result};
use crate::mathx;
use crate::metrics::{DensityGrid, GridSpec};

pub const UNIMODAL_STD: f64 = 0.4;
pub const THREE_CURVES_STD: f64 = 0.15;
pub const RING_STD: f64 = 0.1;
pub const RING_SCALE: f64 = 0.6;
/// θ is uniform on [-RING_THETA_MAX, RING_THETA_MAX].
pub const RING_THETA_MAX: f64 = 3.0 * PI / 4.0;

/// The three axis-aligned unit squares of the function-sampling
/// dataset, as (x-range, y-range) pairs: a staggered arrangement of
/// disconnected regions.
pub const SQUARES: [((f64, f64), (f64, f64)); 3] = [
    ((-1.5, -0.5), (-1.5, -0.5)),
    ((-0.5, 0.5), (0.5, 1.5)),
    ((0.5, 1.5), (-1.5, -0.5)),
];

/// Where a dataset came from; written next to exported CSVs so runs
/// can be reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
}

impl Provenance {
    pub fn generator(name: &str, seed: u64, params: serde_json::Value) -> Self {
        Self {
            source: name.to_string(),
            seed: Some(seed),
            params,
        }
    }

    pub fn csv(path: &Path) -> Self {
        Self {
            source: format!("csv:{}", path.display()),
            seed: None,
            params: serde_json::Value::Null,
        }
    }
}

/// Feature matrix plus regression targets with naming and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub targets: DenseMatrix,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.cols()
    }

    /// Row subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = DenseMatrix::from_fn(indices.len(), self.feature_dim(), |i, j| {
            self.features.get(indices[i], j)
        });
        let targets = DenseMatrix::from_fn(indices.len(), self.target_dim(), |i, j| {
            self.targets.get(indices[i], j)
        });
        Dataset {
            features,
            targets,
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Writes the dataset as RFC-4180 CSV with a header row. Values use
    /// the shortest representation that parses back to the same f64.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<&str> = self
            .feature_names
            .iter()
            .chain(self.target_names.iter())
            .map(|s| s.as_str())
            .collect();
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = Vec::with_capacity(self.feature_dim() + self.target_dim());
            for v in self.features.row(i) {
                rec.push(format!("{v}"));
            }
            for v in self.targets.row(i) {
                rec.push(format!("{v}"));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_provenance(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.provenance)?;
        std::fs::write(path, json)?;
        Ok(())
    }
}

fn single_feature_dataset(
    xs: Vec<f64>,
    ys: Vec<Vec<f64>>,
    target_names: &[&str],
    provenance: Provenance,
) -> Dataset {
    let n = xs.len();
    let features = DenseMatrix::from_fn(n, 1, |i, _| xs[i]);
    let targets = DenseMatrix::from_fn(n, ys[0].len(), |i, j| ys[i][j]);
    Dataset {
        features,
        targets,
        feature_names: vec!["x".into()],
        target_names: target_names.iter().map(|s| s.to_string()).collect(),
        provenance,
    }
}

/// y = exp(sin(πx)) + ε with ε ~ N(0, 0.4²) and x uniform on [-1, 1].
pub fn gen_unimodal(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Usage("n must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, UNIMODAL_STD).expect("valid std");
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.gen_range(-1.0..=1.0);
        let y = (PI * x).sin().exp() + noise.sample(&mut rng);
        xs.push(x);
        ys.push(vec![y]);
    }
    Ok(single_feature_dataset(
        xs,
        ys,
        &["y"],
        Provenance::generator("unimodal", seed, serde_json::json!({ "n": n })),
    ))
}

/// Three crossing curves y ∈ {x, cos x, -cos x} + ε with
/// ε ~ N(0, 0.15²) and x uniform on [-π/2, π/2]; `n_per_branch`
/// points from each curve.
pub fn gen_multimodal(n_per_branch: usize, seed: u64) -> Result<Dataset> {
    if n_per_branch == 0 {
        return Err(Error::Usage("n_per_branch must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, THREE_CURVES_STD).expect("valid std");
    let mut xs = Vec::with_capacity(3 * n_per_branch);
    let mut ys = Vec::with_capacity(3 * n_per_branch);
    for branch in 0..3 {
        for _ in 0..n_per_branch {
            let x: f64 = rng.gen_range(-PI / 2.0..=PI / 2.0);
            let mean = match branch {
                0 => x,
                1 => x.cos(),
                _ => -x.cos(),
            };
            xs.push(x);
            ys.push(vec![mean + noise.sample(&mut rng)]);
        }
    }
    Ok(single_feature_dataset(
        xs,
        ys,
        &["y"],
        Provenance::generator(
            "multimodal",
            seed,
            serde_json::json!({ "n_per_branch": n_per_branch }),
        ),
    ))
}

/// `n` points uniform inside the three unit squares of [`SQUARES`],
/// n/3 in each.
pub fn gen_squares(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || n % 3 != 0 {
        return Err(Error::Usage(format!(
            "n must be a positive multiple of 3, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per = n / 3;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for ((x_lo, x_hi), (y_lo, y_hi)) in SQUARES {
        for _ in 0..per {
            xs.push(rng.gen_range(x_lo..=x_hi));
            ys.push(vec![rng.gen_range(y_lo..=y_hi)]);
        }
    }
    Ok(single_feature_dataset(
        xs,
        ys,
        &["y"],
        Provenance::generator("squares", seed, serde_json::json!({ "n": n })),
    ))
}

/// Two-dimensional targets y = 0.6·(cos θ, sin θ)·x + (ε, ε') with
/// θ ~ U[-3π/4, 3π/4], ε ~ N(0, 0.1²), and x on an equidistant grid
/// over [0, 1].
pub fn gen_ring2d(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Usage("n must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, RING_STD).expect("valid std");
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let x = if n == 1 {
            0.0
        } else {
            i as f64 / (n - 1) as f64
        };
        let theta = rng.gen_range(-RING_THETA_MAX..=RING_THETA_MAX);
        let y1 = RING_SCALE * theta.cos() * x + noise.sample(&mut rng);
        let y2 = RING_SCALE * theta.sin() * x + noise.sample(&mut rng);
        xs.push(x);
        ys.push(vec![y1, y2]);
    }
    Ok(single_feature_dataset(
        xs,
        ys,
        &["y1", "y2"],
        Provenance::generator("ring2d", seed, serde_json::json!({ "n": n })),
    ))
}

/// Analytic conditional density p(y|x) of a synthetic generator;
/// the ground truth the evaluation metrics compare against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionalDensity {
    /// N(exp(sin πx), 0.4²)
    Unimodal,
    /// Equal-weight mixture of N(x, σ²), N(cos x, σ²), N(-cos x, σ²)
    Multimodal,
    /// The θ-mixture of isotropic Gaussians from the 2-D generator
    Ring2d,
}

impl ConditionalDensity {
    pub fn for_generator(name: &str) -> Option<Self> {
        match name {
            "unimodal" => Some(Self::Unimodal),
            "multimodal" => Some(Self::Multimodal),
            "ring2d" => Some(Self::Ring2d),
            _ => None,
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            Self::Ring2d => 2,
            _ => 1,
        }
    }

    fn branch_means(self, x: f64) -> Vec<f64> {
        match self {
            Self::Unimodal => vec![(PI * x).sin().exp()],
            Self::Multimodal => vec![x, x.cos(), -x.cos()],
            Self::Ring2d => unreachable!("scalar branches only"),
        }
    }

    fn noise_std(self) -> f64 {
        match self {
            Self::Unimodal => UNIMODAL_STD,
            Self::Multimodal => THREE_CURVES_STD,
            Self::Ring2d => RING_STD,
        }
    }

    /// Density value at target `y` given input `x`.
    pub fn pdf(self, x: f64, y: &[f64]) -> f64 {
        match self {
            Self::Unimodal | Self::Multimodal => {
                let s = self.noise_std();
                let means = self.branch_means(x);
                let k = means.len() as f64;
                means
                    .iter()
                    .map(|m| mathx::norm_pdf((y[0] - m) / s) / s)
                    .sum::<f64>()
                    / k
            }
            Self::Ring2d => {
                // midpoint quadrature over θ
                const N_THETA: usize = 512;
                let s = RING_STD;
                let mut acc = 0.0;
                for k in 0..N_THETA {
                    let theta =
                        -RING_THETA_MAX + (k as f64 + 0.5) / N_THETA as f64 * 2.0 * RING_THETA_MAX;
                    let m1 = RING_SCALE * theta.cos() * x;
                    let m2 = RING_SCALE * theta.sin() * x;
                    acc += mathx::norm_pdf((y[0] - m1) / s) * mathx::norm_pdf((y[1] - m2) / s);
                }
                acc / (N_THETA as f64 * s * s)
            }
        }
    }

    /// Conditional CDF for scalar targets.
    pub fn cdf1(self, x: f64, y: f64) -> Result<f64> {
        if self.output_dim() != 1 {
            return Err(Error::UnsupportedDimension(
                "cdf1 is defined for scalar targets only".into(),
            ));
        }
        let s = self.noise_std();
        let means = self.branch_means(x);
        let k = means.len() as f64;
        Ok(means
            .iter()
            .map(|m| mathx::norm_cdf((y - m) / s))
            .sum::<f64>()
            / k)
    }

    /// Effective support [lo, hi] per output dimension (means ± 4σ).
    pub fn support_hint(self, x: f64) -> Vec<(f64, f64)> {
        match self {
            Self::Unimodal | Self::Multimodal => {
                let s = self.noise_std();
                let means = self.branch_means(x);
                let lo = means.iter().cloned().fold(f64::INFINITY, f64::min) - 4.0 * s;
                let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 4.0 * s;
                vec![(lo, hi)]
            }
            Self::Ring2d => {
                let r = RING_SCALE * x.abs() + 4.0 * RING_STD;
                vec![(-r, r), (-r, r)]
            }
        }
    }

    /// Discretizes p(·|x) onto `spec`, normalized to unit mass.
    pub fn discretize(self, x: f64, spec: &GridSpec) -> Result<DensityGrid> {
        if spec.dims() != self.output_dim() {
            return Err(Error::GridMismatch(format!(
                "density is {}-dimensional, grid is {}-dimensional",
                self.output_dim(),
                spec.dims()
            )));
        }
        match self {
            Self::Unimodal | Self::Multimodal => {
                let cells = spec.cells()[0];
                let mut masses = Vec::with_capacity(cells);
                for c in 0..cells {
                    let (lo, hi) = spec.cell_bounds(0, c);
                    masses.push((self.cdf1(x, hi)? - self.cdf1(x, lo)?).max(0.0));
                }
                DensityGrid::new_normalized(spec.clone(), masses)
            }
            Self::Ring2d => {
                // separable Gaussian factors per θ make each quadrature
                // step an outer product over cell centers
                const N_THETA: usize = 512;
                let (nx, ny) = (spec.cells()[0], spec.cells()[1]);
                let c1: Vec<f64> = (0..nx).map(|i| spec.cell_center(0, i)).collect();
                let c2: Vec<f64> = (0..ny).map(|j| spec.cell_center(1, j)).collect();
                let s = RING_STD;
                let mut masses = vec![0.0; nx * ny];
                let mut f1 = vec![0.0; nx];
                let mut f2 = vec![0.0; ny];
                for k in 0..N_THETA {
                    let theta = -RING_THETA_MAX
                        + (k as f64 + 0.5) / N_THETA as f64 * 2.0 * RING_THETA_MAX;
                    let m1 = RING_SCALE * theta.cos() * x;
                    let m2 = RING_SCALE * theta.sin() * x;
                    for (f, c) in f1.iter_mut().zip(&c1) {
                        let t = (c - m1) / s;
                        *f = mathx::exp64(-0.5 * t * t);
                    }
                    for (f, c) in f2.iter_mut().zip(&c2) {
                        let t = (c - m2) / s;
                        *f = mathx::exp64(-0.5 * t * t);
                    }
                    for (i, &a) in f1.iter().enumerate() {
                        if a > 0.0 {
                            let row = &mut masses[i * ny..(i + 1) * ny];
                            for (m, &b) in row.iter_mut().zip(&f2) {
                                *m += a * b;
                            }
                        }
                    }
                }
                DensityGrid::new_normalized(spec.clone(), masses)
            }
        }
    }
}

/// Ingestion summary: how much of the file survived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

/// Loads a delimited numeric file with a header row. Rows containing
/// missing (empty) or non-finite cells are dropped and counted in the
/// report; any other unparsable cell is a hard error naming its
/// location.
pub fn load_csv(
    path: &Path,
    target_columns: &[String],
    delimiter: u8,
) -> Result<(Dataset, IngestReport)> {
    if target_columns.is_empty() {
        return Err(Error::Usage("at least one target column is required".into()));
    }
    if !path.exists() {
        return Err(Error::Ingestion(format!(
            "file not found: {}",
            path.display()
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut target_idx = Vec::with_capacity(target_columns.len());
    for t in target_columns {
        let idx = headers.iter().position(|h| h == t).ok_or_else(|| {
            Error::Ingestion(format!(
                "target column {t:?} not found; file has columns {headers:?}"
            ))
        })?;
        target_idx.push(idx);
    }
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|i| !target_idx.contains(i))
        .collect();
    if feature_idx.is_empty() {
        return Err(Error::Ingestion(
            "no feature columns remain after removing targets".into(),
        ));
    }

    let mut feat_rows: Vec<Vec<f64>> = Vec::new();
    let mut tgt_rows: Vec<Vec<f64>> = Vec::new();
    let mut rows_read = 0usize;
    let mut rows_dropped = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        rows_read += 1;
        let mut values = Vec::with_capacity(record.len());
        let mut drop_row = false;
        for (col, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                drop_row = true;
                values.push(f64::NAN);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                Ok(_) => {
                    drop_row = true;
                    values.push(f64::NAN);
                }
                Err(_) => {
                    return Err(Error::Ingestion(format!(
                        "row {} column {:?}: unparsable cell {cell:?}",
                        line + 2,
                        headers.get(col).map(|s| s.as_str()).unwrap_or("?")
                    )));
                }
            }
        }
        if values.len() != headers.len() {
            return Err(Error::Ingestion(format!(
                "row {}: expected {} cells, got {}",
                line + 2,
                headers.len(),
                values.len()
            )));
        }
        if drop_row {
            rows_dropped += 1;
            continue;
        }
        feat_rows.push(feature_idx.iter().map(|&i| values[i]).collect());
        tgt_rows.push(target_idx.iter().map(|&i| values[i]).collect());
    }
    if feat_rows.is_empty() {
        return Err(Error::Ingestion(format!(
            "no usable rows in {} ({rows_dropped} dropped)",
            path.display()
        )));
    }
    let dataset = Dataset {
        features: DenseMatrix::from_rows(&feat_rows)?,
        targets: DenseMatrix::from_rows(&tgt_rows)?,
        feature_names: feature_idx.iter().map(|&i| headers[i].clone()).collect(),
        target_names: target_idx.iter().map(|&i| headers[i].clone()).collect(),
        provenance: Provenance::csv(path),
    };
    Ok((
        dataset,
        IngestReport {
            rows_read,
            rows_dropped,
        },
    ))
}

// ---------------------------------------------------------------------
// Quantile-normal transform
// ---------------------------------------------------------------------

/// Per-column monotone map sending empirical ranks through the
/// standard-normal inverse CDF.
///
/// Fit values get plotting positions (r - 0.5)/n (ties averaged),
/// clipped to [1e-7, 1 - 1e-7] before Φ⁻¹. Between fit values the map
/// interpolates linearly in z-space, which makes forward-then-inverse
/// exact at the knots; out-of-range values clamp to the fit extremes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileNormalTransform {
    columns: Vec<ColumnMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ColumnMap {
    /// strictly increasing unique fit values
    values: Vec<f64>,
    /// Φ⁻¹ of the averaged plotting positions, same length
    zs: Vec<f64>,
}

const RANK_CLIP: f64 = 1e-7;

impl ColumnMap {
    fn fit(column: &[f64], name: &str) -> Result<Self> {
        let mut sorted = column.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite column"));
        let n = sorted.len() as f64;
        let mut values = Vec::new();
        let mut zs = Vec::new();
        let mut i = 0usize;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            // averaged plotting position over the tie group
            let mean_rank = (i + j) as f64 / 2.0 + 0.5;
            let p = (mean_rank / n).clamp(RANK_CLIP, 1.0 - RANK_CLIP);
            values.push(sorted[i]);
            zs.push(mathx::norm_ppf(p));
            i = j + 1;
        }
        if values.len() < 2 {
            return Err(Error::DegenerateColumn(name.to_string()));
        }
        Ok(Self { values, zs })
    }

    fn forward(&self, v: f64) -> f64 {
        interp(&self.values, &self.zs, v)
    }

    fn inverse(&self, z: f64) -> f64 {
        interp(&self.zs, &self.values, z)
    }
}

/// Piecewise-linear interpolation over strictly increasing knots,
/// clamped at the ends.
fn interp(xs: &[f64], ys: &[f64], v: f64) -> f64 {
    if v <= xs[0] {
        return ys[0];
    }
    if v >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let hi = xs.partition_point(|&x| x < v);
    let (x0, x1) = (xs[hi - 1], xs[hi]);
    let (y0, y1) = (ys[hi - 1], ys[hi]);
    if v == x0 {
        return y0;
    }
    if v == x1 {
        return y1;
    }
    y0 + (y1 - y0) * (v - x0) / (x1 - x0)
}

/// Fits one transform per column of `data`; fit on the training split
/// only.
pub fn qnt_fit(data: &DenseMatrix, names: &[String]) -> Result<QuantileNormalTransform> {
    if data.rows() == 0 {
        return Err(Error::Usage("cannot fit a transform on zero rows".into()));
    }
    let mut columns = Vec::with_capacity(data.cols());
    for c in 0..data.cols() {
        let col: Vec<f64> = (0..data.rows()).map(|r| data.get(r, c)).collect();
        let name = names.get(c).cloned().unwrap_or_else(|| format!("col{c}"));
        columns.push(ColumnMap::fit(&col, &name)?);
    }
    Ok(QuantileNormalTransform { columns })
}

impl QuantileNormalTransform {
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn apply_value(&self, column: usize, v: f64) -> f64 {
        self.columns[column].forward(v)
    }

    pub fn invert_value(&self, column: usize, z: f64) -> f64 {
        self.columns[column].inverse(z)
    }

    pub fn apply(&self, data: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_cols(data)?;
        Ok(DenseMatrix::from_fn(data.rows(), data.cols(), |i, j| {
            self.columns[j].forward(data.get(i, j))
        }))
    }

    pub fn invert(&self, data: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_cols(data)?;
        Ok(DenseMatrix::from_fn(data.rows(), data.cols(), |i, j| {
            self.columns[j].inverse(data.get(i, j))
        }))
    }

    fn check_cols(&self, data: &DenseMatrix) -> Result<()> {
        if data.cols() != self.columns.len() {
            return Err(Error::ShapeMismatch(format!(
                "transform was fit on {} columns, data has {}",
                self.columns.len(),
                data.cols()
            )));
        }
        Ok(())
    }
}
