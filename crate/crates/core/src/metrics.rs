//! Distribution distances and proper scoring rules over a shared
//! discretized-density representation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compute::DenseMatrix;
use crate::error::{Error, Result};
use crate::mathx;

/// A uniform 1-D or 2-D grid: per-dimension bounds and cell counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    lo: Vec<f64>,
    hi: Vec<f64>,
    cells: Vec<usize>,
}

impl GridSpec {
    pub fn new_1d(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![cells])
    }

    pub fn new_2d(dim0: (f64, f64, usize), dim1: (f64, f64, usize)) -> Result<Self> {
        Self::new(
            vec![dim0.0, dim1.0],
            vec![dim0.1, dim1.1],
            vec![dim0.2, dim1.2],
        )
    }

    fn new(lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() > 2 {
            return Err(Error::UnsupportedDimension(format!(
                "grids are 1-D or 2-D, got {} dims",
                lo.len()
            )));
        }
        for d in 0..lo.len() {
            if !(lo[d].is_finite() && hi[d].is_finite() && lo[d] < hi[d]) {
                return Err(Error::Usage(format!(
                    "grid bounds must be finite and increasing, got [{}, {}]",
                    lo[d], hi[d]
                )));
            }
            if cells[d] == 0 {
                return Err(Error::Usage("grid needs at least one cell".into()));
            }
        }
        Ok(Self { lo, hi, cells })
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn bounds(&self, dim: usize) -> (f64, f64) {
        (self.lo[dim], self.hi[dim])
    }

    pub fn width(&self, dim: usize) -> f64 {
        (self.hi[dim] - self.lo[dim]) / self.cells[dim] as f64
    }

    /// Full extent of dimension `dim`.
    pub fn span(&self, dim: usize) -> f64 {
        self.hi[dim] - self.lo[dim]
    }

    pub fn cell_center(&self, dim: usize, i: usize) -> f64 {
        self.lo[dim] + (i as f64 + 0.5) * self.width(dim)
    }

    pub fn cell_bounds(&self, dim: usize, i: usize) -> (f64, f64) {
        let w = self.width(dim);
        (self.lo[dim] + i as f64 * w, self.lo[dim] + (i + 1) as f64 * w)
    }

    /// Cell index for a coordinate, clipped into range; the bool says
    /// whether clipping occurred.
    fn locate(&self, dim: usize, v: f64) -> (usize, bool) {
        let idx = ((v - self.lo[dim]) / self.width(dim)).floor();
        if idx < 0.0 {
            (0, true)
        } else if idx as usize >= self.cells[dim] {
            // the upper bound itself belongs to the last cell
            (self.cells[dim] - 1, v > self.hi[dim])
        } else {
            (idx as usize, false)
        }
    }
}

/// Probability masses on a [`GridSpec`]: non-negative, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    spec: GridSpec,
    masses: Vec<f64>,
}

impl DensityGrid {
    /// Wraps masses that already sum to 1 (±1e-9).
    pub fn new(spec: GridSpec, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != spec.n_cells() {
            return Err(Error::ShapeMismatch(format!(
                "grid has {} cells, got {} masses",
                spec.n_cells(),
                masses.len()
            )));
        }
        if masses.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return Err(Error::Domain("cell masses must be finite and >= 0".into()));
        }
        let total = mathx::pairwise_sum(&masses);
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "cell masses sum to {total}, expected 1"
            )));
        }
        Ok(Self { spec, masses })
    }

    /// Normalizes non-negative weights to unit mass.
    pub fn new_normalized(spec: GridSpec, mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() != spec.n_cells() {
            return Err(Error::ShapeMismatch(format!(
                "grid has {} cells, got {} weights",
                spec.n_cells(),
                weights.len()
            )));
        }
        if weights.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return Err(Error::Domain("weights must be finite and >= 0".into()));
        }
        let total = mathx::pairwise_sum(&weights);
        if total <= 0.0 {
            return Err(Error::Domain("total weight must be positive".into()));
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        Ok(Self {
            spec,
            masses: weights,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

fn check_same_grid(p: &DensityGrid, q: &DensityGrid) -> Result<()> {
    if p.spec != q.spec {
        return Err(Error::GridMismatch(
            "density grids use different discretizations".into(),
        ));
    }
    Ok(())
}

/// A histogram density plus the number of samples that fell outside
/// the grid and were clipped into end cells.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub density: DensityGrid,
    pub clipped: usize,
}

/// Normalized histogram of `samples` (one row per observation) on the
/// grid. Samples outside the grid are clipped into the end cells and
/// counted.
pub fn histogram_density(samples: &DenseMatrix, spec: &GridSpec) -> Result<Histogram> {
    if samples.rows() == 0 {
        return Err(Error::Usage("histogram needs at least one sample".into()));
    }
    if samples.cols() != spec.dims() {
        return Err(Error::ShapeMismatch(format!(
            "samples are {}-dimensional, grid is {}-dimensional",
            samples.cols(),
            spec.dims()
        )));
    }
    let mut counts = vec![0.0f64; spec.n_cells()];
    let mut clipped = 0usize;
    for r in 0..samples.rows() {
        let row = samples.row(r);
        let mut flat = 0usize;
        let mut was_clipped = false;
        for d in 0..spec.dims() {
            let (idx, clip) = spec.locate(d, row[d]);
            was_clipped |= clip;
            flat = flat * spec.cells[d] + idx;
        }
        counts[flat] += 1.0;
        if was_clipped {
            clipped += 1;
        }
    }
    let n = samples.rows() as f64;
    for c in counts.iter_mut() {
        *c /= n;
    }
    Ok(Histogram {
        density: DensityGrid::new(spec.clone(), counts)?,
        clipped,
    })
}

/// 1-D histogram over scalar samples.
pub fn histogram_density_1d(samples: &[f64], spec: &GridSpec) -> Result<Histogram> {
    let m = DenseMatrix::from_fn(samples.len(), 1, |i, _| samples[i]);
    histogram_density(&m, spec)
}

/// Grid covering the union of the sample range and an effective
/// support, padded by 3 sample standard deviations per dimension.
pub fn default_grid(
    samples: &DenseMatrix,
    support: &[(f64, f64)],
    cells: &[usize],
) -> Result<GridSpec> {
    let dims = samples.cols();
    if support.len() != dims || cells.len() != dims {
        return Err(Error::ShapeMismatch(
            "support/cell specs must match the sample dimension".into(),
        ));
    }
    let mut lo = Vec::with_capacity(dims);
    let mut hi = Vec::with_capacity(dims);
    for d in 0..dims {
        let col: Vec<f64> = (0..samples.rows()).map(|r| samples.get(r, d)).collect();
        let pad = 3.0 * mathx::sample_std(&col);
        let smin = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let smax = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut l = smin.min(support[d].0) - pad;
        let mut h = smax.max(support[d].1) + pad;
        if l == h {
            l -= 0.5;
            h += 0.5;
        }
        lo.push(l);
        hi.push(h);
    }
    GridSpec::new(lo, hi, cells.to_vec())
}

/// Jensen-Shannon distance: square root of the Jensen-Shannon
/// divergence with base-2 logarithms, so the result lies in [0, 1].
/// Uses the 0·log 0 = 0 convention.
pub fn jsd(p: &DensityGrid, q: &DensityGrid) -> Result<f64> {
    check_same_grid(p, q)?;
    let mut div = 0.0;
    for (&pm, &qm) in p.masses.iter().zip(&q.masses) {
        let m = 0.5 * (pm + qm);
        if pm > 0.0 {
            div += 0.5 * pm * (pm / m).log2();
        }
        if qm > 0.0 {
            div += 0.5 * qm * (qm / m).log2();
        }
    }
    Ok(div.clamp(0.0, 1.0).sqrt())
}

/// Hellinger distance √(½ Σ (√pᵢ − √qᵢ)²) over cell masses; in [0, 1].
pub fn hellinger(p: &DensityGrid, q: &DensityGrid) -> Result<f64> {
    check_same_grid(p, q)?;
    let mut s = 0.0;
    for (&pm, &qm) in p.masses.iter().zip(&q.masses) {
        let d = pm.sqrt() - qm.sqrt();
        s += d * d;
    }
    Ok((0.5 * s).clamp(0.0, 1.0).sqrt())
}

/// First Wasserstein distance ∫|F_p − F_q| for 1-D grids.
pub fn wasserstein1(p: &DensityGrid, q: &DensityGrid) -> Result<f64> {
    check_same_grid(p, q)?;
    if p.spec.dims() != 1 {
        return Err(Error::UnsupportedDimension(
            "wasserstein1 is 1-D only".into(),
        ));
    }
    let w = p.spec.width(0);
    let mut fp = 0.0;
    let mut fq = 0.0;
    let mut acc = 0.0;
    for (&pm, &qm) in p.masses.iter().zip(&q.masses) {
        fp += pm;
        fq += qm;
        acc += (fp - fq).abs() * w;
    }
    Ok(acc)
}

/// Empirical-CDF Wasserstein-1 between two scalar sample sets.
pub fn wasserstein1_samples(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Usage("both sample sets must be non-empty".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|u, v| u.partial_cmp(v).expect("finite sample"));
    b.sort_by(|u, v| u.partial_cmp(v).expect("finite sample"));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut acc = 0.0;
    let mut prev = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        let fa = i as f64 / n;
        let fb = j as f64 / m;
        acc += (fa - fb).abs() * (next - prev);
        prev = next;
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
    }
    Ok(acc)
}

/// Root energy distance between 1-D grid densities via the CDF form
/// √(2 ∫ (F_p − F_q)²).
pub fn energy_dist(p: &DensityGrid, q: &DensityGrid) -> Result<f64> {
    check_same_grid(p, q)?;
    if p.spec.dims() != 1 {
        return Err(Error::UnsupportedDimension(
            "the CDF form of the energy distance is 1-D only".into(),
        ));
    }
    let w = p.spec.width(0);
    let mut fp = 0.0;
    let mut fq = 0.0;
    let mut acc = 0.0;
    for (&pm, &qm) in p.masses.iter().zip(&q.masses) {
        fp += pm;
        fq += qm;
        acc += (fp - fq) * (fp - fq) * w;
    }
    Ok((2.0 * acc).max(0.0).sqrt())
}

/// Root energy distance between sample sets (rows are observations)
/// using the finite-sample pairwise form.
pub fn energy_dist_samples(xs: &DenseMatrix, ys: &DenseMatrix) -> Result<f64> {
    if xs.rows() == 0 || ys.rows() == 0 {
        return Err(Error::Usage("both sample sets must be non-empty".into()));
    }
    if xs.cols() != ys.cols() {
        return Err(Error::ShapeMismatch(format!(
            "sample dimensions differ: {} vs {}",
            xs.cols(),
            ys.cols()
        )));
    }
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let (m, n) = (xs.rows(), ys.rows());
    let mut cross = 0.0;
    for i in 0..m {
        for j in 0..n {
            cross += dist(xs.row(i), ys.row(j));
        }
    }
    let mut within_x = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            within_x += dist(xs.row(i), xs.row(j));
        }
    }
    let mut within_y = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            within_y += dist(ys.row(i), ys.row(j));
        }
    }
    let (mf, nf) = (m as f64, n as f64);
    let d = 2.0 * cross / (mf * nf) - 2.0 * within_x / (mf * mf) - 2.0 * within_y / (nf * nf);
    Ok(d.max(0.0).sqrt())
}

/// O((m+n) log(m+n)) evaluation of [`energy_dist_samples`] for scalar
/// samples.
pub fn energy_dist_samples_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Usage("both sample sets must be non-empty".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|u, v| u.partial_cmp(v).expect("finite sample"));
    b.sort_by(|u, v| u.partial_cmp(v).expect("finite sample"));
    let within = |s: &[f64]| -> f64 {
        let n = s.len() as f64;
        2.0 * s
            .iter()
            .enumerate()
            .map(|(k, v)| v * (2.0 * k as f64 - n + 1.0))
            .sum::<f64>()
    };
    // prefix sums over sorted a for the cross term
    let mut prefix = Vec::with_capacity(a.len() + 1);
    prefix.push(0.0);
    for &v in &a {
        prefix.push(prefix.last().unwrap() + v);
    }
    let total: f64 = *prefix.last().unwrap();
    let m = a.len() as f64;
    let mut cross = 0.0;
    for &y in &b {
        let c = a.partition_point(|&x| x <= y);
        let below = prefix[c];
        cross += y * c as f64 - below + (total - below) - y * (m - c as f64);
    }
    let (mf, nf) = (a.len() as f64, b.len() as f64);
    let d = 2.0 * cross / (mf * nf) - within(&a) / (mf * mf) - within(&b) / (nf * nf);
    Ok(d.max(0.0).sqrt())
}

/// Sample-based CRPS: (1/M) Σ|ŷᵢ − y| − (1/(2M²)) Σᵢⱼ |ŷᵢ − ŷⱼ|,
/// evaluated in O(M log M) from the sorted samples. Reduces exactly to
/// |ŷ − y| at M = 1.
pub fn crps_empirical(samples: &[f64], y: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Usage("CRPS needs at least one sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let m = s.len() as f64;
    let term1: f64 = s.iter().map(|v| (v - y).abs()).sum::<f64>() / m;
    let half_pairs: f64 = s
        .iter()
        .enumerate()
        .map(|(k, v)| v * (2.0 * k as f64 - m + 1.0))
        .sum();
    Ok(term1 - half_pairs / (m * m))
}

/// Negative log-likelihood of `y` under a Gaussian kernel density
/// estimate of the ensemble, bandwidth by Scott's rule σ̂·M^(-1/5).
pub fn nll_kde(samples: &[f64], y: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Usage("KDE needs at least two samples".into()));
    }
    let sd = mathx::sample_std(samples);
    if sd == 0.0 {
        return Err(Error::DegenerateEnsemble);
    }
    let m = samples.len() as f64;
    let h = sd * m.powf(-0.2);
    let dens: f64 = samples
        .iter()
        .map(|&s| mathx::norm_pdf((y - s) / h))
        .sum::<f64>()
        / (m * h);
    Ok(-dens.max(f64::MIN_POSITIVE).ln())
}

/// (MAE, RMSE) of scalar point forecasts.
pub fn point_errors(predictions: &[f64], targets: &[f64]) -> Result<(f64, f64)> {
    if predictions.is_empty() {
        return Err(Error::Usage("point_errors needs at least one pair".into()));
    }
    if predictions.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let abs: Vec<f64> = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .collect();
    let sq: Vec<f64> = abs.iter().map(|d| d * d).collect();
    Ok((
        mathx::mean(&abs),
        mathx::mean(&sq).sqrt(),
    ))
}

/// Mean and standard deviation of a summary quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        Self {
            mean: mathx::mean(values),
            std: mathx::sample_std(values),
        }
    }
}

/// One evaluation point: its input location and named metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub repeat: usize,
    pub point: usize,
    pub x: Vec<f64>,
    pub metrics: BTreeMap<String, f64>,
}

/// Per-point metric values plus aggregate summaries; exportable as CSV
/// (one row per point plus summary rows) and JSON.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub summary: BTreeMap<String, MeanStd>,
}

impl MetricReport {
    fn metric_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .rows
            .iter()
            .flat_map(|r| r.metrics.keys().cloned())
            .collect();
        for k in self.summary.keys() {
            names.push(k.clone());
        }
        names.sort();
        names.dedup();
        names
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let names = self.metric_names();
        let x_dims = self.rows.iter().map(|r| r.x.len()).max().unwrap_or(0);
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["kind".to_string(), "repeat".to_string(), "point".to_string()];
        for d in 0..x_dims {
            header.push(format!("x{d}"));
        }
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                "point".to_string(),
                row.repeat.to_string(),
                row.point.to_string(),
            ];
            for d in 0..x_dims {
                rec.push(row.x.get(d).map(|v| format!("{v}")).unwrap_or_default());
            }
            for name in &names {
                rec.push(
                    row.metrics
                        .get(name)
                        .map(|v| format!("{v}"))
                        .unwrap_or_default(),
                );
            }
            w.write_record(&rec)?;
        }
        for kind in ["mean", "std"] {
            let mut rec = vec![kind.to_string(), String::new(), String::new()];
            for _ in 0..x_dims {
                rec.push(String::new());
            }
            for name in &names {
                rec.push(
                    self.summary
                        .get(name)
                        .map(|m| {
                            let v = if kind == "mean" { m.mean } else { m.std };
                            format!("{v}")
                        })
                        .unwrap_or_default(),
                );
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
