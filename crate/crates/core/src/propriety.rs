//! Numerical witness that the expected energy-score loss, as a
//! functional of the forecast density on a discretized problem, is
//! minimized exactly at the true density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathx;

/// Probability masses over the cells of a [`ScoreGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexDensity {
    masses: Vec<f64>,
}

impl SimplexDensity {
    /// Wraps masses that already sum to 1 (±1e-12).
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::Usage("density needs at least one cell".into()));
        }
        if masses.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return Err(Error::Domain("masses must be finite and >= 0".into()));
        }
        let total = mathx::pairwise_sum(&masses);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "masses sum to {total}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { masses })
    }

    /// Normalizes non-negative weights to the simplex.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Usage("density needs at least one cell".into()));
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
        // exact renormalization so the simplex invariant holds
        let fix = mathx::pairwise_sum(&weights);
        for w in weights.iter_mut() {
            *w /= fix;
        }
        Ok(Self { masses: weights })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::from_weights(vec![1.0; k])
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

/// Total variation distance ½ Σ |aᵢ − bᵢ|.
pub fn tv_distance(a: &SimplexDensity, b: &SimplexDensity) -> f64 {
    0.5 * a
        .masses
        .iter()
        .zip(&b.masses)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}

/// Support points of the discretization with precomputed pairwise
/// Euclidean distances.
#[derive(Debug, Clone)]
pub struct ScoreGrid {
    points: Vec<Vec<f64>>,
    dist: Vec<f64>,
}

impl ScoreGrid {
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Usage("grid needs at least two cells".into()));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::ShapeMismatch("ragged grid points".into()));
        }
        let k = points.len();
        let mut dist = vec![0.0; k * k];
        for i in 0..k {
            for j in (i + 1)..k {
                let d = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                dist[i * k + j] = d;
                dist[j * k + i] = d;
            }
        }
        Ok(Self { points, dist })
    }

    /// Uniform cell centers over [lo, hi].
    pub fn new_1d(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Usage("grid bounds must be finite and increasing".into()));
        }
        let w = (hi - lo) / cells as f64;
        Self::from_points(
            (0..cells)
                .map(|i| vec![lo + (i as f64 + 0.5) * w])
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Largest pairwise distance on the grid.
    pub fn span(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    /// (D · v)_i = Σ_j ‖y_i − y_j‖ v_j
    fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let k = self.len();
        (0..k)
            .map(|i| {
                let row = &self.dist[i * k..(i + 1) * k];
                row.iter().zip(v).map(|(d, x)| d * x).sum()
            })
            .collect()
    }

    fn check_density(&self, d: &SimplexDensity) -> Result<()> {
        if d.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "density has {} cells, grid has {}",
                d.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Expected loss of forecasting `f` when the truth is `p`:
/// Σᵢⱼ pᵢ fⱼ ‖yᵢ−yⱼ‖ − ½ Σᵢⱼ fᵢ fⱼ ‖yᵢ−yⱼ‖.
pub fn expected_score(f: &SimplexDensity, p: &SimplexDensity, grid: &ScoreGrid) -> Result<f64> {
    grid.check_density(f)?;
    grid.check_density(p)?;
    let df = grid.matvec(f.masses());
    let cross: f64 = p.masses().iter().zip(&df).map(|(pi, v)| pi * v).sum();
    let within: f64 = f.masses().iter().zip(&df).map(|(fi, v)| fi * v).sum();
    Ok(cross - 0.5 * within)
}

/// Deviation of the stationarity condition from constancy:
/// max over cells of |L_i − mean(L)| where
/// L_i = Σ_j (p_j − f_j) ‖y_i − y_j‖. Zero exactly at f = p.
pub fn saddle_residual(f: &SimplexDensity, p: &SimplexDensity, grid: &ScoreGrid) -> Result<f64> {
    grid.check_density(f)?;
    grid.check_density(p)?;
    let diff: Vec<f64> = p
        .masses()
        .iter()
        .zip(f.masses())
        .map(|(a, b)| a - b)
        .collect();
    let l = grid.matvec(&diff);
    let mean = mathx::mean(&l);
    Ok(l.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max))
}

/// Options for [`minimize_expected_score`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub iters: usize,
    pub step: f64,
    /// stop when successive iterates are closer than this in TV
    pub tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            iters: 5000,
            step: 0.5,
            tol: 1e-12,
        }
    }
}

/// Result of the simplex minimization.
#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub density: SimplexDensity,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// objective after each accepted iteration
    pub objective_trace: Vec<f64>,
}

/// Minimizes the expected score over the probability simplex by
/// entropic mirror descent (exponentiated gradient) with backtracking,
/// starting from the uniform density.
pub fn minimize_expected_score(
    p: &SimplexDensity,
    grid: &ScoreGrid,
    opts: &MinimizeOptions,
) -> Result<MinimizeOutcome> {
    grid.check_density(p)?;
    if opts.iters == 0 || !(opts.step > 0.0) {
        return Err(Error::Usage("iters and step must be positive".into()));
    }
    let k = p.len();
    let mut f = SimplexDensity::uniform(k)?;
    let mut obj = expected_score(&f, p, grid)?;
    let dp = grid.matvec(p.masses());
    let mut trace = Vec::with_capacity(opts.iters.min(4096));
    let mut iterations = 0usize;
    let mut converged = false;

    for _ in 0..opts.iters {
        iterations += 1;
        let df = grid.matvec(f.masses());
        // ∇S(f) = D p − D f
        let grad: Vec<f64> = dp.iter().zip(&df).map(|(a, b)| a - b).collect();
        let mut step = opts.step;
        let mut accepted = false;
        for _ in 0..40 {
            let weights: Vec<f64> = f
                .masses()
                .iter()
                .zip(&grad)
                .map(|(fi, g)| fi * (-step * g).clamp(-50.0, 50.0).exp())
                .collect();
            let cand = SimplexDensity::from_weights(weights)?;
            let cand_obj = expected_score(&cand, p, grid)?;
            if cand_obj <= obj + 1e-15 {
                let moved = tv_distance(&cand, &f);
                f = cand;
                obj = cand_obj;
                trace.push(obj);
                accepted = true;
                if moved < opts.tol {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || converged {
            converged = converged || !accepted;
            break;
        }
    }
    Ok(MinimizeOutcome {
        density: f,
        iterations,
        converged,
        objective: obj,
        objective_trace: trace,
    })
}

/// Verification report emitted by the propriety check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProprietyReport {
    pub cells: usize,
    pub grid_span: f64,
    pub tv: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub objective_at_truth: f64,
}

/// Runs the minimization against a target density and reports how
/// close the minimizer is to the truth.
pub fn verify(
    p: &SimplexDensity,
    grid: &ScoreGrid,
    opts: &MinimizeOptions,
) -> Result<ProprietyReport> {
    let outcome = minimize_expected_score(p, grid, opts)?;
    Ok(ProprietyReport {
        cells: grid.len(),
        grid_span: grid.span(),
        tv: tv_distance(&outcome.density, p),
        residual: saddle_residual(&outcome.density, p, grid)?,
        iterations: outcome.iterations,
        converged: outcome.converged,
        objective: outcome.objective,
        objective_at_truth: expected_score(p, p, grid)?,
    })
}

/// Discretized N(mu, sigma²) on a 1-D grid (cell-center weights).
pub fn gaussian_density(grid: &ScoreGrid, mu: f64, sigma: f64) -> Result<SimplexDensity> {
    let weights: Vec<f64> = grid
        .points()
        .iter()
        .map(|p| mathx::norm_pdf((p[0] - mu) / sigma))
        .collect();
    SimplexDensity::from_weights(weights)
}
