//! Network architecture: a feature branch and a cosine noise-embedding
//! branch merged elementwise, followed by an MLP head.
//!
//! The forward map is deterministic; all stochasticity enters through
//! the noise vector `a`, drawn uniformly from [0,1]^{d_a} by callers.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::compute::{gemm, Activation, DenseMatrix, GradientTape, NodeId};
use crate::error::{Error, Result};
use crate::mathx;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input feature dimension d_x.
    pub feature_dim: usize,
    /// Noise dimension d_a; 1 or 2.
    pub noise_dim: usize,
    /// Width of the cosine embedding and of the merged representation.
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_hidden_width")]
    pub hidden_width: usize,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    /// Target dimension; 1 or 2.
    pub output_dim: usize,
    #[serde(default = "default_activation")]
    pub mlp_activation: Activation,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_embedding_dim() -> usize {
    128
}
fn default_hidden_width() -> usize {
    128
}
fn default_hidden_layers() -> usize {
    2
}
fn default_activation() -> Activation {
    Activation::Tanh
}
fn default_init_std() -> f64 {
    0.1
}

impl ModelConfig {
    pub fn new(feature_dim: usize, noise_dim: usize, output_dim: usize) -> Self {
        Self {
            feature_dim,
            noise_dim,
            embedding_dim: default_embedding_dim(),
            hidden_width: default_hidden_width(),
            hidden_layers: default_hidden_layers(),
            output_dim,
            mlp_activation: default_activation(),
            init_std: default_init_std(),
            seed: 0,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.mlp_activation = activation;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::Usage("feature_dim must be >= 1".into()));
        }
        if !(1..=2).contains(&self.noise_dim) {
            return Err(Error::Usage(format!(
                "noise_dim must be 1 or 2, got {}",
                self.noise_dim
            )));
        }
        if !(1..=2).contains(&self.output_dim) {
            return Err(Error::Usage(format!(
                "output_dim must be 1 or 2, got {}",
                self.output_dim
            )));
        }
        if self.output_dim > self.noise_dim {
            return Err(Error::Usage(format!(
                "output_dim ({}) must not exceed noise_dim ({}): the base space \
                 must be at least as wide as the target",
                self.output_dim, self.noise_dim
            )));
        }
        if self.embedding_dim == 0 || self.embedding_dim % self.noise_dim != 0 {
            return Err(Error::Usage(format!(
                "embedding_dim ({}) must be a positive multiple of noise_dim ({})",
                self.embedding_dim, self.noise_dim
            )));
        }
        if self.hidden_width == 0 {
            return Err(Error::Usage("hidden_width must be >= 1".into()));
        }
        if !self.init_std.is_finite() || self.init_std < 0.0 {
            return Err(Error::Usage(format!(
                "init_std must be finite and >= 0, got {}",
                self.init_std
            )));
        }
        Ok(())
    }
}

/// All weight matrices and bias rows of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// feature branch, (embedding_dim × feature_dim)
    pub w_feat: DenseMatrix,
    pub b_feat: DenseMatrix,
    /// noise-embedding branch, (embedding_dim × embedding_dim)
    pub w_noise: DenseMatrix,
    pub b_noise: DenseMatrix,
    /// MLP head, first layer maps embedding_dim → hidden_width
    pub hidden: Vec<(DenseMatrix, DenseMatrix)>,
    pub w_out: DenseMatrix,
    pub b_out: DenseMatrix,
}

/// Scalar activation application.
pub fn activation_apply(kind: Activation, z: f64) -> f64 {
    kind.apply(z)
}

/// Cosine feature map for a noise vector `a` in [0,1]^{d_a}.
///
/// Each component gets a block of `embedding_dim / d_a` features with
/// frequencies 0, π, 2π, ..., evaluated at that component; blocks are
/// concatenated.
pub fn embed_noise(a: &[f64], embedding_dim: usize) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::Usage("noise vector must be non-empty".into()));
    }
    if embedding_dim == 0 || embedding_dim % a.len() != 0 {
        return Err(Error::Usage(format!(
            "embedding_dim ({embedding_dim}) must be a positive multiple of the noise dimension ({})",
            a.len()
        )));
    }
    for &c in a {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::Domain(format!(
                "noise component {c} outside [0, 1]"
            )));
        }
    }
    let mut out = vec![0.0; embedding_dim];
    embed_noise_into(a, &mut out);
    Ok(out)
}

/// Recurrence form of the cosine embedding; `out.len()` must be a
/// multiple of `a.len()`.
fn embed_noise_into(a: &[f64], out: &mut [f64]) {
    let block = out.len() / a.len();
    for (component, chunk) in a.iter().zip(out.chunks_exact_mut(block)) {
        let theta = std::f64::consts::PI * component;
        let c1 = theta.cos();
        chunk[0] = 1.0;
        if block == 1 {
            continue;
        }
        chunk[1] = c1;
        // cos(kθ) via the Chebyshev recurrence, clamped to keep the
        // [-1, 1] bound exact under rounding
        let two_c1 = 2.0 * c1;
        let mut prev = 1.0f64;
        let mut cur = c1;
        for slot in chunk[2..].iter_mut() {
            let next = (two_c1 * cur - prev).clamp(-1.0, 1.0);
            prev = cur;
            cur = next;
            *slot = next;
        }
    }
}

/// Batched cosine embedding: one noise vector per row.
pub(crate) fn embed_noise_rows(noise: &DenseMatrix, embedding_dim: usize) -> DenseMatrix {
    debug_assert_eq!(embedding_dim % noise.cols(), 0);
    let mut out = DenseMatrix::zeros(noise.rows(), embedding_dim);
    for i in 0..noise.rows() {
        embed_noise_into(noise.row(i), out.row_mut(i));
    }
    out
}

/// Samples every weight and bias i.i.d. from N(0, init_std²) with a
/// generator seeded by `config.seed`; identical seeds give identical
/// parameter sets.
pub fn init_params(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // init_std = 0 degenerates to the all-zero network
    let normal = Normal::new(0.0, config.init_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Usage(format!("bad init_std: {e}")))?;
    let mut sample = |rows: usize, cols: usize| -> DenseMatrix {
        if config.init_std == 0.0 {
            return DenseMatrix::zeros(rows, cols);
        }
        DenseMatrix::from_fn(rows, cols, |_, _| normal.sample(&mut rng))
    };

    let w_feat = sample(config.embedding_dim, config.feature_dim);
    let b_feat = sample(1, config.embedding_dim);
    let w_noise = sample(config.embedding_dim, config.embedding_dim);
    let b_noise = sample(1, config.embedding_dim);
    let mut hidden = Vec::with_capacity(config.hidden_layers);
    let mut in_dim = config.embedding_dim;
    for _ in 0..config.hidden_layers {
        let w = sample(config.hidden_width, in_dim);
        let b = sample(1, config.hidden_width);
        hidden.push((w, b));
        in_dim = config.hidden_width;
    }
    let w_out = sample(config.output_dim, in_dim);
    let b_out = sample(1, config.output_dim);

    Ok(ModelParams {
        config: config.clone(),
        w_feat,
        b_feat,
        w_noise,
        b_noise,
        hidden,
        w_out,
        b_out,
    })
}

impl ModelParams {
    /// Canonical parameter order shared by the tape, Adam state and the
    /// file format.
    pub fn param_list(&self) -> Vec<&DenseMatrix> {
        let mut v = vec![&self.w_feat, &self.b_feat, &self.w_noise, &self.b_noise];
        for (w, b) in &self.hidden {
            v.push(w);
            v.push(b);
        }
        v.push(&self.w_out);
        v.push(&self.b_out);
        v
    }

    pub fn param_list_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut v: Vec<&mut DenseMatrix> = vec![
            &mut self.w_feat,
            &mut self.b_feat,
            &mut self.w_noise,
            &mut self.b_noise,
        ];
        for (w, b) in &mut self.hidden {
            v.push(w);
            v.push(b);
        }
        v.push(&mut self.w_out);
        v.push(&mut self.b_out);
        v
    }

    pub fn param_count(&self) -> usize {
        self.param_list()
            .iter()
            .map(|m| m.rows() * m.cols())
            .sum()
    }

    /// Single-input forward pass.
    pub fn forward(&self, x: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let xs = DenseMatrix::from_vec(1, x.len(), x.to_vec())?;
        let noise = DenseMatrix::from_vec(1, a.len(), a.to_vec())?;
        let out = self.forward_batch(&xs, &noise)?;
        Ok(out.row(0).to_vec())
    }

    /// Batched forward pass: row i of the output is the network applied
    /// to (xs[i], noise[i]).
    pub fn forward_batch(&self, xs: &DenseMatrix, noise: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_batch(xs, noise)?;
        let mut h_x = gemm::linear_batch(xs, &self.w_feat, self.b_feat.row(0));
        let e = embed_noise_rows(noise, self.config.embedding_dim);
        let mut h_a = gemm::linear_batch(&e, &self.w_noise, self.b_noise.row(0));
        mathx::tanh_slice(h_a.data_mut());
        // elementwise merge of the two branches
        for (m, &v) in h_x.data_mut().iter_mut().zip(h_a.data()) {
            *m *= v;
        }
        let mut h = h_x;
        for (w, b) in &self.hidden {
            let mut z = gemm::linear_batch(&h, w, b.row(0));
            apply_activation_slice(self.config.mlp_activation, z.data_mut());
            h = z;
        }
        Ok(gemm::linear_batch(&h, &self.w_out, self.b_out.row(0)))
    }

    /// Records the batched forward pass on `tape`. Returns the output
    /// node; parameter slots follow [`Self::param_list`] order.
    pub fn trace_forward(
        &self,
        tape: &mut GradientTape,
        xs: &DenseMatrix,
        noise: &DenseMatrix,
    ) -> Result<NodeId> {
        self.check_batch(xs, noise)?;
        let w_feat = tape.param(self.w_feat.clone());
        let b_feat = tape.param(self.b_feat.clone());
        let w_noise = tape.param(self.w_noise.clone());
        let b_noise = tape.param(self.b_noise.clone());
        let hidden_ids: Vec<(NodeId, NodeId)> = self
            .hidden
            .iter()
            .map(|(w, b)| (tape.param(w.clone()), tape.param(b.clone())))
            .collect();
        let w_out = tape.param(self.w_out.clone());
        let b_out = tape.param(self.b_out.clone());

        let x_in = tape.input(xs.clone());
        let mut e = tape.alloc(noise.rows(), self.config.embedding_dim);
        for i in 0..noise.rows() {
            embed_noise_into(noise.row(i), e.row_mut(i));
        }
        let e_in = tape.input(e);
        let h_x = tape.linear(w_feat, b_feat, x_in)?;
        let z_n = tape.linear(w_noise, b_noise, e_in)?;
        let h_a = tape.activation(Activation::Tanh, z_n);
        let mut h = tape.hadamard(h_x, h_a)?;
        for (w, b) in hidden_ids {
            let z = tape.linear(w, b, h)?;
            h = tape.activation(self.config.mlp_activation, z);
        }
        tape.linear(w_out, b_out, h)
    }

    fn check_batch(&self, xs: &DenseMatrix, noise: &DenseMatrix) -> Result<()> {
        if xs.cols() != self.config.feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "input has {} features, model expects {}",
                xs.cols(),
                self.config.feature_dim
            )));
        }
        if noise.cols() != self.config.noise_dim {
            return Err(Error::ShapeMismatch(format!(
                "noise has dimension {}, model expects {}",
                noise.cols(),
                self.config.noise_dim
            )));
        }
        if xs.rows() != noise.rows() {
            return Err(Error::ShapeMismatch(format!(
                "batch sizes differ: {} inputs vs {} noise rows",
                xs.rows(),
                noise.rows()
            )));
        }
        if noise.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("noise component outside [0, 1]".into()));
        }
        Ok(())
    }

    // ---- parameter file format ------------------------------------
    //
    // All integers little-endian.
    //   magic   8 bytes  "ESNPARAM"
    //   version u32      currently 1
    //   feature_dim, noise_dim, embedding_dim, hidden_width,
    //   hidden_layers, output_dim                     u32 each
    //   activation tag   u8   (0 relu, 1 selu, 2 tanh, 3 gcu)
    //   init_std f64, seed u64
    //   n_matrices u32, then per matrix: rows u32, cols u32,
    //   rows*cols f64 values (row-major, exact 64-bit round trip)

    const MAGIC: &'static [u8; 8] = b"ESNPARAM";
    const VERSION: u32 = 1;

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        for v in [
            self.config.feature_dim,
            self.config.noise_dim,
            self.config.embedding_dim,
            self.config.hidden_width,
            self.config.hidden_layers,
            self.config.output_dim,
        ] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        let tag: u8 = match self.config.mlp_activation {
            Activation::Relu => 0,
            Activation::Selu => 1,
            Activation::Tanh => 2,
            Activation::Gcu => 3,
        };
        w.write_all(&[tag])?;
        w.write_all(&self.config.init_std.to_le_bytes())?;
        w.write_all(&self.config.seed.to_le_bytes())?;
        let mats = self.param_list();
        w.write_all(&(mats.len() as u32).to_le_bytes())?;
        for m in mats {
            w.write_all(&(m.rows() as u32).to_le_bytes())?;
            w.write_all(&(m.cols() as u32).to_le_bytes())?;
            for v in m.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::ParamsFormat("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != Self::VERSION {
            return Err(Error::ParamsFormat(format!(
                "unsupported version {version} (expected {})",
                Self::VERSION
            )));
        }
        let feature_dim = read_u32(&mut r)? as usize;
        let noise_dim = read_u32(&mut r)? as usize;
        let embedding_dim = read_u32(&mut r)? as usize;
        let hidden_width = read_u32(&mut r)? as usize;
        let hidden_layers = read_u32(&mut r)? as usize;
        let output_dim = read_u32(&mut r)? as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let mlp_activation = match tag[0] {
            0 => Activation::Relu,
            1 => Activation::Selu,
            2 => Activation::Tanh,
            3 => Activation::Gcu,
            t => return Err(Error::ParamsFormat(format!("unknown activation tag {t}"))),
        };
        let init_std = read_f64(&mut r)?;
        let mut seed_bytes = [0u8; 8];
        r.read_exact(&mut seed_bytes)?;
        let seed = u64::from_le_bytes(seed_bytes);

        let config = ModelConfig {
            feature_dim,
            noise_dim,
            embedding_dim,
            hidden_width,
            hidden_layers,
            output_dim,
            mlp_activation,
            init_std,
            seed,
        };
        config.validate().map_err(|e| {
            Error::ParamsFormat(format!("stored config is invalid: {e}"))
        })?;

        let n_matrices = read_u32(&mut r)? as usize;
        if n_matrices != 6 + 2 * hidden_layers {
            return Err(Error::ParamsFormat(format!(
                "expected {} matrices, file declares {n_matrices}",
                6 + 2 * hidden_layers
            )));
        }
        let mut read_mat = |expect: (usize, usize)| -> Result<DenseMatrix> {
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            if (rows, cols) != expect {
                return Err(Error::ParamsFormat(format!(
                    "matrix is {rows}x{cols}, expected {}x{}",
                    expect.0, expect.1
                )));
            }
            let mut data = vec![0.0; rows * cols];
            for v in data.iter_mut() {
                *v = read_f64(&mut r)?;
            }
            DenseMatrix::from_vec(rows, cols, data)
        };

        let w_feat = read_mat((embedding_dim, feature_dim))?;
        let b_feat = read_mat((1, embedding_dim))?;
        let w_noise = read_mat((embedding_dim, embedding_dim))?;
        let b_noise = read_mat((1, embedding_dim))?;
        let mut hidden = Vec::with_capacity(hidden_layers);
        let mut in_dim = embedding_dim;
        for _ in 0..hidden_layers {
            let w = read_mat((hidden_width, in_dim))?;
            let b = read_mat((1, hidden_width))?;
            hidden.push((w, b));
            in_dim = hidden_width;
        }
        let w_out = read_mat((output_dim, in_dim))?;
        let b_out = read_mat((1, output_dim))?;

        Ok(ModelParams {
            config,
            w_feat,
            b_feat,
            w_noise,
            b_noise,
            hidden,
            w_out,
            b_out,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(f)
    }
}

pub(crate) fn apply_activation_slice(kind: Activation, v: &mut [f64]) {
    match kind {
        Activation::Tanh => mathx::tanh_slice(v),
        Activation::Relu => {
            for x in v.iter_mut() {
                *x = x.max(0.0);
            }
        }
        Activation::Selu => {
            for x in v.iter_mut() {
                *x = Activation::Selu.apply(*x);
            }
        }
        Activation::Gcu => {
            for x in v.iter_mut() {
                *x *= x.cos();
            }
        }
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
