//! Reverse-mode gradient tape over batched primitives.
//!
//! The tape records exactly the primitives needed by the network
//! topology: linear maps, elementwise activations, elementwise products
//! and per-row Euclidean norms. Values are matrices whose rows are the
//! batch dimension; a single vector is a 1×n matrix.
//!
//! A tape may be [`GradientTape::reset`] and reused across training
//! steps; recycled buffers avoid reallocating the large batch
//! intermediates every step. Backward skips subgraphs that contain no
//! parameters.

use serde::{Deserialize, Serialize};

use super::gemm;
use super::matrix::DenseMatrix;
use crate::error::{Error, Result};
use crate::mathx;

/// SELU constants (Klambauer et al. values).
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;

/// Elementwise activation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Selu,
    Tanh,
    Gcu,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Relu,
        Activation::Selu,
        Activation::Tanh,
        Activation::Gcu,
    ];

    /// Scalar application.
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Selu => {
                if z > 0.0 {
                    SELU_LAMBDA * z
                } else {
                    SELU_LAMBDA * SELU_ALPHA * (mathx::exp64(z) - 1.0)
                }
            }
            Activation::Tanh => mathx::tanh64(z),
            Activation::Gcu => z * z.cos(),
        }
    }

    /// In-place application over a slice of finite values.
    pub fn apply_slice(self, v: &mut [f64]) {
        match self {
            Activation::Relu => {
                for x in v.iter_mut() {
                    *x = x.max(0.0);
                }
            }
            Activation::Selu => mathx::selu_slice(v, SELU_LAMBDA, SELU_ALPHA),
            Activation::Tanh => mathx::tanh_slice(v),
            Activation::Gcu => {
                for x in v.iter_mut() {
                    *x *= x.cos();
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Selu => "selu",
            Activation::Tanh => "tanh",
            Activation::Gcu => "gcu",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "selu" => Ok(Activation::Selu),
            "tanh" => Ok(Activation::Tanh),
            "gcu" => Ok(Activation::Gcu),
            other => Err(Error::Usage(format!(
                "unknown activation {other:?} (expected relu|selu|tanh|gcu)"
            ))),
        }
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Trigonometric values cached by the forward pass so GCU backward
/// needs no further transcendental calls.
enum ActCache {
    None,
    SinCos { sin: Vec<f64>, cos: Vec<f64> },
}

enum Op {
    Input,
    Param,
    Linear { w: NodeId, b: NodeId, x: NodeId },
    Activation { kind: Activation, x: NodeId, cache: ActCache },
    Hadamard { a: NodeId, b: NodeId },
    Norm { x: NodeId },
}

struct Node {
    op: Op,
    value: DenseMatrix,
    /// whether any parameter feeds this node
    needs_grad: bool,
}

/// Ordered record of a forward pass; replaying it backward yields one
/// gradient per registered parameter.
///
/// A tape is confined to a single training step: single writer, no
/// sharing across threads while recording.
#[derive(Default)]
pub struct GradientTape {
    nodes: Vec<Node>,
    param_slots: Vec<NodeId>,
    pool: Vec<Vec<f64>>,
}

impl GradientTape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Clears the recording while keeping buffers for reuse.
    pub fn reset(&mut self) {
        for node in self.nodes.drain(..) {
            self.pool.push(node.value.into_data());
            if let Op::Activation {
                cache: ActCache::SinCos { sin, cos },
                ..
            } = node.op
            {
                self.pool.push(sin);
                self.pool.push(cos);
            }
        }
        self.param_slots.clear();
    }

    /// A matrix backed by a recycled buffer when one of the right size
    /// is available. Contents are unspecified; callers overwrite.
    pub(crate) fn alloc(&mut self, rows: usize, cols: usize) -> DenseMatrix {
        let want = rows * cols;
        if let Some(pos) = self.pool.iter().rposition(|b| b.len() == want) {
            let buf = self.pool.swap_remove(pos);
            DenseMatrix::from_buffer(rows, cols, buf)
        } else {
            DenseMatrix::zeros(rows, cols)
        }
    }

    fn alloc_vec(&mut self, len: usize) -> Vec<f64> {
        if let Some(pos) = self.pool.iter().rposition(|b| b.len() == len) {
            self.pool.swap_remove(pos)
        } else {
            vec![0.0; len]
        }
    }

    fn push(&mut self, op: Op, value: DenseMatrix, needs_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        id
    }

    /// Registers a non-differentiable input value.
    pub fn input(&mut self, value: DenseMatrix) -> NodeId {
        self.push(Op::Input, value, false)
    }

    /// Registers a parameter leaf. Gradients from [`Self::backward`]
    /// are returned in registration order.
    pub fn param(&mut self, value: DenseMatrix) -> NodeId {
        let id = self.push(Op::Param, value, true);
        self.param_slots.push(id);
        id
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id.0].value
    }

    /// The most recently recorded node.
    pub fn output(&self) -> Option<NodeId> {
        if self.nodes.is_empty() {
            None
        } else {
            Some(NodeId(self.nodes.len() - 1))
        }
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// y = x · wᵀ + b with `w` an (out × in) parameter and `b` a 1×out
    /// bias row broadcast over the batch rows of `x`.
    pub fn linear(&mut self, w: NodeId, b: NodeId, x: NodeId) -> Result<NodeId> {
        let (wr, wc) = self.value(w).shape();
        let (br, bc) = self.value(b).shape();
        let (xr, xc) = self.value(x).shape();
        if wc != xc {
            return Err(Error::ShapeMismatch(format!(
                "linear: weight expects {wc} inputs, got {xc}"
            )));
        }
        if br != 1 || bc != wr {
            return Err(Error::ShapeMismatch(format!(
                "linear: bias must be 1x{wr}, got {br}x{bc}"
            )));
        }
        let mut out = self.alloc(xr, wr);
        gemm::linear_batch_into(
            self.value(x),
            self.value(w),
            self.value(b).row(0),
            &mut out,
        );
        let needs = self.needs(w) || self.needs(b) || self.needs(x);
        Ok(self.push(Op::Linear { w, b, x }, out, needs))
    }

    /// Elementwise activation.
    pub fn activation(&mut self, kind: Activation, x: NodeId) -> NodeId {
        let (r, c) = self.value(x).shape();
        let mut out = self.alloc(r, c);
        let cache = match kind {
            Activation::Gcu => {
                let mut sin = self.alloc_vec(r * c);
                let mut cos = self.alloc_vec(r * c);
                let zv = self.value(x);
                for (i, &z) in zv.data().iter().enumerate() {
                    let (s, co) = z.sin_cos();
                    sin[i] = s;
                    cos[i] = co;
                    out.data_mut()[i] = z * co;
                }
                ActCache::SinCos { sin, cos }
            }
            _ => {
                out.data_mut().copy_from_slice(self.value(x).data());
                kind.apply_slice(out.data_mut());
                ActCache::None
            }
        };
        let needs = self.needs(x);
        self.push(Op::Activation { kind, x, cache }, out, needs)
    }

    /// Elementwise product of two same-shape nodes.
    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch(format!(
                "hadamard: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let (r, c) = self.value(a).shape();
        let mut out = self.alloc(r, c);
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            for ((o, &x), &y) in out.data_mut().iter_mut().zip(av).zip(bv) {
                *o = x * y;
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Hadamard { a, b }, out, needs))
    }

    /// Per-row Euclidean norm, (batch × d) → (batch × 1).
    pub fn norm(&mut self, x: NodeId) -> NodeId {
        let (rows, _) = self.value(x).shape();
        let mut out = self.alloc(rows, 1);
        for i in 0..rows {
            let s: f64 = self.value(x).row(i).iter().map(|v| v * v).sum();
            out.set(i, 0, s.sqrt());
        }
        let needs = self.needs(x);
        self.push(Op::Norm { x }, out, needs)
    }

    /// Reverse pass seeded at the last recorded node. Returns one
    /// gradient per parameter, in registration order. Subgraphs without
    /// parameters are skipped.
    pub fn backward(&mut self, seed: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
        let out = self
            .output()
            .ok_or_else(|| Error::Usage("backward on an empty tape".into()))?;
        if seed.shape() != self.value(out).shape() {
            return Err(Error::ShapeMismatch(format!(
                "seed gradient is {:?}, output is {:?}",
                seed.shape(),
                self.value(out).shape()
            )));
        }
        let mut adjoints: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[out.0].needs_grad {
            let (r, c) = seed.shape();
            let mut s = self.alloc(r, c);
            s.data_mut().copy_from_slice(seed.data());
            adjoints[out.0] = Some(s);
        }

        for idx in (0..self.nodes.len()).rev() {
            let Some(grad) = adjoints[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Input | Op::Param => {
                    adjoints[idx] = Some(grad);
                    continue;
                }
                Op::Linear { w, b, x } => {
                    let (w, b, x) = (*w, *b, *x);
                    // parameters always need gradients here
                    let dw = gemm::matmul_tn(&grad, &self.nodes[x.0].value);
                    let db = gemm::colsum(&grad);
                    accumulate(&mut adjoints[w.0], dw, &mut self.pool);
                    accumulate(
                        &mut adjoints[b.0],
                        DenseMatrix::from_buffer(1, db.len(), db),
                        &mut self.pool,
                    );
                    if self.nodes[x.0].needs_grad {
                        let (gr, _) = grad.shape();
                        let mut dx = match self
                            .pool
                            .iter()
                            .rposition(|bf| bf.len() == gr * self.nodes[w.0].value.cols())
                        {
                            Some(pos) => DenseMatrix::from_buffer(
                                gr,
                                self.nodes[w.0].value.cols(),
                                self.pool.swap_remove(pos),
                            ),
                            None => DenseMatrix::zeros(gr, self.nodes[w.0].value.cols()),
                        };
                        gemm::matmul_into(&grad, &self.nodes[w.0].value, &mut dx);
                        accumulate(&mut adjoints[x.0], dx, &mut self.pool);
                    }
                }
                Op::Activation { kind, x, cache } => {
                    let x = *x;
                    if self.nodes[x.0].needs_grad {
                        let z = &self.nodes[x.0].value;
                        let y = &self.nodes[idx].value;
                        let mut dx = grad;
                        match kind {
                            Activation::Relu => {
                                for (g, &zv) in dx.data_mut().iter_mut().zip(z.data()) {
                                    if zv <= 0.0 {
                                        *g = 0.0;
                                    }
                                }
                            }
                            Activation::Selu => {
                                for ((g, &zv), &yv) in
                                    dx.data_mut().iter_mut().zip(z.data()).zip(y.data())
                                {
                                    *g *= if zv > 0.0 {
                                        SELU_LAMBDA
                                    } else {
                                        yv + SELU_LAMBDA * SELU_ALPHA
                                    };
                                }
                            }
                            Activation::Tanh => {
                                for (g, &yv) in dx.data_mut().iter_mut().zip(y.data()) {
                                    *g *= 1.0 - yv * yv;
                                }
                            }
                            Activation::Gcu => {
                                let ActCache::SinCos { sin, cos } = cache else {
                                    unreachable!("gcu forward always caches sin/cos");
                                };
                                for (i, g) in dx.data_mut().iter_mut().enumerate() {
                                    let zv = z.data()[i];
                                    *g *= cos[i] - zv * sin[i];
                                }
                            }
                        }
                        accumulate(&mut adjoints[x.0], dx, &mut self.pool);
                    } else {
                        self.pool.push(grad.into_data());
                    }
                }
                Op::Hadamard { a, b } => {
                    let (a, b) = (*a, *b);
                    let needs_a = self.nodes[a.0].needs_grad;
                    let needs_b = self.nodes[b.0].needs_grad;
                    if needs_a {
                        let mut da = self.alloc(grad.rows(), grad.cols());
                        da.data_mut().copy_from_slice(grad.data());
                        for (g, &v) in da.data_mut().iter_mut().zip(self.nodes[b.0].value.data())
                        {
                            *g *= v;
                        }
                        accumulate(&mut adjoints[a.0], da, &mut self.pool);
                    }
                    if needs_b {
                        let mut db = grad;
                        for (g, &v) in db.data_mut().iter_mut().zip(self.nodes[a.0].value.data())
                        {
                            *g *= v;
                        }
                        accumulate(&mut adjoints[b.0], db, &mut self.pool);
                    } else {
                        self.pool.push(grad.into_data());
                    }
                }
                Op::Norm { x } => {
                    let x = *x;
                    if self.nodes[x.0].needs_grad {
                        let (xr, xc) = self.nodes[x.0].value.shape();
                        let mut dx = self.alloc(xr, xc);
                        let xv = &self.nodes[x.0].value;
                        let nv = &self.nodes[idx].value;
                        for i in 0..xv.rows() {
                            let n = nv.get(i, 0);
                            // subgradient 0 at coincident points
                            if n > 0.0 {
                                let g = grad.get(i, 0) / n;
                                for (d, &v) in dx.row_mut(i).iter_mut().zip(xv.row(i)) {
                                    *d = g * v;
                                }
                            } else {
                                dx.row_mut(i).fill(0.0);
                            }
                        }
                        accumulate(&mut adjoints[x.0], dx, &mut self.pool);
                        self.pool.push(grad.into_data());
                    } else {
                        self.pool.push(grad.into_data());
                    }
                }
            }
        }

        let grads = self
            .param_slots
            .iter()
            .map(|id| {
                adjoints[id.0].take().unwrap_or_else(|| {
                    let (r, c) = self.nodes[id.0].value.shape();
                    DenseMatrix::zeros(r, c)
                })
            })
            .collect();
        // recycle whatever adjoint buffers remain
        for slot in adjoints.into_iter().flatten() {
            self.pool.push(slot.into_data());
        }
        Ok(grads)
    }
}

fn accumulate(slot: &mut Option<DenseMatrix>, grad: DenseMatrix, pool: &mut Vec<Vec<f64>>) {
    match slot {
        None => *slot = Some(grad),
        Some(acc) => {
            for (a, g) in acc.data_mut().iter_mut().zip(grad.data()) {
                *a += g;
            }
            pool.push(grad.into_data());
        }
    }
}

/// Plain (untraced) affine map w·x + b for a single vector.
pub fn linear_forward(w: &DenseMatrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if w.cols() != x.len() {
        return Err(Error::ShapeMismatch(format!(
            "linear_forward: weight expects {} inputs, got {}",
            w.cols(),
            x.len()
        )));
    }
    if w.rows() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "linear_forward: bias length {} does not match {} outputs",
            b.len(),
            w.rows()
        )));
    }
    Ok((0..w.rows())
        .map(|i| {
            let s: f64 = w.row(i).iter().zip(x).map(|(wv, xv)| wv * xv).sum();
            s + b[i]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_forward_examples() {
        let id = DenseMatrix::identity(2);
        assert_eq!(
            linear_forward(&id, &[0.0, 0.0], &[3.0, -1.0]).unwrap(),
            vec![3.0, -1.0]
        );
        let zero = DenseMatrix::zeros(2, 2);
        assert_eq!(
            linear_forward(&zero, &[1.0, 1.0], &[7.0, -2.5]).unwrap(),
            vec![1.0, 1.0]
        );
        let w = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(
            linear_forward(&w, &[0.0, 0.0], &[1.0, 1.0]).unwrap(),
            vec![3.0, 7.0]
        );
        assert!(linear_forward(&w, &[0.0, 0.0], &[1.0]).is_err());
        assert!(linear_forward(&w, &[0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn backward_dot_product() {
        // f(w) = w·x with x = (2,), seeded with 1 -> gradient (2,)
        let mut tape = GradientTape::new();
        let w = tape.param(DenseMatrix::from_vec(1, 1, vec![0.7]).unwrap());
        let b = tape.input(DenseMatrix::zeros(1, 1));
        let x = tape.input(DenseMatrix::from_vec(1, 1, vec![2.0]).unwrap());
        tape.linear(w, b, x).unwrap();
        let grads = tape
            .backward(&DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(grads.len(), 1);
        assert_eq!(grads[0].get(0, 0), 2.0);
    }

    #[test]
    fn backward_tanh_at_zero() {
        let mut tape = GradientTape::new();
        let w = tape.param(DenseMatrix::zeros(1, 1));
        tape.activation(Activation::Tanh, w);
        let grads = tape
            .backward(&DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(grads[0].get(0, 0), 1.0);
    }

    #[test]
    fn backward_empty_tape_is_usage_error() {
        let mut tape = GradientTape::new();
        assert!(matches!(
            tape.backward(&DenseMatrix::zeros(1, 1)),
            Err(crate::error::Error::Usage(_))
        ));
    }

    #[test]
    fn backward_is_linear_in_seed() {
        let mut tape = GradientTape::new();
        let w = tape.param(
            DenseMatrix::from_vec(2, 3, (1..=6).map(|v| v as f64 * 0.3).collect()).unwrap(),
        );
        let b = tape.param(DenseMatrix::from_vec(1, 2, vec![0.1, -0.2]).unwrap());
        let x = tape.input(DenseMatrix::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap());
        let z = tape.linear(w, b, x).unwrap();
        tape.activation(Activation::Tanh, z);

        let seed = DenseMatrix::from_vec(1, 2, vec![0.3, -0.8]).unwrap();
        let g1 = tape.backward(&seed).unwrap();
        let mut scaled = seed.clone();
        for v in scaled.data_mut() {
            *v *= -2.5;
        }
        let g2 = tape.backward(&scaled).unwrap();
        for (m1, m2) in g1.iter().zip(&g2) {
            for (a, b) in m1.data().iter().zip(m2.data()) {
                assert_relative_eq!(*a * -2.5, *b, epsilon = 1e-15, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn reset_reuses_buffers_and_preserves_results() {
        let mut tape = GradientTape::new();
        let mut first = None;
        for _ in 0..3 {
            tape.reset();
            let w = tape.param(DenseMatrix::from_vec(2, 2, vec![0.5, -1.0, 2.0, 0.25]).unwrap());
            let b = tape.param(DenseMatrix::from_vec(1, 2, vec![0.1, 0.2]).unwrap());
            let x = tape.input(DenseMatrix::from_vec(3, 2, vec![1.0, 2.0, -0.5, 0.0, 3.0, 1.5]).unwrap());
            let z = tape.linear(w, b, x).unwrap();
            let h = tape.activation(Activation::Gcu, z);
            tape.norm(h);
            let seed = DenseMatrix::from_vec(3, 1, vec![1.0, -1.0, 0.5]).unwrap();
            let grads = tape.backward(&seed).unwrap();
            let flat: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
            match &first {
                None => first = Some(flat),
                Some(expect) => assert_eq!(expect, &flat),
            }
        }
    }

    #[test]
    fn norm_gradient_zero_at_coincidence() {
        let mut tape = GradientTape::new();
        let x = tape.param(DenseMatrix::zeros(1, 3));
        tape.norm(x);
        let grads = tape
            .backward(&DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(grads[0].data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn norm_gradient_is_unit_vector() {
        let mut tape = GradientTape::new();
        let x = tape.param(DenseMatrix::from_vec(1, 2, vec![3.0, 4.0]).unwrap());
        tape.norm(x);
        let grads = tape
            .backward(&DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap())
            .unwrap();
        assert_relative_eq!(grads[0].get(0, 0), 0.6, epsilon = 1e-15);
        assert_relative_eq!(grads[0].get(0, 1), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Gcu.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert_eq!(Activation::Relu.apply(3.0), 3.0);
        // lambda * z for z > 0 with the published SELU scale constant
        assert_relative_eq!(
            Activation::Selu.apply(1.0),
            1.0507009873554805,
            epsilon = 1e-12
        );
        assert_relative_eq!(Activation::Tanh.apply(0.5), 0.5f64.tanh(), epsilon = 1e-14);
        assert_relative_eq!(
            Activation::Gcu.apply(2.0),
            2.0 * 2.0f64.cos(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn apply_slice_matches_scalar() {
        let zs: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.173).collect();
        for kind in Activation::ALL {
            let mut v = zs.clone();
            kind.apply_slice(&mut v);
            for (&z, &got) in zs.iter().zip(&v) {
                let want = kind.apply(z);
                assert!(
                    (got - want).abs() <= 1e-15 * (1.0 + want.abs()),
                    "{kind:?}({z}): {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn finite_difference_agreement_on_primitives() {
        // random chains of primitives vs central differences
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for kind in Activation::ALL {
            for _ in 0..20 {
                let wv: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let bv: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let xv: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();

                let eval = |wd: &[f64], bd: &[f64]| -> f64 {
                    let mut tape = GradientTape::new();
                    let w = tape.param(DenseMatrix::from_vec(2, 3, wd.to_vec()).unwrap());
                    let b = tape.param(DenseMatrix::from_vec(1, 2, bd.to_vec()).unwrap());
                    let x = tape.input(DenseMatrix::from_vec(1, 3, xv.clone()).unwrap());
                    let z = tape.linear(w, b, x).unwrap();
                    let h = tape.activation(kind, z);
                    let n = tape.norm(h);
                    tape.value(n).get(0, 0)
                };

                // analytic gradient
                let mut tape = GradientTape::new();
                let w = tape.param(DenseMatrix::from_vec(2, 3, wv.clone()).unwrap());
                let b = tape.param(DenseMatrix::from_vec(1, 2, bv.clone()).unwrap());
                let x = tape.input(DenseMatrix::from_vec(1, 3, xv.clone()).unwrap());
                let z = tape.linear(w, b, x).unwrap();
                let zvals = tape.value(z).data().to_vec();
                // skip draws near the ReLU/SELU kink
                if matches!(kind, Activation::Relu | Activation::Selu)
                    && zvals.iter().any(|z| z.abs() < 1e-3)
                {
                    continue;
                }
                let h = tape.activation(kind, z);
                tape.norm(h);
                if tape.value(tape.output().unwrap()).get(0, 0) < 1e-3 {
                    continue; // norm kink
                }
                let grads = tape
                    .backward(&DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap())
                    .unwrap();

                let h = 1e-5;
                for i in 0..wv.len() {
                    let mut wp = wv.clone();
                    let mut wm = wv.clone();
                    wp[i] += h;
                    wm[i] -= h;
                    let fd = (eval(&wp, &bv) - eval(&wm, &bv)) / (2.0 * h);
                    let an = grads[0].data()[i];
                    let denom = an.abs().max(fd.abs()).max(1e-6);
                    assert!(
                        ((an - fd) / denom).abs() < 1e-4,
                        "{kind:?} dW[{i}] analytic {an} fd {fd}"
                    );
                }
                for i in 0..bv.len() {
                    let mut bp = bv.clone();
                    let mut bm = bv.clone();
                    bp[i] += h;
                    bm[i] -= h;
                    let fd = (eval(&wv, &bp) - eval(&wv, &bm)) / (2.0 * h);
                    let an = grads[1].data()[i];
                    let denom = an.abs().max(fd.abs()).max(1e-6);
                    assert!(
                        ((an - fd) / denom).abs() < 1e-4,
                        "{kind:?} db[{i}] analytic {an} fd {fd}"
                    );
                }
            }
        }
    }
}
