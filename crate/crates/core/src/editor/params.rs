use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::DocParams;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_HIDDEN: usize = 64;

/// Every learnable tensor of the editor, including the document projection.
///
/// The same struct doubles as the gradient and ADAM moment container.
#[derive(Clone, Debug, PartialEq)]
pub struct EditorParams {
    pub m: usize,
    pub n: usize,
    /// `m x 4n`, applied to `[e, a, g, d]`.
    pub w_c: Matrix,
    pub b_c: Vec<f64>,
    /// `3 x m`
    pub v: Matrix,
    pub b: Vec<f64>,
    /// `n x n`, summary-state update.
    pub w_g: Matrix,
    pub doc: DocParams,
}

/// Tensor names in a fixed order, matching [`EditorParams::tensors`].
pub const TENSOR_NAMES: [&str; 7] = ["W_c", "b_c", "V", "b", "W_g", "W_d", "b_d"];

impl EditorParams {
    pub fn zeros(m: usize, n: usize) -> EditorParams {
        EditorParams {
            m,
            n,
            w_c: Matrix::zeros(m, 4 * n),
            b_c: vec![0.0; m],
            v: Matrix::zeros(3, m),
            b: vec![0.0; 3],
            w_g: Matrix::zeros(n, n),
            doc: DocParams::zeros(n),
        }
    }

    /// Matrices uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn init(m: usize, n: usize, seed: u64) -> EditorParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(m, n, &mut rng)
    }

    pub fn init_with<R: Rng>(m: usize, n: usize, rng: &mut R) -> EditorParams {
        let bound = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let w_c = Matrix::uniform(m, 4 * n, bound(4 * n), rng);
        let v = Matrix::uniform(3, m, bound(m), rng);
        let w_g = Matrix::uniform(n, n, bound(n), rng);
        let doc = DocParams::init(n, rng);
        EditorParams {
            m,
            n,
            w_c,
            b_c: vec![0.0; m],
            v,
            b: vec![0.0; 3],
            w_g,
            doc,
        }
    }

    pub fn check(&self) -> Result<()> {
        let (m, n) = (self.m, self.n);
        if m == 0 || n == 0 {
            return Err(Error::invalid("editor params", "m and n must be positive"));
        }
        let shapes = [
            ("W_c", self.w_c.shape(), (m, 4 * n)),
            ("V", self.v.shape(), (3, m)),
            ("W_g", self.w_g.shape(), (n, n)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::shape(name, format!("{want:?}"), format!("{got:?}")));
            }
        }
        if self.b_c.len() != m {
            return Err(Error::shape("b_c", m, self.b_c.len()));
        }
        if self.b.len() != 3 {
            return Err(Error::shape("b", 3, self.b.len()));
        }
        self.doc.check(n)?;
        if !self.is_finite() {
            return Err(Error::invalid("editor params", "non-finite entry"));
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&[f64]; 7] {
        [
            self.w_c.as_slice(),
            &self.b_c,
            self.v.as_slice(),
            &self.b,
            self.w_g.as_slice(),
            self.doc.w_d.as_slice(),
            &self.doc.b_d,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.w_c.as_mut_slice(),
            &mut self.b_c,
            self.v.as_mut_slice(),
            &mut self.b,
            self.w_g.as_mut_slice(),
            self.doc.w_d.as_mut_slice(),
            &mut self.doc.b_d,
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn same_shape(&self, other: &EditorParams) -> bool {
        self.m == other.m
            && self.n == other.n
            && self
                .tensors()
                .iter()
                .zip(other.tensors())
                .all(|(a, b)| a.len() == b.len())
    }

    /// `self += other`, entrywise.
    pub fn add_assign(&mut self, other: &EditorParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}
