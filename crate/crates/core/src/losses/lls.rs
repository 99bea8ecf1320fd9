use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{ensure, ensure_dims, Result};
use crate::linalg::Matrix;
use crate::losses::{legendre_features, CoefficientLoss, FeatureBasis, LossModel};
use crate::scalar::Scalar;

const MOMENT_CHUNK: usize = 512;

/// One regression sample: inputs `x, y ∈ [-1, 1]` and target value `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub x: T,
    pub y: T,
    pub f: T,
}

fn residual<T: Scalar>(w: &Matrix<T>, p: &[T], q: &[T], f: T) -> T {
    let mut acc = T::zero();
    for (i, &pi) in p.iter().enumerate() {
        let row: T = w.row(i).iter().zip(q).map(|(&wij, &qj)| wij * qj).sum();
        acc += pi * row;
    }
    acc - f
}

/// `(1 / 2|X|) Σ (p(x)ᵀ W p(y) − f)²` evaluated sample by sample.
pub fn lls_loss<T: Scalar>(w: &Matrix<T>, samples: &[Sample<T>]) -> Result<T> {
    ensure(!samples.is_empty(), || "least-squares loss of an empty sample set".into())?;
    ensure_dims(w.is_square(), || format!("weight matrix {:?} is not square", w.shape()))?;
    let n = w.rows();
    let mut total = T::zero();
    for s in samples {
        let r = residual(w, &legendre_features(s.x, n)?, &legendre_features(s.y, n)?, s.f);
        total += r * r;
    }
    Ok(total / T::of(2.0 * samples.len() as f64))
}

/// `(1/|X|) Σ (p(x)ᵀ W p(y) − f) p(x) p(y)ᵀ` evaluated sample by sample.
pub fn lls_weight_gradient<T: Scalar>(w: &Matrix<T>, samples: &[Sample<T>]) -> Result<Matrix<T>> {
    ensure(!samples.is_empty(), || "least-squares gradient of an empty sample set".into())?;
    ensure_dims(w.is_square(), || format!("weight matrix {:?} is not square", w.shape()))?;
    let n = w.rows();
    let mut g = Matrix::zeros(n, n);
    for s in samples {
        let p = legendre_features(s.x, n)?;
        let q = legendre_features(s.y, n)?;
        let r = residual(w, &p, &q, s.f);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] += r * p[i] * q[j];
            }
        }
    }
    Ok(g.scale(T::one() / T::of(samples.len() as f64)))
}

/// Feature pairs of a sample set and their fourth-order moment
/// `H[(i,j),(k,l)] = (1/|X|) Σ p_i q_j p_k q_l`, the Hessian of the least-squares loss.
#[derive(Debug, Clone)]
pub struct Design<T> {
    n: usize,
    count: usize,
    px: Vec<T>,
    py: Vec<T>,
    hessian: Vec<T>,
}

impl<T: Scalar> Design<T> {
    /// Row `s` of `px`/`py` holds the left and right feature vectors of sample `s`.
    pub fn from_features(n: usize, px: Vec<T>, py: Vec<T>) -> Result<Self> {
        ensure(n >= 1, || "feature dimension must be positive".into())?;
        ensure_dims(px.len() == py.len() && px.len() % n == 0, || {
            format!("feature arrays of length {} and {} for dimension {n}", px.len(), py.len())
        })?;
        let count = px.len() / n;
        ensure(count >= 1, || "design without samples".into())?;
        let hessian = Self::moments(n, &px, &py);
        Ok(Self {
            n,
            count,
            px,
            py,
            hessian,
        })
    }

    /// Classical Legendre features of the sample coordinates.
    pub fn from_points(n: usize, points: &[(T, T)]) -> Result<Self> {
        Self::from_points_in(n, points, FeatureBasis::Standard)
    }

    pub fn from_points_in(n: usize, points: &[(T, T)], basis: FeatureBasis) -> Result<Self> {
        let mut px = Vec::with_capacity(points.len() * n);
        let mut py = Vec::with_capacity(points.len() * n);
        for &(x, y) in points {
            px.extend(basis.features(x, n)?);
            py.extend(basis.features(y, n)?);
        }
        Self::from_features(n, px, py)
    }

    fn moments(n: usize, px: &[T], py: &[T]) -> Vec<T> {
        let nn = n * n;
        let count = px.len() / n;
        // fixed chunking, partial sums folded in chunk order: bitwise reproducible
        let partials: Vec<Vec<T>> = px
            .par_chunks(MOMENT_CHUNK * n)
            .zip(py.par_chunks(MOMENT_CHUNK * n))
            .map(|(cx, cy)| {
                let mut acc = vec![T::zero(); nn * nn];
                let mut z = vec![T::zero(); nn];
                for (p, q) in cx.chunks_exact(n).zip(cy.chunks_exact(n)) {
                    for i in 0..n {
                        for j in 0..n {
                            z[i * n + j] = p[i] * q[j];
                        }
                    }
                    for a in 0..nn {
                        let za = z[a];
                        let row = &mut acc[a * nn..(a + 1) * nn];
                        for b in a..nn {
                            row[b] += za * z[b];
                        }
                    }
                }
                acc
            })
            .collect();
        let mut h = vec![T::zero(); nn * nn];
        for part in &partials {
            for (hv, &pv) in h.iter_mut().zip(part) {
                *hv += pv;
            }
        }
        let inv = T::one() / T::of(count as f64);
        for a in 0..nn {
            for b in a..nn {
                let v = h[a * nn + b] * inv;
                h[a * nn + b] = v;
                h[b * nn + a] = v;
            }
        }
        h
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn left_features(&self, s: usize) -> &[T] {
        &self.px[s * self.n..(s + 1) * self.n]
    }

    pub fn right_features(&self, s: usize) -> &[T] {
        &self.py[s * self.n..(s + 1) * self.n]
    }

    /// `∇²L · dw` as an `n x n` matrix.
    pub fn hessian_apply(&self, dw: &Matrix<T>) -> Matrix<T> {
        let nn = self.n * self.n;
        let w = dw.as_slice();
        let out: Vec<T> = self.hessian.chunks_exact(nn).map(|row| dot4(row, w)).collect();
        Matrix::from_vec(self.n, self.n, out).expect("square output")
    }

    /// `(U ⊗ V)ᵀ H (U ⊗ V)` by successive mode contractions, indexed like `vec(S)`.
    fn project(&self, u: &Matrix<T>, v: &Matrix<T>) -> Vec<T> {
        let n = self.n;
        let mut t = self.hessian.clone();
        let mut dims = [n, n, n, n];
        // outermost axis first: the dominant n⁴k pass then streams contiguous blocks
        for (axis, basis) in [(0, u), (1, v), (2, u), (3, v)] {
            let (next, next_dims) = contract(&t, dims, axis, basis);
            t = next;
            dims = next_dims;
        }
        t
    }
}

/// Inner-axis block length for [`contract`]; keeps the working set in cache.
const CONTRACT_BLOCK: usize = 256;

/// `out[.., c, ..] = Σ_m t[.., m, ..] basis[m, c]` along `axis`.
fn contract<T: Scalar>(t: &[T], dims: [usize; 4], axis: usize, basis: &Matrix<T>) -> (Vec<T>, [usize; 4]) {
    let m = dims[axis];
    let k = basis.cols();
    let b = basis.as_slice();
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let mut out = vec![T::zero(); outer * k * inner];
    for o in 0..outer {
        let src = &t[o * m * inner..(o + 1) * m * inner];
        let dst = &mut out[o * k * inner..(o + 1) * k * inner];
        if inner == 1 {
            for (mi, &tv) in src.iter().enumerate() {
                for (d, &bv) in dst.iter_mut().zip(&b[mi * k..(mi + 1) * k]) {
                    *d += tv * bv;
                }
            }
            continue;
        }
        for lo in (0..inner).step_by(CONTRACT_BLOCK) {
            let hi = (lo + CONTRACT_BLOCK).min(inner);
            for c in 0..k {
                let acc = &mut dst[c * inner + lo..c * inner + hi];
                for mi in 0..m {
                    let bv = b[mi * k + c];
                    if bv == T::zero() {
                        continue;
                    }
                    for (d, &sv) in acc.iter_mut().zip(&src[mi * inner + lo..mi * inner + hi]) {
                        *d += sv * bv;
                    }
                }
            }
        }
    }
    let mut next = dims;
    next[axis] = k;
    (out, next)
}

/// Dot product with four interleaved partial sums, combined in a fixed order.
fn dot4<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Least-squares regression loss `(1/2|X|) Σ (p(x)ᵀ W p(y) − f)²` in moment form.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    design: Arc<Design<T>>,
    targets: Vec<T>,
    rhs: Matrix<T>,
    offset: T,
}

impl<T: Scalar> LeastSquares<T> {
    pub fn new(design: Arc<Design<T>>, targets: Vec<T>) -> Result<Self> {
        ensure_dims(targets.len() == design.count(), || {
            format!("{} targets for {} samples", targets.len(), design.count())
        })?;
        let n = design.dim();
        let mut rhs = Matrix::zeros(n, n);
        let mut sq = T::zero();
        for (s, &f) in targets.iter().enumerate() {
            let (p, q) = (design.left_features(s), design.right_features(s));
            for i in 0..n {
                let fp = f * p[i];
                for j in 0..n {
                    rhs[(i, j)] += fp * q[j];
                }
            }
            sq += f * f;
        }
        let inv = T::one() / T::of(design.count() as f64);
        Ok(Self {
            rhs: rhs.scale(inv),
            offset: sq * inv / T::of(2.0),
            design,
            targets,
        })
    }

    pub fn from_samples(n: usize, samples: &[Sample<T>]) -> Result<Self> {
        let points: Vec<(T, T)> = samples.iter().map(|s| (s.x, s.y)).collect();
        let design = Arc::new(Design::from_points(n, &points)?);
        Self::new(design, samples.iter().map(|s| s.f).collect())
    }

    pub fn design(&self) -> &Arc<Design<T>> {
        &self.design
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    /// Mean of squared residuals over the stored samples, without the moment shortcut.
    pub fn sample_loss(&self, w: &Matrix<T>) -> T {
        let d = &self.design;
        let total: T = (0..d.count())
            .map(|s| {
                let r = residual(w, d.left_features(s), d.right_features(s), self.targets[s]);
                r * r
            })
            .sum();
        total / T::of(2.0 * d.count() as f64)
    }
}

impl<T: Scalar> LossModel<T> for LeastSquares<T> {
    fn dim(&self) -> usize {
        self.design.dim()
    }

    fn loss(&self, w: &Matrix<T>) -> T {
        let hw = self.design.hessian_apply(w);
        let value = hw.dot(w) / T::of(2.0) - self.rhs.dot(w) + self.offset;
        value.max(T::zero())
    }

    fn weight_gradient(&self, w: &Matrix<T>) -> Matrix<T> {
        &self.design.hessian_apply(w) - &self.rhs
    }

    fn hessian_apply(&self, dw: &Matrix<T>) -> Matrix<T> {
        self.design.hessian_apply(dw)
    }

    fn restrict<'a>(&'a self, u: &Matrix<T>, v: &Matrix<T>) -> Box<dyn CoefficientLoss<T> + 'a> {
        let (ka, kb) = (u.cols(), v.cols());
        let rhs = u
            .t_matmul(&self.rhs)
            .and_then(|m| m.matmul(v))
            .expect("bases conform to the model dimension");
        Box::new(RestrictedQuadratic {
            hessian: self.design.project(u, v),
            rhs,
            offset: self.offset,
            shape: (ka, kb),
        })
    }
}

/// `S ↦ ½ vec(S)ᵀ Ĥ vec(S) − ⟨B̂, S⟩ + c` with the projected moments.
struct RestrictedQuadratic<T> {
    hessian: Vec<T>,
    rhs: Matrix<T>,
    offset: T,
    shape: (usize, usize),
}

impl<T: Scalar> RestrictedQuadratic<T> {
    fn apply(&self, s: &Matrix<T>) -> Matrix<T> {
        let kk = self.shape.0 * self.shape.1;
        let x = s.as_slice();
        let out: Vec<T> = (0..kk)
            .map(|a| dot4(&self.hessian[a * kk..(a + 1) * kk], x))
            .collect();
        Matrix::from_vec(self.shape.0, self.shape.1, out).expect("coefficient shape")
    }
}

impl<T: Scalar> CoefficientLoss<T> for RestrictedQuadratic<T> {
    fn loss(&self, s: &Matrix<T>) -> T {
        let value = self.apply(s).dot(s) / T::of(2.0) - self.rhs.dot(s) + self.offset;
        value.max(T::zero())
    }

    fn gradient(&self, s: &Matrix<T>) -> Matrix<T> {
        assert_eq!(s.shape(), self.shape, "coefficient shape mismatch");
        &self.apply(s) - &self.rhs
    }
}
