//! The forward map `C: R^d -> R^m` and its adjoint.

use nalgebra::DMatrix;
use rand::Rng;

use crate::rng::rng_from_seed;
use crate::{dot, norm, Error, Result};

/// Above this dimension `sigma_min` switches from a dense SVD to inverse iteration.
pub const DENSE_SVD_LIMIT: usize = 2048;

/// Largest `d` for which `‖C‖` is taken from a dense SVD.
pub const DENSE_NORM_LIMIT: usize = 256;

const MAX_POWER_ITERS: usize = 20_000;

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind {
    Identity { dim: usize },
    /// Row-major `rows × cols`.
    Dense { rows: usize, cols: usize, data: Vec<f64> },
    /// The same odd-length 1-D kernel applied along rows then columns of a
    /// `height × width` image, zero padded at the border.
    SeparableBlur { kernel: Vec<f64>, height: usize, width: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearOperator {
    kind: OperatorKind,
}

impl LinearOperator {
    pub fn identity(dim: usize) -> Self {
        Self { kind: OperatorKind::Identity { dim } }
    }

    pub fn dense(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        crate::check_finite(&data)?;
        Ok(Self { kind: OperatorKind::Dense { rows, cols, data } })
    }

    pub fn blur(kernel: Vec<f64>, height: usize, width: usize) -> Result<Self> {
        if kernel.len() % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "blur kernel length must be odd, got {}",
                kernel.len()
            )));
        }
        crate::check_finite(&kernel)?;
        Ok(Self { kind: OperatorKind::SeparableBlur { kernel, height, width } })
    }

    /// Dense operator from CSV text: one row per line, comma-separated decimals.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut data = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(Error::DimensionMismatch { expected: c, got: row.len() })
                }
                _ => {}
            }
            data.extend(row);
            rows += 1;
        }
        let cols = cols.ok_or_else(|| Error::Format("empty operator CSV".into()))?;
        Self::dense(rows, cols, data)
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    /// `(m, d)`.
    pub fn shape(&self) -> (usize, usize) {
        match &self.kind {
            OperatorKind::Identity { dim } => (*dim, *dim),
            OperatorKind::Dense { rows, cols, .. } => (*rows, *cols),
            OperatorKind::SeparableBlur { height, width, .. } => {
                (height * width, height * width)
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (m, d) = self.shape();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        Ok(match &self.kind {
            OperatorKind::Identity { .. } => x.to_vec(),
            OperatorKind::Dense { data, .. } => {
                (0..m).map(|i| dot(&data[i * d..(i + 1) * d], x)).collect()
            }
            OperatorKind::SeparableBlur { kernel, height, width } => {
                blur_2d(x, kernel, *height, *width, false)
            }
        })
    }

    pub fn apply_adjoint(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (m, d) = self.shape();
        if z.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: z.len() });
        }
        Ok(match &self.kind {
            OperatorKind::Identity { .. } => z.to_vec(),
            OperatorKind::Dense { data, .. } => {
                let mut out = vec![0.0; d];
                for (i, zi) in z.iter().enumerate() {
                    for (o, c) in out.iter_mut().zip(&data[i * d..(i + 1) * d]) {
                        *o += c * zi;
                    }
                }
                out
            }
            OperatorKind::SeparableBlur { kernel, height, width } => {
                blur_2d(z, kernel, *height, *width, true)
            }
        })
    }

    /// Materializes `C` column by column.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let (m, d) = self.shape();
        if let OperatorKind::Dense { data, .. } = &self.kind {
            return DMatrix::from_row_slice(m, d, data);
        }
        let mut out = DMatrix::zeros(m, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.apply(&e).expect("shape checked");
            out.set_column(j, &nalgebra::DVector::from_vec(col));
            e[j] = 0.0;
        }
        out
    }

    fn normal_apply(&self, x: &[f64]) -> Vec<f64> {
        let y = self.apply(x).expect("shape checked");
        self.apply_adjoint(&y).expect("shape checked")
    }

    /// `‖C‖ = sqrt(λ_max(CᵀC))`.
    ///
    /// Dense SVD for `d <= DENSE_NORM_LIMIT`, power iteration on `CᵀC` otherwise,
    /// which stops once the Rayleigh quotient changes by less than `tol` relative.
    /// On exhausting the iteration budget the best estimate is returned inside
    /// [`Error::NoConvergence`].
    pub fn spectral_norm(&self, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
        }
        let (_, d) = self.shape();
        if let OperatorKind::Identity { .. } = self.kind {
            return Ok(1.0);
        }
        if d <= DENSE_NORM_LIMIT {
            return Ok(self.to_dense().singular_values().iter().copied().fold(0.0, f64::max));
        }
        self.power_norm(tol)
    }

    fn power_norm(&self, tol: f64) -> Result<f64> {
        let (_, d) = self.shape();
        let mut rng = rng_from_seed(0x005e_ed0f_c0de);
        let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut lambda = 0.0f64;
        for _ in 0..MAX_POWER_ITERS {
            let w = self.normal_apply(&v);
            let next = dot(&v, &w);
            let nw = norm(&w);
            if nw == 0.0 {
                return Ok(0.0);
            }
            v = w.into_iter().map(|x| x / nw).collect();
            if (next - lambda).abs() <= tol * next.abs() {
                return Ok(next.max(0.0).sqrt());
            }
            lambda = next;
        }
        Err(Error::NoConvergence { estimate: lambda.max(0.0).sqrt() })
    }

    /// `σ_min(C) = sqrt(λ_min(CᵀC))`.
    ///
    /// Dense SVD for `d <= DENSE_SVD_LIMIT`, inverse iteration otherwise. An
    /// estimate below `tol` is reported as [`Error::InvalidRank`].
    pub fn sigma_min(&self, tol: f64) -> Result<f64> {
        let (m, d) = self.shape();
        if m < d {
            return Err(Error::InvalidRank { estimate: 0.0 });
        }
        let s = if let OperatorKind::Identity { .. } = self.kind {
            1.0
        } else if d <= DENSE_SVD_LIMIT {
            self.to_dense()
                .singular_values()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        } else {
            self.sigma_min_iterative(tol)?
        };
        if s < tol {
            return Err(Error::InvalidRank { estimate: s });
        }
        Ok(s)
    }

    /// Inverse iteration on `CᵀC` with conjugate-gradient inner solves.
    pub fn sigma_min_iterative(&self, tol: f64) -> Result<f64> {
        let (_, d) = self.shape();
        let mut rng = rng_from_seed(0x0dd_5eed);
        let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut lambda = f64::INFINITY;
        for _ in 0..500 {
            let w = self.solve_normal(&v, 1e-12, 20 * d.max(10));
            let nw = norm(&w);
            if !nw.is_finite() || nw == 0.0 {
                return Err(Error::InvalidRank { estimate: 0.0 });
            }
            v = w.into_iter().map(|x| x / nw).collect();
            let next = dot(&v, &self.normal_apply(&v));
            if (next - lambda).abs() <= tol.max(1e-12) * next.abs() {
                return Ok(next.max(0.0).sqrt());
            }
            lambda = next;
        }
        Err(Error::NoConvergence { estimate: lambda.max(0.0).sqrt() })
    }

    fn solve_normal(&self, rhs: &[f64], rel_tol: f64, max_iter: usize) -> Vec<f64> {
        let mut x = vec![0.0; rhs.len()];
        let mut r = rhs.to_vec();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let stop = rel_tol * rel_tol * rr;
        for _ in 0..max_iter {
            if rr <= stop {
                break;
            }
            let ap = self.normal_apply(&p);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let a = rr / pap;
            for i in 0..x.len() {
                x[i] += a * p[i];
                r[i] -= a * ap[i];
            }
            let next = dot(&r, &r);
            let beta = next / rr;
            rr = next;
            for i in 0..p.len() {
                p[i] = r[i] + beta * p[i];
            }
        }
        x
    }
}

// Correlation with zero padding: y[j] = sum_k h[k] x[j + k - r]. The adjoint
// runs the flipped kernel.
fn conv_1d(src: &[f64], dst: &mut [f64], kernel: &[f64], adjoint: bool) {
    let r = (kernel.len() / 2) as isize;
    let n = src.len() as isize;
    for (j, out) in dst.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, h) in kernel.iter().enumerate() {
            let off = k as isize - r;
            let idx = if adjoint { j as isize - off } else { j as isize + off };
            if (0..n).contains(&idx) {
                acc += h * src[idx as usize];
            }
        }
        *out = acc;
    }
}

fn blur_2d(x: &[f64], kernel: &[f64], height: usize, width: usize, adjoint: bool) -> Vec<f64> {
    let mut tmp = vec![0.0; x.len()];
    for i in 0..height {
        let row = i * width..(i + 1) * width;
        conv_1d(&x[row.clone()], &mut tmp[row], kernel, adjoint);
    }
    let mut out = vec![0.0; x.len()];
    let mut col = vec![0.0; height];
    let mut col_out = vec![0.0; height];
    for j in 0..width {
        for i in 0..height {
            col[i] = tmp[i * width + j];
        }
        conv_1d(&col, &mut col_out, kernel, adjoint);
        for i in 0..height {
            out[i * width + j] = col_out[i];
        }
    }
    out
}
