//! Dense row-major matrix type used throughout the crate.

use super::MatError;

/// Hard cap on any single matrix dimension. Instances past this size are
/// rejected up front instead of grinding the dense kernels.
pub const MAX_DIM: usize = 4096;

/// Dense real matrix, row-major storage. Immutable after construction in
/// normal use; all entries are checked finite when built from raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatError> {
        if rows == 0 || cols == 0 {
            return Err(MatError::EmptyDimension);
        }
        if rows > MAX_DIM || cols > MAX_DIM {
            return Err(MatError::DimensionOverflow { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(MatError::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(MatError::NonFiniteEntry);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0 && rows <= MAX_DIM && cols <= MAX_DIM);
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatError> {
        let r = rows.len();
        if r == 0 {
            return Err(MatError::EmptyDimension);
        }
        let c = rows[0].len();
        if rows.iter().any(|row| row.len() != c) {
            return Err(MatError::RaggedRows);
        }
        Self::new(r, c, rows.concat())
    }

    /// Column vector from a slice.
    pub fn col_vec(v: &[f64]) -> Result<Self, MatError> {
        Self::new(v.len(), 1, v.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let base = i * out.cols;
                for j in 0..other.cols {
                    out.data[base + j] += a * orow[j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .map(|(a, x)| a * x)
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    /// (self + selfᵀ)/2, forcing exact symmetry.
    pub fn symmetrize(&self) -> Mat {
        assert!(self.is_square());
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        s
    }

    /// Copy `block` into self with top-left corner at (r0, c0).
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Mat) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.set(r0 + i, c0 + j, block.get(i, j));
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Mat {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        let mut b = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                b.set(i, j, self.get(r0 + i, c0 + j));
            }
        }
        b
    }

    /// Block-diagonal assembly of square blocks.
    pub fn block_diag(blocks: &[Mat]) -> Mat {
        let total: usize = blocks.iter().map(|b| b.rows).sum();
        let mut out = Mat::zeros(total, total);
        let mut off = 0;
        for b in blocks {
            assert!(b.is_square());
            out.set_block(off, off, b);
            off += b.rows;
        }
        out
    }
}

/// Kronecker product; block (i,j) of the result is a[i,j]·b.
pub fn kron(a: &Mat, b: &Mat) -> Result<Mat, MatError> {
    let rows = a.rows() * b.rows();
    let cols = a.cols() * b.cols();
    if rows > MAX_DIM || cols > MAX_DIM {
        return Err(MatError::DimensionOverflow { rows, cols });
    }
    let mut out = Mat::zeros(rows, cols);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let aij = a.get(i, j);
            if aij == 0.0 {
                continue;
            }
            for p in 0..b.rows() {
                for q in 0..b.cols() {
                    out.set(i * b.rows() + p, j * b.cols() + q, aij * b.get(p, q));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::GaussianSampler;

    fn random_mat(rows: usize, cols: usize, s: &mut GaussianSampler) -> Mat {
        let data: Vec<f64> = (0..rows * cols).map(|_| s.next_standard_normal()).collect();
        Mat::new(rows, cols, data).unwrap()
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            Mat::new(1, 2, vec![1.0, f64::NAN]),
            Err(MatError::NonFiniteEntry)
        ));
    }

    #[test]
    fn kron_identity_case() {
        let k = kron(&Mat::identity(2), &Mat::identity(3)).unwrap();
        assert_eq!(k, Mat::identity(6));
    }

    #[test]
    fn kron_scalar_scaling() {
        let b = Mat::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let a = Mat::new(1, 1, vec![2.0]).unwrap();
        let k = kron(&a, &b).unwrap();
        assert_eq!(k, b.scale(2.0));
    }

    #[test]
    fn kron_matches_quadruple_loop_oracle() {
        let mut s = GaussianSampler::new(11, 0);
        let a = random_mat(3, 3, &mut s);
        let b = random_mat(3, 3, &mut s);
        let k = kron(&a, &b).unwrap();
        // brute-force definition oracle
        for i in 0..3 {
            for j in 0..3 {
                for p in 0..3 {
                    for q in 0..3 {
                        let expect = a.get(i, j) * b.get(p, q);
                        assert_eq!(k.get(3 * i + p, 3 * j + q), expect);
                    }
                }
            }
        }
    }

    #[test]
    fn kron_dimension_overflow() {
        let a = Mat::zeros(100, 100);
        let b = Mat::zeros(100, 100);
        assert!(matches!(
            kron(&a, &b),
            Err(MatError::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn kron_mixed_product_property() {
        // kron(A,B)·kron(C,D) = kron(AC, BD) on random conforming matrices
        let mut s = GaussianSampler::new(7, 0);
        for _ in 0..10 {
            let a = random_mat(2, 3, &mut s);
            let c = random_mat(3, 2, &mut s);
            let b = random_mat(3, 2, &mut s);
            let d = random_mat(2, 4, &mut s);
            let lhs = kron(&a, &b).unwrap().matmul(&kron(&c, &d).unwrap());
            let rhs = kron(&a.matmul(&c), &b.matmul(&d)).unwrap();
            assert!(lhs.sub(&rhs).max_abs() < 1e-10);
        }
    }

    #[test]
    fn block_diag_assembly() {
        let a = Mat::identity(2);
        let b = Mat::new(1, 1, vec![3.0]).unwrap();
        let d = Mat::block_diag(&[a, b]);
        assert_eq!(d.get(0, 0), 1.0);
        assert_eq!(d.get(2, 2), 3.0);
        assert_eq!(d.get(0, 2), 0.0);
    }
}
