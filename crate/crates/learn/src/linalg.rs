//! Row-major f64 matrices sized for small policy networks.

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub d: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            d: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Mat {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        let mut d = Vec::with_capacity(r * c);
        for row in rows {
            debug_assert_eq!(row.len(), c);
            d.extend(row);
        }
        Mat { rows: r, cols: c, d }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.d[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.d[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.d[r * self.cols..(r + 1) * self.cols]
    }

    /// self (r x k) * other (k x c), cache-friendly i-k-j order.
    pub fn matmul(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = &other.d[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.d[i * other.cols..(i + 1) * other.cols];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += a * s;
                }
            }
        }
        out
    }

    /// self^T (cols x rows) * other (rows x c).
    pub fn t_matmul(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.rows, other.rows);
        let mut out = Mat::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            for i in 0..self.cols {
                let a = self.at(r, i);
                if a == 0.0 {
                    continue;
                }
                let src = &other.d[r * other.cols..(r + 1) * other.cols];
                let dst = &mut out.d[i * other.cols..(i + 1) * other.cols];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += a * s;
                }
            }
        }
        out
    }

    /// self (r x k) * other^T where other is (c x k).
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.cols, other.cols);
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                let mut acc = 0.0;
                let a = self.row(i);
                let b = other.row(j);
                for k in 0..self.cols {
                    acc += a[k] * b[k];
                }
                *out.at_mut(i, j) = acc;
            }
        }
        out
    }

    pub fn select_rows(&self, indices: &[usize]) -> Mat {
        let mut out = Mat::zeros(indices.len(), self.cols);
        for (dst, src) in indices.iter().enumerate() {
            out.d[dst * self.cols..(dst + 1) * self.cols]
                .copy_from_slice(self.row(*src));
        }
        out
    }
}
