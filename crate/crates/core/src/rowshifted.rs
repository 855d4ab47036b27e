//! Packed Jacobian storage for chain-structured least-squares problems.
//!
//! Every row of the global Jacobian of a k-order Markov problem depends on a
//! single tuple `(x_{t-k}, .., x_t)`, so at most `(k+1)·n` of its entries can
//! be nonzero. [`RowShiftedMatrix`] stores exactly those entries together
//! with the true column of the first stored entry (the row's *shift*).
//! Products against the packed form never materialize the dense matrix;
//! `JᵀJ` comes out as a [`BandedSymmetricMatrix`] with band-width equal to
//! the packed width.

use std::io::{self, Write};

use crate::error::{check_len, Error, Result};

/// Row-shifted packed matrix.
///
/// Logical entry `(i, shift[i] + c)` equals `data[i * packed_width + c]`.
/// Packed entries that map to a true column `>= true_width` must be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RowShiftedMatrix {
    rows: usize,
    packed_width: usize,
    true_width: usize,
    shift: Vec<usize>,
    data: Vec<f64>,
}

impl RowShiftedMatrix {
    pub fn zeros(rows: usize, packed_width: usize, true_width: usize) -> Self {
        RowShiftedMatrix {
            rows,
            packed_width,
            true_width,
            shift: vec![0; rows],
            data: vec![0.0; rows * packed_width],
        }
    }

    pub fn from_parts(
        packed_width: usize,
        true_width: usize,
        shift: Vec<usize>,
        data: Vec<f64>,
    ) -> Result<Self> {
        let rows = shift.len();
        check_len("packed data", rows * packed_width, data.len())?;
        let m = RowShiftedMatrix {
            rows,
            packed_width,
            true_width,
            shift,
            data,
        };
        m.validate()?;
        Ok(m)
    }

    /// Packed identity of size `dim`: `shift[i] = i`, one stored entry per row.
    pub fn identity(dim: usize) -> Self {
        RowShiftedMatrix {
            rows: dim,
            packed_width: 1,
            true_width: dim,
            shift: (0..dim).collect(),
            data: vec![1.0; dim],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn packed_width(&self) -> usize {
        self.packed_width
    }

    pub fn true_width(&self) -> usize {
        self.true_width
    }

    pub fn shifts(&self) -> &[usize] {
        &self.shift
    }

    pub fn shift(&self, row: usize) -> usize {
        self.shift[row]
    }

    pub fn set_shift(&mut self, row: usize, shift: usize) {
        self.shift[row] = shift;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.packed_width..(i + 1) * self.packed_width]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.packed_width..(i + 1) * self.packed_width]
    }

    pub fn scale_row(&mut self, i: usize, factor: f64) {
        self.row_mut(i).iter_mut().for_each(|v| *v *= factor);
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
        self.shift.iter_mut().for_each(|s| *s = 0);
    }

    /// Checks that shifts stay within range and that every nonzero entry maps
    /// to a true column.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.rows {
            let s = self.shift[i];
            if s > self.true_width {
                return Err(Error::Structural {
                    row: i,
                    column: s,
                    width: self.true_width,
                });
            }
            for (c, &v) in self.row(i).iter().enumerate() {
                if s + c >= self.true_width && v != 0.0 {
                    return Err(Error::Structural {
                        row: i,
                        column: s + c,
                        width: self.true_width,
                    });
                }
            }
        }
        Ok(())
    }

    /// Appends the rows of `other`, which must share both widths.
    pub fn append(&mut self, other: &RowShiftedMatrix) -> Result<()> {
        check_len("packed width", self.packed_width, other.packed_width)?;
        check_len("true width", self.true_width, other.true_width)?;
        self.rows += other.rows;
        self.shift.extend_from_slice(&other.shift);
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    /// Dense row-major `rows × true_width` copy.
    pub fn unpack(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut dense = vec![0.0; self.rows * self.true_width];
        for i in 0..self.rows {
            let s = self.shift[i];
            let dense_row = &mut dense[i * self.true_width..(i + 1) * self.true_width];
            for (c, &v) in self.row(i).iter().enumerate() {
                if s + c < self.true_width {
                    dense_row[s + c] = v;
                }
            }
        }
        Ok(dense)
    }

    /// Number of packed columns of row `i` that land on true columns.
    fn live_width(&self, i: usize) -> usize {
        self.packed_width
            .min(self.true_width.saturating_sub(self.shift[i]))
    }

    fn check_tail(&self, i: usize, live: usize) -> Result<()> {
        match self.row(i)[live..].iter().position(|&v| v != 0.0) {
            None => Ok(()),
            Some(c) => Err(Error::Structural {
                row: i,
                column: self.shift[i] + live + c,
                width: self.true_width,
            }),
        }
    }

    /// `AᵀA` in banded storage. Cost is `O(rows · packed_width²)`.
    pub fn ata(&self) -> Result<BandedSymmetricMatrix> {
        let bandwidth = self.packed_width.min(self.true_width).max(1);
        let mut out = BandedSymmetricMatrix::zeros(self.true_width, bandwidth);
        for i in 0..self.rows {
            let live = self.live_width(i);
            self.check_tail(i, live)?;
            let s = self.shift[i];
            let a = &self.row(i)[..live];
            for (c1, &v1) in a.iter().enumerate() {
                if v1 == 0.0 {
                    continue;
                }
                for (c2, &v2) in a[..=c1].iter().enumerate() {
                    out.add_lower(s + c1, c1 - c2, v1 * v2);
                }
            }
        }
        Ok(out)
    }

    /// `Aᵀy` for `y` of length `rows`.
    pub fn atx(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("atx input", self.rows, y.len())?;
        let mut out = vec![0.0; self.true_width];
        for (i, &yi) in y.iter().enumerate() {
            let live = self.live_width(i);
            self.check_tail(i, live)?;
            let s = self.shift[i];
            for (o, &a) in out[s..s + live].iter_mut().zip(&self.row(i)[..live]) {
                *o += a * yi;
            }
        }
        Ok(out)
    }

    /// `Ax` for `x` of length `true_width`.
    pub fn ax(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("ax input", self.true_width, x.len())?;
        let mut out = vec![0.0; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let live = self.live_width(i);
            self.check_tail(i, live)?;
            let s = self.shift[i];
            *o = self.row(i)[..live]
                .iter()
                .zip(&x[s..s + live])
                .map(|(a, b)| a * b)
                .sum();
        }
        Ok(out)
    }

    /// Debug dump as `row col value` lines, one per nonzero entry, using true
    /// column indices.
    pub fn write_coordinates<W: Write>(&self, mut w: W) -> io::Result<()> {
        for i in 0..self.rows {
            let s = self.shift[i];
            for (c, &v) in self.row(i).iter().enumerate() {
                if v != 0.0 {
                    writeln!(w, "{} {} {}", i, s + c, v)?;
                }
            }
        }
        Ok(())
    }
}

/// Symmetric matrix with entries only for `|i - j| < bandwidth`.
///
/// The lower band is stored diagonal-major: diagonal `d` occupies
/// `bands[d * dim .. (d + 1) * dim]` and its entry `j` is `B[j + d][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSymmetricMatrix {
    dim: usize,
    bandwidth: usize,
    bands: Vec<f64>,
}

impl BandedSymmetricMatrix {
    pub fn zeros(dim: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.max(1);
        BandedSymmetricMatrix {
            dim,
            bandwidth,
            bands: vec![0.0; dim * bandwidth],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, 1);
        m.add_diagonal(1.0);
        m
    }

    /// Builds from a dense row-major matrix, reading the lower band only.
    pub fn from_dense(dense: &[f64], dim: usize, bandwidth: usize) -> Result<Self> {
        check_len("dense matrix", dim * dim, dense.len())?;
        let mut m = Self::zeros(dim, bandwidth);
        for d in 0..m.bandwidth {
            for j in 0..dim.saturating_sub(d) {
                m.bands[d * dim + j] = dense[(j + d) * dim + j];
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn bands(&self) -> &[f64] {
        &self.bands
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d < self.bandwidth {
            self.bands[d * self.dim + lo]
        } else {
            0.0
        }
    }

    /// Adds `v` to `B[row][row - offset]` (and its mirror).
    #[inline]
    fn add_lower(&mut self, row: usize, offset: usize, v: f64) {
        self.bands[offset * self.dim + row - offset] += v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        assert!(hi - lo < self.bandwidth, "entry ({i}, {j}) outside band");
        self.add_lower(hi, hi - lo, v);
    }

    pub fn add_diagonal(&mut self, v: f64) {
        self.bands[..self.dim].iter_mut().for_each(|b| *b += v);
    }

    pub fn scale(&mut self, s: f64) {
        self.bands.iter_mut().for_each(|b| *b *= s);
    }

    /// `self += s · other`; the band widens to the larger of the two.
    pub fn add_scaled(&mut self, s: f64, other: &BandedSymmetricMatrix) -> Result<()> {
        check_len("banded dim", self.dim, other.dim)?;
        if other.bandwidth > self.bandwidth {
            let mut bands = vec![0.0; self.dim * other.bandwidth];
            bands[..self.bands.len()].copy_from_slice(&self.bands);
            self.bands = bands;
            self.bandwidth = other.bandwidth;
        }
        for (a, b) in self.bands.iter_mut().zip(&other.bands) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("banded product input", self.dim, x.len())?;
        let n = self.dim;
        let mut y = vec![0.0; n];
        for j in 0..n {
            y[j] += self.bands[j] * x[j];
        }
        for d in 1..self.bandwidth {
            for j in 0..n.saturating_sub(d) {
                let b = self.bands[d * n + j];
                y[j + d] += b * x[j];
                y[j] += b * x[j + d];
            }
        }
        Ok(y)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut dense = vec![0.0; n * n];
        for d in 0..self.bandwidth {
            for j in 0..n.saturating_sub(d) {
                let b = self.bands[d * n + j];
                dense[(j + d) * n + j] = b;
                dense[j * n + j + d] = b;
            }
        }
        dense
    }

    /// Banded Cholesky factorization `B = L·Lᵀ`, `O(dim · bandwidth²)`.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let n = self.dim;
        let w = self.bandwidth;
        let mut l = vec![0.0; n * w];
        let at = |d: usize, j: usize| d * n + j;
        for j in 0..n {
            let first = (j + 1).saturating_sub(w);
            let mut s = self.bands[j];
            for p in first..j {
                let v = l[at(j - p, p)];
                s -= v * v;
            }
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: s });
            }
            let pivot = s.sqrt();
            l[at(0, j)] = pivot;
            for i in j + 1..n.min(j + w) {
                let first = (i + 1).saturating_sub(w);
                let mut v = self.bands[at(i - j, j)];
                for p in first..j {
                    v -= l[at(i - p, p)] * l[at(j - p, p)];
                }
                l[at(i - j, j)] = v / pivot;
            }
        }
        Ok(BandedCholesky {
            dim: n,
            bandwidth: w,
            factor: l,
        })
    }

    /// Solves `B·x = rhs` through the banded Cholesky factor.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_len("banded solve rhs", self.dim, rhs.len())?;
        self.cholesky()?.solve(rhs)
    }
}

/// Lower-triangular banded factor in the same diagonal-major layout.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    dim: usize,
    bandwidth: usize,
    factor: Vec<f64>,
}

impl BandedCholesky {
    /// Entry `L[i][j]` (zero outside the lower band).
    pub fn l(&self, i: usize, j: usize) -> f64 {
        if j > i || i - j >= self.bandwidth {
            0.0
        } else {
            self.factor[(i - j) * self.dim + j]
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_len("cholesky rhs", self.dim, rhs.len())?;
        let n = self.dim;
        let w = self.bandwidth;
        let l = &self.factor;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let first = (i + 1).saturating_sub(w);
            let mut v = y[i];
            for p in first..i {
                v -= l[(i - p) * n + p] * y[p];
            }
            y[i] = v / l[i];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for r in i + 1..n.min(i + w) {
                v -= l[(r - i) * n + i] * y[r];
            }
            y[i] = v / l[i];
        }
        Ok(y)
    }
}
