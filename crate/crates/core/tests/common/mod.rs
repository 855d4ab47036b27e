#![allow(dead_code)]

use korder::rowshifted::RowShiftedMatrix;
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::Rng;

/// Random Jacobian with the structure of a k-order problem: every row
/// belongs to some `t`, is shifted to `(t-k)·n` (clamped at 0) and only has
/// entries on columns of `x_{t-k..t}` that exist.
pub fn random_rowshifted(rng: &mut StdRng, n: usize, k: usize, horizon: usize, rows: usize) -> RowShiftedMatrix {
    let pw = (k + 1) * n;
    let tw = (horizon + 1) * n;
    let mut shifts = Vec::with_capacity(rows);
    let mut data = vec![0.0; rows * pw];
    for r in 0..rows {
        let t = rng.gen_range(0..=horizon);
        let shift = t.saturating_sub(k) * n;
        shifts.push(shift);
        let hi = ((t + 1) * n).min(tw) - shift;
        for j in 0..hi.min(pw) {
            data[r * pw + j] = rng.gen_range(-2.0..2.0);
        }
    }
    RowShiftedMatrix::from_parts(pw, tw, shifts, data).expect("valid instance")
}

/// Dense matrix from `(row, true column, value)` triples, built entry by
/// entry without going through `unpack`.
pub fn coordinate_oracle(a: &RowShiftedMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.rows(), a.true_width());
    for r in 0..a.rows() {
        for (j, &v) in a.row(r).iter().enumerate() {
            if v != 0.0 {
                m[(r, a.shift(r) + j)] += v;
            }
        }
    }
    m
}

pub fn random_vec(rng: &mut StdRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
