#![allow(dead_code)]

use hscg_core::linalg::{dot, SparseVec};
use hscg_core::CompositionProblem;

/// `F(x, i) = (⟨a_i, x⟩, sin⟨c_i, x⟩ + ⟨c_i, x⟩²/4)` on fixed small data.
pub struct Toy {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl Toy {
    pub fn new(n: usize, p: usize) -> Self {
        let a = (0..n)
            .map(|i| {
                (0..p)
                    .map(|j| ((i * 7 + j * 3) as f64 * 0.37).sin())
                    .collect()
            })
            .collect();
        let c = (0..n)
            .map(|i| {
                (0..p)
                    .map(|j| ((i * 5 + j * 11 + 1) as f64 * 0.23).cos())
                    .collect()
            })
            .collect();
        Self { a, c }
    }
}

impl CompositionProblem for Toy {
    fn dim(&self) -> usize {
        self.a[0].len()
    }
    fn range_dim(&self) -> usize {
        2
    }
    fn num_samples(&self) -> usize {
        self.a.len()
    }
    fn sample_value(&self, x: &[f64], i: usize) -> Vec<f64> {
        let s = dot(&self.c[i], x);
        vec![dot(&self.a[i], x), s.sin() + 0.25 * s * s]
    }
    fn sample_jacobian(&self, x: &[f64], i: usize) -> Vec<SparseVec> {
        let s = dot(&self.c[i], x);
        let d = s.cos() + 0.5 * s;
        vec![
            SparseVec::from_dense(&self.a[i]),
            SparseVec::from_dense(&self.c[i]).scaled(d),
        ]
    }
}

/// `F(x, i) = ½‖x − c_i‖²`, `q = 1`.
pub struct HalfSq {
    pub centers: Vec<Vec<f64>>,
}

impl CompositionProblem for HalfSq {
    fn dim(&self) -> usize {
        self.centers[0].len()
    }
    fn range_dim(&self) -> usize {
        1
    }
    fn num_samples(&self) -> usize {
        self.centers.len()
    }
    fn sample_value(&self, x: &[f64], i: usize) -> Vec<f64> {
        vec![
            0.5 * x
                .iter()
                .zip(&self.centers[i])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>(),
        ]
    }
    fn sample_jacobian(&self, x: &[f64], i: usize) -> Vec<SparseVec> {
        vec![SparseVec::from_dense(
            &x.iter()
                .zip(&self.centers[i])
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        )]
    }
}

/// `F(x, i) = x − c_i`, `q = p`.
pub struct Shift {
    pub centers: Vec<Vec<f64>>,
}

impl CompositionProblem for Shift {
    fn dim(&self) -> usize {
        self.centers[0].len()
    }
    fn range_dim(&self) -> usize {
        self.centers[0].len()
    }
    fn num_samples(&self) -> usize {
        self.centers.len()
    }
    fn sample_value(&self, x: &[f64], i: usize) -> Vec<f64> {
        x.iter().zip(&self.centers[i]).map(|(a, b)| a - b).collect()
    }
    fn sample_jacobian(&self, _x: &[f64], _i: usize) -> Vec<SparseVec> {
        let p = self.dim();
        (0..p).map(|k| SparseVec::new(vec![k], vec![1.0])).collect()
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let d = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let s = a
        .iter()
        .chain(b)
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    d / s
}
