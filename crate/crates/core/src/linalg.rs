//! Dense square solves: LU with partial pivoting, a 1-norm condition
//! estimate, and optional ridge regularisation.

use crate::error::{ImpactError, Result};
use crate::par;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `A^T A + lambda I` and `A^T b`.
    pub fn normal_equations(&self, b: &[f64], lambda: f64) -> (Matrix, Vec<f64>) {
        let n = self.cols;
        let mut ata = Matrix::zeros(n, n);
        par::for_each_row(&mut ata.data, n, |i, row| {
            for (j, out) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for k in 0..self.rows {
                    s += self.get(k, i) * self.get(k, j);
                }
                *out = s + if i == j { lambda } else { 0.0 };
            }
        });
        (ata, self.transpose_mul_vec(b))
    }

    pub fn transpose_mul_vec(&self, b: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|i| (0..self.rows).map(|k| self.get(k, i) * b[k]).sum())
            .collect()
    }
}

/// LU factorisation `P A = L U` of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    norm_1: f64,
}

const PAR_THRESHOLD: usize = 1 << 14;

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let norm_1 = a.norm_1();
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best == 0.0 || !best.is_finite() {
                return Err(ImpactError::Singular { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let (head, tail) = lu.split_at_mut((k + 1) * n);
            let pivot_row = &head[k * n..];
            let pivot = pivot_row[k];
            let update = |_: usize, row: &mut [f64]| {
                let factor = row[k] / pivot;
                row[k] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        row[j] -= factor * pivot_row[j];
                    }
                }
            };
            if (n - k) * (n - k) >= PAR_THRESHOLD {
                par::for_each_row(tail, n, update);
            } else {
                tail.chunks_mut(n).enumerate().for_each(|(i, row)| update(i, row));
            }
        }
        Ok(Lu { n, lu, perm, norm_1 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lu[k * n + i] * y[k];
            }
            y[i] = s / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lu[k * n + i] * y[k];
            }
            y[i] = s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Hager-Higham estimate of the 1-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            let norm: f64 = y.iter().map(|v| v.abs()).sum();
            if !norm.is_finite() {
                return f64::INFINITY;
            }
            if norm <= estimate {
                break;
            }
            estimate = norm;
            let xi: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, -1.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x = vec![0.0; n];
            x[j] = 1.0;
        }
        // Higham's alternating-sign vector guards against underestimation.
        let alt: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
            })
            .collect();
        let y = self.solve(&alt);
        let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        estimate.max(alt_est) * self.norm_1
    }
}

/// Options for [`solve_checked`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Tikhonov parameter; zero solves the square system directly.
    pub ridge: f64,
    /// Maximum accepted condition estimate.
    pub max_condition: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            ridge: 0.0,
            max_condition: 1e12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Condition estimate of the matrix actually factorised.
    pub condition: f64,
}

/// Solves `A x = b`, refusing singular or ill-conditioned systems unless a
/// ridge term is given.
pub fn solve_checked(a: &Matrix, b: &[f64], opts: SolveOptions) -> Result<Solution> {
    let lu = if opts.ridge > 0.0 {
        let (ata, atb) = a.normal_equations(b, opts.ridge);
        let lu = Lu::factor(&ata)?;
        let condition = lu.condition_estimate();
        let x = lu.solve(&atb);
        return finish(x, condition, opts);
    } else {
        Lu::factor(a)?
    };
    let condition = lu.condition_estimate();
    let x = lu.solve(b);
    finish(x, condition, opts)
}

/// Solves `A x = b` for several right-hand sides sharing one factorisation.
pub fn solve_many_checked(a: &Matrix, rhs: &[Vec<f64>], opts: SolveOptions) -> Result<(Vec<Vec<f64>>, f64)> {
    let (lu, rhs): (Lu, Vec<Vec<f64>>) = if opts.ridge > 0.0 {
        let (ata, _) = a.normal_equations(&vec![0.0; a.rows], opts.ridge);
        let projected = rhs.iter().map(|b| a.transpose_mul_vec(b)).collect();
        (Lu::factor(&ata)?, projected)
    } else {
        (Lu::factor(a)?, rhs.to_vec())
    };
    let condition = lu.condition_estimate();
    let solutions: Vec<Vec<f64>> = par::map_slice(&rhs, |b| lu.solve(b));
    for x in &solutions {
        finish(x.clone(), condition, opts)?;
    }
    Ok((solutions, condition))
}

fn finish(x: Vec<f64>, condition: f64, opts: SolveOptions) -> Result<Solution> {
    if !(condition <= opts.max_condition) || x.iter().any(|v| !v.is_finite()) {
        return Err(ImpactError::IllConditioned {
            condition,
            limit: opts.max_condition,
        });
    }
    Ok(Solution { x, condition })
}
