//! Sparse symmetric matrices on the vertex graph and Gaussian elimination in
//! minimum-degree order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use crate::error::{Error, Result};

/// Symmetric matrix stored by rows; row `i` holds its diagonal entry.
#[derive(Clone, Debug)]
pub struct SymSparse {
    rows: Vec<BTreeMap<usize, f64>>,
}

impl SymSparse {
    pub fn new(n: usize) -> Self {
        SymSparse { rows: vec![BTreeMap::new(); n] }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Adds `v` at `(i, j)` and `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        *self.rows[i].entry(j).or_insert(0.0) += v;
        if i != j {
            *self.rows[j].entry(i).or_insert(0.0) += v;
        }
    }

    /// Adds `c (e_a - e_b)(e_a - e_b)^T`.
    pub fn add_edge(&mut self, a: usize, b: usize, c: f64) {
        self.add(a, a, c);
        self.add(b, b, c);
        self.add(a, b, -c);
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].get(&j).copied().unwrap_or(0.0)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows[i].iter().map(|(&j, &v)| (j, v))
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|(&j, &v)| v * x[j]).sum()).collect()
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Principal submatrix on `keep`, reindexed by position in `keep`.
    pub fn restrict(&self, keep: &[usize]) -> SymSparse {
        let mut index = vec![usize::MAX; self.dim()];
        for (k, &i) in keep.iter().enumerate() {
            index[i] = k;
        }
        let rows = keep
            .iter()
            .map(|&i| {
                self.rows[i].iter().filter(|(&j, _)| index[j] != usize::MAX).map(|(&j, &v)| (index[j], v)).collect()
            })
            .collect();
        SymSparse { rows }
    }

    fn max_diagonal(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
struct Step {
    index: usize,
    pivot: f64,
    /// Off-diagonal entries of the pivot row at elimination time.
    row: Vec<(usize, f64)>,
}

/// Record of a (partial) symmetric Gaussian elimination.
#[derive(Clone, Debug)]
pub struct Elimination {
    n: usize,
    steps: Vec<Step>,
    eliminated: Vec<bool>,
}

impl Elimination {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_eliminated(&self, i: usize) -> bool {
        self.eliminated[i]
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Applies the row operations of the elimination to a right-hand side.
    pub fn forward(&self, b: &mut [f64]) {
        for s in &self.steps {
            let bz = b[s.index];
            if bz != 0.0 {
                for &(j, a) in &s.row {
                    b[j] -= a / s.pivot * bz;
                }
            }
        }
    }

    /// Solves for the eliminated unknowns given the others in `u` and the
    /// forward-transformed right-hand side `b`.
    pub fn backward(&self, u: &mut [f64], b: &[f64]) {
        for s in self.steps.iter().rev() {
            let acc: f64 = s.row.iter().map(|&(j, a)| a * u[j]).sum();
            u[s.index] = (b[s.index] - acc) / s.pivot;
        }
    }

    /// Fills the eliminated unknowns of `u` with the solution of the
    /// homogeneous equations (the discrete harmonic extension).
    pub fn extend(&self, u: &mut [f64]) {
        for s in self.steps.iter().rev() {
            let acc: f64 = s.row.iter().map(|&(j, a)| a * u[j]).sum();
            u[s.index] = -acc / s.pivot;
        }
    }

    /// Weights `w` over the kept unknowns with `extend(u)[x] = Σ w_j u_j`.
    pub fn extension_weights(&self, x: usize) -> Vec<(usize, f64)> {
        if !self.eliminated[x] {
            return vec![(x, 1.0)];
        }
        let mut g: BTreeMap<usize, f64> = BTreeMap::new();
        g.insert(x, 1.0);
        for s in &self.steps {
            if let Some(c) = g.remove(&s.index) {
                for &(j, a) in &s.row {
                    *g.entry(j).or_insert(0.0) -= c * a / s.pivot;
                }
            }
        }
        g.into_iter().filter(|&(j, _)| !self.eliminated[j]).collect()
    }

    /// Solves `A u = b` after a complete elimination.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = b.to_vec();
        self.forward(&mut rhs);
        let mut u = vec![0.0; self.n];
        self.backward(&mut u, &rhs);
        u
    }
}

/// Eliminates the unknowns flagged in `which`, smallest current degree
/// first. Returns the record and the Schur complement on the remaining
/// unknowns (original indexing; eliminated rows are empty).
pub fn eliminate(a: &SymSparse, which: &[bool]) -> Result<(Elimination, SymSparse)> {
    let n = a.dim();
    let scale = a.max_diagonal();
    let mut rows = a.rows.clone();
    let mut eliminated = vec![false; n];
    let degree = |rows: &[BTreeMap<usize, f64>], i: usize| rows[i].len() - usize::from(rows[i].contains_key(&i));
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).filter(|&i| which[i]).map(|i| Reverse((degree(&rows, i), i))).collect();
    let mut steps = Vec::with_capacity(heap.len());
    while let Some(Reverse((d, z))) = heap.pop() {
        if eliminated[z] {
            continue;
        }
        let current = degree(&rows, z);
        if current != d {
            heap.push(Reverse((current, z)));
            continue;
        }
        let mut row = std::mem::take(&mut rows[z]);
        let pivot = row.remove(&z).unwrap_or(0.0);
        if !(pivot > 1e-13 * scale) {
            return Err(Error::numerical(format!(
                "singular block during elimination (pivot {pivot:e} at unknown {z}, scale {scale:e})"
            )));
        }
        let row: Vec<(usize, f64)> = row.into_iter().collect();
        for &(j, aj) in &row {
            rows[j].remove(&z);
            for &(k, ak) in &row {
                *rows[j].entry(k).or_insert(0.0) -= aj * ak / pivot;
            }
        }
        eliminated[z] = true;
        for &(j, _) in &row {
            if which[j] && !eliminated[j] {
                heap.push(Reverse((degree(&rows, j), j)));
            }
        }
        steps.push(Step { index: z, pivot, row });
    }
    Ok((Elimination { n, steps, eliminated }, SymSparse { rows }))
}

/// Complete elimination of a positive definite matrix.
pub fn factor(a: &SymSparse) -> Result<Elimination> {
    Ok(eliminate(a, &vec![true; a.dim()])?.0)
}
