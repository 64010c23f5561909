//! Generalized symmetric eigenproblems `K φ = λ M φ` with diagonal `M > 0`.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::sparse::{factor, SymSparse};
use crate::error::{Error, Result};

/// Eigenvalues ascending and mass-orthonormal eigenvectors, column-major
/// `n × modes`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub n: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    /// Set when only the lowest part of the spectrum was computed.
    pub truncated: bool,
}

impl Spectrum {
    pub fn modes(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    /// Sets the bottom mode to the normalized constant and removes the
    /// constant component of the others (a connected space with reflecting
    /// ends has the constants as its exact kernel).
    pub fn pin_constant(&mut self, mass: &[f64]) {
        let n = self.n;
        let c = 1.0 / mass.iter().sum::<f64>().sqrt();
        self.values[0] = 0.0;
        self.vectors[..n].iter_mut().for_each(|x| *x = c);
        for col in self.vectors[n..].chunks_mut(n) {
            let dot: f64 = col.iter().zip(mass).map(|(x, m)| x * m).sum::<f64>() * c;
            col.iter_mut().for_each(|x| *x -= dot * c);
        }
    }
}

fn eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|err| Error::numerical(format!("symmetric eigen-solve of order {} failed: {err:?}", a.nrows())))?;
    let s = e.S().column_vector();
    let values = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((values, e.U().to_owned()))
}

/// Fixes the sign of each column so that its largest entry is positive and
/// clamps round-off negatives of the bottom eigenvalue.
fn normalize(n: usize, values: &mut [f64], vectors: &mut [f64]) {
    for (k, col) in vectors.chunks_mut(n).enumerate() {
        let (mut big, mut at) = (0.0f64, 0);
        for (i, x) in col.iter().enumerate() {
            if x.abs() > big * (1.0 + 1e-9) {
                big = x.abs();
                at = i;
            }
        }
        if col[at] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        values[k] = values[k].max(0.0);
    }
}

/// Full solve through `M^{-1/2} K M^{-1/2}`.
pub fn dense(k: &SymSparse, mass: &[f64]) -> Result<Spectrum> {
    let n = mass.len();
    let s: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut a = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, v) in k.row(i) {
            a[(i, j)] = v * s[i] * s[j];
        }
    }
    let (mut values, u) = eigen(&a)?;
    let mut vectors = vec![0.0; n * n];
    for c in 0..n {
        for i in 0..n {
            vectors[c * n + i] = u[(i, c)] * s[i];
        }
    }
    normalize(n, &mut values, &mut vectors);
    let mut s = Spectrum { n, values, vectors, truncated: false };
    s.pin_constant(mass);
    Ok(s)
}

const MAX_SWEEPS: usize = 400;

/// Mass-orthonormal basis of the span of the columns of `y` (Householder QR
/// of `M^{1/2} y`).
fn orthonormalize(mass: &[f64], y: &Mat<f64>) -> Mat<f64> {
    let root: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
    let z = Mat::<f64>::from_fn(y.nrows(), y.ncols(), |i, j| root[i] * y[(i, j)]);
    let q = z.qr().compute_thin_Q();
    Mat::<f64>::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] / root[i])
}

/// Removes the component along the constants in the mass inner product.
fn deflate(mass: &[f64], total: f64, y: &mut Mat<f64>) {
    for c in 0..y.ncols() {
        let mean = (0..y.nrows()).map(|i| mass[i] * y[(i, c)]).sum::<f64>() / total;
        for i in 0..y.nrows() {
            y[(i, c)] -= mean;
        }
    }
}

/// Rayleigh–Ritz on a mass-orthonormal basis: Ritz values ascending and
/// mass-orthonormal Ritz vectors.
fn rayleigh_ritz(k: &SymSparse, w: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let (n, b) = (w.nrows(), w.ncols());
    let mut kw = Mat::<f64>::zeros(n, b);
    for i in 0..n {
        for (j, v) in k.row(i) {
            for c in 0..b {
                kw[(i, c)] += v * w[(j, c)];
            }
        }
    }
    let h = w.transpose() * &kw;
    let h = Mat::<f64>::from_fn(b, b, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]));
    let (theta, z) = eigen(&h)?;
    Ok((theta, w * &z))
}

/// Lowest `modes` eigenpairs of a form whose kernel is the constants, by
/// shift-invert subspace iteration on the complement of the constants with
/// a guard block (multiple eigenvalues are resolved up to the block size).
pub fn partial(k: &SymSparse, mass: &[f64], modes: usize, seed: u64) -> Result<Spectrum> {
    let n = mass.len();
    let modes = modes.clamp(1, n);
    if modes == 1 {
        let mut s = Spectrum { n, values: vec![0.0], vectors: vec![0.0; n], truncated: n > 1 };
        s.pin_constant(mass);
        return Ok(s);
    }
    let wanted = modes - 1;
    let b = (wanted + wanted / 2 + 10).min(n - 1);
    let total: f64 = mass.iter().sum();
    let top = (0..n).map(|i| k.get(i, i) / mass[i]).fold(0.0f64, f64::max);
    let sigma = 1e-9 * top.max(f64::MIN_POSITIVE);
    let mut shifted = k.clone();
    for (i, &m) in mass.iter().enumerate() {
        shifted.add(i, i, sigma * m);
    }
    let fac = factor(&shifted)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Mat::<f64>::from_fn(n, b, |_, _| rng.gen_range(-1.0..1.0));
    deflate(mass, total, &mut x);
    x = orthonormalize(mass, &x);
    let mut prev = vec![f64::INFINITY; wanted];
    for _ in 0..MAX_SWEEPS {
        let cols: Vec<Vec<f64>> = (0..b)
            .into_par_iter()
            .map(|c| {
                let rhs: Vec<f64> = (0..n).map(|i| mass[i] * x[(i, c)]).collect();
                fac.solve(&rhs)
            })
            .collect();
        let mut y = Mat::<f64>::from_fn(n, b, |i, j| cols[j][i]);
        deflate(mass, total, &mut y);
        let (theta, ritz) = rayleigh_ritz(k, &orthonormalize(mass, &y))?;
        let scale = theta[wanted - 1].abs().max(f64::MIN_POSITIVE);
        let change = (0..wanted).map(|i| (theta[i] - prev[i]).abs()).fold(0.0, f64::max);
        prev.copy_from_slice(&theta[..wanted]);
        x = ritz;
        if change <= 1e-12 * scale {
            let mut values = vec![0.0];
            values.extend_from_slice(&prev);
            let mut vectors = vec![0.0; n * modes];
            for c in 0..wanted {
                for i in 0..n {
                    vectors[(c + 1) * n + i] = x[(i, c)];
                }
            }
            normalize(n, &mut values, &mut vectors);
            let mut s = Spectrum { n, values, vectors, truncated: modes < n };
            s.pin_constant(mass);
            return Ok(s);
        }
    }
    Err(Error::numerical(format!("subspace iteration for {modes} modes did not converge in {MAX_SWEEPS} sweeps")))
}
