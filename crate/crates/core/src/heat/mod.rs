//! Kirchhoff Dirichlet form `ℰ₂(f) = ∫ |∂f|² dν` on `L²(m)`, its heat
//! semigroup and heat kernel, and the numerical estimate protocols.

mod cache;
mod estimates;
pub mod sparse;
pub mod spectrum;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::PlFunction;
use crate::error::{Error, Result};
use crate::measure::MeasureWeights;
use crate::tree::{CableSystem, TreePoint, VertexId};
use sparse::{eliminate, Elimination, SymSparse};
use spectrum::Spectrum;

pub use cache::{assemble_cached, cache_key};
pub use estimates::*;

/// Largest number of degrees of freedom solved densely by default.
pub const DENSE_LIMIT: usize = 4000;
/// Default number of modes of a partial solve.
pub const PARTIAL_MODES: usize = 1500;

/// Behaviour at the leaves of the space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Kirchhoff (natural) condition; the semigroup is conservative.
    #[default]
    Reflecting,
}

/// Handling of mesh vertices that carry no mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MassTreatment {
    /// Schur complement onto the massive vertices; functions are extended
    /// harmonically to the others.
    Condense,
    /// Every massless vertex gets `relative · total_mass / vertex_count`.
    Floor { relative: f64 },
}

impl Default for MassTreatment {
    fn default() -> Self {
        MassTreatment::Condense
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeatOptions {
    pub treatment: MassTreatment,
    /// Modes kept by a partial solve; `None` means `min(DOF, PARTIAL_MODES)`.
    pub modes: Option<usize>,
    /// Above this many degrees of freedom the partial solver is used.
    pub dense_limit: usize,
    pub seed: u64,
}

impl Default for HeatOptions {
    fn default() -> Self {
        HeatOptions { treatment: MassTreatment::Condense, modes: None, dense_limit: DENSE_LIMIT, seed: 0 }
    }
}

/// The assembled form with its spectral decomposition.
#[derive(Clone, Debug)]
pub struct HeatOperator {
    space: CableSystem,
    measure: MeasureWeights,
    boundary: Boundary,
    treatment: MassTreatment,
    /// `1 / length` per edge of `space`.
    conductance: Vec<f64>,
    /// Lumped mass per vertex of `space`, floor included.
    mass: Vec<f64>,
    floor: f64,
    dof: Vec<VertexId>,
    dof_of: Vec<Option<usize>>,
    elimination: Option<Elimination>,
    spectrum: Spectrum,
}

/// `assemble_with` under the default options.
pub fn assemble(space: &CableSystem, m: &MeasureWeights, h: f64, boundary: Boundary) -> Result<HeatOperator> {
    assemble_with(space, m, h, boundary, &HeatOptions::default())
}

/// Subdivides `space` to mesh `h` (no subdivision for `h` at least the
/// longest edge or infinite), lumps `m` and solves the eigenproblem.
pub fn assemble_with(
    space: &CableSystem,
    m: &MeasureWeights,
    h: f64,
    boundary: Boundary,
    opts: &HeatOptions,
) -> Result<HeatOperator> {
    let prepared = Prepared::new(space, m, h, boundary, opts)?;
    let spectrum = prepared.solve(opts)?;
    Ok(prepared.finish(spectrum))
}

/// Everything but the spectrum.
struct Prepared {
    op: HeatOperator,
    reduced: SymSparse,
}

impl Prepared {
    fn new(space: &CableSystem, m: &MeasureWeights, h: f64, boundary: Boundary, opts: &HeatOptions) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::input(format!("mesh size {h} must be positive")));
        }
        let refined =
            if h.is_finite() && h < space.max_edge_length() { space.refine(h)?.0 } else { space.clone() };
        let measure = m.pull_to(&refined)?;
        let mut mass = measure.lumped();
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::MeasureSupport("the measure has zero total mass".into()));
        }
        let n = refined.vertex_count();
        let conductance: Vec<f64> = refined.edges().iter().map(|e| 1.0 / e.len).collect();
        let mut k = SymSparse::new(n);
        for (id, e) in refined.edges().iter().enumerate() {
            k.add_edge(e.a, e.b, conductance[id]);
        }
        let (floor, elimination, reduced_full) = match opts.treatment {
            MassTreatment::Condense => {
                let massless: Vec<bool> = mass.iter().map(|&w| w <= 0.0).collect();
                if massless.iter().any(|&z| z) {
                    let (elim, schur) = eliminate(&k, &massless)?;
                    (0.0, Some(elim), schur)
                } else {
                    (0.0, None, k)
                }
            }
            MassTreatment::Floor { relative } => {
                if !(relative > 0.0 && relative.is_finite()) {
                    return Err(Error::input("mass floor must be positive"));
                }
                let floor = relative * total / n as f64;
                for w in mass.iter_mut().filter(|w| **w <= 0.0) {
                    *w = floor;
                }
                (floor, None, k)
            }
        };
        let dof: Vec<VertexId> = (0..n).filter(|&v| mass[v] > 0.0).collect();
        let mut dof_of = vec![None; n];
        for (i, &v) in dof.iter().enumerate() {
            dof_of[v] = Some(i);
        }
        let reduced = reduced_full.restrict(&dof);
        let op = HeatOperator {
            space: refined,
            measure,
            boundary,
            treatment: opts.treatment,
            conductance,
            mass,
            floor,
            dof,
            dof_of,
            elimination,
            spectrum: Spectrum { n: 0, values: Vec::new(), vectors: Vec::new(), truncated: false },
        };
        Ok(Prepared { op, reduced })
    }

    fn dof_mass(&self) -> Vec<f64> {
        self.op.dof.iter().map(|&v| self.op.mass[v]).collect()
    }

    fn solve(&self, opts: &HeatOptions) -> Result<Spectrum> {
        let mass = self.dof_mass();
        let n = mass.len();
        if n == 1 {
            return Ok(Spectrum { n, values: vec![0.0], vectors: vec![1.0 / mass[0].sqrt()], truncated: false });
        }
        if n <= opts.dense_limit {
            spectrum::dense(&self.reduced, &mass)
        } else {
            spectrum::partial(&self.reduced, &mass, opts.modes.unwrap_or(PARTIAL_MODES).min(n), opts.seed)
        }
    }

    fn finish(mut self, spectrum: Spectrum) -> HeatOperator {
        self.op.spectrum = spectrum;
        self.op
    }
}

impl HeatOperator {
    /// The subdivision the form is assembled on.
    pub fn space(&self) -> &CableSystem {
        &self.space
    }

    /// The reference measure restated on [`Self::space`].
    pub fn measure(&self) -> &MeasureWeights {
        &self.measure
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn treatment(&self) -> MassTreatment {
        self.treatment
    }

    pub fn conductances(&self) -> &[f64] {
        &self.conductance
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// Mass given to massless vertices (0 under condensation).
    pub fn mass_floor(&self) -> f64 {
        self.floor
    }

    pub fn total_mass(&self) -> f64 {
        self.dof.iter().map(|&v| self.mass[v]).sum()
    }

    /// Vertices carrying an unknown of the eigenproblem.
    pub fn dof_vertices(&self) -> &[VertexId] {
        &self.dof
    }

    pub fn dof_count(&self) -> usize {
        self.dof.len()
    }

    pub fn is_dof(&self, v: VertexId) -> bool {
        self.dof_of[v].is_some()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.spectrum.values
    }

    pub fn mode_count(&self) -> usize {
        self.spectrum.modes()
    }

    pub fn is_truncated(&self) -> bool {
        self.spectrum.truncated
    }

    /// `e^{-λ_K t}` for the first omitted mode, 0 for a full solve.
    pub fn truncation_bound(&self, t: f64) -> f64 {
        if self.spectrum.truncated {
            (-self.spectrum.values.last().copied().unwrap_or(0.0) * t).exp()
        } else {
            0.0
        }
    }

    /// Longest edge of the assembly mesh.
    pub fn mesh_size(&self) -> f64 {
        self.space.max_edge_length()
    }

    /// Eigenvector `k` on the degrees of freedom.
    pub fn mode(&self, k: usize) -> &[f64] {
        self.spectrum.vector(k)
    }

    /// Eigenvector `k` on every vertex.
    pub fn mode_values(&self, k: usize) -> Vec<f64> {
        self.extend(self.mode(k))
    }

    /// Values on every vertex from values on the degrees of freedom.
    pub fn extend(&self, dof_values: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.space.vertex_count()];
        for (i, &v) in self.dof.iter().enumerate() {
            u[v] = dof_values[i];
        }
        if let Some(e) = &self.elimination {
            e.extend(&mut u);
        }
        u
    }

    /// `ℰ₂` of the piecewise-linear function with the given vertex values.
    pub fn energy(&self, values: &[f64]) -> f64 {
        self.space
            .edges()
            .iter()
            .enumerate()
            .map(|(id, e)| self.conductance[id] * (values[e.a] - values[e.b]).powi(2))
            .sum()
    }

    /// Vertex of the assembly mesh nearest to a point of any subdivision of
    /// the same root space.
    pub fn locate(&self, from: &CableSystem, p: &TreePoint) -> Result<VertexId> {
        match self.space.transfer(from, p)? {
            TreePoint::Vertex(v) => Ok(v),
            TreePoint::OnEdge { edge, offset } => {
                let e = self.space.edge(edge);
                Ok(if offset <= 0.5 * e.len { e.a } else { e.b })
            }
        }
    }

    fn check_time(t: f64) -> Result<()> {
        if t > 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(Error::input(format!("time t = {t} must be positive")))
        }
    }

    /// Weights over the degrees of freedom reproducing the value at `x`.
    fn weights_at(&self, x: VertexId) -> Vec<(usize, f64)> {
        match (&self.elimination, self.dof_of[x]) {
            (_, Some(i)) => vec![(i, 1.0)],
            (Some(e), None) => {
                e.extension_weights(x).into_iter().map(|(v, w)| (self.dof_of[v].expect("kept vertex"), w)).collect()
            }
            (None, None) => unreachable!("every vertex is a degree of freedom without condensation"),
        }
    }

    /// `e^{-λ_k t} φ_k(x)` for every mode.
    fn damped_modes_at(&self, t: f64, x: VertexId) -> Vec<f64> {
        let w = self.weights_at(x);
        (0..self.mode_count())
            .map(|k| {
                let phi = self.mode(k);
                let v: f64 = w.iter().map(|&(i, c)| c * phi[i]).sum();
                (-self.spectrum.values[k] * t).exp() * v
            })
            .collect()
    }

    fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.dof.len();
        let mut out = vec![0.0; n];
        for (k, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                for (o, &p) in out.iter_mut().zip(self.mode(k)) {
                    *o += c * p;
                }
            }
        }
        out
    }

    /// `p_t(x, y)` at two mesh vertices.
    pub fn kernel(&self, t: f64, x: VertexId, y: VertexId) -> Result<f64> {
        Self::check_time(t)?;
        let a = self.damped_modes_at(t, x);
        let w = self.weights_at(y);
        Ok((0..self.mode_count())
            .map(|k| {
                let phi = self.mode(k);
                a[k] * w.iter().map(|&(i, c)| c * phi[i]).sum::<f64>()
            })
            .sum())
    }

    /// `y ↦ p_t(x, y)` on every mesh vertex.
    pub fn kernel_row(&self, t: f64, x: VertexId) -> Result<Vec<f64>> {
        Self::check_time(t)?;
        Ok(self.extend(&self.kernel_row_dof(t, x)))
    }

    /// `y ↦ p_t(x, y)` on the degrees of freedom.
    pub fn kernel_row_dof(&self, t: f64, x: VertexId) -> Vec<f64> {
        self.combine(&self.damped_modes_at(t, x))
    }

    /// `[p_t(x_i, x_j)]` over the degrees of freedom, row-major.
    pub fn kernel_matrix(&self, t: f64) -> Result<Vec<f64>> {
        Self::check_time(t)?;
        let n = self.dof.len();
        let k = self.mode_count();
        let damp: Vec<f64> = self.spectrum.values.iter().map(|l| (-l * t).exp()).collect();
        let v = faer::Mat::<f64>::from_fn(n, k, |i, j| self.mode(j)[i]);
        let dv = faer::Mat::<f64>::from_fn(n, k, |i, j| damp[j] * self.mode(j)[i]);
        let p = &dv * v.transpose();
        let mut out = vec![0.0; n * n];
        out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, o) in row.iter_mut().enumerate() {
                *o = p[(i, j)];
            }
        });
        Ok(out)
    }

    /// Mass-weighted spectral coefficients `⟨f, φ_k⟩_m` of vertex values.
    pub fn coefficients(&self, values: &[f64]) -> Vec<f64> {
        (0..self.mode_count())
            .map(|k| self.dof.iter().zip(self.mode(k)).map(|(&v, &p)| self.mass[v] * values[v] * p).sum())
            .collect()
    }

    /// `f` restated on the assembly mesh.
    pub fn restate(&self, f: &PlFunction) -> Result<PlFunction> {
        f.resample(&self.space)
    }

    /// `P_t f` as a piecewise-linear function on the assembly mesh.
    pub fn semigroup(&self, t: f64, f: &PlFunction) -> Result<PlFunction> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::input(format!("time t = {t} must be nonnegative")));
        }
        let f = self.restate(f)?;
        let c = self.coefficients(f.values());
        let damped: Vec<f64> = c.iter().zip(&self.spectrum.values).map(|(c, l)| c * (-l * t).exp()).collect();
        PlFunction::new(self.space.clone(), self.extend(&self.combine(&damped)))
    }

    /// `L P_t f` on the degrees of freedom.
    pub fn generator_semigroup(&self, t: f64, f: &PlFunction) -> Result<Vec<f64>> {
        let f = self.restate(f)?;
        let c = self.coefficients(f.values());
        let damped: Vec<f64> = c
            .iter()
            .zip(&self.spectrum.values)
            .map(|(c, l)| -l * c * (-l * t).exp())
            .collect();
        Ok(self.combine(&damped))
    }

    /// `ℰ₂(P_t f)` from the spectral coefficients.
    pub fn spectral_energy(&self, t: f64, f: &PlFunction) -> Result<f64> {
        let f = self.restate(f)?;
        let c = self.coefficients(f.values());
        Ok(c.iter().zip(&self.spectrum.values).map(|(c, l)| l * c * c * (-2.0 * l * t).exp()).sum())
    }

    /// `Σ_y p_t(x, y) m_y`.
    pub fn row_mass(&self, t: f64, x: VertexId) -> Result<f64> {
        Self::check_time(t)?;
        let row = self.kernel_row_dof(t, x);
        Ok(self.dof.iter().zip(&row).map(|(&v, p)| self.mass[v] * p).sum())
    }
}

#[cfg(test)]
mod tests;
