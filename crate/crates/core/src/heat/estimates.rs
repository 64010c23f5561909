use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::sparse::{factor, SymSparse};
use super::HeatOperator;
use crate::calculus::PlFunction;
use crate::error::{Error, Result};
use crate::measure::VolumeProfile;
use crate::stats::{self, LineFit};
use crate::tree::{TreePoint, VertexId};

/// Kernel values below this fraction of the on-diagonal value are treated
/// as unresolved.
pub const RESOLUTION: f64 = 1e-9;

/// Radii below this many mesh cells are not resolved.
pub const MESH_CELLS: f64 = 4.0;

/// `(Ψ₂(4·mesh), Ψ₂(r₀))`: the times at which the mesh resolves the
/// geometry and the volume profile applies.
pub fn time_range(op: &HeatOperator, profile: &VolumeProfile) -> (f64, f64) {
    (profile.psi(2.0, MESH_CELLS * op.mesh_size()), profile.psi(2.0, profile.r0))
}

fn check_times(op: &HeatOperator, profile: &VolumeProfile, ts: &[f64]) -> Result<()> {
    let (lo, hi) = time_range(op, profile);
    match ts.iter().find(|&&t| !(t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12))) {
        Some(t) => Err(Error::domain(format!("time {t} outside the valid range [{lo:e}, {hi:e}]"))),
        None => Ok(()),
    }
}

fn check_vertex(op: &HeatOperator, x: VertexId) -> Result<()> {
    if x < op.space().vertex_count() {
        Ok(())
    } else {
        Err(Error::input(format!("vertex {x} is not a vertex of the assembly mesh")))
    }
}

/// `d / Φ^{-1}(t / d)`, the exponent scale of the off-diagonal bounds.
pub fn abscissa(profile: &VolumeProfile, d: f64, t: f64) -> f64 {
    if d <= 0.0 {
        0.0
    } else {
        d / profile.phi_inv(t / d)
    }
}

fn distances(op: &HeatOperator, x: VertexId) -> Vec<f64> {
    op.space().distances_from(&[TreePoint::Vertex(x)], f64::INFINITY).dist
}

#[derive(Clone, Debug, Serialize)]
pub struct OnDiagonalFit {
    pub x: VertexId,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    /// Log-log slope of `t ↦ p_t(x, x)`.
    pub slope: f64,
    pub r2: f64,
}

/// Least-squares exponent of `p_t(x, x)` over `t_grid`.
pub fn on_diagonal_profile(
    op: &HeatOperator,
    profile: &VolumeProfile,
    x: VertexId,
    t_grid: &[f64],
) -> Result<OnDiagonalFit> {
    check_vertex(op, x)?;
    if t_grid.len() < 2 {
        return Err(Error::input("the on-diagonal fit needs at least two times"));
    }
    check_times(op, profile, t_grid)?;
    let values = t_grid.iter().map(|&t| op.kernel(t, x, x)).collect::<Result<Vec<_>>>()?;
    let fit = stats::log_log_fit(t_grid, &values);
    Ok(OnDiagonalFit { x, t: t_grid.to_vec(), values, slope: fit.slope, r2: fit.r2 })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExponentialFit {
    /// Fitted `ln(value) = intercept + slope · abscissa`.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Smallest `C₁` with `value <= C₁ e^{-C₂ a}` for `C₂ = -slope`.
    pub upper_c1: f64,
    /// Largest `c₁` with `value >= c₁ e^{-C₂ a}`.
    pub lower_c1: f64,
    pub points: usize,
}

impl ExponentialFit {
    pub fn c2(&self) -> f64 {
        -self.slope
    }

    fn from_data(a: &[f64], y: &[f64]) -> Result<Self> {
        if a.len() < 3 || stats::spread(a) <= 0.0 {
            return Err(Error::domain("too few resolved points for an exponential fit"));
        }
        let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let LineFit { slope, intercept, r2, .. } = stats::linear_fit(a, &logs);
        let shifted: Vec<f64> = a.iter().zip(&logs).map(|(a, l)| l - slope * a).collect();
        Ok(ExponentialFit {
            slope,
            intercept,
            r2,
            upper_c1: stats::max(&shifted).exp(),
            lower_c1: stats::min(&shifted).exp(),
            points: a.len(),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelEstimateReport {
    /// Mean log-log slope of `p_t(x, x)` over the pair origins.
    pub on_diagonal_exponent: f64,
    /// Fit of `ln(p_t(x, y) Φ(Ψ₂^{-1}(t)))` against `d / Φ^{-1}(t/d)`.
    pub fit: ExponentialFit,
    /// `min p_t Φ(Ψ₂^{-1}(t))` over points with `Ψ₂(d) <= t`.
    pub near_diagonal_c1: f64,
    pub t_range: (f64, f64),
    pub distance_range: (f64, f64),
}

/// Regression of the normalized kernel against the sub-Gaussian abscissa.
pub fn off_diagonal_check(
    op: &HeatOperator,
    profile: &VolumeProfile,
    pairs: &[(VertexId, VertexId)],
    t_grid: &[f64],
) -> Result<KernelEstimateReport> {
    check_times(op, profile, t_grid)?;
    if pairs.is_empty() || t_grid.len() < 2 {
        return Err(Error::domain("the off-diagonal fit needs pairs and at least two times"));
    }
    let rows: Vec<Vec<(f64, f64, f64, f64)>> = pairs
        .par_iter()
        .map(|&(x, y)| -> Result<Vec<(f64, f64, f64, f64)>> {
            check_vertex(op, x)?;
            check_vertex(op, y)?;
            let d = op.space().distance(&TreePoint::Vertex(x), &TreePoint::Vertex(y))?;
            if d > 0.5 * profile.r0 * (1.0 + 1e-12) {
                return Err(Error::domain(format!("pair at distance {d} exceeds r0/2")));
            }
            t_grid
                .iter()
                .map(|&t| Ok((t, d, op.kernel(t, x, y)?, op.kernel(t, x, x)?)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut slopes = Vec::new();
    let (mut a, mut v, mut near) = (Vec::new(), Vec::new(), f64::INFINITY);
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    for row in &rows {
        let diag: Vec<f64> = row.iter().map(|r| r.3).collect();
        slopes.push(stats::log_log_fit(t_grid, &diag).slope);
        for &(t, d, p, pxx) in row {
            if p <= RESOLUTION * pxx {
                continue;
            }
            let normalized = p * profile.phi(profile.psi_inv(2.0, t));
            a.push(abscissa(profile, d, t));
            v.push(normalized);
            dmin = dmin.min(d);
            dmax = dmax.max(d);
            if profile.psi(2.0, d) <= t {
                near = near.min(normalized);
            }
        }
    }
    let fit = ExponentialFit::from_data(&a, &v)?;
    Ok(KernelEstimateReport {
        on_diagonal_exponent: slopes.iter().sum::<f64>() / slopes.len() as f64,
        fit,
        near_diagonal_c1: near,
        t_range: (stats::min(t_grid), stats::max(t_grid)),
        distance_range: (dmin, dmax),
    })
}

/// `∫_{X∖B(x,r)} p_t(x, y) dm(y)`.
pub fn escape_rate(op: &HeatOperator, x: VertexId, r: f64, t: f64) -> Result<f64> {
    check_vertex(op, x)?;
    if !(r > 0.0) {
        return Err(Error::input("escape radius must be positive"));
    }
    HeatOperator::check_time(t)?;
    let dist = distances(op, x);
    let row = op.kernel_row_dof(t, x);
    let out: f64 = op
        .dof_vertices()
        .iter()
        .zip(&row)
        .filter(|(&v, _)| dist[v] >= r)
        .map(|(&v, p)| op.masses()[v] * p)
        .sum();
    Ok(out.clamp(0.0, 1.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct EscapeRow {
    pub r: f64,
    pub t: f64,
    pub value: f64,
    pub abscissa: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EscapeReport {
    pub rows: Vec<EscapeRow>,
    pub fit: ExponentialFit,
    /// Whether the escaped mass is nondecreasing in `t` for every radius.
    pub monotone: bool,
}

/// Escape masses over a grid and their fit against `r / Φ^{-1}(t / r)`.
pub fn escape_fit(
    op: &HeatOperator,
    profile: &VolumeProfile,
    x: VertexId,
    radii: &[f64],
    t_grid: &[f64],
) -> Result<EscapeReport> {
    check_times(op, profile, t_grid)?;
    let mut ts = t_grid.to_vec();
    ts.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    let mut monotone = true;
    for &r in radii {
        if r >= profile.r0 * (1.0 + 1e-12) {
            return Err(Error::domain(format!("escape radius {r} is not below r0 = {}", profile.r0)));
        }
        let mut last = 0.0;
        for &t in &ts {
            let value = escape_rate(op, x, r, t)?;
            monotone &= value >= last - 1e-10;
            last = value;
            rows.push(EscapeRow { r, t, value, abscissa: abscissa(profile, r, t) });
        }
    }
    let kept: Vec<&EscapeRow> = rows.iter().filter(|row| row.value > RESOLUTION).collect();
    let a: Vec<f64> = kept.iter().map(|row| row.abscissa).collect();
    let v: Vec<f64> = kept.iter().map(|row| row.value).collect();
    let fit = ExponentialFit::from_data(&a, &v)?;
    Ok(EscapeReport { rows, fit, monotone })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GradientBound {
    pub t: f64,
    /// `max_e |∂_y p_t(x, ·)| t e^{C₂ a(d(x, e), t)}` over resolved edges.
    pub max_ratio: f64,
    pub max_slope: f64,
}

/// Pointwise kernel-gradient bound at one time with decay rate `c2`.
pub fn kernel_gradient_bound(
    op: &HeatOperator,
    profile: &VolumeProfile,
    x: VertexId,
    t: f64,
    c2: f64,
) -> Result<GradientBound> {
    check_vertex(op, x)?;
    check_times(op, profile, &[t])?;
    let row = op.kernel_row(t, x)?;
    let dist = distances(op, x);
    let floor = RESOLUTION * row[x].abs();
    let (mut max_ratio, mut max_slope) = (0.0f64, 0.0f64);
    for e in op.space().edges() {
        let jump = (row[e.a] - row[e.b]).abs();
        if jump <= floor {
            continue;
        }
        let slope = jump / e.len;
        let d = dist[e.a].min(dist[e.b]);
        max_slope = max_slope.max(slope);
        max_ratio = max_ratio.max(slope * t * (c2 * abscissa(profile, d, t)).exp());
    }
    Ok(GradientBound { t, max_ratio, max_slope })
}

/// Stiffness of a space with unit-free conductances `1 / length`.
fn stiffness(space: &crate::tree::CableSystem) -> SymSparse {
    let mut k = SymSparse::new(space.vertex_count());
    for e in space.edges() {
        k.add_edge(e.a, e.b, 1.0 / e.len);
    }
    k
}

/// The mesh with the sphere(s) around `x` inserted, distances from `x` and
/// lumped masses on it.
struct BallMesh {
    space: crate::tree::CableSystem,
    dist: Vec<f64>,
    mass: Vec<f64>,
}

fn ball_mesh(op: &HeatOperator, x: VertexId, levels: &[f64]) -> Result<BallMesh> {
    let field = op.space().distance_field(&[TreePoint::Vertex(x)], |_, _| Ok(Vec::new()), levels)?;
    let mass = op.measure().pull_to(&field.space)?.lumped();
    Ok(BallMesh { space: field.space, dist: field.dist, mass })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExitTime {
    pub x: VertexId,
    pub r: f64,
    /// `E^x[τ_{B(x,r)}]`.
    pub value: f64,
    pub psi2: f64,
    pub ratio: f64,
    /// Set when the ball reaches a leaf of the space.
    pub touches_leaf: bool,
}

/// Solves `-L u = 1` in `B(x, r)` with `u = 0` on the sphere and returns
/// `u(x)`.
pub fn expected_exit_time(op: &HeatOperator, x: VertexId, r: f64) -> Result<f64> {
    Ok(exit_time_solve(op, x, r)?.0)
}

fn exit_time_solve(op: &HeatOperator, x: VertexId, r: f64) -> Result<(f64, bool)> {
    check_vertex(op, x)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::input("exit radius must be positive"));
    }
    if op.space().is_local_tree() && r >= op.space().uniformity_radius() {
        return Err(Error::domain(format!("B(x, {r}) is not a tree ball")));
    }
    let mesh = ball_mesh(op, x, &[r])?;
    let inside: Vec<VertexId> = (0..mesh.space.vertex_count()).filter(|&v| mesh.dist[v] < r * (1.0 - 1e-12)).collect();
    if inside.len() == mesh.space.vertex_count() {
        return Err(Error::domain(format!("B(x, {r}) covers the whole space")));
    }
    let touches_leaf = inside.iter().any(|&v| mesh.space.degree(v) == 1);
    let k = stiffness(&mesh.space).restrict(&inside);
    let rhs: Vec<f64> = inside.iter().map(|&v| mesh.mass[v]).collect();
    let u = factor(&k)?.solve(&rhs);
    let at = inside.iter().position(|&v| v == x).expect("centre lies inside its ball");
    Ok((u[at], touches_leaf))
}

pub fn exit_time_report(op: &HeatOperator, profile: &VolumeProfile, x: VertexId, r: f64) -> Result<ExitTime> {
    let (value, touches_leaf) = exit_time_solve(op, x, r)?;
    let psi2 = profile.psi(2.0, r);
    Ok(ExitTime { x, r, value, psi2, ratio: value / psi2, touches_leaf })
}

#[derive(Clone, Debug, Serialize)]
pub struct HarmonicReport {
    pub x0: VertexId,
    pub r: f64,
    pub dilation: f64,
    /// `sup |u(x) - u(y)| / d(x, y)` over `B(x₀, r)` per boundary draw.
    pub lipschitz: Vec<f64>,
    /// Mean of `|u|` over `B(x₀, A r)` per draw.
    pub average: Vec<f64>,
    /// `max lipschitz · r / average` over the draws.
    pub constant: f64,
}

/// Harmonic functions on `B(x₀, A r)` with boundary values uniform in
/// `[0, 1]` and their Lipschitz constants on `B(x₀, r)`.
pub fn harmonic_lipschitz_check(
    op: &HeatOperator,
    x0: VertexId,
    r: f64,
    dilation: f64,
    draws: usize,
    seed: u64,
) -> Result<HarmonicReport> {
    check_vertex(op, x0)?;
    if !(r > 0.0 && dilation >= 1.0) || draws == 0 {
        return Err(Error::input("harmonic check needs r > 0, A >= 1 and at least one draw"));
    }
    let outer = dilation * r;
    if op.space().is_local_tree() && outer >= op.space().uniformity_radius() / 6.0 {
        return Err(Error::domain(format!("A r = {outer} is not below a sixth of the uniformity radius")));
    }
    let mesh = ball_mesh(op, x0, &[r, outer])?;
    let n = mesh.space.vertex_count();
    let tol = 1e-9 * outer;
    let inside: Vec<VertexId> = (0..n).filter(|&v| mesh.dist[v] < outer - tol).collect();
    let sphere: Vec<VertexId> = (0..n).filter(|&v| (mesh.dist[v] - outer).abs() <= tol).collect();
    if sphere.is_empty() {
        return Err(Error::domain(format!("B(x0, {outer}) covers the whole space")));
    }
    let k = stiffness(&mesh.space);
    let fac = factor(&k.restrict(&inside))?;
    let closed: Vec<VertexId> = inside.iter().chain(&sphere).copied().collect();
    let ball_mass: f64 = closed.iter().map(|&v| mesh.mass[v]).sum();
    if !(ball_mass > 0.0) {
        return Err(Error::MeasureSupport(format!("B(x0, {outer}) carries no mass")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lipschitz, mut average) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    let mut constant = 0.0f64;
    for _ in 0..draws {
        let mut u = vec![0.0; n];
        for &v in &sphere {
            u[v] = rng.gen::<f64>();
        }
        let rhs: Vec<f64> =
            inside.iter().map(|&i| -k.row(i).map(|(j, a)| if inside.binary_search(&j).is_ok() { 0.0 } else { a * u[j] }).sum::<f64>()).collect();
        for (&v, x) in inside.iter().zip(fac.solve(&rhs)) {
            u[v] = x;
        }
        let lip = mesh
            .space
            .edges()
            .iter()
            .filter(|e| mesh.dist[e.a].max(mesh.dist[e.b]) <= r + tol)
            .map(|e| (u[e.a] - u[e.b]).abs() / e.len)
            .fold(0.0, f64::max);
        let avg = closed.iter().map(|&v| mesh.mass[v] * u[v].abs()).sum::<f64>() / ball_mass;
        constant = constant.max(lip * r / avg);
        lipschitz.push(lip);
        average.push(avg);
    }
    Ok(HarmonicReport { x0, r, dilation, lipschitz, average, constant })
}

/// `max |p_t(x,y) - p_t(x,z)|² / ((d(y,z)/t) p_t(x,x))` over the triples.
pub fn holder_check(op: &HeatOperator, t: f64, triples: &[(VertexId, VertexId, VertexId)]) -> Result<f64> {
    let ratios = triples
        .par_iter()
        .map(|&(x, y, z)| -> Result<f64> {
            check_vertex(op, x)?;
            let row = op.kernel_row(t, x)?;
            let d = op.space().distance(&TreePoint::Vertex(y), &TreePoint::Vertex(z))?;
            let lhs = (row[y] - row[z]).powi(2);
            Ok(if lhs == 0.0 { 0.0 } else { lhs / (d / t * row[x]) })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KernelChecks {
    /// `max |p_t(x, y) - p_t(y, x)| / √(p_t(x, x) p_t(y, y))`.
    pub symmetry: f64,
    /// Smallest kernel value relative to the largest on the sampled rows.
    pub min_value: f64,
    /// `max |Σ_y p_t(x, y) m_y - 1|`.
    pub conservation: f64,
    /// `max |p_{t+s}(x, y) - Σ_z p_t(x, z) p_s(z, y) m_z|`, relative as for
    /// the symmetry.
    pub semigroup: f64,
}

/// Symmetry, positivity, conservativeness and the semigroup law on the
/// given pairs.
pub fn kernel_checks(op: &HeatOperator, t: f64, s: f64, pairs: &[(VertexId, VertexId)]) -> Result<KernelChecks> {
    let mut out = KernelChecks { symmetry: 0.0, min_value: f64::INFINITY, conservation: 0.0, semigroup: 0.0 };
    let mass: Vec<f64> = op.dof_vertices().iter().map(|&v| op.masses()[v]).collect();
    for &(x, y) in pairs {
        check_vertex(op, x)?;
        check_vertex(op, y)?;
        let (pxy, pyx) = (op.kernel(t, x, y)?, op.kernel(t, y, x)?);
        let scale = (op.kernel(t, x, x)? * op.kernel(t, y, y)?).sqrt();
        out.symmetry = out.symmetry.max((pxy - pyx).abs() / scale);
        let row = op.kernel_row_dof(t, x);
        out.min_value = out.min_value.min(stats::min(&row) / stats::max(&row));
        out.conservation = out.conservation.max((op.row_mass(t, x)? - 1.0).abs());
        let col = op.kernel_row_dof(s, y);
        let composed: f64 = (0..mass.len()).map(|i| row[i] * col[i] * mass[i]).sum();
        let direct = op.kernel(t + s, x, y)?;
        let scale = (op.kernel(t + s, x, x)? * op.kernel(t + s, y, y)?).sqrt();
        out.semigroup = out.semigroup.max((composed - direct).abs() / scale);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SemigroupGradientRow {
    pub t: f64,
    /// `‖∂P_t f‖_{L^p(ν)}`.
    pub grad_norm: f64,
    /// `Ψ₂^{-1}(t)^{-1+2/p} t^{-1/p} ‖f‖_{L^p(m)}`.
    pub envelope: f64,
    pub ratio: f64,
    /// `‖L P_t f‖_{L^p(m)}`.
    pub generator_norm: f64,
    /// `Ψ₂^{-1}(t)^{1-2/p} t^{-1+1/p} ‖∂f‖_{L^p(ν)}`.
    pub generator_envelope: f64,
    pub generator_ratio: f64,
    /// `ℰ₂(P_t f)` and `‖f‖₂² / (2et)`, for `p = 2` only.
    pub spectral_energy: Option<f64>,
    pub spectral_bound: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SemigroupGradientTable {
    pub p: f64,
    pub rows: Vec<SemigroupGradientRow>,
    /// Largest over smallest ratio across the grid.
    pub stability: f64,
}

fn discrete_norm(op: &HeatOperator, values: &[f64], p: f64) -> f64 {
    let mass = op.masses();
    let dof = op.dof_vertices();
    if p.is_infinite() {
        values.iter().fold(0.0, |a, v| a.max(v.abs()))
    } else {
        dof.iter().zip(values).map(|(&v, x)| mass[v] * x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `L^p` gradient bounds of the heat semigroup against their envelopes.
pub fn semigroup_gradient_bound(
    op: &HeatOperator,
    profile: &VolumeProfile,
    f: &PlFunction,
    p: f64,
    t_grid: &[f64],
) -> Result<SemigroupGradientTable> {
    if !(p >= 1.0) {
        return Err(Error::input(format!("exponent p = {p} must be at least 1")));
    }
    check_times(op, profile, t_grid)?;
    let f = op.restate(f)?;
    let dof_values: Vec<f64> = op.dof_vertices().iter().map(|&v| f.value(v)).collect();
    let f_norm = discrete_norm(op, &dof_values, p);
    let f_l2 = discrete_norm(op, &dof_values, 2.0);
    let df = f.gradient_norm(p)?;
    let inv = |q: f64| if q.is_infinite() { 0.0 } else { 1.0 / q };
    let rows = t_grid
        .iter()
        .map(|&t| -> Result<SemigroupGradientRow> {
            let s = profile.psi_inv(2.0, t);
            let grad_norm = op.semigroup(t, &f)?.gradient_norm(p)?;
            let envelope = s.powf(-1.0 + 2.0 * inv(p)) * t.powf(-inv(p)) * f_norm;
            let generator_norm = discrete_norm(op, &op.generator_semigroup(t, &f)?, p);
            let generator_envelope = s.powf(1.0 - 2.0 * inv(p)) * t.powf(-1.0 + inv(p)) * df;
            let (spectral_energy, spectral_bound) = if p == 2.0 {
                (Some(op.spectral_energy(t, &f)?), Some(f_l2 * f_l2 / (2.0 * std::f64::consts::E * t)))
            } else {
                (None, None)
            };
            Ok(SemigroupGradientRow {
                t,
                grad_norm,
                envelope,
                ratio: grad_norm / envelope,
                generator_norm,
                generator_envelope,
                generator_ratio: generator_norm / generator_envelope,
                spectral_energy,
                spectral_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    Ok(SemigroupGradientTable { p, stability: stats::spread(&ratios), rows })
}
