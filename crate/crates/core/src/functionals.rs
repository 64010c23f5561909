//! Korevaar–Schoen and Besov–Lipschitz energies, the K-functional of the
//! pair `(L^p, W^{1,p})`, Nash ratios and the critical-exponent probe.

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{linear_power_integral, PlFunction};
use crate::error::{Error, Result};
use crate::heat::HeatOperator;
use crate::measure::{MeasureWeights, VolumeProfile};
use crate::partition::{discrete_convolution, partition_of_unity};
use crate::stats;
use crate::tree::TreePoint;

/// Subdivisions per smallest radius used for the outer integral when the
/// measure has edge densities.
pub const QUADRATURE_DIVISIONS: f64 = 16.0;

/// A function together with the reference measure restated on its
/// subdivision. Inner integrals over balls are exact; the outer integral
/// sums over vertices with lumped weights (exact for atomic measures).
#[derive(Clone, Debug)]
pub struct AtomicMeasure {
    f: PlFunction,
    m: MeasureWeights,
    weights: Vec<f64>,
}

impl AtomicMeasure {
    /// Refines to mesh `h` first when `m` has edge densities.
    pub fn new(f: &PlFunction, m: &MeasureWeights, h: f64) -> Result<Self> {
        let mut f = f.clone();
        if !m.is_atomic() && h.is_finite() && h < f.space().max_edge_length() {
            f = f.refine(h)?;
        }
        let m = m.pull_to(f.space())?;
        let weights = m.lumped();
        Ok(AtomicMeasure { f, m, weights })
    }

    pub fn function(&self) -> &PlFunction {
        &self.f
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_X (1/m(B(x,r))) ∫_{B(x,r)} |f(y) - f(x)|^p dm(y) dm(x)` for each
    /// radius.
    pub fn oscillations(&self, radii: &[f64], p: f64) -> Result<Vec<f64>> {
        check_p(p)?;
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::input("radii must be positive"));
        }
        let rmax = stats::max(radii);
        let space = self.f.space();
        let atomic = self.m.is_atomic();
        let (atoms, dens) = (self.m.vertex_masses(), self.m.edge_densities());
        let centers: Vec<usize> = (0..space.vertex_count()).filter(|&v| self.weights[v] > 0.0).collect();
        let rows: Vec<Vec<f64>> = centers
            .par_iter()
            .map(|&x| {
                let map = space.distances_from(&[TreePoint::Vertex(x)], rmax);
                let fx = self.f.value(x);
                let mut mass = vec![0.0; radii.len()];
                let mut integral = vec![0.0; radii.len()];
                let mut edges = Vec::new();
                for (y, &d) in map.dist.iter().enumerate() {
                    if !d.is_finite() {
                        continue;
                    }
                    let a = atoms[y];
                    if a > 0.0 {
                        let g = (self.f.value(y) - fx).abs().powf(p);
                        for (k, &r) in radii.iter().enumerate() {
                            if d <= r {
                                mass[k] += a;
                                integral[k] += a * g;
                            }
                        }
                    }
                    if !atomic {
                        edges.extend(space.neighbors(y).iter().map(|&(_, e)| e));
                    }
                }
                edges.sort_unstable();
                edges.dedup();
                for e in edges {
                    let rho = dens[e];
                    if rho == 0.0 {
                        continue;
                    }
                    let edge = space.edge(e);
                    let (fa, fb) = (self.f.value(edge.a) - fx, self.f.value(edge.b) - fx);
                    let at = |s: f64| fa + (fb - fa) * (s / edge.len);
                    let profile = map.edge_profile(space, e);
                    for (k, &r) in radii.iter().enumerate() {
                        for (lo, hi) in profile.sublevel(r) {
                            mass[k] += rho * (hi - lo);
                            integral[k] += rho * linear_power_integral(at(lo), at(hi), hi - lo, p);
                        }
                    }
                }
                let w = self.weights[x];
                mass.iter().zip(&integral).map(|(&m, &i)| if m > 0.0 { w * i / m } else { f64::NAN }).collect()
            })
            .collect();
        let mut out = Vec::with_capacity(radii.len());
        for k in 0..radii.len() {
            let column: Vec<f64> = rows.iter().map(|row| row[k]).collect();
            if column.iter().any(|v| v.is_nan()) {
                return Err(Error::MeasureSupport(format!("a ball of radius {} carries no mass", radii[k])));
            }
            out.push(stats::pairwise_sum(&column));
        }
        Ok(out)
    }
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("exponent p = {p} must be finite and at least 1")))
    }
}

/// Quadrature mesh for a set of radii.
fn mesh_for(radii: &[f64]) -> f64 {
    stats::min(radii) / QUADRATURE_DIVISIONS
}

/// `α_p = 1 + (d_h - 1) / p`.
pub fn alpha_p(p: f64, d_h: f64) -> f64 {
    1.0 + (d_h - 1.0) / p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Variant {
    Ks,
    Besov { alpha: f64 },
    HeatBesov,
    Kfunctional,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Ks => "ks",
            Variant::Besov { .. } => "besov",
            Variant::HeatBesov => "heat_besov",
            Variant::Kfunctional => "kfunctional",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            Variant::Besov { alpha } => Some(*alpha),
            _ => None,
        }
    }
}

/// A functional sampled on a parameter grid decreasing towards 0.
#[derive(Clone, Debug, Serialize)]
pub struct FunctionalCurve {
    pub params: Vec<f64>,
    pub values: Vec<f64>,
    pub p: f64,
    pub variant: Variant,
}

impl FunctionalCurve {
    fn new(params: &[f64], values: Vec<f64>, p: f64, variant: Variant) -> Result<Self> {
        let mut rows: Vec<(f64, f64)> = params.iter().copied().zip(values).collect();
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::input("parameter grid has repeated values"));
        }
        if rows.iter().any(|r| !(r.1.is_finite() && r.1 >= 0.0)) {
            return Err(Error::numerical(format!("{} curve has a non-finite value", variant.name())));
        }
        let (params, values) = rows.into_iter().unzip();
        Ok(FunctionalCurve { params, values, p, variant })
    }

    pub fn sup(&self) -> f64 {
        stats::max(&self.values)
    }

    /// Minimum over the three smallest parameters: the resolvable liminf.
    pub fn liminf(&self) -> f64 {
        let n = self.values.len();
        stats::min(&self.values[n.saturating_sub(3)..])
    }
}

/// `E_{p,Ψ_p}(f, r)` for each radius.
pub fn ks_curve(
    f: &PlFunction,
    m: &MeasureWeights,
    profile: &VolumeProfile,
    radii: &[f64],
    p: f64,
) -> Result<FunctionalCurve> {
    let osc = AtomicMeasure::new(f, m, mesh_for(radii))?.oscillations(radii, p)?;
    let values = osc.iter().zip(radii).map(|(o, &r)| o / profile.psi(p, r)).collect();
    FunctionalCurve::new(radii, values, p, Variant::Ks)
}

pub fn ks_energy(f: &PlFunction, m: &MeasureWeights, profile: &VolumeProfile, r: f64, p: f64) -> Result<f64> {
    Ok(ks_curve(f, m, profile, &[r], p)?.values[0])
}

/// `E_{p,α}(f, r)` for each radius.
pub fn besov_curve(f: &PlFunction, m: &MeasureWeights, radii: &[f64], p: f64, alpha: f64) -> Result<FunctionalCurve> {
    let osc = AtomicMeasure::new(f, m, mesh_for(radii))?.oscillations(radii, p)?;
    let values = osc.iter().zip(radii).map(|(o, &r)| o / r.powf(p * alpha)).collect();
    FunctionalCurve::new(radii, values, p, Variant::Besov { alpha })
}

pub fn besov_energy(f: &PlFunction, m: &MeasureWeights, r: f64, p: f64, alpha: f64) -> Result<f64> {
    Ok(besov_curve(f, m, &[r], p, alpha)?.values[0])
}

/// `N_p(f, t) = Ψ_p(Ψ₂^{-1}(t))^{-1} ∫∫ |f(x) - f(y)|^p p_t(x, y) dm dm`
/// with the kernel and lumped masses of `heat`.
pub fn heat_besov(heat: &HeatOperator, profile: &VolumeProfile, f: &PlFunction, t: f64, p: f64) -> Result<f64> {
    Ok(heat_besov_curve(heat, profile, f, &[t], p)?.values[0])
}

pub fn heat_besov_curve(
    heat: &HeatOperator,
    profile: &VolumeProfile,
    f: &PlFunction,
    times: &[f64],
    p: f64,
) -> Result<FunctionalCurve> {
    check_p(p)?;
    if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::input("heat-kernel Besov times must be positive"));
    }
    let f = heat.restate(f)?;
    let dof = heat.dof_vertices();
    let fv: Vec<f64> = dof.iter().map(|&v| f.value(v)).collect();
    let mass: Vec<f64> = dof.iter().map(|&v| heat.masses()[v]).collect();
    let n = dof.len();
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        let kernel = heat.kernel_matrix(t)?;
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let row = &kernel[i * n..(i + 1) * n];
                let inner: Vec<f64> =
                    (0..n).map(|j| mass[j] * row[j].max(0.0) * (fv[i] - fv[j]).abs().powf(p)).collect();
                mass[i] * stats::pairwise_sum(&inner)
            })
            .collect();
        values.push(stats::pairwise_sum(&rows) / profile.psi(p, profile.psi_inv(2.0, t)));
    }
    FunctionalCurve::new(times, values, p, Variant::HeatBesov)
}

/// Upper estimate and lower bracket of `K(f, t)` for `(L^p(m), W^{1,p})`.
#[derive(Clone, Debug, Serialize)]
pub struct KReport {
    pub t: f64,
    pub p: f64,
    /// Smallest `‖f - g‖_p + t ‖∂g‖_p` over the splittings tried.
    pub upper: f64,
    /// `E_{p,0}(f, t^{1/α_p})^{1/p}`.
    pub lower: f64,
    /// Scale of the best splitting; `None` when the constant split wins.
    pub best_epsilon: Option<f64>,
    /// `(ε, ‖f - f_ε‖_p + t ‖∂f_ε‖_p)` per discrete-convolution splitting.
    pub per_epsilon: Vec<(f64, f64)>,
}

impl KReport {
    pub fn ratio(&self) -> f64 {
        self.upper / self.lower
    }
}

/// Splits `f = (f - f_ε) + f_ε` with the discrete convolution at every
/// scale of `eps_grid`, plus the split into the mean and its deviation.
pub fn k_functional(
    f: &PlFunction,
    m: &MeasureWeights,
    profile: &VolumeProfile,
    t: f64,
    p: f64,
    eps_grid: &[f64],
) -> Result<KReport> {
    check_p(p)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::input(format!("K-functional parameter t = {t} must be nonnegative")));
    }
    // lumped weights integrate edgewise-linear functions exactly
    let mean = {
        let q = AtomicMeasure::new(f, m, f64::INFINITY)?;
        let total: f64 = q.weights().iter().zip(q.function().values()).map(|(w, v)| w * v).sum();
        total / m.total_mass()
    };
    let mut upper = f.add_constant(-mean).lp_norm(m, p)?;
    let mut best_epsilon = None;
    let mut per_epsilon = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let pou = partition_of_unity(f.space().base(), eps)?;
        let fe = discrete_convolution(f, m, &pou)?;
        let value = f.sub(&fe)?.lp_norm(m, p)? + t * fe.gradient_norm(p)?;
        per_epsilon.push((eps, value));
        if value < upper {
            upper = value;
            best_epsilon = Some(eps);
        }
    }
    let lower = if t > 0.0 {
        let r = t.powf(1.0 / alpha_p(p, profile.d_h()));
        let osc = AtomicMeasure::new(f, m, r / QUADRATURE_DIVISIONS)?.oscillations(&[r], p)?[0];
        osc.powf(1.0 / p)
    } else {
        0.0
    };
    Ok(KReport { t, p, upper, lower, best_epsilon, per_epsilon })
}

/// `θ = (p - 1) d_h / (p - 1 + p d_h)`.
pub fn nash_theta(p: f64, d_h: f64) -> f64 {
    (p - 1.0) * d_h / (p - 1.0 + p * d_h)
}

/// `‖f‖_p / ((‖f‖_p + ‖∂f‖_{L^p(ν)})^θ ‖f‖_1^{1-θ})`.
pub fn nash_ratio(f: &PlFunction, m: &MeasureWeights, p: f64, d_h: f64) -> Result<f64> {
    check_p(p)?;
    let np = f.lp_norm(m, p)?;
    let n1 = f.lp_norm(m, 1.0)?;
    if np == 0.0 || n1 == 0.0 {
        return Err(Error::input("the Nash ratio needs a function that is nonzero on the support of m"));
    }
    let theta = nash_theta(p, d_h);
    let grad = f.gradient_norm(p)?;
    Ok(np / ((np + grad).powf(theta) * n1.powf(1.0 - theta)))
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalReport {
    pub p: f64,
    /// Largest `α` of the grid for which `E_{p,α}` stays bounded; `None`
    /// when no grid value passes.
    pub alpha: Option<f64>,
    /// Log-log slope of `E_{p,0}` over the last decade of the radius grid.
    pub slope: f64,
    pub slope_tol: f64,
    /// Set for functions with zero oscillation, for which every `α` passes.
    pub degenerate: bool,
    pub passed: Vec<(f64, bool)>,
}

/// Largest `α` for which `r ↦ E_{p,α}(f, r)` shows no blow-up over the last
/// decade of `r_grid`, i.e. `slope(E_{p,0}) - p α >= -slope_tol` with
/// `slope_tol` half an `α` grid step times `p`.
pub fn critical_exponent_probe(
    f: &PlFunction,
    m: &MeasureWeights,
    p: f64,
    alpha_grid: &[f64],
    r_grid: &[f64],
) -> Result<CriticalReport> {
    check_p(p)?;
    if alpha_grid.is_empty() || r_grid.len() < 2 {
        return Err(Error::input("the probe needs an α grid and at least two radii"));
    }
    let mut radii = r_grid.to_vec();
    radii.sort_by(f64::total_cmp);
    let osc = AtomicMeasure::new(f, m, mesh_for(&radii))?.oscillations(&radii, p)?;
    let mut alphas = alpha_grid.to_vec();
    alphas.sort_by(f64::total_cmp);
    let step = if alphas.len() > 1 {
        stats::min(&alphas.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
    } else {
        0.1
    };
    let slope_tol = 0.5 * step * p;
    let scale = stats::max(&osc);
    if scale == 0.0 {
        return Ok(CriticalReport {
            p,
            alpha: alphas.last().copied(),
            slope: f64::INFINITY,
            slope_tol,
            degenerate: true,
            passed: alphas.iter().map(|&a| (a, true)).collect(),
        });
    }
    let top = radii[0] * 10.0;
    let last: Vec<usize> = (0..radii.len()).filter(|&k| radii[k] <= top * (1.0 + 1e-12)).collect();
    if last.len() < 2 || osc.iter().any(|&o| o <= 0.0) {
        return Err(Error::numerical("the radius grid does not resolve the oscillation of f"));
    }
    let xs: Vec<f64> = last.iter().map(|&k| radii[k]).collect();
    let ys: Vec<f64> = last.iter().map(|&k| osc[k]).collect();
    let slope = stats::log_log_fit(&xs, &ys).slope;
    let passed: Vec<(f64, bool)> = alphas.iter().map(|&a| (a, slope - p * a >= -slope_tol)).collect();
    let alpha = passed.iter().filter(|x| x.1).map(|x| x.0).last();
    Ok(CriticalReport { p, alpha, slope, slope_tol, degenerate: false, passed })
}
