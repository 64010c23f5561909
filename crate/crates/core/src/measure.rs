//! Reference measures, ball masses and volume profiles.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::tree::{CableSystem, Correspondence, TreePoint, REL_TOL};

/// Vertex atoms plus piecewise-constant edge densities.
#[derive(Clone, Debug)]
pub struct MeasureWeights {
    space: CableSystem,
    vertex_masses: Vec<f64>,
    edge_densities: Vec<f64>,
    total_mass: f64,
}

impl MeasureWeights {
    /// Validated weights; every edge must carry density or touch an atom.
    pub fn new(space: &CableSystem, vertex_masses: Vec<f64>, edge_densities: Vec<f64>) -> Result<Self> {
        Self::build(space, vertex_masses, edge_densities, true)
    }

    /// Restatement on a subdivision, where the support is only resolved at
    /// the resolution of the original space.
    fn restated(space: &CableSystem, vertex_masses: Vec<f64>, edge_densities: Vec<f64>) -> Result<Self> {
        Self::build(space, vertex_masses, edge_densities, false)
    }

    fn build(space: &CableSystem, vertex_masses: Vec<f64>, edge_densities: Vec<f64>, support: bool) -> Result<Self> {
        if vertex_masses.len() != space.vertex_count() || edge_densities.len() != space.edge_count() {
            return Err(Error::input("measure does not match the space dimensions"));
        }
        if vertex_masses.iter().chain(&edge_densities).any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::input("masses and densities must be finite and nonnegative"));
        }
        let total_mass = vertex_masses.iter().sum::<f64>()
            + edge_densities.iter().zip(space.edges()).map(|(d, e)| d * e.len).sum::<f64>();
        if total_mass <= 0.0 {
            return Err(Error::input("measure has zero total mass"));
        }
        if !support {
        } else if space.edge_count() == 0 {
            if vertex_masses[0] <= 0.0 {
                return Err(Error::MeasureSupport("the single vertex carries no mass".into()));
            }
        } else {
            for (id, e) in space.edges().iter().enumerate() {
                if edge_densities[id] <= 0.0 && vertex_masses[e.a] <= 0.0 && vertex_masses[e.b] <= 0.0 {
                    return Err(Error::MeasureSupport(format!(
                        "edge {id} carries no density and touches no atom"
                    )));
                }
            }
        }
        Ok(MeasureWeights { space: space.clone(), vertex_masses, edge_densities, total_mass })
    }

    /// The space the weights are indexed by.
    pub fn space(&self) -> &CableSystem {
        &self.space
    }

    /// Length measure ν (density 1 on every edge).
    pub fn lebesgue(space: &CableSystem) -> Self {
        Self::new(space, vec![0.0; space.vertex_count()], vec![1.0; space.edge_count()])
            .expect("length measure is valid")
    }

    pub fn vertex_masses(&self) -> &[f64] {
        &self.vertex_masses
    }

    pub fn edge_densities(&self) -> &[f64] {
        &self.edge_densities
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn is_atomic(&self) -> bool {
        self.edge_densities.iter().all(|&d| d == 0.0)
    }

    /// The same measure on a subdivision of its space.
    pub fn transfer(&self, refined: &CableSystem, corr: &Correspondence) -> Result<Self> {
        let mut vm = vec![0.0; refined.vertex_count()];
        vm[..self.vertex_masses.len()].copy_from_slice(&self.vertex_masses);
        let mut ed = vec![0.0; refined.edge_count()];
        for (old, &d) in self.edge_densities.iter().enumerate() {
            for new in corr.edges_of(old) {
                ed[new] = d;
            }
        }
        Self::restated(refined, vm, ed)
    }

    /// The same measure on another subdivision of the same root space. Atoms
    /// must sit on vertices of `target`.
    pub fn pull_to(&self, target: &CableSystem) -> Result<MeasureWeights> {
        if target.fingerprint() == self.space.fingerprint() {
            return Ok(self.clone());
        }
        let mut vm = vec![0.0; target.vertex_count()];
        for (v, &w) in self.vertex_masses.iter().enumerate() {
            if w > 0.0 {
                match target.transfer(&self.space, &TreePoint::Vertex(v))? {
                    TreePoint::Vertex(t) => vm[t] += w,
                    TreePoint::OnEdge { .. } => {
                        return Err(Error::input("target space does not resolve the atoms of the measure"))
                    }
                }
            }
        }
        let mut ed = vec![0.0; target.edge_count()];
        for (id, e) in target.edges().iter().enumerate() {
            let mid = target.point(id, 0.5 * e.len)?;
            match self.space.transfer(target, &mid)? {
                TreePoint::OnEdge { edge, .. } => ed[id] = self.edge_densities[edge],
                TreePoint::Vertex(_) => {
                    return Err(Error::input("target space is coarser than the measure"))
                }
            }
        }
        Self::restated(target, vm, ed)
    }

    /// Vertex atom plus half the density mass of each incident edge.
    pub fn lumped(&self) -> Vec<f64> {
        let space = &self.space;
        let mut out = self.vertex_masses.clone();
        for (id, e) in space.edges().iter().enumerate() {
            let half = 0.5 * self.edge_densities[id] * e.len;
            out[e.a] += half;
            out[e.b] += half;
        }
        out
    }

    /// Content hash, stable within one process.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for w in self.vertex_masses.iter().chain(&self.edge_densities) {
            w.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn to_file(&self) -> MeasureFile {
        let space = &self.space;
        MeasureFile {
            vertex_masses: self
                .vertex_masses
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(v, &w)| (space.label(v), w))
                .collect(),
            edge_densities: self
                .edge_densities
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(e, &w)| (e, w))
                .collect(),
        }
    }

    pub fn from_file(space: &CableSystem, file: &MeasureFile) -> Result<Self> {
        let mut vm = vec![0.0; space.vertex_count()];
        for (&label, &w) in &file.vertex_masses {
            let v = space
                .vertex_by_label(label)
                .ok_or_else(|| Error::input(format!("measure references unknown vertex {label}")))?;
            vm[v] = w;
        }
        let mut ed = vec![0.0; space.edge_count()];
        for (&e, &w) in &file.edge_densities {
            *ed.get_mut(e).ok_or_else(|| Error::input(format!("measure references unknown edge {e}")))? = w;
        }
        Self::new(space, vm, ed)
    }
}

impl PartialEq for MeasureWeights {
    fn eq(&self, other: &Self) -> bool {
        self.space.fingerprint() == other.space.fingerprint()
            && self.vertex_masses == other.vertex_masses
            && self.edge_densities == other.edge_densities
    }
}

/// On-disk form of a measure: atoms keyed by vertex id, densities keyed by
/// edge index. Zero entries are omitted.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    #[serde(default)]
    pub vertex_masses: BTreeMap<u64, f64>,
    #[serde(default)]
    pub edge_densities: BTreeMap<usize, f64>,
}

/// `m(B(center, r))` for every radius in `radii`, from one truncated search.
pub fn ball_masses(space: &CableSystem, m: &MeasureWeights, center: &TreePoint, radii: &[f64]) -> Result<Vec<f64>> {
    let center = space.canonical(center)?;
    let pulled;
    let m = if m.space().fingerprint() == space.fingerprint() {
        m
    } else {
        pulled = m.pull_to(space)?;
        &pulled
    };
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    let map = space.distances_from(&[center], rmax);
    let mut out = vec![0.0; radii.len()];
    let mut edges = Vec::new();
    for v in 0..space.vertex_count() {
        let d = map.dist[v];
        if d.is_finite() {
            let w = m.vertex_masses[v];
            if w > 0.0 {
                for (k, &r) in radii.iter().enumerate() {
                    if d <= r {
                        out[k] += w;
                    }
                }
            }
            edges.extend(space.neighbors(v).iter().map(|&(_, e)| e));
        }
    }
    if let TreePoint::OnEdge { edge, .. } = center {
        edges.push(edge);
    }
    edges.sort_unstable();
    edges.dedup();
    for e in edges {
        let rho = m.edge_densities[e];
        if rho == 0.0 {
            continue;
        }
        let profile = map.edge_profile(space, e);
        for (k, &r) in radii.iter().enumerate() {
            out[k] += rho * profile.sublevel(r).iter().map(|(lo, hi)| hi - lo).sum::<f64>();
        }
    }
    for v in &mut out {
        *v = v.min(m.total_mass);
    }
    Ok(out)
}

pub fn ball_mass(space: &CableSystem, m: &MeasureWeights, center: &TreePoint, r: f64) -> Result<f64> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::input(format!("radius {r} must be nonnegative")));
    }
    Ok(ball_masses(space, m, center, &[r])?[0])
}

/// `n` points drawn uniformly with respect to the length measure.
pub fn sample_points(space: &CableSystem, n: usize, rng: &mut impl Rng) -> Vec<TreePoint> {
    if space.edge_count() == 0 {
        return vec![TreePoint::Vertex(0); n];
    }
    let mut cum = Vec::with_capacity(space.edge_count());
    let mut acc = 0.0;
    for e in space.edges() {
        acc += e.len;
        cum.push(acc);
    }
    (0..n)
        .map(|_| {
            let u = rng.gen::<f64>() * acc;
            let e = cum.partition_point(|&c| c < u).min(cum.len() - 1);
            let len = space.edge(e).len;
            space.point(e, rng.gen::<f64>() * len).expect("offset within edge")
        })
        .collect()
}

/// The volume function Φ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Phi {
    Power { d_h: f64 },
    /// Log-log interpolation of samples; power-law extrapolation outside.
    Tabulated { r: Vec<f64>, phi: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeProfile {
    pub phi: Phi,
    /// Upper doubling exponent.
    pub alpha: f64,
    /// Validity radius.
    pub r0: f64,
    pub c: f64,
    pub big_c: f64,
}

impl VolumeProfile {
    pub fn power(d_h: f64, r0: f64) -> Self {
        VolumeProfile { phi: Phi::Power { d_h }, alpha: d_h, r0, c: 1.0, big_c: 1.0 }
    }

    pub fn tabulated(r: Vec<f64>, phi: Vec<f64>, r0: f64) -> Result<Self> {
        if r.len() < 2 || r.len() != phi.len() {
            return Err(Error::input("tabulated profile needs at least two matching samples"));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) || phi.windows(2).any(|w| w[1] < w[0]) || phi[0] <= 0.0 {
            return Err(Error::input("tabulated profile must be increasing and positive"));
        }
        let mut profile = VolumeProfile { phi: Phi::Tabulated { r, phi }, alpha: 1.0, r0, c: 1.0, big_c: 1.0 };
        if let Phi::Tabulated { r, phi } = &profile.phi {
            let slopes: Vec<f64> =
                (1..r.len()).map(|i| (phi[i] / phi[i - 1]).ln() / (r[i] / r[i - 1]).ln()).collect();
            profile.alpha = stats::max(&slopes).max(1.0);
        }
        Ok(profile)
    }

    pub fn phi(&self, r: f64) -> f64 {
        match &self.phi {
            Phi::Power { d_h } => r.powf(*d_h),
            Phi::Tabulated { r: rs, phi } => {
                let n = rs.len();
                let i = rs.partition_point(|&x| x <= r).clamp(1, n - 1);
                let (r0, r1, p0, p1) = (rs[i - 1], rs[i], phi[i - 1], phi[i]);
                let s = (p1 / p0).ln() / (r1 / r0).ln();
                p0 * (r / r0).powf(s)
            }
        }
    }

    /// Exponent `d_h`: exact for the power form, global log-log slope otherwise.
    pub fn d_h(&self) -> f64 {
        match &self.phi {
            Phi::Power { d_h } => *d_h,
            Phi::Tabulated { r, phi } => stats::log_log_fit(r, phi).slope,
        }
    }

    /// `Ψ_p(r) = r^{p-1} Φ(r)`.
    pub fn psi(&self, p: f64, r: f64) -> f64 {
        r.powf(p - 1.0) * self.phi(r)
    }

    pub fn phi_inv(&self, v: f64) -> f64 {
        match &self.phi {
            Phi::Power { d_h } => v.powf(1.0 / d_h),
            Phi::Tabulated { .. } => invert_increasing(|r| self.phi(r), v),
        }
    }

    /// `Ψ_p^{-1}(t)` by bisection in log scale.
    pub fn psi_inv(&self, p: f64, t: f64) -> f64 {
        invert_increasing(|r| self.psi(p, r), t)
    }

    /// Empirical `(c, C)` with `c R/r <= Φ(R)/Φ(r) <= C (R/r)^α` over all
    /// grid pairs `r <= R`.
    pub fn doubling_constants(&self, grid: &[f64]) -> (f64, f64) {
        let (mut c, mut big_c) = (f64::INFINITY, 0.0f64);
        for (i, &r) in grid.iter().enumerate() {
            for &big_r in &grid[i..] {
                let q = self.phi(big_r) / self.phi(r);
                c = c.min(q / (big_r / r));
                big_c = big_c.max(q / (big_r / r).powf(self.alpha));
            }
        }
        (c, big_c)
    }
}

/// Inverse of an increasing positive function with `f(r) -> 0` as `r -> 0`.
fn invert_increasing(f: impl Fn(f64) -> f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (1e-3, 1.0);
    while f(lo) > t && lo > 1e-300 {
        lo *= 1e-3;
    }
    while f(hi) < t && hi < 1e300 {
        hi *= 1e3;
    }
    for _ in 0..80 {
        let mid = (lo * hi).sqrt();
        if f(mid) < t {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 <= REL_TOL {
            break;
        }
    }
    (lo * hi).sqrt()
}

/// One row of a volume report.
#[derive(Clone, Debug, Serialize)]
pub struct VolumeRow {
    pub r: f64,
    pub min_mass: f64,
    pub median_mass: f64,
    pub max_mass: f64,
    pub phi_r: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeFit {
    pub profile: VolumeProfile,
    pub d_h: f64,
    pub r2: f64,
    pub rows: Vec<VolumeRow>,
    /// Set when `C / c` exceeds the configured bound.
    pub violation: bool,
}

#[derive(Clone, Debug)]
pub struct VolumeFitOptions {
    pub centers: usize,
    pub seed: u64,
    pub ratio_bound: f64,
}

impl Default for VolumeFitOptions {
    fn default() -> Self {
        VolumeFitOptions { centers: 32, seed: 0, ratio_bound: 50.0 }
    }
}

/// Power-law fit of the median ball mass over random centres.
pub fn volume_profile_fit(
    space: &CableSystem,
    m: &MeasureWeights,
    r_grid: &[f64],
    opts: &VolumeFitOptions,
) -> Result<VolumeFit> {
    if r_grid.len() < 3 {
        return Err(Error::input("volume fit needs at least three radii"));
    }
    if space.edge_count() == 0 {
        return Err(Error::input("volume fit on a single point is degenerate"));
    }
    if r_grid.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::input("radii must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let centers = sample_points(space, opts.centers.max(1), &mut rng);
    let mut masses = vec![Vec::with_capacity(centers.len()); r_grid.len()];
    for x in &centers {
        for (k, w) in ball_masses(space, m, x, r_grid)?.into_iter().enumerate() {
            masses[k].push(w);
        }
    }
    let medians: Vec<f64> = masses.iter().map(|v| stats::median(v)).collect();
    if medians.iter().any(|&w| w <= 0.0) {
        return Err(Error::MeasureSupport("a ball of the grid has zero median mass".into()));
    }
    let fit = stats::log_log_fit(r_grid, &medians);
    let d_h = fit.slope;
    let phi = |r: f64| r.powf(d_h);
    let (mut c, mut big_c) = (f64::INFINITY, 0.0f64);
    let rows = r_grid
        .iter()
        .zip(&masses)
        .zip(&medians)
        .map(|((&r, w), &med)| {
            let (lo, hi) = (stats::min(w), stats::max(w));
            c = c.min(lo / phi(r));
            big_c = big_c.max(hi / phi(r));
            VolumeRow { r, min_mass: lo, median_mass: med, max_mass: hi, phi_r: phi(r) }
        })
        .collect();
    let r0 = stats::max(r_grid);
    let profile = VolumeProfile { phi: Phi::Power { d_h }, alpha: d_h.max(1.0), r0, c, big_c };
    Ok(VolumeFit { profile, d_h, r2: fit.r2, rows, violation: !(big_c / c <= opts.ratio_bound) })
}
