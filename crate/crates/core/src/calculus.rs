//! Continuous piecewise-linear functions and their first-order calculus.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators;
use crate::measure::MeasureWeights;
use crate::tree::{CableSystem, EdgeId, PathSegment, TreePoint, VertexId};

/// Continuous function, affine on every edge of its space.
#[derive(Clone, Debug)]
pub struct PlFunction {
    space: CableSystem,
    values: Vec<f64>,
}

impl PlFunction {
    pub fn new(space: CableSystem, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.vertex_count() {
            return Err(Error::input(format!(
                "function has {} values for {} vertices",
                values.len(),
                space.vertex_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("function values must be finite"));
        }
        Ok(PlFunction { space, values })
    }

    pub fn constant(space: &CableSystem, c: f64) -> Self {
        PlFunction { space: space.clone(), values: vec![c; space.vertex_count()] }
    }

    pub fn space(&self) -> &CableSystem {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, v: VertexId) -> f64 {
        self.values[v]
    }

    /// Weak gradient on edge `e`, oriented from endpoint `a` to `b`.
    pub fn slope(&self, e: EdgeId) -> f64 {
        let edge = self.space.edge(e);
        (self.values[edge.b] - self.values[edge.a]) / edge.len
    }

    pub fn slopes(&self) -> Vec<f64> {
        (0..self.space.edge_count()).map(|e| self.slope(e)).collect()
    }

    pub fn evaluate(&self, x: &TreePoint) -> Result<f64> {
        Ok(match self.space.canonical(x)? {
            TreePoint::Vertex(v) => self.values[v],
            TreePoint::OnEdge { edge, offset } => {
                let e = self.space.edge(edge);
                let (fa, fb) = (self.values[e.a], self.values[e.b]);
                fa + (fb - fa) * (offset / e.len)
            }
        })
    }

    /// `∫ g(∂f) dν` along a geodesic, with the slope signed along the path.
    pub fn path_integral(&self, path: &PathSegment, g: impl Fn(f64) -> f64) -> f64 {
        path.pieces
            .iter()
            .map(|piece| {
                let s = self.slope(piece.edge) * (piece.to - piece.from).signum();
                g(s) * piece.length()
            })
            .sum()
    }

    /// Values on another subdivision of the same root space.
    pub fn resample(&self, target: &CableSystem) -> Result<PlFunction> {
        if target.fingerprint() == self.space.fingerprint() {
            return Ok(PlFunction { space: target.clone(), values: self.values.clone() });
        }
        let values = (0..target.vertex_count())
            .map(|v| self.evaluate(&self.space.transfer(target, &TreePoint::Vertex(v))?))
            .collect::<Result<_>>()?;
        PlFunction::new(target.clone(), values)
    }

    /// Exact restatement on the subdivision with mesh size at most `h`.
    pub fn refine(&self, h: f64) -> Result<PlFunction> {
        let (space, _) = self.space.refine(h)?;
        self.resample(&space)
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> PlFunction {
        PlFunction { space: self.space.clone(), values: self.values.iter().map(|&v| op(v)).collect() }
    }

    pub fn scale(&self, c: f64) -> PlFunction {
        self.map(|v| c * v)
    }

    pub fn add_constant(&self, c: f64) -> PlFunction {
        self.map(|v| v + c)
    }

    /// Pointwise combination on a common subdivision. Exact when `op` is
    /// affine in each argument separately along straight lines, e.g. sums.
    pub fn zip_with(&self, other: &PlFunction, op: impl Fn(f64, f64) -> f64) -> Result<PlFunction> {
        let space = common_space(&self.space, &other.space)?;
        let a = self.resample(&space)?;
        let b = other.resample(&space)?;
        let values = a.values.iter().zip(&b.values).map(|(&x, &y)| op(x, y)).collect();
        PlFunction::new(space, values)
    }

    pub fn add(&self, other: &PlFunction) -> Result<PlFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &PlFunction) -> Result<PlFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Product interpolated at the vertices of the common subdivision, with
    /// the exact sup-norm interpolation error `max |∂f ∂g| len² / 4`.
    pub fn product(&self, other: &PlFunction) -> Result<Projected> {
        let space = common_space(&self.space, &other.space)?;
        let a = self.resample(&space)?;
        let b = other.resample(&space)?;
        let error = (0..space.edge_count())
            .map(|e| (a.slope(e) * b.slope(e)).abs() * space.edge(e).len.powi(2) / 4.0)
            .fold(0.0, f64::max);
        let values = a.values.iter().zip(&b.values).map(|(&x, &y)| x * y).collect();
        Ok(Projected { function: PlFunction::new(space, values)?, error })
    }

    /// `φ ∘ f` interpolated at the vertices; the error is the largest
    /// midpoint deviation from the chord.
    pub fn compose(&self, phi: impl Fn(f64) -> f64) -> Projected {
        let function = self.map(&phi);
        let error = self
            .space
            .edges()
            .iter()
            .map(|e| {
                let (fa, fb) = (self.values[e.a], self.values[e.b]);
                (phi(0.5 * (fa + fb)) - 0.5 * (phi(fa) + phi(fb))).abs()
            })
            .fold(0.0, f64::max);
        Projected { function, error }
    }

    /// `‖f‖_{L^p(m)}` evaluated in closed form; `p = inf` gives the
    /// essential supremum over the support of `m`.
    pub fn lp_norm(&self, m: &MeasureWeights, p: f64) -> Result<f64> {
        check_p(p)?;
        let m = m.pull_to(&self.space)?;
        let (atoms, dens) = (m.vertex_masses(), m.edge_densities());
        if p.is_infinite() {
            let mut sup = 0.0f64;
            for (v, &w) in atoms.iter().enumerate() {
                if w > 0.0 {
                    sup = sup.max(self.values[v].abs());
                }
            }
            for (id, e) in self.space.edges().iter().enumerate() {
                if dens[id] > 0.0 {
                    sup = sup.max(self.values[e.a].abs()).max(self.values[e.b].abs());
                }
            }
            return Ok(sup);
        }
        let mut total = 0.0;
        for (v, &w) in atoms.iter().enumerate() {
            total += w * self.values[v].abs().powf(p);
        }
        for (id, e) in self.space.edges().iter().enumerate() {
            if dens[id] > 0.0 {
                total += dens[id] * linear_power_integral(self.values[e.a], self.values[e.b], e.len, p);
            }
        }
        Ok(total.powf(1.0 / p))
    }

    /// `‖∂f‖_{L^p(ν)}`.
    pub fn gradient_norm(&self, p: f64) -> Result<f64> {
        let r = p_energy(self, p)?;
        Ok(if p.is_infinite() { r.sup_gradient } else { r.energy.powf(1.0 / p) })
    }

    pub fn to_file(&self) -> FunctionFile {
        FunctionFile {
            values: self.values.iter().enumerate().map(|(v, &x)| (self.space.label(v), x)).collect(),
        }
    }

    pub fn from_file(space: &CableSystem, file: &FunctionFile) -> Result<PlFunction> {
        let mut values = vec![f64::NAN; space.vertex_count()];
        for (&label, &x) in &file.values {
            let v = space
                .vertex_by_label(label)
                .ok_or_else(|| Error::input(format!("function references unknown vertex {label}")))?;
            values[v] = x;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::input("function file must give a value for every vertex"));
        }
        PlFunction::new(space.clone(), values)
    }
}

/// A function re-projected onto piecewise-linear form, with its sup-norm
/// projection error.
#[derive(Clone, Debug)]
pub struct Projected {
    pub function: PlFunction,
    pub error: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionFile {
    pub values: BTreeMap<u64, f64>,
}

/// Smallest subdivision containing the vertices of both spaces.
pub fn common_space(a: &CableSystem, b: &CableSystem) -> Result<CableSystem> {
    if a.fingerprint() == b.fingerprint() {
        return Ok(a.clone());
    }
    let points = (0..b.vertex_count())
        .map(|v| a.transfer(b, &TreePoint::Vertex(v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(a.insert_points(&points)?.0)
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("exponent p = {p} must be at least 1")))
    }
}

/// `∫_0^len |a + (b - a) s / len|^p ds`.
pub fn linear_power_integral(a: f64, b: f64, len: f64, p: f64) -> f64 {
    let q = p + 1.0;
    if a * b < 0.0 {
        let (x, y) = (a.abs(), b.abs());
        return len * (x.powf(q) + y.powf(q)) / (q * (x + y));
    }
    let (x, y) = {
        let (x, y) = (a.abs(), b.abs());
        if x <= y {
            (x, y)
        } else {
            (y, x)
        }
    };
    if y == 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return len * y.powf(p) / q;
    }
    // (y^q - x^q) / (q (y - x)) without cancellation
    let r = (y - x) / x;
    if r == 0.0 {
        return len * x.powf(p);
    }
    len * x.powf(p) * (q * r.ln_1p()).exp_m1() / (q * r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub p: f64,
    /// `∫ |∂f|^p dν`; the essential supremum of `|∂f|` when `p = inf`.
    pub energy: f64,
    pub sup_gradient: f64,
}

pub fn p_energy(f: &PlFunction, p: f64) -> Result<EnergyReport> {
    check_p(p)?;
    let mut energy = 0.0;
    let mut sup = 0.0f64;
    for (id, e) in f.space.edges().iter().enumerate() {
        let s = f.slope(id).abs();
        sup = sup.max(s);
        if p.is_finite() {
            energy += s.powf(p) * e.len;
        }
    }
    if p.is_infinite() {
        energy = sup;
    }
    Ok(EnergyReport { p, energy, sup_gradient: sup })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MorreyReport {
    pub p: f64,
    pub max_ratio: f64,
    pub worst_pair: Option<usize>,
    pub pairs: usize,
}

/// Largest `|f(x) - f(y)|^p / (d(x,y)^{p-1} ∫_{]x,y[} |∂f|^p dν)` over the
/// pairs; `0/0` counts as 0.
pub fn morrey_check(f: &PlFunction, p: f64, pairs: &[(TreePoint, TreePoint)]) -> Result<MorreyReport> {
    check_p(p)?;
    if p.is_infinite() {
        return Err(Error::input("the Morrey check needs a finite exponent"));
    }
    let mut report = MorreyReport { p, max_ratio: 0.0, worst_pair: None, pairs: pairs.len() };
    for (i, (x, y)) in pairs.iter().enumerate() {
        let path = f.space.geodesic_path(x, y)?;
        let lhs = (f.evaluate(y)? - f.evaluate(x)?).abs().powf(p);
        let rhs = path.length().powf(p - 1.0) * f.path_integral(&path, |s| s.abs().powf(p));
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        if ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.worst_pair = Some(i);
        }
    }
    Ok(report)
}

/// A set whose indicator is estimated in total variation.
#[derive(Clone, Debug, PartialEq)]
pub enum IndicatorSet {
    /// The geodesic segment `[a, b]`.
    Segment(TreePoint, TreePoint),
    /// The closure of the component of `X \ {root}` containing `toward`.
    Subtree { root: TreePoint, toward: TreePoint },
    Whole,
}

#[derive(Clone, Debug, Serialize)]
pub struct BvReport {
    pub estimate: f64,
    pub best_width: f64,
    /// `(width, ℰ₁ of the ramp)` for every width tried.
    pub per_width: Vec<(f64, f64)>,
    /// `N_a + N_b - 2` for segments, where `N` counts branches at a point.
    pub combinatorial: Option<f64>,
}

/// Number of branches at a point: the degree of a vertex, 2 inside an edge.
pub fn branch_count(space: &CableSystem, p: &TreePoint) -> Result<usize> {
    Ok(match space.canonical(p)? {
        TreePoint::Vertex(v) => space.degree(v),
        TreePoint::OnEdge { .. } => 2,
    })
}

/// Upper estimate of the total variation of `1_A` by ramp functions.
pub fn bv_estimate(space: &CableSystem, set: &IndicatorSet, widths: &[f64]) -> Result<BvReport> {
    if widths.is_empty() {
        return Err(Error::input("bv_estimate needs at least one width"));
    }
    let mut per_width = Vec::with_capacity(widths.len());
    for &w in widths {
        let ramp = generators::indicator_ramp(space, set, w)?;
        per_width.push((w, p_energy(&ramp, 1.0)?.energy));
    }
    let &(best_width, estimate) =
        per_width.iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty widths");
    let combinatorial = match set {
        IndicatorSet::Segment(a, b) => {
            Some((branch_count(space, a)? + branch_count(space, b)?) as f64 - 2.0)
        }
        _ => None,
    };
    Ok(BvReport { estimate, best_width, per_width, combinatorial })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{self, GeneratorSpec};
    use proptest::prelude::*;

    fn unit() -> CableSystem {
        generators::generate(&GeneratorSpec::Interval { length: 1.0 }).unwrap().space
    }

    fn identity(space: &CableSystem) -> PlFunction {
        generators::coordinate(space, 0).unwrap()
    }

    #[test]
    fn evaluate_interpolates() {
        let s = unit();
        let f = identity(&s);
        assert_eq!(f.evaluate(&s.point(0, 0.25).unwrap()).unwrap(), 0.25);
        assert_eq!(f.evaluate(&TreePoint::Vertex(1)).unwrap(), 1.0);
    }

    #[test]
    fn energy_of_identity_and_constant() {
        let s = unit();
        assert_eq!(p_energy(&identity(&s), 2.0).unwrap().energy, 1.0);
        assert_eq!(p_energy(&PlFunction::constant(&s, 3.0), 1.5).unwrap().energy, 0.0);
        assert!(p_energy(&identity(&s), 0.5).is_err());
    }

    #[test]
    fn linear_power_integral_matches_quadrature() {
        for &(a, b, p) in &[(0.3, 0.9, 2.0), (-0.5, 1.0, 3.0), (1.0, 1.0 + 1e-9, 1.5), (0.0, 2.0, 1.0)] {
            let n = 200_000;
            let quad: f64 = (0..n)
                .map(|i| {
                    let s = (i as f64 + 0.5) / n as f64;
                    (a + (b - a) * s).abs().powf(p) / n as f64
                })
                .sum();
            let exact = linear_power_integral(a, b, 1.0, p);
            assert!((exact - quad).abs() < 1e-9, "{a} {b} {p}: {exact} vs {quad}");
        }
    }

    #[test]
    fn lp_norms_of_identity() {
        let s = unit();
        let m = MeasureWeights::lebesgue(&s);
        let f = identity(&s);
        assert!((f.lp_norm(&m, 2.0).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((f.lp_norm(&m, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(f.lp_norm(&m, f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn morrey_is_tight_for_linear() {
        let s = unit();
        let f = identity(&s);
        let pairs = [(s.point(0, 0.1).unwrap(), s.point(0, 0.8).unwrap())];
        let r = morrey_check(&f, 2.0, &pairs).unwrap();
        assert!((r.max_ratio - 1.0).abs() < 1e-12);
        let c = PlFunction::constant(&s, 1.0);
        assert_eq!(morrey_check(&c, 2.0, &pairs).unwrap().max_ratio, 0.0);
    }

    #[test]
    fn segment_indicator_has_variation_two() {
        let s = unit();
        let set = IndicatorSet::Segment(s.point(0, 0.3).unwrap(), s.point(0, 0.6).unwrap());
        let r = bv_estimate(&s, &set, &[0.05, 0.1, 0.2]).unwrap();
        assert!((r.estimate - 2.0).abs() < 1e-12);
        assert_eq!(r.combinatorial, Some(2.0));
        assert_eq!(bv_estimate(&s, &IndicatorSet::Whole, &[0.1]).unwrap().estimate, 0.0);
    }

    #[test]
    fn star_edge_indicator() {
        let s = generators::generate(&GeneratorSpec::Star { arms: 3, length: 1.0 }).unwrap().space;
        let set = IndicatorSet::Segment(TreePoint::Vertex(0), TreePoint::Vertex(1));
        let r = bv_estimate(&s, &set, &[0.25, 0.5, 1.0]).unwrap();
        assert!((r.estimate - 2.0).abs() < 1e-12);
        assert_eq!(r.combinatorial, Some(2.0));
    }

    #[test]
    fn chain_rule_error_is_first_order() {
        // slopes of the re-projected f² approach 2|f||∂f| at rate h
        let deviation = |h: f64| {
            let (mesh, _) = unit().refine(h).unwrap();
            let f = generators::coordinate(&mesh, 0).unwrap().map(|x| (3.0 * x).sin() + 0.1);
            let sq = f.compose(|v| v * v).function;
            (0..mesh.edge_count())
                .map(|e| {
                    let a = mesh.edge(e).a;
                    (sq.slope(e).abs() - 2.0 * f.value(a).abs() * f.slope(e).abs()).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = deviation(0.02) / deviation(0.01);
        assert!((1.5..=3.0).contains(&ratio), "halving h changed the deviation by {ratio}");
    }

    #[test]
    fn leibniz_holds_up_to_projection_error() {
        let s = generators::generate(&GeneratorSpec::RandomTree { vertices: 30, seed: 4 }).unwrap().space;
        let f = generators::random_pl(&s, 1).unwrap();
        let g = generators::random_pl(&s, 2).unwrap();
        let fg = f.product(&g).unwrap();
        let space = fg.function.space().clone();
        let (f, g) = (f.resample(&space).unwrap(), g.resample(&space).unwrap());
        let h = space.max_edge_length();
        for e in 0..space.edge_count() {
            let edge = space.edge(e);
            let bound = f.value(edge.a).abs().max(f.value(edge.b).abs()) * g.slope(e).abs()
                + g.value(edge.a).abs().max(g.value(edge.b).abs()) * f.slope(e).abs();
            assert!(fg.function.slope(e).abs() <= bound + 1e-12 + h * f.slope(e).abs() * g.slope(e).abs());
        }
    }

    #[test]
    fn mollified_energy_is_lower_semicontinuous() {
        // f_n = f + small oscillation -> f; energy of the limit does not exceed the infimum
        let s = unit();
        let (fine, _) = s.refine(1e-3).unwrap();
        let f = generators::coordinate(&fine, 0).unwrap().map(|x| x * x);
        let e = p_energy(&f, 2.0).unwrap().energy;
        let mut best = f64::INFINITY;
        for n in 1..6 {
            let amp = 0.1 / n as f64;
            let coord = generators::coordinate(&fine, 0).unwrap();
            let fn_ = PlFunction::new(
                fine.clone(),
                coord.values().iter().zip(f.values()).map(|(&x, &v)| v + amp * (40.0 * x).sin()).collect(),
            )
            .unwrap();
            best = best.min(p_energy(&fn_, 2.0).unwrap().energy);
        }
        assert!(e <= best + 1e-9);
    }

    #[test]
    fn clipping_does_not_increase_energy() {
        let s = generators::generate(&GeneratorSpec::RandomTree { vertices: 40, seed: 9 }).unwrap().space;
        let f = generators::random_pl(&s, 3).unwrap().scale(2.0);
        let (space, _) = s.refine(0.01).unwrap();
        let f = f.resample(&space).unwrap();
        // clip at level sets: insert the crossings so clipping stays exact
        let clipped = f.map(|v| v.clamp(0.0, 1.0));
        assert!(p_energy(&clipped, 2.0).unwrap().energy <= p_energy(&f, 2.0).unwrap().energy);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fundamental_theorem_along_geodesics(seed in 0u64..1000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let s = generators::generate(&GeneratorSpec::RandomTree { vertices: 25, seed }).unwrap().space;
            let f = generators::random_pl(&s, seed + 1).unwrap();
            let ex = (seed as usize) % s.edge_count();
            let ey = (seed as usize * 7 + 3) % s.edge_count();
            let x = s.point(ex, a * s.edge(ex).len).unwrap();
            let y = s.point(ey, b * s.edge(ey).len).unwrap();
            let path = s.geodesic_path(&x, &y).unwrap();
            let integral = f.path_integral(&path, |g| g);
            let diff = f.evaluate(&y).unwrap() - f.evaluate(&x).unwrap();
            prop_assert!((integral - diff).abs() <= 1e-12 * (1.0 + diff.abs()));
        }

        #[test]
        fn morrey_never_fails(seed in 0u64..1000, p in prop::sample::select(vec![1.0, 2.0, 4.0])) {
            let s = generators::generate(&GeneratorSpec::RandomTree { vertices: 20, seed }).unwrap().space;
            let f = generators::random_pl(&s, seed).unwrap();
            let pairs: Vec<_> = (0..s.vertex_count())
                .flat_map(|u| (0..s.vertex_count()).map(move |v| (TreePoint::Vertex(u), TreePoint::Vertex(v))))
                .collect();
            prop_assert!(morrey_check(&f, p, &pairs).unwrap().max_ratio <= 1.0 + 1e-10);
        }

        #[test]
        fn energy_scales_homogeneously(seed in 0u64..1000, c in -5.0f64..5.0) {
            let s = generators::generate(&GeneratorSpec::RandomTree { vertices: 15, seed }).unwrap().space;
            let f = generators::random_pl(&s, seed).unwrap();
            let e = p_energy(&f, 3.0).unwrap().energy;
            let ec = p_energy(&f.scale(c), 3.0).unwrap().energy;
            prop_assert!((ec - c.abs().powi(3) * e).abs() <= 1e-10 * (1.0 + ec));
        }
    }
}
