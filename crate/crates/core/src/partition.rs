//! Bump functions adapted to the tree structure, bounded-overlap coverings,
//! partitions of unity and the discrete convolution built from them.

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::PlFunction;
use crate::error::{Error, Result};
use crate::measure::MeasureWeights;
use crate::tree::{CableSystem, TreePoint, VertexId};

/// Relative slack for the level tests `d = ε` and `diam ≥ ε`.
const LEVEL_TOL: f64 = 1e-9;

/// The cut-off function `Ψ^ε_x`, piecewise linear on its own subdivision.
#[derive(Clone, Debug)]
pub struct BumpFunction {
    pub center: TreePoint,
    pub epsilon: f64,
    /// The anchor set `S_ε`, as vertices of `function.space()`.
    pub anchors: Vec<TreePoint>,
    pub function: PlFunction,
}

impl BumpFunction {
    /// `ν(supp ∂Ψ)`: total length of the edges where the bump is not flat.
    pub fn gradient_support_length(&self) -> f64 {
        let f = &self.function;
        f.space()
            .edges()
            .iter()
            .filter(|e| f.value(e.a) != f.value(e.b))
            .map(|e| e.len)
            .sum()
    }
}

fn positive(x: f64, what: &str) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!("{what} must be positive, got {x}")))
    }
}

/// `Ψ^ε_x(y) = 1 - max_{u ∈ S_ε} d(x, c(x, y, u)) / ε` on `B(x, 3ε)`, zero
/// outside, where `S_ε` holds the points of the sphere of radius `ε` behind
/// which some component of `B(x, 3ε) \ {u}` has diameter at least `ε`.
pub fn bump(space: &CableSystem, x: &TreePoint, eps: f64) -> Result<BumpFunction> {
    positive(eps, "bump scale")?;
    if space.is_local_tree() && 3.0 * eps >= space.uniformity_radius() {
        return Err(Error::domain(format!(
            "bump scale {eps} needs 3ε below the uniformity radius {}",
            space.uniformity_radius()
        )));
    }
    let field = space.distance_field(&[*x], |_, _| Ok(Vec::new()), &[eps, 2.0 * eps, 3.0 * eps])?;
    let s = field.space;
    let root = field.anchors[0];
    let n = s.vertex_count();
    let tol = LEVEL_TOL * eps;
    let map = s.distances_from(&[TreePoint::Vertex(root)], 3.0 * eps + tol);
    let dist = &map.dist;

    let mut order: Vec<VertexId> = (0..n).filter(|&v| dist[v].is_finite()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let parent: Vec<Option<(VertexId, f64)>> = map
        .pred
        .iter()
        .map(|step| match *step {
            crate::tree::Step::Via { from, edge } => Some((from, s.edge(edge).len)),
            _ => None,
        })
        .collect();

    // bottom-up: height and diameter of the subtree hanging below each vertex
    let mut top = vec![(0.0f64, 0.0f64); n];
    let mut diam = vec![0.0f64; n];
    let mut far = vec![false; n];
    for &v in order.iter().rev() {
        let height = top[v].0;
        diam[v] = diam[v].max(top[v].0 + top[v].1);
        if let Some((p, len)) = parent[v] {
            let branch = len + height;
            if diam[v].max(branch) >= eps - tol {
                far[p] = true;
            }
            diam[p] = diam[p].max(diam[v]);
            let t = &mut top[p];
            if branch > t.0 {
                *t = (branch, t.0);
            } else if branch > t.1 {
                t.1 = branch;
            }
        }
    }

    let anchors: Vec<VertexId> =
        order.iter().copied().filter(|&v| (dist[v] - eps).abs() <= tol && far[v]).collect();
    let mut values = vec![0.0; n];
    if anchors.is_empty() {
        values.fill(1.0);
    } else {
        let mut in_t = vec![false; n];
        for &u in &anchors {
            let mut cur = u;
            while !in_t[cur] {
                in_t[cur] = true;
                match parent[cur] {
                    Some((p, _)) => cur = p,
                    None => break,
                }
            }
        }
        // deepest ancestor in the hull of x and the anchors
        let mut branch = vec![root; n];
        for &v in &order {
            branch[v] = match parent[v] {
                _ if in_t[v] => v,
                Some((p, _)) => branch[p],
                None => v,
            };
            let d = dist[branch[v]];
            values[v] = if d >= eps - tol { 0.0 } else { (1.0 - d / eps).clamp(0.0, 1.0) };
        }
    }
    let center = s.vertex(root)?;
    Ok(BumpFunction {
        center,
        epsilon: eps,
        anchors: anchors.into_iter().map(TreePoint::Vertex).collect(),
        function: PlFunction::new(s, values)?,
    })
}

/// Centres of a cover by closed balls of radius `radius`, with the largest
/// number of dilated balls `B(c, λ radius)` meeting at one point.
#[derive(Clone, Debug, Serialize)]
pub struct Covering {
    pub radius: f64,
    pub lambda: f64,
    #[serde(skip)]
    pub centers: Vec<TreePoint>,
    pub overlap: usize,
}

/// Farthest-point greedy `r`-net started at the metric centre. Centres are
/// pairwise more than `r` apart and the `r`-balls cover the space.
pub fn covering(space: &CableSystem, r: f64, lambda: f64) -> Result<Covering> {
    positive(r, "covering radius")?;
    if !(lambda >= 1.0 && lambda.is_finite()) {
        return Err(Error::input(format!("dilation {lambda} must be at least 1")));
    }
    let mut centers = vec![space.metric_center()?];
    loop {
        let (far, d) = space.farthest_from(&centers);
        if d <= r * (1.0 + 1e-12) {
            break;
        }
        centers.push(far);
    }
    let overlap = overlap_count(space, &centers, lambda * r)?;
    Ok(Covering { radius: r, lambda, centers, overlap })
}

/// `max_y #{i : d(y, c_i) <= radius}` over every point of the space.
pub fn overlap_count(space: &CableSystem, centers: &[TreePoint], radius: f64) -> Result<usize> {
    let mut at_vertex = vec![0usize; space.vertex_count()];
    let mut events: Vec<Vec<(f64, i32)>> = vec![Vec::new(); space.edge_count()];
    for c in centers {
        let c = space.canonical(c)?;
        let map = space.distances_from(&[c], radius);
        let mut edges = Vec::new();
        for v in 0..space.vertex_count() {
            if map.dist[v].is_finite() {
                at_vertex[v] += 1;
                edges.extend(space.neighbors(v).iter().map(|&(_, e)| e));
            }
        }
        if let TreePoint::OnEdge { edge, .. } = c {
            edges.push(edge);
        }
        edges.sort_unstable();
        edges.dedup();
        for e in edges {
            for (lo, hi) in map.edge_profile(space, e).sublevel(radius) {
                events[e].push((lo, 1));
                events[e].push((hi, -1));
            }
        }
    }
    let mut best = at_vertex.iter().copied().max().unwrap_or(0);
    for mut ev in events {
        // closed intervals: openings sort before closings at equal offsets
        ev.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut run = 0i32;
        for (_, step) in ev {
            run += step;
            best = best.max(run as usize);
        }
    }
    Ok(best)
}

/// Normalised bumps `φ_i = Ψ^{2ε}_{x_i} / Σ_j Ψ^{2ε}_{x_j}` over a
/// `covering(ε, 4)`, interpolated on a subdivision resolving every bump.
/// The members sum to one exactly along every edge.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    space: CableSystem,
    pub epsilon: f64,
    /// Centres as points of [`Self::space`].
    pub centers: Vec<TreePoint>,
    pub overlap: usize,
    /// Smallest value of `Σ_j Ψ^{2ε}_{x_j}` over the vertices.
    pub min_denominator: f64,
    members: Vec<Vec<(VertexId, f64)>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PouReport {
    pub epsilon: f64,
    pub n_centers: usize,
    pub overlap: usize,
    pub p: f64,
    /// `max_i ε^{p-1} ∫ |∂φ_i|^p dν`.
    pub max_energy_scaled: f64,
}

impl PartitionOfUnity {
    pub fn space(&self) -> &CableSystem {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Nonzero vertex values of member `i`, sorted by vertex.
    pub fn member_values(&self, i: usize) -> &[(VertexId, f64)] {
        &self.members[i]
    }

    pub fn member(&self, i: usize) -> PlFunction {
        let mut values = vec![0.0; self.space.vertex_count()];
        for &(v, x) in &self.members[i] {
            values[v] = x;
        }
        PlFunction::new(self.space.clone(), values).expect("finite member values")
    }

    /// `Σ_i φ_i` as a function on [`Self::space`].
    pub fn sum(&self) -> PlFunction {
        let mut values = vec![0.0; self.space.vertex_count()];
        for row in &self.members {
            for &(v, x) in row {
                values[v] += x;
            }
        }
        PlFunction::new(self.space.clone(), values).expect("finite member values")
    }

    /// `∫ |∂φ_i|^p dν`.
    pub fn energy(&self, i: usize, p: f64) -> f64 {
        let row = &self.members[i];
        let value = |v: VertexId| row.binary_search_by_key(&v, |&(w, _)| w).map_or(0.0, |k| row[k].1);
        let mut total = 0.0;
        for &(v, x) in row {
            for &(w, e) in self.space.neighbors(v) {
                let y = value(w);
                // edges inside the support are visited from both ends
                if y != 0.0 && w < v {
                    continue;
                }
                let len = self.space.edge(e).len;
                total += ((x - y).abs() / len).powf(p) * len;
            }
        }
        total
    }

    pub fn max_energy_scaled(&self, p: f64) -> f64 {
        let scale = self.epsilon.powf(p - 1.0);
        (0..self.len()).map(|i| scale * self.energy(i, p)).fold(0.0, f64::max)
    }

    pub fn report(&self, p: f64) -> PouReport {
        PouReport {
            epsilon: self.epsilon,
            n_centers: self.len(),
            overlap: self.overlap,
            p,
            max_energy_scaled: self.max_energy_scaled(p),
        }
    }
}

pub fn partition_of_unity(space: &CableSystem, eps: f64) -> Result<PartitionOfUnity> {
    positive(eps, "partition scale")?;
    if space.is_local_tree() && 6.0 * eps >= space.uniformity_radius() {
        return Err(Error::domain(format!(
            "partition scale {eps} needs 6ε below the uniformity radius {}",
            space.uniformity_radius()
        )));
    }
    let cover = covering(space, eps, 4.0)?;
    let bumps: Vec<BumpFunction> =
        cover.centers.par_iter().map(|c| bump(space, c, 2.0 * eps)).collect::<Result<_>>()?;

    let n0 = space.vertex_count();
    let mut points = Vec::new();
    for b in &bumps {
        let bs = b.function.space();
        for v in n0..bs.vertex_count() {
            points.push(space.transfer(bs, &TreePoint::Vertex(v))?);
        }
    }
    let (common, _, _) = space.insert_points(&points)?;
    let centers: Vec<TreePoint> =
        cover.centers.iter().map(|c| common.transfer(space, c)).collect::<Result<_>>()?;

    let reach = 6.0 * eps * (1.0 + LEVEL_TOL);
    let mut members: Vec<Vec<(VertexId, f64)>> = bumps
        .par_iter()
        .zip(&centers)
        .map(|(b, c)| {
            let map = common.distances_from(&[*c], reach);
            let bs = b.function.space();
            let mut row = Vec::new();
            for v in 0..common.vertex_count() {
                if map.dist[v].is_finite() {
                    let x = b.function.evaluate(&bs.transfer(&common, &TreePoint::Vertex(v))?)?;
                    if x > 0.0 {
                        row.push((v, x));
                    }
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut total = vec![0.0; common.vertex_count()];
    for row in &members {
        for &(v, x) in row {
            total[v] += x;
        }
    }
    let min_denominator = total.iter().copied().fold(f64::INFINITY, f64::min);
    if min_denominator < 0.5 - 1e-9 {
        return Err(Error::numerical(format!(
            "bump sum drops to {min_denominator} < 1/2; the covering does not resolve scale {eps}"
        )));
    }
    for row in &mut members {
        for (v, x) in row.iter_mut() {
            *x /= total[*v];
        }
    }
    Ok(PartitionOfUnity { space: common, epsilon: eps, centers, overlap: cover.overlap, min_denominator, members })
}

/// `(m(B), ∫_B f dm)` for the closed ball `B(center, r)`; `m` must live on
/// `f.space()`.
fn ball_integral(f: &PlFunction, m: &MeasureWeights, center: &TreePoint, r: f64) -> (f64, f64) {
    let space = f.space();
    let map = space.distances_from(&[*center], r);
    let (atoms, dens) = (m.vertex_masses(), m.edge_densities());
    let (mut mass, mut integral) = (0.0, 0.0);
    let mut edges = Vec::new();
    for v in 0..space.vertex_count() {
        if map.dist[v].is_finite() {
            mass += atoms[v];
            integral += atoms[v] * f.value(v);
            edges.extend(space.neighbors(v).iter().map(|&(_, e)| e));
        }
    }
    if let TreePoint::OnEdge { edge, .. } = *center {
        edges.push(edge);
    }
    edges.sort_unstable();
    edges.dedup();
    for e in edges {
        let rho = dens[e];
        if rho == 0.0 {
            continue;
        }
        let edge = space.edge(e);
        let (fa, fb) = (f.value(edge.a), f.value(edge.b));
        let at = |s: f64| fa + (fb - fa) * (s / edge.len);
        for (lo, hi) in map.edge_profile(space, e).sublevel(r) {
            mass += rho * (hi - lo);
            integral += rho * (hi - lo) * 0.5 * (at(lo) + at(hi));
        }
    }
    (mass, integral)
}

/// `(1 / m(B(center, r))) ∫_{B(center, r)} f dm`.
pub fn ball_average(f: &PlFunction, m: &MeasureWeights, center: &TreePoint, r: f64) -> Result<f64> {
    positive(r, "ball radius")?;
    let m = m.pull_to(f.space())?;
    let center = f.space().canonical(center)?;
    let (mass, integral) = ball_integral(f, &m, &center, r);
    if mass <= 0.0 {
        return Err(Error::MeasureSupport(format!("ball of radius {r} carries no mass")));
    }
    Ok(integral / mass)
}

/// `f_ε = Σ_i f_{B_i} φ_i` with `f_{B_i}` the `m`-average of `f` over
/// `B(x_i, ε)`.
pub fn discrete_convolution(f: &PlFunction, m: &MeasureWeights, pou: &PartitionOfUnity) -> Result<PlFunction> {
    let m = m.pull_to(f.space())?;
    let averages: Vec<f64> = pou
        .centers
        .par_iter()
        .map(|c| {
            let c = f.space().transfer(pou.space(), c)?;
            let (mass, integral) = ball_integral(f, &m, &c, pou.epsilon);
            if mass <= 0.0 {
                return Err(Error::MeasureSupport(format!(
                    "covering ball of radius {} carries no mass",
                    pou.epsilon
                )));
            }
            Ok(integral / mass)
        })
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; pou.space.vertex_count()];
    for (row, a) in pou.members.iter().zip(&averages) {
        for &(v, x) in row {
            values[v] += a * x;
        }
    }
    PlFunction::new(pou.space.clone(), values)
}
