//! Example spaces with their canonical measures and volume profiles, and a
//! factory of test functions.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::calculus::{IndicatorSet, PlFunction};
use crate::error::{Error, Result};
use crate::measure::{MeasureWeights, VolumeProfile};
use crate::tree::{CableSystem, CableSystemBuilder, EdgeId, TreePoint, VertexId};

/// Default bound on generated vertex counts.
pub const DEFAULT_VERTEX_CAP: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Interval { length: f64 },
    Star { arms: usize, length: f64 },
    /// Uniform attachment tree with edge lengths in `[0.5, 1.5)`.
    RandomTree { vertices: usize, seed: u64 },
    /// Complete `branching`-ary tree of the given depth with edges of length `edge_length`.
    UniformCable { branching: usize, depth: usize, edge_length: f64 },
    Vicsek { level: u32 },
    /// Vicsek set whose `k`-th subdivision splits a cell into a
    /// `(2n_k - 1) x (2n_k - 1)` grid and keeps both diagonals.
    VicsekIrregular { branching: Vec<u32> },
    SierpinskiCable { level: u32 },
}

/// A generated space with its canonical measure and declared volume profile.
#[derive(Clone, Debug)]
pub struct Generated {
    pub space: CableSystem,
    pub measure: MeasureWeights,
    pub profile: VolumeProfile,
}

pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    generate_with_cap(spec, DEFAULT_VERTEX_CAP)
}

pub fn generate_with_cap(spec: &GeneratorSpec, cap: usize) -> Result<Generated> {
    let estimate = estimated_vertices(spec)?;
    if estimate > cap as f64 {
        return Err(Error::Resource(format!(
            "generator would produce about {estimate:.0} vertices (cap {cap})"
        )));
    }
    let meta = serde_json::to_value(spec)?;
    let g = match spec {
        GeneratorSpec::Interval { length } => {
            positive(*length, "length")?;
            let mut b = CableSystem::builder();
            b.vertices([0, 1]).edge(0, 1, *length).coord(0, [0.0, 0.0]).coord(1, [*length, 0.0]);
            lebesgue(b, *length)?
        }
        GeneratorSpec::Star { arms, length } => {
            positive(*length, "length")?;
            if *arms == 0 {
                return Err(Error::input("a star needs at least one arm"));
            }
            let mut b = CableSystem::builder();
            b.vertex(0).coord(0, [0.0, 0.0]);
            for k in 1..=*arms {
                let angle = 2.0 * PI * (k - 1) as f64 / *arms as f64;
                b.vertex(k as u64)
                    .edge(0, k as u64, *length)
                    .coord(k as u64, [length * angle.cos(), length * angle.sin()]);
            }
            let diam = if *arms == 1 { *length } else { 2.0 * length };
            lebesgue(b, diam)?
        }
        GeneratorSpec::RandomTree { vertices, seed } => {
            if *vertices < 2 {
                return Err(Error::input("a random tree needs at least two vertices"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut b = CableSystem::builder();
            b.vertex(0);
            for v in 1..*vertices as u64 {
                let parent = rng.gen_range(0..v);
                let len = 0.5 + rng.gen::<f64>();
                b.vertex(v).edge(parent, v, len);
            }
            let space = b.build()?;
            let diam = space.diameter();
            let measure = MeasureWeights::lebesgue(&space);
            Generated { space, measure, profile: VolumeProfile::power(1.0, diam) }
        }
        GeneratorSpec::UniformCable { branching, depth, edge_length } => {
            positive(*edge_length, "edge_length")?;
            if *branching < 1 {
                return Err(Error::input("branching must be at least 1"));
            }
            let mut b = CableSystem::builder();
            b.vertex(0);
            let mut frontier = vec![0u64];
            let mut next = 1u64;
            for _ in 0..*depth {
                let mut children = Vec::with_capacity(frontier.len() * branching);
                for &p in &frontier {
                    for _ in 0..*branching {
                        b.vertex(next).edge(p, next, *edge_length);
                        children.push(next);
                        next += 1;
                    }
                }
                frontier = children;
            }
            let space = b.build()?;
            let measure = MeasureWeights::lebesgue(&space);
            Generated { space, measure, profile: VolumeProfile::power(1.0, *edge_length) }
        }
        GeneratorSpec::Vicsek { level } => {
            let mut g = vicsek(&vec![2; *level as usize])?;
            g.profile = VolumeProfile::power(5f64.ln() / 3f64.ln(), 1.0 / 3.0);
            g
        }
        GeneratorSpec::VicsekIrregular { branching } => {
            if branching.iter().any(|&n| n < 2) {
                return Err(Error::input("branching entries must be at least 2"));
            }
            vicsek(branching)?
        }
        GeneratorSpec::SierpinskiCable { level } => sierpinski(*level)?,
    };
    let mut space = g.space.with_meta("generator", meta);
    if matches!(spec, GeneratorSpec::Vicsek { .. } | GeneratorSpec::VicsekIrregular { .. }) {
        space = space.with_meta("side", json!(1.0));
    }
    let space = space.with_meta("profile", serde_json::to_value(&g.profile)?);
    let measure =
        MeasureWeights::new(&space, g.measure.vertex_masses().to_vec(), g.measure.edge_densities().to_vec())?;
    Ok(Generated { space, measure, profile: g.profile })
}

fn positive(x: f64, name: &str) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must be positive")))
    }
}

fn lebesgue(b: CableSystemBuilder, r0: f64) -> Result<Generated> {
    let space = b.build()?;
    let measure = MeasureWeights::lebesgue(&space);
    Ok(Generated { space, measure, profile: VolumeProfile::power(1.0, r0) })
}

fn estimated_vertices(spec: &GeneratorSpec) -> Result<f64> {
    Ok(match spec {
        GeneratorSpec::Interval { .. } => 2.0,
        GeneratorSpec::Star { arms, .. } => *arms as f64 + 1.0,
        GeneratorSpec::RandomTree { vertices, .. } => *vertices as f64,
        GeneratorSpec::UniformCable { branching, depth, .. } => {
            (0..=*depth).map(|k| (*branching as f64).powi(k as i32)).sum()
        }
        GeneratorSpec::Vicsek { level } => 4.0 * 5f64.powi(*level as i32) + 1.0,
        GeneratorSpec::VicsekIrregular { branching } => {
            5.0 * branching.iter().map(|&n| 4.0 * n as f64 - 3.0).product::<f64>()
        }
        GeneratorSpec::SierpinskiCable { level } => 8f64.powi(*level as i32),
    })
}

/// Diagonal-skeleton Vicsek prefractal on the unit square.
fn vicsek(branching: &[u32]) -> Result<Generated> {
    let mut cells: Vec<(u64, u64)> = vec![(0, 0)];
    let mut grid = 1u64;
    let mut table_r = vec![1.0];
    let mut table_phi = vec![1.0];
    for &n in branching {
        let k = 2 * n as u64 - 1;
        let mut next = Vec::with_capacity(cells.len() * (4 * n as usize - 3));
        for &(i, j) in &cells {
            for a in 0..k {
                for b in 0..k {
                    if a == b || a + b == k - 1 {
                        next.push((i * k + a, j * k + b));
                    }
                }
            }
        }
        cells = next;
        grid *= k;
        table_r.push(1.0 / grid as f64);
        table_phi.push(1.0 / cells.len() as f64);
    }
    // lattice of half cells: centres at odd, corners at even coordinates
    let stride = 2 * grid + 1;
    let label = |x: u64, y: u64| x * stride + y;
    let half = 1.0 / (2 * grid) as f64;
    let len = FRAC_1_SQRT_2 / grid as f64;
    let mut b = CableSystem::builder();
    let mut seen = BTreeSet::new();
    let mut centers = Vec::with_capacity(cells.len());
    for &(i, j) in &cells {
        let (cx, cy) = (2 * i + 1, 2 * j + 1);
        centers.push(label(cx, cy));
        for (x, y) in [(cx, cy), (cx - 1, cy - 1), (cx + 1, cy - 1), (cx - 1, cy + 1), (cx + 1, cy + 1)] {
            if seen.insert(label(x, y)) {
                b.vertex(label(x, y)).coord(label(x, y), [x as f64 * half, y as f64 * half]);
            }
            if (x, y) != (cx, cy) {
                b.edge(label(cx, cy), label(x, y), len);
            }
        }
    }
    let space = b.build()?;
    let mass = 1.0 / cells.len() as f64;
    let mut vm = vec![0.0; space.vertex_count()];
    for c in centers {
        vm[space.vertex_by_label(c).expect("centre exists")] = mass;
    }
    let measure = MeasureWeights::new(&space, vm, vec![0.0; space.edge_count()])?;
    table_r.reverse();
    table_phi.reverse();
    let r0 = table_r.get(table_r.len().saturating_sub(2)).copied().unwrap_or(1.0);
    let profile = if table_r.len() >= 2 {
        VolumeProfile::tabulated(table_r, table_phi, r0)?
    } else {
        VolumeProfile::power(5f64.ln() / 3f64.ln(), 1.0)
    };
    Ok(Generated { space, measure, profile })
}

/// Cable system on the level-`n` Sierpiński carpet cells: a vertex per cell,
/// a unit edge per pair of side-adjacent cells.
fn sierpinski(level: u32) -> Result<Generated> {
    if level == 0 {
        return Err(Error::input("the carpet cable system needs level at least 1"));
    }
    let side = 3u64.pow(level);
    let kept = |mut i: u64, mut j: u64| {
        while i > 0 || j > 0 {
            if i % 3 == 1 && j % 3 == 1 {
                return false;
            }
            i /= 3;
            j /= 3;
        }
        true
    };
    let mut b = CableSystem::builder();
    b.local_tree(true);
    for i in 0..side {
        for j in 0..side {
            if !kept(i, j) {
                continue;
            }
            let id = i * side + j;
            let scale = 1.0 / side as f64;
            b.vertex(id).coord(id, [(i as f64 + 0.5) * scale, (j as f64 + 0.5) * scale]);
            if i + 1 < side && kept(i + 1, j) {
                b.edge(id, (i + 1) * side + j, 1.0);
            }
            if j + 1 < side && kept(i, j + 1) {
                b.edge(id, i * side + j + 1, 1.0);
            }
        }
    }
    let space = b.build()?;
    let measure = MeasureWeights::lebesgue(&space);
    let r0 = space.uniformity_radius();
    Ok(Generated { space, measure, profile: VolumeProfile::power(1.0, r0) })
}

/// Test-function families.
#[derive(Clone, Debug, PartialEq)]
pub enum FunctionKind {
    Coordinate { axis: usize },
    DistanceToPoint { point: TreePoint },
    RandomPl { seed: u64 },
    IndicatorRamp { set: IndicatorSet, width: f64 },
    /// Arc-length position of the projection onto the geodesic `[a, b]`.
    GeodesicProjection { a: TreePoint, b: TreePoint },
}

pub fn generate_function(space: &CableSystem, kind: &FunctionKind) -> Result<PlFunction> {
    match kind {
        FunctionKind::Coordinate { axis } => coordinate(space, *axis),
        FunctionKind::DistanceToPoint { point } => distance_to_point(space, point),
        FunctionKind::RandomPl { seed } => random_pl(space, *seed),
        FunctionKind::IndicatorRamp { set, width } => indicator_ramp(space, set, *width),
        FunctionKind::GeodesicProjection { a, b } => geodesic_projection(space, a, b),
    }
}

/// Planar coordinate `axis` (0 or 1), interpolated along edges.
pub fn coordinate(space: &CableSystem, axis: usize) -> Result<PlFunction> {
    let coords = space.coords().ok_or_else(|| Error::input("the space has no coordinates"))?;
    if axis > 1 {
        return Err(Error::input("coordinate axis must be 0 or 1"));
    }
    PlFunction::new(space.clone(), coords.iter().map(|xy| xy[axis]).collect())
}

/// `y ↦ d(x, y)` on the subdivision where it is piecewise linear.
pub fn distance_to_point(space: &CableSystem, x: &TreePoint) -> Result<PlFunction> {
    let field = space.distance_field(&[*x], |_, _| Ok(Vec::new()), &[])?;
    PlFunction::new(field.space, field.dist)
}

/// Independent uniform values in `[-1, 1]` at the vertices.
pub fn random_pl(space: &CableSystem, seed: u64) -> Result<PlFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PlFunction::new(space.clone(), (0..space.vertex_count()).map(|_| rng.gen_range(-1.0..=1.0)).collect())
}

/// `(1 - d(y, A) / width)_+`.
pub fn indicator_ramp(space: &CableSystem, set: &IndicatorSet, width: f64) -> Result<PlFunction> {
    positive(width, "ramp width")?;
    let field = match set {
        IndicatorSet::Whole => return Ok(PlFunction::constant(space, 1.0)),
        IndicatorSet::Segment(a, b) => {
            space.distance_field(&[*a, *b], |s, ids| s.path_edges(ids[0], ids[1]), &[width])?
        }
        IndicatorSet::Subtree { root, toward } => {
            space.distance_field(&[*root, *toward], |s, ids| component_edges(s, ids[0], ids[1]), &[width])?
        }
    };
    PlFunction::new(field.space, field.dist.iter().map(|d| (1.0 - d / width).max(0.0)).collect())
}

/// Edges of the closed component of `X \ {root}` containing `toward`.
fn component_edges(space: &CableSystem, root: VertexId, toward: VertexId) -> Result<Vec<EdgeId>> {
    if root == toward {
        return Err(Error::input("subtree direction must differ from its root"));
    }
    let mut seen = vec![false; space.vertex_count()];
    let mut edges = BTreeSet::new();
    let mut queue = VecDeque::from([toward]);
    seen[toward] = true;
    seen[root] = true;
    while let Some(v) = queue.pop_front() {
        for &(w, e) in space.neighbors(v) {
            edges.insert(e);
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    Ok(edges.into_iter().collect())
}

/// `y ↦ d(a, π(y))` where `π` projects onto the geodesic `[a, b]`.
pub fn geodesic_projection(space: &CableSystem, a: &TreePoint, b: &TreePoint) -> Result<PlFunction> {
    let (s1, ids, _) = space.insert_points(&[*a, *b])?;
    let da = s1.distances_from(&[TreePoint::Vertex(ids[0])], f64::INFINITY);
    let db = s1.distances_from(&[TreePoint::Vertex(ids[1])], f64::INFINITY);
    let mut cuts = Vec::new();
    for e in 0..s1.edge_count() {
        for map in [&da, &db] {
            for s in map.edge_profile(&s1, e).peaks() {
                if let Ok(p @ TreePoint::OnEdge { .. }) = s1.point(e, s) {
                    cuts.push(p);
                }
            }
        }
    }
    let (s2, _, _) = s1.insert_points(&cuts)?;
    let da = s2.distances_from(&[TreePoint::Vertex(ids[0])], f64::INFINITY);
    let db = s2.distances_from(&[TreePoint::Vertex(ids[1])], f64::INFINITY);
    let total = da.dist[ids[1]];
    let values = da
        .dist
        .iter()
        .zip(&db.dist)
        .map(|(x, y)| (0.5 * (x + total - y)).clamp(0.0, total))
        .collect();
    PlFunction::new(s2, values)
}

/// Vertex count of the level-`n` regular Vicsek prefractal by the recursion
/// `V(n) = 5 V(n-1) - 4`, `V(0) = 5`.
pub fn vicsek_vertex_count(level: u32) -> u64 {
    (0..level).fold(5, |v, _| 5 * v - 4)
}

/// Convenience lookup of a vertex by planar position.
pub fn vertex_near(space: &CableSystem, xy: [f64; 2]) -> Option<VertexId> {
    let coords = space.coords()?;
    let mut best: Option<(f64, VertexId)> = None;
    for (v, p) in coords.iter().enumerate() {
        let d = (p[0] - xy[0]).hypot(p[1] - xy[1]);
        if best.map_or(true, |b| d < b.0) {
            best = Some((d, v));
        }
    }
    best.map(|b| b.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn floyd(space: &CableSystem) -> Vec<Vec<f64>> {
        let n = space.vertex_count();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (v, row) in d.iter_mut().enumerate() {
            row[v] = 0.0;
        }
        for e in space.edges() {
            d[e.a][e.b] = e.len;
            d[e.b][e.a] = e.len;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        d
    }

    #[test]
    fn vicsek_level_zero_is_two_diagonals() {
        let g = generate(&GeneratorSpec::Vicsek { level: 0 }).unwrap();
        assert_eq!(g.space.vertex_count(), 5);
        assert_eq!(g.space.edge_count(), 4);
        assert!(g.space.edges().iter().all(|e| (e.len - FRAC_1_SQRT_2).abs() < 1e-15));
        assert_eq!(g.measure.total_mass(), 1.0);
    }

    #[test]
    fn vicsek_counts_follow_recursion() {
        for level in 0..5 {
            let g = generate(&GeneratorSpec::Vicsek { level }).unwrap();
            assert_eq!(g.space.vertex_count() as u64, vicsek_vertex_count(level));
            assert_eq!(g.space.edge_count() as u64, 4 * 5u64.pow(level));
            assert!((g.measure.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vicsek_level_one_matches_all_pairs_oracle() {
        let g = generate(&GeneratorSpec::Vicsek { level: 1 }).unwrap();
        let s = &g.space;
        let d = floyd(s);
        let a = vertex_near(s, [0.0, 0.0]).unwrap();
        let b = vertex_near(s, [1.0, 1.0]).unwrap();
        let exact = s.distance(&TreePoint::Vertex(a), &TreePoint::Vertex(b)).unwrap();
        assert!((exact - d[a][b]).abs() < 1e-12);
        assert!((exact - 2f64.sqrt()).abs() < 1e-12);
        for u in 0..s.vertex_count() {
            for v in 0..s.vertex_count() {
                let x = s.distance(&TreePoint::Vertex(u), &TreePoint::Vertex(v)).unwrap();
                assert!((x - d[u][v]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vicsek_levels_agree_on_cell_centres() {
        let coarse = generate(&GeneratorSpec::Vicsek { level: 2 }).unwrap();
        let fine = generate(&GeneratorSpec::Vicsek { level: 3 }).unwrap();
        let centres: Vec<VertexId> =
            (0..coarse.space.vertex_count()).filter(|&v| coarse.measure.vertex_masses()[v] > 0.0).collect();
        let xy = coarse.space.coords().unwrap();
        for &u in centres.iter().step_by(3) {
            for &v in centres.iter().step_by(5) {
                let dc = coarse.space.distance(&TreePoint::Vertex(u), &TreePoint::Vertex(v)).unwrap();
                let fu = vertex_near(&fine.space, xy[u]).unwrap();
                let fv = vertex_near(&fine.space, xy[v]).unwrap();
                let df = fine.space.distance(&TreePoint::Vertex(fu), &TreePoint::Vertex(fv)).unwrap();
                assert!((dc - df).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_branching_reproduces_regular_vicsek() {
        let a = generate(&GeneratorSpec::Vicsek { level: 3 }).unwrap();
        let b = generate(&GeneratorSpec::VicsekIrregular { branching: vec![2, 2, 2] }).unwrap();
        assert_eq!(a.space.fingerprint(), b.space.fingerprint());
        assert_eq!(a.space.to_file().edges, b.space.to_file().edges);
        assert_eq!(a.measure.vertex_masses(), b.measure.vertex_masses());
        for r in [1.0 / 27.0, 1.0 / 9.0, 1.0 / 3.0] {
            assert!((a.profile.phi(r) / b.profile.phi(r) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn irregular_vicsek_counts_cells() {
        let g = generate(&GeneratorSpec::VicsekIrregular { branching: vec![3, 2] }).unwrap();
        let cells = g.measure.vertex_masses().iter().filter(|&&w| w > 0.0).count();
        assert_eq!(cells, 9 * 5);
        assert!(generate(&GeneratorSpec::VicsekIrregular { branching: vec![1] }).is_err());
    }

    #[test]
    fn uniform_binary_tree_size() {
        let g = generate(&GeneratorSpec::UniformCable { branching: 2, depth: 8, edge_length: 1.0 }).unwrap();
        assert_eq!(g.space.vertex_count(), 511);
        assert_eq!(g.profile.r0, 1.0);
    }

    #[test]
    fn carpet_is_a_uniform_local_tree() {
        let g = generate(&GeneratorSpec::SierpinskiCable { level: 2 }).unwrap();
        assert!(g.space.is_local_tree());
        assert_eq!(g.space.vertex_count(), 64);
        assert_eq!(g.space.uniformity_radius(), 1.0);
        let g1 = generate(&GeneratorSpec::SierpinskiCable { level: 1 }).unwrap();
        assert_eq!(g1.space.uniformity_radius(), 2.0);
    }

    #[test]
    fn resource_cap_is_enforced() {
        let err = generate_with_cap(&GeneratorSpec::Vicsek { level: 9 }, 1000).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }

    #[test]
    fn four_point_condition_on_generated_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in [
            GeneratorSpec::RandomTree { vertices: 60, seed: 5 },
            GeneratorSpec::Vicsek { level: 2 },
            GeneratorSpec::UniformCable { branching: 3, depth: 3, edge_length: 0.5 },
        ] {
            let s = generate(&spec).unwrap().space;
            let pts = crate::measure::sample_points(&s, 40, &mut rng);
            for _ in 0..250 {
                let q: Vec<&TreePoint> = (0..4).map(|_| &pts[rng.gen_range(0..pts.len())]).collect();
                let d = |i: usize, j: usize| s.distance(q[i], q[j]).unwrap();
                let mut sums = [d(0, 1) + d(2, 3), d(0, 2) + d(1, 3), d(0, 3) + d(1, 2)];
                sums.sort_by(f64::total_cmp);
                assert!((sums[2] - sums[1]).abs() <= 1e-12 * sums[2].max(1.0));
            }
        }
    }

    #[test]
    fn distance_function_has_unit_slope() {
        let s = generate(&GeneratorSpec::Interval { length: 1.0 }).unwrap().space;
        let f = distance_to_point(&s, &TreePoint::Vertex(0)).unwrap();
        assert!(f.slopes().iter().all(|&g| (g - 1.0).abs() < 1e-15));
        let v = generate(&GeneratorSpec::Vicsek { level: 3 }).unwrap().space;
        let f = distance_to_point(&v, &v.point(17, 0.01).unwrap()).unwrap();
        assert!(f.slopes().iter().all(|&g| (g.abs() - 1.0).abs() < 1e-9));
        let energy = crate::calculus::p_energy(&f, 1.0).unwrap().energy;
        assert!((energy - v.total_length()).abs() < 1e-12);
    }

    #[test]
    fn ramp_on_star_edge() {
        let s = generate(&GeneratorSpec::Star { arms: 3, length: 1.0 }).unwrap().space;
        let set = IndicatorSet::Segment(TreePoint::Vertex(0), TreePoint::Vertex(1));
        let f = indicator_ramp(&s, &set, 1.0).unwrap();
        // direct construction: 1 on the chosen edge, 1 - t on the others
        for (leaf, t) in [(2, 0.25), (3, 0.6)] {
            let e = s.neighbors(leaf)[0].1;
            let p = s.point(e, t).unwrap();
            let q = f.space().transfer(&s, &p).unwrap();
            assert!((f.evaluate(&q).unwrap() - (1.0 - t)).abs() < 1e-12);
        }
        let mid = f.space().transfer(&s, &s.point(0, 0.5).unwrap()).unwrap();
        assert_eq!(f.evaluate(&mid).unwrap(), 1.0);
    }

    #[test]
    fn subtree_ramp_matches_segment_ramp_on_a_leaf_edge() {
        let s = generate(&GeneratorSpec::Star { arms: 3, length: 1.0 }).unwrap().space;
        let seg = IndicatorSet::Segment(TreePoint::Vertex(0), TreePoint::Vertex(1));
        let sub = IndicatorSet::Subtree { root: TreePoint::Vertex(0), toward: TreePoint::Vertex(1) };
        let a = indicator_ramp(&s, &seg, 0.5).unwrap();
        let b = indicator_ramp(&s, &sub, 0.5).unwrap();
        assert!(a.sub(&b).unwrap().values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn random_functions_replay() {
        let s = generate(&GeneratorSpec::RandomTree { vertices: 30, seed: 2 }).unwrap().space;
        assert_eq!(random_pl(&s, 9).unwrap().values(), random_pl(&s, 9).unwrap().values());
        assert_ne!(random_pl(&s, 9).unwrap().values(), random_pl(&s, 10).unwrap().values());
    }

    #[test]
    fn projection_is_one_lipschitz_and_spans_the_segment() {
        let s = generate(&GeneratorSpec::Vicsek { level: 2 }).unwrap().space;
        let a = vertex_near(&s, [0.0, 0.0]).unwrap();
        let b = vertex_near(&s, [1.0, 1.0]).unwrap();
        let f = geodesic_projection(&s, &TreePoint::Vertex(a), &TreePoint::Vertex(b)).unwrap();
        assert!(f.slopes().iter().all(|g| g.abs() <= 1.0 + 1e-12));
        assert!((f.value(b) - 2f64.sqrt()).abs() < 1e-12);
    }
}
