//! Textual forms of grids, points, sets and test functions used by the flags.
//!
//! Every type round-trips through `Display`/`FromStr`, which is also how it
//! is serialized into manifests.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use treecalc::calculus::IndicatorSet;
use treecalc::generators::{coordinate, distance_to_point, geodesic_projection, indicator_ramp, random_pl, vertex_near};
use treecalc::stats::{lin_grid, log_grid};
use treecalc::{CableSystem, Error, PlFunction, Result, TreePoint};

macro_rules! serialize_as_string {
    ($($t:ty),*) => {$(
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }
    )*};
}

serialize_as_string!(Grid, PointSpec, SetSpec, FunctionSpec);

fn number<T: FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
    s.trim().parse().map_err(|_| format!("cannot read {what} from '{s}'"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Spacing {
    Log,
    Lin,
}

/// `log:a..b:n` or `lin:a..b:n`, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub spacing: Spacing,
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self.spacing {
            Spacing::Log => log_grid(self.a, self.b, self.n),
            Spacing::Lin => lin_grid(self.a, self.b, self.n),
        }
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("grid '{s}' is not of the form log:a..b:n or lin:a..b:n");
        let mut parts = s.split(':');
        let (kind, range, n) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(r), Some(n), None) => (k, r, n),
            _ => return Err(bad()),
        };
        let spacing = match kind {
            "log" => Spacing::Log,
            "lin" => Spacing::Lin,
            _ => return Err(bad()),
        };
        let (a, b) = range.split_once("..").ok_or_else(bad)?;
        let grid = Grid { spacing, a: number(a, "grid start")?, b: number(b, "grid end")?, n: number(n, "grid size")? };
        if grid.n == 0 || !grid.a.is_finite() || !grid.b.is_finite() {
            return Err(format!("grid '{s}' needs finite endpoints and n >= 1"));
        }
        if spacing == Spacing::Log && (grid.a <= 0.0 || grid.b <= 0.0) {
            return Err(format!("log grid '{s}' needs positive endpoints"));
        }
        Ok(grid)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.spacing {
            Spacing::Log => "log",
            Spacing::Lin => "lin",
        };
        write!(f, "{kind}:{}..{}:{}", self.a, self.b, self.n)
    }
}

/// A vertex label (`12`), the vertex nearest to planar coordinates
/// (`@0.5,0.5`) or a point on an edge (`e3+0.25`, offset from its first end).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointSpec {
    Label(u64),
    Near([f64; 2]),
    OnEdge { edge: usize, offset: f64 },
}

impl PointSpec {
    pub fn resolve(&self, space: &CableSystem) -> Result<TreePoint> {
        match *self {
            PointSpec::Label(l) => space
                .vertex_by_label(l)
                .map(TreePoint::Vertex)
                .ok_or_else(|| Error::input(format!("no vertex with label {l}"))),
            PointSpec::Near(xy) => vertex_near(space, xy)
                .map(TreePoint::Vertex)
                .ok_or_else(|| Error::input("the space has no coordinates to locate a point by")),
            PointSpec::OnEdge { edge, offset } => {
                if edge >= space.edge_count() {
                    return Err(Error::input(format!("no edge with index {edge}")));
                }
                space.point(edge, offset)
            }
        }
    }
}

impl FromStr for PointSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some(xy) = s.strip_prefix('@') {
            let (x, y) = xy.split_once(',').ok_or_else(|| format!("point '{s}' should read @x,y"))?;
            return Ok(PointSpec::Near([number(x, "x")?, number(y, "y")?]));
        }
        if let Some(rest) = s.strip_prefix('e') {
            let (e, off) = rest.split_once('+').ok_or_else(|| format!("point '{s}' should read eEDGE+OFFSET"))?;
            return Ok(PointSpec::OnEdge { edge: number(e, "edge index")?, offset: number(off, "offset")? });
        }
        Ok(PointSpec::Label(number(s, "vertex label")?))
    }
}

impl fmt::Display for PointSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointSpec::Label(l) => write!(f, "{l}"),
            PointSpec::Near([x, y]) => write!(f, "@{x},{y}"),
            PointSpec::OnEdge { edge, offset } => write!(f, "e{edge}+{offset}"),
        }
    }
}

/// `segment:A:B`, `subtree:ROOT:TOWARD` or `whole`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SetSpec {
    Segment(PointSpec, PointSpec),
    Subtree { root: PointSpec, toward: PointSpec },
    Whole,
}

impl SetSpec {
    pub fn resolve(&self, space: &CableSystem) -> Result<IndicatorSet> {
        Ok(match self {
            SetSpec::Segment(a, b) => IndicatorSet::Segment(a.resolve(space)?, b.resolve(space)?),
            SetSpec::Subtree { root, toward } => {
                IndicatorSet::Subtree { root: root.resolve(space)?, toward: toward.resolve(space)? }
            }
            SetSpec::Whole => IndicatorSet::Whole,
        })
    }

    /// Parses a set from the front of `parts`, leaving the rest.
    fn take(parts: &mut &[&str]) -> std::result::Result<Self, String> {
        let (set, used) = match *parts {
            ["whole", ..] => (SetSpec::Whole, 1),
            ["segment", a, b, ..] => (SetSpec::Segment(a.parse()?, b.parse()?), 3),
            ["subtree", r, t, ..] => (SetSpec::Subtree { root: r.parse()?, toward: t.parse()? }, 3),
            _ => return Err(format!("set '{}' is not segment:A:B, subtree:ROOT:TOWARD or whole", parts.join(":"))),
        };
        *parts = &parts[used..];
        Ok(set)
    }
}

impl FromStr for SetSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let all: Vec<&str> = s.split(':').collect();
        let mut parts = all.as_slice();
        let set = SetSpec::take(&mut parts)?;
        if !parts.is_empty() {
            return Err(format!("trailing '{}' after set", parts.join(":")));
        }
        Ok(set)
    }
}

impl fmt::Display for SetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetSpec::Segment(a, b) => write!(f, "segment:{a}:{b}"),
            SetSpec::Subtree { root, toward } => write!(f, "subtree:{root}:{toward}"),
            SetSpec::Whole => write!(f, "whole"),
        }
    }
}

/// Test functions: `linear` (first coordinate), `coordinate:AXIS`,
/// `constant:C`, `distance:P`, `random:SEED`, `projection:A:B` and
/// `ramp:SET:WIDTH`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FunctionSpec {
    Coordinate(usize),
    Constant(f64),
    Distance(PointSpec),
    Random(u64),
    Projection(PointSpec, PointSpec),
    Ramp(SetSpec, f64),
}

impl FunctionSpec {
    pub fn build(&self, space: &CableSystem) -> Result<PlFunction> {
        match self {
            FunctionSpec::Coordinate(axis) => coordinate(space, *axis),
            FunctionSpec::Constant(c) => Ok(PlFunction::constant(space, *c)),
            FunctionSpec::Distance(p) => distance_to_point(space, &p.resolve(space)?),
            FunctionSpec::Random(seed) => random_pl(space, *seed),
            FunctionSpec::Projection(a, b) => geodesic_projection(space, &a.resolve(space)?, &b.resolve(space)?),
            FunctionSpec::Ramp(set, width) => indicator_ramp(space, &set.resolve(space)?, *width),
        }
    }
}

impl FromStr for FunctionSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let all: Vec<&str> = s.split(':').collect();
        let f = match all.as_slice() {
            ["linear"] => FunctionSpec::Coordinate(0),
            ["coordinate", axis] => FunctionSpec::Coordinate(number(axis, "axis")?),
            ["constant", c] => FunctionSpec::Constant(number(c, "constant")?),
            ["distance", p] => FunctionSpec::Distance(p.parse()?),
            ["random", seed] => FunctionSpec::Random(number(seed, "seed")?),
            ["projection", a, b] => FunctionSpec::Projection(a.parse()?, b.parse()?),
            ["ramp", rest @ ..] if rest.len() >= 2 => {
                let mut parts = &rest[..rest.len() - 1];
                let set = SetSpec::take(&mut parts)?;
                if !parts.is_empty() {
                    return Err(format!("function '{s}' should read ramp:SET:WIDTH"));
                }
                FunctionSpec::Ramp(set, number(rest[rest.len() - 1], "ramp width")?)
            }
            _ => return Err(format!("unknown function '{s}'")),
        };
        Ok(f)
    }
}

impl fmt::Display for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionSpec::Coordinate(0) => write!(f, "linear"),
            FunctionSpec::Coordinate(axis) => write!(f, "coordinate:{axis}"),
            FunctionSpec::Constant(c) => write!(f, "constant:{c}"),
            FunctionSpec::Distance(p) => write!(f, "distance:{p}"),
            FunctionSpec::Random(seed) => write!(f, "random:{seed}"),
            FunctionSpec::Projection(a, b) => write!(f, "projection:{a}:{b}"),
            FunctionSpec::Ramp(set, width) => write!(f, "ramp:{set}:{width}"),
        }
    }
}
