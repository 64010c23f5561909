//! One function per subcommand. Each returns the bytes to write and a summary
//! for the manifest; nothing here touches the filesystem except through the
//! context's readers.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use treecalc::calculus::{bv_estimate, p_energy};
use treecalc::functionals::{
    alpha_p, besov_curve, critical_exponent_probe, heat_besov_curve, k_functional, ks_curve, nash_ratio, nash_theta,
    FunctionalCurve,
};
use treecalc::generators::{generate_with_cap, DEFAULT_VERTEX_CAP};
use treecalc::heat::{
    escape_fit, exit_time_report, harmonic_lipschitz_check, kernel_gradient_bound, off_diagonal_check,
    on_diagonal_profile, semigroup_gradient_bound, time_range, HeatOperator,
};
use treecalc::measure::{sample_points, volume_profile_fit, VolumeFitOptions};
use treecalc::partition::partition_of_unity;
use treecalc::stats;
use treecalc::tree::VertexId;
use treecalc::{CableSystem, Error, GeneratorSpec, Result, TreePoint};

use crate::error::CliResult;
use crate::inputs::Context;
use crate::output::{format_f64, json_bytes, Cell, Output};
use crate::parse::PointSpec;
use crate::*;

pub struct Produced {
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub summary: Map<String, Value>,
}

impl Produced {
    fn table(out: &Path, output: Output) -> Result<Self> {
        Ok(Produced { files: vec![(out.to_path_buf(), output.bytes_for(out)?)], summary: output.summary })
    }
}

pub fn dispatch(command: &Command, ctx: &mut Context) -> CliResult<Produced> {
    let produced = match command {
        Command::Build(a) => build(a),
        Command::Volume(a) => volume(a, ctx),
        Command::Ks(a) => ks(a, ctx),
        Command::Besov(a) => besov(a, ctx),
        Command::Critical(a) => critical(a, ctx),
        Command::PouCheck(a) => pou_check(a, ctx),
        Command::Bv(a) => bv(a, ctx),
        Command::Kfunc(a) => kfunc(a, ctx),
        Command::Nash(a) => nash(a, ctx),
        Command::HeatKernel(a) => heat_kernel(a, ctx),
        Command::HeatProfile(a) => heat_profile(a, ctx),
        Command::Escape(a) => escape(a, ctx),
        Command::ExitTime(a) => exit_time(a, ctx),
        Command::GradBound(a) => grad_bound(a, ctx),
        Command::HarmonicLip(a) => harmonic_lip(a, ctx),
        Command::GnuplotScript(a) => gnuplot(a, ctx),
        Command::Run(_) => Err(Error::input("nested run")),
    };
    Ok(produced?)
}

fn build(a: &BuildArgs) -> Result<Produced> {
    let spec = match a.kind {
        Kind::Interval => GeneratorSpec::Interval { length: a.length },
        Kind::Star => GeneratorSpec::Star { arms: a.arms, length: a.length },
        Kind::RandomTree => GeneratorSpec::RandomTree { vertices: a.vertices, seed: a.seed },
        Kind::UniformCable => GeneratorSpec::UniformCable {
            branching: a.branching[0] as usize,
            depth: a.depth,
            edge_length: a.edge_length,
        },
        Kind::Vicsek => GeneratorSpec::Vicsek { level: a.level },
        Kind::VicsekIrregular => GeneratorSpec::VicsekIrregular { branching: a.branching.clone() },
        Kind::SierpinskiCable => GeneratorSpec::SierpinskiCable { level: a.level },
    };
    let g = generate_with_cap(&spec, a.max_vertices.unwrap_or(DEFAULT_VERTEX_CAP))?;
    let measure = serde_json::to_value(g.measure.to_file())?;
    let mut summary = Map::new();
    summary.insert("generator".into(), serde_json::to_value(&spec)?);
    summary.insert("vertices".into(), g.space.vertex_count().into());
    summary.insert("edges".into(), g.space.edge_count().into());
    summary.insert("total_length".into(), g.space.total_length().into());
    summary.insert("total_mass".into(), g.measure.total_mass().into());
    summary.insert("profile".into(), serde_json::to_value(&g.profile)?);
    Ok(Produced {
        files: vec![(a.out[0].clone(), json_bytes(&g.space.to_json())?), (a.out[1].clone(), json_bytes(&measure)?)],
        summary,
    })
}

fn volume(a: &VolumeArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, m) = ctx.space(&a.space)?;
    let opts = VolumeFitOptions { centers: a.centers, seed: a.seed, ratio_bound: a.ratio_bound };
    let fit = volume_profile_fit(&space, &m, &a.rgrid.values(), &opts)?;
    let mut out = Output::new(&["r", "min_mass", "median_mass", "max_mass", "phi_r"]);
    for row in &fit.rows {
        out.row(vec![row.r.into(), row.min_mass.into(), row.median_mass.into(), row.max_mass.into(), row.phi_r.into()]);
    }
    out.note("d_h", fit.d_h)?;
    out.note("r2", fit.r2)?;
    out.note("violation", fit.violation)?;
    out.note("profile", &fit.profile)?;
    Produced::table(&a.out, out)
}

/// Rows `(param, value)` with the parameter increasing.
fn curve_rows(name: &'static str, curve: &FunctionalCurve) -> Output {
    let mut out = Output::new(&[name, "value"]);
    let mut pairs: Vec<(f64, f64)> = curve.params.iter().copied().zip(curve.values.iter().copied()).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    for (param, value) in pairs {
        out.row(vec![param.into(), value.into()]);
    }
    out
}

fn ks(a: &KsArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, m) = ctx.space(&a.space)?;
    let profile = ctx.profile(&a.profile, &space)?;
    let f = ctx.function(&a.f, &space)?;
    let curve = ks_curve(&f, &m, &profile, &a.rgrid.values(), a.p)?;
    let mut out = curve_rows("r", &curve);
    out.note("p", a.p)?;
    out.note("sup", curve.sup())?;
    out.note("liminf", curve.liminf())?;
    out.note("energy", p_energy(&f, a.p)?.energy)?;
    Produced::table(&a.out, out)
}

fn besov(a: &BesovArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, m) = ctx.space(&a.space)?;
    let f = ctx.function(&a.f, &space)?;
    let mut out = if a.heat {
        let profile = ctx.profile(&a.profile, &space)?;
        let op = ctx.operator(&a.assembly, &space, &m)?;
        let times = a.tgrid.as_ref().ok_or_else(|| Error::input("--heat needs --tgrid"))?.values();
        let curve = heat_besov_curve(&op, &profile, &f, &times, a.p)?;
        let mut out = curve_rows("t", &curve);
        out.note("time_range", time_range(&op, &profile))?;
        out
    } else {
        let alpha = match a.alpha {
            Some(alpha) => alpha,
            None => alpha_p(a.p, ctx.profile(&a.profile, &space)?.d_h()),
        };
        let radii = a.rgrid.as_ref().ok_or_else(|| Error::input("give --rgrid, or --heat with --tgrid"))?.values();
        let curve = besov_curve(&f, &m, &radii, a.p, alpha)?;
        let mut out = curve_rows("r", &curve);
        out.note("alpha", alpha)?;
        out.note("sup", curve.sup())?;
        out
    };
    out.note("p", a.p)?;
    Produced::table(&a.out, out)
}

fn critical(a: &CriticalArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, m) = ctx.space(&a.space)?;
    let f = ctx.function(&a.f, &space)?;
    let report = critical_exponent_probe(&f, &m, a.p, &a.agrid.values(), &a.rgrid.values())?;
    let mut out = Output::new(&["alpha", "bounded"]);
    for &(alpha, ok) in &report.passed {
        out.row(vec![alpha.into(), ok.into()]);
    }
    out.note("p", report.p)?;
    out.note("alpha", report.alpha)?;
    out.note("slope", report.slope)?;
    out.note("slope_tol", report.slope_tol)?;
    out.note("degenerate", report.degenerate)?;
    Produced::table(&a.out, out)
}

#[derive(Clone, Copy)]
struct PouSample {
    sum_deviation: f64,
    range_ok: bool,
    support_ok: bool,
    overlap_ok: bool,
}

fn pou_check(a: &PouArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, _) = ctx.space(&a.space)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let samples = sample_points(&space, a.samples, &mut rng);
    let mut out = Output::new(&[
        "eps",
        "p",
        "centers",
        "overlap",
        "max_energy_scaled",
        "sum_deviation",
        "range_ok",
        "support_ok",
        "overlap_ok",
    ]);
    let mut all_ok = true;
    for &eps in &a.eps {
        let pou = partition_of_unity(&space, eps)?;
        let ps = pou.space().clone();
        let members: Vec<_> = (0..pou.len()).map(|i| pou.member(i)).collect();
        let checked: Vec<PouSample> = samples
            .par_iter()
            .map(|y| -> Result<PouSample> {
                let yp = ps.transfer(&space, y)?;
                let (mut total, mut covering) = (0.0, 0usize);
                let (mut range_ok, mut support_ok) = (true, true);
                for (phi, c) in members.iter().zip(&pou.centers) {
                    let v = phi.evaluate(&yp)?;
                    range_ok &= (-1e-10..=1.0 + 1e-10).contains(&v);
                    if v > 1e-12 {
                        covering += 1;
                        support_ok &= ps.distance(&yp, c)? <= 4.0 * eps * (1.0 + 1e-9);
                    }
                    total += v;
                }
                Ok(PouSample { sum_deviation: (total - 1.0).abs(), range_ok, support_ok, overlap_ok: covering <= pou.overlap })
            })
            .collect::<Result<_>>()?;
        let fold = checked.iter().fold(
            PouSample { sum_deviation: 0.0, range_ok: true, support_ok: true, overlap_ok: true },
            |acc, s| PouSample {
                sum_deviation: acc.sum_deviation.max(s.sum_deviation),
                range_ok: acc.range_ok && s.range_ok,
                support_ok: acc.support_ok && s.support_ok,
                overlap_ok: acc.overlap_ok && s.overlap_ok,
            },
        );
        all_ok &= fold.sum_deviation <= 1e-10 && fold.range_ok && fold.support_ok && fold.overlap_ok;
        for &p in &a.p {
            out.row(vec![
                eps.into(),
                p.into(),
                pou.len().into(),
                pou.overlap.into(),
                pou.max_energy_scaled(p).into(),
                fold.sum_deviation.into(),
                fold.range_ok.into(),
                fold.support_ok.into(),
                fold.overlap_ok.into(),
            ]);
        }
    }
    out.note("samples", a.samples)?;
    out.note("clauses_hold", all_ok)?;
    Produced::table(&a.out, out)
}

fn bv(a: &BvArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, _) = ctx.space(&a.space)?;
    let set = a.set.resolve(&space)?;
    let report = bv_estimate(&space, &set, &a.widths.values())?;
    let mut out = Output::new(&["width", "energy"]);
    for &(w, e) in &report.per_width {
        out.row(vec![w.into(), e.into()]);
    }
    out.note("estimate", report.estimate)?;
    out.note("best_width", report.best_width)?;
    out.note("combinatorial", report.combinatorial)?;
    Produced::table(&a.out, out)
}

fn kfunc(a: &KfuncArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, m) = ctx.space(&a.space)?;
    let profile = ctx.profile(&a.profile, &space)?;
    let f = ctx.function(&a.f, &space)?;
    let eps = a.eps_grid.values();
    let mut out = Output::new(&["t", "upper", "lower", "ratio", "best_eps"]);
    let mut ratios = Vec::new();
    for t in a.tgrid.values() {
        let k = k_functional(&f, &m, &profile, t, a.p, &eps)?;
        ratios.push(k.ratio());
        out.row(vec![t.into(), k.upper.into(), k.lower.into(), k.ratio().into(), k.best_epsilon.into()]);
    }
    out.note("p", a.p)?;
    out.note("ratio_spread", stats::spread(&ratios))?;
    Produced::table(&a.out, out)
}

fn nash(a: &NashArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, m) = ctx.space(&a.space)?;
    let d_h = ctx.profile(&a.profile, &space)?.d_h();
    let mut out = Output::new(&["function", "ratio"]);
    let mut ratios = Vec::new();
    for spec in &a.f {
        let r = nash_ratio(&spec.build(&space)?, &m, a.p, d_h)?;
        ratios.push(r);
        out.row(vec![spec.to_string().into(), r.into()]);
    }
    out.note("p", a.p)?;
    out.note("d_h", d_h)?;
    out.note("theta", nash_theta(a.p, d_h))?;
    out.note("sup", stats::max(&ratios))?;
    out.note("median", stats::median(&ratios))?;
    Produced::table(&a.out, out)
}

/// Vertex of the assembly mesh; coordinates are matched on the mesh itself so
/// that refinement can resolve them.
fn locate(op: &HeatOperator, space: &CableSystem, p: &PointSpec) -> Result<VertexId> {
    match p {
        PointSpec::Near(_) => match p.resolve(op.space())? {
            TreePoint::Vertex(v) => Ok(v),
            _ => unreachable!("coordinates resolve to vertices"),
        },
        _ => op.locate(space, &p.resolve(space)?),
    }
}

fn label(op: &HeatOperator, v: VertexId) -> Cell {
    op.space().label(v).into()
}

const PAIR_ATTEMPTS: usize = 1000;

/// Uniform pairs of degrees of freedom at distance at most `r_max`.
fn random_pairs(op: &HeatOperator, n: usize, r_max: f64, seed: u64) -> Result<Vec<(VertexId, VertexId)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dof = op.dof_vertices();
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..PAIR_ATTEMPTS * n.max(1) {
        if pairs.len() == n {
            break;
        }
        let (x, y) = (dof[rng.gen_range(0..dof.len())], dof[rng.gen_range(0..dof.len())]);
        if op.space().distance(&TreePoint::Vertex(x), &TreePoint::Vertex(y))? <= r_max {
            pairs.push((x, y));
        }
    }
    if pairs.len() < n {
        return Err(Error::domain(format!("found only {} of {n} pairs within distance {r_max}", pairs.len())));
    }
    Ok(pairs)
}

fn heat_kernel(a: &HeatKernelArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, m) = ctx.space(&a.space)?;
    let profile = ctx.profile(&a.profile, &space)?;
    let op = ctx.operator(&a.assembly, &space, &m)?;
    let mut pairs = Vec::new();
    if let Some(x) = &a.x {
        let xv = locate(&op, &space, x)?;
        for y in &a.y {
            pairs.push((xv, locate(&op, &space, y)?));
        }
    }
    pairs.extend(random_pairs(&op, a.random_pairs, profile.r0 / 2.0, a.seed)?);
    if pairs.is_empty() {
        return Err(Error::input("give --x with --y, or --random-pairs"));
    }
    let times = a.tgrid.values();
    let mut out = Output::new(&["t", "x", "y", "p_t"]);
    for &(x, y) in &pairs {
        for &t in &times {
            out.row(vec![t.into(), label(&op, x), label(&op, y), op.kernel(t, x, y)?.into()]);
        }
    }
    out.note("time_range", time_range(&op, &profile))?;
    if a.fit {
        out.note("fit", off_diagonal_check(&op, &profile, &pairs, &times)?)?;
    }
    Produced::table(&a.out, out)
}

fn heat_profile(a: &HeatProfileArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, m) = ctx.space(&a.space)?;
    let profile = ctx.profile(&a.profile, &space)?;
    let op = ctx.operator(&a.assembly, &space, &m)?;
    let x = locate(&op, &space, &a.x)?;
    let fit = on_diagonal_profile(&op, &profile, x, &a.tgrid.values())?;
    let mut out = Output::new(&["t", "p_t_xx"]);
    for (&t, &v) in fit.t.iter().zip(&fit.values) {
        out.row(vec![t.into(), v.into()]);
    }
    let d_h = profile.d_h();
    out.note("x", op.space().label(x))?;
    out.note("slope", fit.slope)?;
    out.note("r2", fit.r2)?;
    out.note("predicted_slope", -d_h / (1.0 + d_h))?;
    out.note("time_range", time_range(&op, &profile))?;
    Produced::table(&a.out, out)
}

fn escape(a: &EscapeArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, m) = ctx.space(&a.space)?;
    let profile = ctx.profile(&a.profile, &space)?;
    let op = ctx.operator(&a.assembly, &space, &m)?;
    let x = locate(&op, &space, &a.x)?;
    let report = escape_fit(&op, &profile, x, &a.radii, &a.tgrid.values())?;
    let mut out = Output::new(&["r", "t", "escape", "abscissa"]);
    for row in &report.rows {
        out.row(vec![row.r.into(), row.t.into(), row.value.into(), row.abscissa.into()]);
    }
    out.note("fit", report.fit)?;
    out.note("monotone", report.monotone)?;
    Produced::table(&a.out, out)
}

fn exit_time(a: &ExitTimeArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, m) = ctx.space(&a.space)?;
    let profile = ctx.profile(&a.profile, &space)?;
    let op = ctx.operator(&a.assembly, &space, &m)?;
    let mut out = Output::new(&["x", "r", "exit_time", "psi2", "ratio", "touches_leaf"]);
    let mut ratios = Vec::new();
    for x in &a.x {
        let v = locate(&op, &space, x)?;
        for &r in &a.radii {
            let e = exit_time_report(&op, &profile, v, r)?;
            ratios.push(e.ratio);
            out.row(vec![label(&op, v), r.into(), e.value.into(), e.psi2.into(), e.ratio.into(), e.touches_leaf.into()]);
        }
    }
    out.note("constant", stats::max(&ratios).max(1.0 / stats::min(&ratios)))?;
    Produced::table(&a.out, out)
}

fn grad_bound(a: &GradArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, m) = ctx.space(&a.space)?;
    let profile = ctx.profile(&a.profile, &space)?;
    let times = a.tgrid.values();
    if let Some(at) = &a.kernel_at {
        let op = ctx.operator(&a.assembly, &space, &m)?;
        let x = locate(&op, &space, at)?;
        let c2 = a.c2.ok_or_else(|| Error::input("--kernel-at needs --c2"))?;
        let mut out = Output::new(&["t", "max_ratio", "max_slope"]);
        let mut ratios = Vec::new();
        for &t in &times {
            let g = kernel_gradient_bound(&op, &profile, x, t, c2)?;
            ratios.push(g.max_ratio);
            out.row(vec![t.into(), g.max_ratio.into(), g.max_slope.into()]);
        }
        out.note("stability", stats::spread(&ratios))?;
        return Produced::table(&a.out, out);
    }
    let f = ctx.function(&a.f, &space)?;
    let op = ctx.operator(&a.assembly, &space, &m)?;
    let mut out = Output::new(&[
        "p",
        "t",
        "grad_norm",
        "envelope",
        "ratio",
        "generator_norm",
        "generator_envelope",
        "generator_ratio",
        "spectral_energy",
        "spectral_bound",
    ]);
    let mut stability = Map::new();
    for &p in &a.p {
        let table = semigroup_gradient_bound(&op, &profile, &f, p, &times)?;
        for r in &table.rows {
            out.row(vec![
                p.into(),
                r.t.into(),
                r.grad_norm.into(),
                r.envelope.into(),
                r.ratio.into(),
                r.generator_norm.into(),
                r.generator_envelope.into(),
                r.generator_ratio.into(),
                r.spectral_energy.into(),
                r.spectral_bound.into(),
            ]);
        }
        stability.insert(format_f64(p), table.stability.into());
    }
    out.note("stability", stability)?;
    Produced::table(&a.out, out)
}

fn harmonic_lip(a: &HarmonicArgs, ctx: &mut Context) -> Result<Produced> {
    let (space, m) = ctx.space(&a.space)?;
    let op = ctx.operator(&a.assembly, &space, &m)?;
    let x = locate(&op, &space, &a.x)?;
    let mut out = Output::new(&["r", "constant", "max_lipschitz", "min_average"]);
    let mut constants = Vec::new();
    for &r in &a.radii {
        let h = harmonic_lipschitz_check(&op, x, r, a.dilation, a.draws, a.seed)?;
        constants.push(h.constant);
        out.row(vec![r.into(), h.constant.into(), stats::max(&h.lipschitz).into(), stats::min(&h.average).into()]);
    }
    out.note("x", op.space().label(x))?;
    out.note("max_constant", stats::max(&constants))?;
    Produced::table(&a.out, out)
}

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn gnuplot(a: &GnuplotArgs, ctx: &mut Context) -> Result<Produced> {
    let mut script = String::from("set datafile separator \",\"\nset key autotitle columnhead\n");
    if a.logx {
        script.push_str("set logscale x\n");
    }
    if a.logy {
        script.push_str("set logscale y\n");
    }
    let mut plots = 0usize;
    for (k, path) in a.csv.iter().enumerate() {
        let bytes = ctx.read(path)?;
        let mut reader = csv::Reader::from_reader(bytes.as_slice());
        let bad = |e: csv::Error| Error::input(format!("{}: {e}", path.display()));
        let header: Vec<String> = reader.headers().map_err(bad)?.iter().map(String::from).collect();
        let first = reader.records().next().transpose().map_err(bad)?;
        let numeric = |i: usize| first.as_ref().is_some_and(|r| r.get(i).is_some_and(|v| v.parse::<f64>().is_ok()));
        let columns: Vec<usize> = (1..header.len()).filter(|&i| numeric(i)).collect();
        if header.is_empty() || columns.is_empty() || !numeric(0) {
            return Err(Error::input(format!("{} has no numeric columns to plot", path.display())));
        }
        if k > 0 {
            script.push_str("pause -1 \"next plot\"\n");
        }
        let name = quoted(&path.display().to_string());
        script.push_str(&format!("set title {name} noenhanced\nset xlabel {} noenhanced\n", quoted(&header[0])));
        let curves: Vec<String> = columns
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let file = if j == 0 { name.clone() } else { "\"\"".into() };
                format!("{file} using 1:{} with linespoints", c + 1)
            })
            .collect();
        script.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
        plots += 1;
    }
    let mut summary = Map::new();
    summary.insert("plots".into(), json!(plots));
    Ok(Produced { files: vec![(a.out.clone(), script.into_bytes())], summary })
}
