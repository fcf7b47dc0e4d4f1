use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use hyperdyn::dynsys::Family;
use hyperdyn::entropy::{katok_entropy, orbit_sample, tail_entropy, topological_entropy, uniform_sample, TailConfig};
use hyperdyn::homoclinic::{
    build_homoclinic_graph, homoclinic_classes, spectral_components, GrowthBudget, ManifoldCache, ProbePlan,
};
use hyperdyn::lamination::{
    dimension_bound_check, holonomy, holonomy_refinement, sard_tangency_dimension, unstable_lamination,
    DimensionCheckConfig, SardConfig, SardModel, Transversal,
};
use hyperdyn::manifolds::{
    grow_manifold, local_manifold, render_svg, transverse_intersections, ManifoldKind, RefineTol,
};
use hyperdyn::orbits::{find_periodic, lambda_bounds, lyapunov_orbit, saddles_up_to, ORBIT_TOLERANCE};
use hyperdyn::shadowing::{build_horseshoe, endpoint_mismatch, symbolic_horseshoe, Connection, Horseshoe, HorseshoeConfig};
use hyperdyn::shift::{
    equilibrium_measure, full_shift, gurevich_entropy, mme_census, parry_measure, scc_decompose, MarkovGraph,
    PerronConfig,
};
use hyperdyn::{Error, Point, SmoothMap2D};
use serde_json::{json, Value};

use crate::args::{Command, EntropyOp, HorseshoeArgs, Kind, LaminationOp, Plan, ShiftOp};
use crate::cache::Entry;
use crate::CliError;

type Artifacts = BTreeMap<String, String>;

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("library types serialize")
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<MarkovGraph, CliError> {
    Ok(MarkovGraph::parse_edge_list(&read(path)?)?)
}

/// Edge potential from `u v phi` lines, keyed by the graph's labels.
fn load_potential(path: &Path, graph: &MarkovGraph) -> Result<BTreeMap<(usize, usize), f64>, CliError> {
    let index: BTreeMap<&str, usize> = graph.labels().iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut out = BTreeMap::new();
    for (lineno, raw) in read(path)?.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Parse(format!("potential line {}: expected `u v phi`", lineno + 1));
        let [u, v, phi] = parts.as_slice() else { return Err(bad().into()) };
        let u = *index.get(u).ok_or_else(bad)?;
        let v = *index.get(v).ok_or_else(bad)?;
        let phi: f64 = phi.parse().map_err(|_| bad())?;
        out.insert((u, v), phi);
    }
    Ok(out)
}

fn first_saddle(map: &SmoothMap2D) -> Result<hyperdyn::orbits::PeriodicOrbit, CliError> {
    find_periodic(map, 1, 16)?.into_iter().find(|o| o.is_saddle()).ok_or(CliError::Domain(Error::NotSaddle))
}

/// Homoclinic orbits of a saddle, one witness per orbit, nearest to the
/// saddle along the manifolds first.
fn homoclinic_points(map: &SmoothMap2D, saddle: &hyperdyn::orbits::PeriodicOrbit, count: usize) -> Result<Vec<Point>, CliError> {
    let orbits = [saddle.clone()];
    let cache = ManifoldCache::new(map, &orbits, GrowthBudget::default());
    let dom = map.domain();
    let mut reps: Vec<Point> = Vec::new();
    for level in 0..cache.budget().levels() {
        let u = cache.curve(0, 0, ManifoldKind::Unstable, level)?;
        let s = cache.curve(0, 0, ManifoldKind::Stable, level)?;
        let mut ws = transverse_intersections(map, &u, &s, cache.budget().sin_min).witnesses;
        ws.sort_by(|a, b| (a.params[0].abs() + a.params[1].abs()).total_cmp(&(b.params[0].abs() + b.params[1].abs())));
        for w in ws {
            let fwd = map.iterate(&w.point, 30)?.points;
            let back = map.iterate(&w.point, -30)?.points;
            let known = reps.iter().any(|r| fwd.iter().chain(&back).any(|p| dom.distance(p, r) < 1e-9));
            // The saddle itself lies on both manifolds.
            if !known && dom.distance(&w.point, &saddle.anchor()) > 1e-6 {
                reps.push(w.point);
                if reps.len() == count {
                    return Ok(reps);
                }
            }
        }
    }
    if reps.is_empty() {
        return Err(Error::NoHomoclinicConnection { from: 0, to: 0 }.into());
    }
    Ok(reps)
}

/// The fixed points with the complete graph for the affine model, the
/// homoclinic construction otherwise.
pub fn horseshoe_for(map: &SmoothMap2D, a: &HorseshoeArgs, seed: u64) -> Result<(Horseshoe, Value), CliError> {
    let base = HorseshoeConfig { samples: a.samples, sample_len: a.sample_len, seed, ..Default::default() };
    if let Family::AffineHorseshoe { .. } = map.family() {
        let vertices = vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0)];
        let hs = symbolic_horseshoe(map, vertices, full_shift(2), &base)?;
        return Ok((hs, json!({"construction": "symbolic", "graph": "full 2-shift on the fixed points"})));
    }
    let saddle = first_saddle(map)?;
    let points = homoclinic_points(map, &saddle, a.connections)?;
    let conn: Vec<Connection> = points.iter().map(|&point| Connection { from: 0, to: 0, point, offset: 0 }).collect();
    let saddles = vec![saddle];
    let mismatch = endpoint_mismatch(map, &saddles, &conn, a.m)?;
    let cfg = HorseshoeConfig { m: a.m, epsilon: a.factor * mismatch, ..base };
    let hs = build_horseshoe(map, &saddles, &conn, &cfg)?;
    Ok((
        hs,
        json!({"construction": "homoclinic", "saddle": saddles[0].anchor(), "connections": points, "endpoint_mismatch": mismatch, "epsilon": cfg.epsilon}),
    ))
}

fn horseshoe_summary(hs: &Horseshoe) -> Value {
    let comps = scc_decompose(&hs.graph.graph);
    let worst = hs.samples.iter().map(|s| s.residual).fold(0.0, f64::max);
    let distance = hs.samples.iter().map(|s| s.distance).fold(0.0, f64::max);
    json!({
        "vertices": hs.graph.len(),
        "edges": hs.graph.graph.edge_count(),
        "epsilon": hs.graph.epsilon,
        "m": hs.m,
        "components": comps.len(),
        "irreducible": comps.len() == 1 && comps[0].vertices.len() == hs.graph.len(),
        "gurevich_entropy": hs.entropy,
        "delta": hs.delta,
        "samples": hs.samples.len(),
        "max_residual": worst,
        "max_shadow_distance": distance,
        "certificate": hs.certificate,
    })
}

fn segment(v: &[f64]) -> Transversal {
    Transversal::segment(Point::new(v[0], v[1]), Point::new(v[2], v[3]))
}

pub fn execute(cmd: &Command, map: Option<&SmoothMap2D>, seed: u64) -> Result<Entry, CliError> {
    let mut art = Artifacts::new();
    let system = || map.ok_or_else(|| CliError::Usage("this command needs --system".into()));
    let result = match cmd {
        Command::Orbits { period, density } => {
            let f = system()?;
            let orbits = find_periodic(f, *period, *density)?;
            let mut csv = String::from("orbit,index,x,y\n");
            for (i, o) in orbits.iter().enumerate() {
                for (k, p) in o.points.iter().enumerate() {
                    csv += &format!("{i},{k},{:.17e},{:.17e}\n", p[0], p[1]);
                }
            }
            art.insert("orbits.csv".into(), csv);
            let saddles = orbits.iter().filter(|o| o.is_saddle()).count();
            json!({"period": period, "count": orbits.len(), "saddles": saddles, "tolerance": ORBIT_TOLERANCE, "orbits": orbits})
        }
        Command::Lyapunov { x, y, n, bound_steps, grid } => {
            let f = system()?;
            let est = lyapunov_orbit(f, &Point::new(*x, *y), *n)?;
            let bounds = lambda_bounds(f, *bound_steps, *grid)?;
            json!({"start": [x, y], "orbit": est, "uniform": bounds})
        }
        Command::Manifold { period, orbit, kind, length, density } => {
            let f = system()?;
            let orbits = find_periodic(f, *period, *density)?;
            let o = orbits
                .get(*orbit)
                .ok_or_else(|| CliError::Usage(format!("only {} orbits of period {period}", orbits.len())))?;
            let k = match kind {
                Kind::Stable => ManifoldKind::Stable,
                Kind::Unstable => ManifoldKind::Unstable,
            };
            let local = local_manifold(f, o, 0, k, 0.01, RefineTol::default())?;
            let curve = grow_manifold(f, &local, *length)?;
            art.insert("manifold.csv".into(), curve.to_csv());
            art.insert("manifold.svg".into(), render_svg(f, &[&curve], &[]));
            json!({
                "anchor": curve.anchor,
                "kind": k.symbol(),
                "direction": curve.direction,
                "rate": curve.rate,
                "points": curve.total_points(),
                "arclength": curve.arclength(),
                "branch_lengths": curve.branches.iter().map(|b| b.total_length()).collect::<Vec<_>>(),
                "refine_tol": curve.refine_tol,
            })
        }
        Command::Homoclinic { max_period, density, plan, budget } => {
            let f = system()?;
            let orbits = saddles_up_to(f, *max_period, *density)?;
            if orbits.is_empty() {
                return Err(Error::NotSaddle.into());
            }
            let growth = GrowthBudget { max: *budget, ..Default::default() };
            let cache = ManifoldCache::new(f, &orbits, growth);
            let plan = match plan {
                Plan::Hub => ProbePlan::Hub(0),
                Plan::AllPairs => ProbePlan::AllPairs,
            };
            let g = build_homoclinic_graph(&cache, plan)?;
            let mut classes = homoclinic_classes(&g);
            let mut spectral = Vec::new();
            for c in &mut classes {
                let rep = spectral_components(&cache, c.members[0], c.period)?;
                c.mixing_components = Some(rep.pieces.len());
                spectral.push(rep);
            }
            art.insert("homoclinic.dot".into(), g.to_dot());
            json!({"orbits": orbits.len(), "graph": g, "classes": classes, "spectral": spectral})
        }
        Command::Horseshoe(a) => {
            let f = system()?;
            let (hs, how) = horseshoe_for(f, a, seed)?;
            art.insert("transition.dot".into(), hs.graph.to_dot());
            art.insert("samples.csv".into(), hs.samples_csv());
            art.insert("certificate.json".into(), hs.certificate_json());
            json!({"construction": how, "horseshoe": horseshoe_summary(&hs)})
        }
        Command::Shift { op } => shift(op, &mut art)?,
        Command::Entropy { op } => entropy(system()?, op, seed, &mut art)?,
        Command::Lamination { op } => lamination(map, op, seed, &mut art)?,
        Command::Report { max_period, samples } => report(system()?, *max_period, *samples, seed, &mut art),
    };
    Ok(Entry { result, artifacts: art })
}

fn shift(op: &ShiftOp, art: &mut Artifacts) -> Result<Value, CliError> {
    let cfg = PerronConfig::default();
    let (path, potential) = match op {
        ShiftOp::Equilibrium { graph, potential } => (&graph.graph, Some(potential)),
        ShiftOp::Scc(g) | ShiftOp::Period(g) | ShiftOp::Entropy(g) | ShiftOp::Parry(g) | ShiftOp::Census(g) => {
            (&g.graph, None)
        }
    };
    let g = load_graph(path)?;
    art.insert("graph.dot".into(), g.to_dot("G"));
    let labels = g.labels().to_vec();
    let named = |vs: &[usize]| vs.iter().map(|&v| labels[v].clone()).collect::<Vec<_>>();
    Ok(match op {
        ShiftOp::Scc(_) | ShiftOp::Period(_) => {
            let comps: Vec<Value> = scc_decompose(&g)
                .into_iter()
                .map(|c| json!({"vertices": named(&c.vertices), "period": c.period}))
                .collect();
            json!({"vertices": g.len(), "edges": g.edge_count(), "components": comps})
        }
        ShiftOp::Entropy(_) => {
            let h = gurevich_entropy(&g, &cfg)?;
            json!({"value": h.value, "error_bound": h.error_bound, "method": h.method, "tolerance": cfg.tol})
        }
        ShiftOp::Parry(_) => {
            let m = parry_measure(&g, &cfg)?;
            json!({"labels": labels, "measure": m, "stationarity_defect": m.stationarity_defect(), "tolerance": cfg.tol})
        }
        ShiftOp::Equilibrium { .. } => {
            let phi = load_potential(potential.expect("equilibrium has a potential"), &g)?;
            let (pressure, m) = equilibrium_measure(&g, &|u, v| phi.get(&(u, v)).copied().unwrap_or(0.0), &cfg)?;
            let mean = m.integrate(&|u, v| phi.get(&(u, v)).copied().unwrap_or(0.0));
            json!({
                "labels": labels,
                "pressure": pressure,
                "entropy": m.entropy,
                "mean_potential": mean,
                "variational_defect": (m.entropy + mean - pressure).abs(),
                "measure": m,
                "tolerance": cfg.tol,
            })
        }
        ShiftOp::Census(_) => {
            let c = mme_census(&g, &cfg)?;
            let named_entries: Vec<Value> = c
                .entries
                .iter()
                .map(|e| json!({"vertices": named(&e.vertices), "period": e.period, "entropy": e.entropy, "error_bound": e.error_bound}))
                .collect();
            json!({"entries": named_entries, "maximizers": c.maximizers, "tie": c.tie, "gap": c.gap, "tie_tolerance": hyperdyn::shift::TIE_TOLERANCE})
        }
    })
}

fn entropy(f: &SmoothMap2D, op: &EntropyOp, seed: u64, art: &mut Artifacts) -> Result<Value, CliError> {
    let est = match op {
        EntropyOp::Top { eps, n_max, samples } => {
            let sample = uniform_sample(f, *samples, seed);
            topological_entropy(f, &sample, eps, (1, *n_max))?
        }
        EntropyOp::Katok { eps, tau, n_max, len, x, y } => {
            let orbit = orbit_sample(f, &Point::new(*x, *y), *len, 100)?;
            katok_entropy(f, &orbit, *eps, (1, *n_max), *tau)?
        }
        EntropyOp::Tail { eps, deltas, n_max, probes, ball_samples } => {
            let points = uniform_sample(f, *probes, seed);
            let cfg = TailConfig { ball_samples: *ball_samples, seed, ..Default::default() };
            tail_entropy(f, *eps, deltas, (1, *n_max), &points, &cfg)?
        }
    };
    art.insert("counts.csv".into(), est.table_csv());
    art.insert("counts.svg".into(), est.plot_svg());
    Ok(to_value(&est))
}

fn lamination(map: Option<&SmoothMap2D>, op: &LaminationOp, seed: u64, art: &mut Artifacts) -> Result<Value, CliError> {
    let system = || map.ok_or_else(|| CliError::Usage("this command needs --system".into()));
    Ok(match op {
        LaminationOp::Dim { horseshoe, radius, transversal_radius } => {
            let f = system()?;
            let (hs, how) = horseshoe_for(f, horseshoe, seed)?;
            let cfg = DimensionCheckConfig { radius: *radius, transversal_radius: *transversal_radius, ..Default::default() };
            let rep = dimension_bound_check(f, &hs, &cfg)?;
            for (i, d) in rep.dimensions.iter().enumerate() {
                if let Some(d) = d {
                    art.insert(format!("boxes-{i}.csv"), d.table_csv());
                }
            }
            json!({"construction": how, "horseshoe": horseshoe_summary(&hs), "report": rep})
        }
        LaminationOp::Holonomy { horseshoe, radius, tau, tau2, levels, angle_min } => {
            let f = system()?;
            let (hs, how) = horseshoe_for(f, horseshoe, seed)?;
            let lam = unstable_lamination(f, &hs, *radius)?;
            let (a, b) = (segment(tau), segment(tau2));
            let h = holonomy(&lam, &a, &b, *angle_min)?;
            let refinement = holonomy_refinement(&lam, &a, &b, *angle_min, *levels)?;
            art.insert("holonomy.csv".into(), h.pairs_csv());
            art.insert("lamination.svg".into(), lam.to_svg(&[&a, &b], &[]));
            json!({
                "construction": how,
                "leaves": lam.len(),
                "pairs": h.pairs.len(),
                "lipschitz": h.lipschitz,
                "inverse_lipschitz": h.inverse_lipschitz,
                "refinement": refinement,
            })
        }
        LaminationOp::Sard { r, cantor, uniform, tangency_tol } => {
            let model = SardModel::new(*r)?;
            let lam = model.lamination(*cantor, *uniform, seed);
            let tau = SardModel::transversal();
            let cfg = SardConfig { tangency_tol: *tangency_tol, ..Default::default() };
            let rep = sard_tangency_dimension(&lam, &model, &tau, *r, &cfg)?;
            art.insert("tangencies.csv".into(), rep.estimate.table_csv());
            let marks: Vec<Point> = rep.tangencies.iter().map(|t| t.point).collect();
            art.insert("tangencies.svg".into(), lam.to_svg(&[&tau], &marks));
            json!({"expected_dimension": model.expected_dimension(), "report": rep})
        }
    })
}

/// Each section either holds its values or the typed error that stopped it.
fn section<T: serde::Serialize>(r: Result<T, Error>) -> Value {
    match r {
        Ok(v) => to_value(&v),
        Err(e) => json!({"error": e.name(), "message": e.to_string()}),
    }
}

fn report(f: &SmoothMap2D, max_period: usize, samples: usize, seed: u64, art: &mut Artifacts) -> Value {
    let mut md = String::from("| period | orbits | saddles |\n|---|---|---|\n");
    let mut periodic = Vec::new();
    for p in 1..=max_period {
        let r = find_periodic(f, p, 32);
        if let Ok(os) = &r {
            let saddles = os.iter().filter(|o| o.is_saddle()).count();
            md += &format!("| {p} | {} | {saddles} |\n", os.len());
            periodic.push(json!({"period": p, "orbits": os.len(), "saddles": saddles}));
        } else {
            periodic.push(json!({"period": p, "result": section(r)}));
        }
    }
    let (lo, hi) = f.sample_region();
    let start = Point::new(lo[0] + 0.3712 * (hi[0] - lo[0]), lo[1] + 0.2919 * (hi[1] - lo[1]));
    let lyap = lyapunov_orbit(f, &start, 100_000);
    let bounds = lambda_bounds(f, 200, 16);
    let sample = uniform_sample(f, samples, seed);
    let top = topological_entropy(f, &sample, &[0.05], (1, 10));
    if let Ok(l) = &lyap {
        md += &format!("\n| quantity | value |\n|---|---|\n| χ₂ | {:.6} (drift {:.1e}) |\n", l.exponents[1], l.drift);
    }
    if let Ok(b) = &bounds {
        md += &format!("| λᵘ | {:.6} |\n| λˢ | {:.6} |\n", b.lambda_u, b.lambda_s);
    }
    if let Ok(t) = &top {
        md += &format!("| h (ε = 0.05) | {:.4} (R² {:.4}) |\n", t.value, t.regression.r_squared);
    }
    art.insert("report.md".into(), md);
    json!({
        "system": f.family().name(),
        "periodic": periodic,
        "lyapunov": section(lyap),
        "uniform": section(bounds),
        "topological_entropy": section(top),
    })
}
