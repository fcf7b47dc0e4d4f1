//! Entropy from orbits: Bowen spanning counts, topological entropy
//! regressions, the Katok formula and tail entropy.
//!
//! Every count is a pair. The upper value is the size of a greedy
//! `(ε, n)`-net of the sample, hence of an `(ε, n)`-spanning subset. The
//! lower value is the size of a greedy `(2ε, n)`-separated subset, and no
//! Bowen ball of radius `ε` can hold two of its points.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::dynsys::{Domain, Point, SmoothMap2D};
use crate::error::{Error, Result};
use crate::linalg::{linear_fit, LinearFit};
use crate::svg::Svg;

/// Counts above this fraction of the sample size are treated as saturated
/// and left out of the regressions.
pub const SATURATION: f64 = 0.1;
/// Required coefficient of determination of an entropy regression.
pub const MIN_R_SQUARED: f64 = 0.99;
/// A fit whose residuals all stay below this (in log count) is accepted
/// regardless of `R²`, which carries no information for flat data.
pub const FLAT_RESIDUAL: f64 = 0.05;
/// Fewest accepted points per Bowen ball in the tail-entropy sampler.
pub const MIN_BALL_SAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyMethod {
    SpanningUpper,
    SeparatedLower,
    Katok,
    Tail,
}

/// Upper and lower bounds on `r_f(ε, n, sample)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanningCount {
    pub upper: usize,
    pub lower: usize,
}

/// One cell of a count table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub epsilon: f64,
    pub n: usize,
    pub lower: usize,
    pub upper: usize,
}

/// Regression of `log count` against `n` at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleFit {
    pub epsilon: f64,
    pub slope: f64,
    pub r_squared: f64,
    /// Inclusive `n` window the fit used.
    pub window: (usize, usize),
    /// Slope of the lower (separated-set) counts over the same window.
    pub lower_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// Nats per iterate.
    pub value: f64,
    pub epsilon: f64,
    pub n_range: (usize, usize),
    pub method: EntropyMethod,
    pub regression: LinearFit,
    pub per_scale: Vec<ScaleFit>,
    /// Largest slope difference between consecutive scales.
    pub stabilization: f64,
    pub poor_fit: bool,
    pub table: Vec<CountRow>,
}

impl EntropyEstimate {
    pub fn table_csv(&self) -> String {
        let mut out = String::from("epsilon,n,lower,upper\n");
        for r in &self.table {
            let _ = writeln!(out, "{},{},{},{}", r.epsilon, r.n, r.lower, r.upper);
        }
        out
    }

    /// `log count` against `n`, one polyline per scale.
    pub fn plot_svg(&self) -> String {
        let n_max = self.table.iter().map(|r| r.n).max().unwrap_or(1) as f64;
        let y_max = self.table.iter().map(|r| (r.upper.max(1) as f64).ln()).fold(1.0, f64::max);
        let mut svg = Svg::new([0.0, 0.0], [n_max + 1.0, y_max * 1.05], 640.0, 400.0);
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let mut eps: Vec<f64> = self.table.iter().map(|r| r.epsilon).collect();
        eps.dedup();
        for (i, e) in eps.iter().enumerate() {
            let color = colors[i % colors.len()];
            let rows: Vec<&CountRow> = self.table.iter().filter(|r| r.epsilon == *e).collect();
            let up: Vec<[f64; 2]> = rows.iter().map(|r| [r.n as f64, (r.upper.max(1) as f64).ln()]).collect();
            let lo: Vec<[f64; 2]> = rows.iter().map(|r| [r.n as f64, (r.lower.max(1) as f64).ln()]).collect();
            svg.polyline(&up, color, 1.5);
            svg.polyline(&lo, color, 0.5);
            if let Some(last) = up.last() {
                svg.text(*last, &format!("ε={e}"));
            }
        }
        svg.text([0.2, y_max], &format!("{:?}: {:.4} nats", self.method, self.value));
        svg.finish()
    }
}

/// Uniform hash grid on the phase space with cells no smaller than `cell`.
struct Grid {
    domain: Domain,
    cell: f64,
    wrap: Option<i64>,
}

impl Grid {
    fn new(domain: Domain, cell: f64) -> Self {
        let (cell, wrap) = if domain.is_periodic() {
            let nc = ((1.0 / cell).floor() as i64).max(1);
            (1.0 / nc as f64, Some(nc))
        } else {
            (cell, None)
        };
        Self { domain, cell, wrap }
    }

    fn key(&self, p: &Point) -> (i64, i64) {
        let piece = self.domain.piece(p) as f64;
        let x = p[0] - 2.0 * piece;
        let ix = (x / self.cell).floor() as i64;
        let iy = (p[1] / self.cell).floor() as i64;
        match self.wrap {
            Some(nc) => (ix.rem_euclid(nc) + nc * piece as i64, iy.rem_euclid(nc)),
            None => (ix, iy),
        }
    }

    fn neighbors(&self, p: &Point) -> Vec<(i64, i64)> {
        let (kx, ky) = self.key(p);
        let mut keys = Vec::with_capacity(9);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let k = match self.wrap {
                    Some(nc) => {
                        let piece = kx.div_euclid(nc);
                        (piece * nc + (kx - piece * nc + dx).rem_euclid(nc), (ky + dy).rem_euclid(nc))
                    }
                    None => (kx + dx, ky + dy),
                };
                if !keys.contains(&k) {
                    keys.push(k);
                }
            }
        }
        keys
    }
}

/// Orbits `x, f(x), …, f^{len−1}(x)` of a sample, stored back to back.
struct Orbits<'a> {
    points: std::borrow::Cow<'a, [Point]>,
    /// Distance between consecutive starts in `points`.
    stride: usize,
    count: usize,
}

impl Orbits<'_> {
    fn compute(map: &SmoothMap2D, sample: &[Point], len: usize) -> Result<Orbits<'static>> {
        let rows: Vec<Vec<Point>> = sample
            .par_iter()
            .map(|x| map.iterate(x, len as i64 - 1).map(|s| s.points))
            .collect::<Result<_>>()?;
        Ok(Orbits { points: rows.concat().into(), stride: len, count: sample.len() })
    }

    /// Windows of a single long orbit: sample point `i` is `orbit[i]`.
    fn sliding(orbit: &[Point], len: usize) -> Orbits<'_> {
        let count = orbit.len().saturating_sub(len - 1);
        Orbits { points: orbit.into(), stride: 1, count }
    }

    fn at(&self, i: usize, k: usize) -> &Point {
        &self.points[i * self.stride + k]
    }
}

fn bowen_within(dom: &Domain, o: &Orbits, i: usize, j: usize, n: usize, radius: f64) -> bool {
    (0..n).all(|k| dom.distance(o.at(i, k), o.at(j, k)) < radius)
}

/// Greedy net: every point joins the first earlier center within Bowen
/// distance `radius`, or becomes a center. Returns the center list and the
/// center index of every point.
///
/// Candidates are looked up by the grid cells of both `x` and `f^{n−1}(x)`,
/// since a center within Bowen distance `radius` is close at both times.
fn greedy_net(dom: &Domain, o: &Orbits, n: usize, radius: f64) -> (Vec<usize>, Vec<usize>) {
    let grid = Grid::new(*dom, radius);
    let last = n - 1;
    let mut buckets: FxHashMap<((i64, i64), (i64, i64)), Vec<usize>> = FxHashMap::default();
    let mut centers = Vec::new();
    let mut owner = Vec::with_capacity(o.count);
    for i in 0..o.count {
        let first = grid.neighbors(o.at(i, 0));
        let end = if last == 0 { vec![(0, 0)] } else { grid.neighbors(o.at(i, last)) };
        let mut found = None;
        'search: for a in &first {
            for b in &end {
                if let Some(ids) = buckets.get(&(*a, *b)) {
                    for &c in ids {
                        if bowen_within(dom, o, i, centers[c], n, radius) {
                            found = Some(c);
                            break 'search;
                        }
                    }
                }
            }
        }
        match found {
            Some(c) => owner.push(c),
            None => {
                let key = (grid.key(o.at(i, 0)), if last == 0 { (0, 0) } else { grid.key(o.at(i, last)) });
                buckets.entry(key).or_default().push(centers.len());
                owner.push(centers.len());
                centers.push(i);
            }
        }
    }
    (centers, owner)
}

fn count_orbits(dom: &Domain, o: &Orbits, eps: f64, n: usize) -> SpanningCount {
    let (upper, lower) =
        rayon::join(|| greedy_net(dom, o, n, eps).0.len(), || greedy_net(dom, o, n, 2.0 * eps).0.len());
    SpanningCount { upper, lower }
}

/// Table rows for `n` ascending through `n_range`, stopping after the first
/// row whose upper count exceeds `limit`.
fn rows_until_saturated(
    n_range: (usize, usize),
    limit: f64,
    mut row: impl FnMut(usize) -> CountRow,
) -> Vec<CountRow> {
    let mut rows = Vec::new();
    for n in n_range.0..=n_range.1 {
        let r = row(n);
        rows.push(r);
        if r.upper as f64 > limit {
            break;
        }
    }
    rows
}

/// Bounds on the minimal cardinality of an `(ε, n)`-spanning subset of
/// `sample` in the Bowen metric `max_{0≤k<n} d(f^k x, f^k y)`.
pub fn spanning_count(map: &SmoothMap2D, sample: &[Point], eps: f64, n: usize) -> Result<SpanningCount> {
    if n == 0 {
        return Err(Error::InvalidParams("n must be at least 1".into()));
    }
    if sample.is_empty() {
        return Ok(SpanningCount { upper: 0, lower: 0 });
    }
    let o = Orbits::compute(map, sample, n)?;
    Ok(count_orbits(map.domain(), &o, eps, n))
}

/// `count` points uniform in the map's sample region, reproducible from `seed`.
pub fn uniform_sample(map: &SmoothMap2D, count: usize, seed: u64) -> Vec<Point> {
    let (lo, hi) = map.sample_region();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| map.domain().wrap(&Point::new(rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1]))))
        .collect()
}

/// The orbit of `x0` after discarding `burn` iterates.
pub fn orbit_sample(map: &SmoothMap2D, x0: &Point, len: usize, burn: usize) -> Result<Vec<Point>> {
    let start = *map.iterate(x0, burn as i64)?.points.last().expect("non-empty");
    let cap = (len as u64).max(crate::dynsys::DEFAULT_MAX_ITERATES);
    Ok(map.iterate_capped(&start, len as i64 - 1, cap)?.points)
}

fn spread(fit: &LinearFit) -> f64 {
    fit.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
}

fn acceptable(fit: &LinearFit) -> bool {
    fit.r_squared >= MIN_R_SQUARED || spread(fit) <= FLAT_RESIDUAL
}

/// The longest window of consecutive `(n, log count)` pairs, at least three
/// long, whose fit is [`acceptable`]; among equally long windows the one with
/// the smallest worst residual wins. Falls back to the whole range.
fn best_window(ns: &[usize], ys: &[f64]) -> (usize, usize, LinearFit) {
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let m = xs.len();
    let min_len = 3.min(m);
    for len in (min_len..=m).rev() {
        let mut best: Option<(usize, LinearFit)> = None;
        for a in 0..=m - len {
            let fit = linear_fit(&xs[a..a + len], &ys[a..a + len]);
            if acceptable(&fit) && best.as_ref().is_none_or(|(_, b)| spread(&fit) < spread(b)) {
                best = Some((a, fit));
            }
        }
        if let Some((a, fit)) = best {
            return (a, a + len - 1, fit);
        }
    }
    (0, m.saturating_sub(1), linear_fit(&xs, ys))
}

/// Fits one scale's table rows. `limit` is the saturation threshold.
fn fit_scale(eps: f64, rows: &[CountRow], limit: f64, pick: impl Fn(&CountRow) -> usize) -> (ScaleFit, LinearFit) {
    let usable: Vec<&CountRow> = rows.iter().filter(|r| (pick(r) as f64) <= limit).collect();
    let usable = if usable.len() >= 2 { usable } else { rows.iter().take(2.min(rows.len())).collect() };
    let ns: Vec<usize> = usable.iter().map(|r| r.n).collect();
    let ys: Vec<f64> = usable.iter().map(|r| (pick(r).max(1) as f64).ln()).collect();
    let (a, b, fit) = best_window(&ns, &ys);
    let lows: Vec<f64> = usable[a..=b].iter().map(|r| (r.lower.max(1) as f64).ln()).collect();
    let xs: Vec<f64> = ns[a..=b].iter().map(|&n| n as f64).collect();
    let lower_slope = linear_fit(&xs, &lows).slope;
    (
        ScaleFit { epsilon: eps, slope: fit.slope, r_squared: fit.r_squared, window: (ns[a], ns[b]), lower_slope },
        fit,
    )
}

fn assemble(
    method: EntropyMethod,
    scales: Vec<(ScaleFit, LinearFit)>,
    table: Vec<CountRow>,
    n_range: (usize, usize),
) -> EntropyEstimate {
    let stabilization = scales.windows(2).map(|w| (w[0].0.slope - w[1].0.slope).abs()).fold(0.0, f64::max);
    let (last, fit) = scales.last().cloned().expect("at least one scale");
    let per_scale = scales.into_iter().map(|(s, _)| s).collect();
    EntropyEstimate {
        value: last.slope,
        epsilon: last.epsilon,
        n_range,
        method,
        poor_fit: !acceptable(&fit),
        regression: fit,
        per_scale,
        stabilization,
        table,
    }
}

fn check_scales(eps_list: &[f64], n_range: (usize, usize)) -> Result<()> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParams("empty scale list".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParams("scales must be strictly decreasing".into()));
    }
    if n_range.0 == 0 || n_range.1 < n_range.0 {
        return Err(Error::InvalidParams(format!("bad n range {:?}", n_range)));
    }
    Ok(())
}

/// Slope of `log r_f(ε, n, sample)` in `n`, for each `ε` of the (strictly
/// decreasing) list. The reported value is the slope at the smallest `ε`,
/// taken over the longest window with `R² ≥ 0.99` among unsaturated counts;
/// `poor_fit` flags a failed fit. Rows of a scale stop at the first
/// saturated `n`.
pub fn topological_entropy(
    map: &SmoothMap2D,
    sample: &[Point],
    eps_list: &[f64],
    n_range: (usize, usize),
) -> Result<EntropyEstimate> {
    check_scales(eps_list, n_range)?;
    let o = Orbits::compute(map, sample, n_range.1)?;
    let dom = map.domain();
    let limit = SATURATION * sample.len() as f64;
    let per_eps: Vec<Vec<CountRow>> = eps_list
        .par_iter()
        .map(|&epsilon| {
            rows_until_saturated(n_range, limit, |n| {
                let c = count_orbits(dom, &o, epsilon, n);
                CountRow { epsilon, n, lower: c.lower, upper: c.upper }
            })
        })
        .collect();
    let scales = eps_list.iter().zip(&per_eps).map(|(&e, rows)| fit_scale(e, rows, limit, |r| r.upper)).collect();
    let table = per_eps.concat();
    Ok(assemble(EntropyMethod::SpanningUpper, scales, table, n_range))
}

/// Katok's formula along a single orbit: the number of `(ε, n)`-Bowen balls
/// needed to cover a fraction `tau` of the orbit's empirical measure.
///
/// The balls are the cells of a greedy net of the whole orbit, taken in
/// decreasing order of their mass, which is a one-sided (upper) proxy for
/// the infimum over sets of measure `tau`. The table's `lower` column holds
/// the same count for the `2ε` net.
pub fn katok_entropy(
    map: &SmoothMap2D,
    orbit: &[Point],
    eps: f64,
    n_range: (usize, usize),
    tau: f64,
) -> Result<EntropyEstimate> {
    check_scales(&[eps], n_range)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParams(format!("mass fraction {tau} outside (0, 1)")));
    }
    if orbit.len() < 10 * n_range.1 {
        return Err(Error::InvalidParams("orbit too short for the n range".into()));
    }
    let dom = map.domain();
    if let Some(step) = orbit.iter().position(|p| !dom.contains(p)) {
        return Err(Error::Escape { step: step as i64, x: orbit[step][0], y: orbit[step][1] });
    }
    let o = Orbits::sliding(orbit, n_range.1);
    let mass_count = |radius: f64, n: usize| {
        let (centers, owner) = greedy_net(dom, &o, n, radius);
        let mut mass = vec![0usize; centers.len()];
        for c in owner {
            mass[c] += 1;
        }
        mass.sort_unstable_by(|a, b| b.cmp(a));
        let need = tau * o.count as f64;
        let mut acc = 0usize;
        let mut k = 0;
        while (acc as f64) <= need && k < mass.len() {
            acc += mass[k];
            k += 1;
        }
        k
    };
    let limit = SATURATION * tau * o.count as f64;
    let table = rows_until_saturated(n_range, limit, |n| {
        let (upper, lower) = rayon::join(|| mass_count(eps, n), || mass_count(2.0 * eps, n));
        CountRow { epsilon: eps, n, upper, lower }
    });
    let scale = fit_scale(eps, &table, limit, |r| r.upper);
    Ok(assemble(EntropyMethod::Katok, vec![scale], table, n_range))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    /// Accepted points per Bowen ball.
    pub ball_samples: usize,
    /// Proposal budget per ball, as a multiple of `ball_samples`.
    pub max_tries_factor: usize,
    pub seed: u64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self { ball_samples: 1000, max_tries_factor: 400, seed: 0 }
    }
}

/// Points of `B(x, ε, n)` for `n = 1..=n_max`: the previous ball's points
/// that remain inside, topped up with proposals drawn uniformly from an
/// oriented box fitted (principal axes, padded extents) to the previous
/// ball's points. Entry `n − 1` holds the sample of `B(x, ε, n)`.
fn bowen_ball_samples(
    map: &SmoothMap2D,
    x: &Point,
    eps: f64,
    n_max: usize,
    cfg: &TailConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Point>>> {
    let dom = map.domain();
    let center = map.iterate(x, n_max as i64 - 1)?.points;
    let inside = |y: &Point, n: usize| -> bool {
        let mut cur = *y;
        for (k, c) in center.iter().take(n).enumerate() {
            if k > 0 {
                cur = map.forward(&cur);
            }
            if !dom.contains(&cur) || dom.distance(&cur, c) >= eps {
                return false;
            }
        }
        true
    };
    // Proposal box: center, two unit axes and half-widths.
    let mut axes = [Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
    let mut half = [eps, eps];
    let mut mean = *x;
    let mut out = Vec::with_capacity(n_max);
    let mut acc: Vec<Point> = Vec::with_capacity(cfg.ball_samples);
    for n in 1..=n_max {
        // B(x, ε, n) ⊂ B(x, ε, n − 1): survivors stay uniform, proposals top up.
        acc.retain(|y| inside(y, n));
        let mut tries = 0;
        while acc.len() < cfg.ball_samples && tries < cfg.max_tries_factor * cfg.ball_samples {
            tries += 1;
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            let y = mean + axes[0] * (a * half[0]) + axes[1] * (b * half[1]);
            if inside(&y, n) {
                acc.push(y);
            }
        }
        if acc.len() < MIN_BALL_SAMPLES {
            return Err(Error::SampleStarvation { accepted: acc.len(), needed: MIN_BALL_SAMPLES });
        }
        let m = acc.iter().fold(Point::zeros(), |s, p| s + p) / acc.len() as f64;
        let mut cov = crate::dynsys::Mat2::zeros();
        for p in &acc {
            let d = p - m;
            cov += d * d.transpose();
        }
        let eig = cov.symmetric_eigen();
        let new_axes = [eig.eigenvectors.column(0).into_owned(), eig.eigenvectors.column(1).into_owned()];
        for (i, ax) in new_axes.iter().enumerate() {
            let ext = acc.iter().map(|p| (p - m).dot(ax).abs()).fold(0.0, f64::max);
            half[i] = (1.5 * ext).max(1e-15);
        }
        axes = new_axes;
        mean = m;
        out.push(acc.iter().map(|p| dom.wrap(p)).collect());
    }
    Ok(out)
}

/// Tail entropy `h*(f, ε)` from `lim (1/n) log sup_x r_f(δ, n, B(x, ε, n))`,
/// with the supremum over `probes` and one fit per `δ`.
pub fn tail_entropy(
    map: &SmoothMap2D,
    eps: f64,
    deltas: &[f64],
    n_range: (usize, usize),
    probes: &[Point],
    cfg: &TailConfig,
) -> Result<EntropyEstimate> {
    check_scales(deltas, n_range)?;
    if deltas[0] >= eps {
        return Err(Error::InvalidParams("every δ must be smaller than ε".into()));
    }
    if probes.is_empty() {
        return Err(Error::InvalidParams("no probe points".into()));
    }
    let dom = map.domain();
    let per_probe: Vec<Vec<CountRow>> = probes
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let balls = bowen_ball_samples(map, x, eps, n_range.1, cfg, &mut rng)?;
            let mut rows = Vec::new();
            for &delta in deltas {
                for n in n_range.0..=n_range.1 {
                    let o = Orbits::compute(map, &balls[n - 1], n)?;
                    let c = count_orbits(dom, &o, delta, n);
                    rows.push(CountRow { epsilon: delta, n, lower: c.lower, upper: c.upper });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut table = per_probe[0].clone();
    for rows in &per_probe[1..] {
        for (t, r) in table.iter_mut().zip(rows) {
            t.upper = t.upper.max(r.upper);
            t.lower = t.lower.max(r.lower);
        }
    }
    let limit = SATURATION * cfg.ball_samples as f64;
    let scales = deltas
        .iter()
        .map(|&d| {
            let rows: Vec<CountRow> = table.iter().filter(|r| r.epsilon == d).copied().collect();
            fit_scale(d, &rows, limit, |r| r.upper)
        })
        .collect();
    let mut est = assemble(EntropyMethod::Tail, scales, table, n_range);
    est.epsilon = eps;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::models::*;

    #[test]
    fn one_point_sample_counts_one() {
        let f = cat_map();
        let c = spanning_count(&f, &[Point::new(0.3, 0.3)], 0.1, 5).unwrap();
        assert_eq!(c, SpanningCount { upper: 1, lower: 1 });
    }

    #[test]
    fn identity_count_is_independent_of_n() {
        let f = translation([0.0, 0.0]);
        let s = uniform_sample(&f, 2000, 1);
        let c1 = spanning_count(&f, &s, 0.1, 1).unwrap();
        let c9 = spanning_count(&f, &s, 0.1, 9).unwrap();
        assert_eq!(c1, c9);
    }

    #[test]
    fn grid_neighbors_wrap_on_torus() {
        let g = Grid::new(Domain::Torus, 0.3);
        assert_eq!(g.wrap, Some(3));
        let keys = g.neighbors(&Point::new(0.01, 0.99));
        assert_eq!(keys.len(), 9);
        assert!(keys.contains(&(2, 0)));
    }

    #[test]
    fn translation_has_zero_entropy() {
        let f = translation([0.3090169943749474, std::f64::consts::FRAC_1_SQRT_2]);
        let s = uniform_sample(&f, 5000, 3);
        let e = topological_entropy(&f, &s, &[0.1], (1, 10)).unwrap();
        assert!(e.value.abs() < 0.01, "{}", e.value);
    }

    #[test]
    fn periodic_orbit_has_zero_katok_entropy() {
        let f = cat_map();
        let p = [Point::new(0.2, 0.4), Point::new(0.8, 0.6)];
        let orbit: Vec<Point> = (0..5000).map(|k| p[k % 2]).collect();
        let e = katok_entropy(&f, &orbit, 0.05, (1, 8), 0.5).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn identity_tail_entropy_is_zero() {
        let f = translation([0.0, 0.0]);
        let probes = [Point::new(0.5, 0.5), Point::new(0.2, 0.7)];
        let e = tail_entropy(&f, 0.05, &[0.01], (1, 6), &probes, &TailConfig { ball_samples: 400, ..Default::default() })
            .unwrap();
        assert!(e.value.abs() < 0.01, "{}", e.value);
    }

    #[test]
    fn starvation_is_reported() {
        let f = cat_map();
        let cfg = TailConfig { ball_samples: 150, max_tries_factor: 1, seed: 0 };
        let err = tail_entropy(&f, 0.05, &[0.01], (1, 12), &[Point::new(0.5, 0.5)], &cfg).unwrap_err();
        assert!(matches!(err, Error::SampleStarvation { .. }), "{err:?}");
    }

    #[test]
    fn csv_and_svg_render() {
        let f = cat_map();
        let s = uniform_sample(&f, 500, 0);
        let e = topological_entropy(&f, &s, &[0.2, 0.1], (1, 4)).unwrap();
        assert!(e.table_csv().starts_with("epsilon,n,lower,upper\n"));
        assert_eq!(e.table_csv().lines().count(), e.table.len() + 1);
        assert!(e.plot_svg().contains("<polyline"));
    }
}
