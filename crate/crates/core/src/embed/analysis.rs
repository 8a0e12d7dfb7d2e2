use std::fmt::Write as _;

use rayon::prelude::*;

use super::{EmbedError, Embedding, MetricEmbedding, Result};
use crate::space::FiniteSpace;
use crate::util::{fmt_g17, ls_slope};

/// Slack below which an audited inequality counts as violated.
pub const AUDIT_TOL: f64 = 1e-9;

/// Minimum number of positive profile points for [`empirical_rate`].
const RATE_MIN_POINTS: usize = 8;

/// One unordered pair with its original and embedded distances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairRecord {
    pub x: u32,
    pub y: u32,
    pub d: f64,
    pub e: f64,
}

/// All pairs `x < y`, sorted by original distance (ties in point order).
pub fn pair_table<E: MetricEmbedding + ?Sized>(space: &FiniteSpace, emb: &E) -> Vec<PairRecord> {
    let n = space.len();
    let mut table: Vec<PairRecord> = (0..n)
        .into_par_iter()
        .flat_map_iter(|x| {
            (x + 1..n).map(move |y| PairRecord {
                x: x as u32,
                y: y as u32,
                d: space.d(x, y),
                e: emb.dist(x, y),
            })
        })
        .collect();
    table.sort_by(|a, b| a.d.total_cmp(&b.d));
    table
}

/// Sampled monotone function `t ↦ value`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Profile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl Profile {
    /// Two whitespace-separated columns, one sample per line.
    pub fn to_plot_data(&self) -> String {
        let mut out = String::new();
        for (t, v) in self.grid.iter().zip(&self.values) {
            let _ = writeln!(out, "{} {}", fmt_g17(*t), fmt_g17(*v));
        }
        out
    }

    pub fn value_at(&self, t: f64) -> Option<f64> {
        self.grid.iter().position(|&g| g == t).map(|i| self.values[i])
    }
}

/// Groups of equal `d` in a sorted table, as index ranges.
fn distance_groups(table: &[PairRecord]) -> Vec<(f64, std::ops::Range<usize>)> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=table.len() {
        if i == table.len() || table[i].d != table[start].d {
            groups.push((table[start].d, start..i));
            start = i;
        }
    }
    groups
}

/// `ρ(t) = min_{d(x,y) >= t} ‖F(x) - F(y)‖` at every distinct distance.
fn compression_from(table: &[PairRecord]) -> Profile {
    let groups = distance_groups(table);
    let mut values = vec![0.0; groups.len()];
    let mut running = f64::INFINITY;
    for (i, (_, range)) in groups.iter().enumerate().rev() {
        running = table[range.clone()].iter().fold(running, |m, r| m.min(r.e));
        values[i] = running;
    }
    Profile {
        grid: groups.iter().map(|g| g.0).collect(),
        values,
    }
}

/// `δ(t) = max_{d(x,y) <= t} ‖F(x) - F(y)‖` at every distinct distance.
fn dilation_from(table: &[PairRecord]) -> Profile {
    let groups = distance_groups(table);
    let mut running = 0.0f64;
    let values = groups
        .iter()
        .map(|(_, range)| {
            running = table[range.clone()].iter().fold(running, |m, r| m.max(r.e));
            running
        })
        .collect();
    Profile {
        grid: groups.iter().map(|g| g.0).collect(),
        values,
    }
}

pub fn compression<E: MetricEmbedding + ?Sized>(space: &FiniteSpace, emb: &E) -> Profile {
    compression_from(&pair_table(space, emb))
}

/// Dilation profile and its least large-scale Lipschitz envelope.
pub fn dilation<E: MetricEmbedding + ?Sized>(space: &FiniteSpace, emb: &E) -> (Profile, LinearFit) {
    let delta = dilation_from(&pair_table(space, emb));
    let fit = fit_large_scale_lipschitz(&delta);
    (delta, fit)
}

/// `δ(t) <= a t + b` on the whole grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub a: f64,
    pub b: f64,
}

/// Least `a + b` over `a, b >= 0` with `δ(t) <= a t + b` at every grid point.
///
/// With `g(a) = max_i (δ_i - a t_i)` the optimal `b` is `max(0, g(a))`, and
/// `a + max(0, g(a))` is convex and piecewise linear. Its breakpoints are the
/// edge slopes of the upper convex hull of the points `(t_i, δ_i)` and the
/// root `a = max_i δ_i / t_i`, so evaluating those candidates is exact.
pub fn fit_large_scale_lipschitz(delta: &Profile) -> LinearFit {
    let pts: Vec<(f64, f64)> = delta
        .grid
        .iter()
        .zip(&delta.values)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.is_empty() {
        return LinearFit { a: 0.0, b: 0.0 };
    }
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &pt in &pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop `a` unless it lies strictly above the chord o -> pt
            let cross = (a.0 - o.0) * (pt.1 - o.1) - (a.1 - o.1) * (pt.0 - o.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }
    let g = |a: f64| hull.iter().map(|&(t, v)| v - a * t).fold(f64::NEG_INFINITY, f64::max);
    let mut candidates = vec![0.0, pts.iter().map(|&(t, v)| v / t).fold(0.0, f64::max)];
    candidates.extend(
        hull.windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .filter(|&s| s > 0.0),
    );
    let mut best = LinearFit { a: 0.0, b: f64::INFINITY };
    for a in candidates {
        let b = g(a).max(0.0);
        if a + b < best.a + best.b || (a + b == best.a + best.b && a < best.a) {
            best = LinearFit { a, b };
        }
    }
    best
}

/// `θ(t) = exp(|log(ρ(t)/t)| + |log(δ(t)/t)|)` where both profiles are
/// positive.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ThetaProfile {
    pub profile: Profile,
    /// Grid points where `ρ` or `δ` vanishes.
    pub skipped: Vec<f64>,
}

pub fn theta_profile(rho: &Profile, delta: &Profile) -> ThetaProfile {
    let mut out = ThetaProfile::default();
    for ((&t, &r), &d) in rho.grid.iter().zip(&rho.values).zip(&delta.values) {
        if r > 0.0 && d > 0.0 && t > 0.0 {
            out.profile.grid.push(t);
            out.profile.values.push(((r / t).ln().abs() + (d / t).ln().abs()).exp());
        } else {
            out.skipped.push(t);
        }
    }
    out
}

fn stretch_from(table: &[PairRecord]) -> std::result::Result<(f64, f64), (usize, usize)> {
    let mut expansion = 0.0f64;
    let mut contraction = 0.0f64;
    for r in table {
        if r.e == 0.0 {
            return Err((r.x as usize, r.y as usize));
        }
        expansion = expansion.max(r.e / r.d);
        contraction = contraction.max(r.d / r.e);
    }
    Ok((expansion, contraction))
}

/// `max ‖ΔF‖/d × max d/‖ΔF‖` over all pairs.
pub fn distortion<E: MetricEmbedding + ?Sized>(space: &FiniteSpace, emb: &E) -> Result<f64> {
    let (exp, con) = stretch_from(&pair_table(space, emb)).map_err(|(x, y)| EmbedError::Degenerate { x, y })?;
    Ok(exp * con)
}

/// Least-squares slope of `log ρ` against `log t` over the upper half of the
/// positive samples: a desk-scale exponent estimate, not an asymptotic rate.
pub fn empirical_rate(profile: &Profile) -> Result<f64> {
    let pts: Vec<(f64, f64)> = profile
        .grid
        .iter()
        .zip(&profile.values)
        .filter(|(&t, &v)| t > 0.0 && v > 0.0)
        .map(|(&t, &v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < RATE_MIN_POINTS {
        return Err(EmbedError::InsufficientData {
            need: RATE_MIN_POINTS,
            have: pts.len(),
        });
    }
    let top = &pts[pts.len() / 2..];
    let xs: Vec<f64> = top.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = top.iter().map(|p| p.1).collect();
    Ok(ls_slope(&xs, &ys))
}

/// Everything measured from one pass over the pairs.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub compression: Profile,
    pub dilation: Profile,
    pub fit: LinearFit,
    pub theta: ThetaProfile,
    pub expansion: f64,
    pub contraction: f64,
    /// `None` if two points collide.
    pub distortion: Option<f64>,
    pub table: Vec<PairRecord>,
}

pub fn analyze<E: MetricEmbedding + ?Sized>(space: &FiniteSpace, emb: &E) -> Analysis {
    let table = pair_table(space, emb);
    let compression = compression_from(&table);
    let dilation = dilation_from(&table);
    let fit = fit_large_scale_lipschitz(&dilation);
    let theta = theta_profile(&compression, &dilation);
    let (expansion, contraction, distortion) = match stretch_from(&table) {
        Ok((e, c)) => (e, c, Some(e * c)),
        Err(_) => (
            table.iter().map(|r| r.e / r.d).fold(0.0, f64::max),
            f64::INFINITY,
            None,
        ),
    };
    Analysis {
        compression,
        dilation,
        fit,
        theta,
        expansion,
        contraction,
        distortion,
        table,
    }
}

impl Analysis {
    /// CSV with columns `t,rho,delta,theta`; `theta` is empty where skipped.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,rho,delta,theta\n");
        for (i, &t) in self.compression.grid.iter().enumerate() {
            let theta = self.theta.profile.value_at(t).map(fmt_g17).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_g17(t),
                fmt_g17(self.compression.values[i]),
                fmt_g17(self.dilation.values[i]),
                theta
            );
        }
        out
    }
}

/// Tally of one audited inequality over all pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditCheck {
    pub name: &'static str,
    pub checked: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` seen; `+∞` if nothing was checked.
    pub min_slack: f64,
    pub worst_pair: Option<(usize, usize)>,
}

impl AuditCheck {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checked: 0,
            violations: 0,
            min_slack: f64::INFINITY,
            worst_pair: None,
        }
    }

    fn record(&mut self, slack: f64, x: u32, y: u32) {
        self.checked += 1;
        if slack < -AUDIT_TOL {
            self.violations += 1;
        }
        if slack < self.min_slack {
            self.min_slack = slack;
            self.worst_pair = Some((x as usize, y as usize));
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// The two inequalities every dyadic embedding satisfies by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingAudit {
    /// `‖F(x)-F(y)‖ >= 2^{1/p} w_k J(2^k)` whenever `d(x,y) > 2·2^k`.
    pub disjoint_support: AuditCheck,
    /// `‖F(x)-F(y)‖ <= d(x,y) (Σ_k w_k^p)^{1/p}`.
    pub lipschitz: AuditCheck,
    pub lipschitz_sum: f64,
}

impl EmbeddingAudit {
    pub fn passed(&self) -> bool {
        self.disjoint_support.passed() && self.lipschitz.passed()
    }
}

/// Largest disjoint-support lower bound applying to a pair at distance `d`.
fn support_lower_bound(emb: &Embedding, d: f64) -> Option<f64> {
    let c = 2f64.powf(1.0 / emb.p());
    emb.ks()
        .iter()
        .enumerate()
        .filter(|&(_, &k)| d > 2.0 * (1u64 << k) as f64)
        .map(|(i, _)| c * emb.weights()[i] * emb.profile()[i])
        .reduce(f64::max)
}

/// Checks both construction inequalities on every pair of `table`.
pub fn audit(emb: &Embedding, table: &[PairRecord]) -> EmbeddingAudit {
    let lipschitz_sum = emb.lipschitz_sum();
    let mut disjoint_support = AuditCheck::new("disjoint_support");
    let mut lipschitz = AuditCheck::new("lipschitz");
    for r in table {
        if let Some(lb) = support_lower_bound(emb, r.d) {
            disjoint_support.record(r.e - lb, r.x, r.y);
        }
        lipschitz.record(r.d * lipschitz_sum - r.e, r.x, r.y);
    }
    EmbeddingAudit {
        disjoint_support,
        lipschitz,
        lipschitz_sum,
    }
}

/// Distortion bound of the dyadic embedding in the discrete form of its
/// proof: expansion at most `(Σ_k w_k^p)^{1/p}`, and every pair embedded at
/// least its disjoint-support lower bound.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionBound {
    /// `(Σ_k w_k^p)^{1/p}`.
    pub lipschitz_sum: f64,
    /// `max d(x,y) / LB(x,y)` with `LB` the disjoint-support bound, or for
    /// pairs too close for any block (`d <= 2`) the largest single block
    /// norm actually computed.
    pub contraction_bound: f64,
    /// `lipschitz_sum × contraction_bound`.
    pub bound: f64,
    pub measured: f64,
    /// `Σ_k (2^k/J(2^k))^p` over the blocks.
    pub dyadic_sum: f64,
    /// `2 (∫_1^{Diam/4} (t/J(t))^p dt/t)^{1/p}`, with the integral taken by
    /// the trapezoid rule in `log t` over dyadic samples.
    pub integral_form: f64,
}

impl DistortionBound {
    pub fn holds(&self) -> bool {
        self.measured <= self.bound * (1.0 + AUDIT_TOL)
    }
}

pub fn distortion_bound(space: &FiniteSpace, emb: &Embedding, table: &[PairRecord]) -> Result<DistortionBound> {
    let (exp, con) = stretch_from(table).map_err(|(x, y)| EmbedError::Degenerate { x, y })?;
    let lipschitz_sum = emb.lipschitz_sum();
    let contraction_bound = table
        .par_iter()
        .map(|r| {
            let lb = support_lower_bound(emb, r.d).unwrap_or_else(|| {
                (0..emb.ks().len())
                    .map(|i| emb.block_dist(i, r.x as usize, r.y as usize))
                    .fold(0.0, f64::max)
            });
            r.d / lb
        })
        .reduce(|| 0.0, f64::max);
    let p = emb.p();
    let terms: Vec<(f64, f64)> = emb
        .ks()
        .iter()
        .zip(emb.profile())
        .map(|(&k, &j)| {
            let t = (1u64 << k) as f64;
            (t, (t / j).powf(p))
        })
        .collect();
    let dyadic_sum = terms.iter().map(|t| t.1).sum();
    let top = space.diameter() / 4.0;
    let inside: Vec<f64> = terms.iter().filter(|t| t.0 <= top).map(|t| t.1).collect();
    let integral: f64 = inside.windows(2).map(|w| 0.5 * (w[0] + w[1]) * std::f64::consts::LN_2).sum();
    Ok(DistortionBound {
        lipschitz_sum,
        contraction_bound,
        bound: lipschitz_sum * contraction_bound,
        measured: exp * con,
        dyadic_sum,
        integral_form: 2.0 * integral.powf(1.0 / p),
    })
}
