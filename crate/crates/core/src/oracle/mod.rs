//! Independent distortion oracles used to cross-check certificates and
//! constructions.
//!
//! - [`exact_c2`] brackets the least Hilbert-space distortion `c_2(X)` by
//!   solving its semidefinite program with an interior-point method; both
//!   ends of the bracket come with an explicit witness.
//! - [`numeric_cp_upper`] searches directly for a good configuration in
//!   `ℓ_p^dim`, giving an upper bound on `c_p(X)`.

use std::fmt::Write as _;

use std::f64::consts::SQRT_2;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::embed::{distortion, PointEmbedding};
use crate::space::FiniteSpace;
use crate::util::fmt_g17;

/// Largest space accepted by [`exact_c2`].
pub const EXACT_C2_LIMIT: usize = 64;
/// Smallest bracket width accepted by [`exact_c2`].
pub const MIN_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{n} points exceeds the limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("tolerance {0} is below the minimum {MIN_TOL}")]
    InvalidTolerance(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver budget exhausted at [{}, {}]", bracket.lower, bracket.upper)]
    BudgetExceeded { bracket: DistortionBracket },
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Two-sided estimate of a least distortion.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionBracket {
    /// Lower end reported; never above `upper`.
    pub lower: f64,
    /// Upper end reported.
    pub upper: f64,
    /// Lower bound backed by an explicit dual certificate.
    pub certified_lower: f64,
    /// Distortion of an explicit embedding found along the way.
    pub realized_upper: f64,
    pub method: String,
}

impl DistortionBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// `space,p,lower,upper,method` row.
    pub fn csv_row(&self, space: &str, p: f64) -> String {
        format!("{space},{},{},{},{}", fmt_g17(p), fmt_g17(self.lower), fmt_g17(self.upper), self.method)
    }
}

/// Header of the bracket report.
pub const BRACKET_CSV_HEADER: &str = "space,p,lower,upper,method";

/// `c_2 >= sqrt(Σ_{W>0} W d² / Σ_{W<0} |W| d²)` for any positive
/// semidefinite `W` with `W·1 = 0`; `w` is first made exactly so by
/// centering and clipping negative eigenvalues.
fn dual_bound(w: &DMatrix<f64>, d2: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let centering = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let c = &centering * w * &centering;
    let eig = ((&c + c.transpose()) * 0.5).symmetric_eigen();
    let clipped = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&l| l.max(0.0)));
    let psd = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let (mut pos, mut neg) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = psd[(i, j)] * d2[(i, j)];
                if v > 0.0 {
                    pos += v;
                } else {
                    neg -= v;
                }
            }
        }
    }
    if neg > 0.0 && pos > 0.0 {
        (pos / neg).sqrt()
    } else {
        0.0
    }
}

/// Orthonormal basis of `1^⊥` as the rows' coordinates: point `i` sits at
/// row `i` of an `n × (n-1)` matrix with orthonormal, mean-zero columns.
fn centered_basis(n: usize) -> DMatrix<f64> {
    // Householder reflection sending `1` to the last axis; its other
    // columns span `1^⊥`.
    let mut v = DVector::from_element(n, 1.0);
    v[n - 1] += (n as f64).sqrt();
    let vv = v.dot(&v);
    let h = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / vv);
    h.columns(0, n - 1).into_owned()
}

/// Scaled half-vectorization: `⟨svec A, svec B⟩ = tr(AB)` for symmetric
/// `A`, `B`.
fn svec_index(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect()
}

fn smat(v: &[f64], idx: &[(usize, usize)], k: usize) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(k, k);
    for (&(a, b), &x) in idx.iter().zip(v) {
        if a == b {
            y[(a, a)] = x;
        } else {
            y[(a, b)] = x / SQRT_2;
            y[(b, a)] = x / SQRT_2;
        }
    }
    y
}

fn svec(y: &DMatrix<f64>, idx: &[(usize, usize)]) -> DVector<f64> {
    DVector::from_iterator(
        idx.len(),
        idx.iter().map(|&(a, b)| if a == b { y[(a, a)] } else { SQRT_2 * y[(a, b)] }),
    )
}

/// Log-barrier interior-point method for
/// `min s  s.t.  d² <= e_ij(Y) <= s·d²,  Y ⪰ 0`, where `Y` is the Gram
/// matrix in a basis of `1^⊥` and `e_ij(Y) = u_ijᵀ Y u_ij`.
struct GramSdp {
    n: usize,
    k: usize,
    idx: Vec<(usize, usize)>,
    pairs: Vec<(usize, usize)>,
    /// Squared target distance per pair.
    d2: DVector<f64>,
    /// Row `p` is `svec(u_p u_pᵀ)`.
    forms: DMatrix<f64>,
}

struct BarrierPoint {
    y: DMatrix<f64>,
    s: f64,
}

impl GramSdp {
    fn new(space: &FiniteSpace) -> Self {
        let n = space.len();
        let k = n - 1;
        let idx = svec_index(k);
        let basis = centered_basis(n);
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let d2 = DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| space.d(i, j).powi(2)));
        let mut forms = DMatrix::zeros(pairs.len(), idx.len());
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let u: Vec<f64> = (0..k).map(|c| basis[(i, c)] - basis[(j, c)]).collect();
            for (q, &(a, b)) in idx.iter().enumerate() {
                forms[(p, q)] = if a == b { u[a] * u[a] } else { SQRT_2 * u[a] * u[b] };
            }
        }
        Self { n, k, idx, pairs, d2, forms }
    }

    fn embedded(&self, y: &DMatrix<f64>) -> DVector<f64> {
        &self.forms * svec(y, &self.idx)
    }

    /// Barrier value, or `None` outside the strict interior.
    fn value(&self, pt: &BarrierPoint, tau: f64) -> Option<f64> {
        let chol = Cholesky::new(pt.y.clone())?;
        let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let e = self.embedded(&pt.y);
        let mut f = tau * pt.s - logdet;
        for p in 0..self.pairs.len() {
            let (lo, hi) = (e[p] - self.d2[p], pt.s * self.d2[p] - e[p]);
            if lo <= 0.0 || hi <= 0.0 {
                return None;
            }
            f -= lo.ln() + hi.ln();
        }
        Some(f)
    }

    fn newton_step(&self, pt: &BarrierPoint, tau: f64) -> Option<(DVector<f64>, f64)> {
        let m = self.idx.len();
        let np = self.pairs.len();
        let w = pt.y.clone().try_inverse()?;
        let e = self.embedded(&pt.y);
        let mut grad = DVector::zeros(m + 1);
        let mut rows = DMatrix::zeros(2 * np, m + 1);
        for p in 0..np {
            let lo = e[p] - self.d2[p];
            let hi = pt.s * self.d2[p] - e[p];
            for q in 0..m {
                let a = self.forms[(p, q)];
                grad[q] += -a / lo + a / hi;
                rows[(2 * p, q)] = a / lo;
                rows[(2 * p + 1, q)] = -a / hi;
            }
            grad[m] -= self.d2[p] / hi;
            rows[(2 * p + 1, m)] = self.d2[p] / hi;
        }
        grad[m] += tau;
        let winv = svec(&w, &self.idx);
        for q in 0..m {
            grad[q] -= winv[q];
        }
        let mut h = rows.transpose() * &rows;
        // Hessian of -log det Y: X ↦ W X W in svec coordinates.
        let entry = |p: usize, q: usize, c: usize, d: usize| -> f64 {
            if c == d {
                w[(p, c)] * w[(c, q)]
            } else {
                (w[(p, c)] * w[(d, q)] + w[(p, d)] * w[(c, q)]) / SQRT_2
            }
        };
        for (r, &(a, b)) in self.idx.iter().enumerate() {
            for (c_, &(c, d)) in self.idx.iter().enumerate() {
                let v = if a == b { entry(a, a, c, d) } else { SQRT_2 * entry(a, b, c, d) };
                h[(r, c_)] += v;
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let step = match Cholesky::new(h.clone()) {
            Some(ch) => ch.solve(&(-&grad)),
            None => h.lu().solve(&(-&grad))?,
        };
        let decrement = -grad.dot(&step);
        Some((step, decrement))
    }

    fn moved(&self, pt: &BarrierPoint, step: &DVector<f64>, t: f64) -> BarrierPoint {
        let m = self.idx.len();
        let dy = smat(&step.as_slice()[..m], &self.idx, self.k);
        BarrierPoint {
            y: &pt.y + dy * t,
            s: pt.s + t * step[m],
        }
    }

    /// Newton's method on the barrier at fixed `tau`.
    fn center(&self, mut pt: BarrierPoint, tau: f64) -> BarrierPoint {
        for _ in 0..NEWTON_BUDGET {
            let Some(f0) = self.value(&pt, tau) else { break };
            let Some((step, decrement)) = self.newton_step(&pt, tau) else { break };
            if decrement / 2.0 < NEWTON_TOL {
                break;
            }
            let mut t = 1.0;
            loop {
                let cand = self.moved(&pt, &step, t);
                if let Some(f) = self.value(&cand, tau) {
                    if f <= f0 - 0.25 * t * decrement {
                        pt = cand;
                        break;
                    }
                }
                t *= 0.5;
                if t < 1e-14 {
                    return pt;
                }
            }
        }
        pt
    }

    /// Distortion of the embedding with Gram matrix `Y`.
    fn realized(&self, y: &DMatrix<f64>) -> f64 {
        let e = self.embedded(y);
        let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
        for p in 0..self.pairs.len() {
            let r = e[p] / self.d2[p];
            hi = hi.max(r);
            lo = lo.min(r);
        }
        if lo > 0.0 {
            (hi / lo).sqrt()
        } else {
            f64::INFINITY
        }
    }

    /// Certificate `Σ_p (β_p - α_p) L_p` from the barrier multipliers
    /// `α = 1/(τ·lower slack)`, `β = 1/(τ·upper slack)`.
    fn certificate(&self, pt: &BarrierPoint, tau: f64) -> f64 {
        let e = self.embedded(&pt.y);
        let mut z = DMatrix::zeros(self.n, self.n);
        let mut d2 = DMatrix::zeros(self.n, self.n);
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let alpha = 1.0 / (tau * (e[p] - self.d2[p]));
            let beta = 1.0 / (tau * (pt.s * self.d2[p] - e[p]));
            let c = beta - alpha;
            z[(i, i)] += c;
            z[(j, j)] += c;
            z[(i, j)] -= c;
            z[(j, i)] -= c;
            d2[(i, j)] = self.d2[p];
            d2[(j, i)] = self.d2[p];
        }
        dual_bound(&z, &d2)
    }
}

/// Newton iterations per barrier stage.
const NEWTON_BUDGET: usize = 60;
/// Half Newton decrement below which a stage is centered.
const NEWTON_TOL: f64 = 1e-10;
/// Barrier weight growth per stage.
const BARRIER_GROWTH: f64 = 6.0;
/// Barrier stages before giving up.
const STAGE_BUDGET: usize = 40;

/// Classical multidimensional scaling into `dim` coordinates, negative
/// eigenvalues clipped.
fn classical_mds(space: &FiniteSpace, dim: usize) -> Vec<Vec<f64>> {
    let n = space.len();
    let d2 = DMatrix::from_fn(n, n, |i, j| space.d(i, j).powi(2));
    let centering = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let g = (&centering * d2 * &centering) * -0.5;
    let eig = ((&g + g.transpose()) * 0.5).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    (0..n)
        .map(|i| {
            (0..dim)
                .map(|c| match order.get(c) {
                    Some(&k) if eig.eigenvalues[k] > 0.0 => eig.eigenvectors[(i, k)] * eig.eigenvalues[k].sqrt(),
                    _ => 0.0,
                })
                .collect()
        })
        .collect()
}

fn config_distortion(space: &FiniteSpace, p: f64, coords: Vec<Vec<f64>>) -> f64 {
    distortion(space, &PointEmbedding { p, coords }).unwrap_or(f64::INFINITY)
}

/// Bracket on `c_2(X)` of width at most `tol`.
///
/// Solves the semidefinite program "Gram matrix `G ⪰ 0` with
/// `d² <= |g_x - g_y|² <= T² d²`, minimize `T`" by a log-barrier
/// interior-point method. Both ends of the bracket are backed by explicit
/// objects: `upper` is the distortion of the current Gram matrix, `lower`
/// the value of a positive semidefinite dual certificate built from the
/// barrier multipliers (and never below 1).
pub fn exact_c2(space: &FiniteSpace, tol: f64) -> Result<DistortionBracket> {
    let n = space.len();
    if n > EXACT_C2_LIMIT {
        return Err(OracleError::TooLarge { n, limit: EXACT_C2_LIMIT });
    }
    if !(tol >= MIN_TOL) {
        return Err(OracleError::InvalidTolerance(tol));
    }
    let mut bracket = DistortionBracket {
        lower: 1.0,
        upper: 1.0,
        certified_lower: 1.0,
        realized_upper: 1.0,
        method: "sdp_barrier".into(),
    };
    if n <= 2 {
        return Ok(bracket);
    }
    let simplex = space.diameter() / space.min_distance();
    let mds = config_distortion(space, 2.0, classical_mds(space, n));
    bracket.realized_upper = simplex.min(mds);
    bracket.upper = bracket.realized_upper;
    if bracket.width() <= tol {
        return Ok(bracket);
    }

    let sdp = GramSdp::new(space);
    // regular simplex scaled so every pair is stretched by 1.5 at least
    let dmax2 = sdp.d2.max();
    let dmin2 = sdp.d2.min();
    let c = 0.75 * dmax2;
    let mut pt = BarrierPoint {
        y: DMatrix::identity(sdp.k, sdp.k) * c,
        s: 4.0 * c / dmin2,
    };
    let mut tau = 1.0;
    for stage in 0..STAGE_BUDGET {
        pt = sdp.center(pt, tau);
        bracket.realized_upper = bracket.realized_upper.min(sdp.realized(&pt.y));
        bracket.certified_lower = bracket.certified_lower.max(sdp.certificate(&pt, tau));
        bracket.upper = bracket.realized_upper;
        bracket.lower = bracket.certified_lower.min(bracket.upper);
        log::debug!("c2 barrier stage {stage}: tau = {tau:e}, bracket = [{}, {}]", bracket.lower, bracket.upper);
        if bracket.width() <= tol {
            return Ok(bracket);
        }
        tau *= BARRIER_GROWTH;
    }
    Err(OracleError::BudgetExceeded { bracket })
}

/// Smoothed objective `LSE_β(log e/d) + LSE_β(log d/e)` and its gradient.
struct SmoothDistortion<'a> {
    pairs: Vec<(usize, usize, f64)>,
    p: f64,
    dim: usize,
    space: &'a FiniteSpace,
}

impl SmoothDistortion<'_> {
    fn log_ratios(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.pairs
            .iter()
            .map(|&(i, j, d)| {
                let e = norm_p(&x[i * self.dim..(i + 1) * self.dim], &x[j * self.dim..(j + 1) * self.dim], self.p);
                (e > 0.0).then(|| (e / d).ln())
            })
            .collect()
    }

    fn value(&self, x: &[f64], beta: f64) -> f64 {
        match self.log_ratios(x) {
            Some(u) => lse(&u, beta) + lse(&u.iter().map(|v| -v).collect::<Vec<_>>(), beta),
            None => f64::INFINITY,
        }
    }

    fn gradient(&self, x: &[f64], beta: f64) -> Option<Vec<f64>> {
        let u = self.log_ratios(x)?;
        let up = softmax(&u, beta);
        let down = softmax(&u.iter().map(|v| -v).collect::<Vec<_>>(), beta);
        let mut g = vec![0.0; x.len()];
        for (k, &(i, j, _)) in self.pairs.iter().enumerate() {
            let coef = up[k] - down[k];
            let (xi, xj) = (&x[i * self.dim..(i + 1) * self.dim], &x[j * self.dim..(j + 1) * self.dim]);
            let e = norm_p(xi, xj, self.p);
            for c in 0..self.dim {
                let v = xi[c] - xj[c];
                let dv = coef * v.signum() * v.abs().powf(self.p - 1.0) / e.powf(self.p);
                g[i * self.dim + c] += dv;
                g[j * self.dim + c] -= dv;
            }
        }
        Some(g)
    }

    fn exact(&self, x: &[f64]) -> f64 {
        let coords = x.chunks(self.dim).map(<[f64]>::to_vec).collect();
        config_distortion(self.space, self.p, coords)
    }
}

fn norm_p(a: &[f64], b: &[f64], p: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

fn lse(u: &[f64], beta: f64) -> f64 {
    let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + u.iter().map(|v| (beta * (v - m)).exp()).sum::<f64>().ln() / beta
}

fn softmax(u: &[f64], beta: f64) -> Vec<f64> {
    let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = u.iter().map(|v| (beta * (v - m)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Inverse temperatures of the smoothing, increasing.
const ANNEALING: [f64; 5] = [8.0, 32.0, 128.0, 512.0, 2048.0];
/// Descent steps per temperature.
const STEPS_PER_STAGE: usize = 400;

fn descend(obj: &SmoothDistortion<'_>, mut x: Vec<f64>) -> f64 {
    let mut best = obj.exact(&x);
    for beta in ANNEALING {
        let mut value = obj.value(&x, beta);
        let mut step = 1e-2;
        for _ in 0..STEPS_PER_STAGE {
            let Some(g) = obj.gradient(&x, beta) else { break };
            let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let gmax = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if gmax == 0.0 {
                break;
            }
            let mut moved = false;
            while step > 1e-12 {
                let cand: Vec<f64> = x.iter().zip(&g).map(|(v, d)| v - step * scale * d / gmax).collect();
                let v = obj.value(&cand, beta);
                if v < value {
                    x = cand;
                    value = v;
                    step = (step * 1.5).min(0.5);
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        best = best.min(obj.exact(&x));
    }
    best
}

/// Best distortion found for a configuration of the space in `ℓ_p^dim`.
///
/// Restart 0 starts from classical scaling, the others from seeded random
/// configurations; each anneals a smoothed max/min ratio objective. The
/// returned value is the exact distortion of the best configuration, hence
/// an upper bound on `c_p(X)`. Results are bitwise reproducible per seed.
pub fn numeric_cp_upper(space: &FiniteSpace, p: f64, dim: usize, restarts: usize, seed: u64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(OracleError::InvalidArgument(format!("p = {p} must be at least 1")));
    }
    if dim == 0 {
        return Err(OracleError::InvalidArgument("dim must be positive".into()));
    }
    let n = space.len();
    if n < 2 {
        return Ok(1.0);
    }
    let obj = SmoothDistortion {
        pairs: (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, space.d(i, j)))
            .collect(),
        p,
        dim,
        space,
    };
    let mds: Vec<f64> = classical_mds(space, dim).concat();
    let scale = space.diameter();
    let best = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|i| {
            let start = if i == 0 {
                mds.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i);
                (0..n * dim).map(|_| rng.gen_range(-scale..scale)).collect()
            };
            descend(&obj, start)
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best)
}

/// Bracket report as CSV, one row per `(name, p, bracket)`.
pub fn bracket_csv<'a>(rows: impl IntoIterator<Item = (&'a str, f64, &'a DistortionBracket)>) -> String {
    let mut out = format!("{BRACKET_CSV_HEADER}\n");
    for (name, p, b) in rows {
        let _ = writeln!(out, "{}", b.csv_row(name, p));
    }
    out
}

#[cfg(test)]
mod tests;
