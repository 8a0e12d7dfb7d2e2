use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CumulativeCertificate, MeasurePair, Method, PoincareCertificate, PoincareError, Result, ScaleTerm, WeightedPair};
use crate::space::FiniteSpace;

/// Largest space on which every two-valued test function is enumerated.
pub const CUT_LIMIT: usize = 20;

/// Agreement required between cut enumeration and ascent before a
/// general-`p` constant is reported as [`Method::CutExhaustive`].
const CUT_MATCH_TOL: f64 = 1e-6;

/// Multi-start ascent parameters for `p != 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchBudget {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            restarts: 8,
            iterations: 3000,
            seed: 0,
        }
    }
}

/// `(x, y, w)` with the `1/d^p` factor of near pairs folded into `w`.
type Term = (usize, usize, f64);

fn near_terms(space: &FiniteSpace, near: &[WeightedPair], p: f64) -> Vec<Term> {
    near.iter().map(|q| (q.x, q.y, q.w / space.d(q.x, q.y).powf(p))).collect()
}

fn far_terms(far: &[WeightedPair], scale: f64) -> impl Iterator<Item = Term> + '_ {
    far.iter().map(move |q| (q.x, q.y, q.w * scale))
}

/// Some far pair joins two points that no chain of near pairs connects,
/// so the indicator of a near-component has zero near energy.
fn crosses_near_components(n: usize, far: &[Term], near: &[Term]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(x, y, w) in near {
        if w > 0.0 {
            let (a, b) = (find(&mut parent, x), find(&mut parent, y));
            parent[a] = b;
        }
    }
    far.iter()
        .any(|&(x, y, w)| w > 0.0 && find(&mut parent, x) != find(&mut parent, y))
}

fn laplacian(n: usize, terms: impl IntoIterator<Item = Term>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (x, y, w) in terms {
        m[(x, x)] += w;
        m[(y, y)] += w;
        m[(x, y)] -= w;
        m[(y, x)] -= w;
    }
    m
}

/// The near form `B`, diagonalized once so that many far forms can be
/// compared against it.
struct ReferenceForm {
    /// Columns `u_i / sqrt(λ_i)` spanning the range of `B`.
    whiten: DMatrix<f64>,
    /// Orthonormal basis of `ker B`.
    kernel: DMatrix<f64>,
}

impl ReferenceForm {
    fn new(b: &DMatrix<f64>) -> Self {
        let n = b.nrows();
        let eig = b.clone().symmetric_eigen();
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let tol = 1e-10 * top.max(f64::MIN_POSITIVE);
        let (range, null): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| eig.eigenvalues[i] > tol);
        let whiten = DMatrix::from_fn(n, range.len(), |r, c| {
            eig.eigenvectors[(r, range[c])] / eig.eigenvalues[range[c]].sqrt()
        });
        let kernel = DMatrix::from_fn(n, null.len(), |r, c| eig.eigenvectors[(r, null[c])]);
        Self { whiten, kernel }
    }

    /// Largest `λ` with `A(φ) = λ B(φ)` and a maximizing `φ`.
    fn lambda_max(&self, a: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
        let scale = a.amax();
        if self.kernel.ncols() > 0 {
            let on_kernel = self.kernel.transpose() * a * &self.kernel;
            if on_kernel.amax() > 1e-9 * scale {
                return Err(PoincareError::Infeasible);
            }
        }
        if self.whiten.ncols() == 0 {
            return Ok((0.0, DVector::zeros(a.nrows())));
        }
        let mut m = self.whiten.transpose() * a * &self.whiten;
        m = (&m + m.transpose()) * 0.5;
        let eig = m.symmetric_eigen();
        let (i, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty spectrum");
        Ok((lambda.max(0.0), &self.whiten * eig.eigenvectors.column(i)))
    }
}

/// Exact optimal constant at `p = 2`: `J = sqrt(λ_max)` for the
/// generalized eigenproblem of the far and near forms.
pub fn optimal_constant_p2(space: &FiniteSpace, mp: &MeasurePair) -> Result<PoincareCertificate> {
    let n = space.len();
    let near = near_terms(space, mp.near(), 2.0);
    let far: Vec<Term> = far_terms(mp.far(), 1.0).collect();
    if crosses_near_components(n, &far, &near) {
        return Err(PoincareError::Infeasible);
    }
    let form = ReferenceForm::new(&laplacian(n, near));
    let (lambda, _) = form.lambda_max(&laplacian(n, far))?;
    Ok(PoincareCertificate {
        p: 2.0,
        j: lambda.sqrt(),
        measures: mp.clone(),
        method: Method::EigenExact,
    })
}

fn energies(far: &[Term], near: &[Term], phi: &[f64], p: f64) -> (f64, f64) {
    let e = |terms: &[Term]| -> f64 { terms.iter().map(|&(x, y, w)| w * (phi[x] - phi[y]).abs().powf(p)).sum() };
    (e(far), e(near))
}

fn normalize(phi: &mut [f64]) {
    let mean = phi.iter().sum::<f64>() / phi.len() as f64;
    phi.iter_mut().for_each(|v| *v -= mean);
    let norm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        phi.iter_mut().for_each(|v| *v /= norm);
    }
}

fn ratio(far: &[Term], near: &[Term], phi: &[f64], p: f64) -> f64 {
    let (a, b) = energies(far, near, phi, p);
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Normalized gradient ascent on `log A(φ) - log B(φ)` with an adaptive step.
fn ascend(far: &[Term], near: &[Term], p: f64, mut phi: Vec<f64>, iterations: usize) -> f64 {
    normalize(&mut phi);
    let mut value = ratio(far, near, &phi, p);
    let mut step = 0.1;
    let n = phi.len();
    for _ in 0..iterations {
        let (a, b) = energies(far, near, &phi, p);
        if a <= 0.0 || b <= 0.0 {
            break;
        }
        let mut grad = vec![0.0; n];
        for (terms, scale) in [(far, 1.0 / a), (near, -1.0 / b)] {
            for &(x, y, w) in terms {
                let d = phi[x] - phi[y];
                let g = scale * w * p * d.abs().powf(p - 1.0) * d.signum() * f64::from(d != 0.0);
                grad[x] += g;
                grad[y] -= g;
            }
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        loop {
            let mut cand: Vec<f64> = phi.iter().zip(&grad).map(|(v, g)| v + step * g / norm).collect();
            normalize(&mut cand);
            let v = ratio(far, near, &cand, p);
            if v > value {
                phi = cand;
                value = v;
                step = (step * 1.5).min(1.0);
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return value;
            }
        }
    }
    value
}

fn best_cut(n: usize, far: &[Term], near: &[Term]) -> f64 {
    let crossing = |terms: &[Term], mask: u32| -> f64 {
        terms
            .iter()
            .filter(|&&(x, y, _)| ((mask >> x) ^ (mask >> y)) & 1 == 1)
            .map(|t| t.2)
            .sum()
    };
    // the last point always stays on the zero side
    (1u32..1 << (n - 1))
        .into_par_iter()
        .map(|mask| {
            let b = crossing(near, mask);
            if b > 0.0 {
                crossing(far, mask) / b
            } else {
                0.0
            }
        })
        .reduce(|| 0.0, f64::max)
}

/// Lower bound on the optimal ratio `sup A(φ)/B(φ)` for general `p`.
fn search(n: usize, far: &[Term], near: &[Term], p: f64, budget: &SearchBudget) -> Result<(f64, Method)> {
    if crosses_near_components(n, far, near) {
        return Err(PoincareError::Infeasible);
    }
    let heuristic = (0..budget.restarts.max(1) as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
            rng.set_stream(i);
            let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            ascend(far, near, p, start, budget.iterations)
        })
        .reduce(|| 0.0, f64::max);
    if (2..=CUT_LIMIT).contains(&n) {
        let cut = best_cut(n, far, near);
        let method = if cut.powf(1.0 / p) >= heuristic.powf(1.0 / p) - CUT_MATCH_TOL {
            Method::CutExhaustive
        } else {
            Method::HeuristicLower
        };
        Ok((cut.max(heuristic), method))
    } else {
        Ok((heuristic, Method::HeuristicLower))
    }
}

/// Best constant found for general `p` by multi-start ascent, plus
/// enumeration of all two-valued `φ` when `n <= CUT_LIMIT`. The result is a
/// lower bound on the optimal constant; it is marked
/// [`Method::CutExhaustive`] only when the cut optimum matches the ascent.
pub fn optimal_constant_general(
    space: &FiniteSpace,
    mp: &MeasurePair,
    p: f64,
    budget: &SearchBudget,
) -> Result<PoincareCertificate> {
    let near = near_terms(space, mp.near(), p);
    let far: Vec<Term> = far_terms(mp.far(), 1.0).collect();
    let (value, method) = search(space.len(), &far, &near, p, budget)?;
    Ok(PoincareCertificate {
        p,
        j: value.powf(1.0 / p),
        measures: mp.clone(),
        method,
    })
}

/// Cumulated inequality with `J(2^k) = c·2^k` for the given per-scale far
/// measures (each a probability on pairs at distance `>= 2^k`) and near
/// measure. At `p = 2` the joint constant `c` is exact; otherwise it is a
/// search lower bound. Each scale's own optimal constant is recorded as a
/// diagnostic.
pub fn cumulative_certificate(
    space: &FiniteSpace,
    p: f64,
    r: f64,
    scales: Vec<(u32, Vec<WeightedPair>)>,
    near: Vec<WeightedPair>,
    budget: &SearchBudget,
) -> Result<CumulativeCertificate> {
    if scales.is_empty() {
        return Err(PoincareError::InvalidMeasure("no scales".into()));
    }
    for (k, far) in &scales {
        super::check_probability(space, far, 2f64.powi(*k as i32), &format!("far (k = {k})"))?;
    }
    super::check_probability(space, &near, 0.0, "near")?;
    let n = space.len();
    let near_t = near_terms(space, &near, p);
    let joint: Vec<Term> = scales
        .iter()
        .flat_map(|(k, far)| far_terms(far, 2f64.powf(-(*k as f64) * p)))
        .collect();

    let (c, isolated, method) = if p == 2.0 {
        if crosses_near_components(n, &joint, &near_t) {
            return Err(PoincareError::Infeasible);
        }
        let form = ReferenceForm::new(&laplacian(n, near_t));
        let isolated = scales
            .par_iter()
            .map(|(_, far)| form.lambda_max(&laplacian(n, far_terms(far, 1.0))).map(|(l, _)| l.sqrt()))
            .collect::<Result<Vec<f64>>>()?;
        let (lambda, _) = form.lambda_max(&laplacian(n, joint))?;
        (lambda.sqrt(), isolated, Method::EigenExact)
    } else {
        let (value, method) = search(n, &joint, &near_t, p, budget)?;
        let isolated = scales
            .par_iter()
            .map(|(_, far)| {
                let far: Vec<Term> = far_terms(far, 1.0).collect();
                search(n, &far, &near_t, p, budget).map(|(v, _)| v.powf(1.0 / p))
            })
            .collect::<Result<Vec<f64>>>()?;
        (value.powf(1.0 / p), isolated, method)
    };

    Ok(CumulativeCertificate {
        p,
        r,
        scales: scales
            .into_iter()
            .zip(isolated)
            .map(|((k, far), isolated_j)| ScaleTerm {
                k,
                far,
                j: c * 2f64.powi(k as i32),
                isolated_j,
            })
            .collect(),
        near,
        c,
        method,
    })
}

#[cfg(test)]
pub(super) fn generalized_top(space: &FiniteSpace, mp: &MeasurePair) -> (f64, Vec<f64>) {
    let near = near_terms(space, mp.near(), 2.0);
    let form = ReferenceForm::new(&laplacian(space.len(), near));
    let (l, v) = form
        .lambda_max(&laplacian(space.len(), far_terms(mp.far(), 1.0)))
        .unwrap();
    (l, v.iter().cloned().collect())
}
