/// Nonnegative-or-signed function on the points of a space, stored as
/// index-sorted `(point, value)` entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseFn {
    idx: Vec<u32>,
    val: Vec<f64>,
}

/// `|v|^p`, with the common exponents special-cased so results are exact
/// where they can be.
#[inline]
pub(crate) fn abs_pow(v: f64, p: f64) -> f64 {
    let a = v.abs();
    if p == 1.0 {
        a
    } else if p == 2.0 {
        a * a
    } else {
        a.powf(p)
    }
}

impl SparseFn {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds from arbitrary `(point, value)` pairs; duplicates are summed.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|&(y, _)| y);
        let mut out = Self::default();
        for (y, v) in pairs {
            if out.idx.last() == Some(&(y as u32)) {
                *out.val.last_mut().expect("parallel vectors") += v;
            } else {
                out.idx.push(y as u32);
                out.val.push(v);
            }
        }
        out
    }

    /// Indicator of a point set, scaled by `weight`.
    pub fn indicator(points: &[usize], weight: f64) -> Self {
        Self::from_pairs(points.iter().map(|&y| (y, weight)).collect())
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn get(&self, y: usize) -> f64 {
        match self.idx.binary_search(&(y as u32)) {
            Ok(i) => self.val[i],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().zip(&self.val).map(|(&y, &v)| (y as usize, v))
    }

    /// Points carrying a nonzero value.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.iter().filter(|&(_, v)| v != 0.0).map(|(y, _)| y)
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map_values(|v| v * s)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            idx: self.idx.clone(),
            val: self.val.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Relabels points through `map` (old index to new index).
    pub fn relabeled(&self, map: impl Fn(usize) -> usize) -> Self {
        Self::from_pairs(self.iter().map(|(y, v)| (map(y), v)).collect())
    }

    /// `∫ |f|^p dμ`.
    pub fn pow_norm(&self, p: f64, measure: &[f64]) -> f64 {
        self.iter().map(|(y, v)| abs_pow(v, p) * measure[y]).sum()
    }

    /// `L^p(μ)` norm.
    pub fn norm(&self, p: f64, measure: &[f64]) -> f64 {
        self.pow_norm(p, measure).powf(1.0 / p)
    }

    /// Dense copy of length `n`.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (y, v) in self.iter() {
            out[y] = v;
        }
        out
    }
}

/// `∫ |a - b|^p dμ`, by a merge over the two supports in point order.
pub fn pow_dist(a: &SparseFn, b: &SparseFn, p: f64, measure: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < a.idx.len() || j < b.idx.len() {
        let ya = a.idx.get(i).copied().unwrap_or(u32::MAX);
        let yb = b.idx.get(j).copied().unwrap_or(u32::MAX);
        let (y, diff) = if ya == yb {
            i += 1;
            j += 1;
            (ya, a.val[i - 1] - b.val[j - 1])
        } else if ya < yb {
            i += 1;
            (ya, a.val[i - 1])
        } else {
            j += 1;
            (yb, -b.val[j - 1])
        };
        acc += abs_pow(diff, p) * measure[y as usize];
    }
    acc
}

/// `‖a - b‖_p` in `L^p(μ)`.
pub fn dist(a: &SparseFn, b: &SparseFn, p: f64, measure: &[f64]) -> f64 {
    pow_dist(a, b, p, measure).powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_distance_matches_dense() {
        let mu = [1.0, 2.0, 0.5, 1.0, 3.0];
        let a = SparseFn::from_pairs(vec![(3, 1.0), (0, 2.0), (1, -1.0)]);
        let b = SparseFn::from_pairs(vec![(1, 1.0), (4, 0.25), (3, 1.0)]);
        let (da, db) = (a.to_dense(5), b.to_dense(5));
        for p in [1.0, 2.0, 3.0] {
            let dense: f64 = (0..5).map(|y| (da[y] - db[y]).abs().powf(p) * mu[y]).sum();
            assert!((pow_dist(&a, &b, p, &mu) - dense).abs() < 1e-12);
        }
        assert_eq!(dist(&a, &a, 2.0, &mu), 0.0);
    }

    #[test]
    fn duplicates_are_summed() {
        let f = SparseFn::from_pairs(vec![(2, 1.0), (2, 0.5), (0, 1.0)]);
        assert_eq!(f.nnz(), 2);
        assert_eq!(f.get(2), 1.5);
        assert_eq!(f.get(1), 0.0);
    }

    #[test]
    fn norms() {
        let f = SparseFn::indicator(&[0, 2], 3.0);
        assert_eq!(f.pow_norm(2.0, &[1.0, 1.0, 2.0]), 27.0);
        assert_eq!(f.norm(1.0, &[1.0, 1.0, 1.0]), 6.0);
        assert_eq!(SparseFn::zero().norm(2.0, &[1.0]), 0.0);
    }
}
