//! Beta numbers: how far the mass in a ball is from lying on an affine
//! k-plane, in `L^p` for `1 <= p <= infinity`.
//!
//! `beta_p(x, r)^p = inf_V r^-k sum_i w_i (dist(y_i, V) / r)^p` over the
//! points of `B(x, r)`, and `beta_inf(x, r) = inf_V max_i dist(y_i, V) / r`.
//! Only `p = 2` is solved exactly (weighted principal components); other
//! exponents return the objective at the best plane found, which is an upper
//! bound for the infimum.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cloud::WeightedCloud;
use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{columns_to_matrix, AffinePlane, LinearPlane};
use crate::numeric::{derive_seed, extend_orthonormal, symmetric_eigen, unit_vector, ExactSum};

/// An exponent `p` in `[1, infinity]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(Exponent::Infinity)
        } else if p >= 1.0 && p.is_finite() {
            Ok(Exponent::Finite(p))
        } else {
            Err(invalid(format!("exponent must lie in [1, inf], got {p}")))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinity),
            other => Exponent::new(other.parse().map_err(|_| invalid(format!("not an exponent: {s:?}")))?),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => s.serialize_f64(*p),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Exponent::new(p),
            Raw::Text(t) => t.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// A fitted plane and the value of the `beta_p` objective at it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaResult {
    pub x: Vec<f64>,
    pub r: f64,
    pub p: Exponent,
    pub value: f64,
    pub plane: AffinePlane,
    /// True only for `p = 2`, where `value` is the global minimum.
    pub is_exact: bool,
    /// Fewer than `k + 1` distinct positions in the ball; missing directions
    /// were filled from the coordinate axes.
    pub rank_deficient: bool,
}

/// Controls for the non-exact fits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub seed: u64,
    /// For `p = infinity`: fraction of the ball's mass, lightest points first,
    /// ignored when taking the maximum.
    pub esssup_quantile: f64,
    /// Random restarts in addition to the `beta_2` seed (finite `p`).
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { seed: 0, esssup_quantile: 0.0, restarts: 4, max_iterations: 60 }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.esssup_quantile) {
            return Err(invalid(format!("esssup quantile must lie in [0, 1), got {}", self.esssup_quantile)));
        }
        Ok(())
    }
}

/// The points of one closed ball, gathered once and reused by every fit at
/// that scale.
#[derive(Clone, Debug)]
pub struct Neighborhood {
    pub x: Vec<f64>,
    pub r: f64,
    pub k: usize,
    /// Row-major coordinates of the points in the ball.
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
    pub indices: Vec<usize>,
    pub mass: f64,
}

impl Neighborhood {
    pub fn gather(cloud: &WeightedCloud, x: &[f64], r: f64) -> Result<Self> {
        let indices = cloud.ball_indices(x, r)?;
        let n = cloud.ambient_dim();
        let mut coords = Vec::with_capacity(indices.len() * n);
        let mut weights = Vec::with_capacity(indices.len());
        let mut mass = ExactSum::new();
        for &i in &indices {
            coords.extend_from_slice(cloud.point(i));
            weights.push(cloud.weight(i));
            mass.add(cloud.weight(i));
        }
        Ok(Self { x: x.to_vec(), r, k: cloud.intrinsic_dim(), coords, weights, indices, mass: mass.value() })
    }

    pub fn ambient_dim(&self) -> usize {
        self.x.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let n = self.ambient_dim();
        &self.coords[i * n..(i + 1) * n]
    }

    /// `sum_i w_i dist(y_i, V)^2`, summed exactly.
    pub fn residual_sq(&self, plane: &AffinePlane) -> f64 {
        let mut acc = ExactSum::new();
        for (i, w) in self.weights.iter().enumerate() {
            acc.add(w * plane.distance_sq(self.point(i)));
        }
        acc.value()
    }

    /// `r^-k sum_i w_i (dist / r)^p`, the `p`-th power of the objective.
    pub fn objective_pow(&self, plane: &AffinePlane, p: f64) -> f64 {
        let mut acc = ExactSum::new();
        for (i, w) in self.weights.iter().enumerate() {
            acc.add(w * (plane.distance(self.point(i)) / self.r).powf(p));
        }
        acc.value() / self.r.powi(self.k as i32)
    }

    /// Largest `dist / r` after discarding the lightest `quantile` of mass.
    pub fn max_ratio(&self, plane: &AffinePlane, quantile: f64) -> f64 {
        let kept = self.esssup_support(quantile);
        kept.iter().map(|&i| plane.distance(self.point(i))).fold(0.0, f64::max) / self.r
    }

    /// Indices (into the neighborhood) that survive the lightest-mass drop.
    /// Points are dropped lightest first, ties by position, while the dropped
    /// mass stays within `quantile * mass`.
    fn esssup_support(&self, quantile: f64) -> Vec<usize> {
        let all: Vec<usize> = (0..self.len()).collect();
        if quantile <= 0.0 {
            return all;
        }
        let mut by_weight = all;
        by_weight.sort_by(|&a, &b| self.weights[a].total_cmp(&self.weights[b]).then(a.cmp(&b)));
        let budget = quantile * self.mass;
        let mut dropped = 0.0;
        let mut cut = 0;
        while cut < by_weight.len() - 1 && dropped + self.weights[by_weight[cut]] <= budget {
            dropped += self.weights[by_weight[cut]];
            cut += 1;
        }
        let mut kept = by_weight.split_off(cut);
        kept.sort_unstable();
        kept
    }

    fn distinct_positions(&self, limit: usize) -> usize {
        let mut seen: Vec<&[f64]> = Vec::new();
        for i in 0..self.len() {
            let p = self.point(i);
            if !seen.contains(&p) {
                seen.push(p);
                if seen.len() >= limit {
                    break;
                }
            }
        }
        seen.len()
    }

    fn check_mass(&self) -> Result<()> {
        if self.mass > 0.0 {
            Ok(())
        } else {
            Err(Error::EmptyBall { radius: self.r })
        }
    }
}

/// Weighted principal-component plane: through the weighted barycenter,
/// spanned by the top `k` eigenvectors of the weighted covariance. Directions
/// the data does not span are filled from the coordinate axes, lowest index
/// first. `exact` sums the barycenter without rounding error; the iterative
/// refinements only need a search direction and skip it.
fn weighted_pca(hood: &Neighborhood, weights: &[f64], exact: bool) -> (AffinePlane, bool) {
    let n = hood.ambient_dim();
    let k = hood.k;
    let (total, center) = if exact {
        let mut total = ExactSum::new();
        let mut center_acc: Vec<ExactSum> = (0..n).map(|_| ExactSum::new()).collect();
        for (i, &w) in weights.iter().enumerate() {
            total.add(w);
            for (d, acc) in center_acc.iter_mut().enumerate() {
                acc.add(w * hood.point(i)[d]);
            }
        }
        let total = total.value();
        (total, center_acc.iter().map(|a| a.value() / total).collect::<Vec<f64>>())
    } else {
        let mut total = 0.0;
        let mut center = vec![0.0; n];
        for (i, &w) in weights.iter().enumerate() {
            total += w;
            center.iter_mut().zip(hood.point(i)).for_each(|(c, v)| *c += w * v);
        }
        center.iter_mut().for_each(|c| *c /= total);
        (total, center)
    };
    debug_assert!(total > 0.0);
    let mut upper = vec![0.0; n * n];
    for (i, &w) in weights.iter().enumerate() {
        let p = hood.point(i);
        for a in 0..n {
            let da = p[a] - center[a];
            if da == 0.0 {
                continue;
            }
            for b in a..n {
                upper[a * n + b] += w * da * (p[b] - center[b]);
            }
        }
    }
    let cov = DMatrix::<f64>::from_fn(n, n, |a, b| upper[a.min(b) * n + a.max(b)]);
    let eig = symmetric_eigen(&cov);
    let scale = eig.values.first().copied().unwrap_or(0.0).abs();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let informative = (0..k).filter(|&j| eig.values[j] > 1e-13 * scale && eig.values[j] > 0.0).count();
    for j in 0..informative {
        cols.push(eig.vectors.column(j).iter().copied().collect());
    }
    extend_orthonormal(&mut cols, (0..n).map(|i| unit_vector(n, i)), k, 1e-6);
    let rank_deficient = hood.distinct_positions(k + 1) < k + 1;
    let linear = LinearPlane::from_orthonormal(columns_to_matrix(n, &cols));
    let plane = AffinePlane::through(linear, &center).expect("dimensions agree");
    (plane, rank_deficient)
}

/// Exact `beta_2(x, r)` by weighted principal components.
pub fn fit_beta2(cloud: &WeightedCloud, x: &[f64], r: f64) -> Result<BetaResult> {
    let hood = Neighborhood::gather(cloud, x, r)?;
    beta2_of(&hood)
}

pub fn beta2_of(hood: &Neighborhood) -> Result<BetaResult> {
    hood.check_mass()?;
    let (plane, rank_deficient) = weighted_pca(hood, &hood.weights, true);
    let value = beta2_value(hood, &plane);
    Ok(BetaResult {
        x: hood.x.clone(),
        r: hood.r,
        p: Exponent::Finite(2.0),
        value,
        plane,
        is_exact: true,
        rank_deficient,
    })
}

fn beta2_value(hood: &Neighborhood, plane: &AffinePlane) -> f64 {
    let r = hood.r;
    (hood.residual_sq(plane) / (r.powi(hood.k as i32) * r * r)).sqrt()
}

/// `beta_p(x, r)`; exact for `p = 2`, otherwise a certified upper bound.
pub fn fit_betap(cloud: &WeightedCloud, x: &[f64], r: f64, p: Exponent, options: &FitOptions) -> Result<BetaResult> {
    let hood = Neighborhood::gather(cloud, x, r)?;
    betap_of(&hood, p, options)
}

pub fn betap_of(hood: &Neighborhood, p: Exponent, options: &FitOptions) -> Result<BetaResult> {
    let seed_fit = beta2_of(hood)?;
    betap_from_seed(hood, p, options, seed_fit)
}

/// As [`betap_of`], starting from an already computed `beta_2` fit of the
/// same neighborhood.
pub fn betap_from_seed(hood: &Neighborhood, p: Exponent, options: &FitOptions, seed_fit: BetaResult) -> Result<BetaResult> {
    options.validate()?;
    match p {
        Exponent::Finite(q) if q == 2.0 => Ok(seed_fit),
        Exponent::Finite(q) => Ok(refine_finite(hood, q, seed_fit, options)),
        Exponent::Infinity => Ok(refine_infinity(hood, seed_fit, options)),
    }
}

fn call_seed(hood: &Neighborhood, p: f64, global: u64) -> u64 {
    let parts = hood
        .x
        .iter()
        .map(|v| v.to_bits())
        .chain([hood.r.to_bits(), p.to_bits(), global]);
    derive_seed(parts)
}

/// Iteratively reweighted principal components for `sum w d^p`: reweight by
/// `max(d, 1e-9 r)^(p - 2)`, refit, keep only improvements.
fn refine_finite(hood: &Neighborhood, p: f64, seed_fit: BetaResult, options: &FitOptions) -> BetaResult {
    let mut rng = ChaCha8Rng::seed_from_u64(call_seed(hood, p, options.seed));
    let mut starts = vec![seed_fit.plane.clone()];
    for _ in 0..options.restarts {
        starts.push(random_rotation_of(&seed_fit.plane, &hood.x, &mut rng));
    }
    let mut best_plane = seed_fit.plane.clone();
    let mut best = hood.objective_pow(&best_plane, p);
    for start in starts {
        let mut plane = start;
        let mut value = hood.objective_pow(&plane, p);
        for _ in 0..options.max_iterations {
            let floor = 1e-9 * hood.r;
            let reweighted: Vec<f64> = hood
                .weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * plane.distance(hood.point(i)).max(floor).powf(p - 2.0))
                .collect();
            let (candidate, _) = weighted_pca(hood, &reweighted, false);
            let candidate_value = hood.objective_pow(&candidate, p);
            if candidate_value < value {
                let converged = value - candidate_value <= 1e-12 * value;
                plane = candidate;
                value = candidate_value;
                if converged {
                    break;
                }
            } else {
                break;
            }
        }
        if value < best {
            best = value;
            best_plane = plane;
        }
    }
    BetaResult {
        x: hood.x.clone(),
        r: hood.r,
        p: Exponent::Finite(p),
        value: best.powf(1.0 / p),
        plane: best_plane,
        is_exact: false,
        rank_deficient: seed_fit.rank_deficient,
    }
}

/// Rotates the plane's basis by a random rotation of angle up to about half
/// a radian about the plane's point nearest to `x`, which lies in `B(x, r)`.
fn random_rotation_of(plane: &AffinePlane, x: &[f64], rng: &mut ChaCha8Rng) -> AffinePlane {
    let n = plane.ambient_dim();
    let angle = rng.random_range(0.05..0.5);
    let generator = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let skew = (&generator - generator.transpose()) * 0.5;
    let norm = crate::numeric::spectral_norm(&skew).max(1e-12);
    let rotation = (skew * (angle / norm)).exp();
    let linear = plane.linear().transformed(&rotation).expect("rotation preserves rank");
    AffinePlane::through(linear, &plane.nearest_point(x)).expect("dimensions agree")
}

/// Minimax slab: alternate between the best offset for a fixed direction
/// (center of the smallest ball enclosing the normal coordinates) and a
/// Lawson reweighting of the principal-component direction.
fn refine_infinity(hood: &Neighborhood, seed_fit: BetaResult, options: &FitOptions) -> BetaResult {
    let support = hood.esssup_support(options.esssup_quantile);
    let evaluate = |plane: &AffinePlane| {
        support.iter().map(|&i| plane.distance(hood.point(i))).fold(0.0, f64::max) / hood.r
    };
    let mut best_plane = seed_fit.plane.clone();
    let mut best = evaluate(&best_plane);
    let centered = recenter(hood, &support, seed_fit.plane.linear());
    let value = evaluate(&centered);
    if value < best {
        best = value;
        best_plane = centered;
    }
    let mut lawson: Vec<f64> = hood.weights.clone();
    let dropped: Vec<bool> = {
        let mut keep = vec![false; hood.len()];
        support.iter().for_each(|&i| keep[i] = true);
        keep.iter().map(|k| !k).collect()
    };
    dropped.iter().zip(lawson.iter_mut()).for_each(|(d, w)| {
        if *d {
            *w = 0.0;
        }
    });
    let mut plane = best_plane.clone();
    let iterations = options.max_iterations.min(20);
    for _ in 0..iterations {
        let dists: Vec<f64> = (0..hood.len()).map(|i| plane.distance(hood.point(i))).collect();
        let norm: f64 = lawson.iter().zip(&dists).map(|(w, d)| w * d).sum();
        if norm <= 0.0 {
            break;
        }
        lawson.iter_mut().zip(&dists).for_each(|(w, d)| *w *= d / norm);
        if lawson.iter().all(|w| *w == 0.0) {
            break;
        }
        let (candidate, _) = weighted_pca(hood, &lawson, false);
        plane = recenter(hood, &support, candidate.linear());
        let value = evaluate(&plane);
        if value < best {
            best = value;
            best_plane = plane.clone();
        }
    }
    BetaResult {
        x: hood.x.clone(),
        r: hood.r,
        p: Exponent::Infinity,
        value: best,
        plane: best_plane,
        is_exact: false,
        rank_deficient: seed_fit.rank_deficient,
    }
}

/// Best translate of `linear` for the maximum distance over `support`.
fn recenter(hood: &Neighborhood, support: &[usize], linear: &LinearPlane) -> AffinePlane {
    let normals: Vec<Vec<f64>> = support.iter().map(|&i| linear.normal_coords(hood.point(i))).collect();
    let center = enclosing_center(&normals);
    let offset = linear.normal_basis() * nalgebra::DVector::from_column_slice(&center);
    AffinePlane::through(linear.clone(), offset.as_slice()).expect("dimensions agree")
}

/// Center of the smallest ball containing the points: exact in dimension 1,
/// Badoiu-Clarkson iterations otherwise.
fn enclosing_center(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points[0].len();
    if dim == 1 {
        let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return vec![0.5 * (lo + hi)];
    }
    let mut center = points[0].clone();
    for step in 1..=400 {
        let far = points
            .iter()
            .max_by(|a, b| crate::numeric::dist_sq(a, &center).total_cmp(&crate::numeric::dist_sq(b, &center)))
            .expect("non-empty");
        let t = 1.0 / (step as f64 + 1.0);
        center.iter_mut().zip(far).for_each(|(c, f)| *c += t * (f - *c));
    }
    center
}

/// Objective of the `p`-fit evaluated at a given plane (no optimization);
/// `p = infinity` uses the plain maximum.
pub fn objective_at(hood: &Neighborhood, plane: &AffinePlane, p: Exponent) -> Result<f64> {
    check_dim(hood.ambient_dim(), plane.ambient_dim())?;
    Ok(match p {
        Exponent::Finite(q) => hood.objective_pow(plane, q).powf(1.0 / q),
        Exponent::Infinity => hood.max_ratio(plane, 0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud2(points: &[[f64; 2]], weights: &[f64]) -> WeightedCloud {
        let pts: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
        WeightedCloud::new(1, &pts, weights.to_vec()).unwrap()
    }

    fn circle(count: usize) -> WeightedCloud {
        let h = 2.0 * std::f64::consts::PI / count as f64;
        let pts: Vec<Vec<f64>> = (0..count).map(|i| {
            let t = i as f64 * h;
            vec![t.cos(), t.sin()]
        }).collect();
        WeightedCloud::new(1, &pts, vec![h; count]).unwrap()
    }

    /// Brute force over line angle and offset, refined around the best cell.
    fn brute_force_line(hood: &Neighborhood, p: f64) -> f64 {
        let eval = |angle: f64, offset: f64| -> f64 {
            let (s, c) = angle.sin_cos();
            let mut acc = 0.0;
            for i in 0..hood.len() {
                let q = hood.point(i);
                let d = (-s * q[0] + c * q[1] - offset).abs();
                acc += hood.weights[i] * (d / hood.r).powf(p);
            }
            (acc / hood.r).powf(1.0 / p)
        };
        let (mut a0, mut a1) = (0.0, std::f64::consts::PI);
        let (mut o0, mut o1) = (-2.0, 2.0);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for _ in 0..8 {
            let steps = 60;
            for i in 0..=steps {
                for j in 0..=steps {
                    let a = a0 + (a1 - a0) * i as f64 / steps as f64;
                    let o = o0 + (o1 - o0) * j as f64 / steps as f64;
                    let v = eval(a, o);
                    if v < best.0 {
                        best = (v, a, o);
                    }
                }
            }
            let (da, dof) = ((a1 - a0) / 10.0, (o1 - o0) / 10.0);
            a0 = best.1 - da;
            a1 = best.1 + da;
            o0 = best.2 - dof;
            o1 = best.2 + dof;
        }
        best.0
    }

    #[test]
    fn plane_points_have_zero_beta() {
        let c = cloud2(&[[0.0, 1.0], [0.5, 1.0], [1.0, 1.0], [-2.0, 1.0]], &[1.0; 4]);
        for p in [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Finite(3.5), Exponent::Infinity] {
            let fit = fit_betap(&c, &[0.0, 1.0], 3.0, p, &FitOptions::default()).unwrap();
            assert_eq!(fit.value, 0.0, "p = {p}");
        }
        let fit = fit_beta2(&c, &[0.0, 1.0], 3.0).unwrap();
        assert!(fit.is_exact);
        assert_eq!(fit.plane.offset(), &[0.0, 1.0]);
    }

    #[test]
    fn symmetric_pair_slope() {
        let eps = 0.01;
        let c = cloud2(&[[1.0, eps], [-1.0, -eps]], &[1.0, 1.0]);
        let fit = fit_beta2(&c, &[0.0, 0.0], 2.0).unwrap();
        let b = fit.plane.linear().basis();
        assert!((b[(1, 0)] / b[(0, 0)] - eps).abs() < 1e-14);
        assert!(fit.plane.offset().iter().all(|v| v.abs() < 1e-15));
        assert!(fit.value < 1e-15);
    }

    #[test]
    fn rank_deficient_balls_use_axes() {
        let pts = vec![vec![0.3, 0.2, 0.1], vec![0.3, 0.2, 0.1]];
        let c = WeightedCloud::new(2, &pts, vec![1.0, 1.0]).unwrap();
        let fit = fit_beta2(&c, &[0.3, 0.2, 0.1], 1.0).unwrap();
        assert!(fit.rank_deficient);
        assert_eq!(fit.plane.linear().basis(), &DMatrix::identity(3, 2));
        assert_eq!(fit.value, 0.0);
    }

    #[test]
    fn empty_ball_is_an_error() {
        let c = cloud2(&[[0.0, 0.0], [1.0, 0.0]], &[1.0; 2]);
        assert!(matches!(fit_beta2(&c, &[5.0, 5.0], 1.0), Err(Error::EmptyBall { .. })));
    }

    #[test]
    fn beta2_matches_brute_force_on_circle() {
        let c = circle(4000);
        let hood = Neighborhood::gather(&c, &[1.0, 0.0], 0.2).unwrap();
        let exact = beta2_of(&hood).unwrap().value;
        let brute = brute_force_line(&hood, 2.0);
        assert!(exact <= brute + 1e-12);
        assert!((exact - brute).abs() < 1e-4, "{exact} vs {brute}");
    }

    #[test]
    fn beta1_close_to_brute_force_on_circle() {
        let c = circle(4000);
        let hood = Neighborhood::gather(&c, &[1.0, 0.0], 0.3).unwrap();
        let fit = betap_of(&hood, Exponent::Finite(1.0), &FitOptions::default()).unwrap();
        let brute = brute_force_line(&hood, 1.0);
        assert!((fit.value - brute).abs() <= 0.05 * brute, "{} vs {brute}", fit.value);
        // Seeding sanity: never worse than the beta_2 plane.
        let at_seed = objective_at(&hood, &beta2_of(&hood).unwrap().plane, Exponent::Finite(1.0)).unwrap();
        assert!(fit.value <= at_seed);
    }

    #[test]
    fn three_point_slab() {
        let h = 0.3;
        let c = cloud2(&[[-1.0, 0.0], [0.0, h], [1.0, 0.0]], &[1.0; 3]);
        let fit = fit_betap(&c, &[0.0, 0.0], 2.0, Exponent::Infinity, &FitOptions::default()).unwrap();
        // Optimal slab: the horizontal line y = h/2, half-width h/2; any
        // tilted line leaves one of the three points farther away.
        let exact = h / 2.0 / 2.0;
        assert!(fit.value <= exact + 1e-9);
        assert!(fit.value >= exact - 1e-12);
    }

    #[test]
    fn esssup_quantile_drops_light_outlier() {
        let mut pts: Vec<[f64; 2]> = (0..20).map(|i| [i as f64 * 0.05 - 0.5, 0.0]).collect();
        pts.push([0.0, 0.4]);
        let mut w = vec![1.0; 20];
        w.push(0.01);
        let c = cloud2(&pts, &w);
        let plain = fit_betap(&c, &[0.0, 0.0], 1.0, Exponent::Infinity, &FitOptions::default()).unwrap();
        assert!(plain.value > 0.1);
        let opts = FitOptions { esssup_quantile: 0.01, ..FitOptions::default() };
        let robust = fit_betap(&c, &[0.0, 0.0], 1.0, Exponent::Infinity, &opts).unwrap();
        assert!(robust.value < 1e-12, "{}", robust.value);
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!("inf".parse::<Exponent>().unwrap(), Exponent::Infinity);
        assert_eq!("1.5".parse::<Exponent>().unwrap(), Exponent::Finite(1.5));
        assert!("0.5".parse::<Exponent>().is_err());
        assert_eq!(serde_json::to_string(&Exponent::Infinity).unwrap(), "\"inf\"");
        assert_eq!(serde_json::from_str::<Exponent>("2").unwrap(), Exponent::Finite(2.0));
    }
}
