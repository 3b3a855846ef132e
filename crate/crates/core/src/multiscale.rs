//! Sweeps over geometric scales `r_j = r0 rho^j`: per-point profiles, plane
//! stabilization, Hölder fits of the rotation rate, and the criteria.
//!
//! Every "limit as r -> 0" is replaced by the `m_tail` finest valid scales.
//! A scale is valid at `x` when the ball is nonempty and lies inside the
//! sampled domain (clearance `>= r`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::WeightedCloud;
use crate::error::{check_dim, invalid, Error, Result};
use crate::fitting::{beta2_of, betap_from_seed, BetaResult, Exponent, FitOptions, Neighborhood};
use crate::geometry::{
    eps0, grassmann_distance, rectifiability_constants, AffinePlane, ConstantSet, LinearPlane, Region, BOUNDARY_TOL,
};
use crate::numeric::{dist_sq, fit_line, ExactSum};

/// Radii `r_j = r0 rho^j`, `j = 0..=J`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleGrid {
    pub r0: f64,
    pub rho: f64,
    #[serde(rename = "J")]
    pub scales: usize,
}

impl ScaleGrid {
    pub fn new(r0: f64, rho: f64, scales: usize) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(invalid(format!("r0 must be positive, got {r0}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(invalid(format!("rho must lie in (0, 1), got {rho}")));
        }
        if scales == 0 {
            return Err(invalid("the grid needs at least two radii (J >= 1)"));
        }
        Ok(Self { r0, rho, scales })
    }

    /// Also requires the finest radius to clear the cloud's resolution floor.
    pub fn for_cloud(r0: f64, rho: f64, scales: usize, cloud: &WeightedCloud) -> Result<Self> {
        let grid = Self::new(r0, rho, scales)?;
        grid.check_resolution(cloud)?;
        Ok(grid)
    }

    pub fn check_resolution(&self, cloud: &WeightedCloud) -> Result<()> {
        let floor = cloud.resolution_floor();
        let finest = self.radius(self.scales);
        if finest < floor {
            return Err(invalid(format!(
                "finest radius {finest:e} is below the resolution floor {floor:e} (4 x minimal spacing)"
            )));
        }
        Ok(())
    }

    pub fn radius(&self, j: usize) -> f64 {
        self.r0 * self.rho.powi(j as i32)
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..=self.scales).map(|j| self.radius(j)).collect()
    }

    pub fn len(&self) -> usize {
        self.scales + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Per-scale widths `lambda_j` (cylinder width `lambda_j r_j`) and their
/// tails `omega_m = sum_{j >= m} lambda_j`, truncated at the grid's end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusSequence {
    pub lambdas: Vec<f64>,
    pub omegas: Vec<f64>,
}

impl ModulusSequence {
    pub fn explicit(lambdas: Vec<f64>, grid: &ScaleGrid) -> Result<Self> {
        check_dim(grid.len(), lambdas.len())?;
        if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(invalid(format!("modulus entries must be finite and non-negative, got {l}")));
        }
        let mut omegas = vec![0.0; lambdas.len()];
        let mut acc = 0.0;
        for j in (0..lambdas.len()).rev() {
            acc += lambdas[j];
            omegas[j] = acc;
        }
        Ok(Self { lambdas, omegas })
    }

    /// `lambda_j = lambda r_j^alpha`; the cylinder width `lambda_j r_j` is
    /// then the one of the rotating-plane criterion.
    pub fn holder(grid: &ScaleGrid, lambda: f64, alpha: f64) -> Result<Self> {
        Self::explicit(grid.radii().iter().map(|r| lambda * r.powf(alpha)).collect(), grid)
    }

    /// `lambda_j = c (j + 1)^-s`, summable only for `s > 1`.
    pub fn p_series(grid: &ScaleGrid, c: f64, s: f64) -> Result<Self> {
        if !(s > 1.0) {
            return Err(invalid(format!("sum of (j+1)^-{s} diverges; the exponent must exceed 1")));
        }
        if !(c > 0.0) {
            return Err(invalid("modulus scale must be positive"));
        }
        Self::explicit((0..grid.len()).map(|j| c * ((j + 1) as f64).powf(-s)).collect(), grid)
    }
}

/// Parameters of a single-point sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub alpha: f64,
    pub lambda: f64,
    /// Extra exponents; 2 and infinity are always computed.
    pub p_list: Vec<Exponent>,
    pub fit: FitOptions,
}

impl ProfileParams {
    pub fn new(alpha: f64, lambda: f64) -> Self {
        Self { alpha, lambda, p_list: vec![Exponent::Finite(2.0), Exponent::Infinity], fit: FitOptions::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        self.fit.validate()
    }

    fn exponents(&self) -> Vec<Exponent> {
        let mut out = vec![Exponent::Finite(2.0), Exponent::Infinity];
        for p in &self.p_list {
            if !out.contains(p) {
                out.push(*p);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaValue {
    pub p: Exponent,
    pub value: f64,
}

/// Everything measured at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub r: f64,
    pub valid: bool,
    pub mass: f64,
    /// `mass / (2r)^k`.
    pub density: f64,
    /// The `beta_2` plane `V_j`.
    pub plane: Option<AffinePlane>,
    pub betas: Vec<BetaValue>,
    /// Mass of `B(x, r)` outside `B(V_j, lambda r^(1+alpha))`, over `r^k`.
    pub cyl_excess: Option<f64>,
    /// Mass of `B(x, r)` outside `Q_alpha(x, V_ref, lambda)`, over `r^k`.
    pub parab_excess: Option<f64>,
    /// `d(V_j, V_{j+1})` when both scales are valid.
    pub theta: Option<f64>,
}

impl ScaleRecord {
    pub fn beta(&self, p: Exponent) -> Option<f64> {
        self.betas.iter().find(|b| b.p == p).map(|b| b.value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointProfile {
    pub x: Vec<f64>,
    pub k: usize,
    pub alpha: f64,
    pub lambda: f64,
    /// Linear part of the finest valid `V_j`; the paraboloid axis.
    pub reference_plane: Option<LinearPlane>,
    pub scales: Vec<ScaleRecord>,
}

impl PointProfile {
    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.scales.len()).filter(|&j| self.scales[j].valid).collect()
    }

    /// The `m` finest valid scales.
    pub fn tail(&self, m: usize) -> Vec<usize> {
        let valid = self.valid_indices();
        let start = valid.len().saturating_sub(m);
        valid[start..].to_vec()
    }

    pub fn thetas(&self) -> Vec<Option<f64>> {
        self.scales.iter().map(|s| s.theta).collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.scales.iter().map(|s| s.r).collect()
    }
}

fn outside_mass(hood: &Neighborhood, region: &Region) -> f64 {
    let mut acc = ExactSum::new();
    for (i, w) in hood.weights.iter().enumerate() {
        if !region.contains_unchecked(hood.point(i)) {
            acc.add(*w);
        }
    }
    acc.value()
}

/// Width of the rotating-plane cylinder at radius `r`; the modulus criterion
/// with `lambda_j = lambda r_j^alpha` evaluates the same expression.
fn holder_width(lambda: f64, alpha: f64, r: f64) -> f64 {
    (lambda * r.powf(alpha)) * r
}

/// Sweeps all scales at `x`.
pub fn point_profile(cloud: &WeightedCloud, x: &[f64], grid: &ScaleGrid, params: &ProfileParams) -> Result<PointProfile> {
    params.validate()?;
    check_dim(cloud.ambient_dim(), x.len())?;
    let k = cloud.intrinsic_dim();
    let clearance = cloud.clearance(x)?;
    let exponents = params.exponents();
    let mut hoods: Vec<Option<Neighborhood>> = Vec::with_capacity(grid.len());
    let mut scales = Vec::with_capacity(grid.len());
    for r in grid.radii() {
        let hood = Neighborhood::gather(cloud, x, r)?;
        let valid = clearance >= r && hood.mass > 0.0;
        let mut record = ScaleRecord {
            r,
            valid,
            mass: hood.mass,
            density: hood.mass / (2.0 * r).powi(k as i32),
            plane: None,
            betas: Vec::new(),
            cyl_excess: None,
            parab_excess: None,
            theta: None,
        };
        if valid {
            let fit = beta2_of(&hood)?;
            for &p in &exponents {
                let value = match p {
                    Exponent::Finite(q) if q == 2.0 => fit.value,
                    _ => betap_from_seed(&hood, p, &params.fit, fit.clone())?.value,
                };
                record.betas.push(BetaValue { p, value });
            }
            let cylinder = Region::Cylinder {
                plane: fit.plane.clone(),
                width: holder_width(params.lambda, params.alpha, r),
            };
            record.cyl_excess = Some(outside_mass(&hood, &cylinder) / r.powi(k as i32));
            record.plane = Some(fit.plane);
            hoods.push(Some(hood));
        } else {
            hoods.push(None);
        }
        scales.push(record);
    }
    for j in 0..scales.len().saturating_sub(1) {
        if let (Some(a), Some(b)) = (&scales[j].plane, &scales[j + 1].plane) {
            scales[j].theta = Some(grassmann_distance(a, b)?);
        }
    }
    let reference_plane = scales.iter().rev().find_map(|s| s.plane.as_ref()).map(|p| p.linear().clone());
    if let Some(v) = &reference_plane {
        let region = Region::paraboloid(x.to_vec(), v.clone(), params.lambda, params.alpha)?;
        for (record, hood) in scales.iter_mut().zip(&hoods) {
            if let Some(hood) = hood {
                record.parab_excess = Some(outside_mass(hood, &region) / record.r.powi(k as i32));
            }
        }
    }
    Ok(PointProfile { x: x.to_vec(), k, alpha: params.alpha, lambda: params.lambda, reference_plane, scales })
}

/// Which hypothesis or conclusion of the stabilization lemma failed first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilizationFailure {
    /// No common point of the two cylinders inside `B(x, r_j)` was found.
    Intersection,
    /// `theta_j > C r_j^alpha`.
    ThetaBound,
    /// A point of `B(V_j, lambda r_j^(1+alpha)) ∩ B(x, r_j)` escapes
    /// `B(V_inf, lambda'' r_j^(1+alpha))`.
    Containment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stabilization {
    /// Linear part of the finest plane, placed through `x` when used.
    pub v_inf: LinearPlane,
    pub lambda_dprime: f64,
    /// `x_j`, the point of `V_j` nearest to `x`, per scale (absent scales
    /// had no plane).
    pub nearest_points: Vec<Option<Vec<f64>>>,
    /// `|x_j - x| <= (2 lambda + C) r_j^(1+alpha) / (1 - rho^(1+alpha))` at
    /// every scale.
    pub nearest_bound_ok: bool,
    pub hypotheses_ok: bool,
    pub certified: bool,
    pub first_violation: Option<(usize, StabilizationFailure)>,
}

impl Stabilization {
    /// The cylinder `B(x + V_inf, lambda'' r^(1+alpha))`.
    pub fn limit_cylinder(&self, x: &[f64], r: f64, alpha: f64) -> Result<Region> {
        Region::cylinder(AffinePlane::through(self.v_inf.clone(), x)?, self.lambda_dprime * r.powf(1.0 + alpha))
    }
}

/// Stabilization from a bare plane sequence: checks both hypotheses for
/// every consecutive pair and the nearest-point bound. `certified` here
/// reflects the hypotheses only; [`stabilize_planes`] adds the containment
/// check against cloud points.
#[allow(clippy::too_many_arguments)]
pub fn stabilize_sequence(
    x: &[f64],
    planes: &[Option<AffinePlane>],
    radii: &[f64],
    lambda: f64,
    alpha: f64,
    c: f64,
    rho: f64,
) -> Result<Stabilization> {
    check_dim(radii.len(), planes.len())?;
    let present: Vec<usize> = (0..planes.len()).filter(|&j| planes[j].is_some()).collect();
    if present.len() < 2 || !present.windows(2).any(|w| w[1] == w[0] + 1) {
        return Err(Error::InsufficientData("need two consecutive scales with planes".into()));
    }
    let finest = planes[*present.last().expect("non-empty")].as_ref().expect("present");
    let v_inf = finest.linear().clone();
    let lambda_dprime = crate::geometry::stabilized_lambda(lambda, c, rho, alpha);
    let mut first_violation = None;
    for w in present.windows(2) {
        let (j, next) = (w[0], w[1]);
        if next != j + 1 {
            continue;
        }
        let (a, b) = (planes[j].as_ref().expect("present"), planes[next].as_ref().expect("present"));
        let r = radii[j];
        let theta = grassmann_distance(a, b)?;
        if theta > c * r.powf(alpha) + BOUNDARY_TOL {
            first_violation = Some((j, StabilizationFailure::ThetaBound));
            break;
        }
        let width = lambda * r.powf(1.0 + alpha);
        if intersection_witness(x, a, b, width, r).is_none() {
            first_violation = Some((j, StabilizationFailure::Intersection));
            break;
        }
    }
    let decay = 1.0 - rho.powf(1.0 + alpha);
    let mut nearest_bound_ok = true;
    let nearest_points: Vec<Option<Vec<f64>>> = planes
        .iter()
        .zip(radii)
        .map(|(plane, &r)| {
            plane.as_ref().map(|p| {
                let xj = p.nearest_point(x);
                let bound = (2.0 * lambda + c) * r.powf(1.0 + alpha) / decay;
                if dist_sq(&xj, x).sqrt() > bound + BOUNDARY_TOL {
                    nearest_bound_ok = false;
                }
                xj
            })
        })
        .collect();
    let hypotheses_ok = first_violation.is_none();
    Ok(Stabilization {
        v_inf,
        lambda_dprime,
        nearest_points,
        nearest_bound_ok,
        hypotheses_ok,
        certified: hypotheses_ok,
        first_violation,
    })
}

/// A point of `B(a, width) ∩ B(b, width) ∩ B(x, r)`, if one is found. The
/// three sets are convex; cyclic projections onto slightly shrunken copies
/// are run from `x` and from regularized least-squares points.
pub fn intersection_witness(x: &[f64], a: &AffinePlane, b: &AffinePlane, width: f64, r: f64) -> Option<Vec<f64>> {
    let n = x.len();
    let ok = |z: &[f64]| a.distance(z) < width && b.distance(z) < width && dist_sq(z, x) <= r * r;
    let na = a.linear().normal_basis();
    let nb = b.linear().normal_basis();
    let pa = na * na.transpose();
    let pb = nb * nb.transpose();
    let oa = nalgebra::DVector::from_column_slice(a.offset());
    let ob = nalgebra::DVector::from_column_slice(b.offset());
    let xv = nalgebra::DVector::from_column_slice(x);
    let mut starts = vec![x.to_vec()];
    for e in -12..=2 {
        let mu = 10f64.powi(e);
        let lhs = &pa + &pb + nalgebra::DMatrix::<f64>::identity(n, n) * mu;
        let rhs = &pa * &oa + &pb * &ob + &xv * mu;
        if let Some(z) = lhs.cholesky().map(|c| c.solve(&rhs)) {
            if ok(z.as_slice()) {
                return Some(z.as_slice().to_vec());
            }
            starts.push(z.as_slice().to_vec());
        }
    }
    let into_slab = |plane: &AffinePlane, z: &mut Vec<f64>| {
        let d = plane.distance(z);
        let target = 0.999 * width;
        if d > target {
            let foot = plane.nearest_point(z);
            let keep = target / d;
            for (zi, fi) in z.iter_mut().zip(&foot) {
                *zi = fi + (*zi - fi) * keep;
            }
        }
    };
    for start in starts {
        let mut z = start;
        for _ in 0..300 {
            into_slab(a, &mut z);
            into_slab(b, &mut z);
            let d = dist_sq(&z, x).sqrt();
            if d > 0.999 * r {
                let keep = 0.999 * r / d;
                for (zi, xi) in z.iter_mut().zip(x) {
                    *zi = xi + (*zi - xi) * keep;
                }
            }
            if ok(&z) {
                return Some(z);
            }
        }
    }
    None
}

/// Stabilization for a point profile, with the containment conclusion
/// checked on every cloud point of `B(V_j, lambda r_j^(1+alpha)) ∩ B(x, r_j)`.
pub fn stabilize_planes(
    cloud: &WeightedCloud,
    profile: &PointProfile,
    grid: &ScaleGrid,
    lambda: f64,
    alpha: f64,
    c: f64,
) -> Result<Stabilization> {
    let planes: Vec<Option<AffinePlane>> = profile.scales.iter().map(|s| s.plane.clone()).collect();
    let mut stab = stabilize_sequence(&profile.x, &planes, &profile.radii(), lambda, alpha, c, grid.rho)?;
    if !stab.hypotheses_ok {
        stab.certified = false;
        return Ok(stab);
    }
    for (j, record) in profile.scales.iter().enumerate() {
        let (Some(plane), true) = (&record.plane, record.valid) else { continue };
        let r = record.r;
        let strip = Region::cylinder(plane.clone(), lambda * r.powf(1.0 + alpha))?;
        let limit = stab.limit_cylinder(&profile.x, r, alpha)?;
        let escaped = cloud
            .ball_indices(&profile.x, r)?
            .into_iter()
            .any(|i| strip.contains_unchecked(cloud.point(i)) && !limit.contains_unchecked(cloud.point(i)));
        if escaped {
            stab.certified = false;
            stab.first_violation = Some((j, StabilizationFailure::Containment));
            break;
        }
    }
    Ok(stab)
}

/// Least-squares fit of `log theta = log C + alpha log r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub c_est: f64,
    /// `+inf` (serialized as `"inf"`) when every theta is at the floor: the
    /// planes are already stable.
    #[serde(with = "float_or_inf")]
    pub alpha_est: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub used: usize,
    /// Thetas at or below the floor, left out of the fit.
    pub excluded: usize,
}

impl HolderFit {
    pub fn is_stable(&self) -> bool {
        self.alpha_est == f64::INFINITY
    }
}

pub const THETA_FLOOR: f64 = 1e-12;

pub fn holder_fit(thetas: &[f64], radii: &[f64]) -> Result<HolderFit> {
    check_dim(radii.len(), thetas.len())?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&t, &r) in thetas.iter().zip(radii) {
        if t > THETA_FLOOR {
            xs.push(r.ln());
            ys.push(t.ln());
        }
    }
    let excluded = thetas.len() - xs.len();
    if xs.is_empty() && !thetas.is_empty() {
        return Ok(HolderFit { c_est: 0.0, alpha_est: f64::INFINITY, residual: 0.0, used: 0, excluded });
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!("{} positive rotation angles; need 3", xs.len())));
    }
    let line = fit_line(&xs, &ys).ok_or_else(|| Error::Degenerate("all radii coincide".into()))?;
    Ok(HolderFit { c_est: line.intercept.exp(), alpha_est: line.slope, residual: line.residual, used: xs.len(), excluded })
}

/// Holder fit over the valid consecutive-plane angles of a profile.
pub fn profile_holder_fit(profile: &PointProfile) -> Result<HolderFit> {
    let (thetas, radii): (Vec<f64>, Vec<f64>) =
        profile.scales.iter().filter_map(|s| s.theta.map(|t| (t, s.r))).unzip();
    holder_fit(&thetas, &radii)
}

mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Raw::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("not a number: {t}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Indeterminate,
}

/// A criterion's measured statistic against its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub statistic: Option<f64>,
    pub threshold: f64,
    pub scales_used: usize,
}

impl Verdict {
    fn indeterminate(threshold: f64) -> Self {
        Self { outcome: Outcome::Indeterminate, statistic: None, threshold, scales_used: 0 }
    }

    fn compare(statistic: f64, threshold: f64, scales_used: usize) -> Self {
        let outcome = if statistic < threshold { Outcome::Pass } else { Outcome::Fail };
        Self { outcome, statistic: Some(statistic), threshold, scales_used }
    }
}

/// Fixed-plane criterion from a profile: the largest paraboloid excess over
/// the tail against `eps_0(k)`.
pub fn fixed_plane_verdict(profile: &PointProfile, m_tail: usize) -> Verdict {
    let threshold = eps0(profile.k);
    let tail: Vec<f64> = profile.tail(m_tail).iter().filter_map(|&j| profile.scales[j].parab_excess).collect();
    if tail.is_empty() {
        return Verdict::indeterminate(threshold);
    }
    Verdict::compare(tail.iter().copied().fold(0.0, f64::max), threshold, tail.len())
}

pub const DENSITY_FLOOR: f64 = 1e-9;

/// Rotating-plane criterion from a profile: the largest cylinder excess over
/// the tail against `(1 - 2^-k) eps_0(k) Theta_*`, with `Theta_*` the least
/// tail density. Fails outright when `Theta_*` is not above the floor.
pub fn rotating_verdict(profile: &PointProfile, m_tail: usize) -> Verdict {
    let excesses: Vec<f64> = profile.tail(m_tail).iter().map(|&j| profile.scales[j].cyl_excess.unwrap_or(0.0)).collect();
    let densities: Vec<f64> = profile.tail(m_tail).iter().map(|&j| profile.scales[j].density).collect();
    rotating_from(profile.k, &excesses, &densities)
}

fn rotating_from(k: usize, excesses: &[f64], densities: &[f64]) -> Verdict {
    if excesses.is_empty() {
        return Verdict::indeterminate(0.0);
    }
    let theta_lower = densities.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = (1.0 - 0.5f64.powi(k as i32)) * eps0(k) * theta_lower;
    let statistic = excesses.iter().copied().fold(0.0, f64::max);
    if theta_lower <= DENSITY_FLOOR {
        return Verdict { outcome: Outcome::Fail, statistic: Some(statistic), threshold, scales_used: excesses.len() };
    }
    Verdict::compare(statistic, threshold, excesses.len())
}

/// Fixed-plane criterion at `x` against a given plane `V`.
pub fn criterion_fixed_plane(
    cloud: &WeightedCloud,
    x: &[f64],
    plane: &LinearPlane,
    grid: &ScaleGrid,
    lambda: f64,
    alpha: f64,
    m_tail: usize,
) -> Result<Verdict> {
    check_dim(cloud.ambient_dim(), x.len())?;
    let region = Region::paraboloid(x.to_vec(), plane.clone(), lambda, alpha)?;
    let clearance = cloud.clearance(x)?;
    let k = cloud.intrinsic_dim() as i32;
    let mut values = Vec::new();
    for r in grid.radii() {
        let split = cloud.mass_split(x, r, &region)?;
        if clearance >= r && split.total > 0.0 {
            values.push(split.outside / r.powi(k));
        }
    }
    let tail = &values[values.len().saturating_sub(m_tail)..];
    let threshold = eps0(cloud.intrinsic_dim());
    if tail.is_empty() {
        return Ok(Verdict::indeterminate(threshold));
    }
    Ok(Verdict::compare(tail.iter().copied().fold(0.0, f64::max), threshold, tail.len()))
}

/// Rotating-plane criterion at `x` with the `beta_2` planes.
pub fn criterion_rotating(
    cloud: &WeightedCloud,
    x: &[f64],
    grid: &ScaleGrid,
    lambda: f64,
    alpha: f64,
    m_tail: usize,
) -> Result<Verdict> {
    let modulus = ModulusSequence::holder(grid, lambda, alpha)?;
    Ok(modulus_scan(cloud, x, grid, &modulus, m_tail)?.0)
}

/// The rotating-plane criterion with cylinder width `lambda_j r_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusVerdict {
    pub verdict: Verdict,
    pub omegas: Vec<f64>,
}

pub fn modulus_criterion(
    cloud: &WeightedCloud,
    x: &[f64],
    grid: &ScaleGrid,
    modulus: &ModulusSequence,
    m_tail: usize,
) -> Result<ModulusVerdict> {
    let (verdict, _) = modulus_scan(cloud, x, grid, modulus, m_tail)?;
    Ok(ModulusVerdict { verdict, omegas: modulus.omegas.clone() })
}

fn modulus_scan(
    cloud: &WeightedCloud,
    x: &[f64],
    grid: &ScaleGrid,
    modulus: &ModulusSequence,
    m_tail: usize,
) -> Result<(Verdict, Vec<Option<f64>>)> {
    check_dim(cloud.ambient_dim(), x.len())?;
    check_dim(grid.len(), modulus.lambdas.len())?;
    let k = cloud.intrinsic_dim();
    let clearance = cloud.clearance(x)?;
    let mut per_scale = Vec::with_capacity(grid.len());
    let mut excesses = Vec::new();
    let mut densities = Vec::new();
    for (j, r) in grid.radii().into_iter().enumerate() {
        let hood = Neighborhood::gather(cloud, x, r)?;
        if !(clearance >= r && hood.mass > 0.0) {
            per_scale.push(None);
            continue;
        }
        let plane = beta2_of(&hood)?.plane;
        let region = Region::Cylinder { plane, width: modulus.lambdas[j] * r };
        let excess = outside_mass(&hood, &region) / r.powi(k as i32);
        per_scale.push(Some(excess));
        excesses.push(excess);
        densities.push(hood.mass / (2.0 * r).powi(k as i32));
    }
    let start = excesses.len().saturating_sub(m_tail);
    Ok((rotating_from(k, &excesses[start..], &densities[start..]), per_scale))
}

/// Beta-number statistics along the valid scales of a profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaDiagnostics {
    pub p: Exponent,
    /// `max_j r_j^-alpha beta_p(x, r_j)`.
    pub sup_stat: f64,
    /// Same maximum over the tail and over the remaining (coarser) scales.
    pub tail_sup: f64,
    pub head_sup: Option<f64>,
    /// `sum_j beta_2(x, r_j)^2`.
    pub jones_sum: f64,
    pub jones_tail: f64,
    /// `sum_j beta_inf(x, r_j)^2 / r_j^(2 alpha)`.
    pub ghinassi_sum: f64,
    pub ghinassi_tail: f64,
    /// Log-log slope of `beta_p` against `r` over scales with `beta_p > 0`.
    pub slope: Option<f64>,
    pub valid_scales: usize,
    pub tail_scales: usize,
}

pub fn beta_diagnostics_of(profile: &PointProfile, p: Exponent, m_tail: usize) -> Option<BetaDiagnostics> {
    let valid = profile.valid_indices();
    if valid.is_empty() {
        return None;
    }
    let alpha = profile.alpha;
    let tail_start = valid.len().saturating_sub(m_tail);
    let mut sup_head: Option<f64> = None;
    let (mut sup_tail, mut jones, mut jones_tail, mut ghin, mut ghin_tail) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (pos, &j) in valid.iter().enumerate() {
        let s = &profile.scales[j];
        let bp = s.beta(p)?;
        let b2 = s.beta(Exponent::Finite(2.0))?;
        let binf = s.beta(Exponent::Infinity)?;
        let stat = bp / s.r.powf(alpha);
        let jt = b2 * b2;
        let gt = binf * binf / s.r.powf(2.0 * alpha);
        jones += jt;
        ghin += gt;
        if pos >= tail_start {
            sup_tail = sup_tail.max(stat);
            jones_tail += jt;
            ghin_tail += gt;
        } else {
            sup_head = Some(sup_head.map_or(stat, |h| h.max(stat)));
        }
        if bp > 0.0 {
            xs.push(s.r.ln());
            ys.push(bp.ln());
        }
    }
    Some(BetaDiagnostics {
        p,
        sup_stat: sup_head.map_or(sup_tail, |h| h.max(sup_tail)),
        tail_sup: sup_tail,
        head_sup: sup_head,
        jones_sum: jones,
        jones_tail,
        ghinassi_sum: ghin,
        ghinassi_tail: ghin_tail,
        slope: fit_line(&xs, &ys).map(|l| l.slope),
        valid_scales: valid.len(),
        tail_scales: valid.len() - tail_start,
    })
}

/// Beta statistics at `x` computed from scratch.
pub fn beta_diagnostics(
    cloud: &WeightedCloud,
    x: &[f64],
    grid: &ScaleGrid,
    alpha: f64,
    p: Exponent,
    fit: &FitOptions,
    m_tail: usize,
) -> Result<Option<BetaDiagnostics>> {
    let mut params = ProfileParams::new(alpha, 1.0);
    params.p_list = vec![p];
    params.fit = *fit;
    let profile = point_profile(cloud, x, grid, &params)?;
    Ok(beta_diagnostics_of(&profile, p, m_tail))
}

/// Finite-data reading of "limsup r^-alpha beta_p < infinity": the tail
/// maximum may not exceed twice the maximum over the coarser scales.
pub fn beta_bound_verdict(diag: &BetaDiagnostics) -> Verdict {
    match diag.head_sup {
        None => Verdict::indeterminate(0.0),
        Some(head) => {
            let threshold = 2.0 * head;
            let outcome = if diag.tail_sup <= threshold { Outcome::Pass } else { Outcome::Fail };
            Verdict { outcome, statistic: Some(diag.tail_sup), threshold, scales_used: diag.tail_scales }
        }
    }
}

/// Finite-data reading of a convergent scale sum: the tail carries at most
/// half the share it would carry if every scale contributed equally.
fn tail_share_verdict(tail: f64, total: f64, tail_scales: usize, valid_scales: usize) -> Verdict {
    if tail_scales == 0 || valid_scales <= tail_scales {
        return Verdict::indeterminate(0.0);
    }
    let threshold = 0.5 * tail_scales as f64 / valid_scales as f64 * total;
    let outcome = if tail <= threshold { Outcome::Pass } else { Outcome::Fail };
    Verdict { outcome, statistic: Some(tail), threshold, scales_used: tail_scales }
}

pub fn jones_verdict(diag: &BetaDiagnostics) -> Verdict {
    tail_share_verdict(diag.jones_tail, diag.jones_sum, diag.tail_scales, diag.valid_scales)
}

pub fn ghinassi_verdict(diag: &BetaDiagnostics) -> Verdict {
    tail_share_verdict(diag.ghinassi_tail, diag.ghinassi_sum, diag.tail_scales, diag.valid_scales)
}

/// Parameters of a full classification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub alpha: f64,
    pub lambda: f64,
    pub delta: f64,
    #[serde(rename = "M")]
    pub upper: f64,
    pub grid: ScaleGrid,
    pub p_list: Vec<Exponent>,
    pub m_tail: usize,
    /// Every `stride`-th cloud point is a query point.
    pub stride: usize,
    pub fit: FitOptions,
}

impl ClassifyParams {
    pub fn new(grid: ScaleGrid) -> Self {
        Self {
            alpha: 1.0,
            lambda: 1.0,
            delta: 0.5,
            upper: 4.0,
            grid,
            p_list: vec![Exponent::Finite(2.0), Exponent::Infinity],
            m_tail: 5,
            stride: 1,
            fit: FitOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile_params().validate()?;
        if !(self.delta > 0.0 && self.upper >= self.delta) {
            return Err(invalid(format!("need 0 < delta <= M, got delta = {}, M = {}", self.delta, self.upper)));
        }
        if self.m_tail == 0 {
            return Err(invalid("the tail needs at least one scale"));
        }
        if self.stride == 0 {
            return Err(invalid("query stride must be positive"));
        }
        if self.p_list.is_empty() {
            return Err(invalid("at least one exponent is required"));
        }
        Ok(())
    }

    pub fn profile_params(&self) -> ProfileParams {
        ProfileParams { alpha: self.alpha, lambda: self.lambda, p_list: self.p_list.clone(), fit: self.fit }
    }

    /// `0.99 delta / (4^k + 1)`.
    pub fn uniform_eps(&self, k: usize) -> f64 {
        0.99 * self.delta / (4f64.powi(k as i32) + 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointVerdicts {
    pub fixed_paraboloid: Verdict,
    pub rotating_cylinder: Verdict,
    pub beta_bound: Vec<(Exponent, Verdict)>,
    pub jones_finite: Verdict,
    pub ghinassi_finite: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub index: usize,
    pub x: Vec<f64>,
    pub verdicts: PointVerdicts,
    pub diagnostics: Vec<BetaDiagnostics>,
    /// Member of the uniform subset `F'`.
    pub uniform: bool,
    pub profile: PointProfile,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub pass: usize,
    pub fail: usize,
    pub indeterminate: usize,
    /// `pass / (pass + fail)`, absent when nothing was decided.
    pub pass_fraction: Option<f64>,
}

impl Tally {
    fn of<'a>(verdicts: impl Iterator<Item = &'a Verdict>) -> Self {
        let mut t = Tally::default();
        for v in verdicts {
            match v.outcome {
                Outcome::Pass => t.pass += 1,
                Outcome::Fail => t.fail += 1,
                Outcome::Indeterminate => t.indeterminate += 1,
            }
        }
        let decided = t.pass + t.fail;
        t.pass_fraction = (decided > 0).then(|| t.pass as f64 / decided as f64);
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub query_points: usize,
    pub fixed_paraboloid: Tally,
    pub rotating_cylinder: Tally,
    pub beta_bound: Vec<(Exponent, Tally)>,
    pub jones_finite: Tally,
    pub ghinassi_finite: Tally,
    pub uniform_count: usize,
    pub uniform_eps: f64,
    pub uniform_diameter: Option<f64>,
    /// `diam(F') <= r1`: the single-graph regime.
    pub single_graph_regime: bool,
    /// No query point had a valid scale.
    pub all_indeterminate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub params: ClassifyParams,
    pub constants: ConstantSet,
    pub per_point: Vec<PointReport>,
    pub aggregate: Aggregate,
}

fn uniform_member(profile: &PointProfile, params: &ClassifyParams, eps: f64) -> bool {
    let k = profile.k as i32;
    let valid = profile.valid_indices();
    !valid.is_empty()
        && valid.iter().all(|&j| {
            let s = &profile.scales[j];
            let rk = s.r.powi(k);
            params.delta * rk <= s.mass && s.mass <= params.upper * rk && s.parab_excess.is_some_and(|e| e < eps)
        })
}

fn evaluate_point(cloud: &WeightedCloud, index: usize, params: &ClassifyParams, eps: f64) -> Result<PointReport> {
    let x = cloud.point(index).to_vec();
    let profile = point_profile(cloud, &x, &params.grid, &params.profile_params())?;
    let diagnostics: Vec<BetaDiagnostics> =
        params.p_list.iter().filter_map(|&p| beta_diagnostics_of(&profile, p, params.m_tail)).collect();
    let beta_bound = params
        .p_list
        .iter()
        .map(|&p| {
            let v = diagnostics.iter().find(|d| d.p == p).map_or(Verdict::indeterminate(0.0), beta_bound_verdict);
            (p, v)
        })
        .collect();
    let sums = beta_diagnostics_of(&profile, Exponent::Infinity, params.m_tail);
    let verdicts = PointVerdicts {
        fixed_paraboloid: fixed_plane_verdict(&profile, params.m_tail),
        rotating_cylinder: rotating_verdict(&profile, params.m_tail),
        beta_bound,
        jones_finite: sums.as_ref().map_or(Verdict::indeterminate(0.0), jones_verdict),
        ghinassi_finite: sums.as_ref().map_or(Verdict::indeterminate(0.0), ghinassi_verdict),
    };
    let uniform = uniform_member(&profile, params, eps);
    Ok(PointReport { index, x, verdicts, diagnostics, uniform, profile })
}

/// Indices of the query points: every `stride`-th point.
pub fn query_indices(cloud: &WeightedCloud, stride: usize) -> Vec<usize> {
    (0..cloud.len()).step_by(stride.max(1)).collect()
}

/// Runs every criterion at the query points. Points are processed in
/// parallel; the report is assembled in point order and does not depend on
/// the schedule.
pub fn classify(cloud: &WeightedCloud, params: &ClassifyParams) -> Result<CriterionReport> {
    params.validate()?;
    params.grid.check_resolution(cloud)?;
    let k = cloud.intrinsic_dim();
    let constants = rectifiability_constants(
        k,
        cloud.ambient_dim(),
        params.alpha,
        params.lambda,
        params.delta,
        params.upper,
        params.grid.rho,
    )?;
    let eps = params.uniform_eps(k);
    let per_point: Vec<PointReport> = query_indices(cloud, params.stride)
        .into_par_iter()
        .map(|i| evaluate_point(cloud, i, params, eps))
        .collect::<Result<_>>()?;
    let members: Vec<&[f64]> = per_point.iter().filter(|p| p.uniform).map(|p| p.x.as_slice()).collect();
    let uniform_diameter = (!members.is_empty()).then(|| {
        let mut d2 = 0.0f64;
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                d2 = d2.max(dist_sq(a, b));
            }
        }
        d2.sqrt()
    });
    let beta_bound = params
        .p_list
        .iter()
        .enumerate()
        .map(|(pos, &p)| (p, Tally::of(per_point.iter().map(|r| &r.verdicts.beta_bound[pos].1))))
        .collect();
    let all_indeterminate = per_point.iter().all(|p| p.profile.valid_indices().is_empty());
    let aggregate = Aggregate {
        query_points: per_point.len(),
        fixed_paraboloid: Tally::of(per_point.iter().map(|r| &r.verdicts.fixed_paraboloid)),
        rotating_cylinder: Tally::of(per_point.iter().map(|r| &r.verdicts.rotating_cylinder)),
        beta_bound,
        jones_finite: Tally::of(per_point.iter().map(|r| &r.verdicts.jones_finite)),
        ghinassi_finite: Tally::of(per_point.iter().map(|r| &r.verdicts.ghinassi_finite)),
        uniform_count: members.len(),
        uniform_eps: eps,
        uniform_diameter,
        single_graph_regime: uniform_diameter.is_some_and(|d| d <= constants.r1),
        all_indeterminate,
    };
    Ok(CriterionReport { params: params.clone(), constants, per_point, aggregate })
}

/// Per-point output of an analysis run (profiles without verdicts).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointAnalysis {
    pub index: usize,
    pub x: Vec<f64>,
    pub diagnostics: Vec<BetaDiagnostics>,
    pub holder: Option<HolderFit>,
    pub stabilization: Option<Stabilization>,
    pub profile: PointProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub params: ClassifyParams,
    pub constants: ConstantSet,
    pub per_point: Vec<PointAnalysis>,
}

/// Profiles, beta statistics, Hölder fits and plane stabilization (with the
/// derived constant `C`) at every query point.
pub fn analyze(cloud: &WeightedCloud, params: &ClassifyParams) -> Result<AnalysisReport> {
    params.validate()?;
    params.grid.check_resolution(cloud)?;
    let constants = rectifiability_constants(
        cloud.intrinsic_dim(),
        cloud.ambient_dim(),
        params.alpha,
        params.lambda,
        params.delta,
        params.upper,
        params.grid.rho,
    )?;
    let per_point = query_indices(cloud, params.stride)
        .into_par_iter()
        .map(|index| {
            let x = cloud.point(index).to_vec();
            let profile = point_profile(cloud, &x, &params.grid, &params.profile_params())?;
            let diagnostics =
                params.p_list.iter().filter_map(|&p| beta_diagnostics_of(&profile, p, params.m_tail)).collect();
            let holder = profile_holder_fit(&profile).ok();
            let stabilization =
                stabilize_planes(cloud, &profile, &params.grid, params.lambda, params.alpha, constants.c_key).ok();
            Ok(PointAnalysis { index, x, diagnostics, holder, stabilization, profile })
        })
        .collect::<Result<_>>()?;
    Ok(AnalysisReport { params: params.clone(), constants, per_point })
}

/// Exact `beta_2` at every radius of the grid (`None` for empty balls).
pub fn beta2_sequence(cloud: &WeightedCloud, x: &[f64], radii: &[f64]) -> Result<Vec<Option<BetaResult>>> {
    radii
        .iter()
        .map(|&r| {
            let hood = Neighborhood::gather(cloud, x, r)?;
            if hood.mass > 0.0 {
                beta2_of(&hood).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}
