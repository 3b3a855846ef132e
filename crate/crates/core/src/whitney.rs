//! Whitney `C^{1,alpha}` jet conditions on finite sets, and the pipeline that
//! turns paraboloid containment plus Hölder-varying planes into a graph jet.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::WeightedCloud;
use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{grassmann_distance, slanted_lambda, LinearPlane, Region, SlantMap};
use crate::numeric::{dist_sq, norm, spectral_norm};

/// Pair loops stop growing here; larger inputs are subsampled with a fixed
/// stride.
pub const PAIR_CAP: usize = 20_000;

/// Largest admissible `d(V_x, base)` for a graph parameterization.
pub const TILT_LIMIT: f64 = 0.25;

/// Values `f(x) ∈ R^d` and derivatives `L_x : R^k -> R^d` on base points in
/// `R^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct JetData {
    pub base_points: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    /// `d x k` matrices.
    pub derivatives: Vec<DMatrix<f64>>,
    pub alpha: f64,
}

impl JetData {
    pub fn new(base_points: Vec<Vec<f64>>, values: Vec<Vec<f64>>, derivatives: Vec<DMatrix<f64>>, alpha: f64) -> Result<Self> {
        let jet = Self { base_points, values, derivatives, alpha };
        jet.validate()?;
        Ok(jet)
    }

    pub fn validate(&self) -> Result<()> {
        let count = self.base_points.len();
        check_dim(count, self.values.len())?;
        check_dim(count, self.derivatives.len())?;
        if count == 0 {
            return Err(invalid("a jet needs at least one base point"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        let k = self.base_points[0].len();
        let d = self.values[0].len();
        for i in 0..count {
            check_dim(k, self.base_points[i].len())?;
            check_dim(d, self.values[i].len())?;
            check_dim(d, self.derivatives[i].nrows())?;
            check_dim(k, self.derivatives[i].ncols())?;
            let finite = self.base_points[i].iter().chain(&self.values[i]).chain(self.derivatives[i].iter()).all(|v| v.is_finite());
            if !finite {
                return Err(invalid(format!("jet entry {i} is not finite")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.base_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_points.is_empty()
    }

    /// `f` and `L` both linear in the base point: `f(x) = A x + b`, `L = A`.
    pub fn affine(base_points: Vec<Vec<f64>>, a: &DMatrix<f64>, b: &[f64], alpha: f64) -> Result<Self> {
        let values = base_points
            .iter()
            .map(|x| {
                let ax = a * nalgebra::DVector::from_column_slice(x);
                ax.iter().zip(b).map(|(u, v)| u + v).collect()
            })
            .collect();
        let derivatives = vec![a.clone(); base_points.len()];
        Self::new(base_points, values, derivatives, alpha)
    }
}

#[derive(Serialize, Deserialize)]
struct JetRecord {
    base_points: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    /// Row-major nested lists.
    derivatives: Vec<Vec<Vec<f64>>>,
    alpha: f64,
}

impl Serialize for JetData {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let derivatives = self
            .derivatives
            .iter()
            .map(|m| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
            .collect();
        JetRecord { base_points: self.base_points.clone(), values: self.values.clone(), derivatives, alpha: self.alpha }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for JetData {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = JetRecord::deserialize(d)?;
        let k = rec.base_points.first().map_or(0, Vec::len);
        let mut derivatives = Vec::with_capacity(rec.derivatives.len());
        for rows in &rec.derivatives {
            if rows.iter().any(|r| r.len() != k) {
                return Err(serde::de::Error::custom(format!("derivative rows must have {k} entries")));
            }
            derivatives.push(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]));
        }
        JetData::new(rec.base_points, rec.values, derivatives, rec.alpha).map_err(serde::de::Error::custom)
    }
}

/// Smallest constants for which the jet satisfies the three Whitney
/// conditions on the (possibly subsampled) base points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyConstants {
    /// `max |f(y) - f(x) - L_x(y - x)| / |x - y|^(1+alpha)` over ordered pairs.
    pub m_taylor: f64,
    /// `max ||L_x - L_y|| / |x - y|^alpha`.
    pub m_holder: f64,
    /// `max(|f(x)|, ||L_x||)`.
    pub m_bound: f64,
    pub m: f64,
    pub points_used: usize,
    pub subsampled: bool,
}

fn subsample(count: usize) -> (Vec<usize>, bool) {
    if count <= PAIR_CAP {
        ((0..count).collect(), false)
    } else {
        let stride = count.div_ceil(PAIR_CAP);
        ((0..count).step_by(stride).collect(), true)
    }
}

fn apply(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 || m.ncols() == 1 {
        m.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        spectral_norm(m)
    }
}

pub fn whitney_constants(jet: &JetData) -> Result<WhitneyConstants> {
    jet.validate()?;
    let (used, subsampled) = subsample(jet.len());
    let alpha = jet.alpha;
    let m_bound = used
        .iter()
        .map(|&i| norm(&jet.values[i]).max(operator_norm(&jet.derivatives[i])))
        .fold(0.0, f64::max);
    // Per row: (taylor max, holder max, positive-distance partner seen).
    // Rows are gathered before error selection so the reported pair does not
    // depend on the schedule.
    let rows: Vec<(f64, f64, bool)> = used
        .par_iter()
        .map(|&i| {
            let (x, fx, lx) = (&jet.base_points[i], &jet.values[i], &jet.derivatives[i]);
            let (mut taylor, mut holder, mut distinct) = (0.0f64, 0.0f64, false);
            for &j in &used {
                if i == j {
                    continue;
                }
                let y = &jet.base_points[j];
                let d = dist_sq(x, y).sqrt();
                if d == 0.0 {
                    if jet.values[i] != jet.values[j] || jet.derivatives[i] != jet.derivatives[j] {
                        return Err(Error::InconsistentJet { first: i.min(j), second: i.max(j) });
                    }
                    continue;
                }
                distinct = true;
                let step: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
                let predicted = apply(lx, &step);
                let remainder: Vec<f64> =
                    jet.values[j].iter().zip(fx).zip(&predicted).map(|((fy, fx), p)| fy - fx - p).collect();
                taylor = taylor.max(norm(&remainder) / d.powf(1.0 + alpha));
                if i < j {
                    holder = holder.max(operator_norm(&(lx - &jet.derivatives[j])) / d.powf(alpha));
                }
            }
            Ok((taylor, holder, distinct))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    if !rows.iter().any(|r| r.2) {
        return Err(Error::InsufficientData("need at least two distinct base points".into()));
    }
    let m_taylor = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let m_holder = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(WhitneyConstants {
        m_taylor,
        m_holder,
        m_bound,
        m: m_taylor.max(m_holder).max(m_bound),
        points_used: used.len(),
        subsampled,
    })
}

/// Reads the cloud as a graph over `base`: base points are tangential
/// coordinates, values normal coordinates, derivatives the slopes of each
/// `V_x` over `base`.
pub fn graph_jet_from_cloud(
    cloud: &WeightedCloud,
    planes: &[LinearPlane],
    base: &LinearPlane,
    alpha: f64,
) -> Result<JetData> {
    check_dim(cloud.len(), planes.len())?;
    check_dim(cloud.ambient_dim(), base.ambient_dim())?;
    check_dim(cloud.intrinsic_dim(), base.dim())?;
    let mut derivatives = Vec::with_capacity(planes.len());
    for (index, v) in planes.iter().enumerate() {
        let distance = grassmann_distance(v, base)?;
        if distance > TILT_LIMIT {
            return Err(Error::Tilt { index, distance, limit: TILT_LIMIT });
        }
        derivatives.push(SlantMap::of_plane(v, base)?.matrix().clone());
    }
    let base_points: Vec<Vec<f64>> = cloud.points().map(|y| base.tangent_coords(y)).collect();
    let values: Vec<Vec<f64>> = cloud.points().map(|y| base.normal_coords(y)).collect();
    let mut order: Vec<usize> = (0..base_points.len()).collect();
    order.sort_by(|&a, &b| {
        base_points[a]
            .iter()
            .zip(&base_points[b])
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for w in order.windows(2) {
        if base_points[w[0]] == base_points[w[1]] {
            return Err(Error::NotAGraph { first: w[0].min(w[1]), second: w[0].max(w[1]) });
        }
    }
    JetData::new(base_points, values, derivatives, alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricLemmaReport {
    /// Every `y` lies in `Q_alpha(x, V_x, lambda)` and
    /// `d(V_x, V_y) <= C |x - y|^alpha`, over all checked pairs.
    pub hypotheses_ok: bool,
    pub containment_violations: usize,
    pub holder_violations: usize,
    pub first_violation: Option<(usize, usize)>,
    pub diameter: f64,
    /// `min{(4C)^(-1/alpha), (4 lambda)^(-1/alpha)}`.
    pub diameter_bound: f64,
    pub diam_ok: bool,
    /// Slanted-paraboloid constant `6 4^alpha lambda`: a bound for the Taylor
    /// constant of the emitted jet.
    pub slanted_lambda: f64,
    pub jet: Option<JetData>,
    pub constants: Option<WhitneyConstants>,
    pub warning: Option<String>,
    pub points_used: usize,
}

/// Checks the hypotheses of the single-graph lemma on a cloud with planes
/// `V_x` and, when they hold, builds the graph jet over the first point's
/// plane and measures its Whitney constants.
pub fn geometric_lemma_check(
    cloud: &WeightedCloud,
    planes: &[LinearPlane],
    lambda: f64,
    c: f64,
    alpha: f64,
) -> Result<GeometricLemmaReport> {
    check_dim(cloud.len(), planes.len())?;
    if !(lambda > 0.0 && c > 0.0 && alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("need lambda > 0, C > 0 and alpha in (0, 1]"));
    }
    let (used, subsampled) = subsample(cloud.len());
    let regions: Vec<Region> = used
        .iter()
        .map(|&i| Region::paraboloid(cloud.point(i).to_vec(), planes[i].clone(), lambda, alpha))
        .collect::<Result<_>>()?;
    // Per row: (containment violations, Hölder violations, first bad partner, max distance^2).
    let rows: Vec<(usize, usize, Option<usize>, f64)> = used
        .par_iter()
        .enumerate()
        .map(|(a, &i)| {
            let x = cloud.point(i);
            let (mut contain, mut holder, mut first, mut diam2) = (0usize, 0usize, None, 0.0f64);
            for &j in &used {
                if i == j {
                    continue;
                }
                let y = cloud.point(j);
                let d2 = dist_sq(x, y);
                diam2 = diam2.max(d2);
                let mut bad = false;
                if !regions[a].contains_unchecked(y) {
                    contain += 1;
                    bad = true;
                }
                if i < j {
                    let theta = grassmann_distance(&planes[i], &planes[j])?;
                    if theta > c * d2.sqrt().powf(alpha) + crate::geometry::BOUNDARY_TOL {
                        holder += 1;
                        bad = true;
                    }
                }
                if bad && first.is_none() {
                    first = Some(j);
                }
            }
            Ok((contain, holder, first, diam2))
        })
        .collect::<Result<_>>()?;
    let containment_violations = rows.iter().map(|r| r.0).sum();
    let holder_violations = rows.iter().map(|r| r.1).sum();
    let first_violation = used.iter().zip(&rows).find_map(|(&i, r)| r.2.map(|j| (i, j)));
    let diameter = rows.iter().map(|r| r.3).fold(0.0, f64::max).sqrt();
    let diameter_bound = (4.0 * c).powf(-1.0 / alpha).min((4.0 * lambda).powf(-1.0 / alpha));
    let hypotheses_ok = containment_violations == 0 && holder_violations == 0;
    let diam_ok = diameter <= diameter_bound;
    let mut report = GeometricLemmaReport {
        hypotheses_ok,
        containment_violations,
        holder_violations,
        first_violation,
        diameter,
        diameter_bound,
        diam_ok,
        slanted_lambda: slanted_lambda(lambda, alpha),
        jet: None,
        constants: None,
        warning: None,
        points_used: used.len(),
    };
    if subsampled {
        report.warning = Some(format!("pairs checked on {} of {} points", used.len(), cloud.len()));
    }
    if !hypotheses_ok {
        return Ok(report);
    }
    if !diam_ok {
        report.warning = Some(format!(
            "diameter {diameter} exceeds {diameter_bound}; the single-graph conclusion is not guaranteed"
        ));
    }
    match graph_jet_from_cloud(cloud, planes, &planes[0], alpha) {
        Ok(jet) => {
            report.constants = Some(whitney_constants(&jet)?);
            report.jet = Some(jet);
        }
        Err(e) => report.warning = Some(format!("no graph jet: {e}")),
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn scalar_jet(xs: &[f64], f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, alpha: f64) -> JetData {
        JetData::new(
            xs.iter().map(|&x| vec![x]).collect(),
            xs.iter().map(|&x| vec![f(x)]).collect(),
            xs.iter().map(|&x| DMatrix::from_element(1, 1, df(x))).collect(),
            alpha,
        )
        .unwrap()
    }

    #[test]
    fn square_jet_constants() {
        let xs: Vec<f64> = (0..=4).map(|i| i as f64 * 0.25).collect();
        let m = whitney_constants(&scalar_jet(&xs, |x| x * x, |x| 2.0 * x, 1.0)).unwrap();
        assert_eq!(m.m_taylor, 1.0);
        assert_eq!(m.m_holder, 2.0);
        assert_eq!(m.m_bound, 2.0);
    }

    #[test]
    fn affine_jet_is_flat() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.25, 0.75]];
        let m = whitney_constants(&JetData::affine(pts, &a, &[1.0, 2.0], 0.5).unwrap()).unwrap();
        assert!(m.m_taylor < 1e-15 && m.m_holder == 0.0);
    }

    #[test]
    fn three_halves_power_blows_up() {
        let taylor = |h: f64| {
            let xs: Vec<f64> = (0..=(1.0 / h).round() as usize).map(|i| i as f64 * h).collect();
            let f = |x: f64| x.abs().powf(1.5);
            let df = |x: f64| x.signum() * 1.5 * x.abs().sqrt();
            whitney_constants(&scalar_jet(&xs, f, df, 1.0)).unwrap().m_taylor
        };
        // The pair (0, h) gives |f(h) - f(0)| / h^2 = h^(-1/2), the maximum.
        for level in 2..9 {
            let h = 0.5f64.powi(level);
            let m = taylor(h);
            assert!((m - h.powf(-0.5)).abs() < 1e-9 * m, "{m}");
            assert!((taylor(h / 2.0) / m - 2f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn conflicting_duplicates_rejected() {
        let jet = scalar_jet(&[0.0, 0.5, 0.5], |x| x, |_| 1.0, 1.0);
        let mut bad = jet.clone();
        bad.values[2][0] = 7.0;
        assert!(whitney_constants(&jet).is_ok());
        assert!(matches!(whitney_constants(&bad), Err(Error::InconsistentJet { first: 1, second: 2 })));
        assert!(whitney_constants(&scalar_jet(&[0.5], |x| x, |_| 1.0, 1.0)).is_err());
    }

    #[test]
    fn jet_json_round_trip() {
        let jet = scalar_jet(&[0.0, 0.3, 1.0], |x| x * x, |x| 2.0 * x, 0.7);
        let text = serde_json::to_string(&jet).unwrap();
        assert_eq!(serde_json::from_str::<JetData>(&text).unwrap(), jet);
        assert!(serde_json::from_str::<JetData>(r#"{"base_points":[[0]],"values":[[0]],"derivatives":[[[1,2]]],"alpha":1}"#).is_err());
    }

    fn parabola_cloud(count: usize, half_width: f64) -> (WeightedCloud, Vec<LinearPlane>) {
        let ts: Vec<f64> = (0..count).map(|i| -half_width + 2.0 * half_width * i as f64 / (count - 1) as f64).collect();
        let pts: Vec<Vec<f64>> = ts.iter().map(|&t| vec![t, 0.5 * t * t]).collect();
        let planes = ts.iter().map(|&t| LinearPlane::from_spanning(2, &[vec![1.0, t]]).unwrap()).collect();
        (WeightedCloud::new(1, &pts, vec![1.0 / count as f64; count]).unwrap(), planes)
    }

    #[test]
    fn parabola_graph_jet() {
        let (cloud, planes) = parabola_cloud(101, 0.2);
        let base = LinearPlane::coordinate(2, 1).unwrap();
        let jet = graph_jet_from_cloud(&cloud, &planes, &base, 1.0).unwrap();
        for (x, l) in jet.base_points.iter().zip(&jet.derivatives) {
            assert!((l[(0, 0)] - x[0]).abs() < 1e-12);
        }
        let m = whitney_constants(&jet).unwrap();
        assert!((m.m_taylor - 0.5).abs() < 1e-9, "{m:?}");
    }

    #[test]
    fn graph_errors() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let cloud = WeightedCloud::new(1, &pts, vec![1.0; 3]).unwrap();
        let base = LinearPlane::coordinate(2, 1).unwrap();
        let flat = vec![base.clone(); 3];
        assert!(matches!(graph_jet_from_cloud(&cloud, &flat, &base, 1.0), Err(Error::NotAGraph { first: 0, second: 1 })));
        let tilted = LinearPlane::from_spanning(2, &[vec![0.5f64.asin().cos(), 0.5]]).unwrap();
        let planes = vec![base.clone(), base.clone(), tilted];
        assert!(matches!(graph_jet_from_cloud(&cloud, &planes, &base, 1.0), Err(Error::Tilt { index: 2, .. })));
    }

    #[test]
    fn lemma_check_on_arc_and_crosses() {
        // Arc of the unit circle with diameter 0.01 and its tangents.
        let count = 60;
        let pts: Vec<Vec<f64>> = (0..count)
            .map(|i| {
                let s = -0.005 + 0.01 * i as f64 / (count - 1) as f64;
                vec![s.sin(), s.cos()]
            })
            .collect();
        let planes: Vec<LinearPlane> =
            pts.iter().map(|p| LinearPlane::from_spanning(2, &[vec![p[1], -p[0]]]).unwrap()).collect();
        let cloud = WeightedCloud::new(1, &pts, vec![0.01 / count as f64; count]).unwrap();
        let report = geometric_lemma_check(&cloud, &planes, 1.0, 1.0, 1.0).unwrap();
        assert!(report.hypotheses_ok && report.diam_ok, "{report:?}");
        assert!(report.constants.as_ref().unwrap().m.is_finite());
        assert!(report.constants.unwrap().m_taylor <= report.slanted_lambda);

        let mut cross = Vec::new();
        for i in 0..11 {
            let s = -0.05 + 0.01 * i as f64;
            cross.push(vec![s, 0.0]);
            if i != 5 {
                cross.push(vec![0.0, s]);
            }
        }
        let planes: Vec<LinearPlane> = cross
            .iter()
            .map(|p| LinearPlane::coordinate(2, 1).unwrap().transformed(&if p[1] != 0.0 { rot(PI / 2.0) } else { rot(0.0) }).unwrap())
            .collect();
        let cloud = WeightedCloud::new(1, &cross, vec![0.01; cross.len()]).unwrap();
        let report = geometric_lemma_check(&cloud, &planes, 1.0, 1.0, 1.0).unwrap();
        assert!(!report.hypotheses_ok && report.containment_violations > 0);
        assert!(report.jet.is_none());
    }

    fn rot(a: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
    }

    #[test]
    fn large_diameter_warns_but_emits() {
        let pts: Vec<Vec<f64>> = (0..=20).map(|i| vec![i as f64 / 20.0, 0.0]).collect();
        let cloud = WeightedCloud::new(1, &pts, vec![0.05; 21]).unwrap();
        let planes = vec![LinearPlane::coordinate(2, 1).unwrap(); 21];
        let report = geometric_lemma_check(&cloud, &planes, 1.0, 1.0, 1.0).unwrap();
        assert!(report.hypotheses_ok && !report.diam_ok);
        assert_eq!(report.diameter_bound, 0.25);
        assert!(report.jet.is_some() && report.warning.is_some());
    }
}
