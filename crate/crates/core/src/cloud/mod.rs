//! Weighted point clouds standing in for `H^k` restricted to a set: ball
//! masses, density ratios, and mass outside a region.

mod kdtree;

use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::Region;
use crate::numeric::{dist_sq, exact_sum, ExactSum};
use kdtree::KdTree;

/// A finite weighted point set in `R^n` declared to be `k`-dimensional.
///
/// Weights are in units of `k`-dimensional mass under the normalization where
/// a `k`-ball of radius `r` has mass `(2r)^k`. An optional per-point boundary
/// distance records how far each sample is from the edge of the sampled
/// domain; a point is trusted at scale `r` only if that distance is `>= r`.
#[derive(Clone, Debug)]
pub struct WeightedCloud {
    ambient_dim: usize,
    intrinsic_dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    boundary_distance: Option<Vec<f64>>,
    total_mass: f64,
    tree: KdTree,
    min_spacing: OnceLock<Option<f64>>,
}

/// `theta = mass(B(x, r)) / (2r)^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub x: Vec<f64>,
    pub r: f64,
    pub theta: f64,
}

/// Exact masses of `B(x, r)` inside and outside a region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassSplit {
    pub inside: f64,
    pub outside: f64,
    pub total: f64,
}

impl WeightedCloud {
    /// Builds a cloud from row vectors. Weights must be positive and finite,
    /// coordinates finite, and `1 <= k <= n - 1`.
    pub fn new(k: usize, points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let n = points.first().map(Vec::len).ok_or_else(|| Error::InsufficientData("cloud has no points".into()))?;
        let mut coords = Vec::with_capacity(points.len() * n);
        for p in points {
            check_dim(n, p.len())?;
            coords.extend_from_slice(p);
        }
        Self::from_flat(n, k, coords, weights)
    }

    /// Builds from a row-major `N x n` coordinate array.
    pub fn from_flat(n: usize, k: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if n < 2 || k == 0 || k >= n {
            return Err(invalid(format!("need 1 <= k <= n - 1, got k = {k}, n = {n}")));
        }
        if coords.len() != n * weights.len() {
            return Err(invalid(format!(
                "{} coordinates do not match {} weights in dimension {n}",
                coords.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::InsufficientData("cloud has no points".into()));
        }
        for (i, p) in coords.chunks(n).enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse { row: i + 1, message: "non-finite coordinate".into() });
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Parse { row: i + 1, message: format!("weight {w} is not positive and finite") });
            }
        }
        let total_mass = exact_sum(weights.iter().copied());
        let tree = KdTree::build(&coords, n);
        Ok(Self {
            ambient_dim: n,
            intrinsic_dim: k,
            coords,
            weights,
            boundary_distance: None,
            total_mass,
            tree,
            min_spacing: OnceLock::new(),
        })
    }

    /// Attaches per-point distances to the boundary of the sampled domain.
    pub fn with_boundary_distance(mut self, distances: Vec<f64>) -> Result<Self> {
        check_dim(self.len(), distances.len())?;
        if distances.iter().any(|d| d.is_nan() || *d < 0.0) {
            return Err(invalid("boundary distances must be non-negative"));
        }
        self.boundary_distance = Some(distances);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.ambient_dim..(i + 1) * self.ambient_dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.ambient_dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary_distance(&self) -> Option<&[f64]> {
        self.boundary_distance.as_deref()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Indices of points in the closed ball `B(x, r)`, ascending.
    pub fn ball_indices(&self, x: &[f64], r: f64) -> Result<Vec<usize>> {
        check_dim(self.ambient_dim, x.len())?;
        check_radius(r)?;
        let mut out = Vec::new();
        self.tree.for_each_in_ball(&self.coords, x, r * r, |i| out.push(i));
        out.sort_unstable();
        Ok(out)
    }

    /// Total weight in the closed ball, summed exactly.
    pub fn ball_mass(&self, x: &[f64], r: f64) -> Result<f64> {
        check_dim(self.ambient_dim, x.len())?;
        check_radius(r)?;
        let mut acc = ExactSum::new();
        self.tree.for_each_in_ball(&self.coords, x, r * r, |i| acc.add(self.weights[i]));
        Ok(acc.value())
    }

    pub fn density_ratio(&self, x: &[f64], r: f64) -> Result<DensityEstimate> {
        let mass = self.ball_mass(x, r)?;
        Ok(DensityEstimate {
            x: x.to_vec(),
            r,
            theta: mass / (2.0 * r).powi(self.intrinsic_dim as i32),
        })
    }

    pub fn mass_split(&self, x: &[f64], r: f64, region: &Region) -> Result<MassSplit> {
        check_dim(self.ambient_dim, x.len())?;
        check_dim(self.ambient_dim, region.ambient_dim())?;
        check_radius(r)?;
        let mut inside = ExactSum::new();
        let mut outside = ExactSum::new();
        let mut total = ExactSum::new();
        self.tree.for_each_in_ball(&self.coords, x, r * r, |i| {
            let w = self.weights[i];
            total.add(w);
            if region.contains_unchecked(self.point(i)) {
                inside.add(w);
            } else {
                outside.add(w);
            }
        });
        Ok(MassSplit { inside: inside.value(), outside: outside.value(), total: total.value() })
    }

    /// Mass of `B(x, r)` outside the region, divided by `r^k` (not `(2r)^k`).
    pub fn excess_ratio(&self, x: &[f64], r: f64, region: &Region) -> Result<f64> {
        Ok(self.mass_split(x, r, region)?.outside / r.powi(self.intrinsic_dim as i32))
    }

    /// Smallest positive distance between two cloud points, or `None` if all
    /// points coincide.
    pub fn min_spacing(&self) -> Option<f64> {
        *self.min_spacing.get_or_init(|| {
            (0..self.len())
                .filter_map(|i| self.tree.nearest_positive_sq(&self.coords, self.point(i), Some(i)))
                .min_by(f64::total_cmp)
                .map(f64::sqrt)
        })
    }

    /// Smallest radius at which ball statistics are meaningful: four times
    /// the minimal point spacing.
    pub fn resolution_floor(&self) -> f64 {
        4.0 * self.min_spacing().unwrap_or(0.0)
    }

    /// Distance from `x` to the edge of the sampled domain: the recorded
    /// boundary distance of the nearest sample minus the distance to it.
    /// Infinite when no boundary information is attached.
    pub fn clearance(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.ambient_dim, x.len())?;
        let Some(bd) = &self.boundary_distance else {
            return Ok(f64::INFINITY);
        };
        let (i, d2) = self.tree.nearest(&self.coords, x).expect("cloud is non-empty");
        Ok((bd[i] - d2.sqrt()).max(0.0))
    }

    pub fn clearance_of(&self, i: usize) -> f64 {
        self.boundary_distance.as_ref().map_or(f64::INFINITY, |bd| bd[i])
    }

    /// Applies `y -> map * y + shift` to every point. Weights are kept, so the
    /// map should be an isometry for the weights to stay meaningful.
    pub fn transformed(&self, map: &DMatrix<f64>, shift: &[f64]) -> Result<Self> {
        let n = self.ambient_dim;
        if map.shape() != (n, n) {
            return Err(Error::Dimension { expected: n, found: map.nrows() });
        }
        check_dim(n, shift.len())?;
        let mut coords = Vec::with_capacity(self.coords.len());
        for p in self.points() {
            for i in 0..n {
                coords.push((0..n).map(|j| map[(i, j)] * p[j]).sum::<f64>() + shift[i]);
            }
        }
        let mut out = Self::from_flat(n, self.intrinsic_dim, coords, self.weights.clone())?;
        out.boundary_distance = self.boundary_distance.clone();
        Ok(out)
    }

    pub fn scaled_weights(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(invalid(format!("weight factor must be positive, got {factor}")));
        }
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= factor);
        out.total_mass = exact_sum(out.weights.iter().copied());
        Ok(out)
    }

    /// Disjoint union; boundary distances survive only if both sides have
    /// them.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        check_dim(self.ambient_dim, other.ambient_dim)?;
        if self.intrinsic_dim != other.intrinsic_dim {
            return Err(invalid("merged clouds must share the intrinsic dimension"));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        let mut out = Self::from_flat(self.ambient_dim, self.intrinsic_dim, coords, weights)?;
        if let (Some(a), Some(b)) = (&self.boundary_distance, &other.boundary_distance) {
            out.boundary_distance = Some(a.iter().chain(b).copied().collect());
        }
        Ok(out)
    }

    /// Keeps the points with the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.ambient_dim);
        let mut weights = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(invalid(format!("index {i} out of range")));
            }
            coords.extend_from_slice(self.point(i));
            weights.push(self.weights[i]);
        }
        let mut out = Self::from_flat(self.ambient_dim, self.intrinsic_dim, coords, weights)?;
        if let Some(bd) = &self.boundary_distance {
            out.boundary_distance = Some(indices.iter().map(|&i| bd[i]).collect());
        }
        Ok(out)
    }

    // ---- serialization ----

    pub fn to_record(&self) -> CloudRecord {
        CloudRecord {
            points: self.points().map(<[f64]>::to_vec).collect(),
            weights: self.weights.clone(),
            k: self.intrinsic_dim,
            boundary_distance: self.boundary_distance.clone(),
        }
    }

    pub fn from_record(rec: CloudRecord) -> Result<Self> {
        if rec.points.len() != rec.weights.len() {
            return Err(invalid(format!("{} points but {} weights", rec.points.len(), rec.weights.len())));
        }
        let n = rec.points.first().map(Vec::len).unwrap_or(0);
        for (i, p) in rec.points.iter().enumerate() {
            if p.len() != n {
                return Err(Error::Parse { row: i + 1, message: format!("expected {n} coordinates, found {}", p.len()) });
            }
        }
        let coords = rec.points.concat();
        let cloud = Self::from_flat(n, rec.k, coords, rec.weights)?;
        match rec.boundary_distance {
            Some(bd) => cloud.with_boundary_distance(bd),
            None => Ok(cloud),
        }
    }

    pub fn write_json(&self, out: impl Write) -> Result<()> {
        serde_json::to_writer(out, &self.to_record())?;
        Ok(())
    }

    pub fn read_json(input: impl Read) -> Result<Self> {
        let rec: CloudRecord = serde_json::from_reader(input)
            .map_err(|e| Error::Parse { row: e.line(), message: e.to_string() })?;
        Self::from_record(rec)
    }

    /// CSV with header `x1,...,xn,w`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.ambient_dim).map(|i| format!("x{i}")).collect();
        header.push("w".into());
        w.write_record(&header).map_err(csv_io)?;
        for (p, wt) in self.points().zip(&self.weights) {
            let row: Vec<String> = p.iter().chain(std::iter::once(wt)).map(|v| format!("{v:?}")).collect();
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads CSV with header `x1..xn[,w]`. Without a weight column every
    /// point gets `mass_hint / N`, or 1 when no hint is given. Errors carry
    /// the 1-based file line.
    pub fn read_csv(input: impl Read, k: usize, mass_hint: Option<f64>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
        let header = reader.headers().map_err(|e| Error::Parse { row: 1, message: e.to_string() })?.clone();
        let names: Vec<&str> = header.iter().collect();
        let has_weight = names.last().is_some_and(|h| h.eq_ignore_ascii_case("w") || h.eq_ignore_ascii_case("weight"));
        let n = names.len() - usize::from(has_weight);
        for (i, name) in names[..n].iter().enumerate() {
            if *name != format!("x{}", i + 1) {
                return Err(Error::Parse { row: 1, message: format!("expected column x{}, found {name:?}", i + 1) });
            }
        }
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record.map_err(|e| Error::Parse { row: line, message: e.to_string() })?;
            if record.len() != names.len() {
                return Err(Error::Parse {
                    row: line,
                    message: format!("expected {} fields, found {}", names.len(), record.len()),
                });
            }
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Parse { row: line, message: format!("field {} is not a number: {field:?}", j + 1) })?;
                if !v.is_finite() {
                    return Err(Error::Parse { row: line, message: format!("field {} is not finite", j + 1) });
                }
                if j < n {
                    coords.push(v);
                } else if v <= 0.0 {
                    return Err(Error::Parse { row: line, message: format!("weight {v} is not positive") });
                } else {
                    weights.push(v);
                }
            }
        }
        let count = coords.len() / n.max(1);
        if count == 0 {
            return Err(Error::Parse { row: 2, message: "no data rows".into() });
        }
        if !has_weight {
            let w = match mass_hint {
                Some(m) if m > 0.0 && m.is_finite() => m / count as f64,
                Some(m) => return Err(invalid(format!("mass hint must be positive, got {m}"))),
                None => 1.0,
            };
            weights = vec![w; count];
        }
        Self::from_flat(n, k, coords, weights)
    }

    /// Reads `.json` or `.csv` by extension. `k` is required for CSV; for
    /// JSON it must agree with the file when given.
    pub fn read_path(path: &Path, k: Option<usize>, mass_hint: Option<f64>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            let k = k.ok_or_else(|| invalid("CSV input needs the intrinsic dimension k"))?;
            Self::read_csv(file, k, mass_hint)
        } else {
            let cloud = Self::read_json(file)?;
            match k {
                Some(k) if k != cloud.intrinsic_dim => Err(invalid(format!(
                    "file declares k = {}, requested k = {k}",
                    cloud.intrinsic_dim
                ))),
                _ => Ok(cloud),
            }
        }
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            self.write_csv(&mut file)?;
        } else {
            self.write_json(&mut file)?;
        }
        file.flush()?;
        Ok(())
    }

    /// Linear-scan ball mass; the reference the index is tested against.
    pub fn ball_mass_brute_force(&self, x: &[f64], r: f64) -> f64 {
        exact_sum(
            self.points()
                .zip(&self.weights)
                .filter(|(p, _)| dist_sq(p, x) <= r * r)
                .map(|(_, w)| *w),
        )
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && !r.is_nan() {
        Ok(())
    } else {
        Err(invalid(format!("radius must be positive, got {r}")))
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// JSON form of a cloud: `{points, weights, k, boundary_distance?}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudRecord {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_distance: Option<Vec<f64>>,
}

impl PartialEq for WeightedCloud {
    fn eq(&self, other: &Self) -> bool {
        self.ambient_dim == other.ambient_dim
            && self.intrinsic_dim == other.intrinsic_dim
            && self.coords == other.coords
            && self.weights == other.weights
            && self.boundary_distance == other.boundary_distance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AffinePlane, LinearPlane};

    fn circle(count: usize) -> WeightedCloud {
        let h = 2.0 * std::f64::consts::PI / count as f64;
        let pts: Vec<Vec<f64>> = (0..count).map(|i| {
            let t = i as f64 * h;
            vec![t.cos(), t.sin()]
        }).collect();
        WeightedCloud::new(1, &pts, vec![h; count]).unwrap()
    }

    #[test]
    fn csv_defaults_and_errors() {
        let c = WeightedCloud::read_csv("x1,x2\n0,0\n1,1\n2,2\n".as_bytes(), 1, None).unwrap();
        assert_eq!(c.weights(), &[1.0, 1.0, 1.0]);
        let c = WeightedCloud::read_csv("x1,x2\n0,0\n1,1\n".as_bytes(), 1, Some(3.0)).unwrap();
        assert_eq!(c.weights(), &[1.5, 1.5]);
        let err = WeightedCloud::read_csv("x1,x2,w\n0,0,1\n1,1,-1\n".as_bytes(), 1, None).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }), "{err}");
        let err = WeightedCloud::read_csv("x1,x2\n0,0\n1,abc\n".as_bytes(), 1, None).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }));
        let err = WeightedCloud::read_csv("x1,x2\n0,NaN\n".as_bytes(), 1, None).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }));
        let err = WeightedCloud::read_csv("x1,x2\n0,0\n1\n".as_bytes(), 1, None).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }));
    }

    #[test]
    fn json_and_csv_round_trip() {
        let c = circle(1000).with_boundary_distance(vec![0.25; 1000]).unwrap();
        let mut buf = Vec::new();
        c.write_json(&mut buf).unwrap();
        assert_eq!(WeightedCloud::read_json(buf.as_slice()).unwrap(), c);
        let c = circle(1000);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(WeightedCloud::read_csv(buf.as_slice(), 1, None).unwrap(), c);
    }

    #[test]
    fn ball_mass_examples() {
        let c = circle(10_000);
        assert_eq!(c.ball_mass(c.point(7), 1e-5).unwrap(), c.weight(7));
        assert_eq!(c.ball_mass(&[0.3, -0.2], 10.0).unwrap(), c.total_mass());
        // Arc within distance r of a point on the unit circle: 4 asin(r/2).
        let r: f64 = 0.1;
        let arc = 4.0 * (r / 2.0).asin();
        assert!((c.ball_mass(&[1.0, 0.0], r).unwrap() - arc).abs() < 1e-3);
        assert_eq!(c.density_ratio(&[5.0, 5.0], 0.1).unwrap().theta, 0.0);
    }

    #[test]
    fn density_of_segment_interior() {
        let count = 20_001;
        let h = 1.0 / (count - 1) as f64;
        let pts: Vec<Vec<f64>> = (0..count).map(|i| vec![i as f64 * h, 0.0]).collect();
        let c = WeightedCloud::new(1, &pts, vec![h; count]).unwrap();
        let theta = c.density_ratio(&[0.5, 0.0], 0.05).unwrap().theta;
        assert!((theta - 1.0).abs() < 0.02, "theta = {theta}");
        let doubled = c.scaled_weights(2.0).unwrap().density_ratio(&[0.5, 0.0], 0.05).unwrap().theta;
        assert_eq!(doubled, 2.0 * theta);
    }

    #[test]
    fn excess_examples() {
        let c = circle(10_000);
        let x_axis = LinearPlane::coordinate(2, 1).unwrap();
        let whole = Region::Cylinder { plane: AffinePlane::through(x_axis, &[0.0, 0.0]).unwrap(), width: f64::INFINITY };
        assert_eq!(c.excess_ratio(&[1.0, 0.0], 0.5, &whole).unwrap(), 0.0);
        let tangent = LinearPlane::from_spanning(2, &[vec![0.0, 1.0]]).unwrap();
        let par = Region::paraboloid(vec![1.0, 0.0], tangent, 1.0, 1.0).unwrap();
        assert_eq!(c.excess_ratio(&[1.0, 0.0], 0.5, &par).unwrap(), 0.0);
        let split = c.mass_split(&[0.0, 1.0], 0.7, &par).unwrap();
        assert_eq!(split.inside + split.outside, split.total);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(WeightedCloud::new(1, &[vec![0.0, 0.0]], vec![0.0]).is_err());
        assert!(WeightedCloud::new(2, &[vec![0.0, 0.0]], vec![1.0]).is_err());
        assert!(WeightedCloud::new(1, &[vec![0.0, f64::INFINITY]], vec![1.0]).is_err());
        assert!(circle(20).ball_mass(&[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn clearance_from_nearest_sample() {
        let pts: Vec<Vec<f64>> = (0..11).map(|i| vec![i as f64 * 0.1, 0.0]).collect();
        let bd: Vec<f64> = (0..11).map(|i| (i as f64 * 0.1).min(1.0 - i as f64 * 0.1)).collect();
        let c = WeightedCloud::new(1, &pts, vec![0.1; 11]).unwrap().with_boundary_distance(bd).unwrap();
        assert!((c.clearance(&[0.5, 0.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!((c.clearance(&[0.5, 0.03]).unwrap() - (0.5 - 0.03)).abs() < 1e-12);
        assert_eq!(c.clearance_of(0), 0.0);
        assert!((c.resolution_floor() - 0.4).abs() < 1e-12);
    }
}
