//! Linear and affine k-planes, projections, the Grassmannian metric, and the
//! regions (paraboloids, cylinders, cones) the rectifiability criteria are
//! phrased in.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::numeric::{dot, extend_orthonormal, spectral_norm, symmetric_eigen, unit_vector};

/// Orthonormality tolerance for plane bases; also the threshold below which
/// two planes count as equal.
pub const PLANE_TOL: f64 = 1e-10;

/// Added to the right-hand side of every membership inequality.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// A linear k-plane in R^n, `1 <= k <= n - 1`, stored as an orthonormal basis
/// together with an orthonormal basis of its orthogonal complement.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPlane {
    basis: DMatrix<f64>,
    normals: DMatrix<f64>,
}

impl LinearPlane {
    /// Wraps an `n x k` matrix whose columns must be orthonormal.
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let (n, k) = basis.shape();
        if k == 0 || k >= n {
            return Err(invalid(format!("plane dimension {k} must lie in 1..={}", n.saturating_sub(1))));
        }
        if basis.iter().any(|v| !v.is_finite()) {
            return Err(invalid("plane basis has non-finite entries"));
        }
        let gram = basis.transpose() * &basis;
        let defect = (gram - DMatrix::<f64>::identity(k, k)).abs().max();
        if defect > PLANE_TOL {
            return Err(invalid(format!("plane basis is not orthonormal (defect {defect:e})")));
        }
        Ok(Self::from_orthonormal(basis))
    }

    /// Orthonormalizes the given spanning vectors (Gram-Schmidt, in order).
    pub fn from_spanning(n: usize, vectors: &[Vec<f64>]) -> Result<Self> {
        for v in vectors {
            check_dim(n, v.len())?;
        }
        let k = vectors.len();
        let mut cols = Vec::with_capacity(k);
        extend_orthonormal(&mut cols, vectors.iter().cloned(), k, 1e-12);
        if cols.len() < k {
            return Err(Error::Degenerate("spanning vectors are linearly dependent".into()));
        }
        Self::new(columns_to_matrix(n, &cols))
    }

    /// `span(e_1, ..., e_k)`.
    pub fn coordinate(n: usize, k: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, k))
    }

    pub(crate) fn from_orthonormal(basis: DMatrix<f64>) -> Self {
        let (n, k) = basis.shape();
        let mut cols: Vec<Vec<f64>> = (0..k).map(|j| basis.column(j).iter().copied().collect()).collect();
        extend_orthonormal(&mut cols, (0..n).map(|i| unit_vector(n, i)), n, 1e-6);
        let normals = columns_to_matrix(n, &cols[k..]);
        Self { basis, normals }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `n x k`, orthonormal columns.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `n x (n - k)`, orthonormal columns spanning the orthogonal complement.
    pub fn normal_basis(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn complement(&self) -> LinearPlane {
        LinearPlane {
            basis: self.normals.clone(),
            normals: self.basis.clone(),
        }
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Splits `y` into its components along the plane and orthogonal to it.
    pub fn project(&self, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.ambient_dim(), y.len())?;
        let coords = self.tangent_coords(y);
        let n = self.ambient_dim();
        let mut tangential = vec![0.0; n];
        for (j, c) in coords.iter().enumerate() {
            for (i, t) in tangential.iter_mut().enumerate() {
                *t += self.basis[(i, j)] * c;
            }
        }
        let normal = y.iter().zip(&tangential).map(|(a, b)| a - b).collect();
        Ok((tangential, normal))
    }

    /// Coordinates of `P_V y` in the stored basis.
    pub fn tangent_coords(&self, y: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|j| col_dot(&self.basis, j, y)).collect()
    }

    /// Coordinates of `P_{V^perp} y` in the stored normal basis.
    pub fn normal_coords(&self, y: &[f64]) -> Vec<f64> {
        (0..self.normals.ncols()).map(|j| col_dot(&self.normals, j, y)).collect()
    }

    /// `|P_V y|`.
    pub fn tangent_norm(&self, y: &[f64]) -> f64 {
        (0..self.dim()).map(|j| col_dot(&self.basis, j, y).powi(2)).sum::<f64>().sqrt()
    }

    /// `|P_{V^perp} y|`, computed from the normal coordinates so there is no
    /// cancellation when `y` is nearly inside the plane.
    pub fn normal_norm(&self, y: &[f64]) -> f64 {
        (0..self.normals.ncols()).map(|j| col_dot(&self.normals, j, y).powi(2)).sum::<f64>().sqrt()
    }

    /// Applies an `n x n` linear map to the basis and re-orthonormalizes.
    pub fn transformed(&self, map: &DMatrix<f64>) -> Result<LinearPlane> {
        check_dim(self.ambient_dim(), map.nrows())?;
        let image = map * &self.basis;
        let cols: Vec<Vec<f64>> = (0..image.ncols()).map(|j| image.column(j).iter().copied().collect()).collect();
        LinearPlane::from_spanning(self.ambient_dim(), &cols)
    }
}

fn col_dot(m: &DMatrix<f64>, j: usize, y: &[f64]) -> f64 {
    dot(m.column(j).as_slice(), y)
}

pub(crate) fn columns_to_matrix(n: usize, cols: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// An affine k-plane `V + a` with `a` orthogonal to `V`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinePlane {
    linear: LinearPlane,
    offset: Vec<f64>,
    normal_offset: Vec<f64>,
}

impl AffinePlane {
    /// The affine plane through `point` parallel to `linear`.
    pub fn through(linear: LinearPlane, point: &[f64]) -> Result<Self> {
        check_dim(linear.ambient_dim(), point.len())?;
        let (_, offset) = linear.project(point)?;
        let normal_offset = linear.normal_coords(point);
        Ok(Self { linear, offset, normal_offset })
    }

    /// Builds from an explicit decomposition; `offset` must be orthogonal to
    /// the span within [`PLANE_TOL`].
    pub fn new(linear: LinearPlane, offset: Vec<f64>) -> Result<Self> {
        check_dim(linear.ambient_dim(), offset.len())?;
        let along = linear.tangent_norm(&offset);
        if along > PLANE_TOL {
            return Err(invalid(format!("offset is not orthogonal to the plane (component {along:e})")));
        }
        Self::through(linear, &offset)
    }

    pub fn linear(&self) -> &LinearPlane {
        &self.linear
    }

    /// The point of the plane nearest to the origin.
    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn ambient_dim(&self) -> usize {
        self.linear.ambient_dim()
    }

    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    pub fn distance(&self, y: &[f64]) -> f64 {
        self.distance_sq(y).sqrt()
    }

    pub fn distance_sq(&self, y: &[f64]) -> f64 {
        let normals = &self.linear.normals;
        (0..normals.ncols())
            .map(|j| (col_dot(normals, j, y) - self.normal_offset[j]).powi(2))
            .sum()
    }

    /// Nearest point of the plane to `y`.
    pub fn nearest_point(&self, y: &[f64]) -> Vec<f64> {
        let (tangential, _) = self.linear.project(y).expect("dimension checked by caller");
        tangential.iter().zip(&self.offset).map(|(t, o)| t + o).collect()
    }
}

/// Anything with an underlying linear k-plane; the Grassmannian distance of
/// affine planes is that of their linear parts.
pub trait HasLinearPart {
    fn linear_part(&self) -> &LinearPlane;
}

impl HasLinearPart for LinearPlane {
    fn linear_part(&self) -> &LinearPlane {
        self
    }
}

impl HasLinearPart for AffinePlane {
    fn linear_part(&self) -> &LinearPlane {
        &self.linear
    }
}

/// `d(V, W) = ||P_V - P_W||`, the operator norm of the difference of the
/// orthogonal projections (the sine of the largest principal angle).
pub fn grassmann_distance<A: HasLinearPart, B: HasLinearPart>(v: &A, w: &B) -> Result<f64> {
    let (v, w) = (v.linear_part(), w.linear_part());
    check_dim(v.ambient_dim(), w.ambient_dim())?;
    if v.dim() != w.dim() {
        return Err(Error::Dimension { expected: v.dim(), found: w.dim() });
    }
    let diff = v.projector() - w.projector();
    let eig = symmetric_eigen(&diff);
    let d = eig.values.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    Ok(d.min(1.0))
}

/// A linear map `V -> V^perp`, stored as an `(n - k) x k` matrix in the
/// domain plane's tangent and normal bases.
#[derive(Clone, Debug, PartialEq)]
pub struct SlantMap {
    domain: LinearPlane,
    matrix: DMatrix<f64>,
}

impl SlantMap {
    pub fn new(domain: LinearPlane, matrix: DMatrix<f64>) -> Result<Self> {
        let (n, k) = (domain.ambient_dim(), domain.dim());
        if matrix.shape() != (n - k, k) {
            return Err(invalid(format!(
                "slant matrix must be {}x{k}, got {}x{}",
                n - k,
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(invalid("slant matrix has non-finite entries"));
        }
        Ok(Self { domain, matrix })
    }

    pub fn zero(domain: LinearPlane) -> Self {
        let (n, k) = (domain.ambient_dim(), domain.dim());
        Self { domain, matrix: DMatrix::zeros(n - k, k) }
    }

    /// Expresses `plane` as the graph `{v + L v : v in base}`. Fails when the
    /// plane contains a direction orthogonal to `base`.
    pub fn of_plane(plane: &LinearPlane, base: &LinearPlane) -> Result<Self> {
        check_dim(base.ambient_dim(), plane.ambient_dim())?;
        check_dim(base.dim(), plane.dim())?;
        let tangential = base.basis().transpose() * plane.basis();
        let normal = base.normal_basis().transpose() * plane.basis();
        let inv = tangential
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("plane is not a graph over the base plane".into()))?;
        Self::new(base.clone(), normal * inv)
    }

    pub fn domain(&self) -> &LinearPlane {
        &self.domain
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn operator_norm(&self) -> f64 {
        spectral_norm(&self.matrix)
    }

    /// `L(P_V y)` expressed in the normal coordinates of the domain.
    pub fn apply_to_tangent_coords(&self, coords: &[f64]) -> Vec<f64> {
        (0..self.matrix.nrows())
            .map(|i| (0..self.matrix.ncols()).map(|j| self.matrix[(i, j)] * coords[j]).sum())
            .collect()
    }

    /// The k-plane `{v + L v}`.
    pub fn graph_plane(&self) -> LinearPlane {
        let image = self.domain.basis() + self.domain.normal_basis() * &self.matrix;
        let n = self.domain.ambient_dim();
        let cols: Vec<Vec<f64>> = (0..image.ncols()).map(|j| image.column(j).iter().copied().collect()).collect();
        LinearPlane::from_spanning(n, &cols).expect("graph of a linear map has full rank")
    }
}

/// The three region shapes used by the criteria.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    /// `{y : |P_{V^perp}(y-x) - L P_V(y-x)| <= lambda |P_V(y-x)|^(1+alpha)}`;
    /// without a slant map this is the plain alpha-paraboloid.
    Paraboloid {
        apex: Vec<f64>,
        plane: LinearPlane,
        lambda: f64,
        alpha: f64,
        slant: Option<SlantMap>,
    },
    /// `{y : dist(y, V) < width}`; an infinite width is the whole space.
    Cylinder { plane: AffinePlane, width: f64 },
    /// `{y : |P_{V^perp}(y-x)| <= aperture |P_V(y-x)|}`.
    Cone {
        apex: Vec<f64>,
        plane: LinearPlane,
        aperture: f64,
    },
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

impl Region {
    pub fn paraboloid(apex: Vec<f64>, plane: LinearPlane, lambda: f64, alpha: f64) -> Result<Self> {
        check_positive("lambda", lambda)?;
        check_alpha(alpha)?;
        check_dim(plane.ambient_dim(), apex.len())?;
        Ok(Region::Paraboloid { apex, plane, lambda, alpha, slant: None })
    }

    pub fn slanted_paraboloid(apex: Vec<f64>, slant: SlantMap, lambda: f64, alpha: f64) -> Result<Self> {
        check_positive("lambda", lambda)?;
        check_alpha(alpha)?;
        check_dim(slant.domain().ambient_dim(), apex.len())?;
        Ok(Region::Paraboloid {
            apex,
            plane: slant.domain().clone(),
            lambda,
            alpha,
            slant: Some(slant),
        })
    }

    pub fn cylinder(plane: AffinePlane, width: f64) -> Result<Self> {
        check_positive("cylinder width", width)?;
        Ok(Region::Cylinder { plane, width })
    }

    pub fn cone(apex: Vec<f64>, plane: LinearPlane, aperture: f64) -> Result<Self> {
        check_positive("cone aperture", aperture)?;
        check_dim(plane.ambient_dim(), apex.len())?;
        Ok(Region::Cone { apex, plane, aperture })
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Region::Paraboloid { plane, .. } | Region::Cone { plane, .. } => plane.ambient_dim(),
            Region::Cylinder { plane, .. } => plane.ambient_dim(),
        }
    }

    pub fn contains(&self, y: &[f64]) -> Result<bool> {
        check_dim(self.ambient_dim(), y.len())?;
        Ok(self.contains_unchecked(y))
    }

    /// Membership without the dimension check; `y` must have the ambient
    /// dimension.
    pub fn contains_unchecked(&self, y: &[f64]) -> bool {
        match self {
            Region::Paraboloid { apex, plane, lambda, alpha, slant } => {
                let rel: Vec<f64> = y.iter().zip(apex).map(|(a, b)| a - b).collect();
                let tangent = plane.tangent_coords(&rel);
                let tangent_norm = tangent.iter().map(|t| t * t).sum::<f64>().sqrt();
                let deviation = match slant {
                    None => plane.normal_norm(&rel),
                    Some(l) => {
                        let normal = plane.normal_coords(&rel);
                        let image = l.apply_to_tangent_coords(&tangent);
                        normal.iter().zip(&image).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                    }
                };
                deviation <= lambda * tangent_norm.powf(1.0 + alpha) + BOUNDARY_TOL
            }
            Region::Cylinder { plane, width } => {
                width.is_infinite() || plane.distance(y) < width + BOUNDARY_TOL
            }
            Region::Cone { apex, plane, aperture } => {
                let rel: Vec<f64> = y.iter().zip(apex).map(|(a, b)| a - b).collect();
                plane.normal_norm(&rel) <= aperture * plane.tangent_norm(&rel) + BOUNDARY_TOL
            }
        }
    }
}

/// A `(k-1)`-dimensional linear subspace `Z` with the guarantee that
/// `B(V, eta) ∩ B(W, eta) ⊆ B(Z, width)`.
#[derive(Clone, Debug)]
pub struct TubeWitness {
    /// `n x (k-1)` orthonormal columns; empty when `k = 1` (then `Z = {0}`).
    pub z_basis: DMatrix<f64>,
    pub width: f64,
    pub theta: f64,
}

impl TubeWitness {
    pub fn distance(&self, y: &[f64]) -> f64 {
        let along: f64 = (0..self.z_basis.ncols()).map(|j| col_dot(&self.z_basis, j, y).powi(2)).sum();
        (dot(y, y) - along).max(0.0).sqrt()
    }
}

/// Builds the tube containing the intersection of two cylinders of width
/// `eta` around the linear planes `v` and `w`: pick the unit `e ∈ W^perp`
/// maximizing `|P_V e|` (this maximum is `theta = d(V, W)`) and take
/// `Z = span{e, V^perp}^perp`, whose width is `2 n eta / theta`.
pub fn tube_witness(v: &LinearPlane, w: &LinearPlane, eta: f64) -> Result<TubeWitness> {
    check_positive("eta", eta)?;
    let theta = grassmann_distance(v, w)?;
    if theta < PLANE_TOL {
        return Err(Error::Degenerate(format!("planes coincide (d = {theta:e})")));
    }
    let n = v.ambient_dim();
    let k = v.dim();
    let w_normals = w.normal_basis();
    let gram = w_normals.transpose() * v.projector() * w_normals;
    let eig = symmetric_eigen(&gram);
    let e = w_normals * eig.vectors.column(0);
    let pv_e = v.projector() * &e;
    let pv_norm = pv_e.norm();
    // Unit vector e' in V along P_V e, in V's own coordinates.
    let u: Vec<f64> = (0..k).map(|j| col_dot(v.basis(), j, pv_e.as_slice()) / pv_norm).collect();
    let mut coords = vec![u];
    extend_orthonormal(&mut coords, (0..k).map(|i| unit_vector(k, i)), k, 1e-8);
    let z_cols: Vec<Vec<f64>> = coords[1..]
        .iter()
        .map(|c| (v.basis() * nalgebra::DVector::from_column_slice(c)).iter().copied().collect())
        .collect();
    Ok(TubeWitness {
        z_basis: columns_to_matrix(n, &z_cols),
        width: 2.0 * n as f64 * eta / theta,
        theta,
    })
}

/// Lebesgue volume of the unit ball in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let (mut v, start) = if n % 2 == 0 { (1.0, 2) } else { (2.0, 3) };
    let mut d = start;
    while d <= n {
        v *= 2.0 * pi / d as f64;
        d += 2;
    }
    v
}

/// Ratio between the unnormalized k-dimensional Hausdorff measure (for which
/// a k-ball of radius r has measure `(2r)^k`) and k-dimensional area.
pub fn hausdorff_normalization(k: usize) -> f64 {
    2f64.powi(k as i32) / unit_ball_volume(k)
}

/// `eps_0(k) = 2^k 240^(-k-1)`.
pub fn eps0(k: usize) -> f64 {
    2f64.powi(k as i32) * 240f64.powi(-(k as i32) - 1)
}

/// Hölder constant of tangent planes implied by density bounds and
/// paraboloid containment: `20^(n+1) 2 n M lambda / (delta omega_n)`.
pub fn key_lemma_constant(n: usize, delta: f64, upper: f64, lambda: f64) -> f64 {
    20f64.powi(n as i32 + 1) * 2.0 * n as f64 * upper * lambda / (delta * unit_ball_volume(n))
}

/// Diameter below which a uniform set is one `C^{1,alpha}` graph:
/// `(4 lambda (2 + 4^(1+alpha)) + 8 C)^(-1/alpha)`.
pub fn single_graph_radius(lambda: f64, alpha: f64, c: f64) -> f64 {
    (4.0 * lambda * (2.0 + 4f64.powf(1.0 + alpha)) + 8.0 * c).powf(-1.0 / alpha)
}

/// Paraboloid constant after upgrading measure-theoretic containment to
/// full containment: `2C + (1 + 4^(1+alpha)) lambda`.
pub fn upgraded_lambda(lambda: f64, alpha: f64, c: f64) -> f64 {
    2.0 * c + (1.0 + 4f64.powf(1.0 + alpha)) * lambda
}

/// Width constant of the limit plane of a stabilizing sequence:
/// `lambda + C + (2 lambda + C) / (1 - rho^(1+alpha))`.
pub fn stabilized_lambda(lambda: f64, c: f64, rho: f64, alpha: f64) -> f64 {
    lambda + c + (2.0 * lambda + c) / (1.0 - rho.powf(1.0 + alpha))
}

/// Constant of the slanted paraboloid equivalent to a tilted one:
/// `6 * 4^alpha * lambda`.
pub fn slanted_lambda(lambda: f64, alpha: f64) -> f64 {
    6.0 * 4f64.powf(alpha) * lambda
}

/// Paraboloid constant controlled by cylinder excess: `4^(1+alpha) lambda`.
pub fn cylinder_to_paraboloid_lambda(lambda: f64, alpha: f64) -> f64 {
    4f64.powf(1.0 + alpha) * lambda
}

/// All derived constants for one parameter choice; inputs are echoed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSet {
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub delta: f64,
    #[serde(rename = "M")]
    pub upper: f64,
    pub rho: f64,
    pub eps0: f64,
    pub c_key: f64,
    pub r1: f64,
    pub lambda_prime: f64,
    pub lambda_dprime: f64,
    pub omega_n: f64,
}

pub fn rectifiability_constants(
    k: usize,
    n: usize,
    alpha: f64,
    lambda: f64,
    delta: f64,
    upper: f64,
    rho: f64,
) -> Result<ConstantSet> {
    if k == 0 || k >= n {
        return Err(invalid(format!("need 1 <= k <= n - 1, got k = {k}, n = {n}")));
    }
    check_alpha(alpha)?;
    check_positive("lambda", lambda)?;
    check_positive("delta", delta)?;
    check_positive("M", upper)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    let c_key = key_lemma_constant(n, delta, upper, lambda);
    Ok(ConstantSet {
        k,
        n,
        alpha,
        lambda,
        delta,
        upper,
        rho,
        eps0: eps0(k),
        c_key,
        r1: single_graph_radius(lambda, alpha, c_key),
        lambda_prime: upgraded_lambda(lambda, alpha, c_key),
        lambda_dprime: stabilized_lambda(lambda, c_key, rho, alpha),
        omega_n: unit_ball_volume(n),
    })
}

/// Which hypothesis of the elementary inequality failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ElemHypothesis {
    Negative,
    Pythagoras,
    ParaboloidBound,
    SmallnessBound,
}

/// Outcome of checking `a >= (lambda/2) w^(1+alpha)` under the hypotheses
/// `a^2 + b^2 = w^2`, `a >= lambda b^(1+alpha)`, `a <= lambda^(-1/alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ElemCheck {
    pub hypotheses: std::result::Result<(), ElemHypothesis>,
    pub conclusion: bool,
}

pub fn elem_inequality(a: f64, b: f64, w: f64, lambda: f64, alpha: f64) -> ElemCheck {
    let conclusion = a >= 0.5 * lambda * w.powf(1.0 + alpha) - BOUNDARY_TOL * a.max(1.0);
    let hypotheses = if a < 0.0 || b < 0.0 || w < 0.0 {
        Err(ElemHypothesis::Negative)
    } else if (a * a + b * b - w * w).abs() > 1e-9 * (w * w).max(1.0) {
        Err(ElemHypothesis::Pythagoras)
    } else if a < lambda * b.powf(1.0 + alpha) {
        Err(ElemHypothesis::ParaboloidBound)
    } else if a > lambda.powf(-1.0 / alpha) {
        Err(ElemHypothesis::SmallnessBound)
    } else {
        Ok(())
    };
    ElemCheck { hypotheses, conclusion }
}

/// True when the conclusion holds; hypotheses are reported by
/// [`elem_inequality`].
pub fn elem_inequality_holds(a: f64, b: f64, w: f64, lambda: f64, alpha: f64) -> bool {
    elem_inequality(a, b, w, lambda, alpha).conclusion
}

// JSON form: {ambient_dim, dim, basis (row-major), offset}.
#[derive(Serialize, Deserialize)]
struct PlaneRecord {
    ambient_dim: usize,
    dim: usize,
    basis: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset: Option<Vec<f64>>,
}

impl PlaneRecord {
    fn from_linear(p: &LinearPlane, offset: Option<Vec<f64>>) -> Self {
        let (n, k) = (p.ambient_dim(), p.dim());
        let mut basis = Vec::with_capacity(n * k);
        for i in 0..n {
            for j in 0..k {
                basis.push(p.basis[(i, j)]);
            }
        }
        Self { ambient_dim: n, dim: k, basis, offset }
    }

    fn to_linear(&self) -> Result<LinearPlane> {
        if self.basis.len() != self.ambient_dim * self.dim {
            return Err(invalid("basis length does not match ambient_dim * dim"));
        }
        LinearPlane::new(DMatrix::from_row_slice(self.ambient_dim, self.dim, &self.basis))
    }
}

impl Serialize for LinearPlane {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PlaneRecord::from_linear(self, None).serialize(s)
    }
}

impl<'de> Deserialize<'de> for LinearPlane {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        PlaneRecord::deserialize(d)?.to_linear().map_err(serde::de::Error::custom)
    }
}

impl Serialize for AffinePlane {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PlaneRecord::from_linear(&self.linear, Some(self.offset.clone())).serialize(s)
    }
}

impl<'de> Deserialize<'de> for AffinePlane {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = PlaneRecord::deserialize(d)?;
        let linear = rec.to_linear().map_err(serde::de::Error::custom)?;
        let offset = rec.offset.unwrap_or_else(|| vec![0.0; rec.ambient_dim]);
        AffinePlane::new(linear, offset).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(angle: f64) -> LinearPlane {
        LinearPlane::from_spanning(2, &[vec![angle.cos(), angle.sin()]]).unwrap()
    }

    #[test]
    fn axis_projection() {
        let v = line(0.0);
        let (t, n) = v.project(&[3.0, 4.0]).unwrap();
        assert_eq!(t, vec![3.0, 0.0]);
        assert_eq!(n, vec![0.0, 4.0]);
        let (_, n) = v.project(&[-2.5, 0.0]).unwrap();
        assert_eq!(n, vec![0.0, 0.0]);
        assert!(matches!(v.project(&[1.0, 2.0, 3.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rejects_bad_bases() {
        assert!(LinearPlane::new(DMatrix::from_row_slice(2, 1, &[1.0, 1.0])).is_err());
        assert!(LinearPlane::coordinate(3, 3).is_err());
        assert!(LinearPlane::coordinate(3, 0).is_err());
        assert!(LinearPlane::from_spanning(3, &[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn grassmann_distance_examples() {
        assert_eq!(grassmann_distance(&line(0.3), &line(0.3)).unwrap(), 0.0);
        assert!((grassmann_distance(&line(0.0), &line(std::f64::consts::FRAC_PI_2)).unwrap() - 1.0).abs() < 1e-15);
        // Oracle: dense spectral norm of the explicit 2x2 projection difference.
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let diff = DMatrix::from_row_slice(2, 2, &[1.0 - c * c, -c * s, -c * s, -s * s]);
        let oracle = spectral_norm(&diff);
        let d = grassmann_distance(&line(0.0), &line(0.3)).unwrap();
        assert!((d - oracle).abs() < 1e-14);
        assert!((d - 0.29552020666133955).abs() < 1e-12);

        let plane = LinearPlane::coordinate(3, 2).unwrap();
        assert!(grassmann_distance(&plane, &LinearPlane::coordinate(3, 1).unwrap()).is_err());
    }

    #[test]
    fn affine_distance_uses_linear_part() {
        let a = AffinePlane::through(line(0.2), &[0.0, 5.0]).unwrap();
        let b = AffinePlane::through(line(0.2), &[1.0, -3.0]).unwrap();
        assert!(grassmann_distance(&a, &b).unwrap() < 1e-15);
        let c = AffinePlane::through(line(0.0), &[7.0, 2.0]).unwrap();
        assert_eq!(c.offset(), &[0.0, 2.0]);
        assert!((c.distance(&[-4.0, 5.0]) - 3.0).abs() < 1e-15);
        assert!(AffinePlane::new(line(0.0), vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn region_examples() {
        let x_axis = line(0.0);
        let par = Region::paraboloid(vec![0.0, 0.0], x_axis.clone(), 1.0, 1.0).unwrap();
        assert!(par.contains(&[0.0, 0.0]).unwrap());
        assert!(!par.contains(&[0.5, 0.3]).unwrap());
        assert!(par.contains(&[0.5, 0.2]).unwrap());
        assert!(par.contains(&[0.5, 0.25]).unwrap());

        let cyl = Region::cylinder(AffinePlane::through(x_axis.clone(), &[0.0, 0.0]).unwrap(), 0.1).unwrap();
        assert!(cyl.contains(&[5.0, 0.05]).unwrap());
        assert!(!cyl.contains(&[5.0, 0.2]).unwrap());

        let cone = Region::cone(vec![1.0, 1.0], x_axis.clone(), 0.5).unwrap();
        assert!(cone.contains(&[3.0, 1.9]).unwrap());
        assert!(!cone.contains(&[3.0, 2.1]).unwrap());

        assert!(Region::paraboloid(vec![0.0, 0.0], x_axis.clone(), -1.0, 1.0).is_err());
        assert!(Region::paraboloid(vec![0.0, 0.0], x_axis, 1.0, 1.5).is_err());
    }

    #[test]
    fn zero_slant_reduces_to_plain_paraboloid() {
        let v = line(0.4);
        let plain = Region::paraboloid(vec![0.1, 0.2], v.clone(), 2.0, 0.5).unwrap();
        let slanted = Region::slanted_paraboloid(vec![0.1, 0.2], SlantMap::zero(v), 2.0, 0.5).unwrap();
        for i in 0..50 {
            let t = i as f64 * 0.37;
            let y = [t.cos() * 0.3, (1.7 * t).sin() * 0.2];
            assert_eq!(plain.contains(&y).unwrap(), slanted.contains(&y).unwrap());
        }
    }

    #[test]
    fn slant_of_graph_plane_roundtrips() {
        let base = LinearPlane::coordinate(3, 2).unwrap();
        let l = DMatrix::from_row_slice(1, 2, &[0.3, -0.2]);
        let slant = SlantMap::new(base.clone(), l.clone()).unwrap();
        let plane = slant.graph_plane();
        let back = SlantMap::of_plane(&plane, &base).unwrap();
        assert!((back.matrix() - l).abs().max() < 1e-14);
        assert!(SlantMap::of_plane(&LinearPlane::from_spanning(3, &[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap(), &base).is_err());
    }

    #[test]
    fn tube_witness_orthogonal_lines() {
        let tube = tube_witness(&line(0.0), &line(std::f64::consts::FRAC_PI_2), 0.1).unwrap();
        assert_eq!(tube.z_basis.ncols(), 0);
        assert!((tube.width - 0.4).abs() < 1e-12);
        // grid over the intersection of the two open strips
        for i in 0..=40 {
            for j in 0..=40 {
                let y = [-0.1 + 0.005 * i as f64, -0.1 + 0.005 * j as f64];
                assert!(tube.distance(&y) <= tube.width);
            }
        }
        assert!(matches!(tube_witness(&line(0.0), &line(1e-12), 0.1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn constants_examples() {
        assert!((eps0(1) - 1.0 / 28800.0).abs() < 1e-18);
        assert!((eps0(2) - 4.0 / 240f64.powi(3)).abs() < 1e-20);
        let c = key_lemma_constant(2, 1.0, 2.0, 1.0);
        assert!((c - 64000.0 / std::f64::consts::PI).abs() < 1e-9);
        assert!((single_graph_radius(1.0, 1.0, 0.0) - 1.0 / 72.0).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
        assert_eq!(unit_ball_volume(1), 2.0);
        assert_eq!(hausdorff_normalization(1), 1.0);
        let set = rectifiability_constants(1, 2, 1.0, 1.0, 1.0, 2.0, 0.5).unwrap();
        assert_eq!(set.c_key, c);
        assert_eq!(set.lambda_prime, 2.0 * c + 17.0);
        assert!((set.lambda_dprime - (1.0 + c + (2.0 + c) / 0.75)).abs() < 1e-9);
        assert!(rectifiability_constants(2, 2, 1.0, 1.0, 1.0, 1.0, 0.5).is_err());
        assert!(rectifiability_constants(1, 2, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn elem_examples() {
        let check = elem_inequality(0.8, 0.6, 1.0, 1.0, 1.0);
        assert_eq!(check.hypotheses, Ok(()));
        assert!(check.conclusion);
        assert!(elem_inequality_holds(0.7, 0.0, 0.7, 1.0, 1.0));
        assert_eq!(elem_inequality(0.8, 0.6, 1.1, 1.0, 1.0).hypotheses, Err(ElemHypothesis::Pythagoras));
        assert_eq!(elem_inequality(0.1, 0.6, 0.1f64.hypot(0.6), 1.0, 1.0).hypotheses, Err(ElemHypothesis::ParaboloidBound));
        assert_eq!(elem_inequality(2.0, 0.0, 2.0, 1.0, 1.0).hypotheses, Err(ElemHypothesis::SmallnessBound));
    }

    #[test]
    fn plane_json_shape() {
        let p = AffinePlane::through(line(0.0), &[0.0, 2.0]).unwrap();
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["ambient_dim"], 2);
        assert_eq!(json["dim"], 1);
        assert_eq!(json["basis"], serde_json::json!([1.0, 0.0]));
        assert_eq!(json["offset"], serde_json::json!([0.0, 2.0]));
        let back: AffinePlane = serde_json::from_value(json).unwrap();
        assert_eq!(back.offset(), p.offset());
    }
}
