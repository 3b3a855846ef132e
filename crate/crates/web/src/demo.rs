//! Demo operations on planar clouds: generation, one point's multiscale
//! profile, and region rasters.

use nalgebra::DMatrix;
use serde::Serialize;

use rectiscope::generators::{generate, GeneratorKind, GeneratorSpec};
use rectiscope::geometry::{LinearPlane, Region, SlantMap};
use rectiscope::multiscale::{
    beta_diagnostics_of, fixed_plane_verdict, point_profile, rotating_verdict, Outcome, ProfileParams, ScaleGrid,
};
use rectiscope::numeric::dist_sq;
use rectiscope::{Exponent, WeightedCloud};

/// Kinds offered by the page; `param` is the kind's one free parameter.
pub fn generator_kind(kind: &str, param: f64) -> Result<GeneratorKind, String> {
    let kind = match kind {
        "circle" => GeneratorKind::Circle { radius: 1.0 },
        "noisy-circle" => GeneratorKind::Noisy { base: Box::new(GeneratorKind::Circle { radius: 1.0 }), sigma: param },
        "c1alpha" => GeneratorKind::C1alphaGraph { alpha: param, base: 4.0, terms: 10 },
        "cantor" => {
            if !(param >= 1.0 && param <= 8.0) {
                return Err(format!("Cantor depth must lie in 1..=8, got {param}"));
            }
            GeneratorKind::FourCornerCantor { depth: param as u32 }
        }
        "snowflake" => GeneratorKind::inverse_sqrt_snowflake(param, 8),
        other => return Err(format!("unknown kind {other:?}")),
    };
    Ok(kind)
}

pub fn generate_cloud(kind: &str, count: usize, param: f64, seed: u64) -> Result<WeightedCloud, String> {
    let spec = GeneratorSpec::new(generator_kind(kind, param)?, 2, count, seed);
    generate(&spec).map_err(|e| e.to_string())
}

/// Index of the cloud point closest to `p`; ties go to the lower index.
pub fn nearest_index(cloud: &WeightedCloud, p: [f64; 2]) -> usize {
    (0..cloud.len())
        .map(|i| (dist_sq(cloud.point(i), &p), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map_or(0, |(_, i)| i)
}

pub struct ProfileRequest {
    pub r0: f64,
    pub rho: f64,
    pub scales: usize,
    pub alpha: f64,
    pub lambda: f64,
}

/// Per-scale arrays in grid order, plus the two plane verdicts.
#[derive(Debug, Serialize)]
pub struct ProfileView {
    pub index: usize,
    pub x: Vec<f64>,
    pub radii: Vec<f64>,
    pub valid: Vec<bool>,
    pub beta2: Vec<Option<f64>>,
    pub beta_inf: Vec<Option<f64>>,
    pub theta: Vec<Option<f64>>,
    pub cyl_excess: Vec<Option<f64>>,
    pub parab_excess: Vec<Option<f64>>,
    /// Unit direction of each fitted line.
    pub directions: Vec<Option<[f64; 2]>>,
    pub fixed_plane: Outcome,
    pub rotating: Outcome,
    pub beta_inf_slope: Option<f64>,
}

pub fn profile_view(cloud: &WeightedCloud, index: usize, req: &ProfileRequest) -> Result<ProfileView, String> {
    if index >= cloud.len() {
        return Err(format!("point {index} out of range"));
    }
    let grid = ScaleGrid::for_cloud(req.r0, req.rho, req.scales, cloud).map_err(|e| e.to_string())?;
    let params = ProfileParams::new(req.alpha, req.lambda);
    let profile = point_profile(cloud, cloud.point(index), &grid, &params).map_err(|e| e.to_string())?;
    let tail = 3.min(profile.valid_indices().len()).max(1);
    let scales = &profile.scales;
    Ok(ProfileView {
        index,
        x: profile.x.clone(),
        radii: profile.radii(),
        valid: scales.iter().map(|s| s.valid).collect(),
        beta2: scales.iter().map(|s| s.beta(Exponent::Finite(2.0))).collect(),
        beta_inf: scales.iter().map(|s| s.beta(Exponent::Infinity)).collect(),
        theta: profile.thetas(),
        cyl_excess: scales.iter().map(|s| s.cyl_excess).collect(),
        parab_excess: scales.iter().map(|s| s.parab_excess).collect(),
        directions: scales
            .iter()
            .map(|s| s.plane.as_ref().map(|p| [p.linear().basis()[(0, 0)], p.linear().basis()[(1, 0)]]))
            .collect(),
        fixed_plane: fixed_plane_verdict(&profile, tail).outcome,
        rotating: rotating_verdict(&profile, tail).outcome,
        beta_inf_slope: beta_diagnostics_of(&profile, Exponent::Infinity, tail).and_then(|d| d.slope),
    })
}

/// A region through the origin whose axis is the line at `angle`.
pub struct RegionShape {
    pub angle: f64,
    /// Paraboloid constant, cylinder half-width, or cone aperture.
    pub lambda: f64,
    pub alpha: f64,
    /// Slope of the slant map for the slanted paraboloid.
    pub slope: f64,
}

pub fn region(kind: &str, shape: &RegionShape) -> Result<Region, String> {
    let (s, c) = shape.angle.sin_cos();
    let line = LinearPlane::from_spanning(2, &[vec![c, s]]).map_err(|e| e.to_string())?;
    let origin = vec![0.0, 0.0];
    let region = match kind {
        "paraboloid" => Region::paraboloid(origin, line, shape.lambda, shape.alpha),
        "slanted" => SlantMap::new(line, DMatrix::from_element(1, 1, shape.slope))
            .and_then(|slant| Region::slanted_paraboloid(origin, slant, shape.lambda, shape.alpha)),
        "cylinder" => rectiscope::geometry::AffinePlane::through(line, &origin)
            .and_then(|axis| Region::cylinder(axis, shape.lambda)),
        "cone" => Region::cone(origin, line, shape.lambda),
        other => return Err(format!("unknown region {other:?}")),
    };
    region.map_err(|e| e.to_string())
}

/// `size x size` raster over `[-extent, extent]^2` sampled at pixel centers.
pub fn region_mask(kind: &str, shape: &RegionShape, size: usize, extent: f64) -> Result<Vec<u8>, String> {
    if size == 0 || size > 2048 || !(extent > 0.0 && extent.is_finite()) {
        return Err(format!("need 0 < size <= 2048 and a positive extent, got {size} and {extent}"));
    }
    let region = region(kind, shape)?;
    let step = 2.0 * extent / size as f64;
    let mut mask = Vec::with_capacity(size * size);
    for row in 0..size {
        let y = extent - (row as f64 + 0.5) * step;
        for col in 0..size {
            let x = -extent + (col as f64 + 0.5) * step;
            mask.push(u8::from(region.contains_unchecked(&[x, y])));
        }
    }
    Ok(mask)
}
