//! Synthetic weighted clouds with known regularity, used as ground truth.
//!
//! Weights are quadrature weights for `k`-dimensional measure normalized so a
//! `k`-ball of radius `r` has mass `(2r)^k`; for curves this is arc length,
//! for surfaces `4/pi` times area.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::WeightedCloud;
use crate::error::{invalid, Result};
use crate::geometry::hausdorff_normalization;
use crate::numeric::norm;

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// What to sample. Curves live in the first two coordinates and surfaces in
/// the first three; remaining coordinates are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// The unit cube `[0,1]^k` in the first `k` coordinates, offset by 1/2 in
    /// every other coordinate; midpoint grid with `floor(N^(1/k))` points per
    /// side.
    AffinePlane { k: usize },
    Circle {
        #[serde(default = "one")]
        radius: f64,
    },
    /// Fibonacci lattice on the sphere in the first three coordinates.
    Sphere {
        #[serde(default = "one")]
        radius: f64,
    },
    /// Graph of `f(t) = sum_{j=1..terms} b^(-j(1+alpha)) cos(b^j t)` over
    /// `[0, 1]`; `f'` is `alpha`-Hölder and no better.
    C1alphaGraph { alpha: f64, base: f64, terms: usize },
    /// The same lacunary construction with a smaller exponent `beta`, used as
    /// the negative case against a target `alpha > beta`.
    C1betaGraph { beta: f64, base: f64, terms: usize },
    /// `4^depth` equal-mass centers of the four-corner Cantor construction
    /// with contraction 1/4 in the unit square; total mass 1. The sample
    /// count is ignored.
    FourCornerCantor { depth: u32 },
    /// Polyline built by midpoint displacement: at generation `m` every
    /// segment is replaced by two segments tilted by `angles[m-1]`. Sampled
    /// uniformly in arc length.
    Snowflake { angles: Vec<f64> },
    /// Adds independent Gaussian noise of standard deviation `sigma` to every
    /// coordinate of the base cloud.
    Noisy { base: Box<GeneratorKind>, sigma: f64 },
}

fn one() -> f64 {
    1.0
}

/// A complete, reproducible generator request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub ambient_dim: usize,
    pub sample_count: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorKind {
    /// Angles `a / sqrt(m)` for `m = 1..=depth`, whose squares are not
    /// summable.
    pub fn inverse_sqrt_snowflake(amplitude: f64, depth: usize) -> Self {
        GeneratorKind::Snowflake { angles: (1..=depth).map(|m| amplitude / (m as f64).sqrt()).collect() }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            GeneratorKind::AffinePlane { k } => *k,
            GeneratorKind::Sphere { .. } => 2,
            GeneratorKind::Noisy { base, .. } => base.intrinsic_dim(),
            _ => 1,
        }
    }

    pub fn min_ambient_dim(&self) -> usize {
        match self {
            GeneratorKind::AffinePlane { k } => k + 1,
            GeneratorKind::Sphere { .. } => 3,
            GeneratorKind::Noisy { base, .. } => base.min_ambient_dim(),
            _ => 2,
        }
    }

    fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive, got {v}")))
            }
        };
        let lacunary = |base: f64, terms: usize| {
            if !(base >= 2.0 && base.is_finite()) {
                return Err(invalid(format!("lacunary base must be at least 2, got {base}")));
            }
            if terms == 0 || terms > 40 {
                return Err(invalid(format!("term count must lie in 1..=40, got {terms}")));
            }
            Ok(())
        };
        match self {
            GeneratorKind::AffinePlane { k } => {
                if *k == 0 {
                    return Err(invalid("plane dimension must be positive"));
                }
            }
            GeneratorKind::Circle { radius } | GeneratorKind::Sphere { radius } => positive("radius", *radius)?,
            GeneratorKind::C1alphaGraph { alpha, base, terms } => {
                unit("alpha", *alpha)?;
                lacunary(*base, *terms)?;
            }
            GeneratorKind::C1betaGraph { beta, base, terms } => {
                unit("beta", *beta)?;
                lacunary(*base, *terms)?;
            }
            GeneratorKind::FourCornerCantor { depth } => {
                if *depth == 0 || *depth > 10 {
                    return Err(invalid(format!("Cantor depth must lie in 1..=10, got {depth}")));
                }
            }
            GeneratorKind::Snowflake { angles } => {
                if angles.is_empty() || angles.len() > 24 {
                    return Err(invalid("snowflake needs between 1 and 24 generations"));
                }
                if let Some(a) = angles.iter().find(|a| !(**a >= 0.0 && **a < std::f64::consts::FRAC_PI_2)) {
                    return Err(invalid(format!("snowflake angle {a} outside [0, pi/2)")));
                }
            }
            GeneratorKind::Noisy { base, sigma } => {
                if matches!(**base, GeneratorKind::Noisy { .. }) {
                    return Err(invalid("noise cannot be nested"));
                }
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(invalid(format!("noise level must be non-negative, got {sigma}")));
                }
                base.validate()?;
            }
        }
        Ok(())
    }
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, ambient_dim: usize, sample_count: usize, seed: u64) -> Self {
        Self { kind, ambient_dim, sample_count, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count < 10 {
            return Err(invalid(format!("sample count must be at least 10, got {}", self.sample_count)));
        }
        self.kind.validate()?;
        let min = self.kind.min_ambient_dim();
        if self.ambient_dim < min {
            return Err(invalid(format!("ambient dimension must be at least {min}, got {}", self.ambient_dim)));
        }
        Ok(())
    }
}

/// Samples the spec. Deterministic: the same spec gives a bitwise identical
/// cloud.
pub fn generate(spec: &GeneratorSpec) -> Result<WeightedCloud> {
    spec.validate()?;
    sample(&spec.kind, spec.ambient_dim, spec.sample_count, spec.seed)
}

fn sample(kind: &GeneratorKind, n: usize, count: usize, seed: u64) -> Result<WeightedCloud> {
    match kind {
        GeneratorKind::AffinePlane { k } => affine_plane(*k, n, count),
        GeneratorKind::Circle { radius } => circle(*radius, n, count),
        GeneratorKind::Sphere { radius } => sphere(*radius, n, count),
        GeneratorKind::C1alphaGraph { alpha, base, terms } => lacunary_graph(*alpha, *base, *terms, n, count),
        GeneratorKind::C1betaGraph { beta, base, terms } => lacunary_graph(*beta, *base, *terms, n, count),
        GeneratorKind::FourCornerCantor { depth } => four_corner_cantor(*depth, n),
        GeneratorKind::Snowflake { angles } => snowflake(angles, n, count),
        GeneratorKind::Noisy { base, sigma } => {
            let clean = sample(base, n, count, seed)?;
            add_noise(&clean, *sigma, seed)
        }
    }
}

fn embed(n: usize, head: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; n];
    p[..head.len()].copy_from_slice(head);
    p
}

fn affine_plane(k: usize, n: usize, count: usize) -> Result<WeightedCloud> {
    let mut side = (count as f64).powf(1.0 / k as f64).floor() as usize;
    while (side + 1).checked_pow(k as u32).is_some_and(|c| c <= count) {
        side += 1;
    }
    let side = side.max(2);
    let h = 1.0 / side as f64;
    let total = side.pow(k as u32);
    let weight = h.powi(k as i32) * hausdorff_normalization(k);
    let mut coords = Vec::with_capacity(total * n);
    let mut clearance = Vec::with_capacity(total);
    let mut digits = vec![0usize; k];
    for _ in 0..total {
        let mut p = vec![0.5; n];
        let mut edge = f64::INFINITY;
        for (d, &i) in digits.iter().enumerate() {
            let t = (i as f64 + 0.5) * h;
            p[d] = t;
            edge = edge.min(t).min(1.0 - t);
        }
        coords.extend_from_slice(&p);
        clearance.push(edge);
        for digit in digits.iter_mut() {
            *digit += 1;
            if *digit < side {
                break;
            }
            *digit = 0;
        }
    }
    WeightedCloud::from_flat(n, k, coords, vec![weight; total])?.with_boundary_distance(clearance)
}

fn circle(radius: f64, n: usize, count: usize) -> Result<WeightedCloud> {
    let h = TAU / count as f64;
    let mut coords = Vec::with_capacity(count * n);
    for i in 0..count {
        let (s, c) = (i as f64 * h).sin_cos();
        coords.extend(embed(n, &[radius * c, radius * s]));
    }
    WeightedCloud::from_flat(n, 1, coords, vec![radius * h; count])
}

fn sphere(radius: f64, n: usize, count: usize) -> Result<WeightedCloud> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut coords = Vec::with_capacity(count * n);
    for i in 0..count {
        let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
        let rho = (1.0 - z * z).max(0.0).sqrt();
        let (s, c) = (golden * i as f64).sin_cos();
        coords.extend(embed(n, &[radius * rho * c, radius * rho * s, radius * z]));
    }
    let area = 2.0 * TAU * radius * radius;
    let weight = area * hausdorff_normalization(2) / count as f64;
    WeightedCloud::from_flat(n, 2, coords, vec![weight; count])
}

/// `sum_{j=1..terms} b^(-j(1+alpha)) cos(b^j t)`.
pub fn lacunary(alpha: f64, base: f64, terms: usize, t: f64) -> f64 {
    (1..=terms)
        .map(|j| {
            let freq = base.powi(j as i32);
            freq.powf(-(1.0 + alpha)) * (freq * t).cos()
        })
        .sum()
}

/// Derivative of [`lacunary`].
pub fn lacunary_derivative(alpha: f64, base: f64, terms: usize, t: f64) -> f64 {
    (1..=terms)
        .map(|j| {
            let freq = base.powi(j as i32);
            -freq.powf(-alpha) * (freq * t).sin()
        })
        .sum()
}

/// Samples a parametrized curve at the given nodes with chord-length
/// weights (half of each adjacent chord).
fn polyline_cloud(n: usize, nodes: &[[f64; 2]], clearance: Vec<f64>) -> Result<WeightedCloud> {
    let chords: Vec<f64> = nodes.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).collect();
    let weights: Vec<f64> = (0..nodes.len())
        .map(|i| {
            let left = if i > 0 { chords[i - 1] } else { 0.0 };
            let right = chords.get(i).copied().unwrap_or(0.0);
            0.5 * (left + right)
        })
        .collect();
    let coords: Vec<f64> = nodes.iter().flat_map(|p| embed(n, p)).collect();
    WeightedCloud::from_flat(n, 1, coords, weights)?.with_boundary_distance(clearance)
}

fn lacunary_graph(alpha: f64, base: f64, terms: usize, n: usize, count: usize) -> Result<WeightedCloud> {
    let last = (count - 1) as f64;
    let nodes: Vec<[f64; 2]> = (0..count)
        .map(|i| {
            let t = i as f64 / last;
            [t, lacunary(alpha, base, terms, t)]
        })
        .collect();
    // The curve is a graph over [0, 1], so B(x, r) cannot reach past an
    // endpoint while r <= min(t, 1 - t).
    let clearance = nodes.iter().map(|p| p[0].min(1.0 - p[0])).collect();
    polyline_cloud(n, &nodes, clearance)
}

/// Centers of the level-`depth` squares; total mass 1.
fn four_corner_cantor(depth: u32, n: usize) -> Result<WeightedCloud> {
    let count = 4usize.pow(depth);
    let half_side = 0.5 * 0.25f64.powi(depth as i32);
    let mut coords = Vec::with_capacity(count * n);
    for code in 0..count {
        let (mut x, mut y) = (half_side, half_side);
        let mut scale = 0.75;
        for level in 0..depth {
            let digit = (code >> (2 * (depth - 1 - level))) & 3;
            x += scale * (digit & 1) as f64;
            y += scale * (digit >> 1) as f64;
            scale *= 0.25;
        }
        coords.extend(embed(n, &[x, y]));
    }
    WeightedCloud::from_flat(n, 1, coords, vec![1.0 / count as f64; count])
}

/// Vertices of the midpoint-displacement polyline from (0,0) to (1,0).
pub fn snowflake_vertices(angles: &[f64]) -> Vec<[f64; 2]> {
    let mut vertices = vec![[0.0, 0.0], [1.0, 0.0]];
    for &angle in angles {
        let lift = 0.5 * angle.tan();
        let mut next = Vec::with_capacity(2 * vertices.len() - 1);
        for w in vertices.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            next.push(a);
            next.push([0.5 * (a[0] + b[0]) - lift * dy, 0.5 * (a[1] + b[1]) + lift * dx]);
        }
        next.push(*vertices.last().expect("non-empty"));
        vertices = next;
    }
    vertices
}

fn snowflake(angles: &[f64], n: usize, count: usize) -> Result<WeightedCloud> {
    let vertices = snowflake_vertices(angles);
    let lengths: Vec<f64> = vertices.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).collect();
    let total: f64 = lengths.iter().sum();
    let h = total / count as f64;
    let mut nodes = Vec::with_capacity(count);
    let mut segment = 0;
    let mut walked = 0.0;
    for i in 0..count {
        let s = (i as f64 + 0.5) * h;
        while segment + 1 < lengths.len() && walked + lengths[segment] < s {
            walked += lengths[segment];
            segment += 1;
        }
        let t = ((s - walked) / lengths[segment]).clamp(0.0, 1.0);
        let (a, b) = (vertices[segment], vertices[segment + 1]);
        nodes.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    let ends = [vertices[0], *vertices.last().expect("non-empty")];
    let clearance: Vec<f64> = nodes
        .iter()
        .map(|p| ends.iter().map(|e| (p[0] - e[0]).hypot(p[1] - e[1])).fold(f64::INFINITY, f64::min))
        .collect();
    let coords: Vec<f64> = nodes.iter().flat_map(|p| embed(n, p)).collect();
    WeightedCloud::from_flat(n, 1, coords, vec![h; count])?.with_boundary_distance(clearance)
}

fn add_noise(clean: &WeightedCloud, sigma: f64, seed: u64) -> Result<WeightedCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| invalid(e.to_string()))?;
    let coords: Vec<f64> = clean.coords().iter().map(|v| v + normal.sample(&mut rng)).collect();
    let cloud = WeightedCloud::from_flat(clean.ambient_dim(), clean.intrinsic_dim(), coords, clean.weights().to_vec())?;
    match clean.boundary_distance() {
        Some(bd) => cloud.with_boundary_distance(bd.to_vec()),
        None => Ok(cloud),
    }
}

/// Total length of a polyline.
pub fn polyline_length(vertices: &[[f64; 2]]) -> f64 {
    vertices.windows(2).map(|w| norm(&[w[1][0] - w[0][0], w[1][1] - w[0][1]])).sum()
}
