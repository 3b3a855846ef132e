//! Self-contained numerical checks of the geometric and measure-theoretic
//! inequalities the criteria rest on. Every check draws its own synthetic
//! data from one seed and reports sample counts, violations and the worst
//! margin (smallest `rhs - lhs`; negative means violated).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cloud::WeightedCloud;
use crate::error::Result;
use crate::fitting::{beta2_of, betap_of, Exponent, FitOptions, Neighborhood};
use crate::generators::{generate, GeneratorKind, GeneratorSpec};
use crate::geometry::{
    grassmann_distance, key_lemma_constant, slanted_lambda, stabilized_lambda, tube_witness, AffinePlane, LinearPlane,
    Region, SlantMap, BOUNDARY_TOL,
};
use crate::multiscale::stabilize_sequence;
use crate::numeric::{derive_seed, dist_sq, norm};
use crate::whitney::{geometric_lemma_check, whitney_constants, JetData};

/// Deliberate faults, used to confirm that the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sabotage {
    /// Inflates `beta_2` at the smaller scale of every growth sample by 1.5.
    Growth,
}

impl std::str::FromStr for Sabotage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "growth" => Ok(Sabotage::Growth),
            other => Err(format!("unknown sabotage target {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub sabotage: Option<Sabotage>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub name: String,
    pub statement: String,
    pub samples: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl LemmaCheck {
    fn new(name: &str, statement: &str) -> Self {
        Self {
            name: name.into(),
            statement: statement.into(),
            samples: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            passed: false,
            note: None,
        }
    }

    /// Records one inequality `lhs <= rhs`.
    fn record(&mut self, lhs: f64, rhs: f64) {
        self.samples += 1;
        let margin = rhs - lhs;
        if !(margin >= 0.0) {
            self.violations += 1;
        }
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.samples > 0 && self.violations == 0;
        if self.samples == 0 {
            self.note.get_or_insert_with(|| "no samples satisfied the hypotheses".into());
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub sabotage: Option<Sabotage>,
    pub checks: Vec<LemmaCheck>,
    pub passed: bool,
    pub first_failure: Option<String>,
}

fn rng_for(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed([seed, tag]))
}

fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, n);
        let l = norm(&v);
        if l > 1e-6 {
            return v.iter().map(|x| x / l).collect();
        }
    }
}

/// A uniformly random `k`-plane in `R^n`.
pub fn random_plane(rng: &mut impl Rng, n: usize, k: usize) -> LinearPlane {
    loop {
        let spanning: Vec<Vec<f64>> = (0..k).map(|_| gaussian_vec(rng, n)).collect();
        if let Ok(p) = LinearPlane::from_spanning(n, &spanning) {
            if p.dim() == k {
                return p;
            }
        }
    }
}

/// A random vector of the given subspace with norm at most `radius`,
/// uniform in direction and in radius.
fn random_in(rng: &mut impl Rng, basis: &DMatrix<f64>, radius: f64) -> Vec<f64> {
    if basis.ncols() == 0 {
        return vec![0.0; basis.nrows()];
    }
    let dir = unit_vec(rng, basis.ncols());
    let scale = radius * rng.random::<f64>();
    (basis * DVector::from_vec(dir) * scale).as_slice().to_vec()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `d(V, W)` against a Monte-Carlo supremum of `dist(v, W)` over unit
/// `v ∈ V`, and `d(V, W) = d(V^perp, W^perp)`.
pub fn check_grassmann(seed: u64, pairs: usize, samples: usize) -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new("grassmann_sup", "sup_{v in V, |v|=1} dist(v, W) <= d(V, W) = d(V^perp, W^perp)");
    let mut rng = rng_for(seed, 1);
    let mut worst_gap = 0.0f64;
    for i in 0..pairs {
        let n = 2 + i % 3;
        let k = 1 + rng.random_range(0..n - 1);
        let (v, w) = (random_plane(&mut rng, n, k), random_plane(&mut rng, n, k));
        let d = grassmann_distance(&v, &w)?;
        let mut sup = 0.0f64;
        for _ in 0..samples {
            let y = random_in(&mut rng, v.basis(), 1.0);
            let l = norm(&y);
            if l > 0.0 {
                let u: Vec<f64> = y.iter().map(|t| t / l).collect();
                sup = sup.max(w.normal_norm(&u));
            }
        }
        check.record(sup, d + 1e-12);
        let dc = grassmann_distance(&v.complement(), &w.complement())?;
        check.record((d - dc).abs(), 1e-10);
        worst_gap = worst_gap.max(d - sup);
    }
    check.note = Some(format!("largest gap between spectral value and sampled supremum: {worst_gap:.3e}"));
    Ok(check.finish())
}

/// For `V` the graph of `L` over `R^k`: `d(V, R^k) <= ||L|| <= d / sqrt(1 - d^2)`.
pub fn check_slope_equivalence(seed: u64, samples: usize) -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new("slope_equivalence", "d(graph L, R^k) <= ||L|| <= d / sqrt(1 - d^2)");
    let mut rng = rng_for(seed, 2);
    for i in 0..samples {
        let n = 2 + i % 3;
        let k = 1 + rng.random_range(0..n - 1);
        let base = LinearPlane::coordinate(n, k)?;
        let raw = DMatrix::from_fn(n - k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let target = 0.9 * rng.random::<f64>();
        let scale = crate::numeric::spectral_norm(&raw);
        let l = if scale > 0.0 { raw * (target / scale) } else { raw };
        let slant = SlantMap::new(base.clone(), l)?;
        let graph = slant.graph_plane();
        let d = grassmann_distance(&graph, &base)?;
        let op = slant.operator_norm();
        check.record(d, op + 1e-10);
        check.record(op, d / (1.0 - d * d).sqrt() + 1e-10);
    }
    Ok(check.finish())
}

/// Points of `B(V, eta) ∩ B(W, eta)` lie in `B(Z, 2 n eta / theta)`.
pub fn check_tube(seed: u64, pairs: usize, samples: usize) -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new("tube", "B(V, eta) ∩ B(W, eta) ⊆ B(Z, 2 n eta / d(V, W))");
    let mut rng = rng_for(seed, 3);
    for i in 0..pairs {
        let n = 2 + i % 3;
        let k = 1 + rng.random_range(0..n - 1);
        let (v, w) = loop {
            let (v, w) = (random_plane(&mut rng, n, k), random_plane(&mut rng, n, k));
            if grassmann_distance(&v, &w)? > 0.05 {
                break (v, w);
            }
        };
        let eta = 10f64.powf(rng.random_range(-3.0..0.0));
        let tube = tube_witness(&v, &w, eta)?;
        // Directions of V orthogonal to Z: the one along which V leaves W.
        let z = &tube.z_basis;
        let free = {
            let mut cols: Vec<Vec<f64>> = (0..z.ncols()).map(|j| z.column(j).iter().copied().collect()).collect();
            let target = cols.len() + 1;
            crate::numeric::extend_orthonormal(
                &mut cols,
                (0..k).map(|j| v.basis().column(j).iter().copied().collect()),
                target,
                1e-8,
            );
            cols.last().cloned().expect("V has one direction beyond Z")
        };
        let reach = 3.0 * tube.width;
        let (mut accepted, mut attempts) = (0, 0usize);
        while accepted < samples && attempts < 1000 * samples {
            attempts += 1;
            let along_z = random_in(&mut rng, z, reach);
            let t = rng.random_range(-reach..reach);
            let off = random_in(&mut rng, v.normal_basis(), eta);
            let y: Vec<f64> = (0..n).map(|c| along_z[c] + t * free[c] + off[c]).collect();
            if v.normal_norm(&y) < eta && w.normal_norm(&y) < eta {
                accepted += 1;
                check.record(tube.distance(&y), tube.width);
            }
        }
    }
    Ok(check.finish())
}

/// Points of `Q_alpha(x, V, lambda) ∩ B(x, (4 lambda)^(-1/alpha))`, with `V`
/// the graph of `L`, `||L|| <= 1/2`, lie in the slanted paraboloid over
/// `R^k` with constant `6 4^alpha lambda`.
pub fn check_slanted_paraboloid(seed: u64, setups: usize, samples: usize) -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new(
        "slanted_paraboloid",
        "Q_alpha(x, graph L, lambda) ∩ B(x, (4 lambda)^(-1/alpha)) inside the L-slanted paraboloid with 6 4^alpha lambda",
    );
    let mut rng = rng_for(seed, 4);
    for i in 0..setups {
        let n = 2 + i % 3;
        let k = 1 + rng.random_range(0..n - 1);
        let lambda = 10f64.powf(rng.random_range(-1.0..1.0));
        let alpha = rng.random_range(0.05..=1.0);
        let base = LinearPlane::coordinate(n, k)?;
        let raw = DMatrix::from_fn(n - k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let l = &raw * (0.5 * rng.random::<f64>() / crate::numeric::spectral_norm(&raw).max(1e-12));
        let slant = SlantMap::new(base, l)?;
        let v = slant.graph_plane();
        let x = gaussian_vec(&mut rng, n);
        let slanted = Region::slanted_paraboloid(x.clone(), slant, slanted_lambda(lambda, alpha), alpha)?;
        let radius = (4.0 * lambda).powf(-1.0 / alpha);
        let mut accepted = 0;
        while accepted < samples {
            let tau = random_in(&mut rng, v.basis(), radius);
            let cap = lambda * norm(&tau).powf(1.0 + alpha);
            let nu = random_in(&mut rng, v.normal_basis(), cap);
            let rel = add(&tau, &nu);
            if norm(&rel) > radius {
                continue;
            }
            accepted += 1;
            let y = add(&x, &rel);
            check.samples += 1;
            if !slanted.contains_unchecked(&y) {
                check.violations += 1;
            }
        }
    }
    check.worst_margin = if check.violations == 0 { 0.0 } else { -1.0 };
    check.note = Some("margin is membership only: 0 when every sample is contained".into());
    Ok(check.finish())
}

/// The synthetic clouds shared by the cloud-based checks.
pub fn verification_clouds(seed: u64) -> Result<Vec<(String, WeightedCloud)>> {
    let specs = [
        ("affine_line", GeneratorKind::AffinePlane { k: 1 }, 2, 2000),
        ("affine_square", GeneratorKind::AffinePlane { k: 2 }, 3, 2500),
        ("circle", GeneratorKind::Circle { radius: 1.0 }, 2, 3000),
        ("sphere", GeneratorKind::Sphere { radius: 1.0 }, 3, 3000),
        ("c1alpha", GeneratorKind::C1alphaGraph { alpha: 0.5, base: 4.0, terms: 6 }, 2, 3000),
        ("c1beta", GeneratorKind::C1betaGraph { beta: 0.25, base: 4.0, terms: 6 }, 2, 3000),
        ("cantor", GeneratorKind::FourCornerCantor { depth: 5 }, 2, 1024),
        ("snowflake", GeneratorKind::inverse_sqrt_snowflake(0.5, 6), 2, 3000),
        (
            "noisy_circle",
            GeneratorKind::Noisy { base: Box::new(GeneratorKind::Circle { radius: 1.0 }), sigma: 0.01 },
            2,
            3000,
        ),
    ];
    specs
        .into_iter()
        .map(|(name, kind, n, count)| Ok((name.to_string(), generate(&GeneratorSpec::new(kind, n, count, seed))?)))
        .collect()
}

fn random_query(rng: &mut impl Rng, cloud: &WeightedCloud) -> Vec<f64> {
    cloud.point(rng.random_range(0..cloud.len())).to_vec()
}

/// Minimal residual `sum w dist^2` at `(x, r)`: the unnormalized `beta_2`.
fn residual(cloud: &WeightedCloud, x: &[f64], r: f64) -> Result<f64> {
    let hood = Neighborhood::gather(cloud, x, r)?;
    let fit = beta2_of(&hood)?;
    Ok(hood.residual_sq(&fit.plane))
}

/// `beta_2(x, tr)^2 <= t^-(k+2) beta_2(x, r)^2`, equivalently the minimal
/// residual over `B(x, tr)` never exceeds the one over `B(x, r)`. Compared
/// exactly.
pub fn check_growth(
    seed: u64,
    clouds: &[(String, WeightedCloud)],
    samples: usize,
    sabotage: Option<Sabotage>,
) -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new("growth", "beta_2(x, t r)^2 <= t^-(k+2) beta_2(x, r)^2 for t in {1/2, 1/3}");
    let mut rng = rng_for(seed, 6);
    let inflate = if sabotage == Some(Sabotage::Growth) { 1.5f64 * 1.5 } else { 1.0 };
    let mut equalities = 0;
    for i in 0..samples {
        let cloud = &clouds[i % clouds.len()].1;
        let x = random_query(&mut rng, cloud);
        // Up to 3: balls then cover every cloud, so equality cases occur.
        let r = 10f64.powf(rng.random_range(-1.5..0.5));
        let t = if rng.random::<bool>() { 0.5 } else { 1.0 / 3.0 };
        let big = residual(cloud, &x, r)?;
        let small = residual(cloud, &x, t * r)? * inflate;
        if small == big {
            equalities += 1;
        }
        check.record(small, big);
    }
    check.note = Some(format!("{equalities} samples attained equality"));
    Ok(check.finish())
}

/// Comparison of `beta_2` with the fitted `beta_p`: for `p < 2`,
/// `beta_2 <= 2^(1-p/2) beta_p^(p/2)` (every fitted plane meets the ball, so
/// distances are at most `2r`); for `p >= 2`,
/// `beta_2 <= 2^(k/2) Theta^(1/2-1/p) beta_p` with `Theta = mass / (2r)^k`.
pub fn check_beta_comparison(seed: u64, clouds: &[(String, WeightedCloud)], samples: usize) -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new(
        "beta_comparison",
        "beta_2 <= 2^(1-p/2) beta_p^(p/2) (p < 2); beta_2 <= 2^(k/2) Theta^(1/2-1/p) beta_p (p >= 2)",
    );
    let mut rng = rng_for(seed, 7);
    let exponents = [
        Exponent::Finite(1.0),
        Exponent::Finite(1.5),
        Exponent::Finite(3.0),
        Exponent::Finite(4.0),
        Exponent::Infinity,
    ];
    let options = FitOptions { seed, ..FitOptions::default() };
    let mut printed_low_violations = 0;
    let mut low_samples = 0;
    for i in 0..samples {
        let cloud = &clouds[i % clouds.len()].1;
        let k = cloud.intrinsic_dim() as i32;
        let x = random_query(&mut rng, cloud);
        let r = 10f64.powf(rng.random_range(-1.3..-0.3));
        let p = exponents[i % exponents.len()];
        let hood = Neighborhood::gather(cloud, &x, r)?;
        let b2 = beta2_of(&hood)?.value;
        let bp = betap_of(&hood, p, &options)?.value;
        let slack = 1e-12 * (1.0 + b2);
        match p {
            Exponent::Finite(q) if q < 2.0 => {
                low_samples += 1;
                check.record(b2, 2f64.powf(1.0 - q / 2.0) * bp.powf(q / 2.0) + slack);
                if b2 > 2f64.powf(2.0 / q - 1.0) * bp.powf(2.0 / q) + slack {
                    printed_low_violations += 1;
                }
            }
            _ => {
                let theta = hood.mass / (2.0 * r).powi(k);
                let inv_p = match p {
                    Exponent::Finite(q) => 1.0 / q,
                    Exponent::Infinity => 0.0,
                };
                check.record(b2, 2f64.powf(k as f64 / 2.0) * theta.powf(0.5 - inv_p) * bp + slack);
            }
        }
    }
    check.note = Some(format!(
        "the form beta_2 <= 2^(2/p-1) beta_p^(2/p) fails on {printed_low_violations} of {low_samples} samples with p < 2"
    ));
    Ok(check.finish())
}

/// Left-point discretization of the scale-averaging identity: with radii
/// `s_i = R rho^(i/m)`, the offset-averaged geometric sums `A` and the
/// `dr/r` integral `I` of the same `beta_2^2` values satisfy
/// `rho I <= A <= I`.
pub fn check_scale_sum(seed: u64, clouds: &[(String, WeightedCloud)], samples: usize) -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new("scale_sum", "rho * int beta_2^2 dr/r <= averaged sum_j beta_2(r_0 rho^j)^2 <= int beta_2^2 dr/r");
    let mut rng = rng_for(seed, 8);
    let (rho, m, levels) = (0.5f64, 6usize, 4usize);
    for i in 0..samples {
        let cloud = &clouds[i % clouds.len()].1;
        let x = random_query(&mut rng, cloud);
        let top = rng.random_range(0.3..0.8);
        let count = m * levels;
        let radii: Vec<f64> = (0..=count).map(|i| top * rho.powf(i as f64 / m as f64)).collect();
        let (mut integral, mut averaged) = (0.0, 0.0);
        for i in 0..count {
            let b = beta2_of(&Neighborhood::gather(cloud, &x, radii[i])?)?.value;
            let dr = radii[i] - radii[i + 1];
            let level = (i / m) as i32;
            integral += b * b * dr / radii[i];
            averaged += b * b * dr / (top * rho.powi(level));
        }
        let tol = 1e-12 * integral;
        check.record(rho * integral, averaged + tol);
        check.record(averaged, integral + tol);
    }
    Ok(check.finish())
}

/// If the mass outside `B(x + V, lambda r_j^(1+alpha))` is at most
/// `eps r_j^k` on every dyadic scale, the mass outside
/// `Q_alpha(x, V, 4^(1+alpha) lambda)` at `r_i` is at most
/// `eps / (1 - 2^-k) r_i^k` plus the mass of the innermost ball the dyadic
/// scales do not reach.
pub fn check_paraboloid_cylinder(seed: u64, clouds: &[(String, WeightedCloud)], samples: usize) -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new(
        "paraboloid_cylinder",
        "cylinder excess <= eps on dyadic scales => paraboloid excess (4^(1+alpha) lambda) <= eps / (1 - 2^-k) + inner-ball slack",
    );
    let mut rng = rng_for(seed, 9);
    let mut worst_slack = 0.0f64;
    for i in 0..samples {
        let cloud = &clouds[i % clouds.len()].1;
        let k = cloud.intrinsic_dim() as i32;
        let x = random_query(&mut rng, cloud);
        let alpha = rng.random_range(0.25..=1.0);
        let top: f64 = rng.random_range(0.1..0.5);
        // The dyadic inclusion needs every radius below (4 lambda)^(-1/alpha).
        let lambda = 0.25 * top.powf(-alpha) * rng.random_range(0.2..1.0);
        let plane = beta2_of(&Neighborhood::gather(cloud, &x, top / 8.0)?)?.plane;
        let axis = AffinePlane::through(plane.linear().clone(), &x)?;
        // Descend below the point spacing so the innermost ball holds at most x.
        let spacing = cloud.resolution_floor() / 4.0;
        let mut radii = vec![top];
        while radii.len() < 31 && *radii.last().expect("non-empty") >= 0.5 * spacing {
            radii.push(0.5 * radii.last().expect("non-empty"));
        }
        let levels = radii.len() - 1;
        let mut eps = 0.0f64;
        for &r in &radii[..levels] {
            let region = Region::cylinder(axis.clone(), lambda * r.powf(1.0 + alpha))?;
            eps = eps.max(cloud.excess_ratio(&x, r, &region)?);
        }
        let paraboloid = Region::paraboloid(x.clone(), plane.linear().clone(), 4f64.powf(1.0 + alpha) * lambda, alpha)?;
        let inner_outside: f64 = cloud
            .ball_indices(&x, radii[levels])?
            .into_iter()
            .filter(|&j| !paraboloid.contains_unchecked(cloud.point(j)))
            .fold(0.0, |acc, j| acc + cloud.weight(j));
        for &r in &radii[..levels] {
            let lhs = cloud.excess_ratio(&x, r, &paraboloid)?;
            let slack = inner_outside / r.powi(k);
            worst_slack = worst_slack.max(slack);
            check.record(lhs, eps / (1.0 - 0.5f64.powi(k)) + slack + 1e-12);
        }
    }
    check.note = Some(format!("largest inner-ball slack: {worst_slack:.3e}"));
    Ok(check.finish())
}

/// Tangent-paraboloid hypotheses with measured constants on small pieces of
/// `C^{1,1}` graphs, and the Taylor constant of the resulting jet against the
/// slanted-paraboloid constant.
pub fn check_geometric_lemma() -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new(
        "geometric_lemma",
        "paraboloid containment + Hölder planes on a small set => one graph with M_taylor <= 6 4^alpha lambda",
    );
    let mut cases: Vec<(WeightedCloud, Vec<LinearPlane>)> = Vec::new();
    // Arc of the unit circle of length 0.2 with tangents.
    let arc: Vec<Vec<f64>> = (0..80).map(|i| -0.1 + 0.2 * i as f64 / 79.0).map(|s: f64| vec![s.sin(), s.cos()]).collect();
    let tangents = arc.iter().map(|p| LinearPlane::from_spanning(2, &[vec![p[1], -p[0]]])).collect::<Result<_>>()?;
    cases.push((WeightedCloud::new(1, &arc, vec![0.0025; 80])?, tangents));
    // Cubic graph t^2/2 + t^3/6 over [-0.1, 0.1].
    let ts: Vec<f64> = (0..80).map(|i| -0.1 + 0.2 * i as f64 / 79.0).collect();
    let cubic: Vec<Vec<f64>> = ts.iter().map(|&t| vec![t, t * t / 2.0 + t * t * t / 6.0]).collect();
    let slopes = ts.iter().map(|&t| LinearPlane::from_spanning(2, &[vec![1.0, t + t * t / 2.0]])).collect::<Result<_>>()?;
    cases.push((WeightedCloud::new(1, &cubic, vec![0.0025; 80])?, slopes));
    // Spherical cap of angular radius 0.1 with tangent planes.
    let mut cap = Vec::new();
    for i in 0..12 {
        for j in 0..12 {
            let (u, v) = (-0.07 + 0.14 * i as f64 / 11.0, -0.07 + 0.14 * j as f64 / 11.0);
            let z = (1.0 - u * u - v * v).sqrt();
            cap.push(vec![u, v, z]);
        }
    }
    let caps = cap
        .iter()
        .map(|p| LinearPlane::from_spanning(3, &[vec![p[2], 0.0, -p[0]], vec![0.0, p[2], -p[1]]]))
        .collect::<Result<_>>()?;
    cases.push((WeightedCloud::new(2, &cap, vec![1e-4; 144])?, caps));

    for (cloud, planes) in &cases {
        let (mut lambda, mut c) = (0.0f64, 0.0f64);
        for i in 0..cloud.len() {
            for j in 0..cloud.len() {
                if i == j {
                    continue;
                }
                let rel: Vec<f64> = cloud.point(j).iter().zip(cloud.point(i)).map(|(a, b)| a - b).collect();
                let t = planes[i].tangent_norm(&rel);
                lambda = lambda.max(planes[i].normal_norm(&rel) / t.powi(2));
                c = c.max(grassmann_distance(&planes[i], &planes[j])? / norm(&rel));
            }
        }
        let (lambda, c) = (lambda * 1.001, c * 1.001);
        let report = geometric_lemma_check(cloud, planes, lambda, c, 1.0)?;
        check.samples += 1;
        let ok = report.hypotheses_ok && report.diam_ok && report.constants.as_ref().is_some_and(|m| m.m.is_finite());
        let margin = report.constants.as_ref().map_or(f64::NEG_INFINITY, |m| report.slanted_lambda - m.m_taylor);
        if !ok || margin < 0.0 {
            check.violations += 1;
        }
        check.worst_margin = check.worst_margin.min(margin);
    }
    Ok(check.finish())
}

/// On `C^{1,1}` curves and surfaces with planes fitted on `B(x, 2r)`: when the
/// measured excess satisfies `eps <= delta / 4`, the two cylinders share mass
/// at least `delta / 2 r^k` in `B(x, r)`, and `d(V_x, V_y) <= C r^alpha`.
pub fn check_key_lemma(seed: u64, samples: usize) -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new(
        "key_lemma",
        "eps <= delta/4 => mass(C(x) ∩ C(y) ∩ B(x, r)) >= delta/2 r^k and d(V_x, V_y) <= C(n, delta, M, lambda) r^alpha",
    );
    let mut rng = rng_for(seed, 11);
    let clouds = [
        generate(&GeneratorSpec::new(GeneratorKind::Circle { radius: 1.0 }, 2, 4000, seed))?,
        generate(&GeneratorSpec::new(GeneratorKind::Sphere { radius: 1.0 }, 3, 6000, seed))?,
    ];
    let (lambda, alpha) = (10.0, 1.0);
    let mut skipped = 0;
    for i in 0..samples {
        let cloud = &clouds[i % 2];
        let k = cloud.intrinsic_dim() as i32;
        let r = if k == 1 { 0.05 } else { 0.2 };
        let x = random_query(&mut rng, cloud);
        let near = cloud.ball_indices(&x, r)?;
        let y = cloud.point(near[rng.random_range(0..near.len())]).to_vec();
        let fit = |z: &[f64]| -> Result<AffinePlane> { Ok(beta2_of(&Neighborhood::gather(cloud, z, 2.0 * r)?)?.plane) };
        let (vx, vy) = (fit(&x)?, fit(&y)?);
        let (cx, cy) = (Region::cylinder(vx.clone(), lambda * r.powf(1.0 + alpha))?, Region::cylinder(vy.clone(), lambda * r.powf(1.0 + alpha))?);
        let rk = r.powi(k);
        let delta = cloud.ball_mass(&x, r)?.min(cloud.ball_mass(&y, r)?) / rk;
        let eps = cloud.excess_ratio(&x, 2.0 * r, &cx)?.max(cloud.excess_ratio(&y, 2.0 * r, &cy)?) * 2f64.powi(k);
        if eps > delta / 4.0 {
            skipped += 1;
            continue;
        }
        let mut upper = 0.0f64;
        for z in [&x, &y] {
            for s in [0.25 * r, 0.5 * r, r, 2.0 * r, 5.0 * r] {
                upper = upper.max(cloud.ball_mass(z, s)? / s.powi(k));
            }
        }
        let shared: f64 = cloud
            .ball_indices(&x, r)?
            .into_iter()
            .filter(|&j| cx.contains_unchecked(cloud.point(j)) && cy.contains_unchecked(cloud.point(j)))
            .map(|j| cloud.weight(j))
            .sum();
        check.record(delta / 2.0 * rk, shared * (1.0 + 1e-12));
        let bound = key_lemma_constant(cloud.ambient_dim(), delta, upper, lambda) * r.powf(alpha);
        check.record(grassmann_distance(&vx, &vy)?, bound);
    }
    check.note = Some(format!("{skipped} pairs skipped: measured excess above delta/4"));
    Ok(check.finish())
}

/// `a^2 + b^2 = w^2`, `a >= lambda b^(1+alpha)`, `a <= lambda^(-1/alpha)`
/// imply `a >= lambda/2 w^(1+alpha)`.
pub fn check_elementary(seed: u64, samples: usize) -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new("elementary_inequality", "a >= (lambda/2) w^(1+alpha) under the three hypotheses");
    let mut rng = rng_for(seed, 12);
    let mut drawn = 0;
    while check.samples < samples {
        drawn += 1;
        let lambda = 10f64.powf(rng.random_range(-2.0..2.0));
        let alpha = rng.random_range(0.01..=1.0);
        let top = lambda.powf(-1.0 / alpha);
        let b = top * rng.random::<f64>().powi(2);
        let low = lambda * b.powf(1.0 + alpha);
        if low > top {
            continue;
        }
        let a = if rng.random::<f64>() < 0.2 { low } else { rng.random_range(low..=top) };
        let w = a.hypot(b);
        let outcome = crate::geometry::elem_inequality(a, b, w, lambda, alpha);
        if outcome.hypotheses.is_err() {
            continue;
        }
        check.record(0.5 * lambda * w.powf(1.0 + alpha), a * (1.0 + 1e-12));
        if !outcome.conclusion {
            check.violations += 1;
        }
    }
    check.note = Some(format!("{drawn} draws"));
    Ok(check.finish())
}

/// Random plane sequences through points near the origin, each consecutive
/// pair turned by at most `C r_j^alpha` about a random axis and sharing a
/// point of both `lambda r_j^(1+alpha)` cylinders in `B(0, r_j)`.
pub fn random_rotating_sequence(
    rng: &mut impl Rng,
    n: usize,
    k: usize,
    radii: &[f64],
    lambda: f64,
    alpha: f64,
    c: f64,
) -> Result<Vec<AffinePlane>> {
    let last = radii.len() - 1;
    let mut linear = random_plane(rng, n, k);
    let start = random_in(rng, linear.normal_basis(), lambda * radii[last].powf(1.0 + alpha));
    let mut plane = AffinePlane::through(linear.clone(), &start)?;
    let mut planes = vec![plane.clone()];
    for j in (0..last).rev() {
        let r = radii[j];
        // Pivot: a point of the finer plane well inside B(0, r), kept clear of the
        // boundaries so the common point is not a tangency.
        let anchor = plane.nearest_point(&vec![0.0; n]);
        let pivot = add(&anchor, &random_in(rng, linear.basis(), 0.5 * r));
        let pivot = if norm(&pivot) <= 0.9 * r { pivot } else { anchor };
        // Turn by theta <= C r^alpha in the span of a tangent and a normal.
        let theta = (c * r.powf(alpha)).min(1.0).asin() * rng.random::<f64>();
        let t = random_in(rng, linear.basis(), 1.0);
        let t: Vec<f64> = t.iter().map(|v| v / norm(&t).max(1e-300)).collect();
        let u = random_in(rng, linear.normal_basis(), 1.0);
        let u: Vec<f64> = u.iter().map(|v| v / norm(&u).max(1e-300)).collect();
        let rotation = DMatrix::<f64>::identity(n, n)
            + (DVector::from_column_slice(&u) * DVector::from_column_slice(&t).transpose()
                - DVector::from_column_slice(&t) * DVector::from_column_slice(&u).transpose())
                * theta.sin()
            + (DVector::from_column_slice(&t) * DVector::from_column_slice(&t).transpose()
                + DVector::from_column_slice(&u) * DVector::from_column_slice(&u).transpose())
                * (theta.cos() - 1.0);
        linear = linear.transformed(&rotation)?;
        let shift = random_in(rng, linear.normal_basis(), 0.9 * lambda * r.powf(1.0 + alpha));
        plane = AffinePlane::through(linear.clone(), &add(&pivot, &shift))?;
        planes.push(plane.clone());
    }
    planes.reverse();
    Ok(planes)
}

/// Containment of `B(V_j, lambda r_j^(1+alpha)) ∩ B(0, r_j)` in
/// `B(V_inf, lambda'' r_j^(1+alpha))` and the bound on the nearest points
/// `x_j`, on random sequences meeting both hypotheses.
pub fn check_plane_stabilization(seed: u64, sequences: usize, samples_per_scale: usize) -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new(
        "plane_stabilization",
        "B(V_j, lambda r_j^(1+alpha)) ∩ B(0, r_j) ⊆ B(V_inf, lambda'' r_j^(1+alpha)); |x_j| <= (2 lambda + C) r_j^(1+alpha) / (1 - rho^(1+alpha))",
    );
    let mut rng = rng_for(seed, 13);
    let rho = 0.5f64;
    let mut rejected = 0;
    for s in 0..sequences {
        let n = 2 + s % 2;
        let k = 1 + rng.random_range(0..n - 1);
        let alpha = if s % 3 == 0 { 0.5 } else { 1.0 };
        let lambda = 10f64.powf(rng.random_range(-1.0..1.0));
        let c = 10f64.powf(rng.random_range(-1.0..0.5));
        let radii: Vec<f64> = (0..10).map(|j| rho.powi(j)).collect();
        let planes = random_rotating_sequence(&mut rng, n, k, &radii, lambda, alpha, c)?;
        let origin = vec![0.0; n];
        let stab = stabilize_sequence(&origin, &planes.iter().cloned().map(Some).collect::<Vec<_>>(), &radii, lambda, alpha, c, rho)?;
        if !stab.hypotheses_ok {
            rejected += 1;
            continue;
        }
        let dprime = stabilized_lambda(lambda, c, rho, alpha);
        let v_inf = AffinePlane::through(stab.v_inf.clone(), &origin)?;
        for (j, plane) in planes.iter().enumerate() {
            let r = radii[j];
            let width = lambda * r.powf(1.0 + alpha);
            let xj = plane.nearest_point(&origin);
            check.record(norm(&xj), (2.0 * lambda + c) * r.powf(1.0 + alpha) / (1.0 - rho.powf(1.0 + alpha)) + BOUNDARY_TOL);
            let limit = dprime * r.powf(1.0 + alpha) + BOUNDARY_TOL;
            let mut accepted = 0;
            while accepted < samples_per_scale {
                let y = add(&add(&xj, &random_in(&mut rng, plane.linear().basis(), 2.0 * r)), &random_in(&mut rng, plane.linear().normal_basis(), width));
                if dist_sq(&y, &origin) > r * r || plane.distance(&y) >= width {
                    continue;
                }
                accepted += 1;
                check.record(v_inf.distance(&y), limit);
            }
        }
    }
    if rejected > 0 {
        check.note = Some(format!("{rejected} sequences rejected by the hypothesis check"));
    }
    Ok(check.finish())
}

/// The `f(x) = x^2` jet has Taylor constant 1 and Hölder constant 2;
/// constants are unchanged by translating base points and by orthogonal
/// maps of the value space.
pub fn check_whitney(seed: u64, jets: usize) -> Result<LemmaCheck> {
    let mut check = LemmaCheck::new("whitney_constants", "x^2 jet: M_taylor = 1, M_holder = 2; invariance under translation and value rotation");
    let xs: Vec<f64> = (0..=4).map(|i| 0.25 * i as f64).collect();
    let square = JetData::new(
        xs.iter().map(|&x| vec![x]).collect(),
        xs.iter().map(|&x| vec![x * x]).collect(),
        xs.iter().map(|&x| DMatrix::from_element(1, 1, 2.0 * x)).collect(),
        1.0,
    )?;
    let m = whitney_constants(&square)?;
    check.record((m.m_taylor - 1.0).abs(), 1e-12);
    check.record((m.m_holder - 2.0).abs(), 1e-12);
    let mut rng = rng_for(seed, 14);
    for _ in 0..jets {
        let (k, d, count) = (rng.random_range(1..3), rng.random_range(1..4), 30);
        let base: Vec<Vec<f64>> = (0..count).map(|_| gaussian_vec(&mut rng, k)).collect();
        let values: Vec<Vec<f64>> = (0..count).map(|_| gaussian_vec(&mut rng, d)).collect();
        let derivs: Vec<DMatrix<f64>> = (0..count).map(|_| DMatrix::from_fn(d, k, |_, _| rng.sample(StandardNormal))).collect();
        let alpha = rng.random_range(0.1..=1.0);
        let jet = JetData::new(base.clone(), values.clone(), derivs.clone(), alpha)?;
        let shift = gaussian_vec(&mut rng, k);
        let q = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
        let moved = JetData::new(
            base.iter().map(|b| add(b, &shift)).collect(),
            values.iter().map(|v| (&q * DVector::from_column_slice(v)).as_slice().to_vec()).collect(),
            derivs.iter().map(|l| &q * l).collect(),
            alpha,
        )?;
        let (a, b) = (whitney_constants(&jet)?, whitney_constants(&moved)?);
        let scale = a.m.max(1.0);
        check.record((a.m_taylor - b.m_taylor).abs(), 1e-10 * scale);
        check.record((a.m_holder - b.m_holder).abs(), 1e-10 * scale);
    }
    Ok(check.finish())
}

/// Runs every check with its default sample sizes.
pub fn run_verify(config: &VerifyConfig) -> Result<VerifyReport> {
    let seed = config.seed;
    let clouds = verification_clouds(seed)?;
    let checks = vec![
        check_grassmann(seed, 30, 2000)?,
        check_slope_equivalence(seed, 300)?,
        check_tube(seed, 20, 500)?,
        check_slanted_paraboloid(seed, 10, 2000)?,
        check_paraboloid_cylinder(seed, &clouds, 27)?,
        check_growth(seed, &clouds, 100, config.sabotage)?,
        check_scale_sum(seed, &clouds, 18)?,
        check_beta_comparison(seed, &clouds, 60)?,
        check_geometric_lemma()?,
        check_key_lemma(seed, 40)?,
        check_elementary(seed, 20_000)?,
        check_plane_stabilization(seed, 12, 200)?,
        check_whitney(seed, 10)?,
    ];
    let first_failure = checks.iter().find(|c| !c.passed).map(|c| c.name.clone());
    Ok(VerifyReport { seed, sabotage: config.sabotage, passed: first_failure.is_none(), first_failure, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let report = run_verify(&VerifyConfig { seed: 0, sabotage: None }).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{c:?}");
        }
        assert!(report.passed);
    }

    #[test]
    fn growth_sabotage_is_caught() {
        let clouds = verification_clouds(3).unwrap();
        let check = check_growth(3, &clouds, 30, Some(Sabotage::Growth)).unwrap();
        assert!(!check.passed && check.violations > 0);
    }

    /// A sequence meeting both hypotheses whose planes keep turning the same
    /// way: the accumulated angle is about `C r_j^alpha / (1 - rho^alpha)`,
    /// and the stated `lambda''` (which carries `1 - rho^(1+alpha)`) is too
    /// small for points at distance `r_j` along `V_j`.
    #[test]
    fn aligned_rotations_escape_the_stated_cylinder() {
        let (rho, alpha, lambda, c) = (0.9f64, 0.1f64, 1e-4f64, 1e-3f64);
        let radii: Vec<f64> = (0..200).map(|j| rho.powi(j)).collect();
        let mut angles = vec![0.0; radii.len()];
        for j in (0..radii.len() - 1).rev() {
            angles[j] = angles[j + 1] + c * radii[j].powf(alpha) * 0.999;
        }
        let planes: Vec<Option<AffinePlane>> = angles
            .iter()
            .map(|a| {
                let v = LinearPlane::from_spanning(2, &[vec![a.cos(), a.sin()]]).unwrap();
                Some(AffinePlane::through(v, &[0.0, 0.0]).unwrap())
            })
            .collect();
        let stab = stabilize_sequence(&[0.0, 0.0], &planes, &radii, lambda, alpha, c, rho).unwrap();
        assert!(stab.hypotheses_ok);
        let y = [angles[0].cos(), angles[0].sin()];
        let limit = stab.limit_cylinder(&[0.0, 0.0], radii[0], alpha).unwrap();
        assert!(!limit.contains_unchecked(&y));
    }
}
