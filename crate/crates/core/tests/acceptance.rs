//! Acceptance suite. Every criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rectiscope::generators::{generate, GeneratorKind, GeneratorSpec};
use rectiscope::geometry::{grassmann_distance, LinearPlane, Region};
use rectiscope::multiscale::{classify, point_profile, ClassifyParams, Outcome, ProfileParams, ScaleGrid};
use rectiscope::verify::{self, random_plane, LemmaCheck};
use rectiscope::whitney::{whitney_constants, JetData};
use rectiscope::{Exponent, WeightedCloud};

struct Outcomes {
    failed: Vec<&'static str>,
}

impl Outcomes {
    fn report(&mut self, id: &'static str, title: &str, pass: bool, detail: String, elapsed: Duration) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{id} {tag} {title}: {detail} [{:.1} s]", elapsed.as_secs_f64());
        if !pass {
            self.failed.push(id);
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn lemma_detail(check: &LemmaCheck) -> String {
    let mut s = format!("{} samples, {} violations, worst margin {:.3e}", check.samples, check.violations, check.worst_margin);
    if let Some(note) = &check.note {
        s.push_str("; ");
        s.push_str(note);
    }
    s
}

/// Tangent paraboloids of the unit circle hold every sample at every scale
/// up to 1/2.
fn converse_sanity(out: &mut Outcomes) {
    let t = Instant::now();
    let cloud = generate(&GeneratorSpec::new(GeneratorKind::Circle { radius: 1.0 }, 2, 10_000, 0)).unwrap();
    let floor = cloud.resolution_floor();
    let radii: Vec<f64> = (0..).map(|j| 0.5 * 0.5f64.powi(j)).take_while(|&r| r >= floor).collect();
    let mut worst = 0.0f64;
    for x in cloud.points() {
        // Oracle: the tangent of the unit circle at x is x rotated by 90 degrees.
        let tangent = LinearPlane::from_spanning(2, &[vec![-x[1], x[0]]]).unwrap();
        let region = Region::paraboloid(x.to_vec(), tangent, 1.0, 1.0).unwrap();
        for &r in &radii {
            worst = worst.max(cloud.excess_ratio(x, r, &region).unwrap());
        }
    }
    let elapsed = t.elapsed();
    let pass = worst == 0.0 && elapsed < Duration::from_secs(10);
    let detail = format!("{} points x {} scales, largest excess {worst:e}", cloud.len(), radii.len());
    out.report("C01", "tangent paraboloids of the circle", pass, detail, elapsed);
}

/// `beta_inf` of the lacunary `C^{1,1/2}` graph decays like `r^(1/2)`.
fn positive_case(out: &mut Outcomes) {
    let t = Instant::now();
    let kind = GeneratorKind::C1alphaGraph { alpha: 0.5, base: 4.0, terms: 12 };
    let cloud = generate(&GeneratorSpec::new(kind, 2, 1 << 14, 0)).unwrap();
    let grid = ScaleGrid::new(0.125, 0.5, 7).unwrap();
    let mut params = ClassifyParams::new(grid.clone());
    params.alpha = 0.45;
    params.p_list = vec![Exponent::Infinity];
    params.stride = 16;
    let report = classify(&cloud, &params).unwrap();
    let interior: Vec<_> = report.per_point.iter().filter(|p| p.profile.valid_indices().len() == grid.len()).collect();
    let slopes: Vec<f64> = interior.iter().filter_map(|p| p.diagnostics[0].slope).collect();
    let passes = interior.iter().filter(|p| p.verdicts.beta_bound[0].1.outcome == Outcome::Pass).count();
    let slope = median(slopes);
    let fraction = passes as f64 / interior.len() as f64;
    let elapsed = t.elapsed();
    let pass = (0.45..=0.6).contains(&slope) && fraction >= 0.9 && elapsed < Duration::from_secs(60);
    let detail = format!(
        "median slope {slope:.3} (want [0.45, 0.6]); beta_bound(inf, 0.45) passes at {passes}/{} interior points",
        interior.len()
    );
    out.report("C02", "positive C^{1,alpha} graph", pass, detail, elapsed);
}

/// Half the minimal width of the points of `B(x, r)` over 3600 directions,
/// divided by `r`. Exceeds the exact `beta_inf` by at most `pi/3600`.
fn brute_force_beta_inf(cloud: &WeightedCloud, x: &[f64], r: f64) -> f64 {
    let pts: Vec<&[f64]> =
        cloud.points().filter(|p| (p[0] - x[0]).hypot(p[1] - x[1]) <= r).collect();
    (0..3600)
        .map(|a| {
            let (s, c) = (PI * a as f64 / 3600.0).sin_cos();
            let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let v = -s * p[0] + c * p[1];
                (lo.min(v), hi.max(v))
            });
            0.5 * (hi - lo) / r
        })
        .fold(f64::INFINITY, f64::min)
}

/// Brute-force pilot median of `beta_inf` over `[4^-5, 4^-1]` on every 64th
/// point was 0.398; the threshold keeps a margin below it.
const CANTOR_BETA_THRESHOLD: f64 = 0.35;

/// The four-corner Cantor set is purely unrectifiable: beta numbers stay
/// large and the square sum grows linearly in the number of scales.
fn negative_case(out: &mut Outcomes) {
    let t = Instant::now();
    let cloud = generate(&GeneratorSpec::new(GeneratorKind::FourCornerCantor { depth: 7 }, 2, 10, 0)).unwrap();
    let grid = ScaleGrid::new(0.25, 0.5, 8).unwrap();
    let mut params = ClassifyParams::new(grid);
    params.stride = 16;
    let report = classify(&cloud, &params).unwrap();
    let fails = report.aggregate.rotating_cylinder.fail;
    let fail_fraction = fails as f64 / report.aggregate.query_points as f64;
    let betas: Vec<f64> = report
        .per_point
        .iter()
        .flat_map(|p| p.profile.scales.iter().filter(|s| s.valid).filter_map(|s| s.beta(Exponent::Infinity)))
        .collect();
    let beta_median = median(betas);
    // Oracle: the library value is an upper bound of the exact one, so it may
    // not fall below the brute-force width by more than the angular step.
    let mut oracle = Vec::new();
    let mut below = 0;
    for p in report.per_point.iter().step_by(8) {
        for s in &p.profile.scales {
            let exact = brute_force_beta_inf(&cloud, &p.x, s.r);
            if s.beta(Exponent::Infinity).unwrap() < exact - PI / 3600.0 {
                below += 1;
            }
            oracle.push(exact);
        }
    }
    let oracle_median = median(oracle);
    // beta_2^2 is periodic in log r with period two dyadic steps, so the ratio
    // depends on where the grid starts; it starts at the first dyadic radius
    // below the circumradius sqrt(2)/2 of the set.
    let mut ratios = Vec::new();
    for p in report.per_point.iter().step_by(4) {
        let sum = |scales: usize| {
            let grid = ScaleGrid::new(0.5, 0.5, scales - 1).unwrap();
            let profile = point_profile(&cloud, &p.x, &grid, &ProfileParams::new(1.0, 1.0)).unwrap();
            profile.scales.iter().map(|s| s.beta(Exponent::Finite(2.0)).unwrap().powi(2)).sum::<f64>()
        };
        ratios.push(sum(10) / sum(5));
    }
    let ratio = median(ratios);
    let elapsed = t.elapsed();
    let pass = beta_median >= CANTOR_BETA_THRESHOLD
        && below == 0
        && fail_fraction >= 0.9
        && ratio >= 1.8
        && elapsed < Duration::from_secs(120);
    let detail = format!(
        "median beta_inf {beta_median:.4} (threshold {CANTOR_BETA_THRESHOLD}, brute-force {oracle_median:.4}, \
         {below} below oracle); rotating fails at {fails}/{}; jones J=10/J=5 {ratio:.3}",
        report.aggregate.query_points
    );
    out.report("C03", "four-corner Cantor set", pass, detail, elapsed);
}

fn lemma(out: &mut Outcomes, id: &'static str, title: &str, run: impl FnOnce() -> LemmaCheck, min_samples: usize) {
    let t = Instant::now();
    let check = run();
    let pass = check.passed && check.violations == 0 && check.samples >= min_samples;
    out.report(id, title, pass, lemma_detail(&check), t.elapsed());
}

/// Spectral Grassmann distance against the closed form for lines, and the
/// sampled supremum of `|P_V v - P_W v|` against it.
fn grassmann(out: &mut Outcomes) {
    let t = Instant::now();
    let mut closed_form_gap = 0.0f64;
    for i in 0..100 {
        let theta = PI / 2.0 * i as f64 / 99.0;
        let v = LinearPlane::from_spanning(2, &[vec![1.0, 0.0]]).unwrap();
        let w = LinearPlane::from_spanning(2, &[vec![theta.cos(), theta.sin()]]).unwrap();
        closed_form_gap = closed_form_gap.max((grassmann_distance(&v, &w).unwrap() - theta.sin()).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut exceed, mut worst_gap) = (0usize, 0.0f64);
    for pair in 0..10 {
        let (n, k) = [(2, 1), (3, 1), (3, 2), (4, 2), (4, 1)][pair % 5];
        let v = random_plane(&mut rng, n, k);
        let w = random_plane(&mut rng, n, k);
        let spectral = grassmann_distance(&v, &w).unwrap();
        let diff: DMatrix<f64> = v.projector() - w.projector();
        let mut sup = 0.0f64;
        for _ in 0..100_000 {
            let u = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let u = &u / u.norm();
            sup = sup.max((&diff * u).norm());
        }
        if sup > spectral + 1e-12 {
            exceed += 1;
        }
        worst_gap = worst_gap.max(spectral - sup);
    }
    let pass = closed_form_gap <= 1e-12 && exceed == 0 && worst_gap <= 1e-3;
    let detail = format!(
        "closed-form gap {closed_form_gap:.2e} over 100 angles; sampled sup exceeds spectral {exceed} times, \
         largest shortfall {worst_gap:.2e} over 10 pairs x 1e5 samples"
    );
    out.report("C11", "Grassmann distance", pass, detail, t.elapsed());
}

fn whitney_square(out: &mut Outcomes) {
    let t = Instant::now();
    let xs: Vec<f64> = (0..=200).map(|i| -1.0 + 0.01 * i as f64).collect();
    let jet = JetData::new(
        xs.iter().map(|&x| vec![x]).collect(),
        xs.iter().map(|&x| vec![x * x]).collect(),
        xs.iter().map(|&x| DMatrix::from_element(1, 1, 2.0 * x)).collect(),
        1.0,
    )
    .unwrap();
    let c = whitney_constants(&jet).unwrap();
    let pass = (c.m_taylor - 1.0).abs() <= 1e-12 && (c.m_holder - 2.0).abs() <= 1e-12;
    let detail = format!("M_taylor - 1 = {:.2e}, M_holder - 2 = {:.2e}", c.m_taylor - 1.0, c.m_holder - 2.0);
    out.report("C10", "Whitney constants of x^2", pass, detail, t.elapsed());
}

fn determinism(out: &mut Outcomes) {
    let cloud = generate(&GeneratorSpec::new(GeneratorKind::Sphere { radius: 1.0 }, 3, 100_000, 0)).unwrap();
    let mut params = ClassifyParams::new(ScaleGrid::new(1.0, 0.82, 15).unwrap());
    params.stride = 500;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let t = Instant::now();
        let report = pool.install(|| classify(&cloud, &params)).unwrap();
        (serde_json::to_vec(&report).unwrap(), t.elapsed(), report.aggregate.query_points, report.params.grid.len())
    };
    let (first, single, queries, scales) = run(1);
    let (second, _, _, _) = run(1);
    let (wide, _, _, _) = run(4);
    let pass = single < Duration::from_secs(60) && first == second && first == wide && queries == 200 && scales == 16;
    let detail = format!(
        "{queries} queries x {scales} scales on {} points; single-threaded {:.1} s; identical across runs: {}, across thread counts: {}",
        cloud.len(),
        single.as_secs_f64(),
        first == second,
        first == wide
    );
    out.report("C12", "determinism and performance", pass, detail, single);
}

fn main() {
    let mut out = Outcomes { failed: Vec::new() };
    let seed = 20_240_601;
    let clouds = verify::verification_clouds(seed).unwrap();
    converse_sanity(&mut out);
    positive_case(&mut out);
    negative_case(&mut out);
    lemma(&mut out, "C04", "growth of beta_2", || verify::check_growth(seed, &clouds, 100, None).unwrap(), 100);
    lemma(&mut out, "C05", "beta_2 against beta_p", || verify::check_beta_comparison(seed, &clouds, 100).unwrap(), 100);
    lemma(&mut out, "C06", "tube containment", || verify::check_tube(seed, 50, 10_000).unwrap(), 500_000);
    lemma(
        &mut out,
        "C07",
        "slanted paraboloid containment",
        || verify::check_slanted_paraboloid(seed, 20, 5_000).unwrap(),
        100_000,
    );
    lemma(&mut out, "C08", "elementary inequality", || verify::check_elementary(seed, 100_000).unwrap(), 100_000);
    lemma(
        &mut out,
        "C09",
        "plane stabilization",
        || verify::check_plane_stabilization(seed, 40, 10_000).unwrap(),
        10_000,
    );
    whitney_square(&mut out);
    grassmann(&mut out);
    determinism(&mut out);
    if out.failed.is_empty() {
        println!("acceptance: all 12 criteria pass");
    } else {
        println!("acceptance: failed {}", out.failed.join(", "));
        std::process::exit(1);
    }
}
