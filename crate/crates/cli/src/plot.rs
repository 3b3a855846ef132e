//! Tab-separated plot data. Each point is a block headed by `# point i`;
//! blocks are separated by two blank lines and a single blank line marks a
//! gap (a zero or missing value whose logarithm does not exist).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use rectiscope::multiscale::{PointProfile, THETA_FLOOR};
use rectiscope::Exponent;

#[derive(Deserialize)]
pub struct Entry {
    pub index: usize,
    pub profile: PointProfile,
}

/// The part shared by analysis and classification reports.
#[derive(Deserialize)]
pub struct Loaded {
    pub per_point: Vec<Entry>,
}

/// One curve: `(x, Some(y))` rows, `None` for gaps.
type Curve = Vec<(f64, Option<f64>)>;

fn log_positive(v: Option<f64>, floor: f64) -> Option<f64> {
    v.filter(|v| *v > floor && v.is_finite()).map(f64::ln)
}

fn render_curve(text: &mut String, curve: &Curve) {
    let mut gap = false;
    for &(x, y) in curve {
        match y {
            Some(y) => {
                let _ = writeln!(text, "{x}\t{y}");
                gap = false;
            }
            None if !gap => {
                text.push('\n');
                gap = true;
            }
            None => {}
        }
    }
}

fn render_blocks(entries: &[Entry], curve: impl Fn(&PointProfile) -> Curve) -> String {
    let mut text = String::new();
    for (i, e) in entries.iter().enumerate() {
        if i > 0 {
            text.push_str("\n\n");
        }
        let _ = writeln!(text, "# point {}", e.index);
        render_curve(&mut text, &curve(&e.profile));
    }
    text
}

/// Median over points of the per-scale log values.
fn median_curve(entries: &[Entry], curve: impl Fn(&PointProfile) -> Curve) -> String {
    let curves: Vec<Curve> = entries.iter().map(|e| curve(&e.profile)).collect();
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Curve::new();
    for j in 0..len {
        let mut ys: Vec<f64> = curves.iter().filter_map(|c| c.get(j).and_then(|r| r.1)).collect();
        let x = curves.iter().find_map(|c| c.get(j).map(|r| r.0));
        if let Some(x) = x {
            ys.sort_by(f64::total_cmp);
            out.push((x, (!ys.is_empty()).then(|| ys[ys.len() / 2])));
        }
    }
    let mut text = String::from("# median over points\n");
    render_curve(&mut text, &out);
    text
}

fn file_tag(p: Exponent) -> String {
    match p {
        Exponent::Infinity => "inf".into(),
        Exponent::Finite(v) => v.to_string(),
    }
}

/// Writes every plot file into `dir` and returns their paths in order.
pub fn write_all(report: &Loaded, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let entries = &report.per_point;
    let mut exponents: Vec<Exponent> = Vec::new();
    for e in entries {
        for s in &e.profile.scales {
            for b in &s.betas {
                if !exponents.contains(&b.p) {
                    exponents.push(b.p);
                }
            }
        }
    }
    let beta = |p: Exponent| {
        move |profile: &PointProfile| -> Curve {
            profile.scales.iter().map(|s| (s.r.ln(), log_positive(s.valid.then(|| s.beta(p)).flatten(), 0.0))).collect()
        }
    };
    let theta = |profile: &PointProfile| -> Curve {
        profile.scales.iter().map(|s| (s.r.ln(), log_positive(s.theta, THETA_FLOOR))).collect()
    };
    let cylinder = |profile: &PointProfile| -> Curve { profile.scales.iter().map(|s| (s.r, s.cyl_excess)).collect() };
    let paraboloid =
        |profile: &PointProfile| -> Curve { profile.scales.iter().map(|s| (s.r, s.parab_excess)).collect() };

    let mut files: Vec<(String, String)> = Vec::new();
    for &p in &exponents {
        let tag = file_tag(p);
        files.push((format!("beta_p{tag}.tsv"), render_blocks(entries, beta(p))));
        files.push((format!("beta_p{tag}_median.tsv"), median_curve(entries, beta(p))));
    }
    files.push(("theta.tsv".into(), render_blocks(entries, theta)));
    files.push(("theta_median.tsv".into(), median_curve(entries, theta)));
    files.push(("excess_cylinder.tsv".into(), render_blocks(entries, cylinder)));
    files.push(("excess_paraboloid.tsv".into(), render_blocks(entries, paraboloid)));

    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
