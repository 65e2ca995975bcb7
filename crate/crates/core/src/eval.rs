//! Benchmark tables: PSNR against reference images, forward passes per ray
//! and speed-up relative to the coarse/fine 64+128 reference.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::render::camera::CameraSet;
use crate::render::image::{psnr, ImageBuffer};
use crate::render::{RenderConfig, RenderPath, Renderer};

/// Predicted mass inside the smallest set of bins carrying at least
/// `coverage` of the reference mass.
pub fn support_mass(pred: &[f64], reference: &[f64], coverage: f64) -> f64 {
    let mut idx: Vec<usize> = (0..reference.len()).collect();
    idx.sort_by(|&a, &b| reference[b].total_cmp(&reference[a]).then(a.cmp(&b)));
    let total: f64 = reference.iter().sum();
    let (mut acc, mut mass) = (0.0, 0.0);
    for i in idx {
        if acc >= coverage * total {
            break;
        }
        acc += reference[i];
        mass += pred[i];
    }
    mass
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub method: String,
    /// Sampler label (`representation+mode`), empty for sampler-free paths.
    pub sampler: String,
    pub n_samples: usize,
    pub psnr: f64,
    pub passes_per_ray: f64,
    pub speedup: f64,
    pub wall_ms: u64,
}

pub const CSV_HEADER: &str = "method,sampler,n_samples,psnr,passes_per_ray,speedup,wall_ms";

/// The 64+128 hierarchical configuration every speed-up is measured against.
pub fn reference_config() -> RenderConfig {
    RenderConfig::coarse_fine(64, 128)
}

/// Renders every camera under each configuration and scores it against
/// `references`. Speed-up is `reference passes / method passes` where the
/// reference is [`reference_config`] on the same hit-ray set; wall time is
/// recorded only when `timing` is set.
pub fn evaluate(
    renderer: &Renderer<'_>,
    cameras: &CameraSet,
    references: &[ImageBuffer],
    configs: &[RenderConfig],
    sampler_label: &str,
    timing: bool,
) -> Result<Vec<EvalRow>> {
    if references.len() != cameras.len() || cameras.is_empty() {
        return Err(Error::Config(format!(
            "evaluation needs one reference image per camera ({} cameras, {} images)",
            cameras.len(),
            references.len()
        )));
    }
    let hit_rays: u64 = cameras
        .cameras()
        .map(|c| c.rays().iter().filter(|r| renderer.bounds.ray_hits(r)).count() as u64)
        .sum();
    let total_rays = (cameras.len() * cameras.width * cameras.height) as u64;
    let ref_passes = (hit_rays * reference_config().passes_per_ray()) as f64 / total_rays as f64;
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let start = Instant::now();
        let mut score = 0.0;
        let mut passes = 0u64;
        for (cam, reference) in cameras.cameras().zip(references) {
            let (img, stats) = renderer.render_image(&cam, cfg)?;
            score += psnr(&img, reference)?;
            passes += stats.forward_passes;
        }
        let per_ray = passes as f64 / total_rays as f64;
        rows.push(EvalRow {
            method: cfg.path.name().to_string(),
            sampler: if cfg.path == RenderPath::TermiNerf {
                sampler_label.to_string()
            } else {
                String::new()
            },
            n_samples: match cfg.path {
                RenderPath::OracleDense => cfg.n_dense,
                RenderPath::CoarseFine => cfg.n_coarse + cfg.n_fine,
                RenderPath::TermiNerf => cfg.n_samples,
            },
            psnr: score / cameras.len() as f64,
            passes_per_ray: per_ray,
            speedup: if per_ray > 0.0 { ref_passes / per_ray } else { f64::INFINITY },
            wall_ms: if timing { start.elapsed().as_millis() as u64 } else { 0 },
        });
    }
    Ok(rows)
}

pub fn to_csv(rows: &[EvalRow]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.4},{:.4},{:.4},{}",
            r.method, r.sampler, r.n_samples, r.psnr, r.passes_per_ray, r.speedup, r.wall_ms
        );
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<EvalRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::parse(1, "unexpected evaluation header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let err = || Error::parse(i + 2, format!("malformed evaluation row `{l}`"));
            if f.len() != 7 {
                return Err(err());
            }
            Ok(EvalRow {
                method: f[0].to_string(),
                sampler: f[1].to_string(),
                n_samples: f[2].parse().map_err(|_| err())?,
                psnr: f[3].parse().map_err(|_| err())?,
                passes_per_ray: f[4].parse().map_err(|_| err())?,
                speedup: f[5].parse().map_err(|_| err())?,
                wall_ms: f[6].parse().map_err(|_| err())?,
            })
        })
        .collect()
}

/// Aligned plain-text rendering of an evaluation table.
pub fn format_table(rows: &[EvalRow]) -> String {
    let mut s = format!(
        "{:<12} {:<24} {:>9} {:>9} {:>12} {:>9} {:>9}\n",
        "method", "sampler", "n_samples", "psnr", "passes/ray", "speedup", "wall_ms"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12} {:<24} {:>9} {:>9.2} {:>12.2} {:>8.2}x {:>9}",
            r.method,
            if r.sampler.is_empty() { "-" } else { &r.sampler },
            r.n_samples,
            r.psnr,
            r.passes_per_ray,
            r.speedup,
            r.wall_ms
        );
    }
    s
}

/// Cross-tabulates terminerf PSNR by sampler label (rows) and sample count
/// (columns). Every table must cover the same sample counts.
pub fn compare_tables(tables: &[Vec<EvalRow>]) -> Result<String> {
    if tables.len() < 2 {
        return Err(Error::Config("comparison needs at least two evaluation tables".into()));
    }
    let counts = |t: &[EvalRow]| -> Vec<usize> {
        let mut c: Vec<usize> = t.iter().filter(|r| r.method == "terminerf").map(|r| r.n_samples).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let grid = counts(&tables[0]);
    if grid.is_empty() {
        return Err(Error::Format("evaluation table has no terminerf rows".into()));
    }
    let mut cells: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for (i, t) in tables.iter().enumerate() {
        if counts(t) != grid {
            return Err(Error::Format(format!("table {} uses a different sample-count grid", i + 1)));
        }
        for r in t.iter().filter(|r| r.method == "terminerf") {
            let key = if tables.iter().filter(|o| o.iter().any(|x| x.sampler == r.sampler)).count() > 1 {
                format!("{} #{}", r.sampler, i + 1)
            } else {
                r.sampler.clone()
            };
            cells.entry(key).or_default().insert(r.n_samples, r.psnr);
        }
    }
    let mut s = format!("{:<28}", "sampler");
    for n in &grid {
        let _ = write!(s, " {:>9}", format!("n={n}"));
    }
    s.push('\n');
    for (label, row) in &cells {
        let _ = write!(s, "{label:<28}");
        for n in &grid {
            let _ = write!(s, " {:>9.2}", row[n]);
        }
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::presets;
    use crate::math::Vec3;
    use crate::render::OracleSampler;

    #[test]
    fn support_mass_counts_top_bins() {
        let reference = [0.0, 0.7, 0.28, 0.02];
        assert!((support_mass(&[0.1, 0.5, 0.3, 0.1], &reference, 0.95) - 0.8).abs() < 1e-12);
        assert!((support_mass(&reference, &reference, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reference_row_has_unit_speedup_and_identity_is_capped() {
        let scene = presets::red_ball();
        let oracle = OracleSampler::new(&scene, 15);
        let r = Renderer::analytic(&scene).with_sampler(&oracle);
        let cams = CameraSet::orbit(2, 4.0, 0.2, Vec3::ZERO, 8, 8).unwrap();
        let refs: Vec<ImageBuffer> = cams
            .cameras()
            .map(|c| r.render_image(&c, &reference_config()).unwrap().0)
            .collect();
        let rows = evaluate(&r, &cams, &refs, &[reference_config(), RenderConfig::terminerf(32)], "segment+centered_log", false).unwrap();
        assert_eq!(rows[0].speedup, 1.0);
        assert_eq!(rows[0].psnr, 99.0);
        let hits = rows[1].passes_per_ray / 33.0;
        assert!((rows[0].passes_per_ray - 256.0 * hits).abs() < 1e-9);
        assert!((rows[1].speedup - 256.0 / 33.0).abs() < 1e-9);
        assert_eq!(parse_csv(&to_csv(&rows)).unwrap().len(), 2);
    }

    #[test]
    fn comparison_requires_matching_grids() {
        let row = |s: &str, n, p| EvalRow {
            method: "terminerf".into(),
            sampler: s.into(),
            n_samples: n,
            psnr: p,
            passes_per_ray: 1.0,
            speedup: 1.0,
            wall_ms: 0,
        };
        let a = vec![row("segment+centered_log", 16, 30.0), row("segment+centered_log", 32, 31.0)];
        let b = vec![row("sphere+equidistant", 16, 29.0), row("sphere+equidistant", 32, 30.5)];
        let t = compare_tables(&[a.clone(), b]).unwrap();
        assert!(t.contains("sphere+equidistant") && t.contains("n=32"));
        assert!(compare_tables(&[a.clone()]).is_err());
        assert!(compare_tables(&[a.clone(), vec![row("x", 8, 1.0)]]).is_err());
        let same = compare_tables(&[a.clone(), a]).unwrap();
        let lines: Vec<&str> = same.lines().collect();
        assert_eq!(lines[1].split_whitespace().skip(2).collect::<Vec<_>>(), lines[2].split_whitespace().skip(2).collect::<Vec<_>>());
    }
}
