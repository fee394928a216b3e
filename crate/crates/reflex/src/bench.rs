//! Benchmark runs over a manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use reflex_core::{reflex_edit, Backend, EditConfig, EditRequest, Tensor};

use crate::error::{Error, Result};
use crate::io;
use crate::manifest::BenchCase;
use crate::metrics::{iou, psnr_masked};

#[derive(Debug, Clone, Default)]
pub struct BenchOptions {
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    /// Executable run as `scorer <image> <prompt>`, printing one number.
    pub scorer: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CaseMetrics {
    pub psnr_non_edit: Option<f64>,
    pub iou: Option<f64>,
    pub score: Option<f64>,
    /// Schedule counts from the run report: CA, SA, residual, blended steps.
    pub counts: [usize; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub id: String,
    pub outcome: std::result::Result<CaseMetrics, String>,
    pub runtime: Duration,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub cases: Vec<CaseResult>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<(f64, usize)> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        None
    } else {
        Some((v.iter().sum::<f64>() / v.len() as f64, v.len()))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

impl MetricReport {
    pub fn succeeded(&self) -> usize {
        self.cases.iter().filter(|c| c.outcome.is_ok()).count()
    }

    fn column(&self, f: impl Fn(&CaseMetrics) -> Option<f64>) -> Option<(f64, usize)> {
        mean(self.cases.iter().filter_map(|c| c.outcome.as_ref().ok().and_then(&f)))
    }

    pub fn mean_psnr(&self) -> Option<(f64, usize)> {
        self.column(|m| m.psnr_non_edit)
    }

    pub fn mean_iou(&self) -> Option<(f64, usize)> {
        self.column(|m| m.iou)
    }

    pub fn mean_score(&self) -> Option<(f64, usize)> {
        self.column(|m| m.score)
    }

    /// Deterministic report text; runtimes are kept out of it.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# reflex benchmark report\n");
        let _ = writeln!(s, "cases = {}", self.cases.len());
        let _ = writeln!(s, "succeeded = {}", self.succeeded());
        let _ = writeln!(s, "failed = {}", self.cases.len() - self.succeeded());
        for (name, agg) in [
            ("psnr_non_edit", self.mean_psnr()),
            ("iou", self.mean_iou()),
            ("score", self.mean_score()),
        ] {
            match agg {
                Some((m, n)) => {
                    let _ = writeln!(s, "{name}_mean = {m:.6}\n{name}_count = {n}");
                }
                None => {
                    let _ = writeln!(s, "{name}_mean = -\n{name}_count = 0");
                }
            }
        }
        s.push_str("\n[cases]\nid status psnr_non_edit iou score ca sa res blended\n");
        for c in &self.cases {
            match &c.outcome {
                Ok(m) => {
                    let _ = writeln!(
                        s,
                        "{} ok {} {} {} {} {} {} {}",
                        c.id,
                        opt(m.psnr_non_edit),
                        opt(m.iou),
                        opt(m.score),
                        m.counts[0],
                        m.counts[1],
                        m.counts[2],
                        m.counts[3]
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "{} failed {}", c.id, e.replace('\n', " "));
                }
            }
        }
        s
    }

    pub fn timings_text(&self) -> String {
        let mut s = String::from("# id seconds\n");
        for c in &self.cases {
            let _ = writeln!(s, "{} {:.3}", c.id, c.runtime.as_secs_f64());
        }
        s
    }
}

fn safe_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Upscales `small` by the integer factor that brings it to `like`'s size.
fn match_resolution(small: &Tensor, like: &Tensor) -> Result<Tensor> {
    let (sd, ld) = (small.dims(), like.dims());
    if ld[0] % sd[0] != 0 || ld[1] % sd[1] != 0 || ld[0] / sd[0] != ld[1] / sd[1] {
        return Err(Error::Metric(format!(
            "cannot compare a {}x{} output with a {}x{} input",
            sd[0], sd[1], ld[0], ld[1]
        )));
    }
    Ok(io::upscale(small, ld[0] / sd[0]))
}

fn run_scorer(scorer: &Path, image: &Path, prompt: &str) -> Result<f64> {
    let out = Command::new(scorer)
        .arg(image)
        .arg(prompt)
        .output()
        .map_err(Error::io(scorer))?;
    if !out.status.success() {
        return Err(Error::Scorer(format!("{} exited with {}", scorer.display(), out.status)));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    text.trim()
        .parse()
        .map_err(|_| Error::Scorer(format!("unparseable score `{}`", text.trim())))
}

fn run_case(
    case: &BenchCase,
    base: &EditConfig,
    backend: &dyn Backend,
    out_dir: &Path,
    options: &BenchOptions,
) -> Result<CaseMetrics> {
    let image = io::load_image(&case.image)?;
    let config = case.config(base)?;
    let (h, w, _) = backend.latent_shape();
    let edit_mask = case
        .edit_mask
        .as_deref()
        .map(|p| io::load_mask(p, image.dims()[0], image.dims()[1]))
        .transpose()?;
    let request = EditRequest {
        image: image.clone(),
        source_prompt: case.source_prompt.clone(),
        target_prompt: case.target_prompt.clone(),
        config,
        user_mask: None,
    };
    let out = reflex_edit(&request, backend)?;
    let dir = out_dir.join(safe_name(&case.id));
    fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    let edited_path = dir.join("edited.png");
    let edited = match_resolution(&out.image, &image)?;
    io::save_image(&edited_path, &edited)?;
    if let Some(m) = out.masks.last() {
        io::save_mask(&dir.join("mask.png"), m)?;
    }
    let report_path = dir.join("report.txt");
    fs::write(&report_path, out.report.to_text()).map_err(Error::io(&report_path))?;

    let mut metrics = CaseMetrics {
        counts: [
            out.report.counts.ca,
            out.report.counts.sa,
            out.report.counts.res,
            out.report.blended_steps(),
        ],
        ..CaseMetrics::default()
    };
    if let Some(edit) = &edit_mask {
        let keep = edit.complement();
        if keep.count_ones() > 0 {
            // Compare the 8-bit values actually written to disk.
            let saved = io::load_image(&edited_path)?;
            metrics.psnr_non_edit = Some(psnr_masked(&saved, &image, &keep, 1.0)?);
        } else {
            log::warn!("case {}: edit mask covers the whole image, no PSNR", case.id);
        }
        if let Some(generated) = out.masks.last() {
            metrics.iou = Some(iou(generated, &edit.resize_nearest(h, w))?);
        }
    }
    if let Some(scorer) = &options.scorer {
        metrics.score = Some(run_scorer(scorer, &edited_path, &case.target_prompt)?);
    }
    Ok(metrics)
}

/// Runs every case, isolating failures, and writes per-case outputs plus
/// `report.txt` and `timings.txt` under `out_dir`.
pub fn run_benchmark(
    cases: &[BenchCase],
    config: &EditConfig,
    backend: &dyn Backend,
    out_dir: &Path,
    options: &BenchOptions,
) -> Result<MetricReport> {
    fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads)
        .build()
        .map_err(|e| Error::Metric(format!("thread pool: {e}")))?;
    let results: Vec<CaseResult> = pool.install(|| {
        cases
            .par_iter()
            .map(|case| {
                let start = Instant::now();
                let outcome = run_case(case, config, backend, out_dir, options).map_err(|e| {
                    log::error!("case {} failed: {e}", case.id);
                    e.to_string()
                });
                CaseResult {
                    id: case.id.clone(),
                    outcome,
                    runtime: start.elapsed(),
                }
            })
            .collect()
    });
    let report = MetricReport { cases: results };
    let path = out_dir.join("report.txt");
    fs::write(&path, report.to_text()).map_err(Error::io(&path))?;
    let path = out_dir.join("timings.txt");
    fs::write(&path, report.timings_text()).map_err(Error::io(&path))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_aggregates_successes_only() {
        let r = MetricReport {
            cases: vec![
                CaseResult {
                    id: "a".into(),
                    outcome: Ok(CaseMetrics {
                        psnr_non_edit: Some(20.0),
                        iou: Some(0.5),
                        ..Default::default()
                    }),
                    runtime: Duration::from_millis(5),
                },
                CaseResult {
                    id: "b".into(),
                    outcome: Ok(CaseMetrics {
                        psnr_non_edit: Some(30.0),
                        ..Default::default()
                    }),
                    runtime: Duration::from_millis(5),
                },
                CaseResult {
                    id: "c".into(),
                    outcome: Err("missing".into()),
                    runtime: Duration::ZERO,
                },
            ],
        };
        assert_eq!(r.mean_psnr(), Some((25.0, 2)));
        assert_eq!(r.mean_iou(), Some((0.5, 1)));
        assert_eq!(r.mean_score(), None);
        let text = r.to_text();
        assert!(text.contains("failed = 1\n"));
        assert!(text.contains("c failed missing\n"));
        assert!(!text.contains("0.005"));
    }

    #[test]
    fn names_are_filesystem_safe() {
        assert_eq!(safe_name("a/b c-1_x"), "a_b_c-1_x");
    }
}
