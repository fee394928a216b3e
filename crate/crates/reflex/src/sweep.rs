//! Parameter sweeps over `t'`, `k` and `alpha` for one request.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use reflex_core::flow::Trajectory;
use reflex_core::pipeline::{edit_with_cache, extract_at, extract_from_latent, plain_reconstruction, source_conditioning};
use reflex_core::{Backend, EditRequest, LatentGrid, Tensor};

use crate::error::{Error, Result};
use crate::io;
use crate::plot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    TPrime,
    K,
    Alpha,
}

impl FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "t_prime" => Ok(Self::TPrime),
            "k" => Ok(Self::K),
            "alpha" => Ok(Self::Alpha),
            _ => Err(format!("unknown sweep kind `{s}` (expected t_prime, k or alpha)")),
        }
    }
}

impl SweepKind {
    pub fn key(self) -> &'static str {
        match self {
            Self::TPrime => "t_prime",
            Self::K => "k",
            Self::Alpha => "alpha",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    /// MSE of plain reconstruction from `z_{t'}` against the source `z_0`.
    pub recon_mse: f64,
    /// MSE of the edited latent against the source `z_0`.
    pub edit_mse: f64,
    pub latent: LatentGrid,
    pub image: Tensor,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_text(&self) -> String {
        let mut s = format!("# {} recon_mse edit_mse\n", self.kind.key());
        for r in &self.rows {
            let _ = writeln!(s, "{} {:.9} {:.9}", r.value, r.recon_mse, r.edit_mse);
        }
        s
    }
}

/// One edit per value. The inversion trajectory is shared by every row
/// and, for `k` and `alpha`, the extracted features as well; a `t'` sweep
/// re-extracts at each value.
pub fn sweep_command(
    kind: SweepKind,
    values: &[String],
    request: &EditRequest,
    backend: &dyn Backend,
) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(reflex_core::Error::Config {
            field: kind.key().into(),
            constraint: "sweep needs at least one value".into(),
        }
        .into());
    }
    request.validate(backend)?;
    let z0 = backend.encode(&request.image)?;
    let cond = source_conditioning(backend, request.source_prompt.as_deref());
    let (shared_cache, traj): (_, Trajectory) = extract_from_latent(&z0, &cond, &request.config, backend)?;
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let mut req = request.clone();
        req.config.set(kind.key(), v)?;
        req.config.validate()?;
        let fresh;
        let cache = if kind == SweepKind::TPrime {
            fresh = extract_at(&traj, &cond, &req.config, backend)?;
            &fresh
        } else {
            &shared_cache
        };
        let out = edit_with_cache(&req, cache, &traj, backend)?;
        let rec = plain_reconstruction(&traj, req.config.t_prime, &cond, backend, req.config.steps)?;
        rows.push(SweepRow {
            value: v.clone(),
            recon_mse: rec.data().mse(z0.data())?,
            edit_mse: out.latent.data().mse(z0.data())?,
            latent: out.latent,
            image: out.image,
        });
    }
    Ok(SweepResult { kind, rows })
}

/// Writes `sweep.txt`, `grid.png` (edited images side by side) and
/// `plot.png` (both metrics against the swept value, each min-max scaled).
pub fn write_sweep(dir: &Path, result: &SweepResult, upscale: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let path = dir.join("sweep.txt");
    fs::write(&path, result.to_text()).map_err(Error::io(&path))?;
    let tiles: Vec<Tensor> = result.rows.iter().map(|r| io::upscale(&r.image, upscale)).collect();
    let grid_path = dir.join("grid.png");
    plot::image_row(&tiles, 4)?
        .save(&grid_path)
        .map_err(|source| Error::Image { path: grid_path, source })?;
    let xs: Vec<f64> = result
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.value.parse().unwrap_or(i as f64))
        .collect();
    let series = vec![
        result.rows.iter().map(|r| r.recon_mse).collect(),
        result.rows.iter().map(|r| r.edit_mse).collect(),
    ];
    let plot_path = dir.join("plot.png");
    plot::line_plot(&xs, &series, 320, 240)
        .save(&plot_path)
        .map_err(|source| Error::Image { path: plot_path, source })
}
