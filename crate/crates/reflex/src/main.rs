use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use reflex::reflex_core::flow::{gaussian_noise, noised_invert};
use reflex::reflex_core::hooks::NoHooks;
use reflex::reflex_core::pipeline::{extract_mid_step, plain_reconstruction, source_conditioning};
use reflex::reflex_core::{reflex_edit, Backend, BackendField, EditConfig, EditRequest};
use reflex::sweep::{sweep_command, write_sweep, SweepKind};
use reflex::{analyze, bench, io, manifest, toy_backend};

#[derive(Parser)]
#[command(name = "reflex", version, about = "Real-image editing for rectified-flow MM-DiT models")]
struct Cli {
    /// Backend preset: `toy` (12 layers) or `toy-flux` (57 layers, FLUX indices).
    #[arg(long, global = true, default_value = "toy-flux")]
    backend: String,

    /// Seed for the backend weights.
    #[arg(long, global = true, default_value_t = 0)]
    backend_seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Config override, e.g. `--set k=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<EditConfig> {
        Ok(io::load_config(self.config.as_deref(), &self.overrides)?)
    }
}

#[derive(Args)]
struct RequestArgs {
    #[arg(long)]
    image: PathBuf,

    #[arg(long)]
    target_prompt: String,

    #[arg(long)]
    source_prompt: Option<String>,

    #[arg(long)]
    blended_word: Option<String>,

    /// Edit-region mask PNG (white = editable).
    #[arg(long)]
    mask: Option<PathBuf>,

    #[command(flatten)]
    config: ConfigArgs,
}

impl RequestArgs {
    fn request(&self, backend: &dyn Backend) -> Result<EditRequest> {
        let mut config = self.config.load()?;
        if self.blended_word.is_some() {
            config.blended_word = self.blended_word.clone();
        }
        let (h, w, _) = backend.latent_shape();
        let user_mask = self
            .mask
            .as_deref()
            .map(|p| io::load_mask(p, h, w))
            .transpose()?;
        Ok(EditRequest {
            image: io::load_image(&self.image)?,
            source_prompt: self.source_prompt.clone(),
            target_prompt: self.target_prompt.clone(),
            config,
            user_mask,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Edit one image.
    Edit {
        #[command(flatten)]
        request: RequestArgs,

        #[arg(long)]
        out: PathBuf,

        /// Also dump trajectory, features and masks as tensor containers.
        #[arg(long)]
        dump: bool,
    },
    /// Invert an image and store its trajectory.
    Invert {
        #[arg(long)]
        image: PathBuf,

        #[arg(long)]
        source_prompt: Option<String>,

        #[command(flatten)]
        config: ConfigArgs,

        #[arg(long)]
        out: PathBuf,

        /// Also decode a plain reconstruction from this step.
        #[arg(long)]
        reconstruct_from: Option<usize>,
    },
    /// Repeat an edit over values of t_prime, k or alpha.
    Sweep {
        #[arg(long)]
        kind: SweepKind,

        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,

        #[command(flatten)]
        request: RequestArgs,

        #[arg(long)]
        out: PathBuf,
    },
    /// PCA images of the residual features extracted from an image.
    Analyze {
        #[arg(long)]
        image: PathBuf,

        #[arg(long)]
        source_prompt: Option<String>,

        #[command(flatten)]
        config: ConfigArgs,

        #[arg(long)]
        out: PathBuf,
    },
    /// Run every case of a manifest.
    Bench {
        #[arg(long)]
        manifest: PathBuf,

        #[command(flatten)]
        config: ConfigArgs,

        #[arg(long)]
        out: PathBuf,

        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,

        /// Executable called as `scorer <image> <prompt>` per case.
        #[arg(long)]
        scorer: Option<PathBuf>,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let backend = toy_backend(&cli.backend, cli.backend_seed)?;
    let (h, w, _) = backend.latent_shape();
    match cli.command {
        Command::Edit { request, out, dump } => {
            let req = request.request(&backend)?;
            let result = reflex_edit(&req, &backend)?;
            create(&out)?;
            io::save_image(&out.join("edited.png"), &io::upscale(&result.image, 4))?;
            if let Some(m) = result.masks.last() {
                io::save_mask(&out.join("mask.png"), m)?;
            }
            write(&out.join("report.txt"), &result.report.to_text())?;
            if dump {
                let schedule = backend.schedule(req.config.steps);
                io::save_trajectory(&out.join("trajectory"), &result.source_traj, &schedule)?;
                io::save_cache(&out.join("features"), &result.cache)?;
                io::write_container(&out.join("edited_latent.rtn"), result.latent.data())?;
                let masks = out.join("masks");
                create(&masks)?;
                for m in &result.masks {
                    io::save_mask(&masks.join(format!("step_{:04}.png", m.step_index())), m)?;
                }
            }
            println!("{}", out.join("report.txt").display());
        }
        Command::Invert {
            image,
            source_prompt,
            config,
            out,
            reconstruct_from,
        } => {
            let config = config.load()?;
            let z0 = backend.encode(&io::load_image(&image)?)?;
            let cond = source_conditioning(&backend, source_prompt.as_deref());
            let schedule = backend.schedule(config.steps);
            let noise = gaussian_noise(z0.data().dims(), config.seed);
            let mut hooks = NoHooks;
            let traj = {
                let mut field = BackendField::new(&backend, &cond, &mut hooks);
                noised_invert(&z0, config.n_noising, &noise, &schedule, &mut field)?
            };
            io::save_trajectory(&out, &traj, &schedule)?;
            if let Some(step) = reconstruct_from {
                let rec = plain_reconstruction(&traj, step, &cond, &backend, config.steps)?;
                println!("reconstruction mse from step {step}: {:.9}", rec.data().mse(z0.data())?);
                io::save_image(&out.join("reconstruction.png"), &io::upscale(&backend.decode(&rec)?, 4))?;
            }
            println!("{}", out.join("index.txt").display());
        }
        Command::Sweep {
            kind,
            values,
            request,
            out,
        } => {
            let req = request.request(&backend)?;
            let result = sweep_command(kind, &values, &req, &backend)?;
            write_sweep(&out, &result, 4)?;
            print!("{}", result.to_text());
        }
        Command::Analyze {
            image,
            source_prompt,
            config,
            out,
        } => {
            let config = config.load()?;
            let img = io::load_image(&image)?;
            let (cache, _) = extract_mid_step(&img, source_prompt.as_deref(), &config, &backend)?;
            for (layer, pca) in analyze::analyze_cache(&cache, (h, w), &out, 4)? {
                println!("layer {layer}: explained {:.4?}", pca.ratios);
            }
        }
        Command::Bench {
            manifest: path,
            config,
            out,
            threads,
            scorer,
        } => {
            let config = config.load()?;
            let cases = manifest::load_manifest(&path)?;
            let options = bench::BenchOptions { threads, scorer };
            let report = bench::run_benchmark(&cases, &config, &backend, &out, &options)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}
