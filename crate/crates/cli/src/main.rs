use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vlbias::config::AuditConfig;
use vlbias::datamodel::{Attribute, DEFAULT_ABC_JSON, DEFAULT_SCM_JSON, DEFAULT_TEMPLATES_JSON};
use vlbias::imagestats::{brightness_match, crop_causalface, load_gray, load_rgb, sign_heatmap, FaceMask};
use vlbias::pipeline::{ingest, run_pipeline};

/// Audit vision-language embeddings for social bias.
#[derive(Parser)]
#[command(name = "audit", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "AUDIT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file (TOML or JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// RNG seed, overriding the config.
    #[arg(long)]
    rng_seed: Option<u64>,
    /// Minimum age for wild datasets, overriding the config.
    #[arg(long)]
    min_age: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate inputs and print counts and hashes.
    Ingest(Common),
    /// Similarity tables only.
    Sim(Common),
    /// Bootstrap AbsDiff distributions per attribute.
    Variation {
        #[command(flatten)]
        common: Common,
        /// Resamples per dimension.
        #[arg(long)]
        resamples: Option<usize>,
        /// Attributes to vary; repeatable or comma-separated.
        #[arg(long = "attribute", alias = "attributes", value_delimiter = ',')]
        attributes: Vec<Attribute>,
        #[arg(long)]
        gap_age: Option<f64>,
        #[arg(long)]
        gap_smiling: Option<f64>,
    },
    /// Markedness, mean cosine, SC-WEAT, Skew and NDKL.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        toggles: MetricToggles,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// Attribute trends, valence ellipses and confound correlations.
    Trends(Common),
    /// Neutral-prompt densities and tests, valence correlations and geometry.
    Valence(Common),
    /// Run every section enabled in the config.
    Report(Common),
    /// Pixel-level confound tools.
    #[command(subcommand)]
    Brightness(Brightness),
    /// Write the built-in lexicons and templates.
    DumpDefaults {
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write a small synthetic dataset and config for trying the pipeline.
    Demo {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        seeds: u64,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
    },
}

/// Metric selection; falls back to the config toggles, then to all metrics.
#[derive(Args, Clone, Copy)]
struct MetricToggles {
    #[arg(long)]
    weat: bool,
    #[arg(long)]
    markedness: bool,
    #[arg(long)]
    mean_cossim: bool,
    #[arg(long)]
    skew: bool,
    #[arg(long)]
    ndkl: bool,
}

#[derive(Subcommand)]
enum Brightness {
    /// Rescale a variant so its masked mean matches the reference.
    Match {
        #[arg(long)]
        variant: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Face mask; white pixels count. Whole image when absent.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Per-pixel sum of sign(first - second) over image pairs.
    Heatmap {
        /// Two images per occurrence.
        #[arg(long = "pair", num_args = 2, value_names = ["FIRST", "SECOND"], required = true)]
        pairs: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the grid values as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Pose-dependent 432x432 face crop of a 512x512 image.
    Crop {
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        pose: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<(AuditConfig, PathBuf)> {
    let mut cfg = AuditConfig::load(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    let base = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    if let Some(out) = &common.out {
        // Flag paths are relative to the working directory, not the config.
        cfg.output_dir = std::path::absolute(out)?;
    }
    if let Some(s) = common.rng_seed {
        cfg.rng_seed = s;
    }
    if let Some(a) = common.min_age {
        cfg.min_age = a;
    }
    Ok((cfg, base))
}

fn only(cfg: &mut AuditConfig) {
    cfg.metrics.weat = false;
    cfg.metrics.markedness = false;
    cfg.metrics.mean_cossim = false;
    cfg.metrics.skew = false;
    cfg.metrics.ndkl = false;
    cfg.variation.enabled = false;
    cfg.trends.enabled = false;
    cfg.valence.enabled = false;
}

fn run(cfg: &AuditConfig, base: &Path) -> Result<()> {
    let report = run_pipeline(cfg, base)?;
    let dir = cfg.resolved(base).output_dir;
    eprintln!("wrote {} files to {}", report.files.len() + 1, dir.display());
    for s in &report.skipped {
        eprintln!("skipped: {s}");
    }
    Ok(())
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Ingest(c) => {
            let (cfg, base) = load(&c)?;
            print_json(&ingest(&cfg, &base)?)?;
        }
        Command::Sim(c) => {
            let (mut cfg, base) = load(&c)?;
            only(&mut cfg);
            run(&cfg, &base)?;
        }
        Command::Variation {
            common,
            resamples,
            attributes,
            gap_age,
            gap_smiling,
        } => {
            let (mut cfg, base) = load(&common)?;
            only(&mut cfg);
            cfg.variation.enabled = true;
            if let Some(r) = resamples {
                cfg.variation.resamples = r;
            }
            if !attributes.is_empty() {
                cfg.variation.attributes = attributes;
            }
            if let Some(g) = gap_age {
                cfg.variation.gap_age = g;
            }
            if let Some(g) = gap_smiling {
                cfg.variation.gap_smiling = g;
            }
            run(&cfg, &base)?;
        }
        Command::Metrics {
            common,
            toggles: t,
            k,
            permutations,
        } => {
            let (mut cfg, base) = load(&common)?;
            let m = cfg.metrics.clone();
            only(&mut cfg);
            cfg.metrics = m;
            let flagged = t.weat || t.markedness || t.mean_cossim || t.skew || t.ndkl;
            if flagged || !cfg.metrics.any() {
                let all = !flagged;
                cfg.metrics.weat = all || t.weat;
                cfg.metrics.markedness = all || t.markedness;
                cfg.metrics.mean_cossim = all || t.mean_cossim;
                cfg.metrics.skew = all || t.skew;
                cfg.metrics.ndkl = all || t.ndkl;
            }
            if let Some(k) = k {
                cfg.metrics.k = k;
            }
            if let Some(p) = permutations {
                cfg.metrics.permutations = p;
            }
            run(&cfg, &base)?;
        }
        Command::Trends(c) => {
            let (mut cfg, base) = load(&c)?;
            only(&mut cfg);
            cfg.trends.enabled = true;
            run(&cfg, &base)?;
        }
        Command::Valence(c) => {
            let (mut cfg, base) = load(&c)?;
            only(&mut cfg);
            cfg.valence.enabled = true;
            run(&cfg, &base)?;
        }
        Command::Report(c) => {
            let (cfg, base) = load(&c)?;
            run(&cfg, &base)?;
        }
        Command::Brightness(b) => brightness(b)?,
        Command::DumpDefaults { out } => {
            fs::create_dir_all(&out)?;
            for (name, body) in [
                ("scm.json", DEFAULT_SCM_JSON),
                ("abc.json", DEFAULT_ABC_JSON),
                ("templates.json", DEFAULT_TEMPLATES_JSON),
            ] {
                fs::write(out.join(name), body)?;
            }
        }
        Command::Demo {
            out,
            seeds,
            dim,
            rng_seed,
        } => {
            let seeds: Vec<u64> = (0..seeds).collect();
            let cfg = vlbias::synthetic::write_demo(&out, &seeds, dim, rng_seed)?;
            eprintln!("wrote demo config {}", cfg.display());
        }
    }
    Ok(())
}

fn brightness(cmd: Brightness) -> Result<()> {
    match cmd {
        Brightness::Match {
            variant,
            reference,
            mask,
            out,
        } => {
            let v = load_gray(&variant)?;
            let r = load_gray(&reference)?;
            let mask = match mask {
                Some(p) => FaceMask::load(p)?,
                None => FaceMask::full(v.width(), v.height())?,
            };
            let m = brightness_match(&v, &r, &mask)?;
            m.image.save_png(&out)?;
            print_json(&m)?;
        }
        Brightness::Heatmap { pairs, out, csv } => {
            let images = pairs
                .chunks(2)
                .map(|p| Ok((load_gray(&p[0])?, load_gray(&p[1])?)))
                .collect::<Result<Vec<_>>>()?;
            let h = sign_heatmap(&images)?;
            h.save_png(&out)?;
            if let Some(p) = csv {
                fs::write(p, h.to_csv())?;
            }
        }
        Brightness::Crop { input, pose, out } => {
            let img = crop_causalface(&load_rgb(&input)?, pose)?;
            img.save(&out).with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}
