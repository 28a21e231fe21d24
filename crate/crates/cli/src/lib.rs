//! Command-line driver: phantoms, dataset synthesis, both solvers, the
//! graph-Laplacian baseline, moment checks and evaluation.

pub mod config;
pub mod error;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;

use uvtomo::baselines::{angle_differences, equispaced_assignment, laplacian_embed, reconstruct_known_angles, weight_matrix};
use uvtomo::basis::{fit_image, render_spatial, BasisSpec, HbCoefficients};
use uvtomo::bessel::BesselRootTable;
use uvtomo::em_solver::{em_best_of, EmProblem};
use uvtomo::gan_solver::{history_csv, GroundTruth, HistoryRow, TrainState, Trainer};
use uvtomo::image::Image;
use uvtomo::io::write_atomic;
use uvtomo::metrics::{align_o2, cc, d_tv, psnr};
use uvtomo::moments::{hl_check, project_pixels};
use uvtomo::phantom::{phantom, PhantomKind};
use uvtomo::projection::{stream_rng, synthesize_dataset, AnglePmf, ProjectionDataset, SynthOptions};

pub use config::RunConfig;
pub use error::{CliError, Result};

/// Grid of the uniform PMF `synth` uses when none is given.
pub const DEFAULT_PMF_BINS: usize = 240;

/// Environment variable naming the Bessel root cache file.
pub const CACHE_ENV: &str = "UVTOMO_CACHE";

#[derive(Debug, Parser)]
#[command(name = "uvtomo", version, about = "Unknown-view tomography in the Hartley-Bessel basis")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// run configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// worker threads (0: one per core)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub eval_every: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic phantom image.
    Phantom {
        #[arg(long)]
        kind: Option<PhantomKind>,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Simulate a projection dataset from a phantom and an angle PMF.
    Synth {
        /// phantom image; generated from the config when absent
        #[arg(long)]
        phantom: Option<PathBuf>,
        /// angle PMF CSV; uniform on a fine grid when absent
        #[arg(long)]
        pmf: Option<PathBuf>,
        /// the PMF covers [0, pi) rather than [0, 2 pi)
        #[arg(long)]
        half_circle: bool,
        /// draws before flip augmentation
        #[arg(long = "L")]
        lines: Option<usize>,
        /// signal-to-noise ratio, `inf` for clean data
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long)]
        no_flip: bool,
    },
    /// Train the adversarial solver.
    TrainGan {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        truth: TruthArgs,
        /// continue from a checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        /// stop at this iteration without changing the schedule
        #[arg(long)]
        until: Option<usize>,
    },
    /// Run expectation-maximization with random restarts.
    RunEm {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        truth: TruthArgs,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        n_inits: Option<usize>,
    },
    /// Graph-Laplacian angle assignment from the stored angles, then a
    /// known-angle reconstruction.
    BaselineGl {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Compare projection moments with the moment polynomials of an image.
    HlCheck {
        #[arg(long)]
        image: PathBuf,
        /// pair the lines with a permutation of their angles
        #[arg(long)]
        shuffle: bool,
    },
    /// Align a reconstruction with a reference and report metrics.
    Eval {
        #[arg(long)]
        img: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        pmf_rec: Option<PathBuf>,
        #[arg(long)]
        pmf_ref: Option<PathBuf>,
        /// rotation grid size (defaults to the PMF length, else 360)
        #[arg(long)]
        n_rot: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct TruthArgs {
    /// ground-truth image for monitoring
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// ground-truth PMF on the solver grid
    #[arg(long)]
    pub truth_pmf: Option<PathBuf>,
}

/// Parse arguments and run; help and version requests are returned as
/// `Ok` with their text printed.
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            return Err(CliError::Usage(msg.lines().next().unwrap_or("invalid usage").to_string()));
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        cfg.run.seed = s;
    }
    if let Some(w) = cli.global.workers {
        cfg.run.workers = w;
    }
    if let Some(e) = cli.global.eval_every {
        cfg.run.eval_every = e;
    }
    std::fs::create_dir_all(&cli.global.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let out = cli.global.out_dir.clone();
    pool.install(|| dispatch(cli.command, cfg, &out))
}

fn dispatch(cmd: Command, mut cfg: RunConfig, out: &Path) -> Result<()> {
    match cmd {
        Command::Phantom { kind, m } => {
            if let Some(k) = kind {
                cfg.data.phantom = k;
            }
            if let Some(m) = m {
                cfg.data.m = m;
            }
            cmd_phantom(&cfg, out)
        }
        Command::Synth {
            phantom,
            pmf,
            half_circle,
            lines,
            snr,
            no_flip,
        } => {
            if let Some(l) = lines {
                cfg.data.lines = l;
            }
            if let Some(s) = snr {
                cfg.data.snr = s;
            }
            if no_flip {
                cfg.data.flip = false;
            }
            let span = if half_circle { PI } else { 2.0 * PI };
            cmd_synth(&cfg, phantom.as_deref(), pmf.as_deref(), span, out)
        }
        Command::TrainGan {
            dataset,
            truth,
            resume,
            iters,
            until,
        } => {
            if let Some(i) = iters {
                cfg.gan.iters = i;
            }
            cmd_train_gan(&cfg, &dataset, &truth, resume.as_deref(), until, out)
        }
        Command::RunEm {
            dataset,
            truth,
            iters,
            n_inits,
        } => {
            if let Some(i) = iters {
                cfg.em.iters = i;
            }
            if let Some(n) = n_inits {
                cfg.em.n_inits = n;
            }
            cmd_run_em(&cfg, &dataset, &truth, out)
        }
        Command::BaselineGl { dataset, truth } => cmd_baseline_gl(&cfg, &dataset, truth.as_deref(), out),
        Command::HlCheck { image, shuffle } => cmd_hl_check(&cfg, &image, shuffle, out),
        Command::Eval {
            img,
            reference,
            pmf_rec,
            pmf_ref,
            n_rot,
        } => cmd_eval(&img, &reference, pmf_rec.as_deref(), pmf_ref.as_deref(), n_rot, out),
    }
}

fn require(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingFile(path.to_path_buf()))
    }
}

fn load_image(path: &Path) -> Result<Image> {
    Ok(Image::load(require(path)?)?)
}

fn load_dataset(path: &Path) -> Result<ProjectionDataset> {
    Ok(ProjectionDataset::load(require(path)?)?)
}

fn load_pmf(path: &Path, span: f64) -> Result<AnglePmf> {
    Ok(AnglePmf::read_csv(require(path)?, span)?)
}

/// Basis for an `m`-pixel grid, reading roots from the cache file named by
/// `UVTOMO_CACHE` when it is set.
pub fn basis_for(cfg: &RunConfig, m: usize) -> Result<Arc<BasisSpec>> {
    let radius = cfg.basis.radius_frac * m as f64;
    let s = cfg.basis.bandlimit;
    let spec = match std::env::var_os(CACHE_ENV) {
        Some(path) => {
            let (k_max, q_max) = BasisSpec::table_extent(s, radius);
            let table = BesselRootTable::load_or_build(Path::new(&path), k_max, q_max)?;
            BasisSpec::from_table(s, radius, m, &table)?
        }
        None => BasisSpec::new(s, radius, m)?,
    };
    Ok(Arc::new(spec))
}

/// Distribution of the angles a dataset actually contains, on `n` bins over
/// `[0, 2 pi)`: each bin is split linearly between its neighbours and, with
/// flip augmentation, half the mass moves to the opposite angle.
pub fn effective_pmf(pmf: &AnglePmf, flip: bool, n: usize) -> Result<AnglePmf> {
    let mut out = vec![0.0; n];
    let mut deposit = |theta: f64, w: f64| {
        let pos = theta.rem_euclid(2.0 * PI) / (2.0 * PI) * n as f64;
        let lo = pos.floor();
        let frac = pos - lo;
        let lo = lo as usize % n;
        out[lo] += w * (1.0 - frac);
        out[(lo + 1) % n] += w * frac;
    };
    for (i, &p) in pmf.probs().iter().enumerate() {
        let theta = pmf.bin_center(i);
        if flip {
            deposit(theta, 0.5 * p);
            deposit(theta + PI, 0.5 * p);
        } else {
            deposit(theta, p);
        }
    }
    Ok(AnglePmf::from_weights(&out, 2.0 * PI)?)
}

fn save_image(img: &Image, out: &Path, stem: &str) -> Result<()> {
    img.save(&out.join(format!("{stem}.img")))?;
    img.save_pgm(&out.join(format!("{stem}.pgm")))?;
    Ok(())
}

fn ground_truth(args: &TruthArgs, n_theta: usize) -> Result<Option<GroundTruth>> {
    let (Some(img), Some(pmf)) = (&args.truth, &args.truth_pmf) else {
        return Ok(None);
    };
    let pmf = load_pmf(pmf, 2.0 * PI)?;
    if pmf.len() != n_theta {
        return Err(CliError::Config(format!(
            "ground-truth PMF has {} bins but the solver grid has {n_theta}",
            pmf.len()
        )));
    }
    Ok(Some(GroundTruth {
        image: load_image(img)?,
        pmf,
    }))
}

pub fn cmd_phantom(cfg: &RunConfig, out: &Path) -> Result<()> {
    let img = phantom(cfg.data.phantom, cfg.data.m, cfg.run.seed);
    save_image(&img, out, "phantom")?;
    println!("phantom {} m={} mass={:.6}", cfg.data.phantom, cfg.data.m, img.sum());
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig, phantom_path: Option<&Path>, pmf_path: Option<&Path>, span: f64, out: &Path) -> Result<()> {
    let img = match phantom_path {
        Some(p) => load_image(p)?,
        None => phantom(cfg.data.phantom, cfg.data.m, cfg.run.seed),
    };
    let pmf = match pmf_path {
        Some(p) => load_pmf(p, span)?,
        None => AnglePmf::from_weights(&[1.0; DEFAULT_PMF_BINS], span)?,
    };
    let spec = basis_for(cfg, img.size())?;
    let c = fit_image(spec, &img, 300);
    let dataset = synthesize_dataset(
        &c,
        &pmf,
        &SynthOptions {
            lines: cfg.data.lines,
            snr: Some(cfg.data.snr),
            seed: cfg.run.seed,
            flip: cfg.data.flip,
        },
    )?;
    dataset.save(&out.join("dataset.uvtd"))?;
    save_image(&render_spatial(&c, img.size()), out, "truth")?;
    effective_pmf(&pmf, cfg.data.flip, cfg.gan.n_theta)?.write_csv(&out.join("truth_pmf.csv"))?;
    println!("lines={} m={} sigma={:.6e}", dataset.len(), dataset.m, dataset.sigma);
    Ok(())
}

fn write_history(path: &Path, rows: &[HistoryRow], resume_from: Option<usize>) -> Result<()> {
    let fresh = history_csv(rows);
    let text = match resume_from {
        Some(start) if path.exists() => {
            // keep earlier rows up to the checkpoint, then append
            let old = std::fs::read_to_string(path)?;
            let mut lines = old.lines();
            let mut s = format!("{}\n", lines.next().unwrap_or_default());
            for l in lines {
                let it: usize = l.split(',').next().and_then(|v| v.parse().ok()).unwrap_or(usize::MAX);
                if it <= start {
                    s.push_str(l);
                    s.push('\n');
                }
            }
            s.push_str(fresh.split_once('\n').map_or("", |(_, body)| body));
            s
        }
        _ => fresh,
    };
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

pub fn cmd_train_gan(cfg: &RunConfig, dataset_path: &Path, truth: &TruthArgs, resume: Option<&Path>, until: Option<usize>, out: &Path) -> Result<()> {
    let dataset = load_dataset(dataset_path)?;
    let tc = cfg.train_config(dataset.sigma > 0.0);
    let spec = basis_for(cfg, dataset.m)?;
    let gt = ground_truth(truth, tc.n_theta)?;
    let mut state = match resume {
        Some(p) => TrainState::load(require(p)?)?,
        None => TrainState::init(&spec, &tc)?,
    };
    if state.c.len() != spec.len() || state.p_logits.len() != tc.n_theta {
        return Err(CliError::Config("checkpoint does not match the configured basis or angle grid".into()));
    }
    let start = state.iteration;
    let ckpt = out.join("checkpoint.uvtc");
    let mut trainer = Trainer::new(spec.clone(), &dataset, tc, gt)?;
    let mut save_err = None;
    let end = until.unwrap_or(cfg.gan.iters);
    let history = trainer.train_to(&mut state, end, |s, row| {
        if let Err(e) = s.save(&ckpt) {
            save_err.get_or_insert(e);
        }
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        eprintln!(
            "iter {} critic {:.4e} gen {:.4e} psnr {} d_tv {}",
            row.iteration,
            row.critic_loss,
            row.gen_loss,
            fmt(row.psnr),
            fmt(row.d_tv)
        );
    });
    if let Some(e) = save_err {
        return Err(e.into());
    }
    state.save(&ckpt)?;
    write_history(&out.join("history.csv"), &history, resume.map(|_| start))?;
    save_image(&render_spatial(&state.coefficients(spec.clone()), dataset.m), out, "rec")?;
    state.pmf().write_csv(&out.join("pmf.csv"))?;
    Ok(())
}

pub fn cmd_run_em(cfg: &RunConfig, dataset_path: &Path, truth: &TruthArgs, out: &Path) -> Result<()> {
    let dataset = load_dataset(dataset_path)?;
    let spec = basis_for(cfg, dataset.m)?;
    let opts = cfg.em_options(dataset.sigma > 0.0);
    let problem = EmProblem::new(&dataset, spec.clone(), cfg.em.n_theta)?;
    let (best, scores) = em_best_of(&problem, cfg.em.init, cfg.em.n_inits, cfg.run.seed, &opts)?;
    let rec = render_spatial(&best.coefficients(), dataset.m);
    save_image(&rec, out, "rec")?;
    best.p.write_csv(&out.join("pmf.csv"))?;
    write_atomic(&out.join("history.csv"), best.history_csv().as_bytes())?;
    let scores: Vec<String> = scores.iter().map(|s| format!("{s:.6e}")).collect();
    println!("log-likelihoods {}", scores.join(" "));
    if let Some(gt) = ground_truth(truth, cfg.em.n_theta)? {
        let al = align_o2(&rec, &gt.image, Some(&best.p), cfg.em.n_theta)?;
        let aligned = al.aligned_pmf.expect("pmf was supplied");
        println!(
            "psnr {:.3} d_tv {:.4}",
            psnr(&al.aligned_image, &gt.image)?,
            d_tv(aligned.probs(), gt.pmf.probs())?
        );
    }
    Ok(())
}

pub fn cmd_baseline_gl(cfg: &RunConfig, dataset_path: &Path, truth: Option<&Path>, out: &Path) -> Result<()> {
    let dataset = load_dataset(dataset_path)?;
    let angles = dataset
        .true_angles
        .as_ref()
        .ok_or_else(|| CliError::Format("dataset carries no angles to difference".into()))?;
    let w = weight_matrix(&angle_differences(angles), cfg.gl.epsilon, cfg.gl.cutoff_deg)?;
    let est = equispaced_assignment(&laplacian_embed(&w)?);
    let spec = basis_for(cfg, dataset.m)?;
    let c: HbCoefficients = reconstruct_known_angles(spec, &dataset, &est)?;
    let rec = render_spatial(&c, dataset.m);
    save_image(&rec, out, "rec")?;
    let mut csv = String::from("line,true_theta,assigned_theta\n");
    for (i, (t, e)) in angles.iter().zip(&est).enumerate() {
        csv.push_str(&format!("{i},{t:.17e},{e:.17e}\n"));
    }
    write_atomic(&out.join("angles.csv"), csv.as_bytes())?;
    if let Some(t) = truth {
        let reference = load_image(t)?;
        let al = align_o2(&rec, &reference, None, 360)?;
        println!("psnr {:.3}", psnr(&al.aligned_image, &reference)?);
    }
    Ok(())
}

pub fn cmd_hl_check(cfg: &RunConfig, image_path: &Path, shuffle: bool, out: &Path) -> Result<()> {
    let img = load_image(image_path)?;
    let n = cfg.hl.n_angles.max(1);
    let mut angles: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
    let lines: Vec<Vec<f64>> = angles.iter().map(|&t| project_pixels(&img, t)).collect();
    if shuffle {
        angles.shuffle(&mut stream_rng(cfg.run.seed, 0));
    }
    let report = hl_check(&img, &lines, &angles, cfg.hl.d_max, cfg.hl.tol)?;
    write_atomic(&out.join("hl.csv"), report.to_csv().as_bytes())?;
    println!("{}", if report.pass() { "pass" } else { "fail" });
    Ok(())
}

pub fn cmd_eval(img: &Path, reference: &Path, pmf_rec: Option<&Path>, pmf_ref: Option<&Path>, n_rot: Option<usize>, out: &Path) -> Result<()> {
    let rec = load_image(img)?;
    let reference = load_image(reference)?;
    let pmfs = match (pmf_rec, pmf_ref) {
        (Some(a), Some(b)) => Some((load_pmf(a, 2.0 * PI)?, load_pmf(b, 2.0 * PI)?)),
        (None, None) => None,
        _ => return Err(CliError::Usage("--pmf-rec and --pmf-ref go together".into())),
    };
    let n_rot = n_rot.unwrap_or_else(|| pmfs.as_ref().map_or(360, |(p, _)| p.len()));
    let al = align_o2(&rec, &reference, pmfs.as_ref().map(|(p, _)| p), n_rot)?;
    let dtv = match (&al.aligned_pmf, &pmfs) {
        (Some(a), Some((_, q))) => format!("{:.9e}", d_tv(a.probs(), q.probs())?),
        _ => String::new(),
    };
    let row = format!(
        "psnr,cc,d_tv,rotation_deg,reflected\n{:.9e},{:.9e},{dtv},{:.6},{}\n",
        psnr(&al.aligned_image, &reference)?,
        cc(&al.aligned_image, &reference)?,
        360.0 * al.rotation_index as f64 / n_rot as f64,
        al.reflected
    );
    write_atomic(&out.join("eval.csv"), row.as_bytes())?;
    print!("{row}");
    Ok(())
}
