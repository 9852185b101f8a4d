use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use omniview::dataset::DepthSource;
use omniview::refine::RefinementConfig;
use omniview::synthesis::{SynthesisConfig, WeightingMode};
use omniview_cli::commands::{self, MissingInput, SynthesizeOutputs};
use omniview_cli::server::Server;

#[derive(Parser)]
#[command(name = "omniview", version, about = "Depth estimation, refinement and novel-view synthesis for posed 360 degree panoramas")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Refined,
    Dense,
    Truth,
}

impl From<Source> for DepthSource {
    fn from(s: Source) -> Self {
        match s {
            Source::Refined => DepthSource::Refined,
            Source::Dense => DepthSource::Dense,
            Source::Truth => DepthSource::Truth,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Weighting {
    Uniform,
    Depth,
    DepthCamera,
    Full,
}

impl From<Weighting> for WeightingMode {
    fn from(w: Weighting) -> Self {
        match w {
            Weighting::Uniform => WeightingMode::Uniform,
            Weighting::Depth => WeightingMode::DepthOnly,
            Weighting::DepthCamera => WeightingMode::DepthCamera,
            Weighting::Full => WeightingMode::Full,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic 3x3 capture grid with ground truth and sparse depth.
    MakeFixture {
        #[arg(long, default_value = "room")]
        scene: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        width: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Keep the center frame as a synthesis input instead of holding it out.
        #[arg(long)]
        no_hold_out: bool,
    },
    /// Sweep-stereo dense depth for every input frame.
    EstimateDepth {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 64)]
        hypotheses: usize,
        #[arg(long, requires = "max_depth")]
        min_depth: Option<f64>,
        #[arg(long, requires = "min_depth")]
        max_depth: Option<f64>,
        #[arg(long, default_value_t = 4)]
        neighbors: usize,
    },
    /// Multi-view depth refinement.
    Refine {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 3)]
        iterations: usize,
        #[arg(long, default_value_t = 0.005)]
        r: f64,
        #[arg(long, default_value_t = 4)]
        k_rm: usize,
    },
    /// Synthesize a panorama at a new position.
    Synthesize {
        #[arg(long)]
        manifest: PathBuf,
        /// x,y,z[,yaw,pitch,roll] in meters and radians.
        #[arg(long, allow_hyphen_values = true)]
        pose: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        depth_out: Option<PathBuf>,
        /// Writes a PNG that is white where the output is not a hole.
        #[arg(long)]
        mask_out: Option<PathBuf>,
        /// Equirectangular output width (defaults to the input width).
        #[arg(long)]
        width: Option<usize>,
        #[arg(long, value_enum, default_value = "refined")]
        depth_source: Source,
        #[arg(long, value_enum, default_value = "full")]
        weighting: Weighting,
    },
    /// PSNR, SSIM and MS-SSIM between two panoramas; prints one JSON line.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// PNG selecting the evaluated pixels (white = evaluated).
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Only pixels within this latitude (degrees) are evaluated.
        #[arg(long, default_value_t = 60.0)]
        max_latitude: f64,
    },
    /// Run the synthesis service.
    Serve {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8787")]
        bind: String,
        #[arg(long, value_enum, default_value = "refined")]
        depth_source: Source,
        #[arg(long, default_value_t = 2048)]
        max_width: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::MakeFixture { scene, out, width, seed, no_hold_out } => {
            let m = commands::make_fixture(&scene, &out, width, seed, !no_hold_out)?;
            println!("wrote {} frames to {}", m.frames.len(), out.join("manifest.json").display());
        }
        Command::EstimateDepth { manifest, hypotheses, min_depth, max_depth, neighbors } => {
            let range = min_depth.zip(max_depth);
            let m = commands::estimate_depth(&manifest, hypotheses, range, neighbors)?;
            let n = m.frames.iter().filter(|f| f.dense_depth_path.is_some()).count();
            println!("estimated dense depth for {n} frames");
        }
        Command::Refine { manifest, iterations, r, k_rm } => {
            let cfg = RefinementConfig {
                iterations,
                r,
                k_rm,
                k_fp: k_rm + 2,
                ..Default::default()
            };
            let m = commands::refine(&manifest, &cfg)?;
            let n = m.frames.iter().filter(|f| f.refined_depth_path.is_some()).count();
            println!("refined {n} frames");
        }
        Command::Synthesize { manifest, pose, out, depth_out, mask_out, width, depth_source, weighting } => {
            let mut req = commands::parse_pose(&pose)?;
            req.quality = width;
            let cfg = SynthesisConfig {
                weighting: weighting.into(),
                ..Default::default()
            };
            let renderer = commands::load_renderer(&manifest, depth_source.into(), cfg, usize::MAX)?;
            let outputs = SynthesizeOutputs {
                image: &out,
                depth: depth_out.as_deref(),
                mask: mask_out.as_deref(),
            };
            let r = commands::synthesize(&renderer, &req, &outputs)?;
            println!(
                "wrote {} ({}x{}, {:.1} ms, hole fraction {:.4})",
                out.display(),
                r.width,
                r.height,
                r.latency_ms,
                r.hole_fraction
            );
        }
        Command::Evaluate { pred, truth, mask, max_latitude } => {
            let report = commands::evaluate(&pred, &truth, mask.as_deref(), max_latitude)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Serve { manifest, bind, depth_source, max_width } => {
            let renderer = commands::load_renderer(&manifest, depth_source.into(), SynthesisConfig::default(), max_width)?;
            let server = Server::bind(&bind, renderer)?;
            log::info!("serving on {}", server.local_addr()?);
            eprintln!("listening on {}", server.local_addr()?);
            server.run()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<MissingInput>()) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
