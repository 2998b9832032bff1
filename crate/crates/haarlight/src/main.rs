//! `haarlight` command line: transform images to Haar pyramids, rotate
//! pyramids in the transform domain, render scenes, compare images, and
//! benchmark the rotation path.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use haarlight::cli;
use haarlight::render::RotationMode;

#[derive(Parser)]
#[command(
    name = "haarlight",
    about = "Haar-domain rotation of spherical maps and triple-product relighting",
    version
)]
struct Cli {
    /// Write the run report as CSV to this path (in addition to stdout).
    #[arg(long, global = true)]
    report_csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Haar,
    Spatial,
}

impl From<ModeArg> for RotationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Haar => RotationMode::Haar,
            ModeArg::Spatial => RotationMode::SpatialOracle,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Forward-transform a PFM/PPM image into a HAAR1 pyramid file.
    Transform {
        /// Input image (power-of-two square PFM or PPM).
        input: PathBuf,
        /// Output pyramid (.haar).
        output: PathBuf,
        /// Keep only this many detail levels (coarsest first).
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Reconstruct the image from a HAAR1 pyramid.
    Inverse {
        input: PathBuf,
        /// Output image; .pfm (linear) or .ppm (gamma preview).
        output: PathBuf,
    },
    /// Rotate a pyramid in the Haar domain (or spatially, as the oracle).
    #[command(arg_required_else_help = true)]
    Rotate {
        input: PathBuf,
        output: PathBuf,
        /// Euler angle about X, degrees.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        alpha: f64,
        /// Euler angle about Y, degrees.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        beta: f64,
        /// Euler angle about Z, degrees.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        gamma: f64,
        /// Level whose derivative fields seed the coarse recursion.
        #[arg(long, default_value_t = 5)]
        start_level: usize,
        #[arg(long, value_enum, default_value = "haar")]
        mode: ModeArg,
        /// Also run the other path and report the PSNR between the two.
        #[arg(long)]
        verify: bool,
    },
    /// Render a scene under an environment map.
    Render {
        /// Scene config (key = value text file).
        scene: PathBuf,
        #[command(flatten)]
        io: RenderIo,
        /// Coefficient budget override.
        #[arg(long)]
        k: Option<usize>,
        /// Lat-long resolution exponent override.
        #[arg(long)]
        n: Option<u32>,
        /// Outgoing-direction bucket count override.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        start_level: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Render the other rotation mode too and report MSE/PSNR.
        #[arg(long)]
        verify: bool,
    },
    /// MSE/PSNR between two images (PFM or PPM).
    Compare {
        reference: PathBuf,
        test: PathBuf,
        /// Exclude reference pixels exactly equal to this color ("r,g,b").
        #[arg(long, value_parser = cli::parse_color)]
        background: Option<[f64; 3]>,
    },
    /// Wall-clock scaling of rotation and synthesis; writes CSV with --csv.
    Bench {
        /// Map size exponents to measure (side = 2^n).
        #[arg(long, value_delimiter = ',', default_values_t = vec![6u32, 7, 8])]
        sizes: Vec<u32>,
        /// Start levels for the truncated-pyramid drop measurement.
        #[arg(long, value_delimiter = ',', default_values_t = vec![7usize, 6, 5])]
        start_levels: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Seed for the randomized rotation fixture.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// CSV output path for the sample table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RenderIo {
    /// Environment map (power-of-two square PFM/PPM).
    #[arg(long)]
    env: PathBuf,
    /// Output image path (.pfm; a .ppm preview is written alongside).
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    cli::init_thread_pool();
    let args = Cli::parse();
    let result = match &args.command {
        Command::Transform {
            input,
            output,
            levels,
        } => cli::cmd_transform(input, output, *levels),
        Command::Inverse { input, output } => cli::cmd_inverse(input, output),
        Command::Rotate {
            input,
            output,
            alpha,
            beta,
            gamma,
            start_level,
            mode,
            verify,
        } => cli::cmd_rotate(
            input,
            output,
            *alpha,
            *beta,
            *gamma,
            *start_level,
            (*mode).into(),
            *verify,
        ),
        Command::Render {
            scene,
            io,
            k,
            n,
            d,
            start_level,
            mode,
            verify,
        } => cli::cmd_render(
            scene,
            &io.env,
            &io.out,
            &cli::RenderOverrides {
                k: *k,
                size_exp: *n,
                buckets: *d,
                start_level: *start_level,
                mode: mode.map(Into::into),
                verify: *verify,
            },
        ),
        Command::Compare {
            reference,
            test,
            background,
        } => cli::cmd_compare(reference, test, *background),
        Command::Bench {
            sizes,
            start_levels,
            trials,
            seed,
            csv,
        } => cli::cmd_bench(sizes, start_levels, *trials, *seed, csv.as_deref()),
    };
    match result {
        Ok(report) => {
            print!("{}", report.text());
            if let Some(path) = &args.report_csv {
                if let Err(e) = report.write_csv(path) {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
