use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qbilstm::perfmodel::FoldingConfig;
use qbilstm::{Dims, RawModel};
use qbilstm_cli::{
    cmd_eval, cmd_infer, cmd_simulate, cmd_sweep, parse_dims, parse_folding, parse_precision,
    CliError, SweepSpec,
};

/// Quantized BiLSTM OCR inference and accelerator design-space exploration.
#[derive(Parser)]
#[command(name = "qbilstm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a single PGM text line.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// WQ/AQ/IQ or WQ/AQ/IQ/RQ
        #[arg(long)]
        precision: String,
    },
    /// Evaluate CER over a directory of PGM lines.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        images: PathBuf,
        /// Tab-separated `<image>\t<text>` lines.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        precision: String,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate every precision x folding combination and emit CSV.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Repeatable.
        #[arg(long, required = true)]
        precision: Vec<String>,
        /// PE:SIMD_INPUT:SIMD_RECURRENT, repeatable. Defaults to the single
        /// point given by --pe/--simd-input/--simd-recurrent.
        #[arg(long)]
        fold: Vec<String>,
        #[command(flatten)]
        hw: HardwareArgs,
        /// Sequence length for the performance columns (default: dataset total).
        #[arg(long)]
        columns: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the analytical performance model for one configuration.
    Simulate {
        /// I,H,K (default 32,128,82, or taken from --model).
        #[arg(long, conflicts_with = "model")]
        dims: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        hw: HardwareArgs,
        /// Sequence length C.
        #[arg(long)]
        columns: usize,
        /// Used for the memory estimate.
        #[arg(long, default_value = "1/1/1")]
        precision: String,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct HardwareArgs {
    #[arg(long, default_value_t = 1)]
    pe: usize,
    /// Defaults to I (full SIMD width).
    #[arg(long)]
    simd_input: Option<usize>,
    /// Defaults to H (full SIMD width).
    #[arg(long)]
    simd_recurrent: Option<usize>,
    #[arg(long, default_value_t = 200.0)]
    freq_mhz: f64,
    #[arg(long, default_value_t = 0)]
    pipeline_depth: u64,
}

impl HardwareArgs {
    fn folding(&self, dims: &Dims) -> FoldingConfig {
        FoldingConfig::new(
            self.pe,
            self.simd_input.unwrap_or(dims.input),
            self.simd_recurrent.unwrap_or(dims.hidden),
        )
        .with_frequency(self.freq_mhz)
        .with_pipeline_depth(self.pipeline_depth)
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Infer {
            model,
            image,
            precision,
        } => print!("{}", cmd_infer(&model, &image, &precision)?),
        Command::Eval {
            model,
            images,
            truth,
            precision,
            csv,
        } => print!(
            "{}",
            cmd_eval(&model, &images, &truth, &precision, csv.as_deref())?
        ),
        Command::Sweep {
            model,
            images,
            truth,
            precision,
            fold,
            hw,
            columns,
            csv,
        } => {
            let precisions = precision
                .iter()
                .map(|p| parse_precision(p))
                .collect::<Result<Vec<_>, _>>()?;
            let dims = RawModel::load(&model)?.dims;
            let foldings = if fold.is_empty() {
                vec![hw.folding(&dims)]
            } else {
                fold.iter()
                    .map(|f| {
                        let (pe, si, sr) = parse_folding(f)?;
                        Ok(FoldingConfig::new(pe, si, sr)
                            .with_frequency(hw.freq_mhz)
                            .with_pipeline_depth(hw.pipeline_depth))
                    })
                    .collect::<Result<Vec<_>, CliError>>()?
            };
            let spec = SweepSpec {
                precisions,
                foldings,
                model,
                images,
                truth,
                columns,
            };
            let out = cmd_sweep(&spec, csv.as_deref())?;
            for e in &out.errors {
                eprintln!("qbilstm: sweep point failed: {e}");
            }
            if csv.is_none() {
                print!("{}", out.csv);
            }
        }
        Command::Simulate {
            dims,
            model,
            hw,
            columns,
            precision,
            csv,
        } => {
            let dims = match (dims, model) {
                (Some(d), _) => parse_dims(&d)?,
                (None, Some(m)) => RawModel::load(&m)?.dims,
                (None, None) => Dims::new(32, 128, 82)?,
            };
            let folding = hw.folding(&dims);
            print!(
                "{}",
                cmd_simulate(&dims, &folding, columns, &precision, csv.as_deref())?
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qbilstm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
