use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fmsound::emulator::FadingMode;
use fmsound::estimator::{AveragingMode, CorrelationMethod};
use fmsound::io::{
    compare_csv, import_csv_iq, model_csv, read_capture, read_pdp, write_capture, write_pdp, Provenance,
};
use fmsound::metrics::{compare, MetricsReport, DEFAULT_CLUSTER_GAP_US, DEFAULT_COMPARE_THRESHOLD_DB};
use fmsound::models::{builtin, eval_grid, load_model, PdpModel};
use fmsound::pipeline::{self, ChannelConfig, EstimateConfig, PipelineConfig};
use fmsound::waveform::{frame_transmit_stream, SequenceSpec};
use fmsound::{Error, Result};
use serde_json::json;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(
    name = "fmsound",
    version,
    about = "FM-band channel sounding: waveforms, emulation, PDP estimation and metrics"
)]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = "FMSOUND_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the sounding sequence and write the framed transmit capture.
    Generate(GenerateArgs),
    /// Evaluate or export a PDP model.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Pass a transmit capture through a model channel.
    Emulate(EmulateArgs),
    /// Estimate a PDP from a received capture.
    Estimate(EstimateArgs),
    /// Delay-dispersion metrics of a PDP.
    Metrics(MetricsArgs),
    /// Compare a PDP with a model.
    Compare(CompareArgs),
    /// Generate, emulate, estimate and compare in one go.
    Pipeline(PipelineArgs),
    /// Convert a CSV of i,q columns into a capture.
    ImportCsv(ImportArgs),
}

#[derive(Args)]
struct ModelArg {
    /// Built-in model name (bad-urban, hilly) or path to a model JSON file.
    #[arg(long, default_value = "bad-urban")]
    model: String,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 10)]
    m: u32,
    #[arg(long, value_delimiter = ',', default_value = "10,3")]
    taps: Vec<u32>,
    /// Initial register state, decimal or 0x-prefixed hex.
    #[arg(long, value_parser = parse_seed, default_value = "0x2DB")]
    seed: u64,
    #[arg(long, default_value_t = 77)]
    pad: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 1e6)]
    chip_rate: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Where to write the sequence description (defaults to seq.json next to the capture).
    #[arg(long)]
    seq_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Print the model power at one or more delays.
    Eval {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_delimiter = ',', required = true)]
        tau: Vec<f64>,
    },
    /// Write the model sampled on a uniform grid as CSV.
    Export {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 0.1)]
        spacing: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ChannelArgs {
    #[arg(long, default_value_t = pipeline::DEFAULT_TAP_SPACING_US)]
    spacing_us: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = pipeline::DEFAULT_MIN_DB)]
    min_db: f64,
    /// Use `inf` for a noiseless channel.
    #[arg(long, allow_negative_numbers = true, default_value_t = pipeline::DEFAULT_SNR_DB)]
    snr_db: f64,
    #[arg(long, value_parser = parse_fading, default_value = "static")]
    fading: FadingMode,
}

#[derive(Args)]
struct EmulateArgs {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Frame length for block fading; read from the capture when omitted.
    #[arg(long)]
    frame_len: Option<usize>,
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateConfigArgs {
    /// Sequence description written by `generate`; defaults to the standard sequence.
    #[arg(long)]
    seq: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    window_us: f64,
    #[arg(long, value_parser = parse_averaging, default_value = "magnitude")]
    averaging: AveragingMode,
    #[arg(long, value_parser = parse_method, default_value = "fft")]
    method: CorrelationMethod,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    config: EstimateConfigArgs,
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = pipeline::DEFAULT_THRESHOLD_DB)]
    threshold_db: f64,
    #[arg(long, default_value_t = pipeline::DEFAULT_X_DB)]
    x_db: f64,
    #[arg(long, default_value_t = DEFAULT_CLUSTER_GAP_US)]
    gap_us: f64,
    /// Also write the JSON report here.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    pdp: PathBuf,
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = DEFAULT_COMPARE_THRESHOLD_DB)]
    threshold_db: f64,
    /// Also write per-delay residuals as CSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = pipeline::DEFAULT_REPETITIONS)]
    reps: usize,
    #[command(flatten)]
    estimate: EstimateConfigArgs,
    #[arg(long, default_value_t = pipeline::DEFAULT_THRESHOLD_DB)]
    threshold_db: f64,
    #[arg(long, default_value_t = DEFAULT_COMPARE_THRESHOLD_DB)]
    compare_threshold_db: f64,
    #[arg(long, default_value_t = pipeline::DEFAULT_X_DB)]
    x_db: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ImportArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1e6)]
    sample_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    center_freq: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_seed(s: &str) -> std::result::Result<u64, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("invalid seed '{s}': {e}"))
}

fn parse_fading(s: &str) -> std::result::Result<FadingMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_averaging(s: &str) -> std::result::Result<AveragingMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<CorrelationMethod, String> {
    match s {
        "fft" => Ok(CorrelationMethod::Fft),
        "direct" => Ok(CorrelationMethod::Direct),
        other => Err(format!("unknown correlation method '{other}'")),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn resolve_model(arg: &ModelArg) -> Result<PdpModel> {
    let path = Path::new(&arg.model);
    if path.extension().is_some_and(|e| e == "json") || path.is_file() {
        return load_model(&read_text(path)?);
    }
    builtin(&arg.model)
}

fn load_sequence(path: Option<&Path>) -> Result<SequenceSpec> {
    match path {
        Some(p) => SequenceSpec::from_json(&read_text(p)?),
        None => Ok(SequenceSpec::default()),
    }
}

fn estimate_config(args: &EstimateConfigArgs, spec: &SequenceSpec) -> Result<EstimateConfig> {
    let chip_us = 1e6 / spec.chip_rate_hz;
    let window = args.window_us / chip_us;
    if !window.is_finite() || window < 1.0 {
        return Err(Error::InvalidParameter(format!("window of {} us is shorter than one chip", args.window_us)));
    }
    Ok(EstimateConfig { window_len: window.round() as usize, averaging: args.averaging, method: args.method })
}

fn channel_config(args: &ChannelArgs, seed: u64) -> ChannelConfig {
    ChannelConfig { spacing_us: args.spacing_us, min_db: args.min_db, snr_db: args.snr_db, fading: args.fading, seed }
}

struct Ctx {
    json: bool,
    out_dir: PathBuf,
}

impl Ctx {
    fn out(&self, given: &Option<PathBuf>, default: &str) -> Result<PathBuf> {
        match given {
            Some(p) => Ok(p.clone()),
            None => {
                fs::create_dir_all(&self.out_dir)?;
                Ok(self.out_dir.join(default))
            }
        }
    }

    fn emit(&self, value: serde_json::Value, text: impl FnOnce() -> String) {
        if self.json {
            println!("{}", serde_json::to_string_pretty(&value).expect("json value"));
        } else {
            println!("{}", text());
        }
    }
}

fn generate(ctx: &Ctx, a: &GenerateArgs) -> Result<()> {
    let spec =
        SequenceSpec { order: a.m, taps: a.taps.clone(), seed: a.seed, pad_len: a.pad, chip_rate_hz: a.chip_rate };
    let seq = spec.build()?;
    let tx = frame_transmit_stream(&seq, a.reps)?;
    let path = ctx.out(&a.output, "tx.iq")?;
    let capture = fmsound::io::IqCapture::from_samples(&tx, seq.chip_rate_hz, "tx", Provenance::Emulated)
        .with_meta("frame_len", seq.frame_len())
        .with_meta("repetitions", a.reps);
    write_capture(&capture, &path)?;
    let seq_path = match &a.seq_out {
        Some(p) => p.clone(),
        None => path.parent().unwrap_or(Path::new(".")).join("seq.json"),
    };
    fs::write(&seq_path, spec.to_json() + "\n")?;
    ctx.emit(
        json!({"capture": path, "sequence": seq_path, "n_samples": tx.len(), "length": seq.len(), "frame_len": seq.frame_len()}),
        || format!("wrote {} ({} samples, L = {}, frame {}) and {}", path.display(), tx.len(), seq.len(), seq.frame_len(), seq_path.display()),
    );
    Ok(())
}

fn model_cmd(ctx: &Ctx, cmd: &ModelCommand) -> Result<()> {
    match cmd {
        ModelCommand::Eval { model, tau } => {
            let model = resolve_model(model)?;
            let values = tau.iter().map(|&t| model.eval_alpha(t)).collect::<Result<Vec<f64>>>()?;
            let points: Vec<_> = tau.iter().zip(&values).map(|(t, v)| json!({"tau_us": t, "power_db": v})).collect();
            ctx.emit(json!({"model": model.name(), "points": points}), || {
                if values.len() == 1 {
                    values[0].to_string()
                } else {
                    tau.iter().zip(&values).map(|(t, v)| format!("{t}\t{v}")).collect::<Vec<_>>().join("\n")
                }
            });
        }
        ModelCommand::Export { model, spacing, output } => {
            let model = resolve_model(model)?;
            let points = eval_grid(&model, *spacing)?;
            let path = ctx.out(output, &format!("{}.csv", model.name()))?;
            fs::write(&path, model_csv(&points))?;
            ctx.emit(json!({"model": model.name(), "output": path, "n_points": points.len()}), || {
                format!("wrote {} ({} points)", path.display(), points.len())
            });
        }
    }
    Ok(())
}

fn emulate(ctx: &Ctx, a: &EmulateArgs) -> Result<()> {
    let model = resolve_model(&a.model)?;
    let tx = read_capture(&a.input)?;
    let frame_len = match a.frame_len {
        Some(n) => n,
        None => tx
            .metadata
            .get("frame_len")
            .and_then(serde_json::Value::as_u64)
            .map_or(SequenceSpec::default().build()?.frame_len(), |n| n as usize),
    };
    let channel = channel_config(&a.channel, a.seed);
    let (taps, rx) = pipeline::emulate(&tx.to_samples(), &model, tx.sample_rate_hz, frame_len, &channel)?;
    let mut capture = fmsound::io::IqCapture::from_samples(&rx, tx.sample_rate_hz, "rx", Provenance::Emulated)
        .with_meta("frame_len", frame_len)
        .with_meta("model", model.name())
        .with_meta("seed", a.seed)
        .with_meta("fading", channel.fading.to_string())
        .with_meta("snr_db", channel.snr_db.is_finite().then_some(channel.snr_db));
    capture.center_freq_hz = tx.center_freq_hz;
    let path = ctx.out(&a.output, "rx.iq")?;
    write_capture(&capture, &path)?;
    ctx.emit(json!({"output": path, "n_samples": rx.len(), "n_taps": taps.len()}), || {
        format!("wrote {} ({} samples through {} taps)", path.display(), rx.len(), taps.len())
    });
    Ok(())
}

fn estimate(ctx: &Ctx, a: &EstimateArgs) -> Result<()> {
    let spec = load_sequence(a.config.seq.as_deref())?;
    let seq = spec.build()?;
    let cfg = estimate_config(&a.config, &spec)?;
    let rx = read_capture(&a.input)?;
    let pdp = pipeline::estimate_pdp(&rx.to_samples(), &seq, &cfg)?;
    let path = ctx.out(&a.output, "pdp.csv")?;
    write_pdp(&pdp, &path)?;
    ctx.emit(
        json!({"output": path, "n_averaged": pdp.n_averaged, "offset": pdp.offset, "noise_floor_db": pdp.noise_floor_db}),
        || {
            format!(
                "wrote {} ({} frames averaged, offset {}, noise floor {:.2} dB)",
                path.display(),
                pdp.n_averaged,
                pdp.offset.unwrap_or(0),
                pdp.noise_floor_db.unwrap_or(f64::NAN)
            )
        },
    );
    Ok(())
}

fn metrics(ctx: &Ctx, a: &MetricsArgs) -> Result<()> {
    let pdp = read_pdp(&a.input)?;
    let report = MetricsReport::from_pdp(&pdp, a.threshold_db, a.x_db, a.gap_us)?;
    let value = serde_json::to_value(&report)?;
    if let Some(path) = &a.output {
        fs::write(path, serde_json::to_string_pretty(&value)? + "\n")?;
    }
    ctx.emit(value, || report.to_string());
    Ok(())
}

fn compare_cmd(ctx: &Ctx, a: &CompareArgs) -> Result<()> {
    let pdp = read_pdp(&a.pdp)?;
    let model = resolve_model(&a.model)?;
    let report = compare(&pdp, &model, a.threshold_db)?;
    if let Some(path) = &a.output {
        fs::write(path, compare_csv(&report))?;
    }
    ctx.emit(serde_json::to_value(&report)?, || report.to_string().trim_end().to_string());
    Ok(())
}

fn pipeline_cmd(ctx: &Ctx, a: &PipelineArgs) -> Result<()> {
    let model = resolve_model(&a.model)?;
    let sequence = load_sequence(a.estimate.seq.as_deref())?;
    let estimate = estimate_config(&a.estimate, &sequence)?;
    let cfg = PipelineConfig {
        model,
        sequence,
        repetitions: a.reps,
        channel: channel_config(&a.channel, a.seed),
        estimate,
        threshold_db: a.threshold_db,
        compare_threshold_db: a.compare_threshold_db,
        x_db: a.x_db,
    };
    let out = pipeline::run(&cfg)?;
    let dir = ctx.out(&a.output, "fmsound-out")?;
    out.write_to(&dir, &cfg)?;
    if ctx.json {
        print!("{}", out.report_json(&cfg));
    } else {
        println!("wrote {}", dir.display());
        println!("{}", out.metrics);
        print!("{}", out.comparison);
    }
    Ok(())
}

fn import(ctx: &Ctx, a: &ImportArgs) -> Result<()> {
    let mut capture = import_csv_iq(&a.input, a.sample_rate)?;
    capture.center_freq_hz = a.center_freq;
    let path = ctx.out(&a.output, "imported.iq")?;
    write_capture(&capture, &path)?;
    ctx.emit(json!({"output": path, "n_samples": capture.samples.len()}), || {
        format!("wrote {} ({} samples)", path.display(), capture.samples.len())
    });
    Ok(())
}

fn fail(code: u8, kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "message": message, "exit_code": code}));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if !e.use_stderr() {
                e.exit();
            }
            if matches!(e.kind(), ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::from(EXIT_USAGE);
            }
            return fail(EXIT_USAGE, "UsageError", e.to_string().trim_end());
        }
    };
    let ctx = Ctx { json: cli.json, out_dir: cli.out_dir };
    let result = match &cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::Model(c) => model_cmd(&ctx, c),
        Command::Emulate(a) => emulate(&ctx, a),
        Command::Estimate(a) => estimate(&ctx, a),
        Command::Metrics(a) => metrics(&ctx, a),
        Command::Compare(a) => compare_cmd(&ctx, a),
        Command::Pipeline(a) => pipeline_cmd(&ctx, a),
        Command::ImportCsv(a) => import(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.is_data_error() { EXIT_DATA } else { EXIT_NUMERIC };
            fail(code, e.kind(), &e.to_string())
        }
    }
}
