//! Command-line front end. Every command is a thin wrapper over the library.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use tattooed_core::attacks::{self, AttackSpec, PruneStrategy, DEFAULT_PRUNE_FRACTIONS};
use tattooed_core::model::{synth_model, TensorContainer};
use tattooed_core::watermark::{self, WatermarkContext, WatermarkPayload, DEFAULT_THRESHOLD};
use tattooed_core::{stats, unshuffle, Seed};

use crate::error::{Result, ToolError, EXIT_NEGATIVE};
use crate::{keyfile, model_io, record, table};

#[derive(Debug, Parser)]
#[command(name = "tattooed", version, about = "Spread-spectrum watermarking of neural-network weights")]
struct Cli {
    /// Print a single JSON object on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a 512-bit secret key.
    Keygen {
        /// Key file to create; must not exist.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a Gaussian-initialised dense network.
    Synth {
        /// Layer widths, input first, e.g. 784,256,10.
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<usize>,
        /// Initialisation seed.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed a payload.
    Mark(MarkArgs),
    /// Check a model for a recorded watermark. Exits 0 if present, 10 if not.
    Verify(VerifyArgs),
    /// Apply a removal attack.
    Attack(AttackArgs),
    /// Undo a neuron shuffle using the baseline, record and key.
    Unshuffle(UnshuffleArgs),
    /// Mark and verify over a grid of signal strengths.
    SweepGamma(SweepGammaArgs),
    /// Verify after pruning at several fractions.
    SweepPrune(SweepPruneArgs),
    /// Compare the weight distributions of two models.
    Distcheck {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Histogram bins.
        #[arg(long, default_value_t = 64)]
        bins: usize,
    },
}

#[derive(Debug, Args)]
#[group(id = "payload_source", required = true, multiple = false)]
struct PayloadArgs {
    /// Payload as UTF-8 text.
    #[arg(long, group = "payload_source")]
    payload: Option<String>,
    /// File whose raw bytes are the payload.
    #[arg(long, group = "payload_source")]
    payload_file: Option<PathBuf>,
}

impl PayloadArgs {
    fn load(&self) -> Result<WatermarkPayload> {
        let bytes = match (&self.payload, &self.payload_file) {
            (Some(text), _) => text.as_bytes().to_vec(),
            (None, Some(path)) => fs::read(path).map_err(|e| ToolError::io(path, e))?,
            (None, None) => unreachable!("clap requires one payload source"),
        };
        Ok(WatermarkPayload::new(bytes)?)
    }
}

#[derive(Debug, Args)]
struct MarkArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[command(flatten)]
    payload: PayloadArgs,
    /// Signal strength.
    #[arg(long, default_value_t = 0.09)]
    gamma: f64,
    /// Fraction of parameters to mark.
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    /// Marked model to write.
    #[arg(long)]
    out: PathBuf,
    /// Record to write.
    #[arg(long)]
    record: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    record: PathBuf,
    #[arg(long)]
    key: PathBuf,
    /// The unmarked model the record was made from.
    #[arg(long)]
    baseline: PathBuf,
    /// Minimum accuracy for a positive decision.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AttackKind {
    Prune,
    Noise,
    Shuffle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Strategy {
    Random,
    Magnitude,
}

impl From<Strategy> for PruneStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Random => PruneStrategy::Random,
            Strategy::Magnitude => PruneStrategy::Magnitude,
        }
    }
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    kind: AttackKind,
    /// Pruned fraction, or noise standard deviation. Not used by shuffle.
    #[arg(long)]
    intensity: Option<f64>,
    #[arg(long, value_enum, default_value_t = Strategy::Random)]
    strategy: Strategy,
    /// Attack seed (required).
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the permutation applied by shuffle, as JSON.
    #[arg(long)]
    map: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct UnshuffleArgs {
    /// The shuffled model.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long)]
    record: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepGammaArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[command(flatten)]
    payload: PayloadArgs,
    /// Comma-separated γ values; default 1e-4..9e-2 in 27 steps.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    /// CSV file to write; otherwise the table goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepPruneArgs {
    /// The marked model.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    record: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    baseline: PathBuf,
    /// Comma-separated fractions; default 0.25..0.9999 in 8 steps.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Strategy::Random)]
    strategy: Strategy,
    /// Attack seed (required).
    #[arg(long)]
    seed: u64,
    /// CSV file to write; otherwise the table goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Outcome {
    value: Value,
    text: String,
    code: i32,
}

impl Outcome {
    fn ok(value: Value, text: impl Into<String>) -> Self {
        Outcome { value, text: text.into(), code: 0 }
    }
}

fn log(msg: &str) {
    eprintln!("tattooed: {msg}");
}

fn load_model(path: &Path) -> Result<TensorContainer> {
    let c = model_io::load(path)?;
    log(&format!("loaded {} ({} parameters)", path.display(), c.data().len()));
    Ok(c)
}

/// Parses `args` (including the program name), runs the command, prints its
/// output and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(out) => {
            if cli.json {
                println!("{}", out.value);
            } else if !out.text.is_empty() {
                print!("{}", out.text);
            }
            out.code
        }
        Err(e) => {
            if cli.json {
                println!(
                    "{}",
                    json!({"error": {"class": e.class(), "message": e.to_string(), "exit_code": e.exit_code()}})
                );
            }
            eprintln!("tattooed: error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: &Command) -> Result<Outcome> {
    match command {
        Command::Keygen { out } => {
            let key = keyfile::generate()?;
            keyfile::save(&key, out)?;
            let id = hex::encode(key.key_id());
            Ok(Outcome::ok(
                json!({"out": out, "key_id": id}),
                format!("wrote {} (key id {id})\n", out.display()),
            ))
        }
        Command::Synth { layers, seed, out } => {
            if layers.len() < 2 || layers.contains(&0) {
                return Err(ToolError::Usage("--layers needs at least two positive widths".into()));
            }
            let c = synth_model(layers, &Seed::from_u64(*seed))?;
            model_io::save(&c, out)?;
            Ok(Outcome::ok(
                json!({"out": out, "parameters": c.data().len()}),
                format!("wrote {} ({} parameters)\n", out.display(), c.data().len()),
            ))
        }
        Command::Mark(a) => mark(a),
        Command::Verify(a) => verify(a),
        Command::Attack(a) => attack(a),
        Command::Unshuffle(a) => {
            let shuffled = load_model(&a.model)?;
            let baseline = load_model(&a.baseline)?;
            let rec = record::load(&a.record)?;
            let key = keyfile::load(&a.key)?;
            let (restored, map) = unshuffle::unshuffle_marked(&shuffled, &baseline, &rec, &key)?;
            model_io::save(&restored, &a.out)?;
            Ok(Outcome::ok(
                json!({"out": a.out, "permutation": map}),
                format!("restored neuron order of {} layers into {}\n", map.layers.len(), a.out.display()),
            ))
        }
        Command::SweepGamma(a) => {
            let weights = load_model(&a.model)?.flatten();
            let key = keyfile::load(&a.key)?;
            let payload = a.payload.load()?;
            let grid = a.grid.clone().unwrap_or_else(watermark::default_gamma_grid);
            let rows = watermark::gamma_sweep(&weights, &key, &payload, &grid, a.ratio)?;
            table_outcome(&rows, a.out.as_deref())
        }
        Command::SweepPrune(a) => {
            let marked = load_model(&a.model)?.flatten();
            let baseline = load_model(&a.baseline)?.flatten();
            let rec = record::load(&a.record)?;
            let key = keyfile::load(&a.key)?;
            let fractions = a.fractions.clone().unwrap_or_else(|| DEFAULT_PRUNE_FRACTIONS.to_vec());
            let rows = attacks::run_pruning_sweep(
                &marked,
                &rec,
                &key,
                &baseline,
                &fractions,
                a.strategy.into(),
                &Seed::from_u64(a.seed),
            )?;
            table_outcome(&rows, a.out.as_deref())
        }
        Command::Distcheck { a, b, bins } => {
            let wa = load_model(a)?.flatten();
            let wb = load_model(b)?.flatten();
            let r = stats::compare(wa.as_slice(), wb.as_slice(), *bins)?;
            Ok(Outcome::ok(
                serde_json::to_value(r).expect("report serialises"),
                format!(
                    "ks_statistic {:.6}\nks_p_value {:.6e}\nhistogram_distance {:.6}\nmean/std a {:.6} {:.6}\nmean/std b {:.6} {:.6}\n",
                    r.ks_statistic, r.ks_p_value, r.histogram_distance, r.mean_a, r.std_a, r.mean_b, r.std_b
                ),
            ))
        }
    }
}

fn table_outcome<R: serde::Serialize>(rows: &[R], out: Option<&Path>) -> Result<Outcome> {
    let value = json!({"rows": rows});
    match out {
        Some(path) => {
            let f = fs::File::create(path).map_err(|e| ToolError::io(path, e))?;
            table::write_csv(f, rows)?;
            Ok(Outcome::ok(value, format!("wrote {} rows to {}\n", rows.len(), path.display())))
        }
        None => {
            let mut buf = Vec::new();
            table::write_csv(&mut buf, rows)?;
            Ok(Outcome::ok(value, String::from_utf8(buf).expect("csv is utf-8")))
        }
    }
}

fn mark(a: &MarkArgs) -> Result<Outcome> {
    let model = load_model(&a.model)?;
    let key = keyfile::load(&a.key)?;
    let payload = a.payload.load()?;
    let ctx = WatermarkContext::new(&key, payload.bit_length())?;
    let (marked, mut rec) = ctx.mark(&model.flatten(), &payload, a.gamma, a.ratio)?;
    rec.baseline_ref.path = Some(a.model.display().to_string());
    rec.created_at = Some(chrono::Utc::now().to_rfc3339());
    model_io::save(&TensorContainer::unflatten(&marked, model.manifest())?, &a.out)?;
    record::save(&rec, &a.record)?;
    log(&format!(
        "embedded {} payload bits as {} spread bits",
        payload.bit_length(),
        rec.total_bits
    ));
    Ok(Outcome::ok(
        json!({
            "out": a.out,
            "record": a.record,
            "key_id": hex::encode(rec.key_id),
            "payload_bits": payload.bit_length(),
            "total_bits": rec.total_bits,
            "gamma": rec.gamma,
            "ratio": rec.ratio,
        }),
        format!("wrote {} and {}\n", a.out.display(), a.record.display()),
    ))
}

fn verify(a: &VerifyArgs) -> Result<Outcome> {
    let model = load_model(&a.model)?.flatten();
    let baseline = load_model(&a.baseline)?.flatten();
    let rec = record::load(&a.record)?;
    let key = keyfile::load(&a.key)?;
    if key.key_id() != rec.key_id {
        log("warning: key id differs from the one in the record");
    }
    let ctx = WatermarkContext::new(&key, rec.payload.bit_length())?;
    let report = ctx.verify_with_threshold(&model, &rec, &baseline, a.threshold)?;
    let text = format!(
        "watermark {}: accuracy {:.4}, snr {:.2} dB{}\n",
        if report.decision { "present" } else { "absent" },
        report.watermark_accuracy,
        report.estimate.snr_db,
        if report.channel_lost { " (channel lost)" } else { "" }
    );
    Ok(Outcome {
        value: serde_json::to_value(&report).expect("report serialises"),
        text,
        code: if report.decision { 0 } else { EXIT_NEGATIVE },
    })
}

fn attack(a: &AttackArgs) -> Result<Outcome> {
    let spec = match (a.kind, a.intensity) {
        (AttackKind::Prune, Some(fraction)) => AttackSpec::Prune { fraction, strategy: a.strategy.into() },
        (AttackKind::Noise, Some(sigma)) => AttackSpec::Noise { sigma },
        (AttackKind::Shuffle, None) => AttackSpec::Shuffle,
        (AttackKind::Shuffle, Some(_)) => {
            return Err(ToolError::Usage("--intensity does not apply to shuffle".into()))
        }
        (_, None) => return Err(ToolError::Usage("--intensity is required for prune and noise".into())),
    };
    if a.map.is_some() && !matches!(spec, AttackSpec::Shuffle) {
        return Err(ToolError::Usage("--map only applies to shuffle".into()));
    }
    let model = load_model(&a.model)?;
    let (attacked, map) = attacks::apply_attack(&model, &spec, &Seed::from_u64(a.seed))?;
    model_io::save(&attacked, &a.out)?;
    if let (Some(path), Some(map)) = (&a.map, &map) {
        let text = serde_json::to_string(map).expect("map serialises");
        fs::write(path, text).map_err(|e| ToolError::io(path, e))?;
    }
    Ok(Outcome::ok(
        json!({"out": a.out, "attack": spec}),
        format!("wrote {}\n", a.out.display()),
    ))
}
