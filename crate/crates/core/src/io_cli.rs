//! Data loading and the `cauchy-rician` command line.
//!
//! Exit codes:
//!
//! | code | meaning                                   |
//! |------|-------------------------------------------|
//! | 0    | success (including `--help`, `--version`) |
//! | 1    | usage or configuration error              |
//! | 2    | data error (I/O, parse, invalid values)   |
//! | 3    | numerical non-convergence or overflow     |
//!
//! Output goes to `--output PATH`, to stdout for `--output -`, or, with no
//! `--output`, to `$CAUCHY_RICIAN_OUTPUT_DIR/<subcommand>.<ext>` when that
//! variable is set and stdout otherwise. File outputs are written through a
//! temporary file and renamed on success, next to a `<file>.meta.json`
//! sidecar holding the full run configuration.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::baselines::{baseline_pdf, fit_baseline, BaselineKind, FitOptions};
use crate::cauchy_rician::{pdf, CrParams, MomentConstant};
use crate::error::{Error, Result};
use crate::estimation::{choose_a, estimate, AMode, ParamEstimate};
use crate::goodness_of_fit::{
    benchmark_fit, compare_models, histogram, run_grid_experiment, ArithmeticGrid,
    GridExperimentConfig, HistogramSpec, UpperBound,
};
use crate::sampling::{sample_amplitude, GENERATOR_ID};

pub const OUTPUT_DIR_ENV: &str = "CAUCHY_RICIAN_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// One amplitude per line; a non-numeric first line is a header.
    #[value(name = "csv_amplitudes")]
    CsvAmplitudes,
    /// Little-endian f64 values, no header.
    #[value(name = "raw_f64le")]
    RawF64le,
    /// Little-endian u16 raster, row-major; needs `--raster-shape`.
    #[value(name = "raw_u16le_raster")]
    RawU16leRaster,
    /// Netpbm graymap, plain (P2) or raw (P5, 8 or 16 bit big-endian).
    #[value(name = "pgm_raster")]
    PgmRaster,
}

/// Sub-window of a raster, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Patch {
    pub row_offset: usize,
    pub col_offset: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDataset {
    pub path: PathBuf,
    pub format: InputFormat,
    /// `(rows, cols)`, required by `raw_u16le_raster`.
    pub raster_shape: Option<(usize, usize)>,
    pub patch: Option<Patch>,
}

fn malformed(path: &Path, location: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        location: location.into(),
        reason: reason.into(),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads the dataset and returns its (patch-restricted) amplitudes, row-major
/// for rasters.
pub fn load_dataset(d: &InputDataset) -> Result<Vec<f64>> {
    let raster = matches!(
        d.format,
        InputFormat::RawU16leRaster | InputFormat::PgmRaster
    );
    if d.patch.is_some() && !raster {
        return Err(Error::Config(
            "--patch applies only to raster formats".into(),
        ));
    }
    let bytes = read_file(&d.path)?;
    let values = match d.format {
        InputFormat::CsvAmplitudes => parse_csv(&d.path, &bytes)?,
        InputFormat::RawF64le => parse_raw_f64(&d.path, &bytes)?,
        InputFormat::RawU16leRaster => {
            let (rows, cols) = d.raster_shape.ok_or_else(|| {
                Error::Config("raw_u16le_raster needs --raster-shape ROWSxCOLS".into())
            })?;
            let pixels = parse_raw_u16(&d.path, &bytes, rows, cols)?;
            crop(&pixels, rows, cols, d.patch)?
        }
        InputFormat::PgmRaster => {
            let (rows, cols, pixels) = parse_pgm(&d.path, &bytes)?;
            crop(&pixels, rows, cols, d.patch)?
        }
    };
    if values.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(values)
}

fn parse_csv(path: &Path, bytes: &[u8]) -> Result<Vec<f64>> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        malformed(
            path,
            format!("byte offset {}", e.valid_up_to()),
            "invalid UTF-8",
        )
    })?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let location = format!("line {}", i + 1);
        match line.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => out.push(v),
            Ok(v) => {
                return Err(malformed(
                    path,
                    location,
                    format!("amplitude {v} is negative or non-finite"),
                ))
            }
            Err(_) if i == 0 => continue, // header
            Err(_) => return Err(malformed(path, location, format!("not a number: {line:?}"))),
        }
    }
    Ok(out)
}

fn parse_raw_f64(path: &Path, bytes: &[u8]) -> Result<Vec<f64>> {
    let whole = bytes.len() / 8 * 8;
    if whole != bytes.len() {
        return Err(malformed(
            path,
            format!("byte offset {whole}"),
            format!(
                "truncated record: {} trailing bytes, expected 8",
                bytes.len() - whole
            ),
        ));
    }
    bytes
        .chunks_exact(8)
        .enumerate()
        .map(|(i, c)| {
            let v = f64::from_le_bytes(c.try_into().expect("chunk of 8"));
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(malformed(
                    path,
                    format!("byte offset {}", 8 * i),
                    format!("amplitude {v} is negative or non-finite"),
                ))
            }
        })
        .collect()
}

fn parse_raw_u16(path: &Path, bytes: &[u8], rows: usize, cols: usize) -> Result<Vec<f64>> {
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(2))
        .ok_or_else(|| Error::Config(format!("raster shape {rows}x{cols} is too large")))?;
    if bytes.len() != expected {
        return Err(malformed(
            path,
            format!("byte offset {}", bytes.len().min(expected)),
            format!(
                "file has {} bytes, a {rows}x{cols} u16 raster needs {expected}",
                bytes.len()
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
        .collect())
}

/// Header token reader for Netpbm files: skips whitespace and `#` comments.
struct PgmReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmReader<'a> {
    fn token(&mut self) -> Option<(usize, &'a [u8])> {
        loop {
            match self.bytes.get(self.pos)? {
                b'#' => {
                    while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
        Some((start, &self.bytes[start..self.pos]))
    }

    fn number(&mut self, path: &Path, what: &str) -> Result<usize> {
        let end = self.bytes.len();
        let (at, tok) = self.token().ok_or_else(|| {
            malformed(
                path,
                format!("byte offset {end}"),
                format!("missing {what}"),
            )
        })?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                malformed(
                    path,
                    format!("byte offset {at}"),
                    format!("bad {what}: {:?}", String::from_utf8_lossy(tok)),
                )
            })
    }
}

/// Returns `(rows, cols, pixels)`.
fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = PgmReader { bytes, pos: 0 };
    let magic = r.token().map(|(_, t)| t.to_vec());
    let plain = match magic.as_deref() {
        Some(b"P2") => true,
        Some(b"P5") => false,
        _ => {
            return Err(malformed(
                path,
                "byte offset 0",
                "not a PGM file (expected P2 or P5)",
            ))
        }
    };
    let width = r.number(path, "width")?;
    let height = r.number(path, "height")?;
    let maxval = r.number(path, "maxval")?;
    if width == 0 || height == 0 || !(1..=65535).contains(&maxval) {
        return Err(malformed(
            path,
            "header",
            format!("invalid header {width}x{height}, maxval {maxval}"),
        ));
    }
    let count = width * height;
    let mut pixels = Vec::with_capacity(count);
    if plain {
        for i in 0..count {
            let v = r.number(path, "pixel")?;
            if v > maxval {
                return Err(malformed(
                    path,
                    format!("row {}, column {}", i / width, i % width),
                    format!("value {v} above maxval {maxval}"),
                ));
            }
            pixels.push(v as f64);
        }
    } else {
        let start = r.pos + 1; // single whitespace byte after maxval
        let depth = if maxval < 256 { 1 } else { 2 };
        let need = count * depth;
        let data = bytes.get(start..).unwrap_or(&[]);
        if data.len() < need {
            return Err(malformed(
                path,
                format!("byte offset {}", start + data.len()),
                format!("raster truncated: {} of {need} bytes", data.len()),
            ));
        }
        for (i, c) in data[..need].chunks_exact(depth).enumerate() {
            let v = if depth == 1 {
                c[0] as usize
            } else {
                u16::from_be_bytes([c[0], c[1]]) as usize
            };
            if v > maxval {
                return Err(malformed(
                    path,
                    format!("row {}, column {}", i / width, i % width),
                    format!("value {v} above maxval {maxval}"),
                ));
            }
            pixels.push(v as f64);
        }
    }
    Ok((height, width, pixels))
}

fn crop(pixels: &[f64], rows: usize, cols: usize, patch: Option<Patch>) -> Result<Vec<f64>> {
    let Some(p) = patch else {
        return Ok(pixels.to_vec());
    };
    let fits = p.height > 0
        && p.width > 0
        && p.row_offset
            .checked_add(p.height)
            .is_some_and(|e| e <= rows)
        && p.col_offset.checked_add(p.width).is_some_and(|e| e <= cols);
    if !fits {
        return Err(Error::Config(format!(
            "patch rows {}..+{}, cols {}..+{} outside the {rows}x{cols} raster",
            p.row_offset, p.height, p.col_offset, p.width
        )));
    }
    Ok((p.row_offset..p.row_offset + p.height)
        .flat_map(|r| {
            pixels[r * cols + p.col_offset..r * cols + p.col_offset + p.width]
                .iter()
                .copied()
        })
        .collect())
}

// ---------------------------------------------------------------------------
// command line

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
    /// Little-endian f64 values; `simulate` only.
    #[value(name = "raw_f64le")]
    RawF64le,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
            OutputFormat::RawF64le => "f64",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AModeArg {
    Mean,
    Median,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Args)]
pub struct ASelection {
    /// How the moment constant `a` is chosen.
    #[arg(long, value_enum, default_value = "mean")]
    pub a_mode: AModeArg,
    /// Value of `a` for `--a-mode fixed`.
    #[arg(long)]
    pub a: Option<f64>,
}

impl ASelection {
    fn validate(&self) -> Result<()> {
        match (self.a_mode, self.a) {
            (AModeArg::Fixed, Some(a)) if a > 0.0 && a.is_finite() => Ok(()),
            (AModeArg::Fixed, Some(a)) => Err(Error::Config(format!(
                "--a must be finite and > 0, got {a}"
            ))),
            (AModeArg::Fixed, None) => Err(Error::Config("--a-mode fixed requires --a".into())),
            (_, Some(_)) => Err(Error::Config("--a is only used with --a-mode fixed".into())),
            (_, None) => Ok(()),
        }
    }

    fn resolve(&self, data: &[f64]) -> Result<MomentConstant<f64>> {
        match self.a_mode {
            AModeArg::Mean => choose_a(data, AMode::Mean),
            AModeArg::Median => choose_a(data, AMode::Median),
            AModeArg::Fixed => MomentConstant::new(self.a.unwrap_or(f64::NAN)),
        }
    }

    fn mode_for_choose(&self) -> Option<AMode> {
        match self.a_mode {
            AModeArg::Mean => Some(AMode::Mean),
            AModeArg::Median => Some(AMode::Median),
            AModeArg::Fixed => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Args)]
pub struct HistogramArgs {
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Histogram range ends at this empirical quantile.
    #[arg(long, default_value_t = 0.999, conflicts_with = "upper")]
    pub upper_quantile: f64,
    /// Fixed upper end of the histogram range.
    #[arg(long)]
    pub upper: Option<f64>,
    #[arg(long, default_value_t = 1e-12)]
    pub floor: f64,
}

impl HistogramArgs {
    pub fn spec(&self) -> HistogramSpec {
        HistogramSpec {
            bin_count: self.bins,
            upper: match self.upper {
                Some(u) => UpperBound::Fixed(u),
                None => UpperBound::Quantile(self.upper_quantile),
            },
            floor_epsilon: self.floor,
        }
    }
}

fn parse_shape(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or("expected ROWSxCOLS")?;
    let r = r
        .trim()
        .parse()
        .map_err(|_| format!("bad row count {r:?}"))?;
    let c = c
        .trim()
        .parse()
        .map_err(|_| format!("bad column count {c:?}"))?;
    Ok((r, c))
}

fn parse_patch(s: &str) -> std::result::Result<Patch, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| format!("bad patch field {t:?}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [row_offset, col_offset, height, width] => Ok(Patch {
            row_offset,
            col_offset,
            height,
            width,
        }),
        _ => Err("expected ROW,COL,HEIGHT,WIDTH".into()),
    }
}

fn parse_grid(s: &str) -> std::result::Result<ArithmeticGrid, String> {
    let v: Vec<f64> = s
        .split(':')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| format!("bad grid field {t:?}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    let g = match v[..] {
        [x] => ArithmeticGrid::single(x),
        [start, step, end] => ArithmeticGrid::new(start, step, end),
        _ => return Err("expected START:STEP:END or a single value".into()),
    };
    g.map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: InputFormat,
    /// Raster size for raw_u16le_raster, e.g. 200x200.
    #[arg(long, value_parser = parse_shape)]
    pub raster_shape: Option<(usize, usize)>,
    /// Raster window ROW,COL,HEIGHT,WIDTH.
    #[arg(long, value_parser = parse_patch)]
    pub patch: Option<Patch>,
}

impl InputArgs {
    pub fn dataset(&self) -> InputDataset {
        InputDataset {
            path: self.input.clone(),
            format: self.format,
            raster_shape: self.raster_shape,
            patch: self.patch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Subcommand)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Estimate (gamma, delta) from amplitude data.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        a: ASelection,
    },
    /// Draw seeded Cauchy-Rician amplitudes.
    Simulate {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Synthetic MSE grid experiment.
    Grid {
        #[arg(long, value_parser = parse_grid, default_value = "5:5:150")]
        gamma_grid: ArithmeticGrid,
        #[arg(long, value_parser = parse_grid, default_value = "5:5:200")]
        delta_grid: ArithmeticGrid,
        #[arg(long, default_value_t = 40_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "mean")]
        a_mode: AModeGrid,
    },
    /// Fit every model to the data and score each by KL divergence.
    Compare {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        histogram: HistogramArgs,
        #[arg(long, value_enum, default_value = "mean")]
        a_mode: AModeGrid,
        /// Number of looks held fixed in the G0 fit.
        #[arg(long, default_value_t = 1.0)]
        looks: f64,
    },
    /// Time the estimator on a synthetic batch.
    Bench {
        #[arg(long, default_value_t = 40_000)]
        n: usize,
        #[arg(long, default_value_t = 50.0)]
        gamma: f64,
        #[arg(long, default_value_t = 100.0)]
        delta: f64,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Density table for plotting; with --input, the data histogram and every
    /// fitted model side by side.
    PdfTable {
        #[arg(long, required_unless_present = "input")]
        gamma: Option<f64>,
        #[arg(long, required_unless_present = "input")]
        delta: Option<f64>,
        /// Upper end of the x range (default: from the data, or 10(γ+δ)).
        #[arg(long)]
        x_max: Option<f64>,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, requires = "input")]
        format: Option<InputFormat>,
        #[command(flatten)]
        histogram: HistogramArgs,
    },
}

/// `a` selection for commands that pick it from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AModeGrid {
    Mean,
    Median,
}

impl From<AModeGrid> for AMode {
    fn from(m: AModeGrid) -> Self {
        match m {
            AModeGrid::Mean => AMode::Mean,
            AModeGrid::Median => AMode::Median,
        }
    }
}

/// Full configuration of one invocation; embedded in every output sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Parser)]
#[command(
    name = "cauchy-rician",
    version,
    about = "Cauchy-Rician SAR amplitude model toolkit"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Output file, or `-` for stdout.
    #[arg(long, global = true)]
    pub output: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub output_format: Option<OutputFormat>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        match &self.command {
            Command::Fit { a, .. } => a.validate(),
            Command::Simulate { n, .. } if *n == 0 => {
                Err(Error::Config("--n must be positive".into()))
            }
            Command::Compare {
                histogram, looks, ..
            } => {
                histogram.spec().validate()?;
                if !(*looks >= 1.0 && looks.is_finite()) {
                    return Err(Error::Config(format!("--looks must be >= 1, got {looks}")));
                }
                Ok(())
            }
            Command::PdfTable {
                points,
                histogram,
                input,
                format,
                ..
            } => {
                if *points < 2 {
                    return Err(Error::Config("--points must be at least 2".into()));
                }
                if input.is_some() && format.is_none() {
                    return Err(Error::Config("--input requires --format".into()));
                }
                histogram.spec().validate()
            }
            _ => Ok(()),
        }
    }

    fn name(&self) -> &'static str {
        match self.command {
            Command::Fit { .. } => "fit",
            Command::Simulate { .. } => "simulate",
            Command::Grid { .. } => "grid",
            Command::Compare { .. } => "compare",
            Command::Bench { .. } => "bench",
            Command::PdfTable { .. } => "pdf-table",
        }
    }

    fn default_format(&self) -> OutputFormat {
        match self.command {
            Command::Fit { .. } | Command::Bench { .. } => OutputFormat::Json,
            _ => OutputFormat::Csv,
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::NonConvergence { .. } | Error::Overflow { .. } => EXIT_NUMERICAL,
        Error::Domain { .. }
        | Error::InvalidParameter { .. }
        | Error::EmptyData
        | Error::BadSample { .. }
        | Error::DegenerateFit { .. }
        | Error::Io { .. }
        | Error::Malformed { .. } => EXIT_DATA,
    }
}

/// Runs the CLI with process stdout/stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI against the given streams; returns the exit code.
pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match cfg.validate().and_then(|()| execute(&cfg, out)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    generator: &'static str,
    run_config: &'a RunConfig,
}

enum Sink {
    Stdout,
    File(PathBuf),
}

fn sink(cfg: &RunConfig, format: OutputFormat) -> Sink {
    match cfg.output.as_deref() {
        Some("-") => Sink::Stdout,
        Some(p) => Sink::File(PathBuf::from(p)),
        None => match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => {
                Sink::File(Path::new(&dir).join(format!("{}.{}", cfg.name(), format.extension())))
            }
            _ => Sink::Stdout,
        },
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `body` via a temporary file in the destination directory and
/// renames it into place.
fn write_atomic(path: &Path, body: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(body).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

fn emit(cfg: &RunConfig, format: OutputFormat, body: Vec<u8>, out: &mut dyn Write) -> Result<()> {
    match sink(cfg, format) {
        Sink::Stdout => out.write_all(&body).map_err(io_err(Path::new("<stdout>"))),
        Sink::File(path) => {
            let meta = Sidecar {
                tool: "cauchy-rician",
                version: env!("CARGO_PKG_VERSION"),
                generator: GENERATOR_ID,
                run_config: cfg,
            };
            let mut meta = to_json(&meta)?;
            meta.push('\n');
            write_atomic(&path, &body)?;
            write_atomic(&sidecar_path(&path), meta.as_bytes())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Config(format!("serialization failed: {e}")))
}

/// 17 significant digits, enough to round-trip any f64.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn execute(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let format = cfg.output_format.unwrap_or_else(|| cfg.default_format());
    let body = match (&cfg.command, format) {
        (
            Command::Simulate {
                gamma,
                delta,
                n,
                seed,
            },
            OutputFormat::RawF64le,
        ) => {
            let batch = sample_amplitude(&CrParams::new(*gamma, *delta)?, *n, *seed)?;
            batch
                .amplitudes
                .iter()
                .flat_map(|x| x.to_le_bytes())
                .collect()
        }
        (_, OutputFormat::RawF64le) => {
            return Err(Error::Config(
                "raw_f64le output is only available for simulate".into(),
            ));
        }
        _ => render_text(cfg, format)?.into_bytes(),
    };
    emit(cfg, format, body, out)
}

/// Text (CSV or JSON) output of a run.
fn render_text(cfg: &RunConfig, format: OutputFormat) -> Result<String> {
    let json = format == OutputFormat::Json;
    Ok(match &cfg.command {
        Command::Fit { input, a } => fit_command(input, a, json)?,
        Command::Simulate {
            gamma,
            delta,
            n,
            seed,
        } => {
            let batch = sample_amplitude(&CrParams::new(*gamma, *delta)?, *n, *seed)?;
            match json {
                false => csv(
                    &["amplitude"],
                    batch.amplitudes.iter().map(|&x| vec![num(x)]),
                ),
                true => to_json(&batch)? + "\n",
            }
        }
        Command::Grid {
            gamma_grid,
            delta_grid,
            n,
            repeats,
            seed,
            a_mode,
        } => {
            let surface = run_grid_experiment(&GridExperimentConfig {
                gamma_grid: *gamma_grid,
                delta_grid: *delta_grid,
                samples_per_cell: *n,
                repeats: *repeats,
                master_seed: *seed,
                a_mode: (*a_mode).into(),
            })?;
            match json {
                false => csv(
                    &[
                        "gamma_true",
                        "delta_true",
                        "gamma_hat_mean",
                        "delta_hat_mean",
                        "gamma_mse",
                        "delta_mse",
                        "clamp_count",
                        "gamma_nonpositive_count",
                    ],
                    surface.records.iter().map(|r| {
                        vec![
                            num(r.gamma_true),
                            num(r.delta_true),
                            num(r.gamma_hat_mean),
                            num(r.delta_hat_mean),
                            num(r.gamma_mse),
                            num(r.delta_mse),
                            r.clamp_count.to_string(),
                            r.gamma_nonpositive_count.to_string(),
                        ]
                    }),
                ),
                true => to_json(&surface)? + "\n",
            }
        }
        Command::Compare {
            input,
            histogram,
            a_mode,
            looks,
        } => {
            let data = load_dataset(&input.dataset())?;
            let report = compare_models(
                &data,
                &histogram.spec(),
                (*a_mode).into(),
                FitOptions { g0_looks: *looks },
            )?;
            match json {
                false => csv(
                    &["model", "kl", "parameters", "method", "error"],
                    report.scores.iter().map(|s| {
                        let params = s
                            .parameters
                            .iter()
                            .map(|(k, v)| format!("{k}={}", num(*v)))
                            .collect::<Vec<_>>()
                            .join(";");
                        vec![
                            s.model.to_string(),
                            s.kl.map(num).unwrap_or_default(),
                            params,
                            s.method.to_string(),
                            s.error
                                .clone()
                                .unwrap_or_default()
                                .replace([',', '\n'], " "),
                        ]
                    }),
                ),
                true => to_json(&report)? + "\n",
            }
        }
        Command::Bench {
            n,
            gamma,
            delta,
            repeats,
            seed,
        } => {
            let r = benchmark_fit(*n, &CrParams::new(*gamma, *delta)?, *repeats, *seed)?;
            match json {
                true => to_json(&r)? + "\n",
                false => csv(
                    &["n", "repeats", "mean_us", "min_us", "median_us"],
                    [vec![
                        r.n.to_string(),
                        r.repeats.to_string(),
                        num(r.mean_us),
                        num(r.min_us),
                        num(r.median_us),
                    ]],
                ),
            }
        }
        Command::PdfTable {
            gamma,
            delta,
            x_max,
            points,
            input,
            format: in_format,
            histogram,
        } => {
            let (header, rows) = match (input, in_format) {
                (Some(path), Some(f)) => {
                    let data = load_dataset(&InputDataset {
                        path: path.clone(),
                        format: *f,
                        raster_shape: None,
                        patch: None,
                    })?;
                    overlay_table(&data, &histogram.spec(), *x_max, *points)?
                }
                _ => {
                    let p = CrParams::new(gamma.unwrap_or(f64::NAN), delta.unwrap_or(f64::NAN))?;
                    let x_max = x_max.unwrap_or(10.0 * (p.gamma() + p.delta()));
                    let rows = grid_points(x_max, *points)
                        .into_iter()
                        .map(|x| Ok(vec![num(x), num(pdf(&p, x)?)]))
                        .collect::<Result<Vec<_>>>()?;
                    (vec!["x".to_string(), "cauchy_rician".to_string()], rows)
                }
            };
            match json {
                false => csv(&header.iter().map(String::as_str).collect::<Vec<_>>(), rows),
                true => {
                    #[derive(Serialize)]
                    struct Table {
                        columns: Vec<String>,
                        rows: Vec<Vec<f64>>,
                    }
                    let rows = rows
                        .iter()
                        .map(|r| r.iter().map(|v| v.parse().unwrap_or(f64::NAN)).collect())
                        .collect();
                    to_json(&Table {
                        columns: header,
                        rows,
                    })? + "\n"
                }
            }
        }
    })
}

fn grid_points(x_max: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| x_max * i as f64 / (points - 1) as f64)
        .collect()
}

fn fit_command(input: &InputArgs, sel: &ASelection, json: bool) -> Result<String> {
    let data = load_dataset(&input.dataset())?;
    let start = Instant::now();
    let a = sel.resolve(&data)?;
    let est: ParamEstimate<f64> = estimate(&data, a)?;
    let fit_time_us = start.elapsed().as_secs_f64() * 1e6;

    #[derive(Serialize)]
    struct FitOutput {
        n: usize,
        gamma_hat: f64,
        delta_hat: f64,
        a_used: f64,
        a_mode: AModeArg,
        a_choice: Option<AMode>,
        delta_clamped: bool,
        gamma_nonpositive: bool,
        fit_time_us: f64,
    }
    let o = FitOutput {
        n: data.len(),
        gamma_hat: est.gamma_hat,
        delta_hat: est.delta_hat,
        a_used: est.a_used,
        a_mode: sel.a_mode,
        a_choice: sel.mode_for_choose(),
        delta_clamped: est.diagnostics.delta_clamped,
        gamma_nonpositive: est.diagnostics.gamma_nonpositive,
        fit_time_us,
    };
    Ok(match json {
        true => to_json(&o)? + "\n",
        false => csv(
            &[
                "n",
                "gamma_hat",
                "delta_hat",
                "a_used",
                "delta_clamped",
                "gamma_nonpositive",
                "fit_time_us",
            ],
            [vec![
                o.n.to_string(),
                num(o.gamma_hat),
                num(o.delta_hat),
                num(o.a_used),
                o.delta_clamped.to_string(),
                o.gamma_nonpositive.to_string(),
                num(o.fit_time_us),
            ]],
        ),
    })
}

/// Histogram density plus each fitted model's density at the bin centres.
fn overlay_table(
    data: &[f64],
    spec: &HistogramSpec,
    x_max: Option<f64>,
    points: usize,
) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let spec = match x_max {
        Some(u) => HistogramSpec {
            upper: UpperBound::Fixed(u),
            ..*spec
        },
        None => *spec,
    };
    let spec = HistogramSpec {
        bin_count: points,
        ..spec
    };
    spec.validate()?;
    let h = histogram(data, &spec)?;
    let width = h.bin_width();

    let mut header = vec!["x".to_string(), "histogram".to_string()];
    let mut models: Vec<Box<dyn Fn(f64) -> f64>> = Vec::new();
    if let Ok(est) = choose_a(data, AMode::Mean).and_then(|a| estimate(data, a)) {
        if let Ok(p) = CrParams::new(est.gamma_hat, est.delta_hat) {
            header.push("cauchy_rician".into());
            models.push(Box::new(move |x| pdf(&p, x).unwrap_or(f64::NAN)));
        }
    }
    for kind in BaselineKind::ALL {
        if let Ok(f) = fit_baseline(kind, data, FitOptions::default()) {
            header.push(kind.name().into());
            models.push(Box::new(move |x| {
                baseline_pdf(&f.model, x).unwrap_or(f64::NAN)
            }));
        }
    }
    let mut rows = Vec::with_capacity(points);
    for (i, &p) in h.probabilities.iter().enumerate() {
        let x = (i as f64 + 0.5) * width;
        let mut row = vec![num(x), num(p / width)];
        for m in &models {
            row.push(num(m(x)));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_file(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    fn ds(path: PathBuf, format: InputFormat) -> InputDataset {
        InputDataset {
            path,
            format,
            raster_shape: None,
            patch: None,
        }
    }

    #[test]
    fn csv_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(&dir, "a.csv", b"1.5\n2.0\n");
        assert_eq!(
            load_dataset(&ds(p, InputFormat::CsvAmplitudes)).unwrap(),
            vec![1.5, 2.0]
        );
        let p = tmp_file(&dir, "h.csv", b"amplitude\n3\n\n4e0\n");
        assert_eq!(
            load_dataset(&ds(p, InputFormat::CsvAmplitudes)).unwrap(),
            vec![3.0, 4.0]
        );
    }

    #[test]
    fn csv_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(&dir, "bad.csv", b"1\n2\nx\n");
        match load_dataset(&ds(p, InputFormat::CsvAmplitudes)).unwrap_err() {
            Error::Malformed { location, .. } => assert_eq!(location, "line 3"),
            e => panic!("{e:?}"),
        }
        let p = tmp_file(&dir, "neg.csv", b"1\n-2\n");
        match load_dataset(&ds(p, InputFormat::CsvAmplitudes)).unwrap_err() {
            Error::Malformed { location, .. } => assert_eq!(location, "line 2"),
            e => panic!("{e:?}"),
        }
        let p = tmp_file(&dir, "empty.csv", b"amplitude\n");
        assert!(matches!(
            load_dataset(&ds(p, InputFormat::CsvAmplitudes)),
            Err(Error::EmptyData)
        ));
        let missing = dir.path().join("nope.csv");
        assert!(matches!(
            load_dataset(&ds(missing, InputFormat::CsvAmplitudes)),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn raw_f64_truncated_names_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(&dir, "t.bin", &[0u8; 4]);
        match load_dataset(&ds(p, InputFormat::RawF64le)).unwrap_err() {
            Error::Malformed { location, .. } => assert_eq!(location, "byte offset 0"),
            e => panic!("{e:?}"),
        }
        let mut bytes = 2.5f64.to_le_bytes().to_vec();
        bytes.extend_from_slice(&f64::NAN.to_le_bytes());
        let p = tmp_file(&dir, "nan.bin", &bytes);
        match load_dataset(&ds(p, InputFormat::RawF64le)).unwrap_err() {
            Error::Malformed { location, .. } => assert_eq!(location, "byte offset 8"),
            e => panic!("{e:?}"),
        }
    }

    fn pgm16(width: usize, height: usize, f: impl Fn(usize, usize) -> u16) -> Vec<u8> {
        let mut b = format!("P5\n# test\n{width} {height}\n65535\n").into_bytes();
        for r in 0..height {
            for c in 0..width {
                b.extend_from_slice(&f(r, c).to_be_bytes());
            }
        }
        b
    }

    #[test]
    fn pgm_16bit_full_patch() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(
            &dir,
            "a.pgm",
            &pgm16(200, 200, |r, c| ((r * 331 + c * 17) % 65536) as u16),
        );
        let d = InputDataset {
            patch: Some(Patch {
                row_offset: 0,
                col_offset: 0,
                height: 200,
                width: 200,
            }),
            ..ds(p, InputFormat::PgmRaster)
        };
        let v = load_dataset(&d).unwrap();
        assert_eq!(v.len(), 40_000);
        assert!(v.iter().all(|&x| (0.0..=65535.0).contains(&x)));
        assert_eq!(v[203], (331 + 3 * 17) as f64);
    }

    #[test]
    fn pgm_plain_and_patch() {
        let dir = tempfile::tempdir().unwrap();
        let p = tmp_file(&dir, "p.pgm", b"P2\n3 2 # w h\n9\n1 2 3\n4 5 6\n");
        let d = InputDataset {
            patch: Some(Patch {
                row_offset: 1,
                col_offset: 1,
                height: 1,
                width: 2,
            }),
            ..ds(p.clone(), InputFormat::PgmRaster)
        };
        assert_eq!(load_dataset(&d).unwrap(), vec![5.0, 6.0]);
        let d = InputDataset {
            patch: Some(Patch {
                row_offset: 1,
                col_offset: 2,
                height: 1,
                width: 2,
            }),
            ..ds(p, InputFormat::PgmRaster)
        };
        assert!(matches!(load_dataset(&d), Err(Error::Config(_))));
        let p = tmp_file(&dir, "big.pgm", b"P2\n2 1\n9\n1 12\n");
        assert!(matches!(
            load_dataset(&ds(p, InputFormat::PgmRaster)),
            Err(Error::Malformed { .. })
        ));
        let p = tmp_file(&dir, "short.pgm", b"P5\n2 2\n255\n\x01\x02");
        assert!(matches!(
            load_dataset(&ds(p, InputFormat::PgmRaster)),
            Err(Error::Malformed { .. })
        ));
    }

    #[test]
    fn raw_u16_raster() {
        let dir = tempfile::tempdir().unwrap();
        let bytes: Vec<u8> = (0u16..12).flat_map(|v| v.to_le_bytes()).collect();
        let p = tmp_file(&dir, "r.bin", &bytes);
        let d = InputDataset {
            raster_shape: Some((3, 4)),
            patch: Some(Patch {
                row_offset: 1,
                col_offset: 1,
                height: 2,
                width: 2,
            }),
            ..ds(p.clone(), InputFormat::RawU16leRaster)
        };
        assert_eq!(load_dataset(&d).unwrap(), vec![5.0, 6.0, 9.0, 10.0]);
        assert!(matches!(
            load_dataset(&ds(p.clone(), InputFormat::RawU16leRaster)),
            Err(Error::Config(_))
        ));
        let d = InputDataset {
            raster_shape: Some((4, 4)),
            ..ds(p, InputFormat::RawU16leRaster)
        };
        assert!(matches!(load_dataset(&d), Err(Error::Malformed { .. })));
    }

    #[test]
    fn arg_parsers() {
        assert_eq!(parse_shape("200x100").unwrap(), (200, 100));
        assert!(parse_shape("200").is_err());
        assert_eq!(
            parse_patch("1,2,3,4").unwrap(),
            Patch {
                row_offset: 1,
                col_offset: 2,
                height: 3,
                width: 4
            }
        );
        assert!(parse_patch("1,2,3").is_err());
        assert_eq!(
            parse_grid("5:5:20").unwrap().values(),
            vec![5.0, 10.0, 15.0, 20.0]
        );
        assert_eq!(parse_grid("50").unwrap().values(), vec![50.0]);
        assert!(parse_grid("0:1:2").is_err());
    }

    #[test]
    fn a_selection_consistency() {
        let fixed = |a| ASelection {
            a_mode: AModeArg::Fixed,
            a,
        };
        assert!(fixed(Some(2.0)).validate().is_ok());
        assert!(fixed(Some(0.0)).validate().is_err());
        assert!(fixed(None).validate().is_err());
        assert!(ASelection {
            a_mode: AModeArg::Mean,
            a: Some(1.0)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn exit_codes() {
        let run = |args: &[&str]| {
            let (mut o, mut e) = (Vec::new(), Vec::new());
            let code = run_cli_with(
                std::iter::once("cauchy-rician").chain(args.iter().copied()),
                &mut o,
                &mut e,
            );
            (
                code,
                String::from_utf8(o).unwrap(),
                String::from_utf8(e).unwrap(),
            )
        };
        assert_eq!(run(&["--help"]).0, EXIT_OK);
        assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run(&["simulate", "--gamma", "1"]).0, EXIT_USAGE);
        assert_eq!(
            run(&["simulate", "--gamma", "1", "--delta", "2", "--n", "0"]).0,
            EXIT_USAGE
        );
        let (code, _, err) = run(&["simulate", "--gamma=-1", "--delta", "2", "--n", "3"]);
        assert_eq!(code, EXIT_DATA);
        assert!(err.starts_with("error: "));
        let (code, out, _) = run(&[
            "simulate", "--gamma", "1", "--delta", "2", "--n", "3", "--output", "-",
        ]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(out.lines().count(), 4);
        assert_eq!(
            run(&[
                "fit",
                "--input",
                "/nonexistent/x.csv",
                "--format",
                "csv_amplitudes"
            ])
            .0,
            EXIT_DATA
        );
        assert_eq!(
            exit_code(&Error::NonConvergence {
                what: "x",
                detail: String::new()
            }),
            EXIT_NUMERICAL
        );
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(
            sidecar_path(Path::new("/a/b/out.csv")),
            PathBuf::from("/a/b/out.csv.meta.json")
        );
    }

    #[test]
    fn number_format_round_trips() {
        for &x in &[0.1, 1.0 / 3.0, 12345.678e-300, f64::MAX, 5e-324] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
