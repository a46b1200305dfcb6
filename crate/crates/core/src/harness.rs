//! Monte-Carlo driver: BER and visited-node sweeps, structure verification
//! and single-instance dumps.
//!
//! Every trial is a pure function of `(master seed, SNR, trial index)`;
//! per-point statistics are plain sums and maxima, so results do not depend
//! on how trials are spread over worker threads.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{
    draw_channel, equivalent_channel, realize_received, transmit, trial_stream, ChannelRealization,
    NoiseConfig,
};
use crate::constellation::QamConstellation;
use crate::decoders::{
    self, simplified_ml_decode_factored, DecodeOptions, DecoderKind, GroupedReceived, LevelIndices,
    NodeStats, SimplifiedTrace,
};
use crate::error::{Error, Result};
use crate::stbc::{encode, generator_matrix, GeneratorMatrix, SymbolVector};
use crate::structured_qr::{
    factorization_residuals, gram_schmidt_qr, qr_r23, verify_structure, StructureReport,
};
use crate::{Mat16, Vec16, Vec4};

/// Exact CSV header of sweep output.
pub const CSV_HEADER: &str =
    "snr_db,decoder,trials,bit_errors,ber,avg_total_nodes,avg_delay_nodes,max_delay_nodes,mismatches_vs_oracle";

/// Channel redraws allowed per trial before giving up.
const MAX_REDRAWS: u32 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// QAM order `M`.
    pub order: usize,
    pub snr_db: Vec<f64>,
    pub trials_per_point: u64,
    pub master_seed: u64,
    pub decoders: Vec<DecoderKind>,
    /// Cap on trials per SNR point that run the brute-force search, either as
    /// an enabled decoder or as the oracle spot-check.
    pub max_trials_bruteforce: u64,
    pub allow_bruteforce_large_m: bool,
    pub output: Option<PathBuf>,
    /// Worker threads; 0 lets the thread pool decide.
    pub workers: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            order: 4,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            trials_per_point: 20_000,
            master_seed: 1,
            decoders: vec![DecoderKind::Sphere, DecoderKind::Simplified],
            max_trials_bruteforce: 100,
            allow_bruteforce_large_m: false,
            output: None,
            workers: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        QamConstellation::new(self.order).map_err(|e| Error::config(e.to_string()))?;
        if self.trials_per_point == 0 {
            return Err(Error::config("trials per point must be at least 1"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::config("SNR list is empty"));
        }
        if let Some(bad) = self
            .snr_db
            .iter()
            .find(|s| s.is_nan() || **s == f64::NEG_INFINITY)
        {
            return Err(Error::config(format!("invalid SNR value {bad}")));
        }
        if self.decoders.is_empty() {
            return Err(Error::config("decoder set is empty"));
        }
        let mut seen = self.decoders.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.decoders.len() {
            return Err(Error::config("decoder listed twice"));
        }
        if self.decoders.contains(&DecoderKind::BruteForce) {
            if self.order > 4 && !self.allow_bruteforce_large_m {
                return Err(Error::config(format!(
                    "brute force at M={} needs the large-M override",
                    self.order
                )));
            }
            if self.trials_per_point > self.max_trials_bruteforce {
                return Err(Error::config(format!(
                    "brute force requested for {} trials per point, above the cap of {}",
                    self.trials_per_point, self.max_trials_bruteforce
                )));
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting (config-file keys match the long CLI flags).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::config(format!("{key}: invalid {what} '{value}'"));
        match key.trim().replace('_', "-").as_str() {
            "m" | "order" => self.order = value.parse().map_err(|_| bad("order"))?,
            "snr" => self.snr_db = parse_snr_list(value)?,
            "trials" => self.trials_per_point = value.parse().map_err(|_| bad("count"))?,
            "seed" => self.master_seed = value.parse().map_err(|_| bad("seed"))?,
            "decoders" => self.decoders = parse_decoders(value)?,
            "out" => self.output = Some(PathBuf::from(value)),
            "workers" => self.workers = value.parse().map_err(|_| bad("count"))?,
            "max-bruteforce-trials" => {
                self.max_trials_bruteforce = value.parse().map_err(|_| bad("count"))?
            }
            "allow-bruteforce-large-m" => {
                self.allow_bruteforce_large_m = parse_bool(value).ok_or_else(|| bad("flag"))?
            }
            other => return Err(Error::config(format!("unknown setting '{other}'"))),
        }
        Ok(())
    }

    /// Applies a TOML config file whose top-level keys match the long CLI
    /// flags; lists may be arrays (`snr = [0, 10]`) or strings (`snr = "0:20:5"`).
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        for (key, value) in &table {
            self.apply(key, &toml_scalar(key, value)?)?;
        }
        Ok(())
    }
}

fn toml_scalar(key: &str, value: &toml::Value) -> Result<String> {
    use toml::Value;
    Ok(match value {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        Value::Array(items) => items
            .iter()
            .map(|v| toml_scalar(key, v))
            .collect::<Result<Vec<_>>>()?
            .join(","),
        other => return Err(Error::config(format!("{key}: unsupported value {other}"))),
    })
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" => Some(false),
        _ => None,
    }
}

fn parse_snr_value(v: &str) -> Result<f64> {
    let v = v.trim();
    match v.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        _ => v
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::config(format!("invalid SNR value '{v}'"))),
    }
}

/// Parses `0,5,10`, an inclusive range `start:stop:step`, or a mix of both.
pub fn parse_snr_list(list: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [single] => out.push(parse_snr_value(single)?),
            [start, stop, step] => {
                let (start, stop, step) = (
                    parse_snr_value(start)?,
                    parse_snr_value(stop)?,
                    parse_snr_value(step)?,
                );
                if step <= 0.0 || stop < start || !stop.is_finite() {
                    return Err(Error::config(format!("invalid SNR range '{item}'")));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                out.extend((0..=n).map(|k| start + k as f64 * step));
            }
            _ => return Err(Error::config(format!("invalid SNR item '{item}'"))),
        }
    }
    if out.is_empty() {
        return Err(Error::config("SNR list is empty"));
    }
    Ok(out)
}

pub fn parse_decoders(list: &str) -> Result<Vec<DecoderKind>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e: Error| Error::config(e.to_string())))
        .collect()
}

/// One Monte-Carlo realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub channel: ChannelRealization,
    pub h_eq: Mat16,
    pub bits: Vec<u8>,
    pub symbols: SymbolVector,
    pub y: Vec16,
    /// Singular channels discarded before this one.
    pub redraws: u32,
}

/// Draws channel, payload and noise for `(seed, snr, trial)`. Singular
/// channels are redrawn from a stream derived with an attempt counter.
pub fn draw_instance(
    c: &QamConstellation,
    g: &GeneratorMatrix,
    noise: &NoiseConfig,
    master_seed: u64,
    trial: u64,
) -> Result<Instance> {
    for attempt in 0..MAX_REDRAWS {
        let mut rng = trial_stream(master_seed, noise.snr_db(), trial, attempt);
        let channel = draw_channel(&mut rng);
        let h_eq = equivalent_channel(&channel, g);
        if gram_schmidt_qr(&h_eq).is_err() {
            continue;
        }
        let bits: Vec<u8> = (0..c.bits_per_codeword())
            .map(|_| rng.random_range(0..2u8))
            .collect();
        let symbols = c.bits_to_symbols(&bits)?;
        let y = realize_received(&transmit(&encode(&symbols), &channel, noise, &mut rng));
        return Ok(Instance {
            channel,
            h_eq,
            bits,
            symbols,
            y,
            redraws: attempt,
        });
    }
    Err(Error::config(format!(
        "trial {trial}: no usable channel after {MAX_REDRAWS} draws"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderOutcome {
    pub bit_errors: u64,
    pub nodes: NodeStats,
    /// Whether the argmin differed from the brute-force oracle, if it ran.
    pub mismatch: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialOutcome {
    /// Same order as the configured decoders.
    pub decoders: Vec<DecoderOutcome>,
    pub redraws: u32,
}

/// Aggregated statistics for one `(snr, decoder)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub snr_db: f64,
    pub decoder: DecoderKind,
    pub trials: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub avg_total_nodes: f64,
    pub avg_delay_nodes: f64,
    pub max_delay_nodes: u64,
    /// Sort and per-`(b, d)` bookkeeping left out of the delay; not in the CSV.
    pub avg_overhead_nodes: f64,
    /// `None` when no oracle ran at this point.
    pub mismatches_vs_oracle: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    pub redraws: u64,
}

/// Owns the constellation and generator for a validated configuration.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    constellation: QamConstellation,
    generator: GeneratorMatrix,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let constellation = QamConstellation::new(config.order)?;
        Ok(Simulator {
            config,
            constellation,
            generator: generator_matrix(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn constellation(&self) -> &QamConstellation {
        &self.constellation
    }

    fn oracle_enabled(&self) -> bool {
        self.config.order <= 4 || self.config.allow_bruteforce_large_m
    }

    /// Trials per point on which the brute-force oracle runs.
    pub fn oracle_trials(&self) -> u64 {
        if !self.oracle_enabled() {
            return 0;
        }
        if self.config.decoders.contains(&DecoderKind::BruteForce) {
            self.config.trials_per_point
        } else {
            self.config
                .trials_per_point
                .min(self.config.max_trials_bruteforce)
        }
    }

    fn decode_options(&self) -> DecodeOptions {
        DecodeOptions {
            early_termination: true,
            allow_large_m: self.config.allow_bruteforce_large_m,
        }
    }

    /// One channel, payload and noise draw, decoded by every enabled decoder.
    pub fn run_trial(&self, snr_db: f64, trial: u64) -> Result<TrialOutcome> {
        let noise = NoiseConfig::new(snr_db)?;
        let inst = draw_instance(
            &self.constellation,
            &self.generator,
            &noise,
            self.config.master_seed,
            trial,
        )?;
        let opts = self.decode_options();
        let c = &self.constellation;

        let results = self
            .config
            .decoders
            .iter()
            .map(|k| k.decode(&inst.y, &inst.h_eq, c, &opts))
            .collect::<Result<Vec<_>>>()?;

        let oracle: Option<LevelIndices> = if trial < self.oracle_trials() {
            match self
                .config
                .decoders
                .iter()
                .position(|&k| k == DecoderKind::BruteForce)
            {
                Some(i) => Some(results[i].indices),
                None => Some(decoders::ml_bruteforce(&inst.y, &inst.h_eq, c, &opts)?.indices),
            }
        } else {
            None
        };

        let mut decoded_bits = Vec::with_capacity(c.bits_per_codeword());
        let decoders = results
            .iter()
            .map(|r| {
                decoded_bits.clear();
                c.indices_to_bits(&r.indices, &mut decoded_bits);
                let bit_errors = decoded_bits
                    .iter()
                    .zip(&inst.bits)
                    .filter(|(a, b)| a != b)
                    .count() as u64;
                DecoderOutcome {
                    bit_errors,
                    nodes: r.nodes,
                    mismatch: oracle.map(|o| o != r.indices),
                }
            })
            .collect();
        Ok(TrialOutcome {
            decoders,
            redraws: inst.redraws,
        })
    }

    /// All trials at one SNR, aggregated per decoder.
    pub fn run_point(&self, snr_db: f64) -> Result<(Vec<ResultRow>, u64)> {
        let outcomes = (0..self.config.trials_per_point)
            .into_par_iter()
            .map(|t| self.run_trial(snr_db, t))
            .collect::<Result<Vec<_>>>()?;
        let trials = self.config.trials_per_point;
        let bits_per_trial = self.constellation.bits_per_codeword() as u64;
        let oracle_ran = self.oracle_trials() > 0;
        let rows = self
            .config
            .decoders
            .iter()
            .enumerate()
            .map(|(i, &decoder)| {
                let mut bit_errors = 0u64;
                let mut total = 0u64;
                let mut delay = 0u64;
                let mut max_delay = 0u64;
                let mut overhead = 0u64;
                let mut mismatches = 0u64;
                for o in &outcomes {
                    let d = &o.decoders[i];
                    bit_errors += d.bit_errors;
                    total += d.nodes.total_nodes;
                    delay += d.nodes.delay_nodes;
                    max_delay = max_delay.max(d.nodes.delay_nodes);
                    overhead += d.nodes.overhead_nodes;
                    mismatches += u64::from(d.mismatch == Some(true));
                }
                ResultRow {
                    snr_db,
                    decoder,
                    trials,
                    bit_errors,
                    ber: bit_errors as f64 / (trials * bits_per_trial) as f64,
                    avg_total_nodes: total as f64 / trials as f64,
                    avg_delay_nodes: delay as f64 / trials as f64,
                    max_delay_nodes: max_delay,
                    avg_overhead_nodes: overhead as f64 / trials as f64,
                    mismatches_vs_oracle: oracle_ran.then_some(mismatches),
                }
            })
            .collect();
        let redraws = outcomes.iter().map(|o| o.redraws as u64).sum();
        Ok((rows, redraws))
    }

    /// Every configured SNR point, on a pool of `workers` threads.
    pub fn run_sweep(&self) -> Result<SweepResult> {
        let run = || -> Result<SweepResult> {
            let mut rows = Vec::new();
            let mut redraws = 0;
            for &snr in &self.config.snr_db {
                let (r, n) = self.run_point(snr)?;
                rows.extend(r);
                redraws += n;
            }
            Ok(SweepResult { rows, redraws })
        };
        if self.config.workers == 0 {
            return run();
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(run)
    }
}

/// Validates `config`, runs it and writes the CSV to `config.output` if set.
pub fn run_sweep(config: &SimConfig) -> Result<SweepResult> {
    let sim = Simulator::new(config.clone())?;
    let result = sim.run_sweep()?;
    if let Some(path) = &config.output {
        write_csv_file(path, &result.rows)?;
    }
    Ok(result)
}

/// `%.6g`-style formatting.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!(
            "{}e{sign}{:02}",
            trim_zeros(mantissa.to_string()),
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_csv<W: Write>(w: W, rows: &[ResultRow]) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        out.write_record([
            format_sig6(r.snr_db),
            r.decoder.to_string(),
            r.trials.to_string(),
            r.bit_errors.to_string(),
            format_sig6(r.ber),
            format_sig6(r.avg_total_nodes),
            format_sig6(r.avg_delay_nodes),
            r.max_delay_nodes.to_string(),
            r.mismatches_vs_oracle
                .map(|m| m.to_string())
                .unwrap_or_default(),
        ])?;
    }
    out.flush()
}

pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

pub fn write_csv_file(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(&mut w, rows).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Fixed-width text table of sweep rows.
pub fn format_table(rows: &[ResultRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8} {:>11} {:>8} {:>12} {:>12} {:>12} {:>12} {:>10} {:>12} {:>10}",
        "snr_db",
        "decoder",
        "trials",
        "bit_errors",
        "ber",
        "avg_total",
        "avg_delay",
        "max_delay",
        "delay+ovh",
        "mismatch"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>8} {:>11} {:>8} {:>12} {:>12} {:>12} {:>12} {:>10} {:>12} {:>10}",
            format_sig6(r.snr_db),
            r.decoder.name(),
            r.trials,
            r.bit_errors,
            format_sig6(r.ber),
            format_sig6(r.avg_total_nodes),
            format_sig6(r.avg_delay_nodes),
            r.max_delay_nodes,
            format_sig6(r.avg_delay_nodes + r.avg_overhead_nodes),
            r.mismatches_vs_oracle
                .map(|m| m.to_string())
                .unwrap_or_else(|| "-".into()),
        );
    }
    s
}

/// Test hook for the verify command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Cyclically shift the entries of one generator column.
    ScrambleGeneratorColumn(usize),
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub report: StructureReport,
    pub channels: usize,
    pub redraws: u64,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

/// Draws `n` channels and checks the structure of `R` and `F`, the model
/// consistency of `H_eq`, the factorization residuals and the metric
/// decomposition used by the simplified decoder.
pub fn verify_structure_cmd(
    n: usize,
    seed: u64,
    tol: f64,
    fault: Option<Fault>,
) -> Result<VerifyOutcome> {
    if n == 0 {
        return Err(Error::config("verify needs at least one channel"));
    }
    let mut g = generator_matrix();
    if let Some(Fault::ScrambleGeneratorColumn(col)) = fault {
        if col >= 16 {
            return Err(Error::config(format!(
                "generator column {col} out of range"
            )));
        }
        let original = g.0.column(col).into_owned();
        let len = original.len();
        for k in 0..len {
            g.0[(k, col)] = original[(k + 1) % len];
        }
    }
    let c = QamConstellation::new(4)?;

    let mut report: Option<StructureReport> = None;
    let mut redraws = 0u64;
    for t in 0..n as u64 {
        let mut attempt = 0;
        let (h, mut rng, h_eq, qr) = loop {
            let mut rng = trial_stream(seed, f64::INFINITY, t, attempt);
            let h = draw_channel(&mut rng);
            let h_eq = equivalent_channel(&h, &g);
            match gram_schmidt_qr(&h_eq) {
                Ok(qr) => break (h, rng, h_eq, qr),
                Err(_) if attempt + 1 < MAX_REDRAWS => {
                    attempt += 1;
                    redraws += 1;
                }
                Err(e) => return Err(e),
            }
        };

        let mut rep = verify_structure(&qr, tol);

        let (orth, recon) = factorization_residuals(&qr, &h_eq);
        rep.record("QR orthogonality", (0, 0), orth);
        rep.record("QR reconstruction", (0, 0), recon);

        // H_eq path against the physical Y = H X path
        let bits: Vec<u8> = (0..c.bits_per_codeword())
            .map(|_| rng.random_range(0..2u8))
            .collect();
        let s = c.bits_to_symbols(&bits)?;
        let direct = realize_received(&(h.0 * encode(&s).0));
        let via_heq = h_eq * s.realized();
        let scale = direct.norm().max(1.0);
        rep.record(
            "model consistency",
            (0, 0),
            (direct - via_heq).amax() / scale,
        );

        let y = via_heq + Vec16::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let (split, rotation) = metric_split_errors(&qr, &y, &s.realized());
        rep.record("metric decomposition", (0, 0), split);
        rep.record("c rotation identity", (0, 0), rotation);

        match report.as_mut() {
            Some(r) => r.merge(rep),
            None => report = Some(rep),
        }
    }
    Ok(VerifyOutcome {
        report: report.expect("n >= 1"),
        channels: n,
        redraws,
    })
}

/// Relative errors of the four-term metric split and of the `c`-group rotation
/// identity `|v34 - R23 c|^2 = |u34 - F c|^2` for one `(y, s)`.
pub fn metric_split_errors(qr: &crate::QrFactors, y: &Vec16, s: &Vec16) -> (f64, f64) {
    let z = GroupedReceived::new(qr, y);
    let full = (z.z - qr.r * s).norm_squared();
    let group = |k: usize| -> Vec4 { s.fixed_rows::<4>(4 * k).into_owned() };
    let (a, b, c, d) = (group(0), group(1), group(2), group(3));
    let rb = |i, j| qr.block(i, j);
    let t78 = (z.part(3) - rb(3, 3) * d).norm_squared();
    let t56 = (z.part(2) - rb(2, 2) * c - rb(2, 3) * d).norm_squared();
    let t34 = (z.part(1) - rb(1, 1) * b - rb(1, 2) * c - rb(1, 3) * d).norm_squared();
    let t12 = (z.part(0) - rb(0, 0) * a - rb(0, 1) * b - rb(0, 3) * d).norm_squared();
    let split = (full - (t78 + t56 + t34 + t12)).abs() / full.max(1.0);

    let ef = qr_r23(&qr.r23());
    let cond = z.condition(qr, &ef, &b, &d);
    let lhs = (cond.v34 - rb(1, 2) * c).norm_squared();
    let rhs = (cond.u34 - ef.f * c).norm_squared();
    let rotation = (lhs - rhs).abs() / lhs.max(1.0);
    (split, rotation)
}

/// Human-readable dump of one instance through the simplified decoder.
pub fn decode_one_report(order: usize, snr_db: f64, seed: u64, trial: u64) -> Result<String> {
    let c = QamConstellation::new(order)?;
    let g = generator_matrix();
    let noise = NoiseConfig::new(snr_db)?;
    let inst = draw_instance(&c, &g, &noise, seed, trial)?;
    let qr = gram_schmidt_qr(&inst.h_eq)?;
    let ef = qr_r23(&qr.r23());
    let z = GroupedReceived::new(&qr, &inst.y);
    let mut trace = SimplifiedTrace::default();
    let (indices, nodes, fallback) = simplified_ml_decode_factored(
        &z,
        &qr,
        &ef,
        &c,
        &DecodeOptions::default(),
        Some(&mut trace),
    );

    let mut s = String::new();
    let _ = writeln!(
        s,
        "instance: M={order} snr={} dB seed={seed} trial={trial} redraws={}",
        format_sig6(snr_db),
        inst.redraws
    );
    let _ = writeln!(s, "n0 = {}", format_sig6(noise.n0()));
    let _ = writeln!(s, "z~ = [{}]", join(z.z.iter()));
    for (name, (i, j)) in [
        ("R11", (0, 0)),
        ("R12", (0, 1)),
        ("R13", (0, 2)),
        ("R14", (0, 3)),
        ("R22", (1, 1)),
        ("R23", (1, 2)),
        ("R24", (1, 3)),
        ("R33", (2, 2)),
        ("R34", (2, 3)),
        ("R44", (3, 3)),
    ] {
        let _ = writeln!(s, "{name} =\n{}", matrix_rows(&qr.block(i, j)));
    }
    let _ = writeln!(s, "F =\n{}", matrix_rows(&ef.f));
    let _ = writeln!(s, "sorted d (rank: indices eps78):");
    for (rank, (d, e)) in trace.sorted_d.iter().enumerate() {
        let _ = writeln!(s, "  {rank:>3}: {d:?} {}", format_sig6(*e));
    }
    match trace.stopped_at {
        Some(r) => {
            let _ = writeln!(s, "outer loop stopped at d rank {r}");
        }
        None => {
            let _ = writeln!(s, "outer loop visited every d");
        }
    }
    let _ = writeln!(
        s,
        "branch traces (d_rank d b | nodes a.re a.im c.re c.im | tau):"
    );
    for v in &trace.visits {
        let _ = writeln!(
            s,
            "  {:>3} {:?} {:?} | {} {} {} {} | {}{}",
            v.d_rank,
            v.d,
            v.b,
            v.branches[0].nodes,
            v.branches[1].nodes,
            v.branches[2].nodes,
            v.branches[3].nodes,
            format_sig6(v.tau),
            if v.updated { "  <- incumbent" } else { "" }
        );
    }
    let truth: Vec<usize> = inst
        .symbols
        .realized()
        .iter()
        .map(|&v| c.pam().index_of(v, 1e-9).expect("constellation level"))
        .collect();
    let _ = writeln!(s, "transmitted indices: {truth:?}");
    let _ = writeln!(s, "decoded indices:     {indices:?}");
    let _ = writeln!(
        s,
        "metric = {}",
        format_sig6(decoders::ml_metric(&inst.y, &inst.h_eq, &c, &indices))
    );
    let _ = writeln!(
        s,
        "nodes: total {} delay {} overhead {} branches {:?}{}",
        nodes.total_nodes,
        nodes.delay_nodes,
        nodes.overhead_nodes,
        nodes.branch_nodes,
        if fallback { " (c-group fallback)" } else { "" }
    );
    Ok(s)
}

fn join<'a>(it: impl Iterator<Item = &'a f64>) -> String {
    it.map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ")
}

fn matrix_rows(m: &crate::Mat4) -> String {
    m.row_iter()
        .map(|r| {
            format!(
                "  [{}]",
                r.iter()
                    .map(|v| format!("{v:>10.6}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(10.0), "10");
        assert_eq!(format_sig6(2738.9), "2738.9");
        assert_eq!(format_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e+06");
        assert_eq!(format_sig6(0.000123456), "0.000123456");
        assert_eq!(format_sig6(1.5e-7), "1.5e-07");
        assert_eq!(format_sig6(-2.5), "-2.5");
        assert_eq!(format_sig6(f64::INFINITY), "inf");
    }

    #[test]
    fn snr_lists() {
        assert_eq!(parse_snr_list("0,5,10").unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(
            parse_snr_list("0:20:5").unwrap(),
            vec![0.0, 5.0, 10.0, 15.0, 20.0]
        );
        assert_eq!(parse_snr_list("inf").unwrap(), vec![f64::INFINITY]);
        assert!(parse_snr_list("").is_err());
        assert!(parse_snr_list("0:10:0").is_err());
        assert!(parse_snr_list("abc").is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.decoders.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig {
            order: 8,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.order = 4;
        cfg.trials_per_point = 0;
        assert!(cfg.validate().is_err());
        let cfg = SimConfig {
            decoders: vec![DecoderKind::BruteForce],
            trials_per_point: 1000,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig {
            order: 16,
            decoders: vec![DecoderKind::BruteForce],
            trials_per_point: 1,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_keys() {
        let mut cfg = SimConfig::default();
        cfg.apply("m", "16").unwrap();
        cfg.apply("snr", "0:10:5").unwrap();
        cfg.apply("decoders", "sphere,simplified,bruteforce")
            .unwrap();
        cfg.apply("allow_bruteforce_large_m", "true").unwrap();
        cfg.apply("workers", "2").unwrap();
        assert_eq!(cfg.order, 16);
        assert_eq!(cfg.snr_db, vec![0.0, 5.0, 10.0]);
        assert_eq!(cfg.decoders.len(), 3);
        assert!(cfg.allow_bruteforce_large_m);
        assert!(cfg.apply("bogus", "1").is_err());
        assert!(cfg.apply("trials", "many").is_err());
    }

    #[test]
    fn toml_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sim.toml");
        std::fs::write(
            &path,
            "m = 16\nsnr = [0, 7.5]\ndecoders = \"sphere\"\nallow-bruteforce-large-m = true\n",
        )
        .unwrap();
        let mut cfg = SimConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.order, 16);
        assert_eq!(cfg.snr_db, vec![0.0, 7.5]);
        assert_eq!(cfg.decoders, vec![DecoderKind::Sphere]);
        assert!(cfg.allow_bruteforce_large_m);
        std::fs::write(&path, "m = { a = 1 }").unwrap();
        assert!(cfg.apply_file(&path).is_err());
        std::fs::write(&path, "not toml at all = = =").unwrap();
        assert!(cfg.apply_file(&path).is_err());
        assert!(cfg.apply_file(&dir.path().join("missing.toml")).is_err());
    }

    #[test]
    fn instances_are_deterministic() {
        let c = QamConstellation::new(4).unwrap();
        let g = generator_matrix();
        let noise = NoiseConfig::new(5.0).unwrap();
        let a = draw_instance(&c, &g, &noise, 9, 17).unwrap();
        let b = draw_instance(&c, &g, &noise, 9, 17).unwrap();
        let other = draw_instance(&c, &g, &noise, 9, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.channel, other.channel);
        assert_eq!(a.bits.len(), 16);
    }

    #[test]
    fn verify_rejects_zero_channels() {
        assert!(verify_structure_cmd(0, 1, 1e-9, None).is_err());
    }

    #[test]
    fn verify_passes_and_catches_a_scrambled_generator() {
        let ok = verify_structure_cmd(40, 3, 1e-9, None).unwrap();
        assert!(ok.passed(), "{}", ok.report);
        assert!(ok.report.check("model consistency").unwrap().max_violation < 1e-12);
        let bad =
            verify_structure_cmd(5, 3, 1e-9, Some(Fault::ScrambleGeneratorColumn(5))).unwrap();
        assert!(!bad.passed());
        assert!(bad
            .report
            .violations
            .iter()
            .any(|v| v.check == "model consistency"));
        assert!(bad.report.to_string().contains("FAIL"));
    }

    #[test]
    fn sweep_is_independent_of_worker_count() {
        let base = SimConfig {
            snr_db: vec![0.0, 10.0],
            trials_per_point: 60,
            max_trials_bruteforce: 20,
            master_seed: 77,
            ..SimConfig::default()
        };
        let one = Simulator::new(SimConfig {
            workers: 1,
            ..base.clone()
        })
        .unwrap()
        .run_sweep()
        .unwrap();
        let four = Simulator::new(SimConfig { workers: 4, ..base })
            .unwrap()
            .run_sweep()
            .unwrap();
        assert_eq!(csv_string(&one.rows), csv_string(&four.rows));
        assert_eq!(one.rows.len(), 4);
        for r in &one.rows {
            assert_eq!(r.mismatches_vs_oracle, Some(0));
        }
        // both decoders are exact, so they make the same bit errors
        assert_eq!(one.rows[0].bit_errors, one.rows[1].bit_errors);
    }

    #[test]
    fn oracle_column_is_empty_without_oracle() {
        let cfg = SimConfig {
            order: 16,
            snr_db: vec![20.0],
            trials_per_point: 3,
            ..SimConfig::default()
        };
        let out = run_sweep(&cfg).unwrap();
        assert!(out.rows.iter().all(|r| r.mismatches_vs_oracle.is_none()));
        let csv = csv_string(&out.rows);
        assert!(csv.starts_with(CSV_HEADER));
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
    }
}
