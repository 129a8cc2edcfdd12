use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    HttpSigned,
    HttpUnsigned,
    Mqtt,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::HttpSigned, Mode::HttpUnsigned, Mode::Mqtt];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::HttpSigned => "http-signed",
            Mode::HttpUnsigned => "http-unsigned",
            Mode::Mqtt => "mqtt",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected http-signed, http-unsigned or mqtt)"))
    }
}

/// Stage names in column order.
pub const STAGES: [&str; 5] = ["sign_ms", "transport_ms", "verify_ms", "emulator_ms", "total_ms"];

pub const CSV_HEADER: &str = "mode,iteration,sign_ms,transport_ms,verify_ms,emulator_ms,total_ms";

/// One round trip split into stages. `total_ms` is always the sum of the
/// other four.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub sign_ms: f64,
    pub transport_ms: f64,
    pub verify_ms: f64,
    pub emulator_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    /// Negative inputs (clock jitter on tiny stages) are clamped to zero.
    pub fn new(sign_ms: f64, transport_ms: f64, verify_ms: f64, emulator_ms: f64) -> Self {
        let [sign_ms, transport_ms, verify_ms, emulator_ms] =
            [sign_ms, transport_ms, verify_ms, emulator_ms].map(|v| v.max(0.0));
        StageTimings {
            sign_ms,
            transport_ms,
            verify_ms,
            emulator_ms,
            total_ms: sign_ms + transport_ms + verify_ms + emulator_ms,
        }
    }

    pub fn stage(&self, name: &str) -> Option<f64> {
        Some(match name {
            "sign_ms" => self.sign_ms,
            "transport_ms" => self.transport_ms,
            "verify_ms" => self.verify_ms,
            "emulator_ms" => self.emulator_ms,
            "total_ms" => self.total_ms,
            _ => return None,
        })
    }

    pub fn sum_holds(&self) -> bool {
        self.total_ms == self.sign_ms + self.transport_ms + self.verify_ms + self.emulator_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

impl Aggregate {
    /// Mean and nearest-rank percentiles. Empty input gives zeros.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Aggregate {
                mean: 0.0,
                p50: 0.0,
                p95: 0.0,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |pct: usize| sorted[(pct * sorted.len()).div_ceil(100).max(1) - 1];
        Aggregate {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p50: rank(50),
            p95: rank(95),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageAggregates {
    pub sign_ms: Aggregate,
    pub transport_ms: Aggregate,
    pub verify_ms: Aggregate,
    pub emulator_ms: Aggregate,
    pub total_ms: Aggregate,
}

impl StageAggregates {
    pub fn of(samples: &[StageTimings]) -> Self {
        let agg = |f: fn(&StageTimings) -> f64| Aggregate::of(&samples.iter().map(f).collect::<Vec<_>>());
        StageAggregates {
            sign_ms: agg(|s| s.sign_ms),
            transport_ms: agg(|s| s.transport_ms),
            verify_ms: agg(|s| s.verify_ms),
            emulator_ms: agg(|s| s.emulator_ms),
            total_ms: agg(|s| s.total_ms),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&Aggregate> {
        Some(match name {
            "sign_ms" => &self.sign_ms,
            "transport_ms" => &self.transport_ms,
            "verify_ms" => &self.verify_ms,
            "emulator_ms" => &self.emulator_ms,
            "total_ms" => &self.total_ms,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: Mode,
    pub iterations: usize,
    /// Name of the command sequence, e.g. `bulb-toggle`.
    pub command_mix: String,
    /// Request size on the wire for the reference command.
    pub payload_bytes: usize,
    pub samples: Vec<StageTimings>,
    pub aggregates: StageAggregates,
}

impl BenchReport {
    pub fn new(mode: Mode, command_mix: impl Into<String>, payload_bytes: usize, samples: Vec<StageTimings>) -> Self {
        BenchReport {
            mode,
            iterations: samples.len(),
            command_mix: command_mix.into(),
            payload_bytes,
            aggregates: StageAggregates::of(&samples),
            samples,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    pub fn from_json(raw: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(raw)
    }

    /// Header plus one row per iteration, numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record(CSV_HEADER.split(',')).expect("writing to memory");
        for (i, s) in self.samples.iter().enumerate() {
            out.write_record([
                self.mode.to_string(),
                (i + 1).to_string(),
                s.sign_ms.to_string(),
                s.transport_ms.to_string(),
                s.verify_ms.to_string(),
                s.emulator_ms.to_string(),
                s.total_ms.to_string(),
            ])
            .expect("writing to memory");
        }
        String::from_utf8(out.into_inner().expect("flushing to memory")).expect("csv output is ascii")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("reports are not comparable: {0}")]
pub struct IncomparableReports(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDelta {
    pub stage: String,
    pub a: Aggregate,
    pub b: Aggregate,
    /// `b - a` for each statistic.
    pub delta: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a_mode: Mode,
    pub b_mode: Mode,
    pub stages: Vec<StageDelta>,
    pub a_payload_bytes: usize,
    pub b_payload_bytes: usize,
    /// `b - a`.
    pub payload_delta: i64,
    pub verdicts: Vec<String>,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.verdicts {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

fn verdict(metric: &str, a: (Mode, f64), b: (Mode, f64), unit: &str) -> String {
    let diff = b.1 - a.1;
    if diff == 0.0 {
        return format!("{metric}: equal ({} {unit})", fmt_num(a.1));
    }
    let lower = if diff < 0.0 { b.0 } else { a.0 };
    format!(
        "{metric}: {lower} lower by {} {unit} ({} {}, {} {})",
        fmt_num(diff.abs()),
        a.0,
        fmt_num(a.1),
        b.0,
        fmt_num(b.1),
    )
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Per-stage and payload deltas of `b` relative to `a`.
pub fn compare_modes(a: &BenchReport, b: &BenchReport) -> Result<Comparison, IncomparableReports> {
    if a.command_mix != b.command_mix {
        return Err(IncomparableReports(format!(
            "command mixes differ ({} vs {})",
            a.command_mix, b.command_mix
        )));
    }
    if a.iterations != b.iterations {
        return Err(IncomparableReports(format!(
            "iteration counts differ ({} vs {})",
            a.iterations, b.iterations
        )));
    }
    let mut stages = Vec::new();
    let mut verdicts = Vec::new();
    for name in STAGES {
        let x = *a.aggregates.stage(name).expect("known stage");
        let y = *b.aggregates.stage(name).expect("known stage");
        let delta = Aggregate {
            mean: y.mean - x.mean,
            p50: y.p50 - x.p50,
            p95: y.p95 - x.p95,
        };
        verdicts.push(verdict(&format!("{name} p50"), (a.mode, x.p50), (b.mode, y.p50), "ms"));
        stages.push(StageDelta {
            stage: name.to_owned(),
            a: x,
            b: y,
            delta,
        });
    }
    verdicts.push(verdict(
        "payload_bytes",
        (a.mode, a.payload_bytes as f64),
        (b.mode, b.payload_bytes as f64),
        "bytes",
    ));
    Ok(Comparison {
        a_mode: a.mode,
        b_mode: b.mode,
        stages,
        a_payload_bytes: a.payload_bytes,
        b_payload_bytes: b.payload_bytes,
        payload_delta: b.payload_bytes as i64 - a.payload_bytes as i64,
        verdicts,
    })
}
