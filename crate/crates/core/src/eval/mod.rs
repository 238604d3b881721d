//! Corpus evaluation: success and execution rates over repeated runs,
//! stage-time shares, and iteration-budget sweeps.

mod corpus;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{Corpus, CorpusEntry};

use crate::pipeline::{run, Ablations, Input, PipelineConfig, Timings};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("corpus manifest: {0}")]
    Manifest(String),
    #[error("corpus files failed to load: {}", .0.iter().map(|(f, e)| format!("{f}: {e}")).collect::<Vec<_>>().join("; "))]
    CorpusLoad(Vec<(String, String)>),
    #[error("at least one repetition is required")]
    NoRepetitions,
    #[error("sweep lists must be nonempty")]
    EmptySweep,
}

/// Per-run outcomes for one problem: `v` is feasibility of the final
/// point, `q` is whether any solve executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetrics {
    pub name: String,
    pub v: Vec<u8>,
    pub q: Vec<u8>,
}

impl ProblemMetrics {
    fn mean(xs: &[u8]) -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        xs.iter().map(|&b| f64::from(b)).sum::<f64>() / xs.len() as f64
    }

    pub fn success_rate(&self) -> f64 {
        Self::mean(&self.v)
    }

    pub fn execution_rate(&self) -> f64 {
        Self::mean(&self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub max_ecl: usize,
    pub max_fdc: usize,
    pub eps: f64,
    pub ablations: Ablations,
    pub seed: u64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub corpus: String,
    pub config: ConfigSnapshot,
    pub problems: Vec<ProblemMetrics>,
    pub sr: f64,
    pub er: f64,
    /// Mean seconds per run and stage.
    pub mean_timings: Timings,
}

impl MetricsReport {
    /// Aggregates per-problem outcomes: each rate is the mean over problems
    /// of the per-problem mean over repetitions.
    pub fn from_outcomes(
        corpus: &str,
        config: ConfigSnapshot,
        problems: Vec<ProblemMetrics>,
        mean_timings: Timings,
    ) -> Self {
        let n = problems.len().max(1) as f64;
        let sr = problems
            .iter()
            .map(ProblemMetrics::success_rate)
            .sum::<f64>()
            / n;
        let er = problems
            .iter()
            .map(ProblemMetrics::execution_rate)
            .sum::<f64>()
            / n;
        MetricsReport {
            corpus: corpus.to_string(),
            config,
            problems,
            sr,
            er,
            mean_timings,
        }
    }

    /// True when rates and every outcome array agree; timings are ignored.
    pub fn same_outcomes(&self, other: &MetricsReport) -> bool {
        self.sr == other.sr && self.er == other.er && self.problems == other.problems
    }

    /// One row per problem plus an `ALL` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("problem,repeats,success_rate,execution_rate\n");
        for p in &self.problems {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                p.name,
                p.v.len(),
                p.success_rate(),
                p.execution_rate()
            );
        }
        let _ = writeln!(out, "ALL,{},{},{}", self.config.repeats, self.sr, self.er);
        out
    }
}

fn snapshot(cfg: &PipelineConfig, seed: u64, repeats: usize) -> ConfigSnapshot {
    ConfigSnapshot {
        max_ecl: cfg.max_ecl,
        max_fdc: cfg.max_fdc,
        eps: cfg.eps,
        ablations: cfg.ablations,
        seed,
        repeats,
    }
}

struct EntryOutcome {
    metrics: ProblemMetrics,
    timings: Timings,
}

fn eval_entry(
    entry: &CorpusEntry,
    cfg: &PipelineConfig,
    repeats: usize,
    seed: u64,
) -> EntryOutcome {
    let mut metrics = ProblemMetrics {
        name: entry.name.clone(),
        v: Vec::with_capacity(repeats),
        q: Vec::with_capacity(repeats),
    };
    let mut timings = Timings::default();
    for r in 0..repeats {
        let mut cfg_r = cfg.clone();
        cfg_r.solve.seed = seed.wrapping_add(r as u64);
        let input = match (&entry.description, &cfg.gateway) {
            (Some(d), Some(_)) => Input::Description(d.clone()),
            _ => Input::Problem(entry.problem.clone()),
        };
        let res = run(input, &cfg_r);
        metrics.v.push(u8::from(res.success_flag));
        metrics.q.push(u8::from(res.execute_flag));
        add_timings(&mut timings, &res.timings);
    }
    EntryOutcome { metrics, timings }
}

fn add_timings(acc: &mut Timings, t: &Timings) {
    acc.formulate += t.formulate;
    acc.convexify += t.convexify;
    acc.solve += t.solve;
    acc.feasibility += t.feasibility;
    acc.ecl += t.ecl;
    acc.fdc += t.fdc;
}

fn scale_timings(t: &mut Timings, k: f64) {
    for v in [
        &mut t.formulate,
        &mut t.convexify,
        &mut t.solve,
        &mut t.feasibility,
        &mut t.ecl,
        &mut t.fdc,
    ] {
        *v *= k;
    }
}

#[cfg(not(target_arch = "wasm32"))]
fn eval_entries(c: &Corpus, cfg: &PipelineConfig, repeats: usize, seed: u64) -> Vec<EntryOutcome> {
    // problems are independent; results are collected in corpus order
    std::thread::scope(|s| {
        let handles: Vec<_> = c
            .entries
            .iter()
            .map(|e| s.spawn(move || eval_entry(e, cfg, repeats, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect()
    })
}

#[cfg(target_arch = "wasm32")]
fn eval_entries(c: &Corpus, cfg: &PipelineConfig, repeats: usize, seed: u64) -> Vec<EntryOutcome> {
    c.entries
        .iter()
        .map(|e| eval_entry(e, cfg, repeats, seed))
        .collect()
}

/// Runs every problem `repeats` times; repetition `r` uses solver seed
/// `seed + r`. Problems with a description are formulated through the
/// gateway when one is configured.
pub fn eval_corpus(
    c: &Corpus,
    cfg: &PipelineConfig,
    repeats: usize,
    seed: u64,
) -> Result<MetricsReport, EvalError> {
    if repeats == 0 {
        return Err(EvalError::NoRepetitions);
    }
    let outcomes = eval_entries(c, cfg, repeats, seed);
    let mut timings = Timings::default();
    for o in &outcomes {
        add_timings(&mut timings, &o.timings);
    }
    let runs = (repeats * outcomes.len()).max(1) as f64;
    scale_timings(&mut timings, 1.0 / runs);
    Ok(MetricsReport::from_outcomes(
        &c.name,
        snapshot(cfg, seed, repeats),
        outcomes.into_iter().map(|o| o.metrics).collect(),
        timings,
    ))
}

pub const STAGES: [&str; 6] = [
    "formulate",
    "convexify",
    "solve",
    "feasibility",
    "ecl",
    "fdc",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageShare {
    pub stage: String,
    pub seconds: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageShares {
    pub stages: Vec<StageShare>,
    pub warning: Option<String>,
}

impl StageShares {
    pub fn share(&self, stage: &str) -> Option<f64> {
        self.stages
            .iter()
            .find(|s| s.stage == stage)
            .map(|s| s.share)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<12} {:>12} {:>8}\n", "stage", "seconds", "share");
        for s in &self.stages {
            let _ = writeln!(
                out,
                "{:<12} {:>12.6} {:>7.1}%",
                s.stage,
                s.seconds,
                100.0 * s.share
            );
        }
        if let Some(w) = &self.warning {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

/// Fraction of total time per stage. All-zero input yields uniform shares
/// and a warning.
pub fn stage_shares(t: &Timings) -> StageShares {
    let secs = [
        t.formulate,
        t.convexify,
        t.solve,
        t.feasibility,
        t.ecl,
        t.fdc,
    ];
    let total: f64 = secs.iter().sum();
    let (warning, shares): (_, Vec<f64>) = if total > 0.0 {
        (None, secs.iter().map(|s| s / total).collect())
    } else {
        (
            Some("all stage timings are zero; shares are uniform".to_string()),
            vec![1.0 / secs.len() as f64; secs.len()],
        )
    };
    StageShares {
        stages: STAGES
            .iter()
            .zip(secs.iter().zip(shares))
            .map(|(name, (s, share))| StageShare {
                stage: name.to_string(),
                seconds: *s,
                share,
            })
            .collect(),
        warning,
    }
}

pub fn time_breakdown(r: &MetricsReport) -> StageShares {
    stage_shares(&r.mean_timings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub max_ecl: usize,
    pub max_fdc: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub cells: Vec<SweepCell>,
}

impl Sweep {
    pub fn cell(&self, max_ecl: usize, max_fdc: usize) -> Option<&MetricsReport> {
        self.cells
            .iter()
            .find(|c| c.max_ecl == max_ecl && c.max_fdc == max_fdc)
            .map(|c| &c.report)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("max_ecl,max_fdc,success_rate,execution_rate\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                c.max_ecl, c.max_fdc, c.report.sr, c.report.er
            );
        }
        out
    }
}

/// One evaluation per `(K, L)` pair, K varying slowest.
pub fn sweep_iterations(
    c: &Corpus,
    cfg: &PipelineConfig,
    ks: &[usize],
    ls: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<Sweep, EvalError> {
    if ks.is_empty() || ls.is_empty() {
        return Err(EvalError::EmptySweep);
    }
    let mut cells = Vec::with_capacity(ks.len() * ls.len());
    for &k in ks {
        for &l in ls {
            let cfg_kl = PipelineConfig {
                max_ecl: k,
                max_fdc: l,
                ..cfg.clone()
            };
            cells.push(SweepCell {
                max_ecl: k,
                max_fdc: l,
                report: eval_corpus(c, &cfg_kl, repeats, seed)?,
            });
        }
    }
    Ok(Sweep { cells })
}
