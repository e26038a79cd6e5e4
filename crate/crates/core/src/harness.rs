//! Seeded simulation runs, transcripts and rate sweeps.
//!
//! Every trial derives its own ChaCha20 streams from `(seed, trial)`, so a run
//! is reproducible and order-independent whether trials execute sequentially
//! or in parallel.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::audit::capacity;
use crate::coins::RngCoins;
use crate::error::{Error, Result};
use crate::field::{FieldElement, SymbolVector};
use crate::instance::{draw_instance, sample_database, Model, Params};
use crate::partition::Group;
use crate::pircsi::{Protocol, ServerQuery};
use crate::ratio::{self, Rational};

/// Independent randomness streams of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Database = 0,
    Instance = 1,
    /// Partition plan, direct request and server choice.
    Plan = 2,
    /// Symbol permutations of the PIR layer.
    Permutations = 3,
}

const STREAMS: u64 = 4;

pub fn trial_rng(seed: u64, trial: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial * STREAMS + stream as u64);
    rng
}

/// One server's exchange. Ticks are logical: 0 is the broadcast, then one
/// tick per message in send order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ServerExchange {
    pub server: usize,
    pub query: ServerQuery,
    pub answer: Vec<FieldElement>,
    pub query_tick: u64,
    pub answer_tick: u64,
}

/// What the servers see, jointly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ServerVisible {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub revealed_plan: Option<Vec<Group>>,
    pub servers: Vec<ServerExchange>,
}

/// User-private record, kept apart from the server-visible section.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UserRecord {
    pub demand: usize,
    pub support: Vec<usize>,
    pub coeffs: Vec<FieldElement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    pub recovered: SymbolVector,
    pub recovered_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transcript {
    pub params: Params,
    pub seed: u64,
    pub trial: u64,
    pub server_visible: ServerVisible,
    pub downloaded_symbols: usize,
    pub user: UserRecord,
}

impl Transcript {
    pub fn file_name(&self) -> String {
        format!("transcript-{}-{}.json", self.seed, self.trial)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

/// Runs trial `trial` of a seeded run.
pub fn run_trial(protocol: &Protocol, seed: u64, trial: u64) -> Result<Transcript> {
    let params = protocol.params();
    let db = sample_database(params, &mut trial_rng(seed, trial, Stream::Database));
    let inst = draw_instance(params, &mut RngCoins(trial_rng(seed, trial, Stream::Instance)));
    let session = protocol.retrieve(
        &inst,
        &db,
        &mut RngCoins(trial_rng(seed, trial, Stream::Plan)),
        &mut RngCoins(trial_rng(seed, trial, Stream::Permutations)),
    )?;
    let mut tick = 0;
    let servers = session
        .views
        .iter()
        .zip(&session.answers)
        .enumerate()
        .map(|(server, (view, answer))| {
            tick += 2;
            ServerExchange {
                server,
                query: view.query.clone(),
                answer: answer.clone(),
                query_tick: tick - 1,
                answer_tick: tick,
            }
        })
        .collect();
    let recovered_ok = Some(&session.recovered) == db.message(inst.demand);
    Ok(Transcript {
        params: *params,
        seed,
        trial,
        server_visible: ServerVisible {
            revealed_plan: session.plan.as_ref().map(|p| p.revealed.clone()),
            servers,
        },
        downloaded_symbols: session.downloaded(),
        user: UserRecord {
            demand: inst.demand,
            support: inst.support,
            coeffs: inst.coeffs,
            target: session.plan.map(|p| p.target),
            recovered: session.recovered,
            recovered_ok,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub config: String,
    pub seed: u64,
    pub trials: u64,
    pub recovered: u64,
    pub downloaded_symbols: usize,
    pub message_len: usize,
    #[serde(with = "ratio::as_fraction")]
    pub measured_rate: Rational,
    #[serde(with = "ratio::as_fraction")]
    pub capacity: Rational,
    #[serde(rename = "match")]
    pub matches: bool,
}

impl RunSummary {
    pub fn all_recovered(&self) -> bool {
        self.recovered == self.trials
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub transcripts: Vec<Transcript>,
}

/// Runs `trials` seeded retrievals.
pub fn run(params: Params, seed: u64, trials: u64, parallel: bool) -> Result<RunOutput> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    let protocol = Protocol::new(params)?;
    let transcripts: Vec<Transcript> = if parallel {
        (0..trials)
            .into_par_iter()
            .map(|t| run_trial(&protocol, seed, t))
            .collect::<Result<_>>()?
    } else {
        (0..trials).map(|t| run_trial(&protocol, seed, t)).collect::<Result<_>>()?
    };
    let downloaded = transcripts.iter().map(|t| t.downloaded_symbols).max().unwrap_or(0);
    let measured_rate = ratio::rat(params.msg_len as i64, downloaded as i64);
    let capacity = capacity(&params);
    let summary = RunSummary {
        config: params.label(),
        seed,
        trials,
        recovered: transcripts.iter().filter(|t| t.user.recovered_ok).count() as u64,
        downloaded_symbols: downloaded,
        message_len: params.msg_len,
        matches: measured_rate == capacity,
        measured_rate,
        capacity,
    };
    Ok(RunOutput { summary, transcripts })
}

/// Grid of configurations for rate sweeps.
///
/// Textual form: `;`-separated `key=values` with keys `N`, `K`, `M`, `model`, `q`;
/// values are `a..b` (inclusive) or comma lists. `M` defaults to every valid
/// side-information size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub servers: Vec<usize>,
    pub messages: Vec<usize>,
    pub side_sizes: Option<Vec<usize>>,
    pub models: Vec<Model>,
    pub q: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            servers: (1..=3).collect(),
            messages: (2..=6).collect(),
            side_sizes: None,
            models: vec![Model::I, Model::II],
            q: 3,
        }
    }
}

fn parse_values(key: &str, v: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidParams(format!("bad value list {v:?} for {key}"));
    if let Some((a, b)) = v.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..=b).collect());
    }
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut grid = GridSpec::default();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidParams(format!("expected key=value, got {part:?}")))?;
            let key = key.trim();
            match key {
                "N" => grid.servers = parse_values(key, value)?,
                "K" => grid.messages = parse_values(key, value)?,
                "M" => grid.side_sizes = Some(parse_values(key, value)?),
                "model" => {
                    grid.models = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|m| m.trim().parse())
                        .collect::<Result<_>>()?
                }
                "q" => {
                    grid.q = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::InvalidParams(format!("bad field order {value:?}")))?
                }
                other => return Err(Error::InvalidParams(format!("unknown grid key {other:?}"))),
            }
        }
        Ok(grid)
    }
}

impl GridSpec {
    /// Every valid configuration, ordered by model, N, K, M.
    pub fn cells(&self) -> Result<Vec<Params>> {
        let mut out = Vec::new();
        for &model in &self.models {
            for &n in &self.servers {
                for &k in &self.messages {
                    let valid: Vec<usize> = match model {
                        Model::I => (0..k).collect(),
                        Model::II => (2..=k).collect(),
                    };
                    for m in valid {
                        if self.side_sizes.as_ref().is_some_and(|ms| !ms.contains(&m)) {
                            continue;
                        }
                        // skip cells the parameter rules reject (e.g. N = 0)
                        if let Ok(p) = Params::new(model, n, k, m, self.q) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub model: Model,
    #[serde(with = "ratio::as_fraction")]
    pub measured_rate: Rational,
    #[serde(with = "ratio::as_fraction")]
    pub capacity: Rational,
    pub matches: bool,
}

impl BenchRow {
    fn from_summary(params: &Params, s: &RunSummary) -> Self {
        Self {
            n: params.n_servers,
            k: params.n_messages,
            m: params.side_size,
            model: params.model,
            measured_rate: s.measured_rate.clone(),
            capacity: s.capacity.clone(),
            matches: s.matches && s.all_recovered(),
        }
    }
}

/// One run per grid cell; a cell matches when every trial recovers and the
/// rate equals capacity.
pub fn sweep(grid: &GridSpec, trials: u64, seed: u64, parallel: bool) -> Result<Vec<BenchRow>> {
    let cells = grid.cells()?;
    let one = |p: &Params| run(*p, seed, trials, false).map(|o| BenchRow::from_summary(p, &o.summary));
    if parallel {
        cells.par_iter().map(one).collect()
    } else {
        cells.iter().map(one).collect()
    }
}

pub const CSV_HEADER: &str = "N,K,M,model,measured_rate,capacity,match";

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n,
            r.k,
            r.m,
            r.model,
            ratio::to_fraction_string(&r.measured_rate),
            ratio::to_fraction_string(&r.capacity),
            r.matches
        );
    }
    out
}
