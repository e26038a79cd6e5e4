//! Capacity formulas, exact privacy audits and rate measurement.
//!
//! The exhaustive audit drives the real protocol code with an [`Explorer`]
//! over every `(W, S, C)` and every user coin path. It splits the user's
//! randomness in two stages: the partition plan (or direct request), and the
//! PIR layer's symbol permutations, which depend on the plan only through the
//! target super-message. For each server the joint posterior of a view
//! `(plan view, request list)` is then `sum_t mass[plan view][t][W] * L[t][list]`.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coins::{explore, Coins, Explorer, RngCoins};
use crate::error::{Error, Result};
use crate::field::FieldElement;
use crate::instance::{
    draw_instance, enumerate_instances, sample_database, Instance, Model, Params, ProtocolPath,
};
use crate::pircsi::{Protocol, ServerQuery, ServerView, Stage};
use crate::ratio::{self, Rational};
use crate::sunjafar;

pub const DEFAULT_CAP: u128 = 10_000_000;
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Total-variation bound for the sampled audit.
pub fn sampled_threshold() -> Rational {
    ratio::rat(1, 100)
}

pub fn capacity_model_i(n_servers: usize, n_messages: usize, side_size: usize) -> Result<Rational> {
    if n_servers < 1 || n_messages < 1 || side_size + 1 > n_messages {
        return Err(Error::InvalidParams(format!(
            "model I capacity needs N >= 1 and 0 <= M <= K-1, got N={n_servers}, K={n_messages}, M={side_size}"
        )));
    }
    let r = n_messages.div_ceil(side_size + 1);
    let n = ratio::int(n_servers as u128);
    let mut sum = ratio::zero();
    let mut term = ratio::one();
    for _ in 0..r {
        sum += &term;
        term /= &n;
    }
    Ok(sum.recip())
}

pub fn capacity_model_ii(n_servers: usize, n_messages: usize, side_size: usize) -> Result<Rational> {
    if n_servers < 1 || side_size < 2 || side_size > n_messages {
        return Err(Error::InvalidParams(format!(
            "model II capacity needs N >= 1 and 2 <= M <= K, got N={n_servers}, K={n_messages}, M={side_size}"
        )));
    }
    if side_size == 2 || side_size == n_messages {
        Ok(ratio::one())
    } else {
        Ok(ratio::rat(n_servers as i64, n_servers as i64 + 1))
    }
}

pub fn capacity(params: &Params) -> Rational {
    let (n, k, m) = (params.n_servers, params.n_messages, params.side_size);
    match params.model {
        Model::I => capacity_model_i(n, k, m),
        Model::II => capacity_model_ii(n, k, m),
    }
    .expect("validated params")
}

/// `msg_len / max downloaded symbols` over `trials` random retrievals; every
/// retrieval must recover the demand.
pub fn measure_rate(protocol: &Protocol, trials: usize, seed: u64) -> Result<Rational> {
    if trials == 0 {
        return Err(Error::InvalidParams("need at least one trial".into()));
    }
    let params = protocol.params();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0usize;
    for t in 0..trials {
        let db = sample_database(params, &mut rng);
        let inst = draw_instance(params, &mut RngCoins(&mut rng));
        let mut perm_rng = ChaCha20Rng::from_rng(&mut rng);
        let s = protocol.retrieve(&inst, &db, &mut RngCoins(&mut rng), &mut RngCoins(&mut perm_rng))?;
        if Some(&s.recovered) != db.message(inst.demand) {
            return Err(Error::RecoveryFailed(format!("{} trial {t}", params.label())));
        }
        worst = worst.max(s.downloaded());
    }
    Ok(ratio::rat(params.msg_len as i64, worst as i64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditMode {
    Exhaustive,
    Sampled,
    /// Exhaustive when within the cap, sampled otherwise.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditStatus {
    Exact,
    /// Downgraded: statistical check only.
    Sampled,
}

#[derive(Clone, Debug)]
pub struct AuditOptions {
    pub mode: AuditMode,
    pub cap: u128,
    pub samples: usize,
    pub seed: u64,
    pub rate_trials: usize,
    /// Search indistinguishability witnesses (exhaustive mode only).
    pub witnesses: bool,
    /// List every view instead of grouping views by posterior.
    pub list_views: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            mode: AuditMode::Auto,
            cap: DEFAULT_CAP,
            samples: DEFAULT_SAMPLES,
            seed: 0,
            rate_trials: 16,
            witnesses: false,
            list_views: false,
        }
    }
}

/// Views that share one posterior.
#[derive(Clone, Debug, Serialize)]
pub struct PosteriorClass {
    #[serde(with = "ratio::as_fraction_vec")]
    pub posterior: Vec<Rational>,
    pub views: u64,
    pub example: ServerView,
}

#[derive(Clone, Debug, Serialize)]
pub struct ViewPosterior {
    pub view: ServerView,
    /// Request lists with the same likelihoods as `view`'s.
    pub equivalent_lists: u64,
    #[serde(with = "ratio::as_fraction_vec")]
    pub posterior: Vec<Rational>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ServerPosteriors {
    pub server: usize,
    pub classes: Vec<PosteriorClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub views: Option<Vec<ViewPosterior>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub support: Vec<usize>,
    pub coeffs: Vec<FieldElement>,
}

/// Outcome of the witness search for one `(W, S, C, W')`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessEntry {
    pub demand: usize,
    pub support: Vec<usize>,
    pub coeffs: Vec<FieldElement>,
    pub alt_demand: usize,
    /// `None` flags a counterexample.
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub config: String,
    pub params: Params,
    pub path: ProtocolPath,
    pub status: AuditStatus,
    pub private: bool,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_fraction")]
    pub max_deviation: Option<Rational>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_fraction")]
    pub sampled_tv: Option<Rational>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explored_paths: Option<u64>,
    pub per_server_posteriors: Vec<ServerPosteriors>,
    #[serde(with = "ratio::as_fraction")]
    pub measured_rate: Rational,
    #[serde(with = "ratio::as_fraction")]
    pub capacity: Rational,
    pub rate_matches: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witnesses_complete: Option<bool>,
    pub witnesses: Vec<WitnessEntry>,
}

fn opt_fraction<S: serde::Serializer>(r: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => ratio::as_fraction::serialize(r, s),
        None => s.serialize_none(),
    }
}

/// Coins that follow an RNG and multiply up the branching along the way.
struct BranchCounter<R> {
    rng: R,
    paths: f64,
}

impl<R: Rng> Coins for BranchCounter<R> {
    fn uniform(&mut self, n: usize) -> usize {
        self.paths *= n as f64;
        self.rng.random_range(0..n)
    }

    fn weighted(&mut self, weights: &[u128]) -> usize {
        self.paths *= weights.iter().filter(|&&w| w > 0).count() as f64;
        RngCoins(&mut self.rng).weighted(weights)
    }
}

/// Interned first-stage views.
#[derive(Default)]
struct Interner {
    ids: HashMap<Vec<u32>, u32>,
    views: Vec<ServerView>,
}

impl Interner {
    fn id(&mut self, view: &ServerView) -> u32 {
        let key = view.key();
        if let Some(&id) = self.ids.get(&key) {
            return id;
        }
        let id = self.views.len() as u32;
        self.ids.insert(key, id);
        self.views.push(view.clone());
        id
    }
}

/// Request lists that share one likelihood vector over targets.
struct ListClass {
    likelihood: Vec<Rational>,
    lists: u64,
    example: Option<ServerQuery>,
}

/// Per-instance first-stage masses: server -> view -> target -> mass.
type InstanceMass = Vec<BTreeMap<u32, Vec<Rational>>>;

/// First-stage leaves of one instance: all server views, target, mass.
type StageLeaves = Vec<(Vec<ServerView>, usize, Rational)>;

/// Request list key -> (example query, likelihood per target).
type ListTable = BTreeMap<Vec<u32>, (ServerQuery, Vec<Rational>)>;

/// Mass of each (server, view id, list class) under one instance.
type Fingerprint = Vec<((usize, u32, usize), Rational)>;

struct Exhaustive {
    interner: Interner,
    per_instance: Vec<InstanceMass>,
    classes: Vec<Vec<ListClass>>,
    targets: usize,
    paths: u64,
}

fn check_cap(count: f64, cap: u128) -> Result<()> {
    if !count.is_finite() || count > cap as f64 {
        let shown = if count.is_finite() && count < u128::MAX as f64 { count as u128 } else { u128::MAX };
        return Err(Error::CapExceeded { count: shown, cap });
    }
    Ok(())
}

fn run_exhaustive(protocol: &Protocol, cap: u128, seed: u64) -> Result<Exhaustive> {
    let params = protocol.params();
    let n = params.n_servers;
    let instances = enumerate_instances(params, cap)?;

    // rough path count from one random path per sampled instance
    let targets = params.super_count();
    let mut est_rng = ChaCha20Rng::seed_from_u64(seed);
    let mut stage1 = 0f64;
    for inst in instances.iter().take(8) {
        let mut bc = BranchCounter { rng: &mut est_rng, paths: 1.0 };
        protocol.plan_stage(inst, &mut bc)?;
        stage1 = stage1.max(bc.paths);
    }
    let mut estimate = stage1 * instances.len() as f64;
    if matches!(params.path(), ProtocolPath::Partition | ProtocolPath::ModifiedPartition) {
        let len = sunjafar::symbol_len(n, targets)?;
        let fact: f64 = (1..=len).map(|i| i as f64).product();
        estimate += targets as f64 * fact.powi(targets as i32);
    }
    check_cap(estimate, cap)?;

    let counter = AtomicU64::new(0);
    let cap64 = u64::try_from(cap).unwrap_or(u64::MAX);
    let bump = || -> Result<()> {
        let c = counter.fetch_add(1, Ordering::Relaxed) + 1;
        if c > cap64 {
            return Err(Error::CapExceeded { count: c as u128, cap });
        }
        Ok(())
    };

    let mut interner = Interner::default();
    let mut per_instance = Vec::with_capacity(instances.len());
    for chunk in instances.chunks(64) {
        let results: Vec<Result<StageLeaves>> = chunk
            .par_iter()
            .map(|inst| {
                let mut leaves: HashMap<(Vec<u32>, usize), (Vec<ServerView>, Rational)> = HashMap::new();
                explore(
                    cap,
                    |ex: &mut Explorer| {
                        bump()?;
                        protocol.plan_stage(inst, ex)
                    },
                    |stage: Stage, p| {
                        let views = stage.views_without_requests(n);
                        let key: Vec<u32> = views
                            .iter()
                            .flat_map(|v| {
                                let mut k = v.key();
                                k.push(u32::MAX - 1);
                                k
                            })
                            .collect();
                        leaves
                            .entry((key, stage.target()))
                            .and_modify(|e| e.1 += &p)
                            .or_insert((views, p));
                    },
                )?;
                // fixed order keeps interned ids, and so report order, reproducible
                let mut out: Vec<_> = leaves.into_iter().collect();
                out.sort_unstable_by(|a, b| a.0.cmp(&b.0));
                Ok(out.into_iter().map(|((_, t), (v, p))| (v, t, p)).collect())
            })
            .collect();
        for res in results {
            let mut mass: InstanceMass = vec![BTreeMap::new(); n];
            for (views, target, p) in res? {
                for (server, v) in views.iter().enumerate() {
                    let id = interner.id(v);
                    let slot = mass[server].entry(id).or_insert_with(|| vec![ratio::zero(); targets]);
                    slot[target] += &p;
                }
            }
            per_instance.push(mass);
        }
    }

    let classes = match params.path() {
        ProtocolPath::Partition | ProtocolPath::ModifiedPartition => {
            let mut lists: Vec<ListTable> = vec![BTreeMap::new(); n];
            for target in 0..targets {
                explore(
                    cap,
                    |ex: &mut Explorer| {
                        bump()?;
                        sunjafar::plan_queries(n, targets, target, ex)
                    },
                    |bundle, p| {
                        for (server, reqs) in bundle.per_server.into_iter().enumerate() {
                            let query = ServerQuery::Symbols { requests: reqs };
                            let key = ServerView { groups: None, query: query.clone() }.key();
                            let e = lists[server]
                                .entry(key)
                                .or_insert_with(|| (query, vec![ratio::zero(); targets]));
                            e.1[target] += &p;
                        }
                    },
                )?;
            }
            lists
                .into_iter()
                .map(|per| {
                    let mut by_vec: BTreeMap<Vec<Rational>, ListClass> = BTreeMap::new();
                    for (_, (query, lik)) in per {
                        by_vec
                            .entry(lik.clone())
                            .or_insert_with(|| ListClass {
                                likelihood: lik,
                                lists: 0,
                                example: Some(query),
                            })
                            .lists += 1;
                    }
                    by_vec.into_values().collect()
                })
                .collect()
        }
        ProtocolPath::Pair | ProtocolPath::Full => (0..n)
            .map(|_| {
                vec![ListClass {
                    likelihood: vec![ratio::one()],
                    lists: 1,
                    example: None,
                }]
            })
            .collect(),
    };

    Ok(Exhaustive {
        interner,
        per_instance,
        classes,
        targets,
        paths: counter.load(Ordering::Relaxed),
    })
}

fn mix(mass: &[Rational], likelihood: &[Rational]) -> Rational {
    mass.iter().zip(likelihood).map(|(m, l)| m * l).sum()
}

fn example_view(ex: &Exhaustive, id: u32, class: &ListClass) -> ServerView {
    let mut v = ex.interner.views[id as usize].clone();
    if let Some(q) = &class.example {
        v.query = q.clone();
    }
    v
}

/// Exact posteriors and witness search over the enumerated outcomes.
fn exhaustive_report(
    protocol: &Protocol,
    ex: &Exhaustive,
    instances: &[Instance],
    opts: &AuditOptions,
) -> (Vec<ServerPosteriors>, Rational) {
    let params = protocol.params();
    let k = params.n_messages;
    let uniform = ratio::rat(1, k as i64);
    let mut max_dev = ratio::zero();
    let mut out = Vec::new();
    for (server, classes) in ex.classes.iter().enumerate() {
        // view id -> target -> demand
        let mut joint: BTreeMap<u32, Vec<Vec<Rational>>> = BTreeMap::new();
        for (inst, mass) in instances.iter().zip(&ex.per_instance) {
            for (&id, per_target) in &mass[server] {
                let slot = joint
                    .entry(id)
                    .or_insert_with(|| vec![vec![ratio::zero(); k]; ex.targets]);
                for (t, m) in per_target.iter().enumerate() {
                    slot[t][inst.demand] += m;
                }
            }
        }
        let mut grouped: BTreeMap<Vec<Rational>, PosteriorClass> = BTreeMap::new();
        let mut listed = Vec::new();
        for (&id, per_target) in &joint {
            for class in classes {
                let weights: Vec<Rational> = (0..k)
                    .map(|w| {
                        let m: Vec<Rational> = per_target.iter().map(|v| v[w].clone()).collect();
                        mix(&m, &class.likelihood)
                    })
                    .collect();
                let total: Rational = weights.iter().sum();
                if total.is_zero() {
                    continue;
                }
                let posterior: Vec<Rational> = weights.iter().map(|w| w / &total).collect();
                for p in &posterior {
                    let d = ratio::abs_diff(p, &uniform);
                    if d > max_dev {
                        max_dev = d;
                    }
                }
                let views = class.lists;
                grouped
                    .entry(posterior.clone())
                    .or_insert_with(|| PosteriorClass {
                        posterior: posterior.clone(),
                        views: 0,
                        example: example_view(ex, id, class),
                    })
                    .views += views;
                if opts.list_views {
                    listed.push(ViewPosterior {
                        view: example_view(ex, id, class),
                        equivalent_lists: views,
                        posterior,
                    });
                }
            }
        }
        out.push(ServerPosteriors {
            server,
            classes: grouped.into_values().collect(),
            views: opts.list_views.then_some(listed),
        });
    }
    (out, max_dev)
}

fn find_witnesses(
    ex: &Exhaustive,
    instances: &[Instance],
    k: usize,
) -> Vec<WitnessEntry> {
    // per-instance view distribution over (server, view, list class)
    let fingerprints: Vec<Fingerprint> = ex
        .per_instance
        .iter()
        .map(|mass| {
            let mut fp = Vec::new();
            for (server, per_view) in mass.iter().enumerate() {
                for (&id, per_target) in per_view {
                    for (c, class) in ex.classes[server].iter().enumerate() {
                        let p = mix(per_target, &class.likelihood);
                        if !p.is_zero() {
                            fp.push(((server, id, c), p));
                        }
                    }
                }
            }
            fp
        })
        .collect();
    let mut groups: HashMap<&Fingerprint, Vec<usize>> = HashMap::new();
    for (i, fp) in fingerprints.iter().enumerate() {
        groups.entry(fp).or_default().push(i);
    }
    let mut out = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let same = &groups[&fingerprints[i]];
        for alt in 0..k {
            let witness = same
                .iter()
                .map(|&j| &instances[j])
                .find(|o| o.demand == alt)
                .map(|o| Witness {
                    support: o.support.clone(),
                    coeffs: o.coeffs.clone(),
                });
            out.push(WitnessEntry {
                demand: inst.demand,
                support: inst.support.clone(),
                coeffs: inst.coeffs.clone(),
                alt_demand: alt,
                witness,
            });
        }
    }
    out
}

/// Searches `(S', C')` with demand `alt_demand` whose per-server view
/// distributions all match those of `inst`.
pub fn witness_search(
    protocol: &Protocol,
    inst: &Instance,
    alt_demand: usize,
    cap: u128,
) -> Result<Option<Witness>> {
    inst.validate(protocol.params())?;
    let ex = run_exhaustive(protocol, cap, 0)?;
    let instances = enumerate_instances(protocol.params(), cap)?;
    let entries = find_witnesses(&ex, &instances, protocol.params().n_messages);
    Ok(entries
        .into_iter()
        .find(|e| e.demand == inst.demand && e.support == inst.support && e.coeffs == inst.coeffs && e.alt_demand == alt_demand)
        .and_then(|e| e.witness))
}

/// Witness search for every `(W, S, C, W')`.
pub fn witness_sweep(protocol: &Protocol, cap: u128) -> Result<Vec<WitnessEntry>> {
    let ex = run_exhaustive(protocol, cap, 0)?;
    let instances = enumerate_instances(protocol.params(), cap)?;
    Ok(find_witnesses(&ex, &instances, protocol.params().n_messages))
}

/// What a server can tie to one index: for each broadcast group containing it,
/// its coefficient and how many of the group's indices occur twice; or its
/// role in a direct request.
fn signature(view: &ServerView, index: usize) -> Vec<u64> {
    match (&view.groups, &view.query) {
        (Some(groups), _) => {
            let mut seen: HashMap<usize, u64> = HashMap::new();
            for g in groups {
                for &i in &g.indices {
                    *seen.entry(i).or_default() += 1;
                }
            }
            let mut sig: Vec<(u64, u64)> = groups
                .iter()
                .filter_map(|g| {
                    let pos = g.indices.iter().position(|&i| i == index)?;
                    let dups = g.indices.iter().filter(|i| seen[i] > 1).count() as u64;
                    Some((g.coeffs[pos].value(), dups))
                })
                .collect();
            sig.sort_unstable();
            std::iter::once(0).chain(sig.into_iter().flat_map(|(a, b)| [a, b])).collect()
        }
        (None, ServerQuery::Message { index: i }) => vec![1, u64::from(*i == index)],
        (None, ServerQuery::Combination { coeffs }) => vec![2, coeffs.get(index).map_or(0, |c| c.value())],
        _ => vec![3],
    }
}

/// Total variation between the signature of the demand and that of a uniform
/// random index, each seen by a uniformly chosen server.
fn sampled_tv(protocol: &Protocol, samples: usize, seed: u64) -> Result<Rational> {
    let params = protocol.params();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut hist: HashMap<Vec<u64>, (i64, i64)> = HashMap::new();
    for _ in 0..samples {
        let inst = draw_instance(params, &mut RngCoins(&mut rng));
        let stage = protocol.plan_stage(&inst, &mut RngCoins(&mut rng))?;
        let server = rng.random_range(0..params.n_servers);
        let view = &stage.views_without_requests(params.n_servers)[server];
        let other = rng.random_range(0..params.n_messages);
        hist.entry(signature(view, inst.demand)).or_default().0 += 1;
        hist.entry(signature(view, other)).or_default().1 += 1;
    }
    let diff: i64 = hist.values().map(|(a, b)| (a - b).abs()).sum();
    Ok(ratio::rat(diff, 2 * samples as i64))
}

/// Privacy audit of `protocol` per the chosen mode.
pub fn posterior_audit(protocol: &Protocol, opts: &AuditOptions) -> Result<AuditReport> {
    let params = *protocol.params();
    let measured_rate = measure_rate(protocol, opts.rate_trials.max(1), opts.seed)?;
    let cap = capacity(&params);
    let mut report = AuditReport {
        config: params.label(),
        params,
        path: params.path(),
        status: AuditStatus::Exact,
        private: false,
        max_deviation: None,
        sampled_tv: None,
        samples: None,
        explored_paths: None,
        per_server_posteriors: Vec::new(),
        rate_matches: measured_rate == cap,
        measured_rate,
        capacity: cap,
        witnesses_complete: None,
        witnesses: Vec::new(),
    };

    let exhaustive = match opts.mode {
        AuditMode::Sampled => None,
        AuditMode::Exhaustive => Some(run_exhaustive(protocol, opts.cap, opts.seed)?),
        AuditMode::Auto => match run_exhaustive(protocol, opts.cap, opts.seed) {
            Ok(ex) => Some(ex),
            Err(Error::CapExceeded { .. }) => None,
            Err(e) => return Err(e),
        },
    };

    match exhaustive {
        Some(ex) => {
            let instances = enumerate_instances(&params, opts.cap)?;
            let (posteriors, dev) = exhaustive_report(protocol, &ex, &instances, opts);
            report.private = dev.is_zero();
            report.max_deviation = Some(dev);
            report.per_server_posteriors = posteriors;
            report.explored_paths = Some(ex.paths);
            if opts.witnesses {
                let entries = find_witnesses(&ex, &instances, params.n_messages);
                report.witnesses_complete = Some(entries.iter().all(|e| e.witness.is_some()));
                report.witnesses = entries;
            }
        }
        None => {
            let tv = sampled_tv(protocol, opts.samples, opts.seed)?;
            report.status = AuditStatus::Sampled;
            report.private = tv <= sampled_threshold();
            report.sampled_tv = Some(tv);
            report.samples = Some(opts.samples as u64);
        }
    }
    Ok(report)
}

impl AuditReport {
    /// Largest posterior over any view (exact mode).
    pub fn max_posterior(&self) -> Option<Rational> {
        self.per_server_posteriors
            .iter()
            .flat_map(|s| s.classes.iter().flat_map(|c| c.posterior.iter()))
            .max()
            .cloned()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::solve_rp_distribution;
    use crate::ratio::rat;

    fn protocol(model: Model, n: usize, k: usize, m: usize, q: u64) -> Protocol {
        Protocol::new(Params::new(model, n, k, m, q).unwrap()).unwrap()
    }

    #[test]
    fn capacities() {
        assert_eq!(capacity_model_i(2, 9, 3).unwrap(), rat(4, 7));
        assert_eq!(capacity_model_i(5, 7, 6).unwrap(), ratio::one());
        assert_eq!(capacity_model_i(2, 3, 0).unwrap(), rat(4, 7));
        assert_eq!(capacity_model_i(1, 6, 1).unwrap(), rat(1, 3));
        assert!(capacity_model_i(2, 3, 3).is_err());
        assert_eq!(capacity_model_ii(2, 10, 4).unwrap(), rat(2, 3));
        assert_eq!(capacity_model_ii(5, 7, 2).unwrap(), ratio::one());
        assert_eq!(capacity_model_ii(3, 6, 5).unwrap(), rat(3, 4));
        assert_eq!(capacity_model_ii(3, 4, 4).unwrap(), ratio::one());
        assert!(capacity_model_ii(3, 4, 1).is_err());
        assert!(capacity_model_ii(3, 4, 5).is_err());
    }

    #[test]
    fn capacity_matches_geometric_sum_oracle() {
        // (1 + 1/N + ... + 1/N^(r-1))^-1 = N^(r-1) (N-1) / (N^r - 1)
        for n in 2..=4i64 {
            for k in 1..=8usize {
                for m in 0..k {
                    let r = k.div_ceil(m + 1) as u32;
                    let expect = rat(n.pow(r - 1) * (n - 1), n.pow(r) - 1);
                    assert_eq!(capacity_model_i(n as usize, k, m).unwrap(), expect);
                }
            }
        }
    }

    #[test]
    fn measured_rates() {
        assert_eq!(measure_rate(&protocol(Model::I, 2, 9, 3, 3), 3, 0).unwrap(), rat(4, 7));
        assert_eq!(measure_rate(&protocol(Model::II, 2, 10, 4, 3), 3, 0).unwrap(), rat(2, 3));
        assert_eq!(measure_rate(&protocol(Model::II, 3, 4, 4, 3), 3, 0).unwrap(), ratio::one());
        assert!(measure_rate(&protocol(Model::II, 3, 4, 4, 3), 0, 0).is_err());
    }

    #[test]
    fn pair_path_is_exactly_private() {
        let opts = AuditOptions {
            mode: AuditMode::Exhaustive,
            ..AuditOptions::default()
        };
        let r = posterior_audit(&protocol(Model::II, 2, 3, 2, 3), &opts).unwrap();
        assert_eq!(r.status, AuditStatus::Exact);
        assert_eq!(r.max_deviation, Some(ratio::zero()));
        assert!(r.private);
        for s in &r.per_server_posteriors {
            for c in &s.classes {
                assert!(c.posterior.iter().all(|p| *p == rat(1, 3)));
            }
        }
    }

    #[test]
    fn model_i_small_is_exactly_private() {
        let opts = AuditOptions {
            mode: AuditMode::Exhaustive,
            ..AuditOptions::default()
        };
        let r = posterior_audit(&protocol(Model::I, 2, 3, 1, 2), &opts).unwrap();
        assert_eq!(r.max_deviation, Some(ratio::zero()));
        assert!(r.rate_matches);
    }

    #[test]
    fn uniform_profiles_leak() {
        let p = Params::new(Model::I, 2, 3, 1, 2).unwrap();
        let broken = solve_rp_distribution(3, 1).unwrap().uniform_over_profiles();
        let proto = Protocol::with_distribution(p, broken).unwrap();
        let opts = AuditOptions {
            mode: AuditMode::Exhaustive,
            ..AuditOptions::default()
        };
        let r = posterior_audit(&proto, &opts).unwrap();
        assert!(r.max_deviation.unwrap() > ratio::zero());
        assert!(!r.private);
    }

    #[test]
    fn oversized_exhaustive_is_capped() {
        let opts = AuditOptions {
            mode: AuditMode::Exhaustive,
            ..AuditOptions::default()
        };
        let err = posterior_audit(&protocol(Model::I, 2, 9, 3, 3), &opts).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { .. }));
    }

    #[test]
    fn auto_falls_back_to_sampling() {
        let opts = AuditOptions {
            samples: 20_000,
            ..AuditOptions::default()
        };
        let r = posterior_audit(&protocol(Model::I, 2, 9, 3, 3), &opts).unwrap();
        assert_eq!(r.status, AuditStatus::Sampled);
        assert!(r.sampled_tv.clone().unwrap() < rat(3, 100));
        assert!(r.max_deviation.is_none());
    }

    #[test]
    fn identity_witness_and_full_support() {
        let proto = protocol(Model::II, 2, 3, 3, 3);
        let entries = witness_sweep(&proto, DEFAULT_CAP).unwrap();
        assert_eq!(entries.len(), 24 * 3);
        for e in &entries {
            if e.alt_demand == e.demand {
                let w = e.witness.as_ref().unwrap();
                assert_eq!((&w.support, &w.coeffs), (&e.support, &e.coeffs));
            }
            assert!(e.witness.is_some());
        }
    }

    #[test]
    fn signatures() {
        let q = crate::field::PrimeOrder::new(3).unwrap();
        let view = ServerView {
            groups: None,
            query: ServerQuery::Combination {
                coeffs: vec![q.element(1), q.element(2)],
            },
        };
        assert_eq!(signature(&view, 1), vec![2, 2]);
        let idle = ServerView {
            groups: None,
            query: ServerQuery::Idle,
        };
        assert_eq!(signature(&idle, 0), vec![3]);
    }
}
