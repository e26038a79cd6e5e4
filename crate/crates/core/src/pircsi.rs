//! End-to-end retrieval with coded side information.
//!
//! [`Protocol`] covers every parameter regime: partitioning plus the
//! multi-server PIR layer when the demand lies outside the support (or inside
//! a support of size `3..K-1`), and a single direct request to one uniformly
//! chosen server when the support has size 2 or covers the whole database.

use rand::SeedableRng;
use serde::Serialize;

use crate::coins::{Coins, RngCoins};
use crate::error::{Error, Result};
use crate::field::{FieldElement, SymbolVector};
use crate::instance::{Database, Instance, Params, ProtocolPath};
use crate::partition::{self, Group, PartitionPlan, SelectionDistribution};
use crate::ratio::{self, Rational};
use crate::sunjafar::{self, AnswerBundle, QueryBundle, SuperMessageSet, SymbolRequest};

/// What one server is asked for.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ServerQuery {
    /// Not contacted in this retrieval.
    Idle,
    Symbols { requests: Vec<SymbolRequest> },
    Message { index: usize },
    /// Coefficients over all `K` messages.
    Combination { coeffs: Vec<FieldElement> },
}

/// Everything a single server observes: the broadcast groups (if any) and its own query.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ServerView {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Group>>,
    pub query: ServerQuery,
}

impl ServerView {
    /// Compact hashable encoding used by the auditor.
    pub fn key(&self) -> Vec<u32> {
        let mut k = Vec::new();
        if let Some(groups) = &self.groups {
            k.push(u32::MAX);
            for g in groups {
                k.push(g.len() as u32);
                k.extend(g.indices.iter().map(|&i| i as u32));
                k.extend(g.coeffs.iter().map(|c| c.value() as u32));
            }
        }
        match &self.query {
            ServerQuery::Idle => k.push(0),
            ServerQuery::Symbols { requests } => {
                k.push(1);
                for r in requests {
                    k.push(r.order() as u32);
                    for &(s, p) in r.terms() {
                        k.extend([s as u32, p as u32]);
                    }
                }
            }
            ServerQuery::Message { index } => k.extend([2, *index as u32]),
            ServerQuery::Combination { coeffs } => {
                k.push(3);
                k.extend(coeffs.iter().map(|c| c.value() as u32));
            }
        }
        k
    }
}

/// A single-server request on the direct paths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectRequest {
    pub server: usize,
    pub query: ServerQuery,
}

/// The user's first-stage decision: a partition plan or a direct request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stage {
    Partition(PartitionPlan),
    Direct(DirectRequest),
}

impl Stage {
    /// Super-message the PIR layer must deliver (0 on direct paths).
    pub fn target(&self) -> usize {
        match self {
            Stage::Partition(p) => p.target,
            Stage::Direct(_) => 0,
        }
    }

    /// Server views with the PIR requests left out.
    pub fn views_without_requests(&self, n_servers: usize) -> Vec<ServerView> {
        match self {
            Stage::Partition(p) => vec![
                ServerView {
                    groups: Some(p.revealed.clone()),
                    query: ServerQuery::Symbols { requests: Vec::new() },
                };
                n_servers
            ],
            Stage::Direct(d) => (0..n_servers)
                .map(|n| ServerView {
                    groups: None,
                    query: if n == d.server { d.query.clone() } else { ServerQuery::Idle },
                })
                .collect(),
        }
    }
}

/// Full user-side plan for one retrieval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserPlan {
    pub stage: Stage,
    pub bundle: Option<QueryBundle>,
}

impl UserPlan {
    pub fn views(&self, n_servers: usize) -> Vec<ServerView> {
        let mut views = self.stage.views_without_requests(n_servers);
        if let Some(b) = &self.bundle {
            for (v, reqs) in views.iter_mut().zip(&b.per_server) {
                v.query = ServerQuery::Symbols { requests: reqs.clone() };
            }
        }
        views
    }
}

/// Deterministic server behavior: evaluate the query against the local replica.
pub fn server_answer(view: &ServerView, db: &Database) -> Result<Vec<FieldElement>> {
    match &view.query {
        ServerQuery::Idle => Ok(Vec::new()),
        ServerQuery::Symbols { requests } => {
            let groups = view
                .groups
                .as_ref()
                .ok_or_else(|| Error::MalformedQuery("symbol requests without groups".into()))?;
            let supers = SuperMessageSet::form(db, groups)?;
            sunjafar::answer(requests, &supers)
        }
        ServerQuery::Message { index } => {
            let m = db
                .message(*index)
                .ok_or_else(|| Error::MalformedQuery(format!("message {index} out of range {}", db.len())))?;
            Ok((0..m.len()).filter_map(|i| m.get(i)).collect())
        }
        ServerQuery::Combination { coeffs } => {
            if coeffs.len() != db.len() {
                return Err(Error::MalformedQuery(format!(
                    "combination has {} coefficients for {} messages",
                    coeffs.len(),
                    db.len()
                )));
            }
            let all: Vec<usize> = (0..db.len()).collect();
            let v = db.combine(&all, coeffs)?;
            Ok((0..v.len()).filter_map(|i| v.get(i)).collect())
        }
    }
}

/// One completed retrieval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RetrievalSession {
    pub params: Params,
    pub plan: Option<PartitionPlan>,
    pub bundle: Option<QueryBundle>,
    pub chosen_server: Option<usize>,
    pub views: Vec<ServerView>,
    pub answers: Vec<Vec<FieldElement>>,
    pub recovered: SymbolVector,
}

impl RetrievalSession {
    pub fn downloaded(&self) -> usize {
        self.answers.iter().map(Vec::len).sum()
    }

    /// Message length over downloaded symbols.
    pub fn rate(&self) -> Rational {
        ratio::rat(self.params.msg_len as i64, self.downloaded() as i64)
    }
}

/// A configured retrieval protocol for one parameter set.
#[derive(Clone, Debug)]
pub struct Protocol {
    params: Params,
    dist: Option<SelectionDistribution>,
}

impl Protocol {
    pub fn new(params: Params) -> Result<Self> {
        let dist = match params.path() {
            ProtocolPath::Partition => Some(partition::solve_rp_distribution(
                params.n_messages,
                params.side_size,
            )?),
            ProtocolPath::ModifiedPartition => Some(partition::solve_mrp_distribution(
                params.n_messages,
                params.side_size,
                params.q,
            )?),
            ProtocolPath::Pair | ProtocolPath::Full => None,
        };
        Ok(Self { params, dist })
    }

    /// Uses `dist` instead of the solved distribution (for controls and experiments).
    pub fn with_distribution(params: Params, dist: SelectionDistribution) -> Result<Self> {
        if !matches!(params.path(), ProtocolPath::Partition | ProtocolPath::ModifiedPartition) {
            return Err(Error::InvalidParams(format!(
                "the {:?} path has no selection distribution",
                params.path()
            )));
        }
        if dist.n_messages() != params.n_messages || dist.side_size() != params.side_size {
            return Err(Error::DistributionMismatch("distribution built for other (K, M)".into()));
        }
        Ok(Self {
            params,
            dist: Some(dist),
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn distribution(&self) -> Option<&SelectionDistribution> {
        self.dist.as_ref()
    }

    pub fn path(&self) -> ProtocolPath {
        self.params.path()
    }

    fn dist(&self) -> Result<&SelectionDistribution> {
        self.dist
            .as_ref()
            .ok_or_else(|| Error::InvalidParams("no selection distribution on this path".into()))
    }

    /// First-stage randomness: partition plan or direct request.
    pub fn plan_stage<C: Coins + ?Sized>(&self, inst: &Instance, coins: &mut C) -> Result<Stage> {
        inst.validate(&self.params)?;
        let p = &self.params;
        match p.path() {
            ProtocolPath::Partition => Ok(Stage::Partition(partition::rp_build(inst, self.dist()?, p.q, coins)?)),
            ProtocolPath::ModifiedPartition => {
                Ok(Stage::Partition(partition::mrp_build(inst, self.dist()?, p.q, coins)?))
            }
            ProtocolPath::Pair => {
                let other = inst.support.iter().copied().find(|&i| i != inst.demand).expect("|S| = 2");
                let k = p.n_messages as u128;
                let index = if coins.weighted(&[1, k - 1]) == 0 { inst.demand } else { other };
                let server = coins.uniform(p.n_servers);
                Ok(Stage::Direct(DirectRequest {
                    server,
                    query: ServerQuery::Message { index },
                }))
            }
            ProtocolPath::Full => {
                let c_w = inst.coeff_of(inst.demand).expect("W in S");
                let alternatives: Vec<FieldElement> = p.q.units().filter(|&u| u != c_w).collect();
                let alt = alternatives[coins.uniform(alternatives.len())];
                let coeffs = inst
                    .support
                    .iter()
                    .zip(&inst.coeffs)
                    .map(|(&i, &c)| if i == inst.demand { alt } else { c })
                    .collect();
                let server = coins.uniform(p.n_servers);
                Ok(Stage::Direct(DirectRequest {
                    server,
                    query: ServerQuery::Combination { coeffs },
                }))
            }
        }
    }

    /// Draws the whole plan; `perm_coins` feeds only the PIR layer's symbol permutations.
    pub fn plan<C: Coins + ?Sized, P: Coins + ?Sized>(
        &self,
        inst: &Instance,
        plan_coins: &mut C,
        perm_coins: &mut P,
    ) -> Result<UserPlan> {
        let stage = self.plan_stage(inst, plan_coins)?;
        let bundle = match &stage {
            Stage::Partition(plan) => Some(sunjafar::plan_queries(
                self.params.n_servers,
                plan.revealed.len(),
                plan.target,
                perm_coins,
            )?),
            Stage::Direct(_) => None,
        };
        Ok(UserPlan { stage, bundle })
    }

    /// Solves for `X_W` from the answers and the side information `y`.
    pub fn recover(
        &self,
        inst: &Instance,
        plan: &UserPlan,
        answers: &[Vec<FieldElement>],
        y: &SymbolVector,
    ) -> Result<SymbolVector> {
        let q = self.params.q;
        match &plan.stage {
            Stage::Partition(p) => {
                let bundle = plan
                    .bundle
                    .as_ref()
                    .ok_or_else(|| Error::MalformedPlan("partition plan without PIR requests".into()))?;
                let target = sunjafar::reconstruct(
                    bundle,
                    &AnswerBundle {
                        per_server: answers.to_vec(),
                    },
                    p.target,
                )?;
                // target - Y = target_coeff * X_W
                target.try_sub(y)?.scale(p.target_coeff.inverse()?)
            }
            Stage::Direct(d) => {
                let got = answers
                    .get(d.server)
                    .ok_or_else(|| Error::MalformedPlan("missing direct answer".into()))?;
                let got = SymbolVector::from_values(q, got.iter().map(|e| e.value()))?;
                let c_w = inst
                    .coeff_of(inst.demand)
                    .ok_or_else(|| Error::InvalidInstance("W must lie in S".into()))?;
                match &d.query {
                    ServerQuery::Message { index } if *index == inst.demand => Ok(got),
                    ServerQuery::Message { index } => {
                        let c_i = inst
                            .coeff_of(*index)
                            .ok_or_else(|| Error::MalformedPlan("requested index outside S".into()))?;
                        // X_W = c_W^-1 (Y - c_i X_i)
                        SymbolVector::axpy(-c_i, &got, y)?.scale(c_w.inverse()?)
                    }
                    ServerQuery::Combination { coeffs } => {
                        let alt = coeffs
                            .get(inst.demand)
                            .copied()
                            .ok_or_else(|| Error::MalformedPlan("combination too short".into()))?;
                        got.try_sub(y)?.scale(alt.try_sub(c_w)?.inverse()?)
                    }
                    other => Err(Error::MalformedPlan(format!("unexpected direct query {other:?}"))),
                }
            }
        }
    }

    /// Runs one retrieval end to end.
    pub fn retrieve<C: Coins + ?Sized, P: Coins + ?Sized>(
        &self,
        inst: &Instance,
        db: &Database,
        plan_coins: &mut C,
        perm_coins: &mut P,
    ) -> Result<RetrievalSession> {
        let plan = self.plan(inst, plan_coins, perm_coins)?;
        let views = plan.views(self.params.n_servers);
        let answers = views
            .iter()
            .map(|v| server_answer(v, db))
            .collect::<Result<Vec<_>>>()?;
        let y = inst.side_info(db)?.combo;
        let recovered = self.recover(inst, &plan, &answers, &y)?;
        let (partition_plan, chosen_server) = match plan.stage {
            Stage::Partition(p) => (Some(p), None),
            Stage::Direct(d) => (None, Some(d.server)),
        };
        Ok(RetrievalSession {
            params: self.params,
            plan: partition_plan,
            bundle: plan.bundle,
            chosen_server,
            views,
            answers,
            recovered,
        })
    }
}

fn retrieve_on_path<R: rand::Rng + ?Sized>(
    expect: ProtocolPath,
    params: &Params,
    inst: &Instance,
    db: &Database,
    rng: &mut R,
) -> Result<RetrievalSession> {
    if params.path() != expect {
        return Err(Error::InvalidParams(format!(
            "parameters select the {:?} path, not {expect:?}",
            params.path()
        )));
    }
    let protocol = Protocol::new(*params)?;
    let mut perm_rng = rand_chacha::ChaCha20Rng::from_rng(&mut &mut *rng);
    protocol.retrieve(inst, db, &mut RngCoins(&mut *rng), &mut RngCoins(&mut perm_rng))
}

/// Demand outside the support.
pub fn retrieve_model_i<R: rand::Rng>(
    params: &Params,
    inst: &Instance,
    db: &Database,
    rng: &mut R,
) -> Result<RetrievalSession> {
    retrieve_on_path(ProtocolPath::Partition, params, inst, db, rng)
}

/// Demand inside a support of size 2.
pub fn retrieve_model_ii_m2<R: rand::Rng>(
    params: &Params,
    inst: &Instance,
    db: &Database,
    rng: &mut R,
) -> Result<RetrievalSession> {
    retrieve_on_path(ProtocolPath::Pair, params, inst, db, rng)
}

/// Demand inside a support of size `3..K-1`.
pub fn retrieve_model_ii_mid<R: rand::Rng>(
    params: &Params,
    inst: &Instance,
    db: &Database,
    rng: &mut R,
) -> Result<RetrievalSession> {
    retrieve_on_path(ProtocolPath::ModifiedPartition, params, inst, db, rng)
}

/// Support covers every message.
pub fn retrieve_model_ii_mk<R: rand::Rng>(
    params: &Params,
    inst: &Instance,
    db: &Database,
    rng: &mut R,
) -> Result<RetrievalSession> {
    retrieve_on_path(ProtocolPath::Full, params, inst, db, rng)
}
