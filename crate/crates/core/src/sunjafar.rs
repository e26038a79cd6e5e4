//! Capacity-achieving replicated-server PIR over `r` super-messages.
//!
//! Each super-message has `N^r` symbols. The user permutes the symbol
//! positions of every super-message with a private uniform permutation and
//! then, in rounds `k = 1..=r`, asks every server for sums over every
//! `k`-subset of super-messages. A sum touching the target pairs one fresh
//! target symbol with interference already downloaded from another server,
//! so the target symbol can be peeled off; the other sums exist only to
//! make every server's view identical in shape for every target.

use std::collections::HashMap;

use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;

use crate::coins::{self, Coins};
use crate::combin::combinations;
use crate::error::{Error, Result};
use crate::field::{rank_mod, FieldElement, SymbolVector};
use crate::instance::{Database, MAX_MESSAGE_LEN};
use crate::partition::Group;

/// Symbols per super-message for `n` servers and `r` super-messages.
pub fn symbol_len(n_servers: usize, n_supers: usize) -> Result<usize> {
    match (n_servers as u64).checked_pow(n_supers as u32) {
        Some(l) if l <= MAX_MESSAGE_LEN => Ok(l as usize),
        _ => Err(Error::InvalidParams(format!(
            "super-message length {n_servers}^{n_supers} exceeds {MAX_MESSAGE_LEN} symbols"
        ))),
    }
}

/// Requests each server receives: `(N^r - 1)/(N - 1)`, or `r` for one server.
pub fn requests_per_server(n_servers: usize, n_supers: usize) -> usize {
    if n_servers == 1 {
        n_supers
    } else {
        (n_servers.pow(n_supers as u32) - 1) / (n_servers - 1)
    }
}

/// The `r` linear combinations of database messages the PIR layer runs over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuperMessageSet {
    supers: Vec<SymbolVector>,
}

impl SuperMessageSet {
    /// Evaluates one super-message per group and checks that the groups'
    /// coefficient vectors are linearly independent.
    pub fn form(db: &Database, groups: &[Group]) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::MalformedPlan("no groups".into()));
        }
        let q = db.order();
        let mut rows = Vec::with_capacity(groups.len());
        for g in groups {
            let mut row = vec![0u64; db.len()];
            for (&i, c) in g.indices.iter().zip(&g.coeffs) {
                if i >= db.len() {
                    return Err(Error::MalformedQuery(format!("index {i} out of range {}", db.len())));
                }
                row[i] = (row[i] + c.value()) % q.get();
            }
            rows.push(row);
        }
        if rank_mod(q, &rows) != groups.len() {
            return Err(Error::MalformedPlan("super-message combinations are linearly dependent".into()));
        }
        let supers = groups
            .iter()
            .map(|g| db.combine(&g.indices, &g.coeffs))
            .collect::<Result<_>>()?;
        Ok(Self { supers })
    }

    pub fn from_vectors(supers: Vec<SymbolVector>) -> Result<Self> {
        let first = supers.first().ok_or_else(|| Error::MalformedPlan("no super-messages".into()))?;
        for s in &supers {
            if s.len() != first.len() {
                return Err(Error::LengthMismatch { left: s.len(), right: first.len() });
            }
            if s.order() != first.order() {
                return Err(Error::FieldMismatch { left: s.order().get(), right: first.order().get() });
            }
        }
        Ok(Self { supers })
    }

    pub fn len(&self) -> usize {
        self.supers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supers.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&SymbolVector> {
        self.supers.get(i)
    }

    pub fn supers(&self) -> &[SymbolVector] {
        &self.supers
    }
}

/// A sum of permuted symbols, one from each listed super-message.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolRequest {
    terms: Vec<(usize, usize)>,
}

impl SymbolRequest {
    /// `terms` are `(super_index, position)` pairs with distinct super indices.
    pub fn new(mut terms: Vec<(usize, usize)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::MalformedQuery("empty symbol request".into()));
        }
        terms.sort_unstable();
        if terms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::MalformedQuery("repeated super-message in one request".into()));
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[(usize, usize)] {
        &self.terms
    }

    /// Number of summed symbols.
    pub fn order(&self) -> usize {
        self.terms.len()
    }

    pub fn supers(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.0).collect()
    }
}

impl Serialize for SymbolRequest {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.terms.len()))?;
        for &(i, p) in &self.terms {
            seq.serialize_element(&[i, p])?;
        }
        seq.end()
    }
}

/// Per-server request lists plus the user's private position permutations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryBundle {
    pub n_servers: usize,
    pub n_supers: usize,
    pub symbol_len: usize,
    pub per_server: Vec<Vec<SymbolRequest>>,
    /// `position = perms[super][logical symbol]`; never sent.
    pub perms: Vec<Vec<usize>>,
}

impl QueryBundle {
    pub fn total_requests(&self) -> usize {
        self.per_server.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AnswerBundle {
    pub per_server: Vec<Vec<FieldElement>>,
}

/// `(super, logical symbol)` terms of one sum.
type Terms = Vec<(usize, usize)>;

/// Builds the request lists for retrieving super-message `target`.
pub fn plan_queries<C: Coins + ?Sized>(
    n_servers: usize,
    n_supers: usize,
    target: usize,
    coins: &mut C,
) -> Result<QueryBundle> {
    if n_servers == 0 || n_supers == 0 {
        return Err(Error::InvalidParams("need at least one server and one super-message".into()));
    }
    if target >= n_supers {
        return Err(Error::InvalidParams(format!("target {target} out of range {n_supers}")));
    }
    let len = symbol_len(n_servers, n_supers)?;
    let perms: Vec<Vec<usize>> = (0..n_supers).map(|_| coins::permutation(coins, len)).collect();

    let mut next = vec![0usize; n_supers];
    let mut fresh = |s: usize| {
        let l = next[s];
        next[s] += 1;
        l
    };
    // non-target sums per server, keyed by subset, as (super, logical) terms
    let mut side_sums: Vec<HashMap<Vec<usize>, Vec<Terms>>> = vec![HashMap::new(); n_servers];
    let mut logical: Vec<Vec<Vec<(usize, usize)>>> = vec![Vec::new(); n_servers];

    for k in 1..=n_supers {
        for subset in combinations(n_supers, k) {
            let has_target = subset.contains(&target);
            for server in 0..n_servers {
                if !has_target {
                    let replicas = (n_servers - 1).pow(k as u32 - 1);
                    for _ in 0..replicas {
                        let terms: Vec<(usize, usize)> = subset.iter().map(|&s| (s, fresh(s))).collect();
                        side_sums[server].entry(subset.clone()).or_default().push(terms.clone());
                        logical[server].push(terms);
                    }
                } else if k == 1 {
                    logical[server].push(vec![(target, fresh(target))]);
                } else {
                    let rest: Vec<usize> = subset.iter().copied().filter(|&s| s != target).collect();
                    for other in (0..n_servers).filter(|&o| o != server) {
                        let sums = side_sums[other].get(&rest).cloned().unwrap_or_default();
                        for sum in sums {
                            let mut terms = sum;
                            terms.push((target, fresh(target)));
                            logical[server].push(terms);
                        }
                    }
                }
            }
        }
    }
    if next[target] != len || next.iter().any(|&n| n > len) {
        return Err(Error::MalformedPlan(format!(
            "symbol budget violated: used {next:?} of {len} per super-message"
        )));
    }

    let per_server = logical
        .into_iter()
        .map(|list| {
            list.into_iter()
                .map(|terms| SymbolRequest::new(terms.into_iter().map(|(s, l)| (s, perms[s][l])).collect()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QueryBundle {
        n_servers,
        n_supers,
        symbol_len: len,
        per_server,
        perms,
    })
}

/// Evaluates a server's request list against the super-messages.
pub fn answer(requests: &[SymbolRequest], supers: &SuperMessageSet) -> Result<Vec<FieldElement>> {
    let q = supers
        .get(0)
        .ok_or_else(|| Error::MalformedPlan("no super-messages".into()))?
        .order();
    requests
        .iter()
        .map(|req| {
            req.terms.iter().try_fold(q.zero(), |acc, &(s, p)| {
                let sup = supers
                    .get(s)
                    .ok_or_else(|| Error::MalformedQuery(format!("super-message {s} out of range")))?;
                let sym = sup.get(p).ok_or(Error::OutOfRange {
                    index: s,
                    position: p,
                    len: sup.len(),
                })?;
                acc.try_add(sym)
            })
        })
        .collect()
}

/// Recovers every symbol of super-message `target` from the answers alone.
pub fn reconstruct(bundle: &QueryBundle, answers: &AnswerBundle, target: usize) -> Result<SymbolVector> {
    if answers.per_server.len() != bundle.per_server.len() {
        return Err(Error::LengthMismatch {
            left: answers.per_server.len(),
            right: bundle.per_server.len(),
        });
    }
    for (reqs, ans) in bundle.per_server.iter().zip(&answers.per_server) {
        if reqs.len() != ans.len() {
            return Err(Error::LengthMismatch { left: ans.len(), right: reqs.len() });
        }
    }
    let q = answers
        .per_server
        .iter()
        .flatten()
        .next()
        .ok_or_else(|| Error::MalformedPlan("no answers".into()))?
        .order();

    let mut interference: HashMap<&[(usize, usize)], (usize, FieldElement)> = HashMap::new();
    for (server, (reqs, ans)) in bundle.per_server.iter().zip(&answers.per_server).enumerate() {
        for (req, &a) in reqs.iter().zip(ans) {
            if req.terms.iter().all(|t| t.0 != target) {
                interference.insert(&req.terms, (server, a));
            }
        }
    }

    let mut out: Vec<Option<u64>> = vec![None; bundle.symbol_len];
    for (server, (reqs, ans)) in bundle.per_server.iter().zip(&answers.per_server).enumerate() {
        for (req, &a) in reqs.iter().zip(ans) {
            let Some(pos) = req.terms.iter().position(|t| t.0 == target) else {
                continue;
            };
            let position = req.terms[pos].1;
            let rest: Vec<(usize, usize)> = req
                .terms
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != pos)
                .map(|(_, &t)| t)
                .collect();
            let value = if rest.is_empty() {
                a
            } else {
                match interference.get(rest.as_slice()) {
                    Some(&(from, side)) if from != server => a.try_sub(side)?,
                    _ => {
                        return Err(Error::MalformedPlan(format!(
                            "interference for request {:?} at server {server} is not available from another server",
                            req.terms
                        )))
                    }
                }
            };
            let slot = out.get_mut(position).ok_or(Error::OutOfRange {
                index: target,
                position,
                len: bundle.symbol_len,
            })?;
            if slot.replace(value.value()).is_some() {
                return Err(Error::MalformedPlan(format!("target position {position} downloaded twice")));
            }
        }
    }
    let values = out
        .into_iter()
        .enumerate()
        .map(|(p, v)| v.ok_or_else(|| Error::MalformedPlan(format!("target position {p} never downloaded"))))
        .collect::<Result<Vec<_>>>()?;
    SymbolVector::from_values(q, values)
}

/// Runs the whole exchange against `supers` and returns the recovered target
/// with the number of downloaded symbols.
pub fn retrieve<C: Coins + ?Sized>(
    supers: &SuperMessageSet,
    n_servers: usize,
    target: usize,
    coins: &mut C,
) -> Result<(SymbolVector, usize)> {
    let bundle = plan_queries(n_servers, supers.len(), target, coins)?;
    let per_server = bundle
        .per_server
        .iter()
        .map(|reqs| answer(reqs, supers))
        .collect::<Result<Vec<_>>>()?;
    let downloaded = per_server.iter().map(Vec::len).sum();
    let recovered = reconstruct(&bundle, &AnswerBundle { per_server }, target)?;
    Ok((recovered, downloaded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coins::{explore, RngCoins};
    use crate::field::PrimeOrder;
    use crate::ratio::{self, Rational};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn shapes(list: &[SymbolRequest]) -> Vec<Vec<usize>> {
        let mut v: Vec<Vec<usize>> = list.iter().map(|r| r.supers()).collect();
        v.sort();
        v
    }

    fn random_supers(q: PrimeOrder, r: usize, len: usize, rng: &mut ChaCha8Rng) -> SuperMessageSet {
        SuperMessageSet::from_vectors((0..r).map(|_| SymbolVector::random(q, len, rng)).collect()).unwrap()
    }

    #[test]
    fn request_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=3usize {
            for r in 1..=3usize {
                for target in 0..r {
                    let b = plan_queries(n, r, target, &mut RngCoins(&mut rng)).unwrap();
                    for list in &b.per_server {
                        assert_eq!(list.len(), requests_per_server(n, r), "N={n} r={r}");
                        let mut per_subset: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
                        for req in list {
                            *per_subset.entry(req.supers()).or_default() += 1;
                        }
                        for (subset, count) in per_subset {
                            assert_eq!(count, (n - 1).pow(subset.len() as u32 - 1));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn two_server_three_message_layout() {
        let b = plan_queries(2, 3, 0, &mut RngCoins(ChaCha8Rng::seed_from_u64(0))).unwrap();
        for list in &b.per_server {
            let orders: Vec<usize> = list.iter().map(SymbolRequest::order).collect();
            assert_eq!(orders, vec![1, 1, 1, 2, 2, 2, 3]);
        }
        assert_eq!(b.symbol_len, 8);
        let b = plan_queries(2, 2, 1, &mut RngCoins(ChaCha8Rng::seed_from_u64(0))).unwrap();
        for list in &b.per_server {
            let orders: Vec<usize> = list.iter().map(SymbolRequest::order).collect();
            assert_eq!(orders, vec![1, 1, 2]);
        }
    }

    #[test]
    fn single_server_single_super() {
        let q = PrimeOrder::new(3).unwrap();
        let supers = SuperMessageSet::from_vectors(vec![SymbolVector::from_values(q, [2]).unwrap()]).unwrap();
        let (got, downloaded) = retrieve(&supers, 1, 0, &mut RngCoins(ChaCha8Rng::seed_from_u64(1))).unwrap();
        assert_eq!(downloaded, 1);
        assert_eq!(got.values(), &[2]);
    }

    #[test]
    fn shapes_do_not_depend_on_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=3usize {
            for r in 1..=3usize {
                let reference = plan_queries(n, r, 0, &mut RngCoins(&mut rng)).unwrap();
                for target in 1..r {
                    let b = plan_queries(n, r, target, &mut RngCoins(&mut rng)).unwrap();
                    for (a, c) in reference.per_server.iter().zip(&b.per_server) {
                        assert_eq!(shapes(a), shapes(c));
                        let ka: Vec<_> = a.iter().map(|x| x.supers()).collect();
                        let kc: Vec<_> = c.iter().map(|x| x.supers()).collect();
                        assert_eq!(ka, kc, "emitted order must not depend on the target");
                    }
                }
            }
        }
    }

    #[test]
    fn download_accounting() {
        for n in 1..=3usize {
            for r in 1..=3usize {
                let b = plan_queries(n, r, 0, &mut RngCoins(ChaCha8Rng::seed_from_u64(9))).unwrap();
                let expect: usize = (1..=r as u32).map(|i| n.pow(i)).sum();
                if n > 1 {
                    assert_eq!(b.total_requests(), expect);
                } else {
                    assert_eq!(b.total_requests(), r);
                }
            }
        }
    }

    #[test]
    fn reconstruction_matches_direct_evaluation() {
        let q = PrimeOrder::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=3usize {
            for r in 1..=3usize {
                let len = symbol_len(n, r).unwrap();
                for _ in 0..20 {
                    let supers = random_supers(q, r, len, &mut rng);
                    for target in 0..r {
                        let (got, _) = retrieve(&supers, n, target, &mut RngCoins(&mut rng)).unwrap();
                        assert_eq!(&got, supers.get(target).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn exhaustive_binary_contents() {
        let q = PrimeOrder::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for bits in 0u32..256 {
            let vals: Vec<u64> = (0..8).map(|i| u64::from((bits >> i) & 1)).collect();
            let supers = SuperMessageSet::from_vectors(vec![
                SymbolVector::from_values(q, vals[..4].to_vec()).unwrap(),
                SymbolVector::from_values(q, vals[4..].to_vec()).unwrap(),
            ])
            .unwrap();
            for target in 0..2 {
                let (got, downloaded) = retrieve(&supers, 2, target, &mut RngCoins(&mut rng)).unwrap();
                assert_eq!(downloaded, 6);
                assert_eq!(&got, supers.get(target).unwrap());
            }
        }
    }

    #[test]
    fn same_symbol_twice_in_binary_field_is_zero() {
        let q = PrimeOrder::new(2).unwrap();
        let v = SymbolVector::from_values(q, [1, 0]).unwrap();
        let supers = SuperMessageSet::from_vectors(vec![v.clone(), v]).unwrap();
        let req = SymbolRequest::new(vec![(0, 0), (1, 0)]).unwrap();
        assert_eq!(answer(&[req], &supers).unwrap(), vec![q.zero()]);
    }

    #[test]
    fn answer_errors() {
        let q = PrimeOrder::new(3).unwrap();
        let supers = SuperMessageSet::from_vectors(vec![SymbolVector::zeros(q, 2)]).unwrap();
        let bad = SymbolRequest::new(vec![(0, 2)]).unwrap();
        assert!(matches!(answer(&[bad], &supers), Err(Error::OutOfRange { position: 2, .. })));
        assert!(SymbolRequest::new(vec![(0, 0), (0, 1)]).is_err());
        assert!(SymbolRequest::new(vec![]).is_err());
    }

    #[test]
    fn tampered_bundle_is_rejected() {
        let q = PrimeOrder::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let supers = random_supers(q, 2, 4, &mut rng);
        let mut b = plan_queries(2, 2, 0, &mut RngCoins(&mut rng)).unwrap();
        // drop the interference sum from server 1
        let idx = b.per_server[1].iter().position(|r| r.supers() == vec![1]).unwrap();
        b.per_server[1].remove(idx);
        let per_server = b.per_server.iter().map(|r| answer(r, &supers).unwrap()).collect();
        let err = reconstruct(&b, &AnswerBundle { per_server }, 0).unwrap_err();
        assert!(matches!(err, Error::MalformedPlan(_)));
    }

    #[test]
    fn exact_view_distribution_is_target_independent() {
        // N=2, r=2: every permutation pair, per server
        let mut dists: Vec<Vec<BTreeMap<Vec<SymbolRequest>, Rational>>> = Vec::new();
        for target in 0..2 {
            let mut per_server = vec![BTreeMap::new(); 2];
            let leaves = explore(
                1_000,
                |c| plan_queries(2, 2, target, c),
                |b, p| {
                    for (n, list) in b.per_server.into_iter().enumerate() {
                        *per_server[n].entry(list).or_insert_with(ratio::zero) += p.clone();
                    }
                },
            )
            .unwrap();
            assert_eq!(leaves, 24 * 24);
            dists.push(per_server);
        }
        assert_eq!(dists[0], dists[1]);
    }

    #[test]
    fn sampled_view_marginals_for_three_supers() {
        // N=2, r=3: per-slot position marginals against the uniform reference
        const SAMPLES: usize = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let len = 8;
        for target in 0..3 {
            let mut hist: BTreeMap<(usize, usize, usize, usize), usize> = BTreeMap::new();
            for _ in 0..SAMPLES {
                let b = plan_queries(2, 3, target, &mut RngCoins(&mut rng)).unwrap();
                for (server, list) in b.per_server.iter().enumerate() {
                    let mut used = vec![vec![false; len]; 3];
                    for (slot, req) in list.iter().enumerate() {
                        for &(s, p) in req.terms() {
                            assert!(!used[s][p], "position reused within one server");
                            used[s][p] = true;
                            *hist.entry((server, slot, s, p)).or_default() += 1;
                        }
                    }
                }
            }
            let mut cells: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
            for ((server, slot, s, p), c) in hist {
                cells.entry((server, slot, s)).or_insert_with(|| vec![0; len])[p] = c;
            }
            for (key, counts) in cells {
                let tv: f64 = counts
                    .iter()
                    .map(|&c| (c as f64 / SAMPLES as f64 - 1.0 / len as f64).abs())
                    .sum::<f64>()
                    / 2.0;
                assert!(tv < 0.01, "target {target} cell {key:?} tv {tv}");
            }
        }
    }

    #[test]
    fn dependent_groups_are_rejected() {
        let params = crate::instance::Params::new(crate::instance::Model::I, 2, 3, 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let db = crate::instance::sample_database(&params, &mut rng);
        let q = params.q;
        let g = Group {
            indices: vec![0, 1],
            coeffs: vec![q.element(1), q.element(2)],
        };
        let g2 = Group {
            indices: vec![1, 0],
            coeffs: vec![q.element(1), q.element(1)],
        };
        let g3 = Group {
            indices: vec![0, 1],
            coeffs: vec![q.element(2), q.element(1)],
        };
        assert!(SuperMessageSet::form(&db, &[g.clone(), g2]).is_ok());
        assert!(SuperMessageSet::form(&db, &[g, g3.clone(), g3]).is_err());
    }
}
