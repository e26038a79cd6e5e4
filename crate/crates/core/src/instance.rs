//! Problem instances: parameters, the replicated database, demand and
//! coded side information, plus samplers for the uniform priors.

use std::fmt;

use rand::Rng;
use serde::{Serialize, Serializer};

use crate::coins::{self, Coins, RngCoins};
use crate::combin::binomial;
use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeOrder, SymbolVector};

/// Longest message the simulator will allocate, in symbols.
pub const MAX_MESSAGE_LEN: u64 = 1 << 22;

/// Whether the demand lies outside (I) or inside (II) the side-information support.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    I,
    II,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::I => "I",
            Model::II => "II",
        })
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" | "i" => Ok(Model::I),
            "II" | "2" | "ii" => Ok(Model::II),
            other => Err(Error::InvalidParams(format!("unknown model {other:?}"))),
        }
    }
}

impl Serialize for Model {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Which retrieval protocol a parameter set runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolPath {
    /// Demand outside the support: randomized partitioning + multi-server PIR.
    Partition,
    /// Demand inside a support of size 2: one direct message request.
    Pair,
    /// Demand inside a support of size 3..K-1: modified partitioning into two groups.
    ModifiedPartition,
    /// Support is the whole database: one direct combination request.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Params {
    pub model: Model,
    pub n_servers: usize,
    pub n_messages: usize,
    pub side_size: usize,
    #[serde(serialize_with = "ser_order")]
    pub q: PrimeOrder,
    pub msg_len: usize,
}

fn ser_order<S: Serializer>(q: &PrimeOrder, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(q.get())
}

impl Params {
    pub fn new(model: Model, n_servers: usize, n_messages: usize, side_size: usize, q: u64) -> Result<Self> {
        let q = PrimeOrder::new(q)?;
        let (n, k, m) = (n_servers, n_messages, side_size);
        if n < 1 {
            return Err(Error::InvalidParams("need at least one server (N >= 1)".into()));
        }
        if k < 2 {
            return Err(Error::InvalidParams("need at least two messages (K >= 2)".into()));
        }
        let msg_len = match model {
            Model::I => {
                if m > k - 1 {
                    return Err(Error::InvalidParams(format!(
                        "model I requires 0 <= M <= K-1, got M={m}, K={k}"
                    )));
                }
                checked_len(n as u64, k.div_ceil(m + 1) as u32)?
            }
            Model::II => {
                if m < 2 || m > k {
                    return Err(Error::InvalidParams(format!(
                        "model II requires 2 <= M <= K, got M={m}, K={k}"
                    )));
                }
                if q.get() < 3 {
                    return Err(Error::InvalidParams(
                        "model II requires q >= 3 (a second nonzero coefficient must exist)".into(),
                    ));
                }
                if m >= 3 && m < k {
                    checked_len(n as u64, 2)?
                } else {
                    1
                }
            }
        };
        Ok(Self {
            model,
            n_servers: n,
            n_messages: k,
            side_size: m,
            q,
            msg_len,
        })
    }

    pub fn path(&self) -> ProtocolPath {
        match self.model {
            Model::I => ProtocolPath::Partition,
            Model::II if self.side_size == 2 => ProtocolPath::Pair,
            Model::II if self.side_size == self.n_messages => ProtocolPath::Full,
            Model::II => ProtocolPath::ModifiedPartition,
        }
    }

    /// Number of super-messages the inner PIR layer runs over.
    pub fn super_count(&self) -> usize {
        match self.path() {
            ProtocolPath::Partition => self.n_messages.div_ceil(self.side_size + 1),
            ProtocolPath::ModifiedPartition => 2,
            ProtocolPath::Pair | ProtocolPath::Full => 1,
        }
    }

    /// Short label such as `II-N2-K10-M4-q3`.
    pub fn label(&self) -> String {
        format!(
            "{}-N{}-K{}-M{}-q{}",
            self.model, self.n_servers, self.n_messages, self.side_size, self.q
        )
    }
}

fn checked_len(base: u64, exp: u32) -> Result<usize> {
    match base.checked_pow(exp) {
        Some(l) if l <= MAX_MESSAGE_LEN => Ok(l as usize),
        _ => Err(Error::InvalidParams(format!(
            "message length {base}^{exp} exceeds the simulator limit of {MAX_MESSAGE_LEN} symbols"
        ))),
    }
}

/// K messages, identically replicated at every server.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Database {
    messages: Vec<SymbolVector>,
}

impl Database {
    pub fn new(params: &Params, messages: Vec<SymbolVector>) -> Result<Self> {
        if messages.len() != params.n_messages {
            return Err(Error::LengthMismatch {
                left: messages.len(),
                right: params.n_messages,
            });
        }
        for m in &messages {
            if m.order() != params.q {
                return Err(Error::FieldMismatch {
                    left: m.order().get(),
                    right: params.q.get(),
                });
            }
            if m.len() != params.msg_len {
                return Err(Error::LengthMismatch {
                    left: m.len(),
                    right: params.msg_len,
                });
            }
        }
        Ok(Self { messages })
    }

    pub fn messages(&self) -> &[SymbolVector] {
        &self.messages
    }

    pub fn message(&self, i: usize) -> Option<&SymbolVector> {
        self.messages.get(i)
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn order(&self) -> PrimeOrder {
        self.messages[0].order()
    }

    pub fn msg_len(&self) -> usize {
        self.messages[0].len()
    }

    /// `sum_j coeffs[j] * X_{indices[j]}`.
    pub fn combine(&self, indices: &[usize], coeffs: &[FieldElement]) -> Result<SymbolVector> {
        if indices.len() != coeffs.len() {
            return Err(Error::LengthMismatch {
                left: indices.len(),
                right: coeffs.len(),
            });
        }
        let mut acc = SymbolVector::zeros(self.order(), self.msg_len());
        for (&i, &c) in indices.iter().zip(coeffs) {
            let x = self.messages.get(i).ok_or_else(|| {
                Error::MalformedQuery(format!("message index {i} out of range {}", self.len()))
            })?;
            acc = SymbolVector::axpy(c, x, &acc)?;
        }
        Ok(acc)
    }
}

pub fn sample_database<R: Rng + ?Sized>(params: &Params, rng: &mut R) -> Database {
    let messages = (0..params.n_messages)
        .map(|_| SymbolVector::random(params.q, params.msg_len, rng))
        .collect();
    Database { messages }
}

/// The demand index `W` (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Demand(pub usize);

/// Coded side information `Y = sum_{i in S} c_i X_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SideInfo {
    pub support: Vec<usize>,
    pub coeffs: Vec<FieldElement>,
    pub combo: SymbolVector,
}

impl SideInfo {
    pub fn coeff_of(&self, index: usize) -> Option<FieldElement> {
        self.support
            .iter()
            .position(|&i| i == index)
            .map(|p| self.coeffs[p])
    }
}

/// One `(W, S, C)` triple: demand, sorted support, and aligned nonzero coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Instance {
    pub demand: usize,
    pub support: Vec<usize>,
    pub coeffs: Vec<FieldElement>,
}

impl Instance {
    pub fn new(demand: usize, support: Vec<usize>, coeffs: Vec<FieldElement>) -> Self {
        Self {
            demand,
            support,
            coeffs,
        }
    }

    pub fn validate(&self, params: &Params) -> Result<()> {
        let k = params.n_messages;
        if self.support.len() != params.side_size || self.coeffs.len() != params.side_size {
            return Err(Error::InvalidInstance(format!(
                "support/coefficients must have size M={}",
                params.side_size
            )));
        }
        if self.support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInstance("support must be strictly increasing".into()));
        }
        if self.demand >= k || self.support.iter().any(|&i| i >= k) {
            return Err(Error::InvalidInstance(format!("indices must lie in 0..{k}")));
        }
        if self.coeffs.iter().any(|c| c.is_zero() || c.order() != params.q) {
            return Err(Error::InvalidInstance("coefficients must be nonzero elements of F_q".into()));
        }
        let inside = self.support.contains(&self.demand);
        match (params.model, inside) {
            (Model::I, true) => Err(Error::InvalidInstance("model I requires W outside S".into())),
            (Model::II, false) => Err(Error::InvalidInstance("model II requires W inside S".into())),
            _ => Ok(()),
        }
    }

    pub fn coeff_of(&self, index: usize) -> Option<FieldElement> {
        self.support
            .iter()
            .position(|&i| i == index)
            .map(|p| self.coeffs[p])
    }

    pub fn side_info(&self, db: &Database) -> Result<SideInfo> {
        Ok(SideInfo {
            support: self.support.clone(),
            coeffs: self.coeffs.clone(),
            combo: db.combine(&self.support, &self.coeffs)?,
        })
    }
}

/// Draws `(W, S, C)` from the model's prior using `coins`.
pub fn draw_instance<C: Coins + ?Sized>(params: &Params, coins: &mut C) -> Instance {
    let k = params.n_messages;
    let all: Vec<usize> = (0..k).collect();
    let support = coins::subset(coins, &all, params.side_size);
    let coeffs = (0..params.side_size)
        .map(|_| params.q.element(1 + coins.uniform(params.q.unit_count() as usize) as u64))
        .collect();
    let pool: Vec<usize> = match params.model {
        Model::I => all.iter().copied().filter(|i| !support.contains(i)).collect(),
        Model::II => support.clone(),
    };
    let demand = pool[coins.uniform(pool.len())];
    Instance {
        demand,
        support,
        coeffs,
    }
}

pub fn sample_instance<R: Rng + ?Sized>(params: &Params, db: &Database, rng: &mut R) -> Result<(Demand, SideInfo)> {
    let inst = draw_instance(params, &mut RngCoins(rng));
    let side = inst.side_info(db)?;
    Ok((Demand(inst.demand), side))
}

/// Number of `(W, S, C)` triples consistent with the model.
pub fn instance_count(params: &Params) -> u128 {
    let (k, m) = (params.n_messages as u64, params.side_size as u64);
    let coeff_count = (params.q.unit_count() as u128).saturating_pow(m as u32);
    let demands = match params.model {
        Model::I => k - m,
        Model::II => m,
    } as u128;
    binomial(k, m).saturating_mul(coeff_count).saturating_mul(demands)
}

/// Every consistent `(W, S, C)` exactly once, in lexicographic order.
pub fn enumerate_instances(params: &Params, cap: u128) -> Result<Vec<Instance>> {
    let count = instance_count(params);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let k = params.n_messages;
    let m = params.side_size;
    let units: Vec<FieldElement> = params.q.units().collect();
    let mut out = Vec::with_capacity(count as usize);
    for support in crate::combin::combinations(k, m) {
        let demands: Vec<usize> = match params.model {
            Model::I => (0..k).filter(|i| !support.contains(i)).collect(),
            Model::II => support.clone(),
        };
        let mut digits = vec![0usize; m];
        loop {
            let coeffs: Vec<FieldElement> = digits.iter().map(|&d| units[d]).collect();
            for &w in &demands {
                out.push(Instance::new(w, support.clone(), coeffs.clone()));
            }
            // odometer over (F_q^x)^M
            let Some(i) = (0..m).rev().find(|&i| digits[i] + 1 < units.len()) else {
                break;
            };
            digits[i] += 1;
            for d in digits.iter_mut().skip(i + 1) {
                *d = 0;
            }
        }
    }
    debug_assert_eq!(out.len() as u128, count);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn p(model: Model, n: usize, k: usize, m: usize, q: u64) -> Params {
        Params::new(model, n, k, m, q).unwrap()
    }

    #[test]
    fn message_lengths() {
        assert_eq!(p(Model::I, 2, 9, 3, 3).msg_len, 8);
        assert_eq!(p(Model::II, 2, 10, 4, 3).msg_len, 4);
        assert_eq!(p(Model::II, 3, 4, 2, 3).msg_len, 1);
        assert_eq!(p(Model::II, 3, 4, 4, 3).msg_len, 1);
        assert_eq!(p(Model::I, 3, 4, 3, 3).msg_len, 3);
        assert_eq!(p(Model::I, 2, 3, 0, 2).msg_len, 8);
    }

    #[test]
    fn param_ranges() {
        assert!(Params::new(Model::I, 2, 4, 4, 3).is_err());
        assert!(Params::new(Model::II, 2, 4, 1, 3).is_err());
        assert!(Params::new(Model::II, 2, 4, 5, 3).is_err());
        assert!(Params::new(Model::II, 2, 4, 3, 2).is_err());
        assert!(Params::new(Model::I, 0, 4, 1, 3).is_err());
        assert!(Params::new(Model::I, 2, 1, 0, 3).is_err());
        assert!(Params::new(Model::I, 2, 4, 1, 4).is_err());
        assert!(Params::new(Model::I, 10, 40, 0, 3).is_err());
    }

    #[test]
    fn sampled_database_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = p(Model::I, 2, 9, 3, 3);
        let db = sample_database(&params, &mut rng);
        assert_eq!(db.len(), 9);
        assert!(db.messages().iter().all(|m| m.len() == 8 && m.values().iter().all(|&v| v < 3)));
        assert!(Database::new(&params, db.messages().to_vec()).is_ok());
        assert!(Database::new(&params, db.messages()[..8].to_vec()).is_err());
    }

    #[test]
    fn side_info_recomputes_combination() {
        // W=1, S={2,3,4}, C=(1,2,1) in 1-based labels
        let params = p(Model::I, 2, 9, 3, 3);
        let db = sample_database(&params, &mut ChaCha8Rng::seed_from_u64(5));
        let q = params.q;
        let inst = Instance::new(0, vec![1, 2, 3], vec![q.element(1), q.element(2), q.element(1)]);
        inst.validate(&params).unwrap();
        let side = inst.side_info(&db).unwrap();
        let x = db.messages();
        let expect: Vec<u64> = (0..8)
            .map(|j| (x[1].values()[j] + 2 * x[2].values()[j] + x[3].values()[j]) % 3)
            .collect();
        assert_eq!(side.combo.values(), expect.as_slice());
    }

    #[test]
    fn model_ii_side_info() {
        let params = p(Model::II, 2, 10, 4, 3);
        let db = sample_database(&params, &mut ChaCha8Rng::seed_from_u64(6));
        let q = params.q;
        let c: Vec<_> = [1, 1, 2, 1].iter().map(|&v| q.element(v)).collect();
        let inst = Instance::new(0, vec![0, 1, 2, 3], c);
        inst.validate(&params).unwrap();
        let y = inst.side_info(&db).unwrap().combo;
        let x = db.messages();
        for j in 0..4 {
            let v = x[0].values()[j] + x[1].values()[j] + 2 * x[2].values()[j] + x[3].values()[j];
            assert_eq!(y.values()[j], v % 3);
        }
    }

    #[test]
    fn forced_demand_when_support_is_k_minus_one() {
        let params = p(Model::I, 2, 4, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let inst = draw_instance(&params, &mut RngCoins(&mut rng));
            inst.validate(&params).unwrap();
            let missing: Vec<_> = (0..4).filter(|i| !inst.support.contains(i)).collect();
            assert_eq!(missing, vec![inst.demand]);
        }
    }

    #[test]
    fn validation_rejects_bad_instances() {
        let params = p(Model::I, 2, 4, 2, 3);
        let q = params.q;
        let one = q.element(1);
        assert!(Instance::new(0, vec![0, 1], vec![one, one]).validate(&params).is_err());
        assert!(Instance::new(0, vec![2, 1], vec![one, one]).validate(&params).is_err());
        assert!(Instance::new(0, vec![1, 2], vec![one, q.zero()]).validate(&params).is_err());
        assert!(Instance::new(0, vec![1, 2], vec![one, one]).validate(&params).is_ok());
        let params2 = p(Model::II, 2, 4, 2, 3);
        assert!(Instance::new(0, vec![1, 2], vec![one, one]).validate(&params2).is_err());
    }

    #[test]
    fn enumeration_counts() {
        let a = enumerate_instances(&p(Model::I, 2, 3, 1, 2), 1_000).unwrap();
        assert_eq!(a.len(), 6);
        let b = enumerate_instances(&p(Model::II, 2, 3, 3, 3), 1_000).unwrap();
        assert_eq!(b.len(), 24);
        let c = enumerate_instances(&p(Model::I, 2, 2, 1, 2), 1_000).unwrap();
        assert_eq!(c.len(), 2);
        for set in [&a, &b, &c] {
            let uniq: HashSet<_> = set.iter().collect();
            assert_eq!(uniq.len(), set.len());
        }
        let params = p(Model::I, 2, 3, 1, 2);
        assert!(a.iter().all(|i| i.validate(&params).is_ok()));
        assert!(matches!(
            enumerate_instances(&p(Model::II, 2, 3, 3, 3), 10),
            Err(Error::CapExceeded { count: 24, cap: 10 })
        ));
    }

    #[test]
    fn sampler_marginals_are_uniform() {
        // 5-sigma binomial band per cell over 20k draws
        let draws = 20_000usize;
        for params in [p(Model::I, 2, 5, 2, 3), p(Model::II, 2, 5, 3, 3)] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut w_counts = vec![0usize; 5];
            let mut s_counts = std::collections::HashMap::new();
            let mut c_counts = vec![0usize; 2];
            for _ in 0..draws {
                let inst = draw_instance(&params, &mut RngCoins(&mut rng));
                w_counts[inst.demand] += 1;
                *s_counts.entry(inst.support.clone()).or_insert(0usize) += 1;
                c_counts[(inst.coeffs[0].value() - 1) as usize] += 1;
            }
            let check = |count: usize, prob: f64| {
                let mean = draws as f64 * prob;
                let sd = (draws as f64 * prob * (1.0 - prob)).sqrt();
                assert!(
                    (count as f64 - mean).abs() <= 5.0 * sd,
                    "count {count} vs mean {mean}"
                );
            };
            for &c in &w_counts {
                check(c, 0.2);
            }
            assert_eq!(s_counts.len(), 10);
            for &c in s_counts.values() {
                check(c, 0.1);
            }
            for &c in &c_counts {
                check(c, 0.5);
            }
        }
    }
}
