//! Randomized partitioning of the message indices into coded groups.
//!
//! Model I uses randomized partitioning (RP): the demand and the side
//! information support form one group of size `M+1`, and the remaining
//! indices, padded with a few duplicated indices, fill `r-1` more groups.
//! Model II uses the modified scheme (MRP) with two groups. In both cases the
//! number of duplicated indices drawn from each pool follows a
//! [`SelectionDistribution`] chosen so that, given the revealed groups, every
//! index is equally likely to be the demand.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::coins::{self, Coins};
use crate::combin::{binomial, factorial};
use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeOrder};
use crate::instance::Instance;
use crate::linsys::{self, Solved};
use crate::ratio::{self, Rational};

/// Structural-equation enumeration gives up beyond this many duplicate layouts.
const MAX_LAYOUTS: u128 = 200_000;

/// How many duplicated indices come from the demand (`w`), the support (`s`)
/// and the remaining pool (`t`). MRP profiles leave `s` at zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Profile {
    pub w: usize,
    pub s: usize,
    pub t: usize,
}

impl Profile {
    pub const fn new(w: usize, s: usize, t: usize) -> Self {
        Self { w, s, t }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(w={}, s={}, t={})", self.w, self.s, self.t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Model I randomized partitioning into `ceil(K/(M+1))` groups.
    Rp,
    /// Model II, two disjoint groups of size `M-1` (used when `M-1 <= K-M`).
    MrpDisjoint,
    /// Model II, two overlapping groups of size `M` covering every index.
    MrpOverlapping,
}

impl Scheme {
    pub fn for_model_ii(k: usize, m: usize) -> Scheme {
        if m - 1 <= k - m {
            Scheme::MrpDisjoint
        } else {
            Scheme::MrpOverlapping
        }
    }
}

/// Exact probabilities over selection profiles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionDistribution {
    scheme: Scheme,
    n_messages: usize,
    side_size: usize,
    entries: BTreeMap<Profile, Rational>,
    determined: bool,
}

impl SelectionDistribution {
    /// Wraps caller-supplied probabilities after checking they sum to one,
    /// are nonnegative and satisfy the scheme's size equation.
    pub fn from_entries(
        scheme: Scheme,
        n_messages: usize,
        side_size: usize,
        entries: BTreeMap<Profile, Rational>,
    ) -> Result<Self> {
        let target = selection_size(scheme, n_messages, side_size)?;
        let mut total = ratio::zero();
        for (p, pr) in &entries {
            if pr.is_negative() {
                return Err(Error::DistributionMismatch(format!("negative probability at {p}")));
            }
            if p.w > 1 || p.w + p.s + p.t != target {
                return Err(Error::DistributionMismatch(format!(
                    "profile {p} violates the size equation (selections must total {target})"
                )));
            }
            total += pr;
        }
        if total != ratio::one() {
            return Err(Error::DistributionMismatch(format!(
                "probabilities sum to {}",
                ratio::to_fraction_string(&total)
            )));
        }
        Ok(Self {
            scheme,
            n_messages,
            side_size,
            entries,
            determined: false,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn n_messages(&self) -> usize {
        self.n_messages
    }

    pub fn side_size(&self) -> usize {
        self.side_size
    }

    pub fn entries(&self) -> &BTreeMap<Profile, Rational> {
        &self.entries
    }

    pub fn probability(&self, p: Profile) -> Rational {
        self.entries.get(&p).cloned().unwrap_or_else(ratio::zero)
    }

    /// True when the uniformity equations alone pinned the solution (no tie-break).
    pub fn is_determined(&self) -> bool {
        self.determined
    }

    /// Uniform over the same support; a privacy-breaking control.
    pub fn uniform_over_profiles(&self) -> Self {
        let n = self.entries.len() as i64;
        let entries = self.entries.keys().map(|&p| (p, ratio::rat(1, n))).collect();
        Self {
            entries,
            determined: false,
            ..self.clone()
        }
    }

    /// Profiles with positive probability and integer weights proportional to them.
    fn sampling_weights(&self) -> Result<(Vec<Profile>, Vec<u128>)> {
        let lcm = self
            .entries
            .values()
            .fold(BigInt::from(1), |acc, r| acc.lcm(r.denom()));
        let mut profiles = Vec::new();
        let mut weights = Vec::new();
        for (&p, pr) in &self.entries {
            let w = (pr.numer() * (&lcm / pr.denom()))
                .to_u128()
                .ok_or(Error::Overflow("sampling weights"))?;
            profiles.push(p);
            weights.push(w);
        }
        Ok((profiles, weights))
    }
}

/// Total number of selected indices per plan.
fn selection_size(scheme: Scheme, k: usize, m: usize) -> Result<usize> {
    match scheme {
        Scheme::Rp => Ok(rp_shape(k, m)?.1),
        Scheme::MrpDisjoint => Ok(m - 1),
        Scheme::MrpOverlapping => Ok(2 * m - k),
    }
}

/// `(r, D)`: group count and number of duplicated indices for RP.
fn rp_shape(k: usize, m: usize) -> Result<(usize, usize)> {
    if k < 1 || m + 1 > k {
        return Err(Error::InvalidParams(format!(
            "randomized partitioning needs 0 <= M <= K-1, got K={k}, M={m}"
        )));
    }
    let r = k.div_ceil(m + 1);
    Ok((r, r * (m + 1) - k))
}

/// Counts labeled layouts of the non-target groups: each doubly placed index
/// takes a slot in two distinct groups, every other index one slot, and each
/// group ends up exactly full. Memoized over the sorted remaining capacities.
#[derive(Default)]
pub(crate) struct LayoutCounter {
    memo: HashMap<(Vec<usize>, usize), u128>,
}

impl LayoutCounter {
    pub(crate) fn count(&mut self, caps: &[usize], doubles: usize) -> Result<u128> {
        let mut key_caps = caps.to_vec();
        key_caps.sort_unstable();
        let key = (key_caps, doubles);
        if let Some(&v) = self.memo.get(&key) {
            return Ok(v);
        }
        let v = if doubles == 0 {
            // singles fill the remaining capacity: multinomial(sum; caps)
            let total: usize = caps.iter().sum();
            let mut acc = factorial(total as u64);
            for &c in caps {
                acc /= factorial(c as u64);
            }
            acc
        } else {
            let mut acc: u128 = 0;
            let mut caps = key.0.clone();
            for g in 0..caps.len() {
                for h in g + 1..caps.len() {
                    if caps[g] == 0 || caps[h] == 0 {
                        continue;
                    }
                    caps[g] -= 1;
                    caps[h] -= 1;
                    let sub = self.count(&caps, doubles - 1)?;
                    caps[g] += 1;
                    caps[h] += 1;
                    acc = acc.checked_add(sub).ok_or(Error::Overflow("layout count"))?;
                }
            }
            acc
        };
        self.memo.insert(key, v);
        Ok(v)
    }
}

/// Number of plan families (given `W` and `S`) produced by an RP profile,
/// up to the constant `(r-1)!` from labeling the non-target groups.
fn rp_profile_count(k: usize, m: usize, p: Profile, counter: &mut LayoutCounter) -> Result<u128> {
    let (r, _) = rp_shape(k, m)?;
    let pool = k - m - 1;
    if p.w > 1 || p.s > m || p.t > pool {
        return Ok(0);
    }
    if r == 1 {
        return Ok(u128::from(p == Profile::new(0, 0, 0)));
    }
    let layouts = counter.count(&vec![m + 1; r - 1], p.t)?;
    binomial(m as u64, p.s as u64)
        .checked_mul(binomial(pool as u64, p.t as u64))
        .and_then(|x| x.checked_mul(layouts))
        .ok_or(Error::Overflow("profile count"))
}

/// Every multiset of `d` edges on `r` nodes with all degrees `<= cap`.
fn duplicate_layouts(r: usize, d: usize, cap: usize) -> Result<Vec<Vec<usize>>> {
    let edges: Vec<(usize, usize)> = (0..r)
        .flat_map(|g| (g + 1..r).map(move |h| (g, h)))
        .collect();
    if d > 0 && edges.is_empty() {
        return Ok(Vec::new());
    }
    let total = binomial((edges.len() + d).saturating_sub(1) as u64, d as u64);
    if total > MAX_LAYOUTS {
        return Err(Error::CapExceeded {
            count: total,
            cap: MAX_LAYOUTS,
        });
    }
    let mut out = Vec::new();
    let mut chosen = Vec::with_capacity(d);
    fn rec(
        start: usize,
        d: usize,
        edges: &[(usize, usize)],
        deg: &mut Vec<usize>,
        cap: usize,
        chosen: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if chosen.len() == d {
            out.push(deg.clone());
            // the edge list itself is needed for the dup masses
            let flat: Vec<usize> = chosen.iter().flat_map(|&(a, b)| [a, b]).collect();
            out.push(flat);
            return;
        }
        for e in start..edges.len() {
            let (g, h) = edges[e];
            if deg[g] == cap || deg[h] == cap {
                continue;
            }
            deg[g] += 1;
            deg[h] += 1;
            chosen.push((g, h));
            rec(e, d, edges, deg, cap, chosen, out);
            chosen.pop();
            deg[g] -= 1;
            deg[h] -= 1;
        }
    }
    let mut deg = vec![0; r];
    rec(0, d, &edges, &mut deg, cap, &mut chosen, &mut out);
    Ok(out)
}

type Expr = BTreeMap<usize, i64>;

fn push_equalities(exprs: &[Expr], vars: usize, rows: &mut BTreeSet<Vec<i64>>) {
    let dense = |e: &Expr| {
        let mut v = vec![0i64; vars];
        for (&i, &c) in e {
            v[i] += c;
        }
        v
    };
    let Some(first) = exprs.first() else { return };
    let reference = dense(first);
    for e in &exprs[1..] {
        let row: Vec<i64> = dense(e).iter().zip(&reference).map(|(a, b)| a - b).collect();
        if row.iter().any(|&x| x != 0) {
            rows.insert(row);
        }
    }
}

/// Solves for per-family likelihoods `f` and converts them to profile
/// probabilities `p = count * f`.
///
/// `rows` are the homogeneous uniformity equations over `f`; if they leave
/// freedom the `tie_break` rows are appended.
fn solve_profiles(
    profiles: &[Profile],
    counts: &[u128],
    rows: BTreeSet<Vec<i64>>,
    tie_break: &[Vec<i64>],
) -> Result<(BTreeMap<Profile, Rational>, bool)> {
    let vars = profiles.len();
    let to_rat = |row: &Vec<i64>| row.iter().map(|&x| ratio::rat(x, 1)).collect::<Vec<_>>();
    let norm: Vec<Rational> = counts.iter().map(|&c| ratio::int(c)).collect();

    let build = |extra: &[Vec<i64>]| {
        let mut a: Vec<Vec<Rational>> = rows.iter().map(to_rat).collect();
        a.extend(extra.iter().map(to_rat));
        let mut b = vec![ratio::zero(); a.len()];
        a.push(norm.clone());
        b.push(ratio::one());
        (a, b)
    };

    let describe = || {
        let names: Vec<String> = profiles.iter().map(|p| format!("f{p}")).collect();
        let eqs: Vec<String> = rows
            .iter()
            .map(|r| {
                let terms: Vec<String> = r
                    .iter()
                    .zip(&names)
                    .filter(|(c, _)| **c != 0)
                    .map(|(c, n)| format!("{c}*{n}"))
                    .collect();
                format!("{} = 0", terms.join(" + "))
            })
            .collect();
        format!("unknowns [{}]; equations [{}]", names.join(", "), eqs.join("; "))
    };

    let (a, b) = build(&[]);
    let (f, determined) = match linsys::solve(a, b, vars) {
        Solved::Unique(x) => (x, true),
        Solved::Inconsistent => return Err(Error::Infeasible(describe())),
        Solved::Underdetermined { .. } => {
            let (a, b) = build(tie_break);
            match linsys::solve(a, b, vars) {
                Solved::Unique(x) => (x, false),
                _ => return Err(Error::Infeasible(describe())),
            }
        }
    };
    let mut entries = BTreeMap::new();
    for ((p, c), fv) in profiles.iter().zip(counts).zip(f) {
        let pr = fv * ratio::int(*c);
        if pr.is_negative() {
            return Err(Error::Infeasible(format!("negative probability for {p}: {}", describe())));
        }
        if !pr.is_zero() {
            entries.insert(*p, pr);
        }
    }
    Ok((entries, determined))
}

/// Selection distribution for Model I randomized partitioning.
///
/// Unknowns are the likelihoods `f(w,s,t)` of one specific plan family given
/// `(W, S)`. For every layout of the duplicated indices across the `r`
/// groups, the posterior mass of each index must be equal: a non-duplicated
/// index in a group carrying `d` duplicates contributes `f(0, d, D-d)`, a
/// duplicated index shared by groups `g, h` contributes
/// `f(1, d_g-1, D-d_g) + f(1, d_h-1, D-d_h)`. When those equations leave
/// freedom, duplicated indices split their mass evenly across both groups.
pub fn solve_rp_distribution(k: usize, m: usize) -> Result<SelectionDistribution> {
    let (r, d) = rp_shape(k, m)?;
    let pool = k - m - 1;
    let mut counter = LayoutCounter::default();

    let mut profiles = Vec::new();
    let mut counts = Vec::new();
    for w in 0..=1usize.min(d) {
        for s in 0..=m.min(d - w) {
            let t = d - w - s;
            if t > pool {
                continue;
            }
            let p = Profile::new(w, s, t);
            let c = rp_profile_count(k, m, p, &mut counter)?;
            if c > 0 {
                profiles.push(p);
                counts.push(c);
            }
        }
    }
    if profiles.is_empty() {
        return Err(Error::Infeasible(format!("no feasible profile for K={k}, M={m}")));
    }
    let var_of: HashMap<Profile, usize> = profiles.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let var = |p: Profile| {
        var_of
            .get(&p)
            .copied()
            .ok_or_else(|| Error::Infeasible(format!("layout requires infeasible profile {p}")))
    };

    let mut rows = BTreeSet::new();
    match duplicate_layouts(r, d, m + 1) {
        Ok(layouts) => {
            for pair in layouts.chunks(2) {
                let (deg, flat) = (&pair[0], &pair[1]);
                let mut exprs: Vec<Expr> = Vec::new();
                for &dg in deg {
                    if dg < m + 1 {
                        exprs.push(BTreeMap::from([(var(Profile::new(0, dg, d - dg))?, 1)]));
                    }
                }
                for e in flat.chunks(2) {
                    let mut ex = Expr::new();
                    for &g in e {
                        let dg = deg[g];
                        *ex.entry(var(Profile::new(1, dg - 1, d - dg))?).or_insert(0) += 1;
                    }
                    exprs.push(ex);
                }
                push_equalities(&exprs, profiles.len(), &mut rows);
            }
        }
        // too many layouts to enumerate: rely on the even-split equations alone
        Err(Error::CapExceeded { .. }) => {}
        Err(e) => return Err(e),
    }

    // even split: f(0,.) all equal, f(1,.) half of that
    let reference = var(Profile::new(0, d, 0))?;
    let tie_break: Vec<Vec<i64>> = profiles
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != reference)
        .map(|(i, p)| {
            let mut row = vec![0i64; profiles.len()];
            row[i] = if p.w == 1 { 2 } else { 1 };
            row[reference] -= 1;
            row
        })
        .collect();

    let (entries, determined) = solve_profiles(&profiles, &counts, rows, &tie_break)?;
    Ok(SelectionDistribution {
        scheme: Scheme::Rp,
        n_messages: k,
        side_size: m,
        entries,
        determined,
    })
}

fn mrp_profiles(scheme: Scheme, k: usize, m: usize) -> [(Profile, u128); 2] {
    match scheme {
        Scheme::MrpDisjoint => {
            let pool = (k - m) as u64;
            [
                (Profile::new(0, 0, m - 1), binomial(pool, (m - 1) as u64)),
                (Profile::new(1, 0, m - 2), binomial(pool, (m - 2) as u64)),
            ]
        }
        Scheme::MrpOverlapping => {
            let u = 2 * m - k;
            [
                (Profile::new(0, 0, u), binomial((m - 1) as u64, u as u64)),
                (Profile::new(1, 0, u - 1), binomial((m - 1) as u64, (u - 1) as u64)),
            ]
        }
        Scheme::Rp => unreachable!("RP profiles are enumerated separately"),
    }
}

/// Selection distribution for Model II modified partitioning.
///
/// Disjoint template: an index outside both groups could be the demand with
/// either group as the recovery group (`2 f(0)`), an index inside a group only
/// with the other group as recovery group (`f(1)`). Overlapping template: an
/// index in one group only has mass `f(0)`, one in both groups `2 f(1)`.
pub fn solve_mrp_distribution(k: usize, m: usize, q: PrimeOrder) -> Result<SelectionDistribution> {
    if m < 3 || m + 1 > k {
        return Err(Error::InvalidParams(format!(
            "modified partitioning needs 3 <= M <= K-1, got K={k}, M={m}"
        )));
    }
    if q.get() < 3 {
        return Err(Error::InvalidParams("modified partitioning needs q >= 3".into()));
    }
    let scheme = Scheme::for_model_ii(k, m);
    let pc = mrp_profiles(scheme, k, m);
    let profiles: Vec<Profile> = pc.iter().filter(|(_, c)| *c > 0).map(|(p, _)| *p).collect();
    let counts: Vec<u128> = pc.iter().filter(|(_, c)| *c > 0).map(|(_, c)| *c).collect();
    let mut rows = BTreeSet::new();
    if profiles.len() == 2 {
        let row = match scheme {
            Scheme::MrpDisjoint => vec![2, -1],
            _ => vec![1, -2],
        };
        rows.insert(row);
    }
    let (entries, determined) = solve_profiles(&profiles, &counts, rows, &[])?;
    Ok(SelectionDistribution {
        scheme,
        n_messages: k,
        side_size: m,
        entries,
        determined,
    })
}

/// One index sequence with its aligned coefficient sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Group {
    pub indices: Vec<usize>,
    pub coeffs: Vec<FieldElement>,
}

impl Group {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn permuted(&self, perm: &[usize]) -> Group {
        Group {
            indices: perm.iter().map(|&j| self.indices[j]).collect(),
            coeffs: perm.iter().map(|&j| self.coeffs[j]).collect(),
        }
    }
}

/// User-side result of RP/MRP: the groups before and after shuffling plus
/// the secret bookkeeping needed for recovery.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionPlan {
    pub scheme: Scheme,
    pub profile: Profile,
    /// Internal order; entry 0 is the recovery group.
    pub pre_groups: Vec<Group>,
    /// `revealed group = pre_group[perm[j]]` for each slot `j`.
    pub within_perms: Vec<Vec<usize>>,
    /// Sent position `i` carries internal group `sent_order[i]`.
    pub sent_order: Vec<usize>,
    pub revealed: Vec<Group>,
    /// Sent position of the recovery group.
    pub target: usize,
    /// `c` with `superX_target - Y = c * X_W`.
    pub target_coeff: FieldElement,
}

impl PartitionPlan {
    fn assemble<C: Coins + ?Sized>(
        scheme: Scheme,
        profile: Profile,
        pre_groups: Vec<Group>,
        target_coeff: FieldElement,
        coins: &mut C,
    ) -> Self {
        let within_perms: Vec<Vec<usize>> = pre_groups
            .iter()
            .map(|g| coins::permutation(coins, g.len()))
            .collect();
        let sent_order = coins::permutation(coins, pre_groups.len());
        let revealed = sent_order
            .iter()
            .map(|&g| pre_groups[g].permuted(&within_perms[g]))
            .collect();
        let target = sent_order.iter().position(|&g| g == 0).expect("group 0 is sent");
        Self {
            scheme,
            profile,
            pre_groups,
            within_perms,
            sent_order,
            revealed,
            target,
            target_coeff,
        }
    }

    /// Re-applies the stored shuffles to the pre-shuffle groups.
    pub fn reshuffled(&self) -> Vec<Group> {
        self.sent_order
            .iter()
            .map(|&g| self.pre_groups[g].permuted(&self.within_perms[g]))
            .collect()
    }
}

fn random_unit<C: Coins + ?Sized>(q: PrimeOrder, coins: &mut C) -> FieldElement {
    q.element(1 + coins.uniform(q.unit_count() as usize) as u64)
}

fn draw_profile<C: Coins + ?Sized>(dist: &SelectionDistribution, coins: &mut C) -> Result<Profile> {
    let (profiles, weights) = dist.sampling_weights()?;
    Ok(profiles[coins.weighted(&weights)])
}

/// Builds a Model I plan with randomized partitioning.
pub fn rp_build<C: Coins + ?Sized>(
    inst: &Instance,
    dist: &SelectionDistribution,
    q: PrimeOrder,
    coins: &mut C,
) -> Result<PartitionPlan> {
    let k = dist.n_messages;
    let m = dist.side_size;
    if dist.scheme != Scheme::Rp {
        return Err(Error::DistributionMismatch("expected an RP distribution".into()));
    }
    if inst.support.len() != m || inst.support.contains(&inst.demand) || inst.demand >= k {
        return Err(Error::InvalidInstance(format!(
            "RP needs W outside S with |S| = {m} and indices below {k}"
        )));
    }
    let (r, d) = rp_shape(k, m)?;
    let pool: Vec<usize> = (0..k)
        .filter(|&i| i != inst.demand && !inst.support.contains(&i))
        .collect();

    let profile = draw_profile(dist, coins)?;
    if profile.w + profile.s + profile.t != d || profile.s > m || profile.t > pool.len() {
        return Err(Error::DistributionMismatch(format!(
            "profile {profile} does not fit K={k}, M={m}"
        )));
    }
    let s_dups = coins::subset(coins, &inst.support, profile.s);
    let t_dups = coins::subset(coins, &pool, profile.t);
    let c = random_unit(q, coins);

    let mut recovery = Group {
        indices: vec![inst.demand],
        coeffs: vec![c],
    };
    recovery.indices.extend(&inst.support);
    recovery.coeffs.extend(&inst.coeffs);

    let mut groups = vec![recovery];
    if r > 1 {
        let n_other = r - 1;
        let mut members: Vec<Vec<usize>> = vec![Vec::with_capacity(m + 1); n_other];
        let mut caps = vec![m + 1; n_other];
        let mut counter = LayoutCounter::default();
        let pairs: Vec<(usize, usize)> = (0..n_other)
            .flat_map(|g| (g + 1..n_other).map(move |h| (g, h)))
            .collect();
        for (done, &dup) in t_dups.iter().enumerate() {
            let left = t_dups.len() - done - 1;
            let mut weights = Vec::with_capacity(pairs.len());
            for &(g, h) in &pairs {
                if caps[g] == 0 || caps[h] == 0 {
                    weights.push(0);
                    continue;
                }
                let mut after = caps.clone();
                after[g] -= 1;
                after[h] -= 1;
                weights.push(counter.count(&after, left)?);
            }
            if weights.iter().all(|&w| w == 0) {
                return Err(Error::DistributionMismatch(format!(
                    "profile {profile} admits no layout"
                )));
            }
            let (g, h) = pairs[coins.weighted(&weights)];
            members[g].push(dup);
            members[h].push(dup);
            caps[g] -= 1;
            caps[h] -= 1;
        }
        let mut singles: Vec<usize> = s_dups.clone();
        if profile.w == 1 {
            singles.push(inst.demand);
        }
        singles.extend(pool.iter().filter(|i| !t_dups.contains(i)));
        singles.sort_unstable();
        if singles.len() != caps.iter().sum::<usize>() {
            return Err(Error::DistributionMismatch(format!(
                "profile {profile} leaves {} singles for {} slots",
                singles.len(),
                caps.iter().sum::<usize>()
            )));
        }
        for idx in singles {
            let weights: Vec<u128> = caps.iter().map(|&c| c as u128).collect();
            let g = coins.weighted(&weights);
            members[g].push(idx);
            caps[g] -= 1;
        }
        for indices in members {
            let coeffs = (0..indices.len()).map(|_| random_unit(q, coins)).collect();
            groups.push(Group { indices, coeffs });
        }
    } else if profile != Profile::new(0, 0, 0) {
        return Err(Error::DistributionMismatch(format!(
            "single-group plan cannot use profile {profile}"
        )));
    }
    Ok(PartitionPlan::assemble(Scheme::Rp, profile, groups, c, coins))
}

/// Builds a Model II plan with modified partitioning (two groups).
pub fn mrp_build<C: Coins + ?Sized>(
    inst: &Instance,
    dist: &SelectionDistribution,
    q: PrimeOrder,
    coins: &mut C,
) -> Result<PartitionPlan> {
    let k = dist.n_messages;
    let m = dist.side_size;
    if q.get() < 3 {
        return Err(Error::InvalidParams("modified partitioning needs q >= 3".into()));
    }
    if !matches!(dist.scheme, Scheme::MrpDisjoint | Scheme::MrpOverlapping) {
        return Err(Error::DistributionMismatch("expected an MRP distribution".into()));
    }
    let c_w = inst.coeff_of(inst.demand).ok_or_else(|| {
        Error::InvalidInstance("modified partitioning needs W inside S".into())
    })?;
    if inst.support.len() != m || m < 3 || m + 1 > k {
        return Err(Error::InvalidInstance(format!("MRP needs 3 <= |S| = {m} <= K-1")));
    }
    let outside: Vec<usize> = (0..k).filter(|i| !inst.support.contains(i)).collect();
    let rest: Vec<(usize, FieldElement)> = inst
        .support
        .iter()
        .zip(&inst.coeffs)
        .filter(|(&i, _)| i != inst.demand)
        .map(|(&i, &c)| (i, c))
        .collect();

    let profile = draw_profile(dist, coins)?;
    let (recovery, mut other, target_coeff) = match dist.scheme {
        Scheme::MrpDisjoint => {
            if profile.w + profile.t != m - 1 || profile.t > outside.len() {
                return Err(Error::DistributionMismatch(format!("profile {profile} does not fit")));
            }
            let picked = coins::subset(coins, &outside, profile.t);
            let recovery = Group {
                indices: rest.iter().map(|&(i, _)| i).collect(),
                coeffs: rest.iter().map(|&(_, c)| c).collect(),
            };
            let mut other = Vec::new();
            if profile.w == 1 {
                other.push(inst.demand);
            }
            other.extend(picked);
            // superX = Y - c_W X_W
            (recovery, other, -c_w)
        }
        _ => {
            if profile.w + profile.t != 2 * m - k || profile.t > rest.len() {
                return Err(Error::DistributionMismatch(format!("profile {profile} does not fit")));
            }
            let alternatives: Vec<FieldElement> = q.units().filter(|&u| u != c_w).collect();
            let c_alt = alternatives[coins.uniform(alternatives.len())];
            let rest_idx: Vec<usize> = rest.iter().map(|&(i, _)| i).collect();
            let picked = coins::subset(coins, &rest_idx, profile.t);
            let recovery = Group {
                indices: inst.support.clone(),
                coeffs: inst
                    .support
                    .iter()
                    .zip(&inst.coeffs)
                    .map(|(&i, &c)| if i == inst.demand { c_alt } else { c })
                    .collect(),
            };
            let mut other = outside.clone();
            if profile.w == 1 {
                other.push(inst.demand);
            }
            other.extend(picked);
            // superX - Y = (c' - c_W) X_W
            (recovery, other, c_alt.try_sub(c_w)?)
        }
    };
    let coeffs = (0..other.len()).map(|_| random_unit(q, coins)).collect();
    let other = Group {
        indices: std::mem::take(&mut other),
        coeffs,
    };
    Ok(PartitionPlan::assemble(
        dist.scheme,
        profile,
        vec![recovery, other],
        target_coeff,
        coins,
    ))
}
