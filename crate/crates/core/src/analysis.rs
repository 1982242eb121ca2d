//! Closed-form probability bounds, exact tail oracles and message counts.
//!
//! Bounds that take `o` evaluate it as `s / q` with `s = min(n, ceil(o*q))`,
//! the sample size the protocol actually uses. For integral `o*q` this is
//! the nominal `o`; otherwise it keeps the Chernoff arguments sound against
//! the true `Bin(r, s/n)` in-degree.

use std::io::Write;

use serde::Serialize;

use crate::types::ceil_tolerant;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    /// `raw` clamped to `[0, 1]`.
    pub value: f64,
    pub applicable: bool,
    pub reason: Option<String>,
    pub raw: f64,
}

impl BoundResult {
    fn from_raw(raw: f64) -> Self {
        let value = raw.clamp(0.0, 1.0);
        let reason = (value != raw).then(|| "vacuous: clamped to [0,1]".to_string());
        BoundResult { value, applicable: true, reason, raw }
    }

    fn inapplicable(raw: f64, reason: impl Into<String>) -> Self {
        BoundResult { value: raw.clamp(0.0, 1.0), applicable: false, reason: Some(reason.into()), raw }
    }

    fn with_note(mut self, note: &str) -> Self {
        self.reason = Some(match self.reason.take() {
            Some(r) => format!("{r}; {note}"),
            None => note.to_string(),
        });
        self
    }
}

/// Sample size for overprovisioning `o` and quorum `q`.
pub fn sample_size(n: usize, o: f64, q: usize) -> usize {
    ceil_tolerant(o * q as f64).min(n)
}

/// `s / q` for the sample size the protocol uses.
pub fn effective_o(n: usize, o: f64, q: usize) -> f64 {
    sample_size(n, o, q) as f64 / q as f64
}

/// `r * s / n`: expected number of messages a fixed replica receives when
/// `r` replicas each send to an independent `s`-subset.
pub fn expected_in_degree(r: f64, s: usize, n: usize) -> f64 {
    r * s as f64 / n as f64
}

/// `1 - exp(-q (c-1)^2 / (2c))` with `c = o (n-f) / n`; needs `c > 1`.
pub fn quorum_prob_lower_bound(n: usize, f: usize, o: f64, q: usize) -> BoundResult {
    let c = effective_o(n, o, q) * (n - f) as f64 / n as f64;
    let raw = 1.0 - (-(q as f64) * (c - 1.0).powi(2) / (2.0 * c)).exp();
    if c <= 1.0 {
        return BoundResult::inapplicable(raw, format!("c = o(n-f)/n = {c:.6} <= 1"));
    }
    BoundResult::from_raw(raw)
}

/// The two overprovisioning factors for which `l = 2c/(c-1)^2`.
pub fn epsilon_overprovision(n: usize, f: usize, l: f64) -> (f64, f64) {
    let root = (2.0 * l + 1.0).sqrt();
    let scale = n as f64 / (n - f) as f64;
    (((l + 1.0) - root) / l * scale, ((l + 1.0) + root) / l * scale)
}

/// `1 - exp(-sqrt(n))`, valid when `l = 2c/(c-1)^2` and `c` lies in
/// `[2 - sqrt(3), 2 + sqrt(3)]`. Otherwise the generic quorum bound for
/// `q = ceil(l sqrt(n))` is reported, flagged inapplicable.
pub fn epsilon_quorum_bound(n: usize, f: usize, o: f64, l: f64) -> BoundResult {
    let c = o * (n - f) as f64 / n as f64;
    let sqrt3 = 3f64.sqrt();
    let q = ceil_tolerant(l * (n as f64).sqrt()).max(1);
    if c < 2.0 - sqrt3 || c > 2.0 + sqrt3 {
        return BoundResult::inapplicable(
            quorum_prob_lower_bound(n, f, o, q).raw,
            format!("c = {c:.6} outside [2-sqrt3, 2+sqrt3]"),
        );
    }
    let needed = 2.0 * c / (c - 1.0).powi(2);
    if (l - needed).abs() > 1e-9 {
        return BoundResult::inapplicable(
            quorum_prob_lower_bound(n, f, o, q).raw,
            format!("l = {l} but 2c/(c-1)^2 = {needed:.9}; generic quorum bound reported"),
        );
    }
    BoundResult::from_raw(1.0 - (-(n as f64).sqrt()).exp())
}

/// `alpha = (s/n) (n-f) (1 - exp(-sqrt(n)))`, a lower bound on the
/// expected number of Commit messages a correct replica receives.
pub fn commit_alpha(n: usize, f: usize, o: f64, q: usize) -> f64 {
    let s = sample_size(n, o, q) as f64;
    s / n as f64 * (n - f) as f64 * (1.0 - (-(n as f64).sqrt()).exp())
}

/// `1 - exp(-(alpha-q)^2 / (2 alpha))`; meaningful only for `alpha > q`.
pub fn commit_quorum_lower_bound(n: usize, f: usize, o: f64, q: usize) -> BoundResult {
    let alpha = commit_alpha(n, f, o, q);
    let raw = 1.0 - (-(alpha - q as f64).powi(2) / (2.0 * alpha)).exp();
    if alpha <= q as f64 {
        return BoundResult::inapplicable(raw.min(0.0), format!("alpha = {alpha:.6} <= q = {q}"));
    }
    BoundResult::from_raw(raw)
}

/// Probability that one correct replica decides in a view with a correct
/// leader: the commit bound minus `exp(-sqrt(n))`.
pub fn per_replica_termination_bound(n: usize, f: usize, o: f64, q: usize) -> BoundResult {
    let commit = commit_quorum_lower_bound(n, f, o, q);
    let raw = commit.raw - (-(n as f64).sqrt()).exp();
    if !commit.applicable {
        return BoundResult::inapplicable(raw, commit.reason.unwrap_or_default());
    }
    BoundResult::from_raw(raw)
}

/// Union bound over all correct replicas:
/// `1 - (n-f) (exp(-(alpha-q)^2/(2 alpha)) + exp(-sqrt(n)))`.
pub fn all_replicas_termination_bound(n: usize, f: usize, o: f64, q: usize) -> BoundResult {
    let alpha = commit_alpha(n, f, o, q);
    let miss = (-(alpha - q as f64).powi(2) / (2.0 * alpha)).exp() + (-(n as f64).sqrt()).exp();
    let raw = 1.0 - (n - f) as f64 * miss;
    if alpha <= q as f64 {
        return BoundResult::inapplicable(raw, format!("alpha = {alpha:.6} <= q = {q}"));
    }
    BoundResult::from_raw(raw)
}

/// `1 - 2 (n-f) exp(-sqrt(n))`: the asymptotic form with the hidden
/// constant set to 1. Only meaningful as a trend.
pub fn asymptotic_termination_bound(n: usize, f: usize) -> BoundResult {
    let raw = 1.0 - 2.0 * (n - f) as f64 * (-(n as f64).sqrt()).exp();
    BoundResult::from_raw(raw).with_note("asymptotic only (constant 1 in exp(-Theta(sqrt n)))")
}

/// Probability of at least one success in `k` independent views.
pub fn termination_after_k_views(p: f64, k: u32) -> f64 {
    1.0 - (1.0 - p).powi(k as i32)
}

/// Upper bound on a replica receiving `q` messages from `r` senders:
/// `exp(-delta^2 o q r / (n (delta + 2)))` with `delta = n/(o r) - 1`.
pub fn decide_prob_upper_bound(n: usize, o: f64, q: usize, r: f64) -> BoundResult {
    let o = effective_o(n, o, q);
    if r <= 0.0 {
        return BoundResult::from_raw(0.0).with_note("no senders");
    }
    let delta = n as f64 / (o * r) - 1.0;
    if delta <= 0.0 {
        return BoundResult::inapplicable(1.0, format!("r = {r} > n/o = {:.6}", n as f64 / o));
    }
    if delta > 1e6 {
        return BoundResult::from_raw(0.0).with_note("delta > 1e6");
    }
    let raw = (-delta.powi(2) * o * q as f64 * r / (n as f64 * (delta + 2.0))).exp();
    BoundResult::from_raw(raw)
}

fn split_sender_count(n: usize, f: usize) -> f64 {
    (n + f) as f64 / 2.0
}

/// Fourth power of the single-quorum bound at `r = (n+f)/2`: two correct
/// replicas on opposite sides each forming both of their quorums.
pub fn agreement_violation_in_view_bound(n: usize, f: usize, o: f64, q: usize) -> BoundResult {
    let p1 = decide_prob_upper_bound(n, o, q, split_sender_count(n, f));
    if !p1.applicable {
        return BoundResult::inapplicable(p1.raw.powi(4), p1.reason.unwrap_or_default());
    }
    BoundResult::from_raw(p1.raw.powi(4))
}

/// Square of the single-quorum bound: the same event without assuming the
/// two sides are independent.
pub fn agreement_violation_conservative_bound(n: usize, f: usize, o: f64, q: usize) -> BoundResult {
    let p1 = decide_prob_upper_bound(n, o, q, split_sender_count(n, f));
    if !p1.applicable {
        return BoundResult::inapplicable(p1.raw.powi(2), p1.reason.unwrap_or_default());
    }
    BoundResult::from_raw(p1.raw.powi(2))
}

/// `3 exp(-q delta^2 / ((delta+1)(delta+2)))` with
/// `delta = 2n/(o (n+f)) - 1`.
pub fn view_change_violation_bound(n: usize, f: usize, o: f64, q: usize) -> BoundResult {
    let o = effective_o(n, o, q);
    let delta = 2.0 * n as f64 / (o * (n + f) as f64) - 1.0;
    if delta <= 0.0 {
        return BoundResult::inapplicable(3.0, format!("o = {o:.6} >= 2n/(n+f)"));
    }
    let raw = 3.0 * (-(q as f64) * delta.powi(2) / ((delta + 1.0) * (delta + 2.0))).exp();
    BoundResult::from_raw(raw)
}

/// Union bound over `views` views of both violation events.
pub fn safety_bound(n: usize, f: usize, o: f64, q: usize, views: u32) -> BoundResult {
    let a = agreement_violation_in_view_bound(n, f, o, q);
    let b = view_change_violation_bound(n, f, o, q);
    let raw = 1.0 - views as f64 * (a.raw + b.raw);
    if !a.applicable || !b.applicable {
        let why = [a.reason, b.reason].into_iter().flatten().collect::<Vec<_>>().join("; ");
        return BoundResult::inapplicable(raw, why);
    }
    BoundResult::from_raw(raw)
}

/// `P(X <= (1-delta) mu) <= exp(-delta^2 mu / 2)` for `delta` in `(0,1)`.
pub fn chernoff_lower(mu: f64, delta: f64) -> f64 {
    (-delta * delta * mu / 2.0).exp()
}

/// `P(X >= (1+delta) mu) <= exp(-delta^2 mu / (2 + delta))` for `delta >= 0`.
pub fn chernoff_upper(mu: f64, delta: f64) -> f64 {
    (-delta * delta * mu / (2.0 + delta)).exp()
}

/// `exp(-2 r t^2)`: bounds `P(X <= E[X] - r t)` for `r` draws without
/// replacement.
pub fn hypergeometric_tail(_big_n: usize, _m: usize, r: usize, t: f64) -> f64 {
    (-2.0 * r as f64 * t * t).exp()
}

/// Exact distributions by direct summation in log space.
pub mod exact {
    fn ln_factorial(k: usize) -> f64 {
        (2..=k).map(|i| (i as f64).ln()).sum()
    }

    fn ln_choose_table(n: usize) -> Vec<f64> {
        let mut lf = vec![0.0; n + 1];
        for i in 2..=n {
            lf[i] = lf[i - 1] + (i as f64).ln();
        }
        lf
    }

    pub fn ln_choose(n: usize, k: usize) -> f64 {
        if k > n {
            return f64::NEG_INFINITY;
        }
        ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
    }

    fn binomial_ln_pmfs(trials: usize, p: f64) -> Vec<f64> {
        let lf = ln_choose_table(trials);
        (0..=trials)
            .map(|i| {
                let c = lf[trials] - lf[i] - lf[trials - i];
                let a = if i == 0 { 0.0 } else { i as f64 * p.ln() };
                let b = if i == trials { 0.0 } else { (trials - i) as f64 * (1.0 - p).ln() };
                c + a + b
            })
            .collect()
    }

    pub fn binomial_pmf(trials: usize, p: f64, k: usize) -> f64 {
        if k > trials {
            return 0.0;
        }
        binomial_ln_pmfs(trials, p)[k].exp()
    }

    /// `P(Bin(trials, p) >= k)`.
    pub fn binomial_tail_ge(trials: usize, p: f64, k: usize) -> f64 {
        if k == 0 {
            return 1.0;
        }
        if k > trials {
            return 0.0;
        }
        let pmf = binomial_ln_pmfs(trials, p);
        pmf[k..].iter().map(|x| x.exp()).sum::<f64>().min(1.0)
    }

    /// `P(Bin(trials, p) <= k)`.
    pub fn binomial_cdf(trials: usize, p: f64, k: usize) -> f64 {
        if k >= trials {
            return 1.0;
        }
        let pmf = binomial_ln_pmfs(trials, p);
        pmf[..=k].iter().map(|x| x.exp()).sum::<f64>().min(1.0)
    }

    /// `P(X <= k)` for `r` draws without replacement from `big_n` items of
    /// which `m` are marked.
    pub fn hypergeometric_cdf(big_n: usize, m: usize, r: usize, k: usize) -> f64 {
        let lf = ln_choose_table(big_n);
        let lc = |a: usize, b: usize| lf[a] - lf[b] - lf[a - b];
        let lo = r.saturating_sub(big_n - m);
        let hi = r.min(m).min(k);
        if hi < lo {
            return 0.0;
        }
        let denom = lc(big_n, r);
        (lo..=hi).map(|i| (lc(m, i) + lc(big_n - m, r - i) - denom).exp()).sum::<f64>().min(1.0)
    }
}

/// Which side of the exact value a bound must fall on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

/// A closed-form bound next to the exact probability of the event it
/// bounds, computed by direct summation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub bound: &'static str,
    pub side: Side,
    pub applicable: bool,
    pub bound_value: f64,
    pub exact: f64,
}

impl OracleCheck {
    /// Holds with a relative slack of `1e-12` for summation error.
    pub fn holds(&self) -> bool {
        let tol = 1e-12 * self.exact.abs().max(1e-300);
        match self.side {
            Side::Lower => self.bound_value <= self.exact + tol,
            Side::Upper => self.bound_value >= self.exact - tol,
        }
    }
}

/// Every bound at `p` paired with its exact counterpart. In-degrees are
/// `Bin(r, s/n)`; the commit stage uses the committer count the bound
/// itself assumes, `floor((n-f)(1 - exp(-sqrt n)))`; the split adversary
/// has `floor((n+f)/2)` senders per side.
pub fn oracle_checks(p: &GridPoint) -> Vec<OracleCheck> {
    use exact::{binomial_tail_ge, hypergeometric_cdf};
    let (n, f, o, q, s) = (p.n, p.f, p.o, p.q, p.s);
    let prob = s as f64 / n as f64;
    let miss = (-(n as f64).sqrt()).exp();
    let committers = ((n - f) as f64 * (1.0 - miss)).floor() as usize;
    let split = (n + f) / 2;
    let prepare = binomial_tail_ge(n - f, prob, q);
    let commit = binomial_tail_ge(committers, prob, q);
    let side_quorum = binomial_tail_ge(split, prob, q);
    let check = |bound, side, r: BoundResult, exact: f64| OracleCheck {
        bound,
        side,
        applicable: r.applicable,
        bound_value: r.value,
        exact,
    };
    let mut out = vec![
        check("quorum_prob_lower", Side::Lower, quorum_prob_lower_bound(n, f, o, q), prepare),
        check("epsilon_quorum", Side::Lower, epsilon_quorum_bound(n, f, o, p.l), prepare),
        check("commit_quorum_lower", Side::Lower, commit_quorum_lower_bound(n, f, o, q), commit),
        check("per_replica_termination", Side::Lower, per_replica_termination_bound(n, f, o, q), prepare * commit),
        check(
            "all_replicas_termination",
            Side::Lower,
            all_replicas_termination_bound(n, f, o, q),
            (1.0 - (n - f) as f64 * ((1.0 - prepare) + (1.0 - commit))).max(0.0),
        ),
        check("decide_prob_upper_split", Side::Upper, decide_prob_upper_bound(n, o, q, split as f64), side_quorum),
        check("agreement_violation_in_view", Side::Upper, agreement_violation_in_view_bound(n, f, o, q), side_quorum.powi(4)),
        check(
            "agreement_violation_conservative",
            Side::Upper,
            agreement_violation_conservative_bound(n, f, o, q),
            side_quorum.powi(2),
        ),
        check("view_change_violation", Side::Upper, view_change_violation_bound(n, f, o, q), (3.0 * side_quorum).min(1.0)),
        check(
            "safety_one_view",
            Side::Lower,
            safety_bound(n, f, o, q, 1),
            (1.0 - side_quorum.powi(4) - 3.0 * side_quorum).max(0.0),
        ),
    ];
    // Hoeffding for the number of correct replicas in one sample.
    let mean = s as f64 * (n - f) as f64 / n as f64;
    if mean > (q - 1) as f64 {
        let t = (mean - (q - 1) as f64) / s as f64;
        let tail = hypergeometric_tail(n, n - f, s, t);
        out.push(OracleCheck {
            bound: "hypergeometric_tail",
            side: Side::Upper,
            applicable: true,
            bound_value: tail.min(1.0),
            exact: hypergeometric_cdf(n, n - f, s, q - 1),
        });
    }
    // Chernoff on the prepare in-degree, both tails.
    let mu = (n - f) as f64 * prob;
    if mu > q as f64 {
        let delta = 1.0 - q as f64 / mu;
        out.push(OracleCheck {
            bound: "chernoff_lower",
            side: Side::Upper,
            applicable: true,
            bound_value: chernoff_lower(mu, delta),
            exact: exact::binomial_cdf(n - f, prob, q),
        });
    }
    let k = (mu * 1.25).ceil() as usize;
    out.push(OracleCheck {
        bound: "chernoff_upper",
        side: Side::Upper,
        applicable: true,
        bound_value: chernoff_upper(mu, k as f64 / mu - 1.0),
        exact: binomial_tail_ge(n - f, prob, k),
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Protocol {
    Pbft,
    ProBft,
    HotStuff,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessageCounts {
    pub protocol: Protocol,
    pub phases: Vec<(&'static str, u64)>,
}

impl MessageCounts {
    pub fn total(&self) -> u64 {
        self.phases.iter().map(|(_, c)| c).sum()
    }
}

/// Normal-case messages of one view in which every replica participates.
pub fn message_counts(protocol: Protocol, n: usize, l: f64, o: f64) -> MessageCounts {
    let n64 = n as u64;
    let others = n64.saturating_sub(1);
    let phases = match protocol {
        Protocol::Pbft => vec![("pre-prepare", others), ("prepare", n64 * others), ("commit", n64 * others)],
        Protocol::ProBft => {
            let q = ceil_tolerant(l * (n as f64).sqrt()).clamp(1, n.max(1));
            let s = sample_size(n, o, q) as u64;
            vec![("propose", others), ("prepare", n64 * s), ("commit", n64 * s)]
        }
        Protocol::HotStuff => ["prepare", "pre-commit", "commit", "decide"]
            .into_iter()
            .map(|p| (p, 2 * others))
            .collect(),
    };
    MessageCounts { protocol, phases }
}

/// A point of a parameter grid with its derived quorum sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub n: usize,
    pub f: usize,
    pub o: f64,
    pub l: f64,
    pub q: usize,
    pub s: usize,
}

impl GridPoint {
    pub fn new(n: usize, f: usize, o: f64, l: f64) -> Self {
        let q = ceil_tolerant(l * (n as f64).sqrt()).clamp(1, n);
        GridPoint { n, f, o, l, q, s: sample_size(n, o, q) }
    }
}

pub const STANDARD_NS: [usize; 5] = [25, 50, 100, 200, 400];
pub const STANDARD_FAULT_RATIOS: [f64; 4] = [0.0, 0.1, 0.2, 0.3];
pub const STANDARD_OS: [f64; 3] = [1.6, 1.7, 1.8];
pub const STANDARD_L: f64 = 2.0;

/// `n x f/n x o` with `f = floor(ratio * n)` and `l = 2`.
pub fn standard_grid() -> Vec<GridPoint> {
    let mut out = Vec::new();
    for n in STANDARD_NS {
        for ratio in STANDARD_FAULT_RATIOS {
            for o in STANDARD_OS {
                out.push(GridPoint::new(n, (ratio * n as f64).floor() as usize, o, STANDARD_L));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub n: usize,
    pub f: usize,
    pub o: f64,
    pub l: f64,
    pub q: usize,
    pub s: usize,
    pub bound: &'static str,
    pub value: f64,
    pub raw: f64,
    pub applicable: bool,
    pub reason: String,
}

pub const BOUND_NAMES: [&str; 11] = [
    "quorum_prob_lower",
    "epsilon_quorum",
    "commit_quorum_lower",
    "per_replica_termination",
    "all_replicas_termination",
    "asymptotic_termination",
    "decide_prob_upper_split",
    "agreement_violation_in_view",
    "agreement_violation_conservative",
    "view_change_violation",
    "safety_one_view",
];

/// Every bound at one grid point, in [`BOUND_NAMES`] order.
pub fn bounds_at(p: &GridPoint) -> Vec<BoundRow> {
    let (n, f, o, q) = (p.n, p.f, p.o, p.q);
    let results = [
        quorum_prob_lower_bound(n, f, o, q),
        epsilon_quorum_bound(n, f, o, p.l),
        commit_quorum_lower_bound(n, f, o, q),
        per_replica_termination_bound(n, f, o, q),
        all_replicas_termination_bound(n, f, o, q),
        asymptotic_termination_bound(n, f),
        decide_prob_upper_bound(n, o, q, split_sender_count(n, f)),
        agreement_violation_in_view_bound(n, f, o, q),
        agreement_violation_conservative_bound(n, f, o, q),
        view_change_violation_bound(n, f, o, q),
        safety_bound(n, f, o, q, 1),
    ];
    BOUND_NAMES
        .iter()
        .zip(results)
        .map(|(name, b)| BoundRow {
            n,
            f,
            o,
            l: p.l,
            q,
            s: p.s,
            bound: name,
            value: b.value,
            raw: b.raw,
            applicable: b.applicable,
            reason: b.reason.unwrap_or_default(),
        })
        .collect()
}

pub fn write_csv<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageCountRow {
    pub n: usize,
    pub pbft: u64,
    pub hotstuff: u64,
    pub o: f64,
    pub l: f64,
    pub probft: u64,
    pub ratio_probft_pbft: f64,
}

/// One row per `(n, o)`.
pub fn message_count_table(ns: impl IntoIterator<Item = usize>, l: f64, os: &[f64]) -> Vec<MessageCountRow> {
    let mut rows = Vec::new();
    for n in ns {
        let pbft = message_counts(Protocol::Pbft, n, l, 2.0).total();
        let hotstuff = message_counts(Protocol::HotStuff, n, l, 2.0).total();
        for &o in os {
            let probft = message_counts(Protocol::ProBft, n, l, o).total();
            rows.push(MessageCountRow {
                n,
                pbft,
                hotstuff,
                o,
                l,
                probft,
                ratio_probft_pbft: probft as f64 / pbft as f64,
            });
        }
    }
    rows
}
