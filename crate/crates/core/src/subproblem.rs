//! The convex program solved at every SCA iterate.
//!
//! Beamformers are lifted to Hermitian matrices `W_i` (block 0 is the
//! inter-cluster common stream, blocks `1..=Q` the intra-cluster common
//! streams, blocks `Q+1..` the private streams). Rate constraints keep their
//! concave `log2(sigma^2 + h^H W h)` terms exactly; only the subtracted log
//! terms are replaced by their tangent at the expansion point, so every row
//! has the form
//!
//! ```text
//! log2(sigma^2 + h_k^H (sum_{i in log} W_i) h_k)
//!     - slope * h_k^H (sum_{i in lin} W_i) h_k + constant + sum_v c_v v >= 0
//! ```
//!
//! over the scalar variables `v` (rate shares and the min-rate slack `z`).
//! The description is solver-agnostic; [`ConvexSolver`] implementations turn
//! it into whatever cone program their backend accepts.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LN_2;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::linalg::{min_eigenvalue, quad_form, trace_re, CMatrix};
use crate::rates::{Clustering, RateAllocation};
use crate::{CVector, Complex64, Error, Result};

/// Which stream families the program may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerMode {
    /// Inter-cluster common, intra-cluster common and private streams.
    TwoLayer,
    /// Intra-cluster common streams removed.
    OneLayer,
    /// Private streams only (SDMA).
    PrivateOnly,
}

impl LayerMode {
    pub fn has_inter(self) -> bool {
        !matches!(self, LayerMode::PrivateOnly)
    }

    pub fn has_intra(self) -> bool {
        matches!(self, LayerMode::TwoLayer)
    }

    fn as_str(self) -> &'static str {
        match self {
            LayerMode::TwoLayer => "two_layer",
            LayerMode::OneLayer => "one_layer",
            LayerMode::PrivateOnly => "private_only",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "two_layer" => LayerMode::TwoLayer,
            "one_layer" => LayerMode::OneLayer,
            "private_only" => LayerMode::PrivateOnly,
            _ => return None,
        })
    }
}

/// Index of the intra-cluster block of cluster `q`.
pub fn intra_block(q: usize) -> usize {
    1 + q
}

/// Index of the private block of user `k`.
pub fn private_block(n_clusters: usize, k: usize) -> usize {
    1 + n_clusters + k
}

/// The four nested quadratic forms of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearForms {
    /// All streams.
    pub inter: f64,
    /// All but the inter-cluster common stream.
    pub intra: f64,
    /// Additionally without the user's own intra-cluster stream.
    pub private: f64,
    /// Additionally without the user's own private stream.
    pub residual: f64,
}

fn block_forms(h: &[Complex64], blocks: &[CMatrix]) -> Vec<f64> {
    blocks.iter().map(|w| quad_form(h, w).max(0.0)).collect()
}

fn forms_from_parts(parts: &[f64], n_clusters: usize, q: usize, k: usize) -> LinearForms {
    let own_intra = intra_block(q);
    let own_private = private_block(n_clusters, k);
    let sum_except = |skip: &[usize]| -> f64 {
        parts
            .iter()
            .enumerate()
            .filter(|(i, _)| !skip.contains(i))
            .map(|(_, v)| v)
            .sum()
    };
    LinearForms {
        inter: sum_except(&[]),
        intra: sum_except(&[0]),
        private: sum_except(&[0, own_intra]),
        residual: sum_except(&[0, own_intra, own_private]),
    }
}

/// Quadratic forms `h_k^H (W_s - ...) h_k` of user `k`. Each is summed
/// directly over its index set, so the ordering
/// `inter >= intra >= private >= residual >= 0` holds exactly.
pub fn linear_forms(
    h: &[Complex64],
    blocks: &[CMatrix],
    clustering: &Clustering,
    user: usize,
) -> LinearForms {
    let parts = block_forms(h, blocks);
    forms_from_parts(
        &parts,
        clustering.n_clusters(),
        clustering.cluster_of(user),
        user,
    )
}

/// Expansion values of the linearized terms, per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPoint {
    pub intra: Vec<f64>,
    pub private: Vec<f64>,
    pub residual: Vec<f64>,
}

impl ExpansionPoint {
    pub fn zeros(n_users: usize) -> Self {
        Self {
            intra: vec![0.0; n_users],
            private: vec![0.0; n_users],
            residual: vec![0.0; n_users],
        }
    }

    pub fn from_blocks(channels: &[CVector], blocks: &[CMatrix], clustering: &Clustering) -> Self {
        let mut e = Self::zeros(channels.len());
        for (k, h) in channels.iter().enumerate() {
            let f = linear_forms(h, blocks, clustering, k);
            e.intra[k] = f.intra;
            e.private[k] = f.private;
            e.residual[k] = f.residual;
        }
        e
    }

    fn validate(&self, n_users: usize) -> Result<()> {
        for v in [&self.intra, &self.private, &self.residual] {
            if v.len() != n_users {
                return Err(Error::DimensionMismatch {
                    what: "expansion point",
                    expected: n_users,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::NonFinite("expansion point"));
            }
        }
        Ok(())
    }
}

/// Tangent of `-log2(lambda + sigma^2)` at `lambda_j`, evaluated at
/// `lambda`. Being the tangent of a convex function it is a global
/// minorant.
pub fn taylor_lower_bound(lambda: f64, lambda_j: f64, noise_power: f64) -> f64 {
    let base = lambda_j + noise_power;
    -libm::log2(base) - (lambda - lambda_j) / (base * LN_2)
}

/// Scalar decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarVar {
    /// Share of the inter-cluster common rate for a user.
    InterRate(usize),
    /// Share of the intra-cluster common rate for a user.
    IntraRate(usize),
    /// Min-rate slack `z`.
    Slack,
}

impl ScalarVar {
    fn to_token(self) -> String {
        match self {
            ScalarVar::InterRate(k) => format!("inter_rate:{k}"),
            ScalarVar::IntraRate(k) => format!("intra_rate:{k}"),
            ScalarVar::Slack => "slack".to_string(),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        if s == "slack" {
            return Some(ScalarVar::Slack);
        }
        let (name, idx) = s.split_once(':')?;
        let k = idx.parse().ok()?;
        match name {
            "inter_rate" => Some(ScalarVar::InterRate(k)),
            "intra_rate" => Some(ScalarVar::IntraRate(k)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogFamily {
    /// Inter-cluster common-rate budget of one user.
    Inter,
    /// Intra-cluster common-rate budget of one user.
    Intra,
    /// Total rate of one user against the slack.
    Private,
}

impl LogFamily {
    fn as_str(self) -> &'static str {
        match self {
            LogFamily::Inter => "inter",
            LogFamily::Intra => "intra",
            LogFamily::Private => "private",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "inter" => LogFamily::Inter,
            "intra" => LogFamily::Intra,
            "private" => LogFamily::Private,
            _ => return None,
        })
    }
}

/// One row of the form described in the module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogConstraint {
    pub family: LogFamily,
    /// User whose channel enters both quadratic forms.
    pub user: usize,
    pub log_blocks: Vec<usize>,
    pub lin_blocks: Vec<usize>,
    pub slope: f64,
    pub constant: f64,
    pub terms: Vec<(ScalarVar, f64)>,
}

impl LogConstraint {
    /// Left-hand side at a candidate point; feasible rows are `>= 0`.
    pub fn lhs(&self, program: &ConvexProgram, solution: &LiftedSolution) -> f64 {
        let h = &program.channels[self.user];
        let q_log: f64 = self
            .log_blocks
            .iter()
            .map(|&i| quad_form(h, &solution.blocks[i]))
            .sum();
        let q_lin: f64 = self
            .lin_blocks
            .iter()
            .map(|&i| quad_form(h, &solution.blocks[i]))
            .sum();
        let scalars: f64 = self
            .terms
            .iter()
            .map(|&(v, c)| c * solution.scalar(v))
            .sum();
        libm::log2(program.noise_power + q_log.max(0.0)) - self.slope * q_lin
            + self.constant
            + scalars
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// `sum_i tr(W_i) <= power_budget`.
    Power,
    Log(LogConstraint),
    NonNegative(ScalarVar),
    /// `W_i` positive semidefinite.
    Psd(usize),
}

/// Solver-agnostic description of one subproblem: maximize the slack over
/// the active blocks and scalar variables subject to `constraints`.
/// Inactive blocks are fixed at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexProgram {
    pub n_antennas: usize,
    pub n_clusters: usize,
    pub noise_power: f64,
    pub power_budget: f64,
    pub mode: LayerMode,
    pub channels: Vec<CVector>,
    /// One flag per block, `1 + Q + K` in total.
    pub active_blocks: Vec<bool>,
    pub scalars: Vec<ScalarVar>,
    pub constraints: Vec<Constraint>,
}

/// Builds the subproblem at `expansion` for the given channels and
/// clustering. In the restricted modes the corresponding blocks are fixed
/// at zero, their rate shares are removed and their budget rows dropped,
/// so a restricted program is a restriction of the two-layer one.
pub fn build_subproblem(
    channels: &[CVector],
    clustering: &Clustering,
    expansion: &ExpansionPoint,
    noise_power: f64,
    power_budget: f64,
    mode: LayerMode,
) -> Result<ConvexProgram> {
    let k_users = channels.len();
    if clustering.n_users() != k_users {
        return Err(Error::DimensionMismatch {
            what: "clustering users",
            expected: k_users,
            found: clustering.n_users(),
        });
    }
    let n = channels.first().map_or(0, Vec::len);
    if channels.iter().any(|h| h.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "channel length",
            expected: n,
            found: channels.iter().map(Vec::len).find(|&l| l != n).unwrap_or(n),
        });
    }
    expansion.validate(k_users)?;
    if !(noise_power > 0.0) || !noise_power.is_finite() {
        return Err(Error::config("noise power must be positive and finite"));
    }
    if !(power_budget >= 0.0) || !power_budget.is_finite() {
        return Err(Error::config(
            "power budget must be non-negative and finite",
        ));
    }

    let q_count = clustering.n_clusters();
    let n_blocks = 1 + q_count + k_users;
    let mut active_blocks = vec![true; n_blocks];
    active_blocks[0] = mode.has_inter();
    for q in 0..q_count {
        active_blocks[intra_block(q)] = mode.has_intra();
    }

    let mut scalars = Vec::new();
    if mode.has_inter() {
        scalars.extend((0..k_users).map(ScalarVar::InterRate));
    }
    if mode.has_intra() {
        scalars.extend((0..k_users).map(ScalarVar::IntraRate));
    }
    scalars.push(ScalarVar::Slack);

    let active_except = |skip: &[usize]| -> Vec<usize> {
        (0..n_blocks)
            .filter(|i| active_blocks[*i] && !skip.contains(i))
            .collect()
    };

    let row = |family, user, log_skip: &[usize], lin_skip: &[usize], at: f64, terms| {
        let base = at + noise_power;
        let slope = 1.0 / (base * LN_2);
        LogConstraint {
            family,
            user,
            log_blocks: active_except(log_skip),
            lin_blocks: active_except(lin_skip),
            slope,
            constant: -libm::log2(base) + at * slope,
            terms,
        }
    };

    let mut constraints = vec![Constraint::Power];
    if mode.has_inter() {
        for k in 0..k_users {
            let terms = (0..k_users)
                .map(|j| (ScalarVar::InterRate(j), -1.0))
                .collect();
            constraints.push(Constraint::Log(row(
                LogFamily::Inter,
                k,
                &[],
                &[0],
                expansion.intra[k],
                terms,
            )));
        }
    }
    if mode.has_intra() {
        for k in 0..k_users {
            let q = clustering.cluster_of(k);
            let terms = clustering
                .members(q)
                .iter()
                .map(|&j| (ScalarVar::IntraRate(j), -1.0))
                .collect();
            constraints.push(Constraint::Log(row(
                LogFamily::Intra,
                k,
                &[0],
                &[0, intra_block(q)],
                expansion.private[k],
                terms,
            )));
        }
    }
    for k in 0..k_users {
        let q = clustering.cluster_of(k);
        let mut terms = Vec::new();
        if mode.has_inter() {
            terms.push((ScalarVar::InterRate(k), 1.0));
        }
        if mode.has_intra() {
            terms.push((ScalarVar::IntraRate(k), 1.0));
        }
        terms.push((ScalarVar::Slack, -1.0));
        constraints.push(Constraint::Log(row(
            LogFamily::Private,
            k,
            &[0, intra_block(q)],
            &[0, intra_block(q), private_block(q_count, k)],
            expansion.residual[k],
            terms,
        )));
    }
    for &v in &scalars {
        if v != ScalarVar::Slack {
            constraints.push(Constraint::NonNegative(v));
        }
    }
    for (i, &active) in active_blocks.iter().enumerate() {
        if active {
            constraints.push(Constraint::Psd(i));
        }
    }

    Ok(ConvexProgram {
        n_antennas: n,
        n_clusters: q_count,
        noise_power,
        power_budget,
        mode,
        channels: channels.to_vec(),
        active_blocks,
        scalars,
        constraints,
    })
}

/// Constraint counts by kind: power, inter, intra, private, nonneg, psd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConstraintCounts {
    pub power: usize,
    pub inter: usize,
    pub intra: usize,
    pub private: usize,
    pub nonnegative: usize,
    pub psd: usize,
}

impl ConvexProgram {
    pub fn n_users(&self) -> usize {
        self.channels.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.active_blocks.len()
    }

    pub fn log_constraints(&self) -> impl Iterator<Item = &LogConstraint> {
        self.constraints.iter().filter_map(|c| match c {
            Constraint::Log(l) => Some(l),
            _ => None,
        })
    }

    pub fn counts(&self) -> ConstraintCounts {
        let mut c = ConstraintCounts::default();
        for con in &self.constraints {
            match con {
                Constraint::Power => c.power += 1,
                Constraint::Log(l) => match l.family {
                    LogFamily::Inter => c.inter += 1,
                    LogFamily::Intra => c.intra += 1,
                    LogFamily::Private => c.private += 1,
                },
                Constraint::NonNegative(_) => c.nonnegative += 1,
                Constraint::Psd(_) => c.psd += 1,
            }
        }
        c
    }

    /// The expansion-point blocks with the given rate shares and the slack
    /// at the smallest private-row value. When the program was built from
    /// `blocks` the Taylor bounds are tight there, so this point is feasible
    /// whenever the shares were feasible for the previous program (zero
    /// shares always are). The all-zero point is not feasible in general:
    /// its common and private rows are negative at any nonzero expansion.
    pub fn anchor_point(&self, blocks: Vec<CMatrix>, allocation: RateAllocation) -> LiftedSolution {
        let mut s = LiftedSolution {
            blocks,
            allocation,
            slack: 0.0,
        };
        let z = self
            .log_constraints()
            .filter(|l| l.family == LogFamily::Private)
            .map(|l| l.lhs(self, &s))
            .fold(f64::INFINITY, f64::min);
        s.slack = if z.is_finite() { z } else { 0.0 };
        s
    }

    /// Residuals of a candidate solution, recomputed from the description.
    pub fn residuals(&self, solution: &LiftedSolution) -> Residuals {
        let mut r = Residuals::default();
        let power: f64 = solution.blocks.iter().map(trace_re).sum();
        r.power_excess = (power - self.power_budget).max(0.0) / self.power_budget.max(1e-300);
        if self.power_budget == 0.0 && power > 0.0 {
            r.power_excess = power;
        }
        for con in &self.constraints {
            match con {
                Constraint::Log(l) => {
                    r.log_violation = r.log_violation.max(-l.lhs(self, solution));
                }
                Constraint::NonNegative(v) => {
                    r.negative_rate = r.negative_rate.max(-solution.scalar(*v));
                }
                Constraint::Psd(i) => {
                    r.min_eigenvalue = r.min_eigenvalue.min(min_eigenvalue(&solution.blocks[*i]));
                }
                Constraint::Power => {}
            }
        }
        for (i, &active) in self.active_blocks.iter().enumerate() {
            if !active {
                let norm: f64 = solution.blocks[i].iter().map(|x| x.norm_sqr()).sum();
                r.inactive_block = r.inactive_block.max(libm::sqrt(norm));
            }
        }
        r
    }

    /// Human-readable dump; [`ConvexProgram::parse`] reads it back exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "program n_antennas={} n_clusters={} noise_power={} power_budget={} mode={}",
            self.n_antennas,
            self.n_clusters,
            self.noise_power,
            self.power_budget,
            self.mode.as_str()
        );
        for (k, h) in self.channels.iter().enumerate() {
            let _ = write!(s, "channel {k}");
            for x in h {
                let _ = write!(s, " {} {}", x.re, x.im);
            }
            s.push('\n');
        }
        let _ = write!(s, "blocks");
        for &a in &self.active_blocks {
            s.push_str(if a { " active" } else { " zero" });
        }
        s.push('\n');
        let _ = write!(s, "scalars");
        for v in &self.scalars {
            let _ = write!(s, " {}", v.to_token());
        }
        s.push('\n');
        for c in &self.constraints {
            match c {
                Constraint::Power => s.push_str("power\n"),
                Constraint::NonNegative(v) => {
                    let _ = writeln!(s, "nonneg {}", v.to_token());
                }
                Constraint::Psd(i) => {
                    let _ = writeln!(s, "psd {i}");
                }
                Constraint::Log(l) => {
                    let join = |v: &[usize]| {
                        v.iter()
                            .map(|i| i.to_string())
                            .collect::<Vec<_>>()
                            .join(",")
                    };
                    let _ = write!(
                        s,
                        "log family={} user={} log=[{}] lin=[{}] slope={} constant={} terms=",
                        l.family.as_str(),
                        l.user,
                        join(&l.log_blocks),
                        join(&l.lin_blocks),
                        l.slope,
                        l.constant
                    );
                    let terms: Vec<String> = l
                        .terms
                        .iter()
                        .map(|(v, c)| format!("{}*{}", c, v.to_token()))
                        .collect();
                    let _ = writeln!(s, "[{}]", terms.join(","));
                }
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        TextParser::default().parse(text)
    }
}

#[derive(Default)]
struct TextParser {
    line: usize,
}

impl TextParser {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn num<T: core::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn kv<'a>(&self, token: &'a str, key: &str) -> Result<&'a str> {
        token
            .strip_prefix(key)
            .and_then(|t| t.strip_prefix('='))
            .ok_or_else(|| self.err(format!("expected `{key}=`")))
    }

    fn list(&self, token: &str) -> Result<Vec<usize>> {
        let inner = token
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| self.err("expected [..] list"))?;
        if inner.is_empty() {
            return Ok(Vec::new());
        }
        inner.split(',').map(|x| self.num(x)).collect()
    }

    fn parse(mut self, text: &str) -> Result<ConvexProgram> {
        let mut header = None;
        let mut channels = Vec::new();
        let mut active_blocks = None;
        let mut scalars = None;
        let mut constraints = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            self.line = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tok = line.split_whitespace();
            let head = tok.next().unwrap_or_default();
            let rest: Vec<&str> = tok.collect();
            match head {
                "program" => {
                    if rest.len() != 5 {
                        return Err(self.err("program header needs 5 fields"));
                    }
                    let mode = LayerMode::parse(self.kv(rest[4], "mode")?)
                        .ok_or_else(|| self.err("unknown mode"))?;
                    header = Some((
                        self.num::<usize>(self.kv(rest[0], "n_antennas")?)?,
                        self.num::<usize>(self.kv(rest[1], "n_clusters")?)?,
                        self.num::<f64>(self.kv(rest[2], "noise_power")?)?,
                        self.num::<f64>(self.kv(rest[3], "power_budget")?)?,
                        mode,
                    ));
                }
                "channel" => {
                    let k: usize = self.num(rest.first().copied().unwrap_or_default())?;
                    if k != channels.len() {
                        return Err(self.err("channels out of order"));
                    }
                    let vals: Vec<f64> = rest[1..]
                        .iter()
                        .map(|x| self.num(x))
                        .collect::<Result<_>>()?;
                    if vals.len() % 2 != 0 {
                        return Err(self.err("channel needs re/im pairs"));
                    }
                    channels.push(
                        vals.chunks(2)
                            .map(|p| Complex64::new(p[0], p[1]))
                            .collect::<CVector>(),
                    );
                }
                "blocks" => {
                    active_blocks = Some(
                        rest.iter()
                            .map(|t| match *t {
                                "active" => Ok(true),
                                "zero" => Ok(false),
                                _ => Err(self.err("block must be active or zero")),
                            })
                            .collect::<Result<Vec<_>>>()?,
                    );
                }
                "scalars" => {
                    scalars = Some(
                        rest.iter()
                            .map(|t| ScalarVar::parse(t).ok_or_else(|| self.err("bad scalar")))
                            .collect::<Result<Vec<_>>>()?,
                    );
                }
                "power" => constraints.push(Constraint::Power),
                "psd" => constraints.push(Constraint::Psd(
                    self.num(rest.first().copied().unwrap_or_default())?,
                )),
                "nonneg" => constraints.push(Constraint::NonNegative(
                    ScalarVar::parse(rest.first().copied().unwrap_or_default())
                        .ok_or_else(|| self.err("bad scalar"))?,
                )),
                "log" => {
                    if rest.len() != 7 {
                        return Err(self.err("log row needs 7 fields"));
                    }
                    let family = LogFamily::parse(self.kv(rest[0], "family")?)
                        .ok_or_else(|| self.err("unknown family"))?;
                    let terms_raw = self.kv(rest[6], "terms")?;
                    let inner = terms_raw
                        .strip_prefix('[')
                        .and_then(|t| t.strip_suffix(']'))
                        .ok_or_else(|| self.err("terms must be a [..] list"))?;
                    let terms = if inner.is_empty() {
                        Vec::new()
                    } else {
                        inner
                            .split(',')
                            .map(|t| {
                                let (c, v) =
                                    t.split_once('*').ok_or_else(|| self.err("bad term"))?;
                                Ok((
                                    ScalarVar::parse(v).ok_or_else(|| self.err("bad scalar"))?,
                                    self.num(c)?,
                                ))
                            })
                            .collect::<Result<Vec<_>>>()?
                    };
                    constraints.push(Constraint::Log(LogConstraint {
                        family,
                        user: self.num(self.kv(rest[1], "user")?)?,
                        log_blocks: self.list(self.kv(rest[2], "log")?)?,
                        lin_blocks: self.list(self.kv(rest[3], "lin")?)?,
                        slope: self.num(self.kv(rest[4], "slope")?)?,
                        constant: self.num(self.kv(rest[5], "constant")?)?,
                        terms,
                    }));
                }
                other => return Err(self.err(format!("unknown row `{other}`"))),
            }
        }
        let (n_antennas, n_clusters, noise_power, power_budget, mode) =
            header.ok_or_else(|| self.err("missing program header"))?;
        Ok(ConvexProgram {
            n_antennas,
            n_clusters,
            noise_power,
            power_budget,
            mode,
            channels,
            active_blocks: active_blocks.ok_or_else(|| self.err("missing blocks row"))?,
            scalars: scalars.ok_or_else(|| self.err("missing scalars row"))?,
            constraints,
        })
    }
}

/// A solution of the relaxed program: one matrix per block (zero when
/// inactive), the rate shares and the slack.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSolution {
    pub blocks: Vec<CMatrix>,
    pub allocation: RateAllocation,
    pub slack: f64,
}

impl LiftedSolution {
    pub fn zeros(n_antennas: usize, n_clusters: usize, n_users: usize) -> Self {
        Self {
            blocks: (0..1 + n_clusters + n_users)
                .map(|_| CMatrix::zeros(n_antennas, n_antennas))
                .collect(),
            allocation: RateAllocation::zeros(n_users),
            slack: 0.0,
        }
    }

    pub fn scalar(&self, v: ScalarVar) -> f64 {
        match v {
            ScalarVar::InterRate(k) => self.allocation.inter[k],
            ScalarVar::IntraRate(k) => self.allocation.intra[k],
            ScalarVar::Slack => self.slack,
        }
    }

    pub fn set_scalar(&mut self, v: ScalarVar, value: f64) {
        match v {
            ScalarVar::InterRate(k) => self.allocation.inter[k] = value,
            ScalarVar::IntraRate(k) => self.allocation.intra[k] = value,
            ScalarVar::Slack => self.slack = value,
        }
    }

    pub fn total_power(&self) -> f64 {
        self.blocks.iter().map(trace_re).sum()
    }
}

/// Worst-case constraint residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// Largest shortfall of a log row (bits/s/Hz).
    pub log_violation: f64,
    /// Relative excess over the power budget.
    pub power_excess: f64,
    pub negative_rate: f64,
    /// Smallest eigenvalue over active blocks.
    pub min_eigenvalue: f64,
    /// Largest Frobenius norm of a block that should be zero.
    pub inactive_block: f64,
}

impl Default for Residuals {
    fn default() -> Self {
        Self {
            log_violation: f64::NEG_INFINITY,
            power_excess: 0.0,
            negative_rate: f64::NEG_INFINITY,
            min_eigenvalue: f64::INFINITY,
            inactive_block: 0.0,
        }
    }
}

impl Residuals {
    /// Whether every residual is inside the acceptance tolerances (1e-6 on
    /// rates and relative power, -1e-7 eigenvalue floor relative to the
    /// budget).
    pub fn within(&self, power_budget: f64) -> bool {
        self.log_violation <= 1e-6
            && self.power_excess <= 1e-6
            && self.negative_rate <= 1e-6
            && self.min_eigenvalue >= -1e-7 * power_budget.max(1.0)
            && self.inactive_block == 0.0
    }
}

/// Error reported by a convex backend.
#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum SolveError {
    #[error("backend status {0}")]
    Status(String),
    #[error("backend setup failed: {0}")]
    Setup(String),
    #[error("solution residuals out of tolerance: {0}")]
    Residual(String),
}

/// A backend able to solve [`ConvexProgram`]s.
pub trait ConvexSolver {
    /// Returns a point whose slack is within the solver's accuracy of the
    /// optimum and whose residuals pass [`Residuals::within`].
    fn solve(&self, program: &ConvexProgram) -> core::result::Result<LiftedSolution, SolveError>;
}

impl<S: ConvexSolver + ?Sized> ConvexSolver for &S {
    fn solve(&self, program: &ConvexProgram) -> core::result::Result<LiftedSolution, SolveError> {
        (**self).solve(program)
    }
}
