//! Closed-form traffic model.
//!
//! UAVs are split into three usage subgroups (poor, middle, rich) by a Pareto
//! law per service. Crossing the three services with the three subgroups
//! gives nine segments; each carries a transaction share and a per-UAV packet
//! rate, from which packet and byte forecasts follow.
//!
//! Everything here is a pure function of its inputs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `Σ γ_i = 1`.
pub const GAMMA_SUM_TOLERANCE: f64 = 1e-9;

/// Default concentration threshold for both streaming and IoT usage.
pub const DEFAULT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(
        "infeasible partition: alpha_iot = {alpha_iot}, alpha_stream = {alpha_stream}, \
         q_iot = {q_iot}, q_stream = {q_stream} give F = ({f_poor}, {f_middle}, {f_rich})"
    )]
    InfeasiblePartition {
        alpha_iot: f64,
        alpha_stream: f64,
        q_iot: f64,
        q_stream: f64,
        f_poor: f64,
        f_middle: f64,
        f_rich: f64,
    },
    #[error("degenerate segment: {0}")]
    DegenerateSegment(String),
    #[error("degenerate service: total rate of {0} is zero")]
    DegenerateService(ServiceClass),
    #[error("invalid model parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Network service subset. Doubles as the row index of every 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceClass {
    Telemetry,
    Iot,
    Streaming,
}

impl ServiceClass {
    pub const ALL: [ServiceClass; 3] = [Self::Telemetry, Self::Iot, Self::Streaming];

    /// Zero-based row index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Telemetry => "telemetry",
            Self::Iot => "iot",
            Self::Streaming => "streaming",
        }
    }
}

impl fmt::Display for ServiceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ServiceClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown service class `{s}`"))
    }
}

/// Usage subgroup, ordered from the lowest to the highest network usage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subgroup {
    Poor,
    Middle,
    Rich,
}

impl Subgroup {
    pub const ALL: [Subgroup; 3] = [Self::Poor, Self::Middle, Self::Rich];

    /// Zero-based column index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Poor => "poor",
            Self::Middle => "middle",
            Self::Rich => "rich",
        }
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subgroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| format!("unknown subgroup `{s}`"))
    }
}

/// A 3×3 table indexed by (service, subgroup).
pub type Grid = [[f64; 3]; 3];

/// Input parameters of the model. Arrays are indexed by [`ServiceClass::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Pareto shape per service.
    pub alpha: [f64; 3],
    /// Share of the total transaction rate per service.
    pub gamma: [f64; 3],
    /// Mean transaction size per service, bytes.
    pub w_bytes: [f64; 3],
    /// Fraction of streaming traffic generated by the rich subgroup.
    pub q_stream: f64,
    /// Fraction of IoT traffic generated by the middle and rich subgroups.
    pub q_iot: f64,
    /// Telemetry rate of a poor UAV, packets/s.
    pub lambda_11: f64,
}

impl ModelParams {
    /// Every violated invariant, as human-readable messages. Empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in ServiceClass::ALL {
            let a = self.alpha[c.index()];
            if !(a.is_finite() && a > 1.0) {
                out.push(format!("alpha must exceed 1 (alpha[{c}] = {a})"));
            }
            let g = self.gamma[c.index()];
            if !(g.is_finite() && g > 0.0) {
                out.push(format!("gamma must be positive (gamma[{c}] = {g})"));
            }
            let w = self.w_bytes[c.index()];
            if !(w.is_finite() && w >= 0.0) {
                out.push(format!("w_bytes must be non-negative (w_bytes[{c}] = {w})"));
            }
        }
        let sum: f64 = self.gamma.iter().sum();
        if (sum - 1.0).abs() > GAMMA_SUM_TOLERANCE {
            out.push(format!("gamma must sum to 1 (sum = {sum})"));
        }
        for (name, q) in [("q_stream", self.q_stream), ("q_iot", self.q_iot)] {
            if !(q > 0.0 && q <= 1.0) {
                out.push(format!("{name} must lie in (0, 1] ({name} = {q})"));
            }
        }
        if !(self.lambda_11.is_finite() && self.lambda_11 > 0.0) {
            out.push(format!("lambda_11 must be positive (lambda_11 = {})", self.lambda_11));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidParams(v))
        }
    }

    pub fn alpha_of(&self, service: ServiceClass) -> f64 {
        self.alpha[service.index()]
    }
}

/// Population fractions of the poor, middle and rich subgroups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupPartition {
    pub fractions: [f64; 3],
}

impl SubgroupPartition {
    /// Builds a partition from explicit fractions, checking that they lie in
    /// `[0, 1]` and sum to one within `1e-12`.
    pub fn new(fractions: [f64; 3]) -> Result<Self> {
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(ModelError::Domain(format!(
                "subgroup fractions must lie in [0, 1], got {fractions:?}"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::Domain(format!(
                "subgroup fractions must sum to 1, got {sum}"
            )));
        }
        Ok(Self { fractions })
    }

    pub fn get(&self, group: Subgroup) -> f64 {
        self.fractions[group.index()]
    }
}

/// Row-stochastic transaction shares β_ij.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShareMatrix {
    pub beta: Grid,
}

impl ShareMatrix {
    pub fn get(&self, service: ServiceClass, group: Subgroup) -> f64 {
        self.beta[service.index()][group.index()]
    }

    pub fn row(&self, service: ServiceClass) -> [f64; 3] {
        self.beta[service.index()]
    }
}

/// Per-UAV packet rates λ_ij, packets/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    pub lambda: Grid,
}

impl RateMatrix {
    pub fn get(&self, service: ServiceClass, group: Subgroup) -> f64 {
        self.lambda[service.index()][group.index()]
    }

    /// Population-weighted mean rate of one service, `Σ_j λ_ij F_j`.
    pub fn mean_rate(&self, service: ServiceClass, part: &SubgroupPartition) -> f64 {
        let row = &self.lambda[service.index()];
        row.iter().zip(part.fractions).map(|(l, f)| l * f).sum()
    }
}

/// Aggregate transaction rates of the whole swarm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentRates {
    /// S_ij, packets/s.
    pub segment: Grid,
    /// S_i, packets/s.
    pub service: [f64; 3],
}

/// Expected packet counts and byte volumes over an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficForecast {
    pub n_uavs: u64,
    pub duration_s: f64,
    pub packets: [f64; 3],
    pub bytes: [f64; 3],
    pub total_bytes: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 1.0 {
        Ok(())
    } else {
        Err(ModelError::Domain(format!("alpha must exceed 1, got {alpha}")))
    }
}

fn check_fraction(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ModelError::Domain(format!("{name} must lie in [0, 1], got {p}")))
    }
}

/// Share of usage held by the top `top` fraction of a Pareto(α) population,
/// `top^((α−1)/α)`.
pub fn top_share(alpha: f64, top: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_fraction("population fraction", top)?;
    Ok(top.powf((alpha - 1.0) / alpha))
}

/// Lorenz curve of a Pareto(α) population: the share of total usage generated
/// by the bottom `p` fraction of users, `1 − (1 − p)^((α−1)/α)`.
pub fn lorenz_share(alpha: f64, p: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_fraction("population fraction", p)?;
    // -expm1(e·ln(1-p)) keeps precision for small p.
    let e = (alpha - 1.0) / alpha;
    Ok((-(e * (-p).ln_1p()).exp_m1()).clamp(0.0, 1.0))
}

/// Pareto shape with the given Gini coefficient, inverting `G = 1/(2α − 1)`.
pub fn alpha_from_gini(gini: f64) -> Result<f64> {
    if !(gini > 0.0 && gini < 1.0) {
        return Err(ModelError::Domain(format!(
            "Gini coefficient must lie in (0, 1), got {gini}"
        )));
    }
    let alpha = (1.0 / gini + 1.0) / 2.0;
    if alpha <= 1.0 {
        return Err(ModelError::Domain(format!(
            "Gini coefficient {gini} implies alpha = {alpha}, which does not exceed 1"
        )));
    }
    Ok(alpha)
}

/// Population fractions of the three subgroups.
///
/// The rich fraction is the top slice producing `q_stream` of streaming
/// traffic; middle and rich together are the top slice producing `q_iot` of
/// IoT traffic. Combinations where the middle or poor slice would be negative
/// are rejected.
pub fn partition_subgroups(params: &ModelParams) -> Result<SubgroupPartition> {
    let a_iot = params.alpha_of(ServiceClass::Iot);
    let a_stream = params.alpha_of(ServiceClass::Streaming);
    check_alpha(a_iot)?;
    check_alpha(a_stream)?;
    for (name, q) in [("q_stream", params.q_stream), ("q_iot", params.q_iot)] {
        if !(q > 0.0 && q <= 1.0) {
            return Err(ModelError::Domain(format!("{name} must lie in (0, 1], got {q}")));
        }
    }

    let rich = params.q_stream.powf(a_stream / (a_stream - 1.0));
    let middle = params.q_iot.powf(a_iot / (a_iot - 1.0)) - rich;
    let poor = 1.0 - middle - rich;
    if middle < 0.0 || poor < 0.0 {
        return Err(ModelError::InfeasiblePartition {
            alpha_iot: a_iot,
            alpha_stream: a_stream,
            q_iot: params.q_iot,
            q_stream: params.q_stream,
            f_poor: poor,
            f_middle: middle,
            f_rich: rich,
        });
    }
    Ok(SubgroupPartition {
        fractions: [poor, middle, rich],
    })
}

/// Transaction shares derived from request frequency: each service's Lorenz
/// curve evaluated at the subgroup boundaries.
pub fn frequency_share_matrix(
    params: &ModelParams,
    part: &SubgroupPartition,
) -> Result<ShareMatrix> {
    let [_, middle, rich] = part.fractions;
    let mut beta = [[0.0; 3]; 3];
    for c in ServiceClass::ALL {
        let alpha = params.alpha_of(c);
        // 1 − F₁ = F₂ + F₃ and 1 − F₁ − F₂ = F₃; the top-slice form keeps the
        // threshold identities tight.
        let upper = top_share(alpha, (middle + rich).min(1.0))?;
        let top = top_share(alpha, rich)?;
        let b1 = (1.0 - upper).max(0.0);
        let b2 = (upper - top).max(0.0);
        let b3 = 1.0 - b1 - b2;
        beta[c.index()] = [b1, b2, b3];
    }
    Ok(ShareMatrix { beta })
}

/// Per-UAV packet rates of all nine segments, seeded by the poor-telemetry
/// rate and scaled across services by the transaction shares γ.
pub fn derive_rate_matrix(
    params: &ModelParams,
    part: &SubgroupPartition,
    beta: &ShareMatrix,
) -> Result<RateMatrix> {
    let f = part.fractions;
    for g in Subgroup::ALL {
        if f[g.index()] <= 0.0 {
            return Err(ModelError::DegenerateSegment(format!(
                "{g} subgroup has zero population fraction"
            )));
        }
    }
    let b = &beta.beta;
    let tel = ServiceClass::Telemetry.index();
    if b[tel][0] <= 0.0 {
        return Err(ModelError::DegenerateSegment(
            "telemetry share of the poor subgroup is zero".into(),
        ));
    }
    let g1 = params.gamma[tel];
    if !(g1 > 0.0) {
        return Err(ModelError::DegenerateSegment(format!(
            "telemetry transaction share must be positive, got {g1}"
        )));
    }

    let l11 = params.lambda_11;
    let mut lambda = [[0.0; 3]; 3];
    lambda[tel] = [
        l11,
        l11 * b[tel][1] * f[0] / (b[tel][0] * f[1]),
        l11 * b[tel][2] * f[0] / (b[tel][0] * f[2]),
    ];
    let telemetry_mean: f64 = (0..3).map(|j| lambda[tel][j] * f[j]).sum();
    for c in [ServiceClass::Iot, ServiceClass::Streaming] {
        let i = c.index();
        for j in 0..3 {
            lambda[i][j] = params.gamma[i] * b[i][j] / (g1 * f[j]) * telemetry_mean;
        }
    }
    Ok(RateMatrix { lambda })
}

/// Aggregate rates `S_ij = F_j N λ_ij` and `S_i = Σ_j S_ij`.
pub fn segment_rates(n_uavs: u64, part: &SubgroupPartition, rates: &RateMatrix) -> SegmentRates {
    let n = n_uavs as f64;
    let mut segment = [[0.0; 3]; 3];
    let mut service = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            segment[i][j] = part.fractions[j] * n * rates.lambda[i][j];
        }
        service[i] = n * (0..3).map(|j| rates.lambda[i][j] * part.fractions[j]).sum::<f64>();
    }
    SegmentRates { segment, service }
}

/// Transaction shares derived from aggregate rates, `β_ij = S_ij / S_i`.
pub fn rate_share_matrix(seg: &SegmentRates) -> Result<ShareMatrix> {
    let mut beta = [[0.0; 3]; 3];
    for c in ServiceClass::ALL {
        let i = c.index();
        let total = seg.service[i];
        if !(total > 0.0) {
            return Err(ModelError::DegenerateService(c));
        }
        for j in 0..3 {
            beta[i][j] = seg.segment[i][j] / total;
        }
    }
    Ok(ShareMatrix { beta })
}

/// Expected packets `P_i = N T Σ_j λ_ij F_j`, bytes `D_i = W_i P_i` and the
/// total `D = Σ_i D_i`.
pub fn forecast(
    n_uavs: u64,
    duration_s: f64,
    params: &ModelParams,
    part: &SubgroupPartition,
    rates: &RateMatrix,
) -> Result<TrafficForecast> {
    if !(duration_s.is_finite() && duration_s >= 0.0) {
        return Err(ModelError::Domain(format!(
            "duration must be finite and non-negative, got {duration_s}"
        )));
    }
    let scale = n_uavs as f64 * duration_s;
    let mut packets = [0.0; 3];
    let mut bytes = [0.0; 3];
    for c in ServiceClass::ALL {
        let i = c.index();
        packets[i] = scale * rates.mean_rate(c, part);
        bytes[i] = params.w_bytes[i] * packets[i];
    }
    Ok(TrafficForecast {
        n_uavs,
        duration_s,
        packets,
        bytes,
        total_bytes: bytes.iter().sum(),
    })
}

/// Partition, frequency shares and rates of one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedModel {
    pub partition: SubgroupPartition,
    pub shares: ShareMatrix,
    pub rates: RateMatrix,
}

impl SolvedModel {
    /// Validates `params` and runs the partition → shares → rates chain.
    pub fn solve(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let partition = partition_subgroups(params)?;
        let shares = frequency_share_matrix(params, &partition)?;
        let rates = derive_rate_matrix(params, &partition, &shares)?;
        Ok(Self {
            partition,
            shares,
            rates,
        })
    }

    pub fn forecast(&self, params: &ModelParams, n_uavs: u64, duration_s: f64) -> Result<TrafficForecast> {
        forecast(n_uavs, duration_s, params, &self.partition, &self.rates)
    }
}
