//! Weight compilers for every hand-built network: the Dyck recognizer and
//! generator, the Shuffle-Dyck recognizer and generator, the pseudo-BOS block,
//! the BOS-free variants, and the recovering function used when selection
//! layers run under softmax.
//!
//! Every builder is pure and returns a [`BuiltNetwork`] whose metadata lists
//! the channel map, the constants and the score decomposition of each
//! selection layer (consumed by [`crate::conversions::qk_fixed_norm_wrap`]).

mod blocks;
mod dyck_gen;
mod dyck_rec;
mod layout;
mod nobos;
mod pseudo_bos;
mod recov;
mod score;
mod select;
mod shuffle;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dyck_gen::build_dyck_generator;
pub use dyck_rec::build_dyck_recognizer;
pub use layout::{AttnBuilder, FfnBuilder, Layout};
pub use nobos::{build_dyck_generator_nobos, build_dyck_recognizer_nobos, first_two_distinct};
pub use pseudo_bos::{build_pseudo_bos_block, pseudo_bos_eps};
pub use recov::recov;
pub use score::{Feature, ScoreSpec, ScoreTerm};
pub use select::{phi, select_constants, select_constants_with, sweep_c2_ok, theta, SelectReport};
pub use shuffle::{build_shuffle_generator, build_shuffle_recognizer, shuffle_gen_constant};

use crate::lang_core::{GenParams, LangError, Token, TokenSequence};
use crate::transformer_core::{model_forward, CompiledModel, Head, ModelError, TransformerModel};

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("invalid construction parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("task {task} does not support {what}")]
    Unsupported { task: Task, what: &'static str },
}

/// Which network a [`BuiltNetwork`] implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    DyckRec,
    DyckGen,
    ShuffleRec,
    ShuffleGen,
    DyckRecNobos,
    DyckGenNobos,
}

impl Task {
    pub const ALL: [Task; 6] =
        [Task::DyckRec, Task::DyckGen, Task::ShuffleRec, Task::ShuffleGen, Task::DyckRecNobos, Task::DyckGenNobos];

    pub fn name(self) -> &'static str {
        match self {
            Task::DyckRec => "dyck-rec",
            Task::DyckGen => "dyck-gen",
            Task::ShuffleRec => "shuffle-rec",
            Task::ShuffleGen => "shuffle-gen",
            Task::DyckRecNobos => "dyck-rec-nobos",
            Task::DyckGenNobos => "dyck-gen-nobos",
        }
    }

    pub fn is_recognizer(self) -> bool {
        matches!(self, Task::DyckRec | Task::ShuffleRec | Task::DyckRecNobos)
    }

    pub fn uses_bos(self) -> bool {
        !matches!(self, Task::DyckRecNobos | Task::DyckGenNobos)
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| format!("unknown task {s:?}"))
    }
}

/// Attention regime for the compiled layers.
///
/// `PerConstruction` runs counting and averaging layers under softmax and the
/// selection layers under hardmax. `Softmax` runs every layer under softmax
/// with finite constants and swaps in the recovering-function FFN after the
/// type fetch. `Hardmax` runs every layer under hardmax and requires `a = 0`
/// so that the BOS-anchored counting layers see exact ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttnPolicy {
    #[default]
    PerConstruction,
    Softmax,
    Hardmax,
}

impl AttnPolicy {
    pub fn name(self) -> &'static str {
        match self {
            AttnPolicy::PerConstruction => "per-construction",
            AttnPolicy::Softmax => "softmax",
            AttnPolicy::Hardmax => "hardmax",
        }
    }
}

impl std::str::FromStr for AttnPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [AttnPolicy::PerConstruction, AttnPolicy::Softmax, AttnPolicy::Hardmax]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown attention policy {s:?}"))
    }
}

/// The free constants of the constructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionParams {
    /// BOS attention score; `φ(i) = atan(i/eᵃ)`, `θ(d) = atan(d/eᵃ)`.
    pub a: f64,
    /// Depth-match sharpness of the type fetch.
    pub c1_4: f64,
    /// Overall scale of the type-fetch score.
    pub c2_4: f64,
    /// Scale of the BOS-or-violation selection.
    pub c1_5: f64,
    /// `2(m+1)` with `m = max(1, ⌈log₂k⌉)`.
    pub c3_4: f64,
    /// Indicator gap of the generator.
    pub eps_3: f64,
    /// Generator logit scale.
    pub c0_gen: f64,
    /// Decision band for `q_i`.
    pub eps_q: f64,
    /// Longest body (bracket count) the constants are validated for.
    pub n_max: usize,
    /// Type-fetch scale used by generators under softmax.
    pub c2_gen: f64,
    /// Shift-to-previous-position scale of the BOS-free recognizer.
    pub c_shift: f64,
    /// Type-matching scale of the Shuffle-Dyck recognizer.
    pub c_shuffle: f64,
    /// Ramp width of the recovering function.
    pub recov_eps: f64,
    /// Bias channel scale inside the recovering FFN.
    pub recov_c: f64,
    pub attn: AttnPolicy,
}

/// `max(1, ⌈log₂k⌉)`: width of the binary type code.
pub fn code_width(k: usize) -> usize {
    let mut m = 0;
    while (1usize << m) < k {
        m += 1;
    }
    m.max(1)
}

impl ConstructionParams {
    /// Checks the invariants that make the constructions exact up to `n_max`.
    pub fn validate(&self, k: usize) -> Result<(), ConstructError> {
        let bad = |s: String| Err(ConstructError::Params(s));
        if k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.n_max == 0 {
            return bad("n_max must be at least 1".into());
        }
        let finite = [
            self.a,
            self.c1_4,
            self.c2_4,
            self.c1_5,
            self.c3_4,
            self.eps_3,
            self.c0_gen,
            self.eps_q,
            self.c2_gen,
            self.c_shift,
            self.c_shuffle,
            self.recov_eps,
            self.recov_c,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all constants must be finite".into());
        }
        let gap = select::min_depth_gap(self.a, self.n_max);
        if self.c1_4 * gap <= 2.0 {
            return bad(format!("c1_4 = {} too small: c1_4·δ_min = {} ≤ 2", self.c1_4, self.c1_4 * gap));
        }
        if !(self.eps_3 > 0.0 && self.eps_3 < theta(1.0, self.a).sin()) {
            return bad(format!("eps_3 = {} must lie in (0, sin θ(1))", self.eps_3));
        }
        if self.c0_gen <= 0.0 {
            return bad("c0_gen must be positive".into());
        }
        if self.c2_4 <= 0.0 || self.c1_5 <= 0.0 || self.c2_gen <= 0.0 || self.c_shift <= 0.0 || self.c_shuffle <= 0.0 {
            return bad("selection scales must be positive".into());
        }
        let m = code_width(k) as f64;
        if self.c3_4 != 2.0 * (m + 1.0) {
            return bad(format!("c3_4 must equal 2(m+1) = {}", 2.0 * (m + 1.0)));
        }
        if !(self.recov_eps > 0.0 && self.recov_eps <= 1.0 / 20.0) {
            return bad(format!("recov_eps = {} must lie in (0, 1/20]", self.recov_eps));
        }
        if self.recov_c <= 2.0 * 6f64.sqrt() * (2.0 * m + 1.0).sqrt() {
            return bad(format!("recov_c = {} too small for m = {m}", self.recov_c));
        }
        if self.attn == AttnPolicy::Hardmax && self.a != 0.0 {
            return bad("hardmax policy requires a = 0".into());
        }
        Ok(())
    }
}

/// Score decomposition of one selection layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionLayer {
    pub block: usize,
    pub spec: ScoreSpec,
}

/// Construction metadata written next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionMeta {
    pub proof: String,
    pub channels: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    pub selection: Vec<SelectionLayer>,
    /// Generation process realized by a generator head.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenParams>,
    /// Named derived constants (q at BOS, pseudo-BOS ε, masking constant, ...).
    #[serde(default)]
    pub derived: BTreeMap<String, f64>,
}

/// A compiled network together with its task, constants and metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltNetwork {
    pub task: Task,
    pub model: TransformerModel,
    pub head: Head,
    pub params: ConstructionParams,
    pub meta: ConstructionMeta,
}

/// Result of running a recognizer on one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    /// Framing gate and network sign combined.
    pub accept: bool,
    /// Whether the input has the framing the network expects.
    pub framing_ok: bool,
    /// Sign of the head alone (`None` when the input cannot be embedded).
    pub network_accept: Option<bool>,
    pub margin: f64,
}

fn framing_ok(seq: &TokenSequence, with_bos: bool) -> bool {
    let toks = seq.tokens();
    let n = toks.len();
    if n == 0 || toks[n - 1] != Token::Eos {
        return false;
    }
    if toks[..n - 1].contains(&Token::Eos) {
        return false;
    }
    if with_bos {
        toks[0] == Token::Bos && !toks[1..].contains(&Token::Bos)
    } else {
        !toks.contains(&Token::Bos)
    }
}

impl BuiltNetwork {
    pub fn k(&self) -> usize {
        self.model.k
    }

    /// Preprocesses the weights once; use this when running many inputs.
    pub fn compile(&self) -> CompiledNetwork<'_> {
        CompiledNetwork { net: self, model: CompiledModel::new(&self.model) }
    }

    /// Runs a recognizer. The network sign decides membership for
    /// well-framed inputs; inputs with misplaced BOS/EOS tokens are rejected
    /// by the framing gate.
    pub fn recognize(&self, seq: &TokenSequence) -> Result<Verdict, ConstructError> {
        self.compile().recognize(seq)
    }

    /// Next-token distribution after every prefix `seq[..=i]`.
    pub fn next_distributions(&self, seq: &TokenSequence) -> Result<Vec<Vec<f64>>, ConstructError> {
        self.compile().next_distributions(seq)
    }

    /// Final residual stream (for channel inspection).
    pub fn forward(&self, seq: &TokenSequence) -> Result<Vec<Vec<f64>>, ConstructError> {
        Ok(model_forward(&self.model, seq)?)
    }

    /// Channel indices of a named block in the residual stream.
    pub fn channel(&self, name: &str) -> Option<&[usize]> {
        self.meta.channels.get(name).map(|v| v.as_slice())
    }
}

/// A [`BuiltNetwork`] with its weights preprocessed for repeated evaluation.
pub struct CompiledNetwork<'a> {
    net: &'a BuiltNetwork,
    model: CompiledModel<'a>,
}

impl<'a> CompiledNetwork<'a> {
    pub fn network(&self) -> &'a BuiltNetwork {
        self.net
    }

    /// See [`BuiltNetwork::recognize`].
    pub fn recognize(&self, seq: &TokenSequence) -> Result<Verdict, ConstructError> {
        let net = self.net;
        if !net.task.is_recognizer() {
            return Err(ConstructError::Unsupported { task: net.task, what: "recognition" });
        }
        let fok = framing_ok(seq, net.task.uses_bos());
        let in_range = seq.iter().all(|t| t.bracket_type().is_none_or(|b| (1..=net.k()).contains(&b)));
        if !in_range || seq.is_empty() {
            return Ok(Verdict { accept: false, framing_ok: fok, network_accept: None, margin: f64::NAN });
        }
        let (sign, margin) = self.model.recognize(&net.head, seq)?;
        Ok(Verdict { accept: fok && sign > 0, framing_ok: fok, network_accept: Some(sign > 0), margin })
    }

    /// See [`BuiltNetwork::next_distributions`].
    pub fn next_distributions(&self, seq: &TokenSequence) -> Result<Vec<Vec<f64>>, ConstructError> {
        if self.net.task.is_recognizer() {
            return Err(ConstructError::Unsupported { task: self.net.task, what: "generation" });
        }
        Ok(self.model.next_token_distributions(&self.net.head, seq)?)
    }

    pub fn forward(&self, seq: &TokenSequence) -> Result<Vec<Vec<f64>>, ConstructError> {
        Ok(self.model.forward(seq)?)
    }
}

/// Builds the network for `task`, taking generation parameters from `gen`
/// when the task is a generator.
pub fn build_task(
    task: Task,
    k: usize,
    params: &ConstructionParams,
    gen: Option<&GenParams>,
) -> Result<BuiltNetwork, ConstructError> {
    let need = |what: &str| ConstructError::Params(format!("{task} needs {what} generation parameters"));
    match task {
        Task::DyckRec => build_dyck_recognizer(k, params),
        Task::ShuffleRec => build_shuffle_recognizer(k, params),
        Task::DyckRecNobos => build_dyck_recognizer_nobos(k, params),
        Task::DyckGen => match gen {
            Some(GenParams::Dyck(g)) => build_dyck_generator(k, g, params),
            _ => Err(need("Dyck")),
        },
        Task::DyckGenNobos => match gen {
            Some(GenParams::Dyck(g)) => build_dyck_generator_nobos(k, params, g),
            _ => Err(need("Dyck")),
        },
        Task::ShuffleGen => match gen {
            Some(GenParams::Shuffle(g)) => build_shuffle_generator(k, g, params),
            _ => Err(need("Shuffle-Dyck")),
        },
    }
}
