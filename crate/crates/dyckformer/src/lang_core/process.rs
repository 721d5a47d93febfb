//! The Dyck and Shuffle-Dyck generation processes: exact conditionals,
//! ancestral sampling and chain-rule log-probabilities.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::{Scan, ScanStatus};
use super::{Alphabet, Lang, LangError, Token, TokenSequence};

const SUM_TOL: f64 = 1e-12;

fn check_prob(name: &str, v: f64) -> Result<(), LangError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(LangError::BadParams(format!("{name} = {v} must lie in (0, 1)")))
    }
}

fn check_simplex(name: &str, v: &[f64]) -> Result<(), LangError> {
    if v.is_empty() {
        return Err(LangError::BadParams(format!("{name} is empty")));
    }
    if let Some(x) = v.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(LangError::BadParams(format!("{name} has non-positive entry {x}")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(LangError::BadParams(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// Parameters `(q, r, π)` of the Dyck generation process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyckGenParams {
    pub q: f64,
    pub r: f64,
    pub pi: Vec<f64>,
}

impl DyckGenParams {
    pub fn new(q: f64, r: f64, pi: Vec<f64>) -> Result<Self, LangError> {
        check_prob("q", q)?;
        check_prob("r", r)?;
        check_simplex("pi", &pi)?;
        Ok(Self { q, r, pi })
    }

    /// Uniform type distribution over `k` types.
    pub fn uniform(k: usize, q: f64, r: f64) -> Result<Self, LangError> {
        Self::new(q, r, vec![1.0 / k as f64; k.max(1)])
    }

    pub fn k(&self) -> usize {
        self.pi.len()
    }
}

/// Parameters `(q, r, π, π̄)` of the Shuffle-Dyck generation process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleGenParams {
    pub q: f64,
    pub r: f64,
    pub pi: Vec<f64>,
    pub pibar: Vec<f64>,
}

impl ShuffleGenParams {
    pub fn new(q: f64, r: f64, pi: Vec<f64>, pibar: Vec<f64>) -> Result<Self, LangError> {
        check_prob("q", q)?;
        check_prob("r", r)?;
        check_simplex("pi", &pi)?;
        check_simplex("pibar", &pibar)?;
        if pi.len() != pibar.len() {
            return Err(LangError::BadParams("pi and pibar differ in length".into()));
        }
        Ok(Self { q, r, pi, pibar })
    }

    pub fn uniform(k: usize, q: f64, r: f64) -> Result<Self, LangError> {
        let u = vec![1.0 / k as f64; k.max(1)];
        Self::new(q, r, u.clone(), u)
    }

    pub fn k(&self) -> usize {
        self.pi.len()
    }
}

/// Either process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "lang", rename_all = "lowercase")]
pub enum GenParams {
    Dyck(DyckGenParams),
    Shuffle(ShuffleGenParams),
}

impl GenParams {
    pub fn k(&self) -> usize {
        match self {
            GenParams::Dyck(p) => p.k(),
            GenParams::Shuffle(p) => p.k(),
        }
    }

    pub fn lang(&self) -> Lang {
        match self {
            GenParams::Dyck(_) => Lang::Dyck,
            GenParams::Shuffle(_) => Lang::Shuffle,
        }
    }

    pub fn q(&self) -> f64 {
        match self {
            GenParams::Dyck(p) => p.q,
            GenParams::Shuffle(p) => p.q,
        }
    }

    pub fn r(&self) -> f64 {
        match self {
            GenParams::Dyck(p) => p.r,
            GenParams::Shuffle(p) => p.r,
        }
    }

    pub fn pi(&self) -> &[f64] {
        match self {
            GenParams::Dyck(p) => &p.pi,
            GenParams::Shuffle(p) => &p.pi,
        }
    }

    /// Next-token distribution for a live scan state (status `Open`).
    ///
    /// Panics if the scan is not in the `Open` state; public callers go
    /// through [`dyck_next_distribution`] / [`shuffle_next_distribution`] or
    /// [`GenParams::next_distribution`].
    pub fn next_from_scan(&self, scan: &Scan) -> Vec<f64> {
        assert_eq!(scan.status(), ScanStatus::Open, "next_from_scan on a non-open prefix");
        let k = self.k();
        let alpha = Alphabet::new(k).expect("k ≥ 1");
        let mut out = vec![0.0; alpha.vocab_size()];
        let counters = scan.counters();
        let at_zero = counters.iter().all(|&c| c == 0);
        let (q, r) = (self.q(), self.r());
        if at_zero {
            for (t, p) in self.pi().iter().enumerate() {
                out[t] = r * p;
            }
            out[alpha.eos_id()] = 1.0 - r;
            return out;
        }
        match self {
            GenParams::Dyck(p) => {
                for (t, pt) in p.pi.iter().enumerate() {
                    out[t] = q * pt;
                }
                let top = scan.top().expect("positive depth has a stack top");
                out[k + top - 1] = 1.0 - q;
            }
            GenParams::Shuffle(p) => {
                let z: f64 = q * p.pi.iter().sum::<f64>()
                    + (0..k).filter(|&t| counters[t] > 0).map(|t| (1.0 - q) * p.pibar[t]).sum::<f64>();
                for (t, pt) in p.pi.iter().enumerate() {
                    out[t] = q * pt / z;
                }
                for t in 0..k {
                    if counters[t] > 0 {
                        out[k + t] = (1.0 - q) * p.pibar[t] / z;
                    }
                }
            }
        }
        out
    }

    /// Exact conditional distribution over the `2k + 2` token ids.
    pub fn next_distribution(&self, prefix: &TokenSequence) -> Result<Vec<f64>, LangError> {
        let alpha = Alphabet::new(self.k())?;
        alpha.check_seq(prefix)?;
        let scan = Scan::run(self.lang(), self.k(), prefix);
        if scan.status() != ScanStatus::Open {
            return Err(LangError::NotAPrefix);
        }
        Ok(self.next_from_scan(&scan))
    }
}

/// Dyck conditional `p(· | prefix)`; errors on non-prefixes.
pub fn dyck_next_distribution(prefix: &TokenSequence, p: &DyckGenParams) -> Result<Vec<f64>, LangError> {
    GenParams::Dyck(p.clone()).next_distribution(prefix)
}

/// Shuffle-Dyck conditional `p(· | prefix)`; errors on non-prefixes.
pub fn shuffle_next_distribution(prefix: &TokenSequence, p: &ShuffleGenParams) -> Result<Vec<f64>, LangError> {
    GenParams::Shuffle(p.clone()).next_distribution(prefix)
}

/// A sampled sequence and whether it hit the length cap before `EOS`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampled {
    pub tokens: TokenSequence,
    pub truncated: bool,
}

/// Ancestral sampling from `BOS` until `EOS` or until `cap` tokens follow `BOS`.
pub fn sample_sequence(p: &GenParams, seed: u64, cap: usize) -> Sampled {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(p, &mut rng, cap)
}

pub(crate) fn sample_with<R: rand::Rng>(p: &GenParams, rng: &mut R, cap: usize) -> Sampled {
    let k = p.k();
    let alpha = Alphabet::new(k).expect("k ≥ 1");
    let mut scan = Scan::new(p.lang(), k);
    scan.push(Token::Bos);
    let mut tokens = TokenSequence::with_bos(&[]);
    for _ in 0..cap {
        let dist = p.next_from_scan(&scan);
        let idx = WeightedIndex::new(&dist).expect("valid distribution").sample(rng);
        let tok = alpha.token_of(idx).expect("in range");
        tokens.push(tok);
        scan.push(tok);
        if tok == Token::Eos {
            return Sampled { tokens, truncated: false };
        }
    }
    Sampled { tokens, truncated: true }
}

/// Chain-rule log-probability of a full sequence; `−∞` iff some step has
/// probability zero (which includes every non-member).
pub fn process_log_probability(seq: &TokenSequence, p: &GenParams) -> f64 {
    let k = p.k();
    let Ok(alpha) = Alphabet::new(k) else { return f64::NEG_INFINITY };
    let mut scan = Scan::new(p.lang(), k);
    let mut iter = seq.iter();
    if iter.next() != Some(&Token::Bos) {
        return f64::NEG_INFINITY;
    }
    scan.push(Token::Bos);
    let mut lp = 0.0;
    for &tok in iter {
        if scan.status() != ScanStatus::Open {
            return f64::NEG_INFINITY;
        }
        let Ok(id) = alpha.id_of(tok) else { return f64::NEG_INFINITY };
        let pr = p.next_from_scan(&scan)[id];
        if pr <= 0.0 {
            return f64::NEG_INFINITY;
        }
        lp += pr.ln();
        scan.push(tok);
    }
    if scan.status() == ScanStatus::Complete {
        lp
    } else {
        f64::NEG_INFINITY
    }
}

/// Lower bound `(1 − r)·min{r, 1 − q, q·π_min}ⁿ` on a member's probability,
/// exactly as stated for Dyck members of body length `n`.
///
/// This form can fail when `q > r`: a depth-0 open costs `r·π_t`, which may
/// sit below every term of the minimum. [`epsilon_n_corrected`] is the bound
/// that always holds.
pub fn epsilon_n(p: &DyckGenParams, n: usize) -> f64 {
    let pmin = p.pi.iter().copied().fold(f64::INFINITY, f64::min);
    (1.0 - p.r) * p.r.min(1.0 - p.q).min(p.q * pmin).powi(n as i32)
}

/// `(1 − r)·min{r·π_min, q·π_min, 1 − q}ⁿ`, a per-step lower bound valid for
/// every member of body length `n`.
pub fn epsilon_n_corrected(p: &DyckGenParams, n: usize) -> f64 {
    let pmin = p.pi.iter().copied().fold(f64::INFINITY, f64::min);
    (1.0 - p.r) * (p.r * pmin).min(p.q * pmin).min(1.0 - p.q).powi(n as i32)
}
