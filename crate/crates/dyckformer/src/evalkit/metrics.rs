use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetRecord, Split, SplitSpec};
use super::EvalError;
use crate::constructions::{first_two_distinct, BuiltNetwork, CompiledNetwork, Task};
use crate::exec::Exec;
use crate::lang_core::{Lang, Scan, ScanStatus, Token, TokenSequence};

/// `½ Σ |p_l − p′_l|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64, EvalError> {
    if p.len() != q.len() {
        return Err(EvalError::Length(p.len(), q.len()));
    }
    for v in [p, q] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(EvalError::NotNormalized(s));
        }
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Mean and count for one length bucket.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Bucket {
    pub value: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccClosedReport {
    pub id: Bucket,
    pub ood: Bucket,
}

/// Next-token distributions aligned with the positions of a BOS-framed
/// sequence; `None` where the source has no prediction.
pub type Aligned = Vec<Option<Vec<f64>>>;

/// Aligned predictions of a generator network. BOS-free generators read the
/// body only, so the BOS position has no prediction; inputs whose first two
/// brackets coincide are outside their supported class and yield all `None`.
pub fn network_predictions(net: &BuiltNetwork, seq: &TokenSequence) -> Result<Aligned, EvalError> {
    compiled_predictions(&net.compile(), seq)
}

/// [`network_predictions`] for a network compiled once up front.
pub fn compiled_predictions(net: &CompiledNetwork<'_>, seq: &TokenSequence) -> Result<Aligned, EvalError> {
    match net.network().task {
        Task::DyckGen | Task::ShuffleGen => Ok(net.next_distributions(seq)?.into_iter().map(Some).collect()),
        Task::DyckGenNobos => {
            let body: Vec<Token> = seq.iter().copied().filter(|&t| t != Token::Bos).collect();
            let body = TokenSequence::new(body);
            if body.is_empty() || !first_two_distinct(&body) {
                return Ok(vec![None; seq.len()]);
            }
            let mut out = vec![None];
            out.extend(net.next_distributions(&body)?.into_iter().map(Some));
            Ok(out)
        }
        t => Err(EvalError::Network(format!("{t} is not a generator"))),
    }
}

fn live_positions(lang: Lang, k: usize, seq: &TokenSequence) -> Vec<(usize, Scan)> {
    let mut scan = Scan::new(lang, k);
    let mut out = Vec::new();
    for (i, &t) in seq.iter().enumerate() {
        scan.push(t);
        if scan.status() == ScanStatus::Open {
            out.push((i, scan.clone()));
        } else if scan.status() == ScanStatus::Dead {
            break;
        }
    }
    out
}

/// Mean of `p(valid closers) / p(all closers)` over live prefixes with depth
/// ≥ 1, split by prefix bracket count.
pub fn acc_closed<F>(
    source: F,
    lang: Lang,
    data: &[DatasetRecord],
    split: &SplitSpec,
    exec: Exec,
) -> Result<AccClosedReport, EvalError>
where
    F: Fn(&TokenSequence) -> Result<Aligned, EvalError> + Sync + Send,
{
    let per_seq = exec.map(data, |rec| -> Result<Vec<(Split, f64)>, EvalError> {
        let preds = source(&rec.tokens)?;
        let k = rec.k;
        let mut out = Vec::new();
        for (i, scan) in live_positions(lang, k, &rec.tokens) {
            if scan.depth() < 1 {
                continue;
            }
            let Some(p) = preds.get(i).and_then(|p| p.as_ref()) else { continue };
            let closers: f64 = (0..k).map(|t| p[k + t]).sum();
            let valid: f64 = scan.valid_closers().iter().map(|&t| p[k + t - 1]).sum();
            let v = if closers > 0.0 { valid / closers } else { 0.0 };
            out.push((split.bucket(i), v));
        }
        Ok(out)
    });
    let mut sums: BTreeMap<Split, (f64, usize)> = BTreeMap::new();
    for r in per_seq {
        for (s, v) in r? {
            let e = sums.entry(s).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    if sums.is_empty() {
        return Err(EvalError::Empty);
    }
    let bucket = |s| sums.get(&s).map_or(Bucket::default(), |&(t, n)| Bucket { value: Some(t / n as f64), count: n });
    Ok(AccClosedReport { id: bucket(Split::Id), ood: bucket(Split::Ood) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvReport {
    pub id: Bucket,
    pub ood: Bucket,
    /// `(record id, position)` of the largest TV.
    pub worst: Option<(usize, usize)>,
    /// Records outside the network's supported input class.
    pub skipped: usize,
}

impl TvReport {
    pub fn max(&self) -> f64 {
        self.id.value.unwrap_or(0.0).max(self.ood.value.unwrap_or(0.0))
    }
}

/// Exact TV between the network and the process at every live prefix of
/// every record.
pub fn max_tv_over_prefixes(
    net: &BuiltNetwork,
    data: &[DatasetRecord],
    split: &SplitSpec,
    exec: Exec,
) -> Result<TvReport, EvalError> {
    let gp =
        net.meta.gen.clone().ok_or_else(|| EvalError::Network(format!("{} has no generation process", net.task)))?;
    if net.task.is_recognizer() {
        return Err(EvalError::Network(format!("{} is not a generator", net.task)));
    }
    let compiled = net.compile();
    let per_seq = exec.map(data, |rec| -> Result<(Vec<(Split, f64, usize)>, bool), EvalError> {
        let preds = compiled_predictions(&compiled, &rec.tokens)?;
        let mut out = Vec::new();
        let mut any = false;
        for (i, scan) in live_positions(gp.lang(), gp.k(), &rec.tokens) {
            let Some(p) = preds.get(i).and_then(|p| p.as_ref()) else { continue };
            any = true;
            let want = gp.next_from_scan(&scan);
            out.push((split.bucket(i), tv_distance(p, &want)?, i));
        }
        Ok((out, any || rec.tokens.len() <= 1))
    });
    let mut rep = TvReport { id: Bucket::default(), ood: Bucket::default(), worst: None, skipped: 0 };
    let mut best = -1.0;
    for (rec, r) in data.iter().zip(per_seq) {
        let (vals, supported) = r?;
        if !supported {
            rep.skipped += 1;
        }
        for (s, tv, i) in vals {
            let b = if s == Split::Id { &mut rep.id } else { &mut rep.ood };
            b.count += 1;
            b.value = Some(b.value.map_or(tv, |v: f64| v.max(tv)));
            if tv > best {
                best = tv;
                rep.worst = Some((rec.id, i));
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    /// Smallest head margin over accepted positives.
    pub min_member_margin: Option<f64>,
    /// Largest head margin over negatives the network saw.
    pub max_nonmember_margin: Option<f64>,
}

/// Verdicts of a recognizer on labeled positives and negatives.
pub fn recognition_accuracy(
    net: &BuiltNetwork,
    positives: &[TokenSequence],
    negatives: &[TokenSequence],
    exec: Exec,
) -> Result<RecognitionReport, EvalError> {
    let run = |xs: &[TokenSequence]| -> Result<Vec<crate::constructions::Verdict>, EvalError> {
        let compiled = net.compile();
        exec.map(xs, |s| compiled.recognize(s)).into_iter().map(|r| r.map_err(EvalError::from)).collect()
    };
    let pv = run(positives)?;
    let nv = run(negatives)?;
    let tp = pv.iter().filter(|v| v.accept).count();
    let tn = nv.iter().filter(|v| !v.accept).count();
    let fin = |v: f64| v.is_finite().then_some(v);
    let min_m = pv
        .iter()
        .filter(|v| v.accept)
        .filter_map(|v| fin(v.margin))
        .fold(None, |a: Option<f64>, m| Some(a.map_or(m, |x| x.min(m))));
    let max_n = nv
        .iter()
        .filter(|v| v.framing_ok)
        .filter_map(|v| fin(v.margin))
        .fold(None, |a: Option<f64>, m| Some(a.map_or(m, |x| x.max(m))));
    let total = pv.len() + nv.len();
    Ok(RecognitionReport {
        total,
        correct: tp + tn,
        accuracy: if total == 0 { 1.0 } else { (tp + tn) as f64 / total as f64 },
        true_pos: tp,
        true_neg: tn,
        false_pos: nv.len() - tn,
        false_neg: pv.len() - tp,
        min_member_margin: min_m,
        max_nonmember_margin: max_n,
    })
}

/// Per-split numbers of a metrics file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_closed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recognition_accuracy: Option<f64>,
    pub positions: usize,
    pub sequences: usize,
}

/// `{"task", "k", "splits": {"id", "ood"}, "params"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub k: usize,
    pub splits: BTreeMap<Split, SplitMetrics>,
    pub params: serde_json::Value,
}

impl MetricsReport {
    pub fn new(task: impl Into<String>, k: usize, params: serde_json::Value) -> Self {
        let mut splits = BTreeMap::new();
        splits.insert(Split::Id, SplitMetrics::default());
        splits.insert(Split::Ood, SplitMetrics::default());
        Self { task: task.into(), k, splits, params }
    }

    pub fn split_mut(&mut self, s: Split) -> &mut SplitMetrics {
        self.splits.entry(s).or_default()
    }

    /// Every probability-valued entry lies in `[0, 1]`.
    pub fn is_valid(&self) -> bool {
        let ok = |v: Option<f64>| v.is_none_or(|x| (0.0..=1.0).contains(&x));
        self.splits.values().all(|m| ok(m.acc_closed) && ok(m.max_tv) && ok(m.recognition_accuracy))
    }
}
