//! Acceptance suite: one PASS/FAIL line per criterion, with the measured
//! value, the pinned tolerance and the wall time. Exits nonzero if any
//! criterion fails.

mod common;

use std::time::{Duration, Instant};

use dyckformer::constructions::{
    build_dyck_generator, build_dyck_generator_nobos, build_dyck_recognizer, build_dyck_recognizer_nobos,
    build_pseudo_bos_block, build_shuffle_generator, build_shuffle_recognizer, first_two_distinct, phi, recov,
    select_constants_with, theta, AttnPolicy, BuiltNetwork, ConstructionParams, Feature,
};
use dyckformer::conversions::{
    ln_ffn_network, qk_fixed_norm_wrap, qkln_to_qkrmsln, qkrmsln_to_qkln, rmsln_ffn_to_ln_ffn, wrap_selection_layers,
};
use dyckformer::evalkit::{corrupt_once, enumerate_bodies, malformed_framings, split_seed};
use dyckformer::lang_core::{
    epsilon_n, epsilon_n_corrected, is_shuffle_member, process_log_probability, sample_sequence, DyckGenParams,
    GenParams, ShuffleGenParams, Token, TokenSequence,
};
use dyckformer::tensor_ops::Matrix;
use dyckformer::transformer_core::{
    attention_scores, ffn_forward, model_trace, AttentionWeights, AttnMode, FfnWeights, NormKind, QkNorm,
};
use dyckformer::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POLICIES: [AttnPolicy; 3] = [AttnPolicy::Hardmax, AttnPolicy::PerConstruction, AttnPolicy::Softmax];
const TV_BOUND_DYCK: f64 = 2.0 * 9.0 * 6.144_212_353_328_21e-6; // 2·(k+1)·e⁻¹² at k = 8
const RANDOM_PER_K: usize = 10_000;

type Outcome = Result<String, String>;

fn params(k: usize, n_max: usize, attn: AttnPolicy) -> ConstructionParams {
    select_constants_with(k, n_max, 0.8, attn).0
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn report(name: &str, took: Duration, out: &Outcome) -> bool {
    let (tag, msg, ok) = match out {
        Ok(m) => ("PASS", m, true),
        Err(m) => ("FAIL", m, false),
    };
    println!("{tag} {name}: {msg} [{:.1}s]", took.as_secs_f64());
    ok
}

fn verdicts(net: &BuiltNetwork, seqs: &[TokenSequence]) -> Vec<(bool, f64)> {
    let net = net.compile();
    Exec::Parallel.map(seqs, |s| {
        let v = net.recognize(s).expect("recognizer runs");
        (v.accept, v.margin)
    })
}

/// Exhaustive and random recognition corpora for the BOS recognizer.
struct RecCorpus {
    k: usize,
    n_max: usize,
    seqs: Vec<TokenSequence>,
}

fn exhaustive_corpus(k: usize) -> RecCorpus {
    let bodies = enumerate_bodies(k, 8);
    let mut seqs: Vec<TokenSequence> = bodies.iter().map(|b| TokenSequence::framed(b)).collect();
    let members: Vec<&Vec<Token>> = bodies.iter().filter(|b| common::stack_body(b, k)).collect();
    let mut r = rng(11 + k as u64);
    for m in &members {
        seqs.push(corrupt_once(&TokenSequence::framed(m), k, &mut r));
    }
    for b in bodies.iter().filter(|b| b.len() <= 6) {
        seqs.extend(malformed_framings(b));
    }
    for m in members.iter().filter(|m| m.len() > 6) {
        seqs.extend(malformed_framings(m));
    }
    RecCorpus { k, n_max: 12, seqs }
}

fn random_corpus(k: usize, count: usize, seed: u64) -> RecCorpus {
    let mut r = rng(seed);
    let mut seqs = Vec::with_capacity(count);
    for i in 0..count {
        let n = 2 * r.random_range(0..=100);
        let body = common::random_dyck_body(k, n, &mut r);
        let m = TokenSequence::framed(&body);
        if i % 2 == 0 {
            seqs.push(m);
        } else {
            seqs.push(corrupt_once(&m, k, &mut r));
        }
    }
    RecCorpus { k, n_max: 201, seqs }
}

/// Runs every policy on a corpus; returns (hardmax errors, policy mismatches,
/// member margins).
fn recognition_run(
    c: &RecCorpus,
    build: fn(usize, &ConstructionParams) -> BuiltNetwork,
) -> (usize, usize, Vec<f64>, usize) {
    let truth: Vec<bool> = c.seqs.iter().map(|s| common::stack_member(s, c.k)).collect();
    let mut hard_err = 0;
    let mut mismatch = 0;
    let mut margins = Vec::new();
    let mut reference: Option<Vec<bool>> = None;
    for attn in POLICIES {
        let net = build(c.k, &params(c.k, c.n_max, attn));
        let v = verdicts(&net, &c.seqs);
        let acc: Vec<bool> = v.iter().map(|x| x.0).collect();
        match &reference {
            None => {
                hard_err = acc.iter().zip(&truth).filter(|(a, t)| a != t).count();
                reference = Some(acc);
            }
            Some(h) => mismatch += acc.iter().zip(h).filter(|(a, b)| a != b).count(),
        }
        margins.extend(v.iter().zip(&truth).filter(|(_, &t)| t).map(|(x, _)| x.1));
    }
    let members = truth.iter().filter(|&&t| t).count();
    (hard_err, mismatch, margins, members)
}

fn build_rec(k: usize, p: &ConstructionParams) -> BuiltNetwork {
    build_dyck_recognizer(k, p).expect("recognizer builds")
}

fn build_rec_nobos(k: usize, p: &ConstructionParams) -> BuiltNetwork {
    build_dyck_recognizer_nobos(k, p).expect("BOS-free recognizer builds")
}

fn criterion_recognition(margins_out: &mut Vec<f64>) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let corpora = vec![
        exhaustive_corpus(1),
        exhaustive_corpus(2),
        random_corpus(4, RANDOM_PER_K, 404),
        random_corpus(8, RANDOM_PER_K, 808),
    ];
    for c in &corpora {
        let t = Instant::now();
        let (err, mis, margins, members) = recognition_run(c, build_rec);
        margins_out.extend(margins);
        ok &= err == 0 && mis == 0;
        lines.push(format!(
            "k={} n={} members={} hardmax_errors={} policy_mismatches={} ({:.1}s)",
            c.k,
            c.seqs.len(),
            members,
            err,
            mis,
            t.elapsed().as_secs_f64()
        ));
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_margin(margins: &[f64]) -> Outcome {
    let worst = margins.iter().map(|m| (m - 0.25).abs()).fold(0.0, f64::max);
    let msg = format!("{} member margins, max |margin − 0.25| = {worst:.3e} (tol 1e-9)", margins.len());
    if !margins.is_empty() && worst <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn sampled_dyck(k: usize, q: f64, r: f64, count: usize, cap: usize, seed: u64) -> Vec<TokenSequence> {
    let gp = GenParams::Dyck(DyckGenParams::uniform(k, q, r).expect("valid"));
    (0..count).map(|i| sample_sequence(&gp, split_seed(seed, i), cap).tokens).collect()
}

/// Max TV over all live prefixes. `offset` is 1 for BOS-free networks,
/// whose inputs drop the leading BOS.
fn dyck_tv(net: &BuiltNetwork, seqs: &[TokenSequence], k: usize, q: f64, r: f64, nobos: bool) -> (f64, usize) {
    let pi = vec![1.0 / k as f64; k];
    let net = net.compile();
    let per = Exec::Parallel.map(seqs, |s| {
        let toks = s.tokens();
        let brackets: Vec<Token> = toks.iter().copied().filter(|t| t.is_bracket()).collect();
        let (input, skip) = if nobos {
            if !first_two_distinct(&TokenSequence::new(toks[1..].to_vec())) {
                return (0.0, 0);
            }
            (TokenSequence::new(brackets.clone()), 1)
        } else {
            (TokenSequence::with_bos(&brackets), 0)
        };
        if input.is_empty() {
            return (0.0, 0);
        }
        let dists = net.next_distributions(&input).expect("generator runs");
        let mut worst: f64 = 0.0;
        let mut n = 0;
        for (i, d) in dists.iter().enumerate() {
            let consumed = i + skip;
            let want = common::dyck_process_next(&brackets[..consumed], k, q, r, &pi);
            worst = worst.max(common::tv(d, &want));
            n += 1;
        }
        (worst, n)
    });
    per.iter().fold((0.0, 0), |(w, n), &(a, b)| (w.max(a), n + b))
}

fn criterion_dyck_tv() -> Outcome {
    let (k, q, r) = (8, 0.5, 0.9);
    let seqs = sampled_dyck(k, q, r, 1000, 240, 2024);
    let gp = DyckGenParams::uniform(k, q, r).expect("valid");
    let mut lines = Vec::new();
    let mut ok = true;
    for attn in POLICIES {
        let mut p = params(k, 241, attn);
        p.c0_gen = 12.0;
        let net = build_dyck_generator(k, &gp, &p).expect("generator builds");
        let (worst, n) = dyck_tv(&net, &seqs, k, q, r, false);
        ok &= worst <= TV_BOUND_DYCK;
        lines.push(format!("{}: max TV {worst:.3e} over {n} prefixes", attn.name()));
    }
    let msg = format!("{} (bound {TV_BOUND_DYCK:.3e})", lines.join("; "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_shuffle_rec() -> Outcome {
    let k = 2;
    let enumerated = common::shuffle2_by_enumeration(8);
    let bodies = enumerate_bodies(k, 8);
    let mut oracle_bad = 0;
    for b in &bodies {
        let f = TokenSequence::framed(b);
        let c = common::counter_member(&f, k);
        if c != enumerated.contains(b) || c != is_shuffle_member(&f) {
            oracle_bad += 1;
        }
    }
    let mut seqs: Vec<TokenSequence> = bodies.iter().map(|b| TokenSequence::framed(b)).collect();
    for b in bodies.iter().filter(|b| b.len() <= 4) {
        seqs.extend(malformed_framings(b));
    }
    let truth: Vec<bool> = seqs.iter().map(|s| common::counter_member(s, k)).collect();
    let mut lines = vec![format!(
        "counter oracle vs enumeration: {} disagreements over {} bodies ({} members)",
        oracle_bad,
        bodies.len(),
        enumerated.len()
    )];
    let mut ok = oracle_bad == 0;
    for attn in POLICIES {
        let net = build_shuffle_recognizer(k, &params(k, 12, attn)).expect("builds");
        let v = verdicts(&net, &seqs);
        let err = v.iter().zip(&truth).filter(|(a, t)| a.0 != **t).count();
        ok &= err == 0;
        lines.push(format!("{}: {err} errors / {}", attn.name(), seqs.len()));
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_shuffle_tv() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (k, q, r) in [(2usize, 0.5, 0.9), (8, 0.5, 0.9)] {
        let sp = ShuffleGenParams::uniform(k, q, r).expect("valid");
        let gp = GenParams::Shuffle(sp.clone());
        let seqs: Vec<TokenSequence> = (0..500).map(|i| sample_sequence(&gp, split_seed(77, i), 100).tokens).collect();
        for attn in POLICIES {
            let net = build_shuffle_generator(k, &sp, &params(k, 101, attn)).expect("builds");
            let net = net.compile();
            let per = Exec::Parallel.map(&seqs, |s| {
                let brackets: Vec<Token> = s.iter().copied().filter(|t| t.is_bracket()).collect();
                let input = TokenSequence::with_bos(&brackets);
                let d = net.next_distributions(&input).expect("runs");
                let mut w: f64 = 0.0;
                for (i, di) in d.iter().enumerate() {
                    let want = common::shuffle_process_next(&brackets[..i], k, q, r, &sp.pi, &sp.pibar);
                    w = w.max(common::tv(di, &want));
                }
                (w, d.len())
            });
            let (w, n) = per.iter().fold((0.0f64, 0), |(a, n), &(b, m)| (a.max(b), n + m));
            ok &= w <= 1e-3;
            lines.push(format!("k={k} {}: max TV {w:.3e} over {n} prefixes", attn.name()));
        }
    }
    let msg = format!("{} (tol 1e-3)", lines.join("; "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn random_ftd_inputs(k: usize, count: usize, seed: u64) -> Vec<TokenSequence> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let n = r.random_range(1..=200);
        let mut body: Vec<Token> = (0..n)
            .map(|_| {
                let t = r.random_range(1..=k);
                if r.random_bool(0.5) {
                    Token::Open(t)
                } else {
                    Token::Close(t)
                }
            })
            .collect();
        if r.random_bool(0.5) {
            body.push(Token::Eos);
        }
        let s = TokenSequence::new(body);
        if first_two_distinct(&s) {
            out.push(s);
        }
    }
    out
}

fn criterion_pseudo_bos() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for k in [2usize, 8] {
        let seqs = random_ftd_inputs(k, 1000, 600 + k as u64);
        let p = params(k, 201, AttnPolicy::Hardmax);
        let gp = DyckGenParams::uniform(k, 0.5, 0.9).expect("valid");
        let nets = [build_rec_nobos(k, &p), build_dyck_generator_nobos(k, &p, &gp).expect("builds")];
        for net in &nets {
            let ch = net.channel("s_hat").expect("s_hat channel")[0];
            let bad: usize = Exec::Parallel
                .map(&seqs, |s| {
                    let input = if net.task.is_recognizer() {
                        s.clone()
                    } else {
                        TokenSequence::new(s.iter().copied().filter(|t| t.is_bracket()).collect())
                    };
                    let x = net.forward(&input).expect("runs");
                    x.iter().enumerate().filter(|(i, v)| v[ch] != if *i == 0 { 1.0 } else { 0.0 }).count()
                })
                .iter()
                .sum();
            ok &= bad == 0;
            lines.push(format!("k={k} {}: {bad} wrong positions", net.task));
        }
    }
    let mut r = rng(61);
    let mut bad = 0;
    for _ in 0..1000 {
        let d = r.random_range(2..6);
        let cands: Vec<Vec<f64>> = (0..d)
            .flat_map(|i| {
                [1.0, -1.0].map(|s| {
                    let mut v = vec![0.0; d];
                    v[i] = s;
                    v
                })
            })
            .collect();
        let n = r.random_range(2..60);
        let mut idx: Vec<usize> = (0..n).map(|_| r.random_range(0..cands.len())).collect();
        if idx[0] == idx[1] {
            idx[1] = (idx[1] + 1) % cands.len();
        }
        let eps = dyckformer::constructions::pseudo_bos_eps(n, 1.0, 2.0);
        let (a, f) = build_pseudo_bos_block(d, eps);
        let x: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| {
                let mut v = cands[i].clone();
                v.extend(vec![0.0; d]);
                v.extend([1.0, 0.0]);
                v
            })
            .collect();
        let h = ffn_forward(&f, &dyckformer::transformer_core::attention_forward(&a, &x).unwrap()).unwrap();
        bad += h.iter().enumerate().filter(|(i, v)| v[2 * d + 1] != if *i == 0 { 1.0 } else { 0.0 }).count();
    }
    ok &= bad == 0;
    lines.push(format!("standalone block: {bad} wrong positions over 1000 sequences"));
    let msg = format!("{} (exact)", lines.join("; "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_nobos() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let restrict = |c: RecCorpus| -> RecCorpus {
        let seqs = c
            .seqs
            .into_iter()
            .filter_map(|s| {
                let t = s.tokens();
                if t.first() != Some(&Token::Bos) || t.iter().filter(|&&x| x == Token::Bos).count() != 1 {
                    return None;
                }
                let s = TokenSequence::new(t[1..].to_vec());
                first_two_distinct(&s).then_some(s)
            })
            .collect();
        RecCorpus { seqs, ..c }
    };
    let corpora = vec![
        restrict(exhaustive_corpus(1)),
        restrict(exhaustive_corpus(2)),
        restrict(random_corpus(4, RANDOM_PER_K / 5, 4040)),
        restrict(random_corpus(8, RANDOM_PER_K / 5, 8080)),
    ];
    for c in &corpora {
        let truth: Vec<bool> = c
            .seqs
            .iter()
            .map(|s| {
                let t = s.tokens();
                t.last() == Some(&Token::Eos) && common::stack_body(&t[..t.len() - 1], c.k)
            })
            .collect();
        let mut reference: Option<Vec<bool>> = None;
        let mut err = 0;
        let mut mis = 0;
        for attn in POLICIES {
            let net = build_rec_nobos(c.k, &params(c.k, c.n_max, attn));
            let acc: Vec<bool> = verdicts(&net, &c.seqs).iter().map(|x| x.0).collect();
            match &reference {
                None => {
                    err = acc.iter().zip(&truth).filter(|(a, t)| a != t).count();
                    reference = Some(acc);
                }
                Some(h) => mis += acc.iter().zip(h).filter(|(a, b)| a != b).count(),
            }
        }
        ok &= err == 0 && mis == 0;
        lines.push(format!("rec k={} n={} hardmax_errors={err} policy_mismatches={mis}", c.k, c.seqs.len()));
    }
    let (k, q, r) = (8, 0.5, 0.9);
    let seqs = sampled_dyck(k, q, r, 1000, 240, 4242);
    let gp = DyckGenParams::uniform(k, q, r).expect("valid");
    for attn in POLICIES {
        let net = build_dyck_generator_nobos(k, &params(k, 241, attn), &gp).expect("builds");
        let (w, n) = dyck_tv(&net, &seqs, k, q, r, true);
        ok &= w <= TV_BOUND_DYCK;
        lines.push(format!("gen {}: max TV {w:.3e} over {n} prefixes (bound {TV_BOUND_DYCK:.3e})", attn.name()));
    }
    let n = 10_000;
    let coll = sampled_dyck(k, q, r, n, 4, 999)
        .iter()
        .filter(|s| {
            let t = s.tokens();
            t.len() >= 3 && t[1] == t[2]
        })
        .count();
    let rate = coll as f64 / n as f64;
    let p0 = 1.0 / k as f64;
    let lim = p0 + 3.0 * (p0 * (1.0 - p0) / n as f64).sqrt();
    ok &= rate <= lim;
    lines.push(format!("collision rate {rate:.4} ≤ {lim:.4}"));
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rand_matrix<R: Rng>(r: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap()
}

fn rand_vec<R: Rng>(r: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

fn rel_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            let scale = x.iter().chain(y).map(|v| v.abs()).fold(1.0, f64::max);
            x.iter().zip(y).map(move |(u, v)| (u - v).abs() / scale)
        })
        .fold(0.0, f64::max)
}

/// Positions whose score is within rounding (relative 1e-9) of the row maximum.
fn argmax_set(row: &[f64]) -> Vec<usize> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-9 * m.abs().max(1.0);
    (0..row.len()).filter(|&j| row[j] >= m - slack).collect()
}

fn criterion_conversions() -> Outcome {
    let mut r = rng(88);
    let (mut e_ffn, mut e_ln, mut e_rms, mut e_wrap) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let (d, h, n) = (r.random_range(2..12), r.random_range(1..16), r.random_range(1..10));
        let ffn = FfnWeights {
            norm: NormKind::Rms,
            w1: rand_matrix(&mut r, h, d),
            w2: rand_matrix(&mut r, d, h),
            gamma: rand_vec(&mut r, h, -2.0, 2.0),
            beta: rand_vec(&mut r, h, -2.0, 2.0),
        };
        let x: Vec<Vec<f64>> = (0..n).map(|_| rand_vec(&mut r, d, -3.0, 3.0)).collect();
        e_ffn = e_ffn.max(rel_diff(
            &ffn_forward(&ffn, &x).unwrap(),
            &ffn_forward(&rmsln_ffn_to_ln_ffn(&ffn).unwrap(), &x).unwrap(),
        ));
        let dqk = r.random_range(1..8);
        let mk = |r: &mut ChaCha8Rng, kind| AttentionWeights {
            mode: AttnMode::Softmax,
            wq: rand_matrix(r, dqk, d),
            wk: rand_matrix(r, dqk, d),
            wv: rand_matrix(r, d, d),
            qk_norm: Some(QkNorm {
                kind,
                gamma_q: rand_vec(r, dqk, -2.0, 2.0),
                beta_q: rand_vec(r, dqk, -2.0, 2.0),
                gamma_k: rand_vec(r, dqk, -2.0, 2.0),
                beta_k: rand_vec(r, dqk, -2.0, 2.0),
            }),
        };
        let ln = mk(&mut r, NormKind::Layer);
        e_ln = e_ln.max(rel_diff(
            &attention_scores(&ln, &x).unwrap(),
            &attention_scores(&qkln_to_qkrmsln(&ln).unwrap(), &x).unwrap(),
        ));
        let rms = mk(&mut r, NormKind::Rms);
        e_rms = e_rms.max(rel_diff(
            &attention_scores(&rms, &x).unwrap(),
            &attention_scores(&qkrmsln_to_qkln(&rms).unwrap(), &x).unwrap(),
        ));
    }
    let mut swap_bad = 0;
    let mut qsign_bad = 0;
    let mut swapped = 0;
    let mut argmax_bad = 0;
    for k in [1usize, 2, 4] {
        for attn in POLICIES {
            let net = build_rec(k, &params(k, 12, attn));
            let conv = wrap_selection_layers(&ln_ffn_network(&net).unwrap()).unwrap();
            let qch = net.channel("q").unwrap()[0];
            let bodies = if k <= 2 {
                enumerate_bodies(k, 6)
            } else {
                (0..300).map(|_| common::random_dyck_body(k, 2 * r.random_range(0..5), &mut r)).collect()
            };
            let seqs: Vec<TokenSequence> = bodies.iter().map(|b| TokenSequence::framed(b)).collect();
            let res = Exec::Parallel.map(&seqs, |s| {
                let a = net.recognize(s).unwrap().accept;
                let b = conv.recognize(s).unwrap().accept;
                let xa = net.forward(s).unwrap();
                let xb = conv.forward(s).unwrap();
                let qs = xa.iter().zip(&xb).filter(|(u, v)| (u[qch] > 0.0) != (v[qch] > 0.0)).count();
                let mut w: f64 = 0.0;
                let mut argmax_changed = 0;
                let ta = model_trace(&net.model, s).unwrap();
                for sel in &net.meta.selection {
                    let input = &ta[2 * sel.block];
                    let orig = attention_scores(&net.model.blocks[sel.block].attention, input).unwrap();
                    let wrapped = qk_fixed_norm_wrap(&net.model.blocks[sel.block].attention, Some(&sel.spec)).unwrap();
                    let new = attention_scores(&wrapped, input).unwrap();
                    let fixed_norm = !sel
                        .spec
                        .terms
                        .iter()
                        .any(|t| matches!(t.k, Feature::Free { .. }) || matches!(t.q, Feature::Free { .. }));
                    for (i, (ro, rn)) in orig.iter().zip(&new).enumerate() {
                        if fixed_norm && s.tokens()[i] != Token::Eos {
                            w = w.max(rel_diff(std::slice::from_ref(ro), std::slice::from_ref(rn)));
                        }
                        if argmax_set(ro) != argmax_set(rn) {
                            argmax_changed += 1;
                        }
                    }
                }
                (a != b, qs, w, argmax_changed)
            });
            swapped += seqs.len();
            for (v, q, w, am) in res {
                swap_bad += v as usize;
                argmax_bad += am;
                qsign_bad += q;
                e_wrap = e_wrap.max(w);
            }
        }
    }
    let tol = 1e-12;
    let ok = e_ffn <= tol
        && e_ln <= tol
        && e_rms <= tol
        && e_wrap <= tol
        && argmax_bad == 0
        && swap_bad == 0
        && qsign_bad == 0;
    let msg = format!(
        "RMS→LN FFN {e_ffn:.2e}, QK-LN→RMS {e_ln:.2e}, QK-RMS→LN {e_rms:.2e}, fixed-norm wrap {e_wrap:.2e} on norm-fixed rows (relative, tol {tol:e}); \
         {argmax_bad} wrapped score rows with a changed argmax set; \
         swapped networks: {swap_bad} verdict changes and {qsign_bad} q-sign changes over {swapped} inputs"
    );
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_recov() -> Outcome {
    let eps = 1.0 / 32.0;
    let mut bad = 0;
    let steps = 20_000;
    for (lo, hi, want) in [(-0.4, 0.4, 0.0), (0.5, 1.2, 1.0), (4.0 / 3.0, 2.0, 2.0)] {
        for i in 0..=steps {
            let y = lo + (hi - lo) * i as f64 / steps as f64;
            if recov(y, eps).unwrap() != want {
                bad += 1;
            }
        }
    }
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for k in [2usize, 8] {
        for attn in POLICIES {
            let p = params(k, 64, attn);
            let gp = DyckGenParams::uniform(k, 0.5, 0.9).unwrap();
            let nets = [build_rec(k, &p), build_dyck_generator(k, &gp, &p).unwrap()];
            for net in &nets {
                for _ in 0..50 {
                    let body = common::random_dyck_body(k, 2 * r.random_range(0..30), &mut r);
                    let mut s = TokenSequence::framed(&body);
                    if r.random_bool(0.5) {
                        s = corrupt_once(&s, k, &mut r);
                    }
                    if !net.task.is_recognizer() {
                        s = TokenSequence::with_bos(&s.iter().copied().filter(|t| t.is_bracket()).collect::<Vec<_>>());
                    }
                    let x = net.forward(&s).unwrap();
                    let toks = s.tokens();
                    for (i, v) in x.iter().enumerate() {
                        let d = common::depth_of(&toks[..=i]) as f64;
                        let mut checks = vec![
                            ("cos_phi", phi(i as f64, p.a).cos()),
                            ("sin_phi", phi(i as f64, p.a).sin()),
                            ("cos_theta", theta(d, p.a).cos()),
                            ("sin_theta", theta(d, p.a).sin()),
                        ];
                        if net.task.is_recognizer() {
                            checks.push(("cos_theta1", theta(d + 1.0, p.a).cos()));
                            checks.push(("sin_theta1", theta(d + 1.0, p.a).sin()));
                        }
                        for (name, want) in checks {
                            worst = worst.max((v[net.channel(name).unwrap()[0]] - want).abs());
                        }
                    }
                }
            }
        }
    }
    let ok = bad == 0 && worst <= 1e-9;
    let msg = format!(
        "{bad} off-plateau values over {} grid points; positional/depth channels max error {worst:.2e} (tol 1e-9)",
        3 * (steps + 1)
    );
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_prop2() -> Outcome {
    let k = 2;
    let bodies = enumerate_bodies(k, 6);
    let mut bad_dich = 0;
    let mut bad_bound = 0;
    let mut members = 0;
    let cases = [
        (DyckGenParams::uniform(k, 0.5, 0.9).unwrap(), true),
        (DyckGenParams::new(0.3, 0.8, vec![0.7, 0.3]).unwrap(), true),
        (DyckGenParams::new(0.6, 0.3, vec![0.5, 0.5]).unwrap(), false),
    ];
    for (dp, paper_form_applies) in &cases {
        let gp = GenParams::Dyck(dp.clone());
        for b in &bodies {
            let f = TokenSequence::framed(b);
            let lp = process_log_probability(&f, &gp);
            let member = common::stack_member(&f, k);
            if lp.is_finite() != member {
                bad_dich += 1;
            }
            if member {
                members += 1;
                let eps = if *paper_form_applies { epsilon_n(dp, b.len()) } else { epsilon_n_corrected(dp, b.len()) };
                if lp < eps.ln() {
                    bad_bound += 1;
                }
            }
        }
    }
    let sp = GenParams::Shuffle(ShuffleGenParams::uniform(k, 0.5, 0.9).unwrap());
    for b in &bodies {
        let f = TokenSequence::framed(b);
        if process_log_probability(&f, &sp).is_finite() != common::counter_member(&f, k) {
            bad_dich += 1;
        }
    }
    let ok = bad_dich == 0 && bad_bound == 0;
    let msg = format!(
        "{bad_dich} dichotomy violations over {} sequences; {bad_bound} of {members} members below log ε_n",
        bodies.len() * 4
    );
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    println!("acceptance suite");
    let mut all = true;
    let mut margins = Vec::new();
    let only = std::env::var("ACCEPTANCE_ONLY").ok();
    if only.as_deref().is_none_or(|o| "recognition exactness member margin".contains(o)) {
        let t = Instant::now();
        let out = criterion_recognition(&mut margins);
        all &= report("recognition exactness", t.elapsed(), &out);
        let t = Instant::now();
        let out = criterion_margin(&margins);
        all &= report("member margin", t.elapsed(), &out);
    }
    let list: [(&str, fn() -> Outcome); 8] = [
        ("generation TV bound", criterion_dyck_tv),
        ("shuffle recognition", criterion_shuffle_rec),
        ("shuffle generation", criterion_shuffle_tv),
        ("pseudo-BOS", criterion_pseudo_bos),
        ("BOS-free variants", criterion_nobos),
        ("conversions", criterion_conversions),
        ("recovering function", criterion_recov),
        ("membership dichotomy", criterion_prop2),
    ];
    for (name, f) in list {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        let t = Instant::now();
        let out = f();
        all &= report(name, t.elapsed(), &out);
    }
    if !all {
        std::process::exit(1);
    }
}
