//! Independent oracles and generators shared by the integration tests and
//! the acceptance target. Nothing here calls into `lang_core` oracles.
#![allow(dead_code)]

use std::collections::BTreeSet;

use dyckformer::lang_core::{Token, TokenSequence};
use rand::Rng;

/// Stack-machine membership for framed `BOS · body · EOS` inputs.
pub fn stack_member(seq: &TokenSequence, k: usize) -> bool {
    let t = seq.tokens();
    if t.len() < 2 || t[0] != Token::Bos || t[t.len() - 1] != Token::Eos {
        return false;
    }
    stack_body(&t[1..t.len() - 1], k)
}

/// Membership of a bare body in `Dyck_k`.
pub fn stack_body(body: &[Token], k: usize) -> bool {
    let mut stack = Vec::new();
    for &tok in body {
        match tok {
            Token::Open(a) if (1..=k).contains(&a) => stack.push(a),
            Token::Close(a) if (1..=k).contains(&a) => {
                if stack.pop() != Some(a) {
                    return false;
                }
            }
            _ => return false,
        }
    }
    stack.is_empty()
}

/// Per-type counter membership for framed inputs.
pub fn counter_member(seq: &TokenSequence, k: usize) -> bool {
    let t = seq.tokens();
    if t.len() < 2 || t[0] != Token::Bos || t[t.len() - 1] != Token::Eos {
        return false;
    }
    let mut c = vec![0i64; k + 1];
    for &tok in &t[1..t.len() - 1] {
        match tok {
            Token::Open(a) if (1..=k).contains(&a) => c[a] += 1,
            Token::Close(a) if (1..=k).contains(&a) => {
                c[a] -= 1;
                if c[a] < 0 {
                    return false;
                }
            }
            _ => return false,
        }
    }
    c.iter().all(|&v| v == 0)
}

/// Every `Dyck_k` word of exactly `n` brackets, from `S → ε | (ₜ S )ₜ S`.
pub fn grammar_words(k: usize, n: usize) -> Vec<Vec<Token>> {
    if n % 2 == 1 {
        return vec![];
    }
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for inner in (0..n - 1).step_by(2) {
        let rest = n - 2 - inner;
        let ins = grammar_words(k, inner);
        let rs = grammar_words(k, rest);
        for t in 1..=k {
            for a in &ins {
                for b in &rs {
                    let mut w = vec![Token::Open(t)];
                    w.extend_from_slice(a);
                    w.push(Token::Close(t));
                    w.extend_from_slice(b);
                    out.push(w);
                }
            }
        }
    }
    out
}

fn interleavings(a: &[Token], b: &[Token], acc: &mut Vec<Token>, out: &mut BTreeSet<Vec<Token>>) {
    if a.is_empty() && b.is_empty() {
        out.insert(acc.clone());
        return;
    }
    if let Some((&h, t)) = a.split_first() {
        acc.push(h);
        interleavings(t, b, acc, out);
        acc.pop();
    }
    if let Some((&h, t)) = b.split_first() {
        acc.push(h);
        interleavings(a, t, acc, out);
        acc.pop();
    }
}

/// `Shuffle-Dyck_2` words of length ≤ `max_len`, built as the shuffle of a
/// type-1 `Dyck_1` word with a type-2 `Dyck_1` word.
pub fn shuffle2_by_enumeration(max_len: usize) -> BTreeSet<Vec<Token>> {
    let retype = |w: &[Token], t: usize| -> Vec<Token> {
        w.iter().map(|x| if matches!(x, Token::Open(_)) { Token::Open(t) } else { Token::Close(t) }).collect()
    };
    let mut out = BTreeSet::new();
    for n1 in (0..=max_len).step_by(2) {
        for n2 in (0..=max_len - n1).step_by(2) {
            for u in grammar_words(1, n1) {
                for v in grammar_words(1, n2) {
                    interleavings(&retype(&u, 1), &retype(&v, 2), &mut Vec::new(), &mut out);
                }
            }
        }
    }
    out
}

/// A uniformly shaped random `Dyck_k` body of exactly `n` brackets (`n` even).
pub fn random_dyck_body<R: Rng>(k: usize, n: usize, rng: &mut R) -> Vec<Token> {
    let mut stack: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let remaining = n - i;
        let open = if stack.is_empty() {
            true
        } else if stack.len() == remaining {
            false
        } else {
            rng.random_bool(0.5)
        };
        if open {
            let t = rng.random_range(1..=k);
            stack.push(t);
            out.push(Token::Open(t));
        } else {
            out.push(Token::Close(stack.pop().unwrap()));
        }
    }
    out
}

/// Depth of a bracket prefix: opens minus closes.
pub fn depth_of(toks: &[Token]) -> i64 {
    toks.iter()
        .map(|t| match t {
            Token::Open(_) => 1,
            Token::Close(_) => -1,
            _ => 0,
        })
        .sum()
}

/// Next-token distribution of the Dyck process written out directly from
/// its definition: vocabulary order `open_1..open_k, close_1..close_k, BOS, EOS`.
pub fn dyck_process_next(prefix: &[Token], k: usize, q: f64, r: f64, pi: &[f64]) -> Vec<f64> {
    let mut stack = Vec::new();
    for &t in prefix {
        match t {
            Token::Open(a) => stack.push(a),
            Token::Close(_) => {
                stack.pop();
            }
            _ => {}
        }
    }
    let mut p = vec![0.0; 2 * k + 2];
    match stack.last() {
        None => {
            for t in 0..k {
                p[t] = r * pi[t];
            }
            p[2 * k + 1] = 1.0 - r;
        }
        Some(&top) => {
            for t in 0..k {
                p[t] = q * pi[t];
            }
            p[k + top - 1] = 1.0 - q;
        }
    }
    p
}

/// Next-token distribution of the Shuffle-Dyck process from its definition.
pub fn shuffle_process_next(prefix: &[Token], k: usize, q: f64, r: f64, pi: &[f64], pibar: &[f64]) -> Vec<f64> {
    let mut c = vec![0i64; k];
    for &t in prefix {
        match t {
            Token::Open(a) => c[a - 1] += 1,
            Token::Close(a) => c[a - 1] -= 1,
            _ => {}
        }
    }
    let mut p = vec![0.0; 2 * k + 2];
    if c.iter().all(|&v| v == 0) {
        for t in 0..k {
            p[t] = r * pi[t];
        }
        p[2 * k + 1] = 1.0 - r;
        return p;
    }
    let mut z = 0.0;
    for t in 0..k {
        p[t] = q * pi[t];
        z += p[t];
        if c[t] > 0 {
            p[k + t] = (1.0 - q) * pibar[t];
            z += p[k + t];
        }
    }
    p.iter().map(|v| v / z).collect()
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
