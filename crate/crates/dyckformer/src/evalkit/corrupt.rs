//! Negative examples: single-token corruptions of members, malformed
//! framings, and exhaustive enumeration of short bodies.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lang_core::{Alphabet, Token, TokenSequence};

/// All bracket strings over `k` types of length `0..=max_len`.
pub fn enumerate_bodies(k: usize, max_len: usize) -> Vec<Vec<Token>> {
    let brackets = Alphabet::new(k).expect("k ≥ 1").brackets();
    let mut out = vec![vec![]];
    let mut layer: Vec<Vec<Token>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(layer.len() * brackets.len());
        for s in &layer {
            for &b in &brackets {
                let mut t = s.clone();
                t.push(b);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

fn random_bracket<R: Rng>(k: usize, rng: &mut R) -> Token {
    let t = rng.random_range(1..=k);
    if rng.random_bool(0.5) {
        Token::Open(t)
    } else {
        Token::Close(t)
    }
}

/// One corruption of the body of a framed member: change a type, flip
/// open/close, delete a bracket, or insert a bracket.
pub fn corrupt_once<R: Rng>(seq: &TokenSequence, k: usize, rng: &mut R) -> TokenSequence {
    let mut body: Vec<Token> = seq.iter().copied().filter(|t| t.is_bracket()).collect();
    let kinds = if body.is_empty() { 1 } else { 4 };
    let choice = if kinds == 1 { 3 } else { rng.random_range(0..4) };
    match choice {
        0 if k > 1 => {
            let i = rng.random_range(0..body.len());
            let t = body[i].bracket_type().expect("bracket");
            let mut u = rng.random_range(1..k);
            if u >= t {
                u += 1;
            }
            body[i] = if body[i].openness() > 0 { Token::Open(u) } else { Token::Close(u) };
        }
        0 | 1 => {
            let i = rng.random_range(0..body.len());
            let t = body[i].bracket_type().expect("bracket");
            body[i] = if body[i].openness() > 0 { Token::Close(t) } else { Token::Open(t) };
        }
        2 => {
            let i = rng.random_range(0..body.len());
            body.remove(i);
        }
        _ => {
            let i = rng.random_range(0..=body.len());
            body.insert(i, random_bracket(k, rng));
        }
    }
    TokenSequence::framed(&body)
}

/// One corruption per member, seeded per index.
pub fn negatives_from(members: &[TokenSequence], k: usize, seed: u64) -> Vec<TokenSequence> {
    members
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut rng = ChaCha8Rng::seed_from_u64(super::split_seed(seed, i));
            corrupt_once(m, k, &mut rng)
        })
        .collect()
}

/// Framing violations of a body: missing BOS, missing EOS, doubled BOS,
/// doubled EOS, BOS or EOS inside the body, and an empty sequence.
pub fn malformed_framings(body: &[Token]) -> Vec<TokenSequence> {
    let mut out = Vec::new();
    let mut no_bos = body.to_vec();
    no_bos.push(Token::Eos);
    out.push(TokenSequence::new(no_bos));
    out.push(TokenSequence::with_bos(body));
    let mut dbl = vec![Token::Bos, Token::Bos];
    dbl.extend_from_slice(body);
    dbl.push(Token::Eos);
    out.push(TokenSequence::new(dbl));
    let mut dbl_eos = TokenSequence::framed(body);
    dbl_eos.push(Token::Eos);
    out.push(dbl_eos);
    let mid = body.len() / 2;
    for extra in [Token::Bos, Token::Eos] {
        let mut v = vec![Token::Bos];
        v.extend_from_slice(&body[..mid]);
        v.push(extra);
        v.extend_from_slice(&body[mid..]);
        v.push(Token::Eos);
        out.push(TokenSequence::new(v));
    }
    out
}
