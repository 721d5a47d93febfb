//! `verify --suite all`: invariant checks against brute-force references,
//! sized by `--k` and `--n-max`. Each check prints one line.

use std::time::Instant;

use dyckformer::constructions::{
    build_dyck_generator, build_dyck_recognizer, build_dyck_recognizer_nobos, build_shuffle_generator,
    build_shuffle_recognizer, first_two_distinct, phi, recov, select_constants_with, theta, AttnPolicy, BuiltNetwork,
    ConstructionParams,
};
use dyckformer::conversions::{ln_ffn_network, wrap_selection_layers};
use dyckformer::evalkit::{enumerate_bodies, negatives_from, split_seed, tv_distance};
use dyckformer::lang_core::{
    is_dyck_member, is_shuffle_member, process_log_probability, sample_sequence, DyckGenParams, GenParams,
    ShuffleGenParams, Token, TokenSequence,
};
use dyckformer::Exec;

const POLICIES: [AttnPolicy; 3] = [AttnPolicy::Hardmax, AttnPolicy::PerConstruction, AttnPolicy::Softmax];
const EXHAUSTIVE_LEN: usize = 6;
const SAMPLES: usize = 100;

type Check = Result<String, String>;

struct Ctx {
    k: usize,
    n_max: usize,
    seed: u64,
    exec: Exec,
}

impl Ctx {
    fn params(&self, attn: AttnPolicy) -> ConstructionParams {
        select_constants_with(self.k, self.n_max + 1, 0.8, attn).0
    }

    fn bodies(&self) -> Vec<Vec<Token>> {
        enumerate_bodies(self.k, EXHAUSTIVE_LEN.min(self.n_max))
    }

    /// Framed samples from a process, with at most `n_max` brackets.
    fn samples(&self, gp: &GenParams, salt: u64) -> Vec<TokenSequence> {
        (0..SAMPLES).map(|i| sample_sequence(gp, split_seed(self.seed ^ salt, i), self.n_max).tokens).collect()
    }
}

fn stack_member(seq: &TokenSequence) -> bool {
    let toks = seq.tokens();
    if toks.len() < 2 || toks[0] != Token::Bos || toks[toks.len() - 1] != Token::Eos {
        return false;
    }
    let mut stack = Vec::new();
    for &t in &toks[1..toks.len() - 1] {
        match t {
            Token::Open(a) => stack.push(a),
            Token::Close(a) if stack.pop() == Some(a) => {}
            _ => return false,
        }
    }
    stack.is_empty()
}

/// Every type's projection is a balanced one-type word.
fn projection_member(seq: &TokenSequence, k: usize) -> bool {
    let toks = seq.tokens();
    if toks.len() < 2 || toks[0] != Token::Bos || toks[toks.len() - 1] != Token::Eos {
        return false;
    }
    let body = &toks[1..toks.len() - 1];
    if body.iter().any(|t| !t.is_bracket()) {
        return false;
    }
    (1..=k).all(|a| {
        let mut h = 0i64;
        for t in body {
            match t {
                Token::Open(b) if *b == a => h += 1,
                Token::Close(b) if *b == a => h -= 1,
                _ => {}
            }
            if h < 0 {
                return false;
            }
        }
        h == 0
    })
}

fn framed_all(bodies: &[Vec<Token>]) -> Vec<TokenSequence> {
    bodies.iter().map(|b| TokenSequence::framed(b)).collect()
}

fn brackets_of(seq: &TokenSequence) -> Vec<Token> {
    seq.iter().copied().filter(|t| t.is_bracket()).collect()
}

fn outcome(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn check_oracles(c: &Ctx) -> Check {
    let seqs = framed_all(&c.bodies());
    let dyck_bad = seqs.iter().filter(|s| is_dyck_member(s) != stack_member(s)).count();
    let shuf_bad = seqs.iter().filter(|s| is_shuffle_member(s) != projection_member(s, c.k)).count();
    outcome(
        dyck_bad + shuf_bad == 0,
        format!(
            "{} bodies: {dyck_bad} Dyck and {shuf_bad} shuffle disagreements with stack/projection references",
            seqs.len()
        ),
    )
}

fn recognition_sweep(
    c: &Ctx,
    seqs: &[TokenSequence],
    truth: impl Fn(&TokenSequence) -> bool,
    build: impl Fn(&ConstructionParams) -> BuiltNetwork,
) -> (usize, usize) {
    let labels: Vec<bool> = seqs.iter().map(&truth).collect();
    let mut errors = 0;
    let mut mismatches = 0;
    let mut reference: Option<Vec<bool>> = None;
    for attn in POLICIES {
        let built = build(&c.params(attn));
        let net = built.compile();
        let got: Vec<bool> = c.exec.map(seqs, |s| net.recognize(s).map(|v| v.accept).unwrap_or(false));
        errors += got.iter().zip(&labels).filter(|(a, b)| a != b).count();
        match &reference {
            None => reference = Some(got),
            Some(h) => mismatches += got.iter().zip(h).filter(|(a, b)| a != b).count(),
        }
    }
    (errors, mismatches)
}

fn with_random(c: &Ctx, mut seqs: Vec<TokenSequence>, gp: &GenParams, salt: u64) -> Vec<TokenSequence> {
    let members = c.samples(gp, salt);
    seqs.extend(negatives_from(&members, c.k, c.seed ^ salt));
    seqs.extend(members);
    seqs
}

fn check_dyck_recognition(c: &Ctx) -> Check {
    let gp = GenParams::Dyck(DyckGenParams::uniform(c.k, 0.5, 0.9).map_err(|e| e.to_string())?);
    let seqs = with_random(c, framed_all(&c.bodies()), &gp, 0x11);
    let (err, mis) =
        recognition_sweep(c, &seqs, stack_member, |p| build_dyck_recognizer(c.k, p).expect("recognizer builds"));
    outcome(err + mis == 0, format!("{} inputs x 3 policies: {err} errors, {mis} policy mismatches", seqs.len()))
}

fn check_shuffle_recognition(c: &Ctx) -> Check {
    let gp = GenParams::Shuffle(ShuffleGenParams::uniform(c.k, 0.5, 0.9).map_err(|e| e.to_string())?);
    let seqs = with_random(c, framed_all(&c.bodies()), &gp, 0x22);
    let k = c.k;
    let (err, mis) = recognition_sweep(
        c,
        &seqs,
        |s| projection_member(s, k),
        |p| build_shuffle_recognizer(k, p).expect("recognizer builds"),
    );
    outcome(err + mis == 0, format!("{} inputs x 3 policies: {err} errors, {mis} policy mismatches", seqs.len()))
}

fn check_nobos_recognition(c: &Ctx) -> Check {
    let seqs: Vec<TokenSequence> = c
        .bodies()
        .iter()
        .filter(|b| first_two_distinct(&TokenSequence::new(b.to_vec())))
        .map(|b| {
            let mut v = b.clone();
            v.push(Token::Eos);
            TokenSequence::new(v)
        })
        .collect();
    let truth = |s: &TokenSequence| stack_member(&TokenSequence::framed(&brackets_of(s)));
    let (err, mis) =
        recognition_sweep(c, &seqs, truth, |p| build_dyck_recognizer_nobos(c.k, p).expect("recognizer builds"));
    outcome(
        err + mis == 0,
        format!("{} first-two-distinct inputs x 3 policies: {err} errors, {mis} policy mismatches", seqs.len()),
    )
}

fn depth(toks: &[Token]) -> f64 {
    toks.iter().map(|t| t.openness()).sum::<i64>() as f64
}

fn check_channels(c: &Ctx) -> Check {
    let gp = GenParams::Dyck(DyckGenParams::uniform(c.k, 0.5, 0.9).map_err(|e| e.to_string())?);
    let seqs = c.samples(&gp, 0x33);
    let mut worst: f64 = 0.0;
    for attn in POLICIES {
        let p = c.params(attn);
        let net = build_dyck_recognizer(c.k, &p).map_err(|e| e.to_string())?;
        let chan = |n: &str| net.channel(n).map(|v| v[0]).ok_or_else(|| format!("missing channel {n}"));
        let idx = [chan("cos_phi")?, chan("sin_phi")?, chan("cos_theta")?, chan("sin_theta")?];
        let per = c.exec.map(&seqs, |s| {
            let x = net.forward(s).expect("forward runs");
            let toks = s.tokens();
            let mut w: f64 = 0.0;
            for (i, v) in x.iter().enumerate() {
                let d = depth(&toks[..=i]);
                let want =
                    [phi(i as f64, p.a).cos(), phi(i as f64, p.a).sin(), theta(d, p.a).cos(), theta(d, p.a).sin()];
                for (j, w_) in idx.iter().zip(want) {
                    w = w.max((v[*j] - w_).abs());
                }
            }
            w
        });
        worst = per.into_iter().fold(worst, f64::max);
    }
    outcome(worst <= 1e-9, format!("positional/depth channels max error {worst:.2e} (tol 1e-9)"))
}

fn max_tv(c: &Ctx, net: &BuiltNetwork, gp: &GenParams, seqs: &[TokenSequence]) -> Result<f64, String> {
    let net = net.compile();
    let per = c.exec.map(seqs, |s| -> Result<f64, String> {
        let br = brackets_of(s);
        let d = net.next_distributions(&TokenSequence::with_bos(&br)).map_err(|e| e.to_string())?;
        let mut w: f64 = 0.0;
        for (i, di) in d.iter().enumerate() {
            let want = gp.next_distribution(&TokenSequence::with_bos(&br[..i])).map_err(|e| e.to_string())?;
            w = w.max(tv_distance(di, &want).map_err(|e| e.to_string())?);
        }
        Ok(w)
    });
    per.into_iter().try_fold(0.0f64, |a, w| Ok(a.max(w?)))
}

fn check_generation(c: &Ctx) -> Check {
    let dp = DyckGenParams::uniform(c.k, 0.5, 0.9).map_err(|e| e.to_string())?;
    let sp = ShuffleGenParams::uniform(c.k, 0.5, 0.9).map_err(|e| e.to_string())?;
    let (dg, sg) = (GenParams::Dyck(dp.clone()), GenParams::Shuffle(sp.clone()));
    let (ds, ss) = (c.samples(&dg, 0x44), c.samples(&sg, 0x55));
    let mut lines = Vec::new();
    let mut ok = true;
    for attn in POLICIES {
        let p = c.params(attn);
        let dyck_bound = 2.0 * (c.k as f64 + 1.0) * (-p.c0_gen).exp();
        let dn = build_dyck_generator(c.k, &dp, &p).map_err(|e| e.to_string())?;
        let sn = build_shuffle_generator(c.k, &sp, &p).map_err(|e| e.to_string())?;
        let (dt, st) = (max_tv(c, &dn, &dg, &ds)?, max_tv(c, &sn, &sg, &ss)?);
        ok &= dt <= dyck_bound && st <= 1e-3;
        lines.push(format!("{}: Dyck {dt:.2e} (bound {dyck_bound:.2e}), shuffle {st:.2e} (tol 1e-3)", attn.name()));
    }
    outcome(ok, format!("max TV: {}", lines.join("; ")))
}

fn check_pseudo_bos(c: &Ctx) -> Check {
    let net = build_dyck_recognizer_nobos(c.k, &c.params(AttnPolicy::Hardmax)).map_err(|e| e.to_string())?;
    let ch = net.channel("s_hat").map(|v| v[0]).ok_or("missing s_hat channel")?;
    let seqs: Vec<TokenSequence> =
        c.bodies().into_iter().map(TokenSequence::new).filter(|s| !s.is_empty() && first_two_distinct(s)).collect();
    let bad: usize = c
        .exec
        .map(&seqs, |s| {
            let x = net.forward(s).expect("forward runs");
            x.iter().enumerate().filter(|(i, v)| v[ch] != if *i == 0 { 1.0 } else { 0.0 }).count()
        })
        .into_iter()
        .sum();
    outcome(bad == 0, format!("{} first-two-distinct inputs: {bad} positions with ŝ off its exact value", seqs.len()))
}

fn check_conversions(c: &Ctx) -> Check {
    let seqs = framed_all(&enumerate_bodies(c.k, 4.min(c.n_max)));
    let mut changed = 0;
    for attn in POLICIES {
        let net = build_dyck_recognizer(c.k, &c.params(attn)).map_err(|e| e.to_string())?;
        let conv = ln_ffn_network(&net).and_then(|n| wrap_selection_layers(&n)).map_err(|e| e.to_string())?;
        changed += c
            .exec
            .map(&seqs, |s| net.recognize(s).map(|v| v.accept).ok() != conv.recognize(s).map(|v| v.accept).ok())
            .into_iter()
            .filter(|&b| b)
            .count();
    }
    outcome(
        changed == 0,
        format!("LN-FFN + fixed-norm wrap: {changed} verdict changes over {} inputs x 3 policies", seqs.len()),
    )
}

fn check_recov(_: &Ctx) -> Check {
    let eps = 1.0 / 32.0;
    let steps = 2000;
    let mut bad = 0;
    for (lo, hi, want) in [(-0.4, 0.4, 0.0), (0.5, 1.2, 1.0), (4.0 / 3.0, 2.0, 2.0)] {
        for i in 0..=steps {
            let y = lo + (hi - lo) * i as f64 / steps as f64;
            if recov(y, eps).map_err(|e| e.to_string())? != want {
                bad += 1;
            }
        }
    }
    outcome(bad == 0, format!("{bad} off-plateau values over {} grid points", 3 * (steps + 1)))
}

fn check_dichotomy(c: &Ctx) -> Check {
    let seqs = framed_all(&c.bodies());
    let dg = GenParams::Dyck(DyckGenParams::uniform(c.k, 0.5, 0.9).map_err(|e| e.to_string())?);
    let sg = GenParams::Shuffle(ShuffleGenParams::uniform(c.k, 0.5, 0.9).map_err(|e| e.to_string())?);
    let bad = seqs
        .iter()
        .filter(|s| {
            process_log_probability(s, &dg).is_finite() != stack_member(s)
                || process_log_probability(s, &sg).is_finite() != projection_member(s, c.k)
        })
        .count();
    outcome(bad == 0, format!("{bad} finite-probability/membership disagreements over {} inputs", seqs.len()))
}

/// Runs every check and reports whether all passed.
pub fn run_all(k: usize, n_max: usize, seed: u64, exec: Exec) -> bool {
    let c = Ctx { k, n_max, seed, exec };
    let checks: [(&str, fn(&Ctx) -> Check); 10] = [
        ("oracles", check_oracles),
        ("dyck recognition", check_dyck_recognition),
        ("shuffle recognition", check_shuffle_recognition),
        ("BOS-free recognition", check_nobos_recognition),
        ("channels", check_channels),
        ("generation", check_generation),
        ("pseudo-BOS", check_pseudo_bos),
        ("conversions", check_conversions),
        ("recovering function", check_recov),
        ("membership dichotomy", check_dichotomy),
    ];
    println!("verify: k = {k}, n_max = {n_max}, seed = {seed}");
    let mut all = true;
    for (name, f) in checks {
        let t = Instant::now();
        let (tag, msg) = match f(&c) {
            Ok(m) => ("ok  ", m),
            Err(m) => {
                all = false;
                ("FAIL", m)
            }
        };
        println!("{tag} {name}: {msg} [{:.2}s]", t.elapsed().as_secs_f64());
    }
    println!("{}", if all { "all checks passed" } else { "some checks failed" });
    all
}
