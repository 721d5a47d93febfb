mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dyckformer::constructions::{build_task, select_constants_with, AttnPolicy, Task};
use dyckformer::conversions::{ln_ffn_network, wrap_selection_layers};
use dyckformer::evalkit::{
    acc_closed, compiled_predictions, generate_dataset, max_tv_over_prefixes, negatives_from, recognition_accuracy,
    Aligned, DatasetKind, DatasetRecord, EvalError, MetricsReport, Split, SplitSpec,
};
use dyckformer::io::{load_dataset, load_weights, save_dataset, save_metrics, save_weights, WeightFile};
use dyckformer::lang_core::{is_member, DyckGenParams, GenParams, Lang, ShuffleGenParams, Token, TokenSequence};
use dyckformer::transformer_core::{next_token_distributions, Head};
use dyckformer::Exec;
use serde_json::json;

/// Hand-built Transformers for Dyck and Shuffle-Dyck languages.
#[derive(Parser, Debug)]
#[command(name = "dyckformer", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample a JSONL dataset from a generation process.
    GenData(GenDataArgs),
    /// Compile a network and write its weight file.
    Build(BuildArgs),
    /// Evaluate a weight file on a dataset and write metrics JSON.
    Eval(EvalArgs),
    /// Run the invariant suite; exit status 1 on any failure.
    Verify(VerifyArgs),
    /// Rewrite a weight file into layer-normalized FFNs with fixed-norm QK normalization.
    Convert(ConvertArgs),
    /// Print weight-file metadata and the channel map.
    Info(InfoArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LangArg {
    Dyck,
    Shuffle,
}

impl From<LangArg> for Lang {
    fn from(l: LangArg) -> Lang {
        match l {
            LangArg::Dyck => Lang::Dyck,
            LangArg::Shuffle => Lang::Shuffle,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    DyckRec,
    DyckGen,
    ShuffleRec,
    ShuffleGen,
    DyckRecNobos,
    DyckGenNobos,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::DyckRec => Task::DyckRec,
            TaskArg::DyckGen => Task::DyckGen,
            TaskArg::ShuffleRec => Task::ShuffleRec,
            TaskArg::ShuffleGen => Task::ShuffleGen,
            TaskArg::DyckRecNobos => Task::DyckRecNobos,
            TaskArg::DyckGenNobos => Task::DyckGenNobos,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AttnArg {
    Softmax,
    Hardmax,
    PerConstruction,
}

impl From<AttnArg> for AttnPolicy {
    fn from(a: AttnArg) -> AttnPolicy {
        match a {
            AttnArg::Softmax => AttnPolicy::Softmax,
            AttnArg::Hardmax => AttnPolicy::Hardmax,
            AttnArg::PerConstruction => AttnPolicy::PerConstruction,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Tv,
    AccClosed,
    Recognition,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Train,
    Test,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    All,
}

/// Process parameters shared by `gen-data`, `build` and `eval`.
#[derive(Args, Debug, Clone)]
struct ProcessArgs {
    /// Continuation probability inside a bracket.
    #[arg(long)]
    q: Option<f64>,
    /// Continuation probability at depth zero.
    #[arg(long)]
    r: Option<f64>,
    /// JSON file with `[π_1, …, π_k]` or `{"pi": [...], "pibar": [...]}`; uniform when absent.
    #[arg(long = "pi")]
    pi: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    lang: LangArg,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    process: ProcessArgs,
    #[arg(long = "n-max")]
    n_max: usize,
    #[arg(long = "ood-factor", default_value_t = 1.2)]
    ood_factor: f64,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    /// `train` truncates at n_max; `test` runs to ood_factor·n_max.
    #[arg(long, value_enum, default_value_t = KindArg::Test)]
    kind: KindArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    process: ProcessArgs,
    /// Longest body the constants are validated for.
    #[arg(long = "n-max", default_value_t = 256)]
    n_max: usize,
    #[arg(long, value_enum, default_value_t = AttnArg::PerConstruction)]
    attn: AttnArg,
    /// Generator logit scale.
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    metric: MetricArg,
    /// ID/OOD cutoff; defaults to the longest in-distribution record.
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    #[arg(long = "ood-factor", default_value_t = 1.2)]
    ood_factor: f64,
    #[command(flatten)]
    process: ProcessArgs,
    /// Seed for corruption negatives (required by `--metric recognition`).
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    suite: SuiteArg,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long = "n-max", default_value_t = 64)]
    n_max: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InfoArgs {
    #[arg(long)]
    weights: PathBuf,
}

/// A failure attributable to the command line rather than to the work.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn exec_from_env() -> Result<Exec> {
    let Ok(v) = std::env::var("DYCKFORMER_THREADS") else { return Ok(Exec::Parallel) };
    let n: usize =
        v.trim().parse().map_err(|_| usage(format!("DYCKFORMER_THREADS={v:?} is not a positive integer")))?;
    if n == 0 {
        return Err(usage("DYCKFORMER_THREADS must be at least 1"));
    }
    if n == 1 {
        return Ok(Exec::Sequential);
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    Ok(Exec::Parallel)
}

fn read_pi(path: &Path, k: usize) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let vec_of = |x: &serde_json::Value| -> Result<Vec<f64>> {
        let arr = x.as_array().ok_or_else(|| usage("--pi must hold an array of numbers"))?;
        arr.iter().map(|e| e.as_f64().ok_or_else(|| usage("--pi entries must be numbers"))).collect()
    };
    let (pi, pibar) = match &v {
        serde_json::Value::Array(_) => (vec_of(&v)?, None),
        serde_json::Value::Object(o) => {
            let pi = o.get("pi").ok_or_else(|| usage("--pi object needs a \"pi\" array"))?;
            (vec_of(pi)?, o.get("pibar").map(vec_of).transpose()?)
        }
        _ => return Err(usage("--pi must be a JSON array or object")),
    };
    if pi.len() != k || pibar.as_ref().is_some_and(|p| p.len() != k) {
        return Err(usage(format!("--pi must have k = {k} entries")));
    }
    Ok((pi, pibar))
}

fn gen_params(lang: Lang, k: usize, p: &ProcessArgs) -> Result<GenParams> {
    let q = p.q.ok_or_else(|| usage("--q is required"))?;
    let r = p.r.ok_or_else(|| usage("--r is required"))?;
    let (pi, pibar) = match &p.pi {
        Some(path) => read_pi(path, k)?,
        None => (vec![1.0 / k as f64; k], None),
    };
    let gp = match lang {
        Lang::Dyck => DyckGenParams::new(q, r, pi).map(GenParams::Dyck),
        Lang::Shuffle => {
            let pibar = pibar.unwrap_or_else(|| vec![1.0 / k as f64; k]);
            ShuffleGenParams::new(q, r, pi, pibar).map(GenParams::Shuffle)
        }
    };
    gp.map_err(|e| usage(e.to_string()))
}

fn task_lang(task: Task) -> Lang {
    match task {
        Task::ShuffleRec | Task::ShuffleGen => Lang::Shuffle,
        _ => Lang::Dyck,
    }
}

fn cmd_gen_data(a: &GenDataArgs, exec: Exec) -> Result<()> {
    if a.k == 0 || a.count == 0 || a.n_max == 0 {
        return Err(usage("--k, --count and --n-max must be positive"));
    }
    let split = SplitSpec::new(a.n_max, a.ood_factor).map_err(|e| usage(e.to_string()))?;
    let gp = gen_params(a.lang.into(), a.k, &a.process)?;
    let kind = match a.kind {
        KindArg::Train => DatasetKind::Train,
        KindArg::Test => DatasetKind::Test,
    };
    let data = generate_dataset(&gp, a.count, split, kind, a.seed, exec);
    save_dataset(&a.out, &data)?;
    eprintln!("wrote {} records to {}", data.len(), a.out.display());
    Ok(())
}

fn cmd_build(a: &BuildArgs) -> Result<()> {
    let task: Task = a.task.into();
    if a.k == 0 || a.n_max == 0 {
        return Err(usage("--k and --n-max must be positive"));
    }
    let (mut params, _) = select_constants_with(a.k, a.n_max, 0.8, a.attn.into());
    if let Some(c0) = a.c0 {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(usage("--c0 must be a positive number"));
        }
        params.c0_gen = c0;
    }
    let gen = if task.is_recognizer() { None } else { Some(gen_params(task_lang(task), a.k, &a.process)?) };
    let net = build_task(task, a.k, &params, gen.as_ref())?;
    save_weights(&a.out, &WeightFile::from_network(&net))?;
    eprintln!(
        "wrote {} (d_model = {}, {} blocks) to {}",
        task,
        net.model.d_model,
        net.model.blocks.len(),
        a.out.display()
    );
    Ok(())
}

fn default_n_max(data: &[DatasetRecord]) -> Option<usize> {
    data.iter().filter(|r| r.split == Split::Id).map(|r| r.brackets()).max()
}

fn cmd_eval(a: &EvalArgs, exec: Exec) -> Result<()> {
    let wf = load_weights(&a.weights)?;
    let data = load_dataset(&a.data)?;
    if data.is_empty() {
        bail!("{} holds no records", a.data.display());
    }
    if let Some(r) = data.iter().find(|r| r.k != wf.k) {
        bail!("record {} has k = {} but the weights have k = {}", r.id, r.k, wf.k);
    }
    let n_max = a
        .n_max
        .or_else(|| default_n_max(&data))
        .ok_or_else(|| usage("--n-max is required: the data has no in-distribution records"))?;
    let split = SplitSpec::new(n_max, a.ood_factor).map_err(|e| usage(e.to_string()))?;
    let lang = wf.lang().ok_or_else(|| anyhow!("cannot infer the language of task {:?}", wf.task))?;
    let net = wf.construction.as_ref().map(|_| wf.to_network()).transpose()?;
    let mut params = json!({ "n_max": n_max, "ood_factor": a.ood_factor, "metric": a.metric.to_possible_value().map(|v| v.get_name().to_string()), "data": a.data.display().to_string() });
    if let Some(c) = &wf.construction {
        params["construction"] = serde_json::to_value(&c.params)?;
    }
    let mut report = MetricsReport::new(wf.task.clone(), wf.k, params);
    match a.metric {
        MetricArg::AccClosed => {
            if !matches!(wf.head, Head::Generator { .. }) {
                return Err(usage("--metric acc-closed needs a generator"));
            }
            let rep = match &net {
                Some(n) => {
                    let n = n.compile();
                    acc_closed(|s| compiled_predictions(&n, s), lang, &data, &split, exec)?
                }
                None => {
                    let strip = wf.task.ends_with("nobos");
                    acc_closed(|s| raw_predictions(&wf, s, strip), lang, &data, &split, exec)?
                }
            };
            for (s, b) in [(Split::Id, rep.id), (Split::Ood, rep.ood)] {
                let m = report.split_mut(s);
                m.acc_closed = b.value;
                m.positions = b.count;
            }
        }
        MetricArg::Tv => {
            let mut n = net.clone().ok_or_else(|| anyhow!("--metric tv needs a constructed weight file"))?;
            if a.process.q.is_some() || a.process.r.is_some() {
                n.meta.gen = Some(gen_params(lang, wf.k, &a.process)?);
            }
            let rep = max_tv_over_prefixes(&n, &data, &split, exec)?;
            for (s, b) in [(Split::Id, rep.id), (Split::Ood, rep.ood)] {
                let m = report.split_mut(s);
                m.max_tv = b.value;
                m.positions = b.count;
            }
        }
        MetricArg::Recognition => {
            let n = net.as_ref().ok_or_else(|| anyhow!("--metric recognition needs a constructed weight file"))?;
            if !n.task.is_recognizer() {
                return Err(usage("--metric recognition needs a recognizer"));
            }
            let seed = a.seed.ok_or_else(|| usage("--metric recognition samples negatives and needs --seed"))?;
            for s in [Split::Id, Split::Ood] {
                let members: Vec<TokenSequence> =
                    data.iter().filter(|r| r.split == s && !r.truncated).map(|r| r.tokens.clone()).collect();
                if members.is_empty() {
                    continue;
                }
                let negatives = negatives_from(&members, wf.k, seed);
                let (mut pos, mut neg) = (Vec::new(), Vec::new());
                for seq in members.into_iter().chain(negatives) {
                    let label = is_member(lang, &seq);
                    let seq = if n.task.uses_bos() { seq } else { strip_bos(&seq) };
                    if label {
                        pos.push(seq)
                    } else {
                        neg.push(seq)
                    }
                }
                let rep = recognition_accuracy(n, &pos, &neg, exec)?;
                let m = report.split_mut(s);
                m.recognition_accuracy = Some(rep.accuracy);
                m.sequences = rep.total;
            }
        }
    }
    for s in [Split::Id, Split::Ood] {
        let count = data.iter().filter(|r| r.split == s).count();
        let m = report.split_mut(s);
        if m.sequences == 0 {
            m.sequences = count;
        }
    }
    match &a.out {
        Some(p) => {
            save_metrics(p, &report)?;
            eprintln!("wrote metrics to {}", p.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn strip_bos(seq: &TokenSequence) -> TokenSequence {
    TokenSequence::new(seq.iter().copied().filter(|&t| t != Token::Bos).collect())
}

/// Distributions of a weight file without construction metadata.
fn raw_predictions(wf: &WeightFile, seq: &TokenSequence, strip: bool) -> Result<Aligned, EvalError> {
    let err = |e: dyckformer::transformer_core::ModelError| EvalError::Network(e.to_string());
    if strip {
        let body: Vec<Token> = seq.iter().copied().filter(|t| t.is_bracket()).collect();
        if body.is_empty() {
            return Ok(vec![None; seq.len()]);
        }
        let mut out = vec![None];
        out.extend(
            next_token_distributions(&wf.model, &wf.head, &TokenSequence::new(body))
                .map_err(err)?
                .into_iter()
                .map(Some),
        );
        Ok(out)
    } else {
        Ok(next_token_distributions(&wf.model, &wf.head, seq).map_err(err)?.into_iter().map(Some).collect())
    }
}

fn cmd_convert(a: &ConvertArgs) -> Result<()> {
    let wf = load_weights(&a.weights)?;
    let net = wf.to_network()?;
    let conv = wrap_selection_layers(&ln_ffn_network(&net)?)?;
    save_weights(&a.out, &WeightFile::from_network(&conv))?;
    eprintln!("wrote converted {} to {}", conv.task, a.out.display());
    Ok(())
}

fn cmd_info(a: &InfoArgs) -> Result<()> {
    let wf = load_weights(&a.weights)?;
    println!("task:           {}", wf.task);
    println!("schema_version: {}", wf.schema_version);
    println!("k:              {}", wf.k);
    println!("d_model:        {}", wf.d_model);
    println!("blocks:         {}", wf.model.blocks.len());
    let modes: Vec<String> = wf.attention_modes.iter().map(|m| format!("{m:?}").to_lowercase()).collect();
    println!("attention:      {}", modes.join(", "));
    println!("positional:     {}", wf.has_positional);
    let head = match &wf.head {
        Head::Recognizer { b, .. } => format!("recognizer (bias {b})"),
        Head::Generator { .. } => "generator".to_string(),
    };
    println!("head:           {head}");
    if let Some(c) = &wf.construction {
        println!("construction:   {}", c.proof);
        println!("attn policy:    {}", c.params.attn.name());
        println!("n_max:          {}", c.params.n_max);
        println!("constants:      {}", serde_json::to_string(&c.params)?);
        for (name, v) in &c.derived {
            println!("derived:        {name} = {v}");
        }
        println!("channels:");
        let mut chans: Vec<(&String, &Vec<usize>)> = c.channels.iter().collect();
        chans.sort_by_key(|(_, v)| v.first().copied());
        for (name, idx) in chans {
            println!("  {:<16} {:?}", name, idx);
        }
        for s in &c.selection {
            println!("selection layer: block {} ({} score terms)", s.block, s.spec.terms.len());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let exec = exec_from_env()?;
    match &cli.cmd {
        Cmd::GenData(a) => cmd_gen_data(a, exec)?,
        Cmd::Build(a) => cmd_build(a)?,
        Cmd::Eval(a) => cmd_eval(a, exec)?,
        Cmd::Verify(a) => {
            let SuiteArg::All = a.suite;
            if a.k == 0 || a.n_max < 8 {
                return Err(usage("verify needs --k ≥ 1 and --n-max ≥ 8"));
            }
            let ok = verify::run_all(a.k, a.n_max, a.seed, exec);
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Cmd::Convert(a) => cmd_convert(a)?,
        Cmd::Info(a) => cmd_info(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
