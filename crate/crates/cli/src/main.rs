mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tac_core::dmpnn::Pooling;
use tac_core::gradcheck::{run_suite, GradcheckConfig, TOLERANCE};
use tac_core::metrics::ClassificationReport;
use tac_core::molgraph::{load_dataset, parse_smiles, save_dataset, synth_generate, synth_ranking, CompoundRecord};
use tac_core::pairing::{load_assays, pair_assays, PairManifest};
use tac_core::protocol::{fit_rotation, run_cv, run_rank_cv, InputKind};
use tac_core::ranking::{ranked_dataset, RankModel, RankingReport};
use tac_core::transfer::{TransferModel, Variant};

use crate::config::{parse_named, set, Config};

#[derive(Parser)]
#[command(name = "tac", version, about = "Adversarial transfer learning for bioassay classification and ranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validated grid search on source/target pairs; saves the best cell's model.
    Train(TrainArgs),
    /// Scores a dataset with a saved checkpoint.
    Eval(EvalArgs),
    /// Resolves, balances and profiles assay pairs.
    Pair(PairArgs),
    /// Cross-validated pairwise ranking over activity assays.
    Rank(RankArgs),
    /// Writes synthetic datasets.
    Synth(SynthArgs),
    /// Finite-difference check of every exported loss.
    Gradcheck(GradcheckArgs),
}

/// Grid overrides shared by `train` and `rank`.
#[derive(Args, Default)]
struct EncoderFlags {
    #[arg(long, value_delimiter = ',', value_parser = parse_named::<InputKind>)]
    inputs: Option<Vec<InputKind>>,
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_named::<Pooling>)]
    pooling: Option<Vec<Pooling>>,
    #[arg(long, value_delimiter = ',')]
    attn_hidden: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    batch_size: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    /// Pair manifest from `tac pair`; every selected pair is run in both directions.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_named::<Variant>)]
    variants: Option<Vec<Variant>>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    head_hidden: Option<Vec<usize>>,
    #[command(flatten)]
    grid: EncoderFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Assay JSONL files; the file stem is the assay id.
    #[arg(long, num_args = 1..)]
    assays: Option<Vec<PathBuf>>,
    /// Inactive pool for balancing.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    min_actives: Option<usize>,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    assays: Option<Vec<PathBuf>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    lr: Option<Vec<f64>>,
    #[arg(long)]
    l2: Option<f64>,
    #[command(flatten)]
    grid: EncoderFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Transfer,
    Ranking,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "transfer")]
    kind: SynthKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "O=C(N)c1ccccc1")]
    motif: String,
    #[arg(long, default_value_t = 50)]
    actives: usize,
    #[arg(long, default_value_t = 50)]
    inactives: usize,
    #[arg(long, default_value_t = 1.0)]
    overlap: f64,
    /// Compound count for ranking data.
    #[arg(long, default_value_t = 150)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    max_copies: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(a) => train(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Pair(a) => pair(a)?,
        Command::Rank(a) => rank(a)?,
        Command::Synth(a) => synth(a)?,
        Command::Gradcheck(a) => return gradcheck(a),
    }
    Ok(ExitCode::SUCCESS)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn out_dir(flag: Option<PathBuf>, cfg: &Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| cfg.clone()).context("no output directory: pass --out or set `out` in the config")
}

/// Layout of `tac pair` output for a resolved pair.
fn pair_dir(root: &Path, a: &str, b: &str) -> PathBuf {
    root.join("pairs").join(format!("{a}__{b}"))
}

type Named = (String, Vec<CompoundRecord>);

fn train(a: TrainArgs) -> Result<()> {
    let cfg = Config::load(a.config.as_deref())?;
    let out = out_dir(a.out, &cfg.out)?;
    let mut spec = cfg.cv;
    set(&mut spec.variants, a.variants);
    set(&mut spec.alpha, a.alpha);
    set(&mut spec.lambda, a.lambda);
    set(&mut spec.head_hidden, a.head_hidden);
    let g = a.grid;
    set(&mut spec.inputs, g.inputs);
    set(&mut spec.encoder.d, g.d);
    set(&mut spec.encoder.tau, g.tau);
    set(&mut spec.encoder.pooling, g.pooling);
    set(&mut spec.encoder.attn_hidden, g.attn_hidden);
    set(&mut spec.batch_size, g.batch_size);
    set(&mut spec.epochs, g.epochs);
    set(&mut spec.folds, g.folds);
    set(&mut spec.seed, g.seed);

    let source = a.source.or(cfg.data.source);
    let target = a.target.or(cfg.data.target);
    let manifest = a.manifest.or(cfg.data.manifest);
    let mut jobs: Vec<(Named, Named)> = Vec::new();
    match (source, target, manifest) {
        (Some(s), Some(t), None) => jobs.push(((stem(&s), load_dataset(&s)?), (stem(&t), load_dataset(&t)?))),
        (None, None, Some(m)) => {
            let text = fs::read_to_string(&m).with_context(|| format!("reading {}", m.display()))?;
            let manifest: PairManifest = serde_json::from_str(&text).context("parsing pair manifest")?;
            let root = m.parent().unwrap_or(Path::new(""));
            for p in manifest.pairs.iter().filter(|p| p.selected) {
                let dir = pair_dir(root, &p.a, &p.b);
                let ra = load_dataset(dir.join(format!("{}.jsonl", p.a)))?;
                let rb = load_dataset(dir.join(format!("{}.jsonl", p.b)))?;
                jobs.push(((p.a.clone(), ra.clone()), (p.b.clone(), rb.clone())));
                jobs.push(((p.b.clone(), rb), (p.a.clone(), ra)));
            }
            if jobs.is_empty() {
                bail!("manifest {} selects no pairs", m.display());
            }
        }
        _ => bail!("give either both --source and --target, or --manifest"),
    }

    let mut csv = String::new();
    let mut runs_csv = String::new();
    let mut reports = Vec::new();
    for ((sname, src), (tname, tgt)) in &jobs {
        eprintln!("cv {sname} -> {tname}");
        let report = run_cv(&spec, sname, src, tname, tgt)?;
        append_csv(&mut csv, &report.to_csv());
        append_csv(&mut runs_csv, &with_pair_columns(sname, tname, &report.runs_csv()));
        let best = report.best_cell();
        let cell = report.rows[best].config;
        let fit = fit_rotation(&spec, &cell, 0, src, tgt)?;
        let mut ckpt = Vec::new();
        fit.model.save(&mut ckpt)?;
        write(&out.join("checkpoints").join(format!("{sname}__{tname}.ckpt")), ckpt)?;
        let mut hist = String::from("epoch,train_loss,val_roc_auc,lr\n");
        for r in &fit.history {
            writeln!(hist, "{},{},{},{}", r.epoch, r.train_loss, r.val_roc_auc, r.lr)?;
        }
        write(&out.join("checkpoints").join(format!("{sname}__{tname}.history.csv")), hist)?;
        reports.push(report);
    }
    write(&out.join("cv.csv"), csv)?;
    write(&out.join("cv_runs.csv"), runs_csv)?;
    write(&out.join("cv.json"), serde_json::to_string_pretty(&reports)? + "\n")?;
    Ok(())
}

/// Appends `block`, dropping its header when `acc` already has one.
fn append_csv(acc: &mut String, block: &str) {
    if acc.is_empty() {
        acc.push_str(block);
    } else {
        acc.extend(block.lines().skip(1).map(|l| format!("{l}\n")));
    }
}

fn with_pair_columns(source: &str, target: &str, block: &str) -> String {
    let mut lines = block.lines();
    let mut s = format!("source,target,{}\n", lines.next().unwrap_or_default());
    for l in lines {
        writeln!(s, "{source},{target},{l}").unwrap();
    }
    s
}

fn eval(a: EvalArgs) -> Result<()> {
    let bytes = fs::read(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let data = load_dataset(&a.data)?;
    let mut preds = String::from("id,score\n");
    let metrics = match TransferModel::<f64>::load(&bytes[..]) {
        Ok(model) => {
            let scores = model.predict(&data)?;
            scores.iter().zip(&data).for_each(|(s, r)| writeln!(preds, "{},{s}", r.id).unwrap());
            let labels: Option<Vec<u8>> = data.iter().map(|r| r.label).collect();
            match labels {
                Some(y) => serde_json::to_value(ClassificationReport::evaluate(&scores, &y)?)?,
                None => serde_json::Value::Null,
            }
        }
        Err(transfer_err) => {
            let model = RankModel::<f64>::load(&bytes[..])
                .map_err(|_| transfer_err)
                .with_context(|| format!("loading {}", a.checkpoint.display()))?;
            let scores = model.score_examples(&data)?;
            scores.iter().zip(&data).for_each(|(s, r)| writeln!(preds, "{},{s}", r.id).unwrap());
            match ranked_dataset(&data) {
                Ok(truth) => serde_json::to_value(RankingReport::evaluate(&truth, &scores)?)?,
                Err(_) => serde_json::Value::Null,
            }
        }
    };
    write(&a.out.join("predictions.csv"), preds)?;
    write(&a.out.join("metrics.json"), serde_json::to_string_pretty(&metrics)? + "\n")?;
    Ok(())
}

fn pair(a: PairArgs) -> Result<()> {
    let cfg = Config::load(a.config.as_deref())?;
    let out = out_dir(a.out, &cfg.out)?;
    let mut pc = cfg.pairing.config;
    set(&mut pc.seed, a.seed);
    set(&mut pc.margin, a.margin);
    set(&mut pc.min_actives, a.min_actives);
    let paths = a.assays.unwrap_or(cfg.pairing.assays);
    if paths.len() < 2 {
        bail!("pairing needs at least two assays");
    }
    let assays = load_assays(&paths)?;
    let pool = match a.pool.or(cfg.pairing.pool) {
        Some(p) => load_dataset(p)?,
        None => Vec::new(),
    };
    let output = pair_assays(&assays, &pool, &pc)?;
    for (entry, resolved) in output.manifest.pairs.iter().zip(&output.assays) {
        if let Some((ra, rb)) = resolved {
            let dir = pair_dir(&out, &entry.a, &entry.b);
            fs::create_dir_all(&dir)?;
            save_dataset(dir.join(format!("{}.jsonl", ra.id)), &ra.records)?;
            save_dataset(dir.join(format!("{}.jsonl", rb.id)), &rb.records)?;
        }
    }
    write(&out.join("manifest.json"), serde_json::to_string_pretty(&output.manifest)? + "\n")?;
    let m = &output.manifest;
    eprintln!(
        "{} pairs, {} in P0, {} selected",
        m.pairs.len(),
        m.pairs.iter().filter(|p| p.in_p0).count(),
        m.pairs.iter().filter(|p| p.selected).count()
    );
    Ok(())
}

fn rank(a: RankArgs) -> Result<()> {
    let cfg = Config::load(a.config.as_deref())?;
    let out = out_dir(a.out, &cfg.out)?;
    let mut spec = cfg.rank.spec;
    set(&mut spec.lr, a.lr);
    set(&mut spec.l2, a.l2);
    let g = a.grid;
    set(&mut spec.inputs, g.inputs);
    set(&mut spec.encoder.d, g.d);
    set(&mut spec.encoder.tau, g.tau);
    set(&mut spec.encoder.pooling, g.pooling);
    set(&mut spec.encoder.attn_hidden, g.attn_hidden);
    set(&mut spec.batch_size, g.batch_size);
    set(&mut spec.epochs, g.epochs);
    set(&mut spec.folds, g.folds);
    set(&mut spec.seed, g.seed);
    let paths = a.assays.unwrap_or(cfg.rank.assays);
    if paths.is_empty() {
        bail!("no ranking assays given");
    }
    let assays: Vec<Named> = paths.iter().map(|p| Ok((stem(p), load_dataset(p)?))).collect::<Result<_>>()?;
    let report = run_rank_cv(&spec, &assays)?;
    write(&out.join("rank.csv"), report.to_csv())?;
    write(&out.join("rank.json"), report.to_json() + "\n")?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let motif = parse_smiles(&a.motif).with_context(|| format!("motif {:?}", a.motif))?;
    match a.kind {
        SynthKind::Transfer => {
            let s = synth_generate(a.seed, a.actives, a.inactives, &motif, a.overlap)?;
            fs::create_dir_all(&a.out)?;
            save_dataset(a.out.join("source.jsonl"), &s.source)?;
            save_dataset(a.out.join("target.jsonl"), &s.target)?;
        }
        SynthKind::Ranking => {
            let r = synth_ranking(a.seed, a.n, &motif, a.max_copies)?;
            fs::create_dir_all(&a.out)?;
            save_dataset(a.out.join("ranking.jsonl"), &r)?;
        }
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let entries = run_suite(&GradcheckConfig { seed: a.seed, ..GradcheckConfig::default() })?;
    println!("{:<24} {:<14} {:>7} {:>12}  status", "loss", "params", "coords", "max_rel_err");
    for e in &entries {
        let status = if e.passed() { "ok" } else { "FAIL" };
        println!("{:<24} {:<14} {:>7} {:>12.3e}  {status}", e.loss, e.params, e.coordinates, e.max_rel_error);
    }
    let failed = entries.iter().filter(|e| !e.passed()).count();
    println!("{} checks, {failed} failed, tolerance {TOLERANCE:e}", entries.len());
    if let Some(p) = a.json {
        write(&p, serde_json::to_string_pretty(&entries)? + "\n")?;
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
