//! `phenogen` command-line driver.
//!
//! Settings come from built-in defaults, then the `--config` file, then
//! command-line flags; later sources win.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use phenogen::config::{OracleConfig, RunConfig};
use phenogen::data::{
    file_sha256, load_checkpoint, load_corpus, load_profiles, load_triplets, save_checkpoint, save_corpus,
    save_triplets, synth_corpus, synth_triplets, to_training, ArtifactHash, RunManifest, StageRecord,
};
use phenogen::generator::{joint_train, pretrain_molvae, GenError, MOL_ENCODER};
use phenogen::metrics::{emit_report, evaluate, reference_keys, EvalOptions};
use phenogen::reward::{normalize_dock, ExternalOracle, MockOracle};
use phenogen::rl::{finetune_with, sample_unique, RlError, StepLog};
use phenogen::chem::tokenize_with_max;
use phenogen::{
    compute_descriptors, parse_smiles, qed, DockingOracle, ExpressionProfile, ModelParams, QedParams, Vocabulary,
};

const PROBES: [(&str, &str); 3] = [
    ("phenol", "Oc1ccccc1"),
    ("paracetamol", "CC(=O)Nc1ccc(O)cc1"),
    ("ibuprofen", "CC(C)Cc1ccc(cc1)C(C)C(=O)O"),
];

#[derive(Parser)]
#[command(name = "phenogen", version, about = "Phenotype-conditioned molecule generation")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the molecule VAE on the corpus.
    Pretrain {
        /// Epochs.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train the expression VAE against the pretrained molecule VAE.
    Joint {
        /// Epochs.
        #[arg(long)]
        steps: Option<usize>,
        /// Molecule VAE checkpoint [default: <out-dir>/molvae.ckpt].
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Policy-gradient fine-tuning against the configured oracle.
    Finetune {
        /// Optimizer steps.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Prior checkpoint [default: <out-dir>/joint.ckpt].
        #[arg(long)]
        from: Option<PathBuf>,
        /// Conditioning profiles, one per line.
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Draw distinct valid molecules from a checkpoint.
    Sample {
        /// [default: <out-dir>/agent.ckpt]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(short, long)]
        n: Option<usize>,
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// [default: <out-dir>/samples.smi]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a file of generated SMILES.
    Evaluate {
        generated: PathBuf,
        /// Reference corpus for novelty.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Score a few probe molecules to check the oracle wiring.
    OracleCheck,
}

/// The oracle could not produce scores.
#[derive(Debug)]
struct OracleDown(String);

impl fmt::Display for OracleDown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for OracleDown {}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<OracleDown>() {
            return 3;
        }
        if let Some(r) = cause.downcast_ref::<RlError>() {
            match r {
                RlError::OracleUnavailable { .. } => return 3,
                RlError::DivergedLoss { .. } | RlError::Gen(GenError::DivergedLoss { .. }) => return 4,
                _ => {}
            }
        }
        if let Some(GenError::DivergedLoss { .. }) = cause.downcast_ref::<GenError>() {
            return 4;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    vocab: &'static Vocabulary,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = cli.out_dir {
        cfg.out_dir = d;
    }
    let cfg = cfg.resolve()?;
    let out = cfg.out_dir.clone();
    let mut ctx = Ctx {
        cfg,
        out,
        vocab: Vocabulary::builtin(),
    };
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("cannot create {}", ctx.out.display()))?;
    let start = Instant::now();
    let name = match cli.command {
        Command::Pretrain { steps } => {
            if let Some(s) = steps {
                ctx.cfg.pretrain.epochs = s;
            }
            cmd_pretrain(&ctx)?;
            "pretrain"
        }
        Command::Joint { steps, from } => {
            if let Some(s) = steps {
                ctx.cfg.joint.epochs = s;
            }
            cmd_joint(&ctx, from)?;
            "joint"
        }
        Command::Finetune {
            steps,
            batch_size,
            from,
            profiles,
        } => {
            if let Some(s) = steps {
                ctx.cfg.finetune.steps = s;
            }
            if let Some(b) = batch_size {
                ctx.cfg.finetune.batch_size = b;
            }
            ctx.cfg.validate()?;
            cmd_finetune(&ctx, from, profiles)?;
            "finetune"
        }
        Command::Sample {
            checkpoint,
            n,
            profiles,
            output,
        } => {
            if let Some(n) = n {
                ctx.cfg.sample.n = n;
            }
            cmd_sample(&ctx, checkpoint, profiles, output)?;
            "sample"
        }
        Command::Evaluate { generated, reference } => {
            cmd_evaluate(&ctx, &generated, reference)?;
            "evaluate"
        }
        Command::OracleCheck => {
            cmd_oracle_check(&ctx)?;
            "oracle-check"
        }
    };
    // Wall-clock time varies between runs, so it lives apart from the
    // reproducible artifacts.
    let timing = serde_json::json!({ "command": name, "wall_seconds": start.elapsed().as_secs_f64() });
    write(&ctx.out.join(format!("{name}.timing.json")), format!("{timing}\n"))
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Hash of a file inside the output directory, recorded by its file name.
fn output_hash(ctx: &Ctx, name: &str) -> Result<ArtifactHash> {
    Ok(ArtifactHash {
        path: name.to_string(),
        sha256: file_sha256(&ctx.out.join(name))?,
    })
}

fn manifest(ctx: &Ctx, command: &str) -> RunManifest {
    RunManifest::new(command, ctx.cfg.seed, &ctx.cfg.to_json())
}

fn save_manifest(ctx: &Ctx, m: &RunManifest) -> Result<()> {
    m.save(&ctx.out.join(format!("{}.manifest.json", m.command)))?;
    Ok(())
}

/// Lineage up to and including `input`, taken from the manifest of the stage
/// that wrote it when that manifest still matches the file.
fn lineage_for(ctx: &Ctx, prev_stage: &str, input: &Path) -> Result<Vec<StageRecord>> {
    let sha = file_sha256(input)?;
    let prev = ctx.out.join(format!("{prev_stage}.manifest.json"));
    if let Ok(m) = RunManifest::load(&prev) {
        if m.lineage.last().is_some_and(|s| s.checkpoint.sha256 == sha) {
            return Ok(m.lineage);
        }
    }
    Ok(vec![StageRecord {
        stage: prev_stage.to_string(),
        checkpoint: ArtifactHash {
            path: input.display().to_string(),
            sha256: sha,
        },
    }])
}

fn load_params(ctx: &Ctx, path: &Path) -> Result<ModelParams> {
    load_checkpoint(path, ctx.vocab).with_context(|| format!("cannot load checkpoint {}", path.display()))
}

/// The configured corpus, or the synthetic one when none is configured.
fn corpus(ctx: &Ctx) -> Result<(Vec<String>, Option<ArtifactHash>)> {
    match &ctx.cfg.data.corpus {
        Some(p) => {
            let c = load_corpus(p, ctx.vocab, ctx.cfg.data.max_len)?;
            if c.skipped > 0 {
                eprintln!("warning: skipped {} unusable lines in {}", c.skipped, p.display());
            }
            Ok((c.smiles, Some(ArtifactHash::of(p)?)))
        }
        None => Ok((synth_corpus(ctx.cfg.data.synth_corpus_size, ctx.cfg.seed)?, None)),
    }
}

fn cmd_pretrain(ctx: &Ctx) -> Result<()> {
    let mut m = manifest(ctx, "pretrain");
    let (smiles, input) = corpus(ctx)?;
    match input {
        Some(h) => m.inputs.push(h),
        None => {
            save_corpus(&ctx.out.join("corpus.smi"), &smiles)?;
            m.outputs.push(output_hash(ctx, "corpus.smi")?);
        }
    }
    let seqs = smiles
        .iter()
        .map(|s| tokenize_with_max(s, ctx.vocab, ctx.cfg.data.max_len))
        .collect::<Result<Vec<_>, _>>()?;
    println!("pretraining on {} molecules for {} epochs", seqs.len(), ctx.cfg.pretrain.epochs);
    let (params, log) = pretrain_molvae(&seqs, ctx.vocab, &ctx.cfg.model, &ctx.cfg.pretrain)?;
    save_checkpoint(&params, ctx.vocab, &ctx.out.join("molvae.ckpt"))?;
    write(&ctx.out.join("pretrain.log.jsonl"), log.to_jsonl())?;
    if let (Some(nll), Some(kl)) = (log.series("nll").last(), log.series("kl").last()) {
        println!("final epoch: nll {nll:.4}  kl {kl:.4}");
    }
    let ck = output_hash(ctx, "molvae.ckpt")?;
    m.outputs.push(ck.clone());
    m.outputs.push(output_hash(ctx, "pretrain.log.jsonl")?);
    m.lineage.push(StageRecord {
        stage: "pretrain".into(),
        checkpoint: ck,
    });
    save_manifest(ctx, &m)
}

fn cmd_joint(ctx: &Ctx, from: Option<PathBuf>) -> Result<()> {
    let from = from.unwrap_or_else(|| ctx.out.join("molvae.ckpt"));
    if !from.exists() {
        bail!("molecule VAE checkpoint {} not found; run `pretrain` first", from.display());
    }
    let start = load_params(ctx, &from)?;
    let mut m = manifest(ctx, "joint");
    m.inputs.push(ArtifactHash::of(&from)?);
    m.lineage = lineage_for(ctx, "pretrain", &from)?;

    let g = ctx.cfg.model.gene_count;
    let records = match &ctx.cfg.data.triplets {
        Some(p) => {
            let (records, file_g, _) = load_triplets(p)?;
            if file_g != g {
                bail!("{} has {file_g} genes, model.gene_count is {g}", p.display());
            }
            m.inputs.push(ArtifactHash::of(p)?);
            records
        }
        None => {
            let (smiles, input) = corpus(ctx)?;
            m.inputs.extend(input);
            let records = synth_triplets(&smiles, &ctx.cfg.triplets)?;
            save_triplets(&ctx.out.join("triplets.tsv"), &records, g, ctx.cfg.seed)?;
            m.outputs.push(output_hash(ctx, "triplets.tsv")?);
            records
        }
    };
    let triplets = to_training(&records, ctx.vocab, ctx.cfg.data.max_len)?;
    println!("joint training on {} triplets for {} epochs", triplets.len(), ctx.cfg.joint.epochs);
    let before = start.block_sha256(MOL_ENCODER);
    let (params, log) = joint_train(&start, ctx.vocab, &triplets, &ctx.cfg.joint)?;
    let after = params.block_sha256(MOL_ENCODER);
    if before != after {
        bail!("molecule encoder changed during joint training");
    }
    save_checkpoint(&params, ctx.vocab, &ctx.out.join("joint.ckpt"))?;
    write(&ctx.out.join("joint.log.jsonl"), log.to_jsonl())?;
    if let (Some(nll), Some(mse)) = (log.series("nll").last(), log.series("mse").last()) {
        println!("final epoch: nll {nll:.4}  mse {mse:.4}");
    }
    let ck = output_hash(ctx, "joint.ckpt")?;
    m.outputs.push(ck.clone());
    m.outputs.push(output_hash(ctx, "joint.log.jsonl")?);
    m.lineage.push(StageRecord {
        stage: "joint".into(),
        checkpoint: ck,
    });
    m.checks.insert("mol_encoder_sha256_before".into(), before);
    m.checks.insert("mol_encoder_sha256_after".into(), after);
    m.checks.insert("mol_encoder_frozen".into(), "true".into());
    save_manifest(ctx, &m)
}

/// Conditioning profiles: an explicit file if one is given or configured,
/// otherwise the perturbation deltas of the triplet set.
fn profiles(ctx: &Ctx, flag: Option<PathBuf>, m: &mut RunManifest) -> Result<Vec<ExpressionProfile>> {
    let rows = if let Some(p) = flag.or_else(|| ctx.cfg.data.profiles.clone()) {
        m.inputs.push(ArtifactHash::of(&p)?);
        load_profiles(&p)?
    } else {
        let p = ctx
            .cfg
            .data
            .triplets
            .clone()
            .unwrap_or_else(|| ctx.out.join("triplets.tsv"));
        if !p.exists() {
            bail!(
                "no conditioning profiles: {} not found; set data.profiles or run `joint` first",
                p.display()
            );
        }
        m.inputs.push(ArtifactHash::of(&p)?);
        let (records, _, _) = load_triplets(&p)?;
        records
            .iter()
            .map(|r| r.perturbed.iter().zip(&r.unperturbed).map(|(a, b)| a - b).collect())
            .collect()
    };
    let g = ctx.cfg.model.gene_count;
    rows.into_iter()
        .map(|r| {
            if r.len() != g {
                bail!("profile has {} values, model.gene_count is {g}", r.len());
            }
            Ok(ExpressionProfile::new(r)?)
        })
        .collect()
}

fn oracle(ctx: &Ctx) -> Result<Box<dyn DockingOracle>> {
    Ok(match &ctx.cfg.oracle {
        OracleConfig::Mock { seed, spec } => Box::new(MockOracle::new(*seed, spec.clone())),
        OracleConfig::External {
            command,
            workdir,
            timeout_secs,
        } => Box::new(
            ExternalOracle::new(command, workdir, *timeout_secs).map_err(|e| OracleDown(e.to_string()))?,
        ),
    })
}

fn step_line(l: &StepLog) -> String {
    format!(
        "step {:>5}  reward {:.4}  valid {:.3}  unique {:>3}  entropy {:>7.3}  loss {:>9.4}",
        l.step, l.mean_reward, l.validity_rate, l.unique_in_batch, l.mean_entropy, l.total
    )
}

fn window_mean(log: &[StepLog], f: fn(&StepLog) -> f64) -> f64 {
    if log.is_empty() {
        0.0
    } else {
        log.iter().map(f).sum::<f64>() / log.len() as f64
    }
}

fn cmd_finetune(ctx: &Ctx, from: Option<PathBuf>, profile_flag: Option<PathBuf>) -> Result<()> {
    let from = from.unwrap_or_else(|| ctx.out.join("joint.ckpt"));
    if !from.exists() {
        bail!("prior checkpoint {} not found; run `joint` first", from.display());
    }
    let prior = load_params(ctx, &from)?;
    let prior_sha = file_sha256(&from)?;
    let mut m = manifest(ctx, "finetune");
    m.inputs.push(ArtifactHash::of(&from)?);
    m.lineage = lineage_for(ctx, "joint", &from)?;
    let profiles = profiles(ctx, profile_flag, &mut m)?;
    let oracle = oracle(ctx)?;
    let cfg = &ctx.cfg.finetune;
    println!("fine-tuning for {} steps, batch {}", cfg.steps, cfg.batch_size);
    let out = finetune_with(
        &prior,
        ctx.vocab,
        oracle.as_ref(),
        &profiles,
        cfg,
        &ctx.cfg.reward.to_reward_config(),
        |l| println!("{}", step_line(l)),
    )?;
    let prior_after = file_sha256(&from)?;
    if prior_after != prior_sha {
        bail!("prior checkpoint {} changed during fine-tuning", from.display());
    }
    save_checkpoint(&out.agent, ctx.vocab, &ctx.out.join("agent.ckpt"))?;
    write(&ctx.out.join("finetune.log.jsonl"), StepLog::to_jsonl(&out.log))?;

    let k = out.log.len().min(10);
    let (head, tail) = (&out.log[..k], &out.log[out.log.len() - k..]);
    println!("summary (mean of first / last {k} steps)");
    for (name, f) in [
        ("reward", (|l: &StepLog| l.mean_reward) as fn(&StepLog) -> f64),
        ("validity", |l| l.validity_rate),
        ("unique", |l| l.unique_in_batch as f64),
        ("entropy", |l| l.mean_entropy),
        ("agent-prior logp", |l| l.mean_agent_logp - l.mean_prior_logp),
    ] {
        println!("  {name:<17} {:>10.4} {:>10.4}", window_mean(head, f), window_mean(tail, f));
    }

    let ck = output_hash(ctx, "agent.ckpt")?;
    m.outputs.push(ck.clone());
    m.outputs.push(output_hash(ctx, "finetune.log.jsonl")?);
    m.lineage.push(StageRecord {
        stage: "finetune".into(),
        checkpoint: ck,
    });
    m.checks.insert("prior_sha256_before".into(), prior_sha);
    m.checks.insert("prior_sha256_after".into(), prior_after);
    m.checks.insert("prior_unchanged".into(), "true".into());
    save_manifest(ctx, &m)
}

fn cmd_sample(ctx: &Ctx, ckpt: Option<PathBuf>, profile_flag: Option<PathBuf>, output: Option<PathBuf>) -> Result<()> {
    let ckpt = ckpt.unwrap_or_else(|| ctx.out.join("agent.ckpt"));
    let params = load_params(ctx, &ckpt)?;
    let mut m = manifest(ctx, "sample");
    m.inputs.push(ArtifactHash::of(&ckpt)?);
    let profiles = profiles(ctx, profile_flag, &mut m)?;
    let s = &ctx.cfg.sample;
    let got = sample_unique(
        &params,
        ctx.vocab,
        &profiles,
        s.n,
        ctx.cfg.data.max_len,
        ctx.cfg.seed,
        s.batch_size,
        s.retry_factor,
    )?;
    if got.cap_hit {
        eprintln!(
            "warning: retry cap reached; {} of {} distinct molecules after {} draws",
            got.smiles.len(),
            s.n,
            got.draws
        );
    }
    let out = output.unwrap_or_else(|| ctx.out.join("samples.smi"));
    save_corpus(&out, &got.smiles)?;
    println!("wrote {} molecules ({} draws) to {}", got.smiles.len(), got.draws, out.display());
    m.outputs.push(ArtifactHash::of(&out)?);
    m.checks.insert("draws".into(), got.draws.to_string());
    m.checks.insert("retry_cap_hit".into(), got.cap_hit.to_string());
    save_manifest(ctx, &m)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

fn cmd_evaluate(ctx: &Ctx, generated: &Path, reference: Option<PathBuf>) -> Result<()> {
    let mut m = manifest(ctx, "evaluate");
    let smiles = read_lines(generated)?;
    m.inputs.push(ArtifactHash::of(generated)?);
    let reference: Option<BTreeSet<String>> = match reference.or_else(|| ctx.cfg.data.reference.clone()) {
        Some(p) => {
            m.inputs.push(ArtifactHash::of(&p)?);
            Some(reference_keys(&read_lines(&p)?))
        }
        None => None,
    };
    let oracle = if ctx.cfg.eval.dock { Some(oracle(ctx)?) } else { None };
    let opts = EvalOptions {
        reference: reference.as_ref(),
        oracle: oracle.as_deref(),
        reward: ctx.cfg.reward.to_reward_config(),
        n_bits: ctx.cfg.eval.fingerprint_bits,
    };
    let report = evaluate(&smiles, &opts)?;
    emit_report(&report, &ctx.out.join("report.json"), &ctx.out.join("report.txt"))?;
    print!("{}", report.summary());
    m.outputs.push(output_hash(ctx, "report.json")?);
    m.outputs.push(output_hash(ctx, "report.txt")?);
    save_manifest(ctx, &m)
}

fn cmd_oracle_check(ctx: &Ctx) -> Result<()> {
    let oracle = oracle(ctx)?;
    let k = ctx.cfg.reward.k;
    let smiles: Vec<String> = PROBES.iter().map(|(_, s)| s.to_string()).collect();
    let t = Instant::now();
    let results = oracle.score_batch(&smiles);
    let elapsed = t.elapsed().as_secs_f64();
    if results.len() != smiles.len() {
        return Err(anyhow!(OracleDown(format!(
            "oracle returned {} results for {} probes",
            results.len(),
            smiles.len()
        ))));
    }
    println!("{:<12} {:>10} {:>8} {:>8}  smiles", "probe", "raw", "dock", "qed");
    let mut failures = Vec::new();
    for ((name, s), r) in PROBES.iter().zip(results) {
        let g = parse_smiles(s).expect("probe molecules parse");
        let q = qed(&compute_descriptors(&g), QedParams::builtin())?;
        match r {
            Ok(raw) => {
                let dock = normalize_dock(raw, true, k)?;
                println!("{name:<12} {raw:>10.4} {dock:>8.4} {q:>8.4}  {s}");
            }
            Err(e) => {
                println!("{name:<12} {:>10} {:>8} {q:>8.4}  {s}", "-", "-");
                failures.push(format!("{name}: {e}"));
            }
        }
    }
    println!("round trip {:.1} ms for {} probes", elapsed * 1e3, smiles.len());
    if !failures.is_empty() {
        return Err(anyhow!(OracleDown(format!("oracle check failed: {}", failures.join("; ")))));
    }
    Ok(())
}
