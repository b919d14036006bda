use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use qexp_core::metrics::{det_curve, evaluate_curve, write_det_csv};
use qexp_core::scoring::{score_trials, self_trial_warnings, TrialWarning};
use qexp_core::sweep::{write_sweep_csv, QeSweepOptions, SweepReport};
use qexp_core::synth::GENERATOR;
use qexp_core::{
    fuse, generate, l2_normalize, load_embeddings, make_trials, qe_score_all, read_scores,
    read_trials, run_fusion_sweep, run_qe_sweep, write_embeddings, write_scores, write_trials,
    AllPairs, BidiRule, CohortSpec, DcfParams, Direction, EmbeddingFormat, EmbeddingSet,
    EvalReport, FusionParams, LazyPairs, Normalization, PairScores, QeParams, ScoreSet, SweepGrid,
    TrialPair,
};

use crate::config::Config;
use crate::{
    Cli, Command, DcfFlags, EmbeddingInput, EvalArgs, FuseArgs, QeArgs, QeFlags, ScoreArgs,
    SweepArgs, SynthArgs,
};

struct Ctx {
    cfg: Config,
    quiet: bool,
}

impl Ctx {
    fn warn(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("qexp: {msg}");
        }
    }

    fn trial_warnings(&self, warnings: &[TrialWarning]) {
        for w in warnings {
            match w {
                TrialWarning::SelfTrial { index, id } => self.warn(format_args!(
                    "warning: trial {index} compares {id:?} with itself"
                )),
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let threads = cfg.resolve(cli.threads, "threads", 0usize)?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    let quiet = cfg.resolve_flag(cli.quiet, "quiet")?;
    let ctx = Ctx { cfg, quiet };
    match cli.command {
        Command::Score(a) => score(&ctx, a),
        Command::Qe(a) => qe(&ctx, a),
        Command::Fuse(a) => fuse_cmd(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
    }
}

/// Writes through a temporary file in the destination directory so a failed
/// command never leaves a partial artifact behind.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("creating output in {}", dir.display()))?;
    let mut w = BufWriter::new(tmp);
    body(&mut w)?;
    let tmp = w.into_inner().map_err(|e| e.into_error())?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn embedding_format(path: &Path, flag: Option<EmbeddingFormat>) -> EmbeddingFormat {
    flag.or_else(|| EmbeddingFormat::from_path(path))
        .unwrap_or(EmbeddingFormat::Csv)
}

fn load_set(
    ctx: &Ctx,
    path: &Path,
    format: Option<EmbeddingFormat>,
    raw: bool,
) -> Result<EmbeddingSet> {
    let set = load_embeddings(path, embedding_format(path, format))
        .with_context(|| format!("{}", path.display()))?;
    set.ensure_scorable()
        .with_context(|| format!("{}", path.display()))?;
    if ctx.cfg.resolve_flag(raw, "raw-embeddings")? {
        Ok(set)
    } else {
        Ok(l2_normalize(&set)?)
    }
}

fn load_input(ctx: &Ctx, input: &EmbeddingInput) -> Result<EmbeddingSet> {
    load_set(ctx, &input.embeddings, input.format, input.raw_embeddings)
}

fn load_trials(path: &Path) -> Result<Vec<TrialPair>> {
    read_trials(open(path)?).with_context(|| format!("{}", path.display()))
}

fn load_scores(path: &Path) -> Result<ScoreSet> {
    let system = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_scores(open(path)?, system).with_context(|| format!("{}", path.display()))
}

fn save_scores(path: &Path, scores: &ScoreSet) -> Result<()> {
    write_atomic(path, |w| Ok(write_scores(scores, w)?))
}

fn score(ctx: &Ctx, a: ScoreArgs) -> Result<()> {
    let set = load_input(ctx, &a.input)?;
    let trials = load_trials(&a.trials)?;
    let scored = score_trials(&set, &trials)?;
    ctx.trial_warnings(&scored.warnings);
    save_scores(&a.output, &scored.scores)
}

fn qe_params(ctx: &Ctx, f: &QeFlags) -> Result<QeParams> {
    let cfg = &ctx.cfg;
    let id = QeParams::identity();
    let bidirectional = cfg.resolve_flag(f.bidirectional, "bidirectional")?;
    let params = QeParams {
        alpha: cfg.resolve(f.alpha, "alpha", id.alpha)?,
        beta: cfg.resolve(f.beta, "beta", id.beta)?,
        gamma: cfg.resolve(f.gamma, "gamma", id.gamma)?,
        top_n: cfg.resolve(f.top_n, "top-n", id.top_n)?,
        direction: if bidirectional {
            Direction::Bidirectional
        } else {
            Direction::OneSided
        },
        bidi_rule: cfg.resolve(f.bidi_rule, "bidi-rule", BidiRule::MeanOfDirections)?,
        exclude_trial_partner: cfg
            .resolve_flag(f.exclude_trial_partner, "exclude-trial-partner")?,
    };
    params.validate()?;
    Ok(params)
}

fn with_pairs<T>(
    ctx: &Ctx,
    set: &EmbeddingSet,
    lazy: bool,
    f: impl FnOnce(&dyn PairScores) -> Result<T>,
) -> Result<T> {
    if ctx.cfg.resolve_flag(lazy, "lazy")? {
        f(&LazyPairs::new(set)?)
    } else {
        f(&AllPairs::compute_parallel(set)?)
    }
}

fn qe(ctx: &Ctx, a: QeArgs) -> Result<()> {
    let params = qe_params(ctx, &a.qe)?;
    let set = load_input(ctx, &a.input)?;
    let trials = load_trials(&a.trials)?;
    ctx.trial_warnings(&self_trial_warnings(&trials));
    let scores = with_pairs(ctx, &set, a.qe.lazy, |pairs| {
        Ok(qe_score_all(pairs, &trials, &params)?)
    })?;
    save_scores(&a.output, &scores)
}

fn fuse_cmd(ctx: &Ctx, a: FuseArgs) -> Result<()> {
    let lambda = match a.lambda {
        Some(l) => l,
        None => ctx
            .cfg
            .get("lambda")?
            .ok_or_else(|| anyhow!("--lambda is required"))?,
    };
    let normalization = ctx
        .cfg
        .resolve(a.normalize, "normalize", Normalization::None)?;
    let s1 = load_scores(&a.scores_a)?;
    let s2 = load_scores(&a.scores_b)?;
    let fused = fuse(&s1, &s2, &FusionParams::new(lambda, normalization))?;
    save_scores(&a.output, &fused)
}

fn dcf_params(ctx: &Ctx, f: &DcfFlags) -> Result<DcfParams> {
    let d = DcfParams::default();
    let params = DcfParams {
        c_miss: ctx.cfg.resolve(f.c_miss, "c-miss", d.c_miss)?,
        c_fa: ctx.cfg.resolve(f.c_fa, "c-fa", d.c_fa)?,
        p_target: ctx.cfg.resolve(f.p_target, "p-target", d.p_target)?,
    };
    params.validate()?;
    Ok(params)
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let params = dcf_params(ctx, &a.dcf)?;
    let scores = load_scores(&a.scores)?;
    let curve = det_curve(&scores).with_context(|| format!("{}", a.scores.display()))?;
    let result = evaluate_curve(&curve, &params);
    let report = EvalReport::new(scores.system.clone(), &result, &params);
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(det) = &a.det {
        write_atomic(det, |w| Ok(write_det_csv(&curve, w)?))?;
    }
    match &a.report {
        Some(path) => {
            write_atomic(path, |w| Ok(writeln!(w, "{json}")?))?;
            ctx.warn(format_args!(
                "{}: EER {:.3}% minDCF {:.4} ({} target, {} nontarget)",
                report.system,
                report.eer_percent,
                report.min_dcf_normalized,
                report.n_target,
                report.n_nontarget
            ));
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn axis<T: Clone + std::str::FromStr>(
    ctx: &Ctx,
    list: Option<Vec<T>>,
    list_key: &str,
    single: Option<T>,
    single_key: &str,
) -> Result<Option<Vec<T>>>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = ctx.cfg.resolve_list(list, list_key)? {
        return Ok(Some(v));
    }
    Ok(match single {
        Some(v) => Some(vec![v]),
        None => ctx.cfg.get(single_key)?.map(|v| vec![v]),
    })
}

fn sweep(ctx: &Ctx, a: SweepArgs) -> Result<()> {
    if a.report_csv.is_none() && a.report_json.is_none() {
        bail!("sweep needs --report-csv and/or --report-json");
    }
    let dcf = dcf_params(ctx, &a.dcf)?;
    let normalization = ctx
        .cfg
        .resolve(a.normalize, "normalize", Normalization::None)?;
    let grid = SweepGrid {
        alphas: axis(ctx, a.alphas.clone(), "alphas", a.qe.alpha, "alpha")?,
        betas: axis(ctx, a.betas.clone(), "betas", a.qe.beta, "beta")?,
        gammas: axis(ctx, a.gammas.clone(), "gammas", a.qe.gamma, "gamma")?,
        top_ns: axis(ctx, a.top_ns.clone(), "top-ns", a.qe.top_n, "top-n")?,
        lambdas: ctx.cfg.resolve_list(a.lambdas.clone(), "lambdas")?,
    };
    grid.validate()?;

    let rows = if let Some(emb) = &a.embeddings {
        let trials_path = a.trials.as_ref().expect("clap enforces --trials");
        let template = qe_params(
            ctx,
            &QeFlags {
                alpha: None,
                beta: None,
                gamma: None,
                top_n: None,
                ..a.qe
            },
        )?;
        let fuse_with = a.fuse_with.as_deref().map(load_scores).transpose()?;
        if grid.lambdas.is_some() && fuse_with.is_none() {
            bail!("a lambdas axis in a QE sweep needs --fuse-with");
        }
        let set = load_set(ctx, emb, a.format, a.raw_embeddings)?;
        let trials = load_trials(trials_path)?;
        ctx.trial_warnings(&self_trial_warnings(&trials));
        ctx.warn(format_args!("sweep: {} grid points", grid.size()));
        let opts = QeSweepOptions {
            template,
            fuse_with: fuse_with.as_ref(),
            normalization,
            dcf,
        };
        with_pairs(ctx, &set, a.qe.lazy, |pairs| {
            Ok(run_qe_sweep(pairs, &trials, &grid, &opts)?)
        })?
    } else if let (Some(pa), Some(pb)) = (&a.scores_a, &a.scores_b) {
        if grid.has_qe_axes() {
            bail!("QE axes need --embeddings and --trials; a fusion sweep takes only lambdas");
        }
        let lambdas = grid
            .lambdas
            .clone()
            .ok_or_else(|| anyhow!("a fusion sweep needs --lambdas"))?;
        let s1 = load_scores(pa)?;
        let s2 = load_scores(pb)?;
        ctx.warn(format_args!("sweep: {} grid points", lambdas.len()));
        run_fusion_sweep(&s1, &s2, &lambdas, normalization, &dcf)?
    } else {
        bail!("sweep needs --embeddings with --trials, or --scores-a with --scores-b");
    };

    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        ctx.warn(format_args!(
            "sweep: {failed} of {} points failed",
            rows.len()
        ));
    }
    if let Some(path) = &a.report_csv {
        write_atomic(path, |w| Ok(write_sweep_csv(&rows, w)?))?;
    }
    if let Some(path) = &a.report_json {
        let report = SweepReport {
            grid_size: rows.len(),
            dcf_params: dcf,
            rows,
        };
        let json = serde_json::to_string_pretty(&report)?;
        write_atomic(path, |w| Ok(writeln!(w, "{json}")?))?;
    }
    Ok(())
}

fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let d = CohortSpec::default();
    let spec = CohortSpec {
        n_speakers: cfg.resolve(a.n_speakers, "n-speakers", d.n_speakers)?,
        utts_per_speaker: cfg.resolve(
            a.utts_per_speaker,
            "utts-per-speaker",
            d.utts_per_speaker,
        )?,
        dimension: cfg.resolve(a.dimension, "dimension", d.dimension)?,
        between_std: cfg.resolve(a.between_std, "between-std", d.between_std)?,
        within_std: cfg.resolve(a.within_std, "within-std", d.within_std)?,
        seed: cfg.resolve(a.seed, "seed", d.seed)?,
    };
    let n_target = cfg.resolve(a.n_target, "n-target", 500usize)?;
    let n_nontarget = cfg.resolve(a.n_nontarget, "n-nontarget", 500usize)?;
    let trial_seed = cfg.resolve(a.trial_seed, "trial-seed", spec.seed.wrapping_add(1))?;
    let format = embedding_format(&a.embeddings_out, a.format);

    // Generate everything before touching the filesystem.
    let set = generate(&spec)?;
    let trials = match &a.trials_out {
        Some(_) => Some(make_trials(&set, n_target, n_nontarget, trial_seed)?),
        None => None,
    };
    let mut meta = json!({
        "generator": GENERATOR,
        "cohort": spec,
        "embedding_format": format.to_string(),
        "n_embeddings": set.len(),
    });
    if trials.is_some() {
        meta["trials"] = json!({
            "n_target": n_target,
            "n_nontarget": n_nontarget,
            "seed": trial_seed,
        });
    }

    write_atomic(&a.embeddings_out, |w| {
        Ok(write_embeddings(&set, w, format)?)
    })?;
    if let (Some(path), Some(trials)) = (&a.trials_out, &trials) {
        write_atomic(path, |w| Ok(write_trials(trials, w)?))?;
    }
    let meta_path = a.meta_out.clone().unwrap_or_else(|| {
        let mut p = a.embeddings_out.clone().into_os_string();
        p.push(".meta.json");
        PathBuf::from(p)
    });
    let text = serde_json::to_string_pretty(&meta)?;
    write_atomic(&meta_path, |w| Ok(writeln!(w, "{text}")?))?;
    if !ctx.quiet {
        let _ = writeln!(
            io::stderr(),
            "qexp: wrote {} embeddings ({} speakers, d={})",
            set.len(),
            spec.n_speakers,
            spec.dimension
        );
    }
    Ok(())
}
