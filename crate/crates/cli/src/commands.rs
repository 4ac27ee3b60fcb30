use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use elastic_core::bench::{bench_grid, speedup_report, BenchSettings};
use elastic_core::data::{
    apply_mlm, dedup_exact, default_domain_mapping, filter_domain, pack_documents, quality_filter,
    read_ndjson, write_ndjson, PackFile, PackedRow,
};
use elastic_core::encoder::{slice_params, Checkpoint, EncoderConfig, Granularity, ParamSet, FRACTIONS};
use elastic_core::tokenizer::{
    build_transplant_plan, encode, train_bpe, transplant_embeddings, vocab_overlap, Vocab,
};
use elastic_core::training::{heldout_loss, train_run, Preset, RunConfig, TrainState};
use serde_json::json;

use crate::args::*;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config; exit status 2.
    Usage(String),
    /// Anything that went wrong while doing the work; exit status 1.
    Runtime(elastic_core::Error),
}

impl From<elastic_core::Error> for CliError {
    fn from(e: elastic_core::Error) -> Self {
        match e {
            elastic_core::Error::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Runtime(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

fn out_path(cli: &Cli, explicit: &Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.clone());
    }
    std::fs::create_dir_all(&cli.out_dir)?;
    Ok(cli.out_dir.join(default_name))
}

fn dry_run_done(cli: &Cli, what: &str) -> bool {
    if cli.dry_run {
        println!("dry run: {what} ok");
    }
    cli.dry_run
}

pub fn run(cli: &Cli) -> Result<()> {
    eprintln!("seed {}", cli.seed);
    match &cli.command {
        Command::Tok(c) => tok(cli, c),
        Command::Data(c) => data(cli, c),
        Command::Train(a) => train(cli, a),
        Command::Adapt(a) => adapt(cli, a),
        Command::AdaptDomain(a) => adapt_domain(cli, a),
        Command::Slice(a) => slice(cli, a),
        Command::Bench(a) => bench(cli, a),
    }
}

/// Documents from a text file (one per non-empty line), an NDJSON document
/// file, or a directory of either, in file-name order.
fn read_corpus(path: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path)? {
            let p = entry?.path();
            if p.is_file() {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    let mut docs = Vec::new();
    for f in files {
        let ext = f.extension().and_then(|e| e.to_str()).unwrap_or("");
        if ext == "ndjson" || ext == "jsonl" {
            docs.extend(read_ndjson(BufReader::new(File::open(&f)?))?.into_iter().map(|d| d.text));
        } else {
            let text = std::fs::read_to_string(&f)?;
            docs.extend(text.lines().filter(|l| !l.trim().is_empty()).map(String::from));
        }
    }
    Ok(docs)
}

fn tok(cli: &Cli, cmd: &TokCommand) -> Result<()> {
    match cmd {
        TokCommand::Train { corpus, size, out } => {
            let docs = read_corpus(corpus)?;
            if docs.is_empty() {
                return usage("corpus is empty");
            }
            if dry_run_done(cli, "tok train") {
                return Ok(());
            }
            let vocab = train_bpe(&docs, *size)?;
            let out = out_path(cli, out, "vocab.json")?;
            vocab.save(&out)?;
            println!(
                "{}",
                json!({"vocab": out, "size": vocab.size(), "merges": vocab.merges().len(), "documents": docs.len()})
            );
        }
        TokCommand::Overlap { a, b } => {
            let (a, b) = (Vocab::load(a)?, Vocab::load(b)?);
            println!("{}", json!({"overlap": vocab_overlap(&a, &b), "a_size": a.size(), "b_size": b.size()}));
        }
        TokCommand::Transplant { src_vocab, src_emb, dst_vocab, out } => {
            let src = Vocab::load(src_vocab)?;
            let dst = Vocab::load(dst_vocab)?;
            let ck = Checkpoint::<f32>::load(src_emb)?;
            if ck.config.vocab_size != src.size() {
                return usage(format!(
                    "checkpoint has {} embedding rows, source vocab has {} tokens",
                    ck.config.vocab_size,
                    src.size()
                ));
            }
            if dry_run_done(cli, "tok transplant") {
                return Ok(());
            }
            let (adapted, overlap) = swap_vocab(ck, &src, &dst, true, cli.seed)?;
            let out = out_path(cli, out, "transplanted.elen")?;
            adapted.save(&out)?;
            println!("{}", json!({"checkpoint": out, "overlap": overlap, "vocab_size": dst.size()}));
        }
    }
    Ok(())
}

/// Replace the embedding table of `ck` with one for `dst`, by transplant or
/// fresh random rows. Returns the new checkpoint and the vocab overlap.
fn swap_vocab(
    ck: Checkpoint<f32>,
    src: &Vocab,
    dst: &Vocab,
    transplant: bool,
    seed: u64,
) -> Result<(Checkpoint<f32>, f64)> {
    let plan = build_transplant_plan(src, dst);
    let config = EncoderConfig {
        vocab_size: dst.size(),
        ..ck.config.clone()
    };
    let tok_emb = if transplant {
        transplant_embeddings(&plan, &ck.params.tok_emb, seed)?
    } else {
        ParamSet::<f32>::init(&config, seed).tok_emb
    };
    let params = ParamSet {
        tok_emb,
        ..ck.params
    };
    params.check_shapes(&config)?;
    let mut out = Checkpoint::new(config, params);
    out.meta = json!({"overlap": plan.overlap, "transplant": transplant});
    Ok((out, plan.overlap))
}

fn data(cli: &Cli, cmd: &DataCommand) -> Result<()> {
    match cmd {
        DataCommand::Curate { input, out, quality_threshold, domain } => {
            if !(0.0..=1.0).contains(quality_threshold) {
                return usage("quality threshold must lie in [0, 1]");
            }
            let docs = read_ndjson(BufReader::new(File::open(input)?))?;
            if dry_run_done(cli, "data curate") {
                return Ok(());
            }
            let n_in = docs.len();
            let docs = dedup_exact(docs);
            let n_dedup = docs.len();
            let docs = quality_filter(docs, *quality_threshold);
            let n_quality = docs.len();
            let docs = match domain {
                DomainArg::None => docs,
                DomainArg::Biomed => filter_domain(docs, "biomed", &default_domain_mapping())?,
                DomainArg::Legal => filter_domain(docs, "legal", &default_domain_mapping())?,
            };
            let out = out_path(cli, out, "curated.ndjson")?;
            write_ndjson(BufWriter::new(File::create(&out)?), &docs)?;
            println!(
                "{}",
                json!({"out": out, "input": n_in, "after_dedup": n_dedup, "after_quality": n_quality, "kept": docs.len()})
            );
        }
        DataCommand::Pack { input, vocab, len, mlm, out } => {
            if let Some(p) = mlm {
                if !(*p > 0.0 && *p < 1.0) {
                    return usage("--mlm must lie in (0, 1)");
                }
            }
            let vocab = Vocab::load(vocab)?;
            let docs = read_corpus(input)?;
            if dry_run_done(cli, "data pack") {
                return Ok(());
            }
            let streams: Vec<Vec<u32>> = docs
                .iter()
                .map(|d| encode(&vocab, d))
                .filter(|s| !s.is_empty())
                .collect();
            let mut rows = pack_documents(&streams, *len, &vocab)?;
            if let Some(p) = mlm {
                rows = rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| apply_mlm(r, *p, cli.seed.wrapping_add(i as u64), &vocab))
                    .collect::<elastic_core::Result<_>>()?;
            }
            let tokens: usize = rows.iter().map(PackedRow::token_count).sum();
            let file = PackFile {
                seq_len: *len as u32,
                vocab_size: vocab.size() as u32,
                rows,
            };
            let out = out_path(cli, out, "data.pack")?;
            file.save(&out)?;
            println!(
                "{}",
                json!({"out": out, "rows": file.rows.len(), "tokens": tokens, "documents": streams.len()})
            );
        }
    }
    Ok(())
}

fn load_pack(path: &Path, vocab: &Vocab) -> Result<PackFile> {
    let pack = PackFile::load(path)?;
    if pack.vocab_size as usize != vocab.size() {
        return usage(format!(
            "{} was packed for {} tokens, vocab has {}",
            path.display(),
            pack.vocab_size,
            vocab.size()
        ));
    }
    Ok(pack)
}

/// Apply batch/sequence overrides and shrink a preset stage to the desk
/// token budget.
fn fit_preset(mut run: RunConfig, flags: &DataFlags, pack: &PackFile, epochs: u32) -> Result<RunConfig> {
    run.data.seq_len = flags.seq_len.unwrap_or(pack.seq_len as usize);
    if let Some(b) = flags.batch {
        run.data.batch_size = b;
    }
    let per_pass: u64 = pack.rows.iter().map(|r| r.token_count() as u64).sum();
    let tokens = flags.tokens.unwrap_or(per_pass * epochs as u64);
    if tokens == 0 {
        return usage("token budget is zero");
    }
    Ok(run.scaled_to(tokens))
}

fn config_file(cli: &Cli) -> Result<Option<RunConfig>> {
    cli.config.as_ref().map(|p| Ok(RunConfig::load(p)?)).transpose()
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let from_file = config_file(cli)?;
    if from_file.is_some() && a.preset.is_some() {
        return usage("give either --config or --preset, not both");
    }
    let preset = a.preset.as_deref().map(Preset::from_name).transpose()?;
    if from_file.is_none() && preset.is_none() {
        return usage("train needs --config or --preset");
    }
    let vocab_path = a
        .vocab
        .clone()
        .or_else(|| from_file.as_ref().and_then(|c| c.data.vocab.clone()));
    let data_path = a
        .data
        .data
        .clone()
        .or_else(|| from_file.as_ref().and_then(|c| c.data.train.clone()));

    if cli.dry_run && (vocab_path.is_none() || data_path.is_none()) {
        // Config-only validation.
        let run = match (&from_file, preset) {
            (Some(c), _) => c.clone(),
            (None, Some(p)) => p.run_config(Vocab::byte_level().size()),
            _ => unreachable!(),
        };
        run.validate()?;
        println!("dry run: {} ok", run.stage.name);
        return Ok(());
    }
    let (Some(vocab_path), Some(data_path)) = (vocab_path, data_path) else {
        return usage("train needs --vocab and --data (or data.vocab and data.train in the config)");
    };
    let vocab = Vocab::load(vocab_path)?;
    let pack = load_pack(&data_path, &vocab)?;
    let run = match (from_file, preset) {
        (Some(c), _) => c,
        (None, Some(p)) => fit_preset(p.run_config(vocab.size()), &a.data, &pack, 1)?,
        _ => unreachable!(),
    };
    run.validate()?;
    if run.model.vocab_size != vocab.size() {
        return usage(format!(
            "model expects {} tokens, vocab has {}",
            run.model.vocab_size,
            vocab.size()
        ));
    }
    let state = match &a.resume {
        Some(p) => {
            let s = TrainState::<f32>::load(p, run.optimizer.clone())?;
            if s.config != run.model {
                return usage("resume checkpoint model differs from the run's model section");
            }
            s
        }
        None => TrainState::new(run.model.clone(), ParamSet::init(&run.model, cli.seed), run.optimizer.clone()),
    };
    if dry_run_done(cli, &run.stage.name) {
        return Ok(());
    }
    fit_and_save(cli, &run, state, &vocab, &pack.rows, &a.data)
}

fn fit_and_save(
    cli: &Cli,
    run: &RunConfig,
    mut state: TrainState<f32>,
    vocab: &Vocab,
    rows: &[PackedRow],
    flags: &DataFlags,
) -> Result<()> {
    let heldout = flags
        .heldout
        .as_ref()
        .map(|p| load_pack(p, vocab))
        .transpose()?;
    std::fs::create_dir_all(&cli.out_dir)?;
    std::fs::write(cli.out_dir.join("run.json"), run.to_json()?)?;
    let mut metrics = BufWriter::new(File::create(cli.out_dir.join("metrics.ndjson"))?);
    let log = train_run(run, &mut state, rows, vocab, cli.seed, |rec| {
        serde_json::to_writer(&mut metrics, rec)?;
        metrics.write_all(b"\n")?;
        Ok(())
    })?;
    metrics.flush()?;
    let ckpt = cli.out_dir.join("checkpoint.elen");
    state.save(&ckpt)?;

    let mut summary = json!({
        "stage": run.stage.name,
        "checkpoint": ckpt,
        "steps": log.len(),
        "tokens_seen": state.tokens_seen,
        "final_train_loss": log.last().map(|r| r.loss),
    });
    if let Some(h) = heldout {
        let rate = run.mlm_rate(state.tokens_seen.saturating_sub(1));
        let scores: Vec<_> = run
            .curriculum
            .grid
            .iter()
            .map(|&g| {
                heldout_loss(&state.config, &state.params, &h.rows, rate, vocab, cli.seed, g)
                    .map(|l| json!({"f_head": g.f_head, "f_mlp": g.f_mlp, "loss": l}))
            })
            .collect::<elastic_core::Result<_>>()?;
        summary["heldout"] = json!(scores);
    }
    println!("{summary}");
    Ok(())
}

/// Run config for an adaptation: from --config if given, else the preset
/// fitted to the data, with the model section taken from the checkpoint.
fn adaptation_run(cli: &Cli, preset: Preset, model: &EncoderConfig, flags: &DataFlags, pack: &PackFile, epochs: Option<u32>) -> Result<RunConfig> {
    let mut run = match config_file(cli)? {
        Some(c) => c,
        None => {
            let mut base = preset.run_config(model.vocab_size);
            if let Some(e) = epochs {
                base.stage.epochs = Some(e);
            }
            let passes = base.stage.epochs.unwrap_or(1);
            fit_preset(base, flags, pack, passes)?
        }
    };
    if let Some(e) = epochs {
        if e == 0 {
            return usage("--epochs must be positive");
        }
        run.stage.epochs = Some(e);
    }
    let max_len = model.max_len.max(run.data.seq_len);
    run.model = EncoderConfig { max_len, ..model.clone() };
    run.validate()?;
    Ok(run)
}

fn adapt(cli: &Cli, a: &AdaptArgs) -> Result<()> {
    let preset = Preset::from_name(&a.preset)?;
    let src = Vocab::load(&a.src_vocab)?;
    let dst = Vocab::load(&a.vocab)?;
    let ck = Checkpoint::<f32>::load(&a.init)?;
    if ck.config.vocab_size != src.size() {
        return usage("--init checkpoint does not match --src-vocab");
    }
    let Some(data_path) = &a.data.data else {
        return usage("adapt needs --data");
    };
    let pack = load_pack(data_path, &dst)?;
    let (adapted, overlap) = swap_vocab(ck, &src, &dst, a.transplant, cli.seed)?;
    let run = adaptation_run(cli, preset, &adapted.config, &a.data, &pack, None)?;
    eprintln!("vocab overlap {overlap:.4}, transplant {}", a.transplant);
    if dry_run_done(cli, &run.stage.name) {
        return Ok(());
    }
    let state = TrainState::new(run.model.clone(), adapted.params, run.optimizer.clone());
    fit_and_save(cli, &run, state, &dst, &pack.rows, &a.data)
}

fn adapt_domain(cli: &Cli, a: &AdaptDomainArgs) -> Result<()> {
    let preset = match a.domain {
        DomainChoice::Legal => Preset::AdaptDomainLegal,
        DomainChoice::Biomed => Preset::AdaptDomainBiomed,
    };
    let vocab = Vocab::load(&a.vocab)?;
    let ck = Checkpoint::<f32>::load(&a.init)?;
    if ck.config.vocab_size != vocab.size() {
        return usage("--init checkpoint does not match --vocab");
    }
    let Some(data_path) = &a.data.data else {
        return usage("adapt-domain needs --data");
    };
    let pack = load_pack(data_path, &vocab)?;
    let run = adaptation_run(cli, preset, &ck.config, &a.data, &pack, a.epochs)?;
    if dry_run_done(cli, &run.stage.name) {
        return Ok(());
    }
    let state = TrainState::new(run.model.clone(), ck.params, run.optimizer.clone());
    fit_and_save(cli, &run, state, &vocab, &pack.rows, &a.data)
}

fn granularity(f_head: f64, f_mlp: f64, config: &EncoderConfig) -> Result<Granularity> {
    let g = Granularity::new(f_head, f_mlp).map_err(|e| CliError::Usage(e.to_string()))?;
    g.kept_heads(config.n_heads)
        .and_then(|_| g.kept_ff(config.d_ff))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(g)
}

fn slice(cli: &Cli, a: &SliceArgs) -> Result<()> {
    let ck = Checkpoint::<f32>::load(&a.ckpt)?;
    let g = granularity(a.heads, a.mlp, &ck.config)?;
    if dry_run_done(cli, "slice") {
        return Ok(());
    }
    let (params, config) = slice_params(&ck.params, &ck.config, g)?;
    let mut out_ck = Checkpoint::new(config, params);
    out_ck.meta = json!({"sliced_from": a.ckpt, "f_head": g.f_head, "f_mlp": g.f_mlp});
    let out = out_path(cli, &a.out, "sliced.elen")?;
    out_ck.save(&out)?;
    println!(
        "{}",
        json!({"out": out, "n_heads": out_ck.config.n_heads, "d_ff": out_ck.config.d_ff, "params": out_ck.params.param_count()})
    );
    Ok(())
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let ck = Checkpoint::<f32>::load(&a.ckpt)?;
    let settings = BenchSettings {
        seq_len: a.seq,
        batch: a.batch,
        repeats: a.repeats,
        warmup_iters: a.warmup,
        seed: cli.seed,
    };
    settings.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if a.seq > ck.config.max_len {
        return usage(format!("--seq {} exceeds the model's max_len {}", a.seq, ck.config.max_len));
    }
    let pairs: Vec<(f64, f64)> = match a.grid {
        GridArg::Full => vec![(1.0, 1.0)],
        GridArg::Heads => FRACTIONS.iter().map(|&f| (f, 1.0)).collect(),
        GridArg::Mlp => FRACTIONS.iter().map(|&f| (1.0, f)).collect(),
        GridArg::All => Granularity::grid().iter().map(|g| (g.f_head, g.f_mlp)).collect(),
    };
    let grid = pairs
        .into_iter()
        .map(|(h, m)| granularity(h, m, &ck.config))
        .collect::<Result<Vec<_>>>()?;
    if dry_run_done(cli, "bench") {
        return Ok(());
    }
    let report = bench_grid(&ck.config, &ck.params, &grid, &settings)?;
    let speedups = speedup_report(&report)?;
    print!("{}", speedups.to_text());
    println!("environment: {}, batch {}, repeats {}", report.environment, a.batch, a.repeats);
    let out = out_path(cli, &a.out, "bench.json")?;
    std::fs::write(
        &out,
        serde_json::to_string_pretty(&json!({"report": report, "speedup": speedups}))
            .map_err(elastic_core::Error::from)?,
    )?;
    Ok(())
}
