use std::fs;
use std::io::{self, BufRead};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chartlstm::autodiff::Tape;
use chartlstm::data::{load_definitions, load_entailment, load_word_list, tokenize, DefinitionExample, EntailmentExample};
use chartlstm::embeddings::{load_pretrained, pca_reduce, read_vectors, EmbeddingTable, Vocabulary};
use chartlstm::encoders::{Encoder, EncoderKind};
use chartlstm::gradsuite::{gradient_suite, SuiteOptions};
use chartlstm::model::{build_vocabulary, index_definitions, index_pairs, Dataset, Model, OutputSpace, Task, EMBEDDINGS};
use chartlstm::training::{load_checkpoint, save_checkpoint, train_from, DevTemperature, Progress, TrainConfig};
use chartlstm::{Error, Result};

#[derive(Parser)]
#[command(name = "chartlstm", version, about = "Latent-tree Tree-LSTM sentence encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its best checkpoint.
    Train(TrainArgs),
    /// Report task metrics of a checkpoint on labelled data.
    Eval(EvalArgs),
    /// Print induced binary trees for raw sentences.
    Parse(ParseArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Rank reverse-dictionary targets against a candidate list.
    Rank(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Entailment,
    Revdict,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Entailment => Task::Entailment,
            TaskArg::Revdict => Task::Revdict,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DevTempArg {
    Current,
    Floor,
}

fn parse_encoder(s: &str) -> std::result::Result<EncoderKind, String> {
    s.parse::<EncoderKind>().map_err(|e| e.to_string())
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "entailment")]
    task: TaskArg,
    #[arg(long, value_parser = parse_encoder, default_value = "tree-unsupervised")]
    encoder: EncoderKind,
    /// Word embedding dimension.
    #[arg(long, default_value_t = 100)]
    din: usize,
    /// Sentence embedding dimension.
    #[arg(long, default_value_t = 100)]
    dout: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long = "batch", default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 0.005)]
    tfloor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gradient-norm clipping threshold; 0 disables clipping.
    #[arg(long, default_value_t = 5.0)]
    clip: f64,
    #[arg(long, value_enum, default_value = "current")]
    dev_temperature: DevTempArg,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// Test files scored with the best checkpoint; may be repeated.
    #[arg(long)]
    test: Vec<PathBuf>,
    /// Pretrained input vectors (entailment) or output vectors (revdict).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Candidate word list for ranking test files.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Best checkpoint path; the final state goes to `<path>.last`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Continue from a saved checkpoint instead of starting afresh.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Must match the checkpoint's task when given.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    test: Vec<PathBuf>,
    /// Output vectors, required for the reverse dictionary.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    candidates: Option<PathBuf>,
}

#[derive(Args)]
struct ParseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Sentences, one per line; standard input when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory for one Graphviz file per sentence.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Restrict encoder checks to one encoder.
    #[arg(long, value_parser = parse_encoder)]
    encoder: Option<EncoderKind>,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 6)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a, false),
        Command::Rank(a) => cmd_eval(a, true),
        Command::Parse(a) => cmd_parse(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

enum Corpus {
    Entailment(Vec<EntailmentExample>),
    RevDict(Vec<DefinitionExample>),
}

impl Corpus {
    fn load(task: Task, path: &Path) -> Result<Corpus> {
        Ok(match task {
            Task::Entailment => Corpus::Entailment(load_entailment(path)?),
            Task::Revdict => Corpus::RevDict(load_definitions(path)?),
        })
    }

    fn sentences(&self) -> Vec<&[String]> {
        match self {
            Corpus::Entailment(v) => v.iter().flat_map(|e| [e.premise.as_slice(), e.hypothesis.as_slice()]).collect(),
            Corpus::RevDict(v) => v.iter().map(|d| d.definition.as_slice()).collect(),
        }
    }

    fn index(&self, vocab: &Vocabulary, output: Option<&OutputSpace>) -> Result<Dataset> {
        match self {
            Corpus::Entailment(v) => index_pairs(vocab, v),
            Corpus::RevDict(v) => {
                let out = output.ok_or_else(|| Error::Config("reverse dictionary needs --embeddings".into()))?;
                index_definitions(vocab, out, v)
            }
        }
    }
}

fn output_space(path: &Path) -> Result<OutputSpace> {
    let (vocab, table) = read_vectors(path, None)?;
    Ok(OutputSpace {
        vocab,
        table: Arc::new(table),
    })
}

/// Input table for the reverse dictionary: the output vectors reduced to
/// `din` dimensions, kept frozen.
fn revdict_inputs(output: &OutputSpace, vocab: &Vocabulary, din: usize) -> Result<EmbeddingTable> {
    let reduced = if din == output.table.dim {
        (*output.table).clone()
    } else {
        pca_reduce(&output.table, din)?
    };
    let mut table = reduced.remap(&output.vocab, vocab);
    table.trainable = false;
    Ok(table)
}

fn candidate_rows(path: &Path, output: &OutputSpace) -> Result<Vec<usize>> {
    load_word_list(path)?
        .iter()
        .map(|w| {
            output
                .vocab
                .get(w)
                .ok_or_else(|| Error::Config(format!("candidate `{w}` has no output embedding")))
        })
        .collect()
}

fn report(model: &Model, label: &str, data: &Dataset, candidates: Option<&[usize]>, t: f64) -> Result<()> {
    match data {
        Dataset::Entailment(items) => {
            let acc = model.accuracy(items, t)?;
            println!("{label}: accuracy {:.2}% ({} pairs)", 100.0 * acc, items.len());
            println!("file={label}\naccuracy={acc:.4}\ncount={}", items.len());
        }
        Dataset::RevDict(items) => {
            let r = model.rank(items, candidates, t)?;
            println!("{label}: {r}");
            println!("file={label}\n{}", r.to_records());
        }
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<ExitCode> {
    let resumed = a.resume.as_deref().map(load_checkpoint).transpose()?;
    let config = match &resumed {
        Some(ck) => TrainConfig {
            total_epochs: a.epochs.max(ck.progress.epochs_completed),
            ..ck.config.clone()
        },
        None => TrainConfig {
            task: a.task.into(),
            encoder: a.encoder,
            din: a.din,
            dout: a.dout,
            lr: a.lr,
            batch_size: a.batch,
            total_epochs: a.epochs,
            patience: a.patience,
            tfloor: a.tfloor,
            seed: a.seed,
            clip: (a.clip > 0.0).then_some(a.clip),
            dev_temperature: match a.dev_temperature {
                DevTempArg::Current => DevTemperature::Current,
                DevTempArg::Floor => DevTemperature::Floor,
            },
        },
    };
    config.validate()?;
    let task = config.task;

    let train_corpus = Corpus::load(task, &a.train)?;
    let dev_corpus = Corpus::load(task, &a.dev)?;
    let tests = a
        .test
        .iter()
        .map(|p| Ok((p.display().to_string(), Corpus::load(task, p)?)))
        .collect::<Result<Vec<_>>>()?;

    let output = match task {
        Task::Revdict => {
            let path = a
                .embeddings
                .as_deref()
                .ok_or_else(|| Error::Config("reverse dictionary needs --embeddings".into()))?;
            Some(output_space(path)?)
        }
        Task::Entailment => None,
    };

    let (model, progress) = match resumed {
        Some(ck) => (ck.model(output.clone())?, ck.progress.clone()),
        None => {
            let vocab = build_vocabulary(
                train_corpus
                    .sentences()
                    .into_iter()
                    .chain(dev_corpus.sentences())
                    .chain(tests.iter().flat_map(|(_, c)| c.sentences())),
            );
            let table = match (task, &a.embeddings, &output) {
                (Task::Revdict, _, Some(out)) => Some(revdict_inputs(out, &vocab, config.din)?),
                (Task::Entailment, Some(path), _) => Some(load_pretrained(path, &vocab, config.din)?),
                _ => None,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let model = Model::new(task, config.encoder, vocab, table, config.din, config.dout, output.clone(), &mut rng)?;
            (model, Progress::default())
        }
    };

    let train_set = train_corpus.index(&model.vocab, output.as_ref())?;
    let dev_set = dev_corpus.index(&model.vocab, output.as_ref())?;
    let test_sets = tests
        .iter()
        .map(|(name, c)| Ok((name.clone(), c.index(&model.vocab, output.as_ref())?)))
        .collect::<Result<Vec<_>>>()?;
    let candidates = match (&a.candidates, &output) {
        (Some(p), Some(out)) => Some(candidate_rows(p, out)?),
        _ => None,
    };

    let outcome = train_from(model, &config, progress, &train_set, &dev_set, |log| println!("{log}"))?;
    save_checkpoint(&outcome.best, &a.checkpoint)?;
    let mut last_path = a.checkpoint.clone().into_os_string();
    last_path.push(".last");
    save_checkpoint(&outcome.last, &last_path)?;
    if outcome.stopped_early {
        println!("stopped early after epoch {}", outcome.last.progress.epochs_completed);
    }

    let best = outcome.best.model(output)?;
    let t = outcome.best.config.dev_temperature(outcome.best.progress.epoch_fraction)?;
    for (name, data) in &test_sets {
        report(&best, name, data, candidates.as_deref(), t)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs, rank_only: bool) -> Result<ExitCode> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let task = ck.config.task;
    if let Some(t) = a.task {
        let wanted: Task = t.into();
        if wanted != task {
            return Err(Error::Config(format!("checkpoint is for {task}, not {wanted}")));
        }
    }
    if rank_only && task != Task::Revdict {
        return Err(Error::Config("rank needs a reverse-dictionary checkpoint".into()));
    }
    let output = match (task, &a.embeddings) {
        (Task::Revdict, Some(p)) => Some(output_space(p)?),
        (Task::Revdict, None) => return Err(Error::Config("reverse dictionary needs --embeddings".into())),
        _ => None,
    };
    let candidates = match (&a.candidates, &output) {
        (Some(p), Some(out)) => Some(candidate_rows(p, out)?),
        _ => None,
    };
    let files: Vec<&PathBuf> = a.train.iter().chain(&a.dev).chain(&a.test).collect();
    if files.is_empty() {
        return Err(Error::Config("no data files given (use --train, --dev or --test)".into()));
    }
    let model = ck.model(output)?;
    let t = ck.config.dev_temperature(ck.progress.epoch_fraction)?;
    for path in files {
        let data = Corpus::load(task, path)?.index(&model.vocab, model.output.as_ref())?;
        report(&model, &path.display().to_string(), &data, candidates.as_deref(), t)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_parse(a: ParseArgs) -> Result<ExitCode> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let kind = ck.config.encoder;
    if !matches!(kind, EncoderKind::TreeUnsupervised | EncoderKind::TreeLeft | EncoderKind::TreeRight) {
        return Err(Error::Config(format!("encoder `{kind}` does not produce trees from raw text")));
    }
    let store = ck.store()?;
    let encoder = Encoder::from_store(kind, &store, ck.config.din, ck.config.dout)?;
    let emb = store.tensor(store.id(EMBEDDINGS)?);
    let t = ck.temperature()?;
    let din = ck.config.din;

    let lines: Vec<String> = match &a.input {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?
            .lines()
            .map(str::to_owned)
            .collect(),
        None => io::stdin().lock().lines().collect::<io::Result<_>>().map_err(|e| Error::Io {
            path: "<stdin>".into(),
            source: e,
        })?,
    };
    if let Some(dir) = &a.dot {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
    }
    for (k, line) in lines.iter().enumerate() {
        let tokens = tokenize(line);
        if tokens.is_empty() {
            continue;
        }
        let mut tape = Tape::new();
        let words: Vec<_> = tokens
            .iter()
            .map(|w| {
                let row = ck.vocab.lookup(w).unwrap_or(0);
                tape.constant_vector(emb.value[row * din..(row + 1) * din].to_vec())
            })
            .collect();
        let enc = encoder.encode(&mut tape, &store, &words, None, t)?;
        let tree = encoder
            .tree_for(tokens.len(), enc.chart.as_ref())
            .ok_or_else(|| Error::Config("encoder produced no tree".into()))?;
        println!("{}", tree.to_bracketed(&tokens));
        if let Some(dir) = &a.dot {
            let path = dir.join(format!("sentence-{}.dot", k + 1));
            fs::write(&path, tree.to_dot(&tokens)).map_err(|e| Error::Io { path, source: e })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let opts = SuiteOptions {
        n: a.n,
        dim: a.dim,
        op_trials: a.trials,
        seed: a.seed,
        encoders: a.encoder.map_or_else(|| EncoderKind::ALL.to_vec(), |k| vec![k]),
        ops: true,
        heads: true,
    };
    if opts.n == 0 || opts.dim == 0 {
        return Err(Error::Config("--n and --dim must be positive".into()));
    }
    let checks = gradient_suite(&opts)?;
    let mut worst = 0.0f64;
    for c in &checks {
        worst = worst.max(c.max_rel_err);
        let status = if c.passed() { "ok" } else { "FAIL" };
        println!("{} max_rel_err={:e} entries={} {status}", c.name, c.max_rel_err, c.entries);
    }
    println!("max_rel_err={worst:e}");
    Ok(if checks.iter().all(|c| c.passed()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
