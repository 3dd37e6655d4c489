//! `regev`: mine regular event pairs and train the temporal relation
//! classifier, one pipeline stage per subcommand.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use regev::bootstrap::{label_candidate_contexts, Bootstrap};
use regev::cnn::{load_embeddings, predict_tokens, train, Checkpoint, EmbeddingTable};
use regev::config::RunConfig;
use regev::contexts::{
    build_positive_instances, read_instances_jsonl, sample_negative_instances, write_instances_jsonl, Instance,
    OccurrenceIndex,
};
use regev::corpus::Corpus;
use regev::eval::{
    export_graph, read_relations_tsv, relation_row, sample_high_confidence, score_before_after,
    write_annotation_sheet, write_relations_tsv, GraphFormat,
};
use regev::events::mine_noun_event_candidates;
use regev::mining::{
    accumulate_pair_stats, build_candidate_pool, read_pairs_tsv, read_stats_tsv, select_seeds, write_pairs_tsv,
    write_stats_tsv, PairKey, PairStatsMap, RegularPair,
};

const CONFIG_COPY: &str = "run_config.toml";
const NOUN_LEXICON: &str = "noun_lexicon.txt";
const EVENTS: &str = "events.tsv";
const PAIR_STATS: &str = "pair_stats.tsv";
const CANDIDATES: &str = "candidates.tsv";
const SEEDS: &str = "pairs_0.tsv";
const INSTANCES: &str = "instances.jsonl";
const MODEL: &str = "model.ckpt";
const TRAIN_REPORT: &str = "train_report.json";
const REGULAR_PAIRS: &str = "regular_pairs.tsv";
const PREDICTIONS: &str = "predictions.jsonl";
const SAMPLE: &str = "annotation_sample.csv";

#[derive(Parser, Debug)]
#[command(name = "regev", version, about = "Bootstrapped mining of regular event pairs with temporal relations")]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding stage artifacts.
    #[arg(long, global = true, env = "REGEV_RUN_DIR", default_value = "run")]
    run_dir: PathBuf,
    /// Worker threads for per-sentence stages; all cores when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mine noun event lemmas from "participate in" / "involve in" objects.
    MineLexicon,
    /// List the event phrases of every sentence.
    ExtractEvents,
    /// Count pair co-occurrences and explicit patterns; select candidates.
    MinePairs,
    /// Select seed pairs from the pattern statistics.
    Seeds,
    /// Build training instances from the seed pairs.
    BuildInstances,
    /// Train the classifier on the built instances.
    Train,
    /// Run the full bootstrapping loop from the seed pairs.
    Bootstrap,
    /// Classify contexts with a trained model.
    Predict(PredictArgs),
    /// Score BEFORE/AFTER predictions against gold relations.
    Score(ScoreArgs),
    /// Sample high-confidence predictions for manual checking.
    Sample(SampleArgs),
    /// Export accepted pairs as a directed graph.
    ExportGraph(GraphArgs),
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Model checkpoint; defaults to the trained model in the run directory.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Instances (JSON lines) to classify; defaults to every candidate-pair
    /// context of the corpus.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output path; `.tsv` writes relation rows, anything else JSON lines.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Gold relations: doc, e1, e2, BEFORE|AFTER.
    #[arg(long)]
    gold: PathBuf,
    /// Predicted relations; OTHER rows count as abstentions.
    #[arg(long)]
    predictions: PathBuf,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Classified instances; defaults to the predictions in the run directory.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Sample size; defaults to the configured size.
    #[arg(short, long)]
    n: Option<usize>,
}

#[derive(Args, Debug)]
struct GraphArgs {
    /// dot or json.
    #[arg(long, default_value = "dot")]
    format: GraphFormat,
    /// Pair list; defaults to the bootstrapped pairs in the run directory.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Output path; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// A stage input that an earlier stage should have written.
#[derive(Debug)]
struct MissingArtifact {
    path: PathBuf,
    stage: &'static str,
}

impl fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing {}; run `regev {}` first", self.path.display(), self.stage)
    }
}

impl std::error::Error for MissingArtifact {}

struct Run {
    config: RunConfig,
    dir: PathBuf,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn artifact(&self, name: &str, stage: &'static str) -> Result<PathBuf> {
        let path = self.path(name);
        if path.exists() {
            Ok(path)
        } else {
            Err(MissingArtifact { path, stage }.into())
        }
    }

    fn corpus(&self) -> Result<Corpus> {
        if self.config.corpus.is_empty() {
            return Err(regev::Error::Config("no corpus files configured (`corpus = [...]`)".into()).into());
        }
        Ok(Corpus::load(&self.config.corpus)?)
    }

    fn table(&self, oov_seed: u64) -> Result<EmbeddingTable> {
        let e = &self.config.embeddings;
        Ok(match &e.path {
            Some(p) => load_embeddings(p, e.dim, oov_seed)?,
            None => EmbeddingTable::empty(e.dim, oov_seed),
        })
    }

    fn candidates(&self) -> Result<BTreeSet<PairKey>> {
        let path = self.artifact(CANDIDATES, "mine-pairs")?;
        Ok(read_stats_tsv(open(&path)?)?.into_keys().collect())
    }

    fn seeds(&self) -> Result<Vec<RegularPair>> {
        let path = self.artifact(SEEDS, "seeds")?;
        Ok(read_pairs_tsv(open(&path)?)?)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn mine_lexicon(run: &Run) -> Result<()> {
    let corpus = run.corpus()?;
    let ev = &run.config.events;
    let lemmas = mine_noun_event_candidates(&corpus, ev.noun_min_count, ev.mode);
    write_file(&run.path(NOUN_LEXICON), |w| {
        for (lemma, count) in &lemmas {
            writeln!(w, "{lemma}\t# {count}")?;
        }
        Ok(())
    })?;
    println!("{} noun event lemmas", lemmas.len());
    Ok(())
}

fn extract_events(run: &Run) -> Result<()> {
    let corpus = run.corpus()?;
    let extractor = run.config.extractor()?;
    let mut n = 0;
    write_file(&run.path(EVENTS), |w| {
        writeln!(w, "doc\tsent\thead\tphrase")?;
        for s in corpus.sentences() {
            for p in extractor.phrases(s) {
                writeln!(w, "{}\t{}\t{}\t{}", s.doc_id(), s.sent_id(), p.head, p.phrase)?;
                n += 1;
            }
        }
        Ok(())
    })?;
    println!("{n} event mentions");
    Ok(())
}

fn mine_pairs(run: &Run) -> Result<()> {
    let corpus = run.corpus()?;
    let extractor = run.config.extractor()?;
    let mc = &run.config.mining;
    let stats = accumulate_pair_stats(&corpus, &extractor, mc);
    let pool = build_candidate_pool(&stats, mc);
    write_file(&run.path(PAIR_STATS), |w| Ok(write_stats_tsv(w, &stats)?))?;
    let candidates: PairStatsMap = stats.into_iter().filter(|(k, _)| pool.contains(k)).collect();
    write_file(&run.path(CANDIDATES), |w| Ok(write_stats_tsv(w, &candidates)?))?;
    println!("{} candidate pairs", candidates.len());
    Ok(())
}

fn seeds(run: &Run) -> Result<()> {
    let path = run.artifact(PAIR_STATS, "mine-pairs")?;
    let stats = read_stats_tsv(open(&path)?)?;
    let seeds = select_seeds(&stats, &run.config.mining);
    write_file(&run.path(SEEDS), |w| Ok(write_pairs_tsv(w, &seeds)?))?;
    println!("{} seed pairs", seeds.len());
    Ok(())
}

fn build_instances(run: &Run) -> Result<Vec<Instance>> {
    let seeds = run.seeds()?;
    let candidates = run.candidates()?;
    let corpus = run.corpus()?;
    let index = OccurrenceIndex::build(&corpus, &run.config.extractor()?, run.config.mining.max_gap);
    let builder = run.config.context_builder();
    let mut instances = build_positive_instances(&index, &seeds, &builder);
    let keys: BTreeSet<PairKey> = seeds.iter().map(|p| p.key.clone()).collect();
    let negatives = sample_negative_instances(
        &index,
        &keys,
        &candidates,
        instances.len(),
        run.config.bootstrap.negative_ratio,
        run.config.train.seed,
        &builder,
    );
    println!(
        "{} positive and {} negative instances ({} negatives short)",
        instances.len(),
        negatives.instances.len(),
        negatives.shortfall
    );
    instances.extend(negatives.instances);
    write_file(&run.path(INSTANCES), |w| Ok(write_instances_jsonl(w, &instances)?))?;
    Ok(instances)
}

fn train_model(run: &Run) -> Result<()> {
    let path = run.artifact(INSTANCES, "build-instances")?;
    let instances = read_instances_jsonl(open(&path)?)?;
    let table = run.table(run.config.seed)?;
    let out = train(&instances, &table, &run.config.train)?;
    Checkpoint::new(out.model, run.config.train.clone(), run.config.seed, out.fingerprint).save(&run.path(MODEL))?;
    write_json(&run.path(TRAIN_REPORT), &out.report)?;
    let best = &out.report.epochs[out.report.best_epoch - 1];
    println!("best epoch {} with validation accuracy {:.4}", best.epoch, best.val_accuracy);
    Ok(())
}

fn bootstrap(run: &Run) -> Result<()> {
    let seeds = run.seeds()?;
    let candidates = run.candidates()?;
    let corpus = run.corpus()?;
    let index = OccurrenceIndex::build(&corpus, &run.config.extractor()?, run.config.mining.max_gap);
    let table = run.table(run.config.seed)?;
    let boot = Bootstrap {
        index: &index,
        candidates: &candidates,
        table: &table,
        builder: run.config.context_builder(),
        train: run.config.train.clone(),
        config: run.config.bootstrap.clone(),
    };
    let out = boot.run(&seeds, Some(&run.dir))?;
    write_file(&run.path(REGULAR_PAIRS), |w| Ok(write_pairs_tsv(w, &out.accepted)?))?;
    let last = out.reports.last().expect("at least one iteration");
    Checkpoint::new(out.model, run.config.train.clone(), run.config.seed, last.data_fingerprint.clone())
        .save(&run.path(MODEL))?;
    println!(
        "{} seeds, {} new pairs over {} iterations, {} total",
        out.summary.seeds,
        out.summary.new_per_iteration.iter().sum::<usize>(),
        out.summary.iterations,
        out.summary.total
    );
    Ok(())
}

fn predict(run: &Run, args: &PredictArgs) -> Result<()> {
    let model_path = match &args.model {
        Some(p) => p.clone(),
        None => run.artifact(MODEL, "train")?,
    };
    let ck = Checkpoint::load(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let table = run.table(ck.oov_seed)?;
    let instances = match &args.input {
        Some(p) => {
            let mut instances = read_instances_jsonl(open(p)?)?;
            for inst in &mut instances {
                let pred = predict_tokens(&ck.params, &table, &inst.tokens)?;
                inst.label = pred.label;
                inst.confidence = Some(pred.confidence);
            }
            instances
        }
        None => {
            let candidates = run.candidates()?;
            let corpus = run.corpus()?;
            let index = OccurrenceIndex::build(&corpus, &run.config.extractor()?, run.config.mining.max_gap);
            let builder = run.config.context_builder();
            label_candidate_contexts(&ck.params, &table, &index, &candidates, &BTreeSet::new(), &builder, 0.0)?
                .instances
        }
    };
    let out = args.output.clone().unwrap_or_else(|| run.path(PREDICTIONS));
    if out.extension().is_some_and(|e| e == "tsv") {
        let rows: Vec<_> = instances.iter().map(relation_row).collect();
        write_file(&out, |w| Ok(write_relations_tsv(w, &rows)?))?;
    } else {
        write_file(&out, |w| Ok(write_instances_jsonl(w, &instances)?))?;
    }
    println!("{} contexts classified", instances.len());
    Ok(())
}

fn score(args: &ScoreArgs) -> Result<()> {
    let gold = read_relations_tsv(open(&args.gold)?, false).with_context(|| format!("reading {}", args.gold.display()))?;
    let pred = read_relations_tsv(open(&args.predictions)?, true)
        .with_context(|| format!("reading {}", args.predictions.display()))?;
    let report = score_before_after(&pred, &gold)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn sample(run: &Run, args: &SampleArgs) -> Result<()> {
    let input = match &args.input {
        Some(p) => p.clone(),
        None => run.artifact(PREDICTIONS, "predict")?,
    };
    let instances = read_instances_jsonl(open(&input)?)?;
    let eval = &run.config.eval;
    let picked = sample_high_confidence(&instances, eval.min_confidence, args.n.unwrap_or(eval.sample_size), run.config.seed);
    let out = args.output.clone().unwrap_or_else(|| run.path(SAMPLE));
    write_file(&out, |w| Ok(write_annotation_sheet(w, &picked)?))?;
    println!("{} contexts sampled", picked.len());
    Ok(())
}

fn export(run: &Run, args: &GraphArgs) -> Result<()> {
    let path = match &args.pairs {
        Some(p) => p.clone(),
        None => run.artifact(REGULAR_PAIRS, "bootstrap")?,
    };
    let pairs = read_pairs_tsv(open(&path)?)?;
    let text = export_graph(&pairs, args.format)?;
    let mut w = output_writer(args.output.as_deref())?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let run = Run {
        config: load_config(cli)?,
        dir: cli.run_dir.clone(),
    };
    if let Command::Score(args) = &cli.command {
        return score(args);
    }
    fs::create_dir_all(&run.dir).with_context(|| format!("cannot create {}", run.dir.display()))?;
    fs::write(run.path(CONFIG_COPY), run.config.to_toml()?)?;
    match &cli.command {
        Command::MineLexicon => mine_lexicon(&run),
        Command::ExtractEvents => extract_events(&run),
        Command::MinePairs => mine_pairs(&run),
        Command::Seeds => seeds(&run),
        Command::BuildInstances => build_instances(&run).map(|_| ()),
        Command::Train => train_model(&run),
        Command::Bootstrap => bootstrap(&run),
        Command::Predict(args) => predict(&run, args),
        Command::Sample(args) => sample(&run, args),
        Command::ExportGraph(args) => export(&run, args),
        Command::Score(_) => unreachable!("handled above"),
    }
}

/// 1 for usage and configuration problems, 3 for numeric failures, 2 for
/// every other data or I/O error.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<MissingArtifact>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<regev::Error>() {
            return match e {
                regev::Error::Config(_) => 1,
                regev::Error::Numeric { .. } => 3,
                _ => 2,
            };
        }
        if cause.is::<rayon::ThreadPoolBuildError>() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
