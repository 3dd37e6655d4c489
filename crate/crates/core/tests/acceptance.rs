//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so the report is printed whether or not output is captured.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regev::bootstrap::{judge, Bootstrap, BootstrapConfig, PairVoteTally, Rejection};
use regev::cnn::{
    adadelta_update, forward, gradient_check, predict_tokens, train, EmbeddingTable, Example, ModelParams, ModelShape,
    TrainConfig, VectorCache, PAD_TOKEN,
};
use regev::contexts::{dependency_path_context, ContextBuilder, Label, OccurrenceIndex};
use regev::corpus::{parse_conllu, write_conllu, DependencyEdge, Sentence, Token};
use regev::eval::{score_before_after, Relation, RelationRow};
use regev::events::EventExtractor;
use regev::mining::{
    accumulate_pair_stats, build_candidate_pool, select_seeds, MiningConfig, PairKey, PairStats,
    PairStatsMap, Provenance,
};
use regev::synthetic::{marker_dataset, planted_corpus, planted_embeddings, PlantedLayout};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn random_tokens<R: Rng>(rng: &mut R, vocab: usize, max_len: usize) -> Vec<String> {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| format!("t{}", rng.gen_range(0..vocab))).collect()
}

/// True when shifting every convolution bias by `margin` changes whether a
/// pooled window passes the ReLU, so the loss has a kink within `margin`.
fn near_kink(model: &ModelParams, cache: &VectorCache<'_>, batch: &[Example], margin: f64) -> bool {
    let gates = |shift: f64| -> Vec<Vec<(usize, bool)>> {
        let mut m = model.clone();
        m.conv_b.iter_mut().for_each(|b| *b += shift);
        batch.iter().map(|e| forward(&m, cache, &e.seq, None).unwrap().argmax).collect()
    };
    let base = gates(0.0);
    gates(margin) != base || gates(-margin) != base
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let (mut checked, mut redrawn) = (0, 0);
    while checked < 20 {
        let dim = rng.gen_range(1..=8);
        let window = rng.gen_range(1..=4);
        let filters = rng.gen_range(1..=5);
        let table = EmbeddingTable::empty(dim, checked);
        let model = ModelParams::random(ModelShape::new(dim, window, filters), 0.5, &mut rng);
        let mut cache = VectorCache::new(&table);
        let labels = [Label::After, Label::Before, Label::Other];
        let batch: Vec<Example> = (0..3)
            .map(|i| Example::new(cache.encode(&random_tokens(&mut rng, 20, 9)).unwrap(), labels[i]).unwrap())
            .collect();
        let masks: Vec<Vec<f64>> = (0..batch.len())
            .map(|_| (0..filters).map(|_| if rng.gen_bool(0.5) { 2.0 } else { 0.0 }).collect())
            .collect();
        if near_kink(&model, &cache, &batch, 1e-4) {
            redrawn += 1;
            continue;
        }
        let plain = gradient_check(&model, &cache, &batch, None, 1e-5).map_err(|e| e.to_string())?;
        let dropped = gradient_check(&model, &cache, &batch, Some(&masks), 1e-5).map_err(|e| e.to_string())?;
        worst = worst.max(plain).max(dropped);
        checked += 1;
    }
    ensure!(worst < 1e-4, "max relative error {worst:.3e}");
    Ok(format!("max relative error {worst:.2e} over 20 models ({redrawn} redrawn at a kink)"))
}

fn cnn_contracts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let table = EmbeddingTable::empty(6, 5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let model = ModelParams::random(ModelShape::new(6, 3, 4), 2.0, &mut rng);
        let p = predict_tokens(&model, &table, &random_tokens(&mut rng, 50, 12)).unwrap();
        worst = worst.max((p.probs.iter().sum::<f64>() - 1.0).abs());
        ensure!(p.probs.iter().all(|&x| x >= 0.0), "negative probability");
    }
    ensure!(worst <= 1e-9, "softmax sum off by {worst:e}");

    let mut model = ModelParams::random(ModelShape::new(6, 5, 4), 1.0, &mut rng);
    model.conv_b.iter_mut().for_each(|b| *b += 5.0);
    let base = toks("police arrested scores after attacks");
    let p0 = predict_tokens(&model, &table, &base).unwrap();
    for k in 1..=10 {
        let mut padded = base.clone();
        padded.extend(std::iter::repeat_n(PAD_TOKEN.to_string(), k));
        ensure!(predict_tokens(&model, &table, &padded).unwrap() == p0, "padding by {k} changed the output");
    }

    let zero = ModelParams::zeros(ModelShape::new(6, 5, 4));
    let p = predict_tokens(&zero, &table, &base).unwrap();
    ensure!(p.probs == [1.0 / 3.0; 3], "zero model gives {:?}", p.probs);

    let (mut x, mut eg2, mut edx2) = ([0.0], [0.0], [0.0]);
    adadelta_update(&mut x, &[1.0], &mut eg2, &mut edx2, 0.95, 1e-6);
    ensure!((x[0] + 0.004472).abs() <= 1e-6, "first Adadelta step {}", x[0]);
    Ok(format!("softmax error {worst:.1e}, first step {:.6}", x[0]))
}

fn training_sanity() -> Outcome {
    let data = marker_dataset(300, 11);
    let table = EmbeddingTable::empty(300, 3);
    let config = TrainConfig::default();
    let a = train(&data, &table, &config).map_err(|e| e.to_string())?;
    let b = train(&data, &table, &config).map_err(|e| e.to_string())?;
    let best = a.report.epochs.iter().map(|e| e.val_accuracy).fold(0.0, f64::max);
    ensure!(best >= 0.95, "best validation accuracy {best:.3}");
    ensure!(a.report.batch_losses.len() == b.report.batch_losses.len(), "loss sequence lengths differ");
    let drift = a
        .report
        .batch_losses
        .iter()
        .zip(&b.report.batch_losses)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    ensure!(drift <= 1e-12, "loss sequences diverge by {drift:e}");
    Ok(format!(
        "validation accuracy {best:.3} at epoch {}, loss divergence {drift:e}",
        a.report.best_epoch
    ))
}

fn stats(forward: u64, backward: u64, cooccur: u64) -> PairStatsMap {
    let key = PairKey::new("attack|pat:town", "flee|sbj:resident").unwrap().0;
    PairStatsMap::from([(
        key,
        PairStats {
            pattern_forward: forward,
            pattern_backward: backward,
            cooccur,
        },
    )])
}

fn tally(f: u64, b: u64, o: u64) -> PairVoteTally {
    PairVoteTally {
        n_forward: f,
        n_backward: b,
        n_other: o,
    }
}

fn threshold_suite() -> Outcome {
    let mc = MiningConfig::default();
    let in_pool = |f, b, c| !build_candidate_pool(&stats(f, b, c), &mc).is_empty();
    let is_seed = |f, b| !select_seeds(&stats(f, b, 0), &mc).is_empty();
    ensure!(!in_pool(0, 0, 100), "co-occurrence 100 admitted");
    ensure!(in_pool(0, 0, 101), "co-occurrence 101 rejected");
    ensure!(!in_pool(2, 0, 0), "pattern count 2 admitted");
    ensure!(in_pool(3, 0, 0), "pattern count 3 rejected");
    ensure!(!in_pool(9, 1, 0) && !is_seed(9, 1), "dominance 9 of 10 admitted");
    ensure!(!is_seed(9, 0), "seed with 9 patterns admitted");
    ensure!(is_seed(10, 0), "seed with 10 patterns rejected");

    let bc = BootstrapConfig::default();
    let cases = [
        (tally(22, 14, 4), 0, Err(Rejection::Majority), "majority 0.55"),
        (tally(24, 6, 10), 0, Ok(()), "majority 0.60"),
        (tally(14, 2, 4), 0, Err(Rejection::Support), "support 14 at k=0"),
        (tally(15, 2, 3), 0, Ok(()), "support 15 at k=0"),
        (tally(19, 2, 4), 1, Err(Rejection::Support), "support 19 at k=1"),
        (tally(20, 2, 3), 1, Ok(()), "support 20 at k=1"),
        (tally(30, 10, 10), 0, Err(Rejection::Difference), "difference exactly 0.4"),
        (tally(31, 10, 9), 0, Ok(()), "difference 0.42"),
    ];
    for (t, k, want, name) in cases {
        let got = judge(&t, k, &bc).map(|_| ());
        ensure!(got == want, "{name}: expected {want:?}, got {got:?}");
        // votes counted in the other direction give the mirrored decision
        let mirrored = judge(&tally(t.n_backward, t.n_forward, t.n_other), k, &bc).map(|_| ());
        ensure!(mirrored == want, "{name} mirrored: expected {want:?}, got {mirrored:?}");
    }
    Ok("15 boundaries".into())
}

fn sentence(rows: &[(&str, usize, &str)]) -> Sentence {
    let tokens = rows
        .iter()
        .enumerate()
        .map(|(i, r)| Token::new(i + 1, r.0, &r.0.to_lowercase(), "X"))
        .collect();
    let edges = rows.iter().enumerate().map(|(i, r)| DependencyEdge::new(r.1, i + 1, r.2)).collect();
    Sentence::new("d", "s", tokens, edges).unwrap()
}

fn flat(n: usize) -> Sentence {
    let rows: Vec<(String, usize, &str)> = (1..=n).map(|i| (format!("w{i}"), usize::from(i != 1), "dep")).collect();
    let rows: Vec<(&str, usize, &str)> = rows.iter().map(|(f, h, r)| (f.as_str(), *h, *r)).collect();
    sentence(&rows)
}

/// Path through the lowest common ancestor, from parent pointers alone.
fn ancestor_path(heads: &[usize], i: usize, j: usize) -> Vec<usize> {
    let chain = |mut v: usize| {
        let mut out = vec![v];
        while heads[v - 1] != 0 {
            v = heads[v - 1];
            out.push(v);
        }
        out
    };
    let (ci, cj) = (chain(i), chain(j));
    let lca = *ci.iter().find(|v| cj.contains(v)).unwrap();
    let mut path: Vec<usize> = ci.iter().copied().take_while(|&v| v != lca).collect();
    path.push(lca);
    let tail: Vec<usize> = cj.iter().copied().take_while(|&v| v != lca).collect();
    path.extend(tail.into_iter().rev());
    path
}

fn graph_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pairs = 0;
    for t in 0..100 {
        let n = rng.gen_range(2..=12);
        let mut order: Vec<usize> = (1..=n).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut heads = vec![0; n];
        for k in 1..n {
            heads[order[k] - 1] = order[rng.gen_range(0..k)];
        }
        let rows: Vec<(String, usize)> = (0..n).map(|i| (format!("n{i}"), heads[i])).collect();
        let rows: Vec<(&str, usize, &str)> = rows.iter().map(|(f, h)| (f.as_str(), *h, "dep")).collect();
        let s = sentence(&rows);
        for i in 1..=n {
            for j in 1..=n {
                if i != j {
                    let bfs = s.shortest_path(i, j).unwrap();
                    ensure!(bfs == ancestor_path(&heads, i, j), "tree {t}: path {i}->{j} is {bfs:?}");
                    pairs += 1;
                }
            }
        }
    }

    let police = sentence(&[
        ("Police", 2, "nsubj"),
        ("arrested", 0, "root"),
        ("scores", 2, "dobj"),
        ("after", 5, "case"),
        ("attacks", 2, "nmod"),
    ]);
    let adverb = sentence(&[
        ("Police", 3, "nsubj"),
        ("quickly", 3, "advmod"),
        ("arrested", 0, "root"),
        ("scores", 3, "dobj"),
        ("after", 6, "case"),
        ("attacks", 3, "nmod"),
    ]);
    let left = sentence(&[("left", 0, "root"), ("and", 3, "cc"), ("returned", 1, "conj")]);
    let stormed = sentence(&[
        ("they", 2, "nsubj"),
        ("stormed", 0, "root"),
        ("the", 4, "det"),
        ("building", 2, "dobj"),
        ("and", 7, "cc"),
        ("then", 7, "advmod"),
        ("arrested", 2, "conj"),
        ("the", 9, "det"),
        ("suspect", 7, "dobj"),
        (".", 2, "punct"),
    ]);
    let ate = sentence(&[
        ("people", 2, "nsubj"),
        ("ate", 0, "root"),
        ("the", 4, "det"),
        ("dinner", 2, "dobj"),
        ("after", 6, "mark"),
        ("washing", 2, "prepc_after"),
        ("the", 8, "det"),
        ("hands", 6, "dobj"),
        (".", 2, "punct"),
    ]);
    let said = sentence(&[
        ("He", 2, "nsubj"),
        ("said", 0, "root"),
        ("that", 5, "mark"),
        ("troops", 5, "nsubj"),
        ("attacked", 2, "ccomp"),
        ("and", 8, "cc"),
        ("rebels", 8, "nsubj"),
        ("fled", 5, "conj"),
    ]);
    let protest = sentence(&[
        ("The", 2, "det"),
        ("protest", 6, "nsubj"),
        ("that", 4, "nsubj"),
        ("began", 2, "acl"),
        ("Monday", 4, "obl"),
        ("ended", 0, "root"),
        ("Friday", 6, "obl"),
    ]);
    let two = sentence(&[("a", 0, "root"), ("b", 1, "dep")]);
    let wide = flat(12);
    let fixtures: Vec<(&Sentence, usize, usize, usize, &str)> = vec![
        (&police, 2, 5, 40, "police arrested scores after attacks"),
        (&police, 5, 2, 40, "police arrested scores after attacks"),
        (&adverb, 3, 6, 40, "police quickly arrested scores after attacks"),
        (&left, 1, 3, 40, "left and returned"),
        (&two, 1, 2, 40, "a b"),
        (&stormed, 2, 7, 40, "they stormed building and then arrested suspect ."),
        (&ate, 2, 6, 40, "people ate dinner after washing hands ."),
        (&said, 5, 8, 40, "that troops attacked and rebels fled"),
        (&protest, 4, 6, 40, "the protest that began monday ended friday"),
        (&wide, 5, 7, 5, "w1 w4 w5 w6 w7"),
    ];
    for (n, (s, i, j, max_len, want)) in fixtures.iter().enumerate() {
        let got = dependency_path_context(s, *i, *j, 10, *max_len).ok_or(format!("fixture {n} rejected"))?;
        ensure!(got == toks(want), "fixture {n}: {got:?}");
    }
    Ok(format!("{pairs} tree paths, {} context fixtures", fixtures.len()))
}

const DESK_COOCCUR_MIN: u64 = 20;

fn run_micro_bootstrap(dir: &Path) -> Result<(Vec<(String, String, Provenance)>, usize), String> {
    let pc = planted_corpus(&PlantedLayout::default(), 7);
    let extractor = EventExtractor::default();
    let mc = MiningConfig {
        cooccur_min: DESK_COOCCUR_MIN,
        ..MiningConfig::default()
    };
    let stats = accumulate_pair_stats(&pc.corpus, &extractor, &mc);
    let pool = build_candidate_pool(&stats, &mc);
    let seeds = select_seeds(&stats, &mc);
    let index = OccurrenceIndex::build(&pc.corpus, &extractor, mc.max_gap);
    let table = planted_embeddings(300, 7);
    let boot = Bootstrap {
        index: &index,
        candidates: &pool,
        table: &table,
        builder: ContextBuilder::default(),
        train: TrainConfig::default(),
        config: BootstrapConfig {
            max_iterations: 3,
            ..BootstrapConfig::default()
        },
    };
    let out = boot.run(&seeds, Some(dir)).map_err(|e| e.to_string())?;
    let accepted = out
        .accepted
        .iter()
        .map(|p| (p.antecedent().to_string(), p.consequent().to_string(), p.provenance))
        .collect();
    Ok((accepted, seeds.len()))
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn micro_bootstrap() -> Outcome {
    let pc = planted_corpus(&PlantedLayout::default(), 7);
    ensure!(pc.corpus.num_sentences() == 500, "corpus has {} sentences", pc.corpus.num_sentences());
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let (accepted, n_seeds) = run_micro_bootstrap(&a)?;
    run_micro_bootstrap(&b)?;
    ensure!(n_seeds == 2, "{n_seeds} seeds selected");

    let planted: BTreeSet<(String, String)> = pc.planted.iter().skip(2).cloned().collect();
    let new: Vec<&(String, String, Provenance)> = accepted.iter().filter(|p| p.2 != Provenance::Seed).collect();
    let recovered = new.iter().filter(|p| planted.contains(&(p.0.clone(), p.1.clone()))).count();
    let spurious = new.len() - recovered;
    let late = new.iter().filter(|p| matches!(p.2, Provenance::Iteration(k) if k > 3)).count();
    ensure!(late == 0, "{late} pairs accepted after iteration 3");
    ensure!(recovered >= 3, "recovered {recovered} planted pairs");
    ensure!(spurious <= 1, "{spurious} spurious acceptances");

    let (fa, fb) = (dir_contents(&a), dir_contents(&b));
    ensure!(!fa.is_empty() && fa == fb, "run artifacts differ between identical runs");
    Ok(format!(
        "recovered {recovered}/3 planted pairs, {spurious} spurious, {} identical artifacts",
        fa.len()
    ))
}

fn row(doc: &str, a: &str, b: &str, r: Option<Relation>) -> RelationRow {
    RelationRow::new(doc, a, b, r)
}

fn scorer() -> Outcome {
    use Relation::{After, Before};
    let gold = vec![
        row("d", "a", "b", Some(Before)),
        row("d", "c", "e", Some(After)),
        row("d", "f", "g", Some(Before)),
        row("d2", "a", "b", Some(Before)),
    ];
    // second prediction is the swapped form of the gold AFTER row
    let pred = vec![row("d", "a", "b", Some(Before)), row("d", "e", "c", Some(Before))];
    let r = score_before_after(&pred, &gold).map_err(|e| e.to_string())?;
    ensure!((r.tp, r.fp, r.fn_) == (2, 0, 2), "counts {:?}", (r.tp, r.fp, r.fn_));
    ensure!(r.precision == 1.0 && r.recall == 0.5, "P={} R={}", r.precision, r.recall);
    ensure!(r.f1 == 2.0 * 1.0 * 0.5 / 1.5, "F1={}", r.f1);

    let pred = vec![
        row("d", "b", "a", Some(After)),
        row("d", "c", "e", Some(Before)),
        row("d", "f", "g", None),
        row("d3", "x", "y", Some(Before)),
    ];
    let r = score_before_after(&pred, &gold).map_err(|e| e.to_string())?;
    ensure!(
        (r.tp, r.fp, r.fn_, r.abstentions) == (1, 2, 3, 1),
        "counts {:?}",
        (r.tp, r.fp, r.fn_, r.abstentions)
    );
    ensure!(r.precision == 1.0 / 3.0 && r.recall == 0.25, "P={} R={}", r.precision, r.recall);
    let f1 = 2.0 * (1.0 / 3.0) * 0.25 / (1.0 / 3.0 + 0.25);
    ensure!(r.f1 == f1, "F1={}", r.f1);
    Ok("2 fixtures".into())
}

const CONLLU: &str = "# newdoc id = nyt_001\n\
# sent_id = nyt_001.1\n\
# text = Police arrested scores after attacks.\n\
1\tPolice\tpolice\tNOUN\tNNS\tNumber=Plur\t2\tnsubj\t_\tNER=ORGANIZATION\n\
2\tarrested\tarrest\tVERB\tVBD\tTense=Past\t0\troot\t_\t_\n\
3\tscores\tscore\tNOUN\tNNS\t_\t2\tdobj\t_\t_\n\
4\tafter\tafter\tADP\tIN\t_\t5\tcase\t_\t_\n\
5\tattacks\tattack\tNOUN\tNNS\t_\t2\tnmod\t_\tSpaceAfter=No\n\
6\t.\t.\tPUNCT\t.\t_\t2\tpunct\t_\t_\n\
\n\
# sent_id = nyt_001.2\n\
1\tThey\tthey\tPRON\tPRP\t_\t2\tnsubj\t_\t_\n\
2\tfled\tflee\tVERB\tVBD\t_\t0\troot\t_\t_\n\
\n";

fn format_round_trips() -> Outcome {
    let sentences = parse_conllu(CONLLU.as_bytes(), "nyt.conllu").map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    write_conllu(&sentences, &mut out).map_err(|e| e.to_string())?;
    ensure!(out == CONLLU.as_bytes(), "CoNLL-U output differs:\n{}", String::from_utf8_lossy(&out));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut table = EmbeddingTable::empty(300, 0);
    for w in ["police", "arrested", "Attacks", "naïve", "</s>"] {
        let v: Vec<f32> = (0..300).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        table.insert(w, &v).map_err(|e| e.to_string())?;
    }
    let mut first = Vec::new();
    table.write_binary(&mut first).map_err(|e| e.to_string())?;
    let back = EmbeddingTable::read_binary(&mut first.as_slice()).map_err(|e| e.to_string())?;
    let mut second = Vec::new();
    back.write_binary(&mut second).map_err(|e| e.to_string())?;
    ensure!(first == second, "binary embeddings differ after a round trip");
    for (w, v) in table.iter() {
        ensure!(back.get(w) == Some(v), "vector for {w} changed");
    }
    Ok(format!("{} CoNLL-U bytes, {} embedding bytes", out.len(), first.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 8] = [
        ("gradient oracle", gradient_oracle, 30),
        ("cnn contracts", cnn_contracts, 5),
        ("training sanity", training_sanity, 60),
        ("threshold suite", threshold_suite, 5),
        ("graph and tree oracles", graph_oracles, 10),
        ("micro-bootstrap", micro_bootstrap, 300),
        ("scorer", scorer, 1),
        ("format round-trips", format_round_trips, 5),
    ];
    // pin the global pool so timings do not depend on other test binaries
    let _ = rayon::ThreadPoolBuilder::new().build_global();
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > Duration::from_secs(budget) => {
                Err(format!("{detail}; took {:.1} s, limit {budget} s", elapsed.as_secs_f64()))
            }
            other => other,
        };
        let (status, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{status} {name:<24} {:>7.2} s / {budget:>3} s  {detail}", elapsed.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
