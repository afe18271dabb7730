use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use textsmbo_core::data::{split_corpus, synthetic_corpus, SyntheticSpec};
use textsmbo_core::logreg::{self, Example, Penalty, TrainConfig};
use textsmbo_core::textrep::{Featurizer, RepresentationConfig, Weighting};
use textsmbo_core::tpe::{suggest, TpeParams, TrialRecord};
use textsmbo_core::{text_rep_space, TextClassifierConfig, TextTask};

fn corpus(n_docs: usize) -> textsmbo_core::LabeledCorpus {
    synthetic_corpus(&SyntheticSpec { n_docs, n_classes: 2, vocab_size: 2000, signal_strength: 0.7, seed: 1 })
        .unwrap()
}

fn bench_suggest(c: &mut Criterion) {
    let space = text_rep_space();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let history: Vec<TrialRecord> = (0..30)
        .map(|i| TrialRecord { assignment: space.sample_prior(&mut rng), y: (i % 11) as f64 / 10.0 })
        .collect();
    let params = TpeParams::default();
    c.bench_function("tpe suggest (30 trials, 64 candidates)", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(1),
            |mut rng| suggest(&space, &history, &params, &mut rng).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn bench_featurize(c: &mut Criterion) {
    let docs = corpus(2000);
    let texts = docs.texts();
    let featurizer = Featurizer::english();
    let config = RepresentationConfig::new(1, 3, Weighting::TfIdf, false).unwrap();
    c.bench_function("vocabulary 1-3 grams, 2000 docs", |b| {
        b.iter(|| featurizer.build_vocabulary(&texts, &config).unwrap())
    });
}

fn bench_train(c: &mut Criterion) {
    let docs = corpus(2000);
    let featurizer = Featurizer::english();
    let config = RepresentationConfig::new(1, 2, Weighting::Binary, false).unwrap();
    let texts = docs.texts();
    let vocab = featurizer.build_vocabulary(&texts, &config).unwrap();
    let examples: Vec<Example> = docs
        .documents
        .iter()
        .map(|(t, l)| Example {
            x: featurizer.vectorize(t, &vocab, &config),
            label: docs.labels.iter().position(|x| x == l).unwrap(),
        })
        .collect();
    let mut group = c.benchmark_group("logreg train");
    group.sample_size(10);
    for penalty in [Penalty::L1, Penalty::L2] {
        let cfg = TrainConfig::new(penalty, 10.0, 1e-4).unwrap();
        group.bench_function(format!("{penalty}, C=10"), |b| {
            b.iter(|| logreg::train(&examples, &cfg, vocab.len(), &docs.labels).unwrap())
        });
    }
    group.finish();
}

fn bench_trial(c: &mut Criterion) {
    let (train, dev) = split_corpus(&corpus(2500), 0.2, 0).unwrap();
    let config = TextClassifierConfig {
        representation: RepresentationConfig::new(1, 2, Weighting::TfIdf, true).unwrap(),
        training: TrainConfig::new(Penalty::L2, 1.0, 1e-4).unwrap(),
    };
    let mut group = c.benchmark_group("trial");
    group.sample_size(10);
    group.bench_function("cold featurize + train + score", |b| {
        b.iter_batched(
            || TextTask::new(train.clone(), dev.clone(), Featurizer::english()),
            |mut task| task.score(&config).unwrap().accuracy,
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_suggest, bench_featurize, bench_train, bench_trial);
criterion_main!(benches);
