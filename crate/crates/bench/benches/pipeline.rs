use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use capvqa::fusion::late_fuse;
use capvqa::metrics::{evaluate_predictions, AccuracyMode};
use capvqa::modeling::head::classifier_head_forward;
use capvqa::modeling::optim::{AdamWConfig, LrSchedule};
use capvqa::modeling::toy::{RegionMap, ToyTrainer, TrainConfig};
use capvqa::vocab::soft_label;
use capvqa_bench::{annotations, caption_examples, distribution, head, word_vocab};

fn scoring(c: &mut Criterion) {
    let anns = annotations(5000, 1);
    let preds: BTreeMap<_, _> = anns.iter().map(|a| (a.question_id, "dog".to_string())).collect();
    c.bench_function("score 5000 questions", |b| {
        b.iter(|| evaluate_predictions(black_box(&preds), &anns, AccuracyMode::Literal).unwrap())
    });
    c.bench_function("score 5000 questions, subset averaged", |b| {
        b.iter(|| evaluate_predictions(black_box(&preds), &anns, AccuracyMode::SubsetAveraged).unwrap())
    });
}

fn labels(c: &mut Criterion) {
    let anns = annotations(5000, 2);
    let vocab = word_vocab();
    c.bench_function("soft labels 5000 questions", |b| {
        b.iter(|| anns.iter().map(|a| soft_label(black_box(a), &vocab).entries.len()).sum::<usize>())
    });
}

fn head_forward(c: &mut Criterion) {
    for (d_h, n) in [(64, 1000), (768, 3129)] {
        let (t, params) = head(d_h, n);
        c.bench_function(&format!("head forward d_h={d_h} n={n}"), |b| {
            b.iter(|| classifier_head_forward(black_box(&t), &params).unwrap())
        });
    }
}

fn fusion(c: &mut Criterion) {
    let (p, q) = (distribution(3129, 3), distribution(3129, 4));
    c.bench_function("late fuse n=3129", |b| b.iter(|| late_fuse(black_box(&p), &q).unwrap()));
}

fn train_step(c: &mut Criterion) {
    let (set, vocab) = caption_examples(200);
    let config = TrainConfig {
        steps: 1_000_000,
        batch_size: 16,
        learning_rate: 0.01,
        schedule: LrSchedule::Constant,
        warmup_steps: 0,
        optimizer: AdamWConfig::default(),
        hidden_dim: 64,
        init_std: 0.1,
        seed: 0,
        skip_fully_oov: true,
        region: Default::default(),
    };
    let regions = RegionMap::new();
    c.bench_function("toy train step, batch 16", |b| {
        b.iter_batched_ref(
            || ToyTrainer::new(&set, &vocab, &regions, &config, None).unwrap(),
            |t| t.step().unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, scoring, labels, head_forward, fusion, train_step);
criterion_main!(benches);
