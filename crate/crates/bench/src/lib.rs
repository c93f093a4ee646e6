//! Criterion benchmarks for the generation pipeline and its hot spots.

use std::hint::black_box;

use astfim_core::benchgen::line_diff;
use astfim_core::masking::best_window;
use astfim_core::synth::{corpus, SYNTH_LANGUAGES};
use astfim_core::{parse, CharSpan, Generator, MixConfig, SentinelSet, SourceDocument, StreamRng};
use criterion::{BenchmarkId, Criterion, Throughput};
use rand::Rng;

/// Synthetic documents totalling at least `bytes`.
pub fn fixture(bytes: usize) -> Vec<SourceDocument> {
    let mut out = Vec::new();
    let mut total = 0;
    let mut seed = 0;
    while total < bytes {
        for d in corpus(256, SYNTH_LANGUAGES, seed) {
            total += d.content.len();
            out.push(d);
        }
        seed += 1;
    }
    out
}

fn bytes_of(docs: &[SourceDocument]) -> u64 {
    docs.iter().map(|d| d.content.len() as u64).sum()
}

pub fn parsing(c: &mut Criterion) {
    let docs = fixture(1 << 20);
    let mut g = c.benchmark_group("parse");
    g.throughput(Throughput::Bytes(bytes_of(&docs)));
    g.sample_size(10);
    g.bench_function("1MiB mixed", |b| {
        b.iter(|| docs.iter().map(|d| parse(d).map_or(0, |t| t.len())).sum::<usize>())
    });
    g.finish();
}

pub fn generation(c: &mut Criterion) {
    let docs = fixture(1 << 20);
    let mut g = c.benchmark_group("generate");
    g.throughput(Throughput::Bytes(bytes_of(&docs)));
    g.sample_size(10);
    for budget in [256, 8192] {
        let mix = MixConfig { context_budget: budget, ..MixConfig::default() };
        let generator = Generator::new(mix, SentinelSet::default(), 1);
        g.bench_with_input(BenchmarkId::new("parse+mask+render", budget), &docs, |b, docs| {
            b.iter(|| {
                let mut n = 0usize;
                generator
                    .run(docs.iter().cloned().map(Ok), 1, |r| {
                        n += r.text.len();
                        Ok(())
                    })
                    .expect("in-memory run");
                n
            })
        });
    }
    g.finish();
}

pub fn windows(c: &mut Criterion) {
    let mut g = c.benchmark_group("best_window");
    for fanout in [4usize, 16, 64, 256] {
        let mut rng = StreamRng::new(fanout as u64, "bench");
        let mut kids = Vec::with_capacity(fanout);
        let mut pos = 0;
        for _ in 0..fanout {
            let gap = rng.random_range(0..3);
            let len = rng.random_range(1..20);
            kids.push(CharSpan::new(pos + gap, pos + gap + len));
            pos += gap + len;
        }
        let targets: Vec<CharSpan> = (0..64)
            .map(|_| {
                let a = rng.random_range(0..=pos);
                let b = rng.random_range(0..=pos);
                CharSpan::new(a.min(b), a.max(b))
            })
            .collect();
        g.bench_with_input(BenchmarkId::from_parameter(fanout), &kids, |b, kids| {
            b.iter(|| targets.iter().map(|&t| best_window(black_box(kids), t).map_or(0, |w| w.last)).sum::<usize>())
        });
    }
    g.finish();
}

pub fn diffing(c: &mut Criterion) {
    let docs = fixture(64 << 10);
    let pairs: Vec<(String, String)> = docs
        .windows(2)
        .map(|w| (w[0].content.clone(), format!("{}{}", w[0].content, w[1].content)))
        .collect();
    c.bench_function("line_diff/append", |b| {
        b.iter(|| pairs.iter().map(|(x, y)| line_diff(x, y).len()).sum::<usize>())
    });
}
