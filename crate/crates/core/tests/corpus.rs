mod common;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use common::*;
use figdetect::corpus::interchange::read_examples_file;
use figdetect::corpus::{expression_overlap, CorpusSource, PrepareOptions, UPSAMPLED_TRAIN};
use figdetect::par::Exec;
use figdetect::{Figure, Label, Language, Split};

/// Label counts read straight off the raw files with no shared code:
/// `(literal, figurative)` per file.
fn naive_count(path: &Path, figure: Figure) -> (usize, usize) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    match figure {
        Figure::Hyperbole => {
            let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
            let rows = lines.filter(|l| !l.trim().is_empty());
            if header.contains(&"hyperbolic") {
                let n = rows.count();
                (n, n)
            } else {
                let col = header.iter().position(|h| *h == "label").unwrap();
                rows.fold((0, 0), |(l, f), row| match row.split('\t').nth(col).unwrap() {
                    "1" | "hyperbolic" => (l, f + 1),
                    "0" | "literal" => (l + 1, f),
                    other => panic!("fixture label {other}"),
                })
            }
        }
        Figure::Idiom => {
            let mut counts = (0, 0);
            for block in text.split("\n\n").filter(|b| !b.trim().is_empty()) {
                let tags: Vec<&str> = block
                    .lines()
                    .filter(|l| !l.starts_with('#'))
                    .map(|l| l.rsplit('\t').next().unwrap())
                    .collect();
                let opened_inside = tags.iter().position(|t| t.starts_with("I-"));
                let first_begin = tags.iter().position(|t| t.starts_with("B-"));
                match (first_begin, opened_inside) {
                    (None, Some(_)) => {}
                    (Some(b), Some(i)) if i < b => {}
                    (None, None) => counts.0 += 1,
                    _ => counts.1 += 1,
                }
            }
            counts
        }
        Figure::Metaphor => {
            let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
            let col = header.iter().position(|h| *h == "score").unwrap();
            lines.fold((0, 0), |(l, f), row| match row.split('\t').nth(col).unwrap() {
                "0" => (l + 1, f),
                "2" | "3" => (l, f + 1),
                _ => (l, f),
            })
        }
    }
}

#[test]
fn fixture_stats_match_hand_counts() {
    let p = prepare_fixtures();
    assert!(p.report.is_complete(), "{:?}", p.report.failures);
    for (figure, language, per_split) in FIXTURE_COUNTS {
        for (split, (lit, fig)) in Split::ALL.iter().zip(per_split) {
            let c = p.report.stats.get(figure, language, *split);
            assert_eq!(
                (c.literal, c.figurative, c.total),
                (lit, fig, lit + fig),
                "{figure}-{language} {split}"
            );
        }
    }
    assert_eq!(p.report.rejected, FIXTURE_REJECTED);
    assert_eq!(p.report.dropped_by_policy, FIXTURE_DROPPED_BY_POLICY);
}

#[test]
fn hand_counts_agree_with_naive_file_counter() {
    for (figure, language, per_split) in FIXTURE_COUNTS {
        let dir = fixture_root().join(figure.code()).join(language.code());
        for (split, expected) in Split::ALL.iter().zip(per_split) {
            let mut total = (0, 0);
            for entry in fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.file_name().unwrap().to_str().unwrap().starts_with(split.code()) {
                    let (l, f) = naive_count(&path, figure);
                    total = (total.0 + l, total.1 + f);
                }
            }
            assert_eq!(total, expected, "{figure}-{language} {split}");
        }
    }
}

#[test]
fn rerun_is_byte_identical() {
    let a = prepare_fixtures();
    let b = prepare_fixtures_with(&PrepareOptions {
        exec: Exec::Sequential,
        ..Default::default()
    });
    assert_eq!(a.report, b.report);
    for out in &a.report.outputs {
        let x = fs::read(a.dir.path().join(&out.path)).unwrap();
        let y = fs::read(b.dir.path().join(&out.path)).unwrap();
        assert_eq!(x, y, "{}", out.path);
    }
    let pa = fs::read(a.dir.path().join("prepare.json")).unwrap();
    let pb = fs::read(b.dir.path().join("prepare.json")).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn hyperbole_train_upsampled_to_target() {
    let p = prepare_fixtures();
    for language in [Language::En, Language::Zh] {
        let dir = p.dir.path().join("hyperbole").join(language.code());
        let original = read_examples_file(&dir.join("train.jsonl")).unwrap();
        let up = read_examples_file(&dir.join(UPSAMPLED_TRAIN)).unwrap();
        assert_eq!(up.len(), 10_000);
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for ex in &up {
            *counts.entry(ex.id.as_str()).or_default() += 1;
        }
        for ex in &original {
            assert!(
                counts.get(ex.id.as_str()).copied().unwrap_or(0) >= 1,
                "{} missing",
                ex.id
            );
        }
        assert_eq!(counts.len(), original.len());
        // training reads the upsampled file, evaluation the originals
        assert_eq!(
            p.corpus.train_examples(Figure::Hyperbole, language).unwrap().len(),
            10_000
        );
        assert_eq!(
            p.corpus.load(Figure::Hyperbole, language, Split::Train).unwrap(),
            original
        );
    }
    let again = prepare_fixtures();
    let other_seed = prepare_fixtures_with(&PrepareOptions {
        seed: 7,
        ..Default::default()
    });
    let path = |d: &Path| d.join("hyperbole/en").join(UPSAMPLED_TRAIN);
    assert_eq!(
        fs::read(path(p.dir.path())).unwrap(),
        fs::read(path(again.dir.path())).unwrap()
    );
    assert_ne!(
        fs::read(path(p.dir.path())).unwrap(),
        fs::read(path(other_seed.dir.path())).unwrap()
    );
}

#[test]
fn idiom_fixture_spans() {
    let p = prepare_fixtures();
    let train = p.corpus.load(Figure::Idiom, Language::En, Split::Train).unwrap();
    let mut exprs: Vec<String> = train
        .iter()
        .filter(|e| e.label == Label::Figurative)
        .flat_map(|e| e.span_texts())
        .collect();
    exprs.sort();
    assert_eq!(
        exprs,
        [
            "break the ice",
            "kick the bucket",
            "piece of cake",
            "spill the beans",
            "under the weather"
        ]
    );
    assert_eq!(train[0].id, "idiom/en/train/id10m/en-tr-1");
    let de = p.corpus.load(Figure::Idiom, Language::De, Split::Train).unwrap();
    assert_eq!(de.len(), 4);
    let rej = fs::read_to_string(p.dir.path().join("rejections.jsonl")).unwrap();
    assert!(rej.contains(r#""record":"5","kind":"inconsistent_tags""#), "{rej}");
}

#[test]
fn overlap_fixture_hand_ratios() {
    let p = prepare_fixtures();
    let load = |s| p.corpus.load(Figure::Idiom, Language::En, s).unwrap();
    let train = load(Split::Train);
    // valid: 2 of 4 idiomatic reuse a training idiom, 1 of 4 literal
    // contains one ("break the ice" on a pond)
    let v = expression_overlap(&train, &load(Split::Valid), Exec::default());
    assert_eq!((v.figurative.ratio, v.literal.ratio), (Some(50.0), Some(25.0)));
    // test: only "kick the bucket" recurs, in 1 of 5 idiomatic
    let t = expression_overlap(&train, &load(Split::Test), Exec::Sequential);
    assert_eq!((t.figurative.ratio, t.literal.ratio), (Some(20.0), Some(0.0)));
    assert_eq!(t.expressions, 5);
}
