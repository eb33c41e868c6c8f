mod common;

use common::*;
use figdetect::corpus::{languages_for, CorpusSource, InMemoryCorpus};
use figdetect::evaluation::{
    evaluate, prompt_diff, score, transfer_matrix, zero_shot_protocol, EvalOptions, EvalReport, LoadedModel,
    TransferRow,
};
use figdetect::modeling::backends::{ToyConfig, ToySeq2Seq};
use figdetect::modeling::{
    build_mixture, lr_schedule, train, Backend, BackendCheckpoint, BackendSpec, GoldTable, MixturePolicy, TaskSpec,
    TrainConfig, TrainingLog, ValidationSet,
};
use figdetect::par::Exec;
use figdetect::prompt::{InputFormat, TemplateRef};
use figdetect::synthetic::SyntheticTask;
use figdetect::{Figure, Label, Language, Split, TemplateRegistry};
use serde_json::Value;

fn literal_prevalence(figure: Figure, language: Language) -> f64 {
    let (lit, fig) = fixture_counts(figure, language, Split::Test);
    lit as f64 / (lit + fig) as f64
}

fn eval_all(
    model: &LoadedModel,
    tasks: &[TaskSpec],
    corpus: &dyn CorpusSource,
    reg: &TemplateRegistry,
) -> Vec<EvalReport> {
    tasks
        .iter()
        .map(|t| evaluate(model, t, Split::Test, corpus, reg, EvalOptions::default()).unwrap())
        .collect()
}

#[test]
fn oracle_anti_constant_sandwich() {
    let p = prepare_fixtures();
    let reg = TemplateRegistry::builtin();
    let tasks = all_tasks("A");
    let gold = gold_for(&tasks, &p.corpus, &reg);
    let oracle = loaded(BackendSpec::Oracle, &gold, tasks.clone());
    let anti = loaded(BackendSpec::AntiOracle, &gold, tasks.clone());
    let constant = loaded(
        BackendSpec::Constant {
            output: "Literal".into(),
        },
        &gold,
        tasks.clone(),
    );
    for t in &tasks {
        let o = evaluate(&oracle, t, Split::Test, &p.corpus, &reg, EvalOptions::default()).unwrap();
        let a = evaluate(&anti, t, Split::Test, &p.corpus, &reg, EvalOptions::default()).unwrap();
        let c = evaluate(&constant, t, Split::Test, &p.corpus, &reg, EvalOptions::default()).unwrap();
        assert_eq!(o.accuracy, 1.0, "{t}");
        assert_eq!(a.accuracy, 0.0, "{t}");
        assert_eq!(c.accuracy, literal_prevalence(t.figure, t.language), "{t}");
        assert_eq!(o.unparsed_count + a.unparsed_count + c.unparsed_count, 0);
        let (lit, fig) = fixture_counts(t.figure, t.language, Split::Test);
        assert_eq!(c.confusion.get(Label::Literal, Label::Literal), lit as u64);
        assert_eq!(c.confusion.get(Label::Figurative, Label::Literal), fig as u64);
        assert_eq!(o.template_id, "A");
        assert!(!o.zero_shot);
    }
}

#[test]
fn in_lingual_template_sandwich() {
    let p = prepare_fixtures();
    let reg = TemplateRegistry::builtin();
    let tasks = all_tasks("D");
    let gold = gold_for(&tasks, &p.corpus, &reg);
    let oracle = loaded(BackendSpec::Oracle, &gold, tasks.clone());
    let anti = loaded(BackendSpec::AntiOracle, &gold, tasks.clone());
    for (o, a) in eval_all(&oracle, &tasks, &p.corpus, &reg)
        .iter()
        .zip(eval_all(&anti, &tasks, &p.corpus, &reg))
    {
        assert_eq!((o.accuracy, a.accuracy), (1.0, 0.0), "{}", o.task);
    }
}

#[test]
fn oracle_transfer_matrix_is_all_ones() {
    let p = prepare_fixtures();
    let reg = TemplateRegistry::builtin();
    let tasks = all_tasks("A");
    let gold = gold_for(&tasks, &p.corpus, &reg);
    for figure in Figure::ALL {
        let langs = languages_for(*figure);
        let models: Vec<LoadedModel> = langs
            .iter()
            .map(|l| {
                loaded(
                    BackendSpec::Oracle,
                    &gold,
                    vec![TaskSpec::new(*figure, *l, "A").unwrap()],
                )
            })
            .chain(std::iter::once(loaded(BackendSpec::Oracle, &gold, tasks.clone())))
            .collect();
        let rows: Vec<(TransferRow, &LoadedModel)> = langs
            .iter()
            .map(|l| TransferRow::Language(*l))
            .chain(std::iter::once(TransferRow::Overall))
            .zip(&models)
            .collect();
        let m = transfer_matrix(&rows, *figure, &TemplateRef::id("A"), &p.corpus, &reg, Exec::default()).unwrap();
        assert_eq!(m.rows.len(), langs.len() + 1);
        assert_eq!(*m.rows.last().unwrap(), TransferRow::Overall);
        for row in &m.cells {
            assert_eq!(row.len(), langs.len());
            assert!(row.iter().all(|c| *c == 1.0), "{figure}: {row:?}");
        }
    }
}

#[test]
fn constant_literal_transfer_cells_equal_prevalence() {
    let p = prepare_fixtures();
    let reg = TemplateRegistry::builtin();
    let gold = GoldTable::new();
    let spec = BackendSpec::Constant {
        output: "Literal".into(),
    };
    let en = loaded(spec.clone(), &gold, vec!["hyperbole-en".parse().unwrap()]);
    let zh = loaded(spec.clone(), &gold, vec!["hyperbole-zh".parse().unwrap()]);
    let all = loaded(spec, &gold, all_tasks("A"));
    let rows = [
        (TransferRow::Language(Language::En), &en),
        (TransferRow::Language(Language::Zh), &zh),
        (TransferRow::Overall, &all),
    ];
    let m = transfer_matrix(
        &rows,
        Figure::Hyperbole,
        &TemplateRef::id("A"),
        &p.corpus,
        &reg,
        Exec::Sequential,
    )
    .unwrap();
    assert_eq!(m.cols, vec![Language::En, Language::Zh]);
    for r in &m.rows {
        for c in &m.cols {
            assert_eq!(m.cell(*r, *c), Some(literal_prevalence(Figure::Hyperbole, *c)));
        }
    }
    let short = [(TransferRow::Language(Language::En), &en)];
    assert!(transfer_matrix(
        &short,
        Figure::Hyperbole,
        &TemplateRef::id("A"),
        &p.corpus,
        &reg,
        Exec::Sequential
    )
    .is_err());
}

#[test]
fn prompt_diff_identity_and_antisymmetry() {
    let p = prepare_fixtures();
    let reg = TemplateRegistry::builtin();
    let a_tasks = all_tasks("A");
    let b_tasks = all_tasks("B");
    let gold = gold_for(&a_tasks, &p.corpus, &reg);
    let oracle = loaded(BackendSpec::Oracle, &gold, a_tasks.clone());
    let constant = loaded(
        BackendSpec::Constant {
            output: "Literal".into(),
        },
        &gold,
        a_tasks.clone(),
    );
    let ra = eval_all(&oracle, &a_tasks, &p.corpus, &reg);
    let rb = eval_all(&constant, &b_tasks, &p.corpus, &reg);
    let same = prompt_diff(&ra, &ra).unwrap();
    assert_eq!(same.entries.len(), 10);
    assert!(same.entries.iter().all(|e| e.diff == 0.0));
    let ab = prompt_diff(&ra, &rb).unwrap();
    let ba = prompt_diff(&rb, &ra).unwrap();
    for e in &ab.entries {
        assert_eq!(e.diff, -ba.get(&e.task).unwrap(), "{}", e.task);
        let t: TaskSpec = e.task.parse().unwrap();
        assert_eq!(e.diff, 1.0 - literal_prevalence(t.figure, t.language));
    }
    assert_eq!((ab.reference_template.as_str(), ab.other_template.as_str()), ("A", "B"));
    assert!(prompt_diff(&ra, &rb[..9]).is_err());
}

#[test]
fn zero_shot_flags_unseen_languages() {
    let p = prepare_fixtures();
    let reg = TemplateRegistry::builtin();
    let tasks = all_tasks("A");
    let gold = gold_for(&tasks, &p.corpus, &reg);
    let en_only: Vec<TaskSpec> = tasks.iter().filter(|t| t.language == Language::En).cloned().collect();
    let model = loaded(BackendSpec::Oracle, &gold, en_only);
    let reports = zero_shot_protocol(
        &model,
        &tasks,
        Split::Test,
        &p.corpus,
        &reg,
        EvalOptions::default(),
        Exec::default(),
    )
    .unwrap();
    assert_eq!(reports.len(), 10);
    for r in &reports {
        assert_eq!(r.zero_shot, r.task.language != Language::En, "{}", r.task);
        assert_eq!(r.accuracy, 1.0);
    }
}

fn synthetic_corpus(task: &SyntheticTask) -> InMemoryCorpus {
    let (train, valid, test) = task.generate();
    let mut c = InMemoryCorpus::new();
    c.insert(task.figure, task.language, Split::Train, train);
    c.insert(task.figure, task.language, Split::Valid, valid);
    c.insert(task.figure, task.language, Split::Test, test);
    c
}

fn run(spec: &BackendSpec, synth: &SyntheticTask, config: &TrainConfig) -> (BackendCheckpoint, TrainingLog) {
    let reg = TemplateRegistry::builtin();
    let corpus = synthetic_corpus(synth);
    let task = TaskSpec::new(synth.figure, synth.language, "A").unwrap();
    let mixture = build_mixture(
        std::slice::from_ref(&task),
        MixturePolicy::ConcatShuffle,
        config.seed,
        &corpus,
        &reg,
    )
    .unwrap();
    let valid = corpus.load(synth.figure, synth.language, Split::Valid).unwrap();
    let vset = ValidationSet::new(task.clone(), &valid, &reg).unwrap();
    let gold = gold_for(&[task], &corpus, &reg);
    let mut backend = spec.instantiate(&gold).unwrap();
    train(backend.as_mut(), &mixture, &[vset], config, "test").unwrap()
}

#[test]
fn toy_loss_non_increasing_after_warmup_on_fixed_batch() {
    let reg = TemplateRegistry::builtin();
    let synth = SyntheticTask {
        train: 16,
        ..Default::default()
    };
    let (train_set, _, _) = synth.generate();
    let task = TaskSpec::new(synth.figure, synth.language, "A").unwrap();
    let batch = InputFormat::for_task(&reg, &task)
        .unwrap()
        .instances(&train_set, &task)
        .unwrap();
    let config = TrainConfig {
        warmup_steps: 20,
        ..Default::default()
    };
    let mut toy = ToySeq2Seq::new(ToyConfig::default());
    let losses: Vec<f64> = (1..=200)
        .map(|s| toy.fit_step(&batch, lr_schedule(s, &config)).unwrap())
        .collect();
    for (i, w) in losses.windows(2).enumerate().skip(config.warmup_steps as usize) {
        assert!(
            w[1] <= w[0] + 1e-12,
            "loss rose at step {}: {} -> {}",
            i + 2,
            w[0],
            w[1]
        );
    }
    assert!(losses[199] < 0.5 * losses[0]);
}

#[test]
fn toy_generation_is_deterministic() {
    let (ckpt, _) = run(
        &BackendSpec::Toy(ToyConfig::default()),
        &SyntheticTask::default(),
        &TrainConfig {
            max_steps: Some(60),
            eval_interval: 30,
            ..Default::default()
        },
    );
    let model = ckpt.load(&GoldTable::new()).unwrap();
    let inputs: Vec<String> = (0..50).map(|i| format!("Text: sentence {i} zorblat")).collect();
    assert_eq!(model.generate(&inputs), model.generate(&inputs));
    let seq = ToySeq2Seq::new(ToyConfig::default()).with_exec(Exec::Sequential);
    let mut seq: Box<dyn Backend> = Box::new(seq);
    seq.restore(&ckpt.payload).unwrap();
    assert_eq!(seq.generate(&inputs), model.generate(&inputs));
}

#[test]
fn toy_best_checkpoint_dominates_step_1000_eval() {
    let synth = SyntheticTask {
        train: 50,
        valid: 40,
        seed: 11,
        ..Default::default()
    };
    let config = TrainConfig {
        batch_size: 8,
        max_steps: Some(3000),
        eval_interval: 250,
        ..Default::default()
    };
    let (ckpt, log) = run(&BackendSpec::Toy(ToyConfig::default()), &synth, &config);
    let at_1000 = log.evaluations().into_iter().find(|(s, _)| *s == 1000).map(|(_, v)| v);
    let best = ckpt.meta.best_score.unwrap();
    if let Some(v) = at_1000 {
        assert!(best >= v);
    }
    // the best-so-far curve never decreases
    let mut running = f64::NEG_INFINITY;
    for (_, v) in log.evaluations() {
        running = running.max(v);
        assert!(best >= running);
    }
    assert_eq!(Some(ckpt.meta.step), log.best_step);
}

#[test]
fn toy_report_rescores_from_dump() {
    let synth = SyntheticTask {
        train: 40,
        valid: 20,
        test: 20,
        seed: 3,
        ..Default::default()
    };
    let config = TrainConfig {
        max_steps: Some(40),
        eval_interval: 20,
        batch_size: 4,
        ..Default::default()
    };
    let (ckpt, _) = run(&BackendSpec::Toy(ToyConfig::default()), &synth, &config);
    let corpus = synthetic_corpus(&synth);
    let model = LoadedModel {
        backend: ckpt.load(&GoldTable::new()).unwrap(),
        meta: ckpt.meta.clone(),
    };
    let task = TaskSpec::new(synth.figure, synth.language, "A").unwrap();
    let reg = TemplateRegistry::builtin();
    let report = evaluate(
        &model,
        &task,
        Split::Test,
        &corpus,
        &reg,
        EvalOptions { keep_examples: true },
    )
    .unwrap();
    let dump = report.per_example.as_ref().unwrap();
    assert_eq!(dump.len(), 20);
    let gold: Vec<Label> = dump.iter().map(|d| d.gold).collect();
    let parsed: Vec<_> = dump.iter().map(|d| d.parsed).collect();
    let s = score(&gold, &parsed).unwrap();
    assert_eq!(report.accuracy, s.accuracy);
    assert_eq!(report.confusion, s.confusion);
    assert_eq!(report.rescore().unwrap().unwrap(), s);
}

#[test]
fn seed_fixes_the_whole_training_log() {
    let synth = SyntheticTask::default();
    let config = TrainConfig {
        max_steps: Some(200),
        eval_interval: 50,
        batch_size: 16,
        seed: 5,
        ..Default::default()
    };
    let spec = BackendSpec::Toy(ToyConfig::default());
    let (c1, l1) = run(&spec, &synth, &config);
    let (c2, l2) = run(&spec, &synth, &config);
    let bytes = |l: &TrainingLog| {
        let mut v = Vec::new();
        l.write_jsonl(&mut v).unwrap();
        v
    };
    assert_eq!(bytes(&l1), bytes(&l2));
    assert_eq!(c1, c2);
    let back = TrainingLog::read_jsonl(std::str::from_utf8(&bytes(&l1)).unwrap()).unwrap();
    assert_eq!(bytes(&back), bytes(&l1));
    let (_, l3) = run(&spec, &synth, &TrainConfig { seed: 6, ..config });
    assert_ne!(bytes(&l1), bytes(&l3));
}

/// Replaces every leaf value by its JSON type, keeping keys and array
/// lengths.
fn skeleton(v: &Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), skeleton(v))).collect()),
        Value::Array(a) => Value::Array(a.iter().map(skeleton).collect()),
        Value::Null => Value::from("null"),
        Value::Bool(_) => Value::from("bool"),
        Value::Number(_) => Value::from("number"),
        Value::String(_) => Value::from("string"),
    }
}

#[test]
fn backends_are_substitutable() {
    let synth = SyntheticTask {
        train: 40,
        valid: 20,
        test: 20,
        ..Default::default()
    };
    let config = TrainConfig {
        max_steps: Some(30),
        eval_interval: 10,
        batch_size: 8,
        patience: 10,
        ..Default::default()
    };
    let corpus = synthetic_corpus(&synth);
    let reg = TemplateRegistry::builtin();
    let task = TaskSpec::new(synth.figure, synth.language, "A").unwrap();
    let gold = gold_for(std::slice::from_ref(&task), &corpus, &reg);
    let mut shapes = Vec::new();
    for spec in [
        BackendSpec::Oracle,
        BackendSpec::Constant {
            output: "Literal".into(),
        },
        BackendSpec::Toy(ToyConfig::default()),
    ] {
        let (ckpt, log) = run(&spec, &synth, &config);
        let model = LoadedModel {
            backend: ckpt.load(&gold).unwrap(),
            meta: ckpt.meta.clone(),
        };
        let report = evaluate(
            &model,
            &task,
            Split::Test,
            &corpus,
            &reg,
            EvalOptions { keep_examples: true },
        )
        .unwrap();
        let log_shape: Vec<Value> = log
            .events
            .iter()
            .map(|e| skeleton(&serde_json::to_value(e).unwrap()))
            .collect();
        let mut report_json = serde_json::to_value(&report).unwrap();
        // the backend spec is the one field allowed to differ in shape
        report_json["checkpoint"]["backend"] = Value::Null;
        shapes.push((log_shape, skeleton(&report_json)));
    }
    assert_eq!(shapes[0], shapes[1]);
    assert_eq!(shapes[0], shapes[2]);
}

#[test]
fn checkpoint_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, _) = run(
        &BackendSpec::Toy(ToyConfig::default()),
        &SyntheticTask::default(),
        &TrainConfig {
            max_steps: Some(20),
            eval_interval: 10,
            ..Default::default()
        },
    );
    ckpt.save_dir(dir.path()).unwrap();
    let back = BackendCheckpoint::load_dir(dir.path()).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(back.meta.training_languages(), vec![Language::En]);
}
