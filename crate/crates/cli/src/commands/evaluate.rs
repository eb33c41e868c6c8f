use std::path::PathBuf;

use clap::Args;
use figdetect::corpus::{languages_for, PreparedCorpus};
use figdetect::evaluation::{evaluate, render_reports, zero_shot_protocol, EvalOptions, EvalReport};
use figdetect::modeling::TaskSpec;
use figdetect::par::Exec;
use figdetect::prompt::TemplateRef;
use figdetect::{Split, TemplateRegistry};

use super::{corpus_inputs, open_corpus, parse_tasks, RunDir};
use crate::error::Result;
use crate::run::{pretty_json, unix_now, Artifacts, DirLock, RunManifest};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained run directory (`<out>/runs/<hash>`).
    #[arg(long)]
    pub run: PathBuf,
    /// Comma-separated `figure-language` tasks; defaults depend on the command.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<String>>,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Template to render with; defaults to the run's.
    #[arg(long)]
    pub template: Option<String>,
    /// Prepared corpus; defaults to the one the run was trained on.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory; defaults to a directory inside the run.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Setup {
    run: RunDir,
    corpus: PreparedCorpus,
    registry: TemplateRegistry,
    template: TemplateRef,
    tasks: Vec<TaskSpec>,
    out: PathBuf,
}

fn setup(
    args: &EvalArgs,
    kind: &str,
    default_tasks: impl FnOnce(&RunDir, &TemplateRef) -> Vec<TaskSpec>,
) -> Result<Setup> {
    let run = RunDir::open(&args.run)?;
    let template = args
        .template
        .as_deref()
        .map(TemplateRef::from)
        .unwrap_or_else(|| run.plan.template.clone());
    let tasks = match &args.tasks {
        Some(list) => parse_tasks(list, &template)?,
        None => default_tasks(&run, &template),
    };
    let registry = TemplateRegistry::builtin();
    for t in &tasks {
        figdetect::prompt::InputFormat::for_task(&registry, t)?;
    }
    let corpus = open_corpus(args.data.as_deref().unwrap_or(&run.config.data))?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| run.path.join(kind).join(format!("{}-{template}", args.split)));
    Ok(Setup {
        run,
        corpus,
        registry,
        template,
        tasks,
        out,
    })
}

fn write(setup: &Setup, command: &str, split: Split, reports: &[EvalReport], started: u64) -> Result<()> {
    let mut inputs = corpus_inputs(&setup.corpus, &setup.tasks, &[split])?;
    inputs.extend(setup.run.checkpoint_inputs()?);
    let _lock = DirLock::acquire(&setup.out)?;
    let mut art = Artifacts::new(&setup.out);
    let mut text = render_reports(reports);
    for r in reports {
        art.write(format!("{}.json", r.task.key()), &pretty_json(r))?;
        art.write(format!("{}.svg", r.task.key()), r.confusion_svg().as_bytes())?;
        text.push('\n');
        text.push_str(&format!("{} ({split})\n", r.task));
        text.push_str(&r.render_confusion());
    }
    art.write("reports.txt", text.as_bytes())?;
    let hash = figdetect::modeling::config_hash(&(setup.run.hash(), setup.template.to_string(), split));
    RunManifest::new(command, &hash, inputs, started).finish(art)?;
    print!("{}", render_reports(reports));
    println!("written to {}", setup.out.display());
    Ok(())
}

fn check_inputs(setup: &Setup, split: Split) -> Result<()> {
    corpus_inputs(&setup.corpus, &setup.tasks, &[split]).map(|_| ())
}

pub fn run(args: EvalArgs) -> Result<()> {
    let started = unix_now();
    let setup = setup(&args, "eval", |run, t| {
        run.plan.eval_tasks.iter().map(|x| x.with_template(t.clone())).collect()
    })?;
    check_inputs(&setup, args.split)?;
    let model = setup.run.load(&setup.tasks, &setup.corpus, &setup.registry)?;
    let reports: Vec<EvalReport> = setup
        .tasks
        .iter()
        .map(|t| {
            evaluate(
                &model,
                t,
                args.split,
                &setup.corpus,
                &setup.registry,
                EvalOptions { keep_examples: true },
            )
        })
        .collect::<std::result::Result<_, _>>()?;
    drop(model);
    write(&setup, "evaluate", args.split, &reports, started)
}

/// Tasks of the figures the run trained on, in languages it never saw.
fn unseen_languages(run: &RunDir, template: &TemplateRef) -> Vec<TaskSpec> {
    let trained: Vec<_> = run.plan.training_tasks.iter().map(|t| t.language).collect();
    let mut figures: Vec<_> = run.plan.training_tasks.iter().map(|t| t.figure).collect();
    figures.sort();
    figures.dedup();
    figures
        .into_iter()
        .flat_map(|f| languages_for(f).into_iter().map(move |l| (f, l)))
        .filter(|(_, l)| !trained.contains(l))
        .map(|(f, l)| TaskSpec {
            figure: f,
            language: l,
            template: template.clone(),
        })
        .collect()
}

pub fn zero_shot(args: EvalArgs) -> Result<()> {
    let started = unix_now();
    let setup = setup(&args, "zero-shot", unseen_languages)?;
    if setup.tasks.is_empty() {
        return Err(crate::error::CliError::Config(
            "tasks: the run has seen every language of its figures; pass --tasks".into(),
        ));
    }
    check_inputs(&setup, args.split)?;
    let model = setup.run.load(&setup.tasks, &setup.corpus, &setup.registry)?;
    let reports = zero_shot_protocol(
        &model,
        &setup.tasks,
        args.split,
        &setup.corpus,
        &setup.registry,
        EvalOptions { keep_examples: true },
        Exec::Sequential,
    )?;
    drop(model);
    write(&setup, "zero-shot", args.split, &reports, started)
}
