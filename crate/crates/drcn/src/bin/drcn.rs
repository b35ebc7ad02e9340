//! Command-line front end: train, evaluate, gradient-check, ablate, and
//! export attention/pooling visualizations.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 data error,
//! 3 numeric abort (or failed gradient check).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as FmtWrite;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use drcn::checkpoint::{load_model, save_model};
use drcn::data::{load_pairs, DataFormat, LabelMap, SentencePair, Vocab};
use drcn::error::DrcnError;
use drcn::model::{ConnectionMode, DrcnModel};
use drcn::rng::DrcnRng;
use drcn::runconfig::RunConfig;
use drcn::tensor::TensorError;
use drcn::train::{
    self, evaluate, run_ablation, run_depth_sweep, run_micro_gradcheck,
    run_micro_gradcheck_corrupted, train as train_loop, Variant, MICRO_GRADCHECK_TOLERANCE,
};
use drcn::viz::export_pair_visualization;

const USAGE: &str = "\
usage: drcn <command> [flags]

commands:
  train      --train <path> --dev <path> --out <dir> [--config <file|preset>] [--seed N]
  eval       --checkpoint <file> --data <path> [--metric acc|map|mrr|all] [--ensemble <dir>]
  gradcheck  [--config micro-dense|micro-dense-noattn|micro-residual|micro-residual-noattn|
                       micro-plain|micro-plain-attn|all]
  visualize  --checkpoint <file> --premise <text> --hypothesis <text> --out <dir> [--max-len N]
  ablate     --data <path> [--test <path>] [--suite all|name,name,...] [--budget epochs]
             [--config <file|preset>] [--jobs N] [--depth-sweep] [--out <file>]

presets: paper-snli, paper-quora, paper-trecqa, desk-ablate
data paths may be TSV/JSONL files or synthetic:<count>[:<seed>]
DRCN_SEED supplies the seed when neither --seed nor the config file does.";

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> CliError {
        CliError { code: 1, message: message.into() }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Spec exit-code partition: config 1, data 2, numeric 3.
fn classify(e: DrcnError) -> CliError {
    let code = match &e {
        DrcnError::Config(_) => 1,
        DrcnError::Io { .. } | DrcnError::EmptyDataset(_) | DrcnError::Format(_) => 2,
        DrcnError::Numeric(_) => 3,
        DrcnError::Tensor(t) => match t {
            TensorError::NonFinite(_) => 3,
            _ => 1,
        },
    };
    CliError { code, message: e.to_string() }
}

/// Checkpoint and model-shape problems in eval/visualize exit with 1.
fn as_config_error(e: DrcnError) -> CliError {
    CliError { code: 1, message: e.to_string() }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(args: &[String]) -> CliResult<()> {
    let Some(cmd) = args.first() else {
        return Err(CliError::usage(USAGE));
    };
    let rest = &args[1..];
    match cmd.as_str() {
        "train" => cmd_train(rest),
        "eval" => cmd_eval(rest),
        "gradcheck" => cmd_gradcheck(rest),
        "visualize" => cmd_visualize(rest),
        "ablate" => cmd_ablate(rest),
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::usage(format!("unknown command {other:?}\n{USAGE}"))),
    }
}

// ───────────────────────── flag parsing ─────────────────────────

struct Flags {
    values: BTreeMap<String, String>,
    switches: BTreeSet<String>,
}

impl Flags {
    fn parse(args: &[String], valued: &[&str], switches: &[&str]) -> CliResult<Flags> {
        let mut f = Flags { values: BTreeMap::new(), switches: BTreeSet::new() };
        let mut i = 0;
        while i < args.len() {
            let a = &args[i];
            if let Some(name) = a.strip_prefix("--") {
                if switches.contains(&name) {
                    f.switches.insert(name.to_string());
                    i += 1;
                    continue;
                }
                if valued.contains(&name) {
                    let v = args.get(i + 1).ok_or_else(|| {
                        CliError::usage(format!("flag --{name} needs a value"))
                    })?;
                    if f.values.insert(name.to_string(), v.clone()).is_some() {
                        return Err(CliError::usage(format!("flag --{name} given twice")));
                    }
                    i += 2;
                    continue;
                }
                return Err(CliError::usage(format!("unknown flag --{name}")));
            }
            return Err(CliError::usage(format!("unexpected argument {a:?}")));
        }
        Ok(f)
    }

    fn required(&self, name: &str) -> CliResult<&str> {
        self.values
            .get(name)
            .map(|s| s.as_str())
            .ok_or_else(|| CliError::usage(format!("missing required flag --{name}")))
    }

    fn optional(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(|s| s.as_str())
    }

    fn has(&self, name: &str) -> bool {
        self.switches.contains(name)
    }
}

// ───────────────────────── shared helpers ─────────────────────────

fn load_config(flags: &Flags, default_preset: &str) -> CliResult<(RunConfig, bool)> {
    let spec = flags.optional("config").unwrap_or(default_preset);
    let cfg = RunConfig::from_preset_or_file(spec).map_err(classify)?;
    let seed_in_file = !spec.starts_with("paper-")
        && !spec.starts_with("desk-")
        && std::fs::read_to_string(spec)
            .map(|t| t.lines().any(|l| l.trim_start().starts_with("seed")))
            .unwrap_or(false);
    Ok((cfg, seed_in_file))
}

/// Seed precedence: --seed, then an explicit seed in the config file, then
/// the DRCN_SEED environment variable, then the config default.
fn resolve_seed(flags: &Flags, cfg: &mut RunConfig, seed_in_file: bool) -> CliResult<()> {
    if let Some(s) = flags.optional("seed") {
        cfg.train.seed =
            s.parse().map_err(|_| CliError::usage(format!("bad --seed value {s:?}")))?;
        return Ok(());
    }
    if seed_in_file {
        return Ok(());
    }
    if let Ok(env) = std::env::var("DRCN_SEED") {
        cfg.train.seed = env
            .parse()
            .map_err(|_| CliError::usage(format!("bad DRCN_SEED value {env:?}")))?;
    }
    Ok(())
}

/// A dataset argument: a TSV/JSONL path or `synthetic:<count>[:<seed>]`.
fn load_dataset(spec: &str, labels: LabelMap) -> CliResult<Vec<SentencePair>> {
    if let Some(rest) = spec.strip_prefix("synthetic:") {
        if labels.num_classes() != 2 {
            return Err(CliError::usage(
                "the synthetic alignment task is binary; set num_classes=2",
            ));
        }
        let mut parts = rest.split(':');
        let count: usize = parts
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| CliError::usage(format!("bad synthetic spec {spec:?}")))?;
        let seed: u64 = match parts.next() {
            Some(s) => s
                .parse()
                .map_err(|_| CliError::usage(format!("bad synthetic seed in {spec:?}")))?,
            None => 1,
        };
        return Ok(train::synthetic::generate(count, seed));
    }
    let path = Path::new(spec);
    let report = load_pairs(path, DataFormat::from_path(path), labels).map_err(classify)?;
    if report.skipped > 0 {
        eprintln!("warning: skipped {} rows of {}", report.skipped, path.display());
    }
    Ok(report.pairs)
}

fn vocab_paths(checkpoint: &Path) -> (PathBuf, PathBuf) {
    let dir = checkpoint.parent().unwrap_or_else(|| Path::new("."));
    (dir.join("vocab_words.tsv"), dir.join("vocab_chars.tsv"))
}

fn load_vocabs_near(checkpoint: &Path) -> CliResult<(Vocab, Vocab)> {
    let (wp, cp) = vocab_paths(checkpoint);
    let words = Vocab::load(&wp).map_err(as_config_error)?;
    let chars = Vocab::load(&cp).map_err(as_config_error)?;
    Ok((words, chars))
}

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    std::fs::write(path, content)
        .map_err(|e| classify(DrcnError::io(path.display().to_string(), e)))
}

fn csv_join(fields: &[String]) -> String {
    fields
        .iter()
        .map(|f| {
            if f.contains(',') || f.contains('"') || f.contains('\n') {
                format!("\"{}\"", f.replace('"', "\"\""))
            } else {
                f.clone()
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

// ───────────────────────── train ─────────────────────────

fn cmd_train(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(args, &["train", "dev", "out", "config", "seed"], &[])?;
    let (mut cfg, seed_in_file) = load_config(&flags, "paper-snli")?;
    resolve_seed(&flags, &mut cfg, seed_in_file)?;
    cfg.model.validate().map_err(classify)?;
    cfg.train.validate().map_err(classify)?;

    let labels = LabelMap::for_classes(cfg.model.num_classes).map_err(classify)?;
    let train_pairs = load_dataset(flags.required("train")?, labels)?;
    let dev_pairs = load_dataset(flags.required("dev")?, labels)?;
    let out_dir = PathBuf::from(flags.required("out")?);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| classify(DrcnError::io(out_dir.display().to_string(), e)))?;

    print!("{}", cfg.to_kv_string());

    let words = Vocab::build_words(&train_pairs);
    let chars = Vocab::build_chars(&train_pairs);
    let mut rng = DrcnRng::stream(cfg.train.seed, "init");
    let mut model = DrcnModel::init(cfg.model.clone(), words.len(), chars.len(), &mut rng)
        .map_err(classify)?;
    if let Some(path) = &cfg.glove {
        let mut grng = DrcnRng::stream(cfg.train.seed, "oov");
        let (table, coverage) =
            drcn::data::load_glove(path, &words, cfg.model.word_dim, &mut grng)
                .map_err(classify)?;
        model.load_word_embeddings(&table).map_err(classify)?;
        println!("glove_coverage\t{coverage:.4}");
    }
    let (non_emb, emb) = model.param_counts();
    println!("params_non_embedding\t{non_emb}");
    println!("params_embedding\t{emb}");

    let outcome = train_loop(&mut model, &train_pairs, &dev_pairs, &words, &chars, &cfg.train)
        .map_err(classify)?;

    save_model(&model, &out_dir.join("model.drcn")).map_err(classify)?;
    words.dump(&out_dir.join("vocab_words.tsv")).map_err(classify)?;
    chars.dump(&out_dir.join("vocab_chars.tsv")).map_err(classify)?;
    let mut log = String::from("epoch,lr,train_xent,train_recon,dev_acc,seconds\r\n");
    for e in &outcome.log {
        writeln!(
            log,
            "{},{},{},{},{},{:.3}\r",
            e.epoch, e.lr, e.train_xent, e.train_recon, e.dev_acc, e.seconds
        )
        .unwrap();
    }
    write_file(&out_dir.join("train_log.csv"), &log)?;

    println!("best_epoch\t{}", outcome.best_epoch);
    println!("best_dev_acc\t{:.6}", outcome.best_dev_acc);
    println!("checkpoint\t{}", out_dir.join("model.drcn").display());
    Ok(())
}

// ───────────────────────── eval ─────────────────────────

fn cmd_eval(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(args, &["checkpoint", "data", "metric", "ensemble"], &[])?;
    let metric = flags.optional("metric").unwrap_or("all");
    if !["acc", "map", "mrr", "all"].contains(&metric) {
        return Err(CliError::usage(format!("unknown metric {metric:?}")));
    }

    let (models, words, chars) = if let Some(dir) = flags.optional("ensemble") {
        let dir = Path::new(dir);
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| classify(DrcnError::io(dir.display().to_string(), e)))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|x| x == "drcn").unwrap_or(false))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(CliError::usage(format!("no .drcn checkpoints in {}", dir.display())));
        }
        let mut models = Vec::new();
        for p in &paths {
            models.push(load_model(p).map_err(as_config_error)?);
        }
        let (words, chars) = load_vocabs_near(&paths[0])?;
        (models, words, chars)
    } else {
        let ckpt = PathBuf::from(flags.required("checkpoint")?);
        let model = load_model(&ckpt).map_err(as_config_error)?;
        let (words, chars) = load_vocabs_near(&ckpt)?;
        (vec![model], words, chars)
    };

    let labels = LabelMap::for_classes(models[0].config.num_classes).map_err(classify)?;
    let pairs = load_dataset(flags.required("data")?, labels)?;
    let refs: Vec<&DrcnModel> = models.iter().collect();
    let max_len = 1000; // evaluation does not truncate beyond this guard
    let report = evaluate(&refs, &pairs, &words, &chars, 32, max_len).map_err(classify)?;

    match metric {
        "acc" => println!("accuracy\t{:.6}", report.accuracy),
        "map" => match report.map {
            Some(v) => println!("map\t{v:.6}"),
            None => {
                return Err(CliError {
                    code: 2,
                    message: "MAP requested but the data has no ranking groups".into(),
                })
            }
        },
        "mrr" => match report.mrr {
            Some(v) => println!("mrr\t{v:.6}"),
            None => {
                return Err(CliError {
                    code: 2,
                    message: "MRR requested but the data has no ranking groups".into(),
                })
            }
        },
        _ => {
            println!("accuracy\t{:.6}", report.accuracy);
            if let Some(v) = report.map {
                println!("map\t{v:.6}");
            }
            if let Some(v) = report.mrr {
                println!("mrr\t{v:.6}");
            }
            println!("xent\t{:.6}", report.xent);
            println!("recon\t{:.6}", report.recon);
            println!("pairs\t{}", report.pairs);
            if report.skipped_groups > 0 {
                eprintln!(
                    "warning: {} groups without positives skipped",
                    report.skipped_groups
                );
            }
            for (c, (gold, correct)) in
                report.per_class_gold.iter().zip(&report.per_class_correct).enumerate()
            {
                println!("class_{c}\t{correct}/{gold}");
            }
        }
    }
    Ok(())
}

// ───────────────────────── gradcheck ─────────────────────────

fn cmd_gradcheck(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(args, &["config"], &[])?;
    let which = flags.optional("config").unwrap_or("all");
    let combos: Vec<(&str, ConnectionMode, bool)> = vec![
        ("micro-dense", ConnectionMode::Dense, true),
        ("micro-dense-noattn", ConnectionMode::Dense, false),
        ("micro-residual", ConnectionMode::Residual, true),
        ("micro-residual-noattn", ConnectionMode::Residual, false),
        ("micro-plain-attn", ConnectionMode::Plain, true),
        ("micro-plain", ConnectionMode::Plain, false),
    ];
    let selected: Vec<(&str, ConnectionMode, bool)> = match which {
        "all" => combos,
        "corrupt" => {
            // negative control: a deliberately corrupted backward pass
            let report = run_micro_gradcheck_corrupted().map_err(classify)?;
            println!(
                "corrupt\tmax_rel_err\t{:.3e}\tworst\t{}[{}]",
                report.max_rel_err, report.worst_param, report.worst_index
            );
            if report.max_rel_err >= MICRO_GRADCHECK_TOLERANCE {
                return Err(CliError {
                    code: 3,
                    message: format!(
                        "gradient check failed as expected: {:.3e} >= {:e}",
                        report.max_rel_err, MICRO_GRADCHECK_TOLERANCE
                    ),
                });
            }
            return Ok(());
        }
        name => {
            let combo = combos
                .iter()
                .find(|(n, _, _)| *n == name)
                .copied()
                .ok_or_else(|| CliError::usage(format!("unknown gradcheck config {name:?}")))?;
            vec![combo]
        }
    };
    let mut worst_overall = 0.0f64;
    for (name, mode, attention) in selected {
        let report = run_micro_gradcheck(mode, attention).map_err(classify)?;
        println!(
            "{name}\tmax_rel_err\t{:.3e}\tworst\t{}[{}]\tcoords\t{}",
            report.max_rel_err, report.worst_param, report.worst_index, report.coords_checked
        );
        worst_overall = worst_overall.max(report.max_rel_err);
    }
    if worst_overall >= MICRO_GRADCHECK_TOLERANCE {
        return Err(CliError {
            code: 3,
            message: format!(
                "gradient check failed: {worst_overall:.3e} >= {:e}",
                MICRO_GRADCHECK_TOLERANCE
            ),
        });
    }
    Ok(())
}

// ───────────────────────── visualize ─────────────────────────

fn cmd_visualize(args: &[String]) -> CliResult<()> {
    let flags =
        Flags::parse(args, &["checkpoint", "premise", "hypothesis", "out", "max-len"], &[])?;
    let ckpt = PathBuf::from(flags.required("checkpoint")?);
    let premise = flags.required("premise")?;
    let hypothesis = flags.required("hypothesis")?;
    let out = PathBuf::from(flags.required("out")?);
    let max_len: usize = match flags.optional("max-len") {
        Some(v) => v.parse().map_err(|_| CliError::usage(format!("bad --max-len {v:?}")))?,
        None => 100,
    };
    let model = load_model(&ckpt).map_err(as_config_error)?;
    let (words, chars) = load_vocabs_near(&ckpt)?;
    let files =
        export_pair_visualization(&model, premise, hypothesis, &words, &chars, max_len, &out)
            .map_err(as_config_error)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

// ───────────────────────── ablate ─────────────────────────

fn cmd_ablate(args: &[String]) -> CliResult<()> {
    let flags = Flags::parse(
        args,
        &["data", "test", "suite", "budget", "config", "jobs", "out", "seed"],
        &["depth-sweep"],
    )?;
    let (mut cfg, seed_in_file) = load_config(&flags, "desk-ablate")?;
    resolve_seed(&flags, &mut cfg, seed_in_file)?;
    if let Some(b) = flags.optional("budget") {
        cfg.train.max_epochs =
            b.parse().map_err(|_| CliError::usage(format!("bad --budget {b:?}")))?;
    }
    let jobs: usize = match flags.optional("jobs") {
        Some(v) => v.parse().map_err(|_| CliError::usage(format!("bad --jobs {v:?}")))?,
        None => 1,
    };
    let suite_arg = flags.optional("suite").unwrap_or("all");
    let suite: Vec<Variant> = if suite_arg == "all" {
        Variant::all()
    } else {
        let names: Vec<&str> =
            suite_arg.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
        if names.is_empty() {
            return Err(CliError::usage("empty ablation suite"));
        }
        names
            .into_iter()
            .map(|n| Variant::parse(n).map_err(|e| CliError::usage(e.to_string())))
            .collect::<CliResult<Vec<_>>>()?
    };

    let labels = LabelMap::for_classes(cfg.model.num_classes).map_err(classify)?;
    let all_pairs = load_dataset(flags.required("data")?, labels)?;
    let (train_pairs, test_pairs) = match flags.optional("test") {
        Some(spec) => (all_pairs, load_dataset(spec, labels)?),
        None => {
            // deterministic 80/20 split under the run seed
            let mut order: Vec<usize> = (0..all_pairs.len()).collect();
            DrcnRng::stream(cfg.train.seed, "ablate-split").shuffle(&mut order);
            let cut = (all_pairs.len() * 4) / 5;
            let train: Vec<SentencePair> =
                order[..cut].iter().map(|&i| all_pairs[i].clone()).collect();
            let test: Vec<SentencePair> =
                order[cut..].iter().map(|&i| all_pairs[i].clone()).collect();
            (train, test)
        }
    };
    if train_pairs.is_empty() || test_pairs.is_empty() {
        return Err(CliError {
            code: 2,
            message: "ablation needs nonempty train and test splits".into(),
        });
    }
    let words = Vocab::build_words(&train_pairs);
    let chars = Vocab::build_chars(&train_pairs);

    let mut csv = String::new();
    if flags.has("depth-sweep") {
        csv.push_str("variant,depth,accuracy\r\n");
        for &variant in &suite {
            let rows = run_depth_sweep(
                variant,
                &cfg.model,
                cfg.model.num_layers.max(5),
                &train_pairs,
                &test_pairs,
                &words,
                &chars,
                &cfg.train,
            )
            .map_err(classify)?;
            for r in rows {
                writeln!(
                    csv,
                    "{}\r",
                    csv_join(&[
                        variant.name().to_string(),
                        r.depth.to_string(),
                        format!("{:.6}", r.accuracy),
                    ])
                )
                .unwrap();
            }
        }
    } else {
        csv.push_str("variant,accuracy,params\r\n");
        let rows = run_ablation(
            &suite,
            &cfg.model,
            &train_pairs,
            &test_pairs,
            &words,
            &chars,
            &cfg.train,
            jobs,
        )
        .map_err(classify)?;
        for r in rows {
            writeln!(
                csv,
                "{}\r",
                csv_join(&[
                    r.variant.to_string(),
                    format!("{:.6}", r.accuracy),
                    r.params.to_string(),
                ])
            )
            .unwrap();
        }
    }
    print!("{csv}");
    if let Some(out) = flags.optional("out") {
        write_file(Path::new(out), &csv)?;
    }
    Ok(())
}
