use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Child, Command as Process};
use std::time::{Duration, Instant};

use eiqa_core::evalproto::{
    algo_disjoint_split, drop_report, drop_table, evaluate, evaluate_predictions, kfold_env_split, mean_report,
    per_algorithm_error, predict_split, report_table, standard_split,
};
use eiqa_core::sampler::Strategy;
use eiqa_core::synthdata::{build_dataset, BuildConfig, Dataset, Manifest, MANIFEST_FILE};
use eiqa_core::train::{pretrain_preference, run_variant, train_joint, train_quality, LogRecord};
use eiqa_core::{Error, EvalReport, ModelState, PredictionRecord, Protocol, Result, SplitPlan, Variant};
use serde::{Deserialize, Serialize};

use crate::settings::Settings;
use crate::{svg, AblateIo, CellIo, EvalIo, Io, ReportIo, TrainIo};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(io_err(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")))
    }
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    version: String,
    config: BTreeMap<String, String>,
    seeds: Vec<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    wall_clock_ms: u64,
    rerun: String,
}

struct Run<'a> {
    command: &'static str,
    settings: &'a Settings,
    dir: PathBuf,
    start: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    rerun_args: String,
}

impl<'a> Run<'a> {
    fn new(command: &'static str, settings: &'a Settings, out: &Path, rerun_args: String) -> Result<Self> {
        let dir = out.join(command);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self {
            command,
            settings,
            dir,
            start: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            rerun_args,
        })
    }

    fn output(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write(&path, contents)?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    fn finish(mut self, seeds: Vec<u64>) -> Result<()> {
        let settings_path = self.output("settings.txt", self.settings.to_text())?;
        let strict = self.settings.train.strict_determinism;
        let manifest = RunManifest {
            command: self.command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: self.settings.snapshot(),
            seeds,
            inputs: self.inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            wall_clock_ms: if strict { 0 } else { self.start.elapsed().as_millis() as u64 },
            rerun: format!("eiqa --config {} {} {}", settings_path.display(), self.command, self.rerun_args),
        };
        let path = self.dir.join("run_manifest.json");
        write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
    }
}

fn data_path(io: &Io) -> PathBuf {
    io.data.clone().unwrap_or_else(|| io.out.join("data").join(MANIFEST_FILE))
}

fn rerun_args(io: &Io) -> String {
    let mut s = format!("--out {}", io.out.display());
    if let Some(d) = &io.data {
        let _ = write!(s, " --data {}", d.display());
    }
    s
}

fn load_data(path: &Path) -> Result<Dataset> {
    require(path)?;
    Dataset::load_from_manifest(path)
}

fn split_for(settings: &Settings, manifest: &Manifest) -> Result<SplitPlan> {
    match settings.protocol {
        Protocol::Standard => standard_split(manifest, settings.test_fraction, settings.seed),
        Protocol::AlgoDisjoint => algo_disjoint_split(manifest, settings.train_algos, settings.seed),
        Protocol::KfoldEnv => kfold_env_split(manifest, settings.folds)?
            .into_iter()
            .nth(settings.fold)
            .ok_or_else(|| Error::Config(format!("fold {} out of range 0..{}", settings.fold, settings.folds))),
    }
}

pub fn gen_data(settings: &Settings, io: &Io) -> Result<()> {
    let cfg = BuildConfig {
        n_scenes: settings.scenes,
        k_algorithms: settings.algos,
        size: settings.size,
        seed: settings.seed,
    };
    let mut run = Run::new("gen-data", settings, &io.out, rerun_args(io))?;
    let out = io.out.join("data");
    let data = build_dataset(&cfg, &out)?;
    run.outputs.push(out.join(MANIFEST_FILE));
    run.outputs.push(out.join("images"));
    println!(
        "wrote {} images ({} scenes x {} algorithms, {}px) to {}",
        data.images.len(),
        settings.scenes,
        settings.algos,
        settings.size,
        out.display()
    );
    run.finish(vec![settings.seed])
}

pub fn pretrain(settings: &Settings, io: &Io) -> Result<()> {
    let path = data_path(io);
    let data = load_data(&path)?;
    let split = split_for(settings, &data.manifest)?;
    let cfg = settings.train_config();
    let mut run = Run::new("pretrain", settings, &io.out, rerun_args(io))?;
    run.inputs.push(path);
    let (state, log) = pretrain_preference(&data, &split, &cfg)?;
    run.output("preference.json", state.to_json()?)?;
    run.output("train_log.jsonl", log.to_jsonl()?)?;
    run.output("split.json", serde_json::to_string(&split)?)?;
    let losses = log.losses(1);
    match (losses.first(), losses.last()) {
        (Some(a), Some(b)) => println!("stage 1: {} epochs, loss {a:.4} -> {b:.4}", losses.len()),
        _ => println!("stage 1: no epochs"),
    }
    run.finish(vec![settings.seed])
}

pub fn train(settings: &Settings, args: &TrainIo) -> Result<()> {
    let io = &args.io;
    let path = data_path(io);
    let data = load_data(&path)?;
    let split = split_for(settings, &data.manifest)?;
    let cfg = settings.train_config();
    let ckpt = args.pretrained.clone().unwrap_or_else(|| io.out.join("pretrain").join("preference.json"));
    let mut rerun = rerun_args(io);
    if cfg.variant.needs_pretraining() {
        let _ = write!(rerun, " --pretrained {}", ckpt.display());
    }
    let mut run = Run::new("train", settings, &io.out, rerun)?;
    run.inputs.push(path);
    let (state, mut log) = match cfg.variant {
        Variant::Joint => train_joint(&data, &split, &cfg)?,
        Variant::NoPreference => train_quality(&data, &split, None, &cfg)?,
        _ => {
            require(&ckpt)?;
            let pre = ModelState::load(&ckpt)?;
            run.inputs.push(ckpt);
            train_quality(&data, &split, Some(pre), &cfg)?
        }
    };
    let report = evaluate(&state, &data, &split).ok();
    log.records.push(LogRecord::Summary {
        variant: cfg.variant,
        seed: cfg.seed,
        wall_clock_ms: if cfg.strict_determinism { 0 } else { run.start.elapsed().as_millis() as u64 },
        report,
    });
    run.output("model.json", state.to_json()?)?;
    run.output("train_log.jsonl", log.to_jsonl()?)?;
    if let Some(last) = log.losses(2).last().or(log.losses(3).last()) {
        println!("{}: final training loss {last:.4}", cfg.variant.name());
    }
    run.finish(vec![settings.seed])
}

fn predictions_tsv(preds: &[PredictionRecord]) -> String {
    let mut out = String::from("index\tscene_id\talgo_id\tmos\tpredicted\n");
    for p in preds {
        let _ = writeln!(out, "{}\t{}\t{}\t{:.6}\t{:.6}", p.index, p.scene_id, p.algo_id, p.mos, p.predicted);
    }
    out
}

fn parse_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            let bad = || Error::Parse {
                line: i + 1,
                message: format!("malformed prediction row `{l}`"),
            };
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(PredictionRecord {
                index: f[0].parse().map_err(|_| bad())?,
                scene_id: f[1].parse().map_err(|_| bad())?,
                algo_id: f[2].parse().map_err(|_| bad())?,
                mos: f[3].parse().map_err(|_| bad())?,
                predicted: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn eval(settings: &Settings, args: &EvalIo) -> Result<()> {
    let io = &args.io;
    let path = data_path(io);
    let ckpt = args.checkpoint.clone().unwrap_or_else(|| io.out.join("train").join("model.json"));
    require(&ckpt)?;
    let state = ModelState::load(&ckpt)?;
    let data = load_data(&path)?;
    let split = split_for(settings, &data.manifest)?;
    let preds = predict_split(&state, &data, &split)?;
    let report = evaluate_predictions(&preds)?;
    let mut run = Run::new("eval", settings, &io.out, format!("{} --checkpoint {}", rerun_args(io), ckpt.display()))?;
    run.inputs = vec![path, ckpt];
    let label = format!("{:?}", state.config.head).to_lowercase();
    let table = report_table(&[(label, report)]);
    run.output("report.tsv", &table)?;
    run.output("report.json", serde_json::to_string_pretty(&report)? + "\n")?;
    run.output("predictions.tsv", predictions_tsv(&preds))?;
    print!("{table}");
    run.finish(vec![settings.seed])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellSpec {
    variant: Variant,
    stage1_sampler: Strategy,
    protocol: Protocol,
    seed: u64,
}

impl CellSpec {
    fn name(&self) -> String {
        format!(
            "{}-{}-{}-s{}",
            self.protocol.name(),
            self.variant.name(),
            self.stage1_sampler.name(),
            self.seed
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellResult {
    spec: CellSpec,
    report: Option<EvalReport>,
    error: Option<String>,
    exit_code: u8,
}

fn grid(settings: &Settings) -> Vec<CellSpec> {
    let cc = Strategy::ContentControlled;
    let mut rows = vec![
        (Variant::Full, cc, Protocol::Standard),
        (Variant::NoPreference, cc, Protocol::Standard),
        (Variant::PreferenceConcat, cc, Protocol::Standard),
        (Variant::ClsPreference, cc, Protocol::Standard),
        (Variant::Joint, cc, Protocol::Standard),
        (Variant::TwoStageNoFreeze, cc, Protocol::Standard),
        (Variant::Full, Strategy::Random, Protocol::Standard),
        (Variant::Full, Strategy::AlgoBalanced, Protocol::Standard),
        (Variant::Full, cc, Protocol::AlgoDisjoint),
        (Variant::NoPreference, cc, Protocol::AlgoDisjoint),
    ];
    rows.dedup();
    (0..settings.seeds as u64)
        .flat_map(|i| {
            rows.iter().map(move |&(variant, stage1_sampler, protocol)| CellSpec {
                variant,
                stage1_sampler,
                protocol,
                seed: settings.seed + i,
            })
        })
        .collect()
}

fn run_cell(settings: &Settings, data: &Dataset, spec: &CellSpec, dir: &Path) -> CellResult {
    let attempt = || -> Result<EvalReport> {
        let s = Settings {
            seed: spec.seed,
            protocol: spec.protocol,
            ..settings.clone()
        };
        let split = split_for(&s, &data.manifest)?;
        let mut cfg = s.train_config();
        cfg.variant = spec.variant;
        cfg.stage1_sampler = spec.stage1_sampler;
        let (_, log, report) = run_variant(data, &split, &cfg)?;
        write(&dir.join("train_log.jsonl"), log.to_jsonl()?)?;
        Ok(report)
    };
    match attempt() {
        Ok(report) => CellResult {
            spec: spec.clone(),
            report: Some(report),
            error: None,
            exit_code: 0,
        },
        Err(e) => CellResult {
            spec: spec.clone(),
            report: None,
            error: Some(e.to_string()),
            exit_code: crate::exit_code(&e),
        },
    }
}

pub fn ablate_cell(settings: &Settings, io: &CellIo) -> Result<()> {
    let spec: CellSpec = serde_json::from_str(&io.cell)?;
    let data = load_data(&io.data)?;
    let result = run_cell(settings, &data, &spec, &io.cell_out);
    write(&io.cell_out.join("result.json"), serde_json::to_string_pretty(&result)? + "\n")
}

fn wait_any(children: &mut Vec<(Child, CellSpec, PathBuf)>) -> Result<(CellSpec, PathBuf)> {
    loop {
        for i in 0..children.len() {
            if let Some(_status) = children[i].0.try_wait().map_err(|e| io_err(&children[i].2, e))? {
                let (_, spec, dir) = children.remove(i);
                return Ok((spec, dir));
            }
        }
        std::thread::sleep(Duration::from_millis(50));
    }
}

fn read_result(spec: &CellSpec, dir: &Path) -> CellResult {
    fs::read_to_string(dir.join("result.json"))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_else(|| CellResult {
            spec: spec.clone(),
            report: None,
            error: Some("worker exited without a result".into()),
            exit_code: 2,
        })
}

pub fn ablate(settings: &Settings, args: &AblateIo) -> Result<()> {
    let io = &args.io;
    let path = data_path(io);
    let data = load_data(&path)?;
    let mut run = Run::new("ablate", settings, &io.out, format!("{} --parallel {}", rerun_args(io), args.parallel))?;
    run.inputs.push(path.clone());
    let cells_dir = run.dir.join("cells");
    let cells = grid(settings);
    let mut results: Vec<CellResult> = Vec::new();
    if args.parallel <= 1 {
        for spec in &cells {
            let dir = cells_dir.join(spec.name());
            let r = run_cell(settings, &data, spec, &dir);
            write(&dir.join("result.json"), serde_json::to_string_pretty(&r)? + "\n")?;
            eprintln!("{}: {}", spec.name(), summary(&r));
            results.push(r);
        }
    } else {
        let cfg_path = run.dir.join("settings.txt");
        write(&cfg_path, settings.to_text())?;
        let exe = std::env::current_exe().map_err(|e| io_err(Path::new("eiqa"), e))?;
        let mut running: Vec<(Child, CellSpec, PathBuf)> = Vec::new();
        for spec in &cells {
            if running.len() >= args.parallel {
                let (s, d) = wait_any(&mut running)?;
                results.push(read_result(&s, &d));
            }
            let dir = cells_dir.join(spec.name());
            let child = Process::new(&exe)
                .arg("--config")
                .arg(&cfg_path)
                .arg("ablate-cell")
                .arg("--data")
                .arg(&path)
                .arg("--cell")
                .arg(serde_json::to_string(spec)?)
                .arg("--cell-out")
                .arg(&dir)
                .spawn()
                .map_err(|e| io_err(&exe, e))?;
            running.push((child, spec.clone(), dir));
        }
        while !running.is_empty() {
            let (s, d) = wait_any(&mut running)?;
            results.push(read_result(&s, &d));
        }
        let order: Vec<String> = cells.iter().map(|c| c.name()).collect();
        results.sort_by_key(|r| order.iter().position(|n| *n == r.spec.name()));
    }
    for (name, text) in tables(&results) {
        print!("== {name}\n{text}\n");
        run.output(&format!("{name}.tsv"), text)?;
    }
    run.output("cells.json", serde_json::to_string_pretty(&results)? + "\n")?;
    let seeds: Vec<u64> = (0..settings.seeds as u64).map(|i| settings.seed + i).collect();
    run.finish(seeds)?;
    let failed: Vec<&CellResult> = results.iter().filter(|r| r.report.is_none()).collect();
    if failed.is_empty() {
        return Ok(());
    }
    let msg = format!("{} of {} ablation cells failed", failed.len(), results.len());
    if failed.iter().all(|r| r.exit_code == 3) {
        Err(Error::Degenerate(msg))
    } else {
        Err(Error::Config(msg))
    }
}

fn summary(r: &CellResult) -> String {
    match (&r.report, &r.error) {
        (Some(rep), _) => format!("SRCC {:.4} PLCC {:.4} KRCC {:.4}", rep.srcc, rep.plcc, rep.krcc),
        (None, Some(e)) => format!("FAILED ({e})"),
        _ => "FAILED".into(),
    }
}

fn cell_mean(results: &[CellResult], variant: Variant, sampler: Strategy, protocol: Protocol) -> Option<EvalReport> {
    let reports: Vec<EvalReport> = results
        .iter()
        .filter(|r| r.spec.variant == variant && r.spec.stage1_sampler == sampler && r.spec.protocol == protocol)
        .filter_map(|r| r.report)
        .collect();
    mean_report(&reports)
}

fn table(results: &[CellResult], rows: &[(&str, Variant, Strategy)]) -> String {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for &(label, v, s) in rows {
        match cell_mean(results, v, s, Protocol::Standard) {
            Some(r) => ok.push((label.to_string(), r)),
            None => failed.push(label),
        }
    }
    let mut text = report_table(&ok);
    for label in failed {
        let _ = writeln!(text, "{label}\tFAILED\tFAILED\tFAILED");
    }
    text
}

/// One table per ablation axis plus the standard-vs-unseen drop table. Each
/// cell is the mean over seeds.
fn tables(results: &[CellResult]) -> Vec<(String, String)> {
    let cc = Strategy::ContentControlled;
    let base = ("w/o preference", Variant::NoPreference, cc);
    let full = ("preference-guided debiasing", Variant::Full, cc);
    let mut out = vec![
        ("table4_debiasing".to_string(), table(results, &[base, ("preference concat", Variant::PreferenceConcat, cc), full])),
        (
            "table5_representation".to_string(),
            table(results, &[base, ("cls-based preference", Variant::ClsPreference, cc), ("supcon-based preference", Variant::Full, cc)]),
        ),
        (
            "table6_training".to_string(),
            table(
                results,
                &[
                    base,
                    ("joint training", Variant::Joint, cc),
                    ("two-stage w/o freezing", Variant::TwoStageNoFreeze, cc),
                    ("two-stage w/ freezing", Variant::Full, cc),
                ],
            ),
        ),
        (
            "table7_sampling".to_string(),
            table(
                results,
                &[
                    base,
                    ("random sampling", Variant::Full, Strategy::Random),
                    ("algorithm-balanced sampling", Variant::Full, Strategy::AlgoBalanced),
                    ("content-controlled sampling", Variant::Full, cc),
                ],
            ),
        ),
    ];
    let mut drops = Vec::new();
    let mut missing = Vec::new();
    for (label, v) in [("w/o preference", Variant::NoPreference), ("ours", Variant::Full)] {
        match (
            cell_mean(results, v, cc, Protocol::Standard),
            cell_mean(results, v, cc, Protocol::AlgoDisjoint),
        ) {
            (Some(s), Some(u)) => drops.push((label.to_string(), drop_report(&s, &u))),
            _ => missing.push(label),
        }
    }
    let mut text = drop_table(&drops);
    for label in missing {
        let _ = writeln!(text, "{label}\tFAILED");
    }
    out.push(("table3_drop".to_string(), text));
    out
}

pub fn report(settings: &Settings, args: &ReportIo) -> Result<()> {
    let mut inputs: Vec<PathBuf> = Vec::new();
    let default = args.out.join("eval").join("predictions.tsv");
    if default.exists() {
        inputs.push(default);
    }
    for p in &args.predictions {
        require(p)?;
        inputs.push(p.clone());
    }
    if inputs.is_empty() {
        return Err(Error::Config(format!(
            "no evaluation artifacts: expected {} or --predictions",
            args.out.join("eval").join("predictions.tsv").display()
        )));
    }
    let mut run = Run::new("report", settings, &args.out, format!("--out {}", args.out.display()))?;
    let mut rows = Vec::new();
    let mut per_algo = String::from("Artifact\tAlgorithm\tMeanAbsError\tStd\tN\n");
    let mut used = BTreeMap::new();
    for path in &inputs {
        let preds = parse_predictions(path)?;
        let base = path
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "eval".into());
        let n = used.entry(base.clone()).or_insert(0usize);
        *n += 1;
        let stem = if *n == 1 { base } else { format!("{base}{n}") };
        let stats = per_algorithm_error(&preds);
        run.output(&format!("{stem}_scatter.svg"), svg::scatter(&format!("{stem}: predicted vs. MOS"), &preds))?;
        run.output(&format!("{stem}_errors.svg"), svg::error_bars(&format!("{stem}: error per algorithm"), &stats))?;
        for (a, (m, sd, count)) in &stats {
            let _ = writeln!(per_algo, "{stem}\t{a}\t{m:.4}\t{sd:.4}\t{count}");
        }
        if let Ok(r) = evaluate_predictions(&preds) {
            rows.push((stem, r));
        }
        run.inputs.push(path.clone());
    }
    let summary = report_table(&rows);
    run.output("summary.tsv", &summary)?;
    run.output("per_algorithm.tsv", &per_algo)?;
    print!("{summary}");
    run.finish(vec![settings.seed])
}
