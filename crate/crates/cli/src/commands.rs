use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use netfair::data_io::{load_dataset, load_generated, save_generated, DatasetManifest};
use netfair::fairness::{report_for, train_fair_classifier, Classifier, FairConfig, FairRun, FairnessReport, Objective, Split};
use netfair::graph::Graph;
use netfair::mpva::MpvaModel;
use netfair::nscm::{generate_semi_synthetic, BaseTable, DiscreteNscm, GenConfig};
use netfair::table::NodeTable;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::output::{ensure_valid, mean_std, RunConfig, RunDir};
use crate::{
    AuditArgs, ClassifierArgs, DataArgs, GenerateArgs, MitigateArgs, ObjectiveArg, OracleCheckArgs, SensitivityArgs,
    SweepArgs, TrainMpvaArgs,
};

struct Source {
    name: String,
    graph: Graph,
    table: NodeTable,
}

fn source_problems(src: &DataArgs) -> Vec<String> {
    match (&src.data, &src.manifest) {
        (None, None) => vec!["one of --data or --manifest is required".into()],
        _ => Vec::new(),
    }
}

fn load_source(root: &Path, src: &DataArgs) -> Result<Source> {
    if let Some(dir) = &src.data {
        let dir = root.join(dir);
        let d = load_generated(&dir).with_context(|| format!("loading generated dataset {}", dir.display()))?;
        return Ok(Source {
            name: d.meta.config.preset.clone(),
            graph: d.graph,
            table: d.table,
        });
    }
    let path = root.join(src.manifest.as_ref().expect("validated"));
    let manifest = DatasetManifest::load(&path)?;
    ensure_valid("manifest", manifest.problems())?;
    let base = path.parent().unwrap_or(Path::new("."));
    let d = load_dataset(&manifest, base)?;
    for w in &d.warnings {
        warn!("{w}");
    }
    Ok(Source {
        name: d.name,
        graph: d.graph,
        table: d.table,
    })
}

fn load_model(root: &Path, path: Option<&PathBuf>) -> Result<Option<MpvaModel>> {
    path.map(|p| {
        let p = root.join(p);
        MpvaModel::load(&p).with_context(|| format!("loading model {}", p.display()))
    })
    .transpose()
}

fn fair_config(objective: ObjectiveArg, lambda: f64, clf: &ClassifierArgs, seed: u64) -> FairConfig {
    FairConfig {
        objective: objective.into(),
        lambda,
        tau: clf.tau,
        kind: clf.kind.into(),
        hidden: clf.clf_hidden,
        epochs: clf.epochs,
        lr: clf.clf_lr,
        test_fraction: clf.test_fraction,
        seed,
    }
}

fn check_report(r: &FairnessReport) -> Result<()> {
    if !r.all_finite() {
        bail!("non-finite metric in report for {} seed {}", r.method, r.seed);
    }
    for (name, v) in [("acc", Some(r.accuracy)), ("rd", Some(r.rd)), ("gcf", r.gcf), ("true_gcf", r.true_gcf)] {
        if let Some(v) = v {
            if !(0.0..=1.0).contains(&v) {
                bail!("{name} = {v} outside [0, 1] for {} seed {}", r.method, r.seed);
            }
        }
    }
    Ok(())
}

fn log_config<T: serde::Serialize>(config: &RunConfig<'_, T>) -> Result<()> {
    info!("{} config {} digest {}", config.command, serde_json::to_string(config.args)?, config.digest());
    Ok(())
}

pub fn generate(root: &Path, a: &GenerateArgs) -> Result<()> {
    let config = RunConfig { command: "generate", args: a };
    log_config(&config)?;
    let mut cfg = GenConfig::preset(&a.preset, a.seed)?;
    if let Some(n) = a.n {
        cfg.n = n;
    }
    ensure_valid("generate", cfg.problems())?;
    let data = generate_semi_synthetic(&BaseTable::credit_like(cfg.n, cfg.base_seed), &cfg)?;
    if !data.table.x.all_finite() {
        bail!("generated features are not finite");
    }
    let out = root.join(&a.out);
    save_generated(&out, &data.graph, &data.table, &cfg, &data.spec)?;
    println!(
        "{} seed {}: {} nodes, {} edges (mean degree {:.2}), spec {} -> {}",
        cfg.preset,
        cfg.seed,
        cfg.n,
        data.graph.num_edges(),
        data.graph.mean_degree(),
        &data.spec.digest()[..12],
        out.display()
    );
    Ok(())
}

pub fn train_mpva(root: &Path, a: &TrainMpvaArgs) -> Result<()> {
    let config = RunConfig { command: "train-mpva", args: a };
    log_config(&config)?;
    let cfg = a.mpva.config(a.layers, a.seed);
    let mut problems = source_problems(&a.source);
    problems.extend(cfg.problems());
    if a.name.is_empty() || a.name.contains(['/', '\\']) {
        problems.push(format!("name must be a plain file stem, got {:?}", a.name));
    }
    ensure_valid("train-mpva", problems)?;

    let src = load_source(root, &a.source)?;
    let run = RunDir::create(root.join(&a.out), &config)?;
    let mut model = MpvaModel::new(cfg, src.table.x.cols(), src.table.z.cols());
    let (phase1, phase2) = model.fit(&src.graph, &src.table)?;
    if !model.params.all_finite() {
        bail!("trained parameters are not finite");
    }
    let ckpt = run.ckpt(&a.name);
    model.save(&ckpt)?;

    let digest = run.digest();
    let mut rows = Vec::with_capacity(phase1.len() + phase2.len());
    for (phase, trace) in [(1, &phase1), (2, &phase2)] {
        rows.extend(trace.iter().enumerate().map(|(e, l)| format!("{phase},{e},{l:.8},{},{digest}", a.seed)));
    }
    run.write_table(&format!("{}_loss.csv", a.name), "phase,epoch,loss,seed,config_digest", &rows)?;

    let error = model.interventional_error(&src.graph, &src.table)?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    run.write_table(
        &format!("{}_summary.csv", a.name),
        "dataset,seed,layers,phase1_loss,phase2_loss,interventional_mae,config_digest",
        &[format!(
            "{},{},{},{},{},{},{digest}",
            src.name,
            a.seed,
            a.layers,
            fmt(phase1.last().copied()),
            fmt(phase2.last().copied()),
            fmt(error)
        )],
    )?;
    match error {
        Some(e) => println!("{}: trained {} (interventional MAE {e:.4})", src.name, ckpt.display()),
        None => println!("{}: trained {}", src.name, ckpt.display()),
    }
    Ok(())
}

pub fn audit(root: &Path, a: &AuditArgs) -> Result<()> {
    let config = RunConfig { command: "audit", args: a };
    log_config(&config)?;
    let mut cfg = fair_config(ObjectiveArg::None, 0.0, &a.clf, a.seed);
    let mut problems = source_problems(&a.source);
    problems.extend(cfg.problems());
    ensure_valid("audit", problems)?;

    let src = load_source(root, &a.source)?;
    let model = load_model(root, a.model.as_ref())?;
    let h = match &a.classifier {
        Some(p) => {
            let p = root.join(p);
            Classifier::load(&p).with_context(|| format!("loading classifier {}", p.display()))?
        }
        None => {
            warn!("no classifier given; auditing an untrained one");
            Classifier::new(cfg.kind, src.table.x.cols(), cfg.hidden, a.seed)
        }
    };
    cfg.kind = h.kind;
    let run = RunDir::create(root.join(&a.out), &config)?;
    let split = Split::stratified(&src.table.s, cfg.test_fraction, a.seed)?;
    let mut report = report_for(&src.name, &h, &src.graph, &src.table, model.as_ref(), &split, &cfg)?;
    report.method = format!("audit-{}", report.method.split('-').next().unwrap_or("clf"));
    report.config_digest = run.digest().to_string();
    check_report(&report)?;
    let path = run.write_table("audit.csv", FairnessReport::CSV_HEADER, &[report.csv_line()])?;
    print_report(&report);
    println!("wrote {}", path.display());
    Ok(())
}

fn print_report(r: &FairnessReport) {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    println!(
        "{} {} seed {} lambda {}: acc {:.4} rd {:.4} cf {:.4} gcf {} true_gcf {} own {}/{}",
        r.dataset,
        r.method,
        r.seed,
        r.lambda,
        r.accuracy,
        r.rd,
        r.cf,
        opt(r.gcf),
        opt(r.true_gcf),
        opt(r.own_train),
        opt(r.own_test)
    );
}

fn fair_problems(src: &DataArgs, objective: ObjectiveArg, lambdas: &[f64], seeds: &[u64], clf: &ClassifierArgs, model: Option<&PathBuf>) -> Vec<String> {
    let mut problems = source_problems(src);
    if seeds.is_empty() {
        problems.push("at least one seed is required".into());
    }
    if lambdas.is_empty() {
        problems.push("at least one lambda is required".into());
    }
    for &l in lambdas {
        problems.extend(fair_config(objective, l, clf, 0).problems());
    }
    if matches!(objective, ObjectiveArg::Gcf) && model.is_none() {
        problems.push("objective gcf needs --model from train-mpva".into());
    }
    problems.sort();
    problems.dedup();
    problems
}

fn run_fair(src: &Source, model: Option<&MpvaModel>, cfg: &FairConfig) -> Result<FairRun> {
    let run = train_fair_classifier(&src.name, &src.graph, &src.table, model, cfg)?;
    check_report(&run.report)?;
    Ok(run)
}

fn summary_rows(reports: &[&FairnessReport], digest: &str) -> Vec<String> {
    let columns: [(&str, fn(&FairnessReport) -> Option<f64>); 7] = [
        ("acc", |r| Some(r.accuracy)),
        ("rd", |r| Some(r.rd)),
        ("cf", |r| Some(r.cf)),
        ("gcf", |r| r.gcf),
        ("true_gcf", |r| r.true_gcf),
        ("own_train", |r| r.own_train),
        ("own_test", |r| r.own_test),
    ];
    columns
        .iter()
        .filter_map(|(name, get)| {
            let values: Option<Vec<f64>> = reports.iter().map(|r| get(r)).collect();
            let values = values?;
            let (m, s) = mean_std(&values);
            Some(format!("{name},{m:.6},{s:.6},{},{digest}", values.len()))
        })
        .collect()
}

pub fn mitigate(root: &Path, a: &MitigateArgs) -> Result<()> {
    let config = RunConfig { command: "mitigate", args: a };
    log_config(&config)?;
    ensure_valid(
        "mitigate",
        fair_problems(&a.source, a.objective, &[a.lambda], &a.seeds, &a.clf, a.model.as_ref()),
    )?;
    let src = load_source(root, &a.source)?;
    let model = load_model(root, a.model.as_ref())?;
    let run_dir = RunDir::create(root.join(&a.out), &config)?;

    let runs: Vec<FairRun> = a
        .seeds
        .par_iter()
        .map(|&seed| run_fair(&src, model.as_ref(), &fair_config(a.objective, a.lambda, &a.clf, seed)))
        .collect::<Result<_>>()?;
    let method = runs[0].report.method.clone();
    let stem = format!("mitigate_{method}_l{}", a.lambda);
    for r in &runs {
        r.classifier.save(&run_dir.ckpt(&format!("{stem}_s{}", r.report.seed)))?;
        print_report(&r.report);
    }
    let lines: Vec<String> = runs.iter().map(|r| r.report.csv_line()).collect();
    run_dir.write_table(&format!("{stem}.csv"), FairnessReport::CSV_HEADER, &lines)?;
    let reports: Vec<&FairnessReport> = runs.iter().map(|r| &r.report).collect();
    let path = run_dir.write_table(
        &format!("{stem}_summary.csv"),
        "metric,mean,std,seeds,config_digest",
        &summary_rows(&reports, run_dir.digest()),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn sweep(root: &Path, a: &SweepArgs) -> Result<()> {
    let config = RunConfig { command: "sweep", args: a };
    log_config(&config)?;
    ensure_valid(
        "sweep",
        fair_problems(&a.source, a.objective, &a.lambdas, &a.seeds, &a.clf, a.model.as_ref()),
    )?;
    let src = load_source(root, &a.source)?;
    let model = load_model(root, a.model.as_ref())?;
    let run_dir = RunDir::create(root.join(&a.out), &config)?;

    let mut lambdas = a.lambdas.clone();
    if !lambdas.contains(&0.0) {
        lambdas.insert(0, 0.0);
    }
    let jobs: Vec<(f64, u64)> = lambdas.iter().flat_map(|&l| a.seeds.iter().map(move |&s| (l, s))).collect();
    let reports: Vec<FairnessReport> = jobs
        .par_iter()
        .map(|&(l, seed)| Ok(run_fair(&src, model.as_ref(), &fair_config(a.objective, l, &a.clf, seed))?.report))
        .collect::<Result<_>>()?;
    let objective: Objective = a.objective.into();
    let stem = format!("sweep_{}", objective.name());
    let lines: Vec<String> = reports.iter().map(FairnessReport::csv_line).collect();
    run_dir.write_table(&format!("{stem}.csv"), FairnessReport::CSV_HEADER, &lines)?;

    let digest = run_dir.digest();
    let mut rows = Vec::new();
    println!("{:>7} {:>15} {:>15} {:>15} {:>15}", "lambda", "acc", "rd", "gcf", "true_gcf");
    for &l in &lambdas {
        let at: Vec<&FairnessReport> = reports.iter().filter(|r| r.lambda == l).collect();
        let stat = |get: &dyn Fn(&FairnessReport) -> Option<f64>| -> Option<(f64, f64)> {
            let v: Option<Vec<f64>> = at.iter().map(|r| get(r)).collect();
            v.map(|v| mean_std(&v))
        };
        let cells = [
            stat(&|r| Some(r.accuracy)),
            stat(&|r| Some(r.rd)),
            stat(&|r| Some(r.cf)),
            stat(&|r| r.gcf),
            stat(&|r| r.true_gcf),
        ];
        let csv: Vec<String> = cells
            .iter()
            .map(|c| c.map(|(m, s)| format!("{m:.6},{s:.6}")).unwrap_or_else(|| ",".into()))
            .collect();
        rows.push(format!("{l},{},{},{digest}", csv.join(","), at.len()));
        let show = |c: Option<(f64, f64)>| c.map(|(m, s)| format!("{m:.4}±{s:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{l:>7} {:>15} {:>15} {:>15} {:>15}",
            show(cells[0]),
            show(cells[1]),
            show(cells[3]),
            show(cells[4])
        );
    }
    let path = run_dir.write_table(
        &format!("{stem}_summary.csv"),
        "lambda,acc_mean,acc_std,rd_mean,rd_std,cf_mean,cf_std,gcf_mean,gcf_std,true_gcf_mean,true_gcf_std,seeds,config_digest",
        &rows,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn parse_layers(spec: &str) -> std::result::Result<Vec<usize>, String> {
    let bad = || format!("layers must be `a..b` or a comma list of positive integers, got {spec:?}");
    let out: Vec<usize> = if let Some((lo, hi)) = spec.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        (lo..=hi).collect()
    } else {
        spec.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<std::result::Result<_, _>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}

pub fn sensitivity(root: &Path, a: &SensitivityArgs) -> Result<()> {
    let config = RunConfig { command: "sensitivity", args: a };
    log_config(&config)?;
    let mut problems = Vec::new();
    let layers = parse_layers(&a.layers).unwrap_or_else(|e| {
        problems.push(e);
        Vec::new()
    });
    if a.seeds == 0 {
        problems.push("seeds must be positive".into());
    }
    problems.extend(a.mpva.config(1, 0).problems());
    match GenConfig::preset(&a.preset, 0) {
        Ok(mut g) => {
            if let Some(n) = a.n {
                g.n = n;
            }
            problems.extend(g.problems());
        }
        Err(e) => problems.push(e.to_string()),
    }
    ensure_valid("sensitivity", problems)?;
    let run_dir = RunDir::create(root.join(&a.out), &config)?;

    let per_seed: Vec<Vec<f64>> = (0..a.seeds)
        .into_par_iter()
        .map(|seed| {
            let mut cfg = GenConfig::preset(&a.preset, seed)?;
            if let Some(n) = a.n {
                cfg.n = n;
            }
            let data = generate_semi_synthetic(&BaseTable::credit_like(cfg.n, cfg.base_seed), &cfg)?;
            layers
                .iter()
                .map(|&l| {
                    let mcfg = a.mpva.config(l, seed);
                    let mut m = MpvaModel::new(mcfg, data.table.x.cols(), data.table.z.cols());
                    m.fit(&data.graph, &data.table)?;
                    let err = m.interventional_error(&data.graph, &data.table)?.context("dataset lacks ground truth")?;
                    if !err.is_finite() {
                        bail!("non-finite estimation error at L={l}, seed {seed}");
                    }
                    info!("seed {seed} L={l}: error {err:.4}");
                    Ok(err)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let digest = run_dir.digest();
    let mut rows = Vec::new();
    for (seed, errs) in per_seed.iter().enumerate() {
        for (&l, e) in layers.iter().zip(errs) {
            rows.push(format!("{l},{seed},{e:.6},{digest}"));
        }
    }
    run_dir.write_table("sensitivity.csv", "layers,seed,error,config_digest", &rows)?;

    let stats: Vec<(usize, f64, f64)> = layers
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let col: Vec<f64> = per_seed.iter().map(|e| e[k]).collect();
            let (m, s) = mean_std(&col);
            (l, m, s)
        })
        .collect();
    let best = stats.iter().min_by(|x, y| x.1.total_cmp(&y.1)).expect("layers non-empty").0;
    let summary: Vec<String> = stats
        .iter()
        .map(|(l, m, s)| format!("{l},{m:.6},{s:.6},{},{digest}", a.seeds))
        .collect();
    let path = run_dir.write_table("sensitivity_summary.csv", "layers,mean,std,seeds,config_digest", &summary)?;
    println!("{:>6} {:>10} {:>10}", "layers", "mean", "std");
    for (l, m, s) in &stats {
        let mark = if *l == best { " <- min" } else { "" };
        println!("{l:>6} {m:>10.4} {s:>10.4}{mark}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn oracle_check(root: &Path, a: &OracleCheckArgs) -> Result<()> {
    let config = RunConfig { command: "oracle-check", args: a };
    log_config(&config)?;
    let mut problems = Vec::new();
    if a.trials == 0 {
        problems.push("trials must be positive".into());
    }
    if !(3..=7).contains(&a.max_n) {
        problems.push(format!("max_n must lie in 3..=7, got {}", a.max_n));
    }
    if !(a.tolerance.is_finite() && a.tolerance > 0.0) {
        problems.push(format!("tolerance must be positive, got {}", a.tolerance));
    }
    ensure_valid("oracle-check", problems)?;

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut rows = Vec::with_capacity(a.trials);
    let mut passed = 0;
    for trial in 0..a.trials {
        let model = DiscreteNscm::random(&mut rng, a.max_n);
        let do1 = model.compare_interventional(1).max_abs_diff;
        let do0 = model.compare_interventional(0).max_abs_diff;
        let decomposition = model.observational_decomposition_check();
        let ok = model.validate().is_ok() && [do1, do0, decomposition].iter().all(|&d| d <= a.tolerance);
        passed += usize::from(ok);
        rows.push(format!("{trial},{},{do1:e},{do0:e},{decomposition:e},{ok},{}", model.n(), a.seed));
    }
    if let Some(out) = &a.out {
        let run_dir = RunDir::create(root.join(out), &config)?;
        let rows: Vec<String> = rows.iter().map(|r| format!("{r},{}", run_dir.digest())).collect();
        run_dir.write_table(
            "oracle_check.csv",
            "trial,n,do1_max_diff,do0_max_diff,decomposition_residual,pass,seed,config_digest",
            &rows,
        )?;
    }
    println!("{passed}/{} within {:e}", a.trials, a.tolerance);
    if passed != a.trials {
        bail!("{} of {} trials exceeded the tolerance", a.trials - passed, a.trials);
    }
    Ok(())
}
