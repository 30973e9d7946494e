use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use surfeat::analytics::{correlation_table, heatmap_svg, pca_2d, select_k, tsne_2d, Projection2D, Table, TsneConfig};
use surfeat::cloudmodels::{Architecture, AuxChannel, CloudModel, CloudModelConfig, Task, TrainConfig};
use surfeat::featurestore::{
    aggregate_stats, assign_voxel_features, synth_classification_set, synth_segmentation_set, FeatureField,
    LabeledCloud, SynthCloudSpec, DEFAULT_GRID_SIDE,
};
use surfeat::formats::{read_sfms, read_sfpc, write_sfms, write_sfpc, write_sfvx, Checkpoint};
use surfeat::geometry::{normalize_cloud, sample_to_fixed, PointCloud, SamplingMode};
use surfeat::harness::{
    reference_classification, reference_segmentation, reference_simulation, report_render, stratified_split,
    CloudTrainer, MetricReport, RunManifest, RunMetrics, METRIC_COLUMNS,
};
use surfeat::kv::KvFile;
use surfeat::meshsim::{pooled_rmse, rollout, synth_mesh, MeshGraphSequence, MeshSynthSpec, RolloutModel, RolloutTrainConfig};
use surfeat::{Error, Result};

/// Point-cloud and mesh learning with per-point surface features.
#[derive(Parser)]
#[command(name = "surfeat", version)]
struct Cli {
    /// Seed for every random stream of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Key-value configuration merged over the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "SURFEAT_OUT", default_value = "surfeat-out")]
    out: PathBuf,
    /// Worker threads for evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a point CSV and optional voxel-token CSV to SFPC/SFVX.
    Ingest {
        /// CSV with columns x,y,z and optionally nx,ny,nz and label.
        #[arg(long)]
        points: PathBuf,
        /// CSV with columns i,j,k followed by the token values.
        #[arg(long)]
        tokens: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_GRID_SIDE)]
        grid_side: u32,
        /// Object label (0 vessel, 1 aneurysm).
        #[arg(long)]
        label: Option<u8>,
        /// Resample to this many points.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, value_enum, default_value = "fps")]
        sampling: SamplingArg,
        /// Output file stem; defaults to the point file's stem.
        #[arg(long)]
        name: Option<String>,
    },
    /// Generate a synthetic benchmark.
    Synth {
        kind: SynthKind,
        #[arg(long, default_value_t = 200)]
        objects: usize,
        #[arg(long, default_value_t = 128)]
        points: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 0.8)]
        signal: f64,
        #[arg(long, default_value_t = 12)]
        sequences: usize,
        #[arg(long, default_value_t = 100)]
        nodes: usize,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 0.03)]
        diffusivity: f64,
    },
    /// Train one model on a stratified 80/20 split of a dataset directory.
    Train {
        #[arg(long)]
        task: TaskArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        arch: Option<String>,
        /// `features` or `normals`.
        #[arg(long)]
        aux: Option<String>,
        /// Epochs (cloud tasks) or optimizer steps (rollout).
        #[arg(long)]
        budget: Option<usize>,
        /// Rollout surrogate size class, S or L.
        #[arg(long)]
        size: Option<String>,
        /// Drop the surface-feature channels of mesh sequences.
        #[arg(long)]
        no_features: bool,
        /// Average segmentation metrics per object instead of over all points.
        #[arg(long)]
        macro_average: bool,
    },
    /// Evaluate a trained model on every object or sequence in a directory.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Projections, clustering, correlation and statistics of per-object vectors.
    Analyze {
        method: AnalyzeMethod,
        /// CSV table or a directory of SFPC objects (summarized by mean feature).
        #[arg(long)]
        input: PathBuf,
        /// Per-object metrics table for `correlate`.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 8)]
        max_k: usize,
    },
    /// Aggregate run directories into CSV, SVG and text tables.
    Report {
        runs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReferenceArg::None)]
        reference: ReferenceArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Classify,
    Segment,
    Mesh,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Fps,
    Uniform,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum TaskArg {
    Classify,
    Segment,
    Rollout,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalyzeMethod {
    Pca,
    Tsne,
    Cluster,
    Correlate,
    Stats,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceArg {
    None,
    Classify,
    Segment,
    Simulate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    fs::create_dir_all(&cli.out)?;
    let config = match &cli.config {
        Some(p) => KvFile::parse(&fs::read_to_string(p)?)?,
        None => KvFile::new(),
    };
    match &cli.command {
        Command::Ingest { points, tokens, grid_side, label, sample, sampling, name } => {
            let mode = match sampling {
                SamplingArg::Fps => SamplingMode::Fps,
                SamplingArg::Uniform => SamplingMode::Uniform,
            };
            ingest(cli, points, tokens.as_deref(), *grid_side, *label, sample.map(|n| (n, mode)), name.as_deref())
        }
        Command::Synth { kind, objects, points, dim, signal, sequences, nodes, steps, diffusivity } => match kind {
            SynthKind::Mesh => {
                for i in 0..*sequences {
                    let spec = MeshSynthSpec::new(*nodes, *steps, *diffusivity, cli.seed * 1000 + i as u64);
                    write(&cli.out.join(format!("seq_{i:04}.sfms")), &write_sfms(&synth_mesh(&spec)?)?)?;
                }
                println!("wrote {sequences} sequences to {}", cli.out.display());
                Ok(())
            }
            _ => {
                let spec = SynthCloudSpec { objects: *objects, points: *points, dim: *dim, signal: *signal, seed: cli.seed };
                let set = match kind {
                    SynthKind::Classify => synth_classification_set(&spec)?,
                    _ => synth_segmentation_set(&spec)?,
                };
                for (i, o) in set.iter().enumerate() {
                    write(&cli.out.join(format!("obj_{i:04}.sfpc")), &write_sfpc(o)?)?;
                }
                println!("wrote {objects} objects to {}", cli.out.display());
                Ok(())
            }
        },
        Command::Train { task, data, arch, aux, budget, size, no_features, macro_average } => {
            let opts = TrainOpts { arch: arch.as_deref(), aux: aux.as_deref(), budget: *budget, size: size.as_deref() };
            if *task == TaskArg::Rollout {
                train_rollout_cmd(cli, config, data, &opts, *no_features)
            } else {
                let task = if *task == TaskArg::Classify { Task::Classify } else { Task::Segment };
                train_cloud_cmd(cli, config, data, task, &opts, *macro_average)
            }
        }
        Command::Eval { model, data } => eval_cmd(cli, model, data),
        Command::Analyze { method, input, metrics, perplexity, iterations, max_k } => {
            analyze_cmd(cli, *method, input, metrics.as_deref(), *perplexity, *iterations, *max_k)
        }
        Command::Report { runs, reference } => report_cmd(cli, runs, *reference),
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(Error::from)
}

/// Files with the given extension, sorted by name.
fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid_argument(format!("no .{ext} files in {}", dir.display())));
    }
    Ok(files)
}

fn load_clouds(dir: &Path) -> Result<(Vec<String>, Vec<LabeledCloud>)> {
    let files = list_files(dir, "sfpc")?;
    let names = files.iter().map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned()).collect();
    let objects = files.iter().map(|p| read_sfpc(&fs::read(p)?)).collect::<Result<_>>()?;
    Ok((names, objects))
}

fn load_sequences(dir: &Path) -> Result<Vec<MeshGraphSequence>> {
    list_files(dir, "sfms")?.iter().map(|p| read_sfms(&fs::read(p)?)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid_data(format!("csv: {e}"))
}

fn ingest(
    cli: &Cli,
    points: &Path,
    tokens: Option<&Path>,
    grid_side: u32,
    label: Option<u8>,
    sample: Option<(usize, SamplingMode)>,
    name: Option<&str>,
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(points).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |n: &str| headers.iter().position(|h| h == n);
    let xyz = [col("x"), col("y"), col("z")];
    let nxyz = [col("nx"), col("ny"), col("nz")];
    let label_col = col("label");
    if xyz.iter().any(Option::is_none) {
        return Err(Error::invalid_data("point csv needs x, y and z columns"));
    }
    let has_normals = nxyz.iter().all(Option::is_some);
    let (mut positions, mut normals, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |c: Option<usize>| -> Result<f64> {
            let s = &rec[c.expect("column checked")];
            s.parse().map_err(|_| Error::invalid_data(format!("row {}: {s:?} is not a number", line + 2)))
        };
        positions.push([num(xyz[0])?, num(xyz[1])?, num(xyz[2])?]);
        if has_normals {
            normals.push([num(nxyz[0])?, num(nxyz[1])?, num(nxyz[2])?]);
        }
        if let Some(c) = label_col {
            labels.push(rec[c].parse::<u8>().map_err(|_| Error::invalid_data(format!("row {}: bad label", line + 2)))?);
        }
    }
    let cloud = normalize_cloud(&PointCloud::new(positions, has_normals.then_some(normals))?)?;
    let field = match tokens {
        Some(path) => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
            let (mut coords, mut toks) = (Vec::new(), Vec::new());
            for (line, rec) in rdr.records().enumerate() {
                let rec = rec.map_err(csv_err)?;
                let bad = || Error::invalid_data(format!("token row {}: malformed", line + 2));
                if rec.len() < 4 {
                    return Err(bad());
                }
                let ijk: Vec<u16> = (0..3).map(|j| rec[j].parse().map_err(|_| bad())).collect::<Result<_>>()?;
                coords.push([ijk[0], ijk[1], ijk[2]]);
                toks.push(rec.iter().skip(3).map(|v| v.parse::<f32>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?);
            }
            Some(FeatureField::new(grid_side, coords, toks)?)
        }
        None => None,
    };
    let features = field.as_ref().map(|f| assign_voxel_features(f, &cloud)).transpose()?;
    let point_labels = (!labels.is_empty()).then_some(labels);
    let mut object = LabeledCloud::new(cloud, features, point_labels, label)?;
    if let Some((n, mode)) = sample {
        let s = sample_to_fixed(
            &object.cloud,
            object.features.as_deref(),
            object.point_labels.as_deref(),
            n,
            cli.seed,
            mode,
        )?;
        object = LabeledCloud::new(s.cloud, s.features, s.labels, label)?;
    }
    let stem = name.map(str::to_string).unwrap_or_else(|| points.file_stem().unwrap_or_default().to_string_lossy().into_owned());
    write(&cli.out.join(format!("{stem}.sfpc")), &write_sfpc(&object)?)?;
    if let Some(f) = &field {
        write(&cli.out.join(format!("{stem}.sfvx")), &write_sfvx(f)?)?;
    }
    println!("{stem}: {} points, feature dim {}", object.cloud.count(), object.feature_dim());
    Ok(())
}

struct TrainOpts<'a> {
    arch: Option<&'a str>,
    aux: Option<&'a str>,
    budget: Option<usize>,
    size: Option<&'a str>,
}

fn write_metrics(path: &Path, metrics: &RunMetrics, extra: &[(&str, f64)]) -> Result<()> {
    let mut out = String::from("metric,value\n");
    for (name, v) in METRIC_COLUMNS.iter().zip(metrics.values()) {
        if let Some(v) = v {
            out.push_str(&format!("{name},{v}\n"));
        }
    }
    for (name, v) in extra {
        out.push_str(&format!("{name},{v}\n"));
    }
    write(path, out.as_bytes())
}

fn print_metrics(metrics: &RunMetrics) {
    for (name, v) in METRIC_COLUMNS.iter().zip(metrics.values()) {
        if let Some(v) = v {
            println!("{name:>12}  {v:.6}");
        }
    }
}

fn split_description(seed: u64, train: &[usize], test: &[usize]) -> String {
    format!("stratified 80/20, seed {seed}: {} train, {} test", train.len(), test.len())
}

fn train_cloud_cmd(cli: &Cli, file: KvFile, data: &Path, task: Task, opts: &TrainOpts, macro_average: bool) -> Result<()> {
    let (_, objects) = load_clouds(data)?;
    let arch: Architecture = opts.arch.unwrap_or("pointnet-mod").parse()?;
    let aux: AuxChannel = opts.aux.unwrap_or("features").parse()?;
    let dim = objects[0].feature_dim();
    let mut kv = CloudModelConfig::template(task, arch, aux, dim).to_kv();
    kv.merge(&TrainConfig::standard(task, aux).to_kv());
    kv.merge(&file);
    kv.set("model.task", task);
    if let Some(a) = opts.arch {
        kv.set("model.architecture", a);
    }
    if let Some(a) = opts.aux {
        kv.set("model.aux", a);
    }
    let model_config = CloudModelConfig::from_kv(&kv)?;
    let mut train_config = TrainConfig::from_kv(&kv, TrainConfig::standard(task, model_config.aux))?;
    if let Some(b) = opts.budget {
        train_config.epochs = b;
    }
    // canonical form, so the digest reflects every effective setting
    let mut kv = model_config.to_kv();
    kv.merge(&train_config.to_kv());
    kv.set("run.label", format!("{}, {}", model_config.architecture, model_config.aux));
    if macro_average {
        kv.set("eval.average", "macro");
    }

    let mut trainer = CloudTrainer::new(objects, model_config, train_config.clone());
    trainer.macro_average = macro_average;
    let labels: Vec<u8> = trainer.data.iter().map(|o| o.object_label.unwrap_or(0)).collect();
    let (train_idx, test_idx) = stratified_split(&labels, 0.2, cli.seed)?;
    let mut manifest = RunManifest::start(
        &kv,
        cli.seed,
        &split_description(cli.seed, &train_idx, &test_idx),
        train_config.epochs,
        train_config.schedule.as_str(),
    );
    let (model, metrics) = trainer.fit(&train_idx, &test_idx, cli.seed)?;
    let checkpoint = model.to_checkpoint()?;
    write(&cli.out.join("model.sfck"), &checkpoint.to_bytes()?)?;
    write(&cli.out.join("config.kv"), kv.render().as_bytes())?;
    write_metrics(&cli.out.join("metrics.csv"), &metrics, &[])?;
    manifest.finish(metrics);
    write(&cli.out.join("manifest.json"), manifest.to_json()?.as_bytes())?;
    print_metrics(&metrics);
    println!("checkpoint {}", checkpoint.digest()?);
    Ok(())
}

fn train_rollout_cmd(cli: &Cli, file: KvFile, data: &Path, opts: &TrainOpts, no_features: bool) -> Result<()> {
    let mut sequences = load_sequences(data)?;
    if no_features {
        sequences = sequences.iter().map(MeshGraphSequence::without_features).collect();
    }
    let mut kv = RolloutTrainConfig::default().to_kv();
    kv.merge(&file);
    if let Some(s) = opts.size {
        kv.set("rollout.size", s);
    }
    let mut config = RolloutTrainConfig::from_kv(&kv, RolloutTrainConfig::default())?;
    if let Some(b) = opts.budget {
        config.steps = b;
    }
    let mut kv = config.to_kv();
    let with_features = sequences[0].features.is_some();
    kv.set("rollout.features", with_features);
    kv.set("run.label", format!("{}/1{}", config.size, if with_features { " + feats" } else { "" }));

    let (train_idx, test_idx) = stratified_split(&vec![0; sequences.len()], 0.2, cli.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| sequences[i].clone()).collect::<Vec<_>>();
    let (train, test) = (pick(&train_idx), pick(&test_idx));
    let mut manifest = RunManifest::start(
        &kv,
        cli.seed,
        &split_description(cli.seed, &train_idx, &test_idx),
        config.steps,
        config.schedule.as_str(),
    );
    let mut model = RolloutModel::for_data(&train, &config, cli.seed)?;
    let score = |m: &RolloutModel| -> Result<f64> {
        let records = test.iter().map(|s| rollout(m, s, s.step_count() - 1)).collect::<Result<Vec<_>>>()?;
        Ok(pooled_rmse(&records))
    };
    let initial = score(&model)?;
    surfeat::meshsim::train_rollout(&mut model, &train, &config)?;
    let metrics = RunMetrics { rmse: Some(score(&model)?), ..Default::default() };
    let checkpoint = model.to_checkpoint()?;
    write(&cli.out.join("model.sfck"), &checkpoint.to_bytes()?)?;
    write(&cli.out.join("config.kv"), kv.render().as_bytes())?;
    write_metrics(&cli.out.join("metrics.csv"), &metrics, &[("initial_rmse", initial)])?;
    manifest.finish(metrics);
    write(&cli.out.join("manifest.json"), manifest.to_json()?.as_bytes())?;
    println!("{:>12}  {initial:.6}", "initial_rmse");
    print_metrics(&metrics);
    println!("checkpoint {}", checkpoint.digest()?);
    Ok(())
}

fn eval_cmd(cli: &Cli, model_dir: &Path, data: &Path) -> Result<()> {
    let kv = KvFile::parse(&fs::read_to_string(model_dir.join("config.kv"))?)?;
    let checkpoint = Checkpoint::from_bytes(&fs::read(model_dir.join("model.sfck"))?)?;
    if kv.raw("rollout.size").is_some() {
        let config = RolloutTrainConfig::from_kv(&kv, RolloutTrainConfig::default())?;
        let model = RolloutModel::from_checkpoint(&checkpoint, config.size, cli.seed)?;
        let mut sequences = load_sequences(data)?;
        if kv.raw("rollout.features") == Some("false") {
            sequences = sequences.iter().map(MeshGraphSequence::without_features).collect();
        }
        let records = sequences.iter().map(|s| rollout(&model, s, s.step_count() - 1)).collect::<Result<Vec<_>>>()?;
        let metrics = RunMetrics { rmse: Some(pooled_rmse(&records)), ..Default::default() };
        write_metrics(&cli.out.join("eval.csv"), &metrics, &[])?;
        print_metrics(&metrics);
        return Ok(());
    }
    let config = CloudModelConfig::from_kv(&kv)?;
    let model = CloudModel::from_checkpoint(&config, &checkpoint)?;
    let (names, objects) = load_clouds(data)?;
    let prepared = objects.iter().map(|o| model.prepare(o)).collect::<Result<Vec<_>>>()?;
    let predictions = model.predict_all(&prepared, cli.threads)?;
    let metrics = match config.task {
        Task::Classify => {
            let pred: Vec<u8> = predictions.iter().map(|p| p[0]).collect();
            let target: Vec<u8> = objects.iter().map(|o| o.object_label.unwrap_or(0)).collect();
            let m = surfeat::harness::metrics_classification(&pred, &target)?;
            let mut out = String::from("object,prediction\n");
            for (n, p) in names.iter().zip(&pred) {
                out.push_str(&format!("{n},{p}\n"));
            }
            write(&cli.out.join("predictions.csv"), out.as_bytes())?;
            RunMetrics { accuracy_v: m.accuracy_v, accuracy_a: m.accuracy_a, f1: Some(m.f1), ..Default::default() }
        }
        Task::Segment => {
            let pairs = predictions
                .iter()
                .zip(&objects)
                .map(|(p, o)| Ok((p.as_slice(), o.point_labels.as_deref().ok_or_else(|| Error::invalid_data("object has no point labels"))?)))
                .collect::<Result<Vec<_>>>()?;
            let m = if kv.raw("eval.average") == Some("macro") {
                surfeat::harness::metrics_segmentation_macro(&pairs)?
            } else {
                surfeat::harness::metrics_segmentation(&pairs)?
            };
            RunMetrics { iou_v: m.iou[0], iou_a: m.iou[1], dsc_v: m.dsc[0], dsc_a: m.dsc[1], ..Default::default() }
        }
    };
    write_metrics(&cli.out.join("eval.csv"), &metrics, &[])?;
    print_metrics(&metrics);
    Ok(())
}

/// Per-object vectors with ids and an optional label column.
fn load_vectors(input: &Path) -> Result<(Vec<String>, Vec<String>, Vec<Vec<f64>>, Option<Vec<String>>)> {
    if input.is_dir() {
        let (names, objects) = load_clouds(input)?;
        let mut vectors = Vec::with_capacity(objects.len());
        for o in &objects {
            let f = o.features.as_ref().ok_or_else(|| Error::invalid_data("object has no features"))?;
            vectors.push(aggregate_stats(f)?.mean);
        }
        let dims = (0..vectors[0].len()).map(|j| format!("mean_f{j}")).collect();
        let labels = objects.iter().map(|o| o.object_label.map_or("none".to_string(), |l| l.to_string())).collect();
        return Ok((names, dims, vectors, Some(labels)));
    }
    let t = Table::read(input)?;
    let labels = t.label_names.first().and_then(|n| t.label_column(n));
    Ok((t.ids, t.value_names, t.values, labels))
}

fn projection_outputs(cli: &Cli, p: &Projection2D, ids: &[String], title: &str) -> Result<()> {
    let mut t = Table {
        ids: ids.to_vec(),
        label_names: vec!["label".into()],
        labels: p.labels.iter().map(|l| vec![l.clone()]).collect(),
        value_names: vec!["x".into(), "y".into()],
        values: p.coords.iter().map(|c| c.to_vec()).collect(),
    };
    if p.labels.len() != ids.len() {
        t.label_names.clear();
        t.labels = vec![Vec::new(); ids.len()];
    }
    write(&cli.out.join("projection.csv"), t.to_csv()?.as_bytes())?;
    write(&cli.out.join("projection.svg"), p.svg(title).as_bytes())
}

fn analyze_cmd(
    cli: &Cli,
    method: AnalyzeMethod,
    input: &Path,
    metrics: Option<&Path>,
    perplexity: f64,
    iterations: usize,
    max_k: usize,
) -> Result<()> {
    let (ids, dims, vectors, labels) = load_vectors(input)?;
    let labels = labels.unwrap_or_default();
    match method {
        AnalyzeMethod::Pca => {
            let p = pca_2d(&vectors)?.with_labels(labels);
            projection_outputs(cli, &p, &ids, "PCA")?;
            if let Some(r) = p.explained_ratio {
                println!("explained variance ratio {:.6} {:.6}", r[0], r[1]);
            }
        }
        AnalyzeMethod::Tsne => {
            let r = tsne_2d(&vectors, &TsneConfig { perplexity, iterations, seed: cli.seed })?;
            let p = r.projection.with_labels(labels);
            projection_outputs(cli, &p, &ids, "t-SNE")?;
            println!("kl divergence {:.6}", r.kl_divergence);
            if !r.unconverged_rows.is_empty() {
                eprintln!("warning: perplexity search did not converge for {} rows", r.unconverged_rows.len());
            }
        }
        AnalyzeMethod::Cluster => {
            let hi = max_k.min(vectors.len().saturating_sub(1));
            if hi < 2 {
                return Err(Error::invalid_argument("clustering needs at least 3 objects and max-k ≥ 2"));
            }
            let sel = select_k(&vectors, 2..=hi, cli.seed)?;
            let mut out = String::from("id,cluster\n");
            for (id, c) in ids.iter().zip(&sel.best.labels) {
                out.push_str(&format!("{id},{c}\n"));
            }
            write(&cli.out.join("clusters.csv"), out.as_bytes())?;
            let mut out = String::from("k,silhouette,inertia\n");
            for (k, s, i) in &sel.table {
                out.push_str(&format!("{k},{s},{i}\n"));
            }
            write(&cli.out.join("k_selection.csv"), out.as_bytes())?;
            println!("selected k = {} (silhouette {:.4})", sel.best.k, sel.best.silhouette);
        }
        AnalyzeMethod::Correlate => {
            let path = metrics.ok_or_else(|| Error::invalid_argument("correlate needs --metrics"))?;
            let m = Table::read(path)?;
            let row: BTreeMap<&str, usize> = m.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
            let order: Vec<usize> = ids
                .iter()
                .map(|id| row.get(id.as_str()).copied().ok_or_else(|| Error::invalid_data(format!("no metrics for object {id}"))))
                .collect::<Result<_>>()?;
            let features: Vec<(String, Vec<f64>)> =
                dims.iter().enumerate().map(|(j, n)| (n.clone(), vectors.iter().map(|v| v[j]).collect())).collect();
            let metric_cols: Vec<(String, Vec<f64>)> = m
                .value_names
                .iter()
                .enumerate()
                .map(|(j, n)| (n.clone(), order.iter().map(|&i| m.values[i][j]).collect()))
                .collect();
            let table = correlation_table(&features, &metric_cols)?;
            let mut out = format!("feature,{}\n", table.metric_names.join(","));
            for (f, r) in table.feature_names.iter().zip(&table.r) {
                let cells: Vec<String> = r.iter().map(|v| v.map_or(String::new(), |v| v.to_string())).collect();
                out.push_str(&format!("{f},{}\n", cells.join(",")));
            }
            write(&cli.out.join("correlation.csv"), out.as_bytes())?;
            let svg = heatmap_svg(&table.r, &table.feature_names, &table.metric_names, "Pearson correlation");
            write(&cli.out.join("correlation.svg"), svg.as_bytes())?;
        }
        AnalyzeMethod::Stats => {
            let mut out = String::from("id,dim,mean,std,min,max\n");
            if input.is_dir() {
                let (names, objects) = load_clouds(input)?;
                for (n, o) in names.iter().zip(&objects) {
                    let f = o.features.as_ref().ok_or_else(|| Error::invalid_data("object has no features"))?;
                    let s = aggregate_stats(f)?;
                    for j in 0..s.dim() {
                        out.push_str(&format!("{n},{j},{},{},{},{}\n", s.mean[j], s.std[j], s.min[j], s.max[j]));
                    }
                }
            } else {
                for (j, name) in dims.iter().enumerate() {
                    let col: Vec<f32> = vectors.iter().map(|v| v[j] as f32).collect();
                    let rows: Vec<Vec<f32>> = col.iter().map(|&v| vec![v]).collect();
                    let s = aggregate_stats(&rows)?;
                    out.push_str(&format!("all,{name},{},{},{},{}\n", s.mean[0], s.std[0], s.min[0], s.max[0]));
                }
            }
            write(&cli.out.join("stats.csv"), out.as_bytes())?;
        }
    }
    println!("wrote results to {}", cli.out.display());
    Ok(())
}

fn report_cmd(cli: &Cli, runs: &[PathBuf], reference: ReferenceArg) -> Result<()> {
    if runs.is_empty() {
        return Err(Error::invalid_argument("report needs at least one run directory"));
    }
    // runs sharing a configuration digest form one row
    let mut groups: BTreeMap<String, (String, Vec<u64>, Vec<Result<RunMetrics>>)> = BTreeMap::new();
    for dir in runs {
        let m = RunManifest::from_json(&fs::read_to_string(dir.join("manifest.json"))?)?;
        let label = m.configuration()?.raw("run.label").unwrap_or(&m.config_digest[..12]).to_string();
        let g = groups.entry(m.config_digest.clone()).or_insert_with(|| (label, Vec::new(), Vec::new()));
        g.1.push(m.seed);
        g.2.push(m.metrics.ok_or_else(|| Error::Aborted { step: 0, reason: format!("{} did not finish", dir.display()) }));
    }
    let mut reports: Vec<MetricReport> =
        groups.into_values().map(|(label, seeds, runs)| MetricReport::new(&label, "repeated", seeds, runs)).collect();
    reports.sort_by(|a, b| a.label.cmp(&b.label));
    let refs = match reference {
        ReferenceArg::None => Vec::new(),
        ReferenceArg::Classify => reference_classification(),
        ReferenceArg::Segment => reference_segmentation(),
        ReferenceArg::Simulate => reference_simulation(),
    };
    let rendered = report_render(&reports, &refs);
    write(&cli.out.join("report.csv"), rendered.csv.as_bytes())?;
    write(&cli.out.join("report.svg"), rendered.svg.as_bytes())?;
    write(&cli.out.join("report.txt"), rendered.text.as_bytes())?;
    print!("{}", rendered.text);
    Ok(())
}
