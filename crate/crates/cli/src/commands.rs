use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use tst_core::backbone::{load_checkpoint, save_checkpoint, train_with_progress, BackboneParams};
use tst_core::backbone::gradcheck::{gradcheck_network, small_config};
use tst_core::imaging::io::{read_image, write_image};
use tst_core::metrics::{evaluate, ImageInfo};
use tst_core::segmenter::{detect, InputMode};
use tst_core::synthdata::{generate_dataset, Dataset, SceneTemplate, Template};
use tst_core::tensor_core::{structure_tensor_representation, GaussianSpec};
use tst_core::workflow::training_records;
use tst_core::{Error, Result};

use crate::config::RunConfig;
use crate::predictions::{read_predictions, write_predictions};
use crate::{ConfigArgs, EvalArgs, GradcheckArgs, InferArgs, SynthArgs, TensorArgs, TrainArgs};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad {what} entry {s:?}")))
        })
        .collect()
}

fn parse_template(name: &str) -> Result<Template> {
    Template::THREATS
        .into_iter()
        .find(|t| t.name() == name.trim())
        .ok_or_else(|| Error::InvalidParameter(format!("unknown threat template {name:?}")))
}

pub fn synth(args: SynthArgs) -> Result<u8> {
    if args.n == 0 {
        return Err(Error::InvalidParameter("--n must be at least 1".into()));
    }
    let classes = args
        .classes
        .split(',')
        .map(parse_template)
        .collect::<Result<Vec<_>>>()?;
    let template = SceneTemplate {
        width: args.size,
        height: args.size,
        classes,
        occlusion_level: args.occlusion,
        noise_sigma: args.noise,
        ..Default::default()
    };
    let manifest = generate_dataset(args.n, &template, args.seed, args.train_fraction, &args.out)?;
    info!(
        "wrote {} scans ({} train, {} test)",
        manifest.count,
        manifest.train.len(),
        manifest.test.len()
    );
    println!("{}", args.out.join("manifest.json").display());
    Ok(0)
}

impl ConfigArgs {
    /// Load the config file (or `fallback` when none was given) and apply
    /// the flags on top.
    fn resolve(&self, fallback: Option<&Path>) -> Result<RunConfig> {
        let path = self.config.as_deref().or(fallback);
        let mut c = RunConfig::load(path)?;
        let p = &mut c.pipeline;
        if let Some(m) = self.m {
            p.m = m;
        }
        if let Some(k) = self.k {
            p.k = k;
        }
        if let Some(s) = self.sigma {
            p.gaussian = GaussianSpec::new(s);
        }
        if let Some(s) = self.input_size {
            p.input_size = (s, s);
        }
        if let Some(mode) = &self.input_mode {
            p.input_mode = match mode.as_str() {
                "tensor" => InputMode::Tensor,
                "luminance" => InputMode::Luminance,
                "tensor_luminance" => InputMode::TensorLuminance,
                other => return Err(Error::InvalidParameter(format!("unknown input mode {other:?}"))),
            };
        }
        if let Some(r) = self.open_radius {
            p.open_radius = r;
        }
        if let Some(r) = self.close_radius {
            p.close_radius = r;
        }
        if let Some(a) = self.min_area {
            p.min_area = a;
        }
        Ok(c)
    }
}

pub fn train(args: TrainArgs) -> Result<u8> {
    let mut config = args.pipeline.resolve(None)?;
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    if let Some(b) = args.batch {
        config.train.batch_size = b;
    }
    if let Some(s) = args.seed {
        config.train.seed = s;
        config.model.seed = s;
    }
    if let Some(s) = &args.stages {
        config.model.stage_channels = parse_list(s, "stage")?;
    }
    if let Some(r) = args.rho {
        config.train.optimizer.rho = r;
    }
    if let Some(lr) = args.lr {
        config.train.optimizer.lr = lr;
    }
    if let Some(eps) = args.eps {
        config.train.optimizer.eps = eps;
    }

    let dataset = Dataset::open(&args.data)?;
    config.pipeline.class_names = dataset.classes.clone();
    config.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::InvalidInput(format!("{} has no training scans", args.data.display())));
    }
    create_dir(&args.out)?;

    let samples = dataset.load_split(&dataset.train)?;
    let records = training_records(&samples, &config.pipeline)?;
    let mut params = BackboneParams::<f32>::init(&config.backbone())?;
    let opt = &config.train.optimizer;
    info!(
        "training on {} scans: {} parameters, {} epochs, batch {}, rho {}, lr {}, eps {}",
        records.len(),
        params.num_parameters(),
        config.train.epochs,
        config.train.batch_size,
        opt.rho,
        opt.lr,
        opt.eps
    );
    let report = train_with_progress(&mut params, &records, &config.train, |_, _| {})?;

    save_checkpoint(&params, &args.out.join("model.tstb"))?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in report.loss_history.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", i + 1));
    }
    let csv_path = args.out.join("loss_history.csv");
    fs::write(&csv_path, csv).map_err(|e| io_err(&csv_path, e))?;
    config.train.class_weights = Some(report.class_weights);
    config.save(&args.out)?;
    println!("{}", args.out.join("model.tstb").display());
    Ok(0)
}

fn list_images(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let entries = fs::read_dir(input).map_err(|e| io_err(input, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(input, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "pgm" | "ppm" | "jpg" | "jpeg")) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn infer(args: InferArgs) -> Result<u8> {
    let beside = args.model.with_file_name("run_config.json");
    let fallback = beside.exists().then_some(beside.as_path());
    let config = args.pipeline.resolve(fallback)?;
    config.pipeline.validate()?;
    let params = load_checkpoint(&args.model)?;
    config.pipeline.check_params(&params)?;
    let images = list_images(&args.input)?;
    if images.is_empty() {
        return Err(Error::InvalidInput(format!("no images found in {}", args.input.display())));
    }
    create_dir(&args.out)?;
    let counts = images
        .par_iter()
        .map(|path| -> Result<usize> {
            let scan = read_image(path)?;
            let detections = detect(&scan, &params, &config.pipeline)?;
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
            write_predictions(&args.out, name, &scan, &detections, &config.pipeline.class_names)?;
            Ok(detections.len())
        })
        .collect::<Result<Vec<_>>>()?;
    info!(
        "{} images, {} detections written to {}",
        images.len(),
        counts.iter().sum::<usize>(),
        args.out.display()
    );
    Ok(0)
}

pub fn eval(args: EvalArgs) -> Result<u8> {
    let dataset = Dataset::open(&args.gt)?;
    let ids: Vec<String> = match args.split.as_str() {
        "test" if dataset.test.is_empty() => dataset.train.clone(),
        "test" => dataset.test.clone(),
        "train" => dataset.train.clone(),
        "all" => dataset.train.iter().chain(&dataset.test).cloned().collect(),
        other => return Err(Error::InvalidParameter(format!("unknown split {other:?}"))),
    };
    let samples = dataset.load_split(&ids)?;
    let mut truth = Vec::new();
    let mut images: Vec<ImageInfo> = Vec::with_capacity(samples.len());
    let mut preds = Vec::new();
    for s in &samples {
        truth.extend(s.truth.iter().cloned());
        images.push(s.info());
        let path = args.pred.join(format!("{}.json", s.image_id));
        if path.exists() {
            let (_, items) = read_predictions(&path, &dataset.classes)?;
            preds.extend(items);
        }
    }
    let report = evaluate(&preds, &truth, &images, &dataset.classes, args.iou)?;
    print!("{}", report.summary());
    if let Some(path) = &args.report {
        report.write_json(path)?;
    }
    if let Some(path) = &args.pr {
        fs::write(path, report.pr_csv()).map_err(|e| io_err(path, e))?;
    }
    println!("mAP {:.4}", report.map);
    Ok(0)
}

pub fn tensor(args: TensorArgs) -> Result<u8> {
    let img = read_image(&args.input)?;
    let rep = structure_tensor_representation(&img, args.m, args.k, &GaussianSpec::new(args.sigma))?;
    write_image(&rep.values, &args.out)?;
    info!("selected tensor pairs {:?}", rep.selected_pairs);
    Ok(0)
}

pub fn gradcheck(args: GradcheckArgs) -> Result<u8> {
    let report = gradcheck_network(&small_config(args.seed), args.step)?;
    for t in &report.tensors {
        println!("{:<12} {:>5} entries  max rel error {:.3e}", t.name, t.checked, t.max_rel_error);
    }
    println!("max relative error {:.3e}", report.max_rel_error);
    Ok(if report.passed(args.tol) { 0 } else { 1 })
}
