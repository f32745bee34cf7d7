use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use seishet::layers::Parameterized;
use seishet::metrics::{binarize, ConfusionCounts, MetricsReport};
use seishet::model::{
    load_checkpoint, save_checkpoint, summarize, Hyperparams, NetworkModel, PAPER_KILOFLOPS, PAPER_PARAMETER_COUNT,
    PATCH,
};
use seishet::pgm::{quantize, GrayImage};
use seishet::segy::{
    export_map, load_mask, mask_from_image, open_volume, real_patches, tile_predict, KeyOffsets, REAL_STRIDE,
};
use seishet::synthgen::{
    extract_patches, generate_section, read_dataset_limited, DatasetWriter, Manifest,
    SyntheticConfig, PATCH_STRIDE,
};
use seishet::train::{split_dataset, train_with, EpochLog, TrainConfig};
use seishet::{Error, Prng, Result, Tensor};

use crate::args::{EvalArgs, FinetuneArgs, FitArgs, GenArgs, InfoArgs, KeyArgs, PredictArgs, TrainArgs, RAW_STRIDE, RAW_WINDOW};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn key_offsets(k: &KeyArgs) -> KeyOffsets {
    KeyOffsets {
        inline: k.inline_byte,
        crossline: k.crossline_byte,
    }
}

fn positive(name: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(Error::Config(format!("--{name} must be at least 1")));
    }
    Ok(v)
}

fn write_raw_f32(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(4 * values.len());
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn mask_image(mask: &Tensor<f64>) -> Result<GrayImage> {
    let s = mask.shape();
    GrayImage::new(s[1], s[0], mask.data().iter().map(|&v| quantize(v)).collect())
}

pub fn gen(a: GenArgs) -> Result<()> {
    let start = Instant::now();
    let mut writer = DatasetWriter::create(&a.out)?;
    let (manifest, summary) = if let Some(segy) = &a.segy {
        if a.lines.is_empty() {
            return Err(Error::Config("--segy needs at least one --line".into()));
        }
        let masks = a
            .masks
            .as_ref()
            .ok_or_else(|| Error::Config("--segy needs --masks with mask_<axis><line>.pgm files".into()))?;
        let stride = positive("stride", a.stride.unwrap_or(REAL_STRIDE))?;
        let volume = open_volume(segy, key_offsets(&a.keys))?;
        for &line in &a.lines {
            let section = volume.read_section(a.axis, line)?;
            let mask = load_mask(masks, a.axis, line, section.amplitudes.shape())?;
            for p in real_patches(&section.amplitudes, &mask, positive("window", a.window)?, PATCH, stride)? {
                writer.push(&p)?;
            }
        }
        let manifest = Manifest {
            version: 0,
            count: 0,
            patch: PATCH,
            seed: a.seed.seed,
            source: "segy".into(),
            config: None,
        };
        (manifest, format!("{} {} lines", a.lines.len(), a.axis))
    } else {
        let mut config = SyntheticConfig {
            height: a.height,
            width: a.width,
            count: a.count as usize,
            seed: a.seed.seed,
            ..SyntheticConfig::default()
        };
        if let Some(v) = a.faults {
            config.faults = v;
        }
        if let Some(v) = a.throw {
            config.throw = v;
        }
        if let Some(v) = a.noise {
            config.noise = v;
        }
        if let Some(v) = a.period {
            config.period = v;
        }
        if let Some(v) = a.dilation {
            config.dilation = v;
        }
        config.validate()?;
        let stride = positive("stride", a.stride.unwrap_or(PATCH_STRIDE))?;
        let sections = a.out.join("sections");
        if a.emit_sections {
            fs::create_dir_all(&sections).map_err(io_err(&sections))?;
        }
        for i in 0..config.count {
            let s = generate_section(&config, i as u64)?;
            for p in extract_patches(&s.image, &s.mask, PATCH, stride)? {
                writer.push(&p)?;
            }
            if a.emit_sections {
                write_raw_f32(&sections.join(format!("section_{i:05}.f32")), s.image.data())?;
                mask_image(&s.mask)?.write(&sections.join(format!("mask_{i:05}.pgm")))?;
            }
        }
        let manifest = Manifest {
            version: 0,
            count: 0,
            patch: PATCH,
            seed: config.seed,
            source: "synthetic".into(),
            config: Some(config.clone()),
        };
        (manifest, format!("{} sections of {}x{}", config.count, config.height, config.width))
    };
    let manifest = writer.finish(manifest)?;
    println!(
        "wrote {} samples from {summary} (seed {}) to {}",
        manifest.count,
        manifest.seed,
        a.out.display()
    );
    eprintln!("gen took {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn train_config(fit: &FitArgs, epochs: usize, freeze_prefix: usize) -> Result<TrainConfig> {
    let config = TrainConfig {
        epochs,
        batch_size: fit.batch_size,
        learning_rate: fit.lr,
        split: fit.split,
        seed: fit.seed.seed,
        freeze_prefix,
        positive_weight: fit.positive_weight,
    };
    config.validate()?;
    Ok(config)
}

fn log_path(fit: &FitArgs) -> PathBuf {
    fit.log.clone().unwrap_or_else(|| {
        let mut name = fit.out.clone().into_os_string();
        name.push(".log");
        PathBuf::from(name)
    })
}

fn fit(model: &mut NetworkModel<f32>, fit: &FitArgs, config: &TrainConfig) -> Result<()> {
    let start = Instant::now();
    let (manifest, samples) = read_dataset_limited(&fit.data, fit.count_limit)?;
    if manifest.patch != PATCH {
        return Err(Error::Dimension(format!(
            "dataset patches are {0}x{0}, the network takes {PATCH}x{PATCH}",
            manifest.patch
        )));
    }
    let (train, test) = split_dataset(&samples, config.split, config.seed)?;
    println!("{} training and {} held-out samples", train.len(), test.len());
    let path = log_path(fit);
    let mut log = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    let mut failure = None;
    let entries = train_with(model, &train, &test, config, |entry: &EpochLog| {
        println!("{entry}");
        match writeln!(log, "{entry}") {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                failure = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(io_err(&path)(e));
    }
    let last = entries.last().expect("at least one epoch runs");
    writeln!(log, "final {}", last.metrics.to_json()).map_err(io_err(&path))?;
    log.flush().map_err(io_err(&path))?;
    save_checkpoint(model, &fit.out)?;
    println!("held-out metrics after epoch {}:", last.epoch);
    print!("{}", last.metrics.table());
    println!("{}", last.metrics.to_json());
    println!("checkpoint {}", fit.out.display());
    eprintln!("training took {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let config = train_config(&a.fit, a.epochs, a.freeze_prefix)?;
    let hyper = Hyperparams {
        se_ratio: a.se_ratio,
        heads: a.heads,
        key_depth: a.key_depth,
        value_depth: a.value_depth,
    };
    let mut model = NetworkModel::<f32>::build(a.attention, hyper, &mut Prng::new(config.seed))?;
    println!("variant {}", a.attention);
    fit(&mut model, &a.fit, &config)
}

pub fn finetune(a: FinetuneArgs) -> Result<()> {
    let config = train_config(&a.fit, a.epochs, a.freeze_prefix)?;
    let mut model = load_checkpoint::<f32>(&a.checkpoint)?;
    if let Some(v) = a.attention {
        if v != model.variant() {
            return Err(Error::Integrity(format!(
                "{} holds the {} variant but --attention {v} was requested",
                a.checkpoint.display(),
                model.variant()
            )));
        }
    }
    model.freeze_prefix(config.freeze_prefix)?;
    let frozen = model.frozen_names();
    println!("variant {}", model.variant());
    if frozen.is_empty() {
        println!("frozen: none");
    } else {
        println!("frozen: {}", frozen.join(", "));
    }
    fit(&mut model, &a.fit, &config)
}

fn read_raw(path: &Path, height: usize, width: usize) -> Result<Tensor<f64>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != 4 * height * width {
        return Err(Error::Format(format!(
            "{}: {} bytes, a {height}x{width} f32 section needs {}",
            path.display(),
            bytes.len(),
            4 * height * width
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format(format!("{}: non-finite amplitude", path.display())));
    }
    Tensor::new(&[height, width], values)
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let model = load_checkpoint::<f32>(&a.checkpoint)?;
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let ext = a.format.extension();
    let mut jobs = Vec::new();
    let (window, stride) = if let Some(raw) = &a.raw {
        let (h, w) = (a.height.expect("clap requires height"), a.width.expect("clap requires width"));
        let stem = raw.file_stem().map_or("section".into(), |s| s.to_string_lossy().into_owned());
        jobs.push((format!("map_{stem}.{ext}"), read_raw(raw, h, w)?));
        (a.window.unwrap_or(RAW_WINDOW), a.stride.unwrap_or(RAW_STRIDE))
    } else {
        let segy = a.segy.as_ref().expect("clap requires --segy or --raw");
        let volume = open_volume(segy, key_offsets(&a.keys))?;
        for &line in &a.lines {
            let section = volume.read_section(a.axis, line)?;
            jobs.push((format!("map_{}{line}.{ext}", a.axis), section.amplitudes));
        }
        (a.window.unwrap_or(seishet::segy::REAL_WINDOW), a.stride.unwrap_or(REAL_STRIDE))
    };
    let (window, stride) = (positive("window", window)?, positive("stride", stride)?);
    for (name, section) in jobs {
        let map = tile_predict(&model, &section, window, stride)?;
        let path = a.out.join(name);
        export_map(&map, &path, a.format)?;
        println!("wrote {} ({}x{})", path.display(), map.shape()[0], map.shape()[1]);
    }
    Ok(())
}

fn read_prediction(path: &Path) -> Result<Tensor<f64>> {
    if path.extension().is_some_and(|e| e == "csv") {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut rows = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            rows.push(row);
        }
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Format(format!("{}: ragged or empty CSV map", path.display())));
        }
        return Tensor::new(&[rows.len(), width], rows.concat());
    }
    let img = GrayImage::read(path)?;
    Tensor::new(
        &[img.height, img.width],
        img.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )
}

pub fn eval(a: EvalArgs) -> Result<()> {
    if a.pred.len() != a.truth.len() {
        return Err(Error::Config(format!(
            "{} predictions but {} ground-truth masks",
            a.pred.len(),
            a.truth.len()
        )));
    }
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Error::Config(format!("threshold {} must lie in [0, 1]", a.threshold)));
    }
    let mut counts = ConfusionCounts::default();
    for (p, t) in a.pred.iter().zip(&a.truth) {
        let pred = binarize(&read_prediction(p)?, a.threshold);
        let truth = mask_from_image(&GrayImage::read(t)?);
        counts += ConfusionCounts::from_masks(&pred, &truth).map_err(|e| match e {
            Error::Dimension(m) => Error::Dimension(format!("{} vs {}: {m}", p.display(), t.display())),
            other => other,
        })?;
    }
    let report = MetricsReport::from_counts(counts);
    print!("{}", report.table());
    println!("{}", report.to_json());
    if let Some(path) = &a.json_out {
        fs::write(path, report.to_json() + "\n").map_err(io_err(path))?;
    }
    Ok(())
}

pub fn info(a: InfoArgs) -> Result<()> {
    let model = load_checkpoint::<f32>(&a.checkpoint)?;
    if let Some(other) = &a.diff {
        return diff(&model, &load_checkpoint::<f32>(other)?, &a.checkpoint, other);
    }
    let hp = model.hyperparams();
    let summary = summarize(&model);
    println!("checkpoint {}", a.checkpoint.display());
    println!(
        "hyperparameters se_ratio {} heads {} key_depth {} value_depth {}",
        hp.se_ratio, hp.heads, hp.key_depth, hp.value_depth
    );
    print!("{}", summary.table());
    let backbone: usize = summary
        .layers
        .iter()
        .filter(|l| !l.name.starts_with("attention"))
        .map(|l| l.parameters)
        .sum();
    println!("total parameters {}", summary.parameters);
    println!(
        "flops {} per {PATCH}x{PATCH} patch (2 per multiply-accumulate in convolutions, transposed convolutions, dense layers and attention products; bias, activations, pooling, softmax and gating not counted)",
        summary.flops
    );
    println!(
        "published reference {PAPER_PARAMETER_COUNT} parameters and {PAPER_KILOFLOPS} kFLOPs: not reproducible from the described layer widths, whose convolutions without the attention block already hold {backbone} parameters; the published attention hyperparameters are unknown"
    );
    let frozen = model.frozen_names();
    println!("frozen {}", if frozen.is_empty() { "none".to_string() } else { frozen.join(", ") });
    Ok(())
}

fn diff(a: &NetworkModel<f32>, b: &NetworkModel<f32>, pa: &Path, pb: &Path) -> Result<()> {
    if a.variant() != b.variant() || a.hyperparams() != b.hyperparams() {
        return Err(Error::Integrity(format!(
            "{} ({}) and {} ({}) are different architectures",
            pa.display(),
            a.variant(),
            pb.display(),
            b.variant()
        )));
    }
    let (ta, tb) = (a.parameters(), b.parameters());
    let mut changed = 0;
    for ((name, x), (_, y)) in ta.iter().zip(&tb) {
        let same = x.data().iter().zip(y.data()).all(|(u, v)| u.to_bits() == v.to_bits());
        if !same {
            changed += 1;
        }
        println!("{} {name}", if same { "equal  " } else { "changed" });
    }
    if changed == 0 {
        println!("all tensors equal");
    } else {
        println!("{changed} of {} tensors changed", ta.len());
    }
    Ok(())
}
