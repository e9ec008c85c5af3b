//! Single-binary front end for the segmentation toolkit.
//!
//! Subcommands: `lss extract`, `synth generate`, `train`, `infer`, `eval`,
//! `gradcheck`. Exit codes: 0 success, 1 check/runtime failure, 2 usage,
//! configuration, or I/O error. Diagnostics go to stderr; reports and logs
//! are both human-readable and machine-parseable.

use std::path::{Path, PathBuf};

use liquidseg::checkpoint;
use liquidseg::config::RunConfig;
use liquidseg::gradcheck;
use liquidseg::lss;
use liquidseg::lssf;
use liquidseg::metrics::{MetricReport, MetricRow, SegMask};
use liquidseg::net::Network;
use liquidseg::pnm;
use liquidseg::synth;
use liquidseg::train::{self, Dataset};
use liquidseg::Error as CoreError;

enum CliError {
    /// Usage, configuration, or I/O problem -> exit 2.
    Usage(String),
    /// A check or run failed -> exit 1.
    Failure(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFinite { .. } => CliError::Failure(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

fn usage_root() -> String {
    "liquidseg <command> [options]\n\
     \n\
     commands:\n\
     \x20 lss extract     compute a structural-similarity map for one image\n\
     \x20 synth generate  write a seeded synthetic dataset\n\
     \x20 train           train the segmentation network\n\
     \x20 infer           segment one image with a trained checkpoint\n\
     \x20 eval            score predicted masks against ground truth\n\
     \x20 gradcheck       run the finite-difference gradient suite\n\
     \n\
     global options:\n\
     \x20 --threads N     worker threads (default 1; 1 guarantees\n\
     \x20                 bit-reproducible output; execution is currently\n\
     \x20                 single-threaded for every N)\n\
     \x20 --help          show this message or per-command help\n"
        .to_string()
}

/// Tiny flag parser: every flag is consumed explicitly; leftovers error.
struct Args {
    items: Vec<String>,
}

impl Args {
    fn new(items: Vec<String>) -> Self {
        Args { items }
    }

    fn take_flag(&mut self, name: &str) -> bool {
        if let Some(pos) = self.items.iter().position(|a| a == name) {
            self.items.remove(pos);
            true
        } else {
            false
        }
    }

    fn take_value(&mut self, name: &str) -> Result<Option<String>, CliError> {
        if let Some(pos) = self.items.iter().position(|a| a == name) {
            if pos + 1 >= self.items.len() {
                return Err(CliError::Usage(format!("{name} requires a value")));
            }
            let value = self.items.remove(pos + 1);
            self.items.remove(pos);
            Ok(Some(value))
        } else {
            Ok(None)
        }
    }

    fn require_value(&mut self, name: &str) -> Result<String, CliError> {
        self.take_value(name)?
            .ok_or_else(|| CliError::Usage(format!("missing required flag {name}")))
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, name: &str) -> Result<Option<T>, CliError> {
        match self.take_value(name)? {
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("bad value for {name}: {v}"))),
            None => Ok(None),
        }
    }

    fn finish(self) -> CliResult {
        if self.items.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "unknown argument(s): {}",
                self.items.join(" ")
            )))
        }
    }
}

fn load_config(args: &mut Args) -> Result<RunConfig, CliError> {
    match args.take_value("--config")? {
        Some(path) => Ok(RunConfig::parse_file(Path::new(&path))?),
        None => Ok(RunConfig::default()),
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let code = match run(argv) {
        Ok(()) => 0,
        Err(CliError::Failure(msg)) => {
            eprintln!("{msg}");
            1
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    };
    std::process::exit(code);
}

fn run(argv: Vec<String>) -> CliResult {
    let mut args = Args::new(argv);
    // Global flags are valid in any position.
    let help = args.take_flag("--help") || args.take_flag("-h");
    let threads: usize = args.take_parsed("--threads")?.unwrap_or(1);
    if threads == 0 {
        return Err(CliError::Usage("--threads must be >= 1".into()));
    }
    if threads > 1 {
        eprintln!(
            "note: execution is single-threaded; --threads {threads} does not change results"
        );
    }
    if args.items.is_empty() {
        if help {
            print!("{}", usage_root());
            return Ok(());
        }
        return Err(CliError::Usage(
            "no command given (try --help)".to_string(),
        ));
    }
    let command = args.items.remove(0);
    match command.as_str() {
        "lss" => {
            if args.items.first().map(String::as_str) == Some("extract") {
                args.items.remove(0);
                cmd_lss_extract(args, help)
            } else {
                Err(CliError::Usage("usage: liquidseg lss extract ...".into()))
            }
        }
        "synth" => {
            if args.items.first().map(String::as_str) == Some("generate") {
                args.items.remove(0);
                cmd_synth_generate(args, help)
            } else {
                Err(CliError::Usage(
                    "usage: liquidseg synth generate ...".into(),
                ))
            }
        }
        "train" => cmd_train(args, help),
        "infer" => cmd_infer(args, help),
        "eval" => cmd_eval(args, help),
        "gradcheck" => cmd_gradcheck(args, help),
        other => Err(CliError::Usage(format!(
            "unknown command {other} (try --help)"
        ))),
    }
}

// ── lss extract ──────────────────────────────────────────────────────

fn cmd_lss_extract(mut args: Args, help: bool) -> CliResult {
    if help {
        println!(
            "liquidseg lss extract --input <img.ppm|img.pgm> --out <map.lssf>\n\
             \x20 [--patch K] [--radius R] [--epsilon E] [--export-png <dir>]\n\
             \x20 [--config <file>]\n\
             Computes the 3-channel structural-similarity map (mean, max,\n\
             std of patch cosine similarities) and writes it as an LSSF\n\
             container. --export-png also writes min-max normalized\n\
             grayscale channel images."
        );
        return Ok(());
    }
    let mut cfg = load_config(&mut args)?;
    let input = args.require_value("--input")?;
    let out = args.require_value("--out")?;
    if let Some(k) = args.take_parsed::<usize>("--patch")? {
        cfg.lss.patch = k;
    }
    if let Some(r) = args.take_parsed::<usize>("--radius")? {
        cfg.lss.radius = r;
    }
    if let Some(e) = args.take_parsed::<f64>("--epsilon")? {
        cfg.lss.epsilon = e;
    }
    let export = args.take_value("--export-png")?;
    args.finish()?;

    let image = pnm::read_image(Path::new(&input))?;
    let map = lss::compute_lss_map::<f64>(&image, &cfg.lss)?;
    lssf::write_lssf(Path::new(&out), &map)?;
    let echo = format!(
        "K={} R={} epsilon={} input={}x{}",
        cfg.lss.patch, cfg.lss.radius, cfg.lss.epsilon, image.height, image.width
    );
    println!("{echo}");
    println!("wrote {out}");
    if let Some(dir) = export {
        let paths = lss::export_explainability(&map, Path::new(&dir), &[&echo])?;
        for p in &paths {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

// ── synth generate ───────────────────────────────────────────────────

fn cmd_synth_generate(mut args: Args, help: bool) -> CliResult {
    if help {
        println!(
            "liquidseg synth generate --out <dir> [--count N] [--size S]\n\
             \x20 [--seed X] [--config <file>]\n\
             Writes img_NNNNN.ppm / msk_NNNNN.pgm pairs plus a manifest\n\
             echoing the effective configuration. Identical seeds produce\n\
             bit-identical datasets."
        );
        return Ok(());
    }
    let mut cfg = load_config(&mut args)?;
    let out = args.require_value("--out")?;
    if let Some(v) = args.take_parsed::<usize>("--count")? {
        cfg.synth.count = v;
    }
    if let Some(v) = args.take_parsed::<usize>("--size")? {
        cfg.synth.size = v;
    }
    if let Some(v) = args.take_parsed::<u64>("--seed")? {
        cfg.synth.seed = v;
    }
    args.finish()?;
    cfg.synth.validate()?;
    synth::write_dataset(&cfg.synth, Path::new(&out), &cfg.to_text())?;
    println!(
        "wrote {} samples of size {} (seed {}) to {}",
        cfg.synth.count, cfg.synth.size, cfg.synth.seed, out
    );
    Ok(())
}

// ── train ────────────────────────────────────────────────────────────

fn cmd_train(mut args: Args, help: bool) -> CliResult {
    if help {
        println!(
            "liquidseg train --data <dir> --out <ckpt> [--config <file>]\n\
             \x20 [--epochs E] [--batch B] [--lr F] [--seed X]\n\
             \x20 [--val-data <dir>] [--log <file>]\n\
             \x20 [--no-lss] [--t-steps N] [--lambda-bal F]\n\
             Trains on img_/msk_ pairs (network input size follows the\n\
             dataset), writes a checkpoint and a line-oriented loss log\n\
             (default <ckpt>.log). Ablations: --no-lss disables additive\n\
             fusion, --t-steps 0 zeroes the refinement token,\n\
             --lambda-bal 0 drops the boundary term."
        );
        return Ok(());
    }
    let mut cfg = load_config(&mut args)?;
    let data_dir = args.require_value("--data")?;
    let out = args.require_value("--out")?;
    if let Some(v) = args.take_parsed::<usize>("--epochs")? {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.take_parsed::<usize>("--batch")? {
        cfg.train.batch_size = v;
    }
    if let Some(v) = args.take_parsed::<f64>("--lr")? {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = args.take_parsed::<u64>("--seed")? {
        cfg.network.seed = v;
        cfg.train.shuffle_seed = v;
    }
    if args.take_flag("--no-lss") {
        cfg.network.lss_enabled = false;
    }
    if let Some(v) = args.take_parsed::<usize>("--t-steps")? {
        cfg.network.t_steps = v;
    }
    if let Some(v) = args.take_parsed::<f64>("--lambda-bal")? {
        cfg.weights.lambda_bal = v;
    }
    let val_dir = args.take_value("--val-data")?;
    let log_path = args
        .take_value("--log")?
        .unwrap_or_else(|| format!("{out}.log"));
    args.finish()?;

    let data = Dataset::load_dir(Path::new(&data_dir))?;
    let first = &data.samples[0].image;
    cfg.network.input_height = first.height;
    cfg.network.input_width = first.width;
    let val = match &val_dir {
        Some(dir) => Some(Dataset::load_dir(Path::new(dir))?),
        None => None,
    };

    let mut net: Network<f32> = Network::new(cfg.network_config())?;
    eprintln!(
        "training on {} samples ({} parameters, {} epochs)",
        data.len(),
        net.store.total_parameters(),
        cfg.train.epochs
    );
    let outcome = train::train_with_progress(
        &mut net,
        &data,
        &cfg.train_config(),
        val.as_ref(),
        |log| {
            eprintln!("{}", log.mean.log_line(log.epoch));
        },
    )?;

    let echo = cfg.to_text();
    checkpoint::save(Path::new(&out), &net, &echo)?;
    let header: Vec<String> = echo.lines().map(str::to_string).collect();
    let log_text = train::format_training_log(&header, &outcome.epochs);
    std::fs::write(Path::new(&log_path), log_text)
        .map_err(|e| CoreError::io(Path::new(&log_path), e))?;
    println!("wrote checkpoint {out}");
    println!("wrote training log {log_path}");
    if let Some(report) = outcome.validation {
        print!("{}", report.to_aligned());
    }
    Ok(())
}

// ── infer ────────────────────────────────────────────────────────────

fn cmd_infer(mut args: Args, help: bool) -> CliResult {
    if help {
        println!(
            "liquidseg infer --ckpt <file> --input <img.ppm> --out <dir>\n\
             \x20 [--dump-trajectory <file>]\n\
             Writes mask.pgm (thresholded at 0.5), prob.pgm, the structural\n\
             map (map.lssf + channel PGMs), and optionally the refinement\n\
             cell's hidden-state trajectory as step-indexed rows."
        );
        return Ok(());
    }
    let ckpt = args.require_value("--ckpt")?;
    let input = args.require_value("--input")?;
    let out_dir = PathBuf::from(args.require_value("--out")?);
    let traj_path = args.take_value("--dump-trajectory")?;
    args.finish()?;

    let (net, run_cfg): (Network<f32>, RunConfig) = checkpoint::load(Path::new(&ckpt))?;
    let image = pnm::read_image(Path::new(&input))?;
    let inference = net.infer(&image)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| CoreError::io(&out_dir, e))?;

    let mask_img = liquidseg::image::Image {
        width: inference.mask.width,
        height: inference.mask.height,
        channels: 1,
        data: inference.mask.bits.iter().map(|&b| b as f64).collect(),
    };
    pnm::write_image(&out_dir.join("mask.pgm"), &mask_img, &[])?;
    let prob_img = liquidseg::image::Image {
        width: inference.mask.width,
        height: inference.mask.height,
        channels: 1,
        data: inference.probabilities.clone(),
    };
    pnm::write_image(&out_dir.join("prob.pgm"), &prob_img, &[])?;
    lssf::write_lssf(&out_dir.join("map.lssf"), &inference.lss)?;
    let echo = format!(
        "K={} R={}",
        run_cfg.lss.patch, run_cfg.lss.radius
    );
    lss::export_explainability(&inference.lss, &out_dir, &[&echo])?;
    if let Some(path) = traj_path {
        let mut text = String::new();
        for (step, h) in inference.hidden_trajectory.iter().enumerate() {
            text.push_str(&step.to_string());
            for v in h {
                text.push_str(&format!(" {v:.9e}"));
            }
            text.push('\n');
        }
        std::fs::write(Path::new(&path), text)
            .map_err(|e| CoreError::io(Path::new(&path), e))?;
        println!("wrote trajectory {path}");
    }
    println!("wrote inference artifacts to {}", out_dir.display());
    Ok(())
}

// ── eval ─────────────────────────────────────────────────────────────

fn cmd_eval(mut args: Args, help: bool) -> CliResult {
    if help {
        println!(
            "liquidseg eval --pred <dir> --gt <dir> --report <file>\n\
             \x20 [--config <file>]\n\
             Pairs *.pgm masks by filename, scores Dice/IoU/HD95 per image\n\
             plus mean/median aggregates. The report file is tab-separated\n\
             with the effective configuration echoed as '#' comments;\n\
             stdout carries the aligned table."
        );
        return Ok(());
    }
    let cfg = load_config(&mut args)?;
    let pred_dir = PathBuf::from(args.require_value("--pred")?);
    let gt_dir = PathBuf::from(args.require_value("--gt")?);
    let report_path = args.require_value("--report")?;
    args.finish()?;

    let mut names: Vec<String> = std::fs::read_dir(&gt_dir)
        .map_err(|e| CoreError::io(&gt_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".pgm"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::Usage(format!(
            "no .pgm masks found in {}",
            gt_dir.display()
        )));
    }
    let mut rows = Vec::with_capacity(names.len());
    for name in &names {
        let gt_path = gt_dir.join(name);
        let pred_path = pred_dir.join(name);
        if !pred_path.exists() {
            return Err(CliError::Usage(format!(
                "prediction missing for {name}: {}",
                pred_path.display()
            )));
        }
        let (gt_bits, gw, gh) = pnm::read_mask(&gt_path)?;
        let (pred_bits, pw, ph) = pnm::read_mask(&pred_path)?;
        let gt = SegMask::new(gw, gh, gt_bits);
        let pred = SegMask::new(pw, ph, pred_bits);
        rows.push(MetricRow {
            name: name.trim_end_matches(".pgm").to_string(),
            dice: liquidseg::metrics::dice_score(&pred, &gt)?,
            iou: liquidseg::metrics::iou_score(&pred, &gt)?,
            hd95: liquidseg::metrics::hd95(&pred, &gt)?.value(),
        });
    }
    let report = MetricReport::from_rows(rows);
    let mut header = vec![
        format!("pred = {}", pred_dir.display()),
        format!("gt = {}", gt_dir.display()),
    ];
    header.extend(cfg.to_text().lines().map(str::to_string));
    std::fs::write(Path::new(&report_path), report.to_tsv(&header))
        .map_err(|e| CoreError::io(Path::new(&report_path), e))?;
    print!("{}", report.to_aligned());
    println!("wrote report {report_path}");
    Ok(())
}

// ── gradcheck ────────────────────────────────────────────────────────

fn print_suite(report: &gradcheck::SuiteReport) {
    for c in &report.checks {
        println!(
            "CHECK {:28} max_rel_err={:<12.3e} coords={:<4} abs_validated={:<4} {}",
            c.name,
            c.max_rel_err,
            c.coords,
            c.abs_validated,
            if c.passed() { "PASS" } else { "FAIL" }
        );
    }
}

fn cmd_gradcheck(mut args: Args, help: bool) -> CliResult {
    if help {
        println!(
            "liquidseg gradcheck [--bits 32|64] [--seed X]\n\
             Verifies analytic gradients of every tensor primitive, the\n\
             loss functions, the refinement-cell rollout, and the full toy\n\
             network against central finite differences. Exits 1 on any\n\
             failure. 64-bit: step 1e-6, tolerance 1e-5; 32-bit: step 1e-3,\n\
             tolerance 1e-3 (primitives and losses)."
        );
        return Ok(());
    }
    let bits: u32 = args.take_parsed("--bits")?.unwrap_or(64);
    let seed: u64 = args.take_parsed("--seed")?.unwrap_or(2024);
    args.finish()?;
    let report = match bits {
        32 => gradcheck::run_suite::<f32>(seed),
        64 => gradcheck::run_suite::<f64>(seed),
        other => {
            return Err(CliError::Usage(format!(
                "--bits must be 32 or 64, got {other}"
            )))
        }
    };
    print_suite(&report);
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!(
        "gradcheck bits={bits} seed={seed}: {verdict} (max rel err {:.3e} over {} coords)",
        report.max_rel_err(),
        report.total_coords()
    );
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failure(format!(
            "gradcheck failed: max rel err {:.3e} exceeds tolerance",
            report.max_rel_err()
        )))
    }
}
