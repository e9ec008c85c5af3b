//! Exit-code and flag contracts of the binary: 0 success, 1 check
//! failure, 2 usage/config/I-O error; unknown flags are errors; --help on
//! every subcommand; end-to-end extract/train/infer/eval flows.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_liquidseg"))
}

fn work_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("liquidseg-cli-contract").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn generate(dir: &Path, count: usize, seed: u64) {
    let status = bin()
        .args([
            "synth", "generate", "--count", &count.to_string(), "--size", "32", "--seed",
            &seed.to_string(), "--out",
        ])
        .arg(dir)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn help_exits_zero_everywhere() {
    for sub in [
        vec!["--help"],
        vec!["lss", "extract", "--help"],
        vec!["synth", "generate", "--help"],
        vec!["train", "--help"],
        vec!["infer", "--help"],
        vec!["eval", "--help"],
        vec!["gradcheck", "--help"],
    ] {
        let output = bin().args(&sub).output().unwrap();
        assert!(
            output.status.success(),
            "--help failed for {sub:?}: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        assert!(!output.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_two() {
    // No command.
    assert_eq!(bin().status().unwrap().code(), Some(2));
    // Unknown command.
    assert_eq!(bin().arg("frobnicate").status().unwrap().code(), Some(2));
    // Unknown flag is an error, not a warning.
    let out = bin()
        .args(["gradcheck", "--bogus-flag"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus-flag"));
    // Missing file.
    let code = bin()
        .args(["lss", "extract", "--input", "/nonexistent.ppm", "--out", "/tmp/x.lssf"])
        .status()
        .unwrap()
        .code();
    assert_eq!(code, Some(2));
    // Bad config value.
    let dir = work_dir("badcfg");
    std::fs::write(dir.join("bad.cfg"), "[network]\nnot_a_key = 1\n").unwrap();
    let code = bin()
        .args(["synth", "generate", "--out"])
        .arg(dir.join("d"))
        .arg("--config")
        .arg(dir.join("bad.cfg"))
        .status()
        .unwrap()
        .code();
    assert_eq!(code, Some(2));
}

#[test]
fn gradcheck_32_bit_passes_and_prints() {
    let out = bin().args(["gradcheck", "--bits", "32"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("bits=32"));
    assert!(stdout.contains("PASS"));
}

#[test]
fn eval_identical_dirs_is_perfect() {
    let dir = work_dir("eval");
    generate(&dir, 3, 11);
    // Score the masks against themselves: pull msk_*.pgm into a pred dir.
    let pred = dir.join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with("msk_") {
            std::fs::copy(entry.path(), pred.join(&name)).unwrap();
        }
    }
    let report_path = dir.join("report.tsv");
    let out = bin()
        .args(["eval", "--pred"])
        .arg(&pred)
        .arg("--gt")
        .arg(&dir)
        .arg("--report")
        .arg(&report_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let report = std::fs::read_to_string(&report_path).unwrap();
    for line in report.lines().filter(|l| l.starts_with("msk_")) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols[1], "1.000000", "dice: {line}");
        assert_eq!(cols[2], "1.000000", "iou: {line}");
        assert_eq!(cols[3], "0.000000", "hd95: {line}");
    }
    assert!(report.contains("mean\t1.000000\t1.000000\t0.000000"));
    assert!(
        report.contains("# [network]"),
        "report must echo the effective config"
    );
}

#[test]
fn zero_learning_rate_checkpoint_equals_initialization() {
    let dir = work_dir("lr0");
    generate(&dir.join("data"), 4, 21);
    for (name, epochs, lr) in [("init.lsck", "0", "0.001"), ("lr0.lsck", "2", "0.0")] {
        let status = bin()
            .args(["train", "--data"])
            .arg(dir.join("data"))
            .arg("--out")
            .arg(dir.join(name))
            .args(["--epochs", epochs, "--lr", lr, "--seed", "77"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    // Compare parameter payloads (headers echo different epoch counts).
    let payload = |name: &str| -> Vec<u8> {
        let bytes = std::fs::read(dir.join(name)).unwrap();
        let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        bytes[9 + header_len..].to_vec()
    };
    assert_eq!(
        payload("init.lsck"),
        payload("lr0.lsck"),
        "zero learning rate moved parameters"
    );
}

#[test]
fn train_infer_eval_round_trip() {
    let dir = work_dir("flow");
    generate(&dir.join("data"), 6, 31);
    let ckpt = dir.join("model.lsck");
    let status = bin()
        .args(["train", "--data"])
        .arg(dir.join("data"))
        .arg("--out")
        .arg(&ckpt)
        .args(["--epochs", "2", "--seed", "9", "--log"])
        .arg(dir.join("train.log"))
        .status()
        .unwrap();
    assert!(status.success());

    let log = std::fs::read_to_string(dir.join("train.log")).unwrap();
    assert!(log.contains("# [network]"), "log must echo the config");
    assert_eq!(
        log.lines().filter(|l| l.starts_with("epoch=")).count(),
        2,
        "one line per epoch"
    );
    assert!(log.contains("total="));

    // Inference produces the documented artifacts.
    let out_dir = dir.join("out");
    let status = bin()
        .args(["infer", "--ckpt"])
        .arg(&ckpt)
        .arg("--input")
        .arg(dir.join("data").join("img_00000.ppm"))
        .arg("--out")
        .arg(&out_dir)
        .arg("--dump-trajectory")
        .arg(dir.join("traj.txt"))
        .status()
        .unwrap();
    assert!(status.success());
    for artifact in [
        "mask.pgm",
        "prob.pgm",
        "map.lssf",
        "lss_mean.pgm",
        "lss_max.pgm",
        "lss_std.pgm",
    ] {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }
    let traj = std::fs::read_to_string(dir.join("traj.txt")).unwrap();
    // T+1 step-indexed rows (h_0 .. h_4 at the default T = 4).
    assert_eq!(traj.lines().count(), 5);
    assert!(traj.lines().next().unwrap().starts_with("0 "));

    // Checkpoint config echo survives into the loaded run.
    let bytes = std::fs::read(&ckpt).unwrap();
    assert_eq!(&bytes[0..4], b"LSCK");
    let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let header = std::str::from_utf8(&bytes[9..9 + header_len]).unwrap();
    assert!(header.contains("[network]"));
    assert!(header.contains("seed = 9"));
    assert!(header.contains("[manifest]"));
}

#[test]
fn lss_extract_writes_expected_container_and_echo() {
    let dir = work_dir("extract");
    generate(&dir, 1, 3);
    let out = bin()
        .args(["lss", "extract", "--input"])
        .arg(dir.join("img_00000.ppm"))
        .arg("--out")
        .arg(dir.join("map.lssf"))
        .arg("--export-png")
        .arg(dir.join("png"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("K=5 R=5"), "default config echo missing");

    let bytes = std::fs::read(dir.join("map.lssf")).unwrap();
    assert_eq!(&bytes[0..4], b"LSSF");
    assert_eq!(bytes[4], 1); // version
    assert_eq!(bytes[5], 3); // channels
    let h = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    assert_eq!((h, w), (32, 32));
    assert_eq!(bytes.len(), 14 + 3 * h * w * 4);

    // Exported channel images carry the config echo as a header comment.
    let png = std::fs::read(dir.join("png").join("lss_std.pgm")).unwrap();
    let head = String::from_utf8_lossy(&png[..64.min(png.len())]);
    assert!(head.contains("K=5 R=5"));
}

#[test]
fn uniform_image_gives_zero_payload() {
    let dir = work_dir("uniform");
    // A constant 48x48 gray image.
    let mut data = vec![b'P', b'5', b'\n'];
    data.extend_from_slice(b"48 48\n255\n");
    data.extend(std::iter::repeat(128u8).take(48 * 48));
    std::fs::write(dir.join("flat.pgm"), &data).unwrap();
    let status = bin()
        .args(["lss", "extract", "--input"])
        .arg(dir.join("flat.pgm"))
        .arg("--out")
        .arg(dir.join("flat.lssf"))
        .status()
        .unwrap();
    assert!(status.success());
    let bytes = std::fs::read(dir.join("flat.lssf")).unwrap();
    for chunk in bytes[14..].chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        assert!(v.abs() < 1e-6, "uniform image produced payload value {v}");
    }
}

#[test]
fn affine_jittered_input_yields_matching_payload() {
    // End-to-end invariance through the files: an affine brightness change
    // that is exact on the 8-bit grid (bytes <= 127, gain exactly 2, far
    // from saturation) must reproduce the map payload to 1e-5.
    let dir = work_dir("jitter");
    let (w, h) = (24usize, 24usize);
    let mut rng = liquidseg::rng::Pcg32::new(64, 64);
    let mut base = format!("P6\n{w} {h}\n255\n").into_bytes();
    let payload_start = base.len();
    for _ in 0..w * h * 3 {
        base.push(10 + rng.below(91) as u8); // bytes in [10, 100]
    }
    let mut jittered = base.clone();
    for b in &mut jittered[payload_start..] {
        *b *= 2;
    }
    std::fs::write(dir.join("base.ppm"), &base).unwrap();
    std::fs::write(dir.join("jittered.ppm"), &jittered).unwrap();
    for (input, output) in [("base.ppm", "base.lssf"), ("jittered.ppm", "jit.lssf")] {
        let status = bin()
            .args(["lss", "extract", "--input"])
            .arg(dir.join(input))
            .arg("--out")
            .arg(dir.join(output))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let read_floats = |name: &str| -> Vec<f32> {
        std::fs::read(dir.join(name)).unwrap()[14..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let base_map = read_floats("base.lssf");
    let jit_map = read_floats("jit.lssf");
    let worst = base_map
        .iter()
        .zip(&jit_map)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(worst < 1e-5, "jittered payload deviates by {worst}");
}
