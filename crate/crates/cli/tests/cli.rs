use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use logpolar_core::experiments::{matrix_csv, AccuracyMatrix, Cell, Variant};
use logpolar_core::imageops::Image;
use logpolar_core::logpolar::{annulus_mean_abs_diff, LogPolarConfig};
use logpolar_core::mnist::{load_split, Split, CANONICAL_FILES};
use logpolar_core::pgm;

fn data_dir() -> PathBuf {
    std::env::var_os("MNIST_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn have_data() -> bool {
    let ok = CANONICAL_FILES
        .iter()
        .all(|(n, _)| logpolar_core::mnist::locate(&data_dir(), n).exists());
    if !ok {
        eprintln!("skipping: MNIST not available in {}", data_dir().display());
    }
    ok
}

fn logpolar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logpolar"))
        .args(args)
        .env("MNIST_DATA_DIR", data_dir())
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_pgm(p: &Path) -> Image {
    pgm::decode(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn fetch_from_a_local_mirror_is_idempotent() {
    if !have_data() {
        return;
    }
    let dest = tempfile::tempdir().unwrap();
    let out = logpolar(&["fetch", "--data-dir", s(dest.path()), "--source", s(&data_dir())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for (name, _) in CANONICAL_FILES {
        assert!(dest.path().join(name).exists(), "{name} missing");
    }
    assert_eq!(stderr(&out).matches("fetched").count(), 4);

    let again = logpolar(&["fetch", "--data-dir", s(dest.path()), "--source", "/nonexistent"]);
    assert_eq!(code(&again), 0, "{}", stderr(&again));
    assert_eq!(stderr(&again).matches("present").count(), 4);
}

#[test]
fn fetch_names_a_corrupted_file() {
    if !have_data() {
        return;
    }
    let dest = tempfile::tempdir().unwrap();
    for (name, _) in CANONICAL_FILES {
        std::fs::copy(logpolar_core::mnist::locate(&data_dir(), name), dest.path().join(name)).unwrap();
    }
    let victim = dest.path().join("t10k-labels-idx1-ubyte");
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes[100] ^= 1;
    std::fs::write(&victim, bytes).unwrap();
    let out = logpolar(&["fetch", "--data-dir", s(dest.path()), "--source", "/nonexistent"]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("checksum mismatch for t10k-labels-idx1-ubyte"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn transform_of_an_mnist_digit_has_the_grid_dimensions() {
    if !have_data() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    for (t, r) in [(28, 28), (16, 10)] {
        let path = dir.path().join(format!("{t}x{r}.pgm"));
        let out = logpolar(&[
            "transform",
            "--mnist-index",
            "0",
            "--n-theta",
            &t.to_string(),
            "--n-rho",
            &r.to_string(),
            "--out-dir",
            s(dir.path()),
            "--output",
            s(&path),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let img = read_pgm(&path);
        assert_eq!((img.width(), img.height()), (t, r));
    }
}

#[test]
fn inverse_transform_reconstructs_the_annulus() {
    if !have_data() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let digit = load_split(&data_dir(), Split::Test).unwrap().images[0].clone();
    let src = dir.path().join("digit.pgm");
    std::fs::write(&src, pgm::encode(&digit)).unwrap();
    let fwd = dir.path().join("lp.pgm");
    let back = dir.path().join("back.pgm");
    let out = logpolar(&[
        "transform",
        s(&src),
        "--n-theta",
        "64",
        "--n-rho",
        "48",
        "--out-dir",
        s(dir.path()),
        "--output",
        s(&fwd),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = logpolar(&[
        "transform",
        s(&fwd),
        "--inverse",
        "--out-dir",
        s(dir.path()),
        "--output",
        s(&back),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rec = read_pgm(&back);
    assert_eq!((rec.width(), rec.height()), (28, 28));
    let cfg = LogPolarConfig::mnist(64, 48);
    let err = annulus_mean_abs_diff(&rec, &read_pgm(&src), &cfg);
    assert!(err < 0.05, "annulus error {err}");
}

#[test]
fn transform_of_a_missing_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = logpolar(&["transform", "/nonexistent/x.pgm", "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/nonexistent/x.pgm"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = s(dir.path());
    assert_eq!(
        code(&logpolar(&[
            "train",
            "--variant",
            "euclidean",
            "--epochs",
            "0",
            "--out-dir",
            out_dir
        ])),
        1
    );
    assert_eq!(code(&logpolar(&["train", "--epochs", "1", "--out-dir", out_dir])), 1);
    assert_eq!(
        code(&logpolar(&["train", "--variant", "polar", "--out-dir", out_dir])),
        1
    );
    assert_eq!(code(&logpolar(&["bogus"])), 1);
    assert_eq!(code(&logpolar(&["--version"])), 0);
    assert_eq!(
        std::fs::read_dir(dir.path()).unwrap().count(),
        0,
        "no run directory for rejected commands"
    );
}

#[test]
fn config_file_fills_in_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("in.pgm");
    std::fs::write(&src, pgm::encode(&Image::filled(28, 28, 0.5))).unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "n_theta = 16\nn_rho = 12\n").unwrap();
    let dims = |extra: &[&str]| {
        let out_path = dir.path().join("out.pgm");
        let mut args = vec![
            "transform",
            s(&src),
            "--config",
            s(&cfg),
            "--out-dir",
            s(dir.path()),
            "--output",
            s(&out_path),
        ];
        args.extend_from_slice(extra);
        let out = logpolar(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let img = read_pgm(&out_path);
        (img.width(), img.height())
    };
    assert_eq!(dims(&[]), (16, 12));
    assert_eq!(dims(&["--n-theta", "20"]), (20, 12));

    std::fs::write(&cfg, "n_thetas = 16\n").unwrap();
    let out = logpolar(&["transform", s(&src), "--config", s(&cfg), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("n_thetas"));
}

fn last_accuracy(report: &Path) -> f64 {
    let text = std::fs::read_to_string(report).unwrap();
    text.lines()
        .last()
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn train_sweep_and_mismatched_weights() {
    if !have_data() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("lp");
    let out = logpolar(&[
        "train",
        "--variant",
        "logpolar",
        "--n-theta",
        "16",
        "--n-rho",
        "10",
        "--epochs",
        "1",
        "--train-subset",
        "512",
        "--test-subset",
        "200",
        "--threads",
        "1",
        "--run-dir",
        s(&run),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["manifest.json", "weights.bin", "report.csv"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let baseline = last_accuracy(&run.join("report.csv"));

    let sweep = dir.path().join("sweep");
    let out = logpolar(&[
        "sweep",
        "--weights",
        s(&run.join("weights.bin")),
        "--variant",
        "logpolar",
        "--n-theta",
        "16",
        "--n-rho",
        "10",
        "--rotations",
        "0",
        "--scales",
        "1.0",
        "--test-subset",
        "200",
        "--run-dir",
        s(&sweep),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(sweep.join("sweep-logpolar.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[..3], ["0.0", "100.0", "logpolar"]);
    assert_eq!(row[3].parse::<f64>().unwrap(), baseline);
    assert_eq!(row[4], "200");
    let heat = read_pgm(&sweep.join("sweep-logpolar.pgm"));
    assert_eq!((heat.width(), heat.height()), (1, 1));

    let out = logpolar(&[
        "sweep",
        "--weights",
        s(&run.join("weights.bin")),
        "--variant",
        "euclidean",
        "--rotations",
        "0",
        "--scales",
        "1",
        "--test-subset",
        "10",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("architecture mismatch"), "{}", stderr(&out));
}

fn write_sweep(dir: &Path, variant: Variant, acc: impl Fn(f64, f64) -> f64) {
    let rotations: Vec<f64> = (0..12).map(|i| (30 * i) as f64).collect();
    let scales: Vec<f64> = (0..7).map(|i| (10 - i) as f64 / 10.0).collect();
    let cells = rotations
        .iter()
        .map(|&r| {
            scales
                .iter()
                .map(|&s| Cell {
                    accuracy: acc(r, s),
                    n_samples: 100,
                })
                .collect()
        })
        .collect();
    let m = AccuracyMatrix {
        variant,
        rotations,
        scales,
        cells,
        manifest_id: String::new(),
    };
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join(format!("sweep-{variant}.csv")), matrix_csv(&m).unwrap()).unwrap();
}

#[test]
fn report_needs_results_and_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results");
    std::fs::create_dir_all(&results).unwrap();
    let out = logpolar(&["report", s(&results), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no result files"));

    write_sweep(&results.join("a"), Variant::Euclidean, |r, s| {
        if r == 0.0 && s >= 0.8 {
            0.97
        } else {
            0.3
        }
    });
    write_sweep(&results.join("b"), Variant::LogPolar, |r, s| {
        if r == 0.0 && s >= 0.6 {
            0.95
        } else {
            0.4
        }
    });
    let first = dir.path().join("r1");
    let second = dir.path().join("r2");
    for d in [&first, &second] {
        let out = logpolar(&["report", s(&results), "--run-dir", s(d)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let a = std::fs::read(first.join("summary.txt")).unwrap();
    assert_eq!(a, std::fs::read(second.join("summary.txt")).unwrap());
    assert_eq!(
        std::fs::read(first.join("diff-map.pgm")).unwrap(),
        std::fs::read(second.join("diff-map.pgm")).unwrap()
    );
    let diff = read_pgm(&first.join("diff-map.pgm"));
    assert_eq!((diff.width(), diff.height()), (12, 7));
    let text = String::from_utf8(a).unwrap();
    assert!(
        text.contains("[ok] euclidean holds > 90% at 0 deg down to: 80%"),
        "{text}"
    );
    assert!(
        text.contains("[ok] logpolar holds > 90% at 0 deg down to: 60%"),
        "{text}"
    );
    assert!(
        text.contains("[ok] mean delta (logpolar - euclidean) at +-30/60/90 deg, 100%: +0.1000"),
        "{text}"
    );
}
