use std::path::Path;
use std::process::{Command, Output};

fn mccdic(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mccdic"))
        .args(args)
        .current_dir(cwd)
        .env("MCCDIC_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) {
    let out = mccdic(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn commands_compose_into_a_restoration() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        &[
            "phantom",
            "--size",
            "32",
            "--inconsistent",
            "--seed",
            "1",
            "--out-prefix",
            "p",
        ],
        d,
    );
    ok(
        &[
            "degrade",
            "--mode",
            "sr",
            "--scale",
            "2",
            "--in",
            "p_x2.mct",
            "--out",
            "lr.mct",
            "--lr-out",
            "small.mct",
        ],
        d,
    );

    std::fs::create_dir(d.join("corpus")).unwrap();
    for i in 0..2 {
        let stem = format!("corpus/s{i}");
        ok(
            &[
                "phantom",
                "--size",
                "32",
                "--seed",
                &(10 + i).to_string(),
                "--out-prefix",
                &stem,
            ],
            d,
        );
        std::fs::rename(
            d.join(format!("{stem}_x1.mct")),
            d.join(format!("{stem}_ref.mct")),
        )
        .unwrap();
        std::fs::rename(
            d.join(format!("{stem}_x2.mct")),
            d.join(format!("{stem}_target.mct")),
        )
        .unwrap();
        std::fs::remove_file(d.join(format!("{stem}_x1.mct.manifest.txt"))).ok();
    }
    ok(
        &[
            "learn",
            "--corpus",
            "corpus",
            "--epochs",
            "2",
            "--dict-iterations",
            "10",
            "--widths",
            "4",
            "--out",
            "dict",
            "--log",
            "learn.csv",
        ],
        d,
    );
    ok(
        &[
            "solve",
            "--ref",
            "p_x1.mct",
            "--target",
            "lr.mct",
            "--dict",
            "dict",
            "--widths",
            "4",
            "--T",
            "3",
            "--out",
            "rec.mct",
            "--trace",
            "trace.csv",
            "--dump-components",
            "comp",
        ],
        d,
    );
    ok(
        &[
            "eval",
            "--rec",
            "rec.mct",
            "--gt",
            "p_x2.mct",
            "--report",
            "report.csv",
        ],
        d,
    );

    for f in [
        "small.mct",
        "dict/dict.txt",
        "learn.csv",
        "trace.csv",
        "report.csv",
        "rec.mct.manifest.txt",
    ] {
        assert!(d.join(f).is_file(), "{f}");
    }
    assert_eq!(
        std::fs::read_to_string(d.join("trace.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );
    let report = std::fs::read_to_string(d.join("report.csv")).unwrap();
    assert!(report.starts_with("label,psnr,ssim,rmse,rmse_x100"));
}

#[test]
fn missing_input_fails_with_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mccdic(
        &["degrade", "--in", "nope.mct", "--out", "x.mct"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.mct"));
    assert!(!tmp.path().join("x.mct").exists());
}

#[test]
fn bad_arguments_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mccdic(
        &[
            "degrade", "--mode", "blur", "--in", "a.mct", "--out", "b.mct",
        ],
        tmp.path(),
    );
    assert!(!out.status.success());
    let out = mccdic(
        &[
            "solve", "--ref", "a", "--target", "b", "--out", "c", "--tied", "--untied",
        ],
        tmp.path(),
    );
    assert!(!out.status.success());
}
