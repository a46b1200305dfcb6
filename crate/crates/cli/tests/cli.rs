use std::process::{Command, Output};

fn mimo3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimo3d"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_passes_on_clean_channels() {
    let o = mimo3d(&["verify", "--channels", "30", "--seed", "4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("R13 null block"));
    assert!(text.trim_end().ends_with("PASS"));
}

#[test]
fn verify_fails_with_a_scrambled_generator() {
    let o = mimo3d(&["verify", "--channels", "3", "--scramble-column", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn verify_rejects_zero_channels() {
    let o = mimo3d(&["verify", "--channels", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least one"));
}

#[test]
fn complexity_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nodes.csv");
    let o = mimo3d(&[
        "complexity",
        "--snr",
        "0,30",
        "--trials",
        "40",
        "--workers",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "snr_db,decoder,trials,bit_errors,ber,avg_total_nodes,avg_delay_nodes,max_delay_nodes,mismatches_vs_oracle"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,sphere,40,"));
    assert!(lines[4].starts_with("30,simplified,40,"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",0")));
}

#[test]
fn ber_with_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("ber.csv");
    std::fs::write(
        &cfg,
        format!(
            "snr = \"inf\"\ntrials = 25\ndecoders = \"bruteforce,simplified\"\nout = \"{}\"\n",
            out.display()
        ),
    )
    .unwrap();
    let o = mimo3d(&["ber", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    // noiseless: no errors, every trial checked against the oracle
    assert!(csv.contains("inf,bruteforce,25,0,0,65536,65536,65536,0"));
    assert!(csv.contains("inf,simplified,25,0,0,"));
}

#[test]
fn bruteforce_above_the_cap_is_a_config_error() {
    let o = mimo3d(&[
        "ber",
        "--decoders",
        "bruteforce",
        "--trials",
        "5000",
        "--snr",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = mimo3d(&[
        "ber",
        "--m",
        "16",
        "--decoders",
        "bruteforce",
        "--trials",
        "1",
        "--snr",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("override"));
}

#[test]
fn bad_arguments_are_rejected() {
    assert_eq!(
        mimo3d(&["ber", "--m", "8", "--snr", "0", "--trials", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        mimo3d(&["ber", "--decoders", "nope"]).status.code(),
        Some(2)
    );
    assert_eq!(mimo3d(&["ber", "--snr", "0:10:-1"]).status.code(), Some(2));
    assert!(!mimo3d(&["frobnicate"]).status.success());
}

#[test]
fn decode_one_dumps_intermediates() {
    let o = mimo3d(&["decode-one", "--snr", "15", "--seed", "3", "--trial", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for needle in [
        "z~ = [",
        "R11 =",
        "R23 =",
        "F =",
        "sorted d",
        "branch traces",
        "decoded indices",
        "nodes: total",
    ] {
        assert!(text.contains(needle), "missing {needle}");
    }
    assert_eq!(
        text,
        stdout(&mimo3d(&[
            "decode-one",
            "--snr",
            "15",
            "--seed",
            "3",
            "--trial",
            "2"
        ]))
    );
}
