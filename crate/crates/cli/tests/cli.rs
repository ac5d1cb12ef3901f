use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bos-sim")).args(args).output().expect("spawn bos-sim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&bos(&["--help"])), 0);
    assert_eq!(code(&bos(&["--version"])), 0);
    let h = String::from_utf8(bos(&["--help"]).stdout).unwrap();
    for sub in ["run", "dump-kernels", "render-stimulus", "validate-config"] {
        assert!(h.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&bos(&["run", "--bogus"])), 2);
    assert_eq!(code(&bos(&["frobnicate"])), 2);
    assert_eq!(code(&bos(&["run", "--experiment", "nope"])), 2);
    assert_eq!(code(&bos(&[])), 2);
}

#[test]
fn validate_config_reports_the_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    fs::write(&good, "# defaults plus one override\nexperiment = kanizsa\n\n[rl]\nmax_iter = 8\n").unwrap();
    let o = bos(&["validate-config", path(&good)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "[rl]\nmax_iter = 8\nsharpness = 3\n").unwrap();
    let o = bos(&["validate-config", path(&bad)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.cfg:3"), "{}", stderr(&o));

    let o = bos(&["validate-config", path(&dir.path().join("missing.cfg"))]);
    assert_ne!(code(&o), 0);
}

#[test]
fn invalid_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "[rl]\nmax_iter = 0\n").unwrap();
    assert_eq!(code(&bos(&["validate-config", path(&cfg)])), 2);
    let o = bos(&["run", "--neuron", "v,bld,up", "--out", path(dir.path())]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn render_stimulus_writes_a_graymap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.cfg");
    fs::write(&cfg, "[stimulus]\nshape_kind = pacman_display\n").unwrap();
    let out = dir.path().join("kz.pgm");
    let o = bos(&["render-stimulus", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bytes = fs::read(&out).unwrap();
    assert!(bytes.starts_with(b"P5\n400 400\n254\n"));
    assert_eq!(bytes.len(), "P5\n400 400\n254\n".len() + 400 * 400);
}

#[test]
fn dump_kernels_writes_text_grids() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k");
    let o = bos(&["dump-kernels", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let files: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
    assert!(files.len() >= 20);
    assert!(files.iter().all(|f| f.extension().map_or(false, |e| e == "txt")));
}

#[test]
fn runs_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for threads in ["1", "2"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = bos(&["run", "--experiment", "overlap_vmi", "--threads", threads, "--out", path(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let base = out.join("overlap_vmi");
        for f in ["metrics.csv", "report.json", "vmi.csv"] {
            assert!(base.join(f).is_file(), "missing {f}");
        }
        let stim = base.join("ov-v-light-A");
        for f in ["rows.csv", "record.json", "maps/canvas.pgm", "maps/direction.pgm"] {
            assert!(stim.join(f).is_file(), "missing {f}");
        }
        reports.push((
            fs::read(base.join("metrics.csv")).unwrap(),
            fs::read(base.join("report.json")).unwrap(),
            fs::read(base.join("vmi.csv")).unwrap(),
        ));
    }
    assert!(reports[0] == reports[1], "outputs differ between 1 and 2 threads");
}
