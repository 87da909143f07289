use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
levels = 2
spot_sigma = 1.0
target_isnr_db = 20.0

[grid]
width = 16
height = 16
pixel_pitch = 250.0

[instrument]
pinhole_radius = 1.5

[reconstruct]
ratios = [0.25, 1.0]
trials = 1

[centroid]
ratios = [0.25, 1.0]
trials = 1
"#;

fn deflecto(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deflecto"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_dir() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("small.toml"), SMALL).unwrap();
    tmp
}

#[test]
fn step_by_step_pipeline() {
    let tmp = small_dir();
    let d = tmp.path();
    let base = ["--config", "small.toml", "--out", "o"];
    for cmd in ["simulate", "calibrate", "reconstruct", "centroid"] {
        let o = deflecto(d, &[&base[..], &[cmd]].concat());
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
    assert!(d.join("o/dataset/manifest.toml").exists());
    let manifest = fs::read_to_string(d.join("o/dataset/manifest.toml")).unwrap();
    assert!(manifest.contains("eps_full"));

    let rec = fs::read_to_string(d.join("o/reconstruct.csv")).unwrap();
    let mut lines = rec.lines();
    assert!(lines.next().unwrap().starts_with("# deflecto reconstruct v1 isnr_db="));
    assert_eq!(
        lines.next().unwrap(),
        "lens_power,ratio,trial,pixel_id,m_count,osnr_db,iterations,converged"
    );
    assert_eq!(lines.count(), 2 * 2 * 5);
    let cen = fs::read_to_string(d.join("o/centroid.csv")).unwrap();
    assert_eq!(cen.lines().nth(1).unwrap(), "lens_power,ratio,trial,pixel_id,m_count,error_px");

    let o = deflecto(d, &["plot", "o/reconstruct.csv", "o/centroid.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = fs::read_to_string(d.join("o/reconstruct.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 4);
    assert!(svg.contains(r#"class="guide""#));
    assert!(d.join("o/centroid.svg").exists());
}

#[test]
fn flags_override_the_config() {
    let tmp = small_dir();
    let d = tmp.path();
    let common = ["--config", "small.toml", "--out", "o", "--lens-power", "60"];
    let o = deflecto(d, &[&common[..], &["simulate"]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read_dir(d.join("o/dataset")).unwrap().filter(|e| {
            e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".dfcm")
        }).count(),
        6
    );
    assert_eq!(deflecto(d, &[&common[..], &["calibrate"]].concat()).status.code(), Some(0));
    let o = deflecto(
        d,
        &[&common[..], &["--ratios", "0.5", "--trials", "2", "--max-iters", "50", "reconstruct"]].concat(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows: Vec<String> = fs::read_to_string(d.join("o/reconstruct.csv"))
        .unwrap()
        .lines()
        .skip(2)
        .map(str::to_string)
        .collect();
    assert_eq!(rows.len(), 2 * 5);
    assert!(rows.iter().all(|r| r.starts_with("60.0,0.5,")));
    assert!(rows.iter().all(|r| r.split(',').nth(6).unwrap().parse::<usize>().unwrap() <= 50));
}

#[test]
fn effective_config_round_trips() {
    let tmp = small_dir();
    let d = tmp.path();
    let o = deflecto(d, &["--config", "small.toml", "--seed", "99", "--rho", "2.5", "config"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    fs::write(d.join("eff.toml"), &o.stdout).unwrap();
    let again = deflecto(d, &["--config", "eff.toml", "config"]);
    assert_eq!(again.stdout, o.stdout);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seed = 99"));
    assert!(text.contains("rho = 2.5"));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let tmp = small_dir();
    let d = tmp.path();
    assert_eq!(deflecto(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(deflecto(d, &["--trials", "many", "simulate"]).status.code(), Some(1));
    assert_eq!(deflecto(d, &["--config", "missing.toml", "simulate"]).status.code(), Some(1));

    fs::write(d.join("typo.toml"), "sede = 3\n").unwrap();
    let o = deflecto(d, &["--config", "typo.toml", "simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("typo.toml"), "{}", stderr(&o));

    let o = deflecto(d, &["--config", "small.toml", "--ratios", "0.5,1.5", "reconstruct"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("1.5"));
    assert_eq!(deflecto(d, &["--config", "small.toml", "--trials", "0", "centroid"]).status.code(), Some(1));
    assert_eq!(deflecto(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let tmp = small_dir();
    let d = tmp.path();
    let o = deflecto(d, &["--config", "small.toml", "--out", "nowhere", "calibrate"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("manifest.toml"));

    fs::write(d.join("blocker"), "").unwrap();
    let o = deflecto(d, &["--config", "small.toml", "--out", "blocker", "simulate"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn plot_rejects_bad_csv_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("empty.csv"), "").unwrap();
    let o = deflecto(d, &["plot", "empty.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
    assert!(!d.join("empty.svg").exists());

    fs::write(
        d.join("bad.csv"),
        "# deflecto centroid v1\nlens_power,ratio,trial,pixel_id,m_count,error_px\n60,0.1,0,0,410,x\n",
    )
    .unwrap();
    let o = deflecto(d, &["plot", "bad.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(!d.join("bad.svg").exists());
}

#[test]
fn plot_marks_each_ratio_and_draws_the_isnr_guide() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut csv = String::from(
        "# deflecto reconstruct v1 isnr_db=4.34\nlens_power,ratio,trial,pixel_id,m_count,osnr_db,iterations,converged\n",
    );
    for (i, r) in [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5].iter().enumerate() {
        csv += &format!("60,{r},0,0,{},{},100,true\n", 10 + i, i as f64 * 2.0);
    }
    fs::write(d.join("seven.csv"), csv).unwrap();
    let o = deflecto(d, &["plot", "seven.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = fs::read_to_string(d.join("seven.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 7);
    assert!(svg.contains(r#"data-value="4.34""#));
}

#[test]
fn numerical_failure_exits_3() {
    // At 16x16 and 4.34 dB the calibrated epsilon swallows the whole signal,
    // so the reference reconstruction is identically zero.
    let tmp = small_dir();
    let d = tmp.path();
    let base = ["--config", "small.toml", "--out", "o", "--target-isnr", "4.34"];
    assert_eq!(deflecto(d, &[&base[..], &["simulate"]].concat()).status.code(), Some(0));
    assert_eq!(deflecto(d, &[&base[..], &["calibrate"]].concat()).status.code(), Some(0));
    let o = deflecto(d, &[&base[..], &["reconstruct"]].concat());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("zero norm"));
}
