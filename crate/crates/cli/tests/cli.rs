//! End-to-end runs of the `covbloch` binary.

use std::path::{Path, PathBuf};
use std::process::Command;
use tempfile::TempDir;

struct Outcome {
    code: i32,
    stderr: String,
    out: PathBuf,
    report: Option<toml::Table>,
}

impl Outcome {
    fn checks(&self, name: &str) -> Vec<&toml::Table> {
        self.report
            .as_ref()
            .expect("report")
            .get("check")
            .and_then(|c| c.as_array())
            .map(|a| {
                a.iter()
                    .filter_map(|c| c.as_table())
                    .filter(|c| c["name"].as_str() == Some(name))
                    .collect()
            })
            .unwrap_or_default()
    }

    fn defect(&self, name: &str) -> f64 {
        let cs = self.checks(name);
        assert!(!cs.is_empty(), "no {name} record; stderr: {}", self.stderr);
        cs.iter().map(|c| c["defect"].as_float().unwrap()).fold(0.0, f64::max)
    }

    fn csv(&self, name: &str) -> Vec<csv::StringRecord> {
        csv::Reader::from_path(self.out.join(name))
            .unwrap()
            .records()
            .map(|r| r.unwrap())
            .collect()
    }
}

fn run_in(dir: &Path, command: &str, config: &str, extra: &[&str]) -> Outcome {
    let cfg = dir.join("config.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{command}"));
    let o = Command::new(env!("CARGO_BIN_EXE_covbloch"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    let report = std::fs::read_to_string(out.join("report.txt"))
        .ok()
        .map(|s| s.parse::<toml::Table>().unwrap());
    Outcome {
        code: o.status.code().unwrap(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        out,
        report,
    }
}

fn run(command: &str, config: &str) -> (TempDir, Outcome) {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), command, config, &[]);
    (dir, o)
}

const Z6: &str = r#"
[group]
family = "cyclic"
order = 6
[grid]
nodes_per_cell = 4
[potential]
kind = "cosine_well"
amplitude = 0.5
"#;

#[test]
fn cyclic_six_harmonic_suite_passes_with_unit_mass() {
    let (_d, o) = run("check-harmonic", Z6);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let mass = o.checks("total_mass")[0]["value"].as_float().unwrap();
    assert!((mass - 1.0).abs() < 1e-12, "mass {mass}");
    assert!(o.defect("parseval") < 1e-12);
    assert!(o.defect("irrep_homomorphism") < 1e-13);
    assert_eq!(o.csv("manifest.csv").len(), 6);
}

#[test]
fn cyclic_six_bloch_and_schulman_pass() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{Z6}[task]\ntau = [0.05, 0.2, 1.0]\nt = [0.1, 1.0]\n");
    let b = run_in(dir.path(), "bloch", &cfg, &[]);
    assert_eq!(b.code, 0, "{}", b.stderr);
    assert!(b.defect("evolution_decomposition") < 1e-10);
    assert!(b.defect("propagator_unitarity") < 1e-11);
    assert!(b.defect("spectral_union") < 1e-10);
    let s = run_in(dir.path(), "schulman", &cfg, &[]);
    assert_eq!(s.code, 0, "{}", s.stderr);
    // three heat times and two real times
    assert_eq!(s.checks("image_sum").len(), 5);
    assert!(s.defect("image_sum") < 1e-10);
    assert!(s.defect("reconstruction") < 1e-10);
    assert!(s.defect("smeared_g_roundtrip") < 1e-10);
    let kernels = s.csv("kernels.csv");
    assert_eq!(kernels.len(), 5 * 4 * 4);
    assert!(s.out.join("tails.csv").exists());
}

#[test]
fn klein_plancherel_integral_at_resolution_32() {
    let (_d, o) = run(
        "check-harmonic",
        r#"
[group]
family = "klein_bottle"
[grid]
nodes_per_cell = 2
window_radius = 2
dual_resolution = 32
"#,
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    let v = o.checks("plancherel_integral")[0]["value"].as_float().unwrap();
    assert!((v - 1.0).abs() < 1e-8, "integral {v}");
}

#[test]
fn support_beyond_exactness_band_raises_warning() {
    let (_d, o) = run(
        "check-harmonic",
        r#"
[group]
family = "free_abelian"
rank = 1
[grid]
nodes_per_cell = 2
window_radius = 4
dual_resolution = 4
[task]
support_radius = 3
"#,
    );
    let report = o.report.as_ref().expect("report");
    assert!(report["warnings"].as_integer().unwrap() > 0);
    let flagged = report["check"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| c["flags"].as_array().unwrap().iter().any(|f| f.as_str() == Some("exactness-band")));
    assert!(flagged);
}

fn band_table(o: &Outcome) -> Vec<(usize, usize, f64)> {
    o.csv("bands.csv")
        .iter()
        .map(|r| {
            let n = r.len();
            (r[0].parse().unwrap(), r[n - 2].parse().unwrap(), r[n - 1].parse().unwrap())
        })
        .collect()
}

#[test]
fn free_line_bands_follow_dispersion() {
    let (_d, o) = run(
        "bloch",
        r#"
[group]
family = "free_abelian"
rank = 1
[grid]
nodes_per_cell = 32
window_radius = 1
dual_resolution = 64
[task]
support_radius = 0
"#,
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.defect("free_dispersion") < 1e-10);
    assert!(o.defect("hamiltonian_decomposition") < 1e-10);
    let rows = o.csv("bands.csv");
    assert_eq!(rows.len(), 64 * 32);
    // independent closed form 4m² sin²((2πj + θ)/(2m)) at the first node
    let theta: f64 = rows[0][2].parse().unwrap();
    let mut expect: Vec<f64> = (0..32)
        .map(|j| {
            let s = ((2.0 * std::f64::consts::PI * j as f64 + theta) / 64.0).sin();
            4.0 * 32.0f64.powi(2) * s * s
        })
        .collect();
    expect.sort_by(f64::total_cmp);
    for (k, r) in rows.iter().filter(|r| &r[0] == "0").enumerate() {
        let l: f64 = r[4].parse().unwrap();
        assert_eq!(r[3].parse::<usize>().unwrap(), k);
        assert!((l - expect[k]).abs() < 1e-9, "band {k}: {l} vs {}", expect[k]);
    }
}

#[test]
fn two_fold_cover_spectral_union() {
    let (_d, o) = run(
        "bloch",
        r#"
[group]
family = "cyclic"
order = 2
[grid]
nodes_per_cell = 1
"#,
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    let spectra = o.csv("spectra.csv");
    let inv: Vec<f64> = spectra.iter().map(|r| r[1].parse().unwrap()).collect();
    let union: Vec<f64> = spectra.iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(inv.len(), 2);
    for (got, want) in inv.iter().zip([0.0, 2.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    for (got, want) in union.iter().zip([0.0, 2.0]) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn constant_potential_shifts_bands() {
    let base = r#"
[group]
family = "free_abelian"
rank = 1
[grid]
nodes_per_cell = 6
window_radius = 1
dual_resolution = 8
[task]
support_radius = 0
"#;
    let (_a, zero) = run("bloch", base);
    let (_b, shifted) = run("bloch", &format!("{base}[potential]\nkind = \"constant\"\nvalue = 0.7\n"));
    assert_eq!(zero.code, 0, "{}", zero.stderr);
    assert_eq!(shifted.code, 0, "{}", shifted.stderr);
    assert!(shifted.defect("free_dispersion") < 1e-10);
    for (a, b) in band_table(&zero).iter().zip(band_table(&shifted)) {
        assert!((b.2 - a.2 - 0.7).abs() < 1e-12);
    }
}

#[test]
fn circle_theta_identity() {
    let (_d, o) = run(
        "schulman",
        r#"
[group]
family = "free_abelian"
rank = 1
[grid]
nodes_per_cell = 8
window_radius = 5
dual_resolution = 12
[task]
tau = [0.05]
theta_count = 8
"#,
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.defect("theta_identity") <= 1e-10);
    assert!(o.defect("image_sum") <= 1e-8);
    assert_eq!(o.csv("theta.csv").len(), 8 * 8 * 8);
}

#[test]
fn torus_theta_identity() {
    let (_d, o) = run(
        "schulman",
        r#"
[group]
family = "free_abelian"
rank = 2
[grid]
nodes_per_cell = 3
window_radius = 5
dual_resolution = 12
[task]
tau = [0.05]
samples = 1
"#,
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.defect("theta_identity") <= 1e-10);
}

#[test]
fn klein_image_sums_match_twisted_heat_kernels() {
    let config = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/klein_schulman.toml")).unwrap();
    let (_d, o) = run("schulman", &config);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.defect("image_sum") <= 1e-8);
    assert!(o.defect("reconstruction") <= 1e-6);
}

#[test]
fn trivial_group_image_sum_is_the_kernel() {
    let (_d, o) = run(
        "schulman",
        r#"
[group]
family = "cyclic"
order = 1
[grid]
nodes_per_cell = 5
"#,
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.defect("image_sum") < 1e-14);
    assert!(o.defect("reconstruction") < 1e-14);
}

#[test]
fn real_time_on_infinite_group_needs_eps() {
    let (_d, o) = run(
        "schulman",
        r#"
[group]
family = "free_abelian"
rank = 1
[grid]
nodes_per_cell = 4
window_radius = 2
[task]
t = [0.5]
"#,
    );
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("eps"), "{}", o.stderr);
    assert!(o.report.is_none());
}

#[test]
fn complex_time_on_infinite_group_runs() {
    let (_d, o) = run(
        "schulman",
        r#"
[group]
family = "free_abelian"
rank = 1
[grid]
nodes_per_cell = 8
window_radius = 6
dual_resolution = 16
[task]
tau = [0.2]
t = [0.1]
eps = 0.1
samples = 1
"#,
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    let ctx: Vec<&str> = o.checks("image_sum").iter().map(|c| c["context"].as_str().unwrap()).collect();
    assert!(ctx.iter().any(|c| c.starts_with("t=0.1,eps=0.1")), "{ctx:?}");
}

#[test]
fn unknown_keys_are_rejected() {
    let (_d, o) = run("check-harmonic", &format!("{Z6}[task]\ntaus = [0.1]\n"));
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("taus"), "{}", o.stderr);
    let (_d, o) = run("check-harmonic", &format!("{Z6}[task.tolerances]\nparsevall = 1e-3\n"));
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("parsevall"), "{}", o.stderr);
}

#[test]
fn vertex_cap_is_enforced() {
    let (_d, o) = run(
        "check-harmonic",
        r#"
[group]
family = "free_abelian"
rank = 2
[grid]
nodes_per_cell = 50
window_radius = 5
"#,
    );
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("cap"), "{}", o.stderr);
}

#[test]
fn invalid_parameters_name_the_precondition() {
    let (_d, o) = run("check-harmonic", &format!("{Z6}[task]\ntau = [-1.0]\n"));
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("task.tau"), "{}", o.stderr);
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), "check-harmonic", Z6, &["--tolerance-scale", "0"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("tolerance-scale"), "{}", o.stderr);
}

#[test]
fn failing_check_exits_one() {
    let (_d, o) = run("check-harmonic", &format!("{Z6}[task.tolerances]\nparseval = 1e-300\n"));
    assert_eq!(o.code, 1, "{}", o.stderr);
    let r = o.report.as_ref().unwrap();
    assert_eq!(r["status"].as_str(), Some("fail"));
    assert!(!o.checks("parseval")[0]["pass"].as_bool().unwrap());
}

#[test]
fn tolerance_scale_multiplies_tolerances() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), "check-harmonic", Z6, &["--tolerance-scale", "10"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(o.checks("parseval")[0]["tolerance"].as_float(), Some(1e-11));
}

#[test]
fn identical_configs_give_identical_reports() {
    let dir = TempDir::new().unwrap();
    let a = run_in(dir.path(), "schulman", Z6, &[]);
    let first = std::fs::read(a.out.join("report.txt")).unwrap();
    let kernels = std::fs::read(a.out.join("kernels.csv")).unwrap();
    std::fs::remove_dir_all(&a.out).unwrap();
    let b = run_in(dir.path(), "schulman", Z6, &["--threads", "2"]);
    assert_eq!(first, std::fs::read(b.out.join("report.txt")).unwrap());
    assert_eq!(kernels, std::fs::read(b.out.join("kernels.csv")).unwrap());
    assert!(b.out.join("timing.txt").exists());
}
