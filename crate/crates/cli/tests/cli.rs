use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use decaf::frame::{co_global, solve_minisum_global};
use decaf::{MinisumKernel, MinisumProblem, SolverSettings, UnitVector3, Vec3};

const SUBCOMMANDS: [&str; 8] =
    ["frame", "fingerprint", "distmat", "fit", "predict", "active-learn", "quadrature", "graphspec"];

fn decaf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decaf")).args(args).env_remove("DECAF_CONFIG").output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn xyz(id: &str, atoms: &[(&str, Vec3)], extra: &str) -> String {
    let mut s = format!("{}\nid={id} {extra}\n", atoms.len());
    for (el, x) in atoms {
        s += &format!("{el} {} {} {}\n", x.x, x.y, x.z);
    }
    s
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_matches_golden_files() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut cases = vec![("decaf".to_string(), vec!["--help"])];
    for sub in SUBCOMMANDS {
        cases.push((sub.to_string(), vec![sub, "--help"]));
    }
    for (name, args) in cases {
        let text = stdout(&decaf(&args));
        let path = dir.join(format!("{name}.txt"));
        if update {
            fs::write(&path, &text).unwrap();
        } else {
            let want = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
            assert_eq!(text, want, "help for {name} changed; rerun with UPDATE_GOLDEN=1");
        }
    }
}

#[test]
fn help_documents_every_flag() {
    let top = stdout(&decaf(&["--help"]));
    for flag in ["--config", "--seed", "--workers", "DECAF_CONFIG", "Exit codes"] {
        assert!(top.contains(flag), "{flag}");
    }
    let al = stdout(&decaf(&["active-learn", "--help"]));
    for flag in ["--oracle", "--target", "--center", "--seeds", "--max-uncertainty", "--max-samples", "--output"] {
        assert!(al.contains(flag), "{flag}");
    }
}

#[test]
fn single_atom_frame_points_at_the_atom() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "a.xyz", &xyz("pair", &[("O", Vec3::zeros()), ("H", Vec3::new(0.0, 1.2, 0.0))], ""));
    let text = stdout(&decaf(&["frame", p(&input), "--center", "atom:0"]));
    let frame: Vec<f64> = text
        .lines()
        .find(|l| l.starts_with("frame 0 "))
        .unwrap()
        .split_whitespace()
        .skip(2)
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(frame.len(), 9);
    assert!((frame[1] - 1.0).abs() < 1e-12);
}

#[test]
fn planar_c4_reports_solver_co_global_minima() {
    let dir = tempfile::tempdir().unwrap();
    let ring: Vec<(&str, Vec3)> = (0..4)
        .map(|k| {
            let t = 0.3 + PI / 2.0 * k as f64;
            ("C", Vec3::new(1.4 * t.cos(), 1.4 * t.sin(), 0.0))
        })
        .collect();
    let input = write(dir.path(), "c4.xyz", &xyz("c4", &ring, ""));
    let text = stdout(&decaf(&["frame", p(&input), "--center", "point:0,0,0"]));
    let dirs: Vec<UnitVector3> = ring.iter().map(|(_, x)| UnitVector3::from_vector(*x).unwrap()).collect();
    let weight = decaf::DensityScaling::Tent { t: 3.0, cutoff: 6.0 }.value(1.4);
    let problem = MinisumProblem::new(dirs, vec![weight; 4], MinisumKernel::SquareAngle).unwrap();
    let minima = solve_minisum_global(&problem, &SolverSettings::default()).unwrap();
    let want = format!("minima {} co-global {} ", minima.len(), co_global(&minima).len());
    assert!(text.contains(&want), "{text}");
    assert_eq!(co_global(&minima).len(), 2);
    let frames = text.lines().filter(|l| l.starts_with("frame ")).count();
    assert_eq!(frames, 16);
}

#[test]
fn corrupt_input_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.xyz", "2\ncomment\nO 0 0 0\nH 0 x 0\n");
    let out = decaf(&["frame", p(&input)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn empty_neighborhood_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "a.xyz", &xyz("a", &[("O", Vec3::zeros())], ""));
    let out = decaf(&["frame", p(&input), "--center", "point:20,0,0"]);
    assert_eq!(out.status.code(), Some(3));
    let out = decaf(&["fingerprint", p(&input), "--center", "point:20,0,0"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_config_exits_2_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.toml", "[grid]\nradial_ordr = 3\n");
    let out =
        Command::new(env!("CARGO_BIN_EXE_decaf")).arg("quadrature").env("DECAF_CONFIG", &config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.radial_ordr"));
}

#[test]
fn quadrature_dump_has_78_rows_and_header() {
    let text = stdout(&decaf(&["quadrature", "--seed", "5"]));
    let header: Vec<&str> = text.lines().filter(|l| l.starts_with('#')).collect();
    assert!(header.contains(&"# radial_order=3"));
    assert!(header.contains(&"# layers=14,26,38"));
    assert!(header.contains(&"# outer_radius=5"));
    assert!(header.iter().any(|l| l.starts_with("# weight=bell-poly")));
    assert!(header.iter().any(|l| l.starts_with("# grid_hash=")));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "x,y,z,weight,layer");
    assert_eq!(rows.len() - 1, 78);
    let radius = |row: &str| -> f64 {
        let v: Vec<f64> = row.split(',').take(3).map(|x| x.parse().unwrap()).collect();
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    };
    assert!((radius(rows[78]) - 5.0).abs() < 1e-12);
}

fn rotated_pair(dir: &Path) -> PathBuf {
    let atoms = [
        ("O", Vec3::new(0.1, -0.2, 0.05)),
        ("H", Vec3::new(1.0, 0.1, 0.0)),
        ("H", Vec3::new(-0.3, 0.8, 0.2)),
        ("C", Vec3::new(0.5, 0.5, 1.5)),
    ];
    let r = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
    let t = Vec3::new(3.0, -1.0, 0.5);
    let moved: Vec<(&str, Vec3)> = atoms.iter().map(|(e, x)| (*e, r * x + t)).collect();
    write(dir, "pair.xyz", &(xyz("a", &atoms, "") + &xyz("b", &moved, "")))
}

#[test]
fn distmat_of_rotated_copy_is_symmetric_and_near_zero() {
    let dir = tempfile::tempdir().unwrap();
    let input = rotated_pair(dir.path());
    let text = stdout(&decaf(&["distmat", p(&input), "--center", "com"]));
    let rows: Vec<Vec<String>> = text.lines().map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows[0], ["center_id", "a#com", "b#com"]);
    let d: f64 = rows[1][2].parse().unwrap();
    let e: f64 = rows[2][1].parse().unwrap();
    assert_eq!(d, e);
    let fp = stdout(&decaf(&["fingerprint", p(&input), "--center", "com"]));
    let values: Vec<f64> = fp.lines().nth(1).unwrap().split(',').skip(10).map(|v| v.parse().unwrap()).collect();
    let scale = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(d <= 1e-6 * scale, "{d} vs {scale}");
}

#[test]
fn output_does_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let input = rotated_pair(dir.path());
    let one = decaf(&["fingerprint", p(&input), "--format", "binary", "--workers", "1"]);
    let four = decaf(&["fingerprint", p(&input), "--format", "binary", "--workers", "4"]);
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(&one.stdout[..8], b"DECAFFP\0");
}

#[test]
fn fit_and_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for k in 0..6 {
        let r = 0.9 + 0.15 * k as f64;
        let atoms = [("O", Vec3::zeros()), ("H", Vec3::new(r, 0.0, 0.0)), ("H", Vec3::new(-0.3, 0.9, 0.0))];
        text += &xyz(&format!("w{k}"), &atoms, &format!("energy={}", (r - 1.0).powi(2)));
    }
    let input = write(dir.path(), "train.xyz", &text);
    let model = dir.path().join("e.bin");
    let summary = stdout(&decaf(&["fit", p(&input), "--target", "energy", "--center", "atom:0", "-o", p(&model)]));
    assert!(summary.starts_with("component,output_scale"));
    let pred = stdout(&decaf(&["predict", p(&model), p(&input), "--center", "atom:0"]));
    let lines: Vec<&str> = pred.lines().collect();
    assert_eq!(lines[0], "center_id,mean,variance");
    for (k, line) in lines[1..].iter().enumerate() {
        let r = 0.9 + 0.15 * k as f64;
        let mean: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((mean - (r - 1.0).powi(2)).abs() < 1e-3, "{line}");
    }
    let missing = decaf(&["fit", p(&input), "--target", "dipole", "-o", p(&model)]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn active_learning_with_lj_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    let rs: Vec<f64> = (0..41).map(|i| 0.9 + 5.1 * i as f64 / 40.0).chain([1.0]).collect();
    for (k, r) in rs.iter().enumerate() {
        text += &xyz(&format!("r{k}"), &[("N", Vec3::zeros()), ("N", Vec3::new(*r, 0.0, 0.0))], "");
    }
    let pool = write(dir.path(), "pool.xyz", &text);
    let model = dir.path().join("lj.bin");
    let out = decaf(&[
        "active-learn",
        p(&pool),
        "--oracle",
        "lj:1,0.98",
        "--target",
        "force:1:x",
        "--center",
        "atom:0",
        "--seeds",
        "41,40",
        "--max-samples",
        "60",
        "-o",
        p(&model),
    ]);
    let trace = stdout(&out);
    let rows: Vec<Vec<&str>> = trace.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(trace.lines().next().unwrap(), "iteration,acquired_id,max_uncertainty");
    let last = rows.last().unwrap();
    assert_eq!(last[1], "");
    assert!(last[2].parse::<f64>().unwrap() < 0.1);
    for row in &rows[..rows.len() - 1] {
        assert!(row[1].starts_with('r'));
    }
    let check = write(dir.path(), "check.xyz", &xyz("q", &[("N", Vec3::zeros()), ("N", Vec3::new(3.0, 0.0, 0.0))], ""));
    let pred = stdout(&decaf(&["predict", p(&model), p(&check), "--center", "atom:0"]));
    let mean: f64 = pred.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let s6 = (0.98f64 / 3.0).powi(6);
    let exact = 24.0 / 3.0 * (2.0 * s6 * s6 - s6);
    assert!((mean - exact).abs() < 0.1);
}

#[test]
fn graphspec_emits_requested_columns() {
    let dir = tempfile::tempdir().unwrap();
    let input = rotated_pair(dir.path());
    let text = stdout(&decaf(&["graphspec", p(&input), "--center", "com", "--count", "3"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "center_id,dropped_nodes,lambda_1,lambda_2,lambda_3");
    let a: Vec<f64> = lines[1].split(',').skip(2).map(|v| v.parse().unwrap()).collect();
    let b: Vec<f64> = lines[2].split(',').skip(2).map(|v| v.parse().unwrap()).collect();
    for (x, y) in a.iter().zip(&b) {
        assert!((0.0..=2.0).contains(x));
        assert!((x - y).abs() < 1e-8);
    }
}
