//! Helpers shared by the CLI integration and acceptance suites: running the
//! binary, generating reference data, seeded measurement noise, and an
//! independent normal-equations solver used as the least-squares oracle.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use cthrv::trajectory::Trajectory;

/// The compiled `cthrv` binary.
pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cthrv"))
}

/// Runs the binary with `args`, asserting exit code 0.
pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary should spawn");
    assert!(
        out.status.success(),
        "cthrv {:?} failed with {:?}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Runs the binary with `args`, asserting the expected nonzero exit code.
pub fn run_expect_code(dir: &Path, args: &[&str], code: i32) -> Output {
    let out = bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary should spawn");
    assert_eq!(
        out.status.code(),
        Some(code),
        "cthrv {:?} exit code\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Generates the reference benchmark trajectory CSV into `dir` and returns
/// its path.
pub fn generate_benchmark(dir: &Path) -> PathBuf {
    run_ok(dir, &["generate", "--output", "traj.csv"]);
    dir.join("traj.csv")
}

pub fn read_json(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    serde_json::from_str(&text)
        .unwrap_or_else(|e| panic!("cannot parse {}: {e}", path.display()))
}

/// Loads a trajectory CSV written by the binary (format A).
pub fn load_csv(path: &Path) -> Trajectory {
    let text = std::fs::read_to_string(path).unwrap();
    Trajectory::from_csv(text.as_bytes(), cthrv::TrajectoryFormat::LeadSpeed).unwrap()
}

pub fn write_csv(traj: &Trajectory, path: &Path) {
    let mut buf = Vec::new();
    traj.to_csv(&mut buf).unwrap();
    std::fs::write(path, buf).unwrap();
}

/// Adds seeded Gaussian measurement noise to the speed and gap series.
pub fn add_noise(traj: &Trajectory, std_s: f64, std_v: f64, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    let v: Vec<f64> = traj.v().iter().map(|x| x + std_v * z()).collect();
    let s: Vec<f64> = traj.s().iter().map(|x| (x + std_s * z()).max(1e-3)).collect();
    Trajectory::new(traj.t0(), traj.dt(), v, s, traj.v_l().to_vec()).unwrap()
}

/// Solves the explicit 3x3 normal equations for the free transition entries
/// (a11, a12, b1): Cramer's rule plus two rounds of iterative refinement
/// with error-free residual accumulation, an independent path from the
/// production orthogonal-factorization solver.
pub fn normal_equations_entries(traj: &Trajectory) -> [f64; 3] {
    let mut g = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for k in 0..traj.n() - 1 {
        let row = [traj.v()[k], traj.s()[k], traj.v_l()[k]];
        let y = traj.v()[k + 1];
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += row[i] * row[j];
            }
            rhs[i] += row[i] * y;
        }
    }
    let mut x = solve3(&g, &rhs);
    for _ in 0..2 {
        let r = [
            residual(&g, &rhs, &x, 0),
            residual(&g, &rhs, &x, 1),
            residual(&g, &rhs, &x, 2),
        ];
        let d = solve3(&g, &r);
        for i in 0..3 {
            x[i] += d[i];
        }
    }
    x
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> [f64; 3] {
    let d = det3(a);
    let mut x = [0.0; 3];
    for col in 0..3 {
        let mut m = *a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        x[col] = det3(&m) / d;
    }
    x
}

/// Computes rhs[i] - (G x)[i] with each product split into exact high and
/// low halves (fused multiply-add) and the halves summed with compensation,
/// so the cancellation in the residual does not destroy its leading digits.
fn residual(g: &[[f64; 3]; 3], rhs: &[f64; 3], x: &[f64; 3], i: usize) -> f64 {
    let mut terms = [0.0f64; 7];
    terms[0] = rhs[i];
    for j in 0..3 {
        let p = g[i][j] * x[j];
        let e = g[i][j].mul_add(x[j], -p);
        terms[1 + 2 * j] = -p;
        terms[2 + 2 * j] = -e;
    }
    let mut sum = 0.0;
    let mut comp = 0.0;
    for t in terms {
        let next = sum + t;
        comp += if sum.abs() >= t.abs() {
            (sum - next) + t
        } else {
            (t - next) + sum
        };
        sum = next;
    }
    sum + comp
}
