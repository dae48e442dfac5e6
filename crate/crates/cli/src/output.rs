//! CSV and JSON writers. Floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rbk_core::diagnostics::ScalingRow;
use rbk_core::Trajectory;
use serde::Serialize;

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn row<I: IntoIterator<Item = f64>>(out: &mut String, values: I) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&num(v));
    }
    out.push('\n');
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t");
    for j in 1..=traj.n() {
        let _ = write!(out, ",c_{j}");
    }
    out.push('\n');
    for s in &traj.states {
        row(&mut out, std::iter::once(s.t).chain(s.values().iter().copied()));
    }
    out
}

pub fn moments_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,nu,mass,nu_odd\n");
    for s in &traj.states {
        row(&mut out, [s.t, s.nu(), s.mass(), s.nu_odd()]);
    }
    out
}

pub fn scaling_csv(rows: &[ScalingRow], j_max: usize) -> String {
    let mut out = String::from("t,t_nu,t_nu_odd");
    for j in 1..=j_max {
        let _ = write!(out, ",t_c_{j}");
    }
    out.push('\n');
    for r in rows {
        row(&mut out, [r.t, r.t_nu, r.t_nu_odd].into_iter().chain(r.t_c.iter().copied()));
    }
    out
}

pub fn convergence_csv(sizes: &[usize], distances: &[f64]) -> String {
    let mut out = String::from("N,D\n");
    for (n, d) in sizes.iter().zip(distances) {
        let _ = writeln!(out, "{n},{}", num(*d));
    }
    out
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)
}
