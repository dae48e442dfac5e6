//! Truncated concentration vectors and initial data.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("truncation too small: index {index} exceeds n = {n}")]
    TruncationTooSmall { index: usize, n: usize },
    #[error("invalid initial condition spec '{0}': expected mono:p,lambda, geom:A0,alpha or explicit:path")]
    BadSpec(String),
    #[error("invalid initial condition: {0}")]
    BadValue(String),
    #[error("cannot read initial condition file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed initial condition file {path}, line {line}: {message}")]
    BadFile {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

/// Concentrations `c_1..c_N` at time `t`.
///
/// Indices are 1-based in every accessor; `values()` exposes the raw slice
/// where position `i` holds `c_{i+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub t: f64,
    c: Vec<f64>,
}

impl ClusterState {
    pub fn new(t: f64, c: Vec<f64>) -> Self {
        assert!(!c.is_empty(), "truncation size must be at least 1");
        ClusterState { t, c }
    }

    pub fn zeros(n: usize) -> Self {
        ClusterState::new(0.0, vec![0.0; n])
    }

    /// Truncation size `N`.
    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// `c_j`, 1-based.
    pub fn get(&self, j: usize) -> f64 {
        self.c[j - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.c
    }

    pub fn into_values(self) -> Vec<f64> {
        self.c
    }

    /// `sum_j j^p c_j` for `p` in `{0, 1}`.
    ///
    /// # Panics
    /// For any other `p`.
    pub fn moment(&self, p: u32) -> f64 {
        match p {
            0 => self.c.iter().sum(),
            1 => self
                .c
                .iter()
                .enumerate()
                .map(|(i, c)| (i + 1) as f64 * c)
                .sum(),
            _ => panic!("only moments of order 0 and 1 are supported, got {p}"),
        }
    }

    /// Total cluster number `nu = sum_j c_j`.
    pub fn nu(&self) -> f64 {
        self.moment(0)
    }

    /// Mass `sum_j j c_j`.
    pub fn mass(&self) -> f64 {
        self.moment(1)
    }

    /// Number of odd-size clusters `c_1 + c_3 + ...`.
    pub fn nu_odd(&self) -> f64 {
        self.c.iter().step_by(2).sum()
    }

    /// `{ j : c_j > threshold }`.
    pub fn support(&self, threshold: f64) -> BTreeSet<usize> {
        self.c
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > threshold)
            .map(|(i, _)| i + 1)
            .collect()
    }

    pub fn is_valid(&self) -> bool {
        self.c.iter().all(|c| c.is_finite() && *c >= 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `c_j(0) = lambda delta_{j,p}`
    Monodisperse { p: usize, lambda: f64 },
    /// `c_j(0) = a0 alpha^j`, truncated at `N`.
    Geometric { a0: f64, alpha: f64 },
    /// Listed `(j, c_j(0))` pairs; all other entries zero.
    Explicit { entries: Vec<(usize, f64)> },
}

impl InitialCondition {
    pub fn monodisperse(p: usize, lambda: f64) -> Result<Self, StateError> {
        if p == 0 {
            return Err(StateError::BadValue("cluster size p must be >= 1".into()));
        }
        check_value("lambda", lambda)?;
        Ok(InitialCondition::Monodisperse { p, lambda })
    }

    pub fn geometric(a0: f64, alpha: f64) -> Result<Self, StateError> {
        check_value("A0", a0)?;
        if !(0.0..1.0).contains(&alpha) {
            return Err(StateError::BadValue(format!(
                "geometric ratio alpha must lie in [0, 1), got {alpha}"
            )));
        }
        Ok(InitialCondition::Geometric { a0, alpha })
    }

    pub fn explicit(entries: Vec<(usize, f64)>) -> Result<Self, StateError> {
        let mut seen = BTreeSet::new();
        for &(j, v) in &entries {
            if j == 0 {
                return Err(StateError::BadValue("cluster index must be >= 1".into()));
            }
            if !seen.insert(j) {
                return Err(StateError::BadValue(format!("duplicate cluster index {j}")));
            }
            check_value("concentration", v)?;
        }
        Ok(InitialCondition::Explicit { entries })
    }

    /// Reads rows `j,value` from a CSV file. A non-numeric first row is taken as a header.
    pub fn from_csv(path: &Path) -> Result<Self, StateError> {
        let file = std::fs::File::open(path).map_err(|source| StateError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut entries = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let bad = |line: u64, message: String| StateError::BadFile {
                path: path.to_path_buf(),
                line,
                message,
            };
            let record = record.map_err(|e| bad(row as u64 + 1, e.to_string()))?;
            let line = record.position().map_or(row as u64 + 1, |p| p.line());
            if record.len() == 1 && record[0].is_empty() {
                continue;
            }
            if record.len() != 2 {
                return Err(bad(line, format!("expected 2 fields, found {}", record.len())));
            }
            let j = record[0].parse::<usize>();
            let v = record[1].parse::<f64>();
            match (j, v) {
                (Ok(j), Ok(v)) => entries.push((j, v)),
                _ if row == 0 => continue,
                _ => return Err(bad(line, format!("cannot parse '{},{}'", &record[0], &record[1]))),
            }
        }
        InitialCondition::explicit(entries)
    }

    /// Parses `mono:p,lambda`, `geom:A0,alpha` or `explicit:path`.
    pub fn from_spec(spec: &str) -> Result<Self, StateError> {
        let bad = || StateError::BadSpec(spec.to_string());
        let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
        let pair = || rest.split_once(',').ok_or_else(bad);
        match kind.trim() {
            "mono" => {
                let (p, lambda) = pair()?;
                InitialCondition::monodisperse(
                    p.trim().parse().map_err(|_| bad())?,
                    lambda.trim().parse().map_err(|_| bad())?,
                )
            }
            "geom" => {
                let (a0, alpha) = pair()?;
                InitialCondition::geometric(
                    a0.trim().parse().map_err(|_| bad())?,
                    alpha.trim().parse().map_err(|_| bad())?,
                )
            }
            "explicit" => InitialCondition::from_csv(Path::new(rest.trim())),
            _ => Err(bad()),
        }
    }

    /// Largest index the data needs, if any.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            InitialCondition::Monodisperse { p, .. } => Some(*p),
            InitialCondition::Geometric { .. } => None,
            InitialCondition::Explicit { entries } => entries.iter().map(|e| e.0).max(),
        }
    }

    /// Materializes the data as a state of size `n` at `t = 0`.
    pub fn realize(&self, n: usize) -> Result<ClusterState, StateError> {
        if n == 0 {
            return Err(StateError::BadValue("truncation size n must be >= 1".into()));
        }
        if let Some(index) = self.max_index().filter(|&i| i > n) {
            return Err(StateError::TruncationTooSmall { index, n });
        }
        let mut c = vec![0.0; n];
        match self {
            InitialCondition::Monodisperse { p, lambda } => c[p - 1] = *lambda,
            InitialCondition::Geometric { a0, alpha } => {
                let mut a = *a0;
                for slot in &mut c {
                    a *= alpha;
                    *slot = a;
                }
            }
            InitialCondition::Explicit { entries } => {
                for &(j, v) in entries {
                    c[j - 1] = v;
                }
            }
        }
        Ok(ClusterState::new(0.0, c))
    }

    /// Mass `sum_{j>n} j c_j(0)` dropped by truncating at `n`. Zero unless geometric.
    pub fn truncated_mass(&self, n: usize) -> f64 {
        match self {
            InitialCondition::Geometric { a0, alpha } if *alpha > 0.0 => {
                // sum_{j>n} j a^j = a^{n+1} ((n+1) - n a) / (1-a)^2
                let a = *alpha;
                let nf = n as f64;
                a0 * a.powf(nf + 1.0) * ((nf + 1.0) - nf * a) / ((1.0 - a) * (1.0 - a))
            }
            _ => 0.0,
        }
    }

    /// Cluster number `sum_{j>n} c_j(0)` dropped by truncating at `n`.
    pub fn truncated_number(&self, n: usize) -> f64 {
        match self {
            InitialCondition::Geometric { a0, alpha } if *alpha > 0.0 => {
                a0 * alpha.powf(n as f64 + 1.0) / (1.0 - alpha)
            }
            _ => 0.0,
        }
    }
}

fn check_value(name: &str, v: f64) -> Result<(), StateError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(StateError::BadValue(format!(
            "{name} must be finite and nonnegative, got {v}"
        )))
    }
}

impl FromStr for InitialCondition {
    type Err = StateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InitialCondition::from_spec(s)
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Monodisperse { p, lambda } => write!(f, "mono:{p},{lambda}"),
            InitialCondition::Geometric { a0, alpha } => write!(f, "geom:{a0},{alpha}"),
            InitialCondition::Explicit { entries } => {
                write!(f, "explicit[")?;
                for (i, (j, v)) in entries.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{j}={v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn state(c: &[f64]) -> ClusterState {
        ClusterState::new(0.0, c.to_vec())
    }

    #[test]
    fn moments() {
        assert_eq!(state(&[1.0, 2.0]).moment(1), 5.0);
        assert_eq!(state(&[1.0, 2.0]).moment(0), 3.0);
        assert_eq!(ClusterState::zeros(7).moment(0), 0.0);
        assert_eq!(ClusterState::zeros(7).moment(1), 0.0);
    }

    #[test]
    fn odd_number() {
        assert_eq!(state(&[1.0, 2.0, 3.0]).nu_odd(), 4.0);
        assert_eq!(state(&[0.0, 5.0]).nu_odd(), 0.0);
        assert_eq!(state(&[0.5, 0.0, 0.25]).nu_odd(), 0.75);
    }

    #[test]
    fn support_sets() {
        assert_eq!(
            state(&[0.0, 3.0, 0.0, 1.0]).support(0.0),
            BTreeSet::from([2, 4])
        );
        assert_eq!(state(&[1e-20, 1.0]).support(1e-12), BTreeSet::from([2]));
        assert!(ClusterState::zeros(5).support(0.0).is_empty());
    }

    #[test]
    fn realize_forms() {
        let mono = InitialCondition::monodisperse(2, 3.0).unwrap().realize(4).unwrap();
        assert_eq!(mono.values(), &[0.0, 3.0, 0.0, 0.0]);
        let geom = InitialCondition::geometric(1.0, 0.5).unwrap().realize(3).unwrap();
        assert_eq!(geom.values(), &[0.5, 0.25, 0.125]);
        assert!(matches!(
            InitialCondition::explicit(vec![(5, 1.0)]).unwrap().realize(3),
            Err(StateError::TruncationTooSmall { index: 5, n: 3 })
        ));
        assert!(matches!(
            InitialCondition::monodisperse(9, 1.0).unwrap().realize(8),
            Err(StateError::TruncationTooSmall { index: 9, n: 8 })
        ));
    }

    #[test]
    fn geometric_support_is_full() {
        let s = InitialCondition::geometric(2.0, 0.3).unwrap().realize(12).unwrap();
        assert_eq!(s.support(0.0), (1..=12).collect());
    }

    #[test]
    fn truncated_tail_matches_direct_sum() {
        let ic = InitialCondition::geometric(1.5, 0.9).unwrap();
        for n in [1, 10, 32, 64] {
            let direct_mass: f64 = (n + 1..5000).map(|j| 1.5 * j as f64 * 0.9f64.powi(j as i32)).sum();
            let direct_num: f64 = (n + 1..5000).map(|j| 1.5 * 0.9f64.powi(j as i32)).sum();
            assert!((ic.truncated_mass(n) - direct_mass).abs() <= 1e-10 * direct_mass);
            assert!((ic.truncated_number(n) - direct_num).abs() <= 1e-10 * direct_num);
        }
        assert_eq!(InitialCondition::monodisperse(3, 1.0).unwrap().truncated_mass(3), 0.0);
    }

    #[test]
    fn spec_strings() {
        assert_eq!(
            "mono:2,3".parse::<InitialCondition>().unwrap(),
            InitialCondition::Monodisperse { p: 2, lambda: 3.0 }
        );
        assert_eq!(
            "geom:1,0.5".parse::<InitialCondition>().unwrap(),
            InitialCondition::Geometric { a0: 1.0, alpha: 0.5 }
        );
        assert!(matches!("geom:1,1".parse::<InitialCondition>(), Err(StateError::BadValue(_))));
        assert!(matches!("mono:0,1".parse::<InitialCondition>(), Err(StateError::BadValue(_))));
        assert!(matches!("delta:1".parse::<InitialCondition>(), Err(StateError::BadSpec(_))));
        assert!(matches!(
            "explicit:/definitely/missing.csv".parse::<InitialCondition>(),
            Err(StateError::Io { .. })
        ));
    }

    #[test]
    fn explicit_csv() {
        let mut f = tempfile_in_target("explicit_ok.csv");
        writeln!(f.1, "j,value\n6, 0.5\n10,0.25").unwrap();
        let ic = InitialCondition::from_csv(&f.0).unwrap();
        assert_eq!(
            ic,
            InitialCondition::Explicit {
                entries: vec![(6, 0.5), (10, 0.25)]
            }
        );

        let mut g = tempfile_in_target("explicit_bad.csv");
        writeln!(g.1, "1,0.5\n2,abc").unwrap();
        assert!(matches!(
            InitialCondition::from_csv(&g.0),
            Err(StateError::BadFile { line: 2, .. })
        ));

        let mut h = tempfile_in_target("explicit_neg.csv");
        writeln!(h.1, "1,-0.5").unwrap();
        assert!(matches!(InitialCondition::from_csv(&h.0), Err(StateError::BadValue(_))));
    }

    fn tempfile_in_target(name: &str) -> (PathBuf, std::fs::File) {
        let dir = std::env::temp_dir().join(format!("rbk-state-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let file = std::fs::File::create(&path).unwrap();
        (path, file)
    }
}
