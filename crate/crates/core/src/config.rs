//! Run configuration: a flat `key = value` text format with `#` comments,
//! plus sidecar matrix files of whitespace-separated `re im` entry pairs in
//! row-major order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::control::{BilinearSystem, FeedbackProtocol};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, DensityMatrix};
use crate::twoqubit;

/// Where the controlled system comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum SystemSource {
    /// The built-in two-qubit entanglement-preparation example.
    TwoQubit,
    /// Operators loaded from sidecar files.
    Custom {
        drift: PathBuf,
        controls: Vec<PathBuf>,
        protocol_m: Vec<PathBuf>,
        protocol_c: Vec<f64>,
        rho0: PathBuf,
        sigma0: PathBuf,
    },
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub system: SystemSource,
    /// Control horizon T.
    pub horizon: f64,
    /// Feedback gain K (built-in system only).
    pub gain: f64,
    /// Grid counts N for the sweep; each must divide oversample * max(N).
    pub grids: Vec<usize>,
    /// Method orders, a subset of 1..=5.
    pub orders: Vec<usize>,
    /// Reference grid multiplier: n_ref = oversample * max(grids).
    pub oversample: usize,
    /// Target accuracy of the reference trajectory.
    pub tol_ref: f64,
    /// Absolute threshold on the finest-grid |F| (pinned by the recorded
    /// baseline run of the default example).
    pub epsilon_pass: f64,
    /// Required coarsest-to-finest decrease factor of |F|.
    pub decrease_factor: f64,
    /// Allowed upward jitter between consecutive |F| values.
    pub jitter_frac: f64,
    /// Allowed pairwise relative disagreement of high-order |F| values.
    pub overlap_frac: f64,
    /// Grids with N >= this enter the overlap comparison.
    pub overlap_min_n: usize,
    /// Grids with N >= this enter the rate slope fit.
    pub slope_min_n: usize,
    /// Allowed relative deviation of (N/T) F from the limit integral.
    pub limit_dev_frac: f64,
    /// Horizon for the convergence-evidence trace (pinned so the final
    /// Lyapunov value reaches `v_final`).
    pub t_long: f64,
    /// Lyapunov threshold the trace must reach by t_long.
    pub v_final: f64,
    /// Integration steps of the convergence-evidence trace.
    pub evidence_steps: usize,
    /// Rows written to trace.csv (must divide evidence_steps).
    pub trace_points: usize,
    /// Worker threads for the sweep; 0 uses all cores.
    pub workers: usize,
    /// Seed for randomized identity spot-checks; never affects the pipeline.
    pub seed: u64,
    /// Output directory for CSV and report files.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemSource::TwoQubit,
            horizon: 1.0,
            gain: 1.0,
            grids: vec![64, 128, 256, 512, 1024, 2048, 4096],
            orders: vec![1, 2, 3, 4, 5],
            oversample: 64,
            tol_ref: crate::tol::TOL_REF,
            epsilon_pass: 1e-3,
            decrease_factor: 16.0,
            jitter_frac: 0.05,
            overlap_frac: 0.05,
            overlap_min_n: 512,
            slope_min_n: 256,
            limit_dev_frac: 0.10,
            t_long: 0.3,
            v_final: 0.01,
            evidence_steps: 32768,
            trace_points: 512,
            workers: 0,
            seed: 0,
            out_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", line_no + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate key '{key}'")));
            }
        }

        let mut custom_drift: Option<PathBuf> = None;
        let mut custom_controls: BTreeMap<usize, PathBuf> = BTreeMap::new();
        let mut custom_m: BTreeMap<usize, PathBuf> = BTreeMap::new();
        let mut custom_c: BTreeMap<usize, f64> = BTreeMap::new();
        let mut custom_rho0: Option<PathBuf> = None;
        let mut custom_sigma0: Option<PathBuf> = None;
        let mut system_kind = "twoqubit".to_string();

        for (key, value) in &entries {
            match key.as_str() {
                "system" => system_kind = value.clone(),
                "horizon" => cfg.horizon = parse_num(key, value)?,
                "gain" => cfg.gain = parse_num(key, value)?,
                "grids" => cfg.grids = parse_list(key, value)?,
                "orders" => cfg.orders = parse_list(key, value)?,
                "oversample" => cfg.oversample = parse_num(key, value)?,
                "tol_ref" => cfg.tol_ref = parse_num(key, value)?,
                "epsilon_pass" => cfg.epsilon_pass = parse_num(key, value)?,
                "decrease_factor" => cfg.decrease_factor = parse_num(key, value)?,
                "jitter_frac" => cfg.jitter_frac = parse_num(key, value)?,
                "overlap_frac" => cfg.overlap_frac = parse_num(key, value)?,
                "overlap_min_n" => cfg.overlap_min_n = parse_num(key, value)?,
                "slope_min_n" => cfg.slope_min_n = parse_num(key, value)?,
                "limit_dev_frac" => cfg.limit_dev_frac = parse_num(key, value)?,
                "t_long" => cfg.t_long = parse_num(key, value)?,
                "v_final" => cfg.v_final = parse_num(key, value)?,
                "evidence_steps" => cfg.evidence_steps = parse_num(key, value)?,
                "trace_points" => cfg.trace_points = parse_num(key, value)?,
                "workers" => cfg.workers = parse_num(key, value)?,
                "seed" => cfg.seed = parse_num(key, value)?,
                "out_dir" => cfg.out_dir = base.join(value),
                "drift" => custom_drift = Some(base.join(value)),
                "rho0" => custom_rho0 = Some(base.join(value)),
                "sigma0" => custom_sigma0 = Some(base.join(value)),
                other => {
                    if let Some(idx) = other.strip_prefix("control_") {
                        let i: usize = idx
                            .parse()
                            .map_err(|_| Error::Config(format!("bad key '{other}'")))?;
                        custom_controls.insert(i, base.join(value));
                    } else if let Some(idx) = other.strip_prefix("protocol_m_") {
                        let i: usize = idx
                            .parse()
                            .map_err(|_| Error::Config(format!("bad key '{other}'")))?;
                        custom_m.insert(i, base.join(value));
                    } else if let Some(idx) = other.strip_prefix("protocol_c_") {
                        let i: usize = idx
                            .parse()
                            .map_err(|_| Error::Config(format!("bad key '{other}'")))?;
                        custom_c.insert(i, parse_num(other, value)?);
                    } else {
                        return Err(Error::Config(format!("unknown key '{other}'")));
                    }
                }
            }
        }

        cfg.system = match system_kind.as_str() {
            "twoqubit" => SystemSource::TwoQubit,
            "custom" => {
                let drift = custom_drift
                    .ok_or_else(|| Error::Config("custom system needs 'drift'".into()))?;
                let rho0 = custom_rho0
                    .ok_or_else(|| Error::Config("custom system needs 'rho0'".into()))?;
                let sigma0 = custom_sigma0
                    .ok_or_else(|| Error::Config("custom system needs 'sigma0'".into()))?;
                let controls = collect_indexed("control", custom_controls)?;
                let protocol_m = collect_indexed("protocol_m", custom_m)?;
                let protocol_c: Vec<f64> = {
                    let mut out = Vec::new();
                    for i in 1..=protocol_m.len() {
                        out.push(*custom_c.get(&i).unwrap_or(&0.0));
                    }
                    out
                };
                if controls.len() != protocol_m.len() {
                    return Err(Error::Config(format!(
                        "{} controls but {} protocol matrices",
                        controls.len(),
                        protocol_m.len()
                    )));
                }
                SystemSource::Custom {
                    drift,
                    controls,
                    protocol_m,
                    protocol_c,
                    rho0,
                    sigma0,
                }
            }
            other => return Err(Error::Config(format!("unknown system '{other}'"))),
        };

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon <= 0.0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.gain <= 0.0 {
            return Err(Error::Config("gain must be positive".into()));
        }
        if self.orders.is_empty() || self.orders.iter().any(|&o| !(1..=5).contains(&o)) {
            return Err(Error::Config("orders must be a nonempty subset of 1..=5".into()));
        }
        if self.grids.is_empty() || self.grids.contains(&0) {
            return Err(Error::Config("grids must be nonempty and positive".into()));
        }
        if self.oversample == 0 {
            return Err(Error::Config("oversample must be >= 1".into()));
        }
        let n_ref = self.n_ref();
        for &n in &self.grids {
            if !n_ref.is_multiple_of(n) {
                return Err(Error::Config(format!(
                    "grid {n} does not divide oversample * max(grids) = {n_ref}"
                )));
            }
        }
        if self.tol_ref <= 0.0 {
            return Err(Error::Config("tol_ref must be positive".into()));
        }
        if self.trace_points == 0 || !self.evidence_steps.is_multiple_of(self.trace_points) {
            return Err(Error::Config(
                "trace_points must divide evidence_steps".into(),
            ));
        }
        if self.t_long <= 0.0 {
            return Err(Error::Config("t_long must be positive".into()));
        }
        Ok(())
    }

    /// Reference grid count: oversample * max(grids).
    pub fn n_ref(&self) -> usize {
        self.oversample * self.grids.iter().copied().max().unwrap_or(1)
    }

    /// Sorted, deduplicated grids.
    pub fn sorted_grids(&self) -> Vec<usize> {
        let mut g = self.grids.clone();
        g.sort_unstable();
        g.dedup();
        g
    }

    pub fn sorted_orders(&self) -> Vec<usize> {
        let mut o = self.orders.clone();
        o.sort_unstable();
        o.dedup();
        o
    }

    /// Instantiate the system and its two initial states.
    pub fn build_system(&self) -> Result<(BilinearSystem, DensityMatrix, DensityMatrix)> {
        match &self.system {
            SystemSource::TwoQubit => {
                let setup = twoqubit::setup_with(self.gain, self.horizon);
                Ok((
                    setup.system().clone(),
                    setup.rho0().clone(),
                    setup.sigma0().clone(),
                ))
            }
            SystemSource::Custom {
                drift,
                controls,
                protocol_m,
                protocol_c,
                rho0,
                sigma0,
            } => {
                let h0 = load_matrix(drift)?;
                let hs = controls.iter().map(|p| load_matrix(p)).collect::<Result<Vec<_>>>()?;
                let protocols = protocol_m
                    .iter()
                    .zip(protocol_c)
                    .map(|(p, &c)| FeedbackProtocol::affine(load_matrix(p)?, c))
                    .collect::<Result<Vec<_>>>()?;
                let sys = BilinearSystem::new(h0, hs, protocols)?;
                let rho0 = DensityMatrix::new(load_matrix(rho0)?)?;
                let sigma0 = DensityMatrix::new(load_matrix(sigma0)?)?;
                if rho0.dim() != sys.dim() || sigma0.dim() != sys.dim() {
                    return Err(Error::Config("state dimension mismatch".into()));
                }
                Ok((sys, rho0, sigma0))
            }
        }
    }
}

fn collect_indexed(kind: &str, map: BTreeMap<usize, PathBuf>) -> Result<Vec<PathBuf>> {
    let mut out = Vec::with_capacity(map.len());
    for i in 1..=map.len() {
        match map.get(&i) {
            Some(p) => out.push(p.clone()),
            None => {
                return Err(Error::Config(format!(
                    "{kind} keys must be numbered 1..={}, missing {kind}_{i}",
                    map.len()
                )))
            }
        }
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse '{value}' for key '{key}'")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|part| parse_num(key, part.trim()))
        .collect()
}

/// Load a square complex matrix from whitespace-separated `re im` pairs.
pub fn load_matrix(path: &Path) -> Result<ComplexMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let numbers: Vec<f64> = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{tok}' in {}", path.display())))
        })
        .collect::<Result<Vec<f64>>>()?;
    if !numbers.len().is_multiple_of(2) {
        return Err(Error::Config(format!(
            "{}: expected re/im pairs, got {} numbers",
            path.display(),
            numbers.len()
        )));
    }
    let n_entries = numbers.len() / 2;
    let dim = (n_entries as f64).sqrt().round() as usize;
    if dim * dim != n_entries || dim < 2 {
        return Err(Error::Config(format!(
            "{}: {} entries do not form a square matrix of dim >= 2",
            path.display(),
            n_entries
        )));
    }
    Ok(ComplexMatrix::from_fn(dim, |i, j| {
        let k = 2 * (i * dim + j);
        Complex64::new(numbers[k], numbers[k + 1])
    }))
}

/// Serialize a matrix in the sidecar format (one row per line).
pub fn format_matrix(m: &ComplexMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.dim() {
        let row: Vec<String> = (0..m.dim())
            .map(|j| {
                let e = m.get(i, j);
                format!("{} {}", e.re, e.im)
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_ref(), 64 * 4096);
        let (sys, rho0, sigma0) = cfg.build_system().unwrap();
        assert_eq!(sys.dim(), 4);
        assert_eq!(rho0.dim(), 4);
        assert_eq!(sigma0.dim(), 4);
    }

    #[test]
    fn parse_round_trip_with_comments() {
        let text = "
# sweep setup
grids = 16, 32, 64
orders = 1,3
oversample = 8
horizon = 2.0   # two time units
seed = 7
";
        let cfg = RunConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(cfg.grids, vec![16, 32, 64]);
        assert_eq!(cfg.orders, vec![1, 3]);
        assert_eq!(cfg.oversample, 8);
        assert_eq!(cfg.horizon, 2.0);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.n_ref(), 512);
    }

    #[test]
    fn parse_rejects_unknown_and_duplicate_keys() {
        assert!(matches!(
            RunConfig::parse("frobnicate = 1", Path::new(".")),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse("seed = 1\nseed = 2", Path::new(".")),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse("seed", Path::new(".")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn parse_rejects_invalid_grids() {
        // 48 does not divide 64 * 64.
        let text = "grids = 48, 64\noversample = 64";
        assert!(matches!(
            RunConfig::parse(text, Path::new(".")),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::parse("orders = 6", Path::new(".")).is_err());
        assert!(RunConfig::parse("horizon = -1", Path::new(".")).is_err());
    }

    #[test]
    fn matrix_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = ComplexMatrix::from_fn(3, |i, j| {
            Complex64::new(i as f64 + 0.5, j as f64 - 0.25)
        });
        let path = dir.path().join("m.txt");
        std::fs::write(&path, format_matrix(&m)).unwrap();
        let loaded = load_matrix(&path).unwrap();
        assert_eq!(loaded, m);
    }

    #[test]
    fn matrix_file_rejects_non_square_data() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "1 0 2 0 3 0").unwrap();
        assert!(load_matrix(&path).is_err());
        std::fs::write(&path, "1 0 2").unwrap();
        assert!(load_matrix(&path).is_err());
    }

    #[test]
    fn custom_system_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let z = crate::twoqubit::pauli_z();
        let x = crate::twoqubit::pauli_x();
        std::fs::write(dir.path().join("h0.txt"), format_matrix(&z)).unwrap();
        std::fs::write(dir.path().join("h1.txt"), format_matrix(&x)).unwrap();
        std::fs::write(dir.path().join("m1.txt"), format_matrix(&z)).unwrap();
        let rho0 = ComplexMatrix::diag(&[1.0, 0.0]);
        let sigma0 = ComplexMatrix::diag(&[0.9, 0.1]);
        std::fs::write(dir.path().join("rho0.txt"), format_matrix(&rho0)).unwrap();
        std::fs::write(dir.path().join("sigma0.txt"), format_matrix(&sigma0)).unwrap();
        let text = "
system = custom
drift = h0.txt
control_1 = h1.txt
protocol_m_1 = m1.txt
protocol_c_1 = 0.5
rho0 = rho0.txt
sigma0 = sigma0.txt
grids = 16
orders = 2
oversample = 4
";
        let cfg = RunConfig::parse(text, dir.path()).unwrap();
        let (sys, rho0, _) = cfg.build_system().unwrap();
        assert_eq!(sys.dim(), 2);
        assert_eq!(sys.n_controls(), 1);
        // u(rho0) = tr(Z rho0) + 0.5 = 1.5
        assert_eq!(sys.protocol(0).value(rho0.matrix()), 1.5);
    }
}
