//! Benchmark chain generation and Matrix Market / system-directory I/O.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::system::SecondOrderSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MassModel {
    /// `M = mass_scale·I`.
    #[default]
    Identity,
    /// `M = mass_scale·tridiag(1/6, 2/3, 1/6)`.
    Consistent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IoChoice {
    /// `F = 1/√n`, `Cp = Fᵀ`: distributed load, averaged displacement.
    #[default]
    Uniform,
    /// `F = e₁`, `Cp = e₁ᵀ`.
    Collocated,
    /// `F = e₁`, `Cp = e_nᵀ`: load at one end, displacement read at the other.
    EndToEnd,
}

/// Parameters of the generated chain on an elastic foundation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub stiffness_scale: f64,
    pub mass_scale: f64,
    /// Grounding spring per node, added to the diagonal of `K`.
    pub foundation: f64,
    pub mass: MassModel,
    pub io: IoChoice,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            alpha: 0.05,
            beta: 0.05,
            stiffness_scale: 1.0,
            mass_scale: 1.0,
            foundation: 0.2,
            mass: MassModel::Identity,
            io: IoChoice::Uniform,
        }
    }
}

impl ModelSpec {
    pub fn with_n(n: usize) -> Self {
        Self {
            n,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Argument(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.stiffness_scale > 0.0 && self.mass_scale > 0.0) {
            return Err(Error::Argument("stiffness and mass scales must be positive".into()));
        }
        if !(self.foundation >= 0.0) {
            return Err(Error::Argument("foundation stiffness must be nonnegative".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be finite and nonnegative")));
            }
        }
        Ok(())
    }
}

fn tridiag(n: usize, sub: f64, diag: f64) -> Result<SparseMatrix> {
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            t.push((i, i - 1, sub));
        }
        t.push((i, i, diag));
        if i + 1 < n {
            t.push((i, i + 1, sub));
        }
    }
    SparseMatrix::from_triplets(n, n, &t)
}

/// `K = ks·tridiag(−1,2,−1) + kg·I`, `M` per the mass model, `D = αM + βK`.
pub fn beam_generate(spec: &ModelSpec) -> Result<SecondOrderSystem> {
    spec.validate()?;
    let n = spec.n;
    let ks = spec.stiffness_scale;
    let k = tridiag(n, -ks, 2.0 * ks + spec.foundation)?;
    let m = match spec.mass {
        MassModel::Identity => SparseMatrix::identity(n).scaled(spec.mass_scale),
        MassModel::Consistent => tridiag(n, spec.mass_scale / 6.0, spec.mass_scale * 2.0 / 3.0)?,
    };
    let (f, cp) = match spec.io {
        IoChoice::Uniform => {
            let v = vec![1.0 / (n as f64).sqrt(); n];
            (DenseMatrix::column_vector(&v), DenseMatrix::column_vector(&v).transpose())
        }
        IoChoice::Collocated | IoChoice::EndToEnd => {
            let mut f = DenseMatrix::zeros(n, 1);
            f[(0, 0)] = 1.0;
            let mut c = DenseMatrix::zeros(1, n);
            let out = if spec.io == IoChoice::Collocated { 0 } else { n - 1 };
            c[(0, out)] = 1.0;
            (f, c)
        }
    };
    SecondOrderSystem::proportional(m, k, f, cp, None, spec.alpha, spec.beta)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Writes a coordinate `real general` Matrix Market file with 17 significant digits.
pub fn write_mm(path: &Path, a: &SparseMatrix) -> Result<()> {
    let mut s = String::with_capacity(32 * a.nnz() + 64);
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", a.nrows(), a.ncols(), a.nnz());
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let _ = writeln!(s, "{} {} {:.16e}", i + 1, j + 1, v);
        }
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

/// Reads a coordinate Matrix Market file; symmetric storage is expanded.
pub fn read_mm(path: &Path) -> Result<SparseMatrix> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(path, 1, "missing %%MatrixMarket matrix header"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(path, 1, format!("unsupported format '{}'", tokens[2])));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(parse_err(path, 1, format!("unsupported field '{}'", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(path, 1, format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut trip = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(path, lineno, "size line needs 3 fields"));
                }
                let p = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| parse_err(path, lineno, format!("bad integer '{s}'")))
                };
                size = Some((p(fields[0])?, p(fields[1])?, p(fields[2])?));
            }
            Some((nr, nc, _)) => {
                if fields.len() != 3 {
                    return Err(parse_err(path, lineno, "entry needs 3 fields"));
                }
                let i: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(path, lineno, "bad row index"))?;
                let j: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(path, lineno, "bad column index"))?;
                let v: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(path, lineno, "bad value"))?;
                if i == 0 || j == 0 || i > nr || j > nc {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("index ({i}, {j}) outside {nr}x{nc}"),
                    ));
                }
                trip.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (nr, nc, nnz) = size.ok_or_else(|| parse_err(path, 1, "missing size line"))?;
    let stored = if symmetric {
        trip.iter().filter(|t| t.0 >= t.1).count()
    } else {
        trip.len()
    };
    if stored != nnz {
        return Err(parse_err(
            path,
            1,
            format!("header declares {nnz} entries, found {stored}"),
        ));
    }
    SparseMatrix::from_triplets(nr, nc, &trip)
}

/// Dense matrices go through the same coordinate format, zeros omitted.
fn write_dense(path: &Path, a: &DenseMatrix) -> Result<()> {
    write_mm(path, &SparseMatrix::from_dense(a))
}

fn read_dense(path: &Path) -> Result<DenseMatrix> {
    Ok(read_mm(path)?.to_dense())
}

fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.txt")
}

/// Flat `key=value` manifest.
pub fn write_manifest(path: &Path, entries: &BTreeMap<String, String>) -> Result<()> {
    let mut s = String::new();
    for (k, v) in entries {
        let _ = writeln!(s, "{k}={v}");
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

pub fn read_manifest(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, idx + 1, "expected key=value"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn manifest_f64(m: &BTreeMap<String, String>, path: &Path, key: &str) -> Result<f64> {
    let v = m
        .get(key)
        .ok_or_else(|| parse_err(path, 0, format!("manifest lacks '{key}'")))?;
    v.parse()
        .map_err(|_| parse_err(path, 0, format!("manifest '{key}' is not a number: {v}")))
}

/// Writes `M.mtx`, `D.mtx`, `K.mtx`, `F.mtx`, `Cp.mtx`, `Cv.mtx` when nonzero, and the manifest.
pub fn write_system(dir: &Path, sys: &SecondOrderSystem) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_mm(&dir.join("M.mtx"), &sys.m)?;
    write_mm(&dir.join("K.mtx"), &sys.k)?;
    write_dense(&dir.join("F.mtx"), &sys.f)?;
    write_dense(&dir.join("Cp.mtx"), &sys.cp)?;
    if sys.cv.frob_norm() > 0.0 {
        write_dense(&dir.join("Cv.mtx"), &sys.cv)?;
    }
    write_mm(&dir.join("D.mtx"), &sys.d)?;
    let mut man = BTreeMap::new();
    man.insert("n".to_string(), sys.n().to_string());
    man.insert("alpha".to_string(), format!("{:.16e}", sys.alpha));
    man.insert("beta".to_string(), format!("{:.16e}", sys.beta));
    man.insert("proportional".to_string(), sys.proportional.to_string());
    write_manifest(&manifest_path(dir), &man)
}

pub fn read_system(dir: &Path) -> Result<SecondOrderSystem> {
    let need = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(io_err(
                &p,
                std::io::Error::new(std::io::ErrorKind::NotFound, format!("required file {name} missing")),
            ))
        }
    };
    let mpath = manifest_path(dir);
    let man = read_manifest(&need("manifest.txt").map(|_| mpath.clone())?)?;
    let alpha = manifest_f64(&man, &mpath, "alpha")?;
    let beta = manifest_f64(&man, &mpath, "beta")?;
    let proportional = match man.get("proportional").map(String::as_str) {
        Some("true") => true,
        Some("false") | None => false,
        Some(other) => {
            return Err(parse_err(&mpath, 0, format!("proportional must be true/false, got {other}")))
        }
    };
    let m = read_mm(&need("M.mtx")?)?;
    let k = read_mm(&need("K.mtx")?)?;
    let f = read_dense(&need("F.mtx")?)?;
    let cp = read_dense(&need("Cp.mtx")?)?;
    let cv_path = dir.join("Cv.mtx");
    let cv = if cv_path.is_file() {
        Some(read_dense(&cv_path)?)
    } else {
        None
    };
    if let Some(n) = man.get("n") {
        if n.parse::<usize>().ok() != Some(m.nrows()) {
            return Err(Error::Validation(format!(
                "manifest n={n} but M is {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    let d_path = dir.join("D.mtx");
    if d_path.is_file() {
        let d = read_mm(&d_path)?;
        let mut sys = SecondOrderSystem::new(m, d, k, f, cp, cv, alpha, beta)?;
        sys.proportional &= proportional;
        Ok(sys)
    } else {
        if !proportional {
            return Err(Error::Validation(
                "D.mtx absent but manifest does not declare proportional damping".into(),
            ));
        }
        SecondOrderSystem::proportional(m, k, f, cp, cv, alpha, beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_chain() {
        let spec = ModelSpec {
            n: 2,
            foundation: 0.0,
            ..ModelSpec::default()
        };
        let sys = beam_generate(&spec).unwrap();
        assert_eq!(
            sys.k.to_dense(),
            DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]])
        );
        let ev = crate::eigen::eigenvalues(&sys.k.to_dense()).unwrap();
        assert!((ev[0].re - 1.0).abs() < 1e-14 && (ev[1].re - 3.0).abs() < 1e-14);
    }

    #[test]
    fn damping_is_exactly_proportional() {
        let sys = beam_generate(&ModelSpec::with_n(50)).unwrap();
        let rebuilt = sys.m.add_scaled(&sys.k, sys.alpha, sys.beta).unwrap();
        assert_eq!(sys.d, rebuilt);
        assert!(sys.proportional);
    }

    #[test]
    fn nnz_closed_form() {
        for n in [2, 10, 2000] {
            let sys = beam_generate(&ModelSpec::with_n(n)).unwrap();
            assert_eq!(sys.k.nnz(), 3 * n - 2);
            assert_eq!(sys.m.nnz(), n);
        }
        let c = beam_generate(&ModelSpec {
            n: 10,
            mass: MassModel::Consistent,
            ..ModelSpec::default()
        })
        .unwrap();
        assert_eq!(c.m.nnz(), 28);
    }

    #[test]
    fn bad_spec() {
        assert!(beam_generate(&ModelSpec::with_n(1)).is_err());
        assert!(beam_generate(&ModelSpec {
            mass_scale: 0.0,
            ..ModelSpec::with_n(4)
        })
        .is_err());
    }
}
