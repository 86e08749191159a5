use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{Grid, WaveFunction};
use crate::error::{Error, Result};
use crate::linalg::{Block, CMatrix};

/// What a kernel matrix stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    E0,
    EN(u8),
    G0,
    GN(u8),
    URef,
    UExact,
    Difference,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::E0 => f.write_str("E0"),
            Label::EN(n) => write!(f, "E{n}"),
            Label::G0 => f.write_str("G0"),
            Label::GN(n) => write!(f, "G{n}"),
            Label::URef => f.write_str("U_ref"),
            Label::UExact => f.write_str("U_exact"),
            Label::Difference => f.write_str("difference"),
        }
    }
}

/// Dense n×n kernel with the quadrature weight Δx folded in, so that
/// (Mf)_i = Σ_j M_ij f_j approximates ∫K(x_i, y)f(y)dy.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelOperator {
    pub label: Label,
    pub s: f64,
    pub t: f64,
    pub hbar: f64,
    pub grid: Grid,
    pub matrix: CMatrix,
    /// Subdivision times when the operator is a composition.
    pub subdivision: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    label: String,
    s: f64,
    t: f64,
    hbar: f64,
    n: usize,
    #[serde(rename = "L")]
    half_width: f64,
}

fn times_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

impl KernelOperator {
    pub fn new(label: Label, s: f64, t: f64, hbar: f64, grid: Grid, matrix: CMatrix) -> Result<Self> {
        if matrix.rows != grid.len() || matrix.cols != grid.len() {
            return Err(Error::OperatorMismatch(format!(
                "matrix is {}x{}, grid has {} nodes",
                matrix.rows,
                matrix.cols,
                grid.len()
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::OperatorMismatch(format!("{label} kernel has non-finite entries")));
        }
        Ok(KernelOperator {
            label,
            s,
            t,
            hbar,
            grid,
            matrix,
            subdivision: None,
        })
    }

    pub fn apply(&self, f: &WaveFunction) -> Result<WaveFunction> {
        if f.grid != self.grid {
            return Err(Error::OperatorMismatch("wavefunction lives on a different grid".into()));
        }
        WaveFunction::new(self.grid, self.matrix.apply(&f.values))
    }

    pub fn apply_block(&self, block: &Block) -> Block {
        self.matrix.apply_block(block)
    }

    fn check_compatible(&self, other: &KernelOperator) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::OperatorMismatch("operators live on different grids".into()));
        }
        if self.hbar != other.hbar {
            return Err(Error::OperatorMismatch(format!("hbar {} vs {}", self.hbar, other.hbar)));
        }
        Ok(())
    }

    /// self − other, for two operators over the same (s, t).
    pub fn difference(&self, other: &KernelOperator) -> Result<KernelOperator> {
        self.check_compatible(other)?;
        if !times_match(self.s, other.s) || !times_match(self.t, other.t) {
            return Err(Error::OperatorMismatch(format!(
                "time spans ({}, {}) and ({}, {}) differ",
                self.s, self.t, other.s, other.t
            )));
        }
        Ok(KernelOperator {
            label: Label::Difference,
            s: self.s,
            t: self.t,
            hbar: self.hbar,
            grid: self.grid,
            matrix: self.matrix.sub(&other.matrix),
            subdivision: self.subdivision.clone(),
        })
    }

    /// Writes the matrix as row-major little-endian complex64 (f32 re, f32
    /// im) pairs and a JSON sidecar next to it with the extension `.json`.
    pub fn dump(&self, path: &Path) -> Result<PathBuf> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for z in &self.matrix.data {
            out.write_all(&(z.re as f32).to_le_bytes())?;
            out.write_all(&(z.im as f32).to_le_bytes())?;
        }
        out.flush()?;
        let sidecar = Sidecar {
            label: self.label.to_string(),
            s: self.s,
            t: self.t,
            hbar: self.hbar,
            n: self.grid.n,
            half_width: self.grid.half_width,
        };
        let side_path = path.with_extension("json");
        let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(&side_path, text + "\n")?;
        Ok(side_path)
    }
}

/// Partition s = t₀ < t₁ < … < t_L = t of a time interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subdivision {
    times: Vec<f64>,
}

impl Subdivision {
    pub fn new(times: Vec<f64>, delta_max: f64) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidArgument("a subdivision needs at least two times".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("subdivision times must be finite and strictly increasing".into()));
        }
        let sub = Subdivision { times };
        if sub.mesh() > delta_max {
            return Err(Error::TimeStepTooLarge(format!(
                "subdivision mesh {} exceeds delta_max = {delta_max}",
                sub.mesh()
            )));
        }
        Ok(sub)
    }

    /// L equal slices of [s, t].
    pub fn uniform(s: f64, t: f64, slices: usize, delta_max: f64) -> Result<Self> {
        if slices == 0 {
            return Err(Error::InvalidArgument("need at least one slice".into()));
        }
        let h = (t - s) / slices as f64;
        let mut times: Vec<f64> = (0..slices).map(|k| s + h * k as f64).collect();
        times.push(t);
        Subdivision::new(times, delta_max)
    }

    /// L slices whose interior breakpoints are drawn from a seeded generator;
    /// every gap stays within a factor three of the uniform one.
    pub fn random(s: f64, t: f64, slices: usize, seed: u64, delta_max: f64) -> Result<Self> {
        if slices == 0 {
            return Err(Error::InvalidArgument("need at least one slice".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gaps: Vec<f64> = (0..slices).map(|_| rng.gen_range(0.5..1.5)).collect();
        let total: f64 = gaps.iter().sum();
        let mut times = Vec::with_capacity(slices + 1);
        let mut acc = 0.0;
        times.push(s);
        for g in &gaps[..slices - 1] {
            acc += g;
            times.push(s + (t - s) * acc / total);
        }
        times.push(t);
        Subdivision::new(times, delta_max)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slices(&self) -> usize {
        self.times.len() - 1
    }

    /// ω(Ω), the largest gap.
    pub fn mesh(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Time-ordered product of step operators, `ops[0]` acting first. The result
/// carries the first factor's label and records the subdivision.
pub fn compose_subdivision(ops: &[KernelOperator]) -> Result<KernelOperator> {
    let first = ops
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to compose".into()))?;
    if ops.len() == 1 {
        return Ok(first.clone());
    }
    let mut times = vec![first.s];
    for pair in ops.windows(2) {
        pair[0].check_compatible(&pair[1])?;
        if !times_match(pair[0].t, pair[1].s) {
            return Err(Error::OperatorMismatch(format!(
                "time chain broken: step ends at {} but the next starts at {}",
                pair[0].t, pair[1].s
            )));
        }
    }
    let mut product = first.matrix.clone();
    for op in &ops[1..] {
        product = op.matrix.matmul(&product);
    }
    for op in ops {
        match &op.subdivision {
            Some(inner) => times.extend_from_slice(&inner[1..]),
            None => times.push(op.t),
        }
    }
    let last = ops.last().expect("non-empty");
    Ok(KernelOperator {
        label: first.label,
        s: first.s,
        t: last.t,
        hbar: first.hbar,
        grid: first.grid,
        matrix: product,
        subdivision: Some(times),
    })
}

/// Applies a chain of step operators to a block without forming the product.
pub fn apply_chain(ops: &[&KernelOperator], block: &Block) -> Block {
    let mut out = block.clone();
    for op in ops {
        out = op.apply_block(&out);
    }
    out
}

#[cfg(test)]
fn c64(re: f64, im: f64) -> num_complex::Complex64 {
    num_complex::Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_op(seed: u64, s: f64, t: f64) -> KernelOperator {
        let grid = Grid::new(1, 64, 6.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(64, 64, |_, _| c64(rng_val(&mut rng), rng_val(&mut rng)));
        KernelOperator::new(Label::E0, s, t, 1.0, grid, m).unwrap()
    }

    fn rng_val(rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(-0.2..0.2)
    }

    #[test]
    fn single_factor_is_returned_unchanged() {
        let a = random_op(1, 0.0, 0.1);
        assert_eq!(compose_subdivision(std::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn composition_is_associative() {
        let (a, b, c) = (random_op(1, 0.0, 0.1), random_op(2, 0.1, 0.2), random_op(3, 0.2, 0.3));
        let left = compose_subdivision(&[compose_subdivision(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
        let right = compose_subdivision(&[a, compose_subdivision(&[b, c]).unwrap()]).unwrap();
        assert!(left.matrix.max_abs_diff(&right.matrix) < 1e-12);
        assert_eq!(left.subdivision, right.subdivision);
        assert_eq!(left.subdivision.unwrap(), vec![0.0, 0.1, 0.2, 0.3]);
    }

    #[test]
    fn broken_chain_is_rejected() {
        let err = compose_subdivision(&[random_op(1, 0.0, 0.1), random_op(2, 0.2, 0.3)]).unwrap_err();
        assert!(matches!(err, Error::OperatorMismatch(_)));
    }

    #[test]
    fn subdivisions() {
        let u = Subdivision::uniform(0.0, 0.8, 4, 0.25).unwrap();
        assert_eq!(u.slices(), 4);
        assert!((u.mesh() - 0.2).abs() < 1e-15);
        assert!(Subdivision::uniform(0.0, 0.8, 2, 0.25).is_err());
        assert!(Subdivision::new(vec![0.0, 0.1, 0.1], 1.0).is_err());
        let r = Subdivision::random(0.0, 0.8, 8, 7, 0.25).unwrap();
        assert_eq!(r, Subdivision::random(0.0, 0.8, 8, 7, 0.25).unwrap());
        assert_eq!(*r.times().last().unwrap(), 0.8);
        assert!(r.mesh() > 0.1);
    }

    #[test]
    fn dump_writes_complex64_and_sidecar() {
        let a = random_op(4, 0.0, 0.1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e0.bin");
        let side = a.dump(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 64 * 64 * 8);
        let re = f32::from_le_bytes(bytes[8..12].try_into().unwrap());
        assert_eq!(re, a.matrix.data[1].re as f32);
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(side).unwrap()).unwrap();
        assert_eq!(json["label"], "E0");
        assert_eq!(json["n"], 64);
        assert_eq!(json["L"], 6.0);
    }
}
