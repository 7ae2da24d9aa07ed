//! Benchmark Hamiltonians in a truncated discrete basis.
//!
//! Every model exposes the nonzero entries of one Hamiltonian row, which is all
//! the local energy needs. Matrix elements that would connect outside the
//! truncation are dropped, so the sampled operator is exactly the truncated
//! matrix returned by [`Model::dense_matrix`].

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, VmcError};
use crate::wavefunction::{Configuration, RbfNetwork};

pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Allowed asymmetry when loading a matrix file.
pub const FILE_SYMMETRY_TOL: f64 = 1e-10;

/// A real symmetric matrix used directly as the Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    /// Row-major storage for file sources; `None` means the generator `1/p + 1/q`.
    stored: Option<Vec<f64>>,
}

impl HermitianMatrix {
    /// `H_pq = 1/p + 1/q` with 1-based labels.
    pub fn generator(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(VmcError::InvalidModel(format!(
                "matrix dimension must be at least 2, got {dim}"
            )));
        }
        Ok(HermitianMatrix { dim, stored: None })
    }

    pub fn from_dense(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(VmcError::InvalidModel(format!(
                "matrix dimension must be at least 2, got {dim}"
            )));
        }
        if values.len() != dim * dim {
            return Err(VmcError::InvalidModel(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(VmcError::InvalidModel("matrix has non-finite entries".into()));
        }
        for p in 0..dim {
            for q in 0..p {
                let (x, y) = (values[p * dim + q], values[q * dim + p]);
                if (x - y).abs() > FILE_SYMMETRY_TOL {
                    return Err(VmcError::InvalidModel(format!(
                        "matrix is not symmetric at ({p}, {q}): {x} vs {y}"
                    )));
                }
            }
        }
        Ok(HermitianMatrix {
            dim,
            stored: Some(values),
        })
    }

    /// Parse the plain-text format: a line with `d`, then `d` rows of `d` reals.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| VmcError::InvalidModel("empty matrix file".into()))?;
        let dim: usize = header
            .parse()
            .map_err(|_| VmcError::InvalidModel(format!("bad dimension line '{header}'")))?;
        let mut values = Vec::with_capacity(dim * dim);
        for (row, line) in lines.enumerate() {
            if row >= dim {
                return Err(VmcError::InvalidModel(format!("more than {dim} matrix rows")));
            }
            let parsed: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            let parsed = parsed.map_err(|e| VmcError::InvalidModel(format!("row {}: {e}", row + 1)))?;
            if parsed.len() != dim {
                return Err(VmcError::InvalidModel(format!(
                    "row {} has {} entries, expected {dim}",
                    row + 1,
                    parsed.len()
                )));
            }
            values.extend(parsed);
        }
        if values.len() != dim * dim {
            return Err(VmcError::InvalidModel(format!(
                "expected {dim} matrix rows, got {}",
                values.len() / dim.max(1)
            )));
        }
        Self::from_dense(dim, values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| VmcError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_generator(&self) -> bool {
        self.stored.is_none()
    }

    /// Entry at 0-based `(row, col)`.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        match &self.stored {
            Some(v) => v[row * self.dim + col],
            None => 1.0 / (row + 1) as f64 + 1.0 / (col + 1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// `p^2/2 + x^2/2 + E x` in the oscillator eigenbasis.
    Ho1d {
        field: f64,
        n_max: usize,
    },
    /// Two independent oscillators with fields along x and y.
    Ho2d {
        field_x: f64,
        field_y: f64,
        n_max: usize,
    },
    /// Infinite well on `(0, 1)` plus `slope * x`, in the sine-mode basis.
    ParticleBox {
        slope: f64,
        n_max: usize,
    },
    Matrix(HermitianMatrix),
}

/// Nonzero entries `(n', <n|H|n'>)` of one Hamiltonian row. The diagonal is first.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub entries: Vec<(Configuration, f64)>,
}

impl SparseRow {
    pub fn diagonal(&self) -> f64 {
        self.entries[0].1
    }
}

/// `<n|x|n+1>` for the oscillator with hbar = m = omega = 1.
///
/// Level `n` carries the phase `(-1)^n` relative to the ladder-operator states,
/// so the element is negative and a field `E > 0` gives a ground state with
/// same-sign amplitudes.
#[inline]
pub fn ho_position_element(n: usize) -> f64 {
    -((n + 1) as f64 / 2.0).sqrt()
}

/// `<n1|x|n2>` for the unit-width infinite well; labels are 1-based sine modes.
pub fn box_position_element(n1: usize, n2: usize) -> f64 {
    if n1 == n2 {
        return 0.5;
    }
    let sign = if (n1 + n2).is_multiple_of(2) { 1.0 } else { -1.0 };
    let (a, b) = (n1 as f64, n2 as f64);
    4.0 * (sign - 1.0) * a * b / ((a - b).powi(2) * (a + b).powi(2) * PI * PI)
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let (ok_params, n_max) = match self {
            Model::Ho1d { field, n_max } => (finite(&[*field]), *n_max),
            Model::Ho2d {
                field_x,
                field_y,
                n_max,
            } => (finite(&[*field_x, *field_y]), *n_max),
            Model::ParticleBox { slope, n_max } => (finite(&[*slope]), *n_max),
            Model::Matrix(m) => (true, m.dim()),
        };
        if !ok_params {
            return Err(VmcError::InvalidModel("parameters must be finite".into()));
        }
        if n_max < 2 {
            return Err(VmcError::InvalidModel(format!(
                "truncation must be at least 2, got {n_max}"
            )));
        }
        Ok(())
    }

    /// Number of quantum numbers per configuration.
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Ho2d { .. } => 2,
            _ => 1,
        }
    }

    /// Per-coordinate number of levels kept.
    pub fn extent(&self) -> usize {
        match self {
            Model::Ho1d { n_max, .. } | Model::Ho2d { n_max, .. } | Model::ParticleBox { n_max, .. } => *n_max,
            Model::Matrix(m) => m.dim(),
        }
    }

    pub fn basis_size(&self) -> usize {
        self.extent().pow(self.input_dim() as u32)
    }

    pub fn contains(&self, n: &Configuration) -> bool {
        n.dim() == self.input_dim() && n.as_slice().iter().all(|&x| x < self.extent())
    }

    /// Row-major flat index of `n`; the last coordinate varies fastest.
    pub fn index_of(&self, n: &Configuration) -> usize {
        let ext = self.extent();
        n.as_slice().iter().fold(0, |acc, &x| acc * ext + x)
    }

    pub fn config_at(&self, mut index: usize) -> Configuration {
        let ext = self.extent();
        let mut out = vec![0; self.input_dim()];
        for slot in out.iter_mut().rev() {
            *slot = index % ext;
            index /= ext;
        }
        Configuration::new(out)
    }

    fn check(&self, n: &Configuration) -> Result<()> {
        if n.dim() != self.input_dim() {
            return Err(VmcError::DimensionMismatch {
                expected: self.input_dim(),
                got: n.dim(),
            });
        }
        if !self.contains(n) {
            return Err(VmcError::OutOfRange {
                config: n.as_slice().to_vec(),
            });
        }
        Ok(())
    }

    pub fn connected_row(&self, n: &Configuration) -> Result<SparseRow> {
        self.check(n)?;
        let mut entries = Vec::new();
        match self {
            Model::Ho1d { field, n_max } => {
                let k = n[0];
                entries.push((n.clone(), k as f64 + 0.5));
                push_ho_neighbors(&mut entries, n, 0, *field, *n_max);
            }
            Model::Ho2d {
                field_x,
                field_y,
                n_max,
            } => {
                entries.push((n.clone(), (n[0] + n[1]) as f64 + 1.0));
                push_ho_neighbors(&mut entries, n, 0, *field_x, *n_max);
                push_ho_neighbors(&mut entries, n, 1, *field_y, *n_max);
            }
            Model::ParticleBox { slope, n_max } => {
                let level = (n[0] + 1) as f64;
                entries.push((n.clone(), PI * PI * level * level / 2.0 + 0.5 * slope));
                for m in 0..*n_max {
                    if m == n[0] {
                        continue;
                    }
                    let v = slope * box_position_element(n[0] + 1, m + 1);
                    if v != 0.0 {
                        entries.push((Configuration::new(vec![m]), v));
                    }
                }
            }
            Model::Matrix(h) => {
                let row = n[0];
                entries.push((n.clone(), h.entry(row, row)));
                for col in 0..h.dim() {
                    if col == row {
                        continue;
                    }
                    let v = h.entry(row, col);
                    if v != 0.0 {
                        entries.push((Configuration::new(vec![col]), v));
                    }
                }
            }
        }
        Ok(SparseRow { entries })
    }

    /// `sum_n' <n|H|n'> psi(n') / psi(n)` with amplitudes supplied by `amplitude`.
    pub fn local_energy_with<F>(&self, n: &Configuration, floor: f64, mut amplitude: F) -> Result<f64>
    where
        F: FnMut(&Configuration) -> Result<f64>,
    {
        let psi = amplitude(n)?;
        if psi.abs() < floor {
            return Err(VmcError::DivisionHazard {
                amplitude: psi,
                floor,
                config: n.as_slice().to_vec(),
            });
        }
        let row = self.connected_row(n)?;
        let mut acc = row.diagonal();
        for (m, h) in &row.entries[1..] {
            acc += h * amplitude(m)? / psi;
        }
        if !acc.is_finite() {
            return Err(VmcError::NumericalFailure(format!(
                "non-finite local energy at {:?}",
                n.as_slice()
            )));
        }
        Ok(acc)
    }

    pub fn local_energy(&self, net: &RbfNetwork, n: &Configuration, floor: f64) -> Result<f64> {
        if net.input_dim() != self.input_dim() {
            return Err(VmcError::DimensionMismatch {
                expected: self.input_dim(),
                got: net.input_dim(),
            });
        }
        self.local_energy_with(n, floor, |m| net.evaluate(m))
    }

    /// The full truncated matrix, assembled row by row from [`Model::connected_row`].
    pub fn dense_matrix(&self, cap: usize) -> Result<DMatrix<f64>> {
        self.validate()?;
        let size = self.basis_size();
        if size > cap {
            return Err(VmcError::SizeExceeded { size, cap });
        }
        let mut h = DMatrix::zeros(size, size);
        for i in 0..size {
            let row = self.connected_row(&self.config_at(i))?;
            for (m, v) in row.entries {
                h[(i, self.index_of(&m))] += v;
            }
        }
        Ok(h)
    }
}

fn push_ho_neighbors(out: &mut Vec<(Configuration, f64)>, n: &Configuration, axis: usize, field: f64, n_max: usize) {
    if field == 0.0 {
        return;
    }
    let k = n[axis];
    if k > 0 {
        let mut m = n.clone();
        m.as_mut_slice()[axis] = k - 1;
        out.push((m, field * ho_position_element(k - 1)));
    }
    if k + 1 < n_max {
        let mut m = n.clone();
        m.as_mut_slice()[axis] = k + 1;
        out.push((m, field * ho_position_element(k)));
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::Ho1d { field, n_max } => write!(f, "ho1d(E={field}, n_max={n_max})"),
            Model::Ho2d {
                field_x,
                field_y,
                n_max,
            } => write!(f, "ho2d(Ex={field_x}, Ey={field_y}, n_max={n_max})"),
            Model::ParticleBox { slope, n_max } => {
                write!(f, "box(a={slope}, n_max={n_max})")
            }
            Model::Matrix(h) if h.is_generator() => write!(f, "matrix(d={}, 1/p+1/q)", h.dim()),
            Model::Matrix(h) => write!(f, "matrix(d={}, file)", h.dim()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefunction::{Activation, DEFAULT_PSI_FLOOR};

    fn cfg(n: &[usize]) -> Configuration {
        Configuration::new(n.to_vec())
    }

    fn all_models(n_max: usize) -> Vec<Model> {
        vec![
            Model::Ho1d { field: 0.7, n_max },
            Model::Ho2d {
                field_x: 1.3,
                field_y: -0.4,
                n_max,
            },
            Model::ParticleBox { slope: 3.0, n_max },
            Model::Matrix(HermitianMatrix::generator(n_max).unwrap()),
        ]
    }

    #[test]
    fn unperturbed_oscillator_row() {
        let m = Model::Ho1d { field: 0.0, n_max: 20 };
        let row = m.connected_row(&cfg(&[0])).unwrap();
        assert_eq!(row.entries, vec![(cfg(&[0]), 0.5)]);
    }

    #[test]
    fn box_ground_diagonal() {
        let m = Model::ParticleBox { slope: 2.0, n_max: 20 };
        let d = m.connected_row(&cfg(&[0])).unwrap().diagonal();
        assert!((d - (PI * PI / 2.0 + 1.0)).abs() < 1e-12);
        assert!((d - 5.9348).abs() < 1e-4);
    }

    #[test]
    fn box_off_diagonal_hand_value() {
        let v = box_position_element(1, 2);
        assert!((v + 16.0 / (9.0 * PI * PI)).abs() < 1e-15);
        assert!((v + 0.18013).abs() < 1e-5);
    }

    #[test]
    fn box_parity_zeros() {
        for n1 in 1..12 {
            for n2 in 1..12 {
                if n1 != n2 && (n1 + n2) % 2 == 0 {
                    assert_eq!(box_position_element(n1, n2), 0.0);
                }
            }
        }
    }

    #[test]
    fn generator_row() {
        let m = Model::Matrix(HermitianMatrix::generator(2).unwrap());
        let row = m.connected_row(&cfg(&[0])).unwrap();
        assert_eq!(row.entries, vec![(cfg(&[0]), 2.0), (cfg(&[1]), 1.5)]);
    }

    #[test]
    fn out_of_range_is_rejected() {
        let m = Model::Ho1d { field: 0.1, n_max: 3 };
        assert_eq!(
            m.connected_row(&cfg(&[3])),
            Err(VmcError::OutOfRange { config: vec![3] })
        );
    }

    #[test]
    fn dense_unperturbed_spectrum() {
        let m = Model::Ho1d { field: 0.0, n_max: 3 };
        let h = m.dense_matrix(DEFAULT_DENSE_CAP).unwrap();
        assert_eq!(
            h,
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.5, 2.5]))
        );
    }

    #[test]
    fn dense_cap() {
        let m = Model::Ho2d {
            field_x: 1.0,
            field_y: 1.0,
            n_max: 70,
        };
        assert_eq!(
            m.dense_matrix(DEFAULT_DENSE_CAP),
            Err(VmcError::SizeExceeded {
                size: 4900,
                cap: DEFAULT_DENSE_CAP
            })
        );
    }

    #[test]
    fn all_models_hermitian_and_row_consistent() {
        for n_max in 2..=8 {
            for model in all_models(n_max) {
                let h = model.dense_matrix(DEFAULT_DENSE_CAP).unwrap();
                let asym = (&h - h.transpose()).amax();
                assert!(asym < 1e-12, "{model}: asymmetry {asym}");
                for i in 0..model.basis_size() {
                    let n = model.config_at(i);
                    let row = model.connected_row(&n).unwrap();
                    let mut expected: Vec<(usize, f64)> = (0..model.basis_size())
                        .filter(|&j| h[(i, j)] != 0.0 || j == i)
                        .map(|j| (j, h[(i, j)]))
                        .collect();
                    let mut got: Vec<(usize, f64)> = row.entries.iter().map(|(m, v)| (model.index_of(m), *v)).collect();
                    expected.sort_by_key(|e| e.0);
                    got.sort_by_key(|e| e.0);
                    assert_eq!(got, expected, "{model} row {i}");
                    assert!(row.entries.iter().all(|(m, _)| model.contains(m)));
                }
            }
        }
    }

    #[test]
    fn index_round_trip() {
        let m = Model::Ho2d {
            field_x: 0.0,
            field_y: 0.0,
            n_max: 7,
        };
        for i in 0..m.basis_size() {
            assert_eq!(m.index_of(&m.config_at(i)), i);
        }
        assert_eq!(m.index_of(&cfg(&[2, 3])), 17);
    }

    #[test]
    fn local_energy_of_unperturbed_ground_state() {
        let model = Model::Ho1d { field: 0.0, n_max: 20 };
        let net = RbfNetwork::new(vec![1.0], vec![30.0], vec![vec![0.0]], Activation::Gaussian).unwrap();
        let e = model.local_energy(&net, &cfg(&[0]), DEFAULT_PSI_FLOOR).unwrap();
        assert_eq!(e, 0.5);
    }

    #[test]
    fn local_energy_floor() {
        let model = Model::Ho1d { field: 0.3, n_max: 20 };
        let net = RbfNetwork::new(vec![1.0], vec![30.0], vec![vec![0.0]], Activation::Gaussian).unwrap();
        assert!(matches!(
            model.local_energy(&net, &cfg(&[19]), DEFAULT_PSI_FLOOR),
            Err(VmcError::DivisionHazard { .. })
        ));
    }

    #[test]
    fn matrix_file_parsing() {
        let h = HermitianMatrix::parse("3\n1 2 3\n2 5 6\n3 6 9\n").unwrap();
        assert_eq!(h.entry(1, 2), 6.0);
        assert!(HermitianMatrix::parse("2\n1 2\n2.1 1\n").is_err());
        assert!(HermitianMatrix::parse("2\n1 2\n").is_err());
        assert!(HermitianMatrix::parse("2\n1 2 3\n2 1\n").is_err());
        assert!(HermitianMatrix::parse("2\n1 x\nx 1\n").is_err());
        // asymmetry within tolerance is accepted
        assert!(HermitianMatrix::parse("2\n1 2\n2.00000000001 1\n").is_ok());
    }

    #[test]
    fn truncation_below_two_is_invalid() {
        let m = Model::Ho1d { field: 0.5, n_max: 1 };
        assert!(m.validate().is_err());
        assert!(HermitianMatrix::generator(1).is_err());
    }
}
