use crate::dsl::ScalarField;
use crate::matkernel::{CMatrix, HermitianMatrix, MatError};

use super::SystemError;

/// Voigt labels of the six stress/strain slots.
pub const VOIGT_LABELS: [&str; 6] = ["11", "22", "33", "12", "23", "31"];

/// Elastic stiffness as a 6×6 matrix field in Voigt order.
#[derive(Debug, Clone)]
pub enum StiffnessTensor {
    /// Isotropic medium from bulk modulus `K` and shear modulus `μ`.
    Isotropic { bulk: ScalarField, shear: ScalarField },
    /// Full 6×6 entries, row-major. Built from 21 upper entries (mirrored) or
    /// from 36 entries whose symmetry is checked on evaluation.
    General { entries: Vec<ScalarField> },
}

impl StiffnessTensor {
    pub fn isotropic(bulk: &str, shear: &str) -> Result<Self, SystemError> {
        Ok(StiffnessTensor::Isotropic { bulk: parse(bulk)?, shear: parse(shear)? })
    }

    /// 21 upper-triangle entries, row-major: c11 c12 .. c16 c22 .. c66.
    pub fn from_upper<S: AsRef<str>>(upper: &[S]) -> Result<Self, SystemError> {
        if upper.len() != 21 {
            return Err(SystemError::Invalid(format!("stiffness needs 21 upper entries, got {}", upper.len())));
        }
        let mut entries = vec![ScalarField::constant(0.0); 36];
        let mut it = upper.iter();
        for i in 0..6 {
            for j in i..6 {
                let f = parse(it.next().expect("length checked").as_ref())?;
                entries[i * 6 + j] = f.clone();
                entries[j * 6 + i] = f;
            }
        }
        Ok(StiffnessTensor::General { entries })
    }

    /// All 36 entries, row-major. Symmetry is not assumed.
    pub fn from_full<S: AsRef<str>>(full: &[S]) -> Result<Self, SystemError> {
        if full.len() != 36 {
            return Err(SystemError::Invalid(format!("full stiffness needs 36 entries, got {}", full.len())));
        }
        let entries = full.iter().map(|s| parse(s.as_ref())).collect::<Result<Vec<_>, _>>()?;
        Ok(StiffnessTensor::General { entries })
    }

    /// Raw 6×6 values at `x` without any symmetry check.
    pub fn raw_at(&self, x: &[f64]) -> Result<[[f64; 6]; 6], SystemError> {
        let mut c = [[0.0; 6]; 6];
        match self {
            StiffnessTensor::Isotropic { bulk, shear } => {
                let k = eval("K", bulk, x)?;
                let mu = eval("mu", shear, x)?;
                for i in 0..3 {
                    for j in 0..3 {
                        c[i][j] = if i == j { k + 4.0 * mu / 3.0 } else { k - 2.0 * mu / 3.0 };
                    }
                    c[i + 3][i + 3] = mu;
                }
            }
            StiffnessTensor::General { entries } => {
                for i in 0..6 {
                    for j in 0..6 {
                        let name = format!("c_{{{},{}}}", VOIGT_LABELS[i], VOIGT_LABELS[j]);
                        c[i][j] = eval(&name, &entries[i * 6 + j], x)?;
                    }
                }
            }
        }
        Ok(c)
    }

    /// First pair `(i, j)` with `c_ij != c_ji` beyond a relative 1e-13.
    pub fn symmetry_defect(c: &[[f64; 6]; 6]) -> Option<(usize, usize)> {
        let scale = c.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for i in 0..6 {
            for j in i + 1..6 {
                if (c[i][j] - c[j][i]).abs() > 1e-13 * scale {
                    return Some((i, j));
                }
            }
        }
        None
    }

    pub fn check_symmetry_at(&self, x: &[f64]) -> Result<(), SystemError> {
        let c = self.raw_at(x)?;
        if let Some((i, j)) = Self::symmetry_defect(&c) {
            return Err(SystemError::StiffnessSymmetry {
                a: format!("{},{}", VOIGT_LABELS[i], VOIGT_LABELS[j]),
                b: format!("{},{}", VOIGT_LABELS[j], VOIGT_LABELS[i]),
                va: c[i][j],
                vb: c[j][i],
            });
        }
        Ok(())
    }

    /// Symmetric stiffness matrix at `x`.
    pub fn at(&self, x: &[f64]) -> Result<StiffnessValue, SystemError> {
        self.check_symmetry_at(x)?;
        let c = self.raw_at(x)?;
        let m = CMatrix::from_real_rows(c);
        let h = HermitianMatrix::new(m)
            .map_err(|source| SystemError::Matrix { field: "C".into(), point: x.to_vec(), source })?;
        Ok(StiffnessValue(h))
    }
}

/// Pointwise stiffness matrix.
#[derive(Debug, Clone)]
pub struct StiffnessValue(pub HermitianMatrix);

impl StiffnessValue {
    pub fn min_eigenvalue(&self) -> Result<f64, MatError> {
        self.0.min_eigenvalue()
    }

    pub fn matrix(&self) -> &CMatrix {
        self.0.matrix()
    }
}

fn parse(src: &str) -> Result<ScalarField, SystemError> {
    ScalarField::parse(src).map_err(|source| SystemError::Parse { src: src.to_string(), source })
}

fn eval(name: &str, f: &ScalarField, x: &[f64]) -> Result<f64, SystemError> {
    f.eval(x).map_err(|source| SystemError::Eval { field: name.to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_layout() {
        let c = StiffnessTensor::isotropic("1", "0.3").unwrap().raw_at(&[0.0]).unwrap();
        assert!((c[0][0] - 1.4).abs() < 1e-15);
        assert!((c[0][1] - 0.8).abs() < 1e-15);
        assert_eq!(c[3][3], 0.3);
        assert_eq!(c[0][3], 0.0);
    }

    #[test]
    fn upper_entries_are_mirrored() {
        let upper: Vec<String> = (0..21).map(|i| format!("{}", i + 1)).collect();
        let t = StiffnessTensor::from_upper(&upper).unwrap();
        let c = t.raw_at(&[0.0]).unwrap();
        assert_eq!(c[0][5], 6.0);
        assert_eq!(c[5][0], 6.0);
        assert_eq!(c[1][1], 7.0);
        assert_eq!(c[5][5], 21.0);
        assert!(StiffnessTensor::from_upper(&upper[..20]).is_err());
    }

    #[test]
    fn broken_symmetry_names_the_pair() {
        let mut full = vec!["0".to_string(); 36];
        for i in 0..6 {
            full[i * 6 + i] = "2".into();
        }
        full[1] = "0.5".into();
        full[6] = "0.4".into();
        let t = StiffnessTensor::from_full(&full).unwrap();
        match t.at(&[0.0]) {
            Err(SystemError::StiffnessSymmetry { a, b, .. }) => {
                assert_eq!(a, "11,22");
                assert_eq!(b, "22,11");
            }
            other => panic!("{other:?}"),
        }
    }
}
