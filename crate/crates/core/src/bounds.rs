use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("lower and upper bound vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid bounds for coordinate {index}: [{lower}, {upper}]")]
    Invalid { index: usize, lower: f64, upper: f64 },
}

/// Per-coordinate box `[lower, upper]`; entries may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Bounds, BoundsError> {
        if lower.len() != upper.len() {
            return Err(BoundsError::LengthMismatch(lower.len(), upper.len()));
        }
        for (index, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(BoundsError::Invalid { index, lower: *l, upper: *u });
            }
        }
        Ok(Bounds { lower, upper })
    }

    pub fn unbounded(n: usize) -> Bounds {
        Bounds { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    /// `[0, u]`, the normal form after the change to nonbasic variables.
    pub fn from_upper(upper: Vec<f64>) -> Result<Bounds, BoundsError> {
        Bounds::new(vec![0.0; upper.len()], upper)
    }

    pub fn point(x: &[f64]) -> Bounds {
        Bounds { lower: x.to_vec(), upper: x.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(Bounds::new(vec![0.0], vec![1.0]).is_ok());
        assert!(Bounds::new(vec![2.0], vec![1.0]).is_err());
        assert!(Bounds::new(vec![f64::INFINITY], vec![f64::INFINITY]).is_err());
        assert!(Bounds::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(!Bounds::unbounded(2).is_bounded());
        let b = Bounds::from_upper(vec![2.0, 5.0]).unwrap();
        assert!(b.contains(&[2.0, 0.0], 0.0));
        assert!(!b.contains(&[2.1, 0.0], 0.0));
        let mut x = [3.0, -1.0];
        b.clamp(&mut x);
        assert_eq!(x, [2.0, 0.0]);
    }
}
