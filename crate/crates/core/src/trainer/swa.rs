use crate::error::{shape_err, Error, Result};
use crate::math::DenseMatrix;

/// Running arithmetic mean of parameter snapshots.
#[derive(Debug, Clone, Default)]
pub struct SwaAverage {
    mean: Vec<DenseMatrix>,
    count: usize,
}

impl SwaAverage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn add(&mut self, snapshot: &[&DenseMatrix]) -> Result<()> {
        if self.count == 0 {
            self.mean = snapshot.iter().map(|&p| p.clone()).collect();
            self.count = 1;
            return Ok(());
        }
        if snapshot.len() != self.mean.len() {
            return Err(shape_err(
                "swa_average",
                format!("{} tensors, expected {}", snapshot.len(), self.mean.len()),
            ));
        }
        self.count += 1;
        let w = 1.0 / self.count as f64;
        for (m, p) in self.mean.iter_mut().zip(snapshot) {
            let delta = p.sub(m)?;
            m.add_scaled(&delta, w)?;
        }
        Ok(())
    }

    pub fn average(&self) -> Result<Vec<DenseMatrix>> {
        if self.count == 0 {
            return Err(Error::Contract("weight average has no snapshots".into()));
        }
        Ok(self.mean.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_average_is_an_error() {
        assert!(matches!(SwaAverage::new().average(), Err(Error::Contract(_))));
    }

    #[test]
    fn single_snapshot_is_identity() {
        let w = DenseMatrix::from_rows(&[[0.1, -3.7]]).unwrap();
        let mut s = SwaAverage::new();
        s.add(&[&w]).unwrap();
        assert_eq!(s.average().unwrap(), vec![w]);
    }

    #[test]
    fn two_snapshots_halve() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.5], [-4.0, 0.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[[3.0, -0.5], [8.0, 1.0]]).unwrap();
        let mut s = SwaAverage::new();
        s.add(&[&a]).unwrap();
        s.add(&[&b]).unwrap();
        let want = a.add(&b).unwrap().scale(0.5);
        assert_eq!(s.average().unwrap(), vec![want]);
    }

    #[test]
    fn identical_snapshots_average_to_themselves() {
        let w = DenseMatrix::from_rows(&[[0.1, 1.0 / 3.0, -7.25e-3]]).unwrap();
        let mut s = SwaAverage::new();
        for _ in 0..17 {
            s.add(&[&w]).unwrap();
        }
        assert_eq!(s.count(), 17);
        assert_eq!(s.average().unwrap(), vec![w]);
    }

    #[test]
    fn mismatched_snapshot_rejected() {
        let w = DenseMatrix::zeros(1, 1);
        let mut s = SwaAverage::new();
        s.add(&[&w]).unwrap();
        assert!(s.add(&[&w, &w]).is_err());
    }
}
