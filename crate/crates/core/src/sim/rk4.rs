use nalgebra::DVector;

use crate::error::Result;
use crate::scalar::Real;

/// Classical fourth-order Runge–Kutta stepper with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4<T: Real> {
    k1: DVector<T>,
    k2: DVector<T>,
    k3: DVector<T>,
    k4: DVector<T>,
    tmp: DVector<T>,
}

impl<T: Real> Rk4<T> {
    pub fn new(len: usize) -> Self {
        Self {
            k1: DVector::zeros(len),
            k2: DVector::zeros(len),
            k3: DVector::zeros(len),
            k4: DVector::zeros(len),
            tmp: DVector::zeros(len),
        }
    }

    /// Advances `x` by `h` for the autonomous system `ẋ = f(x)`.
    pub fn step<F>(&mut self, x: &mut DVector<T>, h: T, mut f: F) -> Result<()>
    where
        F: FnMut(&DVector<T>, &mut DVector<T>) -> Result<()>,
    {
        let half = h * T::lit(0.5);
        f(x, &mut self.k1)?;
        self.tmp.copy_from(x);
        self.tmp.axpy(half, &self.k1, T::one());
        f(&self.tmp, &mut self.k2)?;
        self.tmp.copy_from(x);
        self.tmp.axpy(half, &self.k2, T::one());
        f(&self.tmp, &mut self.k3)?;
        self.tmp.copy_from(x);
        self.tmp.axpy(h, &self.k3, T::one());
        f(&self.tmp, &mut self.k4)?;

        let sixth = h / T::lit(6.0);
        let two = T::lit(2.0);
        for i in 0..x.len() {
            x[i] += sixth * (self.k1[i] + two * self.k2[i] + two * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}
