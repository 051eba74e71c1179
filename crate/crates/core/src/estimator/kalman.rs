use nalgebra::{DMatrix, DVector, RowDVector};

use super::StateSpaceModel;

/// Kalman-filter state for one arm.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub q_process: DMatrix<f64>,
    pub r_meas: f64,
    pub t_sample: f64,
}

/// Numerical failure inside the filter; the caller attaches the sample index.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterFault(pub String);

impl EstimatorState {
    pub fn new(n: usize, x0: f64, p0_std: f64, q: f64, r_meas: f64, t_sample: f64) -> Self {
        Self {
            x_hat: DVector::from_element(n, x0),
            p: DMatrix::from_diagonal_element(n, n, p0_std * p0_std),
            q_process: DMatrix::from_diagonal_element(n, n, q),
            r_meas,
            t_sample,
        }
    }

    /// Time update: `x ← A x + b u`, `P ← A P Aᵀ + Q`.
    pub fn predict(&mut self, model: &StateSpaceModel, u: f64) -> Result<(), FilterFault> {
        let n = self.x_hat.len();
        if model.a.nrows() != n || model.b.len() != n {
            return Err(FilterFault(format!(
                "model is {}x{} but state has {n} entries",
                model.a.nrows(),
                model.a.ncols()
            )));
        }
        self.x_hat = &model.a * &self.x_hat + &model.b * u;
        self.p = &model.a * &self.p * model.a.transpose() + &self.q_process;
        symmetrize(&mut self.p);
        self.check("predict")
    }

    /// Scalar measurement update with the Joseph-form covariance.
    pub fn update(&mut self, c: &RowDVector<f64>, z: f64, r_meas: f64) -> Result<(), FilterFault> {
        if r_meas.is_nan() || r_meas <= 0.0 {
            return Err(FilterFault(format!("measurement variance {r_meas} <= 0")));
        }
        let pct = &self.p * c.transpose();
        let s = (c * &pct)[(0, 0)] + r_meas;
        if !(s > 0.0 && s.is_finite()) {
            return Err(FilterFault(format!("innovation variance {s} not positive")));
        }
        let innovation = z - (c * &self.x_hat)[(0, 0)];
        let k = pct / s;
        self.x_hat += &k * innovation;
        let n = self.x_hat.len();
        let ikc = DMatrix::identity(n, n) - &k * c;
        self.p = &ikc * &self.p * ikc.transpose() + &k * k.transpose() * r_meas;
        symmetrize(&mut self.p);
        self.check("update")
    }

    fn check(&self, stage: &str) -> Result<(), FilterFault> {
        if self.x_hat.iter().chain(self.p.iter()).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(FilterFault(format!("non-finite estimate after {stage}")))
        }
    }
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = m;
            p[(j, i)] = m;
        }
    }
}

pub fn kf_predict(
    est: &EstimatorState,
    model: &StateSpaceModel,
    u_iarm: f64,
) -> Result<EstimatorState, FilterFault> {
    let mut next = est.clone();
    next.predict(model, u_iarm)?;
    Ok(next)
}

pub fn kf_update(
    est: &EstimatorState,
    c_row: &RowDVector<f64>,
    z_varm: f64,
    r_meas: f64,
) -> Result<EstimatorState, FilterFault> {
    let mut next = est.clone();
    next.update(c_row, z_varm, r_meas)?;
    Ok(next)
}
