use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use super::SampleFrame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Identity state matrix; modules coupled only through the arm current.
    Conventional,
    /// State matrix augmented with clamp-branch charge exchange.
    Compensated,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Conventional, ModelKind::Compensated];

    /// Short tag used in CSV column names and on the command line.
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Conventional => "conv",
            ModelKind::Compensated => "comp",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "conv" | "conventional" => Ok(ModelKind::Conventional),
            "comp" | "compensated" => Ok(ModelKind::Compensated),
            other => Err(format!("unknown estimator kind `{other}` (expected conv or comp)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Discrete model of one arm: `x(k) = A x(k-1) + b u`, `z(k) = c x(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
    pub kind: ModelKind,
}

/// Forward-bias time of each clamp branch per switching period. Branch `i`
/// (0-based) joins modules `i` and `i+1`; it is considered forward-biased
/// when `x[i+1] > x[i] + 2·v_fd`. Pass `v_fd = 0` for the bare comparison.
pub fn b_coefficients(x_hat: &[f64], m_a: f64, t_sw: f64, v_fd: f64) -> Vec<f64> {
    let on = (1.0 - m_a) * t_sw;
    x_hat
        .windows(2)
        .map(|w| if w[1] > w[0] + 2.0 * v_fd { on } else { 0.0 })
        .collect()
}

pub fn build_conventional_model(frame: &SampleFrame, c_vec: &[f64], t_s: f64) -> StateSpaceModel {
    let n = c_vec.len();
    assert_eq!(frame.duty_avg.len(), n);
    assert_eq!(frame.gates_at_sample.len(), n);
    let b = DVector::from_iterator(
        n,
        frame.duty_avg.iter().zip(c_vec).map(|(&d, &c)| d * t_s / c),
    );
    let c = RowDVector::from_iterator(
        n,
        frame.gates_at_sample.s.iter().map(|&s| if s { 1.0 } else { 0.0 }),
    );
    StateSpaceModel {
        a: DMatrix::identity(n, n),
        b,
        c,
        kind: ModelKind::Conventional,
    }
}

/// Charge-exchange capacitance of each branch over one sample:
/// `t_s·b_i·(1 - d_{i+1}) / (2·l_clamp)` (F). Dividing by a module's
/// capacitance gives that module's coupling coefficient.
pub fn exchange_capacitance(b: &[f64], duty_avg: &[f64], l_clamp: f64, t_s: f64) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(i, &bi)| t_s * bi * (1.0 - duty_avg[i + 1]) / (2.0 * l_clamp))
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn build_compensated_model(
    frame: &SampleFrame,
    x_hat: &[f64],
    c_vec: &[f64],
    l_clamp: f64,
    t_s: f64,
    t_sw: f64,
    m_a: f64,
    v_fd: f64,
) -> StateSpaceModel {
    let mut model = build_conventional_model(frame, c_vec, t_s);
    model.kind = ModelKind::Compensated;
    let b = b_coefficients(x_hat, m_a, t_sw, v_fd);
    let g = exchange_capacitance(&b, &frame.duty_avg, l_clamp, t_s);
    let a = &mut model.a;
    for (i, &gi) in g.iter().enumerate() {
        if gi == 0.0 {
            continue;
        }
        let (k_lo, k_hi) = (gi / c_vec[i], gi / c_vec[i + 1]);
        if k_lo.max(k_hi) > 0.5 {
            log::warn!(
                "clamp coupling {:.3} on branch {} exceeds 0.5; sampling too coarse for the linear exchange",
                k_lo.max(k_hi),
                i + 1
            );
        }
        // Branch i moves charge from module i+1 into module i.
        a[(i, i)] -= k_lo;
        a[(i, i + 1)] += k_lo;
        a[(i + 1, i + 1)] -= k_hi;
        a[(i + 1, i)] += k_hi;
    }
    model
}
