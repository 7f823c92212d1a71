//! The sourced diffusion `dU/dt = -L^s U + F`: sources, the closed-form
//! solution, time steppers and label prediction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_order, check_rows, Error, Result};
use crate::kernel::KernelOperator;
use crate::spectral::frac_power;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceVariant {
    /// `F_i = U⁰_i - Ū⁰` on labeled rows.
    Plain,
    /// Plain source with rows divided by the degree.
    DegreeScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    ForwardEuler,
    BackwardEuler,
    ExponentialPhi,
    Rk4,
}

impl std::str::FromStr for Stepper {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward-euler" | "forward_euler" | "fe" => Ok(Stepper::ForwardEuler),
            "backward-euler" | "backward_euler" | "be" => Ok(Stepper::BackwardEuler),
            "exponential" | "exponential-phi" | "exponential_phi" | "exp" => Ok(Stepper::ExponentialPhi),
            "rk4" => Ok(Stepper::Rk4),
            other => Err(Error::InvalidArgument(format!("unknown stepper '{other}'"))),
        }
    }
}

/// Propagation schemes compared in the Two-Moon experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// `e^{-tL^s} U⁰`
    #[serde(rename = "1")]
    Diffusion,
    /// `e^{-tL^s} D^{-1} F`
    #[serde(rename = "2")]
    ScaledSource,
    /// `e^{-tL^s} U⁰ + t h(tL^s) D^{-1} F`
    #[serde(rename = "3")]
    DiffusionWithSource,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Diffusion, Scheme::ScaledSource, Scheme::DiffusionWithSource];

    pub fn number(self) -> u8 {
        match self {
            Scheme::Diffusion => 1,
            Scheme::ScaledSource => 2,
            Scheme::DiffusionWithSource => 3,
        }
    }

    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Scheme::Diffusion),
            2 => Ok(Scheme::ScaledSource),
            3 => Ok(Scheme::DiffusionWithSource),
            _ => Err(Error::InvalidArgument(format!("scheme must be 1, 2 or 3, got {k}"))),
        }
    }
}

/// Initial scores `U⁰`, the labeled set and the source `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelState {
    pub u0: DMatrix<f64>,
    pub labeled: Vec<usize>,
    pub source: DMatrix<f64>,
    pub classes: usize,
}

impl LabelState {
    /// One-hot rows for `labeled` nodes, zero rows elsewhere, and the
    /// matching source.
    pub fn one_hot(
        labels: &[usize],
        labeled: &[usize],
        classes: usize,
        variant: SourceVariant,
        degrees: &[f64],
    ) -> Result<Self> {
        let u0 = one_hot(labels, labeled, classes)?;
        let source = build_source(&u0, labeled, variant, degrees)?;
        Ok(Self { u0, labeled: labeled.to_vec(), source, classes })
    }
}

/// `n × c` matrix with a one in column `labels[i]` for every labeled `i`.
pub fn one_hot(labels: &[usize], labeled: &[usize], classes: usize) -> Result<DMatrix<f64>> {
    let n = labels.len();
    let mut u0 = DMatrix::zeros(n, classes);
    for &i in labeled {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        if labels[i] >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {} of node {i} outside {classes} classes",
                labels[i]
            )));
        }
        u0[(i, labels[i])] = 1.0;
    }
    Ok(u0)
}

/// Mean-centred source: labeled rows minus their mean, zero elsewhere.
pub fn build_source(
    u0: &DMatrix<f64>,
    labeled: &[usize],
    variant: SourceVariant,
    degrees: &[f64],
) -> Result<DMatrix<f64>> {
    if labeled.is_empty() {
        return Err(Error::InvalidArgument("labeled set is empty".into()));
    }
    let n = u0.nrows();
    if let Some(&i) = labeled.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    if variant == SourceVariant::DegreeScaled {
        check_rows(n, degrees.len())?;
    }
    let mut mean = u0.row(labeled[0]).into_owned() * 0.0;
    for &i in labeled {
        mean += u0.row(i);
    }
    mean /= labeled.len() as f64;

    let mut f = DMatrix::zeros(n, u0.ncols());
    for &i in labeled {
        let mut row = u0.row(i) - &mean;
        if variant == SourceVariant::DegreeScaled {
            let d = degrees[i];
            if d <= 0.0 {
                return Err(Error::InvalidArgument(format!("node {i} has zero degree; cannot scale its source")));
            }
            row /= d;
        }
        f.set_row(i, &row);
    }
    Ok(f)
}

/// `U(t) = e^{-tL^s} U⁰ + t h(tL^s) F`
pub fn solve_closed_form(
    op: &KernelOperator,
    s: f64,
    u0: &DMatrix<f64>,
    f: &DMatrix<f64>,
    t: f64,
) -> Result<DMatrix<f64>> {
    Ok(op.apply_heat(s, t, u0)? + op.apply_phi(s, t, f)?)
}

/// Forward Euler is stable for `dt < 2 / λ_max^s`.
pub fn stability_max_dt(lambda_max: f64, s: f64) -> Result<f64> {
    check_order(s)?;
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda_max must be positive, got {lambda_max}")));
    }
    Ok(2.0 / frac_power(lambda_max, s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    /// Skip the forward Euler stability check.
    pub allow_unstable: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { allow_unstable: false }
    }
}

/// One step of size `dt` from `u` with constant source `f`.
pub fn step(
    op: &KernelOperator,
    s: f64,
    stepper: Stepper,
    dt: f64,
    u: &DMatrix<f64>,
    f: &DMatrix<f64>,
    options: StepOptions,
) -> Result<DMatrix<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let rhs = |v: &DMatrix<f64>| -> Result<DMatrix<f64>> { Ok(f - op.apply_power(s, v)?) };
    match stepper {
        Stepper::ForwardEuler => {
            if !options.allow_unstable {
                let bound = stability_max_dt(op.lambda_max(), s)?;
                if dt >= bound {
                    return Err(Error::UnstableStep { dt, bound });
                }
            }
            Ok(u + rhs(u)? * dt)
        }
        Stepper::BackwardEuler => op.solve_shifted(s, dt, &(u + f * dt)),
        Stepper::ExponentialPhi => solve_closed_form(op, s, u, f, dt),
        Stepper::Rk4 => {
            let k1 = rhs(u)?;
            let k2 = rhs(&(u + &k1 * (0.5 * dt)))?;
            let k3 = rhs(&(u + &k2 * (0.5 * dt)))?;
            let k4 = rhs(&(u + &k3 * dt))?;
            Ok(u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
        }
    }
}

/// Integrates to `t_end` with `ceil(t_end / dt)` equal steps, calling
/// `observe(k, U_k)` after every step.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    op: &KernelOperator,
    s: f64,
    stepper: Stepper,
    dt: f64,
    t_end: f64,
    u0: &DMatrix<f64>,
    f: &DMatrix<f64>,
    options: StepOptions,
    mut observe: impl FnMut(usize, &DMatrix<f64>),
) -> Result<DMatrix<f64>> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be non-negative, got {t_end}")));
    }
    if t_end == 0.0 {
        return Ok(u0.clone());
    }
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut u = u0.clone();
    for k in 1..=steps {
        u = step(op, s, stepper, h, &u, f, options)?;
        observe(k, &u);
    }
    Ok(u)
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(u: &DMatrix<f64>) -> Vec<usize> {
    u.row_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Scores of one propagation scheme; `f` is the plain source.
pub fn run_scheme(
    op: &KernelOperator,
    scheme: Scheme,
    s: f64,
    t: f64,
    u0: &DMatrix<f64>,
    labeled: &[usize],
    degrees: &[f64],
) -> Result<DMatrix<f64>> {
    match scheme {
        Scheme::Diffusion => op.apply_heat(s, t, u0),
        Scheme::ScaledSource => {
            let f = build_source(u0, labeled, SourceVariant::DegreeScaled, degrees)?;
            op.apply_heat(s, t, &f)
        }
        Scheme::DiffusionWithSource => {
            let f = build_source(u0, labeled, SourceVariant::DegreeScaled, degrees)?;
            solve_closed_form(op, s, u0, &f, t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, LaplacianKind};
    use crate::kernel::Strategy;
    use approx::assert_abs_diff_eq;

    fn p2_op() -> KernelOperator {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        KernelOperator::new(&g, LaplacianKind::Combinatorial, Strategy::SpectralExact).unwrap()
    }

    #[test]
    fn source_two_labels() {
        let u0 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let f = build_source(&u0, &[0, 1], SourceVariant::Plain, &[]).unwrap();
        assert_eq!(f, DMatrix::from_row_slice(3, 2, &[0.5, -0.5, -0.5, 0.5, 0.0, 0.0]));
        let f = build_source(&u0, &[1], SourceVariant::Plain, &[]).unwrap();
        assert_eq!(f, DMatrix::zeros(3, 2));
        assert!(build_source(&u0, &[], SourceVariant::Plain, &[]).is_err());
    }

    #[test]
    fn degree_scaled_source() {
        let u0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let f = build_source(&u0, &[0, 1], SourceVariant::DegreeScaled, &[2.0, 4.0]).unwrap();
        assert_eq!(f, DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.125, 0.125]));
    }

    #[test]
    fn closed_form_on_p2() {
        let op = p2_op();
        let u0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let f = build_source(&u0, &[0], SourceVariant::Plain, &[]).unwrap();
        let u = solve_closed_form(&op, 1.0, &u0, &f, 1.0).unwrap();
        let e = (-2.0f64).exp();
        let expected = DMatrix::from_row_slice(2, 2, &[(1.0 + e) / 2.0, 0.0, (1.0 - e) / 2.0, 0.0]);
        assert_abs_diff_eq!(u, expected, epsilon = 1e-14);
        assert_eq!(solve_closed_form(&op, 1.0, &u0, &f, 0.0).unwrap(), u0);
    }

    #[test]
    fn stability_bounds() {
        assert_abs_diff_eq!(stability_max_dt(2.0, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(stability_max_dt(2.0, 0.5).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(stability_max_dt(1.0, 0.3).unwrap(), 2.0);
    }

    #[test]
    fn forward_euler_guard() {
        let op = p2_op();
        let u = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let f = DMatrix::zeros(2, 1);
        assert!(matches!(
            step(&op, 1.0, Stepper::ForwardEuler, 1.2, &u, &f, StepOptions::default()),
            Err(Error::UnstableStep { .. })
        ));
        let next = step(&op, 1.0, Stepper::ForwardEuler, 1.2, &u, &f, StepOptions { allow_unstable: true }).unwrap();
        // amplification 1 - 1.2·2 = -1.4 on the high mode
        assert_abs_diff_eq!(next, &u * -1.4, epsilon = 1e-14);
        let next = step(&op, 1.0, Stepper::ForwardEuler, 0.999, &u, &f, StepOptions::default()).unwrap();
        assert!(next.norm() < u.norm());
    }

    #[test]
    fn exponential_step_is_exact() {
        let op = p2_op();
        let u0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let f = build_source(&u0, &[0, 1], SourceVariant::Plain, &[]).unwrap();
        let a = step(&op, 0.5, Stepper::ExponentialPhi, 0.7, &u0, &f, StepOptions::default()).unwrap();
        assert_abs_diff_eq!(a, solve_closed_form(&op, 0.5, &u0, &f, 0.7).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn predict_ties_to_lowest() {
        let u = DMatrix::from_row_slice(3, 2, &[0.7, 0.3, 0.5, 0.5, 0.1, 0.2]);
        assert_eq!(predict(&u), vec![0, 0, 1]);
    }
}
