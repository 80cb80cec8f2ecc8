//! Bistable reaction terms `f` and admissible obstacle levels `alpha`.
//!
//! Reactions are polynomials, so `f'`, `f''` and the primitive `W` are exact.
//! `W` is normalized by `W(a_minus) = 0`; every formula in the crate only uses
//! differences of `W`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::scalar::Scalar;

/// Polynomial with coefficients in ascending order of degree.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<T> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Polynomial<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs.last() == Some(&T::zero()) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(T::zero());
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::new(vec![T::zero()]);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * T::lit(k as f64))
            .collect();
        Self::new(coeffs)
    }

    /// Antiderivative vanishing at zero.
    pub fn antiderivative(&self) -> Self {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(T::zero());
        coeffs.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c / T::lit((k + 1) as f64)),
        );
        Self::new(coeffs)
    }
}

/// Bistable nonlinearity with roots `a_minus < a_zero < a_plus`.
#[derive(Clone, Debug)]
pub struct Nonlinearity<T> {
    pub a_minus: T,
    pub a_zero: T,
    pub a_plus: T,
    /// Semiconvexity constant: `f' >= -lambda`.
    pub lambda: T,
    f: Polynomial<T>,
    df: Polynomial<T>,
    d2f: Polynomial<T>,
    prim: Polynomial<T>,
    prim_at_a_minus: T,
}

impl<T: Scalar> Nonlinearity<T> {
    /// Builds a polynomial nonlinearity with declared roots and `lambda`.
    ///
    /// Only finiteness is checked here; the bistable structure is checked by
    /// [`validate_bistable`] so that a bad configuration can be reported in
    /// full rather than rejected at the first problem.
    pub fn polynomial(coeffs: Vec<T>, roots: [T; 3], lambda: T) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidInput("empty coefficient list".into()));
        }
        if coeffs.iter().chain(roots.iter()).any(|c| !c.is_finite()) || !lambda.is_finite() {
            return Err(Error::InvalidInput("non-finite coefficient, root or lambda".into()));
        }
        if lambda < T::zero() {
            return Err(Error::InvalidInput("lambda must be nonnegative".into()));
        }
        let f = Polynomial::new(coeffs);
        let df = f.derivative();
        let d2f = df.derivative();
        let prim = f.antiderivative();
        let prim_at_a_minus = prim.eval(roots[0]);
        Ok(Self {
            a_minus: roots[0],
            a_zero: roots[1],
            a_plus: roots[2],
            lambda,
            f,
            df,
            d2f,
            prim,
            prim_at_a_minus,
        })
    }

    /// `f(u) = u^3 - u`, roots `(-1, 0, 1)`, `lambda = 1`.
    pub fn cubic() -> Self {
        let one = T::one();
        Self::polynomial(vec![T::zero(), -one, T::zero(), one], [-one, T::zero(), one], one)
            .expect("cubic is well formed")
    }

    #[inline]
    pub fn eval(&self, s: T) -> T {
        self.f.eval(s)
    }

    #[inline]
    pub fn deriv(&self, s: T) -> T {
        self.df.eval(s)
    }

    #[inline]
    pub fn deriv2(&self, s: T) -> T {
        self.d2f.eval(s)
    }

    /// `W(s) = int_{a_minus}^{s} f`.
    #[inline]
    pub fn primitive(&self, s: T) -> T {
        self.prim.eval(s) - self.prim_at_a_minus
    }

    pub fn coefficients(&self) -> &[T] {
        self.f.coeffs()
    }

    /// Width of the outer wells, `a_plus - a_minus`.
    pub fn span(&self) -> T {
        self.a_plus - self.a_minus
    }

    /// `sup |f|` over `[lo, hi]` by dense sampling.
    pub fn sup_abs(&self, lo: T, hi: T) -> T {
        sample_sup(lo, hi, |s| self.eval(s).abs())
    }

    /// `sup |f'|` over `[lo, hi]` by dense sampling.
    pub fn sup_abs_deriv(&self, lo: T, hi: T) -> T {
        sample_sup(lo, hi, |s| self.deriv(s).abs())
    }
}

fn sample_sup<T: Scalar>(lo: T, hi: T, g: impl Fn(T) -> T) -> T {
    const N: usize = 4000;
    (0..=N)
        .map(|k| g(lo + (hi - lo) * T::lit(k as f64 / N as f64)))
        .fold(T::zero(), T::max)
}

/// Outcome of one sampled invariant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    /// Worst sample `(position, value)` when the invariant is sampled.
    pub worst: Option<(f64, f64)>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvariantCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks every bistable invariant of `nl` on `samples`-point grids.
/// Never aborts on a violated invariant; `samples < 100` is an input error.
pub fn validate_bistable<T: Scalar>(nl: &Nonlinearity<T>, samples: usize) -> Result<ValidationReport> {
    if samples < 100 {
        return Err(Error::InvalidInput(format!("samples = {samples} < 100")));
    }
    let f64_of = |x: T| x.to_f64_lossy();
    let root_tol = T::tol(1e-12);
    let mut checks = Vec::new();

    let ordered = nl.a_minus < nl.a_zero && nl.a_zero < nl.a_plus;
    checks.push(InvariantCheck {
        name: "root_order".into(),
        passed: ordered,
        worst: None,
        detail: format!("a_minus = {}, a_zero = {}, a_plus = {}", nl.a_minus, nl.a_zero, nl.a_plus),
    });

    let (worst_root, worst_res) = [nl.a_minus, nl.a_zero, nl.a_plus]
        .into_iter()
        .map(|a| (a, nl.eval(a).abs()))
        .fold((nl.a_minus, T::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
    checks.push(InvariantCheck {
        name: "root_residual".into(),
        passed: worst_res <= root_tol,
        worst: Some((f64_of(worst_root), f64_of(worst_res))),
        detail: format!("max |f(root)| = {worst_res:e}"),
    });

    let (dm, dp) = (nl.deriv(nl.a_minus), nl.deriv(nl.a_plus));
    checks.push(InvariantCheck {
        name: "outer_slopes".into(),
        passed: dm > T::zero() && dp > T::zero(),
        worst: Some(if dm < dp {
            (f64_of(nl.a_minus), f64_of(dm))
        } else {
            (f64_of(nl.a_plus), f64_of(dp))
        }),
        detail: format!("f'(a_minus) = {dm}, f'(a_plus) = {dp}"),
    });

    // Open-interval samples, endpoints excluded.
    let interior = |lo: T, hi: T| {
        (1..=samples).map(move |k| lo + (hi - lo) * T::lit(k as f64 / (samples + 1) as f64))
    };
    let worst_left = interior(nl.a_minus, nl.a_zero)
        .map(|s| (s, nl.eval(s)))
        .fold(None, |acc: Option<(T, T)>, x| match acc {
            Some(a) if a.1 <= x.1 => Some(a),
            _ => Some(x),
        })
        .expect("samples >= 100");
    checks.push(InvariantCheck {
        name: "positive_on_left_well".into(),
        passed: ordered && worst_left.1 > T::zero(),
        worst: Some((f64_of(worst_left.0), f64_of(worst_left.1))),
        detail: format!("min f on (a_minus, a_zero) = {}", worst_left.1),
    });
    let worst_right = interior(nl.a_zero, nl.a_plus)
        .map(|s| (s, nl.eval(s)))
        .fold(None, |acc: Option<(T, T)>, x| match acc {
            Some(a) if a.1 >= x.1 => Some(a),
            _ => Some(x),
        })
        .expect("samples >= 100");
    checks.push(InvariantCheck {
        name: "negative_on_right_well".into(),
        passed: ordered && worst_right.1 < T::zero(),
        worst: Some((f64_of(worst_right.0), f64_of(worst_right.1))),
        detail: format!("max f on (a_zero, a_plus) = {}", worst_right.1),
    });

    let lo = nl.a_minus - T::one();
    let hi = nl.a_plus + T::one();
    let worst_semi = (0..samples)
        .map(|k| lo + (hi - lo) * T::lit(k as f64 / (samples - 1) as f64))
        .map(|s| (s, nl.deriv(s) + nl.lambda))
        .fold((lo, T::infinity()), |acc, x| if x.1 < acc.1 { x } else { acc });
    checks.push(InvariantCheck {
        name: "semiconvexity".into(),
        passed: worst_semi.1 >= -T::tol(1e-12),
        worst: Some((f64_of(worst_semi.0), f64_of(worst_semi.1))),
        detail: format!("min f' + lambda on [a_minus - 1, a_plus + 1] = {}", worst_semi.1),
    });

    Ok(ValidationReport { checks })
}

/// Obstacle level together with the hypotheses it satisfies.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissibleAlpha<T> {
    pub alpha: T,
    /// `int_alpha^{a_plus} f`.
    pub integral_to_aplus: T,
    /// `alpha in (a_minus, a_zero)` and `int_alpha^{a_plus} f < 0`.
    pub satisfies_hyp: bool,
    /// `alpha in (a_minus, a_zero)` and `int_{a_minus}^{a_plus} f <= 0`.
    pub satisfies_hyp2: bool,
    pub fprime_positive: bool,
    pub reason: Option<String>,
}

/// Quadrature tolerance for the hypothesis integrals.
const HYP_QUAD_TOL: f64 = 1e-12;

pub fn check_alpha<T: Scalar>(nl: &Nonlinearity<T>, alpha: T) -> AdmissibleAlpha<T> {
    let tol = T::tol(HYP_QUAD_TOL);
    let integral_to_aplus = adaptive_simpson(|z| nl.eval(z), alpha, nl.a_plus, tol);
    let in_range = alpha > nl.a_minus && alpha < nl.a_zero;
    let whole = adaptive_simpson(|z| nl.eval(z), nl.a_minus, nl.a_plus, tol);
    let satisfies_hyp = in_range && integral_to_aplus < T::zero();
    // `whole` is zero for balanced wells; allow the quadrature error.
    let satisfies_hyp2 = in_range && whole <= tol;
    let reason = if !in_range {
        Some(format!(
            "alpha = {alpha} outside the open interval ({}, {})",
            nl.a_minus, nl.a_zero
        ))
    } else if !satisfies_hyp {
        Some(format!("int_alpha^a_plus f = {integral_to_aplus} is not negative"))
    } else {
        None
    };
    AdmissibleAlpha {
        alpha,
        integral_to_aplus,
        satisfies_hyp,
        satisfies_hyp2,
        fprime_positive: nl.deriv(alpha) > T::zero(),
        reason,
    }
}

/// Config-level description of a nonlinearity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NonlinearitySpec {
    #[default]
    Cubic,
    Polynomial {
        coeffs: Vec<f64>,
        roots: [f64; 3],
        lambda: f64,
    },
}

impl NonlinearitySpec {
    pub fn build<T: Scalar>(&self) -> Result<Nonlinearity<T>> {
        match self {
            NonlinearitySpec::Cubic => Ok(Nonlinearity::cubic()),
            NonlinearitySpec::Polynomial { coeffs, roots, lambda } => Nonlinearity::polynomial(
                coeffs.iter().map(|&c| T::lit(c)).collect(),
                roots.map(T::lit),
                T::lit(*lambda),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cubic_roots_lambda_and_primitive() {
        let nl = Nonlinearity::<f64>::cubic();
        assert_eq!(nl.eval(0.0), 0.0);
        assert_eq!((nl.a_minus, nl.a_zero, nl.a_plus), (-1.0, 0.0, 1.0));
        assert_eq!(nl.lambda, 1.0);
        assert_eq!(nl.primitive(-1.0), 0.0);
        assert!((nl.primitive(1.0) - nl.primitive(-1.0)).abs() < 1e-15);
        // W(s) = s^4/4 - s^2/2 + 1/4
        assert!((nl.primitive(-0.5) - 0.140625).abs() < 1e-15);
        assert_eq!(nl.deriv(-0.9), 3.0 * 0.81 - 1.0);
        assert_eq!(nl.deriv2(2.0), 12.0);
    }

    #[test]
    fn cubic_validates() {
        let report = validate_bistable(&Nonlinearity::<f64>::cubic(), 1000).unwrap();
        assert!(report.passed(), "{report:?}");
        let report32 = validate_bistable(&Nonlinearity::<f32>::cubic(), 1000).unwrap();
        assert!(report32.passed(), "{report32:?}");
    }

    #[test]
    fn wrong_middle_root_is_reported() {
        let nl = Nonlinearity::polynomial(vec![0.0, -1.0, 0.0, 1.0], [-1.0, 0.5, 1.0], 1.0).unwrap();
        let report = validate_bistable(&nl, 1000).unwrap();
        assert!(!report.passed());
        let residual = report.check("root_residual").unwrap();
        assert!(!residual.passed);
        let (at, value) = residual.worst.unwrap();
        assert_eq!(at, 0.5);
        assert!((value - 0.375).abs() < 1e-15);
    }

    #[test]
    fn inverted_cubic_fails_sign_conditions() {
        let nl = Nonlinearity::polynomial(vec![0.0, 1.0, 0.0, -1.0], [-1.0, 0.0, 1.0], 1.0).unwrap();
        let report = validate_bistable(&nl, 1000).unwrap();
        for name in ["outer_slopes", "positive_on_left_well", "negative_on_right_well"] {
            assert!(!report.check(name).unwrap().passed, "{name} should fail");
        }
        assert!(report.check("root_residual").unwrap().passed);
    }

    #[test]
    fn too_few_samples_is_an_input_error() {
        assert!(validate_bistable(&Nonlinearity::<f64>::cubic(), 99).is_err());
    }

    #[test]
    fn understated_lambda_fails_semiconvexity() {
        let nl = Nonlinearity::polynomial(vec![0.0, -1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], 0.5).unwrap();
        let report = validate_bistable(&nl, 1000).unwrap();
        let semi = report.check("semiconvexity").unwrap();
        assert!(!semi.passed);
        assert!(semi.worst.unwrap().0.abs() < 3e-3);
    }

    #[test]
    fn alpha_examples() {
        let nl = Nonlinearity::<f64>::cubic();
        let a = check_alpha(&nl, -0.5);
        assert!((a.integral_to_aplus + 0.140625).abs() < 1e-12);
        assert!(a.satisfies_hyp && a.satisfies_hyp2);
        // f'(-0.5) = -0.25
        assert!(!a.fprime_positive);

        let b = check_alpha(&nl, 0.0);
        assert!(!b.satisfies_hyp && !b.satisfies_hyp2);
        assert!(b.reason.is_some());

        let c = check_alpha(&nl, -0.9);
        assert!(c.satisfies_hyp && c.fprime_positive);
        assert!((nl.deriv(-0.9) - 1.43).abs() < 1e-12);

        assert!(!check_alpha(&nl, -1.0).satisfies_hyp);
        assert!(!check_alpha(&nl, 0.5).satisfies_hyp);
    }

    #[test]
    fn unbalanced_wells_break_hyp2_but_not_hyp() {
        // f(u) = (u^2 - 1)(u - 0.1): the right well is shallower.
        let nl = Nonlinearity::polynomial(vec![0.1, -1.0, -0.1, 1.0], [-1.0, 0.1, 1.0], 1.2).unwrap();
        assert!(validate_bistable(&nl, 1000).unwrap().passed());
        let a = check_alpha(&nl, -0.2);
        assert!(!a.satisfies_hyp2);
        // int_{-1}^{1} f = 0.2 - 0.2/3 > 0, but cutting at alpha = -0.2 makes it negative
        assert!(a.satisfies_hyp, "{a:?}");
    }

    #[test]
    fn spec_builds_cubic_and_polynomial() {
        let cubic: Nonlinearity<f64> = NonlinearitySpec::Cubic.build().unwrap();
        assert_eq!(cubic.coefficients(), &[0.0, -1.0, 0.0, 1.0]);
        let bad = NonlinearitySpec::Polynomial { coeffs: vec![], roots: [-1.0, 0.0, 1.0], lambda: 1.0 };
        assert!(bad.build::<f64>().is_err());
    }

    proptest! {
        #[test]
        fn primitive_differences_match_quadrature(s1 in -2.0f64..2.0, s2 in -2.0f64..2.0) {
            let nl = Nonlinearity::<f64>::cubic();
            let quad = adaptive_simpson(|z| nl.eval(z), s1, s2, 1e-13);
            prop_assert!((nl.primitive(s2) - nl.primitive(s1) - quad).abs() < 1e-10);
        }

        #[test]
        fn hyp2_implies_hyp(alpha in -0.999f64..-0.001) {
            let nl = Nonlinearity::<f64>::cubic();
            let a = check_alpha(&nl, alpha);
            prop_assert!(!a.satisfies_hyp2 || a.satisfies_hyp);
        }
    }
}
