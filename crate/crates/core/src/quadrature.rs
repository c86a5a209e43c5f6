//! Adaptive Gauss-Kronrod and Gauss-Laguerre rules.
//!
//! The fading averages are integrals of the form `int_0^inf e^{-x} phi(x) dx`
//! with a bounded `phi`, sometimes nested inside a finite outer integral.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

// 21-point Kronrod abscissae on [-1, 1]; odd indices are the 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

/// Tolerances and limits shared by every integral in the fading module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of interval bisections per adaptive integral.
    pub max_subdivisions: usize,
    /// Order of the Gauss-Laguerre rule used for semi-infinite tails.
    pub laguerre_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_subdivisions: 2000,
            laguerre_nodes: 32,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(invalid("abs_tol", format!("must be positive, got {}", self.abs_tol)));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return Err(invalid("rel_tol", format!("must be nonnegative, got {}", self.rel_tol)));
        }
        if self.max_subdivisions == 0 {
            return Err(invalid("max_subdivisions", "must be at least 1"));
        }
        if self.laguerre_nodes < 8 {
            return Err(invalid(
                "laguerre_nodes",
                format!("must be at least 8, got {}", self.laguerre_nodes),
            ));
        }
        Ok(())
    }
}

/// Integral value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[10] * fc;
    let mut g = 0.0;
    for i in 0..10 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: k * h,
        error: ((k - g) * h).abs(),
    }
}

/// Adaptive 21-point Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the segment with the largest error estimate until the summed error
/// is below `max(abs_tol, rel_tol * |I|)`.
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_subdivisions: usize,
) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(invalid("interval", format!("bounds must be finite, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let first = kronrod21(&mut f, a, b);
    let mut value = first.value;
    let mut error = first.error;
    let mut evaluations = 21;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut splits = 0;
    while error > abs_tol.max(rel_tol * value.abs()) {
        if !value.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
        }
        if splits == max_subdivisions {
            return Err(Error::Quadrature(format!(
                "error estimate {error:.3e} above tolerance after {splits} subdivisions on [{a}, {b}]"
            )));
        }
        let worst = heap.pop().expect("heap holds every live segment");
        let mid = 0.5 * (worst.a + worst.b);
        let left = kronrod21(&mut f, worst.a, mid);
        let right = kronrod21(&mut f, mid, worst.b);
        evaluations += 42;
        splits += 1;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // Resum to keep running totals from drifting after many updates.
        if splits % 64 == 0 {
            value = heap.iter().map(|s| s.value).sum();
            error = heap.iter().map(|s| s.error).sum();
        }
    }
    if !value.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
    }
    Ok(Estimate { value, error, evaluations })
}

/// Nodes and weights of the `n`-point Gauss-Laguerre rule for `int_0^inf e^{-x} f(x) dx`.
pub fn gauss_laguerre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut z = 0.0;
    for i in 0..n {
        // Initial guesses from the standard asymptotic spacing.
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
            }
        };
        let mut converged = false;
        for _ in 0..100 {
            let (p, p_prev) = laguerre_pair(n, z);
            let deriv = nf * (p - p_prev) / z;
            let step = p / deriv;
            z -= step;
            if step.abs() <= 1e-14 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(format!("Laguerre root {i} of order {n} did not converge")));
        }
        let (p, p_prev) = laguerre_pair(n, z);
        let deriv = nf * (p - p_prev) / z;
        nodes.push(z);
        // w_i = 1 / (x_i L_n'(x_i)^2)
        weights.push(1.0 / (z * deriv * deriv));
    }
    Ok((nodes, weights))
}

/// `(L_n(x), L_{n-1}(x))` by the three-term recurrence.
fn laguerre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = 1.0 - x;
    if n == 1 {
        return (p1, p0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0 - x) * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Precomputed rule for [`exp_weighted_half_line`].
#[derive(Debug, Clone)]
pub struct HalfLineRule {
    spec: QuadratureSpec,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl HalfLineRule {
    pub fn new(spec: QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        let (nodes, weights) = gauss_laguerre(spec.laguerre_nodes)?;
        Ok(Self { spec, nodes, weights })
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    /// `int_0^inf e^{-x} phi(x) dx` for `phi` bounded on the half line.
    ///
    /// The piece on `(0, 1]` is integrated in `u = ln x` down to
    /// `x = abs_tol * 1e-3`, which resolves layers near the origin. The piece on
    /// `[1, X]` with `X = ln(100 / abs_tol)` is plain adaptive Gauss-Kronrod and
    /// the tail beyond `X` uses Gauss-Laguerre. `X` doubles while the tail is
    /// not negligible.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut phi: F) -> Result<Estimate> {
        let s = &self.spec;
        let eps_x = s.abs_tol * 1e-3;
        let mut f_log = |u: f64| {
            let x = u.exp();
            x * (-x).exp() * phi(x)
        };
        let near = gauss_kronrod(&mut f_log, eps_x.ln(), 0.0, 0.25 * s.abs_tol, s.rel_tol, s.max_subdivisions)?;
        let mut total = near;
        let mut lo = 1.0;
        let mut hi = (100.0 / s.abs_tol).ln().max(2.0);
        loop {
            let mid = gauss_kronrod(
                |x: f64| (-x).exp() * phi(x),
                lo,
                hi,
                0.25 * s.abs_tol,
                s.rel_tol,
                s.max_subdivisions,
            )?;
            total.value += mid.value;
            total.error += mid.error;
            total.evaluations += mid.evaluations;
            let scale = (-hi).exp();
            let tail: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(y, w)| w * phi(hi + y))
                .sum::<f64>()
                * scale;
            if !tail.is_finite() {
                return Err(Error::Quadrature(format!("non-finite tail beyond {hi}")));
            }
            if tail.abs() <= 0.25 * s.abs_tol || hi > 1e4 {
                total.value += tail;
                total.evaluations += self.nodes.len();
                return Ok(total);
            }
            lo = hi;
            hi *= 2.0;
        }
    }
}

/// Convenience wrapper building a [`HalfLineRule`] for a single integral.
pub fn exp_weighted_half_line<F: FnMut(f64) -> f64>(phi: F, spec: &QuadratureSpec) -> Result<Estimate> {
    HalfLineRule::new(*spec)?.integrate(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn kronrod_is_exact_for_low_degree_polynomials() {
        for p in 0..=31 {
            let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
            let mut f = |x: f64| x.powi(p);
            let seg = kronrod21(&mut f, -1.0, 1.0);
            assert!((seg.value - exact).abs() < 1e-14, "degree {p}");
        }
    }

    #[test]
    fn adaptive_handles_smooth_and_peaked_integrands() {
        let est = gauss_kronrod(f64::sin, 0.0, std::f64::consts::PI, 1e-13, 0.0, 100).unwrap();
        assert!((est.value - 2.0).abs() < 1e-13);
        // Lorentzian peak of width 1e-4.
        let w = 1e-4;
        let est = gauss_kronrod(|x: f64| w / (x * x + w * w), -1.0, 1.0, 1e-12, 0.0, 500).unwrap();
        assert_relative_eq!(est.value, 2.0 * (1.0 / w).atan(), max_relative = 1e-11);
        assert!(gauss_kronrod(|x: f64| 1.0 / x, 0.0, 1.0, 1e-12, 0.0, 20).is_err());
        assert_eq!(gauss_kronrod(f64::exp, 2.0, 2.0, 1e-12, 0.0, 10).unwrap().value, 0.0);
    }

    #[test]
    fn laguerre_rule_integrates_moments() {
        let (x, w) = gauss_laguerre(16).unwrap();
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-13);
        // int e^{-x} x^k = k!
        let mut fact = 1.0;
        for k in 0..=20 {
            if k > 0 {
                fact *= k as f64;
            }
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            assert_relative_eq!(q, fact, max_relative = 1e-10);
        }
        let (x, w) = gauss_laguerre(64).unwrap();
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn half_line_closed_forms() {
        let spec = QuadratureSpec::default();
        let rule = HalfLineRule::new(spec).unwrap();
        // int e^{-x} cos x = 1/2
        assert!((rule.integrate(f64::cos).unwrap().value - 0.5).abs() < 1e-11);
        // int e^{-x} e^{-a x} = 1/(1+a)
        for a in [0.0, 0.3, 50.0] {
            let v = rule.integrate(|x: f64| (-a * x).exp()).unwrap().value;
            assert!((v - 1.0 / (1.0 + a)).abs() < 1e-11);
        }
        // Sharp layer at the origin: int e^{-x} x/(x+b) = 1 - b e^b E1(b), b tiny.
        let b: f64 = 1e-7;
        let e1 = -0.577_215_664_901_532_9 - b.ln() + b;
        let v = rule.integrate(|x: f64| x / (x + b)).unwrap().value;
        assert!((v - (1.0 - b * b.exp() * e1)).abs() < 1e-11);
    }

    #[test]
    fn spec_validation() {
        let bad = [
            QuadratureSpec { abs_tol: 0.0, ..Default::default() },
            QuadratureSpec { rel_tol: -1.0, ..Default::default() },
            QuadratureSpec { max_subdivisions: 0, ..Default::default() },
            QuadratureSpec { laguerre_nodes: 4, ..Default::default() },
        ];
        for s in bad {
            assert!(s.validate().is_err());
        }
    }

    proptest! {
        #[test]
        fn half_line_rational(a in 0.01f64..20.0, b in 1e-6f64..10.0) {
            // phi(x) = exp(-a x / (x + b)) lies between e^{-a} and 1.
            let rule = HalfLineRule::new(QuadratureSpec::default()).unwrap();
            let v = rule.integrate(|x: f64| (-a * x / (x + b)).exp()).unwrap().value;
            prop_assert!(v <= 1.0 + 1e-12 && v >= (-a).exp() - 1e-12);
        }
    }
}
