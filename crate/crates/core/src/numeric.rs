//! Small numeric building blocks shared by the other modules.

use alloc::vec::Vec;
use core::f64::consts::PI;

/// Positive half of the 31-point Gauss-Legendre rule on [-1, 1], node 0 last.
const GL31_NODES: [f64; 16] = [
    9.970_874_818_194_77e-1,
    9.846_859_096_651_525e-1,
    9.625_039_250_929_497e-1,
    9.307_569_978_966_481e-1,
    8.897_600_299_482_711e-1,
    8.399_203_201_462_674e-1,
    7.817_331_484_166_249e-1,
    7.157_767_845_868_532e-1,
    6.427_067_229_242_603e-1,
    5.632_491_614_071_493e-1,
    4.781_937_820_449_025e-1,
    3.883_859_016_082_329_4e-1,
    2.947_180_699_817_016_4e-1,
    1.981_211_993_355_706_2e-1,
    9.955_531_215_234_152e-2,
    0.0,
];
const GL31_WEIGHTS: [f64; 16] = [
    7.470_831_579_248_775_5e-3,
    1.731_862_079_031_058_4e-2,
    2.700_901_918_497_942_3e-2,
    3.643_227_391_238_547e-2,
    4.549_370_752_720_110_4e-2,
    5.410_308_242_491_685_5e-2,
    6.217_478_656_102_843e-2,
    6.962_858_323_541_037e-2,
    7.639_038_659_877_662e-2,
    8.239_299_176_158_926e-2,
    8.757_674_060_847_788e-2,
    9.189_011_389_364_148e-2,
    9.529_024_291_231_951e-2,
    9.774_333_538_632_872e-2,
    9.922_501_122_667_231e-2,
    9.972_054_479_342_646e-2,
];

const fn expand_gl31(half: &[f64; 16], odd: bool) -> [f64; 31] {
    let mut out = [0.0; 31];
    let mut i = 0;
    while i < 16 {
        out[i] = if odd { -half[i] } else { half[i] };
        out[30 - i] = half[i];
        i += 1;
    }
    out
}

pub(crate) const GL31_FULL_NODES: [f64; 31] = expand_gl31(&GL31_NODES, true);
pub(crate) const GL31_FULL_WEIGHTS: [f64; 31] = expand_gl31(&GL31_WEIGHTS, false);

/// Gauss-Legendre nodes and weights on [-1, 1], nodes in increasing order.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        if order == 31 {
            return Self {
                nodes: GL31_FULL_NODES.to_vec(),
                weights: GL31_FULL_WEIGHTS.to_vec(),
            };
        }
        Self::newton(order)
    }

    fn newton(order: usize) -> Self {
        let mut nodes = alloc::vec![0.0; order];
        let mut weights = alloc::vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut x = libm::cos(PI * (i as f64 + 0.75) / (n + 0.5));
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `ln(e^a + e^b)` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

/// `ln(1 - e^x)` for `x <= 0`, accurate near both ends.
#[inline]
pub fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -core::f64::consts::LN_2 {
        libm::log(-libm::expm1(x))
    } else {
        libm::log1p(-libm::exp(x))
    }
}

/// `x^<a> = |x|^a sgn(x)`.
#[inline]
pub fn signed_pow(x: f64, a: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        libm::copysign(libm::pow(x.abs(), a), x)
    }
}

/// Neumaier compensated summation; order of `add` calls fixes the result.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    let mut n = 0usize;
    for v in values {
        acc.add(v);
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        acc.value() / n as f64
    }
}

/// Euclidean dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `ln Γ((d-1)/2)`-style helper: log of the surface area of `S^{m}` in `R^{m+1}`,
/// i.e. `ln(2 π^{(m+1)/2} / Γ((m+1)/2))`.
pub fn ln_sphere_area(m: usize) -> f64 {
    let h = (m as f64 + 1.0) / 2.0;
    core::f64::consts::LN_2 + h * libm::log(PI) - libm::lgamma(h)
}

/// `ln V_m`, the log volume of the unit ball in `R^m`.
pub fn ln_unit_ball_volume(m: usize) -> f64 {
    let h = m as f64 / 2.0;
    h * libm::log(PI) - libm::lgamma(1.0 + h)
}
