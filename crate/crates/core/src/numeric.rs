//! Small numerical building blocks shared by the other modules.

/// Compensated (Kahan–Babuška/Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

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

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Absolute tolerance used by the adaptive quadrature unless told otherwise.
pub const QUAD_ABS_TOL: f64 = 1e-10;

const MAX_SEGMENTS: usize = 4000;

// 15-point Kronrod abscissae (non-negative half) and weights; the embedded
// 7-point Gauss rule uses the odd-indexed abscissae.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, &x) in XGK.iter().enumerate().take(7) {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
}

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Bisects the panel with the largest error estimate until the summed
/// estimate drops below `abs_tol` or the segment budget is exhausted.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, abs_error: 0.0 };
    }
    if b < a {
        let q = integrate(f, b, a, abs_tol);
        return Quadrature { value: -q.value, abs_error: q.abs_error };
    }
    let (v, e) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v, e)];
    let mut total_err = e;
    while total_err > abs_tol && panels.len() < MAX_SEGMENTS {
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty panel list");
        let (lo, hi, _, err) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Panel cannot be split further in floating point.
            panels.push((lo, hi, gk15(&f, lo, hi).0, 0.0));
            total_err -= err;
            continue;
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        total_err += e1 + e2 - err;
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
    let value: KahanSum = panels.iter().map(|p| p.2).collect();
    let abs_error = panels.iter().map(|p| p.3).sum();
    Quadrature { value: value.value(), abs_error }
}

/// Integrates `f` over `[a, ∞)` through the map `x = a + u / (1 - u)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64) -> Quadrature {
    let g = |u: f64| {
        let one_minus = 1.0 - u;
        let x = a + u / one_minus;
        let y = f(x) / (one_minus * one_minus);
        if y.is_finite() {
            y
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, abs_tol)
}

/// Relative tolerance used when the atoms are not all dyadic rationals.
pub const SPAN_TOL: f64 = 1e-9;

/// Largest `δ > 0` such that every atom is a positive integer multiple of `δ`.
///
/// Dyadic atoms are handled exactly in integer arithmetic; otherwise a
/// floating Euclid with relative tolerance [`SPAN_TOL`] is used. Returns
/// `None` when the atoms are incommensurate (the recovered span would need
/// more than a million lattice steps to reach the largest atom).
pub fn lattice_span(atoms: &[f64]) -> Option<f64> {
    let atoms: Vec<f64> = atoms.iter().copied().filter(|&x| x > 0.0).collect();
    if atoms.is_empty() || atoms.iter().any(|x| !x.is_finite()) {
        return None;
    }
    if let Some(span) = dyadic_span(&atoms) {
        return Some(span);
    }
    let max = atoms.iter().copied().fold(0.0, f64::max);
    let tol = SPAN_TOL * max;
    let mut g = atoms[0];
    for &x in &atoms[1..] {
        let (mut a, mut b) = if x > g { (x, g) } else { (g, x) };
        while b > tol {
            let r = a % b;
            let r = if (b - r) <= tol { 0.0 } else { r };
            a = b;
            b = r;
        }
        g = a;
    }
    if g < 1e-6 * max {
        return None;
    }
    Some(g)
}

fn dyadic_span(atoms: &[f64]) -> Option<f64> {
    const MAX_SHIFT: i32 = 20;
    let mut shift = 0;
    loop {
        let scale = 2f64.powi(shift);
        let all_integral = atoms.iter().all(|&x| {
            let y = x * scale;
            y < 9.0e15 && y.fract() == 0.0
        });
        if all_integral {
            let g = atoms
                .iter()
                .map(|&x| (x * scale) as u64)
                .fold(0u64, gcd_u64);
            return Some(g as f64 / scale);
        }
        shift += 1;
        if shift > MAX_SHIFT {
            return None;
        }
    }
}

fn gcd_u64(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd_u64(b, a % b)
    }
}
