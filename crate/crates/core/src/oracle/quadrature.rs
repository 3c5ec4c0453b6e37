//! One-dimensional quadrature rules: Simpson (fixed and adaptive) and an
//! adaptive 7/15-point Gauss–Kronrod pair for high-accuracy references.

use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};

/// Recursion cap for adaptive Simpson.
const MAX_DEPTH: u32 = 24;
/// Interval budget for global Gauss–Kronrod refinement of one segment.
const MAX_INTERVALS: usize = 4000;
/// Initial uniform split before adaptive refinement, so narrow features
/// inside a long interval are not skipped by the first estimate.
const SEED_PANELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum QuadMethod {
    CompositeSimpson { panels: usize },
    AdaptiveSimpson { tolerance: f64 },
    GaussKronrod { tolerance: f64 },
}

/// How a multivariate integral over trailing coordinates is organised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nesting {
    /// Integrate 𝕍 itself, one coordinate inside the next (innermost = last).
    TensorGrid,
    /// Expand 𝕍 into kernel products and integrate each coordinate separately.
    Factored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub method: QuadMethod,
    pub nesting: Nesting,
}

impl QuadratureRule {
    pub fn adaptive_simpson(tolerance: f64) -> Result<Self> {
        Self { method: QuadMethod::AdaptiveSimpson { tolerance }, nesting: Nesting::Factored }.validated()
    }

    pub fn gauss_kronrod(tolerance: f64) -> Result<Self> {
        Self { method: QuadMethod::GaussKronrod { tolerance }, nesting: Nesting::Factored }.validated()
    }

    pub fn composite(panels: usize) -> Result<Self> {
        Self { method: QuadMethod::CompositeSimpson { panels }, nesting: Nesting::TensorGrid }.validated()
    }

    pub fn nesting(mut self, nesting: Nesting) -> Self {
        self.nesting = nesting;
        self
    }

    pub fn validated(self) -> Result<Self> {
        match self.method {
            QuadMethod::CompositeSimpson { panels } if panels == 0 || panels % 2 != 0 => {
                Err(DppError::InvalidSpec(format!("Simpson panel count must be even and positive, got {panels}")))
            }
            QuadMethod::AdaptiveSimpson { tolerance } | QuadMethod::GaussKronrod { tolerance }
                if !(tolerance > 0.0) =>
            {
                Err(DppError::InvalidSpec(format!("quadrature tolerance must be positive, got {tolerance}")))
            }
            _ => Ok(self),
        }
    }

    /// Same rule with twice the resolution.
    pub fn refined(self) -> Self {
        let method = match self.method {
            QuadMethod::CompositeSimpson { panels } => QuadMethod::CompositeSimpson { panels: 2 * panels },
            QuadMethod::AdaptiveSimpson { tolerance } => QuadMethod::AdaptiveSimpson { tolerance: tolerance / 16.0 },
            QuadMethod::GaussKronrod { tolerance } => QuadMethod::GaussKronrod { tolerance: tolerance / 16.0 },
        };
        Self { method, ..self }
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self { method: QuadMethod::GaussKronrod { tolerance: 1e-13 }, nesting: Nesting::Factored }
    }
}

/// ∫ₐᵇ f, with `breaks` (any order, out-of-range values ignored) splitting the
/// range at known kinks of the integrand.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], method: QuadMethod) -> f64 {
    let knots = segment(a, b, breaks);
    let span = b - a;
    knots
        .windows(2)
        .map(|w| match method {
            QuadMethod::CompositeSimpson { panels } => composite(f, w[0], w[1], panels),
            QuadMethod::AdaptiveSimpson { tolerance } => {
                // share the tolerance in proportion to segment length
                adaptive(f, w[0], w[1], tolerance * (w[1] - w[0]) / span)
            }
            QuadMethod::GaussKronrod { tolerance } => kronrod(f, w[0], w[1], tolerance * (w[1] - w[0]) / span),
        })
        .sum()
}

/// Sorted knot list `a, breaks ∩ (a,b), b`.
pub(crate) fn segment(a: f64, b: f64, breaks: &[f64]) -> Vec<f64> {
    let mut knots = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    knots.extend(inner);
    knots.push(b);
    knots
}

fn composite(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for j in 1..panels {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * j as f64);
    }
    s * h / 3.0
}

fn seeded(a: f64, b: f64, mut panel: impl FnMut(f64, f64) -> f64) -> f64 {
    let h = (b - a) / SEED_PANELS as f64;
    (0..SEED_PANELS)
        .map(|j| {
            let lo = a + h * j as f64;
            let hi = if j + 1 == SEED_PANELS { b } else { lo + h };
            panel(lo, hi)
        })
        .sum()
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    seeded(a, b, |lo, hi| {
        let (flo, fhi, fmid) = (f(lo), f(hi), f(0.5 * (lo + hi)));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        refine(f, lo, hi, flo, fmid, fhi, whole, tol / SEED_PANELS as f64, MAX_DEPTH)
    })
}

#[allow(clippy::too_many_arguments)]
fn refine(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= (15.0 * tol).max(ROUNDOFF * (left.abs() + right.abs())) {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + refine(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Error estimates below this multiple of the integral's magnitude are
/// rounding noise, so refinement stops there whatever the tolerance.
const ROUNDOFF: f64 = 50.0 * f64::EPSILON;

// Kronrod abscissae on [0, 1] (symmetric), largest first; odd entries are
// the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod estimate, |K15 − G7| error estimate, and ∫|f| estimate.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let fc = f(c);
    let (mut k, mut g, mut abs) = (fc * WGK[7], fc * WG[3], fc.abs() * WGK[7]);
    for j in 0..7 {
        let x = h * XGK[j];
        let (f1, f2) = (f(c - x), f(c + x));
        k += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs(), abs * h.abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    abs: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err).is_eq()
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod: always bisect the panel with the largest
/// error estimate until the summed estimate meets `tol` (or rounding noise),
/// with a hard budget so noisy integrands still terminate.
fn kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let panel = |a: f64, b: f64| {
        let (value, err, abs) = gk15(f, a, b);
        Panel { a, b, value, err, abs }
    };
    let h = (b - a) / SEED_PANELS as f64;
    let mut heap: std::collections::BinaryHeap<Panel> = (0..SEED_PANELS)
        .map(|j| {
            let lo = a + h * j as f64;
            panel(lo, if j + 1 == SEED_PANELS { b } else { lo + h })
        })
        .collect();
    let (mut err, mut abs): (f64, f64) = heap.iter().fold((0.0, 0.0), |(e, s), p| (e + p.err, s + p.abs));
    while err > tol.max(ROUNDOFF * abs) && heap.len() < MAX_INTERVALS {
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            heap.push(Panel { err: 0.0, ..worst });
            err -= worst.err;
            continue;
        }
        let (l, r) = (panel(worst.a, m), panel(m, worst.b));
        err += l.err + r.err - worst.err;
        abs += l.abs + r.abs - worst.abs;
        heap.push(l);
        heap.push(r);
    }
    let mut values: Vec<f64> = heap.into_iter().map(|p| p.value).collect();
    values.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    values.iter().sum()
}
