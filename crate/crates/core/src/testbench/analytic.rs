use serde::{Deserialize, Serialize};

use crate::distributions::special::normal_cdf;

/// Cosine tolerance used to classify linear normals as orthogonal or collinear.
const ANGLE_TOL: f64 = 1e-12;

/// Failure region of an analytic bench.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// aᵀx ≥ b
    Linear { a: Vec<f64>, b: f64 },
    /// ‖x − center‖ ≤ radius
    Sphere { center: Vec<f64>, radius: f64 },
    Union(Vec<Shape>),
    Intersection(Vec<Shape>),
    Constant(bool),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl Shape {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Shape::Linear { a, b } => dot(a, x) >= *b,
            Shape::Sphere { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(p, c)| (p - c) * (p - c)).sum();
                d2 <= radius * radius
            }
            Shape::Union(children) => children.iter().any(|c| c.contains(x)),
            Shape::Intersection(children) => children.iter().all(|c| c.contains(x)),
            Shape::Constant(fails) => *fails,
        }
    }

    /// Exact failure probability under N(0, I), when one is available in closed form.
    pub fn exact_probability(&self) -> Option<f64> {
        match self {
            Shape::Linear { a, b } => Some(normal_cdf(-b / norm(a))),
            Shape::Constant(f) => Some(if *f { 1.0 } else { 0.0 }),
            Shape::Sphere { center, radius } if center.iter().all(|&c| c == 0.0) => {
                Some(chi_square_cdf(center.len(), radius * radius))
            }
            Shape::Sphere { .. } => None,
            Shape::Union(children) => combine_linear(children, true),
            Shape::Intersection(children) => combine_linear(children, false),
        }
    }
}

/// Union (`union = true`) or intersection of half-spaces whose normals are
/// either pairwise orthogonal (independent events) or all collinear (interval
/// arithmetic on one line). Anything else has no closed form here.
fn combine_linear(children: &[Shape], union: bool) -> Option<f64> {
    let halfspaces: Vec<(&[f64], f64)> = children
        .iter()
        .map(|c| match c {
            Shape::Linear { a, b } => Some((a.as_slice(), *b)),
            _ => None,
        })
        .collect::<Option<_>>()?;
    if halfspaces.len() == 1 {
        return children[0].exact_probability();
    }
    let mut cosines = Vec::new();
    for (i, (ai, _)) in halfspaces.iter().enumerate() {
        for (aj, _) in &halfspaces[i + 1..] {
            cosines.push(dot(ai, aj) / (norm(ai) * norm(aj)));
        }
    }
    if cosines.iter().all(|c| c.abs() <= ANGLE_TOL) {
        let probs: Vec<f64> = halfspaces.iter().map(|(a, b)| normal_cdf(-b / norm(a))).collect();
        return Some(if union {
            1.0 - probs.iter().map(|p| 1.0 - p).product::<f64>()
        } else {
            probs.iter().product()
        });
    }
    if cosines.iter().all(|c| (c.abs() - 1.0).abs() <= ANGLE_TOL) {
        // project onto u = a₀/‖a₀‖; each child is t ≥ lo or t ≤ hi
        let u0 = halfspaces[0].0;
        let mut lowers = Vec::new();
        let mut uppers = Vec::new();
        for (a, b) in &halfspaces {
            let n = norm(a);
            if dot(a, u0) > 0.0 {
                lowers.push(b / n);
            } else {
                uppers.push(-b / n);
            }
        }
        let lo = lowers.iter().copied().reduce(if union { f64::min } else { f64::max });
        let hi = uppers.iter().copied().reduce(if union { f64::max } else { f64::min });
        return Some(match (lo, hi, union) {
            (Some(l), None, _) => normal_cdf(-l),
            (None, Some(h), _) => normal_cdf(h),
            (Some(l), Some(h), true) => {
                if h >= l {
                    1.0
                } else {
                    normal_cdf(h) + normal_cdf(-l)
                }
            }
            (Some(l), Some(h), false) => (normal_cdf(h) - normal_cdf(l)).max(0.0),
            (None, None, _) => unreachable!("at least one child"),
        });
    }
    None
}

/// P(χ²_k ≤ s) for the central chi-square, via the finite Poisson series (even
/// k) or erf plus a half-integer series (odd k).
pub fn chi_square_cdf(k: usize, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let h = 0.5 * s;
    if k.is_multiple_of(2) {
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..k / 2 {
            term *= h / j as f64;
            sum += term;
        }
        (1.0 - (-h).exp() * sum).clamp(0.0, 1.0)
    } else {
        // P = erf(√h) − e^{−h} Σ_{j=0}^{m−1} h^{j+1/2} / Γ(j + 3/2)
        let m = (k - 1) / 2;
        let mut term = h.sqrt() / (0.5 * std::f64::consts::PI.sqrt()); // h^{1/2}/Γ(3/2)
        let mut sum = 0.0;
        for j in 0..m {
            sum += term;
            term *= h / (j as f64 + 1.5);
        }
        (libm::erf(h.sqrt()) - (-h).exp() * sum).clamp(0.0, 1.0)
    }
}
