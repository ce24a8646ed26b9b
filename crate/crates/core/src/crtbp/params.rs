use serde::{Deserialize, Serialize};

use super::CrtbpError;

/// Collinear libration point selector. L1 sits between the primaries, L2
/// beyond the secondary; they share formulas up to a sign pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LibrationPoint {
    L1,
    L2,
}

/// Mass ratio, libration point, the solved point distance `gamma`, and the
/// gravity expansion order. `gamma` is always the quintic root for
/// `(mu, point)` — it is recomputed on deserialization rather than trusted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct CrtbpParams {
    mu: f64,
    point: LibrationPoint,
    gamma: f64,
    order: u32,
}

impl CrtbpParams {
    pub const DEFAULT_ORDER: u32 = 4;

    pub fn new(mu: f64, point: LibrationPoint) -> Result<Self, CrtbpError> {
        Self::with_order(mu, point, Self::DEFAULT_ORDER)
    }

    pub fn with_order(mu: f64, point: LibrationPoint, order: u32) -> Result<Self, CrtbpError> {
        if order < 2 {
            return Err(CrtbpError::InvalidOrder { order });
        }
        let gamma = solve_euler_quintic(mu, point)?;
        Ok(CrtbpParams {
            mu,
            point,
            gamma,
            order,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn point(&self) -> LibrationPoint {
        self.point
    }

    /// Distance from the libration point to the secondary, in primary
    /// separation units.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Highest solid Legendre degree retained in the expanded gravity.
    pub fn order(&self) -> u32 {
        self.order
    }

    /// x-coordinate of the libration point in barycentric rotating
    /// coordinates.
    pub fn libration_x(&self) -> f64 {
        match self.point {
            LibrationPoint::L1 => 1.0 - self.mu - self.gamma,
            LibrationPoint::L2 => 1.0 - self.mu + self.gamma,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    mu: f64,
    point: LibrationPoint,
    order: u32,
}

impl TryFrom<ParamsRepr> for CrtbpParams {
    type Error = CrtbpError;

    fn try_from(repr: ParamsRepr) -> Result<Self, Self::Error> {
        CrtbpParams::with_order(repr.mu, repr.point, repr.order)
    }
}

impl From<CrtbpParams> for ParamsRepr {
    fn from(p: CrtbpParams) -> Self {
        ParamsRepr {
            mu: p.mu,
            point: p.point,
            order: p.order,
        }
    }
}

/// Ascending coefficients of the collinear-point distance quintic
/// `g^5 - (3-mu) g^4 + (3-2mu) g^3 - mu g^2 + 2 mu g - mu` for L1; the
/// quartic and linear terms flip sign for L2.
fn quintic_coeffs(mu: f64, point: LibrationPoint) -> [f64; 6] {
    let s = match point {
        LibrationPoint::L1 => 1.0,
        LibrationPoint::L2 => -1.0,
    };
    [
        -mu,
        s * 2.0 * mu,
        -mu,
        3.0 - 2.0 * mu,
        -s * (3.0 - mu),
        1.0,
    ]
}

/// The distance from the selected collinear point to the secondary: the
/// unique root of the quintic in (0, 1), found by bisection-safeguarded
/// Newton from the Hill-radius seed `(mu/3)^(1/3)`.
pub fn solve_euler_quintic(mu: f64, point: LibrationPoint) -> Result<f64, CrtbpError> {
    if !mu.is_finite() || mu <= 0.0 || mu >= 0.5 {
        return Err(CrtbpError::InvalidMassRatio { mu });
    }
    let a = quintic_coeffs(mu, point);
    let eval = |g: f64| {
        // Horner for the value and derivative together
        let mut v = a[5];
        let mut d = 0.0;
        for k in (0..5).rev() {
            d = d * g + v;
            v = v * g + a[k];
        }
        (v, d)
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    // f(0) = -mu < 0 and f(1) > 0 for every valid mu; keep that orientation
    if !(eval(lo).0 < 0.0 && eval(hi).0 > 0.0) {
        return Err(CrtbpError::NoRootBracketed);
    }
    let mut g = (mu / 3.0).cbrt().clamp(1e-12, 1.0 - 1e-12);
    for _ in 0..100 {
        let (f, d) = eval(g);
        if f < 0.0 {
            lo = g;
        } else {
            hi = g;
        }
        let newton = g - f / d;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - g).abs() <= f64::EPSILON * g {
            g = next;
            break;
        }
        g = next;
    }
    let residual = eval(g).0.abs();
    if residual > 1e-12 {
        return Err(CrtbpError::QuinticNotConverged { residual });
    }
    Ok(g)
}

/// Gravity expansion coefficients `c_2 .. c_order` (index 0 holds `c_2`):
/// `c_n = gamma^-3 ((±1)^n mu + (-1)^n (1-mu) gamma^(n+1) / (1 ∓ gamma)^(n+1))`
/// with the upper signs for L1 and the lower for L2.
pub fn cn_coefficients(params: &CrtbpParams) -> Vec<f64> {
    cn_series(params.mu, params.gamma, params.point, params.order)
}

pub(crate) fn cn_series(mu: f64, gamma: f64, point: LibrationPoint, order: u32) -> Vec<f64> {
    let g3 = gamma * gamma * gamma;
    let ratio = match point {
        LibrationPoint::L1 => gamma / (1.0 - gamma),
        LibrationPoint::L2 => gamma / (1.0 + gamma),
    };
    (2..=order)
        .map(|n| {
            let parity = if n % 2 == 0 { 1.0 } else { -1.0 };
            let secondary = match point {
                LibrationPoint::L1 => mu,
                LibrationPoint::L2 => parity * mu,
            };
            (secondary + parity * (1.0 - mu) * ratio.powi(n as i32 + 1)) / g3
        })
        .collect()
}
