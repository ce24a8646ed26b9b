use nalgebra::DMatrix;

use super::CrtbpError;

/// Distances below this to either primary are treated as collisions.
pub const COLLISION_RADIUS: f64 = 1e-8;

fn check_state(state: &[f64]) -> Result<(), CrtbpError> {
    if state.len() != 6 {
        return Err(CrtbpError::DimensionMismatch {
            expected: 6,
            got: state.len(),
        });
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(CrtbpError::NonFinite);
    }
    Ok(())
}

/// Offsets from each primary and the corresponding distances. The primary of
/// mass `1 - mu` sits at `(-mu, 0, 0)`, the secondary of mass `mu` at
/// `(1 - mu, 0, 0)`.
fn primary_offsets(state: &[f64], mu: f64) -> Result<([f64; 3], [f64; 3], f64, f64), CrtbpError> {
    let d1 = [state[0] + mu, state[1], state[2]];
    let d2 = [state[0] - 1.0 + mu, state[1], state[2]];
    let r1 = (d1[0] * d1[0] + d1[1] * d1[1] + d1[2] * d1[2]).sqrt();
    let r2 = (d2[0] * d2[0] + d2[1] * d2[1] + d2[2] * d2[2]).sqrt();
    let r_min = r1.min(r2);
    if r_min < COLLISION_RADIUS {
        return Err(CrtbpError::Collision { distance: r_min });
    }
    Ok((d1, d2, r1, r2))
}

/// Full rotating-frame equations of motion in barycentric units; state is
/// `(x, y, z, vx, vy, vz)`.
pub fn full_rhs(state: &[f64], mu: f64) -> Result<[f64; 6], CrtbpError> {
    check_state(state)?;
    let (d1, d2, r1, r2) = primary_offsets(state, mu)?;
    let q1 = (1.0 - mu) / (r1 * r1 * r1);
    let q2 = mu / (r2 * r2 * r2);
    let [x, y, _z, vx, vy, vz] = [state[0], state[1], state[2], state[3], state[4], state[5]];
    Ok([
        vx,
        vy,
        vz,
        x + 2.0 * vy - q1 * d1[0] - q2 * d2[0],
        y - 2.0 * vx - q1 * d1[1] - q2 * d2[1],
        -q1 * d1[2] - q2 * d2[2],
    ])
}

/// Jacobi constant `2 Omega - v^2` with
/// `Omega = (x^2 + y^2)/2 + (1-mu)/r1 + mu/r2`; the one first integral of
/// the rotating-frame motion, used to audit integration quality.
pub fn jacobi_constant(state: &[f64], mu: f64) -> Result<f64, CrtbpError> {
    check_state(state)?;
    let (_, _, r1, r2) = primary_offsets(state, mu)?;
    let omega = 0.5 * (state[0] * state[0] + state[1] * state[1]) + (1.0 - mu) / r1 + mu / r2;
    let v2 = state[3] * state[3] + state[4] * state[4] + state[5] * state[5];
    Ok(2.0 * omega - v2)
}

/// Jacobian of `full_rhs` with respect to the state, for variational and
/// covariance integrations.
pub fn full_jacobian(state: &[f64], mu: f64) -> Result<DMatrix<f64>, CrtbpError> {
    check_state(state)?;
    let (d1, d2, r1, r2) = primary_offsets(state, mu)?;
    let mut j = DMatrix::zeros(6, 6);
    for i in 0..3 {
        j[(i, 3 + i)] = 1.0;
    }
    // gravity gradient: -(1-mu)(I/r1^3 - 3 d1 d1^T/r1^5) - mu (...) plus the
    // centrifugal diag(1, 1, 0)
    let q1 = (1.0 - mu) / (r1 * r1 * r1);
    let q2 = mu / (r2 * r2 * r2);
    let s1 = 3.0 * (1.0 - mu) / (r1 * r1 * r1 * r1 * r1);
    let s2 = 3.0 * mu / (r2 * r2 * r2 * r2 * r2);
    for a in 0..3 {
        for b in 0..3 {
            let mut v = s1 * d1[a] * d1[b] + s2 * d2[a] * d2[b];
            if a == b {
                v -= q1 + q2;
                if a < 2 {
                    v += 1.0;
                }
            }
            j[(3 + a, b)] = v;
        }
    }
    j[(3, 4)] = 2.0;
    j[(4, 3)] = -2.0;
    Ok(j)
}
