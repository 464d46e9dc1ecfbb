//! Local density approximation: Slater-Dirac exchange plus the unpolarized
//! Perdew-Zunger 1981 correlation.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XcKind {
    /// No exchange-correlation term.
    None,
    Exchange,
    #[default]
    Lda,
}

const GAMMA: f64 = -0.1423;
const BETA1: f64 = 1.0529;
const BETA2: f64 = 0.3334;
const A: f64 = 0.0311;
const B: f64 = -0.048;
const C: f64 = 0.0020;
const D: f64 = -0.0116;

/// Correlation energy per electron and potential `(eps_c, v_c)` at Wigner-Seitz radius `rs`.
/// The logarithmic form is used for `rs <= 1`.
pub fn pz81_correlation(rs: f64) -> (f64, f64) {
    if rs <= 1.0 {
        let l = rs.ln();
        let e = A * l + B + C * rs * l + D * rs;
        let v = A * l + (B - A / 3.0) + 2.0 / 3.0 * C * rs * l + (2.0 * D - C) / 3.0 * rs;
        (e, v)
    } else {
        let s = rs.sqrt();
        let den = 1.0 + BETA1 * s + BETA2 * rs;
        let e = GAMMA / den;
        let v = e * (1.0 + 7.0 / 6.0 * BETA1 * s + 4.0 / 3.0 * BETA2 * rs) / den;
        (e, v)
    }
}

/// `(v_xc, eps_xc)` at density `rho`; negative input is treated as zero.
pub fn lda_vxc(rho: f64, kind: XcKind) -> (f64, f64) {
    if !(rho > 0.0) || kind == XcKind::None {
        return (0.0, 0.0);
    }
    let cx = (3.0 / PI).powf(1.0 / 3.0);
    let r13 = rho.cbrt();
    let ex = -0.75 * cx * r13;
    let vx = -cx * r13;
    if kind == XcKind::Exchange {
        return (vx, ex);
    }
    let rs = (3.0 / (4.0 * PI * rho)).cbrt();
    let (ec, vc) = pz81_correlation(rs);
    (vx + vc, ex + ec)
}
