"""Closed-form radial references for the concentric-spheres scenario.

For a ball body of radius R with a concentric ball cavity of radius rb,
constant-flux data and a probe at distance P > R from the center, the
screened field is a combination of exp(+-tau s)/s and the outer-boundary
integrals of the probe kernel have elementary closed forms.  Everything is
written in shifted exponentials so values stay representable at large tau.
"""

import numpy as np


def flux_transform_const(tau, T=1.0, value=1.0):
    return value * (1.0 - np.exp(-(tau**2) * T)) / tau**2


def radial_field_coeffs(tau, R, rb, rho, g0):
    """Coefficients (alpha, beta) of w(s) = (a e^{-tau(s-rb)} + b e^{tau(s-R)})/s."""
    q = np.exp(-tau * (R - rb))

    def d_in(s):   # derivative factor of e^{-tau(s-rb)}/s without the exponential
        return -tau / s - 1.0 / s**2

    def d_out(s):  # same for e^{tau(s-R)}/s
        return tau / s - 1.0 / s**2

    A = np.array(
        [
            [q * d_in(R), d_out(R)],
            [
                -d_in(rb) + rho / rb,
                q * (-d_out(rb) + rho / rb),
            ],
        ]
    )
    b = np.array([g0, 0.0])
    return np.linalg.solve(A, b)


def radial_field(tau, R, rb, rho, g0):
    """The radial screened field as a callable of the radius."""
    a, b = radial_field_coeffs(tau, R, rb, rho, g0)

    def w(s):
        s = np.asarray(s, float)
        return (a * np.exp(-tau * (s - rb)) + b * np.exp(tau * (s - R))) / s

    return w


def probe_sphere_integrals(tau, R, P):
    """(value integral, flux integral) of the probe kernel over |y| = R.

    value:  oint exp(-tau|y-p|)/(2 pi |y-p|) dS
    flux:   oint d/dnu_y [same] dS
    for |p| = P > R.
    """
    em = np.exp(-tau * (P - R))
    ep = np.exp(-tau * (P + R))
    q0 = R / (tau * P) * (em - ep)
    q1 = (R * (em + ep) - (em - ep) / tau) / P
    return q0, q1


def main_term_concentric(tau, R=2.0, rb=1.5, P=2.2, rho=0.0, T=1.0, flux=1.0):
    """Closed-form main term for the concentric scenario (float precision).

    Subject to cancellation of order exp(-tau * 2 (R - rb)); keep tau
    moderate (tau <= ~25 for rb = 1.5, R = 2).
    """
    g0 = flux_transform_const(tau, T, flux)
    w = radial_field(tau, R, rb, rho, g0)
    q0, q1 = probe_sphere_integrals(tau, R, P)
    return w(R) * q1 - g0 * q0


def main_term_concentric_exact(tau, R=2.0, rb=1.5, P=2.2, rho=0.0, T=1.0,
                               flux=1.0, dps=50):
    """Same value via mpmath, immune to cancellation; returns a float."""
    import mpmath as mp

    with mp.workdps(dps):
        tau = mp.mpf(tau)
        R_, rb_, P_, rho_, T_ = (mp.mpf(v) for v in (R, rb, P, rho, T))
        g0 = mp.mpf(flux) * (1 - mp.e ** (-(tau**2) * T_)) / tau**2

        def dmat(s, sgn):
            return mp.e ** (sgn * tau * s) * (sgn * tau / s - 1 / s**2)

        A = mp.matrix(
            [
                [dmat(R_, -1), dmat(R_, 1)],
                [
                    -dmat(rb_, -1) + rho_ * mp.e ** (-tau * rb_) / rb_,
                    -dmat(rb_, 1) + rho_ * mp.e ** (tau * rb_) / rb_,
                ],
            ]
        )
        ab = mp.lu_solve(A, mp.matrix([g0, 0]))
        wR = (ab[0] * mp.e ** (-tau * R_) + ab[1] * mp.e ** (tau * R_)) / R_
        em = mp.e ** (-tau * (P_ - R_))
        ep = mp.e ** (-tau * (P_ + R_))
        q0 = R_ / (tau * P_) * (em - ep)
        q1 = (R_ * (em + ep) - (em - ep) / tau) / P_
        return float(wR * q1 - g0 * q0)
