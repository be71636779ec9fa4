"""Independent reference computations used by the test-suite.

None of these call into ``exposim``: they rebuild the quantity from first
principles (truncated Taylor series in extended precision, closed forms, fixed
step quadrature) so agreement is meaningful.
"""

import math

import numpy as np
import scipy.linalg


def taylor_expm(A, terms=30):
    """(sum_{k<=terms} (A/2^s)^k / k!)^(2^s) with ||A/2^s||_1 <= 1/4, in long double."""
    A = np.asarray(A, dtype=np.longdouble)
    norm = float(np.max(np.sum(np.abs(A), axis=0))) if A.size else 0.0
    s = max(0, math.ceil(math.log2(norm / 0.25))) if norm > 0.25 else 0
    X = A / np.longdouble(2.0) ** s
    n = A.shape[0]
    E = np.eye(n, dtype=np.longdouble)
    term = np.eye(n, dtype=np.longdouble)
    for k in range(1, terms + 1):
        term = term @ X / k
        E = E + term
    for _ in range(s):
        E = E @ E
    return E.astype(float)


def integrals_closed_form(A, b, x0, dt):
    """First and second time integrals of x' = Ax + b, x(0) = x0, for invertible A."""
    n = A.shape[0]
    eye = np.eye(n)
    E = scipy.linalg.expm(dt * A)
    Ainv = np.linalg.inv(A)
    P1 = Ainv @ (E - eye)  # int_0^dt e^{sA} ds
    P2 = Ainv @ (P1 - dt * eye)  # int_0^dt int_0^s e^{rA} dr ds
    P3 = Ainv @ (P2 - dt * dt / 2 * eye)
    x_int = P1 @ x0 + P2 @ b
    x_int2 = P2 @ x0 + P3 @ b
    return x_int, x_int2


def integrals_quadrature(A, b, x0, dt, n_steps=10_000):
    """Classical RK4 on (x, y, z)' = (Ax + b, x, y) from (x0, 0, 0)."""
    n = A.shape[0]

    def f(w):
        x, y = w[:n], w[n : 2 * n]
        return np.concatenate([A @ x + b, x, y])

    w = np.concatenate([x0, np.zeros(2 * n)])
    h = dt / n_steps
    for _ in range(n_steps):
        k1 = f(w)
        k2 = f(w + h / 2 * k1)
        k3 = f(w + h / 2 * k2)
        k4 = f(w + h * k3)
        w = w + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return w[n : 2 * n], w[2 * n :]


def damped_oscillator(z0, v0, t, m, K, B, g=9.81):
    """Position and velocity of m z'' = -K z - B z' - m g (anchor at z = 0), underdamped."""
    z_eq = -m * g / K
    zeta = B / (2 * math.sqrt(K * m))
    wn = math.sqrt(K / m)
    wd = wn * math.sqrt(1 - zeta * zeta)
    a = z0 - z_eq
    c = (v0 + zeta * wn * a) / wd
    decay = math.exp(-zeta * wn * t)
    z = z_eq + decay * (a * math.cos(wd * t) + c * math.sin(wd * t))
    v = decay * (
        -zeta * wn * (a * math.cos(wd * t) + c * math.sin(wd * t))
        + (-a * wd * math.sin(wd * t) + c * wd * math.cos(wd * t))
    )
    return z, v


def slip_mismatch(initial, K, B, t):
    """Anchor-velocity mismatch e(t) of the scalar law B e' = -K e."""
    return initial * math.exp(-K / B * t)
