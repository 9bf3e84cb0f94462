"""Scherk surface sinh x sinh z = cos y, its wings, the deformations Xi_theta
and B_tau, and the glued immersion Z scaled to neck size."""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy.special import expit

from src.exceptions import ConvergenceError, DomainError, ParameterWindowError
from src.rotsym import AxisymProfile, chart_curvatures, solve_critical_constants

logger = logging.getLogger(__name__)

# Region tags shared by the mesher, geom and linsolve.
CORE, HWING_P, HWING_M, VWING_P, VWING_M, K_P, K_M, ANNULUS, DISK = range(9)
WING_KINDS = (HWING_P, HWING_M, VWING_P, VWING_M)
REGION_NAMES = {
    CORE: "core", HWING_P: "hwing+", HWING_M: "hwing-", VWING_P: "vwing+",
    VWING_M: "vwing-", K_P: "K+", K_M: "K-", ANNULUS: "A", DISK: "D",
}


# ---------------------------------------------------------------- cutoffs

def _transition(t, order: int = 0):
    """Psi(t) = expit(2t/(1 - t^2)) and its derivatives up to order 4."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    if order == 0:
        out[t >= 1.0] = 1.0
    inside = np.abs(t) < 0.999
    if order == 0:
        edge = (np.abs(t) >= 0.999) & (np.abs(t) < 1.0)
        out[edge] = (t[edge] > 0).astype(float)
    ti = t[inside]
    u = 2.0 * ti / (1.0 - ti * ti)
    s = expit(u)
    if order == 0:
        out[inside] = s
        return out

    def du(k):
        f = float(np.prod(np.arange(1, k + 1)))
        return f / (1.0 - ti) ** (k + 1) - (-1.0) ** k * f / (1.0 + ti) ** (k + 1)

    s1 = s * (1.0 - s)
    u1 = du(1)
    if order == 1:
        out[inside] = s1 * u1
        return out
    s2 = s1 * (1.0 - 2.0 * s)
    u2 = du(2)
    if order == 2:
        out[inside] = s2 * u1 ** 2 + s1 * u2
        return out
    s3 = s1 * (1.0 - 6.0 * s + 6.0 * s * s)
    u3 = du(3)
    if order == 3:
        out[inside] = s3 * u1 ** 3 + 3.0 * s2 * u1 * u2 + s1 * u3
        return out
    if order == 4:
        s4 = s1 * (1.0 - 2.0 * s) * (1.0 - 12.0 * s + 12.0 * s * s)
        u4 = du(4)
        out[inside] = (s4 * u1 ** 4 + 6.0 * s3 * u1 ** 2 * u2
                       + s2 * (3.0 * u2 ** 2 + 4.0 * u1 * u3) + s1 * u4)
        return out
    raise ValueError(f"Derivative order must be 0..4, got {order}")


def psi_cut(a: float, b: float, t, order: int = 0):
    """Cutoff equal to 0 near a and 1 near b; the transition fills the middle third."""
    if a == b:
        raise ValueError(f"psi_cut needs distinct endpoints, got a = b = {a}")
    scale = 6.0 / (b - a)
    L = -3.0 + scale * (np.asarray(t, dtype=float) - a)
    value = _transition(L, order)
    if order:
        value = value * scale ** order
    return value if np.ndim(value) else float(value)


def psi_cut_eps(eps: float, t, order: int = 0):
    """1 on |t| <= eps/3, 0 on |t| >= 2 eps/3."""
    if order == 0:
        return psi_cut(eps, 0.0, t) * psi_cut(-eps, 0.0, t)
    if order == 1:
        return (psi_cut(eps, 0.0, t, 1) * psi_cut(-eps, 0.0, t)
                + psi_cut(eps, 0.0, t) * psi_cut(-eps, 0.0, t, 1))
    raise ValueError(f"psi_cut_eps supports orders 0 and 1, got {order}")


def psi_transition(a: float, b: float, s_val, f0, f1):
    """psi_cut[a,b](s) f1 + psi_cut[b,a](s) f0."""
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    if f0.shape != f1.shape:
        raise ValueError(f"Blended values must agree in shape: {f0.shape} vs {f1.shape}")
    w1 = np.asarray(psi_cut(a, b, s_val))
    w0 = np.asarray(psi_cut(b, a, s_val))
    if f0.ndim > w1.ndim:
        w1 = w1[..., None]
        w0 = w0[..., None]
    return w1 * f1 + w0 * f0


# ---------------------------------------------------------- Scherk surface

def cos_snapped(y):
    """cos y with exact zeros at odd multiples of pi/2."""
    y = np.asarray(y, dtype=float)
    c = np.cos(y)
    half = np.abs(np.mod(y, np.pi) - np.pi / 2) < 1e-13
    return np.where(half, 0.0, c)


def scherk_implicit(p):
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return np.sinh(x) * np.sinh(z) - np.cos(y)


def scherk_gradient(p):
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return np.stack([np.cosh(x) * np.sinh(z), np.sin(y), np.sinh(x) * np.cosh(z)], axis=-1)


def scherk_hessian(p):
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    Hm = np.zeros(p.shape[:-1] + (3, 3))
    Hm[..., 0, 0] = np.sinh(x) * np.sinh(z)
    Hm[..., 2, 2] = np.sinh(x) * np.sinh(z)
    Hm[..., 0, 2] = Hm[..., 2, 0] = np.cosh(x) * np.cosh(z)
    Hm[..., 1, 1] = np.cos(y)
    return Hm


def scherk_normal(p):
    """nu_S = -grad F/|grad F|."""
    g = scherk_gradient(p)
    return -g / np.linalg.norm(g, axis=-1, keepdims=True)


def implicit_mean_curvature(grad, hess):
    """H = div(-grad G/|grad G|) and |A|^2 of a level set, vectorized."""
    norm = np.linalg.norm(grad, axis=-1)
    n = -grad / norm[..., None]
    trace = np.trace(hess, axis1=-2, axis2=-1)
    nHn = np.einsum("...i,...ij,...j->...", n, hess, n)
    H = -(trace - nHn) / norm
    P = np.eye(3) - n[..., :, None] * n[..., None, :]
    shape = P @ hess @ P
    A2 = np.sum(shape * shape, axis=(-2, -1)) / norm ** 2
    return n, H, A2


def scherk_mean_curvature(p):
    """Mean curvature of S from the implicit formula; vanishes on S."""
    return implicit_mean_curvature(scherk_gradient(p), scherk_hessian(p))[1]


def scherk_project(p, tol: float = 1e-12, max_iter: int = 50):
    """Newton correction along grad F onto S."""
    q = np.array(p, dtype=float)
    for _ in range(max_iter):
        F = scherk_implicit(q)
        if np.all(np.abs(F) <= tol):
            return q
        g = scherk_gradient(q)
        q = q - (F / np.sum(g * g, axis=-1))[..., None] * g
    if np.any(np.abs(scherk_implicit(q)) > tol):
        worst = float(np.max(np.abs(scherk_implicit(q))))
        raise ConvergenceError(f"Projection onto S did not converge, max |F| = {worst:.3e}")
    return q


def phi_wing(y, s, a: float):
    """Graph function of a wing over its asymptotic half-plane."""
    c = cos_snapped(y) / np.sinh(a + np.asarray(s, dtype=float))
    return -np.arcsinh(c)


def phi_wing_derivatives(y, s, a: float):
    """phi, phi_y, phi_s, phi_yy, phi_ys, phi_ss."""
    y = np.asarray(y, dtype=float)
    t = a + np.asarray(s, dtype=float)
    sh, ch = np.sinh(t), np.cosh(t)
    cy, sy = cos_snapped(y), np.sin(y)
    c = cy / sh
    q = 1.0 / np.sqrt(1.0 + c * c)
    c_y = -sy / sh
    c_s = -cy * ch / sh ** 2
    c_yy = -cy / sh
    c_ys = sy * ch / sh ** 2
    c_ss = cy * (2.0 * ch ** 2 - sh ** 2) / sh ** 3
    dq = -c * q ** 3  # d/dc of (1 + c^2)^(-1/2)
    phi = -np.arcsinh(c)
    phi_y = -q * c_y
    phi_s = -q * c_s
    phi_yy = -(dq * c_y * c_y + q * c_yy)
    phi_ys = -(dq * c_y * c_s + q * c_ys)
    phi_ss = -(dq * c_s * c_s + q * c_ss)
    return phi, phi_y, phi_s, phi_yy, phi_ys, phi_ss


def wing_point(kind: int, y, s, a: float):
    """Point of S on a wing in its (y, s) chart."""
    y = np.asarray(y, dtype=float)
    t = a + np.asarray(s, dtype=float)
    phi = phi_wing(y, s, a)
    if kind == HWING_P:
        return np.stack([t, y, -phi], axis=-1)
    if kind == HWING_M:
        return np.stack([-t, y, phi], axis=-1)
    if kind == VWING_P:
        return np.stack([-phi, -y, t], axis=-1)
    if kind == VWING_M:
        return np.stack([phi, -y, -t], axis=-1)
    raise ValueError(f"Not a wing kind: {kind}")


def wing_coordinates(kind: int, p, a: float):
    """Inverse of wing_point: (y, s) of an S point on the given wing."""
    p = np.asarray(p, dtype=float)
    if kind == HWING_P:
        return p[..., 1], p[..., 0] - a
    if kind == HWING_M:
        return p[..., 1], -p[..., 0] - a
    if kind == VWING_P:
        return -p[..., 1], p[..., 2] - a
    if kind == VWING_M:
        return -p[..., 1], -p[..., 2] - a
    raise ValueError(f"Not a wing kind: {kind}")


# (axis, sign) carrying t = a + s, the chart y and phi_wing in wing_point
_WING_AXES = {
    HWING_P: ((0, 1.0), (1, 1.0), (2, -1.0)),
    HWING_M: ((0, -1.0), (1, 1.0), (2, 1.0)),
    VWING_P: ((2, 1.0), (1, -1.0), (0, -1.0)),
    VWING_M: ((2, -1.0), (1, -1.0), (0, 1.0)),
}


def wing_point_jet(kind: int, y, s, a: float):
    """wing_point with its (y, s) derivatives: p, p_y, p_s, p_yy, p_ys, p_ss."""
    if kind not in _WING_AXES:
        raise ValueError(f"Not a wing kind: {kind}")
    (ti, tsg), (yi, ysg), (gi, gsg) = _WING_AXES[kind]
    phi = phi_wing_derivatives(y, s, a)
    shape = np.broadcast(np.asarray(y), np.asarray(s), phi[0]).shape
    jet = [np.zeros(shape + (3,)) for _ in range(6)]
    jet[0][..., ti] = tsg * (a + np.asarray(s, dtype=float))
    jet[0][..., yi] = ysg * np.asarray(y, dtype=float)
    jet[1][..., yi] = ysg
    jet[2][..., ti] = tsg
    for k in range(6):
        jet[k][..., gi] = gsg * phi[k]
    return tuple(jet)


def core_s(p, a: float):
    """Negative extension of s into the core, clamped at -3."""
    p = np.asarray(p, dtype=float)
    reach = np.maximum(np.abs(p[..., 0]), np.abs(p[..., 2]))
    return -np.minimum(a - reach, 3.0)


# ------------------------------------------------------------ deformations

def unbalancing_rotation(theta: float, upper: bool) -> np.ndarray:
    """R_theta on the upper (+z) or lower region of the unbalancing map."""
    c, s = np.cos(theta), np.sin(theta)
    if upper:
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def _xi_pieces(theta: float, p):
    p = np.asarray(p, dtype=float)
    z = p[..., 2]
    R = np.where((z >= 0.0)[..., None, None],
                 unbalancing_rotation(theta, True), unbalancing_rotation(theta, False))
    psi = np.asarray(psi_cut(2.0, 1.0, np.abs(z)))
    v = p - np.einsum("...ij,...j->...i", R, p)
    return R, psi, v


def xi_theta(theta: float, p):
    """Unbalancing map: identity on |z| <= 1, rotation by -+theta on +-z >= 2."""
    if theta == 0.0:
        return np.array(p, dtype=float)
    R, psi, v = _xi_pieces(theta, p)
    Rp = np.asarray(p, dtype=float) - v
    return Rp + psi[..., None] * v


def xi_theta_derivatives(theta: float, p):
    """Jacobian (..., 3, 3) and Hessian tensor (..., 3, 3, 3) of xi_theta."""
    p = np.asarray(p, dtype=float)
    z = p[..., 2]
    R, psi, v = _xi_pieces(theta, p)
    I = np.eye(3)
    sgn = np.where(z >= 0.0, 1.0, -1.0)
    dpsi = np.asarray(psi_cut(2.0, 1.0, np.abs(z), 1)) * sgn
    d2psi = np.asarray(psi_cut(2.0, 1.0, np.abs(z), 2))
    grad = np.zeros(p.shape)
    grad[..., 2] = dpsi
    IR = I - R
    J = R + psi[..., None, None] * IR + v[..., :, None] * grad[..., None, :]
    T = (IR[..., :, :, None] * grad[..., None, None, :]
         + IR[..., :, None, :] * grad[..., None, :, None])
    ezz = np.zeros((3, 3))
    ezz[2, 2] = 1.0
    T = T + v[..., :, None, None] * d2psi[..., None, None, None] * ezz
    return J, T


def _cos_minus_one_over(tau: float, y):
    if tau == 0.0:
        return np.zeros_like(y)
    return -2.0 * np.sin(0.5 * tau * y) ** 2 / tau


def _sin_over(tau: float, y):
    if tau == 0.0:
        return np.array(y, dtype=float)
    return np.sin(tau * y) / tau


def b_tau(tau: float, p):
    """Bending map wrapping the y-axis around the circle of radius 1/tau about (-1/tau, 0, 0)."""
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return np.stack([
        x * np.cos(tau * y) + _cos_minus_one_over(tau, y),
        (1.0 + tau * x) * _sin_over(tau, y),
        z,
    ], axis=-1)


def b_tau_derivatives(tau: float, p):
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    c, s = np.cos(tau * y), np.sin(tau * y)
    k = 1.0 + tau * x
    J = np.zeros(p.shape + (3,))
    J[..., 0, 0], J[..., 0, 1] = c, -k * s
    J[..., 1, 0], J[..., 1, 1] = s, k * c
    J[..., 2, 2] = 1.0
    T = np.zeros(p.shape + (3, 3))
    T[..., 0, 0, 1] = T[..., 0, 1, 0] = -tau * s
    T[..., 1, 0, 1] = T[..., 1, 1, 0] = tau * c
    T[..., 0, 1, 1] = -tau * k * c
    T[..., 1, 1, 1] = -tau * k * s
    return J, T


def x_hor(tau: float, sign: int, y, s, a: float):
    """Bent horizontal asymptote: the plane z = 0 in polar form about (-1/tau, 0, 0)."""
    return _x_hor_all(tau, sign, y, s, a)[0]


def _x_hor_all(tau, sign, y, s, a):
    y = np.asarray(y, dtype=float)
    t = a + np.asarray(s, dtype=float)
    sg = float(sign)
    zero = np.zeros(np.broadcast(y, t).shape)
    if tau == 0.0:
        one = np.ones_like(zero)
        X = np.stack([sg * t + zero, y + zero, zero], axis=-1)
        Xs = np.stack([sg * one, zero, zero], axis=-1)
        Xy = np.stack([zero, one, zero], axis=-1)
        Z3 = np.zeros_like(X)
        return X, Xy, Xs, Z3, Z3, Z3
    e = np.exp(sg * tau * t)
    c, sn = np.cos(tau * y), np.sin(tau * y)
    X = np.stack([(e * c - 1.0) / tau, e * sn / tau, zero], axis=-1)
    Xs = np.stack([sg * e * c, sg * e * sn, zero], axis=-1)
    Xy = np.stack([-e * sn, e * c, zero], axis=-1)
    Xss = np.stack([tau * e * c, tau * e * sn, zero], axis=-1)
    Xsy = np.stack([-sg * tau * e * sn, sg * tau * e * c, zero], axis=-1)
    Xyy = np.stack([-tau * e * c, -tau * e * sn, zero], axis=-1)
    return X, Xy, Xs, Xyy, Xsy, Xss


def x_hor_polar(tau: float, sign: int, y, s, a: float):
    """The plane z = 0 in the core's polar chart: b_tau of (+-(a+s), y, 0).

    Radius 1/tau +- (a+s) about (-1/tau, 0, 0), so the horizontal wings continue
    the bent core without a reparametrization across the blend.
    """
    return _x_hor_polar_all(tau, sign, y, s, a)[0]


def _x_hor_polar_all(tau, sign, y, s, a):
    y = np.asarray(y, dtype=float)
    t = a + np.asarray(s, dtype=float)
    sg = float(sign)
    zero = np.zeros(np.broadcast(y, t).shape)
    yb = y + zero
    x = sg * t + zero
    k = 1.0 + tau * x
    c, sn = np.cos(tau * yb), np.sin(tau * yb)
    e_r = np.stack([c, sn, zero], axis=-1)
    e_t = np.stack([-sn, c, zero], axis=-1)
    X = np.stack([x * c + _cos_minus_one_over(tau, yb), k * _sin_over(tau, yb), zero], axis=-1)
    Xs = sg * e_r
    Xy = k[..., None] * e_t
    Xyy = -tau * k[..., None] * e_r
    Xsy = sg * tau * e_t
    return X, Xy, Xs, Xyy, Xsy, np.zeros_like(X)


def x_ver(theta: float, tau: float, sign: int, y, s, a: float):
    """Bent vertical asymptote on the catenoid meeting {z = 0} at angle pi/2 + theta."""
    return _x_ver_all(theta, tau, sign, y, s, a)[0]


def _x_ver_all(theta, tau, sign, y, s, a):
    y = np.asarray(y, dtype=float)
    t = a + np.asarray(s, dtype=float)
    sg = float(sign)
    st, ct = np.sin(theta), np.cos(theta)
    zero = np.zeros(np.broadcast(y, t).shape)
    if tau == 0.0:
        one = np.ones_like(zero)
        X = np.stack([t * st + zero, y + zero, sg * t * ct + zero], axis=-1)
        Xs = np.stack([st * one, zero, sg * ct * one], axis=-1)
        Xy = np.stack([zero, one, zero], axis=-1)
        Z3 = np.zeros_like(X)
        return X, Xy, Xs, Z3, Z3, Z3
    u = tau * t
    rho = np.cosh(u) + st * np.sinh(u)
    drho = np.sinh(u) + st * np.cosh(u)  # d rho / d(tau t)
    c, sn = np.cos(tau * y), np.sin(tau * y)
    # (rho cos(tau y) - 1)/tau without cancellation
    rho_m1 = (2.0 * np.sinh(0.5 * u) ** 2 + st * np.sinh(u)) / tau
    X = np.stack([rho_m1 * c + _cos_minus_one_over(tau, y), rho * sn / tau, sg * t * ct + zero], axis=-1)
    Xs = np.stack([drho * c, drho * sn, sg * ct + zero], axis=-1)
    Xy = np.stack([-rho * sn, rho * c, zero], axis=-1)
    Xss = np.stack([tau * rho * c, tau * rho * sn, zero], axis=-1)
    Xsy = np.stack([-tau * drho * sn, tau * drho * c, zero], axis=-1)
    Xyy = np.stack([-tau * rho * c, -tau * rho * sn, zero], axis=-1)
    return X, Xy, Xs, Xyy, Xsy, Xss


def _catenoid_normal_jet(theta, tau, sign, y, s, a):
    """Unit normal of the vertical chart (x_ver at -y) and its (y, s) derivatives.

    n = A(u) e_r + B(u) e_z with u = tau (a + s), A = -sign cos(theta)/N, B = rho'/N
    and N = sqrt(cos^2 theta + rho'^2).
    """
    y = np.asarray(y, dtype=float)
    t = a + np.asarray(s, dtype=float)
    st, ct = np.sin(theta), np.cos(theta)
    zero = np.zeros(np.broadcast(y, t).shape)
    u = tau * t + zero
    rho = np.cosh(u) + st * np.sinh(u)
    drho = np.sinh(u) + st * np.cosh(u)
    k = float(sign) * ct
    N = np.sqrt(ct * ct + drho * drho)
    N_u = drho * rho / N
    N_uu = (rho * rho + drho * drho) / N - (drho * rho) ** 2 / N ** 3
    A = -k / N
    A_u = k * N_u / N ** 2
    A_uu = k * (N_uu / N ** 2 - 2.0 * N_u ** 2 / N ** 3)
    B = drho / N
    B_u = rho / N - drho * N_u / N ** 2
    B_uu = drho / N - 2.0 * rho * N_u / N ** 2 - drho * N_uu / N ** 2 + 2.0 * drho * N_u ** 2 / N ** 3
    ang = -tau * y + zero
    e_r = np.stack([np.cos(ang), np.sin(ang), zero], axis=-1)
    e_t = np.stack([-np.sin(ang), np.cos(ang), zero], axis=-1)
    e_z = np.stack([zero, zero, zero + 1.0], axis=-1)
    col = lambda f: f[..., None]
    return (col(A) * e_r + col(B) * e_z,
            -tau * col(A) * e_t,
            tau * (col(A_u) * e_r + col(B_u) * e_z),
            -tau ** 2 * col(A) * e_r,
            -tau ** 2 * col(A_u) * e_t,
            tau ** 2 * (col(A_uu) * e_r + col(B_uu) * e_z))


# ------------------------------------------------------------- symmetries

def scherk_symmetries() -> Dict[str, callable]:
    """Generators of G_S acting on S-space points."""
    def Y(p):
        p = np.asarray(p, dtype=float)
        return np.stack([p[..., 0], -p[..., 1], p[..., 2]], axis=-1)

    def Y_pi(p):
        p = np.asarray(p, dtype=float)
        return np.stack([p[..., 0], 2 * np.pi - p[..., 1], p[..., 2]], axis=-1)

    def Y_hat(p):
        p = np.asarray(p, dtype=float)
        return np.stack([p[..., 0], np.pi - p[..., 1], -p[..., 2]], axis=-1)

    return {"Y": Y, "Y_pi": Y_pi, "Y_hat": Y_hat}


def dihedral_generators(m: int) -> Dict[str, np.ndarray]:
    """Generators of G_m matching Y, Y_pi and Y_hat under the bending."""
    c2, s2 = np.cos(2 * np.pi / m), np.sin(2 * np.pi / m)
    c1, s1 = np.cos(np.pi / m), np.sin(np.pi / m)
    return {
        "Y": np.diag([1.0, -1.0, 1.0]),
        "Y_pi": np.array([[c2, s2, 0.0], [s2, -c2, 0.0], [0.0, 0.0, 1.0]]),
        "Y_hat": np.array([[c1, s1, 0.0], [s1, -c1, 0.0], [0.0, 0.0, -1.0]]),
    }


def dihedral_group(m: int):
    """All 4m elements of G_m as 3x3 matrices, identity first."""
    gens = list(dihedral_generators(m).values())
    elements = [np.eye(3)]
    frontier = [np.eye(3)]
    while frontier:
        nxt = []
        for g in frontier:
            for h in gens:
                prod = h @ g
                if not any(np.allclose(prod, e, atol=1e-12) for e in elements):
                    elements.append(prod)
                    nxt.append(prod)
        frontier = nxt
    if len(elements) != 4 * m:
        raise RuntimeError(f"G_m closure produced {len(elements)} elements, expected {4 * m}")
    return elements


# -------------------------------------------------------------- parameters

@dataclass(frozen=True)
class DeformParams:
    theta: float
    m: int
    tau: float
    a: float
    delta_s: float
    lam: float
    profile: AxisymProfile
    blend: float

    @property
    def r_theta(self) -> float:
        return self.profile.r_theta

    @property
    def depth(self) -> float:
        """D = delta_s / tau."""
        return self.delta_s / self.tau

    @property
    def seam(self) -> float:
        return 5.0 * self.depth

    @property
    def region_width(self) -> float:
        return min(1.0, self.depth)

    @property
    def a_under(self) -> float:
        w = self.region_width
        return max(self.blend, min(-7.0 * np.log(self.lam), self.seam - 2.0 * w))

    def psi_trun(self, s, order: int = 0):
        D = self.depth
        return psi_cut(4.0 * D, 3.0 * D, s, order)

    def psi_hat(self, s):
        return psi_cut(self.seam, self.seam - self.region_width, s)

    def psi_prime(self, s):
        return psi_cut(self.a_under, self.a_under + self.region_width, s)

    def with_theta(self, theta: float) -> "DeformParams":
        return DeformParams.build(theta=theta, m=self.m, a=self.a, delta_s=self.delta_s,
                                  blend_width=self.blend, check=False)

    @staticmethod
    def default_a(m: int, delta_s: float) -> float:
        c = solve_critical_constants()
        D = delta_s * m
        return min(5.0, 0.9 * m * np.log(1.0 / c.r_crit) - 5.0 * D)

    @classmethod
    def build(cls, theta: float, m: int, a: Optional[float] = None, delta_s: float = 0.05,
              delta_theta: float = 0.05, blend_width: Optional[float] = None,
              check: bool = True) -> "DeformParams":
        """Resolve a, lambda and the blend width; check the parameter windows."""
        if m < 3:
            raise ParameterWindowError("m", f"m must be at least 3, got {m}")
        if delta_s <= 0:
            raise ParameterWindowError("delta_s", f"delta_s must be positive, got {delta_s}")
        D = delta_s * m
        if a is None:
            a = cls.default_a(m, delta_s)
        profile = AxisymProfile.for_theta(theta)
        r = profile.r_theta
        lam = r / m
        blend = min(1.0, 3.0 * D) if blend_width is None else float(blend_width)
        params = cls(theta=float(theta), m=int(m), tau=1.0 / m, a=float(a), delta_s=float(delta_s),
                     lam=float(lam), profile=profile, blend=blend)
        if check:
            params.check_windows(delta_theta)
        return params

    def check_windows(self, delta_theta: float = 0.05):
        a, m, D = self.a, self.m, self.depth
        if a <= np.arcsinh(1.0) + 0.05:
            raise ParameterWindowError(
                "wing-disjointness", f"a = {a:.4f} must exceed arcsinh(1) + 0.05 = {np.arcsinh(1.0) + 0.05:.4f}")
        reach = a + 5.0 * D
        outer = self.r_theta * (1.0 + reach / m)
        if outer >= 1.0:
            raise ParameterWindowError(
                "ball-fit", f"horizontal seam radius {outer:.4f} >= 1 (a = {a:.4f}, m = {m}, delta_s = {self.delta_s})")
        height = self.profile.point.tilde_r * reach / m
        if height >= self.profile.point.h:
            raise ParameterWindowError(
                "ball-fit", f"vertical seam height {height:.4f} >= h_theta = {self.profile.point.h:.4f}")
        if abs(self.theta) >= 10.0 * delta_theta:
            raise ParameterWindowError(
                "theta", f"|theta| = {abs(self.theta):.4f} exceeds 10 delta_theta = {10 * delta_theta:.4f}")
        if not 0.0 < self.blend < 3.0 * D + 1e-12:
            raise ParameterWindowError("blend", f"blend width {self.blend} outside (0, 3 delta_s m]")

        if a <= 2.0:
            logger.warning("soft window 'a > 2' violated: a = %.4f", a)
        if abs(self.theta) > delta_theta:
            logger.warning("soft window '|theta| <= delta_theta' violated: theta = %.4f", self.theta)
        if a >= 3.0 * D - 1.0:
            logger.warning("soft window 'a < 3 delta_s m - 1' violated: a = %.4f, 3D - 1 = %.4f", a, 3.0 * D - 1.0)
        if a < 5.0 / 3.0:
            logger.warning("unbalancing transition |z| in (4/3, 5/3) reaches beyond the core (a = %.4f)", a)


# ----------------------------------------------------------- glued immersion

class ScherkImmersion:
    """Z_{theta,tau} followed by the homothety H_{theta,m}."""

    def __init__(self, params: DeformParams):
        self.params = params

    @property
    def shift(self) -> float:
        return 0.0 if self.params.tau == 0.0 else 1.0 / self.params.tau

    def homothety(self, q):
        q = np.array(q, dtype=float)
        q[..., 0] += self.shift
        return self.params.lam * q

    def unscaled_core(self, p):
        return b_tau(self.params.tau, xi_theta(self.params.theta, p))

    def core(self, p):
        return self.homothety(self.unscaled_core(p))

    def core_derivatives(self, p):
        """Jacobian and Hessian tensor of the full core map, including the homothety."""
        P = self.params
        q = xi_theta(P.theta, p)
        Jx, Tx = xi_theta_derivatives(P.theta, p)
        Jb, Tb = b_tau_derivatives(P.tau, q)
        J = P.lam * np.einsum("...jk,...ka->...ja", Jb, Jx)
        T = P.lam * (np.einsum("...jkl,...ka,...lb->...jab", Tb, Jx, Jx)
                     + np.einsum("...jk,...kab->...jab", Jb, Tx))
        return J, T

    def core_geometry(self, p):
        """Exact normal, H and |A|^2 of the image of S under the core map."""
        p = np.asarray(p, dtype=float)
        J, T = self.core_derivatives(p)
        Jinv = np.linalg.inv(J)
        grad = np.einsum("...ka,...k->...a", Jinv, scherk_gradient(p))
        hess_f = scherk_hessian(p) - np.einsum("...j,...jab->...ab", grad, T)
        hess = np.einsum("...ka,...kl,...lb->...ab", Jinv, hess_f, Jinv)
        return implicit_mean_curvature(grad, hess)

    def asymptote_jet(self, kind: int, y, s):
        """Unscaled bent asymptote and its unit normal, each as a (y, s) jet to order two.

        Horizontal wings use the polar chart of the bent core, vertical wings x_ver at -y.
        """
        P = self.params
        y = np.asarray(y, dtype=float)
        if kind in (HWING_P, HWING_M):
            sign = 1 if kind == HWING_P else -1
            X = _x_hor_polar_all(P.tau, sign, y, s, P.a)
            n = np.zeros_like(X[0])
            n[..., 2] = -float(sign)
            zero = np.zeros_like(n)
            return X, (n, zero, zero, zero, zero, zero)
        if kind not in (VWING_P, VWING_M):
            raise ValueError(f"Not a wing kind: {kind}")
        sign = 1 if kind == VWING_P else -1
        X, Xy, Xs, Xyy, Xsy, Xss = _x_ver_all(P.theta, P.tau, sign, -y, s, P.a)
        # chart is evaluated at -y, so odd y-derivatives flip
        return (X, -Xy, Xs, Xyy, -Xsy, Xss), _catenoid_normal_jet(P.theta, P.tau, sign, y, s, P.a)

    def bent_wing(self, kind: int, y, s):
        """Unscaled bent asymptote and its unit normal on the (y, s) chart."""
        X, n = self.asymptote_jet(kind, y, s)
        return X[0], n[0]

    def wing_graph(self, y, s):
        P = self.params
        return P.psi_trun(s) * phi_wing(y, s, P.a)

    def _graph_jet(self, y, s):
        P = self.params
        phi, p_y, p_s, p_yy, p_ys, p_ss = phi_wing_derivatives(y, s, P.a)
        c0, c1, c2 = (np.asarray(P.psi_trun(s, k), dtype=float) for k in range(3))
        return (c0 * phi, c0 * p_y, c1 * phi + c0 * p_s, c0 * p_yy,
                c1 * p_y + c0 * p_ys, c2 * phi + 2.0 * c1 * p_s + c0 * p_ss)

    def unscaled_wing(self, kind: int, y, s):
        P = self.params
        X, n = self.bent_wing(kind, y, s)
        f1 = X + self.wing_graph(y, s)[..., None] * n
        f0 = self.unscaled_core(wing_point(kind, y, s, P.a))
        return psi_transition(0.0, P.blend, s, f0, f1)

    def wing(self, kind: int, y, s):
        return self.homothety(self.unscaled_wing(kind, y, s))

    def wing_jet(self, kind: int, y, s):
        """Scaled wing immersion F and F_y, F_s, F_yy, F_ys, F_ss, composed analytically."""
        P = self.params
        y = np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        X, n = self.asymptote_jet(kind, y, s)
        g = [np.asarray(v)[..., None] for v in self._graph_jet(y, s)]
        f1 = (X[0] + g[0] * n[0],
              X[1] + g[1] * n[0] + g[0] * n[1],
              X[2] + g[2] * n[0] + g[0] * n[2],
              X[3] + g[3] * n[0] + 2.0 * g[1] * n[1] + g[0] * n[3],
              X[4] + g[4] * n[0] + g[1] * n[2] + g[2] * n[1] + g[0] * n[4],
              X[5] + g[5] * n[0] + 2.0 * g[2] * n[2] + g[0] * n[5])
        F1 = [self.homothety(f1[0])] + [P.lam * v for v in f1[1:]]

        p = wing_point_jet(kind, y, s, P.a)
        J, T = self.core_derivatives(p[0])
        d = lambda v: np.einsum("...jk,...k->...j", J, v)
        hess = lambda u, v: np.einsum("...jkl,...k,...l->...j", T, u, v)
        F0 = (self.core(p[0]), d(p[1]), d(p[2]), hess(p[1], p[1]) + d(p[3]),
              hess(p[1], p[2]) + d(p[4]), hess(p[2], p[2]) + d(p[5]))

        w0, w1, w2 = (np.asarray(psi_cut(0.0, P.blend, s, k), dtype=float)[..., None] for k in range(3))
        diff = [b - a for a, b in zip(F0, F1)]
        mix = [w0 * b + (1.0 - w0) * a for a, b in zip(F0, F1)]
        return (mix[0], mix[1], mix[2] + w1 * diff[0], mix[3], mix[4] + w1 * diff[1],
                mix[5] + 2.0 * w1 * diff[2] + w2 * diff[0])

    def project_w(self, kind: int, y, s):
        """Nearest point on the scaled catenoid or plane piece for s >= blend."""
        return self.homothety(self.bent_wing(kind, y, s)[0])

    def wing_geometry(self, kind: int, y, s):
        """Normal, H, |A|^2 of a wing chart."""
        _, Fy, Fs, Fyy, Fys, Fss = self.wing_jet(kind, y, s)
        return chart_curvatures(Fy, Fs, Fyy, Fys, Fss, 1.0)


def z_map(params: DeformParams, region: int, coords):
    """Evaluate the scaled glued immersion on S.

    region CORE takes S points (..., 3); wing regions take (..., 2) arrays of (y, s).
    """
    immersion = ScherkImmersion(params)
    coords = np.asarray(coords, dtype=float)
    if region == CORE:
        return immersion.core(coords)
    if region not in WING_KINDS:
        raise ValueError(f"z_map is defined on the core and the four wings, got region {region}")
    y, s = coords[..., 0], coords[..., 1]
    if np.any(s > params.seam + 1e-12) or np.any(s < 0.0):
        raise DomainError(f"wing coordinate s outside [0, {params.seam:.4f}]")
    return immersion.wing(region, y, s)


def exact_pairing_weight(p) -> np.ndarray:
    """e_x . nu_S, the G_S-symmetric Jacobi field of S."""
    return scherk_normal(p)[..., 0]

