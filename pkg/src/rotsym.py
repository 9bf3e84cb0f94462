"""Axisymmetric building blocks: critical catenoid constants, the latitude
functions, the catenoid family K_theta and the four standard pieces of W_theta."""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Tuple, Callable, Optional

import numpy as np
import pandas as pd
from scipy.optimize import brentq, newton

from src.exceptions import ConvergenceError, DomainError, OutOfFamilyError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CriticalConstants:
    R_crit: float
    z_crit: float
    r_crit: float
    x_crit: float
    theta_min: float
    h_min: float
    area_K: float

    @property
    def t_crit(self) -> float:
        """Conformal height 1/R_crit of the boundary circles."""
        return 1.0 / self.R_crit

    def margins(self) -> Dict[str, float]:
        return {
            "r_crit - exp(-1)": self.r_crit - np.exp(-1.0),
            "x_crit - pi/4": self.x_crit - np.pi / 4,
        }

    def as_dict(self) -> Dict[str, float]:
        return {
            "R_crit": self.R_crit,
            "z_crit": self.z_crit,
            "r_crit": self.r_crit,
            "x_crit": self.x_crit,
            "theta_min": self.theta_min,
            "h_min": self.h_min,
            "area_K": self.area_K,
            "area_K_plus_pi": self.area_K + np.pi,
        }


@dataclass(frozen=True)
class CatenoidFamilyPoint:
    h: float
    theta: float
    tilde_r: float
    tilde_z: float
    r_hat: float

    @property
    def z_theta(self) -> float:
        return self.h


def _coth_root() -> float:
    # t = 1/R solves t = coth t; bracket [1, 1.5]
    g = lambda t: t - 1.0 / np.tanh(t)
    try:
        t0 = brentq(g, 1.0, 1.5, xtol=1e-14)
        t = newton(g, t0, fprime=lambda t: 1.0 + 1.0 / np.sinh(t) ** 2, tol=1e-15, maxiter=20)
    except (RuntimeError, ValueError) as e:
        raise ConvergenceError(f"t = coth t root failed on [1, 1.5]: {str(e)}")
    return float(t)


def _family_values(h):
    h = np.asarray(h, dtype=float)
    tilde_r = h * np.sqrt(1.0 - h * h)
    tilde_z = h - tilde_r * np.arcsinh(np.sqrt(1.0 - h * h) / h)
    ratio = tilde_z / tilde_r
    theta = -np.arctan(np.sinh(ratio))
    with np.errstate(over="ignore"):
        r_hat = tilde_r * np.cosh(ratio)
    return theta, tilde_r, tilde_z, r_hat


@lru_cache(maxsize=1)
def solve_critical_constants() -> CriticalConstants:
    """Solve for the critical catenoid and the end of the catenoid family."""
    t = _coth_root()
    R = 1.0 / t
    z = float(np.sqrt(1.0 - R * R))
    r = z * R
    x = float(np.arcsin(R))

    # h_min: r_hat(h) = 1, r_hat increasing on [z_crit, 1)
    try:
        h_min = brentq(lambda h: float(_family_values(h)[3]) - 1.0, z, 1.0 - 1e-4, xtol=1e-15)
    except ValueError as e:
        raise ConvergenceError(f"r_hat = 1 bracket [{z}, 1) failed: {str(e)}")
    theta_min = float(_family_values(h_min)[0])

    area_K = 2.0 * np.pi * r * (z + 0.5 * r * np.sinh(2.0 * z / r))

    constants = CriticalConstants(
        R_crit=R, z_crit=z, r_crit=r, x_crit=x,
        theta_min=theta_min, h_min=float(h_min), area_K=float(area_K),
    )
    logger.debug("critical constants: %s", constants)
    return constants


def _check_latitude(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) >= np.pi / 2):
        raise DomainError(f"latitude must lie in (-pi/2, pi/2), got max |x| = {np.max(np.abs(x))}")
    return x


def phi_odd(x):
    x = _check_latitude(x)
    return np.sin(x)


def phi_odd_prime(x):
    x = _check_latitude(x)
    return np.cos(x)


def _sec_tan_log(x):
    return np.log((1.0 + np.sin(x)) / np.cos(x))


def phi_even(x):
    """1 - sin x log((1 + sin x)/cos x)."""
    x = _check_latitude(x)
    return 1.0 - np.sin(x) * _sec_tan_log(x)


def phi_even_prime(x):
    x = _check_latitude(x)
    return -np.cos(x) * _sec_tan_log(x) - np.tan(x)


def phi_even_second(x):
    x = _check_latitude(x)
    return np.sin(x) * _sec_tan_log(x) - 1.0 - 1.0 / np.cos(x) ** 2


def phi_robin(x):
    """Combination of phi_even and phi_odd satisfying the Robin condition at x_crit."""
    c = solve_critical_constants()
    return (np.cos(2 * c.x_crit) * phi_even(x)
            - np.cos(c.x_crit) * phi_even_prime(c.x_crit) * phi_odd(x))


def phi_robin_prime(x):
    c = solve_critical_constants()
    return (np.cos(2 * c.x_crit) * phi_even_prime(x)
            - np.cos(c.x_crit) * phi_even_prime(c.x_crit) * phi_odd_prime(x))


def latitude_ode_residual(f, fp, fpp, x):
    """Residual of f'' - tan(x) f' + 2 f = 0."""
    return fpp - np.tan(x) * fp + 2.0 * f


def catenoid_from_h(h: float) -> CatenoidFamilyPoint:
    """Member of the catenoid family meeting the sphere orthogonally at height h."""
    if not 0.0 < h < 1.0:
        raise OutOfFamilyError(f"h must lie in (0, 1), got {h}")
    theta, tilde_r, tilde_z, r_hat = _family_values(h)
    return CatenoidFamilyPoint(
        h=float(h), theta=float(theta), tilde_r=float(tilde_r),
        tilde_z=float(tilde_z), r_hat=float(r_hat),
    )


def family_point_for_theta(theta: float) -> CatenoidFamilyPoint:
    """Invert theta(h) by a monotone root find over h."""
    c = solve_critical_constants()
    if theta >= np.pi / 2 or theta < c.theta_min - 1e-12:
        raise OutOfFamilyError(
            f"theta = {theta} outside the family range ({c.theta_min:.6f}, pi/2)"
        )
    if theta <= c.theta_min:
        return catenoid_from_h(c.h_min)
    if theta == 0.0:
        return catenoid_from_h(c.z_crit)

    g = lambda h: float(_family_values(h)[0]) - theta
    lo, hi = 1e-12, c.h_min
    if g(lo) <= 0.0:
        raise OutOfFamilyError(f"theta = {theta} too close to pi/2 for the h bracket")
    h = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return catenoid_from_h(h)


def r_of_theta(theta: float) -> float:
    """Waist radius r_theta of K_theta."""
    c = solve_critical_constants()
    if theta == 0.0:
        return c.r_crit
    return family_point_for_theta(theta).r_hat


@dataclass(frozen=True)
class AxisymProfile:
    """Profile r = f(z) of K_theta, f(z) = tilde_r cosh((z - tilde_z)/tilde_r)."""

    point: CatenoidFamilyPoint

    @classmethod
    def for_theta(cls, theta: float) -> "AxisymProfile":
        return cls(family_point_for_theta(theta))

    @property
    def r_theta(self) -> float:
        return self.point.r_hat

    @property
    def theta(self) -> float:
        return self.point.theta

    def f(self, z):
        p = self.point
        return p.tilde_r * np.cosh((np.asarray(z) - p.tilde_z) / p.tilde_r)

    def df(self, z):
        p = self.point
        return np.sinh((np.asarray(z) - p.tilde_z) / p.tilde_r)

    def d2f(self, z):
        p = self.point
        return np.cosh((np.asarray(z) - p.tilde_z) / p.tilde_r) / p.tilde_r

    def second_form_norm2(self, z):
        # both principal curvatures have size 1/(tilde_r cosh^2)
        p = self.point
        c = np.cosh((np.asarray(z) - p.tilde_z) / p.tilde_r)
        return 2.0 / (p.tilde_r ** 2 * c ** 4)


def family_table(thetas) -> pd.DataFrame:
    """Table of (theta, r_theta, h) over a grid of angles."""
    rows = []
    for theta in np.asarray(thetas, dtype=float):
        p = family_point_for_theta(float(theta))
        rows.append({"theta": float(theta), "r_theta": p.r_hat, "h": p.h})
    return pd.DataFrame(rows, columns=["theta", "r_theta", "h"])


def chart_curvatures(Xu, Xv, Xuu, Xuv, Xvv, orientation: float = 1.0):
    """Normal, mean curvature (div nu) and |A|^2 from chart derivatives, vectorized over rows."""
    n = np.cross(Xu, Xv) * orientation
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    E = np.sum(Xu * Xu, axis=-1)
    F = np.sum(Xu * Xv, axis=-1)
    G = np.sum(Xv * Xv, axis=-1)
    L = np.sum(Xuu * n, axis=-1)
    M = np.sum(Xuv * n, axis=-1)
    N = np.sum(Xvv * n, axis=-1)
    det = E * G - F * F
    # g^{-1} b
    s11 = (G * L - F * M) / det
    s12 = (G * M - F * N) / det
    s21 = (E * M - F * L) / det
    s22 = (E * N - F * M) / det
    H = -(s11 + s22)
    A2 = s11 * s11 + s12 * s21 + s21 * s12 + s22 * s22
    return n, H, A2


class Chart:
    """Analytic parametrization of a W piece with closed-form derivatives."""

    name = "chart"
    orientation = 1.0

    def __init__(self, profile: AxisymProfile, domain: Tuple[Tuple[float, float], Tuple[float, float]]):
        self.profile = profile
        self.domain = domain

    def derivatives(self, u, v):
        raise NotImplementedError

    def point(self, u, v):
        return self.derivatives(u, v)[0]

    def curvatures(self, u, v):
        X, Xu, Xv, Xuu, Xuv, Xvv = self.derivatives(u, v)
        return chart_curvatures(Xu, Xv, Xuu, Xuv, Xvv, self.orientation)

    def grid(self, nu: int, nv: int):
        (u0, u1), (v0, v1) = self.domain
        u, v = np.meshgrid(np.linspace(u0, u1, nu + 1), np.linspace(v0, v1, nv, endpoint=False), indexing="ij")
        return u.ravel(), v.ravel()


class CatenoidChart(Chart):
    """X_{K+-}(s, y) on [0, z_crit] x S^1, with height z = (h/z_crit) s."""

    def __init__(self, profile: AxisymProfile, sign: int):
        c = solve_critical_constants()
        super().__init__(profile, ((0.0, c.z_crit), (0.0, 2 * np.pi)))
        self.sign = sign
        self.name = "K+" if sign > 0 else "K-"
        self.k = profile.point.h / c.z_crit

    def height(self, s):
        return self.k * np.asarray(s, dtype=float)

    def derivatives(self, s, y):
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        z = self.height(s)
        f = self.profile.f(z)
        fp = self.profile.df(z)
        fpp = self.profile.d2f(z)
        k, sg = self.k, float(self.sign)
        cy, sy = np.cos(y), np.sin(y)
        zero = np.zeros_like(z)
        X = np.stack([f * cy, f * sy, sg * z], axis=-1)
        Xs = k * np.stack([fp * cy, fp * sy, sg * np.ones_like(z)], axis=-1)
        Xy = np.stack([-f * sy, f * cy, zero], axis=-1)
        Xss = k * k * np.stack([fpp * cy, fpp * sy, zero], axis=-1)
        Xsy = k * np.stack([-fp * sy, fp * cy, zero], axis=-1)
        Xyy = np.stack([-f * cy, -f * sy, zero], axis=-1)
        return X, Xs, Xy, Xss, Xsy, Xyy

    def normal(self, s, y):
        # K+ points toward the axis, K- away from it
        return self.curvatures(s, y)[0]


class PolarChart(Chart):
    """Annulus A_theta (normal -e_z) or disk D_theta (normal +e_z) in {z = 0}."""

    def __init__(self, profile: AxisymProfile, kind: str):
        r = profile.r_theta
        domain = ((r, 1.0), (0.0, 2 * np.pi)) if kind == "A" else ((0.0, r), (0.0, 2 * np.pi))
        super().__init__(profile, domain)
        self.name = kind
        self.orientation = -1.0 if kind == "A" else 1.0

    def derivatives(self, rho, y):
        rho = np.asarray(rho, dtype=float)
        y = np.asarray(y, dtype=float)
        cy, sy = np.cos(y), np.sin(y)
        zero = np.zeros_like(rho * cy)
        one = np.ones_like(zero)
        X = np.stack([rho * cy, rho * sy, zero], axis=-1)
        Xr = np.stack([cy * one, sy * one, zero], axis=-1)
        Xy = np.stack([-rho * sy, rho * cy, zero], axis=-1)
        Xrr = np.zeros_like(X)
        Xry = np.stack([-sy * one, cy * one, zero], axis=-1)
        Xyy = np.stack([-rho * cy, -rho * sy, zero], axis=-1)
        return X, Xr, Xy, Xrr, Xry, Xyy

    def normal(self, rho, y):
        rho = np.asarray(rho, dtype=float)
        n = np.zeros(rho.shape + (3,))
        n[..., 2] = self.orientation
        return n


@dataclass
class ChartAtlas:
    theta: float
    profile: AxisymProfile
    charts: Dict[str, Chart]
    identifications: Dict[str, Callable]
    res: Dict[str, Tuple[int, int]] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Chart:
        return self.charts[name]

    def identify(self, name: str, u, v):
        """Chart coordinates on W_theta of the W_0 point with chart coordinates (u, v)."""
        return self.identifications[name](np.asarray(u, dtype=float), np.asarray(v, dtype=float))

    def transport(self, name: str, u, v):
        """F_W: the point of W_theta identified with the W_0 point at (u, v)."""
        uu, vv = self.identify(name, u, v)
        return self.charts[name].point(uu, vv)


def w_pieces(theta: float, res: Optional[Dict[str, Tuple[int, int]]] = None) -> ChartAtlas:
    """Charts of K+_theta, K-_theta, A_theta and D_theta with the identification maps from W_0."""
    c = solve_critical_constants()
    profile = AxisymProfile.for_theta(theta)
    r = profile.r_theta
    res = res or {"K+": (16, 64), "K-": (16, 64), "A": (8, 64), "D": (8, 64)}
    for name, (nu, nv) in res.items():
        if nu < 1 or nv < 3:
            raise ValueError(f"Resolution for {name} must be positive, got {(nu, nv)}")

    charts = {
        "K+": CatenoidChart(profile, +1),
        "K-": CatenoidChart(profile, -1),
        "A": PolarChart(profile, "A"),
        "D": PolarChart(profile, "D"),
    }
    identity = lambda u, v: (u, v)
    scale_a = (1.0 - r) / (1.0 - c.r_crit)
    identifications = {
        "K+": identity,
        "K-": identity,
        "A": lambda rho, v: (r + scale_a * (rho - c.r_crit), v),
        "D": lambda rho, v: ((r / c.r_crit) * rho, v),
    }
    return ChartAtlas(theta=theta, profile=profile, charts=charts,
                      identifications=identifications, res=dict(res))
