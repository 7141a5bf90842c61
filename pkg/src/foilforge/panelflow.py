"""Hess-Smith panel solver: constant-strength sources per panel plus one
global vortex strength, closed by the Kutta condition, with Karman-Tsien
compressibility correction.

Stands in for a viscous/inviscid code as the built-in Cp generator; the
Reynolds number is carried as a label only (the solution is inviscid and
Re-independent by construction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteResult, PoleProximity, SingularSystem
from .geometry import Airfoil, StationGrid, CANONICAL_GRID, leading_edge_index

PIVOT_TOL = 1e-12
POLE_TOL = 1e-6


@dataclass(frozen=True)
class FlowCondition:
    """Freestream state: angle of attack (degrees), Reynolds number, Mach."""

    aoa: float
    re: float
    mach: float

    def validate(self, sweep: bool = False) -> "FlowCondition":
        if not (math.isfinite(self.aoa) and math.isfinite(self.re) and math.isfinite(self.mach)):
            raise ValueError("non-finite flow condition")
        lo, hi = (0.0, 15.0) if sweep else (-90.0, 90.0)
        if not lo <= self.aoa <= hi:
            raise ValueError(f"aoa {self.aoa} outside [{lo}, {hi}]")
        if not 1e4 <= self.re <= 9e6:
            raise ValueError(f"re {self.re:g} outside [1e4, 9e6]")
        if not 0.0 <= self.mach < 0.7:
            raise ValueError(f"mach {self.mach} outside [0, 0.7)")
        return self

    def key(self) -> str:
        return f"aoa={self.aoa:.6g};re={self.re:.6g}"


@dataclass
class CpDistribution:
    """Surface pressure coefficients sampled on the fixed chordwise stations."""

    stations: StationGrid
    cp_suction: np.ndarray   # (125,)
    cp_pressure: np.ndarray  # (125,)
    cl: float
    condition: FlowCondition

    def validate(self) -> "CpDistribution":
        n = len(self.stations)
        if self.cp_suction.shape != (n,) or self.cp_pressure.shape != (n,):
            raise ValueError("cp arrays must align with the station grid")
        if not (np.all(np.isfinite(self.cp_suction)) and np.all(np.isfinite(self.cp_pressure))
                and math.isfinite(self.cl)):
            raise NonFiniteResult("non-finite Cp distribution")
        return self


@dataclass
class PanelSystem:
    """Geometry cache and influence blocks for one assembled contour."""

    nodes: np.ndarray       # (N+1, 2)
    mid: np.ndarray         # (N, 2) panel midpoints
    length: np.ndarray      # (N,)
    tangent: np.ndarray     # (N, 2)
    normal: np.ndarray      # (N, 2) outward for Selig ordering
    tang_source: np.ndarray  # (N, N) tangential influence of unit sources
    tang_vortex: np.ndarray  # (N, N) tangential influence of the unit vortex sheet
    matrix: np.ndarray = field(repr=False, default=None)  # (N+1, N+1)

    @property
    def n_panels(self) -> int:
        return self.mid.shape[0]

    @property
    def perimeter(self) -> float:
        return float(self.length.sum())


def _influence(nodes: np.ndarray):
    """Velocity influence blocks at panel midpoints, all panels x all panels."""
    d = np.diff(nodes, axis=0)
    length = np.hypot(d[:, 0], d[:, 1])
    if np.any(length <= 0.0):
        raise SingularSystem("zero-length panel")
    cos_t = d[:, 0] / length
    sin_t = d[:, 1] / length
    mid = 0.5 * (nodes[:-1] + nodes[1:])

    # panel-local coordinates of every midpoint i relative to panel j
    dx = mid[:, 0:1] - nodes[None, :-1, 0]
    dy = mid[:, 1:2] - nodes[None, :-1, 1]
    xi = dx * cos_t[None, :] + dy * sin_t[None, :]
    eta = -dx * sin_t[None, :] + dy * cos_t[None, :]
    r1sq = xi**2 + eta**2
    r2sq = (xi - length[None, :]) ** 2 + eta**2

    u_s = np.log(r1sq / r2sq) / (4.0 * np.pi)
    w_s = (np.arctan2(eta, xi - length[None, :]) - np.arctan2(eta, xi)) / (2.0 * np.pi)
    # self-induction: finite limit taken from the flow side of the surface
    idx = np.arange(len(length))
    u_s[idx, idx] = 0.0
    w_s[idx, idx] = -0.5
    # unit vortex sheet is the source field rotated a quarter turn
    u_v = w_s
    w_v = -u_s

    def to_global(u, w):
        vx = u * cos_t[None, :] - w * sin_t[None, :]
        vy = u * sin_t[None, :] + w * cos_t[None, :]
        return vx, vy

    vx_s, vy_s = to_global(u_s, w_s)
    vx_v, vy_v = to_global(u_v, w_v)
    tangent = np.column_stack((cos_t, sin_t))
    normal = np.column_stack((sin_t, -cos_t))
    return mid, length, tangent, normal, (vx_s, vy_s), (vx_v, vy_v)


def assemble_system(airfoil: Airfoil) -> tuple[np.ndarray, PanelSystem]:
    """Influence matrix (N+1 x N+1) enforcing tangency plus the Kutta row."""
    return _assemble(airfoil.points)


def _assemble(points: np.ndarray) -> tuple[np.ndarray, PanelSystem]:
    nodes = np.asarray(points, dtype=np.float64)
    mid, length, tangent, normal, (vx_s, vy_s), (vx_v, vy_v) = _influence(nodes)
    n = len(length)
    a_ns = vx_s * normal[:, 0:1] + vy_s * normal[:, 1:2]
    a_nv = vx_v * normal[:, 0:1] + vy_v * normal[:, 1:2]
    t_s = vx_s * tangent[:, 0:1] + vy_s * tangent[:, 1:2]
    t_v = vx_v * tangent[:, 0:1] + vy_v * tangent[:, 1:2]

    matrix = np.zeros((n + 1, n + 1))
    matrix[:n, :n] = a_ns
    matrix[:n, n] = a_nv.sum(axis=1)
    # Kutta: tangential velocities on the two trailing-edge panels cancel
    matrix[n, :n] = t_s[0] + t_s[n - 1]
    matrix[n, n] = (t_v[0] + t_v[n - 1]).sum()

    sys = PanelSystem(nodes=nodes, mid=mid, length=length, tangent=tangent,
                      normal=normal, tang_source=t_s, tang_vortex=t_v, matrix=matrix)
    return matrix, sys


def lu_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense LU with partial pivoting; raises SingularSystem on a tiny pivot."""
    a = a.astype(np.float64, copy=True)
    b = b.astype(np.float64, copy=True)
    n = len(b)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) < PIVOT_TOL:
            raise SingularSystem(f"pivot {a[p, k]:.3g} below {PIVOT_TOL} at column {k}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        if k + 1 < n:
            m = a[k + 1:, k] / a[k, k]
            a[k + 1:, k + 1:] -= np.outer(m, a[k, k + 1:])
            b[k + 1:] -= m * b[k]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - a[i, i + 1:] @ x[i + 1:]) / a[i, i]
    return x


def karman_tsien(cp0, mach: float):
    """Compressible Cp from incompressible Cp at freestream Mach `mach`."""
    if not 0.0 <= mach < 0.7:
        raise ValueError(f"mach {mach} outside [0, 0.7)")
    if mach == 0.0:
        return cp0
    beta = math.sqrt(1.0 - mach * mach)
    cp0_arr = np.asarray(cp0, dtype=np.float64)
    denom = beta + (mach * mach / (1.0 + beta)) * cp0_arr / 2.0
    # past the pole the mapping flips sign and is meaningless, so reject there too
    if np.any(denom <= POLE_TOL):
        raise PoleProximity(
            f"Karman-Tsien denominator {float(np.min(denom)):.3g} at M={mach}")
    out = cp0_arr / denom
    return float(out) if np.isscalar(cp0) else out


def solve_tangential(points: np.ndarray, aoa: float, kutta: bool = True
                     ) -> tuple[np.ndarray, float, PanelSystem]:
    """Surface tangential velocities and vortex strength for a raw contour.

    With kutta=False the circulation row is replaced by gamma = 0 (test
    hook for non-lifting references such as the circular cylinder).
    """
    matrix, sys = _assemble(points)
    n = sys.n_panels
    alpha = math.radians(aoa)
    vinf = np.array([math.cos(alpha), math.sin(alpha)])
    rhs = np.empty(n + 1)
    rhs[:n] = -(sys.normal @ vinf)
    rhs[n] = -((sys.tangent[0] + sys.tangent[n - 1]) @ vinf)
    if not kutta:
        matrix = matrix.copy()
        matrix[n, :] = 0.0
        matrix[n, n] = 1.0
        rhs[n] = 0.0
    sol = lu_solve(matrix, rhs)
    sigma, gamma = sol[:n], sol[n]
    v_t = (sys.tangent @ vinf) + sys.tang_source @ sigma + sys.tang_vortex.sum(axis=1) * gamma
    return v_t, float(gamma), sys


def solve_cp(airfoil: Airfoil, condition: FlowCondition,
             grid: StationGrid = CANONICAL_GRID,
             freestream_aoa: float | None = None) -> CpDistribution:
    """Cp on both surfaces at the fixed stations, plus Kutta-Joukowski cl.

    `freestream_aoa` overrides the flow direction while `condition` is kept
    verbatim on the output (used by the rotated-airfoil protocol, which
    solves pre-rotated geometry at zero freestream angle).
    """
    aoa = condition.aoa if freestream_aoa is None else freestream_aoa
    v_t, gamma, sys = solve_tangential(airfoil.points, aoa)
    cp0 = 1.0 - v_t**2
    cp = karman_tsien(cp0, condition.mach) if condition.mach > 0.0 else cp0
    cl = 2.0 * gamma * sys.perimeter

    le = leading_edge_index(sys.nodes)
    x_mid = sys.mid[:, 0]

    def station_cp(xs, vals):
        order = np.argsort(xs, kind="stable")
        return np.interp(grid.stations, xs[order], vals[order])

    # panels 0..le-1 lie on the suction surface, le.. on the pressure surface
    cp_suction = station_cp(x_mid[:le], cp[:le])
    cp_pressure = station_cp(x_mid[le:], cp[le:])
    return CpDistribution(stations=grid, cp_suction=cp_suction,
                          cp_pressure=cp_pressure, cl=cl,
                          condition=condition).validate()
