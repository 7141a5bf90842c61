"""NACA 4-digit airfoil generation, used for synthetic corpora and oracles."""

from __future__ import annotations

import numpy as np

from .geometry import RawContour, cosine_stations

# classic open-trailing-edge thickness polynomial coefficients
_A = (0.2969, -0.1260, -0.3516, 0.2843, -0.1015)


def thickness_profile(x: np.ndarray, thickness: float) -> np.ndarray:
    """Half-thickness of a NACA 4-digit section at chordwise positions x."""
    x = np.asarray(x, dtype=np.float64)
    return 5.0 * thickness * (_A[0] * np.sqrt(x) + _A[1] * x + _A[2] * x**2
                              + _A[3] * x**3 + _A[4] * x**4)


def camber_line(x: np.ndarray, camber: float, position: float) -> tuple[np.ndarray, np.ndarray]:
    """Camber line y_c(x) and its slope for max camber `camber` at `position`."""
    x = np.asarray(x, dtype=np.float64)
    yc = np.zeros_like(x)
    dyc = np.zeros_like(x)
    if camber > 0.0:
        p = position
        fwd = x < p
        yc[fwd] = camber / p**2 * (2 * p * x[fwd] - x[fwd] ** 2)
        dyc[fwd] = 2 * camber / p**2 * (p - x[fwd])
        aft = ~fwd
        yc[aft] = camber / (1 - p) ** 2 * ((1 - 2 * p) + 2 * p * x[aft] - x[aft] ** 2)
        dyc[aft] = 2 * camber / (1 - p) ** 2 * (p - x[aft])
    return yc, dyc


def naca4(code: str, n_per_surface: int = 160) -> RawContour:
    """Selig-ordered contour of the 4-digit section `code`, e.g. "2412"."""
    if len(code) != 4 or not code.isdigit():
        raise ValueError(f"not a 4-digit NACA code: {code!r}")
    m = int(code[0]) / 100.0
    p = int(code[1]) / 10.0
    t = int(code[2:]) / 100.0
    if m > 0.0 and p == 0.0:
        raise ValueError(f"cambered section {code!r} needs a nonzero position digit")
    x = cosine_stations(n_per_surface)
    yt = thickness_profile(x, t)
    yc, dyc = camber_line(x, m, p)
    theta = np.arctan(dyc)
    xu = x - yt * np.sin(theta)
    yu = yc + yt * np.cos(theta)
    xl = x + yt * np.sin(theta)
    yl = yc - yt * np.cos(theta)
    pts = np.concatenate([
        np.column_stack((xu, yu))[::-1],      # TE -> LE along the suction side
        np.column_stack((xl, yl))[1:],        # LE -> TE along the pressure side
    ])
    return RawContour(name=f"NACA {code}", points=pts)


def corpus_codes(cambers=(0, 1, 2, 3, 4), positions=(2, 3, 4, 5, 6),
                 thicknesses=(10, 12, 15, 18, 21, 24, 30)) -> list[str]:
    """All valid 4-digit codes from the given digit choices (symmetric ones once)."""
    codes = []
    for t in thicknesses:
        codes.append(f"00{t:02d}")
    for m in cambers:
        if m == 0:
            continue
        for p in positions:
            for t in thicknesses:
                codes.append(f"{m}{p}{t:02d}")
    return codes
