"""Periodic-box geometry, staggered sign tables, and momentum grids.

Sites live in the box [-L+1, L]^d on the torus of side 2L. Arrays are indexed
by the flat grid index of the wrapped coordinate u = x mod 2L (row major, last
axis fastest), which is also the FFT layout. Public axis arguments are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "LatticeSpec",
    "site_coordinates",
    "site_index",
    "reduce_site",
    "stagger_sign",
    "stagger_signs",
    "period4",
    "PERIOD4_TABLES",
    "momentum_grid",
    "momentum_values",
    "momentum_index",
    "special_momentum",
    "special_momentum_index",
]

# Period-4 integer sequences used by the staggered quadratic forms, tabulated
# on residues 0, 1, 2, 3.
PERIOD4_TABLES = {
    "f0": np.array([1, 1, -1, -1]),
    "f1": np.array([-1, 1, 1, -1]),  # f1(x) = f0(x - 1)
    "g0": np.array([1, 0, -1, 0]),
    "g1": np.array([0, 1, 0, -1]),  # g1(x) = g0(x - 1)
}


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry and regulator of one periodic box.

    d          : spatial dimension, >= 3
    L          : half side; the box is [-L+1, L]^d with side 2L, L even
    epsilon    : screening mass of the regularized Coulomb kernel, > 0
    epsilon_policy : "explicit", or "auto:<c>" meaning epsilon was set to c/L
    """

    d: int
    L: int
    epsilon: float
    epsilon_policy: str = "explicit"

    def __post_init__(self) -> None:
        if not isinstance(self.d, int) or self.d < 3:
            raise ValueError(f"d must be an integer >= 3, got {self.d!r}")
        if not isinstance(self.L, int) or self.L < 2 or self.L % 2:
            raise ValueError(f"L must be an even integer >= 2, got {self.L!r}")
        if not (float(self.epsilon) > 0.0):
            raise ValueError(f"epsilon must be > 0, got {self.epsilon!r}")

    @classmethod
    def auto(cls, d: int, L: int, c: float = 0.5) -> "LatticeSpec":
        """Spec with the default regulator rule epsilon = c/L (c = 0.5)."""
        return cls(d, L, c / L, f"auto:{c:g}")

    @property
    def side(self) -> int:
        return 2 * self.L

    @property
    def n_sites(self) -> int:
        return self.side**self.d

    @property
    def shape(self) -> tuple:
        return (self.side,) * self.d


@lru_cache(maxsize=None)
def _grid_coords(side: int, d: int) -> np.ndarray:
    axes = np.indices((side,) * d)
    return axes.reshape(d, -1).T.copy()  # (N, d), lex order, last axis fastest


def site_coordinates(spec: LatticeSpec) -> np.ndarray:
    """Box coordinates x in [-L+1, L]^d for every site, flat grid order (N, d)."""
    u = _grid_coords(spec.side, spec.d)
    return np.where(u > spec.L, u - spec.side, u)


def reduce_site(spec: LatticeSpec, x) -> np.ndarray:
    """Wrap an integer vector (or array of them) into the box [-L+1, L]^d."""
    x = np.asarray(x)
    return (x + spec.L - 1) % spec.side - (spec.L - 1)


def site_index(spec: LatticeSpec, x) -> np.ndarray:
    """Flat grid index of a site given in box (or any wrapped) coordinates."""
    x = np.asarray(x)
    if x.shape[-1] != spec.d:
        raise ValueError(f"expected {spec.d} coordinates, got shape {x.shape}")
    u = np.mod(x, spec.side)
    idx = u[..., 0]
    for a in range(1, spec.d):
        idx = idx * spec.side + u[..., a]
    return idx


def _check_axis(spec: LatticeSpec, axis: int) -> int:
    if not 1 <= axis <= spec.d:
        raise ValueError(f"axis must be in 1..{spec.d}, got {axis}")
    return axis - 1


def stagger_sign(spec: LatticeSpec, x, axis: int):
    """(-1)^(x_1 + ... + x_d + x_axis), the gauge sign of spin component `axis`."""
    a = _check_axis(spec, axis)
    x = np.asarray(x)
    tot = x.sum(axis=-1) + x[..., a]
    out = 1 - 2 * (np.mod(tot, 2))
    return out if out.ndim else int(out)


@lru_cache(maxsize=None)
def _stagger_table(side: int, d: int) -> np.ndarray:
    u = _grid_coords(side, d)
    tot = u.sum(axis=1)[:, None] + u  # parity of x equals parity of u
    return (1 - 2 * (tot % 2)).astype(np.float64)


def stagger_signs(spec: LatticeSpec) -> np.ndarray:
    """Gauge sign table tau with tau[x, i] = (-1)^(x + x_i), shape (N, d)."""
    return _stagger_table(spec.side, spec.d)


def period4(name: str, x):
    """Evaluate one of the period-4 tables f0, f1, g0, g1 at integer x."""
    try:
        table = PERIOD4_TABLES[name]
    except KeyError:
        raise ValueError(f"unknown period-4 table {name!r}") from None
    return table[np.mod(np.asarray(x), 4)]


def momentum_grid(spec: LatticeSpec) -> np.ndarray:
    """Integer momentum labels m, one row per grid momentum p = pi m / L.

    Shape (N, d), values 0 <= m_a < 2L, lexicographic order (matches the
    site / FFT layout).
    """
    return _grid_coords(spec.side, spec.d)


def momentum_values(spec: LatticeSpec, m=None) -> np.ndarray:
    """Momentum vectors p = pi m / L as floats."""
    if m is None:
        m = momentum_grid(spec)
    return np.asarray(m) * (np.pi / spec.L)


def momentum_index(spec: LatticeSpec, m) -> np.ndarray:
    """Flat index of an integer momentum label (mod 2L per component)."""
    return site_index(spec, np.asarray(m))


def special_momentum(spec: LatticeSpec, axis: int) -> np.ndarray:
    """Label of pi_axis: component `axis` is 0, all others are pi (m = L)."""
    a = _check_axis(spec, axis)
    m = np.full(spec.d, spec.L, dtype=np.int64)
    m[a] = 0
    return m


def special_momentum_index(spec: LatticeSpec, axis: int) -> int:
    return int(momentum_index(spec, special_momentum(spec, axis)))
