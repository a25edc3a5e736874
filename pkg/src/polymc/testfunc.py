"""Compactly supported test functions and their diffusive lattice sampling.

All supported kinds factor over coordinates, phi(x) = prod_i f(x_i - c_i),
which the analytics exploit heavily.  The lattice sampling convention is
phi_N(x) = phi(x / sqrt(N)) * N^(-d/2) for x in Z^d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_KINDS = ("gaussian", "indicator", "hat")


@dataclass(frozen=True)
class TestFunction:
    """A separable test function on R^d.

    gaussian: exp(-|x-c|^2 / (2 scale^2)), hard-cut at sup-norm radius
        support_radius (default 9*scale, where the dropped tail is below
        1e-17 of the peak, so the closed-form Fourier transform of the
        uncut Gaussian is used as exact).
    indicator: 1 on the sup-norm box of half-width scale (discontinuous;
        must be opted into via allow_discontinuous).
    hat: prod_i max(0, 1 - |x_i - c_i| / scale).
    """

    kind: str
    d: int
    scale: float = 1.0
    center: tuple = None
    support_radius: float | None = None
    allow_discontinuous: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown test-function kind {self.kind!r}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.kind == "indicator" and not self.allow_discontinuous:
            raise ValueError("indicator is not continuous; pass "
                             "allow_discontinuous=True to use it anyway")
        if self.center is None:
            object.__setattr__(self, "center", (0.0,) * self.d)
        if len(self.center) != self.d:
            raise ValueError("center must have d coordinates")
        if self.support_radius is None:
            r = 9.0 * self.scale if self.kind == "gaussian" else self.scale
            object.__setattr__(self, "support_radius", float(r))

    # ---- per-axis profile -------------------------------------------------

    def _profile(self, u: np.ndarray) -> np.ndarray:
        """1-d factor f(u), u already centered."""
        if self.kind == "gaussian":
            out = np.exp(-u * u / (2.0 * self.scale ** 2))
            return np.where(np.abs(u) <= self.support_radius, out, 0.0)
        if self.kind == "indicator":
            return (np.abs(u) <= self.scale).astype(float)
        return np.maximum(0.0, 1.0 - np.abs(u) / self.scale)

    def _profile_hat_sq(self, k: np.ndarray) -> np.ndarray:
        """|f-hat(k)|^2 for the 1-d factor (closed forms)."""
        s = self.scale
        if self.kind == "gaussian":
            return 2.0 * np.pi * s ** 2 * np.exp(-(s * k) ** 2)
        with np.errstate(invalid="ignore", divide="ignore"):
            if self.kind == "indicator":
                v = np.where(k == 0, 2.0 * s, 2.0 * np.sin(s * k) / k)
                return v * v
            v = np.where(k == 0, s,
                         s * (np.sin(s * k / 2.0) / (s * k / 2.0)) ** 2)
        return v * v

    # ---- evaluation -------------------------------------------------------

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        vals = np.ones(len(pts))
        for i in range(self.d):
            vals *= self._profile(pts[:, i] - self.center[i])
        return float(vals[0]) if single else vals

    def norm_inf(self) -> float:
        return 1.0

    def norm_l1(self) -> float:
        s = self.scale
        if self.kind == "gaussian":
            one = s * math.sqrt(2.0 * math.pi) * math.erf(
                self.support_radius / (s * math.sqrt(2.0)))
        elif self.kind == "indicator":
            one = 2.0 * s
        else:
            one = s
        return one ** self.d

    # ---- lattice sampling -------------------------------------------------

    def lattice_radius(self, n_steps: int) -> int:
        """Largest sup-norm lattice radius with phi(x/sqrt(N)) possibly != 0."""
        top = max(abs(c) for c in self.center) + self.support_radius
        return max(0, int(math.floor(top * math.sqrt(n_steps) + 1e-9)))

    def lattice_axis(self, n_steps: int, axis: int,
                     radius: int | None = None) -> np.ndarray:
        """f((x - c_i*sqrt(N))/sqrt(N)) for x = -radius..radius, one axis."""
        if radius is None:
            radius = self.lattice_radius(n_steps)
        x = np.arange(-radius, radius + 1, dtype=float)
        return self._profile(x / math.sqrt(n_steps) - self.center[axis])

    def lattice_values(self, n_steps: int,
                       radius: int | None = None) -> tuple[np.ndarray, int]:
        """(phi_N on the centered box as a (2r+1)^d array, r)."""
        if radius is None:
            radius = self.lattice_radius(n_steps)
        axes = [self.lattice_axis(n_steps, i, radius) for i in range(self.d)]
        grid = axes[0]
        for ax in axes[1:]:
            grid = np.multiply.outer(grid, ax)
        return grid * n_steps ** (-self.d / 2.0), radius


def from_spec(spec: dict, d: int) -> TestFunction:
    """Build from a plain config mapping (kind, scale, center?, ...)."""
    kw = dict(spec)
    if "kind" not in kw:
        raise ValueError("phi spec needs a 'kind' key")
    kind = kw.pop("kind")
    allowed = {"scale", "center", "support_radius", "allow_discontinuous"}
    unknown = set(kw) - allowed
    if unknown:
        raise ValueError(f"unknown phi keys: {sorted(unknown)}")
    if "center" in kw:
        kw["center"] = tuple(float(c) for c in kw["center"])
    return TestFunction(kind=kind, d=d, **kw)
