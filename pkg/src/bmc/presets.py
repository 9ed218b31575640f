"""Built-in lattice kernels: drifted walk on Z, (an)isotropic walks on Z^d.

Each preset bundles the kernel with its nearest-neighbor drift pairs (feeding
the closed-form spectral radius), its translation generators, and a short
description used in reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .classify import SymmetrySpec
from .kernel import Kernel, State, lattice_kernel
from .spectral import SpectralEstimate, rho_closed_form_lattice


@dataclass(frozen=True)
class PresetInstance:
    name: str
    params: dict
    kernel: Kernel
    drift: tuple[tuple[float, float], ...]
    symmetry: SymmetrySpec
    description: str

    def closed_form_rho(self) -> SpectralEstimate:
        return rho_closed_form_lattice(self.drift)


def _translations(d: int) -> SymmetrySpec:
    def shift(i: int):
        def gamma(x: State) -> State:
            return tuple(c + (1 if j == i else 0) for j, c in enumerate(x))
        return gamma

    return SymmetrySpec(generators=tuple(shift(i) for i in range(d)),
                        orbit_of=lambda x: 0, orbit_count=1)


def z_drift(p: float) -> PresetInstance:
    """Nearest-neighbor walk on Z with p(x, x+1) = p, p(x, x-1) = 1 - p."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    kernel = lattice_kernel([(1,), (-1,)], [p, 1.0 - p], name=f"z_drift(p={p})")
    return PresetInstance(
        name="z_drift", params={"p": p}, kernel=kernel,
        drift=((p, 1.0 - p),), symmetry=_translations(1),
        description="drifted nearest-neighbor random walk on Z")


def zd_symmetric(d: int) -> PresetInstance:
    """Simple symmetric walk on Z^d: probability 1/(2d) per unit step."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    steps, probs = [], []
    for i in range(d):
        for sign in (1, -1):
            steps.append(tuple(sign if j == i else 0 for j in range(d)))
            probs.append(1.0 / (2 * d))
    kernel = lattice_kernel(steps, probs, name=f"zd_symmetric(d={d})")
    return PresetInstance(
        name="zd_symmetric", params={"d": d}, kernel=kernel,
        drift=tuple((1.0 / (2 * d), 1.0 / (2 * d)) for _ in range(d)),
        symmetry=_translations(d),
        description=f"simple symmetric random walk on Z^{d}")


def zd_anisotropic(d: int, probs: Sequence[float]) -> PresetInstance:
    """Walk on Z^d with per-axis probabilities (p1+, p1-, p2+, p2-, ...)."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if len(probs) != 2 * d:
        raise ValueError(f"need 2*d = {2 * d} probabilities, got {len(probs)}")
    if any(p <= 0 for p in probs):
        raise ValueError("all step probabilities must be positive")
    if abs(sum(probs) - 1.0) > 1e-12:
        raise ValueError(f"step probabilities sum to {sum(probs)!r}, expected 1")
    steps, step_probs = [], []
    drift = []
    for i in range(d):
        pp, pm = probs[2 * i], probs[2 * i + 1]
        drift.append((pp, pm))
        steps.append(tuple(1 if j == i else 0 for j in range(d)))
        step_probs.append(pp)
        steps.append(tuple(-1 if j == i else 0 for j in range(d)))
        step_probs.append(pm)
    kernel = lattice_kernel(steps, step_probs,
                            name=f"zd_anisotropic(d={d})")
    return PresetInstance(
        name="zd_anisotropic", params={"d": d, "probs": list(probs)},
        kernel=kernel, drift=tuple(drift), symmetry=_translations(d),
        description=f"anisotropic nearest-neighbor random walk on Z^{d}")


PRESETS = {
    "z_drift": {
        "builder": z_drift,
        "params": "p (step-right probability in (0,1))",
        "description": "drifted nearest-neighbor random walk on Z",
    },
    "zd_symmetric": {
        "builder": zd_symmetric,
        "params": "d (dimension >= 1)",
        "description": "simple symmetric random walk on Z^d",
    },
    "zd_anisotropic": {
        "builder": zd_anisotropic,
        "params": "d, probs (p1+, p1-, ..., pd+, pd-; must sum to 1)",
        "description": "anisotropic nearest-neighbor random walk on Z^d",
    },
}


def preset(name: str, **params) -> PresetInstance:
    """Look up and build a preset; unknown names and bad params raise ValueError."""
    entry = PRESETS.get(name)
    if entry is None:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    try:
        return entry["builder"](**params)
    except TypeError as exc:
        raise ValueError(f"invalid parameters for preset {name!r}: {exc}") from exc
