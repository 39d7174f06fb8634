"""Built-in example systems.

Four systems cover the cases the library is exercised against: an exactly
solvable saddle with its resonance on a diagonal line, the same system after
reduction, a bilinear variant, and a three-mode perturbation that is generic
enough to exercise the homological solve and both averaging steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import UsageError
from .fourier import FourierPerturbation
from .poly import PolyField
from .systems import (
    ChannelReport,
    IntegrableSystem,
    ResonanceData,
    SystemBundle,
    verify_channel_assumptions,
)

_INV_2PI = 1.0 / (2.0 * math.pi)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    system: IntegrableSystem
    perturbation: FourierPerturbation
    note: str
    default_epsilon: float = 1e-3

    def bundle(self, epsilon: float | None = None) -> SystemBundle:
        eps = self.default_epsilon if epsilon is None else float(epsilon)
        return SystemBundle(self.system, self.perturbation, eps)


def _moser() -> CatalogEntry:
    h = PolyField.from_terms([(2, 0, 0.5), (0, 2, -0.5)])
    f = FourierPerturbation.from_terms([((1, -1), 0.0, _INV_2PI)])
    res = ResonanceData(
        k=(1, 1),
        a=0.0,
        S=((0.25, -0.25), (1.75, -1.75)),
        S_star=((0.5, -0.5), (1.5, -1.5)),
        varpi=0.5,
    )
    system = IntegrableSystem(h, R=4.0, resonance=res)
    return CatalogEntry(
        name="moser",
        system=system,
        perturbation=f,
        note=(
            "Quadratic saddle with one resonant mode on the diagonal line "
            "I1 + I2 = 0.  The channel orbit has a closed form (linear "
            "actions, quadratic angles), which makes this the primary "
            "integration oracle."
        ),
    )


def _reduced_moser() -> CatalogEntry:
    h = PolyField.from_terms([(1, 1, 1.0), (0, 2, -0.5)])
    f = FourierPerturbation.from_terms([((1, 0), 0.0, _INV_2PI)])
    res = ResonanceData(
        k=(0, 1),
        a=0.0,
        S=((0.25, 0.0), (1.75, 0.0)),
        S_star=((0.5, 0.0), (1.5, 0.0)),
        varpi=0.5,
    )
    system = IntegrableSystem(h, R=2.0, resonance=res)
    return CatalogEntry(
        name="reduced-moser",
        system=system,
        perturbation=f,
        note=(
            "The saddle system after straightening its resonance to I2 = 0. "
            "The perturbation depends on theta1 only, so theta1 is frozen on "
            "the channel and the drift rate is exactly -epsilon cos(2 pi "
            "theta1): drift, connection times and sweep exponents all have "
            "closed forms."
        ),
    )


def _product() -> CatalogEntry:
    h = PolyField.from_terms([(1, 1, 1.0)])
    f = FourierPerturbation.from_terms([((1, 0), 0.0, _INV_2PI)])
    res = ResonanceData(
        k=(0, 1),
        a=0.0,
        S=((0.75, 0.0), (2.25, 0.0)),
        S_star=((1.0, 0.0), (2.0, 0.0)),
        varpi=1.0,
    )
    system = IntegrableSystem(h, R=3.0, resonance=res)
    return CatalogEntry(
        name="product",
        system=system,
        perturbation=f,
        note=(
            "Bilinear kinetic term h = I1 I2; the frequency map swaps the "
            "actions, so the channel I2 = 0 freezes theta1 while theta2 "
            "rotates at the drifting action.  A second closed-form drift "
            "case with a wider transverse margin."
        ),
    )


def _generic3() -> CatalogEntry:
    h = PolyField.from_terms([(1, 1, 1.0), (0, 2, -0.5)])
    f = FourierPerturbation.from_terms(
        [
            ((1, 0), 0.0, _INV_2PI),
            ((0, 1), 0.2, 0.0),
            ((1, 1), 0.3, 0.0),
        ]
    )
    res = ResonanceData(
        k=(0, 1),
        a=0.0,
        S=((0.25, 0.0), (1.75, 0.0)),
        S_star=((0.5, 0.0), (1.5, 0.0)),
        varpi=0.5,
    )
    system = IntegrableSystem(h, R=2.0, resonance=res)
    return CatalogEntry(
        name="generic3",
        system=system,
        perturbation=f,
        note=(
            "Reduced chart with three modes: one resonant and two "
            "oscillating.  The oscillating modes feed the homological solve "
            "and both averaging steps, so this is the system the remainder "
            "and displacement measurements are exercised on."
        ),
    )


_BUILDERS = {
    "moser": _moser,
    "reduced-moser": _reduced_moser,
    "product": _product,
    "generic3": _generic3,
}


def catalog_names() -> list[str]:
    return sorted(_BUILDERS)


def get_entry(name: str) -> CatalogEntry:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        known = ", ".join(catalog_names())
        raise UsageError(f"unknown system {name!r}; catalog has: {known}") from None
    return builder()


def make_bundle(name: str, epsilon: float | None = None) -> SystemBundle:
    return get_entry(name).bundle(epsilon)


def verify_catalog() -> dict[str, ChannelReport]:
    """Channel conditions for every entry; all are expected to pass."""
    return {name: verify_channel_assumptions(get_entry(name).system) for name in catalog_names()}
