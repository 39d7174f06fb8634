"""Resonant averaging, homological solves and measured normal forms.

The averaging step splits a perturbation into its resonant part (modes
constant along the channel flow) and an oscillating part, solves the
homological equation omega . d_theta chi = oscillating part mode by mode, and
conjugates the system by the unit-time flow of epsilon * chi.  Remainders are
never estimated symbolically: they are sampled operationally by composing the
numerical flow with the Hamiltonian and dividing out the expected power of
epsilon.  The second step repeats the construction on the sampled first
remainder after projecting it back onto a finite Fourier/polynomial
representation by least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import chebyshev as ncheb

from .errors import DomainError, FlowEscapeError, SmallDivisorError, WindowFitError
from .fourier import TWO_PI, FourierPerturbation
from .integrate import flow_points, lie_flow
from .poly import PolyField
from .systems import (
    ActionWindow,
    IntegrableSystem,
    SystemBundle,
    star_window,
    verify_channel_assumptions,
)
from .torus import PhaseState


# -- projections -----------------------------------------------------------------


def average_over_theta2(f: FourierPerturbation) -> FourierPerturbation:
    """Angle average along theta2: keep exactly the modes with k2 = 0.

    This is the resonant average in the reduced chart, where the channel flow
    is the theta2 rotation.  The projection is an exact mode filter, so
    applying it twice returns the same mode set (idempotence is structural).
    """
    return f.filter(lambda k: k[1] == 0)


def resonant_average_along_k(f: FourierPerturbation, k, I_star) -> "AngleSeries":
    """Average of f along the k-flow, as a one-variable series on the leaf circle.

    Keeps the modes m with m . k = 0; each is a multiple j of the primitive
    transverse vector m0 = (k2, -k1)/gcd and contributes frequency j to the
    returned series.  Coefficients are evaluated at I_star.  The leaf
    coordinate is normalized so that after reduction it matches theta1, which
    makes derivative magnitudes comparable across charts.
    """
    k1, k2 = int(k[0]), int(k[1])
    if (k1, k2) == (0, 0):
        raise ValueError("resonance wave vector must be nonzero")
    g = math.gcd(abs(k1), abs(k2))
    kp = (k1 // g, k2 // g)
    m0 = (kp[1], -kp[0])
    I1, I2 = float(I_star[0]), float(I_star[1])
    terms: dict[int, tuple[float, float]] = {}
    for m, (a_poly, b_poly) in f.modes.items():
        if m[0] * kp[0] + m[1] * kp[1] != 0:
            continue
        j = m[0] // m0[0] if m0[0] != 0 else m[1] // m0[1]
        a = float(a_poly(I1, I2))
        b = float(b_poly(I1, I2))
        if j < 0:
            j, b = -j, -b
        oa, ob = terms.get(j, (0.0, 0.0))
        terms[j] = (oa + a, ob + b)
    return AngleSeries(terms)


@dataclass(frozen=True)
class AngleSeries:
    """Finite real Fourier series of one angle; frequencies are nonnegative."""

    terms: dict

    def evaluate(self, phi):
        phi = np.asarray(phi, dtype=float)
        total = np.zeros(phi.shape)
        for j, (a, b) in self.terms.items():
            if j == 0:
                total = total + a
            else:
                total = total + a * np.cos(TWO_PI * j * phi) + b * np.sin(TWO_PI * j * phi)
        return total if total.shape else float(total)

    def derivative(self, phi):
        phi = np.asarray(phi, dtype=float)
        total = np.zeros(phi.shape)
        for j, (a, b) in self.terms.items():
            if j != 0:
                w = TWO_PI * j
                total = total + w * (b * np.cos(TWO_PI * j * phi) - a * np.sin(TWO_PI * j * phi))
        return total if total.shape else float(total)

    def max_abs_derivative(self, n_grid: int = 256) -> tuple[float, float]:
        """(grid max of |d/dphi|, maximizing phi)."""
        phi = np.linspace(0.0, 1.0, n_grid, endpoint=False)
        vals = np.abs(self.derivative(phi))
        idx = int(np.argmax(vals))
        return float(vals[idx]), float(phi[idx])

    @property
    def is_zero(self) -> bool:
        return all(a == 0.0 and b == 0.0 for a, b in self.terms.values())


# -- genericity -------------------------------------------------------------------


@dataclass(frozen=True)
class GenericityReport:
    """Measured angular dependence of the resonant average on the channel.

    lam is the safety-scaled grid maximum of |d f_bar / d theta1| over the
    scanned (theta1, I*) grid; theta1_star and i1_star locate the maximizer;
    delta_star is the distance of i1_star to the boundary of S1*.
    """

    lam: float
    theta1_star: float
    i1_star: float
    delta_star: float
    passed: bool
    max_derivative: float
    derivative_at_star: float
    safety: float
    n_theta: int
    n_interior: int

    @property
    def I_star(self) -> tuple[float, float]:
        return (self.i1_star, 0.0)

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "theta1_star": self.theta1_star,
            "i1_star": self.i1_star,
            "delta_star": self.delta_star,
            "passed": self.passed,
            "max_derivative": self.max_derivative,
            "derivative_at_star": self.derivative_at_star,
            "safety": self.safety,
        }


def genericity_check(
    f: FourierPerturbation,
    system: IntegrableSystem,
    n_theta: int = 256,
    n_interior: int = 31,
    safety: float = 0.9,
    threshold: float = 1e-12,
) -> GenericityReport:
    """Scan |d_theta1 f_bar| over theta1 and interior points of S1*.

    Action-independent perturbations are scanned at the single midpoint of
    S1* (their resonant average does not vary along the channel); otherwise
    an interior grid of S1* is swept.  The report fails when the maximum
    falls below the degeneracy threshold, in which case no drift direction
    can be certified.
    """
    if not system.is_reduced:
        raise ValueError("genericity check expects a system in the reduced chart")
    f_bar = average_over_theta2(f)
    d_f_bar = f_bar.partial(d_theta1=1)
    lo, hi = system.resonance.s1_interval(star=True)
    if f.is_action_independent:
        candidates = np.array([0.5 * (lo + hi)])
    else:
        candidates = np.linspace(lo, hi, n_interior + 2)[1:-1]
    theta = np.linspace(0.0, 1.0, n_theta, endpoint=False)
    T, A = np.meshgrid(theta, candidates, indexing="ij")
    vals = np.asarray(d_f_bar(T, 0.0 * T, A, 0.0 * A))
    flat = int(np.argmax(np.abs(vals)))
    it, ia = np.unravel_index(flat, vals.shape)
    max_derivative = float(np.abs(vals[it, ia]))
    i1_star = float(candidates[ia])
    report = GenericityReport(
        lam=safety * max_derivative,
        theta1_star=float(theta[it]),
        i1_star=i1_star,
        delta_star=float(min(i1_star - lo, hi - i1_star)),
        passed=bool(max_derivative >= threshold),
        max_derivative=max_derivative,
        derivative_at_star=float(vals[it, ia]),
        safety=safety,
        n_theta=n_theta,
        n_interior=len(candidates),
    )
    return report


# -- cutoff and homological equation ----------------------------------------------


def choose_cutoff(epsilon: float, kappa: float, varpi: float, f: FourierPerturbation) -> int:
    """Fourier cutoff K = max(ceil(varpi / (2 kappa epsilon)), largest mode of f)."""
    if epsilon <= 0 or kappa <= 0 or varpi <= 0:
        raise ValueError("epsilon, kappa and varpi must be positive")
    return max(math.ceil(varpi / (2.0 * kappa * epsilon)), f.max_mode)


class GeneratorChi:
    """Averaging generator with exact mode-wise evaluation.

    chi(theta, I) = sum_k [nc_k(I) cos(2 pi k.theta) + ns_k(I) sin(2 pi k.theta)]
                    / (2 pi k.omega(I))

    Every stored mode has k2 != 0, sup-norm |k| <= cutoff, and satisfies the
    small-divisor bound |k.omega| >= varpi/2 on the working window (verified
    on a grid at construction).  Values and first derivatives come from the
    quotient rule on polynomial data, so no differencing enters the flows.
    """

    def __init__(
        self,
        system: IntegrableSystem,
        numerators: dict,
        cutoff: int,
        window: ActionWindow,
        guard_grid: tuple[int, int] = (65, 17),
    ):
        self.system = system
        self.cutoff = int(cutoff)
        self.window = window
        self.varpi = system.resonance.varpi
        om1, om2 = system.omega_polys()
        self._terms = {}
        for k, (nc, ns) in sorted(numerators.items()):
            k1, k2 = int(k[0]), int(k[1])
            if k2 == 0:
                raise SmallDivisorError("generator modes must have k2 != 0")
            if max(abs(k1), abs(k2)) > self.cutoff:
                raise SmallDivisorError(f"mode {k} exceeds the cutoff {self.cutoff}")
            D = TWO_PI * (k1 * om1 + k2 * om2)
            self._terms[(k1, k2)] = {
                "nc": nc,
                "ns": ns,
                "nc_d1": nc.partial(1, 0),
                "nc_d2": nc.partial(0, 1),
                "ns_d1": ns.partial(1, 0),
                "ns_d2": ns.partial(0, 1),
                "D": D,
                "D_d1": D.partial(1, 0),
                "D_d2": D.partial(0, 1),
            }
        self._verify_divisors(window, guard_grid)

    # -- structure ---------------------------------------------------------------

    @property
    def mode_keys(self):
        return sorted(self._terms.keys())

    @property
    def n_modes(self) -> int:
        return len(self._terms)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def numerators(self) -> dict:
        return {k: (t["nc"], t["ns"]) for k, t in self._terms.items()}

    def with_window(self, window: ActionWindow, cutoff: int | None = None) -> "GeneratorChi":
        """Same generator re-guarded on a new window (and optional new cutoff)."""
        return GeneratorChi(
            self.system,
            self.numerators(),
            self.cutoff if cutoff is None else cutoff,
            window,
        )

    def _verify_divisors(self, window: ActionWindow, guard_grid):
        if not self._terms:
            return
        I1, I2 = window.grid(*guard_grid)
        A1, A2 = np.meshgrid(I1, I2, indexing="ij")
        floor = self.varpi / 2.0
        for k, t in self._terms.items():
            smallest = float(np.min(np.abs(t["D"](A1, A2)))) / TWO_PI
            if smallest < floor:
                raise SmallDivisorError(
                    f"|k.omega| for mode {k} reaches {smallest:.3e} on the window, "
                    f"below the floor {floor:.3e}"
                )

    # -- evaluation ---------------------------------------------------------------

    def evaluate(self, theta1, theta2, I1, I2):
        theta1 = np.asarray(theta1, dtype=float)
        I1 = np.asarray(I1, dtype=float)
        total = np.zeros(np.broadcast(theta1, I1).shape)
        for (k1, k2), t in self._terms.items():
            phase = TWO_PI * (k1 * theta1 + k2 * np.asarray(theta2, dtype=float))
            num = t["nc"](I1, I2) * np.cos(phase) + t["ns"](I1, I2) * np.sin(phase)
            total = total + num / t["D"](I1, I2)
        return total if total.shape else float(total)

    __call__ = evaluate

    def gradients(self, theta1, theta2, I1, I2):
        """(d chi/d theta, d chi/d I), each stacked with leading axis 2."""
        theta1 = np.asarray(theta1, dtype=float)
        theta2 = np.asarray(theta2, dtype=float)
        I1 = np.asarray(I1, dtype=float)
        I2 = np.asarray(I2, dtype=float)
        shape = np.broadcast(theta1, theta2, I1, I2).shape
        g_theta = np.zeros((2,) + shape)
        g_action = np.zeros((2,) + shape)
        for (k1, k2), t in self._terms.items():
            phase = TWO_PI * (k1 * theta1 + k2 * theta2)
            c = np.cos(phase)
            s = np.sin(phase)
            D = t["D"](I1, I2)
            nc = t["nc"](I1, I2)
            ns = t["ns"](I1, I2)
            swing = (ns * c - nc * s) / D
            g_theta[0] += TWO_PI * k1 * swing
            g_theta[1] += TWO_PI * k2 * swing
            num = nc * c + ns * s
            g_action[0] += (t["nc_d1"](I1, I2) * c + t["ns_d1"](I1, I2) * s) / D - num * t[
                "D_d1"
            ](I1, I2) / D**2
            g_action[1] += (t["nc_d2"](I1, I2) * c + t["ns_d2"](I1, I2) * s) / D - num * t[
                "D_d2"
            ](I1, I2) / D**2
        return g_theta, g_action

    def flow_rhs(self, scale: float) -> Callable:
        """Hamiltonian vector field of scale * chi on flat states."""

        def fun(_t, y):
            g_theta, g_action = self.gradients(y[0], y[1], y[2], y[3])
            if y.ndim == 1:
                return np.array(
                    [
                        scale * g_action[0],
                        scale * g_action[1],
                        -scale * g_theta[0],
                        -scale * g_theta[1],
                    ],
                    dtype=float,
                )
            return np.vstack([scale * g_action, -scale * g_theta])

        return fun

    # -- measured C^1 norm ---------------------------------------------------------

    def _components(self):
        yield lambda *z: np.abs(self.evaluate(*z))

        def grad_component(which, idx):
            def fn(*z):
                g_theta, g_action = self.gradients(*z)
                return np.abs(g_theta[idx] if which == "theta" else g_action[idx])

            return fn

        for idx in (0, 1):
            yield grad_component("theta", idx)
        for idx in (0, 1):
            yield grad_component("action", idx)

    def c1_norm(
        self,
        window: ActionWindow | None = None,
        n_theta: int = 64,
        n_action: tuple[int, int] = (17, 5),
        refine_rounds: int = 25,
    ) -> float:
        """Measured C^1 sup over T^2 x window, sharpened by local refinement.

        A coarse grid locates the maximizer of each component (value and the
        four first derivatives); a shrinking local grid then polishes it so
        the reported sup is not limited by the coarse resolution.
        """
        window = window or self.window
        if self.is_zero:
            return 0.0
        th = np.linspace(0.0, 1.0, n_theta, endpoint=False)
        I1, I2 = window.grid(*n_action)
        T1, T2, A1, A2 = np.meshgrid(th, th, I1, I2, indexing="ij")
        best = 0.0
        spans = np.array(
            [1.0 / n_theta, 1.0 / n_theta,
             (window.i1_max - window.i1_min) / (n_action[0] - 1),
             (window.i2_max - window.i2_min) / max(n_action[1] - 1, 1)]
        )
        for component in self._components():
            vals = component(T1, T2, A1, A2)
            flat = int(np.argmax(vals))
            idx = np.unravel_index(flat, vals.shape)
            center = np.array([T1[idx], T2[idx], A1[idx], A2[idx]])
            radius = spans.copy()
            peak = float(vals[idx])
            for _ in range(refine_rounds):
                axes = []
                for d in range(4):
                    lo = center[d] - radius[d]
                    hi = center[d] + radius[d]
                    if d == 2:
                        lo, hi = max(lo, window.i1_min), min(hi, window.i1_max)
                    if d == 3:
                        lo, hi = max(lo, window.i2_min), min(hi, window.i2_max)
                    axes.append(np.linspace(lo, hi, 5))
                L1, L2, L3, L4 = np.meshgrid(*axes, indexing="ij")
                local = component(L1, L2, L3, L4)
                lflat = int(np.argmax(local))
                lidx = np.unravel_index(lflat, local.shape)
                peak = max(peak, float(local[lidx]))
                center = np.array([L1[lidx], L2[lidx], L3[lidx], L4[lidx]])
                radius *= 0.5
            best = max(best, peak)
        return best


def solve_homological(
    system: IntegrableSystem,
    f: FourierPerturbation,
    cutoff: int,
    window: ActionWindow,
    guard_grid: tuple[int, int] = (65, 17),
) -> GeneratorChi:
    """Solve omega . d_theta chi = oscillating part of f, mode by mode.

    Modes with k2 = 0 belong to the resonant average and contribute nothing;
    every other retained mode k gets the closed-form coefficient pair
    (-b_k, a_k) / (2 pi k.omega(I)).  Small divisors are guarded on the
    window grid at construction of the generator.
    """
    numerators = {}
    for k, (a, b) in f.modes.items():
        if k[1] == 0:
            continue
        if max(abs(k[0]), abs(k[1])) > cutoff:
            continue
        numerators[k] = (-1.0 * b, a)
    return GeneratorChi(system, numerators, cutoff, window, guard_grid)


# -- normal form results ------------------------------------------------------------


@dataclass
class NormalFormResult:
    """Measured data of a one- or two-step resonant normal form.

    phi maps a state through the full averaging transform (step 2 composes
    the two unit-time flows); remainder samples the first remainder f', and
    remainder2 (step 2 only) the second remainder f''.  All sups, residuals
    and displacements are grid measurements recorded at build time.
    """

    steps: int
    epsilon: float
    kappa: float
    gamma: float
    cutoff: int
    f_bar: FourierPerturbation
    chi: GeneratorChi
    window: ActionWindow
    sample_window: ActionWindow
    displacement: float
    displacement_bound: float
    displacement_ok: bool
    homological_residual: float
    sup_remainder: float
    remainder: Callable
    phi: Callable
    phi_points: Callable
    channel: object
    genericity: GenericityReport
    # second step only
    step1: Optional["NormalFormResult"] = None
    chi2: Optional[GeneratorChi] = None
    gamma2: Optional[float] = None
    cutoff2: Optional[int] = None
    f_bar2: Optional[FourierPerturbation] = None
    f_prime_fit: Optional[FourierPerturbation] = None
    fit_residual: Optional[float] = None
    sup_remainder2: Optional[float] = None
    remainder2: Optional[Callable] = None
    quarter_window: Optional[ActionWindow] = None
    meta: dict = field(default_factory=dict)

    def report(self) -> dict:
        out = {
            "steps": self.steps,
            "epsilon": self.epsilon,
            "kappa": self.kappa,
            "gamma": self.gamma,
            "cutoff": self.cutoff,
            "n_generator_modes": self.chi.n_modes,
            "displacement": self.displacement,
            "displacement_bound": self.displacement_bound,
            "displacement_ok": self.displacement_ok,
            "homological_residual": self.homological_residual,
            "sup_remainder": self.sup_remainder,
            "lambda": self.genericity.lam,
            "theta1_star": self.genericity.theta1_star,
            "i1_star": self.genericity.i1_star,
            "delta_star": self.genericity.delta_star,
        }
        if self.steps == 2:
            out.update(
                {
                    "gamma2": self.gamma2,
                    "cutoff2": self.cutoff2,
                    "n_generator_modes2": self.chi2.n_modes,
                    "fit_residual": self.fit_residual,
                    "sup_remainder2": self.sup_remainder2,
                }
            )
        return out


def _require_window_inside(system: IntegrableSystem, window: ActionWindow):
    if window.sup_radius > system.R + 1e-12:
        raise DomainError(
            "averaging window leaves the action domain; epsilon is too large "
            f"(window radius {window.sup_radius:.3g}, R = {system.R:.3g})"
        )


def _displacement_samples(window: ActionWindow, n: int, seed: int = 20240817):
    rng = np.random.default_rng(seed)
    th1 = rng.uniform(0.0, 1.0, n)
    th2 = rng.uniform(0.0, 1.0, n)
    I1 = rng.uniform(window.i1_min, window.i1_max, n)
    I2 = rng.uniform(window.i2_min, window.i2_max, n)
    return th1, th2, I1, I2


def _homological_residual(system, chi, g, window, grid=(16, 8, 65, 17)) -> float:
    """Max of |omega . d_theta chi - g| on a theta-lattice x action grid."""
    n1, n2, m1, m2 = grid
    th1 = np.linspace(0.0, 1.0, n1, endpoint=False)
    th2 = np.linspace(0.0, 1.0, n2, endpoint=False)
    I1, I2 = window.grid(m1, m2)
    T1, T2, A1, A2 = np.meshgrid(th1, th2, I1, I2, indexing="ij")
    if chi.is_zero:
        lhs = np.zeros(T1.shape)
    else:
        g_theta, _ = chi.gradients(T1, T2, A1, A2)
        om = system.omega(A1, A2)
        lhs = om[0] * g_theta[0] + om[1] * g_theta[1]
    rhs = g(T1, T2, A1, A2) if not g.is_zero else np.zeros(T1.shape)
    return float(np.max(np.abs(lhs - rhs)))


def _survey_mesh(window: ActionWindow, grid):
    n1, n2, m1, m2 = grid
    th1 = np.linspace(0.0, 1.0, n1, endpoint=False)
    th2 = np.linspace(0.0, 1.0, n2, endpoint=False)
    I1, I2 = window.grid(m1, m2)
    return np.meshgrid(th1, th2, I1, I2, indexing="ij")


def one_step_normal_form(
    bundle: SystemBundle,
    kappa: float | None = None,
    *,
    displacement_points: int = 200,
    survey_grid: tuple = (32, 32, 9, 5),
    check_grid: tuple = (16, 8, 65, 17),
    flow_tol: float = 1e-12,
    genericity: GenericityReport | None = None,
) -> NormalFormResult:
    """One resonant averaging step with operationally sampled remainder.

    When kappa is not supplied it is bootstrapped from the measured C^1 norm
    of the generator: kappa = max(2 gamma, 1), iterated so the final window
    is consistent with the norm measured on it.  The returned result carries
    the transform, the remainder sampler on the half window, and the measured
    displacement against its budget kappa epsilon / 2.
    """
    system = bundle.system
    f = bundle.perturbation
    eps = bundle.epsilon
    if eps <= 0.0:
        raise ValueError("the averaging step needs epsilon > 0")
    if not system.is_reduced:
        raise ValueError("normal form expects the reduced chart; run the reduction first")
    channel = verify_channel_assumptions(system)
    if not channel.passed:
        raise ValueError("channel conditions fail; the averaging step does not apply")
    res = system.resonance
    varpi = res.varpi
    f_bar = average_over_theta2(f)
    g_osc = f - f_bar

    kappa_fixed = kappa is not None
    kappa_val = float(kappa) if kappa_fixed else 1.0
    gamma = 0.0
    chi = None
    for _ in range(8):
        window = star_window(res, kappa_val * eps)
        _require_window_inside(system, window)
        cutoff = choose_cutoff(eps, kappa_val, varpi, f)
        chi = solve_homological(system, f, cutoff, window)
        gamma = chi.c1_norm(window=window)
        if kappa_fixed:
            break
        kappa_next = max(2.0 * gamma, 1.0)
        if kappa_next <= kappa_val * (1.0 + 1e-6):
            kappa_val = max(kappa_val, kappa_next)
            break
        kappa_val = kappa_next
    else:
        raise FlowEscapeError("kappa bootstrap did not settle in 8 rounds")
    # On exit kappa_val >= 2 * gamma measured on window(kappa_val), so the
    # displacement budget below is covered by the measured norm.
    window = star_window(res, kappa_val * eps)
    _require_window_inside(system, window)
    cutoff = choose_cutoff(eps, kappa_val, varpi, f)
    chi = chi.with_window(window, cutoff)
    half = star_window(res, kappa_val * eps / 2.0)
    bound = kappa_val * eps / 2.0

    def phi_points_fn(th1, th2, I1, I2, direction=1.0):
        return flow_points(
            chi, eps, float(direction), th1, th2, I1, I2,
            rtol=flow_tol, atol=flow_tol, window=window,
        )

    def phi_fn(state: PhaseState, direction: float = 1.0) -> PhaseState:
        return lie_flow(
            chi, eps, float(direction), state,
            rtol=flow_tol, atol=flow_tol, window=window, displacement_bound=bound,
        )

    if chi.is_zero:
        displacement = 0.0
    else:
        th1, th2, I1, I2 = _displacement_samples(half, displacement_points)
        p1, p2, q1, q2 = phi_points_fn(th1, th2, I1, I2)
        displacement = float(
            max(
                np.max(np.abs(p1 - th1)),
                np.max(np.abs(p2 - th2)),
                np.max(np.abs(q1 - I1)),
                np.max(np.abs(q2 - I2)),
            )
        )
    displacement_ok = displacement <= bound * (1.0 + 1e-9)

    def remainder_fn(th1, th2, I1, I2):
        """Sampled first remainder f' = (H o Phi - h - eps f_bar) / eps^2."""
        p1, p2, q1, q2 = phi_points_fn(th1, th2, I1, I2)
        moved = bundle.hamiltonian(p1, p2, q1, q2)
        base = system.h(I1, I2) + eps * f_bar(th1, th2, I1, I2)
        return (moved - base) / eps**2

    T1, T2, A1, A2 = _survey_mesh(half, survey_grid)
    sup_remainder = float(np.max(np.abs(remainder_fn(T1, T2, A1, A2))))
    residual = _homological_residual(system, chi, g_osc, window, check_grid)
    gen = genericity or genericity_check(f, system)

    return NormalFormResult(
        steps=1,
        epsilon=eps,
        kappa=kappa_val,
        gamma=gamma,
        cutoff=cutoff,
        f_bar=f_bar,
        chi=chi,
        window=window,
        sample_window=half,
        displacement=displacement,
        displacement_bound=bound,
        displacement_ok=bool(displacement_ok),
        homological_residual=residual,
        sup_remainder=sup_remainder,
        remainder=remainder_fn,
        phi=phi_fn,
        phi_points=phi_points_fn,
        channel=channel,
        genericity=gen,
    )


def _chebyshev_fit_polyfields(window, I1_nodes, I2_nodes, targets, degrees):
    """Least-squares tensor Chebyshev fit of sampled coefficient tables.

    targets is a (n_targets, n1, n2) stack; the return is a list of PolyField
    objects in the raw action variables, one per target, plus the fit values
    on the nodes for residual accounting.
    """
    d1, d2 = degrees
    c1 = 0.5 * (window.i1_min + window.i1_max)
    h1 = 0.5 * (window.i1_max - window.i1_min)
    c2 = 0.5 * (window.i2_min + window.i2_max)
    h2 = 0.5 * (window.i2_max - window.i2_min) or 1.0
    u = (I1_nodes - c1) / h1
    v = (I2_nodes - c2) / h2
    U, V = np.meshgrid(u, v, indexing="ij")
    B = ncheb.chebvander2d(U.ravel(), V.ravel(), [d1, d2])
    Y = targets.reshape(targets.shape[0], -1).T
    coef, *_ = np.linalg.lstsq(B, Y, rcond=None)
    fit_values = (B @ coef).T.reshape(targets.shape)
    # shared affine map from raw actions to the scaled fit variables
    A = np.array([[1.0 / h1, 0.0], [0.0, 1.0 / h2]])
    b = np.array([-c1 / h1, -c2 / h2])
    polys = []
    for col in range(coef.shape[1]):
        cheb_table = coef[:, col].reshape(d1 + 1, d2 + 1)
        # convert the Chebyshev tensor table to the power basis, one axis at
        # a time
        tmp = np.apply_along_axis(lambda col_: ncheb.cheb2poly(col_), 0, cheb_table)
        tmp = np.apply_along_axis(lambda row_: ncheb.cheb2poly(row_), 1, tmp)
        polys.append(PolyField(tmp).compose_affine(A, b))
    return polys, fit_values


def two_step_normal_form(
    bundle: SystemBundle,
    step1: NormalFormResult | None = None,
    *,
    theta_grid: int = 128,
    i_grid: tuple[int, int] = (17, 9),
    fit_degrees: tuple[int, int] = (12, 4),
    cutoff2: int = 64,
    mode_threshold: float = 1e-10,
    residual_budget: float = 1e-6,
    survey_grid: tuple = (32, 32, 7, 3),
    displacement_points: int = 200,
    flow_tol: float = 1e-12,
) -> NormalFormResult:
    """Second averaging step on the sampled first remainder.

    The first remainder is sampled on a theta x action grid over the half
    window, analyzed by FFT in the angles, and each retained coefficient's
    action dependence is fitted by least-squares polynomials (Chebyshev basis,
    higher degree along the wide I1 direction, low degree across the thin I2
    direction).  The fitted series drives a second homological solve at scale
    epsilon^2; the final remainder is sampled on the quarter window.
    """
    if not bundle.perturbation.is_action_independent:
        raise ValueError("the second averaging step is implemented for "
                         "action-independent perturbations")
    s1 = step1 or one_step_normal_form(bundle, flow_tol=flow_tol)
    system = bundle.system
    eps = bundle.epsilon
    res = system.resonance
    kappa = s1.kappa
    half = s1.sample_window

    n_th = int(theta_grid)
    n1, n2 = i_grid
    th = np.linspace(0.0, 1.0, n_th, endpoint=False)
    I1_nodes, I2_nodes = half.grid(n1, n2, chebyshev_i1=True)
    T1, T2, A1, A2 = np.meshgrid(th, th, I1_nodes, I2_nodes, indexing="ij")
    f_prime = np.asarray(s1.remainder(T1, T2, A1, A2))
    sup_grid = float(np.max(np.abs(f_prime)))

    spectrum = np.fft.fft2(f_prime, axes=(0, 1)) / (n_th * n_th)
    amplitude = np.max(np.abs(spectrum), axis=(2, 3))
    k_max = min(int(cutoff2), n_th // 2 - 1)
    floor = mode_threshold * float(np.max(amplitude))

    kept: list[tuple[int, int]] = [(0, 0)]
    for k1 in range(0, k_max + 1):
        k2_lo = 1 if k1 == 0 else -k_max
        for k2 in range(k2_lo, k_max + 1):
            if k1 == 0 and k2 <= 0:
                continue
            if amplitude[k1 % n_th, k2 % n_th] >= floor:
                kept.append((k1, k2))

    targets = np.empty((2 * len(kept), n1, n2))
    for i, (k1, k2) in enumerate(kept):
        c = spectrum[k1 % n_th, k2 % n_th]
        if (k1, k2) == (0, 0):
            targets[2 * i] = c.real
            targets[2 * i + 1] = 0.0
        else:
            targets[2 * i] = 2.0 * c.real
            targets[2 * i + 1] = -2.0 * c.imag

    polys, fit_values = _chebyshev_fit_polyfields(
        half, I1_nodes, I2_nodes, targets, fit_degrees
    )
    terms = []
    for i, k in enumerate(kept):
        terms.append((k, polys[2 * i], polys[2 * i + 1]))
    f_prime_fit = FourierPerturbation.from_terms(terms)

    # residual of the full reconstruction on the sampling grid
    recon = f_prime_fit(T1, T2, A1, A2)
    fit_residual = float(np.max(np.abs(f_prime - recon)))
    scale = max(sup_grid, 1e-300)
    if fit_residual > residual_budget * scale:
        raise WindowFitError(
            f"coefficient fit residual {fit_residual:.3e} exceeds "
            f"{residual_budget:.1e} x sup|f'| = {residual_budget * scale:.3e}; "
            "the window is too wide for the fitted degrees"
        )

    f_bar2 = average_over_theta2(f_prime_fit)
    chi2 = solve_homological(system, f_prime_fit, k_max, half)
    gamma2 = chi2.c1_norm(window=half)
    if eps**2 * gamma2 > kappa * eps / 4.0 * (1.0 + 1e-9):
        raise FlowEscapeError(
            "second-step flow budget exceeded: eps^2 gamma2 = "
            f"{eps**2 * gamma2:.3e} > kappa eps / 4 = {kappa * eps / 4.0:.3e}"
        )
    quarter = star_window(res, kappa * eps / 4.0)
    bound = 3.0 * kappa * eps / 4.0

    def phi_points_fn(th1, th2, I1, I2, direction=1.0):
        p = flow_points(
            chi2, eps**2, float(direction), th1, th2, I1, I2,
            rtol=flow_tol, atol=flow_tol, window=half,
        )
        return s1.phi_points(*p, direction=direction)

    def phi_fn(state: PhaseState, direction: float = 1.0) -> PhaseState:
        mid = lie_flow(
            chi2, eps**2, float(direction), state,
            rtol=flow_tol, atol=flow_tol, window=half,
            displacement_bound=kappa * eps / 4.0,
        )
        return s1.phi(mid, direction=direction)

    th1, th2, I1, I2 = _displacement_samples(quarter, displacement_points, seed=20240818)
    p1, p2, q1, q2 = phi_points_fn(th1, th2, I1, I2)
    displacement = float(
        max(
            np.max(np.abs(p1 - th1)),
            np.max(np.abs(p2 - th2)),
            np.max(np.abs(q1 - I1)),
            np.max(np.abs(q2 - I2)),
        )
    )
    displacement_ok = displacement <= bound * (1.0 + 1e-9)

    def remainder2_fn(th1, th2, I1, I2):
        """Sampled second remainder f'' on the quarter window."""
        p1, p2, q1, q2 = phi_points_fn(th1, th2, I1, I2)
        moved = bundle.hamiltonian(p1, p2, q1, q2)
        base = (
            system.h(I1, I2)
            + eps * s1.f_bar(th1, th2, I1, I2)
            + eps**2 * f_bar2(th1, th2, I1, I2)
        )
        return (moved - base) / eps**3

    T1q, T2q, A1q, A2q = _survey_mesh(quarter, survey_grid)
    sup_remainder2 = float(np.max(np.abs(remainder2_fn(T1q, T2q, A1q, A2q))))

    return NormalFormResult(
        steps=2,
        epsilon=eps,
        kappa=kappa,
        gamma=s1.gamma,
        cutoff=s1.cutoff,
        f_bar=s1.f_bar,
        chi=s1.chi,
        window=s1.window,
        sample_window=half,
        displacement=displacement,
        displacement_bound=bound,
        displacement_ok=bool(displacement_ok),
        homological_residual=s1.homological_residual,
        sup_remainder=s1.sup_remainder,
        remainder=s1.remainder,
        phi=phi_fn,
        phi_points=phi_points_fn,
        channel=s1.channel,
        genericity=s1.genericity,
        step1=s1,
        chi2=chi2,
        gamma2=gamma2,
        cutoff2=k_max,
        f_bar2=f_bar2,
        f_prime_fit=f_prime_fit,
        fit_residual=fit_residual,
        sup_remainder2=sup_remainder2,
        remainder2=remainder2_fn,
        quarter_window=quarter,
        meta={"sup_f_prime_grid": sup_grid, "n_kept_modes": len(kept)},
    )
