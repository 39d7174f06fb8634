"""Diffusion experiments on the full Hamiltonian flow.

Every experiment integrates the full system H = h + epsilon f; the averaging
machinery only supplies the starting data (theta1*, I*, lambda) and the
predicted bounds.  The transform is O(epsilon)-close to the identity, so
checking the drift, confinement and time-scaling claims directly on H keeps
transform error out of the measured quantities.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .averaging import GenericityReport, genericity_check
from .integrate import IntegratorConfig, OrbitRecord, StopEvent, integrate
from .norms import estimate_cj_norm
from .systems import SystemBundle, star_window
from .torus import PhaseState


def exact_moser_orbit(epsilon: float, t):
    """Closed-form channel orbit of the quadratic saddle system.

    From the origin, the resonant forcing is constant along the orbit, so the
    actions grow linearly and the angles quadratically:

        I(t) = (-epsilon t, epsilon t),  theta(t) = -(epsilon t^2, epsilon t^2)/2.

    Angles are returned unwrapped.  This is the primary integration oracle:
    the combination theta1 - theta2 and I1 + I2 are conserved exactly, so a
    correct integrator tracks it to roundoff, not just to tolerance.
    """
    t = np.asarray(t, dtype=float)
    I1 = -epsilon * t
    I2 = epsilon * t
    th = -0.5 * epsilon * t**2
    return th.copy(), th.copy(), I1, I2


@dataclass
class ExperimentRecord:
    """One diffusion run: inputs, measured quantities and pass flags.

    c_fit is the confinement constant max|I2|/epsilon; C_fit the drift
    constant drift/delta^2 entering the lower bound.  pass_upper checks
    drift <= delta + 1e-6 and pass_lower checks drift >= C_cfg delta^2.
    """

    kind: str
    epsilon: float
    delta: float
    tau_target: float
    tau: float
    drift: float
    max_abs_I2: float
    max_dist_channel: float
    c_fit: float
    C_fit: float
    lam: float
    theta1_star: float
    I_star: tuple
    initial: PhaseState
    final: PhaseState
    pass_upper: bool
    pass_lower: bool
    flagged: bool
    orbit: OrbitRecord | None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.drift < 0:
            raise ValueError("drift is an absolute displacement")
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError("epsilon must lie in [0, 1)")
        if self.tau < 0:
            raise ValueError("achieved time must be nonnegative")

    def row(self) -> dict:
        """Flat summary row (the sweep CSV schema)."""
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "tau": self.tau,
            "drift": self.drift,
            "maxI2": self.max_abs_I2,
            "c_fit": self.c_fit,
            "pass_upper": int(self.pass_upper),
            "pass_lower": int(self.pass_lower),
        }

    def as_dict(self) -> dict:
        out = self.row()
        out.update(
            {
                "kind": self.kind,
                "tau_target": self.tau_target,
                "C_fit": self.C_fit,
                "lambda": self.lam,
                "theta1_star": self.theta1_star,
                "i1_star": self.I_star[0],
                "max_dist_channel": self.max_dist_channel,
                "flagged": int(self.flagged),
                "initial": list(self.initial.as_array()),
                "final": list(self.final.as_array()),
            }
        )
        out.update(self.extras)
        return out


def _interval_excess(I1, interval):
    lo, hi = interval
    return np.maximum(0.0, np.maximum(lo - np.asarray(I1), np.asarray(I1) - hi))


def _resolve_genericity(bundle: SystemBundle, genericity) -> GenericityReport:
    if genericity is not None:
        return genericity
    return genericity_check(bundle.perturbation, bundle.system)


def _run(bundle, y0, t_span, config, stop_events=()):
    system = bundle.system
    return integrate(
        bundle.rhs(),
        y0,
        t_span,
        config,
        domain_radius=system.R,
        stop_events=stop_events,
        energy_fn=bundle.energy_of,
        channel_interval=system.resonance.s1_interval(star=True),
        epsilon=bundle.epsilon,
    )


def run_drift_experiment(
    bundle: SystemBundle,
    genericity: GenericityReport | None = None,
    delta: float | None = None,
    theta2_0: float = 0.0,
    C_cfg: float = 1.0,
    config: IntegratorConfig | None = None,
) -> ExperimentRecord:
    """Drift run from (theta1*, theta2_0, I*) over the time tau = delta/epsilon.

    delta defaults to min(lambda / (4 C_cfg), delta*); the full Hamiltonian is
    integrated and the run records the drift |I1(tau) - I1(0)| together with
    the confinement max|I2| and the distance to the working subsegment.  With
    epsilon = 0 the run lasts unit time and the drift is zero.
    """
    system = bundle.system
    if not system.is_reduced:
        raise ValueError("drift experiments run in the reduced chart")
    gen = _resolve_genericity(bundle, genericity)
    if not gen.passed:
        raise ValueError("genericity scan found no usable angular dependence")
    eps = bundle.epsilon
    if delta is None:
        delta = min(gen.lam / (4.0 * C_cfg), gen.delta_star)
    delta = float(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    tau_target = delta / eps if eps > 0 else 1.0
    y0 = np.array([gen.theta1_star, theta2_0, gen.i1_star, 0.0])
    record = _run(bundle, y0, (0.0, tau_target), config)

    i1_end = float(record.y_end[2])
    drift = abs(i1_end - gen.i1_star)
    max_abs_I2 = float(np.max(record.abs_I2))
    interval = system.resonance.s1_interval(star=True)
    max_dist = float(np.max(_interval_excess(record.actions[:, 0], interval)))
    c_fit = max_abs_I2 / eps if eps > 0 else 0.0
    C_fit = drift / delta**2
    pass_upper = drift <= delta + 1e-6
    pass_lower = True if eps == 0.0 else drift >= C_cfg * delta**2 - 1e-12
    flagged = bool(record.flagged or max_dist > delta + 0.1)

    return ExperimentRecord(
        kind="drift",
        epsilon=eps,
        delta=delta,
        tau_target=tau_target,
        tau=abs(float(record.t_end)),
        drift=drift,
        max_abs_I2=max_abs_I2,
        max_dist_channel=max_dist,
        c_fit=c_fit,
        C_fit=C_fit,
        lam=gen.lam,
        theta1_star=gen.theta1_star,
        I_star=gen.I_star,
        initial=record.initial_state,
        final=record.final_state,
        pass_upper=bool(pass_upper),
        pass_lower=bool(pass_lower),
        flagged=flagged,
        orbit=record,
        extras={"C_cfg": C_cfg, "theta2_0": theta2_0, "delta_star": gen.delta_star},
    )


def run_connecting_experiment(
    bundle: SystemBundle,
    i1_from: float,
    i1_to: float,
    genericity: GenericityReport | None = None,
    theta2_0: float = 0.0,
    config: IntegratorConfig | None = None,
) -> ExperimentRecord:
    """Steer the action from (i1_from, 0) to (i1_to, 0) along the channel.

    The time direction is chosen from the sign of d f_bar / d theta1 at the
    working angle so the drift moves toward the target; integration stops at
    the first time |I1(t) - i1_from| reaches rho = |i1_to - i1_from|, capped
    at delta / epsilon with delta = 2 rho / lambda.  Coinciding endpoints
    yield the trivial zero-time record.
    """
    system = bundle.system
    if not system.is_reduced:
        raise ValueError("connecting experiments run in the reduced chart")
    gen = _resolve_genericity(bundle, genericity)
    if not gen.passed:
        raise ValueError("genericity scan found no usable angular dependence")
    eps = bundle.epsilon
    rho = abs(float(i1_to) - float(i1_from))
    lo, hi = system.resonance.s1_interval()
    for value, label in ((i1_from, "start"), (i1_to, "target")):
        if not (lo - 1e-12 <= value <= hi + 1e-12):
            raise ValueError(f"{label} action {value} lies outside the channel segment")

    state0 = PhaseState.make(gen.theta1_star, theta2_0, float(i1_from), 0.0)
    if rho == 0.0:
        return ExperimentRecord(
            kind="connect",
            epsilon=eps,
            delta=0.0,
            tau_target=0.0,
            tau=0.0,
            drift=0.0,
            max_abs_I2=0.0,
            max_dist_channel=0.0,
            c_fit=0.0,
            C_fit=0.0,
            lam=gen.lam,
            theta1_star=gen.theta1_star,
            I_star=gen.I_star,
            initial=state0,
            final=state0,
            pass_upper=True,
            pass_lower=True,
            flagged=False,
            orbit=None,
            extras={"terminal_distance": 0.0, "rho": 0.0, "reached": True},
        )
    if eps <= 0.0:
        raise ValueError("connecting distinct actions needs epsilon > 0")

    delta = 2.0 * rho / gen.lam
    t_max = delta / eps
    # drift rate of I1 at the working angle is -eps d f_bar/d theta1; flip
    # time if that moves away from the target
    rate_sign = -math.copysign(1.0, gen.derivative_at_star)
    sigma = 1.0 if rate_sign * (i1_to - i1_from) > 0 else -1.0

    def reached_target(_t, y, _c=float(i1_from), _rho=rho):
        return abs(y[2] - _c) - _rho

    event = StopEvent("target", reached_target, direction=1.0)
    y0 = np.array([gen.theta1_star, theta2_0, float(i1_from), 0.0])
    record = _run(bundle, y0, (0.0, sigma * t_max), config, stop_events=(event,))

    tau = abs(float(record.t_end))
    i1_end = float(record.y_end[2])
    drift = abs(i1_end - float(i1_from))
    terminal_distance = abs(i1_end - float(i1_to))
    reached = record.stop_event == "target"
    max_abs_I2 = float(np.max(record.abs_I2))
    interval = system.resonance.s1_interval(star=True)
    max_dist = float(np.max(_interval_excess(record.actions[:, 0], interval)))
    c_fit = max_abs_I2 / eps
    return ExperimentRecord(
        kind="connect",
        epsilon=eps,
        delta=delta,
        tau_target=t_max,
        tau=tau,
        drift=drift,
        max_abs_I2=max_abs_I2,
        max_dist_channel=max_dist,
        c_fit=c_fit,
        C_fit=drift / delta**2,
        lam=gen.lam,
        theta1_star=gen.theta1_star,
        I_star=(float(i1_from), 0.0),
        initial=record.initial_state,
        final=record.final_state,
        pass_upper=tau <= t_max * (1.0 + 1e-9),
        pass_lower=bool(reached),
        flagged=bool(record.flagged),
        orbit=record,
        extras={
            "terminal_distance": terminal_distance,
            "rho": rho,
            "reached": bool(reached),
            "time_sign": sigma,
            "i1_from": float(i1_from),
            "i1_to": float(i1_to),
        },
    )


@dataclass(frozen=True)
class OptimalityReport:
    """Upper-bound audit: drift against delta times the measured C^1 norm."""

    drift: float
    delta: float
    f_c1_norm: float
    bound: float
    slack: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "drift": self.drift,
            "delta": self.delta,
            "f_c1_norm": self.f_c1_norm,
            "bound": self.bound,
            "slack": self.slack,
            "passed": self.passed,
        }


def optimality_check(
    record: ExperimentRecord,
    bundle: SystemBundle,
    tol: float = 1e-6,
) -> OptimalityReport:
    """Check drift <= delta * |f|_C1 + tol on a finished run.

    The C^1 norm of the perturbation is measured on the working window, so
    the bound is the one the run could actually feel.  This inequality is a
    theorem, so a failure indicates an integration or bookkeeping defect.
    """
    window = star_window(bundle.system.resonance, record.delta + 1e-6)
    norm = estimate_cj_norm(bundle.perturbation, 1, window)
    bound = record.delta * norm.value + tol
    return OptimalityReport(
        drift=record.drift,
        delta=record.delta,
        f_c1_norm=norm.value,
        bound=bound,
        slack=bound - record.drift,
        passed=bool(record.drift <= bound),
    )


@dataclass
class SweepResult:
    """Scaling fit tau_Delta(epsilon) = A epsilon^{-p} across a sweep."""

    records: list
    target_drift: float
    p: float
    A: float
    r_squared: float
    confinement_ratio: float
    all_reached: bool

    def fit_dict(self) -> dict:
        return {
            "p": self.p,
            "A": self.A,
            "r_squared": self.r_squared,
            "target_drift": self.target_drift,
            "confinement_ratio": self.confinement_ratio,
            "all_reached": self.all_reached,
        }


def sweep_epsilon(
    system,
    perturbation,
    epsilons: Sequence[float],
    target_drift: float = 0.1,
    genericity: GenericityReport | None = None,
    theta2_0: float = 0.0,
    config: IntegratorConfig | None = None,
    time_budget_factor: float = 4.0,
) -> SweepResult:
    """Measure the time to reach a fixed drift for each epsilon and fit the law.

    Each run starts at (theta1*, theta2_0, I*) and stops when
    |I1(t) - I1(0)| reaches the target, with a time cap
    time_budget_factor * target / (lambda epsilon).  The fitted exponent p
    comes from least squares on log tau against log epsilon.
    """
    epsilons = sorted(float(e) for e in epsilons)
    if len(epsilons) < 3:
        raise ValueError("a sweep needs at least three epsilon values")
    if min(epsilons) <= 0:
        raise ValueError("sweep epsilons must be positive")
    if max(epsilons) / min(epsilons) < 10.0 - 1e-9:
        raise ValueError("sweep epsilons should span at least a decade")
    bundle0 = SystemBundle(system, perturbation, epsilons[0])
    gen = _resolve_genericity(bundle0, genericity)
    if not gen.passed:
        raise ValueError("genericity scan found no usable angular dependence")

    def sweep_one(eps: float) -> ExperimentRecord:
        bundle = SystemBundle(system, perturbation, eps)
        t_max = time_budget_factor * target_drift / (gen.lam * eps)

        def reached(_t, y, _c=gen.i1_star, _d=target_drift):
            return abs(y[2] - _c) - _d

        event = StopEvent("target", reached, direction=1.0)
        y0 = np.array([gen.theta1_star, theta2_0, gen.i1_star, 0.0])
        record = _run(bundle, y0, (0.0, t_max), config, stop_events=(event,))
        tau = abs(float(record.t_end))
        drift = abs(float(record.y_end[2]) - gen.i1_star)
        max_abs_I2 = float(np.max(record.abs_I2))
        interval = system.resonance.s1_interval(star=True)
        max_dist = float(np.max(_interval_excess(record.actions[:, 0], interval)))
        reached_flag = record.stop_event == "target"
        return ExperimentRecord(
            kind="sweep",
            epsilon=eps,
            delta=target_drift,
            tau_target=t_max,
            tau=tau,
            drift=drift,
            max_abs_I2=max_abs_I2,
            max_dist_channel=max_dist,
            c_fit=max_abs_I2 / eps,
            C_fit=drift / target_drift**2,
            lam=gen.lam,
            theta1_star=gen.theta1_star,
            I_star=gen.I_star,
            initial=record.initial_state,
            final=record.final_state,
            pass_upper=drift <= target_drift + 1e-6 + max_abs_I2,
            pass_lower=bool(reached_flag),
            flagged=bool(record.flagged or not reached_flag),
            orbit=record,
            extras={"reached": bool(reached_flag)},
        )

    # one worker per epsilon; map preserves the sorted order, so the merge
    # is deterministic regardless of completion order
    with ThreadPoolExecutor(max_workers=len(epsilons)) as pool:
        records = list(pool.map(sweep_one, epsilons))

    log_eps = np.log(np.array([r.epsilon for r in records]))
    log_tau = np.log(np.array([r.tau for r in records]))
    slope, intercept = np.polyfit(log_eps, log_tau, 1)
    predicted = slope * log_eps + intercept
    ss_res = float(np.sum((log_tau - predicted) ** 2))
    ss_tot = float(np.sum((log_tau - np.mean(log_tau)) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    c_fits = [r.c_fit for r in records if r.c_fit > 0]
    ratio = max(c_fits) / min(c_fits) if c_fits else 1.0
    return SweepResult(
        records=records,
        target_drift=target_drift,
        p=float(-slope),
        A=float(np.exp(intercept)),
        r_squared=r_squared,
        confinement_ratio=float(ratio),
        all_reached=all(r.extras.get("reached", False) for r in records),
    )
