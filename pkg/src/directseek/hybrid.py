"""Closed-loop realization of the direct search as a sampled-data automaton.

The controller holds its command constant between measurements: during each
period of length ``tau_star`` the plant is steered through the displacement
``p * delta * v``; at the period boundary the field is measured once and the
controller jumps.  Jumps are classified into five cases:

- ``D1`` — a positive-side probe passed the sufficient-decrease test;
- ``D2`` — a probe failed: reverse direction and schedule a re-measure;
- ``D3`` — re-measure back at the anchor after the first probe failed;
- ``D4`` — a negative-side probe passed the test;
- ``D5`` — the line minimization is over (both sides exhausted, or the
  positive run ended): re-measure at the best point and move to the next
  direction slot — or, at the end of a cycle, rebuild the direction set.

Per line minimization the label sequence is ``(D1+ D2)`` or
``(D2 D3 D4* D2)`` followed by ``D5``: the negative sweep runs only when the
very first positive probe fails (a successful positive run arrives from the
negative side already).

This module is written independently of `directseek.rsp`; `equivalence_check`
verifies the two routes measure the field at identical points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    AlgorithmConfig,
    ConfigError,
    StopRule,
    rho,
    validate_config,
)
from .plants import PlantState

__all__ = [
    "JumpCase",
    "JumpLabel",
    "AutomatonError",
    "SchedulingError",
    "ControllerState",
    "ArcSample",
    "HybridArc",
    "classify_jump",
    "jump",
    "phi_update",
    "flow",
    "make_controller",
    "run_closed_loop",
    "EquivalenceReport",
    "equivalence_check",
]


class AutomatonError(RuntimeError):
    """A controller state outside the reachable set was asked to jump."""


class SchedulingError(RuntimeError):
    """Continuous flow was driven past the sampling period."""


class JumpCase(str, Enum):
    """Jump classification labels."""

    D1 = "D1"
    D2 = "D2"
    D3 = "D3"
    D4 = "D4"
    D5 = "D5"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


@dataclass
class JumpLabel:
    """Classified jump ``case`` at jump index ``j`` and time ``t``."""

    case: JumpCase
    j: int
    t: float


@dataclass
class ControllerState:
    """Controller memory between jumps.

    ``deltas``/``dirs`` are the stored per-slot step sizes and directions;
    ``v``/``delta`` the active direction and step; ``lam`` the signed travel
    along ``v`` in the current line minimization; ``alpha`` the cycle
    displacement accumulator and ``alpha_bar`` the scalar travel meter;
    ``p`` the probe sign, ``m`` the pending-re-measure flag, ``q`` the
    line-minimization phase counter, ``k`` the cycle slot counter, ``z`` the
    incumbent measured value, ``phi`` the frame scale, ``tau`` the timer.
    """

    tau: float
    phi: float
    z: float
    lam: float
    alpha: np.ndarray
    alpha_bar: float
    p: int
    m: int
    q: int
    k: int
    v: np.ndarray
    delta: float
    dirs: list[np.ndarray]
    deltas: list[float]

    def __post_init__(self) -> None:
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.dirs = [np.asarray(d, dtype=float) for d in self.dirs]
        self.deltas = [float(s) for s in self.deltas]

    @property
    def dimension(self) -> int:
        return len(self.dirs)

    def copy(self) -> "ControllerState":
        return ControllerState(
            tau=self.tau,
            phi=self.phi,
            z=self.z,
            lam=self.lam,
            alpha=self.alpha.copy(),
            alpha_bar=self.alpha_bar,
            p=self.p,
            m=self.m,
            q=self.q,
            k=self.k,
            v=self.v.copy(),
            delta=self.delta,
            dirs=[d.copy() for d in self.dirs],
            deltas=list(self.deltas),
        )


def make_controller(
    dirs: Sequence[np.ndarray],
    deltas: Sequence[float],
    phi: float,
    v=None,
    delta: Optional[float] = None,
    z: float = 0.0,
) -> ControllerState:
    """Fresh-cycle controller state (counter 0, positive probe pending).

    The active direction/step default to the newest slot; published runs
    override them to start on the oldest direction instead.
    """
    dirs = [np.asarray(d, dtype=float) for d in dirs]
    n = len(dirs)
    v = dirs[n - 1].copy() if v is None else np.asarray(v, dtype=float)
    delta = float(deltas[n - 1]) if delta is None else float(delta)
    return ControllerState(
        tau=0.0,
        phi=float(phi),
        z=float(z),
        lam=0.0,
        alpha=np.zeros(n),
        alpha_bar=0.0,
        p=1,
        m=0,
        q=0,
        k=0,
        v=v,
        delta=delta,
        dirs=[d.copy() for d in dirs],
        deltas=[float(s) for s in deltas],
    )


def _slot(k: int, n: int) -> int:
    """Stored slot being walked at cycle counter ``k``."""
    return n - 1 if k in (0, n) else k - 1


def classify_jump(xc: ControllerState, y: float) -> JumpCase:
    """Classify the jump triggered by measurement ``y``.

    Total over reachable controller states; raises `AutomatonError` for
    state combinations the automaton cannot reach (corrupted state).
    Acceptance ties (``y == z - rho(delta)``) accept.
    """
    if xc.q == 2:
        return JumpCase.D5
    if xc.m == 1:
        if xc.p == -1 and xc.q == 1:
            return JumpCase.D3
        raise AutomatonError(
            f"re-measure flag set with p={xc.p}, q={xc.q}: unreachable state"
        )
    if xc.q not in (0, 1):
        raise AutomatonError(f"phase counter q={xc.q}: unreachable state")
    if y <= xc.z - rho(xc.delta):
        if xc.p == 1:
            return JumpCase.D1
        if xc.q == 1:
            return JumpCase.D4
        raise AutomatonError(
            f"negative probe with q={xc.q}: unreachable state"
        )
    return JumpCase.D2


def phi_update(
    alpha: np.ndarray,
    beta: np.ndarray,
    trailing_dirs: Sequence[np.ndarray],
    d0: np.ndarray,
    delta_det: float,
) -> np.ndarray:
    """Cycle-end direction candidate acceptance.

    Candidate is ``alpha + beta`` (cycle displacement plus final-line travel).
    It replaces the newest slot when the matrix with rows
    ``trailing_dirs + [candidate]`` has ``|det| >= delta_det`` (equality
    accepts); otherwise the oldest direction ``d0`` is recycled, making the
    whole update a pure rotation of the direction list.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    candidate = alpha + beta
    rows = [np.asarray(d, dtype=float) for d in trailing_dirs] + [candidate]
    mat = np.array(rows, dtype=float)
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(
            f"direction matrix must be square, got shape {mat.shape}"
        )
    det = float(mat[0, 0]) if mat.shape == (1, 1) else float(np.linalg.det(mat))
    if abs(det) >= delta_det:
        return candidate
    return np.asarray(d0, dtype=float).copy()


def _g1(xc: ControllerState, y: float, cfg: AlgorithmConfig) -> ControllerState:
    """Positive-side accept: bank the step, expand, enter phase 1."""
    new = xc.copy()
    a = _slot(xc.k, xc.dimension)
    new.tau = 0.0
    new.z = y
    new.q = 1
    new.lam = xc.lam + xc.delta * xc.p
    new.delta = min(cfg.gamma * xc.delta, cfg.lambda_t * xc.phi)
    new.deltas[a] = min(cfg.gamma * xc.deltas[a], cfg.lambda_t * xc.phi)
    return new


def _g2(xc: ControllerState, y: float, cfg: AlgorithmConfig) -> ControllerState:
    """Probe failed: flip the probe sign and schedule a re-measure."""
    new = xc.copy()
    new.tau = 0.0
    new.p = -xc.p
    new.m = 1
    new.q = xc.q + 1
    return new


def _g3(xc: ControllerState, y: float, cfg: AlgorithmConfig) -> ControllerState:
    """Back at the anchor: re-anchor the incumbent and resume probing."""
    new = xc.copy()
    new.tau = 0.0
    new.z = y
    new.m = 0
    new.lam = 0.0
    return new


def _g4(xc: ControllerState, y: float, cfg: AlgorithmConfig) -> ControllerState:
    """Negative-side accept: like the positive case, phase already 1."""
    new = xc.copy()
    a = _slot(xc.k, xc.dimension)
    new.tau = 0.0
    new.z = y
    new.lam = xc.lam + xc.delta * xc.p
    new.delta = min(cfg.gamma * xc.delta, cfg.lambda_t * xc.phi)
    new.deltas[a] = min(cfg.gamma * xc.deltas[a], cfg.lambda_t * xc.phi)
    return new


def _g5(xc: ControllerState, y: float, cfg: AlgorithmConfig) -> ControllerState:
    """Line minimization over: bank bookkeeping and arm the next slot.

    All right-hand sides read the pre-jump state.  Counter ``k < n`` hands
    the walk to stored slot ``k``; counter ``n`` closes the cycle: the frame
    scale contracts if the whole cycle was blocked (with the robust floor
    applied in that branch), slots shift down one, and the vacated newest
    slot takes the direction candidate and a step rebuilt from the old slots.
    """
    n = xc.dimension
    c = xc.k
    a = _slot(c, n)
    pre = list(xc.deltas)
    blocked_lm = abs(xc.lam) <= pre[a] / 2.0

    new = xc.copy()
    new.tau = 0.0
    new.z = y
    new.lam = 0.0
    new.p = 1
    new.m = 0
    new.q = 0

    if c < n:
        if blocked_lm:
            new.deltas[a] = max(cfg.theta * pre[a], cfg.lambda_s * xc.phi)
        new.alpha = xc.alpha + xc.lam * xc.v
        new.alpha_bar = xc.alpha_bar + abs(xc.lam) * float(np.linalg.norm(xc.v))
        new.k = c + 1
        new.v = xc.dirs[c].copy()
        new.delta = pre[c]
        return new

    # c == n: cycle close.
    travel = xc.alpha_bar + abs(xc.lam) * float(np.linalg.norm(xc.v))
    blocked_cycle = travel <= min(pre) / 2.0
    phi_new = cfg.mu * xc.phi if blocked_cycle else xc.phi
    if blocked_cycle and cfg.phi_min > 0.0:
        phi_new = max(phi_new, cfg.phi_min)

    new_dir = phi_update(
        xc.alpha, xc.lam * xc.v, xc.dirs[1:], xc.dirs[0], cfg.delta_det
    )

    d_last = pre[n - 1]
    if blocked_lm:
        d_last = max(cfg.theta * d_last, cfg.lambda_s * xc.phi)
    lo, hi = cfg.lambda_s * phi_new, cfg.lambda_t * phi_new

    def clip(s: float) -> float:
        return min(max(s, lo), hi)

    if n >= 2:
        shifted = [clip(pre[j + 1]) for j in range(n - 2)] + [clip(d_last)]
        new_step = clip(max(pre[: n - 1]))
    else:
        shifted = []
        new_step = clip(d_last)

    new.dirs = [d.copy() for d in xc.dirs[1:]] + [new_dir]
    new.deltas = shifted + [new_step]
    new.v = new_dir.copy()
    new.delta = new_step
    new.phi = phi_new
    new.alpha = np.zeros(n)
    new.alpha_bar = 0.0
    new.k = 0
    return new


_JUMP_MAPS: dict[JumpCase, Callable] = {
    JumpCase.D1: _g1,
    JumpCase.D2: _g2,
    JumpCase.D3: _g3,
    JumpCase.D4: _g4,
    JumpCase.D5: _g5,
}


def jump(
    xc: ControllerState,
    y: float,
    cfg: AlgorithmConfig,
    case: Optional[JumpCase] = None,
) -> ControllerState:
    """Apply the jump triggered by measurement ``y`` and return the new state.

    ``case`` may be supplied if the caller already classified the jump.
    """
    if case is None:
        case = classify_jump(xc, y)
    return _JUMP_MAPS[case](xc, y, cfg)


def flow(
    xc: ControllerState, dt: float, cfg: AlgorithmConfig
) -> ControllerState:
    """Advance the controller timer by ``dt`` (all other fields are constant
    between jumps).  Raises `SchedulingError` past the sampling period."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    new = xc.copy()
    new.tau = xc.tau + dt
    if new.tau > cfg.tau_star * (1.0 + 1e-9):
        raise SchedulingError(
            f"flowed to tau={new.tau} past the period tau_star={cfg.tau_star}"
        )
    return new


@dataclass
class ArcSample:
    """One logged point of the closed-loop trajectory.

    Jump rows carry the measured value and the jump case; the initial row
    and intra-period flow rows leave both unset.
    """

    t: float
    j: int
    plant: PlantState
    controller: ControllerState
    measured: Optional[float] = None
    case: Optional[JumpCase] = None


@dataclass
class HybridArc:
    """Closed-loop run log: dense samples plus the jump label sequence."""

    samples: list[ArcSample] = field(default_factory=list)
    jumps: list[JumpLabel] = field(default_factory=list)
    stopped: str = ""

    def jump_samples(self) -> list[ArcSample]:
        return [s for s in self.samples if s.case is not None]

    def final_sample(self) -> ArcSample:
        return self.samples[-1]

    def write_csv(self, fp) -> None:
        """Write the arc as CSV with columns
        ``t, j, case, x0..x{n-1}, f, z, phi, delta, k, q, p, m``.

        Floats are emitted with ``repr`` (shortest round-trip form) so equal
        runs produce byte-identical files.
        """
        import csv

        n = self.samples[0].plant.x.shape[0] if self.samples else 0
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(
            ["t", "j", "case"]
            + [f"x{i}" for i in range(n)]
            + ["f", "z", "phi", "delta", "k", "q", "p", "m"]
        )
        for s in self.samples:
            xc = s.controller
            writer.writerow(
                [repr(float(s.t)), s.j, s.case.value if s.case else ""]
                + [repr(float(v)) for v in s.plant.x]
                + [
                    repr(float(s.measured)) if s.measured is not None else "",
                    repr(float(xc.z)),
                    repr(float(xc.phi)),
                    repr(float(xc.delta)),
                    xc.k,
                    xc.q,
                    xc.p,
                    xc.m,
                ]
            )


def run_closed_loop(
    plant,
    objective,
    xi0: PlantState,
    xc0: ControllerState,
    cfg: AlgorithmConfig,
    stop: StopRule,
    noise=None,
    flow_samples_per_period: int = 0,
) -> HybridArc:
    """Drive the plant/controller loop until the stop rule fires.

    Each period: steer the plant through ``p * delta * v``, integrate its
    dynamics for exactly ``tau_star``, measure the field once at the period
    boundary (plus noise), classify and apply the jump.  Jump times are exact
    multiples of the period.  ``flow_samples_per_period`` > 0 additionally
    logs that many evenly spaced intra-period rows.

    Raises `ConfigError` on invalid configuration; robust mode
    (``phi_min > 0``) additionally requires the initial direction set to
    clear the determinant safeguard.
    """
    violations = validate_config(cfg)
    if violations:
        raise ConfigError(violations)
    if (
        stop.max_jumps is None
        and stop.max_evaluations is None
        and stop.phi_threshold is None
    ):
        raise ValueError("stop rule has no limits set; the run would never end")
    if cfg.phi_min > 0.0:
        mat = np.array(xc0.dirs, dtype=float)
        det = float(mat[0, 0]) if mat.shape == (1, 1) else float(np.linalg.det(mat))
        if abs(det) < cfg.delta_det:
            raise ConfigError(
                [
                    "robust mode requires |det(directions)| >= delta_det "
                    f"(got {abs(det)!r} < {cfg.delta_det!r})"
                ]
            )

    xi = xi0.copy()
    xc = xc0.copy()
    arc = HybridArc()
    arc.samples.append(ArcSample(t=0.0, j=0, plant=xi.copy(), controller=xc.copy()))
    j = 0
    max_jumps = stop.max_jumps
    if stop.max_evaluations is not None:
        max_jumps = (
            stop.max_evaluations
            if max_jumps is None
            else min(max_jumps, stop.max_evaluations)
        )

    while True:
        if max_jumps is not None and j >= max_jumps:
            arc.stopped = "max_jumps"
            break
        if stop.phi_threshold is not None and xc.phi < stop.phi_threshold:
            arc.stopped = "phi_threshold"
            break

        target = (xc.p * xc.delta) * xc.v
        schedule, _predicted = plant.steer(xi, target, cfg.tau_star)
        collect: Optional[list] = [] if flow_samples_per_period > 0 else None
        xi = plant.integrate(xi, schedule, cfg.tau_star, collect)
        t_start = j * cfg.tau_star
        if collect:
            stride = max(1, len(collect) // (flow_samples_per_period + 1))
            for t_rel, y_state in collect[stride::stride][:flow_samples_per_period]:
                arc.samples.append(
                    ArcSample(
                        t=t_start + t_rel,
                        j=j,
                        plant=PlantState(np.array(y_state[: xi.x.shape[0]])),
                        controller=xc.copy(),
                    )
                )

        j += 1
        t = j * cfg.tau_star
        y = float(objective(xi.x))
        if noise is not None:
            y += float(noise.sample(j, xc.delta, xc.v))
        case = classify_jump(xc, y)
        xc = jump(xc, y, cfg, case=case)
        arc.jumps.append(JumpLabel(case=case, j=j, t=t))
        arc.samples.append(
            ArcSample(
                t=t,
                j=j,
                plant=xi.copy(),
                controller=xc.copy(),
                measured=y,
                case=case,
            )
        )
    return arc


@dataclass
class EquivalenceReport:
    """Outcome of comparing the two routes probe-for-probe."""

    ok: bool
    compared: int
    max_abs_error: float
    first_divergence: Optional[int] = None
    detail: str = ""


def equivalence_check(
    arc: HybridArc,
    rsp_log,
    tol: float = 1e-9,
    min_points: int = 1,
) -> EquivalenceReport:
    """Compare closed-loop measurement positions against the discrete log.

    The j-th jump of the arc must measure the field at the same point as the
    j-th record of the discrete route's iterate log, coordinate-wise within
    ``tol``.  Returns an `EquivalenceReport`; ``ok`` is False when the routes
    diverge or fewer than ``min_points`` measurements can be compared.
    """
    hybrid_points = [s.plant.x for s in arc.jump_samples()]
    rsp_points = [r.x for r in rsp_log]
    m = min(len(hybrid_points), len(rsp_points))
    if m < min_points:
        return EquivalenceReport(
            ok=False,
            compared=m,
            max_abs_error=math.inf,
            first_divergence=None,
            detail=f"only {m} comparable measurements (need >= {min_points})",
        )
    max_err = 0.0
    for i in range(m):
        err = float(np.max(np.abs(hybrid_points[i] - rsp_points[i])))
        if err > tol:
            return EquivalenceReport(
                ok=False,
                compared=m,
                max_abs_error=err,
                first_divergence=i,
                detail=(
                    f"measurement {i}: closed-loop {hybrid_points[i].tolist()} vs "
                    f"discrete {rsp_points[i].tolist()} (|err| = {err:.3e} > {tol})"
                ),
            )
        max_err = max(max_err, err)
    return EquivalenceReport(ok=True, compared=m, max_abs_error=max_err)
