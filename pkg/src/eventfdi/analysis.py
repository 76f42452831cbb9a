"""Theoretical performance of the remote estimator under the attack.

With the scheduler effectively always firing, the attacked estimate is
biased by E = (I - A)^{-1} K F^{-T} delta and its error covariance about
that bias follows

    P^a_{k+1} = A P^a_k A^T + Q - (2/mu - 1/mu^2) P C^T S^{-1} C P,

whose fixed point interpolates between the standard Kalman posterior
covariance (mu = 1) and the open-loop Lyapunov fixed point (mu -> inf).
"""

from dataclasses import dataclass

import numpy as np

from .attack import AttackParams
from .errors import DivergenceError, DomainError
from .estimator import SteadyState, op_h, op_q_tilde
from .model import SystemModel

_FP_TOL = 1e-11
_FP_MAX_ITER = 100_000
_DIVERGENCE_TRACE = 1e12


def _sym(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


@dataclass(frozen=True)
class BiasVector:
    """Steady offset of the attacked estimate: value = E, prior_value = A E."""

    value: np.ndarray
    prior_value: np.ndarray


@dataclass(frozen=True)
class CovarianceTrajectory:
    """A covariance recursion unrolled over time; kind names the recursion."""

    kind: str
    entries: tuple  # of (k, P) pairs

    def __post_init__(self):
        if self.kind not in ("nominal", "attacked", "open_loop"):
            raise DomainError(f"unknown trajectory kind {self.kind!r}")

    def traces(self):
        return [(k, float(np.trace(P))) for k, P in self.entries]


@dataclass(frozen=True)
class SweepPoint:
    mu: float
    trace: float
    fixed_point: np.ndarray | None = None
    error: str | None = None


def steady_bias(
    params: AttackParams, steady: SteadyState, model: SystemModel
) -> BiasVector:
    """Solve (I - A) E = K F^{-T} delta; requires a stable A (otherwise the bias is unbounded)."""
    rho = model.spectral_radius()
    if rho >= 1.0:
        raise DomainError(
            f"steady bias undefined for unstable A (spectral radius {rho:.6f}); "
            "the attacked estimate diverges"
        )
    rhs = steady.K @ (steady.L @ params.delta)  # K F^{-T} delta
    value = np.linalg.solve(np.eye(model.n) - model.A, rhs)
    return BiasVector(value=value, prior_value=model.A @ value)


def _injection_term(params: AttackParams, steady: SteadyState, model: SystemModel):
    correction = steady.P @ model.C.T @ np.linalg.solve(steady.S, model.C @ steady.P)
    weight = 2.0 / params.mu - 1.0 / params.mu**2
    return weight * _sym(correction)


def attacked_covariance_step(
    P_a: np.ndarray,
    params: AttackParams,
    steady: SteadyState,
    model: SystemModel,
) -> np.ndarray:
    """One step of the attacked-covariance recursion, symmetrized."""
    return _sym(model.A @ np.asarray(P_a, dtype=float) @ model.A.T + model.Q) - _injection_term(
        params, steady, model
    )


def attacked_covariance_fixed_point(
    params: AttackParams,
    steady: SteadyState,
    model: SystemModel,
    tol: float = _FP_TOL,
    max_iter: int = _FP_MAX_ITER,
) -> np.ndarray:
    """Iterate the attacked recursion to its fixed point (A stable makes it a contraction)."""
    P_a = op_q_tilde(steady.P, 1.0, model)
    for _ in range(int(max_iter)):
        P_next = attacked_covariance_step(P_a, params, steady, model)
        if not np.all(np.isfinite(P_next)) or np.trace(P_next) > _DIVERGENCE_TRACE:
            raise DivergenceError("attacked covariance recursion diverged (A unstable?)")
        if np.max(np.abs(P_next - P_a)) < tol:
            return P_next
        P_a = P_next
    raise DivergenceError(
        f"attacked covariance recursion did not converge within {max_iter} iterations"
    )


def open_loop_step(P_o: np.ndarray, model: SystemModel) -> np.ndarray:
    """Lyapunov recursion P <- A P A^T + Q (the estimator with no corrections at all)."""
    return _sym(model.A @ np.asarray(P_o, dtype=float) @ model.A.T + model.Q)


def open_loop_fixed_point(
    model: SystemModel, tol: float = _FP_TOL, max_iter: int = _FP_MAX_ITER
) -> np.ndarray:
    """Fixed point of the Lyapunov recursion; exists iff A is stable."""
    P_o = model.Q.copy()
    for _ in range(int(max_iter)):
        P_next = open_loop_step(P_o, model)
        if not np.all(np.isfinite(P_next)) or np.trace(P_next) > _DIVERGENCE_TRACE:
            raise DivergenceError(
                "open-loop covariance diverged; A has spectral radius >= 1"
            )
        if np.max(np.abs(P_next - P_o)) < tol:
            return P_next
        P_o = P_next
    raise DivergenceError(
        f"open-loop recursion did not converge within {max_iter} iterations"
    )


def covariance_trajectory(
    kind: str,
    n_steps: int,
    model: SystemModel,
    steady: SteadyState | None = None,
    params: AttackParams | None = None,
    start: np.ndarray | None = None,
) -> CovarianceTrajectory:
    """Unroll one of the covariance recursions from `start` (default Q) for n_steps."""
    P = np.asarray(start, dtype=float) if start is not None else model.Q.copy()
    entries = [(0, P.copy())]
    for k in range(1, int(n_steps) + 1):
        if kind == "open_loop":
            P = open_loop_step(P, model)
        elif kind == "attacked":
            if steady is None or params is None:
                raise DomainError("attacked trajectory needs steady state and attack params")
            P = attacked_covariance_step(P, params, steady, model)
        elif kind == "nominal":
            P = op_h(op_q_tilde(P, 1.0, model), model)
        else:
            raise DomainError(f"unknown trajectory kind {kind!r}")
        entries.append((k, P.copy()))
    return CovarianceTrajectory(kind=kind, entries=tuple(entries))


def mu_sweep(
    mu_grid, steady: SteadyState, model: SystemModel
) -> list[SweepPoint]:
    """Fixed-point trace of the attacked recursion per scaling value.

    The grid must be ascending; the resulting traces are checked to be
    nondecreasing, and every fixed point must dominate the mu = 1 point in
    the positive semi-definite order (eigenvalue tolerance 1e-9).
    """
    mus = [float(mu) for mu in mu_grid]
    if any(mu < 1.0 for mu in mus):
        raise DomainError("mu grid entries must be >= 1")
    if any(b < a for a, b in zip(mus, mus[1:])):
        raise DomainError("mu grid must be sorted ascending")

    points: list[SweepPoint] = []
    for mu in mus:
        params = AttackParams(mu=mu, delta=np.zeros(model.m))
        try:
            fp = attacked_covariance_fixed_point(params, steady, model)
            points.append(SweepPoint(mu=mu, trace=float(np.trace(fp)), fixed_point=fp))
        except DivergenceError as exc:
            points.append(SweepPoint(mu=mu, trace=float("nan"), error=str(exc)))

    converged = [p for p in points if p.error is None]
    for prev, cur in zip(converged, converged[1:]):
        if cur.trace < prev.trace - 1e-9:
            raise DivergenceError(
                f"sweep traces not nondecreasing: mu={prev.mu} -> {cur.mu}"
            )
    if converged and converged[0].mu == 1.0:
        base = converged[0].fixed_point
        for p in converged[1:]:
            if np.linalg.eigvalsh(p.fixed_point - base).min() < -1e-9:
                raise DivergenceError(
                    f"fixed point at mu={p.mu} does not dominate the mu=1 point"
                )
    return points
