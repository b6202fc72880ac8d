"""Finite-difference integrator for the two-equation Shkadov film model.

    dh/dt = -d(q)/dx
    dq/dt = -(6/5) d(q^2/h)/dx + (h (1 + d3h/dx3) - q/h^2) / (5 delta) + forcing

Convective terms use a minmod-limited TVD upwind reconstruction, the third
derivative chains a centered second difference with a forward first
difference, and time integration is second-order Adams-Bashforth (forward
Euler on the first step after a reset).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from data.models import SolverConfig


class DivergenceError(RuntimeError):
    """Raised when a step produces non-finite values or a non-positive film."""

    def __init__(self, message: str, step_index: int = -1, t: float = float("nan")):
        super().__init__(message)
        self.step_index = step_index
        self.t = t


@dataclass(frozen=True)
class Grid:
    n: int
    dx: float

    def __post_init__(self):
        if self.n < 8:
            raise ValueError(f"Grid needs at least 8 points, got {self.n}")
        if self.dx <= 0:
            raise ValueError(f"Grid spacing must be positive, got {self.dx}")

    @classmethod
    def from_length(cls, length: float, dx: float) -> "Grid":
        return cls(n=int(round(length / dx)) + 1, dx=dx)

    @property
    def length(self) -> float:
        return (self.n - 1) * self.dx

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    def x_of(self, i: int) -> float:
        return i * self.dx


@dataclass
class FilmState:
    h: np.ndarray
    q: np.ndarray
    rhs_h_prev: np.ndarray = field(default=None)
    rhs_q_prev: np.ndarray = field(default=None)
    t: float = 0.0
    step_count: int = 0

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64)
        self.q = np.asarray(self.q, dtype=np.float64)
        if self.h.shape != self.q.shape or self.h.ndim != 1:
            raise ValueError(
                f"h and q must be 1D arrays of equal length, got {self.h.shape} and {self.q.shape}"
            )
        if self.rhs_h_prev is None:
            self.rhs_h_prev = np.zeros_like(self.h)
        if self.rhs_q_prev is None:
            self.rhs_q_prev = np.zeros_like(self.q)

    @classmethod
    def flat(cls, grid: Grid) -> "FilmState":
        return cls(h=np.ones(grid.n), q=np.ones(grid.n))

    @property
    def n(self) -> int:
        return self.h.size

    @property
    def has_history(self) -> bool:
        return self.step_count > 0


def delta_from_physics(reynolds: float, weber: float) -> float:
    if reynolds <= 0 or weber <= 0:
        raise ValueError(
            f"Reynolds and Weber numbers must be positive, got Re={reynolds}, W={weber}"
        )
    return (3.0 * reynolds**2 / weber) ** (1.0 / 3.0) / 15.0


def minmod(a, b):
    """0 on sign disagreement, else the argument of smallest magnitude."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.where(a * b <= 0.0, 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)))
    return out[()] if out.ndim == 0 else out


def convective_derivative(
    field_values: np.ndarray, velocity_sign: np.ndarray, grid: Grid
) -> np.ndarray:
    """TVD flux-difference approximation of d(field)/dx.

    Interface values come from a piecewise-linear minmod reconstruction on the
    upwind side; the field is extended by constant ghost values at both ends.
    """
    f = np.asarray(field_values, dtype=np.float64)
    s = np.asarray(velocity_sign, dtype=np.float64)
    if f.shape != (grid.n,) or s.shape != (grid.n,):
        raise ValueError(
            f"Expected arrays of length {grid.n}, got {f.shape} and {s.shape}"
        )

    # ghost-padded field: fp[k] = f[k-1], k = 0..n+1
    fp = np.concatenate(([f[0]], f, [f[-1]]))
    sp = np.concatenate(([s[0]], s, [s[-1]]))
    diff = np.diff(fp)
    slopes = np.zeros_like(fp)
    slopes[1:-1] = minmod(diff[:-1], diff[1:])

    # interfaces k+1/2 for k = 0..n in padded indexing
    left = fp[:-1] + 0.5 * slopes[:-1]
    right = fp[1:] - 0.5 * slopes[1:]
    upwind_left = (sp[:-1] + sp[1:]) >= 0.0
    flux = np.where(upwind_left, left, right)
    return (flux[1:] - flux[:-1]) / grid.dx


def third_derivative(h: np.ndarray, grid: Grid) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    n = h.size
    if n < 5:
        raise ValueError(f"Third derivative needs at least 5 points, got {n}")
    if n != grid.n:
        raise ValueError(f"Expected array of length {grid.n}, got {n}")
    dx = grid.dx

    d2 = np.empty(n)
    d2[1:-1] = (h[2:] - 2.0 * h[1:-1] + h[:-2]) / dx**2
    d2[0] = (2.0 * h[0] - 5.0 * h[1] + 4.0 * h[2] - h[3]) / dx**2
    d2[-1] = (2.0 * h[-1] - 5.0 * h[-2] + 4.0 * h[-3] - h[-4]) / dx**2

    d3 = np.empty(n)
    d3[:-2] = (-3.0 * d2[:-2] + 4.0 * d2[1:-1] - d2[2:]) / (2.0 * dx)
    d3[-2:] = (3.0 * d2[-2:] - 4.0 * d2[-3:-1] + d2[-4:-2]) / (2.0 * dx)
    return d3


def rhs(
    state: FilmState, forcing: np.ndarray, config: SolverConfig, grid: Grid
) -> tuple[np.ndarray, np.ndarray]:
    h, q = state.h, state.q
    if forcing.shape != h.shape:
        raise ValueError(f"Forcing must have length {h.size}, got {forcing.shape}")
    if not np.all(h > 0.0):
        raise DivergenceError(
            "Non-positive film height", step_index=state.step_count, t=state.t
        )

    velocity_sign = np.sign(q)
    dh_dt = -convective_derivative(q, velocity_sign, grid)
    dq_dt = (
        -1.2 * convective_derivative(q * q / h, velocity_sign, grid)
        + (h * (1.0 + third_derivative(h, grid)) - q / (h * h)) / (5.0 * config.delta)
        + forcing
    )
    return dh_dt, dq_dt


def apply_boundary_conditions(
    state: FilmState, config: SolverConfig, rng: np.random.Generator | None
) -> FilmState:
    noise = rng.uniform(-config.eps, config.eps) if rng is not None else 0.0
    state.h[0] = 1.0 + noise
    state.q[0] = 1.0
    state.h[-1] = state.h[-2]
    state.q[-1] = state.q[-2]
    return state


def ab2_step(
    state: FilmState,
    forcing: np.ndarray,
    config: SolverConfig,
    grid: Grid,
    rng: np.random.Generator | None = None,
) -> FilmState:
    dh_dt, dq_dt = rhs(state, forcing, config, grid)
    dt = config.dt
    if state.has_history:
        h = state.h + dt * (1.5 * dh_dt - 0.5 * state.rhs_h_prev)
        q = state.q + dt * (1.5 * dq_dt - 0.5 * state.rhs_q_prev)
    else:
        h = state.h + dt * dh_dt
        q = state.q + dt * dq_dt

    new_state = FilmState(
        h=h,
        q=q,
        rhs_h_prev=dh_dt,
        rhs_q_prev=dq_dt,
        t=state.t + dt,
        step_count=state.step_count + 1,
    )
    apply_boundary_conditions(new_state, config, rng)

    if not (np.all(np.isfinite(new_state.h)) and np.all(np.isfinite(new_state.q))):
        raise DivergenceError(
            f"Non-finite state at step {new_state.step_count}",
            step_index=new_state.step_count,
            t=new_state.t,
        )
    h_low = float(new_state.h.min())
    if h_low <= config.h_min:
        raise DivergenceError(
            f"Film height {h_low:.3e} below floor at step {new_state.step_count}",
            step_index=new_state.step_count,
            t=new_state.t,
        )
    return new_state


def integrate(
    state: FilmState,
    n_steps: int,
    config: SolverConfig,
    grid: Grid,
    rng: np.random.Generator | None = None,
    forcing: np.ndarray | None = None,
) -> FilmState:
    """Advance n_steps with a constant forcing (zero by default)."""
    if forcing is None:
        forcing = np.zeros(grid.n)
    for _ in range(n_steps):
        state = ab2_step(state, forcing, config, grid, rng)
    return state


def steps_for(duration: float, dt: float) -> int:
    """Integer number of solver steps covering duration; must divide exactly."""
    n = int(round(duration / dt))
    if not math.isclose(n * dt, duration, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"Duration {duration} is not a multiple of dt={dt}")
    return n
