import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from data.models import ShkadovEnvConfig, SolverConfig
from solver.shkadov import DivergenceError, FilmState, Grid, integrate
from solver.snapshot import write_snapshot

logger = logging.getLogger(__name__)

MAX_RETRIES = 3


class InitialStateError(RuntimeError):
    """Raised when a sample keeps diverging past the retry budget."""


def snapshot_name(index: int) -> str:
    return f"state_{index:04d}.txt"


def _develop_film(
    index: int,
    seed: np.random.SeedSequence,
    config: ShkadovEnvConfig,
    solver: SolverConfig,
    grid: Grid,
) -> tuple[FilmState, float]:
    """Run the uncontrolled film from flat to a random t_init, retrying on divergence."""
    children = seed.spawn(MAX_RETRIES + 1)
    for attempt, child in enumerate(children):
        rng = np.random.default_rng(child)
        t_init = float(rng.uniform(config.t_init_min, config.t_init_max))
        # snap t_init onto the solver grid
        n_steps = int(round(t_init / solver.dt))
        try:
            state = integrate(FilmState.flat(grid), n_steps, solver, grid, rng)
            return state, n_steps * solver.dt
        except DivergenceError as e:
            logger.warning(
                "Initial state %d diverged at t=%.2f (attempt %d/%d)",
                index,
                e.t,
                attempt + 1,
                MAX_RETRIES + 1,
            )
    raise InitialStateError(
        f"Initial state {index} diverged {MAX_RETRIES + 1} times; check solver settings"
    )


def generate_initial_states(
    config: ShkadovEnvConfig,
    solver: SolverConfig,
    count: int,
    rng: np.random.Generator,
    out_dir: str | Path | None = None,
    max_workers: int | None = None,
) -> list[Path]:
    """Write count developed-film snapshots to out_dir (default: config.init_state_dir).

    Each sample gets its own child seed drawn up front, so file contents do not
    depend on thread scheduling.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    out_dir = Path(out_dir or config.init_state_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = Grid.from_length(config.domain_length, solver.dx)

    seeds = [
        np.random.SeedSequence(int(s))
        for s in rng.integers(0, 2**63 - 1, size=count, dtype=np.int64)
    ]
    paths: dict[int, Path] = {}

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = {
            executor.submit(_develop_film, k, seeds[k], config, solver, grid): k
            for k in range(count)
        }
        for future in as_completed(futures):
            k = futures[future]
            state, t_init = future.result()
            paths[k] = write_snapshot(
                out_dir / snapshot_name(k), state, grid.dx, solver.delta, t=t_init
            )
            logger.debug("Wrote %s (t_init=%.2f)", paths[k], t_init)

    logger.info("Generated %d initial states in %s", count, out_dir)
    return [paths[k] for k in range(count)]
