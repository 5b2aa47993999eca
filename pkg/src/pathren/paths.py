"""Brownian path ensembles on dyadic grids, with counter-based reproducibility.

Every normal draw is addressed by (seed, stream) x (purpose, level, path), so
an ensemble is fully determined by its RngSpec and lineage: re-running a
manifest reproduces paths bit for bit, and midpoint refinement draws fresh
noise from the next level's counters while keeping every coarse node exact.
"""

import numpy as np

from .params import InvalidGrid, PathEnsemble, RngSpec, TimeGrid

_PURPOSE_SAMPLE = 1
_PURPOSE_REFINE = 2
_PURPOSE_START = 3


def _generator(rng_spec: RngSpec, purpose, level, path_index):
    bitgen = np.random.Philox(counter=[0, purpose, level, path_index],
                              key=[rng_spec.seed, rng_spec.stream_id])
    return np.random.Generator(bitgen)


def _level_of(grid: TimeGrid):
    return int(np.log2(grid.n_steps))


def sample_ensemble(grid: TimeGrid, n_paths, n_particles, rng_spec: RngSpec,
                    start_points=None):
    """Draw independent Brownian paths for each particle on the given grid.

    Parameters
    ----------
    start_points : None, (n_particles, 3) or (n_paths, n_particles, 3)
        Starting positions at t = -T; the origin when omitted.
    """
    if n_paths < 1:
        raise InvalidGrid("n_paths must be >= 1")
    if start_points is None:
        starts = np.zeros((n_paths, n_particles, 3))
    else:
        starts = np.asarray(start_points, dtype=float)
        if starts.shape == (n_particles, 3):
            starts = np.broadcast_to(starts, (n_paths, n_particles, 3)).copy()
        elif starts.shape != (n_paths, n_particles, 3):
            raise InvalidGrid("start_points must be (n_particles,3) or (n_paths,n_particles,3)")
    m = grid.n_steps
    level = _level_of(grid)
    sd = np.sqrt(grid.dt)
    pos = np.empty((n_paths, m + 1, n_particles, 3))
    for p in range(n_paths):
        gen = _generator(rng_spec, _PURPOSE_SAMPLE, level, p)
        inc = gen.standard_normal((m, n_particles, 3)) * sd
        pos[p, 0] = starts[p]
        np.cumsum(inc, axis=0, out=inc)
        pos[p, 1:] = starts[p] + inc
    return PathEnsemble(grid=grid, n_paths=n_paths, start_points=starts,
                        positions=pos, rng_spec=rng_spec,
                        lineage=(("sample", level),))


def sample_start_points(n_paths, n_particles, center, cov_scale, rng_spec: RngSpec):
    """Gaussian start points ~ N(center, cov_scale * I) drawn on their own stream."""
    gen = _generator(rng_spec, _PURPOSE_START, 0, 0)
    center = np.asarray(center, dtype=float).reshape(n_particles, 3)
    return center + np.sqrt(cov_scale) * gen.standard_normal((n_paths, n_particles, 3))


def refine(ensemble: PathEnsemble, levels=1):
    """Midpoint refinement: halve the step, keeping coarse positions exactly.

    New midpoints are conditioned Brownian bridge draws,
    N((B_m + B_{m+1})/2, dt/4), using the finer level's counter block, so a
    refined ensemble is reproducible from (rng_spec, lineage) alone.
    """
    out = ensemble
    for _ in range(levels):
        grid = out.grid
        new_level = _level_of(grid) + 1
        m = grid.n_steps
        new_grid = TimeGrid(t_horizon=grid.t_horizon, n_steps=2 * m, tau=grid.tau)
        sd = np.sqrt(grid.dt / 4.0)
        pos = np.empty((out.n_paths, 2 * m + 1, out.n_particles, 3))
        pos[:, 0::2] = out.positions
        for p in range(out.n_paths):
            gen = _generator(out.rng_spec, _PURPOSE_REFINE, new_level, p)
            noise = gen.standard_normal((m, out.n_particles, 3)) * sd
            pos[p, 1::2] = 0.5 * (out.positions[p, :-1] + out.positions[p, 1:]) + noise
        out = PathEnsemble(grid=new_grid, n_paths=out.n_paths,
                           start_points=out.start_points, positions=pos,
                           rng_spec=out.rng_spec,
                           lineage=out.lineage + (("refine", new_level),))
    return out


def clamp_time(grid: TimeGrid, t):
    """Clip a time (or array of times) to the horizon [-T, T]."""
    return np.clip(t, -grid.t_horizon, grid.t_horizon)


def dump_ensemble(ensemble: PathEnsemble, path):
    """Binary dump; restore_ensemble reproduces the object exactly."""
    np.savez_compressed(
        path,
        positions=ensemble.positions,
        start_points=ensemble.start_points,
        t_horizon=ensemble.grid.t_horizon,
        n_steps=ensemble.grid.n_steps,
        tau=ensemble.grid.tau,
        seed=ensemble.rng_spec.seed,
        stream_id=ensemble.rng_spec.stream_id,
        lineage=np.array([f"{k}:{v}" for k, v in ensemble.lineage]),
    )


def restore_ensemble(path):
    d = np.load(path, allow_pickle=False)
    grid = TimeGrid(t_horizon=float(d["t_horizon"]), n_steps=int(d["n_steps"]),
                    tau=float(d["tau"]))
    lineage = tuple((s.split(":")[0], int(s.split(":")[1])) for s in d["lineage"])
    pos = d["positions"]
    return PathEnsemble(grid=grid, n_paths=pos.shape[0],
                        start_points=d["start_points"], positions=pos,
                        rng_spec=RngSpec(seed=int(d["seed"]), stream_id=int(d["stream_id"])),
                        lineage=lineage)
