"""Euler-Maruyama integration of the monitored-qubit master equation.

One Ito step from state rho with channel operators L_k, efficiencies eta_k,
Wiener increments dW_k and Hamiltonian H is

    rho' = rho - i[H, rho] dt + sum_k deco(L_k, rho) dt
                + sum_k sqrt(eta_k) noise(L_k, rho) dW_k
    dy_k = sqrt(eta_k) trace(L_k rho + rho L_k+) dt + dW_k

followed by a projection back into the Bloch ball if the Euler update
overshot (the event is counted, never silent).  The four standard detection
presets combine quantum-non-demolition (sigma_z) or fluorescence (sigma_-)
operators with homodyne (one channel) or heterodyne (the pair L, iL)
monitoring.

Randomness is counter based and fully documented: trajectory i of an
ensemble draws its Wiener increments from a Philox stream keyed by
``derive_seed(base_seed, i)``; within a stream, increments are consumed in
step-major, channel-minor order.  Identical inputs therefore give
bit-identical output regardless of batching or execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qubit_state import (
    DensityMatrix,
    IDENTITY,
    LindbladChannel,
    ModelSpec,
    SIGMA_MINUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    StateValidationError,
    as_matrix2,
    dagger,
    density_from_bloch,
)

PRESET_NAMES = ("HeH", "HeN", "HoH", "HoN")


class SimulationError(ValueError):
    """Raised on invalid integration arguments."""


def preset(name: str, eta: float) -> ModelSpec:
    """One of the four standard detection models, H = 0.

    HeH: heterodyne QND, channels (sigma_z, eta) and (i sigma_z, eta).
    HeN: heterodyne fluorescence, channels (sigma_-, eta) and (i sigma_-, eta).
    HoH: homodyne QND, single channel (sigma_z, eta).
    HoN: homodyne fluorescence, single channel (sigma_-, eta).

    The doubled relaxation drift of the heterodyne cases comes out of the
    channel sum automatically, since the deco term is phase blind.
    """
    if not (0.0 <= eta <= 1.0):
        raise SimulationError(f"eta {eta} outside [0, 1]")
    h0 = np.zeros((2, 2), dtype=complex)
    table = {
        "HeH": (SIGMA_Z, 1j * SIGMA_Z),
        "HeN": (SIGMA_MINUS, 1j * SIGMA_MINUS),
        "HoH": (SIGMA_Z,),
        "HoN": (SIGMA_MINUS,),
    }
    key = {n.lower(): n for n in PRESET_NAMES}.get(str(name).lower())
    if key is None:
        raise SimulationError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    return ModelSpec(h0, tuple(LindbladChannel(op, eta) for op in table[key]))


def derive_seed(base_seed: int, index: int) -> int:
    """Fixed splitting rule mapping (base_seed, trajectory index) to a seed."""
    ss = np.random.SeedSequence([int(base_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


# -- trajectory containers ---------------------------------------------------

@dataclass(frozen=True)
class TrajectoryPoint:
    time: float
    state: "BlochVector"
    records: tuple[float, ...]


@dataclass
class Trajectory:
    """Time-ordered Bloch states and measurement records of one realization.

    ``times`` has shape (n_points,), ``xyz`` (n_points, 3) and ``records``
    (n_points, n_channels); records[i] holds the dy increments accumulated
    between the stored points i-1 and i (zeros at the initial point).
    Stored points are spaced ``dt * record_stride``.
    """

    times: np.ndarray
    xyz: np.ndarray
    records: np.ndarray
    seed: int
    dt: float
    record_stride: int = 1
    n_projections: int = 0

    @property
    def points(self) -> list[TrajectoryPoint]:
        from .qubit_state import BlochVector
        return [
            TrajectoryPoint(float(t), BlochVector(*map(float, v)), tuple(map(float, r)))
            for t, v, r in zip(self.times, self.xyz, self.records)
        ]

    def final_state(self) -> np.ndarray:
        return self.xyz[-1].copy()


@dataclass
class Ensemble:
    trajectories: list[Trajectory]
    model: ModelSpec

    def __post_init__(self):
        if self.trajectories:
            t0 = self.trajectories[0]
            for t in self.trajectories:
                if t.dt != t0.dt or t.times.shape != t0.times.shape:
                    raise SimulationError("ensemble trajectories must share dt and horizon")

    def final_states(self) -> np.ndarray:
        return np.stack([t.xyz[-1] for t in self.trajectories])


# -- core stepping -----------------------------------------------------------

def _superop_matrix(fn) -> np.ndarray:
    """4x4 matrix of a linear map on 2x2 matrices, row-major flattening."""
    cols = []
    for idx in range(4):
        e = np.zeros(4, dtype=complex)
        e[idx] = 1.0
        cols.append(fn(e.reshape(2, 2)).reshape(4))
    return np.stack(cols, axis=1)


class _Stepper:
    """Precompiled batched Euler-Maruyama stepper for one model."""

    def __init__(self, model: ModelSpec):
        self.model = model
        H = model.hamiltonian

        def drift_map(m):
            out = -1j * (H @ m - m @ H)
            for ch in model.channels:
                L = ch.operator
                LdL = dagger(L) @ L
                out = out + L @ m @ dagger(L) - 0.5 * (LdL @ m + m @ LdL)
            return out

        self.A = _superop_matrix(drift_map)
        self.B = [
            _superop_matrix(lambda m, L=ch.operator: L @ m + m @ dagger(L))
            for ch in model.channels
        ]
        self.sqrt_eta = np.array([np.sqrt(ch.efficiency) for ch in model.channels])

    def step(self, rho_vec: np.ndarray, dt: float, dW: np.ndarray):
        """One Ito step for a batch.

        rho_vec: (n, 4) complex, row-major flattened density matrices.
        dW: (n, m) Wiener increments.
        Returns (rho_vec', dy (n, m), indices of ball-projected trajectories).
        """
        new = rho_vec + dt * (rho_vec @ self.A.T)
        m = len(self.B)
        dy = np.empty((rho_vec.shape[0], m))
        for k in range(m):
            s = rho_vec @ self.B[k].T
            expect = (s[:, 0] + s[:, 3]).real
            g = s - expect[:, None] * rho_vec
            new = new + (self.sqrt_eta[k] * dW[:, k])[:, None] * g
            dy[:, k] = self.sqrt_eta[k] * expect * dt + dW[:, k]

        x = (new[:, 1] + new[:, 2]).real
        y = (1j * (new[:, 1] - new[:, 2])).real
        z = (new[:, 0] - new[:, 3]).real
        norm2 = x * x + y * y + z * z
        out = np.where(norm2 > 1.0)[0]
        if out.size:
            scale = 1.0 / np.sqrt(norm2[out])
            xs, ys, zs = x[out] * scale, y[out] * scale, z[out] * scale
            new[out, 0] = 0.5 * (1.0 + zs)
            new[out, 1] = 0.5 * (xs - 1j * ys)
            new[out, 2] = 0.5 * (xs + 1j * ys)
            new[out, 3] = 0.5 * (1.0 - zs)
        return new, dy, out

    @staticmethod
    def bloch(rho_vec: np.ndarray) -> np.ndarray:
        x = (rho_vec[:, 1] + rho_vec[:, 2]).real
        y = (1j * (rho_vec[:, 1] - rho_vec[:, 2])).real
        z = (rho_vec[:, 0] - rho_vec[:, 3]).real
        return np.stack([x, y, z], axis=1)


def step_ito(model: ModelSpec, rho: DensityMatrix | np.ndarray, dt: float,
             noise) -> tuple[DensityMatrix, np.ndarray]:
    """Single Euler-Maruyama step; returns (new state, dy record increments).

    ``noise`` is the vector of Wiener increments, one per channel, in units
    of sqrt(time).  The updated state is projected back onto the Bloch ball
    if the Euler update left it.
    """
    if dt <= 0.0 or not np.isfinite(dt):
        raise SimulationError(f"dt must be positive and finite, got {dt}")
    dW = np.asarray(noise, dtype=float).reshape(-1)
    if dW.shape[0] != model.n_channels:
        raise SimulationError(
            f"noise has {dW.shape[0]} increments for {model.n_channels} channels")
    if not np.all(np.isfinite(dW)):
        raise SimulationError("noise increments must be finite")
    if not isinstance(rho, DensityMatrix):
        rho = DensityMatrix(rho)
    stepper = _Stepper(model)
    vec = rho.matrix.reshape(1, 4)
    new, dy, _ = stepper.step(vec, float(dt), dW.reshape(1, -1))
    m = new.reshape(2, 2)
    m = 0.5 * (m + dagger(m))  # symmetrize float dust before validation
    return DensityMatrix(m, tol=1e-9), dy.reshape(-1)


def _run_batch(model: ModelSpec, rho0: DensityMatrix, dt: float, n_steps: int,
               seeds: list[int], record_stride: int, chunk: int = 512):
    """Integrate a batch of trajectories with per-trajectory noise streams.

    Returns (times, xyz (n, K, 3), records (n, K, m), projection counts).
    """
    n = len(seeds)
    m = model.n_channels
    stepper = _Stepper(model)
    gens = [_stream(s) for s in seeds]

    n_stored = n_steps // record_stride + 1
    times = np.arange(n_stored) * (dt * record_stride)
    xyz = np.empty((n, n_stored, 3))
    records = np.zeros((n, n_stored, m))
    projections = np.zeros(n, dtype=int)

    rho = np.tile(rho0.matrix.reshape(4), (n, 1)).astype(complex)
    xyz[:, 0, :] = stepper.bloch(rho)

    acc_dy = np.zeros((n, m))
    stored = 1
    step_idx = 0
    while step_idx < n_steps:
        span = min(chunk, n_steps - step_idx)
        if m > 0:
            noise = np.empty((span, n, m))
            sqrt_dt = np.sqrt(dt)
            for i, g in enumerate(gens):
                noise[:, i, :] = g.standard_normal((span, m)) * sqrt_dt
        else:
            noise = np.zeros((span, n, 0))
        for s in range(span):
            rho, dy, out = stepper.step(rho, dt, noise[s])
            if out.size:
                projections[out] += 1
            acc_dy += dy
            step_idx += 1
            if step_idx % record_stride == 0:
                xyz[:, stored, :] = stepper.bloch(rho)
                records[:, stored, :] = acc_dy
                acc_dy = np.zeros((n, m))
                stored += 1
    return times, xyz, records, projections


def simulate_trajectory(model: ModelSpec, rho0: DensityMatrix | np.ndarray,
                        dt: float, horizon: float, seed: int,
                        record_stride: int = 1) -> Trajectory:
    """Integrate one realization; deterministic in all arguments.

    The number of steps is round(horizon / dt); every stored point lies in
    the closed Bloch ball.  ``record_stride`` thins storage (the integration
    step is always dt); records at a stored point accumulate the dy
    increments since the previous stored point.
    """
    n_steps = _check_grid(dt, horizon, record_stride)
    if not isinstance(rho0, DensityMatrix):
        rho0 = DensityMatrix(rho0)
    times, xyz, records, proj = _run_batch(model, rho0, dt, n_steps,
                                           [int(seed)], record_stride)
    return Trajectory(times, xyz[0], records[0], int(seed), dt,
                      record_stride, int(proj[0]))


def simulate_ensemble(model: ModelSpec, rho0: DensityMatrix | np.ndarray,
                      dt: float, horizon: float, n: int, base_seed: int,
                      record_stride: int = 1) -> Ensemble:
    """n independent realizations; trajectory i uses derive_seed(base_seed, i).

    Each trajectory is bit-identical to ``simulate_trajectory`` run with its
    derived seed, so results do not depend on batching or execution order.
    """
    if n < 1:
        raise SimulationError("n must be at least 1")
    n_steps = _check_grid(dt, horizon, record_stride)
    if not isinstance(rho0, DensityMatrix):
        rho0 = DensityMatrix(rho0)
    seeds = [derive_seed(base_seed, i) for i in range(n)]
    times, xyz, records, proj = _run_batch(model, rho0, dt, n_steps, seeds,
                                           record_stride)
    trajectories = [
        Trajectory(times, xyz[i], records[i], seeds[i], dt, record_stride, int(proj[i]))
        for i in range(n)
    ]
    return Ensemble(trajectories, model)


def _check_grid(dt: float, horizon: float, record_stride: int) -> int:
    if dt <= 0.0 or not np.isfinite(dt):
        raise SimulationError(f"dt must be positive and finite, got {dt}")
    if horizon <= dt:
        raise SimulationError(f"horizon {horizon} must exceed dt {dt}")
    if record_stride < 1:
        raise SimulationError("record_stride must be at least 1")
    n_steps = int(round(horizon / dt))
    # keep the endpoint on the stored grid
    n_steps -= n_steps % record_stride
    if n_steps < 1:
        raise SimulationError("horizon too short for the requested stride")
    return n_steps
