"""Brownian path sampling and smooth adapted approximations.

A sampled path is stored densely at a fixed step ``dt_path``; its smooth
companion is the convolution of the piecewise-linear interpolant with a
compactly supported averaging kernel whose support sits on the recent past,
so the smoothed value at time t only looks at the window [t - eps, t].
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ResolutionError, ShapeError

_SEED_SENTINEL = 2**64 - 1  # recorded when a path was injected, not sampled

_PATH_MAGIC = b"SPMEPATH"
_PATH_VERSION = 1


class Mollifier:
    """Smooth averaging kernel supported in (0, 1), tabulated at midpoints.

    The default profile is the bump ``c * exp(-1 / (r (1 - r)))``; the
    normalisation constant is computed numerically on the tabulation grid so
    the discrete kernel has exactly unit mass there. Because every derivative
    of the bump vanishes at the endpoints, the midpoint rule converges
    super-algebraically and 256 nodes put the tabulation error far below the
    quadrature tolerances used in this package.
    """

    def __init__(self, n_nodes: int = 256):
        if n_nodes < 64:
            raise ConfigurationError("kernel needs at least 64 quadrature nodes")
        self.n_nodes = int(n_nodes)
        r = (np.arange(self.n_nodes) + 0.5) / self.n_nodes
        w = 1.0 / self.n_nodes
        f = r * (1.0 - r)
        raw = np.exp(-1.0 / f)
        c = 1.0 / (w * raw.sum())
        self.nodes = r
        self.weight = w
        self.values = c * raw
        # d/dr exp(-1/f) = exp(-1/f) * (1 - 2r) / f^2
        self.dvalues = c * raw * (1.0 - 2.0 * r) / f**2
        self.first_moment = float(w * np.sum(r * self.values))

    def __repr__(self):
        return f"Mollifier(n_nodes={self.n_nodes})"


_DEFAULT_KERNEL = Mollifier()


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Uniformly sampled Brownian trajectory starting at 0."""

    t: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    seed: int

    def __post_init__(self):
        t = np.ascontiguousarray(np.asarray(self.t, dtype=float))
        v = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)
        if t.shape != v.shape or t.ndim != 1 or t.size < 2:
            raise ShapeError("path needs matching 1D t and value arrays, length >= 2")
        if v[0] != 0.0:
            raise ConfigurationError("Brownian path must start at 0")
        dts = np.diff(t)
        if t[0] != 0.0 or np.any(dts <= 0):
            raise ConfigurationError("sample times must increase strictly from 0")
        if not np.allclose(dts, dts[0], rtol=1e-9, atol=0.0):
            raise ConfigurationError("sample times must be uniformly spaced")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    def value_at(self, times) -> np.ndarray | float:
        """Piecewise-linear interpolant, extended by its start value at 0."""
        out = np.interp(times, self.t, self.values)
        return float(out) if np.isscalar(times) else out

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def digest(self) -> str:
        return hashlib.sha256(self.values.tobytes()).hexdigest()

    @classmethod
    def from_increments(cls, increments, dt: float, seed: int = _SEED_SENTINEL):
        inc = np.asarray(increments, dtype=float)
        values = np.concatenate([[0.0], np.cumsum(inc)])
        t = dt * np.arange(values.size)
        return cls(t=t, values=values, seed=seed)

    @classmethod
    def from_values(cls, t, values, seed: int = _SEED_SENTINEL):
        return cls(t=np.asarray(t, float), values=np.asarray(values, float), seed=seed)


def _resolve_seed(seed) -> tuple[np.random.Generator, int]:
    if isinstance(seed, np.random.SeedSequence):
        token = int(seed.generate_state(1, dtype=np.uint64)[0])
        return np.random.default_rng(seed), token
    token = int(seed)
    return np.random.default_rng(token), token


def path_seed_sequence(master_seed: int, index: int) -> np.random.SeedSequence:
    """Splittable-generator contract: path ``index`` under a master seed."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))


def sample_path(horizon: float, dt_path: float, seed) -> BrownianPath:
    """Sample a standard Brownian path on [0, horizon] at uniform step dt_path.

    The same (seed, horizon, dt_path) triple yields a bit-identical path.
    ``seed`` is either an integer or a numpy ``SeedSequence``.
    """
    if not (horizon > 0 and dt_path > 0):
        raise ConfigurationError("horizon and dt_path must be positive")
    if horizon / dt_path < 2:
        raise ConfigurationError("need horizon / dt_path >= 2")
    rng, token = _resolve_seed(seed)
    n_steps = int(np.ceil(horizon / dt_path - 1e-12))
    increments = rng.normal(0.0, np.sqrt(dt_path), size=n_steps)
    return BrownianPath.from_increments(increments, dt_path, seed=token)


@dataclass(frozen=True, eq=False)
class MollifiedPath:
    """Smooth adapted approximation of a Brownian path at scale epsilon.

    ``values`` tabulates the smoothed path on the source sample grid;
    off-grid queries are answered by on-demand convolution against the
    kernel so the solver can evaluate the drift at its adaptive times.
    """

    path: BrownianPath
    epsilon: float
    values: np.ndarray = field(repr=False)
    kernel_moment: float
    kernel: Mollifier = field(repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.shape != self.path.t.shape:
            raise ShapeError("smoothed values must live on the source time grid")

    @property
    def t(self) -> np.ndarray:
        return self.path.t

    def value_at(self, time: float) -> float:
        """Convolution value at an arbitrary time (window [time-eps, time])."""
        s = time - self.epsilon * self.kernel.nodes
        b = _window_interp(self.path, s)
        return float(self.kernel.weight * np.dot(self.kernel.values, b))

    def drift_at(self, time: float) -> float:
        """Time derivative of the smoothed path, via the kernel derivative."""
        s = time - self.epsilon * self.kernel.nodes
        b = _window_interp(self.path, s)
        return float(self.kernel.weight * np.dot(self.kernel.dvalues, b) / self.epsilon)

    def shift_at(self, time: float) -> float:
        """Gap B_t - B^eps_t entering the time-dependent shift."""
        return float(self.path.value_at(time)) - self.value_at(time)


def _window_interp(path: BrownianPath, s: np.ndarray) -> np.ndarray:
    # interpolation restricted to the bracketing slice (hot path in the solver);
    # s is decreasing, so s[-1] is the window start and s[0] its end
    lo = max(int(np.searchsorted(path.t, s[-1]) - 1), 0)
    hi = min(max(int(np.searchsorted(path.t, s[0]) + 1), 2), path.t.size)
    lo = max(min(lo, hi - 2), 0)
    return np.interp(s, path.t[lo:hi], path.values[lo:hi])


def mollify(
    path: BrownianPath, epsilon: float, rho: Mollifier | None = None
) -> MollifiedPath:
    """Build the smooth adapted approximation of ``path`` at scale ``epsilon``.

    Requires epsilon >= 2 dt_path so the averaging window is resolved by the
    samples. For times below epsilon the path is extended to the left by its
    start value 0, which keeps the kernel mass at unity and the smoothed path
    pinned to 0 at t = 0.
    """
    if epsilon <= 0:
        raise ConfigurationError("epsilon must be positive")
    if epsilon < 2.0 * path.dt:
        raise ResolutionError(
            f"epsilon={epsilon} is below 2*dt_path={2 * path.dt}; "
            "kernel window is unresolved"
        )
    kernel = rho if rho is not None else _DEFAULT_KERNEL
    # sample matrix (n_nodes, n_times), chunked to bound transient memory
    values = np.empty_like(path.values)
    chunk = max(1, 4_000_000 // kernel.n_nodes)
    for start in range(0, path.t.size, chunk):
        tt = path.t[start : start + chunk]
        s = tt[None, :] - epsilon * kernel.nodes[:, None]
        b = np.interp(s, path.t, path.values)
        values[start : start + chunk] = kernel.weight * (kernel.values @ b)
    return MollifiedPath(
        path=path,
        epsilon=float(epsilon),
        values=values,
        kernel_moment=kernel.first_moment,
        kernel=kernel,
    )


@dataclass(frozen=True)
class HoelderEstimate:
    """Smallest sampled constant c with |B_t - B_s| <= c |t-s|^alpha."""

    alpha: float
    c_alpha: float


def hoelder_constant(path: BrownianPath, alpha: float) -> HoelderEstimate:
    """Exact maximum of |B_t - B_s| / |t-s|^alpha over all sample pairs.

    Pairs closer than one path step are excluded (they carry no information
    beyond the sampling). Evaluated lag by lag, so the cost is quadratic in
    the number of samples but fully vectorised.
    """
    if not (1.0 / 3.0 < alpha < 0.5):
        raise ConfigurationError(f"alpha must lie in (1/3, 1/2), got {alpha}")
    v = path.values
    dt = path.dt
    best = 0.0
    for lag in range(1, v.size):
        gap = np.abs(v[lag:] - v[:-lag]).max()
        best = max(best, gap / (lag * dt) ** alpha)
    return HoelderEstimate(alpha=float(alpha), c_alpha=float(best))


def sup_distance(path: BrownianPath, mpath: MollifiedPath) -> float:
    """Sup-norm gap between a path and its smoothed companion on the grid."""
    if mpath.path.t.shape != path.t.shape or not np.array_equal(mpath.path.t, path.t):
        raise ShapeError("path and mollified path must share the same time grid")
    return float(np.abs(path.values - mpath.values).max())


# ---------------------------------------------------------------------------
# serialization


def write_path_csv(path: BrownianPath, stream, mpath: MollifiedPath | None = None):
    """Write columns t, B, B_eps (B_eps blank when no smoothed path given)."""
    stream.write("t,B,B_eps\n")
    smooth = mpath.values if mpath is not None else None
    for k in range(path.t.size):
        be = repr(float(smooth[k])) if smooth is not None else ""
        stream.write(f"{float(path.t[k])!r},{float(path.values[k])!r},{be}\n")


def write_path_binary(path: BrownianPath, stream, mpath: MollifiedPath | None = None):
    """Compact little-endian record: header(seed, dt, epsilon) + float64 data."""
    has_smooth = mpath is not None
    eps = mpath.epsilon if has_smooth else float("nan")
    header = struct.pack(
        "<8sIIQddQ",
        _PATH_MAGIC,
        _PATH_VERSION,
        1 if has_smooth else 0,
        path.seed % 2**64,
        path.dt,
        eps,
        path.t.size,
    )
    stream.write(header)
    stream.write(path.values.astype("<f8").tobytes())
    if has_smooth:
        stream.write(mpath.values.astype("<f8").tobytes())


def read_path_binary(stream) -> tuple[BrownianPath, MollifiedPath | None]:
    head = stream.read(struct.calcsize("<8sIIQddQ"))
    magic, version, flags, seed, dt, eps, n = struct.unpack("<8sIIQddQ", head)
    if magic != _PATH_MAGIC or version != _PATH_VERSION:
        raise ConfigurationError("not a spmelab binary path record")
    values = np.frombuffer(stream.read(8 * n), dtype="<f8").astype(float)
    path = BrownianPath.from_values(dt * np.arange(n), values, seed=seed)
    mpath = None
    if flags & 1:
        smooth = np.frombuffer(stream.read(8 * n), dtype="<f8").astype(float)
        mpath = MollifiedPath(
            path=path,
            epsilon=eps,
            values=smooth,
            kernel_moment=_DEFAULT_KERNEL.first_moment,
            kernel=_DEFAULT_KERNEL,
        )
    return path, mpath


def path_to_bytes(path: BrownianPath, mpath: MollifiedPath | None = None) -> bytes:
    buf = io.BytesIO()
    write_path_binary(path, buf, mpath)
    return buf.getvalue()
