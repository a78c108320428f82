"""Field transforms: flow shift, trivial extension, pressure, envelopes.

These operations move solver output between the laboratory frame and the
frame travelling with the driving path, convert densities to the pressure
variable p = m/(m-1) u^(m-1), and build the discrete upper envelope over a
family of pressure fields sampled on backwards parabolic windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d

from .brownian import BrownianPath, MollifiedPath
from .errors import ConfigurationError, RangeError, ShapeError
from .fields import DensityField, ExtendedField, PressureField, embed_in_ambient
from .solver import SolveTrace

AMBIENT_PAD_CELLS = 4  # extra cells beyond the largest expected displacement


def shift_field(field: ExtendedField, delta: float) -> ExtendedField:
    """Resample a field at x + delta (linear interpolation, fill outside).

    Positive delta pulls data leftwards: out(x) = in(x + delta). Linear
    interpolation preserves positivity and the maximum principle, and on a
    uniform grid a whole-cell shift is exact. The translated core must stay
    inside the ambient grid.
    """
    margin = field.margin()
    if abs(delta) > margin + 1e-12 * max(1.0, abs(delta)):
        raise RangeError(
            f"shift {delta} exceeds ambient margin {margin}",
            required_margin=abs(delta),
        )
    if delta == 0.0:
        return field
    values = np.interp(
        field.x + delta, field.x, field.values, left=field.fill_value, right=field.fill_value
    )
    return ExtendedField(
        x=field.x,
        values=values,
        fill_value=field.fill_value,
        core_lo=field.core_lo - delta,
        core_hi=field.core_hi - delta,
        time=field.time,
    )


def to_pressure(field, m: float) -> PressureField:
    """Pointwise pressure transform p = m/(m-1) u^(m-1); monotone in u."""
    if m <= 1:
        raise ConfigurationError(f"pressure transform needs m > 1, got {m}")
    if isinstance(field, DensityField):
        x = field.grid.centers()
        u = field.values
        t = field.time
    elif isinstance(field, ExtendedField):
        x = field.x
        u = field.values
        t = field.time
    else:
        raise ShapeError("expected a DensityField or ExtendedField")
    if np.any(u < 0):
        raise ConfigurationError("pressure transform needs non-negative values")
    p = m / (m - 1.0) * u ** (m - 1.0)
    return PressureField(x=x, values=p, m=m, time=t)


def from_pressure(pfield: PressureField) -> np.ndarray:
    """Inverse transform u = ((m-1) p / m)^(1/(m-1)) on the same grid."""
    m = pfield.m
    return ((m - 1.0) / m * np.clip(pfield.values, 0.0, None)) ** (1.0 / (m - 1.0))


def ambient_margin(nu: float, path_sup: float, h: float) -> float:
    """Allocation rule for the ambient grid: nu * sup|B| plus a few cells."""
    return abs(nu) * path_sup + AMBIENT_PAD_CELLS * h


def flow_frame(
    trace_or_fields,
    path: BrownianPath | MollifiedPath | None,
    mode: str,
    nu: float | None = None,
    fill: float | None = None,
    margin: float | None = None,
    subtract_fill: bool = False,
) -> list[ExtendedField]:
    """Translate time-indexed fields between laboratory and moving frames.

    ``to_moving`` evaluates each snapshot at x - nu * b(t) (the field seen
    from the frame in which the transport term vanishes); ``to_lab`` undoes
    it. ``path`` supplies b: the smoothed companion for finite-scale output,
    the raw path for limit proxies; None means b = 0. With ``subtract_fill``
    the fill floor is removed first and the extension is by zero (the limit
    proxy convention).
    """
    if mode not in ("to_moving", "to_lab"):
        raise ConfigurationError(f"unknown mode {mode!r}")

    if isinstance(trace_or_fields, SolveTrace):
        trace = trace_or_fields
        if nu is None:
            nu = trace.config.nu
        if fill is None:
            fill = trace.config.epsilon
        times = list(trace.times)
        sup = path.path.sup_norm() if isinstance(path, MollifiedPath) else (
            path.sup_norm() if path is not None else 0.0
        )
        if margin is None:
            margin = ambient_margin(nu, sup, trace.config.grid.h)
        centers = trace.config.grid.centers()
        base = []
        for t, f in zip(times, trace.snapshots):
            v = f.values - fill if subtract_fill else f.values
            fv = 0.0 if subtract_fill else fill
            base.append(
                embed_in_ambient(np.clip(v, 0.0, None) if subtract_fill else v,
                                 centers, margin, fv, time=t)
            )
    else:
        base = list(trace_or_fields)
        times = [f.time for f in base]
        if nu is None:
            raise ConfigurationError("nu is required for a bare field family")

    out = []
    for t, f in zip(times, base):
        b_t = _path_value(path, t)
        delta = -nu * b_t if mode == "to_moving" else nu * b_t
        try:
            out.append(shift_field(f, delta))
        except RangeError as err:
            raise RangeError(
                f"ambient grid too small at t={t}: needs margin {abs(delta)}",
                required_margin=abs(delta),
            ) from err
    return out


def _path_value(path, t: float) -> float:
    if path is None:
        return 0.0
    if isinstance(path, MollifiedPath):
        return float(np.interp(t, path.t, path.values))
    return float(path.value_at(t))


def upper_envelope(
    family,
    space_radius: float = 0.0,
    time_radius: float = 0.0,
) -> list[PressureField]:
    """Discrete upper envelope over a scale family of pressure frames.

    At each grid point (x, t) the envelope takes the maximum over every
    family member and over sampled (y, s) with |y - x| <= space_radius and
    s in [t - time_radius^2, t] (a backwards parabolic window; the point
    itself is always included). Enlarging the radii or the family can only
    increase the envelope.
    """
    members = _normalise_family(family)
    if not members:
        raise ConfigurationError("empty family")
    x = members[0][0].x
    times = [f.time for f in members[0]]
    m = members[0][0].m
    for frames in members:
        if len(frames) != len(times):
            raise ShapeError("family members must share snapshot times")
        for f, t in zip(frames, times):
            if f.x.shape != x.shape or not np.allclose(f.x, x):
                raise ShapeError("family members must share the ambient grid")
            if abs(f.time - t) > 1e-12:
                raise ShapeError("family members must share snapshot times")

    stack = np.array([[f.values for f in frames] for frames in members])
    over_eps = stack.max(axis=0)  # (n_times, n_x)

    h = float(x[1] - x[0]) if x.size > 1 else 1.0
    half_cells = int(np.floor(space_radius / h + 1e-12))
    if half_cells > 0:
        over_space = maximum_filter1d(
            over_eps, size=2 * half_cells + 1, axis=1, mode="nearest"
        )
    else:
        over_space = over_eps

    t_arr = np.asarray(times)
    window = time_radius**2
    out = []
    for k, t in enumerate(times):
        mask = (t_arr >= t - window - 1e-15) & (t_arr <= t + 1e-15)
        vals = over_space[mask].max(axis=0)
        out.append(PressureField(x=x, values=vals, m=m, time=t))
    return out


def _normalise_family(family) -> list[list[PressureField]]:
    if isinstance(family, PressureField):
        return [[family]]
    if isinstance(family, dict):
        items = [family[k] for k in sorted(family, reverse=True)]
    else:
        items = list(family)
    out = []
    for member in items:
        if isinstance(member, PressureField):
            out.append([member])
        else:
            out.append(list(member))
    return out


@dataclass(frozen=True)
class PressureResidualReport:
    """Discrete residual p_t - [(m-1) p p_xx + |p_x|^2] on interior cells."""

    times: np.ndarray
    max_norms: np.ndarray
    l1_norms: np.ndarray
    n_cells: np.ndarray

    @property
    def max_norm(self) -> float:
        return float(self.max_norms.max()) if self.max_norms.size else 0.0

    @property
    def l1_norm(self) -> float:
        return float(self.l1_norms.max()) if self.l1_norms.size else 0.0


def pressure_residual(
    pfields: list[PressureField],
    m: float | None = None,
    interior_bounds: list[tuple[float, float]] | None = None,
    collar_cells: int = 3,
) -> PressureResidualReport:
    """Residual of the pressure-form equation on transformed output.

    Uses a forward difference between consecutive time levels and centred
    differences in space, so the expected size is O(dt + h^2) on smooth
    regions. Evaluation is restricted to cells at least ``collar_cells``
    inside the supplied per-level interval bounds (the moving domain) at
    both participating levels.
    """
    if len(pfields) < 3:
        raise ShapeError("need at least 3 time levels")
    if m is None:
        m = pfields[0].m
    x = pfields[0].x
    h = float(x[1] - x[0])
    times, maxn, l1n, counts = [], [], [], []
    for k in range(len(pfields) - 1):
        p0, p1 = pfields[k], pfields[k + 1]
        dt = p1.time - p0.time
        if dt <= 0:
            raise ShapeError("time levels must increase")
        v = p0.values
        px = (v[2:] - v[:-2]) / (2.0 * h)
        pxx = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
        pt = (p1.values[1:-1] - v[1:-1]) / dt
        resid = pt - ((m - 1.0) * v[1:-1] * pxx + px**2)
        mask = np.ones(resid.size, dtype=bool)
        if interior_bounds is not None:
            inner = x[1:-1]
            for lvl in (k, min(k + 1, len(interior_bounds) - 1)):
                lo, hi = interior_bounds[lvl]
                mask &= (inner >= lo + collar_cells * h) & (
                    inner <= hi - collar_cells * h
                )
        r = resid[mask]
        times.append(p0.time)
        counts.append(int(r.size))
        maxn.append(float(np.abs(r).max()) if r.size else 0.0)
        l1n.append(float(h * np.abs(r).sum()) if r.size else 0.0)
    return PressureResidualReport(
        times=np.asarray(times),
        max_norms=np.asarray(maxn),
        l1_norms=np.asarray(l1n),
        n_cells=np.asarray(counts),
    )


def write_pressure_csv(frames: list[PressureField], stream):
    """Stream pressure frames as rows (t, x, p); header carries the exponent."""
    if frames:
        stream.write(f"# m={frames[0].m!r}\n")
    stream.write("t,x,p\n")
    for f in frames:
        for j in range(f.x.size):
            stream.write(f"{float(f.time)!r},{float(f.x[j])!r},{float(f.values[j])!r}\n")
