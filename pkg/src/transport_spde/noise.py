"""Driving paths: sampled Brownian motion, tabulated deterministic signals and
their piecewise-linear (Wong-Zakai) approximants."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import PathParseError, ResolutionError, UsageError

CLASSES = ("brownian", "deterministic", "smooth")


@dataclass(frozen=True)
class NoisePath:
    """Continuous path ``[0, T] -> R^N``, linear between its knots.

    Attributes
    ----------
    times, values
        Knot times (uniform, starting at 0) and values of shape ``(len(times), N)``.
    kind
        ``brownian``, ``deterministic`` or ``smooth`` (an approximant).
    seed, level
        Generator seed for Brownian paths, approximation level for approximants.
    """

    times: np.ndarray
    values: np.ndarray
    kind: str
    seed: Optional[int] = None
    level: Optional[int] = None
    parent_steps: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in CLASSES:
            raise UsageError(f"unknown path class {self.kind!r}")
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or t.size < 2 or v.shape[0] != t.size:
            raise UsageError("path needs at least two knots and one value row per knot")
        if v.shape[1] not in (1, 2):
            raise UsageError("only 1 or 2 channels are supported")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @property
    def steps(self) -> int:
        return self.times.size - 1

    def eval(self, t):
        """Linear interpolation between knots; returns ``(N,)`` or ``(len(t), N)``."""
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        tol = 1e-12 * max(1.0, self.T)
        if np.any(ts < -tol) or np.any(ts > self.T + tol):
            raise UsageError("time outside [0, T]")
        ts = np.clip(ts, 0.0, self.T)
        out = np.stack([np.interp(ts, self.times, self.values[:, j]) for j in range(self.channels)], axis=1)
        return out[0] if scalar else out

    def eval_derivative(self, t):
        """Piecewise-constant derivative (right-continuous, left limit at ``T``)."""
        if self.kind == "brownian":
            raise UsageError("a Brownian path is never differentiated; use an approximant")
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        slopes = np.diff(self.values, axis=0) / np.diff(self.times)[:, None]
        idx = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, self.steps - 1)
        out = slopes[idx]
        return out[0] if scalar else out

    def channel(self, j: int) -> "NoisePath":
        return NoisePath(self.times, self.values[:, j:j + 1], self.kind, self.seed, self.level, self.parent_steps)

    def with_channels(self, other: "NoisePath") -> "NoisePath":
        """Stack two single-channel paths on the same knots."""
        if self.channels + other.channels > 2 or not np.array_equal(self.times, other.times):
            raise UsageError("channels must share knots and total at most 2")
        return NoisePath(self.times, np.hstack([self.values, other.values]), self.kind, self.seed,
                         self.level, self.parent_steps)

    # -- I/O --------------------------------------------------------------
    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"beta{j + 1}" for j in range(self.channels)])
        for t, row in zip(self.times, self.values):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "NoisePath":
        """Read a ``t, beta1[, beta2]`` table (path or file-like); the mesh must be uniform."""
        if hasattr(source, "read"):
            text = source.read()
        else:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(io.StringIO(text))) if any(c.strip() for c in r)]
        if not rows:
            raise PathParseError("empty path table")
        start = 0
        try:
            float(rows[0][1][0])
        except (ValueError, IndexError):
            start = 1
        data = []
        width = None
        for line, r in rows[start:]:
            if width is None:
                width = len(r)
                if width not in (2, 3):
                    raise PathParseError("expected columns t, beta1[, beta2]", line)
            if len(r) != width:
                raise PathParseError(f"expected {width} columns, found {len(r)}", line)
            try:
                vals = [float(c) for c in r]
            except ValueError:
                raise PathParseError(f"non-numeric entry in {r!r}", line) from None
            if not all(math.isfinite(x) for x in vals):
                raise PathParseError("non-finite entry", line)
            data.append((line, vals))
        if len(data) < 2:
            raise PathParseError("need at least two samples", rows[-1][0])
        arr = np.array([v for _, v in data])
        t = arr[:, 0]
        if t[0] != 0.0:
            raise PathParseError("first time must be 0", data[0][0])
        if np.any(arr[0, 1:] != 0.0):
            raise PathParseError("path must start at 0", data[0][0])
        dt = np.diff(t)
        ref = (t[-1] - t[0]) / (len(t) - 1)
        bad = np.flatnonzero((dt <= 0) | (np.abs(dt - ref) > 1e-9 * max(1.0, t[-1])))
        if bad.size:
            raise PathParseError("times must be uniform and increasing", data[bad[0] + 1][0])
        times = np.linspace(0.0, t[-1], len(t))
        return cls(times, arr[:, 1:], "deterministic")

    @classmethod
    def from_function(cls, fn, T: float, M: int) -> "NoisePath":
        times = np.linspace(0.0, float(T), int(M) + 1)
        vals = np.asarray([np.atleast_1d(fn(t)) for t in times], dtype=float)
        vals = vals - vals[0]
        return cls(times, vals, "deterministic")

    @classmethod
    def zero(cls, T: float, M: int = 1, N: int = 1) -> "NoisePath":
        return cls(np.linspace(0.0, float(T), int(M) + 1), np.zeros((int(M) + 1, N)), "deterministic")


def sample_brownian(seed: int, T: float, M: int, N: int = 1) -> NoisePath:
    """Brownian path on ``M`` uniform steps from a counter-based (Philox) generator.

    Channel 1 uses the jumped Philox stream, so channel 0 does not depend on ``N``.
    """
    if M < 2:
        raise UsageError("need M >= 2")
    if N not in (1, 2):
        raise UsageError("only 1 or 2 channels are supported")
    # one stream per channel: channel 0 is the same for N = 1 and N = 2
    streams = [np.random.Philox(seed)]
    if N == 2:
        streams.append(np.random.Philox(seed).jumped())
    inc = np.stack([np.random.Generator(bg).standard_normal(M) for bg in streams], axis=1) * math.sqrt(T / M)
    vals = np.vstack([np.zeros((1, N)), np.cumsum(inc, axis=0)])
    return NoisePath(np.linspace(0.0, float(T), M + 1), vals, "brownian", seed=int(seed))


def wong_zakai(path: NoisePath, n: int, kernel: str = "linear") -> NoisePath:
    """Level-``n`` approximant of ``path``.

    ``kernel="linear"`` interpolates the parent linearly on ``n`` equal
    subintervals.  ``kernel="mollified"`` additionally convolves that polygon
    with a triangular kernel of width ``T/n`` (edge values held constant
    outside ``[0, T]``) and shifts so the result starts at 0.
    """
    n = int(n)
    if n < 1:
        raise UsageError("level must be >= 1")
    if n > path.steps:
        raise ResolutionError(f"level {n} exceeds the {path.steps} available steps")
    knots = np.linspace(0.0, path.T, n + 1)
    vals = path.eval(knots)
    if n == path.steps:
        vals = np.array(path.values)
    if kernel == "linear":
        return NoisePath(knots, vals, "smooth", path.seed, n, path.steps)
    if kernel != "mollified":
        raise UsageError(f"unknown kernel {kernel!r}")
    poly = NoisePath(knots, vals, "smooth")
    fine = np.array(path.times)
    width = path.T / n
    s, w = np.polynomial.legendre.leggauss(16)
    out = np.zeros((fine.size, path.channels))
    for half, sign in ((0.5 * (s + 1), 1.0), (0.5 * (s + 1), -1.0)):
        # triangular density 1 - |x| on [-1, 1], split into two halves
        xs = sign * half
        dens = (1.0 - half) * 0.5 * w
        for x, d in zip(xs, dens):
            out += d * poly.eval(np.clip(fine + x * width, 0.0, path.T))
    out -= out[0]
    return NoisePath(fine, out, "smooth", path.seed, n, path.steps, meta={"kernel": "mollified"})


def sup_distance(a: NoisePath, b: NoisePath) -> float:
    """Exact sup distance of two piecewise-linear paths on ``[0, T]``."""
    if not math.isclose(a.T, b.T, rel_tol=1e-12) or a.channels != b.channels:
        raise UsageError("paths must share horizon and channel count")
    t = np.union1d(a.times, b.times)
    return float(np.max(np.abs(a.eval(t) - b.eval(t))))
