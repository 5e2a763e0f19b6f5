"""Reading and writing problems in the BAL ("Bundle Adjustment in the Large") text format.

Layout of a file::

    <num_cameras> <num_points> <num_observations>
    <camera_index> <point_index> <u> <v>        (num_observations lines)
    <camera value>                               (9 * num_cameras lines)
    <point value>                                (3 * num_points lines)

Each camera is ``omega(3) t(3) f k1 k2``.  Tokens may be split across lines
arbitrarily; only their order matters when parsing.
"""

from __future__ import annotations

import bz2
import gzip
import io
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterator, NamedTuple

import numpy as np


class BalParseError(ValueError):
    """Malformed BAL input.  ``lineno`` is 1-based (0 when unknown)."""

    def __init__(self, message: str, lineno: int = 0):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


@dataclass(eq=False)
class BalProblem:
    cameras: np.ndarray        # (b, 9) float64: omega, t, f, k1, k2
    points: np.ndarray         # (a, 3) float64
    camera_index: np.ndarray   # (o,) int64
    point_index: np.ndarray    # (o,) int64
    observations: np.ndarray   # (o, 2) float64, pixels

    def __post_init__(self):
        self.cameras = np.asarray(self.cameras, dtype=np.float64).reshape(-1, 9)
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.camera_index = np.asarray(self.camera_index, dtype=np.int64).reshape(-1)
        self.point_index = np.asarray(self.point_index, dtype=np.int64).reshape(-1)
        self.observations = np.asarray(self.observations, dtype=np.float64).reshape(-1, 2)

    @property
    def num_cameras(self) -> int:
        return self.cameras.shape[0]

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    @property
    def num_observations(self) -> int:
        return self.observations.shape[0]

    def validate(self) -> None:
        o = self.num_observations
        if not (len(self.camera_index) == len(self.point_index) == o):
            raise ValueError("observation arrays have inconsistent lengths")
        if o == 0:
            return
        if self.camera_index.min() < 0 or self.camera_index.max() >= self.num_cameras:
            raise ValueError("camera index out of range")
        if self.point_index.min() < 0 or self.point_index.max() >= self.num_points:
            raise ValueError("point index out of range")
        keys = self.point_index * max(self.num_cameras, 1) + self.camera_index
        if np.unique(keys).size != o:
            raise ValueError("duplicate (camera, point) observation")

    def copy(self) -> "BalProblem":
        return BalProblem(self.cameras.copy(), self.points.copy(),
                          self.camera_index.copy(), self.point_index.copy(),
                          self.observations.copy())

    def __eq__(self, other):
        if not isinstance(other, BalProblem):
            return NotImplemented
        # bitwise comparison so that -0.0 != 0.0 and NaN payloads count
        pairs = [(self.cameras, other.cameras), (self.points, other.points),
                 (self.observations, other.observations)]
        return (all(x.shape == y.shape and np.array_equal(x.view(np.uint64), y.view(np.uint64))
                    for x, y in pairs)
                and np.array_equal(self.camera_index, other.camera_index)
                and np.array_equal(self.point_index, other.point_index))


class Summary(NamedTuple):
    num_points: int
    num_cameras: int
    num_observations: int
    observations_per_point: float


def _tokens(stream: IO[str]) -> Iterator[tuple[str, int]]:
    for lineno, line in enumerate(stream, start=1):
        for tok in line.split():
            yield tok, lineno


def parse_bal(stream: IO[str] | str) -> BalProblem:
    """Parse BAL text from a stream (or a string holding the whole file)."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    toks = _tokens(stream)
    last_line = 0

    def take(what: str) -> tuple[str, int]:
        nonlocal last_line
        try:
            tok, ln = next(toks)
        except StopIteration:
            raise BalParseError(f"unexpected end of input while reading {what}", last_line) from None
        last_line = ln
        return tok, ln

    def take_int(what: str) -> tuple[int, int]:
        tok, ln = take(what)
        try:
            return int(tok), ln
        except ValueError:
            raise BalParseError(f"expected integer for {what}, got {tok!r}", ln) from None

    def take_float(what: str) -> float:
        tok, ln = take(what)
        try:
            return float(tok)
        except ValueError:
            raise BalParseError(f"expected number for {what}, got {tok!r}", ln) from None

    b, _ = take_int("camera count")
    a, _ = take_int("point count")
    o, ln = take_int("observation count")
    if min(a, b, o) < 0:
        raise BalParseError("negative count in header", ln)

    cam_idx = np.empty(o, dtype=np.int64)
    pt_idx = np.empty(o, dtype=np.int64)
    obs = np.empty((o, 2))
    seen: set[tuple[int, int]] = set()
    for k in range(o):
        c, ln = take_int(f"camera index of observation {k}")
        p, _ = take_int(f"point index of observation {k}")
        if not 0 <= c < b:
            raise BalParseError(f"camera index {c} out of range [0, {b})", ln)
        if not 0 <= p < a:
            raise BalParseError(f"point index {p} out of range [0, {a})", ln)
        if (c, p) in seen:
            raise BalParseError(f"duplicate observation of point {p} by camera {c}", ln)
        seen.add((c, p))
        cam_idx[k] = c
        pt_idx[k] = p
        obs[k, 0] = take_float(f"u of observation {k}")
        obs[k, 1] = take_float(f"v of observation {k}")

    cams = np.array([take_float("camera parameter") for _ in range(9 * b)]).reshape(b, 9)
    pts = np.array([take_float("point coordinate") for _ in range(3 * a)]).reshape(a, 3)

    extra = next(toks, None)
    if extra is not None:
        raise BalParseError(
            f"trailing data {extra[0]!r}; header declares {o} observations", extra[1])
    return BalProblem(cams, pts, cam_idx, pt_idx, obs)


def write_bal(problem: BalProblem) -> str:
    """Serialise to BAL text.  ``repr`` gives shortest round-trip floats."""
    out = [f"{problem.num_cameras} {problem.num_points} {problem.num_observations}"]
    for c, p, (u, v) in zip(problem.camera_index.tolist(), problem.point_index.tolist(),
                            problem.observations.tolist()):
        out.append(f"{c} {p} {u!r} {v!r}")
    out.extend(repr(x) for x in problem.cameras.ravel().tolist())
    out.extend(repr(x) for x in problem.points.ravel().tolist())
    return "\n".join(out) + "\n"


def summarize(problem: BalProblem) -> Summary:
    a, o = problem.num_points, problem.num_observations
    return Summary(a, problem.num_cameras, o, o / a if a else 0.0)


def open_text(path: str | Path) -> IO[str]:
    """Open plain, gzip or bzip2 text, sniffing the compression from magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(3)
    if magic[:2] == b"\x1f\x8b":
        return gzip.open(path, "rt", encoding="ascii")
    if magic == b"BZh":
        return bz2.open(path, "rt", encoding="ascii")
    return open(path, "rt", encoding="ascii")


def load_bal(path: str | Path) -> BalProblem:
    with open_text(path) as fh:
        return parse_bal(fh)


def save_bal(problem: BalProblem, path: str | Path) -> None:
    text = write_bal(problem)
    if str(path).endswith(".gz"):
        with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as fh:
            fh.write(text.encode("ascii"))
    else:
        Path(path).write_text(text, encoding="ascii")
