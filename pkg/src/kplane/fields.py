"""Sampled functions on R^d and on the k-plane domain, plus the KPT1 file format.

``GridField`` holds samples of a function on a uniform axis-aligned grid with
isotropic spacing.  ``Sinogram`` holds samples on Xi_k = V_{d-k}(R^d) x R^(d-k):
a list of frames and a shared uniform t-grid of values per frame.  Both can be
written to and read back bit-exactly from the "KPT1" binary format.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .errors import DomainError, FormatError
from .geometry import Frame


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Geometry of a uniform grid: physical origin, isotropic spacing, shape."""

    origin: np.ndarray
    spacing: float
    shape: tuple[int, ...]

    def __post_init__(self):
        origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        if self.spacing <= 0:
            raise DomainError(f"spacing must be positive, got {self.spacing}")
        if len(shape) != origin.size or any(n < 1 for n in shape):
            raise DomainError(f"bad grid geometry: origin {origin}, shape {shape}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def d(self) -> int:
        return len(self.shape)

    @classmethod
    def centered(cls, d: int, n: int, spacing: float) -> "GridSpec":
        """Grid of n^d nodes with spacing h, symmetric about the origin."""
        origin = np.full(d, -spacing * (n - 1) / 2.0)
        return cls(origin, spacing, (n,) * d)

    def axes(self) -> list[np.ndarray]:
        return [self.origin[i] + self.spacing * np.arange(n) for i, n in enumerate(self.shape)]

    def points(self) -> np.ndarray:
        """All node coordinates, row-major, shape (prod(shape), d)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True, eq=False)
class GridField:
    """Real-valued function on R^d sampled on a uniform grid (row-major values)."""

    origin: np.ndarray
    spacing: float
    shape: tuple[int, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        spec = GridSpec(self.origin, self.spacing, self.shape)
        values = np.asarray(self.values, dtype=float).reshape(spec.shape)
        if not np.all(np.isfinite(values)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "origin", spec.origin)
        object.__setattr__(self, "spacing", spec.spacing)
        object.__setattr__(self, "shape", spec.shape)
        object.__setattr__(self, "values", values)

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.origin, self.spacing, self.shape)

    @classmethod
    def from_function(cls, spec: GridSpec, fn: Callable[[np.ndarray], np.ndarray]) -> "GridField":
        vals = fn(spec.points()).reshape(spec.shape)
        return cls(spec.origin, spec.spacing, spec.shape, vals)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "GridField":
        return cls(spec.origin, spec.spacing, spec.shape, np.zeros(spec.shape))


class FieldInterpolator:
    """Evaluator for a GridField at arbitrary points, reusable across batches.

    order=1 is multilinear interpolation (the package-wide evaluation
    contract); order=3 is interpolating cubic splines, used by the forward
    quadrature where multilinear bias would dominate.  Points outside the
    grid's bounding box evaluate to 0 (compact-support convention).
    """

    def __init__(self, fld: GridField, order: int = 1):
        if order not in (1, 3):
            raise DomainError(f"interpolation order must be 1 or 3, got {order}")
        self.field = fld
        self.order = order
        if order == 3:
            self._coeff = ndimage.spline_filter(fld.values, order=3, mode="constant")
        else:
            self._coeff = fld.values

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        squeeze = pts.ndim == 1
        if squeeze:
            pts = pts[None, :]
        if pts.shape[-1] != self.field.d:
            raise DomainError(f"points must have last dim {self.field.d}")
        lead = pts.shape[:-1]
        coords = ((pts.reshape(-1, self.field.d) - self.field.origin) / self.field.spacing).T
        out = ndimage.map_coordinates(
            self._coeff, coords, order=self.order, mode="constant", cval=0.0, prefilter=False
        )
        if self.order == 3:
            # spline support leaks one cell past the box; enforce the hard cutoff
            n = np.array(self.field.shape)
            inside = np.all((coords.T >= 0.0) & (coords.T <= n - 1), axis=-1)
            out = np.where(inside, out, 0.0)
        out = out.reshape(lead)
        return float(out[0]) if squeeze else out


def interpolate(fld: GridField, x: np.ndarray) -> float | np.ndarray:
    """Multilinear interpolation of the field at x; 0 outside the bounding box."""
    return FieldInterpolator(fld, order=1)(x)


def integrate(fld: GridField) -> float:
    """Rectangle-rule integral h^d * sum(values)."""
    return float(fld.spacing**fld.d * fld.values.sum())


@dataclass(frozen=True)
class QuadSpec:
    """Tensor trapezoid rule on [-L, L]^k used to integrate along k-planes."""

    halfwidth: float
    nodes_per_axis: int

    def __post_init__(self):
        if self.halfwidth <= 0:
            raise DomainError(f"halfwidth must be positive, got {self.halfwidth}")
        if self.nodes_per_axis < 2:
            raise DomainError(f"need >= 2 nodes per axis, got {self.nodes_per_axis}")

    def nodes_weights_1d(self) -> tuple[np.ndarray, np.ndarray]:
        y = np.linspace(-self.halfwidth, self.halfwidth, self.nodes_per_axis)
        step = y[1] - y[0]
        w = np.full(self.nodes_per_axis, step)
        w[0] *= 0.5
        w[-1] *= 0.5
        return y, w

    def nodes_weights(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Tensor nodes (n^k, k) and weights (n^k,); weights sum to (2L)^k."""
        y, w = self.nodes_weights_1d()
        if k == 1:
            return y[:, None], w
        grids = np.meshgrid(*([y] * k), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=-1)
        weights = np.ones(nodes.shape[0])
        for axis in range(k):
            wg = np.meshgrid(*([w] * k), indexing="ij")[axis].ravel()
            weights *= wg
        return nodes, weights

    @classmethod
    def default_for(cls, spec: GridSpec) -> "QuadSpec":
        """Halfwidth = half the grid diagonal, nodes = 2 x max(shape)."""
        diag = spec.spacing * np.linalg.norm(np.array(spec.shape) - 1)
        return cls(diag / 2.0, 2 * max(spec.shape))


@dataclass(frozen=True, eq=False)
class TGrid:
    """Uniform offset grid in R^(d-k) shared by all frames of a sinogram."""

    origin: np.ndarray
    spacing: float
    shape: tuple[int, ...]

    def __post_init__(self):
        spec = GridSpec(self.origin, self.spacing, self.shape)
        object.__setattr__(self, "origin", spec.origin)
        object.__setattr__(self, "spacing", spec.spacing)
        object.__setattr__(self, "shape", spec.shape)

    @property
    def m(self) -> int:
        return len(self.shape)

    @classmethod
    def centered(cls, m: int, n: int, spacing: float) -> "TGrid":
        return cls(np.full(m, -spacing * (n - 1) / 2.0), spacing, (n,) * m)

    def axes(self) -> list[np.ndarray]:
        return [self.origin[i] + self.spacing * np.arange(n) for i, n in enumerate(self.shape)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def cell_volume(self) -> float:
        return float(self.spacing**self.m)


@dataclass
class Sinogram:
    """Samples of a function on Xi_k: one t-block per frame on a shared t-grid.

    ``generator``, when present, evaluates the underlying function at
    arbitrary (frame, t) pairs; sinograms produced by the forward transform
    carry one so that frame-rotated coordinates can be re-rendered exactly.
    It is never serialized.
    """

    d: int
    k: int
    frames: list[Frame]
    t_grid: TGrid
    values: np.ndarray
    generator: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not self.frames:
            raise DomainError("sinogram needs at least one frame")
        for fr in self.frames:
            if (fr.d, fr.k) != (self.d, self.k):
                raise DomainError("all frames must share (d, k)")
        if self.t_grid.m != self.d - self.k:
            raise DomainError(
                f"t-grid dimension {self.t_grid.m} != d-k = {self.d - self.k}"
            )
        vals = np.asarray(self.values, dtype=float)
        expect = (len(self.frames),) + self.t_grid.shape
        if vals.shape != expect:
            vals = vals.reshape(expect)
        self.values = vals

    @property
    def m(self) -> int:
        return self.d - self.k

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def t_origin(self) -> np.ndarray:
        return self.t_grid.origin

    @property
    def t_spacing(self) -> float:
        return self.t_grid.spacing

    @property
    def t_shape(self) -> tuple[int, ...]:
        return self.t_grid.shape

    def copy_with(self, values: np.ndarray, generator=None) -> "Sinogram":
        return Sinogram(self.d, self.k, list(self.frames), self.t_grid, values, generator)


def interp_t_block(block: np.ndarray, t_grid: TGrid, t_pts: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of one frame's t-block; 0 outside the grid."""
    t_pts = np.asarray(t_pts, dtype=float)
    lead = t_pts.shape[:-1]
    coords = ((t_pts.reshape(-1, t_grid.m) - t_grid.origin) / t_grid.spacing).T
    out = ndimage.map_coordinates(block, coords, order=1, mode="constant", cval=0.0, prefilter=False)
    return out.reshape(lead)


# --- KPT1 binary format ----------------------------------------------------
#
#   bytes 0..3   magic "KPT1"
#   bytes 4..7   u32 little-endian header length H
#   bytes 8..8+H UTF-8 JSON header
#   remainder    float64 little-endian payload, row-major, frames concatenated

_MAGIC = b"KPT1"


def _header_dict(obj: GridField | Sinogram) -> dict:
    if isinstance(obj, GridField):
        return {
            "kind": "grid",
            "d": obj.d,
            "origin": [float(v) for v in obj.origin],
            "spacing": float(obj.spacing),
            "shape": list(obj.shape),
        }
    if isinstance(obj, Sinogram):
        return {
            "kind": "sinogram",
            "d": obj.d,
            "k": obj.k,
            "origin": [float(v) for v in obj.t_grid.origin],
            "spacing": float(obj.t_grid.spacing),
            "shape": list(obj.t_grid.shape),
            "frames": [[[float(v) for v in row] for row in fr.rows] for fr in obj.frames],
        }
    raise DomainError(f"cannot serialize {type(obj)!r}")


def write_kpt(path, obj: GridField | Sinogram) -> None:
    """Write a field or sinogram; the round trip through read_kpt is bit-exact."""
    header = json.dumps(_header_dict(obj), sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(obj.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)


def read_kpt(path) -> GridField | Sinogram:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_MAGIC!r}", offset=0)
    if len(blob) < 8:
        raise FormatError("truncated header length", offset=4)
    (hlen,) = struct.unpack("<I", blob[4:8])
    if len(blob) < 8 + hlen:
        raise FormatError("header extends past end of file", offset=4)
    try:
        header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"header is not valid JSON ({exc})", offset=8) from exc
    payload = blob[8 + hlen :]
    payload_offset = 8 + hlen

    kind = header.get("kind")
    shape = tuple(int(n) for n in header.get("shape", ()))
    count = int(np.prod(shape)) if shape else 0
    if kind == "grid":
        expected = 8 * count
        if len(payload) != expected:
            raise FormatError(
                f"payload is {len(payload)} bytes, expected {expected}", offset=payload_offset
            )
        values = np.frombuffer(payload, dtype="<f8").reshape(shape)
        return GridField(np.array(header["origin"]), header["spacing"], shape, values.copy())
    if kind == "sinogram":
        d, k = int(header["d"]), int(header["k"])
        frames = [Frame(d, k, np.array(rows)) for rows in header["frames"]]
        expected = 8 * count * len(frames)
        if len(payload) != expected:
            raise FormatError(
                f"payload is {len(payload)} bytes, expected {expected}", offset=payload_offset
            )
        values = np.frombuffer(payload, dtype="<f8").reshape((len(frames),) + shape)
        t_grid = TGrid(np.array(header["origin"]), header["spacing"], shape)
        return Sinogram(d, k, frames, t_grid, values.copy())
    raise FormatError(f"unknown kind {kind!r}", offset=8)
