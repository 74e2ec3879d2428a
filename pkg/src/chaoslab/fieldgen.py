"""Realizations of stationary Gaussian fields.

Two carriers are provided.  A plane-wave basis can be evaluated at any
point, so a single realization can be followed over growing domains.
Circulant embedding samples a general stationary covariance on a regular
lattice exactly in law (up to clipped negative eigenvalues).
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DataError, EmbeddingError
from .rng import check_seed, stream
from .specialfn import CovarianceModel, cov_eval

DETERMINISTIC = "deterministic"
RANDOM_SPHERE = "random_sphere"
_POINT_CHUNK = 2048


# --------------------------------------------------------------------------
# plane waves


@dataclass(frozen=True, eq=False)
class PlaneWaveBasis:
    """B(x) = K^(-1/2) sum_k [a_k cos(xi_k . x) + b_k sin(xi_k . x)]."""

    d: int
    K: int
    directions: np.ndarray
    amps_cos: np.ndarray
    amps_sin: np.ndarray
    seed: int
    mode: str

    def __eq__(self, other):
        if not isinstance(other, PlaneWaveBasis):
            return NotImplemented
        return (self.d == other.d and self.K == other.K and self.seed == other.seed
                and self.mode == other.mode
                and np.array_equal(self.directions, other.directions)
                and np.array_equal(self.amps_cos, other.amps_cos)
                and np.array_equal(self.amps_sin, other.amps_sin))

    def with_amplitudes(self, a, b) -> "PlaneWaveBasis":
        """Copy with prescribed coefficients (test hook)."""
        a = np.broadcast_to(np.asarray(a, dtype=float), (self.K,)).copy()
        b = np.broadcast_to(np.asarray(b, dtype=float), (self.K,)).copy()
        return replace(self, amps_cos=a, amps_sin=b)

    def covariance(self, z) -> np.ndarray:
        """Conditional covariance (1/K) sum_k cos(xi_k . z) for lags ``z`` of shape (n, d)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.cos(z @ self.directions.T).mean(axis=1)


def make_planewave(d: int, K: int, mode: Optional[str] = None, seed: int = 0,
                   index: int = 0) -> PlaneWaveBasis:
    """Draw a plane-wave basis for the Berry field in dimension ``d``.

    ``mode`` defaults to equispaced directions for d=2 and uniform random
    directions otherwise.  ``index`` selects the replicate stream.
    """
    if K < 1:
        raise ConfigurationError("wave count K must be at least 1")
    if d < 1:
        raise ConfigurationError("dimension must be positive")
    mode = mode or (DETERMINISTIC if d == 2 else RANDOM_SPHERE)
    if mode not in (DETERMINISTIC, RANDOM_SPHERE):
        raise ConfigurationError(f"unknown direction mode {mode!r}")
    if mode == DETERMINISTIC and d != 2:
        raise ConfigurationError("equispaced directions are defined for d=2 only")
    rng = stream(seed, index)
    if mode == DETERMINISTIC:
        theta = math.pi * np.arange(K) / K
        xi = np.column_stack([np.cos(theta), np.sin(theta)])
    else:
        g = rng.standard_normal((K, d))
        xi = g / np.linalg.norm(g, axis=1, keepdims=True)
    a = rng.standard_normal(K)
    b = rng.standard_normal(K)
    for arr in (xi, a, b):
        arr.setflags(write=False)
    return PlaneWaveBasis(d, K, xi, a, b, check_seed(seed), mode)


def eval_field(basis: PlaneWaveBasis, points) -> np.ndarray:
    """Evaluate the plane-wave sum at ``points`` (shape (n, d) or (d,))."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != basis.d:
        raise ConfigurationError(f"points have dimension {pts.shape[1]}, basis has {basis.d}")
    if not np.all(np.isfinite(pts)):
        raise DataError("evaluation points must be finite")
    out = np.empty(pts.shape[0])
    scale = 1.0 / math.sqrt(basis.K)
    for i in range(0, pts.shape[0], _POINT_CHUNK):
        phase = pts[i:i + _POINT_CHUNK] @ basis.directions.T
        # explicit pairwise sums keep the result independent of BLAS threading
        s = np.sum(np.cos(phase) * basis.amps_cos + np.sin(phase) * basis.amps_sin, axis=1)
        out[i:i + _POINT_CHUNK] = scale * s
    return out[0] if single else out


# --------------------------------------------------------------------------
# lattices and circulant embedding


@dataclass(frozen=True)
class LatticeSpec:
    """Regular lattice origin + h * k, k in prod range(shape)."""

    origin: Tuple[float, ...]
    h: float
    shape: Tuple[int, ...]

    def __post_init__(self):
        if len(self.origin) != len(self.shape):
            raise ConfigurationError("origin and shape must have equal length")
        if not self.h > 0:
            raise ConfigurationError("lattice spacing must be positive")
        if any(n < 1 for n in self.shape):
            raise ConfigurationError("lattice extents must be positive")

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axes(self):
        return [o + self.h * np.arange(n) for o, n in zip(self.origin, self.shape)]

    def points(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([g.ravel() for g in grids])

    @classmethod
    def centered(cls, d: int, h: float, half_width: float) -> "LatticeSpec":
        """Lattice h*k, |k_i| <= ceil(half_width/h), covering [-half_width, half_width]^d."""
        k = int(math.ceil(half_width / h - 1e-12))
        return cls(tuple([-k * h] * d), float(h), tuple([2 * k + 1] * d))


def _torus_lags(m: int, h: float) -> np.ndarray:
    k = np.arange(m)
    return h * np.minimum(k, m - k)


@dataclass(frozen=True, eq=False)
class CirculantEmbedding:
    model: CovarianceModel
    lattice: LatticeSpec
    m_shape: Tuple[int, ...]
    sqrt_eig: np.ndarray
    min_eig: float
    max_eig: float
    clipped_mass: float
    doublings: int

    def draw_pair(self, rng: np.random.Generator):
        """Two independent samples on the lattice from one complex FFT."""
        M = self.sqrt_eig.size
        eps = rng.standard_normal((2,) + self.m_shape)
        w = np.fft.fftn(self.sqrt_eig * (eps[0] + 1j * eps[1]) / math.sqrt(M))
        crop = tuple(slice(0, n) for n in self.lattice.shape)
        w = w[crop]
        return np.ascontiguousarray(w.real), np.ascontiguousarray(w.imag)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return self.draw_pair(rng)[0]

    def metadata(self) -> dict:
        return {"m_shape": list(self.m_shape), "min_eig": self.min_eig, "max_eig": self.max_eig,
                "clipped_mass": self.clipped_mass, "doublings": self.doublings}


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def build_embedding(model: CovarianceModel, lattice: LatticeSpec, eig_tol: float = 1e-10,
                    max_size: int = 1 << 24, min_size: Optional[Tuple[int, ...]] = None
                    ) -> CirculantEmbedding:
    """Find the smallest power-of-two torus whose circulant covariance is
    nonnegative definite up to ``eig_tol * max eigenvalue``."""
    if lattice.d != model.d:
        raise ConfigurationError(f"lattice dimension {lattice.d} differs from model dimension {model.d}")
    m = [_next_pow2(max(2 * (n - 1), 1)) for n in lattice.shape]
    if min_size is not None:
        m = [max(a, _next_pow2(b)) for a, b in zip(m, min_size)]
    doublings = 0
    while True:
        lags = [_torus_lags(mi, lattice.h) for mi in m]
        grids = np.meshgrid(*lags, indexing="ij", sparse=True)
        r = np.sqrt(sum(g * g for g in grids))
        row = cov_eval(model, r)
        eig = np.fft.fftn(row).real
        lo, hi = float(eig.min()), float(eig.max())
        if lo >= -eig_tol * hi:
            break
        if 2 * int(np.prod(m)) > max_size:
            raise EmbeddingError(
                f"circulant embedding indefinite at maximal padding {tuple(m)}: "
                f"most negative eigenvalue {lo:.3e} (largest {hi:.3e})")
        m = [2 * mi for mi in m]
        doublings += 1
    neg = eig < 0
    clipped = float(-eig[neg].sum() / eig.sum()) if np.any(neg) else 0.0
    sq = np.sqrt(np.where(neg, 0.0, eig))
    sq.setflags(write=False)
    return CirculantEmbedding(model, lattice, tuple(m), sq, lo, hi, clipped, doublings)


# --------------------------------------------------------------------------
# grid fields

_MAGIC = b"CHLBGRID"
_VERSION = 1


@dataclass(frozen=True, eq=False)
class GridField:
    lattice: LatticeSpec
    values: np.ndarray
    seed: int
    model: CovarianceModel
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != tuple(self.lattice.shape):
            raise DataError(f"value array shape {self.values.shape} does not match lattice {self.lattice.shape}")

    def __eq__(self, other):
        if not isinstance(other, GridField):
            return NotImplemented
        return (self.lattice == other.lattice and self.seed == other.seed
                and self.model == other.model and np.array_equal(self.values, other.values))

    def to_bytes(self) -> bytes:
        """Binary layout: magic, header length, JSON header, little-endian f64 payload (row-major)."""
        header = json.dumps({
            "version": _VERSION, "dims": list(self.lattice.shape), "origin": list(self.lattice.origin),
            "spacing": self.lattice.h, "seed": self.seed, "model": self.model.to_dict(),
            "model_tag": self.model.tag(),
        }, sort_keys=True).encode("utf-8")
        payload = np.ascontiguousarray(self.values, dtype="<f8").tobytes(order="C")
        return _MAGIC + struct.pack("<Q", len(header)) + header + payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> "GridField":
        if blob[:8] != _MAGIC:
            raise DataError("not a grid-field file")
        (hlen,) = struct.unpack("<Q", blob[8:16])
        header = json.loads(blob[16:16 + hlen].decode("utf-8"))
        if header.get("version") != _VERSION:
            raise DataError(f"unsupported grid-field version {header.get('version')}")
        shape = tuple(header["dims"])
        vals = np.frombuffer(blob[16 + hlen:], dtype="<f8")
        if vals.size != int(np.prod(shape)):
            raise DataError("payload size does not match header dims")
        lat = LatticeSpec(tuple(header["origin"]), header["spacing"], shape)
        return cls(lat, vals.reshape(shape).astype(float), header["seed"],
                   CovarianceModel.from_dict(header["model"]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow([f"x{i}" for i in range(self.lattice.d)] + ["value"])
        for p, v in zip(self.lattice.points(), self.values.ravel()):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])
        return buf.getvalue()


def circulant_sample(model: CovarianceModel, lattice: LatticeSpec, seed: int, index: int = 0,
                     eig_tol: float = 1e-10, embedding: Optional[CirculantEmbedding] = None) -> GridField:
    """One stationary Gaussian sample on ``lattice``; a deterministic function of (seed, index)."""
    emb = embedding or build_embedding(model, lattice, eig_tol)
    values = emb.draw(stream(seed, index))
    return GridField(lattice, values, check_seed(seed), model, emb.metadata())
