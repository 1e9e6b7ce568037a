"""Data model for sparse linear regression ``y = X beta + sigma * xi``.

Holds the immutable domain types (design, sparse signal, instance), the
seeded generators used by the simulation harness, and the derived
quantities shared by every estimator: the scaled correlation ``M``, the
effective noise ``Xi`` and the high-probability event on its order
statistics.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DesignParseError, DimensionError

__all__ = [
    "DesignMatrix",
    "SparseVector",
    "RegressionInstance",
    "EffectiveNoise",
    "derive_seed",
    "make_rng",
    "generate_design",
    "load_design_csv",
    "save_design_csv",
    "sample_signal",
    "synthesize_instance",
    "scaled_correlation",
    "compute_M",
    "effective_noise",
    "event_O_holds",
    "universal_separation",
]

DESIGN_KINDS = ("gaussian", "rademacher", "identity_scaled", "near_orthogonal", "from_file")
MAGNITUDE_KINDS = ("flat_a", "uniform", "spiked")
NOISE_KINDS = ("gaussian", "rademacher")


# --------------------------------------------------------------------------
# randomness

def derive_seed(*keys) -> int:
    """Stable 63-bit seed from an arbitrary tuple of keys.

    Uses blake2b on the ``repr`` of the keys, so the result does not depend
    on ``PYTHONHASHSEED`` or on the order in which replications execute.
    """
    digest = hashlib.blake2b(repr(tuple(keys)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) for ``seed``."""
    return np.random.Generator(np.random.Philox(int(seed)))


# --------------------------------------------------------------------------
# design

def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Dense ``n x p`` design with cached column norms.

    Build through :meth:`from_array` (or :func:`generate_design`) so the
    cached norms always agree with ``values``.
    """

    values: np.ndarray
    col_norms: np.ndarray
    max_col_norm: float
    normalized: bool = False

    @classmethod
    def from_array(cls, values, normalized: bool = False) -> "DesignMatrix":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DimensionError(f"design must be a non-empty 2-d array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("design contains non-finite entries")
        col_norms = np.linalg.norm(values, axis=0)
        if normalized and not np.allclose(col_norms, math.sqrt(values.shape[0]), rtol=1e-9, atol=0):
            raise ValueError("design flagged normalized but column norms differ from sqrt(n)")
        return cls(_readonly(values), _readonly(col_norms), float(col_norms.max()), bool(normalized))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def sq_max_col_norm(self) -> float:
        return self.max_col_norm ** 2


def _normalize_columns(values: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(values, axis=0)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a design with a zero column")
    return values * (math.sqrt(values.shape[0]) / norms)


def generate_design(kind: str, n: int, p: int, normalize: bool = True, seed: int = 0,
                    path=None, perturbation: float = 0.01) -> DesignMatrix:
    """Draw or load an ``n x p`` design.

    ``kind`` is one of ``gaussian`` (i.i.d. N(0, 1)), ``rademacher``
    (i.i.d. +-1), ``identity_scaled`` (``sqrt(n) * I``, needs ``n == p``),
    ``near_orthogonal`` (orthonormal columns plus a gaussian perturbation of
    relative size ``perturbation``, needs ``n >= p``) or ``from_file``
    (CSV at ``path``, see :func:`load_design_csv`).  With ``normalize`` every
    column is rescaled to norm ``sqrt(n)``.
    """
    if kind not in DESIGN_KINDS:
        raise ValueError(f"unknown design kind {kind!r}; expected one of {DESIGN_KINDS}")
    if kind == "from_file":
        if path is None:
            raise ValueError("from_file design needs a path")
        design = load_design_csv(path)
        if n is not None and (n, p) != (design.n, design.p):
            raise DimensionError(f"file holds a {design.n}x{design.p} design, expected {n}x{p}")
        if normalize:
            return DesignMatrix.from_array(_normalize_columns(design.values), normalized=True)
        return design
    n, p = int(n), int(p)
    if n < 1 or p < 1:
        raise DimensionError(f"n and p must be positive, got n={n}, p={p}")
    rng = make_rng(seed)
    if kind == "gaussian":
        values = rng.standard_normal((n, p))
    elif kind == "rademacher":
        values = rng.choice(np.array([-1.0, 1.0]), size=(n, p))
    elif kind == "identity_scaled":
        if n != p:
            raise DimensionError(f"identity_scaled design needs n == p, got n={n}, p={p}")
        # columns already have norm sqrt(n); skip the rescale so entries stay exact
        return DesignMatrix.from_array(math.sqrt(n) * np.eye(n), normalized=True)
    else:
        if n < p:
            raise DimensionError(f"near_orthogonal design needs n >= p, got n={n}, p={p}")
        q, _ = np.linalg.qr(rng.standard_normal((n, p)))
        values = math.sqrt(n) * q + perturbation * rng.standard_normal((n, p))
    if normalize:
        values = _normalize_columns(values)
    return DesignMatrix.from_array(values, normalized=normalize)


def save_design_csv(design: DesignMatrix, path) -> None:
    """Write ``design`` as CSV: header line ``n,p`` then one row per line."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{design.n},{design.p}\n")
        for row in design.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_design_csv(path) -> DesignMatrix:
    """Read a design written by :func:`save_design_csv`."""
    path = Path(path)
    try:
        lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise DesignParseError(f"cannot read design file {path}: {exc}") from exc
    if not lines:
        raise DesignParseError(f"{path}: empty design file")
    try:
        n, p = (int(tok) for tok in lines[0].split(","))
    except ValueError as exc:
        raise DesignParseError(f"{path}: first line must be 'n,p', got {lines[0]!r}") from exc
    if len(lines) - 1 != n:
        raise DesignParseError(f"{path}: header declares {n} rows, found {len(lines) - 1}")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        try:
            row = [float(tok) for tok in ln.split(",")]
        except ValueError as exc:
            raise DesignParseError(f"{path}:{i}: non-numeric entry") from exc
        if len(row) != p:
            raise DesignParseError(f"{path}:{i}: expected {p} columns, found {len(row)}")
        rows.append(row)
    values = np.array(rows, dtype=float).reshape(n, p)
    norms = np.linalg.norm(values, axis=0)
    normalized = bool(np.allclose(norms, math.sqrt(n), rtol=1e-9, atol=0))
    return DesignMatrix.from_array(values, normalized=normalized)


# --------------------------------------------------------------------------
# signal

@dataclass(frozen=True, eq=False)
class SparseVector:
    """Sparse vector of dimension ``dim`` stored as (index, value) pairs."""

    dim: int
    indices: np.ndarray
    values: np.ndarray
    magnitude_floor: float = 0.0

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        vals = np.asarray(self.values, dtype=float).ravel()
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if idx.shape != vals.shape:
            raise ValueError("indices and values differ in length")
        if idx.size and (idx.min() < 0 or idx.max() >= self.dim):
            raise ValueError("index out of range")
        if np.unique(idx).size != idx.size:
            raise ValueError("duplicate indices")
        if np.any(vals == 0):
            raise ValueError("stored zeros are not allowed")
        if self.magnitude_floor < 0:
            raise ValueError("magnitude_floor must be nonnegative")
        if self.magnitude_floor > 0 and np.any(np.abs(vals) < self.magnitude_floor):
            raise ValueError("entry below magnitude_floor")
        order = np.argsort(idx, kind="stable")
        object.__setattr__(self, "indices", _readonly(idx[order]).astype(np.int64))
        object.__setattr__(self, "values", _readonly(vals[order]))

    @classmethod
    def from_dense(cls, x, magnitude_floor: float = 0.0) -> "SparseVector":
        x = np.asarray(x, dtype=float).ravel()
        idx = np.flatnonzero(x)
        return cls(x.size, idx, x[idx], magnitude_floor)

    @classmethod
    def zeros(cls, dim: int) -> "SparseVector":
        return cls(dim, np.empty(0, dtype=np.int64), np.empty(0))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def support(self) -> np.ndarray:
        return self.indices

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def sample_signal(p: int, s: int, a: float, magnitude_kind: str = "flat_a", seed: int = 0) -> SparseVector:
    """Draw an ``s``-sparse signal in ``Omega_{s,a}`` on a uniform random support.

    Magnitudes per ``magnitude_kind``: ``flat_a`` (all ``a``), ``uniform``
    (Unif[a, 2a]) or ``spiked`` (one entry ``10a``, the rest ``a``).  Signs
    are independent fair coin flips.
    """
    if magnitude_kind not in MAGNITUDE_KINDS:
        raise ValueError(f"unknown magnitude kind {magnitude_kind!r}")
    if not 0 <= s <= p:
        raise ValueError(f"need 0 <= s <= p, got s={s}, p={p}")
    if a < 0:
        raise ValueError("a must be nonnegative")
    if s == 0:
        return SparseVector(p, np.empty(0, dtype=np.int64), np.empty(0), float(a))
    if a == 0:
        raise ValueError("cannot place nonzero entries at magnitude a = 0")
    rng = make_rng(seed)
    support = rng.choice(p, size=s, replace=False)
    signs = rng.choice(np.array([-1.0, 1.0]), size=s)
    if magnitude_kind == "flat_a":
        mags = np.full(s, float(a))
    elif magnitude_kind == "uniform":
        mags = rng.uniform(a, 2 * a, size=s)
    else:
        mags = np.full(s, float(a))
        mags[0] = 10 * a
    return SparseVector(p, support, signs * mags, float(a))


# --------------------------------------------------------------------------
# instance

def _response(X: np.ndarray, beta: np.ndarray, sigma: float, noise: np.ndarray) -> np.ndarray:
    return X @ beta + sigma * noise


@dataclass(frozen=True, eq=False)
class RegressionInstance:
    """One draw of ``y = X beta + sigma * xi`` with every ingredient kept."""

    design: DesignMatrix
    beta_true: SparseVector
    sigma: float
    noise: np.ndarray
    y: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.beta_true.dim != self.design.p:
            raise DimensionError(f"signal has dim {self.beta_true.dim}, design has p={self.design.p}")
        noise = np.asarray(self.noise, dtype=float).ravel()
        if noise.size != self.design.n:
            raise DimensionError(f"noise has length {noise.size}, design has n={self.design.n}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        object.__setattr__(self, "noise", _readonly(noise))
        if self.y is None:
            object.__setattr__(self, "y", _readonly(self.reconstruct()))
        else:
            object.__setattr__(self, "y", _readonly(np.asarray(self.y, dtype=float).ravel()))

    def reconstruct(self) -> np.ndarray:
        """Recompute ``X beta + sigma xi`` from the stored fields."""
        return _response(self.design.values, self.beta_true.to_dense(), float(self.sigma), self.noise)

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def p(self) -> int:
        return self.design.p

    @property
    def s(self) -> int:
        return self.beta_true.nnz


def synthesize_instance(design: DesignMatrix, beta: SparseVector, sigma: float,
                        noise_kind: str = "gaussian", seed: int = 0) -> RegressionInstance:
    """Draw the noise vector and assemble the instance."""
    if noise_kind not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {noise_kind!r}")
    if beta.dim != design.p:
        raise DimensionError(f"signal has dim {beta.dim}, design has p={design.p}")
    rng = make_rng(seed)
    if noise_kind == "gaussian":
        noise = rng.standard_normal(design.n)
    else:
        noise = rng.choice(np.array([-1.0, 1.0]), size=design.n)
    return RegressionInstance(design, beta, float(sigma), noise)


# --------------------------------------------------------------------------
# derived quantities

def scaled_correlation(design: DesignMatrix, y) -> np.ndarray:
    """``X^T y / ||X||_{2,inf}^2``."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size != design.n:
        raise DimensionError(f"y has length {y.size}, design has n={design.n}")
    return design.values.T @ y / design.sq_max_col_norm


def compute_M(instance: RegressionInstance) -> np.ndarray:
    return scaled_correlation(instance.design, instance.y)


@dataclass(frozen=True, eq=False)
class EffectiveNoise:
    """Per-coordinate statistical error ``sigma X^T xi / ||X||_{2,inf}^2``."""

    xi_eff: np.ndarray

    def __len__(self):
        return self.xi_eff.size


def effective_noise(instance: RegressionInstance) -> EffectiveNoise:
    d = instance.design
    xi = instance.sigma * (d.values.T @ instance.noise) / d.sq_max_col_norm
    return EffectiveNoise(_readonly(xi))


def event_O_holds(xi_eff, s: int, sigma: float, max_col_norm: float) -> tuple[bool, float]:
    """Check the order-statistic event on the effective noise.

    Returns ``(holds, statistic)`` where ``statistic`` is the sum of the
    ``s`` largest squared entries of ``|xi_eff|`` and the event is
    ``statistic <= 10 sigma^2 s log(e p / s) / ||X||_{2,inf}^2``.
    """
    if isinstance(xi_eff, EffectiveNoise):
        xi_eff = xi_eff.xi_eff
    xi_eff = np.asarray(xi_eff, dtype=float).ravel()
    p = xi_eff.size
    if not 1 <= s <= p:
        raise ValueError(f"event needs 1 <= s <= p, got s={s}, p={p}")
    sq = np.sort(xi_eff ** 2)[::-1]
    statistic = float(sq[:s].sum())
    bound = 10 * sigma ** 2 * s * math.log(math.e * p / s) / max_col_norm ** 2
    return statistic <= bound, statistic


def universal_separation(sigma: float, max_col_norm: float, p: int, s: int) -> float:
    """``a* = sigma sqrt(2 log(e p / s)) / ||X||_{2,inf}``."""
    if not 1 <= s <= p:
        raise ValueError(f"need 1 <= s <= p, got s={s}, p={p}")
    return sigma * math.sqrt(2 * math.log(math.e * p / s)) / max_col_norm
