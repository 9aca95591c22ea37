#!/usr/bin/env python3
"""
Matrix product state model for Born machines.

An Mps stores N real rank-3 cores of shape (chi_left, d, chi_right) with open
boundaries (chi = 1 at both ends). The Born distribution is

    p(x) = <psi|x>^2 / <psi|psi>

Gauge fixing is QR-based with a nonnegative diagonal on the triangular factor,
so canonicalize() is deterministic. Bond dimensions are fixed at construction;
no truncation is ever performed.

Usage:
    from tnbm.mps import random_init, canonicalize, probability

    mps = random_init(n_sites=16, site_dim=2, bond_dim=4, seed=0)
    p = probability(mps, [0, 1] * 8)
"""

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .errors import BoundaryError, DimensionError, FormatError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
ISOMETRY_TOL = 1e-10


def as_dense_tensor(data, shape: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Validate and return a real dense tensor (C-ordered float64 ndarray).

    Args:
        data: Array-like buffer (flat or already shaped)
        shape: Optional target shape; data is reshaped row-major

    Returns:
        float64 ndarray with all extents >= 1
    """
    array = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if int(np.prod(shape)) != array.size:
            raise DimensionError(
                f"Buffer of length {array.size} does not fill shape {shape}"
            )
        array = array.reshape(shape)
    if any(extent < 1 for extent in array.shape):
        raise DimensionError(f"All extents must be >= 1, got shape {array.shape}")
    return array


def _frozen_copy(core) -> np.ndarray:
    array = as_dense_tensor(core)
    if array.flags.writeable:
        array = array.copy()
        array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Mps:
    """
    Matrix product state with an optional orthogonality center.

    Cores are stored read-only; every operation that changes the state
    returns a new Mps sharing the untouched cores.
    """
    cores: Tuple[np.ndarray, ...]
    center: Optional[int] = None
    _bonds: Tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cores = tuple(_frozen_copy(core) for core in self.cores)
        if len(cores) < 2:
            raise DimensionError(f"An Mps needs at least 2 sites, got {len(cores)}")
        for i, core in enumerate(cores):
            if core.ndim != 3:
                raise DimensionError(f"Core {i} has rank {core.ndim}, expected 3")
        site_dim = cores[0].shape[1]
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise DimensionError("Open boundary condition requires unit boundary bonds")
        for i in range(len(cores) - 1):
            if cores[i].shape[2] != cores[i + 1].shape[0]:
                raise DimensionError(
                    f"Bond mismatch between sites {i} and {i + 1}: "
                    f"{cores[i].shape[2]} != {cores[i + 1].shape[0]}"
                )
        if any(core.shape[1] != site_dim for core in cores):
            raise DimensionError("All sites must share the same site dimension")
        if self.center is not None:
            if not 0 <= self.center < len(cores):
                raise BoundaryError(f"Center {self.center} outside [0, {len(cores) - 1}]")
            defects = _isometry_defects(cores, self.center)
            if defects and max(defects) > ISOMETRY_TOL:
                worst = int(np.argmax(defects))
                site = worst if worst < self.center else worst + 1
                raise DimensionError(
                    f"Core {site} is not an isometry for center {self.center} "
                    f"(defect {defects[worst]:.3e}); canonicalize first or pass center=None"
                )
        object.__setattr__(self, 'cores', cores)
        object.__setattr__(
            self, '_bonds', tuple([1] + [core.shape[2] for core in cores])
        )

    @property
    def n_sites(self) -> int:
        return len(self.cores)

    @property
    def site_dim(self) -> int:
        return self.cores[0].shape[1]

    @property
    def bond_dims(self) -> Tuple[int, ...]:
        """Bond dimensions at the N + 1 cuts, boundaries included."""
        return self._bonds

    def with_core(self, site: int, core: np.ndarray, center: Optional[int] = None) -> "Mps":
        """
        Return a copy with one core replaced (center kept unless given).

        Replacing a non-center core with a non-isometry raises DimensionError.
        """
        cores = list(self.cores)
        cores[site] = core
        return Mps(tuple(cores), self.center if center is None else center)

    def with_cores(self, updates: dict, center: Optional[int]) -> "Mps":
        cores = list(self.cores)
        for site, core in updates.items():
            cores[site] = core
        return Mps(tuple(cores), center)

    def norm(self) -> float:
        """Global 2-norm of the state vector."""
        if self.center is not None:
            return float(np.linalg.norm(self.cores[self.center]))
        transfer = np.ones((1, 1))
        for core in self.cores:
            transfer = np.einsum('ab,asc,bsd->cd', transfer, core, core)
        return float(np.sqrt(max(transfer[0, 0], 0.0)))


def max_bond_dims(n_sites: int, site_dim: int, bond_dim: int) -> List[int]:
    """
    Bond dimension at each of the N + 1 cuts: min(chi, d^i, d^(N-i)).
    """
    bonds = []
    for cut in range(n_sites + 1):
        reachable = 1
        for _ in range(min(cut, n_sites - cut)):
            reachable *= site_dim
            if reachable >= bond_dim:
                break
        bonds.append(min(bond_dim, reachable))
    return bonds


def random_init(n_sites: int, site_dim: int, bond_dim: int, seed: int) -> Mps:
    """
    Random normalized Mps in canonical form with center 0.

    Entries are i.i.d. standard normal from numpy's default_rng(seed).

    Args:
        n_sites: Number of sites N (>= 2)
        site_dim: Local dimension d (>= 1)
        bond_dim: Maximal bond dimension chi (>= 1)
        seed: Generator seed

    Returns:
        Unit-norm Mps with center 0
    """
    if n_sites < 2 or site_dim < 1 or bond_dim < 1:
        raise DimensionError(
            f"Invalid dimensions: n_sites={n_sites}, site_dim={site_dim}, bond_dim={bond_dim}"
        )
    rng = np.random.default_rng(seed)
    bonds = max_bond_dims(n_sites, site_dim, bond_dim)
    cores = tuple(
        rng.standard_normal((bonds[i], site_dim, bonds[i + 1]))
        for i in range(n_sites)
    )
    mps = canonicalize(Mps(cores), 0)
    return normalize(mps)


def normalize(mps: Mps) -> Mps:
    """Scale the center core (or the first core) to unit global norm."""
    norm = mps.norm()
    if norm == 0.0:
        raise DimensionError("Cannot normalize a zero state")
    site = mps.center if mps.center is not None else 0
    return mps.with_core(site, mps.cores[site] / norm)


def _qr_positive(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Economic QR with nonnegative diagonal of R."""
    q, r = scipy.linalg.qr(matrix, mode='economic')
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, signs[:, None] * r


def _left_orthonormalize(core: np.ndarray, next_core: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    chi_l, d, chi_r = core.shape
    q, r = _qr_positive(core.reshape(chi_l * d, chi_r))
    new_core = q.reshape(chi_l, d, q.shape[1])
    new_next = np.tensordot(r, next_core, axes=(1, 0))
    return new_core, new_next


def _right_orthonormalize(core: np.ndarray, prev_core: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    chi_l, d, chi_r = core.shape
    q, r = _qr_positive(core.reshape(chi_l, d * chi_r).T)
    new_core = q.T.reshape(q.shape[1], d, chi_r)
    new_prev = np.tensordot(prev_core, r.T, axes=(2, 0))
    return new_core, new_prev


def shift_center(mps: Mps, direction: str) -> Mps:
    """
    Move the orthogonality center one site left or right with a single QR.
    """
    if mps.center is None:
        raise BoundaryError("Mps has no orthogonality center; canonicalize first")
    c = mps.center
    if direction == 'right':
        if c + 1 >= mps.n_sites:
            raise BoundaryError(f"Cannot move center right of site {c}")
        core, nxt = _left_orthonormalize(mps.cores[c], mps.cores[c + 1])
        return mps.with_cores({c: core, c + 1: nxt}, center=c + 1)
    if direction == 'left':
        if c - 1 < 0:
            raise BoundaryError("Cannot move center left of site 0")
        core, prev = _right_orthonormalize(mps.cores[c], mps.cores[c - 1])
        return mps.with_cores({c: core, c - 1: prev}, center=c - 1)
    raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")


def canonicalize(mps: Mps, center: int) -> Mps:
    """
    Bring the Mps into mixed canonical form around `center`.

    Cores left of center become left-isometries, cores right of it
    right-isometries. Amplitudes are unchanged.
    """
    if not 0 <= center < mps.n_sites:
        raise BoundaryError(f"Center {center} outside [0, {mps.n_sites - 1}]")
    cores = list(mps.cores)
    for i in range(center):
        cores[i], cores[i + 1] = _left_orthonormalize(cores[i], cores[i + 1])
    for i in range(mps.n_sites - 1, center, -1):
        cores[i], cores[i - 1] = _right_orthonormalize(cores[i], cores[i - 1])
    return Mps(tuple(cores), center)


def _isometry_defects(cores: Sequence[np.ndarray], center: int) -> List[float]:
    defects = []
    for i, core in enumerate(cores):
        if i < center:
            gram = np.einsum('asb,asc->bc', core, core)
        elif i > center:
            gram = np.einsum('asb,csb->ac', core, core)
        else:
            continue
        defects.append(float(np.max(np.abs(gram - np.eye(gram.shape[0])))))
    return defects


def isometry_defects(mps: Mps) -> List[float]:
    """
    Max-norm deviation from identity of every non-center core's isometry check.
    """
    if mps.center is None:
        raise BoundaryError("Mps has no orthogonality center")
    return _isometry_defects(mps.cores, mps.center)


def _check_bitstring(mps: Mps, x: Sequence[int]) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 1 or x.shape[0] != mps.n_sites:
        raise DimensionError(f"Bitstring length {x.size} != n_sites {mps.n_sites}")
    if np.any(x < 0) or np.any(x >= mps.site_dim):
        raise DimensionError(f"Symbols must lie in [0, {mps.site_dim - 1}]")
    return x


def amplitude(mps: Mps, x: Sequence[int]) -> float:
    """<psi|x> by left-to-right matrix-chain contraction, O(N chi^2)."""
    x = _check_bitstring(mps, x)
    vector = mps.cores[0][0, x[0], :]
    for site in range(1, mps.n_sites):
        vector = vector @ mps.cores[site][:, x[site], :]
    return float(vector[0])


def one_hot(samples: np.ndarray, site_dim: int) -> np.ndarray:
    """(N_s, N) integer samples -> (N_s, N, d) site vectors."""
    samples = np.asarray(samples, dtype=np.int64)
    return np.eye(site_dim)[samples]


def amplitudes(mps: Mps, site_vectors: np.ndarray) -> np.ndarray:
    """
    Batched amplitudes for arbitrary per-site input vectors.

    Args:
        mps: Model
        site_vectors: (N_s, N, d) array; one-hot rows reproduce amplitude()

    Returns:
        (N_s,) amplitudes
    """
    if site_vectors.ndim != 3 or site_vectors.shape[1:] != (mps.n_sites, mps.site_dim):
        raise DimensionError(
            f"site_vectors shape {site_vectors.shape} incompatible with "
            f"({mps.n_sites}, {mps.site_dim})"
        )
    env = np.ones((site_vectors.shape[0], 1))
    for site, core in enumerate(mps.cores):
        env = np.einsum('na,ns,asb->nb', env, site_vectors[:, site, :], core)
    return env[:, 0]


def probability(mps: Mps, x: Sequence[int]) -> float:
    """Born probability amplitude(x)^2 / norm^2."""
    amp = amplitude(mps, x)
    return amp * amp / mps.norm() ** 2


def to_dense(mps: Mps) -> np.ndarray:
    """
    Full state vector of length d^N (site 0 is the most significant index).
    Only sensible for small N.
    """
    if mps.site_dim ** mps.n_sites > 2 ** 24:
        raise DimensionError("State vector too large to materialize")
    state = mps.cores[0]
    for core in mps.cores[1:]:
        state = np.tensordot(state, core, axes=(state.ndim - 1, 0))
    return state.reshape(-1)


def all_bitstrings(n_sites: int, site_dim: int) -> Iterable[Tuple[int, ...]]:
    """All d^N strings in the same order as to_dense()."""
    return itertools.product(range(site_dim), repeat=n_sites)


def sample_batch(mps: Mps, rng: np.random.Generator, n: int) -> np.ndarray:
    """
    Ancestral sampling of n strings from the Born distribution.

    The model is brought to center 0 so that the remaining chain is a
    right-isometry and each conditional marginal is a squared norm.

    Returns:
        (n, N) integer array
    """
    if mps.center != 0:
        mps = canonicalize(mps, 0)
    first = mps.cores[0] / np.linalg.norm(mps.cores[0])
    cores = (first,) + mps.cores[1:]
    left = np.ones((n, 1))
    out = np.empty((n, mps.n_sites), dtype=np.int64)
    rows = np.arange(n)
    for site, core in enumerate(cores):
        branches = np.einsum('na,asb->nsb', left, core)
        weights = np.sum(branches ** 2, axis=2)
        cumulative = np.cumsum(weights, axis=1)
        targets = rng.random(n) * cumulative[:, -1]
        # row-wise searchsorted(side='right')
        choice = np.sum(cumulative <= targets[:, None], axis=1)
        # rounding can push the target onto the total; never land on a zero-weight branch
        last_positive = mps.site_dim - 1 - np.argmax(weights[:, ::-1] > 0.0, axis=1)
        choice = np.minimum(choice, last_positive)
        out[:, site] = choice
        left = branches[rows, choice, :] / np.sqrt(weights[rows, choice])[:, None]
    return out


def sample(mps: Mps, rng: np.random.Generator) -> np.ndarray:
    """Draw one string from the Born distribution."""
    return sample_batch(mps, rng, 1)[0]


def save_mps(mps: Mps, path: Union[str, Path]) -> Path:
    """
    Write a version-tagged .npz checkpoint (shapes are carried by the payloads).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {f"core_{i:04d}": core for i, core in enumerate(mps.cores)}
    with open(path, 'wb') as f:
        np.savez(
            f,
            format_version=np.int64(CHECKPOINT_FORMAT_VERSION),
            n_sites=np.int64(mps.n_sites),
            site_dim=np.int64(mps.site_dim),
            center=np.int64(-1 if mps.center is None else mps.center),
            **payload
        )
    logger.debug(f"Saved Mps checkpoint: {path}")
    return path


def load_mps(path: Union[str, Path]) -> Mps:
    """Read a checkpoint written by save_mps()."""
    path = Path(path)
    with np.load(path, allow_pickle=False) as archive:
        if 'format_version' not in archive.files:
            raise FormatError(f"{path} is not an Mps checkpoint (no format_version)")
        version = int(archive['format_version'])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise FormatError(
                f"Unsupported checkpoint version {version} in {path}",
                expected=CHECKPOINT_FORMAT_VERSION,
                actual=version
            )
        n_sites = int(archive['n_sites'])
        cores = []
        for i in range(n_sites):
            key = f"core_{i:04d}"
            if key not in archive.files:
                raise FormatError(f"Checkpoint {path} is missing {key}")
            cores.append(np.array(archive[key]))
        center = int(archive['center'])
        site_dim = int(archive['site_dim'])
    mps = Mps(tuple(cores), None if center < 0 else center)
    if mps.site_dim != site_dim:
        raise FormatError(f"Site dimension header disagrees with payload in {path}")
    return mps
