#!/usr/bin/env python3
"""
Per-sample environment stacks for single-site sweeps.

For every training sample the cache keeps the contraction of all sites left
of the active site (left stack) and right of it (right stack). The reduced
environment of sample x at the active site c is

    w_x = L_c[x] (x) v_c[x] (x) R_c[x]      (dimension chi_left * d * chi_right)

so that the amplitude is the inner product (T_c, w_x). Moving the center by one
site costs exactly one rank-1 contraction per sample.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import BoundaryError, CacheConsistencyError, DimensionError
from .mps import Mps, shift_center

logger = logging.getLogger(__name__)


def _absorb_left(left: np.ndarray, vectors: np.ndarray, core: np.ndarray) -> np.ndarray:
    return np.einsum('na,ns,asb->nb', left, vectors, core)


def _absorb_right(right: np.ndarray, vectors: np.ndarray, core: np.ndarray) -> np.ndarray:
    return np.einsum('asb,ns,nb->na', core, vectors, right)


@dataclass
class EnvironmentCache:
    """
    Left/right contraction stacks positioned at `active_site`.

    left_envs[i] is the (N_s, chi_left(i)) environment of site i for
    i = 0..active_site. right_envs is a stack whose top (last entry) is the
    (N_s, chi_right(active_site)) environment of the active site; entry k
    belongs to site N - 1 - k.
    """
    site_vectors: np.ndarray
    left_envs: List[np.ndarray]
    right_envs: List[np.ndarray]
    active_site: int

    @property
    def n_samples(self) -> int:
        return self.site_vectors.shape[0]

    @property
    def n_sites(self) -> int:
        return self.site_vectors.shape[1]

    @classmethod
    def build(cls, mps: Mps, site_vectors: np.ndarray) -> "EnvironmentCache":
        """
        Contract all environments for an Mps with an orthogonality center.

        Args:
            mps: Model in canonical form
            site_vectors: (N_s, N, d) per-site input vectors (one-hot for bitstrings)
        """
        if mps.center is None:
            raise CacheConsistencyError("Environment cache needs an Mps with a center")
        site_vectors = np.asarray(site_vectors, dtype=np.float64)
        if site_vectors.ndim != 3 or site_vectors.shape[1:] != (mps.n_sites, mps.site_dim):
            raise DimensionError(
                f"site_vectors shape {site_vectors.shape} incompatible with "
                f"({mps.n_sites}, {mps.site_dim})"
            )
        n_samples = site_vectors.shape[0]
        left_envs = [np.ones((n_samples, 1))]
        for site in range(mps.center):
            left_envs.append(
                _absorb_left(left_envs[-1], site_vectors[:, site, :], mps.cores[site])
            )
        right_envs = [np.ones((n_samples, 1))]
        for site in range(mps.n_sites - 1, mps.center, -1):
            right_envs.append(
                _absorb_right(right_envs[-1], site_vectors[:, site, :], mps.cores[site])
            )
        return cls(site_vectors, left_envs, right_envs, mps.center)

    def left(self, site: Optional[int] = None) -> np.ndarray:
        site = self.active_site if site is None else site
        if site > self.active_site:
            raise CacheConsistencyError(f"No left environment cached for site {site}")
        return self.left_envs[site]

    def right(self, site: Optional[int] = None) -> np.ndarray:
        site = self.active_site if site is None else site
        if site < self.active_site:
            raise CacheConsistencyError(f"No right environment cached for site {site}")
        return self.right_envs[self.n_sites - 1 - site]

    def check_position(self, mps: Mps):
        if mps.center != self.active_site:
            raise CacheConsistencyError(
                f"Stale cache: positioned at site {self.active_site}, "
                f"model center is {mps.center}"
            )

    def reduced_environments(self, mps: Optional[Mps] = None) -> np.ndarray:
        """
        All reduced environments at the active site as an (N_s, D) matrix.
        """
        if mps is not None:
            self.check_position(mps)
        c = self.active_site
        envs = np.einsum(
            'na,ns,nb->nasb', self.left(c), self.site_vectors[:, c, :], self.right(c)
        )
        return envs.reshape(self.n_samples, -1)


def build_cache(mps: Mps, site_vectors: np.ndarray) -> EnvironmentCache:
    return EnvironmentCache.build(mps, site_vectors)


def move_center(
    mps: Mps,
    cache: EnvironmentCache,
    direction: str
) -> Tuple[Mps, EnvironmentCache]:
    """
    Shift the orthogonality center by one site and update the stacks.

    Returns:
        (new Mps, new cache); the input cache object is left untouched
    """
    cache.check_position(mps)
    c = mps.center
    if direction == 'right' and c + 1 >= mps.n_sites:
        raise BoundaryError(f"Cannot move center right of site {c}")
    if direction == 'left' and c == 0:
        raise BoundaryError("Cannot move center left of site 0")

    new_mps = shift_center(mps, direction)
    left_envs = list(cache.left_envs)
    right_envs = list(cache.right_envs)
    vectors = cache.site_vectors[:, c, :]
    if direction == 'right':
        left_envs.append(_absorb_left(left_envs[-1], vectors, new_mps.cores[c]))
        right_envs.pop()
    else:
        right_envs.append(_absorb_right(right_envs[-1], vectors, new_mps.cores[c]))
        left_envs.pop()
    return new_mps, EnvironmentCache(cache.site_vectors, left_envs, right_envs, new_mps.center)


def reduced_environment(
    cache: EnvironmentCache,
    sample_index: int,
    mps: Optional[Mps] = None
) -> np.ndarray:
    """
    Reduced environment w_x of one sample at the active site.

    Args:
        cache: Environment cache
        sample_index: Row of the sample in the cache
        mps: If given, the cache must be positioned at its center

    Returns:
        Flat vector of dimension chi_left * d * chi_right
    """
    if mps is not None:
        cache.check_position(mps)
    if not 0 <= sample_index < cache.n_samples:
        raise DimensionError(f"Sample index {sample_index} outside [0, {cache.n_samples - 1}]")
    c = cache.active_site
    return np.einsum(
        'a,s,b->asb',
        cache.left(c)[sample_index],
        cache.site_vectors[sample_index, c, :],
        cache.right(c)[sample_index]
    ).reshape(-1)


def environments_from_scratch(mps: Mps, site_vectors: np.ndarray, site: int) -> np.ndarray:
    """
    (N_s, D) reduced environments at `site` by independent full contraction.

    Works in any gauge; used as an oracle for the cached path.
    """
    n_samples = site_vectors.shape[0]
    left = np.ones((n_samples, 1))
    for i in range(site):
        left = _absorb_left(left, site_vectors[:, i, :], mps.cores[i])
    right = np.ones((n_samples, 1))
    for i in range(mps.n_sites - 1, site, -1):
        right = _absorb_right(right, site_vectors[:, i, :], mps.cores[i])
    envs = np.einsum('na,ns,nb->nasb', left, site_vectors[:, site, :], right)
    return envs.reshape(n_samples, -1)


def site_gradients(mps: Mps, site_vectors: np.ndarray) -> np.ndarray:
    """
    d amplitude / d v_i for every sample and site.

    Returns:
        (N_s, N, d) array g with amplitude = (g[:, i, :], v_i) for every i
    """
    n_samples, n_sites, _ = site_vectors.shape
    lefts = [np.ones((n_samples, 1))]
    for i in range(n_sites - 1):
        lefts.append(_absorb_left(lefts[-1], site_vectors[:, i, :], mps.cores[i]))
    rights = [np.ones((n_samples, 1))]
    for i in range(n_sites - 1, 0, -1):
        rights.append(_absorb_right(rights[-1], site_vectors[:, i, :], mps.cores[i]))
    rights = rights[::-1]
    grads = np.empty(site_vectors.shape)
    for i in range(n_sites):
        grads[:, i, :] = np.einsum('na,asb,nb->ns', lefts[i], mps.cores[i], rights[i])
    return grads
