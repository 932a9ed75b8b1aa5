"""PCA on supervectors, trained through the J x J Gram matrix.

Calibration gives a few hundred supervectors of a few hundred thousand
coordinates, so the P x P covariance is never formed.  Variances use the
population convention (divide by J).  Each basis row is signed so that its
largest-magnitude coordinate is positive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PcaModel", "train", "project"]


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray

    @property
    def component_count(self) -> int:
        return self.basis.shape[0]

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PcaModel):
            return NotImplemented
        return all(_same(a, b) for a, b in (
            (self.mean, other.mean), (self.basis, other.basis),
            (self.explained_variance, other.explained_variance)))


def _same(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    pivot = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(basis.shape[0]), pivot])
    signs[signs == 0] = 1.0
    return basis * signs[:, None]


def train(vectors: np.ndarray, component_count: int = 32) -> PcaModel:
    """Fit the top ``component_count`` principal directions of ``vectors`` (J x P)."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a (J, P) stack of supervectors, got shape {x.shape}")
    j, p = x.shape
    if j < 2:
        raise ValueError(f"PCA needs at least 2 vectors, got {j}")
    if not 1 <= component_count <= min(j - 1, p):
        raise ValueError(
            f"component_count={component_count} must lie in 1..min(J-1, P) = "
            f"{min(j - 1, p)} for J={j}, P={p}")

    mean = x.mean(axis=0)
    xc = x - mean
    gram = xc @ xc.T
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1][:component_count]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]

    # directions with numerically zero variance carry no information; they are
    # completed below so the basis stays orthonormal
    tol = evals[0] * max(j, p) * np.finfo(float).eps if evals[0] > 0 else np.inf
    rank = int(np.count_nonzero(evals > tol))
    basis = np.zeros((component_count, p))
    if rank:
        basis[:rank] = (evecs[:, :rank].T @ xc) / np.sqrt(evals[:rank])[:, None]
    if rank < component_count:
        basis[rank:] = _complete_basis(basis[:rank], component_count - rank, p)
        evals[rank:] = 0.0

    # re-orthonormalize in variance order; R's diagonal is forced positive so
    # this only removes rounding error and never flips a direction
    q, r = np.linalg.qr(basis.T)
    q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    basis = _fix_signs(q.T)
    return PcaModel(mean, np.ascontiguousarray(basis), evals / j)


def _complete_basis(existing: np.ndarray, count: int, dim: int) -> np.ndarray:
    """``count`` unit vectors orthogonal to ``existing`` and each other, from the standard basis."""
    rows = list(existing)
    extra = []
    for i in range(dim):
        if len(extra) == count:
            break
        v = np.zeros(dim)
        v[i] = 1.0
        for u in rows:
            v -= (u @ v) * u
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            v /= norm
            rows.append(v)
            extra.append(v)
    return np.array(extra)


def project(model: PcaModel, v: np.ndarray) -> np.ndarray:
    """``basis @ (v - mean)``; accepts a single vector or a (J, P) stack."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.dimension:
        raise ValueError(f"vector length {v.shape[-1]} != PCA dimension {model.dimension}")
    return (v - model.mean) @ model.basis.T
