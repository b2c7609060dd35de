"""
Online Competence Learning
==========================
Estimates one-coin classifier competences from unlabelled agreement data.

Pipeline:
1. agreement_stats: centered pairwise agreement matrix N
2. spectral_init: per-classifier moment estimate from the strongest pair
   of other classifiers, with a global sign flip
3. em_iterate: one E-step/M-step of the one-coin EM
4. online_learn: clamp, iterate EM to convergence, clamp again

Classes are integers 1..K with 0 marking a missing label. For binary data
class 1 corresponds to label +1 and class 2 to label -1.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from loguru import logger
from scipy.special import logsumexp

from src.simulation.errors import EstimationError

CLAMP_EPS = 1e-4


@dataclass
class LabelMatrix:
    """Sample x classifier class ids, 0 where a classifier gave no label."""

    labels: np.ndarray
    n_classes: int = 2
    sample_ids: Optional[List[int]] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int16)
        if self.labels.ndim != 2:
            raise EstimationError("Label matrix must be 2-D (samples x classifiers)")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > self.n_classes):
            raise EstimationError(f"Class ids must lie in 0..{self.n_classes}")

    @classmethod
    def from_signed(cls, signed: np.ndarray, sample_ids: Optional[List[int]] = None) -> "LabelMatrix":
        signed = np.asarray(signed)
        labels = np.where(signed > 0, 1, np.where(signed < 0, 2, 0))
        return cls(labels, n_classes=2, sample_ids=sample_ids)

    @property
    def n_samples(self) -> int:
        return self.labels.shape[0]

    @property
    def n_classifiers(self) -> int:
        return self.labels.shape[1]

    def observed(self) -> np.ndarray:
        return (self.labels > 0).astype(float)

    def one_hot(self, k: int) -> np.ndarray:
        return (self.labels == k).astype(float)


@dataclass
class SpectralInit:
    p_hat: np.ndarray
    negative_radicands: int = 0
    flipped: bool = False


@dataclass
class LearnedCompetences:
    p_hat: List[float]
    iterations_run: int
    converged: bool
    negative_radicands: int = 0
    fallback_classifiers: List[int] = field(default_factory=list)

    def max_error(self, truth: Sequence[float]) -> float:
        return float(np.max(np.abs(np.asarray(self.p_hat) - np.asarray(truth, dtype=float))))


def agreement_stats(data: LabelMatrix, strict: bool = True) -> np.ndarray:
    """
    Centered agreement N_ij = ((K-1)/K) * (agree_ij - 1/K).

    agree_ij is the fraction of samples labelled by both i and j on which
    they agree. The diagonal is NaN. Pairs that never co-label raise in
    strict mode and are NaN otherwise.
    """
    K = data.n_classes
    observed = data.observed()
    co_counts = observed.T @ observed
    agree_counts = sum(data.one_hot(k).T @ data.one_hot(k) for k in range(1, K + 1))

    with np.errstate(invalid="ignore", divide="ignore"):
        frac = agree_counts / co_counts
    N = ((K - 1) / K) * (frac - 1.0 / K)

    off_diagonal = ~np.eye(data.n_classifiers, dtype=bool)
    missing = (co_counts == 0) & off_diagonal
    if missing.any():
        i, j = np.argwhere(np.triu(missing, 1))[0]
        if strict:
            raise EstimationError(f"Classifiers {i} and {j} share no labelled sample")
        logger.warning(f"{int(missing.sum()) // 2} classifier pairs share no labelled sample")
        N[missing] = np.nan

    np.fill_diagonal(N, np.nan)
    return N


def _strongest_pair(N: np.ndarray, i: int) -> Optional[tuple]:
    """Lexicographically first (m, m') maximising |N_mm'| over pairs avoiding i."""
    M = N.shape[0]
    defined_i = np.isfinite(N[i])
    defined_i[i] = False

    valid = np.triu(np.isfinite(N), 1) & defined_i[:, None] & defined_i[None, :]
    if not valid.any():
        return None

    scores = np.where(valid, np.abs(np.nan_to_num(N)), -np.inf)
    flat = int(np.argmax(scores))
    m, m2 = divmod(flat, M)
    if N[m, m2] == 0:
        return None
    return m, m2


def spectral_init(N: np.ndarray, K: int = 2, literal_flip: bool = False) -> SpectralInit:
    """
    p_i = 1/K + sign(N_i,m) * sqrt(N_i,m * N_i,m' / N_m,m').

    Negative radicands are counted and treated as zero. Classifiers with no
    usable pair get NaN. If the mean estimate falls below 1/K every
    estimate is mirrored around 1/K (with ``literal_flip`` the mirror
    happens when the mean is at or above 1/K instead).
    """
    M = N.shape[0]
    p_hat = np.full(M, np.nan)
    negative = 0

    for i in range(M):
        pair = _strongest_pair(N, i)
        if pair is None:
            continue
        m, m2 = pair
        radicand = N[i, m] * N[i, m2] / N[m, m2]
        if radicand < 0:
            negative += 1
            radicand = 0.0
        p_hat[i] = 1.0 / K + np.sign(N[i, m]) * np.sqrt(radicand)

    if negative:
        logger.warning(f"Spectral init: {negative} negative radicand(s) treated as zero")

    mean = np.nanmean(p_hat) if np.isfinite(p_hat).any() else 1.0 / K
    flip = mean >= 1.0 / K if literal_flip else mean < 1.0 / K
    if flip:
        p_hat = 2.0 / K - p_hat
    return SpectralInit(p_hat=p_hat, negative_radicands=negative, flipped=bool(flip))


def clamp_competences(p_hat: Sequence[float], K: int = 2, eps: float = CLAMP_EPS) -> np.ndarray:
    return np.clip(np.asarray(p_hat, dtype=float), 1.0 / K + eps, 1.0 - eps)


def e_step(data: LabelMatrix, p_hat: Sequence[float]) -> np.ndarray:
    """Posterior over true classes per sample, uniform class prior."""
    K = data.n_classes
    p = np.asarray(p_hat, dtype=float)
    log_right = np.log(p)
    log_wrong = np.log((1.0 - p) / (K - 1))
    observed = data.observed()

    log_lik = np.empty((data.n_samples, K))
    for k in range(1, K + 1):
        hits = data.one_hot(k)
        log_lik[:, k - 1] = hits @ log_right + (observed - hits) @ log_wrong
    return np.exp(log_lik - logsumexp(log_lik, axis=1, keepdims=True))


def m_step(data: LabelMatrix, posterior: np.ndarray, previous: Sequence[float]) -> np.ndarray:
    """Expected fraction of correct labels per classifier."""
    expected_right = sum(
        data.one_hot(k) * posterior[:, k - 1 : k] for k in range(1, data.n_classes + 1)
    ).sum(axis=0)
    counts = data.observed().sum(axis=0)
    previous = np.asarray(previous, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, expected_right / counts, previous)


def em_iterate(data: LabelMatrix, p_hat: Sequence[float]) -> np.ndarray:
    """One EM step; the result is not clamped."""
    return m_step(data, e_step(data, p_hat), p_hat)


def _majority_agreement(data: LabelMatrix, classifiers: Sequence[int]) -> np.ndarray:
    """Agreement of each classifier with the plain majority of the others."""
    K = data.n_classes
    counts = np.stack([data.one_hot(k) for k in range(1, K + 1)], axis=2)
    totals = counts.sum(axis=1)
    estimates = []

    for i in classifiers:
        others = totals - counts[:, i, :]
        top = others.max(axis=1)
        unique_top = (others == top[:, None]).sum(axis=1) == 1
        usable = (data.labels[:, i] > 0) & (top > 0) & unique_top
        if not usable.any():
            estimates.append((1.0 + 1.0 / K) / 2.0)
            continue
        majority = others[usable].argmax(axis=1) + 1
        estimates.append(float(np.mean(data.labels[usable, i] == majority)))
    return np.asarray(estimates)


def online_learn(
    data: LabelMatrix,
    K: Optional[int] = None,
    max_iters: int = 100,
    tol: float = 1e-8,
    literal_flip: bool = False,
    strict: bool = False,
) -> LearnedCompetences:
    """
    Spectral initialisation followed by clamped EM.

    Classifiers the spectral step cannot place (sparse data) start from
    their agreement with the majority of the other classifiers; with
    ``strict`` they raise instead.
    """
    if K is not None and K != data.n_classes:
        data = LabelMatrix(data.labels, n_classes=K, sample_ids=data.sample_ids)
    K = data.n_classes
    if data.n_samples == 0:
        raise EstimationError("No labelled samples to learn from")

    N = agreement_stats(data, strict=strict)
    init = spectral_init(N, K, literal_flip=literal_flip)
    p = init.p_hat.copy()

    missing = [int(i) for i in np.flatnonzero(~np.isfinite(p))]
    if missing:
        if strict:
            raise EstimationError(f"No usable classifier pair for classifiers {missing}")
        logger.warning(f"Falling back to majority agreement for classifiers {missing}")
        p[missing] = _majority_agreement(data, missing)

    p = clamp_competences(p, K)
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        updated = clamp_competences(em_iterate(data, p), K)
        delta = float(np.max(np.abs(updated - p)))
        p = updated
        logger.trace(f"EM iteration {iterations}: max delta {delta:.3e}")
        if delta < tol:
            converged = True
            break

    if max_iters > 0 and not converged:
        logger.debug(f"EM stopped after {max_iters} iterations without reaching tol={tol}")

    return LearnedCompetences(
        p_hat=[float(v) for v in p],
        iterations_run=iterations,
        converged=converged,
        negative_radicands=init.negative_radicands,
        fallback_classifiers=missing,
    )
