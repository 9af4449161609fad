"""Linear-chain CRF lattice algorithms over emission matrices.

Everything here works on plain arrays: emissions ``S`` of shape ``(n, v)`` (or
``(B, L, v)`` padded batches with a ``lengths`` vector), and a
:class:`TransitionParams` holding the transition matrix plus start/stop scores.
Illegal transitions are stored as ``MASKED`` rather than ``-inf`` so the
arithmetic never produces NaN; they are excluded from parameter updates.

Sums over the ``v x v`` transition lattice are done in log space with a
max-shift, and the shifted exponentials are contracted with a matrix product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleConstraintError, ModelError

MASKED = -1e4


@dataclass
class TransitionParams:
    M: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    mask: np.ndarray
    start_mask: np.ndarray
    stop_mask: np.ndarray

    def __post_init__(self):
        self.M = np.array(self.M, dtype=np.float64)
        self.start = np.array(self.start, dtype=np.float64)
        self.stop = np.array(self.stop, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.start_mask = np.asarray(self.start_mask, dtype=bool)
        self.stop_mask = np.asarray(self.stop_mask, dtype=bool)
        v = self.M.shape[0]
        if self.M.shape != (v, v) or self.start.shape != (v,) or self.stop.shape != (v,):
            raise ModelError("transition parameter shapes disagree")
        self.apply_mask()

    @classmethod
    def zeros(cls, v, mask=None, start_mask=None, stop_mask=None):
        return cls(
            M=np.zeros((v, v)),
            start=np.zeros(v),
            stop=np.zeros(v),
            mask=np.ones((v, v), bool) if mask is None else np.asarray(mask, bool),
            start_mask=np.ones(v, bool) if start_mask is None else np.asarray(start_mask, bool),
            stop_mask=np.ones(v, bool) if stop_mask is None else np.asarray(stop_mask, bool),
        )

    @classmethod
    def for_tagset(cls, ts):
        return cls.zeros(len(ts), ts.transition_mask(), ts.start_mask(), ts.stop_mask())

    @property
    def v(self) -> int:
        return self.M.shape[0]

    def apply_mask(self):
        self.M[~self.mask] = MASKED
        self.start[~self.start_mask] = MASKED
        self.stop[~self.stop_mask] = MASKED

    def copy(self):
        return TransitionParams(
            self.M.copy(), self.start.copy(), self.stop.copy(),
            self.mask.copy(), self.start_mask.copy(), self.stop_mask.copy(),
        )


@dataclass
class LabelConstraint:
    """Allowed tag set per position, as a boolean ``(n, v)`` matrix."""

    allowed: np.ndarray

    def __post_init__(self):
        self.allowed = np.asarray(self.allowed, dtype=bool)
        if self.allowed.ndim != 2 or self.allowed.shape[0] == 0:
            raise ModelError("constraint must be a non-empty (n, v) matrix")
        if not self.allowed.any(axis=1).all():
            raise InfeasibleConstraintError("empty allowed set at some position")

    def __len__(self):
        return self.allowed.shape[0]

    @classmethod
    def from_tags(cls, y, v):
        allowed = np.zeros((len(y), v), bool)
        allowed[np.arange(len(y)), y] = True
        return cls(allowed)

    @classmethod
    def full(cls, n, v):
        return cls(np.ones((n, v), bool))

    @classmethod
    def from_hybrid(cls, tags, ts):
        """Known tags pin one label; unknown-POS tags allow every POS with that boundary."""
        allowed = np.zeros((len(tags), len(ts)), bool)
        for i, t in enumerate(tags):
            if t.known:
                allowed[i, ts.index(t)] = True
            else:
                allowed[i, ts.boundary_ids(t.boundary)] = True
        return cls(allowed)

    def is_singleton(self) -> bool:
        return bool((self.allowed.sum(axis=1) == 1).all())


def _logsumexp(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _shifted_exp(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.exp(x - m), np.squeeze(m, axis=axis)


def _as_batch(S):
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2:
        raise ModelError(f"emissions must be (n, v), got shape {S.shape}")
    return S[None], np.array([S.shape[0]])


def _check(S, T):
    if S.shape[-1] != T.v:
        raise ModelError(f"emissions have {S.shape[-1]} tags, transitions have {T.v}")


def _length_mask(lengths, L):
    return np.arange(L)[None, :] < np.asarray(lengths)[:, None]


def forward(S, lengths, T, allowed=None):
    """Log forward scores ``alpha`` of shape (B, L, v) and ``log Z`` of shape (B,).

    ``alpha[b, t]`` for ``t >= lengths[b]`` repeats the last valid row.
    """
    _check(S, T)
    if allowed is not None:
        S = np.where(allowed, S, -np.inf)
    B, L, v = S.shape
    eM, mM = _shifted_exp(T.M, axis=0)
    alpha = np.empty((B, L, v))
    alpha[:, 0] = T.start + S[:, 0]
    for t in range(1, L):
        ea, ma = _shifted_exp(alpha[:, t - 1])
        with np.errstate(divide="ignore"):
            new = np.log(ea @ eM) + ma[:, None] + mM + S[:, t]
        alpha[:, t] = np.where((t < lengths)[:, None], new, alpha[:, t - 1])
    logZ = _logsumexp(alpha[:, -1] + T.stop, axis=1)
    return alpha, logZ


def backward(S, lengths, T, allowed=None):
    _check(S, T)
    if allowed is not None:
        S = np.where(allowed, S, -np.inf)
    B, L, v = S.shape
    eMt, mM = _shifted_exp(T.M.T, axis=0)
    beta = np.empty((B, L, v))
    beta[:, -1] = T.stop
    for t in range(L - 2, -1, -1):
        eb, mb = _shifted_exp(S[:, t + 1] + beta[:, t + 1])
        with np.errstate(divide="ignore"):
            new = np.log(eb @ eMt) + mb[:, None] + mM
        beta[:, t] = np.where((t + 1 < lengths)[:, None], new, T.stop)
    return beta


def expected_counts(S, lengths, T, allowed=None):
    """Posterior expectations of every potential, summed over the batch.

    Returns ``(logZ, node, edge, start, stop)``: per-sentence log partition
    (B,), node marginals (B, L, v) zeroed past each length, and batch totals of
    edge marginals (v, v), first-position marginals (v,), last-position
    marginals (v,).
    """
    lengths = np.asarray(lengths)
    if allowed is not None:
        S = np.where(allowed, S, -np.inf)
    alpha, logZ = forward(S, lengths, T)
    beta = backward(S, lengths, T)
    B, L, v = S.shape
    valid = _length_mask(lengths, L)
    with np.errstate(invalid="ignore"):
        node = np.exp(alpha + beta - logZ[:, None, None])
    node = np.where(valid[:, :, None], node, 0.0)

    eM, mM = _shifted_exp(T.M, axis=None)
    edge = np.zeros((v, v))
    if L > 1:
        ea, ma = _shifted_exp(alpha[:, :-1])
        eb, mb = _shifted_exp(S[:, 1:] + beta[:, 1:])
        scale = np.exp(ma + mb + mM - logZ[:, None])
        scale = np.where(valid[:, 1:], scale, 0.0)
        ea = (ea * scale[:, :, None]).reshape(-1, v)
        edge = (ea.T @ eb.reshape(-1, v)) * eM
    start = node[:, 0].sum(axis=0)
    stop = node[np.arange(B), lengths - 1].sum(axis=0)
    return logZ, node, edge, start, stop


def feasible(allowed, T, length=None):
    """True iff some path through ``allowed`` uses only legal transitions."""
    allowed = np.asarray(allowed, bool)
    n = allowed.shape[0] if length is None else length
    reach = allowed[0] & T.start_mask
    for t in range(1, n):
        reach = (reach.astype(np.int64) @ T.mask.astype(np.int64) > 0) & allowed[t]
    return bool((reach & T.stop_mask).any())


def viterbi_batch(S, lengths, T):
    _check(S, T)
    lengths = np.asarray(lengths)
    B, L, v = S.shape
    delta = T.start + S[:, 0]
    back = np.zeros((B, L, v), dtype=np.int64)
    for t in range(1, L):
        cand = delta[:, :, None] + T.M[None]
        bp = np.argmax(cand, axis=1)
        new = np.take_along_axis(cand, bp[:, None, :], axis=1)[:, 0] + S[:, t]
        active = (t < lengths)[:, None]
        delta = np.where(active, new, delta)
        back[:, t] = bp
    last = np.argmax(delta + T.stop, axis=1)
    paths = []
    for b in range(B):
        n = int(lengths[b])
        y = [int(last[b])]
        for t in range(n - 1, 0, -1):
            y.append(int(back[b, t, y[-1]]))
        paths.append(y[::-1])
    return paths


def sequence_score(S, T, y) -> float:
    S = np.asarray(S, dtype=np.float64)
    _check(S, T)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (S.shape[0],):
        raise ModelError(f"tag sequence length {len(y)} != sentence length {S.shape[0]}")
    score = T.start[y[0]] + S[np.arange(len(y)), y].sum() + T.stop[y[-1]]
    if len(y) > 1:
        score += T.M[y[:-1], y[1:]].sum()
    return float(score)


def log_partition(S, T) -> float:
    Sb, lengths = _as_batch(S)
    return float(forward(Sb, lengths, T)[1][0])


def constrained_log_partition(S, T, constraint) -> float:
    allowed = constraint.allowed if isinstance(constraint, LabelConstraint) else np.asarray(constraint, bool)
    Sb, lengths = _as_batch(S)
    if allowed.shape != Sb.shape[1:]:
        raise ModelError("constraint shape does not match emissions")
    if not feasible(allowed, T):
        raise InfeasibleConstraintError("no legal path satisfies the constraint")
    return float(forward(Sb, lengths, T, allowed[None])[1][0])


def nll(S, T, y) -> float:
    return log_partition(S, T) - sequence_score(S, T, y)


def marginals(S, T):
    """Node marginals (n, v) and edge marginals (n-1, v, v) of one sentence."""
    Sb, lengths = _as_batch(S)
    alpha, logZ = forward(Sb, lengths, T)
    beta = backward(Sb, lengths, T)
    node = np.exp(alpha[0] + beta[0] - logZ[0])
    n = Sb.shape[1]
    edge = np.exp(
        alpha[0, :-1, :, None] + T.M[None] + (Sb[0, 1:] + beta[0, 1:])[:, None, :] - logZ[0]
    ) if n > 1 else np.zeros((0, T.v, T.v))
    return node, edge


def viterbi(S, T) -> list:
    """Best legal path; ties go to the smallest tag at the latest differing position."""
    Sb, lengths = _as_batch(S)
    return viterbi_batch(Sb, lengths, T)[0]
