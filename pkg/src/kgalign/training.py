"""Bidirectional in-batch contrastive loss and a small trainable encoder.

The trainable encoder is deliberately minimal: hashed bag-of-token features
through a single linear map followed by L2 normalization. It exists to make
the loss differentiable end to end at desk scale; large pretrained encoders
plug in through the provider interface instead.

Loss definition, for an N x N similarity matrix S between batch sides and a
positive row set P (0-based):

    L = (loss over rows + loss over columns) / 2
    row loss = -(1/|P|) * sum_{i in P} log( exp(t*S[i,i]) / sum_j exp(t*S[i,j]) )

with temperature t = exp(log_scale) kept positive by construction. Rows with
label 0 never enter the numerator sum but stay in every denominator, acting
as in-batch hard negatives. Log-sum-exp uses max-subtraction throughout;
this is mandatory, not an optimization.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encoder import EmbeddingProvider, token_hash_features
from .errors import (
    DegenerateInput,
    DimensionMismatch,
    DivergenceDetected,
    EmptyPositives,
    RangeError,
)
from .mining import AlignmentPair, Label
from .model import serialize_entity

logger = logging.getLogger(__name__)

INITIAL_TEMPERATURE = 20.0


@dataclass(frozen=True)
class Batch:
    """Paired serialized entities with binary labels."""

    side_a: tuple[str, ...]
    side_b: tuple[str, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.side_a) == len(self.side_b) == len(self.labels)):
            raise DimensionMismatch("batch sides and labels must align")

    @property
    def positives(self) -> tuple[int, ...]:
        return tuple(i for i, label in enumerate(self.labels) if label == 1)


@dataclass
class ToyEncoderState:
    """Linear-map encoder parameters plus the learnable log temperature."""

    W: np.ndarray
    log_scale: float
    step: int = 0
    loss_history: list[float] = field(default_factory=list)

    @property
    def tau(self) -> float:
        return math.exp(self.log_scale)

    def copy(self) -> "ToyEncoderState":
        return ToyEncoderState(
            W=self.W.copy(),
            log_scale=self.log_scale,
            step=self.step,
            loss_history=list(self.loss_history),
        )


@dataclass
class TrainConfig:
    seed: int = 7
    batch_size: int = 64
    learning_rate: float = 0.1
    steps: int = 200
    feature_dim: int = 4_096
    output_dim: int = 64
    budget: int = 1_000
    feature_seed: int = 0


def init_toy_encoder(config: TrainConfig) -> ToyEncoderState:
    rng = np.random.default_rng(config.seed)
    W = rng.normal(0.0, 1.0, size=(config.feature_dim, config.output_dim))
    W /= math.sqrt(config.feature_dim)
    return ToyEncoderState(W=W, log_scale=math.log(INITIAL_TEMPERATURE))


def infonce_loss(S: np.ndarray, positives: Sequence[int], tau: float) -> float:
    """Bidirectional in-batch contrastive loss on a similarity matrix."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"similarity matrix must be square, got {S.shape}")
    if tau <= 0:
        raise RangeError(f"temperature must be positive, got {tau}")
    pos = sorted(set(positives))
    if not pos:
        raise EmptyPositives("loss needs at least one positive row")
    if pos[0] < 0 or pos[-1] >= S.shape[0]:
        raise RangeError("positive index out of range")

    Z = tau * S
    diag = np.diag(Z)

    def direction(logits: np.ndarray) -> float:
        m = logits.max(axis=1)
        lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
        return float(np.mean(lse[pos] - diag[pos]))

    return 0.5 * (direction(Z) + direction(Z.T))


def _loss_and_similarity_grad(
    Z: np.ndarray, pos: list[int]
) -> tuple[float, np.ndarray]:
    """Loss and dL/dZ for logits Z = tau * S."""
    n = Z.shape[0]
    diag = np.diag(Z)
    inv_p = 1.0 / len(pos)

    def softmax_rows(logits: np.ndarray) -> np.ndarray:
        m = logits.max(axis=1, keepdims=True)
        e = np.exp(logits - m)
        return e / e.sum(axis=1, keepdims=True)

    m_r = Z.max(axis=1)
    lse_r = m_r + np.log(np.exp(Z - m_r[:, None]).sum(axis=1))
    m_c = Z.max(axis=0)
    lse_c = m_c + np.log(np.exp(Z - m_c[None, :]).sum(axis=0))
    loss = 0.5 * (np.mean(lse_r[pos] - diag[pos]) + np.mean(lse_c[pos] - diag[pos]))

    grad = np.zeros_like(Z)
    row_soft = softmax_rows(Z)
    col_soft = softmax_rows(Z.T).T
    eye = np.eye(n)
    pos_mask = np.zeros(n)
    pos_mask[pos] = 1.0
    grad += 0.5 * inv_p * pos_mask[:, None] * (row_soft - eye)
    grad += 0.5 * inv_p * pos_mask[None, :] * (col_soft - eye)
    return float(loss), grad


def _featurize_sides(batch: Batch, state: ToyEncoderState, feature_seed: int):
    d_in = state.W.shape[0]
    X_a = token_hash_features(batch.side_a, d_in, feature_seed)
    X_b = token_hash_features(batch.side_b, d_in, feature_seed)
    if np.any(np.linalg.norm(X_a, axis=1) == 0.0) or np.any(
        np.linalg.norm(X_b, axis=1) == 0.0
    ):
        raise DegenerateInput("batch contains a zero feature vector")
    return X_a, X_b


def _grad_from_features(
    X_a: np.ndarray, X_b: np.ndarray, pos: list[int], state: ToyEncoderState
) -> tuple[np.ndarray, float, float]:
    if not pos:
        raise EmptyPositives("gradient needs at least one positive row")
    W = state.W
    tau = state.tau

    U_a, U_b = X_a @ W, X_b @ W
    norm_a = np.linalg.norm(U_a, axis=1)
    norm_b = np.linalg.norm(U_b, axis=1)
    if np.any(norm_a == 0.0) or np.any(norm_b == 0.0):
        raise DegenerateInput("encoder produced a zero vector before normalization")
    A = U_a / norm_a[:, None]
    B = U_b / norm_b[:, None]
    S = A @ B.T

    loss, dZ = _loss_and_similarity_grad(tau * S, pos)
    # d(loss)/d(log_scale): logits are exp(log_scale) * S.
    d_log_scale = float(np.sum(dZ * (tau * S)))
    dS = tau * dZ

    dA = dS @ B
    dB = dS.T @ A
    dU_a = (dA - (dA * A).sum(axis=1, keepdims=True) * A) / norm_a[:, None]
    dU_b = (dB - (dB * B).sum(axis=1, keepdims=True) * B) / norm_b[:, None]
    dW = X_a.T @ dU_a + X_b.T @ dU_b
    return dW, d_log_scale, loss


def infonce_grad(
    batch: Batch, state: ToyEncoderState, feature_seed: int = 0
) -> tuple[np.ndarray, float, float]:
    """Analytic gradients of the composed loss w.r.t. W and log_scale.

    Returns (dW, d_log_scale, loss). The composition is: hashed features,
    linear map W, row L2 normalization, cosine similarity matrix, loss at
    temperature exp(log_scale).
    """
    X_a, X_b = _featurize_sides(batch, state, feature_seed)
    return _grad_from_features(X_a, X_b, list(batch.positives), state)


def toy_encoder_loss(
    batch: Batch, state: ToyEncoderState, feature_seed: int = 0
) -> float:
    """Loss of the composed toy encoder on one batch (no gradients)."""
    X_a, X_b = _featurize_sides(batch, state, feature_seed)
    _, _, loss = _grad_from_features(X_a, X_b, list(batch.positives), state)
    return loss


def train_toy_encoder(
    corpus: Sequence[AlignmentPair],
    config: TrainConfig,
) -> ToyEncoderState:
    """Plain SGD over shuffled batches of serialized pairs.

    Deterministic under a fixed config seed. Batches that happen to contain
    no positive row are skipped without consuming a step. Raises
    DivergenceDetected if the loss becomes non-finite.
    """
    if not corpus:
        raise ValueError("empty training corpus")
    state = init_toy_encoder(config)
    if config.steps == 0:
        return state

    texts_a = [serialize_entity(p.a, config.budget) for p in corpus]
    texts_b = [serialize_entity(p.b, config.budget) for p in corpus]
    labels = np.array(
        [1 if p.label is Label.POSITIVE else 0 for p in corpus], dtype=np.int64
    )
    # float32 keeps the cached matrices small; counts this small are exact.
    X_a_all = token_hash_features(texts_a, config.feature_dim, config.feature_seed).astype(
        np.float32
    )
    X_b_all = token_hash_features(texts_b, config.feature_dim, config.feature_seed).astype(
        np.float32
    )
    if np.any(np.linalg.norm(X_a_all, axis=1) == 0.0) or np.any(
        np.linalg.norm(X_b_all, axis=1) == 0.0
    ):
        raise DegenerateInput("corpus contains a zero feature vector")

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(corpus))
    cursor = 0
    skipped = 0
    max_visits = max(10 * config.steps, 100)
    visits = 0
    while state.step < config.steps:
        visits += 1
        if visits > max_visits:
            raise EmptyPositives(
                "could not assemble enough batches with positive rows"
            )
        if cursor + config.batch_size > len(order):
            order = rng.permutation(len(corpus))
            cursor = 0
        take = order[cursor : cursor + config.batch_size]
        cursor += config.batch_size
        pos = [int(i) for i in np.flatnonzero(labels[take] == 1)]
        if not pos:
            skipped += 1
            continue
        X_a = X_a_all[take].astype(np.float64)
        X_b = X_b_all[take].astype(np.float64)
        dW, d_log_scale, loss = _grad_from_features(X_a, X_b, pos, state)
        if not math.isfinite(loss):
            raise DivergenceDetected(f"loss diverged at step {state.step}: {loss}")
        state.W -= config.learning_rate * dW
        state.log_scale -= config.learning_rate * d_log_scale
        state.step += 1
        state.loss_history.append(loss)
        logger.debug("step %d loss %.6f tau %.3f", state.step, loss, state.tau)
    if skipped:
        logger.info("skipped %d batches without positive rows", skipped)
    return state


class ToyEncoderProvider(EmbeddingProvider):
    """Expose a trained toy encoder through the provider interface."""

    def __init__(self, state: ToyEncoderState, feature_seed: int = 0):
        self.state = state
        self.feature_seed = feature_seed
        self.dimension = state.W.shape[1]

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        X = token_hash_features(texts, self.state.W.shape[0], self.feature_seed)
        zero = np.linalg.norm(X, axis=1) == 0.0
        if np.any(zero):
            raise DegenerateInput("cannot embed token-free text with the toy encoder")
        U = X @ self.state.W
        norms = np.linalg.norm(U, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateInput("toy encoder produced a zero vector")
        return U / norms[:, None]
