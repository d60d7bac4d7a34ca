"""Dense float64 primitives with explicit backward rules, Adam, and a
finite-difference gradient checker.

Everything operates on 2-D C-contiguous float64 arrays; scalar parameters are
kept as 1x1 blocks so the optimizer and the checkpoint format treat every
trainable quantity uniformly. There is deliberately no autodiff tape: the
network is a fixed shallow composition, and every backward rule is validated
against central finite differences by ``gradient_check``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, LoadError, NumericError, ValidationError

CHECKPOINT_MAGIC = b"GFCK"
CHECKPOINT_VERSION = 1

DEFAULT_LEAKY_SLOPE = 0.01


def as_matrix(x, name: str = "tensor") -> np.ndarray:
    """Coerce ``x`` to a 2-D float64 array; 1-D input becomes a single row."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    return np.ascontiguousarray(a)


def linear_forward(x, weight, bias) -> np.ndarray:
    """Affine map: row i of the result is weight @ x[i] + bias."""
    x = as_matrix(x, "x")
    w = as_matrix(weight, "weight")
    b = as_matrix(bias, "bias")
    if w.shape[1] != x.shape[1]:
        raise DimensionError(
            f"linear_forward: x has {x.shape[1]} columns but weight {w.shape} expects {w.shape[1]}"
        )
    if b.shape != (1, w.shape[0]):
        raise DimensionError(
            f"linear_forward: bias shape {b.shape} does not match weight rows {w.shape[0]}"
        )
    return x @ w.T + b


def leaky_relu(x, slope: float = DEFAULT_LEAKY_SLOPE) -> np.ndarray:
    """Elementwise max(x, slope*x)."""
    if not 0.0 < slope < 1.0:
        raise ValidationError(f"leaky_relu slope must lie in (0, 1), got {slope}")
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, slope * x)


def leaky_relu_grad(pre, slope: float = DEFAULT_LEAKY_SLOPE) -> np.ndarray:
    """Derivative of leaky_relu evaluated at the pre-activation values."""
    pre = np.asarray(pre, dtype=np.float64)
    return np.where(pre > 0.0, 1.0, slope)


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_axis(x, axis: int) -> np.ndarray:
    """Max-subtracted softmax along ``axis``."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_rows(x) -> np.ndarray:
    """Softmax over each row of a matrix; rows sum to 1."""
    return softmax_axis(as_matrix(x, "x"), axis=1)


def cross_entropy_loss(logits, targets, sample_weights=None):
    """Mean negative log softmax probability of the target class.

    Returns ``(loss, dlogits)`` where ``dlogits`` is the analytic gradient of
    the loss with respect to the logits. ``sample_weights``, when given,
    replaces the plain mean with a normalized weighted mean.
    """
    logits = as_matrix(logits, "logits")
    y = np.asarray(targets, dtype=np.int64).reshape(-1)
    n, k = logits.shape
    if n == 0:
        raise ValidationError("cross_entropy_loss: empty batch")
    if y.shape[0] != n:
        raise DimensionError(f"cross_entropy_loss: {n} logit rows but {y.shape[0]} targets")
    if np.any((y < 0) | (y >= k)):
        raise ValidationError(f"cross_entropy_loss: targets must lie in [0, {k})")

    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    probs = exp / denom
    nll = -log_probs[np.arange(n), y]

    grad = probs.copy()
    grad[np.arange(n), y] -= 1.0
    if sample_weights is None:
        loss = float(nll.mean())
        grad /= n
    else:
        w = np.asarray(sample_weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != n:
            raise DimensionError("cross_entropy_loss: sample_weights length mismatch")
        wsum = float(w.sum())
        if wsum <= 0:
            raise ValidationError("cross_entropy_loss: sample_weights must sum to a positive value")
        loss = float((w * nll).sum() / wsum)
        grad *= (w / wsum)[:, None]
    return loss, grad


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValidationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValidationError("beta1/beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")


@dataclass
class ParamBlock:
    value: np.ndarray
    grad: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    frozen: bool = False


class ParameterStore:
    """All trainable blocks, each paired with gradient and Adam buffers.

    Iteration order is insertion order and is part of the checkpoint format.
    ``version`` increments whenever values change, which lets cached forward
    traces detect staleness.
    """

    def __init__(self) -> None:
        self._blocks: dict[str, ParamBlock] = {}
        self.step_count: int = 0
        self.version: int = 0

    def add(self, name: str, value) -> ParamBlock:
        if name in self._blocks:
            raise ValidationError(f"duplicate parameter block name '{name}'")
        v = as_matrix(value, name).copy()
        block = ParamBlock(
            value=v,
            grad=np.zeros_like(v),
            adam_m=np.zeros_like(v),
            adam_v=np.zeros_like(v),
        )
        self._blocks[name] = block
        return block

    def __contains__(self, name: str) -> bool:
        return name in self._blocks

    def __getitem__(self, name: str) -> ParamBlock:
        try:
            return self._blocks[name]
        except KeyError:
            raise ValidationError(f"unknown parameter block '{name}'") from None

    def __len__(self) -> int:
        return len(self._blocks)

    def names(self):
        return list(self._blocks)

    def items(self):
        return self._blocks.items()

    def value(self, name: str) -> np.ndarray:
        return self[name].value

    def zero_grads(self) -> None:
        for block in self._blocks.values():
            block.grad[...] = 0.0

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: block.value.copy() for name, block in self._blocks.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, block in self._blocks.items():
            if name not in values:
                raise ValidationError(f"missing values for block '{name}'")
            v = values[name]
            if v.shape != block.value.shape:
                raise DimensionError(
                    f"block '{name}' shape {block.value.shape} != loaded {v.shape}"
                )
            block.value[...] = v
        self.version += 1

    def save(self, path) -> None:
        """Write values to a checkpoint: header, then (name, rows, cols, float64 LE) blocks."""
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<IQI", CHECKPOINT_VERSION, self.step_count, len(self._blocks)))
            for name, block in self._blocks.items():
                encoded = name.encode("utf-8")
                rows, cols = block.value.shape
                f.write(struct.pack("<I", len(encoded)))
                f.write(encoded)
                f.write(struct.pack("<II", rows, cols))
                f.write(block.value.astype("<f8", copy=False).tobytes(order="C"))

    @classmethod
    def load(cls, path) -> "ParameterStore":
        try:
            raw = open(path, "rb").read()
        except OSError as exc:
            raise LoadError(f"cannot read checkpoint '{path}': {exc}") from exc
        store = cls()
        if raw[:4] != CHECKPOINT_MAGIC:
            raise LoadError(f"'{path}' is not a parameter checkpoint")
        version, step_count, nblocks = struct.unpack_from("<IQI", raw, 4)
        if version != CHECKPOINT_VERSION:
            raise LoadError(f"unsupported checkpoint version {version}")
        offset = 4 + struct.calcsize("<IQI")
        for _ in range(nblocks):
            (name_len,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            name = raw[offset : offset + name_len].decode("utf-8")
            offset += name_len
            rows, cols = struct.unpack_from("<II", raw, offset)
            offset += 8
            count = rows * cols
            data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(np.float64)
            offset += count * 8
            store.add(name, data.reshape(rows, cols))
        if offset != len(raw):
            raise LoadError(f"trailing bytes in checkpoint '{path}'")
        store.step_count = step_count
        return store


def adam_step(store: ParameterStore, cfg: AdamConfig) -> None:
    """One bias-corrected Adam update over every unfrozen block; zeroes grads."""
    for name, block in store.items():
        if not np.all(np.isfinite(block.grad)):
            raise NumericError(f"non-finite gradient in block '{name}'")
    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, block in store.items():
        if block.frozen:
            continue
        g = block.grad
        block.adam_m *= cfg.beta1
        block.adam_m += (1.0 - cfg.beta1) * g
        block.adam_v *= cfg.beta2
        block.adam_v += (1.0 - cfg.beta2) * (g * g)
        m_hat = block.adam_m / bc1
        v_hat = block.adam_v / bc2
        block.value -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    store.zero_grads()
    store.version += 1


@dataclass
class GradientCheckReport:
    per_block: dict[str, float]
    max_rel_err: float
    tolerance: float
    passed: bool
    samples_per_block: int
    step: float

    def worst_block(self) -> str:
        return max(self.per_block, key=self.per_block.get)


def gradient_check(
    loss_fn,
    grad_fn,
    store: ParameterStore,
    tolerance: float = 1e-4,
    *,
    samples_per_block: int = 20,
    step: float = 1e-5,
    seed: int = 0,
    rel_floor: float = 1e-6,
) -> GradientCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_fn()`` must return the scalar loss computed deterministically from
    the store's current values and must not mutate the store; ``grad_fn()``
    must populate every block's ``grad``. For each block at least
    ``samples_per_block`` coordinates (or all of them, for small blocks) are
    perturbed by ``+-step``. The relative error uses
    ``|analytic - numeric| / max(|analytic|, |numeric|, rel_floor)`` so that
    numerically negligible coordinates do not dominate the report.
    """
    base_a = float(loss_fn())
    base_b = float(loss_fn())
    if base_a != base_b:
        raise NumericError(
            f"gradient_check: loss closure is not deterministic ({base_a!r} != {base_b!r})"
        )

    store.zero_grads()
    grad_fn()
    analytic = {name: block.grad.copy() for name, block in store.items()}

    rng = np.random.default_rng(seed)
    per_block: dict[str, float] = {}
    for name, block in store.items():
        flat = block.value.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        size = flat.shape[0]
        if size <= samples_per_block:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=samples_per_block, replace=False)
        worst = 0.0
        for j in coords:
            orig = flat[j]
            flat[j] = orig + step
            lo_plus = float(loss_fn())
            flat[j] = orig - step
            lo_minus = float(loss_fn())
            flat[j] = orig
            numeric = (lo_plus - lo_minus) / (2.0 * step)
            a = float(a_flat[j])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), rel_floor)
            worst = max(worst, rel)
        per_block[name] = worst

    max_rel = max(per_block.values()) if per_block else 0.0
    return GradientCheckReport(
        per_block=per_block,
        max_rel_err=max_rel,
        tolerance=tolerance,
        passed=max_rel <= tolerance,
        samples_per_block=samples_per_block,
        step=step,
    )
