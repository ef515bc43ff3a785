"""Feed-forward classifiers with a flat, index-addressable parameter vector.

The same ``Model`` plays both roles in an unlearning run: the trained
original and the model being unlearned. All state is float64 and every
construction path is seeded, so identical seeds give bit-identical models.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, NumericError, ShapeError, StateError
from .tensor import Tensor

PROB_FLOOR = 1e-12  # probabilities are clamped to [PROB_FLOOR, 1] before any log

CHECKPOINT_VERSION = 1

ACTIVATIONS = {"relu": T.relu, "tanh": T.tanh}


class Linear:
    """Dense layer ``y = x @ W.T + b`` with an optional low-rank adapter."""

    def __init__(self, weight: Tensor, bias: Tensor):
        self.weight = weight  # (out, in)
        self.bias = bias  # (out,)
        self.adapter = None  # set by lora.attach_adapter

    @property
    def in_dim(self) -> int:
        return self.weight.data.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.data.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, _transposed(self.weight))
        if self.adapter is not None:
            ad = self.adapter
            low = T.matmul(T.matmul(x, _transposed(ad.down)), _transposed(ad.up))
            y = y + ad.scale * low
        return y + self.bias


def _transposed(t: Tensor) -> Tensor:
    out = Tensor(t.data.T, _prev=(t,))

    def backward(g):
        T.accumulate(t, g.T)

    out._backward = backward
    return out


class Model:
    """MLP classifier: linear layers with an elementwise nonlinearity between."""

    def __init__(self, input_dim: int, hidden: list[int], num_classes: int,
                 activation: str = "relu", seed: int = 0, _init: bool = True):
        if num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}; choose from {sorted(ACTIVATIONS)}")
        self.input_dim = int(input_dim)
        self.hidden = [int(h) for h in hidden]
        self.num_classes = int(num_classes)
        self.activation = activation
        self.seed = int(seed)
        self.layers: list[Linear] = []
        if _init:
            rng = np.random.default_rng(seed)
            dims = [self.input_dim] + self.hidden + [self.num_classes]
            for fan_in, fan_out in zip(dims[:-1], dims[1:]):
                bound = 1.0 / np.sqrt(fan_in)
                w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
                b = rng.uniform(-bound, bound, size=fan_out)
                self.layers.append(Linear(Tensor(w, requires_grad=True),
                                          Tensor(b, requires_grad=True)))

    # ---------------------------------------------------------------- forward

    def forward(self, x) -> Tensor:
        """Run the network on a batch (rows are samples), returning logits."""
        return self.forward_hidden(x)[0]

    def forward_hidden(self, x) -> tuple[Tensor, Tensor]:
        """Return (logits, penultimate activations) for a batch."""
        h = self._check_input(x)
        act = ACTIVATIONS[self.activation]
        for layer in self.layers[:-1]:
            h = act(layer(h))
        return self.layers[-1](h), h

    def _check_input(self, x) -> Tensor:
        t = T.as_tensor(x)
        if t.data.ndim != 2:
            raise ShapeError(f"expected a 2-D batch, got shape {t.shape}")
        if t.data.shape[1] != self.input_dim:
            raise ShapeError(
                f"batch has width {t.data.shape[1]}, model expects {self.input_dim}")
        return t

    def logits(self, x) -> np.ndarray:
        return self.forward(x).data

    def probabilities(self, x) -> np.ndarray:
        return softmax(self.logits(x))

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    # ------------------------------------------------------------- parameters

    def has_adapter(self) -> bool:
        return any(layer.adapter is not None for layer in self.layers)

    def trainable_tensors(self) -> list[Tensor]:
        """Tensors the optimizer may update. Adapters freeze the base weights."""
        if self.has_adapter():
            out = []
            for layer in self.layers:
                if layer.adapter is not None:
                    out.extend([layer.adapter.down, layer.adapter.up])
            return out
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def param_vector(self) -> np.ndarray:
        """Flat copy of all trainable parameters, in layer order."""
        return np.concatenate([t.data.ravel() for t in self.trainable_tensors()])

    def set_param_vector(self, values) -> None:
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size != self.num_trainable():
            raise ShapeError(
                f"vector has {values.size} entries, model has {self.num_trainable()} trainable")
        offset = 0
        for t in self.trainable_tensors():
            n = t.data.size
            t.data = values[offset:offset + n].reshape(t.data.shape).copy()
            offset += n

    def num_trainable(self) -> int:
        return sum(t.data.size for t in self.trainable_tensors())

    def num_params(self) -> int:
        """Every parameter participating in a forward pass (base + adapters)."""
        n = sum(layer.weight.data.size + layer.bias.data.size for layer in self.layers)
        for layer in self.layers:
            if layer.adapter is not None:
                n += layer.adapter.down.data.size + layer.adapter.up.data.size
        return n

    def clone(self) -> "Model":
        out = Model(self.input_dim, self.hidden, self.num_classes,
                    self.activation, self.seed, _init=False)
        for layer in self.layers:
            copied = Linear(Tensor(layer.weight.data.copy(), requires_grad=True),
                            Tensor(layer.bias.data.copy(), requires_grad=True))
            if layer.adapter is not None:
                copied.adapter = layer.adapter.clone()
            out.layers.append(copied)
        return out

    # ------------------------------------------------------------- checkpoint

    def to_dict(self) -> dict:
        params = {}
        for i, layer in enumerate(self.layers):
            params[f"layers.{i}.weight"] = layer.weight.data.ravel().tolist()
            params[f"layers.{i}.bias"] = layer.bias.data.ravel().tolist()
        adapters = []
        for i, layer in enumerate(self.layers):
            if layer.adapter is not None:
                ad = layer.adapter
                adapters.append({
                    "layer": i, "rank": ad.rank, "scale": ad.scale,
                    "down": ad.down.data.ravel().tolist(),
                    "up": ad.up.data.ravel().tolist(),
                })
        return {
            "format_version": CHECKPOINT_VERSION,
            "input_dim": self.input_dim,
            "hidden": self.hidden,
            "num_classes": self.num_classes,
            "activation": self.activation,
            "seed": self.seed,
            "params": params,
            "adapters": adapters,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "Model":
        version = record.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {version!r}")
        model = cls(record["input_dim"], record["hidden"], record["num_classes"],
                    record["activation"], record["seed"])
        for i, layer in enumerate(model.layers):
            w = np.asarray(record["params"][f"layers.{i}.weight"], dtype=np.float64)
            b = np.asarray(record["params"][f"layers.{i}.bias"], dtype=np.float64)
            layer.weight.data = w.reshape(layer.weight.data.shape)
            layer.bias.data = b.reshape(layer.bias.data.shape)
        if record.get("adapters"):
            from .lora import LowRankAdapter

            for entry in record["adapters"]:
                layer = model.layers[entry["layer"]]
                down = np.asarray(entry["down"], dtype=np.float64).reshape(entry["rank"], layer.in_dim)
                up = np.asarray(entry["up"], dtype=np.float64).reshape(layer.out_dim, entry["rank"])
                layer.adapter = LowRankAdapter(
                    layer_index=entry["layer"], rank=entry["rank"], scale=entry["scale"],
                    down=Tensor(down, requires_grad=True), up=Tensor(up, requires_grad=True))
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Model":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def param_digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for layer in self.layers:
            h.update(layer.weight.data.tobytes())
            h.update(layer.bias.data.tobytes())
            if layer.adapter is not None:
                h.update(layer.adapter.down.data.tobytes())
                h.update(layer.adapter.up.data.tobytes())
        return h.hexdigest()


def parse_backbone(spec: str) -> tuple[list[int], str]:
    """Parse a backbone string like ``mlp:32,32`` or ``mlp:16:tanh``."""
    parts = spec.split(":")
    if parts[0] != "mlp":
        raise ConfigError(f"unknown backbone family {parts[0]!r} (only 'mlp')")
    hidden = [32]
    activation = "relu"
    if len(parts) >= 2 and parts[1]:
        try:
            hidden = [int(p) for p in parts[1].split(",") if p]
        except ValueError as exc:
            raise ConfigError(f"bad hidden sizes in backbone {spec!r}") from exc
    if len(parts) >= 3:
        activation = parts[2]
    if len(parts) > 3 or any(h < 1 for h in hidden):
        raise ConfigError(f"bad backbone spec {spec!r}")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r} in backbone {spec!r}")
    return hidden, activation


def build_model(input_dim: int, num_classes: int, backbone: str = "mlp:32,32",
                seed: int = 0) -> Model:
    hidden, activation = parse_backbone(backbone)
    return Model(input_dim, hidden, num_classes, activation, seed)


# ------------------------------------------------------------------ gradients

def backward(model: Model, loss: Tensor) -> np.ndarray:
    """Backprop from a scalar loss; return the flat gradient over trainables.

    The loss must come from a forward pass of this model: if no trainable
    tensor appears in the loss graph there is nothing to differentiate and a
    StateError is raised. Trainables untouched by the loss (e.g. the output
    layer under a representation-only loss) contribute exact zeros.
    """
    if not isinstance(loss, Tensor):
        raise StateError("loss is not a Tensor; run forward and a loss op first")
    for layer in model.layers:  # frozen tensors receive gradients too; clear all
        layer.weight.grad = layer.bias.grad = None
        if layer.adapter is not None:
            layer.adapter.down.grad = layer.adapter.up.grad = None
    trainable = model.trainable_tensors()
    loss.backward()
    if all(t.grad is None for t in trainable):
        raise StateError("loss does not depend on this model's parameters; "
                         "call forward on the same model first")
    parts = [(t.grad if t.grad is not None else np.zeros_like(t.data)).ravel()
             for t in trainable]
    return np.concatenate(parts)


# --------------------------------------------------------------------- losses

def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; every row sums to 1 within 1e-6."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _clamped_log(p: np.ndarray) -> np.ndarray:
    return np.log(np.clip(p, PROB_FLOOR, 1.0))


def _finish(rows: np.ndarray, prev, row_backward, reduction: str) -> Tensor:
    if reduction == "none":
        out = Tensor(rows, _prev=prev)
        out._backward = row_backward
        return out
    if reduction == "mean":
        n = rows.shape[0]
        out = Tensor(rows.mean(), _prev=prev)
        out._backward = lambda g: row_backward(np.full(n, float(g) / n))
        return out
    raise ConfigError(f"unknown reduction {reduction!r}")


def cross_entropy(logits: Tensor, labels, reduction: str = "mean") -> Tensor:
    """Task cross-entropy ``-log p[label]``.

    The reported value clamps probabilities to [1e-12, 1] before the log so a
    zero-probability target yields a large finite loss, never inf. The
    gradient is the exact softmax form ``p - onehot`` throughout, so training
    signal survives even at targets the clamp has saturated.
    """
    logits = T.as_tensor(logits)
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise ShapeError("cross_entropy expects 2-D logits")
    n, c = logits.data.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise ConfigError(f"labels must lie in [0, {c})")
    p = softmax(logits.data)
    rows = -_clamped_log(p[np.arange(n), labels])

    def row_backward(g_rows):
        gz = p.copy()
        gz[np.arange(n), labels] -= 1.0
        gz *= g_rows[:, None]
        T.accumulate(logits, gz)

    return _finish(rows, (logits,), row_backward, reduction)


def kl_loss(student_logits: Tensor, teacher_logits, temperature: float = 1.0,
            reduction: str = "mean") -> Tensor:
    """KL divergence of the student's output distribution from the teacher's.

    Computed row-wise as ``sum_j p_j * (log clip(p_j) - log clip(q_j))`` with
    ``p = softmax(student/T)`` and ``q = softmax(teacher/T)``. The teacher side
    is treated as a constant; gradients flow through the student only. Zero
    exactly when the two distributions agree.
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    student_logits = T.as_tensor(student_logits)
    t_data = teacher_logits.data if isinstance(teacher_logits, Tensor) else np.asarray(
        teacher_logits, dtype=np.float64)
    if student_logits.data.shape != t_data.shape:
        raise ShapeError(
            f"student {student_logits.data.shape} vs teacher {t_data.shape} shapes differ")
    if not (np.isfinite(student_logits.data).all() and np.isfinite(t_data).all()):
        raise NumericError("non-finite logits passed to kl_loss")
    ps = softmax(student_logits.data / temperature)
    pt = softmax(t_data / temperature)
    r = _clamped_log(ps) - _clamped_log(pt)
    rows = (ps * r).sum(axis=1)

    def row_backward(g_rows):
        # dKL/du_k = ps_k * (r_k - KL_row), the exact softmax-side gradient.
        gz = ps * (r - rows[:, None]) * (g_rows[:, None] / temperature)
        T.accumulate(student_logits, gz)

    return _finish(rows, (student_logits,), row_backward, reduction)


def kl_divergence(p, q) -> float:
    """Plain KL between two probability vectors with the same clamping rule."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError("probability vectors must share a shape")
    for name, vec in (("p", p), ("q", q)):
        if abs(vec.sum() - 1.0) > 1e-6:
            raise ConfigError(f"{name} does not sum to 1 (got {vec.sum()})")
    return float((p * (_clamped_log(p) - _clamped_log(q))).sum())


def representation_distance(student_h: Tensor, teacher_h, reduction: str = "mean") -> Tensor:
    """Mean squared distance between penultimate-layer activations."""
    student_h = T.as_tensor(student_h)
    t_data = teacher_h.data if isinstance(teacher_h, Tensor) else np.asarray(
        teacher_h, dtype=np.float64)
    if student_h.data.shape != t_data.shape:
        raise ShapeError("activation shapes differ")
    diff = student_h.data - t_data
    rows = (diff * diff).sum(axis=1)

    def row_backward(g_rows):
        T.accumulate(student_h, 2.0 * diff * g_rows[:, None])

    return _finish(rows, (student_h,), row_backward, reduction)


LOSS_KINDS = ("task_cross_entropy", "kl_divergence", "representation_distance")


def loss_fn(kind: str):
    """Look up a loss by its registered kind name."""
    table = {"task_cross_entropy": cross_entropy, "kl_divergence": kl_loss,
             "representation_distance": representation_distance}
    if kind not in table:
        raise ConfigError(f"unknown loss kind {kind!r}; choose from {LOSS_KINDS}")
    return table[kind]


# ----------------------------------------------------------------------- FLOs

def count_flos(model: Model, num_samples: float, num_steps: float) -> float:
    """Floating-point operations under the fixed 6*P per sample-step convention.

    P is the full parameter count touched by a forward pass (2*P forward,
    4*P backward). Any fixed convention preserves cross-method comparisons.
    """
    return 6.0 * model.num_params() * float(num_samples) * float(num_steps)
