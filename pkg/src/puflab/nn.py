"""Multi-head feed-forward network written directly on numpy.

Shared dense hidden layers feed one output layer per head. A binary head ends
in a sigmoid and is trained with binary cross-entropy; a categorical head ends
in a softmax with categorical cross-entropy. The training objective is the
weighted sum ``sum_i lambda_i * L_i`` of the per-head mean losses.

Weight matrices are stored ``(fan_out, fan_in)`` and all arithmetic is 64-bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .seeding import derive_seed

CLIP = 1e-12
ACTIVATIONS = ("relu", "tanh")


class NetError(ValueError):
    pass


@dataclass(frozen=True)
class HeadSpec:
    name: str
    kind: str = "binary"
    classes: int = 1
    loss_weight: float = 1.0

    def __post_init__(self):
        if self.kind not in ("binary", "categorical"):
            raise NetError(f"head kind must be 'binary' or 'categorical', got {self.kind!r}")
        if self.kind == "binary" and self.classes != 1:
            raise NetError("a binary head has exactly one output")
        if self.kind == "categorical" and self.classes < 2:
            raise NetError(f"categorical head {self.name!r} needs >= 2 classes")
        if not np.isfinite(self.loss_weight) or self.loss_weight < 0:
            raise NetError(f"loss weight of head {self.name!r} must be finite and >= 0")

    @property
    def width(self) -> int:
        """Output dimensionality, counting a binary head as two classes."""
        return 2 if self.kind == "binary" else self.classes


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    hidden: tuple[int, ...]
    heads: tuple[HeadSpec, ...]
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "heads", tuple(self.heads))
        if self.input_dim < 1:
            raise NetError("input_dim must be >= 1")
        if not self.hidden or min(self.hidden) < 1:
            raise NetError(f"hidden layer widths must be a nonempty list of positive ints, got {self.hidden}")
        if self.activation not in ACTIVATIONS:
            raise NetError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if not self.heads:
            raise NetError("a network needs at least one head")
        names = [h.name for h in self.heads]
        if len(set(names)) != len(names):
            raise NetError(f"duplicate head names {names}")
        if sum(h.kind == "binary" for h in self.heads) > 1:
            raise NetError("at most one binary (response) head is allowed")

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": list(self.hidden), "activation": self.activation,
                "heads": [asdict(h) for h in self.heads]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(d["input_dim"], tuple(d["hidden"]), tuple(HeadSpec(**h) for h in d["heads"]), d["activation"])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 1000
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "max_epochs", "patience", "epsilon"):
            if not getattr(self, name) > 0:
                raise NetError(f"{name} must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise NetError("Adam betas must lie in (0, 1)")
        if self.patience > self.max_epochs:
            raise NetError("patience cannot exceed max_epochs")


class MultiHeadNet:
    def __init__(self, cfg: NetConfig, shared, heads):
        self.cfg = cfg
        self.shared = [list(p) for p in shared]
        self.heads = [list(p) for p in heads]
        self.adam_m = [np.zeros_like(p) for p in self.params()]
        self.adam_v = [np.zeros_like(p) for p in self.params()]
        self.step = 0

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in declaration order: shared (W, b) pairs, then heads."""
        return [p for layer in self.shared + self.heads for p in layer]

    def set_params(self, values):
        values = list(values)
        flat = self.shared + self.heads
        if len(values) != 2 * len(flat):
            raise NetError("parameter count mismatch")
        for k, layer in enumerate(flat):
            for j in range(2):
                if values[2 * k + j].shape != layer[j].shape:
                    raise NetError("parameter shape mismatch")
                layer[j] = np.array(values[2 * k + j], dtype=np.float64)

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    @property
    def head_index(self) -> dict[str, int]:
        return {h.name: i for i, h in enumerate(self.cfg.heads)}


def _uniform(rng, fan_out, fan_in, gain):
    limit = np.sqrt(gain / fan_in)
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init(cfg: NetConfig, seed: int = 0) -> MultiHeadNet:
    """Fan-in scaled uniform weights, zero biases.

    Each layer draws from its own derived stream, so adding or removing a head
    leaves the shared layers and the other heads untouched.
    """
    gain = 6.0 if cfg.activation == "relu" else 3.0
    widths = (cfg.input_dim,) + cfg.hidden
    shared = []
    for i in range(len(cfg.hidden)):
        rng = np.random.default_rng(derive_seed(seed, "shared", i))
        shared.append((_uniform(rng, widths[i + 1], widths[i], gain), np.zeros(widths[i + 1])))
    heads = []
    for h in cfg.heads:
        rng = np.random.default_rng(derive_seed(seed, "head", h.name))
        heads.append((_uniform(rng, h.classes, widths[-1], 3.0), np.zeros(h.classes)))
    return MultiHeadNet(cfg, shared, heads)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(net: MultiHeadNet, x):
    acts = [x]
    pre = []
    relu = net.cfg.activation == "relu"
    a = x
    for w, b in net.shared:
        z = a @ w.T
        z += b
        pre.append(z)
        a = np.maximum(z, 0.0) if relu else np.tanh(z)
        acts.append(a)
    outs = {}
    for spec, (w, b) in zip(net.cfg.heads, net.heads):
        z = a @ w.T + b
        outs[spec.name] = _sigmoid(z[:, 0]) if spec.kind == "binary" else _softmax(z)
    return outs, pre, acts


def forward(net: MultiHeadNet, inputs) -> dict[str, np.ndarray]:
    """Per-head outputs: sigmoid probabilities ``(N,)`` or softmax rows ``(N, k)``."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.cfg.input_dim:
        raise NetError(f"input shape {x.shape} does not match input_dim {net.cfg.input_dim}")
    return _forward(net, x)[0]


def _class_indices(target, spec: HeadSpec) -> np.ndarray:
    t = np.asarray(target)
    if t.ndim == 2:
        if t.shape[1] != spec.classes:
            raise NetError(f"head {spec.name!r} expects {spec.classes} classes, got {t.shape[1]}")
        return t.argmax(axis=1)
    return t.astype(np.int64)


def head_loss(out, target, spec: HeadSpec) -> float:
    if spec.kind == "binary":
        y = np.asarray(target, dtype=np.float64).reshape(-1)
        p = np.clip(out, CLIP, 1.0 - CLIP)
        return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    idx = _class_indices(target, spec)
    p = np.clip(out[np.arange(out.shape[0]), idx], CLIP, 1.0 - CLIP)
    return float(-np.mean(np.log(p)))


def loss(outputs: Mapping, targets: Mapping, heads, weights: Mapping[str, float] | None = None):
    """Return ``(total, {head: loss})`` with ``total = sum(lambda_i * L_i)``."""
    per = {}
    total = 0.0
    for spec in heads:
        if spec.name not in targets:
            raise NetError(f"missing target for head {spec.name!r}")
        if len(outputs[spec.name]) != len(targets[spec.name]):
            raise NetError(f"row count mismatch on head {spec.name!r}")
        per[spec.name] = head_loss(outputs[spec.name], targets[spec.name], spec)
        lam = spec.loss_weight if weights is None else weights.get(spec.name, spec.loss_weight)
        total += lam * per[spec.name]
    return total, per


def backward(net: MultiHeadNet, inputs, targets: Mapping, weights: Mapping[str, float] | None = None):
    """Analytic gradients of the weighted total loss.

    Returns ``(total_loss, per_head_losses, grads)`` with ``grads`` aligned to
    :meth:`MultiHeadNet.params`. The shared-layer gradient is the
    lambda-weighted sum of the per-head back-propagated signals.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.cfg.input_dim:
        raise NetError(f"input shape {x.shape} does not match input_dim {net.cfg.input_dim}")
    outs, pre, acts = _forward(net, x)
    total, per = loss(outs, targets, net.cfg.heads, weights)
    if not np.isfinite(total):
        raise FloatingPointError("non-finite loss")
    n = x.shape[0]
    top = acts[-1]
    head_grads = []
    delta = None
    for spec, (w, _) in zip(net.cfg.heads, net.heads):
        lam = spec.loss_weight if weights is None else weights.get(spec.name, spec.loss_weight)
        p = outs[spec.name]
        if spec.kind == "binary":
            dz = (p - np.asarray(targets[spec.name], dtype=np.float64).reshape(-1))[:, None]
        else:
            dz = p.copy()
            dz[np.arange(n), _class_indices(targets[spec.name], spec)] -= 1.0
        dz *= lam / n
        head_grads.append((dz.T @ top, dz.sum(axis=0)))
        contrib = dz @ w
        delta = contrib if delta is None else delta + contrib
    shared_grads = []
    relu = net.cfg.activation == "relu"
    for i in range(len(net.shared) - 1, -1, -1):
        if relu:
            delta = delta * (pre[i] > 0)
        else:
            delta = delta * (1.0 - acts[i + 1] ** 2)
        w = net.shared[i][0]
        shared_grads.append((delta.T @ acts[i], delta.sum(axis=0)))
        if i:
            delta = delta @ w
    grads = [g for pair in reversed(shared_grads) for g in pair] + [g for pair in head_grads for g in pair]
    return total, per, grads


def adam_step(net: MultiHeadNet, grads, t: int, cfg: TrainConfig) -> MultiHeadNet:
    """One bias-corrected Adam update, in place."""
    if t < 1:
        raise NetError("Adam step index starts at 1")
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    params = net.params()
    updates = []
    for p, g, m, v in zip(params, grads, net.adam_m, net.adam_v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        upd = cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
        updates.append(upd)
    for p, upd in zip(params, updates):
        if not np.all(np.isfinite(upd)):
            raise FloatingPointError("non-finite Adam update")
        p -= upd
    net.step = t
    return net


def predict_response(net: MultiHeadNet, inputs, decode: Callable | None = None) -> np.ndarray:
    """1 where the response probability is at least 0.5.

    ``decode`` maps the output dict to response bits for nets without a binary
    head (a single fused-label head).
    """
    outs = forward(net, inputs)
    if decode is not None:
        return np.asarray(decode(outs), dtype=np.uint8)
    binary = [h.name for h in net.cfg.heads if h.kind == "binary"]
    if not binary:
        raise NetError("net has no binary response head; pass a decoder")
    return (outs[binary[0]] >= 0.5).astype(np.uint8)


def _predict_chunked(net, x, chunk=20000):
    outs = {}
    for s in range(0, x.shape[0], chunk):
        part = forward(net, x[s: s + chunk])
        for k, v in part.items():
            outs.setdefault(k, []).append(v)
    return {k: np.concatenate(v) for k, v in outs.items()}


def evaluate_heads(net: MultiHeadNet, data, decode: Callable | None = None) -> dict:
    """Per-head losses and accuracies plus the response accuracy on ``data``."""
    x = np.asarray(data.inputs, dtype=np.float64)
    outs = _predict_chunked(net, x)
    total, per = loss(outs, data.targets, net.cfg.heads)
    result = {"loss": total}
    for spec in net.cfg.heads:
        out = outs[spec.name]
        tgt = data.targets[spec.name]
        if spec.kind == "binary":
            acc = np.mean((out >= 0.5) == (np.asarray(tgt).reshape(-1) > 0.5))
        else:
            acc = np.mean(out.argmax(axis=1) == _class_indices(tgt, spec))
        result[f"loss_{spec.name}"] = per[spec.name]
        result[f"acc_{spec.name}"] = float(acc)
    if decode is not None:
        pred = np.asarray(decode(outs))
    else:
        binary = [h.name for h in net.cfg.heads if h.kind == "binary"]
        pred = (outs[binary[0]] >= 0.5).astype(np.uint8)
    result["response_acc"] = float(np.mean(pred == np.asarray(data.response)))
    return result


@dataclass
class History:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_response_acc: float = 0.0
    seconds: float = 0.0

    def __len__(self):
        return len(self.epochs)


def _check_split(data, role):
    tag = getattr(data, "split", None)
    if tag == "test":
        raise NetError(f"refusing to use the test split as {role} data")
    if len(data.inputs) == 0:
        raise NetError(f"empty {role} set")


def train(net: MultiHeadNet, train_data, val_data, cfg: TrainConfig,
          decode: Callable | None = None, log: Callable[[str], None] | None = None):
    """Mini-batch Adam with per-epoch validation and early stopping.

    ``train_data`` / ``val_data`` expose ``inputs``, ``targets`` (head name to
    labels), ``response`` and ``split``. Stops after ``patience`` epochs
    without a better validation response accuracy and restores the best
    parameters.
    """
    _check_split(train_data, "training")
    _check_split(val_data, "validation")
    x = np.asarray(train_data.inputs, dtype=np.float64)
    targets = {h.name: np.asarray(train_data.targets[h.name]) for h in net.cfg.heads}
    for h in net.cfg.heads:
        if h.kind == "categorical" and targets[h.name].ndim == 2:
            targets[h.name] = targets[h.name].argmax(axis=1)
    rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    hist = History()
    best = net.copy_params()
    best_acc = -1.0
    stale = 0
    t = net.step
    start = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(x.shape[0])
        running = 0.0
        for s in range(0, x.shape[0], cfg.batch_size):
            idx = order[s: s + cfg.batch_size]
            total, _, grads = backward(net, x[idx], {k: v[idx] for k, v in targets.items()})
            t += 1
            adam_step(net, grads, t, cfg)
            running += total * len(idx)
        metrics = evaluate_heads(net, val_data, decode)
        metrics["epoch"] = epoch
        metrics["train_loss"] = running / x.shape[0]
        hist.epochs.append(metrics)
        if log is not None:
            log(f"epoch {epoch:3d} train_loss {metrics['train_loss']:.4f} "
                f"val_response_acc {metrics['response_acc']:.4f}")
        if metrics["response_acc"] > best_acc:
            best_acc = metrics["response_acc"]
            best = net.copy_params()
            hist.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    net.set_params(best)
    hist.best_response_acc = best_acc
    hist.seconds = time.perf_counter() - start
    return net, hist


def gradient_check(net: MultiHeadNet, inputs, targets: Mapping, step: float = 1e-4) -> list[float]:
    """Relative error between analytic and central-difference gradients, one value per tensor.

    The error of a tensor is ``|g_a - g_n| / max(|g_a| + |g_n|, 1e-12)`` in the
    Euclidean norm. Every parameter entry is perturbed, so keep the net tiny.
    """
    _, _, grads = backward(net, inputs, targets)
    errors = []
    for p, g in zip(net.params(), grads):
        numeric = np.zeros_like(p)
        flat, out = p.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            hi = loss(forward(net, inputs), targets, net.cfg.heads)[0]
            flat[i] = keep - step
            lo = loss(forward(net, inputs), targets, net.cfg.heads)[0]
            flat[i] = keep
            out[i] = (hi - lo) / (2 * step)
        diff = np.linalg.norm(g - numeric)
        errors.append(float(diff / max(np.linalg.norm(g) + np.linalg.norm(numeric), 1e-12)))
    return errors


_MAGIC = b"PUFNET1\n"


def save(net: MultiHeadNet, path) -> None:
    """Header line (JSON config echo and shapes) then little-endian float64 arrays."""
    params = net.params()
    header = {"config": net.cfg.to_dict(), "shapes": [list(p.shape) for p in params], "step": net.step}
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for p in params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load(path) -> MultiHeadNet:
    raw = Path(path).read_bytes()
    if not raw.startswith(_MAGIC):
        raise NetError(f"{path}: not a network checkpoint")
    end = raw.index(b"\n", len(_MAGIC))
    header = json.loads(raw[len(_MAGIC):end])
    cfg = NetConfig.from_dict(header["config"])
    net = init(cfg, 0)
    offset = end + 1
    values = []
    for shape in header["shapes"]:
        count = int(np.prod(shape))
        chunk = raw[offset: offset + 8 * count]
        if len(chunk) != 8 * count:
            raise NetError(f"{path}: truncated checkpoint")
        values.append(np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64))
        offset += 8 * count
    if offset != len(raw):
        raise NetError(f"{path}: trailing bytes after parameters")
    net.set_params(values)
    net.step = header.get("step", 0)
    return net


def param_count(net: MultiHeadNet) -> int:
    return int(sum(p.size for p in net.params()))


__all__ = [
    "HeadSpec", "NetConfig", "TrainConfig", "MultiHeadNet", "History", "NetError",
    "init", "forward", "loss", "backward", "adam_step", "train", "predict_response",
    "evaluate_heads", "gradient_check", "save", "load", "param_count",
]
