"""Experiment orchestration: configs, single attacks, repeated runs, sweeps, reports."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import nn
from .dataset import Dataset, class_count, encode, generate, response_from_crossed, split
from .delay import InvalidInput, NoiseSpec
from .sci import SciConfig
from .seeding import derive_seed, rng_for
from .variants import bias_instance, instantiate, make_spec, parse_loops


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AttackShape:
    power: bool
    reliability: bool
    crossed: bool

    def heads(self) -> tuple[str, ...]:
        if self.crossed:
            return ("crossed",)
        return ("response",) + (("power",) if self.power else ()) + (("reliability",) if self.reliability else ())


ATTACKS = {
    "crp_only": AttackShape(False, False, False),
    "two_head_a": AttackShape(True, False, False),
    "two_head_b": AttackShape(False, True, False),
    "three_head": AttackShape(True, True, False),
    "multi_class_a": AttackShape(True, False, True),
    "multi_class_b": AttackShape(False, True, True),
    "multi_class_c": AttackShape(True, True, True),
}

# Loss-weight presets per attack kind, response weight first; first entry is the default.
WEIGHT_PRESETS = {
    "two_head_a": {"10/2": (10.0, 2.0), "2/3": (2.0, 3.0)},
    "two_head_b": {"1/0.8": (1.0, 0.8), "1/1.8": (1.0, 1.8), "10/2": (10.0, 2.0)},
    "three_head": {"10/2/2": (10.0, 2.0, 2.0), "10/2/1": (10.0, 2.0, 1.0), "2/2/2": (2.0, 2.0, 2.0)},
}
FF_DEFAULT = {"two_head_b": "10/2"}
SWEEP_KINDS = ("minsize", "lossweight", "granularity", "uniformity")


def mlmsa_dim(L: int, cn: int, power: bool, reliability: bool) -> int:
    return 2 + (L + 1) * power + cn * reliability


def slmsa_dim(L: int, cn: int, power: bool, reliability: bool) -> int:
    return class_count(L, cn, power, reliability)


def _parse_tuple(text: str, cast) -> tuple:
    text = text.strip().strip("()[]")
    return tuple(cast(t) for t in text.replace(" ", "").split(",") if t)


def _parse_pairs(text: str) -> tuple:
    out = []
    for tok in text.replace(" ", "").split(","):
        if not tok:
            continue
        m, sep, cn = tok.partition(":")
        if not sep:
            raise ConfigError(f"granularity entries are m:cn pairs, got {tok!r}")
        out.append((int(m), int(cn)))
    return tuple(out)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(cast):
    def parse(text):
        return None if text.strip().lower() in ("", "none", "auto") else cast(text)
    return parse


_PARSERS = {
    "int": int, "float": float, "str": str.strip, "bool": _parse_bool,
    "opt_int": _optional(int), "opt_bool": _optional(_parse_bool),
    "ints": lambda t: _parse_tuple(t, int), "floats": lambda t: _parse_tuple(t, float),
    "pairs": _parse_pairs,
}


def _kind(f) -> str:
    return f.metadata.get("parse", "str")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; each field is one ``key = value`` config line."""

    puf: str = field(default="xor", metadata={"parse": "str"})
    n: int = field(default=64, metadata={"parse": "int"})
    l: int = field(default=4, metadata={"parse": "int"})
    x: int = field(default=1, metadata={"parse": "int"})
    y: int = field(default=1, metadata={"parse": "int"})
    z: int = field(default=0, metadata={"parse": "int"})
    pos: int | None = field(default=None, metadata={"parse": "opt_int"})
    loops: str = field(default="", metadata={"parse": "str"})
    mu: float = field(default=0.0, metadata={"parse": "float"})
    sigma: float = field(default=1.0, metadata={"parse": "float"})
    mu_noise: float = field(default=0.0, metadata={"parse": "float"})
    sigma_noise: float = field(default=0.05, metadata={"parse": "float"})
    m: int = field(default=10, metadata={"parse": "int"})
    cn: int = field(default=11, metadata={"parse": "int"})
    use_power: bool | None = field(default=None, metadata={"parse": "opt_bool"})
    use_reliability: bool | None = field(default=None, metadata={"parse": "opt_bool"})
    noisy_power: bool = field(default=False, metadata={"parse": "bool"})
    vote_m: int = field(default=11, metadata={"parse": "int"})
    attack: str = field(default="three_head", metadata={"parse": "str"})
    weights: str = field(default="", metadata={"parse": "str"})
    size: int = field(default=150_000, metadata={"parse": "int"})
    hidden: tuple = field(default=(), metadata={"parse": "ints"})
    activation: str = field(default="relu", metadata={"parse": "str"})
    learning_rate: float = field(default=1e-3, metadata={"parse": "float"})
    batch_size: int = field(default=1000, metadata={"parse": "int"})
    max_epochs: int = field(default=80, metadata={"parse": "int"})
    patience: int = field(default=20, metadata={"parse": "int"})
    seed: int = field(default=0, metadata={"parse": "int"})
    repeats: int = field(default=1, metadata={"parse": "int"})
    threshold: float = field(default=0.90, metadata={"parse": "float"})
    min_success: float = field(default=0.6, metadata={"parse": "float"})
    size_grid: tuple = field(default=(), metadata={"parse": "ints"})
    weight_head: str = field(default="reliability", metadata={"parse": "str"})
    weight_grid: tuple = field(default=(), metadata={"parse": "floats"})
    granularity: tuple = field(default=(), metadata={"parse": "pairs"})
    uniformity: tuple = field(default=(), metadata={"parse": "floats"})
    uniformity_tol: float = field(default=0.01, metadata={"parse": "float"})

    # ---- derived views -----------------------------------------------------

    @property
    def shape(self) -> AttackShape:
        return ATTACKS[self.attack]

    def puf_spec(self):
        params = {"xor": {"l": self.l}, "oax": {"x": self.x, "y": self.y, "z": self.z},
                  "ipuf": {"x": self.x, "y": self.y, "pos": self.pos},
                  "ff": {"loops": parse_loops(self.loops)},
                  "xorff": {"l": self.l, "loops": parse_loops(self.loops)}}
        if self.puf not in params:
            raise ConfigError(f"unknown puf kind {self.puf!r}; choose from {sorted(params)}")
        return make_spec(self.puf, self.n, **params[self.puf])

    def sci(self) -> SciConfig:
        shape = self.shape
        return SciConfig(
            use_power=shape.power if self.use_power is None else self.use_power,
            use_reliability=shape.reliability if self.use_reliability is None else self.use_reliability,
            m=self.m, cn=self.cn, noisy_power=self.noisy_power)

    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.mu_noise, self.sigma_noise)

    def hidden_layers(self) -> tuple[int, ...]:
        return tuple(self.hidden) if self.hidden else (2 * self.n,) * 3

    def preset_label(self) -> str:
        if self.attack not in WEIGHT_PRESETS:
            return "single"
        presets = WEIGHT_PRESETS[self.attack]
        if not self.weights:
            if self.puf in ("ff", "xorff") and self.attack in FF_DEFAULT:
                return FF_DEFAULT[self.attack]
            return next(iter(presets))
        try:
            values = _parse_tuple(self.weights.replace("/", ","), float)
        except ValueError:
            raise ConfigError(f"loss weights must be slash-separated numbers, got {self.weights!r}") from None
        return next((name for name, v in presets.items() if v == values), "custom")

    def loss_weights(self) -> tuple[float, ...]:
        heads = self.shape.heads()
        if self.attack not in WEIGHT_PRESETS:
            values = _parse_tuple(self.weights.replace("/", ","), float) if self.weights else (1.0,)
        else:
            label = self.preset_label()
            if label == "custom":
                values = _parse_tuple(self.weights.replace("/", ","), float)
            else:
                values = WEIGHT_PRESETS[self.attack][label]
        if len(values) != len(heads):
            raise ConfigError(f"attack {self.attack} has heads {heads} but {len(values)} loss weights were given")
        return tuple(values)

    def head_specs(self, L: int) -> tuple[nn.HeadSpec, ...]:
        shape = self.shape
        weights = self.loss_weights()
        if shape.crossed:
            return (nn.HeadSpec("crossed", "categorical", slmsa_dim(L, self.cn, shape.power, shape.reliability),
                                weights[0]),)
        classes = {"response": 1, "power": L + 1, "reliability": self.cn}
        return tuple(nn.HeadSpec(h, "binary" if h == "response" else "categorical", classes[h], w)
                     for h, w in zip(shape.heads(), weights))

    def validate(self) -> "ExperimentConfig":
        if self.attack not in ATTACKS:
            raise ConfigError(f"unknown attack kind {self.attack!r}; choose from {sorted(ATTACKS)}")
        try:
            self.puf_spec().validate()
            sci = self.sci()
            self.noise()
        except (InvalidInput, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None
        shape = self.shape
        if shape.power and not sci.use_power:
            raise ConfigError(f"attack {self.attack} needs the power side channel but use_power is off")
        if shape.reliability and not sci.use_reliability:
            raise ConfigError(f"attack {self.attack} needs the reliability side channel but use_reliability is off")
        if shape.reliability and self.sigma_noise == 0:
            raise ConfigError(f"attack {self.attack} uses reliability labels, which need sigma_noise > 0")
        self.loss_weights()
        if any(w < 0 for w in self.loss_weights()):
            raise ConfigError("loss weights must be >= 0")
        if self.size < 6:
            raise ConfigError(f"size must be >= 6 for a 4:1:1 split, got {self.size}")
        for name in ("repeats", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.patience > self.max_epochs:
            raise ConfigError("patience cannot exceed max_epochs")
        if not 0 < self.threshold <= 1 or not 0 < self.min_success <= 1:
            raise ConfigError("threshold and min_success must lie in (0, 1]")
        if self.activation not in nn.ACTIVATIONS:
            raise ConfigError(f"activation must be one of {nn.ACTIVATIONS}")
        if any(h < 1 for h in self.hidden_layers()):
            raise ConfigError("hidden widths must be positive")
        return self

    # ---- text form ---------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if _kind(f) == "pairs":
                text = ",".join(f"{m}:{cn}" for m, cn in value)
            elif isinstance(value, tuple):
                text = ",".join(repr(v) for v in value)
            elif value is None:
                text = "auto"
            else:
                text = str(value)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    def echo(self) -> str:
        """One-line form of the non-default fields, for report rows."""
        default = ExperimentConfig()
        parts = [line for line, ref in zip(self.to_text().splitlines(), default.to_text().splitlines())
                 if line != ref]
        return "; ".join(parts)

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            if key not in known:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{source}:{lineno}: key {key!r} given twice")
            try:
                values[key] = _PARSERS[_kind(known[key])](value)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
        return cls(**values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text, str(path))


def full_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    """128 stages, larger budgets and four hidden layers; expect hours of CPU time."""
    return replace(cfg, n=128, size=max(cfg.size, 300_000), hidden=(256, 256, 256, 256),
                   max_epochs=max(cfg.max_epochs, 200), patience=max(cfg.patience, 20),
                   pos=None if cfg.pos is None else 64)


# ---- reports ---------------------------------------------------------------

@dataclass
class AttackReport:
    attack: str
    puf: str
    n: int
    L: int
    size: int
    seed: int
    preset: str
    weights: str
    test_acc: float
    correct: int
    n_test: int
    val_response: float
    val_power: float
    val_reliability: float
    val_crossed: float
    epochs: int
    best_epoch: int
    seconds: float
    output_dim: int
    mlmsa_dim: int
    slmsa_dim: int
    success: bool
    threshold: float
    m: int
    cn: int
    sigma_noise: float
    uniformity: float
    sweep: str
    sweep_value: str
    config: str
    history: list = field(default_factory=list, repr=False, compare=False, metadata={"serialize": False})

    def __eq__(self, other):
        if not isinstance(other, AttackReport):
            return NotImplemented
        for name in report_fields():
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
                continue
            if a != b:
                return False
        return True


def report_fields() -> list[str]:
    return [f.name for f in fields(AttackReport) if f.metadata.get("serialize", True)]


def run_attack(cfg: ExperimentConfig, dataset: Dataset | None = None,
               log: Callable[[str], None] | None = None, instance=None) -> AttackReport:
    """Generate (or take) a dataset, split 4:1:1, encode per attack kind, train, test."""
    cfg.validate()
    shape = cfg.shape
    if dataset is None:
        puf = instance if instance is not None else cfg.puf_spec()
        dataset = generate(puf, cfg.size, cfg.sci(), cfg.noise(), seed=derive_seed(cfg.seed, "data"),
                           mu=cfg.mu, sigma=cfg.sigma, vote_m=cfg.vote_m)
    elif dataset.meta.n != cfg.n:
        raise ConfigError(f"dataset has n={dataset.meta.n} but the config says n={cfg.n}")
    L = dataset.meta.L
    cn = cfg.cn
    if shape.reliability and dataset.meta.sci.m != cfg.m:
        raise ConfigError(f"dataset was measured with m={dataset.meta.sci.m} but the config says m={cfg.m}")
    if shape.reliability and dataset.rel_count is not None and dataset.meta.sci.cn != cn:
        from .sci import bin_count
        dataset = replace(dataset, rel_class=bin_count(dataset.rel_count, cfg.m, cn))
    train_ds, val_ds, test_ds = split(dataset)
    try:
        if shape.crossed:
            parts = [encode(d, crossed=(shape.power, shape.reliability), cn=cn) for d in (train_ds, val_ds, test_ds)]
        else:
            parts = [encode(d, heads=shape.heads(), cn=cn) for d in (train_ds, val_ds, test_ds)]
    except InvalidInput as exc:
        raise ConfigError(f"dataset lacks labels for attack {cfg.attack}: {exc}") from None
    train_b, val_b, test_b = parts
    decode = None
    if shape.crossed:
        def decode(outs):
            return response_from_crossed(outs["crossed"].argmax(axis=1), L, cn, shape.power, shape.reliability)
    net_cfg = nn.NetConfig(cfg.n + 1, cfg.hidden_layers(), cfg.head_specs(L), cfg.activation)
    net = nn.init(net_cfg, derive_seed(cfg.seed, "net"))
    tcfg = nn.TrainConfig(learning_rate=cfg.learning_rate, batch_size=cfg.batch_size, max_epochs=cfg.max_epochs,
                          patience=cfg.patience, seed=derive_seed(cfg.seed, "train"))
    net, hist = nn.train(net, train_b, val_b, tcfg, decode=decode, log=log)
    pred = nn.predict_response(net, test_b.inputs, decode)
    correct = int(np.sum(pred == test_b.response))
    acc = correct / len(test_b.response)
    val = nn.evaluate_heads(net, val_b, decode)
    nan = float("nan")
    power_on, rel_on = shape.power, shape.reliability
    return AttackReport(
        attack=cfg.attack, puf=cfg.puf, n=cfg.n, L=L, size=len(dataset), seed=cfg.seed,
        preset=cfg.preset_label(), weights="/".join(f"{w:g}" for w in cfg.loss_weights()),
        test_acc=acc, correct=correct, n_test=len(test_b.response),
        val_response=val["response_acc"], val_power=val.get("acc_power", nan),
        val_reliability=val.get("acc_reliability", nan), val_crossed=val.get("acc_crossed", nan),
        epochs=len(hist), best_epoch=hist.best_epoch, seconds=hist.seconds,
        output_dim=(slmsa_dim if shape.crossed else mlmsa_dim)(L, cn, power_on, rel_on),
        mlmsa_dim=mlmsa_dim(L, cn, power_on, rel_on), slmsa_dim=slmsa_dim(L, cn, power_on, rel_on),
        success=acc >= cfg.threshold, threshold=cfg.threshold, m=cfg.m, cn=cn, sigma_noise=cfg.sigma_noise,
        uniformity=float(np.mean(dataset.response)), sweep="", sweep_value="", config=cfg.echo(),
        history=hist.epochs,
    )


@dataclass
class RepeatSummary:
    reports: list
    best: float
    median: float
    success_rate: float
    successes: int

    @property
    def runs(self) -> int:
        return len(self.reports)


def run_seed(cfg: ExperimentConfig, k: int) -> int:
    return derive_seed(cfg.seed, "run", k)


def summarize(reports: Sequence[AttackReport]) -> RepeatSummary:
    if not reports:
        raise InvalidInput("nothing to summarize")
    accs = [r.test_acc for r in reports]
    wins = sum(r.success for r in reports)
    return RepeatSummary(list(reports), max(accs), statistics.median(accs), wins / len(reports), wins)


def run_repeated(cfg: ExperimentConfig, R: int | None = None, log=None) -> RepeatSummary:
    """``R`` independent runs (fresh PUF instance, data and init per run)."""
    R = cfg.repeats if R is None else R
    if R < 1:
        raise ConfigError(f"repeat count must be >= 1, got {R}")
    return summarize([run_attack(replace(cfg, seed=run_seed(cfg, k)), log=log) for k in range(R)])


def _tag(report: AttackReport, key: str, value) -> AttackReport:
    report.sweep, report.sweep_value = key, str(value)
    return report


@dataclass
class MinSizeResult:
    rows: list
    minimal: int | None
    fraction: float
    reports: list


def sweep_min_training_size(cfg: ExperimentConfig, grid: Sequence[int] | None = None, R: int | None = None,
                            fraction: float | None = None, log=None) -> MinSizeResult:
    """``rows`` holds ``(size, best, median, success_rate)``; ``minimal`` is None when no size qualifies."""
    grid = list(cfg.size_grid if grid is None else grid)
    fraction = cfg.min_success if fraction is None else fraction
    if not grid:
        raise ConfigError("size grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError(f"size grid must be strictly ascending, got {grid}")
    rows, reports, minimal = [], [], None
    for size in grid:
        summary = run_repeated(replace(cfg, size=size), R, log)
        reports.extend(_tag(r, "size", size) for r in summary.reports)
        rows.append((size, summary.best, summary.median, summary.success_rate))
        if minimal is None and summary.success_rate >= fraction:
            minimal = size
    return MinSizeResult(rows, minimal, fraction, reports)


def _with_weight(cfg: ExperimentConfig, head: str, value: float) -> ExperimentConfig:
    heads = cfg.shape.heads()
    if head not in heads:
        raise ConfigError(f"attack {cfg.attack} has no head {head!r}; heads are {heads}")
    weights = list(cfg.loss_weights())
    weights[heads.index(head)] = value
    return replace(cfg, weights="/".join(repr(w) for w in weights))


def sweep_loss_weights(cfg: ExperimentConfig, grid: Sequence[float] | None = None, head: str | None = None,
                       log=None) -> list[AttackReport]:
    grid = list(cfg.weight_grid if grid is None else grid)
    head = cfg.weight_head if head is None else head
    if not grid:
        raise ConfigError("loss-weight grid is empty")
    if any(not w > 0 for w in grid):
        raise ConfigError("loss weights in a sweep must be positive")
    variants = [_with_weight(cfg, head, w) for w in grid]
    return [_tag(run_attack(v, log=log), f"lambda_{head}", w) for v, w in zip(variants, grid)]


def sweep_reliability_granularity(cfg: ExperimentConfig, pairs: Sequence[tuple[int, int]] | None = None,
                                  log=None) -> list[AttackReport]:
    pairs = list(cfg.granularity if pairs is None else pairs)
    if not pairs:
        raise ConfigError("granularity list is empty")
    for m, cn in pairs:
        if m < 1 or not 2 <= cn <= m + 1:
            raise ConfigError(f"invalid granularity m={m}, cn={cn}: need 2 <= cn <= m + 1")
    if not cfg.shape.reliability:
        raise ConfigError(f"attack {cfg.attack} does not use reliability labels")
    return [_tag(run_attack(replace(cfg, m=m, cn=cn), log=log), "m:cn", f"{m}:{cn}") for m, cn in pairs]


def sweep_uniformity(cfg: ExperimentConfig, targets: Sequence[float] | None = None, log=None) -> list[AttackReport]:
    """Bias the last stage weight of every chain to each target uniformity, then attack."""
    targets = list(cfg.uniformity if targets is None else targets)
    if not targets:
        raise ConfigError("uniformity target list is empty")
    for t in targets:
        if not 0.5 <= t <= 0.9:
            raise ConfigError(f"uniformity target {t} outside [0.5, 0.9]")
    cfg.validate()
    out = []
    for t in targets:
        base = instantiate(cfg.puf_spec(), cfg.mu, cfg.sigma, derive_seed(derive_seed(cfg.seed, "data"), "puf"))
        inst = bias_instance(base, t, rng_for(cfg.seed, "bias", repr(t)), tol=cfg.uniformity_tol)
        out.append(_tag(run_attack(cfg, log=log, instance=inst), "uniformity_target", t))
    return out


# ---- serialization ---------------------------------------------------------

_TEXT_MAGIC = "# puflab report"


def _fmt(name: str, value) -> str:
    if name == "test_acc":
        return f"{value:.4f}"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def _parse_field(name: str, text: str):
    kind = {f.name: f.type for f in fields(AttackReport)}[name]
    if kind == "bool":
        return _parse_bool(text)
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def _finish(values: dict) -> AttackReport:
    rep = AttackReport(**values)
    if rep.n_test:
        # The printed accuracy is rounded; the counts carry the exact value.
        rep.test_acc = rep.correct / rep.n_test
    return rep


def format_reports(reports: Sequence[AttackReport], fmt: str = "csv") -> str:
    names = report_fields()
    buf = io.StringIO()
    if fmt == "csv":
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(names)
        for r in reports:
            out.writerow([_fmt(k, getattr(r, k)) for k in names])
    elif fmt == "text":
        buf.write(f"{_TEXT_MAGIC} count={len(reports)}\n")
        for i, r in enumerate(reports, start=1):
            buf.write(f"\n[report {i}]\n")
            for k in names:
                buf.write(f"{k} = {_fmt(k, getattr(r, k))}\n")
    else:
        raise ConfigError(f"report format must be csv or text, got {fmt!r}")
    return buf.getvalue()


def emit_report(reports: Sequence[AttackReport], path, fmt: str = "csv") -> None:
    Path(path).write_text(format_reports(reports, fmt))


def parse_reports(text: str) -> list[AttackReport]:
    names = report_fields()
    if text.startswith(_TEXT_MAGIC):
        reports, current = [], None
        for raw in text.splitlines()[1:]:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("[report"):
                if current is not None:
                    reports.append(_finish(current))
                current = {}
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if current is None or not sep or key not in names:
                raise InvalidInput(f"malformed report line {raw!r}")
            current[key] = _parse_field(key, value)
        if current is not None:
            reports.append(_finish(current))
        return reports
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != names:
        raise InvalidInput("report CSV header does not match the expected columns")
    return [_finish({k: _parse_field(k, v) for k, v in zip(names, row)}) for row in rows[1:]]


def read_report(path) -> list[AttackReport]:
    return parse_reports(Path(path).read_text())


def sweep_table(reports: Sequence[AttackReport]) -> list[tuple[str, float, float, float]]:
    """Group by swept value (input order kept): ``(value, best, median, success_rate)``."""
    groups: dict[str, list] = {}
    for r in reports:
        groups.setdefault(r.sweep_value, []).append(r)
    out = []
    for value, group in groups.items():
        s = summarize(group)
        out.append((value, s.best, s.median, s.success_rate))
    return out


def run_sweep(kind: str, cfg: ExperimentConfig, log=None) -> list[AttackReport]:
    if kind == "minsize":
        return sweep_min_training_size(cfg, log=log).reports
    if kind == "lossweight":
        return sweep_loss_weights(cfg, log=log)
    if kind == "granularity":
        return sweep_reliability_granularity(cfg, log=log)
    if kind == "uniformity":
        return sweep_uniformity(cfg, log=log)
    raise ConfigError(f"sweep kind must be one of {SWEEP_KINDS}, got {kind!r}")
