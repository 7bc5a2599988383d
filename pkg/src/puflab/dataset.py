"""Training data: generation, encoding, splitting, feature crossing, file I/O.

A :class:`Dataset` is columnar: one challenge matrix plus one array per label.
Labels that were not collected are ``None``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .delay import InvalidInput, NoiseSpec, parity_vector, random_challenges
from .sci import SciConfig, SciRecord, bin_count, measure_reliability, vote
from .seeding import derive_seed, rng_for
from .variants import (
    FeedForward,
    PreparedBatch,
    PufInstance,
    PufSpec,
    XorFeedForward,
    instantiate,
    spec_from_dict,
    spec_to_dict,
)

CHUNK = 50_000
LABELS = ("response", "power", "rel_count", "rel_class")


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetMeta:
    puf: dict
    L: int
    sci: SciConfig
    seed: int
    noise: NoiseSpec = NoiseSpec()
    label_mode: str = "clean"
    vote_m: int = 11
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.puf["n"])

    @property
    def kind(self) -> str:
        return str(self.puf["kind"])


@dataclass
class Dataset:
    challenges: np.ndarray
    response: np.ndarray
    meta: DatasetMeta
    power: np.ndarray | None = None
    rel_count: np.ndarray | None = None
    rel_class: np.ndarray | None = None
    split: str | None = None

    def __post_init__(self):
        size = len(self.challenges)
        for name in LABELS:
            col = getattr(self, name)
            if col is not None and len(col) != size:
                raise InvalidInput(f"label column {name} has {len(col)} rows, expected {size}")
        if self.challenges.ndim != 2 or self.challenges.shape[1] != self.meta.n:
            raise InvalidInput(f"challenge matrix shape {self.challenges.shape} does not match n={self.meta.n}")

    def __len__(self):
        return len(self.challenges)

    def __getitem__(self, idx) -> "Dataset":
        cols = {name: (None if getattr(self, name) is None else getattr(self, name)[idx]) for name in LABELS}
        return replace(self, challenges=self.challenges[idx], **cols)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.meta != other.meta or self.split != other.split:
            return False
        if not np.array_equal(self.challenges, other.challenges):
            return False
        for name in LABELS:
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        return True

    def records(self) -> Iterator[SciRecord]:
        for i in range(len(self)):
            yield SciRecord(
                challenge=self.challenges[i],
                response=int(self.response[i]),
                power=None if self.power is None else int(self.power[i]),
                rel_count=None if self.rel_count is None else int(self.rel_count[i]),
                rel_class=None if self.rel_class is None else int(self.rel_class[i]),
            )


def _is_ff(spec: PufSpec) -> bool:
    return isinstance(spec, (FeedForward, XorFeedForward))


def split_sizes(size: int) -> tuple[int, int, int]:
    if size < 6:
        raise InvalidInput(f"need at least 6 records to split 4:1:1, got {size}")
    train = 4 * size // 6
    val = size // 6
    return train, val, size - train - val


def generate(puf: PufSpec | PufInstance, size: int, sci: SciConfig, noise: NoiseSpec | None = None,
             seed: int = 0, mu: float = 0.0, sigma: float = 1.0, vote_m: int = 11) -> Dataset:
    """Simulate ``size`` records with uniformly random challenges.

    Responses are noise-free, except for feed-forward PUFs with noise: there
    the records that :func:`split` assigns to training and validation carry a
    majority vote over ``vote_m`` noisy measurements, and the test records stay
    noise-free. Every label comes from its own derived random stream, so
    enabling a side channel never changes the challenges or responses.
    """
    if size < 1:
        raise InvalidInput(f"dataset size must be >= 1, got {size}")
    noise = noise if noise is not None else NoiseSpec()
    inst = puf if isinstance(puf, PufInstance) else instantiate(puf, mu, sigma, derive_seed(seed, "puf"))
    spec = inst.spec
    if sci.use_reliability and noise.is_null:
        # Degenerate but legal: every reliability count is 0 or m.
        pass
    challenges = random_challenges(spec.n, size, rng_for(seed, "challenges"))
    response = np.empty(size, dtype=np.uint8)
    power = np.empty(size, dtype=np.int64) if sci.use_power else None
    rel = np.empty(size, dtype=np.int64) if sci.use_reliability else None
    power_rng = rng_for(seed, "power-noise")
    rel_rng = rng_for(seed, "reliability")
    vote_rng = rng_for(seed, "vote")
    voted = _is_ff(spec) and not noise.is_null
    if voted and (vote_m < 1 or vote_m % 2 == 0):
        raise InvalidInput(f"majority vote needs an odd measurement count, got {vote_m}")
    labelled = sum(split_sizes(size)[:2]) if voted and size >= 6 else (size if voted else 0)
    for s in range(0, size, CHUNK):
        e = min(size, s + CHUNK)
        prep = PreparedBatch(inst, challenges[s:e])
        resp, bits = prep.sample()
        response[s:e] = resp
        if power is not None:
            if sci.noisy_power:
                bits = prep.sample(noise, power_rng)[1]
            power[s:e] = bits.sum(axis=1)
        if rel is not None:
            count = np.zeros(e - s, dtype=np.int64)
            for _ in range(sci.m):
                count += prep.sample(noise, rel_rng)[0]
            rel[s:e] = count
        if voted and s < labelled:
            hi = min(e, labelled)
            count = measure_reliability(inst, challenges[s:hi], vote_m, noise, vote_rng)
            response[s:hi] = vote(count, vote_m)
    meta = DatasetMeta(
        puf=spec_to_dict(spec), L=inst.chain_count, sci=sci, seed=seed, noise=noise,
        label_mode="vote" if voted else "clean", vote_m=vote_m,
        extra={"mu": inst.mu, "sigma": inst.sigma},
    )
    return Dataset(challenges, response, meta, power=power, rel_count=rel,
                   rel_class=None if rel is None else bin_count(rel, sci.m, sci.cn))


def encode_challenge(c) -> np.ndarray:
    return parity_vector(c)


def split(ds: Dataset) -> tuple[Dataset, Dataset, Dataset]:
    """Contiguous 4:1:1 partition into train / validation / test."""
    a, b, _ = split_sizes(len(ds))
    parts = (ds[:a], ds[a: a + b], ds[a + b:])
    for part, tag in zip(parts, ("train", "validation", "test")):
        part.split = tag
    return parts


def class_count(L: int, cn: int, use_power: bool, use_rel: bool) -> int:
    return 2 * ((L + 1) if use_power else 1) * (cn if use_rel else 1)


def _cross_flags(rec: SciRecord, use_power, use_rel):
    if use_power is None:
        use_power = rec.power is not None
    if use_rel is None:
        use_rel = rec.rel_class is not None
    if not (use_power or use_rel):
        raise InvalidInput("feature crossing needs at least one side-channel label")
    return use_power, use_rel


def cross_labels(response, power, rel_class, L: int, cn: int) -> np.ndarray:
    """Vectorised crossing; pass ``None`` for an unused label. Response is outermost."""
    index = np.asarray(response, dtype=np.int64)
    if power is not None:
        p = np.asarray(power, dtype=np.int64)
        if np.any((p < 0) | (p > L)):
            raise InvalidInput(f"power label outside [0, {L}]")
        index = index * (L + 1) + p
    if rel_class is not None:
        r = np.asarray(rel_class, dtype=np.int64)
        if np.any((r < 0) | (r >= cn)):
            raise InvalidInput(f"reliability class outside [0, {cn})")
        index = index * cn + r
    return index


def feature_cross(rec: SciRecord, L: int, cn: int, use_power: bool | None = None,
                  use_rel: bool | None = None) -> int:
    """Fuse response and side-channel labels into one class index."""
    use_power, use_rel = _cross_flags(rec, use_power, use_rel)
    if use_power and rec.power is None:
        raise InvalidInput("record has no power label")
    if use_rel and rec.rel_class is None:
        raise InvalidInput("record has no reliability class")
    return int(cross_labels(rec.response, rec.power if use_power else None,
                            rec.rel_class if use_rel else None, L, cn))


def response_from_crossed(index, L: int, cn: int, use_power: bool = True, use_rel: bool = True):
    total = class_count(L, cn, use_power, use_rel)
    idx = np.asarray(index, dtype=np.int64)
    if np.any((idx < 0) | (idx >= total)):
        raise InvalidInput(f"crossed class index outside [0, {total})")
    out = idx // (total // 2)
    return int(out) if out.ndim == 0 else out.astype(np.uint8)


@dataclass
class EncodedBatch:
    """Network-ready view: parity features plus one label array per head.

    Categorical targets are kept as class indices; :meth:`one_hot` expands one
    head on demand.
    """

    inputs: np.ndarray
    targets: dict
    response: np.ndarray
    classes: dict
    split: str | None = None

    def __post_init__(self):
        rows = len(self.inputs)
        if len(self.response) != rows or any(len(t) != rows for t in self.targets.values()):
            raise InvalidInput("row counts differ between inputs and targets")

    def one_hot(self, head: str) -> np.ndarray:
        from .sci import one_hot
        return one_hot(self.targets[head], self.classes[head])


def encode(ds: Dataset, heads: Sequence[str] = ("response",), crossed: tuple[bool, bool] | None = None,
           cn: int | None = None) -> EncodedBatch:
    """Encode for a multi-head net (``heads``) or a single fused-label head (``crossed``)."""
    x = encode_challenge(ds.challenges)
    L = ds.meta.L
    cn = ds.meta.sci.cn if cn is None else cn
    targets, classes = {}, {}
    if crossed is not None:
        use_power, use_rel = crossed
        if use_power and ds.power is None:
            raise InvalidInput("dataset has no power labels")
        if use_rel and ds.rel_class is None:
            raise InvalidInput("dataset has no reliability labels")
        targets["crossed"] = cross_labels(ds.response, ds.power if use_power else None,
                                          ds.rel_class if use_rel else None, L, cn)
        classes["crossed"] = class_count(L, cn, use_power, use_rel)
    else:
        for head in heads:
            if head == "response":
                targets[head], classes[head] = ds.response.astype(np.float64), 1
            elif head == "power":
                if ds.power is None:
                    raise InvalidInput("dataset has no power labels")
                targets[head], classes[head] = ds.power, L + 1
            elif head == "reliability":
                if ds.rel_class is None:
                    raise InvalidInput("dataset has no reliability labels")
                targets[head], classes[head] = ds.rel_class, cn
            else:
                raise InvalidInput(f"unknown head {head!r}")
    return EncodedBatch(x, targets, ds.response, classes, ds.split)


# ---- text format -----------------------------------------------------------

def _hex_width(n: int) -> int:
    return (n + 3) // 4


def _challenge_hex(rows: np.ndarray) -> list[str]:
    n = rows.shape[1]
    width = _hex_width(n)
    out = []
    for row in rows:
        value = int("".join("1" if b else "0" for b in row), 2)
        out.append(format(value, f"0{width}x"))
    return out


def _hex_challenge(text: str, n: int) -> np.ndarray:
    value = int(text, 16)
    if value >> n:
        raise ValueError(f"challenge {text} exceeds {n} bits")
    bits = format(value, f"0{n}b")
    return np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")


def _meta_json(meta: DatasetMeta) -> dict:
    return {
        "puf": meta.puf, "L": meta.L, "seed": meta.seed,
        "sci": {"use_power": meta.sci.use_power, "use_reliability": meta.sci.use_reliability,
                "m": meta.sci.m, "cn": meta.sci.cn, "noisy_power": meta.sci.noisy_power},
        "noise": {"mu_noise": meta.noise.mu_noise, "sigma_noise": meta.noise.sigma_noise},
        "label_mode": meta.label_mode, "vote_m": meta.vote_m, "extra": meta.extra,
    }


def _meta_from_json(d: dict) -> DatasetMeta:
    return DatasetMeta(
        puf=d["puf"], L=int(d["L"]), seed=int(d["seed"]), sci=SciConfig(**d["sci"]),
        noise=NoiseSpec(**d["noise"]), label_mode=d["label_mode"], vote_m=int(d["vote_m"]),
        extra=d.get("extra", {}),
    )


def _compact(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def write_csv(ds: Dataset, path) -> None:
    """Header ``# puf=.. n=.. L=.. m=.. cn=.. seed=..`` plus extra tokens, then one row per record."""
    m = ds.meta
    spec_params = {k: v for k, v in m.puf.items() if k not in ("kind", "n")}
    tokens = [
        f"puf={m.kind}", f"n={m.n}", f"L={m.L}", f"m={m.sci.m}", f"cn={m.sci.cn}", f"seed={m.seed}",
        f"size={len(ds)}", f"params={_compact(spec_params)}",
        f"sci={_compact(_meta_json(m)['sci'])}", f"noise={_compact(_meta_json(m)['noise'])}",
        f"label_mode={m.label_mode}", f"vote_m={m.vote_m}", f"extra={_compact(m.extra)}",
        f"split={ds.split or '-'}",
    ]
    cols = [getattr(ds, name) for name in LABELS]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("# " + " ".join(tokens) + "\n")
        for i, hx in enumerate(_challenge_hex(ds.challenges)):
            fields = [hx] + ["" if col is None else str(int(col[i])) for col in cols]
            fh.write(",".join(fields) + "\n")


def _parse_header(line: str, path) -> dict:
    if not line.startswith("# "):
        raise DatasetFormatError(f"{path}:1: missing '# key=value' header")
    out = {}
    for tok in line[2:].split():
        key, sep, value = tok.partition("=")
        if not sep:
            raise DatasetFormatError(f"{path}:1: malformed header token {tok!r}")
        out[key] = value
    for key in ("puf", "n", "L", "m", "cn", "seed"):
        if key not in out:
            raise DatasetFormatError(f"{path}:1: header is missing {key}=")
    return out


def read_csv(path, expect_n: int | None = None) -> Dataset:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(f"{path}:1: empty file")
    try:
        h = _parse_header(lines[0], path)
        n, L, m, cn, seed = (int(h[k]) for k in ("n", "L", "m", "cn", "seed"))
        params = json.loads(h.get("params", "{}"))
        sci = SciConfig(**json.loads(h["sci"])) if "sci" in h else SciConfig(m=m, cn=cn)
        noise = NoiseSpec(**json.loads(h["noise"])) if "noise" in h else NoiseSpec()
        extra = json.loads(h.get("extra", "{}"))
    except (ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, DatasetFormatError):
            raise
        raise DatasetFormatError(f"{path}:1: bad header value: {exc}") from None
    if (sci.m, sci.cn) != (m, cn):
        raise DatasetFormatError(f"{path}:1: header m/cn disagree with sci block")
    if expect_n is not None and n != expect_n:
        raise DatasetFormatError(f"{path}:1: header n={n} does not match expected n={expect_n}")
    rows = lines[1:]
    if "size" in h and int(h["size"]) != len(rows):
        raise DatasetFormatError(f"{path}:{len(lines) + 1}: truncated, header promises {h['size']} records, found {len(rows)}")
    width = _hex_width(n)
    challenges = np.empty((len(rows), n), dtype=np.uint8)
    cols = {name: [] for name in LABELS}
    for i, row in enumerate(rows):
        lineno = i + 2
        fields = row.split(",")
        if len(fields) != 5:
            raise DatasetFormatError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
        if len(fields[0]) != width:
            raise DatasetFormatError(f"{path}:{lineno}: challenge must be {width} hex digits")
        try:
            challenges[i] = _hex_challenge(fields[0], n)
            for name, value in zip(LABELS, fields[1:]):
                cols[name].append(None if value == "" else int(value))
        except ValueError as exc:
            raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
    arrays = {}
    for name, values in cols.items():
        present = [v is not None for v in values]
        if values and all(present):
            dtype = np.uint8 if name == "response" else np.int64
            arrays[name] = np.array(values, dtype=dtype)
        elif any(present):
            raise DatasetFormatError(f"{path}: column {name} is only partly filled")
        else:
            arrays[name] = None
    if arrays["response"] is None:
        if rows:
            raise DatasetFormatError(f"{path}: response column is empty")
        arrays["response"] = np.zeros(0, dtype=np.uint8)
    meta = DatasetMeta(puf={"kind": h["puf"], "n": n, **params}, L=L, sci=sci, seed=seed, noise=noise,
                       label_mode=h.get("label_mode", "clean"), vote_m=int(h.get("vote_m", 11)), extra=extra)
    split_tag = h.get("split", "-")
    return Dataset(challenges, arrays.pop("response"), meta, split=None if split_tag == "-" else split_tag, **arrays)


# ---- packed binary format --------------------------------------------------

_BIN_MAGIC = b"PUFD1"
_ABSENT = 0xFF


def write_binary(ds: Dataset, path) -> None:
    """``PUFD1``, u32 header length, JSON header, u64 count, u32 n, packed bits, label bytes."""
    header = _meta_json(ds.meta)
    header["split"] = ds.split
    blob = _compact(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<QI", len(ds), ds.meta.n))
        fh.write(np.packbits(ds.challenges, axis=1, bitorder="big").tobytes())
        for name in LABELS:
            col = getattr(ds, name)
            if col is None:
                fh.write(bytes([_ABSENT]) * len(ds))
                continue
            if len(col) and (col.min() < 0 or col.max() >= _ABSENT):
                raise InvalidInput(f"label {name} does not fit one byte")
            fh.write(np.asarray(col, dtype=np.uint8).tobytes())


def read_binary(path, expect_n: int | None = None) -> Dataset:
    raw = Path(path).read_bytes()
    if not raw.startswith(_BIN_MAGIC):
        raise DatasetFormatError(f"{path}: bad magic, not a PUFD1 file")
    pos = len(_BIN_MAGIC)
    try:
        (hlen,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        header = json.loads(raw[pos: pos + hlen])
        pos += hlen
        size, n = struct.unpack_from("<QI", raw, pos)
        pos += 12
    except (struct.error, ValueError) as exc:
        raise DatasetFormatError(f"{path}: corrupt header: {exc}") from None
    meta = _meta_from_json(header)
    if n != meta.n or (expect_n is not None and n != expect_n):
        raise DatasetFormatError(f"{path}: stage count mismatch ({n})")
    row_bytes = (n + 7) // 8
    need = pos + size * row_bytes + 4 * size
    if len(raw) != need:
        raise DatasetFormatError(f"{path}: expected {need} bytes, found {len(raw)}")
    packed = np.frombuffer(raw, dtype=np.uint8, count=size * row_bytes, offset=pos).reshape(size, row_bytes)
    challenges = np.unpackbits(packed, axis=1, count=n, bitorder="big")
    pos += size * row_bytes
    cols = {}
    for name in LABELS:
        col = np.frombuffer(raw, dtype=np.uint8, count=size, offset=pos)
        pos += size
        if size and np.all(col == _ABSENT):
            cols[name] = None
        elif np.any(col == _ABSENT):
            raise DatasetFormatError(f"{path}: column {name} is only partly filled")
        else:
            cols[name] = col.astype(np.uint8 if name == "response" else np.int64)
    if cols["response"] is None:
        raise DatasetFormatError(f"{path}: response column is empty")
    return Dataset(challenges, cols.pop("response"), meta, split=header.get("split"), **cols)


def write(ds: Dataset, path) -> None:
    if str(path).endswith((".bin", ".pufd")):
        write_binary(ds, path)
    else:
        write_csv(ds, path)


def read(path, expect_n: int | None = None) -> Dataset:
    with open(path, "rb") as fh:
        head = fh.read(len(_BIN_MAGIC))
    if head == _BIN_MAGIC:
        return read_binary(path, expect_n)
    return read_csv(path, expect_n)
