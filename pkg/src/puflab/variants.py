"""Composite arbiter PUFs: XOR, OAX, interpose and feed-forward variants.

Everything is evaluated in batches through :func:`evaluate`, which returns the
final responses together with the per-chain bits that the power side channel
counts. The single-challenge helpers are thin wrappers around it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import ClassVar, Sequence

import numpy as np

from .delay import (
    InvalidInput,
    NoiseSpec,
    as_challenges,
    parity_vector,
    random_challenges,
    sample_apuf_weights,
)
from .seeding import rng_for


@dataclass(frozen=True)
class FfLoop:
    """Intermediate arbiter after stage ``tap`` whose bit overwrites ``dests``."""

    tap: int
    dests: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dests", tuple(int(d) for d in self.dests))
        if not self.dests:
            raise InvalidInput(f"loop at stage {self.tap} has no destinations")
        for d in self.dests:
            if d <= self.tap:
                raise InvalidInput(f"loop destination {d} must come after tap stage {self.tap}")

    def __str__(self):
        return f"{self.tap}>{','.join(map(str, self.dests))}"


def parse_loops(text: str) -> tuple[FfLoop, ...]:
    """Parse ``"15>80,85;63>90"`` into loops."""
    loops = []
    for part in text.replace(" ", "").split(";"):
        if not part:
            continue
        tap, sep, dests = part.partition(">")
        if not sep or not dests:
            raise InvalidInput(f"malformed loop {part!r}, expected 'tap>dest[,dest...]'")
        try:
            loops.append(FfLoop(int(tap), tuple(int(d) for d in dests.split(","))))
        except ValueError as exc:
            raise InvalidInput(f"malformed loop {part!r}: {exc}") from None
    return tuple(loops)


def format_loops(loops: Sequence[FfLoop]) -> str:
    return ";".join(str(lp) for lp in loops)


def _check_loops(n: int, loops: Sequence[FfLoop]):
    seen = set()
    for lp in loops:
        if not 1 <= lp.tap <= n - 1:
            raise InvalidInput(f"tap stage {lp.tap} outside 1..{n - 1}")
        for d in lp.dests:
            if d >= n:
                raise InvalidInput(f"loop destination {d} outside the {n}-bit challenge")
            if d in seen:
                raise InvalidInput(f"challenge position {d} is the destination of more than one loop")
            seen.add(d)


@dataclass(frozen=True)
class PufSpec:
    n: int
    kind: ClassVar[str] = ""

    def validate(self):
        if self.n < 1:
            raise InvalidInput(f"stage count must be >= 1, got {self.n}")

    @property
    def chain_lengths(self) -> tuple[int, ...]:
        raise NotImplementedError

    @property
    def chain_count(self) -> int:
        return len(self.chain_lengths)

    def params(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Xor(PufSpec):
    l: int = 1
    kind: ClassVar[str] = "xor"

    def validate(self):
        super().validate()
        if self.l < 1:
            raise InvalidInput(f"XOR width l must be >= 1, got {self.l}")

    @property
    def chain_lengths(self):
        return (self.n + 1,) * self.l

    def params(self):
        return {"l": self.l}

    def __str__(self):
        return f"{self.n}-stage {self.l}-XOR-APUF"


@dataclass(frozen=True)
class Oax(PufSpec):
    x: int = 0
    y: int = 0
    z: int = 1
    kind: ClassVar[str] = "oax"

    def validate(self):
        super().validate()
        if min(self.x, self.y, self.z) < 0 or self.x + self.y + self.z < 1:
            raise InvalidInput(f"OAX block sizes must be >= 0 and sum to >= 1, got {(self.x, self.y, self.z)}")

    @property
    def chain_lengths(self):
        return (self.n + 1,) * (self.x + self.y + self.z)

    def params(self):
        return {"x": self.x, "y": self.y, "z": self.z}

    def __str__(self):
        return f"{self.n}-stage ({self.x},{self.y},{self.z})-OAX-APUF"


@dataclass(frozen=True)
class Interpose(PufSpec):
    x: int = 1
    y: int = 1
    pos: int | None = None
    kind: ClassVar[str] = "ipuf"

    def __post_init__(self):
        if self.pos is None:
            object.__setattr__(self, "pos", self.n // 2)

    def validate(self):
        super().validate()
        if self.x < 1 or self.y < 1:
            raise InvalidInput(f"iPUF layers need x, y >= 1, got {(self.x, self.y)}")
        if not 0 <= self.pos <= self.n:
            raise InvalidInput(f"interpose position {self.pos} outside 0..{self.n}")

    @property
    def chain_lengths(self):
        return (self.n + 1,) * self.x + (self.n + 2,) * self.y

    def params(self):
        return {"x": self.x, "y": self.y, "pos": self.pos}

    def __str__(self):
        return f"{self.n}-stage ({self.x},{self.y})-iPUF"


@dataclass(frozen=True)
class FeedForward(PufSpec):
    loops: tuple[FfLoop, ...] = ()
    kind: ClassVar[str] = "ff"

    def validate(self):
        super().validate()
        _check_loops(self.n, self.loops)

    @property
    def chain_lengths(self):
        return (self.n + 1,)

    def params(self):
        return {"loops": format_loops(self.loops)}

    def __str__(self):
        return f"{self.n}-stage FF-APUF [{format_loops(self.loops)}]"


@dataclass(frozen=True)
class XorFeedForward(PufSpec):
    l: int = 1
    loops: tuple[FfLoop, ...] = ()
    kind: ClassVar[str] = "xorff"

    def validate(self):
        super().validate()
        if self.l < 1:
            raise InvalidInput(f"XOR width l must be >= 1, got {self.l}")
        _check_loops(self.n, self.loops)

    @property
    def chain_lengths(self):
        return (self.n + 1,) * self.l

    def params(self):
        return {"l": self.l, "loops": format_loops(self.loops)}

    def __str__(self):
        return f"{self.n}-stage {self.l}-XOR-FF-APUF [{format_loops(self.loops)}]"


SPEC_KINDS = {cls.kind: cls for cls in (Xor, Oax, Interpose, FeedForward, XorFeedForward)}


def make_spec(kind: str, n: int, **params) -> PufSpec:
    try:
        cls = SPEC_KINDS[kind]
    except KeyError:
        raise InvalidInput(f"unknown PUF kind {kind!r}; expected one of {sorted(SPEC_KINDS)}") from None
    if "loops" in params and isinstance(params["loops"], str):
        params["loops"] = parse_loops(params["loops"])
    spec = cls(n=int(n), **params)
    spec.validate()
    return spec


def spec_to_dict(spec: PufSpec) -> dict:
    return {"kind": spec.kind, "n": spec.n, **spec.params()}


def spec_from_dict(d: dict) -> PufSpec:
    d = dict(d)
    return make_spec(d.pop("kind"), d.pop("n"), **d)


@dataclass(frozen=True)
class PufInstance:
    spec: PufSpec
    chains: tuple[np.ndarray, ...]
    seed: int | None = None
    mu: float = 0.0
    sigma: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.spec.validate()
        chains = []
        for w, length in zip(self.chains, self.spec.chain_lengths):
            w = np.array(w, dtype=np.float64)
            if w.shape != (length,):
                raise InvalidInput(f"chain has shape {w.shape}, expected ({length},)")
            if not np.all(np.isfinite(w)):
                raise InvalidInput("chain weights must be finite")
            w.setflags(write=False)
            chains.append(w)
        if len(chains) != self.spec.chain_count:
            raise InvalidInput(f"{self.spec} needs {self.spec.chain_count} chains, got {len(self.chains)}")
        object.__setattr__(self, "chains", tuple(chains))

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def chain_count(self) -> int:
        return len(self.chains)

    def __eq__(self, other):
        if not isinstance(other, PufInstance):
            return NotImplemented
        return (self.spec == other.spec and self.seed == other.seed
                and len(self.chains) == len(other.chains)
                and all(np.array_equal(a, b) for a, b in zip(self.chains, other.chains)))

    __hash__ = None


def instantiate(spec: PufSpec, mu: float = 0.0, sigma: float = 1.0, seed: int = 0) -> PufInstance:
    spec.validate()
    chains = tuple(
        sample_apuf_weights(length - 1, mu, sigma, rng_for(seed, "chain", k))
        for k, length in enumerate(spec.chain_lengths)
    )
    return PufInstance(spec, chains, seed=seed, mu=mu, sigma=sigma)


def _ff_batch(w, loops, c, noise, rng):
    c = np.array(c, dtype=np.uint8, copy=True)
    eps = None
    if noise is not None and not noise.is_null:
        eps = rng.normal(noise.mu_noise, noise.sigma_noise, size=(c.shape[0], w.shape[0]))
    for lp in sorted(loops, key=lambda lp: lp.tap):
        s = lp.tap
        phi_s = parity_vector(c[:, :s])
        partial = phi_s @ w[: s + 1]
        if eps is not None:
            partial = partial + np.einsum("ij,ij->i", eps[:, : s + 1], phi_s)
        bit = (partial < 0).astype(np.uint8)
        c[:, list(lp.dests)] = bit[:, None]
    phi = parity_vector(c)
    delta = phi @ w
    if eps is not None:
        delta = delta + np.einsum("ij,ij->i", eps, phi)
    return (delta < 0).astype(np.uint8)


def interpose(c: np.ndarray, bit, pos: int) -> np.ndarray:
    c = np.asarray(c, dtype=np.uint8)
    bit = np.asarray(bit, dtype=np.uint8)
    return np.concatenate([c[..., :pos], bit[..., None], c[..., pos:]], axis=-1)


def _xor_reduce(bits: np.ndarray) -> np.ndarray:
    return (np.bitwise_xor.reduce(bits, axis=-1) & 1).astype(np.uint8)


def _oax_reduce(bits: np.ndarray, x: int, y: int, z: int) -> np.ndarray:
    out = np.zeros(bits.shape[:-1], dtype=np.uint8)
    if x:
        out ^= np.any(bits[..., :x], axis=-1).astype(np.uint8)
    if y:
        out ^= np.all(bits[..., x: x + y], axis=-1).astype(np.uint8)
    if z:
        out ^= _xor_reduce(bits[..., x + y:])
    return out


def _noisy(delta, phi_sum, length, noise, rng):
    # eps . phi with eps ~ N(mu, s^2 I) and phi in {-1, 1}^length is N(mu * sum(phi), s^2 length).
    if noise is None or noise.is_null:
        return delta
    out = delta + rng.standard_normal(delta.shape) * (noise.sigma_noise * np.sqrt(length))
    if noise.mu_noise:
        out = out + noise.mu_noise * phi_sum
    return out


class PreparedBatch:
    """Noise-free delays of a challenge batch, reusable across noisy re-measurements.

    Only the Gaussian perturbation is redrawn per :meth:`sample` call, so ``m``
    repeated measurements cost ``m`` cheap draws instead of ``m`` full
    evaluations. Feed-forward chains are re-evaluated in full because their
    intermediate arbiters share the perturbation with the final one.
    """

    def __init__(self, inst: PufInstance, challenges):
        c = as_challenges(challenges)
        if c.ndim == 1:
            c = c[None, :]
        spec = inst.spec
        if c.shape[1] != spec.n:
            raise InvalidInput(f"challenge length {c.shape[1]} does not match {spec.n} stages")
        self.inst, self.c = inst, c
        if isinstance(spec, (FeedForward, XorFeedForward)):
            return
        phi = parity_vector(c)
        if isinstance(spec, Interpose):
            wx = np.stack(inst.chains[: spec.x])
            wy = np.stack(inst.chains[spec.x:])
            self.delta = phi @ wx.T
            self.phi_sum = phi.sum(axis=1, keepdims=True)
            # Interposed parity: entry i <= pos is phi[i] (1 - 2 b), entry i > pos is phi[i - 1].
            phi_y = np.concatenate([phi[:, : spec.pos + 1], phi[:, spec.pos:]], axis=1)
            head = slice(0, spec.pos + 1)
            tail = slice(spec.pos + 1, None)
            self.y_head = phi_y[:, head] @ wy[:, head].T
            self.y_tail = phi_y[:, tail] @ wy[:, tail].T
            self.y_head_sum = phi_y[:, head].sum(axis=1, keepdims=True)
            self.y_tail_sum = phi_y[:, tail].sum(axis=1, keepdims=True)
        else:
            self.delta = phi @ np.stack(inst.chains).T
            self.phi_sum = phi.sum(axis=1, keepdims=True)

    def sample(self, noise: NoiseSpec | None = None, rng: np.random.Generator | None = None):
        spec = self.inst.spec
        if noise is not None and not noise.is_null and rng is None:
            raise InvalidInput("a random generator is required for noisy evaluation")
        if isinstance(spec, (FeedForward, XorFeedForward)):
            bits = np.stack([_ff_batch(w, spec.loops, self.c, noise, rng) for w in self.inst.chains], axis=1)
            return _xor_reduce(bits), bits
        length = spec.n + 1
        bits = (_noisy(self.delta, self.phi_sum, length, noise, rng) < 0).astype(np.uint8)
        if isinstance(spec, Xor):
            return _xor_reduce(bits), bits
        if isinstance(spec, Oax):
            return _oax_reduce(bits, spec.x, spec.y, spec.z), bits
        sign = 1.0 - 2.0 * _xor_reduce(bits)[:, None]
        delta_y = sign * self.y_head + self.y_tail
        ybits = (_noisy(delta_y, sign * self.y_head_sum + self.y_tail_sum, length + 1, noise, rng) < 0)
        ybits = ybits.astype(np.uint8)
        return _xor_reduce(ybits), np.concatenate([bits, ybits], axis=1)


def evaluate(inst: PufInstance, challenges, noise: NoiseSpec | None = None,
             rng: np.random.Generator | None = None):
    """Evaluate a batch; returns ``(responses[N], component_bits[N, chains])``.

    With noise, each chain of each query sees an independent perturbation.
    A single 1-D challenge returns ``(int, bits[chains])``.
    """
    single = np.ndim(challenges) == 1
    resp, bits = PreparedBatch(inst, challenges).sample(noise, rng)
    if single:
        return int(resp[0]), bits[0]
    return resp, bits


def component_responses(inst, c, noise=None, rng=None) -> np.ndarray:
    return evaluate(inst, c, noise, rng)[1]


def respond_composite(inst, c, noise=None, rng=None):
    return evaluate(inst, c, noise, rng)[0]


def combine_xor(bits) -> int:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        raise InvalidInput("XOR of an empty bit vector")
    return int(_xor_reduce(bits.ravel()))


def combine_oax(or_bits, and_bits, xor_bits, spec: Oax | None = None) -> int:
    """OR-block XOR AND-block XOR parity-block; an empty block contributes 0."""
    parts = [np.asarray(b, dtype=np.uint8).ravel() for b in (or_bits, and_bits, xor_bits)]
    if spec is not None and tuple(p.size for p in parts) != (spec.x, spec.y, spec.z):
        raise InvalidInput(f"block sizes {tuple(p.size for p in parts)} do not match {(spec.x, spec.y, spec.z)}")
    return int(_oax_reduce(np.concatenate(parts), *(p.size for p in parts)))


def ipuf_respond(inst, c, noise=None, rng=None) -> int:
    if not isinstance(inst.spec, Interpose):
        raise InvalidInput(f"{inst.spec} is not an interpose PUF")
    return evaluate(inst, c, noise, rng)[0]


def ff_respond(chain, loops: Sequence[FfLoop], c, noise=None, rng=None):
    """Feed-forward chain response; loops resolve in ascending tap order."""
    chain = np.asarray(chain, dtype=np.float64)
    c = as_challenges(c)
    n = chain.shape[0] - 1
    if c.shape[-1] != n:
        raise InvalidInput(f"challenge length {c.shape[-1]} does not match {n} stages")
    _check_loops(n, loops)
    if noise is not None and not noise.is_null and rng is None:
        raise InvalidInput("a random generator is required for noisy evaluation")
    out = _ff_batch(chain, loops, np.atleast_2d(c), noise, rng)
    return int(out[0]) if c.ndim == 1 else out


def uniformity(inst: PufInstance, sample_size: int, rng: np.random.Generator) -> float:
    if sample_size < 1:
        raise InvalidInput("sample_size must be >= 1")
    resp, _ = evaluate(inst, random_challenges(inst.n, sample_size, rng))
    return float(np.mean(resp))


def chain_uniformity(inst: PufInstance, k: int, sample_size: int, rng: np.random.Generator) -> float:
    """Fraction of 1s of chain ``k`` alone over random challenges of its own length."""
    w = inst.chains[k]
    c = random_challenges(w.shape[0] - 1, sample_size, rng)
    return float(np.mean(_chain_bits(inst.spec, w, c, 0.0)))


def _chain_bits(spec, w, c, offset):
    w = w.copy()
    w[-1] += offset
    if isinstance(spec, (FeedForward, XorFeedForward)):
        return _ff_batch(w, spec.loops, c, None, None)
    return (parity_vector(c) @ w < 0).astype(np.uint8)


def bias_instance(inst: PufInstance, target_uniformity: float, rng: np.random.Generator,
                  sample_size: int = 20000, tol: float = 0.01, max_iter: int = 80) -> PufInstance:
    """Shift each chain's constant weight ``w[n]`` so its uniformity hits the target."""
    if not 0.5 <= target_uniformity <= 0.99:
        raise InvalidInput(f"target uniformity {target_uniformity} outside [0.5, 0.99]")
    chains, offsets = [], []
    for w in inst.chains:
        c = random_challenges(w.shape[0] - 1, sample_size, rng)
        span = float(np.max(np.abs(parity_vector(c) @ w))) + 1.0
        lo, hi = -span, span  # u(lo) = 1, u(hi) = 0; u is non-increasing in the offset
        mid, u = 0.0, float(np.mean(_chain_bits(inst.spec, w, c, 0.0)))
        for _ in range(max_iter):
            if abs(u - target_uniformity) <= tol / 4:
                break
            mid = 0.5 * (lo + hi)
            u = float(np.mean(_chain_bits(inst.spec, w, c, mid)))
            if u > target_uniformity:
                lo = mid
            else:
                hi = mid
        if abs(u - target_uniformity) > tol:
            raise InvalidInput(f"could not bias chain to uniformity {target_uniformity} (reached {u:.4f})")
        shifted = w.copy()
        shifted[-1] += mid
        chains.append(shifted)
        offsets.append(mid)
    return replace(inst, chains=tuple(chains),
                   meta={**inst.meta, "bias_offsets": offsets, "target_uniformity": target_uniformity})
