"""Arbiter chains built from measured ring-oscillator frequencies.

Each stage borrows four ROs whose periods stand in for the four switch paths
(t13, t14, t23, t24). The table format is a plain CSV with header
``device,ro,temp_c,rep,freq_hz``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .delay import InvalidInput, parity_vector, respond
from .seeding import rng_for

COLUMNS = ("device", "ro", "temp_c", "rep", "freq_hz")


class RoTableError(ValueError):
    pass


@dataclass(frozen=True)
class RoFrequencyTable:
    """Immutable mapping ``(device, ro, temp_c, rep) -> frequency in Hz``."""

    entries: Mapping[tuple, float]

    def __len__(self):
        return len(self.entries)

    def frequency(self, device: str, ro: int, temp: float, rep: int) -> float:
        try:
            return self.entries[(device, ro, float(temp), rep)]
        except KeyError:
            raise RoTableError(f"no measurement for device={device} ro={ro} temp={temp} rep={rep}") from None

    def repetitions(self, device: str, temp: float) -> list[int]:
        temp = float(temp)
        return sorted({k[3] for k in self.entries if k[0] == device and k[2] == temp})

    def ro_indices(self, device: str, temp: float | None = None) -> list[int]:
        return sorted({k[1] for k in self.entries if k[0] == device and (temp is None or k[2] == float(temp))})

    def devices(self) -> list[str]:
        return sorted({k[0] for k in self.entries})


def table_from_rows(rows: Iterable[tuple]) -> RoFrequencyTable:
    entries = {}
    for device, ro, temp, rep, freq in rows:
        key = (str(device), int(ro), float(temp), int(rep))
        freq = float(freq)
        if not freq > 0 or not np.isfinite(freq):
            raise RoTableError(f"frequency must be positive and finite, got {freq} for {key}")
        if key in entries:
            raise RoTableError(f"duplicate measurement {key}")
        entries[key] = freq
    return RoFrequencyTable(entries)


def load_table(path) -> RoFrequencyTable:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != COLUMNS:
            raise RoTableError(f"{path}:1: expected header {','.join(COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COLUMNS):
                raise RoTableError(f"{path}:{lineno}: expected {len(COLUMNS)} fields, got {len(row)}")
            try:
                device, ro, temp, rep, freq = row[0].strip(), int(row[1]), float(row[2]), int(row[3]), float(row[4])
            except ValueError as exc:
                raise RoTableError(f"{path}:{lineno}: {exc}") from None
            rows.append((device, ro, temp, rep, freq))
    try:
        return table_from_rows(rows)
    except RoTableError as exc:
        raise RoTableError(f"{path}: {exc}") from None


def write_table(table: RoFrequencyTable, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(COLUMNS)
        for (device, ro, temp, rep), freq in sorted(table.entries.items()):
            out.writerow([device, ro, f"{temp:g}", rep, repr(freq)])


def _frequencies(table, device, temp, repetition, ros) -> np.ndarray:
    if repetition is not None:
        return np.array([table.frequency(device, r, temp, repetition) for r in ros])
    reps = table.repetitions(device, temp)
    if not reps:
        raise RoTableError(f"no measurements for device={device} at {temp} C")
    # Mean frequency over repetitions, then reciprocal.
    return np.array([np.mean([table.frequency(device, r, temp, k) for k in reps]) for r in ros])


def stage_delays(table: RoFrequencyTable, device: str, temperature: float, repetition: int | None,
                 assignment) -> np.ndarray:
    """``(n, 4)`` periods in seconds, columns ordered t13, t14, t23, t24."""
    ros = np.asarray(assignment, dtype=np.int64)
    if ros.ndim != 1 or len(ros) == 0 or len(ros) % 4:
        raise InvalidInput(f"assignment needs 4 RO indices per stage, got {len(ros)}")
    return 1.0 / _frequencies(table, device, temperature, repetition, ros).reshape(-1, 4)


def weights_from_delays(delays) -> np.ndarray:
    t = np.asarray(delays, dtype=np.float64)
    if t.ndim != 2 or t.shape[1] != 4 or len(t) == 0:
        raise InvalidInput(f"expected an (n, 4) delay array, got shape {t.shape}")
    if np.any(t <= 0):
        raise InvalidInput("stage delays must be positive")
    cross = t[:, 1] - t[:, 2]
    uncross = t[:, 0] - t[:, 3]
    n = len(t)
    w = np.empty(n + 1)
    w[0] = (uncross[0] - cross[0]) / 2
    w[n] = (uncross[-1] + cross[-1]) / 2
    w[1:n] = (uncross[:-1] + cross[:-1] + uncross[1:] - cross[1:]) / 2
    return w


def synthesize_weights(table: RoFrequencyTable, device: str, temperature: float, repetition: int | None,
                       assignment) -> np.ndarray:
    """Weight vector of length ``n + 1``; ``repetition=None`` averages all repetitions."""
    return weights_from_delays(stage_delays(table, device, temperature, repetition, assignment))


def random_assignment(table: RoFrequencyTable, device: str, n: int, seed: int,
                      temps: Iterable[float] = ()) -> np.ndarray:
    """Seeded draw of ``4 n`` distinct RO indices present at every listed temperature."""
    pools = [set(table.ro_indices(device, t)) for t in temps] or [set(table.ro_indices(device))]
    available = sorted(set.intersection(*pools))
    if len(available) < 4 * n:
        raise RoTableError(f"device {device} has {len(available)} usable ROs, need {4 * n} for n={n}")
    perm = rng_for(seed, "ro-assignment", device).permutation(len(available))
    return np.asarray(available, dtype=np.int64)[perm[: 4 * n]]


def _measurement_reps(table, device, temp, m):
    reps = table.repetitions(device, temp)
    if len(reps) < m:
        raise RoTableError(f"device {device} has {len(reps)} repetitions at {temp} C, need {m}")
    return reps[:m]


def repeated_responses(table, device, meas_temp, assignment, c, m: int) -> np.ndarray:
    """``(m, ...)`` responses, one per repetition at ``meas_temp`` (lowest ``m`` repetition ids)."""
    if m < 1:
        raise InvalidInput(f"m must be >= 1, got {m}")
    reps = _measurement_reps(table, device, meas_temp, m)
    phi = parity_vector(c)
    out = []
    for rep in reps:
        w = synthesize_weights(table, device, meas_temp, rep, assignment)
        if phi.shape[-1] != len(w):
            raise InvalidInput(f"challenge length {phi.shape[-1] - 1} does not match {len(w) - 1} stages")
        out.append((phi @ w < 0).astype(np.uint8))
    return np.stack(out)


def reliability_from_repeats(table: RoFrequencyTable, device: str, ref_temp: float, meas_temp: float,
                             assignment, c, m: int):
    """Count of 1 responses over ``m`` repetitions measured at ``meas_temp``.

    ``ref_temp`` is validated (it must hold measurements for the assignment) so
    the count can be compared against :func:`reference_response`.
    """
    reference_response(table, device, ref_temp, assignment, c)
    count = repeated_responses(table, device, meas_temp, assignment, c, m).sum(axis=0)
    return int(count) if np.ndim(count) == 0 else count.astype(np.int64)


def reference_response(table, device, ref_temp, assignment, c):
    return respond(synthesize_weights(table, device, ref_temp, None, assignment), c)


def ro_unreliability(table, device, ref_temp, meas_temp, assignment, challenges, m: int) -> float:
    """Fraction of challenges where any of the ``m`` measurements disagrees with the reference."""
    ref = np.atleast_1d(reference_response(table, device, ref_temp, assignment, challenges))
    resp = repeated_responses(table, device, meas_temp, assignment, challenges, m).reshape(m, -1)
    return float(np.mean(np.any(resp != ref[None, :], axis=0)))


def make_synthetic_table(devices: int = 1, ros: int = 512, temps=(25.0, 55.0), reps: int = 10, seed: int = 0,
                         base_hz: float = 200e6, spread: float = 0.01, temp_coeff: float = -4e-4,
                         coeff_spread: float = 2e-5, jitter: float = 2e-5) -> RoFrequencyTable:
    """Plausible RO measurements for demos and tests when no silicon table is at hand.

    Each RO gets a fixed process offset and its own linear temperature
    coefficient; every repetition adds independent relative jitter.
    """
    rows = []
    for d in range(devices):
        rng = rng_for(seed, "ro-table", d)
        nominal = base_hz * (1 + spread * rng.standard_normal(ros))
        coeff = temp_coeff + coeff_spread * rng.standard_normal(ros)
        for temp in temps:
            shifted = nominal * (1 + coeff * (temp - temps[0]))
            for rep in range(1, reps + 1):
                freq = shifted * (1 + jitter * rng.standard_normal(ros))
                rows.extend((f"dev{d}", r, temp, rep, float(freq[r])) for r in range(ros))
    return table_from_rows(rows)


def ro_dataset(table: RoFrequencyTable, device: str, n: int, size: int, seed: int = 0,
               ref_temp: float = 25.0, meas_temp: float = 55.0, m: int = 10, cn: int = 11):
    """A dataset from one synthesized RO-APUF: reference responses plus reliability counts."""
    from .dataset import Dataset, DatasetMeta
    from .delay import random_challenges
    from .sci import SciConfig, bin_count

    sci = SciConfig(use_power=True, use_reliability=True, m=m, cn=cn)
    assignment = random_assignment(table, device, n, seed, temps=(ref_temp, meas_temp))
    challenges = random_challenges(n, size, rng_for(seed, "challenges"))
    response = np.atleast_1d(reference_response(table, device, ref_temp, assignment, challenges)).astype(np.uint8)
    counts = repeated_responses(table, device, meas_temp, assignment, challenges, m).sum(axis=0).astype(np.int64)
    meta = DatasetMeta(
        puf={"kind": "ro_apuf", "n": n, "device": device}, L=1, sci=sci, seed=seed,
        extra={"ref_temp": ref_temp, "meas_temp": meas_temp, "assignment": [int(a) for a in assignment]},
    )
    return Dataset(challenges, response, meta, power=response.astype(np.int64), rel_count=counts,
                   rel_class=bin_count(counts, m, cn))
