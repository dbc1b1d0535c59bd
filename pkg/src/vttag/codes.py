"""Square bit-grid tag identities with guaranteed mutual Hamming separation.

Codes are n x n boolean grids (payload only, borders are a rendering
concern), stored row-major from the top-left cell, True = white cell.
A family is a set of codes whose pairwise Hamming distance under all
four quarter-turn rotations stays at or above a floor d_min, so that a
corrupted observation still decodes to a unique (code, rotation).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import GenerationExhausted

__all__ = [
    "TagCode",
    "TagFamily",
    "DecodeResult",
    "rotate90",
    "hamming",
    "generate_family",
    "decode_code",
    "identity_space_size",
]


def identity_space_size(n: int) -> int:
    """Number of raw n x n identities before any distance filtering (2**(n*n))."""
    return 2 ** (n * n)


@dataclass(frozen=True)
class TagCode:
    """Payload bit grid of a square tag: n cells per side, row-major, True = white."""

    n: int
    bits: tuple

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if len(self.bits) != self.n * self.n:
            raise ValueError(f"expected {self.n * self.n} bits, got {len(self.bits)}")
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))

    @classmethod
    def from_string(cls, n: int, s: str) -> "TagCode":
        if len(s) != n * n or set(s) - {"0", "1"}:
            raise ValueError(f"code string must be {n * n} chars of 0/1")
        return cls(n, tuple(c == "1" for c in s))

    @classmethod
    def from_int(cls, n: int, value: int) -> "TagCode":
        """Unpack from an integer where bit k (LSB first) is cell k in row-major order."""
        return cls(n, tuple(bool((value >> k) & 1) for k in range(n * n)))

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def to_int(self) -> int:
        v = 0
        for k, b in enumerate(self.bits):
            if b:
                v |= 1 << k
        return v

    def to_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=bool).reshape(self.n, self.n)

    @classmethod
    def from_array(cls, grid: np.ndarray) -> "TagCode":
        grid = np.asarray(grid, dtype=bool)
        if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
            raise ValueError("grid must be square")
        return cls(grid.shape[0], tuple(grid.reshape(-1).tolist()))


def rotate90(code: TagCode) -> TagCode:
    """Quarter-turn rotation: the bit at (r, c) moves to (c, n-1-r)."""
    # new[c, n-1-r] = old[r, c]  <=>  clockwise rotation of the grid
    return TagCode.from_array(np.rot90(code.to_array(), k=-1))


def hamming(a: TagCode, b: TagCode) -> int:
    """Number of differing cells between two equal-size codes."""
    if a.n != b.n:
        raise ValueError(f"size mismatch: {a.n} vs {b.n}")
    return int((a.to_int() ^ b.to_int()).bit_count())


def _rotation_bit_perm(n: int) -> np.ndarray:
    """Map old bit index -> new bit index for one quarter turn of a packed code."""
    perm = np.empty(n * n, dtype=np.uint64)
    for r in range(n):
        for c in range(n):
            perm[r * n + c] = c * n + (n - 1 - r)
    return perm


def _rotate_packed(values: np.ndarray, perm: np.ndarray, nbits: int) -> np.ndarray:
    """Apply a bit permutation to a batch of packed codes."""
    shifts = np.arange(nbits, dtype=np.uint64)
    bits = (values[:, None] >> shifts[None, :]) & np.uint64(1)
    weights = np.uint64(1) << perm
    return (bits * weights[None, :]).sum(axis=1, dtype=np.uint64)


@dataclass(frozen=True)
class TagFamily:
    """Ordered, rotation-disambiguated code set with minimum mutual distance d_min."""

    n: int
    d_min: int
    seed: int
    codes: tuple

    def __post_init__(self):
        object.__setattr__(self, "codes", tuple(self.codes))
        for c in self.codes:
            if c.n != self.n:
                raise ValueError("all codes must have the family cell count")

    def __len__(self) -> int:
        return len(self.codes)

    @property
    def correction_budget(self) -> int:
        """Unique-decoding radius floor((d_min - 1) / 2)."""
        return (self.d_min - 1) // 2

    @cached_property
    def _rotation_table(self) -> np.ndarray:
        """Packed codes under all four rotations, shape (len, 4)."""
        table = np.empty((len(self.codes), 4), dtype=np.uint64)
        for i, code in enumerate(self.codes):
            c = code
            for q in range(4):
                table[i, q] = c.to_int()
                c = rotate90(c)
        return table

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "d_min": self.d_min,
            "seed": self.seed,
            "codes": [c.to_string() for c in self.codes],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TagFamily":
        n = int(d["n"])
        return cls(
            n=n,
            d_min=int(d["d_min"]),
            seed=int(d["seed"]),
            codes=tuple(TagCode.from_string(n, s) for s in d["codes"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "TagFamily":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def _feistel_batch(idx: np.ndarray, half_bits: int, keys: np.ndarray) -> np.ndarray:
    """Four-round Feistel network: a keyed pseudo-random permutation of 2*half_bits-bit ints."""
    hb = np.uint64(half_bits)
    mask = np.uint64((1 << half_bits) - 1)
    left = (idx >> hb) & mask
    right = idx & mask
    m1 = np.uint64(0xFF51AFD7ED558CCD)
    m2 = np.uint64(0xC4CEB9FE1A85EC53)
    for k in keys:
        x = (right ^ np.uint64(k)) * m1
        x ^= x >> np.uint64(33)
        x *= m2
        x ^= x >> np.uint64(29)
        left, right = right, left ^ (x & mask)
    return (left << hb) | right


def _candidate_stream(n: int, seed: int, batch: int = 8192):
    """Yield packed candidate codes in a seeded pseudo-random permutation order.

    A Feistel permutation over a power-of-two superset of the n*n-bit space,
    with out-of-range values discarded, visits every candidate exactly once.
    """
    nbits = n * n
    half = (nbits + 1) // 2
    domain = 1 << (2 * half)
    limit = 1 << nbits
    keys = np.random.SeedSequence([seed, 0xFE157E1]).generate_state(4, np.uint64)
    for start in range(0, domain, batch):
        idx = np.arange(start, min(start + batch, domain), dtype=np.uint64)
        vals = _feistel_batch(idx, half, keys)
        vals = vals[vals < limit]
        if vals.size:
            yield vals


def generate_family(
    n: int,
    d_min: int,
    max_codes: int,
    seed: int,
    budget: int = 2_000_000,
) -> TagFamily:
    """Greedy lexicode over a seeded pseudo-random permutation of all n x n codes.

    A candidate is accepted iff its distance to every rotation of every
    previously accepted code, and to its own nontrivial rotations, is at
    least d_min. Stops after max_codes acceptances or budget candidates
    examined. Deterministic given all arguments.

    Raises GenerationExhausted if the budget expires with zero acceptances.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if d_min < 1:
        raise ValueError("d_min must be >= 1")
    if max_codes < 1:
        raise ValueError("max_codes must be >= 1")
    if budget < max_codes:
        raise ValueError("budget must be >= max_codes")

    nbits = n * n
    perm90 = _rotation_bit_perm(n)
    accepted: list[int] = []
    accepted_rots: list[int] = []  # flat, 4 per accepted code
    examined = 0
    dmin64 = np.uint64(d_min)

    def rots_of(value: int) -> list[int]:
        batch = np.array([value], dtype=np.uint64)
        out = [value]
        for _ in range(3):
            batch = _rotate_packed(batch, perm90, nbits)
            out.append(int(batch[0]))
        return out

    for vals in _candidate_stream(n, seed):
        if examined + vals.size > budget:
            vals = vals[: budget - examined]
        if vals.size == 0:
            break

        # self-rotation separation (rejects rotationally ambiguous grids)
        r90 = _rotate_packed(vals, perm90, nbits)
        r180 = _rotate_packed(r90, perm90, nbits)
        r270 = _rotate_packed(r180, perm90, nbits)
        self_ok = (
            (np.bitwise_count(vals ^ r90) >= dmin64)
            & (np.bitwise_count(vals ^ r180) >= dmin64)
            & (np.bitwise_count(vals ^ r270) >= dmin64)
        )

        if accepted_rots:
            rots = np.array(accepted_rots, dtype=np.uint64)
            ok = np.bitwise_count(vals[:, None] ^ rots[None, :]).min(axis=1) >= dmin64
        else:
            ok = np.ones(vals.size, dtype=bool)
        ok &= self_ok

        pos = 0
        while True:
            hits = np.nonzero(ok[pos:])[0]
            if hits.size == 0:
                examined += vals.size
                break
            p = pos + int(hits[0])
            value = int(vals[p])
            accepted.append(value)
            accepted_rots.extend(rots_of(value))
            if len(accepted) == max_codes:
                examined += p + 1
                break
            # re-screen the rest of the batch against the newly accepted code
            new_rots = np.array(accepted_rots[-4:], dtype=np.uint64)
            tail = vals[p + 1 :]
            ok[p + 1 :] &= (
                np.bitwise_count(tail[:, None] ^ new_rots[None, :]).min(axis=1) >= dmin64
            )
            pos = p + 1
        if len(accepted) == max_codes or examined >= budget:
            break

    if not accepted:
        raise GenerationExhausted(examined)
    return TagFamily(
        n=n,
        d_min=d_min,
        seed=seed,
        codes=tuple(TagCode.from_int(n, v) for v in accepted),
    )


@dataclass(frozen=True)
class DecodeResult:
    """Best-match decode: observed ~ rotate90^rotation(family.codes[index])."""

    index: int
    rotation: int  # quarter turns, 0..3
    distance: int

    @property
    def rotation_deg(self) -> int:
        return self.rotation * 90


def decode_code(
    observed: TagCode, family: TagFamily, t_max: Optional[int] = None
) -> Optional[DecodeResult]:
    """Decode an observed grid against a family, correcting up to t_max bit errors.

    t_max is clamped to the unique-decoding radius floor((d_min-1)/2).
    Returns None when no (code, rotation) lies within the correction budget.
    """
    if observed.n != family.n:
        raise ValueError(f"size mismatch: observed n={observed.n}, family n={family.n}")
    if t_max is None:
        t_max = family.correction_budget
    t_max = min(t_max, family.correction_budget)

    dists = np.bitwise_count(family._rotation_table ^ np.uint64(observed.to_int()))
    flat = int(np.argmin(dists))
    best = int(dists.reshape(-1)[flat])
    if best > t_max:
        return None
    return DecodeResult(index=flat // 4, rotation=flat % 4, distance=best)
