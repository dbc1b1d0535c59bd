"""Tag code / family codec tests."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vttag.codes import (
    TagCode,
    TagFamily,
    decode_code,
    generate_family,
    hamming,
    identity_space_size,
    rotate90,
)
from vttag.errors import GenerationExhausted


def random_code(rng, n=5) -> TagCode:
    return TagCode(n, tuple(bool(b) for b in rng.integers(0, 2, n * n)))


class TestTagCode:
    def test_string_round_trip(self):
        s = "10" * 8  # n = 4
        code = TagCode.from_string(4, s)
        assert code.to_string() == s

    def test_int_round_trip(self):
        code = TagCode.from_int(5, 0x12E3D4A)
        assert TagCode.from_int(5, code.to_int()) == code
        assert code.to_int() == 0x12E3D4A

    def test_array_round_trip(self):
        rng = np.random.default_rng(0)
        code = random_code(rng)
        assert TagCode.from_array(code.to_array()) == code

    def test_bad_length_raises(self):
        with pytest.raises(ValueError):
            TagCode(3, (True,) * 8)
        with pytest.raises(ValueError):
            TagCode.from_string(3, "111")

    def test_bad_chars_raise(self):
        with pytest.raises(ValueError):
            TagCode.from_string(2, "10x1")

    def test_n_too_small(self):
        with pytest.raises(ValueError):
            TagCode(1, (True,))


class TestRotate90:
    def test_moves_bit_as_documented(self):
        # single set bit at (r, c) = (0, 1) must land at (c, n-1-r) = (1, 2)
        n = 3
        grid = np.zeros((n, n), dtype=bool)
        grid[0, 1] = True
        rot = rotate90(TagCode.from_array(grid)).to_array()
        assert rot[1, 2]
        assert rot.sum() == 1

    @given(st.integers(0, 2**25 - 1))
    @settings(max_examples=50, deadline=None)
    def test_four_rotations_identity(self, value):
        code = TagCode.from_int(5, value)
        out = code
        for _ in range(4):
            out = rotate90(out)
        assert out == code


class TestHamming:
    def test_zero_iff_equal(self):
        rng = np.random.default_rng(1)
        a = random_code(rng)
        assert hamming(a, a) == 0

    @given(st.integers(0, 2**16 - 1), st.integers(0, 2**16 - 1))
    @settings(max_examples=50, deadline=None)
    def test_symmetric_and_popcount(self, x, y):
        a, b = TagCode.from_int(4, x), TagCode.from_int(4, y)
        assert hamming(a, b) == hamming(b, a) == bin(x ^ y).count("1")

    def test_size_mismatch_raises(self):
        with pytest.raises(ValueError):
            hamming(TagCode.from_int(4, 0), TagCode.from_int(5, 0))


def check_family_separation(family: TagFamily) -> int:
    """Independent exhaustive separation check; returns the observed minimum.

    Uses only string twiddling (no library rotation helpers) on purpose.
    """

    def rot_str(s: str, n: int) -> str:
        # clockwise quarter turn: reverse the rows, then transpose
        g = [list(s[i * n : (i + 1) * n]) for i in range(n)]
        return "".join("".join(row) for row in zip(*g[::-1]))

    n = family.n
    strings = [c.to_string() for c in family.codes]
    best = n * n + 1
    for i, si in enumerate(strings):
        variants = []
        s = si
        for _ in range(4):
            s = rot_str(s, n)
            variants.append(s)
        # self-separation: nontrivial rotations of i vs i
        for v in variants[:3]:
            d = sum(a != b for a, b in zip(si, v))
            best = min(best, d)
        for j, sj in enumerate(strings):
            if j <= i:
                continue
            for v in [si] + variants:
                d = sum(a != b for a, b in zip(sj, v))
                best = min(best, d)
    return best


class TestGenerateFamily:
    def test_deterministic(self):
        f1 = generate_family(4, 6, 8, seed=7)
        f2 = generate_family(4, 6, 8, seed=7)
        assert f1 == f2

    def test_seed_changes_output(self):
        assert generate_family(4, 6, 8, seed=7) != generate_family(4, 6, 8, seed=8)

    def test_separation_holds(self):
        fam = generate_family(4, 6, 10, seed=3)
        assert len(fam) == 10
        assert check_family_separation(fam) >= 6

    def test_impossible_distance_exhausts(self):
        with pytest.raises(GenerationExhausted):
            generate_family(2, 5, 1, seed=0, budget=32)

    def test_json_round_trip(self, tmp_path):
        fam = generate_family(4, 6, 5, seed=11)
        path = tmp_path / "fam.json"
        fam.save(path)
        assert TagFamily.load(path) == fam

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            generate_family(4, 6, 10, seed=0, budget=5)


@pytest.fixture(scope="module")
def family():
    return generate_family(5, 9, 30, seed=42)


class TestDecode:
    def test_exact_codes_decode(self, family):
        for i, code in enumerate(family.codes):
            res = decode_code(code, family)
            assert res is not None
            assert (res.index, res.rotation, res.distance) == (i, 0, 0)

    def test_rotated_codes_decode(self, family):
        code = family.codes[3]
        rotated = rotate90(rotate90(code))
        res = decode_code(rotated, family)
        assert (res.index, res.rotation) == (3, 2)
        assert res.rotation_deg == 180

    def test_correctable_flips(self, family):
        rng = np.random.default_rng(99)
        t_max = family.correction_budget
        for _ in range(200):
            idx = int(rng.integers(len(family)))
            rot = int(rng.integers(4))
            nflips = int(rng.integers(0, t_max + 1))
            code = family.codes[idx]
            for _ in range(rot):
                code = rotate90(code)
            bits = list(code.bits)
            for p in rng.choice(25, size=nflips, replace=False):
                bits[p] = not bits[p]
            res = decode_code(TagCode(5, tuple(bits)), family)
            assert res is not None
            assert (res.index, res.rotation) == (idx, rot)
            assert res.distance == nflips

    def test_t_max_clamped(self, family):
        # an enormous budget must still clamp to the unique-decoding radius
        code = family.codes[0]
        bits = list(code.bits)
        for p in range(family.correction_budget + 1):
            bits[p] = not bits[p]
        res = decode_code(TagCode(5, tuple(bits)), family, t_max=999)
        assert res is None or res.distance <= family.correction_budget

    def test_t_max_zero_rejects_any_flip(self, family):
        bits = list(family.codes[0].bits)
        bits[0] = not bits[0]
        assert decode_code(TagCode(5, tuple(bits)), family, t_max=0) is None

    def test_size_mismatch(self, family):
        with pytest.raises(ValueError):
            decode_code(TagCode.from_int(4, 0), family)


def test_identity_space_size_n6():
    assert identity_space_size(6) == 68719476736


def test_identity_space_size_small():
    assert identity_space_size(2) == 16
    assert identity_space_size(3) == 512
