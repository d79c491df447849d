import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adeqboot.adequacy import GroupedData
from adeqboot.dataio import (
    InputError,
    atomic_write_files,
    format_grouped,
    parse_grouped,
    parse_values,
    returns_from_prices,
    scale_to_counts,
    truncate,
)


class TestValues:
    def test_header_and_comments(self):
        assert list(parse_values("x\n1.5\n# note\n\n-2\n")) == [1.5, -2.0]

    def test_bad_line(self):
        with pytest.raises(InputError):
            parse_values("1\nfoo\n")

    def test_empty(self):
        with pytest.raises(InputError):
            parse_values("header\n")


class TestGrouped:
    def test_parse_with_inf(self):
        g = parse_grouped("lower,upper,count\n1,2,5\n2,inf,3\n")
        assert g.boundaries[-1] == math.inf and list(g.counts) == [5, 3]

    def test_gap_rejected(self):
        with pytest.raises(InputError):
            parse_grouped("1,2,5\n3,4,1\n")

    def test_fractions_need_size(self):
        text = "1,2,0.25\n2,inf,0.75\n"
        with pytest.raises(InputError):
            parse_grouped(text)
        assert list(parse_grouped(text, sample_size=5000).counts) == [1250, 3750]

    def test_scale_sums(self):
        c = scale_to_counts([1, 1, 1], 100)
        assert c.sum() == 100 and max(c) - min(c) <= 1

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=8, unique=True),
        st.data(),
    )
    def test_round_trip(self, inner, data):
        b = np.array([-math.inf, *sorted(inner), math.inf])
        counts = data.draw(st.lists(st.integers(0, 1000), min_size=len(b) - 1, max_size=len(b) - 1).filter(lambda c: sum(c) > 0))
        g = GroupedData(b, counts)
        assert parse_grouped(format_grouped(g)) == g


class TestReturns:
    def test_lag_one(self):
        assert returns_from_prices([100, 110, 99]) == pytest.approx([1.1, 0.9])

    def test_non_overlapping(self):
        p = np.arange(1.0, 12.0)
        r = returns_from_prices(p, 5)
        assert r == pytest.approx([6 / 1, 11 / 6])

    def test_nonpositive(self):
        with pytest.raises(InputError):
            returns_from_prices([1, 0, 2])


def test_truncate():
    assert list(truncate(np.array([0.5, 1.0, 3.0]), 1.0)) == [1.0, 3.0]
    with pytest.raises(InputError):
        truncate(np.array([0.5]), 1.0)


def test_atomic_write(tmp_path):
    atomic_write_files(tmp_path / "o", {"a.txt": "x\n", "b.txt": "y\n"})
    assert (tmp_path / "o" / "a.txt").read_text() == "x\n"
    assert not [p for p in (tmp_path / "o").iterdir() if p.name.startswith(".")]
