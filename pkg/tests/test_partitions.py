"""
Tests for set partitions and restricted growth strings.
"""

import pytest
from hypothesis import given, settings, strategies as st

from app.combinatorics.partitions import (
    SetPartition,
    bell_number,
    restricted_growth_strings,
    set_partitions,
)


class TestBellNumbers:
    """Tests for bell_number."""

    @pytest.mark.parametrize("n,expected", [(0, 1), (1, 1), (2, 2), (3, 5), (4, 15), (5, 52), (9, 21147)])
    def test_known_values(self, n, expected):
        """Test the first Bell numbers."""
        assert bell_number(n) == expected


class TestRestrictedGrowthStrings:
    """Tests for the RGS enumeration."""

    @pytest.mark.parametrize("n", range(0, 8))
    def test_count_matches_bell(self, n):
        """Test that the enumeration yields B_n strings."""
        assert sum(1 for _ in restricted_growth_strings(n)) == bell_number(n)

    def test_lexicographic_order(self):
        """Test that strings come out in lexicographic order."""
        strings = list(restricted_growth_strings(4))
        assert strings == sorted(strings)
        assert strings[0] == (0, 0, 0, 0)
        assert strings[-1] == (0, 1, 2, 3)

    @given(st.integers(min_value=1, max_value=7))
    @settings(max_examples=20, deadline=None)
    def test_growth_condition(self, n):
        """Test a_0 = 0 and a_i <= 1 + max(a_0..a_{i-1}) on every string."""
        for labels in restricted_growth_strings(n):
            assert labels[0] == 0
            for i in range(1, n):
                assert labels[i] <= 1 + max(labels[:i])


class TestSetPartition:
    """Tests for SetPartition."""

    def test_partitions_are_distinct(self):
        """Test that no partition of 5 elements is produced twice."""
        cells = [p.cells for p in set_partitions(5)]
        assert len(cells) == len(set(cells)) == 52

    def test_zero_cell_first(self):
        """Test that the origin's cell is listed first."""
        partition = SetPartition.from_labels([1, 0, 1, 2])
        assert partition.cells[0] == partition.zero_cell == 0b0101
        assert partition.outer_cells == (0b0010, 0b1000)

    def test_rejects_overlap(self):
        """Test that overlapping cells are rejected."""
        with pytest.raises(ValueError):
            SetPartition(size=3, cells=(0b011, 0b110))

    def test_rejects_incomplete_cover(self):
        """Test that cells must cover every element."""
        with pytest.raises(ValueError):
            SetPartition(size=3, cells=(0b001, 0b010))

    def test_contains(self):
        """Test cell membership."""
        partition = SetPartition.from_labels([0, 0, 1])
        assert partition.contains(0b100)
        assert not partition.contains(0b010)
        assert len(partition) == 2
