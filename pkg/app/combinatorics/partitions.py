"""
Set partitions of N-bar.

Elements are positions 0..n-1 with position 0 the origin; a partition is
stored as a tuple of cell bitmasks sorted by lowest member, so the cell of
the origin always comes first.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence


@dataclass(frozen=True)
class SetPartition:
    """Disjoint nonempty cells covering {0, ..., size - 1}."""

    size: int
    cells: tuple[int, ...]

    def __post_init__(self):
        union = 0
        for cell in self.cells:
            if cell == 0 or cell & union:
                raise ValueError(f"Cells must be nonempty and disjoint: {self.cells}")
            union |= cell
        if union != (1 << self.size) - 1:
            raise ValueError(f"Cells do not cover {self.size} elements: {self.cells}")

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def zero_cell(self) -> int:
        """[0], the cell containing the origin."""
        return next(cell for cell in self.cells if cell & 1)

    @property
    def outer_cells(self) -> tuple[int, ...]:
        """Cells not containing the origin."""
        return tuple(cell for cell in self.cells if not cell & 1)

    def contains(self, cell: int) -> bool:
        return cell in self.cells

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "SetPartition":
        """Partition whose cells group equal labels."""
        cells: dict[int, int] = {}
        for position, label in enumerate(labels):
            cells[label] = cells.get(label, 0) | (1 << position)
        return cls(size=len(labels), cells=canonical_cells(cells.values()))


def canonical_cells(cells) -> tuple[int, ...]:
    return tuple(sorted(cells, key=lambda c: c & -c))


def restricted_growth_strings(n: int) -> Iterator[tuple[int, ...]]:
    """
    All strings a_0..a_{n-1} with a_0 = 0 and a_i <= 1 + max(a_0..a_{i-1}).

    Lexicographic order; each string is one set partition.
    """
    if n == 0:
        yield ()
        return
    a = [0] * n
    # m[i] = max(a_0..a_{i-1})
    m = [0] * n
    while True:
        yield tuple(a)
        i = n - 1
        while i > 0 and a[i] == m[i] + 1:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        for j in range(i + 1, n):
            a[j] = 0
            m[j] = max(m[j - 1], a[j - 1])


def set_partitions(n: int) -> Iterator[SetPartition]:
    for labels in restricted_growth_strings(n):
        yield SetPartition.from_labels(labels)


@lru_cache(maxsize=None)
def bell_number(n: int) -> int:
    """Bell numbers through the Bell triangle."""
    row = [1]
    for _ in range(n):
        next_row = [row[-1]]
        for value in row:
            next_row.append(next_row[-1] + value)
        row = next_row
    return row[0]
