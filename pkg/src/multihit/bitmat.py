"""Bit-packed mutation matrix, bitset primitives, and the packed file format.

Each gene row is a bitset over samples with tumor columns occupying bit
positions [0, num_tumor) and normal columns following. Rows are backed by a
single arbitrary-precision int (bit i == sample i), which keeps AND/popcount
at machine speed; the 64-bit little-endian word layout exists only in the
on-disk format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence, TextIO

MAGIC = b"MHWC"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIIII")  # magic, version, G, num_tumor, num_normal


class PackedFormatError(Exception):
    """Raised for malformed packed-matrix streams; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class BitRow:
    """Fixed-width bitset. Bits at positions >= nbits are always zero."""

    __slots__ = ("bits", "nbits")

    def __init__(self, nbits: int, bits: int = 0):
        if nbits < 0:
            raise ValueError("nbits must be non-negative")
        self.nbits = nbits
        self.bits = bits & ((1 << nbits) - 1)

    @classmethod
    def from_indices(cls, nbits: int, indices: Iterable[int]) -> "BitRow":
        bits = 0
        for i in indices:
            if not 0 <= i < nbits:
                raise IndexError(f"bit index {i} out of range for width {nbits}")
            bits |= 1 << i
        return cls(nbits, bits)

    @classmethod
    def all_ones(cls, nbits: int) -> "BitRow":
        return cls(nbits, (1 << nbits) - 1)

    def popcount(self) -> int:
        return self.bits.bit_count()

    def get(self, i: int) -> bool:
        if not 0 <= i < self.nbits:
            raise IndexError(f"bit index {i} out of range for width {self.nbits}")
        return bool((self.bits >> i) & 1)

    def set(self, i: int) -> None:
        if not 0 <= i < self.nbits:
            raise IndexError(f"bit index {i} out of range for width {self.nbits}")
        self.bits |= 1 << i

    def copy(self) -> "BitRow":
        return BitRow(self.nbits, self.bits)

    def num_words(self) -> int:
        return (self.nbits + 63) // 64

    def to_words_bytes(self) -> bytes:
        """Little-endian u64 words; bit i of the row is bit i%64 of word i//64."""
        return self.bits.to_bytes(self.num_words() * 8, "little")

    @classmethod
    def from_words_bytes(cls, nbits: int, data: bytes) -> "BitRow":
        return cls(nbits, int.from_bytes(data, "little"))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitRow):
            return NotImplemented
        return self.nbits == other.nbits and self.bits == other.bits

    def __hash__(self) -> int:
        return hash((self.nbits, self.bits))

    def __repr__(self) -> str:
        return f"BitRow(nbits={self.nbits}, popcount={self.popcount()})"


@dataclass(frozen=True)
class GeneMap:
    """Mapping from post-sort row index to the original gene name."""

    entries: tuple[tuple[int, str], ...]

    def lookup(self) -> dict[int, str]:
        return dict(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


class MutationMatrix:
    """Binary genes x samples matrix with a tumor/normal column partition.

    Rows are shared, read-only bitsets; the only mutable piece of state is
    ``active_tumor_mask``, which the greedy driver clears between search
    rounds to mark already-covered tumor samples.
    """

    __slots__ = ("rows", "num_tumor", "num_normal", "gene_ids", "active_tumor_mask")

    def __init__(
        self,
        rows: Sequence[BitRow],
        num_tumor: int,
        num_normal: int,
        gene_ids: Sequence[str] | None = None,
        active_tumor_mask: BitRow | None = None,
    ):
        if num_tumor < 0 or num_normal < 0:
            raise ValueError("sample counts must be non-negative")
        width = num_tumor + num_normal
        for i, row in enumerate(rows):
            if row.nbits != width:
                raise ValueError(f"row {i} has width {row.nbits}, expected {width}")
        if gene_ids is None:
            gene_ids = [f"g{i}" for i in range(len(rows))]
        if len(gene_ids) != len(rows):
            raise ValueError("gene_ids length must match row count")
        if any(not g for g in gene_ids):
            raise ValueError("gene ids must be non-empty")
        if len(set(gene_ids)) != len(gene_ids):
            raise ValueError("gene ids must be unique")
        if active_tumor_mask is None:
            active_tumor_mask = BitRow.all_ones(num_tumor)
        if active_tumor_mask.nbits != num_tumor:
            raise ValueError("active_tumor_mask width must equal num_tumor")
        self.rows = list(rows)
        self.num_tumor = num_tumor
        self.num_normal = num_normal
        self.gene_ids = list(gene_ids)
        self.active_tumor_mask = active_tumor_mask

    @property
    def num_genes(self) -> int:
        return len(self.rows)

    @property
    def num_samples(self) -> int:
        return self.num_tumor + self.num_normal

    @property
    def tumor_mask_bits(self) -> int:
        return (1 << self.num_tumor) - 1

    @property
    def normal_mask_bits(self) -> int:
        return ((1 << self.num_normal) - 1) << self.num_tumor

    @property
    def active_tumor_count(self) -> int:
        return self.active_tumor_mask.popcount()

    def reset_active_mask(self) -> None:
        self.active_tumor_mask = BitRow.all_ones(self.num_tumor)

    def copy(self) -> "MutationMatrix":
        """Shallow row share, fresh mask. Rows are read-only by convention."""
        return MutationMatrix(
            self.rows,
            self.num_tumor,
            self.num_normal,
            list(self.gene_ids),
            self.active_tumor_mask.copy(),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MutationMatrix):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.num_tumor == other.num_tumor
            and self.num_normal == other.num_normal
        )

    def __repr__(self) -> str:
        return (
            f"MutationMatrix(G={self.num_genes}, tumor={self.num_tumor}, "
            f"normal={self.num_normal})"
        )


def and_into(dst: BitRow, src: BitRow) -> BitRow:
    """In-place bitwise AND of src into dst; widths must match."""
    if dst.nbits != src.nbits:
        raise ValueError(f"width mismatch: {dst.nbits} vs {src.nbits}")
    dst.bits &= src.bits
    return dst


def tumor_intersection_empty(y: BitRow, m: MutationMatrix) -> bool:
    """True iff y has no set bit in a still-active tumor column of m."""
    if y.nbits != m.num_samples:
        raise ValueError(f"row width {y.nbits} does not match matrix width {m.num_samples}")
    return (y.bits & m.active_tumor_mask.bits) == 0


def sort_by_sparsity(m: MutationMatrix) -> tuple[MutationMatrix, GeneMap]:
    """Reorder rows by ascending tumor-column popcount (sparsest first).

    Ties keep the original row order. Sparse-first ordering makes partial
    intersections go empty at shallow search depth, which is what drives
    the pruning rate.
    """
    tmask = m.tumor_mask_bits
    order = sorted(
        range(m.num_genes), key=lambda i: ((m.rows[i].bits & tmask).bit_count(), i)
    )
    rows = [m.rows[i] for i in order]
    names = [m.gene_ids[i] for i in order]
    sorted_matrix = MutationMatrix(
        rows, m.num_tumor, m.num_normal, names, m.active_tumor_mask.copy()
    )
    gene_map = GeneMap(tuple((new, names[new]) for new in range(len(order))))
    return sorted_matrix, gene_map


def write_packed(m: MutationMatrix, sink: BinaryIO) -> None:
    """Write the bit-exact packed layout: 20-byte header, then per-gene rows
    of ceil(samples/64) little-endian u64 words, tumor bits first."""
    sink.write(HEADER.pack(MAGIC, FORMAT_VERSION, m.num_genes, m.num_tumor, m.num_normal))
    for row in m.rows:
        sink.write(row.to_words_bytes())


def read_packed(source: BinaryIO) -> MutationMatrix:
    """Read a packed matrix; gene names are not stored in this format and
    come back as placeholders (load the gene map separately)."""
    header = source.read(HEADER.size)
    if len(header) < HEADER.size:
        raise PackedFormatError("truncated header", len(header))
    magic, version, num_genes, num_tumor, num_normal = HEADER.unpack(header)
    if magic != MAGIC:
        raise PackedFormatError(f"bad magic {magic!r}", 0)
    if version != FORMAT_VERSION:
        raise PackedFormatError(f"unsupported version {version}", 4)
    width = num_tumor + num_normal
    row_bytes = ((width + 63) // 64) * 8
    rows = []
    offset = HEADER.size
    for _ in range(num_genes):
        data = source.read(row_bytes)
        if len(data) < row_bytes:
            raise PackedFormatError("truncated row data", offset + len(data))
        rows.append(BitRow.from_words_bytes(width, data))
        offset += row_bytes
    return MutationMatrix(rows, num_tumor, num_normal)


def write_gene_map(sink: TextIO, gene_map: GeneMap) -> None:
    for index, name in gene_map.entries:
        sink.write(f"{index}\t{name}\n")


def read_gene_map(source: TextIO) -> GeneMap:
    entries = []
    for line_no, line in enumerate(source, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        try:
            index_text, name = line.split("\t", 1)
            index = int(index_text)
        except ValueError as exc:
            raise ValueError(f"gene map line {line_no}: expected 'index<TAB>name'") from exc
        if not name:
            raise ValueError(f"gene map line {line_no}: empty gene name")
        entries.append((index, name))
    return GeneMap(tuple(entries))
