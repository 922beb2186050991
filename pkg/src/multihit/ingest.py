"""MAF-like TSV ingestion: parse, filter, split tumor/normal, and pack.

The pipeline is: parse_maf -> build_cohort -> pack_cohort. The intermediate
cohort can be written to (and read back from) two text files so that a
solution can later be verified against the raw data without touching the
bit-packed path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, TextIO

from multihit.bitmat import BitRow, GeneMap, MutationMatrix, sort_by_sparsity

log = logging.getLogger(__name__)

TUMOR = "tumor"
NORMAL = "normal"


class MafFormatError(Exception):
    """Fatal configuration/format problem, e.g. a missing header column."""


@dataclass(frozen=True)
class MafColumns:
    gene: str = "Hugo_Symbol"
    classification: str = "Variant_Classification"
    sample: str = "Tumor_Sample_Barcode"


@dataclass(frozen=True)
class MafRecord:
    gene_symbol: str
    variant_classification: str
    sample_barcode: str


@dataclass
class ParseSummary:
    """Per-file accounting; data lines = records + malformed + comments
    (the header line itself is not counted)."""

    records: int = 0
    comments: int = 0
    malformed: int = 0
    malformed_lines: list[int] = field(default_factory=list)

    @property
    def total_lines(self) -> int:
        return self.records + self.comments + self.malformed


_MALFORMED_LINE_CAP = 20


def parse_maf(
    source: TextIO | Iterable[str], columns: MafColumns = MafColumns()
) -> tuple[list[MafRecord], ParseSummary]:
    """Parse one MAF-like TSV stream.

    Lines starting with '#' are comments. The first non-comment line is the
    header and must contain the three configured column names. Malformed
    data lines (wrong arity, empty required field) are counted and skipped
    with their line numbers, never fatal.
    """
    summary = ParseSummary()
    records: list[MafRecord] = []
    header_index: dict[str, int] | None = None
    min_fields = 0
    for line_no, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if line.startswith("#"):
            summary.comments += 1
            continue
        if header_index is None:
            names = line.split("\t")
            positions = {}
            for wanted in (columns.gene, columns.classification, columns.sample):
                try:
                    positions[wanted] = names.index(wanted)
                except ValueError:
                    raise MafFormatError(
                        f"required column {wanted!r} missing from header (line {line_no})"
                    ) from None
            header_index = positions
            min_fields = max(positions.values()) + 1
            continue
        if not line.strip():
            summary.malformed += 1
            if len(summary.malformed_lines) < _MALFORMED_LINE_CAP:
                summary.malformed_lines.append(line_no)
            continue
        fields = line.split("\t")
        if len(fields) < min_fields:
            summary.malformed += 1
            if len(summary.malformed_lines) < _MALFORMED_LINE_CAP:
                summary.malformed_lines.append(line_no)
            log.debug("skipping malformed line %d (%d fields)", line_no, len(fields))
            continue
        gene = fields[header_index[columns.gene]].strip()
        classification = fields[header_index[columns.classification]].strip()
        sample = fields[header_index[columns.sample]].strip()
        if not gene or not classification or not sample:
            summary.malformed += 1
            if len(summary.malformed_lines) < _MALFORMED_LINE_CAP:
                summary.malformed_lines.append(line_no)
            continue
        records.append(MafRecord(gene, classification, sample))
        summary.records += 1
    if header_index is None:
        raise MafFormatError("input contains no header line")
    return records, summary


def classify_tcga_barcode(barcode: str) -> Optional[str]:
    """TCGA sample-type rule: 4th barcode field starting 01-09 is tumor,
    10-14 is normal; anything else is unclassifiable."""
    parts = barcode.split("-")
    if len(parts) < 4 or len(parts[3]) < 2:
        return None
    code = parts[3][:2]
    if not code.isdigit():
        return None
    value = int(code)
    if 1 <= value <= 9:
        return TUMOR
    if 10 <= value <= 14:
        return NORMAL
    return None


def classifier_from_lists(
    tumor_samples: Iterable[str], normal_samples: Iterable[str]
) -> Callable[[str], Optional[str]]:
    """Two-file mode: explicit sample lists bypass barcode parsing entirely."""
    tumors = set(tumor_samples)
    normals = set(normal_samples)
    overlap = tumors & normals
    if overlap:
        raise ValueError(f"samples listed as both tumor and normal: {sorted(overlap)[:5]}")

    def classify(barcode: str) -> Optional[str]:
        if barcode in tumors:
            return TUMOR
        if barcode in normals:
            return NORMAL
        return None

    return classify


@dataclass
class CohortIntermediate:
    tumor_samples: list[str] = field(default_factory=list)
    normal_samples: list[str] = field(default_factory=list)
    gene_to_samples: dict[str, set[str]] = field(default_factory=dict)


@dataclass
class CohortSummary:
    kept: int = 0
    dropped_excluded: int = 0
    unclassified: int = 0


def build_cohort(
    records: Iterable[MafRecord],
    classify: Callable[[str], Optional[str]] = classify_tcga_barcode,
    exclude_classes: Iterable[str] = ("Silent",),
) -> tuple[CohortIntermediate, CohortSummary]:
    """Accumulate gene -> mutated-sample sets, splitting samples into tumor
    and normal by the classification rule. Records whose variant class is
    excluded (default: Silent, case-insensitive) are dropped, as are records
    with unclassifiable barcodes. Sample order is first appearance."""
    excluded = {c.lower() for c in exclude_classes}
    cohort = CohortIntermediate()
    summary = CohortSummary()
    seen_tumor: set[str] = set()
    seen_normal: set[str] = set()
    for record in records:
        if record.variant_classification.lower() in excluded:
            summary.dropped_excluded += 1
            continue
        kind = classify(record.sample_barcode)
        if kind is None:
            summary.unclassified += 1
            continue
        sample = record.sample_barcode
        if kind == TUMOR:
            if sample not in seen_tumor:
                seen_tumor.add(sample)
                cohort.tumor_samples.append(sample)
        else:
            if sample not in seen_normal:
                seen_normal.add(sample)
                cohort.normal_samples.append(sample)
        cohort.gene_to_samples.setdefault(record.gene_symbol, set()).add(sample)
        summary.kept += 1
    return cohort, summary


def pack_cohort(cohort: CohortIntermediate) -> tuple[MutationMatrix, GeneMap]:
    """Build the packed matrix: tumor columns first (in list order), then
    normals; one row per gene in name order, then sparsity-sorted."""
    if not cohort.tumor_samples:
        raise ValueError("cohort has no tumor samples")
    column = {s: i for i, s in enumerate(cohort.tumor_samples)}
    offset = len(cohort.tumor_samples)
    for i, s in enumerate(cohort.normal_samples):
        column[s] = offset + i
    width = len(column)
    genes = sorted(cohort.gene_to_samples)
    rows = []
    for gene in genes:
        bits = 0
        for sample in cohort.gene_to_samples[gene]:
            bits |= 1 << column[sample]
        rows.append(BitRow(width, bits))
    matrix = MutationMatrix(rows, len(cohort.tumor_samples), len(cohort.normal_samples), genes)
    return sort_by_sparsity(matrix)


def write_tumor_matrix(sink: TextIO, cohort: CohortIntermediate) -> None:
    """Header of tumor sample IDs, then 'gene<TAB>bit,bit,...' rows covering
    every gene of the cohort (zero rows included)."""
    sink.write("\t".join(cohort.tumor_samples) + "\n")
    for gene in sorted(cohort.gene_to_samples):
        samples = cohort.gene_to_samples[gene]
        bits = ",".join("1" if s in samples else "0" for s in cohort.tumor_samples)
        sink.write(f"{gene}\t{bits}\n")


def write_normal_list(sink: TextIO, cohort: CohortIntermediate) -> None:
    """'gene<TAB>sampleID' pairs for every normal-sample mutation."""
    normal_order = {s: i for i, s in enumerate(cohort.normal_samples)}
    for gene in sorted(cohort.gene_to_samples):
        in_gene = [s for s in cohort.gene_to_samples[gene] if s in normal_order]
        for sample in sorted(in_gene, key=normal_order.__getitem__):
            sink.write(f"{gene}\t{sample}\n")


def read_tumor_matrix(source: TextIO) -> tuple[list[str], dict[str, set[str]]]:
    lines = source.read().splitlines()
    if not lines:
        raise ValueError("tumor matrix file is empty")
    samples = [s for s in lines[0].split("\t") if s]
    gene_sets: dict[str, set[str]] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            gene, bit_text = line.split("\t", 1)
        except ValueError:
            raise ValueError(f"tumor matrix line {line_no}: expected 'gene<TAB>bits'") from None
        bits = bit_text.split(",") if bit_text else []
        if len(bits) != len(samples):
            raise ValueError(
                f"tumor matrix line {line_no}: {len(bits)} bits for {len(samples)} samples"
            )
        gene_sets[gene] = {samples[i] for i, b in enumerate(bits) if b == "1"}
    return samples, gene_sets


def read_normal_list(source: TextIO) -> tuple[list[str], dict[str, set[str]]]:
    samples: list[str] = []
    seen: set[str] = set()
    gene_sets: dict[str, set[str]] = {}
    for line_no, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        try:
            gene, sample = line.split("\t", 1)
        except ValueError:
            raise ValueError(f"normal list line {line_no}: expected 'gene<TAB>sample'") from None
        if sample not in seen:
            seen.add(sample)
            samples.append(sample)
        gene_sets.setdefault(gene, set()).add(sample)
    return samples, gene_sets


def cohort_from_intermediates(tumor_source: TextIO, normal_source: TextIO) -> CohortIntermediate:
    """Rebuild a cohort from the two intermediate files; this is the input
    side of the pack step."""
    tumor_samples, tumor_sets = read_tumor_matrix(tumor_source)
    normal_samples, normal_sets = read_normal_list(normal_source)
    cohort = CohortIntermediate(tumor_samples=tumor_samples, normal_samples=normal_samples)
    for gene, samples in tumor_sets.items():
        cohort.gene_to_samples.setdefault(gene, set()).update(samples)
    for gene, samples in normal_sets.items():
        cohort.gene_to_samples.setdefault(gene, set()).update(samples)
    return cohort
