"""Readers and writers for the on-disk dataset formats.

Formats:
  * edge list: UTF-8 TSV ``src<TAB>dst<TAB>relation_id``; ``#`` comments
    and blank lines are ignored; relation_id may be omitted (defaults 0).
  * features: CSV ``node_id,f0,f1,...`` (optional header), or binary:
    magic ``IGF1``, u64-LE rows, u64-LE cols, rows*cols float32-LE
    row-major.
  * labels: CSV ``node_id,label,split`` with split in
    {train,val,test,unlabeled}; an optional fourth column marks synthetic
    nodes (0/1).

Node ids and class labels are read as strings; dense remapping happens in
the dataset loader, not here.
"""

import csv
import struct
from pathlib import Path

import numpy as np

from .graphcore import SPLIT_CODES, SPLIT_NAMES

FEATURE_MAGIC = b"IGF1"


class ParseError(ValueError):
    """A dataset file failed to parse; message carries path and line number."""


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def read_edges_tsv(path) -> list:
    """Parse an edge TSV into (src_id, dst_id, relation_id) string/int triples."""
    edges = []
    for lineno, line in _data_lines(path):
        fields = line.split("\t")
        if len(fields) not in (2, 3):
            raise ParseError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields, got {len(fields)}")
        rel = 0
        if len(fields) == 3:
            try:
                rel = int(fields[2])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: relation id {fields[2]!r} is not an integer") from None
        edges.append((fields[0], fields[1], rel))
    return edges


def read_features_csv(path):
    """Parse a feature CSV into (node_ids, float64 matrix).

    The first row is treated as a header when its feature fields do not
    parse as numbers.
    """
    ids, rows = [], []
    width = None
    for lineno, line in _data_lines(path):
        fields = next(csv.reader([line]))
        if len(fields) < 2:
            raise ParseError(f"{path}:{lineno}: expected node_id plus at least one feature column")
        try:
            values = [float(v) for v in fields[1:]]
        except ValueError:
            if lineno == 1:
                continue  # header row
            raise ParseError(f"{path}:{lineno}: non-numeric feature value") from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ParseError(f"{path}:{lineno}: row has {len(values)} features, expected {width}")
        ids.append(fields[0])
        rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no feature rows found")
    return ids, np.asarray(rows, dtype=np.float64)


def write_features_csv(path, node_ids, values: np.ndarray) -> None:
    values = np.asarray(values)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id"] + [f"f{j}" for j in range(values.shape[1])])
        for node_id, row in zip(node_ids, values):
            writer.writerow([node_id] + [repr(float(v)) for v in row])


def read_features_binary(path) -> np.ndarray:
    """Read the IGF1 binary feature block as a float64 matrix."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise ParseError(f"{path}: truncated header")
        rows, cols = struct.unpack("<QQ", header)
        payload = fh.read(rows * cols * 4)
        if len(payload) != rows * cols * 4:
            raise ParseError(f"{path}: truncated payload, expected {rows}x{cols} float32")
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    return data.astype(np.float64)


def write_features_binary(path, values: np.ndarray) -> None:
    """Write a feature matrix as an IGF1 block (float32 storage)."""
    values = np.ascontiguousarray(values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<QQ", values.shape[0], values.shape[1]))
        fh.write(values.tobytes())


def read_labels_csv(path):
    """Parse a label CSV into (node_ids, label_strings, split_codes, synthetic).

    Rows are ``node_id,label,split`` with an optional trailing synthetic
    flag (0/1). A first row whose split field is not a known tag is
    treated as a header.
    """
    ids, label_strs, splits, synthetic = [], [], [], []
    seen = set()
    for lineno, line in _data_lines(path):
        fields = next(csv.reader([line]))
        if len(fields) not in (3, 4):
            raise ParseError(f"{path}:{lineno}: expected node_id,label,split[,synthetic]")
        split_name = fields[2].strip().lower()
        if split_name not in SPLIT_CODES:
            if lineno == 1:
                continue  # header row
            raise ParseError(
                f"{path}:{lineno}: unknown split tag {fields[2]!r} (want train/val/test/unlabeled)"
            )
        if fields[0] in seen:
            raise ParseError(f"{path}:{lineno}: duplicate label row for node {fields[0]!r}")
        seen.add(fields[0])
        flag = False
        if len(fields) == 4:
            if fields[3] not in ("0", "1"):
                raise ParseError(f"{path}:{lineno}: synthetic flag must be 0 or 1")
            flag = fields[3] == "1"
        ids.append(fields[0])
        label_strs.append(fields[1])
        splits.append(SPLIT_CODES[split_name])
        synthetic.append(flag)
    if not ids:
        raise ParseError(f"{path}: no label rows found")
    return ids, label_strs, np.asarray(splits, dtype=np.int8), np.asarray(synthetic, dtype=bool)


def write_labels_csv(path, node_ids, label_names, split_codes, synthetic=None) -> None:
    split_codes = np.asarray(split_codes)
    if synthetic is None:
        synthetic = np.zeros(len(node_ids), dtype=bool)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "label", "split", "synthetic"])
        for node_id, label, code, flag in zip(node_ids, label_names, split_codes, synthetic):
            writer.writerow([node_id, label, SPLIT_NAMES[int(code)], int(flag)])


def write_edges_tsv(path, edges) -> None:
    """Write (src, dst, relation_id) triples as TSV."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# src\tdst\trelation_id\n")
        for src, dst, rel in edges:
            fh.write(f"{src}\t{dst}\t{rel}\n")


def write_node_mapping(path, node_ids) -> None:
    """Persist the dense-id ordering: line i holds the original id of node i."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dense_id", "node_id"])
        for i, node_id in enumerate(node_ids):
            writer.writerow([i, node_id])
