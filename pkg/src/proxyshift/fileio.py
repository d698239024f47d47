"""File schemas: dataset CSV, dimension sidecar, model JSON, results output.

All category indices are 1-based in files and 0-based in memory.  Dataset
rows use the literal ``T`` as the domain of target records, whose ``x`` and
``y`` fields must be empty.  Dimensions travel in a sidecar (or explicit
flags) rather than being inferred from data, so categories that happen to be
unobserved remain representable.  Every write is atomic
(write-temp-then-rename) and numbers round-trip at full precision.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .categorical import CategorySpec
from .errors import DatasetFormatError
from .scm import MISSING, TARGET, Dataset, ScmSpec

DATASET_HEADER = "domain,w,x,y"


def atomic_write_text(path, text: str) -> None:
    """Write a file atomically: temp file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def dims_to_dict(dims: CategorySpec) -> dict:
    out = {"k_e": dims.k_e, "k_u": dims.k_u, "k_w": dims.k_w,
           "k_x": dims.k_x, "k_y": dims.k_y}
    for axis in ("e", "u", "w", "x", "y"):
        labels = getattr(dims, f"labels_{axis}")
        if labels is not None:
            out[f"labels_{axis}"] = list(labels)
    return out


def dims_from_dict(d: dict) -> CategorySpec:
    try:
        return CategorySpec(
            k_e=int(d["k_e"]), k_u=int(d["k_u"]), k_w=int(d["k_w"]),
            k_x=int(d["k_x"]), k_y=int(d["k_y"]),
            **{f"labels_{a}": tuple(d[f"labels_{a}"]) if f"labels_{a}" in d else None
               for a in ("e", "u", "w", "x", "y")})
    except KeyError as exc:
        raise DatasetFormatError(f"dims file is missing key {exc}") from exc


def save_dims(dims: CategorySpec, path) -> None:
    write_json(path, dims_to_dict(dims))


def load_dims(path) -> CategorySpec:
    with open(path) as handle:
        return dims_from_dict(json.load(handle))


def save_dataset(ds: Dataset, path) -> None:
    """Write records as CSV; target rows carry empty x/y fields.

    Benchmark-only hidden target columns are not part of the schema and are
    not written.
    """
    lines = [DATASET_HEADER]
    for dom, w, x, y in zip(ds.domain, ds.w, ds.x, ds.y):
        if dom == TARGET:
            lines.append(f"T,{w + 1},,")
        else:
            lines.append(f"{dom + 1},{w + 1},{x + 1},{y + 1}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_dataset(path, dims: CategorySpec) -> Dataset:
    """Parse a dataset CSV against declared dimensions.

    Errors name the offending 1-based line: malformed rows, target rows
    carrying x/y, source rows missing them, and out-of-range indices.
    """
    domain, w, x, y = [], [], [], []
    with open(path) as handle:
        lines = handle.read().splitlines()
    if not lines or lines[0].strip() != DATASET_HEADER:
        raise DatasetFormatError(
            f"line 1: expected header {DATASET_HEADER!r}, got {lines[0].strip()!r}"
            if lines else "empty dataset file")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 4:
            raise DatasetFormatError(f"line {lineno}: expected 4 fields, got {len(cells)}")
        dom_s, w_s, x_s, y_s = (c.strip() for c in cells)
        try:
            wi = int(w_s) - 1
        except ValueError:
            raise DatasetFormatError(f"line {lineno}: bad w index {w_s!r}") from None
        if not 0 <= wi < dims.k_w:
            raise DatasetFormatError(f"line {lineno}: w index {w_s} out of range 1..{dims.k_w}")
        if dom_s == "T":
            if x_s or y_s:
                raise DatasetFormatError(f"line {lineno}: target row carries x/y values")
            domain.append(TARGET)
            x.append(MISSING)
            y.append(MISSING)
        else:
            try:
                dom = int(dom_s) - 1
            except ValueError:
                raise DatasetFormatError(f"line {lineno}: bad domain {dom_s!r}") from None
            if not 0 <= dom < dims.k_e:
                raise DatasetFormatError(
                    f"line {lineno}: domain {dom_s} out of range 1..{dims.k_e} (or 'T')")
            if not x_s or not y_s:
                raise DatasetFormatError(f"line {lineno}: source row missing x or y")
            try:
                xi, yi = int(x_s) - 1, int(y_s) - 1
            except ValueError:
                raise DatasetFormatError(f"line {lineno}: bad x/y index") from None
            if not 0 <= xi < dims.k_x:
                raise DatasetFormatError(f"line {lineno}: x index {x_s} out of range 1..{dims.k_x}")
            if not 0 <= yi < dims.k_y:
                raise DatasetFormatError(f"line {lineno}: y index {y_s} out of range 1..{dims.k_y}")
            domain.append(dom)
            x.append(xi)
            y.append(yi)
        w.append(wi)
    return Dataset(dims, np.array(domain, dtype=np.int64), np.array(w, dtype=np.int64),
                   np.array(x, dtype=np.int64), np.array(y, dtype=np.int64))


def _columns(matrix: np.ndarray) -> list[list[float]]:
    return [matrix[:, j].tolist() for j in range(matrix.shape[1])]


def _from_columns(cols, rows: int, cols_n: int, name: str) -> np.ndarray:
    arr = np.array(cols, dtype=float)
    if arr.shape != (cols_n, rows):
        raise DatasetFormatError(
            f"{name}: expected {cols_n} columns of length {rows}, got shape {arr.shape}")
    return arr.T


def model_to_dict(spec: ScmSpec) -> dict:
    """Model as JSON-ready nested lists; matrices are stored column-major
    (a list of conditional pmfs)."""
    d = spec.dims
    return {
        "dims": dims_to_dict(d),
        "p_u_given_e": _columns(spec.p_u_given_e),
        "q_u": spec.q_u.tolist(),
        "p_w_given_u": _columns(spec.p_w_given_u),
        "p_x_given_u": _columns(spec.p_x_given_u),
        # indexed [u][w][x] -> pmf over y
        "p_y_given_uwx": np.moveaxis(spec.p_y_given_uwx, 0, -1).tolist(),
        "domain_prior": spec.domain_prior.tolist(),
    }


def model_from_dict(doc: dict) -> ScmSpec:
    try:
        dims = dims_from_dict(doc["dims"])
        p_u_given_e = _from_columns(doc["p_u_given_e"], dims.k_u, dims.k_e, "p_u_given_e")
        q_u = np.array(doc["q_u"], dtype=float)
        p_w_given_u = _from_columns(doc["p_w_given_u"], dims.k_w, dims.k_u, "p_w_given_u")
        p_x_given_u = _from_columns(doc["p_x_given_u"], dims.k_x, dims.k_u, "p_x_given_u")
        y_arr = np.array(doc["p_y_given_uwx"], dtype=float)
        if y_arr.shape != (dims.k_u, dims.k_w, dims.k_x, dims.k_y):
            raise DatasetFormatError(
                f"p_y_given_uwx: expected shape {(dims.k_u, dims.k_w, dims.k_x, dims.k_y)}, "
                f"got {y_arr.shape}")
        p_y_given_uwx = np.moveaxis(y_arr, -1, 0)
        domain_prior = np.array(doc["domain_prior"], dtype=float)
    except KeyError as exc:
        raise DatasetFormatError(f"model file is missing key {exc}") from exc
    return ScmSpec(dims, p_u_given_e, q_u, p_w_given_u, p_x_given_u,
                   p_y_given_uwx, domain_prior)


def save_model(spec: ScmSpec, path) -> None:
    write_json(path, model_to_dict(spec))


def load_model(path) -> ScmSpec:
    with open(path) as handle:
        return model_from_dict(json.load(handle))


def write_records_csv(records, path) -> None:
    from .bench import CSV_HEADER  # local import to keep the module graph acyclic
    lines = [CSV_HEADER] + [r.to_csv_row() for r in records]
    atomic_write_text(path, "\n".join(lines) + "\n")
