"""CSV and model text formats, and the benchmark loader.

Data files hold one sample per row, comma-separated, with the 1-based class
label as the last column. An optional first line starting with ``#`` names
the columns. Numbers are written with 17 significant digits so that every
float64 survives a round trip.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import MissingFile, ParseError, UnknownDataset
from .types import Dataset, FlatModel, KernelSpec, validate_dataset

PathLike = Union[str, os.PathLike]
DATA_DIR_ENV = "MFPC_DATA_DIR"
BENCHMARKS = ("iris", "wine", "soybean")


def fmt(x: float) -> str:
    return "{:.17g}".format(float(x))


def _open_lines(path: PathLike) -> list[str]:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"no such file: {p}")
    return p.read_text(encoding="utf-8").splitlines()


def load_csv(path: PathLike, *, labeled: bool = True) -> Dataset:
    """Read a data file; the last column holds labels when ``labeled``."""
    lines = _open_lines(path)
    names: Optional[list[str]] = None
    rows: list[list[float]] = []
    width = None
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            if rows or names is not None:
                raise ParseError(f"{path}:{lineno}: header must be the first line")
            names = [c.strip() for c in s[1:].split(",")]
            continue
        cells = s.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(
                f"{path}:{lineno}: expected {width} fields, found {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    R = np.asarray(rows)
    if labeled:
        if R.shape[1] < 2:
            raise ParseError(f"{path}: need at least one feature besides the label")
        y = R[:, -1]
        if not np.all(y == np.round(y)):
            raise ParseError(f"{path}: label column holds non-integers")
        R, labels = R[:, :-1], y.astype(np.int64)
        if names is not None:
            names = names[:-1]
    else:
        labels = None
    if names is not None and len(names) != R.shape[1]:
        names = None
    return validate_dataset(R.T, labels, names)


def save_csv(path: PathLike, data: Dataset) -> None:
    out = []
    if data.feature_names is not None:
        cols = list(data.feature_names) + (["label"] if data.labels is not None else [])
        out.append("# " + ",".join(cols))
    X = data.features
    for j in range(data.n_samples):
        cells = [fmt(v) for v in X[:, j]]
        if data.labels is not None:
            cells.append(str(int(data.labels[j]) + 1))
        out.append(",".join(cells))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def load_labels(path: PathLike) -> np.ndarray:
    """Read a one-column (or last-column) file of 1-based labels; returns 0-based."""
    vals = []
    for lineno, line in enumerate(_open_lines(path), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            vals.append(int(s.split(",")[-1]))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: not an integer label") from None
    if not vals:
        raise ParseError(f"{path}: no labels")
    return np.asarray(vals, dtype=np.int64) - 1


def save_labels(path: PathLike, labels: Sequence[int]) -> None:
    Path(path).write_text("".join(f"{int(v) + 1}\n" for v in labels), encoding="utf-8")


def minmax_normalize(data: Dataset) -> Dataset:
    X = data.features
    lo = X.min(axis=1, keepdims=True)
    span = X.max(axis=1, keepdims=True) - lo
    span[span == 0] = 1.0
    return Dataset((X - lo) / span, data.labels, data.feature_names)


def _bundled(name: str) -> Optional[Dataset]:
    from sklearn import datasets as skd

    loader = {"iris": skd.load_iris, "wine": skd.load_wine}.get(name)
    if loader is None:
        return None
    b = loader()
    return Dataset(b.data.T, b.target, tuple(b.feature_names))


def load_benchmark(name: str, data_dir: Optional[PathLike] = None) -> Dataset:
    """Benchmark dataset with every feature scaled to ``[0, 1]``.

    ``<data_dir>/<name>.csv`` is used when present (``data_dir`` defaults to
    ``$MFPC_DATA_DIR``); Iris and Wine fall back to copies bundled with
    scikit-learn.
    """
    key = name.lower()
    if key not in BENCHMARKS:
        raise UnknownDataset(f"unknown benchmark {name!r}; choose one of {', '.join(BENCHMARKS)}")
    root = data_dir if data_dir is not None else os.environ.get(DATA_DIR_ENV)
    if root is not None and (Path(root) / f"{key}.csv").is_file():
        data = load_csv(Path(root) / f"{key}.csv")
    else:
        data = _bundled(key)
        if data is None:
            where = f" in {root}" if root is not None else f" (set {DATA_DIR_ENV})"
            raise MissingFile(f"{key}.csv not found{where}")
    return minmax_normalize(data)


# --- models ---------------------------------------------------------------

MODEL_MAGIC = "mfpc-model 1"


def _write_matrix(out: list[str], name: str, M: np.ndarray) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    out.append(f"matrix {name} {M.shape[0]} {M.shape[1]}")
    out.extend(" ".join(fmt(v) for v in row) for row in M)


def dump_model(
    matrices: dict[str, np.ndarray], header: dict[str, object], method: str
) -> str:
    """Text form: magic line, ``key=value`` header lines, then named matrices."""
    out = [MODEL_MAGIC, f"method={method}"]
    out.extend(f"{k}={'' if v is None else v}" for k, v in header.items())
    for name, M in matrices.items():
        _write_matrix(out, name, M)
    return "\n".join(out) + "\n"


def parse_model(text: str) -> tuple[str, dict[str, str], dict[str, np.ndarray]]:
    lines = text.splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise ParseError("not a model file")
    header: dict[str, str] = {}
    mats: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("matrix "):
            try:
                _, name, r, c = line.split()
                r, c = int(r), int(c)
                rows = [[float(v) for v in lines[i + 1 + a].split()] for a in range(r)]
            except (ValueError, IndexError):
                raise ParseError(f"model line {i + 1}: malformed matrix block") from None
            M = np.asarray(rows, dtype=np.float64).reshape(r, c)
            mats[name] = M
            i += 1 + r
            continue
        if "=" not in line:
            raise ParseError(f"model line {i + 1}: expected key=value")
        k, v = line.split("=", 1)
        header[k] = v
        i += 1
    method = header.pop("method", "")
    return method, header, mats


def save_flat_model(path: PathLike, model: FlatModel, header: dict[str, object]) -> None:
    mats = {f"W{i + 1}": model.W[i] for i in range(model.k)}
    mats["center_projection"] = model.center_projection
    if model.reduced_basis is not None:
        mats["reduced_basis"] = model.reduced_basis
    head = {
        "k": model.k,
        "kernel": model.kernel.kind,
        "mu": model.kernel.mu,
        "reduced_size": model.kernel.reduced_size,
        "tol_orth": fmt(model.tol_orth),
        **header,
    }
    Path(path).write_text(dump_model(mats, head, "mfpc"), encoding="utf-8")


def load_flat_model(path: PathLike) -> FlatModel:
    method, head, mats = parse_model("\n".join(_open_lines(path)))
    if method != "mfpc":
        raise ParseError(f"expected an mfpc model, found {method!r}")
    try:
        k = int(head["k"])
        W = np.stack([mats[f"W{i + 1}"] for i in range(k)])
        kind = head.get("kernel", "linear")
        mu = float(head["mu"]) if head.get("mu") else None
        rs = int(head["reduced_size"]) if head.get("reduced_size") else None
        kernel = KernelSpec(kind, mu, rs)
        return FlatModel(
            W,
            mats["center_projection"].reshape(k, -1),
            kernel,
            mats.get("reduced_basis"),
            tol_orth=float(head.get("tol_orth", 1e-6)),
        )
    except KeyError as exc:
        raise ParseError(f"model file lacks {exc.args[0]!r}") from None
