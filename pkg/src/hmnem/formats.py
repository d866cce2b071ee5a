"""Plain-text file formats for datasets, networks, traces, and run configs.

Matrix files are CSV with ``#`` comment lines carrying metadata and
``[t=k]`` lines separating the per-timepoint blocks::

    # hmnem-dataset 1
    # n: 3
    # mode: binary
    # columns: 0:0,1:0,2:0
    [t=0]
    0,1,0
    ...

Floats are written with ``repr`` so every file round-trips exactly. Traces
are JSON lines: one header record followed by one record per iteration.
Configs and manifests are YAML; validation errors name the offending line.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
import yaml

from .graph import Network
from .likelihood import BINARY, PROBABILITY, EffectDataset

__all__ = [
    "FormatError",
    "ConfigError",
    "TraceFile",
    "provenance_lines",
    "write_dataset",
    "read_dataset",
    "write_matrices",
    "read_matrices",
    "write_networks",
    "read_networks",
    "write_attachments",
    "read_attachments",
    "write_trace",
    "read_trace",
    "write_long_table",
    "config_hash",
    "file_sha256",
    "load_config",
    "validate_config",
    "dump_yaml",
]

DATASET_MAGIC = "hmnem-dataset 1"


class FormatError(ValueError):
    """Malformed input file; the message starts with ``path:line``."""

    def __init__(self, path, line: int | None, message: str):
        self.path, self.line = str(path), line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


class ConfigError(FormatError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def provenance_lines(provenance: dict | None) -> list[str]:
    if not provenance:
        return []
    return [f"# {k}: {provenance[k]}" for k in sorted(provenance)]


def _write_lines(path, lines: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def _split_blocks(path, lines):
    """Return ``(meta, blocks)``; ``blocks`` is a list of ``(t, [(lineno, text), ...])``."""
    meta, blocks = {}, []
    for no, raw in enumerate(lines, 1):
        s = raw.strip()
        if not s:
            continue
        if s.startswith("#"):
            body = s[1:].strip()
            if ":" in body:
                k, v = body.split(":", 1)
                meta[k.strip()] = (v.strip(), no)
            else:
                meta[body] = ("", no)
            continue
        if s.startswith("[t=") and s.endswith("]"):
            try:
                t = int(s[3:-1])
            except ValueError:
                raise FormatError(path, no, f"bad timepoint marker {s!r}") from None
            if t != len(blocks):
                raise FormatError(path, no, f"expected timepoint {len(blocks)}, found {t}")
            blocks.append((t, []))
            continue
        if not blocks:
            raise FormatError(path, no, "data row before the first [t=k] marker")
        blocks[-1][1].append((no, s))
    return meta, blocks


def _parse_matrix(path, rows, parse: Callable[[str], Any], n_cols: int | None = None):
    out = []
    for no, text in rows:
        cells = text.split(",")
        if n_cols is not None and len(cells) != n_cols:
            raise FormatError(path, no, f"expected {n_cols} values, found {len(cells)}")
        try:
            out.append([parse(c.strip()) for c in cells])
        except ValueError as exc:
            raise FormatError(path, no, str(exc)) from None
        if n_cols is None:
            n_cols = len(cells)
    return out


def _meta(path, meta, key, conv, default=None):
    if key not in meta:
        if default is not None:
            return default
        raise FormatError(path, None, f"missing header field {key!r}")
    value, no = meta[key]
    try:
        return conv(value)
    except ValueError:
        raise FormatError(path, no, f"bad value for {key!r}: {value!r}") from None


def _parse_bit(s: str) -> int:
    if s not in ("0", "1"):
        raise ValueError(f"expected 0 or 1, found {s!r}")
    return int(s)


def _parse_prob(s: str) -> float:
    v = float(s)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"probability {s} outside [0, 1]")
    return v


def _int_list(s: str) -> tuple:
    return tuple(int(x) for x in s.split(",")) if s else ()


def _columns(s: str) -> tuple:
    out = []
    for item in s.split(","):
        p, r = item.split(":")
        out.append((int(p), int(r)))
    return tuple(out)


# --- datasets ---------------------------------------------------------------

def write_dataset(path, datasets: Sequence[EffectDataset], provenance: dict | None = None) -> None:
    """Write a time series of datasets sharing ``n``, columns, mode, and rates."""
    if not datasets:
        raise ValueError("nothing to write")
    first = datasets[0]
    for ds in datasets[1:]:
        if (ds.n, ds.mode, ds.columns, ds.targets, ds.alpha, ds.beta, ds.data.shape) != (
                first.n, first.mode, first.columns, first.targets, first.alpha, first.beta, first.data.shape):
            raise ValueError("all timepoints must share n, mode, rates, columns, and shape")
    lines = [f"# {DATASET_MAGIC}",
             f"# n: {first.n}", f"# m: {first.m}", f"# T: {len(datasets)}",
             f"# mode: {first.mode}", f"# alpha: {first.alpha!r}", f"# beta: {first.beta!r}",
             "# targets: " + ",".join(map(str, first.targets)),
             "# columns: " + ",".join(f"{p}:{r}" for p, r in first.columns)]
    if first.reporter_names is not None:
        lines.append("# reporters: " + ",".join(first.reporter_names))
    lines += provenance_lines(provenance)
    for t, ds in enumerate(datasets):
        lines.append(f"[t={t}]")
        # store the raw values; clamping happens again on load
        lines += [",".join(_fmt(x) for x in row) for row in ds.data]
    _write_lines(path, lines)


def read_dataset(path, attachments=None) -> list[EffectDataset]:
    lines = _read_lines(path)
    if not lines or lines[0].strip() != f"# {DATASET_MAGIC}":
        raise FormatError(path, 1, f"not a dataset file (expected '# {DATASET_MAGIC}')")
    meta, blocks = _split_blocks(path, lines)
    n = _meta(path, meta, "n", int)
    m = _meta(path, meta, "m", int)
    T = _meta(path, meta, "T", int)
    mode = _meta(path, meta, "mode", str)
    if mode not in (BINARY, PROBABILITY):
        raise FormatError(path, meta["mode"][1], f"unknown mode {mode!r}")
    alpha = _meta(path, meta, "alpha", float)
    beta = _meta(path, meta, "beta", float)
    targets = _meta(path, meta, "targets", _int_list)
    columns = _meta(path, meta, "columns", _columns)
    names = meta.get("reporters")
    names = tuple(names[0].split(",")) if names else None
    if len(blocks) != T:
        raise FormatError(path, None, f"header says T={T} but {len(blocks)} timepoint blocks found")
    parse = _parse_bit if mode == BINARY else _parse_prob
    out = []
    for t, rows in blocks:
        if len(rows) != m:
            line = rows[-1][0] if rows else None
            raise FormatError(path, line, f"timepoint {t} has {len(rows)} rows, expected m={m}")
        mat = np.array(_parse_matrix(path, rows, parse, len(columns)),
                       dtype=np.uint8 if mode == BINARY else np.float64).reshape(m, len(columns))
        try:
            out.append(EffectDataset(mat, n, columns, mode, alpha, beta, attachments, targets, names))
        except ValueError as exc:
            raise FormatError(path, None, str(exc)) from None
    return out


# --- matrices and networks --------------------------------------------------

def write_matrices(path, mats, provenance: dict | None = None) -> None:
    """Stacked ``[t=k]`` CSV blocks of a ``(T, r, c)`` array."""
    mats = np.asarray(mats)
    lines = provenance_lines(provenance)
    for t in range(mats.shape[0]):
        lines.append(f"[t={t}]")
        lines += [",".join(_fmt(x) for x in row) for row in mats[t]]
    _write_lines(path, lines)


def read_matrices(path) -> np.ndarray:
    meta, blocks = _split_blocks(path, _read_lines(path))
    if not blocks:
        raise FormatError(path, None, "no [t=k] blocks")
    mats = []
    for t, rows in blocks:
        if not rows:
            raise FormatError(path, None, f"timepoint {t} is empty")
        mats.append(_parse_matrix(path, rows, float))
        if np.shape(mats[-1]) != np.shape(mats[0]):
            raise FormatError(path, rows[0][0], f"timepoint {t} shape {np.shape(mats[-1])} differs from "
                              f"{np.shape(mats[0])}")
    return np.array(mats, dtype=float)


def write_networks(path, networks: Sequence[Network], provenance: dict | None = None) -> None:
    write_matrices(path, np.array([g.to_array() for g in networks], dtype=np.int64), provenance)


def read_networks(path) -> list[Network]:
    mats = read_matrices(path)
    if mats.shape[1] != mats.shape[2]:
        raise FormatError(path, None, f"adjacency blocks must be square, got {mats.shape[1:]}")
    if not np.isin(mats, (0.0, 1.0)).all():
        raise FormatError(path, None, "adjacency entries must be 0 or 1")
    try:
        return [Network.from_array(m.astype(np.uint8)) for m in mats]
    except ValueError as exc:
        raise FormatError(path, None, str(exc)) from None


def write_attachments(path, attachments, provenance: dict | None = None) -> None:
    lines = provenance_lines(provenance) + ["reporter,component"]
    lines += [f"{i},{int(c)}" for i, c in enumerate(attachments)]
    _write_lines(path, lines)


def read_attachments(path) -> np.ndarray:
    rows = [(no, s.strip()) for no, s in enumerate(_read_lines(path), 1)
            if s.strip() and not s.lstrip().startswith("#")]
    if not rows or rows[0][1].replace(" ", "") != "reporter,component":
        raise FormatError(path, rows[0][0] if rows else None, "expected header 'reporter,component'")
    out = []
    for no, s in rows[1:]:
        try:
            i, c = (int(x) for x in s.split(","))
        except ValueError:
            raise FormatError(path, no, f"expected 'reporter,component' integers, found {s!r}") from None
        if i != len(out):
            raise FormatError(path, no, f"expected reporter {len(out)}, found {i}")
        out.append(c)
    if not out:
        raise FormatError(path, None, "no attachments listed")
    return np.array(out, dtype=np.int64)


def write_long_table(path, header: Sequence[str], rows, provenance: dict | None = None) -> None:
    lines = provenance_lines(provenance) + [",".join(header)]
    lines += [",".join(x if isinstance(x, str) else _fmt(x) for x in row) for row in rows]
    _write_lines(path, lines)


# --- traces -----------------------------------------------------------------

@dataclass
class TraceFile:
    header: dict
    lambdas: np.ndarray
    log_joint: np.ndarray
    kappa_accept: np.ndarray

    @property
    def burn_in(self) -> int:
        return int(self.header.get("burn_in", 0))


def write_trace(path, trace, header: dict) -> None:
    lines = [json.dumps({"record": "header", **header}, sort_keys=True)]
    for i, (lam, lj, acc) in enumerate(zip(trace.lambdas, trace.log_joint, trace.kappa_accept), 1):
        lines.append(json.dumps({"iteration": i, "lambda": float(lam), "log_joint": float(lj),
                                 "kappa_accept": bool(acc)}, sort_keys=True))
    _write_lines(path, lines)


def read_trace(path) -> TraceFile:
    lines = _read_lines(path)
    header, lam, lj, acc = None, [], [], []
    for no, raw in enumerate(lines, 1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FormatError(path, no, f"invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise FormatError(path, no, "expected a JSON object")
        if rec.get("record") == "header":
            if header is not None or lam:
                raise FormatError(path, no, "header record must come first and only once")
            header = rec
            continue
        try:
            if rec["iteration"] != len(lam) + 1:
                raise FormatError(path, no, f"expected iteration {len(lam) + 1}, found {rec['iteration']}")
            lam.append(float(rec["lambda"]))
            lj.append(float(rec["log_joint"]))
            acc.append(bool(rec["kappa_accept"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(path, no, f"malformed trace record ({exc})") from None
    if not lam:
        raise FormatError(path, len(lines) or 1, "trace contains no iteration records")
    return TraceFile(header or {}, np.array(lam), np.array(lj), np.array(acc, dtype=bool))


# --- configs and manifests --------------------------------------------------

def config_hash(config: dict) -> str:
    """Short sha256 of the canonical JSON form of a resolved config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def dump_yaml(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True, default_flow_style=False)


@dataclass(frozen=True)
class _Field:
    kind: tuple
    check: Callable[[Any], bool] | None = None
    hint: str = ""
    nullable: bool = False


def _f(kind, check=None, hint="", nullable=False):
    return _Field(kind if isinstance(kind, tuple) else (kind,), check, hint, nullable)


_pos = (lambda v: v >= 1, "must be >= 1")
_nonneg = (lambda v: v >= 0, "must be >= 0")
_unit_open = (lambda v: 0.0 < v < 1.0, "must lie in (0, 1)")
_rate = (lambda v: 0.0 <= v <= 1.0, "must lie in [0, 1]")

SCHEMA: dict[str, Any] = {
    "command": _f(str, lambda v: v in ("simulate", "infer", "diagnose", "summarize"),
                  "must be one of simulate, infer, diagnose, summarize"),
    "seed": _f(int, lambda v: 0 <= v < 2**64, "must be an unsigned 64-bit integer"),
    "chains": _f(int, *_pos),
    "workers": _f(int, *_pos),
    "config_hash": _f(str),
    "simulation": {
        "n": _f(int, lambda v: 2 <= v <= 64, "must lie in 2..64"),
        "T": _f(int, *_pos),
        "n_r": _f(int, *_pos),
        "n_p": _f(int, *_pos),
        "alpha": _f(float, *_rate),
        "beta": _f(float, *_rate),
        "lambda_true": _f(float, *_unit_open),
        "initial_flip_fraction": _f(float, *_rate),
    },
    "sampler": {
        "iterations": _f(int, *_pos),
        "burn_in": _f(int, *_nonneg),
        "sigma": _f(float, lambda v: v > 0, "must be > 0"),
        "lambda_init": _f(float, *_unit_open),
        "init": _f(str, lambda v: v in ("greedy", "empty"), "must be 'greedy' or 'empty'"),
        "thin": _f(int, *_nonneg),
        "fix_lambda": _f(bool),
    },
    "infer": {
        "dataset": _f(str, nullable=True),
        "attachments": _f(str, nullable=True),
        "mode": _f(str, lambda v: v in (BINARY, PROBABILITY), "must be 'binary' or 'probability'",
                   nullable=True),
        "alpha": _f(float, *_unit_open, nullable=True),
        "beta": _f(float, *_unit_open, nullable=True),
        "cutoff": _f(float, *_rate),
        "truth": _f(str, nullable=True),
    },
    "diagnose": {
        "traces": _f(list),
        "burn_in": _f(int, *_nonneg, nullable=True),
        "coverage": _f(float, *_unit_open),
        "window": _f(int, lambda v: v >= 2, "must be >= 2", nullable=True),
        "stride": _f(int, *_pos, nullable=True),
    },
    "summarize": {
        "expected": _f(str, nullable=True),
        "truth": _f(str, nullable=True),
        "cutoff": _f(float, *_rate),
    },
    "inputs": _f(dict),
    "outputs": _f(list),
}


def _line_index(node, prefix=(), out=None) -> dict:
    """Map key paths to 1-based line numbers of their keys."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = prefix + (k.value,)
            out[key] = k.start_mark.line + 1
            _line_index(v, key, out)
    return out


def _type_ok(value, kind: tuple) -> bool:
    for k in kind:
        if k is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return True
        if k is int and isinstance(value, int) and not isinstance(value, bool):
            return True
        if k not in (int, float) and isinstance(value, k):
            return True
    return False


def validate_config(doc, path="<config>", lines: dict | None = None) -> dict:
    """Check ``doc`` against :data:`SCHEMA`; raise :class:`ConfigError` at the offending line."""
    lines = lines or {}

    def fail(key, msg):
        line = None
        for i in range(len(key), 0, -1):
            if key[:i] in lines:
                line = lines[key[:i]]
                break
        raise ConfigError(path, line, f"{'.'.join(key)}: {msg}" if key else msg)

    if doc is None:
        return {}
    if not isinstance(doc, dict):
        fail((), "top level must be a mapping")

    def walk(d, schema, prefix):
        for k, v in d.items():
            key = prefix + (str(k),)
            if k not in schema:
                fail(key, f"unknown key (expected one of {', '.join(sorted(schema))})")
            spec = schema[k]
            if isinstance(spec, dict):
                if not isinstance(v, dict):
                    fail(key, "must be a mapping")
                walk(v, spec, key)
                continue
            if v is None:
                if not spec.nullable:
                    fail(key, "must not be empty")
                continue
            if not _type_ok(v, spec.kind):
                fail(key, f"expected {'/'.join(t.__name__ for t in spec.kind)}, got {type(v).__name__}")
            if spec.check is not None and not spec.check(v):
                fail(key, f"{spec.hint}, got {v!r}")

    walk(doc, SCHEMA, ())
    s = doc.get("sampler", {})
    if "burn_in" in s and "iterations" in s and s["burn_in"] >= s["iterations"]:
        fail(("sampler", "burn_in"), f"must be < iterations ({s['iterations']}), got {s['burn_in']}")
    traces = doc.get("diagnose", {}).get("traces")
    if traces is not None and not all(isinstance(p, str) for p in traces):
        fail(("diagnose", "traces"), "must be a list of paths")
    return doc


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        node = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(path, mark.line + 1 if mark else None, f"invalid YAML: {getattr(exc, 'problem', exc)}") \
            from None
    return validate_config(doc, path, _line_index(node) if node is not None else {})
