"""Bit-exact persistence: tensor files, dataset manifests, chain output, PGM.

Tensor file layout (all little-endian):

    bytes 0-3   magic "BTEN"
    byte  4     version (1)
    byte  5     ndims
    bytes 6-7   zero padding
    then        ndims x uint32 dims
    then        product(dims) float64 payload

Within each trailing record the first index varies fastest; the leading
dimension is slowest, so a stack of n samples is ndims=4 with dims
(n, D1, D2, D3) and record i occupying payload slots [i*D1*D2*D3, ...).
"""

from __future__ import annotations

import csv
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    IncompleteChainError,
    ParameterError,
    ShapeError,
    TensorFormatError,
)
from .gibbs import ChainOutput
from .model import Hyperparams, ResponseSpec, Standardizer, UnfoldedDataset, default_tau
from .tensor import BlockShape, refold, unfold

__all__ = [
    "write_tensor",
    "read_tensor",
    "FitConfig",
    "write_manifest",
    "load_dataset",
    "save_dataset",
    "save_chain",
    "load_chain",
    "export_map",
    "write_pgm",
    "read_pgm",
]

_MAGIC = b"BTEN"
_VERSION = 1
_MAX_ELEMENTS = 1 << 40  # guards absurd headers before allocating

MARKER_NAME = "CHAIN_COMPLETE"


def write_tensor(path: str | Path, values: np.ndarray) -> None:
    """Write an array in the package tensor format (see module docstring)."""
    values = np.asarray(values, dtype=np.float64)
    dims = values.shape
    if any(d < 1 for d in dims) or values.ndim < 1 or values.ndim > 255:
        raise TensorFormatError(f"unwritable dims {dims}", code="dim-overflow")
    header = _MAGIC + struct.pack("<BBxx", _VERSION, values.ndim)
    header += struct.pack(f"<{values.ndim}I", *dims)
    # first index fastest within each trailing record, leading dim slowest:
    # for dims (m0, m1, ..., mk) record i is the F-order ravel of values[i]
    if values.ndim == 1:
        payload = values
    else:
        payload = np.stack(
            [values[i].ravel(order="F") for i in range(dims[0])]
        ).ravel()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.astype("<f8").tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor file; exact inverse of :func:`write_tensor`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise TensorFormatError(
            f"file is {len(raw)} bytes, smaller than the fixed header",
            code="truncated",
        )
    if raw[:4] != _MAGIC:
        raise TensorFormatError(f"bad magic {raw[:4]!r}", code="bad-magic")
    version, ndims = struct.unpack("<BB", raw[4:6])
    if version != _VERSION:
        raise TensorFormatError(f"unsupported version {version}", code="bad-version")
    if ndims < 1:
        raise TensorFormatError("ndims must be >= 1", code="bad-header")
    dim_end = 8 + 4 * ndims
    if len(raw) < dim_end:
        raise TensorFormatError(
            f"header truncated: expected {dim_end} bytes, file has {len(raw)}",
            code="truncated",
        )
    dims = struct.unpack(f"<{ndims}I", raw[8:dim_end])
    if any(d == 0 for d in dims):
        raise TensorFormatError(f"zero dimension in {dims}", code="dim-overflow")
    count = 1
    for d in dims:
        count *= d
        if count > _MAX_ELEMENTS:
            raise TensorFormatError(
                f"dims {dims} exceed element budget", code="dim-overflow"
            )
    expected = dim_end + 8 * count
    if len(raw) != expected:
        raise TensorFormatError(
            f"payload truncated: expected {expected} bytes total, got {len(raw)}",
            code="truncated",
        )
    flat = np.frombuffer(raw, dtype="<f8", offset=dim_end).astype(np.float64)
    if ndims == 1:
        return flat
    per = count // dims[0]
    return np.stack(
        [
            flat[i * per : (i + 1) * per].reshape(dims[1:], order="F")
            for i in range(dims[0])
        ]
    )


# ---------------------------------------------------------------------------
# Fit configuration and dataset manifests (JSON + CSV)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    p: tuple[int, int, int]
    d: tuple[int, int, int]
    rank: int = 2
    tpbn: tuple[tuple[float, float, float], ...] | None = None  # None: data-driven
    c0: float = 2.0
    c1: float = 1.0
    iterations: int = 1000
    burn_in: int = 500
    thin: int = 1
    seed: int = 0
    warmup: int = 50
    standardize: bool = True
    parallel: bool = False
    store_draws: bool = False

    @property
    def block_shape(self) -> BlockShape:
        return BlockShape(p=self.p, d=self.d)

    def hyperparams(self, q: int, n: int) -> Hyperparams:
        shape = self.block_shape
        tpbn = self.tpbn or (
            (0.5, 0.5, default_tau(q, n)),
            (0.5, 0.5, default_tau(shape.p_size, n)),
            (0.5, 0.5, default_tau(shape.d_size, n)),
        )
        return Hyperparams(
            rank=self.rank,
            tpbn=tpbn,
            c0=self.c0,
            c1=self.c1,
            iterations=self.iterations,
            burn_in=self.burn_in,
            thin=self.thin,
            seed=self.seed,
            warmup=self.warmup,
            store_draws=self.store_draws,
            parallel=self.parallel,
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "FitConfig":
        with open(path) as fh:
            doc = json.load(fh)
        tpbn = doc.get("tpbn")
        if tpbn is not None:
            tpbn = tuple(tuple(float(v) for v in triple) for triple in tpbn)
        return cls(
            p=tuple(doc["p"]),
            d=tuple(doc["d"]),
            rank=int(doc.get("rank", 2)),
            tpbn=tpbn,
            c0=float(doc.get("c0", 2.0)),
            c1=float(doc.get("c1", 1.0)),
            iterations=int(doc.get("iterations", 1000)),
            burn_in=int(doc.get("burn_in", 500)),
            thin=int(doc.get("thin", 1)),
            seed=int(doc.get("seed", 0)),
            warmup=int(doc.get("warmup", 50)),
            standardize=bool(doc.get("standardize", True)),
            parallel=bool(doc.get("parallel", False)),
            store_draws=bool(doc.get("store_draws", False)),
        )

    def to_json(self, path: str | Path) -> None:
        doc = {
            "p": list(self.p),
            "d": list(self.d),
            "rank": self.rank,
            "tpbn": None if self.tpbn is None else [list(t) for t in self.tpbn],
            "c0": self.c0,
            "c1": self.c1,
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seed": self.seed,
            "warmup": self.warmup,
            "standardize": self.standardize,
            "parallel": self.parallel,
            "store_draws": self.store_draws,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")


def _read_csv(path: Path, expected_rows: int) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    if len(rows) != expected_rows:
        raise ParameterError(
            f"{path.name}: expected {expected_rows} data rows, found {len(rows)}"
        )
    return header, np.asarray(rows, dtype=np.float64)


def _write_csv(path: Path, header: list[str], rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in np.atleast_2d(rows):
            writer.writerow([repr(float(v)) for v in row])


def write_manifest(
    out_dir: str | Path,
    xs_raw: np.ndarray,
    y: np.ndarray,
    specs: list[ResponseSpec],
    z: np.ndarray,
    standardizers: list[Standardizer | None] | None = None,
) -> Path:
    """Write tensors + CSVs + manifest.json for a dataset; returns the manifest
    path.  ``xs_raw`` is the (n, D1, D2, D3) stack before unfolding."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = xs_raw.shape[0]
    write_tensor(out / "tensors.bten", xs_raw)
    _write_csv(out / "responses.csv", [s.name for s in specs], y)
    _write_csv(
        out / "covariates.csv", [f"z{j}" for j in range(z.shape[0])], z.T
    )
    standardizers = standardizers or [None] * len(specs)
    manifest = {
        "n": int(n),
        "dims": list(xs_raw.shape[1:]),
        "tensor": "tensors.bten",
        "responses": [
            {"name": s.name, "kind": s.kind, "column": k}
            for k, s in enumerate(specs)
        ],
        "responses_table": "responses.csv",
        "covariates_table": "covariates.csv",
        "standardization": [
            None if st is None else {"response": specs[k].name, "mean": st.mean, "sd": st.sd}
            for k, st in enumerate(standardizers)
        ],
    }
    path = out / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


def load_dataset(manifest_path: str | Path, config: FitConfig) -> UnfoldedDataset:
    """Load and unfold a dataset under the config's block split.

    Continuous responses are standardized when the config asks for it and the
    manifest does not already record a standardization.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    with open(manifest_path) as fh:
        doc = json.load(fh)
    dims = tuple(int(v) for v in doc["dims"])
    if len(dims) != 3:
        raise ShapeError(f"manifest dims must have 3 entries, got {dims}")
    shape = config.block_shape
    shape.check_dims(dims)

    xs_raw = read_tensor(base / doc["tensor"])
    if xs_raw.ndim == 3:
        xs_raw = xs_raw[None]
    n = int(doc["n"])
    if xs_raw.shape != (n,) + dims:
        raise ShapeError(
            f"tensor file holds {xs_raw.shape}, manifest declares {(n,) + dims}"
        )
    header, y_all = _read_csv(base / doc["responses_table"], n)
    specs = []
    y = np.empty((n, len(doc["responses"])))
    standardizers: list[Standardizer | None] = []
    for k, resp in enumerate(doc["responses"]):
        specs.append(ResponseSpec(resp["name"], resp["kind"]))
        y[:, k] = y_all[:, int(resp["column"])]
        standardizers.append(None)
    for record in doc.get("standardization") or []:
        if record is None:
            continue
        idx = [s.name for s in specs].index(record["response"])
        standardizers[idx] = Standardizer(
            mean=float(record["mean"]), sd=float(record["sd"])
        )
    _, z_rows = _read_csv(base / doc["covariates_table"], n)
    if config.standardize:
        for k, spec in enumerate(specs):
            if spec.kind == "continuous" and standardizers[k] is None:
                st = Standardizer(
                    mean=float(y[:, k].mean()), sd=float(y[:, k].std() or 1.0)
                )
                y[:, k] = st.apply(y[:, k])
                standardizers[k] = st

    xs = np.stack([unfold(xs_raw[i], shape) for i in range(n)])
    return UnfoldedDataset(
        shape=shape,
        xs=xs,
        y=y,
        specs=specs,
        z=z_rows.T,
        dims=dims,
        standardizers=standardizers,
    )


def save_dataset(out_dir: str | Path, data: UnfoldedDataset) -> Path:
    """Persist a loaded dataset back to a manifest directory (refolds the
    unfolded samples first)."""
    xs_raw = np.stack([refold(data.xs[i], data.shape) for i in range(data.n)])
    return write_manifest(
        out_dir, xs_raw, data.y, data.specs, data.z, data.standardizers
    )


# ---------------------------------------------------------------------------
# Chain persistence
# ---------------------------------------------------------------------------


def save_chain(output: ChainOutput, out_dir: str | Path) -> None:
    """Write summaries (+ optional raw draws) and a terminal completion marker."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / MARKER_NAME
    if marker.exists():
        marker.unlink()
    shape = output.block_shape
    for k, name in enumerate(output.response_names):
        for tag, arr in (
            ("median", output.c_median[k]),
            ("q025", output.c_q025[k]),
            ("q975", output.c_q975[k]),
        ):
            write_tensor(out / f"c{k}_{tag}.bten", refold(arr, shape))
        if output.c_draws is not None:
            draws = output.c_draws[k]
            write_tensor(out / f"c{k}_draws.bten", draws)
    summary = {
        "kept": output.kept,
        "dims": list(output.dims),
        "p": list(shape.p),
        "d": list(shape.d),
        "responses": [
            {"name": n_, "kind": k_}
            for n_, k_ in zip(output.response_names, output.response_kinds)
        ],
        "gamma": {
            "median": output.gamma_median.tolist(),
            "q025": output.gamma_q025.tolist(),
            "q975": output.gamma_q975.tolist(),
        },
        "sigma": {
            "median": output.sigma_median.tolist(),
            "q025": output.sigma_q025.tolist(),
            "q975": output.sigma_q975.tolist(),
        },
        "standardization": [
            None if st is None else {"mean": st.mean, "sd": st.sd}
            for st in output.standardizers
        ],
        "diagnostics": output.diagnostics,
        "has_draws": output.c_draws is not None,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    marker.touch()


def load_chain(chain_dir: str | Path) -> ChainOutput:
    chain = Path(chain_dir)
    if not (chain / MARKER_NAME).exists():
        raise IncompleteChainError(
            f"{chain}: missing {MARKER_NAME} marker; the fit did not finish"
        )
    with open(chain / "summary.json") as fh:
        doc = json.load(fh)
    shape = BlockShape(p=tuple(doc["p"]), d=tuple(doc["d"]))
    names = [r["name"] for r in doc["responses"]]
    kinds = [r["kind"] for r in doc["responses"]]
    c_median, c_q025, c_q975, c_draws = [], [], [], []
    for k in range(len(names)):
        c_median.append(unfold(read_tensor(chain / f"c{k}_median.bten"), shape))
        c_q025.append(unfold(read_tensor(chain / f"c{k}_q025.bten"), shape))
        c_q975.append(unfold(read_tensor(chain / f"c{k}_q975.bten"), shape))
        if doc.get("has_draws"):
            c_draws.append(read_tensor(chain / f"c{k}_draws.bten"))
    return ChainOutput(
        kept=int(doc["kept"]),
        block_shape=shape,
        dims=tuple(doc["dims"]),
        response_names=names,
        response_kinds=kinds,
        c_median=c_median,
        c_q025=c_q025,
        c_q975=c_q975,
        gamma_median=np.asarray(doc["gamma"]["median"]),
        gamma_q025=np.asarray(doc["gamma"]["q025"]),
        gamma_q975=np.asarray(doc["gamma"]["q975"]),
        sigma_median=np.asarray(doc["sigma"]["median"]),
        sigma_q025=np.asarray(doc["sigma"]["q025"]),
        sigma_q975=np.asarray(doc["sigma"]["q975"]),
        standardizers=[
            None if st is None else Standardizer(mean=st["mean"], sd=st["sd"])
            for st in doc["standardization"]
        ],
        diagnostics=doc["diagnostics"],
        c_draws=c_draws if doc.get("has_draws") else None,
    )


# ---------------------------------------------------------------------------
# PGM (P5) import/export
# ---------------------------------------------------------------------------


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Binary P5 PGM, maxval 255; image entries must already be 0..255 ints."""
    image = np.asarray(image)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(image.astype(np.uint8).tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary P5 PGM into floats in [0, 1] (rows, cols)."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        # skip whitespace and '#' comment lines in the header
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise ParameterError(f"{path}: not a binary P5 PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ParameterError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    raster = np.frombuffer(data, dtype=np.uint8, offset=pos, count=w * h)
    if raster.size != w * h:
        raise ParameterError(f"{path}: raster truncated")
    return raster.reshape(h, w).astype(np.float64) / 255.0


def export_map(
    c: np.ndarray, axis: int, slice_index: int, path: str | Path
) -> None:
    """Export one |slice| of a 3-D coefficient tensor as a P5 PGM.

    Absolute values are mapped linearly from [0, max|slice|] to [0, 255];
    an all-zero slice produces an all-zero image.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 3 or axis not in (0, 1, 2):
        raise ShapeError("export_map needs a 3-D tensor and axis in {0,1,2}")
    if not (0 <= slice_index < c.shape[axis]):
        raise ShapeError(
            f"slice {slice_index} out of range for axis {axis} "
            f"(size {c.shape[axis]})"
        )
    sl = np.abs(np.take(c, slice_index, axis=axis))
    peak = sl.max()
    img = np.zeros_like(sl) if peak == 0 else sl / peak * 255.0
    write_pgm(path, np.round(img))
