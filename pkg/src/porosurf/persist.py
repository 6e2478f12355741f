"""Dataset and checkpoint persistence: JSON manifests plus raw float64 matrices.

Every matrix is stored row-major as little-endian IEEE-754 64-bit floats in
its own file, described in the manifest by (name, file, rows, cols, dtype,
byte_offset, sha256).  Checksums are verified on load, so a round-trip is
bit-exact by construction.  Wall-clock timings live in a separate
``timings.json`` and are deliberately excluded from the deterministic
contract; everything else a run writes is a pure function of (spec, seeds).
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidInput
from .neuralnet import MLP, OptimizerConfig
from .operator import DeepONetModel

FORMAT_VERSION = 1
DTYPE = "<f8"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def spec_hash(spec_dict: dict) -> str:
    return hashlib.sha256(canonical_json(spec_dict).encode()).hexdigest()


def write_json(path: Path, obj) -> None:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: Path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt JSON in {path}: {exc}") from exc


def write_matrix(directory: Path, name: str, arr: np.ndarray) -> dict:
    """Write one matrix file and return its manifest descriptor."""
    a = np.atleast_2d(np.asarray(arr, dtype=np.dtype(DTYPE)))
    if a.ndim != 2:
        raise InvalidInput(f"matrix {name!r} must be 2-d")
    data = np.ascontiguousarray(a).tobytes()
    fname = f"{name}.bin"
    (Path(directory) / fname).write_bytes(data)
    return {
        "name": name,
        "file": fname,
        "rows": int(a.shape[0]),
        "cols": int(a.shape[1]),
        "dtype": DTYPE,
        "byte_offset": 0,
        "sha256": hashlib.sha256(data).hexdigest(),
    }


def read_matrix(directory: Path, desc: dict, verify: bool = True) -> np.ndarray:
    path = Path(directory) / desc["file"]
    if not path.exists():
        raise DataError(f"missing matrix file {path}")
    raw = path.read_bytes()[desc["byte_offset"]:]
    expected = desc["rows"] * desc["cols"] * 8
    if len(raw) < expected:
        raise DataError(f"matrix file {path} truncated")
    raw = raw[:expected]
    if verify and hashlib.sha256(raw).hexdigest() != desc["sha256"]:
        raise DataError(f"checksum mismatch for {desc['name']} in {directory}")
    return np.frombuffer(raw, dtype=np.dtype(DTYPE)).reshape(
        desc["rows"], desc["cols"]).copy()


def _descriptor_map(manifest: dict) -> dict:
    return {d["name"]: d for d in manifest["matrices"]}


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

class DatasetDir:
    """Loaded view of a generated dataset directory."""

    def __init__(self, path, manifest, xi, coords, fields, kl_arrays):
        self.path = Path(path)
        self.manifest = manifest
        self.xi = xi                  # (N_total, m_data)
        self.coords = coords          # (m_y, 3)
        self.fields = fields          # {variable: (N_total, m_y)}
        self.kl_arrays = kl_arrays    # dict of K-L matrices

    @property
    def n_train(self) -> int:
        return self.manifest["n_train"]

    @property
    def n_test(self) -> int:
        return self.manifest["n_test"]

    @property
    def variables(self) -> list:
        return list(self.manifest["variables"])

    def train_split(self, variable: str):
        n = self.n_train
        return self.xi[:n], self.fields[variable][:n]

    def test_split(self, variable: str):
        n = self.n_train
        return self.xi[n:], self.fields[variable][n:]


def save_dataset(directory, spec_dict: dict, seed: int, generator_id: str,
                 xi: np.ndarray, coords: np.ndarray, fields: dict,
                 kl_arrays: dict, scale_set: dict, extra: dict | None = None) -> dict:
    """Write a complete dataset directory and return its manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    descs = [write_matrix(directory, "xi", xi),
             write_matrix(directory, "coords", coords)]
    for var, F in sorted(fields.items()):
        descs.append(write_matrix(directory, f"f_{var.replace('_', '')}", F))
    for name, arr in sorted(kl_arrays.items()):
        descs.append(write_matrix(directory, name, arr))
    manifest = {
        "format_version": FORMAT_VERSION,
        "artifact": "dataset",
        "spec": spec_dict,
        "spec_sha256": spec_hash(spec_dict),
        "seed": int(seed),
        "generator": generator_id,
        "n_train": int(spec_dict["n_train"]),
        "n_test": int(spec_dict["n_test"]),
        "variables": sorted(fields),
        "scale_set": scale_set,
        "matrices": descs,
    }
    if extra:
        manifest.update(extra)
    write_json(directory / "manifest.json", manifest)
    return manifest


def load_dataset(directory) -> DatasetDir:
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    if manifest.get("artifact") != "dataset":
        raise DataError(f"{directory} does not hold a dataset")
    dm = _descriptor_map(manifest)
    xi = read_matrix(directory, dm["xi"])
    coords = read_matrix(directory, dm["coords"])
    fields = {}
    for var in manifest["variables"]:
        key = f"f_{var.replace('_', '')}"
        fields[var] = read_matrix(directory, dm[key])
    kl_arrays = {name: read_matrix(directory, d) for name, d in dm.items()
                 if name.startswith("kl_")}
    return DatasetDir(directory, manifest, xi, coords, fields, kl_arrays)


# ---------------------------------------------------------------------------
# Model checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(directory, model: DeepONetModel, trunk_opt: OptimizerConfig,
                    branch_opt: OptimizerConfig, dataset_manifest: dict,
                    a_matrix: np.ndarray, b_star: np.ndarray, r_matrix: np.ndarray,
                    curves: list, extra: dict | None = None) -> dict:
    """Persist a trained model with enough state to re-verify the two-step identity."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    descs = []
    for prefix, net in (("trunk", model.trunk), ("branch", model.branch)):
        for i, (W, b) in enumerate(zip(net.weights, net.biases)):
            descs.append(write_matrix(directory, f"{prefix}_w{i}", W))
            descs.append(write_matrix(directory, f"{prefix}_b{i}", b[None, :]))
    descs.append(write_matrix(directory, "r_inv_t", model.r_inv_t))
    descs.append(write_matrix(directory, "r_matrix", r_matrix))
    descs.append(write_matrix(directory, "a_matrix", a_matrix))
    descs.append(write_matrix(directory, "b_star", b_star))
    descs.append(write_matrix(directory, "coord_bounds",
                              np.vstack([model.coord_min, model.coord_max])))
    manifest = {
        "format_version": FORMAT_VERSION,
        "artifact": "checkpoint",
        "variable": model.variable,
        "K": int(model.K),
        "M": int(model.M),
        "trunk_widths": list(model.trunk.widths),
        "branch_widths": list(model.branch.widths),
        "trunk_optimizer": trunk_opt.to_dict(),
        "branch_optimizer": branch_opt.to_dict(),
        "dataset_spec_sha256": dataset_manifest["spec_sha256"],
        "dataset_seed": dataset_manifest["seed"],
        "scale_set": dataset_manifest.get("scale_set"),
        "matrices": descs,
    }
    if extra:
        manifest.update(extra)
    write_json(directory / "manifest.json", manifest)
    lines = ["phase,iteration,loss"]
    lines += [f"{ph},{it},{loss:.17g}" for ph, it, loss in curves]
    (directory / "training_curve.csv").write_text("\n".join(lines) + "\n")
    return manifest


def _load_net(directory, manifest, prefix: str, widths) -> MLP:
    dm = _descriptor_map(manifest)
    weights, biases = [], []
    for i in range(len(widths) - 1):
        weights.append(read_matrix(directory, dm[f"{prefix}_w{i}"]))
        biases.append(read_matrix(directory, dm[f"{prefix}_b{i}"]).ravel())
    return MLP(widths, weights, biases)


def load_checkpoint(directory):
    """Returns (model, manifest, arrays) with arrays holding A, B*, R."""
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    if manifest.get("artifact") != "checkpoint":
        raise DataError(f"{directory} does not hold a model checkpoint")
    dm = _descriptor_map(manifest)
    trunk = _load_net(directory, manifest, "trunk", tuple(manifest["trunk_widths"]))
    branch = _load_net(directory, manifest, "branch", tuple(manifest["branch_widths"]))
    bounds = read_matrix(directory, dm["coord_bounds"])
    model = DeepONetModel(
        branch=branch, trunk=trunk,
        r_inv_t=read_matrix(directory, dm["r_inv_t"]),
        K=manifest["K"], M=manifest["M"], variable=manifest["variable"],
        coord_min=bounds[0], coord_max=bounds[1],
    )
    arrays = {
        "a_matrix": read_matrix(directory, dm["a_matrix"]),
        "b_star": read_matrix(directory, dm["b_star"]),
        "r_matrix": read_matrix(directory, dm["r_matrix"]),
    }
    return model, manifest, arrays


# ---------------------------------------------------------------------------
# Timings (excluded from the bitwise determinism contract)
# ---------------------------------------------------------------------------

def write_timings(directory, timings: dict) -> None:
    write_json(Path(directory) / "timings.json", timings)


def read_timings(directory) -> dict:
    path = Path(directory) / "timings.json"
    return read_json(path) if path.exists() else {}


def ensure_writable(directory) -> Path:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        probe = directory / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {directory} is not writable: {exc}") from exc
    return directory
