"""Bias-free multilayer perceptrons with a row-per-data-point convention.

Layer ``i`` maps activations ``X^(i-1)`` (m x N_{i-1}) to
``X^(i) = rho(X^(i-1) @ W^(i))``.  Biases are folded into the weights: the
input gets a constant-one coordinate and every hidden layer carries that
coordinate forward (see :func:`fold_biases`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import ShapeError, as_matrix, read_mat1, relu, write_mat1
from .rng import derive_stream

ACTIVATIONS = ("relu", "identity")
MANIFEST_VERSION = 1


class ManifestError(ValueError):
    pass


def activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return relu(z)
    if kind == "identity":
        return z
    raise ValueError(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class MlpModel:
    layers: list[np.ndarray]
    activation: str = "relu"
    K: float = 1.0
    strict_bound: bool = False
    input_bias: bool = False  # append a ones column to the input before layer 1

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if not self.layers:
            raise ValueError("a model needs at least one layer")
        for i in range(len(self.layers) - 1):
            if self.layers[i].shape[1] != self.layers[i + 1].shape[0]:
                raise ShapeError(
                    f"layer {i + 1} has {self.layers[i].shape[1]} outputs but layer {i + 2} "
                    f"expects {self.layers[i + 1].shape[0]} inputs"
                )
        if self.strict_bound:
            for i, W in enumerate(self.layers, start=1):
                if np.max(np.abs(W)) >= self.K:
                    raise ValueError(f"layer {i} violates the strict weight bound |W| < K = {self.K}")

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].shape[0]] + [W.shape[1] for W in self.layers]

    @property
    def input_dim(self) -> int:
        return self.layers[0].shape[0] - (1 if self.input_bias else 0)

    def prepare_input(self, X) -> np.ndarray:
        X = as_matrix(X, name="X")
        if X.shape[1] != self.input_dim:
            raise ShapeError(f"input has {X.shape[1]} columns, model expects {self.input_dim}")
        if self.input_bias:
            X = np.hstack([X, np.ones((X.shape[0], 1))])
        return X


def forward(net: MlpModel, X) -> list[np.ndarray]:
    """Activation stack ``[X^(0), X^(1), ..., X^(L)]``; ``X^(0)`` is the (bias-augmented) input."""
    acts = [net.prepare_input(X)]
    for W in net.layers:
        acts.append(activate(acts[-1] @ W, net.activation))
    return acts


def init_random_mlp(dims: list[int], K: float = 1.0, seed: int = 0, activation: str = "relu") -> MlpModel:
    """Weights i.i.d. uniform on the open interval (-K, K), layer ``i`` from stream ``(seed, i, 0)``."""
    if len(dims) < 2:
        raise ValueError("dims needs at least an input and an output size")
    layers = []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]), start=1):
        r = derive_stream(seed, i, 0).uniform((a, b))
        W = K * (2.0 * r - 1.0)
        # r == 0 would give exactly -K
        W = np.where(W <= -K, np.nextafter(-K, 0.0), W)
        layers.append(W)
    return MlpModel(layers=layers, activation=activation, K=K, strict_bound=True)


def fold_biases(weights: list[np.ndarray], biases: list[np.ndarray], activation: str = "relu", K: float = 1.0) -> MlpModel:
    """Fold biases into the weight matrices.

    The input is extended by a constant 1; each hidden layer gains one extra
    output unit that copies that constant (weight 1, which relu and identity
    both preserve) so the next layer can use it for its bias row.
    """
    if len(weights) != len(biases):
        raise ValueError("need one bias per layer")
    L = len(weights)
    folded = []
    for i, (W, b) in enumerate(zip(weights, biases), start=1):
        W = as_matrix(W, name=f"W{i}")
        b = np.asarray(b, dtype=np.float64).reshape(1, -1)
        if b.shape[1] != W.shape[1]:
            raise ShapeError(f"layer {i}: bias length {b.shape[1]} != {W.shape[1]} outputs")
        A = np.vstack([W, b])
        if i < L:
            carry = np.zeros((A.shape[0], 1))
            carry[-1, 0] = 1.0
            A = np.hstack([A, carry])
        folded.append(A)
    return MlpModel(layers=folded, activation=activation, K=K, input_bias=True)


def save_model(net: MlpModel, manifest_path: str | Path) -> None:
    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    stem = manifest_path.stem
    names = []
    for i, W in enumerate(net.layers, start=1):
        name = f"{stem}_layer{i}.mat1"
        write_mat1(manifest_path.parent / name, W)
        names.append(name)
    manifest = {"version": MANIFEST_VERSION, "activation": net.activation, "K": float(net.K), "layers": names}
    if net.input_bias:
        manifest["input_bias"] = True
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")


def load_model(manifest_path: str | Path, *, strict_bound: bool = False) -> MlpModel:
    """Read a manifest plus its MAT1 layer files (paths relative to the manifest).

    An optional ``biases`` list of 1 x N_i MAT1 files is folded in with
    :func:`fold_biases`.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{manifest_path}: invalid JSON ({exc})") from exc
    if not isinstance(manifest, dict):
        raise ManifestError(f"{manifest_path}: manifest must be a JSON object")
    if manifest.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"{manifest_path}: unsupported version {manifest.get('version')!r}")
    for key in ("activation", "K", "layers"):
        if key not in manifest:
            raise ManifestError(f"{manifest_path}: missing field {key!r}")
    if manifest["activation"] not in ACTIVATIONS:
        raise ManifestError(f"{manifest_path}: unknown activation {manifest['activation']!r}")
    K = manifest["K"]
    if not isinstance(K, (int, float)) or not K > 0:
        raise ManifestError(f"{manifest_path}: K must be a positive number")
    files = manifest["layers"]
    if not isinstance(files, list) or not files:
        raise ManifestError(f"{manifest_path}: 'layers' must be a non-empty list")
    base = manifest_path.parent
    layers = [read_mat1(base / f) for f in files]
    for i in range(len(layers) - 1):
        if layers[i].shape[1] != layers[i + 1].shape[0]:
            raise ManifestError(
                f"{manifest_path}: dimension chain broken between layer {i + 1} {layers[i].shape} "
                f"and layer {i + 2} {layers[i + 1].shape}"
            )
    if "biases" in manifest:
        biases = [read_mat1(base / f) for f in manifest["biases"]]
        net = fold_biases(layers, biases, manifest["activation"], float(K))
    else:
        net = MlpModel(layers=layers, activation=manifest["activation"], K=float(K),
                       input_bias=bool(manifest.get("input_bias", False)))
    if strict_bound:
        return MlpModel(layers=net.layers, activation=net.activation, K=net.K, strict_bound=True,
                        input_bias=net.input_bias)
    return net
