"""Small numpy network: conv/dense layers with hand-written backward passes.

Tensors are plain float64 ``numpy`` arrays. A :class:`Model` owns a flat
``params`` dict (name -> array) and a matching ``grads`` dict; layers keep
the intermediates of the last train-mode forward pass for ``backward``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

WEIGHTS_FORMAT = "surrolab-weights/1"

ACTIVATIONS = ("linear", "tanh", "softplus")


class ShapeMismatch(ValueError):
    pass


class CorruptContainer(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int = 0
    kernel: int = 3
    activation: str = "linear"
    dropout: float = 0.0
    bias: bool = True

    def __post_init__(self):
        if self.kind not in ("conv2d", "flatten", "dense"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        if self.kind == "conv2d" and self.kernel % 2 != 1:
            raise ValueError("same padding needs an odd kernel")


@dataclass(frozen=True)
class ModelArch:
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.output_dim() != 1:
            raise ValueError("architecture must end in a single output")

    def output_dim(self) -> int:
        shape = self.input_shape
        for spec in self.layers:
            if spec.kind == "conv2d":
                shape = (spec.units, *shape[1:])
            elif spec.kind == "flatten":
                shape = (int(np.prod(shape)),)
            else:
                if len(shape) != 1:
                    raise ValueError("dense layer needs a flat input")
                shape = (spec.units,)
        if len(shape) != 1:
            raise ValueError("architecture output is not flat")
        return shape[0]

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [asdict(s) for s in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelArch":
        return cls(tuple(d["input_shape"]), tuple(LayerSpec(**s) for s in d["layers"]))


def surrogate_arch(levels: int, height: int, width: int, dropout: float = 0.2) -> ModelArch:
    """Conv(16, 3x3, tanh) -> Dense(32, softplus) -> Dense(64, tanh) -> Dense(1)."""
    return ModelArch(
        (levels, height, width),
        (
            LayerSpec("conv2d", 16, 3, "tanh", dropout),
            LayerSpec("flatten"),
            LayerSpec("dense", 32, activation="softplus", dropout=dropout),
            LayerSpec("dense", 64, activation="tanh", dropout=dropout),
            LayerSpec("dense", 1),
        ),
    )


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Conv2D:
    """Stride-1, zero same-padded 2D convolution; levels are input channels.

    Input is (n, C, H, W); output feature maps are channels-last (n, H, W, F).
    """

    def __init__(self, name, in_channels, filters, kernel, bias=True):
        self.name = name
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = kernel
        self.bias = bias
        self.cols = None

    def param_shapes(self):
        shapes = {f"{self.name}.weight": (self.filters, self.in_channels, self.kernel, self.kernel)}
        if self.bias:
            shapes[f"{self.name}.bias"] = (self.filters,)
        return shapes

    def fans(self):
        k2 = self.kernel * self.kernel
        return self.in_channels * k2, self.filters * k2

    def forward(self, x, params, keep):
        n, c, h, w = x.shape
        p = self.kernel // 2
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(xp, (self.kernel, self.kernel), axis=(2, 3))
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, -1)
        wmat = params[f"{self.name}.weight"].reshape(self.filters, -1)
        out = cols @ wmat.T
        if self.bias:
            out += params[f"{self.name}.bias"]
        if keep:
            self.cols = cols
            self.in_shape = x.shape
        return out.reshape(n, h, w, self.filters)

    def backward(self, g, params, grads, need_input_grad=True):
        n, c, h, w = self.in_shape
        gm = g.reshape(-1, self.filters)
        weight = params[f"{self.name}.weight"]
        grads[f"{self.name}.weight"] = (gm.T @ self.cols).reshape(weight.shape)
        if self.bias:
            grads[f"{self.name}.bias"] = gm.sum(axis=0)
        if not need_input_grad:
            return None
        k = self.kernel
        p = k // 2
        dcols = (gm @ weight.reshape(self.filters, -1)).reshape(n, h, w, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + h, j : j + w] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p : p + h, p : p + w]


class Dense:
    def __init__(self, name, fan_in, units, bias=True):
        self.name = name
        self.fan_in = fan_in
        self.units = units
        self.bias = bias
        self.x = None

    def param_shapes(self):
        shapes = {f"{self.name}.weight": (self.fan_in, self.units)}
        if self.bias:
            shapes[f"{self.name}.bias"] = (self.units,)
        return shapes

    def fans(self):
        return self.fan_in, self.units

    def forward(self, x, params, keep):
        out = x @ params[f"{self.name}.weight"]
        if self.bias:
            out = out + params[f"{self.name}.bias"]
        if keep:
            self.x = x
        return out

    def backward(self, g, params, grads, need_input_grad=True):
        grads[f"{self.name}.weight"] = self.x.T @ g
        if self.bias:
            grads[f"{self.name}.bias"] = g.sum(axis=0)
        if not need_input_grad:
            return None
        return g @ params[f"{self.name}.weight"].T


class Flatten:
    def param_shapes(self):
        return {}

    def forward(self, x, params, keep):
        self.in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g, params, grads, need_input_grad=True):
        return g.reshape(self.in_shape)


class Activation:
    def __init__(self, kind):
        self.kind = kind

    def param_shapes(self):
        return {}

    def forward(self, x, params, keep):
        if self.kind == "tanh":
            y = np.tanh(x)
        elif self.kind == "softplus":
            y = np.logaddexp(0.0, x)
        else:
            y = x
        if keep:
            self.x, self.y = x, y
        return y

    def backward(self, g, params, grads, need_input_grad=True):
        if self.kind == "tanh":
            return g * (1.0 - self.y**2)
        if self.kind == "softplus":
            return g * _sigmoid(self.x)
        return g


class Dropout:
    """Inverted dropout: kept units scaled by 1/(1-rate) in training only."""

    def __init__(self, rate):
        self.rate = rate
        self.mask = None

    def param_shapes(self):
        return {}

    def forward(self, x, params, keep, rng=None):
        if rng is None:
            return x
        self.mask = rng.random(x.shape, dtype=np.float32) >= self.rate
        return x * self.mask * (1.0 / (1.0 - self.rate))

    def backward(self, g, params, grads, need_input_grad=True):
        return g * self.mask * (1.0 / (1.0 - self.rate))


def _build_layers(arch: ModelArch):
    layers = []
    shape = arch.input_shape
    for i, spec in enumerate(arch.layers):
        if spec.kind == "conv2d":
            layers.append(Conv2D(f"conv{i}", shape[0], spec.units, spec.kernel, spec.bias))
            shape = (spec.units, *shape[1:])
        elif spec.kind == "flatten":
            layers.append(Flatten())
            shape = (int(np.prod(shape)),)
            continue
        else:
            layers.append(Dense(f"dense{i}", shape[0], spec.units, spec.bias))
            shape = (spec.units,)
        if spec.activation != "linear":
            layers.append(Activation(spec.activation))
        if spec.dropout > 0:
            layers.append(Dropout(spec.dropout))
    return layers


def arch_param_shapes(arch: ModelArch) -> dict[str, tuple]:
    shapes = {}
    for layer in _build_layers(arch):
        shapes.update(layer.param_shapes())
    return shapes


class BackwardWithoutForward(RuntimeError):
    pass


@dataclass(eq=False)
class Model:
    arch: ModelArch
    params: dict[str, np.ndarray]
    init_seed: int = 0
    grads: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.layers = _build_layers(self.arch)
        expected = self.param_shapes()
        for name, shape in expected.items():
            if name not in self.params:
                raise ShapeMismatch(f"missing parameter {name}")
            if tuple(self.params[name].shape) != shape:
                raise ShapeMismatch(
                    f"parameter {name} has shape {tuple(self.params[name].shape)}, arch expects {shape}"
                )
        extra = set(self.params) - set(expected)
        if extra:
            raise ShapeMismatch(f"unexpected parameters {sorted(extra)}")
        self.params = {k: np.asarray(self.params[k], dtype=np.float64) for k in expected}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._ready = False

    def param_shapes(self) -> dict[str, tuple]:
        shapes = {}
        for layer in self.layers:
            shapes.update(layer.param_shapes())
        return shapes

    def forward(self, x, train: bool = False, dropout_seed: int | None = None) -> np.ndarray:
        """Predictions of shape (n, 1).

        ``train=True`` samples dropout masks from ``dropout_seed`` and keeps
        intermediates for :meth:`backward`; eval mode is dropout-free.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.arch.input_shape:
            raise ShapeMismatch(f"batch shape {x.shape[1:]} != model input {self.arch.input_shape}")
        rng = np.random.default_rng(dropout_seed) if train else None
        for layer in self.layers:
            if isinstance(layer, Dropout):
                x = layer.forward(x, self.params, train, rng)
            else:
                x = layer.forward(x, self.params, train)
        self._ready = train
        return x

    __call__ = forward

    def backward(self, upstream, need_input_grad: bool = False):
        """Fill ``grads`` from d(loss)/d(prediction); returns d(loss)/d(input) on request."""
        if not self._ready:
            raise BackwardWithoutForward("backward needs a preceding train-mode forward pass")
        g = np.asarray(upstream, dtype=np.float64)
        last = len(self.layers) - 1
        for idx in range(last, -1, -1):
            first = idx == 0
            g = self.layers[idx].backward(g, self.params, self.grads, need_input_grad or not first)
        return g

    def predict(self, x, batch_size: int = 512) -> np.ndarray:
        x = np.asarray(x)
        out = [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out)[:, 0] if out else np.empty(0)

    def copy(self) -> "Model":
        return Model(self.arch, {k: v.copy() for k, v in self.params.items()}, self.init_seed)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.params.values()])

    def weight_hash(self) -> str:
        h = hashlib.sha256()
        for name, v in self.params.items():
            h.update(name.encode())
            h.update(v.astype("<f8").tobytes())
        return h.hexdigest()


def init_model(arch: ModelArch, seed: int = 0) -> Model:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for layer in _build_layers(arch):
        for name, shape in layer.param_shapes().items():
            if name.endswith(".bias"):
                params[name] = np.zeros(shape)
            else:
                fan_in, fan_out = layer.fans()
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                params[name] = rng.uniform(-bound, bound, size=shape)
    return Model(arch, params, seed)


def _stem(path) -> Path:
    path = Path(path)
    return path.with_suffix("") if path.suffix in (".json", ".bin") else path


def save_weights(model: Model, path) -> tuple[Path, Path]:
    """Write ``<stem>.json`` (manifest) and ``<stem>.bin`` (little-endian f8 values)."""
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    blob = b"".join(v.astype("<f8").tobytes() for v in model.params.values())
    manifest = {
        "format": WEIGHTS_FORMAT,
        "arch": model.arch.to_dict(),
        "init_seed": int(model.init_seed),
        "params": [{"name": k, "shape": list(v.shape)} for k, v in model.params.items()],
        "blob": stem.name + ".bin",
        "checksum": {"algorithm": "sha256", "value": hashlib.sha256(blob).hexdigest()},
    }
    json_path, bin_path = stem.with_suffix(".json"), stem.with_suffix(".bin")
    bin_path.write_bytes(blob)
    json_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return json_path, bin_path


def read_weights_manifest(path) -> dict:
    return json.loads(_stem(path).with_suffix(".json").read_text(encoding="utf-8"))


def load_weights(arch: ModelArch | None, path) -> Model:
    """Load a weight container; ``arch=None`` takes the stored architecture."""
    stem = _stem(path)
    manifest = read_weights_manifest(stem)
    if manifest.get("format") != WEIGHTS_FORMAT:
        raise CorruptContainer(f"unknown weights format {manifest.get('format')!r}")
    blob = (stem.parent / manifest["blob"]).read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["checksum"]["value"]:
        raise CorruptContainer(f"checksum mismatch in {stem}.bin")
    if arch is None:
        arch = ModelArch.from_dict(manifest["arch"])
    shapes = arch_param_shapes(arch)
    params = {}
    offset = 0
    for entry in manifest["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in shapes:
            raise ShapeMismatch(f"stored parameter {name} not in architecture")
        if shapes[name] != shape:
            raise ShapeMismatch(f"parameter {name}: stored shape {shape}, arch expects {shapes[name]}")
        count = int(np.prod(shape))
        params[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += 8 * count
    if offset != len(blob):
        raise CorruptContainer("blob length does not match manifest")
    return Model(arch, params, manifest.get("init_seed", 0))
