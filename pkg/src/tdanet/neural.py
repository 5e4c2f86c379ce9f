"""Minimal from-scratch neural engine for the two-stream classifiers.

Dense, 3x3 same-padding convolution, 2x2 max pooling, relu, softmax
cross-entropy, reverse-mode gradients and Adam/SGD, all in numpy. Four
architecture builders cover the base CNN and the three fused variants.
Training runs in single or double precision; gradient checking requires
double.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Conv2d",
    "MaxPool2",
    "Dense",
    "Relu",
    "Flatten",
    "NetworkSpec",
    "TrainConfig",
    "TrainingError",
    "ModelFormatError",
    "build_network",
    "init_params",
    "forward",
    "loss_and_grads",
    "predict",
    "train",
    "grad_check",
    "save_model",
    "load_model",
    "param_count",
]

VARIANTS = ("base", "tda1", "tda12", "tda123")


class TrainingError(RuntimeError):
    pass


class ModelFormatError(RuntimeError):
    pass


@dataclass(frozen=True)
class Conv2d:
    channels: int
    kernel: int = 3


@dataclass(frozen=True)
class MaxPool2:
    pass


@dataclass(frozen=True)
class Dense:
    width: int


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Conv2d | MaxPool2 | Dense | Relu | Flatten


@dataclass(frozen=True)
class NetworkSpec:
    """Two-stream architecture description.

    The deep stream consumes the raw image, the topological stream the
    Betti curve; their outputs (plus the raw curve when inject_curve is
    set) are concatenated and fed to the fusion layers. The final fusion
    layer's output goes through softmax over the 2 classes.
    """

    variant: str
    image_side: int
    curve_len: int
    deep_stream: tuple[LayerSpec, ...]
    topo_stream: tuple[LayerSpec, ...]
    fusion: tuple[LayerSpec, ...]
    inject_curve: bool = False

    @property
    def uses_image(self) -> bool:
        return len(self.deep_stream) > 0

    @property
    def uses_curve(self) -> bool:
        return len(self.topo_stream) > 0 or self.inject_curve

    def layers(self) -> tuple[LayerSpec, ...]:
        return self.deep_stream + self.topo_stream + self.fusion


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 16
    optimizer: str = "adam"
    seed: int = 0
    precision: str = "single"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.precision not in ("single", "double"):
            raise ValueError(f"unknown precision {self.precision!r}")

    @property
    def dtype(self):
        return np.float64 if self.precision == "double" else np.float32


def build_network(variant: str, image_side: int, curve_len: int,
                  conv_channels=(16, 32, 64, 64), deep_head=64,
                  topo_widths=(64, 32), fusion_width=32) -> NetworkSpec:
    """Construct one of the four architectures.

    base: conv stack -> dense head -> classifier. tda1: dense net on the
    curve only. tda12: both streams fused by concatenation. tda123:
    tda12 plus the raw curve injected at the fusion point.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant != "tda1" and (image_side < 16 or image_side % 16 != 0):
        raise ValueError(
            f"image_side must be >= 16 and divisible by 16 (four pooling stages), got {image_side}"
        )
    if curve_len < 1:
        raise ValueError(f"curve_len must be >= 1, got {curve_len}")

    conv_stack: list[LayerSpec] = []
    for ch in conv_channels:
        conv_stack += [Conv2d(ch), Relu(), MaxPool2()]
    deep = tuple(conv_stack + [Flatten(), Dense(deep_head), Relu()])
    topo = tuple(
        layer for w in topo_widths for layer in (Dense(w), Relu())
    )
    classifier = (Dense(2),)

    if variant == "base":
        return NetworkSpec(variant, image_side, curve_len, deep, (), classifier)
    if variant == "tda1":
        return NetworkSpec(variant, image_side, curve_len, (), topo, classifier)
    fusion = (Dense(fusion_width), Relu()) + classifier
    inject = variant == "tda123"
    return NetworkSpec(variant, image_side, curve_len, deep, topo, fusion, inject_curve=inject)


def _stream_shapes(spec: NetworkSpec):
    """Input shape for every layer, in spec.layers() order.

    Image shapes are channels-first (C, H, W); vector shapes are (width,).
    Raises ValueError if the chain is inconsistent.
    """
    shapes = []

    def walk(layers, shape, where):
        for pos, layer in enumerate(layers):
            shapes.append(shape)
            if isinstance(layer, Conv2d):
                c, h, w = shape
                shape = (layer.channels, h, w)
            elif isinstance(layer, MaxPool2):
                c, h, w = shape
                if h % 2 or w % 2:
                    raise ValueError(f"{where}[{pos}]: cannot pool odd grid {shape}")
                shape = (c, h // 2, w // 2)
            elif isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Dense):
                if len(shape) != 1:
                    raise ValueError(f"{where}[{pos}]: dense needs a vector input, got {shape}")
                shape = (layer.width,)
            # relu keeps shape
        return shape

    deep_out = walk(spec.deep_stream, (1, spec.image_side, spec.image_side), "deep") if spec.deep_stream else None
    topo_out = walk(spec.topo_stream, (spec.curve_len,), "topo") if spec.topo_stream else None
    width = 0
    if deep_out is not None:
        width += deep_out[0]
    if topo_out is not None:
        width += topo_out[0]
    if spec.inject_curve:
        width += spec.curve_len
    walk(spec.fusion, (width,), "fusion")
    return shapes


def init_params(spec: NetworkSpec, seed: int, dtype=np.float32) -> list[dict]:
    """He-scaled normals for hidden layers, Xavier for the final dense.

    Returns one dict per layer in spec.layers() order ({} for layers
    without parameters).
    """
    rng = np.random.default_rng(seed)
    layers = spec.layers()
    shapes = _stream_shapes(spec)
    params: list[dict] = []
    last_dense = max(i for i, l in enumerate(layers) if isinstance(l, Dense))
    for i, (layer, in_shape) in enumerate(zip(layers, shapes)):
        if isinstance(layer, Conv2d):
            c_in = in_shape[0]
            fan_in = c_in * layer.kernel * layer.kernel
            w = rng.standard_normal((layer.channels, c_in, layer.kernel, layer.kernel))
            w *= np.sqrt(2.0 / fan_in)
            params.append({"W": w.astype(dtype), "b": np.zeros(layer.channels, dtype=dtype)})
        elif isinstance(layer, Dense):
            fan_in = in_shape[0]
            w = rng.standard_normal((fan_in, layer.width))
            if i == last_dense:
                w *= np.sqrt(1.0 / fan_in)  # Xavier-style for the softmax head
            else:
                w *= np.sqrt(2.0 / fan_in)
            params.append({"W": w.astype(dtype), "b": np.zeros(layer.width, dtype=dtype)})
        else:
            params.append({})
    return params


def param_count(params: list[dict]) -> int:
    return sum(arr.size for p in params for arr in p.values())


# --- layer forward/backward ------------------------------------------------

def _conv_forward(x, W, b):
    # x: (N, C, H, Wd); W: (F, C, k, k); same padding, stride 1
    n, c, h, wd = x.shape
    f, _, k, _ = W.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    # (N, C, H, Wd, k, k) -> (N, H*Wd, C*k*k)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n, h * wd, c * k * k)
    out = cols @ W.reshape(f, -1).T + b
    out = out.transpose(0, 2, 1).reshape(n, f, h, wd)
    return out, (x.shape, cols, W.shape)


def _conv_backward(dout, cache, W):
    (n, c, h, wd), cols, _ = cache
    f, _, k, _ = W.shape
    pad = k // 2
    dflat = dout.reshape(n, f, h * wd).transpose(0, 2, 1)  # (N, H*Wd, F)
    db = dflat.sum(axis=(0, 1))
    dW = np.einsum("npf,npc->fc", dflat, cols).reshape(W.shape)
    dcols = dflat @ W.reshape(f, -1)  # (N, H*Wd, C*k*k)
    dcols = dcols.reshape(n, h, wd, c, k, k)
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + h, j:j + wd] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:pad + h, pad:pad + wd]
    return dx, dW, db


def _pool_forward(x):
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)  # first max wins on ties
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx)


def _pool_backward(dout, cache):
    (n, c, h, w), idx = cache
    dwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dx = dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return dx.reshape(n, c, h, w)


def _run_stream(layers, params, x, caches):
    for layer, p in zip(layers, params):
        if isinstance(layer, Conv2d):
            x, cache = _conv_forward(x, p["W"], p["b"])
            caches.append(cache)
        elif isinstance(layer, MaxPool2):
            x, cache = _pool_forward(x)
            caches.append(cache)
        elif isinstance(layer, Dense):
            caches.append(x)
            x = x @ p["W"] + p["b"]
        elif isinstance(layer, Relu):
            caches.append(x)
            x = np.maximum(x, 0)
        elif isinstance(layer, Flatten):
            caches.append(x.shape)
            x = x.reshape(x.shape[0], -1)
    return x


def _stream_backward(layers, params, grads, caches, dout):
    for layer, p, g, cache in zip(
        reversed(layers), reversed(params), reversed(grads), reversed(caches)
    ):
        if isinstance(layer, Conv2d):
            dout, dW, db = _conv_backward(dout, cache, p["W"])
            g["W"] = dW
            g["b"] = db
        elif isinstance(layer, MaxPool2):
            dout = _pool_backward(dout, cache)
        elif isinstance(layer, Dense):
            x = cache
            g["W"] = x.T @ dout
            g["b"] = dout.sum(axis=0)
            dout = dout @ p["W"].T
        elif isinstance(layer, Relu):
            dout = dout * (cache > 0)
        elif isinstance(layer, Flatten):
            dout = dout.reshape(cache)
    return dout


def _prepare_inputs(spec: NetworkSpec, inputs: dict, dtype) -> dict:
    out = {}
    if spec.uses_image:
        if "image" not in inputs:
            raise ValueError(f"variant {spec.variant!r} requires an 'image' input")
        img = np.asarray(inputs["image"], dtype=dtype)
        if img.ndim == 3:
            img = img[:, None, :, :]
        if img.shape[1:] != (1, spec.image_side, spec.image_side):
            raise ValueError(
                f"image input shape {img.shape[1:]} does not match "
                f"(1, {spec.image_side}, {spec.image_side})"
            )
        out["image"] = img
    if spec.uses_curve:
        if "betti" not in inputs:
            raise ValueError(f"variant {spec.variant!r} requires a 'betti' input")
        curve = np.asarray(inputs["betti"], dtype=dtype)
        if curve.ndim != 2 or curve.shape[1] != spec.curve_len:
            raise ValueError(
                f"betti input shape {curve.shape} does not match (N, {spec.curve_len})"
            )
        out["betti"] = curve
    return out


def _forward_cached(spec: NetworkSpec, params, inputs):
    nd, nt = len(spec.deep_stream), len(spec.topo_stream)
    caches_deep: list = []
    caches_topo: list = []
    caches_fusion: list = []
    pieces = []
    widths = []
    if spec.deep_stream:
        y = _run_stream(spec.deep_stream, params[:nd], inputs["image"], caches_deep)
        pieces.append(y)
        widths.append(y.shape[1])
    if spec.topo_stream:
        y = _run_stream(spec.topo_stream, params[nd:nd + nt], inputs["betti"], caches_topo)
        pieces.append(y)
        widths.append(y.shape[1])
    if spec.inject_curve:
        pieces.append(inputs["betti"])
        widths.append(spec.curve_len)
    fused = pieces[0] if len(pieces) == 1 else np.concatenate(pieces, axis=1)
    logits = _run_stream(spec.fusion, params[nd + nt:], fused, caches_fusion)
    # stable softmax
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return probs, (caches_deep, caches_topo, caches_fusion, widths)


def forward(spec: NetworkSpec, params: list[dict], inputs: dict) -> np.ndarray:
    """Class probabilities, shape (N, 2)."""
    dtype = params[_first_param_idx(params)]["W"].dtype
    probs, _ = _forward_cached(spec, params, _prepare_inputs(spec, inputs, dtype))
    return probs


def _first_param_idx(params):
    for i, p in enumerate(params):
        if p:
            return i
    raise ValueError("parameter set is empty")


def loss_and_grads(spec: NetworkSpec, params: list[dict], inputs: dict, labels):
    """Mean softmax cross-entropy and gradients shaped like params."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("batch must be nonempty")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    labels = labels.astype(np.int64)
    dtype = params[_first_param_idx(params)]["W"].dtype
    prepared = _prepare_inputs(spec, inputs, dtype)
    probs, (caches_deep, caches_topo, caches_fusion, widths) = _forward_cached(
        spec, params, prepared
    )
    n = labels.size
    eps = np.finfo(dtype).tiny
    loss = float(-np.log(probs[np.arange(n), labels] + eps).mean())

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    nd, nt = len(spec.deep_stream), len(spec.topo_stream)
    grads: list[dict] = [{} for _ in params]
    dfused = _stream_backward(
        spec.fusion, params[nd + nt:], grads[nd + nt:], caches_fusion, dlogits
    )
    offset = 0
    if spec.deep_stream:
        w = widths[0]
        _stream_backward(
            spec.deep_stream, params[:nd], grads[:nd], caches_deep,
            dfused[:, offset:offset + w],
        )
        offset += w
    if spec.topo_stream:
        w = widths[1] if spec.deep_stream else widths[0]
        _stream_backward(
            spec.topo_stream, params[nd:nd + nt], grads[nd:nd + nt], caches_topo,
            dfused[:, offset:offset + w],
        )
    return loss, grads


def predict(spec: NetworkSpec, params: list[dict], inputs: dict) -> np.ndarray:
    """Argmax labels; exact ties resolve to class 0."""
    probs = forward(spec, params, inputs)
    return np.where(probs[:, 1] > probs[:, 0], 1, 0)


def train(spec: NetworkSpec, dataset: tuple[dict, np.ndarray], config: TrainConfig):
    """Mini-batch training, fully driven by one seeded generator.

    dataset is (inputs dict of stacked arrays, labels). Returns the
    trained parameters and the per-epoch mean batch loss.
    """
    inputs, labels = dataset
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("dataset must be nonempty")
    dtype = config.dtype
    prepared = _prepare_inputs(spec, inputs, dtype)
    params = init_params(spec, config.seed, dtype)
    rng = np.random.default_rng(config.seed)

    if config.optimizer == "adam":
        m = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
        v = [{k: np.zeros_like(a) for k, a in p.items()} for p in params]
        beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
        step = 0

    n = labels.size
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = {k: a[idx] for k, a in prepared.items()}
            loss, grads = loss_and_grads(spec, params, batch, labels[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"training diverged (non-finite loss) at epoch {epoch}")
            losses.append(loss)
            lr = config.learning_rate
            if config.optimizer == "sgd":
                for p, g in zip(params, grads):
                    for k in p:
                        p[k] -= lr * g[k]
            else:
                step += 1
                bc1 = 1.0 - beta1 ** step
                bc2 = 1.0 - beta2 ** step
                for p, g, mi, vi in zip(params, grads, m, v):
                    for k in p:
                        mi[k] = beta1 * mi[k] + (1 - beta1) * g[k]
                        vi[k] = beta2 * vi[k] + (1 - beta2) * g[k] ** 2
                        p[k] -= lr * (mi[k] / bc1) / (np.sqrt(vi[k] / bc2) + adam_eps)
        history.append(float(np.mean(losses)))
    return params, history


def grad_check(spec: NetworkSpec, params: list[dict], inputs: dict, labels,
               epsilon: float = 1e-6, n_coords: int = 200, seed: int = 0) -> float:
    """Max scaled relative error between analytic and central-difference
    gradients over a seeded random subsample of parameter coordinates.

    Parameters must be double precision. Error is |a - n| / max(1, |a|, |n|)
    so near-zero coordinates do not blow up the ratio.
    """
    for p in params:
        for a in p.values():
            if a.dtype != np.float64:
                raise ValueError("grad_check requires double-precision parameters")
    prepared = _prepare_inputs(spec, inputs, np.float64)
    _, grads = loss_and_grads(spec, params, prepared, labels)

    coords = []
    for i, p in enumerate(params):
        for k, a in p.items():
            coords += [(i, k, j) for j in range(a.size)]
    rng = np.random.default_rng(seed)
    if len(coords) > n_coords:
        picked = [coords[j] for j in rng.choice(len(coords), size=n_coords, replace=False)]
    else:
        picked = coords

    worst = 0.0
    for i, k, j in picked:
        flat = params[i][k].ravel()
        orig = flat[j]
        flat[j] = orig + epsilon
        lo_plus, _ = loss_and_grads(spec, params, prepared, labels)
        flat[j] = orig - epsilon
        lo_minus, _ = loss_and_grads(spec, params, prepared, labels)
        flat[j] = orig
        numeric = (lo_plus - lo_minus) / (2 * epsilon)
        analytic = grads[i][k].ravel()[j]
        err = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
        worst = max(worst, err)
    return worst


# --- serialization ---------------------------------------------------------

_MAGIC = b"TDAN"
_VERSION = 1

_LAYER_TAGS = {"Conv2d": Conv2d, "MaxPool2": MaxPool2, "Dense": Dense,
               "Relu": Relu, "Flatten": Flatten}


def _layer_to_obj(layer: LayerSpec):
    d = {"kind": type(layer).__name__}
    d.update(layer.__dict__)
    return d


def _layer_from_obj(d):
    d = dict(d)
    cls = _LAYER_TAGS[d.pop("kind")]
    return cls(**d)


def spec_to_json(spec: NetworkSpec) -> str:
    return json.dumps(
        {
            "variant": spec.variant,
            "image_side": spec.image_side,
            "curve_len": spec.curve_len,
            "deep_stream": [_layer_to_obj(l) for l in spec.deep_stream],
            "topo_stream": [_layer_to_obj(l) for l in spec.topo_stream],
            "fusion": [_layer_to_obj(l) for l in spec.fusion],
            "inject_curve": spec.inject_curve,
        },
        sort_keys=True,
    )


def spec_from_json(text: str) -> NetworkSpec:
    d = json.loads(text)
    return NetworkSpec(
        variant=d["variant"],
        image_side=d["image_side"],
        curve_len=d["curve_len"],
        deep_stream=tuple(_layer_from_obj(o) for o in d["deep_stream"]),
        topo_stream=tuple(_layer_from_obj(o) for o in d["topo_stream"]),
        fusion=tuple(_layer_from_obj(o) for o in d["fusion"]),
        inject_curve=d["inject_curve"],
    )


def save_model(path, spec: NetworkSpec, params: list[dict]) -> None:
    """Binary format: magic, u16 version, u32-length-prefixed spec JSON,
    then per-layer W/b arrays as little-endian float32 in layer order."""
    desc = spec_to_json(spec).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<H", _VERSION))
        fh.write(struct.pack("<I", len(desc)))
        fh.write(desc)
        for p in params:
            for key in ("W", "b"):
                if key in p:
                    fh.write(np.ascontiguousarray(p[key], dtype="<f4").tobytes())


def load_model(path) -> tuple[NetworkSpec, list[dict]]:
    """Inverse of save_model; raises ModelFormatError on bad or truncated files."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 10 or data[:4] != _MAGIC:
        raise ModelFormatError(f"{path}: not a TDAN model file")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != _VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    (desc_len,) = struct.unpack_from("<I", data, 6)
    body = 10 + desc_len
    if len(data) < body:
        raise ModelFormatError(f"{path}: truncated model file")
    try:
        spec = spec_from_json(data[10:body].decode("utf-8"))
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt architecture descriptor") from exc

    template = init_params(spec, seed=0, dtype=np.float32)
    params: list[dict] = []
    offset = body
    for p in template:
        loaded = {}
        for key in ("W", "b"):
            if key in p:
                nbytes = p[key].size * 4
                if offset + nbytes > len(data):
                    raise ModelFormatError(f"{path}: truncated model file")
                arr = np.frombuffer(data[offset:offset + nbytes], dtype="<f4")
                loaded[key] = arr.reshape(p[key].shape).copy()
                offset += nbytes
        params.append(loaded)
    if offset != len(data):
        raise ModelFormatError(f"{path}: trailing bytes after parameters")
    return spec, params
