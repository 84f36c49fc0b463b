"""A small ReLU multilayer perceptron with hand-written backprop.

Data flows samples-as-columns: an input batch is ``d x N``. Every hidden
block is ``dense -> [batchnorm] -> relu``; the output of the last block is
the deep feature layer, followed by a linear classifier producing ``C x N``
logits. Gradients injected at the feature layer never touch the classifier.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

CHECKPOINT_MAGIC = b"OLECKPT1"


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden: tuple[int, ...]
    feature_dim: int
    class_count: int
    use_batchnorm: bool = True
    activation: str = "relu"
    # batchnorm on the deep feature block too (only when use_batchnorm)
    feature_batchnorm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        dims = (self.input_dim, *self.hidden, self.feature_dim, self.class_count)
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer sizes must be >= 1, got {dims}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def block_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden, self.feature_dim]
        return list(zip(dims[:-1], dims[1:]))

    def has_batchnorm(self, block: int) -> bool:
        if not self.use_batchnorm:
            return False
        return self.feature_batchnorm or block < len(self.hidden)


@dataclass
class NetworkParams:
    spec: NetworkSpec
    trainable: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = 0

    def with_trainable(self, trainable: dict[str, np.ndarray]) -> "NetworkParams":
        """New parameter set sharing the running statistics; invalidates old traces."""
        return NetworkParams(self.spec, trainable, self.buffers, self.version + 1)

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.spec,
            {k: v.copy() for k, v in self.trainable.items()},
            {k: v.copy() for k, v in self.buffers.items()},
            self.version,
        )


@dataclass
class ForwardTrace:
    mode: str
    version: int
    inputs: np.ndarray
    caches: list[dict]
    features: np.ndarray
    logits: np.ndarray


class StaleTraceError(RuntimeError):
    pass


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(spec: NetworkSpec, seed: int) -> NetworkParams:
    """Glorot-uniform weights, zero biases, identity batchnorm."""
    rng = np.random.default_rng(seed)
    trainable: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    for i, (fan_in, fan_out) in enumerate(spec.block_dims):
        a = xavier_bound(fan_in, fan_out)
        trainable[f"dense{i}.W"] = rng.uniform(-a, a, size=(fan_out, fan_in))
        trainable[f"dense{i}.b"] = np.zeros(fan_out)
        if spec.has_batchnorm(i):
            trainable[f"bn{i}.gamma"] = np.ones(fan_out)
            trainable[f"bn{i}.beta"] = np.zeros(fan_out)
            buffers[f"bn{i}.mean"] = np.zeros(fan_out)
            buffers[f"bn{i}.var"] = np.ones(fan_out)
    a = xavier_bound(spec.feature_dim, spec.class_count)
    trainable["classifier.W"] = rng.uniform(-a, a, size=(spec.class_count, spec.feature_dim))
    trainable["classifier.b"] = np.zeros(spec.class_count)
    return NetworkParams(spec, trainable, buffers)


def forward(params: NetworkParams, x: np.ndarray, mode: str = "eval") -> ForwardTrace:
    """Run the network on a ``d x N`` batch.

    ``train`` mode normalizes with batch statistics and updates the running
    buffers in place; ``eval`` mode reads them and mutates nothing.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    spec = params.spec
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != spec.input_dim:
        raise ValueError(f"expected input of shape ({spec.input_dim}, N), got {x.shape}")
    p = params.trainable
    h = x
    caches = []
    for i in range(len(spec.block_dims)):
        cache = {"h_in": h}
        z = p[f"dense{i}.W"] @ h + p[f"dense{i}.b"][:, None]
        if spec.has_batchnorm(i):
            if mode == "train":
                mu = z.mean(axis=1)
                var = z.var(axis=1)
                m, v = params.buffers[f"bn{i}.mean"], params.buffers[f"bn{i}.var"]
                m *= 1 - BN_MOMENTUM
                m += BN_MOMENTUM * mu
                v *= 1 - BN_MOMENTUM
                v += BN_MOMENTUM * var
            else:
                mu = params.buffers[f"bn{i}.mean"]
                var = params.buffers[f"bn{i}.var"]
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mu[:, None]) * inv_std[:, None]
            cache["xhat"] = xhat
            cache["inv_std"] = inv_std
            z = p[f"bn{i}.gamma"][:, None] * xhat + p[f"bn{i}.beta"][:, None]
        cache["active"] = z > 0
        h = np.maximum(z, 0.0)
        caches.append(cache)
    logits = p["classifier.W"] @ h + p["classifier.b"][:, None]
    return ForwardTrace(mode, params.version, x, caches, h, logits)


def backward(
    params: NetworkParams,
    trace: ForwardTrace,
    feature_grad: np.ndarray | None,
    logit_grad: np.ndarray | None,
) -> dict[str, np.ndarray]:
    """Gradients of every trainable tensor.

    ``feature_grad`` is added at the deep-feature output, after the classifier
    gradient has been formed, so the classifier only sees ``logit_grad``.
    """
    if trace.mode != "train":
        raise StaleTraceError("backward needs a trace produced in train mode")
    if trace.version != params.version:
        raise StaleTraceError(
            f"trace was recorded at parameter version {trace.version}, params are at {params.version}"
        )
    spec = params.spec
    p = params.trainable
    n = trace.inputs.shape[1]
    if logit_grad is None:
        logit_grad = np.zeros((spec.class_count, n))
    if feature_grad is None:
        feature_grad = np.zeros((spec.feature_dim, n))
    if logit_grad.shape != trace.logits.shape or feature_grad.shape != trace.features.shape:
        raise ValueError("gradient shapes do not match the trace")

    grads = {
        "classifier.W": logit_grad @ trace.features.T,
        "classifier.b": logit_grad.sum(axis=1),
    }
    dh = p["classifier.W"].T @ logit_grad + feature_grad
    for i in reversed(range(len(spec.block_dims))):
        cache = trace.caches[i]
        dz = dh * cache["active"]
        if spec.has_batchnorm(i):
            xhat = cache["xhat"]
            grads[f"bn{i}.gamma"] = np.sum(dz * xhat, axis=1)
            grads[f"bn{i}.beta"] = dz.sum(axis=1)
            dxhat = dz * p[f"bn{i}.gamma"][:, None]
            # batch-statistics normalization couples the columns
            dz = (cache["inv_std"][:, None] / n) * (
                n * dxhat - dxhat.sum(axis=1, keepdims=True) - xhat * np.sum(dxhat * xhat, axis=1, keepdims=True)
            )
        grads[f"dense{i}.W"] = dz @ cache["h_in"].T
        grads[f"dense{i}.b"] = dz.sum(axis=1)
        if i > 0:
            dh = p[f"dense{i}.W"].T @ dz
    return grads


# Checkpoint layout (all integers little-endian):
#   8 bytes   magic b"OLECKPT1"
#   u32       length L of the UTF-8 JSON header, then L bytes of JSON
#             {"spec": {...NetworkSpec fields...}, "version": int}
#   u32       tensor count T
#   T times:  u16 name length, name bytes (UTF-8), u8 kind (0 trainable,
#             1 buffer), u8 ndim, ndim x u32 dims, prod(dims) x f64 row-major
def save_checkpoint(params: NetworkParams, path) -> None:
    header = json.dumps({"spec": asdict(params.spec), "version": params.version}, sort_keys=True).encode()
    entries = [(k, 0, v) for k, v in params.trainable.items()] + [(k, 1, v) for k, v in params.buffers.items()]
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(struct.pack("<I", len(entries)))
        for name, kind, arr in entries:
            raw = name.encode()
            arr = np.ascontiguousarray(arr, dtype="<f8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<BB", kind, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> NetworkParams:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    (hlen,) = take("<I")
    header = json.loads(data[pos : pos + hlen])
    pos += hlen
    spec = NetworkSpec(**header["spec"])
    trainable, buffers = {}, {}
    (count,) = take("<I")
    for _ in range(count):
        (nlen,) = take("<H")
        name = data[pos : pos + nlen].decode()
        pos += nlen
        kind, ndim = take("<BB")
        shape = take(f"<{ndim}I")
        nbytes = 8 * int(np.prod(shape))
        if pos + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        arr = np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=pos).reshape(shape).astype(np.float64)
        pos += nbytes
        (buffers if kind else trainable)[name] = arr
    expected = init_params(spec, 0)
    for name, arr in expected.trainable.items():
        if name not in trainable or trainable[name].shape != arr.shape:
            raise CheckpointError(f"{path}: tensor {name!r} missing or misshapen")
    return NetworkParams(spec, trainable, buffers, header["version"])
