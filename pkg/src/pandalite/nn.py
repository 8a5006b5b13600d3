"""Small numpy MLP with hand-written backprop, Adam and Polyak averaging.

Weights are stored as ``(fan_in, fan_out)`` matrices and inputs as row
batches, so a layer is ``x @ W + b``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

HIDDEN_SIZES = (256, 256, 256)


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class MLP:
    """ReLU multi-layer perceptron with a linear or tanh output head.

    ``forward`` caches the activations needed by the next ``backward``.
    """

    def __init__(self, sizes: Sequence[int], out_activation: str = "linear",
                 rng: Optional[np.random.Generator] = None, dtype=np.float64):
        if out_activation not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {out_activation!r}")
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        rng = np.random.default_rng(0) if rng is None else rng
        self.sizes = tuple(int(s) for s in sizes)
        self.out_activation = out_activation
        self.dtype = np.dtype(dtype)
        shapes = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        self._bind(np.empty(sum(int(np.prod(s)) for s in shapes), dtype=self.dtype), shapes)
        for w, b in zip(self.weights, self.biases):
            bound = 1.0 / np.sqrt(w.shape[0])
            w[...] = rng.uniform(-bound, bound, w.shape)
            b[...] = rng.uniform(-bound, bound, b.shape)
        self._cache = None

    def _bind(self, flat: np.ndarray, shapes) -> None:
        # every parameter is a view into one flat buffer so optimisers and
        # Polyak averaging run as single vectorised operations
        self.flat = flat
        self.params = []
        offset = 0
        for shape in shapes:
            n = int(np.prod(shape))
            self.params.append(flat[offset:offset + n].reshape(shape))
            offset += n

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    @property
    def weights(self) -> List[np.ndarray]:
        return self.params[0::2]

    @property
    def biases(self) -> List[np.ndarray]:
        return self.params[1::2]

    def copy(self) -> "MLP":
        twin = MLP.__new__(MLP)
        twin.sizes = self.sizes
        twin.out_activation = self.out_activation
        twin.dtype = self.dtype
        twin._bind(self.flat.copy(), [p.shape for p in self.params])
        twin._cache = None
        return twin

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[-1] != self.sizes[0]:
            raise ShapeError(f"input has {x.shape[-1]} features, network expects {self.sizes[0]}")
        inputs = []
        h = x
        last = self.n_layers - 1
        for i in range(self.n_layers):
            inputs.append(h)
            h = h @ self.params[2 * i]
            h += self.params[2 * i + 1]
            if i < last:
                np.maximum(h, 0.0, out=h)
        if self.out_activation == "tanh":
            h = np.tanh(h)
        self._cache = (inputs, h)
        return h[0] if single else h

    def backward(self, grad_out: np.ndarray, param_grads: bool = True
                 ) -> Tuple[Optional[List[np.ndarray]], np.ndarray]:
        """Reverse pass for the last ``forward`` call.

        Returns ``(grads, grad_input)`` where ``grads`` mirrors ``params``
        (``None`` if ``param_grads`` is false).
        """
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        inputs, out = self._cache
        g = np.asarray(grad_out, dtype=self.dtype)
        if g.ndim == 1:
            g = g[None, :]
        if self.out_activation == "tanh":
            g = g * (1.0 - out * out)
        grads = None
        if param_grads:
            flat = np.empty_like(self.flat)
            grads = []
            offset = 0
            for p in self.params:
                grads.append(flat[offset:offset + p.size].reshape(p.shape))
                offset += p.size
        for i in reversed(range(self.n_layers)):
            a = inputs[i]
            if param_grads:
                np.matmul(a.T, g, out=grads[2 * i])
                np.sum(g, axis=0, out=grads[2 * i + 1])
            g = g @ self.params[2 * i].T
            if i > 0:
                # inputs[i] is the ReLU output of layer i - 1
                g *= a > 0
        grad_x = g[0] if np.ndim(grad_out) == 1 else g
        return grads, grad_x


class Adam:
    """Adam with bias correction.  Holds the moment estimates for one
    parameter list and updates it in place."""

    FLUSH_EVERY = 100

    def __init__(self, params: List[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self._flat = _shared_buffer(params)
        targets = [self._flat] if self._flat is not None else params
        self.m = [np.zeros_like(p) for p in targets]
        self.v = [np.zeros_like(p) for p in targets]
        self._tmp = [np.empty_like(p) for p in targets]
        self._den = [np.empty_like(p) for p in targets]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ShapeError("gradient list does not match parameters")
        if self._flat is not None:
            g = _shared_buffer(grads)
            pairs = [(self._flat, np.concatenate([x.ravel() for x in grads]) if g is None else g)]
        else:
            pairs = list(zip(self.params, grads))
        for _, g in pairs:
            if not np.all(np.isfinite(g)):
                raise NonFiniteError("non-finite gradient; update rejected")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        # p -= lr * (m / c1) / (sqrt(v / c2) + eps), written with in-place
        # temporaries: the elementwise passes dominate the cost
        for (p, g), m, v, tmp, den in zip(pairs, self.m, self.v, self._tmp, self._den):
            m *= b1
            np.multiply(g, 1.0 - b1, out=tmp, casting="unsafe")
            m += tmp
            v *= b2
            np.multiply(g, g, out=tmp, casting="unsafe")
            tmp *= 1.0 - b2
            v += tmp
            np.divide(v, c2, out=den)
            np.sqrt(den, out=den)
            den += self.eps
            np.divide(m, c1, out=tmp)
            tmp /= den
            tmp *= self.lr
            p -= tmp
            if self.t % self.FLUSH_EVERY == 0 and p.dtype == np.float32:
                # moments of dead units decay into float32 subnormals,
                # which are very slow to compute with
                tiny = np.finfo(np.float32).tiny
                m[np.abs(m) < tiny] = 0.0
                v[v < tiny] = 0.0


def _shared_buffer(arrays: Sequence[np.ndarray]) -> Optional[np.ndarray]:
    """The flat 1-D buffer the arrays tile in order, if there is one."""
    base = arrays[0].base if len(arrays) else None
    if base is None or base.ndim != 1 or not base.flags.c_contiguous:
        return None
    total = 0
    for a in arrays:
        if a.base is not base or not a.flags.c_contiguous:
            return None
        if a.__array_interface__["data"][0] != base.__array_interface__["data"][0] + total * base.itemsize:
            return None
        total += a.size
    return base if total == base.size else None


def adam_step(net: MLP, opt: Adam, grads: Sequence[np.ndarray]) -> MLP:
    if opt.params is not net.params:
        raise ValueError("optimizer is bound to a different network")
    opt.step(grads)
    return net


def polyak_update(target: MLP, online: MLP, tau: float = 0.95) -> MLP:
    """``target <- tau * target + (1 - tau) * online``, in place."""
    if target.sizes != online.sizes:
        raise ShapeError(f"shape mismatch {target.sizes} vs {online.sizes}")
    target.flat *= tau
    target.flat += (1.0 - tau) * online.flat
    return target


# --- checkpoint format -------------------------------------------------------
#
#   bytes 0..3   magic b"PLNN"
#   bytes 4..7   format version, uint32 little-endian
#   bytes 8..15  manifest length N, uint64 little-endian
#   next N bytes UTF-8 JSON manifest {"version", "arrays": [{"name", "shape"}], "meta"}
#   remainder    every array in manifest order, C order, float64 little-endian

MAGIC = b"PLNN"
FORMAT_VERSION = 1


def save_arrays(path, arrays: Dict[str, np.ndarray], meta: Optional[dict] = None) -> None:
    manifest = {
        "version": FORMAT_VERSION,
        "arrays": [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()],
        "meta": meta or {},
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        f.write(blob)
        for v in arrays.values():
            f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def read_manifest(path) -> dict:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path} is not a parameter checkpoint")
        version, n = struct.unpack("<IQ", f.read(12))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        return json.loads(f.read(n).decode("utf-8"))


def load_arrays(path) -> Tuple[Dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path} is not a parameter checkpoint")
    version, n = struct.unpack("<IQ", data[4:16])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    manifest = json.loads(data[16:16 + n].decode("utf-8"))
    offset = 16 + n
    arrays = {}
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f8", count=count,
                                              offset=offset).reshape(shape).copy()
        offset += 8 * count
    if offset != len(data):
        raise ValueError("checkpoint payload size does not match its manifest")
    return arrays, manifest["meta"]
