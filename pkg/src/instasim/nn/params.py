"""Named parameter storage, AdamW, and checkpoint serialization."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor

CHECKPOINT_FORMAT_VERSION = 1


class ParamStore:
    """Named parameter tensors with decoupled-weight-decay Adam state.

    ``version`` increments on every optimizer step (or explicit bump) and is
    folded into token-cache fingerprints so stale caches can never be read.
    """

    def __init__(self, dtype=np.float32, seed: int = 0):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0
        self.version = 0
        self.rng = np.random.default_rng(seed)

    # -- creation --

    def create(self, name: str, shape: tuple[int, ...], init: str = "zeros",
               fan_in: int | None = None) -> Tensor:
        if name in self.params:
            raise ValueError(f"parameter {name!r} already exists")
        if init == "fanin":
            # Kaiming-style uniform fan-in scaling.
            if not fan_in:
                fan_in = shape[0]
            bound = np.sqrt(6.0 / fan_in)
            data = self.rng.uniform(-bound, bound, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(np.ascontiguousarray(data, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        self._m[name] = np.zeros(shape, dtype=self.dtype)
        self._v[name] = np.zeros(shape, dtype=self.dtype)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return sorted(self.params)

    def n_scalars(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.grad = np.zeros_like(t.data)

    def bump_version(self) -> None:
        self.version += 1

    # -- optimizer --

    def adamw_step(self, lr: float, weight_decay: float = 0.01,
                   beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> None:
        """One decoupled-weight-decay Adam update; clears gradients."""
        missing = [n for n, t in self.params.items() if t.grad is None]
        if missing:
            raise ValueError(f"adamw_step: missing gradients for {missing[:5]}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * np.square(g)
            update = (m / bc1) / (np.sqrt(v / bc2) + eps)
            if weight_decay:
                update = update + weight_decay * p.data
            p.data = p.data - lr * update
            p.grad = None
        self.version += 1

    # -- flat views (finite differences, tests) --

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params[n].data.ravel() for n in self.names()])

    def set_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for n in self.names():
            p = self.params[n]
            size = p.data.size
            p.data = np.ascontiguousarray(
                flat[offset:offset + size].reshape(p.data.shape), dtype=self.dtype)
            offset += size
        if offset != flat.size:
            raise ValueError("flat vector size mismatch")
        self.version += 1

    def grad_flat(self) -> np.ndarray:
        chunks = []
        for n in self.names():
            g = self.params[n].grad
            chunks.append((np.zeros_like(self.params[n].data) if g is None else g).ravel())
        return np.concatenate(chunks)

    # -- checkpoint io --

    def save(self, path: str | Path, include_optimizer: bool = True,
             meta: dict | None = None) -> None:
        """Write a float32 binary blob plus a JSON manifest alongside it."""
        path = Path(path)
        entries = []
        blobs = []
        offset = 0

        def push(name, arr):
            nonlocal offset
            raw = np.ascontiguousarray(arr, dtype=np.float32)
            entries.append({"name": name, "shape": list(raw.shape), "offset": offset})
            blobs.append(raw.tobytes())
            offset += raw.nbytes

        for n in self.names():
            push(n, self.params[n].data)
        if include_optimizer:
            for n in self.names():
                push(f"opt.m.{n}", self._m[n])
                push(f"opt.v.{n}", self._v[n])
        manifest = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "dtype": "float32",
            "step_count": self.step_count,
            "includes_optimizer": include_optimizer,
            "tensors": entries,
            "meta": meta or {},
        }
        path.write_bytes(b"".join(blobs))
        path.with_suffix(".json").write_text(json.dumps(manifest, indent=1))

    def load(self, path: str | Path) -> dict:
        """Load parameters (and optimizer state when present) from ``save`` output.

        Returns the manifest's ``meta`` dict.
        """
        path = Path(path)
        manifest = json.loads(path.with_suffix(".json").read_text())
        if manifest["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {manifest['format_version']}")
        raw = path.read_bytes()
        arrays = {}
        for ent in manifest["tensors"]:
            shape = tuple(ent["shape"])
            n = int(np.prod(shape)) if shape else 1
            start = ent["offset"]
            arr = np.frombuffer(raw, dtype=np.float32, count=n, offset=start).reshape(shape)
            arrays[ent["name"]] = arr
        for n in self.names():
            if n not in arrays:
                raise ValueError(f"checkpoint missing parameter {n!r}")
            if tuple(arrays[n].shape) != self.params[n].data.shape:
                raise ValueError(f"checkpoint shape mismatch for {n!r}")
            self.params[n].data = np.ascontiguousarray(arrays[n], dtype=self.dtype)
            self.params[n].grad = None
            if manifest["includes_optimizer"]:
                self._m[n] = np.ascontiguousarray(arrays[f"opt.m.{n}"], dtype=self.dtype)
                self._v[n] = np.ascontiguousarray(arrays[f"opt.v.{n}"], dtype=self.dtype)
        if manifest["includes_optimizer"]:
            self.step_count = manifest["step_count"]
        self.version += 1
        return manifest.get("meta", {})


def adamw_step(store: ParamStore, lr: float, weight_decay: float = 0.01,
               beta1: float = 0.9, beta2: float = 0.999) -> None:
    """Module-level convenience wrapper around :meth:`ParamStore.adamw_step`."""
    store.adamw_step(lr, weight_decay=weight_decay, beta1=beta1, beta2=beta2)
