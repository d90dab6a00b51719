"""Sequential model container and the versioned checkpoint format.

Checkpoint layout (all integers little-endian):

    bytes 0..5   magic  b"SBCKPT"
    bytes 6..7   format version, currently 1, as uint16
    bytes 8..11  header length H as uint32
    bytes 12..   H bytes of UTF-8 JSON header
    then         one embedded NPY v1.0 block per array, in header order

The JSON header stores the architecture grammar plus build arguments, the
names of the persisted state arrays (layer state in layer order), and the
Adam hyperparameters/step when optimizer state is included. Arrays round
trip bit-exactly.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from ..errors import DomainError, FormatError, ShapeError
from ..npyio import read_npy_stream, write_npy_stream
from .adam import Adam
from .layers import Layer, softmax_cross_entropy

_MAGIC = b"SBCKPT"
_FORMAT_VERSION = 1


class Model:
    """A fixed sequence of layers mapping (batch, length, 1) to logits."""

    def __init__(self, layers: list[Layer], name: str, source: str, grammar: str,
                 n_datapoints: int, n_classes: int, dtype=np.float32,
                 conv_output: tuple[int, int] | None = None,
                 check_finite: bool = False):
        self.layers = layers
        self.name = name
        self.source = source
        self.grammar = grammar
        self.n_datapoints = n_datapoints
        self.n_classes = n_classes
        self.dtype = np.dtype(dtype)
        self.conv_output = conv_output
        self.check_finite = check_finite

    def prepare_input(self, spectra: np.ndarray) -> np.ndarray:
        """(batch, n) float rows -> (batch, n, 1) activations in model dtype."""
        if spectra.ndim != 2 or spectra.shape[1] != self.n_datapoints:
            raise ShapeError(
                f"expected (batch, {self.n_datapoints}) spectra, got {spectra.shape}"
            )
        return np.ascontiguousarray(spectra, dtype=self.dtype)[:, :, None]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train)
            if self.check_finite and not np.all(np.isfinite(x)):
                raise DomainError(f"non-finite activations after {layer.kind}")
        return x

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        grad = grad_logits
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def loss(self, spectra: np.ndarray, labels: np.ndarray, train: bool = False):
        logits = self.forward(self.prepare_input(spectra), train=train)
        return softmax_cross_entropy(logits, labels)

    def predict(self, spectra: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Argmax class per row; ties resolve to the lower class id."""
        out = np.empty(spectra.shape[0], dtype=np.int64)
        for start in range(0, spectra.shape[0], batch_size):
            rows = spectra[start : start + batch_size]
            logits = self.forward(self.prepare_input(rows), train=False)
            out[start : start + rows.shape[0]] = np.argmax(logits, axis=1)
        return out

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.parameters()]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.gradients()]

    def state_arrays(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in layer.state_arrays()]

    def zero_gradients(self) -> None:
        for layer in self.layers:
            layer.zero_gradients()

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def snapshot_state(self) -> list[np.ndarray]:
        return [a.copy() for a in self.state_arrays()]

    def restore_state(self, snapshot: list[np.ndarray]) -> None:
        arrays = self.state_arrays()
        if len(arrays) != len(snapshot):
            raise ShapeError("snapshot does not match the model state layout")
        for dst, src in zip(arrays, snapshot):
            np.copyto(dst, src)


def save_checkpoint(model: Model, path, optimizer: Adam | None = None) -> None:
    arrays = model.state_arrays()
    header = {
        "name": model.name,
        "source": model.source,
        "grammar": model.grammar,
        "n_datapoints": model.n_datapoints,
        "n_classes": model.n_classes,
        "dtype": model.dtype.str,
        "n_state_arrays": len(arrays),
        "adam": None,
    }
    opt_arrays: list[np.ndarray] = []
    if optimizer is not None:
        header["adam"] = {
            "lr": optimizer.lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
            "t": optimizer.t,
        }
        opt_arrays = list(optimizer.m) + list(optimizer.v)
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<H", _FORMAT_VERSION))
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for arr in arrays + opt_arrays:
            write_npy_stream(f, arr)


def load_checkpoint(path) -> tuple[Model, Adam | None]:
    # deferred import: arch builds models from grammar and imports this module
    from ..arch import build_model, parse_architecture

    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<H", f.read(2))
        if version != _FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", f.read(4))
        try:
            header = json.loads(f.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"unreadable checkpoint header: {exc}") from exc
        spec = parse_architecture(
            header["grammar"], name=header["name"], source=header["source"]
        )
        model = build_model(
            spec,
            n_datapoints=header["n_datapoints"],
            n_classes=header["n_classes"],
            seed=0,
            dtype=np.dtype(header["dtype"]),
        )
        arrays = model.state_arrays()
        if header["n_state_arrays"] != len(arrays):
            raise FormatError(
                f"checkpoint stores {header['n_state_arrays']} state arrays, "
                f"architecture expects {len(arrays)}"
            )
        for dst in arrays:
            src = read_npy_stream(f)
            if src.shape != dst.shape or src.dtype != dst.dtype:
                raise FormatError(
                    f"checkpoint array mismatch: {src.dtype}{src.shape} vs "
                    f"{dst.dtype}{dst.shape}"
                )
            np.copyto(dst, src)
        optimizer = None
        if header["adam"] is not None:
            meta = header["adam"]
            optimizer = Adam(
                model.parameters(), lr=meta["lr"], beta1=meta["beta1"],
                beta2=meta["beta2"], eps=meta["eps"],
            )
            optimizer.t = meta["t"]
            for slot in (optimizer.m, optimizer.v):
                for i in range(len(slot)):
                    src = read_npy_stream(f)
                    if src.shape != slot[i].shape:
                        raise FormatError("checkpoint optimizer state shape mismatch")
                    slot[i] = src.astype(slot[i].dtype)
    return model, optimizer
