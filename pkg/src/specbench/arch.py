"""Declarative architecture grammar and model construction.

Grammar: tokens joined by '-', with '(...)xN' (or 'TOKENxN') repetition.

    C<out>k<kernel>[s<stride>]   1-D convolution, valid padding
    MP<window>                   non-overlapping max pooling
    BN                           batch normalization
    F                            flatten
    D<units>                     fully connected layer

Example: ``(C64k5-MP6)x2-F-D2000-D500``. ReLU is implicit: after every
convolution (after its BN when one directly follows) and after every
hidden dense layer. ``build_model`` appends the classification head, a
dense layer sized to the class count, unless the grammar already ends in
one; the head feeds softmax cross entropy, which lives in the loss.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .errors import FormatError, ParameterError, ShapeError
from .nn.layers import BatchNorm, Conv1d, Dense, Flatten, MaxPool1d, ReLU
from .nn.model import Model


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv1d | maxpool1d | batchnorm | flatten | dense
    out_channels: int | None = None
    kernel: int | None = None
    stride: int | None = None
    window: int | None = None
    units: int | None = None


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    source: str
    grammar: str
    layers: tuple[LayerSpec, ...]

    @property
    def dense_widths(self) -> tuple[int, ...]:
        return tuple(ls.units for ls in self.layers if ls.kind == "dense")


_ATOM_RE = re.compile(
    r"^(?:C(?P<out>\d+)k(?P<kernel>\d+)(?:s(?P<stride>\d+))?|MP(?P<window>\d+)|BN|F|D(?P<units>\d+))"
    r"(?:x(?P<reps>\d+))?$"
)


def _segments(text: str, base: int):
    """Split at top-level '-' only; yields (segment, absolute_position)."""
    depth = 0
    start = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ParameterError(f"unbalanced ')' at position {base + i}")
        elif ch == "-" and depth == 0:
            yield text[start:i], base + start
            start = i + 1
    if depth != 0:
        raise ParameterError(f"unbalanced '(' in segment starting at position {base + start}")
    yield text[start:], base + start


def _expand(text: str, base: int) -> list[tuple[str, int]]:
    atoms: list[tuple[str, int]] = []
    for segment, pos in _segments(text, base):
        if not segment:
            raise ParameterError(f"empty token at position {pos}")
        if segment.startswith("("):
            depth = 0
            close = -1
            for i, ch in enumerate(segment):
                depth += ch == "("
                depth -= ch == ")"
                if depth == 0:
                    close = i
                    break
            suffix = segment[close + 1 :]
            m = re.fullmatch(r"x(\d+)", suffix)
            if m is None:
                raise ParameterError(
                    f"expected a repetition suffix xN after ')' at position {pos + close}"
                )
            reps = int(m.group(1))
            if reps == 0:
                raise ParameterError(f"repetition of zero at position {pos + close + 1}")
            atoms.extend(_expand(segment[1:close], pos + 1) * reps)
        else:
            m = _ATOM_RE.fullmatch(segment)
            if m is None:
                raise ParameterError(f"unknown token {segment!r} at position {pos}")
            reps = int(m.group("reps")) if m.group("reps") else 1
            if reps == 0:
                raise ParameterError(f"repetition of zero at position {pos}")
            atom = segment[: m.start("reps") - 1] if m.group("reps") else segment
            atoms.extend([(atom, pos)] * reps)
    return atoms


def _atom_to_spec(atom: str, pos: int) -> LayerSpec:
    m = _ATOM_RE.fullmatch(atom)
    if m is None:  # cannot happen after _expand, kept for safety
        raise ParameterError(f"unknown token {atom!r} at position {pos}")
    if m.group("out"):
        return LayerSpec(
            kind="conv1d",
            out_channels=int(m.group("out")),
            kernel=int(m.group("kernel")),
            stride=int(m.group("stride")) if m.group("stride") else 1,
        )
    if m.group("window"):
        return LayerSpec(kind="maxpool1d", window=int(m.group("window")))
    if m.group("units"):
        return LayerSpec(kind="dense", units=int(m.group("units")))
    if atom == "BN":
        return LayerSpec(kind="batchnorm")
    return LayerSpec(kind="flatten")


def parse_architecture(grammar: str, name: str = "model", source: str = "") -> ArchitectureSpec:
    """Expand a grammar string into a flat, validated layer sequence."""
    text = grammar.strip()
    if not text:
        raise ParameterError("empty architecture grammar")
    layers = []
    seen_flatten = False
    for atom, pos in _expand(text, 0):
        spec = _atom_to_spec(atom, pos)
        if spec.kind == "dense" and not seen_flatten:
            raise ParameterError(
                f"dense layer before flatten at position {pos}; insert F first"
            )
        if spec.kind == "flatten":
            if seen_flatten:
                raise ParameterError(f"duplicate flatten at position {pos}")
            seen_flatten = True
        elif seen_flatten and spec.kind != "dense":
            raise ParameterError(
                f"only dense layers may follow flatten, got {atom!r} at position {pos}"
            )
        layers.append(spec)
    return ArchitectureSpec(
        name=name, source=source or name, grammar=text, layers=tuple(layers)
    )


def load_architecture(path) -> ArchitectureSpec:
    """Read a grammar file: '#' comments plus name:/source:/layers: keys."""
    path = Path(path)
    fields = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise FormatError(f"{path}:{lineno}: expected 'key: value'")
        fields[key.strip()] = value.strip()
    if "layers" not in fields:
        raise FormatError(f"{path}: missing required 'layers:' line")
    name = fields.get("name", path.stem)
    return parse_architecture(fields["layers"], name=name, source=fields.get("source", name))


def find_architecture(name_or_path, search_dirs: list[Path] | None = None) -> ArchitectureSpec:
    """Resolve a bare model name or a path to a grammar file.

    Bare names look for ``<name>.arch`` under ./configs and the repository
    configs directory (when running from a source checkout).
    """
    candidate = Path(name_or_path)
    if candidate.suffix == ".arch" or candidate.exists():
        return load_architecture(candidate)
    dirs = search_dirs or [
        Path.cwd() / "configs",
        Path(__file__).resolve().parents[2] / "configs",
    ]
    for d in dirs:
        path = d / f"{name_or_path}.arch"
        if path.exists():
            return load_architecture(path)
    raise FormatError(
        f"no architecture named {name_or_path!r}; looked for {name_or_path}.arch in "
        + ", ".join(str(d) for d in dirs)
    )


def build_model(
    spec: ArchitectureSpec,
    n_datapoints: int,
    n_classes: int,
    seed: int,
    dtype=np.float32,
    check_finite: bool = False,
) -> Model:
    """Instantiate a model, tracking shapes and seeding each layer.

    Raises ShapeError naming the offending layer when the stack reduces
    the length to zero. Records the conv-output dimensionality (positions
    x channels at the flatten boundary) for documentation tests.
    """
    if n_classes < 2:
        raise ParameterError(f"n_classes must be >= 2, got {n_classes}")
    layers = []
    length, channels = n_datapoints, 1
    flat: int | None = None
    conv_output: tuple[int, int] | None = None
    parsed = list(spec.layers)
    for i, ls in enumerate(parsed):
        init = rngmod.stream(seed, rngmod.PARAM_INIT, i)
        if ls.kind == "conv1d":
            conv = Conv1d(channels, ls.out_channels, ls.kernel, ls.stride, dtype=dtype, rng=init)
            try:
                length = conv.output_length(length)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} (conv1d k{ls.kernel}): {exc}") from exc
            channels = ls.out_channels
            layers.append(conv)
            follows_bn = i + 1 < len(parsed) and parsed[i + 1].kind == "batchnorm"
            if not follows_bn:
                layers.append(ReLU())
        elif ls.kind == "maxpool1d":
            pool = MaxPool1d(ls.window)
            try:
                length = pool.output_length(length)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} (maxpool1d w{ls.window}): {exc}") from exc
            layers.append(pool)
        elif ls.kind == "batchnorm":
            layers.append(BatchNorm(channels, dtype=dtype))
            if i > 0 and parsed[i - 1].kind == "conv1d":
                layers.append(ReLU())
        elif ls.kind == "flatten":
            conv_output = (length, channels)
            flat = length * channels
            layers.append(Flatten())
        elif ls.kind == "dense":
            is_head = i == len(parsed) - 1 and ls.units == n_classes
            layers.append(Dense(flat, ls.units, dtype=dtype, rng=init))
            flat = ls.units
            if not is_head:
                layers.append(ReLU())
        else:  # pragma: no cover
            raise ParameterError(f"unhandled layer kind {ls.kind}")
    if flat is None:
        # conv-only grammar: flatten implicitly before the head
        conv_output = (length, channels)
        flat = length * channels
        layers.append(Flatten())
    needs_head = not (
        parsed
        and parsed[-1].kind == "dense"
        and parsed[-1].units == n_classes
    )
    if needs_head:
        head_rng = rngmod.stream(seed, rngmod.PARAM_INIT, len(parsed))
        layers.append(Dense(flat, n_classes, dtype=dtype, rng=head_rng))
    if flat is not None and flat <= 0:
        raise ShapeError("flattened feature size must be positive")
    return Model(
        layers=layers,
        name=spec.name,
        source=spec.source,
        grammar=spec.grammar,
        n_datapoints=n_datapoints,
        n_classes=n_classes,
        dtype=dtype,
        conv_output=conv_output,
        check_finite=check_finite,
    )
