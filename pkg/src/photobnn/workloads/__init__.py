"""BNN model descriptions: parsing, built-in networks and synthetic tensors.

Model files are line oriented. ``#`` starts a comment. Records::

    model <name>                       optional, first record
    input <h> <w> <c>                  optional network input shape
    <kind> <in_h> <in_w> <in_c> <k_h> <k_w> <out_c> <stride> <padding> [name=<id>] [in=<ref>]
    concat in=<ref>,<ref>[,...] [name=<id>]

``kind`` is one of ``conv``, ``dwconv`` (depthwise), ``fc`` (a convolution
whose kernel covers the whole input) or ``pool``. Layers are numbered from
0 in file order. A layer reads the previous layer's output unless ``in=``
names another source: ``input``, a layer index, or ``<index>/<k>`` for the
first ``1/k`` of that layer's channels (channel split). ``concat`` joins
its sources along the channel axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import ModelParseError, ValidationError
from ..mapping import ConvWorkload

COMPUTE_KINDS = ("conv", "dwconv", "fc")
LAYER_KINDS = COMPUTE_KINDS + ("pool", "concat")
BUILTIN_NAMES = ("vgg-small", "resnet18", "mobilenet_v2", "shufflenet_v2")
MAX_VECTOR_SIZE = 4608

_ALIASES = {
    "vgg_small": "vgg-small", "vggsmall": "vgg-small", "vgg-small": "vgg-small",
    "resnet18": "resnet18", "resnet-18": "resnet18",
    "mobilenet_v2": "mobilenet_v2", "mobilenet-v2": "mobilenet_v2", "mobilenetv2": "mobilenet_v2",
    "shufflenet_v2": "shufflenet_v2", "shufflenet-v2": "shufflenet_v2", "shufflenetv2": "shufflenet_v2",
}


@dataclass(frozen=True)
class Source:
    layer: int | None  # None is the network input
    divisor: int = 1

    def __str__(self):
        base = "input" if self.layer is None else str(self.layer)
        return base if self.divisor == 1 else f"{base}/{self.divisor}"


@dataclass(frozen=True)
class Layer:
    kind: str
    workload: ConvWorkload | None
    sources: tuple[Source, ...] | None = None
    name: str | None = None

    @property
    def is_compute(self) -> bool:
        return self.kind in COMPUTE_KINDS

    def output_shape(self):
        w = self.workload
        return w.output_height, w.output_width, w.output_channels


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: tuple[Layer, ...]
    input_shape: tuple[int, int, int] | None = None

    @property
    def compute_layers(self) -> list[Layer]:
        return [layer for layer in self.layers if layer.is_compute]

    @property
    def max_vector_size(self) -> int:
        return max(layer.workload.s for layer in self.compute_layers)


# --------------------------------------------------------------------------
# Parsing


def _parse_ref(token, line, index):
    base, _, div = token.partition("/")
    try:
        layer = None if base == "input" else int(base)
        divisor = int(div) if div else 1
    except ValueError:
        raise ModelParseError(f"bad layer reference {token!r}", line, index) from None
    if divisor < 1 or (layer is not None and not 0 <= layer < index):
        raise ModelParseError(f"layer reference {token!r} must point backwards", line, index)
    return Source(layer, divisor)


def _parse_attrs(tokens, line, index):
    attrs = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or key not in ("name", "in"):
            raise ModelParseError(f"unexpected token {tok!r}", line, index)
        attrs[key] = value
    return attrs


def parse_model(text: str, name: str | None = None) -> ModelSpec:
    """Parse a model description and validate its shape chain."""
    model_name, input_shape = name, None
    layers: list[Layer] = []
    line_of: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        head, rest = tokens[0], tokens[1:]
        index = len(layers)
        if head == "model":
            if len(rest) != 1 or layers:
                raise ModelParseError("'model <name>' must precede all layers", lineno)
            model_name = model_name or rest[0]
            continue
        if head == "input":
            try:
                dims = tuple(int(t) for t in rest)
            except ValueError:
                dims = ()
            if len(dims) != 3 or min(dims) < 1 or layers:
                raise ModelParseError("'input <h> <w> <c>' must precede all layers", lineno)
            input_shape = dims
            continue
        if head not in LAYER_KINDS:
            raise ModelParseError(f"unknown layer kind {head!r}", lineno, index)
        if head == "concat":
            attrs = _parse_attrs(rest, lineno, index)
            if "in" not in attrs:
                raise ModelParseError("concat needs in=<ref>,<ref>", lineno, index)
            sources = tuple(_parse_ref(t, lineno, index) for t in attrs["in"].split(","))
            layers.append(Layer("concat", None, sources, attrs.get("name")))
            line_of.append(lineno)
            continue
        if len(rest) < 8:
            raise ModelParseError(f"{head} record needs 8 integer fields", lineno, index)
        try:
            dims = [int(t) for t in rest[:8]]
        except ValueError:
            raise ModelParseError("layer dimensions must be integers", lineno, index) from None
        attrs = _parse_attrs(rest[8:], lineno, index)
        ih, iw, ic, kh, kw, oc, stride, pad = dims
        try:
            workload = ConvWorkload(ih, iw, ic, kh, kw, oc, stride, pad,
                                    depthwise=head == "dwconv")
        except ValidationError as exc:
            raise ModelParseError(str(exc), lineno, index) from None
        if head == "pool" and oc != ic:
            raise ModelParseError("pool must keep the channel count", lineno, index)
        if head == "fc" and (kh, kw, stride, pad) != (ih, iw, 1, 0):
            raise ModelParseError("fc kernel must cover the whole input", lineno, index)
        sources = None
        if "in" in attrs:
            sources = (_parse_ref(attrs["in"], lineno, index),)
        layers.append(Layer(head, workload, sources, attrs.get("name")))
        line_of.append(lineno)
    if not layers:
        raise ModelParseError("model has no layers")
    spec = ModelSpec(model_name or "model", tuple(layers), input_shape)
    validate_shape_chain(spec, line_of)
    return spec


def validate_shape_chain(spec: ModelSpec, line_of=None) -> None:
    """Check every layer's declared input against the shape its sources produce."""
    shapes = []

    def source_shape(src, index):
        if src.layer is None:
            if spec.input_shape is None:
                raise ModelParseError("reference to 'input' without an input record",
                                      line_of and line_of[index], index)
            h, w, c = spec.input_shape
        else:
            h, w, c = shapes[src.layer]
        if c % src.divisor:
            raise ModelParseError(f"cannot split {c} channels by {src.divisor}",
                                  line_of and line_of[index], index)
        return h, w, c // src.divisor

    for index, layer in enumerate(spec.layers):
        line = line_of[index] if line_of else None
        if layer.kind == "concat":
            parts = [source_shape(s, index) for s in layer.sources]
            if len({p[:2] for p in parts}) != 1:
                raise ModelParseError(f"concat of mismatched spatial shapes {parts}", line, index)
            shapes.append((parts[0][0], parts[0][1], sum(p[2] for p in parts)))
            continue
        w = layer.workload
        declared = (w.input_height, w.input_width, w.input_channels)
        if layer.sources:
            got = source_shape(layer.sources[0], index)
        elif index > 0:
            got = shapes[index - 1]
        else:
            got = spec.input_shape or declared
        if got != declared:
            raise ModelParseError(
                f"declared input {declared} does not match producer output {got}", line, index
            )
        shapes.append(layer.output_shape())


def serialize(spec: ModelSpec) -> str:
    lines = [f"model {spec.name}"]
    if spec.input_shape is not None:
        lines.append("input {} {} {}".format(*spec.input_shape))
    for layer in spec.layers:
        attrs = []
        if layer.name:
            attrs.append(f"name={layer.name}")
        if layer.kind == "concat":
            refs = ",".join(str(s) for s in layer.sources)
            lines.append(" ".join(["concat", f"in={refs}"] + attrs))
            continue
        if layer.sources:
            attrs.append(f"in={layer.sources[0]}")
        w = layer.workload
        fields = [w.input_height, w.input_width, w.input_channels, w.kernel_height,
                  w.kernel_width, w.output_channels, w.stride, w.padding]
        lines.append(" ".join([layer.kind] + [str(f) for f in fields] + attrs))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Built-ins and loading


def canonical_name(name: str) -> str | None:
    return _ALIASES.get(name.lower())


def builtin_model(name: str) -> ModelSpec:
    key = canonical_name(name)
    if key is None:
        raise ValidationError(f"unknown built-in model {name!r}; known: {', '.join(BUILTIN_NAMES)}")
    text = resources.files(__package__).joinpath("data", f"{key}.model").read_text("utf-8")
    return parse_model(text)


def builtin_models() -> list[ModelSpec]:
    return [builtin_model(name) for name in BUILTIN_NAMES]


def load_model(name_or_path) -> ModelSpec:
    """Resolve a built-in model name or read a model file."""
    if isinstance(name_or_path, str) and canonical_name(name_or_path):
        return builtin_model(name_or_path)
    path = Path(name_or_path)
    if not path.exists():
        raise ValidationError(f"no built-in model or file named {str(name_or_path)!r}")
    return parse_model(path.read_text("utf-8"), None)


# --------------------------------------------------------------------------
# Synthetic tensors


class BinaryTensorSet:
    """Per-layer {0,1} input and weight tensors, generated lazily from a seed.

    Layer ``i`` draws from its own generator seeded with ``(seed, i)`` so
    any subset of layers can be materialized independently. Inputs are
    (H, W, C); weights are (K, kH, kW, C), or (C, kH, kW, 1) for depthwise
    layers.
    """

    def __init__(self, spec: ModelSpec, seed: int):
        self.spec = spec
        self.seed = int(seed)
        self._indices = [i for i, layer in enumerate(spec.layers) if layer.is_compute]

    def __len__(self):
        return len(self._indices)

    def __iter__(self):
        for i in self._indices:
            yield i, self[i]

    def layer_indices(self):
        return list(self._indices)

    def __getitem__(self, index):
        layer = self.spec.layers[index]
        if not layer.is_compute:
            raise KeyError(f"layer {index} ({layer.kind}) carries no tensors")
        w = layer.workload
        rng = np.random.default_rng([self.seed, index])
        x = rng.integers(0, 2, size=(w.input_height, w.input_width, w.input_channels), dtype=np.int8)
        wc = 1 if w.depthwise else w.input_channels
        k = rng.integers(0, 2, size=(w.output_channels, w.kernel_height, w.kernel_width, wc),
                         dtype=np.int8)
        return x, k


def synthesize_tensors(spec: ModelSpec, seed: int = 0) -> BinaryTensorSet:
    return BinaryTensorSet(spec, seed)
