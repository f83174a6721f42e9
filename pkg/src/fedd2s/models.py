"""Reference architectures and the compact text form used by run configs.

Convolutions downsample with 3x3 kernels, stride 2, padding 1 in the two
reference stacks; the desk-scale stack keeps two of its three convs at
stride 1 so a 4x4 input survives the full pipeline. Layer indices are
1-based and include the flatten layer.
"""

from __future__ import annotations

import re

from .errors import ConfigError
from .nn import Conv2D, Dense, Flatten, ModelSpec


def m1_spec(classes: int = 10, input_shape=(32, 32, 3)) -> ModelSpec:
    """Three conv layers (8, 16, 32 channels) and a 32-16-classes dense head."""
    return ModelSpec(
        tuple(input_shape),
        (
            Conv2D(8, 3, 2, 1),
            Conv2D(16, 3, 2, 1),
            Conv2D(32, 3, 2, 1),
            Flatten(),
            Dense(32),
            Dense(16),
            Dense(classes, activation="none"),
        ),
    )


def m2_spec(classes: int = 62, input_shape=(28, 28, 1)) -> ModelSpec:
    """Three conv layers (16, 64, 128 channels) and a 128-32-classes dense head."""
    return ModelSpec(
        tuple(input_shape),
        (
            Conv2D(16, 3, 2, 1),
            Conv2D(64, 3, 2, 1),
            Conv2D(128, 3, 2, 1),
            Flatten(),
            Dense(128),
            Dense(32),
            Dense(classes, activation="none"),
        ),
    )


def desk_spec(classes: int = 4, input_shape=(4, 4, 1)) -> ModelSpec:
    """Tiny three-conv stack (~2k parameters) for second-scale experiments.

    Mirrors the reference stacks' conv/conv/conv/flatten/dense/dense shape so
    drop sets that start at the second conv exist here too.
    """
    return ModelSpec(
        tuple(input_shape),
        (
            Conv2D(4, 3, 1, 1),
            Conv2D(8, 3, 2, 1),
            Conv2D(12, 3, 1, 1),
            Flatten(),
            Dense(16),
            Dense(classes, activation="none"),
        ),
    )


ARCHITECTURES = {"m1": m1_spec, "m2": m2_spec, "desk": desk_spec}


def flatten_index(spec: ModelSpec) -> int:
    for i, layer in enumerate(spec.layers, start=1):
        if isinstance(layer, Flatten):
            return i
    raise ConfigError("architecture has no flatten layer")


def default_drop_set(spec: ModelSpec) -> tuple:
    """Deepest conv layer plus every dense layer, shallow to deep.

    For the reference stacks this is the [C_last, F1, ..., F_out] pattern.
    """
    convs = [i for i, l in enumerate(spec.layers, start=1) if isinstance(l, Conv2D)]
    denses = [i for i, l in enumerate(spec.layers, start=1) if isinstance(l, Dense)]
    if not denses:
        raise ConfigError("architecture has no dense layers")
    return tuple((convs[-1:] if convs else []) + denses)


_TOKEN = re.compile(r"^(conv|dense|flatten|in)(?:\(([^)]*)\))?$")


def parse_arch(text: str, classes: int, input_shape=None) -> ModelSpec:
    """Build a ModelSpec from a name ('desk', 'm1', 'm2') or a layer string.

    Layer strings look like 'in(4,4,1) conv(6,3,1,1) conv(12,3,2,1) flatten
    dense(16) dense(4)'; tokens may also be separated by '|'. The last dense
    layer is the logits layer and must match the class count. For named
    architectures input_shape (when given, usually from the dataset)
    overrides the builder default; layer strings pin their own in(...).
    """
    name = text.strip().lower()
    if name in ARCHITECTURES:
        if input_shape is not None:
            return ARCHITECTURES[name](classes=classes, input_shape=tuple(input_shape))
        return ARCHITECTURES[name](classes=classes)
    tokens = [t for t in re.split(r"[|\s]+", text.strip()) if t]
    if not tokens:
        raise ConfigError("empty architecture string")
    input_shape = None
    layers: list = []
    for tok in tokens:
        m = _TOKEN.match(tok.lower())
        if not m:
            raise ConfigError(f"cannot parse architecture token {tok!r}")
        kind, argstr = m.group(1), m.group(2)
        args = [int(a) for a in argstr.split(",")] if argstr else []
        if kind == "in":
            if len(args) != 3:
                raise ConfigError(f"in(...) needs H,W,C, got {tok!r}")
            input_shape = tuple(args)
        elif kind == "conv":
            if len(args) != 4:
                raise ConfigError(f"conv(...) needs out_channels,kernel,stride,padding, got {tok!r}")
            layers.append(Conv2D(*args))
        elif kind == "flatten":
            layers.append(Flatten())
        else:
            if len(args) != 1:
                raise ConfigError(f"dense(...) needs a unit count, got {tok!r}")
            layers.append(Dense(args[0]))
    if input_shape is None:
        raise ConfigError("architecture string must start with in(H,W,C)")
    if not layers or not isinstance(layers[-1], Dense):
        raise ConfigError("architecture must end with a dense logits layer")
    last = layers[-1]
    if last.units != classes:
        raise ConfigError(f"output layer has {last.units} units but the task has {classes} classes")
    layers[-1] = Dense(last.units, activation="none")
    return ModelSpec(input_shape, tuple(layers))
