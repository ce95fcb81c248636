"""Dense MLP autoencoders with an explicit encoder/decoder split.

Parameters live in one flat float64 vector; ``Net.views`` slices it into
per-layer ``(W, b)`` pairs without copying. Weights are stored fan-in by
fan-out so a batch of row vectors maps as ``X @ W + b``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import diffmath as dm
from .diffmath import ShapeError
from .rng import CounterRNG

CHECKPOINT_FORMAT = "aeshape-checkpoint"
CHECKPOINT_VERSION = 1


class ParseError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class Activation(str, Enum):
    TANH = "tanh"
    SOFTPLUS = "softplus"
    IDENTITY = "identity"

    def apply(self, h):
        if self is Activation.TANH:
            return dm.tanh(h)
        if self is Activation.SOFTPLUS:
            return dm.softplus(h)
        return h


@dataclass(frozen=True)
class ArchSpec:
    layer_widths: tuple[int, ...]
    latent_index: int
    input_dim: int
    activation: Activation = Activation.TANH

    def __post_init__(self):
        if not self.layer_widths:
            raise ParseError("an autoencoder needs at least one hidden layer")
        if any(w < 1 for w in self.layer_widths) or self.input_dim < 1:
            raise ParseError("layer widths and input_dim must be >= 1")
        if not 0 <= self.latent_index < len(self.layer_widths):
            raise ParseError(
                f"latent index {self.latent_index} outside 0..{len(self.layer_widths) - 1}"
            )

    @property
    def latent_dim(self) -> int:
        return self.layer_widths[self.latent_index]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.layer_widths, self.input_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in self.shapes)

    def to_string(self) -> str:
        return "-".join(str(w) for w in self.layer_widths)


def auto_latent_index(widths) -> int:
    """Unique narrowest layer if there is one, otherwise the (earlier) middle layer."""
    narrow = min(widths)
    hits = [i for i, w in enumerate(widths) if w == narrow]
    if len(hits) == 1:
        return hits[0]
    return (len(widths) - 1) // 2


def parse_arch(
    spec: str,
    input_dim: int,
    latent: int | str = "auto",
    activation: Activation | str = Activation.TANH,
) -> ArchSpec:
    """Parse a width chain such as ``"50-100-1-100-50"`` (``--`` also accepted)."""
    text = spec.strip() if isinstance(spec, str) else ""
    if not text:
        raise ParseError("empty architecture spec")
    tokens = re.split(r"-+", text)
    widths = []
    for tok in tokens:
        tok = tok.strip()
        if not tok.isdigit() or int(tok) < 1:
            raise ParseError(f"bad layer width {tok!r} in {spec!r}")
        widths.append(int(tok))
    if latent == "auto":
        index = auto_latent_index(widths)
    else:
        try:
            index = int(latent)
        except (TypeError, ValueError):
            raise ParseError(f"latent must be 'auto' or an index, got {latent!r}") from None
        if not 0 <= index < len(widths):
            raise ParseError(f"latent index {index} out of range for {len(widths)} hidden layers")
    try:
        act = Activation(activation)
    except ValueError:
        raise ParseError(f"unknown activation {activation!r}") from None
    return ArchSpec(tuple(widths), index, int(input_dim), act)


@dataclass
class Net:
    arch: ArchSpec
    params: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.arch.n_params,):
            raise ShapeError(
                f"expected {self.arch.n_params} parameters for {self.arch.to_string()}, "
                f"got {self.params.shape}"
            )

    def views(self, flat=None) -> list[tuple[np.ndarray, np.ndarray]]:
        flat = self.params if flat is None else flat
        out, at = [], 0
        for a, b in self.arch.shapes:
            W = flat[at : at + a * b].reshape(a, b)
            at += a * b
            out.append((W, flat[at : at + b]))
            at += b
        return out

    def with_params(self, params) -> "Net":
        return Net(self.arch, np.array(params, dtype=np.float64), self.seed)

    def bind(self, layers=None) -> "BoundNet":
        if layers is None:
            layers = [(dm.Tensor(W), dm.Tensor(b)) for W, b in self.views()]
        return BoundNet(self.arch, layers)

    @property
    def input_dim(self) -> int:
        return self.arch.input_dim

    @property
    def latent_dim(self) -> int:
        return self.arch.latent_dim


@dataclass
class BoundNet:
    """A Net whose layers are tape tensors, so maps built from it can be differentiated."""

    arch: ArchSpec
    layers: list = field(repr=False)

    @property
    def input_dim(self) -> int:
        return self.arch.input_dim

    @property
    def latent_dim(self) -> int:
        return self.arch.latent_dim

    def bind(self, layers=None) -> "BoundNet":
        return self

    def _run(self, h, start, stop):
        last = len(self.layers) - 1
        for i in range(start, stop):
            W, b = self.layers[i]
            h = dm.add(dm.matmul(h, W), b)
            if i != last:
                h = self.arch.activation.apply(h)
        return h

    def encode(self, X):
        return self._run(X, 0, self.arch.latent_index + 1)

    def decode(self, Z):
        return self._run(Z, self.arch.latent_index + 1, len(self.layers))


class FunctionalAutoencoder:
    """Encoder and decoder given as tape-op callables on row batches.

    Used for analytically constructed models (exact circle decoders and the
    like) that no finite MLP represents exactly.
    """

    def __init__(self, encoder, decoder, input_dim: int, latent_dim: int):
        self.encoder = encoder
        self.decoder = decoder
        self.input_dim = input_dim
        self.latent_dim = latent_dim

    def bind(self, layers=None):
        return self

    def encode(self, X):
        return self.encoder(X)

    def decode(self, Z):
        return self.decoder(Z)


def init(arch: ArchSpec, seed: int) -> Net:
    """Gaussian weights with variance 1/fan_in, zero biases."""
    rng = CounterRNG(seed, "init")
    parts = []
    for a, b in arch.shapes:
        parts.append(rng.normal(a * b) / np.sqrt(a))
        parts.append(np.zeros(b))
    return Net(arch, np.concatenate(parts), seed)


def value_and_grad_params(net: Net, fn) -> tuple[float, np.ndarray, object]:
    """Evaluate ``fn(bound_net)`` and its gradient in the flat parameter layout.

    ``fn`` may return a tensor or a ``(tensor, aux)`` pair; aux is passed through.
    """
    views = [a for pair in net.views() for a in pair]
    aux = []

    def objective(*leaves):
        layers = list(zip(leaves[0::2], leaves[1::2]))
        out = fn(net.bind(layers))
        if isinstance(out, tuple):
            out, extra = out
            aux.append(extra)
        return out

    value, grads = dm.value_and_grad(objective, *views)
    flat = np.concatenate([g.reshape(-1) for g in grads])
    return value, flat, (aux[0] if aux else None)


def _as_batch(x, dim: int, what: str):
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = arr.reshape(1, -1) if single else arr
    if batch.ndim != 2 or batch.shape[1] != dim:
        raise ShapeError(f"{what} has shape {arr.shape}, expected trailing dimension {dim}")
    return batch, single


def _numpy_map(model, x, dim, what, fn):
    batch, single = _as_batch(x, dim, what)
    with dm.no_record():
        out = fn(model.bind(), dm.Tensor(batch)).value
    return out[0] if single else out


def encode(net, x) -> np.ndarray:
    return _numpy_map(net, x, net.input_dim, "input", lambda m, X: m.encode(X))


def decode(net, z) -> np.ndarray:
    return _numpy_map(net, z, net.latent_dim, "latent", lambda m, Z: m.decode(Z))


def reconstruct(net, x) -> np.ndarray:
    return decode(net, encode(net, x))


# -- checkpoints ------------------------------------------------------------


def dumps_checkpoint(net: Net) -> str:
    lines = [
        f"format = {CHECKPOINT_FORMAT}",
        f"version = {CHECKPOINT_VERSION}",
        f"arch = {net.arch.to_string()}",
        f"input_dim = {net.arch.input_dim}",
        f"latent_index = {net.arch.latent_index}",
        f"activation = {net.arch.activation.value}",
        f"seed = {'none' if net.seed is None else net.seed}",
        f"n_params = {net.params.size}",
        "params:",
    ]
    lines.extend(format(float(v), ".17g") for v in net.params)
    return "\n".join(lines) + "\n"


def loads_checkpoint(text: str) -> Net:
    head, sep, body = text.partition("params:\n")
    if not sep:
        raise CheckpointError("checkpoint has no params section")
    meta = {}
    for line in head.splitlines():
        if not line.strip():
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise CheckpointError(f"malformed checkpoint line {line!r}")
        meta[key.strip()] = value.strip()
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"not a checkpoint (format={meta.get('format')!r})")
    if meta.get("version") != str(CHECKPOINT_VERSION):
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')!r}")
    try:
        arch = parse_arch(
            meta["arch"], int(meta["input_dim"]), int(meta["latent_index"]), meta["activation"]
        )
        params = np.array([float(v) for v in body.split()], dtype=np.float64)
        n = int(meta["n_params"])
    except KeyError as err:
        raise CheckpointError(f"checkpoint missing key {err}") from None
    except ValueError as err:
        raise CheckpointError(str(err)) from None
    if params.size != n:
        raise CheckpointError(f"expected {n} parameters, found {params.size}")
    seed = None if meta.get("seed", "none") == "none" else int(meta["seed"])
    return Net(arch, params, seed)


def save_checkpoint(net: Net, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(Path(path), dumps_checkpoint(net))


def load_checkpoint(path) -> Net:
    return loads_checkpoint(Path(path).read_text())
