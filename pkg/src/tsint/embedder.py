"""Small embedding network with hand-written gradients and the EMA teacher.

The model is ``x -> [tanh](x W1 + b1) -> W2 + b2 -> L2-normalize`` for depth 2,
or ``x -> x W1 + b1 -> L2-normalize`` for depth 1. Everything runs in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, FormatError, NumericError

NORM_FLOOR = 1e-12
NUDGE = 1e-6

CKPT_MAGIC = b"NMLP"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIIIIB")


@dataclass(frozen=True)
class Architecture:
    d_in: int
    d_out: int
    hidden: int = 0
    nonlinear: bool = True

    @property
    def depth(self):
        return 2 if self.hidden else 1

    def shapes(self):
        if self.hidden:
            return [(self.d_in, self.hidden), (self.hidden,),
                    (self.hidden, self.d_out), (self.d_out,)]
        return [(self.d_in, self.d_out), (self.d_out,)]


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Weights and biases, stored as ``[W1, b1]`` or ``[W1, b1, W2, b2]``.

    The same container holds gradients.
    """

    arch: Architecture
    tensors: tuple

    def __post_init__(self):
        tensors = tuple(np.asarray(t, dtype=np.float64) for t in self.tensors)
        shapes = self.arch.shapes()
        if len(tensors) != len(shapes) or any(t.shape != s for t, s in zip(tensors, shapes)):
            raise ContractError(
                f"tensor shapes {[t.shape for t in tensors]} do not match {shapes}"
            )
        object.__setattr__(self, "tensors", tensors)

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.arch == other.arch and all(
            np.array_equal(a, b) for a, b in zip(self.tensors, other.tensors)
        )

    def copy(self):
        return ModelParams(self.arch, tuple(t.copy() for t in self.tensors))

    def is_finite(self):
        return all(np.all(np.isfinite(t)) for t in self.tensors)

    def flat(self):
        return np.concatenate([t.ravel() for t in self.tensors])

    @classmethod
    def from_flat(cls, arch, vec):
        vec = np.asarray(vec, dtype=np.float64)
        out, pos = [], 0
        for shape in arch.shapes():
            size = int(np.prod(shape))
            out.append(vec[pos:pos + size].reshape(shape).copy())
            pos += size
        if pos != vec.size:
            raise ContractError(f"flat vector has {vec.size} entries, expected {pos}")
        return cls(arch, tuple(out))


@dataclass(frozen=True)
class TeacherState:
    params: ModelParams
    alpha: float = 0.99


def init_params(arch: Architecture, seed: int, scale: float = 1.0) -> ModelParams:
    """Gaussian weights with std ``scale / sqrt(fan_in)``, zero biases."""
    if arch.d_in < 1 or arch.d_out < 1 or arch.hidden < 0:
        raise ConfigError(f"invalid architecture {arch}")
    rng = np.random.default_rng(seed)
    tensors = []
    for shape in arch.shapes():
        if len(shape) == 2:
            tensors.append(rng.standard_normal(shape) * (scale / np.sqrt(shape[0])))
        else:
            tensors.append(np.zeros(shape))
    return ModelParams(arch, tuple(tensors))


def identity_params(dim: int) -> ModelParams:
    arch = Architecture(dim, dim, 0)
    return ModelParams(arch, (np.eye(dim), np.zeros(dim)))


def _check_input(p: ModelParams, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.arch.d_in:
        raise ContractError(f"input shape {x.shape} incompatible with d_in={p.arch.d_in}")
    if not np.all(np.isfinite(x)):
        raise ContractError("input contains non-finite values")
    return x


def _forward_cache(p: ModelParams, x):
    if p.arch.hidden:
        w1, b1, w2, b2 = p.tensors
        pre = x @ w1 + b1
        act = np.tanh(pre) if p.arch.nonlinear else pre
        u = act @ w2 + b2
        cache = (x, act)
    else:
        w1, b1 = p.tensors
        u = x @ w1 + b1
        cache = (x, None)
    norms = np.linalg.norm(u, axis=1)
    tiny = norms < NORM_FLOOR
    if np.any(tiny):
        u = u.copy()
        u[tiny] += NUDGE / np.sqrt(u.shape[1])
        norms = np.linalg.norm(u, axis=1)
    z = u / norms[:, None]
    return z, norms, cache


def forward(p: ModelParams, x) -> np.ndarray:
    """Embed rows of ``x``; every output row has unit Euclidean norm."""
    x = _check_input(p, x)
    return _forward_cache(p, x)[0]


def backward(p: ModelParams, x, grad_z) -> ModelParams:
    """Gradient of ``sum(grad_z * forward(p, x))`` with respect to the parameters."""
    x = _check_input(p, x)
    grad_z = np.asarray(grad_z, dtype=np.float64)
    if grad_z.shape != (x.shape[0], p.arch.d_out):
        raise ContractError(f"grad_z shape {grad_z.shape} != {(x.shape[0], p.arch.d_out)}")
    if not np.all(np.isfinite(grad_z)):
        raise ContractError("grad_z contains non-finite values")
    z, norms, (x, act) = _forward_cache(p, x)
    # Jacobian of u -> u/|u|: (I - z z^T) / |u|
    grad_u = (grad_z - z * np.sum(z * grad_z, axis=1, keepdims=True)) / norms[:, None]
    if p.arch.hidden:
        w1, b1, w2, b2 = p.tensors
        g_w2 = act.T @ grad_u
        g_b2 = grad_u.sum(axis=0)
        grad_act = grad_u @ w2.T
        grad_pre = grad_act * (1.0 - act ** 2) if p.arch.nonlinear else grad_act
        g_w1 = x.T @ grad_pre
        g_b1 = grad_pre.sum(axis=0)
        return ModelParams(p.arch, (g_w1, g_b1, g_w2, g_b2))
    return ModelParams(p.arch, (x.T @ grad_u, grad_u.sum(axis=0)))


def sgd_step(p: ModelParams, grads: ModelParams, lr: float) -> ModelParams:
    if not lr > 0:
        raise ConfigError(f"learning rate must be > 0, got {lr}")
    if grads.arch != p.arch:
        raise ContractError("gradient architecture does not match parameters")
    if not grads.is_finite():
        raise NumericError("non-finite gradient; aborting training step")
    return ModelParams(p.arch, tuple(t - lr * g for t, g in zip(p.tensors, grads.tensors)))


def ema_update(t: TeacherState, p: ModelParams) -> TeacherState:
    """theta* <- alpha * theta* + (1 - alpha) * theta, elementwise."""
    if t.params.arch != p.arch:
        raise ContractError("teacher and main model architectures differ")
    a = t.alpha
    if not 0.0 <= a <= 1.0:
        raise ConfigError(f"EMA momentum must be in [0, 1], got {a}")
    new = tuple(a * tt + (1.0 - a) * pt for tt, pt in zip(t.params.tensors, p.tensors))
    return TeacherState(ModelParams(p.arch, new), a)


def save_checkpoint(p: ModelParams, path) -> None:
    a = p.arch
    header = _CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, a.depth, a.d_in, a.hidden,
                               a.d_out, int(a.nonlinear))
    with open(path, "wb") as fh:
        fh.write(header)
        for t in p.tensors:
            fh.write(t.astype("<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    data = Path(path).read_bytes()
    if len(data) < _CKPT_HEADER.size:
        raise FormatError(f"{path}: checkpoint header truncated", len(data))
    magic, version, depth, d_in, hidden, d_out, nonlinear = _CKPT_HEADER.unpack_from(data, 0)
    if magic != CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {CKPT_MAGIC!r}", 0)
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}", 4)
    if depth != (2 if hidden else 1):
        raise FormatError(f"{path}: depth {depth} inconsistent with hidden width {hidden}", 8)
    arch = Architecture(d_in, d_out, hidden, bool(nonlinear))
    n_values = sum(int(np.prod(s)) for s in arch.shapes())
    need = _CKPT_HEADER.size + 8 * n_values
    if len(data) != need:
        raise FormatError(
            f"{path}: expected {need} bytes, found {len(data)}", min(len(data), need)
        )
    vec = np.frombuffer(data, dtype="<f8", offset=_CKPT_HEADER.size)
    return ModelParams.from_flat(arch, vec.astype(np.float64))
