"""Small MLP stack on numpy: explicit forward/backward, Adam, running
normalizers, and JSON-manifest + float64-blob checkpoints. No autograd.

Policy and value nets share one topology: a window encoder over the
relative-waypoint block, a trunk over [scalars, encoding], and a head.
The policy head emits action means with a state-independent log-std;
the value head emits one scalar trained in return-normalized space and
de-normalized on read, so scores stay in raw reward units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

ACT_CODES = {"identity": _kernels.ACT_IDENTITY, "tanh": _kernels.ACT_TANH}
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class Layer:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    act: str

    def __post_init__(self):
        if self.act not in ACT_CODES:
            raise ValueError(f"unknown activation {self.act!r}")
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise ValueError("layer shapes inconsistent")


@dataclass
class Mlp:
    layers: list[Layer]

    @property
    def in_dim(self) -> int:
        return self.layers[0].w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].w.shape[0]


def orthogonal_init(rng: np.random.Generator, n_out: int, n_in: int,
                    gain: float) -> np.ndarray:
    a = rng.standard_normal((n_out, n_in) if n_out >= n_in else (n_in, n_out))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # fix the sign ambiguity
    if n_out < n_in:
        q = q.T
    return np.ascontiguousarray(gain * q[:n_out, :n_in], dtype=np.float64)


def mlp_new(rng, dims: list[int], acts: list[str], gains: list[float]) -> Mlp:
    layers = []
    for i in range(len(dims) - 1):
        w = orthogonal_init(rng, dims[i + 1], dims[i], gains[i])
        layers.append(Layer(w=w, b=np.zeros(dims[i + 1]), act=acts[i]))
    return Mlp(layers)


def mlp_forward(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    """Single-sample forward through the kernel backend."""
    for layer in mlp.layers:
        out = np.empty(layer.w.shape[0], dtype=np.float64)
        _kernels.affine_act(layer.w, layer.b, x, ACT_CODES[layer.act], out)
        x = out
    return x


def mlp_forward_batch(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    for layer in mlp.layers:
        x = x @ layer.w.T + layer.b
        if layer.act == "tanh":
            np.tanh(x, out=x)
    return x


def mlp_forward_cached(mlp: Mlp, x: np.ndarray):
    """Batched forward keeping (input, output) per layer for backward."""
    caches = []
    for layer in mlp.layers:
        y = x @ layer.w.T + layer.b
        if layer.act == "tanh":
            np.tanh(y, out=y)
        caches.append((x, y))
        x = y
    return x, caches


def mlp_backward(mlp: Mlp, caches, dy: np.ndarray):
    """Returns ([(dw, db) per layer], dx). dy is the gradient at the output."""
    grads = [None] * len(mlp.layers)
    for i in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[i]
        x_in, y_out = caches[i]
        dz = dy * (1.0 - y_out * y_out) if layer.act == "tanh" else dy
        grads[i] = (dz.T @ x_in, dz.sum(axis=0))
        dy = dz @ layer.w
    return grads, dy


class RunningNorm:
    """Streaming mean/variance (parallel Welford merge). Starts as a
    near-identity transform; normalized values are clipped to +-clip."""

    __slots__ = ("mean", "var", "count", "clip")

    def __init__(self, dim: int, clip: float = 10.0):
        self.mean = np.zeros(dim, dtype=np.float64)
        self.var = np.ones(dim, dtype=np.float64)
        self.count = 1e-4
        self.clip = float(clip)

    def update(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim == 1:
            batch = batch[:, None]
        n = batch.shape[0]
        if n == 0:
            return
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        total = self.count + n
        delta = b_mean - self.mean
        self.mean = self.mean + delta * (n / total)
        m_a = self.var * self.count
        m_b = b_var * n
        self.var = (m_a + m_b + delta * delta * (self.count * n / total)) / total
        self.count = total

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var + 1e-8)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / self.std
        return np.clip(z, -self.clip, self.clip, out=z)

    def state_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "var": self.var.tolist(),
                "count": self.count, "clip": self.clip}

    @classmethod
    def from_state(cls, state: dict) -> "RunningNorm":
        norm = cls(len(state["mean"]), clip=state["clip"])
        norm.mean = np.asarray(state["mean"], dtype=np.float64)
        norm.var = np.asarray(state["var"], dtype=np.float64)
        norm.count = float(state["count"])
        return norm


@dataclass
class GaussianPolicy:
    obs_norm: RunningNorm
    encoder: Mlp
    trunk: Mlp
    mean_head: Mlp
    log_std: np.ndarray  # (action_dim,), clamped to [LOG_STD_MIN, LOG_STD_MAX]

    def __post_init__(self):
        self.log_std = np.clip(np.asarray(self.log_std, dtype=np.float64),
                               LOG_STD_MIN, LOG_STD_MAX)

    @property
    def window(self) -> int:
        return self.encoder.in_dim // 3

    @property
    def action_dim(self) -> int:
        return self.mean_head.out_dim

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        """Deterministic action (the Gaussian mean, unclamped)."""
        return composite_forward(self, obs)


@dataclass
class ValueNet:
    obs_norm: RunningNorm
    encoder: Mlp
    trunk: Mlp
    head: Mlp
    ret_norm: RunningNorm  # dim 1; de-normalizes head output to reward units

    @property
    def window(self) -> int:
        return self.encoder.in_dim // 3


def policy_new(window: int, rng: np.random.Generator, hidden: int = 64,
               encoder_out: int = 64, action_dim: int = 2,
               log_std_init: float = -0.5) -> GaussianPolicy:
    root2 = math.sqrt(2.0)
    return GaussianPolicy(
        obs_norm=RunningNorm(3 * (window + 1)),
        encoder=mlp_new(rng, [3 * window, encoder_out], ["tanh"], [root2]),
        trunk=mlp_new(rng, [3 + encoder_out, hidden, hidden],
                      ["tanh", "tanh"], [root2, root2]),
        mean_head=mlp_new(rng, [hidden, action_dim], ["identity"], [0.01]),
        log_std=np.full(action_dim, log_std_init),
    )


def value_new(window: int, rng: np.random.Generator, hidden: int = 64,
              encoder_out: int = 64) -> ValueNet:
    root2 = math.sqrt(2.0)
    return ValueNet(
        obs_norm=RunningNorm(3 * (window + 1)),
        encoder=mlp_new(rng, [3 * window, encoder_out], ["tanh"], [root2]),
        trunk=mlp_new(rng, [3 + encoder_out, hidden, hidden],
                      ["tanh", "tanh"], [root2, root2]),
        head=mlp_new(rng, [hidden, 1], ["identity"], [1.0]),
        ret_norm=RunningNorm(1),
    )


# -- shared composite forward ------------------------------------------------

def _head_of(net) -> Mlp:
    return net.mean_head if isinstance(net, GaussianPolicy) else net.head


def composite_forward(net, obs: np.ndarray) -> np.ndarray:
    """Single-observation forward (normalize, encode window, trunk, head)."""
    z = net.obs_norm.normalize(np.asarray(obs, dtype=np.float64))
    e = mlp_forward(net.encoder, np.ascontiguousarray(z[3:]))
    h = mlp_forward(net.trunk, np.concatenate((z[:3], e)))
    return mlp_forward(_head_of(net), h)


def composite_forward_batch(net, obs: np.ndarray) -> np.ndarray:
    z = net.obs_norm.normalize(np.asarray(obs, dtype=np.float64))
    e = mlp_forward_batch(net.encoder, z[:, 3:])
    h = mlp_forward_batch(net.trunk, np.concatenate((z[:, :3], e), axis=1))
    return mlp_forward_batch(_head_of(net), h)


def composite_forward_cached(net, obs: np.ndarray):
    z = net.obs_norm.normalize(np.asarray(obs, dtype=np.float64))
    e, c_enc = mlp_forward_cached(net.encoder, z[:, 3:])
    h, c_trunk = mlp_forward_cached(net.trunk, np.concatenate((z[:, :3], e), axis=1))
    y, c_head = mlp_forward_cached(_head_of(net), h)
    return y, (c_enc, c_trunk, c_head)


def composite_backward(net, caches, dy: np.ndarray) -> list[np.ndarray]:
    """Gradients for the net's arrays in `net_param_arrays` order (minus
    any extras such as log_std, which callers append themselves)."""
    c_enc, c_trunk, c_head = caches
    g_head, dh = mlp_backward(_head_of(net), c_head, dy)
    g_trunk, dtin = mlp_backward(net.trunk, c_trunk, dh)
    g_enc, _ = mlp_backward(net.encoder, c_enc, dtin[:, 3:])
    flat: list[np.ndarray] = []
    for dw, db in (*g_enc, *g_trunk, *g_head):
        flat.append(dw)
        flat.append(db)
    return flat


def net_param_arrays(net) -> list[np.ndarray]:
    """Trainable arrays in a fixed order (encoder, trunk, head[, log_std])."""
    arrays: list[np.ndarray] = []
    for mlp in (net.encoder, net.trunk, _head_of(net)):
        for layer in mlp.layers:
            arrays.append(layer.w)
            arrays.append(layer.b)
    if isinstance(net, GaussianPolicy):
        arrays.append(net.log_std)
    return arrays


# -- Gaussian policy ops -----------------------------------------------------

def policy_mean(policy: GaussianPolicy, obs: np.ndarray) -> np.ndarray:
    return composite_forward(policy, obs)


def policy_mean_batch(policy: GaussianPolicy, obs: np.ndarray) -> np.ndarray:
    return composite_forward_batch(policy, obs)


def _gauss_log_prob(raw, mean, log_std) -> float:
    z = (raw - mean) / np.exp(log_std)
    return float(-0.5 * np.sum(z * z) - np.sum(log_std) - 0.5 * len(mean) * _LOG_2PI)


def policy_sample(policy: GaussianPolicy, obs: np.ndarray,
                  rng: np.random.Generator):
    """Draw an action; returns (clamped action, log-prob of the raw draw).

    The log-prob is always that of the pre-clamp Gaussian sample, so
    saturated actions keep a consistent density under later updates.
    """
    action, _, log_prob = policy_sample_raw(policy, obs, rng)
    return action, log_prob


def policy_sample_raw(policy: GaussianPolicy, obs: np.ndarray,
                      rng: np.random.Generator):
    """Like policy_sample but also returns the pre-clamp draw."""
    mean = policy_mean(policy, obs)
    raw = mean + np.exp(policy.log_std) * rng.standard_normal(policy.action_dim)
    log_prob = _gauss_log_prob(raw, mean, policy.log_std)
    return np.clip(raw, -1.0, 1.0), raw, log_prob


def policy_log_prob(policy: GaussianPolicy, obs: np.ndarray,
                    action: np.ndarray) -> float:
    """Density of `action` treated as a pre-clamp draw."""
    mean = policy_mean(policy, obs)
    return _gauss_log_prob(np.asarray(action, dtype=np.float64), mean, policy.log_std)


def policy_entropy(policy: GaussianPolicy) -> float:
    return float(np.sum(policy.log_std) + 0.5 * policy.action_dim * (1.0 + _LOG_2PI))


# -- value net ops -----------------------------------------------------------

def value(valuenet: ValueNet, obs: np.ndarray) -> float:
    """Expected reward-to-go in raw reward units."""
    v_norm = composite_forward(valuenet, obs)[0]
    return float(v_norm * valuenet.ret_norm.std[0] + valuenet.ret_norm.mean[0])


def value_batch(valuenet: ValueNet, obs: np.ndarray) -> np.ndarray:
    v_norm = composite_forward_batch(valuenet, obs)[:, 0]
    return v_norm * valuenet.ret_norm.std[0] + valuenet.ret_norm.mean[0]


# -- optimizer ---------------------------------------------------------------

class Adam:
    """Adam over an explicit list of arrays, updated in place."""

    def __init__(self, params: list[np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale grads in place so their global L2 norm is at most max_norm."""
    total = 0.0
    for g in grads:
        total += float(np.sum(g * g))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


# -- checkpoints -------------------------------------------------------------

_KIND_POLICY = "gaussian_policy"
_KIND_VALUE = "value_net"


def _net_spec(mlp: Mlp) -> list[dict]:
    return [{"out": l.w.shape[0], "in": l.w.shape[1], "act": l.act}
            for l in mlp.layers]


def _checkpoint_paths(path):
    path = str(path)
    stem = path[: -len(".json")] if path.endswith(".json") else path
    return stem + ".json", stem + ".bin"


def _save(kind: str, nets: dict[str, Mlp], extras: dict[str, np.ndarray],
          norms: dict[str, RunningNorm], window: int, path) -> None:
    json_path, bin_path = _checkpoint_paths(path)
    order = []
    blobs = []
    for net_name, mlp in nets.items():
        for i, layer in enumerate(mlp.layers):
            order.append(f"{net_name}.{i}.w")
            blobs.append(layer.w)
            order.append(f"{net_name}.{i}.b")
            blobs.append(layer.b)
    for name, arr in extras.items():
        order.append(name)
        blobs.append(arr)
    manifest = {
        "kind": kind,
        "format": 1,
        "window": window,
        "nets": {name: _net_spec(mlp) for name, mlp in nets.items()},
        "extras": {name: list(arr.shape) for name, arr in extras.items()},
        "norms": {name: norm.state_dict() for name, norm in norms.items()},
        "order": order,
        "dtype": "<f8",
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    with open(bin_path, "wb") as fh:
        for arr in blobs:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _load(path, expect_kind: str):
    json_path, bin_path = _checkpoint_paths(path)
    with open(json_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("kind") != expect_kind:
        raise ValueError(
            f"checkpoint kind {manifest.get('kind')!r}, expected {expect_kind!r}"
        )
    raw = np.fromfile(bin_path, dtype="<f8")
    shapes: dict[str, tuple] = {}
    nets: dict[str, Mlp] = {}
    for name, spec in manifest["nets"].items():
        layers = []
        for i, entry in enumerate(spec):
            shapes[f"{name}.{i}.w"] = (entry["out"], entry["in"])
            shapes[f"{name}.{i}.b"] = (entry["out"],)
            layers.append(entry)
        nets[name] = layers  # placeholder, arrays filled below
    for name, shape in manifest["extras"].items():
        shapes[name] = tuple(shape)
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for name in manifest["order"]:
        shape = shapes[name]
        size = int(np.prod(shape)) if shape else 1
        arrays[name] = raw[offset : offset + size].reshape(shape).copy()
        offset += size
    if offset != raw.size:
        raise ValueError("checkpoint blob size does not match manifest")
    built: dict[str, Mlp] = {}
    for name, spec in manifest["nets"].items():
        built[name] = Mlp([
            Layer(w=arrays[f"{name}.{i}.w"], b=arrays[f"{name}.{i}.b"],
                  act=entry["act"])
            for i, entry in enumerate(spec)
        ])
    norms = {name: RunningNorm.from_state(state)
             for name, state in manifest["norms"].items()}
    extras = {name: arrays[name] for name in manifest["extras"]}
    return manifest, built, extras, norms


def save_policy(policy: GaussianPolicy, path) -> None:
    _save(_KIND_POLICY,
          {"encoder": policy.encoder, "trunk": policy.trunk,
           "mean_head": policy.mean_head},
          {"log_std": policy.log_std},
          {"obs_norm": policy.obs_norm},
          policy.window, path)


def load_policy(path) -> GaussianPolicy:
    manifest, nets, extras, norms = _load(path, _KIND_POLICY)
    policy = GaussianPolicy(
        obs_norm=norms["obs_norm"], encoder=nets["encoder"],
        trunk=nets["trunk"], mean_head=nets["mean_head"],
        log_std=extras["log_std"],
    )
    if policy.window != manifest["window"]:
        raise ValueError("checkpoint window inconsistent with encoder shape")
    return policy


def save_value(valuenet: ValueNet, path) -> None:
    _save(_KIND_VALUE,
          {"encoder": valuenet.encoder, "trunk": valuenet.trunk,
           "head": valuenet.head},
          {},
          {"obs_norm": valuenet.obs_norm, "ret_norm": valuenet.ret_norm},
          valuenet.window, path)


def load_value(path) -> ValueNet:
    manifest, nets, extras, norms = _load(path, _KIND_VALUE)
    valuenet = ValueNet(
        obs_norm=norms["obs_norm"], encoder=nets["encoder"],
        trunk=nets["trunk"], head=nets["head"], ret_norm=norms["ret_norm"],
    )
    if valuenet.window != manifest["window"]:
        raise ValueError("checkpoint window inconsistent with encoder shape")
    return valuenet
