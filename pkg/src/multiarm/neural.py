"""Policy and Q networks: LSTM state encoder over variable-length arm-state
sequences, tanh MLP heads, and a tanh-squashed Gaussian action distribution.

Networks run in float64 by default so gradient checks against central finite
differences are meaningful; float32 is available for inference benchmarks.
Gradients come from torch autograd and are verified against finite
differences in the test suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

STATE_DIM = 107
HIDDEN_DIM = 256
MLP_DIMS = (128, 64)
ACTION_DIM = 6
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0

CHECKPOINT_SCHEMA = 1


@dataclass(frozen=True)
class NetConfig:
    state_dim: int = STATE_DIM
    hidden_dim: int = HIDDEN_DIM
    mlp_dims: tuple = MLP_DIMS
    action_dim: int = ACTION_DIM


class LSTMEncoder(nn.Module):
    """Single-layer, single-direction LSTM with zero initial state; returns
    the final hidden state of each sequence."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        self.lstm = nn.LSTM(cfg.state_dim, cfg.hidden_dim, num_layers=1,
                            batch_first=True)
        self._init_weights()

    def _init_weights(self):
        h = self.cfg.hidden_dim
        for name, p in self.lstm.named_parameters():
            if "weight_hh" in name:
                for g in range(4):
                    nn.init.orthogonal_(p.data[g * h:(g + 1) * h])
            elif "bias" in name:
                p.data.zero_()
        # forget-gate bias +1 (gate order: input, forget, cell, output)
        self.lstm.bias_ih_l0.data[h:2 * h].fill_(1.0)

    def forward(self, padded, lengths):
        """padded: (B, Lmax, state_dim); lengths: (B,) ints >= 1."""
        packed = nn.utils.rnn.pack_padded_sequence(
            padded, lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, (h_n, _) = self.lstm(packed)
        return h_n.squeeze(0)


def _mlp(dims, final_tanh):
    layers = []
    for i in range(len(dims) - 1):
        layers.append(nn.Linear(dims[i], dims[i + 1]))
        if i < len(dims) - 2 or final_tanh:
            layers.append(nn.Tanh())
    return nn.Sequential(*layers)


class PolicyNet(nn.Module):
    """Encoder + 3 tanh layers -> 12 values: squash mean (first 6) and a
    tanh-bounded value mapped linearly onto [LOG_STD_MIN, LOG_STD_MAX]."""

    def __init__(self, cfg: NetConfig = None):
        super().__init__()
        self.cfg = cfg or NetConfig()
        c = self.cfg
        self.encoder = LSTMEncoder(c)
        self.head = _mlp((c.hidden_dim, *c.mlp_dims, 2 * c.action_dim), final_tanh=True)

    def forward(self, padded, lengths):
        out = self.head(self.encoder(padded, lengths))
        mean = out[..., :self.cfg.action_dim]
        unit = out[..., self.cfg.action_dim:]
        log_std = LOG_STD_MIN + 0.5 * (unit + 1.0) * (LOG_STD_MAX - LOG_STD_MIN)
        return mean, log_std


class QNet(nn.Module):
    """Same encoder; the action joins the embedding before the MLP; scalar
    output with no final activation."""

    def __init__(self, cfg: NetConfig = None):
        super().__init__()
        self.cfg = cfg or NetConfig()
        c = self.cfg
        self.encoder = LSTMEncoder(c)
        self.head = _mlp((c.hidden_dim + c.action_dim, *c.mlp_dims, 1), final_tanh=False)

    def forward(self, padded, lengths, action):
        s = self.encoder(padded, lengths)
        return self.head(torch.cat([s, action], dim=-1)).squeeze(-1)


# ---------------------------------------------------------------------------
# squashed Gaussian

def squashed_sample(mean, log_std, generator=None):
    """Reparameterized tanh-squashed Gaussian sample with its log-probability
    (exact change-of-variables correction)."""
    std = log_std.exp()
    eps = torch.randn(mean.shape, generator=generator, dtype=mean.dtype,
                      device=mean.device)
    u = mean + std * eps
    action = torch.tanh(u)
    log_prob = squashed_log_prob(mean, log_std, u)
    return action, log_prob


def squashed_log_prob(mean, log_std, u):
    """log-density of tanh(u) when u ~ N(mean, exp(log_std)^2), summed over
    action dimensions. Uses log(1 - tanh(u)^2) = 2(log 2 - u - softplus(-2u))."""
    std = log_std.exp()
    gauss = -0.5 * (((u - mean) / std) ** 2 + 2.0 * log_std + math.log(2.0 * math.pi))
    correction = 2.0 * (math.log(2.0) - u - F.softplus(-2.0 * u))
    return (gauss - correction).sum(dim=-1)


@dataclass
class GaussianAction:
    """Pre-squash Gaussian parameters of one action distribution (numpy)."""
    mean: np.ndarray
    log_std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.log_std = np.clip(np.asarray(self.log_std, dtype=float),
                               LOG_STD_MIN, LOG_STD_MAX)


# ---------------------------------------------------------------------------
# numpy-facing single-sequence API (used by the env loop and benchmarks)

def collate_sequences(sequences, dtype=torch.float64, device="cpu"):
    """Pad a list of variable-length sequences of state vectors.

    Returns (padded (B, Lmax, D), lengths (B,)).
    """
    if not sequences:
        raise ValueError("empty batch")
    lengths = torch.as_tensor([len(s) for s in sequences], dtype=torch.int64)
    if int(lengths.min()) < 1:
        raise ValueError("sequences must be nonempty")
    dim = len(sequences[0][0])
    padded = torch.zeros(len(sequences), int(lengths.max()), dim, dtype=dtype,
                         device=device)
    for b, seq in enumerate(sequences):
        for t, s in enumerate(seq):
            if len(s) != dim:
                raise ValueError(f"state width {len(s)} != {dim}")
            padded[b, t] = torch.as_tensor(np.asarray(s), dtype=dtype)
    return padded, lengths


def encode(encoder: LSTMEncoder, seq):
    """Embed one observation sequence; returns a numpy hidden-dim vector."""
    dtype = next(encoder.parameters()).dtype
    padded, lengths = collate_sequences([seq], dtype=dtype)
    with torch.no_grad():
        return encoder(padded, lengths)[0].numpy()


def policy_forward(policy: PolicyNet, seq) -> GaussianAction:
    dtype = next(policy.parameters()).dtype
    padded, lengths = collate_sequences([seq], dtype=dtype)
    with torch.no_grad():
        mean, log_std = policy(padded, lengths)
    return GaussianAction(mean[0].numpy(), log_std[0].numpy())


def sample_action(dist: GaussianAction, rng=None, deterministic=False):
    """Sample an action in (-1, 1)^d and its log-probability (numpy)."""
    mean = torch.as_tensor(dist.mean, dtype=torch.float64)
    log_std = torch.as_tensor(dist.log_std, dtype=torch.float64)
    if deterministic:
        u = mean
    else:
        if rng is None:
            rng = np.random.default_rng()
        eps = torch.as_tensor(rng.standard_normal(mean.shape), dtype=torch.float64)
        u = mean + log_std.exp() * eps
    action = torch.tanh(u)
    log_prob = squashed_log_prob(mean, log_std, u)
    return action.numpy(), float(log_prob)


def q_forward(qnet: QNet, seq, action):
    dtype = next(qnet.parameters()).dtype
    padded, lengths = collate_sequences([seq], dtype=dtype)
    a = torch.as_tensor(np.asarray(action), dtype=dtype).unsqueeze(0)
    with torch.no_grad():
        return float(qnet(padded, lengths, a)[0])


# ---------------------------------------------------------------------------
# checkpoints: one JSON header line + raw .npy arrays in listed order

def _named_arrays(modules: dict):
    out = []
    for mod_name in sorted(modules):
        module = modules[mod_name]
        if isinstance(module, torch.Tensor):
            out.append((mod_name, np.atleast_1d(module.detach().cpu().numpy())))
        else:
            for p_name, p in sorted(module.state_dict().items()):
                out.append((f"{mod_name}.{p_name}",
                            np.atleast_1d(p.detach().cpu().numpy())))
    return out

def save_checkpoint(path, modules: dict, meta: dict = None):
    """modules: name -> nn.Module or tensor (e.g. policy, q1, q2, targets,
    log_alpha). Written deterministically (no timestamps)."""
    arrays = _named_arrays(modules)
    header = {
        "schema_version": CHECKPOINT_SCHEMA,
        "meta": meta or {},
        "arrays": [{"name": n, "shape": list(a.shape), "dtype": str(a.dtype)}
                   for n, a in arrays],
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for _, a in arrays:
            np.lib.format.write_array(f, np.ascontiguousarray(a), allow_pickle=False)


def peek_checkpoint_meta(path):
    """Read only the JSON header line of a checkpoint (no array payloads)."""
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
    if header.get("schema_version") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema: {header.get('schema_version')}")
    return header["meta"]


def load_checkpoint(path, modules: dict):
    """Load arrays into the given modules; shape mismatches fail loudly.
    Returns the checkpoint meta dict."""
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        if header.get("schema_version") != CHECKPOINT_SCHEMA:
            raise ValueError(f"unsupported checkpoint schema: {header.get('schema_version')}")
        stored = {}
        for spec in header["arrays"]:
            arr = np.lib.format.read_array(f, allow_pickle=False)
            stored[spec["name"]] = arr
    expected = _named_arrays(modules)
    for name, current in expected:
        if name not in stored:
            raise ValueError(f"checkpoint missing array {name!r}")
        if tuple(stored[name].shape) != tuple(current.shape):
            raise ValueError(
                f"shape mismatch for {name!r}: checkpoint {stored[name].shape}, "
                f"model {current.shape}")
    for mod_name in sorted(modules):
        module = modules[mod_name]
        if isinstance(module, torch.Tensor):
            with torch.no_grad():
                module.copy_(torch.as_tensor(stored[mod_name], dtype=module.dtype)
                             .reshape(module.shape))
        else:
            sd = {p: torch.as_tensor(stored[f"{mod_name}.{p}"]).reshape(v.shape)
                  for p, v in module.state_dict().items()}
            module.load_state_dict(sd)
    return header["meta"]
