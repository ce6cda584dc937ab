"""Graph-convolutional transition policy: forward pass, sampling, and gradients.

The controller embeds a cell's (adjacency, features) pair through a stack of
graph convolutions (two by default; the last one is linear) and maps each
intermediate node's embedding through a fully-connected head to two blocks of
logits, one per incoming slot. In the 3-action mode every edge shares the
vocabulary {keep, to-null, to-skip} under a standard softmax; in the 13-action
mode the logits go through the masked softmax so that only rule-valid target
operations receive probability.

Gradients of the policy-gradient objective (log-probability times reward plus
an entropy bonus) are exact analytic derivatives, verified elsewhere against
central finite differences.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .archgraph import GraphEncoding
from .numkernel import bmsoftmax, glorot_uniform, softmax
from .opspace import (
    NUM_OPERATIONS,
    OPERATIONS,
    OperationKind,
    transition_mask,
)

NAT = "nat"
NATPP = "nat++"

_NUM_ACTIONS = {NAT: 3, NATPP: NUM_OPERATIONS}


@dataclass
class PolicyParams:
    """Controller weights: graph-conv stack plus the per-slot logit head."""

    mode: str
    gcn: list[np.ndarray]
    fc: np.ndarray
    i_max: int

    @property
    def depth(self) -> int:
        return len(self.gcn)

    @property
    def num_actions(self) -> int:
        return _NUM_ACTIONS[self.mode]

    @property
    def hidden_dim(self) -> int:
        return self.gcn[-1].shape[1]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.mode, [w.copy() for w in self.gcn], self.fc.copy(), self.i_max)


@dataclass
class ParamGrads:
    gcn: list[np.ndarray]
    fc: np.ndarray

    def add_(self, other: "ParamGrads") -> None:
        for mine, theirs in zip(self.gcn, other.gcn):
            mine += theirs
        self.fc += other.fc

    def scale_(self, factor: float) -> None:
        for g in self.gcn:
            g *= factor
        self.fc *= factor


@dataclass
class PolicyOutput:
    """Per-edge action distributions and the masks that shaped them."""

    Z: np.ndarray
    masks: np.ndarray

    @property
    def num_edges(self) -> int:
        return self.Z.shape[0]


def init_params(
    mode: str,
    feature_dim: int,
    rng: np.random.Generator,
    hidden_dim: int = 64,
    depth: int = 2,
    i_max: int = 4,
) -> PolicyParams:
    """Glorot-initialized controller of the given depth."""
    if mode not in _NUM_ACTIONS:
        raise ValueError(f"mode must be one of {sorted(_NUM_ACTIONS)}, got {mode!r}")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    dims = [feature_dim] + [hidden_dim] * depth
    gcn = [glorot_uniform(rng, dims[i], dims[i + 1]) for i in range(depth)]
    fc = glorot_uniform(rng, hidden_dim, 2 * _NUM_ACTIONS[mode])
    return PolicyParams(mode=mode, gcn=gcn, fc=fc, i_max=i_max)


def _masks_for(mode: str, ops: Sequence[OperationKind]) -> np.ndarray:
    k = len(ops)
    if mode == NAT:
        return np.ones((k, 3), dtype=int)
    return np.array([transition_mask(op).bits for op in ops], dtype=int)


def _forward_full(enc: GraphEncoding, ops: Sequence[OperationKind], params: PolicyParams):
    """Forward pass keeping the intermediates needed for backprop."""
    k = len(ops)
    num_inter = k // 2
    if k != 2 * num_inter or num_inter != enc.adjacency.shape[0] - 3:
        raise ValueError("ops must list both slots of every intermediate node")
    a, x = enc.adjacency, enc.features
    if x.shape[1] != params.gcn[0].shape[0]:
        raise ValueError(
            f"feature dim {x.shape[1]} does not match controller input "
            f"{params.gcn[0].shape[0]}"
        )
    h = x
    hiddens = [h]  # inputs to each conv layer
    pres = []  # pre-activations of the relu layers
    for w in params.gcn[:-1]:
        pre = a @ h @ w
        pres.append(pre)
        h = np.maximum(pre, 0.0)
        hiddens.append(h)
    m = a @ h @ params.gcn[-1]

    c = params.num_actions
    logits = np.empty((k, c))
    for l in range(num_inter):
        node_logits = m[2 + l] @ params.fc
        logits[2 * l] = node_logits[:c]
        logits[2 * l + 1] = node_logits[c:]

    masks = _masks_for(params.mode, ops)
    if params.mode == NAT:
        z = softmax(logits)
    else:
        z = bmsoftmax(logits, masks)
    return PolicyOutput(Z=z, masks=masks), (a, hiddens, pres, m, logits)


def forward(enc: GraphEncoding, ops: Sequence[OperationKind], params: PolicyParams) -> PolicyOutput:
    """Per-edge transition distributions for the given cell."""
    out, _ = _forward_full(enc, ops, params)
    return out


def sample_actions(out: PolicyOutput, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """One independent categorical draw per edge; returns (indices, joint log-prob)."""
    k, c = out.Z.shape
    actions = np.empty(k, dtype=int)
    log_prob = 0.0
    for e in range(k):
        p = out.Z[e] / out.Z[e].sum()
        actions[e] = rng.choice(c, p=p)
        log_prob += float(np.log(out.Z[e, actions[e]]))
    return actions, log_prob


def argmax_actions(out: PolicyOutput) -> np.ndarray:
    """Per-row argmax; ties break toward the lowest action index."""
    return out.Z.argmax(axis=1)


def log_prob_of(out: PolicyOutput, actions: np.ndarray) -> float:
    return float(np.log(out.Z[np.arange(out.num_edges), actions]).sum())


def total_entropy(out: PolicyOutput) -> float:
    """Sum of per-edge row entropies (the policy factorizes over edges)."""
    z = out.Z
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(z > 0, z * np.log(z), 0.0)
    return float(-terms.sum())


def actions_to_ops(
    mode: str, current_ops: Sequence[OperationKind], actions: np.ndarray
) -> tuple[OperationKind, ...]:
    """Translate action indices into per-edge target operations."""
    if mode == NAT:
        table = (None, OperationKind.NULL, OperationKind.SKIP)
        return tuple(
            cur if a == 0 else table[a] for cur, a in zip(current_ops, actions)
        )
    return tuple(OPERATIONS[a] for a in actions)


def policy_gradient(
    enc: GraphEncoding,
    ops: Sequence[OperationKind],
    params: PolicyParams,
    actions: np.ndarray,
    reward: float,
    entropy_weight: float,
) -> ParamGrads:
    """Exact gradient of reward * log pi(actions) + entropy_weight * H(pi)."""
    if not np.isfinite(reward):
        raise ValueError("reward must be finite")
    out, (a, hiddens, pres, m, _logits) = _forward_full(enc, ops, params)
    k, c = out.Z.shape
    if np.any(out.masks[np.arange(k), actions] == 0):
        bad = int(np.argmax(out.masks[np.arange(k), actions] == 0))
        raise ValueError(f"action at edge {bad} violates its transition mask")

    # d/du of the objective, row by row. For a masked row the softmax Jacobian
    # is zero at cleared bits, so both terms vanish there automatically.
    g_u = np.zeros((k, c))
    for e in range(k):
        p = out.Z[e]
        grad_logp = -p.copy()
        grad_logp[actions[e]] += 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = np.where(p > 0, np.log(p), 0.0)
        h_row = float(-(p * logp).sum())
        grad_h = np.where(p > 0, -p * (logp + h_row), 0.0)
        g_u[e] = reward * grad_logp + entropy_weight * grad_h

    num_inter = k // 2
    g_m = np.zeros_like(m)
    grad_fc = np.zeros_like(params.fc)
    for l in range(num_inter):
        node_grad = np.concatenate([g_u[2 * l], g_u[2 * l + 1]])
        g_m[2 + l] = params.fc @ node_grad
        grad_fc += np.outer(m[2 + l], node_grad)

    grads = [np.zeros_like(w) for w in params.gcn]
    b = a @ hiddens[-1]
    grads[-1] = b.T @ g_m
    g_h = a.T @ (g_m @ params.gcn[-1].T)
    for i in range(params.depth - 2, -1, -1):
        g_pre = g_h * (pres[i] > 0)
        grads[i] = (a @ hiddens[i]).T @ g_pre
        g_h = a.T @ (g_pre @ params.gcn[i].T)
    return ParamGrads(gcn=grads, fc=grad_fc)


def ascend_(params: PolicyParams, grads: ParamGrads, lr: float) -> None:
    """One in-place gradient-ascent step on the controller."""
    for w, g in zip(params.gcn, grads.gcn):
        w += lr * g
    params.fc += lr * grads.fc


def save_policy(params: PolicyParams, path: str) -> None:
    """Write a portable JSON checkpoint (mode, shapes, row-major values)."""
    payload = {
        "mode": params.mode,
        "i_max": params.i_max,
        "depth": params.depth,
        "gcn_shapes": [list(w.shape) for w in params.gcn],
        "fc_shape": list(params.fc.shape),
        "gcn_values": [w.ravel().tolist() for w in params.gcn],
        "fc_values": params.fc.ravel().tolist(),
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")
    os.replace(tmp, path)


def load_policy(path: str) -> PolicyParams:
    with open(path) as fh:
        payload = json.load(fh)
    gcn = [
        np.array(vals, dtype=float).reshape(shape)
        for vals, shape in zip(payload["gcn_values"], payload["gcn_shapes"])
    ]
    fc = np.array(payload["fc_values"], dtype=float).reshape(payload["fc_shape"])
    return PolicyParams(mode=payload["mode"], gcn=gcn, fc=fc, i_max=payload["i_max"])
