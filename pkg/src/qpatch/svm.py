"""Kernel construction and a precomputed-kernel support vector machine.

The Gram matrix is filled for i <= j and mirrored, either with the quantum
fidelity kernel or an RBF baseline on the same features. Training solves
the standard soft-margin dual with a most-violating-pair SMO loop, which
needs nothing beyond numpy and is deterministic.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .quantum import fidelity, fidelity_kernel, _embed_vector

KERNEL_KINDS = ("quantum", "rbf", "precomputed")


@dataclass(frozen=True)
class KernelSpec:
    """Which kernel to use and its parameters.

    gamma may be the string "scale", resolved against training features as
    1 / (dim * variance of all feature entries). depth and s3_axis only
    matter for the quantum kind.
    """

    kind: str = "quantum"
    depth: int = 1
    s3_axis: str = "Z"
    gamma: float | str = "scale"

    def __post_init__(self):
        if self.kind not in ("quantum", "rbf"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def resolve(self, features: np.ndarray) -> "KernelSpec":
        """Replace a symbolic gamma with its numeric value for this data."""
        if self.kind != "rbf" or not isinstance(self.gamma, str):
            return self
        if self.gamma != "scale":
            raise ValueError(f"unknown gamma policy {self.gamma!r}")
        x = np.asarray(features, dtype=np.float64)
        var = float(x.var())
        dim = x.shape[1]
        gamma = 1.0 / (dim * var) if var > 1e-12 else 1.0 / dim
        return replace(self, gamma=gamma)

    def params(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "quantum":
            out["depth"] = self.depth
            out["s3_axis"] = self.s3_axis
        else:
            out["gamma"] = self.gamma
        return out


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    kernel_kind: str
    config_hash: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if self.kernel_kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kernel_kind!r}")
        n = values.shape[0]
        if values.ndim != 2 or values.shape != (n, n):
            raise ValueError("Gram matrix must be square")
        if not np.all(np.isfinite(values)):
            raise ValueError("Gram matrix has non-finite entries")
        if np.max(np.abs(values - values.T)) > 1e-10:
            raise ValueError("Gram matrix is not symmetric")
        if self.kernel_kind in ("quantum", "rbf"):
            if np.max(np.abs(np.diag(values) - 1.0)) > 1e-10:
                raise ValueError(f"{self.kernel_kind} Gram diagonal must be 1")

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SvmModel:
    """Soft-margin SVM in dual form over a precomputed kernel.

    dual_coefs holds alpha_i * y_i for the support entries only;
    support_indices maps them back into the training set.
    """

    dual_coefs: np.ndarray
    support_indices: np.ndarray
    bias: float
    C: float
    n_train: int
    kernel_params: dict = field(default_factory=dict)
    feature_ref: str = ""
    kkt_gap: float = 0.0
    n_iter: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dual_coefs",
                           np.asarray(self.dual_coefs, dtype=np.float64))
        object.__setattr__(self, "support_indices",
                           np.asarray(self.support_indices, dtype=np.int64))


def _stack_features(features) -> np.ndarray:
    rows = []
    length = None
    for f in features:
        vals = np.asarray(f.values if hasattr(f, "values") else f, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError("each feature must be a flat vector")
        if length is None:
            length = vals.size
        elif vals.size != length:
            raise ValueError(
                f"ragged features: got lengths {length} and {vals.size}")
        rows.append(vals)
    if not rows:
        raise ValueError("empty feature list")
    return np.stack(rows)


def rbf_kernel(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("length mismatch")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def feature_hash(x: np.ndarray, params: dict) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(params, sort_keys=True).encode())
    h.update(np.ascontiguousarray(x).tobytes())
    return h.hexdigest()[:16]


def _pair_fidelity(states_a, states_b) -> float:
    return float(np.mean([fidelity(a, b) for a, b in zip(states_a, states_b)]))


def build_gram(features, kernel: KernelSpec = KernelSpec()) -> GramMatrix:
    """Pairwise kernel matrix, filled on the upper triangle and mirrored."""
    x = _stack_features(features)
    spec = kernel.resolve(x)
    n = x.shape[0]
    k = np.empty((n, n))
    if spec.kind == "quantum":
        states = [_embed_vector(row, spec.depth, spec.s3_axis) for row in x]
        for i in range(n):
            for j in range(i, n):
                k[i, j] = k[j, i] = _pair_fidelity(states[i], states[j])
    else:
        for i in range(n):
            for j in range(i, n):
                k[i, j] = k[j, i] = rbf_kernel(x[i], x[j], spec.gamma)
    return GramMatrix(k, spec.kind, feature_hash(x, spec.params()), spec.params())


def cross_gram(test_features, train_features, kernel: KernelSpec = KernelSpec()) -> np.ndarray:
    """Kernel rows of test samples against the training set (n_test x n_train).

    gamma resolution uses the training features, matching build_gram.
    """
    xt = _stack_features(test_features)
    xr = _stack_features(train_features)
    if xt.shape[1] != xr.shape[1]:
        raise ValueError("test/train feature lengths differ")
    spec = kernel.resolve(xr)
    out = np.empty((xt.shape[0], xr.shape[0]))
    if spec.kind == "quantum":
        states_t = [_embed_vector(row, spec.depth, spec.s3_axis) for row in xt]
        states_r = [_embed_vector(row, spec.depth, spec.s3_axis) for row in xr]
        for i, st in enumerate(states_t):
            for j, sr in enumerate(states_r):
                out[i, j] = _pair_fidelity(st, sr)
    else:
        for i in range(xt.shape[0]):
            for j in range(xr.shape[0]):
                out[i, j] = rbf_kernel(xt[i], xr[j], spec.gamma)
    return out


def _ensure_psd(k: np.ndarray) -> np.ndarray:
    """Clip eigenvalues below zero after warning; round-off guard only."""
    eigvals = np.linalg.eigvalsh(k)
    if eigvals[0] >= -1e-8:
        return k
    warnings.warn(
        f"kernel matrix has eigenvalue {eigvals[0]:.3e} below the PSD slack; "
        "clipping negative eigenvalues to zero")
    vals, vecs = np.linalg.eigh(k)
    vals = np.clip(vals, 0.0, None)
    fixed = (vecs * vals) @ vecs.T
    return (fixed + fixed.T) / 2.0


def train_svm(gram, labels, C: float = 1.0, tol: float = 1e-4,
              max_iter: int = 10000, feature_ref: str = "") -> SvmModel:
    """Most-violating-pair SMO on the dual of the soft-margin SVM.

    Tracks beta_i = alpha_i * y_i inside the box [min(0, C*y_i), max(0, C*y_i)]
    so the equality constraint is just sum(beta) = 0. Each step picks the
    pair with the largest KKT gap and moves them jointly by the clamped
    Newton step. Stops when the gap falls to tol.
    """
    if isinstance(gram, GramMatrix):
        k = gram.values.copy()
        kernel_params = dict(gram.params)
    else:
        k = np.asarray(gram, dtype=np.float64).copy()
        kernel_params = {}
    y = np.asarray(labels, dtype=np.float64)
    n = k.shape[0]
    if y.shape != (n,):
        raise ValueError("label count does not match kernel size")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if np.all(y == y[0]):
        raise ValueError("training needs both classes")
    if C <= 0:
        raise ValueError("C must be positive")

    k = _ensure_psd(k)
    lower = np.where(y > 0, 0.0, -C)
    upper = np.where(y > 0, C, 0.0)
    beta = np.zeros(n)
    v = y.copy()  # v = y - K @ beta, maintained incrementally
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        can_up = beta < upper - 1e-12
        can_dn = beta > lower + 1e-12
        if not can_up.any() or not can_dn.any():
            break
        i = int(np.flatnonzero(can_up)[np.argmax(v[can_up])])
        j = int(np.flatnonzero(can_dn)[np.argmin(v[can_dn])])
        gap = v[i] - v[j]
        if gap <= tol:
            break
        denom = k[i, i] + k[j, j] - 2.0 * k[i, j]
        lam = gap / denom if denom > 1e-12 else np.inf
        lam = min(lam, upper[i] - beta[i], beta[j] - lower[j])
        beta[i] += lam
        beta[j] -= lam
        v -= lam * (k[:, i] - k[:, j])

    beta = np.clip(beta, lower, upper)
    alpha = np.abs(beta)

    unbounded = alpha > 1e-8
    unbounded &= alpha < C - 1e-8
    if unbounded.any():
        bias = float(v[unbounded].mean())
    else:
        can_up = beta < upper - 1e-12
        can_dn = beta > lower + 1e-12
        if can_up.any() and can_dn.any():
            bias = float((v[can_up].max() + v[can_dn].min()) / 2.0)
        elif (alpha > 1e-12).any():
            bias = float(v[alpha > 1e-12].mean())
        else:
            bias = 0.0

    support = np.flatnonzero(alpha > 1e-12)
    final_gap = float(gap) if np.isfinite(gap) else 0.0
    return SvmModel(dual_coefs=beta[support], support_indices=support,
                    bias=bias, C=C, n_train=n, kernel_params=kernel_params,
                    feature_ref=feature_ref, kkt_gap=final_gap, n_iter=it)


def decision_scores(model: SvmModel, rows) -> np.ndarray:
    """f(x) = sum over support of alpha_i y_i K(x, x_i) + b, one per row."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != model.n_train:
        raise ValueError(
            f"kernel rows have {rows.shape[1]} entries, expected {model.n_train}")
    return rows[:, model.support_indices] @ model.dual_coefs + model.bias


def save_gram(gram: GramMatrix, csv_path) -> None:
    """CSV of values plus a JSON sidecar with kind, params, and feature hash."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(csv_path, gram.values, delimiter=",", fmt="%.17g")
    meta = {"kernel_kind": gram.kernel_kind, "config_hash": gram.config_hash,
            "params": gram.params}
    csv_path.with_suffix(".json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_gram(csv_path) -> GramMatrix:
    csv_path = Path(csv_path)
    values = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    return GramMatrix(values, meta["kernel_kind"], meta["config_hash"],
                      meta.get("params", {}))


def save_model(model: SvmModel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "dual_coefs": list(model.dual_coefs),
        "support_indices": [int(i) for i in model.support_indices],
        "bias": model.bias,
        "C": model.C,
        "n_train": model.n_train,
        "kernel_params": model.kernel_params,
        "feature_ref": model.feature_ref,
        "kkt_gap": model.kkt_gap,
        "n_iter": model.n_iter,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_model(path) -> SvmModel:
    payload = json.loads(Path(path).read_text())
    return SvmModel(
        dual_coefs=np.array(payload["dual_coefs"], dtype=np.float64),
        support_indices=np.array(payload["support_indices"], dtype=np.int64),
        bias=payload["bias"], C=payload["C"], n_train=payload["n_train"],
        kernel_params=payload["kernel_params"],
        feature_ref=payload["feature_ref"], kkt_gap=payload["kkt_gap"],
        n_iter=payload["n_iter"])
