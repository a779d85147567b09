"""Domain types and the penalized objective of the Heaviside-loss matrix classifier.

The classifier scores a p-by-q sample ``X`` as ``<W, X> + b`` (Frobenius inner
product plus bias).  Training minimizes

    f(W, z, b) = 1/2 <W, W> + beta * ||z_+||_0 + sigma * ||z - v(W, b)||^2

subject to ``rank(W) <= r``, where ``v_i = 1 - y_i (<W, X_i> + b)`` are the
margin residuals and ``||z_+||_0`` counts strictly positive slack entries
(the 0/1 loss).  ``z`` decouples the combinatorial loss from the smooth
penalty; ``sigma`` weights the coupling ``z ~ v``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .errors import InvalidArgumentError
from .linalg import fro_inner


@dataclass(frozen=True)
class MatrixSample:
    """One labeled observation: a p-by-q feature matrix and a label in {-1, +1}."""

    x: np.ndarray
    y: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2:
            raise InvalidArgumentError("sample features must form a 2-D matrix")
        if not np.isfinite(x).all():
            raise InvalidArgumentError("sample features must be finite")
        if self.y not in (-1, 1):
            raise InvalidArgumentError(f"label must be -1 or +1, got {self.y!r}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", int(self.y))


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of same-shape matrix samples.

    ``xs`` has shape (m, p, q) and ``ys`` shape (m,) with entries in {-1, +1}.
    Arrays are stored read-only; all transforms produce new datasets.
    ``provenance`` accumulates a human-readable trail of source + transforms.
    """

    xs: np.ndarray
    ys: np.ndarray
    name: str = ""
    provenance: str = ""

    def __post_init__(self):
        xs = np.ascontiguousarray(np.asarray(self.xs, dtype=np.float64))
        ys = np.asarray(self.ys, dtype=np.int8).ravel()
        if xs.ndim != 3 or xs.shape[0] == 0:
            raise InvalidArgumentError("dataset needs a non-empty (m, p, q) feature array")
        if ys.shape[0] != xs.shape[0]:
            raise InvalidArgumentError("label count does not match sample count")
        if not np.isfinite(xs).all():
            raise InvalidArgumentError("dataset features must be finite")
        if not np.isin(ys, (-1, 1)).all():
            raise InvalidArgumentError("labels must be -1 or +1")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @classmethod
    def from_samples(cls, samples, name: str = "", provenance: str = "") -> "Dataset":
        samples = [s if isinstance(s, MatrixSample) else MatrixSample(*s) for s in samples]
        if not samples:
            raise InvalidArgumentError("dataset must contain at least one sample")
        shape = samples[0].x.shape
        if any(s.x.shape != shape for s in samples):
            raise InvalidArgumentError("all samples must share the same (p, q) shape")
        xs = np.stack([s.x for s in samples])
        ys = np.array([s.y for s in samples], dtype=np.int8)
        return cls(xs=xs, ys=ys, name=name, provenance=provenance)

    @property
    def m(self) -> int:
        return self.xs.shape[0]

    @property
    def p(self) -> int:
        return self.xs.shape[1]

    @property
    def q(self) -> int:
        return self.xs.shape[2]

    @property
    def sample_shape(self) -> tuple[int, int]:
        return self.xs.shape[1], self.xs.shape[2]

    def sample(self, i: int) -> MatrixSample:
        return MatrixSample(x=self.xs[i].copy(), y=int(self.ys[i]))

    def __len__(self) -> int:
        return self.m

    def __iter__(self) -> Iterator[MatrixSample]:
        return (self.sample(i) for i in range(self.m))

    def labels_present(self) -> tuple[bool, bool]:
        """(has +1, has -1)."""
        return bool((self.ys == 1).any()), bool((self.ys == -1).any())

    def require_both_labels(self) -> None:
        pos, neg = self.labels_present()
        if not (pos and neg):
            raise InvalidArgumentError(
                "training requires at least one sample of each label"
            )

    def replace_xs(self, xs: np.ndarray, note: str) -> "Dataset":
        """New dataset with transformed features and an appended provenance note."""
        prov = f"{self.provenance}; {note}" if self.provenance else note
        return Dataset(xs=xs, ys=self.ys.copy(), name=self.name, provenance=prov)

    def subset(self, idx, note: str) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        prov = f"{self.provenance}; {note}" if self.provenance else note
        return Dataset(xs=self.xs[idx].copy(), ys=self.ys[idx].copy(),
                       name=self.name, provenance=prov)


@dataclass(frozen=True)
class StepPolicy:
    """W-block step-size rule.

    ``backtracking``: start each iteration at ``alpha0`` (or, when ``alpha0``
    is None, at the exact line-minimizing Cauchy step of the smooth quadratic)
    and halve by ``shrink`` until the proximal decrease test accepts, at most
    ``max_halvings`` times.

    ``fixed``: constant step ``alpha0``; when None, the provably safe
    ``1 / (L_hat + tau1)`` with ``L_hat = 1 + 2 sigma sum_i ||X_i||_F^2``.
    """

    kind: str = "backtracking"
    alpha0: float | None = None
    shrink: float = 0.5
    max_halvings: int = 30

    def __post_init__(self):
        if self.kind not in ("backtracking", "fixed"):
            raise InvalidArgumentError(f"unknown step policy {self.kind!r}")
        if self.alpha0 is not None and not self.alpha0 > 0:
            raise InvalidArgumentError("alpha0 must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise InvalidArgumentError("shrink must lie in (0, 1)")
        if self.max_halvings < 0:
            raise InvalidArgumentError("max_halvings must be non-negative")


@dataclass(frozen=True)
class Hyperparams:
    """Solver hyperparameters.

    ``beta``/``sigma`` weight the 0/1 loss and the coupling penalty; ``rank``
    bounds rank(W); ``tau1..tau3`` are the proximal damping weights of the
    three blocks.  ``z_update`` selects the exact coordinate minimizer
    ("exact", default) or the update constants as printed in the source
    algorithm ("paper"); the two disagree on a measurable set of inputs, and
    only "exact" carries the descent guarantee.
    """

    beta: float
    sigma: float
    rank: int
    tau1: float = 1e-3
    tau2: float = 1e-3
    tau3: float = 1e-3
    maxit: int = 1000
    tol_step: float = 1e-6
    tol_obj: float = 1e-8
    step: StepPolicy = field(default_factory=StepPolicy)
    z_update: str = "exact"
    seed: int = 0

    def __post_init__(self):
        for name in ("beta", "sigma", "tau1", "tau2", "tau3", "tol_step", "tol_obj"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if not (isinstance(self.rank, (int, np.integer)) and self.rank >= 1):
            raise InvalidArgumentError("rank must be a positive integer")
        if self.maxit < 0:
            raise InvalidArgumentError("maxit must be non-negative")
        if self.z_update not in ("exact", "paper"):
            raise InvalidArgumentError(f"unknown z_update mode {self.z_update!r}")
        if self.seed < 0:
            raise InvalidArgumentError("seed must be unsigned")
        object.__setattr__(self, "rank", int(self.rank))

    def validate_for_shape(self, p: int, q: int) -> None:
        if not self.rank < min(p, q):
            raise InvalidArgumentError(
                f"rank bound r={self.rank} must be < min(p, q) = {min(p, q)} "
                f"for {p}x{q} samples"
            )

    def with_(self, **kwargs) -> "Hyperparams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class ModelState:
    """Solver iterate: weight matrix ``w``, bias ``b``, slack vector ``z``."""

    w: np.ndarray
    b: float
    z: np.ndarray
    iter: int = 0

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.float64).ravel()
        if w.ndim != 2:
            raise InvalidArgumentError("w must be a 2-D matrix")
        if not (np.isfinite(w).all() and np.isfinite(z).all() and np.isfinite(self.b)):
            raise InvalidArgumentError("model state must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "b", float(self.b))

    @classmethod
    def initial(cls, data: Dataset) -> "ModelState":
        """Cold start: W = 0, b = 0, z = 0.

        The zero slack vector is deliberately infeasible (z != v at the zero
        model): it makes every sample exert pull on the first W step.  The
        feasible start z = v = 1 is a fixed point of the block updates
        whenever beta <= sigma + tau2/2 and must be avoided.
        """
        return cls(w=np.zeros(data.sample_shape), b=0.0, z=np.zeros(data.m), iter=0)


@dataclass
class SolverTrace:
    """Per-iteration history of a fit.

    Row k describes iterate k; row 0 is the initial state (step norms zero).
    The objective column is non-increasing up to 1e-10 slack for the exact
    z-update mode.
    """

    objective: list[float] = field(default_factory=list)
    w_step: list[float] = field(default_factory=list)
    z_step: list[float] = field(default_factory=list)
    b_step: list[float] = field(default_factory=list)
    halvings: list[int] = field(default_factory=list)
    status: str = "max_iter"

    def append(self, objective: float, w_step: float, z_step: float,
               b_step: float, halvings: int) -> None:
        self.objective.append(float(objective))
        self.w_step.append(float(w_step))
        self.z_step.append(float(z_step))
        self.b_step.append(float(b_step))
        self.halvings.append(int(halvings))

    def __len__(self) -> int:
        return len(self.objective)


def margin_residuals(w, b: float, data: Dataset) -> np.ndarray:
    """v_i = 1 - y_i (<W, X_i> + b), in dataset order."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != data.sample_shape:
        raise InvalidArgumentError(
            f"w shape {w.shape} does not match sample shape {data.sample_shape}"
        )
    scores = data.xs.reshape(data.m, -1) @ w.ravel() + float(b)
    return 1.0 - data.ys * scores


def heaviside_count(z) -> int:
    """Number of strictly positive entries of ``z`` (the 0/1 loss of the slack)."""
    z = np.asarray(z, dtype=np.float64)
    if not np.isfinite(z).all():
        raise InvalidArgumentError("z must be finite")
    return int(np.count_nonzero(z > 0))


def penalized_objective(state: ModelState, data: Dataset, hp: Hyperparams) -> float:
    """f(W, z, b) = 1/2 ||W||_F^2 + beta ||z_+||_0 + sigma ||z - v(W, b)||^2."""
    if state.z.shape[0] != data.m:
        raise InvalidArgumentError("slack length does not match sample count")
    v = margin_residuals(state.w, state.b, data)
    gap = state.z - v
    return (0.5 * fro_inner(state.w, state.w)
            + hp.beta * heaviside_count(state.z)
            + hp.sigma * float(gap @ gap))


def prox_heaviside(x, gamma: float) -> np.ndarray:
    """Proximal operator of ``gamma * ||(.)_+||_0``, elementwise.

    Minimizes ``gamma * 1[z > 0] + (z - x)^2 / 2`` per coordinate: entries in
    ``(0, sqrt(2 gamma)]`` are hard-thresholded to zero, everything else is
    kept.  The boundary ``x = sqrt(2 gamma)`` ties in objective value between
    the two candidates {0, x}; the tie breaks to 0, matching the inclusive
    upper bound of the case split.
    """
    if not gamma > 0:
        raise InvalidArgumentError("gamma must be positive")
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise InvalidArgumentError("x must be finite")
    threshold = np.sqrt(2.0 * gamma)
    return np.where((x > 0) & (x <= threshold), 0.0, x)


def decision_scores(w, b: float, xs: np.ndarray) -> np.ndarray:
    """<W, X_i> + b for a stacked (m, p, q) batch."""
    w = np.asarray(w, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    if xs.shape[1:] != w.shape:
        raise InvalidArgumentError(
            f"sample shape {xs.shape[1:]} does not match w shape {w.shape}"
        )
    return xs.reshape(xs.shape[0], -1) @ w.ravel() + float(b)


def predict(w, b: float, x) -> int:
    """Label of one sample: +1 when <W, X> + b > 0, else -1 (zero maps to -1)."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != w.shape:
        raise InvalidArgumentError(f"x shape {x.shape} does not match w shape {w.shape}")
    return 1 if fro_inner(w, x) + b > 0 else -1


def predict_batch(w, b: float, data: Dataset) -> np.ndarray:
    """Vector of predicted labels over a dataset, in order."""
    return np.where(decision_scores(w, b, data.xs) > 0, 1, -1).astype(np.int8)
