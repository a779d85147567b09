"""Experiment harness: accuracy metrics, grid search, noise sweeps, exports.

Sweep tables are assembled in deterministic configuration order regardless of
how long individual fits take, and CSV exports contain no timing columns, so
two runs with identical inputs and seeds produce byte-identical files.
Wall-clock time is kept on the in-memory rows only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import add_gaussian_noise, add_salt_pepper_noise
from .errors import InvalidArgumentError, NumericalError
from .model import Dataset, Hyperparams, ModelState, SolverTrace, predict_batch
from .solver import fit

NOISE_KINDS = ("gaussian", "salt_pepper")


@dataclass(frozen=True)
class Metrics:
    """Confusion counts with y = +1 as the positive class."""

    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        """100 * (TP + TN) / (TP + TN + FP + FN)."""
        return 100.0 * (self.tp + self.tn) / self.total

    def __add__(self, other: "Metrics") -> "Metrics":
        return Metrics(self.tp + other.tp, self.tn + other.tn,
                       self.fp + other.fp, self.fn + other.fn)


def evaluate(model: ModelState, test: Dataset) -> Metrics:
    """Confusion counts of the model's sign predictions over a dataset."""
    pred = predict_batch(model.w, model.b, test)
    actual = test.ys
    return Metrics(
        tp=int(np.count_nonzero((pred == 1) & (actual == 1))),
        tn=int(np.count_nonzero((pred == -1) & (actual == -1))),
        fp=int(np.count_nonzero((pred == 1) & (actual == -1))),
        fn=int(np.count_nonzero((pred == -1) & (actual == 1))),
    )


@dataclass(frozen=True)
class HyperparamGrid:
    """Candidate sets for the exhaustive search (defaults: the reference grids)."""

    beta: tuple = (0.01, 0.1, 0.5)
    sigma: tuple = (0.01, 0.1)
    rank: tuple = (4, 10)
    tau1: tuple = (1e-4, 1e-3, 1e-2)
    tau2: tuple = (1e-4, 1e-3, 1e-2)
    tau3: tuple = (1e-4, 1e-3, 1e-2)

    def __post_init__(self):
        for name in ("beta", "sigma", "rank", "tau1", "tau2", "tau3"):
            if not len(getattr(self, name)):
                raise InvalidArgumentError(f"empty candidate list for {name}")

    @property
    def size(self) -> int:
        return (len(self.beta) * len(self.sigma) * len(self.rank)
                * len(self.tau1) * len(self.tau2) * len(self.tau3))

    def configurations(self, base: Hyperparams):
        """Yield Hyperparams in deterministic product order."""
        for beta, sigma, rank, tau1, tau2, tau3 in itertools.product(
                self.beta, self.sigma, self.rank, self.tau1, self.tau2, self.tau3):
            yield replace(base, beta=beta, sigma=sigma, rank=int(rank),
                          tau1=tau1, tau2=tau2, tau3=tau3)


@dataclass(frozen=True)
class SweepRow:
    """One completed (or failed) configuration of a sweep."""

    index: int
    hyperparams: Hyperparams
    noise_kind: str | None
    noise_level: float | None
    noise_seed: int | None
    metrics: Metrics | None
    wall_time: float
    final_objective: float | None
    iterations: int | None
    status: str
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def successful(self) -> list[SweepRow]:
        return [row for row in self.rows if row.ok]

    def __len__(self) -> int:
        return len(self.rows)


_SWEEP_HEADER = ("index,beta,sigma,rank,tau1,tau2,tau3,noise_kind,noise_level,"
                 "noise_seed,accuracy,tp,tn,fp,fn,final_objective,iterations,"
                 "status,error")


def write_sweep_csv(result: SweepResult, path) -> None:
    """Deterministic CSV of a sweep table (no timing columns)."""
    lines = [_SWEEP_HEADER]
    for row in result.rows:
        hp = row.hyperparams
        metric_part = (f"{row.metrics.accuracy:.2f},{row.metrics.tp},{row.metrics.tn},"
                       f"{row.metrics.fp},{row.metrics.fn}") if row.metrics else ",,,,"
        obj = repr(row.final_objective) if row.final_objective is not None else ""
        iters = str(row.iterations) if row.iterations is not None else ""
        error = (row.error or "").replace(",", ";").replace("\n", " ")
        lines.append(
            f"{row.index},{hp.beta!r},{hp.sigma!r},{hp.rank},"
            f"{hp.tau1!r},{hp.tau2!r},{hp.tau3!r},"
            f"{row.noise_kind or ''},"
            f"{'' if row.noise_level is None else repr(row.noise_level)},"
            f"{'' if row.noise_seed is None else row.noise_seed},"
            f"{metric_part},{obj},{iters},{row.status},{error}")
    Path(path).write_text("\n".join(lines) + "\n")


def _selection_key(row: SweepRow):
    hp = row.hyperparams
    return (-row.metrics.accuracy, hp.rank, hp.beta, hp.sigma,
            hp.tau1, hp.tau2, hp.tau3)


def _fit_eval(train: Dataset, validation: Dataset, hp: Hyperparams,
              index: int) -> SweepRow:
    try:
        result = fit(train, hp)
        metrics = evaluate(result.model, validation)
        return SweepRow(index=index, hyperparams=hp, noise_kind=None,
                        noise_level=None, noise_seed=None, metrics=metrics,
                        wall_time=result.wall_time,
                        final_objective=result.trace.objective[-1],
                        iterations=result.model.iter, status=result.trace.status)
    except (InvalidArgumentError, NumericalError) as exc:
        return SweepRow(index=index, hyperparams=hp, noise_kind=None,
                        noise_level=None, noise_seed=None, metrics=None,
                        wall_time=0.0, final_objective=None, iterations=None,
                        status="failed", error=str(exc))


def grid_search(train: Dataset, validation: Dataset, grid: HyperparamGrid,
                base: Hyperparams) -> tuple[Hyperparams | None, SweepResult]:
    """Exhaustive search over the grid's Cartesian product.

    Every configuration is attempted; failures (for example a rank bound
    infeasible for the sample shape) are recorded as rows with an error
    marker and the search continues.  The winner maximizes validation
    accuracy, with ties broken by lower rank, then lower beta, then the
    remaining parameters in ascending lexicographic order.  Returns
    (best hyperparams or None when nothing succeeded, full table).
    """
    rows = [_fit_eval(train, validation, hp, i)
            for i, hp in enumerate(grid.configurations(base))]
    result = SweepResult(rows=rows)
    winners = result.successful()
    best = min(winners, key=_selection_key).hyperparams if winners else None
    return best, result


def _stratified_folds(data: Dataset, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified fold assignment (round-robin after shuffling)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    assignment = np.empty(data.m, dtype=np.int64)
    for label in (1, -1):
        members = np.flatnonzero(data.ys == label)
        perm = members[rng.permutation(members.size)]
        assignment[perm] = np.arange(perm.size) % folds
    return [np.flatnonzero(assignment == j) for j in range(folds)]


def grid_search_cv(train: Dataset, grid: HyperparamGrid, base: Hyperparams,
                   folds: int = 3, seed: int = 0
                   ) -> tuple[Hyperparams | None, SweepResult]:
    """Cross-validated variant of :func:`grid_search`.

    Each configuration is scored by the pooled confusion counts over a
    deterministic stratified k-fold partition of ``train``.
    """
    if folds < 2:
        raise InvalidArgumentError("need at least 2 folds")
    train.require_both_labels()
    fold_idx = _stratified_folds(train, folds, seed)
    rows: list[SweepRow] = []
    for i, hp in enumerate(grid.configurations(base)):
        pooled = Metrics(0, 0, 0, 0)
        wall = 0.0
        error = None
        final_obj = None
        iters = 0
        for held_out in fold_idx:
            keep = np.setdiff1d(np.arange(train.m), held_out)
            try:
                part = train.subset(keep, "cv-train")
                part.require_both_labels()
                result = fit(part, hp)
                pooled = pooled + evaluate(result.model,
                                           train.subset(held_out, "cv-val"))
                wall += result.wall_time
                final_obj = result.trace.objective[-1]
                iters += result.model.iter
            except (InvalidArgumentError, NumericalError) as exc:
                error = str(exc)
                break
        if error is None:
            rows.append(SweepRow(index=i, hyperparams=hp, noise_kind=None,
                                 noise_level=None, noise_seed=None,
                                 metrics=pooled, wall_time=wall,
                                 final_objective=final_obj, iterations=iters,
                                 status="cv"))
        else:
            rows.append(SweepRow(index=i, hyperparams=hp, noise_kind=None,
                                 noise_level=None, noise_seed=None, metrics=None,
                                 wall_time=wall, final_objective=None,
                                 iterations=None, status="failed", error=error))
    result = SweepResult(rows=rows)
    winners = result.successful()
    best = min(winners, key=_selection_key).hyperparams if winners else None
    return best, result


def _corrupt(test: Dataset, kind: str, level: float, seed: int) -> Dataset:
    if kind == "gaussian":
        return add_gaussian_noise(test, level, seed)
    if kind == "salt_pepper":
        return add_salt_pepper_noise(test, level, seed)
    raise InvalidArgumentError(f"unknown noise kind {kind!r}")


def noise_sweep(train: Dataset, test: Dataset, hp: Hyperparams, kind: str,
                levels, seeds) -> tuple[SweepResult, dict[float, float]]:
    """Robustness protocol: train once on clean data, evaluate under noise.

    Emits one row per (level, seed) pair on the test set corrupted at that
    level, and returns the per-level mean accuracy alongside the table.
    Level 0 reproduces the clean evaluation exactly for every seed.
    """
    if kind not in NOISE_KINDS:
        raise InvalidArgumentError(f"unknown noise kind {kind!r}")
    levels = [float(level) for level in levels]
    seeds = [int(seed) for seed in seeds]
    if any(level < 0 for level in levels):
        raise InvalidArgumentError("noise levels must be non-negative")
    if not levels or not seeds:
        raise InvalidArgumentError("need at least one level and one seed")
    fitted = fit(train, hp)
    rows = []
    index = 0
    for level in levels:
        for seed in seeds:
            corrupted = _corrupt(test, kind, level, seed)
            metrics = evaluate(fitted.model, corrupted)
            rows.append(SweepRow(index=index, hyperparams=hp, noise_kind=kind,
                                 noise_level=level, noise_seed=seed,
                                 metrics=metrics, wall_time=fitted.wall_time,
                                 final_objective=fitted.trace.objective[-1],
                                 iterations=fitted.model.iter,
                                 status=fitted.trace.status))
            index += 1
    result = SweepResult(rows=rows)
    means = {
        level: float(np.mean([row.metrics.accuracy for row in rows
                              if row.noise_level == level]))
        for level in levels
    }
    return result, means


def sensitivity_grid(train: Dataset, test: Dataset, hp_base: Hyperparams,
                     r_values, beta_values) -> np.ndarray:
    """Accuracy surface over (rank, beta); failed cells are NaN.

    All other hyperparameters are held at ``hp_base``.  Duplicated values
    produce identical rows/columns (the computation is deterministic).
    """
    r_values = list(r_values)
    beta_values = list(beta_values)
    if not r_values or not beta_values:
        raise InvalidArgumentError("value lists must be non-empty")
    surface = np.full((len(r_values), len(beta_values)), np.nan)
    for i, rank in enumerate(r_values):
        for j, beta in enumerate(beta_values):
            hp = replace(hp_base, rank=int(rank), beta=float(beta))
            try:
                result = fit(train, hp)
                surface[i, j] = evaluate(result.model, test).accuracy
            except (InvalidArgumentError, NumericalError):
                pass  # cell stays NaN (failure marker)
    return surface


def write_sensitivity_csv(surface: np.ndarray, r_values, beta_values, path) -> None:
    lines = ["rank,beta,accuracy"]
    for i, rank in enumerate(r_values):
        for j, beta in enumerate(beta_values):
            cell = surface[i, j]
            value = "" if np.isnan(cell) else f"{cell:.2f}"
            lines.append(f"{int(rank)},{float(beta)!r},{value}")
    Path(path).write_text("\n".join(lines) + "\n")


def export_weight_heatmap(w: np.ndarray, csv_path, pgm_path) -> None:
    """Write the coefficient matrix as exact CSV and a min-max scaled PGM image.

    The CSV carries 17 significant digits (lossless for float64).  The PGM is
    8-bit binary (P5); an all-constant matrix maps to uniform mid-gray 128.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise InvalidArgumentError("weight matrix must be 2-D")
    lines = [",".join(f"{value:.17g}" for value in row) for row in w]
    Path(csv_path).write_text("\n".join(lines) + "\n")

    low, high = float(w.min()), float(w.max())
    if high > low:
        pixels = np.rint((w - low) / (high - low) * 255.0).astype(np.uint8)
    else:
        pixels = np.full(w.shape, 128, dtype=np.uint8)
    header = f"P5\n{w.shape[1]} {w.shape[0]}\n255\n".encode("ascii")
    Path(pgm_path).write_bytes(header + pixels.tobytes())


def export_convergence_trace(trace: SolverTrace, path) -> None:
    """CSV of the per-iteration history; row 0 is the initial state."""
    lines = ["iter,objective,w_step_norm,z_step_norm,b_step,halvings"]
    for k in range(len(trace)):
        lines.append(f"{k},{trace.objective[k]:.17g},{trace.w_step[k]:.17g},"
                     f"{trace.z_step[k]:.17g},{trace.b_step[k]:.17g},"
                     f"{trace.halvings[k]}")
    Path(path).write_text("\n".join(lines) + "\n")
