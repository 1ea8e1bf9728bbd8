"""Newton-Raphson refit of node positions with target incrementation."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .distortion import PenaltyParams, TargetShape, assemble_distortion, increment_targets, measured_shape
from .mesh import DegenerateElementError
from .sliding import ProjectionError, assemble_sliding

log = logging.getLogger(__name__)


class RefitError(RuntimeError):
    """Base class for refit failures; carries the best state reached."""

    def __init__(self, message, nodes=None, report=None):
        super().__init__(message)
        self.nodes = nodes
        self.report = report


class NonConvergenceError(RefitError):
    pass


class SingularTangentError(RefitError):
    pass


@dataclass
class RefitControls:
    """Newton and incrementation settings.

    ``n_increments`` sets the initial uniform step ``1/N``; ``max_increments``
    caps the number of attempted increments, failed ones included.
    """

    newton_tol: float = 1e-5
    max_newton_iters: int = 25
    n_increments: int = 1
    max_increments: int = 20
    fast_iters: int = 5
    fast_count: int = 2
    max_step_halvings: int = 10
    line_search: bool = False
    max_line_search: int = 8
    zero_residual: float = 1e-12
    divergence_factor: float = 1e3
    increment_ratios: bool = True


class SubstepController:
    """Bisect on failure, double back after consecutive fast successes.

    The step never exceeds the initial uniform step, so a run without
    failures follows ``1/N, 2/N, ..., 1``.
    """

    def __init__(self, n_increments=1, max_increments=20, fast_iters=5, fast_count=2, max_halvings=10):
        if n_increments < 1:
            raise ValueError("n_increments must be >= 1")
        self.initial_step = 1.0 / n_increments
        self.step = self.initial_step
        self.alpha = 0.0
        self.max_increments = max_increments
        self.fast_iters = fast_iters
        self.fast_count = fast_count
        self.min_step = self.initial_step / 2.0**max_halvings
        self.attempts = 0
        self._streak = 0
        self._pending = None

    @property
    def done(self):
        return self.alpha >= 1.0

    def next_alpha(self):
        if self.done:
            raise RuntimeError("incrementation already finished")
        if self.attempts >= self.max_increments:
            raise NonConvergenceError(
                f"increment budget of {self.max_increments} exhausted at alpha={self.alpha:.6g}"
            )
        a = self.alpha + self.step
        if a > 1.0 - 1e-12:
            a = 1.0
        self.attempts += 1
        self._pending = a
        return a

    def success(self, iterations):
        self.alpha = self._pending
        self._streak = self._streak + 1 if iterations <= self.fast_iters else 0
        if self.step < self.initial_step and self._streak >= self.fast_count:
            self.step = min(2.0 * self.step, self.initial_step)
            self._streak = 0

    def failure(self):
        self._streak = 0
        self.step /= 2.0
        if self.step < self.min_step:
            raise NonConvergenceError(f"increment step underflow at alpha={self.alpha:.6g}")


@dataclass
class IncrementRecord:
    alpha: float
    iterations: int
    res_norm: float
    inc_norm: float
    seconds: float
    converged: bool


@dataclass
class NewtonReport:
    increments: list = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0

    @property
    def n_inc(self):
        """Accepted increments."""
        return sum(r.converged for r in self.increments)

    @property
    def n_attempts(self):
        return len(self.increments)

    @property
    def total_iterations(self):
        return sum(r.iterations for r in self.increments)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "iters", "res_norm", "inc_norm", "seconds", "converged"])
            for r in self.increments:
                w.writerow([repr(float(r.alpha)), int(r.iterations), repr(float(r.res_norm)), repr(float(r.inc_norm)), repr(float(r.seconds)), int(r.converged)])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        incs = [
            IncrementRecord(
                float(r["alpha"]), int(r["iters"]), float(r["res_norm"]), float(r["inc_norm"]), float(r["seconds"]),
                bool(int(r["converged"])),
            )
            for r in rows
        ]
        rep = cls(incs)
        rep.converged = bool(incs) and incs[-1].converged and incs[-1].alpha == 1.0
        rep.wall_time = sum(r.seconds for r in incs)
        return rep


def dirichlet_mask(n_nodes, entries=()):
    """Boolean dof mask from ``(node_indices, components)`` pairs.

    ``components`` is a string over ``"xyz"``.
    """
    mask = np.zeros(3 * n_nodes, dtype=bool)
    for nodes, comps in entries:
        nodes = np.asarray(nodes, dtype=np.int64)
        for c in comps:
            mask[3 * nodes + "xyz".index(c)] = True
    return mask


@dataclass
class CondensedSystem:
    K: sp.csr_matrix
    f: np.ndarray
    free: np.ndarray
    reactions: np.ndarray


def apply_dirichlet(K, f, fixed):
    """Eliminate fixed dofs; the residual on fixed dofs is kept as reactions."""
    fixed = np.asarray(fixed, dtype=bool)
    free = np.flatnonzero(~fixed)
    K = sp.csr_matrix(K)
    return CondensedSystem(K[free][:, free], np.asarray(f)[free], free, np.asarray(f)[fixed])


@dataclass
class RefitProblem:
    """Mesh refitting problem on an updated reference configuration.

    Attributes
    ----------
    mesh : Mesh whose coordinates are the starting (distorted) state
    targets : goal TargetShape
    penalties : PenaltyParams, evaluated once at the starting centroids
    interfaces : list of SlidingInterface built on ``mesh``
    fixed : boolean dof mask of Dirichlet dofs
    """

    mesh: object
    targets: TargetShape
    penalties: object = field(default_factory=PenaltyParams)
    interfaces: list = field(default_factory=list)
    fixed: np.ndarray = None
    controls: RefitControls = field(default_factory=RefitControls)

    def __post_init__(self):
        if self.fixed is None:
            self.fixed = np.zeros(3 * self.mesh.n_nodes, dtype=bool)
        self.fixed = np.asarray(self.fixed, dtype=bool)
        if self.fixed.shape != (3 * self.mesh.n_nodes,):
            raise ValueError("Dirichlet mask must have one entry per dof")
        for iface in self.interfaces:
            pinned_nodes = iface.slave_nodes[iface.pinned]
            if np.any(~self.fixed.reshape(-1, 3)[pinned_nodes].all(axis=1)):
                raise ValueError("nodes pinned on a sliding interface must be fixed in all components")


def _assemble(problem, eps, targets, x, free, order=2):
    f, K, pi = assemble_distortion(problem.mesh, targets, eps, nodes=x, order=order)
    for iface in problem.interfaces:
        fm, Km, pm = assemble_sliding(iface, x, problem.mesh.n_nodes, order=order)
        f = f + fm
        pi += pm
        if K is not None:
            K = K + Km
    f = f[free]
    if K is not None:
        K = K.tocsr()[free][:, free]
    return f, K, pi


def _check_rigid_modes(K, free, fixed_mask):
    n = len(fixed_mask) // 3
    scale = abs(K).sum(axis=1).max() if K.shape[0] else 0.0
    for c in range(3):
        t = np.zeros(3 * n)
        t[c::3] = 1.0
        tf = t[free]
        if not tf.any():
            continue
        r = K @ tf
        if np.linalg.norm(r) <= 1e-10 * max(scale, 1e-300) * np.linalg.norm(tf):
            raise SingularTangentError(
                f"tangent is singular: rigid translation along {'xyz'[c]} is unconstrained; "
                "pin nodes or add sliding constraints"
            )


def _solve(K, f):
    try:
        lu = spla.splu(K.tocsc())
    except RuntimeError as exc:
        raise SingularTangentError(f"tangent factorization failed ({exc}); pin nodes to remove rigid modes") from None
    dx = lu.solve(-f)
    if not np.all(np.isfinite(dx)):
        raise SingularTangentError("tangent solve produced non-finite values")
    return dx


class _NewtonFailure(Exception):
    def __init__(self, message, iterations=0):
        super().__init__(message)
        self.iterations = iterations


def _newton(problem, eps, targets, x0, X_ref, free, ctrl, check_modes):
    x = x0.copy()
    f, K, pi = _assemble(problem, eps, targets, x, free)
    f0 = np.linalg.norm(f)
    if f0 <= ctrl.zero_residual:
        return x, 0, f0, 0.0
    if check_modes:
        _check_rigid_modes(K, free, problem.fixed)
    tol = ctrl.newton_tol
    diam = problem.mesh.diameter()
    dnorm = np.inf
    for it in range(1, ctrl.max_newton_iters + 1):
        if K.shape[0] == 0:
            return x, it - 1, 0.0, 0.0
        dx = _solve(K, f)
        if np.abs(dx).max() > diam:
            raise _NewtonFailure(f"Newton step larger than the mesh ({np.abs(dx).max():.3g} > {diam:.3g})", it)
        step = 1.0
        if ctrl.line_search:
            for _ in range(ctrl.max_line_search):
                trial = x.copy()
                trial.reshape(-1)[free] += step * dx
                try:
                    _, _, pt = _assemble(problem, eps, targets, trial, free, order=0)
                except (DegenerateElementError, ProjectionError):
                    pt = np.inf
                if pt <= pi:
                    break
                step *= 0.5
        x.reshape(-1)[free] += step * dx
        dnorm = step * np.linalg.norm(dx)
        try:
            f, K, pi = _assemble(problem, eps, targets, x, free)
        except (DegenerateElementError, ProjectionError) as exc:
            raise _NewtonFailure(str(exc), it) from None
        fn = np.linalg.norm(f)
        if not np.isfinite(fn) or fn > ctrl.divergence_factor * max(f0, 1.0):
            raise _NewtonFailure(f"divergence (|f|={fn:.3g})", it)
        dtot = np.linalg.norm((x - X_ref).reshape(-1)[free])
        if fn <= tol * max(1.0, f0) and dnorm <= tol * max(1.0, dtot):
            return x, it, fn, dnorm
    raise _NewtonFailure(f"no convergence in {ctrl.max_newton_iters} iterations (|f|={fn:.3g}, |dx|={dnorm:.3g})", ctrl.max_newton_iters)


def refit(problem):
    """Minimize distortion plus sliding potentials; returns ``(nodes, report)``.

    Raises
    ------
    NonConvergenceError
        when substepping exhausts its budget; ``nodes`` holds the last
        converged state.
    SingularTangentError
        when the tangent has unconstrained rigid modes.
    """
    ctrl = problem.controls
    mesh = problem.mesh
    X_ref = mesh.nodes.copy()
    eps = problem.penalties.evaluate(mesh.centroids()) if isinstance(problem.penalties, PenaltyParams) else np.asarray(problem.penalties)
    start = measured_shape(mesh)
    goal = problem.targets
    if not ctrl.increment_ratios:
        start = TargetShape(start.lengths, start.angles, goal.ratios)
    free = np.flatnonzero(~problem.fixed)
    report = NewtonReport()
    t_start = time.perf_counter()
    ctl = SubstepController(ctrl.n_increments, ctrl.max_increments, ctrl.fast_iters, ctrl.fast_count, ctrl.max_step_halvings)
    x = X_ref.copy()
    first = True
    try:
        while not ctl.done:
            alpha = ctl.next_alpha()
            targets = increment_targets(start, goal, alpha)
            t0 = time.perf_counter()
            try:
                x_new, iters, rn, dn = _newton(problem, eps, targets, x, X_ref, free, ctrl, first)
            except _NewtonFailure as exc:
                log.info("increment alpha=%.6g failed: %s", alpha, exc)
                report.increments.append(IncrementRecord(alpha, exc.iterations, np.nan, np.nan, time.perf_counter() - t0, False))
                ctl.failure()
                continue
            first = False
            x = x_new
            report.increments.append(IncrementRecord(alpha, iters, rn, dn, time.perf_counter() - t0, True))
            ctl.success(iters)
    except RefitError as exc:
        report.wall_time = time.perf_counter() - t_start
        exc.nodes = x
        exc.report = report
        raise
    report.converged = True
    report.wall_time = time.perf_counter() - t_start
    return x, report
