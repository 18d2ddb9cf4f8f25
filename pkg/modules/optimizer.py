"""
L-BFGS minimisation of the training loss and single-trial orchestration.
"""
import logging
import time
import warnings
from collections import OrderedDict, deque
from dataclasses import dataclass, field, fields
from enum import Enum

import numpy as np
import pandas as pd
from scipy.optimize import line_search

from config.app_config import ENGINE_CONFIG, OPTIM_CONFIG
from modules.compactify import compactify
from modules.engine import evaluate, loss_and_grad, plan
from modules.errors import ConfigError, InvalidSpec
from modules.geometry import GeometrySpec, build, diameter, sizes
from modules.tensor_core import Tensor
from modules.utils import table_to_csv

logger = logging.getLogger(__name__)


class ConvergedReason(str, Enum):
    GRAD_TOL = "GradTol"
    LOSS_TOL = "LossTol"
    MAX_ITERS = "MaxIters"
    LINE_SEARCH_FAIL = "LineSearchFail"


@dataclass(frozen=True)
class OptimConfig:
    memory_pairs: int = OPTIM_CONFIG["memory_pairs"]
    max_iters: int = OPTIM_CONFIG["max_iters"]
    grad_tol: float = OPTIM_CONFIG["grad_tol"]
    loss_tol: float = OPTIM_CONFIG["loss_tol"]
    loss_tol_window: int = OPTIM_CONFIG["loss_tol_window"]
    wolfe_c1: float = OPTIM_CONFIG["wolfe_c1"]
    wolfe_c2: float = OPTIM_CONFIG["wolfe_c2"]
    max_line_search_steps: int = OPTIM_CONFIG["max_line_search_steps"]
    curvature_eps: float = OPTIM_CONFIG["curvature_eps"]

    def __post_init__(self):
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ConfigError(f"need 0 < c1 < c2 < 1, got c1={self.wolfe_c1}, c2={self.wolfe_c2}")
        if self.memory_pairs < 1 or self.max_iters < 0 or self.loss_tol_window < 1:
            raise ConfigError("memory_pairs and loss_tol_window must be >= 1, max_iters >= 0")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown optimizer settings: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class OptimTrace:
    values: list
    reason: ConvergedReason
    message: str = ""

    @property
    def iterations(self):
        return len(self.values) - 1


@dataclass
class TrialResult:
    """
    Outcome of one training.

    ``history`` holds (loss, infidelity) for the starting point and for every
    accepted iteration.
    """
    geometry: str
    compact: bool
    n: int
    chi: int
    seed: int
    final_infidelity: float
    iterations: int
    wall_ms: float
    converged: ConvergedReason
    history: list = field(default_factory=list)
    diameter: int = 0
    largest_tensor: int = 0
    total_elems: int = 0
    peak_elems: int = 0
    contraction_flops: int = 0
    message: str = ""


class NonFiniteObjective(ArithmeticError):
    pass


class _CachedObjective:
    """Memoises (value, gradient) so line search value/slope calls share work."""

    def __init__(self, objective, size=8):
        self.objective = objective
        self.size = size
        self.cache = OrderedDict()

    def __call__(self, x):
        key = x.tobytes()
        if key not in self.cache:
            value, grad = self.objective(x)
            value = float(value)
            grad = np.asarray(grad, dtype=np.float64)
            if not np.isfinite(value) or not np.all(np.isfinite(grad)):
                raise NonFiniteObjective(f"objective returned value={value} or a non-finite gradient")
            self.cache[key] = (value, grad)
            if len(self.cache) > self.size:
                self.cache.popitem(last=False)
        return self.cache[key]

    def value(self, x):
        return self(x)[0]

    def grad(self, x):
        return self(x)[1]


def _two_loop(grad, pairs):
    """Inverse-Hessian times gradient from the stored (s, y, rho) pairs."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def _search(fun, x, direction, f, g, cfg, old_old_fval):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        result = line_search(
            fun.value, fun.grad, x, direction, gfk=g, old_fval=f, old_old_fval=old_old_fval,
            c1=cfg.wolfe_c1, c2=cfg.wolfe_c2, maxiter=cfg.max_line_search_steps,
        )
    return result[0]


def minimize(objective, x0, cfg: OptimConfig = None, callback=None):
    """
    L-BFGS with a strong Wolfe line search.

    Args:
        objective (callable): x -> (value, gradient)
        x0 (np.ndarray): starting point
        cfg (OptimConfig): settings
        callback (callable | None): called with x after every accepted step

    Returns:
        tuple: (x_final, OptimTrace)
    """
    cfg = cfg or OptimConfig()
    fun = _CachedObjective(objective)
    x = np.array(x0, dtype=np.float64)
    try:
        f, g = fun(x)
    except NonFiniteObjective as e:
        return x, OptimTrace([float("nan")], ConvergedReason.LINE_SEARCH_FAIL, str(e))

    values = [f]
    pairs = deque(maxlen=cfg.memory_pairs)
    old_old_fval = f + np.linalg.norm(g) / 2
    reason, message = ConvergedReason.MAX_ITERS, ""

    while True:
        if np.max(np.abs(g), initial=0.0) <= cfg.grad_tol:
            reason = ConvergedReason.GRAD_TOL
            break
        if len(values) - 1 >= cfg.max_iters:
            reason = ConvergedReason.MAX_ITERS
            break

        direction = -_two_loop(g, list(pairs))
        if np.dot(direction, g) >= 0:
            pairs.clear()
            direction = -g
        try:
            alpha = _search(fun, x, direction, f, g, cfg, old_old_fval)
            if alpha is None and pairs:
                logger.warning("line search failed, retrying along steepest descent")
                pairs.clear()
                direction = -g
                alpha = _search(fun, x, direction, f, g, cfg, f + np.linalg.norm(g) / 2)
        except NonFiniteObjective as e:
            reason, message = ConvergedReason.LINE_SEARCH_FAIL, str(e)
            break
        if alpha is None:
            reason, message = ConvergedReason.LINE_SEARCH_FAIL, "no step satisfies the Wolfe conditions"
            break

        x_new = x + alpha * direction
        try:
            f_new, g_new = fun(x_new)
        except NonFiniteObjective as e:
            reason, message = ConvergedReason.LINE_SEARCH_FAIL, str(e)
            break
        if f_new > f:
            reason, message = ConvergedReason.LINE_SEARCH_FAIL, "line search returned an increasing step"
            break

        s, y = x_new - x, g_new - g
        sy = np.dot(s, y)
        if sy > cfg.curvature_eps * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))

        x, f, g = x_new, f_new, g_new
        old_old_fval = None
        values.append(f)
        if callback is not None:
            callback(x)
        logger.debug("iteration %d loss %.17g step %.3e", len(values) - 1, f, alpha)

        window = cfg.loss_tol_window
        if len(values) > window and abs(values[-1 - window] - f) <= cfg.loss_tol * abs(f):
            reason = ConvergedReason.LOSS_TOL
            break

    return x, OptimTrace(values, reason, message)


def flatten(net):
    """All tensor entries, ascending node id, row-major inside each tensor."""
    return np.concatenate([net.nodes[node].data.ravel() for node in net.node_ids])


def unflatten(net, x):
    """Network with the entries of ``x`` placed back in ``flatten`` order."""
    updates, offset = {}, 0
    for node in net.node_ids:
        t = net.nodes[node]
        updates[node] = Tensor(t.indices, x[offset:offset + t.size])
        offset += t.size
    return net.with_tensors(updates)


def run_trial(target, spec: GeometrySpec, compact=False, seed=0, cfg: OptimConfig = None,
              loss=None) -> TrialResult:
    """
    Train one network of geometry ``spec`` towards ``target``.

    Args:
        target (TargetState): target state
        spec (GeometrySpec): ansatz geometry
        compact (bool): compactify the network before training
        seed (int): network initialisation seed
        cfg (OptimConfig): optimizer settings
        loss (str | None): "log" or "squared_infidelity"

    Returns:
        TrialResult: final infidelity, iteration count, history and metrics
    """
    cfg = cfg or OptimConfig()
    loss = loss or ENGINE_CONFIG["loss"]
    if spec.n != target.n or spec.p != target.p:
        raise InvalidSpec(f"target is n={target.n}, p={target.p} but geometry is n={spec.n}, p={spec.p}")

    start = time.perf_counter()
    net = build(spec, seed)
    if compact:
        net = compactify(net, spec.chi)

    # start on the positive overlap side
    if evaluate(target, net, loss).fidelity < 0:
        first = net.node_ids[0]
        net = net.with_tensors({first: net.nodes[first].scaled(-1.0)})

    reports = {}

    def objective(x):
        report = loss_and_grad(target, unflatten(net, x), loss)
        reports[x.tobytes()] = report
        return report.loss, np.concatenate([report.grads[node].data.ravel() for node in net.node_ids])

    x0 = flatten(net)
    history = []

    def record(x):
        report = reports.get(x.tobytes())
        if report is None:
            report = evaluate(target, unflatten(net, x), loss)
        history.append((report.loss, report.infidelity))
        reports.clear()

    first_report = evaluate(target, net, loss)
    history.append((first_report.loss, first_report.infidelity))
    x_final, trace = minimize(objective, x0, cfg, callback=record)

    final_net = unflatten(net, x_final)
    final = evaluate(target, final_net, loss)
    wall_ms = (time.perf_counter() - start) * 1000.0

    largest, total = sizes(final_net)
    contraction = plan(final_net)
    logger.info(
        "trial %s chi=%d compact=%s seed=%s: I=%.3e after %d iterations (%s)",
        spec.label, spec.chi, compact, seed, final.infidelity, trace.iterations, trace.reason.value,
    )
    return TrialResult(
        geometry=spec.label,
        compact=bool(compact),
        n=spec.n,
        chi=spec.chi,
        seed=seed,
        final_infidelity=final.infidelity,
        iterations=trace.iterations,
        wall_ms=wall_ms,
        converged=trace.reason,
        history=history,
        diameter=diameter(final_net),
        largest_tensor=largest,
        total_elems=total,
        peak_elems=contraction.peak_elems,
        contraction_flops=contraction.flops,
        message=trace.message,
    )


def write_history_csv(result: TrialResult, path=None):
    """
    Per-iteration history as CSV (iteration, loss, infidelity).

    Returns:
        str | None: CSV text when ``path`` is None
    """
    history = pd.DataFrame(result.history, columns=["loss", "infidelity"])
    history.insert(0, "iteration", range(len(history)))
    return table_to_csv(history, path)
