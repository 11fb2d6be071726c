"""
Genetic-programming symbolic regression of a one-variable curve.

Programs are flat prefix lists (see ``expressions``). Each generation breeds
a new population by tournament selection followed by subtree crossover,
subtree mutation, point mutation or reproduction; offspring longer than the
complexity ceiling are discarded in favour of a copy of their parent. A
Pareto hall of fame keeps the lowest-loss program at every complexity.
After evolution the constants of every front member are polished and one
member is chosen as the run's answer.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .. import config
from ..exceptions import PopulationCollapseError
from .expressions import FUNCTIONS, VARIABLE, Function, SymbolicExpr, execute, subtree_end

logger = logging.getLogger(__name__)

_PENALTY = 1e6


@dataclass
class SrConfig:
    """Search settings; defaults are tuned for desk-scale planted recovery."""

    population_size: int = config.sr_population_size
    generations: int = config.sr_generations
    max_complexity: int = config.sr_max_complexity
    parsimony: float = config.sr_parsimony
    binary_operators: Tuple[str, ...] = config.sr_binary_operators
    unary_operators: Tuple[str, ...] = config.sr_unary_operators
    refine_iterations: int = config.sr_refine_iterations
    repeats: int = config.sr_repeats
    tournament_size: int = config.sr_tournament_size
    p_crossover: float = config.sr_p_crossover
    p_subtree_mutation: float = config.sr_p_subtree_mutation
    p_point_mutation: float = config.sr_p_point_mutation
    p_point_replace: float = config.sr_p_point_replace
    init_depth: Tuple[int, int] = config.sr_init_depth
    const_range: Tuple[float, float] = config.sr_const_range
    p_optimize: float = config.sr_p_optimize
    optimize_nfev: int = config.sr_optimize_nfev
    max_restarts: int = config.sr_max_restarts

    def __post_init__(self):
        self.binary_operators = tuple(self.binary_operators)
        self.unary_operators = tuple(self.unary_operators)
        self.init_depth = tuple(self.init_depth)
        self.const_range = tuple(self.const_range)
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if self.max_complexity < 3:
            raise ValueError(f"max_complexity must be >= 3, got {self.max_complexity}")
        if self.population_size < 2 or self.generations < 0:
            raise ValueError("population_size must be >= 2 and generations >= 0")
        for name in self.binary_operators + self.unary_operators:
            if name not in FUNCTIONS:
                raise ValueError(f"unknown operator {name!r}")
        if any(FUNCTIONS[n].arity != 2 for n in self.binary_operators):
            raise ValueError("binary_operators must all take two arguments")
        if any(FUNCTIONS[n].arity != 1 for n in self.unary_operators):
            raise ValueError("unary_operators must all take one argument")
        if not self.binary_operators:
            raise ValueError("at least one binary operator is required")
        if self.p_crossover + self.p_subtree_mutation + self.p_point_mutation > 1:
            raise ValueError("operator probabilities must sum to at most 1")

    @property
    def function_set(self) -> List[Function]:
        return [FUNCTIONS[n] for n in self.binary_operators + self.unary_operators]

    def to_dict(self) -> dict:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out


@dataclass(frozen=True)
class Candidate:
    """One repeat's answer with its weighted squared error on the curve."""

    expr: SymbolicExpr
    sq_error: float
    seed: int
    kind: str = ""

    def __post_init__(self):
        if not self.sq_error >= 0:
            raise ValueError(f"sq_error must be >= 0, got {self.sq_error}")

    @property
    def complexity(self) -> int:
        return self.expr.complexity

    def to_dict(self) -> dict:
        return {"expr": str(self.expr), "sq_error": self.sq_error, "seed": self.seed,
                "kind": self.kind, "complexity": self.complexity}


@dataclass
class _Member:
    program: list
    loss: float
    fitness: float


class SymbolicRegressor:
    """
    One seeded GP run.

    Attributes after ``fit``:
        pareto_front_: {complexity: (loss, program)} with dominated entries removed
        best_: the selected SymbolicExpr
        restarts_: number of restarts spent on collapsed populations
    """

    def __init__(self, cfg: Optional[SrConfig] = None, seed: int = 0):
        self.cfg = cfg or SrConfig()
        self.seed = int(seed)
        self.pareto_front_: Dict[int, Tuple[float, list]] = {}
        self.best_: Optional[SymbolicExpr] = None
        self.restarts_ = 0

    # ------------------------------------------------------------ fitness

    def _set_data(self, U, y, w):
        self._U = np.asarray(U, dtype=float)
        self._y = np.asarray(y, dtype=float)
        w = np.ones_like(self._y) if w is None else np.asarray(w, dtype=float)
        self._w = w / w.sum()
        self._sqrt_w = np.sqrt(self._w)
        mean = float(np.sum(self._w * self._y))
        var = float(np.sum(self._w * (self._y - mean) ** 2))
        self._scale = var if var > 1e-300 else max(float(np.sum(self._w * self._y ** 2)), 1e-300)

    def weighted_sq_error(self, program) -> float:
        pred = execute(program, self._U)
        if not np.all(np.isfinite(pred)):
            return math.inf
        return float(np.sum(self._w * (pred - self._y) ** 2))

    def _loss(self, program) -> float:
        return self.weighted_sq_error(program) / self._scale

    def _member(self, program) -> _Member:
        loss = self._loss(program)
        return _Member(program, loss, loss + self.cfg.parsimony * len(program))

    # ------------------------------------------------------------ variation

    def _terminal(self, rng):
        if rng.integers(2) == 0:
            return VARIABLE
        return float(rng.uniform(*self.cfg.const_range))

    def build_program(self, rng) -> list:
        """Random program by the grow/full half-and-half method."""
        functions = self.cfg.function_set
        full = bool(rng.integers(2))
        max_depth = int(rng.integers(*self.cfg.init_depth))
        function = functions[rng.integers(len(functions))]
        program = [function]
        pending = [function.arity]
        while pending:
            depth = len(pending)
            if depth < max_depth and (full or rng.integers(len(functions) + 1) < len(functions)):
                function = functions[rng.integers(len(functions))]
                program.append(function)
                pending.append(function.arity)
            else:
                program.append(self._terminal(rng))
                pending[-1] -= 1
                while pending and pending[-1] == 0:
                    pending.pop()
                    if pending:
                        pending[-1] -= 1
        return program

    @staticmethod
    def _subtree(program, rng) -> Tuple[int, int]:
        probs = np.array([0.9 if isinstance(t, Function) else 0.1 for t in program])
        start = int(np.searchsorted(np.cumsum(probs / probs.sum()), rng.uniform()))
        start = min(start, len(program) - 1)
        return start, subtree_end(program, start)

    def crossover(self, parent, donor, rng) -> list:
        start, end = self._subtree(parent, rng)
        d_start, d_end = self._subtree(donor, rng)
        return parent[:start] + donor[d_start:d_end] + parent[end:]

    def subtree_mutation(self, parent, rng) -> list:
        return self.crossover(parent, self.build_program(rng), rng)

    def point_mutation(self, parent, rng) -> list:
        program = list(parent)
        by_arity = {1: [f for f in self.cfg.function_set if f.arity == 1],
                    2: [f for f in self.cfg.function_set if f.arity == 2]}
        for i, token in enumerate(program):
            if rng.uniform() >= self.cfg.p_point_replace:
                continue
            if isinstance(token, Function):
                choices = by_arity[token.arity]
                if choices:
                    program[i] = choices[rng.integers(len(choices))]
            else:
                program[i] = self._terminal(rng)
        return program

    # ------------------------------------------------------------ constants

    def _residuals(self, program, positions):
        def fn(values):
            trial = list(program)
            for p, v in zip(positions, values):
                trial[p] = float(v)
            r = self._sqrt_w * (execute(trial, self._U) - self._y)
            return np.where(np.isfinite(r), r, _PENALTY)
        return fn

    def optimize_constants(self, program, max_nfev: int) -> list:
        """Least-squares fit of a program's constants; returns the improved program."""
        positions = [i for i, t in enumerate(program) if isinstance(t, float)]
        if not positions:
            return program
        x0 = np.array([program[p] for p in positions])
        try:
            result = least_squares(self._residuals(program, positions), x0, max_nfev=max_nfev)
        except (ValueError, FloatingPointError) as e:
            logger.debug(f"constant fit skipped: {e}")
            return program
        trial = list(program)
        for p, v in zip(positions, result.x):
            trial[p] = float(v)
        return trial if self._loss(trial) <= self._loss(program) else program

    def refine_constants(self, program) -> list:
        """Coordinate-wise golden-section descent over the constants."""
        program = self.optimize_constants(program, max_nfev=200)
        positions = [i for i, t in enumerate(program) if isinstance(t, float)]
        best = self._loss(program)
        for _ in range(self.cfg.refine_iterations):
            before = best
            for p in positions:
                c = program[p]

                def objective(v, p=p):
                    trial = list(program)
                    trial[p] = float(v)
                    loss = self._loss(trial)
                    return loss if math.isfinite(loss) else 1e300

                step = 0.1 * max(abs(c), 1e-3)
                try:
                    result = minimize_scalar(objective, bracket=(c - step, c + step), method="golden")
                except (ValueError, RuntimeError):
                    continue
                if result.fun < best:
                    program = list(program)
                    program[p] = float(result.x)
                    best = float(result.fun)
            if not before - best > 1e-12 * max(before, 1e-300):
                break
        return program

    # ------------------------------------------------------------ evolution

    def _tournament(self, population: List[_Member], rng) -> _Member:
        contenders = rng.integers(0, len(population), self.cfg.tournament_size)
        return min((population[i] for i in contenders), key=lambda m: m.fitness)

    def _offspring(self, population, rng) -> list:
        cfg = self.cfg
        parent = self._tournament(population, rng).program
        roll = rng.uniform()
        if roll < cfg.p_crossover:
            child = self.crossover(parent, self._tournament(population, rng).program, rng)
        elif roll < cfg.p_crossover + cfg.p_subtree_mutation:
            child = self.subtree_mutation(parent, rng)
        elif roll < cfg.p_crossover + cfg.p_subtree_mutation + cfg.p_point_mutation:
            child = self.point_mutation(parent, rng)
        else:
            child = list(parent)
        if len(child) > cfg.max_complexity:
            child = list(parent)
        if rng.uniform() < cfg.p_optimize:
            child = self.optimize_constants(child, cfg.optimize_nfev)
        return child

    def _record(self, hall: Dict[int, Tuple[float, list]], population: List[_Member]):
        for m in population:
            if not math.isfinite(m.loss):
                continue
            c = len(m.program)
            if c not in hall or m.loss < hall[c][0]:
                hall[c] = (m.loss, list(m.program))

    def _initial_population(self, rng) -> List[_Member]:
        population = []
        while len(population) < self.cfg.population_size:
            program = self.build_program(rng)
            if len(program) <= self.cfg.max_complexity:
                population.append(self._member(program))
        return population

    def _evolve(self, rng) -> Dict[int, Tuple[float, list]]:
        hall: Dict[int, Tuple[float, list]] = {}
        population = self._initial_population(rng)
        for generation in range(self.cfg.generations + 1):
            if not any(math.isfinite(m.loss) for m in population):
                raise PopulationCollapseError(
                    f"every program failed to evaluate at generation {generation}")
            self._record(hall, population)
            if generation == self.cfg.generations:
                break
            population = [self._member(self._offspring(population, rng))
                          for _ in range(self.cfg.population_size)]
            if generation % 50 == 0:
                best = min(population, key=lambda m: m.fitness)
                logger.debug(f"seed {self.seed} gen {generation}: best loss {best.loss:.3e} "
                             f"at complexity {len(best.program)}")
        return hall

    @staticmethod
    def pareto_filter(hall: Dict[int, Tuple[float, list]]) -> Dict[int, Tuple[float, list]]:
        front, best = {}, math.inf
        for c in sorted(hall):
            loss, program = hall[c]
            if loss < best:
                front[c] = (loss, program)
                best = loss
        return front

    def choose(self, front: Dict[int, Tuple[float, list]]) -> list:
        """
        Among members within ``sr_best_loss_window`` of the lowest loss, take
        the one with the largest log-loss drop per unit of added complexity.
        """
        ordered = sorted(front.items())
        min_loss = min(loss for _, (loss, _) in ordered)
        window = config.sr_best_loss_window * max(min_loss, 1e-300)
        best_score, best_program = -math.inf, ordered[-1][1][1]
        prev_c, prev_log = None, None
        for c, (loss, program) in ordered:
            log_loss = math.log(max(loss, 1e-300))
            score = 0.0 if prev_c is None else -(log_loss - prev_log) / (c - prev_c)
            if loss <= window and score > best_score:
                best_score, best_program = score, program
            prev_c, prev_log = c, log_loss
        return best_program

    def fit(self, U, y, weights=None) -> "SymbolicRegressor":
        self._set_data(U, y, weights)
        for attempt in range(self.cfg.max_restarts + 1):
            rng = np.random.default_rng([self.seed, attempt])
            try:
                hall = self._evolve(rng)
                break
            except PopulationCollapseError as e:
                self.restarts_ = attempt + 1
                logger.warning(f"seed {self.seed}: {e}; restart {attempt + 1}/{self.cfg.max_restarts}")
        else:
            raise PopulationCollapseError(
                f"population collapsed after {self.cfg.max_restarts} restarts (seed {self.seed})")

        refined = {}
        for c, (_, program) in self.pareto_filter(hall).items():
            program = self.refine_constants(program)
            loss = self._loss(program)
            if math.isfinite(loss) and (c not in refined or loss < refined[c][0]):
                refined[c] = (loss, program)
        self.pareto_front_ = self.pareto_filter(refined)
        self.best_ = SymbolicExpr(self.choose(self.pareto_front_))
        return self


def sr_fit(curve, cfg: Optional[SrConfig] = None, seed: int = 0) -> Candidate:
    """
    Fit one seeded GP run to a curve.

    Args:
        curve: object with ``U``, ``values`` and ``weights`` arrays and a ``kind``
        cfg: search settings
        seed: run seed; equal seeds give identical candidates

    Raises:
        ValueError: if the curve has fewer than ``sr_min_points`` points
        PopulationCollapseError: if every restart collapses
    """
    cfg = cfg or SrConfig()
    U = np.asarray(curve.U, dtype=float)
    if U.size < config.sr_min_points:
        raise ValueError(f"curve has {U.size} points; at least {config.sr_min_points} are required")
    regressor = SymbolicRegressor(cfg, seed).fit(U, curve.values, curve.weights)
    expr = regressor.best_
    sq_error = regressor.weighted_sq_error(expr.program)
    kind = getattr(curve, "kind", "")
    logger.info(f"SR {kind} seed {seed}: {expr} (complexity {expr.complexity}, sq_error {sq_error:.3e})")
    return Candidate(expr, sq_error, int(seed), kind)
