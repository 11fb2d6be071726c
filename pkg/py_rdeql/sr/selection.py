"""
Template voting over the candidates of repeated SR runs.

Every candidate is reduced to its coefficient-free template; the template
reported most often wins, with ties going to the simpler template and then
to the smaller error. The winning template's lowest-error candidate supplies
the coefficients.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Sequence

from .engine import Candidate
from .expressions import SymbolicExpr, Template, canonical_template

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SymbolicModel:
    """Selected closed form for one rate function."""

    template: Template
    expr: SymbolicExpr
    sq_error: float
    frequency: int
    n_candidates: int
    kind: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "template": self.template.display,
            "expr": str(self.expr),
            "sq_error": self.sq_error,
            "frequency": self.frequency,
            "n_candidates": self.n_candidates,
            "complexity": self.expr.complexity,
        }


@dataclass(frozen=True)
class TemplateSummary:
    template: Template
    count: int
    complexity: int
    best: Candidate


def summarize_templates(candidates: Sequence[Candidate]) -> List[TemplateSummary]:
    """
    Group candidates by template, ordered by the selection key.

    Within a group the representative is the lowest-error candidate; exact
    error ties fall back to the expression text so the result does not depend
    on input order.
    """
    groups: Dict[str, List[Candidate]] = defaultdict(list)
    for candidate in candidates:
        groups[canonical_template(candidate.expr).key].append(candidate)

    summaries = []
    for key, members in groups.items():
        best = min(members, key=lambda c: (c.sq_error, c.complexity, str(c.expr), c.seed))
        summaries.append(TemplateSummary(Template(key), len(members),
                                         min(c.complexity for c in members), best))
    summaries.sort(key=lambda s: (-s.count, s.complexity, s.best.sq_error, s.template.key))
    return summaries


def select_best(candidates: Sequence[Candidate]) -> SymbolicModel:
    """
    Raises:
        ValueError: if no candidates are given
    """
    if not candidates:
        raise ValueError("select_best needs at least one candidate")
    summaries = summarize_templates(candidates)
    winner = summaries[0]
    kind = winner.best.kind
    logger.info(f"selected {kind} template {winner.template.display} "
                f"({winner.count}/{len(candidates)}): {winner.best.expr}")
    return SymbolicModel(winner.template, winner.best.expr, winner.best.sq_error,
                         winner.count, len(candidates), kind)


def template_table(candidates: Sequence[Candidate]) -> List[tuple]:
    """Rows ``(kind, template, count, complexity, best_sq_error)`` in selection order."""
    return [(s.best.kind, s.template.display, s.count, s.complexity, s.best.sq_error)
            for s in summarize_templates(candidates)]
