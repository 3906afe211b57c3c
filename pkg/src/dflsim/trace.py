"""Per-iteration trace schema shared by the engines and the metrics writers.

Field names below are the on-disk metrics schema; external tooling keys on
them, so they are part of the package's compatibility surface and must not
be renamed. ``slack_lemma1``/``slack_lemma3``/``lemma4_margin`` carry the
dual-increment slack, cumulative-descent slack, and objective-floor margin
for the transition; the baseline averaging engine has no dual variables and
writes zeros there.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

TRACE_FIELDS = (
    "t",
    "L",
    "dw",
    "dwk_max",
    "dlambda_max",
    "consensus_gap",
    "objective",
    "slack_lemma1",
    "slack_lemma3",
    "lemma4_margin",
)


@dataclass(frozen=True)
class TraceRow:
    """One transition of a run.

    t: 1-based transition counter.
    L: coupled objective (augmented-Lagrangian value) after the transition,
       or the weighted objective for the averaging baseline.
    dw: norm of the consensus-vector change over the transition.
    dwk_max: largest per-client parameter change.
    dlambda_max: largest per-client dual change (0 for the baseline).
    consensus_gap: max_k distance between client k and the consensus vector.
    objective: weighted objective at the consensus vector.
    slack_lemma1 / slack_lemma3 / lemma4_margin: monitor outputs, see module
    docstring.
    """

    t: int
    L: float
    dw: float
    dwk_max: float
    dlambda_max: float
    consensus_gap: float
    objective: float
    slack_lemma1: float
    slack_lemma3: float
    lemma4_margin: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


assert tuple(f.name for f in fields(TraceRow)) == TRACE_FIELDS
