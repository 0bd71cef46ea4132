"""Temporal fault trees over pattern events.

Nodes are pattern events (a class of error or behavior sequences, described
by a pattern).  Edges run from an input node to the node it feeds:

``causal_identity``  the child pattern causes exactly the parent pattern
``implication``      the child pattern over-approximates the causes of the
                     parent, so its probability is only an upper bound
``gate_input``       one input of an AND / OR gate on the parent

Leaves are basic events with a probability, or complements of another leaf
(probability ``1 - p``).  Leaves are declared independent; a leaf that
declares a correlation is rejected by ``validate``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .patterns import CountPattern

CAUSAL_IDENTITY = "causal_identity"
IMPLICATION = "implication"
GATE_INPUT = "gate_input"
EDGE_KINDS = (CAUSAL_IDENTITY, IMPLICATION, GATE_INPUT)
AND, OR = "AND", "OR"

MULTI_FAILURE_TAG = "multi-failure"
RELIABLE_FRACTION = 0.1
ENUMERATION_LIMIT = 20


class FaultTreeError(ValueError):
    """Structural problem or missing data in a fault tree."""


@dataclass(frozen=True)
class PatternEvent:
    id: str
    description: str = ""
    pattern_ref: Optional[str] = None
    leaf_prob: Optional[float] = None
    complement_of: Optional[str] = None
    correlated_with: tuple[str, ...] = ()
    tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: str = GATE_INPUT


@dataclass(frozen=True)
class FaultTree:
    nodes: tuple[PatternEvent, ...]
    edges: tuple[Edge, ...]
    gates: Mapping[str, str] = field(default_factory=dict)
    top: str = ""

    def node(self, node_id: str) -> PatternEvent:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def inputs(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges if e.dst == node_id]

    def leaves(self) -> list[PatternEvent]:
        fed = {e.dst for e in self.edges}
        return [n for n in self.nodes if n.id not in fed]

    def basic_events(self) -> list[str]:
        """Leaves carrying their own probability (complement leaves excluded)."""
        return [n.id for n in self.leaves() if n.complement_of is None]

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            d = {"id": n.id, "description": n.description}
            if n.pattern_ref is not None:
                d["pattern"] = n.pattern_ref
            if n.leaf_prob is not None:
                d["leaf_prob"] = n.leaf_prob
            if n.complement_of is not None:
                d["complement_of"] = n.complement_of
            if n.correlated_with:
                d["correlated_with"] = list(n.correlated_with)
            if n.tags:
                d["tags"] = list(n.tags)
            nodes.append(d)
        return {
            "top": self.top,
            "nodes": nodes,
            "edges": [{"from": e.src, "to": e.dst, "kind": e.kind} for e in self.edges],
            "gates": [{"node": k, "type": v} for k, v in sorted(self.gates.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: Mapping) -> "FaultTree":
        try:
            nodes = tuple(
                PatternEvent(
                    id=str(n["id"]),
                    description=n.get("description", ""),
                    pattern_ref=n.get("pattern"),
                    leaf_prob=None if n.get("leaf_prob") is None else float(n["leaf_prob"]),
                    complement_of=n.get("complement_of"),
                    correlated_with=tuple(n.get("correlated_with", ())),
                    tags=tuple(n.get("tags", ())),
                )
                for n in data["nodes"]
            )
            edges = tuple(Edge(e["from"], e["to"], e.get("kind", GATE_INPUT)) for e in data["edges"])
            gates = {g["node"]: g["type"] for g in data.get("gates", ())}
            top = data["top"]
        except (KeyError, TypeError) as exc:
            raise FaultTreeError(f"malformed fault tree JSON: missing or bad field {exc}") from None
        return cls(nodes, edges, gates, top)

    @classmethod
    def from_json(cls, text: str) -> "FaultTree":
        return cls.from_dict(json.loads(text))

    def to_dot(self) -> str:
        lines = ["digraph faulttree {", "  rankdir=BT;"]
        for n in self.nodes:
            label = n.id
            if n.id in self.gates:
                label += f"\\n[{self.gates[n.id]}]"
            if n.leaf_prob is not None:
                label += f"\\np={n.leaf_prob:.3g}"
            attrs = [f'label="{label}"']
            if MULTI_FAILURE_TAG in n.tags:
                attrs.append("color=red")
            lines.append(f'  "{n.id}" [{", ".join(attrs)}];')
        style = {CAUSAL_IDENTITY: "solid", IMPLICATION: "dashed", GATE_INPUT: "solid"}
        for e in self.edges:
            extra = ", penwidth=2, arrowhead=empty" if e.kind == IMPLICATION else ""
            lines.append(f'  "{e.src}" -> "{e.dst}" [style={style.get(e.kind, "solid")}{extra}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def validate(ft: FaultTree) -> list[str]:
    """Structural errors of ``ft``; an empty list means the tree is valid."""
    errors: list[str] = []
    ids = [n.id for n in ft.nodes]
    known = set(ids)
    for i in sorted({i for i in ids if ids.count(i) > 1}):
        errors.append(f"duplicate node id {i}")
    for e in ft.edges:
        if e.kind not in EDGE_KINDS:
            errors.append(f"edge {e.src}->{e.dst}: unknown kind {e.kind!r}")
        for end in (e.src, e.dst):
            if end not in known:
                errors.append(f"edge {e.src}->{e.dst}: unknown node {end}")
    if errors:
        return errors

    # cycles, reported at the first node found on one
    children = {i: [e.dst for e in ft.edges if e.src == i] for i in ids}
    state: dict[str, int] = {}

    def visit(u: str) -> Optional[str]:
        state[u] = 1
        for w in children[u]:
            if state.get(w) == 1:
                return w
            if w not in state:
                hit = visit(w)
                if hit:
                    return hit
        state[u] = 2
        return None

    for i in ids:
        if i not in state:
            hit = visit(i)
            if hit:
                return [f"cycle at {hit}"]

    tops = [i for i in ids if not children[i]]
    if len(tops) != 1:
        errors.append(f"expected exactly one top node, found {len(tops)}: {', '.join(tops)}")
    if ft.top not in known:
        errors.append(f"top {ft.top!r} is not a node")
    elif tops and ft.top not in tops:
        errors.append(f"top {ft.top} feeds another node")

    by_id = {n.id: n for n in ft.nodes}
    fed = {e.dst for e in ft.edges}
    for n in ft.nodes:
        ins = ft.inputs(n.id)
        kinds = {e.kind for e in ins}
        if not ins:
            if n.complement_of is not None:
                base = by_id.get(n.complement_of)
                if base is None:
                    errors.append(f"leaf {n.id}: complement of unknown node {n.complement_of}")
                elif base.id in fed or base.complement_of is not None:
                    errors.append(f"leaf {n.id}: complement target {base.id} is not a basic leaf")
                elif n.leaf_prob is not None and base.leaf_prob is not None and \
                        abs(n.leaf_prob - (1.0 - base.leaf_prob)) > 1e-12:
                    errors.append(f"leaf {n.id}: probability {n.leaf_prob} inconsistent with "
                                  f"complement of {base.id} ({1.0 - base.leaf_prob})")
            if n.leaf_prob is not None and not 0.0 <= n.leaf_prob <= 1.0:
                errors.append(f"leaf {n.id}: probability {n.leaf_prob} outside [0, 1]")
            if n.correlated_with:
                errors.append(f"leaf {n.id}: declared correlated with {', '.join(n.correlated_with)}; "
                              "leaves must be independent, restructure the tree manually")
            if n.id in ft.gates:
                errors.append(f"leaf {n.id} has a gate but no inputs")
            continue
        if n.leaf_prob is not None:
            errors.append(f"internal node {n.id} carries a leaf probability")
        if n.complement_of is not None:
            errors.append(f"internal node {n.id} declares a complement")
        if len(kinds) > 1:
            errors.append(f"node {n.id} mixes input kinds {sorted(kinds)}")
        elif GATE_INPUT in kinds:
            gate = ft.gates.get(n.id)
            if gate not in (AND, OR):
                errors.append(f"node {n.id} has gate inputs but gate {gate!r} (need AND or OR)")
        else:
            if len(ins) != 1:
                errors.append(f"node {n.id} has {len(ins)} {ins[0].kind} inputs (need exactly 1)")
            if n.id in ft.gates:
                errors.append(f"node {n.id} has a gate but no gate inputs")
    for i in ids:
        outs = [e for e in ft.edges if e.src == i and e.kind == CAUSAL_IDENTITY]
        if len(outs) > 1:
            errors.append(f"node {i} has {len(outs)} causal_identity outputs (must be 1-to-1)")
    for g in ft.gates:
        if g not in known:
            errors.append(f"gate on unknown node {g}")
    return errors


def _check(ft: FaultTree) -> None:
    errors = validate(ft)
    if errors:
        raise FaultTreeError("; ".join(errors))


def _resolve_probs(ft: FaultTree, leaf_probs: Optional[Mapping[str, float]]) -> dict[str, float]:
    given = dict(leaf_probs or {})
    by_id = {n.id: n for n in ft.nodes}
    out = {}
    for b in ft.basic_events():
        p = given.get(b, by_id[b].leaf_prob)
        if p is None:
            raise FaultTreeError(f"missing probability for leaf {b}")
        p = float(p)
        if not 0.0 <= p <= 1.0:
            raise FaultTreeError(f"leaf {b}: probability {p} outside [0, 1]")
        out[b] = p
    for n in ft.leaves():
        if n.complement_of is not None and n.id in given:
            if abs(given[n.id] - (1.0 - out[n.complement_of])) > 1e-12:
                raise FaultTreeError(f"leaf {n.id}: supplied probability is not the complement "
                                     f"of {n.complement_of}")
    return out


def _bool_eval(ft: FaultTree, basics: list[str], states: np.ndarray) -> np.ndarray:
    """Top-event truth for each row of ``states`` (rows x basic events)."""
    col = {b: states[:, j] for j, b in enumerate(basics)}
    by_id = {n.id: n for n in ft.nodes}
    memo: dict[str, np.ndarray] = {}

    def ev(i: str) -> np.ndarray:
        if i in memo:
            return memo[i]
        ins = ft.inputs(i)
        if not ins:
            n = by_id[i]
            val = ~col[n.complement_of] if n.complement_of is not None else col[i]
        elif ins[0].kind != GATE_INPUT:
            val = ev(ins[0].src)
        else:
            vals = [ev(e.src) for e in ins]
            op = np.logical_and if ft.gates[i] == AND else np.logical_or
            val = vals[0]
            for v in vals[1:]:
                val = op(val, v)
        memo[i] = val
        return val

    return ev(ft.top)


def _all_states(n: int) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(bool)


def _shared(ft: FaultTree) -> bool:
    """True when some basic event reaches the top along more than one path."""
    by_id = {n.id: n for n in ft.nodes}
    counts: dict[str, int] = {}

    def walk(i: str) -> None:
        ins = ft.inputs(i)
        if not ins:
            n = by_id[i]
            b = n.complement_of or i
            counts[b] = counts.get(b, 0) + 1
            return
        for e in ins:
            walk(e.src)

    walk(ft.top)
    return any(c > 1 for c in counts.values())


def _bottom_up(ft: FaultTree, probs: Mapping[str, float]) -> float:
    by_id = {n.id: n for n in ft.nodes}

    def ev(i: str) -> float:
        ins = ft.inputs(i)
        if not ins:
            n = by_id[i]
            return 1.0 - probs[n.complement_of] if n.complement_of is not None else probs[i]
        if ins[0].kind != GATE_INPUT:
            return ev(ins[0].src)
        vals = [ev(e.src) for e in ins]
        if ft.gates[i] == AND:
            return math.prod(vals)
        return 1.0 - math.prod(1.0 - v for v in vals)

    return ev(ft.top)


def has_implication(ft: FaultTree) -> bool:
    """Whether the top value is only an upper bound (an implication edge is on a path)."""
    return any(e.kind == IMPLICATION for e in ft.edges)


def eval_exact(ft: FaultTree, leaf_probs: Optional[Mapping[str, float]] = None) -> float:
    """Top-event probability under independent leaves.

    Small trees and trees with shared events are evaluated by enumerating
    the basic-event states; otherwise gate formulas are applied bottom-up.
    When ``has_implication(ft)`` the value is an upper bound.
    """
    _check(ft)
    probs = _resolve_probs(ft, leaf_probs)
    basics = list(probs)
    if len(basics) <= ENUMERATION_LIMIT:
        states = _all_states(len(basics))
        top = _bool_eval(ft, basics, states)
        rows = states[top]
        p = np.array([probs[b] for b in basics])
        weights = np.where(rows, p, 1.0 - p).prod(axis=1)
        return math.fsum(weights.tolist())
    if _shared(ft):
        raise FaultTreeError(f"{len(basics)} basic events with shared subtrees exceed the "
                             f"enumeration limit of {ENUMERATION_LIMIT}")
    return _bottom_up(ft, probs)


def is_coherent(ft: FaultTree) -> bool:
    """Whether the top event is monotone in the basic events."""
    _check(ft)
    basics = ft.basic_events()
    if len(basics) > ENUMERATION_LIMIT:
        return not any(n.complement_of for n in ft.leaves())
    states = _all_states(len(basics))
    top = _bool_eval(ft, basics, states)
    idx = np.arange(len(states))
    for j in range(len(basics)):
        off = idx[~states[:, j]]
        if np.any(top[off] & ~top[off | (1 << j)]):
            return False
    return True


@dataclass(frozen=True)
class RareEventApprox:
    probability: float
    error_bound: float
    reliable: bool
    upper_bound: bool = False


def eval_rare_approx(ft: FaultTree, leaf_probs: Optional[Mapping[str, float]] = None) -> RareEventApprox:
    """First-order approximation keeping only single-failure terms.

    ``probability = P(top | nothing fails) + sum_i p_i * (P(top | only i fails) - P(top | nothing fails))``.
    The error bound is ``sum_{i<j} p_i p_j`` for coherent trees and three
    times that otherwise.  The approximation is flagged unreliable when the
    bound exceeds 10% of it.
    """
    _check(ft)
    probs = _resolve_probs(ft, leaf_probs)
    basics = list(probs)
    n = len(basics)
    states = np.zeros((n + 1, n), dtype=bool)
    states[np.arange(1, n + 1), np.arange(n)] = True
    top = _bool_eval(ft, basics, states).astype(float)
    base = float(top[0])
    approx = base + math.fsum(probs[b] * (float(top[j + 1]) - base) for j, b in enumerate(basics))
    p = [probs[b] for b in basics]
    pairs = math.fsum(p[i] * p[j] for i in range(n) for j in range(i + 1, n))
    bound = pairs if is_coherent(ft) else 3.0 * pairs
    reliable = bound <= RELIABLE_FRACTION * abs(approx) if approx else bound == 0.0
    return RareEventApprox(approx, bound, bool(reliable), has_implication(ft))


@dataclass(frozen=True)
class FtReport:
    exact: float
    approx: float
    error_bound: float
    reliable: bool
    upper_bound: bool

    def as_dict(self) -> dict:
        return {
            "exact": self.exact,
            "rare_event_approx": self.approx,
            "error_bound": self.error_bound,
            "approx_reliable": self.reliable,
            "relation": "<=" if self.upper_bound else "=",
        }

    def as_text(self) -> str:
        rel = "<=" if self.upper_bound else "="
        return (f"P(top) {rel} {self.exact:.6g}\n"
                f"rare-event approx {rel} {self.approx:.6g} (error bound {self.error_bound:.3g}"
                f"{'' if self.reliable else ', UNRELIABLE'})\n")


def evaluate(ft: FaultTree, leaf_probs: Optional[Mapping[str, float]] = None) -> FtReport:
    exact = eval_exact(ft, leaf_probs)
    ra = eval_rare_approx(ft, leaf_probs)
    return FtReport(exact, ra.probability, ra.error_bound, ra.reliable, ra.upper_bound)


def speed_eta_equiv(eta_a_max: float) -> float:
    """Speed underestimate equivalent to reducing the required braking by ``eta_a_max``.

    ``a_req`` is quadratic in speed, so ``(1 - eta_s)^2 = 1 - eta_a``.
    """
    if not 0.0 <= eta_a_max < 1.0:
        raise ValueError(f"eta_a_max must lie in [0, 1), got {eta_a_max}")
    return 1.0 - math.sqrt(1.0 - eta_a_max)


HAZ_FN = "Hazardous-tracking-FNs"
SAFE_FN = "Safe-tracking-FNs"
NOM_SPEED = "Nominal-speed-estimate"
OFF_SPEED = "Off-nominal-speed-estimate"


def build_hbb_tree(eta_a_max: float, severity_patterns=None, n_max: int = 150,
                   p_haz: Optional[float] = None, p_off: Optional[float] = None) -> FaultTree:
    """Hazardous braking behavior as three disjoint cases of two input failures.

    ``severity_patterns`` (a ``SeverityPatternTable``) supplies the hazardous
    tracking-FN pattern; it should be computed with ``a_req`` reduced by
    ``eta_a_max``.  Without it, only the pattern horizon is recorded.
    """
    if not 0.0 < eta_a_max < 1.0:
        raise ValueError(f"eta_a_max must lie in (0, 1), got {eta_a_max}")
    eta_s = speed_eta_equiv(eta_a_max)
    if severity_patterns is not None:
        haz = severity_patterns.p_s0_3
        safe = severity_patterns.p_nocrash
    else:
        haz = safe = None
    haz_ref = str(haz) if haz is not None else f"count(k_contact,{n_max},{n_max})"
    safe_ref = str(safe) if safe is not None else f"count(0,k_contact-1,{n_max})"
    nodes = (
        PatternEvent("HBB", "hazardous braking behavior (UBI or UIB)"),
        PatternEvent("UBI-and-not-UIB", "hazardous UBI under nominal braking reduction"),
        PatternEvent("UIB-and-not-UBI", "off-nominal braking reduction with safe UBI"),
        PatternEvent("UBI-and-UIB", "both inputs beyond their thresholds", tags=(MULTI_FAILURE_TAG,)),
        PatternEvent(HAZ_FN, "tracking FN pattern causing contact", haz_ref, p_haz),
        PatternEvent(SAFE_FN, "tracking FN pattern too short for contact", safe_ref,
                     complement_of=HAZ_FN),
        PatternEvent(NOM_SPEED, f"speed underestimate <= {eta_s:.6g}", f"magnitude(<={eta_s:.6g})",
                     complement_of=OFF_SPEED),
        PatternEvent(OFF_SPEED, f"speed underestimate > {eta_s:.6g}", f"magnitude(>{eta_s:.6g})", p_off),
    )
    edges = (
        Edge("UBI-and-not-UIB", "HBB"),
        Edge("UIB-and-not-UBI", "HBB"),
        Edge("UBI-and-UIB", "HBB"),
        Edge(HAZ_FN, "UBI-and-not-UIB"),
        Edge(NOM_SPEED, "UBI-and-not-UIB"),
        Edge(SAFE_FN, "UIB-and-not-UBI"),
        Edge(OFF_SPEED, "UIB-and-not-UBI"),
        Edge(HAZ_FN, "UBI-and-UIB"),
        Edge(OFF_SPEED, "UBI-and-UIB"),
    )
    gates = {"HBB": OR, "UBI-and-not-UIB": AND, "UIB-and-not-UBI": AND, "UBI-and-UIB": AND}
    return FaultTree(nodes, edges, gates, "HBB")


def build_causal_chain(ubi: CountPattern, tracker: CountPattern, detector: CountPattern,
                       p_detector: Optional[float] = None, label: str = "S0..3") -> FaultTree:
    """Three-node chain: detector FNs imply tracker FNs, which cause the UBI pattern."""
    nodes = (
        PatternEvent(f"UBI {label}", "braking interruption pattern", str(ubi)),
        PatternEvent(f"tracker-FN {label}", "FN pattern at the tracker output", str(tracker)),
        PatternEvent(f"detector-FN {label}", "FN pattern at the detector output", str(detector),
                     p_detector),
    )
    edges = (
        Edge(nodes[1].id, nodes[0].id, CAUSAL_IDENTITY),
        Edge(nodes[2].id, nodes[1].id, IMPLICATION),
    )
    return FaultTree(nodes, edges, {}, nodes[0].id)
