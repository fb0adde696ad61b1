"""Rule and relation nodes, rulesets, and their canonical document form.

A ruleset is a rooted acyclic graph: atomic rules (one predicate on one
parameter) joined by AND/OR/NOT relations.  Nodes may be shared.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

RULE_OPS = ("lt", "le", "gt", "ge", "eq", "ne", "in", "not_in", "is_missing", "is_present")
NUMERIC_OPS = ("lt", "le", "gt", "ge")
CATEGORY_OPS = ("eq", "ne", "in", "not_in")
NO_OPERAND_OPS = ("is_missing", "is_present")
RELATION_OPS = ("and", "or", "not")


class RulesetError(ValueError):
    """Invalid ruleset structure or operator/kind mismatch."""

    def __init__(self, message: str, code: str = "invalid"):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class Rule:
    id: str
    parameter: str
    op: str
    operand: float | tuple[str, ...] | None = None

    def __post_init__(self):
        if self.op not in RULE_OPS:
            raise RulesetError(f"unknown rule operator {self.op!r}")
        if self.op in NUMERIC_OPS and not isinstance(self.operand, (int, float)):
            raise RulesetError(f"rule {self.id!r}: {self.op} needs a numeric operand")
        if self.op in CATEGORY_OPS:
            if not (isinstance(self.operand, tuple) and len(self.operand) >= 1):
                raise RulesetError(f"rule {self.id!r}: {self.op} needs a category set")
            if self.op in ("eq", "ne") and len(self.operand) != 1:
                raise RulesetError(f"rule {self.id!r}: {self.op} needs a single category")
        if self.op in NO_OPERAND_OPS and self.operand is not None:
            raise RulesetError(f"rule {self.id!r}: {self.op} takes no operand")


@dataclass(frozen=True)
class Relation:
    id: str
    op: str
    children: tuple[str, ...]

    def __post_init__(self):
        if self.op not in RELATION_OPS:
            raise RulesetError(f"unknown relation operator {self.op!r}")
        if self.op == "not" and len(self.children) != 1:
            raise RulesetError(f"relation {self.id!r}: not takes exactly one child")
        if self.op in ("and", "or") and len(self.children) < 2:
            raise RulesetError(f"relation {self.id!r}: {self.op} needs >= 2 children")


Node = Rule | Relation


@dataclass
class Ruleset:
    nodes: dict[str, Node]
    root: str
    id: int | None = None
    owner: str = ""
    name: str = ""
    is_final: bool = False
    created_at: str = ""

    def __post_init__(self):
        if self.root not in self.nodes:
            raise RulesetError(f"root node {self.root!r} does not exist")
        for nid, node in self.nodes.items():
            if nid != node.id:
                raise RulesetError(f"node key {nid!r} does not match node id {node.id!r}")
        self._check_acyclic_and_reachable()

    def _check_acyclic_and_reachable(self) -> None:
        state: dict[str, int] = {}  # 1 = on stack, 2 = done

        def visit(nid: str, stack: list[str]) -> None:
            if state.get(nid) == 2:
                return
            if state.get(nid) == 1:
                raise RulesetError(f"cycle through node {nid!r}")
            state[nid] = 1
            node = self.nodes.get(nid)
            if node is None:
                raise RulesetError(f"child {nid!r} does not exist")
            if isinstance(node, Relation):
                for c in node.children:
                    visit(c, stack)
            state[nid] = 2

        visit(self.root, [])
        unreachable = set(self.nodes) - set(state)
        if unreachable:
            raise RulesetError(f"unreachable nodes: {sorted(unreachable)}")

    @property
    def rules(self) -> list[Rule]:
        return [n for n in self.nodes.values() if isinstance(n, Rule)]

    @property
    def relations(self) -> list[Relation]:
        return [n for n in self.nodes.values() if isinstance(n, Relation)]

    def validate_against(self, dictionary) -> None:
        """Check operator/parameter-kind consistency against a dictionary."""
        for rule in self.rules:
            if rule.parameter not in dictionary:
                raise RulesetError(
                    f"rule {rule.id!r}: unknown parameter {rule.parameter!r}",
                    code="unknown_parameter",
                )
            param = dictionary[rule.parameter]
            if rule.op in NUMERIC_OPS and not param.is_numeric:
                raise RulesetError(
                    f"rule {rule.id!r}: {rule.op} on categorical parameter {param.id!r}",
                    code="kind_mismatch",
                )
            if rule.op in CATEGORY_OPS:
                if param.is_numeric:
                    raise RulesetError(
                        f"rule {rule.id!r}: {rule.op} on numeric parameter {param.id!r}",
                        code="kind_mismatch",
                    )
                bad = set(rule.operand) - set(param.categories)
                if bad:
                    raise RulesetError(
                        f"rule {rule.id!r}: {sorted(bad)[0]!r} not a category of {param.id!r}",
                        code="kind_mismatch",
                    )

    def with_meta(self, **kwargs) -> "Ruleset":
        return replace(self, **kwargs)


# ---------------------------------------------------------------------------
# Canonical structured document
# ---------------------------------------------------------------------------


def ruleset_to_doc(ruleset: Ruleset) -> dict:
    nodes = []
    for nid in sorted(ruleset.nodes):
        node = ruleset.nodes[nid]
        if isinstance(node, Rule):
            operand = node.operand
            if isinstance(operand, tuple):
                operand = list(operand)
            nodes.append(
                {"id": node.id, "op": node.op, "parameter": node.parameter,
                 "operand": operand, "children": []}
            )
        else:
            nodes.append(
                {"id": node.id, "op": node.op, "parameter": None,
                 "operand": None, "children": list(node.children)}
            )
    return {
        "id": ruleset.id,
        "owner": ruleset.owner,
        "name": ruleset.name,
        "is_final": ruleset.is_final,
        "created_at": ruleset.created_at,
        "root": ruleset.root,
        "nodes": nodes,
    }


def ruleset_from_doc(doc: dict) -> Ruleset:
    try:
        nodes: dict[str, Node] = {}
        for nd in doc["nodes"]:
            op = nd["op"]
            if op in RELATION_OPS:
                nodes[nd["id"]] = Relation(nd["id"], op, tuple(nd["children"]))
            else:
                operand = nd["operand"]
                if isinstance(operand, list):
                    operand = tuple(operand)
                nodes[nd["id"]] = Rule(nd["id"], nd["parameter"], op, operand)
        return Ruleset(
            nodes=nodes,
            root=doc["root"],
            id=doc.get("id"),
            owner=doc.get("owner", ""),
            name=doc.get("name", ""),
            is_final=bool(doc.get("is_final", False)),
            created_at=doc.get("created_at", ""),
        )
    except (KeyError, TypeError) as e:
        raise RulesetError(f"malformed ruleset document: {e}", code="malformed") from None
