"""Process trees and their parenthesized text form, e.g. ``SEQ(a,XOR(b,tau))``."""

from __future__ import annotations

import re
from dataclasses import dataclass

SEQ, XOR, AND, LOOP = "SEQ", "XOR", "AND", "LOOP"
OPERATORS = (SEQ, XOR, AND, LOOP)
TAU = "tau"

_LABEL_RE = re.compile(r"[^(),\s]+")


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class ProcessTree:
    """A leaf (``label`` set), a silent leaf (nothing set) or an operator node."""

    operator: str | None = None
    children: tuple["ProcessTree", ...] = ()
    label: str | None = None

    def __post_init__(self) -> None:
        if self.operator is None:
            if self.children:
                raise TreeError("leaves cannot have children")
            return
        if self.label is not None:
            raise TreeError("operator nodes carry no label")
        if self.operator not in OPERATORS:
            raise TreeError(f"unknown operator {self.operator!r}")
        if self.operator == LOOP and len(self.children) != 2:
            raise TreeError("LOOP needs exactly a do and a redo child")
        if not self.children:
            raise TreeError(f"{self.operator} needs at least one child")

    @classmethod
    def leaf(cls, label: str) -> "ProcessTree":
        if not label or not _LABEL_RE.fullmatch(label) or label == TAU:
            raise TreeError(f"invalid activity label {label!r}")
        return cls(label=label)

    @classmethod
    def tau(cls) -> "ProcessTree":
        return cls()

    @classmethod
    def op(cls, operator: str, *children: "ProcessTree") -> "ProcessTree":
        return cls(operator=operator, children=tuple(children))

    @property
    def is_leaf(self) -> bool:
        return self.operator is None

    @property
    def is_silent(self) -> bool:
        return self.operator is None and self.label is None

    def depth(self) -> int:
        if self.is_leaf:
            return 1
        return 1 + max(c.depth() for c in self.children)

    def activities(self) -> set[str]:
        if self.is_leaf:
            return set() if self.label is None else {self.label}
        return set().union(*(c.activities() for c in self.children))

    def __str__(self) -> str:
        if self.is_leaf:
            return TAU if self.label is None else self.label
        return f"{self.operator}({','.join(str(c) for c in self.children)})"


def parse_tree(text: str) -> ProcessTree:
    pos = 0
    s = text.replace(" ", "")

    def node() -> ProcessTree:
        nonlocal pos
        m = _LABEL_RE.match(s, pos)
        if not m:
            raise TreeError(f"expected a node at offset {pos} in {text!r}")
        word = m.group(0)
        pos = m.end()
        if pos < len(s) and s[pos] == "(":
            if word not in OPERATORS:
                raise TreeError(f"unknown operator {word!r}")
            pos += 1
            kids = [node()]
            while s[pos] == ",":
                pos += 1
                kids.append(node())
            if s[pos] != ")":
                raise TreeError(f"expected ')' at offset {pos}")
            pos += 1
            return ProcessTree.op(word, *kids)
        return ProcessTree.tau() if word == TAU else ProcessTree.leaf(word)

    try:
        tree = node()
    except IndexError as exc:
        raise TreeError(f"unexpected end of input in {text!r}") from exc
    if pos != len(s):
        raise TreeError(f"trailing input at offset {pos} in {text!r}")
    return tree
