"""Recursive-descent parser for the numbered-list output format used in generation.

Grammar (one construct per line, blank lines ignored)::

    document  := preamble? (block+ | items)
    block     := header items
    header    := "PERSPECTIVE" INT ":" NAME
    items     := item+          (numbers consecutive from 1)
    item      := INT ("." | ")") TEXT

Free text is tolerated only before the first structural line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_HEADER = re.compile(r"^\s*\**\s*PERSPECTIVE\s+(\d+)\s*:\s*(.*?)\s*\**\s*$", re.IGNORECASE)
_ITEM = re.compile(r"^\s*(\d+)\s*[.)]\s+(.*\S)\s*$")


class ListParseError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        super().__init__(message if lineno is None else f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Block:
    number: int
    name: str
    items: tuple[str, ...]


class _Parser:
    def __init__(self, text: str):
        self.lines = [(i + 1, line) for i, line in enumerate(text.splitlines()) if line.strip()]
        self.pos = 0

    def peek(self):
        return self.lines[self.pos] if self.pos < len(self.lines) else None

    def skip_preamble(self) -> None:
        while (cur := self.peek()) is not None and not (_HEADER.match(cur[1]) or _ITEM.match(cur[1])):
            self.pos += 1

    def items(self) -> list[str]:
        out: list[str] = []
        while (cur := self.peek()) is not None:
            m = _ITEM.match(cur[1])
            if not m:
                break
            if int(m.group(1)) != len(out) + 1:
                raise ListParseError(f"expected item {len(out) + 1}, found {m.group(1)}", cur[0])
            out.append(m.group(2).strip())
            self.pos += 1
        if not out:
            lineno = cur[0] if cur else None
            raise ListParseError("expected a numbered item", lineno)
        return out

    def block(self, expected: int) -> Block:
        cur = self.peek()
        m = _HEADER.match(cur[1]) if cur else None
        if not m:
            raise ListParseError(f"expected 'PERSPECTIVE {expected}:' header", cur[0] if cur else None)
        if int(m.group(1)) != expected:
            raise ListParseError(f"expected perspective {expected}, found {m.group(1)}", cur[0])
        self.pos += 1
        return Block(expected, m.group(2).strip(), tuple(self.items()))

    def end(self) -> None:
        cur = self.peek()
        if cur is not None:
            raise ListParseError(f"unexpected line {cur[1].strip()[:60]!r}", cur[0])


def parse_items(text: str) -> list[str]:
    p = _Parser(text)
    p.skip_preamble()
    out = p.items()
    p.end()
    return out


def parse_blocks(text: str) -> list[Block]:
    p = _Parser(text)
    p.skip_preamble()
    blocks = []
    while p.peek() is not None:
        blocks.append(p.block(len(blocks) + 1))
    if not blocks:
        raise ListParseError("no PERSPECTIVE blocks found")
    return blocks
