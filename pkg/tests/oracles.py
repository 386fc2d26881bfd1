"""Independent reference implementations the validators are checked against.

These deliberately avoid the production code paths: Han classification goes
through the regex engine's Unicode tables per code point, and the page-graph
oracle enumerates simple paths instead of running BFS/DFS bookkeeping.
"""

from __future__ import annotations

from typing import Sequence

import regex

from storybites.domain import InteractionType, Page

_HAN_POINT = regex.compile(r"\p{Han}")


def han_count_oracle(text: str) -> int:
    """Per-code-point classification against the live Unicode tables."""
    return sum(1 for ch in text if _HAN_POINT.match(ch))


def _targets(page: Page) -> list[str]:
    out: list[str] = []
    for bc in page.branch_choices:
        if bc.next_page_id not in out:
            out.append(bc.next_page_id)
    if page.next_page_id is not None and page.next_page_id not in out:
        out.append(page.next_page_id)
    return out


def graph_oracle_codes(pages: Sequence[Page]) -> set[str]:
    """Codes among {FinalPageNotTerminal, UnreachablePage, CycleDetected,
    BranchMergeTooFar} found by brute-force path enumeration."""
    by_id = {p.page_id: p for p in pages}
    codes: set[str] = set()

    # Enumerate every simple path from the root; collect reachability and
    # whether any edge closes back onto the current path (a cycle).
    reachable: set[str] = set()
    saw_cycle = False
    stack: list[tuple[str, frozenset[str]]] = [
        (pages[0].page_id, frozenset({pages[0].page_id}))]
    seen_states: set[tuple[str, frozenset[str]]] = set()
    while stack:
        node, on_path = stack.pop()
        reachable.add(node)
        for target in _targets(by_id[node]):
            if target not in by_id:
                continue
            if target in on_path:
                saw_cycle = True
                continue
            state = (target, on_path | {target})
            if state not in seen_states:
                seen_states.add(state)
                stack.append(state)

    null_pages = [p.page_id for p in pages if p.next_page_id is None]
    last = pages[-1]
    terminal_ok = (len(null_pages) == 1 and null_pages[0] == last.page_id
                   and last.page_id in reachable)
    if not terminal_ok:
        codes.add("FinalPageNotTerminal")

    if any(p.page_id not in reachable for p in pages):
        codes.add("UnreachablePage")

    if saw_cycle:
        codes.add("CycleDetected")

    for p in pages:
        itype = p.interaction.type if p.interaction else InteractionType.NONE
        if itype is not InteractionType.CHOICE or len(p.branch_choices) != 2:
            continue
        a, b = (bc.next_page_id for bc in p.branch_choices)
        if a not in by_id or b not in by_id:
            continue
        if not (_hop_set(a, by_id) & _hop_set(b, by_id)):
            codes.add("BranchMergeTooFar")
    return codes


def _hop_set(start: str, by_id: dict[str, Page]) -> set[str]:
    """All nodes on some path of at most 2 edges from start, by enumeration."""
    nodes = {start}
    for first in _targets(by_id[start]):
        if first not in by_id:
            continue
        nodes.add(first)
        for second in _targets(by_id[first]):
            if second in by_id:
                nodes.add(second)
    return nodes
