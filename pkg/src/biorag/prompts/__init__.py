"""Prompt templates for the five agent steps and their renderer.

Templates live next to this module as ``p1.txt`` .. ``p5.txt``.  Slots are
written ``{Name}``; rendering is a single pass, so slot values that happen to
contain braces are inserted verbatim.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Mapping

from ..errors import MissingSlot

_SLOT = re.compile(r"\{([A-Za-z]+)\}")

NO_EVIDENCE_MARKER = "(no evidence retrieved)"


class PromptId(str, Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"
    P5 = "P5"


@dataclass(frozen=True)
class PromptTemplate:
    id: PromptId
    template_text: str

    @property
    def slots(self) -> tuple[str, ...]:
        seen: list[str] = []
        for name in _SLOT.findall(self.template_text):
            if name not in seen:
                seen.append(name)
        return tuple(seen)


@lru_cache(maxsize=None)
def load_template(pid: PromptId | str) -> PromptTemplate:
    pid = PromptId(pid)
    text = resources.files("biorag").joinpath(f"prompts/{pid.value.lower()}.txt").read_text("utf-8")
    return PromptTemplate(pid, text)


def render_prompt(template: PromptTemplate, slots: Mapping[str, str]) -> str:
    for name in template.slots:
        if name not in slots:
            raise MissingSlot(name)
    return _SLOT.sub(lambda m: str(slots[m.group(1)]), template.template_text)
