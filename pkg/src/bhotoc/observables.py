"""Single-site observables shared by the quantum and classical sides."""
from __future__ import annotations

import re
from dataclasses import dataclass

from . import _kernels as K

_CODES = {
    "number": K.OBS_N,
    "quadrature_q": K.OBS_Q,
    "quadrature_p": K.OBS_P,
    "p_squared": K.OBS_P2,
}
# classical kind -> operator kind accepted by model.build_observable
_QUANTUM_KIND = {
    "number": "number",
    "quadrature_q": "quadrature_q",
    "quadrature_p": "quadrature_p",
    "p_squared": "quadrature_p_squared",
}
_SHORT = re.compile(r"^\s*(n|q|p)(\d+)(\^2)?\s*$")


@dataclass(frozen=True)
class Observable:
    """``kind`` applied to ``site`` (1-based).

    Kinds: ``number``, ``quadrature_q``, ``quadrature_p``, ``p_squared``.
    """

    kind: str
    site: int

    def __post_init__(self):
        if self.kind not in _CODES:
            raise ValueError(f"unknown observable kind {self.kind!r}; expected one of {sorted(_CODES)}")
        if self.site < 1:
            raise ValueError(f"site is 1-based, got {self.site}")

    @classmethod
    def parse(cls, text: str) -> "Observable":
        """Parse the short forms ``n1``, ``q2``, ``p1`` and ``p1^2``."""
        if isinstance(text, Observable):
            return text
        m = _SHORT.match(text)
        if not m:
            raise ValueError(f"cannot parse observable {text!r} (use n<i>, q<i>, p<i> or p<i>^2)")
        letter, site, sq = m.groups()
        if sq and letter != "p":
            raise ValueError(f"only p<i>^2 is supported as a squared observable, got {text!r}")
        kind = {"n": "number", "q": "quadrature_q", "p": "quadrature_p"}[letter]
        if sq:
            kind = "p_squared"
        return cls(kind, int(site))

    def __str__(self):
        letter = {"number": "n", "quadrature_q": "q", "quadrature_p": "p", "p_squared": "p"}[self.kind]
        return f"{letter}{self.site}" + ("^2" if self.kind == "p_squared" else "")

    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def slot(self) -> int:
        return self.site - 1

    @property
    def quantum_kind(self) -> str:
        return _QUANTUM_KIND[self.kind]

    @property
    def conserves_number(self) -> bool:
        return self.kind == "number"

    def check_sites(self, L: int):
        if self.site > L:
            raise ValueError(f"observable {self} refers to site {self.site} but L={L}")
