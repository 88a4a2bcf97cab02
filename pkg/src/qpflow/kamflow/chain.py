"""Conjugation chains: ordered fiber translations and near-identity maps.

A chain element maps NEW coordinates to OLD coordinates on the fiber:
``theta_old = theta_new + h(...)``.  A chain [E_1, ..., E_m] transports the
deepest (most reduced) coordinates all the way back to the original system,
``to_old(x) = E_1(E_2(... E_m(x)))``; this matches the orientation in which
the chain conjugates the original flow to the reduced flow.  Elementary maps
are stored unflattened: translations invert exactly by negation, and
near-identity maps invert by a certified fixed point.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import StripOverflowError
from ..spectral import PhiFunction, TorusFunction, invert_near_identity

NEAR_IDENTITY_BUDGET = 0.25


class FiberTranslation:
    """theta_old = theta_new + h(phi)."""

    kind = "fiber_translation"

    def __init__(self, h):
        self.h = PhiFunction.from_torus(h) if not isinstance(h, PhiFunction) else h

    def to_old(self, theta, phi):
        return theta + self.h.evaluate(theta, phi).real

    def to_new(self, theta, phi):
        return theta - self.h.evaluate(theta, phi).real

    def shift_norm(self):
        return self.h.norm()

    def d_theta_norm(self):
        return 0.0

    def inverse_shift(self):
        return self.h * -1.0

    def to_json_dict(self):
        return {"type": self.kind, "h": self.h.to_json_dict()}


class NearIdentity:
    """theta_old = theta_new + h(theta_new, phi), invertible on its strip.

    Requires the shift and its fiber derivative to stay below 1/4 in
    majorant norm, which makes the inversion fixed point a contraction.
    """

    kind = "near_identity"

    def __init__(self, h, check_budget=True):
        self.h = h
        self._inv = None
        if check_budget:
            hn = h.norm()
            dn = h.derive_theta().norm()
            if hn >= NEAR_IDENTITY_BUDGET or dn >= NEAR_IDENTITY_BUDGET:
                raise StripOverflowError(
                    f"near-identity budget exceeded: N(h)={hn:.3e}, N(dh)={dn:.3e}"
                )

    def to_old(self, theta, phi):
        return theta + self.h.evaluate(theta, phi).real

    def inverse_shift(self):
        if self._inv is None:
            self._inv = invert_near_identity(self.h)
        return self._inv

    def to_new(self, theta, phi):
        inv = self.inverse_shift()
        return theta + inv.evaluate(theta, phi).real

    def shift_norm(self):
        return self.h.norm()

    def d_theta_norm(self):
        return self.h.derive_theta().norm()

    def to_json_dict(self):
        return {"type": self.kind, "h": self.h.to_json_dict()}


def element_from_json(data):
    h = TorusFunction.from_json_dict(data["h"], validate=False)
    if data["type"] == FiberTranslation.kind:
        return FiberTranslation(h)
    if data["type"] == NearIdentity.kind:
        return NearIdentity(h, check_budget=False)
    raise ValueError(f"unknown chain element type {data['type']!r}")


class ConjugationChain:
    """Ordered conjugation elements, deepest level last."""

    def __init__(self, elements=()):
        self.elements = list(elements)

    def append(self, element):
        self.elements.append(element)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def to_old(self, theta, phi):
        """Map reduced coordinates (deepest level) to original coordinates."""
        theta = np.asarray(theta, dtype=float)
        for element in reversed(self.elements):
            theta = element.to_old(theta, phi)
        return theta

    def to_new(self, theta, phi):
        for element in self.elements:
            theta = element.to_new(theta, phi)
        return theta

    def cumulative_shift_norm(self):
        return sum(e.shift_norm() for e in self.elements)

    def derivative_product_bound(self):
        """prod (1 + N(d h_j / d theta)) over near-identity elements."""
        prod = 1.0
        for e in self.elements:
            prod *= 1.0 + e.d_theta_norm()
        return prod

    def to_json_dict(self):
        return {"elements": [e.to_json_dict() for e in self.elements]}

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def from_json_dict(cls, data):
        return cls([element_from_json(e) for e in data["elements"]])

    @classmethod
    def load_json(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))
