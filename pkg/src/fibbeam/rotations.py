"""Intrinsic z-y-x rotations shared by panels and poses."""

from __future__ import annotations

import math

import numpy as np


def rotation_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """``R = Rz(alpha) @ Ry(beta) @ Rx(gamma)``; maps local coordinates to the parent frame."""
    for a in (alpha, beta, gamma):
        if not math.isfinite(a):
            raise ValueError("rotation angles must be finite")
    ca, sa = math.cos(alpha), math.sin(alpha)
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    rz = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cg, -sg], [0.0, sg, cg]])
    return rz @ ry @ rx
