import json

import pytest

from kmdp.model import build_model

# Single-epoch reference model: one start state, two actions, three outcomes
# each. Hand-verified values used across the suite:
#   a1: 0.6*11 + 0.3*1 + 0.1*(-1) = 6.8
#   a2: 0.3*12 + 0.3*2 + 0.4*0   = 4.2
#   auto crash: -max(1, 2) = -2
M1_DOC = {
    "horizon": {"m": 0, "n": 1},
    "states": [
        [{"id": "s0"}],
        [{"id": "x*", "killed": True}, {"id": "g", "r": 10.0}, {"id": "b", "r": 0.0}],
    ],
    "actions": [
        [
            {"id": "a1", "owner": "s0", "q": 1.0, "p": {"g": 0.6, "b": 0.3, "x*": 0.1}},
            {"id": "a2", "owner": "s0", "q": 2.0, "p": {"g": 0.3, "b": 0.3, "x*": 0.4}},
        ]
    ],
}

# Two-epoch model with two start states. Backward-sweep values, by hand:
#   stage-2 actions: c0 = 2.3, c1 = 1.3, d0 = 0.3
#   stage-1 values:  u -> 2.3 (c0), v -> 0.3 (d0)
#   stage-1 actions: a0 = 1.84, a1 = 0.74, b0 = 2.64
#   stage-0 values:  s0 -> 1.84 (a0), s1 -> 2.64 (b0); mixed start = 2.24
#   auto crash: k1 -> -2, k2 -> -3
M2_DOC = {
    "horizon": {"m": 0, "n": 2},
    "states": [
        [{"id": "s0"}, {"id": "s1"}],
        [{"id": "k1", "killed": True}, {"id": "u"}, {"id": "v"}],
        [{"id": "k2", "killed": True}, {"id": "w", "r": 4.0}, {"id": "z", "r": -1.0}],
    ],
    "actions": [
        [
            {"id": "a0", "owner": "s0", "q": 1.0, "p": {"u": 0.5, "v": 0.3, "k1": 0.2}},
            {"id": "a1", "owner": "s0", "q": 0.5, "p": {"u": 0.2, "v": 0.6, "k1": 0.2}},
            {"id": "b0", "owner": "s1", "q": 2.0, "p": {"u": 0.4, "v": 0.4, "k1": 0.2}},
        ],
        [
            {"id": "c0", "owner": "u", "q": 0.0, "p": {"w": 0.7, "z": 0.2, "k2": 0.1}},
            {"id": "c1", "owner": "u", "q": 1.0, "p": {"w": 0.3, "z": 0.6, "k2": 0.1}},
            {"id": "d0", "owner": "v", "q": -1.0, "p": {"w": 0.5, "z": 0.4, "k2": 0.1}},
        ],
    ],
    "mu": {"s0": 0.5, "s1": 0.5},
}


@pytest.fixture
def m1():
    return build_model(M1_DOC)


@pytest.fixture
def m2():
    return build_model(M2_DOC)


@pytest.fixture
def m1_path(tmp_path):
    path = tmp_path / "m1.json"
    path.write_text(json.dumps(M1_DOC))
    return path


@pytest.fixture
def m2_path(tmp_path):
    path = tmp_path / "m2.json"
    path.write_text(json.dumps(M2_DOC))
    return path
