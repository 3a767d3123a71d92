import pickle

import numpy as np
import pytest

from lead import so3
from lead.diffusion import CdrState
from lead.evaluators import (KYTE_DOOLITTLE, Component, Evaluator, EvaluatorError,
                             HydropathyEvaluator, QuadraticEvaluator, WeightedEvaluator,
                             WeightedObjective, calibrate_normalizers, hydropathy,
                             hydropathy_reward, synthetic_quadratic_reward, weighted_reward)

# Kyte & Doolittle (1982), keyed by three-letter code, transcribed separately
THREE_LETTER = {
    "Ile": 4.5, "Val": 4.2, "Leu": 3.8, "Phe": 2.8, "Cys": 2.5, "Met": 1.9, "Ala": 1.8,
    "Gly": -0.4, "Thr": -0.7, "Ser": -0.8, "Trp": -0.9, "Tyr": -1.3, "Pro": -1.6,
    "His": -3.2, "Glu": -3.5, "Gln": -3.5, "Asp": -3.5, "Asn": -3.5, "Lys": -3.9, "Arg": -4.5,
}
ONE = {"Ile": "I", "Val": "V", "Leu": "L", "Phe": "F", "Cys": "C", "Met": "M", "Ala": "A",
       "Gly": "G", "Thr": "T", "Ser": "S", "Trp": "W", "Tyr": "Y", "Pro": "P", "His": "H",
       "Glu": "E", "Gln": "Q", "Asp": "D", "Asn": "N", "Lys": "K", "Arg": "R"}


def test_scale_matches_independent_table():
    assert {ONE[k]: v for k, v in THREE_LETTER.items()} == KYTE_DOOLITTLE


def test_hydropathy_is_mean():
    a = CdrState.from_sequence("IKR")
    assert hydropathy(a) == pytest.approx((4.5 - 3.9 - 4.5) / 3)
    assert hydropathy_reward(a) == -hydropathy(a)
    assert hydropathy(CdrState.from_sequence("IIII")) == pytest.approx(4.5)


def test_hydropathy_evaluator_counts():
    f = HydropathyEvaluator()
    a = CdrState.from_sequence("ACD")
    for _ in range(5):
        f(a)
    assert f.query_counter == 5 and f.name == "hydro"


def test_quadratic_reward():
    target = CdrState.from_sequence("ACDE", coords=np.ones((4, 3)))
    assert synthetic_quadratic_reward(target, target) == 0.0
    moved = target.copy()
    moved.coords[2] += (1.0, 0.0, 0.0)
    assert synthetic_quadratic_reward(moved, target) == pytest.approx(-1.0)
    prev = 0.0
    for r in (0.5, 1.0, 2.0):
        moved.coords[2] = target.coords[2] + (r, 0.0, 0.0)
        cur = synthetic_quadratic_reward(moved, target)
        assert cur < prev
        prev = cur


def test_quadratic_sequence_and_rotation_terms():
    target = CdrState.from_sequence("ACDE")
    other = CdrState.from_sequence("ACDF")
    assert synthetic_quadratic_reward(other, target, seq_weight=2.5) == pytest.approx(-2.5)
    turned = target.copy()
    turned.orients[0] = so3.from_rotvec(np.array([0.0, 0.0, 0.3]))
    assert synthetic_quadratic_reward(turned, target, rot_weight=2.0) == pytest.approx(-0.18)
    with pytest.raises(ValueError):
        synthetic_quadratic_reward(CdrState.from_sequence("AC"), target)


def test_weighted_reward_normalizes():
    a = CdrState.from_sequence("IIDD")
    obj = WeightedObjective([Component(HydropathyEvaluator(), 0.25, shift=1.0, scale=2.0),
                             Component(QuadraticEvaluator(a), 0.75)])
    assert weighted_reward(obj, a) == pytest.approx(0.25 * (-0.5 - 1.0) / 2.0)


def test_weighted_evaluator_single_query():
    a = CdrState.from_sequence("AC")
    f = WeightedEvaluator(WeightedObjective([Component(HydropathyEvaluator(), 1.0)]))
    f(a)
    assert f.query_counter == 1


def test_component_failure_is_wrapped():
    class Broken(Evaluator):
        name = "broken"

        def _score(self, a):
            raise RuntimeError("boom")

    obj = WeightedObjective([Component(Broken(), 1.0)])
    with pytest.raises(EvaluatorError, match="broken"):
        weighted_reward(obj, CdrState.from_sequence("A"))


def test_scale_must_be_positive():
    with pytest.raises(ValueError):
        Component(HydropathyEvaluator(), 1.0, scale=0.0)


def test_with_weights():
    obj = WeightedObjective([Component(HydropathyEvaluator(), 1.0),
                             Component(HydropathyEvaluator(), 0.0)])
    assert [c.weight for c in obj.with_weights([0.3, 0.7]).components] == [0.3, 0.7]
    with pytest.raises(ValueError):
        obj.with_weights([1.0])


class _Column(Evaluator):
    """Reads a precomputed value stored in the first coordinate."""

    def __init__(self, name):
        super().__init__()
        self.name = name

    def _score(self, a):
        return float(a.coords[0, 0])


def test_calibration_standard_normal(rng):
    samples = [CdrState.from_sequence("A", coords=[[v, 0.0, 0.0]])
               for v in rng.standard_normal(20_000)]
    obj = calibrate_normalizers(WeightedObjective([Component(_Column("c"), 1.0)]), samples)
    c = obj.components[0]
    assert abs(c.shift) < 4 / np.sqrt(20_000)
    assert c.scale == pytest.approx(1.0, abs=0.03)


def test_calibration_constant_component():
    samples = [CdrState.from_sequence("A")] * 3
    obj = calibrate_normalizers(WeightedObjective([Component(_Column("c"), 1.0)]), samples)
    assert obj.components[0].scale == 1e-8
    with pytest.raises(ValueError):
        calibrate_normalizers(obj, samples[:1])


def test_evaluator_pickles_with_counter():
    f = HydropathyEvaluator()
    f(CdrState.from_sequence("A"))
    g = pickle.loads(pickle.dumps(f))
    assert g.query_counter == 1
    g(CdrState.from_sequence("A"))
    assert g.query_counter == 2
