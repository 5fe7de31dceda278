from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from sddefeller.convergence import (
    FiniteInstance,
    InstanceError,
    UnsupportedInstanceError,
    all_topologies,
    check_modes,
    cond2_by_functions,
    equivalence_oracle,
    example_law_not_pointwise,
    example_pointwise_not_law,
    outer_measure,
    random_family,
)

HALF = Fraction(1, 2)
DISCRETE2 = (((0, 1), (1, 0)),)


def four_point(atoms=((0, 1), (2, 3))):
    q = Fraction(1, 4)
    return FiniteInstance(weights=(q, q, q, q), atoms=atoms, m=1, X=(0, 0, 0, 0), tail=(0, 0, 0, 0),
                          metrics=(((0,),),))


class TestOuterMeasure:
    def test_examples(self):
        inst = four_point()
        assert outer_measure(inst, (0,)) == HALF
        assert outer_measure(inst, (0, 2)) == 1
        assert outer_measure(inst, (2, 3)) == HALF
        assert outer_measure(inst, ()) == 0

    def test_equals_measure_on_events(self):
        inst = four_point(atoms=((0,), (1,), (2,), (3,)))
        assert outer_measure(inst, (1, 3)) == HALF

    @given(st.sets(st.integers(0, 3)), st.sets(st.integers(0, 3)))
    def test_monotone(self, a, b):
        inst = four_point()
        assert outer_measure(inst, tuple(a)) <= outer_measure(inst, tuple(a | b))


class TestVerdicts:
    def test_pointwise_not_law(self):
        v = check_modes(example_pointwise_not_law())
        assert v.triple == (True, False, False) and v.form_1a == "open"
        assert v.witness_2[2] == 1

    def test_law_not_pointwise(self):
        v = check_modes(example_law_not_pointwise())
        assert v.triple == (False, True, False) and v.form_1a == "metric"
        assert v.witness_2[2] == 1
        assert v.equivalence_holds

    def test_constant_sequence(self):
        inst = FiniteInstance(weights=(HALF, HALF), atoms=((0,), (1,)), m=2, X=(0, 1), tail=(0, 1),
                              metrics=DISCRETE2)
        v = check_modes(inst)
        assert v.triple == (True, True, True) and v.cond_1a_open

    def test_prefix_ignored(self):
        inst = FiniteInstance(weights=(HALF, HALF), atoms=((0,), (1,)), m=2, X=(0, 1), tail=(0, 1),
                              prefix=((1, 0), (1, 1)), metrics=DISCRETE2)
        assert check_modes(inst).triple == (True, True, True)
        assert inst.term(0) == (1, 0) and inst.term(5) == (0, 1)

    def test_no_tail(self):
        inst = FiniteInstance(weights=(1,), atoms=((0,),), m=2, X=(0,), tail=None, prefix=((1,),),
                              metrics=DISCRETE2)
        with pytest.raises(UnsupportedInstanceError):
            check_modes(inst)
        with pytest.raises(UnsupportedInstanceError):
            cond2_by_functions(inst)
        with pytest.raises(UnsupportedInstanceError):
            inst.term(3)

    @settings(max_examples=40)
    @given(st.integers(0, 10**6))
    def test_cond2_matches_function_enumeration(self, seed):
        for inst in random_family(5, seed):
            assert cond2_by_functions(inst)[0] == check_modes(inst).cond_2


class TestValidation:
    def test_weights(self):
        with pytest.raises(InstanceError):
            FiniteInstance(weights=(HALF, Fraction(1, 3)), atoms=((0, 1),), m=1, X=(0, 0), tail=(0, 0),
                           metrics=(((0,),),))

    def test_atoms(self):
        with pytest.raises(InstanceError):
            FiniteInstance(weights=(HALF, HALF), atoms=((0, 1), (1,)), m=1, X=(0, 0), tail=(0, 0),
                           metrics=(((0,),),))

    def test_measurability(self):
        # X separates two points that F cannot tell apart
        with pytest.raises(InstanceError, match="measurable"):
            FiniteInstance(weights=(HALF, HALF), atoms=((0, 1),), m=2, X=(0, 1), tail=(0, 0), metrics=DISCRETE2)

    def test_topology_and_metric(self):
        with pytest.raises(InstanceError):
            FiniteInstance(weights=(1,), atoms=((0,),), m=2, X=(0,), tail=(0,), opens=((0,), (0, 1)))
        with pytest.raises(InstanceError):
            FiniteInstance(weights=(1,), atoms=((0,),), m=2, X=(0,), tail=(0,), metrics=(((0, 1), (2, 0)),))
        with pytest.raises(InstanceError):
            FiniteInstance(weights=(1,), atoms=((0,),), m=2, X=(0,), tail=(0,))


def test_topology_counts():
    assert [len(all_topologies(m)) for m in (1, 2, 3)] == [1, 4, 29]


def test_small_exhaustive_has_no_violations():
    rep = equivalence_oracle("exhaustive", max_omega=2, max_e=2, den=2, max_prefix=1)
    s = rep.summary()
    assert s["violations"] == 0 and s["checked"] > 0 and s["metric_open_mismatches"] == 0
    assert rep.to_csv().splitlines()[0].startswith("structure,")


def test_random_oracle_deterministic():
    a = equivalence_oracle("random", budget=300, seed=5)
    b = equivalence_oracle("random", budget=300, seed=5)
    assert a.to_csv() == b.to_csv() and a.instances == 300 and not a.violations


def test_custom_family_and_budget():
    rep = equivalence_oracle([example_pointwise_not_law(), example_law_not_pointwise()], budget=1)
    assert rep.instances == 1
    with pytest.raises(ValueError):
        equivalence_oracle("random", budget=0)
