import math
import random
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stepforge.analytics import (
    REFERENCE_RUN,
    InsufficientData,
    cpu_per_proof,
    cpu_per_proof_by_problem,
    length_histogram,
    loglinear_fit,
    mode_length_means,
    pass_at_n,
    summary_table,
    to_csv,
)
from stepforge.iterate import ProofRecord, ProofStore
from stepforge.ledger import LedgerEntry


def entry(pid="s", T=1.0, valid=False, pass_index=0, mode="bf", round_index=0, direction="proof", length=2):
    proof = ("t",) * length if valid else None
    return LedgerEntry(
        pid if direction == "proof" else pid + ".neg", pid, direction, round_index, pass_index, mode, valid,
        proof, 1, T, T, 1, "proof" if valid else "budget_K", 1, 1, 8, 10, 0,
    )


# ------------------------------------------------------------------ cpu per proof


def test_cpu_per_proof_examples():
    es = [entry(T=30), entry(T=50, valid=True), entry(T=20, valid=True)]
    assert cpu_per_proof(es) == 50.0
    assert cpu_per_proof([entry(T=7, valid=True)]) == 7.0
    assert cpu_per_proof([entry(T=3), entry(T=4)]) is None
    with pytest.raises(ValueError):
        cpu_per_proof([])


def test_cpu_by_problem_skips_unsolved():
    es = [entry("a", 10, True), entry("a", 30), entry("b", 5), entry("c", 4, True, direction="disproof")]
    assert cpu_per_proof_by_problem(es) == {"a": 40.0, "c": 4.0}


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 10_000), st.booleans()), min_size=1, max_size=20), st.integers(2, 4))
def test_cpu_per_proof_invariant_under_duplication(rows, k):
    es = [entry(T=t, valid=v) for t, v in rows]
    a = cpu_per_proof(es)
    b = cpu_per_proof(es * k)
    if a is None:
        assert b is None
    else:
        assert b == pytest.approx(a, rel=1e-12)


# ---------------------------------------------------------------------- lengths


def _store(*records):
    return ProofStore(records)


def test_length_histogram():
    store = _store(ProofRecord("a", "proof", ("t",) * 2, 0, history=[2]),
                   ProofRecord("b", "proof", ("t",) * 2, 0, history=[2]),
                   ProofRecord("c", "disproof", ("t",) * 5, 0, history=[5]))
    assert length_histogram(store) == {2: 2, 5: 1}
    assert length_histogram(_store(ProofRecord("x", "proof", ("t",) * 3, 1, history=[6, 3]))) == {3: 1}
    assert length_histogram(ProofStore()) == {}


# -------------------------------------------------------------------------- fit


def test_exact_line_fit():
    fit = loglinear_fit({1: math.e**6, 2: math.e**5, 3: math.e**4})
    assert fit.slope == pytest.approx(-1.0, abs=1e-9)
    assert fit.intercept == pytest.approx(7.0, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-9)
    assert fit.n_points == 3


def test_two_points_fit_perfectly():
    fit = loglinear_fit({2: 40, 7: 3})
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_insufficient_data():
    with pytest.raises(InsufficientData):
        loglinear_fit({3: 10})
    with pytest.raises(InsufficientData):
        loglinear_fit({1: 10, 2: 0})
    with pytest.raises(InsufficientData):
        loglinear_fit({1: 10, 2: 1, 3: 1}, min_count=5)


def test_rounded_synthetic_histogram_matches_polyfit():
    hist = {L: round(math.exp(8 - 0.7 * L)) for L in range(1, 11)}
    fit = loglinear_fit(hist)
    ref = np.polyfit(list(hist), np.log(list(hist.values())), 1)
    assert fit.slope == pytest.approx(ref[0], abs=1e-9)
    assert fit.intercept == pytest.approx(ref[1], abs=1e-9)
    assert abs(fit.slope + 0.7) <= 0.05


@settings(max_examples=100)
@given(st.floats(-3, 3), st.floats(-5, 10), st.lists(st.integers(0, 30), min_size=2, max_size=12, unique=True))
def test_fit_exact_on_lines(slope, intercept, xs):
    hist = {x: math.exp(intercept + slope * x) for x in xs}
    fit = loglinear_fit(hist, min_count=0)
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.intercept == pytest.approx(intercept, abs=1e-8)
    assert -1e-12 <= fit.r_squared <= 1 + 1e-12


# ----------------------------------------------------------------------- pass@N


def test_pass_at_prefix_rule():
    es = [entry("s", valid=(i == 2), pass_index=i) for i in range(4)]
    assert pass_at_n(es, [1, 2, 3, 4]) == {1: 0.0, 2: 0.0, 3: 1.0, 4: 1.0}


def test_pass_at_all_unsolved_and_empty():
    es = [entry(f"s{k}", pass_index=i) for k in range(3) for i in range(2)]
    assert pass_at_n(es, [1, 2]) == {1: 0.0, 2: 0.0}
    assert pass_at_n([], [1, 8]) == {1: 0.0, 8: 0.0}


def test_pass_at_orders_proof_before_disproof():
    es = [entry("s", valid=True, pass_index=0, direction="disproof"), entry("s", pass_index=0), entry("s", pass_index=1)]
    random.Random(0).shuffle(es)
    assert pass_at_n(es, [1, 2, 3]) == {1: 0.0, 2: 0.0, 3: 1.0}


def test_pass_at_warns_when_truncating():
    with pytest.warns(UserWarning, match="fewer than 4"):
        pass_at_n([entry("s", pass_index=0)], [1, 4])


def _direct_scan(entries, n):
    by = {}
    for e in entries:
        by.setdefault(e.problem_id, []).append(e)
    hits = 0
    for es in by.values():
        es.sort(key=lambda e: (e.round_index, e.direction != "proof", e.pass_index))
        hits += any(e.valid for e in es[:n])
    return hits / len(by)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 7), st.booleans()), min_size=1, max_size=40))
def test_pass_at_monotone_and_matches_scan(rows):
    es = [entry(f"s{p}", valid=v, pass_index=i) for p, i, v in rows]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = pass_at_n(es, [1, 2, 4, 8])
    vals = [res[n] for n in (1, 2, 4, 8)]
    assert vals == sorted(vals)
    for n in (1, 2, 4, 8):
        assert res[n] == _direct_scan(es, n)


# ---------------------------------------------------------------------- summary


def test_summary_shares():
    es = [entry("a", 10, True), entry("b", 90)]
    store = _store(ProofRecord("a", "proof", ("t", "t"), 0, history=[2]))
    rows = {r.label: r for r in summary_table(es, store)}
    assert rows["solved"].cpu_percent == pytest.approx(10.0)
    assert rows["unsolved"].cpu_percent == pytest.approx(90.0)
    assert rows["proved"].count == 1 and rows["proved"].percent == 50.0
    assert rows["unsolved"].cpu_days == pytest.approx(90 / 86400)


def test_summary_empty():
    rows = summary_table([], ProofStore())
    assert [r.label for r in rows] == ["proved", "disproved", "solved", "unsolved"]
    assert all(r.count == 0 and r.percent == 0.0 and r.cpu_percent == 0.0 for r in rows)


def test_summary_uses_dataset_size():
    rows = {r.label: r for r in summary_table([entry("a", 1, True)], _store(ProofRecord("a", "proof", ("t",), 0)), 4)}
    assert rows["solved"].percent == 25.0 and rows["unsolved"].count == 3


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 6), st.floats(0, 1e4), st.booleans()), max_size=40))
def test_accounting_conservation(rows):
    es = [entry(f"s{p}", t, v) for p, t, v in rows]
    store = ProofStore()
    for e in es:
        if e.valid:
            store.offer(e.problem_id, "proof", e.proof, 0)
    table = {r.label: r for r in summary_table(es, store)}
    total = sum(e.cpu_seconds for e in es) / 86400
    split = table["solved"].cpu_days + table["unsolved"].cpu_days
    assert split == pytest.approx(total, rel=1e-9, abs=1e-15)
    assert table["proved"].cpu_days + table["disproved"].cpu_days == pytest.approx(table["solved"].cpu_days, rel=1e-12)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 100), st.booleans(), st.integers(0, 3)), max_size=40),
       st.integers(1, 5))
def test_streaming_matches_batch(rows, n_chunks):
    # a ledger never repeats (problem, round, direction, pass), so keep those keys unique
    keyed = {(p, i): (t, v) for p, t, v, i in rows}
    es = [entry(f"s{p}", t, v, pass_index=i) for (p, i), (t, v) in keyed.items()]
    store = ProofStore()
    for e in es:
        if e.valid:
            store.offer(e.problem_id, "proof", e.proof, 0)
    chunks = [es[i::n_chunks] for i in range(n_chunks)]
    batch = {r.label: r.cpu_days for r in summary_table(es, store)}
    streamed = dict.fromkeys(batch, 0.0)
    for chunk in chunks:
        for r in summary_table(chunk, store):
            streamed[r.label] += r.cpu_days
    assert streamed == pytest.approx(batch, rel=1e-12, abs=1e-15)
    # order of arrival does not matter either
    merged = [e for chunk in chunks for e in chunk]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert pass_at_n(merged, [1, 2, 4]) == pass_at_n(es, [1, 2, 4])
    assert cpu_per_proof_by_problem(merged) == pytest.approx(cpu_per_proof_by_problem(es), rel=1e-12)


# ---------------------------------------------------------------- mode means


def test_mode_length_means():
    es = [entry("a", valid=True, length=2), entry("b", valid=True, length=2),
          entry("a", valid=True, mode="cg", length=4), entry("b", valid=True, mode="cg", length=6),
          entry("b", valid=True, mode="cg", length=9)]
    assert mode_length_means(es) == (2.0, 5.0)
    assert mode_length_means(es[:2]) == (2.0, None)
    assert mode_length_means([]) == (None, None)


def test_reference_constants_and_csv():
    assert REFERENCE_RUN["bf_mean_length"] == 1.66 and REFERENCE_RUN["cg_mean_length"] == 4.44
    assert to_csv([(1, 2.5)], ["a", "b"]) == "a,b\n1,2.5\n"
