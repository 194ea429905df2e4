import csv

import numpy as np
import pytest
from scipy.sparse.linalg import LinearOperator

import core.selftest as selftest
from core.fields import GridSpec
from core.operators import LinearOperatorHandle, dense_operator
from core.selftest import adjoint_mismatch, run_selftest


def test_adjoint_mismatch_flags_wrong_transpose(rng):
    A = rng.standard_normal((4, 4))
    assert adjoint_mismatch(dense_operator(A), pairs=10) <= 1e-12

    wrong = LinearOperator((4, 4), matvec=lambda x: A @ x, rmatvec=lambda y: A @ y, dtype=np.float64)
    T = LinearOperatorHandle(GridSpec((4,)), "dense-matrix", wrong)
    assert adjoint_mismatch(T, pairs=10) > 1e-3


@pytest.mark.parametrize("check", [
    selftest._check_gradient_examples,
    selftest._check_adjoints,
    selftest._check_identities,
    selftest._check_norms,
    selftest._check_siddon_lengths,
    selftest._check_oracle,
    selftest._check_mdp,
    selftest._check_monotone,
])
def test_quick_checks_pass(check):
    passed, detail = check()
    assert passed, detail


def test_runner_records_failures_and_exceptions(monkeypatch, tmp_path):
    def broken():
        raise ValueError("boom")

    monkeypatch.setattr(selftest, "CHECKS", [
        ("fine", lambda: (True, "ok")),
        ("wrong", lambda: (False, "off by one")),
        ("broken", broken),
    ])
    progress = []
    results = run_selftest(tmp_path, progress_callback=lambda c, t: progress.append((c, t)))
    assert [(r.check, r.passed) for r in results] == [("fine", True), ("wrong", False), ("broken", False)]
    assert "ValueError: boom" in results[2].detail
    assert progress[-1] == (3, 3)

    with open(tmp_path / "selftest.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["passed"] for r in rows] == ["pass", "fail", "fail"]


@pytest.mark.slow
def test_full_suite_passes():
    results = run_selftest()
    failed = [f"{r.check}: {r.detail}" for r in results if not r.passed]
    assert not failed, failed
