"""Acceptance suite: runs all twelve criteria once and prints one pass/fail line each."""

import pytest

from resonantwave.acceptance import CRITERIA, run_acceptance


@pytest.fixture(scope="module")
def results(request):
    capman = request.config.pluginmanager.getplugin("capturemanager")
    with capman.global_and_fixture_disabled():
        print("\nacceptance criteria (seed 0):")
        res = run_acceptance(seed=0, include_determinism=True, echo=lambda s: print("  " + s, flush=True))
    return {r.number: r for r in res}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(results, number):
    r = results[number]
    assert r.passed, f"{r.line()}\n{r.note}\n{r.metrics}"
