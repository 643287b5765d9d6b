import numpy as np
import pytest

from qgarch.core import DomainError, NumericalError
from qgarch.montecarlo import replicate, summarize, worker_count


def _square(seed):
    return seed * seed


def _flaky(seed):
    if seed % 2:
        raise NumericalError("odd seed")
    return seed


def test_replicate_seeds_and_order():
    out = replicate(_square, 5, seed=10, workers=1)
    assert [r.seed for r in out] == [10, 11, 12, 13, 14]
    assert [r.result for r in out] == [100, 121, 144, 169, 196]


def test_replicate_parallel_matches_serial(monkeypatch):
    monkeypatch.delenv("QGARCH_THREADS", raising=False)
    serial = replicate(_square, 6, seed=3, workers=1)
    par = replicate(_square, 6, seed=3, workers=2)
    assert [r.result for r in serial] == [r.result for r in par]


def test_replicate_records_failures():
    out = replicate(_flaky, 4, workers=1)
    assert [r.ok for r in out] == [True, False, True, False]
    assert "odd seed" in out[1].error


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("QGARCH_THREADS", "1")
    assert worker_count(8) == 1
    monkeypatch.setenv("QGARCH_THREADS", "x")
    with pytest.raises(DomainError):
        worker_count()


def test_summarize():
    est = np.array([[1.0, 2.0, 0.5], [3.0, 2.0, 0.7]])
    se = np.array([[0.1, 0.2, np.nan], [0.3, 0.2, 0.1]])
    rows = summarize(est, se, [1.0, 2.5, 0.6])
    assert rows[0].bias == 1.0 and rows[1].bias == -0.5
    assert rows[0].esd == pytest.approx(np.sqrt(2.0))
    assert rows[2].asd == pytest.approx(0.1)
    with pytest.raises(DomainError):
        summarize(est[:1], se[:1], [0, 0, 0])
