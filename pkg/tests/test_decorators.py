import logging

import pytest

from src.utils.decorators import count_calls, log_timing


def test_count_calls_counts_and_resets():
    @count_calls
    def double(x):
        return 2 * x

    assert double(3) == 6
    assert double(4) == 8
    assert double.calls == 2
    double.reset()
    assert double.calls == 0


def test_count_calls_is_shared_across_instances():
    class Widget:
        @count_calls
        def run(self):
            return self

    a, b = Widget(), Widget()
    a.run()
    b.run()
    assert Widget.run.calls == 2


def test_log_timing_logs_duration(caplog):
    @log_timing("encode", level=logging.INFO)
    def work():
        return "done"

    with caplog.at_level(logging.INFO, logger="neuralmvs.utils"):
        assert work() == "done"
    assert "encode took" in caplog.text


def test_log_timing_logs_even_on_failure(caplog):
    @log_timing()
    def broken():
        raise ValueError("Persistent Failure")

    with caplog.at_level(logging.DEBUG, logger="neuralmvs.utils"):
        with pytest.raises(ValueError, match="Persistent Failure"):
            broken()
    assert "broken took" in caplog.text
