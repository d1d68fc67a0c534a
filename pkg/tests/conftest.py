import time

import pytest

from macromicro import experiments as ex
from macromicro import plant as pm
from macromicro.controllers import Architecture
from macromicro.synthesis import WeightSpec

ACCEPTANCE_LINES: list[str] = []


class TunedGains:
    """Synthesized/tuned gains for the X axis, computed once per session with wall times."""

    def __init__(self):
        self.plant = pm.default_plant("X")
        self.weights = WeightSpec()
        self._cache = {}

    def _get(self, kind):
        if kind not in self._cache:
            t0 = time.perf_counter()
            if kind is Architecture.LEADER_FOLLOWER:
                val = ex.tuned_lf(self.plant)
            else:
                val = ex.synthesized(self.plant, kind, self.weights, 0)
            self._cache[kind] = (val, time.perf_counter() - t0)
        return self._cache[kind]

    def result(self, kind):
        return self._get(kind)[0]

    def seconds(self, kind):
        return self._get(kind)[1]

    def experiment(self, kind, **overrides):
        """Experiment run with the session gains; returns ``(result, seconds)``."""
        key = (kind, tuple(sorted(overrides.items())))
        if key not in self._cache:
            g = self.gains()
            spec = ex.ExperimentSpec(kind, overrides=overrides)
            t0 = time.perf_counter()
            res = ex.run_experiment(spec, ex.Config(self.plant, self.weights), gains=g)
            self._cache[key] = (res, time.perf_counter() - t0)
        return self._cache[key]

    def gains(self):
        out = {}
        for k in ex.ALL_ARCHITECTURES:
            v = self.result(k)
            out[k] = v if k is Architecture.LEADER_FOLLOWER else v.gains
        return out


@pytest.fixture(scope="session")
def tuned():
    return TunedGains()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
