import json

import pytest

from mbvoc.bench import SCHEMA, BenchReport, run_bench
from mbvoc.errors import BenchContractError
from mbvoc.wavernn import MbWaveRnnConfig, MbWaveRnnParams

CFG = MbWaveRnnConfig(16, 16, 4, 2000)


@pytest.fixture(scope="module")
def params():
    return MbWaveRnnParams.random(CFG, 0)


def test_report_fields(params, backend):
    r = run_bench(params, 500, "int8", backend=backend, repeats=2)
    assert (r.steps, r.audio_seconds, r.backend, r.arithmetic) == (500, 1.0, backend, "int8")
    assert r.rtf == pytest.approx(r.wall_seconds / r.audio_seconds)
    assert r.samples_per_second == pytest.approx(2000 / r.wall_seconds)
    d = json.loads(json.dumps(r.to_json(), default=str))
    assert d["schema"] == SCHEMA and d["config"]["num_bands"] == 4


def test_audio_seconds_counts_fullband_samples(params):
    assert run_bench(params, 1000).audio_seconds == 2.0


@pytest.mark.parametrize("kwargs", [{"threads": 0}, {"threads": 4}, {"steps": 499}, {"repeats": 0}])
def test_contract_violations(params, kwargs):
    args = {"steps": 500} | kwargs
    with pytest.raises(BenchContractError):
        run_bench(params, **args)


def test_report_rejects_nonpositive_durations():
    with pytest.raises(BenchContractError):
        BenchReport(CFG, "float", "numpy", 1, 0.0, 1.0, 0.0, 0.0)
