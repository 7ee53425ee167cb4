import json
from dataclasses import replace

import pytest

from trajlab.errors import ConfigError
from trajlab.guidance import Masked, Mixed, MultiStage, ProFusion, Switching
from trajlab.sweep import (
    DerivedParam,
    SweepGrid,
    build_strategies,
    grid_from_dict,
    grid_to_dict,
    load_grid,
    point_seed,
    preset_grid,
    preset_grids,
    run_sweep,
)


def _small(grid, n=8, steps=10):
    return replace(grid, n_samples=n, steps=steps)


def test_preset_names():
    assert set(preset_grids()) == {"mixed-7", "switching-8", "multistage-3x3", "masked-4", "profusion-9"}
    with pytest.raises(ConfigError):
        preset_grid("mixed-8")


def test_mixed_preset_values():
    strategies = build_strategies(preset_grid("mixed-7"))
    assert [s.omega_s for s in strategies] == [0.0, 0.875, 1.75, 2.625, 3.5, 4.375, 5.25, 6.125, 7.0]
    assert all(s.omega_c + s.omega_s == 7.0 for s in strategies)
    assert all(isinstance(s, Mixed) for s in strategies)


def test_switching_preset_values():
    strategies = build_strategies(preset_grid("switching-8"))
    assert strategies == [Switching(7.0, t) for t in (1, 3, 5, 7, 10, 20, 30, 40)]


def test_multistage_preset_values():
    strategies = build_strategies(preset_grid("multistage-3x3"))
    assert strategies == [MultiStage(7.0 - s, s, t) for t in (3, 10, 20) for s in (1.0, 3.0, 5.0)]


def test_masked_preset_values():
    strategies = build_strategies(preset_grid("masked-4"))
    assert strategies == [Masked(3.5, 3.5, 3, q) for q in (0.3, 0.5, 0.7, 0.9)]


def test_profusion_preset_values():
    strategies = build_strategies(preset_grid("profusion-9"))
    r = (0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.7, 1.0)
    assert strategies == [ProFusion(3.5, 3.5, x) for x in r]


@pytest.mark.parametrize("name, count, per_step", [
    ("mixed-7", 9, 3), ("switching-8", 8, 2), ("profusion-9", 9, 5), ("multistage-3x3", 9, 3), ("masked-4", 4, 3),
])
def test_record_counts_and_costs(name, count, per_step):
    grid = _small(preset_grid(name), n=4, steps=50)
    records = run_sweep(grid, threads=1)
    assert len(records) == count
    assert [r.index for r in records] == list(range(count))
    assert all(r.calls_per_sample == per_step * 50 for r in records)


def test_sweep_deterministic_and_parallel_matches_serial():
    grid = _small(preset_grid("mixed-7"))
    serial = run_sweep(grid, threads=1)
    again = run_sweep(grid, threads=1)
    parallel = run_sweep(grid, threads=4)
    key = lambda recs: [(r.strategy, r.metrics, r.seed) for r in recs]
    assert key(serial) == key(again) == key(parallel)


def test_thread_env_cap(monkeypatch):
    monkeypatch.setenv("TRAJLAB_THREADS", "1")
    grid = _small(preset_grid("switching-8"), n=2, steps=50)
    assert len(run_sweep(grid, threads=8)) == 8
    monkeypatch.setenv("TRAJLAB_THREADS", "many")
    with pytest.raises(ConfigError):
        run_sweep(grid)


def test_point_seeds_distinct_and_stable():
    seeds = [point_seed(0, k) for k in range(100)]
    assert len(set(seeds)) == 100
    assert point_seed(0, 3) == point_seed(0, 3)
    assert point_seed(1, 3) != point_seed(0, 3)


def test_invalid_point_named_before_running():
    grid = SweepGrid("switching", {"t_sw": [5, 99]}, fixed={"omega_c": 7.0}, steps=50)
    with pytest.raises(ConfigError, match="grid point 1"):
        run_sweep(grid)


def test_grid_validation():
    with pytest.raises(ConfigError):
        SweepGrid("mixed", {})
    with pytest.raises(ConfigError):
        SweepGrid("mixed", {"omega_s": []})
    with pytest.raises(ConfigError):
        SweepGrid("mixed", {"omega_s": [1.0]}, derived={"omega_c": DerivedParam(7.0, "omega_x")})


def test_grid_document_round_trip(tmp_path):
    grid = preset_grid("multistage-3x3")
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(grid_to_dict(grid)))
    assert load_grid(path) == grid


@pytest.mark.parametrize("doc, match", [
    ({"version": 1, "strategy": "mixed", "axes": {"omega_s": [1]}, "extra": 1}, "unknown keys"),
    ({"version": 2, "strategy": "mixed", "axes": {"omega_s": [1]}}, "version"),
    ({"version": 1, "axes": {"omega_s": [1]}}, "missing keys"),
    ({"version": 1, "strategy": "mixed", "axes": {"omega_s": [1]}, "derived": {"omega_c": {"total": 7}}}, "derived"),
    ({"version": 1, "strategy": "mixed", "axes": {"omega_s": [1]}, "schedule": {"steps": 3}}, "schedule"),
])
def test_grid_document_strict(doc, match):
    with pytest.raises(ConfigError, match=match):
        grid_from_dict(doc)


def test_malformed_grid_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "version": 1,\n  "strategy": "mixed"\n  "axes": {}\n}\n')
    with pytest.raises(ConfigError, match="line 4"):
        load_grid(path)
