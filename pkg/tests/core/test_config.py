"""
Unit tests for experiment settings: TOML, environment and override layering.
"""

from pathlib import Path

import pytest
from pydantic import ValidationError

from csmooth.core import config
from csmooth.core.config import DEFAULT_SCHEDULE, RefineSettings, Settings, load_settings
from tests.utils.config import DESK_CONFIG, write_config


class TestDefaults:
    """Tests for default values."""

    def test_published_protocol_defaults(self) -> None:
        s = Settings()
        assert s.kernel.family == "matern"
        assert s.kernel.nu == 2.5
        assert s.kernel.lengthscale == 0.4
        assert s.kernel.jitter is False
        assert s.sampler.N == 200
        assert s.sampler.tau == 0.05
        assert s.sweep.replicates == 20
        assert s.sweep.N_ref == 1000
        assert s.refine.Nmax == 250
        assert s.output.record_wall_time is False

    def test_strategies_default_to_refine_kind(self) -> None:
        s = Settings(refine={"kind": "equispaced"})  # type: ignore[arg-type]
        assert s.strategies == ["equispaced"]

    def test_constraint_set(self) -> None:
        cs = Settings(constraints={"monotone": "decreasing", "bounds": None}).constraints.to_constraint_set()  # type: ignore[arg-type]
        assert cs.bounds is None
        assert cs.monotone == "decreasing"


class TestRecordedSchedule:
    """Tests for RefineSettings.recorded."""

    def test_default_schedule(self) -> None:
        assert RefineSettings().recorded() == DEFAULT_SCHEDULE

    def test_clipped_to_budget(self) -> None:
        """Entries outside [N0, Nmax] are dropped and Nmax is always recorded."""
        assert RefineSettings(N0=3, Nmax=11).recorded() == [3, 5, 8, 10, 11]


class TestValidation:
    """Tests for invalid configurations."""

    def test_nmax_below_n0(self) -> None:
        with pytest.raises(ValidationError):
            RefineSettings(N0=10, Nmax=5)

    def test_rejection_needs_interval(self) -> None:
        with pytest.raises(ValidationError):
            RefineSettings(kind="rejection_interval")

    def test_unknown_strategy(self) -> None:
        with pytest.raises(ValidationError):
            Settings(refine={"kind": "bisection"})  # type: ignore[arg-type]

    def test_no_constraint(self) -> None:
        with pytest.raises(ValidationError):
            Settings(constraints={"bounds": None, "monotone": None})  # type: ignore[arg-type]

    def test_inverted_bounds(self) -> None:
        with pytest.raises(ValidationError):
            Settings(constraints={"bounds": {"lower": 1.0, "upper": 0.0}})  # type: ignore[arg-type]

    @pytest.mark.parametrize(
        "interval",
        [[[0.1, 0.3], [0.6, 1.0]], [[0.0, 0.3], [0.6, 0.9]], [[0.0, 0.7], [0.6, 1.2]]],
    )
    def test_bad_interval(self, interval: list[list[float]]) -> None:
        with pytest.raises(ValidationError):
            Settings(refine={"interval": interval})  # type: ignore[arg-type]

    def test_negative_seed(self) -> None:
        with pytest.raises(ValidationError):
            Settings(sampler={"seed": -1})  # type: ignore[arg-type]


class TestLoadSettings:
    """Tests for load_settings layering."""

    def test_reads_toml(self, tmp_path: Path) -> None:
        path = write_config(tmp_path / "desk.toml", DESK_CONFIG)
        s = load_settings(path)
        assert s.sampler.N == 40
        assert s.refine.max_candidates == 6
        assert s.constraints.monotone == "increasing"
        assert s.kernel.jitter is True

    def test_overrides_merge_into_sections(self, tmp_path: Path) -> None:
        """An override replaces one key and keeps the rest of its TOML section."""
        path = write_config(tmp_path / "desk.toml", DESK_CONFIG)
        s = load_settings(path, sampler={"seed": 99})
        assert s.sampler.seed == 99
        assert s.sampler.N == 40

    def test_environment_beats_toml(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        path = write_config(tmp_path / "desk.toml", DESK_CONFIG)
        monkeypatch.setenv("CSMOOTH_SWEEP__REPLICATES", "7")
        assert load_settings(path).sweep.replicates == 7

    def test_overrides_beat_environment(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("CSMOOTH_SAMPLER__SEED", "5")
        assert load_settings(sampler={"seed": 6}).sampler.seed == 6

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(FileNotFoundError):
            load_settings(tmp_path / "absent.toml")

    def test_invalid_file(self, tmp_path: Path) -> None:
        path = write_config(tmp_path / "bad.toml", {"sampler": {"tau": -1.0}})
        with pytest.raises(ValidationError):
            load_settings(path)

    def test_result_is_plain_settings(self, tmp_path: Path) -> None:
        path = write_config(tmp_path / "desk.toml", DESK_CONFIG)
        assert type(load_settings(path)) is Settings

    def test_environment_is_read_only_on_load(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """A bad CSMOOTH_* variable fails load_settings, not the import of the module."""
        assert not hasattr(config, "settings")
        monkeypatch.setenv("CSMOOTH_SAMPLER__TAU", "-1")
        with pytest.raises(ValidationError):
            load_settings()
