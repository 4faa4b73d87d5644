import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rltok import NormalizationParams, TubeletConfig

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


# filled in by the acceptance tests via the `note` fixture, printed by the
# terminal-summary hook below so every criterion gets one visible verdict line
ACCEPTANCE_NOTES: dict = {}


@pytest.fixture
def note(request):
    def _note(text: str) -> None:
        ACCEPTANCE_NOTES[request.node.name] = text

    return _note


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = {}
    for outcome, verdict in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(outcome, []):
            name = rep.nodeid.rsplit("::", 1)[-1]
            if not name.startswith("test_criterion_"):
                continue
            if outcome == "passed" and getattr(rep, "when", "call") != "call":
                continue
            rows.setdefault(name, verdict)
    if not rows:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(rows):
        label = name.removeprefix("test_criterion_").replace("_", " ")
        detail = ACCEPTANCE_NOTES.get(name)
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"criterion {label}: {rows[name]}{suffix}")


@pytest.fixture
def small_config() -> TubeletConfig:
    return TubeletConfig(patch_x=4, patch_y=4, tubelet_t=2, embed_dim=32)


@pytest.fixture
def identity_norm() -> NormalizationParams:
    return NormalizationParams.identity(3)


def random_video_array(seed: int, c: int = 3, t: int = 8, h: int = 16, w: int = 16) -> np.ndarray:
    return np.random.default_rng(seed).random((c, t, h, w), dtype=np.float32)
