import numpy as np
import pytest

from zrspring.checks import smooth_track


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def sine_track():
    """Smooth three-axis target, 30 fps, two seconds."""
    t = np.arange(61) / 30.0
    pos = np.stack(
        [np.sin(2 * np.pi * 0.5 * t), 0.5 * np.cos(2 * np.pi * 1.0 * t), 0.3 * np.sin(2 * np.pi * 0.8 * t + 1)],
        axis=-1,
    )
    from zrspring.kinematics import SampleTrack

    return SampleTrack(pos, 1 / 30)


@pytest.fixture
def make_smooth():
    def make(seed, n_frames=40, dt=1 / 30, batch=()):
        return smooth_track(np.random.default_rng(seed), n_frames, dt, batch=batch)

    return make


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_lines(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
