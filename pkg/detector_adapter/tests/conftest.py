import pytest

from detector_adapter.testing import WHITE, draw_rects


@pytest.fixture
def draw_scene(tmp_path):
    def _draw(name, rects, size=(512, 512), background=WHITE):
        return draw_rects(tmp_path / name, size, rects, background)
    return _draw
