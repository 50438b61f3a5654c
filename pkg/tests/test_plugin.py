import sys
import textwrap

import numpy as np
import pytest

from rgbabench import (
    InputError,
    PluginConfig,
    PluginError,
    RgbImage,
    mse,
    plugin_score,
    run_plugin,
    save_rgb,
)
from tests.conftest import random_rgb

MSE_PLUGIN = """
import sys
import cv2
import numpy as np

with open(sys.argv[-1]) as fh:
    for line in fh:
        idx, gt, pred = line.split()
        a = cv2.imread(gt).astype(np.float64) / 255.0
        b = cv2.imread(pred).astype(np.float64) / 255.0
        print(idx, np.mean((a - b) ** 2))
"""

CONSTANT_PLUGIN = """
import sys

with open(sys.argv[-1]) as fh:
    for line in fh:
        print(line.split()[0], 0.5)
"""


def write_plugin(tmp_path, body, name="plugin.py"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return (sys.executable, str(path))


def write_pair(tmp_path, rng, stem):
    gt = tmp_path / ("%s_gt.png" % stem)
    pred = tmp_path / ("%s_pred.png" % stem)
    save_rgb(random_rgb(rng, 8, 8), str(gt))
    save_rgb(random_rgb(rng, 8, 8), str(pred))
    return str(gt), str(pred)


def test_constant_plugin(tmp_path, rng):
    cmd = write_plugin(tmp_path, CONSTANT_PLUGIN)
    pairs = [write_pair(tmp_path, rng, "a"), write_pair(tmp_path, rng, "b")]
    assert run_plugin(cmd, pairs) == [0.5, 0.5]


def test_plugin_score_matches_internal_mse(tmp_path, rng):
    cmd = write_plugin(tmp_path, MSE_PLUGIN)
    quant = np.round(rng.random((3, 8, 8)) * 255) / 255
    a = RgbImage(quant)
    b = RgbImage(np.round(rng.random((3, 8, 8)) * 255) / 255)
    assert abs(plugin_score(cmd, a, b) - mse(a, b)) < 1e-6


def test_plugin_three_pairs_indices_preserved(tmp_path, rng):
    body = """
    import sys
    with open(sys.argv[-1]) as fh:
        lines = fh.readlines()
    for line in reversed(lines):
        print(line.split()[0], float(line.split()[0]) * 10)
    """
    cmd = write_plugin(tmp_path, body)
    pairs = [write_pair(tmp_path, rng, "p%d" % i) for i in range(3)]
    assert run_plugin(cmd, pairs) == [0.0, 10.0, 20.0]


def test_plugin_nonzero_exit_carries_stderr(tmp_path, rng):
    body = """
    import sys
    print("broken input", file=sys.stderr)
    sys.exit(7)
    """
    cmd = write_plugin(tmp_path, body)
    with pytest.raises(PluginError) as err:
        run_plugin(cmd, [write_pair(tmp_path, rng, "a")])
    assert "code 7" in str(err.value)
    assert "broken input" in err.value.stderr


def test_plugin_missing_index(tmp_path, rng):
    body = """
    import sys
    with open(sys.argv[-1]) as fh:
        lines = fh.readlines()
    for line in lines[:-1]:
        print(line.split()[0], 0.0)
    """
    cmd = write_plugin(tmp_path, body)
    pairs = [write_pair(tmp_path, rng, "p%d" % i) for i in range(2)]
    with pytest.raises(PluginError, match="missing"):
        run_plugin(cmd, pairs)


def test_plugin_unparsable_output(tmp_path, rng):
    cmd = write_plugin(tmp_path, "print('zero point five')")
    with pytest.raises(PluginError, match="unparsable"):
        run_plugin(cmd, [write_pair(tmp_path, rng, "a")])


def test_plugin_timeout(tmp_path, rng):
    body = """
    import time
    time.sleep(30)
    """
    cmd = write_plugin(tmp_path, body)
    with pytest.raises(PluginError, match="timed out"):
        run_plugin(cmd, [write_pair(tmp_path, rng, "a")], timeout=0.5)


def test_plugin_launch_failure(tmp_path, rng):
    with pytest.raises(PluginError, match="launch"):
        run_plugin(("/nonexistent/scorer",),
                   [write_pair(tmp_path, rng, "a")])


def test_plugin_string_command_is_split(tmp_path, rng):
    path = tmp_path / "plugin.py"
    path.write_text(textwrap.dedent(CONSTANT_PLUGIN))
    cmd = "%s %s" % (sys.executable, path)
    assert run_plugin(cmd, [write_pair(tmp_path, rng, "a")]) == [0.5]


def test_plugin_requires_pairs(tmp_path):
    cmd = write_plugin(tmp_path, CONSTANT_PLUGIN)
    with pytest.raises(InputError):
        run_plugin(cmd, [])


def test_plugin_config_validation():
    cfg = PluginConfig("lpips", ("scorer",))
    assert cfg.descriptor().direction == "lower-better"
    assert cfg.descriptor().kind == "pairwise"
    with pytest.raises(InputError):
        PluginConfig("x", ("scorer",), direction="sideways")
    with pytest.raises(InputError):
        PluginConfig("x", ())
