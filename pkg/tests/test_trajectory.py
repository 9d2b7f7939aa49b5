import io

import numpy as np
import pytest

from ri1d.errors import ConfigError
from ri1d.trajectory import (JumpRecord, Trajectory, load_trajectory, read_trajectory_csv,
                             trajectory_to_csv)


def test_csv_round_trip(dw_local, tmp_path):
    text = trajectory_to_csv(dw_local)
    path = tmp_path / "t.csv"
    path.write_text(text)
    back = load_trajectory(str(path))
    assert np.array_equal(back.times, dw_local.times)
    assert np.array_equal(back.values, dw_local.values)
    assert back.regimes == dw_local.regimes
    assert len(back.jumps) == 1
    assert back.jumps[0].left == dw_local.jumps[0].left
    assert back.jumps[0].right == dw_local.jumps[0].right
    assert trajectory_to_csv(back) == text


def test_reader_errors():
    with pytest.raises(ConfigError):
        read_trajectory_csv(io.StringIO(""))
    with pytest.raises(ConfigError):
        read_trajectory_csv(io.StringIO("a,b\n1,2\n"))
    with pytest.raises(ConfigError, match="3"):
        read_trajectory_csv(io.StringIO("t,x\n0,0\nzero,1\n"))
    with pytest.raises(ConfigError):
        read_trajectory_csv(io.StringIO("t,x\n1,0\n0,1\n"))


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], [0.0])
    with pytest.raises(ValueError):
        Trajectory([1.0, 0.0], [0.0, 0.0])
    assert JumpRecord(0.5, 1.0, -0.5).size == 1.5
