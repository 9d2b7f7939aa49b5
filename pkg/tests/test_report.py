import json

import numpy as np

from ri1d.report import dumps


def test_dumps_is_deterministic_and_exact():
    obj = {"b": np.float64(0.1), "a": [1, np.int64(2), np.inf, -np.inf, np.nan, True, None], "c": (1.0 / 3.0,)}
    text = dumps(obj)
    assert text == dumps(dict(reversed(list(obj.items()))))
    back = json.loads(text)
    assert list(back) == ["a", "b", "c"]
    assert back["a"][2:5] == ["inf", "-inf", "nan"]
    assert back["c"][0] == 1.0 / 3.0
    assert "0.10000000000000001" in text
