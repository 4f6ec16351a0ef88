"""Smoke test for the dapnet_py extension.

Build it with `cargo build -p dapnet-python --release` and put
`libdapnet_py.so` on the path as `dapnet_py.so`.
"""

import math
import os
import sys
import tempfile

here = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, here)

import dapnet_py as dp


def main():
    a = dp.BBox(0, 0, 10, 10)
    b = dp.BBox(5, 0, 10, 10)
    assert abs(dp.iou(a, b) - 1 / 3) < 1e-12
    assert dp.center_distance(dp.BBox(0, 0, 2, 2), dp.BBox(3, 4, 2, 2)) == 5.0
    s = dp.state_to_box(50, 40, 1, 20, 10)
    assert math.isclose(s.w, 21.0) and s.center() == (50.0, 40.0)

    assert len(dp.wrs_select([1.0, 2.0, 3.0, 4.0], 0.5, 3)) == 2
    assert dp.precision_rate([0, 3, 10, 30], 5) == 0.5
    assert dp.success_rate([1, 1, 0, 0]) == 10 / 21

    seq = dp.Sequence.synthetic("demo", frames=8, seed=1, rgb_failure=(2, 4))
    assert len(seq) == 8 and len(seq.ground_truth()) == 8
    with tempfile.TemporaryDirectory() as d:
        seq.save(os.path.join(d, "demo"), "gtot")
        back = dp.Sequence.load(os.path.join(d, "demo"))
        assert [g.as_tuple() for g in back.ground_truth()] == [g.as_tuple() for g in seq.ground_truth()]

        model = dp.Model.init("toy", branches=1, seed=0)
        assert model.feature_shape() == (32, 5, 5)
        losses = model.train([seq], iterations=2, seed=0)
        assert len(losses) == 2 and all(math.isfinite(l) for l in losses)
        path = os.path.join(d, "m.bin")
        model.save(path)
        boxes = dp.Model.load(path).track(seq, seed=0, n_cand=16)
        assert len(boxes) == len(seq)
    print("smoke test passed")


if __name__ == "__main__":
    main()
