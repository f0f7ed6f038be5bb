"""Smoke test for the pyroisample extension module."""

import math

import pyroisample as rs


def main():
    assert rs.iou((0, 0, 10, 10), (5, 0, 15, 10)) == 50 / 150

    anchor, target = (10.0, 20.0, 110.0, 80.0), (15.0, 18.0, 140.0, 95.0)
    back = rs.decode_delta(anchor, rs.encode_delta(anchor, target))
    assert all(abs(a - b) < 1e-9 for a, b in zip(back, target))

    anchors = rs.generate_anchors(4, 3)
    assert len(anchors) == 4 * 3 * 9
    assert rs.scale_bucket((0, 0, 128, 128)) == 0

    boxes = [(0, 0, 100, 100), (5, 5, 100, 100), (300, 300, 400, 400)]
    scores = [0.9, 0.8, 0.7]
    assert rs.greedy_nms(boxes, scores, 0.7) == [0, 2]
    assert rs.select(boxes, scores, "all") == [0, 1, 2]
    assert rs.select(boxes, scores, "pre", overrides="ratio_table=1,0,0") == [0, 1, 2]

    assert rs.keep_probabilities([0.4, 0.2, 0.2]) == [1.0, 0.5, 0.5]
    assert rs.keep_probabilities(rs.pow_ratio(1.0)) == [1.0, 0.5, 0.25]
    dump = rs.config_dump("nms", "test")
    assert "K=6000" in dump and "k=300" in dump

    fm = [float(i) for i in range(2 * 4 * 4)]
    out = rs.crop_and_resize(fm, (2, 4, 4), (0.0, 0.0, 3.0, 3.0), 4)
    assert out == fm
    grad = rs.crop_and_resize_grad((2, 4, 4), (0.5, 0.5, 2.5, 2.5), 3, [1.0] * 18)
    assert math.isclose(sum(grad), 18.0)

    gts = [("im", (0, 0, 50, 50), "cat", False), ("im", (100, 100, 180, 190), "dog", False)]
    dets = [("im", g[1], 0.9, g[2]) for g in gts]
    coco = rs.coco_eval(dets, gts)
    assert coco["AP"] == coco["AP-.5"] == coco["AP-.75"] == 1.0
    assert coco["AP-L"] is None
    voc = rs.voc_eval(dets, gts)
    assert voc["mAP"] == 1.0

    res = rs.simulate("scenes=3", ["nms", "all", "pre"])
    assert res["table"].startswith("scheme")
    assert res == rs.simulate("scenes=3", ["nms", "all", "pre"])

    print("smoke test passed")


if __name__ == "__main__":
    main()
