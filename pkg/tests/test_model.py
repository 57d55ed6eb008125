"""Domain types and wire formats."""

import json
import math

import numpy as np
import pytest

from rfmloc.builder import BuilderConfig
from rfmloc.model import (DataError, ExtendedRfm, Fingerprint, Location,
                          PositioningConfig, RawRfm, Rect, RfmEntry, Termination,
                          attributes, estimate_from_obj, estimate_to_obj,
                          fingerprint_from_obj, fingerprint_to_obj, gaussian_nw,
                          read_fingerprints, write_fingerprints)
from tests.conftest import make_fp, make_rfm


class TestAttributes:
    def test_empty_fingerprint_has_no_attributes(self):
        assert attributes(make_fp({})) == frozenset()

    def test_counts_measured_features(self):
        fp = make_fp({f"ap{i}": -60.0 - i for i in range(7)})
        assert len(attributes(fp)) == 7

    def test_is_the_key_set(self):
        fp = make_fp({"a": -50.0, "b": -60.0})
        assert attributes(fp) == frozenset({"a", "b"})


class TestFingerprintValidation:
    def test_rejects_non_finite_values(self):
        with pytest.raises(ValueError):
            make_fp({"a": float("nan")})

    def test_rejects_empty_feature_id(self):
        with pytest.raises(ValueError):
            make_fp({"": -60.0})

    def test_rejects_value_below_missing_indicator_on_parse(self):
        with pytest.raises(ValueError):
            fingerprint_from_obj({"id": 0, "x": None, "y": None,
                                  "features": {"a": -120.0}})

    def test_parse_respects_custom_indicator(self):
        fp = fingerprint_from_obj({"id": 0, "x": None, "y": None,
                                   "features": {"a": -120.0}}, missing_value=-130.0)
        assert fp.features["a"] == -120.0


class TestLocationAndRect:
    def test_distance(self):
        assert Location(0.0, 0.0).distance_to(Location(3.0, 4.0)) == 5.0

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Location(float("inf"), 0.0)

    def test_rect_contains(self):
        r = Rect(0.0, 0.0, 10.0, 5.0)
        assert r.contains(Location(10.0, 5.0))
        assert not r.contains(Location(10.1, 5.0))
        assert r.diagonal == pytest.approx(math.hypot(10, 5))

    def test_rect_rejects_inverted(self):
        with pytest.raises(ValueError):
            Rect(1.0, 0.0, 0.0, 1.0)


class TestRawRfm:
    def test_requires_locations(self):
        with pytest.raises(ValueError):
            RawRfm.from_records([make_fp({"a": -60.0})])

    def test_requires_records_inside_roi(self):
        rec = Fingerprint(0, Location(5.0, 5.0), {"a": -60.0})
        with pytest.raises(ValueError):
            RawRfm((rec,), Rect(0.0, 0.0, 1.0, 1.0))

    def test_bbox_roi_inferred(self):
        recs = [Fingerprint(0, Location(1.0, 2.0), {"a": -60.0}),
                Fingerprint(1, Location(4.0, 8.0), {"a": -61.0})]
        raw = RawRfm.from_records(recs)
        assert raw.roi == Rect(1.0, 2.0, 4.0, 8.0)


class TestFingerprintJsonLines:
    def test_round_trip_values_bit_exact(self, tmp_path):
        # canonical serialization is a fixed point: re-reading and re-writing
        # reproduces the same decimal strings
        fps = [Fingerprint(0, Location(1.5, 0.25), {"9c:50:ee:09:5f:30": -61.0}),
               Fingerprint(1, None, {"a": -60.123456789012345, "b": -109.99999999999999})]
        path = tmp_path / "fp.jsonl"
        write_fingerprints(path, fps)
        first = path.read_text()
        again = tmp_path / "fp2.jsonl"
        write_fingerprints(again, read_fingerprints(path))
        assert again.read_text() == first
        back = read_fingerprints(again)
        assert back[1].features["a"] == fps[1].features["a"]
        assert json.dumps(fingerprint_to_obj(back[1])) == json.dumps(fingerprint_to_obj(fps[1]))

    def test_null_coordinates_for_queries(self, tmp_path):
        path = tmp_path / "fp.jsonl"
        write_fingerprints(path, [Fingerprint(3, None, {"a": -60.0})])
        assert '"x": null' in path.read_text()
        assert read_fingerprints(path)[0].location is None

    def test_data_error_cites_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": 0, "x": null, "y": null, "features": {"a": -60.0}}\n'
                        '{"id": "oops"}\n')
        with pytest.raises(DataError) as exc:
            read_fingerprints(path)
        assert exc.value.line == 2
        assert str(path) in str(exc.value)

    def test_mismatched_coordinates_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": 0, "x": 1.0, "y": null, "features": {"a": -60.0}}\n')
        with pytest.raises(DataError):
            read_fingerprints(path)


class TestExtendedRfmSerialization:
    def test_round_trip_preserves_entries(self):
        rfm = make_rfm([[0.0, 0.0], [3.0, 4.0]], ["a", "b"],
                       [[-60.0, np.nan], [-70.0, -80.0]],
                       [[1.0, np.nan], [2.0, 0.5]])
        back = ExtendedRfm.from_json(rfm.to_json())
        assert back.to_json() == rfm.to_json()
        assert back.entries_at(1) == [RfmEntry("a", -70.0, 2.0), RfmEntry("b", -80.0, 0.5)]

    def test_layers_must_align(self):
        with pytest.raises(ValueError):
            make_rfm([[0.0, 0.0]], ["a"], [[-60.0]], [[np.nan]])

    def test_arrays_read_only(self):
        rfm = make_rfm([[0.0, 0.0]], ["a"], [[-60.0]])
        with pytest.raises(ValueError):
            rfm.values[0, 0] = 0.0

    def test_load_error_is_data_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(DataError):
            ExtendedRfm.load(path)


class TestContinuousQuery:
    def test_query_at_reference_point_matches_kernel_smoothing(self):
        # oracle: direct Nadaraya-Watson over the stored sigma layer
        locs = np.array([[0.0, 0.0], [1.0, 0.0], [2.5, 0.0]])
        sigmas = np.array([[1.0], [2.0], [4.0]])
        rfm = make_rfm(locs, ["a"], [[-60.0], [-65.0], [-70.0]], sigmas)
        h = rfm.builder_config.bandwidth
        at = Location(1.0, 0.0)
        d = np.hypot(locs[:, 0] - at.x, locs[:, 1] - at.y)
        keep = d <= 3 * h
        expected = gaussian_nw(sigmas[keep, 0], d[keep], h)
        got = rfm.query(at)
        assert len(got) == 1
        assert got[0].sigma == pytest.approx(expected, rel=1e-12)

    def test_far_feature_omitted_within_reach_of_another(self):
        # feature b only carried far away: omitted; feature a stays
        rfm = make_rfm([[0.0, 0.0], [100.0, 0.0]], ["a", "b"],
                       [[-60.0, np.nan], [np.nan, -80.0]])
        entries = rfm.query(Location(0.5, 0.0))
        assert [e.feature for e in entries] == ["a"]

    def test_query_never_empty_while_map_has_entries(self):
        # all carriers beyond three bandwidths: the range cap is dropped
        rfm = make_rfm([[0.0, 0.0]], ["a"], [[-60.0]])
        entries = rfm.query(Location(50.0, 50.0))
        assert [e.feature for e in entries] == ["a"]
        assert entries[0].value == -60.0

    def test_constant_field_reproduced(self, rng):
        n = 40
        locs = rng.uniform(0, 20, size=(n, 2))
        values = np.full((n, 1), -67.25)
        rfm = make_rfm(locs, ["a"], values)
        for _ in range(25):
            at = Location(float(rng.uniform(0, 20)), float(rng.uniform(0, 20)))
            got = rfm.query(at)
            assert got[0].value == pytest.approx(-67.25, abs=1e-9)


class TestPositioningConfigValidation:
    @pytest.mark.parametrize("kwargs", [
        {"alpha1": -0.1}, {"beta": 0.0}, {"k": 0}, {"converge_tol": 0.0},
        {"max_iterations": 0}, {"minkowski_p": 0.5},
        {"weight_form": "mystery"}, {"init_mode": "teleport"},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            PositioningConfig(**kwargs)

    def test_defaults(self):
        cfg = PositioningConfig()
        assert (cfg.alpha1, cfg.alpha2) == (3.0, 3.0)
        assert cfg.missing_value == -110.0
        assert cfg.beta == 2.0
        assert cfg.k == 1
        assert cfg.converge_tol == 1e-3
        assert cfg.max_iterations == 100
        assert cfg.loop_min_points == 4
        assert cfg.loop_max_diameter == 0.01
        assert cfg.minkowski_p == 2.0
        assert cfg.weight_form == "precision_softmax"


class TestEstimateWire:
    def test_round_trip(self):
        from rfmloc.model import PositionEstimate
        est = PositionEstimate(Location(1.0, 2.0), Termination.LOOPING, 7,
                               (Location(0.0, 0.0), Location(1.0, 2.0)),
                               (Location(1.0, 2.0), Location(1.0, 2.1)), 11)
        back = estimate_from_obj(json.loads(json.dumps(estimate_to_obj(est))))
        assert back == est

    def test_null_loop_points(self):
        from rfmloc.model import PositionEstimate
        est = PositionEstimate(Location(1.0, 2.0), Termination.CONVERGING, 2,
                               (Location(1.0, 2.0),), None, 0)
        obj = estimate_to_obj(est)
        assert obj["loop_points"] is None
        assert estimate_from_obj(obj).loop_points is None
