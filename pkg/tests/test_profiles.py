import numpy as np

from dsoled.profiles import PV_DN, PV_TN, ProfileSpec, synthesize_profiles


def test_demand_rows_peak_once_at_one():
    profiles = synthesize_profiles(ProfileSpec(n_profiles=17, seed=0), 24)

    assert profiles.demand.shape == (17, 24)
    for row in profiles.demand:
        assert row.max() == 1.0
        assert np.count_nonzero(row == 1.0) == 1
        assert row.min() > 0


def test_pv_zero_at_night():
    spec = ProfileSpec(seed=2)
    profiles = synthesize_profiles(spec, 24)
    hours = np.arange(24)
    night = (hours <= spec.sunrise_hour) | (hours >= spec.sunset_hour)

    for curve in (profiles.pv_tn, profiles.pv_dn):
        assert np.all(curve[night] == 0.0)
        assert curve.max() == 1.0


def test_single_period_is_flat():
    profiles = synthesize_profiles(ProfileSpec(n_profiles=3), 1)

    np.testing.assert_array_equal(profiles.demand, np.ones((3, 1)))
    assert profiles.pv_tn.tolist() == [1.0]


def test_seeded():
    a = synthesize_profiles(ProfileSpec(seed=5), 24)
    b = synthesize_profiles(ProfileSpec(seed=5), 24)
    c = synthesize_profiles(ProfileSpec(seed=6), 24)

    np.testing.assert_array_equal(a.demand, b.demand)
    assert not np.array_equal(a.demand, c.demand)


def test_cyclic_assignment():
    profiles = synthesize_profiles(ProfileSpec(n_profiles=4), 6)

    assert [profiles.assign(i) for i in range(6)] == [0, 1, 2, 3, 0, 1]
    assert profiles.curve(5) == profiles.curve(1)


def test_long_frame():
    profiles = synthesize_profiles(ProfileSpec(n_profiles=2), 4)
    frame = profiles.to_frame()

    assert list(frame.columns) == ["period", "profile_id", "value"]
    assert len(frame) == (2 + 2) * 4
    assert set(frame["profile_id"]) == {"demand1", "demand2", PV_TN, PV_DN}


def test_spec_round_trip():
    spec = ProfileSpec(n_profiles=5, noise=0.0, seed=9)

    assert ProfileSpec.from_dict(spec.to_dict()) == spec
