import numpy as np
import pytest

from pfbwd.errors import ChannelDomainError, ConfigError
from pfbwd.netgen import (
    ArrayGeometry,
    ChannelParams,
    ChannelSet,
    Topology,
    fspl,
    generate_channels,
    grid_shape,
    haps_angles,
    haps_channel,
    haps_steering,
    linear_to_db,
    mbs_channel,
    place_network,
)


def test_quadrant_centers_for_four_mbs():
    topo = place_network(1, 4, 16, 4000.0, 20000.0)
    expected = [(1000, 1000, 25), (3000, 1000, 25), (1000, 3000, 25), (3000, 3000, 25)]
    np.testing.assert_allclose(topo.mbs_positions, expected)
    np.testing.assert_allclose(topo.haps_position, (2000, 2000, 20000))
    assert topo.U == 16
    assert topo.n_bs == 5


def test_haps_only_topology():
    topo = place_network(1, 0, 4)
    assert topo.B == 0
    assert topo.has_haps
    assert topo.n_bs == 1


def test_placement_is_deterministic():
    a = place_network(7, 4, 16)
    b = place_network(7, 4, 16)
    np.testing.assert_array_equal(a.ue_positions, b.ue_positions)
    np.testing.assert_array_equal(a.mbs_positions, b.mbs_positions)


def test_ues_stay_inside_area():
    topo = place_network(3, 2, 200, area_side_m=500.0)
    assert np.all(topo.ue_positions[:, :2] >= 0)
    assert np.all(topo.ue_positions[:, :2] <= 500.0)
    assert np.all(topo.ue_positions[:, 2] == 0)


def test_grid_shape():
    assert grid_shape(0) == (0, 0)
    assert grid_shape(2) == (1, 2)
    assert grid_shape(4) == (2, 2)
    assert grid_shape(6) == (2, 3)
    assert grid_shape(3) is None


def test_non_grid_count_needs_random_placement():
    with pytest.raises(ConfigError):
        place_network(1, 3, 4)
    topo = place_network(1, 3, 4, grid=False)
    assert topo.B == 3


def test_no_base_station_is_rejected():
    with pytest.raises(ConfigError):
        place_network(1, 0, 4, haps=False)


def test_array_geometry_parse():
    geom = ArrayGeometry.parse("4x4")
    assert geom.n_elements == 16
    assert str(geom) == "4x4"
    with pytest.raises(ConfigError):
        ArrayGeometry.parse("4by4")
    with pytest.raises(ConfigError):
        ArrayGeometry.parse("0x4")


def test_fspl_reference_value():
    pl = fspl(2.545e9, 20000.0)
    assert pl == pytest.approx(4.545e12, rel=0.01)
    assert linear_to_db(pl) == pytest.approx(126.6, abs=0.05)


def test_fspl_square_law():
    assert fspl(2e9, 200.0) / fspl(2e9, 100.0) == pytest.approx(4.0)
    assert fspl(4e9, 100.0) / fspl(2e9, 100.0) == pytest.approx(4.0)


def test_fspl_zero_distance():
    with pytest.raises(ChannelDomainError):
        fspl(2.545e9, 0.0)


def test_mbs_channel_without_shadowing():
    topo = place_network(1, 1, 3)
    geom = ArrayGeometry(1, 2)
    params = ChannelParams(shadow_sigma_db=0.0)
    h = mbs_channel(1, topo, geom, 0, params, fading=np.ones((2, 3)))
    dist = np.linalg.norm(topo.ue_positions - topo.mbs_positions[0], axis=1)
    expected = 1 / np.sqrt(fspl(params.carrier_hz, dist))
    np.testing.assert_allclose(np.abs(h), np.tile(expected, (2, 1)), rtol=1e-12)


def test_mbs_small_scale_fading_unit_power():
    topo = place_network(2, 1, 100, grid=False)
    geom = ArrayGeometry(100, 10)
    params = ChannelParams(shadow_sigma_db=0.0)
    h = mbs_channel(2, topo, geom, 0, params)
    dist = np.linalg.norm(topo.ue_positions - topo.mbs_positions[0], axis=1)
    normalized = np.abs(h) ** 2 * fspl(params.carrier_hz, dist)[None, :]
    assert normalized.mean() == pytest.approx(1.0, abs=0.02)


def test_mbs_channel_deterministic():
    topo = place_network(5, 2, 4)
    geom = ArrayGeometry(2, 2)
    a = mbs_channel(5, topo, geom, 1, ChannelParams())
    b = mbs_channel(5, topo, geom, 1, ChannelParams())
    np.testing.assert_array_equal(a, b)


def test_steering_at_nadir_is_all_ones():
    np.testing.assert_allclose(haps_steering(np.pi / 2, 0.3, ArrayGeometry(4, 4)), np.ones(16), atol=1e-12)


def test_steering_unit_modulus():
    rng = np.random.default_rng(0)
    geom = ArrayGeometry(3, 5)
    for theta, phi in rng.uniform([0, -np.pi], [np.pi / 2, np.pi], size=(10, 2)):
        a = haps_steering(theta, phi, geom)
        np.testing.assert_allclose(np.abs(a), 1.0)
        assert a[0] == 1


def test_steering_hand_evaluation():
    a = haps_steering(0.0, np.pi / 2, ArrayGeometry(2, 2))
    np.testing.assert_allclose(a, [1, 1, -1, -1], atol=1e-12)


def test_haps_los_limit_matches_steering():
    topo = place_network(3, 0, 5)
    geom = ArrayGeometry(4, 4)
    params = ChannelParams(rician_k=1e9)
    h = haps_channel(3, topo, geom, params)
    theta, phi = haps_angles(topo)
    for u in range(topo.U):
        a = haps_steering(theta[u], phi[u], geom)
        direction = h[:, u] / np.linalg.norm(h[:, u])
        expected = a / np.linalg.norm(a)
        assert np.linalg.norm(direction - expected) <= 1e-3


def test_haps_pure_nlos_variance():
    topo = place_network(4, 0, 2000)
    geom = ArrayGeometry(8, 8)
    params = ChannelParams(rician_k=0.0)
    h = haps_channel(4, topo, geom, params)
    dist = np.linalg.norm(topo.ue_positions - topo.haps_position, axis=1)
    normalized = np.abs(h) ** 2 * fspl(params.carrier_hz, dist)[None, :]
    assert normalized.mean() == pytest.approx(1.0, abs=0.02)


def test_ue_below_haps_sees_nadir():
    topo = Topology(4000.0, np.zeros((0, 3)), (2000.0, 2000.0, 20000.0), [(2000.0, 2000.0, 0.0)])
    theta, _ = haps_angles(topo)
    assert theta[0] == pytest.approx(np.pi / 2)
    params = ChannelParams(rician_k=1e9)
    h = haps_channel(1, topo, ArrayGeometry(2, 2), params)
    los = h[:, 0] * np.sqrt(fspl(params.carrier_hz, 20000.0))
    np.testing.assert_allclose(los, np.ones(4), atol=1e-3)


def test_generate_channels_order_and_shapes():
    topo = place_network(1, 2, 4)
    ch = generate_channels(1, topo, ArrayGeometry(2, 2), ArrayGeometry(4, 4), ChannelParams())
    assert ch.n_antennas == [4, 4, 16]
    assert ch.labels == ["mbs0", "mbs1", "haps"]
    assert ch.U == 4


def test_channel_set_validation():
    with pytest.raises(ConfigError):
        ChannelSet([np.ones((2, 2)), np.ones((2, 3))], 2.5e9, 1.0, 10.0, 8.0)
    with pytest.raises(ChannelDomainError):
        ChannelSet([np.array([[np.nan]])], 2.5e9, 1.0, 10.0, 8.0)


def test_channel_csv_export(tmp_path, tiny_channels):
    path = tmp_path / "h.csv"
    tiny_channels.to_csv(path)
    loaded = ChannelSet.from_csv(path, ChannelParams(noise_variance_w=1.0), has_haps=False)
    assert loaded.n_antennas == tiny_channels.n_antennas
    for a, b in zip(loaded.matrices, tiny_channels.matrices):
        np.testing.assert_array_equal(a, b)
