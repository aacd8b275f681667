import json
import math

import numpy as np
import pytest

from emschart.scene import (
    AngularPair,
    AntennaArray,
    Blocker,
    EmsPanel,
    SceneError,
    angles_to_direction,
    array_response,
    dbm_to_watts,
    element_pattern,
    load_scene,
    local_angles,
    orthonormal_basis,
    parse_scene,
    wave_vector,
)


def test_wave_vector_axis_cases():
    lam = 0.01
    k = 2 * np.pi / lam
    np.testing.assert_allclose(wave_vector(AngularPair(0.0, 0.0), lam), [k, 0, 0], atol=1e-12)
    np.testing.assert_allclose(wave_vector(AngularPair(np.pi / 2, 0.0), lam), [0, k, 0], atol=k * 1e-15)
    np.testing.assert_allclose(wave_vector(AngularPair(0.0, np.pi / 2), lam), [0, 0, k], atol=k * 1e-15)


def test_wave_vector_norm_invariant():
    rng = np.random.default_rng(7)
    for _ in range(50):
        theta = rng.uniform(-np.pi, np.pi)
        phi = rng.uniform(-np.pi / 2, np.pi / 2)
        lam = rng.uniform(1e-3, 10.0)
        k = wave_vector(AngularPair(theta, phi), lam)
        assert abs(np.linalg.norm(k) - 2 * np.pi / lam) <= 1e-12 * (2 * np.pi / lam)


def test_wave_vector_rejects_bad_wavelength():
    with pytest.raises(ValueError):
        wave_vector(AngularPair(0.0, 0.0), 0.0)
    with pytest.raises(ValueError):
        wave_vector(AngularPair(0.0, 0.0), -1.0)


def test_array_response_boresight_is_ones():
    lam = 0.01
    positions = np.column_stack([np.zeros(6), np.arange(6) * lam / 2, np.zeros(6)])
    a = array_response(AntennaArray(positions), AngularPair(0.0, 0.0), lam)
    np.testing.assert_allclose(a, np.ones(6), atol=1e-12)


def test_array_response_quarter_wave_pair():
    lam = 0.02
    arr = AntennaArray(np.array([[lam / 4, 0, 0], [-lam / 4, 0, 0]]))
    a = array_response(arr, AngularPair(0.0, 0.0), lam)
    np.testing.assert_allclose(a, [np.exp(1j * np.pi / 2), np.exp(-1j * np.pi / 2)], atol=1e-12)


def test_array_response_matches_scalar_recomputation():
    rng = np.random.default_rng(11)
    lam = 0.01
    positions = rng.uniform(-0.05, 0.05, size=(9, 3))
    angles = AngularPair(rng.uniform(-np.pi, np.pi), rng.uniform(-np.pi / 2, np.pi / 2))
    a = array_response(AntennaArray(positions), angles, lam)
    for n in range(9):
        kx = (2 * math.pi / lam) * math.cos(angles.phi) * math.cos(angles.theta)
        ky = (2 * math.pi / lam) * math.cos(angles.phi) * math.sin(angles.theta)
        kz = (2 * math.pi / lam) * math.sin(angles.phi)
        phase = kx * positions[n, 0] + ky * positions[n, 1] + kz * positions[n, 2]
        assert a[n] == pytest.approx(complex(math.cos(phase), math.sin(phase)), abs=1e-12)
        assert abs(abs(a[n]) - 1.0) < 1e-12


def test_array_response_translation_gives_global_phase():
    rng = np.random.default_rng(3)
    lam = 0.05
    positions = rng.uniform(-0.1, 0.1, size=(5, 3))
    offset = rng.uniform(-1, 1, size=3)
    angles = AngularPair(0.3, -0.2)
    a0 = array_response(AntennaArray(positions), angles, lam)
    a1 = array_response(AntennaArray(positions + offset), angles, lam)
    ratio = a1 / a0
    assert np.allclose(ratio, ratio[0], atol=1e-12)
    assert abs(abs(ratio[0]) - 1.0) < 1e-12


def test_element_pattern_values():
    assert element_pattern(AngularPair(0.0, 0.0), 1.0) == 1.0
    assert element_pattern(AngularPair(0.0, 0.0), 7.0) == 1.0
    assert element_pattern(AngularPair(np.pi / 2, 0.0), 2.0) == pytest.approx(0.0, abs=1e-30)
    assert element_pattern(AngularPair(np.pi / 3, 0.0), 2.0) == pytest.approx(0.25, abs=1e-12)
    # Behind the facet the clamp kicks in.
    assert element_pattern(AngularPair(np.pi, 0.0), 1.0) == 0.0


def test_local_angles_roundtrip_against_basis():
    basis = orthonormal_basis([0.0, 1.0, 0.0])
    # A direction along the facet normal is boresight in the local frame.
    ang = local_angles([0.0, 2.0, 0.0], basis)
    assert ang.theta == pytest.approx(0.0, abs=1e-12)
    assert ang.phi == pytest.approx(0.0, abs=1e-12)
    # cos(phi)cos(theta) equals the projection on the normal for any direction.
    rng = np.random.default_rng(5)
    for _ in range(20):
        d = rng.standard_normal(3)
        d /= np.linalg.norm(d)
        local = local_angles(d, basis)
        assert math.cos(local.phi) * math.cos(local.theta) == pytest.approx(float(d @ basis[0]), abs=1e-12)


def test_panel_grid_reconstruction():
    panel = EmsPanel.build([1.0, 2.0, 3.0], [0.0, 1.0, 0.0], rows=3, cols=4, spacing=0.25)
    n, ux, uy = panel.basis
    assert panel.n_elements == 12
    for idx in range(12):
        i, k = divmod(idx, 3)
        expected = panel.center + (i - 1.5) * 0.25 * ux + (k - 1.0) * 0.25 * uy
        np.testing.assert_allclose(panel.element_positions[idx], expected, atol=1e-12)
    # Elements lie in the facet plane through the center.
    offsets = panel.element_positions - panel.center
    assert np.max(np.abs(offsets @ n)) < 1e-12


def test_panel_basis_is_orthonormal_horizontal():
    panel = EmsPanel.build([0, 0, 5], [-0.45, 0.89, 0.0], rows=2, cols=2, spacing=0.1)
    n, ux, uy = panel.basis
    assert abs(ux @ [0, 0, 1]) < 1e-12  # u_x horizontal
    for a, b in [(n, ux), (n, uy), (ux, uy)]:
        assert abs(a @ b) < 1e-12
        assert abs(np.linalg.norm(a) - 1) < 1e-12


def test_blocker_validation_and_interior():
    with pytest.raises(SceneError):
        Blocker([0, 0, 0], [-1, 1, 1])
    b = Blocker([0, 0, 0], [1, 1, 1])
    assert b.contains_interior([0.5, 0.5, 0.5])
    assert not b.contains_interior([0.0, 0.5, 0.5])  # on a face


def _scene_dict(**overrides):
    spec = {
        "wavelength_m": 0.01,
        "tx_power_dbm": 23.0,
        "noise_power_dbm": -92.0,
        "bs": {"position": [0, 0, 8.5], "array": {"rows": 4, "cols": 8, "spacing_wavelengths": 0.5}},
        "panels": [
            {"center": [10, 5, 5.5], "normal": [0, -1, 0], "rows": 4, "cols": 8, "spacing_wavelengths": 0.25}
        ],
        "blockers": [{"min": [4, -1, 0], "max": [6, 1, 3]}],
        "test_points": [[1, 0, 1.5], [2, 0, 1.5], [3, 0, 1.5]],
    }
    spec.update(overrides)
    return spec


def test_parse_scene_roundtrip_fields():
    sc = parse_scene(_scene_dict())
    assert sc.n_bs == 32
    assert sc.n_panels == 1
    assert sc.n_points == 3
    assert sc.tx_power == pytest.approx(dbm_to_watts(23.0))
    assert sc.noise_power == pytest.approx(10 ** ((-92 - 30) / 10))
    assert sc.panels[0].dx == pytest.approx(0.0025)


def test_parse_scene_carrier_hz():
    spec = _scene_dict()
    del spec["wavelength_m"]
    spec["carrier_hz"] = 30e9
    sc = parse_scene(spec)
    assert sc.wavelength == pytest.approx(299_792_458.0 / 30e9)


def test_parse_scene_missing_field_names_context():
    spec = _scene_dict()
    del spec["bs"]["array"]["rows"]
    with pytest.raises(SceneError, match="rows"):
        parse_scene(spec)
    with pytest.raises(SceneError, match="wavelength"):
        parse_scene({k: v for k, v in _scene_dict().items() if k != "wavelength_m"})


def test_parse_scene_grid_excludes_blockers():
    spec = _scene_dict()
    spec["blockers"] = [{"min": [4, -10, 0], "max": [6, 10, 5]}]
    spec["test_points"] = {"grid": {"min": [0, 0], "max": [10, 0], "step": 1.0, "height": 1.5}}
    sc = parse_scene(spec)
    xs = sorted(sc.test_points[:, 0])
    assert 5.0 not in xs  # interior of the blocker
    assert 4.0 in xs and 6.0 in xs  # faces count as outside
    assert np.all(sc.test_points[:, 2] == 1.5)


def test_load_scene_reports_json_position(tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text('{"wavelength_m": 0.01,\n  "oops";\n}')
    with pytest.raises(SceneError, match="line 2"):
        load_scene(bad)


def test_load_scene_missing_file():
    with pytest.raises(SceneError, match="not found"):
        load_scene("/nonexistent/nowhere.json")


def test_angles_to_direction_matches_wave_vector():
    ang = AngularPair(0.7, -0.3)
    np.testing.assert_allclose(
        wave_vector(ang, 2 * np.pi), angles_to_direction(ang), atol=1e-12
    )
