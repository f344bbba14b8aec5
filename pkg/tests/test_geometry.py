# tests/test_geometry.py
import math

import pytest
import torch
from hypothesis import assume, given, settings, strategies as st

from splat_avatar.core.geometry import (
    build_frame_batch,
    build_frames,
    compute_triangle_frame,
    global_to_local,
    global_to_local_batch,
    local_to_global,
    local_to_global_batch,
    matrix_to_quaternion,
    quaternion_multiply,
    quaternion_to_matrix,
    triangle_frames,
)
from splat_avatar.exceptions import DegenerateTriangle, IndexMismatch
from splat_avatar.models.geometry_model import FrameBatch, RiggedSplat, RigMesh, SplatSet, TriangleFrame

coord = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(coord, coord, coord)
quat = st.tuples(*[st.floats(min_value=-1.0, max_value=1.0) for _ in range(4)])


def _rotation(q) -> torch.Tensor:
    q = torch.tensor(q, dtype=torch.float64)
    assume(q.norm() > 0.1)
    return quaternion_to_matrix(q)


def _corners(v0, v1, v2) -> torch.Tensor:
    corners = torch.tensor([[v0, v1, v2]], dtype=torch.float64)
    area = 0.5 * torch.linalg.cross(corners[0, 1] - corners[0, 0], corners[0, 2] - corners[0, 0]).norm()
    assume(area > 1e-2)
    return corners


def test_unit_right_triangle_frame():
    frame = compute_triangle_frame((0, 0, 0), (1, 0, 0), (0, 1, 0))
    R = torch.tensor(frame.rotation)
    assert frame.origin == pytest.approx((1 / 3, 1 / 3, 0.0))
    assert R[:, 0].tolist() == pytest.approx([1.0, 0.0, 0.0])
    assert R[:, 1].tolist() == pytest.approx([0.0, 0.0, 1.0])
    assert R[:, 2].tolist() == pytest.approx([0.0, -1.0, 0.0])
    assert frame.scale == pytest.approx(1.0)


def test_frame_translation_and_scaling():
    base = compute_triangle_frame((0, 0, 0), (1, 0, 0), (0, 1, 0))
    shifted = compute_triangle_frame((5, 5, 5), (6, 5, 5), (5, 6, 5))
    doubled = compute_triangle_frame((0, 0, 0), (2, 0, 0), (0, 2, 0))

    assert shifted.origin == pytest.approx(tuple(c + 5 for c in base.origin))
    assert torch.allclose(torch.tensor(shifted.rotation), torch.tensor(base.rotation), atol=1e-12)
    assert shifted.scale == pytest.approx(base.scale)
    assert doubled.origin == pytest.approx(tuple(2 * c for c in base.origin))
    assert doubled.scale == pytest.approx(2 * base.scale)
    assert torch.allclose(torch.tensor(doubled.rotation), torch.tensor(base.rotation), atol=1e-12)


def test_collinear_triangle_is_degenerate():
    with pytest.raises(DegenerateTriangle):
        compute_triangle_frame((0, 0, 0), (1, 0, 0), (2, 0, 0))


def test_degenerate_face_is_named():
    mesh = RigMesh.from_arrays(
        [[0, 1, 2], [0, 1, 3]],
        [[(0, 0, 0), (1, 0, 0), (0, 1, 0), (2, 0, 0)]],
    )
    with pytest.raises(DegenerateTriangle) as info:
        build_frame_batch(mesh, 0)
    assert info.value.face_index == 1
    assert "face 1" in info.value.message


def test_identity_frame_passes_splat_through():
    frame = TriangleFrame(origin=(0, 0, 0), rotation=((1, 0, 0), (0, 1, 0), (0, 0, 1)), scale=1.0)
    splat = RiggedSplat(mu_local=(0.3, -0.2, 0.1), scale_local=(0.1, 0.2, 0.3), opacity_logit=0.4, color=(0.2, 0.4, 0.6))
    g = local_to_global(splat, frame)
    assert g.mean == pytest.approx(splat.mu_local)
    assert g.opacity == pytest.approx(splat.opacity)
    assert g.color == pytest.approx(splat.color)
    assert torch.allclose(torch.tensor(g.cov), torch.diag(torch.tensor([0.01, 0.04, 0.09], dtype=torch.float64)))


def test_rotated_scaled_frame(rot_z90):
    frame = TriangleFrame(origin=(0, 0, 1), rotation=rot_z90, scale=2.0)
    splat = RiggedSplat(mu_local=(1, 0, 0), scale_local=(0.1, 0.2, 0.3))
    batch = local_to_global_batch(SplatSet.from_splats([splat]), FrameBatch.from_frames([frame]))
    assert batch.mean[0].tolist() == pytest.approx([0.0, 2.0, 1.0], abs=1e-12)
    assert batch.scale[0].tolist() == pytest.approx([0.2, 0.4, 0.6])


def test_global_to_local_inverts_local_to_global(rot_z90):
    frame = TriangleFrame(origin=(0.5, -1, 2), rotation=rot_z90, scale=0.7)
    splat = RiggedSplat(
        mu_local=(0.2, 0.1, -0.3),
        rot_local=(math.cos(0.3), math.sin(0.3), 0.0, 0.0),
        scale_local=(0.1, 0.2, 0.3),
    )
    batch = local_to_global_batch(SplatSet.from_splats([splat]), FrameBatch.from_frames([frame]))
    mu, rot, scale = global_to_local(
        batch.mean[0].tolist(), batch.rotation[0].tolist(), batch.scale[0].tolist(), frame
    )
    assert mu == pytest.approx(splat.mu_local, abs=1e-12)
    assert rot == pytest.approx(splat.rot_local, abs=1e-12)
    assert scale == pytest.approx(splat.scale_local, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(quat)
def test_quaternion_matrix_round_trip(q):
    R = _rotation(q)
    assert torch.allclose(quaternion_to_matrix(matrix_to_quaternion(R)), R, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(vec3, vec3, vec3, quat, vec3)
def test_frames_are_rigidly_equivariant(v0, v1, v2, q, shift):
    corners = _corners(v0, v1, v2)
    Q = _rotation(q)
    s = torch.tensor(shift, dtype=torch.float64)
    base = triangle_frames(corners)
    moved = triangle_frames(corners @ Q.T + s)

    assert torch.allclose(moved.origin[0], Q @ base.origin[0] + s, atol=1e-9)
    assert torch.allclose(moved.rotation[0], Q @ base.rotation[0], atol=1e-9)
    assert torch.allclose(moved.scale, base.scale, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(vec3, vec3, vec3, quat, vec3, vec3, quat)
def test_local_to_global_follows_rigid_motion(v0, v1, v2, q, shift, mu, q_local):
    corners = _corners(v0, v1, v2)
    Q = _rotation(q)
    local = torch.tensor(q_local, dtype=torch.float64)
    assume(local.norm() > 0.1)
    s = torch.tensor(shift, dtype=torch.float64)
    splats = SplatSet(
        mu=torch.tensor([mu], dtype=torch.float64) / 5.0,
        rot=local[None],
        log_scale=torch.log(torch.tensor([[0.1, 0.2, 0.3]], dtype=torch.float64)),
        opacity_logit=torch.zeros(1, dtype=torch.float64),
        color=torch.full((1, 3), 0.5, dtype=torch.float64),
        binding=torch.zeros(1, dtype=torch.long),
    )

    base = local_to_global_batch(splats, triangle_frames(corners))
    moved = local_to_global_batch(splats, triangle_frames(corners @ Q.T + s))

    assert torch.allclose(moved.mean[0], Q @ base.mean[0] + s, atol=1e-9)
    assert torch.allclose(moved.cov[0], Q @ base.cov[0] @ Q.T, atol=1e-9)
    assert torch.allclose(moved.cov[0], moved.cov[0].T, atol=1e-12)
    assert torch.linalg.eigvalsh(moved.cov[0]).min() >= -1e-9


def test_binding_past_the_last_face_is_rejected():
    frames = triangle_frames(torch.tensor([[(0, 0, 0), (1, 0, 0), (0, 1, 0)]], dtype=torch.float64))
    splats = SplatSet(
        mu=torch.zeros((2, 3), dtype=torch.float64),
        rot=torch.tensor([[1.0, 0.0, 0.0, 0.0]] * 2, dtype=torch.float64),
        log_scale=torch.zeros((2, 3), dtype=torch.float64),
        opacity_logit=torch.zeros(2, dtype=torch.float64),
        color=torch.zeros((2, 3), dtype=torch.float64),
        binding=torch.tensor([0, 1]),
    )
    with pytest.raises(IndexMismatch):
        local_to_global_batch(splats, frames)
    with pytest.raises(IndexMismatch):
        global_to_local_batch(
            torch.zeros((1, 3), dtype=torch.float64),
            torch.eye(3, dtype=torch.float64)[None],
            torch.ones((1, 3), dtype=torch.float64),
            frames,
            torch.tensor([-1]),
        )


def test_build_frames_matches_single_triangle_frame():
    mesh = RigMesh.from_arrays(
        [[0, 1, 2]],
        [[(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 0, 1), (0, 2, 1), (-2, 0, 1)]],
    )
    frames = build_frames(mesh, 1)
    assert len(frames) == 1
    expected = compute_triangle_frame((0, 0, 1), (0, 2, 1), (-2, 0, 1))
    assert frames[0].origin == pytest.approx(expected.origin)
    assert frames[0].scale == pytest.approx(expected.scale)
    for row, expected_row in zip(frames[0].rotation, expected.rotation):
        assert row == pytest.approx(expected_row, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(quat, quat)
def test_quaternion_product_composes_rotations(qa, qb):
    a = torch.tensor(qa, dtype=torch.float64)
    b = torch.tensor(qb, dtype=torch.float64)
    assume(a.norm() > 0.1 and b.norm() > 0.1)
    a, b = a / a.norm(), b / b.norm()
    product = quaternion_to_matrix(quaternion_multiply(a, b))
    assert torch.allclose(product, quaternion_to_matrix(a) @ quaternion_to_matrix(b), atol=1e-9)
