import numpy as np
import pytest

from skelbyol.data import SkeletonSequence
from skelbyol.errors import DataError
from skelbyol.graphs import HUMANOID15_REST_POSE, humanoid15
from skelbyol.preprocess import (
    bone_features,
    canonical_rotate,
    canonical_rotation_matrix,
    center,
    concat_joint_bone,
    crop_or_repeat,
)
from skelbyol.synthetic import rotation_about_z

GRAPH = humanoid15()


def seq_from(data, **kw):
    defaults = dict(camera_id=0, subject_id=0, action_id=0, label=None)
    defaults.update(kw)
    return SkeletonSequence(data=np.asarray(data, dtype=np.float64), **defaults)


def random_seq(t=12, seed=0):
    rng = np.random.default_rng(seed)
    base = HUMANOID15_REST_POSE[None] + rng.normal(scale=0.05, size=(t, 15, 3))
    return seq_from(base)


class TestCropOrRepeat:
    def test_long_input_is_prefix(self):
        seq = random_seq(t=300)
        out = crop_or_repeat(seq, 150)
        assert out.frames == 150
        assert np.array_equal(out.data, seq.data[:150])

    def test_exact_length_identity(self):
        seq = random_seq(t=150)
        out = crop_or_repeat(seq, 150)
        assert np.array_equal(out.data, seq.data)

    def test_short_input_tiles_cyclically(self):
        seq = random_seq(t=60)
        out = crop_or_repeat(seq, 150)
        # index arithmetic oracle: frames [0..59, 0..59, 0..29]
        expected = np.concatenate([seq.data, seq.data, seq.data[:30]], axis=0)
        assert np.array_equal(out.data, expected)

    def test_output_length_always_target(self):
        for t in (1, 2, 7, 149, 150, 151, 400):
            assert crop_or_repeat(random_seq(t=t), 150).frames == 150

    def test_invalid_target(self):
        with pytest.raises(DataError):
            crop_or_repeat(random_seq(), 0)


class TestCenter:
    def test_constant_offset_removed(self):
        base = np.tile(HUMANOID15_REST_POSE, (5, 1, 1)) + np.array([1.0, 2.0, 3.0])
        out = center(seq_from(base), GRAPH)
        assert np.allclose(out.data[0, GRAPH.center_joint], 0.0)
        diffs_in = base - base[:, :1, :]
        diffs_out = out.data - out.data[:, :1, :]
        assert np.allclose(diffs_in, diffs_out)

    def test_idempotent(self):
        seq = random_seq()
        once = center(seq, GRAPH)
        twice = center(once, GRAPH)
        assert np.array_equal(once.data, twice.data)

    def test_moving_sequence_oracle(self):
        seq = random_seq(t=6, seed=3)
        out = center(seq, GRAPH)
        origin = seq.data[0, GRAPH.center_joint]
        assert np.allclose(out.data, seq.data - origin)
        # frame-k center lands at pos_k - pos_0
        assert np.allclose(
            out.data[:, GRAPH.center_joint], seq.data[:, GRAPH.center_joint] - origin
        )


class TestCanonicalRotate:
    def test_canonical_pose_unchanged(self):
        seq = seq_from(np.tile(HUMANOID15_REST_POSE, (4, 1, 1)))
        r = canonical_rotation_matrix(seq.data[0], GRAPH)
        assert np.allclose(r, np.eye(3), atol=1e-12)
        out = canonical_rotate(seq, GRAPH)
        assert np.allclose(out.data, seq.data, atol=1e-12)

    def test_known_rotation_is_undone(self):
        seq = random_seq(t=8, seed=5)
        canonical = canonical_rotate(seq, GRAPH)
        cx, sx = np.cos(0.4), np.sin(0.4)
        rot_x = np.array([[1.0, 0, 0], [0, cx, -sx], [0, sx, cx]])
        r0 = rotation_about_z(1.1) @ rot_x  # generic proper rotation
        rotated = seq_from(np.einsum("ij,tkj->tki", r0, canonical.data))
        recovered = canonical_rotate(rotated, GRAPH)
        assert np.allclose(recovered.data, canonical.data, atol=1e-9)

    def test_postconditions_and_rigidity(self):
        seq = random_seq(t=10, seed=11)
        out = canonical_rotate(seq, GRAPH)
        hips = out.data[0, GRAPH.hip_right] - out.data[0, GRAPH.hip_left]
        assert abs(hips[1]) < 1e-9 and abs(hips[2]) < 1e-9 and hips[0] > 0
        up = out.data[0, GRAPH.spine] - out.data[0, GRAPH.center_joint]
        assert abs(up[1]) < 1e-9 and up[2] > 0
        d_in = np.linalg.norm(seq.data[:, :, None] - seq.data[:, None], axis=-1)
        d_out = np.linalg.norm(out.data[:, :, None] - out.data[:, None], axis=-1)
        assert np.allclose(d_in, d_out, rtol=1e-9, atol=1e-12)

    def test_idempotent(self):
        seq = random_seq(t=8, seed=2)
        once = canonical_rotate(seq, GRAPH)
        twice = canonical_rotate(once, GRAPH)
        assert np.allclose(once.data, twice.data, atol=1e-10)

    def test_degenerate_pose_raises(self):
        data = np.zeros((3, 15, 3))
        with pytest.raises(DataError, match="degenerate"):
            canonical_rotate(seq_from(data), GRAPH)


class TestBones:
    def test_zero_joints_zero_bones(self):
        out = bone_features(seq_from(np.zeros((3, 15, 3))), GRAPH)
        assert np.array_equal(out.data, np.zeros((3, 15, 3)))

    def test_translation_invariance(self):
        seq = random_seq(seed=4)
        shifted = seq.with_data(seq.data + np.array([0.3, -0.1, 2.0]))
        assert np.allclose(bone_features(seq, GRAPH).data, bone_features(shifted, GRAPH).data)

    def test_rotation_equivariance(self):
        seq = random_seq(seed=8)
        r = rotation_about_z(0.77)
        rotated = seq.with_data(np.einsum("ij,tkj->tki", r, seq.data))
        bones_rot = bone_features(rotated, GRAPH).data
        rot_bones = np.einsum("ij,tkj->tki", r, bone_features(seq, GRAPH).data)
        assert np.allclose(bones_rot, rot_bones, atol=1e-12)

    def test_three_joint_chain_hand_oracle(self):
        from skelbyol.graphs import SkeletonGraph

        chain = SkeletonGraph(3, ((1, 0), (2, 1)), 0, frozenset(), frozenset(), 0, 1, 1)
        data = np.array([[[0.0, 0, 0], [1, 0, 0], [1, 1, 0]]])
        out = bone_features(seq_from(data), chain)
        assert np.allclose(out.data[0], [[0, 0, 0], [1, 0, 0], [0, 1, 0]])

    def test_root_bone_zero(self):
        out = bone_features(random_seq(seed=9), GRAPH)
        assert np.array_equal(out.data[:, GRAPH.center_joint], np.zeros((12, 3)))


class TestConcat:
    def test_joint_channels_bit_equal(self):
        seq = random_seq(seed=10)
        out = concat_joint_bone(seq, GRAPH)
        assert out.channels == 6
        assert out.data[:, :, :3].tobytes() == seq.data.tobytes()

    def test_zero_seq(self):
        out = concat_joint_bone(seq_from(np.zeros((2, 15, 3))), GRAPH)
        assert np.array_equal(out.data, np.zeros((2, 15, 6)))

    def test_bone_channels_match_oracle(self):
        seq = random_seq(seed=12)
        out = concat_joint_bone(seq, GRAPH)
        assert np.array_equal(out.data[:, :, 3:], bone_features(seq, GRAPH).data)
