import numpy as np
import pytest
import torch

from physics.lattice import (
    IDENTITY,
    POINT_OPS,
    GroupElement,
    LatticeGeometry,
    apply_symmetry,
    apply_symmetry_to_field,
    compose,
    compute_orbits,
    enumerate_group,
    expand_kernel,
    inverse,
    orbit_of_pair,
    origin_orbit,
    site_permutation,
    translation_table,
)
from utils.errors import ValidationError


def brute_force_orbit_count(L):
    """Union of displacement images under all 8 point ops, by flood fill."""
    seen = set()
    count = 0
    for d in ((a, b) for a in range(L) for b in range(L)):
        if d in seen:
            continue
        count += 1
        for m in POINT_OPS:
            seen.add(((m[0][0] * d[0] + m[0][1] * d[1]) % L, (m[1][0] * d[0] + m[1][1] * d[1]) % L))
    return count


def random_element(rng, L):
    return GroupElement((int(rng.integers(L)), int(rng.integers(L))), int(rng.integers(8)))


class TestGeometry:
    def test_rejects_nonpositive_side(self):
        with pytest.raises(ValidationError):
            LatticeGeometry(0)

    def test_site_outside_lattice(self, geo4):
        with pytest.raises(ValidationError):
            geo4.check_site((4, 0))

    def test_single_site_lattice(self):
        geo = LatticeGeometry(1)
        assert geo.D == 1
        assert len(enumerate_group(geo)) == 8

    def test_site_index_is_row_major_and_periodic(self, geo4):
        assert geo4.site_index((0, 0)) == 0
        assert geo4.site_index((1, 2)) == 6
        assert geo4.site_index((3, 3)) == 15
        assert geo4.site_index((-1, 4)) == geo4.site_index((3, 0)) == 12

    def test_permutation_pulls_back_through_the_inverse(self, geo4):
        for g in enumerate_group(geo4)[::7]:
            src = site_permutation(g, geo4)
            g_inv = inverse(g, geo4)
            for x in [(0, 0), (1, 3), (2, 1), (3, 2)]:
                assert src[geo4.site_index(x)] == geo4.site_index(apply_symmetry(g_inv, x, geo4))


class TestGroup:
    def test_group_size(self, geo6):
        assert len(enumerate_group(geo6)) == 8 * 36

    def test_elements_act_distinctly(self, geo4):
        perms = {tuple(site_permutation(g, geo4)) for g in enumerate_group(geo4)}
        assert len(perms) == 8 * 16

    def test_compose_matches_sequential_action(self):
        geo = LatticeGeometry(5)
        rng = np.random.default_rng(0)
        for _ in range(50):
            g1, g2 = random_element(rng, 5), random_element(rng, 5)
            x = (int(rng.integers(5)), int(rng.integers(5)))
            assert apply_symmetry(compose(g1, g2, geo), x, geo) == apply_symmetry(
                g1, apply_symmetry(g2, x, geo), geo
            )

    def test_inverse(self):
        geo = LatticeGeometry(5)
        rng = np.random.default_rng(1)
        for _ in range(50):
            g = random_element(rng, 5)
            assert compose(g, inverse(g, geo), geo) == IDENTITY
            assert compose(inverse(g, geo), g, geo) == IDENTITY

    def test_field_action_is_a_homomorphism(self, geo4):
        rng = np.random.default_rng(2)
        phi = torch.from_numpy(rng.normal(size=(3, 4, 4)))
        for _ in range(20):
            g1, g2 = random_element(rng, 4), random_element(rng, 4)
            lhs = apply_symmetry_to_field(g1, apply_symmetry_to_field(g2, phi, geo4), geo4)
            rhs = apply_symmetry_to_field(compose(g1, g2, geo4), phi, geo4)
            assert torch.equal(lhs, rhs)

    def test_field_action_moves_values(self, geo4):
        phi = np.arange(16.0).reshape(4, 4)
        g = GroupElement((1, 0), 0)
        moved = apply_symmetry_to_field(g, phi, geo4)
        assert moved[1, 0] == phi[0, 0]

    def test_field_shape_checked(self, geo4):
        with pytest.raises(ValidationError):
            apply_symmetry_to_field(IDENTITY, np.zeros((3, 3)), geo4)


class TestOrbits:
    @pytest.mark.parametrize("L, expected", [(1, 1), (4, 6), (11, 21)])
    def test_orbit_counts(self, L, expected):
        table = compute_orbits(LatticeGeometry(L))
        assert table.orbit_count == expected
        assert brute_force_orbit_count(L) == expected

    @pytest.mark.parametrize("L", [2, 3, 6, 7])
    def test_orbit_counts_match_brute_force(self, L):
        assert compute_orbits(LatticeGeometry(L)).orbit_count == brute_force_orbit_count(L)

    def test_sizes_cover_lattice(self, geo6):
        table = compute_orbits(geo6)
        assert sum(table.sizes) == geo6.D

    def test_origin_is_its_own_orbit(self, geo6):
        table = compute_orbits(geo6)
        assert table.sizes[origin_orbit(table)] == 1

    def test_pair_orbit_invariant_under_group(self, geo6):
        table = compute_orbits(geo6)
        rng = np.random.default_rng(3)
        for _ in range(100):
            g = random_element(rng, 6)
            x = (int(rng.integers(6)), int(rng.integers(6)))
            y = (int(rng.integers(6)), int(rng.integers(6)))
            gx, gy = apply_symmetry(g, x, geo6), apply_symmetry(g, y, geo6)
            assert orbit_of_pair(gx, gy, table) == orbit_of_pair(x, y, table)

    def test_expanded_kernel_is_invariant(self, geo6):
        table = compute_orbits(geo6)
        rng = np.random.default_rng(4)
        kernel = expand_kernel(rng.normal(size=table.orbit_count), table)
        for _ in range(100):
            g = random_element(rng, 6)
            x = (int(rng.integers(6)), int(rng.integers(6)))
            y = (int(rng.integers(6)), int(rng.integers(6)))
            gx, gy = apply_symmetry(g, x, geo6), apply_symmetry(g, y, geo6)
            w = kernel[(y[0] - x[0]) % 6, (y[1] - x[1]) % 6]
            w_g = kernel[(gy[0] - gx[0]) % 6, (gy[1] - gx[1]) % 6]
            assert w == w_g

    def test_translation_table_is_trivial(self, geo4):
        table = translation_table(geo4)
        assert table.orbit_count == 16
        assert sorted(table.orbit_id.ravel().tolist()) == list(range(16))

    def test_expand_kernel_rejects_wrong_length(self, geo4):
        with pytest.raises(ValidationError):
            expand_kernel(np.zeros(3), compute_orbits(geo4))

    def test_expand_kernel_is_differentiable(self, geo4):
        table = compute_orbits(geo4)
        free = torch.ones(table.orbit_count, requires_grad=True)
        expand_kernel(free, table).sum().backward()
        assert torch.equal(free.grad, torch.tensor(table.sizes, dtype=free.dtype))
