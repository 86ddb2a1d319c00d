import math

import numpy as np
import pytest
from scipy.sparse.linalg import splu

from mixeddg import (
    build_dofmap,
    build_face_topology,
    build_uniform_tri,
    evaluate_field,
)
from mixeddg.forms import (
    MaterialParams,
    StabilizationParams,
    assemble_system,
    c11_on_face,
    c22_on_face,
    compliance_apply,
    exact_residual,
    form_a_direct,
    form_b_direct,
    form_c_direct,
    jump_avg_kernels,
    stiffness_apply,
)
from mixeddg.mesh import Face
from mixeddg.spaces import (
    STRESS_COMPONENTS,
    FieldCoeffs,
    evaluate_displacement_gradient,
    stress_unit_tensors,
)

BOX2 = ((-1.0, 1.0), (-1.0, 1.0))
MAT2 = MaterialParams(0.3, 0.35, 2)
MAT3 = MaterialParams(0.3, 0.35, 3)


def voigt_stiffness_matrix(mat):
    """Dense stiffness acting on independent components; inverse is the oracle
    for compliance_apply."""
    comps = STRESS_COMPONENTS[mat.dim]
    E = stress_unit_tensors(mat.dim)
    n = len(comps)
    C = np.zeros((n, n))
    for b in range(n):
        # strain with eps_{ij} = eps_{ji} = 1 for the off-diagonal pair
        eps = E[b].copy()
        sig = stiffness_apply(eps, mat)
        for a, (i, j) in enumerate(comps):
            C[a, b] = sig[i, j]
    return C


class TestComplianceStiffness:
    @pytest.mark.parametrize("mat", [MAT2, MAT3])
    def test_identity_tensor(self, mat):
        d = mat.dim
        out = compliance_apply(np.eye(d), mat)
        assert out == pytest.approx(np.eye(d) / (d * mat.lam + 2 * mat.mu), rel=1e-14)

    def test_pure_shear(self):
        sig = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert compliance_apply(sig, MAT2) == pytest.approx(sig / (2 * MAT2.mu),
                                                            rel=1e-14)

    def test_zero_strain(self):
        assert np.all(stiffness_apply(np.zeros((2, 2)), MAT2) == 0)

    def test_identity_strain_2d(self):
        out = stiffness_apply(np.eye(2), MAT2)
        assert out == pytest.approx((2 * MAT2.mu + 2 * MAT2.lam) * np.eye(2),
                                    rel=1e-14)

    @pytest.mark.parametrize("mat", [MAT2, MAT3])
    def test_inverse_roundtrip_against_voigt_oracle(self, mat, rng):
        comps = STRESS_COMPONENTS[mat.dim]
        C = voigt_stiffness_matrix(mat)
        Cinv = np.linalg.inv(C)
        for _ in range(100):
            eps = rng.randn(mat.dim, mat.dim)
            eps = 0.5 * (eps + eps.T)
            sig = stiffness_apply(eps, mat)
            # componentwise oracle for the compliance
            sig_comp = np.array([sig[i, j] for (i, j) in comps])
            eps_oracle_comp = Cinv @ sig_comp
            eps_oracle = np.zeros((mat.dim, mat.dim))
            for a, (i, j) in enumerate(comps):
                eps_oracle[i, j] = eps_oracle[j, i] = eps_oracle_comp[a]
            assert compliance_apply(sig, mat) == pytest.approx(eps_oracle, abs=1e-13)
            assert compliance_apply(sig, mat) == pytest.approx(eps, abs=1e-13)

    def test_material_validation(self):
        with pytest.raises(ValueError):
            MaterialParams(0.0, 0.35, 2)
        with pytest.raises(ValueError):
            MaterialParams(0.3, -1.0, 2)


class _StubMesh:
    def __init__(self, diameters):
        self.diameters = np.asarray(diameters)


def _stub_face(interior=True):
    n = np.array([1.0, 0.0])
    return Face(vertices=(0, 1), measure=1.0, normal=n, plus_cell=0,
                plus_local=0, minus_cell=1 if interior else -1,
                minus_local=0 if interior else -1)


class TestPenalties:
    def test_c11_interior_min(self, two_tri):
        mesh2, _ = two_tri
        dm = build_dofmap(mesh2, 1, 1)
        stab = StabilizationParams(alpha1=-1.0, alpha2=0.0)
        val = c11_on_face(_stub_face(), _StubMesh([0.5, 0.25]), dm, stab)
        assert val == pytest.approx(2.0, rel=1e-14)

    def test_c11_constant(self, two_tri):
        mesh2, _ = two_tri
        dm = build_dofmap(mesh2, 1, 1)
        stab = StabilizationParams(alpha1=0.0, alpha2=0.0)
        for h in ([0.5, 0.25], [2.0, 2.0]):
            assert c11_on_face(_stub_face(), _StubMesh(h), dm, stab) == 1.0

    def test_c11_p_scaling(self, two_tri):
        mesh2, _ = two_tri
        dm = build_dofmap(mesh2, 2, 2)
        stab = StabilizationParams(alpha1=0.0, alpha2=-1.0)
        assert c11_on_face(_stub_face(), _StubMesh([1.0, 1.0]), dm, stab) == 3.0

    def test_c22_linear_h(self, two_tri):
        mesh2, _ = two_tri
        dm = build_dofmap(mesh2, 1, 1)
        stab = StabilizationParams(beta1=1.0, beta2=0.0)
        val = c22_on_face(_stub_face(), _StubMesh([0.25, 0.25]), dm, stab)
        assert val == pytest.approx(0.25, rel=1e-14)

    def test_c22_zero_flag(self, two_tri):
        mesh2, _ = two_tri
        dm = build_dofmap(mesh2, 1, 1)
        stab = StabilizationParams(eta=0.0)
        assert stab.c22_zero
        assert c22_on_face(_stub_face(), _StubMesh([0.25, 0.25]), dm, stab) == 0.0

    def test_c22_out_of_theory(self, two_tri):
        mesh2, _ = two_tri
        dm = build_dofmap(mesh2, 1, 1)
        stab = StabilizationParams(beta1=-1.0, beta2=0.0, allow_out_of_theory=True)
        val = c22_on_face(_stub_face(), _StubMesh([0.25, 0.25]), dm, stab)
        assert val == pytest.approx(4.0, rel=1e-14)

    def test_c22_on_boundary_rejected(self, two_tri):
        mesh2, _ = two_tri
        dm = build_dofmap(mesh2, 1, 1)
        stab = StabilizationParams()
        with pytest.raises(ValueError, match="interior"):
            c22_on_face(_stub_face(interior=False), _StubMesh([0.25]), dm, stab)

    def test_exponent_ranges_enforced(self):
        with pytest.raises(ValueError, match="alpha"):
            StabilizationParams(alpha1=-2.0)
        with pytest.raises(ValueError, match="beta"):
            StabilizationParams(beta1=-1.0)
        StabilizationParams(beta1=-1.0, allow_out_of_theory=True)
        with pytest.raises(ValueError):
            StabilizationParams(zeta=0.0)
        with pytest.raises(ValueError):
            StabilizationParams(eta=-0.5)

    def test_min_is_order_free(self, two_tri):
        mesh2, _ = two_tri
        dm = build_dofmap(mesh2, 1, 1)
        stab = StabilizationParams()
        a = c11_on_face(_stub_face(), _StubMesh([0.5, 0.25]), dm, stab)
        b = c11_on_face(_stub_face(), _StubMesh([0.25, 0.5]), dm, stab)
        assert a == b


class TestJumpAverageKernels:
    def test_continuous_field_has_zero_jumps(self, rng):
        n = np.array([0.6, 0.8])
        v = rng.randn(5, 2)
        ker = jump_avg_kernels(n, v_plus=v, v_minus=v)
        assert np.abs(ker["jump_v"]).max() == 0.0
        assert np.abs(ker["mjump_v"]).max() == 0.0
        assert ker["avg_v"] == pytest.approx(v)

    def test_normal_valued_field(self):
        n = np.array([0.0, 1.0])
        v = np.broadcast_to(n, (3, 2))
        ker = jump_avg_kernels(n, v_plus=v, v_minus=v)
        assert ker["avg_v"] == pytest.approx(v)
        assert np.abs(ker["jump_v"]).max() == 0.0

    def test_boundary_matrix_jump(self):
        n = np.array([0.0, 1.0])
        v = np.array([[1.0, 0.0]])
        ker = jump_avg_kernels(n, v_plus=v)
        assert ker["mjump_v"][0] == pytest.approx(
            np.array([[0.0, 0.5], [0.5, 0.0]]), abs=1e-15)

    def test_tensor_jump_boundary(self):
        n = np.array([1.0, 0.0])
        tau = np.array([[[2.0, 1.0], [1.0, -1.0]]])
        ker = jump_avg_kernels(n, tau_plus=tau)
        assert ker["jump_tau"][0] == pytest.approx(np.array([2.0, 1.0]))
        assert ker["avg_tau"] == pytest.approx(tau)


def _discrete_evals(mesh, coeffs):
    def tau(c, x):
        _, s = evaluate_field(coeffs, c, mesh.cell_ref_coords(c, x))
        return s

    def v(c, x):
        u, _ = evaluate_field(coeffs, c, mesh.cell_ref_coords(c, x))
        return u

    def grad_v(c, x):
        return evaluate_displacement_gradient(coeffs, mesh, c, mesh.cell_ref_coords(c, x))

    return tau, v, grad_v


def quadratic_form_direct(mesh, topo, dofmap, mat, stab, coeffs, exactness):
    """A(t,v;t,v) by direct quadrature of all four forms."""
    tau, v, grad_v = _discrete_evals(mesh, coeffs)
    a = form_a_direct(mesh, topo, dofmap, mat, stab, tau, tau, exactness)
    b = form_b_direct(mesh, topo, v, grad_v, tau, exactness)
    c = form_c_direct(mesh, topo, dofmap, stab, v, v, exactness)
    return a + b - b + c, abs(a) + 2 * abs(b) + abs(c)


class TestAssembly:
    def test_block_diagonal_stress_block_when_c22_zero(self, two_tri, case2d):
        mesh, topo = two_tri
        dm = build_dofmap(mesh, 1, 1)
        stab = StabilizationParams(eta=0.0)
        system = assemble_system(mesh, topo, dm, case2d.material, stab, case2d.f)
        off_diag = system.Aa[:9, 9:].toarray()
        assert np.abs(off_diag).max() == 0.0

    @pytest.mark.parametrize("stab", [
        StabilizationParams(),
        StabilizationParams(alpha1=0.0, beta1=0.0),
        StabilizationParams(eta=0.0),
    ])
    def test_blocks_symmetric(self, case2d, stab):
        mesh = build_uniform_tri(2, BOX2)
        topo = build_face_topology(mesh)
        dm = build_dofmap(mesh, 1, 1)
        system = assemble_system(mesh, topo, dm, case2d.material, stab, case2d.f)
        for M in (system.Aa, system.Cc):
            diff = (M - M.T).toarray()
            scale = np.abs(M.toarray()).max()
            assert np.abs(diff).max() <= 1e-12 * scale

    def test_quadratic_form_identity(self, case2d, rng):
        mesh = build_uniform_tri(2, BOX2)
        topo = build_face_topology(mesh)
        dm = build_dofmap(mesh, 1, 1)
        stab = StabilizationParams()
        system = assemble_system(mesh, topo, dm, case2d.material, stab, case2d.f)
        exactness = 2 * max(dm.k, dm.l) + 2
        for _ in range(5):
            x = rng.randn(dm.total_dofs)
            coeffs = FieldCoeffs(dm, x)
            xs, xu = x[:dm.n_stress_dofs], x[dm.n_stress_dofs:]
            block_val = xs @ (system.Aa @ xs) + xu @ (system.Cc @ xu)
            direct, scale = quadratic_form_direct(
                mesh, topo, dm, case2d.material, stab, coeffs, exactness)
            assert abs(direct - block_val) <= 1e-11 * max(scale, 1.0)

    def test_stress_block_positive_definite(self, case2d, rng):
        # up to 512 cells: factorization succeeds and Rayleigh quotients stay positive
        mesh = build_uniform_tri(16, BOX2)
        topo = build_face_topology(mesh)
        dm = build_dofmap(mesh, 1, 1)
        system = assemble_system(
            mesh, topo, dm, case2d.material, StabilizationParams(), case2d.f)
        lu = splu(system.Aa.tocsc())
        assert lu.nnz > 0
        for _ in range(20):
            z = rng.randn(dm.n_stress_dofs)
            assert z @ (system.Aa @ z) > 0

    def test_displacement_block_psd(self, case2d, rng):
        mesh = build_uniform_tri(4, BOX2)
        topo = build_face_topology(mesh)
        dm = build_dofmap(mesh, 1, 1)
        system = assemble_system(
            mesh, topo, dm, case2d.material, StabilizationParams(), case2d.f)
        for _ in range(20):
            z = rng.randn(dm.n_disp_dofs)
            assert z @ (system.Cc @ z) >= -1e-12 * np.abs(z).max()


class TestConsistency:
    @pytest.mark.parametrize("k,l", [(1, 1), (1, 0), (2, 2)])
    def test_exact_solution_residual_vanishes(self, case2d, k, l):
        mesh = build_uniform_tri(4, BOX2)
        topo = build_face_topology(mesh)
        dm = build_dofmap(mesh, k, l)
        stab = StabilizationParams()
        r, rhs = exact_residual(mesh, topo, dm, case2d.material, stab,
                                case2d.sigma, case2d.u, case2d.grad_u, case2d.f)
        scale = 1.0 + np.abs(rhs).max()
        assert np.abs(r).max() <= 1e-8 * scale
