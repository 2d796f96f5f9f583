"""Independent reference implementations used only by the tests."""

import numpy as np

from ztrobot.chain import FixedLink, Module, Revolute


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s, 0], [0, 1, 0, 0], [-s, 0, c, 0], [0, 0, 0, 1.0]])


def trans(v):
    m = np.eye(4)
    m[:3, 3] = v
    return m


def axis_angle(axis, a):
    k = np.asarray(axis, float)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    m = np.eye(4)
    m[:3, :3] = np.eye(3) + np.sin(a) * kx + (1 - np.cos(a)) * kx @ kx
    return m


def module_matrix(q1, q2, r, alpha):
    """Platform pose from motor angles, built as Rz(phi) Ry(theta) Rz(-phi) plus offset.

    theta comes from the closed form -2 atan(tan(alpha) sin((q1 - q2) / 2)).
    """
    phi = (q1 + q2 - np.pi) / 2
    theta = -2.0 * np.arctan(np.tan(alpha) * np.sin((q1 - q2) / 2))
    m = rot_z(phi) @ rot_y(theta) @ rot_z(-phi)
    m[:3, 3] = r * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), 1 + np.cos(theta)])
    return m


def chain_matrix(model, q):
    """Homogeneous-matrix product along the chain."""
    m = np.eye(4)
    i = 0
    for s in model.segments:
        if isinstance(s, Module):
            m = m @ module_matrix(q[i], q[i + 1], s.params.r, s.params.alpha)
        elif isinstance(s, FixedLink):
            m = m @ trans(s.offset)
        elif isinstance(s, Revolute):
            m = m @ axis_angle(s.axis, q[i])
        i += s.dof
    return m @ model.tool.matrix


def numeric_jacobian(model, q, h=1e-6):
    """Central differences of the chain pose; angular part from dR R^T."""
    n = model.n
    j = np.zeros((6, n))
    for i in range(n):
        dq = np.zeros(n)
        dq[i] = h
        a = chain_matrix(model, q + dq)
        b = chain_matrix(model, q - dq)
        j[:3, i] = (a[:3, 3] - b[:3, 3]) / (2 * h)
        r = chain_matrix(model, q)[:3, :3]
        w = ((a[:3, :3] - b[:3, :3]) / (2 * h)) @ r.T
        j[3:, i] = [w[2, 1], w[0, 2], w[1, 0]]
    return j


def nullspace(a, tol=1e-12):
    u, s, vt = np.linalg.svd(a)
    rank = int(np.sum(s > tol))
    return vt[rank:].T


def two_stage_lsq(j1, x1, j2, x2):
    """Level 2 solved over the exact solution set of level 1."""
    q1 = np.linalg.pinv(j1) @ x1
    n = nullspace(j1)
    if n.shape[1] == 0:
        return q1
    z = np.linalg.lstsq(j2 @ n, x2 - j2 @ q1, rcond=None)[0]
    return q1 + n @ z
