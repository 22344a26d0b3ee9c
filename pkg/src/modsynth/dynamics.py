import typing as T

import numpy as np

from modsynth.errors import DimensionMismatch
from modsynth.kinematics import chainFrames, checkDims
from modsynth.modlib import Assembly


DEFAULT_GRAVITY = (0.0, 0.0, -9.81)
DEFAULT_DT_CHECK = 0.01


class DynState:
    ''' joint positions, velocities and accelerations plus the gravity vector '''

    def __init__(self, q, qd, qdd, gravity=DEFAULT_GRAVITY) -> None:
        self.q = np.asarray(q, dtype=float)
        self.qd = np.asarray(qd, dtype=float)
        self.qdd = np.asarray(qdd, dtype=float)
        self.gravity = np.asarray(gravity, dtype=float)


def _linkKinematics(assembly: Assembly, state: DynState, base: np.ndarray):
    ''' forward pass: angular velocity / acceleration and linear acceleration of every link origin,
        world frame, with gravity folded in as an upward base acceleration
    '''
    q = checkDims(assembly, state.q)
    for v in (state.qd, state.qdd):
        if v.shape != (assembly.nJ,):
            raise DimensionMismatch(assembly.nJ, v.size)

    jointFrames, linkFrames = chainFrames(assembly, q, base)
    root = np.eye(4) if base is None else base

    n = assembly.nJ
    omega = np.zeros((n, 3))
    alpha = np.zeros((n, 3))
    acc = np.zeros((n, 3))
    rootAcc = -state.gravity

    for i, joint in enumerate(assembly.joints):
        if joint.parent < 0:
            wP, aP, accP = np.zeros(3), np.zeros(3), rootAcc
            oP = root[:3, 3]
        else:
            wP, aP, accP = omega[joint.parent], alpha[joint.parent], acc[joint.parent]
            oP = linkFrames[joint.parent][:3, 3]

        axis = jointFrames[i][:3, :3] @ joint.spec.axis
        pJ = jointFrames[i][:3, 3]
        r = pJ - oP
        accJ = accP + np.cross(aP, r) + np.cross(wP, np.cross(wP, r))

        qd = state.qd[i]
        qdd = state.qdd[i]
        if joint.spec.kind == 'revolute':
            omega[i] = wP + qd * axis
            alpha[i] = aP + qdd * axis + np.cross(wP, qd * axis)
            acc[i] = accJ
        else:
            omega[i] = wP
            alpha[i] = aP
            d = linkFrames[i][:3, 3] - pJ
            acc[i] = (accJ + np.cross(aP, d) + np.cross(wP, np.cross(wP, d))
                      + 2.0 * np.cross(wP, qd * axis) + qdd * axis)

    return (jointFrames, linkFrames, omega, alpha, acc, root)


def inverseDynamics(assembly: Assembly, state: DynState, base: np.ndarray = None) -> np.ndarray:
    ''' joint torques / forces by recursive Newton-Euler over the assembly chain '''
    jointFrames, linkFrames, omega, alpha, acc, root = _linkKinematics(assembly, state, base)
    n = assembly.nJ

    # inertial wrench of every link, force and moment about the world origin
    linkForce = np.zeros((n, 3))
    linkMoment = np.zeros((n, 3))
    for cb in assembly.bodies:
        if cb.link < 0 or cb.body.mass == 0.0 and not np.any(cb.body.inertia):
            continue

        frame = linkFrames[cb.link] @ cb.offset
        rot = frame[:3, :3]
        c = frame[:3] @ np.append(cb.body.com, 1.0)
        o = linkFrames[cb.link][:3, 3]
        w = omega[cb.link]
        a = alpha[cb.link]
        rc = c - o
        accC = acc[cb.link] + np.cross(a, rc) + np.cross(w, np.cross(w, rc))

        inertia = rot @ cb.body.inertia @ rot.T
        force = cb.body.mass * accC
        moment = inertia @ a + np.cross(w, inertia @ w)
        linkForce[cb.link] += force
        linkMoment[cb.link] += moment + np.cross(c, force)

    # backward pass, accumulating descendants of every joint
    tau = np.zeros(n)
    childrenForce = np.zeros((n, 3))
    childrenMoment = np.zeros((n, 3))
    for i in range(n - 1, -1, -1):
        f = linkForce[i] + childrenForce[i]
        m = linkMoment[i] + childrenMoment[i]
        parent = assembly.joints[i].parent
        if parent >= 0:
            childrenForce[parent] += f
            childrenMoment[parent] += m

        axis = jointFrames[i][:3, :3] @ assembly.joints[i].spec.axis
        if assembly.joints[i].spec.kind == 'revolute':
            pJ = jointFrames[i][:3, 3]
            tau[i] = (m - np.cross(pJ, f)) @ axis
        else:
            tau[i] = f @ axis

    return tau


def gravityTorques(assembly: Assembly, q, gravity=DEFAULT_GRAVITY, base: np.ndarray = None) -> np.ndarray:
    zeros = np.zeros(assembly.nJ)
    return inverseDynamics(assembly, DynState(q, zeros, zeros, gravity), base)


def _bodyVelocity(assembly: Assembly, q, qd, base: np.ndarray = None):
    ''' yields (body, world frame, com velocity, angular velocity) using the joint axes directly '''
    q = checkDims(assembly, q)
    jointFrames, linkFrames = chainFrames(assembly, q, base)
    for cb in assembly.bodies:
        if cb.link < 0:
            continue
        frame = linkFrames[cb.link] @ cb.offset
        c = frame[:3] @ np.append(cb.body.com, 1.0)
        v = np.zeros(3)
        w = np.zeros(3)

        # walk the ancestors of the link
        j = cb.link
        while j >= 0:
            spec = assembly.joints[j].spec
            axis = jointFrames[j][:3, :3] @ spec.axis
            if spec.kind == 'revolute':
                w += qd[j] * axis
                v += qd[j] * np.cross(axis, c - jointFrames[j][:3, 3])
            else:
                v += qd[j] * axis
            j = assembly.joints[j].parent
        yield (cb.body, frame, v, w)


def kineticEnergy(assembly: Assembly, q, qd, base: np.ndarray = None) -> float:
    ret = 0.0
    for body, frame, v, w in _bodyVelocity(assembly, q, np.asarray(qd, dtype=float), base):
        rot = frame[:3, :3]
        inertia = rot @ body.inertia @ rot.T
        ret += 0.5 * body.mass * (v @ v) + 0.5 * (w @ inertia @ w)
    return float(ret)


def potentialEnergy(assembly: Assembly, q, gravity=DEFAULT_GRAVITY, base: np.ndarray = None) -> float:
    g = np.asarray(gravity, dtype=float)
    ret = 0.0
    _, linkFrames = chainFrames(assembly, checkDims(assembly, q), base)
    for cb in assembly.bodies:
        if cb.link < 0:
            continue
        frame = linkFrames[cb.link] @ cb.offset
        c = frame[:3] @ np.append(cb.body.com, 1.0)
        ret -= cb.body.mass * (g @ c)
    return float(ret)


def torqueFeasible(assembly: Assembly, trajectory, dtCheck: float = DEFAULT_DT_CHECK,
                   gravity=DEFAULT_GRAVITY, base: np.ndarray = None) -> bool:
    ''' checks |tau| <= tau_max on a dtCheck grid of the trajectory, end point included '''
    if dtCheck <= 0.0:
        raise ValueError('dtCheck must be > 0')

    for t in _checkTimes(trajectory.tMax, dtCheck):
        q, qd, qdd = trajectory.sample(t)
        tau = inverseDynamics(assembly, DynState(q, qd, qdd, gravity), base)
        if np.any(np.abs(tau) > assembly.tauMax):
            return False
    return True


def _checkTimes(tMax: float, dt: float) -> T.List[float]:
    n = int(np.floor(tMax / dt + 1e-9))
    ret = [i * dt for i in range(n + 1)]
    if tMax - ret[-1] > 1e-12:
        ret.append(tMax)
    return ret
