import typing as T

import numpy as np
from scipy.spatial.transform import Rotation
from zenlog import log as logging

from modsynth.errors import DimensionMismatch
from modsynth.modlib import Assembly, JointSpec
from modsynth.utils import homogeneous, rotationAbout


ZERO_ANGLE = 1e-12


class Pose:
    ''' a position and an orientation, the orientation stored as a unit quaternion (x, y, z, w) '''

    def __init__(self, p, n: Rotation) -> None:
        self.p = np.asarray(p, dtype=float)
        quat = n.as_quat()
        self.quat = quat / np.linalg.norm(quat)

    @property
    def n(self) -> Rotation:
        return Rotation.from_quat(self.quat)

    @staticmethod
    def fromMatrix(t: np.ndarray) -> 'Pose':
        return Pose(t[:3, 3], Rotation.from_matrix(t[:3, :3]))

    def matrix(self) -> np.ndarray:
        return homogeneous(self.n.as_matrix(), self.p)

    def __repr__(self) -> str:
        return f'<pose p={np.round(self.p, 4).tolist()} q={np.round(self.quat, 4).tolist()}>'


class AxisAngle:
    ''' a rotation as a unit axis e and an angle theta in [0, pi] '''

    def __init__(self, e: np.ndarray, theta: float) -> None:
        self.e = e
        self.theta = theta


def rot(n1: Rotation, n2: Rotation) -> AxisAngle:
    ''' the rotation from n1 to n2, n1^-1 * n2, in axis-angle form '''
    rotvec = (n1.inv() * n2).as_rotvec()
    theta = float(np.linalg.norm(rotvec))
    if theta < ZERO_ANGLE:
        return AxisAngle(np.array([1.0, 0.0, 0.0]), 0.0)

    e = rotvec / theta
    if theta > np.pi:
        theta = 2.0 * np.pi - theta
        e = -e
    return AxisAngle(e, min(theta, np.pi))


def checkDims(assembly: Assembly, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (assembly.nJ,):
        raise DimensionMismatch(assembly.nJ, q.size)
    return q


def jointMotion(spec: JointSpec, qi: float) -> np.ndarray:
    if spec.kind == 'revolute':
        return homogeneous(rotationAbout(spec.axis, qi))
    return homogeneous(pos=spec.axis * qi)


def chainFrames(assembly: Assembly, q, base: np.ndarray = None) -> T.Tuple[T.List[np.ndarray], T.List[np.ndarray]]:
    ''' world frames of every joint, before (joint frame) and after its motion (link frame)

        @return (jointFrames, linkFrames)
    '''
    q = checkDims(assembly, q)
    root = np.eye(4) if base is None else base
    jointFrames = []
    linkFrames = []
    for i, joint in enumerate(assembly.joints):
        parent = root if joint.parent < 0 else linkFrames[joint.parent]
        jf = parent @ joint.static
        jointFrames.append(jf)
        linkFrames.append(jf @ jointMotion(joint.spec, q[i]))
    return (jointFrames, linkFrames)


def bodyFrames(assembly: Assembly, q, base: np.ndarray = None) -> T.List[np.ndarray]:
    ''' world frame of every body of the chain '''
    _, linkFrames = chainFrames(assembly, q, base)
    root = np.eye(4) if base is None else base
    return [(root if b.link < 0 else linkFrames[b.link]) @ b.offset for b in assembly.bodies]


def tcpFrame(assembly: Assembly, q, base: np.ndarray = None) -> np.ndarray:
    _, linkFrames = chainFrames(assembly, q, base)
    root = np.eye(4) if base is None else base
    return (root if assembly.tcpLink < 0 else linkFrames[assembly.tcpLink]) @ assembly.tcpOffset


def fk(assembly: Assembly, q, base: np.ndarray = None) -> Pose:
    ''' forward kinematics to the tool center point '''
    return Pose.fromMatrix(tcpFrame(assembly, q, base))


def _jacobianFromFrames(assembly: Assembly, jointFrames, tcp: np.ndarray) -> np.ndarray:
    ret = np.zeros((6, assembly.nJ))
    pTcp = tcp[:3, 3]
    for i, joint in enumerate(assembly.joints):
        a = jointFrames[i][:3, :3] @ joint.spec.axis
        if joint.spec.kind == 'revolute':
            ret[:3, i] = np.cross(a, pTcp - jointFrames[i][:3, 3])
            ret[3:, i] = a
        else:
            ret[:3, i] = a
    return ret


def jacobian(assembly: Assembly, q, base: np.ndarray = None) -> np.ndarray:
    ''' geometric jacobian of the TCP, in the world frame, linear part first '''
    q = checkDims(assembly, q)
    jointFrames, linkFrames = chainFrames(assembly, q, base)
    root = np.eye(4) if base is None else base
    tcp = (root if assembly.tcpLink < 0 else linkFrames[assembly.tcpLink]) @ assembly.tcpOffset
    return _jacobianFromFrames(assembly, jointFrames, tcp)


def manipulability(j: np.ndarray) -> float:
    ''' sqrt(det(J J^T)) '''
    return float(np.sqrt(max(np.linalg.det(j @ j.T), 0.0)))


def randomConfig(assembly: Assembly, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(assembly.qLower, assembly.qUpper)


def withinTolerance(tcp: Pose, goal: Pose, tol) -> bool:
    ''' the goal reached inequality on two poses: position ball and axis weighted angle box '''
    if np.linalg.norm(tcp.p - goal.p) > tol.tP:
        return False

    aa = rot(goal.n, tcp.n)
    return bool(np.all(aa.theta * np.abs(aa.e) <= tol.phi * np.asarray(tol.tAxis)))


class IkOptions:
    ''' numerical IK options '''

    def __init__(self, maxRestarts: int = 20, maxIterations: int = 150, damping: float = 1e-2) -> None:
        if maxRestarts < 1:
            raise ValueError('IK needs at least one attempt')
        self.maxRestarts = maxRestarts
        self.maxIterations = maxIterations
        self.damping = damping


class IkResult:
    ''' outcome of an IK search, with the residuals of the best attempt '''

    def __init__(self) -> None:
        self.q = None
        self.bestQ = None
        self.posError = np.inf
        self.angError = np.inf
        self.attempts = 0

    @property
    def success(self) -> bool:
        return self.q is not None


def _poseError(tcp: np.ndarray, goal: Pose, tol) -> np.ndarray:
    ''' 6D error toward the tolerance region of goal, expressed in the world frame '''
    ret = np.zeros(6)
    ret[:3] = goal.p - tcp[:3, 3]

    goalRot = goal.n.as_matrix()
    # orientation of the TCP seen from the goal frame
    v = Rotation.from_matrix(goalRot.T @ tcp[:3, :3]).as_rotvec()
    bound = 0.5 * tol.phi * np.asarray(tol.tAxis)
    excess = v - np.clip(v, -bound, bound)
    ret[3:] = -(goalRot @ excess)
    return ret


def _residuals(tcp: np.ndarray, goal: Pose) -> T.Tuple[float, float]:
    pos = float(np.linalg.norm(goal.p - tcp[:3, 3]))
    ang = rot(goal.n, Rotation.from_matrix(tcp[:3, :3])).theta
    return (pos, ang)


def ikSearch(assembly: Assembly, goal: Pose, tol, opts: IkOptions = None, rngSeed: int = 0,
             reject: T.Callable[[np.ndarray], bool] = None, base: np.ndarray = None,
             qInit: np.ndarray = None) -> IkResult:
    ''' damped least squares IK with random restarts, stopping as soon as the goal is reached

        @param reject: optional predicate, a configuration for which it is true is not a solution
        @param qInit: start configuration of the first attempt, random otherwise
    '''
    opts = opts or IkOptions()
    rng = np.random.default_rng(rngSeed)
    result = IkResult()
    root = np.eye(4) if base is None else base

    def tcpOf(q):
        jointFrames, linkFrames = chainFrames(assembly, q, root)
        tcp = (root if assembly.tcpLink < 0 else linkFrames[assembly.tcpLink]) @ assembly.tcpOffset
        return (jointFrames, tcp)

    def keepBest(q, tcp):
        pos, ang = _residuals(tcp, goal)
        if pos + ang < result.posError + result.angError:
            result.posError = pos
            result.angError = ang
            result.bestQ = q.copy()

    for attempt in range(opts.maxRestarts):
        result.attempts = attempt + 1
        if attempt == 0 and qInit is not None:
            q = assembly.clamp(np.asarray(qInit, dtype=float))
        else:
            q = randomConfig(assembly, rng)

        lam = opts.damping
        jointFrames, tcp = tcpOf(q)
        err = _poseError(tcp, goal, tol)
        errNorm = np.linalg.norm(err)

        for _ in range(opts.maxIterations):
            if withinTolerance(Pose.fromMatrix(tcp), goal, tol):
                break

            if assembly.nJ == 0:
                break

            j = _jacobianFromFrames(assembly, jointFrames, tcp)
            dq = j.T @ np.linalg.solve(j @ j.T + lam * lam * np.eye(6), err)
            qNew = assembly.clamp(q + dq)
            newFrames, newTcp = tcpOf(qNew)
            newErr = _poseError(newTcp, goal, tol)
            newNorm = np.linalg.norm(newErr)
            if newNorm < errNorm:
                q, jointFrames, tcp, err, errNorm = qNew, newFrames, newTcp, newErr, newNorm
                lam = max(lam / 2.0, 1e-9)
            else:
                lam = min(lam * 2.0, 1e6)

        keepBest(q, tcp)
        if not withinTolerance(Pose.fromMatrix(tcp), goal, tol):
            continue

        if reject is not None and reject(q):
            logging.debug(f'   IK attempt {attempt} reached the goal but the configuration was rejected')
            continue

        result.q = q
        result.bestQ = q.copy()
        result.posError, result.angError = _residuals(tcp, goal)
        return result

    return result


def ik(assembly: Assembly, goal: Pose, tol, opts: IkOptions = None, rngSeed: int = 0,
       reject: T.Callable[[np.ndarray], bool] = None, base: np.ndarray = None,
       qInit: np.ndarray = None) -> T.Optional[np.ndarray]:
    ''' returns a configuration in the joint limits reaching goal within tol, or None '''
    return ikSearch(assembly, goal, tol, opts, rngSeed, reject, base, qInit).q
