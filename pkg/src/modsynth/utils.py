import os
import typing as T

import numpy as np
from packaging.version import Version
from zenlog import log as logging


def checkModsynthVersion(cond: str, v: str) -> bool:
    ''' checks a condition like ">= 0.1.0" against version v '''
    tokens = cond.strip().split(' ', 2)
    if len(tokens) != 2:
        logging.error(f"invalid condition string {cond}")
        return False

    op = tokens[0]
    checkVersion = tokens[1]

    if op in ('=', '==',):
        return Version(v) == Version(checkVersion)

    if op in ('!', '!=',):
        return Version(v) != Version(checkVersion)

    if op == '<':
        return Version(v) < Version(checkVersion)

    if op == '<=':
        return Version(v) <= Version(checkVersion)

    if op == '>':
        return Version(v) > Version(checkVersion)

    if op == '>=':
        return Version(v) >= Version(checkVersion)

    logging.error(f"operation {op} not supported")
    return False


def findDataFile(fname: str, searchPaths: T.List[str]) -> str:
    ''' looks for a library or task file, first as given then in the search paths
        @param fname: a file name or a path
        @param searchPaths: directories to look into
        @return the path of the file or None
    '''
    if os.path.isfile(fname):
        return fname

    # an explicit path is not searched
    if fname.startswith('.') or fname.startswith('/'):
        return None

    candidates = [fname]
    if not fname.endswith('.json'):
        candidates.append(fname + '.json')

    for p in searchPaths:
        if not p:
            continue
        for c in candidates:
            fpath = os.path.join(p, c)
            if os.path.isfile(fpath):
                return fpath

    return None


def deriveSeed(*keys: int) -> int:
    ''' derives a child seed from a run seed and a path of integer keys
        (generation, individual, stage, ...)
    '''
    ss = np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


#
# rigid transforms, as 4x4 homogeneous numpy matrices
#

def translation(x: float, y: float, z: float) -> np.ndarray:
    ret = np.eye(4)
    ret[:3, 3] = (x, y, z)
    return ret


def rotationAbout(axis, angle: float) -> np.ndarray:
    ''' 3x3 rotation of angle around the unit vector axis (Rodrigues) '''
    a = np.asarray(axis, dtype=float)
    kx = np.array([
        [0.0, -a[2], a[1]],
        [a[2], 0.0, -a[0]],
        [-a[1], a[0], 0.0],
    ])
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def homogeneous(rot: np.ndarray = None, pos=None) -> np.ndarray:
    ret = np.eye(4)
    if rot is not None:
        ret[:3, :3] = rot
    if pos is not None:
        ret[:3, 3] = pos
    return ret


def rotX(angle: float) -> np.ndarray:
    return homogeneous(rotationAbout((1.0, 0.0, 0.0), angle))


def rotY(angle: float) -> np.ndarray:
    return homogeneous(rotationAbout((0.0, 1.0, 0.0), angle))


def rotZ(angle: float) -> np.ndarray:
    return homogeneous(rotationAbout((0.0, 0.0, 1.0), angle))


def invertTransform(t: np.ndarray) -> np.ndarray:
    ret = np.eye(4)
    rt = t[:3, :3].T
    ret[:3, :3] = rt
    ret[:3, 3] = -rt @ t[:3, 3]
    return ret


def transformFromList(value, what: str = 'transform') -> np.ndarray:
    ''' reads a 4x4 row-major homogeneous transform '''
    ret = np.asarray(value, dtype=float)
    if ret.shape != (4, 4):
        raise ValueError(f'{what} must be a 4x4 matrix, got shape {ret.shape}')

    if not np.allclose(ret[3], (0.0, 0.0, 0.0, 1.0)):
        raise ValueError(f'{what} last row must be [0, 0, 0, 1]')

    rot = ret[:3, :3]
    if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6) or np.linalg.det(rot) < 0:
        raise ValueError(f'{what} rotation part is not a proper rotation')
    return ret


def transformToList(t: np.ndarray) -> T.List[T.List[float]]:
    return [[float(x) for x in row] for row in t]
