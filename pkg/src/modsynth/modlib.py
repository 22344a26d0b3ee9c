import json
import typing as T

import numpy as np
from zenlog import log as logging

from modsynth.errors import ConnectorMismatch, InvalidStructure, LibraryFormatError
from modsynth.primitives import CollisionPrimitive
from modsynth.utils import invertTransform, rotX, transformFromList, transformToList


MODULE_KINDS = ('base', 'regular', 'end_effector',)
JOINT_KINDS = ('revolute', 'prismatic',)
EMPTY_GENE = 0

# mating flips the proximal frame around its x axis: z axes anti-parallel, x axes coincide
MATING_FLIP = rotX(np.pi)


class ConnectorType:
    ''' a connector type, two connectors mate iff their types are equal '''

    def __init__(self, typeId: str, sizeClass: str = None) -> None:
        self.id = typeId
        self.sizeClass = sizeClass

    def __eq__(self, other) -> bool:
        return isinstance(other, ConnectorType) and self.id == other.id

    def __hash__(self) -> int:
        return hash(self.id)

    def __repr__(self) -> str:
        return f'<connector {self.id}>'


class Connector:
    ''' a typed connector attached to a body of a module '''

    def __init__(self, ctype: ConnectorType, gender: str, frame: np.ndarray) -> None:
        '''
            @param ctype: the connector type
            @param gender: proximal or distal
            @param frame: pose of the connector relative to the body it is attached to,
                          z pointing away from the body
        '''
        self.ctype = ctype
        self.gender = gender
        self.frame = frame


class Body:
    ''' a rigid body, possibly empty (no mass, no geometry) '''

    def __init__(self, mass: float = 0.0, com=(0.0, 0.0, 0.0), inertia=None,
                 geometry: T.List[CollisionPrimitive] = None) -> None:
        if mass < 0.0:
            raise ValueError('body mass must be >= 0')

        self.mass = float(mass)
        self.com = np.asarray(com, dtype=float)
        self.inertia = np.zeros((3, 3)) if inertia is None else np.asarray(inertia, dtype=float)
        self.geometry = geometry or []

        if self.inertia.shape != (3, 3) or not np.allclose(self.inertia, self.inertia.T, atol=1e-12):
            raise ValueError('body inertia must be a symmetric 3x3 matrix')
        if np.min(np.linalg.eigvalsh(self.inertia)) < -1e-12:
            raise ValueError('body inertia must be positive semi-definite')

    @property
    def isEmpty(self) -> bool:
        return self.mass == 0.0 and not self.geometry


class JointSpec:
    ''' a joint between two consecutive bodies of a module '''

    def __init__(self, kind: str, axis, parentFrame: np.ndarray, childFrame: np.ndarray,
                 qLimits, qdLimits, qddLimits, tauMax: float) -> None:
        '''
            @param kind: revolute or prismatic
            @param axis: unit axis, expressed in the joint frame
            @param parentFrame: joint frame relative to the parent body
            @param childFrame: child body frame relative to the moved joint frame
            @param qLimits: [lo, hi] position limits (rad or m)
            @param qdLimits: [lo, hi] velocity limits, lo < 0 < hi
            @param qddLimits: [lo, hi] acceleration limits, lo < 0 < hi
            @param tauMax: torque or force limit, > 0
        '''
        if kind not in JOINT_KINDS:
            raise ValueError(f'unknown joint kind {kind}')

        self.kind = kind
        self.axis = np.asarray(axis, dtype=float)
        self.parentFrame = parentFrame
        self.childFrame = childFrame
        self.qLimits = (float(qLimits[0]), float(qLimits[1]))
        self.qdLimits = (float(qdLimits[0]), float(qdLimits[1]))
        self.qddLimits = (float(qddLimits[0]), float(qddLimits[1]))
        self.tauMax = float(tauMax)

        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ValueError('joint axis must have unit norm')
        if self.qLimits[0] > self.qLimits[1]:
            raise ValueError('joint q limits must satisfy lo <= hi')
        if not self.qdLimits[0] < 0.0 < self.qdLimits[1]:
            raise ValueError('joint velocity limits must satisfy lo < 0 < hi')
        if not self.qddLimits[0] < 0.0 < self.qddLimits[1]:
            raise ValueError('joint acceleration limits must satisfy lo < 0 < hi')
        if self.tauMax <= 0.0:
            raise ValueError('joint torque limit must be > 0')


class Module:
    ''' a robot module: b bodies chained by b - 1 joints, one proximal and one distal connector '''

    def __init__(self, moduleId: int, name: str, kind: str, bodies: T.List[Body], joints: T.List[JointSpec],
                 proximal: Connector, distal: Connector) -> None:
        if moduleId <= 0:
            raise ValueError(f'module id must be a positive integer, got {moduleId}')
        if kind not in MODULE_KINDS:
            raise ValueError(f'unknown module kind {kind}')
        if len(bodies) < 1:
            raise ValueError(f'module {name} has no body')
        if len(joints) != len(bodies) - 1:
            raise ValueError(f'module {name} has {len(bodies)} bodies but {len(joints)} joints')

        self.id = moduleId
        self.name = name
        self.kind = kind
        self.bodies = bodies
        self.joints = joints
        self.proximal = proximal
        self.distal = distal

    @property
    def hasJoint(self) -> bool:
        return len(self.joints) > 0

    @property
    def connectorPair(self) -> T.Tuple[str, str]:
        return (self.proximal.ctype.id, self.distal.ctype.id)

    def __repr__(self) -> str:
        return f'<module {self.id}:{self.name}>'


def canConnect(a: Module, b: Module) -> bool:
    ''' tells if module b can be plugged on the distal connector of module a '''
    if a.kind == 'end_effector' or b.kind == 'base':
        return False
    return a.distal.ctype == b.proximal.ctype


class ModuleLibrary:
    ''' the set of available modules, indexed by gene values 1..|M| '''

    def __init__(self, modules: T.List[Module], connectorTypes: T.List[ConnectorType] = None) -> None:
        ids = [m.id for m in modules]
        if len(set(ids)) != len(ids):
            raise LibraryFormatError('module ids are not unique')

        self.modules = sorted(modules, key=lambda m: m.id)
        self.connectorTypes = connectorTypes or []
        self.byId = {m.id: m for m in self.modules}

        # gene 0 is the empty slot, genes 1..|M| follow the id order
        self.geneToId = {i + 1: m.id for i, m in enumerate(self.modules)}
        self.idToGene = {m.id: i + 1 for i, m in enumerate(self.modules)}

    def __len__(self) -> int:
        return len(self.modules)

    def get(self, moduleId: int) -> Module:
        ret = self.byId.get(moduleId)
        if ret is None:
            raise KeyError(f'no module with id {moduleId} in library')
        return ret

    def moduleForGene(self, gene: int) -> Module:
        return self.byId[self.geneToId[gene]]

    def bases(self) -> T.List[Module]:
        return [m for m in self.modules if m.kind == 'base']

    def endEffectors(self) -> T.List[Module]:
        return [m for m in self.modules if m.kind == 'end_effector']

    def regulars(self) -> T.List[Module]:
        return [m for m in self.modules if m.kind == 'regular']

    def checkOptimizable(self) -> bool:
        ''' a library usable for optimization has at least a base and an end effector '''
        if not self.bases():
            logging.error('module library has no base module')
            return False
        if not self.endEffectors():
            logging.error('module library has no end effector module')
            return False
        return True


class ChainJoint:
    ''' a joint of the flattened chain '''

    def __init__(self, spec: JointSpec, static: np.ndarray, parent: int, moduleIndex: int) -> None:
        '''
            @param spec: the joint spec
            @param static: transform from the parent link frame to the joint frame
            @param parent: index of the previous joint, -1 for the base
            @param moduleIndex: index of the owning module in the assembly
        '''
        self.spec = spec
        self.static = static
        self.parent = parent
        self.moduleIndex = moduleIndex


class ChainBody:
    ''' a body of the flattened chain, rigidly attached to the link of joint `link` '''

    def __init__(self, body: Body, link: int, offset: np.ndarray, moduleIndex: int) -> None:
        self.body = body
        self.link = link
        self.offset = offset
        self.moduleIndex = moduleIndex


class Assembly:
    ''' a validated base-to-end-effector module sequence and its derived chain '''

    def __init__(self, modules: T.List[Module]) -> None:
        self.modules = modules
        self.joints: T.List[ChainJoint] = []
        self.bodies: T.List[ChainBody] = []
        self.tcpOffset = np.eye(4)
        self._buildChain()

        self.qLower = np.array([j.spec.qLimits[0] for j in self.joints])
        self.qUpper = np.array([j.spec.qLimits[1] for j in self.joints])
        self.qdLower = np.array([j.spec.qdLimits[0] for j in self.joints])
        self.qdUpper = np.array([j.spec.qdLimits[1] for j in self.joints])
        self.qddLower = np.array([j.spec.qddLimits[0] for j in self.joints])
        self.qddUpper = np.array([j.spec.qddLimits[1] for j in self.joints])
        self.tauMax = np.array([j.spec.tauMax for j in self.joints])

    def _buildChain(self) -> None:
        # pending is the current frame relative to the output frame of the last joint (or the base)
        pending = np.eye(4)
        link = -1
        for mi, module in enumerate(self.modules):
            if mi == 0:
                # the proximal connector of the base is the reference frame
                bodyFrame = invertTransform(module.proximal.frame)
            else:
                bodyFrame = pending @ MATING_FLIP @ invertTransform(module.proximal.frame)

            for bi, body in enumerate(module.bodies):
                self.bodies.append(ChainBody(body, link, bodyFrame, mi))
                if bi < len(module.joints):
                    spec = module.joints[bi]
                    self.joints.append(ChainJoint(spec, bodyFrame @ spec.parentFrame, link, mi))
                    link = len(self.joints) - 1
                    bodyFrame = spec.childFrame

            pending = bodyFrame @ module.distal.frame

        self.tcpOffset = pending
        self.tcpLink = link

    @property
    def nJ(self) -> int:
        return len(self.joints)

    @property
    def nM(self) -> int:
        return len(self.modules)

    @property
    def ids(self) -> T.Tuple[int, ...]:
        return tuple(m.id for m in self.modules)

    def inLimits(self, q: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(np.all(q >= self.qLower - tol) and np.all(q <= self.qUpper + tol))

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.qLower, self.qUpper)

    def revalidate(self) -> None:
        ''' checks again all the assembly invariants '''
        checkStructure(self.modules)
        if self.nJ != sum(len(m.joints) for m in self.modules):
            raise InvalidStructure('derived joint count differs from the module joint count')

    def __repr__(self) -> str:
        return f'<assembly {"-".join(m.name for m in self.modules)}>'


def checkStructure(modules: T.List[Module]) -> None:
    ''' raises if the sequence is not base - regular* - end effector or a junction doesn't mate '''
    if not modules:
        raise InvalidStructure('empty module sequence')
    if modules[0].kind != 'base':
        raise InvalidStructure(f'first module {modules[0].name} is not a base')
    if modules[-1].kind != 'end_effector':
        raise InvalidStructure(f'last module {modules[-1].name} is not an end effector')
    if len(modules) < 2:
        raise InvalidStructure('an assembly needs at least a base and an end effector')
    for m in modules[1:-1]:
        if m.kind != 'regular':
            raise InvalidStructure(f'interior module {m.name} is a {m.kind}')

    for i in range(len(modules) - 1):
        if not canConnect(modules[i], modules[i + 1]):
            raise ConnectorMismatch(i, f'{modules[i].name} can not be connected to {modules[i + 1].name}')


def assemble(library: ModuleLibrary, ids: T.Sequence[int]) -> Assembly:
    ''' builds a validated assembly from a sequence of module ids '''
    if not ids:
        raise InvalidStructure('empty module sequence')

    modules = [library.get(i) for i in ids]
    checkStructure(modules)
    return Assembly(modules)


def _connectorTransitions(library: ModuleLibrary):
    ''' regular modules as (proximal type, distal type) transitions '''
    ret = {}
    for m in library.regulars():
        key = m.connectorPair
        ret[key] = ret.get(key, 0) + 1
    return ret


def countCompositions(library: ModuleLibrary, maxLen: int, constrained: bool, minLen: int = 1) -> int:
    ''' counts compositions of at most maxLen modules

        Unconstrained this is sum_{n=minLen}^{maxLen} |M|^n, constrained it counts the
        connector-valid base - regular* - end effector assemblies.
    '''
    if maxLen < 1:
        raise ValueError('maxLen must be >= 1')

    if not constrained:
        return sum(len(library) ** n for n in range(max(minLen, 1), maxLen + 1))

    transitions = _connectorTransitions(library)

    # ways[t]: number of valid prefixes of the current length whose distal type is t
    ways = {}
    for b in library.bases():
        ways[b.distal.ctype.id] = ways.get(b.distal.ctype.id, 0) + 1

    eefByProximal = {}
    for e in library.endEffectors():
        eefByProximal[e.proximal.ctype.id] = eefByProximal.get(e.proximal.ctype.id, 0) + 1

    total = 0
    # prefixes of length k close into assemblies of length k + 1
    for k in range(1, maxLen):
        if k + 1 >= minLen:
            total += sum(n * eefByProximal.get(t, 0) for t, n in ways.items())

        nextWays = {}
        for (prox, dist), count in transitions.items():
            n = ways.get(prox, 0)
            if n:
                nextWays[dist] = nextWays.get(dist, 0) + n * count
        ways = nextWays

    return total


def enumerateAssemblies(library: ModuleLibrary, maxLen: int) -> T.Iterator[T.Tuple[int, ...]]:
    ''' yields the id sequences of all valid assemblies of at most maxLen modules '''

    def extend(prefix: T.List[Module]):
        last = prefix[-1]
        if len(prefix) + 1 <= maxLen:
            for e in library.endEffectors():
                if canConnect(last, e):
                    yield tuple(m.id for m in prefix + [e])

        if len(prefix) + 2 <= maxLen:
            for r in library.regulars():
                if canConnect(last, r):
                    yield from extend(prefix + [r])

    for b in library.bases():
        yield from extend([b])


def _neighbour(library: ModuleLibrary, genes: T.Sequence[int], position: int, step: int) -> Module:
    i = position + step
    while 0 <= i < len(genes):
        if genes[i] != EMPTY_GENE:
            return library.moduleForGene(genes[i])
        i += step
    return None


def mutationCandidates(library: ModuleLibrary, chromosome, position: int) -> T.Set[int]:
    ''' the set V_m of gene values that may replace the gene at position '''
    genes = chromosome.genes if hasattr(chromosome, 'genes') else chromosome
    nc = len(genes)
    if not 0 <= position < nc:
        raise IndexError(f'position {position} out of chromosome of length {nc}')

    gene = genes[position]
    left = _neighbour(library, genes, position, -1)
    right = _neighbour(library, genes, position, 1)

    if position == 0:
        current = library.moduleForGene(gene)
        return {library.idToGene[m.id] for m in library.bases() if m.connectorPair == current.connectorPair}

    if position == nc - 1:
        current = library.moduleForGene(gene)
        return {library.idToGene[m.id] for m in library.endEffectors() if m.connectorPair == current.connectorPair}

    ret = set()
    if gene != EMPTY_GENE:
        current = library.moduleForGene(gene)
        for m in library.regulars():
            if m.connectorPair == current.connectorPair:
                ret.add(library.idToGene[m.id])
    else:
        # an empty slot may be filled by anything that fits between its neighbours
        for m in library.regulars():
            if left is not None and right is not None and canConnect(left, m) and canConnect(m, right):
                ret.add(library.idToGene[m.id])
        ret.add(EMPTY_GENE)

    if left is not None and right is not None and canConnect(left, right):
        ret.add(EMPTY_GENE)

    return ret


#
# JSON codec
#

def _frameFromJson(data, what: str) -> np.ndarray:
    try:
        return transformFromList(data, what)
    except ValueError as e:
        raise LibraryFormatError(str(e)) from e


def _connectorFromJson(data, gender: str, types: T.Dict[str, ConnectorType]) -> Connector:
    typeId = data['type']
    ctype = types.get(typeId)
    if ctype is None:
        ctype = ConnectorType(typeId)
        types[typeId] = ctype
    return Connector(ctype, gender, _frameFromJson(data['frame'], f'{gender} connector frame'))


def moduleFromJson(data: T.Dict[str, T.Any], types: T.Dict[str, ConnectorType]) -> Module:
    bodies = []
    for b in data['bodies']:
        geometry = [CollisionPrimitive.fromJson(g) for g in b.get('geometry', [])]
        bodies.append(Body(b.get('mass', 0.0), b.get('com', (0.0, 0.0, 0.0)), b.get('inertia'), geometry))

    joints = []
    for j in data.get('joints', []):
        joints.append(JointSpec(j['kind'], j['axis'],
                                _frameFromJson(j['parent_frame'], 'joint parent frame'),
                                _frameFromJson(j['child_frame'], 'joint child frame'),
                                j['q_limits'], j['qd_limits'], j['qdd_limits'], j['tau_max']))

    return Module(int(data['id']), data['name'], data['kind'], bodies, joints,
                  _connectorFromJson(data['proximal'], 'proximal', types),
                  _connectorFromJson(data['distal'], 'distal', types))


def libraryFromJson(data: T.Dict[str, T.Any]) -> ModuleLibrary:
    types = {}
    for t in data.get('connector_types', []):
        if isinstance(t, str):
            types[t] = ConnectorType(t)
        else:
            types[t['id']] = ConnectorType(t['id'], t.get('size_class'))

    try:
        modules = [moduleFromJson(m, types) for m in data['modules']]
    except (KeyError, TypeError, ValueError) as e:
        raise LibraryFormatError(f'invalid module definition: {e}') from e

    return ModuleLibrary(modules, list(types.values()))


def moduleToJson(m: Module) -> T.Dict[str, T.Any]:
    return {
        'id': m.id,
        'name': m.name,
        'kind': m.kind,
        'bodies': [{
            'mass': b.mass,
            'com': b.com.tolist(),
            'inertia': b.inertia.tolist(),
            'geometry': [g.toJson() for g in b.geometry],
        } for b in m.bodies],
        'joints': [{
            'kind': j.kind,
            'axis': j.axis.tolist(),
            'parent_frame': transformToList(j.parentFrame),
            'child_frame': transformToList(j.childFrame),
            'q_limits': list(j.qLimits),
            'qd_limits': list(j.qdLimits),
            'qdd_limits': list(j.qddLimits),
            'tau_max': j.tauMax,
        } for j in m.joints],
        'proximal': {'type': m.proximal.ctype.id, 'frame': transformToList(m.proximal.frame)},
        'distal': {'type': m.distal.ctype.id, 'frame': transformToList(m.distal.frame)},
    }


def libraryToJson(library: ModuleLibrary) -> T.Dict[str, T.Any]:
    return {
        'modules': [moduleToJson(m) for m in library.modules],
        'connector_types': [{'id': t.id, 'size_class': t.sizeClass} for t in library.connectorTypes],
    }


def loadLibrary(path: str) -> ModuleLibrary:
    logging.debug(f" * reading module library {path}")
    try:
        with open(path, 'rt', encoding='utf8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise LibraryFormatError(f'{path} is not valid JSON: {e}') from e

    return libraryFromJson(data)


def saveLibrary(library: ModuleLibrary, path: str) -> None:
    with open(path, 'wt', encoding='utf8') as f:
        json.dump(libraryToJson(library), f, indent=2)
