class ModsynthError(Exception):
    ''' base class of all modsynth errors '''


class LibraryFormatError(ModsynthError):
    ''' malformed module library document '''


class TaskFormatError(ModsynthError):
    ''' malformed task document '''


class InvalidStructure(ModsynthError):
    ''' an assembly that is not base - regular* - end effector '''


class ConnectorMismatch(ModsynthError):
    ''' two consecutive modules whose connectors don't mate '''

    def __init__(self, index: int, msg: str = None) -> None:
        '''
            @param index: index of the junction, so between module index and index + 1
        '''
        self.index = index
        ModsynthError.__init__(self, msg or f'connector mismatch at junction {index}')


class DimensionMismatch(ModsynthError):
    ''' a joint vector whose size doesn't match the number of joints '''

    def __init__(self, expected: int, got: int) -> None:
        self.expected = expected
        self.got = got
        ModsynthError.__init__(self, f'expecting {expected} joint values, got {got}')


class Unsatisfiable(ModsynthError):
    ''' a generator that cannot honor its constraints '''


class InvalidEndpoint(ModsynthError):
    ''' planning requested from or to an invalid configuration '''


class EmptyPath(ModsynthError):
    ''' time parameterization of a path without waypoints '''


class InitFailure(ModsynthError):
    ''' population initialization ran out of retries '''
