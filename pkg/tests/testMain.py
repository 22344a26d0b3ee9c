import contextlib
import io
import json
import os
import tempfile
import unittest

from scipy.spatial.transform import Rotation

import modsynth
from modsynth.geometry import Scene
from modsynth.kinematics import Pose
from modsynth.main import EXIT_INPUT_ERROR, EXIT_NO_SOLUTION, EXIT_OK, ModsynthConfig, readOptionsFile, run
from modsynth.tasks import Goal, Task, saveTask, tolerancePreset


def quiet(args):
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        ret = run(['modsynth'] + args)
    return (ret, out.getvalue())


def readText(path: str) -> str:
    with open(path, 'rt', encoding='utf8') as f:
        return f.read()


class Test(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def farTask(self) -> str:
        path = os.path.join(self.dir, 'far.json')
        task = Task([Goal('far', Pose([4.0, 0.0, 0.5], Rotation.identity()))], tolerancePreset('arbitrary'), Scene(),
                    name='far')
        saveTask(task, path)
        return path

    def testVersionAndUsage(self):
        ret, out = quiet(['--version'])
        self.assertEqual(ret, EXIT_OK)
        self.assertEqual(out.strip(), modsynth.__version__)

        self.assertEqual(quiet(['--help'])[0], EXIT_OK)
        self.assertEqual(quiet([])[0], EXIT_INPUT_ERROR)
        self.assertEqual(quiet(['compile'])[0], EXIT_INPUT_ERROR)
        self.assertEqual(quiet(['optimize', '--frobnicate'])[0], EXIT_INPUT_ERROR)
        self.assertEqual(quiet(['optimize', '--seed=abc'])[0], EXIT_INPUT_ERROR)
        self.assertEqual(quiet(['gen-tasks', '--setting=synthetic3'])[0], EXIT_INPUT_ERROR)
        self.assertEqual(quiet(['optimize', '--p-m=2'])[0], EXIT_INPUT_ERROR)

    def testOptionsFile(self):
        path = os.path.join(self.dir, 'options.ini')
        with open(path, 'wt', encoding='utf8') as f:
            f.write('[modsynth]\nseed = 7\npopulation = 10\ncost = 1,0.5,2\nno-timing = true\ndebug = false\n'
                    'preset = sphere_like\n')

        config = ModsynthConfig()
        config.configFile = path
        self.assertTrue(readOptionsFile(config))
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.population, 10)
        self.assertEqual(config.cost, (1.0, 0.5, 2.0))
        self.assertFalse(config.timing)
        self.assertFalse(config.debug)
        self.assertEqual(config.preset, 'sphere_like')

        with open(path, 'wt', encoding='utf8') as f:
            f.write('[modsynth]\nrequires = >= 99.0\n')
        self.assertEqual(quiet(['gen-tasks', f'--config={path}', f'--out={self.dir}'])[0], EXIT_INPUT_ERROR)

        with open(path, 'wt', encoding='utf8') as f:
            f.write('[modsynth]\nconfig = other.ini\n')
        config = ModsynthConfig()
        config.configFile = path
        self.assertFalse(readOptionsFile(config))

        config.configFile = os.path.join(self.dir, 'missing.ini')
        self.assertFalse(readOptionsFile(config))

    def testGenTasks(self):
        args = ['gen-tasks', '--setting=synthetic2', '--d=2', '--count=3', '--seed=4']
        first = os.path.join(self.dir, 'first')
        second = os.path.join(self.dir, 'second')
        self.assertEqual(quiet(args + [f'--out={first}'])[0], EXIT_OK)
        self.assertEqual(quiet(args + [f'--out={second}'])[0], EXIT_OK)

        names = sorted(os.listdir(first))
        self.assertEqual(names, ['synthetic2-d2-00.json', 'synthetic2-d2-01.json', 'synthetic2-d2-02.json'])
        for name in names:
            self.assertEqual(readText(os.path.join(first, name)), readText(os.path.join(second, name)))
            with open(os.path.join(first, name), 'rt', encoding='utf8') as f:
                self.assertEqual(len(json.load(f)['goals']), 2)

        self.assertEqual(quiet(['gen-tasks', '--count=0', f'--out={first}'])[0], EXIT_INPUT_ERROR)

    def testEvaluate(self):
        ret, out = quiet(['evaluate', '--ids=1,8', '--task=manufacturing1'])
        self.assertEqual(ret, EXIT_OK)
        data = json.loads(out)
        self.assertEqual(data['ids'], [1, 8])
        self.assertEqual(data['depth'], 1)
        self.assertEqual(data['fitness']['f1'], 0)
        self.assertNotIn('cost_breakdown', data)

        self.assertEqual(quiet(['evaluate', '--ids=1,x', '--task=manufacturing1'])[0], EXIT_INPUT_ERROR)
        self.assertEqual(quiet(['evaluate', '--ids=1,99', '--task=manufacturing1'])[0], EXIT_INPUT_ERROR)
        self.assertEqual(quiet(['evaluate', '--ids=1,6,8', '--task=manufacturing1'])[0], EXIT_INPUT_ERROR)
        self.assertEqual(quiet(['evaluate', '--task=manufacturing1'])[0], EXIT_INPUT_ERROR)
        self.assertEqual(quiet(['evaluate', '--ids=1,8'])[0], EXIT_INPUT_ERROR)
        self.assertEqual(quiet(['evaluate', '--ids=1,8', '--task=nowhere.json'])[0], EXIT_INPUT_ERROR)

    def testOptimizeWithoutSolution(self):
        task = self.farTask()
        args = ['optimize', f'--task={task}', '--generations=2', '--population=4', '--nc=4', '--seed=3',
                '--no-timing']
        first = os.path.join(self.dir, 'first')
        second = os.path.join(self.dir, 'second')
        self.assertEqual(quiet(args + [f'--out={first}'])[0], EXIT_NO_SOLUTION)
        self.assertEqual(quiet(args + [f'--out={second}'])[0], EXIT_NO_SOLUTION)

        with open(os.path.join(first, 'solution.json'), 'rt', encoding='utf8') as f:
            solution = json.load(f)
        self.assertFalse(solution['achieved'])
        self.assertEqual(solution['f4'], '-inf')
        self.assertEqual(solution['task'], 'far')
        self.assertIsNone(solution['cost'])
        self.assertFalse(os.path.exists(os.path.join(first, 'trajectory.json')))

        for name in ('solution.json', 'history.csv', 'history.json', 'config_resolved.json'):
            self.assertEqual(readText(os.path.join(first, name)), readText(os.path.join(second, name)))

        with open(os.path.join(first, 'config_resolved.json'), 'rt', encoding='utf8') as f:
            resolved = json.load(f)
        self.assertEqual(resolved['seed'], 3)
        self.assertEqual(resolved['ga']['population'], 4)
        self.assertFalse(resolved['timing'])

    def testBaselineWithoutSolution(self):
        out = os.path.join(self.dir, 'baseline')
        args = ['baseline', f'--task={self.farTask()}', '--generations=1', '--population=3', '--nc=3',
                '--no-timing', f'--out={out}']
        self.assertEqual(quiet(args)[0], EXIT_NO_SOLUTION)
        self.assertEqual(readText(os.path.join(out, 'stage2.csv')), 'rank,ids,f_b,solved,t_max,cost\n')

    def testReport(self):
        runDir = os.path.join(self.dir, 'run')
        os.makedirs(runDir)
        with open(os.path.join(runDir, 'solution.json'), 'wt', encoding='utf8') as f:
            json.dump({'task': 't', 'achieved': True, 'cost': 4.0, 'n_j': 2, 't_max': 1.0}, f)

        out = os.path.join(self.dir, 'report')
        self.assertEqual(quiet(['report', runDir, f'--out={out}'])[0], EXIT_OK)
        self.assertTrue(os.path.isfile(os.path.join(out, 'summary.csv')))
        self.assertTrue(os.path.isfile(os.path.join(out, 'sweep.csv')))

        self.assertEqual(quiet(['report', f'--out={out}'])[0], EXIT_INPUT_ERROR)
        self.assertEqual(quiet(['report', os.path.join(self.dir, 'nothing'), f'--out={out}'])[0], EXIT_INPUT_ERROR)


if __name__ == "__main__":
    unittest.main()
