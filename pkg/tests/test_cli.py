import contextlib
import io
import json
import os
import shutil
import tempfile
import unittest

from fair_pipelines.cli import main, parse_pmf
from tests.test_scenarios import PATHOLOGICAL_DOC, WEIGHTED_DOC, edited


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


class TestCli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def write(self, name, doc):
        path = os.path.join(self.tmp, name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(doc if isinstance(doc, str) else json.dumps(doc))
        return path

    def test_validate(self):
        code, out, _ = run(["validate", self.write("ok.json", WEIGHTED_DOC)])
        self.assertEqual(code, 0)
        self.assertTrue(json.loads(out)["valid"])
        code, out, _ = run(["validate", "--schema"])
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)["type"], "object")

    def test_usage_errors_exit_2(self):
        code, _, err = run(["validate", self.write("bad.json", "{\n  \"universe\": ,\n}")])
        self.assertEqual(code, 2)
        self.assertIn("bad.json:2:", err)
        code, _, err = run(["audit", self.write("big.json", edited(WEIGHTED_DOC, cohort_set__k=5))])
        self.assertEqual(code, 2)
        self.assertIn("$.cohort_set.k", err)
        code, _, err = run(["audit", os.path.join(self.tmp, "missing.json")])
        self.assertEqual(code, 2)
        self.assertTrue(err.startswith("error:"))
        self.assertEqual(run(["mmd", "0.5", "0.5:1"])[0], 2)

    def test_audit_exit_codes(self):
        path = self.write("pathological.json", PATHOLOGICAL_DOC)
        code, out, _ = run(["audit", path, "--alpha", "10"])
        self.assertEqual(code, 1)
        self.assertEqual(json.loads(out)["alpha_star"]["cond-e"], "inf")
        code, out, _ = run(["audit", self.write("ws.json", WEIGHTED_DOC), "--measures", "cond-e"])
        payload = json.loads(out)
        self.assertEqual(payload["measures"], ["cond-e"])
        self.assertEqual(code, 0 if payload["passes"] else 1)

    def test_table_output(self):
        code, out, _ = run(["audit", self.write("ws.json", WEIGHTED_DOC), "--out", "table"])
        self.assertIn(code, (0, 1))
        self.assertIn("alpha* cond-e", out)

    def test_policy_only_audit(self):
        doc = edited(
            WEIGHTED_DOC,
            mechanism={"kind": "uniform"},
            family={"policy": "interchangeability"},
            audit={"alpha": 1, "mapping": "swapping"},
        )
        path = self.write("policy.json", doc)
        code, out, _ = run(["audit", path])
        payload = json.loads(out)
        self.assertEqual(code, 1)
        self.assertEqual(payload["alpha_star"]["cond-mmd"], 2)
        self.assertEqual(payload["alpha_star_basis"]["cond-mmd"], "certified")
        code, out, _ = run(["audit", path, "--out", "table"])
        self.assertEqual(code, 1)
        self.assertIn("alpha* uncond-e: 3 (certified)", out)

    def test_mmd(self):
        code, out, _ = run(["mmd", "0.7:1", "0.6:1/2,0.8:1/2"])
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out), {"mmd": "1/10"})
        self.assertEqual(parse_pmf("0:1/4,1:3/4").expectation(), 0.75)

    def test_simulate_is_deterministic(self):
        path = self.write("ws.json", WEIGHTED_DOC)
        first = run(["simulate", path, "--montecarlo", "50", "--seed", "4"])
        second = run(["simulate", path, "--montecarlo", "50", "--seed", "4"])
        self.assertEqual(first[:2], second[:2])
        self.assertEqual(len(json.loads(first[1])["samples"]), 50)
        code, out, _ = run(["simulate", path])
        self.assertEqual(code, 0)
        self.assertEqual(len(json.loads(out)["law"]), 6)

    def test_reproduce(self):
        code, out, _ = run(["reproduce", "impossibility"])
        self.assertEqual(code, 0)
        self.assertTrue(json.loads(out)["passed"])


if __name__ == "__main__":
    unittest.main()
