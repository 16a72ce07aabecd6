#!/usr/bin/env python3
"""
End-to-end acceptance run of the remote entanglement distribution simulator
"""

import sys
import os
import json
import math
import tempfile
import time
from pathlib import Path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from app.cli import main as cli_main
from app.services.bounds import simulate_chain, monte_carlo_red, rpbes_plan, strategy_plans
from app.services.entanglement import (
    concurrence_pure,
    concurrence_two_qubit,
    det_scaled_concurrence,
    optimal_equal_concurrence_decomposition,
)
from app.services.measurement import PhaseMatrix, kraus_det_sum, random_kraus_channel, rpbes_vectors
from app.services.phase_optimizer import concurrence_F, optimize_phases
from app.services.protocol import MixedClassSpec, mixed_class_concurrence, run_rpbes_mixed_class, run_rpbes_pure
from app.services.quantum_core import DensityMatrix, PureState, schmidt_state
import logging

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

CHI_ROWS = [[1 / math.sqrt(2), 1 / math.sqrt(2)], [1 / math.sqrt(2), -1 / math.sqrt(2)]]


def chi_mixture(q: float) -> MixedClassSpec:
    return MixedClassSpec(weights=[q, 1 - q], amplitude_rows=CHI_ROWS)


class SystemTester:
    """Run every acceptance criterion and report timings"""

    def __init__(self, seed: int = 2024):
        self.rng = np.random.default_rng(seed)
        self.example_pair = (schmidt_state([0.8, 0.2]), chi_mixture(0.75).density_matrix())

    def test_saturation(self):
        """Pure qubit inputs with θ = πmm′ reach 4√(λ0λ1η0η1)"""
        logger.info("🧪 Testing saturation for 50 random qubit pairs...")
        worst = 0.0
        for _ in range(50):
            lam0, eta0 = self.rng.uniform(0.0, 1.0, size=2)
            result = run_rpbes_pure([lam0, 1 - lam0], [eta0, 1 - eta0], PhaseMatrix.pi_mm(2))
            expected = 4 * math.sqrt(lam0 * (1 - lam0) * eta0 * (1 - eta0))
            worst = max(worst, abs(result.final_concurrence - expected))
        logger.info(f"✅ Largest deviation {worst:.3e}")
        return worst <= 1e-9

    def test_outcome_independence(self):
        logger.info("🧪 Testing outcome independence for d = 2, 3, 4...")
        for d in (2, 3, 4):
            for _ in range(20):
                lam, eta = self.rng.dirichlet(np.ones(d)), self.rng.dirichlet(np.ones(d))
                result = run_rpbes_pure(lam, eta, PhaseMatrix.random(d, seed=self.rng))
                probability_gap = float(np.max(np.abs(result.outcomes.probabilities - 1 / d ** 2)))
                if result.min_pairwise_fidelity < 1 - 1e-9 or probability_gap > 1e-10:
                    logger.error(f"❌ d={d}: fidelity {result.min_pairwise_fidelity}, probability gap {probability_gap:.3e}")
                    return False
            logger.info(f"✅ d={d}: 20 draws agree")
        return True

    def test_bound_monte_carlo(self):
        logger.info("🧪 Testing C14 <= C12*C34 with 10^4 sampled strategies...")
        report = monte_carlo_red(*self.example_pair, strategy_plans("all"), trials=10_000, seed=7)
        logger.info(f"✅ Bound {report.bound:.9f}, max achieved {report.max_achieved:.9f}, violations {report.violations}")
        saturated = monte_carlo_red(*self.example_pair, rpbes_plan(PhaseMatrix.pi_mm(2)), trials=1, seed=7)
        logger.info(f"✅ RPBES with θ = πkk′ achieves {saturated.max_achieved:.12f}")
        return (
            report.violations == 0
            and report.max_achieved <= 0.4 + 1e-9
            and abs(saturated.max_achieved - 0.4) <= 1e-9
        )

    def test_chi_mixture_concurrence(self):
        logger.info("🧪 Testing the χ mixture concurrence on a 21-point grid...")
        worst = max(
            abs(concurrence_two_qubit(chi_mixture(q).density_matrix()) - abs(2 * q - 1))
            for q in np.linspace(0.0, 1.0, 21)
        )
        logger.info(f"✅ Largest deviation {worst:.3e}")
        return worst <= 1e-10

    def test_chain(self):
        logger.info("🧪 Testing the three-link chain...")
        chain = [schmidt_state(w) for w in ([0.8, 0.2], [0.7, 0.3], [0.6, 0.4])]
        sequential = simulate_chain(chain)
        logger.info(f"✅ Sequential RPBES achieves {sequential.max_achieved:.9f} (product {sequential.bound:.9f})")
        sampled = simulate_chain(chain, strategy="random", trials=1000, seed=11)
        logger.info(f"✅ 1000 random strategies peak at {sampled.max_achieved:.9f}, violations {sampled.violations}")
        return abs(sequential.max_achieved - 0.718287) <= 1e-6 and sampled.violations == 0

    def test_uniform_qutrits(self):
        logger.info("🧪 Testing maximal entanglement for uniform qutrits...")
        third = [1 / 3] * 3
        value = concurrence_F(third, third, PhaseMatrix.fourier(3))
        result = optimize_phases(third, third, restarts=16, seed=5, include_baseline_start=False)
        best_random = max(result.restart_values)
        logger.info(f"✅ θ = 2πmm′/3 gives {value:.12f}; random starts reach {best_random:.12f}")
        return abs(value - math.sqrt(4 / 3)) <= 1e-9 and best_random >= math.sqrt(4 / 3) - 1e-6

    def test_property_suites(self):
        logger.info("🧪 Testing property suites (50 cases each)...")
        for _ in range(50):
            amplitudes = self.rng.normal(size=4) + 1j * self.rng.normal(size=4)
            psi = PureState(amplitudes=amplitudes / np.linalg.norm(amplitudes), dims=(2, 2))
            a = self.rng.normal(size=(2, 2)) + 1j * self.rng.normal(size=(2, 2))
            b = self.rng.normal(size=(2, 2)) + 1j * self.rng.normal(size=(2, 2))
            lhs, rhs = det_scaled_concurrence(psi, a, b)
            if abs(lhs - rhs) > 1e-9 * max(1.0, rhs):
                logger.error(f"❌ det scaling: {lhs} vs {rhs}")
                return False
        logger.info("✅ det scaling")

        for _ in range(50):
            channel = random_kraus_channel(2, int(self.rng.integers(1, 9)), seed=self.rng)
            if channel.completeness_error() > 1e-9 or kraus_det_sum(channel) > 1 + 1e-9:
                logger.error("❌ Kraus completeness or det sum")
                return False
        logger.info("✅ Kraus completeness and Σ|det| <= 1")

        for _ in range(50):
            vectors = rpbes_vectors(2, PhaseMatrix.random(2, seed=self.rng))
            if np.max(np.abs(vectors.conj() @ vectors.T - np.eye(4))) > 1e-10:
                logger.error("❌ RPBES basis is not orthonormal")
                return False
        logger.info("✅ RPBES basis orthonormality")

        for _ in range(50):
            d = int(self.rng.integers(2, 5))
            lam, eta = self.rng.dirichlet(np.ones(d)), self.rng.dirichlet(np.ones(d))
            theta = PhaseMatrix.random(d, seed=self.rng)
            simulated = run_rpbes_pure(lam, eta, theta).final_concurrence
            shift = self.rng.uniform(-3.0, 3.0, size=d)
            shifted = PhaseMatrix(theta=theta.theta + shift[:, None] - shift[None, :])
            if abs(concurrence_F(lam, eta, theta) - simulated) > 1e-9:
                logger.error("❌ closed form disagrees with simulation")
                return False
            if abs(concurrence_F(lam, eta, shifted) - concurrence_F(lam, eta, theta)) > 1e-10:
                logger.error("❌ closed form is not gauge invariant")
                return False
        logger.info("✅ closed form vs simulation and gauge invariance")

        for _ in range(50):
            q, lam0 = self.rng.uniform(0.0, 1.0, size=2)
            theta = PhaseMatrix.random(2, seed=self.rng)
            result = run_rpbes_mixed_class(MixedClassSpec.pure([lam0, 1 - lam0]), chi_mixture(q), theta)
            if abs(result.final_concurrence - mixed_class_concurrence(q, lam0, theta)) > 1e-9:
                logger.error("❌ mixed-class closed form")
                return False
        logger.info("✅ mixed-class closed form")

        for _ in range(50):
            g = self.rng.normal(size=(4, 4)) + 1j * self.rng.normal(size=(4, 4))
            rho = g @ g.conj().T
            rho = DensityMatrix(matrix=rho / np.trace(rho).real, dims=(2, 2))
            target = concurrence_two_qubit(rho)
            decomposition = optimal_equal_concurrence_decomposition(rho)
            if np.max(np.abs(decomposition.density_matrix().matrix - rho.matrix)) > 1e-8:
                logger.error("❌ decomposition does not reconstruct ρ")
                return False
            if any(abs(concurrence_pure(s) - target) > 1e-8 for s in decomposition.states):
                logger.error("❌ decomposition terms differ in concurrence")
                return False
        logger.info("✅ optimal decomposition")
        return True

    def test_determinism(self):
        logger.info("🧪 Testing CLI determinism...")
        with tempfile.TemporaryDirectory() as workdir:
            config = Path(workdir) / "pair.json"
            config.write_text(json.dumps({
                "rho12": {"kind": "pure-schmidt", "weights": [0.8, 0.2]},
                "rho34": {"kind": "mixed-class", "weights": [0.75, 0.25], "amplitude_rows": CHI_ROWS},
                "trials": 200,
            }))
            payloads = []
            for run in range(2):
                out = Path(workdir) / f"report-{run}.json"
                if cli_main(["verify-bound", "--config", str(config), "--seed", "42", "--out", str(out)]) != 0:
                    return False
                payloads.append(json.dumps(json.loads(out.read_text())["payload"], sort_keys=True))
        logger.info(f"✅ Payload of {len(payloads[0])} bytes reproduced")
        return payloads[0] == payloads[1]

    def run_all_tests(self):
        """Run all acceptance checks"""
        logger.info("🚀 Starting remote entanglement distribution acceptance run")
        logger.info("=" * 60)

        tests = [
            ("Saturation", self.test_saturation),
            ("Outcome Independence", self.test_outcome_independence),
            ("Bound Monte Carlo", self.test_bound_monte_carlo),
            ("Chi Mixture Concurrence", self.test_chi_mixture_concurrence),
            ("Chain", self.test_chain),
            ("Uniform Qutrits", self.test_uniform_qutrits),
            ("Property Suites", self.test_property_suites),
            ("Determinism", self.test_determinism),
        ]

        results = {}

        for test_name, test_func in tests:
            logger.info(f"\n{'='*20} {test_name} {'='*20}")
            start_time = time.time()

            try:
                success = test_func()
                duration = time.time() - start_time
                results[test_name] = {"success": success, "duration": duration}

                if success:
                    logger.info(f"✅ {test_name} PASSED ({duration:.2f}s)")
                else:
                    logger.error(f"❌ {test_name} FAILED ({duration:.2f}s)")

            except Exception as e:
                duration = time.time() - start_time
                results[test_name] = {"success": False, "duration": duration, "error": str(e)}
                logger.error(f"❌ {test_name} CRASHED ({duration:.2f}s): {str(e)}")

        logger.info("\n" + "="*60)
        logger.info("📊 ACCEPTANCE SUMMARY")
        logger.info("="*60)

        passed = sum(1 for r in results.values() if r["success"])
        total = len(results)

        for test_name, result in results.items():
            status = "✅ PASS" if result["success"] else "❌ FAIL"
            logger.info(f"{status} {test_name} ({result['duration']:.2f}s)")
            if not result["success"] and "error" in result:
                logger.info(f"      Error: {result['error']}")

        logger.info(f"\nOverall: {passed}/{total} checks passed")
        return passed == total


def main():
    tester = SystemTester()
    sys.exit(0 if tester.run_all_tests() else 1)


if __name__ == "__main__":
    main()
