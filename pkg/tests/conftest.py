import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    def _report(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _report


def make_record(state_id="s0", agent_seed=0, episode=0, success=True, conc=0.5, conc_ansatz=0.5,
                input_conc=0.2, s_in=(0.5, 0.5), s_out=(0.4, 0.6), eigs=(0.5, 0.3, 0.15, 0.05),
                one_q=3, two_q=1, depth=3):
    """Minimal well-formed episode record for analysis tests."""
    return {
        "episode": episode, "success": success, "state_id": state_id, "agent_seed": agent_seed,
        "final_cost": 1e-4 if success else 0.1, "circuit": {"n_qubits": 2, "ops": []},
        "resources": {"one_qubit_gates": one_q, "two_qubit_gates": two_q, "depth": depth},
        "input_concurrence": input_conc, "concurrence_evolved": conc, "concurrence_of_ansatz": conc_ansatz,
        "cond_entropy_input": list(s_in), "cond_entropy_evolved": list(s_out),
        "inferred_eigenvalues": list(eigs), "reward_trace": [1.0],
    }


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
