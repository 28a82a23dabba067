import random

import pytest

from kernelsearch.metrics import (
    TaskResult,
    compile_rate,
    correct_rate,
    fast1,
    format_percent,
    format_speed,
    parse_report,
    render_report,
    speed_coverage,
    speed_ratio,
    success_rate,
    task_result_from_run_dir,
)


def task(task_id, baseline, best=None, flags=()):
    return TaskResult(
        task_id=task_id,
        baseline_runtime_ms=baseline,
        best_runtime_ms=best,
        attempt_flags=tuple(flags),
    )


WIN = (True, True)
COMPILE_ONLY = (True, False)
BROKEN = (False, False)


def ten_of_fourteen():
    tasks = []
    for k in range(10):
        tasks.append(task(f"hit{k}", 100.0, best=50.0, flags=[WIN]))
    for k in range(4):
        tasks.append(task(f"miss{k}", 100.0, best=150.0, flags=[WIN]))
    return tasks


class TestFast1:
    def test_ten_of_fourteen(self):
        value = fast1(ten_of_fourteen())
        assert value == pytest.approx(10 / 14)
        assert format_percent(value) == "71.4%"

    def test_no_correct_kernels(self):
        tasks = [task("a", 100.0, flags=[BROKEN]), task("b", 100.0, flags=[COMPILE_ONLY])]
        assert fast1(tasks) == 0.0

    def test_equal_runtime_counts(self):
        assert fast1([task("a", 100.0, best=100.0, flags=[WIN])]) == 1.0


class TestSuccessRate:
    def test_all_successful(self):
        tasks = [task(f"t{k}", 100.0, best=90.0, flags=[BROKEN, WIN]) for k in range(3)]
        assert success_rate(tasks) == 1.0
        assert format_percent(success_rate(tasks)) == "100.0%"

    def test_half(self):
        tasks = [task("a", 100.0, best=90.0, flags=[WIN]), task("b", 100.0, flags=[BROKEN])]
        assert success_rate(tasks) == 0.5

    def test_zero_attempt_task_counts_as_failure(self):
        tasks = [task("a", 100.0, flags=[])]
        assert success_rate(tasks) == 0.0


class TestPooledRates:
    def test_nine_of_ten_compiled(self):
        tasks = [
            task("a", 100.0, flags=[COMPILE_ONLY] * 5),
            task("b", 100.0, flags=[COMPILE_ONLY] * 4 + [BROKEN]),
        ]
        assert compile_rate(tasks) == pytest.approx(0.9)

    def test_hand_tallied_thirty_attempts(self):
        rng = random.Random(5)
        flags = []
        for _ in range(30):
            roll = rng.random()
            if roll < 0.4:
                flags.append(WIN)
            elif roll < 0.8:
                flags.append(COMPILE_ONLY)
            else:
                flags.append(BROKEN)
        compiled = sum(1 for f in flags if f[0])
        correct = sum(1 for f in flags if f[1])
        best = 50.0 if correct else None
        tasks = [task("a", 100.0, best=best, flags=flags)]
        assert compile_rate(tasks) == pytest.approx(compiled / 30)
        assert correct_rate(tasks) == pytest.approx(correct / 30)

    def test_zero_attempts_reported_absent(self):
        tasks = [task("a", 100.0, flags=[])]
        assert compile_rate(tasks) is None
        assert correct_rate(tasks) is None


class TestSpeedRatio:
    def test_headline_shape(self):
        tasks = [task("a", 3.03, best=1.0, flags=[WIN])]
        assert speed_ratio(tasks) == pytest.approx(3.03)
        assert format_speed(speed_ratio(tasks)) == "3.03x"

    def test_equal_runtimes(self):
        assert speed_ratio([task("a", 7.0, best=7.0, flags=[WIN])]) == 1.0

    def test_mean_of_ratios(self):
        tasks = [
            task("a", 100.0, best=50.0, flags=[WIN]),   # 2.0
            task("b", 100.0, best=25.0, flags=[WIN]),   # 4.0
        ]
        assert speed_ratio(tasks) == pytest.approx(3.0)

    def test_tasks_without_kernels_excluded_and_disclosed(self):
        tasks = [task("a", 100.0, best=50.0, flags=[WIN]), task("b", 100.0, flags=[BROKEN])]
        assert speed_ratio(tasks) == pytest.approx(2.0)
        assert speed_coverage(tasks) == (1, 2)

    def test_no_included_tasks(self):
        assert speed_ratio([task("a", 100.0, flags=[BROKEN])]) is None


class TestInvariantProperties:
    def _random_tasks(self, rng):
        tasks = []
        for k in range(rng.randint(1, 10)):
            flags = []
            for _ in range(rng.randint(0, 8)):
                roll = rng.random()
                flags.append(WIN if roll < 0.3 else COMPILE_ONLY if roll < 0.6 else BROKEN)
            best = rng.uniform(10, 200) if any(f[1] for f in flags) else None
            tasks.append(task(f"t{k}", rng.uniform(50, 150), best=best, flags=flags))
        return tasks

    def test_rates_bounded_and_ordered(self):
        rng = random.Random(99)
        for _ in range(50):
            tasks = self._random_tasks(rng)
            f, s = fast1(tasks), success_rate(tasks)
            assert 0.0 <= f <= s <= 1.0
            cr, xr = compile_rate(tasks), correct_rate(tasks)
            if cr is not None:
                assert 0.0 <= xr <= cr <= 1.0

    def test_perfect_fast1_implies_ratios_above_one(self):
        tasks = [task(f"t{k}", 100.0, best=100.0 - k, flags=[WIN]) for k in range(5)]
        assert fast1(tasks) == 1.0
        assert speed_ratio(tasks) >= 1.0


class TestRenderReport:
    def _fixture(self):
        return {"alpha": ten_of_fourteen()}

    def test_single_agent_table(self):
        text = render_report(self._fixture(), format="table")
        assert "alpha" in text
        assert "71.4%" in text
        assert "100.0%" in text

    def test_golden_table(self):
        # speed by hand: (10 * 100/50 + 4 * 100/150) / 14 = 68/42 = 1.619...
        golden = (
            "Agent         Success   Fast_1    Speed  Coverage\n"
            "alpha          100.0%    71.4%    1.62x  14/14\n"
            "\n"
            "Agent         Compile  Correct\n"
            "alpha          100.0%   100.0%\n"
        )
        assert render_report(self._fixture(), format="table") == golden

    def test_machine_round_trip(self):
        text = render_report(self._fixture(), format="machine")
        doc = parse_report(text)
        agent = doc["agents"]["alpha"]
        assert agent["fast1"] == pytest.approx(10 / 14)
        assert agent["success"] == 1.0
        assert len(agent["tasks"]) == 14
        for key in ("success", "fast1", "speed", "compile_rate", "correct_rate", "tasks"):
            assert key in agent

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            render_report(self._fixture(), format="yaml")


class TestTaskResultInvariant:
    def test_best_requires_correct_attempt(self):
        with pytest.raises(ValueError):
            task("a", 100.0, best=50.0, flags=[BROKEN])


class TestFromRunDir:
    def test_reads_finished_run(self, tmp_path):
        from kernelsearch.agents import ScriptedProvider
        from kernelsearch.evaluation import SimulatorEvaluator
        from kernelsearch.orchestrator import RunConfig, run_sampling

        responses = ["shot\n```python\nclass ModelNew:\n    pass\n// OPT:tile\n```"] * 2
        config = RunConfig(
            reference_source="class Model:\n    pass\n",
            run_dir=tmp_path / "r",
            budget_B=2,
        )
        run_sampling(config, ScriptedProvider(responses=responses), SimulatorEvaluator())
        result = task_result_from_run_dir(tmp_path / "r")
        assert result.agent == "sampling"
        assert result.baseline_runtime_ms == 100.0
        assert result.best_runtime_ms == pytest.approx(60.0)
        assert result.attempt_flags == ((True, True), (True, True))
