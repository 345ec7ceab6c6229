"""Command line surface: option resolution, exit codes, workflows."""
import json

import pytest

from brandlink.cli import run
from brandlink.core import read_jsonl
from brandlink.gazetteer import load_dictionary


def test_no_subcommand_is_a_usage_error(capsys):
    assert run([]) == 2
    capsys.readouterr()


def test_unknown_subcommand_is_a_usage_error(capsys):
    assert run(["frobnicate"]) == 2
    capsys.readouterr()


def test_help_exits_cleanly(capsys):
    assert run(["--help"]) == 0
    assert "subcommand" in capsys.readouterr().out or True


def test_subcommand_help_lists_options(capsys):
    assert run(["gen-corpus", "--help"]) == 0
    out = capsys.readouterr().out
    assert "--entities" in out
    assert "--seed" in out


class TestConfigResolution:
    def test_dry_run_prints_defaults(self, capsys):
        assert run(["gen-corpus", "--dry-run"]) == 0
        resolved = json.loads(capsys.readouterr().out)
        assert resolved["command"] == "gen-corpus"
        assert resolved["entities"] == 1000
        assert resolved["seed"] == 0

    def test_config_file_overrides_defaults(self, tmp_path, capsys):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"entities": 50, "seed": 9}))
        assert run(["gen-corpus", "--config", str(config), "--dry-run"]) == 0
        resolved = json.loads(capsys.readouterr().out)
        assert resolved["entities"] == 50
        assert resolved["seed"] == 9

    def test_flags_override_config_file(self, tmp_path, capsys):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"entities": 50}))
        assert (
            run(
                [
                    "gen-corpus",
                    "--config",
                    str(config),
                    "--entities",
                    "20",
                    "--dry-run",
                ]
            )
            == 0
        )
        resolved = json.loads(capsys.readouterr().out)
        assert resolved["entities"] == "20"

    def test_unknown_config_key_is_a_usage_error(self, tmp_path, capsys):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"entites": 50}))
        assert run(["gen-corpus", "--config", str(config), "--dry-run"]) == 2
        assert "entites" in capsys.readouterr().err

    def test_boolean_flag_pair(self, capsys):
        assert run(["train-pt", "--no-idf", "--dry-run"]) == 0
        assert json.loads(capsys.readouterr().out)["idf"] is False
        assert run(["train-pt", "--idf", "--dry-run"]) == 0
        assert json.loads(capsys.readouterr().out)["idf"] is True

    def test_dry_run_has_no_side_effects(self, tmp_path, capsys):
        out = tmp_path / "corpus"
        assert run(["gen-corpus", "--out", str(out), "--dry-run"]) == 0
        capsys.readouterr()
        assert not out.exists()


class TestExitCodes:
    def test_missing_required_option_exits_2(self, capsys):
        assert run(["build-dict"]) == 2
        err = capsys.readouterr().err
        assert err.startswith("usage error:")
        assert "\n" not in err.strip()

    def test_missing_input_file_exits_1(self, tmp_path, capsys):
        code = run(
            [
                "build-dict",
                "--b2e",
                str(tmp_path / "absent.tsv"),
                "--out",
                str(tmp_path / "dict.blaf"),
            ]
        )
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert "\n" not in err.strip()

    def test_bad_link_mode_exits_2(self, tmp_path, capsys):
        code = run(
            [
                "link",
                "--queries",
                str(tmp_path / "q.jsonl"),
                "--out",
                str(tmp_path / "r.jsonl"),
                "--mode",
                "psychic",
            ]
        )
        assert code == 2
        capsys.readouterr()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One tiny corpus taken through the full command chain."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    argv = [
        "gen-corpus",
        "--out",
        str(corpus),
        "--entities",
        "20",
        "--variants",
        "2",
        "--branded",
        "80",
        "--nonbranded",
        "30",
        "--pt-types",
        "6",
        "--seed",
        "3",
    ]
    assert run(argv) == 0
    assert (
        run(
            [
                "build-dict",
                "--b2e",
                str(corpus / "b2e.tsv"),
                "--out",
                str(root / "dict.blaf"),
            ]
        )
        == 0
    )
    return root, corpus


class TestWorkflow:
    def test_corpus_and_manifest_exist(self, workspace):
        _, corpus = workspace
        manifest = json.loads((corpus / "manifest.json").read_text())
        assert manifest["counts"]["b2e_rows"] == 40

    def test_dictionary_artifact_loads(self, workspace):
        root, _ = workspace
        dictionary = load_dictionary(root / "dict.blaf")
        assert len(dictionary) > 0

    def test_gen_weak_labels_matches_corpus_output(self, workspace, capsys):
        root, corpus = workspace
        out = root / "wl_again.jsonl"
        code = run(
            [
                "gen-weak-labels",
                "--logs",
                str(corpus / "engagement.jsonl"),
                "--dict",
                str(root / "dict.blaf"),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        capsys.readouterr()
        regenerated = list(read_jsonl(out))
        original = list(read_jsonl(corpus / "weak_labels.jsonl"))
        assert regenerated == original

    def test_link_lexical_and_eval(self, workspace, capsys):
        root, corpus = workspace
        results = root / "results.jsonl"
        code = run(
            [
                "link",
                "--queries",
                str(corpus / "test.jsonl"),
                "--dict",
                str(root / "dict.blaf"),
                "--mode",
                "lexical",
                "--out",
                str(results),
            ]
        )
        assert code == 0
        n_test = sum(1 for _ in read_jsonl(corpus / "test.jsonl"))
        assert sum(1 for _ in read_jsonl(results)) == n_test

        report_path = root / "report.json"
        code = run(
            [
                "eval",
                "--gold",
                str(corpus / "test.jsonl"),
                "--results",
                str(results),
                "--report",
                str(report_path),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "overall" in out
        assert "macro" in out
        doc = json.loads(report_path.read_text())
        # Test rows reuse training surfaces verbatim: lexical gets them all.
        assert doc["overall"]["metrics"]["recall"] == 100.0
        assert doc["overall"]["metrics"]["precision"] == 100.0

    def test_link_and_eval_are_deterministic(self, workspace, capsys):
        root, corpus = workspace
        outputs = []
        for tag in ("a", "b"):
            results = root / f"det_{tag}.jsonl"
            report_path = root / f"det_{tag}.json"
            assert (
                run(
                    [
                        "link",
                        "--queries",
                        str(corpus / "test.jsonl"),
                        "--dict",
                        str(root / "dict.blaf"),
                        "--mode",
                        "lexical",
                        "--out",
                        str(results),
                    ]
                )
                == 0
            )
            assert (
                run(
                    [
                        "eval",
                        "--gold",
                        str(corpus / "test.jsonl"),
                        "--results",
                        str(results),
                        "--report",
                        str(report_path),
                    ]
                )
                == 0
            )
            outputs.append((results.read_bytes(), report_path.read_bytes()))
        capsys.readouterr()
        assert outputs[0] == outputs[1]

    def test_false_alarm_eval(self, workspace, capsys):
        root, corpus = workspace
        results = root / "fa_results.jsonl"
        assert (
            run(
                [
                    "link",
                    "--queries",
                    str(corpus / "nonbranded.jsonl"),
                    "--dict",
                    str(root / "dict.blaf"),
                    "--mode",
                    "lexical",
                    "--out",
                    str(results),
                ]
            )
            == 0
        )
        code = run(
            [
                "eval",
                "--gold",
                str(corpus / "nonbranded.jsonl"),
                "--results",
                str(results),
                "--false-alarm",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        # Generator guarantee: no brand surface inside non-branded queries.
        assert "false_alarm_rate: 0.00" in out

    def test_mismatched_gold_and_results_exit_1(self, workspace, capsys):
        root, corpus = workspace
        results = root / "results.jsonl"
        truncated = root / "truncated.jsonl"
        lines = results.read_text().splitlines()[:-1]
        truncated.write_text("\n".join(lines) + "\n")
        code = run(
            [
                "eval",
                "--gold",
                str(corpus / "test.jsonl"),
                "--results",
                str(truncated),
            ]
        )
        assert code == 1
        assert "cannot pair" in capsys.readouterr().err

    def test_train_pt_and_link_with_filter(self, workspace, capsys):
        root, corpus = workspace
        pt_model = root / "pt.blaf"
        code = run(
            [
                "train-pt",
                "--train",
                str(corpus / "pt_train.jsonl"),
                "--out",
                str(pt_model),
                "--dim",
                "65536",
            ]
        )
        assert code == 0
        results = root / "results_pt.jsonl"
        code = run(
            [
                "link",
                "--queries",
                str(corpus / "test_shared.jsonl"),
                "--dict",
                str(root / "dict.blaf"),
                "--mode",
                "lexical",
                "--pt-model",
                str(pt_model),
                "--associations",
                str(corpus / "pt_associations.tsv"),
                "--out",
                str(results),
            ]
        )
        assert code == 0
        capsys.readouterr()
        rows = list(read_jsonl(results))
        assert len(rows) == sum(1 for _ in read_jsonl(corpus / "test_shared.jsonl"))
        # Shared surfaces resolve only through the filter; at least one
        # must have made it to a single prediction.
        assert any(r["outcome"] == "single" for r in rows)

    def test_train_xmc_q2e_and_link(self, workspace, capsys):
        root, corpus = workspace
        model_path = root / "q2e.blaf"
        code = run(
            [
                "train-xmc",
                "--train",
                f"{corpus / 'strong_labels.jsonl'},{corpus / 'weak_labels.jsonl'}",
                "--dict",
                str(root / "dict.blaf"),
                "--target",
                "q2e",
                "--dim",
                "65536",
                "--out",
                str(model_path),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "q2e model" in out
        results = root / "results_q2e.jsonl"
        code = run(
            [
                "link",
                "--queries",
                str(corpus / "test.jsonl"),
                "--mode",
                "q2e",
                "--q2e-model",
                str(model_path),
                "--out",
                str(results),
            ]
        )
        assert code == 0
        capsys.readouterr()
        rows = list(read_jsonl(results))
        assert rows
        assert {r["outcome"] for r in rows} <= {"single", "nil", "no_prediction"}

    def test_train_xmc_threads_do_not_change_bytes(self, workspace, capsys):
        root, corpus = workspace
        outputs = []
        for threads in ("1", "2"):
            path = root / f"m2e_t{threads}.blaf"
            code = run(
                [
                    "train-xmc",
                    "--train",
                    str(corpus / "strong_labels.jsonl"),
                    "--dict",
                    str(root / "dict.blaf"),
                    "--target",
                    "m2e",
                    "--dim",
                    "65536",
                    "--threads",
                    threads,
                    "--out",
                    str(path),
                ]
            )
            assert code == 0
            outputs.append(path.read_bytes())
        capsys.readouterr()
        assert outputs[0] == outputs[1]


def test_bench_reports_scaling_rows(tmp_path, capsys):
    out = tmp_path / "bench.json"
    code = run(
        [
            "bench",
            "--sizes",
            "60,120",
            "--queries",
            "20",
            "--dim",
            "65536",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "ratio:" in printed
    doc = json.loads(out.read_text())
    assert [row["labels"] for row in doc["rows"]] == [60, 120]
    for row in doc["rows"]:
        assert row["mean_ms"] > 0.0
