"""
Tests for the CLI runner (``vessel_transfer.cli.run``) and its discovery.

The runner scans a package's ``commands/`` directory, builds the argparse
parser, installs configuration defaults, wires up argcomplete and dispatches
to the selected command's ``run(args)``. These tests exercise that against a
throwaway package built on disk so discovery works exactly as it does for
``vessel_transfer`` itself.
"""

import builtins
import importlib
import os
import sys
import textwrap

import pytest

from vessel_transfer import cli


@pytest.fixture
def fake_pkg(tmp_path, monkeypatch):
    """Create an importable throwaway CLI package and yield its name."""
    pkg = tmp_path / "fakecli"
    (pkg / "commands").mkdir(parents=True)
    (pkg / "config").mkdir()
    (pkg / "__init__.py").write_text("")
    (pkg / "commands" / "__init__.py").write_text("")
    (pkg / "config" / "fakecli.yaml").write_text("name: shipped\nrepeat: 1\n")
    (pkg / "commands" / "say_hello.py").write_text(
        textwrap.dedent(
            '''
            """A minimal command for runner tests."""
            from vessel_transfer.command import Command


            class SayHello(Command):
                """Record the parsed arguments."""

                state = {}

                def define_arguments(self, parser):
                    super().define_arguments(parser)
                    parser.add_argument("--name")
                    parser.add_argument("--repeat", type=int)
                    return parser

                def execute(self, args):
                    SayHello.state.update(vars(args))
                    return 0
            '''
        )
    )
    monkeypatch.syspath_prepend(str(tmp_path))
    for mod in [m for m in sys.modules if m == "fakecli" or m.startswith("fakecli.")]:
        del sys.modules[mod]
    yield "fakecli"
    for mod in [m for m in sys.modules if m == "fakecli" or m.startswith("fakecli.")]:
        del sys.modules[mod]


def _state():
    from fakecli.commands.say_hello import SayHello  # pylint: disable=import-outside-toplevel

    return SayHello.state


def _write_command(tmp_path, module, body):
    (tmp_path / "fakecli" / "commands" / f"{module}.py").write_text(textwrap.dedent(body))


class TestDiscovery:
    """Filesystem discovery helpers."""

    def test_discover_commands(self, fake_pkg):
        pkg = importlib.import_module(fake_pkg)
        commands_dir = os.path.join(os.path.dirname(pkg.__file__), "commands")
        assert cli._discover_commands(commands_dir) == ["say_hello"]

    def test_discover_missing_dir_is_empty(self, tmp_path):
        assert cli._discover_commands(str(tmp_path / "nope")) == []

    def test_private_and_non_python_modules_skipped(self, tmp_path):
        (tmp_path / "__init__.py").write_text("")
        (tmp_path / "_options.py").write_text("")
        (tmp_path / "notes.txt").write_text("")
        (tmp_path / "train.py").write_text("")
        (tmp_path / "evaluate.py").write_text("")
        assert cli._discover_commands(str(tmp_path)) == ["evaluate", "train"]

    def test_class_name(self):
        assert cli._class_name("select_transfer") == "SelectTransfer"
        assert cli._class_name("synth") == "Synth"

    def test_vessel_transfer_commands_present(self):
        pkg = importlib.import_module("vessel_transfer")
        commands_dir = os.path.join(os.path.dirname(pkg.__file__), "commands")
        assert cli._discover_commands(commands_dir) == [
            "evaluate",
            "predict",
            "preprocess",
            "select_transfer",
            "synth",
            "train",
        ]


class TestRun:
    """End-to-end dispatch through the runner."""

    def test_dispatch_uses_dashed_name(self, fake_pkg):
        code = cli.run(package=fake_pkg, prog="fakecli", argv=["say-hello", "--name", "bob"])
        assert code == 0
        assert _state()["name"] == "bob"

    def test_shipped_defaults_installed(self, fake_pkg):
        assert cli.run(package=fake_pkg, argv=["say-hello"]) == 0
        assert _state()["name"] == "shipped"
        assert _state()["repeat"] == 1

    def test_config_file_overrides_defaults(self, fake_pkg, config_file):
        path = config_file("repeat = 3\n")
        assert cli.run(package=fake_pkg, argv=["--config", path, "say-hello"]) == 0
        assert _state()["repeat"] == 3
        assert _state()["name"] == "shipped"

    def test_config_after_subcommand(self, fake_pkg, config_file):
        path = config_file("name = from-file\n")
        assert cli.run(package=fake_pkg, argv=["say-hello", "--config", path]) == 0
        assert _state()["name"] == "from-file"

    def test_flag_beats_config_file(self, fake_pkg, config_file):
        path = config_file("repeat = 3\n")
        assert cli.run(package=fake_pkg, argv=["--config", path, "say-hello", "--repeat", "5"]) == 0
        assert _state()["repeat"] == 5

    def test_missing_config_file_is_usage_error(self, fake_pkg, tmp_path):
        assert cli.run(package=fake_pkg, argv=["--config", str(tmp_path / "nope"), "say-hello"]) == 2

    def test_missing_subcommand_is_usage_error(self, fake_pkg):
        assert cli.run(package=fake_pkg, prog="fakecli", argv=[]) == 2

    def test_unknown_flag_is_usage_error(self, fake_pkg):
        assert cli.run(package=fake_pkg, argv=["say-hello", "--bogus"]) == 2

    def test_help_exits_zero(self, fake_pkg, capsys):
        assert cli.run(package=fake_pkg, prog="fakecli", argv=["--help"]) == 0
        assert "say-hello" in capsys.readouterr().out

    def test_verbose_accepted_before_subcommand(self, fake_pkg):
        assert cli.run(package=fake_pkg, argv=["--verbose", "say-hello"]) == 0
        assert _state()["verbose"] is True

    def test_verbose_accepted_after_subcommand(self, fake_pkg):
        assert cli.run(package=fake_pkg, argv=["say-hello", "--verbose"]) == 0
        assert _state()["verbose"] is True

    def test_verbose_absent_defaults_false(self, fake_pkg):
        assert cli.run(package=fake_pkg, argv=["say-hello"]) == 0
        assert _state().get("verbose", False) is False

    def test_argv_defaults_to_sys_argv(self, fake_pkg, monkeypatch):
        monkeypatch.setattr(sys, "argv", ["fakecli", "say-hello", "--name", "argv"])
        assert cli.run(package=fake_pkg) == 0
        assert _state()["name"] == "argv"


class TestCommandSetupIsolation:
    """A broken command module is logged and skipped, not fatal to the CLI."""

    def test_missing_class_is_skipped(self, fake_pkg, tmp_path):
        _write_command(tmp_path, "oops", "class WrongName:\n    pass\n")
        assert cli.run(package=fake_pkg, argv=["say-hello", "--name", "z"]) == 0
        assert _state()["name"] == "z"

    def test_setup_error_is_isolated(self, fake_pkg, tmp_path):
        _write_command(
            tmp_path,
            "boom",
            """
            from vessel_transfer.command import Command


            class Boom(Command):
                def define_arguments(self, parser):
                    raise RuntimeError("kaboom")

                def execute(self, args):
                    return 0
            """,
        )
        assert cli.run(package=fake_pkg, argv=["say-hello"]) == 0

    def test_import_error_is_isolated(self, fake_pkg, tmp_path):
        _write_command(tmp_path, "badimport", "import a_module_that_does_not_exist_xyz  # noqa\n")
        assert cli.run(package=fake_pkg, argv=["say-hello"]) == 0

    def test_missing_argcomplete_is_graceful(self, fake_pkg, monkeypatch):
        real_import = builtins.__import__

        def fake_import(name, *args, **kwargs):
            if name == "argcomplete":
                raise ImportError("no argcomplete")
            return real_import(name, *args, **kwargs)

        monkeypatch.setattr(builtins, "__import__", fake_import)
        assert cli.run(package=fake_pkg, argv=["say-hello"]) == 0

    def test_command_run_exception_returns_one(self, fake_pkg, tmp_path):
        _write_command(
            tmp_path,
            "crash",
            """
            from vessel_transfer.command import Command


            class Crash(Command):
                def define_arguments(self, parser):
                    return parser

                def run(self, args):
                    raise RuntimeError("boom in run")

                def execute(self, args):
                    return 0
            """,
        )
        assert cli.run(package=fake_pkg, argv=["crash"]) == 1

    def test_domain_error_exit_code_propagates(self, fake_pkg, tmp_path):
        _write_command(
            tmp_path,
            "bad_input",
            """
            from vessel_transfer.command import Command
            from vessel_transfer.errors import ImageFormatError


            class BadInput(Command):
                def define_arguments(self, parser):
                    return parser

                def execute(self, args):
                    raise ImageFormatError("expected 255, got 65535", field="maxval")
            """,
        )
        assert cli.run(package=fake_pkg, argv=["bad-input"]) == 1


class TestMakeMain:
    """make_main wraps run() as a console-script entry point."""

    def test_success_does_not_exit(self, fake_pkg, monkeypatch):
        monkeypatch.setattr(sys, "argv", ["fakecli", "say-hello"])
        main = cli.make_main(fake_pkg, "fakecli", "desc")
        assert main() is None

    def test_failure_exits_nonzero(self, fake_pkg, monkeypatch):
        monkeypatch.setattr(sys, "argv", ["fakecli", "say-hello", "--bogus"])
        main = cli.make_main(fake_pkg, "fakecli", "desc")
        with pytest.raises(SystemExit) as exc:
            main()
        assert exc.value.code == 2

    def test_prog_defaults_to_argv0_basename(self, fake_pkg, monkeypatch):
        monkeypatch.setattr(sys, "argv", ["/usr/local/bin/fakecli", "say-hello"])
        assert cli.make_main(fake_pkg)() is None
