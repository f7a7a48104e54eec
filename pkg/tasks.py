from invoke import task

PACKAGE = "lmm_deriv"
MODULES_TO_CHECK = [PACKAGE, "experiments", "*.py"]
MODULES_TO_CHECK_STR = " ".join(MODULES_TO_CHECK)
LINE_LENGTH = 120
FLAKE_PER_FILE_IGNORES = "lmm_deriv/*.py:E203,experiments/*.py:E402"
SLEEPSTUDY_ARGS = (
    "--data lmm_deriv/data/sleepstudy.csv --response Reaction --fixed Days --random Days --group Subject"
)


@task
def black_reformat(c):
    c.run(f"black --line-length {LINE_LENGTH} {MODULES_TO_CHECK_STR}")


@task
def check_python(c):
    c.run(f"black --check --line-length {LINE_LENGTH} {MODULES_TO_CHECK_STR}")
    print("Running flake8...")
    c.run(f"flake8 --max-line-length {LINE_LENGTH} {MODULES_TO_CHECK_STR} --per-file-ignores={FLAKE_PER_FILE_IGNORES}")
    print("No flake8 errors")
    print("Running mypy...")
    c.run(f"mypy -p {PACKAGE}")
    print("No mypy errors")
    c.run("python check_init_files.py")
    c.run("python check_all_py_imports.py")


@task
def test(c):
    c.run(f"nose2 -s . {PACKAGE}")


@task(help={"subcommand": "fit, scores, vcov or sandwich"})
def sleepstudy(c, subcommand="vcov"):
    """Runs a subcommand of the command-line tool on the bundled sleepstudy data."""
    c.run(f"python -m {PACKAGE} {subcommand} {SLEEPSTUDY_ARGS}")
