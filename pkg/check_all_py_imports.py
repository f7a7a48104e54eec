import importlib
import os
import sys
from glob import glob
from typing import Dict

PACKAGE = "lmm_deriv"


def _module_name(path: str) -> str:
    return ".".join(os.path.normpath(path)[: -len(".py")].split(os.sep))


def failed_imports() -> Dict[str, str]:
    failures = {}
    for path in sorted(glob(os.path.join(PACKAGE, "**", "*.py"), recursive=True)):
        try:
            importlib.import_module(_module_name(path))
        except ImportError as error:
            failures[path] = str(error)
    return failures


if __name__ == "__main__":
    failures = failed_imports()
    if failures:
        print("Could not import:\n" + "\n".join(f"{path}: {error}" for path, error in failures.items()))
        sys.exit(1)
    print(f"Every module under {PACKAGE} imports.")
