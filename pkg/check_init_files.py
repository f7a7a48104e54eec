import os
import sys

PACKAGE_ROOTS = ("lmm_deriv", "experiments")


def missing_init_files():
    """Package directories holding .py files but no __init__.py (nose2 and mypy skip them silently)."""
    missing = []
    for root in PACKAGE_ROOTS:
        for directory, _, file_names in os.walk(root):
            if "__pycache__" in directory:
                continue
            has_modules = any(name.endswith(".py") for name in file_names)
            if has_modules and "__init__.py" not in file_names:
                missing.append(os.path.join(directory, "__init__.py"))
    return sorted(missing)


if __name__ == "__main__":
    missing = missing_init_files()
    if missing:
        print("Missing init files:\n" + "\n".join(missing))
        sys.exit(1)
    print(f"Every package directory under {', '.join(PACKAGE_ROOTS)} has an __init__.py")
