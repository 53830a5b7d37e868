"""Validate example run configs against the published JSON schema."""
import json
import sys

import jsonschema


def main(schema_path, *config_paths):
    schema = json.load(open(schema_path))
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)
    failures = 0
    for path in config_paths:
        errors = list(validator.iter_errors(json.load(open(path))))
        for e in errors:
            print(f"{path}: {'.'.join(map(str, e.path))}: {e.message}")
        failures += bool(errors)
    for bad in ({"model": {"d_rssa": 3}}, {"train": {"learning_rate": "fast"}}, {"model": {"ablation": "none"}}):
        if validator.is_valid(bad):
            print(f"schema accepted invalid config {bad}")
            failures += 1
    print(f"{len(config_paths)} configs checked, {failures} problems")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
