import json
import sys

import jsonschema


def main():
    schema = json.load(open(sys.argv[1]))
    expected = sys.argv[2]
    report = json.load(open(sys.argv[3]))
    jsonschema.validate(report, schema, cls=jsonschema.Draft202012Validator)
    if report["status"] != expected:
        sys.exit(f"{sys.argv[3]}: status {report['status']}, expected {expected}")
    print(f"{sys.argv[3]}: valid, status {expected}")


if __name__ == "__main__":
    main()
