"""Run the CLI on small inputs and validate the fit reports against the JSON schema."""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def fit_report(cli, workdir, incidence, *flags):
    out = workdir / "report.json"
    subprocess.run([cli, "fit", "--incidence", str(incidence), "--out", str(out), *flags], check=True)
    return json.loads(out.read_text())


def main():
    cli, schema_path = sys.argv[1], sys.argv[2]
    schema = json.loads(Path(schema_path).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)

    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(tmp)
        toy = workdir / "toy.csv"
        toy.write_text("id,c1,c2\na,1,0\nb,0,1\n")
        reports = [fit_report(cli, workdir, toy, "--G", "1", "--D", "1", "--starts", "2")]

        data = workdir / "sim"
        subprocess.run([cli, "simulate", "--replicates", "1", "--starts", "1", "--seed", "3",
                        "--data-out", str(data)], check=True, stdout=subprocess.DEVNULL)
        reports.append(fit_report(cli, workdir, data / "incidence.csv", "--covariates",
                                  str(data / "covariates.csv"), "--G", "3", "--D", "2", "--starts", "3"))

    failures = 0
    for report in reports:
        for error in validator.iter_errors(report):
            failures += 1
            print(f"{'/'.join(map(str, error.path))}: {error.message}")
    print(f"validated {len(reports)} reports, {failures} violations")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
