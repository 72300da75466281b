"""
Artefact writer for a scenario run.

Tables go to one CSV each, with a header row and floats written with repr
so they round-trip. The run report is written as report.txt and
report.json; with a zip path every artefact is also bundled into one
archive.
"""

import csv
import logging
import pathlib
import zipfile

logger = logging.getLogger("packager")
logger.setLevel(logging.INFO)

def _cell(v):
    if isinstance(v, float):
        return repr(float(v))
    if hasattr(v, "item"):
        return _cell(v.item())
    return v

class Packager:

    def __init__(self, out, zip_path=None, quiet=False):
        self.out = pathlib.Path(out)
        self.zip_path = pathlib.Path(zip_path) if zip_path else None
        self.quiet = quiet
        self.written = []

    def _path(self, name):
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name

    def _wrote(self, path):
        self.written.append(path)
        logger.debug(f"Wrote {path}")

    def write_table(self, name, header, rows):

        path = self._path(name)

        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])

        self._wrote(path)

        return path

    def write_text(self, name, text):

        path = self._path(name)

        with open(path, "w") as f:
            f.write(text)

        self._wrote(path)

        return path

    @property
    def artefacts(self):
        return [p.name for p in self.written]

    def write_report(self, report):

        report.artefacts = self.artefacts + ["report.txt", "report.json"]

        self.write_text("report.txt", report.to_text())
        self.write_text("report.json", report.to_json())

        if not self.quiet:
            print(f"Wrote {self.out}.")

        if self.zip_path is not None:
            self.bundle()

    def bundle(self):

        with zipfile.ZipFile(self.zip_path, mode="w") as out:
            for path in self.written:
                logger.info(f"Adding {path.name}...")
                out.write(path, arcname=path.name)

        if not self.quiet:
            print(f"Wrote {self.zip_path}.")

        return self.zip_path
