import { existsSync, mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it, vi } from "vitest";

import { CHART_KINDS } from "../src/charts";
import { main } from "../src/cli";

const FIXTURES = fileURLToPath(new URL("../fixtures", import.meta.url));

const INPUT_FOR: Record<string, string> = {
  DsrAscTrajectory: "trajectory.csv",
  TdsrFdsrSdrComparison: "rates.csv",
  DsrAatCombo: "dsr_aat.csv",
  CrdeLines: "crde.csv",
  FprBars: "fpr.csv",
  AttemptHeatmap: "attempts.csv",
  OodComparison: "ood.csv",
};

const quiet = () => {
  vi.spyOn(console, "log").mockImplementation(() => {});
  vi.spyOn(console, "error").mockImplementation(() => {});
};

describe("rvb-plots", () => {
  it("writes an svg for every chart kind", () => {
    quiet();
    const out = mkdtempSync(join(tmpdir(), "rvb-plots-"));
    for (const kind of CHART_KINDS) {
      const target = join(out, `${kind}.svg`);
      const code = main([
        "--kind", kind,
        "--in", join(FIXTURES, INPUT_FOR[kind]),
        "--out", target,
      ]);
      expect(code, kind).toBe(0);
      const svg = readFileSync(target, "utf-8");
      expect(svg.startsWith("<svg "), kind).toBe(true);
      expect(svg.length, kind).toBeGreaterThan(500);
    }
  });

  it("fails with a named column on a schema mismatch", () => {
    quiet();
    const errors = vi.mocked(console.error);
    const out = mkdtempSync(join(tmpdir(), "rvb-plots-"));
    const target = join(out, "bad.svg");
    const code = main([
      "--kind", "CrdeLines",
      "--in", join(FIXTURES, "rates.csv"),
      "--out", target,
    ]);
    expect(code).toBe(2);
    expect(errors.mock.calls.join("\n")).toContain('missing column "i"');
    expect(existsSync(target)).toBe(false);
  });

  it("rejects an unreadable input file", () => {
    quiet();
    expect(
      main(["--kind", "FprBars", "--in", "/no/such/file.csv", "--out", "/tmp/x.svg"])
    ).toBe(2);
  });

  it("rejects missing and unknown flags", () => {
    quiet();
    expect(main(["--kind", "FprBars"])).toBe(2);
    expect(main(["--wat", "1"])).toBe(2);
    expect(main([])).toBe(2);
  });

  it("rejects an unknown chart kind", () => {
    quiet();
    const code = main([
      "--kind", "Sparkline",
      "--in", join(FIXTURES, "fpr.csv"),
      "--out", "/tmp/x.svg",
    ]);
    expect(code).toBe(2);
  });
});
