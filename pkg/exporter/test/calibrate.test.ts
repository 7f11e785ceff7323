import { describe, expect, it } from "vitest";

import { calibrateCosts } from "../src/calibrate.js";
import { StubEncoder } from "../src/encoders.js";

describe("cost calibration", () => {
  it("normalizes the first variant to 1.0", async () => {
    const result = await calibrateCosts(
      [new StubEncoder("B/32", 2), new StubEncoder("B/16", 2)],
      ["a.jpg", "b.jpg"],
      3,
    );
    expect(result.units["B/32"]).toBe(1.0);
    expect(result.units["B/16"]).toBeGreaterThan(0);
  });

  it("identical work times out near ratio 1", async () => {
    const result = await calibrateCosts(
      [new StubEncoder("B/32", 3), new StubEncoder("B/16", 3)],
      ["a.jpg", "b.jpg", "c.jpg"],
      5,
    );
    expect(result.units["B/16"]).toBeGreaterThan(0.5);
    expect(result.units["B/16"]).toBeLessThan(2.0);
  });

  it("slower encoders get proportionally larger units", async () => {
    const result = await calibrateCosts(
      [new StubEncoder("B/32", 2), new StubEncoder("L/14", 8)],
      ["a.jpg", "b.jpg"],
      3,
    );
    expect(result.units["L/14"]).toBeGreaterThan(2.0);
    expect(result.units["L/14"]).toBeLessThan(8.0);
  });

  it("requires encoders and samples", async () => {
    await expect(calibrateCosts([], ["a.jpg"])).rejects.toThrow(/encoder/);
    await expect(
      calibrateCosts([new StubEncoder("B/32")], []),
    ).rejects.toThrow(/sample/);
  });

  it("reports spread per variant", async () => {
    const result = await calibrateCosts(
      [new StubEncoder("B/32", 2)],
      ["a.jpg"],
      4,
    );
    expect(result.spreads["B/32"]).toBeGreaterThanOrEqual(0);
  });
});
