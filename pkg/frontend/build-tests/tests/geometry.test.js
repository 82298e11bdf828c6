import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import path from "node:path";
import test from "node:test";
import { fileURLToPath } from "node:url";
import { boxToPixels, captionOrigin, denorm } from "../src/geometry.js";
const here = path.dirname(fileURLToPath(import.meta.url));
const fixtures = JSON.parse(
// compiled tests run from build-tests/tests; fixtures stay in tests/
readFileSync(path.resolve(here, "../../tests/fixtures/overlay_geometry.json"), "utf-8"));
test("overlay geometry matches server-rendered pixels within 1px", () => {
    assert.ok(fixtures.length >= 30, "fixture set unexpectedly small");
    for (const { width, height, box, expected } of fixtures) {
        const rect = boxToPixels(box, width, height);
        for (const key of ["x0", "y0", "x1", "y1"]) {
            const delta = Math.abs(rect[key] - expected[key]);
            assert.ok(delta <= 1, `${key} off by ${delta} for box ${box} on ${width}x${height}: ` +
                `client ${rect[key]} vs server ${expected[key]}`);
        }
    }
});
test("denorm is round-half-up on the dim-1 grid", () => {
    assert.equal(denorm(0.25, 100), 25); // 24.75 -> 25
    assert.equal(denorm(0.75, 100), 74); // 74.25 -> 74
    assert.equal(denorm(0.0, 64), 0);
    assert.equal(denorm(1.0, 64), 63);
});
test("caption sits above the box, pushed below the edge when clipped", () => {
    const rect = { x0: 30, y0: 40, x1: 60, y1: 70 };
    assert.deepEqual(captionOrigin(rect, 2), { x: 30, y: 32 });
    const atEdge = { x0: 5, y0: 3, x1: 30, y1: 30 };
    assert.deepEqual(captionOrigin(atEdge, 2), { x: 5, y: 6 });
});
