/**
 * Round trip against a live edit service (criterion-level checks): a
 * ~5k-vertex mesh, ten-plus handles, a drag whose handles land within
 * tolerance, and a per-drag latency budget.
 *
 * Requires a running service: start one with
 *   jacdeform serve --checkpoint <ckpt> --port 7430
 * and run EDIT_SERVICE_URL=http://127.0.0.1:7430 npm test
 * (tests/test_frontend_roundtrip.py in the parent package automates this).
 */

import { describe, expect, it } from "vitest";
import { EditorClient, translationTransform } from "../src/client.js";

const SERVICE_URL = process.env.EDIT_SERVICE_URL;

function barObj(nLength = 70, nCross = 17, length = 4.0, width = 0.5): string {
  // closed triangulated bar, ~5.3k vertices at the default resolution
  const nx = nLength, ny = nCross, nz = nCross;
  const step = [length / nx, width / ny, width / nz];
  const origin = [-length / 2, -width / 2, -width / 2];
  const index = new Map<string, number>();
  const vertices: number[][] = [];
  const vid = (i: number, j: number, k: number): number => {
    const key = `${i},${j},${k}`;
    let v = index.get(key);
    if (v === undefined) {
      v = vertices.length;
      index.set(key, v);
      vertices.push([
        origin[0] + step[0] * i,
        origin[1] + step[1] * j,
        origin[2] + step[2] * k,
      ]);
    }
    return v;
  };
  const quads: number[][] = [];
  for (let j = 0; j < ny; j++)
    for (let i = 0; i < nx; i++) {
      quads.push([vid(i, j, 0), vid(i, j + 1, 0), vid(i + 1, j + 1, 0), vid(i + 1, j, 0)]);
      quads.push([vid(i, j, nz), vid(i + 1, j, nz), vid(i + 1, j + 1, nz), vid(i, j + 1, nz)]);
    }
  for (let k = 0; k < nz; k++)
    for (let i = 0; i < nx; i++) {
      quads.push([vid(i, 0, k), vid(i + 1, 0, k), vid(i + 1, 0, k + 1), vid(i, 0, k + 1)]);
      quads.push([vid(i, ny, k), vid(i, ny, k + 1), vid(i + 1, ny, k + 1), vid(i + 1, ny, k)]);
    }
  for (let k = 0; k < nz; k++)
    for (let j = 0; j < ny; j++) {
      quads.push([vid(0, j, k), vid(0, j, k + 1), vid(0, j + 1, k + 1), vid(0, j + 1, k)]);
      quads.push([vid(nx, j, k), vid(nx, j + 1, k), vid(nx, j + 1, k + 1), vid(nx, j, k + 1)]);
    }
  const center = [0, 0, 0];
  const lines = vertices.map((v) => `v ${v[0]} ${v[1]} ${v[2]}`);
  for (const q of quads) {
    for (const tri of [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]) {
      const [a, b, c] = tri.map((t) => vertices[t]);
      const u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
      const w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
      const n = [
        u[1] * w[2] - u[2] * w[1],
        u[2] * w[0] - u[0] * w[2],
        u[0] * w[1] - u[1] * w[0],
      ];
      const mid = [
        (a[0] + b[0] + c[0]) / 3 - center[0],
        (a[1] + b[1] + c[1]) / 3 - center[1],
        (a[2] + b[2] + c[2]) / 3 - center[2],
      ];
      const ordered =
        n[0] * mid[0] + n[1] * mid[1] + n[2] * mid[2] >= 0 ? tri : [...tri].reverse();
      lines.push(`f ${ordered[0] + 1} ${ordered[1] + 1} ${ordered[2] + 1}`);
    }
  }
  return lines.join("\n") + "\n";
}

describe.skipIf(!SERVICE_URL)("live service round trip", () => {
  it("loads 5k vertices, selects handles, and lands a drag in budget", async () => {
    const client = new EditorClient(SERVICE_URL!);
    const obj = barObj();
    const info = await client.createSession(obj);
    expect(info.vertices).toBeGreaterThanOrEqual(5000);

    // anchor one end, drag the other: at least 10 handles on each side
    const mesh = client.mesh!;
    const xs = Array.from({ length: mesh.vertexCount }, (_, i) => mesh.positions[3 * i]);
    const xMin = Math.min(...xs);
    const xMax = Math.max(...xs);
    const left: number[] = [];
    const right: number[] = [];
    for (let i = 0; i < mesh.vertexCount; i++) {
      if (xs[i] < xMin + 1e-9) left.push(i);
      if (xs[i] > xMax - 1e-9) right.push(i);
    }
    expect(left.length + right.length).toBeGreaterThanOrEqual(10);
    client.addHandles(left);
    client.addHandles(right);
    const confirmed = await client.syncHandles();
    expect(confirmed).toEqual(client.selectionList());

    const before = Float64Array.from(client.mesh!.positions);
    const offset: [number, number, number] = [0, 0, 0.12];
    const started = performance.now();
    await client.applyEdit([translationTransform(right, offset)]);
    const latency = performance.now() - started;
    expect(latency).toBeLessThanOrEqual(1000);

    // rendered handle positions = requested targets, within tolerance
    let bbox = 0;
    for (let d = 0; d < 3; d++) {
      const values = Array.from(
        { length: mesh.vertexCount }, (_, i) => before[3 * i + d],
      );
      const extent = Math.max(...values) - Math.min(...values);
      bbox += extent * extent;
    }
    const tolerance = 1e-2 * Math.sqrt(bbox);
    let worst = 0;
    for (const v of right) {
      const dx = client.mesh!.positions[3 * v] - before[3 * v];
      const dy = client.mesh!.positions[3 * v + 1] - before[3 * v + 1];
      const dz = client.mesh!.positions[3 * v + 2] - (before[3 * v + 2] + offset[2]);
      worst = Math.max(worst, Math.hypot(dx, dy, dz));
    }
    expect(worst).toBeLessThanOrEqual(tolerance);

    // the rendered geometry is exactly what the service holds
    const exported = await client.exportMesh();
    expect(exported).not.toBe(obj);
  }, 30000);
});
