/** ASCII OBJ parsing for meshes served by the edit service. */

export interface MeshData {
  positions: Float64Array; // 3 * vertexCount, row-major
  faces: Uint32Array; // 3 * faceCount, 0-based
  vertexCount: number;
  faceCount: number;
}

export function parseObj(text: string): MeshData {
  const positions: number[] = [];
  const faces: number[] = [];
  const lines = text.split("\n");
  for (let lineno = 0; lineno < lines.length; lineno++) {
    const line = lines[lineno].trim();
    if (!line || line.startsWith("#")) continue;
    const tokens = line.split(/\s+/);
    if (tokens[0] === "v") {
      if (tokens.length < 4) {
        throw new Error(`line ${lineno + 1}: vertex needs 3 coordinates`);
      }
      positions.push(Number(tokens[1]), Number(tokens[2]), Number(tokens[3]));
    } else if (tokens[0] === "f") {
      if (tokens.length !== 4) {
        throw new Error(`line ${lineno + 1}: only triangles are supported`);
      }
      for (let c = 1; c <= 3; c++) {
        const index = parseInt(tokens[c].split("/")[0], 10);
        if (!Number.isFinite(index) || index <= 0) {
          throw new Error(`line ${lineno + 1}: bad face index ${tokens[c]}`);
        }
        faces.push(index - 1);
      }
    }
  }
  if (positions.length === 0) throw new Error("no vertices found");
  const data: MeshData = {
    positions: Float64Array.from(positions),
    faces: Uint32Array.from(faces),
    vertexCount: positions.length / 3,
    faceCount: faces.length / 3,
  };
  for (const index of data.faces) {
    if (index >= data.vertexCount) throw new Error("face index out of range");
  }
  return data;
}
