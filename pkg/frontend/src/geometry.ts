/** Mesh payload -> typed arrays and per-face data used by the overlays. */

import * as THREE from "three";

import type { FieldPayload, MeshPayload } from "./api.js";

export interface MeshBuffers {
  positions: Float32Array; // n * 3
  indices: Uint32Array; // m * 3
  faceCentroids: Float32Array; // m * 3
  faceNormals: Float32Array; // m * 3
  meanEdge: number;
  n: number;
  m: number;
}

export function buildMeshBuffers(mesh: MeshPayload): MeshBuffers {
  const n = mesh.positions.length;
  const m = mesh.faces.length;
  const positions = new Float32Array(n * 3);
  for (let i = 0; i < n; i++) {
    positions[3 * i] = mesh.positions[i][0];
    positions[3 * i + 1] = mesh.positions[i][1];
    positions[3 * i + 2] = mesh.positions[i][2];
  }
  const indices = new Uint32Array(m * 3);
  const faceCentroids = new Float32Array(m * 3);
  const faceNormals = new Float32Array(m * 3);
  let edgeSum = 0;
  for (let f = 0; f < m; f++) {
    const [a, b, c] = mesh.faces[f];
    indices[3 * f] = a;
    indices[3 * f + 1] = b;
    indices[3 * f + 2] = c;
    for (let k = 0; k < 3; k++) {
      faceCentroids[3 * f + k] =
        (mesh.positions[a][k] + mesh.positions[b][k] + mesh.positions[c][k]) / 3;
      faceNormals[3 * f + k] = mesh.normals[f][k];
    }
    edgeSum +=
      dist(mesh.positions[a], mesh.positions[b]) +
      dist(mesh.positions[b], mesh.positions[c]) +
      dist(mesh.positions[c], mesh.positions[a]);
  }
  return {
    positions,
    indices,
    faceCentroids,
    faceNormals,
    meanEdge: m > 0 ? edgeSum / (3 * m) : 0,
    n,
    m,
  };
}

function dist(a: number[], b: number[]): number {
  const dx = a[0] - b[0];
  const dy = a[1] - b[1];
  const dz = a[2] - b[2];
  return Math.sqrt(dx * dx + dy * dy + dz * dz);
}

export function buildSurfaceGeometry(buffers: MeshBuffers): THREE.BufferGeometry {
  const geometry = new THREE.BufferGeometry();
  geometry.setAttribute("position", new THREE.BufferAttribute(buffers.positions, 3));
  geometry.setIndex(new THREE.BufferAttribute(buffers.indices, 1));
  geometry.computeVertexNormals();
  return geometry;
}

/** Per-face instance transform placing a unit-length glyph template along a
 * field direction at the face centroid. */
export function glyphMatrices(
  buffers: MeshBuffers,
  directions: number[][],
  scale: number,
): THREE.Matrix4[] {
  const out: THREE.Matrix4[] = [];
  const up = new THREE.Vector3(0, 1, 0); // template axis
  for (let f = 0; f < buffers.m; f++) {
    const dir = new THREE.Vector3(
      directions[f][0],
      directions[f][1],
      directions[f][2],
    ).normalize();
    const quat = new THREE.Quaternion().setFromUnitVectors(up, dir);
    const matrix = new THREE.Matrix4().compose(
      new THREE.Vector3(
        buffers.faceCentroids[3 * f],
        buffers.faceCentroids[3 * f + 1],
        buffers.faceCentroids[3 * f + 2],
      ),
      quat,
      new THREE.Vector3(scale, scale, scale),
    );
    out.push(matrix);
  }
  return out;
}

export function fieldLengthMatches(field: FieldPayload, buffers: MeshBuffers): boolean {
  return field.m === buffers.m && field.u.length === buffers.m && field.v.length === buffers.m;
}

/** Blue->red heat color for a planarity value against a fixed ceiling. */
export function etaColor(eta: number, ceiling = 0.05): THREE.Color {
  const t = Math.min(Math.max(eta / ceiling, 0), 1);
  return new THREE.Color(t, 0.1, 1 - t);
}
