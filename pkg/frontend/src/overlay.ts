/** Field, streamline, and quad-layout overlays as three.js scene objects.
 *
 * Glyphs are InstancedMesh instances (one per face and family) so the
 * rendered overlay always carries exactly m instances per family. Above
 * DECIMATE_THRESHOLD faces only every k-th glyph is visible; decimation is
 * display-only and never changes the instance count.
 */

import * as THREE from "three";

import type { FieldPayload, PlanarityPayload, QuadPayload } from "./api.js";
import { etaColor, fieldLengthMatches, glyphMatrices, type MeshBuffers } from "./geometry.js";

export const DECIMATE_THRESHOLD = 10000;

export class FieldOverlay {
  readonly group = new THREE.Group();
  private uGlyphs: THREE.InstancedMesh | null = null;
  private vGlyphs: THREE.InstancedMesh | null = null;

  /** Rebuild the double-headed glyph pair for a solved field. Throws on a
   * field/mesh length mismatch. */
  setField(field: FieldPayload, buffers: MeshBuffers): void {
    if (!fieldLengthMatches(field, buffers)) {
      throw new Error(
        `field has ${field.m} faces but the mesh has ${buffers.m}`,
      );
    }
    this.clear();
    const scale = 0.8 * buffers.meanEdge;
    this.uGlyphs = buildGlyphInstances(buffers, field.u, scale, 0x2266dd);
    this.vGlyphs = buildGlyphInstances(buffers, field.v, scale, 0xdd7722);
    this.group.add(this.uGlyphs, this.vGlyphs);
  }

  clear(): void {
    this.group.clear();
    this.uGlyphs = null;
    this.vGlyphs = null;
  }

  /** Instances per family (0 when no field is loaded). */
  glyphCount(): number {
    return this.uGlyphs ? this.uGlyphs.count : 0;
  }
}

function buildGlyphInstances(
  buffers: MeshBuffers,
  directions: number[][],
  scale: number,
  color: number,
): THREE.InstancedMesh {
  // double-headed: a thin box spanning [-0.5, 0.5] along its axis reads as a
  // line segment centered on the face
  const template = new THREE.BoxGeometry(0.06, 1.0, 0.06);
  const material = new THREE.MeshBasicMaterial({ color });
  const mesh = new THREE.InstancedMesh(template, material, buffers.m);
  const matrices = glyphMatrices(buffers, directions, scale);
  const stride =
    buffers.m > DECIMATE_THRESHOLD ? Math.ceil(buffers.m / DECIMATE_THRESHOLD) : 1;
  const hidden = new THREE.Matrix4().makeScale(0, 0, 0);
  for (let f = 0; f < buffers.m; f++) {
    mesh.setMatrixAt(f, f % stride === 0 ? matrices[f] : hidden);
  }
  mesh.instanceMatrix.needsUpdate = true;
  return mesh;
}

export class StreamlineOverlay {
  readonly group = new THREE.Group();

  setPolylines(polylines: number[][][]): void {
    this.group.clear();
    for (const line of polylines) {
      if (line.length < 2) continue;
      const pts = line.map((p) => new THREE.Vector3(p[0], p[1], p[2]));
      const geometry = new THREE.BufferGeometry().setFromPoints(pts);
      this.group.add(
        new THREE.Line(geometry, new THREE.LineBasicMaterial({ color: 0x111111 })),
      );
    }
  }

  lineCount(): number {
    return this.group.children.length;
  }
}

export class QuadOverlay {
  readonly group = new THREE.Group();

  /** Quad wireframe with per-quad eta heat coloring. */
  setLayout(quad: QuadPayload, planarity: PlanarityPayload): void {
    this.group.clear();
    for (let q = 0; q < quad.quads.length; q++) {
      const idx = quad.quads[q];
      const pts = [...idx, idx[0]].map((i) => {
        const p = quad.positions[i];
        return new THREE.Vector3(p[0], p[1], p[2]);
      });
      const geometry = new THREE.BufferGeometry().setFromPoints(pts);
      const material = new THREE.LineBasicMaterial({
        color: etaColor(planarity.eta[q]),
      });
      this.group.add(new THREE.Line(geometry, material));
    }
  }

  quadCount(): number {
    return this.group.children.length;
  }
}
