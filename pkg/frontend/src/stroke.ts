/** Pointer-path capture: raycast normalized device coordinates onto the
 * surface mesh and accumulate on-surface points into a stroke polyline.
 *
 * Pure math on top of THREE.Raycaster — no DOM or WebGL involved — so the
 * same code drives both the browser pointer handlers and headless tests. */

import * as THREE from "three";

import type { StrokePayload } from "./api.js";

export class StrokeTool {
  private raycaster = new THREE.Raycaster();
  private current: number[][] | null = null;

  constructor(
    private surface: THREE.Mesh,
    private camera: THREE.Camera,
  ) {}

  begin(): void {
    this.current = [];
  }

  /** Sample the pointer at NDC (x, y in [-1, 1]); off-mesh rays are skipped. */
  addPointerSample(ndcX: number, ndcY: number): boolean {
    if (this.current === null) return false;
    this.raycaster.setFromCamera(new THREE.Vector2(ndcX, ndcY), this.camera);
    const hits = this.raycaster.intersectObject(this.surface, false);
    if (hits.length === 0) return false;
    const p = hits[0].point;
    this.current.push([p.x, p.y, p.z]);
    return true;
  }

  /** Finish the stroke; polylines with fewer than 2 points are discarded. */
  end(): StrokePayload | null {
    const points = this.current;
    this.current = null;
    if (points === null || points.length < 2) return null;
    return { points };
  }

  get active(): boolean {
    return this.current !== null;
  }

  get sampleCount(): number {
    return this.current ? this.current.length : 0;
  }
}
