/** Studio session state machine: upload -> strokes -> solve -> layout.
 *
 * Owns the scene graph and the API client; rendering and DOM wiring live in
 * main.ts. Responses are filtered through a RevisionGuard so a stale solve
 * can never overwrite a newer one, and at most one solve is in flight
 * (mirroring the server's 409).
 */

import * as THREE from "three";

import {
  ApiClient,
  RevisionGuard,
  type SolveResult,
  type StrokePayload,
} from "./api.js";
import { buildMeshBuffers, buildSurfaceGeometry, type MeshBuffers } from "./geometry.js";
import { FieldOverlay, QuadOverlay, StreamlineOverlay } from "./overlay.js";

export interface StudioReadout {
  delta: number | null;
  energyTotal: number | null;
  singularities: number | null;
  revision: number;
  status: string;
}

export class StudioApp {
  readonly scene = new THREE.Scene();
  readonly fieldOverlay = new FieldOverlay();
  readonly streamlineOverlay = new StreamlineOverlay();
  readonly quadOverlay = new QuadOverlay();

  sessionId: string | null = null;
  buffers: MeshBuffers | null = null;
  surface: THREE.Mesh | null = null;
  strokes: StrokePayload[] = [];
  autoSolve = false;
  readonly readout: StudioReadout = {
    delta: null,
    energyTotal: null,
    singularities: null,
    revision: -1,
    status: "no session",
  };

  private guard = new RevisionGuard();
  private solveInFlight = false;
  private quadId: string | null = null;

  constructor(private api: ApiClient) {
    this.scene.add(
      this.fieldOverlay.group,
      this.streamlineOverlay.group,
      this.quadOverlay.group,
    );
  }

  async uploadMesh(objText: string): Promise<void> {
    const info = await this.api.createSession(objText);
    this.sessionId = info.session_id;
    this.guard = new RevisionGuard();
    this.guard.accept(info.revision);
    const payload = await this.api.getMesh(info.session_id);
    this.buffers = buildMeshBuffers(payload);
    if (this.surface) this.scene.remove(this.surface);
    this.surface = new THREE.Mesh(
      buildSurfaceGeometry(this.buffers),
      new THREE.MeshStandardMaterial({ color: 0xcccccc, side: THREE.DoubleSide }),
    );
    this.scene.add(this.surface);
    this.strokes = [];
    this.fieldOverlay.clear();
    this.readout.revision = this.guard.current;
    this.readout.status = `session ${info.session_id}: ${info.n} vertices, ${info.m} faces`;
  }

  /** Commit a finished stroke; empty/null strokes are discarded. */
  async commitStroke(stroke: StrokePayload | null): Promise<boolean> {
    if (!stroke || !this.sessionId) return false;
    this.strokes.push(stroke);
    const accepted = await this.api.putStrokes(this.sessionId, this.strokes);
    if (this.guard.accept(accepted.revision)) {
      this.readout.revision = accepted.revision;
      this.readout.status = `${this.strokes.length} strokes (${accepted.segments.reduce(
        (a, b) => a + b,
        0,
      )} segments)`;
    }
    if (this.autoSolve) await this.solve();
    return true;
  }

  async deleteStroke(index: number): Promise<void> {
    if (!this.sessionId || index < 0 || index >= this.strokes.length) return;
    this.strokes.splice(index, 1);
    if (this.strokes.length > 0) {
      const accepted = await this.api.putStrokes(this.sessionId, this.strokes);
      if (this.guard.accept(accepted.revision)) {
        this.readout.revision = accepted.revision;
      }
    }
  }

  /** Trigger a solve; concurrent calls are rejected locally (the server
   * would answer 409 anyway). Stale responses are discarded. */
  async solve(config?: Record<string, number>): Promise<SolveResult | null> {
    if (!this.sessionId || !this.buffers || this.solveInFlight) return null;
    this.solveInFlight = true;
    this.readout.status = "solving...";
    try {
      const result = await this.api.solve(this.sessionId, config);
      if (!this.guard.accept(result.revision)) {
        this.readout.status = "stale solve response discarded";
        return null;
      }
      this.fieldOverlay.setField(result.field, this.buffers);
      this.readout.delta = result.delta;
      this.readout.energyTotal = result.energy.total;
      this.readout.singularities = result.singularities;
      this.readout.revision = result.revision;
      this.readout.status = `solved (${result.field_id})`;
      return result;
    } finally {
      this.solveInFlight = false;
    }
  }

  async showStreamlines(count = 8): Promise<void> {
    if (!this.sessionId) return;
    const result = await this.api.streamlines(this.sessionId, { count });
    this.streamlineOverlay.setPolylines(result.polylines);
  }

  async extractQuads(spacing: number): Promise<void> {
    if (!this.sessionId) return;
    const result = await this.api.quads(this.sessionId, spacing);
    if (this.guard.accept(result.revision)) {
      this.quadId = result.quad_id;
      this.quadOverlay.setLayout(result.quad, result.planarity_before);
      this.readout.revision = result.revision;
      this.readout.status = `layout ${result.quad_id}: eta mean ${result.planarity_before.mean.toFixed(4)}`;
    }
  }

  async planarizeQuads(iters = 100): Promise<void> {
    if (!this.quadId) return;
    const result = await this.api.planarize(this.quadId, iters);
    if (this.guard.accept(result.revision)) {
      this.quadOverlay.setLayout(result.quad, result.planarity_after);
      this.readout.revision = result.revision;
      this.readout.status = `planarized: eta mean ${result.planarity_after.mean.toFixed(4)}`;
    }
  }
}
