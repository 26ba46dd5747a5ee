/** Typed client for the cdfkit HTTP service.
 *
 * Every mutating response carries a monotonically increasing per-session
 * revision counter; `freshest` helps callers discard stale replies that
 * arrive out of order.
 */

export interface SessionInfo {
  session_id: string;
  n: number;
  m: number;
  revision: number;
}

export interface MeshPayload {
  positions: number[][];
  faces: number[][];
  normals: number[][];
  revision: number;
}

export interface StrokePayload {
  points: number[][];
}

export interface StrokesAccepted {
  segments: number[];
  revision: number;
}

export interface FieldPayload {
  m: number;
  u: number[][];
  v: number[][];
}

export interface EnergyBreakdown {
  L_d: number;
  L_dn: number;
  L_ds: number;
  L_dc: number;
  L_fr: number;
  L_conj: number;
  total: number;
}

export interface SolveResult {
  field_id: string;
  field: FieldPayload;
  energy: EnergyBreakdown;
  delta: number | null;
  singularities: number;
  revision: number;
}

export interface StreamlinesResult {
  polylines: number[][][];
  revision: number;
}

export interface QuadPayload {
  positions: number[][];
  quads: number[][];
}

export interface PlanarityPayload {
  eta: number[];
  mean: number;
  max: number;
}

export interface QuadsResult {
  quad_id: string;
  quad: QuadPayload;
  planarity_before: PlanarityPayload;
  revision: number;
}

export interface PlanarizeResult {
  quad: QuadPayload;
  planarity_before: PlanarityPayload;
  planarity_after: PlanarityPayload;
  revision: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function unwrap<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(private baseUrl: string) {}

  async createSession(objText: string): Promise<SessionInfo> {
    return unwrap(
      await fetch(`${this.baseUrl}/api/sessions`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ mesh: objText }),
      }),
    );
  }

  async getMesh(sessionId: string): Promise<MeshPayload> {
    return unwrap(await fetch(`${this.baseUrl}/api/sessions/${sessionId}/mesh`));
  }

  async putStrokes(
    sessionId: string,
    strokes: StrokePayload[],
  ): Promise<StrokesAccepted> {
    return unwrap(
      await fetch(`${this.baseUrl}/api/sessions/${sessionId}/strokes`, {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ strokes }),
      }),
    );
  }

  async solve(
    sessionId: string,
    config?: Record<string, number>,
  ): Promise<SolveResult> {
    return unwrap(
      await fetch(`${this.baseUrl}/api/sessions/${sessionId}/solve`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(config ? { config } : {}),
      }),
    );
  }

  async streamlines(
    sessionId: string,
    opts: { seeds?: { point: number[]; family?: string }[]; count?: number } = {},
  ): Promise<StreamlinesResult> {
    return unwrap(
      await fetch(`${this.baseUrl}/api/sessions/${sessionId}/streamlines`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(opts),
      }),
    );
  }

  async quads(sessionId: string, spacing: number): Promise<QuadsResult> {
    return unwrap(
      await fetch(`${this.baseUrl}/api/sessions/${sessionId}/quads`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ spacing }),
      }),
    );
  }

  async planarize(quadId: string, iters?: number): Promise<PlanarizeResult> {
    return unwrap(
      await fetch(`${this.baseUrl}/api/quads/${quadId}/planarize`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(iters ? { iters } : {}),
      }),
    );
  }
}

/** Revision guard: keeps the highest revision seen and reports staleness. */
export class RevisionGuard {
  private latest = -1;

  /** Accept `revision` if it is newer than anything seen; returns false for
   * stale replies the caller must discard. */
  accept(revision: number): boolean {
    if (revision <= this.latest) return false;
    this.latest = revision;
    return true;
  }

  get current(): number {
    return this.latest;
  }
}
