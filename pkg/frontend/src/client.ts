/**
 * Framework-free client for the edit service.
 *
 * All geometry held here comes verbatim from service responses: uploads
 * are echoed back through GET .../mesh, and every deformation replaces
 * the positions with the array the server returned. Rendering layers read
 * this state; nothing in the UI writes it.
 *
 * Edit requests coalesce: at most one request is in flight, drags faster
 * than the throttle interval replace the pending transform, and the
 * final drag state is always delivered.
 */

import { MeshData, parseObj } from "./objformat.js";

export interface EditTransform {
  indices: number[] | "all";
  rotation: number[]; // 3x3 row-major
  translation: number[]; // 3
}

export interface EditResult {
  vertices: Float64Array;
  faceEnergy: (number | null)[];
}

export interface SessionInfo {
  id: string;
  vertices: number;
  faces: number;
}

export class ServiceError extends Error {
  code: string;
  detail: unknown;

  constructor(status: number, code: string, message: string, detail?: unknown) {
    super(`${status} ${code}: ${message}`);
    this.code = code;
    this.detail = detail;
  }
}

export const IDENTITY_ROTATION = [1, 0, 0, 0, 1, 0, 0, 0, 1];

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class EditorClient {
  readonly baseUrl: string;
  sessionId: string | null = null;
  mesh: MeshData | null = null;
  selection = new Set<number>();
  lastFaceEnergy: (number | null)[] | null = null;
  /** Minimum spacing of throttled edit requests (>= 2 Hz live preview). */
  throttleMs = 400;

  private fetchImpl: FetchLike;
  private listeners = new Set<() => void>();
  private inFlight: Promise<void> | null = null;
  private pending: EditTransform[] | null = null;
  private lastSent = 0;

  constructor(baseUrl = "", fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl =
      fetchImpl ?? ((url, init) => fetch(url, init));
  }

  onMeshUpdated(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      let code = "http_error";
      let message = response.statusText;
      let detail: unknown;
      try {
        const body = await response.json();
        code = body.code ?? code;
        message = body.message ?? message;
        detail = body.detail;
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ServiceError(response.status, code, message, detail);
    }
    return response;
  }

  async createSession(objText: string): Promise<SessionInfo> {
    const response = await this.request("/session", {
      method: "POST",
      headers: { "Content-Type": "text/plain" },
      body: objText,
    });
    const info = (await response.json()) as SessionInfo;
    this.sessionId = info.id;
    this.selection.clear();
    this.lastFaceEnergy = null;
    await this.refreshMesh();
    return info;
  }

  private requireSession(): string {
    if (!this.sessionId) throw new Error("no active session");
    return this.sessionId;
  }

  /** Pull the server's current mesh; the only way positions enter the client. */
  async refreshMesh(): Promise<string> {
    const id = this.requireSession();
    const response = await this.request(`/session/${id}/mesh`);
    const text = await response.text();
    this.mesh = parseObj(text);
    this.notify();
    return text;
  }

  async exportMesh(): Promise<string> {
    const id = this.requireSession();
    const response = await this.request(`/session/${id}/mesh`);
    return response.text();
  }

  toggleHandle(index: number): void {
    if (this.selection.has(index)) this.selection.delete(index);
    else this.selection.add(index);
  }

  addHandles(indices: Iterable<number>): void {
    for (const index of indices) this.selection.add(index);
  }

  clearSelection(): void {
    this.selection.clear();
  }

  selectionList(): number[] {
    return Array.from(this.selection).sort((a, b) => a - b);
  }

  async syncHandles(): Promise<number[]> {
    const id = this.requireSession();
    const response = await this.request(`/session/${id}/handles`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ indices: this.selectionList() }),
    });
    const body = (await response.json()) as { handles: number[] };
    this.selection = new Set(body.handles);
    return body.handles;
  }

  /** Immediate edit round trip; replaces the mesh with the response. */
  async applyEdit(transforms: EditTransform[]): Promise<EditResult> {
    const id = this.requireSession();
    const response = await this.request(`/session/${id}/edit`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ transforms }),
    });
    const body = (await response.json()) as {
      vertices: number[];
      faceEnergy: (number | null)[];
    };
    const vertices = Float64Array.from(body.vertices);
    if (this.mesh) {
      this.mesh = { ...this.mesh, positions: vertices };
    }
    this.lastFaceEnergy = body.faceEnergy;
    this.notify();
    return { vertices, faceEnergy: body.faceEnergy };
  }

  /**
   * Throttled live-preview edit: coalesces to the newest transform while a
   * request is in flight or the interval has not elapsed. Returns a promise
   * that settles when the queue drains.
   */
  requestEdit(transforms: EditTransform[]): Promise<void> {
    this.pending = transforms;
    if (this.inFlight) return this.inFlight;
    this.inFlight = this.drainQueue();
    return this.inFlight;
  }

  /** Force out whatever is pending (drag end). */
  async flushEdits(): Promise<void> {
    if (this.inFlight) await this.inFlight;
  }

  private async drainQueue(): Promise<void> {
    try {
      while (this.pending) {
        const wait = this.lastSent + this.throttleMs - Date.now();
        if (wait > 0) await new Promise((r) => setTimeout(r, wait));
        const transforms = this.pending;
        this.pending = null;
        this.lastSent = Date.now();
        await this.applyEdit(transforms);
      }
    } finally {
      this.inFlight = null;
    }
  }
}

export function translationTransform(
  indices: number[] | "all",
  offset: [number, number, number],
): EditTransform {
  return { indices, rotation: [...IDENTITY_ROTATION], translation: [...offset] };
}
