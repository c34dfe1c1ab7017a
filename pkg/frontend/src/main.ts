import { EditorClient, ServiceError } from "./client.js";
import { Viewer } from "./viewer.js";

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const banner = element<HTMLDivElement>("banner");
const status = element<HTMLSpanElement>("status");

function showError(error: unknown): void {
  const message =
    error instanceof ServiceError
      ? `${error.message}${error.detail ? ` (${JSON.stringify(error.detail)})` : ""}`
      : String(error);
  banner.textContent = message;
  banner.style.display = "block";
  window.setTimeout(() => (banner.style.display = "none"), 8000);
}

const serviceUrl = element<HTMLInputElement>("service-url");
serviceUrl.value = window.location.origin;

let client = new EditorClient(serviceUrl.value);
const canvas = element<HTMLCanvasElement>("view");
let viewer = new Viewer(canvas, client);

function bindClient(): void {
  client.onMeshUpdated(() => {
    status.textContent = client.mesh
      ? `${client.mesh.vertexCount} vertices, ${client.mesh.faceCount} faces, ` +
        `${client.selection.size} handles`
      : "no mesh";
  });
}
bindClient();

serviceUrl.addEventListener("change", () => {
  client = new EditorClient(serviceUrl.value);
  viewer = new Viewer(canvas, client);
  bindClient();
});

element<HTMLInputElement>("mesh-file").addEventListener("change", async (event) => {
  const input = event.target as HTMLInputElement;
  const file = input.files?.[0];
  if (!file) return;
  try {
    const text = await file.text();
    const info = await client.createSession(text);
    status.textContent = `session ${info.id}: ${info.vertices} vertices`;
  } catch (error) {
    showError(error);
  }
});

element<HTMLButtonElement>("clear-selection").addEventListener("click", async () => {
  client.clearSelection();
  viewer.refreshSelectionColors();
  try {
    await client.syncHandles();
  } catch (error) {
    showError(error);
  }
});

element<HTMLButtonElement>("toggle-energy").addEventListener("click", () => {
  viewer.toggleEnergy();
});

element<HTMLButtonElement>("export-obj").addEventListener("click", async () => {
  try {
    const text = await client.exportMesh();
    const blob = new Blob([text], { type: "text/plain" });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "edited.obj";
    link.click();
    URL.revokeObjectURL(link.href);
  } catch (error) {
    showError(error);
  }
});
