/**
 * three.js rendering shell: orbit navigation, vertex picking, selection
 * rectangle, and a translate drag for the current handle set.
 *
 * The viewer is a pure view of EditorClient state. Render buffers are
 * rebuilt from the client's mesh whenever the service responds; dragging
 * sends transforms and waits for positions to come back.
 */

import * as THREE from "three";
import { EditorClient, translationTransform } from "./client.js";

const HANDLE_COLOR = new THREE.Color(0xee2222);
const VERTEX_COLOR = new THREE.Color(0x3366aa);
const PICK_RADIUS_PX = 12;

interface DragState {
  pointerId: number;
  start: THREE.Vector2;
  offset: THREE.Vector3;
  plane: THREE.Plane;
  anchor: THREE.Vector3;
}

export class Viewer {
  readonly canvas: HTMLCanvasElement;
  showEnergy = false;

  private client: EditorClient;
  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private surface: THREE.Mesh | null = null;
  private points: THREE.Points | null = null;
  private pointColors: THREE.BufferAttribute | null = null;
  // orbit state
  private target = new THREE.Vector3();
  private spherical = new THREE.Spherical(3, Math.PI / 3, Math.PI / 4);
  private rotating = false;
  private rectStart: THREE.Vector2 | null = null;
  private rectElement: HTMLDivElement;
  private drag: DragState | null = null;

  constructor(canvas: HTMLCanvasElement, client: EditorClient) {
    this.canvas = canvas;
    this.client = client;
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(45, 1, 0.01, 100);
    this.scene.background = new THREE.Color(0x16181d);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.45));
    const key = new THREE.DirectionalLight(0xffffff, 1.2);
    key.position.set(2, 3, 4);
    this.scene.add(key);
    const fill = new THREE.DirectionalLight(0xaab4ff, 0.5);
    fill.position.set(-3, -1, -2);
    this.scene.add(fill);

    this.rectElement = document.createElement("div");
    this.rectElement.style.cssText =
      "position:fixed;border:1px dashed #fff;background:rgba(120,160,255,.15);" +
      "pointer-events:none;display:none;z-index:10";
    document.body.appendChild(this.rectElement);

    client.onMeshUpdated(() => this.rebuildGeometry());
    canvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    window.addEventListener("pointermove", (e) => this.onPointerMove(e));
    window.addEventListener("pointerup", (e) => this.onPointerUp(e));
    canvas.addEventListener("wheel", (e) => this.onWheel(e), { passive: false });
    window.addEventListener("resize", () => this.resize());
    this.resize();
    this.animate();
  }

  private resize(): void {
    const width = this.canvas.clientWidth || window.innerWidth;
    const height = this.canvas.clientHeight || window.innerHeight;
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
  }

  private animate = (): void => {
    requestAnimationFrame(this.animate);
    this.camera.position.setFromSpherical(this.spherical).add(this.target);
    this.camera.lookAt(this.target);
    this.renderer.render(this.scene, this.camera);
  };

  /** Rebuild render buffers from the client's (server-supplied) mesh. */
  private rebuildGeometry(): void {
    const mesh = this.client.mesh;
    if (!mesh) return;
    if (this.surface) this.scene.remove(this.surface);
    if (this.points) this.scene.remove(this.points);

    const positions = new Float32Array(mesh.positions);
    const geometry = new THREE.BufferGeometry();
    if (this.showEnergy && this.client.lastFaceEnergy) {
      // non-indexed copy so each face can carry its own heat color
      const expanded = new Float32Array(mesh.faceCount * 9);
      const colors = new Float32Array(mesh.faceCount * 9);
      const energies = this.client.lastFaceEnergy;
      const finite = energies.filter((e): e is number => e !== null);
      const low = Math.min(...finite, 4);
      const high = Math.max(...finite, low + 1e-9);
      const color = new THREE.Color();
      for (let f = 0; f < mesh.faceCount; f++) {
        const e = energies[f];
        const t = e === null ? 1 : (e - low) / (high - low);
        color.setHSL(0.66 * (1 - Math.min(1, Math.max(0, t))), 0.9, 0.5);
        for (let c = 0; c < 3; c++) {
          const v = mesh.faces[3 * f + c];
          expanded.set(
            positions.subarray(3 * v, 3 * v + 3),
            9 * f + 3 * c,
          );
          colors[9 * f + 3 * c] = color.r;
          colors[9 * f + 3 * c + 1] = color.g;
          colors[9 * f + 3 * c + 2] = color.b;
        }
      }
      geometry.setAttribute("position", new THREE.BufferAttribute(expanded, 3));
      geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
    } else {
      geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
      geometry.setIndex(new THREE.BufferAttribute(mesh.faces.slice(), 1));
    }
    geometry.computeVertexNormals();
    const material = new THREE.MeshStandardMaterial({
      color: this.showEnergy ? 0xffffff : 0x8d99b8,
      vertexColors: this.showEnergy,
      flatShading: true,
      side: THREE.DoubleSide,
    });
    this.surface = new THREE.Mesh(geometry, material);
    this.scene.add(this.surface);

    const pointGeometry = new THREE.BufferGeometry();
    pointGeometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
    const colorData = new Float32Array(mesh.vertexCount * 3);
    this.pointColors = new THREE.BufferAttribute(colorData, 3);
    pointGeometry.setAttribute("color", this.pointColors);
    this.points = new THREE.Points(
      pointGeometry,
      new THREE.PointsMaterial({ size: 6, sizeAttenuation: false, vertexColors: true }),
    );
    this.scene.add(this.points);
    this.refreshSelectionColors();
    this.frameMesh();
  }

  refreshSelectionColors(): void {
    const mesh = this.client.mesh;
    if (!mesh || !this.pointColors) return;
    const data = this.pointColors.array as Float32Array;
    for (let v = 0; v < mesh.vertexCount; v++) {
      const color = this.client.selection.has(v) ? HANDLE_COLOR : VERTEX_COLOR;
      data[3 * v] = color.r;
      data[3 * v + 1] = color.g;
      data[3 * v + 2] = color.b;
    }
    this.pointColors.needsUpdate = true;
  }

  private framed = false;

  private frameMesh(): void {
    if (this.framed || !this.surface) return;
    this.surface.geometry.computeBoundingSphere();
    const sphere = this.surface.geometry.boundingSphere;
    if (!sphere) return;
    this.target.copy(sphere.center);
    this.spherical.radius = sphere.radius * 3;
    this.framed = true;
  }

  toggleEnergy(): void {
    this.showEnergy = !this.showEnergy;
    this.rebuildGeometry();
  }

  /** Screen-space positions of every vertex (for picking). */
  private projectVertices(): Float32Array | null {
    const mesh = this.client.mesh;
    if (!mesh) return null;
    const rect = this.canvas.getBoundingClientRect();
    const out = new Float32Array(mesh.vertexCount * 2);
    const v = new THREE.Vector3();
    this.camera.updateMatrixWorld();
    for (let i = 0; i < mesh.vertexCount; i++) {
      v.set(
        mesh.positions[3 * i],
        mesh.positions[3 * i + 1],
        mesh.positions[3 * i + 2],
      ).project(this.camera);
      out[2 * i] = rect.left + ((v.x + 1) / 2) * rect.width;
      out[2 * i + 1] = rect.top + ((1 - v.y) / 2) * rect.height;
    }
    return out;
  }

  private nearestVertex(x: number, y: number): number | null {
    const projected = this.projectVertices();
    if (!projected) return null;
    let best = -1;
    let bestD2 = PICK_RADIUS_PX * PICK_RADIUS_PX;
    for (let i = 0; i < projected.length / 2; i++) {
      const dx = projected[2 * i] - x;
      const dy = projected[2 * i + 1] - y;
      const d2 = dx * dx + dy * dy;
      if (d2 < bestD2) {
        bestD2 = d2;
        best = i;
      }
    }
    return best >= 0 ? best : null;
  }

  private vertexPosition(index: number): THREE.Vector3 {
    const mesh = this.client.mesh!;
    return new THREE.Vector3(
      mesh.positions[3 * index],
      mesh.positions[3 * index + 1],
      mesh.positions[3 * index + 2],
    );
  }

  private onPointerDown(event: PointerEvent): void {
    if (event.button !== 0) return;
    if (event.shiftKey) {
      this.rectStart = new THREE.Vector2(event.clientX, event.clientY);
      return;
    }
    const picked = this.nearestVertex(event.clientX, event.clientY);
    if (picked !== null && this.client.selection.has(picked)) {
      // start a translate drag of the whole handle set, camera-parallel
      const anchor = this.vertexPosition(picked);
      const normal = new THREE.Vector3();
      this.camera.getWorldDirection(normal);
      this.drag = {
        pointerId: event.pointerId,
        start: new THREE.Vector2(event.clientX, event.clientY),
        offset: new THREE.Vector3(),
        plane: new THREE.Plane().setFromNormalAndCoplanarPoint(normal, anchor),
        anchor,
      };
      this.canvas.setPointerCapture(event.pointerId);
      return;
    }
    if (picked !== null) {
      this.client.toggleHandle(picked);
      this.refreshSelectionColors();
      void this.client.syncHandles().then(() => this.refreshSelectionColors());
      return;
    }
    this.rotating = true;
  }

  private pointerRay(x: number, y: number): THREE.Ray {
    const rect = this.canvas.getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((x - rect.left) / rect.width) * 2 - 1,
      -((y - rect.top) / rect.height) * 2 + 1,
    );
    const raycaster = new THREE.Raycaster();
    raycaster.setFromCamera(ndc, this.camera);
    return raycaster.ray;
  }

  private onPointerMove(event: PointerEvent): void {
    if (this.drag && event.pointerId === this.drag.pointerId) {
      const hit = new THREE.Vector3();
      if (this.pointerRay(event.clientX, event.clientY).intersectPlane(this.drag.plane, hit)) {
        this.drag.offset.copy(hit).sub(this.drag.anchor);
        void this.client.requestEdit([
          translationTransform("all", [
            this.drag.offset.x,
            this.drag.offset.y,
            this.drag.offset.z,
          ]),
        ]);
      }
      return;
    }
    if (this.rectStart) {
      const x0 = Math.min(this.rectStart.x, event.clientX);
      const y0 = Math.min(this.rectStart.y, event.clientY);
      this.rectElement.style.display = "block";
      this.rectElement.style.left = `${x0}px`;
      this.rectElement.style.top = `${y0}px`;
      this.rectElement.style.width = `${Math.abs(event.clientX - this.rectStart.x)}px`;
      this.rectElement.style.height = `${Math.abs(event.clientY - this.rectStart.y)}px`;
      return;
    }
    if (this.rotating) {
      this.spherical.theta -= event.movementX * 0.005;
      this.spherical.phi = Math.min(
        Math.PI - 0.05,
        Math.max(0.05, this.spherical.phi - event.movementY * 0.005),
      );
    }
  }

  private onPointerUp(event: PointerEvent): void {
    if (this.drag && event.pointerId === this.drag.pointerId) {
      const { offset } = this.drag;
      this.drag = null;
      // final authoritative request for the release position
      void this.client
        .requestEdit([translationTransform("all", [offset.x, offset.y, offset.z])])
        .then(() => this.client.flushEdits());
      return;
    }
    if (this.rectStart) {
      const projected = this.projectVertices();
      if (projected) {
        const x0 = Math.min(this.rectStart.x, event.clientX);
        const x1 = Math.max(this.rectStart.x, event.clientX);
        const y0 = Math.min(this.rectStart.y, event.clientY);
        const y1 = Math.max(this.rectStart.y, event.clientY);
        const picked: number[] = [];
        for (let i = 0; i < projected.length / 2; i++) {
          const x = projected[2 * i];
          const y = projected[2 * i + 1];
          if (x >= x0 && x <= x1 && y >= y0 && y <= y1) picked.push(i);
        }
        this.client.addHandles(picked);
        this.refreshSelectionColors();
        void this.client.syncHandles().then(() => this.refreshSelectionColors());
      }
      this.rectStart = null;
      this.rectElement.style.display = "none";
      return;
    }
    this.rotating = false;
  }

  private onWheel(event: WheelEvent): void {
    event.preventDefault();
    this.spherical.radius *= Math.exp(event.deltaY * 0.001);
  }
}
