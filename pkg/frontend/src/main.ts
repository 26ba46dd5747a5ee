/** Browser entry point: renderer, camera controls, and DOM wiring around
 * StudioApp. Everything testable lives in app.ts and below. */

import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";

import { ApiClient } from "./api.js";
import { StudioApp } from "./app.js";
import { StrokeTool } from "./stroke.js";

const baseUrl = (window as unknown as { CDFKIT_API?: string }).CDFKIT_API ?? "";
const app = new StudioApp(new ApiClient(baseUrl));

const canvas = document.getElementById("viewport") as HTMLCanvasElement;
const renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
const camera = new THREE.PerspectiveCamera(45, 1, 0.01, 100);
camera.position.set(0, -2.5, 1.8);
camera.up.set(0, 0, 1);
camera.lookAt(0, 0, 0);
const controls = new OrbitControls(camera, canvas);
app.scene.add(new THREE.AmbientLight(0xffffff, 0.7));
const sun = new THREE.DirectionalLight(0xffffff, 0.8);
sun.position.set(2, -3, 4);
app.scene.add(sun);
app.scene.background = new THREE.Color(0xf4f4f4);

let strokeTool: StrokeTool | null = null;
let drawing = false;

function resize(): void {
  const w = canvas.clientWidth || canvas.parentElement?.clientWidth || 800;
  const h = canvas.clientHeight || 600;
  renderer.setSize(w, h, false);
  camera.aspect = w / h;
  camera.updateProjectionMatrix();
}
window.addEventListener("resize", resize);

function ndc(ev: PointerEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  return [
    ((ev.clientX - rect.left) / rect.width) * 2 - 1,
    -(((ev.clientY - rect.top) / rect.height) * 2 - 1),
  ];
}

canvas.addEventListener("pointerdown", (ev) => {
  if (!ev.shiftKey || !app.surface) return; // shift-drag draws, drag orbits
  controls.enabled = false;
  strokeTool = new StrokeTool(app.surface, camera);
  strokeTool.begin();
  const [x, y] = ndc(ev);
  strokeTool.addPointerSample(x, y);
  drawing = true;
});

canvas.addEventListener("pointermove", (ev) => {
  if (!drawing || !strokeTool) return;
  const [x, y] = ndc(ev);
  strokeTool.addPointerSample(x, y);
});

canvas.addEventListener("pointerup", () => {
  if (!drawing || !strokeTool) return;
  drawing = false;
  controls.enabled = true;
  void app.commitStroke(strokeTool.end()).then(refreshReadout);
  strokeTool = null;
});

function byId(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function refreshReadout(): void {
  byId("status").textContent = app.readout.status;
  byId("delta").textContent =
    app.readout.delta === null ? "-" : `${app.readout.delta.toFixed(2)} deg`;
  byId("energy").textContent =
    app.readout.energyTotal === null ? "-" : app.readout.energyTotal.toExponential(3);
  byId("singularities").textContent =
    app.readout.singularities === null ? "-" : String(app.readout.singularities);
  byId("revision").textContent = String(app.readout.revision);
}

byId("mesh-file").addEventListener("change", async (ev) => {
  const input = ev.target as HTMLInputElement;
  const file = input.files?.[0];
  if (!file) return;
  await app.uploadMesh(await file.text());
  resize();
  refreshReadout();
});

byId("solve").addEventListener("click", () => void app.solve().then(refreshReadout));
byId("streamlines").addEventListener(
  "click",
  () => void app.showStreamlines().then(refreshReadout),
);
byId("quads").addEventListener("click", () => {
  const spacing = Number((byId("spacing") as HTMLInputElement).value) || 0.1;
  void app.extractQuads(spacing).then(refreshReadout);
});
byId("planarize").addEventListener(
  "click",
  () => void app.planarizeQuads().then(refreshReadout),
);
(byId("auto-solve") as HTMLInputElement).addEventListener("change", (ev) => {
  app.autoSolve = (ev.target as HTMLInputElement).checked;
});

function animate(): void {
  requestAnimationFrame(animate);
  controls.update();
  renderer.render(app.scene, camera);
}
resize();
animate();
