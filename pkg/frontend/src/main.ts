// DOM wiring. Everything with behavior worth testing lives in the
// modules this file glues together.

import './style.css';
import { Api, AtlasInfo, ClusterReport, Participant, Prediction, SliceProfiles } from './api';
import { Controller, PaneView, ViewSink } from './controller';
import { histogramBars, indexFromX, profileGeometry } from './plots';

const HOT = '#ff6540';
const COLD = '#4f8fef';
const BAR = '#4f8fef';
const MARKER = '#9aa7b8';

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function fmtProb(p: number): string {
  return `${(p * 100).toFixed(1)}%`;
}

function fmtRelevance(v: number): string {
  if (v === 0) return '0';
  return v.toExponential(2);
}

class DomView implements ViewSink {
  private paneCanvases = [0, 1, 2].map((a) => byId<HTMLCanvasElement>(`pane-${a}`));
  private profileCanvases = [0, 1, 2].map((a) => byId<HTMLCanvasElement>(`profile-${a}`));
  private histogramCanvas = byId<HTMLCanvasElement>('histogram');
  private banner = byId<HTMLDivElement>('error-banner');
  private status = byId<HTMLSpanElement>('status');
  private panesBox = byId<HTMLDivElement>('panes');
  controller: Controller | null = null;

  panes(panes: PaneView[]): void {
    for (const pane of panes) {
      const canvas = this.paneCanvases[pane.axis];
      canvas.width = pane.raster.width;
      canvas.height = pane.raster.height;
      const ctx = canvas.getContext('2d');
      if (!ctx) continue;
      const pixels = new Uint8ClampedArray(pane.raster.data);
      ctx.putImageData(new ImageData(pixels, pane.raster.width, pane.raster.height), 0, 0);
    }
    this.updateCrosshairBox();
  }

  participant(subject: Participant): void {
    const kv = byId<HTMLDivElement>('covariates');
    kv.innerHTML = '';
    const rows: Array<[string, string]> = [
      ['group', subject.group],
      ['age', subject.age.toFixed(1)],
      ['sex', subject.sex],
      ['TIV', `${Math.round(subject.tiv)} ml`],
      ['field strength', `${subject.field_strength.toFixed(1)} T`]
    ];
    for (const [k, v] of rows) {
      const key = document.createElement('span');
      key.textContent = k;
      const val = document.createElement('span');
      val.textContent = v;
      kv.append(key, val);
    }
  }

  prediction(p: Prediction): void {
    byId<HTMLSpanElement>('p-ad').textContent = fmtProb(p.p_ad);
    byId<HTMLSpanElement>('p-cn').textContent = fmtProb(p.p_cn);
    byId<HTMLDivElement>('prediction-fill').style.width = `${p.p_ad * 100}%`;
  }

  atlasLabel(name: string): void {
    byId<HTMLDivElement>('atlas-label').textContent = name;
  }

  clusters(report: ClusterReport): void {
    byId<HTMLSpanElement>('cluster-count').textContent = String(report.n_clusters);
    const total = report.clusters.reduce((acc, c) => acc + c.sum_relevance, 0);
    byId<HTMLSpanElement>('cluster-total').textContent = fmtRelevance(total);
    const tbody = byId<HTMLTableElement>('cluster-table').tBodies[0];
    tbody.innerHTML = '';
    const top = [...report.clusters].sort((a, b) => b.size - a.size).slice(0, 8);
    for (const cluster of top) {
      const tr = document.createElement('tr');
      const cells = [
        String(cluster.size),
        cluster.volume_ml.toFixed(2),
        fmtRelevance(cluster.sum_relevance),
        cluster.peak_coord.join(', ')
      ];
      for (const text of cells) {
        const td = document.createElement('td');
        td.textContent = text;
        tr.appendChild(td);
      }
      tr.addEventListener('click', () => {
        this.controller?.moveCrosshair([...cluster.peak_coord]);
      });
      tbody.appendChild(tr);
    }
    this.drawHistogram(report);
  }

  profiles(profiles: SliceProfiles, crosshair: [number, number, number]): void {
    for (const axis of [0, 1, 2] as const) {
      const profile = profiles[String(axis)];
      if (!profile) continue;
      this.drawProfile(this.profileCanvases[axis], profile.pos, profile.neg, crosshair[axis]);
    }
  }

  error(message: string | null): void {
    this.banner.textContent = message ?? '';
    this.banner.classList.toggle('visible', message !== null);
  }

  busy(loading: boolean): void {
    this.status.classList.toggle('busy', loading);
  }

  stale(outdated: boolean): void {
    this.panesBox.classList.toggle('stale', outdated);
  }

  private updateCrosshairBox(): void {
    const c = this.controller;
    if (!c || !c.session) return;
    byId<HTMLSpanElement>('crosshair-pos').textContent = c.state.crosshair.join(', ');
    const v = c.crosshairValue();
    byId<HTMLSpanElement>('crosshair-value').textContent = v === null ? '-' : fmtRelevance(v);
  }

  private drawProfile(canvas: HTMLCanvasElement, pos: number[], neg: number[], marker: number): void {
    const ctx = canvas.getContext('2d');
    if (!ctx) return;
    const { width, height } = canvas;
    ctx.clearRect(0, 0, width, height);
    const geo = profileGeometry(pos, neg, marker, width, height);
    ctx.strokeStyle = '#39424f';
    ctx.beginPath();
    ctx.moveTo(0, geo.baselineY);
    ctx.lineTo(width, geo.baselineY);
    ctx.stroke();
    ctx.strokeStyle = MARKER;
    ctx.beginPath();
    ctx.moveTo(geo.markerX, 0);
    ctx.lineTo(geo.markerX, height);
    ctx.stroke();
    const trace = (points: { x: number; y: number }[], color: string) => {
      if (points.length === 0) return;
      ctx.strokeStyle = color;
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      ctx.moveTo(points[0].x, points[0].y);
      for (const p of points.slice(1)) ctx.lineTo(p.x, p.y);
      ctx.stroke();
      ctx.lineWidth = 1;
    };
    trace(geo.pos, HOT);
    trace(geo.neg, COLD);
  }

  private drawHistogram(report: ClusterReport): void {
    const ctx = this.histogramCanvas.getContext('2d');
    if (!ctx) return;
    const { width, height } = this.histogramCanvas;
    ctx.clearRect(0, 0, width, height);
    ctx.fillStyle = BAR;
    for (const bar of histogramBars(report.histogram.counts, report.histogram.edges, width, height)) {
      ctx.fillRect(bar.x, bar.y, bar.w, bar.h);
    }
  }
}

function canvasCell(canvas: HTMLCanvasElement, event: MouseEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  const col = Math.floor(((event.clientX - rect.left) / rect.width) * canvas.width);
  const row = Math.floor(((event.clientY - rect.top) / rect.height) * canvas.height);
  return [row, col];
}

async function boot(): Promise<void> {
  const api = new Api();
  const view = new DomView();
  const controller = new Controller(api, view);
  view.controller = controller;

  const subjectSelect = byId<HTMLSelectElement>('subject-select');
  const modelSelect = byId<HTMLSelectElement>('model-select');
  const outlineSelect = byId<HTMLSelectElement>('outline-select');

  let participants: Participant[] = [];
  let models: string[] = [];
  let atlas: AtlasInfo | null = null;
  try {
    [participants, models, atlas] = await Promise.all([
      api.participants(),
      api.models(),
      api.atlas()
    ]);
  } catch (err) {
    view.error(err instanceof Error ? err.message : String(err));
    return;
  }

  for (const p of participants) {
    const option = document.createElement('option');
    option.value = p.id;
    option.textContent = `${p.id} (${p.group})`;
    subjectSelect.appendChild(option);
  }
  for (const m of models) {
    const option = document.createElement('option');
    option.value = m;
    option.textContent = m;
    modelSelect.appendChild(option);
  }
  for (const [rid, name] of Object.entries(atlas.regions)) {
    const option = document.createElement('option');
    option.value = rid;
    option.textContent = name;
    outlineSelect.appendChild(option);
  }

  const subjectById = new Map(participants.map((p) => [p.id, p]));
  const currentSubject = () => subjectById.get(subjectSelect.value);

  subjectSelect.addEventListener('change', () => {
    const subject = currentSubject();
    if (subject) void controller.selectSubject(subject);
  });
  modelSelect.addEventListener('change', () => {
    void controller.selectModel(modelSelect.value);
  });
  outlineSelect.addEventListener('change', () => {
    const value = outlineSelect.value;
    controller.setOutlineRegion(value === '' ? null : parseInt(value, 10));
  });

  const threshold = byId<HTMLInputElement>('threshold');
  threshold.addEventListener('input', () => {
    const v = parseInt(threshold.value, 10) / 100;
    byId<HTMLSpanElement>('threshold-value').textContent = v.toFixed(2);
    controller.setThreshold(v);
  });
  const minCluster = byId<HTMLInputElement>('min-cluster');
  minCluster.addEventListener('input', () => {
    byId<HTMLSpanElement>('min-cluster-value').textContent = minCluster.value;
    controller.setMinClusterSize(parseInt(minCluster.value, 10));
  });
  const transparency = byId<HTMLInputElement>('transparency');
  transparency.addEventListener('input', () => {
    const v = parseInt(transparency.value, 10) / 100;
    byId<HTMLSpanElement>('transparency-value').textContent = v.toFixed(2);
    controller.setTransparency(v);
  });

  for (const axis of [0, 1, 2] as const) {
    const canvas = byId<HTMLCanvasElement>(`pane-${axis}`);
    canvas.addEventListener('click', (event) => {
      const [row, col] = canvasCell(canvas, event);
      controller.clickPane(axis, row, col);
    });
    const profile = byId<HTMLCanvasElement>(`profile-${axis}`);
    profile.addEventListener('click', (event) => {
      if (!controller.session) return;
      const rect = profile.getBoundingClientRect();
      const x = ((event.clientX - rect.left) / rect.width) * profile.width;
      const next: [number, number, number] = [...controller.state.crosshair];
      next[axis] = indexFromX(x, controller.session.dims[axis], profile.width);
      controller.moveCrosshair(next);
    });
  }

  if (participants.length > 0 && models.length > 0) {
    subjectSelect.value = participants[0].id;
    modelSelect.value = models[0];
    controller.state.modelId = models[0];
    await controller.selectSubject(participants[0]);
  }
}

void boot();
