// Session orchestration: what happens when the user picks a subject,
// drags a slider, or moves the crosshair. All rendering goes through a
// ViewSink so the logic runs identically under tests and in the DOM.

import {
  ApiSurface,
  ClusterReport,
  Participant,
  Prediction,
  RelevanceSummary,
  SliceProfiles
} from './api';
import { Grid, extractSlice, makeGrid, maxAbs, minMax, valueAt } from './grid';
import {
  Raster,
  outlinePixels,
  paintBackground,
  paintCrosshair,
  paintOutline,
  paintOverlay
} from './render';
import {
  MIN_CLUSTER_RANGE,
  THRESHOLD_RANGE,
  TRANSPARENCY_RANGE,
  ViewState,
  centerOf,
  clamp,
  clampCrosshair,
  initialState
} from './state';
import { Supersession } from './supersede';

const OUTLINE_RGB: [number, number, number] = [80, 220, 120];
const CROSSHAIR_RGB: [number, number, number] = [120, 170, 255];

export interface Session {
  subject: Participant;
  modelId: string;
  dims: [number, number, number];
  voxelSize: number;
  background: Grid;
  relevance: Grid;
  /** Grayscale window, fixed per subject from the volume-wide range. */
  window: [number, number];
  /** Volume-wide max |relevance|, the client-side normalization anchor. */
  maxAbs: number;
  summary: RelevanceSummary;
  prediction: Prediction;
}

export interface PaneView {
  axis: 0 | 1 | 2;
  sliceIndex: number;
  raster: Raster;
  crossRow: number;
  crossCol: number;
}

export interface ViewSink {
  panes(panes: PaneView[]): void;
  participant(subject: Participant): void;
  prediction(prediction: Prediction): void;
  atlasLabel(name: string): void;
  clusters(report: ClusterReport): void;
  profiles(profiles: SliceProfiles, crosshair: [number, number, number]): void;
  error(message: string | null): void;
  busy(loading: boolean): void;
  stale(outdated: boolean): void;
}

/** In-plane crosshair position for a pane: (row, col) in slice space. */
export function paneCross(
  axis: 0 | 1 | 2,
  crosshair: [number, number, number]
): [number, number] {
  const [x, y, z] = crosshair;
  if (axis === 0) return [y, z];
  if (axis === 1) return [x, z];
  return [x, y];
}

/** Inverse of paneCross: a click at (row, col) in the pane for `axis`
    updates the two in-plane coordinates. */
export function crossFromClick(
  axis: 0 | 1 | 2,
  crosshair: [number, number, number],
  row: number,
  col: number
): [number, number, number] {
  const [x, y, z] = crosshair;
  if (axis === 0) return [x, row, col];
  if (axis === 1) return [row, y, col];
  return [row, col, z];
}

function describe(error: unknown): string {
  if (error instanceof Error) return error.message;
  return String(error);
}

export class Controller {
  state: ViewState = initialState();
  session: Session | null = null;

  private api: ApiSurface;
  private view: ViewSink;
  private gate = new Supersession();
  private subjectRow: Participant | null = null;
  private maskCache = new Map<number, Uint8Array>();
  private outlineMask: Uint8Array | null = null;
  private lastClusterReport: ClusterReport | null = null;

  constructor(api: ApiSurface, view: ViewSink) {
    this.api = api;
    this.view = view;
  }

  async selectSubject(subject: Participant): Promise<void> {
    this.subjectRow = subject;
    this.state.subjectId = subject.id;
    await this.reload();
  }

  async selectModel(modelId: string): Promise<void> {
    this.state.modelId = modelId;
    await this.reload();
  }

  /** Full refresh: compute relevance first, then pull everything the
      boxes and panes need. Any in-flight responses for the previous
      selection are superseded the moment this starts. Loads only once
      both a subject and a model are picked. */
  private async reload(): Promise<void> {
    const subject = this.subjectRow;
    const { subjectId, modelId } = this.state;
    if (!subject || !subjectId || !modelId) return;
    const token = this.gate.begin('session');
    this.gate.cancel('clusters');
    this.gate.cancel('lookup');
    this.gate.cancel('mask');
    this.view.busy(true);
    this.view.stale(true);
    try {
      const summary = await this.api.computeRelevance(subjectId, modelId);
      const dims = summary.dims as [number, number, number];
      const [bg, rel, prediction] = await Promise.all([
        this.api.volume(subjectId, 'background', dims),
        this.api.volume(subjectId, 'relevance', dims, modelId),
        this.api.prediction(subjectId, modelId)
      ]);
      if (!this.gate.current('session', token)) return;
      this.session = {
        subject,
        modelId,
        dims,
        voxelSize: bg.voxelSize,
        background: makeGrid(dims, bg.data),
        relevance: makeGrid(dims, rel.data),
        window: minMax(bg.data),
        maxAbs: maxAbs(rel.data),
        summary,
        prediction
      };
      this.maskCache.clear();
      this.outlineMask = null;
      this.lastClusterReport = null;
      this.state.crosshair = centerOf(dims);
      this.view.error(null);
      this.view.stale(false);
      this.view.participant(subject);
      this.view.prediction(prediction);
      this.view.profiles(summary.slice_profiles, this.state.crosshair);
      this.repaint();
      void this.refreshClusters();
      void this.refreshLookup();
      void this.refreshOutline();
    } catch (error) {
      if (this.gate.current('session', token)) {
        this.view.error(describe(error));
      }
    } finally {
      if (this.gate.current('session', token)) this.view.busy(false);
    }
  }

  setThreshold(value: number): void {
    this.state.threshold = clamp(value, THRESHOLD_RANGE);
    if (!this.session) return;
    this.repaint();
    void this.refreshClusters();
  }

  setMinClusterSize(value: number): void {
    this.state.minClusterSize = Math.round(clamp(value, MIN_CLUSTER_RANGE));
    if (!this.session) return;
    void this.refreshClusters();
  }

  setTransparency(value: number): void {
    this.state.transparency = clamp(value, TRANSPARENCY_RANGE);
    if (this.session) this.repaint();
  }

  moveCrosshair(point: [number, number, number]): void {
    if (!this.session) return;
    this.state.crosshair = clampCrosshair(point, this.session.dims);
    this.repaint();
    this.view.profiles(this.currentProfiles(), this.state.crosshair);
    void this.refreshLookup();
  }

  clickPane(axis: 0 | 1 | 2, row: number, col: number): void {
    this.moveCrosshair(crossFromClick(axis, this.state.crosshair, row, col));
  }

  setOutlineRegion(regionId: number | null): void {
    this.state.outlineRegion = regionId;
    void this.refreshOutline();
  }

  /** Paint all three panes from the in-memory volumes. Pure local work:
      crosshair moves and transparency changes never hit the network. */
  repaint(): void {
    const session = this.session;
    if (!session) return;
    const { crosshair, threshold, transparency } = this.state;
    const panes: PaneView[] = ([0, 1, 2] as const).map((axis) => {
      const sliceIndex = crosshair[axis];
      const bg = extractSlice(session.background, axis, sliceIndex);
      const raster = paintBackground(bg, session.window[0], session.window[1]);
      const rel = extractSlice(session.relevance, axis, sliceIndex);
      paintOverlay(raster, rel, { maxAbs: session.maxAbs, threshold, transparency });
      if (this.outlineMask) {
        const mask = extractSlice(
          makeGrid(session.dims, this.outlineMask),
          axis,
          sliceIndex
        );
        paintOutline(raster, outlinePixels(mask.values, mask.rows, mask.cols), OUTLINE_RGB);
      }
      const [crossRow, crossCol] = paneCross(axis, crosshair);
      paintCrosshair(raster, crossRow, crossCol, CROSSHAIR_RGB);
      return { axis, sliceIndex, raster, crossRow, crossCol };
    });
    this.view.panes(panes);
  }

  /** Relevance value under the crosshair, same in all three panes. */
  crosshairValue(): number | null {
    if (!this.session) return null;
    const [x, y, z] = this.state.crosshair;
    return valueAt(this.session.relevance, x, y, z);
  }

  private currentProfiles(): SliceProfiles {
    return this.lastClusterReport?.slice_profiles ?? this.session!.summary.slice_profiles;
  }

  private async refreshClusters(): Promise<void> {
    const session = this.session;
    if (!session) return;
    const token = this.gate.begin('clusters');
    try {
      const absolute = this.state.threshold * session.maxAbs;
      const report = await this.api.clusters(
        session.subject.id,
        session.modelId,
        absolute,
        this.state.minClusterSize,
        6
      );
      if (!this.gate.current('clusters', token)) return;
      this.lastClusterReport = report;
      this.view.clusters(report);
      this.view.profiles(report.slice_profiles, this.state.crosshair);
    } catch (error) {
      if (this.gate.current('clusters', token)) this.view.error(describe(error));
    }
  }

  private async refreshLookup(): Promise<void> {
    if (!this.session) return;
    const [x, y, z] = this.state.crosshair;
    const token = this.gate.begin('lookup');
    try {
      const region = await this.api.atlasLookup(x, y, z);
      if (this.gate.current('lookup', token)) this.view.atlasLabel(region);
    } catch (error) {
      if (this.gate.current('lookup', token)) this.view.error(describe(error));
    }
  }

  private async refreshOutline(): Promise<void> {
    const session = this.session;
    if (!session) return;
    const regionId = this.state.outlineRegion;
    if (regionId === null) {
      this.outlineMask = null;
      this.repaint();
      return;
    }
    const cached = this.maskCache.get(regionId);
    if (cached) {
      this.outlineMask = cached;
      this.repaint();
      return;
    }
    const token = this.gate.begin('mask');
    try {
      const mask = await this.api.maskVolume(regionId, session.dims);
      if (!this.gate.current('mask', token)) return;
      this.maskCache.set(regionId, mask);
      this.outlineMask = mask;
      this.repaint();
    } catch (error) {
      if (this.gate.current('mask', token)) this.view.error(describe(error));
    }
  }
}
