/** Documents served by /api/v1; every displayed number comes from these verbatim. */

export type Group = 'suppressed' | 'shared' | 'emphasized';
export type Provenance = 'both' | 'benign-only' | 'attacked-only';
export type Column = 'L' | 'M' | 'R';

export interface NeuronRef {
  layer: string;
  channel: number;
}

export interface TrajectoryPoint {
  strength: number;
  activation: number;
}

export interface NodeLayout {
  column: Column;
  orderInColumn: number;
  colorScalar: number;
}

export interface GraphNode {
  layer: string;
  channel: number;
  group: Group;
  benignScore: number;
  attackedScore: number;
  flipStrength: number | null;
  deviation: number;
  rankInGroup: number;
  trajectory: TrajectoryPoint[];
  layout: NodeLayout;
}

export interface GraphEdge {
  sourceLayer: string;
  sourceChannel: number;
  targetLayer: string;
  targetChannel: number;
  provenance: Provenance;
  weightBenign: number | null;
  weightAttacked: number | null;
  weight: number;
}

export interface CurvePoint {
  strength: number;
  successRate: number;
}

export interface ComparisonDoc {
  schema: string;
  cacheKey: string;
  modelDigest: string;
  benignClass: number;
  targetClass: number;
  method: string;
  reducer: string;
  k: number;
  m: number;
  strengths: number[];
  evalStrength: number;
  pixelRange: [number, number];
  layers: string[];
  classNames: string[];
  benignAccuracy: number;
  inputSetRef: string;
  sweepKey: string;
  attackCurve: CurvePoint[];
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface PatchDoc {
  imageId: number;
  box: [number, number, number, number];
  activation: number;
  uri: string;
}

export interface NeuronDetail extends GraphNode {
  incomingEdges: GraphEdge[];
  patches: PatchDoc[];
  featureVis: {
    uri: string;
    objective: number;
    steps: number;
    seed: number;
  };
}

export interface EditStrengthRow {
  strength: number;
  successRateBefore: number;
  successRateAfter: number;
}

export interface GraphDiffEntry {
  layer: string;
  channel: number;
  groupBefore: Group | null;
  groupAfter: Group | null;
}

export interface EditReport {
  schema: string;
  cacheKey: string;
  editKey: string;
  neurons: NeuronRef[];
  benignAccuracyBefore: number;
  benignAccuracyAfter: number;
  perStrength: EditStrengthRow[];
  graphDiff: GraphDiffEntry[];
}

export interface JobStatus {
  jobId: string;
  state: 'queued' | 'running' | 'done' | 'failed';
  progress: number;
  resultKey?: string;
  error?: string;
}

export interface ClassInfo {
  index: number;
  name: string;
}

export function neuronKey(n: NeuronRef): string {
  return `${n.layer}/${n.channel}`;
}

export function sameNeuron(a: NeuronRef | null, b: NeuronRef | null): boolean {
  return !!a && !!b && a.layer === b.layer && a.channel === b.channel;
}
