/**
 * Node bindings for the kscore estimators.
 *
 * Each function marshals in-memory arrays into the JSONL row format the
 * kscore CLI reads, invokes `python -m kscore <subcommand>` with
 * deterministic output (--no-timestamp), and lifts the result out of the
 * JSON report. The CLI serializes floats in shortest round-trip form and
 * JSON.parse reconstructs the identical doubles, so results are
 * bit-exact against the Python library; the fixture corpus under
 * fixtures/corpus.json pins that parity.
 *
 * No math happens on this side. Shape and kind violations surface as
 * KscoreError carrying the Python package's own message and the CLI
 * exit code (2 invalid input, 3 computation error, 4 usage).
 */

import { execFileSync } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** A point: numeric vector or token sequence. Any string entry makes the
 * whole point a token sequence; integer-valued tokens must be sent as
 * strings to avoid being read as a one-point-per-number vector. */
export type VectorPoint = number[];
export type TokenPoint = string[];
export type Point = VectorPoint | TokenPoint;

export type KernelKind =
  | "rbf"
  | "laplacian"
  | "polynomial"
  | "linear"
  | "cosine"
  | "delta"
  | "cs_subsequence";

/** Kernel parameters; names mirror the CLI flags (padToMax = --pad-to-max,
 * exactSum = --exact-sum). */
export interface KernelOptions {
  kernel: KernelKind;
  gamma?: number;
  degree?: number;
  offset?: number;
  scale?: number;
  t?: number;
  padToMax?: boolean;
  exactSum?: boolean;
}

export interface ScoreOptions extends KernelOptions {
  /** Keep the self-similarity diagonal in the norm term (plug-in score;
   * allows single-generation point predictions). */
  includeDiagonal?: boolean;
}

export interface CorrelationResult {
  value: number;
  clamped: number;
  flags: string[];
}

/** Per-group decomposition report, keys exactly as the CLI emits them. */
export interface DecomposeReport {
  n: number;
  m: number[];
  n_targets: number;
  noise: number | null;
  bias: number | null;
  bias_direct: number | null;
  variance: number;
  covariance: number | null;
  correlation: number | null;
  entropy: number;
  kernel_score: number;
  mmd2: number | null;
  residual: number | null;
  source: string;
  flags: string[];
  [extra: string]: unknown;
}

export interface RougeResult {
  value: number;
  binaryLoss: number;
}

export interface ScoredGroup {
  uncertainty: number;
  label: 0 | 1;
}

export interface AurocOptions {
  /** "uncertainty" (default): higher scores should mark errors;
   * "confidence": higher scores should mark correct outcomes. */
  orientation?: "uncertainty" | "confidence";
}

export interface AurocResult {
  value: number;
  nPos: number;
  nNeg: number;
}

export interface GainResult {
  gain: number;
  ensembleVariance: number;
}

/** Error from the Python side; message is the primary package's own. */
export class KscoreError extends Error {
  constructor(
    message: string,
    readonly exitCode: number,
  ) {
    super(message);
    this.name = "KscoreError";
  }
}

function pythonExecutable(): string {
  return process.env.KSCORE_PYTHON ?? "python3";
}

interface Row {
  group_id: string;
  cluster_id?: string;
  payload?: number[];
  tokens?: string[];
  role?: "generation" | "target";
  side?: "x" | "y";
  label?: number;
  uncertainty?: number;
}

function pointRow(point: Point, extra: Partial<Row> = {}): Row {
  const base: Row = { group_id: "g", ...extra };
  if (point.some((entry) => typeof entry === "string")) {
    base.tokens = point.map(String);
  } else {
    base.payload = point as number[];
  }
  return base;
}

function clusterRows(clusters: Point[][], side?: "x" | "y"): Row[] {
  const rows: Row[] = [];
  clusters.forEach((cluster, i) => {
    for (const point of cluster) {
      rows.push(pointRow(point, { cluster_id: `c${i}`, ...(side && { side }) }));
    }
  });
  return rows;
}

function kernelFlags(options: Partial<ScoreOptions>): string[] {
  const flags: string[] = [];
  if (options.kernel !== undefined) flags.push("--kernel", options.kernel);
  if (options.gamma !== undefined) flags.push("--gamma", String(options.gamma));
  if (options.degree !== undefined) flags.push("--degree", String(options.degree));
  if (options.offset !== undefined) flags.push("--offset", String(options.offset));
  if (options.scale !== undefined) flags.push("--scale", String(options.scale));
  if (options.t !== undefined) flags.push("--t", String(options.t));
  if (options.padToMax) flags.push("--pad-to-max");
  if (options.exactSum) flags.push("--exact-sum");
  if (options.includeDiagonal) flags.push("--include-diagonal");
  return flags;
}

interface ExecError {
  status: number | null;
  stderr: Buffer | string | null;
}

function stripPrefix(text: string): string {
  return text.replace(/^(usage error|input error|error):\s*/, "").trim();
}

function runReport(subcommand: string, flags: string[], rows: Row[] | null): Record<string, unknown> {
  const argv = ["-m", "kscore", subcommand, ...flags, "--no-timestamp"];
  let dir: string | null = null;
  try {
    if (rows !== null) {
      dir = mkdtempSync(join(tmpdir(), "kscore-"));
      const input = join(dir, "rows.jsonl");
      writeFileSync(input, rows.map((row) => JSON.stringify(row)).join("\n") + "\n");
      argv.push("--input", input);
    }
    let stdout: string;
    try {
      stdout = execFileSync(pythonExecutable(), argv, {
        encoding: "utf8",
        stdio: ["ignore", "pipe", "pipe"],
      });
    } catch (raw) {
      const err = raw as ExecError;
      const stderr = err.stderr == null ? "" : err.stderr.toString();
      throw new KscoreError(
        stripPrefix(stderr) || `kscore ${subcommand} failed`,
        err.status ?? -1,
      );
    }
    return JSON.parse(stdout) as Record<string, unknown>;
  } finally {
    if (dir) rmSync(dir, { recursive: true, force: true });
  }
}

function firstGroup(report: Record<string, unknown>): Record<string, unknown> {
  const groups = report.groups as Record<string, unknown>[];
  const group = groups[0];
  if (group === undefined) {
    throw new KscoreError("report contains no groups", -1);
  }
  return group;
}

function groupValue(report: Record<string, unknown>): number {
  return firstGroup(report).value as number;
}

/** Predictive kernel entropy of one generation set. */
export function kernelEntropy(generations: Point[], options: KernelOptions): number {
  const rows = generations.map((point) => pointRow(point));
  return groupValue(runReport("entropy", kernelFlags(options), rows));
}

/** Kernel score of the generations against the target points. */
export function kernelScore(
  generations: Point[],
  targets: Point[],
  options: ScoreOptions,
): number {
  const rows = [
    ...generations.map((point) => pointRow(point)),
    ...targets.map((point) => pointRow(point, { role: "target" })),
  ];
  return groupValue(runReport("score", kernelFlags(options), rows));
}

/** Unbiased squared maximum mean discrepancy between the two sets. */
export function mmd2(generations: Point[], targets: Point[], options: KernelOptions): number {
  const rows = [
    ...generations.map((point) => pointRow(point)),
    ...targets.map((point) => pointRow(point, { role: "target" })),
  ];
  return groupValue(runReport("mmd2", kernelFlags(options), rows));
}

/** Two-stage distributional variance over clusters of generations. */
export function distributionalVariance(clusters: Point[][], options: KernelOptions): number {
  return groupValue(runReport("variance", kernelFlags(options), clusterRows(clusters)));
}

/** Two-stage distributional covariance of positionally paired cluster sides. */
export function distributionalCovariance(
  x: Point[][],
  y: Point[][],
  options: KernelOptions,
): number {
  const rows = [...clusterRows(x, "x"), ...clusterRows(y, "y")];
  return groupValue(runReport("covariance", kernelFlags(options), rows));
}

/** Distributional correlation; returns the raw value, the clamped value,
 * and any range flags. */
export function distributionalCorrelation(
  x: Point[][],
  y: Point[][],
  options: KernelOptions,
): CorrelationResult {
  const rows = [...clusterRows(x, "x"), ...clusterRows(y, "y")];
  const group = firstGroup(runReport("correlation", kernelFlags(options), rows));
  return {
    value: group.value as number,
    clamped: group.clamped as number,
    flags: group.flags as string[],
  };
}

/** Noise / bias / variance split of the kernel score over clusters. */
export function decompose(
  clusters: Point[][],
  targets: Point[],
  options: KernelOptions,
): DecomposeReport {
  const rows = [
    ...clusterRows(clusters),
    ...targets.map((point) => pointRow(point, { role: "target" })),
  ];
  const group = firstGroup(runReport("decompose", kernelFlags(options), rows));
  const { group_id: _id, warnings: _warnings, ...report } = group;
  return report as unknown as DecomposeReport;
}

/** Token-overlap F-measure of a candidate against a reference, plus its
 * binarization at the threshold (strictly-greater comparison). */
export function rougeL(
  candidate: TokenPoint,
  reference: TokenPoint,
  options: { threshold?: number } = {},
): RougeResult {
  const flags = options.threshold !== undefined ? ["--threshold", String(options.threshold)] : [];
  const rows = [pointRow(candidate), pointRow(reference, { role: "target" })];
  const group = firstGroup(runReport("rouge", flags, rows));
  return {
    value: group.value as number,
    binaryLoss: group.binary_loss as number,
  };
}

/** AUROC of per-group uncertainty scores against binary correctness
 * labels (label = 1 means correct). */
export function auroc(pairs: ScoredGroup[], options: AurocOptions = {}): AurocResult {
  const flags =
    options.orientation !== undefined ? ["--orientation", options.orientation] : [];
  const rows: Row[] = pairs.map((pair, i) => ({
    group_id: `g${i}`,
    uncertainty: pair.uncertainty,
    label: pair.label,
  }));
  const report = runReport("auroc", flags, rows);
  return {
    value: report.value as number,
    nPos: report.n_pos as number,
    nNeg: report.n_neg as number,
  };
}

/** Ensemble variance identity: what averaging n members keeps and gains.
 * Parameter names mirror the CLI flags --var / --cov / --n. */
export function ensembleGain(params: { var: number; cov: number; n: number }): GainResult {
  const flags = [
    "--var", String(params.var),
    "--cov", String(params.cov),
    "--n", String(params.n),
  ];
  const report = runReport("gain", flags, null);
  return {
    gain: report.gain as number,
    ensembleVariance: report.ensemble_variance as number,
  };
}
